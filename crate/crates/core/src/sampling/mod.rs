//! Sampling densities on double phase space and their samplers.
//!
//! With Q(v) = vᵀΣ₀v:
//! - Husimi: ρ_H(w) = (2πε)^{−2D} exp(−[Q(y−z₀) + Q(z−z₀)]/(2ε))
//! - sqrt-Husimi: (4πε)^{−2D} exp(−[Q(y−z₀) + Q(z−z₀)]/(4ε))
//! - optimal for Â: proportional to |f₀(w)·⟨g_y, Â g_z⟩|
//!
//! The unnormalized optimal density is exactly |f₀·O₀[Â]|, so dividing by it gives
//! weights whose mean estimates 1/κ_opt.

mod direct;
mod hmc;

use std::f64::consts::PI;

use crate::error::{HkError, Result};
use crate::matel::{log_overlap_raw, polynomial_unchecked};
use crate::phasespace::{DoublePhasePoint, GaussianWavepacket, Observable, PhaseSpacePoint};

pub use direct::{direct_sample, DirectSampler};
pub use hmc::{effective_sample_size, hmc_potential, hmc_potential_gradient, hmc_sample, HmcParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityKind {
    HusimiDouble,
    SqrtHusimiDouble,
    Optimal(Observable),
}

impl std::fmt::Display for DensityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DensityKind::HusimiDouble => write!(f, "husimi"),
            DensityKind::SqrtHusimiDouble => write!(f, "sqrt-husimi"),
            DensityKind::Optimal(obs) => write!(f, "optimal[{obs}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensitySpec {
    pub kind: DensityKind,
    pub psi0: GaussianWavepacket,
}

impl DensitySpec {
    pub fn new(kind: DensityKind, psi0: GaussianWavepacket) -> Result<Self> {
        if let DensityKind::Optimal(obs) = kind {
            obs.validate(psi0.dim())?;
            if obs != Observable::Identity && !psi0.width.is_identity() {
                return Err(HkError::Unsupported(format!(
                    "optimal density for {obs} needs the identity width matrix"
                )));
            }
            if let Observable::PotentialHenonHeiles { .. } | Observable::TotalEnergy(_) = obs {
                if !psi0.width.is_diagonal() {
                    return Err(HkError::Unsupported(
                        "Henon-Heiles optimal density needs a diagonal width matrix".into(),
                    ));
                }
            }
        }
        Ok(Self { kind, psi0 })
    }

    pub fn dim(&self) -> usize {
        self.psi0.dim()
    }

    /// Normalizing constant κ with ρ = ρ_unnormalized/κ, when known in closed form.
    pub fn log_normalizer(&self) -> Option<f64> {
        let d = self.dim() as f64;
        match self.kind {
            DensityKind::HusimiDouble | DensityKind::SqrtHusimiDouble => Some(0.0),
            DensityKind::Optimal(Observable::Identity) => Some(d * (4.0f64 / 3.0).ln()),
            DensityKind::Optimal(_) => None,
        }
    }

    /// ln of the unnormalized density; −∞ where it vanishes.
    pub fn log_density_unnormalized(&self, w: &DoublePhasePoint) -> f64 {
        let d = self.dim() as f64;
        let eps = self.psi0.epsilon();
        let (qy, qz) = self.center_quads(w);
        match self.kind {
            DensityKind::HusimiDouble => -2.0 * d * (2.0 * PI * eps).ln() - (qy + qz) / (2.0 * eps),
            DensityKind::SqrtHusimiDouble => {
                -2.0 * d * (4.0 * PI * eps).ln() - (qy + qz) / (4.0 * eps)
            }
            DensityKind::Optimal(obs) => {
                let lo = log_overlap_raw(&w.y, &w.z, &self.psi0.width, eps).re;
                let base = -2.0 * d * (2.0 * PI * eps).ln() - (qy + qz) / (4.0 * eps) + lo;
                match obs {
                    Observable::Identity => base,
                    _ => match polynomial_unchecked(&obs, &w.y, &w.z, &self.psi0.width, eps) {
                        Ok(p) if p.norm() > 0.0 => base + p.norm().ln(),
                        _ => f64::NEG_INFINITY,
                    },
                }
            }
        }
    }

    /// ln ρ(w) for a normalized density, if the normalizer is known.
    pub fn log_density(&self, w: &DoublePhasePoint) -> Option<f64> {
        self.log_normalizer().map(|k| self.log_density_unnormalized(w) - k)
    }

    fn center_quads(&self, w: &DoublePhasePoint) -> (f64, f64) {
        let z0 = &self.psi0.center;
        let q = |x: &PhaseSpacePoint| {
            let dq: Vec<f64> = x.q.iter().zip(&z0.q).map(|(a, b)| a - b).collect();
            let dp: Vec<f64> = x.p.iter().zip(&z0.p).map(|(a, b)| a - b).collect();
            self.psi0.width.quad(&dq) + self.psi0.width.inv_quad(&dp)
        };
        (q(&w.y), q(&w.z))
    }
}

pub fn density_eval_unnormalized(spec: &DensitySpec, w: &DoublePhasePoint) -> f64 {
    spec.log_density_unnormalized(w).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Direct,
    Hmc,
}

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub points: Vec<DoublePhasePoint>,
    pub density: DensitySpec,
    /// ln of the unnormalized sampling density at each point.
    pub log_density: Vec<f64>,
    pub acceptance_rate: Option<f64>,
    pub seed: u64,
    pub sampler: SamplerKind,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
