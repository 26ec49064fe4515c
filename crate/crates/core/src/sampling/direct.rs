use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{DensityKind, DensitySpec, SampleBatch, SamplerKind};
use crate::error::{HkError, Result};
use crate::phasespace::{DoublePhasePoint, Observable, PhaseSpacePoint};

/// Draws i.i.d. points from the Gaussian densities. Sample `i` of seed `s` always
/// comes from ChaCha8 stream `i` of `s`, whatever the thread layout.
#[derive(Clone, Debug)]
pub struct DirectSampler {
    spec: DensitySpec,
    /// Cholesky factors with L_q L_qᵀ = εΓ⁻¹ and L_p L_pᵀ = εΓ.
    lq: DMatrix<f64>,
    lp: DMatrix<f64>,
}

impl DirectSampler {
    pub fn new(spec: &DensitySpec) -> Result<Self> {
        if let DensityKind::Optimal(obs) = spec.kind {
            if obs != Observable::Identity {
                return Err(HkError::Unsupported(format!(
                    "no direct sampler for the optimal density of {obs}; use HMC"
                )));
            }
        }
        let eps = spec.psi0.epsilon();
        let width = &spec.psi0.width;
        let chol = |m: &DMatrix<f64>| {
            (m * eps)
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| HkError::InvalidArgument("covariance is not positive-definite".into()))
        };
        Ok(Self {
            spec: spec.clone(),
            lq: chol(width.inverse())?,
            lp: chol(width.matrix())?,
        })
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    fn gaussian_offset(&self, u: &[f64], scale: f64) -> PhaseSpacePoint {
        let d = self.spec.dim();
        let z0 = &self.spec.psi0.center;
        let mut q = z0.q.clone();
        let mut p = z0.p.clone();
        for j in 0..d {
            for k in 0..=j {
                q[j] += scale * self.lq[(j, k)] * u[k];
                p[j] += scale * self.lp[(j, k)] * u[d + k];
            }
        }
        PhaseSpacePoint { q, p }
    }

    pub fn draw(&self, seed: u64, index: u64) -> DoublePhasePoint {
        let d = self.spec.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let u: Vec<f64> = (0..2 * d).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..2 * d).map(|_| rng.sample(StandardNormal)).collect();
        match self.spec.kind {
            DensityKind::HusimiDouble => DoublePhasePoint {
                y: self.gaussian_offset(&u, 1.0),
                z: self.gaussian_offset(&v, 1.0),
            },
            DensityKind::SqrtHusimiDouble => {
                let s = std::f64::consts::SQRT_2;
                DoublePhasePoint {
                    y: self.gaussian_offset(&u, s),
                    z: self.gaussian_offset(&v, s),
                }
            }
            DensityKind::Optimal(_) => {
                // covariance (2ε/3)·[[2, 1], [1, 2]] ⊗ Σ₀⁻¹
                let r3 = 3.0f64.sqrt();
                let zu: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a / r3 + b).collect();
                DoublePhasePoint {
                    y: self.gaussian_offset(&u, 2.0 / r3),
                    z: self.gaussian_offset(&zu, 1.0),
                }
            }
        }
    }
}

pub fn direct_sample(spec: &DensitySpec, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(HkError::InvalidArgument("sample count must be >= 1".into()));
    }
    let sampler = DirectSampler::new(spec)?;
    let points: Vec<DoublePhasePoint> = (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.draw(seed, i))
        .collect();
    let log_density = points.iter().map(|w| spec.log_density_unnormalized(w)).collect();
    Ok(SampleBatch {
        points,
        density: spec.clone(),
        log_density,
        acceptance_rate: None,
        seed,
        sampler: SamplerKind::Direct,
    })
}
