//! Crude and weighted importance sampling estimators of ⟨Â⟩_t.
//!
//! Both estimators share one accumulator of weighted moments. For crude estimation
//! every weight is exactly 1, so the weighted formulas collapse bit-for-bit onto the
//! crude ones.

pub mod oracles;
mod summation;

use num_complex::Complex64;

pub use summation::PairwiseSum;

use crate::error::{check_dim, HkError, Result};
use crate::matel::log_overlap_raw;
use crate::phasespace::{DoublePhasePoint, GaussianWavepacket};
use crate::sampling::{DensityKind, DensitySpec, SampleBatch};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrandFactors {
    pub f0: Complex64,
    pub phi: Complex64,
    pub o: Complex64,
}

impl IntegrandFactors {
    pub fn product(&self) -> Complex64 {
        self.f0 * self.phi * self.o
    }
}

/// ln f₀(w) = −2D ln(2πε) + ln⟨ψ₀, g_y⟩ + ln⟨g_z, ψ₀⟩
pub fn log_f0(w: &DoublePhasePoint, psi0: &GaussianWavepacket) -> Complex64 {
    let eps = psi0.epsilon();
    let d = psi0.dim() as f64;
    let z0 = &psi0.center;
    let norm = -2.0 * d * (2.0 * std::f64::consts::PI * eps).ln();
    norm + log_overlap_raw(z0, &w.y, &psi0.width, eps) + log_overlap_raw(&w.z, z0, &psi0.width, eps)
}

/// f₀(w) = (2πε)^{−2D} ⟨ψ₀, g_y⟩⟨g_z, ψ₀⟩
pub fn compute_f0(w: &DoublePhasePoint, psi0: &GaussianWavepacket) -> Result<Complex64> {
    check_dim(psi0.dim(), w.y.dim())?;
    check_dim(psi0.dim(), w.z.dim())?;
    Ok(log_f0(w, psi0).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimatorKind {
    Crude(DensityKind),
    Wis {
        numerator: DensityKind,
        sampling: DensityKind,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorResult {
    pub estimate: Complex64,
    /// Per-sample variance: unbiased variance of the summand (crude) or the
    /// delta-method Var[gW − ÂW] with W normalized to unit mean (WIS).
    pub variance: f64,
    pub n: usize,
    pub kind: EstimatorKind,
}

impl EstimatorResult {
    pub fn std_err(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Running sums of g·W, W, |g·W|², W², g·W² over samples.
#[derive(Clone, Debug, Default)]
pub struct SampleMoments {
    gw: PairwiseSum<Complex64>,
    w: PairwiseSum<f64>,
    gw_sq: PairwiseSum<f64>,
    w_sq: PairwiseSum<f64>,
    gw_w: PairwiseSum<Complex64>,
}

impl SampleMoments {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a sample with integrand ratio `g` and importance weight `w` (1 for crude).
    pub fn push(&mut self, g: Complex64, w: f64) {
        let gw = g * w;
        self.gw.push(gw);
        self.w.push(w);
        self.gw_sq.push(gw.norm_sqr());
        self.w_sq.push(w * w);
        self.gw_w.push(gw * w);
    }

    pub fn merge(&mut self, other: &Self) {
        self.gw.merge(&other.gw);
        self.w.merge(&other.w);
        self.gw_sq.merge(&other.gw_sq);
        self.w_sq.merge(&other.w_sq);
        self.gw_w.merge(&other.gw_w);
    }

    pub fn len(&self) -> usize {
        self.w.count() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn estimate(&self) -> Result<Complex64> {
        if self.is_empty() {
            return Err(HkError::InvalidArgument("no samples".into()));
        }
        let sw = self.w.total();
        if sw == 0.0 || !sw.is_finite() {
            return Err(HkError::DegenerateWeights);
        }
        Ok(self.gw.total() / sw)
    }

    fn mean_weight(&self) -> f64 {
        self.w.total() / self.len() as f64
    }

    /// (1/(N−1)) Σ|g_jW_j − ÂW_j|² / W̄²
    pub fn variance(&self) -> Result<f64> {
        let a = self.estimate()?;
        let n = self.len();
        if n < 2 {
            return Ok(f64::NAN);
        }
        let wbar = self.mean_weight();
        let s = self.gw_sq.total() - 2.0 * (a.conj() * self.gw_w.total()).re
            + a.norm_sqr() * self.w_sq.total();
        Ok((s / ((n - 1) as f64 * wbar * wbar)).max(0.0))
    }

    /// mean|gW|²/W̄² − |Â|²: the crude-estimator variance V_t for the sampling density.
    /// With unit weights this is the sqrt-Husimi / optimal companion form; with
    /// W = ρ_H/ρ_opt,unnormalized it is the self-normalized form for unknown κ_opt.
    pub fn companion(&self) -> Result<f64> {
        let a = self.estimate()?;
        let wbar = self.mean_weight();
        Ok(self.gw_sq.total() / self.len() as f64 / (wbar * wbar) - a.norm_sqr())
    }

    pub fn result(&self, kind: EstimatorKind) -> Result<EstimatorResult> {
        Ok(EstimatorResult {
            estimate: self.estimate()?,
            variance: self.variance()?,
            n: self.len(),
            kind,
        })
    }
}

fn check_batch(batch: &SampleBatch, factors: &[IntegrandFactors]) -> Result<()> {
    if batch.is_empty() {
        return Err(HkError::InvalidArgument("empty sample batch".into()));
    }
    check_dim(batch.len(), factors.len())
}

fn ratio(f: &IntegrandFactors, log_rho: f64) -> Result<Complex64> {
    let g = f.product() * (-log_rho).exp();
    if !(g.re.is_finite() && g.im.is_finite()) {
        return Err(HkError::InvalidArgument("non-finite integrand".into()));
    }
    Ok(g)
}

fn crude_moments(batch: &SampleBatch, factors: &[IntegrandFactors]) -> Result<SampleMoments> {
    check_batch(batch, factors)?;
    let log_kappa = batch.density.log_normalizer().ok_or_else(|| {
        HkError::Unsupported(format!(
            "crude estimation needs a normalized density; {} has unknown normalizer",
            batch.density.kind
        ))
    })?;
    let mut m = SampleMoments::new();
    for (f, lr) in factors.iter().zip(&batch.log_density) {
        m.push(ratio(f, lr - log_kappa)?, 1.0);
    }
    Ok(m)
}

fn wis_moments(
    batch: &SampleBatch,
    factors: &[IntegrandFactors],
    numerator: &DensitySpec,
) -> Result<SampleMoments> {
    check_batch(batch, factors)?;
    let mut m = SampleMoments::new();
    for ((f, w), lr2) in factors.iter().zip(&batch.points).zip(&batch.log_density) {
        let lr1 = numerator.log_density(w).ok_or_else(|| {
            HkError::Unsupported("WIS numerator density must be normalized".into())
        })?;
        let weight = (lr1 - lr2).exp();
        if !weight.is_finite() {
            return Err(HkError::DegenerateWeights);
        }
        m.push(ratio(f, lr1)?, weight);
    }
    Ok(m)
}

/// A_N = (1/N) Σ f₀Φ_tO_t/ρ over a batch from a normalized density.
pub fn crude_estimate(batch: &SampleBatch, factors: &[IntegrandFactors]) -> Result<EstimatorResult> {
    crude_moments(batch, factors)?.result(EstimatorKind::Crude(batch.density.kind))
}

/// A_N^W = Σ g_tW / Σ W with g_t = f₀Φ_tO_t/ρ₁ and W = ρ₁/ρ₂, ρ₂ the batch density
/// (known up to a constant).
pub fn wis_estimate(
    batch: &SampleBatch,
    factors: &[IntegrandFactors],
    numerator: &DensitySpec,
) -> Result<EstimatorResult> {
    wis_moments(batch, factors, numerator)?.result(EstimatorKind::Wis {
        numerator: numerator.kind,
        sampling: batch.density.kind,
    })
}

/// Same-sample estimate of V_t[Â, ψ₀, ρ] for the batch density ρ. Without `numerator`
/// the batch density must be sqrt-Husimi or have a known normalizer; with a normalized
/// `numerator` (typically Husimi) the unknown κ is replaced by its self-normalized estimate.
pub fn variance_companion_estimate(
    batch: &SampleBatch,
    factors: &[IntegrandFactors],
    numerator: Option<&DensitySpec>,
) -> Result<f64> {
    if batch.density.kind == DensityKind::HusimiDouble {
        return Err(HkError::Unsupported(
            "the Husimi density has no finite variance to estimate".into(),
        ));
    }
    match numerator {
        None => crude_moments(batch, factors)?.companion(),
        Some(num) => wis_moments(batch, factors, num)?.companion(),
    }
}

/// |A_N − A_{2N}|
pub fn intrinsic_error(result_n: &EstimatorResult, result_2n: &EstimatorResult) -> Result<f64> {
    if result_n.kind != result_2n.kind {
        return Err(HkError::InvalidArgument(
            "intrinsic error needs estimates of the same kind".into(),
        ));
    }
    Ok((result_n.estimate - result_2n.estimate).norm())
}
