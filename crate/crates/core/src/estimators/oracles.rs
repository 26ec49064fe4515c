//! Closed-form references: exact harmonic expectations and the variances V_t[Â, ψ₀, ρ]
//! of the crude estimator for Gaussian ψ₀ with Γ = Id.
//!
//! Harmonic time dependence enters through the classical centre
//! q(t) = q₀ cos t + p₀ sin t, p(t) = p₀ cos t − q₀ sin t.

use crate::error::{HkError, Result};
use crate::phasespace::{Observable, PhaseSpacePoint};
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    /// ⟨Â⟩_t, exact for the harmonic oscillator.
    Expectation,
    /// V_t for crude sampling from the sqrt-Husimi density.
    SqrtHusimiVariance,
    /// V_t for crude sampling from the optimal density of Â.
    OptimalVariance,
    /// Per-sample delta-method variance of WIS with ρ₁ = Husimi, ρ₂ = sqrt-Husimi.
    WisHusimiSqrtHusimiVariance,
}

#[derive(Clone, Debug)]
pub struct OracleQuery<'a> {
    pub observable: Observable,
    pub t: f64,
    pub epsilon: f64,
    pub z0: &'a PhaseSpacePoint,
    pub potential: Potential,
    pub kind: OracleKind,
}

pub fn kappa_sqrt_husimi(dim: usize) -> f64 {
    2f64.powi(dim as i32)
}

pub fn kappa_optimal_identity(dim: usize) -> f64 {
    (4.0f64 / 3.0).powi(dim as i32)
}

fn harmonic_center(z0: &PhaseSpacePoint, t: f64) -> PhaseSpacePoint {
    let (s, c) = t.sin_cos();
    PhaseSpacePoint {
        q: z0.q.iter().zip(&z0.p).map(|(q, p)| q * c + p * s).collect(),
        p: z0.q.iter().zip(&z0.p).map(|(q, p)| p * c - q * s).collect(),
    }
}

fn uniform_value(v: &[f64], what: &str) -> Result<f64> {
    let c = v[0];
    if v.iter().any(|x| (x - c).abs() > 1e-12 * c.abs().max(1.0)) {
        return Err(HkError::Unsupported(format!(
            "closed form needs {what} of the form c·(1,…,1)"
        )));
    }
    Ok(c)
}

fn unsupported(q: &OracleQuery) -> HkError {
    HkError::Unsupported(format!(
        "no closed form for {:?} of {} at t = {} with {:?}",
        q.kind, q.observable, q.t, q.potential
    ))
}

pub fn analytic_oracle(q: &OracleQuery) -> Result<f64> {
    let d = q.z0.dim();
    if d == 0 {
        return Err(HkError::InvalidArgument("empty centre".into()));
    }
    q.observable.validate(d)?;
    let eps = q.epsilon;
    let harmonic = q.potential == Potential::Harmonic;
    if q.t != 0.0 && !harmonic {
        return Err(unsupported(q));
    }
    let zt = harmonic_center(q.z0, q.t);
    let df = d as f64;
    let f = (16.0f64 / 5.0).powi(d as i32);

    match q.kind {
        OracleKind::Expectation => {
            if !harmonic && q.t != 0.0 {
                return Err(unsupported(q));
            }
            let sq = |x: &[f64]| x.iter().map(|v| v * v + 0.5 * eps).sum::<f64>();
            match q.observable {
                Observable::Identity => Ok(1.0),
                Observable::Position(j) => Ok(zt.q[j]),
                Observable::Momentum(j) => Ok(zt.p[j]),
                Observable::PositionSq(j) => Ok(zt.q[j] * zt.q[j] + 0.5 * eps),
                Observable::MomentumSq(j) => Ok(zt.p[j] * zt.p[j] + 0.5 * eps),
                Observable::Kinetic => Ok(0.5 * sq(&zt.p)),
                Observable::PotentialHarmonic => Ok(0.5 * sq(&zt.q)),
                Observable::TotalEnergy(Potential::Harmonic) => Ok(0.5 * (sq(&zt.q) + sq(&zt.p))),
                _ => Err(unsupported(q)),
            }
        }
        OracleKind::SqrtHusimiVariance => {
            let pair = |c: f64| {
                let mu = 4.0 * c * c + 26.0 * eps / 5.0;
                let var = 76.8 * c * c * eps + 46.08 * eps * eps;
                f / 64.0 * (df * df * mu * mu + df * var)
                    - (df / 4.0).powi(2) * (eps + 2.0 * c * c).powi(2)
            };
            match q.observable {
                Observable::Identity => Ok(f - 1.0),
                Observable::Position(j) => {
                    let c = zt.q[j];
                    Ok(0.25 * f * (4.0 * c * c + 24.0 * eps / 5.0) - c * c)
                }
                Observable::Momentum(j) => {
                    let c = zt.p[j];
                    Ok(0.25 * f * (4.0 * c * c + 24.0 * eps / 5.0) - c * c)
                }
                Observable::PotentialHarmonic => Ok(pair(uniform_value(&zt.q, "q(t)")?)),
                Observable::Kinetic => Ok(pair(uniform_value(&zt.p, "p(t)")?)),
                Observable::TotalEnergy(Potential::Harmonic) => {
                    let c1 = uniform_value(&zt.q, "q(t)")?;
                    let c2 = uniform_value(&zt.p, "p(t)")?;
                    let s = c1 * c1 + c2 * c2;
                    let mu = 4.0 * s + 52.0 * eps / 5.0;
                    let var = 76.8 * s * eps + 92.16 * eps * eps;
                    Ok(f / 64.0 * (df * df * mu * mu + df * var)
                        - (df / 2.0).powi(2) * (eps + s).powi(2))
                }
                _ => Err(unsupported(q)),
            }
        }
        OracleKind::OptimalVariance => match q.observable {
            Observable::Identity => Ok((16.0f64 / 9.0).powi(d as i32) - 1.0),
            _ => Err(unsupported(q)),
        },
        OracleKind::WisHusimiSqrtHusimiVariance => match q.observable {
            Observable::Identity => Ok(f - (16.0f64 / 9.0).powi(d as i32)),
            _ => Err(unsupported(q)),
        },
    }
}
