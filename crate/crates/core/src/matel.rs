//! Closed-form matrix elements ⟨g_y, Â g_z⟩ between frozen Gaussians.
//!
//! Every element factors as `Pol(y, z) · ⟨g_y, g_z⟩`. The polynomial is written in
//! terms of m = q̄ + iΓ⁻¹p̄ and n = (p_y + p_z) + iΓ(q_y − q_z), with q̄ = q_y + q_z
//! and p̄ = p_z − p_y.

use num_complex::Complex64;

use crate::error::{check_dim, HkError, Result};
use crate::phasespace::{GaussianWavepacket, Observable, PhaseSpacePoint, WidthMatrix};
use crate::potential::Potential;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatElResult {
    pub value: Complex64,
    pub overlap: Complex64,
}

fn check_points(y: &PhaseSpacePoint, z: &PhaseSpacePoint, width: &WidthMatrix) -> Result<()> {
    check_dim(width.dim(), y.dim())?;
    check_dim(width.dim(), z.dim())?;
    check_dim(y.q.len(), y.p.len())?;
    check_dim(z.q.len(), z.p.len())
}

/// log⟨g_y, g_z⟩ without dimension checks.
pub(crate) fn log_overlap_raw(
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
) -> Complex64 {
    let d = y.dim();
    let mut phase = 0.0;
    let quad = match width.diagonal_entries() {
        Some(g) => {
            let mut s = 0.0;
            for j in 0..d {
                let dq = y.q[j] - z.q[j];
                let dp = y.p[j] - z.p[j];
                phase += (y.p[j] + z.p[j]) * dq;
                s += g[j] * dq * dq + dp * dp / g[j];
            }
            s
        }
        None => {
            let dq: Vec<f64> = (0..d).map(|j| y.q[j] - z.q[j]).collect();
            let dp: Vec<f64> = (0..d).map(|j| y.p[j] - z.p[j]).collect();
            phase = (0..d).map(|j| (y.p[j] + z.p[j]) * dq[j]).sum();
            width.quad(&dq) + width.inv_quad(&dp)
        }
    };
    Complex64::new(-0.25 * quad, 0.5 * phase) / eps
}

/// ⟨g_y, g_z⟩ = exp{[−¼(y−z)ᵀΣ₀(y−z) + (i/2)(p_y+p_z)ᵀ(q_y−q_z)]/ε}
pub fn overlap(
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
) -> Result<Complex64> {
    check_points(y, z, width)?;
    Ok(log_overlap_raw(y, z, width, eps).exp())
}

fn m_vec(y: &PhaseSpacePoint, z: &PhaseSpacePoint, width: &WidthMatrix) -> Vec<Complex64> {
    let d = y.dim();
    let pbar: Vec<f64> = (0..d).map(|j| z.p[j] - y.p[j]).collect();
    let mut gp = vec![0.0; d];
    width.inv_mul_into(&pbar, &mut gp);
    (0..d).map(|j| Complex64::new(y.q[j] + z.q[j], gp[j])).collect()
}

fn n_entry(y: &PhaseSpacePoint, z: &PhaseSpacePoint, width: &WidthMatrix, j: usize) -> Complex64 {
    let d = y.dim();
    let gq: f64 = match width.diagonal_entries() {
        Some(g) => g[j] * (y.q[j] - z.q[j]),
        None => (0..d).map(|k| width.matrix()[(j, k)] * (y.q[k] - z.q[k])).sum(),
    };
    Complex64::new(y.p[j] + z.p[j], gq)
}

fn m_entry(y: &PhaseSpacePoint, z: &PhaseSpacePoint, width: &WidthMatrix, j: usize) -> Complex64 {
    let d = y.dim();
    let gp: f64 = match width.diagonal_entries() {
        Some(g) => (z.p[j] - y.p[j]) / g[j],
        None => (0..d).map(|k| width.inverse()[(j, k)] * (z.p[k] - y.p[k])).sum(),
    };
    Complex64::new(y.q[j] + z.q[j], gp)
}

fn pos_sq(m: Complex64, eps: f64, inv_gamma_jj: f64) -> Complex64 {
    (2.0 * eps * inv_gamma_jj + m * m) / 4.0
}

fn mom_sq(n: Complex64, eps: f64, gamma_jj: f64) -> Complex64 {
    (2.0 * eps * gamma_jj + n * n) / 4.0
}

fn kinetic(y: &PhaseSpacePoint, z: &PhaseSpacePoint, width: &WidthMatrix, eps: f64) -> Complex64 {
    0.5 * (0..y.dim())
        .map(|j| mom_sq(n_entry(y, z, width, j), eps, width.entry(j)))
        .sum::<Complex64>()
}

fn harmonic(y: &PhaseSpacePoint, z: &PhaseSpacePoint, width: &WidthMatrix, eps: f64) -> Complex64 {
    let m = m_vec(y, z, width);
    0.5 * m
        .iter()
        .enumerate()
        .map(|(j, mj)| pos_sq(*mj, eps, width.inv_entry(j)))
        .sum::<Complex64>()
}

/// Henon–Heiles polynomial I₁ + I₂ + I₃ with a_j = √(ε/γ_j), s_j = p̄_j/√(εγ_j).
fn henon_heiles(
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    gamma: &[f64],
    eps: f64,
    sigma: f64,
) -> Complex64 {
    let d = y.dim();
    let mut qbar = vec![0.0; d];
    let mut pbar = vec![0.0; d];
    let mut m = vec![Complex64::default(); d];
    let mut b2 = vec![Complex64::default(); d];
    let mut quart = vec![Complex64::default(); d];
    for j in 0..d {
        let g = gamma[j];
        qbar[j] = y.q[j] + z.q[j];
        pbar[j] = z.p[j] - y.p[j];
        m[j] = Complex64::new(qbar[j], pbar[j] / g);
        b2[j] = 2.0 * eps / g + m[j] * m[j];
        let a = (eps / g).sqrt();
        let s = pbar[j] / (eps * g).sqrt();
        let m2 = m[j] * m[j];
        quart[j] = 12.0 * eps * qbar[j] * qbar[j] / g
            + 24.0 * I * a.powi(3) * qbar[j] * s
            - 12.0 * a.powi(4) * s * s
            + 12.0 * eps * eps / (g * g)
            + m2 * m2;
    }
    let i1: Complex64 = b2.iter().sum::<Complex64>() / 8.0;
    let mut i2 = Complex64::default();
    let mut i3 = Complex64::default();
    for j in 0..d.saturating_sub(1) {
        let g = gamma[j];
        let cubic = 6.0 * eps * qbar[j] / g + 6.0 * I * eps * pbar[j] / (g * g) + m[j] * m[j] * m[j];
        i2 += m[j] / 2.0 * b2[j + 1] / 4.0 - cubic / 24.0;
        i3 += b2[j] * b2[j + 1] / 8.0 + quart[j] / 16.0 + quart[j + 1] / 16.0;
    }
    i1 + sigma * i2 + sigma * sigma / 16.0 * i3
}

fn potential_poly(
    potential: Potential,
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
) -> Result<Complex64> {
    match potential {
        Potential::Harmonic => Ok(harmonic(y, z, width, eps)),
        Potential::HenonHeiles { sigma } => {
            let gamma = width.diagonal_entries().ok_or_else(|| {
                HkError::Unsupported("Henon-Heiles matrix elements need a diagonal width matrix".into())
            })?;
            Ok(henon_heiles(y, z, gamma, eps, sigma))
        }
    }
}

/// Pol(y, z) with ⟨g_y, Â g_z⟩ = Pol(y, z)·⟨g_y, g_z⟩.
pub fn polynomial(
    observable: &Observable,
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
) -> Result<Complex64> {
    check_points(y, z, width)?;
    observable.validate(y.dim())?;
    polynomial_unchecked(observable, y, z, width, eps)
}

pub(crate) fn polynomial_unchecked(
    observable: &Observable,
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
) -> Result<Complex64> {
    Ok(match *observable {
        Observable::Identity => Complex64::new(1.0, 0.0),
        Observable::Position(j) => m_entry(y, z, width, j) / 2.0,
        Observable::PositionSq(j) => pos_sq(m_entry(y, z, width, j), eps, width.inv_entry(j)),
        Observable::Momentum(j) => n_entry(y, z, width, j) / 2.0,
        Observable::MomentumSq(j) => mom_sq(n_entry(y, z, width, j), eps, width.entry(j)),
        Observable::Kinetic => kinetic(y, z, width, eps),
        Observable::PotentialHarmonic => harmonic(y, z, width, eps),
        Observable::PotentialHenonHeiles { sigma } => {
            potential_poly(Potential::HenonHeiles { sigma }, y, z, width, eps)?
        }
        Observable::TotalEnergy(p) => kinetic(y, z, width, eps) + potential_poly(p, y, z, width, eps)?,
    })
}

pub fn matel(
    observable: &Observable,
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
) -> Result<MatElResult> {
    let pol = polynomial(observable, y, z, width, eps)?;
    let overlap = log_overlap_raw(y, z, width, eps).exp();
    Ok(MatElResult {
        value: pol * overlap,
        overlap,
    })
}

/// ⟨ψ₀, Ĥ ψ₀⟩ for ψ₀ = g_{z₀}.
pub fn total_energy_expectation(psi0: &GaussianWavepacket, potential: Potential) -> Result<f64> {
    potential.validate()?;
    let z0 = &psi0.center;
    let r = matel(&Observable::TotalEnergy(potential), z0, z0, &psi0.width, psi0.epsilon())?;
    Ok(r.value.re)
}

/// Pol(y, z) and its gradient with respect to w = (q_y, p_y, q_z, p_z), for diagonal Γ.
///
/// Uses the Gaussian moments E[xᵏ] of the complex Gaussian ḡ_y g_z (mean m/2,
/// variance ε/(2γ)), so it is independent of the term-by-term form in [`polynomial`].
pub fn polynomial_gradient(
    observable: &Observable,
    y: &PhaseSpacePoint,
    z: &PhaseSpacePoint,
    width: &WidthMatrix,
    eps: f64,
    grad: &mut [Complex64],
) -> Result<Complex64> {
    check_points(y, z, width)?;
    observable.validate(y.dim())?;
    let d = y.dim();
    check_dim(4 * d, grad.len())?;
    let gamma = width.diagonal_entries().ok_or_else(|| {
        HkError::Unsupported("polynomial gradients need a diagonal width matrix".into())
    })?;
    grad.iter_mut().for_each(|g| *g = Complex64::default());

    // dPol/dm_j and dPol/dn_j, then chain through
    // m_j = q_y + q_z + i(p_z − p_y)/γ, n_j = p_y + p_z + iγ(q_y − q_z).
    let mut dm = vec![Complex64::default(); d];
    let mut dn = vec![Complex64::default(); d];
    let m: Vec<Complex64> = (0..d)
        .map(|j| Complex64::new(y.q[j] + z.q[j], (z.p[j] - y.p[j]) / gamma[j]))
        .collect();
    let n: Vec<Complex64> = (0..d)
        .map(|j| Complex64::new(y.p[j] + z.p[j], gamma[j] * (y.q[j] - z.q[j])))
        .collect();

    let add_kinetic = |dn: &mut [Complex64]| -> Complex64 {
        let mut v = Complex64::default();
        for j in 0..d {
            v += 0.5 * mom_sq(n[j], eps, gamma[j]);
            dn[j] += 0.5 * n[j] / 2.0;
        }
        v
    };
    let add_potential = |p: Potential, dm: &mut [Complex64]| -> Complex64 {
        match p {
            Potential::Harmonic => {
                let mut v = Complex64::default();
                for j in 0..d {
                    v += 0.5 * pos_sq(m[j], eps, 1.0 / gamma[j]);
                    dm[j] += 0.5 * m[j] / 2.0;
                }
                v
            }
            Potential::HenonHeiles { sigma } => henon_heiles_moments(&m, gamma, eps, sigma, dm),
        }
    };

    let pol = match *observable {
        Observable::Identity => Complex64::new(1.0, 0.0),
        Observable::Position(j) => {
            dm[j] = Complex64::new(0.5, 0.0);
            m[j] / 2.0
        }
        Observable::PositionSq(j) => {
            dm[j] = m[j] / 2.0;
            pos_sq(m[j], eps, 1.0 / gamma[j])
        }
        Observable::Momentum(j) => {
            dn[j] = Complex64::new(0.5, 0.0);
            n[j] / 2.0
        }
        Observable::MomentumSq(j) => {
            dn[j] = n[j] / 2.0;
            mom_sq(n[j], eps, gamma[j])
        }
        Observable::Kinetic => add_kinetic(&mut dn),
        Observable::PotentialHarmonic => add_potential(Potential::Harmonic, &mut dm),
        Observable::PotentialHenonHeiles { sigma } => {
            add_potential(Potential::HenonHeiles { sigma }, &mut dm)
        }
        Observable::TotalEnergy(p) => add_kinetic(&mut dn) + add_potential(p, &mut dm),
    };

    for j in 0..d {
        let g = gamma[j];
        // q_y, p_y, q_z, p_z blocks
        grad[j] = dm[j] + dn[j] * I * g;
        grad[d + j] = dm[j] * (-I / g) + dn[j];
        grad[2 * d + j] = dm[j] - dn[j] * I * g;
        grad[3 * d + j] = dm[j] * (I / g) + dn[j];
    }
    Ok(pol)
}

/// Henon–Heiles polynomial from per-coordinate moments; accumulates dPol/dm into `dm`.
fn henon_heiles_moments(
    m: &[Complex64],
    gamma: &[f64],
    eps: f64,
    sigma: f64,
    dm: &mut [Complex64],
) -> Complex64 {
    let d = m.len();
    let mu: Vec<Complex64> = m.iter().map(|x| x / 2.0).collect();
    let s2: Vec<f64> = gamma.iter().map(|g| eps / (2.0 * g)).collect();
    let e2 = |j: usize| mu[j] * mu[j] + s2[j];
    let e3 = |j: usize| mu[j] * mu[j] * mu[j] + 3.0 * mu[j] * s2[j];
    let e4 = |j: usize| {
        let u2 = mu[j] * mu[j];
        u2 * u2 + 6.0 * u2 * s2[j] + 3.0 * s2[j] * s2[j]
    };
    let de2 = |j: usize| 2.0 * mu[j];
    let de3 = |j: usize| 3.0 * mu[j] * mu[j] + 3.0 * s2[j];
    let de4 = |j: usize| 4.0 * mu[j] * mu[j] * mu[j] + 12.0 * mu[j] * s2[j];

    // derivatives with respect to mu; dm = dmu / 2
    let mut dmu = vec![Complex64::default(); d];
    let mut v = Complex64::default();
    for j in 0..d {
        v += 0.5 * e2(j);
        dmu[j] += 0.5 * de2(j);
    }
    let c = sigma * sigma / 16.0;
    for j in 0..d.saturating_sub(1) {
        let k = j + 1;
        v += sigma * (mu[j] * e2(k) - e3(j) / 3.0);
        dmu[j] += sigma * (e2(k) - de3(j) / 3.0);
        dmu[k] += sigma * mu[j] * de2(k);

        v += c * (e4(j) + 2.0 * e2(j) * e2(k) + e4(k));
        dmu[j] += c * (de4(j) + 2.0 * de2(j) * e2(k));
        dmu[k] += c * (2.0 * e2(j) * de2(k) + de4(k));
    }
    for j in 0..d {
        dm[j] += dmu[j] / 2.0;
    }
    v
}
