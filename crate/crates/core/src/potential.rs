//! Model potentials for the classical flow.
//!
//! `HenonHeiles` is the chain-coupled variant with a stabilizing quartic term:
//! V(x) = |x|²/2 + Σ_{j<D} [σ(x_j x_{j+1}² − x_j³/3) + σ²/16 (x_j² + x_{j+1}²)²].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Harmonic,
    HenonHeiles { sigma: f64 },
}

impl Potential {
    pub fn value(&self, q: &[f64]) -> f64 {
        let quad: f64 = q.iter().map(|x| 0.5 * x * x).sum();
        match *self {
            Potential::Harmonic => quad,
            Potential::HenonHeiles { sigma } => {
                let mut v = quad;
                for w in q.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let r = a * a + b * b;
                    v += sigma * (a * b * b - a * a * a / 3.0) + sigma * sigma / 16.0 * r * r;
                }
                v
            }
        }
    }

    /// Writes ∇V(q) into `out`.
    pub fn gradient_into(&self, q: &[f64], out: &mut [f64]) {
        out.copy_from_slice(q);
        if let Potential::HenonHeiles { sigma } = *self {
            let s2 = sigma * sigma / 4.0;
            for j in 0..q.len().saturating_sub(1) {
                let (a, b) = (q[j], q[j + 1]);
                let r = a * a + b * b;
                out[j] += sigma * (b * b - a * a) + s2 * a * r;
                out[j + 1] += 2.0 * sigma * a * b + s2 * b * r;
            }
        }
    }

    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; q.len()];
        self.gradient_into(q, &mut g);
        g
    }

    /// Accumulates `out += Hess V(q) · v` without forming the (tridiagonal) Hessian.
    pub fn hessian_apply_add(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
        if let Potential::HenonHeiles { sigma } = *self {
            let s2 = sigma * sigma;
            for j in 0..q.len().saturating_sub(1) {
                let (a, b) = (q[j], q[j + 1]);
                let haa = -2.0 * sigma * a + s2 * (3.0 * a * a + b * b) / 4.0;
                let hbb = 2.0 * sigma * a + s2 * (a * a + 3.0 * b * b) / 4.0;
                let hab = 2.0 * sigma * b + s2 * a * b / 2.0;
                out[j] += haa * v[j] + hab * v[j + 1];
                out[j + 1] += hab * v[j] + hbb * v[j + 1];
            }
        }
    }

    /// Hess V is tridiagonal for both potentials: writes its diagonal and first off-diagonal.
    pub fn hessian_tridiagonal(&self, q: &[f64], diag: &mut [f64], off: &mut [f64]) {
        diag.iter_mut().for_each(|h| *h = 1.0);
        off.iter_mut().for_each(|h| *h = 0.0);
        if let Potential::HenonHeiles { sigma } = *self {
            let s2 = sigma * sigma;
            for j in 0..q.len().saturating_sub(1) {
                let (a, b) = (q[j], q[j + 1]);
                diag[j] += -2.0 * sigma * a + s2 * (3.0 * a * a + b * b) / 4.0;
                diag[j + 1] += 2.0 * sigma * a + s2 * (a * a + 3.0 * b * b) / 4.0;
                off[j] = 2.0 * sigma * b + s2 * a * b / 2.0;
            }
        }
    }

    pub fn hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let d = q.len();
        let mut h = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for k in 0..d {
            e[k] = 1.0;
            col.iter_mut().for_each(|c| *c = 0.0);
            self.hessian_apply_add(q, &e, &mut col);
            h.set_column(k, &nalgebra::DVector::from_column_slice(&col));
            e[k] = 0.0;
        }
        h
    }

    pub fn validate(&self) -> crate::Result<()> {
        match *self {
            Potential::HenonHeiles { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                crate::HkError::InvalidArgument(format!("Henon-Heiles sigma must be >= 0, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }
}
