//! Hamiltonian Monte Carlo for the optimal densities (identity width matrix).
//!
//! Target U(ζ) = −ln|f₀(ζ)·O₀[Â](ζ)|
//!            = (1/4ε)[|y−z₀|² + |z−z₀|² + |y−z|²] − ln|Pol(ζ)| + const,
//! ∇U = ∇U[Id] − Re(conj(Pol)·∇Pol)/|Pol|².

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DensityKind, DensitySpec, DirectSampler, SampleBatch, SamplerKind};
use crate::error::{HkError, Result};
use crate::matel::polynomial_gradient;
use crate::phasespace::{DoublePhasePoint, Observable};

#[derive(Clone, Debug, PartialEq)]
enum Mass {
    Identity,
    Dense { chol: DMatrix<f64>, inverse: DMatrix<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcParams {
    step_size: f64,
    n_leapfrog: usize,
    burn_in: usize,
    mass: Mass,
}

impl HmcParams {
    pub fn new(step_size: f64, n_leapfrog: usize, burn_in: usize) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(HkError::InvalidArgument(format!(
                "leapfrog step must be positive, got {step_size}"
            )));
        }
        if n_leapfrog == 0 {
            return Err(HkError::InvalidArgument("leapfrog steps per proposal must be >= 1".into()));
        }
        Ok(Self {
            step_size,
            n_leapfrog,
            burn_in,
            mass: Mass::Identity,
        })
    }

    /// Step 0.1·√ε, 10 leapfrog steps, 1000 burn-in iterations, identity mass.
    pub fn default_for(epsilon: f64) -> Self {
        Self::new(0.1 * epsilon.sqrt(), 10, 1000).expect("defaults are valid")
    }

    pub fn with_mass(mut self, mass: DMatrix<f64>) -> Result<Self> {
        let chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| HkError::InvalidArgument("HMC mass matrix must be SPD".into()))?;
        let inverse = chol.inverse();
        self.mass = Mass::Dense {
            chol: chol.l(),
            inverse,
        };
        Ok(self)
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn n_leapfrog(&self) -> usize {
        self.n_leapfrog
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }
}

fn target(spec: &DensitySpec) -> Result<Observable> {
    match spec.kind {
        DensityKind::Optimal(obs) if spec.psi0.width.is_identity() => Ok(obs),
        DensityKind::Optimal(_) => Err(HkError::Unsupported(
            "HMC potentials are implemented for the identity width matrix only".into(),
        )),
        _ => Err(HkError::Unsupported("HMC samples optimal densities only".into())),
    }
}

/// U(ζ) = −ln ρ_opt,unnormalized(ζ); +∞ on the zero set of Pol.
pub fn hmc_potential(spec: &DensitySpec, w: &[f64]) -> f64 {
    -spec.log_density_unnormalized(&DoublePhasePoint::from_slice(w))
}

/// Writes ∇U(ζ) into `grad` and returns U(ζ). Returns +∞ (gradient untouched) where Pol = 0.
pub fn hmc_potential_gradient(spec: &DensitySpec, w: &[f64], grad: &mut [f64]) -> Result<f64> {
    let obs = target(spec)?;
    let d = spec.dim();
    if w.len() != 4 * d || grad.len() != 4 * d {
        return Err(HkError::DimensionMismatch {
            expected: 4 * d,
            got: w.len().min(grad.len()),
        });
    }
    let eps = spec.psi0.epsilon();
    let point = DoublePhasePoint::from_slice(w);
    let z0 = spec.psi0.center.to_vec();
    let mut pg = vec![Complex64::default(); 4 * d];
    let pol = polynomial_gradient(&obs, &point.y, &point.z, &spec.psi0.width, eps, &mut pg)?;
    let n2 = pol.norm_sqr();
    if n2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let h = 2 * d;
    for k in 0..h {
        let (yk, zk) = (w[k], w[h + k]);
        let dlog = (pol.conj() * pg[k]).re / n2;
        let dlog_z = (pol.conj() * pg[h + k]).re / n2;
        grad[k] = ((yk - z0[k]) + (yk - zk)) / (2.0 * eps) - dlog;
        grad[h + k] = ((zk - z0[k]) - (yk - zk)) / (2.0 * eps) - dlog_z;
    }
    Ok(-spec.log_density_unnormalized(&point))
}

struct Chain<'a> {
    spec: &'a DensitySpec,
    params: &'a HmcParams,
    grad: Vec<f64>,
}

enum Proposal {
    Finished { w: Vec<f64>, u: f64, kinetic: f64 },
    Singular,
}

impl Chain<'_> {
    fn kinetic(&self, xi: &[f64]) -> f64 {
        match &self.params.mass {
            Mass::Identity => 0.5 * xi.iter().map(|x| x * x).sum::<f64>(),
            Mass::Dense { inverse, .. } => {
                let v = nalgebra::DVector::from_column_slice(xi);
                0.5 * v.dot(&(inverse * &v))
            }
        }
    }

    fn velocity(&self, xi: &[f64], out: &mut [f64]) {
        match &self.params.mass {
            Mass::Identity => out.copy_from_slice(xi),
            Mass::Dense { inverse, .. } => {
                let v = inverse * nalgebra::DVector::from_column_slice(xi);
                out.copy_from_slice(v.as_slice());
            }
        }
    }

    fn leapfrog(&mut self, w0: &[f64], xi0: &[f64]) -> Result<Proposal> {
        let h = self.params.step_size;
        let mut w = w0.to_vec();
        let mut xi = xi0.to_vec();
        let mut vel = vec![0.0; w.len()];
        let mut u = hmc_potential_gradient(self.spec, &w, &mut self.grad)?;
        if !u.is_finite() {
            return Ok(Proposal::Singular);
        }
        for _ in 0..self.params.n_leapfrog {
            xi.iter_mut().zip(&self.grad).for_each(|(x, g)| *x -= 0.5 * h * g);
            self.velocity(&xi, &mut vel);
            w.iter_mut().zip(&vel).for_each(|(x, v)| *x += h * v);
            u = hmc_potential_gradient(self.spec, &w, &mut self.grad)?;
            if u == f64::INFINITY {
                return Ok(Proposal::Singular);
            }
            if self.grad.iter().any(|g| !g.is_finite()) || u.is_nan() {
                return Err(HkError::Sampler(format!("non-finite HMC gradient at {w:?}")));
            }
            xi.iter_mut().zip(&self.grad).for_each(|(x, g)| *x -= 0.5 * h * g);
        }
        let kinetic = self.kinetic(&xi);
        Ok(Proposal::Finished { w, u, kinetic })
    }

    fn momentum(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        match &self.params.mass {
            Mass::Identity => u,
            Mass::Dense { chol, .. } => {
                (chol * nalgebra::DVector::from_vec(u)).as_slice().to_vec()
            }
        }
    }
}

/// Markov chain of length burn-in + N targeting the optimal density of `spec`.
pub fn hmc_sample(spec: &DensitySpec, params: &HmcParams, n: usize, seed: u64) -> Result<SampleBatch> {
    target(spec)?;
    if n == 0 {
        return Err(HkError::InvalidArgument("sample count must be >= 1".into()));
    }
    let d = spec.dim();
    if let Mass::Dense { chol, .. } = &params.mass {
        if chol.nrows() != 4 * d {
            return Err(HkError::DimensionMismatch {
                expected: 4 * d,
                got: chol.nrows(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = Chain {
        spec,
        params,
        grad: vec![0.0; 4 * d],
    };

    // Start at (z₀, z₀); if Pol vanishes there, fall back to draws from the Id-optimal Gaussian.
    let mut w = DoublePhasePoint {
        y: spec.psi0.center.clone(),
        z: spec.psi0.center.clone(),
    }
    .to_vec();
    let mut u = hmc_potential(spec, &w);
    if !u.is_finite() {
        let id_spec = DensitySpec::new(DensityKind::Optimal(Observable::Identity), spec.psi0.clone())?;
        let start = DirectSampler::new(&id_spec)?;
        for i in 0.. {
            w = start.draw(seed, u64::MAX - i).to_vec();
            u = hmc_potential(spec, &w);
            if u.is_finite() {
                break;
            }
            if i > 1000 {
                return Err(HkError::Sampler("no admissible starting point".into()));
            }
        }
    }

    let mut points = Vec::with_capacity(n);
    let mut log_density = Vec::with_capacity(n);
    let mut accepted = 0usize;
    for it in 0..params.burn_in + n {
        let xi = chain.momentum(&mut rng, 4 * d);
        let h0 = u + chain.kinetic(&xi);
        let proposal = chain.leapfrog(&w, &xi)?;
        let threshold: f64 = rng.random();
        if let Proposal::Finished { w: w1, u: u1, kinetic } = proposal {
            let h1 = u1 + kinetic;
            if h1.is_finite() && threshold < (h0 - h1).exp().min(1.0) {
                w = w1;
                u = u1;
                if it >= params.burn_in {
                    accepted += 1;
                }
            }
        }
        if it >= params.burn_in {
            points.push(DoublePhasePoint::from_slice(&w));
            log_density.push(-u);
        }
    }
    Ok(SampleBatch {
        points,
        density: spec.clone(),
        log_density,
        acceptance_rate: Some(accepted as f64 / n as f64),
        seed,
        sampler: SamplerKind::Hmc,
    })
}

/// Effective sample size of a scalar chain by Geyer's initial monotone sequence.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    n as f64 / tau.max(1.0 / n as f64)
}
