use std::ops::Range;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use super::config::{BlowUpPolicy, ExperimentConfig, ResolvedConfig};
use super::output::{ResultRow, ResultsTable};
use crate::dynamics::{phase_factor_raw, propagate_pair_with};
use crate::error::{HkError, Result};
use crate::estimators::{log_f0, EstimatorKind, PairwiseSum, SampleMoments};
use crate::matel::{log_overlap_raw, polynomial_unchecked};
use crate::phasespace::DoublePhasePoint;
use crate::sampling::{hmc_sample, DirectSampler};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "HK_EXPECT_WORKERS";

/// Samples per reduction chunk. Fixed so that sums do not depend on the worker count.
const CHUNK: usize = 1024;

const MAX_REPORTED_SEEDS: usize = 16;

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatDiagnostics {
    pub repeat: usize,
    /// Mean of |R_t(y)·R_t(z)| over the N-sample run, per save point.
    pub prefactor_mean: Vec<f64>,
    pub dropped: usize,
    pub acceptance: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub table: ResultsTable,
    pub times: Vec<f64>,
    pub diagnostics: Vec<RepeatDiagnostics>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    run_resolved(&config.resolve()?, default_workers())
}

/// Seed of ChaCha key `stream` for `repeat`; distinct inputs give distinct keys.
pub fn derive_seed(base: u64, repeat: usize, stream: u64) -> u64 {
    let mut x = base
        ^ (repeat as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

enum Source<'a> {
    Direct { sampler: DirectSampler, seed: u64 },
    Points(&'a [DoublePhasePoint]),
}

impl Source<'_> {
    fn point(&self, i: usize) -> DoublePhasePoint {
        match self {
            Source::Direct { sampler, seed } => sampler.draw(*seed, i as u64),
            Source::Points(p) => p[i].clone(),
        }
    }
}

/// Moments per (save point, observable), flattened as `save * n_obs + obs`.
#[derive(Clone, Debug, Default)]
pub struct BatchMoments {
    pub moments: Vec<SampleMoments>,
    pub prefactor: Vec<PairwiseSum<f64>>,
    pub failed: Vec<usize>,
    pub failed_count: usize,
}

impl BatchMoments {
    fn new(n_saves: usize, n_obs: usize) -> Self {
        Self {
            moments: vec![SampleMoments::new(); n_saves * n_obs],
            prefactor: vec![PairwiseSum::new(); n_saves],
            failed: Vec::new(),
            failed_count: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.moments.iter_mut().zip(&other.moments).for_each(|(a, b)| a.merge(b));
        self.prefactor.iter_mut().zip(&other.prefactor).for_each(|(a, b)| a.merge(b));
        self.failed_count += other.failed_count;
        for &i in &other.failed {
            if self.failed.len() < MAX_REPORTED_SEEDS {
                self.failed.push(i);
            }
        }
    }
}

struct Evaluator<'a> {
    rc: &'a ResolvedConfig,
    log_kappa: f64,
    n_saves: usize,
}

impl<'a> Evaluator<'a> {
    fn new(rc: &'a ResolvedConfig) -> Self {
        Self {
            rc,
            log_kappa: rc.sampling.log_normalizer().unwrap_or(0.0),
            n_saves: rc.grid.save_steps().len(),
        }
    }

    /// Contributions g·(Φ, O) of one sample per save point and observable, plus its weight.
    fn sample(&self, w: &DoublePhasePoint, buf: &mut Vec<Complex64>, rr: &mut [f64]) -> Result<f64> {
        let rc = self.rc;
        let width = &rc.psi0.width;
        let eps = rc.psi0.epsilon();
        let lr2 = rc.sampling.log_density_unnormalized(w);
        let (lr1, weight) = match &rc.numerator {
            None => (lr2 - self.log_kappa, 1.0),
            Some(num) => {
                let l1 = num.log_density(w).unwrap_or(f64::NAN);
                (l1, (l1 - lr2).exp())
            }
        };
        if !weight.is_finite() {
            return Err(HkError::DegenerateWeights);
        }
        let base = (log_f0(w, &rc.psi0) - lr1).exp();
        buf.clear();
        propagate_pair_with(w, &rc.grid, &rc.potential, width, |s, ys, zs| {
            let phi = phase_factor_raw(ys, zs, eps);
            let ov = log_overlap_raw(&ys.z, &zs.z, width, eps).exp();
            let common = base * phi * ov;
            for obs in &rc.observables {
                let pol = polynomial_unchecked(obs, &ys.z, &zs.z, width, eps)
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                buf.push(common * pol);
            }
            rr[s] = (ys.prefactor * zs.prefactor).norm();
        })?;
        if buf.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(HkError::Propagation {
                t: f64::NAN,
                reason: "non-finite integrand".into(),
            });
        }
        Ok(weight)
    }

    fn chunk(&self, source: &Source, range: Range<usize>) -> BatchMoments {
        let n_obs = self.rc.observables.len();
        let mut acc = BatchMoments::new(self.n_saves, n_obs);
        let mut buf = Vec::with_capacity(self.n_saves * n_obs);
        let mut rr = vec![0.0; self.n_saves];
        for i in range {
            let w = source.point(i);
            match self.sample(&w, &mut buf, &mut rr) {
                Ok(weight) => {
                    for (m, g) in acc.moments.iter_mut().zip(&buf) {
                        m.push(*g, weight);
                    }
                    for (p, r) in acc.prefactor.iter_mut().zip(&rr) {
                        p.push(*r);
                    }
                }
                Err(e) => {
                    log::debug!("sample {i} failed: {e}");
                    acc.failed_count += 1;
                    if acc.failed.len() < MAX_REPORTED_SEEDS {
                        acc.failed.push(i);
                    }
                }
            }
        }
        acc
    }

    fn run(&self, source: &Source, n: usize) -> Result<BatchMoments> {
        let chunks: Vec<BatchMoments> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| self.chunk(source, c * CHUNK..((c + 1) * CHUNK).min(n)))
            .collect();
        let mut total = BatchMoments::new(self.n_saves, self.rc.observables.len());
        for c in &chunks {
            total.merge(c);
        }
        if total.failed_count > 0 {
            match self.rc.blow_up {
                BlowUpPolicy::Abort => {
                    return Err(HkError::BlowUp {
                        count: total.failed_count,
                        samples: total.failed.clone(),
                    })
                }
                BlowUpPolicy::Drop => log::warn!(
                    "dropped {} of {n} samples ({:.3}%) after trajectory failures",
                    total.failed_count,
                    100.0 * total.failed_count as f64 / n as f64
                ),
            }
        }
        Ok(total)
    }
}

/// Samples and evaluates one batch of `n` points for `seed`.
pub fn evaluate_batch(rc: &ResolvedConfig, n: usize, seed: u64) -> Result<(BatchMoments, Option<f64>)> {
    let ev = Evaluator::new(rc);
    match &rc.hmc {
        None => {
            let source = Source::Direct {
                sampler: DirectSampler::new(&rc.sampling)?,
                seed,
            };
            Ok((ev.run(&source, n)?, None))
        }
        Some(params) => {
            let batch = hmc_sample(&rc.sampling, params, n, seed)?;
            let source = Source::Points(&batch.points);
            Ok((ev.run(&source, n)?, batch.acceptance_rate))
        }
    }
}

fn estimator_kind(rc: &ResolvedConfig) -> EstimatorKind {
    match &rc.numerator {
        None => EstimatorKind::Crude(rc.sampling.kind),
        Some(num) => EstimatorKind::Wis {
            numerator: num.kind,
            sampling: rc.sampling.kind,
        },
    }
}

pub fn run_resolved(rc: &ResolvedConfig, workers: usize) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HkError::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(rc))
}

fn run_in_pool(rc: &ResolvedConfig) -> Result<RunOutput> {
    let times = rc.grid.save_times();
    let n_obs = rc.observables.len();
    let kind = estimator_kind(rc);
    let companion_ok = rc.sampling.kind != crate::sampling::DensityKind::HusimiDouble;
    let mut table = ResultsTable::default();
    let mut diagnostics = Vec::with_capacity(rc.repeats);

    for repeat in 0..rc.repeats {
        let start = Instant::now();
        let (main, acceptance) = evaluate_batch(rc, rc.samples, derive_seed(rc.seed, repeat, 0))?;
        let double = if rc.intrinsic {
            Some(evaluate_batch(rc, 2 * rc.samples, derive_seed(rc.seed, repeat, 1))?.0)
        } else {
            None
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let n_ok = rc.samples - main.failed_count;
        let prefactor_mean = main.prefactor.iter().map(|p| p.total() / n_ok as f64).collect();
        diagnostics.push(RepeatDiagnostics {
            repeat,
            prefactor_mean,
            dropped: main.failed_count,
            acceptance,
            wall_ms,
        });

        for (k, obs) in rc.observables.iter().enumerate() {
            for (s, &t) in times.iter().enumerate() {
                let m = &main.moments[s * n_obs + k];
                let res = m.result(kind)?;
                let intrinsic_err = match &double {
                    Some(d) => Some((res.estimate - d.moments[s * n_obs + k].estimate()?).norm()),
                    None => None,
                };
                table.rows.push(ResultRow {
                    repeat,
                    observable: obs.to_string(),
                    t,
                    estimate_re: res.estimate.re,
                    estimate_im: res.estimate.im,
                    std_err: res.std_err(),
                    variance_est: if companion_ok { Some(m.companion()?) } else { None },
                    intrinsic_err,
                    acceptance,
                    wall_ms,
                });
            }
        }
    }
    Ok(RunOutput {
        table,
        times,
        diagnostics,
    })
}
