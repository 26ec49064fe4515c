//! Desk-scale versions of the three reference experiments, with analytic columns
//! where closed forms exist.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{
    BlowUpPolicy, DensityName, EstimatorConfig, ExperimentConfig, HmcConfig, InitialState,
    SamplingConfig, TimeConfig,
};
use super::output::OutputFormat;
use super::run::run_resolved;
use crate::error::{HkError, Result};
use crate::estimators::oracles::{analytic_oracle, OracleKind, OracleQuery};
use crate::matel::total_energy_expectation;
use crate::phasespace::Observable;
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    InitScan,
    HarmonicD5,
    HenonHeiles,
}

impl FromStr for Scenario {
    type Err = HkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init-scan" => Ok(Scenario::InitScan),
            "harmonic-d5" => Ok(Scenario::HarmonicD5),
            "henon-heiles" => Ok(Scenario::HenonHeiles),
            other => Err(HkError::Config {
                key: "scenario".into(),
                message: format!("unknown scenario `{other}` (init-scan, harmonic-d5, henon-heiles)"),
            }),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::InitScan => "init-scan",
            Scenario::HarmonicD5 => "harmonic-d5",
            Scenario::HenonHeiles => "henon-heiles",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub case: String,
    pub repeat: usize,
    pub observable: String,
    pub t: f64,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub std_err: f64,
    pub variance_est: Option<f64>,
    pub intrinsic_err: Option<f64>,
    pub acceptance: Option<f64>,
    pub wall_ms: f64,
    pub exact: Option<f64>,
    pub variance_exact: Option<f64>,
    pub prefactor_mean: Option<f64>,
}

pub struct ScenarioCase {
    pub label: String,
    pub config: ExperimentConfig,
}

fn base_config(dim: usize, epsilon: f64, potential: Potential, q0: f64, p0: f64) -> ExperimentConfig {
    ExperimentConfig {
        dim,
        epsilon,
        potential,
        psi0: InitialState {
            q0: vec![q0; dim],
            p0: vec![p0; dim],
            gamma: None,
        },
        observables: vec!["Id".into()],
        sampling: SamplingConfig {
            density: DensityName::SqrtHusimi,
            observable: None,
            sampler: None,
            hmc: HmcConfig::default(),
        },
        estimator: EstimatorConfig::Crude,
        samples: 1024,
        time: TimeConfig {
            t_final: 0.0,
            step: 1.0,
            save_stride: 1,
        },
        repeats: 20,
        seed: 2024,
        intrinsic: false,
        blow_up: BlowUpPolicy::Abort,
        output: None,
        allow_large: false,
    }
}

fn density_label(d: DensityName) -> &'static str {
    match d {
        DensityName::Husimi => "husimi",
        DensityName::SqrtHusimi => "sqrt-husimi",
        DensityName::Optimal => "optimal",
    }
}

pub fn scenario_cases(scenario: Scenario) -> Vec<ScenarioCase> {
    let mut cases = Vec::new();
    match scenario {
        Scenario::InitScan => {
            for dim in [1, 5] {
                for density in [DensityName::Husimi, DensityName::SqrtHusimi, DensityName::Optimal] {
                    for log_n in (10..=18).step_by(2) {
                        let mut c = base_config(dim, 1.0, Potential::Harmonic, 1.0, 1.0);
                        c.sampling.density = density;
                        c.samples = 1 << log_n;
                        c.seed = 100 + log_n as u64;
                        cases.push(ScenarioCase {
                            label: format!("D={dim} density={} N={}", density_label(density), c.samples),
                            config: c,
                        });
                    }
                }
            }
        }
        Scenario::HarmonicD5 => {
            let mut c = base_config(5, 1.0, Potential::Harmonic, 1.0, 1.0);
            c.observables = ["Id", "q1", "p1", "V", "T", "H"].map(String::from).to_vec();
            c.samples = 1 << 12;
            c.time = TimeConfig {
                t_final: 2.0 * std::f64::consts::PI,
                step: 2.0 * std::f64::consts::PI / 256.0,
                save_stride: 8,
            };
            cases.push(ScenarioCase {
                label: "D=5 density=sqrt-husimi".into(),
                config: c,
            });
        }
        Scenario::HenonHeiles => {
            let sigma = 1.0 / 80f64.sqrt();
            for scale in [1.0, 2.3] {
                for density in [DensityName::SqrtHusimi, DensityName::Optimal] {
                    let mut c = base_config(6, 0.01, Potential::HenonHeiles { sigma }, scale, 0.0);
                    c.observables = ["Id", "q1", "H"].map(String::from).to_vec();
                    c.sampling.density = density;
                    c.samples = 1 << 11;
                    c.repeats = 4;
                    c.intrinsic = true;
                    c.time = TimeConfig {
                        t_final: 40.0,
                        step: 0.2,
                        save_stride: 10,
                    };
                    cases.push(ScenarioCase {
                        label: format!("q0={scale} density={}", density_label(density)),
                        config: c,
                    });
                }
            }
        }
    }
    cases
}

fn oracle(config: &ExperimentConfig, obs: &Observable, t: f64, kind: OracleKind) -> Option<f64> {
    let rc = config.resolve().ok()?;
    let z0 = rc.psi0.center.clone();
    analytic_oracle(&OracleQuery {
        observable: *obs,
        t,
        epsilon: config.epsilon,
        z0: &z0,
        potential: config.potential,
        kind,
    })
    .ok()
}

pub fn reproduce_figure(scenario: Scenario, workers: usize) -> Result<Vec<ScenarioRow>> {
    let mut rows = Vec::new();
    for case in scenario_cases(scenario) {
        log::info!("{scenario}: {}", case.label);
        let rc = case.config.resolve()?;
        let out = run_resolved(&rc, workers)?;
        let variance_kind = match case.config.sampling.density {
            DensityName::SqrtHusimi => Some(OracleKind::SqrtHusimiVariance),
            DensityName::Optimal => Some(OracleKind::OptimalVariance),
            DensityName::Husimi => None,
        };
        let energy = total_energy_expectation(&rc.psi0, rc.potential).ok();
        let n_saves = out.times.len();
        for (i, r) in out.table.rows.into_iter().enumerate() {
            let obs = rc.observables[(i / n_saves) % rc.observables.len()];
            let exact = match (obs, rc.potential) {
                (Observable::TotalEnergy(_), _) => energy,
                (_, Potential::Harmonic) => oracle(&case.config, &obs, r.t, OracleKind::Expectation),
                (Observable::Identity, _) => Some(1.0),
                _ => None,
            };
            let variance_exact = match rc.potential {
                Potential::Harmonic => variance_kind.and_then(|k| oracle(&case.config, &obs, r.t, k)),
                _ => None,
            };
            let save = i % n_saves;
            rows.push(ScenarioRow {
                case: case.label.clone(),
                prefactor_mean: Some(out.diagnostics[r.repeat].prefactor_mean[save]),
                repeat: r.repeat,
                observable: r.observable,
                t: r.t,
                estimate_re: r.estimate_re,
                estimate_im: r.estimate_im,
                std_err: r.std_err,
                variance_est: r.variance_est,
                intrinsic_err: r.intrinsic_err,
                acceptance: r.acceptance,
                wall_ms: r.wall_ms,
                exact,
                variance_exact,
            });
        }
    }
    Ok(rows)
}

pub fn write_scenario_rows<W: Write>(rows: &[ScenarioRow], out: W, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::JsonLines => {
            let mut w = std::io::BufWriter::new(out);
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
