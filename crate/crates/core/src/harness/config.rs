use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::TimeGrid;
use crate::error::{config_err, HkError, Result};
use crate::phasespace::{GaussianWavepacket, Observable, PhaseSpacePoint, SimConfig, WidthMatrix};
use crate::potential::Potential;
use crate::sampling::{DensityKind, DensitySpec, HmcParams};

pub const MAX_SAMPLES: usize = 1 << 20;
pub const MAX_DIM: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    /// Diagonal of Γ; defaults to ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityName {
    Husimi,
    SqrtHusimi,
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    Direct,
    Hmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default = "default_leapfrog")]
    pub n_leapfrog: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_leapfrog() -> usize {
    10
}

fn default_burn_in() -> usize {
    1000
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            n_leapfrog: default_leapfrog(),
            burn_in: default_burn_in(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub density: DensityName,
    /// Target observable label for the optimal density; defaults to `Id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
    /// Defaults to `direct` where a direct sampler exists, `hmc` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerChoice>,
    #[serde(default)]
    pub hmc: HmcConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Crude,
    Wis { numerator: DensityName },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub step: f64,
    #[serde(default = "one")]
    pub save_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowUpPolicy {
    #[default]
    Abort,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub epsilon: f64,
    pub potential: Potential,
    pub psi0: InitialState,
    pub observables: Vec<String>,
    pub sampling: SamplingConfig,
    pub estimator: EstimatorConfig,
    pub samples: usize,
    pub time: TimeConfig,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also run 2N samples on a disjoint seed stream and report |A_N − A_2N|.
    #[serde(default)]
    pub intrinsic: bool,
    #[serde(default)]
    pub blow_up: BlowUpPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Lifts the desk-scale caps on N and D.
    #[serde(default)]
    pub allow_large: bool,
}

/// Fully validated pipeline parameters.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub psi0: GaussianWavepacket,
    pub potential: Potential,
    pub observables: Vec<Observable>,
    pub sampling: DensitySpec,
    pub sampler: SamplerChoice,
    pub hmc: Option<HmcParams>,
    /// Normalized numerator density for WIS; `None` for crude estimation.
    pub numerator: Option<DensitySpec>,
    pub samples: usize,
    pub grid: TimeGrid,
    pub repeats: usize,
    pub seed: u64,
    pub intrinsic: bool,
    pub blow_up: BlowUpPolicy,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(json_key(&e), e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        fn wrap(key: &str) -> impl Fn(HkError) -> HkError + '_ {
            move |e| config_err(key, e.to_string())
        }
        let sim = SimConfig::new(self.dim, self.epsilon).map_err(wrap("dim/epsilon"))?;
        if !self.allow_large && self.dim > MAX_DIM {
            return Err(config_err(
                "dim",
                format!("{} exceeds the desk-scale cap {MAX_DIM}; set allow_large", self.dim),
            ));
        }
        self.potential.validate().map_err(wrap("potential"))?;
        if self.psi0.q0.len() != self.dim {
            return Err(config_err("psi0.q0", format!("expected {} entries", self.dim)));
        }
        if self.psi0.p0.len() != self.dim {
            return Err(config_err("psi0.p0", format!("expected {} entries", self.dim)));
        }
        let center =
            PhaseSpacePoint::new(self.psi0.q0.clone(), self.psi0.p0.clone()).map_err(wrap("psi0"))?;
        let width = match &self.psi0.gamma {
            None => WidthMatrix::identity(self.dim),
            Some(g) if g.len() != self.dim => {
                return Err(config_err("psi0.gamma", format!("expected {} entries", self.dim)))
            }
            Some(g) => WidthMatrix::diagonal(g.clone()).map_err(wrap("psi0.gamma"))?,
        };
        let psi0 = GaussianWavepacket::new(center, width, sim).map_err(wrap("psi0"))?;

        if self.observables.is_empty() {
            return Err(config_err("observables", "at least one observable is required"));
        }
        let mut observables = Vec::with_capacity(self.observables.len());
        for (i, label) in self.observables.iter().enumerate() {
            let key = format!("observables[{i}]");
            let obs = Observable::parse(label, self.potential).map_err(wrap(&key))?;
            obs.validate(self.dim).map_err(wrap(&key))?;
            observables.push(obs);
        }

        let density = |name: DensityName, key: &str| -> Result<DensityKind> {
            Ok(match name {
                DensityName::Husimi => DensityKind::HusimiDouble,
                DensityName::SqrtHusimi => DensityKind::SqrtHusimiDouble,
                DensityName::Optimal => {
                    let label = self.sampling.observable.as_deref().unwrap_or("Id");
                    let obs = Observable::parse(label, self.potential).map_err(wrap(key))?;
                    DensityKind::Optimal(obs)
                }
            })
        };
        let kind = density(self.sampling.density, "sampling.observable")?;
        let sampling = DensitySpec::new(kind, psi0.clone()).map_err(wrap("sampling"))?;
        let direct_ok = !matches!(kind, DensityKind::Optimal(o) if o != Observable::Identity);
        let sampler = match self.sampling.sampler {
            Some(SamplerChoice::Direct) if !direct_ok => {
                return Err(config_err(
                    "sampling.sampler",
                    format!("no direct sampler for {kind}; use hmc"),
                ))
            }
            Some(SamplerChoice::Hmc) if !matches!(kind, DensityKind::Optimal(_)) => {
                return Err(config_err("sampling.sampler", "hmc samples optimal densities only"))
            }
            Some(s) => s,
            None if direct_ok => SamplerChoice::Direct,
            None => SamplerChoice::Hmc,
        };
        let hmc = match sampler {
            SamplerChoice::Direct => None,
            SamplerChoice::Hmc => {
                if !psi0.width.is_identity() {
                    return Err(config_err("psi0.gamma", "hmc needs the identity width matrix"));
                }
                let h = &self.sampling.hmc;
                let step = h.step_size.unwrap_or(0.1 * self.epsilon.sqrt());
                Some(HmcParams::new(step, h.n_leapfrog, h.burn_in).map_err(wrap("sampling.hmc"))?)
            }
        };

        let numerator = match &self.estimator {
            EstimatorConfig::Crude => {
                if sampling.log_normalizer().is_none() {
                    return Err(config_err(
                        "estimator",
                        format!("crude estimation needs a normalized density; {kind} is not; use wis"),
                    ));
                }
                None
            }
            EstimatorConfig::Wis { numerator } => {
                let nk = density(*numerator, "estimator.numerator")?;
                let spec = DensitySpec::new(nk, psi0.clone()).map_err(wrap("estimator.numerator"))?;
                if spec.log_normalizer().is_none() {
                    return Err(config_err(
                        "estimator.numerator",
                        "the WIS numerator density must be normalized",
                    ));
                }
                Some(spec)
            }
        };

        if self.samples < 2 {
            return Err(config_err("samples", "N must be >= 2"));
        }
        if !self.allow_large && self.samples > MAX_SAMPLES {
            return Err(config_err(
                "samples",
                format!("{} exceeds the desk-scale cap {MAX_SAMPLES}; set allow_large", self.samples),
            ));
        }
        if self.repeats == 0 {
            return Err(config_err("repeats", "R must be >= 1"));
        }
        let grid = TimeGrid::new(self.time.t_final, self.time.step, self.time.save_stride)
            .map_err(wrap("time"))?;

        Ok(ResolvedConfig {
            psi0,
            potential: self.potential,
            observables,
            sampling,
            sampler,
            hmc,
            numerator,
            samples: self.samples,
            grid,
            repeats: self.repeats,
            seed: self.seed,
            intrinsic: self.intrinsic,
            blow_up: self.blow_up,
        })
    }
}

/// Best-effort name of the offending key in a serde_json error message.
fn json_key(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    format!("line {} column {}", e.line(), e.column())
}
