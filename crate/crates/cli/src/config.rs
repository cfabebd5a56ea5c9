//! Run configuration: per-command defaults, overlaid by a TOML file (or the
//! `config` block of an earlier manifest), overlaid by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use solhmc::analysis::{DiffusionLimitConfig, StartLaw};
use solhmc::experiments::FigureScale;
use solhmc::integrators::{IntegratorParams, TrajectoryLength};
use solhmc::sampler::{Observable, PresetOverrides, SamplerConfig};
use solhmc::{SpectralPrior, TargetModel};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Sample,
    Fig1,
    Fig2,
    DiffusionLimit,
    Scaling,
    Invariance,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Sample => "sample",
            CommandKind::Fig1 => "fig1",
            CommandKind::Fig2 => "fig2",
            CommandKind::DiffusionLimit => "diffusion-limit",
            CommandKind::Scaling => "scaling",
            CommandKind::Invariance => "invariance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub prior: PriorSection,
    pub target: TargetSection,
    pub sampler: SamplerSection,
    pub run: RunSection,
    pub study: StudySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub interval_length: f64,
    pub modes: usize,
    pub grid: usize,
    pub sobolev_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub preset: String,
    pub step_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// `[min, max]` for a trajectory length drawn uniformly each step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iota: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub observables: Vec<String>,
    pub thinning: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub iterations: usize,
    pub seed: u64,
    pub seeds: usize,
    pub burn_in: usize,
    pub work_budget: u64,
    pub record_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub deltas: Vec<f64>,
    pub horizon: f64,
    pub chains: usize,
    pub reference_dt: f64,
    pub reference_trajectories: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub modes: usize,
    pub sde_dt: f64,
    pub sde_t_final: f64,
    pub sde_burn_in: f64,
}

/// Flags that override configuration values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub full: bool,
}

impl Config {
    pub fn defaults(kind: CommandKind, full: bool) -> Self {
        let mut c = Config {
            prior: PriorSection {
                interval_length: 100.0,
                modes: 128,
                grid: 512,
                sobolev_index: 0.0,
            },
            target: TargetSection {
                label: "double-well".into(),
            },
            sampler: SamplerSection {
                preset: "sol-hmc".into(),
                step_size: 0.02,
                n_steps: None,
                n_steps_range: None,
                iota: None,
                delta: None,
                observables: ["q1", "q_norm2", "v_norm2", "psi", "midpoint"]
                    .map(String::from)
                    .to_vec(),
                thinning: 0,
            },
            run: RunSection {
                iterations: 1000,
                seed: 0,
                seeds: 8,
                burn_in: 0,
                work_budget: 200_000,
                record_every: 50,
            },
            study: StudySection {
                deltas: vec![0.2, 0.1, 0.05, 0.025],
                horizon: 5.0,
                chains: 2000,
                reference_dt: 2e-3,
                reference_trajectories: 8000,
                steps: 10_000,
                burn_in: 1000,
                modes: 10,
                sde_dt: 1e-2,
                sde_t_final: 1e4,
                sde_burn_in: 10.0,
            },
        };
        match kind {
            CommandKind::Sample => {}
            CommandKind::Fig1 | CommandKind::Fig2 => {
                c.run.work_budget = if kind == CommandKind::Fig1 { 200_000 } else { 100_000 };
                if full {
                    c.prior.modes = 256;
                    c.prior.grid = 1024;
                    c.run.work_budget *= 10;
                }
            }
            CommandKind::DiffusionLimit => {
                c.prior = PriorSection {
                    interval_length: 5.0,
                    modes: 32,
                    grid: 128,
                    sobolev_index: 0.0,
                };
            }
            CommandKind::Scaling => {
                c.prior = PriorSection {
                    interval_length: 5.0,
                    modes: 64,
                    grid: 256,
                    sobolev_index: 0.0,
                };
            }
            CommandKind::Invariance => {
                c.target.label = "gaussian".into();
                c.sampler.iota = Some(0.5);
                c.run.iterations = 200_000;
                c.run.burn_in = 20_000;
            }
        }
        c
    }

    /// Defaults for `kind`, overlaid by the file at `path` (if any) and the flags.
    pub fn load(kind: CommandKind, path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let defaults = Self::defaults(kind, flags.full);
        let mut config = match path {
            None => defaults,
            Some(path) => {
                let user = read_table(path)?;
                let mut base = serde_json::to_value(&defaults)
                    .map_err(|e| CliError::Config(format!("internal defaults: {e}")))?;
                clear_exclusive(&mut base, &user);
                merge(&mut base, user);
                serde_json::from_value::<Config>(base)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
        };
        if let Some(seed) = flags.seed {
            config.run.seed = seed;
        }
        if let Some(seeds) = flags.seeds {
            config.run.seeds = seeds;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let s = &self.sampler;
        if s.iota.is_some() && s.delta.is_some() {
            return Err(CliError::key("sampler.delta", "give either sampler.iota or sampler.delta, not both"));
        }
        if s.n_steps.is_some() && s.n_steps_range.is_some() {
            return Err(CliError::key(
                "sampler.n_steps_range",
                "give either sampler.n_steps or sampler.n_steps_range, not both",
            ));
        }
        if self.run.seeds == 0 {
            return Err(CliError::key("run.seeds", "need at least one seed"));
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<SpectralPrior, CliError> {
        SpectralPrior::brownian_bridge(self.prior.interval_length, self.prior.modes)
            .and_then(|p| p.with_sobolev_index(self.prior.sobolev_index))
            .map_err(|e| CliError::section("prior", e))
    }

    pub fn target(&self) -> Result<TargetModel, CliError> {
        TargetModel::from_label(&self.target.label, self.prior()?, self.prior.grid)
            .map_err(|e| CliError::section("target", e))
    }

    pub fn integrator(&self) -> Result<IntegratorParams, CliError> {
        let s = &self.sampler;
        let n_steps = match (s.n_steps, s.n_steps_range) {
            (Some(n), _) => Some(TrajectoryLength::Fixed(n)),
            (None, Some([min, max])) => Some(TrajectoryLength::Uniform { min, max }),
            (None, None) => None,
        };
        let overrides = PresetOverrides {
            step_size: Some(s.step_size),
            iota: s.iota,
            delta: s.delta,
            n_steps,
        };
        let params = solhmc::sampler::preset(&s.preset, &overrides)
            .map_err(|e| CliError::section("sampler", e))?;
        params
            .validate(self.prior.modes)
            .map_err(|e| CliError::section("sampler", e))?;
        Ok(params)
    }

    pub fn observables(&self) -> Result<Vec<Observable>, CliError> {
        self.sampler
            .observables
            .iter()
            .map(|o| o.parse().map_err(|e| CliError::section("sampler", e)))
            .collect()
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, CliError> {
        let mut c = SamplerConfig::new(self.integrator()?, self.run.iterations, self.run.seed);
        c.observables = self.observables()?;
        c.thinning = self.sampler.thinning;
        c.validate(self.prior.modes)
            .map_err(|e| CliError::section("sampler", e))?;
        Ok(c)
    }

    pub fn figure_scale(&self) -> FigureScale {
        FigureScale {
            interval_length: self.prior.interval_length,
            modes: self.prior.modes,
            grid: self.prior.grid,
            seeds: self.run.seeds,
            work_budget: self.run.work_budget,
            record_every: self.run.record_every,
            burn_in: self.run.burn_in,
            step_size: self.sampler.step_size,
        }
    }

    pub fn diffusion_limit(&self) -> DiffusionLimitConfig {
        DiffusionLimitConfig {
            deltas: self.study.deltas.clone(),
            horizon: self.study.horizon,
            chains: self.study.chains,
            reference_dt: self.study.reference_dt,
            reference_trajectories: self.study.reference_trajectories,
            functionals: DiffusionLimitConfig::default_functionals(),
            start: StartLaw::Prior,
        }
    }
}

fn read_table(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let mut value = if is_json {
        serde_json::from_str::<Value>(&text).map_err(|e| bad(&e))?
    } else {
        let table = text.parse::<toml::Table>().map_err(|e| bad(&e))?;
        serde_json::to_value(table).map_err(|e| bad(&e))?
    };
    // a manifest carries its configuration under `config`
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    if !value.is_object() {
        return Err(CliError::Config(format!("{}: expected a table of sections", path.display())));
    }
    Ok(value)
}

/// Drops default keys that would conflict with mutually exclusive user keys.
fn clear_exclusive(base: &mut Value, user: &Value) {
    let Some(user_sampler) = user.get("sampler").and_then(Value::as_object) else {
        return;
    };
    let Some(sampler) = base.get_mut("sampler").and_then(Value::as_object_mut) else {
        return;
    };
    for group in [["iota", "delta"], ["n_steps", "n_steps_range"]] {
        if group.iter().any(|k| user_sampler.contains_key(*k)) {
            for k in group {
                sampler.remove(k);
            }
        }
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}
