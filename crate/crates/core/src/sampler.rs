//! The SOL-HMC Markov chain.
//!
//! One step from `(q, v)`:
//! 1. refresh the velocity with the exact OU map, `v' = e^{-δΓ₂} v + ξ^δ`;
//! 2. integrate `(q*, v*) = χ^h_τ(q, v')`;
//! 3. accept with probability `1 ∧ exp(H(q, v') - H(q*, v*))`;
//! 4. otherwise move to `(q, -v')`.
//!
//! `ι = 1` recovers function-space HMC and, with a single integrator step,
//! function-space MALA.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrators::{self, IntegratorParams, OuRefresh, Refresh, TrajectoryLength};
use crate::spectral::PhasePoint;
use crate::target::{Evaluation, TargetModel};

/// Reproducible per-chain generator: one 64-bit seed, one stream per chain.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Scalar statistic recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    /// Coefficient `q_j`, 1-based.
    Mode(usize),
    /// `‖q‖²` in `H`.
    PositionNormSq,
    /// `‖v‖²` in `H`.
    VelocityNormSq,
    Psi,
    /// Path value at `τ = T/2`.
    Midpoint,
}

impl Observable {
    pub fn evaluate(&self, target: &TargetModel, x: &PhasePoint) -> f64 {
        match *self {
            Observable::Mode(j) => x.q.get(j - 1).copied().unwrap_or(f64::NAN),
            Observable::PositionNormSq => x.q.iter().map(|a| a * a).sum(),
            Observable::VelocityNormSq => x.v.iter().map(|a| a * a).sum(),
            Observable::Psi => target.psi(&x.q).unwrap_or(f64::NAN),
            Observable::Midpoint => {
                let t = target.prior().interval_length();
                // sin(jπ/2) cycles through 1, 0, -1, 0
                let s: f64 = x
                    .q
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % 2 == 0)
                    .map(|(i, q)| if i % 4 == 0 { *q } else { -*q })
                    .sum();
                (2.0 / t).sqrt() * s
            }
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Mode(j) => write!(f, "q{j}"),
            Observable::PositionNormSq => f.write_str("q_norm2"),
            Observable::VelocityNormSq => f.write_str("v_norm2"),
            Observable::Psi => f.write_str("psi"),
            Observable::Midpoint => f.write_str("midpoint"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q_norm2" => Ok(Observable::PositionNormSq),
            "v_norm2" => Ok(Observable::VelocityNormSq),
            "psi" => Ok(Observable::Psi),
            "midpoint" => Ok(Observable::Midpoint),
            _ => s
                .strip_prefix('q')
                .and_then(|j| j.parse::<usize>().ok())
                .filter(|j| *j >= 1)
                .map(Observable::Mode)
                .ok_or_else(|| Error::invalid("observables", format!("unknown observable `{s}`"))),
        }
    }
}

impl Serialize for Observable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Observable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub integrator: IntegratorParams,
    /// Number of MCMC steps `N_M`.
    pub iterations: usize,
    pub seed: u64,
    pub observables: Vec<Observable>,
    /// Store a state snapshot every `thinning` steps; 0 stores none.
    pub thinning: usize,
}

impl SamplerConfig {
    pub fn new(integrator: IntegratorParams, iterations: usize, seed: u64) -> Self {
        Self {
            integrator,
            iterations,
            seed,
            observables: Vec::new(),
            thinning: 0,
        }
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        self.integrator.validate(modes)?;
        if let Some(Observable::Mode(j)) = self
            .observables
            .iter()
            .find(|o| matches!(o, Observable::Mode(j) if *j > modes))
        {
            return Err(Error::invalid(
                "observables",
                format!("q{j} exceeds the {modes} available modes"),
            ));
        }
        Ok(())
    }
}

/// Named parameter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SolHmc,
    Hmc,
    Mala,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sol-hmc" => Ok(Preset::SolHmc),
            "hmc" => Ok(Preset::Hmc),
            "mala" => Ok(Preset::Mala),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset `{other}` (expected sol-hmc, hmc or mala)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOverrides {
    pub step_size: Option<f64>,
    pub iota: Option<f64>,
    pub delta: Option<f64>,
    pub n_steps: Option<TrajectoryLength>,
}

pub const DEFAULT_STEP_SIZE: f64 = 0.02;

impl Preset {
    /// HMC: `ι = 1`, `N_d = round(1/h)`. MALA: `ι = 1`, `N_d = 1`.
    /// SOL-HMC defaults to `ι = 2^{-1/2}`, `N_d = 50`.
    pub fn params(&self, o: &PresetOverrides) -> Result<IntegratorParams> {
        let h = o.step_size.unwrap_or(DEFAULT_STEP_SIZE);
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid("step_size", format!("must be positive, got {h}")));
        }
        let params = match self {
            Preset::Hmc | Preset::Mala => {
                if o.iota.is_some_and(|i| i != 1.0) || o.delta.is_some_and(|d| d != f64::INFINITY) {
                    return Err(Error::invalid("iota", "hmc and mala use a full refresh"));
                }
                let n_steps = match self {
                    Preset::Mala => {
                        if o.n_steps.is_some_and(|n| n != TrajectoryLength::Fixed(1)) {
                            return Err(Error::invalid("n_steps", "mala takes a single step"));
                        }
                        TrajectoryLength::Fixed(1)
                    }
                    _ => o
                        .n_steps
                        .unwrap_or(TrajectoryLength::Fixed(((1.0 / h).round() as usize).max(1))),
                };
                IntegratorParams {
                    step_size: h,
                    n_steps,
                    refresh: Refresh::Iota(1.0),
                }
            }
            Preset::SolHmc => {
                let refresh = match (o.iota, o.delta) {
                    (Some(_), Some(_)) => {
                        return Err(Error::invalid("delta", "give either iota or delta, not both"))
                    }
                    (_, Some(delta)) => Refresh::Delta {
                        delta,
                        gamma2: None,
                    },
                    (iota, None) => Refresh::Iota(iota.unwrap_or(std::f64::consts::FRAC_1_SQRT_2)),
                };
                IntegratorParams {
                    step_size: h,
                    n_steps: o.n_steps.unwrap_or(TrajectoryLength::Fixed(50)),
                    refresh,
                }
            }
        };
        Ok(params)
    }
}

pub fn preset(name: &str, overrides: &PresetOverrides) -> Result<IntegratorParams> {
    name.parse::<Preset>()?.params(overrides)
}

/// The refreshed point and integrated candidate of one step, before the
/// accept/reject decision.
#[derive(Debug, Clone)]
pub struct Proposal {
    /// `(q, v')` after the OU refresh.
    pub refreshed: PhasePoint,
    /// `(q*, v*)`.
    pub candidate: PhasePoint,
    candidate_eval: Evaluation,
    /// `H(q, v') - H(q*, v*)`.
    pub delta_h: f64,
    pub alpha: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub accepted: bool,
    pub delta_h: f64,
    /// Acceptance probability `1 ∧ exp(ΔH)`.
    pub alpha: f64,
    /// Integrator steps spent on the proposal.
    pub n_steps: usize,
}

/// A running SOL-HMC chain that owns its state and random stream.
#[derive(Debug, Clone)]
pub struct Chain<'a, R> {
    target: &'a TargetModel,
    params: IntegratorParams,
    refresh: OuRefresh,
    state: PhasePoint,
    eval: Evaluation,
    rng: R,
    steps: usize,
    work: u64,
}

impl<'a, R: Rng> Chain<'a, R> {
    pub fn new(
        target: &'a TargetModel,
        params: IntegratorParams,
        init: PhasePoint,
        rng: R,
    ) -> Result<Self> {
        check_len(target.modes(), init.len())?;
        let refresh = OuRefresh::new(target.prior(), &params)?;
        let eval = target.evaluate_unchecked(&init.q);
        Ok(Self {
            target,
            params,
            refresh,
            state: init,
            eval,
            rng,
            steps: 0,
            work: 0,
        })
    }

    /// Starts from an independent draw of `(q, v)` from `Π₀`.
    pub fn from_prior(target: &'a TargetModel, params: IntegratorParams, mut rng: R) -> Result<Self> {
        let init = PhasePoint::sample(target.prior(), &mut rng);
        Self::new(target, params, init, rng)
    }

    pub fn state(&self) -> &PhasePoint {
        &self.state
    }

    pub fn target(&self) -> &TargetModel {
        self.target
    }

    pub fn params(&self) -> &IntegratorParams {
        &self.params
    }

    /// MCMC steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Integrator steps spent so far, `n = Σ N_d`, counting rejected proposals.
    pub fn work(&self) -> u64 {
        self.work
    }

    /// Refreshes the velocity and integrates; does not change the chain state.
    pub fn propose(&mut self) -> Proposal {
        let n_steps = self.params.n_steps.draw(&mut self.rng);
        let (refreshed, _) = integrators::theta0(&self.state, &self.refresh, &mut self.rng)
            .expect("state length checked at construction");
        let traj = integrators::integrate(
            self.target,
            refreshed.clone(),
            self.eval.clone(),
            self.params.step_size,
            n_steps,
        );
        let alpha = if traj.delta_h >= 0.0 {
            1.0
        } else {
            traj.delta_h.exp()
        };
        Proposal {
            refreshed,
            candidate: traj.end,
            candidate_eval: traj.end_eval,
            delta_h: traj.delta_h,
            alpha,
            n_steps,
        }
    }

    /// Moves to the candidate, or to `(q, -v')` when `accept` is false.
    pub fn commit(&mut self, proposal: Proposal, accept: bool) -> StepOutcome {
        if accept {
            self.state = proposal.candidate;
            self.eval = proposal.candidate_eval;
        } else {
            self.state = proposal.refreshed.flip_velocity();
        }
        self.steps += 1;
        self.work += proposal.n_steps as u64;
        StepOutcome {
            accepted: accept,
            delta_h: proposal.delta_h,
            alpha: proposal.alpha,
            n_steps: proposal.n_steps,
        }
    }

    /// One full step. Fails without moving if the energy difference is not finite.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let proposal = self.propose();
        if !proposal.delta_h.is_finite() || !proposal.candidate.is_finite() {
            return Err(Error::NonFinite {
                what: "energy difference",
                step: self.steps + 1,
            });
        }
        let u: f64 = self.rng.random();
        let accept = u < proposal.alpha;
        Ok(self.commit(proposal, accept))
    }
}

/// A single SOL-HMC transition from `x`.
pub fn sol_hmc_step<R: Rng>(
    target: &TargetModel,
    x: &PhasePoint,
    params: &IntegratorParams,
    rng: &mut R,
) -> Result<(PhasePoint, StepOutcome)> {
    let mut chain = Chain::new(target, params.clone(), x.clone(), rng)?;
    let outcome = chain.step()?;
    Ok((chain.state, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub accepted: bool,
    pub delta_h: f64,
    pub alpha: f64,
    pub n_steps: usize,
    pub observables: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub config: SamplerConfig,
    pub target: String,
    pub records: Vec<StepRecord>,
    pub accepted: usize,
    /// `(step index, state)` pairs; index 0 is the initial state.
    pub snapshots: Vec<(usize, PhasePoint)>,
}

impl ChainTrace {
    pub fn acceptance_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.accepted as f64 / self.records.len() as f64
        }
    }

    /// Total integrator work `n = Σ N_d`.
    pub fn work(&self) -> u64 {
        self.records.iter().map(|r| r.n_steps as u64).sum()
    }

    /// Values of one observable across the run.
    pub fn series(&self, index: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.observables[index]).collect()
    }
}

/// A run that stopped on a numerical failure, with the steps completed before it.
#[derive(Debug, Clone)]
pub struct ChainAbort {
    pub error: Error,
    pub partial: Box<ChainTrace>,
}

impl fmt::Display for ChainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} completed steps",
            self.error,
            self.partial.records.len()
        )
    }
}

impl std::error::Error for ChainAbort {}

/// Runs `config.iterations` steps from `init`, or from a `Π₀` draw when `init`
/// is `None`. Deterministic for a given generator state.
pub fn run_chain<R: Rng>(
    target: &TargetModel,
    config: &SamplerConfig,
    init: Option<PhasePoint>,
    mut rng: R,
) -> std::result::Result<ChainTrace, ChainAbort> {
    let mut trace = ChainTrace {
        config: config.clone(),
        target: target.label().to_string(),
        records: Vec::with_capacity(config.iterations),
        accepted: 0,
        snapshots: Vec::new(),
    };
    let abort = |error, trace: ChainTrace| ChainAbort {
        error,
        partial: Box::new(trace),
    };
    if let Err(e) = config.validate(target.modes()) {
        return Err(abort(e, trace));
    }
    let init = match init {
        Some(x) => x,
        None => PhasePoint::sample(target.prior(), &mut rng),
    };
    let mut chain = match Chain::new(target, config.integrator.clone(), init, rng) {
        Ok(c) => c,
        Err(e) => return Err(abort(e, trace)),
    };
    if config.thinning > 0 {
        trace.snapshots.push((0, chain.state().clone()));
    }
    for k in 1..=config.iterations {
        let outcome = match chain.step() {
            Ok(o) => o,
            Err(e) => return Err(abort(e, trace)),
        };
        trace.accepted += outcome.accepted as usize;
        let state = chain.state();
        trace.records.push(StepRecord {
            accepted: outcome.accepted,
            delta_h: outcome.delta_h,
            alpha: outcome.alpha,
            n_steps: outcome.n_steps,
            observables: config
                .observables
                .iter()
                .map(|o| o.evaluate(target, state))
                .collect(),
        });
        if config.thinning > 0 && k % config.thinning == 0 {
            trace.snapshots.push((k, state.clone()));
        }
    }
    Ok(trace)
}
