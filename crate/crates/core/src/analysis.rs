//! Diagnostics: the running-mean mixing statistic `E(n)`, chain interpolants,
//! weak-convergence and acceptance-scaling studies, and invariance checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrators::IntegratorParams;
use crate::sampler::{chain_rng, Chain, ChainTrace, Observable};
use crate::sde::{SdeIntegrator, SdeParams};
use crate::spectral::{PhasePoint, SineTransform};
use crate::stats::{batch_means_std_error, loglog_slope, Moments};
use crate::target::TargetModel;

/// `E = (1/T) ∫₀ᵀ |q(τ)| dτ` for the path with coefficients `q`, by the
/// rectangle rule over the grid (endpoints vanish).
pub fn mean_abs_path(transform: &SineTransform, q: &[f64]) -> Result<f64> {
    let path = transform.synthesize(q)?;
    Ok(path.iter().map(|u| u.abs()).sum::<f64>() / transform.grid() as f64)
}

/// Running average of coefficient vectors. Averaging commutes with synthesis,
/// so the running-mean path is the synthesis of the averaged coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    sum: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(modes: usize) -> Self {
        Self {
            sum: vec![0.0; modes],
            count: 0,
        }
    }

    pub fn push(&mut self, q: &[f64]) {
        self.sum.iter_mut().zip(q).for_each(|(s, x)| *s += x);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sum.iter().map(|s| s / self.count as f64).collect())
    }

    /// `E` of the current running-mean path.
    pub fn e_value(&self, transform: &SineTransform) -> Result<f64> {
        let mean = self.mean().ok_or(Error::Empty("running mean"))?;
        mean_abs_path(transform, &mean)
    }
}

/// Path values of the average of the snapshot positions.
pub fn running_mean_path(transform: &SineTransform, snapshots: &[PhasePoint]) -> Result<Vec<f64>> {
    let mut acc = RunningMean::new(transform.modes());
    for x in snapshots {
        check_len(transform.modes(), x.len())?;
        acc.push(&x.q);
    }
    transform.synthesize(&acc.mean().ok_or(Error::Empty("snapshot list"))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions {
    /// Record `E` each time the cumulative work crosses a multiple of this.
    pub record_every: u64,
    /// MCMC steps excluded from the running mean.
    pub burn_in: usize,
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            burn_in: 0,
        }
    }
}

/// `(n, E(n))` pairs from a densely stored trace, `n` being cumulative
/// integrator work. The first row is `n = 0` with `E` of the initial path.
pub fn e_of_n(
    target: &TargetModel,
    trace: &ChainTrace,
    options: MixingOptions,
) -> Result<Vec<(u64, f64)>> {
    let (first, rest) = trace
        .snapshots
        .split_first()
        .ok_or(Error::Empty("trace snapshots"))?;
    if trace.config.thinning != 1 || rest.len() != trace.records.len() {
        return Err(Error::invalid("thinning", "E(n) needs every state stored (thinning = 1)"));
    }
    let transform = target.transform();
    let mut curve = vec![(0, mean_abs_path(transform, &first.1.q)?)];
    let mut acc = RunningMean::new(target.modes());
    let mut tracker = Schedule::new(options.record_every);
    for (k, ((_, x), record)) in rest.iter().zip(&trace.records).enumerate() {
        if k >= options.burn_in {
            acc.push(&x.q);
        }
        let points: Vec<u64> = tracker.advance(record.n_steps as u64).collect();
        if !points.is_empty() && acc.count() > 0 {
            let e = acc.e_value(transform)?;
            curve.extend(points.into_iter().map(|n| (n, e)));
        }
    }
    Ok(curve)
}

struct Schedule {
    every: u64,
    work: u64,
    next: u64,
}

impl Schedule {
    fn new(every: u64) -> Self {
        let every = every.max(1);
        Self {
            every,
            work: 0,
            next: every,
        }
    }

    /// Adds work; returns every schedule point crossed. Each is assigned the
    /// first state whose cumulative work reaches it.
    fn advance(&mut self, n: u64) -> impl Iterator<Item = u64> {
        self.work += n;
        let first = self.next;
        let last = self.work / self.every * self.every;
        if last >= first {
            self.next = last + self.every;
        }
        (first..=last).step_by(self.every as usize)
    }
}

/// Streams a chain until `work_budget` integrator steps are spent, recording
/// `E` on the schedule without storing states.
pub fn mixing_curve(
    target: &TargetModel,
    params: &IntegratorParams,
    init: PhasePoint,
    seed: u64,
    stream: u64,
    work_budget: u64,
    options: MixingOptions,
) -> Result<Vec<(u64, f64)>> {
    let transform = target.transform();
    let mut curve = vec![(0, mean_abs_path(transform, &init.q)?)];
    let mut chain = Chain::new(target, params.clone(), init, chain_rng(seed, stream))?;
    let mut acc = RunningMean::new(target.modes());
    let mut tracker = Schedule::new(options.record_every);
    while chain.work() < work_budget {
        let outcome = chain.step()?;
        if chain.steps() > options.burn_in {
            acc.push(&chain.state().q);
        }
        let points: Vec<u64> = tracker
            .advance(outcome.n_steps as u64)
            .filter(|n| *n <= work_budget)
            .collect();
        if !points.is_empty() && acc.count() > 0 {
            let e = acc.e_value(transform)?;
            curve.extend(points.into_iter().map(|n| (n, e)));
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub n: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Seed-averaged `E(n)` curve of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub label: String,
    pub seeds: usize,
    pub rows: Vec<MixingRow>,
}

impl MixingReport {
    /// Averages curves over the `n` values common to all of them.
    pub fn from_curves(label: impl Into<String>, curves: &[Vec<(u64, f64)>]) -> Result<Self> {
        let first = curves.first().ok_or(Error::Empty("curve list"))?;
        let rows = first
            .iter()
            .filter_map(|(n, _)| {
                let values: Vec<f64> = curves
                    .iter()
                    .filter_map(|c| {
                        c.binary_search_by_key(n, |(m, _)| *m)
                            .ok()
                            .map(|i| c[i].1)
                    })
                    .collect();
                (values.len() == curves.len()).then(|| MixingRow {
                    n: *n,
                    mean: values.iter().sum::<f64>() / values.len() as f64,
                    min: values.iter().copied().fold(f64::INFINITY, f64::min),
                    max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
            })
            .collect();
        Ok(Self {
            label: label.into(),
            seeds: curves.len(),
            rows,
        })
    }

    /// Mean `E` at work `n`, if recorded.
    pub fn at(&self, n: u64) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.mean)
    }

    /// Smallest recorded `n > 0` with mean `E(n) ≤ threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.n > 0 && r.mean <= threshold)
            .map(|r| r.n)
    }

    /// Mean `E` at `n = 0`.
    pub fn initial(&self) -> Option<f64> {
        self.at(0)
    }
}

/// Piecewise-linear interpolant `z^δ(t)` of states stored at `t_k = kδ`.
pub fn interpolant(states: &[PhasePoint], delta: f64, t: f64) -> Result<PhasePoint> {
    if states.is_empty() {
        return Err(Error::Empty("state list"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let end = (states.len() - 1) as f64 * delta;
    if !(0.0..=end).contains(&t) {
        return Err(Error::OutOfRange { t, end });
    }
    let nearest = (t / delta).round();
    if (t - nearest * delta).abs() <= 1e-12 * delta.max(t) {
        return Ok(states[(nearest as usize).min(states.len() - 1)].clone());
    }
    let k = ((t / delta).floor() as usize).min(states.len() - 2);
    let tk = k as f64 * delta;
    let w = (t - tk) / delta;
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(a, b)| (1.0 - w) * a + w * b).collect()
    };
    let (a, b) = (&states[k], &states[k + 1]);
    Ok(PhasePoint {
        q: mix(&a.q, &b.q),
        v: mix(&a.v, &b.v),
    })
}

/// [`interpolant`] over a dense trace in the `δ = h = τ` regime.
pub fn trace_interpolant(trace: &ChainTrace, t: f64) -> Result<PhasePoint> {
    let params = &trace.config.integrator;
    let delta = params.delta();
    if trace.config.thinning != 1 || trace.snapshots.len() != trace.records.len() + 1 {
        return Err(Error::invalid("thinning", "interpolation needs every state stored"));
    }
    if params.duration() != params.step_size || params.step_size != delta {
        return Err(Error::invalid("delta", "interpolation needs delta = h = tau"));
    }
    let states: Vec<PhasePoint> = trace.snapshots.iter().map(|(_, x)| x.clone()).collect();
    interpolant(&states, delta, t)
}

/// Initial law for trajectories in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartLaw {
    /// Fresh draw of `(q, v)` from `Π₀` for every trajectory.
    Prior,
    Fixed(PhasePoint),
}

impl StartLaw {
    fn draw<R: rand::Rng>(&self, target: &TargetModel, rng: &mut R) -> PhasePoint {
        match self {
            StartLaw::Prior => PhasePoint::sample(target.prior(), rng),
            StartLaw::Fixed(x) => x.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLimitConfig {
    /// Strictly decreasing `δ` values; each run uses `δ = h = τ`.
    pub deltas: Vec<f64>,
    pub horizon: f64,
    pub chains: usize,
    pub reference_dt: f64,
    pub reference_trajectories: usize,
    pub functionals: Vec<Observable>,
    pub start: StartLaw,
}

impl DiffusionLimitConfig {
    /// `f ∈ {⟨q, e₁⟩, ‖q‖², ‖v‖², Ψ(q)}`.
    pub fn default_functionals() -> Vec<Observable> {
        vec![
            Observable::Mode(1),
            Observable::PositionNormSq,
            Observable::VelocityNormSq,
            Observable::Psi,
        ]
    }

    fn validate(&self, modes: usize) -> Result<()> {
        if self.deltas.is_empty() {
            return Err(Error::invalid("deltas", "ladder is empty"));
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("deltas", "entries must be positive"));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("deltas", "ladder must be strictly decreasing"));
        }
        if self.chains == 0 {
            return Err(Error::invalid("chains", "need at least one trajectory per level"));
        }
        if self.reference_trajectories == 0 {
            return Err(Error::invalid("reference_trajectories", "need at least one trajectory"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if self.functionals.is_empty() {
            return Err(Error::invalid("functionals", "nothing to estimate"));
        }
        if let StartLaw::Fixed(x) = &self.start {
            check_len(modes, x.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl From<&Moments> for Estimate {
    fn from(m: &Moments) -> Self {
        Self {
            mean: m.mean(),
            std_error: m.std_error(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLevel {
    pub delta: f64,
    pub steps: usize,
    pub acceptance_rate: f64,
    /// One estimate per functional, in configuration order.
    pub estimates: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLimitReport {
    pub functionals: Vec<Observable>,
    pub levels: Vec<LimitLevel>,
    pub reference: Vec<Estimate>,
    pub chains: usize,
    pub reference_trajectories: usize,
}

impl DiffusionLimitReport {
    /// Chain minus reference estimate, and the combined standard error.
    pub fn gap(&self, level: usize, functional: usize) -> (f64, f64) {
        let e = self.levels[level].estimates[functional];
        let r = self.reference[functional];
        (
            e.mean - r.mean,
            (e.std_error.powi(2) + r.std_error.powi(2)).sqrt(),
        )
    }

    /// Whether `|gap|` does not grow down the ladder beyond `k` combined
    /// standard errors. `None` for a single-level ladder.
    pub fn nonincreasing(&self, functional: usize, k: f64) -> Option<bool> {
        if self.levels.len() < 2 {
            return None;
        }
        Some((1..self.levels.len()).all(|i| {
            let (coarse, se_c) = self.gap(i - 1, functional);
            let (fine, se_f) = self.gap(i, functional);
            fine.abs() <= coarse.abs() + k * (se_c * se_c + se_f * se_f).sqrt()
        }))
    }

    /// Whether the finest level's gap is within `k` combined standard errors of 0.
    pub fn finest_consistent(&self, functional: usize, k: f64) -> bool {
        let (gap, se) = self.gap(self.levels.len() - 1, functional);
        gap.abs() <= k * se
    }
}

/// Compares terminal-time functionals of the chain interpolant at `δ = h = τ`
/// with the limiting SDE (`Γ₁ = 0`, `Γ₂ = I`) integrated at a fine step.
pub fn diffusion_limit_study(
    target: &TargetModel,
    config: &DiffusionLimitConfig,
    seed: u64,
) -> Result<DiffusionLimitReport> {
    config.validate(target.modes())?;
    let nf = config.functionals.len();
    let eval = |x: &PhasePoint| -> Vec<f64> {
        config.functionals.iter().map(|f| f.evaluate(target, x)).collect()
    };

    let sde = SdeIntegrator::new(
        target,
        SdeParams::langevin(target.modes(), config.reference_dt, config.horizon),
    )?;
    let reference_runs: Vec<Vec<f64>> = (0..config.reference_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = chain_rng(seed, i as u64);
            let x0 = config.start.draw(target, &mut rng);
            sde.terminal(&x0, &mut rng).map(|x| eval(&x))
        })
        .collect::<Result<_>>()?;
    let reference = summarize(&reference_runs, nf);

    let mut levels = Vec::with_capacity(config.deltas.len());
    for (l, &delta) in config.deltas.iter().enumerate() {
        let steps = (config.horizon / delta).round() as usize;
        let params = IntegratorParams::diffusion_limit(delta);
        let runs: Vec<(Vec<f64>, usize)> = (0..config.chains)
            .into_par_iter()
            .map(|i| {
                let stream = ((l as u64 + 1) << 32) | i as u64;
                let mut rng = chain_rng(seed, stream);
                let x0 = config.start.draw(target, &mut rng);
                let mut chain = Chain::new(target, params.clone(), x0, rng)?;
                let mut accepted = 0;
                for _ in 0..steps {
                    accepted += chain.step()?.accepted as usize;
                }
                Ok((eval(chain.state()), accepted))
            })
            .collect::<Result<_>>()?;
        let accepted: usize = runs.iter().map(|(_, a)| a).sum();
        let values: Vec<Vec<f64>> = runs.into_iter().map(|(v, _)| v).collect();
        levels.push(LimitLevel {
            delta,
            steps,
            acceptance_rate: accepted as f64 / (steps * config.chains).max(1) as f64,
            estimates: summarize(&values, nf),
        });
    }
    Ok(DiffusionLimitReport {
        functionals: config.functionals.clone(),
        levels,
        reference,
        chains: config.chains,
        reference_trajectories: config.reference_trajectories,
    })
}

fn summarize(runs: &[Vec<f64>], nf: usize) -> Vec<Estimate> {
    (0..nf)
        .map(|f| Estimate::from(&runs.iter().map(|r| r[f]).collect::<Moments>()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingLevel {
    pub delta: f64,
    /// Mean of `1 - α` over the measured steps.
    pub mean_rejection: f64,
    /// Batch-means standard error of `mean_rejection`.
    pub std_error: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub levels: Vec<ScalingLevel>,
    /// Log–log slope of mean rejection against `δ`; absent for fewer than two
    /// levels or when some level never rejects.
    pub slope: Option<f64>,
}

/// Mean rejection probability `E[1 - α]` at each `δ` of the ladder, in the
/// `δ = h = τ` regime, after `burn_in` warm-up steps from a `Π₀` draw.
pub fn acceptance_scaling_study(
    target: &TargetModel,
    deltas: &[f64],
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if deltas.is_empty() {
        return Err(Error::invalid("deltas", "ladder is empty"));
    }
    if steps == 0 {
        return Err(Error::invalid("steps", "need at least one measured step"));
    }
    let levels: Vec<ScalingLevel> = deltas
        .par_iter()
        .enumerate()
        .map(|(l, &delta)| {
            let params = IntegratorParams::diffusion_limit(delta);
            let mut chain = Chain::from_prior(target, params, chain_rng(seed, l as u64))?;
            for _ in 0..burn_in {
                chain.step()?;
            }
            let mut rejection = Vec::with_capacity(steps);
            let mut accepted = 0usize;
            for _ in 0..steps {
                let o = chain.step()?;
                rejection.push(1.0 - o.alpha);
                accepted += o.accepted as usize;
            }
            Ok(ScalingLevel {
                delta,
                mean_rejection: rejection.iter().sum::<f64>() / steps as f64,
                std_error: batch_means_std_error(&rejection, 20),
                acceptance_rate: accepted as f64 / steps as f64,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = levels.iter().map(|l| l.delta).collect();
    let ys: Vec<f64> = levels.iter().map(|l| l.mean_rejection).collect();
    let slope = loglog_slope(&xs, &ys);
    Ok(ScalingReport { levels, slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeVariance {
    /// 1-based mode index.
    pub mode: usize,
    /// `λ_j²`.
    pub prior_variance: f64,
    pub position_variance: f64,
    pub velocity_variance: f64,
}

impl ModeVariance {
    pub fn position_ratio(&self) -> f64 {
        self.position_variance / self.prior_variance
    }

    pub fn velocity_ratio(&self) -> f64 {
        self.velocity_variance / self.prior_variance
    }
}

struct ModeAccumulator {
    q: Vec<Moments>,
    v: Vec<Moments>,
}

impl ModeAccumulator {
    fn new(modes: usize) -> Self {
        Self {
            q: vec![Moments::new(); modes],
            v: vec![Moments::new(); modes],
        }
    }

    fn push(&mut self, x: &PhasePoint) {
        for (m, a) in self.q.iter_mut().zip(&x.q) {
            m.push(*a);
        }
        for (m, a) in self.v.iter_mut().zip(&x.v) {
            m.push(*a);
        }
    }

    fn table(&self, target: &TargetModel) -> Vec<ModeVariance> {
        self.q
            .iter()
            .zip(&self.v)
            .zip(target.prior().eigenvalues())
            .enumerate()
            .map(|(j, ((q, v), l))| ModeVariance {
                mode: j + 1,
                prior_variance: l * l,
                position_variance: q.variance(),
                velocity_variance: v.variance(),
            })
            .collect()
    }
}

/// Empirical variances of `q_j` and `v_j`, `j ≤ modes`, along one chain
/// started from `Π₀`, after `burn_in` steps.
pub fn chain_mode_variances(
    target: &TargetModel,
    params: &IntegratorParams,
    steps: usize,
    burn_in: usize,
    modes: usize,
    seed: u64,
) -> Result<Vec<ModeVariance>> {
    if steps < 2 {
        return Err(Error::invalid("steps", "need at least two measured steps"));
    }
    let mut chain = Chain::from_prior(target, params.clone(), chain_rng(seed, 0))?;
    for _ in 0..burn_in {
        chain.step()?;
    }
    let mut acc = ModeAccumulator::new(modes.min(target.modes()));
    for _ in 0..steps {
        chain.step()?;
        acc.push(chain.state());
    }
    Ok(acc.table(target))
}

/// Time-averaged variances of `q_j` and `v_j` along one SDE path started from
/// `Π₀`, sampled every step after time `burn_in`.
pub fn sde_mode_variances(
    target: &TargetModel,
    params: &SdeParams,
    burn_in: f64,
    modes: usize,
    seed: u64,
) -> Result<Vec<ModeVariance>> {
    let sde = SdeIntegrator::new(target, params.clone())?;
    let skip = (burn_in / params.dt).ceil() as usize;
    if skip + 2 > params.steps() {
        return Err(Error::invalid("burn_in", "leaves fewer than two samples"));
    }
    let mut rng = chain_rng(seed, 0);
    let mut x = PhasePoint::sample(target.prior(), &mut rng);
    let mut acc = ModeAccumulator::new(modes.min(target.modes()));
    for k in 1..=params.steps() {
        sde.step(&mut x, &mut rng);
        if !x.is_finite() {
            return Err(Error::NonFinite { what: "sde state", step: k });
        }
        if k > skip {
            acc.push(&x);
        }
    }
    Ok(acc.table(target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{run_chain, SamplerConfig};
    use crate::spectral::SpectralPrior;
    use std::f64::consts::PI;

    fn gaussian(t: f64, n: usize) -> TargetModel {
        TargetModel::gaussian(SpectralPrior::brownian_bridge(t, n).unwrap(), 4 * n).unwrap()
    }

    #[test]
    fn e_of_first_mode_matches_closed_form() {
        let t = 100.0;
        let target = gaussian(t, 8);
        let c = 2.5;
        let mut q = vec![0.0; 8];
        q[0] = c;
        // (1/T) ∫₀ᵀ c √(2/T) |sin(πτ/T)| dτ = c √(2/T) · 2/π
        let exact = c * (2.0 / t).sqrt() * 2.0 / PI;
        let fine = SineTransform::new(t, 8, 1 << 14).unwrap();
        assert!((mean_abs_path(&fine, &q).unwrap() - exact).abs() < 1e-7);
        let coarse = mean_abs_path(target.transform(), &q).unwrap();
        assert!((coarse - exact).abs() / exact < 1e-2);

        let snaps = vec![PhasePoint { q: q.clone(), v: vec![0.0; 8] }; 3];
        let path = running_mean_path(target.transform(), &snaps).unwrap();
        assert_eq!(path, target.transform().synthesize(&q).unwrap());
    }

    #[test]
    fn symmetric_pairs_cancel() {
        let target = gaussian(10.0, 8);
        let mut acc = RunningMean::new(8);
        let mut rng = chain_rng(1, 0);
        for _ in 0..3 {
            let q = target.prior().sample(&mut rng);
            let neg: Vec<f64> = q.iter().map(|x| -x).collect();
            acc.push(&q);
            acc.push(&neg);
            assert!(acc.e_value(target.transform()).unwrap() < 1e-14);
        }
        let mut zero = RunningMean::new(8);
        assert!(zero.e_value(target.transform()).is_err());
        zero.push(&[0.0; 8]);
        assert_eq!(zero.e_value(target.transform()).unwrap(), 0.0);
    }

    #[test]
    fn e_of_n_from_trace_follows_work() {
        let target = gaussian(10.0, 8);
        let mut config = SamplerConfig::new(IntegratorParams::with_iota(0.1, 5, 0.5), 20, 2);
        config.thinning = 1;
        let trace = run_chain(&target, &config, None, chain_rng(2, 0)).unwrap();
        let curve = e_of_n(
            &target,
            &trace,
            MixingOptions {
                record_every: 10,
                burn_in: 0,
            },
        )
        .unwrap();
        let ns: Vec<u64> = curve.iter().map(|(n, _)| *n).collect();
        assert_eq!(ns, (0..=10).map(|k| 10 * k).collect::<Vec<_>>());
        assert!(curve.iter().all(|(_, e)| *e >= 0.0));

        let streamed = mixing_curve(
            &target,
            &config.integrator,
            trace.snapshots[0].1.clone(),
            2,
            0,
            100,
            MixingOptions {
                record_every: 10,
                burn_in: 0,
            },
        )
        .unwrap();
        assert_eq!(streamed.len(), curve.len());

        config.thinning = 2;
        let sparse = run_chain(&target, &config, None, chain_rng(2, 0)).unwrap();
        assert!(e_of_n(&target, &sparse, MixingOptions::default()).is_err());
    }

    #[test]
    fn schedule_assigns_skipped_points() {
        let mut s = Schedule::new(50);
        assert_eq!(s.advance(30).count(), 0);
        assert_eq!(s.advance(75).collect::<Vec<_>>(), [50, 100]);
        assert_eq!(s.advance(10).count(), 0);
        assert_eq!(s.advance(35).collect::<Vec<_>>(), [150]);
    }

    #[test]
    fn averaging_curves() {
        let a = vec![(0, 1.0), (10, 0.5), (20, 0.2)];
        let b = vec![(0, 3.0), (10, 0.1), (20, 0.4)];
        let r = MixingReport::from_curves("m", &[a, b]).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.initial(), Some(2.0));
        assert_eq!(r.rows[1].min, 0.1);
        assert_eq!(r.rows[1].max, 0.5);
        assert_eq!(r.first_below(0.3), Some(10));
        assert_eq!(r.first_below(0.01), None);
    }

    #[test]
    fn interpolant_knots_and_midpoints() {
        let states: Vec<PhasePoint> = (0..4)
            .map(|k| PhasePoint {
                q: vec![k as f64, 2.0 * k as f64],
                v: vec![-(k as f64), 0.5],
            })
            .collect();
        let d = 0.1;
        for (k, s) in states.iter().enumerate() {
            assert_eq!(&interpolant(&states, d, k as f64 * d).unwrap(), s);
        }
        let mid = interpolant(&states, d, 0.15).unwrap();
        assert!((mid.q[0] - 1.5).abs() < 1e-12 && (mid.q[1] - 3.0).abs() < 1e-12);
        // affine between knots
        let at = |t: f64| interpolant(&states, d, t).unwrap().q[1];
        let (a, b, c) = (at(0.21), at(0.24), at(0.27));
        assert!(((b - a) - (c - b)).abs() < 1e-12);
        assert!(matches!(interpolant(&states, d, 0.31), Err(Error::OutOfRange { .. })));
        assert!(interpolant(&states, d, -0.01).is_err());
    }

    #[test]
    fn trace_interpolant_requires_diffusion_regime() {
        let target = gaussian(10.0, 4);
        let mut config = SamplerConfig::new(IntegratorParams::diffusion_limit(0.1), 10, 1);
        config.thinning = 1;
        let trace = run_chain(&target, &config, None, chain_rng(1, 0)).unwrap();
        assert_eq!(trace_interpolant(&trace, 0.3).unwrap(), trace.snapshots[3].1);
        config.integrator = IntegratorParams::with_iota(0.1, 2, 0.5);
        let other = run_chain(&target, &config, None, chain_rng(1, 0)).unwrap();
        assert!(trace_interpolant(&other, 0.3).is_err());
    }

    #[test]
    fn gaussian_never_rejects_at_any_delta() {
        let target = gaussian(10.0, 8);
        let r = acceptance_scaling_study(&target, &[0.2, 0.1], 200, 10, 3).unwrap();
        assert!(r.levels.iter().all(|l| l.mean_rejection == 0.0 && l.acceptance_rate == 1.0));
        assert!(r.slope.is_none());
    }

    #[test]
    fn single_level_ladder_has_no_slope() {
        let target =
            TargetModel::double_well(SpectralPrior::brownian_bridge(10.0, 8).unwrap(), 32).unwrap();
        let r = acceptance_scaling_study(&target, &[0.1], 200, 20, 3).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert!(r.slope.is_none());
        assert!(r.levels[0].mean_rejection > 0.0);
    }

    #[test]
    fn study_validation() {
        let target = gaussian(10.0, 4);
        let mut config = DiffusionLimitConfig {
            deltas: vec![0.2, 0.1],
            horizon: 1.0,
            chains: 0,
            reference_dt: 0.01,
            reference_trajectories: 10,
            functionals: DiffusionLimitConfig::default_functionals(),
            start: StartLaw::Prior,
        };
        assert!(matches!(
            diffusion_limit_study(&target, &config, 1),
            Err(Error::Invalid { key: "chains", .. })
        ));
        config.chains = 4;
        config.deltas = vec![0.1, 0.2];
        assert!(diffusion_limit_study(&target, &config, 1).is_err());
        config.deltas = vec![0.2];
        let report = diffusion_limit_study(&target, &config, 1).unwrap();
        assert_eq!(report.nonincreasing(0, 3.0), None);
        assert!(acceptance_scaling_study(&target, &[], 10, 0, 1).is_err());
    }
}
