//! Mixing experiments on the double-well bridge: method line-ups for the two
//! `E(n)` comparisons and a multi-seed runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{mixing_curve, MixingOptions, MixingReport};
use crate::error::{Error, Result};
use crate::integrators::{IntegratorParams, TrajectoryLength};
use crate::sampler::chain_rng;
use crate::spectral::{PhasePoint, SpectralPrior};
use crate::target::TargetModel;

/// Problem size and run length of a mixing experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureScale {
    pub interval_length: f64,
    pub modes: usize,
    pub grid: usize,
    pub seeds: usize,
    /// Integrator steps `n` per chain.
    pub work_budget: u64,
    pub record_every: u64,
    pub burn_in: usize,
    pub step_size: f64,
}

impl FigureScale {
    /// Laptop-sized defaults: `N = 128`, `M = 512`, 8 seeds.
    pub fn desk(work_budget: u64) -> Self {
        Self {
            interval_length: 100.0,
            modes: 128,
            grid: 512,
            seeds: 8,
            work_budget,
            record_every: 50,
            burn_in: 0,
            step_size: 0.02,
        }
    }

    pub fn full(work_budget: u64) -> Self {
        Self {
            modes: 256,
            grid: 1024,
            ..Self::desk(work_budget)
        }
    }

    pub fn target(&self) -> Result<TargetModel> {
        let prior = SpectralPrior::brownian_bridge(self.interval_length, self.modes)?;
        TargetModel::double_well(prior, self.grid)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        if self.work_budget == 0 {
            return Err(Error::invalid("work_budget", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMethod {
    pub label: String,
    pub params: IntegratorParams,
}

impl MixingMethod {
    pub fn new(label: impl Into<String>, params: IntegratorParams) -> Self {
        Self {
            label: label.into(),
            params,
        }
    }
}

/// MALA, HMC with `τ ≈ 1`, and single-step SOL-HMC at `ι ∈ {0.9, 0.99, 0.999}`.
pub fn fig1_methods(step_size: f64) -> Vec<MixingMethod> {
    let hmc_steps = ((1.0 / step_size).round() as usize).max(1);
    let mut methods = vec![
        MixingMethod::new("mala", IntegratorParams::with_iota(step_size, 1, 1.0)),
        MixingMethod::new("hmc", IntegratorParams::with_iota(step_size, hmc_steps, 1.0)),
    ];
    for iota in [0.9, 0.99, 0.999] {
        methods.push(MixingMethod::new(
            format!("sol-iota-{iota}"),
            IntegratorParams::with_iota(step_size, 1, iota),
        ));
    }
    methods
}

/// HMC with `τ ≈ 1` and SOL-HMC at `ι = 2^{-1/2}` with `N_d ∈ {10, 25, 50}`
/// and `N_d` uniform on `[25, 75]`.
pub fn fig2_methods(step_size: f64) -> Vec<MixingMethod> {
    let hmc_steps = ((1.0 / step_size).round() as usize).max(1);
    let iota = std::f64::consts::FRAC_1_SQRT_2;
    let mut methods = vec![MixingMethod::new(
        "hmc",
        IntegratorParams::with_iota(step_size, hmc_steps, 1.0),
    )];
    for nd in [10, 25, 50] {
        methods.push(MixingMethod::new(
            format!("sol-nd-{nd}"),
            IntegratorParams::with_iota(step_size, nd, iota),
        ));
    }
    let mut random = IntegratorParams::with_iota(step_size, 50, iota);
    random.n_steps = TrajectoryLength::Uniform { min: 25, max: 75 };
    methods.push(MixingMethod::new("sol-nd-25-75", random));
    methods
}

/// Sine coefficients of the path equal to 1 on the open interval, i.e. the
/// bridge sitting in the positive well.
pub fn well_path(prior: &SpectralPrior) -> Vec<f64> {
    let t = prior.interval_length();
    (1..=prior.len())
        .map(|j| {
            if j % 2 == 1 {
                2.0 * (2.0 * t).sqrt() / (j as f64 * std::f64::consts::PI)
            } else {
                0.0
            }
        })
        .collect()
}

/// Starting state for seed `s`: position in the positive well, velocity
/// drawn from `N(0, C)`. Shared by all methods.
pub fn mixing_start(target: &TargetModel, seed: u64, s: usize) -> PhasePoint {
    let mut rng = chain_rng(seed, s as u64);
    let v = target.prior().sample(&mut rng);
    PhasePoint {
        q: well_path(target.prior()),
        v,
    }
}

/// Seed-averaged `E(n)` curve for every method. Chains for method `k` and
/// seed `s` use stream `(k + 1) << 32 | s`.
pub fn run_mixing(
    target: &TargetModel,
    methods: &[MixingMethod],
    scale: &FigureScale,
    seed: u64,
) -> Result<Vec<MixingReport>> {
    scale.validate()?;
    for m in methods {
        m.params.validate(target.modes())?;
    }
    let options = MixingOptions {
        record_every: scale.record_every,
        burn_in: scale.burn_in,
    };
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|k| (0..scale.seeds).map(move |s| (k, s)))
        .collect();
    let curves: Vec<Vec<(u64, f64)>> = jobs
        .par_iter()
        .map(|&(k, s)| {
            mixing_curve(
                target,
                &methods[k].params,
                mixing_start(target, seed, s),
                seed,
                ((k as u64 + 1) << 32) | s as u64,
                scale.work_budget,
                options,
            )
        })
        .collect::<Result<_>>()?;
    methods
        .iter()
        .zip(curves.chunks(scale.seeds))
        .map(|(m, c)| MixingReport::from_curves(m.label.clone(), c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mean_abs_path;

    #[test]
    fn method_lineups() {
        let f1 = fig1_methods(0.02);
        let labels: Vec<&str> = f1.iter().map(|m| m.label.as_str()).collect();
        assert_eq!(
            labels,
            ["mala", "hmc", "sol-iota-0.9", "sol-iota-0.99", "sol-iota-0.999"]
        );
        assert_eq!(f1[1].params.n_steps, TrajectoryLength::Fixed(50));
        assert!(f1.iter().all(|m| m.params.validate(4).is_ok()));
        let f2 = fig2_methods(0.02);
        assert_eq!(f2.len(), 5);
        assert_eq!(
            f2[4].params.n_steps,
            TrajectoryLength::Uniform { min: 25, max: 75 }
        );
        assert!((f2[1].params.iota().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn well_path_is_near_one_inside() {
        let prior = SpectralPrior::brownian_bridge(100.0, 128).unwrap();
        let transform = prior.transform(512).unwrap();
        let path = transform.synthesize(&well_path(&prior)).unwrap();
        let m = path.len();
        assert!(path[m / 4..3 * m / 4].iter().all(|u| (u - 1.0).abs() < 0.05));
        let e = mean_abs_path(&transform, &well_path(&prior)).unwrap();
        assert!((e - 1.0).abs() < 0.02, "{e}");
    }

    #[test]
    fn runner_is_deterministic() {
        let mut scale = FigureScale::desk(400);
        scale.interval_length = 10.0;
        scale.modes = 16;
        scale.grid = 64;
        scale.seeds = 2;
        let target = scale.target().unwrap();
        let methods = fig2_methods(0.05);
        let a = run_mixing(&target, &methods, &scale, 11).unwrap();
        let b = run_mixing(&target, &methods, &scale, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), methods.len());
        for r in &a {
            assert_eq!(r.seeds, 2);
            assert!(r.rows.windows(2).all(|w| w[0].n < w[1].n));
            assert!(r.rows.iter().all(|row| row.min <= row.mean && row.mean <= row.max));
        }
        scale.seeds = 0;
        assert!(run_mixing(&target, &methods, &scale, 11).is_err());
    }
}
