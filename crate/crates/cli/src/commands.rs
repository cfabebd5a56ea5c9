use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use solhmc::analysis::{
    acceptance_scaling_study, chain_mode_variances, diffusion_limit_study, sde_mode_variances,
    MixingReport,
};
use solhmc::experiments::{fig1_methods, fig2_methods, run_mixing, MixingMethod};
use solhmc::sampler::{chain_rng, run_chain};
use solhmc::sde::SdeParams;

use crate::config::{CommandKind, Config};
use crate::error::CliError;
use crate::output::{
    sibling_manifest, unix_now, write_atomic, write_manifest, Cell, Manifest, Resolved, Table,
};

struct Clock {
    start: Instant,
    unix: u64,
}

impl Clock {
    fn start() -> Self {
        Self {
            start: Instant::now(),
            unix: unix_now(),
        }
    }
}

fn manifest<'a>(
    kind: CommandKind,
    config: &'a Config,
    clock: &Clock,
    resolved: Vec<(String, Resolved)>,
    outputs: Vec<String>,
    summary: Option<serde_json::Value>,
) -> Manifest<'a> {
    Manifest {
        command: kind.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.run.seed,
        config,
        resolved,
        started_unix: clock.unix,
        wall_clock_seconds: clock.start.elapsed().as_secs_f64(),
        outputs,
        summary,
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn sample(config: &Config, out: &Path) -> Result<(), CliError> {
    let clock = Clock::start();
    let target = config.target()?;
    let sampler = config.sampler_config()?;
    let (trace, abort) = match run_chain(&target, &sampler, None, chain_rng(sampler.seed, 0)) {
        Ok(trace) => (trace, None),
        Err(a) => (*a.partial, Some(a.error)),
    };

    let mut header = vec!["step".to_string(), "accepted".into(), "delta_H".into()];
    header.extend(sampler.observables.iter().map(|o| o.to_string()));
    let mut table = Table::new(header);
    for (i, r) in trace.records.iter().enumerate() {
        let mut row = vec![Cell::from(i + 1), Cell::Int(r.accepted as u64), Cell::Real(r.delta_h)];
        row.extend(r.observables.iter().map(|x| Cell::Real(*x)));
        table.push(row);
    }
    write_atomic(out, &table.to_bytes())?;
    let mut outputs = vec![file_name(out)];

    if !trace.snapshots.is_empty() {
        let n = target.modes();
        let mut header = vec!["step".to_string()];
        header.extend((1..=n).map(|j| format!("q{j}")));
        header.extend((1..=n).map(|j| format!("v{j}")));
        let mut snaps = Table::new(header);
        for (step, x) in &trace.snapshots {
            let mut row = vec![Cell::from(*step)];
            row.extend(x.q.iter().chain(&x.v).map(|a| Cell::Real(*a)));
            snaps.push(row);
        }
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let path = out.with_file_name(format!("{stem}.snapshots.csv"));
        write_atomic(&path, &snaps.to_bytes())?;
        outputs.push(file_name(&path));
    }

    let summary = json!({
        "steps": trace.records.len(),
        "acceptance_rate": trace.acceptance_rate(),
        "work": trace.work(),
        "aborted": abort.as_ref().map(|e| e.to_string()),
    });
    let resolved = vec![("sampler".to_string(), Resolved::from_params(&sampler.integrator))];
    write_manifest(
        &sibling_manifest(out),
        &manifest(CommandKind::Sample, config, &clock, resolved, outputs, Some(summary)),
    )?;
    match abort {
        Some(e) => Err(CliError::Numerical(format!(
            "{e}; partial trace of {} steps written",
            trace.records.len()
        ))),
        None => Ok(()),
    }
}

pub fn figure(kind: CommandKind, config: &Config, out: &Path) -> Result<(), CliError> {
    let clock = Clock::start();
    let target = config.target()?;
    let scale = config.figure_scale();
    let methods: Vec<MixingMethod> = match kind {
        CommandKind::Fig1 => fig1_methods(scale.step_size),
        _ => fig2_methods(scale.step_size),
    };
    let reports = run_mixing(&target, &methods, &scale, config.run.seed)?;

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        for r in &reports {
            let path = out.join(format!("{}.csv", r.label));
            write_atomic(&path, &curve_table(r).to_bytes())?;
            written.push(path);
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }

    let summary: serde_json::Map<String, serde_json::Value> = reports
        .iter()
        .map(|r| {
            let e0 = r.initial().unwrap_or(f64::NAN);
            (
                r.label.clone(),
                json!({
                    "E0": e0,
                    "E_final": r.rows.last().map(|x| x.mean),
                    "n_at_tenth_of_E0": r.first_below(0.1 * e0),
                }),
            )
        })
        .collect();
    let resolved = methods
        .iter()
        .map(|m| (m.label.clone(), Resolved::from_params(&m.params)))
        .collect();
    let outputs = written.iter().map(|p| file_name(p)).collect();
    write_manifest(
        &out.join("manifest.json"),
        &manifest(kind, config, &clock, resolved, outputs, Some(summary.into())),
    )
}

fn curve_table(r: &MixingReport) -> Table {
    let mut t = Table::new(["n", "E", "E_min", "E_max"]);
    for row in &r.rows {
        t.push(vec![Cell::Int(row.n), row.mean.into(), row.min.into(), row.max.into()]);
    }
    t
}

pub fn diffusion_limit(config: &Config, out: &Path) -> Result<(), CliError> {
    let clock = Clock::start();
    let target = config.target()?;
    let report = diffusion_limit_study(&target, &config.diffusion_limit(), config.run.seed)
        .map_err(|e| CliError::section("study", e))?;
    let mut t = Table::new([
        "functional",
        "delta",
        "steps",
        "acceptance_rate",
        "chain_mean",
        "chain_se",
        "reference_mean",
        "reference_se",
        "gap",
        "combined_se",
        "convergence",
        "finest_within_3se",
    ]);
    let mut summary = serde_json::Map::new();
    for (f, name) in report.functionals.iter().enumerate() {
        let convergence = match report.nonincreasing(f, 3.0) {
            Some(true) => "yes",
            Some(false) => "no",
            None => "n/a",
        };
        let finest = report.finest_consistent(f, 3.0);
        summary.insert(name.to_string(), json!({ "convergence": convergence, "finest_within_3se": finest }));
        for (l, level) in report.levels.iter().enumerate() {
            let (gap, se) = report.gap(l, f);
            let e = level.estimates[f];
            let r = report.reference[f];
            t.push(vec![
                name.to_string().into(),
                level.delta.into(),
                level.steps.into(),
                level.acceptance_rate.into(),
                e.mean.into(),
                e.std_error.into(),
                r.mean.into(),
                r.std_error.into(),
                gap.into(),
                se.into(),
                convergence.into(),
                finest.to_string().into(),
            ]);
        }
    }
    write_atomic(out, &t.to_bytes())?;
    write_manifest(
        &sibling_manifest(out),
        &manifest(
            CommandKind::DiffusionLimit,
            config,
            &clock,
            Vec::new(),
            vec![file_name(out)],
            Some(summary.into()),
        ),
    )
}

pub fn scaling(config: &Config, out: &Path) -> Result<(), CliError> {
    let clock = Clock::start();
    let target = config.target()?;
    let s = &config.study;
    let report = acceptance_scaling_study(&target, &s.deltas, s.steps, s.burn_in, config.run.seed)
        .map_err(|e| CliError::section("study", e))?;
    let mut t = Table::new(["delta", "mean_rejection", "stderr", "acceptance_rate"]);
    for l in &report.levels {
        t.push(vec![
            l.delta.into(),
            l.mean_rejection.into(),
            l.std_error.into(),
            l.acceptance_rate.into(),
        ]);
    }
    let slope = match report.slope {
        Some(x) => Cell::Real(x),
        None => Cell::from("n/a"),
    };
    t.push(vec!["slope".into(), slope, "".into(), "".into()]);
    write_atomic(out, &t.to_bytes())?;
    write_manifest(
        &sibling_manifest(out),
        &manifest(
            CommandKind::Scaling,
            config,
            &clock,
            Vec::new(),
            vec![file_name(out)],
            Some(json!({ "slope": report.slope })),
        ),
    )
}

pub fn invariance(config: &Config, out: &Path) -> Result<(), CliError> {
    let clock = Clock::start();
    let target = config.target()?;
    let params = config.integrator()?;
    let s = &config.study;
    let seed = config.run.seed;
    let chain = chain_mode_variances(&target, &params, config.run.iterations, config.run.burn_in, s.modes, seed)
        .map_err(|e| CliError::section("run", e))?;
    let sde_params = SdeParams::langevin(target.modes(), s.sde_dt, s.sde_t_final);
    let sde = sde_mode_variances(&target, &sde_params, s.sde_burn_in, s.modes, seed)
        .map_err(|e| CliError::section("study", e))?;
    let mut t = Table::new([
        "mode",
        "prior_variance",
        "chain_q_variance",
        "chain_q_ratio",
        "chain_v_variance",
        "chain_v_ratio",
        "sde_q_variance",
        "sde_q_ratio",
        "sde_v_variance",
        "sde_v_ratio",
    ]);
    for (c, d) in chain.iter().zip(&sde) {
        t.push(vec![
            c.mode.into(),
            c.prior_variance.into(),
            c.position_variance.into(),
            c.position_ratio().into(),
            c.velocity_variance.into(),
            c.velocity_ratio().into(),
            d.position_variance.into(),
            d.position_ratio().into(),
            d.velocity_variance.into(),
            d.velocity_ratio().into(),
        ]);
    }
    write_atomic(out, &t.to_bytes())?;
    let resolved = vec![("sampler".to_string(), Resolved::from_params(&params))];
    write_manifest(
        &sibling_manifest(out),
        &manifest(CommandKind::Invariance, config, &clock, resolved, vec![file_name(out)], None),
    )
}
