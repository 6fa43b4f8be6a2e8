//! Subcommand drivers behind the command-line front end. Each writes its
//! artifacts into a staged directory and commits it with a manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dynamics::{simulate_with, zeta0, Params, ProbeSchedule, State, Stepper, Trajectory};
use crate::energy::{audit_energy_identity, cumulative_dissipation, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{continuum_neumann_eigs, neumann_eigs, Grid};
use crate::ineq::{
    dyadic_rms_ratio, ensemble_embeddings, ensemble_log_hessian_control, ensemble_log_hessian_identity,
    ensemble_poincare, ensemble_quartic_gradient, ensemble_sqrt_identity, quartic_constant,
    check_log_hessian_identity, EnsembleSummary, FieldEnsemble, HFamily,
};
use crate::initial::InitialSpec;
use crate::linearized::{
    decay_check, default_convolution_grid, default_convolution_times, linear_decay_constant,
    semigroup_constant, singular_convolution_check, BlockOperator, LinState, LinearNorm, Sampling,
};
use crate::manifest::{RunLock, Stage, MANIFEST};
use crate::norms::{mean, weber_fechner_check};
use crate::plot::{emit_plot, PlotSpec};
use crate::random::{mean_zero_field, positive_field, sample_rng};
use crate::rates::rate_suite;
use crate::stationary::{stationary_report, NewtonOptions, StationaryProblem};
use crate::sweep::eps_family;
use crate::table::Table;

/// Relative mass drift above which a run counts as broken.
pub const MASS_DRIFT_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Eigs,
    Linearized,
    Stationary,
    Ineq,
    SweepEps,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Eigs => "eigs",
            Command::Linearized => "linearized",
            Command::Stationary => "stationary",
            Command::Ineq => "ineq",
            Command::SweepEps => "sweep-eps",
            Command::Report => "report",
        }
    }

    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Eigs,
        Command::Linearized,
        Command::Stationary,
        Command::Ineq,
        Command::SweepEps,
        Command::Report,
    ];
}

/// Validates `cfg`, locks `out`, runs the subcommand and commits its
/// artifacts to `out/<subcommand>`.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut errs = cfg.problems();
    errs.extend(cfg.generator_problems(cmd.name()));
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let _lock = RunLock::acquire(out)?;
    let mut stage = Stage::new(out, cmd.name())?;
    stage.write("config.toml", cfg.to_toml()?.as_bytes())?;
    match cmd {
        Command::Simulate => simulate_cmd(cfg, &mut stage)?,
        Command::Eigs => eigs_cmd(cfg, &mut stage)?,
        Command::Linearized => linearized_cmd(cfg, &mut stage)?,
        Command::Stationary => stationary_cmd(cfg, &mut stage)?,
        Command::Ineq => ineq_cmd(cfg, &mut stage)?,
        Command::SweepEps => sweep_cmd(cfg, &mut stage)?,
        Command::Report => report_cmd(cfg, out, &mut stage)?,
    }
    stage.commit(cfg.run.seed, &cfg.hash()?)
}

/// Initial state, and the checkpoint when the preset restarts from one.
pub fn initial_state(cfg: &RunConfig) -> Result<(State, Option<Checkpoint>)> {
    let grid = cfg.domain.grid()?;
    match &cfg.initial {
        InitialSpec::Checkpoint { path } => {
            let ck = Checkpoint::read(Path::new(path))?;
            if ck.header.grid != grid {
                return Err(Error::Config(vec![format!(
                    "checkpoint grid {:?} differs from domain {:?}",
                    ck.header.grid.cells(),
                    grid.cells()
                )]));
            }
            Ok((ck.state.clone(), Some(ck)))
        }
        spec => Ok((spec.build(&grid, cfg.run.seed)?, None)),
    }
}

fn write_table(stage: &mut Stage, name: &str, t: &Table) -> Result<()> {
    stage.write(name, &t.to_csv_bytes()?)
}

fn plot(stage: &mut Stage, enabled: bool, file: &str, t: &Table, cols: &[&str], spec: &PlotSpec) -> Result<()> {
    if !enabled {
        return Ok(());
    }
    // on a log axis, identically zero series (a constant state) are left out
    let mut keep = Vec::new();
    for c in cols {
        if !spec.log_y || t.column(c)?.iter().any(|v| v.is_finite() && *v > 0.0) {
            keep.push(*c);
        }
    }
    if keep.is_empty() {
        return Ok(());
    }
    emit_plot(t, "t", &keep, spec, &stage.dir().join(file))?;
    stage.register(file)
}

const TRAJ_COLUMNS: [&str; 15] = [
    "t", "dt", "mass", "c_mean", "rho_min", "rho_max", "c_min", "rho_dev_linf", "rho_dev_l2",
    "grad_c_linf", "c_dev_linf", "triple_rho", "triple_grad_c", "triple_c", "decay_rate",
];

fn trajectory_table(tr: &Trajectory) -> Result<Table> {
    let mut t = Table::new(TRAJ_COLUMNS);
    for r in &tr.records {
        t.push(vec![
            r.t,
            r.dt,
            r.mass,
            r.c_mean,
            r.rho_min,
            r.rho_max,
            r.c_min,
            r.rho_dev_linf,
            r.rho_dev_l2,
            r.grad_c_linf,
            r.c_dev_linf,
            r.triple.rho_dev,
            r.triple.grad_c,
            r.triple.c_dev,
            r.decay_rate.unwrap_or(f64::NAN),
        ])?;
    }
    Ok(t)
}

fn energy_table(reports: &[EnergyReport]) -> Result<Table> {
    let cum = cumulative_dissipation(reports);
    let mut t = Table::new([
        "t", "energy", "d1", "d2", "d3", "d4", "d1_plain", "boundary", "residual", "dissipation_integral",
    ]);
    for (r, c) in reports.iter().zip(cum) {
        t.push(vec![
            r.t,
            r.energy,
            r.d1,
            r.d2,
            r.d3,
            r.d4,
            r.d1_plain,
            r.boundary,
            r.residual.unwrap_or(f64::NAN),
            c.1,
        ])?;
    }
    Ok(t)
}

fn simulate_cmd(cfg: &RunConfig, stage: &mut Stage) -> Result<()> {
    let (state, ck) = initial_state(cfg)?;
    let grid = *state.grid();
    let p = &cfg.params;
    let params = Params::new(p.chi, p.gamma, p.eps, &state.rho)?;
    let mut stepper = Stepper::new(grid, params, cfg.scheme)?;
    if let Some(ck) = &ck {
        stepper = stepper
            .with_adaptive_state(ck.header.dt_current, ck.header.clean_steps)
            .with_drift(ck.header.drift);
    }
    if cfg.probes.t_end <= state.t {
        return Err(Error::Config(vec![format!(
            "probes.t_end = {} does not exceed the initial time {}",
            cfg.probes.t_end, state.t
        )]));
    }
    let probes = ProbeSchedule {
        every: cfg.probes.every,
        energy: cfg.probes.energy,
        keep_fields: false,
    };
    let tr = simulate_with(stepper.clone(), &state, cfg.probes.t_end, &probes)?;
    let traj = trajectory_table(&tr)?;
    write_table(stage, "trajectory.csv", &traj)?;

    let m0 = tr.records[0].mass;
    let mass_drift = tr
        .records
        .iter()
        .map(|r| ((r.mass - m0) / m0).abs())
        .fold(0.0, f64::max);
    let c0 = tr.records[0].c_mean;
    let mm = params.mass_mean;
    let c_mean_error = tr
        .records
        .iter()
        .map(|r| {
            let s = r.t - tr.records[0].t;
            let exact = c0 * (-s / params.gamma).exp() + mm * (1.0 - (-s / params.gamma).exp());
            ((r.c_mean - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    let lambda1 = grid.lambda1();

    let mut audit_json = json!({ "status": "not requested" });
    if cfg.probes.energy {
        let reports: Vec<EnergyReport> = tr.records.iter().filter_map(|r| r.energy).collect();
        match audit_energy_identity(&tr) {
            Ok(a) => {
                write_table(stage, "energy.csv", &energy_table(&a.reports)?)?;
                audit_json = json!({
                    "status": "checked",
                    "max_residual": a.max_residual,
                    "monotone": a.monotone,
                    "max_increase": a.max_increase,
                    "max_boundary": a.max_boundary,
                });
            }
            Err(e @ (Error::Unsupported(_) | Error::InvalidArgument(_))) => {
                write_table(stage, "energy.csv", &energy_table(&reports)?)?;
                audit_json = json!({ "status": "identity unchecked", "reason": e.to_string() });
            }
            Err(e) => return Err(e),
        }
        let energy = Table::read(&stage.dir().join("energy.csv"))?;
        plot(stage, cfg.output.plots, "energy.svg", &energy, &["energy"], &PlotSpec::linear("Energy", "E"))?;
        plot(
            stage,
            cfg.output.plots,
            "dissipation.svg",
            &energy,
            &["d1", "d2", "d3", "d4"],
            &PlotSpec::linear("Dissipation terms", "D"),
        )?;
    }
    let rates = rate_suite(&tr, lambda1);
    stage.write_json("rates.json", &rates)?;
    plot(
        stage,
        cfg.output.plots,
        "decay.svg",
        &traj,
        &["rho_dev_linf", "grad_c_linf", "c_dev_linf"],
        &PlotSpec::decay("Distance to the constant state", Some(lambda1)),
    )?;
    if cfg.output.checkpoint {
        let st = stepper
            .with_adaptive_state(tr.dt_current, tr.clean_steps)
            .with_drift(tr.drift);
        stage.write("final.ksck", &Checkpoint::new(&tr.final_state, &st).to_bytes()?)?;
    }
    stage.write_json(
        "summary.json",
        &json!({
            "grid": grid,
            "params": params,
            "scheme": cfg.scheme,
            "initial": cfg.initial.name(),
            "zeta0": zeta0(&state.rho),
            "lambda1": lambda1,
            "steps": tr.steps,
            "t_final": tr.final_state.t,
            "mass_drift": mass_drift,
            "c_mean_continuum_error": c_mean_error,
            "min_c": tr.records.iter().map(|r| r.c_min).fold(f64::INFINITY, f64::min),
            "final_drift": tr.drift,
            "energy_audit": audit_json,
            "halted": tr.halted,
        }),
    )?;
    if mass_drift > MASS_DRIFT_LIMIT {
        return Err(Error::Invariant(format!("relative mass drift {mass_drift:e}")));
    }
    tr.ensure_complete()
}

fn eigs_cmd(cfg: &RunConfig, stage: &mut Stage) -> Result<()> {
    let grid = cfg.domain.grid()?;
    let k = grid.len().min(32);
    let disc = neumann_eigs(&grid, k)?;
    let cont = continuum_neumann_eigs(&grid, k)?;
    let mut t = Table::new(["index", "discrete", "continuum"]);
    for i in 0..k {
        t.push(vec![i as f64, disc[i], cont[i]])?;
    }
    write_table(stage, "eigs.csv", &t)?;
    stage.write_json(
        "summary.json",
        &json!({
            "grid": grid,
            "lambda1": grid.lambda1(),
            "lambda1_continuum": grid.lambda1_continuum(),
            "count": k,
        }),
    )
}

fn uniform_times(t_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t_max];
    }
    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
}

#[derive(Serialize)]
struct NamedConstant {
    name: String,
    p: f64,
    q: f64,
    #[serde(flatten)]
    estimate: crate::linearized::ConstantEstimate,
}

fn linearized_cmd(cfg: &RunConfig, stage: &mut Stage) -> Result<()> {
    let (state, _) = initial_state(cfg)?;
    let grid = *state.grid();
    let l = &cfg.linearized;
    let a = l.a.unwrap_or(1.0 - cfg.params.eps * mean(&state.rho));
    let op = BlockOperator::new(grid, a)?;
    let times = uniform_times(l.t_max, l.times);
    let seed = cfg.run.seed;
    let margins = crate::par::map_indexed(l.samples, |i| {
        let u = mean_zero_field(&grid, &l.generator, &mut sample_rng(seed, 2 * i as u64))?;
        let v = mean_zero_field(&grid, &l.generator, &mut sample_rng(seed, 2 * i as u64 + 1))?;
        decay_check(&op, &LinState::new(u, v, 0.0)?, &times)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(["sample", "t", "lhs", "rhs", "margin"]);
    let mut worst = f64::INFINITY;
    for (i, ms) in margins.iter().enumerate() {
        for m in ms {
            t.push(vec![i as f64, m.t, m.lhs, m.rhs, m.margin])?;
            if m.t > 0.0 && m.rhs > 0.0 {
                worst = worst.min(m.margin / m.rhs);
            }
        }
    }
    write_table(stage, "decay.csv", &t)?;
    if cfg.output.plots {
        let mut first = Table::new(["t", "lhs", "rhs"]);
        for m in &margins[0] {
            first.push(vec![m.t, m.lhs, m.rhs])?;
        }
        plot(stage, true, "decay.svg", &first, &["lhs", "rhs"], &PlotSpec::decay("Linearized decay, sample 0", None))?;
    }
    let sampling = Sampling {
        samples: l.semigroup_samples,
        seed,
        generator: l.generator,
        ..Sampling::default()
    };
    let mut constants = Vec::new();
    for r in &l.semigroup {
        constants.push(NamedConstant {
            name: format!("semigroup_{:?}", r.item).to_lowercase(),
            p: r.p,
            q: r.q,
            estimate: semigroup_constant(&grid, r.item, r.p, r.q, &sampling)?,
        });
    }
    let d = grid.dim();
    if d >= 2 {
        let sampling = Sampling {
            t_max: l.t_max,
            ..sampling
        };
        for (name, norm, p) in [
            ("linear_u", LinearNorm::U { p: 2.0 }, 2.0),
            ("linear_grad_v", LinearNorm::GradV { p: 2.0 * d as f64 }, 2.0 * d as f64),
        ] {
            constants.push(NamedConstant {
                name: name.into(),
                p,
                q: f64::NAN,
                estimate: linear_decay_constant(&op, norm, &sampling)?,
            });
        }
    }
    stage.write_json("constants.json", &constants)?;
    let grid_c = if l.convolution.is_empty() {
        default_convolution_grid()
    } else {
        l.convolution.clone()
    };
    let ctimes = if l.convolution_times.is_empty() {
        default_convolution_times()
    } else {
        l.convolution_times.clone()
    };
    let conv = grid_c
        .iter()
        .map(|c| singular_convolution_check(c, &ctimes))
        .collect::<Result<Vec<_>>>()?;
    stage.write_json("convolution.json", &conv)?;
    let conv_worst = conv
        .iter()
        .map(|r| r.sup_ratio / r.coarse_sup_ratio)
        .fold(0.0, f64::max);
    stage.write_json(
        "summary.json",
        &json!({
            "grid": grid,
            "a": a,
            "lambda1": grid.lambda1(),
            "samples": l.samples,
            "min_relative_margin": worst,
            "convolution_max_refined_over_coarse": conv_worst,
            "convolution_sup_ratio": conv.iter().map(|r| r.sup_ratio).fold(0.0, f64::max),
        }),
    )
}

fn stationary_cmd(cfg: &RunConfig, stage: &mut Stage) -> Result<()> {
    let (state, _) = initial_state(cfg)?;
    let grid = *state.grid();
    let m = mean(&state.rho);
    let problem = StationaryProblem::new(grid, m, cfg.params.chi)?;
    let s = &cfg.stationary;
    let opts = NewtonOptions {
        tol: s.tol,
        max_iter: s.max_iter,
        ..NewtonOptions::default()
    };
    let seed = cfg.run.seed;
    let reports = crate::par::map_indexed(s.guesses, |i| {
        let r0 = positive_field(&grid, &s.generator, m, &mut sample_rng(seed, 2 * i as u64))?;
        let c0 = positive_field(&grid, &s.generator, m, &mut sample_rng(seed, 2 * i as u64 + 1))?;
        stationary_report(&problem, &r0, &c0, &opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(["guess", "converged", "iterations", "residual", "distance_to_constant"]);
    for (i, r) in reports.iter().enumerate() {
        t.push(vec![
            i as f64,
            f64::from(u8::from(r.converged)),
            r.iterations as f64,
            r.final_residual,
            r.distance_to_constant,
        ])?;
    }
    write_table(stage, "stationary.csv", &t)?;
    stage.write_json(
        "summary.json",
        &json!({
            "grid": grid,
            "mass_mean": m,
            "chi": cfg.params.chi,
            "guesses": s.guesses,
            "all_converged": reports.iter().all(|r| r.converged),
            "max_distance_to_constant": reports.iter().map(|r| r.distance_to_constant).fold(0.0, f64::max),
            "max_residual": reports.iter().map(|r| r.final_residual).fold(0.0, f64::max),
        }),
    )
}

fn summary_table(s: &EnsembleSummary) -> Result<Table> {
    let mut t = Table::new(["sample", "value"]);
    for (i, v) in s.values.iter().enumerate() {
        t.push(vec![i as f64, *v])?;
    }
    Ok(t)
}

fn ineq_cmd(cfg: &RunConfig, stage: &mut Stage) -> Result<()> {
    let grid = cfg.domain.grid()?;
    let q = &cfg.ineq;
    let ens = FieldEnsemble::new(grid, q.samples, q.generator, cfg.run.seed)?;
    let d = grid.dim();
    let bound = quartic_constant(d) * (1.0 + 5.0 * grid.h_max());
    let mut checks = vec![ensemble_quartic_gradient(&ens, HFamily::Identity)?];
    for &a in &q.powers {
        let mut s = ensemble_quartic_gradient(&ens, HFamily::Power { a })?;
        s.check = format!("quartic_gradient_power_{a}");
        checks.push(s);
    }
    checks.push(ensemble_log_hessian_control(&ens)?);
    checks.push(ensemble_sqrt_identity(&ens)?);
    checks.push(ensemble_log_hessian_identity(&ens)?);
    checks.push(ensemble_poincare(&ens)?);
    if d == 3 {
        let (a, b) = ensemble_embeddings(&ens)?;
        checks.push(a);
        checks.push(b);
    }
    for s in &checks {
        write_table(stage, &format!("ineq_{}.csv", s.check), &summary_table(s)?)?;
    }
    let mut summary = json!({
        "grid": grid,
        "samples": q.samples,
        "seed": cfg.run.seed,
        "quartic_bound": bound,
        "quartic_within_bound": checks[0].sup_ratio <= bound,
        "checks": checks.iter().map(|s| json!({
            "check": s.check,
            "sup_ratio": s.sup_ratio,
            "degenerate_count": s.degenerate_count,
        })).collect::<Vec<_>>(),
    });
    if q.refine {
        let fine = FieldEnsemble::new(grid.refined()?, q.samples, q.generator, cfg.run.seed)?;
        let sqrt_order = dyadic_rms_ratio(&ens, weber_fechner_check)?;
        let ident_order = dyadic_rms_ratio(&ens, |f| Ok(check_log_hessian_identity(f)?.residual))?;
        let control_fine = ensemble_log_hessian_control(&fine)?.sup_ratio;
        summary["refinement"] = json!({
            "sqrt_identity_rms_ratio": sqrt_order,
            "log_hessian_identity_rms_ratio": ident_order,
            "log_hessian_control_fine": control_fine,
        });
    }
    stage.write_json("summary.json", &summary)
}

fn sweep_cmd(cfg: &RunConfig, stage: &mut Stage) -> Result<()> {
    let (state, _) = initial_state(cfg)?;
    let eps = cfg.eps_family(zeta0(&state.rho));
    let fam = eps_family(
        &state,
        cfg.params.chi,
        cfg.params.gamma,
        &eps,
        cfg.sweep.with_zero,
        &cfg.scheme,
        cfg.probes.t_end,
        cfg.sweep.every,
    )?;
    let mut t = Table::new(["member", "eps", "gap_to_next", "gap_to_zero"]);
    for (k, e) in fam.eps.iter().enumerate() {
        t.push(vec![
            k as f64,
            *e,
            fam.gaps.get(k).copied().unwrap_or(f64::NAN),
            fam.gaps_to_zero.as_ref().map_or(f64::NAN, |z| z[k]),
        ])?;
    }
    write_table(stage, "sweep.csv", &t)?;
    stage.write_json("sweep.json", &fam)
}

/// Flattens a JSON object into `key | value` rows.
fn flatten(prefix: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, rows);
            }
        }
        serde_json::Value::Array(xs) if xs.iter().all(|x| !x.is_object()) => {
            let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            rows.push((prefix.to_string(), parts.join(", ")));
        }
        serde_json::Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, rows);
            }
        }
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn report_cmd(cfg: &RunConfig, out: &Path, stage: &mut Stage) -> Result<()> {
    let input = cfg
        .report
        .input
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| out.to_path_buf());
    let mut md = String::from("# Run report\n\n");
    let mut found = 0;
    for cmd in Command::ALL {
        if cmd == Command::Report {
            continue;
        }
        let dir = input.join(cmd.name());
        if !dir.join(MANIFEST).exists() {
            continue;
        }
        found += 1;
        let summary_path = dir.join(if cmd == Command::SweepEps { "sweep.json" } else { "summary.json" });
        let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(&summary_path)?)?;
        let manifest = crate::manifest::read_manifest(&dir)?;
        md.push_str(&format!("## {}\n\nseed {}, config sha256 `{}`\n\n", cmd.name(), manifest.seed, manifest.config_sha256));
        md.push_str("| quantity | value |\n|---|---|\n");
        let mut rows = Vec::new();
        flatten("", &summary, &mut rows);
        for (k, v) in rows {
            md.push_str(&format!("| {k} | {v} |\n"));
        }
        md.push('\n');
        if cmd == Command::Simulate {
            let rates: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("rates.json"))?)?;
            md.push_str("| rate quantity | fitted | reference | verdict |\n|---|---|---|---|\n");
            for r in rates.as_array().into_iter().flatten() {
                md.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    r["quantity"].as_str().unwrap_or(""),
                    r["fit"]["fitted_rate"],
                    r["reference_rate"],
                    r["verdict"].as_str().unwrap_or("")
                ));
            }
            md.push('\n');
            let traj = Table::read(&dir.join("trajectory.csv"))?;
            let lambda1 = summary["lambda1"].as_f64();
            plot(
                stage,
                true,
                "decay.svg",
                &traj,
                &["rho_dev_linf", "c_dev_linf"],
                &PlotSpec::decay("Decay", lambda1),
            )?;
            if stage.dir().join("decay.svg").exists() {
                md.push_str("![decay](decay.svg)\n\n");
            }
            if dir.join("energy.csv").exists() {
                let e = Table::read(&dir.join("energy.csv"))?;
                plot(stage, true, "energy.svg", &e, &["energy"], &PlotSpec::linear("Energy", "E"))?;
                md.push_str("![energy](energy.svg)\n\n");
            }
        }
    }
    if found == 0 {
        return Err(Error::MissingSeries(format!(
            "no completed runs under {}",
            input.display()
        )));
    }
    stage.write("report.md", md.as_bytes())
}

/// Grid of a run config without validation of other sections.
pub fn config_grid(cfg: &RunConfig) -> Result<Grid> {
    cfg.domain.grid()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_toml(text).unwrap()
    }

    const SMALL: &str = "[domain]\ndim = 1\ncells = [32]\n[probes]\nt_end = 0.2\nevery = 0.01\n[initial]\npreset = \"cosine\"\namplitude = 0.3\n";

    #[test]
    fn constant_state_run_is_trivial() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("[domain]\ndim = 2\ncells = [8, 8]\n[probes]\nt_end = 0.05\nevery = 0.01\n[initial]\npreset = \"constant\"\nrho_mean = 2.0\nc_mean = 2.0\n");
        let target = run(Command::Simulate, &c, dir.path()).unwrap();
        let t = Table::read(&target.join("trajectory.csv")).unwrap();
        assert!(t.column("rho_dev_linf").unwrap().iter().all(|v| *v < 1e-13));
        let s: serde_json::Value = serde_json::from_slice(&std::fs::read(target.join("summary.json")).unwrap()).unwrap();
        assert!(s["mass_drift"].as_f64().unwrap() < 1e-14);
        assert!(!dir.path().join(".lock").exists());
    }

    #[test]
    fn simulate_then_report() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(SMALL);
        run(Command::Simulate, &c, dir.path()).unwrap();
        let r = run(Command::Report, &c, dir.path()).unwrap();
        let md = std::fs::read_to_string(r.join("report.md")).unwrap();
        assert!(md.contains("## simulate") && md.contains("rho_dev_linf"));
    }

    #[test]
    fn checkpoint_restart_continues() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(SMALL);
        let first = run(Command::Simulate, &c, dir.path()).unwrap();
        let ck = first.join("final.ksck");
        let text = format!(
            "[domain]\ndim = 1\ncells = [32]\n[probes]\nt_end = 0.4\nevery = 0.01\n[initial]\npreset = \"checkpoint\"\npath = {:?}\n",
            ck.to_str().unwrap()
        );
        let out2 = dir.path().join("second");
        let second = run(Command::Simulate, &cfg(&text), &out2).unwrap();
        let t = Table::read(&second.join("trajectory.csv")).unwrap();
        let ts = t.column("t").unwrap();
        assert!((ts[0] - 0.2).abs() < 1e-12 && (ts[ts.len() - 1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_reports_all_problems() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("[domain]\ndim = 1\ncells = [16]\n[params]\nchi = 0\ngamma = -1\n");
        match run(Command::Simulate, &c, dir.path()) {
            Err(Error::Config(list)) => assert!(list.len() >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unchecked_identity_for_chi_not_one() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(&format!("{SMALL}[params]\nchi = 2.0\n"));
        let target = run(Command::Simulate, &c, dir.path()).unwrap();
        let s: serde_json::Value = serde_json::from_slice(&std::fs::read(target.join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["energy_audit"]["status"], "identity unchecked");
    }
}
