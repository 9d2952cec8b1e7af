//! Task implementations behind the subcommands.

use std::path::Path;

use cabm::intensities::{
    mixed_spin_intensity, multi_time_intensity_with, Configuration, IntensityError, SpinSet,
};
use cabm::simulator::run_ensemble;
use cabm::skewalg::{determinant, pfaffian, SkewMatrix};
use cabm::{ModelKind, SpaceTimePoint};
use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig, Task};
use crate::output::{format_number, RunOutput, Table};
use crate::suites::{self, Check, Suite, SuiteContext, SuiteParams};
use crate::CliError;

pub fn execute(task: Task, cfg: &ExperimentConfig, verbose: bool) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    match task {
        Task::Pfaffian => pfaffian_task(cfg),
        Task::KernelTable => kernel_table(cfg),
        Task::Intensity => intensity(cfg),
        Task::Simulate => simulate(cfg),
        Task::Validate => {
            let list = if cfg.suites.is_empty() {
                Suite::ALL.to_vec()
            } else {
                cfg.suites.clone()
            };
            run_suites(cfg, &list, verbose)
        }
        Task::HeatCheck => run_suites(cfg, &[Suite::Heat], verbose),
        Task::FaceCheck => run_suites(cfg, &[Suite::Face], verbose),
        Task::EpsilonScaling => epsilon_scaling(cfg),
    }
}

/// Reads a square matrix from CSV without a header row.
pub fn read_matrix(path: &Path) -> Result<SkewMatrix, ConfigError> {
    let field = "matrix";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ConfigError::invalid(field, format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ConfigError::invalid(field, e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .map_err(|e| ConfigError::invalid(field, format!("row {}, column {}: '{s}': {e}", i + 1, j + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    SkewMatrix::from_rows(&rows).map_err(|e| ConfigError::invalid(field, e.to_string()))
}

fn pfaffian_task(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let path = cfg
        .matrix
        .as_deref()
        .ok_or_else(|| ConfigError::invalid("matrix", "a matrix CSV path is required"))?;
    let a = read_matrix(path)?;
    let pf = pfaffian(&a);
    let det = determinant(&a);
    let mut table = Table::new(&["dimension", "pfaffian", "determinant"]);
    table.push(vec![a.dim().to_string(), format_number(pf), format_number(det)]);
    Ok(RunOutput {
        table,
        result: json!({ "dimension": a.dim(), "pfaffian": pf, "determinant": det }),
        pass: true,
    })
}

fn kernel_table(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let k = &cfg.kernel;
    let model: ModelKind = cfg.model.into();
    if !(k.t > 0.0 && k.t.is_finite()) {
        return Err(ConfigError::invalid("kernel.t", format!("must be positive, got {}", k.t)).into());
    }
    if let Some(s) = k.s {
        if !(s > 0.0 && s.is_finite()) {
            return Err(ConfigError::invalid("kernel.s", format!("must be positive, got {s}")).into());
        }
    }
    let mut table = Table::new(&["z", "K11", "K12", "K21", "K22"]);
    let zs = k.grid.points();
    for &z in &zs {
        let row = suites::kernel_row(k.t, k.s, z, model, cfg.delta_weight.into())
            .map_err(|e| ConfigError::invalid("kernel", e.to_string()))?;
        table.push_numbers(&[z, row[0], row[1], row[2], row[3]]);
    }
    Ok(RunOutput {
        table,
        result: json!({ "rows": zs.len() }),
        pass: true,
    })
}

fn intensity_error(e: IntensityError) -> CliError {
    let field = match e {
        IntensityError::SpinsNeedAbm => "model",
        IntensityError::SpinsNotIncreasing { .. } | IntensityError::OddSpinCount(_) => "spins",
        _ => "points",
    };
    ConfigError::invalid(field, e.to_string()).into()
}

fn intensity(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model: ModelKind = cfg.model.into();
    let points = cfg
        .points
        .iter()
        .map(|&[t, z]| SpaceTimePoint::new(t, z))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ConfigError::invalid("points", e.to_string()))?;
    let conv = cfg.convention();
    let (quantity, value) = match &cfg.spins {
        Some(spins) => {
            let c = Configuration::new(
                points,
                Some(SpinSet {
                    t: spins.t,
                    ys: spins.ys.clone(),
                }),
                model,
            )
            .map_err(intensity_error)?;
            ("mixed_spin_intensity", mixed_spin_intensity(&c, conv).map_err(intensity_error)?)
        }
        None => {
            if points.is_empty() {
                return Err(ConfigError::invalid("points", "need at least one point or a spin set").into());
            }
            (
                "intensity",
                multi_time_intensity_with(&points, model, conv.delta).map_err(intensity_error)?,
            )
        }
    };
    let mut table = Table::new(&["quantity", "value", "dimension"]);
    table.push(vec![quantity.into(), format_number(value.value), value.dimension.to_string()]);
    Ok(RunOutput {
        table,
        result: json!({ "quantity": quantity, "value": value.value, "dimension": value.dimension }),
        pass: true,
    })
}

/// One CSV row per particle: `replica,time,position`, restricted to the
/// measurement window. Empty snapshots contribute no rows; the per-snapshot
/// counts are in the summary.
fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let sim = cfg.sim_config();
    let ens = run_ensemble(&sim, cfg.replicas).map_err(ConfigError::from)?;
    let mut table = Table::new(&["replica", "time", "position"]);
    let mut mean_counts = vec![0.0; ens.times.len()];
    for (r, snaps) in ens.replicas.iter().enumerate() {
        for (k, s) in snaps.iter().enumerate() {
            mean_counts[k] += s.len() as f64 / ens.len() as f64;
            for &x in &s.positions {
                table.push(vec![r.to_string(), format_number(s.time), format_number(x)]);
            }
        }
    }
    Ok(RunOutput {
        table,
        result: json!({
            "replicas": ens.len(),
            "times": ens.times,
            "mean_count_in_window": mean_counts,
            "window": [-sim.half_width, sim.half_width],
            "margin": sim.margin,
        }),
        pass: true,
    })
}

pub fn checks_table(checks: &[&Check]) -> Table {
    let mut table = Table::new(&["suite", "label", "value", "reference", "stderr", "statistic", "rule", "pass"]);
    for c in checks {
        table.push(vec![
            c.suite.name().into(),
            c.label.clone(),
            format_number(c.value),
            format_number(c.reference),
            c.stderr.map(format_number).unwrap_or_default(),
            format_number(c.statistic),
            c.rule.clone(),
            c.pass.to_string(),
        ]);
    }
    table
}

fn run_suites(cfg: &ExperimentConfig, list: &[Suite], verbose: bool) -> Result<RunOutput, CliError> {
    let mut ctx = SuiteContext::new(SuiteParams::from_config(cfg));
    ctx.verbose = verbose;
    let mut outcomes = Vec::new();
    for &s in list {
        let out = ctx.run(s)?;
        if verbose {
            eprintln!("{} {} ({:.1}s)", if out.pass { "PASS" } else { "FAIL" }, s.name(), out.seconds);
        }
        outcomes.push(out);
    }
    let all: Vec<&Check> = outcomes.iter().flat_map(|o| &o.checks).collect();
    let pass = outcomes.iter().all(|o| o.pass);
    Ok(RunOutput {
        table: checks_table(&all),
        result: json!({ "suites": outcomes }),
        pass,
    })
}

fn epsilon_scaling(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let e = &cfg.epsilon;
    if e.widths.is_empty() || e.widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(ConfigError::invalid("epsilon.widths", "need positive widths").into());
    }
    if !(e.t > e.s && e.s > 0.0) {
        return Err(ConfigError::invalid("epsilon", format!("need t > s > 0, got s={}, t={}", e.s, e.t)).into());
    }
    let (integrals, rho_s, checks) = suites::epsilon_scaling_checks(e, cfg.delta_weight.into())?;
    let mut table = Table::new(&["epsilon", "integral", "integral_over_epsilon_rho_s", "nodes_per_axis"]);
    for (&w, v) in e.widths.iter().zip(&integrals) {
        table.push(vec![
            format_number(w),
            format_number(v.value),
            format_number(v.value / (w * rho_s)),
            v.nodes_per_axis.to_string(),
        ]);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(RunOutput {
        table,
        result: json!({ "rho_s": rho_s, "checks": checks }),
        pass,
    })
}
