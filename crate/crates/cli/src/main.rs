use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use cabm_cli::config::{ExperimentConfig, Grid, Model, Sign, SpinSpec, Task, Weight};
use cabm_cli::output::{write_outputs, Summary};
use cabm_cli::suites::Suite;
use cabm_cli::{tasks, CliError, ConfigError, EXIT_VALIDATION_FAILED};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cabm", version, about = "Pfaffian kernels and simulations for annihilating and coalescing Brownian motions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, env = "CABM_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory for `<task>.csv` and `summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Progress on stderr.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct SimFlags {
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ConventionFlags {
    #[arg(long, value_enum)]
    delta_weight: Option<Weight>,
    #[arg(long, value_enum)]
    spin_sign: Option<Sign>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the task named in a configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Pfaffian and determinant of a skew-symmetric matrix read from CSV.
    Pfaffian {
        matrix: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate `K(t, 0; s, z)` on a grid of `z`.
    KernelTable {
        #[arg(long)]
        t: Option<f64>,
        /// Second time; the equal-time kernel when omitted.
        #[arg(long)]
        s: Option<f64>,
        /// `start:stop:step`
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<Grid>,
        #[arg(long, value_enum)]
        model: Option<Model>,
        #[command(flatten)]
        conv: ConventionFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Predicted intensity for points `t,z` and optional spins.
    Intensity {
        /// Intensity point `t,z`; repeatable.
        #[arg(long = "point", value_parser = parse_point, allow_hyphen_values = true)]
        points: Vec<[f64; 2]>,
        #[arg(long)]
        spin_time: Option<f64>,
        /// Comma-separated spin locations.
        #[arg(long, value_delimiter = ',', requires = "spin_time", allow_hyphen_values = true)]
        spins: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        model: Option<Model>,
        #[command(flatten)]
        conv: ConventionFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate an ensemble and dump snapshots as `replica,time,position`.
    Simulate {
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Run validation suites against simulation and quadrature oracles.
    Validate {
        #[arg(long = "suite", value_enum)]
        suites: Vec<Suite>,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        conv: ConventionFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Richardson ratios of heat-equation residuals.
    HeatCheck {
        /// Space step; the ratio compares `h` with `h/2`.
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        conv: ConventionFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Face-reduction residuals of spin correlations.
    FaceCheck {
        #[command(flatten)]
        conv: ConventionFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Two-time integrals over shrinking squares near the diagonal.
    EpsilonScaling {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Comma-separated square widths.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        delta_weight: Option<Weight>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (t, z) = s.split_once(',').ok_or_else(|| format!("expected t,z, got '{s}'"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    Ok([p(t)?, p(z)?])
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Common {
    fn base(&self) -> Result<ExperimentConfig, ConfigError> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.replicas, self.replicas);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
    }
}

impl SimFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.model, self.model);
        set(&mut cfg.lambda, self.lambda);
        set(&mut cfg.half_width, self.half_width);
        if self.margin.is_some() {
            cfg.margin = self.margin;
        }
        set(&mut cfg.dt, self.dt);
        set(&mut cfg.snapshot_times, self.times);
    }
}

impl ConventionFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.delta_weight, self.delta_weight);
        set(&mut cfg.spin_sign, self.spin_sign);
    }
}

/// Resolves the task and configuration: file, then flags.
fn resolve(command: Command) -> Result<(Task, ExperimentConfig, bool), ConfigError> {
    let (task, cfg, overrides) = match command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config)?;
            let task = cfg
                .task
                .ok_or_else(|| ConfigError::invalid("task", "required by `run`"))?;
            (task, cfg, overrides)
        }
        Command::Pfaffian { matrix, common } => {
            let mut cfg = common.base()?;
            cfg.matrix = Some(matrix);
            (Task::Pfaffian, cfg, common.overrides)
        }
        Command::KernelTable {
            t,
            s,
            grid,
            model,
            conv,
            common,
        } => {
            let mut cfg = common.base()?;
            set(&mut cfg.kernel.t, t);
            if s.is_some() {
                cfg.kernel.s = s;
            }
            set(&mut cfg.kernel.grid, grid);
            set(&mut cfg.model, model);
            conv.apply(&mut cfg);
            (Task::KernelTable, cfg, common.overrides)
        }
        Command::Intensity {
            points,
            spin_time,
            spins,
            model,
            conv,
            common,
        } => {
            let mut cfg = common.base()?;
            if !points.is_empty() {
                cfg.points = points;
            }
            if let (Some(t), Some(ys)) = (spin_time, spins) {
                cfg.spins = Some(SpinSpec { t, ys });
            }
            set(&mut cfg.model, model);
            conv.apply(&mut cfg);
            (Task::Intensity, cfg, common.overrides)
        }
        Command::Simulate { sim, common } => {
            let mut cfg = common.base()?;
            sim.apply(&mut cfg);
            (Task::Simulate, cfg, common.overrides)
        }
        Command::Validate {
            suites,
            sim,
            conv,
            common,
        } => {
            let mut cfg = common.base()?;
            if !suites.is_empty() {
                cfg.suites = suites;
            }
            sim.apply(&mut cfg);
            conv.apply(&mut cfg);
            (Task::Validate, cfg, common.overrides)
        }
        Command::HeatCheck { h, conv, common } => {
            let mut cfg = common.base()?;
            set(&mut cfg.heat_step, h);
            conv.apply(&mut cfg);
            (Task::HeatCheck, cfg, common.overrides)
        }
        Command::FaceCheck { conv, common } => {
            let mut cfg = common.base()?;
            conv.apply(&mut cfg);
            (Task::FaceCheck, cfg, common.overrides)
        }
        Command::EpsilonScaling {
            s,
            t,
            z,
            widths,
            delta_weight,
            common,
        } => {
            let mut cfg = common.base()?;
            set(&mut cfg.epsilon.s, s);
            set(&mut cfg.epsilon.t, t);
            set(&mut cfg.epsilon.z, z);
            set(&mut cfg.epsilon.widths, widths);
            set(&mut cfg.delta_weight, delta_weight);
            (Task::EpsilonScaling, cfg, common.overrides)
        }
    };
    let mut cfg = cfg;
    overrides.apply(&mut cfg);
    cfg.task = Some(task);
    Ok((task, cfg, overrides.verbose))
}

fn run(command: Command) -> Result<bool, CliError> {
    let start = Instant::now();
    let (task, cfg, verbose) = resolve(command)?;
    let output = tasks::execute(task, &cfg, verbose)?;
    let csv = output.table.to_csv()?;
    let summary = Summary {
        task: task.name(),
        version: env!("CARGO_PKG_VERSION"),
        pass: output.pass,
        runtime_seconds: start.elapsed().as_secs_f64(),
        config: &cfg,
        data_file: cfg.out.as_ref().map(|d| d.join(format!("{}.csv", task.name()))),
        result: &output.result,
    };
    let mut stdout = std::io::stdout().lock();
    let io_err = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    match &cfg.out {
        Some(dir) => {
            write_outputs(dir, task.name(), &csv, &summary)?;
            if verbose {
                eprintln!("wrote {}", dir.display());
            }
        }
        None if task == Task::Validate => {
            serde_json::to_writer_pretty(&mut stdout, &summary)?;
            writeln!(stdout).map_err(io_err)?;
        }
        None => stdout.write_all(&csv).map_err(io_err)?,
    }
    Ok(output.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed");
            ExitCode::from(EXIT_VALIDATION_FAILED as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
