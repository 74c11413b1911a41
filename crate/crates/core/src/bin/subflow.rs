//! Command line entry point.
//!
//! Exit codes: 0 converged or all checks passed, 2 time budget exhausted,
//! 3 aborted run or failed check, 4 I/O failure, 64 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use subflow::config::{config_from_table, parse_table, preset_listing, RunConfig};
use subflow::model::{Grid, GroupModel};
use subflow::scenario::{self, threshold_line};
use subflow::Error;

const EXIT_FAILED: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "subflow", version, about = "Horizontal harmonic map heat flow with potential on the Heisenberg nilmanifold")]
struct Cli {
    /// Print the scenario presets and what each one exercises.
    #[arg(long)]
    list_presets: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a flow scenario and write ledger.csv, summary.json and a final checkpoint.
    Run(RunArgs),
    /// Report eta_min and the Hessian threshold eta_min/2.
    Eta {
        #[arg(long, default_value = "heisenberg")]
        model: String,
        #[arg(long, default_value = "6x6x36")]
        grid: String,
        #[arg(long, default_value_t = 16)]
        samples: usize,
    },
    /// Heat kernel symmetry, positivity, mass and semigroup report.
    KernelCheck {
        #[arg(long, default_value = "heisenberg")]
        model: String,
        #[arg(long, default_value = "6x6x36")]
        grid: String,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        times: Vec<f64>,
        #[arg(long, default_value_t = subflow::heatkernel::DEFAULT_NODE_CAP)]
        cap: usize,
    },
    /// Duhamel-Picard iteration and its contraction ratios.
    Picard {
        #[command(flatten)]
        run: RunArgs,
        /// One or more end times.
        #[arg(long, value_delimiter = ',', default_value = "0.005")]
        t: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        q: usize,
        #[arg(long, default_value_t = 7)]
        k_max: usize,
        /// Step counts for the cross-check against the explicit stepper.
        #[arg(long, value_delimiter = ',')]
        compare: Vec<usize>,
    },
    /// Repeat a scenario over halved dt or refined grids and fit the order.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `dt` or `grid`
        #[arg(long, default_value = "dt")]
        kind: String,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Grid sizes n (n x n x n^2) for the grid sweep.
        #[arg(long, value_delimiter = ',', default_value = "3,6,12")]
        sizes: Vec<usize>,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    /// TOML config file; explicit flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// NxMxK
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidGrid(_) | Error::SpectralCap { .. } | Error::InvalidModel(_) => {
                Failure::Usage(e.to_string())
            }
            Error::Io(_) | Error::Format(_) => Failure::Io(e.to_string()),
            other => Failure::Failed(other.to_string()),
        }
    }
}

fn load_config(args: &RunArgs, default_preset: Option<&str>) -> Result<RunConfig, Failure> {
    let mut table = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            parse_table(&text)?
        }
        None => toml::Table::new(),
    };
    if let Some(p) = args.preset.as_deref().or(if args.config.is_none() { default_preset } else { None }) {
        table.insert("preset".into(), Value::String(p.into()));
    }
    if let Some(dt) = args.dt {
        table.insert("dt".into(), Value::Float(dt));
    }
    if let Some(t) = args.t_max {
        table.insert("t_max".into(), Value::Float(t));
    }
    if let Some(g) = &args.grid {
        let grid: Grid = g.parse().map_err(|e: Error| Failure::Usage(format!("--grid: {e}")))?;
        for (k, n) in [("N_x", grid.nx), ("N_y", grid.ny), ("N_z", grid.nz)] {
            table.insert(k.into(), Value::Integer(n as i64));
        }
    }
    if let Some(s) = args.seed {
        table.insert("seed".into(), Value::Integer(s as i64));
    }
    if let Some(o) = &args.out {
        table.insert("out".into(), Value::String(o.display().to_string()));
    }
    Ok(config_from_table(table)?)
}

fn parse_grid(model: &GroupModel, g: &str) -> Result<Grid, Failure> {
    let grid: Grid = g.parse().map_err(|e: Error| Failure::Usage(format!("--grid: {e}")))?;
    model.check_grid(&grid)?;
    Ok(grid)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Io(e.to_string()))
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let config = load_config(args, None)?;
    let prepared = scenario::prepare(&config)?;
    if let Some(p) = &config.preset {
        println!("preset {p}: {}", subflow::config::preset(p)?.exercises);
    }
    println!(
        "model {}  grid {}  target {}  potential {}  dt {:e}",
        config.model,
        config.grid,
        config.target.name(),
        scenario::potential_label(&config.potential),
        prepared.flow.dt
    );
    println!("{}", threshold_line(&prepared.hypotheses));
    if !prepared.hypotheses.nonpositive_curvature {
        println!("target is positively curved: convergence statements do not apply");
    }
    let run = prepared.run()?;
    let art = scenario::write_artifacts(&run, &config.output_dir())?;
    let s = &run.summary;
    println!(
        "outcome {}  t = {}  steps {}  halvings {}  sup|tau| {:e} -> {:e}",
        s.outcome, s.t_final, s.steps, s.halvings, s.initial_sup_tau, s.final_sup_tau
    );
    if let Some(r) = &s.reason {
        println!("reason: {r}");
    }
    for (k, v) in &s.checks {
        println!("check {k}: {}", if *v { "pass" } else { "fail" });
    }
    println!("ledger {}", art.ledger.display());
    println!("summary {}", art.summary.display());
    println!("checkpoint {}.{{bin,json}}", art.checkpoint_stem.display());
    Ok(run.exit_code() as u8)
}

fn cmd_eta(model: &str, grid: &str, samples: usize) -> Result<u8, Failure> {
    let m = GroupModel::by_name(model)?;
    let g = parse_grid(&m, grid)?;
    let r = scenario::eta_report(&m, &g, samples)?;
    println!("model {}", r.model);
    match r.step {
        Some(s) => println!("bracket generating step {s}"),
        None => println!("not bracket generating"),
    }
    println!("eta_min {:?}", r.eta_min);
    println!("threshold eta_min/2 {:?}", r.threshold);
    Ok(0)
}

fn cmd_kernel(model: &str, grid: &str, times: &[f64], cap: usize) -> Result<u8, Failure> {
    let m = GroupModel::by_name(model)?;
    let g = parse_grid(&m, grid)?;
    let r = scenario::kernel_check(&m, &g, times, cap)?;
    println!("{}", to_json(&r)?);
    Ok(if r.kernel.pass { 0 } else { EXIT_FAILED })
}

fn cmd_picard(args: &RunArgs, times: &[f64], q: usize, k_max: usize, compare: &[usize]) -> Result<u8, Failure> {
    let config = load_config(args, Some("sphere-picard"))?;
    let r = scenario::picard_scenario(&config, times, q, k_max, compare)?;
    println!("grid {}  target {}  potential {}  Q {q}", r.grid, r.target, r.potential);
    for p in &r.picard {
        println!("t = {}", p.t);
        for (k, x) in p.cauchy.iter().enumerate() {
            println!("  X_{} = {:e}", k + 1, x);
        }
        for (k, x) in p.ratios.iter().enumerate() {
            println!("  X_{}/X_{} = {:.6}", k + 2, k + 1, x);
        }
        println!("  contracting: {}", p.contracting);
    }
    match r.contraction_threshold {
        Some(t) => println!("largest sampled t with all ratios < 1: {t}"),
        None => println!("no sampled t contracts"),
    }
    for (dt, d) in &r.stepper_comparison {
        println!("stepper dt = {dt:e}: sup |u_step - u_picard| = {d:e}");
    }
    Ok(if r.picard.iter().all(|p| p.contracting) { 0 } else { EXIT_FAILED })
}

fn cmd_sweep(args: &RunArgs, kind: &str, levels: usize, sizes: &[usize]) -> Result<u8, Failure> {
    let config = load_config(args, None)?;
    let r = match kind {
        "dt" => scenario::dt_sweep(&config, levels)?,
        "grid" => scenario::grid_sweep(&config, sizes)?,
        other => return Err(Failure::Usage(format!("--kind {other}: expected dt or grid"))),
    };
    let text = to_json(&r)?;
    println!("{text}");
    if args.out.is_some() || config.out.is_some() {
        let dir = config.output_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(e.to_string()))?;
        std::fs::write(dir.join(format!("sweep-{kind}.json")), text + "\n").map_err(|e| Failure::Io(e.to_string()))?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.list_presets {
        print!("{}", preset_listing());
        return ExitCode::SUCCESS;
    }
    let result = match &cli.command {
        None => {
            eprintln!("no subcommand given; see `subflow --help`");
            Err(Failure::Usage(String::new()))
        }
        Some(Command::Run(a)) => cmd_run(a),
        Some(Command::Eta { model, grid, samples }) => cmd_eta(model, grid, *samples),
        Some(Command::KernelCheck { model, grid, times, cap }) => cmd_kernel(model, grid, times, *cap),
        Some(Command::Picard { run, t, q, k_max, compare }) => cmd_picard(run, t, *q, *k_max, compare),
        Some(Command::Sweep { run, kind, levels, sizes }) => cmd_sweep(run, kind, *levels, sizes),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            if !m.is_empty() {
                eprintln!("error: {m}");
            }
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("I/O error: {m}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
