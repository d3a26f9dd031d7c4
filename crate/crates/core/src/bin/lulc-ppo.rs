use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use lulc_ppo::checkpoint::Checkpoint;
use lulc_ppo::config::RunConfig;
use lulc_ppo::eval::{comparison_report, emit_reports, run_greedy};
use lulc_ppo::fsio::write_atomic;
use lulc_ppo::manifest::{RunManifest, MANIFEST_FILE};
use lulc_ppo::ppo::{stats_csv, Trainer};
use lulc_ppo::raster::{format_frozen_mask, format_grid};
use lulc_ppo::runoff::{compute_runoff, runoff_from_histogram, LulcClass};
use lulc_ppo::scenario::{apply_scenario, builtin_scenario, builtin_scenarios, residual_priority, Scenario};
use lulc_ppo::seed_grid::make_seed_grid;
use lulc_ppo::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Train and evaluate a PPO agent that edits land cover to reduce runoff.
///
/// Exit codes: 0 success, 1 configuration or usage error, 2 runtime or
/// checkpoint error, 3 infeasible scenario.
#[derive(Parser, Debug)]
#[command(name = "lulc-ppo", version)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Parallel rollout workers (1 is bit-for-bit deterministic).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Override the number of PPO updates.
    #[arg(long, global = true, value_name = "N")]
    updates: Option<u64>,

    /// Episode length for `train`; greedy sweep length for `evaluate`.
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train actor and critic; writes checkpoint.json, stats.csv, manifest.json.
    Train,
    /// Greedy sweep with a trained checkpoint and the runoff comparison.
    Evaluate {
        /// Defaults to `<out>/checkpoint.json`.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Apply a built-in scenario (s1..s5) or a scenario CSV to the grid.
    Scenario {
        /// `s1`..`s5` or a path to a `class_name,delta` file.
        id: String,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
    /// Write the bundled 25x40 grid and its frozen mask.
    MakeSeedGrid,
}

struct Failure {
    code: u8,
    error: Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T> ExitWith<T> for lulc_ppo::Result<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|error| {
            let code = match error {
                Error::InfeasibleScenario { .. } => EXIT_INFEASIBLE,
                _ => code,
            };
            Failure { code, error }
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LULC_PPO_LOG", "info"))
        .format_timestamp_millis()
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common) -> lulc_ppo::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = common.workers {
        cfg.ppo.workers = w;
    }
    if let Some(n) = common.updates {
        cfg.ppo.total_updates = n;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.common).exit_with(EXIT_CONFIG)?;
    match cli.command {
        Command::Train => {
            if let Some(steps) = cli.common.steps {
                cfg.env.steps_per_episode = Some(steps);
            }
            train(&cfg)
        }
        Command::Evaluate { checkpoint } => evaluate(&cfg, checkpoint, cli.common.steps),
        Command::Scenario { id } => scenario(&cfg, &id),
        Command::PrintConfig => {
            cfg.validate().exit_with(EXIT_CONFIG)?;
            let explicit = cfg.with_explicit_coefficients().exit_with(EXIT_CONFIG)?;
            print!("{}", explicit.to_toml());
            Ok(())
        }
        Command::MakeSeedGrid => make_seed_grid_files(&cfg.out_dir),
    }
}

fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let started = Utc::now();
    let run = cfg.resolve().exit_with(EXIT_CONFIG)?;
    let mut trainer = Trainer::new(run.grid, run.table, cfg.env.clone(), cfg.ppo.clone(), cfg.seed)
        .exit_with(EXIT_CONFIG)?;

    let out = &cfg.out_dir;
    let checkpoint_path = out.join("checkpoint.json");
    let stats_path = out.join("stats.csv");
    info!(
        "training {} updates (horizon {}, {} worker(s), seed {}) into {}",
        cfg.ppo.total_updates,
        cfg.ppo.rollout_horizon,
        cfg.ppo.workers,
        cfg.seed,
        out.display()
    );

    let history = RefCell::new(Vec::new());
    trainer
        .train(
            |s| {
                info!(
                    "update {:>4}  mean_reward {:+.5}  entropy {:.4}  episode_runoff {:.6} m3/s",
                    s.update, s.mean_reward, s.entropy, s.final_episode_runoff_m3_per_s
                );
                history.borrow_mut().push(*s);
            },
            |t| {
                Checkpoint::from_trainer(t).save(&checkpoint_path)?;
                write_atomic(&stats_path, stats_csv(&history.borrow()).as_bytes())?;
                info!("checkpoint at update {} -> {}", t.updates_completed, checkpoint_path.display());
                Ok(())
            },
        )
        .exit_with(EXIT_RUNTIME)?;

    let manifest = RunManifest::build(
        "train",
        cfg,
        started,
        &run.inputs,
        &[checkpoint_path.clone(), stats_path.clone()],
    )
    .exit_with(EXIT_RUNTIME)?;
    manifest.save(&out.join(MANIFEST_FILE)).exit_with(EXIT_RUNTIME)?;
    println!("checkpoint: {}", checkpoint_path.display());
    println!("stats: {}", stats_path.display());
    Ok(())
}

fn evaluate(cfg: &RunConfig, checkpoint: Option<PathBuf>, steps: Option<usize>) -> Result<(), Failure> {
    let started = Utc::now();
    let run = cfg.resolve().exit_with(EXIT_CONFIG)?;
    cfg.env.validate().exit_with(EXIT_CONFIG)?;
    let out = &cfg.out_dir;
    let checkpoint_path = checkpoint.unwrap_or_else(|| out.join("checkpoint.json"));
    let cp = Checkpoint::load(&checkpoint_path).exit_with(EXIT_RUNTIME)?;
    let actor = cp.actor().exit_with(EXIT_RUNTIME)?;

    let steps = steps.unwrap_or(run.grid.len());
    let greedy = run_greedy(&run.grid, &run.table, &cfg.env, &actor, steps).exit_with(EXIT_RUNTIME)?;
    let report = comparison_report(&run.grid, &builtin_scenarios(), &run.table, greedy.runoff.total_m3_per_s)
        .exit_with(EXIT_RUNTIME)?;

    let mut outputs = emit_reports(&report, &greedy.matrix, out).exit_with(EXIT_RUNTIME)?;
    let final_grid_path = out.join("final_grid.csv");
    write_atomic(&final_grid_path, format_grid(&greedy.final_grid).as_bytes()).exit_with(EXIT_RUNTIME)?;
    outputs.push(final_grid_path);

    for e in &report.entries {
        println!("{:<10} {:.6} m3/s", e.label, e.runoff_m3_per_s);
    }
    println!("optimized is strict minimum: {}", report.optimized_is_strict_minimum);
    if !report.optimized_is_strict_minimum {
        warn!("optimized runoff is not below every other entry");
    }

    let mut inputs = run.inputs.clone();
    inputs.push(checkpoint_path);
    RunManifest::build("evaluate", cfg, started, &inputs, &outputs)
        .and_then(|m| m.save(&out.join("evaluate_manifest.json")))
        .exit_with(EXIT_RUNTIME)?;
    Ok(())
}

fn load_scenario(id: &str) -> lulc_ppo::Result<Scenario> {
    if let Some(s) = builtin_scenario(id) {
        return Ok(s);
    }
    let path = Path::new(id);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "`{id}` is neither a built-in scenario (s1..s5) nor an existing file"
        )));
    }
    Scenario::load(path)
}

fn scenario(cfg: &RunConfig, id: &str) -> Result<(), Failure> {
    let run = cfg.resolve().exit_with(EXIT_CONFIG)?;
    let scenario = load_scenario(id).exit_with(EXIT_CONFIG)?;
    let report = apply_scenario(&run.grid.histogram(), &scenario).exit_with(EXIT_RUNTIME)?;
    let before = compute_runoff(&run.grid, &run.table).exit_with(EXIT_RUNTIME)?;
    let after = runoff_from_histogram(&report.after, &run.table, run.grid.cell_area_m2()).exit_with(EXIT_RUNTIME)?;

    println!("scenario: {}", scenario.name());
    println!("before:   {}", report.before);
    println!("after:    {}", report.after);
    match report.residual_assigned_to {
        Some(c) => println!("residual: {:+} pixels assigned to {c}", report.residual),
        None => match residual_priority(&report.before, &scenario).first() {
            Some(c) => println!("residual: 0 (rule would assign to {c})"),
            None => println!("residual: 0 (no changed classes)"),
        },
    }
    println!("runoff before: {:.6} m3/s", before.total_m3_per_s);
    println!("runoff after:  {:.6} m3/s", after.total_m3_per_s);

    let mut csv = String::from("class,before,target,after,residual\n");
    for class in LulcClass::ALL {
        let residual = if report.residual_assigned_to == Some(class) { report.residual } else { 0 };
        csv.push_str(&format!(
            "{class},{},{},{},{residual}\n",
            report.before[class],
            report.targets[class.index()],
            report.after[class]
        ));
    }
    let path = cfg.out_dir.join(format!("scenario_{}.csv", scenario.name()));
    write_atomic(&path, csv.as_bytes()).exit_with(EXIT_RUNTIME)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn make_seed_grid_files(out: &Path) -> Result<(), Failure> {
    let grid = make_seed_grid();
    let grid_path = out.join("seed_grid.csv");
    let mask_path = out.join("frozen_mask.csv");
    write_atomic(&grid_path, format_grid(&grid).as_bytes()).exit_with(EXIT_RUNTIME)?;
    write_atomic(&mask_path, format_frozen_mask(&grid).as_bytes()).exit_with(EXIT_RUNTIME)?;
    println!("histogram: {}", grid.histogram());
    println!("frozen pixels: {}", grid.frozen_count());
    println!("wrote {} and {}", grid_path.display(), mask_path.display());
    Ok(())
}
