//! `lerl`: train, evaluate and ablate the hierarchical recommender on the
//! simulated environment.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lerl_core::config::RunConfig;
use lerl_core::harness::{self, Checkpoint, EvalOutcome, Setup, Trajectory, Variant};
use lerl_core::numeric::{streams, RngStream};
use lerl_core::simenv::{generate_population, StepLog};
use lerl_core::Error;

#[derive(Parser, Debug)]
#[command(name = "lerl", version, about = "Hierarchical planner + PPO recommender on a simulated user environment")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic catalog, user population and matching config.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 64)]
        items: usize,
        #[arg(long, default_value_t = 8)]
        categories: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant, then evaluate it.
    Train(RunArgs),
    /// Evaluate a saved checkpoint.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to `checkpoint.bin` in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Train and evaluate every variant under one seed.
    Ablate(RunArgs),
    /// Export the per-step log of one evaluation session.
    CaseStudy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Index of the evaluation session to export.
        #[arg(long, default_value_t = 0)]
        session: usize,
    },
    /// Run the built-in oracle checks.
    Check,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    workers: Option<usize>,
}

/// A loaded config with overrides applied and the catalog path made absolute.
struct Run {
    setup: Setup,
    out: PathBuf,
    workers: Option<usize>,
}

impl Run {
    fn open(args: &RunArgs) -> lerl_core::Result<Self> {
        let mut config = RunConfig::load(&args.config)?;
        let base = args.config.parent().unwrap_or(Path::new("."));
        if let Some(path) = config.catalog.path.take() {
            let full = if path.is_relative() { base.join(path) } else { path };
            let full = std::fs::canonicalize(&full).map_err(|e| Error::config(format!("catalog {}: {e}", full.display())))?;
            config.catalog.path = Some(full);
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(variant) = args.variant {
            config.training.variant = variant;
        }
        if let Some(out) = &args.out {
            config.output_dir = Some(out.clone());
        }
        let out = config
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", config.training.variant, config.seed)));
        if args.workers == Some(0) {
            return Err(Error::config("--workers must be >= 1"));
        }
        let setup = Setup::from_config(config, None)?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let run = Run {
            setup,
            out,
            workers: args.workers,
        };
        run.write("resolved_config.toml", &resolved_config(&run.setup)?)?;
        Ok(run)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> lerl_core::Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    fn variant(&self) -> Variant {
        self.setup.config.training.variant
    }

    fn load_checkpoint(&self, path: Option<&PathBuf>) -> lerl_core::Result<Checkpoint> {
        let path = path.cloned().unwrap_or_else(|| self.path("checkpoint.bin"));
        let checkpoint = Checkpoint::load(&path)?;
        if checkpoint.fingerprint != self.setup.fingerprint {
            log::warn!("checkpoint {} was trained under a different config", path.display());
        }
        Ok(checkpoint)
    }
}

fn resolved_config(setup: &Setup) -> lerl_core::Result<String> {
    Ok(format!("# fingerprint {}\n{}", setup.fingerprint, setup.config.to_toml()?))
}

#[derive(Serialize)]
struct SessionRecord<'a> {
    session: usize,
    variant: Variant,
    user_id: usize,
    t_int: usize,
    r_cum: f64,
    r_sin: f64,
    steps: &'a [StepLog],
    incidents: &'a [String],
}

fn trajectories_jsonl(variant: Variant, trajectories: &[Trajectory]) -> lerl_core::Result<String> {
    let mut out = String::new();
    for (i, t) in trajectories.iter().enumerate() {
        let m = t.metrics()?;
        let record = SessionRecord {
            session: i,
            variant,
            user_id: t.user_id,
            t_int: m.t_int,
            r_cum: m.r_cum(),
            r_sin: m.r_sin(),
            steps: &t.logs,
            incidents: &t.incidents,
        };
        out.push_str(&serde_json::to_string(&record).map_err(|e| Error::format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn write_eval(run: &Run, eval: &EvalOutcome) -> lerl_core::Result<()> {
    let reports = std::slice::from_ref(&eval.report);
    run.write("report.csv", &harness::reports_to_csv(reports))?;
    let table = harness::reports_to_table(reports);
    run.write("report.txt", &table)?;
    run.write("trajectories.jsonl", &trajectories_jsonl(eval.report.variant, &eval.trajectories)?)?;
    print!("{table}");
    Ok(())
}

fn gen_data(config: Option<&Path>, seed: Option<u64>, items: usize, categories: usize, out: &Path) -> lerl_core::Result<()> {
    let mut config = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::synthetic(seed.unwrap_or(0), items, categories),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if config.catalog.path.is_some() {
        return Err(Error::config("gen-data needs a synthetic catalog (n_items + n_categories)"));
    }
    config.validate()?;
    let catalog = config.build_catalog(None)?;
    let mut rng = RngStream::new(config.seed, streams::POPULATION);
    let users = generate_population(config.environment.n_users, &catalog, &mut rng)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: &str| {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("catalog.csv", &catalog.to_csv())?;
    let mut lines = String::new();
    for u in &users {
        lines.push_str(&serde_json::to_string(u).map_err(|e| Error::format(e.to_string()))?);
        lines.push('\n');
    }
    write("users.jsonl", &lines)?;
    config.catalog.n_items = None;
    config.catalog.n_categories = None;
    config.catalog.path = Some(PathBuf::from("catalog.csv"));
    write("config.toml", &config.to_toml()?)?;
    println!(
        "wrote {} items in {} categories and {} users to {}",
        catalog.n_items(),
        catalog.n_categories(),
        users.len(),
        out.display()
    );
    Ok(())
}

fn train(args: &RunArgs) -> lerl_core::Result<()> {
    let run = Run::open(args)?;
    let variant = run.variant();
    let outcome = harness::train(&run.setup, variant, run.workers)?;
    outcome.checkpoint.save(&run.path("checkpoint.bin"))?;
    run.write("training_curve.csv", &harness::curve_to_csv(&outcome.curve))?;
    if let Some(reason) = &outcome.checkpoint.aborted {
        log::error!("training stopped early: {reason}");
    }
    for incident in &outcome.incidents {
        log::debug!("{incident}");
    }
    let cfg = &run.setup.config;
    let eval = harness::evaluate(
        &run.setup,
        &outcome.checkpoint,
        variant,
        cfg.training.eval_sessions,
        cfg.eval_seed(),
        run.workers,
    )?;
    write_eval(&run, &eval)?;
    match outcome.checkpoint.aborted {
        Some(reason) => Err(Error::numerical(reason)),
        None => Ok(()),
    }
}

fn eval(args: &RunArgs, checkpoint: Option<&PathBuf>, sessions: Option<usize>) -> lerl_core::Result<()> {
    let run = Run::open(args)?;
    let checkpoint = run.load_checkpoint(checkpoint)?;
    let cfg = &run.setup.config;
    let n = sessions.unwrap_or(cfg.training.eval_sessions);
    let eval = harness::evaluate(&run.setup, &checkpoint, run.variant(), n, cfg.eval_seed(), run.workers)?;
    write_eval(&run, &eval)
}

fn ablate(args: &RunArgs) -> lerl_core::Result<()> {
    let run = Run::open(args)?;
    let rows = harness::ablate(&run.setup, run.workers)?;
    for row in &rows {
        run.write(
            &format!("training_curve_{}.csv", row.variant),
            &harness::curve_to_csv(&row.train.curve),
        )?;
    }
    let reports: Vec<_> = rows.iter().map(|r| r.eval.report.clone()).collect();
    run.write("report.csv", &harness::reports_to_csv(&reports))?;
    let table = harness::reports_to_table(&reports);
    run.write("report.txt", &table)?;
    let mut lines = String::new();
    for row in &rows {
        lines.push_str(&trajectories_jsonl(row.variant, &row.eval.trajectories)?);
    }
    run.write("trajectories.jsonl", &lines)?;
    print!("{table}");
    Ok(())
}

fn case_study(args: &RunArgs, checkpoint: Option<&PathBuf>, session: usize) -> lerl_core::Result<()> {
    let run = Run::open(args)?;
    let checkpoint = run.load_checkpoint(checkpoint)?;
    let eval = harness::evaluate(
        &run.setup,
        &checkpoint,
        run.variant(),
        session + 1,
        run.setup.config.eval_seed(),
        run.workers,
    )?;
    let traj = &eval.trajectories[session];
    let path = run.path("case_study.jsonl");
    harness::case_study_export(traj, &path)?;
    let catalog = &run.setup.catalog;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let io = |e| Error::io("<stdout>", e);
    writeln!(w, "session {session} (user {}), {} steps", traj.user_id, traj.len()).map_err(io)?;
    for log in &traj.logs {
        let names: Vec<&str> = log.category_ids.iter().map(|&c| catalog.category_name(c)).collect();
        writeln!(
            w,
            "t={:<2} reward={:.3} budget={:<3} {}{}",
            log.t,
            log.reward,
            log.remaining_budget,
            names.join(","),
            if log.penalty_applied { "  [repeat]" } else { "" }
        )
        .map_err(io)?;
    }
    writeln!(w, "wrote {}", path.display()).map_err(io)?;
    Ok(())
}

fn check() -> lerl_core::Result<bool> {
    let results = harness::self_check();
    for r in &results {
        println!("{:<18} {}  {}", r.name, if r.passed { "ok  " } else { "FAIL" }, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn dispatch(cli: &Cli) -> lerl_core::Result<bool> {
    match &cli.command {
        Command::GenData {
            config,
            seed,
            items,
            categories,
            out,
        } => gen_data(config.as_deref(), *seed, *items, *categories, out).map(|_| true),
        Command::Train(args) => train(args).map(|_| true),
        Command::Eval {
            run,
            checkpoint,
            sessions,
        } => eval(run, checkpoint.as_ref(), *sessions).map(|_| true),
        Command::Ablate(args) => ablate(args).map(|_| true),
        Command::CaseStudy {
            run,
            checkpoint,
            session,
        } => case_study(run, checkpoint.as_ref(), *session).map(|_| true),
        Command::Check => check(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
