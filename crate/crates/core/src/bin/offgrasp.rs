use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use offgrasp::algo::{AlgoState, EstimatorKind, PoseScales};
use offgrasp::env::{collect_random_grasps, EnvConfig, Split};
use offgrasp::harness::metrics::write_atomic;
use offgrasp::harness::report::{write_bars, write_stability};
use offgrasp::harness::{
    barplot_report, evaluate, read_metrics, run_sweep, run_training, stability_report, write_metrics,
    HarnessError, Regime, RunConfig, SweepGrid,
};
use offgrasp::replay::{load_pool, save_pool, ReplayPool};
use offgrasp::select::ActionSpace;
use offgrasp::util::{mix_seed, rng_from_seed};

#[derive(Parser)]
#[command(name = "offgrasp", about = "Off-policy Q-function estimation on a desk-scale grasping task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a random-policy pool on the training objects.
    Collect {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration; writes metrics, the resolved config and checkpoints.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate saved checkpoints on an object split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Run a hyperparameter grid (resumable).
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Grid TOML; defaults to the standard grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Report(ReportCommand),
    #[command(subcommand)]
    Env(EnvCommand),
    #[command(subcommand)]
    Pool(PoolCommand),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Sorted final-success curves per algorithm.
    Stability {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean and std per algorithm, pool size and regime.
    Bars {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Print the resolved environment config and its observation layout.
    Describe {
        #[arg(long)]
        env: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PoolCommand {
    /// Episode counts, provenance and success rate of a pool file.
    Stats {
        #[arg(long)]
        pool: PathBuf,
    },
}

/// A run config file plus flag overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<EstimatorKind>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    nu_anneal_steps: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    pcl_d: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    argmax_samples: Option<usize>,
    #[arg(long)]
    cem_iters: Option<usize>,
    #[arg(long)]
    cem_pop: Option<usize>,
    #[arg(long)]
    explore_duration: Option<u64>,
    #[arg(long)]
    explore_scale: Option<f64>,
    #[arg(long)]
    pool_size: Option<usize>,
    /// Initial pool file (skips collection).
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(k) = self.algo {
            c.algo.kind = k;
        }
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(c.algo.gamma, self.gamma);
        set!(c.algo.learning_rate, self.lr);
        set!(c.algo.tau, self.tau);
        set!(c.algo.argmax_samples, self.argmax_samples);
        set!(c.algo.cem.iterations, self.cem_iters);
        set!(c.algo.cem.population, self.cem_pop);
        set!(c.explore_duration, self.explore_duration);
        set!(c.explore_scale, self.explore_scale);
        set!(c.pool_size, self.pool_size);
        set!(c.regime, self.regime);
        set!(c.train_steps, self.steps);
        set!(c.seed, self.seed);
        if self.nu_anneal_steps.is_some() {
            c.algo.nu_anneal_steps = self.nu_anneal_steps;
        }
        if self.pcl_d.is_some() {
            c.algo.pcl_d = self.pcl_d;
        }
        if self.batch_size.is_some() {
            c.algo.batch_size = self.batch_size;
        }
        if self.pool.is_some() {
            c.pool_path = self.pool.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn load_env(path: &Option<PathBuf>) -> Result<EnvConfig, HarnessError> {
    Ok(match path {
        Some(p) => EnvConfig::load(p)?,
        None => EnvConfig::default(),
    })
}

fn print_pool_stats(pool: &ReplayPool) {
    let c = pool.counters();
    println!("episodes        {}", pool.num_episodes());
    println!("transitions     {}", pool.num_transitions());
    println!("initial_random  {}", c.initial_random);
    println!("on_policy_added {}", c.on_policy_added);
    println!("success_rate    {:.4}", pool.success_rate());
    if pool.num_episodes() > 0 {
        println!(
            "mean_length     {:.2}",
            pool.num_transitions() as f64 / pool.num_episodes() as f64
        );
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Collect { env, episodes, seed, out } => {
            let env = load_env(&env)?;
            let mut pool = ReplayPool::for_grasping(env.descriptor_hash());
            pool.extend(collect_random_grasps(&env, episodes, seed)?)?;
            save_pool(&pool, &out)?;
            print_pool_stats(&pool);
        }
        Command::Train { run, out } => {
            let cfg = run.resolve()?;
            write_atomic(&out.join("config.toml"), cfg.resolved().to_toml().as_bytes())?;
            match run_training(&cfg) {
                Ok(outcome) => {
                    write_metrics(out.join("metrics.csv"), &outcome.rows)?;
                    outcome.state.save_checkpoints(out.join("checkpoints"), "")?;
                    if let Some(last) = outcome.rows.last() {
                        println!("{} step {} success {:.3}", last.run_id, last.step, last.success_rate);
                    }
                }
                Err(failure) => {
                    write_metrics(out.join("metrics.csv"), &failure.rows)?;
                    return Err(failure.into());
                }
            }
        }
        Command::Eval {
            run,
            checkpoints,
            episodes,
            split,
        } => {
            let cfg = run.resolve()?.resolved();
            let split = match split.as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(format!("unknown split {other:?} (train or test)").into()),
            };
            let env = &cfg.env;
            let mut rng = rng_from_seed(mix_seed(cfg.seed, 0x7A11));
            let mut state = AlgoState::new(cfg.algo.clone(), env.obs_dim(), ActionSpace::grasp(), env.horizon, &mut rng)?
                .with_pose_scales(PoseScales::from_geometry(&env.geometry));
            state.load_checkpoints(&checkpoints, "")?;
            let policy = state.greedy_policy();
            let mut act_rng = rng_from_seed(mix_seed(cfg.seed, 0xE7A1));
            let outcome = evaluate(
                |_, o| Ok(policy.act(&o.features, &mut act_rng)?),
                env,
                episodes,
                mix_seed(cfg.seed, 0xE7A2),
                split,
            )?;
            println!(
                "{} / {} successes ({:.3})",
                outcome.successes,
                outcome.episodes,
                outcome.success_rate()
            );
        }
        Command::Sweep {
            run,
            grid,
            workers,
            out,
        } => {
            let base = run.resolve()?;
            let grid = match grid {
                Some(p) => SweepGrid::from_toml(&std::fs::read_to_string(&p)?)?,
                None => SweepGrid::default(),
            };
            let s = run_sweep(&grid, &base, &out, workers)?;
            println!(
                "{} runs: {} completed, {} failed, {} already done -> {}",
                s.total,
                s.completed,
                s.failed,
                s.skipped,
                s.metrics_path.display()
            );
        }
        Command::Report(ReportCommand::Stability { metrics, out }) => {
            let curves = stability_report(&read_metrics(&metrics)?)?;
            write_stability(&out, &curves)?;
            for c in &curves {
                println!(
                    "{:<10} runs {:>3}  failed {:>2}  median {:.3}  iqr {:.3}",
                    c.algo,
                    c.rates.len(),
                    c.failed_runs,
                    c.median,
                    c.iqr()
                );
            }
        }
        Command::Report(ReportCommand::Bars { metrics, out }) => {
            let report = barplot_report(&read_metrics(&metrics)?)?;
            write_bars(&out, &report)?;
            for c in &report.cells {
                let std = c.std.map_or_else(|| "NA".into(), |s| format!("{s:.3}"));
                println!("{:<10} {:>7} {:<10} n={} {:.3} ± {std}", c.algo, c.pool_size, c.regime, c.n, c.mean);
            }
            for (a, p, r) in &report.missing {
                println!("missing: {a} {p} {r}");
            }
        }
        Command::Env(EnvCommand::Describe { env }) => {
            let env = load_env(&env)?;
            let d = env.descriptor();
            println!("{}", env.to_toml());
            println!(
                "# observation: {}x{} grid x {} channels + {} extras = {} features",
                d.grid_size,
                d.grid_size,
                d.channels,
                d.extras,
                d.len()
            );
            println!("# action: [dx, dy, dz, dphi] in [-1, 1]^4");
            println!("# descriptor hash: {:016x}", env.descriptor_hash());
        }
        Command::Pool(PoolCommand::Stats { pool }) => print_pool_stats(&load_pool(Path::new(&pool))?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
