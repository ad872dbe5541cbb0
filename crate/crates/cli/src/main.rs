//! `ecr-lab`: reproduce the container-repositioning experiments from the
//! command line (order generation, simulation, training, evaluation,
//! baselines, sweeps).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ecr_core::baselines::{fit_thresholds, offline_optimal, RollingConfig, ThresholdTable};
use ecr_core::engine::World;
use ecr_core::features::{layout, AwarenessLevel, FeatureConfig};
use ecr_core::harness::{
    emit_curve_csv, emit_regional_csv, emit_summary_csv, eval_seeds, regional_statistics,
    run_evaluation, staleness_sweep, LearnedPolicy, PolicySpec, RunSummary,
};
use ecr_core::learner::{
    load_checkpoint_set, run_training, save_checkpoint_set, train_order_seed, TrainConfig,
};
use ecr_core::ordergen::{generate_orders, parse_trace, write_trace, DemandModel};
use ecr_core::rewards::RewardConfig;
use ecr_core::scenario::{builtin_scenario, parse_scenario, ScenarioConfig};
use ecr_core::Scalar;

#[derive(Parser)]
#[command(name = "ecr-lab", about = "Empty-container repositioning laboratory", version)]
struct Cli {
    /// Scenario file; the built-in 17-port network when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Base seed for order streams and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSVs, checkpoints and traces.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Multiplier on initial container stocks (e.g. 0.8, 1.0, 1.5).
    #[arg(long, global = true)]
    container_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    #[value(name = "self")]
    SelfAware,
    Territorial,
    Diplomatic,
}

impl From<LevelArg> for AwarenessLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::SelfAware => AwarenessLevel::SelfAware,
            LevelArg::Territorial => AwarenessLevel::Territorial,
            LevelArg::Diplomatic => AwarenessLevel::Diplomatic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BaselineArg {
    Norepo,
    Ic,
    OnlineLp,
    OnlineLpIc,
    OfflineLp,
}

#[derive(Args)]
struct EvalArgs {
    /// Number of evaluation episodes (odd-numbered seed space).
    #[arg(long, default_value_t = 20)]
    episodes: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write an order trace for one episode.
    Generate {
        /// Days to generate; defaults to the scenario horizon.
        #[arg(long)]
        days: Option<u32>,
        /// Trace file; defaults to <out>/orders.txt.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Simulate one episode under a fixed policy and log the trajectory.
    Simulate {
        #[arg(long, value_enum, default_value_t = BaselineArg::Norepo)]
        policy: BaselineArg,
        /// Replay a fixed order trace instead of generating one.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trajectory log file; defaults to <out>/trajectory.log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train per-route Q-networks with the cooperative event loop.
    Train {
        #[arg(long, value_enum, default_value_t = LevelArg::Diplomatic)]
        level: LevelArg,
        #[arg(long, default_value_t = 10_000)]
        episodes: u32,
        /// Mixing weight of the own-port reward within the diplomatic blend.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Cross-route information delay in days.
        #[arg(long, default_value_t = 0)]
        staleness_k: u32,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        /// Gradient steps per route per episode.
        #[arg(long, default_value_t = 128)]
        updates: u32,
        /// Episodes over which epsilon anneals; defaults to 80% of episodes.
        #[arg(long)]
        anneal: Option<u32>,
        /// Refresh cadence of an optional frozen target network.
        #[arg(long)]
        target_sync: Option<u32>,
    },
    /// Evaluate a trained checkpoint directory.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Run one of the planning/rule baselines.
    Baseline {
        #[arg(long, value_enum)]
        policy: BaselineArg,
        /// Planning horizon H in days (online LP).
        #[arg(long, default_value_t = 100)]
        horizon: u32,
        /// Executed window W in days before re-solving (online LP).
        #[arg(long, default_value_t = 7)]
        window: u32,
        /// Shortage cost in the planning objective.
        #[arg(long, default_value_t = ecr_core::flowopt::DEFAULT_BIG_M)]
        big_m: i64,
        /// Safety percentile override for threshold fitting.
        #[arg(long)]
        safety_pct: Option<u8>,
        /// Excess percentile override for threshold fitting.
        #[arg(long)]
        excess_pct: Option<u8>,
        /// Dump the first solved time-expanded instance to this file.
        #[arg(long)]
        dump_network: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Sweep a parameter and evaluate each value.
    Sweep {
        /// `staleness` (evaluation-time k) or `alpha` (retrains per value).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Diplomatic checkpoint for staleness sweeps.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Training episodes per value for alpha sweeps.
        #[arg(long, default_value_t = 2000)]
        train_episodes: u32,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Print the named observation layout for a feature configuration.
    DescribeState {
        #[arg(long, value_enum, default_value_t = LevelArg::Diplomatic)]
        level: LevelArg,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
}

fn load_world(cli: &Cli) -> Result<Arc<World>> {
    let mut config: ScenarioConfig = match &cli.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading scenario {}", path.display()))?;
            parse_scenario(&text)?
        }
        None => builtin_scenario(),
    };
    if let Some(scale) = cli.container_scale {
        config.container_scale = scale;
    }
    Ok(Arc::new(World::new(config)?))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn print_summary(s: &RunSummary) {
    match s.std {
        Some(std) => println!(
            "{}: {:.2} +- {:.2} % over {} episodes",
            s.label,
            s.mean * 100.0,
            std * 100.0,
            s.n
        ),
        None => println!("{}: {:.2} % over {} episode(s)", s.label, s.mean * 100.0, s.n),
    }
}

fn evaluate_and_emit(
    world: &Arc<World>,
    spec: &PolicySpec,
    seeds: &[u64],
    out: &Path,
) -> Result<RunSummary> {
    let (summary, reports) = run_evaluation(world, spec, seeds)?;
    let regional = regional_statistics(world, &reports);
    write_out(out, "summary.csv", &emit_summary_csv(std::slice::from_ref(&summary)))?;
    write_out(out, "regional.csv", &emit_regional_csv(&regional))?;
    print_summary(&summary);
    Ok(summary)
}

fn fitted_thresholds(
    world: &Arc<World>,
    model: &DemandModel,
    seed: u64,
    safety_pct: Option<u8>,
    excess_pct: Option<u8>,
) -> Result<ThresholdTable> {
    let fit_seeds: Vec<u64> = (0..3).map(|i| train_order_seed(seed ^ 0xF17, i)).collect();
    match (safety_pct, excess_pct) {
        (Some(p), Some(q)) => {
            if p > q {
                bail!("safety percentile {p} above excess percentile {q}");
            }
            let traces: Vec<_> = fit_seeds
                .iter()
                .map(|&s| generate_orders(model, world.config.episode_days, s))
                .collect();
            let samples = ecr_core::baselines::net_demand_windows(world, &traces);
            Ok(ecr_core::baselines::thresholds_from_stats(&samples, p, q))
        }
        (None, None) => {
            let (table, pq) = fit_thresholds(world, model, &fit_seeds)?;
            log::info!("grid search picked percentiles {pq:?}");
            Ok(table)
        }
        _ => bail!("--safety-pct and --excess-pct must be given together"),
    }
}

fn simulate_episode(
    world: &Arc<World>,
    orders: Arc<Vec<ecr_core::ordergen::Order>>,
    spec: &PolicySpec,
    log: &mut String,
) -> Result<ecr_core::engine::EpisodeCounters> {
    let counters = match spec {
        PolicySpec::NoReposition => ecr_core::engine::run_episode_with(
            world,
            &orders,
            ecr_core::baselines::policy_no_reposition,
            Some(log),
        )?,
        PolicySpec::InventoryControl(table) => ecr_core::engine::run_episode_with(
            world,
            &orders,
            |env, event| ecr_core::baselines::policy_inventory_control(env, event, table),
            Some(log),
        )?,
        PolicySpec::OnlineLp { rolling, thresholds } => {
            let mut p = ecr_core::baselines::OnlineLpPolicy::new(*rolling, thresholds.clone());
            let mut failure = None;
            let counters = ecr_core::engine::run_episode_with(
                world,
                &orders,
                |env, event| match p.act(env, event) {
                    Ok(a) => a,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                Some(log),
            )?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            counters
        }
        PolicySpec::Learned(policy) => {
            let mut ws = ecr_core::learner::Workspace::default();
            ecr_core::engine::run_episode_with(
                world,
                &orders,
                |env, event| policy.act(env, event, &mut ws),
                Some(log),
            )?
        }
    };
    Ok(counters)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let world = load_world(&cli)?;
    let model = DemandModel::from_scenario(&world.config, 0);

    match &cli.command {
        Command::Generate { days, trace_out } => {
            let days = days.unwrap_or(world.config.episode_days);
            let orders = generate_orders(&model, days, cli.seed);
            let text = write_trace(&orders, &world.config);
            let path = match trace_out {
                Some(p) => {
                    std::fs::write(p, &text)?;
                    p.clone()
                }
                None => write_out(&cli.out, "orders.txt", &text)?,
            };
            println!("{} orders over {} days -> {}", orders.len(), days, path.display());
        }

        Command::Simulate { policy, trace, log } => {
            let orders = match trace {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    parse_trace(&text, &world.config)?
                }
                None => generate_orders(&model, world.config.episode_days, cli.seed),
            };
            let spec = baseline_spec(
                *policy,
                &world,
                &model,
                cli.seed,
                None,
                None,
                RollingConfig::default(),
            )?;
            let Some(spec) = spec else {
                bail!("offline-lp is a bound, not a simulable policy; use `baseline --policy offline-lp`")
            };
            let mut log_text = String::new();
            let counters = simulate_episode(&world, Arc::new(orders), &spec, &mut log_text)?;
            let path = match log {
                Some(p) => {
                    std::fs::write(p, &log_text)?;
                    p.clone()
                }
                None => write_out(&cli.out, "trajectory.log", &log_text)?,
            };
            println!(
                "fulfillment {:.4} ({} events logged) -> {}",
                counters.fulfillment_ratio(),
                log_text.lines().count(),
                path.display()
            );
        }

        Command::Train {
            level,
            episodes,
            alpha,
            staleness_k,
            lr,
            gamma,
            updates,
            anneal,
            target_sync,
        } => {
            let fcfg = FeatureConfig {
                staleness_k: *staleness_k,
                ..FeatureConfig::new((*level).into(), &world)
            };
            let rcfg = RewardConfig::<Scalar> { alpha: *alpha, ..RewardConfig::default() };
            let tcfg = TrainConfig {
                episodes: *episodes,
                eps_anneal_episodes: anneal.unwrap_or((*episodes as f64 * 0.8) as u32),
                lr: *lr,
                gamma: *gamma,
                updates_per_episode: *updates,
                seed: cli.seed,
                target_sync: *target_sync,
                ..TrainConfig::default()
            };
            let t0 = std::time::Instant::now();
            let out = run_training(&world, &model, &fcfg, &rcfg, &tcfg)?;
            save_checkpoint_set(&cli.out, &out.nets, &world, &fcfg)?;
            write_out(&cli.out, "curve.csv", &emit_curve_csv(&out.curve))?;
            let tail: Vec<f64> =
                out.curve.iter().rev().take(50).map(|p| p.fulfillment_ratio).collect();
            let tail_mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
            println!(
                "trained {} episodes ({:?}); last-50 training fulfillment {:.4}; checkpoints in {}",
                episodes,
                t0.elapsed(),
                tail_mean,
                cli.out.display()
            );
        }

        Command::Evaluate { checkpoint, eval } => {
            let (nets, fcfg) = load_checkpoint_set::<Scalar>(checkpoint, &world)?;
            let policy = LearnedPolicy { nets, fcfg };
            let seeds = eval_seeds(cli.seed, eval.episodes);
            evaluate_and_emit(&world, &PolicySpec::Learned(Arc::new(policy)), &seeds, &cli.out)?;
        }

        Command::Baseline {
            policy,
            horizon,
            window,
            big_m,
            safety_pct,
            excess_pct,
            dump_network,
            eval,
        } => {
            let seeds = eval_seeds(cli.seed, eval.episodes);
            if matches!(policy, BaselineArg::OfflineLp) {
                let mut ratios = Vec::with_capacity(seeds.len());
                let mut dump = None;
                for &s in &seeds {
                    let orders = generate_orders(&model, world.config.episode_days, s);
                    let bound = offline_optimal(&world, &orders, *big_m)?;
                    ratios.push(bound.ratio);
                    dump.get_or_insert(bound.dump);
                }
                if let Some(path) = dump_network {
                    std::fs::write(path, dump.unwrap_or_default())?;
                }
                let summary = ecr_core::harness::summarize("offline-lp", &ratios);
                write_out(&cli.out, "summary.csv", &emit_summary_csv(std::slice::from_ref(&summary)))?;
                print_summary(&summary);
            } else {
                let rolling =
                    RollingConfig { horizon_days: *horizon, window_days: *window, big_m: *big_m };
                let spec = baseline_spec(
                    *policy,
                    &world,
                    &model,
                    cli.seed,
                    *safety_pct,
                    *excess_pct,
                    rolling,
                )?
                .expect("non-offline policies are simulable");
                evaluate_and_emit(&world, &spec, &seeds, &cli.out)?;
                if dump_network.is_some() {
                    log::warn!("--dump-network only applies to offline-lp");
                }
            }
        }

        Command::Sweep { param, values, checkpoint, train_episodes, eval } => {
            let seeds = eval_seeds(cli.seed, eval.episodes);
            match param.as_str() {
                "staleness" => {
                    let dir =
                        checkpoint.as_ref().context("staleness sweeps need --checkpoint")?;
                    let (nets, fcfg) = load_checkpoint_set::<Scalar>(dir, &world)?;
                    let policy = LearnedPolicy { nets, fcfg };
                    let ks: Vec<u32> = values
                        .split(',')
                        .map(|v| v.trim().parse().context("staleness values are integers"))
                        .collect::<Result<_>>()?;
                    let rows = staleness_sweep(&world, &policy, &ks, &seeds)?;
                    let mut summaries = Vec::new();
                    for (k, summary) in rows {
                        print!("k = {k:>3}  ");
                        print_summary(&summary);
                        summaries.push(RunSummary { label: format!("staleness-k{k}"), ..summary });
                    }
                    write_out(&cli.out, "summary.csv", &emit_summary_csv(&summaries))?;
                }
                "alpha" => {
                    let alphas: Vec<f64> = values
                        .split(',')
                        .map(|v| v.trim().parse().context("alpha values are reals"))
                        .collect::<Result<_>>()?;
                    let mut summaries = Vec::new();
                    for alpha in alphas {
                        let fcfg = FeatureConfig::new(AwarenessLevel::Diplomatic, &world);
                        let rcfg = RewardConfig::<Scalar> { alpha, ..RewardConfig::default() };
                        let tcfg = TrainConfig {
                            episodes: *train_episodes,
                            eps_anneal_episodes: (*train_episodes as f64 * 0.8) as u32,
                            seed: cli.seed,
                            ..TrainConfig::default()
                        };
                        let out = run_training(&world, &model, &fcfg, &rcfg, &tcfg)?;
                        let policy = LearnedPolicy { nets: out.nets, fcfg };
                        let (summary, _) =
                            run_evaluation(&world, &PolicySpec::Learned(Arc::new(policy)), &seeds)?;
                        print!("alpha = {alpha}  ");
                        print_summary(&summary);
                        summaries.push(RunSummary { label: format!("alpha-{alpha}"), ..summary });
                    }
                    write_out(&cli.out, "summary.csv", &emit_summary_csv(&summaries))?;
                }
                other => bail!("unknown sweep parameter {other} (use staleness or alpha)"),
            }
        }

        Command::DescribeState { level, n, m } => {
            let fcfg =
                FeatureConfig { n: *n, m: *m, ..FeatureConfig::new((*level).into(), &world) };
            let lay = layout(&world, &fcfg);
            print!(
                "level {} n {} m {} norm {}\nlayout_hash {:#018x}\n{}",
                fcfg.level.name(),
                fcfg.n,
                fcfg.m,
                fcfg.norm,
                ecr_core::features::layout_hash(&world, &fcfg),
                lay.describe()
            );
        }
    }
    Ok(())
}

fn baseline_spec(
    policy: BaselineArg,
    world: &Arc<World>,
    model: &DemandModel,
    seed: u64,
    safety_pct: Option<u8>,
    excess_pct: Option<u8>,
    rolling: RollingConfig,
) -> Result<Option<PolicySpec>> {
    if rolling.window_days == 0 || rolling.window_days > rolling.horizon_days {
        bail!("need 1 <= window <= horizon");
    }
    Ok(match policy {
        BaselineArg::Norepo => Some(PolicySpec::NoReposition),
        BaselineArg::Ic => Some(PolicySpec::InventoryControl(fitted_thresholds(
            world, model, seed, safety_pct, excess_pct,
        )?)),
        BaselineArg::OnlineLp => Some(PolicySpec::OnlineLp { rolling, thresholds: None }),
        BaselineArg::OnlineLpIc => Some(PolicySpec::OnlineLp {
            rolling,
            thresholds: Some(fitted_thresholds(world, model, seed, safety_pct, excess_pct)?),
        }),
        BaselineArg::OfflineLp => None,
    })
}
