//! Experiment harness: policy evaluation over seed sets, per-port episode
//! reports, regional statistics, staleness sweeps, and the CSV formats the
//! CLI emits (`summary.csv`, `regional.csv`, `curve.csv`).

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{
    policy_inventory_control, policy_no_reposition, OnlineLpPolicy, RollingConfig, ThresholdTable,
};
use crate::engine::{run_episode_with, ArrivalEvent, Env, EpisodeCounters, World};
use crate::features::{build_state, AwarenessLevel, FeatureConfig};
use crate::learner::{action_decode, argmax, eval_order_seed, CurvePoint, QNetwork, Workspace};
use crate::ordergen::{generate_orders, DemandModel};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("engine: {0}")]
    Engine(#[from] crate::engine::EngineError),
    #[error("planner: {0}")]
    Flow(#[from] crate::flowopt::FlowError),
    #[error("learner: {0}")]
    Learner(#[from] crate::learner::LearnerError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] crate::learner::CheckpointError),
    #[error("staleness sweeps need a diplomatic checkpoint, got level {0}")]
    NotDiplomatic(String),
    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// A frozen greedy policy loaded from per-route checkpoints.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub nets: Vec<QNetwork<Scalar>>,
    pub fcfg: FeatureConfig,
}

impl LearnedPolicy {
    /// Greedy action (epsilon = 0): argmax with ties to the lowest index.
    pub fn act(&self, env: &Env, event: ArrivalEvent, ws: &mut Workspace<Scalar>) -> f64 {
        let world = env.world();
        let snap = env.snapshot();
        let s = build_state::<Scalar>(world, &snap, &self.fcfg);
        let route = world.vessel_route(event.vessel);
        let q = self.nets[route.idx()].forward(&s.values, ws).expect("layout-checked input");
        action_decode(argmax(q)).expect("argmax index in range")
    }
}

/// Descriptor from which per-episode policy instances are built.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    NoReposition,
    InventoryControl(ThresholdTable),
    OnlineLp { rolling: RollingConfig, thresholds: Option<ThresholdTable> },
    Learned(Arc<LearnedPolicy>),
}

impl PolicySpec {
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::NoReposition => "no-reposition",
            PolicySpec::InventoryControl(_) => "inventory-control",
            PolicySpec::OnlineLp { thresholds: None, .. } => "online-lp",
            PolicySpec::OnlineLp { thresholds: Some(_), .. } => "online-lp-ic",
            PolicySpec::Learned(_) => "learned",
        }
    }
}

/// One per-port row of an episode report.
#[derive(Debug, Clone, PartialEq)]
pub struct PortRow {
    pub port: String,
    pub total: i64,
    pub failed: i64,
    pub imported_laden: i64,
    pub imported_empty: i64,
    pub exported_laden: i64,
    pub exported_empty: i64,
    /// `(total - failed) / total`; absent for ports with no orders.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub seed: u64,
    pub fulfillment_ratio: f64,
    pub rows: Vec<PortRow>,
}

impl EpisodeReport {
    pub fn from_counters(world: &World, seed: u64, c: &EpisodeCounters) -> Self {
        let rows = (0..world.num_ports())
            .map(|p| {
                let total = c.ordered[p];
                let failed = c.failed[p];
                PortRow {
                    port: world.config.ports[p].code.clone(),
                    total,
                    failed,
                    imported_laden: c.imported_laden[p],
                    imported_empty: c.imported_empty[p],
                    exported_laden: c.exported_laden[p],
                    exported_empty: c.exported_empty[p],
                    ratio: (total > 0).then(|| (total - failed) as f64 / total as f64),
                }
            })
            .collect();
        EpisodeReport { seed, fulfillment_ratio: c.fulfillment_ratio(), rows }
    }
}

/// Mean and sample standard deviation over evaluation episodes (mean of
/// per-episode ratios, not ratio of sums). `std` is absent for n < 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

pub fn summarize(label: &str, ratios: &[f64]) -> RunSummary {
    let n = ratios.len();
    let mean = if n == 0 { 0.0 } else { ratios.iter().sum::<f64>() / n as f64 };
    let std = (n >= 2).then(|| {
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    });
    RunSummary { label: label.to_string(), n, mean, std }
}

fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("ECR_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Runs one evaluation episode (exploration off) and reports it.
pub fn run_policy_episode(
    world: &Arc<World>,
    spec: &PolicySpec,
    seed: u64,
    log: Option<&mut String>,
) -> Result<EpisodeReport, HarnessError> {
    let model = DemandModel::from_scenario(&world.config, 0);
    let orders = Arc::new(generate_orders(&model, world.config.episode_days, seed));
    let counters = match spec {
        PolicySpec::NoReposition => run_episode_with(world, &orders, policy_no_reposition, log)?,
        PolicySpec::InventoryControl(table) => run_episode_with(
            world,
            &orders,
            |env, event| policy_inventory_control(env, event, table),
            log,
        )?,
        PolicySpec::OnlineLp { rolling, thresholds } => {
            let mut policy = OnlineLpPolicy::new(*rolling, thresholds.clone());
            let mut failure = None;
            let counters = run_episode_with(
                world,
                &orders,
                |env, event| match policy.act(env, event) {
                    Ok(a) => a,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                log,
            )?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            counters
        }
        PolicySpec::Learned(policy) => {
            let mut ws = Workspace::default();
            run_episode_with(world, &orders, |env, event| policy.act(env, event, &mut ws), log)?
        }
    };
    Ok(EpisodeReport::from_counters(world, seed, &counters))
}

/// Evaluates a policy over the given order seeds, one fresh environment per
/// seed, in parallel (capped by `ECR_LAB_THREADS`).
pub fn run_evaluation(
    world: &Arc<World>,
    spec: &PolicySpec,
    seeds: &[u64],
) -> Result<(RunSummary, Vec<EpisodeReport>), HarnessError> {
    let reports: Vec<Result<EpisodeReport, HarnessError>> = thread_pool().install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_policy_episode(world, spec, seed, None))
            .collect()
    });
    let mut out = Vec::with_capacity(reports.len());
    for r in reports {
        out.push(r?);
    }
    let ratios: Vec<f64> = out.iter().map(|r| r.fulfillment_ratio).collect();
    Ok((summarize(spec.label(), &ratios), out))
}

/// Default evaluation seed set: odd-numbered, disjoint from training seeds.
pub fn eval_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u32).map(|i| eval_order_seed(base, i)).collect()
}

/// Evaluates a diplomatic checkpoint across the staleness values in `ks`.
pub fn staleness_sweep(
    world: &Arc<World>,
    policy: &LearnedPolicy,
    ks: &[u32],
    seeds: &[u64],
) -> Result<Vec<(u32, RunSummary)>, HarnessError> {
    if policy.fcfg.level != AwarenessLevel::Diplomatic {
        return Err(HarnessError::NotDiplomatic(policy.fcfg.level.name().to_string()));
    }
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let delayed = LearnedPolicy {
            nets: policy.nets.clone(),
            fcfg: FeatureConfig { staleness_k: k, ..policy.fcfg.clone() },
        };
        let (summary, _) = run_evaluation(world, &PolicySpec::Learned(Arc::new(delayed)), seeds)?;
        out.push((k, summary));
    }
    Ok(out)
}

/// Six per-port counters averaged across episodes, paper-table style.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalRow {
    pub region: String,
    pub total: f64,
    pub failed: f64,
    pub imported_laden: f64,
    pub imported_empty: f64,
    pub exported_laden: f64,
    pub exported_empty: f64,
    pub ratio: Option<f64>,
}

pub fn regional_statistics(world: &World, reports: &[EpisodeReport]) -> Vec<RegionalRow> {
    let n = reports.len().max(1) as f64;
    (0..world.num_ports())
        .map(|p| {
            let sum = |f: &dyn Fn(&PortRow) -> i64| {
                reports.iter().map(|r| f(&r.rows[p])).sum::<i64>() as f64 / n
            };
            let total = sum(&|r| r.total);
            let failed = sum(&|r| r.failed);
            RegionalRow {
                region: world.config.ports[p].region.clone(),
                total,
                failed,
                imported_laden: sum(&|r| r.imported_laden),
                imported_empty: sum(&|r| r.imported_empty),
                exported_laden: sum(&|r| r.exported_laden),
                exported_empty: sum(&|r| r.exported_empty),
                ratio: (total > 0.0).then(|| (total - failed) / total),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV emission / parsing
// ---------------------------------------------------------------------------

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// Episode report as CSV: two metadata lines then one row per port.
pub fn emit_episode_csv(report: &EpisodeReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed,{}\n", report.seed));
    out.push_str(&format!("fulfillment_ratio,{}\n", report.fulfillment_ratio));
    out.push_str("port,total,failed,imported_laden,imported_empty,exported_laden,exported_empty,ratio\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.port,
            r.total,
            r.failed,
            r.imported_laden,
            r.imported_empty,
            r.exported_laden,
            r.exported_empty,
            fmt_opt(r.ratio),
        ));
    }
    out
}

pub fn parse_episode_csv(text: &str) -> Result<EpisodeReport, HarnessError> {
    let err = |line: usize, msg: &str| HarnessError::Csv { line, msg: msg.to_string() };
    let mut lines = text.lines().enumerate();
    let (_, seed_line) = lines.next().ok_or_else(|| err(1, "missing seed line"))?;
    let seed: u64 = seed_line
        .strip_prefix("seed,")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(1, "bad seed line"))?;
    let (_, ratio_line) = lines.next().ok_or_else(|| err(2, "missing ratio line"))?;
    let fulfillment_ratio: f64 = ratio_line
        .strip_prefix("fulfillment_ratio,")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(2, "bad ratio line"))?;
    let (_, header) = lines.next().ok_or_else(|| err(3, "missing header"))?;
    if !header.starts_with("port,") {
        return Err(err(3, "bad header"));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(ln + 1, "expected 8 fields"));
        }
        let parse_i = |s: &str, ln: usize| s.parse::<i64>().map_err(|_| err(ln, "bad integer"));
        rows.push(PortRow {
            port: f[0].to_string(),
            total: parse_i(f[1], ln + 1)?,
            failed: parse_i(f[2], ln + 1)?,
            imported_laden: parse_i(f[3], ln + 1)?,
            imported_empty: parse_i(f[4], ln + 1)?,
            exported_laden: parse_i(f[5], ln + 1)?,
            exported_empty: parse_i(f[6], ln + 1)?,
            ratio: if f[7].is_empty() {
                None
            } else {
                Some(f[7].parse().map_err(|_| err(ln + 1, "bad ratio"))?)
            },
        });
    }
    Ok(EpisodeReport { seed, fulfillment_ratio, rows })
}

/// `summary.csv`: one row per evaluated policy.
pub fn emit_summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = String::from("policy,n,mean,std\n");
    for s in summaries {
        out.push_str(&format!("{},{},{},{}\n", s.label, s.n, s.mean, fmt_opt(s.std)));
    }
    out
}

/// `regional.csv`: averaged per-port counters.
pub fn emit_regional_csv(rows: &[RegionalRow]) -> String {
    let mut out = String::from(
        "region,total,failed,imported_laden,imported_empty,exported_laden,exported_empty,ratio\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.region,
            r.total,
            r.failed,
            r.imported_laden,
            r.imported_empty,
            r.exported_laden,
            r.exported_empty,
            fmt_opt(r.ratio),
        ));
    }
    out
}

/// `curve.csv`: learning-curve points.
pub fn emit_curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("episode,epsilon,fulfillment_ratio,mean_loss\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{}\n", p.episode, p.epsilon, p.fulfillment_ratio, p.mean_loss));
    }
    out
}
