//! Calibration driver: prints the policy ladder on the built-in scenario.
//!
//! Usage: calibrate [episodes] [eval_seeds] [levels...]

use std::sync::Arc;
use std::time::Instant;

use ecr_core::baselines::{fit_thresholds, offline_optimal, OnlineLpPolicy, RollingConfig};
use ecr_core::engine::World;
use ecr_core::features::{AwarenessLevel, FeatureConfig};
use ecr_core::harness::{eval_seeds, run_evaluation, LearnedPolicy, PolicySpec};
use ecr_core::learner::{run_training, train_order_seed, TrainConfig};
use ecr_core::ordergen::{generate_orders, DemandModel};
use ecr_core::rewards::RewardConfig;
use ecr_core::Scalar;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let episodes: u32 = args.first().and_then(|s| s.parse().ok()).unwrap_or(300);
    let n_seeds: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let levels: Vec<AwarenessLevel> = if args.len() > 2 {
        args[2..].iter().filter_map(|s| AwarenessLevel::parse(s)).collect()
    } else {
        vec![AwarenessLevel::SelfAware, AwarenessLevel::Territorial, AwarenessLevel::Diplomatic]
    };

    let world = match std::env::var("ECR_CAL_SCENARIO") {
        Ok(path) => {
            let text = std::fs::read_to_string(path).expect("scenario file");
            Arc::new(World::new(ecr_core::scenario::parse_scenario(&text).unwrap()).unwrap())
        }
        Err(_) => Arc::new(World::builtin()),
    };
    let model = DemandModel::from_scenario(&world.config, 0);
    let seeds = eval_seeds(1000, n_seeds);

    // Demand sanity.
    let orders = generate_orders(&model, 400, seeds[0]);
    let total: i64 = orders.iter().map(|o| o.quantity).sum();
    println!("orders per episode ~ {} containers ({} orders)", total, orders.len());

    let t0 = Instant::now();
    let (norepo, _) = run_evaluation(&world, &PolicySpec::NoReposition, &seeds).unwrap();
    println!("no-reposition     {:.4} +- {:.4}  [{:?}]", norepo.mean, norepo.std.unwrap_or(0.0), t0.elapsed());

    let t0 = Instant::now();
    let fit_seeds: Vec<u64> = (0..3).map(|i| train_order_seed(777, i)).collect();
    let (table, pq) = fit_thresholds(&world, &model, &fit_seeds).unwrap();
    let (ic, _) = run_evaluation(&world, &PolicySpec::InventoryControl(table.clone()), &seeds).unwrap();
    println!("inventory-control {:.4} +- {:.4}  pq={pq:?} [{:?}]", ic.mean, ic.std.unwrap_or(0.0), t0.elapsed());

    let t0 = Instant::now();
    let spec = PolicySpec::OnlineLp { rolling: RollingConfig::default(), thresholds: None };
    let (lp, _) = run_evaluation(&world, &spec, &seeds).unwrap();
    println!("online-lp         {:.4} +- {:.4}  [{:?}]", lp.mean, lp.std.unwrap_or(0.0), t0.elapsed());

    let t0 = Instant::now();
    let spec = PolicySpec::OnlineLp { rolling: RollingConfig::default(), thresholds: Some(table) };
    let (lpic, _) = run_evaluation(&world, &spec, &seeds).unwrap();
    println!("online-lp-ic      {:.4} +- {:.4}  [{:?}]", lpic.mean, lpic.std.unwrap_or(0.0), t0.elapsed());

    let t0 = Instant::now();
    let mut bound_sum = 0.0;
    for &s in &seeds {
        let orders = generate_orders(&model, world.config.episode_days, s);
        bound_sum += offline_optimal(&world, &orders, 1_000_000).unwrap().ratio;
    }
    println!("offline-lp bound  {:.4}             [{:?}]", bound_sum / seeds.len() as f64, t0.elapsed());

    for level in levels {
        let t0 = Instant::now();
        let fcfg = FeatureConfig::new(level, &world);
        let alpha: f64 = std::env::var("ECR_CAL_ALPHA")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.5);
        let rcfg = RewardConfig::<Scalar> { alpha, ..RewardConfig::default() };
        let updates: u32 = std::env::var("ECR_CAL_UPDATES")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(128);
        let gamma: f64 = std::env::var("ECR_CAL_GAMMA")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.99);
        let tcfg = TrainConfig {
            episodes,
            eps_anneal_episodes: (episodes as f64 * 0.8) as u32,
            updates_per_episode: updates,
            gamma,
            seed: 7,
            ..TrainConfig::default()
        };
        let out = run_training(&world, &model, &fcfg, &rcfg, &tcfg).unwrap();
        let train_time = t0.elapsed();
        let last: Vec<f64> = out
            .curve
            .iter()
            .rev()
            .take(50)
            .map(|p| p.fulfillment_ratio)
            .collect();
        let train_tail = last.iter().sum::<f64>() / last.len().max(1) as f64;
        if let Ok(dir) = std::env::var("ECR_CAL_OUT") {
            ecr_core::learner::save_checkpoint_set(
                std::path::Path::new(&dir),
                &out.nets,
                &world,
                &fcfg,
            )
            .unwrap();
        }
        let policy = Arc::new(LearnedPolicy { nets: out.nets, fcfg });
        let (summary, _) =
            run_evaluation(&world, &PolicySpec::Learned(policy.clone()), &seeds).unwrap();
        println!(
            "{:<11} MARL  {:.4} +- {:.4}  (train tail {:.4}) [train {:?}, eval {:?}]",
            level.name(),
            summary.mean,
            summary.std.unwrap_or(0.0),
            train_tail,
            train_time,
            t0.elapsed() - train_time,
        );
        if level == AwarenessLevel::Diplomatic {
            for scale in [0.8, 1.5] {
                let mut config = world.config.clone();
                config.container_scale = scale;
                let scaled = Arc::new(World::new(config).unwrap());
                let (s, _) =
                    run_evaluation(&scaled, &PolicySpec::Learned(policy.clone()), &seeds).unwrap();
                println!("  scale {scale}: {:.4} +- {:.4}", s.mean, s.std.unwrap_or(0.0));
            }
            let sweep =
                ecr_core::harness::staleness_sweep(&world, &policy, &[1, 10, 30, 50], &seeds)
                    .unwrap();
            for (k, s) in sweep {
                println!("  staleness k={k}: {:.4} +- {:.4}", s.mean, s.std.unwrap_or(0.0));
            }
        }
    }
}
