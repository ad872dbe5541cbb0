//! Probe how much a diplomatic checkpoint relies on the cross-route
//! feature block: evaluate intact, with the block zeroed, and at a few
//! staleness values.
//!
//! Usage: lesion <checkpoint-dir> [seeds]

use std::sync::Arc;

use ecr_core::engine::{run_episode_with, World};
use ecr_core::features::{build_state, layout};
use ecr_core::harness::{eval_seeds, LearnedPolicy};
use ecr_core::learner::{action_decode, argmax, load_checkpoint_set, Workspace};
use ecr_core::ordergen::{generate_orders, DemandModel};
use ecr_core::Scalar;

fn main() {
    let dir = std::env::args().nth(1).expect("checkpoint dir");
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(6);
    let world = Arc::new(World::builtin());
    let model = DemandModel::from_scenario(&world.config, 0);
    let (nets, fcfg) = load_checkpoint_set::<Scalar>(std::path::Path::new(&dir), &world).unwrap();
    let policy = LearnedPolicy { nets, fcfg };
    let lay = layout(&world, &policy.fcfg);
    let (_, cross_start, _) = lay
        .blocks
        .iter()
        .find(|(name, _, _)| name == "crossing_mean")
        .cloned()
        .unwrap();

    let seeds = eval_seeds(1000, n);
    for mode in ["intact", "lesioned"] {
        let mut ratios = Vec::new();
        for &seed in &seeds {
            let orders =
                Arc::new(generate_orders(&model, world.config.episode_days, seed));
            let mut ws = Workspace::default();
            let counters = run_episode_with(
                &world,
                &orders,
                |env, event| {
                    let snap = env.snapshot();
                    let mut s = build_state::<Scalar>(&world, &snap, &policy.fcfg);
                    if mode == "lesioned" {
                        for v in &mut s.values[cross_start..cross_start + 4] {
                            *v = 0.0;
                        }
                    }
                    let route = world.vessel_route(event.vessel);
                    let q = policy.nets[route.idx()].forward(&s.values, &mut ws).unwrap();
                    action_decode(argmax(q)).unwrap()
                },
                None,
            )
            .unwrap();
            ratios.push(counters.fulfillment_ratio());
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        println!("{mode:<9} {mean:.4}");
    }
}
