//! Exhaustive-enumeration oracle for the min-cost-flow solver and the
//! engine-level planning optimum on tiny scenarios.

mod common;

use std::sync::Arc;

use common::{enumerate_min_cost, random_instance};
use ecr_core::baselines::{offline_optimal, OnlineLpPolicy, RollingConfig};
use ecr_core::engine::{action_for_move, run_episode_with, Env, Step, World};
use ecr_core::flowopt::{solve_min_cost_flow, verify_optimality, DEFAULT_BIG_M};
use ecr_core::ordergen::Order;
use ecr_core::scenario::parse_scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Acceptance criterion: 200 randomized instances with at most 12 decision
/// variables agree exactly with exhaustive enumeration.
#[test]
fn solver_matches_enumeration_on_200_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xECF);
    let mut checked = 0;
    let start = std::time::Instant::now();
    while checked < 200 {
        let net = random_instance(&mut rng);
        let oracle = enumerate_min_cost(&net);
        match (solve_min_cost_flow(&net), oracle) {
            (Ok(sol), Some(best)) => {
                assert_eq!(sol.cost, best, "instance {checked}: {net:?}");
                verify_optimality(&net, &sol).unwrap();
                // Integrality is structural (i64 flows) but bounds are not.
                for (f, a) in sol.flows.iter().zip(&net.arcs) {
                    assert!(*f >= 0 && *f <= a.cap);
                }
                checked += 1;
            }
            (Err(_), None) => {
                checked += 1; // both agree the instance is infeasible
            }
            (Ok(sol), None) => panic!("solver found cost {} on infeasible instance", sol.cost),
            (Err(e), Some(best)) => panic!("solver failed ({e}) but oracle found {best}"),
        }
    }
    assert!(start.elapsed().as_secs() < 10, "oracle run too slow");
}

fn oracle_world() -> Arc<World> {
    // 2 ports, 1 vessel, 10 days, unit orders: no atomicity splits, so the
    // planning relaxation is exact.
    let text = "\
[general]
total_containers 6
episode_days 10
t_ret 1
vessel_capacity 4
quantity_dispersion 0.0
[ports]
AAA Alpha 6 BBB:0.5
BBB Beta 0 AAA:0.5
[routes]
T1 6 1 AAA:0 BBB:3
";
    Arc::new(World::new(parse_scenario(text).unwrap()).unwrap())
}

fn unit_orders(world: &World, pattern: &[(u32, &str, &str)]) -> Vec<Order> {
    pattern
        .iter()
        .map(|&(day, o, d)| Order {
            day,
            origin: world.config.port_index(o).unwrap(),
            dest: world.config.port_index(d).unwrap(),
            quantity: 1,
        })
        .collect()
}

/// Enumerates every integral plan over the episode's events (x in
/// [-cap, cap] per event, realized through the fractional-action bridge)
/// and returns the minimum simulated shortage.
fn enumerate_engine_optimum(world: &Arc<World>, orders: &Arc<Vec<Order>>) -> i64 {
    let cap = world.config.vessels[0].capacity;
    let events: usize = world.timetable.vessel_events.iter().map(|v| v.len()).sum();
    let mut best = i64::MAX;
    let mut plan = vec![0i64; events];
    fn recurse(
        world: &Arc<World>,
        orders: &Arc<Vec<Order>>,
        plan: &mut Vec<i64>,
        at: usize,
        cap: i64,
        best: &mut i64,
    ) {
        if at == plan.len() {
            let mut idx = 0usize;
            let counters = run_episode_with(
                world,
                orders,
                |env: &Env, event| {
                    let x = plan[idx];
                    idx += 1;
                    action_for_move(x, env.action_bases(event))
                },
                None,
            )
            .unwrap();
            *best = (*best).min(counters.total_failed());
            return;
        }
        for x in -cap..=cap {
            plan[at] = x;
            recurse(world, orders, plan, at + 1, cap, best);
        }
        plan[at] = 0;
    }
    recurse(world, orders, &mut plan, 0, cap, &mut best);
    best
}

#[test]
fn planning_bound_is_tight_on_gap_free_instances() {
    let world = oracle_world();
    let cases: Vec<Vec<Order>> = vec![
        unit_orders(&world, &[(1, "BBB", "AAA"), (2, "BBB", "AAA"), (5, "BBB", "AAA")]),
        unit_orders(&world, &[(0, "AAA", "BBB"), (4, "BBB", "AAA"), (7, "BBB", "AAA")]),
        unit_orders(
            &world,
            &[(1, "AAA", "BBB"), (2, "BBB", "AAA"), (4, "BBB", "AAA"), (8, "AAA", "BBB")],
        ),
    ];
    for orders in cases {
        let orders = Arc::new(orders);
        let engine_best = enumerate_engine_optimum(&world, &orders);
        let bound = offline_optimal(&world, &orders, DEFAULT_BIG_M).unwrap();
        // The planning bound can never be worse than what any execution
        // achieves, and on these gap-free instances it is exact.
        assert!(
            bound.shortage <= engine_best,
            "bound {} above engine optimum {}",
            bound.shortage,
            engine_best
        );
        assert_eq!(bound.shortage, engine_best, "gap-free instance should be tight");

        // The rolling policy with full horizon realizes the bound.
        let mut policy = OnlineLpPolicy::new(
            RollingConfig { horizon_days: 10, window_days: 10, big_m: DEFAULT_BIG_M },
            None,
        );
        let counters = run_episode_with(
            &world,
            &orders,
            |env: &Env, event| policy.act(env, event).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(counters.total_failed(), bound.shortage);
    }
}

#[test]
fn upper_bound_holds_for_every_policy_on_small_instances() {
    let world = oracle_world();
    let orders = Arc::new(unit_orders(
        &world,
        &[(1, "BBB", "AAA"), (3, "AAA", "BBB"), (4, "BBB", "AAA"), (6, "BBB", "AAA")],
    ));
    let bound = offline_optimal(&world, &orders, DEFAULT_BIG_M).unwrap();
    // A handful of hand policies, none may beat the bound.
    let fixed: Vec<f64> = vec![-1.0, -0.5, 0.0, 0.3, 0.7, 1.0];
    for a0 in fixed {
        let counters = run_episode_with(&world, &orders, |_: &Env, _| a0, None).unwrap();
        assert!(
            counters.total_failed() >= bound.shortage,
            "action {a0} beat the planning bound"
        );
    }
    // And the exhaustive engine optimum is bounded too.
    let engine_best = enumerate_engine_optimum(&world, &orders);
    assert!(engine_best >= bound.shortage);
}

/// The environment census stays conserved while the LP policy drives it.
#[test]
fn online_policy_preserves_conservation() {
    let world = oracle_world();
    let orders = Arc::new(unit_orders(
        &world,
        &[(0, "AAA", "BBB"), (2, "BBB", "AAA"), (5, "AAA", "BBB"), (7, "BBB", "AAA")],
    ));
    let mut env = Env::new(world.clone(), orders.clone());
    let mut policy = OnlineLpPolicy::new(
        RollingConfig { horizon_days: 6, window_days: 2, big_m: DEFAULT_BIG_M },
        None,
    );
    loop {
        match env.advance_until_event().unwrap() {
            Step::Event(e) => {
                let a = policy.act(&env, e).unwrap();
                env.execute_action(e, a).unwrap();
                assert_eq!(env.container_census().total(), 6);
            }
            Step::End => break,
        }
    }
}
