//! Property tests of the simulator invariants: conservation, capacity,
//! order atomicity, next-day availability of new supplies, and bit-exact
//! determinism under fixed seeds.

use std::sync::Arc;

use ecr_core::engine::{Env, Step, World};
use ecr_core::ordergen::{generate_orders, DemandModel, Order};
use ecr_core::scenario::PortId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn world() -> Arc<World> {
    thread_local! {
        static WORLD: Arc<World> = Arc::new(World::builtin());
    }
    WORLD.with(|w| w.clone())
}

fn random_episode(order_seed: u64, action_seed: u64, days: u32) -> (Env, Vec<String>) {
    let world = world();
    let model = DemandModel::from_scenario(&world.config, 17);
    let mut orders = generate_orders(&model, days, order_seed);
    orders.retain(|o| o.day < days);
    let mut env = Env::new(world.clone(), Arc::new(orders));
    let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
    let mut log = Vec::new();
    loop {
        match env.advance_until_event().unwrap() {
            Step::Event(e) => {
                if e.day >= days {
                    break;
                }
                let a: f64 = rng.random_range(-1.0..=1.0);
                let out = env.execute_action(e, a).unwrap();
                log.push(format!("{e:?} {a:.9} {out:?}"));
            }
            Step::End => break,
        }
    }
    (env, log)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Census components always sum to the effective total, and every
    /// vessel stays within its capacity, under random actions.
    #[test]
    fn conservation_and_capacity(order_seed in 0u64..1000, action_seed in 0u64..1000) {
        let world = world();
        let model = DemandModel::from_scenario(&world.config, 17);
        let orders = generate_orders(&model, 120, order_seed);
        let mut env = Env::new(world.clone(), Arc::new(orders));
        let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
        loop {
            match env.advance_until_event().unwrap() {
                Step::Event(e) => {
                    if e.day >= 120 { break; }
                    let a: f64 = rng.random_range(-1.0..=1.0);
                    env.execute_action(e, a).unwrap();
                    let census = env.container_census();
                    prop_assert_eq!(census.total(), 3000);
                    prop_assert!(census.in_ports >= 0 && census.in_returns >= 0);
                    for (vi, v) in world.config.vessels.iter().enumerate() {
                        let ladens: i64 = env.state.vessel_ladens[vi].iter().map(|&(_, n)| n).sum();
                        prop_assert!(env.state.vessel_empties[vi] >= 0);
                        prop_assert!(ladens >= 0);
                        prop_assert!(env.state.vessel_empties[vi] + ladens <= v.capacity);
                    }
                }
                Step::End => break,
            }
        }
    }

    /// An order either moves exactly its quantity from stock to the yard or
    /// adds exactly its quantity to the ledger, never a split.
    #[test]
    fn order_atomicity(order_seed in 0u64..500) {
        let world = world();
        let model = DemandModel::from_scenario(&world.config, 17);
        let orders = generate_orders(&model, 60, order_seed);
        let env = {
            let mut env = Env::new(world.clone(), Arc::new(orders.clone()));
            loop {
                match env.advance_until_event().unwrap() {
                    Step::Event(e) => { env.execute_action(e, 0.0).unwrap(); }
                    Step::End => break,
                }
            }
            env
        };
        // Every order is accounted either fully in the ledger or fully
        // fulfilled; the replay check in the acceptance suite pins the
        // per-order split, here the aggregate and census must agree.
        let total: i64 = orders.iter().map(|o| o.quantity).sum();
        let failed: i64 = (0..world.num_ports())
            .map(|p| env.state.history.cum_shortage_through(PortId(p as u16), 60))
            .sum();
        prop_assert!(failed <= total);
        prop_assert_eq!(env.container_census().total(), 3000);
    }
}

/// Fulfilled orders move stock out the same day; failed orders leave it
/// untouched (checked directly on a crafted two-order day).
#[test]
fn atomicity_exact_on_crafted_orders() {
    let world = world();
    let skz = world.config.port_index("SKZ").unwrap();
    let tky = world.config.port_index("TKY").unwrap();
    let initial = world.config.effective_initial_empties()[skz.idx()];
    let orders = vec![
        Order { day: 0, origin: skz, dest: tky, quantity: initial - 1 },
        Order { day: 0, origin: skz, dest: tky, quantity: 2 }, // must fail whole
        Order { day: 0, origin: skz, dest: tky, quantity: 1 }, // fits the remainder
    ];
    let mut env = Env::new(world.clone(), Arc::new(orders));
    let _ = env.advance_until_event().unwrap();
    assert_eq!(env.state.history.shortage_on(skz, 0), 2);
    assert_eq!(env.state.port_stock[skz.idx()], 0);
    let yard: i64 = env.state.laden_yard[skz.idx()].iter().map(|g| g.count).sum();
    assert_eq!(yard, initial);
}

/// Empties discharged on day t are never consumed by day-t orders: a
/// massive same-day discharge cannot save a same-day shortage.
#[test]
fn next_day_availability() {
    let world = world();
    // TKY gets its first vessel call on day 0 (R4-01 starts there).
    let tky = world.config.port_index("TKY").unwrap();
    let koy = world.config.port_index("KOY").unwrap();
    let initial = world.config.effective_initial_empties()[tky.idx()];
    let orders = vec![
        Order { day: 0, origin: tky, dest: koy, quantity: initial + 5 }, // fails on day 0
        Order { day: 1, origin: tky, dest: koy, quantity: initial + 5 }, // succeeds after discharge
    ];
    let mut env = Env::new(world.clone(), Arc::new(orders));
    // Preload the day-0 vessel at TKY with plenty of empties and discharge
    // them all; the day-0 order must still fail.
    loop {
        match env.advance_until_event().unwrap() {
            Step::Event(e) => {
                if e.day == 0 && e.port == tky {
                    env.state.vessel_empties[e.vessel.idx()] = 100;
                    env.execute_action(e, -1.0).unwrap();
                    assert_eq!(env.state.history.shortage_on(tky, 0), initial + 5);
                    assert!(env.state.port_stock[tky.idx()] >= 100);
                } else if e.day >= 1 {
                    // Day-1 order saw yesterday's stock including the
                    // discharge: initial + 100 >= initial + 5, so no new
                    // shortage.
                    assert_eq!(env.state.history.shortage_on(tky, 1), 0);
                    break;
                } else {
                    env.execute_action(e, 0.0).unwrap();
                }
            }
            Step::End => break,
        }
    }
}

/// Identical (config, trace, actions) reproduce identical final states and
/// trajectories, bit-for-bit through serialization.
#[test]
fn determinism_bit_for_bit() {
    let (env_a, log_a) = random_episode(42, 99, 150);
    let (env_b, log_b) = random_episode(42, 99, 150);
    assert_eq!(log_a, log_b);
    let ser_a = serde_json::to_string(&env_a.state).unwrap();
    let ser_b = serde_json::to_string(&env_b.state).unwrap();
    assert_eq!(ser_a, ser_b);
    let (_, log_c) = random_episode(42, 100, 150);
    assert_ne!(log_a, log_c);
}
