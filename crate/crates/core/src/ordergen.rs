//! Seedable stochastic order streams and the supply/demand forecast derived
//! from them.
//!
//! Daily order-container counts per (origin, dest) pair follow a Poisson law
//! with the pair's configured mean; each day's count is split into orders
//! whose sizes are `1 + Geometric(p)` with `p = 1 / (1 + quantity_dispersion)`.
//! The rate table is configuration shipped with the scenario, not ground
//! truth: the published source only shows aggregate per-port supply/demand.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{PortId, ScenarioConfig, Timetable, VesselId};

/// The demand atom: `quantity` containers from `origin` to `dest` placed on
/// `day`. Origin and destination always share a route (non-transshipment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub day: u32,
    pub origin: PortId,
    pub dest: PortId,
    pub quantity: i64,
}

/// Mean containers/day per ordered pair plus the order-size law.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    pub pair_rates: BTreeMap<(PortId, PortId), f64>,
    pub quantity_dispersion: f64,
    pub rng_seed: u64,
}

impl DemandModel {
    pub fn from_scenario(config: &ScenarioConfig, rng_seed: u64) -> Self {
        let mut pair_rates = BTreeMap::new();
        for (i, p) in config.ports.iter().enumerate() {
            for &(dest, rate) in &p.demand_rate {
                if rate > 0.0 {
                    pair_rates.insert((PortId(i as u16), dest), rate);
                }
            }
        }
        DemandModel { pair_rates, quantity_dispersion: config.quantity_dispersion, rng_seed }
    }
}

/// Generates the order list for one episode. Identical `(model, horizon,
/// seed)` triples produce identical lists; orders come out sorted by
/// (day, origin code order, dest code order) because pairs are iterated in
/// `BTreeMap` order per day.
pub fn generate_orders(model: &DemandModel, horizon: u32, seed: u64) -> Vec<Order> {
    let mixed = model
        .rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let p = 1.0 / (1.0 + model.quantity_dispersion.max(0.0));
    let size_law = Geometric::new(p).expect("p in (0, 1]");
    let laws: Vec<((PortId, PortId), Poisson<f64>)> = model
        .pair_rates
        .iter()
        .filter(|&(_, &rate)| rate > 0.0)
        .map(|(&pair, &rate)| (pair, Poisson::new(rate).expect("rate > 0")))
        .collect();

    let mut orders = Vec::new();
    for day in 0..horizon {
        for &((origin, dest), law) in &laws {
            let mut remaining = law.sample(&mut rng) as i64;
            while remaining > 0 {
                let size = (1 + size_law.sample(&mut rng) as i64).min(remaining);
                orders.push(Order { day, origin, dest, quantity: size });
                remaining -= size;
            }
        }
    }
    orders
}

/// Per-day demand/supply aggregates plus traced laden occupancy, the inputs
/// of the planning baselines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SndForecast {
    /// Containers demanded at (port, day).
    pub demand: BTreeMap<(PortId, u32), i64>,
    /// Empties returned to stock at (port, day).
    pub supply: BTreeMap<(PortId, u32), i64>,
    /// Laden containers aboard (vessel, event day), counted right after the
    /// event's laden exchange.
    pub laden_after_event: BTreeMap<(VesselId, u32), i64>,
}

impl SndForecast {
    pub fn total_demand(&self) -> i64 {
        self.demand.values().sum()
    }
}

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("order pair {origin} -> {dest} is served by no route")]
    NoServingRoute { origin: String, dest: String },
}

/// Builds the fulfill-everything forecast: every order succeeds, its ladens
/// board the first feasible vessel (first event at the origin on or after
/// the order day whose route serves the destination) and the empties return
/// `t_ret` days after the traced discharge. Capacity limits are ignored
/// here; the simulator enforces them.
pub fn snd_profile(
    orders: &[Order],
    config: &ScenarioConfig,
    timetable: &Timetable,
    t_ret: u32,
) -> Result<SndForecast, ForecastError> {
    let mut fc = SndForecast::default();
    for order in orders {
        *fc.demand.entry((order.origin, order.day)).or_insert(0) += order.quantity;
        trace_laden(
            &mut fc,
            config,
            timetable,
            order.origin,
            order.dest,
            order.quantity,
            order.day,
            t_ret,
        )
        .map_err(|_| ForecastError::NoServingRoute {
            origin: config.port_code(order.origin).to_string(),
            dest: config.port_code(order.dest).to_string(),
        })?;
    }
    Ok(fc)
}

/// Traces one laden group from `origin` (boardable from `from_day`) to
/// `dest`, crediting occupancy and the return supply. Groups whose boarding
/// or discharge falls outside the timetable horizon simply stop contributing.
/// Returns `Err(())` when no route serves the pair at all.
pub(crate) fn trace_laden(
    fc: &mut SndForecast,
    config: &ScenarioConfig,
    timetable: &Timetable,
    origin: PortId,
    dest: PortId,
    quantity: i64,
    from_day: u32,
    t_ret: u32,
) -> Result<(), ()> {
    let serves = |v: VesselId| {
        let route = config.vessels[v.idx()].route;
        config.routes[route.idx()].stops.iter().any(|&(p, _)| p == dest)
    };
    let pair_served = config.routes.iter().any(|r| {
        r.stops.iter().any(|&(p, _)| p == origin) && r.stops.iter().any(|&(p, _)| p == dest)
    });
    if !pair_served {
        return Err(());
    }
    let events = &timetable.port_events[origin.idx()];
    let start = events.partition_point(|&(d, _)| d < from_day);
    let boarding = events[start..].iter().find(|&&(_, v)| serves(v));
    let Some(&(board_day, vessel)) = boarding else {
        return Ok(()); // no feasible vessel within the horizon
    };
    let vev = &timetable.vessel_events[vessel.idx()];
    let from = vev.partition_point(|&(d, _)| d <= board_day);
    let discharge = vev[from..].iter().find(|&&(_, p)| p == dest).map(|&(d, _)| d);
    let last = discharge.unwrap_or(u32::MAX);
    for &(d, _) in &vev[..] {
        if d >= board_day && d < last {
            *fc.laden_after_event.entry((vessel, d)).or_insert(0) += quantity;
        }
    }
    if let Some(d) = discharge {
        *fc.supply.entry((dest, d + t_ret)).or_insert(0) += quantity;
    }
    Ok(())
}

/// Serializes orders as the trace file format: one `day origin dest quantity`
/// line per order.
pub fn write_trace(orders: &[Order], config: &ScenarioConfig) -> String {
    let mut out = String::new();
    for o in orders {
        out.push_str(&format!(
            "{} {} {} {}\n",
            o.day,
            config.port_code(o.origin),
            config.port_code(o.dest),
            o.quantity
        ));
    }
    out
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {0}: expected `day origin dest quantity`")]
    Malformed(usize),
    #[error("line {0}: unknown port {1}")]
    UnknownPort(usize, String),
    #[error("line {0}: {1}")]
    InvalidOrder(usize, String),
}

/// Parses the trace file format produced by [`write_trace`].
pub fn parse_trace(text: &str, config: &ScenarioConfig) -> Result<Vec<Order>, TraceError> {
    let mut orders = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(TraceError::Malformed(ln + 1));
        }
        let day: u32 = f[0].parse().map_err(|_| TraceError::Malformed(ln + 1))?;
        let origin = config
            .port_index(f[1])
            .ok_or_else(|| TraceError::UnknownPort(ln + 1, f[1].into()))?;
        let dest = config
            .port_index(f[2])
            .ok_or_else(|| TraceError::UnknownPort(ln + 1, f[2].into()))?;
        let quantity: i64 = f[3].parse().map_err(|_| TraceError::Malformed(ln + 1))?;
        if quantity < 1 {
            return Err(TraceError::InvalidOrder(ln + 1, "quantity must be >= 1".into()));
        }
        if origin == dest {
            return Err(TraceError::InvalidOrder(ln + 1, "origin equals destination".into()));
        }
        orders.push(Order { day, origin, dest, quantity });
    }
    Ok(orders)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin_scenario, derive_timetable};

    #[test]
    fn zero_rates_give_empty_list() {
        let model = DemandModel {
            pair_rates: BTreeMap::new(),
            quantity_dispersion: 3.0,
            rng_seed: 1,
        };
        assert!(generate_orders(&model, 400, 7).is_empty());
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = builtin_scenario();
        let model = DemandModel::from_scenario(&cfg, 11);
        let a = generate_orders(&model, 200, 42);
        let b = generate_orders(&model, 200, 42);
        assert_eq!(a, b);
        let c = generate_orders(&model, 200, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn orders_are_sorted_and_poisson_totals_concentrate() {
        let mut rates = BTreeMap::new();
        rates.insert((PortId(0), PortId(1)), 5.0);
        let model = DemandModel { pair_rates: rates, quantity_dispersion: 3.0, rng_seed: 0 };
        let orders = generate_orders(&model, 400, 1);
        let total: i64 = orders.iter().map(|o| o.quantity).sum();
        // mean 2000, sigma = sqrt(2000) ~ 44.7
        let sigma = 2000f64.sqrt();
        assert!((total as f64 - 2000.0).abs() < 3.0 * sigma, "total {total}");
        for w in orders.windows(2) {
            assert!(w[0].day <= w[1].day);
        }
    }

    #[test]
    fn per_port_daily_mean_converges() {
        let cfg = builtin_scenario();
        let model = DemandModel::from_scenario(&cfg, 3);
        let orders = generate_orders(&model, 400, 9);
        for (pi, port) in cfg.ports.iter().enumerate() {
            let rate: f64 = port.demand_rate.iter().map(|&(_, r)| r).sum();
            let total: i64 = orders
                .iter()
                .filter(|o| o.origin == PortId(pi as u16))
                .map(|o| o.quantity)
                .sum();
            let mean = rate * 400.0;
            let sigma = mean.max(1.0).sqrt();
            assert!(
                (total as f64 - mean).abs() <= 3.0 * sigma,
                "port {} total {} expected {}",
                port.code,
                total,
                mean
            );
        }
    }

    #[test]
    fn snd_profile_traces_builtin_r4_order() {
        let cfg = builtin_scenario();
        let tt = derive_timetable(&cfg);
        let tky = cfg.port_index("TKY").unwrap();
        let koy = cfg.port_index("KOY").unwrap();
        let orders = vec![Order { day: 0, origin: tky, dest: koy, quantity: 10 }];
        let fc = snd_profile(&orders, &cfg, &tt, 1).unwrap();
        assert_eq!(fc.demand.get(&(tky, 0)), Some(&10));
        assert_eq!(fc.supply.get(&(koy, 3)), Some(&10)); // discharge day 2 + t_ret 1
    }

    #[test]
    fn empty_orders_mean_empty_forecast() {
        let cfg = builtin_scenario();
        let tt = derive_timetable(&cfg);
        let fc = snd_profile(&[], &cfg, &tt, 1).unwrap();
        assert!(fc.demand.is_empty() && fc.supply.is_empty());
    }

    #[test]
    fn demand_accumulates_per_pair_and_day() {
        let cfg = builtin_scenario();
        let tt = derive_timetable(&cfg);
        let tky = cfg.port_index("TKY").unwrap();
        let koy = cfg.port_index("KOY").unwrap();
        let o = Order { day: 5, origin: tky, dest: koy, quantity: 7 };
        let fc = snd_profile(&[o, o], &cfg, &tt, 1).unwrap();
        assert_eq!(fc.demand.get(&(tky, 5)), Some(&14));
    }

    #[test]
    fn unserved_pair_is_an_error() {
        let cfg = builtin_scenario();
        let tt = derive_timetable(&cfg);
        let skz = cfg.port_index("SKZ").unwrap();
        let stn = cfg.port_index("STN").unwrap();
        let orders = vec![Order { day: 0, origin: skz, dest: stn, quantity: 1 }];
        let err = snd_profile(&orders, &cfg, &tt, 1).unwrap_err();
        assert!(err.to_string().contains("SKZ"));
    }

    #[test]
    fn forecast_conserves_when_discharges_land_in_horizon() {
        let cfg = builtin_scenario();
        let tt = derive_timetable(&cfg);
        let model = DemandModel::from_scenario(&cfg, 5);
        // Stop generating early enough that every laden lands.
        let orders = generate_orders(&model, 150, 4);
        let fc = snd_profile(&orders, &cfg, &tt, 1).unwrap();
        let d: i64 = fc.demand.values().sum();
        let s: i64 = fc.supply.values().sum();
        assert_eq!(d, s, "demand {d} supply {s}");
    }

    #[test]
    fn trace_roundtrip() {
        let cfg = builtin_scenario();
        let model = DemandModel::from_scenario(&cfg, 2);
        let orders = generate_orders(&model, 30, 8);
        let text = write_trace(&orders, &cfg);
        let parsed = parse_trace(&text, &cfg).unwrap();
        assert_eq!(orders, parsed);
    }
}
