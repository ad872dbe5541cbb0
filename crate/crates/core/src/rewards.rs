//! Shaped delayed rewards between consecutive agent snapshots.
//!
//! `r_I = f(C) - g(sum L)` rewards safety stock at the acted port with
//! diminishing marginal gain and charges the shortage accumulated since the
//! previous snapshot. `r_C` applies the same shape to 2-layer averages over
//! the crossing routes, and `r_D = alpha * r_I + (1 - alpha) * r_C` blends
//! them. With the defaults `f(x) = 1 - 0.5^x` and `g(y) = 5y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Snapshot, World};
use crate::features::AwarenessLevel;
use crate::scalar::{from_count, Real};
use crate::scenario::{PortId, RouteId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig<R: Real> {
    /// Mixing weight of the own-port term in `r_D`.
    pub alpha: R,
    /// Base of the safety-stock gain, in (0, 1).
    pub f_base: R,
    /// Slope of the shortage loss.
    pub g_scale: R,
}

impl<R: Real> Default for RewardConfig<R> {
    fn default() -> Self {
        RewardConfig {
            alpha: crate::scalar::real(0.5),
            f_base: crate::scalar::real(0.5),
            g_scale: crate::scalar::real(5.0),
        }
    }
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("snapshots out of order: prev day {prev} after now day {now}")]
    OutOfOrder { prev: u32, now: u32 },
}

/// `f` on an integral stock count (exact powers).
pub fn safety_gain_count<R: Real>(stock: i64, f_base: R) -> R {
    if stock <= 0 {
        return R::zero();
    }
    R::one() - f_base.powi(stock.min(i32::MAX as i64) as i32)
}

/// `f` on a real argument (2-layer averages are fractional).
pub fn safety_gain<R: Real>(x: R, f_base: R) -> R {
    if x <= R::zero() {
        return R::zero();
    }
    R::one() - f_base.powf(x)
}

/// Own-port delayed reward over the window `(prev.day, now.day]`.
pub fn reward_self<R: Real>(
    _world: &World,
    prev: &Snapshot,
    now: &Snapshot,
    port: PortId,
    cfg: &RewardConfig<R>,
) -> Result<R, RewardError> {
    if now.day() < prev.day() {
        return Err(RewardError::OutOfOrder { prev: prev.day(), now: now.day() });
    }
    let stock = now.state.port_stock[port.idx()];
    let shortage = now.state.history.shortage_window(port, prev.day(), now.day());
    Ok(safety_gain_count(stock, cfg.f_base) - cfg.g_scale * from_count::<R>(shortage))
}

/// Cross-route delayed reward: `f` and `g` applied to 2-layer averages over
/// the routes crossing `route`. Empty crossing sets contribute zero.
pub fn reward_cross<R: Real>(
    world: &World,
    prev: &Snapshot,
    now: &Snapshot,
    route: RouteId,
    cfg: &RewardConfig<R>,
) -> Result<R, RewardError> {
    if now.day() < prev.day() {
        return Err(RewardError::OutOfOrder { prev: prev.day(), now: now.day() });
    }
    let crossing = &world.topology.crossing_routes[route.idx()];
    if crossing.is_empty() {
        log::debug!(
            "route {} has no crossing routes; cross reward is 0",
            world.config.routes[route.idx()].id
        );
        return Ok(R::zero());
    }
    let mut stock_mean = R::zero();
    let mut shortage_mean = R::zero();
    for &r in crossing {
        let ports = &world.topology.route_ports[r.idx()];
        let mut stock = 0i64;
        let mut shortage = 0i64;
        for &p in ports {
            stock += now.state.port_stock[p.idx()];
            shortage += now.state.history.shortage_window(p, prev.day(), now.day());
        }
        let n = from_count::<R>(ports.len() as i64);
        stock_mean += from_count::<R>(stock) / n;
        shortage_mean += from_count::<R>(shortage) / n;
    }
    let n = from_count::<R>(crossing.len() as i64);
    let xi1 = stock_mean / n;
    let xi2 = shortage_mean / n;
    Ok(safety_gain(xi1, cfg.f_base) - cfg.g_scale * xi2)
}

/// `r_D = alpha * r_I + (1 - alpha) * r_C`.
pub fn reward_diplomatic<R: Real>(r_i: R, r_c: R, cfg: &RewardConfig<R>) -> R {
    cfg.alpha * r_i + (R::one() - cfg.alpha) * r_c
}

/// Level dispatch used by the training loop: self and territorial agents
/// learn from `r_I`, diplomatic agents from `r_D`.
pub fn delayed_reward<R: Real>(
    world: &World,
    prev: &Snapshot,
    now: &Snapshot,
    port: PortId,
    route: RouteId,
    level: AwarenessLevel,
    cfg: &RewardConfig<R>,
) -> Result<R, RewardError> {
    let r_i = reward_self(world, prev, now, port, cfg)?;
    match level {
        AwarenessLevel::SelfAware | AwarenessLevel::Territorial => Ok(r_i),
        AwarenessLevel::Diplomatic => {
            let r_c = reward_cross(world, prev, now, route, cfg)?;
            Ok(reward_diplomatic(r_i, r_c, cfg))
        }
    }
}
