//! Shared oracles for integration tests: exhaustive enumeration over small
//! flow instances and a deterministic random-instance generator.

use ecr_core::flowopt::{FlowArc, FlowNetwork};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Brute force over all integral arc flows; conservation checked against
/// the node imbalances, partial costs pruned against the best-so-far using
/// a suffix bound of the remaining arcs' most negative contribution.
pub fn enumerate_min_cost(net: &FlowNetwork) -> Option<i64> {
    let n = net.arcs.len();
    let mut neg_suffix = vec![0i64; n + 1];
    for i in (0..n).rev() {
        let a = &net.arcs[i];
        neg_suffix[i] = neg_suffix[i + 1] + (a.cost * a.cap).min(0);
    }
    let mut best: Option<i64> = None;
    let mut balance = vec![0i64; net.num_nodes];
    fn recurse(
        net: &FlowNetwork,
        i: usize,
        cost: i64,
        balance: &mut [i64],
        neg_suffix: &[i64],
        best: &mut Option<i64>,
    ) {
        if let Some(b) = *best {
            if cost + neg_suffix[i] >= b {
                return;
            }
        }
        if i == net.arcs.len() {
            if balance.iter().zip(&net.imbalance).all(|(b, im)| b == im) {
                *best = Some(best.map_or(cost, |b| b.min(cost)));
            }
            return;
        }
        let a = net.arcs[i];
        for f in 0..=a.cap {
            balance[a.tail as usize] += f;
            balance[a.head as usize] -= f;
            recurse(net, i + 1, cost + f * a.cost, balance, neg_suffix, best);
            balance[a.tail as usize] -= f;
            balance[a.head as usize] += f;
        }
    }
    recurse(net, 0, 0, &mut balance, &neg_suffix, &mut best);
    best
}

/// Random DAG instance with at most 12 decision variables (arc flows).
pub fn random_instance(rng: &mut ChaCha8Rng) -> FlowNetwork {
    let nodes = rng.random_range(3..6usize);
    let arcs_n = rng.random_range(4..=12usize);
    let mut arcs = Vec::new();
    for _ in 0..arcs_n {
        // DAG arcs (tail < head) keep negative costs cycle-free.
        let tail = rng.random_range(0..nodes - 1) as u32;
        let head = rng.random_range(tail as usize + 1..nodes) as u32;
        arcs.push(FlowArc {
            tail,
            head,
            cap: rng.random_range(0..=2),
            cost: rng.random_range(-2..=3),
        });
    }
    let mut imbalance = vec![0i64; nodes];
    let supply = rng.random_range(0..=3i64);
    imbalance[0] = supply;
    imbalance[nodes - 1] = -supply;
    FlowNetwork { num_nodes: nodes, arcs, imbalance }
}
