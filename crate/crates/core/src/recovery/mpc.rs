//! Receding-horizon search over repair orders.
//!
//! Networks are optimised one after another (water, power, roads). For the
//! network being optimised, every ordering of `k` of its remaining failed
//! components is appended to the committed prefix, the rest follow in id
//! order, and the resulting schedule is simulated. Only the first component
//! of the best ordering is committed; the search then repeats. Networks not
//! yet optimised keep id order, those already done keep their committed
//! order.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::DisasterScenario;
use crate::metrics::{EohWeights, Mop};
use crate::network::Network;
use crate::simulation::{build_event_table, Simulator};

use super::{Crew, RepairOrder};

/// Largest number of orderings evaluated in one step.
pub const MAX_PERMUTATIONS: u128 = 10_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MpcOptions {
    pub weights: EohWeights,
    pub mop: Mop,
}

/// `n! / (n-k)!`
fn permutations(n: usize, k: usize) -> u128 {
    (n - k + 1..=n).map(|x| x as u128).product()
}

/// Weighted EOH of the schedule that follows `order`.
pub fn evaluate_order(
    sim: &Simulator,
    scenario: &DisasterScenario,
    crews: &[Crew],
    order: &RepairOrder,
    options: &MpcOptions,
) -> Result<f64> {
    let params = sim.params();
    let table = build_event_table(
        sim.network(),
        sim.roads(),
        scenario,
        order,
        crews,
        &params.durations,
        &params.assignment,
    )?;
    sim.simulate(&table, None)?.weighted_eoh(options.mop, options.weights)
}

/// Repair order found by receding-horizon search with prediction horizon `k`.
pub fn mpc_sequence(
    sim: &Simulator,
    scenario: &DisasterScenario,
    crews: &[Crew],
    k: usize,
    options: &MpcOptions,
) -> Result<RepairOrder> {
    if k == 0 {
        return Err(Error::InvalidInput("prediction horizon must be at least 1".into()));
    }
    let net = sim.network();
    let mut base = RepairOrder::new();
    for id in scenario.failed_ids() {
        base.entry(net.require(id)?.network()).or_default().push(id.to_string());
    }
    for list in base.values_mut() {
        list.sort();
    }
    for list in base.values() {
        let n = list.len();
        let p = permutations(n, k.min(n));
        if p > MAX_PERMUTATIONS {
            return Err(Error::HorizonTooLarge { permutations: p, limit: MAX_PERMUTATIONS });
        }
    }

    let mut order = base.clone();
    for network in Network::ALL {
        let Some(pending) = base.get(&network) else { continue };
        let mut committed: Vec<String> = Vec::new();
        let mut remaining = pending.clone();
        while remaining.len() > 1 {
            let depth = k.min(remaining.len());
            let candidates: Vec<Vec<String>> = remaining
                .iter()
                .cloned()
                .permutations(depth)
                .map(|perm| {
                    let rest = remaining.iter().filter(|id| !perm.contains(id)).cloned();
                    committed.iter().cloned().chain(perm.iter().cloned()).chain(rest).collect()
                })
                .collect();
            let scores: Vec<Result<f64>> = candidates
                .par_iter()
                .map(|list| {
                    let mut o = order.clone();
                    o.insert(network, list.clone());
                    evaluate_order(sim, scenario, crews, &o, options)
                })
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in scores.into_iter().enumerate() {
                let s = s?;
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
            let (i, score) = best.expect("at least one candidate");
            let next = candidates[i][committed.len()].clone();
            log::debug!("mpc {network}: commit {next} (weighted EOH {score:.6})");
            remaining.retain(|id| *id != next);
            committed.push(next);
        }
        committed.extend(remaining);
        order.insert(network, committed);
    }
    Ok(order)
}
