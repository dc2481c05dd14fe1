//! Serving the relay's own messages and reducing to a 4-user network.
//!
//! Each relay stream gets a dedicated block of relay levels. Blocks are laid
//! out strongest user first, each starting at the user's top reachable level
//! or just below the previous block, whichever is lower. Every user is left
//! with the free levels inside its reach; re-indexing those free levels from
//! the bottom gives the reduced network, in which user `i` reaches
//! `n_{iR} = #free levels in 1..=n_{i5}`.
//!
//! The reduced gains are also available in closed form. Both routes are
//! computed and must agree.

use serde::{Deserialize, Serialize};

use crate::error::ReductionError;
use crate::model::{order_nodes, GainProfile, NodeId, NodeOrdering, RateTuple, ReducedRateTuple};

/// Relay levels reserved for each user's relay stream, indexed by user
/// (`blocks[i - 1]` for user `i`), listed from the highest level down.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LevelAssignment {
    pub blocks: [Vec<u32>; 4],
}

impl LevelAssignment {
    pub fn block(&self, node: NodeId) -> &[u32] {
        &self.blocks[node as usize - 1]
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.iter().all(Vec::is_empty)
    }

    pub fn occupied(&self) -> impl Iterator<Item = u32> + '_ {
        self.blocks.iter().flatten().copied()
    }

    /// Owner of a reserved level, if any.
    pub fn owner(&self, level: u32) -> Option<NodeId> {
        self.blocks
            .iter()
            .position(|b| b.contains(&level))
            .map(|p| p as NodeId + 1)
    }

    /// Unreserved levels in `1..=top`, ascending. Entry `k - 1` is the
    /// physical level behind virtual level `k` of the reduced network.
    pub fn free_levels(&self, top: u32) -> Vec<u32> {
        (1..=top).filter(|l| self.owner(*l).is_none()).collect()
    }

    fn free_within(&self, reach: u32) -> u32 {
        reach - self.occupied().filter(|&l| l <= reach).count() as u32
    }
}

fn assign(gains: &[u32; 4], order: &[NodeId; 4], rates: &[u32; 4]) -> Result<LevelAssignment, ReductionError> {
    let mut out = LevelAssignment::default();
    // Next level available below everything placed so far.
    let mut ceiling = u32::MAX;
    for &node in order {
        let idx = node as usize - 1;
        let rate = rates[idx];
        if rate == 0 {
            continue;
        }
        let start = gains[idx].min(ceiling);
        if rate > start {
            return Err(ReductionError::InsufficientLevels { node, rate, start });
        }
        out.blocks[idx] = (start - rate + 1..=start).rev().collect();
        ceiling = start - rate;
    }
    Ok(out)
}

/// Reserves uplink relay levels for `R_{i5}`; `to_relay[i - 1]` is `R_{i5}`.
pub fn assign_uplink_levels(gains: &GainProfile, to_relay: &[u32; 4]) -> Result<LevelAssignment, ReductionError> {
    assign(&gains.uplink, &order_nodes(gains).uplink, to_relay)
}

/// Reserves downlink relay levels for `R_{5i}`; `from_relay[i - 1]` is `R_{5i}`.
pub fn assign_downlink_levels(gains: &GainProfile, from_relay: &[u32; 4]) -> Result<LevelAssignment, ReductionError> {
    assign(&gains.downlink, &order_nodes(gains).downlink, from_relay)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub original: GainProfile,
    pub ordering: NodeOrdering,
    pub occupied_uplink: LevelAssignment,
    pub occupied_downlink: LevelAssignment,
    /// Levels of the relay stream of `u` (and spill of `t`) inside `v`'s reach.
    pub beta: u32,
    /// Unclamped value of the case table behind `beta`.
    pub beta_raw: i64,
    pub gamma: u32,
    pub gamma_raw: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedNetwork {
    /// `n_{iR}` (uplink) and `n_{Ri}` (downlink).
    pub gains: GainProfile,
    pub rates: ReducedRateTuple,
    pub derivation: Derivation,
}

impl ReducedNetwork {
    /// Physical uplink levels behind the reduced network's virtual levels.
    pub fn uplink_free_levels(&self) -> Vec<u32> {
        let top = self.derivation.original.uplink.iter().copied().max().unwrap_or(0);
        self.derivation.occupied_uplink.free_levels(top)
    }

    pub fn downlink_free_levels(&self) -> Vec<u32> {
        let top = self.derivation.original.downlink.iter().copied().max().unwrap_or(0);
        self.derivation.occupied_downlink.free_levels(top)
    }
}

fn pos(x: i64) -> i64 {
    x.max(0)
}

/// Closed-form reduced gains of one phase, in role order (strongest first).
/// Returns the gains together with the clamped and raw case-table value.
fn closed_form(g: [i64; 4], r: [i64; 4]) -> ([i64; 4], i64, i64) {
    let [n1, n2, n3, n4] = g;
    let [r1, r2, r3, r4] = r;
    let top = n1 - r1 - r2 - r3 - r4;
    let second = n2 - r2 - r3 - r4 - pos(r1 - (n1 - n2));
    let raw = if r1 >= n1 - n3 {
        pos(r1 - (n1 - n3)) + r2
    } else if r1 >= n1 - n2 {
        r2 - (n2 - pos(r1 - (n1 - n2)) - n3)
    } else {
        pos(r2 - (n2 - n3))
    };
    let clamped = pos(raw);
    let third = n3 - r3 - r4 - clamped;
    let fourth = n4
        - r4
        - pos((r1 + r2 + r3 - (n1 - n4))
            .max(r2 + r3 - (n2 - n4))
            .max(r3 - (n3 - n4)));
    ([top, second, third, fourth], clamped, raw)
}

fn phase(
    gains: &[u32; 4],
    order: &[NodeId; 4],
    rates: &[u32; 4],
    assignment: &LevelAssignment,
) -> Result<([u32; 4], u32, i64), ReductionError> {
    let g = order.map(|n| gains[n as usize - 1] as i64);
    let r = order.map(|n| rates[n as usize - 1] as i64);
    let (by_role, clamped, raw) = closed_form(g, r);
    let mut out = [0u32; 4];
    for (k, &node) in order.iter().enumerate() {
        let constructive = assignment.free_within(gains[node as usize - 1]);
        if by_role[k] != constructive as i64 {
            return Err(ReductionError::Mismatch {
                node,
                closed_form: by_role[k].max(0) as u32,
                constructive,
            });
        }
        out[node as usize - 1] = constructive;
    }
    Ok((out, clamped as u32, raw))
}

/// Serves the relay streams and returns the reduced 4-user network.
pub fn reduce(gains: &GainProfile, rates: &RateTuple) -> Result<ReducedNetwork, ReductionError> {
    let ordering = order_nodes(gains);
    let to_relay = rates.to_relay();
    let from_relay = rates.from_relay();
    let occupied_uplink = assign(&gains.uplink, &ordering.uplink, &to_relay)?;
    let occupied_downlink = assign(&gains.downlink, &ordering.downlink, &from_relay)?;
    let (uplink, beta, beta_raw) = phase(&gains.uplink, &ordering.uplink, &to_relay, &occupied_uplink)?;
    let (downlink, gamma, gamma_raw) =
        phase(&gains.downlink, &ordering.downlink, &from_relay, &occupied_downlink)?;
    Ok(ReducedNetwork {
        gains: GainProfile::new(uplink, downlink),
        rates: rates.user_rates(),
        derivation: Derivation {
            original: *gains,
            ordering,
            occupied_uplink,
            occupied_downlink,
            beta,
            beta_raw,
            gamma,
            gamma_raw,
        },
    })
}
