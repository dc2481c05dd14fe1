//! Simple ordering scheme on a reduced 4-user network.
//!
//! Every unordered pair `{i, j}` contributes `min(R_ij, R_ji)` XOR entries
//! (bit `n` of `i -> j` combined with bit `n` of `j -> i`) and the surplus of
//! the larger direction as single entries. Each entry occupies exactly one
//! uplink level and one downlink level.
//!
//! Uplink segments are keyed by the weaker uplink node of a pair (or the
//! source of a single) and stacked from level 1 upward in the order
//! `w, v, u, t`. Downlink segments are keyed by the weaker downlink node of a
//! pair (or the destination of a single) and stacked `d, c, b, a`. The relay
//! only permutes levels.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::model::{order_nodes, GainProfile, NodeId, NodeOrdering, ReducedRateTuple, USERS};
use crate::reduction::ReducedNetwork;
use crate::region::Edge;

/// Bit `index` (1-based) of the stream `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitId {
    pub from: NodeId,
    pub to: NodeId,
    pub index: u32,
}

impl BitId {
    pub fn new(from: NodeId, to: NodeId, index: u32) -> Self {
        Self { from, to, index }
    }
}

impl fmt::Display for BitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}{}^{}", self.from, self.to, self.index)
    }
}

/// One relay level's worth of payload: a single bit or an XOR pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entry {
    pub bits: Vec<BitId>,
}

impl Entry {
    fn single(bit: BitId) -> Self {
        Self { bits: vec![bit] }
    }

    /// Constituent bits are kept in stream order so both phases agree.
    fn paired(a: BitId, b: BitId) -> Self {
        Self { bits: vec![a.min(b), a.max(b)] }
    }

    pub fn is_paired(&self) -> bool {
        self.bits.len() == 2
    }

    /// Nodes that transmit a constituent bit.
    pub fn senders(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.iter().map(|b| b.from)
    }

    /// Nodes that must recover a constituent bit.
    pub fn receivers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.iter().map(|b| b.to)
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bits.iter().map(BitId::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedBits {
    pub a: Edge,
    pub b: Edge,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleBits {
    pub stream: Edge,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub owner: NodeId,
    pub paired: Vec<PairedBits>,
    pub singles: Vec<SingleBits>,
    pub entries: Vec<Entry>,
}

impl Segment {
    pub fn size(&self) -> u32 {
        self.entries.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segments {
    /// Owned by `w, v, u, t`, in that order.
    pub uplink: Vec<Segment>,
    /// Owned by `d, c, b, a`, in that order.
    pub downlink: Vec<Segment>,
}

/// Entries of the pair `{owner, k}` that land in `owner`'s segment, where
/// `keep_single` says whether a surplus bit `from -> to` belongs there.
fn segment(
    rates: &ReducedRateTuple,
    owner: NodeId,
    partners: &[NodeId],
    keep_single: impl Fn(NodeId, NodeId) -> bool,
) -> Segment {
    let mut seg = Segment {
        owner,
        paired: Vec::new(),
        singles: Vec::new(),
        entries: Vec::new(),
    };
    for &k in partners {
        let phi = rates.get(owner, k).min(rates.get(k, owner));
        if phi > 0 {
            seg.paired.push(PairedBits {
                a: Edge(owner, k),
                b: Edge(k, owner),
                count: phi,
            });
            for n in 1..=phi {
                seg.entries
                    .push(Entry::paired(BitId::new(owner, k, n), BitId::new(k, owner, n)));
            }
        }
    }
    for &k in USERS.iter().filter(|&&k| k != owner) {
        for (from, to) in [(owner, k), (k, owner)] {
            let (mine, theirs) = (rates.get(from, to), rates.get(to, from));
            if mine > theirs && keep_single(from, to) {
                seg.singles.push(SingleBits {
                    stream: Edge(from, to),
                    count: mine - theirs,
                });
                for n in theirs + 1..=mine {
                    seg.entries.push(Entry::single(BitId::new(from, to, n)));
                }
            }
        }
    }
    seg
}

fn phase_segments(rates: &ReducedRateTuple, roles: &[NodeId; 4], uplink: bool) -> Vec<Segment> {
    // Weakest first; pairs go to the weaker node, i.e. the partner must
    // appear later in this list.
    let weakest_first: Vec<NodeId> = roles.iter().rev().copied().collect();
    weakest_first
        .iter()
        .enumerate()
        .map(|(pos, &owner)| {
            let mut stronger: Vec<NodeId> = weakest_first[pos + 1..].to_vec();
            stronger.sort_unstable();
            segment(rates, owner, &stronger, |from, to| {
                if uplink {
                    from == owner
                } else {
                    to == owner
                }
            })
        })
        .collect()
}

pub fn build_segments(rates: &ReducedRateTuple, ordering: &NodeOrdering) -> Segments {
    Segments {
        uplink: phase_segments(rates, &ordering.uplink, true),
        downlink: phase_segments(rates, &ordering.downlink, false),
    }
}

/// An entry with its relay-level positions in both phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEntry {
    pub entry: Entry,
    pub uplink_level: u32,
    pub downlink_level: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSchedule {
    /// Reduced gains the schedule was built for.
    pub gains: GainProfile,
    pub ordering: NodeOrdering,
    pub segments: Segments,
    /// Sorted by uplink level.
    pub entries: Vec<ScheduledEntry>,
    /// Occupied uplink level -> downlink level.
    pub relay_map: BTreeMap<u32, u32>,
}

impl LevelSchedule {
    /// `(bit, level)` pairs transmitted by `node` in the uplink phase.
    pub fn uplink_placement(&self, node: NodeId) -> Vec<(BitId, u32)> {
        self.entries
            .iter()
            .flat_map(|e| e.entry.bits.iter().map(move |b| (*b, e.uplink_level)))
            .filter(|(b, _)| b.from == node)
            .collect()
    }

    /// `(bit, level)` pairs that `node` recovers in the downlink phase.
    pub fn downlink_placement(&self, node: NodeId) -> Vec<(BitId, u32)> {
        let mut out: Vec<(BitId, u32)> = self
            .entries
            .iter()
            .flat_map(|e| e.entry.bits.iter().map(move |b| (*b, e.downlink_level)))
            .filter(|(b, _)| b.to == node)
            .collect();
        out.sort_by_key(|(_, l)| *l);
        out
    }

    pub fn entry_at_downlink(&self, level: u32) -> Option<&ScheduledEntry> {
        self.entries.iter().find(|e| e.downlink_level == level)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Level table, highest level first: uplink entry, then downlink entry.
    pub fn render(&self) -> String {
        let top = self
            .entries
            .iter()
            .map(|e| e.uplink_level.max(e.downlink_level))
            .max()
            .unwrap_or(0);
        let mut by_down: BTreeMap<u32, &Entry> = BTreeMap::new();
        let mut by_up: BTreeMap<u32, &Entry> = BTreeMap::new();
        for e in &self.entries {
            by_up.insert(e.uplink_level, &e.entry);
            by_down.insert(e.downlink_level, &e.entry);
        }
        let cell = |m: &BTreeMap<u32, &Entry>, l| m.get(&l).map_or("-".to_string(), |e| e.to_string());
        let mut out = format!("{:>5}  {:<16}  {:<16}\n", "level", "uplink", "downlink");
        for l in (1..=top).rev() {
            out.push_str(&format!("{l:>5}  {:<16}  {:<16}\n", cell(&by_up, l), cell(&by_down, l)));
        }
        out
    }
}

fn check_reach(
    phase: &'static str,
    entries: &[ScheduledEntry],
    owners: &BTreeMap<u32, NodeId>,
    gains: &GainProfile,
) -> Result<(), ScheduleError> {
    for e in entries {
        let (level, nodes, reach): (u32, Vec<NodeId>, fn(&GainProfile, NodeId) -> u32) = if phase == "uplink" {
            (e.uplink_level, e.entry.senders().collect(), GainProfile::up)
        } else {
            (e.downlink_level, e.entry.receivers().collect(), GainProfile::down)
        };
        for node in nodes {
            let r = reach(gains, node);
            if level > r {
                return Err(ScheduleError::Infeasible {
                    phase,
                    owner: owners[&level],
                    node,
                    level,
                    reach: r,
                });
            }
        }
    }
    Ok(())
}

/// Builds the single-round schedule for `rates` on `reduced_gains`.
pub fn build_sos_schedule(reduced_gains: &GainProfile, rates: &ReducedRateTuple) -> Result<LevelSchedule, ScheduleError> {
    let ordering = order_nodes(reduced_gains);
    let segments = build_segments(rates, &ordering);

    let mut up_level: BTreeMap<&Entry, u32> = BTreeMap::new();
    let mut up_owner = BTreeMap::new();
    let mut level = 0;
    for seg in &segments.uplink {
        for e in &seg.entries {
            level += 1;
            up_level.insert(e, level);
            up_owner.insert(level, seg.owner);
        }
    }
    let mut entries = Vec::with_capacity(up_level.len());
    let mut down_owner = BTreeMap::new();
    level = 0;
    for seg in &segments.downlink {
        for e in &seg.entries {
            level += 1;
            down_owner.insert(level, seg.owner);
            entries.push(ScheduledEntry {
                entry: e.clone(),
                uplink_level: up_level[e],
                downlink_level: level,
            });
        }
    }
    entries.sort_by_key(|e| e.uplink_level);

    check_reach("uplink", &entries, &up_owner, reduced_gains)?;
    check_reach("downlink", &entries, &down_owner, reduced_gains)?;

    let relay_map = entries.iter().map(|e| (e.uplink_level, e.downlink_level)).collect();
    Ok(LevelSchedule {
        gains: *reduced_gains,
        ordering,
        segments,
        entries,
        relay_map,
    })
}

pub fn schedule_reduced(reduced: &ReducedNetwork) -> Result<LevelSchedule, ScheduleError> {
    build_sos_schedule(&reduced.gains, &reduced.rates)
}
