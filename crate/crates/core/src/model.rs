//! Value types for the 5-node relay network and the signal-level channel.
//!
//! Nodes 1..=4 are users; node 5 is the relay. Channel levels are 1-based and
//! counted from the bottom: a sender (or receiver) with gain `n` reaches relay
//! levels `1..=n`, so level 1 is shared by every node with a nonzero gain.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::ChannelError;

/// Node identifier. Users are 1..=4, the relay is [`RELAY`].
pub type NodeId = u8;

pub const RELAY: NodeId = 5;
pub const USERS: [NodeId; 4] = [1, 2, 3, 4];

/// Channel gains (in bit levels) between each user and the relay.
///
/// `uplink[i - 1]` is `n_{i5}`, `downlink[i - 1]` is `n_{5i}`. The same shape
/// is reused for the reduced 4-user network (`n_{iR}`, `n_{Ri}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GainProfile {
    pub uplink: [u32; 4],
    pub downlink: [u32; 4],
}

impl GainProfile {
    pub fn new(uplink: [u32; 4], downlink: [u32; 4]) -> Self {
        Self { uplink, downlink }
    }

    pub fn up(&self, node: NodeId) -> u32 {
        self.uplink[user_index(node)]
    }

    pub fn down(&self, node: NodeId) -> u32 {
        self.downlink[user_index(node)]
    }
}

impl fmt::Display for GainProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UL={} DL={}", tuple(&self.uplink), tuple(&self.downlink))
    }
}

/// Users sorted by decreasing gain: `(t, u, v, w)` on the uplink and
/// `(a, b, c, d)` on the downlink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeOrdering {
    pub uplink: [NodeId; 4],
    pub downlink: [NodeId; 4],
}

impl NodeOrdering {
    pub fn t(&self) -> NodeId {
        self.uplink[0]
    }
    pub fn u(&self) -> NodeId {
        self.uplink[1]
    }
    pub fn v(&self) -> NodeId {
        self.uplink[2]
    }
    pub fn w(&self) -> NodeId {
        self.uplink[3]
    }
    pub fn a(&self) -> NodeId {
        self.downlink[0]
    }
    pub fn b(&self) -> NodeId {
        self.downlink[1]
    }
    pub fn c(&self) -> NodeId {
        self.downlink[2]
    }
    pub fn d(&self) -> NodeId {
        self.downlink[3]
    }

    /// Position of `node` in the uplink order (0 = strongest).
    pub fn uplink_rank(&self, node: NodeId) -> usize {
        self.uplink.iter().position(|&n| n == node).expect("user id")
    }

    /// Position of `node` in the downlink order (0 = strongest).
    pub fn downlink_rank(&self, node: NodeId) -> usize {
        self.downlink.iter().position(|&n| n == node).expect("user id")
    }
}

/// Sorts users by decreasing gain, ties resolved by ascending node id.
pub fn order_nodes(gains: &GainProfile) -> NodeOrdering {
    fn sort(g: &[u32; 4]) -> [NodeId; 4] {
        let mut ids = USERS;
        ids.sort_by(|&x, &y| g[user_index(y)].cmp(&g[user_index(x)]).then(x.cmp(&y)));
        ids
    }
    NodeOrdering {
        uplink: sort(&gains.uplink),
        downlink: sort(&gains.downlink),
    }
}

pub(crate) fn user_index(node: NodeId) -> usize {
    debug_assert!((1..=4).contains(&node), "not a user id: {node}");
    node as usize - 1
}

/// Read access to per-ordered-pair rates, shared by the 20-rate and the
/// 12-rate tuples.
pub trait Rates {
    fn rate(&self, from: NodeId, to: NodeId) -> u32;
}

/// Rates of all 20 ordered pairs of the 5-node network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RateTuple {
    rates: [[u32; 5]; 5],
}

/// The 20 ordered pairs in canonical listing order `(1,2), (1,3), ..., (5,4)`.
pub fn pairs20() -> impl Iterator<Item = (NodeId, NodeId)> {
    (1..=5u8).flat_map(|i| (1..=5u8).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// The 12 ordered user pairs in canonical listing order `(1,2), ..., (4,3)`.
pub fn pairs12() -> impl Iterator<Item = (NodeId, NodeId)> {
    (1..=4u8).flat_map(|i| (1..=4u8).filter(move |&j| j != i).map(move |j| (i, j)))
}

impl RateTuple {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> u32 {
        self.rates[from as usize - 1][to as usize - 1]
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, value: u32) {
        assert!(from != to && (1..=5).contains(&from) && (1..=5).contains(&to));
        self.rates[from as usize - 1][to as usize - 1] = value;
    }

    pub fn with(mut self, from: NodeId, to: NodeId, value: u32) -> Self {
        self.set(from, to, value);
        self
    }

    /// Builds a tuple from the 20-entry canonical listing.
    pub fn from_flat(values: &[u32]) -> Option<Self> {
        if values.len() != 20 {
            return None;
        }
        let mut out = Self::zero();
        for ((i, j), &v) in pairs20().zip(values) {
            out.set(i, j, v);
        }
        Some(out)
    }

    pub fn to_flat(&self) -> Vec<u32> {
        pairs20().map(|(i, j)| self.get(i, j)).collect()
    }

    /// `R_{X5}`: total rate towards the relay.
    pub fn to_relay_total(&self) -> u32 {
        USERS.iter().map(|&i| self.get(i, RELAY)).sum()
    }

    /// `R_{5X}`: total rate emitted by the relay.
    pub fn from_relay_total(&self) -> u32 {
        USERS.iter().map(|&i| self.get(RELAY, i)).sum()
    }

    /// Rates towards the relay indexed by user (`R_{15}..R_{45}`).
    pub fn to_relay(&self) -> [u32; 4] {
        USERS.map(|i| self.get(i, RELAY))
    }

    /// Rates emitted by the relay indexed by user (`R_{51}..R_{54}`).
    pub fn from_relay(&self) -> [u32; 4] {
        USERS.map(|i| self.get(RELAY, i))
    }

    /// The 12 inter-user rates.
    pub fn user_rates(&self) -> ReducedRateTuple {
        let mut out = ReducedRateTuple::zero();
        for (i, j) in pairs12() {
            out.set(i, j, self.get(i, j));
        }
        out
    }

    /// Relabels nodes: node `i` becomes `perm[i - 1]`. The relay stays fixed.
    pub fn permuted(&self, perm: &[NodeId; 4]) -> Self {
        let map = |n: NodeId| if n == RELAY { RELAY } else { perm[n as usize - 1] };
        let mut out = Self::zero();
        for (i, j) in pairs20() {
            out.set(map(i), map(j), self.get(i, j));
        }
        out
    }
}

impl Rates for RateTuple {
    fn rate(&self, from: NodeId, to: NodeId) -> u32 {
        self.get(from, to)
    }
}

impl fmt::Display for RateTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&tuple(&self.to_flat()))
    }
}

/// Rates of the 12 ordered user pairs of the reduced 4-user network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ReducedRateTuple {
    rates: [[u32; 4]; 4],
}

impl ReducedRateTuple {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> u32 {
        self.rates[user_index(from)][user_index(to)]
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, value: u32) {
        assert!(from != to, "self pair {from}{to}");
        self.rates[user_index(from)][user_index(to)] = value;
    }

    pub fn with(mut self, from: NodeId, to: NodeId, value: u32) -> Self {
        self.set(from, to, value);
        self
    }

    pub fn from_flat(values: &[u32]) -> Option<Self> {
        if values.len() != 12 {
            return None;
        }
        let mut out = Self::zero();
        for ((i, j), &v) in pairs12().zip(values) {
            out.set(i, j, v);
        }
        Some(out)
    }

    pub fn to_flat(&self) -> Vec<u32> {
        pairs12().map(|(i, j)| self.get(i, j)).collect()
    }

    /// Total number of bits over all streams.
    pub fn total(&self) -> u32 {
        pairs12().map(|(i, j)| self.get(i, j)).sum()
    }

    /// Embeds into a 20-rate tuple with zero relay rates.
    pub fn to_full(&self) -> RateTuple {
        let mut out = RateTuple::zero();
        for (i, j) in pairs12() {
            out.set(i, j, self.get(i, j));
        }
        out
    }

    pub fn permuted(&self, perm: &[NodeId; 4]) -> Self {
        let mut out = Self::zero();
        for (i, j) in pairs12() {
            out.set(perm[user_index(i)], perm[user_index(j)], self.get(i, j));
        }
        out
    }
}

impl Rates for ReducedRateTuple {
    fn rate(&self, from: NodeId, to: NodeId) -> u32 {
        self.get(from, to)
    }
}

impl fmt::Display for ReducedRateTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&tuple(&self.to_flat()))
    }
}

pub(crate) fn tuple<T: fmt::Display>(values: &[T]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Key `"ij"` used for an ordered pair in serialized rate maps.
pub fn pair_key(from: NodeId, to: NodeId) -> String {
    format!("{from}{to}")
}

/// Parses a `"ij"` pair key.
pub fn parse_pair_key(key: &str) -> Option<(NodeId, NodeId)> {
    let b = key.as_bytes();
    if b.len() != 2 || !b[0].is_ascii_digit() || !b[1].is_ascii_digit() {
        return None;
    }
    let (i, j) = (b[0] - b'0', b[1] - b'0');
    ((1..=5).contains(&i) && (1..=5).contains(&j) && i != j).then_some((i, j))
}

fn serialize_pairs<S: Serializer>(
    s: S,
    pairs: impl Iterator<Item = (NodeId, NodeId)>,
    get: impl Fn(NodeId, NodeId) -> u32,
    len: usize,
) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(len))?;
    for (i, j) in pairs {
        map.serialize_entry(&pair_key(i, j), &get(i, j))?;
    }
    map.end()
}

impl Serialize for RateTuple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_pairs(s, pairs20(), |i, j| self.get(i, j), 20)
    }
}

impl Serialize for ReducedRateTuple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_pairs(s, pairs12(), |i, j| self.get(i, j), 12)
    }
}

struct PairMapVisitor {
    allow_relay: bool,
}

impl<'de> Visitor<'de> for PairMapVisitor {
    type Value = BTreeMap<(NodeId, NodeId), u32>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a map from \"ij\" pair keys to nonnegative integers")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
        let mut out = BTreeMap::new();
        while let Some((key, value)) = access.next_entry::<String, u32>()? {
            let pair = parse_pair_key(&key)
                .filter(|&(i, j)| self.allow_relay || (i != RELAY && j != RELAY))
                .ok_or_else(|| de::Error::custom(format!("invalid pair key {key:?}")))?;
            if out.insert(pair, value).is_some() {
                return Err(de::Error::custom(format!("duplicate pair key {key:?}")));
            }
        }
        Ok(out)
    }
}

fn check_complete<E: de::Error>(
    map: &BTreeMap<(NodeId, NodeId), u32>,
    pairs: impl Iterator<Item = (NodeId, NodeId)>,
) -> Result<(), E> {
    for (i, j) in pairs {
        if !map.contains_key(&(i, j)) {
            return Err(E::custom(format!("missing rate for pair \"{i}{j}\"")));
        }
    }
    Ok(())
}

impl<'de> Deserialize<'de> for RateTuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = d.deserialize_map(PairMapVisitor { allow_relay: true })?;
        check_complete(&map, pairs20())?;
        let mut out = RateTuple::zero();
        for ((i, j), v) in map {
            out.set(i, j, v);
        }
        Ok(out)
    }
}

impl<'de> Deserialize<'de> for ReducedRateTuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = d.deserialize_map(PairMapVisitor { allow_relay: false })?;
        check_complete(&map, pairs12())?;
        let mut out = ReducedRateTuple::zero();
        for ((i, j), v) in map {
            out.set(i, j, v);
        }
        Ok(out)
    }
}

/// One channel use worth of bits, keyed by level (1-based, bottom = 1).
///
/// Absent levels carry no signal; a present level carries a GF(2) bit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BitFrame {
    pub round: u32,
    pub levels: BTreeMap<u32, bool>,
}

impl BitFrame {
    pub fn new(round: u32) -> Self {
        Self {
            round,
            levels: BTreeMap::new(),
        }
    }

    /// Places a bit, returning the previous value at that level.
    pub fn put(&mut self, level: u32, bit: bool) -> Option<bool> {
        assert!(level >= 1, "levels are 1-based");
        self.levels.insert(level, bit)
    }

    pub fn get(&self, level: u32) -> Option<bool> {
        self.levels.get(&level).copied()
    }

    pub fn top(&self) -> Option<u32> {
        self.levels.keys().next_back().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level-wise XOR; a level present in only one frame keeps its bit.
    pub fn xor(&self, other: &BitFrame) -> BitFrame {
        let mut out = self.clone();
        for (&l, &b) in &other.levels {
            *out.levels.entry(l).or_insert(false) ^= b;
        }
        out
    }
}

/// Relay observation of simultaneous uplink transmissions.
///
/// `transmits[i - 1]` is the frame sent by user `i`, reaching relay levels
/// `1..=uplink_gains[i - 1]`. Each observed level is the XOR of every bit sent
/// on it.
pub fn superpose_uplink(
    transmits: &[BitFrame; 4],
    uplink_gains: &[u32; 4],
) -> Result<BitFrame, ChannelError> {
    let round = transmits.iter().map(|f| f.round).max().unwrap_or(0);
    let mut out = BitFrame::new(round);
    for (idx, frame) in transmits.iter().enumerate() {
        let reach = uplink_gains[idx];
        for (&level, &bit) in &frame.levels {
            if level == 0 || level > reach {
                return Err(ChannelError::AboveReach {
                    node: idx as NodeId + 1,
                    level,
                    reach,
                });
            }
            *out.levels.entry(level).or_insert(false) ^= bit;
        }
    }
    Ok(out)
}

/// What a receiver with gain `receiver_gain` sees of the relay's frame.
pub fn observe_downlink(relay_frame: &BitFrame, receiver_gain: u32) -> BitFrame {
    BitFrame {
        round: relay_frame.round,
        levels: relay_frame
            .levels
            .range(..=receiver_gain)
            .map(|(&l, &b)| (l, b))
            .collect(),
    }
}
