//! Inequality systems of the capacity regions.
//!
//! Three systems are evaluated, each returning one [`ConditionEntry`] per
//! instantiated inequality:
//!
//! * the 5-node region with relay messages ([`eval_theorem1`]), ids `cap5.*`;
//! * the reduced 4-user region ([`eval_theorem2`]), ids `cap4.*`;
//! * the extra conditions under which the simple ordering scheme fits the
//!   reduced network ([`eval_lemma1`]), ids `sos.*`.
//!
//! Inner `max` terms are resolved by taking the largest branch; the entry
//! records the directed edges of the branch that attained it (first branch on
//! ties), which is what the detour planner works from.
//!
//! Cut families are written in terms of transitive orientations: for a node
//! set `S`, `max_transitive(S)` is the largest sum of one rate per unordered
//! pair of `S` over all orientations consistent with a total order of `S`.
//! The relay cut of the 4-user network is the same expression over all four
//! users, split into four families by the node that is first (uplink) or
//! last (downlink) in the order.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{
    order_nodes, parse_pair_key, GainProfile, NodeId, RateTuple, Rates,
    ReducedRateTuple, RELAY, USERS,
};

/// A directed edge `from -> to`, serialized as `"ij"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge(pub NodeId, pub NodeId);

impl Edge {
    pub fn reversed(self) -> Edge {
        Edge(self.1, self.0)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0, self.1)
    }
}

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let key = String::deserialize(d)?;
        parse_pair_key(&key)
            .map(|(i, j)| Edge(i, j))
            .ok_or_else(|| serde::de::Error::custom(format!("invalid edge {key:?}")))
    }
}

/// One instantiated inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub id: String,
    pub lhs: i64,
    pub rhs: i64,
    pub gap: i64,
    /// Rate terms of the left-hand side after resolving every `max`.
    pub edges: Vec<Edge>,
}

impl ConditionEntry {
    fn new(id: String, lhs: Sum, rhs: u32) -> Self {
        let lhs_v = lhs.value as i64;
        let rhs_v = rhs as i64;
        Self {
            id,
            lhs: lhs_v,
            rhs: rhs_v,
            gap: rhs_v - lhs_v,
            edges: lhs.edges,
        }
    }

    pub fn excess(&self) -> i64 {
        -self.gap
    }

    pub fn is_violated(&self) -> bool {
        self.gap < 0
    }

    /// The user-to-user edges among the resolved terms.
    pub fn user_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied().filter(|e| e.0 != RELAY && e.1 != RELAY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub satisfied: bool,
    pub entries: Vec<ConditionEntry>,
}

impl InequalityReport {
    fn from_entries(entries: Vec<ConditionEntry>) -> Self {
        Self {
            satisfied: entries.iter().all(|e| e.gap >= 0),
            entries,
        }
    }

    pub fn min_gap(&self) -> Option<i64> {
        self.entries.iter().map(|e| e.gap).min()
    }

    /// Entry with the smallest gap; the earliest listed one on ties.
    pub fn worst(&self) -> Option<&ConditionEntry> {
        self.entries
            .iter()
            .reduce(|best, e| if e.gap < best.gap { e } else { best })
    }

    pub fn violated(&self) -> impl Iterator<Item = &ConditionEntry> {
        self.entries.iter().filter(|e| e.is_violated())
    }

    /// Largest excess `lhs - rhs` over violated entries, 0 if none.
    pub fn max_excess(&self) -> i64 {
        self.entries.iter().map(|e| e.excess()).max().unwrap_or(0).max(0)
    }

    pub fn get(&self, id: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, Default)]
struct Sum {
    value: u64,
    edges: Vec<Edge>,
}

impl Sum {
    fn add<R: Rates + ?Sized>(&mut self, rates: &R, from: NodeId, to: NodeId) {
        self.value += rates.rate(from, to) as u64;
        self.edges.push(Edge(from, to));
    }

    fn edge<R: Rates + ?Sized>(mut self, rates: &R, from: NodeId, to: NodeId) -> Self {
        self.add(rates, from, to);
        self
    }

    fn extend(&mut self, other: Sum) {
        self.value += other.value;
        self.edges.extend(other.edges);
    }

    fn plus(mut self, other: Sum) -> Self {
        self.extend(other);
        self
    }
}

/// Largest branch; the first one wins ties.
fn max_of(branches: impl IntoIterator<Item = Sum>) -> Sum {
    branches
        .into_iter()
        .reduce(|best, s| if s.value > best.value { s } else { best })
        .unwrap_or_default()
}

fn permutations(nodes: &[NodeId]) -> Vec<Vec<NodeId>> {
    if nodes.len() <= 1 {
        return vec![nodes.to_vec()];
    }
    let mut out = Vec::new();
    for (k, &first) in nodes.iter().enumerate() {
        let mut rest = nodes.to_vec();
        rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Max over total orders of `nodes` of the sum of `R_{xy}` for `x` before `y`.
fn max_transitive<R: Rates + ?Sized>(rates: &R, nodes: &[NodeId]) -> Sum {
    max_of(permutations(nodes).into_iter().map(|order| {
        let mut s = Sum::default();
        for p in 0..order.len() {
            for q in p + 1..order.len() {
                s.add(rates, order[p], order[q]);
            }
        }
        s
    }))
}

fn others(all: &[NodeId], exclude: &[NodeId]) -> Vec<NodeId> {
    all.iter().copied().filter(|n| !exclude.contains(n)).collect()
}

fn ids(nodes: &[NodeId]) -> String {
    nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

/// Cut inequalities shared by the 5-node and 4-user regions; `relay` carries
/// the relay-message rates of the 5-node system.
fn cut_conditions<R: Rates + ?Sized>(
    prefix: &str,
    gains: &GainProfile,
    rates: &R,
    relay: Option<([u32; 4], [u32; 4])>,
) -> Vec<ConditionEntry> {
    let o = order_nodes(gains);
    let relay_terms = |nodes: &[NodeId], uplink: bool| -> Sum {
        let mut s = Sum::default();
        if let Some((to_relay, from_relay)) = relay {
            for &n in nodes {
                let (value, edge) = if uplink {
                    (to_relay[n as usize - 1], Edge(n, RELAY))
                } else {
                    (from_relay[n as usize - 1], Edge(RELAY, n))
                };
                s.value += value as u64;
                s.edges.push(edge);
            }
        }
        s
    };
    let up_relay = |nodes: &[NodeId]| relay_terms(nodes, true);
    let down_relay = |nodes: &[NodeId]| relay_terms(nodes, false);
    let cross = |from: &[NodeId], to: &[NodeId]| -> Sum {
        let mut s = Sum::default();
        for &x in from {
            for &y in to {
                s.add(rates, x, y);
            }
        }
        s
    };

    let (t, u, v, w) = (o.t(), o.u(), o.v(), o.w());
    let (a, b, c, d) = (o.a(), o.b(), o.c(), o.d());
    let mut out = Vec::with_capacity(14);

    // Uplink: cuts around the weakest one, two and three senders, then the
    // relay cut in four families keyed by the first node of the order.
    out.push(ConditionEntry::new(
        format!("{prefix}.ul.w:{w}"),
        up_relay(&[w]).plus(cross(&[w], &[t, u, v])),
        gains.up(w),
    ));
    out.push(ConditionEntry::new(
        format!("{prefix}.ul.vw:{}", ids(&[v, w])),
        up_relay(&[v, w])
            .plus(cross(&[v, w], &[t, u]))
            .plus(max_transitive(rates, &[v, w])),
        gains.up(v),
    ));
    out.push(ConditionEntry::new(
        format!("{prefix}.ul.uvw:{}", ids(&[u, v, w])),
        up_relay(&[u, v, w])
            .plus(cross(&[u, v, w], &[t]))
            .plus(max_transitive(rates, &[u, v, w])),
        gains.up(u),
    ));
    for &src in &o.uplink {
        let rest = others(&o.uplink, &[src]);
        out.push(ConditionEntry::new(
            format!("{prefix}.ul.relay:src={src}"),
            up_relay(&o.uplink)
                .plus(cross(&[src], &rest))
                .plus(max_transitive(rates, &rest)),
            gains.up(t),
        ));
    }

    out.push(ConditionEntry::new(
        format!("{prefix}.dl.d:{d}"),
        down_relay(&[d]).plus(cross(&[a, b, c], &[d])),
        gains.down(d),
    ));
    out.push(ConditionEntry::new(
        format!("{prefix}.dl.cd:{}", ids(&[c, d])),
        down_relay(&[c, d])
            .plus(cross(&[a, b], &[c, d]))
            .plus(max_transitive(rates, &[c, d])),
        gains.down(c),
    ));
    out.push(ConditionEntry::new(
        format!("{prefix}.dl.bcd:{}", ids(&[b, c, d])),
        down_relay(&[b, c, d])
            .plus(cross(&[a], &[b, c, d]))
            .plus(max_transitive(rates, &[b, c, d])),
        gains.down(b),
    ));
    for &dst in &o.downlink {
        let rest = others(&o.downlink, &[dst]);
        out.push(ConditionEntry::new(
            format!("{prefix}.dl.relay:dst={dst}"),
            down_relay(&o.downlink)
                .plus(cross(&rest, &[dst]))
                .plus(max_transitive(rates, &rest)),
            gains.down(a),
        ));
    }
    out
}

/// Capacity region of the 5-node network with relay messages.
pub fn eval_theorem1(gains: &GainProfile, rates: &RateTuple) -> InequalityReport {
    InequalityReport::from_entries(cut_conditions(
        "cap5",
        gains,
        rates,
        Some((rates.to_relay(), rates.from_relay())),
    ))
}

/// Capacity region of the reduced 4-user network.
pub fn eval_theorem2(reduced_gains: &GainProfile, rates: &ReducedRateTuple) -> InequalityReport {
    InequalityReport::from_entries(cut_conditions("cap4", reduced_gains, rates, None))
}

/// The two orientations of the 3-cycle through `nodes`.
fn cycle_pair<R: Rates + ?Sized>(rates: &R, x: NodeId, y: NodeId, z: NodeId) -> Sum {
    max_of([
        Sum::default().edge(rates, x, y).edge(rates, y, z).edge(rates, z, x),
        Sum::default().edge(rates, x, z).edge(rates, z, y).edge(rates, y, x),
    ])
}

/// Largest transitive sum over all four users. Every relay-cut inequality of
/// the 4-user region has a left-hand side equal to one of its branches, so a
/// tuple exceeding the largest gain in this quantity is outside the region.
pub fn four_user_cut<R: Rates + ?Sized>(rates: &R) -> u64 {
    max_transitive(rates, &USERS).value
}

/// `min(n_tR, n_Ra)`: the bound shared by the relay cuts of both phases.
pub fn n_star(reduced_gains: &GainProfile) -> u32 {
    let o = order_nodes(reduced_gains);
    reduced_gains.up(o.t()).min(reduced_gains.down(o.a()))
}

/// Directed 3-cycles `(i, j, k)` with `i` the smallest node, one per
/// orientation, together with the remaining hub node; 8 in total.
pub fn three_cycles() -> Vec<([NodeId; 3], NodeId)> {
    let mut out = Vec::new();
    for hub in USERS {
        let rest = others(&USERS, &[hub]);
        let (i, j, k) = (rest[0], rest[1], rest[2]);
        out.push(([i, j, k], hub));
        out.push(([i, k, j], hub));
    }
    out
}

/// Directed Hamiltonian 4-cycles starting at node 1; 6 in total.
pub fn four_cycles() -> Vec<[NodeId; 4]> {
    permutations(&[2, 3, 4])
        .into_iter()
        .map(|p| [1, p[0], p[1], p[2]])
        .collect()
}

fn cycle_id(nodes: &[NodeId]) -> String {
    nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(">")
}

/// Extra conditions for the simple ordering scheme on the reduced network.
pub fn eval_lemma1(reduced_gains: &GainProfile, rates: &ReducedRateTuple) -> InequalityReport {
    let o = order_nodes(reduced_gains);
    let star = n_star(reduced_gains);
    let mut out = Vec::with_capacity(16);

    let (t, u, v, w) = (o.t(), o.u(), o.v(), o.w());
    out.push(ConditionEntry::new(
        format!("sos.ul.cycle:t={t}"),
        cycle_pair(rates, w, u, v)
            .edge(rates, w, t)
            .edge(rates, u, t)
            .edge(rates, v, t),
        reduced_gains.up(u),
    ));
    let (a, b, c, d) = (o.a(), o.b(), o.c(), o.d());
    out.push(ConditionEntry::new(
        format!("sos.dl.cycle:a={a}"),
        cycle_pair(rates, b, c, d)
            .edge(rates, a, b)
            .edge(rates, a, c)
            .edge(rates, a, d),
        reduced_gains.down(b),
    ));

    for ([i, j, k], l) in three_cycles() {
        let cycle = Sum::default().edge(rates, i, j).edge(rates, j, k).edge(rates, k, i);
        let hub = max_of([
            Sum::default().edge(rates, l, i).edge(rates, l, j).edge(rates, l, k),
            Sum::default().edge(rates, i, l).edge(rates, j, l).edge(rates, k, l),
        ]);
        out.push(ConditionEntry::new(
            format!("sos.cycle3:{},hub={l}", cycle_id(&[i, j, k])),
            cycle.plus(hub),
            star,
        ));
    }

    for [i, j, k, l] in four_cycles() {
        let lhs = Sum::default()
            .edge(rates, i, j)
            .edge(rates, j, k)
            .edge(rates, k, l)
            .edge(rates, l, i)
            .plus(max_of([
                Sum::default().edge(rates, i, k),
                Sum::default().edge(rates, k, i),
            ]))
            .plus(max_of([
                Sum::default().edge(rates, j, l),
                Sum::default().edge(rates, l, j),
            ]));
        out.push(ConditionEntry::new(
            format!("sos.cycle4:{}", cycle_id(&[i, j, k, l])),
            lhs,
            star,
        ));
    }
    InequalityReport::from_entries(out)
}

/// Membership in the 5-node capacity region.
pub fn in_region(gains: &GainProfile, rates: &RateTuple) -> bool {
    eval_theorem1(gains, rates).satisfied
}

/// Membership in the 4-user region together with the extra conditions.
pub fn sos_feasible(reduced_gains: &GainProfile, rates: &ReducedRateTuple) -> bool {
    eval_theorem2(reduced_gains, rates).satisfied && eval_lemma1(reduced_gains, rates).satisfied
}
