//! Detour schemes: rerouting bits of a stream through a third user so that
//! the rate tuple seen by the simple ordering scheme fits the reduced
//! network.
//!
//! A move takes `a` bits off the direct edge `x -> y` and sends them over
//! `x -> z -> y`. The maximum gap condition (the violated extra condition with
//! the largest excess) decides which cycle edges are eligible:
//!
//! * a 3-cycle condition gives three single-edge options (DS1);
//! * a 4-cycle condition resolves to a 4-node tournament with exactly two
//!   3-cycles sharing one edge, which gives nine two-edge options (DS2).
//!
//! Every option carries the role predicates under which it is known to keep
//! the reduced region. They only order the search: each candidate is
//! re-validated against the region and the extra conditions, and that check
//! is what admits a move.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::DetourError;
use crate::model::{order_nodes, GainProfile, NodeId, NodeOrdering, ReducedRateTuple, USERS};
use crate::region::{eval_lemma1, eval_theorem2, ConditionEntry, Edge};
use crate::sos::BitId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetourKind {
    #[serde(rename = "DS1")]
    Ds1,
    #[serde(rename = "DS2")]
    Ds2,
}

impl fmt::Display for DetourKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetourKind::Ds1 => "DS1",
            DetourKind::Ds2 => "DS2",
        })
    }
}

/// `amount` bits of `edge` sent through `via`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub edge: Edge,
    pub via: NodeId,
    pub amount: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetourMove {
    pub kind: DetourKind,
    /// 1-based option number within the scheme's candidate list.
    pub option: usize,
    pub legs: Vec<Leg>,
    /// Net change per edge; zero entries omitted.
    pub deltas: BTreeMap<Edge, i64>,
    /// Whether the option's role predicates hold for the current ordering.
    pub guard_ok: bool,
}

impl DetourMove {
    fn new(kind: DetourKind, option: usize, legs: Vec<Leg>, guard_ok: bool) -> Self {
        let mut deltas: BTreeMap<Edge, i64> = BTreeMap::new();
        for leg in &legs {
            let Edge(x, y) = leg.edge;
            let a = leg.amount as i64;
            *deltas.entry(leg.edge).or_default() -= a;
            *deltas.entry(Edge(x, leg.via)).or_default() += a;
            *deltas.entry(Edge(leg.via, y)).or_default() += a;
        }
        deltas.retain(|_, d| *d != 0);
        Self {
            kind,
            option,
            legs,
            deltas,
            guard_ok,
        }
    }

    pub fn amount(&self) -> u32 {
        self.legs.iter().map(|l| l.amount).sum()
    }

    /// The rates after the move, or `None` if some rate would go negative.
    pub fn apply(&self, rates: &ReducedRateTuple) -> Option<ReducedRateTuple> {
        let mut out = *rates;
        for (e, d) in &self.deltas {
            let v = rates.get(e.0, e.1) as i64 + d;
            if v < 0 {
                return None;
            }
            out.set(e.0, e.1, v as u32);
        }
        Some(out)
    }
}

impl fmt::Display for DetourMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let legs: Vec<String> = self
            .legs
            .iter()
            .map(|l| format!("{} bit(s) of R{} via {}", l.amount, l.edge, l.via))
            .collect();
        write!(f, "{} option {}: {}", self.kind, self.option, legs.join(", "))
    }
}

/// The maximum gap condition with the cycle structure it contains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mgc {
    pub condition: ConditionEntry,
    pub excess: u32,
    /// Directed 3-cycles inside the resolved terms, as node triples.
    pub cycles: Vec<[NodeId; 3]>,
}

fn third(nodes: &[NodeId; 3], e: Edge) -> NodeId {
    *nodes.iter().find(|&&n| n != e.0 && n != e.1).unwrap()
}

/// Directed 3-cycles among `edges`, each listed from its smallest node.
fn cycles_in(edges: &[Edge]) -> Vec<[NodeId; 3]> {
    let has = |x, y| edges.contains(&Edge(x, y));
    let mut out = Vec::new();
    for &i in &USERS {
        for &j in &USERS {
            for &k in &USERS {
                if i < j && i < k && j != k && has(i, j) && has(j, k) && has(k, i) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// The violated extra condition with the largest excess (earliest listed on
/// ties).
pub fn find_mgc(reduced_gains: &GainProfile, rates: &ReducedRateTuple) -> Result<Mgc, DetourError> {
    let report = eval_lemma1(reduced_gains, rates);
    let worst = report
        .worst()
        .filter(|e| e.is_violated())
        .ok_or(DetourError::NoViolation)?;
    let user_edges: Vec<Edge> = worst.user_edges().collect();
    Ok(Mgc {
        excess: worst.excess() as u32,
        cycles: cycles_in(&user_edges),
        condition: worst.clone(),
    })
}

struct Roles<'a>(&'a NodeOrdering);

impl Roles<'_> {
    /// Weakest in either phase.
    fn weak(&self, x: NodeId) -> bool {
        self.0.d() == x || self.0.w() == x
    }

    /// `x` next-to-weakest right above `y` in either phase.
    fn pair(&self, x: NodeId, y: NodeId) -> bool {
        (self.0.c() == x && self.0.d() == y) || (self.0.v() == x && self.0.w() == y)
    }
}

/// Canonical two-cycle options: legs as (canonical edge, canonical via),
/// then the predicates that rule the option out. `W(x)` is `weak`, `P(x, y)`
/// is `pair`, in canonical labels.
enum Pred {
    W(usize),
    P(usize, usize),
}

type Ds2Option = ([((usize, usize), usize); 2], &'static [Pred]);

const DS2_OPTIONS: [Ds2Option; 9] = {
    use Pred::{P, W};
    [
        ([((3, 4), 1), ((3, 4), 2)], &[W(1), W(2)]),
        ([((3, 4), 1), ((4, 2), 3)], &[W(1), W(3), P(1, 2)]),
        ([((1, 3), 4), ((4, 2), 3)], &[W(3), W(4), P(3, 1), P(4, 2)]),
        ([((3, 4), 1), ((2, 3), 4)], &[W(1), W(4), P(1, 2)]),
        ([((4, 1), 3), ((3, 4), 2)], &[W(2), W(3), P(2, 1)]),
        ([((4, 1), 3), ((4, 2), 3)], &[W(3), P(3, 1), P(3, 2)]),
        ([((4, 1), 3), ((2, 3), 4)], &[W(3), W(4), P(4, 1), P(3, 2)]),
        ([((1, 3), 4), ((3, 4), 2)], &[W(2), W(4), P(2, 1)]),
        ([((1, 3), 4), ((2, 3), 4)], &[W(4), P(4, 1), P(4, 2)]),
    ]
};

fn ds1_candidates(mgc: &Mgc, roles: &Roles) -> Vec<DetourMove> {
    let edges = &mgc.condition.edges;
    let cycle = [edges[0].0, edges[1].0, edges[2].0];
    let hub = *USERS.iter().find(|n| !cycle.contains(n)).unwrap();
    edges[..3]
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let via = third(&cycle, e);
            let guard_ok = !roles.weak(via) && !roles.pair(via, hub);
            let leg = Leg {
                edge: e,
                via,
                amount: mgc.excess,
            };
            DetourMove::new(DetourKind::Ds1, k + 1, vec![leg], guard_ok)
        })
        .collect()
}

/// Canonical labels `[1, 2, 3, 4]` of a 4-cycle condition: the shared edge
/// of the two 3-cycles is `3 -> 4`, and the remaining nodes are `1 -> 2`.
fn canonical_labels(mgc: &Mgc) -> Option<[NodeId; 4]> {
    let [c1, c2] = mgc.cycles.as_slice() else {
        return None;
    };
    let shared: Vec<NodeId> = c1.iter().copied().filter(|n| c2.contains(n)).collect();
    let [p, q] = shared.as_slice() else {
        return None;
    };
    let edges: Vec<Edge> = mgc.condition.user_edges().collect();
    let (s, t) = if edges.contains(&Edge(*p, *q)) { (*p, *q) } else { (*q, *p) };
    let x = *c1.iter().find(|n| !shared.contains(n))?;
    let y = *c2.iter().find(|n| !shared.contains(n))?;
    let (one, two) = if edges.contains(&Edge(x, y)) { (x, y) } else { (y, x) };
    Some([one, two, s, t])
}

fn ds2_candidates(mgc: &Mgc, roles: &Roles) -> Vec<DetourMove> {
    let Some(labels) = canonical_labels(mgc) else {
        return Vec::new();
    };
    let n = |c: usize| labels[c - 1];
    let alpha = mgc.excess;
    let mut out = Vec::new();
    for (k, (legs, preds)) in DS2_OPTIONS.iter().enumerate() {
        let guard_ok = !preds.iter().any(|p| match *p {
            Pred::W(x) => roles.weak(n(x)),
            Pred::P(x, y) => roles.pair(n(x), n(y)),
        });
        for a1 in (0..=alpha).rev() {
            let amounts = [a1, alpha - a1];
            let legs: Vec<Leg> = legs
                .iter()
                .zip(amounts)
                .filter(|(_, a)| *a > 0)
                .map(|(((x, y), via), amount)| Leg {
                    edge: Edge(n(*x), n(*y)),
                    via: n(*via),
                    amount,
                })
                .collect();
            out.push(DetourMove::new(DetourKind::Ds2, k + 1, legs, guard_ok));
        }
    }
    out
}

/// All detour options for `mgc`, in the order they are tried.
pub fn enumerate_candidates(mgc: &Mgc, ordering: &NodeOrdering) -> Vec<DetourMove> {
    let roles = Roles(ordering);
    if mgc.excess == 0 {
        return vec![DetourMove::new(DetourKind::Ds1, 0, Vec::new(), true)];
    }
    if mgc.condition.id.starts_with("sos.cycle4") {
        ds2_candidates(mgc, &roles)
    } else {
        ds1_candidates(mgc, &roles)
    }
}

/// A share of one stream's bits and the path they take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub path: Vec<NodeId>,
    pub count: u32,
}

impl Route {
    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.path.last().unwrap()
    }

    pub fn hops(&self) -> impl Iterator<Item = Edge> + '_ {
        self.path.windows(2).map(|w| Edge(w[0], w[1]))
    }

    pub fn is_direct(&self) -> bool {
        self.path.len() == 2
    }

    /// Rounds between generation and delivery.
    pub fn latency(&self) -> u32 {
        self.path.len() as u32 - 2
    }
}

/// Where an individual bit of an original stream travels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutedBit {
    pub bit: BitId,
    pub path: Vec<NodeId>,
    pub latency: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetourPlan {
    pub original: ReducedRateTuple,
    pub equivalent: ReducedRateTuple,
    pub moves: Vec<DetourMove>,
    /// Max extra-condition excess before each move, then after the last.
    pub excess_trace: Vec<u32>,
    /// Every stream's bits split by path, direct share first.
    pub routes: Vec<Route>,
}

fn initial_routes(rates: &ReducedRateTuple) -> Vec<Route> {
    let mut routes = Vec::new();
    for &i in &USERS {
        for &j in &USERS {
            if i != j && rates.get(i, j) > 0 {
                routes.push(Route {
                    path: vec![i, j],
                    count: rates.get(i, j),
                });
            }
        }
    }
    routes
}

/// Moves `amount` units of load off the hop `x -> y` onto `x -> via -> y`,
/// direct shares of `x -> y` first.
fn reroute(routes: &mut Vec<Route>, leg: &Leg) {
    let Edge(x, y) = leg.edge;
    let mut left = leg.amount;
    let mut order: Vec<usize> = (0..routes.len()).filter(|&k| routes[k].hops().any(|h| h == leg.edge)).collect();
    order.sort_by_key(|&k| !routes[k].is_direct());
    let mut added = Vec::new();
    for k in order {
        if left == 0 {
            break;
        }
        let take = left.min(routes[k].count);
        let pos = routes[k].hops().position(|h| h == leg.edge).unwrap();
        let mut path = routes[k].path.clone();
        path.insert(pos + 1, leg.via);
        debug_assert_eq!((path[pos], path[pos + 2]), (x, y));
        routes[k].count -= take;
        added.push(Route { path, count: take });
        left -= take;
    }
    debug_assert_eq!(left, 0);
    for r in added {
        match routes.iter_mut().find(|q| q.path == r.path) {
            Some(q) => q.count += r.count,
            None => routes.push(r),
        }
    }
    routes.retain(|r| r.count > 0);
}

impl DetourPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn detoured_routes(&self) -> impl Iterator<Item = &Route> {
        self.routes.iter().filter(|r| !r.is_direct())
    }

    /// Shares of the stream `from -> to`, direct first, in bit-index order.
    pub fn stream_routes(&self, from: NodeId, to: NodeId) -> Vec<&Route> {
        let mut out: Vec<&Route> = self
            .routes
            .iter()
            .filter(|r| r.source() == from && r.destination() == to)
            .collect();
        out.sort_by_key(|r| !r.is_direct());
        out
    }

    /// Per-bit routing of every detoured bit. Bits of a stream are numbered
    /// across its shares in [`Self::stream_routes`] order, so detoured bits
    /// take the highest indices.
    pub fn routing_table(&self) -> Vec<RoutedBit> {
        let mut out = Vec::new();
        for &i in &USERS {
            for &j in &USERS {
                let mut index = 0;
                for r in self.stream_routes(i, j) {
                    for _ in 0..r.count {
                        index += 1;
                        if !r.is_direct() {
                            out.push(RoutedBit {
                                bit: BitId::new(i, j, index),
                                path: r.path.clone(),
                                latency: r.latency(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// End-to-end delivery per stream matches `original` and per-hop load
    /// matches `equivalent`.
    pub fn conserves(&self) -> bool {
        let mut delivered = ReducedRateTuple::zero();
        let mut load = ReducedRateTuple::zero();
        for r in &self.routes {
            let (s, d) = (r.source(), r.destination());
            if s == d {
                return false;
            }
            delivered.set(s, d, delivered.get(s, d) + r.count);
            for h in r.hops() {
                load.set(h.0, h.1, load.get(h.0, h.1) + r.count);
            }
        }
        delivered == self.original && load == self.equivalent
    }
}

/// Applies detour moves until the extra conditions hold.
///
/// Each step considers the candidates for the current maximum gap condition
/// that keep every rate non-negative, stay inside the reduced region and
/// lower the maximum extra-condition excess, and takes the one leaving the
/// smallest excess. Ties go to candidates whose role predicates hold, then
/// to listing order.
pub fn apply_best(reduced_gains: &GainProfile, rates: &ReducedRateTuple) -> Result<DetourPlan, DetourError> {
    let t2 = eval_theorem2(reduced_gains, rates);
    if let Some(w) = t2.worst().filter(|e| e.is_violated()) {
        return Err(DetourError::OutsideRegion {
            condition: w.id.clone(),
            excess: w.excess(),
        });
    }
    let ordering = order_nodes(reduced_gains);
    let mut current = *rates;
    let mut moves = Vec::new();
    let mut routes = initial_routes(rates);
    let mut trace = Vec::new();
    loop {
        let excess = eval_lemma1(reduced_gains, &current).max_excess() as u32;
        trace.push(excess);
        if excess == 0 {
            break;
        }
        let mgc = find_mgc(reduced_gains, &current)?;
        let chosen = enumerate_candidates(&mgc, &ordering)
            .into_iter()
            .enumerate()
            .filter_map(|(pos, m)| {
                let next = m.apply(&current)?;
                if !eval_theorem2(reduced_gains, &next).satisfied {
                    return None;
                }
                let after = eval_lemma1(reduced_gains, &next).max_excess() as u32;
                (after < excess).then_some(((after, !m.guard_ok, pos), m, next))
            })
            .min_by_key(|(key, _, _)| *key)
            .map(|(_, m, next)| (m, next));
        let Some((m, next)) = chosen else {
            return Err(DetourError::Exhausted(format!(
                "gains {reduced_gains}, rates {current} (from {rates}), condition {} excess {}, cycles {:?}",
                mgc.condition.id, mgc.excess, mgc.cycles
            )));
        };
        for leg in &m.legs {
            reroute(&mut routes, leg);
        }
        moves.push(m);
        current = next;
    }
    Ok(DetourPlan {
        original: *rates,
        equivalent: current,
        moves,
        excess_trace: trace,
        routes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::sos_feasible;
    use proptest::prelude::*;

    fn tuple(flat: [u32; 12]) -> ReducedRateTuple {
        ReducedRateTuple::from_flat(&flat).unwrap()
    }

    fn example1() -> (GainProfile, ReducedRateTuple) {
        (
            GainProfile::new([7, 3, 5, 0], [1, 5, 3, 7]),
            tuple([2, 0, 1, 0, 2, 1, 1, 0, 1, 0, 0, 0]),
        )
    }

    fn example2() -> (GainProfile, ReducedRateTuple) {
        (
            GainProfile::new([8, 8, 3, 2], [3, 4, 7, 7]),
            tuple([2, 1, 0, 0, 2, 1, 0, 0, 1, 2, 0, 0]),
        )
    }

    fn edges(list: &[(NodeId, NodeId)]) -> Vec<Edge> {
        list.iter().map(|&(i, j)| Edge(i, j)).collect()
    }

    #[test]
    fn first_example_mgc() {
        let (g, r) = example1();
        let mgc = find_mgc(&g, &r).unwrap();
        assert_eq!(mgc.excess, 1);
        assert_eq!(
            mgc.condition.edges,
            edges(&[(1, 2), (2, 3), (3, 1), (1, 4), (2, 4), (3, 4)])
        );
        assert_eq!(mgc.cycles, vec![[1, 2, 3]]);
    }

    #[test]
    fn first_example_candidates() {
        let (g, r) = example1();
        let mgc = find_mgc(&g, &r).unwrap();
        let c = enumerate_candidates(&mgc, &order_nodes(&g));
        let legs: Vec<(Edge, NodeId, u32)> = c.iter().map(|m| (m.legs[0].edge, m.legs[0].via, m.amount())).collect();
        assert_eq!(
            legs,
            vec![(Edge(1, 2), 3, 1), (Edge(2, 3), 1, 1), (Edge(3, 1), 2, 1)]
        );
        let d = &c[0].deltas;
        assert_eq!(d[&Edge(1, 2)], -1);
        assert_eq!(d[&Edge(1, 3)], 1);
        assert_eq!(d[&Edge(3, 2)], 1);
    }

    #[test]
    fn first_example_plan() {
        let (g, r) = example1();
        let plan = apply_best(&g, &r).unwrap();
        assert_eq!(plan.equivalent, tuple([1, 1, 1, 0, 2, 1, 1, 1, 1, 0, 0, 0]));
        assert_eq!(plan.moves.len(), 1);
        assert!(sos_feasible(&g, &plan.equivalent));
        assert!(plan.conserves());
        let table = plan.routing_table();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].bit, BitId::new(1, 2, 2));
        assert_eq!(table[0].path, vec![1, 3, 2]);
        assert_eq!(table[0].latency, 1);
    }

    #[test]
    fn second_example_mgc() {
        let (g, r) = example2();
        let mgc = find_mgc(&g, &r).unwrap();
        assert_eq!(mgc.excess, 2);
        let mut got = mgc.condition.edges.clone();
        got.sort();
        assert_eq!(got, edges(&[(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (4, 1)]));
        assert_eq!(mgc.cycles, vec![[1, 2, 4], [1, 3, 4]]);
        assert_eq!(canonical_labels(&mgc), Some([2, 3, 4, 1]));
    }

    #[test]
    fn second_example_candidates_include_listed_move() {
        let (g, r) = example2();
        let mgc = find_mgc(&g, &r).unwrap();
        let c = enumerate_candidates(&mgc, &order_nodes(&g));
        assert_eq!(c.len(), 9 * 3);
        let wanted = [
            Leg { edge: Edge(2, 4), via: 1, amount: 1 },
            Leg { edge: Edge(4, 1), via: 3, amount: 1 },
        ];
        let found = c.iter().find(|m| wanted.iter().all(|l| m.legs.contains(l))).unwrap();
        assert_eq!(found.option, 8);
        assert_eq!(
            found.apply(&r).unwrap(),
            tuple([2, 1, 1, 1, 2, 0, 1, 0, 1, 1, 0, 1])
        );
    }

    #[test]
    fn second_example_plan() {
        let (g, r) = example2();
        let plan = apply_best(&g, &r).unwrap();
        assert!(sos_feasible(&g, &plan.equivalent));
        assert!(eval_theorem2(&g, &plan.equivalent).satisfied);
        assert!(plan.conserves());
        assert!(plan.excess_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn feasible_tuple_gives_empty_plan() {
        let g = GainProfile::new([8, 8, 3, 2], [3, 4, 7, 7]);
        let r = tuple([2, 1, 1, 1, 2, 0, 1, 0, 1, 1, 0, 1]);
        assert_eq!(find_mgc(&g, &r), Err(DetourError::NoViolation));
        let plan = apply_best(&g, &r).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.equivalent, r);
        assert!(plan.conserves());
    }

    #[test]
    fn outside_region_is_rejected() {
        let g = GainProfile::new([1, 1, 1, 1], [1, 1, 1, 1]);
        let r = ReducedRateTuple::zero().with(1, 2, 2);
        assert!(matches!(apply_best(&g, &r), Err(DetourError::OutsideRegion { .. })));
    }

    #[test]
    fn zero_gap_gives_single_empty_move() {
        let (g, r) = example1();
        let mut mgc = find_mgc(&g, &r).unwrap();
        mgc.excess = 0;
        let c = enumerate_candidates(&mgc, &order_nodes(&g));
        assert_eq!(c.len(), 1);
        assert!(c[0].legs.is_empty() && c[0].deltas.is_empty());
    }

    fn instance() -> impl Strategy<Value = (GainProfile, ReducedRateTuple)> {
        (
            prop::array::uniform4(0u32..=4),
            prop::array::uniform4(0u32..=4),
            prop::collection::vec(prop_oneof![2 => Just(0u32), 1 => 1u32..=2], 12),
        )
            .prop_map(|(up, down, flat)| (GainProfile::new(up, down), ReducedRateTuple::from_flat(&flat).unwrap()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(3000))]

        #[test]
        fn moves_add_twice_their_amount_to_the_reverse_cycle((g, r) in instance()) {
            if let Ok(mgc) = find_mgc(&g, &r) {
                for m in enumerate_candidates(&mgc, &order_nodes(&g)) {
                    let removed: i64 = m.deltas.values().filter(|d| **d < 0).sum();
                    prop_assert_eq!(removed, -(m.amount() as i64));
                    for leg in &m.legs {
                        // Reverse of the cycle x -> y -> via -> x.
                        let Edge(x, y) = leg.edge;
                        let before = r.get(x, leg.via) + r.get(leg.via, y);
                        let after = m.apply(&r).map(|n| n.get(x, leg.via) + n.get(leg.via, y));
                        if let (Some(after), 1) = (after, m.legs.len()) {
                            prop_assert_eq!(after, before + 2 * leg.amount);
                        }
                    }
                }
            }
        }

        #[test]
        fn plans_conserve_and_land_in_sos_region((g, r) in instance()) {
            if eval_theorem2(&g, &r).satisfied {
                let plan = apply_best(&g, &r).unwrap();
                prop_assert!(plan.conserves());
                prop_assert!(sos_feasible(&g, &plan.equivalent));
                prop_assert!(plan.excess_trace.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }
}
