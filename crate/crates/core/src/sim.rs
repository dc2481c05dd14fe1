//! Bit-exact simulation on the level channel and the exhaustive check of the
//! reduced region.
//!
//! Every round, each source draws fresh payload bits from a ChaCha8 stream
//! seeded with the caller's seed. Users place their bits on relay levels,
//! the channel superposes them, the relay permutes levels, and each user
//! decodes from what it observes plus the bits it sent itself. Bits on a
//! detour are decoded by the intermediate user and sent on in the next
//! round, so a route with `h` hops delivers `h - 1` rounds late.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detour::{apply_best, DetourPlan, Route};
use crate::error::{DetourError, SimError};
use crate::model::{
    observe_downlink, superpose_uplink, BitFrame, GainProfile, NodeId, RateTuple, ReducedRateTuple, RELAY, USERS,
};
use crate::reduction::{reduce, LevelAssignment};
use crate::region::{eval_lemma1, eval_theorem1, eval_theorem2, four_user_cut};
use crate::sos::{build_sos_schedule, BitId, LevelSchedule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamReport {
    pub from: NodeId,
    pub to: NodeId,
    pub rate: u32,
    /// Rounds between generation and delivery of the slowest share.
    pub latency: u32,
    pub delivered_per_round: Vec<u32>,
    pub delivered: u64,
    /// Bits generated early enough to arrive within the simulated rounds.
    pub due: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub rounds: u32,
    pub seed: u64,
    /// Rounds before every route is full.
    pub warmup: u32,
    pub detour_moves: usize,
    pub streams: Vec<StreamReport>,
    pub delivered_bits: u64,
    pub due_bits: u64,
    /// Relay output levels checked to be verbatim copies of received levels.
    pub relay_levels_checked: u64,
}

impl DeliveryReport {
    pub fn complete(&self) -> bool {
        self.delivered_bits == self.due_bits
    }

    pub fn delivery_ratio(&self) -> f64 {
        if self.due_bits == 0 {
            1.0
        } else {
            self.delivered_bits as f64 / self.due_bits as f64
        }
    }

    /// After warm-up, every stream delivers exactly its rate each round.
    pub fn steady_state_ok(&self) -> bool {
        self.streams.iter().all(|s| {
            s.delivered_per_round
                .iter()
                .skip(self.warmup as usize)
                .all(|&d| d == s.rate)
        })
    }

    pub fn stream(&self, from: NodeId, to: NodeId) -> Option<&StreamReport> {
        self.streams.iter().find(|s| s.from == from && s.to == to)
    }
}

/// Which route, hop and payload position an equivalent-rate bit carries.
#[derive(Debug, Clone, Copy)]
struct Slot {
    route: usize,
    hop: usize,
    offset: usize,
}

/// Relay-message streams and the levels reserved for them.
struct Reserved {
    uplink: LevelAssignment,
    downlink: LevelAssignment,
}

struct Engine<'a> {
    schedule: &'a LevelSchedule,
    routes: &'a [Route],
    slots: HashMap<(NodeId, NodeId), Vec<Slot>>,
    /// Physical gains seen by the channel.
    gains: GainProfile,
    /// Physical level of virtual level `k` at index `k - 1`.
    up_map: Vec<u32>,
    down_map: Vec<u32>,
    reserved: Option<Reserved>,
}

fn slot_table(routes: &[Route], equivalent: &ReducedRateTuple) -> HashMap<(NodeId, NodeId), Vec<Slot>> {
    let mut order: Vec<usize> = (0..routes.len()).collect();
    order.sort_by_key(|&k| !routes[k].is_direct());
    let mut slots: HashMap<(NodeId, NodeId), Vec<Slot>> = HashMap::new();
    for k in order {
        for (hop, e) in routes[k].hops().enumerate() {
            let list = slots.entry((e.0, e.1)).or_default();
            for offset in 0..routes[k].count as usize {
                list.push(Slot { route: k, hop, offset });
            }
        }
    }
    debug_assert!(slots
        .iter()
        .all(|(&(x, y), v)| v.len() as u32 == equivalent.get(x, y)));
    slots
}

fn decode_err(round: u32, level: u32, from: NodeId, to: NodeId, detail: impl Into<String>) -> SimError {
    SimError::Decode {
        round,
        level,
        from,
        to,
        detail: detail.into(),
    }
}

impl Engine<'_> {
    fn run(&self, rounds: u32, seed: u64) -> Result<DeliveryReport, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut payload: Vec<Vec<Vec<bool>>> = vec![Vec::new(); self.routes.len()];
        let mut buffer: HashMap<(NodeId, usize, usize, u32), bool> = HashMap::new();
        let mut streams: BTreeMap<(NodeId, NodeId), StreamReport> = BTreeMap::new();
        let stream = |streams: &mut BTreeMap<(NodeId, NodeId), StreamReport>, from, to| {
            streams.entry((from, to)).or_insert_with(|| StreamReport {
                from,
                to,
                rate: 0,
                latency: 0,
                delivered_per_round: vec![0; rounds as usize],
                delivered: 0,
                due: 0,
            });
        };
        for r in self.routes {
            stream(&mut streams, r.source(), r.destination());
            let s = streams.get_mut(&(r.source(), r.destination())).unwrap();
            s.rate += r.count;
            s.latency = s.latency.max(r.latency());
            s.due += r.count as u64 * rounds.saturating_sub(r.latency()) as u64;
        }
        if let Some(res) = &self.reserved {
            for i in USERS {
                for (from, to, n) in [
                    (i, RELAY, res.uplink.block(i).len()),
                    (RELAY, i, res.downlink.block(i).len()),
                ] {
                    if n > 0 {
                        stream(&mut streams, from, to);
                        let s = streams.get_mut(&(from, to)).unwrap();
                        s.rate = n as u32;
                        s.due = n as u64 * rounds as u64;
                    }
                }
            }
        }
        let warmup = self.routes.iter().map(Route::latency).max().unwrap_or(0);
        let mut relay_checked = 0u64;

        for round in 0..rounds {
            for (k, r) in self.routes.iter().enumerate() {
                payload[k].push((0..r.count).map(|_| rng.gen()).collect());
            }
            let relay_up: Vec<Vec<bool>> = USERS
                .iter()
                .map(|&i| self.reserved.as_ref().map_or(Vec::new(), |res| {
                    (0..res.uplink.block(i).len()).map(|_| rng.gen()).collect()
                }))
                .collect();
            let relay_down: Vec<Vec<bool>> = USERS
                .iter()
                .map(|&i| self.reserved.as_ref().map_or(Vec::new(), |res| {
                    (0..res.downlink.block(i).len()).map(|_| rng.gen()).collect()
                }))
                .collect();

            // Uplink.
            let mut frames: [BitFrame; 4] = std::array::from_fn(|_| BitFrame::new(round));
            let mut sent: HashMap<BitId, bool> = HashMap::new();
            for e in &self.schedule.entries {
                let level = self.up_map[e.uplink_level as usize - 1];
                for b in &e.entry.bits {
                    let v = self.outgoing(b, round, &payload, &mut buffer, level)?;
                    sent.insert(*b, v);
                    frames[b.from as usize - 1].put(level, v);
                }
            }
            if let Some(res) = &self.reserved {
                for i in USERS {
                    for (q, &level) in res.uplink.block(i).iter().enumerate() {
                        frames[i as usize - 1].put(level, relay_up[i as usize - 1][q]);
                    }
                }
                for (idx, f) in frames.iter().enumerate() {
                    for &level in f.levels.keys() {
                        if let Some(owner) = res.uplink.owner(level) {
                            if owner as usize != idx + 1 {
                                return Err(SimError::ReservedLevelShared {
                                    level,
                                    owner,
                                    node: idx as NodeId + 1,
                                });
                            }
                        }
                    }
                }
            }
            let received = superpose_uplink(&frames, &self.gains.uplink)?;

            // Relay: read its own streams, then permute levels.
            let mut out = BitFrame::new(round);
            if let Some(res) = &self.reserved {
                for i in USERS {
                    for (q, &level) in res.uplink.block(i).iter().enumerate() {
                        if received.get(level) != Some(relay_up[i as usize - 1][q]) {
                            return Err(decode_err(round, level, i, RELAY, "relay stream bit"));
                        }
                        streams.get_mut(&(i, RELAY)).unwrap().delivered_per_round[round as usize] += 1;
                    }
                    for (q, &level) in res.downlink.block(i).iter().enumerate() {
                        out.put(level, relay_down[i as usize - 1][q]);
                    }
                }
            }
            for (&ul, &dl) in &self.schedule.relay_map {
                let (ul, dl) = (self.up_map[ul as usize - 1], self.down_map[dl as usize - 1]);
                let value = received.get(ul).unwrap_or(false);
                if out.put(dl, value).is_some() {
                    let owner = self
                        .reserved
                        .as_ref()
                        .and_then(|res| res.downlink.owner(dl))
                        .unwrap_or(RELAY);
                    return Err(SimError::ReservedLevelShared {
                        level: dl,
                        owner,
                        node: RELAY,
                    });
                }
            }
            // The relay output on forwarded levels must be the received
            // combination itself, and that combination the XOR of the bits
            // sent on the level.
            for e in &self.schedule.entries {
                let (ul, dl) = (self.up_map[e.uplink_level as usize - 1], self.down_map[e.downlink_level as usize - 1]);
                let combined = e.entry.bits.iter().fold(false, |acc, b| acc ^ sent[b]);
                if out.get(dl) != received.get(ul) || received.get(ul) != Some(combined) {
                    return Err(SimError::RelayNotOblivious {
                        level: dl,
                        source_level: ul,
                    });
                }
                relay_checked += 1;
            }

            // Downlink.
            let observed: Vec<BitFrame> = USERS
                .iter()
                .map(|&y| observe_downlink(&out, self.gains.down(y)))
                .collect();
            if let Some(res) = &self.reserved {
                for i in USERS {
                    let obs = &observed[i as usize - 1];
                    for (q, &level) in res.downlink.block(i).iter().enumerate() {
                        if obs.get(level) != Some(relay_down[i as usize - 1][q]) {
                            return Err(decode_err(round, level, RELAY, i, "relay stream bit"));
                        }
                        streams.get_mut(&(RELAY, i)).unwrap().delivered_per_round[round as usize] += 1;
                    }
                }
            }
            for e in &self.schedule.entries {
                let level = self.down_map[e.downlink_level as usize - 1];
                for b in &e.entry.bits {
                    let y = b.to;
                    let Some(mut v) = observed[y as usize - 1].get(level) else {
                        return Err(decode_err(round, level, b.from, b.to, "level not observed"));
                    };
                    if e.entry.is_paired() {
                        // The other constituent is the receiver's own bit.
                        let own = e.entry.bits.iter().find(|o| o.from == y).ok_or_else(|| {
                            decode_err(round, level, b.from, b.to, "pair without side information")
                        })?;
                        v ^= sent[own];
                    }
                    self.incoming(b, v, round, level, &payload, &mut buffer, &mut streams)?;
                }
            }
        }

        let streams: Vec<StreamReport> = streams
            .into_values()
            .map(|mut s| {
                s.delivered = s.delivered_per_round.iter().map(|&d| d as u64).sum();
                s
            })
            .collect();
        Ok(DeliveryReport {
            rounds,
            seed,
            warmup,
            detour_moves: 0,
            delivered_bits: streams.iter().map(|s| s.delivered).sum(),
            due_bits: streams.iter().map(|s| s.due).sum(),
            streams,
            relay_levels_checked: relay_checked,
        })
    }

    fn slot(&self, b: &BitId) -> Slot {
        self.slots[&(b.from, b.to)][b.index as usize - 1]
    }

    /// Value a user puts on the channel for the equivalent-rate bit `b`.
    fn outgoing(
        &self,
        b: &BitId,
        round: u32,
        payload: &[Vec<Vec<bool>>],
        buffer: &mut HashMap<(NodeId, usize, usize, u32), bool>,
        level: u32,
    ) -> Result<bool, SimError> {
        let s = self.slot(b);
        let Some(generated) = round.checked_sub(s.hop as u32) else {
            return Ok(false);
        };
        if s.hop == 0 {
            return Ok(payload[s.route][generated as usize][s.offset]);
        }
        buffer
            .remove(&(b.from, s.route, s.offset, generated))
            .ok_or_else(|| decode_err(round, level, b.from, b.to, "detoured bit missing at intermediate user"))
    }

    #[allow(clippy::too_many_arguments)]
    fn incoming(
        &self,
        b: &BitId,
        value: bool,
        round: u32,
        level: u32,
        payload: &[Vec<Vec<bool>>],
        buffer: &mut HashMap<(NodeId, usize, usize, u32), bool>,
        streams: &mut BTreeMap<(NodeId, NodeId), StreamReport>,
    ) -> Result<(), SimError> {
        let s = self.slot(b);
        let route = &self.routes[s.route];
        let Some(generated) = round.checked_sub(s.hop as u32) else {
            if value {
                return Err(decode_err(round, level, b.from, b.to, "warm-up padding"));
            }
            return Ok(());
        };
        if b.to == route.destination() && s.hop + 2 == route.path.len() {
            if value != payload[s.route][generated as usize][s.offset] {
                return Err(decode_err(
                    round,
                    level,
                    route.source(),
                    route.destination(),
                    format!("bit {} of the share via {:?}", s.offset + 1, route.path),
                ));
            }
            streams
                .get_mut(&(route.source(), route.destination()))
                .unwrap()
                .delivered_per_round[round as usize] += 1;
        } else {
            buffer.insert((b.to, s.route, s.offset, generated), value);
        }
        Ok(())
    }
}

fn run_plan(
    gains: GainProfile,
    plan: &DetourPlan,
    schedule: &LevelSchedule,
    up_map: Vec<u32>,
    down_map: Vec<u32>,
    reserved: Option<Reserved>,
    rounds: u32,
    seed: u64,
) -> Result<DeliveryReport, SimError> {
    let engine = Engine {
        schedule,
        routes: &plan.routes,
        slots: slot_table(&plan.routes, &plan.equivalent),
        gains,
        up_map,
        down_map,
        reserved,
    };
    let mut report = engine.run(rounds, seed)?;
    report.detour_moves = plan.moves.len();
    Ok(report)
}

/// Simulates a precomputed plan on the reduced network itself.
pub fn simulate_plan(
    reduced_gains: &GainProfile,
    plan: &DetourPlan,
    rounds: u32,
    seed: u64,
) -> Result<DeliveryReport, SimError> {
    let schedule = build_sos_schedule(reduced_gains, &plan.equivalent)?;
    let top = reduced_gains.uplink.iter().chain(&reduced_gains.downlink).copied().max().unwrap_or(0);
    let identity: Vec<u32> = (1..=top).collect();
    run_plan(*reduced_gains, plan, &schedule, identity.clone(), identity, None, rounds, seed)
}

/// Schedules (with detours when needed) and simulates a reduced network.
pub fn simulate_reduced(
    reduced_gains: &GainProfile,
    rates: &ReducedRateTuple,
    rounds: u32,
    seed: u64,
) -> Result<DeliveryReport, SimError> {
    let plan = apply_best(reduced_gains, rates).map_err(|e| match e {
        DetourError::OutsideRegion { condition, excess } => {
            SimError::OutsideRegion(format!("{condition} exceeded by {excess}"))
        }
        other => SimError::Detour(other),
    })?;
    simulate_plan(reduced_gains, &plan, rounds, seed)
}

/// Runs the full scheme on the 5-node network: relay streams on reserved
/// levels, user streams through the reduced network mapped onto the free
/// levels.
pub fn simulate_5node(gains: &GainProfile, rates: &RateTuple, rounds: u32, seed: u64) -> Result<DeliveryReport, SimError> {
    let report = eval_theorem1(gains, rates);
    if let Some(w) = report.worst().filter(|e| e.is_violated()) {
        return Err(SimError::OutsideRegion(format!("{} exceeded by {}", w.id, w.excess())));
    }
    let reduced = reduce(gains, rates)?;
    let plan = apply_best(&reduced.gains, &reduced.rates)?;
    let schedule = build_sos_schedule(&reduced.gains, &plan.equivalent)?;
    let reserved = Reserved {
        uplink: reduced.derivation.occupied_uplink.clone(),
        downlink: reduced.derivation.occupied_downlink.clone(),
    };
    run_plan(
        *gains,
        &plan,
        &schedule,
        reduced.uplink_free_levels(),
        reduced.downlink_free_levels(),
        Some(reserved),
        rounds,
        seed,
    )
}

/// Rounds simulated per enumerated instance: enough for every route of the
/// plans seen in practice to deliver at full rate at least once.
const SWEEP_ROUNDS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub gains: GainProfile,
    pub rates: ReducedRateTuple,
    pub kind: String,
    pub detail: String,
}

impl FailureRecord {
    fn key(&self) -> ([u32; 4], [u32; 4], Vec<u32>) {
        (self.gains.uplink, self.gains.downlink, self.rates.to_flat())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub gain_max: u32,
    pub rate_max: u32,
    pub profiles: u64,
    /// (profile, tuple) pairs evaluated; tuples whose four-user cut exceeds
    /// the gain bound are outside the region for every profile and skipped.
    pub evaluated: u64,
    pub members: u64,
    pub sos_direct: u64,
    pub detoured: u64,
    pub failures: u64,
    pub lemma1_mismatches: u64,
    pub exhausted: u64,
    pub non_decreasing_plans: u64,
    pub max_moves: u64,
    pub detoured_bits: u64,
    /// Smallest failing instance, for replay.
    pub first_failure: Option<FailureRecord>,
}

impl EnumerationReport {
    fn empty(gain_max: u32, rate_max: u32) -> Self {
        Self {
            gain_max,
            rate_max,
            ..Default::default()
        }
    }

    /// Associative combination of two partial reports over disjoint work.
    pub fn merge(mut self, other: Self) -> Self {
        self.profiles += other.profiles;
        self.evaluated += other.evaluated;
        self.members += other.members;
        self.sos_direct += other.sos_direct;
        self.detoured += other.detoured;
        self.failures += other.failures;
        self.lemma1_mismatches += other.lemma1_mismatches;
        self.exhausted += other.exhausted;
        self.non_decreasing_plans += other.non_decreasing_plans;
        self.max_moves = self.max_moves.max(other.max_moves);
        self.detoured_bits += other.detoured_bits;
        self.first_failure = match (self.first_failure.take(), other.first_failure) {
            (Some(a), Some(b)) => Some(if b.key() < a.key() { b } else { a }),
            (a, b) => a.or(b),
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.lemma1_mismatches == 0 && self.exhausted == 0 && self.non_decreasing_plans == 0
    }

    fn fail(&mut self, gains: &GainProfile, rates: &ReducedRateTuple, kind: &str, detail: String) {
        self.failures += 1;
        let rec = FailureRecord {
            gains: *gains,
            rates: *rates,
            kind: kind.to_string(),
            detail,
        };
        if self.first_failure.as_ref().is_none_or(|f| rec.key() < f.key()) {
            self.first_failure = Some(rec);
        }
    }
}

fn odometer(len: usize, max: u32) -> impl Iterator<Item = Vec<u32>> {
    let total = (max as u64 + 1).pow(len as u32);
    (0..total).map(move |mut n| {
        (0..len)
            .map(|_| {
                let d = (n % (max as u64 + 1)) as u32;
                n /= max as u64 + 1;
                d
            })
            .rev()
            .collect()
    })
}

fn check_instance(report: &mut EnumerationReport, gains: &GainProfile, rates: &ReducedRateTuple, seed: u64) {
    report.evaluated += 1;
    let t2 = eval_theorem2(gains, rates).satisfied;
    let l1 = eval_lemma1(gains, rates).satisfied;
    let direct = build_sos_schedule(gains, rates);
    if direct.is_ok() != (t2 && l1) {
        report.lemma1_mismatches += 1;
        report.fail(gains, rates, "lemma1-mismatch", format!("schedule ok={}, T2={t2}, L1={l1}", direct.is_ok()));
    }
    if !t2 {
        return;
    }
    report.members += 1;
    if l1 {
        report.sos_direct += 1;
    } else {
        report.detoured += 1;
    }
    let plan = match apply_best(gains, rates) {
        Ok(p) => p,
        Err(e) => {
            if matches!(e, DetourError::Exhausted(_)) {
                report.exhausted += 1;
            }
            report.fail(gains, rates, "detour", e.to_string());
            return;
        }
    };
    if !plan.excess_trace.windows(2).all(|w| w[1] < w[0]) {
        report.non_decreasing_plans += 1;
        report.fail(gains, rates, "non-decreasing", format!("{:?}", plan.excess_trace));
    }
    if !plan.conserves() {
        report.fail(gains, rates, "conservation", format!("{:?}", plan.routes));
    }
    report.max_moves = report.max_moves.max(plan.moves.len() as u64);
    report.detoured_bits += plan.detoured_routes().map(|r| r.count as u64).sum::<u64>();
    match simulate_plan(gains, &plan, SWEEP_ROUNDS.max(plan.routes.iter().map(Route::latency).max().unwrap_or(0) + 1), seed) {
        Ok(d) if d.complete() && d.steady_state_ok() => {}
        Ok(d) => report.fail(gains, rates, "delivery", format!("{}/{} bits", d.delivered_bits, d.due_bits)),
        Err(e) => report.fail(gains, rates, "simulation", e.to_string()),
    }
}

/// Checks every reduced gain profile with entries `<= gain_max` against every
/// rate tuple with entries `<= rate_max`: region members must be scheduled
/// (directly or after detours) and decoded bit-exactly, and direct
/// schedulability must coincide with the extra conditions.
pub fn enumerate_verify(gain_max: u32, rate_max: u32) -> EnumerationReport {
    let tuples: Vec<ReducedRateTuple> = odometer(12, rate_max)
        .map(|flat| ReducedRateTuple::from_flat(&flat).unwrap())
        .filter(|r| four_user_cut(r) <= gain_max as u64)
        .collect();
    let profiles: Vec<Vec<u32>> = odometer(8, gain_max).collect();
    profiles
        .par_iter()
        .enumerate()
        .map(|(p, flat)| {
            let gains = GainProfile::new([flat[0], flat[1], flat[2], flat[3]], [flat[4], flat[5], flat[6], flat[7]]);
            let mut report = EnumerationReport::empty(gain_max, rate_max);
            report.profiles = 1;
            for (k, r) in tuples.iter().enumerate() {
                check_instance(&mut report, &gains, r, (p as u64) << 32 | k as u64);
            }
            report
        })
        .reduce(|| EnumerationReport::empty(gain_max, rate_max), EnumerationReport::merge)
}
