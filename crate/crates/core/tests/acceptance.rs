//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use detrelay::detour::{apply_best, find_mgc};
use detrelay::model::{order_nodes, GainProfile, NodeId, RateTuple, ReducedRateTuple};
use detrelay::reduction::reduce;
use detrelay::region::{eval_lemma1, eval_theorem1, eval_theorem2, sos_feasible, Edge, InequalityReport};
use detrelay::sim::{enumerate_verify, simulate_5node, simulate_reduced, EnumerationReport};
use detrelay::sos::build_sos_schedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(failures: &mut Vec<String>, cond: bool, what: impl Into<String>) {
    if !cond {
        failures.push(what.into());
    }
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            summary
        } else {
            failures.join("; ")
        },
    }
}

fn edge_set(edges: &[Edge]) -> Vec<Edge> {
    let mut v = edges.to_vec();
    v.sort();
    v
}

fn edges(list: &[(NodeId, NodeId)]) -> Vec<Edge> {
    edge_set(&list.iter().map(|&(i, j)| Edge(i, j)).collect::<Vec<_>>())
}

fn reduced(flat: [u32; 12]) -> ReducedRateTuple {
    ReducedRateTuple::from_flat(&flat).unwrap()
}

fn example1() -> (GainProfile, RateTuple) {
    (
        GainProfile::new([11, 5, 7, 1], [2, 8, 5, 11]),
        RateTuple::from_flat(&[2, 0, 1, 2, 0, 2, 1, 1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1, 1]).unwrap(),
    )
}

fn example2() -> (GainProfile, RateTuple) {
    (
        GainProfile::new([11, 10, 5, 3], [3, 6, 10, 11]),
        RateTuple::from_flat(&[2, 1, 0, 1, 0, 2, 1, 0, 0, 0, 1, 1, 2, 0, 0, 1, 0, 2, 1, 1]).unwrap(),
    )
}

fn criterion1() -> Outcome {
    let mut f = Vec::new();
    let (g, r) = example1();
    let red = reduce(&g, &r).expect("example 1 reduces");
    check(&mut f, red.gains.downlink == [1, 5, 3, 7], format!("reduced DL {:?}", red.gains.downlink));
    // The worked example prints 4 for node 2; reserved levels 5 and 1 sit
    // inside node 2's reach of 5, so 3 levels remain.
    check(&mut f, red.gains.uplink == [7, 3, 5, 0], format!("reduced UL {:?}", red.gains.uplink));
    let mgc = find_mgc(&red.gains, &red.rates);
    match &mgc {
        Ok(m) => {
            check(&mut f, m.excess == 1, format!("MGC excess {}", m.excess));
            check(
                &mut f,
                edge_set(&m.condition.edges) == edges(&[(1, 2), (2, 3), (3, 1), (1, 4), (2, 4), (3, 4)]),
                format!("MGC edges {:?}", m.condition.edges),
            );
        }
        Err(e) => f.push(format!("no MGC: {e}")),
    }
    match apply_best(&red.gains, &red.rates) {
        Ok(p) => check(
            &mut f,
            p.equivalent == reduced([1, 1, 1, 0, 2, 1, 1, 1, 1, 0, 0, 0]),
            format!("equivalent {}", p.equivalent),
        ),
        Err(e) => f.push(format!("detour: {e}")),
    }
    match simulate_5node(&g, &r, 5, 1) {
        Ok(d) => {
            check(&mut f, d.complete() && d.steady_state_ok(), format!("delivery {}/{}", d.delivered_bits, d.due_bits));
            let lat = d.stream(1, 2).map(|s| s.latency);
            check(&mut f, lat == Some(1), format!("detoured stream latency {lat:?}"));
        }
        Err(e) => f.push(format!("simulation: {e}")),
    }
    outcome(
        f,
        format!(
            "reduced UL={:?} (n_2R=3; worked example prints 4) DL={:?}, MGC excess 1, DS1 equivalent matches, 5 rounds 100%",
            red.gains.uplink, red.gains.downlink
        ),
    )
}

fn criterion2() -> Outcome {
    let mut f = Vec::new();
    let (g, r) = example2();
    let red = reduce(&g, &r).expect("example 2 reduces");
    check(
        &mut f,
        red.gains == GainProfile::new([8, 8, 3, 2], [3, 4, 7, 7]),
        format!("reduced gains {}", red.gains),
    );
    match find_mgc(&red.gains, &red.rates) {
        Ok(m) => {
            check(&mut f, m.excess == 2, format!("MGC excess {}", m.excess));
            check(
                &mut f,
                edge_set(&m.condition.edges) == edges(&[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]),
                format!("MGC edges {:?}", m.condition.edges),
            );
        }
        Err(e) => f.push(format!("no MGC: {e}")),
    }
    let listed = reduced([2, 1, 1, 1, 2, 0, 1, 0, 1, 1, 0, 1]);
    check(&mut f, sos_feasible(&red.gains, &listed), "listed equivalent tuple not directly schedulable");
    let mut plan_tuple = String::new();
    match apply_best(&red.gains, &red.rates) {
        Ok(p) => {
            plan_tuple = p.equivalent.to_string();
            check(&mut f, eval_theorem2(&red.gains, &p.equivalent).satisfied, "plan leaves the region");
            check(&mut f, eval_lemma1(&red.gains, &p.equivalent).satisfied, "plan violates extra conditions");
            check(&mut f, p.conserves(), "plan does not conserve delivery");
        }
        Err(e) => f.push(format!("detour: {e}")),
    }
    match simulate_5node(&g, &r, 5, 2) {
        Ok(d) => check(&mut f, d.complete() && d.steady_state_ok(), format!("delivery {}/{}", d.delivered_bits, d.due_bits)),
        Err(e) => f.push(format!("simulation: {e}")),
    }
    outcome(
        f,
        format!("reduced {}, MGC excess 2, listed tuple feasible, plan {plan_tuple} feasible and conserving, 5 rounds 100%", red.gains),
    )
}

fn sweep_outcomes(rep: &EnumerationReport, elapsed: Duration) -> [Outcome; 3] {
    let failure = rep
        .first_failure
        .as_ref()
        .map(|x| format!(" first failure: {} {} [{}] {}", x.gains, x.rates, x.kind, x.detail))
        .unwrap_or_default();
    let mut f3 = Vec::new();
    check(&mut f3, rep.failures == 0, format!("{} failures.{failure}", rep.failures));
    check(&mut f3, rep.detoured > 0, "detour path never exercised");
    check(&mut f3, elapsed < Duration::from_secs(600), format!("took {elapsed:?}"));
    let mut f4 = Vec::new();
    check(&mut f4, rep.lemma1_mismatches == 0, format!("{} mismatches", rep.lemma1_mismatches));
    check(&mut f4, rep.evaluated > 0, "nothing evaluated");
    let mut f5 = Vec::new();
    check(&mut f5, rep.exhausted == 0, format!("{} exhausted", rep.exhausted));
    check(&mut f5, rep.non_decreasing_plans == 0, format!("{} plans without strict decrease", rep.non_decreasing_plans));
    [
        outcome(
            f3,
            format!(
                "{} profiles, {} members ({} direct, {} detoured), 0 failures",
                rep.profiles, rep.members, rep.sos_direct, rep.detoured
            ),
        ),
        outcome(f4, format!("{} (profile, tuple) pairs, 0 mismatches", rep.evaluated)),
        outcome(
            f5,
            format!("{} detoured members, 0 exhausted, max {} move(s) per plan", rep.detoured, rep.max_moves),
        ),
    ]
}

/// Lowers the largest term of the worst violated entry until every report
/// returned by `eval` holds.
fn shrink<T: Copy>(
    mut r: T,
    eval: impl Fn(&T) -> Vec<InequalityReport>,
    get: impl Fn(&T, Edge) -> u32,
    set: impl Fn(&mut T, Edge, u32),
) -> T {
    loop {
        let reports = eval(&r);
        let worst = reports
            .iter()
            .flat_map(|rep| rep.entries.iter())
            .filter(|e| e.is_violated())
            .min_by_key(|e| e.gap);
        let Some(worst) = worst else {
            return r;
        };
        let e = *worst.edges.iter().max_by_key(|e| get(&r, **e)).unwrap();
        let v = get(&r, e);
        set(&mut r, e, v - 1);
    }
}

fn random_rate(rng: &mut ChaCha8Rng, max: u32) -> u32 {
    if rng.gen_bool(0.5) {
        0
    } else {
        rng.gen_range(1..=max)
    }
}

/// Reduced gains of one phase from the closed forms, in role order
/// (strongest first), with the case table clamped at zero.
fn closed_form_oracle(n: [i64; 4], r: [i64; 4]) -> [i64; 4] {
    let p = |x: i64| x.max(0);
    let first = n[0] - r.iter().sum::<i64>();
    let second = n[1] - r[1] - r[2] - r[3] - p(r[0] - (n[0] - n[1]));
    let case = if r[0] >= n[0] - n[2] {
        p(r[0] - (n[0] - n[2])) + r[1]
    } else if r[0] >= n[0] - n[1] {
        r[1] - (n[1] - p(r[0] - (n[0] - n[1])) - n[2])
    } else {
        p(r[1] - (n[1] - n[2]))
    };
    let third = n[2] - r[2] - r[3] - p(case);
    let spill = [
        r[0] + r[1] + r[2] - (n[0] - n[3]),
        r[1] + r[2] - (n[1] - n[3]),
        r[2] - (n[2] - n[3]),
    ];
    let fourth = n[3] - r[3] - p(*spill.iter().max().unwrap());
    [first, second, third, fourth]
}

/// Free levels per user after laying out relay blocks strongest first.
fn constructive_oracle(gains: [u32; 4], order: [NodeId; 4], rates: [u32; 4]) -> Option<[u32; 4]> {
    let mut reserved = Vec::new();
    let mut ceiling = u32::MAX;
    for node in order {
        let (n, k) = (gains[node as usize - 1], rates[node as usize - 1]);
        if k == 0 {
            continue;
        }
        let start = n.min(ceiling);
        if k > start {
            return None;
        }
        reserved.extend(start - k + 1..=start);
        ceiling = start - k;
    }
    Some(gains.map(|n| n - reserved.iter().filter(|&&l| l <= n).count() as u32))
}

fn criterion6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut f = Vec::new();
    let mut with_relay = 0;
    for _ in 0..10_000 {
        let g = GainProfile::new(
            std::array::from_fn(|_| rng.gen_range(0..=12)),
            std::array::from_fn(|_| rng.gen_range(0..=12)),
        );
        let flat: Vec<u32> = (0..20).map(|_| random_rate(&mut rng, 4)).collect();
        let r = shrink(
            RateTuple::from_flat(&flat).unwrap(),
            |r| vec![eval_theorem1(&g, r)],
            |r, e| r.get(e.0, e.1),
            |r, e, v| r.set(e.0, e.1, v),
        );
        if r.to_relay_total() + r.from_relay_total() > 0 {
            with_relay += 1;
        }
        let red = match reduce(&g, &r) {
            Ok(x) => x,
            Err(e) => {
                f.push(format!("{g} {r}: {e}"));
                continue;
            }
        };
        if !eval_theorem2(&red.gains, &red.rates).satisfied {
            f.push(format!("{g} {r}: reduced tuple outside the 4-user region"));
        }
        let o = order_nodes(&g);
        for (phase, order, orig, red_g, relay) in [
            ("UL", o.uplink, g.uplink, red.gains.uplink, r.to_relay()),
            ("DL", o.downlink, g.downlink, red.gains.downlink, r.from_relay()),
        ] {
            let by_role: Vec<u32> = order.iter().map(|&n| red_g[n as usize - 1]).collect();
            if by_role.windows(2).any(|w| w[0] < w[1]) {
                f.push(format!("{g} {r}: {phase} reduced gains not ordered {by_role:?}"));
            }
            let closed = closed_form_oracle(
                order.map(|n| orig[n as usize - 1] as i64),
                order.map(|n| relay[n as usize - 1] as i64),
            );
            let constructive = constructive_oracle(orig, order, relay);
            let closed_by_node: [i64; 4] =
                std::array::from_fn(|i| closed[order.iter().position(|&n| n as usize == i + 1).unwrap()]);
            if constructive.map(|c| c.map(i64::from)) != Some(closed_by_node) || constructive != Some(red_g) {
                f.push(format!(
                    "{g} {r}: {phase} closed form {closed_by_node:?}, constructive {constructive:?}, library {red_g:?}"
                ));
            }
        }
        if f.len() > 5 {
            break;
        }
    }
    check(&mut f, with_relay > 5_000, format!("only {with_relay} instances carry relay streams"));
    outcome(f, format!("10000 instances ({with_relay} with relay streams), 0 violations"))
}

fn criterion7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut f = Vec::new();
    let mut bits = 0u64;
    let mut levels = 0u64;
    for k in 0..1_000u64 {
        let g = GainProfile::new(
            std::array::from_fn(|_| rng.gen_range(0..=8)),
            std::array::from_fn(|_| rng.gen_range(0..=8)),
        );
        let flat: Vec<u32> = (0..12).map(|_| random_rate(&mut rng, 3)).collect();
        let r = shrink(
            ReducedRateTuple::from_flat(&flat).unwrap(),
            |r| vec![eval_theorem2(&g, r), eval_lemma1(&g, r)],
            |r, e| r.get(e.0, e.1),
            |r, e, v| r.set(e.0, e.1, v),
        );
        let entries = match build_sos_schedule(&g, &r) {
            Ok(s) => s.entries.len() as u64,
            Err(e) => {
                f.push(format!("{g} {r}: {e}"));
                continue;
            }
        };
        match simulate_reduced(&g, &r, 1, k) {
            Ok(d) => {
                bits += d.delivered_bits;
                levels += d.relay_levels_checked;
                if !(d.complete() && d.detour_moves == 0 && d.delivered_bits == r.total() as u64) {
                    f.push(format!("{g} {r}: delivered {}/{}", d.delivered_bits, r.total()));
                }
                if d.relay_levels_checked != entries {
                    f.push(format!("{g} {r}: relay checked {} of {entries} levels", d.relay_levels_checked));
                }
            }
            Err(e) => f.push(format!("{g} {r}: {e}")),
        }
        if f.len() > 5 {
            break;
        }
    }
    outcome(f, format!("1000 instances, {bits} bits delivered in one round, {levels} relay levels verified as copies"))
}

fn report(n: usize, name: &str, o: &Outcome, elapsed: Duration, all_pass: &mut bool) {
    *all_pass &= o.pass;
    println!(
        "{} criterion {n}: {name} [{:.2?}] {}",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed,
        o.detail
    );
}

fn timed(f: impl FnOnce() -> Outcome, budget: Duration) -> (Outcome, Duration) {
    let t = Instant::now();
    let mut o = f();
    let elapsed = t.elapsed();
    if elapsed >= budget {
        o.pass = false;
        o.detail = format!("{} (over budget {budget:?})", o.detail);
    }
    (o, elapsed)
}

fn main() -> ExitCode {
    let mut all = true;
    let (o, t) = timed(criterion1, Duration::from_secs(1));
    report(1, "worked example 1 replay", &o, t, &mut all);
    let (o, t) = timed(criterion2, Duration::from_secs(1));
    report(2, "worked example 2 replay", &o, t, &mut all);

    let start = Instant::now();
    let rep = enumerate_verify(2, 2);
    let elapsed = start.elapsed();
    let [o3, o4, o5] = sweep_outcomes(&rep, elapsed);
    report(3, "achievability sweep G=2 M=2", &o3, elapsed, &mut all);
    report(4, "direct schedule iff extra conditions", &o4, elapsed, &mut all);
    report(5, "detour search never exhausted, strict decrease", &o5, elapsed, &mut all);

    let (o, t) = timed(criterion6, Duration::from_secs(60));
    report(6, "reduction soundness", &o, t, &mut all);
    let (o, t) = timed(criterion7, Duration::from_secs(600));
    report(7, "single-round bit-exactness", &o, t, &mut all);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
