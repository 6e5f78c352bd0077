//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles re-derive availability, observable stepping, costs and the
//! contamination process directly from the scenario data, on purpose not
//! calling into the code paths they are used to check. Flag uncertainty is
//! handled either by evolving the full joint distribution over flag vectors
//! or by Monte-Carlo sampling.

// Each test binary uses its own subset of these helpers.
#![allow(dead_code)]

use cleansynth::pomdp::JointMove;
use cleansynth::scenario::{PlaceId, Scenario};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn load_fixture(name: &str) -> Scenario {
    let path = format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {path}: {e}"));
    Scenario::parse(&text).unwrap_or_else(|e| panic!("parsing {path}: {e}"))
}

/// Adjacency from the raw edge list (staying allowed), sorted.
fn neighbors(sc: &Scenario, p: PlaceId) -> Vec<PlaceId> {
    let mut out = vec![p];
    for &(a, b) in &sc.edges {
        if a == p {
            out.push(b);
        }
        if b == p {
            out.push(a);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn run_over(sc: &Scenario, t: u32, c: &[u32]) -> bool {
    t >= sc.horizon_t || c.contains(&0)
}

/// All joint moves available at `(t, x, c)`, re-derived from first
/// principles: adjacency, pairwise-distinct targets, the swap policy, and
/// `fin` exactly in error or final states.
pub fn oracle_moves(sc: &Scenario, t: u32, x: &[PlaceId], c: &[u32]) -> Vec<JointMove> {
    if run_over(sc, t, c) {
        return vec![JointMove::Fin];
    }
    let mut out = Vec::new();
    let per_robot: Vec<Vec<PlaceId>> = x.iter().map(|&p| neighbors(sc, p)).collect();
    let k = x.len();
    let mut stack: Vec<Vec<PlaceId>> = vec![vec![]];
    while let Some(prefix) = stack.pop() {
        if prefix.len() == k {
            out.push(JointMove::To(prefix));
            continue;
        }
        let i = prefix.len();
        // Depth-first over reversed candidates keeps the output sorted.
        for &q in per_robot[i].iter().rev() {
            if prefix.contains(&q) {
                continue;
            }
            if !sc.allow_swaps && (0..i).any(|other| prefix[other] == x[i] && q == x[other]) {
                continue;
            }
            let mut next = prefix.clone();
            next.push(q);
            stack.push(next);
        }
    }
    out.sort();
    out
}

fn step_obs(sc: &Scenario, x: &[PlaceId], c: &[u32], mv: &JointMove) -> (Vec<PlaceId>, Vec<u32>) {
    match mv {
        JointMove::Fin => (x.to_vec(), c.to_vec()),
        JointMove::To(targets) => {
            let c = targets
                .iter()
                .zip(c)
                .zip(&sc.robots)
                .map(|((&tgt, &ci), r)| {
                    if sc.places[tgt].kind == cleansynth::scenario::PlaceKind::Charger {
                        (ci + r.charge_rate).min(r.max_charge)
                    } else {
                        ci.saturating_sub(r.discharge_rate)
                    }
                })
                .collect();
            (targets.clone(), c)
        }
    }
}

fn cleaned_bits(sc: &Scenario, x: &[PlaceId]) -> u32 {
    let mut bits = 0;
    for &p in x {
        if let Some(j) = sc.room_index(p) {
            bits |= 1 << j;
        }
    }
    bits
}

/// Deterministic cost clauses of the entered state `(t, x, c)` without the
/// flag term.
fn base_cost(sc: &Scenario, t: u32, x: &[PlaceId], c: &[u32]) -> f64 {
    let mut cost = 0.0;
    let a_lot = sc.a_lot as f64;
    for (i, r) in sc.robots.iter().enumerate() {
        if c[i] == 0 {
            cost += a_lot;
        }
        if t == sc.horizon_t && (x[i] != r.start || c[i] < r.omega_chg_thres) {
            cost += a_lot;
        }
        if t < sc.horizon_t {
            cost += (r.max_charge - c[i]) as f64;
        }
        if let Some(j) = sc.room_index(x[i]) {
            if sc.rooms[j].util.iter().any(|&(a, b)| a <= t && t < b) {
                cost += a_lot;
            }
        }
    }
    cost
}

/// Exact expected schedule cost by evolving the joint distribution over
/// flag vectors (feasible for small room counts).
pub fn joint_expected_cost(sc: &Scenario, moves: &[JointMove]) -> f64 {
    let m = sc.n_rooms();
    assert!(m <= 16, "joint evolution is exponential in the room count");
    let mut x: Vec<PlaceId> = sc.robots.iter().map(|r| r.start).collect();
    let mut c: Vec<u32> = sc.robots.iter().map(|r| r.omega_chg_thres).collect();
    let mut dist = vec![0.0f64; 1 << m];
    dist[0] = 1.0;
    let mut total = 0.0;
    let a_bit = sc.a_bit as f64;

    for (step, mv) in moves.iter().enumerate() {
        let t = step as u32 + 1;
        let avail = oracle_moves(sc, step as u32, &x, &c);
        assert!(
            avail.contains(mv),
            "oracle: move {mv} unavailable at {step}"
        );
        let (nx, nc) = step_obs(sc, &x, &c, mv);
        if let JointMove::To(_) = mv {
            let cleaned = cleaned_bits(sc, &nx);
            let mut next = vec![0.0f64; 1 << m];
            for (mask, &q) in dist.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let base = mask as u32 & !cleaned;
                let mut stay = 1.0;
                for (j, room) in sc.rooms.iter().enumerate() {
                    if cleaned & (1 << j) == 0 && room.pr > 0.0 {
                        stay -= room.pr;
                        next[(base | (1 << j)) as usize] += q * room.pr;
                    }
                }
                next[base as usize] += q * stay.max(0.0);
            }
            dist = next;
        }
        x = nx;
        c = nc;
        let expected_flags: f64 = dist
            .iter()
            .enumerate()
            .map(|(mask, &q)| q * mask.count_ones() as f64)
            .sum();
        total += base_cost(sc, t, &x, &c) + a_bit * expected_flags;
    }
    total
}

/// Monte-Carlo estimate of the expected schedule cost over the sampled
/// joint flag process. Returns the mean and its standard error.
pub fn monte_carlo_cost(
    sc: &Scenario,
    moves: &[JointMove],
    runs: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let a_bit = sc.a_bit as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..runs {
        let mut x: Vec<PlaceId> = sc.robots.iter().map(|r| r.start).collect();
        let mut c: Vec<u32> = sc.robots.iter().map(|r| r.omega_chg_thres).collect();
        let mut flags = 0u32;
        let mut total = 0.0;
        for (step, mv) in moves.iter().enumerate() {
            let t = step as u32 + 1;
            let (nx, nc) = step_obs(sc, &x, &c, mv);
            if let JointMove::To(_) = mv {
                let cleaned = cleaned_bits(sc, &nx);
                flags &= !cleaned;
                let mut u: f64 = rng.gen();
                for (j, room) in sc.rooms.iter().enumerate() {
                    if cleaned & (1 << j) == 0 && room.pr > 0.0 {
                        if u < room.pr {
                            flags |= 1 << j;
                            break;
                        }
                        u -= room.pr;
                    }
                }
            }
            x = nx;
            c = nc;
            total += base_cost(sc, t, &x, &c) + a_bit * flags.count_ones() as f64;
        }
        sum += total;
        sum_sq += total * total;
    }
    let n = runs as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Exhaustive minimum over every available schedule, each evaluated with
/// the joint-distribution oracle. Returns the optimum and the number of
/// schedules enumerated.
pub fn exhaustive_minimum(sc: &Scenario) -> (f64, usize) {
    let horizon = sc.horizon_t as usize;
    let mut best = f64::INFINITY;
    let mut count = 0usize;

    #[allow(clippy::too_many_arguments)]
    fn rec(
        sc: &Scenario,
        t: usize,
        x: Vec<PlaceId>,
        c: Vec<u32>,
        prefix: &mut Vec<JointMove>,
        horizon: usize,
        best: &mut f64,
        count: &mut usize,
    ) {
        if t == horizon {
            *count += 1;
            let cost = joint_expected_cost(sc, prefix);
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for mv in oracle_moves(sc, t as u32, &x, &c) {
            let (nx, nc) = step_obs(sc, &x, &c, &mv);
            prefix.push(mv);
            rec(sc, t + 1, nx, nc, prefix, horizon, best, count);
            prefix.pop();
        }
    }

    let x: Vec<PlaceId> = sc.robots.iter().map(|r| r.start).collect();
    let c: Vec<u32> = sc.robots.iter().map(|r| r.omega_chg_thres).collect();
    let mut prefix = Vec::with_capacity(horizon);
    rec(sc, 0, x, c, &mut prefix, horizon, &mut best, &mut count);
    (best, count)
}

/// Inline scenario builder for small hand-written instances.
pub fn scenario_from_json(text: &str) -> Scenario {
    Scenario::parse(text).expect("fixture scenario must parse")
}

/// One charger, `m` rooms in a line, one robot. `pr` gives the per-room
/// contamination probabilities.
pub fn line_scenario(pr: &[f64], horizon: u32, max_charge: u32, a_bit: u64) -> Scenario {
    let mut places = vec![serde_json::json!({"name": "C0", "kind": "charger"})];
    let mut edges = Vec::new();
    for (j, _) in pr.iter().enumerate() {
        places.push(serde_json::json!({"name": format!("R{}", j + 1), "kind": "room"}));
        edges.push(serde_json::json!([j, j + 1]));
    }
    let rooms: Vec<_> = pr
        .iter()
        .map(|p| {
            serde_json::json!({
                "pr": p, "threshold": 6, "contamination_rate": 1, "omega_cont_thres": 3
            })
        })
        .collect();
    let doc = serde_json::json!({
        "places": places,
        "edges": edges,
        "rooms": rooms,
        "robots": [{
            "start": 0, "max_charge": max_charge, "charge_rate": max_charge,
            "discharge_rate": 1, "omega_chg_thres": max_charge
        }],
        "horizon_T": horizon,
        "a_bit": a_bit
    });
    scenario_from_json(&doc.to_string())
}
