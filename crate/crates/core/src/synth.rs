//! Schedule synthesis: minimise the summed expected penalties, energy and
//! utilisation cost accumulated until `t = T`.
//!
//! Because the observable dynamics are deterministic and the hidden
//! contamination flags never feed back into action availability or the
//! observable update, a belief over flag vectors is fully summarised by its
//! per-room marginals: the penalty is linear in the flags, so the expected
//! cost of any fixed schedule depends on the belief only through
//! `p_j = P(d_j)`. Both solvers below work on these marginals.
//!
//! * [`exact_synthesize`] runs backward induction over the reachable
//!   `(t, x, c, tau)` space, where `tau_j` counts the steps since room `j`
//!   was last cleaned and determines `p_j` exactly. This replaces a generic
//!   belief grid with an exact finite parameterisation, at the price of a
//!   state space that can blow up on larger instances.
//! * [`grid_synthesize`] quantises each marginal onto the grid
//!   `{0, 1/g, ..., 1}` and evaluates future values by per-coordinate linear
//!   interpolation, then extracts a schedule by a forward rollout that uses
//!   exact marginal updates but grid-interpolated value lookups.
//!
//! Ties between equally valued actions are always broken towards the
//! lexicographically smallest target vector, so identical inputs produce
//! identical schedules.

use crate::pomdp::{self, JointMove, ObsState};
use crate::scenario::{PlaceId, Scenario};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    Grid,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Exact => write!(f, "exact"),
            SolverKind::Grid => write!(f, "grid"),
        }
    }
}

/// Deterministic time-indexed schedule: `moves[t]` is the joint action taken
/// at step `t`, for `t = 0..T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub moves: Vec<JointMove>,
    pub meta: StrategyMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMeta {
    pub scenario_hash: String,
    pub solver: SolverKind,
    pub g: Option<u32>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthResult {
    pub strategy: Strategy,
    /// Expected total cost of the returned schedule (exact for both
    /// solvers; the grid solver evaluates its schedule post hoc).
    pub value: f64,
    /// Absolute difference between the grid-interpolated value estimate and
    /// the exact cost of the returned schedule; zero for the exact solver.
    pub bound_gap: f64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("grid resolution must be at least 1")]
    InvalidGrid,
    #[error("solver state space exceeds the cap: {states} states, cap {cap}")]
    CapExceeded { states: usize, cap: usize },
    #[error("schedule action {action} unavailable at step {t}")]
    UnavailableAction { t: u32, action: String },
    #[error("schedule has {got} steps but the horizon is {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("scenario failed validation:\n{0}")]
    InvalidScenario(crate::scenario::ValidationReport),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverLimits {
    /// Cap on solver state count (exact: reachable DP states; grid:
    /// observable states times grid points).
    pub max_states: usize,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            max_states: 20_000_000,
        }
    }
}

/// One-step marginal update for a single room: cleaning resets the marginal
/// to zero, otherwise the flag survives or gets newly set with probability
/// `pr`.
pub fn marginal_update(p: f64, pr: f64, cleaned: bool) -> f64 {
    if cleaned {
        0.0
    } else {
        p + (1.0 - p) * pr
    }
}

/// Expected cost of one schedule, split by reward structure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub penalty: f64,
    pub energy: f64,
    pub utilisation: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.penalty + self.energy + self.utilisation
    }
}

/// Simulates the unique observable path of a schedule and accumulates the
/// exact expected cost: deterministic penalty, energy and utilisation terms
/// plus `a_bit` times the summed flag marginals of every entered state.
/// This equals the schedule's expected cost in the full POMDP.
pub fn evaluate_schedule(sc: &Scenario, moves: &[JointMove]) -> Result<CostBreakdown, SynthError> {
    let horizon = sc.horizon_t as usize;
    if moves.len() != horizon {
        return Err(SynthError::WrongLength {
            expected: horizon,
            got: moves.len(),
        });
    }
    let init = pomdp::initial_state(sc);
    let mut obs = init.obs;
    let mut p = vec![0.0f64; sc.n_rooms()];
    let mut out = CostBreakdown::default();
    let a_bit = sc.a_bit as f64;

    for (t, action) in moves.iter().enumerate() {
        if !pomdp::available_moves_obs(sc, obs.t, &obs.x, &obs.c).contains(action) {
            return Err(SynthError::UnavailableAction {
                t: t as u32,
                action: action.to_string(),
            });
        }
        obs = pomdp::step_observable_unchecked(sc, &obs, action);
        if let JointMove::To(targets) = action {
            let cleaned = pomdp::cleaned_rooms(sc, targets);
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = marginal_update(*pj, sc.rooms[j].pr, cleaned.contains(&j));
            }
        }
        // `fin` freezes the contamination model, so the marginals stay put.
        let cost = pomdp::obs_cost(sc, obs.t, &obs.x, &obs.c);
        out.penalty += cost.penalty as f64 + a_bit * p.iter().sum::<f64>();
        out.energy += cost.energy as f64;
        out.utilisation += cost.utilisation as f64;
    }
    Ok(out)
}

/// Total expected cost of a strategy's schedule.
pub fn expected_schedule_cost(sc: &Scenario, strategy: &Strategy) -> Result<f64, SynthError> {
    Ok(evaluate_schedule(sc, &strategy.moves)?.total())
}

/// Marginal lookup tables: `tab[j][tau]` is the flag probability of room
/// `j` after `tau` uncleaned steps, built by iterating `marginal_update` so
/// every code path produces bit-identical probabilities.
fn marginal_tables(sc: &Scenario) -> Vec<Vec<f64>> {
    let horizon = sc.horizon_t as usize;
    sc.rooms
        .iter()
        .map(|room| {
            let mut tab = Vec::with_capacity(horizon + 1);
            tab.push(0.0);
            for tau in 1..=horizon {
                tab.push(marginal_update(tab[tau - 1], room.pr, false));
            }
            tab
        })
        .collect()
}

fn check_valid(sc: &Scenario) -> Result<(), SynthError> {
    let report = sc.validate();
    if report.is_empty() {
        Ok(())
    } else {
        Err(SynthError::InvalidScenario(report))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct DpKey {
    x: Vec<PlaceId>,
    c: Vec<u32>,
    tau: Vec<u32>,
}

struct Layer<K> {
    keys: Vec<K>,
    index: HashMap<K, usize>,
}

impl<K: Clone + Eq + std::hash::Hash> Layer<K> {
    fn new() -> Self {
        Layer {
            keys: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn insert(&mut self, key: K) -> usize {
        match self.index.get(&key) {
            Some(&i) => i,
            None => {
                let i = self.keys.len();
                self.index.insert(key.clone(), i);
                self.keys.push(key);
                i
            }
        }
    }
}

fn step_xc(
    sc: &Scenario,
    x: &[PlaceId],
    c: &[u32],
    action: &JointMove,
) -> (Vec<PlaceId>, Vec<u32>) {
    let o = ObsState {
        t: 0,
        x: x.to_vec(),
        c: c.to_vec(),
    };
    let next = pomdp::step_observable_unchecked(sc, &o, action);
    (next.x, next.c)
}

fn step_tau(sc: &Scenario, tau: &[u32], action: &JointMove, x_next: &[PlaceId]) -> Vec<u32> {
    match action {
        JointMove::Fin => tau.to_vec(),
        JointMove::To(_) => {
            let mut cleaned = vec![false; tau.len()];
            for &p in x_next {
                if let Some(j) = sc.room_index(p) {
                    cleaned[j] = true;
                }
            }
            tau.iter()
                .enumerate()
                .map(|(j, &tj)| {
                    if cleaned[j] {
                        0
                    } else {
                        (tj + 1).min(sc.horizon_t)
                    }
                })
                .collect()
        }
    }
}

/// Cost of entering `(t, x, c)` with an expected `flag_sum` set flags.
fn entered_cost(sc: &Scenario, t: u32, x: &[PlaceId], c: &[u32], flag_sum: f64) -> f64 {
    let cost = pomdp::obs_cost(sc, t, x, c);
    cost.total() as f64 + sc.a_bit as f64 * flag_sum
}

/// Minimum-cost schedule by backward induction over the reachable
/// `(t, x, c, tau)` space. Exact: the returned value equals the schedule's
/// expected cost and no schedule does better.
pub fn exact_synthesize(sc: &Scenario) -> Result<SynthResult, SynthError> {
    exact_synthesize_with(sc, SolverLimits::default())
}

pub fn exact_synthesize_with(
    sc: &Scenario,
    limits: SolverLimits,
) -> Result<SynthResult, SynthError> {
    check_valid(sc)?;
    let horizon = sc.horizon_t as usize;
    let tabs = marginal_tables(sc);
    let init = pomdp::initial_state(sc);

    // Forward pass: collect the reachable DP states per time layer.
    let mut layers: Vec<Layer<DpKey>> = Vec::with_capacity(horizon + 1);
    let mut first = Layer::new();
    first.insert(DpKey {
        x: init.obs.x.clone(),
        c: init.obs.c.clone(),
        tau: vec![0; sc.n_rooms()],
    });
    layers.push(first);
    let mut total_states = 1usize;

    for t in 0..horizon {
        let mut next = Layer::new();
        for key in &layers[t].keys {
            for action in pomdp::available_moves_obs(sc, t as u32, &key.x, &key.c) {
                let (x, c) = step_xc(sc, &key.x, &key.c, &action);
                let tau = step_tau(sc, &key.tau, &action, &x);
                next.insert(DpKey { x, c, tau });
            }
        }
        total_states += next.keys.len();
        if total_states > limits.max_states {
            return Err(SynthError::CapExceeded {
                states: total_states,
                cap: limits.max_states,
            });
        }
        layers.push(next);
    }

    // Backward induction, remembering the minimising action per state.
    let mut values: Vec<f64> = vec![0.0; layers[horizon].keys.len()];
    let mut best: Vec<Vec<JointMove>> = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let layer = &layers[t];
        let succ_layer = &layers[t + 1];
        let mut layer_values = vec![f64::INFINITY; layer.keys.len()];
        let mut layer_best = Vec::with_capacity(layer.keys.len());
        for (i, key) in layer.keys.iter().enumerate() {
            let mut best_v = f64::INFINITY;
            let mut best_a = None;
            for action in pomdp::available_moves_obs(sc, t as u32, &key.x, &key.c) {
                let (x, c) = step_xc(sc, &key.x, &key.c, &action);
                let tau = step_tau(sc, &key.tau, &action, &x);
                let flag_sum: f64 = tau
                    .iter()
                    .enumerate()
                    .map(|(j, &tj)| tabs[j][tj as usize])
                    .sum();
                let cost = entered_cost(sc, (t + 1) as u32, &x, &c, flag_sum);
                let succ = succ_layer.index[&DpKey { x, c, tau }];
                let v = cost + values[succ];
                if v < best_v {
                    best_v = v;
                    best_a = Some(action);
                }
            }
            layer_values[i] = best_v;
            layer_best.push(best_a.expect("every state has at least one action"));
        }
        values = layer_values;
        best[t] = layer_best;
    }
    let value = values[0];

    // Extract the schedule by following the recorded choices forward.
    let mut moves = Vec::with_capacity(horizon);
    let mut key = layers[0].keys[0].clone();
    let mut idx = 0usize;
    for (t, layer_best) in best.iter().enumerate() {
        let action = layer_best[idx].clone();
        let (x, c) = step_xc(sc, &key.x, &key.c, &action);
        let tau = step_tau(sc, &key.tau, &action, &x);
        key = DpKey { x, c, tau };
        idx = layers[t + 1].index[&key];
        moves.push(action);
    }

    let strategy = Strategy {
        moves,
        meta: StrategyMeta {
            scenario_hash: sc.hash_hex(),
            solver: SolverKind::Exact,
            g: None,
            value: Some(value),
        },
    };
    Ok(SynthResult {
        strategy,
        value,
        bound_gap: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ObsKey {
    x: Vec<PlaceId>,
    c: Vec<u32>,
}

/// Successor data of one action, hoisted out of the per-grid-point loop:
/// successor layer index, cleaned-room mask (`None` for `fin`) and the cost
/// of the entered observable state without the flag term.
struct PreparedAction {
    action: JointMove,
    succ: usize,
    cleaned: Option<Vec<bool>>,
    base_cost: f64,
}

fn prepare_actions(
    sc: &Scenario,
    t: u32,
    key: &ObsKey,
    succ_index: &HashMap<ObsKey, usize>,
) -> Vec<PreparedAction> {
    pomdp::available_moves_obs(sc, t, &key.x, &key.c)
        .into_iter()
        .map(|action| {
            let (x, c) = step_xc(sc, &key.x, &key.c, &action);
            let cleaned = match action {
                JointMove::Fin => None,
                JointMove::To(_) => {
                    let mut mask = vec![false; sc.n_rooms()];
                    for &p in &x {
                        if let Some(j) = sc.room_index(p) {
                            mask[j] = true;
                        }
                    }
                    Some(mask)
                }
            };
            let base_cost = entered_cost(sc, t + 1, &x, &c, 0.0);
            let succ = succ_index[&ObsKey { x, c }];
            PreparedAction {
                action,
                succ,
                cleaned,
                base_cost,
            }
        })
        .collect()
}

/// Per-coordinate linear interpolation of a value table over the product
/// grid `{0, 1/g, ..., 1}^m`. `scratch` holds the fractional dimensions and
/// is reused between calls.
fn interpolate(
    table: &[f64],
    p: &[f64],
    g: u32,
    strides: &[usize],
    scratch: &mut Vec<(usize, f64)>,
) -> f64 {
    let gf = g as f64;
    scratch.clear();
    let mut base = 0usize;
    for (j, &pj) in p.iter().enumerate() {
        let xj = pj * gf;
        let mut lo = xj.floor() as usize;
        let mut frac = xj - lo as f64;
        if lo >= g as usize {
            lo = g as usize;
            frac = 0.0;
        }
        base += lo * strides[j];
        if frac > 1e-12 {
            scratch.push((strides[j], frac));
        }
    }
    let mut acc = 0.0;
    for mask in 0..(1usize << scratch.len()) {
        let mut w = 1.0;
        let mut idx = base;
        for (bit, &(stride, frac)) in scratch.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                w *= frac;
                idx += stride;
            } else {
                w *= 1.0 - frac;
            }
        }
        acc += w * table[idx];
    }
    acc
}

/// Value iteration over quantised marginals with resolution `g`, followed by
/// a greedy forward rollout that tracks exact marginals but looks values up
/// by grid interpolation. `bound_gap` reports how far the interpolated value
/// estimate is from the exact cost of the returned schedule.
pub fn grid_synthesize(sc: &Scenario, g: u32) -> Result<SynthResult, SynthError> {
    grid_synthesize_with(sc, g, SolverLimits::default())
}

pub fn grid_synthesize_with(
    sc: &Scenario,
    g: u32,
    limits: SolverLimits,
) -> Result<SynthResult, SynthError> {
    if g == 0 {
        return Err(SynthError::InvalidGrid);
    }
    check_valid(sc)?;
    let horizon = sc.horizon_t as usize;
    let m = sc.n_rooms();
    let side = (g + 1) as usize;
    let grid_points = side
        .checked_pow(m as u32)
        .filter(|&n| n <= limits.max_states)
        .ok_or(SynthError::CapExceeded {
            states: usize::MAX,
            cap: limits.max_states,
        })?;
    let strides: Vec<usize> = (0..m).map(|j| side.pow(j as u32)).collect();
    // Grid coordinates of every flat index, in units of 1/g.
    let coords: Vec<Vec<u32>> = (0..grid_points)
        .map(|idx| (0..m).map(|j| ((idx / strides[j]) % side) as u32).collect())
        .collect();
    let gf = g as f64;

    // Forward pass over observable states only.
    let init = pomdp::initial_state(sc);
    let mut layers: Vec<Layer<ObsKey>> = Vec::with_capacity(horizon + 1);
    let mut first = Layer::new();
    first.insert(ObsKey {
        x: init.obs.x.clone(),
        c: init.obs.c.clone(),
    });
    layers.push(first);
    let mut total = grid_points;
    for t in 0..horizon {
        let mut next = Layer::new();
        for key in &layers[t].keys {
            for action in pomdp::available_moves_obs(sc, t as u32, &key.x, &key.c) {
                let (x, c) = step_xc(sc, &key.x, &key.c, &action);
                next.insert(ObsKey { x, c });
            }
        }
        total = total.saturating_add(next.keys.len().saturating_mul(grid_points));
        if total > limits.max_states {
            return Err(SynthError::CapExceeded {
                states: total,
                cap: limits.max_states,
            });
        }
        layers.push(next);
    }

    // Backward value iteration; `vals[t][obs][grid]` is the optimal
    // cost-to-go. All layers are kept for the rollout.
    let mut vals: Vec<Vec<Vec<f64>>> = Vec::with_capacity(horizon + 1);
    vals.resize_with(horizon + 1, Vec::new);
    vals[horizon] = layers[horizon]
        .keys
        .iter()
        .map(|_| vec![0.0; grid_points])
        .collect();
    let mut scratch: Vec<(usize, f64)> = Vec::with_capacity(m);
    let mut p_next = vec![0.0f64; m];

    for t in (0..horizon).rev() {
        let layer = &layers[t];
        let mut cur: Vec<Vec<f64>> = layer
            .keys
            .iter()
            .map(|_| vec![f64::INFINITY; grid_points])
            .collect();
        for (i, key) in layer.keys.iter().enumerate() {
            let prepared = prepare_actions(sc, t as u32, key, &layers[t + 1].index);
            for (gp, coord) in coords.iter().enumerate() {
                let mut best = f64::INFINITY;
                for pa in &prepared {
                    let mut flag_sum = 0.0;
                    match &pa.cleaned {
                        // `fin` freezes the belief, and the grid point is
                        // exact, so the lookup below degenerates to an
                        // exact table read.
                        None => {
                            for (j, &cj) in coord.iter().enumerate() {
                                p_next[j] = cj as f64 / gf;
                                flag_sum += p_next[j];
                            }
                        }
                        Some(mask) => {
                            for (j, &cj) in coord.iter().enumerate() {
                                let pj = cj as f64 / gf;
                                p_next[j] = marginal_update(pj, sc.rooms[j].pr, mask[j]);
                                flag_sum += p_next[j];
                            }
                        }
                    }
                    let v = pa.base_cost
                        + sc.a_bit as f64 * flag_sum
                        + interpolate(&vals[t + 1][pa.succ], &p_next, g, &strides, &mut scratch);
                    if v < best {
                        best = v;
                    }
                }
                cur[i][gp] = best;
            }
        }
        vals[t] = cur;
    }
    // The initial belief is the all-zero grid point, flat index 0.
    let interpolated_value = vals[0][0][0];

    // Greedy rollout with exact marginals and interpolated lookups.
    let mut moves = Vec::with_capacity(horizon);
    let mut key = layers[0].keys[0].clone();
    let mut p = vec![0.0f64; m];
    for t in 0..horizon {
        let prepared = prepare_actions(sc, t as u32, &key, &layers[t + 1].index);
        let mut best_v = f64::INFINITY;
        let mut best: Option<(&PreparedAction, Vec<f64>)> = None;
        for pa in &prepared {
            let mut flag_sum = 0.0;
            let p_new: Vec<f64> = match &pa.cleaned {
                None => {
                    flag_sum = p.iter().sum();
                    p.clone()
                }
                Some(mask) => p
                    .iter()
                    .enumerate()
                    .map(|(j, &pj)| {
                        let v = marginal_update(pj, sc.rooms[j].pr, mask[j]);
                        flag_sum += v;
                        v
                    })
                    .collect(),
            };
            let v = pa.base_cost
                + sc.a_bit as f64 * flag_sum
                + interpolate(&vals[t + 1][pa.succ], &p_new, g, &strides, &mut scratch);
            if v < best_v {
                best_v = v;
                best = Some((pa, p_new));
            }
        }
        let (pa, p_new) = best.expect("every state has at least one action");
        moves.push(pa.action.clone());
        key = layers[t + 1].keys[pa.succ].clone();
        p = p_new;
    }

    let eval = evaluate_schedule(sc, &moves)?;
    let value = eval.total();
    let strategy = Strategy {
        moves,
        meta: StrategyMeta {
            scenario_hash: sc.hash_hex(),
            solver: SolverKind::Grid,
            g: Some(g),
            value: Some(value),
        },
    };
    Ok(SynthResult {
        strategy,
        value,
        bound_gap: (interpolated_value - value).abs(),
    })
}
