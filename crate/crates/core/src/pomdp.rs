//! Compilation of a [`Scenario`] into an explicit reward-enhanced POMDP.
//!
//! A state is `(t, x, c, d)`: the time step, the robot positions, the
//! battery charges and the per-room contamination flags. Only `(t, x, c)` is
//! observable; the flags are hidden and evolve stochastically. Each step one
//! joint action moves every robot simultaneously to an adjacent (or the
//! same) place; robots never share a place. Moving into a room cleans it,
//! which resets its flag. Among the rooms left uncleaned at most one gets
//! newly contaminated per step, room `j` with probability `pr_j`.
//!
//! Three reward structures are attached: `penalties` (battery death, missed
//! final return or charge, set contamination flags), `energy` (distance from
//! full charge) and `utilisation` (occupying a room during one of its
//! utilisation slots). Action rewards are identically zero. A transition
//! accrues the cost of the state it enters; the state entered at `t = T`
//! accrues its penalty exactly once.

use crate::scenario::{PlaceId, Scenario};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

/// Observable state fragment: time, positions and charges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObsState {
    pub t: u32,
    pub x: Vec<PlaceId>,
    pub c: Vec<u32>,
}

/// Full state: observable part plus the hidden contamination flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub obs: ObsState,
    pub d: Vec<bool>,
}

/// A joint action: one target place per robot, or the distinguished `fin`
/// action that is available exactly in error or final states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointMove {
    To(Vec<PlaceId>),
    Fin,
}

impl fmt::Display for JointMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JointMove::Fin => write!(f, "fin"),
            JointMove::To(targets) => {
                write!(f, "at")?;
                for (i, p) in targets.iter().enumerate() {
                    if i > 0 {
                        write!(f, "_")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Per-state cost under the three reward structures. Action rewards are
/// fixed to zero, so the triple fully determines the reward of a transition
/// into the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostTriple {
    pub penalty: u64,
    pub energy: u64,
    pub utilisation: u64,
}

impl CostTriple {
    pub fn total(&self) -> u64 {
        self.penalty + self.energy + self.utilisation
    }
}

#[derive(Debug, Error)]
pub enum PomdpError {
    #[error("action {action} unavailable in state at t={t}")]
    ActionUnavailable { action: String, t: u32 },
    #[error("state space exceeds the cap: {count} states explored, cap {cap}")]
    TooManyStates { count: usize, cap: usize },
    #[error("scenario failed validation:\n{0}")]
    InvalidScenario(crate::scenario::ValidationReport),
}

/// The initial state: every robot on its start charger with charge
/// `omega_chg_thres`, all flags clear, `t = 0`.
pub fn initial_state(sc: &Scenario) -> State {
    State {
        obs: ObsState {
            t: 0,
            x: sc.robots.iter().map(|r| r.start).collect(),
            c: sc.robots.iter().map(|r| r.omega_chg_thres).collect(),
        },
        d: vec![false; sc.n_rooms()],
    }
}

/// True iff the run is over: the horizon is reached or some robot's battery
/// is empty.
pub fn error_or_final(sc: &Scenario, s: &State) -> bool {
    obs_error_or_final(sc, s.obs.t, &s.obs.c)
}

pub fn obs_error_or_final(sc: &Scenario, t: u32, c: &[u32]) -> bool {
    t >= sc.horizon_t || c.contains(&0)
}

/// Enumerates the joint moves available from positions `x`: per-robot
/// targets adjacent to (or equal to) the current place, pairwise distinct,
/// and without position exchanges when `allow_swaps` is off. The result is
/// sorted lexicographically by target vector.
fn joint_moves(sc: &Scenario, x: &[PlaceId]) -> Vec<JointMove> {
    let k = x.len();
    let mut out = Vec::new();
    let mut targets = vec![0usize; k];

    fn rec(
        sc: &Scenario,
        x: &[PlaceId],
        targets: &mut Vec<PlaceId>,
        depth: usize,
        out: &mut Vec<JointMove>,
    ) {
        if depth == x.len() {
            out.push(JointMove::To(targets.clone()));
            return;
        }
        for &q in sc.neighbors(x[depth]) {
            if targets[..depth].contains(&q) {
                continue;
            }
            if !sc.allow_swaps {
                // Reject exchanges: robot `depth` stepping onto x[i] while
                // robot i steps onto x[depth].
                let swap = (0..depth).any(|i| targets[i] == x[depth] && q == x[i]);
                if swap {
                    continue;
                }
            }
            targets.push(q);
            rec(sc, x, targets, depth + 1, out);
            targets.pop();
        }
    }

    targets.clear();
    rec(sc, x, &mut targets, 0, &mut out);
    out
}

/// Actions available in `s`: exactly `{fin}` in error or final states, all
/// admissible joint moves otherwise.
pub fn available_actions(sc: &Scenario, s: &State) -> Vec<JointMove> {
    available_moves_obs(sc, s.obs.t, &s.obs.x, &s.obs.c)
}

pub fn available_moves_obs(sc: &Scenario, t: u32, x: &[PlaceId], c: &[u32]) -> Vec<JointMove> {
    if obs_error_or_final(sc, t, c) {
        vec![JointMove::Fin]
    } else {
        joint_moves(sc, x)
    }
}

/// Deterministic observable update: time advances (saturating at `T`); for a
/// move each robot lands on its target and charges on chargers or
/// discharges in rooms; `fin` freezes positions and charges.
pub fn step_observable(sc: &Scenario, o: &ObsState, a: &JointMove) -> Result<ObsState, PomdpError> {
    if !available_moves_obs(sc, o.t, &o.x, &o.c).contains(a) {
        return Err(PomdpError::ActionUnavailable {
            action: a.to_string(),
            t: o.t,
        });
    }
    Ok(step_observable_unchecked(sc, o, a))
}

pub(crate) fn step_observable_unchecked(sc: &Scenario, o: &ObsState, a: &JointMove) -> ObsState {
    let t = (o.t + 1).min(sc.horizon_t);
    match a {
        JointMove::Fin => ObsState {
            t,
            x: o.x.clone(),
            c: o.c.clone(),
        },
        JointMove::To(targets) => {
            let c = targets
                .iter()
                .zip(&o.c)
                .zip(&sc.robots)
                .map(|((&tgt, &ci), r)| {
                    if sc.is_charger(tgt) {
                        (ci + r.charge_rate).min(r.max_charge)
                    } else {
                        ci.saturating_sub(r.discharge_rate)
                    }
                })
                .collect();
            ObsState {
                t,
                x: targets.clone(),
                c,
            }
        }
    }
}

/// Room indices occupied by a robot after the move; these rooms are cleaned
/// this step.
pub fn cleaned_rooms(sc: &Scenario, x_after: &[PlaceId]) -> Vec<usize> {
    let mut rooms: Vec<usize> = x_after.iter().filter_map(|&p| sc.room_index(p)).collect();
    rooms.sort_unstable();
    rooms
}

/// One-step distribution over flag vectors. Cleaned rooms are reset in
/// every outcome; among the others at most one room is newly contaminated,
/// room `j` with probability `pr_j`, and with the remaining probability no
/// flag is newly set. Duplicate outcomes are merged.
pub fn contamination_kernel(sc: &Scenario, d: &[bool], cleaned: &[usize]) -> Vec<(Vec<bool>, f64)> {
    let mut base = d.to_vec();
    for &j in cleaned {
        base[j] = false;
    }
    let mut dist: BTreeMap<Vec<bool>, f64> = BTreeMap::new();
    let mut event_sum = 0.0;
    for (j, room) in sc.rooms.iter().enumerate() {
        if cleaned.contains(&j) || room.pr == 0.0 {
            continue;
        }
        event_sum += room.pr;
        let mut outcome = base.clone();
        outcome[j] = true;
        *dist.entry(outcome).or_insert(0.0) += room.pr;
    }
    let remaining = (1.0 - event_sum).max(0.0);
    if remaining > 0.0 || dist.is_empty() {
        *dist.entry(base).or_insert(0.0) += remaining;
    }
    dist.into_iter().collect()
}

/// Cost of the observable part of an entered state, leaving out the
/// contamination-flag penalty (the caller adds `a_bit` per set flag, or the
/// expected count when working with belief marginals).
pub fn obs_cost(sc: &Scenario, t: u32, x: &[PlaceId], c: &[u32]) -> CostTriple {
    let mut penalty = 0u64;
    let mut energy = 0u64;
    let mut utilisation = 0u64;
    for (i, robot) in sc.robots.iter().enumerate() {
        if c[i] == 0 {
            penalty += sc.a_lot;
        }
        if t == sc.horizon_t && (x[i] != robot.start || c[i] < robot.omega_chg_thres) {
            penalty += sc.a_lot;
        }
        if t < sc.horizon_t {
            energy += u64::from(robot.max_charge - c[i]);
        }
        if let Some(j) = sc.room_index(x[i]) {
            if sc.rooms[j].utilised_at(t) {
                utilisation += sc.a_lot;
            }
        }
    }
    CostTriple {
        penalty,
        energy,
        utilisation,
    }
}

/// Cost triple of a state that a transition enters.
pub fn step_cost(sc: &Scenario, s_next: &State) -> CostTriple {
    let mut cost = obs_cost(sc, s_next.obs.t, &s_next.obs.x, &s_next.obs.c);
    cost.penalty += sc.a_bit * s_next.d.iter().filter(|&&f| f).count() as u64;
    cost
}

/// One available action of a state with its successor distribution as
/// `(state id, probability)` branches.
pub type ActionRow = (JointMove, Vec<(usize, f64)>);

/// Explicitly built model: reachable states, per-state action branches and
/// the cost table. Immutable and shareable read-only.
#[derive(Debug)]
pub struct Pomdp {
    scenario: Scenario,
    states: Vec<State>,
    initial: usize,
    /// Per state, the available actions with their successor distributions.
    transitions: Vec<Vec<ActionRow>>,
    costs: Vec<CostTriple>,
}

pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Builds the explicit model by breadth-first exploration from the initial
/// state. Fails if the scenario is invalid or the reachable state count
/// exceeds `DEFAULT_STATE_CAP`.
pub fn build_pomdp(sc: &Scenario) -> Result<Pomdp, PomdpError> {
    build_pomdp_capped(sc, DEFAULT_STATE_CAP)
}

pub fn build_pomdp_capped(sc: &Scenario, cap: usize) -> Result<Pomdp, PomdpError> {
    let report = sc.validate();
    if !report.is_empty() {
        return Err(PomdpError::InvalidScenario(report));
    }

    let mut states: Vec<State> = Vec::new();
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut transitions: Vec<Vec<ActionRow>> = Vec::new();
    let mut queue = VecDeque::new();

    let init = initial_state(sc);
    index.insert(init.clone(), 0);
    states.push(init);
    transitions.push(Vec::new());
    queue.push_back(0usize);

    while let Some(sid) = queue.pop_front() {
        let state = states[sid].clone();
        let actions = available_actions(sc, &state);
        let mut rows = Vec::with_capacity(actions.len());
        for action in actions {
            let obs = step_observable_unchecked(sc, &state.obs, &action);
            let flag_dist = match &action {
                // `fin` does not touch the contamination model.
                JointMove::Fin => vec![(state.d.clone(), 1.0)],
                JointMove::To(targets) => {
                    let cleaned = cleaned_rooms(sc, targets);
                    contamination_kernel(sc, &state.d, &cleaned)
                }
            };
            let mut row = Vec::with_capacity(flag_dist.len());
            for (d, p) in flag_dist {
                let succ = State {
                    obs: obs.clone(),
                    d,
                };
                let next_id = match index.get(&succ) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        if id >= cap {
                            return Err(PomdpError::TooManyStates { count: id + 1, cap });
                        }
                        index.insert(succ.clone(), id);
                        states.push(succ);
                        transitions.push(Vec::new());
                        queue.push_back(id);
                        id
                    }
                };
                row.push((next_id, p));
            }
            rows.push((action, row));
        }
        transitions[sid] = rows;
    }

    let costs = states.iter().map(|s| step_cost(sc, s)).collect();
    Ok(Pomdp {
        scenario: sc.clone(),
        states,
        initial: 0,
        transitions,
        costs,
    })
}

impl Pomdp {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Number of probabilistic branches over all state-action pairs.
    pub fn n_transitions(&self) -> usize {
        self.transitions
            .iter()
            .map(|rows| rows.iter().map(|(_, row)| row.len()).sum::<usize>())
            .sum()
    }

    /// Number of state-action pairs.
    pub fn n_choices(&self) -> usize {
        self.transitions.iter().map(|rows| rows.len()).sum()
    }

    pub fn actions(&self, sid: usize) -> &[ActionRow] {
        &self.transitions[sid]
    }

    pub fn cost(&self, sid: usize) -> CostTriple {
        self.costs[sid]
    }

    /// Observation projection: drops the contamination flags.
    pub fn obs(&self, sid: usize) -> &ObsState {
        &self.states[sid].obs
    }

    /// Plain-text dump of the explicit model for cross-checking against
    /// external tools: a state table, a reward table and one line per
    /// transition branch (`src action prob dst`).
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.scenario.hash_hex());
        let _ = writeln!(out, "states {}", self.n_states());
        let _ = writeln!(out, "choices {}", self.n_choices());
        let _ = writeln!(out, "transitions {}", self.n_transitions());
        let _ = writeln!(out, "initial {}", self.initial);
        let _ = writeln!(out, "STATES id t x.. c.. d..");
        for (i, s) in self.states.iter().enumerate() {
            let x: Vec<String> = s.obs.x.iter().map(|p| p.to_string()).collect();
            let c: Vec<String> = s.obs.c.iter().map(|v| v.to_string()).collect();
            let d: String = s.d.iter().map(|&f| if f { '1' } else { '0' }).collect();
            let _ = writeln!(
                out,
                "{i} {} {} {} {}",
                s.obs.t,
                x.join(","),
                c.join(","),
                if d.is_empty() { "-".to_string() } else { d }
            );
        }
        let _ = writeln!(out, "REWARDS id penalty energy utilisation");
        for (i, cost) in self.costs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i} {} {} {}",
                cost.penalty, cost.energy, cost.utilisation
            );
        }
        let _ = writeln!(out, "TRANSITIONS src action prob dst");
        for (src, rows) in self.transitions.iter().enumerate() {
            for (action, row) in rows {
                for (dst, p) in row {
                    let _ = writeln!(out, "{src} {action} {p} {dst}");
                }
            }
        }
        out
    }
}
