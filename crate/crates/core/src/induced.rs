//! Integer-counter contamination model and the deterministic model induced
//! by applying a schedule.
//!
//! Where the synthesis model tracks a boolean flag per room, the counter
//! model tracks the accumulated contamination directly: it grows by the
//! room's rate each uncleaned step and saturates at the threshold. Applying
//! a deterministic schedule leaves a single execution path, so the induced
//! model is never materialised as a transition system; only its trace is
//! built, and the graph it stands for is that path plus the absorbing `fin`
//! self-loop at the end.

use crate::pomdp::{self, JointMove, ObsState};
use crate::scenario::{PlaceId, Scenario};
use crate::synth::Strategy;
use thiserror::Error;

/// State of the counter model: observable part plus per-room contamination
/// counters in `[0, threshold_j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CounterState {
    pub t: u32,
    pub x: Vec<PlaceId>,
    pub c: Vec<u32>,
    pub d: Vec<u32>,
}

/// The unique execution path of a schedule: `T + 1` states and the `T`
/// actions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub states: Vec<CounterState>,
    pub actions: Vec<JointMove>,
}

#[derive(Debug, Error)]
pub enum InducedError {
    #[error("schedule action {action} unavailable at step {t}")]
    UnavailableAction { t: u32, action: String },
    #[error("initial state must have t = 0, got t = {0}")]
    BadInitialTime(u32),
    #[error("schedule has {got} steps but the horizon is {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// Deterministic counter-model step. The observable part follows the same
/// rules as the synthesis model; a cleaned room's counter resets to zero,
/// every other counter grows by its rate up to the threshold. `fin` leaves
/// the counters untouched.
pub fn counter_step(
    sc: &Scenario,
    s: &CounterState,
    a: &JointMove,
) -> Result<CounterState, InducedError> {
    if !pomdp::available_moves_obs(sc, s.t, &s.x, &s.c).contains(a) {
        return Err(InducedError::UnavailableAction {
            t: s.t,
            action: a.to_string(),
        });
    }
    let obs = ObsState {
        t: s.t,
        x: s.x.clone(),
        c: s.c.clone(),
    };
    let next = pomdp::step_observable_unchecked(sc, &obs, a);
    let d = match a {
        JointMove::Fin => s.d.clone(),
        JointMove::To(targets) => {
            let cleaned = pomdp::cleaned_rooms(sc, targets);
            s.d.iter()
                .zip(&sc.rooms)
                .enumerate()
                .map(|(j, (&dj, room))| {
                    if cleaned.contains(&j) {
                        0
                    } else {
                        (dj + room.contamination_rate).min(room.threshold)
                    }
                })
                .collect()
        }
    };
    Ok(CounterState {
        t: next.t,
        x: next.x,
        c: next.c,
        d,
    })
}

/// Applies the schedule from `s0` and returns the unique length-`T` trace.
/// Fails if an action is unavailable at some step, which signals a mismatch
/// between the schedule and the scenario or initial state.
pub fn induce(sc: &Scenario, strategy: &Strategy, s0: CounterState) -> Result<Trace, InducedError> {
    if s0.t != 0 {
        return Err(InducedError::BadInitialTime(s0.t));
    }
    let horizon = sc.horizon_t as usize;
    if strategy.moves.len() != horizon {
        return Err(InducedError::WrongLength {
            expected: horizon,
            got: strategy.moves.len(),
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(s0);
    for action in &strategy.moves {
        let next = counter_step(sc, states.last().unwrap(), action)?;
        states.push(next);
    }
    Ok(Trace {
        states,
        actions: strategy.moves.clone(),
    })
}

impl Trace {
    /// Node and edge counts of the induced model as a graph: the single path
    /// plus the absorbing self-loop, so both counts equal `T + 1`.
    pub fn graph_size(&self) -> (usize, usize) {
        let states = self.states.len();
        let transitions = (states - 1) + 1;
        (states, transitions)
    }

    /// CSV dump with one row per time step: positions by place name, then
    /// charges, then counters.
    pub fn to_csv(&self, sc: &Scenario) -> String {
        let mut out = String::from("t");
        for i in 0..sc.n_robots() {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 0..sc.n_robots() {
            out.push_str(&format!(",c_{i}"));
        }
        for j in 0..sc.n_rooms() {
            out.push_str(&format!(",d_{j}"));
        }
        out.push('\n');
        for s in &self.states {
            out.push_str(&s.t.to_string());
            for &p in &s.x {
                out.push(',');
                out.push_str(&sc.places[p].name);
            }
            for &c in &s.c {
                out.push_str(&format!(",{c}"));
            }
            for &d in &s.d {
                out.push_str(&format!(",{d}"));
            }
            out.push('\n');
        }
        out
    }
}
