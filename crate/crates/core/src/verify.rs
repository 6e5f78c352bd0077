//! Requirement checks on the induced trace, starting from the worst state of
//! a declared recurrence area.
//!
//! A recurrence area is given by per-robot charge thresholds and per-room
//! counter thresholds; its worst state has every value exactly at the
//! threshold and all robots on their start places. The six requirements:
//!
//! * `FR` every robot is back on its start place at `t = T`,
//! * `wR` every final charge is at least its threshold,
//! * `wC` every final counter is at most its threshold,
//! * `BC` no battery is ever empty,
//! * `CT` no counter ever reaches its room's contamination threshold,
//! * `UT` no robot occupies a room during one of its utilisation slots.
//!
//! All six passing from the worst state certifies them for the whole area:
//! raising a charge or lowering a counter can only improve every clause,
//! since the charge and counter updates are monotone.

use crate::induced::{induce, CounterState, InducedError, Trace};
use crate::scenario::{PlaceId, Scenario};
use crate::synth::Strategy;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// A recurrence area: thresholds per robot and per room. Start positions
/// may be given explicitly; they default to the robots' start places.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    /// Per-robot charge thresholds.
    pub charge: Vec<u32>,
    /// Per-room counter thresholds.
    pub contamination: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<Vec<PlaceId>>,
}

impl OmegaSpec {
    /// The scenario's own thresholds (`omega_chg_thres`, `omega_cont_thres`).
    pub fn from_scenario(sc: &Scenario) -> OmegaSpec {
        OmegaSpec {
            charge: sc.robots.iter().map(|r| r.omega_chg_thres).collect(),
            contamination: sc.rooms.iter().map(|r| r.omega_cont_thres).collect(),
            starts: None,
        }
    }

    pub fn starts(&self, sc: &Scenario) -> Vec<PlaceId> {
        self.starts
            .clone()
            .unwrap_or_else(|| sc.robots.iter().map(|r| r.start).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReqId {
    Fr,
    OmegaR,
    OmegaC,
    Bc,
    Ct,
    Ut,
}

pub const ALL_REQUIREMENTS: [ReqId; 6] = [
    ReqId::Fr,
    ReqId::OmegaR,
    ReqId::OmegaC,
    ReqId::Bc,
    ReqId::Ct,
    ReqId::Ut,
];

impl ReqId {
    pub fn code(&self) -> &'static str {
        match self {
            ReqId::Fr => "FR",
            ReqId::OmegaR => "wR",
            ReqId::OmegaC => "wC",
            ReqId::Bc => "BC",
            ReqId::Ct => "CT",
            ReqId::Ut => "UT",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ReqId::Fr => "robots finally return to their start places",
            ReqId::OmegaR => "final charges meet the area thresholds",
            ReqId::OmegaC => "final counters meet the area thresholds",
            ReqId::Bc => "no battery is ever empty",
            ReqId::Ct => "no counter reaches its contamination threshold",
            ReqId::Ut => "no robot occupies a utilised room",
        }
    }
}

impl fmt::Display for ReqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: ReqId,
    pub passed: bool,
    pub first_violation_t: Option<u32>,
    pub witness: Option<String>,
}

/// Overall verdict. `Incorrect` if any of FR, BC, CT, UT fails; `Recurrent`
/// if all six requirements pass; `CorrectNonRecurrent` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Classification {
    Incorrect,
    CorrectNonRecurrent,
    Recurrent,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Incorrect => write!(f, "incorrect"),
            Classification::CorrectNonRecurrent => write!(f, "correct-nonrecurrent"),
            Classification::Recurrent => write!(f, "recurrent"),
        }
    }
}

impl std::str::FromStr for Classification {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "incorrect" => Ok(Classification::Incorrect),
            "correct-nonrecurrent" => Ok(Classification::CorrectNonRecurrent),
            "recurrent" => Ok(Classification::Recurrent),
            other => Err(format!("unknown classification {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub classification: Classification,
}

impl VerificationReport {
    pub fn check(&self, id: ReqId) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.id == id)
            .expect("report carries all six requirements")
    }

    /// Machine form: `requirement,pass,first_violation_t,witness`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("requirement,pass,first_violation_t,witness\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.id.code(),
                c.passed,
                c.first_violation_t.map_or(String::new(), |t| t.to_string()),
                c.witness.clone().unwrap_or_default()
            ));
        }
        out
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<4} {:<6} {:<8} requirement", "id", "pass", "first t")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<4} {:<6} {:<8} {}{}",
                c.id.code(),
                if c.passed { "pass" } else { "FAIL" },
                c.first_violation_t
                    .map_or("-".to_string(), |t| t.to_string()),
                c.id.description(),
                c.witness
                    .as_ref()
                    .map_or(String::new(), |w| format!(" ({w})")),
            )?;
        }
        write!(f, "classification: {}", self.classification)
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Induced(#[from] InducedError),
    #[error("trace/omega mismatch: {0}")]
    Mismatch(String),
}

/// The worst state of the area: every robot on its start with the charge
/// exactly at its threshold, every counter exactly at its threshold, `t=0`.
pub fn worst_omega_state(sc: &Scenario, omega: &OmegaSpec) -> CounterState {
    CounterState {
        t: 0,
        x: omega.starts(sc),
        c: omega.charge.clone(),
        d: omega.contamination.clone(),
    }
}

/// Evaluates all six requirements on a trace that starts at the worst state
/// of `omega`.
pub fn check_requirements(
    sc: &Scenario,
    trace: &Trace,
    omega: &OmegaSpec,
) -> Result<VerificationReport, VerifyError> {
    let k = sc.n_robots();
    let m = sc.n_rooms();
    if omega.charge.len() != k || omega.contamination.len() != m {
        return Err(VerifyError::Mismatch(format!(
            "omega has {} charge / {} counter thresholds, scenario has {k} robots / {m} rooms",
            omega.charge.len(),
            omega.contamination.len()
        )));
    }
    if trace.states.len() != sc.horizon_t as usize + 1 {
        return Err(VerifyError::Mismatch(format!(
            "trace has {} states, expected T+1 = {}",
            trace.states.len(),
            sc.horizon_t + 1
        )));
    }
    let start = &trace.states[0];
    if start.t != 0 || start.x.len() != k || start.c.len() != k || start.d.len() != m {
        return Err(VerifyError::Mismatch(
            "trace does not start at a time-zero state of matching shape".into(),
        ));
    }

    let last = trace.states.last().unwrap();
    let mut checks = Vec::with_capacity(6);

    // FR: final return.
    let fr = (0..k).find(|&i| last.x[i] != sc.robots[i].start);
    checks.push(match fr {
        None => pass(ReqId::Fr),
        Some(i) => fail(
            ReqId::Fr,
            sc.horizon_t,
            format!(
                "robot {i} ends at {} instead of {}",
                sc.places[last.x[i]].name, sc.places[sc.robots[i].start].name
            ),
        ),
    });

    // wR: final charge.
    let wr = (0..k).find(|&i| last.c[i] < omega.charge[i]);
    checks.push(match wr {
        None => pass(ReqId::OmegaR),
        Some(i) => fail(
            ReqId::OmegaR,
            sc.horizon_t,
            format!(
                "robot {i} ends with charge {} < {}",
                last.c[i], omega.charge[i]
            ),
        ),
    });

    // wC: final contamination.
    let wc = (0..m).find(|&j| last.d[j] > omega.contamination[j]);
    checks.push(match wc {
        None => pass(ReqId::OmegaC),
        Some(j) => fail(
            ReqId::OmegaC,
            sc.horizon_t,
            format!(
                "room {j} ends with counter {} > {}",
                last.d[j], omega.contamination[j]
            ),
        ),
    });

    // BC: battery never empty.
    let mut bc = pass(ReqId::Bc);
    'bc: for s in &trace.states {
        for i in 0..k {
            if s.c[i] == 0 {
                bc = fail(ReqId::Bc, s.t, format!("robot {i} has charge 0"));
                break 'bc;
            }
        }
    }
    checks.push(bc);

    // CT: counters stay strictly below the thresholds.
    let mut ct = pass(ReqId::Ct);
    'ct: for s in &trace.states {
        for j in 0..m {
            if s.d[j] >= sc.rooms[j].threshold {
                ct = fail(
                    ReqId::Ct,
                    s.t,
                    format!(
                        "room {j} counter {} reaches threshold {}",
                        s.d[j], sc.rooms[j].threshold
                    ),
                );
                break 'ct;
            }
        }
    }
    checks.push(ct);

    // UT: no robot in a utilised room.
    let mut ut = pass(ReqId::Ut);
    'ut: for s in &trace.states {
        for i in 0..k {
            if let Some(j) = sc.room_index(s.x[i]) {
                if sc.rooms[j].utilised_at(s.t) {
                    ut = fail(
                        ReqId::Ut,
                        s.t,
                        format!("robot {i} occupies room {j} during a utilisation slot"),
                    );
                    break 'ut;
                }
            }
        }
    }
    checks.push(ut);

    let core_ok = [ReqId::Fr, ReqId::Bc, ReqId::Ct, ReqId::Ut]
        .iter()
        .all(|&id| checks.iter().any(|c| c.id == id && c.passed));
    let all_ok = checks.iter().all(|c| c.passed);
    let classification = if !core_ok {
        Classification::Incorrect
    } else if all_ok {
        Classification::Recurrent
    } else {
        Classification::CorrectNonRecurrent
    };
    Ok(VerificationReport {
        checks,
        classification,
    })
}

fn pass(id: ReqId) -> CheckResult {
    CheckResult {
        id,
        passed: true,
        first_violation_t: None,
        witness: None,
    }
}

fn fail(id: ReqId, t: u32, witness: String) -> CheckResult {
    CheckResult {
        id,
        passed: false,
        first_violation_t: Some(t),
        witness: Some(witness),
    }
}

/// Full recurrence check: build the worst state of `omega`, induce the trace
/// under the strategy and evaluate the requirements. A recurrent verdict
/// certifies the bounded-recurrence property for every state of the area.
pub fn check_recurrence(
    sc: &Scenario,
    strategy: &Strategy,
    omega: &OmegaSpec,
) -> Result<VerificationReport, VerifyError> {
    let s0 = worst_omega_state(sc, omega);
    let trace = induce(sc, strategy, s0)?;
    check_requirements(sc, &trace, omega)
}
