//! Problem-instance model: the room graph, robots, contamination parameters,
//! utilisation plan, horizon and penalty weights that all later stages
//! consume.
//!
//! Instances are stored as JSON documents with the following top-level keys
//! (unknown keys are rejected):
//!
//! ```json
//! {
//!   "places":  [ {"name": "C1", "kind": "charger"}, {"name": "R1", "kind": "room"} ],
//!   "edges":   [ [0, 1] ],
//!   "rooms":   [ {"pr": 0.1, "threshold": 12, "contamination_rate": 1,
//!                 "omega_cont_thres": 6, "util": [[8, 10]]} ],
//!   "robots":  [ {"start": 0, "max_charge": 8, "charge_rate": 8,
//!                 "discharge_rate": 1, "omega_chg_thres": 8} ],
//!   "horizon_T": 24,
//!   "a_lot": 10000000,
//!   "a_bit": 10000,
//!   "allow_swaps": true
//! }
//! ```
//!
//! The `rooms` array is aligned with the places of kind `room`, in place
//! order. Utilisation slots are half-open intervals `[a, b)` in model time
//! units. `a_lot`, `a_bit` and `allow_swaps` are optional and default to
//! 10000000, 10000 and `true`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

/// Index into [`Scenario::places`].
pub type PlaceId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Room,
    Charger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Place {
    pub name: String,
    pub kind: PlaceKind,
}

/// Per-room contamination and utilisation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomParams {
    /// Probability per step that the room's contamination flag gets set.
    pub pr: f64,
    /// Contamination cap in steps; the counter model saturates here.
    pub threshold: u32,
    /// Counter increment per step while the room is not being cleaned.
    pub contamination_rate: u32,
    /// Recurrence-area bound on the contamination counter.
    pub omega_cont_thres: u32,
    /// Half-open utilisation intervals `[a, b)`; no robot may occupy the
    /// room at any `t` inside a slot.
    #[serde(default)]
    pub util: Vec<(u32, u32)>,
}

impl RoomParams {
    /// True iff the room is in use at time `t`.
    pub fn utilised_at(&self, t: u32) -> bool {
        self.util.iter().any(|&(a, b)| a <= t && t < b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Resting position; must be a charger. The initial charge equals
    /// `omega_chg_thres`.
    pub start: PlaceId,
    pub max_charge: u32,
    pub charge_rate: u32,
    pub discharge_rate: u32,
    /// Recurrence-area bound on the battery charge.
    pub omega_chg_thres: u32,
}

fn default_a_lot() -> u64 {
    10_000_000
}

fn default_a_bit() -> u64 {
    10_000
}

fn default_allow_swaps() -> bool {
    true
}

/// Raw file form of a scenario; kept separate from [`Scenario`] so derived
/// lookup tables never appear in the serialised document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    places: Vec<Place>,
    edges: Vec<(PlaceId, PlaceId)>,
    rooms: Vec<RoomParams>,
    robots: Vec<RobotParams>,
    #[serde(rename = "horizon_T")]
    horizon_t: u32,
    #[serde(default = "default_a_lot")]
    a_lot: u64,
    #[serde(default = "default_a_bit")]
    a_bit: u64,
    #[serde(default = "default_allow_swaps")]
    allow_swaps: bool,
}

/// A full problem instance. Immutable after construction and safe to share
/// read-only across parallel workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub places: Vec<Place>,
    /// Undirected edges, normalised to `(min, max)` and deduplicated.
    pub edges: Vec<(PlaceId, PlaceId)>,
    /// Aligned with the places of kind `room`, in place order.
    pub rooms: Vec<RoomParams>,
    pub robots: Vec<RobotParams>,
    pub horizon_t: u32,
    pub a_lot: u64,
    pub a_bit: u64,
    pub allow_swaps: bool,
    /// Sorted neighbour lists including the place itself.
    adjacency: Vec<Vec<PlaceId>>,
    /// Room index of each place, `None` for chargers.
    room_of_place: Vec<Option<usize>>,
    /// Place id of each room.
    place_of_room: Vec<PlaceId>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rooms array has {got} entries but the layout has {expected} room places")]
    RoomCount { expected: usize, got: usize },
    #[error("invalid scenario:\n{0}")]
    Invalid(ValidationReport),
}

/// One violated invariant, reported with the offending field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Outcome of [`Scenario::validate`]; empty iff every invariant holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "fin"
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl Scenario {
    /// Parses and validates a scenario document. Fails on malformed JSON,
    /// unknown keys, missing fields, a misaligned rooms array, or any
    /// violated invariant.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let sc = Scenario::parse_unvalidated(text)?;
        let report = sc.validate();
        if report.is_empty() {
            Ok(sc)
        } else {
            Err(ScenarioError::Invalid(report))
        }
    }

    /// Parses the document shape without checking invariants, so that
    /// [`Scenario::validate`] can list every violation.
    pub fn parse_unvalidated(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Scenario::from_file(file)
    }

    /// Builds a scenario from its parts, checking only that the rooms array
    /// is aligned with the room places. Run [`Scenario::validate`] for the
    /// full invariant check.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        places: Vec<Place>,
        edges: Vec<(PlaceId, PlaceId)>,
        rooms: Vec<RoomParams>,
        robots: Vec<RobotParams>,
        horizon_t: u32,
        a_lot: u64,
        a_bit: u64,
        allow_swaps: bool,
    ) -> Result<Scenario, ScenarioError> {
        Scenario::from_file(ScenarioFile {
            places,
            edges,
            rooms,
            robots,
            horizon_t,
            a_lot,
            a_bit,
            allow_swaps,
        })
    }

    fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let n = file.places.len();
        let room_places = file
            .places
            .iter()
            .filter(|p| p.kind == PlaceKind::Room)
            .count();
        if room_places != file.rooms.len() {
            return Err(ScenarioError::RoomCount {
                expected: room_places,
                got: file.rooms.len(),
            });
        }

        let mut edges: Vec<(PlaceId, PlaceId)> = file
            .edges
            .iter()
            .map(|&(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut adjacency: Vec<Vec<PlaceId>> = (0..n).map(|p| vec![p]).collect();
        for &(a, b) in &edges {
            if a < n && b < n && a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }

        let mut room_of_place = vec![None; n];
        let mut place_of_room = Vec::with_capacity(file.rooms.len());
        for (p, place) in file.places.iter().enumerate() {
            if place.kind == PlaceKind::Room {
                room_of_place[p] = Some(place_of_room.len());
                place_of_room.push(p);
            }
        }

        Ok(Scenario {
            places: file.places,
            edges,
            rooms: file.rooms,
            robots: file.robots,
            horizon_t: file.horizon_t,
            a_lot: file.a_lot,
            a_bit: file.a_bit,
            allow_swaps: file.allow_swaps,
            adjacency,
            room_of_place,
            place_of_room,
        })
    }

    /// Serialises back to the document form; `parse` of the result is
    /// field-equal to `self`.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            places: self.places.clone(),
            edges: self.edges.clone(),
            rooms: self.rooms.clone(),
            robots: self.robots.clone(),
            horizon_t: self.horizon_t,
            a_lot: self.a_lot,
            a_bit: self.a_bit,
            allow_swaps: self.allow_swaps,
        };
        serde_json::to_string_pretty(&file).expect("scenario serialisation cannot fail")
    }

    /// Hex-encoded SHA-256 prefix of the canonical serialisation, used to tie
    /// strategies to the instance they were synthesised for.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn n_places(&self) -> usize {
        self.places.len()
    }

    /// Number of rooms, `m`.
    pub fn n_rooms(&self) -> usize {
        self.rooms.len()
    }

    /// Number of robots, `k`.
    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn n_chargers(&self) -> usize {
        self.places
            .iter()
            .filter(|p| p.kind == PlaceKind::Charger)
            .count()
    }

    pub fn is_charger(&self, p: PlaceId) -> bool {
        self.places[p].kind == PlaceKind::Charger
    }

    /// Room index of place `p`, if it is a room.
    pub fn room_index(&self, p: PlaceId) -> Option<usize> {
        self.room_of_place[p]
    }

    /// Place id of room `j`.
    pub fn room_place(&self, j: usize) -> PlaceId {
        self.place_of_room[j]
    }

    /// Places reachable from `p` in one step: its graph neighbours plus `p`
    /// itself (staying is always allowed). Panics on an invalid id.
    pub fn neighbors(&self, p: PlaceId) -> &[PlaceId] {
        &self.adjacency[p]
    }

    pub fn place_by_name(&self, name: &str) -> Option<PlaceId> {
        self.places.iter().position(|p| p.name == name)
    }

    /// Checks every instance invariant and reports each violation with its
    /// field path. Violations are report entries, not failures.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.n_places();

        for (i, place) in self.places.iter().enumerate() {
            if !valid_name(&place.name) {
                report.push(
                    format!("places[{i}].name"),
                    format!(
                        "invalid place name {:?}: names must be non-empty, use only \
                         [A-Za-z0-9_.-], and must not be the reserved word \"fin\"",
                        place.name
                    ),
                );
            }
            if self.places[..i].iter().any(|q| q.name == place.name) {
                report.push(
                    format!("places[{i}].name"),
                    format!("duplicate place name {:?}", place.name),
                );
            }
        }

        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                report.push(
                    format!("edges[{i}]"),
                    format!("endpoint out of range ({a},{b})"),
                );
            }
        }

        if self.horizon_t <= 1 {
            report.push("horizon_T", "horizon must satisfy T > 1");
        }

        let mut pr_sum = 0.0_f64;
        for (j, room) in self.rooms.iter().enumerate() {
            let path = |field: &str| format!("rooms[{j}].{field}");
            if !(0.0..=1.0).contains(&room.pr) || !room.pr.is_finite() {
                report.push(path("pr"), format!("probability {} outside [0,1]", room.pr));
            } else {
                pr_sum += room.pr;
            }
            if room.threshold == 0 {
                report.push(path("threshold"), "threshold must be positive");
            }
            if room.contamination_rate == 0 {
                report.push(path("contamination_rate"), "rate must be positive");
            }
            if room.omega_cont_thres > room.threshold {
                report.push(
                    path("omega_cont_thres"),
                    format!(
                        "omega contamination bound {} exceeds threshold {}",
                        room.omega_cont_thres, room.threshold
                    ),
                );
            }
            for (s, &(a, b)) in room.util.iter().enumerate() {
                if !(a < b && b <= self.horizon_t) {
                    report.push(
                        format!("rooms[{j}].util[{s}]"),
                        format!("slot [{a},{b}) must satisfy 0 <= a < b <= T"),
                    );
                }
            }
        }
        if pr_sum > 1.0 + 1e-12 {
            report.push(
                "rooms",
                format!("probabilities exceed 1: sum of pr values is {pr_sum}"),
            );
        }

        if self.robots.is_empty() {
            report.push("robots", "at least one robot is required");
        }
        for (i, robot) in self.robots.iter().enumerate() {
            let path = |field: &str| format!("robots[{i}].{field}");
            if robot.start >= n {
                report.push(path("start"), format!("start {} out of range", robot.start));
            } else if !self.is_charger(robot.start) {
                report.push(
                    path("start"),
                    format!(
                        "start must be a charger, but place {} is a room",
                        robot.start
                    ),
                );
            }
            if robot.max_charge == 0 {
                report.push(path("max_charge"), "max charge must be positive");
            }
            if robot.charge_rate == 0 {
                report.push(path("charge_rate"), "charge rate must be positive");
            }
            if robot.discharge_rate == 0 {
                report.push(path("discharge_rate"), "discharge rate must be positive");
            }
            if robot.omega_chg_thres > robot.max_charge {
                report.push(
                    path("omega_chg_thres"),
                    format!(
                        "omega charge bound {} exceeds max charge {}",
                        robot.omega_chg_thres, robot.max_charge
                    ),
                );
            }
            for (other, prev) in self.robots[..i].iter().enumerate() {
                if prev.start == robot.start && robot.start < n {
                    report.push(
                        path("start"),
                        format!(
                            "robots must have distinct start places (shared with robots[{other}])"
                        ),
                    );
                }
            }
        }
        if self.n_robots() > self.n_chargers() {
            report.push(
                "robots",
                format!(
                    "{} robots but only {} chargers (k <= n required)",
                    self.n_robots(),
                    self.n_chargers()
                ),
            );
        }

        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_json() -> String {
        r#"{
            "places": [
                {"name": "C0", "kind": "charger"},
                {"name": "R1", "kind": "room"}
            ],
            "edges": [[0, 1]],
            "rooms": [
                {"pr": 0.1, "threshold": 4, "contamination_rate": 1,
                 "omega_cont_thres": 2, "util": []}
            ],
            "robots": [
                {"start": 0, "max_charge": 2, "charge_rate": 1,
                 "discharge_rate": 1, "omega_chg_thres": 1}
            ],
            "horizon_T": 2
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_document() {
        let sc = Scenario::parse(&minimal_json()).unwrap();
        assert_eq!(sc.n_places(), 2);
        assert_eq!(sc.n_rooms(), 1);
        assert_eq!(sc.n_robots(), 1);
        assert_eq!(sc.a_lot, 10_000_000);
        assert_eq!(sc.a_bit, 10_000);
        assert!(sc.allow_swaps);
    }

    #[test]
    fn roundtrip_is_identity_on_minimal() {
        let sc = Scenario::parse(&minimal_json()).unwrap();
        let again = Scenario::parse(&sc.to_json()).unwrap();
        assert_eq!(sc, again);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = minimal_json().replace("\"horizon_T\": 2", "\"horizon_T\": 2, \"bogus\": 1");
        let err = Scenario::parse(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{err}");
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn rejects_missing_fields() {
        let text = minimal_json().replace("\"horizon_T\": 2", "\"horizon_T\": 2, \"a_lot\": 5");
        assert!(Scenario::parse(&text).is_ok());
        let text = r#"{"places": [], "edges": [], "rooms": [], "robots": []}"#;
        assert!(matches!(
            Scenario::parse(text),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn rejects_probability_sum_above_one() {
        let text = r#"{
            "places": [
                {"name": "C0", "kind": "charger"},
                {"name": "R1", "kind": "room"},
                {"name": "R2", "kind": "room"},
                {"name": "R3", "kind": "room"}
            ],
            "edges": [[0,1],[1,2],[2,3]],
            "rooms": [
                {"pr": 0.3, "threshold": 4, "contamination_rate": 1, "omega_cont_thres": 2},
                {"pr": 0.3, "threshold": 4, "contamination_rate": 1, "omega_cont_thres": 2},
                {"pr": 0.5, "threshold": 4, "contamination_rate": 1, "omega_cont_thres": 2}
            ],
            "robots": [
                {"start": 0, "max_charge": 2, "charge_rate": 1,
                 "discharge_rate": 1, "omega_chg_thres": 1}
            ],
            "horizon_T": 4
        }"#;
        match Scenario::parse(text) {
            Err(ScenarioError::Invalid(report)) => {
                assert!(
                    report
                        .violations
                        .iter()
                        .any(|v| v.message.contains("probabilities exceed 1")),
                    "{report}"
                );
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn misaligned_rooms_array_is_a_shape_error() {
        let text = r#"{
            "places": [
                {"name": "C0", "kind": "charger"},
                {"name": "R1", "kind": "room"}
            ],
            "edges": [[0, 1]],
            "rooms": [],
            "robots": [
                {"start": 0, "max_charge": 2, "charge_rate": 1,
                 "discharge_rate": 1, "omega_chg_thres": 1}
            ],
            "horizon_T": 2
        }"#;
        let err = Scenario::parse(text).unwrap_err();
        assert!(matches!(err, ScenarioError::RoomCount { .. }), "{err}");
    }

    fn valid_base() -> Scenario {
        Scenario::parse(&minimal_json()).unwrap()
    }

    #[test]
    fn validate_flags_shared_start_places() {
        let mut sc = valid_base();
        sc.places.push(Place {
            name: "C9".into(),
            kind: PlaceKind::Charger,
        });
        sc.robots.push(sc.robots[0].clone());
        let report = sc.validate();
        assert!(
            report
                .violations
                .iter()
                .any(|v| v.message.contains("distinct start places")),
            "{report}"
        );
    }

    #[test]
    fn validate_flags_omega_charge_bound() {
        let mut sc = valid_base();
        sc.robots[0].omega_chg_thres = sc.robots[0].max_charge + 1;
        let report = sc.validate();
        assert!(
            report
                .violations
                .iter()
                .any(|v| v.message.contains("omega charge bound")),
            "{report}"
        );
    }

    #[test]
    fn validate_mutations_each_hit_one_invariant() {
        // One mutation per invariant; each must produce a violation whose
        // path points at the mutated field.
        type Mutation = (Box<dyn Fn(&mut Scenario)>, &'static str);
        let cases: Vec<Mutation> = vec![
            (Box::new(|sc| sc.horizon_t = 1), "horizon_T"),
            (Box::new(|sc| sc.rooms[0].pr = 1.5), "rooms[0].pr"),
            (
                Box::new(|sc| sc.rooms[0].threshold = 0),
                "rooms[0].threshold",
            ),
            (
                Box::new(|sc| sc.rooms[0].contamination_rate = 0),
                "rooms[0].contamination_rate",
            ),
            (
                Box::new(|sc| sc.rooms[0].omega_cont_thres = 99),
                "rooms[0].omega_cont_thres",
            ),
            (
                Box::new(|sc| sc.rooms[0].util = vec![(1, 9)]),
                "rooms[0].util[0]",
            ),
            (
                Box::new(|sc| sc.rooms[0].util = vec![(2, 2)]),
                "rooms[0].util[0]",
            ),
            (Box::new(|sc| sc.robots[0].start = 1), "robots[0].start"),
            (Box::new(|sc| sc.robots[0].start = 7), "robots[0].start"),
            (
                Box::new(|sc| sc.robots[0].max_charge = 0),
                "robots[0].max_charge",
            ),
            (
                Box::new(|sc| sc.robots[0].charge_rate = 0),
                "robots[0].charge_rate",
            ),
            (
                Box::new(|sc| sc.robots[0].discharge_rate = 0),
                "robots[0].discharge_rate",
            ),
            (Box::new(|sc| sc.edges = vec![(0, 9)]), "edges[0]"),
            (
                Box::new(|sc| sc.places[1].name = "C0".into()),
                "places[1].name",
            ),
            (
                Box::new(|sc| sc.places[1].name = "fin".into()),
                "places[1].name",
            ),
            (
                Box::new(|sc| sc.places[1].name = "a,b".into()),
                "places[1].name",
            ),
        ];
        for (i, (mutate, path)) in cases.iter().enumerate() {
            let mut sc = valid_base();
            mutate(&mut sc);
            let report = sc.validate();
            assert!(
                report.violations.iter().any(|v| v.path == *path),
                "case {i}: expected a violation at {path}, got {report}"
            );
        }
    }

    #[test]
    fn valid_scenario_has_empty_report() {
        assert!(valid_base().validate().is_empty());
    }

    #[test]
    fn neighbors_on_line_graph() {
        let text = r#"{
            "places": [
                {"name": "C0", "kind": "charger"},
                {"name": "R1", "kind": "room"},
                {"name": "R2", "kind": "room"}
            ],
            "edges": [[0,1],[1,2]],
            "rooms": [
                {"pr": 0.1, "threshold": 4, "contamination_rate": 1, "omega_cont_thres": 2},
                {"pr": 0.1, "threshold": 4, "contamination_rate": 1, "omega_cont_thres": 2}
            ],
            "robots": [
                {"start": 0, "max_charge": 2, "charge_rate": 1,
                 "discharge_rate": 1, "omega_chg_thres": 1}
            ],
            "horizon_T": 3
        }"#;
        let sc = Scenario::parse(text).unwrap();
        assert_eq!(sc.neighbors(1), &[0, 1, 2]);
        assert_eq!(sc.neighbors(0), &[0, 1]);
    }

    #[test]
    fn isolated_place_neighbors_itself_only() {
        let mut sc = valid_base();
        sc.places.push(Place {
            name: "R9".into(),
            kind: PlaceKind::Room,
        });
        sc.rooms.push(sc.rooms[0].clone());
        // Rebuild through the document form to refresh the derived tables.
        let sc = Scenario::parse(&sc.to_json()).unwrap();
        assert_eq!(sc.neighbors(2), &[2]);
    }

    #[test]
    #[should_panic]
    fn neighbors_panics_on_invalid_id() {
        let sc = valid_base();
        let _ = sc.neighbors(99);
    }

    #[test]
    fn neighbors_is_symmetric() {
        let sc = valid_base();
        for p in 0..sc.n_places() {
            for &q in sc.neighbors(p) {
                if q != p {
                    assert!(sc.neighbors(q).contains(&p));
                }
            }
        }
    }
}
