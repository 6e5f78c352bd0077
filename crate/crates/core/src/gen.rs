//! Random instance and schedule generation for tests and experiments.

use crate::pomdp::{self, JointMove};
use crate::scenario::{Place, PlaceKind, RobotParams, RoomParams, Scenario};
use rand::Rng;

/// Bounds for [`random_tiny_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct TinyConfig {
    pub max_rooms: usize,
    pub max_horizon: u32,
    pub max_charge: u32,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            max_rooms: 2,
            max_horizon: 6,
            max_charge: 4,
        }
    }
}

/// Generates a small valid scenario: one charger, up to `max_rooms` rooms,
/// one robot, random connectivity and parameters. Valid by construction.
pub fn random_tiny_scenario<R: Rng>(rng: &mut R, cfg: TinyConfig) -> Scenario {
    let m = rng.gen_range(1..=cfg.max_rooms);
    let horizon = rng.gen_range(2..=cfg.max_horizon);
    let max_charge = rng.gen_range(1..=cfg.max_charge);

    let mut places = vec![Place {
        name: "C0".into(),
        kind: PlaceKind::Charger,
    }];
    for j in 0..m {
        places.push(Place {
            name: format!("R{}", j + 1),
            kind: PlaceKind::Room,
        });
    }

    // Always connect the charger to the first room, then add random extras.
    let mut edges = vec![(0usize, 1usize)];
    for a in 0..places.len() {
        for b in (a + 1)..places.len() {
            if (a, b) != (0, 1) && rng.gen_bool(0.5) {
                edges.push((a, b));
            }
        }
    }

    // Contamination probabilities with a total at most 0.9.
    let mut prs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.45)).collect();
    let sum: f64 = prs.iter().sum();
    if sum > 0.9 {
        for pr in &mut prs {
            *pr *= 0.9 / sum;
        }
    }

    let rooms = prs
        .into_iter()
        .map(|pr| {
            let threshold = rng.gen_range(1..=6);
            RoomParams {
                pr,
                threshold,
                contamination_rate: rng.gen_range(1..=2),
                omega_cont_thres: rng.gen_range(0..=threshold),
                util: if rng.gen_bool(0.3) && horizon >= 2 {
                    let a = rng.gen_range(0..horizon - 1);
                    let b = rng.gen_range(a + 1..=horizon);
                    vec![(a, b)]
                } else {
                    vec![]
                },
            }
        })
        .collect();

    let robots = vec![RobotParams {
        start: 0,
        max_charge,
        charge_rate: rng.gen_range(1..=max_charge),
        discharge_rate: rng.gen_range(1..=2),
        omega_chg_thres: rng.gen_range(1..=max_charge),
    }];

    let a_bit = [0u64, 100, 10_000][rng.gen_range(0..3)];
    let sc = Scenario::new(
        places,
        edges,
        rooms,
        robots,
        horizon,
        10_000_000,
        a_bit,
        rng.gen_bool(0.5),
    )
    .expect("generated shape is consistent");
    debug_assert!(sc.validate().is_empty(), "{}", sc.validate());
    sc
}

/// Random available-consistent schedule: a uniform walk over the available
/// joint moves from the initial state.
pub fn random_schedule<R: Rng>(sc: &Scenario, rng: &mut R) -> Vec<JointMove> {
    let init = pomdp::initial_state(sc);
    let mut obs = init.obs;
    let mut moves = Vec::with_capacity(sc.horizon_t as usize);
    for _ in 0..sc.horizon_t {
        let actions = pomdp::available_moves_obs(sc, obs.t, &obs.x, &obs.c);
        let action = actions[rng.gen_range(0..actions.len())].clone();
        obs = pomdp::step_observable_unchecked(sc, &obs, &action);
        moves.push(action);
    }
    moves
}
