//! Property tests for the instance model and the solver contracts.

mod common;

use cleansynth::gen::{self, TinyConfig};
use cleansynth::induced;
use cleansynth::pomdp::{self, JointMove};
use cleansynth::scenario::Scenario;
use cleansynth::synth;
use cleansynth::verify::{self, OmegaSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_scenario() -> impl Strategy<Value = Scenario> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gen::random_tiny_scenario(
            &mut rng,
            TinyConfig {
                max_rooms: 2,
                max_horizon: 6,
                max_charge: 4,
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// parse(serialise(sc)) is field-equal to sc for every valid scenario.
    #[test]
    fn scenario_roundtrip_is_identity(sc in tiny_scenario()) {
        let again = Scenario::parse(&sc.to_json()).unwrap();
        prop_assert_eq!(sc, again);
    }

    /// q in neighbors(p) \ {p} iff p in neighbors(q) \ {q}.
    #[test]
    fn neighbor_relation_is_symmetric(sc in tiny_scenario()) {
        for p in 0..sc.n_places() {
            for &q in sc.neighbors(p) {
                if q != p {
                    prop_assert!(sc.neighbors(q).contains(&p));
                }
            }
        }
    }

    /// Kernel rows of the built model are probability distributions and the
    /// availability oracle agrees with the implementation.
    #[test]
    fn built_model_rows_are_distributions(sc in tiny_scenario()) {
        let model = pomdp::build_pomdp(&sc).unwrap();
        for sid in 0..model.n_states() {
            let state = &model.states()[sid];
            let expected = common::oracle_moves(&sc, state.obs.t, &state.obs.x, &state.obs.c);
            let got: Vec<JointMove> =
                model.actions(sid).iter().map(|(a, _)| a.clone()).collect();
            prop_assert_eq!(&got, &expected);
            for (_, row) in model.actions(sid) {
                let sum: f64 = row.iter().map(|(_, p)| p).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    /// The exact value never exceeds the cost of a randomly drawn schedule.
    #[test]
    fn exact_value_lower_bounds_random_schedules(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = gen::random_tiny_scenario(&mut rng, TinyConfig::default());
        let exact = synth::exact_synthesize(&sc).unwrap();
        for _ in 0..5 {
            let moves = gen::random_schedule(&sc, &mut rng);
            let cost = synth::evaluate_schedule(&sc, &moves).unwrap().total();
            prop_assert!(cost >= exact.value - 1e-9);
        }
    }

    /// Counter resets along an induced trace coincide with the rooms whose
    /// flag marginals reset when the same schedule is replayed on the
    /// synthesis model.
    #[test]
    fn counters_refine_flags(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = gen::random_tiny_scenario(&mut rng, TinyConfig::default());
        let moves = gen::random_schedule(&sc, &mut rng);
        let strategy = synth::Strategy {
            moves: moves.clone(),
            meta: synth::StrategyMeta {
                scenario_hash: sc.hash_hex(),
                solver: synth::SolverKind::Exact,
                g: None,
                value: None,
            },
        };
        let omega = OmegaSpec::from_scenario(&sc);
        let s0 = verify::worst_omega_state(&sc, &omega);
        let trace = induced::induce(&sc, &strategy, s0).unwrap();

        // Replay the marginals next to the counter trace.
        let mut p = vec![0.25f64; sc.n_rooms()];
        for (step, mv) in moves.iter().enumerate() {
            let before = trace.states[step].d.clone();
            let after = &trace.states[step + 1].d;
            let p_before = p.clone();
            if let JointMove::To(targets) = mv {
                let cleaned = pomdp::cleaned_rooms(&sc, targets);
                for (j, pj) in p.iter_mut().enumerate() {
                    *pj = synth::marginal_update(*pj, sc.rooms[j].pr, cleaned.contains(&j));
                }
            }
            for j in 0..sc.n_rooms() {
                let counter_reset = after[j] == 0 && (before[j] > 0 || after[j] < before[j]);
                let flag_reset = p[j] == 0.0 && p_before[j] > 0.0;
                // A reset in one model implies the same cleaned set in the
                // other; compare through the cleaned relation directly.
                if counter_reset {
                    prop_assert!(
                        p[j] == 0.0,
                        "counter for room {j} reset at step {step} but the marginal did not"
                    );
                }
                if flag_reset {
                    prop_assert!(after[j] == 0);
                }
            }
        }
    }
}

/// Two comparable start states (charges at least as high, counters at most
/// as high, same positions): every requirement that passes from the worse
/// state also passes from the better one.
#[test]
fn requirement_monotonicity_in_the_start_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut compared = 0usize;
    for _ in 0..200 {
        let sc = gen::random_tiny_scenario(&mut rng, TinyConfig::default());
        let moves = gen::random_schedule(&sc, &mut rng);
        let strategy = synth::Strategy {
            moves,
            meta: synth::StrategyMeta {
                scenario_hash: sc.hash_hex(),
                solver: synth::SolverKind::Exact,
                g: None,
                value: None,
            },
        };
        // Worse state: lower charges, higher counters.
        let worse = OmegaSpec {
            charge: sc
                .robots
                .iter()
                .map(|r| rng.gen_range(0..=r.omega_chg_thres))
                .collect(),
            contamination: sc
                .rooms
                .iter()
                .map(|r| rng.gen_range(r.omega_cont_thres..=r.threshold))
                .collect(),
            starts: None,
        };
        let better = OmegaSpec {
            charge: worse
                .charge
                .iter()
                .zip(&sc.robots)
                .map(|(&c, r)| rng.gen_range(c..=r.max_charge))
                .collect(),
            contamination: worse
                .contamination
                .iter()
                .map(|&d| rng.gen_range(0..=d))
                .collect(),
            starts: None,
        };
        // The schedule was drawn for the scenario's own initial charge, so
        // either replay may fail on availability; compare only when both
        // replays succeed. Both reports are checked against the same area.
        let trace_worse =
            match induced::induce(&sc, &strategy, verify::worst_omega_state(&sc, &worse)) {
                Ok(trace) => trace,
                Err(_) => continue,
            };
        let trace_better =
            match induced::induce(&sc, &strategy, verify::worst_omega_state(&sc, &better)) {
                Ok(trace) => trace,
                Err(_) => continue,
            };
        let (Ok(wr), Ok(br)) = (
            verify::check_requirements(&sc, &trace_worse, &worse),
            verify::check_requirements(&sc, &trace_better, &worse),
        ) else {
            continue;
        };
        for (a, b) in wr.checks.iter().zip(&br.checks) {
            assert!(
                !a.passed || b.passed,
                "{} passes from the worse state but fails from the better one",
                a.id
            );
        }
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} comparable pairs");
}
