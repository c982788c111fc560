mod common;

use proptest::prelude::*;

use cfsim_core::builders::corpus;
use cfsim_core::circuit::ISOMETRY_TOL;
use cfsim_core::dsl::{parse, parse_document, serialize};
use cfsim_core::statespace::{JointState, ModeKind, PlateState};
use cfsim_core::tsvf::{perturbative_weak_value, trace_map, two_state_trajectory, TwoStateTrajectory};
use cfsim_core::C64;

use common::{random_circuit, random_document, random_input};

/// Two-state runs for every detector whose post-selection is defined.
fn defined_posts(seed: u64) -> (cfsim_core::circuit::Circuit, JointState, Vec<TwoStateTrajectory>) {
    let c = random_circuit(seed);
    let input = random_input(&c, seed);
    let runs = c.detectors().iter().filter_map(|&d| two_state_trajectory(&c, &input, d, None).ok()).collect();
    (c, input, runs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probability_is_conserved(seed in any::<u64>()) {
        let c = random_circuit(seed);
        let out = c.propagate(&random_input(&c, seed)).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((c.outcomes(&out).total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_is_linear(seed in any::<u64>(), ar in -1.0..1.0f64, ai in -1.0..1.0f64, br in -1.0..1.0f64) {
        let c = random_circuit(seed);
        let basis = c.input_basis();
        let pick = |i: usize| {
            let (m, q) = basis[i % basis.len()];
            let plate = if q == 1 { PlateState::Present } else { PlateState::Absent };
            JointState::basis_at(c.table().clone(), c.plate_dim(), m, plate).unwrap()
        };
        let (x, y) = (pick(seed as usize), pick(seed as usize / 7 + 1));
        let (a, b) = (C64::new(ar, ai), C64::new(br, 0.5));
        let lhs = c.propagate(&x.scale(a).add(&y.scale(b)).unwrap()).unwrap();
        let rhs = c.propagate(&x).unwrap().scale(a).add(&c.propagate(&y).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn random_circuits_are_isometries(seed in any::<u64>()) {
        let r = random_circuit(seed).check_isometry();
        prop_assert!(r.passed, "deviation {}", r.worst_deviation);
    }

    #[test]
    fn two_state_inner_product_is_constant(seed in any::<u64>()) {
        let (c, _, runs) = defined_posts(seed);
        for tst in &runs {
            let amp = tst.amplitude();
            for t in 0..=c.depth() {
                prop_assert!((tst.inner_at(t) - amp).norm() < 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn weak_values_sum_to_one_before_absorption(seed in any::<u64>()) {
        let (c, _, runs) = defined_posts(seed);
        for tst in runs.iter().filter(|r| r.amplitude().norm() > 1e-3) {
            for t in 0..=c.last_pre_absorption() {
                let s = tst.weak_value_sum(t, None).unwrap();
                prop_assert!((s - C64::new(1.0, 0.0)).norm() < 1e-9, "t={t}: {s}");
            }
        }
    }

    #[test]
    fn weak_values_match_phase_kick(seed in any::<u64>(), pick in any::<usize>()) {
        let (c, input, runs) = defined_posts(seed);
        let paths: Vec<_> = c.table().iter().filter(|m| m.kind == ModeKind::Path).map(|m| m.index).collect();
        for tst in runs.iter().filter(|r| r.amplitude().norm() > 0.05) {
            let mode = paths[pick % paths.len()];
            let t = pick % (c.depth() + 1);
            let w = tst.weak_value(mode, t, None).unwrap();
            let p = perturbative_weak_value(&c, &input, tst.post_mode(), None, mode, t).unwrap();
            prop_assert!((w - p).norm() < 1e-6 * w.norm().max(1.0), "{w} vs {p}");
        }
    }

    #[test]
    fn presence_shrinks_as_tol_grows(seed in any::<u64>(), lo in 1e-9..1e-3f64, factor in 1.0..1e3f64) {
        let (c, _, runs) = defined_posts(seed);
        for tst in &runs {
            let a = trace_map(&c, tst, lo).unwrap();
            let b = trace_map(&c, tst, lo * factor).unwrap();
            for (ea, eb) in a.entries.iter().zip(&b.entries) {
                prop_assert!(!eb.present || ea.present);
            }
            for m in c.table().iter() {
                prop_assert!(!b.mode_present(m.index) || a.mode_present(m.index));
            }
        }
    }

    #[test]
    fn documents_round_trip(seed in any::<u64>()) {
        let text = random_document(seed);
        let original = random_circuit(seed);
        let doc = parse_document(&text, original.name()).unwrap();
        prop_assert!(original.transfer_distance(&doc.circuit).unwrap() < 1e-12);
        prop_assert_eq!(serialize(&doc.circuit), text);
    }
}

#[test]
fn corpus_is_isometric() {
    for c in corpus() {
        let r = c.check_isometry();
        assert!(r.passed && r.worst_deviation < ISOMETRY_TOL, "{}: {}", c.name(), r.worst_deviation);
    }
}

#[test]
fn corpus_round_trips_through_text() {
    for c in corpus() {
        let text = serialize(&c);
        let back = parse(&text).unwrap();
        assert!(c.transfer_distance(&back).unwrap() < 1e-12, "{}", c.name());
        assert_eq!(serialize(&back.with_name(c.name())), text, "{}", c.name());
    }
}
