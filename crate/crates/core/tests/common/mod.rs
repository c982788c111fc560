#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfsim_core::circuit::{Angle, Circuit, CircuitBuilder, Control, Step};
use cfsim_core::dsl;
use cfsim_core::statespace::{ModeIdx, PlateDim, PlatePreparation, PlateState, Region};
use cfsim_core::C64;

const REGIONS: [Region; 4] = [Region::Alice, Region::Channel, Region::Bob, Region::Internal];

fn random_angle(rng: &mut ChaCha8Rng) -> Angle {
    if rng.gen_bool(0.6) {
        Angle::pi_frac(rng.gen_range(-7..=7), rng.gen_range(1..=12))
    } else {
        Angle::radians(rng.gen_range(-3.2..3.2))
    }
}

/// Random valid circuit. Steps the builder rejects are dropped, so the
/// result always satisfies the layer rules. The last layer routes every
/// path mode to its own detector.
pub fn random_circuit(seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = if rng.gen_bool(0.5) { PlateDim::Two } else { PlateDim::One };
    let mut b = CircuitBuilder::new(&format!("random{seed}"), dim);
    let n_paths = rng.gen_range(2..=6);
    let paths: Vec<ModeIdx> =
        (0..n_paths).map(|i| b.path(&format!("P{i}"), *REGIONS.choose(&mut rng).unwrap())).collect();
    let dets: Vec<ModeIdx> =
        (0..n_paths).map(|i| b.detector(&format!("D{i}"), *REGIONS.choose(&mut rng).unwrap())).collect();
    b.input(paths[0]).unwrap();
    let layers = rng.gen_range(1..=8);
    for l in 0..layers {
        b.begin_layer();
        if l == 2 {
            b.mark("mid");
        }
        for _ in 0..rng.gen_range(0..=3) {
            let x = *paths.choose(&mut rng).unwrap();
            let y = *paths.choose(&mut rng).unwrap();
            let step = match rng.gen_range(0..5) {
                0 | 1 => Step::Bs(x, y, random_angle(&mut rng)),
                2 => Step::Phase(x, random_angle(&mut rng)),
                3 => {
                    let control = if dim == PlateDim::Two && rng.gen_bool(0.7) {
                        Control::WhenPlatePresent
                    } else {
                        Control::Always
                    };
                    Step::Block(x, control)
                }
                _ => Step::Route(x, y),
            };
            let _ = b.push(step);
        }
    }
    b.begin_layer();
    for (&p, &d) in paths.iter().zip(&dets) {
        b.push(Step::Route(p, d)).unwrap();
    }
    b.build().expect("random circuit builds")
}

/// Canonical text of [`random_circuit`].
pub fn random_document(seed: u64) -> String {
    dsl::serialize(&random_circuit(seed))
}

/// Input with the plate absent, or a random superposition for dim 2.
pub fn random_input(c: &Circuit, seed: u64) -> cfsim_core::statespace::JointState {
    let plate = if c.plate_dim() == PlateDim::Two {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let b = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        PlateState::Prepared(PlatePreparation::normalized(a, b).unwrap())
    } else {
        PlateState::Absent
    };
    c.input_state(plate).unwrap()
}
