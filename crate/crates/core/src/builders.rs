//! Canonical interferometers with their tunings satisfied exactly.
//!
//! Mode naming is shared across builders: `O`-prefixed modes are the
//! object locations (region bob), rails leading to and from them are
//! channel, everything at the source and the detectors is alice. Sinks are
//! appended after the declared modes and inherit the region of the mode
//! they absorb from.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{Angle, Circuit, CircuitBuilder, CircuitError, Control, Step};
use crate::statespace::{ModeIdx, PlateDim, PlateState, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("chain parameter {0} must be at least 1")]
    ZeroParameter(&'static str),
    #[error("unknown builder `{0}`")]
    UnknownBuilder(String),
    #[error("unknown variant `{0}` (expected a or b)")]
    UnknownVariant(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

pub type BuildResult<T> = Result<T, BuildError>;

/// Outer (`n`) and inner (`m`) chain lengths.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ChainParams {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

impl ChainParams {
    pub fn new(n: usize, m: usize) -> BuildResult<Self> {
        if n == 0 {
            return Err(BuildError::ZeroParameter("N"));
        }
        if m == 0 {
            return Err(BuildError::ZeroParameter("M"));
        }
        Ok(Self { n, m })
    }

    pub fn outer(n: usize) -> BuildResult<Self> {
        Self::new(n, 1)
    }
}

/// How the object locations are occupied.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Blocking {
    Free,
    Blocked,
    /// Plate qubit decides; forces plate dimension 2.
    PlateControlled,
}

impl Blocking {
    pub fn from_flag(blocked: bool) -> Self {
        if blocked {
            Self::Blocked
        } else {
            Self::Free
        }
    }

    pub fn plate_dim(self) -> PlateDim {
        match self {
            Self::PlateControlled => PlateDim::Two,
            _ => PlateDim::One,
        }
    }

    fn step(self, m: ModeIdx) -> Option<Step> {
        match self {
            Self::Free => None,
            Self::Blocked => Some(Step::Block(m, Control::Always)),
            Self::PlateControlled => Some(Step::Block(m, Control::WhenPlatePresent)),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum NestedVariant {
    /// Inner interferometer on arms A and B, object in A.
    A,
    /// Mirror image: inner interferometer on arms C and B, object in C.
    B,
}

impl FromStr for NestedVariant {
    type Err = BuildError;

    fn from_str(s: &str) -> BuildResult<Self> {
        match s {
            "a" | "A" => Ok(Self::A),
            "b" | "B" => Ok(Self::B),
            _ => Err(BuildError::UnknownVariant(s.into())),
        }
    }
}

impl fmt::Display for NestedVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "a",
            Self::B => "b",
        })
    }
}

fn bs(a: ModeIdx, b: ModeIdx, theta: Angle) -> Step {
    Step::Bs(a, b, theta)
}

fn layer(b: &mut CircuitBuilder, steps: impl IntoIterator<Item = Step>) {
    b.layer(steps).expect("builder layers are collision-free");
}

/// Single 50/50 interferometer with the object at `O` in the right arm.
/// Free: `D` is dark.
pub fn mzi(blocking: Blocking) -> Circuit {
    let mut b = CircuitBuilder::new("mzi", blocking.plate_dim());
    let l = b.path("L", Region::Alice);
    let r_in = b.path("R.in", Region::Channel);
    let o = b.path("O", Region::Bob);
    let r_out = b.path("R.out", Region::Channel);
    let d = b.detector("D", Region::Alice);
    let other = b.detector("other", Region::Alice);
    b.input(l).unwrap();
    let half = Angle::pi_frac(1, 4);
    layer(&mut b, [bs(l, r_in, half)]);
    layer(&mut b, [Step::Route(r_in, o)]);
    layer(&mut b, blocking.step(o));
    layer(&mut b, [Step::Route(o, r_out)]);
    layer(&mut b, [bs(l, r_out, half)]);
    layer(&mut b, [Step::Route(l, d), Step::Route(r_out, other)]);
    b.build().unwrap()
}

/// `acos(1/sqrt 3)`: outer splitter sending 2/3 into the inner interferometer.
pub fn outer_split_angle() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

/// `asin(1/sqrt 3)`: outer recombiner.
pub fn outer_merge_angle() -> f64 {
    (1.0 / 3f64.sqrt()).asin()
}

/// Interferometer nested in one arm of a larger one. The snapshot named
/// `mid` holds `(|A> + i|B> + |C>)/sqrt 3`; the object sits in `A`
/// (variant a) or `C` (variant b), and blocking it leaves `D` dark.
pub fn nested_mzi(variant: NestedVariant, blocking: Blocking) -> Circuit {
    // variant b is the A <-> C mirror
    let lab = |s: &str| -> String {
        match variant {
            NestedVariant::A => s.to_string(),
            NestedVariant::B => {
                let swapped: String = s
                    .chars()
                    .map(|c| match c {
                        'A' => 'C',
                        'C' => 'A',
                        c => c,
                    })
                    .collect();
                swapped
            }
        }
    };
    let mut b = CircuitBuilder::new(&format!("nested_mzi_{variant}"), blocking.plate_dim());
    let input = b.path("IN", Region::Alice);
    let e = b.path("E", Region::Alice);
    let a_in = b.path(&lab("A.in"), Region::Channel);
    let a = b.path(&lab("A"), Region::Bob);
    let a_out = b.path(&lab("A.out"), Region::Channel);
    let bb = b.path("B", Region::Alice);
    let c = b.path(&lab("C"), Region::Alice);
    let f = b.path("F", Region::Alice);
    let g = b.detector("G", Region::Alice);
    let d = b.detector("D", Region::Alice);
    let other = b.detector("other", Region::Alice);
    b.input(input).unwrap();
    let quarter = Angle::pi_frac(-1, 2);
    layer(&mut b, [bs(input, e, Angle::radians(outer_split_angle()))]);
    b.mark("inner_entry");
    layer(&mut b, [Step::Route(input, c), bs(e, bb, Angle::pi_frac(1, 4))]);
    layer(&mut b, [Step::Route(e, a_in), Step::Phase(bb, quarter)]);
    layer(&mut b, [Step::Phase(a_in, quarter)]);
    layer(&mut b, [Step::Route(a_in, a)]);
    b.mark("mid");
    layer(&mut b, blocking.step(a));
    layer(&mut b, [Step::Route(a, a_out)]);
    layer(&mut b, [bs(a_out, bb, Angle::pi_frac(1, 4))]);
    layer(&mut b, [Step::Route(a_out, f), Step::Route(bb, g), Step::Phase(c, quarter)]);
    b.mark("inner_exit");
    layer(&mut b, [bs(f, c, Angle::radians(outer_merge_angle()))]);
    layer(&mut b, [Step::Route(f, d), Step::Route(c, other)]);
    b.build().unwrap()
}

/// `n` splitters of angle `pi/2n` between a left rail and a right rail
/// that passes the object locations `O1..On`. Free, the photon ends in
/// `other`; blocked, it stays left and reaches `D` with `cos^2n(pi/2n)`.
pub fn zeno_presence_chain(n: usize, blocking: Blocking) -> BuildResult<Circuit> {
    ChainParams::outer(n)?;
    let mut b = CircuitBuilder::new("zeno_presence", blocking.plate_dim());
    let l = b.path("L", Region::Alice);
    let go: Vec<_> = (1..=n).map(|k| b.path(&format!("R{k}.go"), Region::Channel)).collect();
    let o: Vec<_> = (1..=n).map(|k| b.path(&format!("O{k}"), Region::Bob)).collect();
    let back: Vec<_> = (1..=n).map(|k| b.path(&format!("R{k}.back"), Region::Channel)).collect();
    let d = b.detector("D", Region::Alice);
    let other = b.detector("other", Region::Alice);
    b.input(l)?;
    let theta = Angle::pi_frac(1, 2 * n as u64);
    for k in 0..n {
        if k > 0 {
            layer(&mut b, [Step::Route(back[k - 1], go[k])]);
        }
        layer(&mut b, [bs(l, go[k], theta)]);
        layer(&mut b, [Step::Route(go[k], o[k])]);
        layer(&mut b, blocking.step(o[k]));
        layer(&mut b, [Step::Route(o[k], back[k])]);
    }
    layer(&mut b, [Step::Route(l, d), Step::Route(back[n - 1], other)]);
    Ok(b.build()?)
}

/// Modes of a chain of large interferometers whose right arms each hold a
/// chain of small ones.
struct NestedChain {
    l: ModeIdx,
    back: Vec<ModeIdx>,
}

/// Declares the rails and emits the `n` units. Each unit: outer splitter
/// `outer`, then `m` inner splitters of angle `pi/2m` between the unit's
/// inner rail and its object location, with the object after every inner
/// splitter. Whatever ends on the object rail is lost to a sink.
fn nested_chain(b: &mut CircuitBuilder, params: ChainParams, outer: Angle, blocking: Blocking) -> NestedChain {
    let n = params.n;
    let l = b.path("L", Region::Alice);
    let go: Vec<_> = (1..=n).map(|k| b.path(&format!("R{k}.go"), Region::Channel)).collect();
    let inner: Vec<_> = (1..=n).map(|k| b.path(&format!("R{k}.in"), Region::Channel)).collect();
    let back: Vec<_> = (1..=n).map(|k| b.path(&format!("R{k}.back"), Region::Channel)).collect();
    let o: Vec<_> = (1..=n).map(|k| b.path(&format!("O{k}"), Region::Bob)).collect();
    let exit: Vec<_> = (1..=n).map(|k| b.path(&format!("O{k}.exit"), Region::Internal)).collect();
    b.input(l).unwrap();
    let small = Angle::pi_frac(1, 2 * params.m as u64);
    for k in 0..n {
        if k > 0 {
            layer(b, [Step::Route(back[k - 1], go[k])]);
        }
        layer(b, [bs(l, go[k], outer)]);
        layer(b, [Step::Route(go[k], inner[k])]);
        for _ in 0..params.m {
            layer(b, [bs(inner[k], o[k], small)]);
            layer(b, blocking.step(o[k]));
        }
        layer(b, [Step::Route(o[k], exit[k]), Step::Route(inner[k], back[k])]);
        layer(b, [Step::Block(exit[k], Control::Always)]);
    }
    NestedChain { l, back }
}

/// Chain of `n` large interferometers (angle `pi/2n`), each right arm
/// holding `m` small ones (angle `pi/2m`). Free: small chains drain the
/// right arm, the photon stays left and reaches `D1` with `cos^2n(pi/2n)`.
/// Blocked: small chains reflect and the photon reaches `D2`.
pub fn nested_zeno(params: ChainParams, blocking: Blocking) -> BuildResult<Circuit> {
    ChainParams::new(params.n, params.m)?;
    let mut b = CircuitBuilder::new("nested_zeno", blocking.plate_dim());
    let chain = nested_chain(&mut b, params, Angle::pi_frac(1, 2 * params.n as u64), blocking);
    let d1 = b.detector("D1", Region::Alice);
    let d2 = b.detector("D2", Region::Alice);
    let last = chain.back[params.n - 1];
    // makes the ideal bit-1 amplitude at D2 real and positive
    layer(&mut b, [Step::Phase(last, Angle::pi_frac(-1, 2))]);
    layer(&mut b, [Step::Route(chain.l, d1), Step::Route(last, d2)]);
    Ok(b.build()?)
}

/// Outer angle of the absence chain. Total rotation falls short of `pi/2`
/// by `(pi/2 - acos(1/sqrt 3))/n`, which reproduces the single nested
/// interferometer at `n = 1`.
pub fn absence_outer_angle(n: usize) -> f64 {
    (FRAC_PI_2 - (FRAC_PI_2 - outer_split_angle()) / n as f64) / n as f64
}

/// Inner chain length of the absence chain.
pub fn absence_inner_length(n: usize) -> usize {
    2 * n * n
}

/// Chain of `n` absence units. Each unit's right arm holds a small chain
/// of `2n^2` splitters (a 50/50 interferometer at `n = 1`). A final
/// recombiner, tuned on the blocked amplitudes, makes `D` exactly dark when
/// the objects are present; free, `P(D)` grows toward 1 with `n`.
pub fn zeno_absence_chain(n: usize, blocking: Blocking) -> BuildResult<Circuit> {
    ChainParams::outer(n)?;
    let params = ChainParams::new(n, absence_inner_length(n))?;
    let outer = Angle::radians(absence_outer_angle(n));
    let (psi, phi) = absence_recombiner(params, outer);
    let mut b = CircuitBuilder::new("zeno_absence", blocking.plate_dim());
    let chain = nested_chain(&mut b, params, outer, blocking);
    let d = b.detector("D", Region::Alice);
    let other = b.detector("other", Region::Alice);
    let last = chain.back[n - 1];
    layer(&mut b, [Step::Phase(last, Angle::radians(psi))]);
    layer(&mut b, [bs(chain.l, last, Angle::radians(phi))]);
    layer(&mut b, [Step::Route(chain.l, d), Step::Route(last, other)]);
    Ok(b.build()?)
}

/// Phase and angle `(psi, phi)` that cancel the blocked amplitudes on the
/// left port: `cos(phi) L + i sin(phi) e^{i psi} R = 0`.
fn absence_recombiner(params: ChainParams, outer: Angle) -> (f64, f64) {
    let mut b = CircuitBuilder::new("absence_prefix", PlateDim::One);
    let chain = nested_chain(&mut b, params, outer, Blocking::Blocked);
    let sink = b.detector("end", Region::Alice);
    layer(&mut b, [Step::Route(chain.l, sink)]);
    let c = b.build().unwrap();
    let last = chain.back[params.n - 1];
    let mut s = c.input_state(PlateState::Absent).unwrap();
    // stop before the final route so L is still on its rail
    s = c.propagate_range(&s, 0, c.depth() - 1).unwrap();
    let lb: C64 = s.amplitude(chain.l, 0);
    let rb: C64 = s.amplitude(last, 0);
    let phi = lb.norm().atan2(rb.norm());
    let psi = lb.arg() - rb.arg() + FRAC_PI_2;
    (psi, phi)
}

/// Circuit `|R> (x) |b> -> |b> (x) |b>` in the ideal limit: the control
/// qubit `b` is the plate; `R` is routed to the detector `0` when the plate
/// is absent and absorbed into the sink `R@1` when present.
pub fn ideal_transfer_map() -> Circuit {
    let mut b = CircuitBuilder::new("ideal_transfer", PlateDim::Two);
    let r = b.path("R", Region::Alice);
    let zero = b.detector("0", Region::Alice);
    b.input(r).unwrap();
    layer(&mut b, [Step::Block(r, Control::WhenPlatePresent)]);
    layer(&mut b, [Step::Route(r, zero)]);
    b.build().unwrap()
}

/// Label of the ideal map's "one" output (the sink created by its blocker).
pub const IDEAL_ONE: &str = "R@1";
/// Label of the ideal map's "zero" output.
pub const IDEAL_ZERO: &str = "0";

/// Forward entangling chain (plate-controlled objects) and the reversal,
/// which is the adjoint of the ideal map with the two parties' roles
/// exchanged: the photon's which-detector bit controls, the plate system
/// is the one routed back to its ready state `R`.
pub fn qubit_transfer(params: ChainParams) -> BuildResult<(Circuit, Circuit)> {
    let forward = nested_zeno(params, Blocking::PlateControlled)?;
    let reversal = ideal_transfer_map().invert().with_name("transfer_reversal");
    Ok((forward, reversal))
}

/// Builder selection as used by the DSL `use` directive and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum BuilderSpec {
    Mzi,
    NestedMzi {
        variant: NestedVariant,
    },
    ZenoPresence {
        #[serde(rename = "N")]
        n: usize,
    },
    ZenoAbsence {
        #[serde(rename = "N")]
        n: usize,
    },
    NestedZeno {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "M")]
        m: usize,
    },
}

impl BuilderSpec {
    pub const NAMES: [&'static str; 5] = ["mzi", "nested_mzi", "zeno_presence", "zeno_absence", "nested_zeno"];

    /// `n`, `m` default to 1; `variant` to a.
    pub fn from_name(
        name: &str,
        n: Option<usize>,
        m: Option<usize>,
        variant: Option<NestedVariant>,
    ) -> BuildResult<Self> {
        let n = n.unwrap_or(1);
        let m = m.unwrap_or(1);
        Ok(match name {
            "mzi" => Self::Mzi,
            "nested_mzi" => Self::NestedMzi { variant: variant.unwrap_or(NestedVariant::A) },
            "zeno_presence" => Self::ZenoPresence { n },
            "zeno_absence" => Self::ZenoAbsence { n },
            "nested_zeno" => Self::NestedZeno { n, m },
            _ => return Err(BuildError::UnknownBuilder(name.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mzi => "mzi",
            Self::NestedMzi { .. } => "nested_mzi",
            Self::ZenoPresence { .. } => "zeno_presence",
            Self::ZenoAbsence { .. } => "zeno_absence",
            Self::NestedZeno { .. } => "nested_zeno",
        }
    }

    pub fn build(&self, blocking: Blocking) -> BuildResult<Circuit> {
        match *self {
            Self::Mzi => Ok(mzi(blocking)),
            Self::NestedMzi { variant } => Ok(nested_mzi(variant, blocking)),
            Self::ZenoPresence { n } => zeno_presence_chain(n, blocking),
            Self::ZenoAbsence { n } => zeno_absence_chain(n, blocking),
            Self::NestedZeno { n, m } => nested_zeno(ChainParams::new(n, m)?, blocking),
        }
    }
}

/// Every builder at a few small sizes, free, blocked and plate-controlled.
pub fn corpus() -> Vec<Circuit> {
    let mut out = Vec::new();
    for blocking in [Blocking::Free, Blocking::Blocked, Blocking::PlateControlled] {
        out.push(mzi(blocking));
        out.push(nested_mzi(NestedVariant::A, blocking));
        out.push(nested_mzi(NestedVariant::B, blocking));
        for n in [1, 2, 5] {
            out.push(zeno_presence_chain(n, blocking).unwrap());
        }
        for n in [1, 2, 3] {
            out.push(zeno_absence_chain(n, blocking).unwrap());
        }
        for (n, m) in [(1, 1), (2, 2), (3, 5)] {
            out.push(nested_zeno(ChainParams::new(n, m).unwrap(), blocking).unwrap());
        }
    }
    out
}

/// `cos^2n(pi/2n)`.
pub fn zeno_survival(n: usize) -> f64 {
    (FRAC_PI_2 / n as f64).cos().powi(2 * n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::ModeKind;

    fn run(c: &Circuit) -> crate::circuit::Outcomes {
        let out = c.propagate(&c.input_state(PlateState::Absent).unwrap()).unwrap();
        c.outcomes(&out)
    }

    #[test]
    fn mzi_free_is_dark() {
        let o = run(&mzi(Blocking::Free));
        assert!(o.detector("D").unwrap() < 1e-24);
        assert!((o.detector("other").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nested_mzi_mid_state() {
        let c = nested_mzi(NestedVariant::A, Blocking::Free);
        let s = c.input_state(PlateState::Absent).unwrap();
        let mid = c.propagate_range(&s, 0, c.marker("mid").unwrap()).unwrap();
        let r = 1.0 / 3f64.sqrt();
        for (label, want) in [("A", C64::new(r, 0.0)), ("B", C64::new(0.0, r)), ("C", C64::new(r, 0.0))] {
            let got = mid.amplitude(c.mode(label).unwrap(), 0);
            assert!((got - want).norm() < 1e-12, "{label}: {got}");
        }
    }

    #[test]
    fn nested_mzi_probabilities() {
        for v in [NestedVariant::A, NestedVariant::B] {
            let free = run(&nested_mzi(v, Blocking::Free));
            assert!((free.detector("D").unwrap() - 1.0 / 9.0).abs() < 1e-12);
            let blocked = run(&nested_mzi(v, Blocking::Blocked));
            assert!(blocked.detector("D").unwrap() < 1e-24);
        }
    }

    #[test]
    fn inner_exit_dark_when_free() {
        let c = nested_mzi(NestedVariant::A, Blocking::Free);
        let s = c.input_state(PlateState::Absent).unwrap();
        let t = c.marker("inner_exit").unwrap();
        let st = c.propagate_range(&s, 0, t).unwrap();
        assert!(st.amplitude(c.mode("F").unwrap(), 0).norm() < 1e-15);
    }

    #[test]
    fn presence_chain_small() {
        let o = run(&zeno_presence_chain(2, Blocking::Blocked).unwrap());
        assert!((o.detector("D").unwrap() - 0.25).abs() < 1e-12);
        let o = run(&zeno_presence_chain(7, Blocking::Free).unwrap());
        assert!((o.detector("other").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absence_chain_reduces_to_nested() {
        let free = run(&zeno_absence_chain(1, Blocking::Free).unwrap());
        assert!((free.detector("D").unwrap() - 1.0 / 9.0).abs() < 1e-12);
        let blocked = run(&zeno_absence_chain(1, Blocking::Blocked).unwrap());
        assert!(blocked.detector("D").unwrap() < 1e-24);
        assert!((absence_outer_angle(1) - outer_split_angle()).abs() < 1e-15);
    }

    #[test]
    fn nested_zeno_free_law() {
        let c = nested_zeno(ChainParams::new(4, 3).unwrap(), Blocking::Free).unwrap();
        let o = run(&c);
        assert!((o.detector("D1").unwrap() - zeno_survival(4)).abs() < 1e-12);
        assert!(o.detector("D2").unwrap() < 1e-20);
    }

    #[test]
    fn sinks_follow_blockers() {
        let c = zeno_presence_chain(3, Blocking::Blocked).unwrap();
        let sinks: Vec<_> = c.sinks().map(|m| c.label(m).to_string()).collect();
        assert_eq!(sinks, ["O1@3", "O2@8", "O3@13"]);
        assert!(c.sinks().all(|m| c.table().mode(m).region == Region::Bob));
        assert_eq!(c.table().of_kind(ModeKind::Detector).count(), 2);
    }

    #[test]
    fn builder_spec_names() {
        for name in BuilderSpec::NAMES {
            let spec = BuilderSpec::from_name(name, Some(2), Some(2), None).unwrap();
            assert_eq!(spec.name(), name);
            assert!(spec.build(Blocking::Free).is_ok());
        }
        assert!(BuilderSpec::from_name("nope", None, None, None).is_err());
        assert_eq!(
            nested_zeno(ChainParams { n: 0, m: 1 }, Blocking::Free).unwrap_err(),
            BuildError::ZeroParameter("N")
        );
    }

    #[test]
    fn ideal_map_entangles() {
        let c = ideal_transfer_map();
        let r = 0.5f64.sqrt();
        let prep = crate::statespace::PlatePreparation::new(C64::new(r, 0.0), C64::new(r, 0.0)).unwrap();
        let out = c.propagate(&c.input_state(PlateState::Prepared(prep)).unwrap()).unwrap();
        assert!((out.amplitude(c.mode(IDEAL_ONE).unwrap(), 1).re - r).abs() < 1e-15);
        assert!((out.amplitude(c.mode(IDEAL_ZERO).unwrap(), 0).re - r).abs() < 1e-15);
    }
}
