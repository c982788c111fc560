//! Circuit elements as exact isometries and layered propagation.
//!
//! Time is discrete: snapshot `t` is the state after the first `t` layers,
//! so a "location at a time" is a `(mode, t)` pair. Every element is a
//! unitary on the full joint space (blockers and routes are swaps with an
//! empty partner), which makes the backward evolution the exact adjoint of
//! the forward one and lets absorption show up in both time directions.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::statespace::{JointState, ModeIdx, ModeKind, ModeTable, PlateDim, Region, StateError, PLATE_PRESENT};

/// Tolerance for isometry and norm checks.
pub const ISOMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error(transparent)]
    State(#[from] StateError),

    #[error("layer {layer}: mode `{mode}` is touched by more than one element")]
    ModeCollision { layer: usize, mode: String },

    #[error("distinct modes required (got `{0}` twice)")]
    DistinctModesRequired(String),

    #[error("`{mode}` is a {kind} mode; {role} needs a path mode")]
    NotPath { mode: String, kind: &'static str, role: &'static str },

    #[error("terminal mode `{0}` is touched more than once")]
    TerminalReused(String),

    #[error("route between two terminal modes `{0}` and `{1}`")]
    TerminalRoute(String, String),

    #[error("plate-controlled blocker on `{0}` needs plate dimension 2")]
    PlateControlNeedsQubit(String),

    #[error("`{0}` is not a detector mode")]
    NotDetector(String),

    #[error("circuit has no input mode")]
    MissingInput,

    #[error("circuit has no detectors")]
    MissingDetectors,

    #[error("cannot post-select on sink `{0}`: sinks are absorbed, not detected")]
    PostOnSink(String),

    #[error("input has amplitude on terminal mode `{0}`")]
    InputOnTerminal(String),

    #[error("circuits do not share a mode table")]
    MismatchedCircuits,

    #[error("timestep {0} is out of range (circuit has {1} layers)")]
    TimestepOutOfRange(usize, usize),
}

pub type CircuitResult<T> = Result<T, CircuitError>;

/// An angle, kept as an exact rational multiple of pi when possible.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub enum Angle {
    /// `num * pi / den`, reduced, `den > 0`.
    PiFraction {
        num: i64,
        den: u64,
    },
    Radians(f64),
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Angle {
    pub fn pi_frac(num: i64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den).max(1);
        Self::PiFraction { num: num / g as i64, den: den / g }
    }

    pub fn radians(x: f64) -> Self {
        Self::Radians(x)
    }

    pub fn zero() -> Self {
        Self::PiFraction { num: 0, den: 1 }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Self::PiFraction { num, den } => num as f64 * PI / den as f64,
            Self::Radians(x) => x,
        }
    }

    /// `(cos, sin)` with exact values at multiples of pi/2.
    pub fn cos_sin(&self) -> (f64, f64) {
        if let Self::PiFraction { num, den } = *self {
            if den == 1 || den == 2 {
                // quarter turns, counted in units of pi/2
                let q = (num * (2 / den as i64)).rem_euclid(4);
                return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][q as usize];
            }
        }
        let v = self.value();
        unit_pair(v.cos(), v.sin())
    }

    /// `(cos - 1, sin)`, with `cos - 1` kept accurate for small angles.
    pub fn versin_sin(&self) -> (f64, f64) {
        let (c, s) = self.cos_sin();
        if c == 1.0 || c == 0.0 || c == -1.0 {
            return (c - 1.0, s);
        }
        let h = (self.value() / 2.0).sin();
        (-2.0 * h * h, s)
    }

    pub fn neg(&self) -> Self {
        match *self {
            Self::PiFraction { num, den } => Self::PiFraction { num: -num, den },
            Self::Radians(x) => Self::Radians(-x),
        }
    }
}

/// `c*c + s*s - 1` with the squares' rounding errors kept.
fn unit_defect(c: f64, s: f64) -> f64 {
    let (cc, ss) = (c * c, s * s);
    let (ec, es) = (c.mul_add(c, -cc), s.mul_add(s, -ss));
    let (big, small) = if cc >= ss { (cc, ss) } else { (ss, cc) };
    ((big - 1.0) + small) + (ec + es)
}

/// Nudges `(c, s)` by a few ulps toward the unit circle. Rounded cos/sin
/// pairs are off by up to an ulp in norm, the same way every time, which
/// adds up over long chains of identical elements.
fn unit_pair(c: f64, s: f64) -> (f64, f64) {
    let step = |x: f64, k: i64| {
        if x == 0.0 || k == 0 {
            return x;
        }
        let bits = x.to_bits() as i64 + if x > 0.0 { k } else { -k };
        f64::from_bits(bits as u64)
    };
    let mut best = (c, s, unit_defect(c, s).abs());
    for i in -3..=3 {
        for j in -3..=3 {
            let (c2, s2) = (step(c, i), step(s, j));
            let d = unit_defect(c2, s2).abs();
            if d < best.2 {
                best = (c2, s2, d);
            }
        }
    }
    (best.0, best.1)
}

impl fmt::Display for Angle {
    /// DSL syntax: `pi/4`, `-pi/2`, `3*pi/4`, `0`, or a radian literal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::PiFraction { num: 0, .. } => f.write_str("0"),
            Self::PiFraction { num, den } => {
                let sign = if num < 0 { "-" } else { "" };
                let n = num.unsigned_abs();
                let head = if n == 1 { "pi".to_string() } else { format!("{n}*pi") };
                if den == 1 {
                    write!(f, "{sign}{head}")
                } else {
                    write!(f, "{sign}{head}/{den}")
                }
            }
            Self::Radians(x) => write!(f, "{x:?}"),
        }
    }
}

/// When a blocker absorbs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Always,
    /// Only on the plate-present component; identity on plate-absent.
    WhenPlatePresent,
}

/// A circuit element with all modes resolved.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub enum Element {
    /// `[[cos t, i sin t], [i sin t, cos t]]` on `(a, b)`.
    BeamSplitter {
        a: ModeIdx,
        b: ModeIdx,
        theta: Angle,
    },
    PhaseShift {
        mode: ModeIdx,
        phi: Angle,
    },
    /// Swaps `mode` with its private sink on the controlled plate components.
    Blocker {
        mode: ModeIdx,
        control: Control,
        sink: ModeIdx,
    },
    /// Exchanges the amplitudes of two modes; with an empty target this is
    /// a move.
    Route {
        from: ModeIdx,
        to: ModeIdx,
    },
}

impl Element {
    pub fn modes(&self) -> smallmodes::Modes {
        match *self {
            Self::BeamSplitter { a, b, .. } => smallmodes::Modes::two(a, b),
            Self::PhaseShift { mode, .. } => smallmodes::Modes::one(mode),
            Self::Blocker { mode, sink, .. } => smallmodes::Modes::two(mode, sink),
            Self::Route { from, to } => smallmodes::Modes::two(from, to),
        }
    }

    pub fn adjoint(&self) -> Self {
        match *self {
            Self::BeamSplitter { a, b, theta } => Self::BeamSplitter { a, b, theta: theta.neg() },
            Self::PhaseShift { mode, phi } => Self::PhaseShift { mode, phi: phi.neg() },
            Self::Blocker { .. } => *self,
            Self::Route { from, to } => Self::Route { from: to, to: from },
        }
    }

    /// 2x2 matrix of a beam splitter, or `None` for other elements.
    pub fn beam_splitter_matrix(&self) -> Option<[[C64; 2]; 2]> {
        match self {
            Self::BeamSplitter { theta, .. } => {
                let (c, s) = theta.cos_sin();
                let c = C64::new(c, 0.0);
                let is = C64::new(0.0, s);
                Some([[c, is], [is, c]])
            }
            _ => None,
        }
    }

    /// Applies the element in place on a dense amplitude vector with plate
    /// dimension `d`.
    #[inline]
    pub(crate) fn apply(&self, amps: &mut [C64], d: usize) {
        match *self {
            Self::BeamSplitter { a, b, theta } => {
                let (cm1, s) = theta.versin_sin();
                let is = C64::new(0.0, s);
                for q in 0..d {
                    let (ka, kb) = (a.0 * d + q, b.0 * d + q);
                    let (x, y) = (amps[ka], amps[kb]);
                    amps[ka] = x + (x * cm1 + is * y);
                    amps[kb] = y + (y * cm1 + is * x);
                }
            }
            Self::PhaseShift { mode, phi } => {
                let (c, s) = phi.cos_sin();
                let e = C64::new(c, s);
                for q in 0..d {
                    amps[mode.0 * d + q] *= e;
                }
            }
            Self::Blocker { mode, control, sink } => {
                let plates = match control {
                    Control::Always => 0..d,
                    Control::WhenPlatePresent => PLATE_PRESENT..PLATE_PRESENT + 1,
                };
                for q in plates {
                    amps.swap(mode.0 * d + q, sink.0 * d + q);
                }
            }
            Self::Route { from, to } => {
                for q in 0..d {
                    amps.swap(from.0 * d + q, to.0 * d + q);
                }
            }
        }
    }

    /// Basis indices this element may change.
    #[inline]
    pub(crate) fn indices(&self, d: usize, out: &mut Vec<usize>) {
        for m in self.modes().iter() {
            for q in 0..d {
                out.push(m.0 * d + q);
            }
        }
    }
}

/// Tiny fixed-capacity mode list, avoids allocating per element.
pub mod smallmodes {
    use crate::statespace::ModeIdx;

    #[derive(Copy, Clone, Debug)]
    pub struct Modes {
        buf: [ModeIdx; 2],
        len: usize,
    }

    impl Modes {
        pub fn one(a: ModeIdx) -> Self {
            Self { buf: [a, a], len: 1 }
        }

        pub fn two(a: ModeIdx, b: ModeIdx) -> Self {
            Self { buf: [a, b], len: 2 }
        }

        pub fn iter(&self) -> impl Iterator<Item = ModeIdx> + '_ {
            self.buf[..self.len].iter().copied()
        }
    }
}

/// User-facing element description; blockers get their sink at build time.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Step {
    Bs(ModeIdx, ModeIdx, Angle),
    Phase(ModeIdx, Angle),
    Block(ModeIdx, Control),
    Route(ModeIdx, ModeIdx),
}

#[derive(Clone, Debug)]
pub struct Circuit {
    name: String,
    table: Arc<ModeTable>,
    plate: PlateDim,
    layers: Vec<Vec<Element>>,
    input: ModeIdx,
    detectors: Vec<ModeIdx>,
    markers: BTreeMap<String, usize>,
}

/// Incremental circuit construction with eager validation.
#[derive(Clone, Debug)]
pub struct CircuitBuilder {
    name: String,
    plate: PlateDim,
    table: ModeTable,
    layers: Vec<Vec<Step>>,
    layer_modes: HashSet<ModeIdx>,
    terminal_touched: HashSet<ModeIdx>,
    input: Option<ModeIdx>,
    detectors: Vec<ModeIdx>,
    markers: BTreeMap<String, usize>,
}

impl CircuitBuilder {
    pub fn new(name: &str, plate: PlateDim) -> Self {
        Self {
            name: name.to_string(),
            plate,
            table: ModeTable::new(),
            layers: Vec::new(),
            layer_modes: HashSet::new(),
            terminal_touched: HashSet::new(),
            input: None,
            detectors: Vec::new(),
            markers: BTreeMap::new(),
        }
    }

    pub fn plate_dim(&self) -> PlateDim {
        self.plate
    }

    pub fn set_plate_dim(&mut self, plate: PlateDim) {
        self.plate = plate;
    }

    pub fn mode(&mut self, label: &str, kind: ModeKind, region: Region) -> CircuitResult<ModeIdx> {
        if kind == ModeKind::Sink {
            return Err(CircuitError::NotPath { mode: label.into(), kind: "sink", role: "declaration" });
        }
        Ok(self.table.push(label, kind, region)?)
    }

    /// Declares a path mode; panics on duplicate labels (builder code only).
    pub fn path(&mut self, label: &str, region: Region) -> ModeIdx {
        self.mode(label, ModeKind::Path, region).expect("duplicate builder label")
    }

    pub fn detector(&mut self, label: &str, region: Region) -> ModeIdx {
        let m = self.mode(label, ModeKind::Detector, region).expect("duplicate builder label");
        self.detectors.push(m);
        m
    }

    pub fn lookup(&self, label: &str) -> CircuitResult<ModeIdx> {
        Ok(self.table.lookup(label)?)
    }

    pub fn table(&self) -> &ModeTable {
        &self.table
    }

    pub fn input(&mut self, m: ModeIdx) -> CircuitResult<()> {
        self.require_path(m, "input")?;
        self.input = Some(m);
        Ok(())
    }

    pub fn detect(&mut self, m: ModeIdx) -> CircuitResult<()> {
        let mode = self.table.get(m)?;
        if mode.kind != ModeKind::Detector {
            return Err(CircuitError::NotDetector(mode.label.clone()));
        }
        if !self.detectors.contains(&m) {
            self.detectors.push(m);
        }
        Ok(())
    }

    fn require_path(&self, m: ModeIdx, role: &'static str) -> CircuitResult<()> {
        let mode = self.table.get(m)?;
        if mode.kind != ModeKind::Path {
            return Err(CircuitError::NotPath { mode: mode.label.clone(), kind: mode.kind.as_str(), role });
        }
        Ok(())
    }

    /// Starts a new (possibly empty) layer.
    pub fn begin_layer(&mut self) {
        self.layers.push(Vec::new());
        self.layer_modes.clear();
    }

    /// Adds one element to the current layer.
    pub fn push(&mut self, step: Step) -> CircuitResult<()> {
        if self.layers.is_empty() {
            self.begin_layer();
        }
        let touched: Vec<ModeIdx> = match step {
            Step::Bs(a, b, _) => {
                if a == b {
                    return Err(CircuitError::DistinctModesRequired(self.table.get(a)?.label.clone()));
                }
                self.require_path(a, "beam splitter")?;
                self.require_path(b, "beam splitter")?;
                vec![a, b]
            }
            Step::Phase(m, _) => {
                self.require_path(m, "phase shift")?;
                vec![m]
            }
            Step::Block(m, control) => {
                self.require_path(m, "blocker")?;
                if control == Control::WhenPlatePresent && self.plate != PlateDim::Two {
                    return Err(CircuitError::PlateControlNeedsQubit(self.table.label(m).to_string()));
                }
                vec![m]
            }
            Step::Route(a, b) => {
                if a == b {
                    return Err(CircuitError::DistinctModesRequired(self.table.get(a)?.label.clone()));
                }
                let (ka, kb) = (self.table.get(a)?.kind, self.table.get(b)?.kind);
                if ka.is_terminal() && kb.is_terminal() {
                    return Err(CircuitError::TerminalRoute(
                        self.table.label(a).to_string(),
                        self.table.label(b).to_string(),
                    ));
                }
                vec![a, b]
            }
        };
        for &m in &touched {
            if self.layer_modes.contains(&m) {
                return Err(CircuitError::ModeCollision {
                    layer: self.layers.len(),
                    mode: self.table.label(m).to_string(),
                });
            }
            if self.table.mode(m).kind.is_terminal() && self.terminal_touched.contains(&m) {
                return Err(CircuitError::TerminalReused(self.table.label(m).to_string()));
            }
        }
        for &m in &touched {
            self.layer_modes.insert(m);
            if self.table.mode(m).kind.is_terminal() {
                self.terminal_touched.insert(m);
            }
        }
        self.layers.last_mut().unwrap().push(step);
        Ok(())
    }

    /// Appends a complete layer.
    pub fn layer(&mut self, steps: impl IntoIterator<Item = Step>) -> CircuitResult<usize> {
        self.begin_layer();
        for s in steps {
            self.push(s)?;
        }
        Ok(self.layers.len())
    }

    /// Names the current timestep (number of layers so far).
    pub fn mark(&mut self, name: &str) {
        self.markers.insert(name.to_string(), self.layers.len());
    }

    pub fn timestep(&self) -> usize {
        self.layers.len()
    }

    pub fn build(self) -> CircuitResult<Circuit> {
        let input = self.input.ok_or(CircuitError::MissingInput)?;
        if self.detectors.is_empty() {
            return Err(CircuitError::MissingDetectors);
        }
        let mut table = self.table;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, steps) in self.layers.into_iter().enumerate() {
            let mut out = Vec::with_capacity(steps.len());
            for step in steps {
                out.push(match step {
                    Step::Bs(a, b, theta) => Element::BeamSplitter { a, b, theta },
                    Step::Phase(mode, phi) => Element::PhaseShift { mode, phi },
                    Step::Route(from, to) => Element::Route { from, to },
                    Step::Block(mode, control) => {
                        let region = table.mode(mode).region;
                        let label = format!("{}@{}", table.label(mode), l + 1);
                        let sink = table.push(&label, ModeKind::Sink, region)?;
                        Element::Blocker { mode, control, sink }
                    }
                });
            }
            layers.push(out);
        }
        Ok(Circuit {
            name: self.name,
            table: Arc::new(table),
            plate: self.plate,
            layers,
            input,
            detectors: self.detectors,
            markers: self.markers,
        })
    }
}

/// Which way a [`Trajectory`] was computed.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Snapshots for `t = 0..=T`, stored as per-entry change histories.
///
/// Only a handful of entries change per layer, so this costs
/// `O(dim + touches)` memory instead of `O(dim * T)`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    direction: Direction,
    steps: usize,
    anchor: Vec<C64>,
    history: Vec<Vec<(u32, C64)>>,
    end: JointState,
}

impl Trajectory {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of layers `T`; snapshots exist for `0..=T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn table(&self) -> &Arc<ModeTable> {
        self.end.table()
    }

    pub fn plate_dim(&self) -> PlateDim {
        self.end.plate_dim()
    }

    /// Amplitude of basis entry `k` at time `t`.
    pub fn value(&self, k: usize, t: usize) -> C64 {
        let h = &self.history[k];
        let t = t as u32;
        let pos = match self.direction {
            Direction::Forward => h.partition_point(|e| e.0 <= t),
            Direction::Backward => h.partition_point(|e| e.0 >= t),
        };
        if pos == 0 {
            self.anchor[k]
        } else {
            h[pos - 1].1
        }
    }

    pub fn amplitude(&self, mode: ModeIdx, plate: usize, t: usize) -> C64 {
        self.value(mode.0 * self.plate_dim().dim() + plate, t)
    }

    pub fn snapshot(&self, t: usize) -> JointState {
        let amps = (0..self.anchor.len()).map(|k| self.value(k, t)).collect();
        JointState::from_amplitudes(self.end.table().clone(), self.end.plate_dim(), amps)
            .expect("trajectory dimensions are consistent")
    }

    /// State at `t = 0` for forward runs.
    pub fn initial(&self) -> JointState {
        match self.direction {
            Direction::Forward => self.snapshot(0),
            Direction::Backward => self.end.clone(),
        }
    }

    /// State at `t = T`.
    pub fn last(&self) -> JointState {
        match self.direction {
            Direction::Forward => self.end.clone(),
            Direction::Backward => self.snapshot(self.steps),
        }
    }

    /// Times at which entry `k` takes a new value, as interval starts in
    /// increasing order (always includes 0).
    pub(crate) fn breakpoints(&self, k: usize, out: &mut Vec<usize>) {
        out.push(0);
        match self.direction {
            Direction::Forward => out.extend(self.history[k].iter().map(|e| e.0 as usize)),
            // backward value for t <= tb changes at tb + 1
            Direction::Backward => out.extend(self.history[k].iter().rev().map(|e| e.0 as usize + 1)),
        }
    }
}

/// Result of [`Circuit::check_isometry`].
#[derive(Clone, Debug, Serialize)]
pub struct IsometryReport {
    pub columns: usize,
    pub worst_deviation: f64,
    pub passed: bool,
}

/// Final probabilities grouped for reporting.
#[derive(Clone, Debug, Serialize)]
pub struct Outcomes {
    /// Detector label to probability, in mode-table order.
    pub detectors: Vec<(String, f64)>,
    /// Total absorbed probability.
    pub sink: f64,
    /// Probability left on path modes (zero for well-formed circuits).
    pub residual: f64,
}

impl Outcomes {
    pub fn total(&self) -> f64 {
        self.detectors.iter().map(|d| d.1).sum::<f64>() + self.sink + self.residual
    }

    pub fn detector(&self, label: &str) -> Option<f64> {
        self.detectors.iter().find(|d| d.0 == label).map(|d| d.1)
    }

    /// Flat map as emitted by the CLI: detector labels, `sink`, and
    /// `residual` when nonzero.
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> = self.detectors.iter().cloned().collect();
        m.insert("sink".into(), self.sink);
        if self.residual > 0.0 {
            m.insert("residual".into(), self.residual);
        }
        m
    }
}

impl Circuit {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn table(&self) -> &Arc<ModeTable> {
        &self.table
    }

    pub fn plate_dim(&self) -> PlateDim {
        self.plate
    }

    pub fn layers(&self) -> &[Vec<Element>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input(&self) -> ModeIdx {
        self.input
    }

    pub fn detectors(&self) -> &[ModeIdx] {
        &self.detectors
    }

    pub fn markers(&self) -> &BTreeMap<String, usize> {
        &self.markers
    }

    pub fn marker(&self, name: &str) -> Option<usize> {
        self.markers.get(name).copied()
    }

    pub fn mode(&self, label: &str) -> CircuitResult<ModeIdx> {
        Ok(self.table.lookup(label)?)
    }

    pub fn label(&self, m: ModeIdx) -> &str {
        self.table.label(m)
    }

    pub fn dim(&self) -> usize {
        self.table.len() * self.plate.dim()
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn regions(&self) -> Vec<Region> {
        self.table.iter().map(|m| m.region).collect()
    }

    pub fn sinks(&self) -> impl Iterator<Item = ModeIdx> + '_ {
        self.table.of_kind(ModeKind::Sink)
    }

    fn check_state(&self, s: &JointState) -> CircuitResult<()> {
        let same = s.plate_dim() == self.plate
            && s.len() == self.dim()
            && (Arc::ptr_eq(s.table(), &self.table) || **s.table() == *self.table);
        if same {
            Ok(())
        } else {
            Err(StateError::SpaceMismatch.into())
        }
    }

    /// Builds a product input on the declared input mode.
    pub fn input_state(&self, plate: crate::statespace::PlateState) -> CircuitResult<JointState> {
        Ok(JointState::basis_at(self.table.clone(), self.plate, self.input, plate)?)
    }

    /// Final state only, no history.
    pub fn propagate(&self, input: &JointState) -> CircuitResult<JointState> {
        self.propagate_range(input, 0, self.depth())
    }

    /// Applies layers `from+1 ..= to` to a state taken as the snapshot at
    /// time `from`.
    pub fn propagate_range(&self, state: &JointState, from: usize, to: usize) -> CircuitResult<JointState> {
        self.check_state(state)?;
        if from > to || to > self.depth() {
            return Err(CircuitError::TimestepOutOfRange(to, self.depth()));
        }
        let d = self.plate.dim();
        let mut s = state.clone();
        let amps = s.amplitudes_mut();
        for layer in &self.layers[from..to] {
            for el in layer {
                el.apply(amps, d);
            }
        }
        Ok(s)
    }

    /// Forward propagation with a phase `e^{i eps}` applied to `mode` (all
    /// plate components) at snapshot time `t`, i.e. between layers `t` and
    /// `t + 1`.
    pub fn propagate_with_kick(
        &self,
        input: &JointState,
        t: usize,
        mode: ModeIdx,
        eps: f64,
    ) -> CircuitResult<JointState> {
        if t > self.depth() {
            return Err(CircuitError::TimestepOutOfRange(t, self.depth()));
        }
        let mut s = self.propagate_range(input, 0, t)?;
        let d = self.plate.dim();
        let e = C64::new(eps.cos(), eps.sin());
        for q in 0..d {
            s.amplitudes_mut()[mode.0 * d + q] *= e;
        }
        self.propagate_range(&s, t, self.depth())
    }

    /// Forward trajectory from a state supported on path modes.
    pub fn run_forward(&self, input: &JointState) -> CircuitResult<Trajectory> {
        self.check_state(input)?;
        for (m, _, _) in input.nonzero() {
            if self.table.mode(m).kind.is_terminal() {
                return Err(CircuitError::InputOnTerminal(self.table.label(m).to_string()));
            }
        }
        Ok(self.record(input.clone(), Direction::Forward))
    }

    /// Backward trajectory of the post-selection `|post_mode> (x) plate`.
    ///
    /// With `post_plate = None` on a qubit plate the post-selection vector
    /// is `|post_mode> (x) (|0> + |1>)`: since no element changes the plate,
    /// its plate-`q` component is exactly the backward state of the
    /// post-selection on `(post_mode, q)`.
    pub fn run_backward(&self, post_mode: ModeIdx, post_plate: Option<usize>) -> CircuitResult<Trajectory> {
        let mode = self.table.get(post_mode)?;
        match mode.kind {
            ModeKind::Sink => return Err(CircuitError::PostOnSink(mode.label.clone())),
            ModeKind::Path => return Err(CircuitError::NotDetector(mode.label.clone())),
            ModeKind::Detector => {}
        }
        let d = self.plate.dim();
        let mut post = JointState::zero(self.table.clone(), self.plate);
        match post_plate {
            Some(q) if q >= d => return Err(StateError::PlateUnavailable(q, d).into()),
            Some(q) => post.amplitudes_mut()[post_mode.0 * d + q] = C64::new(1.0, 0.0),
            None => {
                for q in 0..d {
                    post.amplitudes_mut()[post_mode.0 * d + q] = C64::new(1.0, 0.0);
                }
            }
        }
        Ok(self.record(post, Direction::Backward))
    }

    fn record(&self, start: JointState, direction: Direction) -> Trajectory {
        let d = self.plate.dim();
        let n = start.len();
        let anchor = start.amplitudes().to_vec();
        let mut history: Vec<Vec<(u32, C64)>> = vec![Vec::new(); n];
        let mut cur = start;
        let mut idx = Vec::with_capacity(8);
        let mut old = Vec::with_capacity(8);
        let depth = self.depth();
        let order: Box<dyn Iterator<Item = usize>> = match direction {
            Direction::Forward => Box::new(0..depth),
            Direction::Backward => Box::new((0..depth).rev()),
        };
        for l in order {
            // forward: layer l produces snapshot l+1; backward: its adjoint produces snapshot l
            let t = match direction {
                Direction::Forward => l + 1,
                Direction::Backward => l,
            } as u32;
            for el in &self.layers[l] {
                let el = match direction {
                    Direction::Forward => *el,
                    Direction::Backward => el.adjoint(),
                };
                idx.clear();
                old.clear();
                el.indices(d, &mut idx);
                let amps = cur.amplitudes_mut();
                old.extend(idx.iter().map(|&k| amps[k]));
                el.apply(amps, d);
                for (&k, &o) in idx.iter().zip(&old) {
                    let v = amps[k];
                    if v != o {
                        history[k].push((t, v));
                    }
                }
            }
        }
        Trajectory { direction, steps: depth, anchor, history, end: cur }
    }

    /// Final-state outcome probabilities.
    pub fn outcomes(&self, final_state: &JointState) -> Outcomes {
        let mut detectors = Vec::new();
        let mut sink = 0.0;
        let mut residual = 0.0;
        for m in self.table.iter() {
            let p = final_state.mode_probability(m.index);
            match m.kind {
                ModeKind::Detector => detectors.push((m.label.clone(), p)),
                ModeKind::Sink => sink += p,
                ModeKind::Path => residual += p,
            }
        }
        Outcomes { detectors, sink, residual }
    }

    /// Basis states `(path mode, plate)`: the admissible inputs.
    pub fn input_basis(&self) -> Vec<(ModeIdx, usize)> {
        let d = self.plate.dim();
        self.table.of_kind(ModeKind::Path).flat_map(|m| (0..d).map(move |q| (m, q))).collect()
    }

    /// Images of the path-mode basis states under the full circuit.
    pub fn transfer_columns(&self) -> Vec<JointState> {
        let d = self.plate.dim();
        self.input_basis()
            .into_iter()
            .map(|(m, q)| {
                let mut s = JointState::zero(self.table.clone(), self.plate);
                s.amplitudes_mut()[m.0 * d + q] = C64::new(1.0, 0.0);
                self.propagate(&s).expect("own space")
            })
            .collect()
    }

    /// Orthonormality of the transfer-map columns over the path-mode inputs.
    pub fn check_isometry(&self) -> IsometryReport {
        let cols = self.transfer_columns();
        let mut worst = 0.0f64;
        for i in 0..cols.len() {
            for j in i..cols.len() {
                let g = cols[i].inner_product(&cols[j]).expect("own space");
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - C64::new(target, 0.0)).norm());
            }
        }
        IsometryReport { columns: cols.len(), worst_deviation: worst, passed: worst <= ISOMETRY_TOL }
    }

    /// Largest entrywise difference between the transfer maps of two
    /// circuits over identical mode tables.
    pub fn transfer_distance(&self, other: &Circuit) -> CircuitResult<f64> {
        if *self.table != *other.table || self.plate != other.plate {
            return Err(CircuitError::MismatchedCircuits);
        }
        let a = self.transfer_columns();
        let b = other.transfer_columns();
        let mut worst = 0.0f64;
        for (x, y) in a.iter().zip(&b) {
            let diff = x.amplitudes().iter().zip(y.amplitudes()).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
            worst = worst.max(diff);
        }
        Ok(worst)
    }

    /// Exact adjoint: layers reversed, each element replaced by its adjoint.
    /// Blockers become maps from their sink back to the path.
    pub fn invert(&self) -> Circuit {
        let layers = self.layers.iter().rev().map(|layer| layer.iter().map(Element::adjoint).collect()).collect();
        let depth = self.depth();
        let markers = self.markers.iter().map(|(k, &t)| (k.clone(), depth - t)).collect();
        Circuit {
            name: format!("{}^-1", self.name),
            table: self.table.clone(),
            plate: self.plate,
            layers,
            input: self.input,
            detectors: self.detectors.clone(),
            markers,
        }
    }

    /// `self` followed by `next` on the same mode table.
    pub fn then(&self, next: &Circuit) -> CircuitResult<Circuit> {
        if *self.table != *next.table || self.plate != next.plate {
            return Err(CircuitError::MismatchedCircuits);
        }
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Ok(Circuit {
            name: format!("{};{}", self.name, next.name),
            table: self.table.clone(),
            plate: self.plate,
            layers,
            input: self.input,
            detectors: self.detectors.clone(),
            markers: self.markers.clone(),
        })
    }

    /// Last snapshot before any blocker acts, or `T` without blockers.
    pub fn last_pre_absorption(&self) -> usize {
        self.layers.iter().position(|l| l.iter().any(|e| matches!(e, Element::Blocker { .. }))).unwrap_or(self.depth())
    }

    /// Undirected mode-adjacency: modes coupled by any element.
    pub fn adjacency(&self) -> Vec<Vec<ModeIdx>> {
        let mut adj: Vec<HashSet<ModeIdx>> = vec![HashSet::new(); self.table.len()];
        for el in self.layers.iter().flatten() {
            let ms: Vec<_> = el.modes().iter().collect();
            if let [a, b] = ms[..] {
                adj[a.0].insert(b);
                adj[b.0].insert(a);
            }
        }
        adj.into_iter()
            .map(|s| {
                let mut v: Vec<_> = s.into_iter().collect();
                v.sort();
                v
            })
            .collect()
    }
}

/// Exchanges `x` and `y` when they appear as the label or its prefix before
/// a `.`/`@` separator.
pub fn swap_label(label: &str, x: &str, y: &str) -> String {
    let cut = label.find(['.', '@']).unwrap_or(label.len());
    let (head, tail) = label.split_at(cut);
    let head = if head == x {
        y
    } else if head == y {
        x
    } else {
        head
    };
    format!("{head}{tail}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::PlateState;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn mzi(blocked: bool) -> Circuit {
        let mut b = CircuitBuilder::new("mzi", PlateDim::One);
        let l = b.path("L", Region::Alice);
        let r = b.path("R", Region::Bob);
        let d = b.detector("D", Region::Alice);
        let o = b.detector("other", Region::Alice);
        b.input(l).unwrap();
        b.layer([Step::Bs(l, r, Angle::pi_frac(1, 4))]).unwrap();
        if blocked {
            b.layer([Step::Block(r, Control::Always)]).unwrap();
        } else {
            b.begin_layer();
        }
        b.layer([Step::Bs(l, r, Angle::pi_frac(1, 4))]).unwrap();
        b.layer([Step::Route(l, d), Step::Route(r, o)]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn beam_splitter_is_unitary() {
        for theta in [Angle::pi_frac(1, 4), Angle::pi_frac(1, 7), Angle::radians(0.3), Angle::pi_frac(-3, 5)] {
            let el = Element::BeamSplitter { a: ModeIdx(0), b: ModeIdx(1), theta };
            let u = el.beam_splitter_matrix().unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let g: C64 = (0..2).map(|k| u[k][i].conj() * u[k][j]).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((g - C64::new(id, 0.0)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn exact_quarter_turns() {
        assert_eq!(Angle::pi_frac(1, 2).cos_sin(), (0.0, 1.0));
        assert_eq!(Angle::pi_frac(-1, 2).cos_sin(), (0.0, -1.0));
        assert_eq!(Angle::pi_frac(3, 1).cos_sin(), (-1.0, 0.0));
        assert_eq!(Angle::pi_frac(2, 4), Angle::pi_frac(1, 2));
    }

    #[test]
    fn angle_display() {
        assert_eq!(Angle::pi_frac(1, 4).to_string(), "pi/4");
        assert_eq!(Angle::pi_frac(-1, 2).to_string(), "-pi/2");
        assert_eq!(Angle::pi_frac(3, 4).to_string(), "3*pi/4");
        assert_eq!(Angle::pi_frac(0, 4).to_string(), "0");
        assert_eq!(Angle::pi_frac(1, 1).to_string(), "pi");
    }

    #[test]
    fn blocked_mzi_distribution() {
        let c = mzi(true);
        let out = c.propagate(&c.input_state(PlateState::Absent).unwrap()).unwrap();
        let o = c.outcomes(&out);
        assert!((o.detector("D").unwrap() - 0.25).abs() < 1e-12);
        assert!((o.detector("other").unwrap() - 0.25).abs() < 1e-12);
        assert!((o.sink - 0.5).abs() < 1e-12);
        assert!((o.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_layer_rejected() {
        let mut b = CircuitBuilder::new("bad", PlateDim::One);
        let l = b.path("L", Region::Alice);
        let r = b.path("R", Region::Alice);
        let x = b.path("X", Region::Alice);
        b.begin_layer();
        b.push(Step::Bs(l, r, Angle::pi_frac(1, 4))).unwrap();
        let err = b.push(Step::Bs(r, x, Angle::pi_frac(1, 4))).unwrap_err();
        assert!(matches!(err, CircuitError::ModeCollision { .. }));
        assert!(matches!(b.push(Step::Bs(x, x, Angle::pi_frac(1, 4))), Err(CircuitError::DistinctModesRequired(_))));
    }

    #[test]
    fn detectors_are_terminal() {
        let mut b = CircuitBuilder::new("bad", PlateDim::One);
        let l = b.path("L", Region::Alice);
        let r = b.path("R", Region::Alice);
        let d = b.detector("D", Region::Alice);
        b.layer([Step::Route(l, d)]).unwrap();
        assert!(matches!(b.layer([Step::Route(r, d)]), Err(CircuitError::TerminalReused(_))));
        assert!(matches!(b.push(Step::Bs(l, d, Angle::pi_frac(1, 4))), Err(CircuitError::NotPath { .. })));
    }

    #[test]
    fn plate_control_needs_qubit() {
        let mut b = CircuitBuilder::new("bad", PlateDim::One);
        let l = b.path("L", Region::Alice);
        assert!(matches!(
            b.layer([Step::Block(l, Control::WhenPlatePresent)]),
            Err(CircuitError::PlateControlNeedsQubit(_))
        ));
    }

    #[test]
    fn backward_end_is_post_state() {
        let c = mzi(true);
        let d = c.mode("D").unwrap();
        let bw = c.run_backward(d, None).unwrap();
        let s = bw.snapshot(c.depth());
        assert_eq!(s.amplitude(d, 0), C64::new(1.0, 0.0));
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(matches!(c.run_backward(c.mode("R@2").unwrap(), None), Err(CircuitError::PostOnSink(_))));
        assert!(matches!(c.run_backward(c.mode("L").unwrap(), None), Err(CircuitError::NotDetector(_))));
    }

    #[test]
    fn two_state_overlap_is_constant() {
        let c = mzi(true);
        let fw = c.run_forward(&c.input_state(PlateState::Absent).unwrap()).unwrap();
        let bw = c.run_backward(c.mode("D").unwrap(), None).unwrap();
        for t in 0..=c.depth() {
            let amp = bw.snapshot(t).inner_product(&fw.snapshot(t)).unwrap();
            assert!((amp - C64::new(0.5, 0.0)).norm() < 1e-12, "t={t} amp={amp}");
        }
        // backward amplitude upstream of the blocker vanishes
        let r = c.mode("R").unwrap();
        assert_eq!(bw.amplitude(r, 0, 1), C64::new(0.0, 0.0));
    }

    #[test]
    fn invert_recovers_input() {
        let c = mzi(false);
        let inv = c.invert();
        let s = c.input_state(PlateState::Absent).unwrap();
        let back = inv.propagate(&c.propagate(&s).unwrap()).unwrap();
        assert!((back.fidelity(&s).unwrap() - 1.0).abs() < 1e-12);
        let twice = inv.invert();
        assert_eq!(twice.layers(), c.layers());
        let round = c.then(&inv).unwrap();
        assert!(round.check_isometry().passed);
    }

    #[test]
    fn forward_snapshots_match_dense_products() {
        let c = mzi(true);
        let s = c.input_state(PlateState::Absent).unwrap();
        let fw = c.run_forward(&s).unwrap();
        for t in 0..=c.depth() {
            let direct = c.propagate_range(&s, 0, t).unwrap();
            assert!(fw.snapshot(t).max_abs_diff(&direct).unwrap() < 1e-15);
        }
        let l = c.mode("L").unwrap();
        assert!((fw.amplitude(l, 0, 1) - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn swap_label_prefixes() {
        assert_eq!(swap_label("A.in", "A", "C"), "C.in");
        assert_eq!(swap_label("C", "A", "C"), "A");
        assert_eq!(swap_label("A@6", "A", "C"), "C@6");
        assert_eq!(swap_label("AB", "A", "C"), "AB");
    }
}
