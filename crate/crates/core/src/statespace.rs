//! Modes, regions, the plate ancilla and the joint amplitude vector.
//!
//! A [`JointState`] is a dense complex vector over `(mode, plate)` pairs.
//! Sink modes are ordinary entries of the same vector, so absorption is
//! bookkept exactly and the total norm is conserved by every layer.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

/// Post-selection probability below which a branch counts as empty.
pub const EMPTY_BRANCH_PROBABILITY: f64 = 1e-15;

/// Tolerance used when checking that a state is normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("mode index {0} out of range")]
    ModeOutOfRange(usize),

    #[error("duplicate mode label `{0}`")]
    DuplicateMode(String),

    #[error("states live in different spaces")]
    SpaceMismatch,

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("plate basis state {0} does not exist for plate dimension {1}")]
    PlateUnavailable(usize, usize),

    #[error("plate preparation must satisfy |alpha|^2 + |beta|^2 = 1 (got {0})")]
    InvalidPreparation(f64),

    #[error("projection selects no modes")]
    EmptySelection,

    /// Zero-probability post-selection. Dark-port checks hit this routinely.
    #[error("empty branch (probability {probability:e})")]
    EmptyBranch { probability: f64 },
}

pub type StateResult<T> = Result<T, StateError>;

/// Position of a mode in its [`ModeTable`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ModeIdx(pub usize);

impl From<usize> for ModeIdx {
    fn from(k: usize) -> Self {
        Self(k)
    }
}

impl fmt::Display for ModeIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Path,
    Detector,
    Sink,
}

impl ModeKind {
    /// Detectors and sinks are terminal: once written they are never read again.
    pub fn is_terminal(self) -> bool {
        !matches!(self, Self::Path)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Path => "path",
            Self::Detector => "detector",
            Self::Sink => "sink",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Alice,
    Channel,
    Bob,
    Internal,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Alice, Region::Channel, Region::Bob, Region::Internal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Alice => "alice",
            Self::Channel => "channel",
            Self::Bob => "bob",
            Self::Internal => "internal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One spatial segment of the interferometer, or a terminal mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mode {
    pub index: ModeIdx,
    pub label: String,
    pub kind: ModeKind,
    pub region: Region,
}

/// Ordered, label-addressable list of modes. Indices are contiguous from 0.
#[derive(Clone, Debug, Default)]
pub struct ModeTable {
    modes: Vec<Mode>,
    by_label: HashMap<String, usize>,
}

impl PartialEq for ModeTable {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes
    }
}

impl ModeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: &str, kind: ModeKind, region: Region) -> StateResult<ModeIdx> {
        if self.by_label.contains_key(label) {
            return Err(StateError::DuplicateMode(label.to_string()));
        }
        let index = ModeIdx(self.modes.len());
        self.by_label.insert(label.to_string(), index.0);
        self.modes.push(Mode { index, label: label.to_string(), kind, region });
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn get(&self, idx: ModeIdx) -> StateResult<&Mode> {
        self.modes.get(idx.0).ok_or(StateError::ModeOutOfRange(idx.0))
    }

    pub fn mode(&self, idx: ModeIdx) -> &Mode {
        &self.modes[idx.0]
    }

    pub fn lookup(&self, label: &str) -> StateResult<ModeIdx> {
        self.by_label.get(label).map(|&k| ModeIdx(k)).ok_or_else(|| StateError::UnknownMode(label.to_string()))
    }

    pub fn label(&self, idx: ModeIdx) -> &str {
        &self.modes[idx.0].label
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter()
    }

    pub fn of_kind(&self, kind: ModeKind) -> impl Iterator<Item = ModeIdx> + '_ {
        self.modes.iter().filter(move |m| m.kind == kind).map(|m| m.index)
    }

    pub fn in_region(&self, region: Region) -> impl Iterator<Item = ModeIdx> + '_ {
        self.modes.iter().filter(move |m| m.region == region).map(|m| m.index)
    }
}

/// Dimension of the plate ancilla: trivial for classical blockers, a qubit
/// when Bob's plate is treated quantum mechanically.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PlateDim {
    One,
    Two,
}

impl PlateDim {
    pub fn dim(self) -> usize {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }

    pub fn from_dim(d: usize) -> Option<Self> {
        match d {
            1 => Some(Self::One),
            2 => Some(Self::Two),
            _ => None,
        }
    }
}

/// Plate basis index for "no plate in O".
pub const PLATE_ABSENT: usize = 0;
/// Plate basis index for "plate in O".
pub const PLATE_PRESENT: usize = 1;

/// `alpha |present> + beta |absent>`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct PlatePreparation {
    alpha: C64,
    beta: C64,
}

impl PlatePreparation {
    pub fn new(alpha: C64, beta: C64) -> StateResult<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(StateError::InvalidPreparation(n));
        }
        Ok(Self { alpha, beta })
    }

    /// Rescales a nonzero pair onto the unit sphere. Handy for CLI input
    /// like `--alpha 0.7071 --beta 0.7071`.
    pub fn normalized(alpha: C64, beta: C64) -> StateResult<Self> {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if n < 1e-300 {
            return Err(StateError::InvalidPreparation(0.0));
        }
        Self::new(alpha / n, beta / n)
    }

    pub fn equal_superposition() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { alpha: h, beta: h }
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn beta(&self) -> C64 {
        self.beta
    }

    /// Amplitudes indexed by plate basis (absent, present).
    pub fn components(&self) -> [C64; 2] {
        [self.beta, self.alpha]
    }
}

/// Plate factor of a product input state.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum PlateState {
    Absent,
    Present,
    Prepared(PlatePreparation),
}

impl PlateState {
    fn amplitudes(&self, dim: PlateDim) -> StateResult<Vec<C64>> {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        match (self, dim) {
            (Self::Absent, PlateDim::One) => Ok(vec![one]),
            (Self::Absent, PlateDim::Two) => Ok(vec![one, zero]),
            (Self::Present, PlateDim::Two) => Ok(vec![zero, one]),
            (Self::Prepared(p), PlateDim::Two) => Ok(p.components().to_vec()),
            (Self::Present, PlateDim::One) => Err(StateError::PlateUnavailable(PLATE_PRESENT, 1)),
            (Self::Prepared(_), PlateDim::One) => Err(StateError::PlateUnavailable(PLATE_PRESENT, 1)),
        }
    }
}

/// The simulator's universal value: amplitudes over `(mode, plate)`.
#[derive(Clone, Debug)]
pub struct JointState {
    table: Arc<ModeTable>,
    plate: PlateDim,
    amps: Vec<C64>,
}

impl JointState {
    pub fn zero(table: Arc<ModeTable>, plate: PlateDim) -> Self {
        let n = table.len() * plate.dim();
        Self { table, plate, amps: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn from_amplitudes(table: Arc<ModeTable>, plate: PlateDim, amps: Vec<C64>) -> StateResult<Self> {
        if amps.len() != table.len() * plate.dim() {
            return Err(StateError::SpaceMismatch);
        }
        Ok(Self { table, plate, amps })
    }

    /// Unit-norm product state `|mode> (x) plate`.
    pub fn basis(table: Arc<ModeTable>, plate_dim: PlateDim, label: &str, plate: PlateState) -> StateResult<Self> {
        let mode = table.lookup(label)?;
        Self::basis_at(table, plate_dim, mode, plate)
    }

    pub fn basis_at(table: Arc<ModeTable>, plate_dim: PlateDim, mode: ModeIdx, plate: PlateState) -> StateResult<Self> {
        table.get(mode)?;
        let factor = plate.amplitudes(plate_dim)?;
        let mut s = Self::zero(table, plate_dim);
        for (q, a) in factor.into_iter().enumerate() {
            let k = s.index(mode, q);
            s.amps[k] = a;
        }
        Ok(s)
    }

    pub fn table(&self) -> &Arc<ModeTable> {
        &self.table
    }

    pub fn plate_dim(&self) -> PlateDim {
        self.plate
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    #[inline]
    pub fn index(&self, mode: ModeIdx, plate: usize) -> usize {
        mode.0 * self.plate.dim() + plate
    }

    /// Inverse of [`Self::index`].
    #[inline]
    pub fn split_index(&self, k: usize) -> (ModeIdx, usize) {
        let d = self.plate.dim();
        (ModeIdx(k / d), k % d)
    }

    pub fn amplitude(&self, mode: ModeIdx, plate: usize) -> C64 {
        self.amps[self.index(mode, plate)]
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability carried by one mode, summed over the plate basis.
    pub fn mode_probability(&self, mode: ModeIdx) -> f64 {
        (0..self.plate.dim()).map(|q| self.amplitude(mode, q).norm_sqr()).sum()
    }

    pub fn same_space(&self, other: &Self) -> bool {
        self.plate == other.plate
            && self.amps.len() == other.amps.len()
            && (Arc::ptr_eq(&self.table, &other.table) || *self.table == *other.table)
    }

    fn check_space(&self, other: &Self) -> StateResult<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(StateError::SpaceMismatch)
        }
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &Self) -> StateResult<C64> {
        self.check_space(other)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> StateResult<Self> {
        self.check_space(other)?;
        let amps = self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect();
        Ok(Self { table: self.table.clone(), plate: self.plate, amps })
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { table: self.table.clone(), plate: self.plate, amps: self.amps.iter().map(|a| a * c).collect() }
    }

    /// Restriction of the state to `modes` (and optionally one plate basis
    /// state), left unnormalized.
    pub fn project(&self, modes: &[ModeIdx], plate: Option<usize>) -> StateResult<Projection> {
        if modes.is_empty() {
            return Err(StateError::EmptySelection);
        }
        let d = self.plate.dim();
        if let Some(q) = plate {
            if q >= d {
                return Err(StateError::PlateUnavailable(q, d));
            }
        }
        let mut out = Self::zero(self.table.clone(), self.plate);
        for &m in modes {
            self.table.get(m)?;
            for q in 0..d {
                if plate.is_some_and(|p| p != q) {
                    continue;
                }
                let k = self.index(m, q);
                out.amps[k] = self.amps[k];
            }
        }
        let probability = out.norm_sqr();
        Ok(Projection { state: out, probability })
    }

    /// Projection onto a set of `(mode, plate)` pairs.
    pub fn project_pairs(&self, pairs: &[(ModeIdx, usize)]) -> StateResult<Projection> {
        if pairs.is_empty() {
            return Err(StateError::EmptySelection);
        }
        let d = self.plate.dim();
        let mut out = Self::zero(self.table.clone(), self.plate);
        for &(m, q) in pairs {
            self.table.get(m)?;
            if q >= d {
                return Err(StateError::PlateUnavailable(q, d));
            }
            let k = self.index(m, q);
            out.amps[k] = self.amps[k];
        }
        let probability = out.norm_sqr();
        Ok(Projection { state: out, probability })
    }

    pub fn normalized(&self) -> StateResult<Self> {
        let p = self.norm_sqr();
        if p < EMPTY_BRANCH_PROBABILITY {
            return Err(StateError::EmptyBranch { probability: p });
        }
        Ok(self.scale(C64::new(1.0 / p.sqrt(), 0.0)))
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// `|<a|b>|^2` for normalized inputs.
    pub fn fidelity(&self, other: &Self) -> StateResult<f64> {
        for s in [self, other] {
            if !s.is_normalized() {
                return Err(StateError::NotNormalized(s.norm_sqr()));
            }
        }
        Ok(self.inner_product(other)?.norm_sqr().min(1.0))
    }

    /// Nonzero entries as `(mode, plate, amplitude)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (ModeIdx, usize, C64)> + '_ {
        let d = self.plate.dim();
        self.amps.iter().enumerate().filter(|(_, a)| a.norm_sqr() > 0.0).map(move |(k, a)| (ModeIdx(k / d), k % d, *a))
    }

    /// Largest entrywise difference to another state in the same space.
    pub fn max_abs_diff(&self, other: &Self) -> StateResult<f64> {
        self.check_space(other)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }
}

/// Unnormalized post-selected branch.
#[derive(Clone, Debug)]
pub struct Projection {
    pub state: JointState,
    pub probability: f64,
}

impl Projection {
    pub fn is_empty(&self) -> bool {
        self.probability < EMPTY_BRANCH_PROBABILITY
    }

    /// Renormalized branch, or the empty-branch signal.
    pub fn normalized(&self) -> StateResult<JointState> {
        if self.is_empty() {
            return Err(StateError::EmptyBranch { probability: self.probability });
        }
        Ok(self.state.scale(C64::new(1.0 / self.probability.sqrt(), 0.0)))
    }
}
