//! Forward/backward state pairs, weak values, trace maps and
//! counterfactuality verdicts.

use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{swap_label, Circuit, CircuitError, Trajectory};
use crate::statespace::{JointState, ModeIdx, ModeKind, ModeTable, PlateState, Region, StateError};

/// Below this the post-selected amplitude counts as zero.
pub const UNDEFINED_AMPLITUDE: f64 = 1e-15;

/// Default presence threshold, relative to the largest overlap of a run.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Phase step of the finite-difference oracle.
pub const ORACLE_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsvfError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("undefined weak values: post-selected amplitude {amplitude} is zero")]
    UndefinedWeakValues { amplitude: C64 },
    #[error("region list covers {got} modes, circuit has {expected}")]
    RegionsIncomplete { got: usize, expected: usize },
    #[error("circuit has no arm `{0}`")]
    UnknownArm(String),
    #[error("circuit has no `{0}` marker")]
    MissingMarker(&'static str),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

pub type TsvfResult<T> = Result<T, TsvfError>;

/// Forward and backward trajectories for one pre- and post-selection.
#[derive(Clone, Debug)]
pub struct TwoStateTrajectory {
    pub forward: Trajectory,
    pub backward: Trajectory,
    post_mode: ModeIdx,
    post_plate: Option<usize>,
    /// Per plate component of the post-selection; `None` where not selected.
    branch: Vec<Option<C64>>,
}

fn undefined(a: C64) -> bool {
    a.norm() < UNDEFINED_AMPLITUDE
}

/// Runs both directions. With `post_plate = None` every plate component of
/// the detector is post-selected (the plate is traced out).
pub fn two_state_trajectory(
    circuit: &Circuit,
    input: &JointState,
    post_mode: ModeIdx,
    post_plate: Option<usize>,
) -> TsvfResult<TwoStateTrajectory> {
    let forward = circuit.run_forward(input)?;
    let backward = circuit.run_backward(post_mode, post_plate)?;
    let d = circuit.plate_dim().dim();
    let t = circuit.depth();
    let branch: Vec<Option<C64>> = (0..d)
        .map(|q| match post_plate {
            Some(p) if p != q => None,
            _ => Some(forward.amplitude(post_mode, q, t)),
        })
        .collect();
    let tst = TwoStateTrajectory { forward, backward, post_mode, post_plate, branch };
    if tst.branch.iter().flatten().all(|&a| undefined(a)) {
        return Err(TsvfError::UndefinedWeakValues { amplitude: tst.amplitude() });
    }
    Ok(tst)
}

impl TwoStateTrajectory {
    pub fn post_mode(&self) -> ModeIdx {
        self.post_mode
    }

    pub fn post_plate(&self) -> Option<usize> {
        self.post_plate
    }

    /// `<post|U|input>` with the post-selection summed over the selected
    /// plate components.
    pub fn amplitude(&self) -> C64 {
        self.branch.iter().flatten().sum()
    }

    /// Post-selected amplitude of plate component `q`.
    pub fn branch_amplitude(&self, q: usize) -> Option<C64> {
        self.branch.get(q).copied().flatten()
    }

    /// Probability of the post-selection (plate traced when unspecified).
    pub fn probability(&self) -> f64 {
        self.branch.iter().flatten().map(|a| a.norm_sqr()).sum()
    }

    pub fn steps(&self) -> usize {
        self.forward.steps()
    }

    /// `conj(backward) * forward` at `(mode, plate, t)`.
    pub fn overlap(&self, mode: ModeIdx, plate: usize, t: usize) -> C64 {
        self.backward.amplitude(mode, plate, t).conj() * self.forward.amplitude(mode, plate, t)
    }

    /// Weak value of the projector on `mode` at snapshot `t`. With a plate
    /// index the projector is restricted to that component and normalized
    /// by its own branch amplitude.
    pub fn weak_value(&self, mode: ModeIdx, t: usize, plate: Option<usize>) -> TsvfResult<C64> {
        match plate {
            Some(q) => {
                let amp = self.branch_amplitude(q).unwrap_or_default();
                if undefined(amp) {
                    return Err(TsvfError::UndefinedWeakValues { amplitude: amp });
                }
                Ok(self.overlap(mode, q, t) / amp)
            }
            None => {
                let amp = self.amplitude();
                if undefined(amp) {
                    return Err(TsvfError::UndefinedWeakValues { amplitude: amp });
                }
                let d = self.branch.len();
                Ok((0..d).map(|q| self.overlap(mode, q, t)).sum::<C64>() / amp)
            }
        }
    }

    /// Sum of projector weak values over all modes at `t`.
    pub fn weak_value_sum(&self, t: usize, plate: Option<usize>) -> TsvfResult<C64> {
        let n = self.forward.table().len();
        (0..n).map(|m| self.weak_value(ModeIdx(m), t, plate)).sum()
    }

    /// `<backward(t)|forward(t)>` from full snapshots.
    pub fn inner_at(&self, t: usize) -> C64 {
        self.backward.snapshot(t).inner_product(&self.forward.snapshot(t)).expect("same space")
    }
}

/// One span of constant forward and backward amplitude, `t..=t_end`.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub mode: ModeIdx,
    pub plate: usize,
    pub t: usize,
    pub t_end: usize,
    pub forward: C64,
    pub backward: C64,
    pub overlap: C64,
    pub weak_value: Option<C64>,
    pub present: bool,
}

/// Location-time overlap record of one two-state run. Sink modes are left
/// out (their backward amplitude is identically zero), as are spans where
/// both amplitudes vanish.
#[derive(Clone, Debug)]
pub struct TraceMap {
    pub post_amplitude: C64,
    pub tol: f64,
    pub max_overlap: f64,
    pub steps: usize,
    pub entries: Vec<TraceEntry>,
    table: Arc<ModeTable>,
    /// Per mode, the largest root-sum-square over plate components of the
    /// overlap across all times.
    strength: Vec<f64>,
    /// Per mode, its slice of `entries`.
    ranges: Vec<(usize, usize)>,
}

/// Builds the trace map of `tst`; `tol` is relative to the largest overlap.
pub fn trace_map(circuit: &Circuit, tst: &TwoStateTrajectory, tol: f64) -> TsvfResult<TraceMap> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(TsvfError::InvalidTolerance(tol));
    }
    let d = circuit.plate_dim().dim();
    let table = circuit.table();
    let steps = circuit.depth();
    let mut entries = Vec::new();
    let mut strength = vec![0.0; table.len()];
    let mut starts = Vec::new();
    let mut merged = Vec::new();
    let mut ranges = vec![(0, 0); table.len()];
    for mode in table.iter().filter(|m| m.kind != ModeKind::Sink) {
        let m = mode.index;
        let first = entries.len();
        merged.clear();
        for q in 0..d {
            let k = m.0 * d + q;
            starts.clear();
            tst.forward.breakpoints(k, &mut starts);
            tst.backward.breakpoints(k, &mut starts);
            starts.sort_unstable();
            starts.dedup();
            for (i, &t) in starts.iter().enumerate() {
                let t_end = starts.get(i + 1).map_or(steps, |&n| n - 1);
                let f = tst.forward.value(k, t);
                let b = tst.backward.value(k, t);
                if f == C64::default() && b == C64::default() {
                    continue;
                }
                let overlap = b.conj() * f;
                let weak_value = tst.branch_amplitude(q).filter(|a| !undefined(*a)).map(|a| overlap / a);
                entries.push(TraceEntry {
                    mode: m,
                    plate: q,
                    t,
                    t_end,
                    forward: f,
                    backward: b,
                    overlap,
                    weak_value,
                    present: false,
                });
            }
            merged.extend(starts.iter().copied());
        }
        merged.sort_unstable();
        merged.dedup();
        let mut best = 0.0f64;
        for &t in &merged {
            let rss: f64 = (0..d).map(|q| tst.overlap(m, q, t).norm_sqr()).sum::<f64>().sqrt();
            best = best.max(rss);
        }
        strength[m.0] = best;
        ranges[m.0] = (first, entries.len());
    }
    let max_overlap = strength.iter().copied().fold(0.0, f64::max);
    let threshold = tol * max_overlap;
    for e in &mut entries {
        e.present = e.overlap.norm() > threshold;
    }
    Ok(TraceMap {
        post_amplitude: tst.amplitude(),
        tol,
        max_overlap,
        steps,
        entries,
        table: table.clone(),
        strength,
        ranges,
    })
}

impl TraceMap {
    pub fn threshold(&self) -> f64 {
        self.tol * self.max_overlap
    }

    /// Largest trace strength of a mode over time.
    pub fn strength(&self, mode: ModeIdx) -> f64 {
        self.strength.get(mode.0).copied().unwrap_or(0.0)
    }

    /// Whether the mode carries trace at any time.
    pub fn mode_present(&self, mode: ModeIdx) -> bool {
        self.strength(mode) > self.threshold()
    }

    pub fn table(&self) -> &Arc<ModeTable> {
        &self.table
    }

    pub fn entries_of(&self, mode: ModeIdx) -> &[TraceEntry] {
        let (a, b) = self.ranges.get(mode.0).copied().unwrap_or((0, 0));
        &self.entries[a..b]
    }

    /// Entries of the mode with this label (empty for unknown labels).
    pub fn entries_for(&self, label: &str) -> &[TraceEntry] {
        self.table.lookup(label).map_or(&[], |m| self.entries_of(m))
    }

    /// Overlap at `(label, plate, t)`, zero where no entry exists.
    pub fn overlap_at(&self, label: &str, plate: usize, t: usize) -> C64 {
        self.entries_for(label)
            .iter()
            .find(|e| e.plate == plate && e.t <= t && t <= e.t_end)
            .map_or(C64::default(), |e| e.overlap)
    }

    pub fn present_at(&self, label: &str, t: usize) -> bool {
        self.entries_for(label).iter().any(|e| e.present && e.t <= t && t <= e.t_end)
    }

    /// Labels of modes with at least one entry.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.table.iter().filter(|m| !self.entries_of(m.index).is_empty()).map(|m| m.label.as_str())
    }
}

/// Largest entrywise difference of overlaps between `a` and `b` after
/// relabeling `a`'s modes by the given exchanges, over all times and plate
/// components of both maps.
pub fn relabeled_difference(a: &TraceMap, b: &TraceMap, swaps: &[(&str, &str)], plates: usize) -> f64 {
    let relabel = |l: &str| swaps.iter().fold(l.to_string(), |acc, (x, y)| swap_label(&acc, x, y));
    let steps = a.steps.max(b.steps);
    let mut worst = 0.0f64;
    let mut check = |la: &str, lb: &str| {
        for q in 0..plates {
            for t in 0..=steps {
                worst = worst.max((a.overlap_at(la, q, t) - b.overlap_at(lb, q, t)).norm());
            }
        }
    };
    for la in a.labels() {
        check(la, &relabel(la));
    }
    // swaps are involutions, so this covers modes only present in `b`
    for lb in b.labels() {
        check(&relabel(lb), lb);
    }
    worst
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Counterfactual,
    CrossingFree,
    NotCounterfactual,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Counterfactual => "counterfactual",
            Self::CrossingFree => "crossing_free",
            Self::NotCounterfactual => "not_counterfactual",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionTrace {
    pub region: Region,
    pub max_trace_magnitude: f64,
    pub present: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterfactualityReport {
    pub regions: Vec<RegionTrace>,
    pub verdict: Verdict,
    /// Untraced modes bounding everything reachable from alice through
    /// traced modes. Present when bob is not reached, i.e. when it is a
    /// trace-free cut.
    pub trace_free_cut: Option<Vec<String>>,
    /// Traced modes outside alice.
    pub traced_outside_alice: Vec<String>,
}

impl CounterfactualityReport {
    pub fn region(&self, r: Region) -> &RegionTrace {
        self.regions.iter().find(|x| x.region == r).expect("all regions reported")
    }

    /// True when every cut between alice and bob contains a traced mode.
    pub fn every_cut_traced(&self) -> bool {
        self.trace_free_cut.is_none()
    }
}

/// Verdict over a region assignment (one region per mode of `circuit`).
pub fn counterfactuality_report(
    circuit: &Circuit,
    map: &TraceMap,
    regions: &[Region],
) -> TsvfResult<CounterfactualityReport> {
    let table = circuit.table();
    if regions.len() != table.len() {
        return Err(TsvfError::RegionsIncomplete { got: regions.len(), expected: table.len() });
    }
    let is_sink = |m: usize| table.mode(ModeIdx(m)).kind == ModeKind::Sink;
    let traced = |m: usize| map.mode_present(ModeIdx(m));
    let threshold = map.threshold();
    let region_traces = Region::ALL
        .iter()
        .map(|&r| {
            let max = (0..table.len())
                .filter(|&m| regions[m] == r && !is_sink(m))
                .map(|m| map.strength(ModeIdx(m)))
                .fold(0.0, f64::max);
            RegionTrace { region: r, max_trace_magnitude: max, present: max > threshold }
        })
        .collect::<Vec<_>>();
    let free = |r: Region| !region_traces.iter().any(|x| x.region == r && x.present);

    let adj = circuit.adjacency();
    let mut seen = vec![false; table.len()];
    let mut queue = VecDeque::new();
    for m in 0..table.len() {
        if regions[m] == Region::Alice && !is_sink(m) {
            seen[m] = true;
            queue.push_back(m);
        }
    }
    let mut frontier = Vec::new();
    let mut reached_bob = false;
    while let Some(m) = queue.pop_front() {
        if regions[m] == Region::Bob {
            reached_bob = true;
        }
        for &n in &adj[m] {
            let n = n.0;
            if seen[n] || is_sink(n) {
                continue;
            }
            if regions[n] == Region::Alice || traced(n) {
                seen[n] = true;
                queue.push_back(n);
            } else if !frontier.contains(&n) {
                frontier.push(n);
            }
        }
    }
    frontier.sort_unstable();
    let verdict = if free(Region::Channel) && free(Region::Bob) {
        Verdict::Counterfactual
    } else if !reached_bob {
        Verdict::CrossingFree
    } else {
        Verdict::NotCounterfactual
    };
    let label = |m: usize| table.label(ModeIdx(m)).to_string();
    Ok(CounterfactualityReport {
        regions: region_traces,
        verdict,
        trace_free_cut: (!reached_bob).then(|| frontier.into_iter().map(label).collect()),
        traced_outside_alice: (0..table.len())
            .filter(|&m| regions[m] != Region::Alice && !is_sink(m) && traced(m))
            .map(label)
            .collect(),
    })
}

/// `<post| U_after K(eps) U_before |input>` for a phase kick on `mode` at `t`.
fn kicked_amplitude(
    circuit: &Circuit,
    input: &JointState,
    post_mode: ModeIdx,
    post_plate: Option<usize>,
    mode: ModeIdx,
    t: usize,
    eps: f64,
) -> TsvfResult<C64> {
    let out = circuit.propagate_with_kick(input, t, mode, eps)?;
    let d = circuit.plate_dim().dim();
    Ok((0..d).filter(|&q| post_plate.is_none_or(|p| p == q)).map(|q| out.amplitude(post_mode, q)).sum())
}

/// Finite-difference estimate of `d log A / d(i eps)` for a phase `eps`
/// inserted at `(mode, t)`; equals the projector weak value.
pub fn perturbative_weak_value(
    circuit: &Circuit,
    input: &JointState,
    post_mode: ModeIdx,
    post_plate: Option<usize>,
    mode: ModeIdx,
    t: usize,
) -> TsvfResult<C64> {
    let a0 = kicked_amplitude(circuit, input, post_mode, post_plate, mode, t, 0.0)?;
    if undefined(a0) {
        return Err(TsvfError::UndefinedWeakValues { amplitude: a0 });
    }
    let plus = kicked_amplitude(circuit, input, post_mode, post_plate, mode, t, ORACLE_EPS)?;
    let minus = kicked_amplitude(circuit, input, post_mode, post_plate, mode, t, -ORACLE_EPS)?;
    Ok((plus - minus) / (2.0 * ORACLE_EPS) / (C64::i() * a0))
}

/// What a mid-circuit arm state becomes at the output.
#[derive(Clone, Debug)]
pub struct Complement {
    pub arm: String,
    /// Amplitude reaching `D`.
    pub d_amplitude: C64,
    /// Output with the `D` component removed, normalized.
    pub state: JointState,
}

/// Output of `|arm>` placed at the `mid` snapshot, split into the `D`
/// coupling and the normalized remainder.
pub fn complement_state(circuit: &Circuit, arm: &str) -> TsvfResult<Complement> {
    let mid = circuit.marker("mid").ok_or(TsvfError::MissingMarker("mid"))?;
    let m = circuit.mode(arm).map_err(|_| TsvfError::UnknownArm(arm.into()))?;
    let d = circuit.mode("D")?;
    let start = JointState::basis_at(circuit.table().clone(), circuit.plate_dim(), m, PlateState::Absent)?;
    let mut out = circuit.propagate_range(&start, mid, circuit.depth())?;
    let d_amplitude = out.amplitude(d, 0);
    let k = out.index(d, 0);
    out.amplitudes_mut()[k] = C64::default();
    Ok(Complement { arm: arm.into(), d_amplitude, state: out.normalized()? })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalarProduct {
    pub left: String,
    pub right: String,
    pub value: C64,
}

/// `<perp_X|perp_Y>` over the pairs (A,B), (A,C), (B,C).
pub fn complement_products(circuit: &Circuit) -> TsvfResult<Vec<ScalarProduct>> {
    let arms = ["A", "B", "C"].map(|a| complement_state(circuit, a));
    let arms: Vec<Complement> = arms.into_iter().collect::<TsvfResult<_>>()?;
    let mut out = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            out.push(ScalarProduct {
                left: arms[i].arm.clone(),
                right: arms[j].arm.clone(),
                value: arms[i].state.inner_product(&arms[j].state)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{mzi, nested_mzi, Blocking, NestedVariant};

    fn nested_run() -> (Circuit, TwoStateTrajectory) {
        let c = nested_mzi(NestedVariant::A, Blocking::Free);
        let input = c.input_state(PlateState::Absent).unwrap();
        let tst = two_state_trajectory(&c, &input, c.mode("D").unwrap(), None).unwrap();
        (c, tst)
    }

    #[test]
    fn three_box_weak_values() {
        let (c, tst) = nested_run();
        let mid = c.marker("mid").unwrap();
        for (arm, want) in [("A", 1.0), ("B", -1.0), ("C", 1.0)] {
            let w = tst.weak_value(c.mode(arm).unwrap(), mid, None).unwrap();
            assert!((w - C64::new(want, 0.0)).norm() < 1e-9, "{arm}: {w}");
        }
        let ab = tst.weak_value(c.mode("A").unwrap(), mid, None).unwrap()
            + tst.weak_value(c.mode("B").unwrap(), mid, None).unwrap();
        assert!(ab.norm() < 1e-9);
        assert!((tst.amplitude() - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn backward_mid_state() {
        let (c, tst) = nested_run();
        let mid = c.marker("mid").unwrap();
        let b: Vec<C64> = ["A", "B", "C"].iter().map(|a| tst.backward.amplitude(c.mode(a).unwrap(), 0, mid)).collect();
        // proportional to (1, -i, 1)/sqrt 3
        let phase = b[0] / b[0].norm();
        let r = 1.0 / 3f64.sqrt();
        for (got, want) in b.iter().zip([C64::new(r, 0.0), C64::new(0.0, -r), C64::new(r, 0.0)]) {
            assert!((got - want * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn dark_port_has_no_weak_values() {
        let c = mzi(Blocking::Free);
        let input = c.input_state(PlateState::Absent).unwrap();
        let err = two_state_trajectory(&c, &input, c.mode("D").unwrap(), None).unwrap_err();
        assert!(matches!(err, TsvfError::UndefinedWeakValues { .. }));
    }

    #[test]
    fn trace_entries_tile_time() {
        let (c, tst) = nested_run();
        let map = trace_map(&c, &tst, DEFAULT_TOL).unwrap();
        for e in &map.entries {
            assert!(e.t <= e.t_end && e.t_end <= c.depth());
            if e.forward == C64::default() || e.backward == C64::default() {
                assert!(!e.present);
            }
        }
        // A carries trace, the blocked check is elsewhere
        assert!(map.mode_present(c.mode("A").unwrap()));
        assert!(!map.present_at("F", c.marker("inner_exit").unwrap()));
        assert!(!map.present_at("E", c.marker("inner_entry").unwrap()));
    }

    #[test]
    fn presence_ifm_is_counterfactual() {
        let c = mzi(Blocking::Blocked);
        let input = c.input_state(PlateState::Absent).unwrap();
        let tst = two_state_trajectory(&c, &input, c.mode("D").unwrap(), None).unwrap();
        let map = trace_map(&c, &tst, DEFAULT_TOL).unwrap();
        let rep = counterfactuality_report(&c, &map, &c.regions()).unwrap();
        assert_eq!(rep.verdict, Verdict::Counterfactual);
        assert!(counterfactuality_report(&c, &map, &[Region::Alice]).is_err());
    }

    #[test]
    fn oracle_matches_on_mid() {
        let (c, tst) = nested_run();
        let input = c.input_state(PlateState::Absent).unwrap();
        let mid = c.marker("mid").unwrap();
        let d = c.mode("D").unwrap();
        let entry = c.marker("inner_entry").unwrap();
        let exit = c.marker("inner_exit").unwrap();
        for (arm, t) in [("A", mid), ("B", mid), ("C", mid), ("E", entry), ("F", exit)] {
            let m = c.mode(arm).unwrap();
            let w = tst.weak_value(m, t, None).unwrap();
            let p = perturbative_weak_value(&c, &input, d, None, m, t).unwrap();
            assert!((w - p).norm() < 1e-6, "{arm}: {w} vs {p}");
        }
    }

    #[test]
    fn complement_couplings() {
        let c = nested_mzi(NestedVariant::A, Blocking::Free);
        for arm in ["A", "B", "C"] {
            let comp = complement_state(&c, arm).unwrap();
            assert!((comp.d_amplitude.norm() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
            assert!((comp.state.norm_sqr() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(complement_state(&c, "Q"), Err(TsvfError::UnknownArm(_))));
    }
}
