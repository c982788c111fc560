//! End-to-end protocol runs: builders, propagation and trace audits
//! composed into reports.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::builders::{
    self, mzi, nested_mzi, nested_zeno, zeno_absence_chain, zeno_presence_chain, Blocking, BuildError, ChainParams,
    NestedVariant, IDEAL_ONE, IDEAL_ZERO,
};
use crate::circuit::{Circuit, CircuitError};
use crate::statespace::{JointState, PlatePreparation, PlateState, StateError, EMPTY_BRANCH_PROBABILITY};
use crate::tsvf::{self, CounterfactualityReport, TsvfError, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Tsvf(#[from] TsvfError),
    #[error("empty success branch (probability {probability:e})")]
    EmptyBranch { probability: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
}

pub type ProtocolResult<T> = Result<T, ProtocolError>;

/// Trace audit of one post-selection.
#[derive(Clone, Debug, Serialize)]
pub struct Audit {
    pub post: String,
    /// `None` when the plate is traced out.
    pub post_plate: Option<usize>,
    pub post_probability: f64,
    pub report: CounterfactualityReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct QkdSummary {
    pub rounds: usize,
    pub seed: u64,
    pub kept: usize,
    pub kept_fraction: f64,
    pub expected_fraction: f64,
    /// Binomial standard deviation of the kept fraction.
    pub sigma: f64,
    pub key_bits: Vec<u8>,
    pub kept_all_bob_one: bool,
    pub kept_all_counterfactual: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolReport {
    pub protocol: String,
    pub params: ChainParams,
    pub outcome_probabilities: BTreeMap<String, f64>,
    pub success_probability: f64,
    /// Renormalized success branch, when the protocol has one.
    #[serde(skip)]
    pub success_state: Option<JointState>,
    pub fidelity: Option<f64>,
    /// Main audit (the protocol's certifying click).
    pub counterfactuality: Option<CounterfactualityReport>,
    /// All audits, including the main one.
    pub audits: Vec<Audit>,
    pub metrics: BTreeMap<String, f64>,
    pub qkd: Option<QkdSummary>,
}

impl ProtocolReport {
    fn new(protocol: &str, params: ChainParams, outcomes: BTreeMap<String, f64>) -> Self {
        Self {
            protocol: protocol.into(),
            params,
            outcome_probabilities: outcomes,
            success_probability: 0.0,
            success_state: None,
            fidelity: None,
            counterfactuality: None,
            audits: Vec::new(),
            metrics: BTreeMap::new(),
            qkd: None,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.outcome_probabilities.values().sum()
    }

    pub fn probability(&self, key: &str) -> f64 {
        self.outcome_probabilities.get(key).copied().unwrap_or(0.0)
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.counterfactuality.as_ref().map(|c| c.verdict)
    }

    pub fn audit(&self, post: &str) -> Option<&Audit> {
        self.audits.iter().find(|a| a.post == post)
    }

    fn push_audit(&mut self, audit: Option<Audit>, main: bool) {
        if let Some(a) = audit {
            if main {
                self.counterfactuality = Some(a.report.clone());
            }
            self.audits.push(a);
        }
    }
}

/// Trace audit of post-selecting `post` (and optionally a plate
/// component); `None` when that post-selection has zero amplitude.
pub fn audit(
    circuit: &Circuit,
    input: &JointState,
    post: &str,
    post_plate: Option<usize>,
    tol: f64,
) -> ProtocolResult<Option<Audit>> {
    let m = circuit.mode(post)?;
    let tst = match tsvf::two_state_trajectory(circuit, input, m, post_plate) {
        Ok(t) => t,
        Err(TsvfError::UndefinedWeakValues { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let map = tsvf::trace_map(circuit, &tst, tol)?;
    let report = tsvf::counterfactuality_report(circuit, &map, &circuit.regions())?;
    Ok(Some(Audit { post: post.into(), post_plate, post_probability: tst.probability(), report }))
}

fn outcomes_of(circuit: &Circuit, input: &JointState) -> ProtocolResult<(JointState, BTreeMap<String, f64>)> {
    let out = circuit.propagate(input)?;
    let map = circuit.outcomes(&out).as_map();
    Ok((out, map))
}

/// Finds an object by the click of the dark port: the single
/// interferometer for `n = 1`, the Zeno chain otherwise.
pub fn presence_ifm(n: usize, present: bool, tol: f64) -> ProtocolResult<ProtocolReport> {
    let blocking = Blocking::from_flag(present);
    let circuit = if n == 1 { mzi(blocking) } else { zeno_presence_chain(n, blocking)? };
    let input = circuit.input_state(PlateState::Absent)?;
    let (_, outcomes) = outcomes_of(&circuit, &input)?;
    let mut rep = ProtocolReport::new("presence_ifm", ChainParams::outer(n)?, outcomes);
    rep.success_probability = rep.probability("D");
    rep.metrics.insert("p_find".into(), rep.probability("D"));
    rep.metrics.insert("p_absorb".into(), rep.probability("sink"));
    let a = audit(&circuit, &input, "D", None, tol)?;
    rep.push_audit(a, true);
    Ok(rep)
}

/// Certifies an empty location by the click of `D`: the nested
/// interferometer for `n = 1`, the absence chain otherwise.
pub fn absence_ifm(n: usize, present: bool, tol: f64) -> ProtocolResult<ProtocolReport> {
    let blocking = Blocking::from_flag(present);
    let circuit = if n == 1 { nested_mzi(NestedVariant::A, blocking) } else { zeno_absence_chain(n, blocking)? };
    let input = circuit.input_state(PlateState::Absent)?;
    let (_, outcomes) = outcomes_of(&circuit, &input)?;
    let mut rep = ProtocolReport::new("absence_ifm", ChainParams::outer(n)?, outcomes);
    rep.success_probability = rep.probability("D");
    rep.metrics.insert("p_certify".into(), rep.probability("D"));
    rep.metrics.insert("p_absorb".into(), rep.probability("sink"));
    let a = audit(&circuit, &input, "D", None, tol)?;
    rep.push_audit(a, true);
    Ok(rep)
}

/// Bob sends `bit` by blocking (1) or freeing (0) all inner chains; Alice
/// reads `D2` for 1 and `D1` for 0.
pub fn transfer_bit(params: ChainParams, bit: u8, tol: f64) -> ProtocolResult<ProtocolReport> {
    if bit > 1 {
        return Err(ProtocolError::InvalidParameter(format!("bit must be 0 or 1, got {bit}")));
    }
    let circuit = nested_zeno(params, Blocking::from_flag(bit == 1))?;
    let input = circuit.input_state(PlateState::Absent)?;
    let (_, outcomes) = outcomes_of(&circuit, &input)?;
    let mut rep = ProtocolReport::new("transfer_bit", params, outcomes);
    let (right, wrong) = if bit == 1 { ("D2", "D1") } else { ("D1", "D2") };
    rep.success_probability = rep.probability(right);
    rep.metrics.insert("bit".into(), bit as f64);
    rep.metrics.insert("p_correct".into(), rep.probability(right));
    rep.metrics.insert("p_error".into(), rep.probability(wrong));
    rep.metrics.insert("p_absorb".into(), rep.probability("sink"));
    let a = audit(&circuit, &input, right, None, tol)?;
    rep.push_audit(a, true);
    Ok(rep)
}

/// Entangling run: plate-controlled chain, success branch
/// `(D1, absent) + (D2, present)`.
struct Entangled {
    circuit: Circuit,
    input: JointState,
    outcomes: BTreeMap<String, f64>,
    branch: JointState,
    probability: f64,
}

fn entangled(params: ChainParams, prep: PlatePreparation) -> ProtocolResult<Entangled> {
    let circuit = nested_zeno(params, Blocking::PlateControlled)?;
    let input = circuit.input_state(PlateState::Prepared(prep))?;
    let (out, outcomes) = outcomes_of(&circuit, &input)?;
    let d1 = circuit.mode("D1")?;
    let d2 = circuit.mode("D2")?;
    let proj = out.project_pairs(&[(d1, 0), (d2, 1)])?;
    if proj.probability < EMPTY_BRANCH_PROBABILITY {
        return Err(ProtocolError::EmptyBranch { probability: proj.probability });
    }
    let branch = proj.normalized()?;
    Ok(Entangled { circuit, input, outcomes, branch, probability: proj.probability })
}

/// `alpha |D2, present> + beta |D1, absent>` on the chain's space.
fn entangled_target(circuit: &Circuit, prep: PlatePreparation) -> ProtocolResult<JointState> {
    let mut t = JointState::zero(circuit.table().clone(), circuit.plate_dim());
    let k1 = t.index(circuit.mode("D2")?, 1);
    let k0 = t.index(circuit.mode("D1")?, 0);
    t.amplitudes_mut()[k1] = prep.alpha();
    t.amplitudes_mut()[k0] = prep.beta();
    Ok(t)
}

/// Creates photon-plate entanglement; fidelity of the success branch to
/// `alpha|1,1> + beta|0,0>`.
pub fn entangle(params: ChainParams, prep: PlatePreparation, tol: f64) -> ProtocolResult<ProtocolReport> {
    let e = entangled(params, prep)?;
    let target = entangled_target(&e.circuit, prep)?;
    let mut rep = ProtocolReport::new("entangle", params, e.outcomes.clone());
    rep.success_probability = e.probability;
    rep.fidelity = Some(e.branch.fidelity(&target)?);
    rep.success_state = Some(e.branch);
    let d2 = audit(&e.circuit, &e.input, "D2", None, tol)?;
    let d1 = audit(&e.circuit, &e.input, "D1", None, tol)?;
    rep.push_audit(d2, true);
    rep.push_audit(d1, false);
    Ok(rep)
}

/// Alice's qubit and Bob's ready-state population after the reversal.
#[derive(Clone, Debug)]
pub struct Reversed {
    /// Amplitudes of Alice's qubit `(|0>, |1>)` with Bob's system in `R`.
    pub alice: [C64; 2],
    /// Probability that Bob's system ends in its ready state.
    pub bob_ready: f64,
    pub state: JointState,
}

/// Applies the role-swapped ideal reversal to `c0 |0>_A|0>_B + c1 |1>_A|1>_B`.
/// In the reversal circuit the plate index is Alice's qubit and the
/// modes `0`, `R@1`, `R` are Bob's states `|0>`, `|1>`, `|R>`.
pub fn reverse_ideal(reversal: &Circuit, c0: C64, c1: C64) -> ProtocolResult<Reversed> {
    let mut s = JointState::zero(reversal.table().clone(), reversal.plate_dim());
    let k0 = s.index(reversal.mode(IDEAL_ZERO)?, 0);
    let k1 = s.index(reversal.mode(IDEAL_ONE)?, 1);
    s.amplitudes_mut()[k0] = c0;
    s.amplitudes_mut()[k1] = c1;
    let out = reversal.propagate(&s)?;
    let r = reversal.mode("R")?;
    let alice = [out.amplitude(r, 0), out.amplitude(r, 1)];
    Ok(Reversed { alice, bob_ready: out.mode_probability(r), state: out })
}

/// `|<psi|alice>|^2` with `psi = beta|0> + alpha|1>`; `alice` need not be normalized.
fn qubit_fidelity(prep: PlatePreparation, alice: [C64; 2]) -> f64 {
    let n: f64 = alice.iter().map(|a| a.norm_sqr()).sum();
    if n == 0.0 {
        return 0.0;
    }
    (prep.beta().conj() * alice[0] + prep.alpha().conj() * alice[1]).norm_sqr() / n
}

/// Ideal limit end to end: ideal entangling map, then the role-swapped
/// reversal. Returns Alice's fidelity to the prepared state.
pub fn ideal_transfer_fidelity(prep: PlatePreparation) -> ProtocolResult<f64> {
    let ideal = builders::ideal_transfer_map();
    let out = ideal.propagate(&ideal.input_state(PlateState::Prepared(prep))?)?;
    let c0 = out.amplitude(ideal.mode(IDEAL_ZERO)?, 0);
    let c1 = out.amplitude(ideal.mode(IDEAL_ONE)?, 1);
    let (_, reversal) = builders::qubit_transfer(ChainParams::new(1, 1)?)?;
    let rev = reverse_ideal(&reversal, c0, c1)?;
    Ok(qubit_fidelity(prep, rev.alice))
}

/// Entangle, discard failures, then reverse with roles swapped so the
/// plate state ends on Alice's side.
pub fn transfer_qubit(params: ChainParams, prep: PlatePreparation, tol: f64) -> ProtocolResult<ProtocolReport> {
    let e = entangled(params, prep)?;
    let (_, reversal) = builders::qubit_transfer(params)?;
    let c0 = e.branch.amplitude(e.circuit.mode("D1")?, 0);
    let c1 = e.branch.amplitude(e.circuit.mode("D2")?, 1);
    let rev = reverse_ideal(&reversal, c0, c1)?;
    let target = entangled_target(&e.circuit, prep)?;
    let mut rep = ProtocolReport::new("transfer_qubit", params, e.outcomes.clone());
    rep.success_probability = e.probability;
    rep.fidelity = Some(qubit_fidelity(prep, rev.alice));
    rep.metrics.insert("entangled_fidelity".into(), e.branch.fidelity(&target)?);
    rep.metrics.insert("bob_ready_fidelity".into(), rev.bob_ready);
    rep.success_state = Some(rev.state);
    let d2 = audit(&e.circuit, &e.input, "D2", None, tol)?;
    let d1 = audit(&e.circuit, &e.input, "D1", None, tol)?;
    rep.push_audit(d2, true);
    rep.push_audit(d1, false);
    Ok(rep)
}

/// Locates the single empty channel among `k` by running presence chains
/// on them in order. Identification is certain once `k - 1` channels have
/// shown presence or one has failed to; absorption is the chance that some
/// blocked-channel run lost the photon.
pub fn find_empty_channel(k: usize, n: usize, seed: u64, tol: f64) -> ProtocolResult<ProtocolReport> {
    if k < 2 {
        return Err(ProtocolError::InvalidParameter(format!("need at least 2 channels, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = rng.gen_range(0..k);
    let blocked = zeno_presence_chain(n, Blocking::Blocked)?;
    let free = zeno_presence_chain(n, Blocking::Free)?;
    let input_b = blocked.input_state(PlateState::Absent)?;
    let (_, ob) = outcomes_of(&blocked, &input_b)?;
    let survive = ob.get("D").copied().unwrap_or(0.0);
    let mut runs = 0usize;
    let mut survival_all = 1.0;
    for ch in 0..k {
        if ch == k - 1 {
            // every other channel showed presence
            break;
        }
        runs += 1;
        if ch == empty {
            break;
        }
        survival_all *= survive;
    }
    let absorption = 1.0 - survival_all;
    let mut outcomes = BTreeMap::new();
    outcomes.insert("identified".into(), survival_all);
    outcomes.insert("absorbed".into(), absorption);
    let mut rep = ProtocolReport::new("find_empty_channel", ChainParams::outer(n)?, outcomes);
    rep.success_probability = survival_all;
    rep.metrics.insert("channels".into(), k as f64);
    rep.metrics.insert("empty_channel".into(), empty as f64);
    rep.metrics.insert("identified_channel".into(), empty as f64);
    rep.metrics.insert("runs".into(), runs as f64);
    rep.metrics.insert("absorption_probability".into(), absorption);
    rep.metrics.insert("worst_case_absorption".into(), 1.0 - survive.powi(k as i32 - 1));
    rep.metrics.insert("p_presence_per_run".into(), survive);
    // the empty channel lets the photon through to `other`
    let input_f = free.input_state(PlateState::Absent)?;
    let a = audit(&free, &input_f, "other", None, tol)?;
    if let Some(a) = &a {
        let bob = a.report.region(crate::statespace::Region::Bob);
        rep.metrics.insert("empty_channel_bob_trace".into(), bob.max_trace_magnitude);
    }
    rep.push_audit(a, true);
    Ok(rep)
}

/// Minimal counterfactual key rounds: Bob blocks (1) or frees (0) his arm
/// at random, Alice keeps rounds where `D` clicks.
pub fn qkd_rounds(rounds: usize, seed: u64, n: usize, tol: f64) -> ProtocolResult<ProtocolReport> {
    if rounds == 0 {
        return Err(ProtocolError::InvalidParameter("rounds must be positive".into()));
    }
    let per_bit: Vec<ProtocolReport> =
        [false, true].iter().map(|&p| presence_ifm(n, p, tol)).collect::<ProtocolResult<_>>()?;
    let dists: Vec<Vec<(String, f64)>> =
        per_bit.iter().map(|r| r.outcome_probabilities.iter().map(|(k, v)| (k.clone(), *v)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key = Vec::new();
    let mut all_one = true;
    let mut all_cf = true;
    for _ in 0..rounds {
        let bit = rng.gen_bool(0.5) as usize;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut click = dists[bit].last().map(|x| x.0.clone()).unwrap_or_default();
        for (k, p) in &dists[bit] {
            acc += p;
            if u < acc {
                click = k.clone();
                break;
            }
        }
        if click == "D" {
            key.push(bit as u8);
            all_one &= bit == 1;
            all_cf &= per_bit[bit].verdict() == Some(Verdict::Counterfactual);
        }
    }
    let mut outcomes = BTreeMap::new();
    for d in &dists {
        for (k, p) in d {
            *outcomes.entry(k.clone()).or_insert(0.0) += 0.5 * p;
        }
    }
    let expected = outcomes.get("D").copied().unwrap_or(0.0);
    let kept = key.len();
    let mut rep = ProtocolReport::new("qkd", ChainParams::outer(n)?, outcomes);
    rep.success_probability = expected;
    rep.metrics.insert("kept_fraction".into(), kept as f64 / rounds as f64);
    rep.counterfactuality = per_bit[1].counterfactuality.clone();
    rep.audits = per_bit[1].audits.clone();
    rep.qkd = Some(QkdSummary {
        rounds,
        seed,
        kept,
        kept_fraction: kept as f64 / rounds as f64,
        expected_fraction: expected,
        sigma: (expected * (1.0 - expected) / rounds as f64).sqrt(),
        key_bits: key,
        kept_all_bob_one: all_one,
        kept_all_counterfactual: all_cf,
    });
    Ok(rep)
}

pub const PROTOCOLS: [&str; 7] =
    ["presence_ifm", "absence_ifm", "transfer_bit", "entangle", "transfer_qubit", "find_empty_channel", "qkd"];

/// Inputs for [`run_protocol`]; unused fields are ignored.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub n: usize,
    pub m: usize,
    pub bit: u8,
    /// Object present; defaults per protocol when `None`.
    pub present: Option<bool>,
    pub prep: PlatePreparation,
    pub channels: usize,
    pub rounds: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n: 1,
            m: 1,
            bit: 1,
            present: None,
            prep: PlatePreparation::equal_superposition(),
            channels: 2,
            rounds: 1000,
            seed: 0,
            tol: tsvf::DEFAULT_TOL,
        }
    }
}

pub fn run_protocol(name: &str, cfg: &ProtocolConfig) -> ProtocolResult<ProtocolReport> {
    let params = || ChainParams::new(cfg.n, cfg.m);
    match name {
        "presence_ifm" => presence_ifm(cfg.n, cfg.present.unwrap_or(true), cfg.tol),
        "absence_ifm" => absence_ifm(cfg.n, cfg.present.unwrap_or(false), cfg.tol),
        "transfer_bit" => transfer_bit(params()?, cfg.bit, cfg.tol),
        "entangle" => entangle(params()?, cfg.prep, cfg.tol),
        "transfer_qubit" => transfer_qubit(params()?, cfg.prep, cfg.tol),
        "find_empty_channel" => find_empty_channel(cfg.channels, cfg.n, cfg.seed, cfg.tol),
        "qkd" => qkd_rounds(cfg.rounds, cfg.seed, cfg.n, cfg.tol),
        _ => Err(ProtocolError::UnknownProtocol(name.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsvf::DEFAULT_TOL;

    #[test]
    fn presence_single() {
        let r = presence_ifm(1, true, DEFAULT_TOL).unwrap();
        assert!((r.probability("D") - 0.25).abs() < 1e-12);
        assert_eq!(r.verdict(), Some(Verdict::Counterfactual));
        assert!((r.total_probability() - 1.0).abs() < 1e-12);
        let r = presence_ifm(3, false, DEFAULT_TOL).unwrap();
        assert!(r.probability("D") < 1e-20);
        assert!(r.counterfactuality.is_none());
    }

    #[test]
    fn absence_single() {
        let r = absence_ifm(1, false, DEFAULT_TOL).unwrap();
        assert!((r.probability("D") - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.verdict(), Some(Verdict::NotCounterfactual));
    }

    #[test]
    fn small_bit_transfer() {
        let p = ChainParams::new(3, 6).unwrap();
        let r1 = transfer_bit(p, 1, DEFAULT_TOL).unwrap();
        let bob = r1.counterfactuality.as_ref().unwrap().region(crate::statespace::Region::Bob);
        assert!(!bob.present);
        let r0 = transfer_bit(p, 0, DEFAULT_TOL).unwrap();
        assert_eq!(r0.verdict(), Some(Verdict::CrossingFree));
        assert!(transfer_bit(p, 2, DEFAULT_TOL).is_err());
    }

    #[test]
    fn ideal_reversal_is_exact() {
        for (a, b) in [(1.0, 0.0), (0.6, 0.8), (0.5f64.sqrt(), 0.5f64.sqrt())] {
            let prep = PlatePreparation::new(C64::new(a, 0.0), C64::new(0.0, b)).unwrap();
            assert!((ideal_transfer_fidelity(prep).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entangle_linearity() {
        let p = ChainParams::new(3, 6).unwrap();
        let prep = PlatePreparation::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let mix = entangled(p, prep).unwrap();
        let one = entangled(p, PlatePreparation::new(C64::new(1.0, 0.0), C64::default()).unwrap()).unwrap();
        let zero = entangled(p, PlatePreparation::new(C64::default(), C64::new(1.0, 0.0)).unwrap()).unwrap();
        let combo = one
            .branch
            .scale(prep.alpha() * one.probability.sqrt())
            .add(&zero.branch.scale(prep.beta() * zero.probability.sqrt()))
            .unwrap()
            .normalized()
            .unwrap();
        assert!(combo.max_abs_diff(&mix.branch).unwrap() < 1e-9);
    }

    #[test]
    fn empty_channel_bounds() {
        let r = find_empty_channel(4, 10, 3, DEFAULT_TOL).unwrap();
        assert!(r.metrics["runs"] <= 3.0);
        assert!((r.total_probability() - 1.0).abs() < 1e-12);
        assert!(find_empty_channel(1, 10, 3, DEFAULT_TOL).is_err());
    }

    #[test]
    fn qkd_is_deterministic() {
        let a = qkd_rounds(200, 11, 1, DEFAULT_TOL).unwrap();
        let b = qkd_rounds(200, 11, 1, DEFAULT_TOL).unwrap();
        assert_eq!(a.qkd.as_ref().unwrap().key_bits, b.qkd.as_ref().unwrap().key_bits);
        assert!(a.qkd.unwrap().kept_all_bob_one);
    }

    #[test]
    fn unknown_protocol() {
        assert!(matches!(run_protocol("nope", &ProtocolConfig::default()), Err(ProtocolError::UnknownProtocol(_))));
    }
}
