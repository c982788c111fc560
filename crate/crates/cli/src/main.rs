mod failure;
mod sweep;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use cfsim_core::builders::{Blocking, BuilderSpec, NestedVariant};
use cfsim_core::circuit::Circuit;
use cfsim_core::dsl;
use cfsim_core::protocols::{run_protocol, ProtocolConfig, PROTOCOLS};
use cfsim_core::statespace::{PlateDim, PlatePreparation, PlateState};
use cfsim_core::tsvf::{self, counterfactuality_report, trace_map, two_state_trajectory};
use cfsim_core::C64;

use failure::Failure;

/// Probabilities must sum to one within this before anything is printed.
const NORM_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "cfsim", version, about = "Exact single-photon interferometer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the input and print outcome probabilities
    Run {
        #[command(flatten)]
        source: Source,
    },
    /// Two-state trace map and counterfactuality verdict for one click
    Trace {
        #[command(flatten)]
        source: Source,
        /// Detector to post-select on
        #[arg(long)]
        post: String,
        /// Restrict the post-selection to one plate component
        #[arg(long)]
        post_plate: Option<usize>,
        /// Relative presence threshold (overrides CFSIM_TOL)
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a named protocol and print its report
    Protocol {
        name: String,
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
        #[arg(long = "M", default_value_t = 1)]
        m: usize,
        #[command(flatten)]
        opts: ProtocolOpts,
    },
    /// Evaluate a protocol (or `zeno_survival`) over parameter tuples, as CSV
    Sweep {
        name: String,
        /// Values of N: `a..b` (inclusive), a comma list, or a single value
        #[arg(long = "n", visible_alias = "N", conflicts_with = "schedule")]
        n: Option<String>,
        /// Inner length used with `--n`
        #[arg(long = "M", default_value_t = 1)]
        m: usize,
        /// Explicit `N:M` pairs, comma separated
        #[arg(long)]
        schedule: Option<String>,
        #[command(flatten)]
        opts: ProtocolOpts,
    },
}

/// Where the circuit comes from and how the object is prepared.
#[derive(Args, Clone)]
struct Source {
    /// Builder name: mzi, nested_mzi, zeno_presence, zeno_absence, nested_zeno
    #[arg(long, required_unless_present = "circuit", conflicts_with = "circuit")]
    builder: Option<String>,
    /// Circuit file in the .cf format
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    /// Nested MZI variant (a or b)
    #[arg(long)]
    variant: Option<String>,
    /// Object present in every blocker
    #[arg(long, conflicts_with = "alpha")]
    blocked: bool,
    /// Plate superposition alpha|1> + beta|0> (normalized on input)
    #[arg(long, requires = "beta")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    beta: Option<f64>,
}

#[derive(Args, Clone)]
pub struct ProtocolOpts {
    /// Bit Bob sends (transfer_bit)
    #[arg(long, default_value_t = 1)]
    bit: u8,
    /// Object present (presence_ifm, absence_ifm)
    #[arg(long, visible_alias = "blocked", conflicts_with = "absent")]
    present: bool,
    #[arg(long)]
    absent: bool,
    #[arg(long, requires = "beta")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    beta: Option<f64>,
    /// Number of channels (find_empty_channel)
    #[arg(long = "k", default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
}

impl ProtocolOpts {
    pub fn config(&self, n: usize, m: usize) -> Result<ProtocolConfig, Failure> {
        let mut cfg = ProtocolConfig {
            n,
            m,
            bit: self.bit,
            present: None,
            channels: self.k,
            rounds: self.rounds,
            seed: self.seed,
            tol: resolve_tol(self.tol)?,
            ..ProtocolConfig::default()
        };
        if self.present {
            cfg.present = Some(true);
        } else if self.absent {
            cfg.present = Some(false);
        }
        if let Some(p) = preparation(self.alpha, self.beta)? {
            cfg.prep = p;
        }
        Ok(cfg)
    }
}

fn preparation(alpha: Option<f64>, beta: Option<f64>) -> Result<Option<PlatePreparation>, Failure> {
    match (alpha, beta) {
        (Some(a), Some(b)) => Ok(Some(PlatePreparation::normalized(C64::new(a, 0.0), C64::new(b, 0.0))?)),
        _ => Ok(None),
    }
}

/// `--tol`, then `CFSIM_TOL`, then the library default.
pub fn resolve_tol(flag: Option<f64>) -> Result<f64, Failure> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var("CFSIM_TOL") {
            Ok(s) => s.trim().parse().map_err(|_| Failure::usage(format!("CFSIM_TOL is not a number: `{s}`")))?,
            Err(_) => tsvf::DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Failure::usage(format!("tolerance must be positive, got {tol}")));
    }
    Ok(tol)
}

struct Loaded {
    circuit: Circuit,
    plate: PlateState,
    params: Value,
}

fn plate_label(p: PlateState) -> Value {
    match p {
        PlateState::Absent => json!("absent"),
        PlateState::Present => json!("present"),
        PlateState::Prepared(p) => json!({"alpha": p.alpha(), "beta": p.beta()}),
    }
}

fn load(src: &Source) -> Result<Loaded, Failure> {
    let prep = preparation(src.alpha, src.beta)?;
    if let Some(name) = &src.builder {
        let variant = src.variant.as_deref().map(str::parse::<NestedVariant>).transpose()?;
        let spec = BuilderSpec::from_name(name, src.n, src.m, variant)?;
        let (blocking, plate) = match prep {
            Some(p) => (Blocking::PlateControlled, PlateState::Prepared(p)),
            None => (Blocking::from_flag(src.blocked), PlateState::Absent),
        };
        let circuit = spec.build(blocking)?;
        let mut params = serde_json::to_value(&spec).expect("spec serializes");
        params["blocked"] = json!(src.blocked);
        params["plate"] = plate_label(plate);
        return Ok(Loaded { circuit, plate, params });
    }
    let path = src.circuit.as_ref().expect("clap requires a source");
    if src.n.is_some() || src.m.is_some() || src.variant.is_some() {
        return Err(Failure::usage("--N, --M and --variant apply to builders only"));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("circuit");
    let circuit =
        dsl::parse_document(&text, name).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?.circuit;
    let plate = match (prep, src.blocked) {
        (Some(p), _) => PlateState::Prepared(p),
        (None, true) => PlateState::Present,
        (None, false) => PlateState::Absent,
    };
    if plate != PlateState::Absent && circuit.plate_dim() != PlateDim::Two {
        return Err(Failure::usage(format!(
            "{}: --blocked/--alpha need a plate-controlled circuit (`plate dim=2` and `block ... when=plate`)",
            path.display()
        )));
    }
    let params = json!({"file": path.display().to_string(), "blocked": src.blocked, "plate": plate_label(plate)});
    Ok(Loaded { circuit, plate, params })
}

fn norm_check(total: f64) -> Result<Value, Failure> {
    let deviation = (total - 1.0).abs();
    if deviation.is_nan() || deviation > NORM_TOL {
        return Err(Failure::Numeric(format!("probabilities sum to {total}, off by {deviation:e}")));
    }
    Ok(json!({"total": total, "deviation": deviation, "passed": true}))
}

fn cmd_run(src: &Source) -> Result<Value, Failure> {
    let l = load(src)?;
    let out = l.circuit.propagate(&l.circuit.input_state(l.plate)?)?;
    let outcomes = l.circuit.outcomes(&out);
    let check = norm_check(outcomes.total())?;
    Ok(json!({
        "circuit": l.circuit.name(),
        "params": l.params,
        "probabilities": outcomes.as_map(),
        "norm_check": check,
    }))
}

#[derive(Serialize)]
struct EntryView<'a> {
    mode: &'a str,
    region: &'a str,
    plate: usize,
    t: usize,
    t_end: usize,
    forward: C64,
    backward: C64,
    overlap: C64,
    weak_value: Option<C64>,
    present: bool,
}

fn cmd_trace(src: &Source, post: &str, post_plate: Option<usize>, tol: Option<f64>) -> Result<Value, Failure> {
    let tol = resolve_tol(tol)?;
    let l = load(src)?;
    let c = &l.circuit;
    if let Some(q) = post_plate {
        if q >= c.plate_dim().dim() {
            return Err(Failure::usage(format!(
                "--post-plate {q} out of range for plate dimension {}",
                c.plate_dim().dim()
            )));
        }
    }
    let post_mode = c.mode(post)?;
    let tst = two_state_trajectory(c, &c.input_state(l.plate)?, post_mode, post_plate)?;
    let map = trace_map(c, &tst, tol)?;
    let report = counterfactuality_report(c, &map, &c.regions())?;
    let table = c.table();
    let entries: Vec<EntryView> = map
        .entries
        .iter()
        .map(|e| {
            let m = table.mode(e.mode);
            EntryView {
                mode: &m.label,
                region: m.region.as_str(),
                plate: e.plate,
                t: e.t,
                t_end: e.t_end,
                forward: e.forward,
                backward: e.backward,
                overlap: e.overlap,
                weak_value: e.weak_value,
                present: e.present,
            }
        })
        .collect();
    Ok(json!({
        "circuit": c.name(),
        "params": l.params,
        "post": post,
        "post_plate": post_plate,
        "post_amplitude": map.post_amplitude,
        "post_probability": tst.probability(),
        "tol": tol,
        "max_overlap": map.max_overlap,
        "steps": map.steps,
        "entries": entries,
        "verdict": report.verdict,
        "regions": report,
    }))
}

fn cmd_protocol(name: &str, n: usize, m: usize, opts: &ProtocolOpts) -> Result<Value, Failure> {
    if !PROTOCOLS.contains(&name) {
        return Err(Failure::usage(format!("unknown protocol `{name}` (one of {})", PROTOCOLS.join(", "))));
    }
    let report = run_protocol(name, &opts.config(n, m)?)?;
    if !report.outcome_probabilities.is_empty() {
        norm_check(report.total_probability())?;
    }
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

fn emit(text: &str) {
    // a closed pipe is not an error worth reporting
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit_json(v: Value) {
    let mut s = serde_json::to_string_pretty(&v).expect("json");
    s.push('\n');
    emit(&s);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { source } => cmd_run(source).map(emit_json),
        Command::Trace { source, post, post_plate, tol } => cmd_trace(source, post, *post_plate, *tol).map(emit_json),
        Command::Protocol { name, n, m, opts } => cmd_protocol(name, *n, *m, opts).map(emit_json),
        Command::Sweep { name, n, m, schedule, opts } => {
            sweep::run(name, n.as_deref(), *m, schedule.as_deref(), opts).map(|csv| emit(&csv))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cfsim: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
