use std::fmt::Write as _;

use rayon::prelude::*;

use cfsim_core::builders::{zeno_presence_chain, zeno_survival, Blocking};
use cfsim_core::protocols::{run_protocol, PROTOCOLS};

use crate::failure::Failure;
use crate::ProtocolOpts;

/// Inclusive `a..b`, a comma list, or one value.
pub fn parse_range(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::usage(format!("invalid range `{s}`"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(Failure::usage(format!("empty range `{s}`: lower bound exceeds upper bound")));
        }
        return Ok((a..=b).collect());
    }
    let v: Vec<usize> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err(Failure::usage("empty range"));
    }
    Ok(v)
}

/// `N:M` pairs, comma separated.
pub fn parse_schedule(s: &str) -> Result<Vec<(usize, usize)>, Failure> {
    let v: Vec<(usize, usize)> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (n, m) =
                p.trim().split_once(':').ok_or_else(|| Failure::usage(format!("schedule entry `{p}` is not N:M")))?;
            let parse =
                |x: &str| x.parse::<usize>().map_err(|_| Failure::usage(format!("schedule entry `{p}` is not N:M")));
            Ok((parse(n)?, parse(m)?))
        })
        .collect::<Result<_, Failure>>()?;
    if v.is_empty() {
        return Err(Failure::usage("empty schedule"));
    }
    Ok(v)
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn zeno_row(n: usize) -> Result<Vec<String>, Failure> {
    let c = zeno_presence_chain(n, Blocking::Blocked)?;
    let out = c.propagate(&c.input_state(cfsim_core::statespace::PlateState::Absent)?)?;
    let p = c.outcomes(&out).detector("D").unwrap_or(0.0);
    Ok(vec![n.to_string(), num(p), num(zeno_survival(n))])
}

/// CSV text with a header row, one row per tuple in input order.
pub fn run(
    name: &str,
    n: Option<&str>,
    m: usize,
    schedule: Option<&str>,
    opts: &ProtocolOpts,
) -> Result<String, Failure> {
    let tuples: Vec<(usize, usize)> = match (n, schedule) {
        (_, Some(s)) => parse_schedule(s)?,
        (Some(r), None) => parse_range(r)?.into_iter().map(|n| (n, m)).collect(),
        (None, None) => return Err(Failure::usage("sweep needs --n or --schedule")),
    };
    let (header, rows): (Vec<String>, Vec<Vec<String>>) = if name == "zeno_survival" {
        let rows = tuples.par_iter().map(|&(n, _)| zeno_row(n)).collect::<Result<Vec<_>, _>>()?;
        (vec!["N".into(), "p_detect".into(), "closed_form".into()], rows)
    } else if PROTOCOLS.contains(&name) {
        let reports = tuples
            .par_iter()
            .map(|&(n, m)| Ok::<_, Failure>(run_protocol(name, &opts.config(n, m)?)?))
            .collect::<Result<Vec<_>, _>>()?;
        let metric_keys: Vec<String> = reports[0].metrics.keys().cloned().collect();
        let mut header: Vec<String> = ["N", "M", "success_probability", "fidelity", "verdict"].map(String::from).into();
        header.extend(metric_keys.iter().cloned());
        let rows = tuples
            .iter()
            .zip(&reports)
            .map(|(&(n, m), r)| {
                let mut row = vec![
                    n.to_string(),
                    m.to_string(),
                    num(r.success_probability),
                    r.fidelity.map(num).unwrap_or_default(),
                    r.verdict().map(|v| v.as_str().to_string()).unwrap_or_default(),
                ];
                row.extend(metric_keys.iter().map(|k| r.metrics.get(k).copied().map(num).unwrap_or_default()));
                row
            })
            .collect();
        (header, rows)
    } else {
        return Err(Failure::usage(format!(
            "unknown sweep `{name}` (zeno_survival or one of {})",
            PROTOCOLS.join(", ")
        )));
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}
