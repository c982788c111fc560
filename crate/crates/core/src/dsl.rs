//! Line-oriented text format for circuits (`.cf` files).
//!
//! ```text
//! # comment
//! plate dim=1
//! mode L region=alice
//! mode D kind=detector
//! input L
//! detect D
//! layer
//! bs L R theta=pi/4
//! ```
//!
//! Directives: `mode`, `plate`, `input`, `detect`, `layer`, `mark`, the
//! element lines `bs`, `phase`, `block`, `route` (inside a layer), and
//! `use <builder> key=value...` which stands alone and expands to a
//! canonical circuit.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::builders::{Blocking, BuilderSpec, NestedVariant};
use crate::circuit::{Angle, Circuit, CircuitBuilder, CircuitError, Control, Element, Step};
use crate::statespace::{ModeIdx, ModeKind, PlateDim, Region};

/// A parse failure at a 1-based line and column.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {col}: {message}")]
pub struct DslError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

pub type DslResult<T> = Result<T, DslError>;

/// Parsed file with positions for diagnostics.
#[derive(Clone, Debug)]
pub struct CircuitDocument {
    pub source: String,
    pub circuit: Circuit,
    /// Line of each mode declaration, by label.
    pub mode_lines: HashMap<String, usize>,
    /// Line of each `layer` directive, in order.
    pub layer_lines: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
struct Token<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let body = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in body.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token { text: &body[s..i], col: body[..s].chars().count() + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &body[s..], col: body[..s].chars().count() + 1 });
    }
    out
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '\'' | '+' | '-'))
}

/// Parses `pi`, `-pi/4`, `3*pi/8`, an integer zero, or a radian literal.
pub fn parse_angle(s: &str) -> Option<Angle> {
    if s == "0" {
        return Some(Angle::zero());
    }
    if s.contains("pi") {
        let (sign, rest) = match s.strip_prefix('-') {
            Some(r) => (-1i64, r),
            None => (1, s.strip_prefix('+').unwrap_or(s)),
        };
        let (num, rest) = match rest.split_once("*") {
            Some((n, r)) => (n.parse::<i64>().ok()?, r),
            None => (1, rest),
        };
        let rest = rest.strip_prefix("pi")?;
        let den = match rest {
            "" => 1,
            r => r.strip_prefix('/')?.parse::<u64>().ok().filter(|&d| d > 0)?,
        };
        return Some(Angle::pi_frac(sign * num, den));
    }
    s.parse::<f64>().ok().filter(|x| x.is_finite()).map(Angle::radians)
}

type Options<'a> = Vec<(Token<'a>, &'a str)>;

struct Parser<'a> {
    line: usize,
    toks: Vec<Token<'a>>,
}

impl<'a> Parser<'a> {
    fn err(&self, col: usize, msg: impl fmt::Display) -> DslError {
        DslError { line: self.line, col, message: msg.to_string() }
    }

    fn at(&self, tok: &Token, msg: impl fmt::Display) -> DslError {
        self.err(tok.col, msg)
    }

    /// Positional arguments and `key=value` options after the directive.
    fn split(&self) -> DslResult<(Vec<Token<'a>>, Options<'a>)> {
        let mut pos = Vec::new();
        let mut kv = Vec::new();
        for t in &self.toks[1..] {
            match t.text.split_once('=') {
                Some((k, v)) => {
                    if k.is_empty() || v.is_empty() {
                        return Err(self.at(t, format!("malformed option `{}`", t.text)));
                    }
                    kv.push((Token { text: k, col: t.col }, v));
                }
                None => {
                    if !kv.is_empty() {
                        return Err(self.at(t, "positional argument after options"));
                    }
                    pos.push(*t);
                }
            }
        }
        Ok((pos, kv))
    }

    fn arity(&self, pos: &[Token], n: usize, what: &str) -> DslResult<()> {
        if pos.len() != n {
            let col = pos.get(n).map_or(self.toks[0].col, |t| t.col);
            return Err(self.err(col, format!("`{}` takes {n} {what}", self.toks[0].text)));
        }
        Ok(())
    }

    fn only_keys(&self, kv: &[(Token, &str)], allowed: &[&str]) -> DslResult<()> {
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.text)) {
            return Err(self.at(k, format!("unknown option `{}` for `{}`", k.text, self.toks[0].text)));
        }
        Ok(())
    }

    fn mode(&self, b: &CircuitBuilder, t: &Token) -> DslResult<ModeIdx> {
        b.lookup(t.text).map_err(|_| self.at(t, format!("unknown mode `{}`", t.text)))
    }

    fn angle(&self, kv: &[(Token, &str)], key: &str) -> DslResult<Angle> {
        let (k, v) = kv
            .iter()
            .find(|(k, _)| k.text == key)
            .ok_or_else(|| self.err(self.toks[0].col, format!("`{}` needs {key}=<angle>", self.toks[0].text)))?;
        parse_angle(v).ok_or_else(|| self.at(k, format!("invalid angle `{v}`")))
    }

    fn circuit_error(&self, e: CircuitError) -> DslError {
        let label = match &e {
            CircuitError::ModeCollision { mode, .. } | CircuitError::TerminalReused(mode) => Some(mode.clone()),
            CircuitError::DistinctModesRequired(m) => Some(m.clone()),
            CircuitError::NotPath { mode, .. } => Some(mode.clone()),
            CircuitError::PlateControlNeedsQubit(m) => Some(m.clone()),
            _ => None,
        };
        let col =
            label.and_then(|l| self.toks[1..].iter().find(|t| t.text == l).map(|t| t.col)).unwrap_or(self.toks[0].col);
        let msg = match e {
            CircuitError::DistinctModesRequired(m) => format!("distinct modes required (got `{m}` twice)"),
            e => e.to_string(),
        };
        self.err(col, msg)
    }
}

/// Parses a document; the circuit is named `name`.
pub fn parse_document(source: &str, name: &str) -> DslResult<CircuitDocument> {
    let mut b = CircuitBuilder::new(name, PlateDim::One);
    let mut mode_lines = HashMap::new();
    let mut layer_lines = Vec::new();
    let mut input_seen = false;
    let mut detect_seen = false;
    let mut used: Option<(usize, Circuit)> = None;
    let mut other_directive: Option<(usize, usize)> = None;
    let mut in_layer = false;
    let mut last_line = 1;

    for (i, raw) in source.lines().enumerate() {
        let p = Parser { line: i + 1, toks: tokens(raw) };
        last_line = i + 1;
        let Some(head) = p.toks.first().copied() else { continue };
        if let Some((line, _)) = &used {
            return Err(p.at(&head, format!("`use` on line {line} cannot be combined with other directives")));
        }
        if head.text != "use" && other_directive.is_none() {
            other_directive = Some((p.line, head.col));
        }
        let (pos, kv) = p.split()?;
        match head.text {
            "use" => {
                if let Some((line, _)) = other_directive {
                    return Err(p.at(&head, format!("`use` cannot follow other directives (line {line})")));
                }
                used = Some((p.line, expand_use(&p, &pos, &kv, name)?));
            }
            "plate" => {
                p.arity(&pos, 0, "no positional arguments")?;
                p.only_keys(&kv, &["dim"])?;
                if !layer_lines.is_empty() {
                    return Err(p.at(&head, "`plate` must precede the first layer"));
                }
                let (k, v) = kv.first().ok_or_else(|| p.at(&head, "`plate` needs dim=<1|2>"))?;
                let dim = v
                    .parse()
                    .ok()
                    .and_then(PlateDim::from_dim)
                    .ok_or_else(|| p.at(k, format!("plate dim must be 1 or 2, got `{v}`")))?;
                b.set_plate_dim(dim);
            }
            "mode" => {
                p.arity(&pos, 1, "label")?;
                p.only_keys(&kv, &["region", "kind"])?;
                let label = pos[0];
                if !valid_label(label.text) {
                    return Err(p.at(&label, format!("invalid mode label `{}`", label.text)));
                }
                let mut region = Region::Alice;
                let mut kind = ModeKind::Path;
                for (k, v) in &kv {
                    match k.text {
                        "region" => {
                            region = Region::parse(v).ok_or_else(|| p.at(k, format!("unknown region `{v}`")))?
                        }
                        _ => {
                            kind = match *v {
                                "path" => ModeKind::Path,
                                "detector" => ModeKind::Detector,
                                _ => return Err(p.at(k, format!("unknown kind `{v}` (path or detector)"))),
                            }
                        }
                    }
                }
                b.mode(label.text, kind, region)
                    .map_err(|_| p.at(&label, format!("duplicate mode `{}`", label.text)))?;
                mode_lines.insert(label.text.to_string(), p.line);
            }
            "input" => {
                p.arity(&pos, 1, "mode")?;
                p.only_keys(&kv, &[])?;
                let m = p.mode(&b, &pos[0])?;
                b.input(m).map_err(|e| p.circuit_error(e))?;
                input_seen = true;
            }
            "detect" => {
                if pos.is_empty() {
                    return Err(p.at(&head, "`detect` needs at least one mode"));
                }
                p.only_keys(&kv, &[])?;
                for t in &pos {
                    let m = p.mode(&b, t)?;
                    b.detect(m).map_err(|e| p.at(t, e))?;
                }
                detect_seen = true;
            }
            "layer" => {
                p.arity(&pos, 0, "no arguments")?;
                p.only_keys(&kv, &[])?;
                b.begin_layer();
                layer_lines.push(p.line);
                in_layer = true;
            }
            "mark" => {
                p.arity(&pos, 1, "name")?;
                p.only_keys(&kv, &[])?;
                b.mark(pos[0].text);
            }
            "bs" | "phase" | "block" | "route" => {
                if !in_layer {
                    return Err(p.at(&head, format!("`{}` outside a layer", head.text)));
                }
                let step = match head.text {
                    "bs" => {
                        p.arity(&pos, 2, "modes")?;
                        p.only_keys(&kv, &["theta"])?;
                        Step::Bs(p.mode(&b, &pos[0])?, p.mode(&b, &pos[1])?, p.angle(&kv, "theta")?)
                    }
                    "phase" => {
                        p.arity(&pos, 1, "mode")?;
                        p.only_keys(&kv, &["phi"])?;
                        Step::Phase(p.mode(&b, &pos[0])?, p.angle(&kv, "phi")?)
                    }
                    "block" => {
                        p.arity(&pos, 1, "mode")?;
                        p.only_keys(&kv, &["when"])?;
                        let control = match kv.first() {
                            None => Control::Always,
                            Some((_, "plate")) => Control::WhenPlatePresent,
                            Some((k, v)) => {
                                return Err(p.at(k, format!("unknown condition `{v}` (expected when=plate)")))
                            }
                        };
                        Step::Block(p.mode(&b, &pos[0])?, control)
                    }
                    _ => {
                        p.arity(&pos, 2, "modes")?;
                        p.only_keys(&kv, &[])?;
                        Step::Route(p.mode(&b, &pos[0])?, p.mode(&b, &pos[1])?)
                    }
                };
                b.push(step).map_err(|e| p.circuit_error(e))?;
            }
            other => return Err(p.at(&head, format!("unknown directive `{other}`"))),
        }
    }

    let circuit = match used {
        Some((_, c)) => c,
        None => {
            let end = |msg: &str| DslError { line: last_line, col: 1, message: msg.into() };
            if !input_seen {
                return Err(end("missing `input` directive"));
            }
            if !detect_seen {
                return Err(end("missing `detect` directive"));
            }
            b.build().map_err(|e| end(&e.to_string()))?
        }
    };
    Ok(CircuitDocument { source: source.to_string(), circuit, mode_lines, layer_lines })
}

fn expand_use(p: &Parser, pos: &[Token], kv: &[(Token, &str)], name: &str) -> DslResult<Circuit> {
    p.arity(pos, 1, "builder name")?;
    p.only_keys(kv, &["N", "M", "n", "m", "plate", "blocked", "variant"])?;
    let mut n = None;
    let mut m = None;
    let mut plate = 1usize;
    let mut blocked = false;
    let mut variant = None;
    for (k, v) in kv {
        let int = || v.parse::<usize>().map_err(|_| p.at(k, format!("`{}` needs an integer, got `{v}`", k.text)));
        match k.text {
            "N" | "n" => n = Some(int()?),
            "M" | "m" => m = Some(int()?),
            "plate" => {
                plate = int()?;
                if plate != 1 && plate != 2 {
                    return Err(p.at(k, format!("plate must be 1 or 2, got `{v}`")));
                }
            }
            "blocked" => {
                blocked = match *v {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(p.at(k, format!("blocked must be 0 or 1, got `{v}`"))),
                }
            }
            _ => variant = Some(v.parse::<NestedVariant>().map_err(|e| p.at(k, e))?),
        }
    }
    let spec = BuilderSpec::from_name(pos[0].text, n, m, variant).map_err(|e| p.at(&pos[0], e))?;
    let blocking = if plate == 2 { Blocking::PlateControlled } else { Blocking::from_flag(blocked) };
    let c = spec.build(blocking).map_err(|e| p.at(&pos[0], e))?;
    Ok(c.with_name(name))
}

/// Parses a document into a circuit named `circuit`.
pub fn parse(source: &str) -> DslResult<Circuit> {
    parse_document(source, "circuit").map(|d| d.circuit)
}

/// Canonical text: declared modes by index, layers in sequence, markers at
/// their timesteps. Sinks are implied by the blockers.
pub fn serialize(c: &Circuit) -> String {
    let mut out = String::new();
    let table = c.table();
    let _ = writeln!(out, "# {}", c.name());
    let _ = writeln!(out, "plate dim={}", c.plate_dim().dim());
    for m in table.iter().filter(|m| m.kind != ModeKind::Sink) {
        let _ = writeln!(out, "mode {} region={} kind={}", m.label, m.region, m.kind.as_str());
    }
    let _ = writeln!(out, "input {}", c.label(c.input()));
    let dets: Vec<&str> = c.detectors().iter().map(|&d| c.label(d)).collect();
    let _ = writeln!(out, "detect {}", dets.join(" "));
    let mut marks: Vec<(usize, &str)> = c.markers().iter().map(|(k, &t)| (t, k.as_str())).collect();
    marks.sort();
    let mut marks = marks.into_iter().peekable();
    for (t, layer) in c.layers().iter().enumerate() {
        while let Some((_, name)) = marks.next_if(|(mt, _)| *mt == t) {
            let _ = writeln!(out, "mark {name}");
        }
        out.push_str("layer\n");
        for el in layer {
            let _ = match *el {
                Element::BeamSplitter { a, b, theta } => {
                    writeln!(out, "bs {} {} theta={theta}", c.label(a), c.label(b))
                }
                Element::PhaseShift { mode, phi } => writeln!(out, "phase {} phi={phi}", c.label(mode)),
                Element::Blocker { mode, control: Control::Always, .. } => writeln!(out, "block {}", c.label(mode)),
                Element::Blocker { mode, control: Control::WhenPlatePresent, .. } => {
                    writeln!(out, "block {} when=plate", c.label(mode))
                }
                Element::Route { from, to } => writeln!(out, "route {} {}", c.label(from), c.label(to)),
            };
        }
    }
    for (_, name) in marks {
        let _ = writeln!(out, "mark {name}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{mzi, nested_zeno, ChainParams};
    use crate::statespace::PlateState;

    const FIG1: &str = "\
mode L region=alice
mode R region=bob
mode D kind=detector
mode other kind=detector
input L
detect D other
layer
bs L R theta=pi/4
layer
bs L R theta=pi/4
layer
route L D
route R other
";

    #[test]
    fn parses_simple_mzi() {
        let c = parse(FIG1).unwrap();
        let out = c.propagate(&c.input_state(PlateState::Absent).unwrap()).unwrap();
        assert!(c.outcomes(&out).detector("D").unwrap() < 1e-24);
    }

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi/4"), Some(Angle::pi_frac(1, 4)));
        assert_eq!(parse_angle("-pi/2"), Some(Angle::pi_frac(-1, 2)));
        assert_eq!(parse_angle("3*pi/8"), Some(Angle::pi_frac(3, 8)));
        assert_eq!(parse_angle("pi"), Some(Angle::pi_frac(1, 1)));
        assert_eq!(parse_angle("0.25"), Some(Angle::radians(0.25)));
        assert_eq!(parse_angle("pi/0"), None);
        assert_eq!(parse_angle("x"), None);
    }

    #[test]
    fn same_modes_rejected_with_position() {
        let doc = "mode X\nmode Y\nlayer\nbs X X theta=pi/4\n";
        let e = parse(doc).unwrap_err();
        assert_eq!(e.line, 4);
        assert_eq!(e.col, 4);
        assert!(e.message.contains("distinct modes required"), "{e}");
    }

    #[test]
    fn diagnostics() {
        let cases = [
            ("frobnicate\n", 1, 1, "unknown directive"),
            ("mode A\nmode A\n", 2, 6, "duplicate mode"),
            ("mode A\nmode B\nlayer\nbs A B theta=pi/4\nphase A phi=pi\n", 5, 7, "more than one element"),
            ("mode A\nmode D kind=detector\ndetect D\n", 3, 1, "missing `input`"),
            ("mode A\ninput A\n", 2, 1, "missing `detect`"),
            ("mode A\nbs A A theta=pi\n", 2, 1, "outside a layer"),
            ("mode A\nlayer\nblock A when=plate\n", 3, 7, "plate dimension 2"),
            ("mode A region=moon\n", 1, 8, "unknown region"),
            ("mode A\nlayer\nphase A phi=abc\n", 3, 9, "invalid angle"),
            ("use nested_zeno N=2\nmode A\n", 2, 1, "cannot be combined"),
        ];
        for (doc, line, col, msg) in cases {
            let e = parse(doc).unwrap_err();
            assert_eq!((e.line, e.col), (line, col), "{doc:?}: {e}");
            assert!(e.message.contains(msg), "{doc:?}: {e}");
        }
    }

    #[test]
    fn use_matches_builder() {
        let c = parse("use nested_zeno N=2 M=2 plate=1").unwrap();
        let b = nested_zeno(ChainParams::new(2, 2).unwrap(), Blocking::Free).unwrap();
        assert_eq!(c.transfer_distance(&b).unwrap(), 0.0);
        let q = parse("use nested_zeno N=2 M=2 plate=2").unwrap();
        assert_eq!(q.plate_dim(), PlateDim::Two);
    }

    #[test]
    fn round_trip_is_stable() {
        let c = mzi(Blocking::PlateControlled);
        let text = serialize(&c);
        let back = parse(&text).unwrap();
        assert!(c.transfer_distance(&back).unwrap() < 1e-12);
        assert_eq!(serialize(&back.with_name(c.name())), text);
        assert!(text.contains("mode O region=bob kind=path"));
    }
}
