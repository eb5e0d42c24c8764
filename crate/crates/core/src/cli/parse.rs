//! Line-oriented history-spec language.
//!
//! ```text
//! # comment
//! system 2
//! init pure 1,0 0,0 0,0 0,0        # or: init mixed (the default)
//! gate h 0
//! gate cnot 0 1
//! premeasure e1 target=1 basis=r theta=0.4 phi=0
//! gate r 0 theta=0.3927 phi=0
//! premeasure e2 target=0 basis=h
//! measure e1 e2 theta=0.3
//! ```
//!
//! Gates between two `premeasure` lines form one evolution segment.
//! `measure` may appear anywhere after the events it names.

use std::fmt::{self, Write as _};

use crate::gates::RotationParams;
use crate::history::{
    EvolutionSegment, GateKind, GateOp, HistorySpec, InitialState, MeasuredEvent,
    PremeasureBasis, PremeasureEvent, MAX_EVENTS,
};
use crate::qstate::{C64, DEFAULT_MAX_QUBITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Semantic,
}

/// A diagnostic pointing at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Semantic => "semantic error",
        };
        write!(f, "{}:{}: {kind}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Source text together with the spec parsed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecDocument {
    pub text: String,
    pub spec: HistorySpec,
    /// Line of each event's `premeasure` directive.
    pub event_lines: Vec<usize>,
}

impl SpecDocument {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let (spec, event_lines) = parse_with_lines(text)?;
        Ok(Self {
            text: text.to_string(),
            spec,
            event_lines,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token {
                    text: &code[s..i],
                    column: code[..s].chars().count() + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &code[s..],
            column: code[..s].chars().count() + 1,
        });
    }
    out
}

struct Ctx {
    line: usize,
}

impl Ctx {
    fn err(&self, kind: ParseErrorKind, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn syntax(&self, tok: Token<'_>, message: impl Into<String>) -> ParseError {
        self.err(ParseErrorKind::Syntax, tok.column, message)
    }

    fn semantic(&self, tok: Token<'_>, message: impl Into<String>) -> ParseError {
        self.err(ParseErrorKind::Semantic, tok.column, message)
    }

    fn float(&self, tok: Token<'_>, s: &str) -> Result<f64, ParseError> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.syntax(tok, format!("expected a finite number, found `{s}`"))),
        }
    }

    fn index(&self, tok: Token<'_>, s: &str) -> Result<u32, ParseError> {
        s.parse::<u32>()
            .map_err(|_| self.syntax(tok, format!("expected a qubit index, found `{s}`")))
    }
}

/// Collects `theta=` and `phi=` options; anything else is an error.
fn angles(ctx: &Ctx, toks: &[Token<'_>]) -> Result<RotationParams, ParseError> {
    let mut p = RotationParams::projective();
    let mut seen = (false, false);
    for &t in toks {
        let (key, val) = t
            .text
            .split_once('=')
            .ok_or_else(|| ctx.syntax(t, format!("unexpected `{}`", t.text)))?;
        let slot = match key {
            "theta" if !seen.0 => {
                seen.0 = true;
                &mut p.theta
            }
            "phi" if !seen.1 => {
                seen.1 = true;
                &mut p.phi
            }
            "theta" | "phi" => return Err(ctx.syntax(t, format!("`{key}` given twice"))),
            _ => return Err(ctx.syntax(t, format!("unknown option `{key}`"))),
        };
        *slot = ctx.float(t, val)?;
    }
    Ok(p)
}

fn valid_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Default)]
struct Builder {
    d: Option<usize>,
    init: Option<InitialState>,
    segments: Vec<EvolutionSegment>,
    events: Vec<PremeasureEvent>,
    event_lines: Vec<usize>,
    measured: Vec<MeasuredEvent>,
}

impl Builder {
    fn need_system(&self, ctx: &Ctx, tok: Token<'_>) -> Result<usize, ParseError> {
        self.d
            .ok_or_else(|| ctx.semantic(tok, format!("`{}` before `system`", tok.text)))
    }

    fn qubit(&self, ctx: &Ctx, tok: Token<'_>, s: &str) -> Result<u32, ParseError> {
        let d = self.need_system(ctx, tok)?;
        let q = ctx.index(tok, s)?;
        if q as usize >= d {
            return Err(ctx.semantic(tok, format!("qubit {q} out of range for {d} system qubits")));
        }
        Ok(q)
    }

    fn system(&mut self, ctx: &Ctx, head: Token<'_>, args: &[Token<'_>]) -> Result<(), ParseError> {
        if self.d.is_some() {
            return Err(ctx.semantic(head, "`system` given twice"));
        }
        let [t] = args else {
            return Err(ctx.syntax(head, "`system` takes one qubit count"));
        };
        let d = ctx.index(*t, t.text)? as usize;
        if d == 0 || d > DEFAULT_MAX_QUBITS {
            return Err(ctx.semantic(*t, format!("system size {d} outside 1..={DEFAULT_MAX_QUBITS}")));
        }
        self.d = Some(d);
        Ok(())
    }

    fn init(&mut self, ctx: &Ctx, head: Token<'_>, args: &[Token<'_>]) -> Result<(), ParseError> {
        let d = self.need_system(ctx, head)?;
        if self.init.is_some() {
            return Err(ctx.semantic(head, "`init` given twice"));
        }
        let Some((kind, rest)) = args.split_first() else {
            return Err(ctx.syntax(head, "`init` needs `mixed` or `pure`"));
        };
        let init = match kind.text {
            "mixed" => {
                if let Some(t) = rest.first() {
                    return Err(ctx.syntax(*t, "`init mixed` takes no arguments"));
                }
                InitialState::MaximallyMixed
            }
            "pure" => {
                let amps = rest
                    .iter()
                    .map(|&t| {
                        let (re, im) = t
                            .text
                            .split_once(',')
                            .ok_or_else(|| ctx.syntax(t, "amplitude must be written re,im"))?;
                        Ok(C64::new(ctx.float(t, re)?, ctx.float(t, im)?))
                    })
                    .collect::<Result<Vec<_>, ParseError>>()?;
                if amps.len() != 1 << d {
                    return Err(ctx.semantic(
                        *kind,
                        format!("expected {} amplitudes, found {}", 1 << d, amps.len()),
                    ));
                }
                let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(ctx.semantic(*kind, format!("amplitudes have squared norm {norm}")));
                }
                InitialState::Pure(amps)
            }
            other => return Err(ctx.syntax(*kind, format!("unknown init kind `{other}`"))),
        };
        self.init = Some(init);
        Ok(())
    }

    fn gate(&mut self, ctx: &Ctx, head: Token<'_>, args: &[Token<'_>]) -> Result<(), ParseError> {
        self.need_system(ctx, head)?;
        let Some((name, rest)) = args.split_first() else {
            return Err(ctx.syntax(head, "`gate` needs a gate name"));
        };
        let split = rest.iter().position(|t| t.text.contains('=')).unwrap_or(rest.len());
        let (targets, opts) = rest.split_at(split);
        let kind = match name.text {
            "h" => GateKind::H,
            "x" => GateKind::X,
            "z" => GateKind::Z,
            "cnot" => GateKind::Cnot,
            "r" => GateKind::R(angles(ctx, opts)?),
            other => return Err(ctx.syntax(*name, format!("unknown gate `{other}`"))),
        };
        if !matches!(kind, GateKind::R(_)) {
            if let Some(t) = opts.first() {
                return Err(ctx.syntax(*t, format!("gate `{}` takes no angles", name.text)));
            }
        }
        if targets.len() != kind.arity() {
            return Err(ctx.syntax(
                *name,
                format!("gate `{}` takes {} target(s), found {}", name.text, kind.arity(), targets.len()),
            ));
        }
        let targets = targets
            .iter()
            .map(|&t| self.qubit(ctx, t, t.text))
            .collect::<Result<Vec<_>, _>>()?;
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(ctx.semantic(rest[1], "control and target coincide"));
        }
        self.segments
            .last_mut()
            .expect("one open segment")
            .gates
            .push(GateOp { kind, targets });
        Ok(())
    }

    fn premeasure(&mut self, ctx: &Ctx, head: Token<'_>, args: &[Token<'_>]) -> Result<(), ParseError> {
        self.need_system(ctx, head)?;
        let Some((label, rest)) = args.split_first() else {
            return Err(ctx.syntax(head, "`premeasure` needs a label"));
        };
        if !valid_label(label.text) || label.text.contains('=') {
            return Err(ctx.syntax(*label, format!("invalid label `{}`", label.text)));
        }
        if self.events.iter().any(|e| e.label == label.text) {
            return Err(ctx.semantic(*label, format!("label `{}` already names an event", label.text)));
        }
        let mut target = None;
        let mut basis = None;
        let mut angle_toks = Vec::new();
        let mut basis_tok = None;
        for &t in rest {
            match t.text.split_once('=') {
                Some(("target", v)) if target.is_none() => target = Some(self.qubit(ctx, t, v)?),
                Some(("basis", v)) if basis_tok.is_none() => {
                    basis_tok = Some(t);
                    basis = Some(v);
                }
                Some(("theta" | "phi", _)) => angle_toks.push(t),
                Some((k @ ("target" | "basis"), _)) => {
                    return Err(ctx.syntax(t, format!("`{k}` given twice")))
                }
                _ => return Err(ctx.syntax(t, format!("unexpected `{}`", t.text))),
            }
        }
        let target = target.ok_or_else(|| ctx.syntax(*label, "missing `target=`"))?;
        let basis = match basis_tok.zip(basis) {
            None => {
                if let Some(t) = angle_toks.first() {
                    return Err(ctx.syntax(*t, "angles need `basis=r`"));
                }
                None
            }
            Some((_, "h")) => {
                if let Some(t) = angle_toks.first() {
                    return Err(ctx.syntax(*t, "`basis=h` takes no angles"));
                }
                Some(PremeasureBasis::H)
            }
            Some((_, "r")) => Some(PremeasureBasis::Rotation(angles(ctx, &angle_toks)?)),
            Some((bt, other)) => return Err(ctx.syntax(bt, format!("unknown basis `{other}`"))),
        };
        if self.events.len() == MAX_EVENTS {
            return Err(ctx.semantic(head, format!("more than {MAX_EVENTS} events")));
        }
        self.events.push(PremeasureEvent {
            label: label.text.to_string(),
            target,
            basis,
        });
        self.event_lines.push(ctx.line);
        self.segments.push(EvolutionSegment::default());
        Ok(())
    }

    fn measure(&mut self, ctx: &Ctx, head: Token<'_>, args: &[Token<'_>]) -> Result<(), ParseError> {
        let split = args.iter().position(|t| t.text.contains('=')).unwrap_or(args.len());
        let (labels, opts) = args.split_at(split);
        if labels.is_empty() {
            return Err(ctx.syntax(head, "`measure` needs at least one label"));
        }
        let rotation = angles(ctx, opts)?;
        for &t in labels {
            if !self.events.iter().any(|e| e.label == t.text) {
                return Err(ctx.semantic(t, format!("undefined event `{}`", t.text)));
            }
            if self.measured.iter().any(|m| m.label == t.text) {
                return Err(ctx.semantic(t, format!("event `{}` measured twice", t.text)));
            }
            self.measured.push(MeasuredEvent {
                label: t.text.to_string(),
                rotation,
            });
        }
        Ok(())
    }
}

fn parse_with_lines(text: &str) -> Result<(HistorySpec, Vec<usize>), ParseError> {
    let mut b = Builder {
        segments: vec![EvolutionSegment::default()],
        ..Builder::default()
    };
    for (i, raw) in text.lines().enumerate() {
        let ctx = Ctx { line: i + 1 };
        let toks = tokenize(raw);
        let Some((&head, args)) = toks.split_first() else {
            continue;
        };
        match head.text {
            "system" => b.system(&ctx, head, args)?,
            "init" => b.init(&ctx, head, args)?,
            "gate" => b.gate(&ctx, head, args)?,
            "premeasure" => b.premeasure(&ctx, head, args)?,
            "measure" => b.measure(&ctx, head, args)?,
            other => return Err(ctx.syntax(head, format!("unknown directive `{other}`"))),
        }
    }
    let last = text.lines().count().max(1);
    let d = b.d.ok_or(ParseError {
        kind: ParseErrorKind::Semantic,
        line: last,
        column: 1,
        message: "missing `system` directive".into(),
    })?;
    let spec = HistorySpec {
        d,
        init: b.init.unwrap_or(InitialState::MaximallyMixed),
        segments: b.segments,
        events: b.events,
        measured: b.measured,
    };
    spec.validate().map_err(|e| ParseError {
        kind: ParseErrorKind::Semantic,
        line: last,
        column: 1,
        message: e.to_string(),
    })?;
    Ok((spec, b.event_lines))
}

pub fn parse_history_spec(text: &str) -> Result<HistorySpec, ParseError> {
    parse_with_lines(text).map(|(s, _)| s)
}

fn write_angles(out: &mut String, p: RotationParams) {
    let _ = write!(out, " theta={} phi={}", p.theta, p.phi);
}

/// Canonical text for a spec. Floats use shortest round-trip formatting,
/// so parsing the output gives back an equal spec.
pub fn serialize_spec(spec: &HistorySpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system {}", spec.d);
    match &spec.init {
        InitialState::MaximallyMixed => out.push_str("init mixed\n"),
        InitialState::Pure(a) => {
            out.push_str("init pure");
            for z in a {
                let _ = write!(out, " {},{}", z.re, z.im);
            }
            out.push('\n');
        }
    }
    for (l, seg) in spec.segments.iter().enumerate() {
        for g in &seg.gates {
            let name = match g.kind {
                GateKind::H => "h",
                GateKind::X => "x",
                GateKind::Z => "z",
                GateKind::Cnot => "cnot",
                GateKind::R(_) => "r",
            };
            out.push_str("gate ");
            out.push_str(name);
            for t in &g.targets {
                let _ = write!(out, " {t}");
            }
            if let GateKind::R(p) = g.kind {
                write_angles(&mut out, p);
            }
            out.push('\n');
        }
        if let Some(e) = spec.events.get(l) {
            let _ = write!(out, "premeasure {} target={}", e.label, e.target);
            match e.basis {
                None => {}
                Some(PremeasureBasis::H) => out.push_str(" basis=h"),
                Some(PremeasureBasis::Rotation(p)) => {
                    out.push_str(" basis=r");
                    write_angles(&mut out, p);
                }
            }
            out.push('\n');
        }
    }
    for m in &spec.measured {
        let _ = write!(out, "measure {}", m.label);
        write_angles(&mut out, m.rotation);
        out.push('\n');
    }
    out
}
