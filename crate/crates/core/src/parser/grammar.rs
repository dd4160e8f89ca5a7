//! Deterministic command grammar.
//!
//! ```text
//! command  := clause (sep clause)*          sep: "," ";" "." "and" "then"
//! clause   := lead* verb feature params
//!           | params                        (repeats the previous verb and feature)
//! feature  := det? (hint-word{0,3} noun | "it" | "them")
//! params   := (number unit? | axis | direction | sense | filler)*
//! ```
//!
//! Direction words follow a fixed frame: right/left = +X/-X,
//! forward/back = +Y/-Y, up/down = +Z/-Z. When an axis is also named, the
//! direction word only decides the sign ("3 mm forward along X" is +X).
//! Rotations default to the Z axis and are counterclockwise-positive
//! (right-hand rule); "clockwise" negates the angle.

use crate::feature::FeatureTerm;

use super::schema::{validate_schema, Axis, CommandEntry, FeatureRef, Operation, Sign, StructuredCommand};
use super::{Engine, FailureKind, ParseFailure, ParseResult};

#[derive(Debug, Clone, PartialEq)]
struct Tok {
    text: String,
    /// Character offset in the original input.
    start: usize,
}

/// Splits lowercased input into words, keeping character offsets. `None`
/// entries mark hard separators (",", ";", sentence stops).
fn lex(input: &str) -> Vec<Option<Tok>> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    let flush = |cur: &mut String, start: usize, out: &mut Vec<Option<Tok>>| {
        if !cur.is_empty() {
            out.push(Some(Tok {
                text: std::mem::take(cur),
                start,
            }));
        }
    };
    let numeric =
        |s: &str| s.chars().any(|c| c.is_ascii_digit()) && s.chars().all(|c| c.is_ascii_digit() || "+-.".contains(c));
    for (i, &c) in chars.iter().enumerate() {
        let next = chars.get(i + 1).copied();
        if c.is_whitespace() {
            flush(&mut cur, start, &mut out);
        } else if matches!(c, ',' | ';' | '!' | '?' | ':') {
            flush(&mut cur, start, &mut out);
            out.push(None);
        } else if c == '.' {
            let in_number = (cur.is_empty() || numeric(&cur) || cur == "-" || cur == "+")
                && next.is_some_and(|n| n.is_ascii_digit());
            if in_number {
                if cur.is_empty() {
                    start = i;
                }
                cur.push(c);
            } else {
                flush(&mut cur, start, &mut out);
                out.push(None);
            }
        } else if c == '°' || c == '%' {
            flush(&mut cur, start, &mut out);
            out.push(Some(Tok {
                text: c.to_string(),
                start: i,
            }));
        } else {
            let c = c.to_lowercase().next().unwrap_or(c);
            // split "3mm" and "45deg" at the digit/letter boundary
            let boundary = !cur.is_empty() && numeric(&cur) && c.is_alphabetic();
            if boundary {
                flush(&mut cur, start, &mut out);
            }
            if cur.is_empty() {
                start = i;
            }
            cur.push(c);
        }
    }
    flush(&mut cur, start, &mut out);
    out
}

fn clauses(pieces: Vec<Option<Tok>>) -> Vec<Vec<Tok>> {
    let mut out = vec![Vec::new()];
    for p in pieces {
        match p {
            Some(t) if t.text != "and" && t.text != "then" => out.last_mut().expect("non-empty").push(t),
            _ => out.push(Vec::new()),
        }
    }
    out.retain(|c| !c.is_empty());
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResizeMode {
    Neutral,
    Enlarge,
    Shrink,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verb {
    Move,
    Rotate,
    Delete,
    Resize(ResizeMode),
}

fn verb(word: &str) -> Option<Verb> {
    Some(match word {
        "move" | "translate" | "shift" | "slide" => Verb::Move,
        "rotate" | "turn" | "spin" => Verb::Rotate,
        "delete" | "remove" | "erase" | "suppress" => Verb::Delete,
        "scale" | "resize" => Verb::Resize(ResizeMode::Neutral),
        "enlarge" | "grow" | "expand" => Verb::Resize(ResizeMode::Enlarge),
        "shrink" | "reduce" => Verb::Resize(ResizeMode::Shrink),
        "double" => Verb::Resize(ResizeMode::Fixed(2.0)),
        "halve" => Verb::Resize(ResizeMode::Fixed(0.5)),
        _ => return None,
    })
}

const LEADS: &[&str] = &[
    "please",
    "first",
    "next",
    "also",
    "finally",
    "now",
    "afterwards",
    "lastly",
    "and",
    "then",
];
const DETERMINERS: &[&str] = &["the", "this", "that", "a", "an"];
const FILLERS: &[&str] = &[
    "the",
    "a",
    "an",
    "by",
    "of",
    "along",
    "with",
    "in",
    "on",
    "to",
    "toward",
    "towards",
    "about",
    "around",
    "axis",
    "direction",
    "its",
    "it",
    "amount",
    "distance",
    "angle",
    "at",
    "size",
    "original",
    "current",
    "feature",
    "from",
    "factor",
    "scale",
    "please",
];

fn word_number(w: &str) -> Option<f64> {
    Some(match w {
        "one" => 1.0,
        "two" => 2.0,
        "three" => 3.0,
        "four" => 4.0,
        "five" => 5.0,
        "six" => 6.0,
        "seven" => 7.0,
        "eight" => 8.0,
        "nine" => 9.0,
        "ten" => 10.0,
        "twelve" => 12.0,
        "fifteen" => 15.0,
        "twenty" => 20.0,
        "thirty" => 30.0,
        "forty-five" => 45.0,
        "sixty" => 60.0,
        "ninety" => 90.0,
        _ => return None,
    })
}

fn number(w: &str) -> Option<f64> {
    let body = w.trim_start_matches(['+', '-']);
    if body.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        && body.chars().all(|c| c.is_ascii_digit() || c == '.')
    {
        return w.parse::<f64>().ok().filter(|v| v.is_finite());
    }
    word_number(w)
}

/// "x", "+x", "-y-axis", "z-axis".
fn axis_word(w: &str) -> Option<(Axis, Option<Sign>)> {
    let (sign, rest) = match w.strip_prefix('+') {
        Some(r) => (Some(Sign::Plus), r),
        None => match w.strip_prefix('-') {
            Some(r) => (Some(Sign::Minus), r),
            None => (None, w),
        },
    };
    let rest = rest.strip_suffix("-axis").unwrap_or(rest);
    if rest.len() == 1 {
        Axis::parse(rest).map(|a| (a, sign))
    } else {
        None
    }
}

fn direction(w: &str) -> Option<(Axis, Sign)> {
    Some(match w {
        "right" | "rightward" | "rightwards" => (Axis::X, Sign::Plus),
        "left" | "leftward" | "leftwards" => (Axis::X, Sign::Minus),
        "forward" | "forwards" | "ahead" => (Axis::Y, Sign::Plus),
        "back" | "backward" | "backwards" => (Axis::Y, Sign::Minus),
        "up" | "upward" | "upwards" => (Axis::Z, Sign::Plus),
        "down" | "downward" | "downwards" => (Axis::Z, Sign::Minus),
        _ => return None,
    })
}

fn sense(w: &str) -> Option<f64> {
    match w {
        "clockwise" | "cw" => Some(-1.0),
        "counterclockwise" | "counter-clockwise" | "anticlockwise" | "anti-clockwise" | "ccw" => Some(1.0),
        _ => None,
    }
}

fn is_word(w: &str) -> bool {
    w.chars().all(|c| c.is_alphabetic() || c == '-') && w.chars().any(char::is_alphabetic)
}

struct Fail {
    offset: usize,
    reason: String,
}

fn fail<T>(offset: usize, reason: impl Into<String>) -> Result<T, Fail> {
    Err(Fail {
        offset,
        reason: reason.into(),
    })
}

/// Longest vocabulary match starting at `i`: returns the canonical name and
/// the number of words consumed.
fn feature_at(toks: &[Tok], i: usize) -> Option<(String, usize)> {
    (1..=4).rev().find_map(|n| {
        let words = toks.get(i..i + n)?;
        if !words.iter().all(|t| is_word(&t.text)) {
            return None;
        }
        let joined = words.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("_");
        FeatureTerm::parse(&joined)
            .ok()
            .map(|term| (term.name().to_string(), n))
    })
}

/// Values collected from the parameter part of a clause.
#[derive(Default)]
struct Params {
    distance: Option<(f64, usize)>,
    angle: Option<(f64, usize)>,
    percent: Option<(f64, usize, bool)>,
    factor: Option<(f64, usize)>,
    bare: Option<(f64, usize)>,
    axis: Option<(Axis, Option<Sign>)>,
    direction: Option<(Axis, Sign)>,
    polarity: Option<Sign>,
    sense: Option<f64>,
    half: bool,
    twice: bool,
    first_offset: Option<usize>,
}

fn set<T: Copy>(slot: &mut Option<T>, value: T, offset: usize, what: &str) -> Result<(), Fail> {
    if slot.is_some() {
        return fail(offset, format!("{what} given twice"));
    }
    *slot = Some(value);
    Ok(())
}

fn scan_params(toks: &[Tok], resize: bool) -> Result<Params, Fail> {
    let mut p = Params::default();
    let mut i = 0;
    let mut preposition_to = false;
    while let Some(t) = toks.get(i) {
        let w = t.text.as_str();
        if p.first_offset.is_none() && !FILLERS.contains(&w) {
            p.first_offset = Some(t.start);
        }
        if let Some(n) = number(w) {
            let unit = toks.get(i + 1).map(|u| u.text.as_str());
            let mut consumed = 1;
            match unit {
                Some("mm" | "millimeter" | "millimeters" | "millimetre" | "millimetres") => {
                    set(&mut p.distance, (n, t.start), t.start, "distance")?;
                    consumed = 2;
                }
                Some("cm" | "centimeter" | "centimeters" | "centimetre" | "centimetres") => {
                    set(&mut p.distance, (10.0 * n, t.start), t.start, "distance")?;
                    consumed = 2;
                }
                Some("degree" | "degrees" | "deg" | "°") => {
                    set(&mut p.angle, (n, t.start), t.start, "angle")?;
                    consumed = 2;
                }
                Some("%" | "percent") => {
                    set(&mut p.percent, (n, t.start, preposition_to), t.start, "percentage")?;
                    consumed = 2;
                }
                Some("x" | "times") if resize => {
                    set(&mut p.factor, (n, t.start), t.start, "factor")?;
                    consumed = 2;
                }
                _ => set(&mut p.bare, (n, t.start), t.start, "value")?,
            }
            i += consumed;
            continue;
        }
        if let Some(a) = axis_word(w) {
            if p.axis.is_some_and(|(prev, _)| prev != a.0) {
                return fail(t.start, format!("conflicting axis '{w}'"));
            }
            p.axis = Some(a);
        } else if let Some(d) = direction(w) {
            set(&mut p.direction, d, t.start, "direction")?;
        } else if let Some(s) = sense(w) {
            set(&mut p.sense, s, t.start, "rotation sense")?;
        } else if w == "positive" || w == "negative" {
            set(&mut p.polarity, Sign::parse(w).expect("listed"), t.start, "sign")?;
        } else if w == "half" {
            p.half = true;
        } else if w == "twice" {
            p.twice = true;
        } else if w == "to" {
            preposition_to = true;
        } else if w == "by" {
            preposition_to = false;
        } else if !FILLERS.contains(&w) {
            return fail(t.start, format!("unexpected word '{w}'"));
        }
        i += 1;
    }
    Ok(p)
}

fn build_op(verb: Verb, p: &Params, end: usize) -> Result<Operation, Fail> {
    let at = p.first_offset.unwrap_or(end);
    let stray = |what: &str| fail(at, format!("{what} does not apply to {}", verb_name(verb)));
    match verb {
        Verb::Delete => {
            if let Some(o) = p.first_offset {
                return fail(o, "delete takes no parameters");
            }
            Ok(Operation::Delete {})
        }
        Verb::Move => {
            if p.angle.is_some() || p.percent.is_some() || p.sense.is_some() || p.half || p.twice {
                return stray("an angle, percentage or rotation sense");
            }
            let (mut d, _) = p.distance.or(p.bare).ok_or(Fail {
                offset: end,
                reason: "move requires a distance".into(),
            })?;
            let (axis, mut sign) = match (p.axis, p.direction) {
                (Some((axis, explicit)), dir) => (
                    axis,
                    dir.map(|(_, s)| s).or(explicit).or(p.polarity).unwrap_or(Sign::Plus),
                ),
                (None, Some(d)) => d,
                (None, None) => {
                    if p.polarity.is_some() {
                        return fail(at, "a sign needs an axis");
                    }
                    return fail(end, "move requires an axis or a direction");
                }
            };
            if d < 0.0 {
                d = -d;
                sign = if sign == Sign::Plus { Sign::Minus } else { Sign::Plus };
            }
            Ok(Operation::Move {
                axis,
                sign,
                distance_mm: d,
            })
        }
        Verb::Rotate => {
            if p.distance.is_some() || p.percent.is_some() || p.direction.is_some() || p.half || p.twice {
                return stray("a distance, percentage or direction");
            }
            let (angle, _) = p.angle.or(p.bare).ok_or(Fail {
                offset: end,
                reason: "rotate requires an angle".into(),
            })?;
            let (axis, axis_sign) = p.axis.unwrap_or((Axis::Z, None));
            let mut angle = angle * p.sense.unwrap_or(1.0);
            if axis_sign == Some(Sign::Minus) {
                angle = -angle;
            }
            Ok(Operation::Rotate { axis, angle_deg: angle })
        }
        Verb::Resize(mode) => {
            if p.distance.is_some()
                || p.angle.is_some()
                || p.axis.is_some()
                || p.direction.is_some()
                || p.sense.is_some()
            {
                return stray("a distance, angle or axis");
            }
            let words = p.half as u8 + p.twice as u8;
            let values = p.percent.is_some() as u8 + p.factor.is_some() as u8 + p.bare.is_some() as u8;
            if words + values + matches!(mode, ResizeMode::Fixed(_)) as u8 > 1 {
                return fail(at, "more than one scale amount given");
            }
            let relative = |f: f64| match mode {
                ResizeMode::Shrink if f > 1.0 => 1.0 / f,
                _ => f,
            };
            let factor = if let ResizeMode::Fixed(f) = mode {
                f
            } else if p.half {
                0.5
            } else if p.twice {
                2.0
            } else if let Some((pct, _, to)) = p.percent {
                match (mode, to) {
                    (ResizeMode::Enlarge, false) => 1.0 + pct / 100.0,
                    (ResizeMode::Shrink, false) => 1.0 - pct / 100.0,
                    _ => pct / 100.0,
                }
            } else if let Some((f, _)) = p.factor.or(p.bare) {
                relative(f)
            } else {
                return fail(end, "resize requires a factor or percentage");
            };
            Ok(Operation::Resize { factor })
        }
    }
}

fn verb_name(v: Verb) -> &'static str {
    match v {
        Verb::Move => "move",
        Verb::Rotate => "rotate",
        Verb::Delete => "delete",
        Verb::Resize(_) => "resize",
    }
}

struct Context {
    verb: Verb,
    feature: FeatureRef,
}

fn parse_clause(toks: &[Tok], prev: Option<&Context>, end: usize) -> Result<(CommandEntry, Context), Fail> {
    let mut i = 0;
    while toks.get(i).is_some_and(|t| LEADS.contains(&t.text.as_str())) {
        i += 1;
    }
    let Some(first) = toks.get(i) else {
        return fail(end, "empty clause");
    };
    let v = match verb(&first.text) {
        Some(v) => v,
        None => {
            // elliptical continuation: "... and 2 mm along Z"
            let starts_params = number(&first.text).is_some() || first.text == "by";
            return match prev {
                Some(ctx) if starts_params => {
                    let p = scan_params(&toks[i..], matches!(ctx.verb, Verb::Resize(_)))?;
                    let op = build_op(ctx.verb, &p, end)?;
                    let entry = CommandEntry {
                        feature: ctx.feature.clone(),
                        operation: op,
                    };
                    Ok((
                        entry,
                        Context {
                            verb: ctx.verb,
                            feature: ctx.feature.clone(),
                        },
                    ))
                }
                _ => fail(
                    first.start,
                    format!(
                        "expected an operation verb (move, rotate, delete, resize), found '{}'",
                        first.text
                    ),
                ),
            };
        }
    };
    i += 1;
    let feature = match toks.get(i).map(|t| t.text.as_str()) {
        Some("it" | "them") => {
            let Some(ctx) = prev else {
                return fail(
                    toks[i].start,
                    format!("'{}' does not refer to an earlier feature", toks[i].text),
                );
            };
            i += 1;
            ctx.feature.clone()
        }
        _ => {
            if toks.get(i).is_some_and(|t| DETERMINERS.contains(&t.text.as_str())) {
                i += 1;
            }
            let here = toks.get(i).map_or(end, |t| t.start);
            let found = (0..=3).find_map(|skip| {
                let hint_ok = toks.get(i..i + skip)?.iter().all(|t| is_word(&t.text));
                if !hint_ok {
                    return None;
                }
                feature_at(toks, i + skip).map(|(name, n)| (skip, name, n))
            });
            let Some((skip, name, n)) = found else {
                return fail(here, "expected a feature name");
            };
            let hint = (skip > 0).then(|| {
                toks[i..i + skip]
                    .iter()
                    .map(|t| t.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            });
            i += skip + n;
            if toks.get(i).is_some_and(|t| t.text == "feature") {
                i += 1;
            }
            FeatureRef {
                feature_type: name,
                hint,
            }
        }
    };
    let p = scan_params(&toks[i..], matches!(v, Verb::Resize(_)))?;
    let op = build_op(v, &p, end)?;
    Ok((
        CommandEntry {
            feature: feature.clone(),
            operation: op,
        },
        Context { verb: v, feature },
    ))
}

/// Parses `text` with the offline grammar. Never panics; failures carry the
/// 1-based clause index and a character offset.
pub fn parse_with_grammar(text: &str) -> ParseResult {
    let total = text.chars().count();
    let unparseable = |clause: usize, offset: usize, reason: String| {
        ParseResult::failed(
            Engine::Grammar,
            ParseFailure {
                kind: FailureKind::Unparseable,
                reason,
                clause: Some(clause),
                offset: Some(offset),
                violations: Vec::new(),
            },
            Vec::new(),
        )
    };
    let cls = clauses(lex(text));
    if cls.is_empty() {
        return unparseable(1, 0, "empty command".into());
    }
    let mut commands = Vec::new();
    let mut prev: Option<Context> = None;
    for (k, toks) in cls.iter().enumerate() {
        let end = cls
            .get(k + 1)
            .and_then(|c| c.first())
            .map_or(total, |t| t.start)
            .min(toks.last().map_or(total, |t| t.start + t.text.chars().count()));
        match parse_clause(toks, prev.as_ref(), end) {
            Ok((entry, ctx)) => {
                commands.push(entry);
                prev = Some(ctx);
            }
            Err(f) => return unparseable(k + 1, f.offset, f.reason),
        }
    }
    let command = StructuredCommand {
        commands,
        verified: true,
    };
    match validate_schema(&command.to_value()) {
        Ok(c) => ParseResult::success(Engine::Grammar, c, Vec::new()),
        Err(violations) => ParseResult::failed(
            Engine::Grammar,
            ParseFailure {
                kind: FailureKind::SchemaInvalid,
                reason: "parsed values violate the command schema".into(),
                clause: None,
                offset: None,
                violations,
            },
            Vec::new(),
        ),
    }
}
