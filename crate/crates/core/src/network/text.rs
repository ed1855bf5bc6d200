//! Text formats for networks (`plnn 1`), properties (s-expressions), and boxes.
//!
//! Network files are line oriented with `#` comments:
//!
//! ```text
//! plnn 1
//! input 2
//! linear 2 2
//! 1 1
//! -1 -1
//! 0 0
//! relu
//! linear 1 2
//! -1 -1
//! 0
//! ```
//!
//! `maxpool <n>` is followed by `n` lines `<size> <idx...>`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Activation, BoxDomain, LinearLayer, Network, PropertyFormula};
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("")))
                .map(|(i, l)| (i, l.split_whitespace().collect::<Vec<_>>()))
                .filter(|(_, t)| !t.is_empty()),
        );
        Lines {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.inner.next() {
            Some((n, t)) => {
                self.last = n;
                Ok((n, t))
            }
            None => Err(Error::parse(self.last + 1, format!("unexpected end of input, expected {what}"))),
        }
    }

    fn done(&mut self) -> bool {
        self.inner.peek().is_none()
    }
}

fn num(line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("expected a finite number, found `{tok}`")))
}

fn count(line: usize, tok: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::parse(line, format!("expected a non-negative integer, found `{tok}`")))
}

fn numbers(line: usize, toks: &[&str], expected: usize) -> Result<Vec<f64>> {
    if toks.len() != expected {
        return Err(Error::parse(line, format!("expected {expected} values, found {}", toks.len())));
    }
    toks.iter().map(|t| num(line, t)).collect()
}

pub fn parse_network(text: &str) -> Result<Network> {
    let mut lines = Lines::new(text);
    let (n, head) = lines.next("header")?;
    if head != ["plnn", "1"] {
        return Err(Error::parse(n, "expected header `plnn 1`"));
    }
    let (n, inp) = lines.next("input declaration")?;
    if inp.len() != 2 || inp[0] != "input" {
        return Err(Error::parse(n, "expected `input <d>`"));
    }
    let mut width = count(n, inp[1])?;
    let mut linears = Vec::new();
    let mut activations = Vec::new();
    while !lines.done() {
        let (n, toks) = lines.next("layer")?;
        match toks[0] {
            "linear" => {
                if toks.len() != 3 {
                    return Err(Error::parse(n, "expected `linear <rows> <cols>`"));
                }
                let (rows, cols) = (count(n, toks[1])?, count(n, toks[2])?);
                if cols != width {
                    return Err(Error::parse(n, format!("layer expects {cols} inputs but previous width is {width}")));
                }
                if linears.len() > activations.len() {
                    return Err(Error::parse(n, "two consecutive linear layers"));
                }
                let mut w = DMatrix::zeros(rows, cols);
                for i in 0..rows {
                    let (m, t) = lines.next("weight row")?;
                    let row = numbers(m, &t, cols)?;
                    for (j, v) in row.into_iter().enumerate() {
                        w[(i, j)] = v;
                    }
                }
                let (m, t) = lines.next("bias row")?;
                let b = numbers(m, &t, rows)?;
                linears.push(LinearLayer::new(w, DVector::from_vec(b)).map_err(|e| Error::parse(n, e.to_string()))?);
                width = rows;
            }
            "relu" | "maxpool" => {
                if linears.len() != activations.len() + 1 {
                    return Err(Error::parse(n, "activation must follow a linear layer"));
                }
                if toks[0] == "relu" {
                    activations.push(Activation::Relu);
                } else {
                    if toks.len() != 2 {
                        return Err(Error::parse(n, "expected `maxpool <n_groups>`"));
                    }
                    let groups_n = count(n, toks[1])?;
                    let mut groups = Vec::with_capacity(groups_n);
                    for _ in 0..groups_n {
                        let (m, t) = lines.next("maxpool group")?;
                        let size = count(m, t[0])?;
                        if t.len() != size + 1 {
                            return Err(Error::parse(m, format!("group declares {size} indices, found {}", t.len() - 1)));
                        }
                        groups.push(t[1..].iter().map(|s| count(m, s)).collect::<Result<Vec<_>>>()?);
                    }
                    let act = Activation::MaxPool(groups);
                    act.validate(width).map_err(|e| Error::parse(n, e.to_string()))?;
                    width = act.output_width(width);
                    activations.push(act);
                }
            }
            other => return Err(Error::parse(n, format!("unknown layer kind `{other}`"))),
        }
    }
    if linears.len() != activations.len() + 1 {
        return Err(Error::parse(lines.last, "network must end with a linear layer"));
    }
    Network::new(linears, activations)
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_network(net: &Network) -> String {
    let mut s = String::new();
    writeln!(s, "plnn 1").unwrap();
    writeln!(s, "input {}", net.input_dim()).unwrap();
    for (k, lin) in net.linears().iter().enumerate() {
        writeln!(s, "linear {} {}", lin.rows(), lin.cols()).unwrap();
        for i in 0..lin.rows() {
            writeln!(s, "{}", join(lin.weights().row(i).iter().copied())).unwrap();
        }
        writeln!(s, "{}", join(lin.bias().iter().copied())).unwrap();
        match net.activations().get(k) {
            Some(Activation::Relu) => writeln!(s, "relu").unwrap(),
            Some(Activation::MaxPool(groups)) => {
                writeln!(s, "maxpool {}", groups.len()).unwrap();
                for g in groups {
                    let idx: Vec<String> = g.iter().map(|i| i.to_string()).collect();
                    writeln!(s, "{} {}", g.len(), idx.join(" ")).unwrap();
                }
            }
            None => {}
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, usize),
    List(Vec<Sexp>, usize),
}

fn tokenize(text: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let spaced = line.replace('(', " ( ").replace(')', " ) ");
        out.extend(spaced.split_whitespace().map(|t| (t.to_string(), i + 1)));
    }
    out
}

fn parse_sexp(tokens: &[(String, usize)], pos: &mut usize) -> Result<Sexp> {
    let Some((tok, line)) = tokens.get(*pos) else {
        let last = tokens.last().map_or(1, |t| t.1);
        return Err(Error::parse(last, "unexpected end of property"));
    };
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some((t, _)) if t == ")" => {
                        *pos += 1;
                        return Ok(Sexp::List(items, *line));
                    }
                    Some(_) => items.push(parse_sexp(tokens, pos)?),
                    None => return Err(Error::parse(*line, "unclosed `(`")),
                }
            }
        }
        ")" => Err(Error::parse(*line, "unexpected `)`")),
        _ => Ok(Sexp::Atom(tok.clone(), *line)),
    }
}

fn to_formula(e: &Sexp) -> Result<PropertyFormula> {
    let Sexp::List(items, line) = e else {
        let Sexp::Atom(t, line) = e else { unreachable!() };
        return Err(Error::parse(*line, format!("expected a list, found `{t}`")));
    };
    let Some(Sexp::Atom(head, _)) = items.first() else {
        return Err(Error::parse(*line, "list must start with `atom`, `and` or `or`"));
    };
    match head.as_str() {
        "atom" => {
            let mut vals = Vec::new();
            let mut split = None;
            for it in &items[1..] {
                match it {
                    Sexp::Atom(t, _) if t == ";" => split = Some(vals.len()),
                    Sexp::Atom(t, l) => vals.push(num(*l, t)?),
                    Sexp::List(_, l) => return Err(Error::parse(*l, "atom takes numbers only")),
                }
            }
            let cut = split.unwrap_or(vals.len().saturating_sub(1));
            if vals.len() < 2 || cut + 1 != vals.len() {
                return Err(Error::parse(*line, "atom needs coefficients followed by one threshold"));
            }
            let b = vals[cut];
            vals.truncate(cut);
            Ok(PropertyFormula::Atom { c: vals, b })
        }
        "and" | "or" => {
            let ch = items[1..].iter().map(to_formula).collect::<Result<Vec<_>>>()?;
            if ch.is_empty() {
                return Err(Error::EmptyFormula);
            }
            Ok(if head == "and" {
                PropertyFormula::And(ch)
            } else {
                PropertyFormula::Or(ch)
            })
        }
        other => Err(Error::parse(*line, format!("unknown form `{other}`"))),
    }
}

/// Parses `(atom c_1 .. c_k b)`, `(and ...)`, `(or ...)`.
///
/// Inside an atom a `;` may separate the coefficients from the threshold.
pub fn parse_property(text: &str) -> Result<PropertyFormula> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyFormula);
    }
    let mut pos = 0;
    let e = parse_sexp(&tokens, &mut pos)?;
    if let Some((t, l)) = tokens.get(pos) {
        return Err(Error::parse(*l, format!("trailing input `{t}`")));
    }
    to_formula(&e)
}

pub fn write_property(f: &PropertyFormula) -> String {
    fn go(f: &PropertyFormula, out: &mut String) {
        match f {
            PropertyFormula::Atom { c, b } => {
                write!(out, "(atom {} ; {})", join(c.iter().copied()), b).unwrap();
            }
            PropertyFormula::And(ch) | PropertyFormula::Or(ch) => {
                out.push_str(if matches!(f, PropertyFormula::And(_)) { "(and" } else { "(or" });
                for c in ch {
                    out.push(' ');
                    go(c, out);
                }
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    go(f, &mut s);
    s.push('\n');
    s
}

/// Parses `lower: v...` and `upper: v...` lines.
pub fn parse_box(text: &str) -> Result<BoxDomain> {
    let mut lower = None;
    let mut upper = None;
    let mut last = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        last = i + 1;
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(i + 1, "expected `lower:` or `upper:`"))?;
        let vals = rest
            .split_whitespace()
            .map(|t| num(i + 1, t))
            .collect::<Result<Vec<_>>>()?;
        match key.trim() {
            "lower" => lower = Some(vals),
            "upper" => upper = Some(vals),
            k => return Err(Error::parse(i + 1, format!("unknown key `{k}`"))),
        }
    }
    let lower = lower.ok_or_else(|| Error::parse(last + 1, "missing `lower:` line"))?;
    let upper = upper.ok_or_else(|| Error::parse(last + 1, "missing `upper:` line"))?;
    BoxDomain::new(lower, upper)
}

pub fn write_box(b: &BoxDomain) -> String {
    format!(
        "lower: {}\nupper: {}\n",
        join(b.lower().iter().copied()),
        join(b.upper().iter().copied())
    )
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Network> {
    parse_network(&std::fs::read_to_string(path)?)
}

pub fn read_property(path: impl AsRef<Path>) -> Result<PropertyFormula> {
    parse_property(&std::fs::read_to_string(path)?)
}

pub fn read_box(path: impl AsRef<Path>) -> Result<BoxDomain> {
    parse_box(&std::fs::read_to_string(path)?)
}
