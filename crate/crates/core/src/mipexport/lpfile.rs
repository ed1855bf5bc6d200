use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{BinarySite, MipModel, MipRow, MipVar, VarKind};
use crate::error::{Error, Result};
use crate::lp::Relation;

const WRAP: usize = 200;

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn terms(model: &MipModel, coeffs: &[(usize, f64)]) -> Vec<String> {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &(j, c))| {
            let name = &model.vars[j].name;
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            let body = if mag == 1.0 { name.clone() } else { format!("{} {name}", num(mag)) };
            match (i, sign) {
                (0, "+") => body,
                (0, _) => format!("- {body}"),
                _ => format!("{sign} {body}"),
            }
        })
        .collect()
}

fn push_wrapped(out: &mut String, head: &str, parts: &[String], tail: &str) {
    let mut line = format!(" {head}");
    for p in parts {
        if line.len() + p.len() + 1 > WRAP {
            out.push_str(&line);
            out.push('\n');
            line = "  ".into();
        }
        line.push(' ');
        line.push_str(p);
    }
    line.push_str(tail);
    out.push_str(&line);
    out.push('\n');
}

fn relation(r: Relation) -> &'static str {
    match r {
        Relation::Le => "<=",
        Relation::Ge => ">=",
        Relation::Eq => "=",
    }
}

/// The model in CPLEX LP format.
pub fn to_lp_string(model: &MipModel) -> String {
    let mut out = String::from("Minimize\n");
    match &model.objective {
        Some(obj) => push_wrapped(&mut out, "obj:", &terms(model, obj), ""),
        None => out.push_str(" obj:\n"),
    }
    out.push_str("Subject To\n");
    for row in &model.rows {
        let tail = format!(" {} {}", relation(row.relation), num(row.rhs));
        push_wrapped(&mut out, &format!("{}:", row.name), &terms(model, &row.coeffs), &tail);
    }
    out.push_str("Bounds\n");
    for v in &model.vars {
        let line = match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => format!("{} free", v.name),
            _ if v.lower == v.upper => format!("{} = {}", v.name, num(v.lower)),
            (true, false) => format!("{} >= {}", v.name, num(v.lower)),
            _ => format!("{} <= {} <= {}", num(v.lower), v.name, num(v.upper)),
        };
        let _ = writeln!(out, " {line}");
    }
    let binaries: Vec<&MipVar> = model.vars.iter().filter(|v| v.kind == VarKind::Binary).collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for v in binaries {
            let _ = writeln!(out, " {}", v.name);
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp_file(model: &MipModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_lp_string(model))?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Objective,
    Rows,
    Bounds,
    Binary,
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| Error::parse(line, format!("bad number `{tok}`"))),
    }
}

fn parse_relation(tok: &str, line: usize) -> Result<Relation> {
    match tok {
        "<=" | "=<" | "<" => Ok(Relation::Le),
        ">=" | "=>" | ">" => Ok(Relation::Ge),
        "=" => Ok(Relation::Eq),
        _ => Err(Error::parse(line, format!("expected a relation, got `{tok}`"))),
    }
}

/// Binary site recorded from a `d<i>_j` name, if it has that shape.
fn site_from_name(name: &str, var: usize) -> Option<BinarySite> {
    let (i, j) = name.strip_prefix('d')?.split_once('_')?;
    let (i, j): (usize, usize) = (i.parse().ok()?, j.parse().ok()?);
    Some(BinarySite {
        var,
        layer: i.checked_sub(1)?,
        unit: j.checked_sub(1)?,
    })
}

#[derive(Default)]
struct Reader {
    vars: Vec<MipVar>,
    index: HashMap<String, usize>,
}

impl Reader {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.vars.push(MipVar {
            name: name.to_string(),
            lower: 0.0,
            upper: f64::INFINITY,
            kind: VarKind::Continuous,
        });
        self.index.insert(name.to_string(), self.vars.len() - 1);
        self.vars.len() - 1
    }

    /// Parses `[sign] [coef] name ...` up to an optional relation.
    fn linear(&mut self, toks: &[(&str, usize)]) -> Result<(Vec<(usize, f64)>, usize)> {
        let mut coeffs = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        let mut k = 0;
        while k < toks.len() {
            let (t, line) = toks[k];
            match t {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">" => break,
                _ => {
                    if let Ok(c) = t.parse::<f64>() {
                        if coef.replace(c).is_some() {
                            return Err(Error::parse(line, "two coefficients in a row"));
                        }
                    } else {
                        let v = self.var(t);
                        coeffs.push((v, sign * coef.take().unwrap_or(1.0)));
                        sign = 1.0;
                    }
                }
            }
            k += 1;
        }
        if coef.is_some() {
            let line = toks.last().map_or(0, |t| t.1);
            return Err(Error::parse(line, "constant terms are not supported"));
        }
        Ok((coeffs, k))
    }
}

fn tokens(lines: &[(usize, &str)]) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for &(n, l) in lines {
        for t in l.split_whitespace() {
            // `name:expr` and `-x` are split into separate tokens.
            let mut rest = t;
            if let Some(pos) = rest.find(':') {
                out.push((rest[..=pos].to_string(), n));
                rest = &rest[pos + 1..];
            }
            if rest.len() > 1 && (rest.starts_with('-') || rest.starts_with('+')) && rest[1..].starts_with(|c: char| c.is_alphabetic()) {
                out.push((rest[..1].to_string(), n));
                rest = &rest[1..];
            }
            if !rest.is_empty() {
                out.push((rest.to_string(), n));
            }
        }
    }
    out
}

/// Reads CPLEX LP text of the shape produced by [`to_lp_string`].
///
/// Variables are numbered by their order in the `Bounds` section, then by
/// first appearance elsewhere.
pub fn parse_lp(text: &str) -> Result<MipModel> {
    let mut sections: Vec<(Section, Vec<(usize, &str)>)> = Vec::new();
    let mut ended = false;
    for (n, raw) in text.lines().enumerate() {
        let n = n + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(Error::parse(n, "text after End"));
        }
        let header = match line.to_ascii_lowercase().as_str() {
            "minimize" | "minimum" | "min" => Some(Section::Objective),
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
            "bounds" | "bound" => Some(Section::Bounds),
            "binary" | "binaries" | "bin" => Some(Section::Binary),
            "end" => {
                ended = true;
                continue;
            }
            "maximize" | "maximum" | "max" => return Err(Error::parse(n, "only minimisation is supported")),
            _ => None,
        };
        match header {
            Some(s) => sections.push((s, Vec::new())),
            None => match sections.last_mut() {
                Some((_, body)) => body.push((n, line)),
                None => return Err(Error::parse(n, "content before the objective section")),
            },
        }
    }
    if !ended {
        return Err(Error::parse(text.lines().count(), "missing End"));
    }

    let mut r = Reader::default();
    let mut binary_names = Vec::new();
    for (sec, body) in &sections {
        match sec {
            Section::Bounds => {
                for &(n, line) in body {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    match toks[..] {
                        [name, f] if f.eq_ignore_ascii_case("free") => {
                            let v = r.var(name);
                            r.vars[v].lower = f64::NEG_INFINITY;
                            r.vars[v].upper = f64::INFINITY;
                        }
                        [name, op, val] => {
                            let v = r.var(name);
                            let val = parse_num(val, n)?;
                            match parse_relation(op, n)? {
                                Relation::Eq => (r.vars[v].lower, r.vars[v].upper) = (val, val),
                                Relation::Ge => r.vars[v].lower = val,
                                Relation::Le => r.vars[v].upper = val,
                            }
                        }
                        [lo, op1, name, op2, hi] => {
                            if parse_relation(op1, n)? != Relation::Le || parse_relation(op2, n)? != Relation::Le {
                                return Err(Error::parse(n, "expected `lo <= name <= hi`"));
                            }
                            let v = r.var(name);
                            r.vars[v].lower = parse_num(lo, n)?;
                            r.vars[v].upper = parse_num(hi, n)?;
                        }
                        _ => return Err(Error::parse(n, format!("unrecognised bound `{line}`"))),
                    }
                }
            }
            Section::Binary => binary_names.extend(body.iter().flat_map(|(_, l)| l.split_whitespace())),
            _ => {}
        }
    }

    let mut model = MipModel {
        vars: Vec::new(),
        rows: Vec::new(),
        objective: None,
        binaries: Vec::new(),
    };
    for (sec, body) in &sections {
        let toks = tokens(body);
        let toks: Vec<(&str, usize)> = toks.iter().map(|(t, n)| (t.as_str(), *n)).collect();
        match sec {
            Section::Objective => {
                let start = usize::from(toks.first().is_some_and(|t| t.0.ends_with(':')));
                let (coeffs, used) = r.linear(&toks[start..])?;
                if start + used != toks.len() {
                    return Err(Error::parse(toks[start + used].1, "unexpected relation in objective"));
                }
                model.objective = (!coeffs.is_empty()).then_some(coeffs);
            }
            Section::Rows => {
                let mut k = 0;
                while k < toks.len() {
                    let (head, n) = toks[k];
                    let name = head
                        .strip_suffix(':')
                        .ok_or_else(|| Error::parse(n, "every row needs a `name:` label"))?;
                    k += 1;
                    let (coeffs, used) = r.linear(&toks[k..])?;
                    k += used;
                    if k + 1 >= toks.len() {
                        return Err(Error::parse(n, format!("row `{name}` has no right-hand side")));
                    }
                    let relation = parse_relation(toks[k].0, toks[k].1)?;
                    let rhs = parse_num(toks[k + 1].0, toks[k + 1].1)?;
                    k += 2;
                    model.rows.push(MipRow {
                        name: name.to_string(),
                        coeffs,
                        relation,
                        rhs,
                    });
                }
            }
            _ => {}
        }
    }
    for name in binary_names {
        let v = r.var(name);
        let var = &mut r.vars[v];
        var.kind = VarKind::Binary;
        if !var.upper.is_finite() {
            var.upper = 1.0;
        }
        model.binaries.push(site_from_name(name, v).unwrap_or(BinarySite {
            var: v,
            layer: 0,
            unit: 0,
        }));
    }
    model.vars = r.vars;
    Ok(model)
}
