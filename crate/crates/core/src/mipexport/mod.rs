//! Big-M mixed-integer models of a canonical problem.
//!
//! [`encode_mip`] turns a problem and a set of pre-activation bounds into a
//! [`MipModel`]: one binary per ambiguous ReLU and per MaxPool input, every
//! other unit encoded linearly. [`write_lp_file`] emits the model in CPLEX
//! LP format and [`parse_lp`] reads that format back.

mod lpfile;

use std::fmt;
use std::str::FromStr;

pub use lpfile::{parse_lp, to_lp_string, write_lp_file};

use crate::bounds::{unit_phase, LayerBounds, UnitPhase};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::network::{Activation, CanonicalProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BigMVariant {
    /// `x ≤ u·δ`, `x ≤ x̂ − l·(1 − δ)`.
    Tjeng,
    /// Both constants replaced by `M = max(−l, u)`.
    SymmetricM,
}

impl FromStr for BigMVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tjeng" => Ok(BigMVariant::Tjeng),
            "symmetric" | "symmetricm" | "symmetric-m" => Ok(BigMVariant::SymmetricM),
            _ => Err(Error::Config(format!("unknown big-M variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveMode {
    /// Minimise the output.
    Minimize,
    /// No objective; the output is constrained to be non-positive.
    Feasibility,
}

impl FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minimize" | "min" => Ok(ObjectiveMode::Minimize),
            "feasibility" | "feas" => Ok(ObjectiveMode::Feasibility),
            _ => Err(Error::Config(format!("unknown objective mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipVar {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipRow {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A ReLU unit or MaxPool input carrying a binary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinarySite {
    pub var: usize,
    /// Linear layer whose pre-activation the binary refers to.
    pub layer: usize,
    pub unit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipModel {
    pub vars: Vec<MipVar>,
    pub rows: Vec<MipRow>,
    /// Minimise `objective` (sparse) when present.
    pub objective: Option<Vec<(usize, f64)>>,
    pub binaries: Vec<BinarySite>,
}

impl MipModel {
    fn add_var(&mut self, name: String, lower: f64, upper: f64, kind: VarKind) -> usize {
        self.vars.push(MipVar {
            name,
            lower,
            upper,
            kind,
        });
        self.vars.len() - 1
    }

    fn add_row(&mut self, name: String, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(MipRow {
            name,
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// The LP obtained by fixing each binary to `values[i]` (in `binaries` order), or relaxing them to `[0, 1]`.
    pub fn to_lp(&self, values: Option<&[f64]>) -> Result<LinearProgram> {
        if let Some(v) = values {
            if v.len() != self.binaries.len() {
                return Err(Error::Dimension {
                    expected: self.binaries.len(),
                    got: v.len(),
                });
            }
        }
        let mut lp = LinearProgram::new(0);
        for var in &self.vars {
            lp.add_var(var.lower, var.upper);
        }
        if let Some(v) = values {
            for (site, &val) in self.binaries.iter().zip(v) {
                lp.set_bounds(site.var, val, val);
            }
        }
        for row in &self.rows {
            lp.add_constraint(row.coeffs.clone(), row.relation, row.rhs);
        }
        if let Some(obj) = &self.objective {
            for &(j, c) in obj {
                lp.objective[j] += c;
            }
        }
        Ok(lp)
    }
}

impl fmt::Display for MipModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_lp_string(self))
    }
}

fn ambiguous_bounds(bounds: &LayerBounds, k: usize, j: usize) -> Result<(f64, f64)> {
    let (l, u) = bounds.get(k, j);
    if !(l.is_finite() && u.is_finite()) {
        return Err(Error::MissingBounds { layer: k, unit: j });
    }
    Ok((l, u))
}

/// Encodes `problem` as a big-M MIP using `bounds` for the pre-activations.
///
/// Variables are named `x0_j` (input), `xh<i>_j` (pre-activation of linear
/// layer `i`), `x<i>_j` (activation output) and `d<i>_j` (binaries), with
/// layers and units counted from 1.
pub fn encode_mip(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    variant: BigMVariant,
    objective: ObjectiveMode,
) -> Result<MipModel> {
    let net = problem.net();
    let dom = problem.domain();
    let n = net.num_linear();
    if bounds.num_layers() != n {
        return Err(Error::Dimension {
            expected: n,
            got: bounds.num_layers(),
        });
    }
    let mut m = MipModel {
        vars: Vec::new(),
        rows: Vec::new(),
        objective: None,
        binaries: Vec::new(),
    };
    let mut prev: Vec<usize> = (0..dom.dim())
        .map(|j| m.add_var(format!("x0_{}", j + 1), dom.lower()[j], dom.upper()[j], VarKind::Continuous))
        .collect();

    for (k, lin) in net.linears().iter().enumerate() {
        let i = k + 1;
        if bounds.lower[k].len() != lin.rows() {
            return Err(Error::Dimension {
                expected: lin.rows(),
                got: bounds.lower[k].len(),
            });
        }
        let hidden = k + 1 < n;
        let pre: Vec<usize> = (0..lin.rows())
            .map(|j| {
                let (l, u) = if hidden {
                    bounds.get(k, j)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                };
                m.add_var(format!("xh{i}_{}", j + 1), l, u, VarKind::Continuous)
            })
            .collect();
        for (j, &v) in pre.iter().enumerate() {
            let mut row = vec![(v, 1.0)];
            for (c, &p) in prev.iter().enumerate() {
                let w = lin.weights()[(j, c)];
                if w != 0.0 {
                    row.push((p, -w));
                }
            }
            m.add_row(format!("lin{i}_{}", j + 1), row, Relation::Eq, lin.bias()[j]);
        }
        if !hidden {
            match objective {
                ObjectiveMode::Minimize => m.objective = Some(vec![(pre[0], 1.0)]),
                ObjectiveMode::Feasibility => m.add_row("out".into(), vec![(pre[0], 1.0)], Relation::Le, 0.0),
            }
            break;
        }
        prev = match &net.activations()[k] {
            Activation::Relu => encode_relu_layer(&mut m, bounds, k, &pre, variant)?,
            Activation::MaxPool(groups) => encode_maxpool_layer(&mut m, bounds, k, &pre, groups)?,
        };
    }
    Ok(m)
}

fn encode_relu_layer(
    m: &mut MipModel,
    bounds: &LayerBounds,
    k: usize,
    pre: &[usize],
    variant: BigMVariant,
) -> Result<Vec<usize>> {
    let i = k + 1;
    let mut out = Vec::with_capacity(pre.len());
    for (j, &xh) in pre.iter().enumerate() {
        let name = format!("x{i}_{}", j + 1);
        let tag = format!("relu{i}_{}", j + 1);
        let (l, u) = bounds.get(k, j);
        match unit_phase(l, u, None) {
            UnitPhase::Blocked => out.push(m.add_var(name, 0.0, 0.0, VarKind::Continuous)),
            UnitPhase::Passing => {
                let x = m.add_var(name, 0.0, f64::INFINITY, VarKind::Continuous);
                m.add_row(format!("{tag}_pass"), vec![(x, 1.0), (xh, -1.0)], Relation::Eq, 0.0);
                out.push(x);
            }
            UnitPhase::Ambiguous => {
                let (l, u) = ambiguous_bounds(bounds, k, j)?;
                let x = m.add_var(name, 0.0, f64::INFINITY, VarKind::Continuous);
                let d = m.add_var(format!("d{i}_{}", j + 1), 0.0, 1.0, VarKind::Binary);
                m.binaries.push(BinarySite {
                    var: d,
                    layer: k,
                    unit: j,
                });
                let (cu, cl) = match variant {
                    BigMVariant::Tjeng => (u, -l),
                    BigMVariant::SymmetricM => {
                        let big = (-l).max(u);
                        (big, big)
                    }
                };
                m.add_row(format!("{tag}_a"), vec![(x, 1.0)], Relation::Ge, 0.0);
                m.add_row(format!("{tag}_b"), vec![(x, 1.0), (xh, -1.0)], Relation::Ge, 0.0);
                m.add_row(format!("{tag}_c"), vec![(x, 1.0), (d, -cu)], Relation::Le, 0.0);
                m.add_row(format!("{tag}_d"), vec![(x, 1.0), (xh, -1.0), (d, cl)], Relation::Le, cl);
                out.push(x);
            }
        }
    }
    Ok(out)
}

fn encode_maxpool_layer(
    m: &mut MipModel,
    bounds: &LayerBounds,
    k: usize,
    pre: &[usize],
    groups: &[Vec<usize>],
) -> Result<Vec<usize>> {
    let i = k + 1;
    let mut out = Vec::with_capacity(groups.len());
    for (g, members) in groups.iter().enumerate() {
        let tag = format!("pool{i}_{}", g + 1);
        let y = m.add_var(format!("x{i}_{}", g + 1), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous);
        out.push(y);
        if let [only] = members[..] {
            m.add_row(format!("{tag}_eq"), vec![(y, 1.0), (pre[only], -1.0)], Relation::Eq, 0.0);
            continue;
        }
        let mut top = f64::NEG_INFINITY;
        for &j in members {
            top = top.max(ambiguous_bounds(bounds, k, j)?.1);
        }
        let mut sum = Vec::with_capacity(members.len());
        for &j in members {
            let l = bounds.lower[k][j];
            let d = m.add_var(format!("d{i}_{}", j + 1), 0.0, 1.0, VarKind::Binary);
            m.binaries.push(BinarySite {
                var: d,
                layer: k,
                unit: j,
            });
            let big = top - l;
            m.add_row(format!("{tag}_ge{}", j + 1), vec![(y, 1.0), (pre[j], -1.0)], Relation::Ge, 0.0);
            m.add_row(
                format!("{tag}_le{}", j + 1),
                vec![(y, 1.0), (pre[j], -1.0), (d, big)],
                Relation::Le,
                big,
            );
            sum.push((d, 1.0));
        }
        m.add_row(format!("{tag}_one"), sum, Relation::Eq, 1.0);
    }
    Ok(out)
}
