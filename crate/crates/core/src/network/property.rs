use crate::error::{Error, Result};

/// Boolean combination of linear output constraints.
///
/// `Atom { c, b }` holds at output `y` when `c·y > b`.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyFormula {
    Atom { c: Vec<f64>, b: f64 },
    And(Vec<PropertyFormula>),
    Or(Vec<PropertyFormula>),
}

impl PropertyFormula {
    pub fn atom(c: Vec<f64>, b: f64) -> Self {
        PropertyFormula::Atom { c, b }
    }

    /// Checks that the tree is non-empty and every atom has `output_dim` coefficients.
    pub fn validate(&self, output_dim: usize) -> Result<()> {
        match self {
            PropertyFormula::Atom { c, b } => {
                if c.len() != output_dim {
                    return Err(Error::Dimension {
                        expected: output_dim,
                        got: c.len(),
                    });
                }
                if c.iter().any(|v| !v.is_finite()) || !b.is_finite() {
                    return Err(Error::InvalidNetwork("non-finite property coefficient".into()));
                }
                Ok(())
            }
            PropertyFormula::And(children) | PropertyFormula::Or(children) => {
                if children.is_empty() {
                    return Err(Error::EmptyFormula);
                }
                children.iter().try_for_each(|ch| ch.validate(output_dim))
            }
        }
    }

    /// Evaluates the formula on a concrete output vector.
    pub fn holds(&self, y: &[f64]) -> bool {
        self.margin(y) > 0.0
    }

    /// Real-valued margin: positive exactly when the formula holds.
    pub fn margin(&self, y: &[f64]) -> f64 {
        match self {
            PropertyFormula::Atom { c, b } => c.iter().zip(y).map(|(ci, yi)| ci * yi).sum::<f64>() - b,
            PropertyFormula::And(ch) => ch.iter().map(|f| f.margin(y)).fold(f64::INFINITY, f64::min),
            PropertyFormula::Or(ch) => ch.iter().map(|f| f.margin(y)).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
