//! Closure of the hierarchy by `F_k = ∏ F_1 + G_k`, with `G_k ≡ 0` above
//! the correlator cap.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::hamiltonian::MAX_PARTICLES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureKind {
    Vlasov,
    ProductPlusCorrelator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureSpec {
    pub kind: ClosureKind,
    /// Largest `k` with a free correlator `G_k`; 1 means none.
    pub cap: usize,
}

impl ClosureSpec {
    pub fn vlasov() -> Self {
        ClosureSpec {
            kind: ClosureKind::Vlasov,
            cap: 1,
        }
    }

    pub fn correlated(cap: usize) -> Result<Self> {
        let spec = ClosureSpec {
            kind: ClosureKind::ProductPlusCorrelator,
            cap,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ClosureKind::Vlasov if self.cap != 1 => Err(Error::InconsistentClosure(
                "the Vlasov closure has no correlators (cap must be 1)".into(),
            )),
            ClosureKind::ProductPlusCorrelator if self.cap < 2 => Err(Error::InconsistentClosure(
                "a correlator closure needs cap ≥ 2".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Unknown fields of a closed system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    /// One-particle distribution `F_1`.
    One,
    /// Correlator `G_k`, `k ≥ 2`.
    Correlator(usize),
}

impl Field {
    pub fn particles(self) -> usize {
        match self {
            Field::One => 1,
            Field::Correlator(k) => k,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::One => f.write_str("F1"),
            Field::Correlator(k) => write!(f, "G{k}"),
        }
    }
}

/// A field evaluated on a set of particles (0-based, increasing).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Factor {
    pub field: Field,
    pub particles: Vec<usize>,
}

/// Product of factors over disjoint particle sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Monomial {
    pub factors: Vec<Factor>,
}

impl Monomial {
    pub fn particles(&self) -> usize {
        self.factors.iter().map(|f| f.particles.len()).sum()
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| {
                let p: Vec<String> = x.particles.iter().map(|i| (i + 1).to_string()).collect();
                format!("{}({})", x.field, p.join(","))
            })
            .collect();
        f.write_str(&parts.join("*"))
    }
}

/// `F_k` under the closure: `F_1(1)⋯F_1(k)` plus `G_k(1..k)` when `2 ≤ k ≤ cap`.
pub fn expand_distribution(k: usize, cap: usize) -> Vec<Monomial> {
    let product = Monomial {
        factors: (0..k)
            .map(|i| Factor {
                field: Field::One,
                particles: vec![i],
            })
            .collect(),
    };
    let mut out = vec![product];
    if (2..=cap).contains(&k) {
        out.push(Monomial {
            factors: vec![Factor {
                field: Field::Correlator(k),
                particles: (0..k).collect(),
            }],
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    /// `∂_t` of an `s`-particle monomial.
    TimeDerivative,
    /// `L_s` applied to an `s`-particle monomial.
    Liouvillean,
    /// `(1/V^s) ∫ dμ_{s+1} Σ_i L_{i,s+1}` applied to an `(s+1)`-particle monomial.
    Collision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationTerm {
    pub kind: TermKind,
    pub sign: f64,
    pub monomial: Monomial,
}

/// `∂_t F_s + L_s F_s − (1/V^s) ∫dμ_{s+1} Σ_i L_{i,s+1} F_{s+1} = 0` with all
/// `F_k` expanded by the closure.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedEquation {
    pub particles: usize,
    /// Unknown whose Galerkin test space this equation uses.
    pub tested_field: Field,
    pub terms: Vec<EquationTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSystem {
    pub closure: ClosureSpec,
    pub s_max: usize,
    pub unknowns: Vec<Field>,
    pub equations: Vec<ClosedEquation>,
}

impl ClosedSystem {
    /// Largest particle count among unknowns and collision arguments.
    pub fn max_particles(&self) -> usize {
        self.equations
            .iter()
            .flat_map(|e| e.terms.iter().map(|t| t.monomial.particles()))
            .max()
            .unwrap_or(1)
    }

    /// True when no equation contains a product of unknowns.
    pub fn is_linear_in_unknowns(&self) -> bool {
        self.equations
            .iter()
            .all(|e| e.terms.iter().all(|t| t.monomial.degree() <= 1))
    }
}

impl fmt::Display for ClosedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for eq in &self.equations {
            write!(f, "[{}] ", eq.tested_field)?;
            for (i, t) in eq.terms.iter().enumerate() {
                let sign = if t.sign < 0.0 {
                    "-"
                } else if i > 0 {
                    "+"
                } else {
                    ""
                };
                let op = match t.kind {
                    TermKind::TimeDerivative => "dt".to_string(),
                    TermKind::Liouvillean => format!("L{}", eq.particles),
                    TermKind::Collision => format!("C{}", eq.particles),
                };
                write!(f, "{sign}{op}[{}] ", t.monomial)?;
            }
            writeln!(f, "= 0")?;
        }
        Ok(())
    }
}

/// Closes the hierarchy truncated at `s_max`.
pub fn apply_closure(spec: &ClosureSpec, s_max: usize) -> Result<ClosedSystem> {
    spec.validate()?;
    if s_max == 0 || s_max > MAX_PARTICLES {
        return Err(Error::InconsistentClosure(format!(
            "s_max = {s_max} outside 1..={MAX_PARTICLES}"
        )));
    }
    if spec.cap > s_max {
        return Err(Error::InconsistentClosure(format!(
            "correlator cap {} exceeds truncation order s_max = {s_max}",
            spec.cap
        )));
    }
    let mut unknowns = vec![Field::One];
    unknowns.extend((2..=spec.cap).map(Field::Correlator));
    let mut equations = Vec::new();
    for s in 1..=spec.cap {
        let mut terms = Vec::new();
        for m in expand_distribution(s, spec.cap) {
            terms.push(EquationTerm {
                kind: TermKind::TimeDerivative,
                sign: 1.0,
                monomial: m.clone(),
            });
            terms.push(EquationTerm {
                kind: TermKind::Liouvillean,
                sign: 1.0,
                monomial: m,
            });
        }
        for m in expand_distribution(s + 1, spec.cap) {
            terms.push(EquationTerm {
                kind: TermKind::Collision,
                sign: -1.0,
                monomial: m,
            });
        }
        let tested_field = if s == 1 {
            Field::One
        } else {
            Field::Correlator(s)
        };
        equations.push(ClosedEquation {
            particles: s,
            tested_field,
            terms,
        });
    }
    Ok(ClosedSystem {
        closure: *spec,
        s_max,
        unknowns,
        equations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vlasov_single_equation() {
        let c = apply_closure(&ClosureSpec::vlasov(), 2).unwrap();
        assert_eq!(c.unknowns, vec![Field::One]);
        assert_eq!(c.equations.len(), 1);
        let text = c.to_string();
        assert_eq!(
            text.trim(),
            "[F1] dt[F1(1)] +L1[F1(1)] -C1[F1(1)*F1(2)] = 0"
        );
        assert!(!c.is_linear_in_unknowns());
    }

    #[test]
    fn cap_exceeding_truncation_is_rejected() {
        let spec = ClosureSpec::correlated(3).unwrap();
        assert!(matches!(
            apply_closure(&spec, 2),
            Err(Error::InconsistentClosure(_))
        ));
    }

    #[test]
    fn vlasov_with_correlators_is_inconsistent() {
        let bad = ClosureSpec {
            kind: ClosureKind::Vlasov,
            cap: 2,
        };
        assert!(apply_closure(&bad, 3).is_err());
    }
}
