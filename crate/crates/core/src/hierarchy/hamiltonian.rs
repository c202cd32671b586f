//! Hamiltonians with rational potentials and their Liouvillean operators.

use std::fmt;

use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};

use super::rational::RationalFunction;

/// Largest number of particles handled by the hierarchy.
pub const MAX_PARTICLES: usize = 3;

/// Truncated single-particle phase box `[q0, q0+Lq) × [p0, p0+Lp)`, periodized
/// on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBox {
    pub q_start: f64,
    pub q_length: f64,
    pub p_start: f64,
    pub p_length: f64,
}

impl PhaseBox {
    pub fn measure(&self) -> f64 {
        self.q_length * self.p_length
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.q_start, self.q_length, self.p_start, self.p_length]
            .iter()
            .all(|v| v.is_finite())
            && self.q_length > 0.0
            && self.p_length > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid phase box {self:?}")))
        }
    }
}

/// Identical particles of mass `m` with one external potential `U(q)` and
/// one symmetric pair potential `U(q1, q2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    mass: BigRational,
    external: RationalFunction,
    pair: RationalFunction,
    coupling: f64,
    domain: PhaseBox,
    volume: f64,
}

impl HamiltonianSpec {
    /// `external` is a function of one variable (q), `pair` of two (q1, q2).
    pub fn new(
        mass: BigRational,
        external: RationalFunction,
        pair: RationalFunction,
        domain: PhaseBox,
        volume: Option<f64>,
    ) -> Result<Self> {
        if mass <= BigRational::from_integer(0.into()) {
            return Err(Error::Config("particle mass must be positive".into()));
        }
        if external.vars() != 1 || pair.vars() != 2 {
            return Err(Error::Shape(
                "external potential takes one variable, pair potential two".into(),
            ));
        }
        if !pair.equals(&pair.swap_vars(0, 1)) {
            return Err(Error::Config(
                "pair potential must be symmetric under q1 <-> q2".into(),
            ));
        }
        domain.validate()?;
        let volume = volume.unwrap_or_else(|| domain.measure());
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::Config(format!("invalid volume {volume}")));
        }
        Ok(HamiltonianSpec {
            mass,
            external,
            pair,
            coupling: 1.0,
            domain,
            volume,
        })
    }

    /// Free particles in `domain`.
    pub fn free(mass: BigRational, domain: PhaseBox) -> Result<Self> {
        Self::new(
            mass,
            RationalFunction::zero(1),
            RationalFunction::zero(2),
            domain,
            None,
        )
    }

    pub fn mass(&self) -> f64 {
        self.mass.to_f64().unwrap_or(f64::NAN)
    }

    pub fn external(&self) -> &RationalFunction {
        &self.external
    }

    pub fn pair(&self) -> &RationalFunction {
        &self.pair
    }

    pub fn domain(&self) -> &PhaseBox {
        &self.domain
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Scale factor λ applied to the pair potential.
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn with_coupling(&self, lambda: f64) -> Self {
        HamiltonianSpec {
            coupling: lambda,
            ..self.clone()
        }
    }

    pub fn has_pair(&self) -> bool {
        !self.pair.is_zero() && self.coupling != 0.0
    }

    /// `∂U(q1, q2)/∂q1`, exact.
    pub fn pair_force_kernel(&self) -> RationalFunction {
        self.pair.derivative(0)
    }
}

/// Axis of a phase-space tensor for `s` particles: `q_1, p_1, q_2, p_2, …`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseAxis {
    Position(usize),
    Momentum(usize),
}

impl PhaseAxis {
    /// Position in the ordering `q_1, p_1, q_2, p_2, …` (particles 0-based).
    pub fn index(self) -> usize {
        match self {
            PhaseAxis::Position(i) => 2 * i,
            PhaseAxis::Momentum(i) => 2 * i + 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i % 2 == 0 {
            PhaseAxis::Position(i / 2)
        } else {
            PhaseAxis::Momentum(i / 2)
        }
    }

    pub fn name(self) -> String {
        match self {
            PhaseAxis::Position(i) => format!("q{}", i + 1),
            PhaseAxis::Momentum(i) => format!("p{}", i + 1),
        }
    }
}

/// Variable names `q1, p1, …` for `s` particles.
pub fn phase_variable_names(s: usize) -> Vec<String> {
    (0..2 * s)
        .map(|i| PhaseAxis::from_index(i).name())
        .collect()
}

/// One term `scale · q(x) · ∂^α` of an operator, optionally followed by
/// integration over the phase variables of some particles.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTerm {
    /// Rational coefficient over the `2s` phase variables.
    pub coefficient: RationalFunction,
    /// Floating-point factor applied at assembly time (coupling constants).
    pub scale: f64,
    /// Derivative order per phase axis (`2s` entries).
    pub derivative: Vec<u32>,
    /// Order of the time derivative.
    pub time_derivative: u32,
    /// Particles (0-based) integrated out after applying the term.
    pub marginalize: Vec<usize>,
}

impl OperatorTerm {
    pub fn max_derivative(&self) -> u32 {
        self.derivative
            .iter()
            .copied()
            .chain(std::iter::once(self.time_derivative))
            .max()
            .unwrap_or(0)
    }
}

/// Sum of terms acting on functions of `particles` particles.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    /// Number of equations per unknown (always 1 for scalar kinetic equations).
    pub dimension: usize,
    pub particles: usize,
    pub terms: Vec<OperatorTerm>,
}

impl OperatorSpec {
    pub fn max_derivative(&self) -> u32 {
        self.terms
            .iter()
            .map(OperatorTerm::max_derivative)
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = phase_variable_names(self.particles);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut first = true;
        for t in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if t.scale != 1.0 {
                write!(f, "{}*", t.scale)?;
            }
            write!(f, "[{}]", t.coefficient.display(&refs))?;
            if t.time_derivative > 0 {
                write!(f, " d/dt^{}", t.time_derivative)?;
            }
            for (axis, &d) in t.derivative.iter().enumerate() {
                if d > 0 {
                    write!(f, " d/d{}", names[axis])?;
                    if d > 1 {
                        write!(f, "^{d}")?;
                    }
                }
            }
            for p in &t.marginalize {
                write!(f, " ∫dμ{}", p + 1)?;
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

fn unit_derivative(vars: usize, axis: PhaseAxis) -> Vec<u32> {
    let mut d = vec![0; vars];
    d[axis.index()] = 1;
    d
}

/// `L_s = Σ_j [(p_j/m) ∂_{q_j} − U'(q_j) ∂_{p_j}] − Σ_{i<j} L_{ij}`, with
/// `L_{ij} = ∂_{q_i}U_{ij} ∂_{p_i} + ∂_{q_j}U_{ij} ∂_{p_j}`. Terms with an
/// identically vanishing coefficient are dropped.
pub fn build_liouvillean(h: &HamiltonianSpec, s: usize) -> Result<OperatorSpec> {
    if s == 0 || s > MAX_PARTICLES {
        return Err(Error::Config(format!(
            "particle count {s} outside 1..={MAX_PARTICLES}"
        )));
    }
    let vars = 2 * s;
    let inv_mass = h.mass.recip();
    let force = h.external.derivative(0);
    let mut terms = Vec::new();
    for j in 0..s {
        let p = RationalFunction::variable(vars, PhaseAxis::Momentum(j).index());
        terms.push(OperatorTerm {
            coefficient: p.scale(&inv_mass),
            scale: 1.0,
            derivative: unit_derivative(vars, PhaseAxis::Position(j)),
            time_derivative: 0,
            marginalize: Vec::new(),
        });
        if !force.is_zero() {
            terms.push(OperatorTerm {
                coefficient: force.remap(vars, &[PhaseAxis::Position(j).index()]).neg(),
                scale: 1.0,
                derivative: unit_derivative(vars, PhaseAxis::Momentum(j)),
                time_derivative: 0,
                marginalize: Vec::new(),
            });
        }
    }
    for i in 0..s {
        for j in i + 1..s {
            terms.extend(pair_terms(h, vars, i, j, -1.0));
        }
    }
    Ok(OperatorSpec {
        dimension: 1,
        particles: s,
        terms,
    })
}

/// `sign · L_{ij}` over `vars` phase variables.
pub(crate) fn pair_terms(
    h: &HamiltonianSpec,
    vars: usize,
    i: usize,
    j: usize,
    sign: f64,
) -> Vec<OperatorTerm> {
    if !h.has_pair() {
        return Vec::new();
    }
    let map = [
        PhaseAxis::Position(i).index(),
        PhaseAxis::Position(j).index(),
    ];
    let u = h.pair.remap(vars, &map);
    let mut out = Vec::new();
    for (particle, qvar) in [(i, map[0]), (j, map[1])] {
        let c = u.derivative(qvar);
        if c.is_zero() {
            continue;
        }
        let c = if sign < 0.0 { c.neg() } else { c };
        out.push(OperatorTerm {
            coefficient: c,
            scale: h.coupling,
            derivative: unit_derivative(vars, PhaseAxis::Momentum(particle)),
            time_derivative: 0,
            marginalize: Vec::new(),
        });
    }
    out
}

/// `Σ_{i ≤ s} L_{i,s+1}` on `s+1` particles followed by `∫ dμ_{s+1}`.
pub fn coupling_operator(h: &HamiltonianSpec, s: usize) -> Result<OperatorSpec> {
    if s == 0 || s + 1 > MAX_PARTICLES + 1 {
        return Err(Error::Config(format!("invalid particle count {s}")));
    }
    let vars = 2 * (s + 1);
    let mut terms = Vec::new();
    for i in 0..s {
        for mut t in pair_terms(h, vars, i, s, 1.0) {
            t.marginalize = vec![s];
            terms.push(t);
        }
    }
    Ok(OperatorSpec {
        dimension: 1,
        particles: s + 1,
        terms,
    })
}
