//! Run configuration and problem description, both TOML.
//!
//! The full key reference lives in `docs/config.md`.

use std::path::{Path, PathBuf};

use num_rational::BigRational;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::cutoff::{InitialDatum, Problem, RefineParameter, RefinementPolicy, TimeModes, TimeSpec};
use crate::error::{Error, Result};
use crate::hierarchy::{parse_expression, ClosureSpec, HamiltonianSpec, Origin, ParsedExpr, PhaseBox};
use crate::pattern::Thresholds;
use crate::solver::{AxisSpec, CoefficientTensor, PhaseRole, SolverSettings};
use crate::wavelet::{BasisIndex, BasisKind, MAX_ORDER};

/// Largest accepted starting level.
pub const MAX_START_LEVEL: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for randomized initial data.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Problem description in a separate file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub closure: ClosureSection,
    #[serde(default)]
    pub refinement: RefinementSection,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub classify: Thresholds,
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// `U(q)`; rational in `q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<Spanned<String>>,
    /// Symmetric `U(q1, q2)`; rational in `q1`, `q2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<Spanned<String>>,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
    /// Normalization `∫F_1` of a stationary problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
    pub domain: DomainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSection>,
    pub initial: InitialSection,
}

fn default_mass() -> f64 {
    1.0
}

fn default_coupling() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub q_start: f64,
    pub q_length: f64,
    pub p_start: f64,
    pub p_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModesField {
    Count(usize),
    /// `"match"`: one time mode per phase mode.
    Rule(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub start: f64,
    pub window: f64,
    #[serde(default = "default_windows")]
    pub windows: usize,
    pub modes: ModesField,
}

fn default_windows() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Expression,
    /// A single basis function `B_q(q) B_p(p)`.
    Mode,
    /// Independent standard normal multiscale coefficients up to `level`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub kind: InitialKind,
    /// `F_1(q, p)` at the start time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<BasisIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<BasisIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub order: usize,
    /// Starting modes per phase axis, a power of two.
    pub modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureName {
    #[default]
    Vlasov,
    Correlated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosureSection {
    pub kind: ClosureName,
    /// Largest free correlator index (correlated closure only).
    pub cap: usize,
    pub s_max: usize,
}

impl Default for ClosureSection {
    fn default() -> Self {
        ClosureSection {
            kind: ClosureName::Vlasov,
            cap: 2,
            s_max: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterName {
    #[default]
    Modes,
    HierarchyOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementSection {
    /// When false the problem is solved once at the starting resolution.
    pub enabled: bool,
    pub parameter: ParameterName,
    pub epsilon: f64,
    pub level_cap: u32,
    pub s_max_cap: usize,
    pub memory_budget_mib: usize,
}

impl Default for RefinementSection {
    fn default() -> Self {
        RefinementSection {
            enabled: true,
            parameter: ParameterName::Modes,
            epsilon: 1e-3,
            level_cap: 6,
            s_max_cap: 3,
            memory_budget_mib: crate::solver::system::DEFAULT_MEMORY_BUDGET >> 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureStyle {
    #[default]
    None,
    /// Reconstruction from the single dominant mode.
    Fig1,
    /// Full broadband reconstruction.
    Fig2,
    /// Slow part of the slow/fast split.
    Fig3,
}

impl FigureStyle {
    pub fn file_name(&self) -> Option<&'static str> {
        match self {
            FigureStyle::None => None,
            FigureStyle::Fig1 => Some("fig1_localized.csv"),
            FigureStyle::Fig2 => Some("fig2_chaotic.csv"),
            FigureStyle::Fig3 => Some("fig3_waveleton.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub grid_q: usize,
    pub grid_p: usize,
    /// Time slices of the last window used for classification.
    pub slices: usize,
    pub figure: FigureStyle,
    /// Slow/fast cut level for `fig3`; defaults to the dominant scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cut: Option<u32>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            grid_q: 128,
            grid_p: 128,
            slices: 5,
            figure: FigureStyle::None,
            cut: None,
        }
    }
}

/// Text of a TOML document and where it came from, for error locations.
#[derive(Debug, Clone)]
pub struct Document {
    pub name: String,
    pub text: String,
}

impl Document {
    fn origin(&self, offset: usize) -> Origin {
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().unwrap_or("").chars().count() + 1;
        Origin { line, column }
    }

    fn parse_error(&self, err: toml::de::Error) -> Error {
        let origin = err.span().map(|s| self.origin(s.start)).unwrap_or_default();
        Error::Parse {
            line: origin.line,
            column: origin.column,
            message: format!("{}: {}", self.name, err.message()),
        }
    }

    /// Parses a string value; locations refer to this document.
    fn expression(&self, value: &Spanned<String>) -> Result<ParsedExpr> {
        // The span starts at the opening quote.
        let mut origin = self.origin(value.span().start);
        origin.column += 1;
        parse_expression(value.get_ref(), origin).map_err(|e| self.located(e))
    }

    fn located(&self, e: Error) -> Error {
        match e {
            Error::Parse {
                line,
                column,
                message,
            } => Error::Parse {
                line,
                column,
                message: format!("{}: {message}", self.name),
            },
            other => other,
        }
    }
}

/// A parsed configuration with the documents it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub config_doc: Document,
    /// Present when the problem lives in its own file.
    pub problem_doc: Option<Document>,
    pub problem: ProblemSpec,
}

pub fn parse_config(text: &str, name: &str) -> Result<RunConfig> {
    let doc = Document {
        name: name.into(),
        text: text.into(),
    };
    toml::from_str(text).map_err(|e| doc.parse_error(e))
}

/// Parses a config and its problem file (if any) from text; `base` resolves
/// a relative `problem_file`.
pub fn load_config_str(text: &str, name: &str, base: &Path) -> Result<LoadedConfig> {
    let config = parse_config(text, name)?;
    let config_doc = Document {
        name: name.into(),
        text: text.into(),
    };
    let (problem, problem_doc) = match (&config.problem, &config.problem_file) {
        (Some(p), None) => (p.clone(), None),
        (None, Some(file)) => {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let doc = Document {
                name: path.display().to_string(),
                text,
            };
            let p: ProblemSpec = toml::from_str(&doc.text).map_err(|e| doc.parse_error(e))?;
            (p, Some(doc))
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either problem_file or an inline [problem], not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "no problem: set problem_file or add a [problem] section".into(),
            ))
        }
    };
    Ok(LoadedConfig {
        config,
        config_doc,
        problem_doc,
        problem,
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_config_str(&text, &path.display().to_string(), base)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite (got {v})")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite")))
    }
}

fn exact(name: &str, v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::Config(format!("{name} must be finite")))
}

impl RunConfig {
    /// Starting level `J` with `2^J` modes.
    pub fn start_level(&self) -> u32 {
        self.discretization.modes.trailing_zeros()
    }

    /// Range checks that need no problem data.
    pub fn validate(&self) -> Result<()> {
        let d = &self.discretization;
        if !(1..=MAX_ORDER).contains(&d.order) {
            return Err(Error::UnsupportedOrder(d.order));
        }
        if !d.modes.is_power_of_two() || d.modes < 2 || self.start_level() > MAX_START_LEVEL {
            return Err(Error::Config(format!(
                "discretization.modes must be a power of two in 2..={} (got {})",
                1u64 << MAX_START_LEVEL,
                d.modes
            )));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let c = &self.closure;
        if c.s_max == 0 || c.s_max > crate::hierarchy::MAX_PARTICLES {
            return Err(Error::Config(format!(
                "closure.s_max must lie in 1..={}",
                crate::hierarchy::MAX_PARTICLES
            )));
        }
        self.closure_spec()?;
        let r = &self.refinement;
        if r.enabled {
            if !(r.epsilon >= 0.0 && r.epsilon.is_finite()) {
                return Err(Error::Config("refinement.epsilon must be finite and >= 0".into()));
            }
            if r.level_cap < self.start_level() {
                return Err(Error::Config(
                    "refinement.level_cap is below the starting level".into(),
                ));
            }
            if r.parameter == ParameterName::HierarchyOrder && r.s_max_cap < c.s_max {
                return Err(Error::Config(
                    "refinement.s_max_cap is below closure.s_max".into(),
                ));
            }
        }
        if r.memory_budget_mib == 0 {
            return Err(Error::Config("refinement.memory_budget_mib must be positive".into()));
        }
        self.solver.validate()?;
        let o = &self.output;
        let max = crate::solver::MAX_GRID_POINTS;
        if !(1..=max).contains(&o.grid_q) || !(1..=max).contains(&o.grid_p) {
            return Err(Error::Config(format!("output grid sizes must lie in 1..={max}")));
        }
        if o.slices == 0 {
            return Err(Error::Config("output.slices must be at least 1".into()));
        }
        self.classify.validate()
    }

    pub fn closure_spec(&self) -> Result<ClosureSpec> {
        match self.closure.kind {
            ClosureName::Vlasov => Ok(ClosureSpec::vlasov()),
            ClosureName::Correlated => ClosureSpec::correlated(self.closure.cap),
        }
    }

    pub fn policy(&self) -> RefinementPolicy {
        let r = &self.refinement;
        RefinementPolicy {
            parameter: match r.parameter {
                ParameterName::Modes => RefineParameter::Modes,
                ParameterName::HierarchyOrder => RefineParameter::HierarchyOrder,
            },
            epsilon: r.epsilon,
            level_cap: r.level_cap,
            s_max_cap: r.s_max_cap,
            memory_budget: r.memory_budget_mib.saturating_mul(1 << 20),
            solver: self.solver.clone(),
        }
    }
}

fn axis_spec(role: PhaseRole, order: usize, level: u32, start: f64, length: f64) -> AxisSpec {
    AxisSpec::Phase {
        role,
        order,
        level,
        start,
        length,
    }
}

impl LoadedConfig {
    fn problem_doc(&self) -> &Document {
        self.problem_doc.as_ref().unwrap_or(&self.config_doc)
    }

    /// Validates everything and compiles the problem. Nothing is computed
    /// beyond exact expression algebra.
    pub fn build(&self) -> Result<Problem> {
        let cfg = &self.config;
        cfg.validate()?;
        let spec = &self.problem;
        let doc = self.problem_doc();
        let d = spec.domain;
        for (n, v) in [("domain.q_start", d.q_start), ("domain.p_start", d.p_start)] {
            finite(n, v)?;
        }
        positive("domain.q_length", d.q_length)?;
        positive("domain.p_length", d.p_length)?;
        positive("mass", spec.mass)?;
        finite("coupling", spec.coupling)?;
        if let Some(v) = spec.volume {
            positive("volume", v)?;
        }
        if let Some(v) = spec.normalization {
            finite("normalization", v)?;
        }
        let external = match &spec.external {
            Some(e) => doc
                .expression(e)?
                .to_rational(&["q"])
                .map_err(|e| doc.located(e))?,
            None => crate::hierarchy::RationalFunction::zero(1),
        };
        let pair = match &spec.pair {
            Some(e) => doc
                .expression(e)?
                .to_rational(&["q1", "q2"])
                .map_err(|e| doc.located(e))?,
            None => crate::hierarchy::RationalFunction::zero(2),
        };
        let domain = PhaseBox {
            q_start: d.q_start,
            q_length: d.q_length,
            p_start: d.p_start,
            p_length: d.p_length,
        };
        let hamiltonian = HamiltonianSpec::new(exact("mass", spec.mass)?, external, pair, domain, spec.volume)?
            .with_coupling(spec.coupling);
        let time = match &spec.time {
            None => None,
            Some(t) => {
                finite("time.start", t.start)?;
                positive("time.window", t.window)?;
                if t.windows == 0 {
                    return Err(Error::Config("time.windows must be at least 1".into()));
                }
                let modes = match &t.modes {
                    ModesField::Count(m) if *m >= 2 => TimeModes::Fixed(*m),
                    ModesField::Count(m) => {
                        return Err(Error::Config(format!(
                            "time.modes must be at least 2 (got {m})"
                        )))
                    }
                    ModesField::Rule(r) if r == "match" => TimeModes::MatchSpace,
                    ModesField::Rule(r) => {
                        return Err(Error::Config(format!(
                            "time.modes must be an integer or \"match\" (got {r:?})"
                        )))
                    }
                };
                Some(TimeSpec {
                    start: t.start,
                    window: t.window,
                    windows: t.windows,
                    modes,
                })
            }
        };
        let initial = self.initial_datum(cfg.discretization.order, &domain)?;
        let problem = Problem {
            closure: cfg.closure_spec()?,
            s_max: cfg.closure.s_max,
            hamiltonian,
            order: cfg.discretization.order,
            level: cfg.start_level(),
            time,
            initial,
            mass: spec.normalization,
        };
        problem.validate()?;
        if cfg.refinement.enabled {
            cfg.policy().validate(&problem)?;
        }
        Ok(problem)
    }

    fn initial_datum(&self, order: usize, domain: &PhaseBox) -> Result<InitialDatum> {
        let init = &self.problem.initial;
        let doc = self.problem_doc();
        finite("initial.amplitude", init.amplitude)?;
        let amp = init.amplitude;
        let axes = |level: u32| {
            vec![
                axis_spec(PhaseRole::Position(0), order, level, domain.q_start, domain.q_length),
                axis_spec(PhaseRole::Momentum(0), order, level, domain.p_start, domain.p_length),
            ]
        };
        let unused = |what: &str, present: bool| {
            if present {
                Err(Error::Config(format!(
                    "initial.{what} does not apply to initial.kind = {:?}",
                    init.kind
                )))
            } else {
                Ok(())
            }
        };
        match init.kind {
            InitialKind::Expression => {
                unused("q", init.q.is_some())?;
                unused("p", init.p.is_some())?;
                unused("level", init.level.is_some())?;
                let value = init.expression.as_ref().ok_or_else(|| {
                    Error::Config("initial.expression is required for kind = \"expression\"".into())
                })?;
                let e = doc.expression(value)?;
                e.validate(&["q", "p"]).map_err(|e| doc.located(e))?;
                Ok(match e.separate("q", "p") {
                    Some((f, g)) => InitialDatum::separable(
                        move |q| amp * f.eval(&["q"], &[q]),
                        move |p| g.eval(&["p"], &[p]),
                    ),
                    None => InitialDatum::general(move |q, p| amp * e.eval(&["q", "p"], &[q, p])),
                })
            }
            InitialKind::Mode => {
                unused("expression", init.expression.is_some())?;
                unused("level", init.level.is_some())?;
                let (Some(bq), Some(bp)) = (init.q, init.p) else {
                    return Err(Error::Config(
                        "initial.q and initial.p are required for kind = \"mode\"".into(),
                    ));
                };
                let level_of = |b: BasisIndex| -> Result<u32> {
                    match b.kind {
                        BasisKind::Scaling if b.level == 0 && b.shift == 0 => Ok(0),
                        BasisKind::Wavelet if b.level < MAX_START_LEVEL && b.shift < 1 << b.level => {
                            Ok(b.level + 1)
                        }
                        _ => Err(Error::Config(format!(
                            "initial mode {b:?} is not a basis function of a fully decomposed axis"
                        ))),
                    }
                };
                let level = level_of(bq)?.max(level_of(bp)?).max(1);
                let mut t = CoefficientTensor::zeros(axes(level), 1)?;
                let pos = t.position_of(0, &crate::wavelet::TensorIndex { factors: vec![bq, bp] })?;
                t.values_mut()[pos] = amp;
                InitialDatum::coefficients(t)
            }
            InitialKind::Random => {
                unused("expression", init.expression.is_some())?;
                unused("q", init.q.is_some())?;
                unused("p", init.p.is_some())?;
                let level = init.level.ok_or_else(|| {
                    Error::Config("initial.level is required for kind = \"random\"".into())
                })?;
                if !(1..=MAX_START_LEVEL).contains(&level) {
                    return Err(Error::Config(format!(
                        "initial.level must lie in 1..={MAX_START_LEVEL}"
                    )));
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.config.seed);
                let mut t = CoefficientTensor::zeros(axes(level), 1)?;
                for v in t.values_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = amp * z;
                }
                InitialDatum::coefficients(t)
            }
        }
    }
}

/// Reads the `[classify]` table of a TOML document; other tables are
/// ignored, missing keys take their defaults.
pub fn parse_thresholds(text: &str, name: &str) -> Result<Thresholds> {
    #[derive(Deserialize)]
    struct File {
        #[serde(default)]
        classify: Thresholds,
    }
    let doc = Document {
        name: name.into(),
        text: text.into(),
    };
    let f: File = toml::from_str(text).map_err(|e| doc.parse_error(e))?;
    f.classify.validate()?;
    Ok(f.classify)
}

/// Config as TOML text, with the problem inlined when `inline` is given.
pub fn config_to_toml(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Internal(format!("config serialization: {e}")))
}
