//! Refinement loop with the stopping rule `‖F^{N+1} − F^N‖ ≤ ε` in the Fock
//! norm.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{
    ClosureKind, ClosureSpec, Field, HamiltonianSpec, HierarchyState, NormForm, StateComponent,
};
use crate::solver::{
    solve_coefficients, AxisSpec, PhaseRole, solve_windows, CoefficientTensor, Discretization, GalerkinSystem,
    SolverSettings, TimeWindow, WindowSolution,
};

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Initial datum `F_1(q, p)` (or the starting guess of a stationary problem).
#[derive(Clone)]
pub enum InitialDatum {
    /// `Σ_t f_t(q) g_t(p)`.
    Separable(Vec<(Fn1, Fn1)>),
    General(Fn2),
    /// Multiscale phase-space coefficients (`q` axis then `p` axis), carried
    /// to each level by exact nesting: prolongation adds zero details,
    /// restriction drops the finer ones.
    Coefficients(CoefficientTensor),
}

impl std::fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialDatum::Separable(t) => write!(f, "Separable({} terms)", t.len()),
            InitialDatum::General(_) => f.write_str("General"),
            InitialDatum::Coefficients(t) => write!(f, "Coefficients({} modes)", t.len()),
        }
    }
}

impl InitialDatum {
    pub fn separable(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        InitialDatum::Separable(vec![(Arc::new(f), Arc::new(g))])
    }

    pub fn general(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        InitialDatum::General(Arc::new(f))
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        match self {
            InitialDatum::Separable(t) => t.iter().map(|(f, g)| f(q) * g(p)).sum(),
            InitialDatum::General(f) => f(q, p),
            InitialDatum::Coefficients(t) => {
                let ax = t.axes();
                let (Ok(qa), Ok(pa), Ok(single)) = (ax[0].periodic(), ax[1].periodic(), t.single_scale())
                else {
                    return f64::NAN;
                };
                let n = pa.modes();
                let single = &single;
                let bq = qa.basis_values(q);
                let bp = pa.basis_values(p);
                bq.iter()
                    .flat_map(|(i, a)| bp.iter().map(move |(j, b)| a * b * single[i * n + j]))
                    .sum()
            }
        }
    }

    /// Datum given by coefficients; the tensor must have exactly the two
    /// phase axes of one particle.
    pub fn coefficients(t: CoefficientTensor) -> Result<Self> {
        let ok = t.components() == 1
            && t.axes().len() == 2
            && matches!(
                (&t.axes()[0], &t.axes()[1]),
                (
                    AxisSpec::Phase { role: PhaseRole::Position(0), .. },
                    AxisSpec::Phase { role: PhaseRole::Momentum(0), .. }
                )
            );
        if !ok {
            return Err(Error::Shape(
                "a coefficient datum needs one component on the axes (q, p)".into(),
            ));
        }
        Ok(InitialDatum::Coefficients(t))
    }

    /// Single-scale Galerkin coefficients on the axes of `system`.
    pub fn project(&self, system: &GalerkinSystem) -> Result<Vec<f64>> {
        let (qa, pa) = (system.q_axis(), system.p_axis());
        match self {
            InitialDatum::Separable(terms) => {
                let n = qa.modes() * pa.modes();
                let mut out = vec![0.0; n];
                for (f, g) in terms {
                    let v = system.project_separable(|q| f(q), |p| g(p))?;
                    out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
                }
                Ok(out)
            }
            InitialDatum::General(f) => qa.project_2d(pa, |q, p| f(q, p)),
            InitialDatum::Coefficients(t) => {
                let target: Vec<AxisSpec> = system
                    .block_axes(&system.blocks()[0])
                    .into_iter()
                    .filter(|a| !a.is_time())
                    .collect();
                for (a, b) in t.axes().iter().zip(&target) {
                    let same = match (a, b) {
                        (
                            AxisSpec::Phase { order: o1, start: s1, length: l1, .. },
                            AxisSpec::Phase { order: o2, start: s2, length: l2, .. },
                        ) => o1 == o2 && s1 == s2 && l1 == l2,
                        _ => false,
                    };
                    if !same {
                        return Err(Error::Shape(
                            "coefficient datum uses a different basis or box".into(),
                        ));
                    }
                }
                let resized = if t.axes()[0].modes() <= target[0].modes() {
                    t.prolongate(target)?
                } else {
                    t.restrict(target)?
                };
                resized.single_scale()
            }
        }
    }
}

/// Number of Legendre modes per time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "modes")]
pub enum TimeModes {
    Fixed(usize),
    /// As many time modes as modes per phase axis.
    MatchSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    pub start: f64,
    /// Length of one window.
    pub window: f64,
    pub windows: usize,
    pub modes: TimeModes,
}

impl TimeSpec {
    pub fn window_at(&self, level: u32) -> TimeWindow {
        TimeWindow {
            modes: match self.modes {
                TimeModes::Fixed(m) => m,
                TimeModes::MatchSpace => 1usize << level,
            },
            start: self.start,
            length: self.window,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.window * self.windows as f64
    }
}

/// Everything needed to solve one closed hierarchy at any resolution.
#[derive(Debug, Clone)]
pub struct Problem {
    pub closure: ClosureSpec,
    pub s_max: usize,
    pub hamiltonian: HamiltonianSpec,
    pub order: usize,
    /// Starting level `J` (`N = 2^J` modes per phase axis).
    pub level: u32,
    /// `None` for a stationary problem.
    pub time: Option<TimeSpec>,
    pub initial: InitialDatum,
    /// Stationary normalization `∫F_1 dμ`; defaults to the datum's mass.
    pub mass: Option<f64>,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.closure.validate()?;
        if self.level == 0 {
            return Err(Error::Config("level must be at least 1".into()));
        }
        if let Some(t) = &self.time {
            if t.windows == 0 || !(t.window > 0.0 && t.window.is_finite()) {
                return Err(Error::Config("time windows must be positive".into()));
            }
            if let TimeModes::Fixed(m) = t.modes {
                if m < 2 {
                    return Err(Error::Config(
                        "a time window needs at least two modes".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Closure at truncation `s_max`: the correlator cap rises with `s_max`.
    fn closure_at(&self, s_max: usize) -> ClosureSpec {
        match self.closure.kind {
            ClosureKind::Vlasov => self.closure,
            ClosureKind::ProductPlusCorrelator => ClosureSpec {
                kind: ClosureKind::ProductPlusCorrelator,
                cap: self.closure.cap + s_max.saturating_sub(self.s_max),
            },
        }
    }

    /// Galerkin system at `(level, s_max)` with the projected datum.
    pub fn system(&self, level: u32, s_max: usize, memory_budget: usize) -> Result<GalerkinSystem> {
        let mut disc =
            Discretization::new(self.order, level, self.time.map(|t| t.window_at(level)));
        disc.memory_budget = memory_budget;
        let mut sys =
            GalerkinSystem::build(&self.closure_at(s_max), s_max, &self.hamiltonian, &disc)?;
        let ic = self.initial.project(&sys)?;
        let mass = self.mass.unwrap_or_else(|| sys.mass(&ic));
        sys.set_initial(Field::One, ic)?;
        sys.set_normalization(mass);
        Ok(sys)
    }
}

/// Solution of a problem at one resolution.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub level: u32,
    pub s_max: usize,
    pub system: GalerkinSystem,
    pub windows: Vec<WindowSolution>,
}

impl LevelSolution {
    /// Largest final residual over all windows.
    pub fn residual(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| w.report.residual)
            .fold(0.0, f64::max)
    }

    fn window_system(&self, w: usize) -> Result<GalerkinSystem> {
        match self.system.time_window() {
            Some(_) => self.system.with_window_start(self.windows[w].start),
            None => Ok(self.system.clone()),
        }
    }

    /// Multiscale tensors of every unknown field in window `w`.
    pub fn tensors(&self, w: usize) -> Result<Vec<CoefficientTensor>> {
        self.window_system(w)?.to_tensors(&self.windows[w].x)
    }

    /// `F_1` over window `w` (time axis first when present).
    pub fn one_particle(&self, w: usize) -> Result<CoefficientTensor> {
        Ok(self.tensors(w)?.swap_remove(0))
    }

    /// `F_1` at the end of the last window (the solution itself when
    /// stationary), multiscale, phase axes only.
    pub fn final_one_particle(&self) -> Result<CoefficientTensor> {
        let w = self.windows.len() - 1;
        let t = self.one_particle(w)?;
        match t.time_axis() {
            Some(a) => t.time_slice(a.start() + a.length()),
            None => Ok(t),
        }
    }

    /// Hierarchy state of window `w` up to `s_report` particles, with the
    /// closure supplying the entries above the unknowns.
    pub fn state(&self, w: usize, s_report: usize) -> Result<HierarchyState> {
        let tensors = self.tensors(w)?;
        let blocks = self.system.blocks();
        let one = tensors[0].clone();
        let correlator = |k: usize| {
            blocks
                .iter()
                .position(|b| b.field == Field::Correlator(k))
                .map(|i| tensors[i].clone())
        };
        let mut components = vec![StateComponent::Tensor(one.clone())];
        for s in 2..=s_report {
            components.push(StateComponent::Product {
                one: one.clone(),
                power: s,
                correlator: correlator(s),
            });
        }
        HierarchyState::new(1.0, components)
    }
}

/// Solves `problem` at `(level, s_max)`, chaining time windows.
pub fn solve_problem(
    problem: &Problem,
    level: u32,
    s_max: usize,
    settings: &SolverSettings,
    memory_budget: usize,
) -> Result<LevelSolution> {
    problem.validate()?;
    let system = problem.system(level, s_max, memory_budget)?;
    let windows = match problem.time {
        Some(t) => solve_windows(&system, t.windows, settings)?,
        None => {
            let guess = system.constant_guess();
            let (x, report) = solve_coefficients(&system, Some(&guess), settings)?;
            vec![WindowSolution {
                start: 0.0,
                x,
                report,
            }]
        }
    };
    Ok(LevelSolution {
        level,
        s_max,
        system,
        windows,
    })
}

/// Fock distance of two solutions after embedding `coarse` into the mode
/// sets of `fine`: `(integrated, final slice)`. The integrated form averages
/// the squared distance over all windows.
pub fn successive_difference(coarse: &LevelSolution, fine: &LevelSolution) -> Result<(f64, f64)> {
    if coarse.windows.len() != fine.windows.len() {
        return Err(Error::Shape(
            "solutions cover different numbers of windows".into(),
        ));
    }
    let s = coarse.s_max.max(fine.s_max);
    let mut integrated = 0.0;
    let mut last = 0.0;
    for w in 0..fine.windows.len() {
        let f = fine.state(w, s)?;
        let one = fine.one_particle(w)?;
        let time = one.axes().first().filter(|a| a.is_time()).cloned();
        let c = coarse
            .state(w, s)?
            .prolongate(one.phase_axes(), time.as_ref())?;
        let d = f.fock_distance(&c, NormForm::Integrated)?;
        integrated += d * d;
        if w + 1 == fine.windows.len() {
            last = f.fock_distance(&c, NormForm::FinalSlice)?;
        }
    }
    Ok(((integrated / fine.windows.len() as f64).sqrt(), last))
}

/// Which parameter is refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineParameter {
    /// `N → 2N` per phase axis.
    Modes,
    /// `s_max → s_max + 1`.
    HierarchyOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementPolicy {
    pub parameter: RefineParameter,
    /// Tolerance in the integrated Fock norm; `0` never stops early.
    pub epsilon: f64,
    pub level_cap: u32,
    pub s_max_cap: usize,
    pub memory_budget: usize,
    pub solver: SolverSettings,
}

impl RefinementPolicy {
    pub fn modes(epsilon: f64, level_cap: u32) -> Self {
        RefinementPolicy {
            parameter: RefineParameter::Modes,
            epsilon,
            level_cap,
            s_max_cap: crate::hierarchy::MAX_PARTICLES,
            memory_budget: crate::solver::system::DEFAULT_MEMORY_BUDGET,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be finite and ≥ 0, got {}",
                self.epsilon
            )));
        }
        if self.level_cap < problem.level {
            return Err(Error::Config(format!(
                "level cap {} below starting level {}",
                self.level_cap, problem.level
            )));
        }
        if self.s_max_cap < problem.s_max {
            return Err(Error::Config(format!(
                "s_max cap {} below starting s_max {}",
                self.s_max_cap, problem.s_max
            )));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub level: u32,
    pub modes: usize,
    pub s_max: usize,
    /// Integrated Fock distance to the previous entry.
    pub fock_diff: Option<f64>,
    pub fock_diff_final: Option<f64>,
    pub residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementStatus {
    Converged,
    NotConverged,
    /// The next level would exceed the memory budget.
    NotConvergedBudget,
    /// Solved once at the starting resolution; no stopping rule applied.
    SingleLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    pub entries: Vec<HistoryEntry>,
    pub status: RefinementStatus,
    pub notes: Vec<String>,
}

impl ConvergenceHistory {
    /// `level,N,s_max,fock_diff,residual,seconds` with full precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# status: {:?}", self.status);
        for n in &self.notes {
            let _ = writeln!(s, "# note: {n}");
        }
        s.push_str("level,N,s_max,fock_diff,fock_diff_final,residual,seconds\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.16e},{:.6}",
                e.level,
                e.modes,
                e.s_max,
                opt(e.fock_diff),
                opt(e.fock_diff_final),
                e.residual,
                e.seconds
            );
        }
        s
    }

    /// Steps where the difference grew after the first comparison.
    pub fn monotonicity_warnings(&self) -> Vec<String> {
        let diffs: Vec<(u32, f64)> = self
            .entries
            .iter()
            .filter_map(|e| e.fock_diff.map(|d| (e.level, d)))
            .collect();
        diffs
            .windows(2)
            .skip(1)
            .filter(|w| w[1].1 > w[0].1)
            .map(|w| {
                format!(
                    "difference grew from {:.3e} to {:.3e} at level {}",
                    w[0].1, w[1].1, w[1].0
                )
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct RefinementOutcome {
    pub solution: LevelSolution,
    pub history: ConvergenceHistory,
}

/// A solver failure together with the history recorded before it.
#[derive(Debug)]
pub struct RefinementFailure {
    pub error: Error,
    pub history: ConvergenceHistory,
}

impl std::fmt::Display for RefinementFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} levels)",
            self.error,
            self.history.entries.len()
        )
    }
}

impl std::error::Error for RefinementFailure {}

/// Solves at increasing resolution until successive solutions differ by
/// at most `ε` in the integrated Fock norm, or a cap is reached.
pub fn refine_until_converged(
    problem: &Problem,
    policy: &RefinementPolicy,
) -> std::result::Result<RefinementOutcome, Box<RefinementFailure>> {
    let mut history = ConvergenceHistory {
        entries: Vec::new(),
        status: RefinementStatus::NotConverged,
        notes: Vec::new(),
    };
    let fail =
        |error: Error, history: ConvergenceHistory| Box::new(RefinementFailure { error, history });
    if let Err(e) = problem.validate().and_then(|_| policy.validate(problem)) {
        return Err(fail(e, history));
    }
    let (mut level, mut s_max) = (problem.level, problem.s_max);
    let mut prev: Option<LevelSolution> = None;
    loop {
        let clock = Instant::now();
        let sol = match solve_problem(problem, level, s_max, &policy.solver, policy.memory_budget) {
            Ok(s) => s,
            Err(Error::Capacity(msg)) if prev.is_some() => {
                history.status = RefinementStatus::NotConvergedBudget;
                history
                    .notes
                    .push(format!("level {level}, s_max {s_max}: {msg}"));
                break;
            }
            Err(e) => return Err(fail(e, history)),
        };
        let diffs = match &prev {
            Some(p) => match successive_difference(p, &sol) {
                Ok((a, b)) => Some((a, b)),
                Err(e) => return Err(fail(e, history)),
            },
            None => None,
        };
        history.entries.push(HistoryEntry {
            level,
            modes: 1usize << level,
            s_max,
            fock_diff: diffs.map(|d| d.0),
            fock_diff_final: diffs.map(|d| d.1),
            residual: sol.residual(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        prev = Some(sol);
        if policy.epsilon > 0.0 && diffs.is_some_and(|d| d.0 <= policy.epsilon) {
            history.status = RefinementStatus::Converged;
            break;
        }
        match policy.parameter {
            RefineParameter::Modes if level < policy.level_cap => level += 1,
            RefineParameter::HierarchyOrder if s_max < policy.s_max_cap => s_max += 1,
            _ => break,
        }
    }
    history.notes.extend(history.monotonicity_warnings());
    match prev {
        Some(solution) => Ok(RefinementOutcome { solution, history }),
        None => Err(fail(Error::Internal("no level was solved".into()), history)),
    }
}

/// Solves at the starting resolution only, with a one-entry history.
pub fn solve_single_level(
    problem: &Problem,
    settings: &SolverSettings,
    memory_budget: usize,
) -> Result<RefinementOutcome, Box<RefinementFailure>> {
    let mut history = ConvergenceHistory {
        entries: Vec::new(),
        status: RefinementStatus::SingleLevel,
        notes: Vec::new(),
    };
    let start = Instant::now();
    match solve_problem(problem, problem.level, problem.s_max, settings, memory_budget) {
        Ok(solution) => {
            history.entries.push(HistoryEntry {
                level: solution.level,
                modes: 1usize << solution.level,
                s_max: solution.s_max,
                fock_diff: None,
                fock_diff_final: None,
                residual: solution.residual(),
                seconds: start.elapsed().as_secs_f64(),
            });
            Ok(RefinementOutcome { solution, history })
        }
        Err(error) => Err(Box::new(RefinementFailure { error, history })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::PhaseBox;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn free_problem(initial: InitialDatum) -> Problem {
        let dom = PhaseBox {
            q_start: 0.0,
            q_length: 1.0,
            p_start: -1.5,
            p_length: 3.0,
        };
        Problem {
            closure: ClosureSpec::vlasov(),
            s_max: 1,
            hamiltonian: HamiltonianSpec::free(BigRational::from_integer(BigInt::from(1)), dom)
                .unwrap(),
            order: 2,
            level: 2,
            time: Some(TimeSpec {
                start: 0.0,
                window: 0.25,
                windows: 1,
                modes: TimeModes::Fixed(4),
            }),
            initial,
            mass: None,
        }
    }

    #[test]
    fn constant_datum_converges_immediately() {
        let p = free_problem(InitialDatum::separable(|_| 1.0, |_| 1.0));
        let out = refine_until_converged(&p, &RefinementPolicy::modes(1e-6, 5)).unwrap();
        assert_eq!(out.history.status, RefinementStatus::Converged);
        assert_eq!(out.history.entries.len(), 2);
        let d = out.history.entries[1].fock_diff.unwrap();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn zero_epsilon_runs_to_cap() {
        let p = free_problem(InitialDatum::separable(|_| 1.0, |_| 1.0));
        let out = refine_until_converged(&p, &RefinementPolicy::modes(0.0, 4)).unwrap();
        assert_eq!(out.history.status, RefinementStatus::NotConverged);
        assert_eq!(out.history.entries.last().unwrap().level, 4);
    }

    #[test]
    fn budget_guard_stops_refinement() {
        let p = free_problem(InitialDatum::separable(
            |q| (2.0 * std::f64::consts::PI * q).sin(),
            |v| (-v * v).exp(),
        ));
        let mut policy = RefinementPolicy::modes(1e-12, 8);
        policy.memory_budget = 8 << 20;
        let out = refine_until_converged(&p, &policy).unwrap();
        assert_eq!(out.history.status, RefinementStatus::NotConvergedBudget);
        assert_eq!(out.solution.level, 4);
        assert!(out.history.to_csv().contains("level,N,s_max"));
    }

    #[test]
    fn vlasov_order_refinement_changes_nothing() {
        let p = free_problem(InitialDatum::separable(
            |q| 1.0 + 0.2 * q,
            |v| (-v * v).exp(),
        ));
        let mut policy = RefinementPolicy::modes(1e-10, 2);
        policy.parameter = RefineParameter::HierarchyOrder;
        policy.s_max_cap = 3;
        let out = refine_until_converged(&p, &policy).unwrap();
        assert_eq!(out.history.status, RefinementStatus::Converged);
        assert_eq!(out.solution.s_max, 2);
    }

    #[test]
    fn general_and_separable_data_agree() {
        let a = free_problem(InitialDatum::separable(|q| q * q, |v| v.cos()));
        let b = free_problem(InitialDatum::general(|q, v| q * q * v.cos()));
        let sa = a.system(3, 1, 1 << 30).unwrap();
        let sb = b.system(3, 1, 1 << 30).unwrap();
        let (x, y) = (
            sa.initial(Field::One).unwrap(),
            sb.initial(Field::One).unwrap(),
        );
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn failing_level_keeps_history() {
        let mut p = free_problem(InitialDatum::separable(|_| 1.0, |_| 1.0));
        p.level = 2;
        let mut policy = RefinementPolicy::modes(1e-3, 3);
        policy.solver.max_iter = 0;
        let err = refine_until_converged(&p, &policy).unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
    }
}
