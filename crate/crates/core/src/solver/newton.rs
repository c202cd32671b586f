//! Newton iteration with backtracking and Levenberg–Marquardt damping,
//! nested iteration over levels, coupling continuation and window chaining.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Field;
use crate::linalg::{norm2, norm_inf, solve, Dense};

use super::linear::{condition_estimate, sparse_solve};
use super::system::GalerkinSystem;
use super::tensor::CoefficientTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Target `‖ℓ‖_∞` in the multiscale test basis.
    pub tol: f64,
    pub max_iter: usize,
    pub lm_initial: f64,
    pub lm_factor: f64,
    pub lm_escalations: usize,
    /// Start Newton from the solution one level down.
    pub nested: bool,
    /// Coupling steps used when Newton fails from the direct guess.
    pub continuation_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iter: 30,
            lm_initial: 1e-6,
            lm_factor: 10.0,
            lm_escalations: 8,
            nested: true,
            continuation_steps: 4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.lm_initial > 0.0 && self.lm_factor > 1.0) {
            return Err(Error::Config("invalid damping parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    TimeDiagonal,
    SparseLu,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    pub damping: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: SolveMethod,
    pub iterations: Vec<IterationRecord>,
    pub residual: f64,
}

impl ConvergenceReport {
    /// Newton steps taken (a direct linear solve counts as one).
    pub fn steps(&self) -> usize {
        self.iterations.len().saturating_sub(1).max(1)
    }

    /// One line per iteration: `iter residual damping step`.
    pub fn log(&self) -> String {
        let mut s = String::from("# iter residual_inf damping step\n");
        for r in &self.iterations {
            let _ = writeln!(
                s,
                "{} {:.16e} {:.16e} {:.16e}",
                r.iter, r.residual, r.damping, r.step
            );
        }
        s
    }

    fn merge(&mut self, other: ConvergenceReport) {
        let base = self.iterations.len();
        self.iterations
            .extend(other.iterations.into_iter().map(|mut r| {
                r.iter += base;
                r
            }));
        self.residual = other.residual;
        self.method = other.method;
    }
}

/// Solves the Galerkin conditions of `system`. Linear systems take one
/// direct solve; nonlinear ones use Newton from `initial` (or the nested
/// guess), falling back to continuation in the coupling strength.
pub fn solve_coefficients(
    system: &GalerkinSystem,
    initial: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    settings.validate()?;
    if system.is_linear() && system.time_window().is_some() {
        return solve_linear(system, settings);
    }
    let guess = match initial {
        Some(x) => x.to_vec(),
        None if settings.nested => nested_guess(system, settings)?,
        None => system.constant_guess(),
    };
    match newton(system, guess, settings) {
        Ok(out) => Ok(out),
        Err(Error::NoConvergence { .. })
            if system.hamiltonian().coupling() != 0.0 && system.hamiltonian().has_pair() =>
        {
            solve_by_continuation(system, settings)
        }
        Err(e) => Err(e),
    }
}

fn solve_linear(
    system: &GalerkinSystem,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let rhs = system.rhs();
    let (x, method) = if system.blocks().len() == 1 {
        (
            system.diagonal_solver()?.solve(&rhs)?,
            SolveMethod::TimeDiagonal,
        )
    } else {
        let a = system.linear_matrix();
        let mut x = sparse_solve(&a, &rhs)?;
        let r: Vec<f64> = a.matvec(&x).iter().zip(&rhs).map(|(u, v)| v - u).collect();
        let dx = sparse_solve(&a, &r)?;
        x.iter_mut().zip(dx).for_each(|(u, d)| *u += d);
        (x, SolveMethod::SparseLu)
    };
    let r0 = norm_inf(&system.multiscale_residual(&system.residual(&vec![0.0; x.len()])?)?);
    let residual = system.residual_norm(&x)?;
    let report = ConvergenceReport {
        method,
        iterations: vec![
            IterationRecord {
                iter: 0,
                residual: r0,
                damping: 0.0,
                step: 0.0,
            },
            IterationRecord {
                iter: 1,
                residual,
                damping: 0.0,
                step: 1.0,
            },
        ],
        residual,
    };
    if residual > settings.tol {
        return Err(Error::NoConvergence {
            reason: format!(
                "direct solve left residual {residual:.3e} above tolerance {:.3e}",
                settings.tol
            ),
            condition_estimate: None,
            residual_history: vec![r0, residual],
        });
    }
    Ok((x, report))
}

/// Solution on the next coarser level, prolongated.
fn nested_guess(system: &GalerkinSystem, settings: &SolverSettings) -> Result<Vec<f64>> {
    let level = system.discretization().level;
    if level <= 2 {
        return Ok(system.constant_guess());
    }
    let coarse = coarsen(system)?;
    let (xc, _) = solve_coefficients(&coarse, None, settings)?;
    prolongate_solution(&coarse, &xc, system)
}

/// Same problem one level down, with restricted initial data.
pub fn coarsen(system: &GalerkinSystem) -> Result<GalerkinSystem> {
    let disc = system.discretization();
    let coarse_disc = disc.with_level(disc.level - 1);
    let mut coarse =
        GalerkinSystem::from_closed(system.closed().clone(), system.hamiltonian(), &coarse_disc)?;
    for b in system.blocks() {
        let ic = system.initial(b.field)?.to_vec();
        let mut fine_axes = system.block_axes(b);
        let mut coarse_axes = coarse.block_axes(b);
        if system.time_window().is_some() {
            fine_axes.remove(0);
            coarse_axes.remove(0);
        }
        let t = CoefficientTensor::from_single_scale(fine_axes, 1, ic)?.restrict(coarse_axes)?;
        coarse.set_initial(b.field, t.single_scale()?)?;
    }
    Ok(coarse)
}

/// Embeds a solution of `coarse` into the mode set of `fine`.
pub fn prolongate_solution(
    coarse: &GalerkinSystem,
    x: &[f64],
    fine: &GalerkinSystem,
) -> Result<Vec<f64>> {
    let tensors = coarse.to_tensors(x)?;
    let lifted: Vec<CoefficientTensor> = tensors
        .iter()
        .zip(fine.blocks())
        .map(|(t, b)| t.prolongate(fine.block_axes(b)))
        .collect::<Result<_>>()?;
    fine.from_tensors(&lifted)
}

/// Damped Newton iteration from `x`.
pub fn newton(
    system: &GalerkinSystem,
    mut x: Vec<f64>,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let mut iterations = Vec::new();
    let mut history = Vec::new();
    let mut damping = 0.0;
    let mut step = 0.0;
    for iter in 0..=settings.max_iter {
        let r = system.residual(&x)?;
        let rn = norm_inf(&system.multiscale_residual(&r)?);
        history.push(rn);
        iterations.push(IterationRecord {
            iter,
            residual: rn,
            damping,
            step,
        });
        if !rn.is_finite() {
            return Err(Error::NoConvergence {
                reason: "residual became non-finite".into(),
                condition_estimate: None,
                residual_history: history,
            });
        }
        if rn <= settings.tol {
            return Ok((
                x,
                ConvergenceReport {
                    method: SolveMethod::Newton,
                    iterations,
                    residual: rn,
                },
            ));
        }
        if iter == settings.max_iter {
            break;
        }
        let j = system.jacobian(&x)?;
        let merit = norm2(&r);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut accepted = None;
        if let Ok(d) = solve(&j, &neg) {
            if let Some(found) = line_search(system, &x, &d, merit)? {
                accepted = Some((found, 0.0));
            }
        }
        if accepted.is_none() {
            let (jtj, jtr) = normal_equations(&j, &neg);
            let scale = (0..jtj.rows)
                .map(|i| jtj.get(i, i))
                .fold(0.0, f64::max)
                .max(1.0);
            let mut mu = settings.lm_initial * scale;
            for _ in 0..settings.lm_escalations {
                let mut a = jtj.clone();
                for i in 0..a.rows {
                    a.add(i, i, mu);
                }
                if let Ok(d) = solve(&a, &jtr) {
                    if let Some(found) = line_search(system, &x, &d, merit)? {
                        accepted = Some((found, mu));
                        break;
                    }
                }
                mu *= settings.lm_factor;
            }
        }
        match accepted {
            Some(((alpha, xn), mu)) => {
                x = xn;
                damping = mu;
                step = alpha;
            }
            None => {
                return Err(Error::NoConvergence {
                    reason: "Jacobian numerically singular after damping escalation".into(),
                    condition_estimate: Some(condition_estimate(&j)),
                    residual_history: history,
                })
            }
        }
    }
    Err(Error::NoConvergence {
        reason: format!("maximum of {} iterations exceeded", settings.max_iter),
        condition_estimate: None,
        residual_history: history,
    })
}

fn normal_equations(j: &Dense, rhs: &[f64]) -> (Dense, Vec<f64>) {
    let jt = j.transpose();
    (jt.matmul(j), jt.matvec(rhs))
}

/// Backtracking on `‖ℓ‖₂` with the Armijo factor `1 − 1e-4 α`.
fn line_search(
    system: &GalerkinSystem,
    x: &[f64],
    d: &[f64],
    merit: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    if d.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let mut alpha = 1.0;
    for _ in 0..11 {
        let xn: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let m = norm2(&system.residual(&xn)?);
        if m.is_finite() && m <= (1.0 - 1e-4 * alpha) * merit {
            return Ok(Some((alpha, xn)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Continuation from the uncoupled problem to the target coupling.
pub fn solve_by_continuation(
    system: &GalerkinSystem,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let target = system.hamiltonian().coupling();
    let steps = settings.continuation_steps.max(1);
    let mut report: Option<ConvergenceReport> = None;
    let mut x: Option<Vec<f64>> = None;
    for k in 0..=steps {
        let lambda = target * k as f64 / steps as f64;
        let stage = system.with_coupling(lambda)?;
        let (xs, r) = if k == 0 {
            solve_coefficients(
                &stage,
                None,
                &SolverSettings {
                    nested: false,
                    ..settings.clone()
                },
            )?
        } else {
            newton(
                &stage,
                x.take().unwrap_or_else(|| stage.constant_guess()),
                settings,
            )?
        };
        x = Some(xs);
        match report.as_mut() {
            None => report = Some(r),
            Some(acc) => acc.merge(r),
        }
    }
    let report = report.ok_or_else(|| Error::Internal("empty continuation".into()))?;
    Ok((x.unwrap_or_default(), report))
}

/// Solution of one time window.
#[derive(Debug, Clone)]
pub struct WindowSolution {
    pub start: f64,
    pub x: Vec<f64>,
    pub report: ConvergenceReport,
}

/// Solves `windows` consecutive windows, each starting from the end trace
/// of the previous one.
pub fn solve_windows(
    system: &GalerkinSystem,
    windows: usize,
    settings: &SolverSettings,
) -> Result<Vec<WindowSolution>> {
    let w = system
        .time_window()
        .ok_or_else(|| Error::Config("window chaining needs a time axis".into()))?;
    let mut out: Vec<WindowSolution> = Vec::with_capacity(windows);
    let mut current = system.clone();
    for k in 0..windows {
        if k > 0 {
            let prev = out
                .last()
                .map(|s| current.end_trace(&s.x))
                .unwrap_or_default();
            current = current.with_window_start(w.start + k as f64 * w.length)?;
            for (b, ic) in system.blocks().iter().zip(prev) {
                current.set_initial(b.field, ic)?;
            }
        }
        let guess = if current.is_linear() {
            None
        } else {
            Some(current.constant_guess())
        };
        let (x, report) = solve_coefficients(&current, guess.as_deref(), settings)?;
        out.push(WindowSolution {
            start: current.time_window().map_or(0.0, |t| t.start),
            x,
            report,
        });
    }
    Ok(out)
}

/// End-of-window single-particle coefficients of a chained run.
pub fn final_one_particle(system: &GalerkinSystem, last: &WindowSolution) -> Result<Vec<f64>> {
    let idx = system
        .blocks()
        .iter()
        .position(|b| b.field == Field::One)
        .ok_or_else(|| Error::Internal("no one-particle block".into()))?;
    let sys = system.with_window_start(last.start)?;
    Ok(sys.end_trace(&last.x).swap_remove(idx))
}
