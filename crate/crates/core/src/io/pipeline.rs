//! build → solve → refine → classify, and every artifact of a run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cutoff::{
    refine_until_converged, solve_single_level, ConvergenceHistory, RefinementFailure,
    RefinementOutcome, RefinementStatus,
};
use crate::error::{Error, Result};
use crate::pattern::{classify, PatternReport, TimeResolvedSpectrum};
use crate::solver::{decompose, CoefficientTensor};

use super::config::{FigureStyle, LoadedConfig, ProblemSpec, RunConfig};
use super::dump::{coefficients_to_csv, grid_csv, spectrum_csv};
use super::exit_code;

pub const LOCK_FILE: &str = ".waveleton.lock";
pub const ERROR_FILE: &str = "error.json";
pub const COEFFICIENT_FILE: &str = "coefficients.csv";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "pid = {}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is in use by another run (remove {LOCK_FILE} if stale)",
                dir.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(name.to_string());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTiming {
    pub level: u32,
    pub s_max: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub program: String,
    pub version: String,
    pub command: String,
    pub status: RefinementStatus,
    pub exit_code: i32,
    pub final_level: u32,
    pub final_s_max: usize,
    pub label: String,
    pub total_seconds: f64,
    pub artifacts: Vec<String>,
    pub levels: Vec<LevelTiming>,
}

/// `manifest.toml`: run facts plus a verbatim echo of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunInfo,
    pub config: RunConfig,
    /// Contents of `problem_file`, when the problem was not inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub status: RefinementStatus,
    pub exit_code: i32,
    pub report: PatternReport,
    pub history: ConvergenceHistory,
    pub artifacts: Vec<String>,
}

/// A failed run: the error, the exit code and whatever history exists.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub exit_code: i32,
    pub history: Option<ConvergenceHistory>,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        RunError {
            exit_code: exit_code(&error),
            error,
            history: None,
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<String>,
}

/// Writes `error.json` into `dir` (created when missing).
pub fn write_error_record(dir: &Path, err: &RunError) -> Result<PathBuf> {
    let (line, column) = match &err.error {
        Error::Parse { line, column, .. } => (Some(*line), Some(*column)),
        _ => (None, None),
    };
    let record = ErrorRecord {
        kind: err.error.kind(),
        message: err.error.to_string(),
        exit_code: err.exit_code,
        line,
        column,
        history: err.history.as_ref().map(ConvergenceHistory::to_csv),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(ERROR_FILE);
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn status_exit_code(status: RefinementStatus) -> i32 {
    match status {
        RefinementStatus::Converged | RefinementStatus::SingleLevel => 0,
        RefinementStatus::NotConverged | RefinementStatus::NotConvergedBudget => 2,
    }
}

/// Tensor holding only the largest-magnitude coefficient of `t`.
pub fn dominant_mode(t: &CoefficientTensor) -> CoefficientTensor {
    let mut out = t.scaled(0.0);
    let best = t
        .values()
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    if best.1 > 0.0 {
        out.values_mut()[best.0] = t.values()[best.0];
    }
    out
}

/// Phase tensor plotted for `style`; `None` for no figure.
pub fn figure_tensor(
    style: FigureStyle,
    fin: &CoefficientTensor,
    report: &PatternReport,
    cut: Option<u32>,
) -> Result<Option<CoefficientTensor>> {
    Ok(match style {
        FigureStyle::None => None,
        FigureStyle::Fig1 => Some(dominant_mode(fin)),
        FigureStyle::Fig2 => Some(fin.clone()),
        FigureStyle::Fig3 => {
            // Scale bucket b holds wavelet level b − 1; cut = b keeps it.
            let cut = cut.unwrap_or((report.dominant_level as u32).max(1));
            let axes = fin.phase_axes().len();
            Some(decompose(fin, &vec![cut; axes])?.slow)
        }
    })
}

/// Runs a loaded configuration and writes all artifacts into its output
/// directory. On failure the caller decides where the error record goes.
pub fn run(loaded: &LoadedConfig, command: &str) -> Result<RunSummary, RunError> {
    faer::set_global_parallelism(faer::Par::Seq);
    let started = Instant::now();
    let cfg = &loaded.config;
    let problem = loaded.build()?;
    let dir = cfg.output.dir.clone();
    let _lock = OutputLock::acquire(&dir)?;

    let policy = cfg.policy();
    let outcome = if cfg.refinement.enabled {
        refine_until_converged(&problem, &policy)
    } else {
        solve_single_level(&problem, &cfg.solver, policy.memory_budget)
    };
    let RefinementOutcome { solution, history } = outcome.map_err(|f| {
        let RefinementFailure { error, history } = *f;
        RunError {
            exit_code: exit_code(&error),
            error,
            history: Some(history),
        }
    })?;
    let fail = |e: Error| RunError {
        exit_code: exit_code(&e),
        error: e,
        history: Some(history.clone()),
    };

    let last = solution.windows.len() - 1;
    let window = solution.one_particle(last).map_err(fail)?;
    let fin = solution.final_one_particle().map_err(fail)?;
    let series = TimeResolvedSpectrum::sample(&window, cfg.output.slices).map_err(fail)?;
    let report = classify(&series, &cfg.classify).map_err(fail)?;
    let status = history.status;
    let code = status_exit_code(status);

    let meta = vec![
        ("level".to_string(), solution.level.to_string()),
        ("s_max".to_string(), solution.s_max.to_string()),
        ("window".to_string(), last.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
    ];
    let mut written = Vec::new();
    let out = (|| -> Result<()> {
        write(&dir, COEFFICIENT_FILE, &coefficients_to_csv(&window, &meta)?, &mut written)?;
        let end = problem.time.as_ref().map_or(0.0, |t| t.end());
        let grid_meta = vec![
            ("field".to_string(), "F_1".to_string()),
            ("time".to_string(), format!("{end:.16e}")),
        ];
        let (gq, gp) = (cfg.output.grid_q, cfg.output.grid_p);
        write(&dir, "grid.csv", &grid_csv(&fin, gq, gp, &grid_meta)?, &mut written)?;
        if let (Some(name), Some(t)) = (
            cfg.output.figure.file_name(),
            figure_tensor(cfg.output.figure, &fin, &report, cfg.output.cut)?,
        ) {
            let mut m = grid_meta.clone();
            m.push(("style".to_string(), format!("{:?}", cfg.output.figure).to_lowercase()));
            write(&dir, name, &grid_csv(&t, gq, gp, &m)?, &mut written)?;
        }
        write(&dir, "spectrum.csv", &spectrum_csv(&series), &mut written)?;
        write(&dir, "report.txt", &report.to_key_value(), &mut written)?;
        write(&dir, "history.csv", &history.to_csv(), &mut written)?;
        let manifest = Manifest {
            run: RunInfo {
                program: "waveleton".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                status,
                exit_code: code,
                final_level: solution.level,
                final_s_max: solution.s_max,
                label: report.label.to_string(),
                total_seconds: started.elapsed().as_secs_f64(),
                artifacts: {
                    let mut a = written.clone();
                    a.push("manifest.toml".into());
                    a
                },
                levels: history
                    .entries
                    .iter()
                    .map(|e| LevelTiming {
                        level: e.level,
                        s_max: e.s_max,
                        seconds: e.seconds,
                    })
                    .collect(),
            },
            config: cfg.clone(),
            problem: loaded.problem_doc.as_ref().map(|_| loaded.problem.clone()),
        };
        let text = toml::to_string(&manifest)
            .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
        write(&dir, "manifest.toml", &text, &mut written)
    })();
    out.map_err(fail)?;

    Ok(RunSummary {
        out_dir: dir,
        status,
        exit_code: code,
        report,
        history,
        artifacts: written,
    })
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    toml::from_str(text).map_err(|e| Error::Parse {
        line: 1,
        column: 1,
        message: format!("manifest: {}", e.message()),
    })
}
