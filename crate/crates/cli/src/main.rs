//! `waveleton` command-line driver.
//!
//! Every global flag can also be set through an environment variable with
//! the `WAVELETON_` prefix (`WAVELETON_CONFIG`, `WAVELETON_OUT`, ...).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use waveleton::io::config::parse_thresholds;
use waveleton::io::demos::{find_demo, load_demo, DEMOS};
use waveleton::io::dump::coefficients_from_csv;
use waveleton::io::pipeline::ERROR_FILE;
use waveleton::io::tables::export_tables;
use waveleton::io::{exit_code, load_config, run, write_error_record, LoadedConfig, RunError};
use waveleton::pattern::{classify, Thresholds, TimeResolvedSpectrum};
use waveleton::wavelet::MAX_ORDER;
use waveleton::Error;

#[derive(Debug, Parser)]
#[command(name = "waveleton", version, about = "Wavelet-Galerkin kinetic hierarchy solver")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "WAVELETON_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, env = "WAVELETON_OUT")]
    out: Option<PathBuf>,
    /// Seed for randomized initial data.
    #[arg(long, global = true, env = "WAVELETON_SEED")]
    seed: Option<u64>,
    /// Refinement tolerance, overriding `refinement.epsilon`.
    #[arg(long, global = true, env = "WAVELETON_EPSILON")]
    epsilon: Option<f64>,
    /// Worker threads, overriding `threads`.
    #[arg(long, global = true, env = "WAVELETON_THREADS")]
    threads: Option<usize>,
    /// Built-in demo used by `run` instead of `--config`.
    #[arg(long, global = true, env = "WAVELETON_DEMO")]
    demo: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve, refine and classify the configured problem.
    Run,
    /// Run a built-in demo; `--list` prints the available names.
    Demo {
        name: Option<String>,
        #[arg(long)]
        list: bool,
        /// Print the demo configuration instead of running it.
        #[arg(long)]
        show: bool,
    },
    /// Export filter banks and connection coefficients as CSV.
    Tables {
        /// Orders to export (default: all).
        #[arg(long, value_delimiter = ',')]
        orders: Vec<usize>,
    },
    /// Classify a coefficient dump and print the pattern report.
    Classify {
        dump: PathBuf,
        /// Time slices sampled from a space-time dump.
        #[arg(long, default_value_t = 5)]
        slices: usize,
        /// Classification thresholds (TOML with the `[classify]` keys).
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
}

fn fail(dir: &Path, err: RunError) -> ExitCode {
    eprintln!("error: {err}");
    match write_error_record(dir, &err) {
        Ok(path) => eprintln!("error record: {}", path.display()),
        Err(e) => eprintln!("could not write {ERROR_FILE}: {e}"),
    }
    ExitCode::from(err.exit_code as u8)
}

fn apply_overrides(cli: &Cli, loaded: &mut LoadedConfig) {
    let c = &mut loaded.config;
    if let Some(out) = &cli.out {
        c.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(eps) = cli.epsilon {
        c.refinement.epsilon = eps;
    }
    if let Some(t) = cli.threads {
        c.threads = t;
    }
}

fn run_loaded(cli: &Cli, loaded: Result<LoadedConfig, Error>, command: &str) -> ExitCode {
    let fallback = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut loaded = match loaded {
        Ok(l) => l,
        Err(e) => return fail(&fallback, e.into()),
    };
    apply_overrides(cli, &mut loaded);
    let dir = loaded.config.output.dir.clone();
    if let Err(e) = loaded.config.validate() {
        return fail(&dir, e.into());
    }
    // A second call fails harmlessly when a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(loaded.config.threads)
        .build_global();
    match run(&loaded, command) {
        Ok(summary) => {
            println!("status: {:?}", summary.status);
            if let Some(last) = summary.history.entries.last() {
                println!("level: {} (N = {}, s_max = {})", last.level, last.modes, last.s_max);
            }
            println!("label: {}", summary.report.label);
            println!("output: {}", summary.out_dir.display());
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => fail(&dir, e),
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    // Usage errors are config errors; clap's own code 2 means "not converged" here.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match &cli.command {
        Command::Run => {
            let loaded = match (&cli.config, &cli.demo) {
                (Some(path), None) => load_config(path),
                (None, Some(name)) => load_demo(name),
                (Some(_), Some(_)) => Err(Error::Config("give either --config or --demo".into())),
                (None, None) => Err(Error::Config("run needs --config or --demo".into())),
            };
            run_loaded(&cli, loaded, &command_line())
        }
        Command::Demo { name, list, show } => {
            if *list {
                for d in DEMOS {
                    println!("{:<16} {}", d.name, d.summary);
                }
                return ExitCode::SUCCESS;
            }
            let Some(name) = name.as_ref().or(cli.demo.as_ref()) else {
                eprintln!("error: demo needs a name (see `waveleton demo --list`)");
                return ExitCode::from(4);
            };
            if *show {
                return match find_demo(name) {
                    Ok(d) => {
                        print!("{}", d.toml);
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(exit_code(&e) as u8)
                    }
                };
            }
            run_loaded(&cli, load_demo(name), &command_line())
        }
        Command::Tables { orders } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("tables"));
            let orders = if orders.is_empty() {
                (1..=MAX_ORDER).collect()
            } else {
                orders.clone()
            };
            match export_tables(&dir, orders) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&dir, e.into()),
            }
        }
        Command::Classify {
            dump,
            slices,
            thresholds,
        } => match classify_dump(dump, *slices, thresholds.as_deref()) {
            Ok(text) => {
                if let Some(dir) = &cli.out {
                    if let Err(e) = std::fs::create_dir_all(dir)
                        .and_then(|_| std::fs::write(dir.join("report.txt"), &text))
                    {
                        eprintln!("error: {e}");
                        return ExitCode::from(4);
                    }
                }
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
                fail(&dir, e.into())
            }
        },
    }
}

fn classify_dump(path: &Path, slices: usize, thresholds: Option<&Path>) -> Result<String, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let (tensor, _) = coefficients_from_csv(&text)?;
    let th = match thresholds {
        None => Thresholds::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_thresholds(&text, &p.display().to_string())?
        }
    };
    if tensor.components() != 1 {
        return Err(Error::Shape("classify expects a one-particle dump".into()));
    }
    let series = TimeResolvedSpectrum::sample(&tensor, slices)?;
    Ok(classify(&series, &th)?.to_key_value())
}
