use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;

use nnts::estimation::{scan_models, FitOptions, ModelFamily};
use nnts::inference::{symmetry_tests, TestSelection};
use nnts::io::{
    density_curve, load_experiment_config, load_model, parse_angles, save_model, write_angles, write_density_curve,
    write_json, write_rejection_csv, ColumnSelector,
};
use nnts::report::{fit_table, Criterion, FitTable, TableFamily};
use nnts::simulation::run_experiment;
use nnts::{AngleSample, AngleUnit, CircularModel, NntsError, RngStream};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "nnts",
    version,
    about = "NNTS circular density fitting and reflective-symmetry tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Rad,
    Deg,
    Hour24,
}

impl From<Unit> for AngleUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Rad => AngleUnit::Radians,
            Unit::Deg => AngleUnit::Degrees,
            Unit::Hour24 => AngleUnit::Hours24,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    General,
    Symmetric,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    LrAsymptotic,
    LrBootstrap,
    B2Bootstrap,
    All,
}

#[derive(clap::Args)]
struct Input {
    /// CSV file with one angle per row (or pick a column with --column)
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rad")]
    unit: Unit,
    /// Column name or zero-based index
    #[arg(long)]
    column: Option<String>,
}

impl Input {
    fn load(&self) -> Result<AngleSample, NntsError> {
        let column = self
            .column
            .as_deref()
            .map(|c| c.parse::<ColumnSelector>().expect("infallible"));
        parse_angles(&self.input, self.unit.into(), column.as_ref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit general and/or symmetric models for M = 0..m-max and write a report
    Fit {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "both")]
        family: Family,
        #[arg(long, default_value_t = 10)]
        m_max: usize,
        /// Degree of the saved model (default: best by --criterion)
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_enum, default_value = "bic")]
        criterion: CriterionArg,
        /// Seed for random restarts
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Iteration budget per fit
        #[arg(long, default_value_t = FitOptions::default().max_iters)]
        max_iters: usize,
        #[arg(long)]
        out_model: Option<PathBuf>,
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Exit with status 4 if any fit fails to converge
        #[arg(long)]
        strict: bool,
    },
    /// Test reflective symmetry; prints a JSON array of results
    SymmetryTest {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "all")]
        method: Method,
        /// Degree, or `auto` for the best-BIC symmetric model
        #[arg(long, default_value = "auto")]
        m: String,
        #[arg(long, default_value_t = 999)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        m_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a sample from a saved model
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model's density on a uniform grid
    Density {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(8..))]
        grid: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a size/power experiment from a JSON or TOML config
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    NotConverged(String),
}

impl From<NntsError> for Failure {
    fn from(e: NntsError) -> Self {
        match e {
            NntsError::Domain(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit {
            input,
            family,
            m_max,
            m,
            criterion,
            seed,
            restarts,
            max_iters,
            out_model,
            out_report,
            strict,
        } => {
            let data = input.load()?;
            let opts = FitOptions {
                seed,
                n_restarts: restarts,
                max_iters,
                ..FitOptions::default()
            };
            let family = match family {
                Family::General => TableFamily::General,
                Family::Symmetric => TableFamily::Symmetric,
                Family::Both => TableFamily::Both,
            };
            let criterion = match criterion {
                CriterionArg::Aic => Criterion::Aic,
                CriterionArg::Bic => Criterion::Bic,
            };
            let table = fit_table(&data, m_max.max(m.unwrap_or(0)), family, criterion, &opts)?;
            print_table_summary(&table, m);
            if let Some(path) = &out_report {
                table.write_csv(path)?;
            }
            if let Some(path) = &out_model {
                save_model(&chosen_model(&table, m), path)?;
            }
            if strict && !table.all_converged() {
                return Err(Failure::NotConverged("at least one fit did not converge".into()));
            }
            Ok(())
        }
        Command::SymmetryTest {
            input,
            method,
            m,
            k,
            m_max,
            seed,
            out,
        } => {
            let fixed = if m.eq_ignore_ascii_case("auto") {
                None
            } else {
                let d = m
                    .parse::<usize>()
                    .map_err(|_| Failure::Usage(format!("--m must be `auto` or an integer, got `{m}`")))?;
                if d == 1 {
                    return Err(Failure::Usage("M=1 NNTS models are symmetric by definition".into()));
                }
                Some(d)
            };
            let data = input.load()?;
            let opts = FitOptions::default();
            let which = TestSelection {
                lr_asymptotic: matches!(method, Method::LrAsymptotic | Method::All),
                lr_bootstrap: matches!(method, Method::LrBootstrap | Method::All),
                b2_bootstrap: matches!(method, Method::B2Bootstrap | Method::All),
            };
            let degree = match fixed {
                Some(d) => d,
                None => {
                    let scan = scan_models(&data, m_max, ModelFamily::Symmetric, &opts);
                    let best = scan
                        .best_bic
                        .map(|i| scan.entries[i].m)
                        .ok_or_else(|| Failure::Data("no symmetric model could be fitted".into()))?;
                    eprintln!("best-BIC symmetric model: M={best}");
                    best
                }
            };
            let which = if degree < 2 {
                if which.lr_asymptotic || which.lr_bootstrap {
                    warn!("selected M={degree} is symmetric by construction; skipping the LR tests");
                }
                TestSelection {
                    lr_asymptotic: false,
                    lr_bootstrap: false,
                    ..which
                }
            } else {
                which
            };
            let results = symmetry_tests(&data, degree, k, seed, which, &opts)?;
            let text = serde_json::to_string_pretty(&results).expect("results serialize");
            println!("{text}");
            if let Some(path) = out {
                write_json(&path, &results)?;
            }
            Ok(())
        }
        Command::Simulate { model, n, seed, out } => {
            if n == 0 {
                return Err(Failure::Usage("--n must be >= 1".into()));
            }
            let model = load_model(&model)?;
            let sample = model.sample(n, &RngStream::new(seed, 0))?;
            write_angles(&out, &sample)?;
            Ok(())
        }
        Command::Density { model, grid, out } => {
            let model = load_model(&model)?;
            write_density_curve(&out, &density_curve(&model, grid as usize))?;
            Ok(())
        }
        Command::Experiment { config, out_dir } => {
            let spec = load_experiment_config(&config)?;
            let table = run_experiment(&spec)?;
            fs::create_dir_all(&out_dir).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;
            write_rejection_csv(&out_dir.join("rates.csv"), &table)?;
            write_json(&out_dir.join("audit.json"), &table)?;
            eprintln!(
                "wrote {} and {}",
                display(&out_dir.join("rates.csv")),
                display(&out_dir.join("audit.json"))
            );
            Ok(())
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// The model to save: the requested degree, or the best row by criterion.
/// With both families, the one with the smaller criterion at that row wins.
fn chosen_model(table: &FitTable, m: Option<usize>) -> CircularModel {
    type Score = fn(&FitTable, usize) -> f64;
    let (crit_g, crit_s): (Score, Score) = match table.criterion {
        Criterion::Aic => (
            |t, i| t.rows[i].general.aic,
            |t, i| t.rows[i].symmetric.as_ref().map_or(f64::INFINITY, |s| s.aic),
        ),
        Criterion::Bic => (
            |t, i| t.rows[i].general.bic,
            |t, i| t.rows[i].symmetric.as_ref().map_or(f64::INFINITY, |s| s.bic),
        ),
    };
    let general = |i: usize| CircularModel::General(table.rows[i].general.model.clone());
    let symmetric = |i: usize| match &table.rows[i].symmetric {
        Some(s) => CircularModel::Symmetric(s.model.clone()),
        None => general(i),
    };
    match table.family {
        TableFamily::General => general(m.unwrap_or(table.best_general.unwrap_or(0))),
        TableFamily::Symmetric => symmetric(m.unwrap_or(table.best_symmetric.unwrap_or(0))),
        TableFamily::Both => {
            let (gi, si) = match m {
                Some(m) => (m, m),
                None => (table.best_general.unwrap_or(0), table.best_symmetric.unwrap_or(0)),
            };
            if crit_s(table, si) <= crit_g(table, gi) {
                symmetric(si)
            } else {
                general(gi)
            }
        }
    }
}

fn print_table_summary(table: &FitTable, m: Option<usize>) {
    let name = match table.criterion {
        Criterion::Aic => "AIC",
        Criterion::Bic => "BIC",
    };
    if let Some(i) = table.best_general {
        println!("best general model by {name}: M={}", table.rows[i].m);
    }
    if let Some(i) = table.best_symmetric {
        println!("best symmetric model by {name}: M={}", table.rows[i].m);
    }
    if let Some(m) = m {
        if let Some((lr, p)) = table.row(m).and_then(|r| r.lr) {
            if table.family == TableFamily::Both {
                println!("LR_GS, chi2 p-value at M={m}: {lr:.3}, {p:.3}");
            }
        }
    }
}
