//! File formats: angle CSV input, model JSON documents, experiment configs,
//! and CSV/JSON output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{NntsError, Result};
use crate::estimation::FitOptions;
use crate::model::{AngleSample, AngleUnit, ComplexCoefficients, NntsModel, SymmetricNntsModel, NORM_TOL};
use crate::sampling::{random_general_model, random_symmetric_model, CircularModel, KSineBase, KSineModel, RngStream};
use crate::simulation::{ExperimentSpec, Generator, RejectionTable, TestConfig};

/// Version written into and required from model documents.
pub const SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> NntsError {
    NntsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> NntsError {
    NntsError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

impl FromStr for AngleUnit {
    type Err = NntsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rad" | "radians" => Ok(AngleUnit::Radians),
            "deg" | "degrees" => Ok(AngleUnit::Degrees),
            "hour24" | "hours24" => Ok(AngleUnit::Hours24),
            other => Err(NntsError::domain(format!(
                "unknown angle unit `{other}` (expected rad, deg or hour24)"
            ))),
        }
    }
}

/// Column of a CSV file: a header name or a zero-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

impl FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.trim().to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Name(n) => write!(f, "{n}"),
            ColumnSelector::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Reads one column of angles from a CSV file. A first row whose selected
/// field is not numeric is taken as a header. Blank lines are skipped.
pub fn parse_angles(path: &Path, unit: AngleUnit, column: Option<&ColumnSelector>) -> Result<AngleSample> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_angles_str(&text, path, unit, column)
}

/// [`parse_angles`] on in-memory text; `path` is used only in messages.
pub fn parse_angles_str(
    text: &str,
    path: &Path,
    unit: AngleUnit,
    column: Option<&ColumnSelector>,
) -> Result<AngleSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut index: Option<usize> = match column {
        Some(ColumnSelector::Index(i)) => Some(*i),
        None => Some(0),
        Some(ColumnSelector::Name(_)) => None,
    };
    let mut values = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if first {
            first = false;
            if let Some(ColumnSelector::Name(name)) = column {
                let i = record.iter().position(|h| h == name).ok_or_else(|| {
                    parse_err(
                        path,
                        line,
                        format!(
                            "unknown column `{name}` (header is {:?})",
                            record.iter().collect::<Vec<_>>()
                        ),
                    )
                })?;
                index = Some(i);
                continue;
            }
            let i = index.expect("index known without a name");
            if record.get(i).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        let i = index.expect("column resolved after the first row");
        let field = record.get(i).ok_or_else(|| {
            let which = column.map_or_else(|| "#0".to_string(), |c| c.to_string());
            parse_err(path, line, format!("row has no column {which}"))
        })?;
        let x: f64 = field
            .parse()
            .map_err(|_| parse_err(path, line, format!("`{field}` is not a number")))?;
        if !x.is_finite() {
            return Err(parse_err(path, line, format!("`{field}` is not a finite angle")));
        }
        values.push(x);
    }
    if values.is_empty() {
        return Err(parse_err(path, 1, "file contains no angles"));
    }
    Ok(AngleSample::from_unit(values, unit)?.with_source(path.display().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralPayload {
    #[serde(rename = "M")]
    pub m: usize,
    pub coefficients: Vec<ComplexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetricPayload {
    #[serde(rename = "M")]
    pub m: usize,
    pub rho: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSinePayload {
    pub mu: f64,
    pub lambda: f64,
    pub k_star: u32,
    pub base: KSineBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ModelBody {
    NntsGeneral(GeneralPayload),
    NntsSymmetric(SymmetricPayload),
    Ksine(KSinePayload),
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

impl From<CircularModel> for ModelFile {
    fn from(model: CircularModel) -> Self {
        let body = match model {
            CircularModel::General(g) => ModelBody::NntsGeneral(GeneralPayload {
                m: g.m(),
                coefficients: g
                    .coeffs()
                    .as_slice()
                    .iter()
                    .map(|c| ComplexEntry { re: c.re, im: c.im })
                    .collect(),
            }),
            CircularModel::Symmetric(s) => ModelBody::NntsSymmetric(SymmetricPayload {
                m: s.m(),
                rho: s.rho().to_vec(),
                mu: s.mu(),
            }),
            CircularModel::KSine(k) => ModelBody::Ksine(KSinePayload {
                mu: k.mu,
                lambda: k.lambda,
                k_star: k.k_star,
                base: k.base,
            }),
        };
        ModelFile {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

fn check_unit_norm(sum_sq: f64, what: &str) -> Result<()> {
    if !sum_sq.is_finite() || (sum_sq - 1.0).abs() > NORM_TOL {
        return Err(NntsError::invalid(format!(
            "{what} violate the unit-norm constraint sum |c_k|^2 = 1 (got {sum_sq})"
        )));
    }
    Ok(())
}

fn check_degree(m: usize, len: usize, what: &str) -> Result<()> {
    if len != m + 1 {
        return Err(NntsError::invalid(format!("M={m} needs {} {what}, found {len}", m + 1)));
    }
    Ok(())
}

impl TryFrom<ModelFile> for CircularModel {
    type Error = NntsError;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(NntsError::invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        match file.body {
            ModelBody::NntsGeneral(p) => {
                check_degree(p.m, p.coefficients.len(), "coefficients")?;
                if p.coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(NntsError::invalid("coefficients must be finite"));
                }
                let values: Vec<Complex64> = p.coefficients.iter().map(|c| Complex64::new(c.re, c.im)).collect();
                check_unit_norm(values.iter().map(|c| c.norm_sqr()).sum(), "coefficients")?;
                Ok(CircularModel::General(NntsModel::new(ComplexCoefficients::new(
                    values,
                )?)))
            }
            ModelBody::NntsSymmetric(p) => {
                check_degree(p.m, p.rho.len(), "rho values")?;
                if p.rho.iter().any(|r| !r.is_finite()) {
                    return Err(NntsError::invalid("rho must be finite"));
                }
                check_unit_norm(p.rho.iter().map(|r| r * r).sum(), "rho values")?;
                Ok(CircularModel::Symmetric(SymmetricNntsModel::new(p.rho, p.mu)?))
            }
            ModelBody::Ksine(p) => Ok(CircularModel::KSine(KSineModel::new(p.mu, p.lambda, p.k_star, p.base)?)),
        }
    }
}

impl Serialize for CircularModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelFile::from(self.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CircularModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = ModelFile::deserialize(deserializer)?;
        CircularModel::try_from(file).map_err(serde::de::Error::custom)
    }
}

/// Serializes a model document as pretty JSON. Floats use the shortest
/// representation that parses back to the same value.
pub fn model_to_json(model: &CircularModel) -> String {
    serde_json::to_string_pretty(model).expect("model documents always serialize")
}

pub fn model_from_json(text: &str) -> Result<CircularModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| NntsError::invalid(format!("model document: {e}")))?;
    CircularModel::try_from(file)
}

pub fn save_model(model: &CircularModel, path: &Path) -> Result<()> {
    let mut text = model_to_json(model);
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_model(path: &Path) -> Result<CircularModel> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    model_from_json(&text).map_err(|e| match e {
        NntsError::InvalidModel(msg) => NntsError::InvalidModel(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    id: String,
    #[serde(default)]
    model: Option<ModelFile>,
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default)]
    random: Option<RawRandom>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RandomFamily {
    General,
    Symmetric,
}

/// A model drawn from a fixed seed, so configs can name generators without
/// spelling out coefficients.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRandom {
    family: RandomFamily,
    #[serde(rename = "M")]
    m: usize,
    seed: u64,
}

impl RawRandom {
    fn draw(&self) -> CircularModel {
        let mut rng = RngStream::new(self.seed, 0).rng();
        match self.family {
            RandomFamily::General => CircularModel::General(random_general_model(self.m, &mut rng)),
            RandomFamily::Symmetric => CircularModel::Symmetric(random_symmetric_model(self.m, &mut rng)),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    max_iters: Option<usize>,
    grad_tol: Option<f64>,
    loglik_tol: Option<f64>,
    mu_grid_points: Option<usize>,
    n_restarts: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    generators: Vec<RawGenerator>,
    sample_sizes: Vec<usize>,
    #[serde(default = "default_datasets")]
    n_datasets: usize,
    tests: Vec<TestConfig>,
    alphas: Vec<f64>,
    master_seed: u64,
    #[serde(default)]
    fit: Option<RawFit>,
}

fn default_datasets() -> usize {
    100
}

fn typed_from_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        NntsError::schema(
            if path == "." { "<root>".to_string() } else { path },
            e.into_inner().to_string(),
        )
    })
}

/// Parses an experiment config. TOML when `path` ends in `.toml`, JSON
/// otherwise. Generator models are inline documents (`model`), paths to
/// model files (`file`, relative to the config's directory) or seeded random
/// draws (`random`).
pub fn load_experiment_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let base = path.parent().unwrap_or(Path::new("."));
    parse_experiment_config(&text, is_toml, base)
}

pub fn parse_experiment_config(text: &str, is_toml: bool, base: &Path) -> Result<ExperimentSpec> {
    let value: serde_json::Value = if is_toml {
        toml::from_str(text).map_err(|e| NntsError::schema("<root>", e.to_string()))?
    } else {
        serde_json::from_str(text).map_err(|e| NntsError::schema("<root>", e.to_string()))?
    };
    let raw: RawExperiment = typed_from_value(value)?;
    let mut generators = Vec::with_capacity(raw.generators.len());
    for (i, g) in raw.generators.into_iter().enumerate() {
        let field = format!("generators[{i}]");
        let model =
            match (g.model, g.file, g.random) {
                (Some(doc), None, None) => CircularModel::try_from(doc)
                    .map_err(|e| NntsError::schema(format!("{field}.model"), e.to_string()))?,
                (None, Some(file), None) => load_model(&base.join(&file))
                    .map_err(|e| NntsError::schema(format!("{field}.file"), e.to_string()))?,
                (None, None, Some(random)) => random.draw(),
                _ => {
                    return Err(NntsError::schema(
                        field,
                        "exactly one of `model`, `file` or `random` is required",
                    ))
                }
            };
        generators.push(Generator { id: g.id, model });
    }
    let mut opts = FitOptions::default();
    if let Some(fit) = raw.fit {
        opts.max_iters = fit.max_iters.unwrap_or(opts.max_iters);
        opts.grad_tol = fit.grad_tol.unwrap_or(opts.grad_tol);
        opts.loglik_tol = fit.loglik_tol.unwrap_or(opts.loglik_tol);
        opts.mu_grid_points = fit.mu_grid_points.unwrap_or(opts.mu_grid_points);
        opts.n_restarts = fit.n_restarts.unwrap_or(opts.n_restarts);
        opts.seed = fit.seed.unwrap_or(opts.seed);
    }
    let spec = ExperimentSpec {
        generators,
        sample_sizes: raw.sample_sizes,
        n_datasets: raw.n_datasets,
        tests: raw.tests,
        alphas: raw.alphas,
        master_seed: raw.master_seed,
        opts,
    };
    spec.validate().map_err(|e| match e {
        NntsError::Schema { .. } => e,
        other => NntsError::schema("fit", other.to_string()),
    })?;
    Ok(spec)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> NntsError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => io_err(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes a CSV with a header row; every row must match the header width.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One angle per row, header `theta_rad`.
pub fn write_angles(path: &Path, sample: &AngleSample) -> Result<()> {
    write_csv(
        path,
        &["theta_rad"],
        sample.angles().iter().map(|t| vec![t.to_string()]),
    )
}

/// Density on a uniform grid of `[0, 2π)`, columns `theta,density`.
pub fn density_curve(model: &CircularModel, grid: usize) -> Vec<(f64, f64)> {
    (0..grid)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / grid as f64;
            (t, model.density(t))
        })
        .collect()
}

pub fn write_density_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    write_csv(
        path,
        &["theta", "density"],
        curve.iter().map(|(t, f)| vec![t.to_string(), f.to_string()]),
    )
}

/// Rejection rates, one row per generator/test/n/alpha.
pub fn write_rejection_csv(path: &Path, table: &RejectionTable) -> Result<()> {
    write_csv(
        path,
        &["generator", "test", "n", "alpha", "count", "valid", "rate", "failures"],
        table.cells.iter().map(|c| {
            vec![
                c.generator.clone(),
                c.test.clone(),
                c.n.to_string(),
                c.alpha.to_string(),
                c.count.to_string(),
                c.valid.to_string(),
                c.rate.to_string(),
                c.failures.to_string(),
            ]
        }),
    )
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}
