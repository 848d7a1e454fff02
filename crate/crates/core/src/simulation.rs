//! Monte Carlo harness for size and power tables and for checking the
//! calibration of asymptotic LR p-values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NntsError, Result};
use crate::estimation::{fit_pair, FitOptions, FitPair};
use crate::gof::{ks_test, KsReport};
use crate::inference::{
    b2_test_bootstrap, chisq_sf, lr_bootstrap_from_pair, lr_statistic, wald_test, warn_small_sample, TestKind,
};
use crate::model::SymmetricNntsModel;
use crate::parallel::map_indexed;
use crate::sampling::{sample_symmetric, CircularModel, RngStream};

/// Datasets may fail up to this fraction before the run is aborted.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub model: CircularModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kind: TestKind,
    /// Degree for the LR and Wald tests; ignored by b₂.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Bootstrap size for the bootstrap tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl TestConfig {
    pub fn label(&self) -> String {
        let mut s = self.kind.as_str().to_string();
        if let Some(m) = self.m {
            s.push_str(&format!("_m{m}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub generators: Vec<Generator>,
    pub sample_sizes: Vec<usize>,
    pub n_datasets: usize,
    pub tests: Vec<TestConfig>,
    pub alphas: Vec<f64>,
    pub master_seed: u64,
    #[serde(skip)]
    pub opts: FitOptions,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(NntsError::schema(field, msg));
        if self.generators.is_empty() {
            return bad("generators", "at least one generator is required");
        }
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes", "at least one sample size is required");
        }
        if let Some(i) = self.sample_sizes.iter().position(|&n| n < 2) {
            return bad(&format!("sample_sizes[{i}]"), "sample sizes must be >= 2");
        }
        if self.n_datasets == 0 {
            return bad("n_datasets", "must be >= 1");
        }
        if self.tests.is_empty() {
            return bad("tests", "at least one test is required");
        }
        for (i, t) in self.tests.iter().enumerate() {
            let needs_m = matches!(t.kind, TestKind::LrAsymptotic | TestKind::LrBootstrap | TestKind::Wald);
            if needs_m && t.m.is_none_or(|m| m < 2) {
                return bad(&format!("tests[{i}].m"), "LR and Wald tests need m >= 2");
            }
            let needs_k = matches!(t.kind, TestKind::LrBootstrap | TestKind::B2Bootstrap);
            if needs_k && t.k.is_none_or(|k| k < crate::inference::MIN_REPLICATES) {
                return bad(&format!("tests[{i}].k"), "bootstrap tests need k >= 99");
            }
        }
        if self.alphas.is_empty() {
            return bad("alphas", "at least one level is required");
        }
        if let Some(i) = self.alphas.iter().position(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad(&format!("alphas[{i}]"), "levels must lie in (0, 1)");
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, g) in self.generators.iter().enumerate() {
            if !ids.insert(g.id.as_str()) {
                return bad(&format!("generators[{i}].id"), "duplicate generator id");
            }
        }
        self.opts.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionCell {
    pub generator: String,
    pub test: String,
    pub n: usize,
    pub alpha: f64,
    pub count: usize,
    pub rate: f64,
    /// Datasets that produced a p-value.
    pub valid: usize,
    pub failures: usize,
}

/// Every p-value of one (generator, test, n) cell, `None` where the dataset failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellPValues {
    pub generator: String,
    pub test: String,
    pub n: usize,
    pub p_values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionTable {
    pub master_seed: u64,
    pub n_datasets: usize,
    pub generators: Vec<Generator>,
    pub cells: Vec<RejectionCell>,
    pub p_values: Vec<CellPValues>,
    pub failures: usize,
}

impl RejectionTable {
    pub fn cell(&self, generator: &str, test: &str, n: usize, alpha: f64) -> Option<&RejectionCell> {
        self.cells
            .iter()
            .find(|c| c.generator == generator && c.test == test && c.n == n && c.alpha == alpha)
    }
}

/// Stream for dataset `d` of generator `g` at size index `s`.
fn dataset_stream(master: u64, g: usize, s: usize, d: usize) -> RngStream {
    RngStream::new(master, ((g as u64) << 48) | ((s as u64) << 32) | d as u64)
}

fn run_tests(
    data: &crate::model::AngleSample,
    tests: &[TestConfig],
    stream: RngStream,
    opts: &FitOptions,
) -> Vec<Result<f64>> {
    let mut pairs: BTreeMap<usize, Result<(FitPair, f64)>> = BTreeMap::new();
    let mut pair_for = |m: usize| -> Result<(FitPair, f64)> {
        let entry = pairs.entry(m).or_insert_with(|| {
            let pair = fit_pair(data, m, opts, &[])?;
            let lr = lr_statistic(&pair.general, &pair.symmetric)?;
            Ok((pair, lr))
        });
        match entry {
            Ok(v) => Ok(v.clone()),
            Err(e) => Err(NntsError::domain(e.to_string())),
        }
    };
    tests
        .iter()
        .enumerate()
        .map(|(t, cfg)| {
            let seed = stream.child(1 + t as u64).stream_id;
            match cfg.kind {
                TestKind::LrAsymptotic => {
                    let m = cfg.m.unwrap_or(2);
                    let (_, lr) = pair_for(m)?;
                    Ok(chisq_sf(lr, (m - 1) as u32))
                }
                TestKind::Wald => {
                    let (pair, _) = pair_for(cfg.m.unwrap_or(2))?;
                    Ok(wald_test(&pair)?.p_value)
                }
                TestKind::LrBootstrap => {
                    let m = cfg.m.unwrap_or(2);
                    let (pair, lr) = pair_for(m)?;
                    let k = cfg.k.unwrap_or(999);
                    Ok(lr_bootstrap_from_pair(&pair, lr, data.n(), k, seed, opts).p_value)
                }
                TestKind::B2Bootstrap => Ok(b2_test_bootstrap(data, cfg.k.unwrap_or(999), seed, Some(1))?.p_value),
            }
        })
        .collect()
}

/// Runs every (generator, size, dataset) job and tabulates rejection rates.
/// Jobs run in parallel; results depend only on the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RejectionTable> {
    spec.validate()?;
    let (g_count, s_count, d_count) = (spec.generators.len(), spec.sample_sizes.len(), spec.n_datasets);
    let inner = FitOptions {
        threads: Some(1),
        ..spec.opts.clone()
    };
    let jobs = g_count * s_count * d_count;
    let outcomes: Vec<Vec<Option<f64>>> = map_indexed(spec.opts.threads, jobs, |j| {
        let (g, rest) = (j / (s_count * d_count), j % (s_count * d_count));
        let (s, d) = (rest / d_count, rest % d_count);
        let stream = dataset_stream(spec.master_seed, g, s, d);
        let n = spec.sample_sizes[s];
        match spec.generators[g].model.sample(n, &stream.child(0)) {
            Ok(data) => run_tests(&data, &spec.tests, stream, &inner)
                .into_iter()
                .enumerate()
                .map(|(t, r)| match r {
                    Ok(p) => Some(p),
                    Err(e) => {
                        log::debug!("generator {} n={n} dataset {d} test {t}: {e}", spec.generators[g].id);
                        None
                    }
                })
                .collect(),
            Err(e) => {
                log::debug!(
                    "generator {} n={n} dataset {d}: sampling failed: {e}",
                    spec.generators[g].id
                );
                vec![None; spec.tests.len()]
            }
        }
    });
    let failures: usize = outcomes.iter().flatten().filter(|p| p.is_none()).count();
    let total = jobs * spec.tests.len();
    if failures as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(NntsError::ExperimentAborted {
            failed: failures,
            total,
        });
    }
    if failures > 0 {
        log::warn!("{failures} of {total} test runs failed and were excluded");
    }
    let mut cells = Vec::new();
    let mut p_values = Vec::new();
    for (g, generator) in spec.generators.iter().enumerate() {
        for (t, test) in spec.tests.iter().enumerate() {
            for (s, &n) in spec.sample_sizes.iter().enumerate() {
                let base = (g * s_count + s) * d_count;
                let ps: Vec<Option<f64>> = (0..d_count).map(|d| outcomes[base + d][t]).collect();
                let valid: Vec<f64> = ps.iter().flatten().copied().collect();
                for &alpha in &spec.alphas {
                    let count = valid.iter().filter(|&&p| p <= alpha).count();
                    cells.push(RejectionCell {
                        generator: generator.id.clone(),
                        test: test.label(),
                        n,
                        alpha,
                        count,
                        rate: if valid.is_empty() {
                            0.0
                        } else {
                            count as f64 / valid.len() as f64
                        },
                        valid: valid.len(),
                        failures: d_count - valid.len(),
                    });
                }
                p_values.push(CellPValues {
                    generator: generator.id.clone(),
                    test: test.label(),
                    n,
                    p_values: ps,
                });
            }
        }
    }
    Ok(RejectionTable {
        master_seed: spec.master_seed,
        n_datasets: d_count,
        generators: spec.generators.clone(),
        cells,
        p_values,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub ks: KsReport,
    pub p_values: Vec<f64>,
    pub failures: usize,
    /// Set when `n < 25 M`, where the chi-squared reference is not trusted.
    pub small_sample: bool,
}

/// Simulates `n_datasets` samples from a symmetric generator, computes the
/// asymptotic LR p-value of each at degree `m`, and tests them for uniformity.
pub fn pvalue_uniformity(
    generator: &SymmetricNntsModel,
    n: usize,
    n_datasets: usize,
    m: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<UniformityReport> {
    if m < 2 {
        return Err(NntsError::domain("uniformity check needs M >= 2"));
    }
    if n_datasets == 0 {
        return Err(NntsError::domain("n_datasets must be >= 1"));
    }
    let small_sample = warn_small_sample(n, m);
    let inner = FitOptions {
        threads: Some(1),
        ..opts.clone()
    };
    let ps: Vec<Option<f64>> = map_indexed(opts.threads, n_datasets, |d| {
        let data = sample_symmetric(generator, n, &RngStream::new(seed, d as u64)).ok()?;
        let pair = fit_pair(&data, m, &inner, &[]).ok()?;
        let lr = lr_statistic(&pair.general, &pair.symmetric).ok()?;
        Some(chisq_sf(lr, (m - 1) as u32))
    });
    let p_values: Vec<f64> = ps.iter().flatten().copied().collect();
    let failures = n_datasets - p_values.len();
    if failures as f64 > MAX_FAILURE_RATE * n_datasets as f64 {
        return Err(NntsError::ExperimentAborted {
            failed: failures,
            total: n_datasets,
        });
    }
    let ks = ks_test(&p_values, |p| p.clamp(0.0, 1.0));
    Ok(UniformityReport {
        ks,
        p_values,
        failures,
        small_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NntsModel;

    fn uniform_spec() -> ExperimentSpec {
        ExperimentSpec {
            generators: vec![Generator {
                id: "uniform".into(),
                model: CircularModel::General(NntsModel::uniform()),
            }],
            sample_sizes: vec![60],
            n_datasets: 1,
            tests: vec![TestConfig {
                kind: TestKind::LrAsymptotic,
                m: Some(2),
                k: None,
            }],
            alphas: vec![0.05],
            master_seed: 9,
            opts: FitOptions::default(),
        }
    }

    #[test]
    fn single_dataset_gives_one_p_value_per_cell() {
        let t = run_experiment(&uniform_spec()).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.p_values[0].p_values.len(), 1);
        let c = &t.cells[0];
        assert!(c.rate == 0.0 || c.rate == 1.0);
    }

    #[test]
    fn empty_generators_is_a_schema_error() {
        let mut s = uniform_spec();
        s.generators.clear();
        assert!(matches!(run_experiment(&s), Err(NntsError::Schema { .. })));
    }

    #[test]
    fn bad_alpha_names_its_field() {
        let mut s = uniform_spec();
        s.alphas = vec![0.05, 1.5];
        match s.validate() {
            Err(NntsError::Schema { field, .. }) => assert_eq!(field, "alphas[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_sample_is_flagged() {
        let g = crate::sampling::random_symmetric_model(5, &mut RngStream::new(2, 0).rng());
        let r = pvalue_uniformity(&g, 20, 3, 5, 1, &FitOptions::default()).unwrap();
        assert!(r.small_sample);
    }
}
