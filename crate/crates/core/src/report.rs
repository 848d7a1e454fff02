//! Model-selection table: general and symmetric fits for each degree, the
//! LR statistic with its chi-squared p-value, and `SK_NNTS`.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::estimation::{fit_general, fit_pair, pad_to, FitOptions, FitReport};
use crate::inference::{chisq_sf, lr_statistic, sk_nnts_of_pair};
use crate::io::write_csv;
use crate::model::{AngleSample, NntsModel, SymmetricNntsModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    fn of<M>(self, r: &FitReport<M>) -> f64 {
        match self {
            Criterion::Aic => r.aic,
            Criterion::Bic => r.bic,
        }
    }
}

/// Which columns of the table to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFamily {
    General,
    Symmetric,
    Both,
}

impl TableFamily {
    fn general(self) -> bool {
        self != TableFamily::Symmetric
    }

    fn symmetric(self) -> bool {
        self != TableFamily::General
    }
}

#[derive(Debug, Clone)]
pub struct FitRow {
    pub m: usize,
    pub general: FitReport<NntsModel>,
    /// Absent for `M = 0`.
    pub symmetric: Option<FitReport<SymmetricNntsModel>>,
    /// LR statistic and chi-squared p-value, for `M >= 2`.
    pub lr: Option<(f64, f64)>,
    pub sk_nnts: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitTable {
    pub n: usize,
    pub family: TableFamily,
    pub criterion: Criterion,
    pub rows: Vec<FitRow>,
    pub best_general: Option<usize>,
    pub best_symmetric: Option<usize>,
}

fn argmin(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Fits degrees `0..=m_max`. General fits at `M` are warm-started from the
/// padded degree `M - 1` solution.
pub fn fit_table(
    data: &AngleSample,
    m_max: usize,
    family: TableFamily,
    criterion: Criterion,
    opts: &FitOptions,
) -> Result<FitTable> {
    let mut rows: Vec<FitRow> = Vec::with_capacity(m_max + 1);
    rows.push(FitRow {
        m: 0,
        general: fit_general(data, 0, opts)?,
        symmetric: None,
        lr: None,
        sk_nnts: None,
    });
    for m in 1..=m_max {
        let warm = [pad_to(&rows[m - 1].general.model, m)];
        let pair = fit_pair(data, m, opts, &warm)?;
        let lr = if m >= 2 {
            let stat = lr_statistic(&pair.general, &pair.symmetric)?;
            Some((stat, chisq_sf(stat, (m - 1) as u32)))
        } else {
            None
        };
        let sk = (m >= 2).then(|| sk_nnts_of_pair(&pair));
        rows.push(FitRow {
            m,
            general: pair.general,
            symmetric: Some(pair.symmetric),
            lr,
            sk_nnts: sk,
        });
    }
    let best_general = if family.general() {
        argmin(rows.iter().enumerate().map(|(i, r)| (i, criterion.of(&r.general))))
    } else {
        None
    };
    let best_symmetric = if family.symmetric() {
        argmin(
            rows.iter()
                .enumerate()
                .filter_map(|(i, r)| r.symmetric.as_ref().map(|s| (i, criterion.of(s)))),
        )
    } else {
        None
    };
    Ok(FitTable {
        n: data.n(),
        family,
        criterion,
        rows,
        best_general,
        best_symmetric,
    })
}

pub const REPORT_HEADER: [&str; 16] = [
    "M",
    "loglik_general",
    "aic_general",
    "bic_general",
    "loglik_symmetric",
    "aic_symmetric",
    "bic_symmetric",
    "mu_hat",
    "lr_gs",
    "chi2_p",
    "sk_nnts",
    "n",
    "params_general",
    "params_symmetric",
    "best_general",
    "best_symmetric",
];

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl FitTable {
    /// Rows as strings in [`REPORT_HEADER`] order. Numbers use the shortest
    /// round-trip decimal form, so the AIC/BIC columns can be recomputed
    /// exactly from the log-likelihood, `n` and parameter-count columns.
    pub fn records(&self) -> Vec<Vec<String>> {
        let (g_on, s_on) = (self.family.general(), self.family.symmetric());
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let g = g_on.then_some(&r.general);
                let s = if s_on { r.symmetric.as_ref() } else { None };
                let both = g_on && s_on;
                vec![
                    r.m.to_string(),
                    opt(g.map(|g| g.loglik)),
                    opt(g.map(|g| g.aic)),
                    opt(g.map(|g| g.bic)),
                    opt(s.map(|s| s.loglik)),
                    opt(s.map(|s| s.aic)),
                    opt(s.map(|s| s.bic)),
                    opt(s.map(|s| s.model.mu())),
                    opt(r.lr.filter(|_| both).map(|l| l.0)),
                    opt(r.lr.filter(|_| both).map(|l| l.1)),
                    opt(r.sk_nnts.filter(|_| both)),
                    self.n.to_string(),
                    g.map(|g| g.n_params.to_string()).unwrap_or_default(),
                    s.map(|s| s.n_params.to_string()).unwrap_or_default(),
                    (self.best_general == Some(i)).to_string(),
                    (self.best_symmetric == Some(i)).to_string(),
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &REPORT_HEADER, self.records())
    }

    pub fn row(&self, m: usize) -> Option<&FitRow> {
        self.rows.get(m)
    }

    /// True when every reported fit met its convergence test.
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| {
            (!self.family.general() || r.general.converged)
                && (!self.family.symmetric() || r.symmetric.as_ref().is_none_or(|s| s.converged))
        })
    }
}
