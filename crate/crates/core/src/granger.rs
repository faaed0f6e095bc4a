//! Restricted conditional Granger causality: a sparse full model per target
//! chosen by forward stepwise BIC, then one reduced model per selected source.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{center_columns, pca_denoise, ReturnPanel};
use crate::error::{Error, Result};
use crate::regress::{build_design, fit_model, ols_fit, FittedModel, LaggedTerm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub max_lag: usize,
    /// Share of total variance kept by PCA denoising; 1.0 disables it.
    pub variance_share: f64,
    /// Cap on selected terms per target. `None` means `n_effective / 10`.
    pub max_terms: Option<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { max_lag: 1, variance_share: 0.90, max_terms: None }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_lag == 0 {
            return Err(Error::Config("max lag must be at least 1".into()));
        }
        if !(self.variance_share > 0.0 && self.variance_share <= 1.0) {
            return Err(Error::Config(format!("variance share {} outside (0, 1]", self.variance_share)));
        }
        Ok(())
    }
}

/// Directed weighted graph of conditional Granger causality values:
/// `cgc[(i, j)]` is the causality from series `i` to series `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityNetwork {
    pub labels: Vec<String>,
    pub cgc: DMatrix<f64>,
    pub full_models: Vec<FittedModel>,
    /// Per-target residual variance of the full model over the outcome variance.
    pub fit_ratio: Vec<f64>,
}

impl CausalityNetwork {
    /// Network from a bare CGC matrix, without fitted models.
    pub fn from_matrix(labels: Vec<String>, cgc: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if cgc.shape() != (n, n) {
            return Err(Error::Shape(format!("cgc is {:?} for {n} labels", cgc.shape())));
        }
        if cgc.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("causality values must be finite and nonnegative".into()));
        }
        if (0..n).any(|i| cgc[(i, i)] != 0.0) {
            return Err(Error::Domain("self-causality must be zero".into()));
        }
        Ok(Self { labels, cgc, full_models: Vec::new(), fit_ratio: Vec::new() })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Nonzero edges as `(source, target, cgc)`, sorted by source then target.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.cgc[(i, j)];
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }
}

fn candidate_terms(m: usize, max_lag: usize) -> impl Iterator<Item = LaggedTerm> {
    (0..m).flat_map(move |s| (1..=max_lag).map(move |l| LaggedTerm::new(s, l)))
}

/// Default term cap: one term per ten outcome rows.
pub fn default_max_terms(n_rows: usize, max_lag: usize) -> usize {
    n_rows.saturating_sub(max_lag) / 10
}

/// Greedy forward selection from the empty model. Each step adds the
/// candidate with the lowest BIC if it strictly improves on the current BIC;
/// ties go to the lowest series index, then the lowest lag.
pub fn select_full_model(values: &DMatrix<f64>, target: usize, max_lag: usize, max_terms: usize) -> Result<FittedModel> {
    let (t, m) = values.shape();
    if t <= max_lag + 1 {
        return Err(Error::InsufficientData(format!("{t} rows cannot support max lag {max_lag}")));
    }
    let mut current = fit_model(values, target, &[], max_lag)?;
    let (all_x, y) = build_design(values, target, &candidate_terms(m, max_lag).collect::<Vec<_>>(), max_lag)?;
    let column_of = |term: LaggedTerm| term.series * max_lag + (term.lag - 1);

    while current.terms.len() < max_terms {
        let mut best: Option<(LaggedTerm, f64)> = None;
        let mut cols: Vec<usize> = current.terms.iter().map(|x| column_of(*x)).collect();
        cols.push(0);
        for cand in candidate_terms(m, max_lag) {
            if current.terms.contains(&cand) {
                continue;
            }
            *cols.last_mut().unwrap() = column_of(cand);
            let x = all_x.select_columns(cols.iter());
            let fit = ols_fit(&x, &y)?;
            let score = crate::regress::bic(fit.rss, y.len(), cols.len());
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((cand, score));
            }
        }
        match best {
            Some((term, score)) if score < current.bic => {
                let mut terms = current.terms.clone();
                terms.push(term);
                current = fit_model(values, target, &terms, max_lag)?;
            }
            _ => break,
        }
    }
    Ok(current)
}

/// CGC of every source on `full.target`: `ln(RSS_reduced / RSS_full)` where
/// the reduced model drops all of that source's terms. Sources absent from the
/// full model, and the target itself, get zero.
pub fn cgc_for_target(values: &DMatrix<f64>, full: &FittedModel, max_lag: usize) -> Result<Vec<f64>> {
    let m = values.ncols();
    let target = full.target;
    let mut out = vec![0.0; m];
    let full_rss = full.rss();
    let mut sources: Vec<usize> = full.terms.iter().map(|x| x.series).filter(|&s| s != target).collect();
    sources.sort_unstable();
    sources.dedup();
    for source in sources {
        let kept: Vec<LaggedTerm> = full.terms.iter().copied().filter(|x| x.series != source).collect();
        let (x, y) = build_design(values, target, &kept, max_lag)?;
        let reduced_rss = ols_fit(&x, &y)?.rss;
        let floor = crate::regress::RSS_FLOOR * y.len() as f64;
        let value = (reduced_rss.max(floor) / full_rss.max(floor)).ln();
        out[source] = value.max(0.0);
    }
    Ok(out)
}

/// Denoises, centers and runs selection plus CGC for every target.
pub fn estimate_network(panel: &ReturnPanel, config: &NetworkConfig) -> Result<CausalityNetwork> {
    config.validate()?;
    let m = panel.n_series();
    let t = panel.n_rows();
    if m < 2 {
        return Err(Error::InsufficientData("need at least two series".into()));
    }
    if t <= config.max_lag + 1 {
        return Err(Error::InsufficientData(format!("{t} rows cannot support max lag {}", config.max_lag)));
    }
    let (denoised, _) = pca_denoise(panel, config.variance_share)?;
    let mut values = denoised.values;
    center_columns(&mut values);
    let max_terms = config.max_terms.unwrap_or_else(|| default_max_terms(t, config.max_lag));

    let per_target: Vec<(FittedModel, Vec<f64>, f64)> = (0..m)
        .into_par_iter()
        .map(|target| {
            let full = select_full_model(&values, target, config.max_lag, max_terms)?;
            let cgc = cgc_for_target(&values, &full, config.max_lag)?;
            let (_, y) = build_design(&values, target, &[], config.max_lag)?;
            let total = y.norm_squared();
            let ratio = if total > 0.0 { full.rss() / total } else { 1.0 };
            Ok((full, cgc, ratio))
        })
        .collect::<Result<_>>()?;

    let mut cgc = DMatrix::zeros(m, m);
    let mut full_models = Vec::with_capacity(m);
    let mut fit_ratio = Vec::with_capacity(m);
    for (target, (model, column, ratio)) in per_target.into_iter().enumerate() {
        for (source, v) in column.into_iter().enumerate() {
            cgc[(source, target)] = v;
        }
        full_models.push(model);
        fit_ratio.push(ratio);
    }
    Ok(CausalityNetwork { labels: panel.labels.clone(), cgc, full_models, fit_ratio })
}
