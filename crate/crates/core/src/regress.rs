//! Least squares on lagged designs and BIC scoring.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on RSS/n so perfect fits still give a finite BIC.
pub const RSS_FLOOR: f64 = 1e-12;

/// A regressor: `series` observed `lag` steps before the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaggedTerm {
    pub series: usize,
    pub lag: usize,
}

impl LaggedTerm {
    pub fn new(series: usize, lag: usize) -> Self {
        Self { series, lag }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub target: usize,
    pub terms: Vec<LaggedTerm>,
    pub coefficients: Vec<f64>,
    /// MLE residual variance RSS / n.
    pub residual_variance: f64,
    pub n_effective: usize,
    pub bic: f64,
}

impl FittedModel {
    pub fn rss(&self) -> f64 {
        self.residual_variance * self.n_effective as f64
    }
}

/// Builds the regression for `target` with all outcome rows aligned on the
/// global `max_lag`: row `r` has outcome `values[r + max_lag][target]`.
pub fn build_design(
    values: &DMatrix<f64>,
    target: usize,
    terms: &[LaggedTerm],
    max_lag: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (t, m) = values.shape();
    if target >= m {
        return Err(Error::Shape(format!("target {target} out of range for {m} series")));
    }
    if let Some(bad) = terms.iter().find(|x| x.series >= m || x.lag == 0 || x.lag > max_lag) {
        return Err(Error::Shape(format!(
            "term (series {}, lag {}) invalid for {m} series and max lag {max_lag}",
            bad.series, bad.lag
        )));
    }
    if t <= max_lag {
        return Err(Error::InsufficientData(format!("{t} rows cannot support max lag {max_lag}")));
    }
    let n = t - max_lag;
    let x = DMatrix::from_fn(n, terms.len(), |r, j| values[(r + max_lag - terms[j].lag, terms[j].series)]);
    let y = DVector::from_fn(n, |r, _| values[(r + max_lag, target)]);
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub rss: f64,
}

/// Minimum-norm least squares via SVD; rank deficiency is resolved by
/// dropping singular values below a relative cutoff.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n != y.len() {
        return Err(Error::Shape(format!("design has {n} rows but outcome has {}", y.len())));
    }
    if n == 0 {
        return Err(Error::InsufficientData("no regression rows".into()));
    }
    if k == 0 {
        return Ok(OlsFit { coefficients: DVector::zeros(0), rss: y.norm_squared() });
    }
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let cutoff = max_sv * n.max(k) as f64 * f64::EPSILON;
    let coefficients =
        if max_sv > 0.0 { svd.solve(y, cutoff).map_err(|e| Error::Shape(e.to_string()))? } else { DVector::zeros(k) };
    let rss = (y - x * &coefficients).norm_squared();
    Ok(OlsFit { coefficients, rss })
}

/// Gaussian BIC `n ln(RSS/n) + k ln n`.
pub fn bic(rss: f64, n: usize, k: usize) -> f64 {
    let n_f = n as f64;
    n_f * (rss.max(RSS_FLOOR * n_f) / n_f).ln() + k as f64 * n_f.ln()
}

/// Fits `target` on `terms` and packages the result.
pub fn fit_model(values: &DMatrix<f64>, target: usize, terms: &[LaggedTerm], max_lag: usize) -> Result<FittedModel> {
    let (x, y) = build_design(values, target, terms, max_lag)?;
    let fit = ols_fit(&x, &y)?;
    let n = y.len();
    Ok(FittedModel {
        target,
        terms: terms.to_vec(),
        coefficients: fit.coefficients.iter().copied().collect(),
        residual_variance: fit.rss / n as f64,
        n_effective: n,
        bic: bic(fit.rss, n, terms.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn panel() -> DMatrix<f64> {
        // 5x2, column 0 = 1..5, column 1 = 10..50
        DMatrix::from_fn(5, 2, |r, c| (r + 1) as f64 * if c == 0 { 1.0 } else { 10.0 })
    }

    #[test]
    fn design_single_lag() {
        let (x, y) = build_design(&panel(), 1, &[LaggedTerm::new(0, 1)], 1).unwrap();
        assert_eq!(x.shape(), (4, 1));
        assert_eq!(x.column(0).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y.as_slice(), &[20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn design_empty_terms() {
        let (x, y) = build_design(&panel(), 0, &[], 1).unwrap();
        assert_eq!(x.shape(), (4, 0));
        assert_eq!(y.len(), 4);
    }

    #[test]
    fn design_two_lags_hand_built() {
        // values rows: t0=(1,2) t1=(3,4) t2=(5,6); L=2 leaves one outcome row t2.
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let terms = [LaggedTerm::new(0, 1), LaggedTerm::new(1, 2)];
        let (x, y) = build_design(&v, 0, &terms, 2).unwrap();
        assert_eq!(x.shape(), (1, 2));
        assert_eq!(x[(0, 0)], 3.0);
        assert_eq!(x[(0, 1)], 2.0);
        assert_eq!(y[0], 5.0);
    }

    #[test]
    fn design_errors() {
        assert!(matches!(build_design(&panel(), 0, &[], 5), Err(Error::InsufficientData(_))));
        assert!(matches!(build_design(&panel(), 0, &[LaggedTerm::new(0, 2)], 1), Err(Error::Shape(_))));
        assert!(matches!(build_design(&panel(), 0, &[LaggedTerm::new(3, 1)], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn exact_fit() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 4.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn null_model_rss() {
        let y = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let fit = ols_fit(&DMatrix::zeros(3, 0), &y).unwrap();
        assert_eq!(fit.rss, 9.0);
    }

    #[test]
    fn duplicated_column_matches_single() {
        let col = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5, 3.0]);
        let y = DVector::from_vec(vec![2.1, 3.9, -2.2, 1.0, 6.1]);
        let single = DMatrix::from_columns(std::slice::from_ref(&col));
        let dup = DMatrix::from_columns(&[col.clone(), col.clone()]);
        // oracle: one-column least squares in closed form
        let beta = col.dot(&y) / col.dot(&col);
        let oracle_rss = (&y - &col * beta).norm_squared();
        let a = ols_fit(&single, &y).unwrap();
        let b = ols_fit(&dup, &y).unwrap();
        assert!((a.rss - oracle_rss).abs() < 1e-12);
        assert!((b.rss - oracle_rss).abs() < 1e-10);
        // minimum norm splits the weight evenly
        assert!((b.coefficients[0] - beta / 2.0).abs() < 1e-10);
        assert!((b.coefficients[1] - beta / 2.0).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let r = ols_fit(&DMatrix::zeros(3, 1), &DVector::zeros(2));
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn bic_values() {
        assert_eq!(bic(50.0, 50, 0), 0.0);
        assert!((bic(100.0, 100, 2) - 2.0 * 100f64.ln()).abs() < 1e-12);
        assert!((bic(100.0, 100, 2) - 9.2103).abs() < 1e-4);
        let floored = bic(0.0, 100, 1);
        assert!(floored.is_finite());
        assert!((floored - (100.0 * RSS_FLOOR.ln() + 100f64.ln())).abs() < 1e-9);
    }

    fn matrix_strategy(n: usize, k: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n * k).prop_map(move |v| DMatrix::from_vec(n, k, v))
    }

    proptest! {
        #[test]
        fn nesting_never_increases_rss(x in matrix_strategy(20, 4), y in proptest::collection::vec(-3.0f64..3.0, 20)) {
            let y = DVector::from_vec(y);
            let full = ols_fit(&x, &y).unwrap().rss;
            let sub = ols_fit(&x.columns(0, 3).into_owned(), &y).unwrap().rss;
            prop_assert!(sub >= full - 1e-10);
        }

        #[test]
        fn orthonormal_columns_give_projection(x in matrix_strategy(12, 3), y in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let q = x.qr().q();
            prop_assume!(q.ncols() == 3);
            let y = DVector::from_vec(y);
            let fit = ols_fit(&q, &y).unwrap();
            let expected = q.transpose() * &y;
            prop_assert!((fit.coefficients - expected).amax() < 1e-10);
        }

        #[test]
        fn bic_increases_in_k(rss in 0.0f64..100.0, n in 2usize..500, k in 0usize..20) {
            prop_assert!(bic(rss, n, k + 1) > bic(rss, n, k));
        }

        #[test]
        fn alignment_shared_across_term_sets(v in matrix_strategy(15, 3), lag_a in 1usize..=3, lag_b in 1usize..=3) {
            let (_, ya) = build_design(&v, 1, &[LaggedTerm::new(0, lag_a)], 3).unwrap();
            let (_, yb) = build_design(&v, 1, &[LaggedTerm::new(2, lag_b), LaggedTerm::new(1, 1)], 3).unwrap();
            prop_assert_eq!(ya, yb);
        }
    }
}
