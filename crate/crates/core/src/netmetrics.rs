//! Network-level statistics and the shuffled-subset null model.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ReturnPanel, YearMonth};
use crate::error::{Error, Result};
use crate::granger::{estimate_network, CausalityNetwork, NetworkConfig};
use crate::hhkd::FlowDecomposition;

/// Fraction of nodes with at least one nonzero incoming or outgoing edge.
pub fn connectivity(network: &CausalityNetwork) -> f64 {
    let n = network.n_nodes();
    if n == 0 {
        return 0.0;
    }
    let coupled = (0..n).filter(|&i| (0..n).any(|j| network.cgc[(i, j)] > 0.0 || network.cgc[(j, i)] > 0.0)).count();
    coupled as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSums {
    pub influx: Vec<f64>,
    pub outflux: Vec<f64>,
}

/// Per-node CGC sums. Entries are first snapped to a dyadic grid fine enough
/// that the grand total fits in the 53-bit mantissa, so every partial sum is
/// exact and `Σ influx == Σ outflux` holds bitwise. The snap moves each entry
/// by at most half an ulp of the total.
pub fn flux_sums(network: &CausalityNetwork) -> FluxSums {
    let cgc = &network.cgc;
    let bound: f64 = cgc.iter().map(|v| v.abs()).sum::<f64>() * (1.0 + 1e-9);
    if !bound.is_finite() || bound <= 0.0 {
        return FluxSums { influx: vec![0.0; cgc.ncols()], outflux: vec![0.0; cgc.nrows()] };
    }
    let quantum = 2f64.powi(bound.log2().ceil() as i32 - 53);
    let snapped = cgc.map(|v| (v / quantum).round() * quantum);
    FluxSums { influx: snapped.column_iter().map(|c| c.sum()).collect(), outflux: snapped.row_iter().map(|r| r.sum()).collect() }
}

/// Per node, the number of networks in which it has an incoming edge and in
/// which it has an outgoing edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageRates {
    pub in_windows: Vec<usize>,
    pub out_windows: Vec<usize>,
}

pub fn linkage_rates<'a>(networks: impl IntoIterator<Item = &'a CausalityNetwork>) -> Result<LinkageRates> {
    let mut rates: Option<LinkageRates> = None;
    for net in networks {
        let n = net.n_nodes();
        let r = rates.get_or_insert_with(|| LinkageRates { in_windows: vec![0; n], out_windows: vec![0; n] });
        if r.in_windows.len() != n {
            return Err(Error::Shape("networks have different node counts".into()));
        }
        for i in 0..n {
            if net.cgc.row(i).iter().any(|&v| v > 0.0) {
                r.out_windows[i] += 1;
            }
            if net.cgc.column(i).iter().any(|&v| v > 0.0) {
                r.in_windows[i] += 1;
            }
        }
    }
    rates.ok_or_else(|| Error::InsufficientData("no networks given".into()))
}

/// Gaussian kernel density estimate with Scott's bandwidth `σ̂ n^(-1/5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData("kernel density needs at least two values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if sd.is_nan() || sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::Domain("degenerate distribution: values have no spread".into()));
        }
        Ok(Self { samples: values.to_vec(), bandwidth: sd * n.powf(-0.2) })
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self.samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>()
    }

    pub fn evaluate(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.density(x)).collect()
    }
}

pub fn kde(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    Ok(Kde::fit(values)?.evaluate(grid))
}

/// Divides by the largest absolute value so quantities of different units
/// share the `[0, 1]` scale.
pub fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        values.to_vec()
    }
}

/// Density of `values / max|values|` on `grid`.
pub fn kde_normalized(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    kde(&normalize_by_max(values), grid)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullConfig {
    pub draws: usize,
    pub subset_length: usize,
    /// Lower and upper quantiles of the confidence interval.
    pub quantiles: (f64, f64),
}

impl Default for NullConfig {
    fn default() -> Self {
        Self { draws: 50, subset_length: 250, quantiles: (0.025, 0.975) }
    }
}

impl NullConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.quantiles;
        if self.draws == 0 || self.subset_length < 3 {
            return Err(Error::Config("null model needs at least one draw of at least three rows".into()));
        }
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("quantiles ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEnsemble {
    pub seed: u64,
    pub draws: usize,
    pub subset_length: usize,
    pub connectivities: Vec<f64>,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl NullEnsemble {
    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Seed of the `stream`-th independent RNG derived from `seed` (SplitMix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Connectivity of networks estimated on random row subsets placed in random
/// order, which destroys any temporal causal structure.
pub fn null_model(panel: &ReturnPanel, config: &NullConfig, network: &NetworkConfig, seed: u64) -> Result<NullEnsemble> {
    config.validate()?;
    if panel.n_rows() < config.subset_length {
        return Err(Error::InsufficientData(format!(
            "null model needs {} rows but the panel has {}",
            config.subset_length,
            panel.n_rows()
        )));
    }
    let connectivities: Vec<f64> = (0..config.draws)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, draw as u64));
            let mut rows = index::sample(&mut rng, panel.n_rows(), config.subset_length).into_vec();
            rows.shuffle(&mut rng);
            let mut sub = panel.select_rows(&rows);
            // dates are placeholders once the order is scrambled
            sub.dates = panel.dates[..config.subset_length].to_vec();
            estimate_network(&sub, network).map(|net| connectivity(&net))
        })
        .collect::<Result<_>>()?;
    let mut sorted = connectivities.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(NullEnsemble {
        seed,
        draws: config.draws,
        subset_length: config.subset_length,
        median: quantile(&sorted, 0.5),
        ci_low: quantile(&sorted, config.quantiles.0),
        ci_high: quantile(&sorted, config.quantiles.1),
        connectivities,
    })
}

/// Full analysis of one window.
#[derive(Debug, Clone)]
pub struct WindowReport {
    pub label: Option<YearMonth>,
    pub network: CausalityNetwork,
    pub decomposition: FlowDecomposition,
    pub connectivity: f64,
    pub flux: FluxSums,
    pub dropped_rows: usize,
}

impl WindowReport {
    pub fn new(
        label: Option<YearMonth>,
        network: CausalityNetwork,
        decomposition: FlowDecomposition,
        dropped_rows: usize,
    ) -> Self {
        Self { label, connectivity: connectivity(&network), flux: flux_sums(&network), network, decomposition, dropped_rows }
    }

    pub fn is_complete(&self) -> bool {
        self.connectivity >= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn net(cgc: DMatrix<f64>) -> CausalityNetwork {
        let labels = (0..cgc.nrows()).map(|i| format!("N{i}")).collect();
        CausalityNetwork::from_matrix(labels, cgc).unwrap()
    }

    fn complete(n: usize) -> CausalityNetwork {
        net(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.1 }))
    }

    #[test]
    fn connectivity_cases() {
        assert_eq!(connectivity(&net(DMatrix::zeros(4, 4))), 0.0);
        assert_eq!(connectivity(&complete(5)), 1.0);
        let mut c = DMatrix::zeros(49, 49);
        for i in 0..47 {
            c[(i, i + 1)] = 0.2;
        }
        let k = connectivity(&net(c));
        assert!((k - 48.0 / 49.0).abs() < 1e-15);
        assert!((k - 0.98).abs() < 0.01);
    }

    #[test]
    fn single_edge_flux() {
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = 0.3;
        let f = flux_sums(&net(c));
        assert_eq!(f.outflux, vec![0.3, 0.0]);
        assert_eq!(f.influx, vec![0.0, 0.3]);
    }

    proptest::proptest! {
        #[test]
        fn flux_totals_agree_exactly(entries in proptest::collection::vec(0.0f64..30.0, 36), mask in proptest::collection::vec(proptest::bool::ANY, 36)) {
            let c = DMatrix::from_fn(6, 6, |i, j| if i != j && mask[i * 6 + j] { entries[i * 6 + j] } else { 0.0 });
            let f = flux_sums(&net(c.clone()));
            proptest::prop_assert_eq!(f.influx.iter().sum::<f64>(), f.outflux.iter().sum::<f64>());
            let total: f64 = c.iter().sum();
            proptest::prop_assert!((f.influx.iter().sum::<f64>() - total).abs() <= 1e-12 * total.max(1.0));
        }
    }

    #[test]
    fn linkage_counts() {
        let r = linkage_rates([&complete(3)]).unwrap();
        assert_eq!(r.in_windows, vec![1, 1, 1]);
        assert_eq!(r.out_windows, vec![1, 1, 1]);

        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 0.5;
        let mut b = DMatrix::zeros(3, 3);
        b[(2, 0)] = 0.5;
        let (a, b) = (net(a), net(b));
        let r = linkage_rates([&a, &b]).unwrap();
        assert_eq!(r.out_windows, vec![1, 0, 1]);
        assert_eq!(r.in_windows, vec![1, 1, 0]);
        assert!(linkage_rates(std::iter::empty()).is_err());
    }

    #[test]
    fn kde_degenerate() {
        assert!(matches!(Kde::fit(&[0.7, 0.7, 0.7]), Err(Error::Domain(_))));
        assert!(Kde::fit(&[1.0]).is_err());
    }

    #[test]
    fn kde_standard_normal_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = kde(&xs, &[0.0]).unwrap()[0];
        assert!((0.35..=0.45).contains(&d), "{d}");
    }

    #[test]
    fn kde_integrates_to_one() {
        let xs = [0.1, 0.4, 0.45, 0.9, 1.3, 2.0];
        let k = Kde::fit(&xs).unwrap();
        let lo = 0.1 - 5.0 * k.bandwidth;
        let hi = 2.0 + 5.0 * k.bandwidth;
        let n = 4001;
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let dens = k.evaluate(&grid);
        assert!(dens.iter().all(|&d| d >= 0.0));
        let dx = (hi - lo) / (n - 1) as f64;
        let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
        assert!((integral - 1.0).abs() < 1e-2, "{integral}");
    }

    #[test]
    fn normalized_kde_uses_unit_scale() {
        let v = normalize_by_max(&[2.0, 4.0, 8.0]);
        assert_eq!(v, vec![0.25, 0.5, 1.0]);
        let a = kde_normalized(&[2.0, 4.0, 8.0], &[0.5]).unwrap();
        let b = kde(&[0.25, 0.5, 1.0], &[0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantiles() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.0);
        assert_eq!(quantile(&s, 0.0), 0.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert!((quantile(&s, 0.375) - 1.5).abs() < 1e-15);
    }

    fn noise_panel(t: usize, m: usize, seed: u64) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        ReturnPanel::new(
            start.iter_days().take(t).collect(),
            (0..m).map(|i| format!("S{i}")).collect(),
            DMatrix::from_fn(t, m, |_, _| StandardNormal.sample(&mut rng)),
        )
        .unwrap()
    }

    #[test]
    fn null_model_single_draw_and_reproducible() {
        let p = noise_panel(400, 6, 3);
        let cfg = NullConfig { draws: 1, subset_length: 200, ..Default::default() };
        let a = null_model(&p, &cfg, &NetworkConfig::default(), 5).unwrap();
        assert_eq!(a.ci_low, a.ci_high);
        assert_eq!(a.ci_low, a.connectivities[0]);
        let cfg = NullConfig { draws: 8, subset_length: 200, ..Default::default() };
        let b = null_model(&p, &cfg, &NetworkConfig::default(), 5).unwrap();
        let c = null_model(&p, &cfg, &NetworkConfig::default(), 5).unwrap();
        assert_eq!(b, c);
        assert!(b.ci_low <= b.median && b.median <= b.ci_high);
        assert_eq!(b.connectivities.len(), 8);
    }

    #[test]
    fn null_model_needs_rows() {
        let p = noise_panel(100, 3, 1);
        let cfg = NullConfig { subset_length: 250, ..Default::default() };
        assert!(matches!(null_model(&p, &cfg, &NetworkConfig::default(), 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 100);
    }
}
