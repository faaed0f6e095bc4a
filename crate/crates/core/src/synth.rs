//! Synthetic networked VAR processes with known causal structure, and scoring
//! of how well the estimated hierarchy recovers it.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ReturnPanel;
use crate::error::{Error, Result};
use crate::granger::{estimate_network, NetworkConfig};
use crate::hhkd::{decompose, from_bidirectional, FlowDecomposition};
use crate::netmetrics::{derive_seed, quantile};

/// Steps simulated and discarded before recording.
pub const BURN_IN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// One root, eight children, forty grandchildren.
    Hierarchy,
    /// Directed ring: node `i` drives node `i + 1`.
    Ring,
}

/// Root -> 8 second-layer nodes -> 5 leaves each (49 nodes). Leaves 9..13
/// hang off node 1, 14..18 off node 2, and so on.
pub fn hierarchy_topology() -> Vec<Option<usize>> {
    let mut parents = vec![None];
    parents.extend((1..=8).map(|_| Some(0)));
    parents.extend((0..40).map(|k| Some(1 + k / 5)));
    parents
}

/// The nodes in the top two layers of `hierarchy_topology`.
pub fn hierarchy_privileged() -> Vec<usize> {
    (0..9).collect()
}

pub fn ring_topology(n: usize) -> Vec<Option<usize>> {
    (0..n).map(|i| Some((i + n - 1) % n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub preset: Preset,
    pub parents: Vec<Option<usize>>,
    pub t_len: usize,
    pub self_coef: f64,
    pub parent_coef: f64,
    pub process_sigma: f64,
    pub obs_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn hierarchy(seed: u64) -> Self {
        Self {
            preset: Preset::Hierarchy,
            parents: hierarchy_topology(),
            t_len: 250,
            self_coef: -0.5,
            parent_coef: -0.5,
            process_sigma: 1.0,
            obs_sigma: 0.0,
            seed,
        }
    }

    pub fn ring(n: usize, seed: u64) -> Self {
        Self { preset: Preset::Ring, parents: ring_topology(n), ..Self::hierarchy(seed) }
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if n < 2 || self.t_len < 3 {
            return Err(Error::Config("synthetic system needs at least two nodes and three steps".into()));
        }
        if self.parents.iter().enumerate().any(|(i, p)| p.is_some_and(|p| p >= n || p == i)) {
            return Err(Error::Config("parent map refers to an invalid node".into()));
        }
        if !(self.process_sigma >= 0.0 && self.obs_sigma >= 0.0) {
            return Err(Error::Config("noise scales must be nonnegative".into()));
        }
        Ok(())
    }

    /// Spectral radius of the VAR(1) transition matrix `self_coef I + parent_coef P`.
    ///
    /// Every node has at most one parent, so the parent map is a functional
    /// graph: acyclic parts contribute the eigenvalue `self_coef`, and a cycle
    /// of length `k` contributes `self_coef + parent_coef ω` for each k-th root
    /// of unity `ω`.
    pub fn spectral_radius(&self) -> f64 {
        let mut radius = self.self_coef.abs();
        for k in self.cycle_lengths() {
            for r in 0..k {
                let angle = 2.0 * std::f64::consts::PI * r as f64 / k as f64;
                let re = self.self_coef + self.parent_coef * angle.cos();
                let im = self.parent_coef * angle.sin();
                radius = radius.max(re.hypot(im));
            }
        }
        radius
    }

    /// Lengths of the directed cycles in the parent map.
    pub fn cycle_lengths(&self) -> Vec<usize> {
        let n = self.n_nodes();
        // 0 = unvisited, 1 = on current path, 2 = done
        let mut state = vec![0u8; n];
        let mut out = Vec::new();
        for start in 0..n {
            let mut path = Vec::new();
            let mut node = Some(start);
            while let Some(u) = node {
                match state[u] {
                    0 => {
                        state[u] = 1;
                        path.push(u);
                        node = self.parents[u];
                    }
                    1 => {
                        let pos = path.iter().position(|&x| x == u).unwrap();
                        out.push(path.len() - pos);
                        break;
                    }
                    _ => break,
                }
            }
            for u in path {
                state[u] = 2;
            }
        }
        out
    }
}

/// Consecutive weekdays starting at 2000-01-03.
pub fn weekday_dates(n: usize) -> Vec<NaiveDate> {
    NaiveDate::from_ymd_opt(2000, 1, 3)
        .unwrap()
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

/// `X_i[t+1] = self_coef X_i[t] + parent_coef X_pa(i)[t] + ε`, started at
/// zero, with `BURN_IN` discarded steps and additive observation noise.
pub fn simulate(spec: &SyntheticSpec) -> Result<ReturnPanel> {
    spec.validate()?;
    let radius = spec.spectral_radius();
    if radius >= 1.0 - 1e-9 {
        log::warn!("synthetic VAR is not stable (spectral radius {radius:.3})");
    }
    let n = spec.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innovation = Normal::new(0.0, spec.process_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let observation = Normal::new(0.0, spec.obs_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut state = vec![0.0; n];
    let mut values = DMatrix::zeros(spec.t_len, n);
    for step in 0..BURN_IN + spec.t_len {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let parent = spec.parents[i].map_or(0.0, |p| spec.parent_coef * state[p]);
                spec.self_coef * state[i] + parent + innovation.sample(&mut rng)
            })
            .collect();
        state = next;
        if step >= BURN_IN {
            let row = step - BURN_IN;
            for i in 0..n {
                values[(row, i)] = state[i];
            }
        }
    }
    if spec.obs_sigma > 0.0 {
        for v in values.iter_mut() {
            *v += observation.sample(&mut rng);
        }
    }
    let labels = (0..n).map(|i| format!("X{i}")).collect();
    ReturnPanel::new(weekday_dates(spec.t_len), labels, values)
}

/// Share of `privileged` among the `|privileged|` highest-potential nodes;
/// potential ties go to the lower node index. `None` if too few nodes carry
/// a potential.
pub fn detection_rate(potentials: &[Option<f64>], privileged: &[usize]) -> Option<f64> {
    let mut ranked: Vec<(usize, f64)> = potentials.iter().enumerate().filter_map(|(i, p)| p.map(|p| (i, p))).collect();
    let k = privileged.len();
    if k == 0 || ranked.len() < k {
        return None;
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let hits = ranked[..k].iter().filter(|(i, _)| privileged.contains(i)).count();
    Some(hits as f64 / k as f64)
}

/// Runs the estimation and decomposition pipeline on one simulated panel.
pub fn run_pipeline(spec: &SyntheticSpec, config: &NetworkConfig) -> Result<FlowDecomposition> {
    let panel = simulate(spec)?;
    let network = estimate_network(&panel, config)?;
    Ok(decompose(&from_bidirectional(&network.cgc)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Detection rate, or the circular share for the ring preset.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub outcomes: Vec<SeedOutcome>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl DetectionResult {
    pub fn scores(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.score).collect()
    }
}

/// Seed of ensemble member `k`.
pub fn member_seed(base: u64, k: usize) -> u64 {
    derive_seed(base, k as u64)
}

/// Simulates `ensemble_size` independent realisations of `spec` and scores
/// each: hierarchy presets by detection rate of `privileged` (defaults to
/// the top two layers), ring presets by the circular share λ. Per-seed
/// failures are recorded and excluded from the aggregates.
pub fn validate(
    ensemble_size: usize,
    spec: &SyntheticSpec,
    config: &NetworkConfig,
    privileged: Option<&[usize]>,
) -> Result<DetectionResult> {
    if ensemble_size == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    spec.validate()?;
    let default_privileged = hierarchy_privileged();
    let privileged = privileged.unwrap_or(&default_privileged);
    let outcomes: Vec<SeedOutcome> = (0..ensemble_size)
        .into_par_iter()
        .map(|k| {
            let seed = member_seed(spec.seed, k);
            let member = SyntheticSpec { seed, ..spec.clone() };
            match run_pipeline(&member, config) {
                Ok(d) => {
                    let score = match spec.preset {
                        Preset::Hierarchy => detection_rate(&d.potentials, privileged),
                        Preset::Ring => d.lambda(),
                    };
                    let error = score.is_none().then(|| "score undefined for this realisation".to_string());
                    SeedOutcome { seed, score, error }
                }
                Err(e) => SeedOutcome { seed, score: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let mut scores: Vec<f64> = outcomes.iter().filter_map(|o| o.score).collect();
    scores.sort_by(f64::total_cmp);
    let (mean, median) = if scores.is_empty() {
        (None, None)
    } else {
        (Some(scores.iter().sum::<f64>() / scores.len() as f64), Some(quantile(&scores, 0.5)))
    };
    Ok(DetectionResult { outcomes, mean, median })
}
