#![allow(dead_code, clippy::needless_range_loop)]

use std::path::Path;

use causal_hierarchy::hhkd::FlowGraph;
use causal_hierarchy::synth::weekday_dates;
use causal_hierarchy::ReturnPanel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random antisymmetric flux on a random edge set, `|J| <= G`.
pub fn random_flow_graph(n: usize, density: f64, unit_conductance: bool, seed: u64) -> FlowGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                let cond = if unit_conductance { 1.0 } else { rng.random_range(0.05..2.0) };
                let flux = rng.random_range(-cond..=cond);
                g[(a, b)] = cond;
                g[(b, a)] = cond;
                j[(a, b)] = flux;
                j[(b, a)] = -flux;
            }
        }
    }
    FlowGraph::new(j, g).unwrap()
}

/// `I(Φ) = ½ Σ_{(i,j) ∈ E} (J_ij - G_ij (Φ_i - Φ_j))² / G_ij` over ordered edges.
pub fn potential_functional(g: &FlowGraph, phi: &[f64]) -> f64 {
    let n = g.n_nodes();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if g.has_edge(i, j) {
                let c = g.conductance[(i, j)];
                total += (g.flux[(i, j)] - c * (phi[i] - phi[j])).powi(2) / c;
            }
        }
    }
    0.5 * total
}

/// Minimises the potential functional by coordinate descent: each sweep sets
/// every `Φ_i` to its exact conditional minimiser.
pub fn minimize_potentials(g: &FlowGraph) -> Vec<f64> {
    let n = g.n_nodes();
    let mut phi = vec![0.0; n];
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                if g.has_edge(i, j) {
                    let c = g.conductance[(i, j)];
                    num += g.flux[(i, j)] + c * phi[j];
                    den += c;
                }
            }
            if den > 0.0 {
                let next = num / den;
                change = change.max((next - phi[i]).abs());
                phi[i] = next;
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    phi
}

pub fn noise_panel(n_series: usize, n_rows: usize, seed: u64) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = DMatrix::from_fn(n_rows, n_series, |_, _| rng.sample::<f64, _>(StandardNormal));
    let labels = (0..n_series).map(|i| format!("S{i:02}")).collect();
    ReturnPanel::new(weekday_dates(n_rows), labels, values).unwrap()
}

pub fn write_panel(panel: &ReturnPanel, path: &Path) {
    let file = std::fs::File::create(path).unwrap();
    panel.write_delimited(file, b',').unwrap();
}
