//! Helmholtz-Hodge-Kodaira decomposition of a bidirectional flow network.
//!
//! A bidirectional flux `B[i][j] >= 0` becomes a net flux `J = B - Bᵀ` and a
//! conductance `G = B + Bᵀ`. Node potentials minimise
//!
//! ```text
//! I(Φ) = ½ Σ_{i<j, G_ij>0} (J_ij - G_ij (Φ_i - Φ_j))² / G_ij
//! ```
//!
//! whose normal equations are the weighted Laplacian system `L_G Φ = div J`.
//! The gradient flow is `G_ij (Φ_i - Φ_j)` and the remainder is the
//! divergence-free circular flow. Quadratic norms use the same `1/G_ij`
//! weighting as `I`, under which the two parts are orthogonal and the
//! gradient and circular shares add up to one.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Antisymmetric net flux with its symmetric conductance. An edge exists
/// exactly where the conductance is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    pub flux: DMatrix<f64>,
    pub conductance: DMatrix<f64>,
}

impl FlowGraph {
    /// Validates an explicit `(J, G)` pair.
    pub fn new(flux: DMatrix<f64>, conductance: DMatrix<f64>) -> Result<Self> {
        let n = flux.nrows();
        if flux.shape() != (n, n) || conductance.shape() != (n, n) {
            return Err(Error::Shape("flux and conductance must be square and equal-sized".into()));
        }
        for i in 0..n {
            if conductance[(i, i)] != 0.0 || flux[(i, i)] != 0.0 {
                return Err(Error::Domain(format!("node {i} has a self-loop")));
            }
            for j in 0..n {
                let (g, f) = (conductance[(i, j)], flux[(i, j)]);
                if !g.is_finite() || g < 0.0 || !f.is_finite() {
                    return Err(Error::Domain(format!("invalid entry at ({i}, {j})")));
                }
                if g != conductance[(j, i)] {
                    return Err(Error::Domain(format!("conductance not symmetric at ({i}, {j})")));
                }
                if f != -flux[(j, i)] {
                    return Err(Error::Domain(format!("flux not antisymmetric at ({i}, {j})")));
                }
                if g == 0.0 && f != 0.0 {
                    return Err(Error::Domain(format!("flux on ({i}, {j}) without conductance")));
                }
            }
        }
        Ok(Self { flux, conductance })
    }

    pub fn n_nodes(&self) -> usize {
        self.flux.nrows()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.conductance[(i, j)] > 0.0
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n_nodes();
        (0..n).map(|i| (i + 1..n).filter(|&j| self.has_edge(i, j)).count()).sum()
    }

    /// Connected components over edges with positive conductance, each sorted,
    /// ordered by smallest member. Isolated nodes form singleton components.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut stack = vec![root];
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for (v, visited) in seen.iter_mut().enumerate() {
                    if !*visited && self.has_edge(u, v) {
                        *visited = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Net flux `B - Bᵀ` and conductance `B + Bᵀ` of a nonnegative bidirectional flux.
pub fn from_bidirectional(cgc: &DMatrix<f64>) -> Result<FlowGraph> {
    let n = cgc.nrows();
    if cgc.shape() != (n, n) {
        return Err(Error::Shape(format!("bidirectional flux must be square, got {:?}", cgc.shape())));
    }
    if let Some(bad) = cgc.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("bidirectional flux must be nonnegative, found {bad}")));
    }
    let mut flux = cgc - cgc.transpose();
    let conductance = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { cgc[(i, j)] + cgc[(j, i)] });
    flux.fill_diagonal(0.0);
    Ok(FlowGraph { flux, conductance })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    /// `None` for nodes without any edge.
    pub values: Vec<Option<f64>>,
    pub components: Vec<Vec<usize>>,
}

/// Solves `L_G Φ = div J` per connected component by pinning the first node,
/// then shifts each component to zero mean.
pub fn solve_potentials(graph: &FlowGraph) -> Potentials {
    let n = graph.n_nodes();
    let components = graph.components();
    let mut values = vec![None; n];
    for comp in components.iter().filter(|c| c.len() > 1) {
        let k = comp.len();
        // reduced system over comp[1..], comp[0] pinned at zero
        let mut lap = DMatrix::zeros(k - 1, k - 1);
        let mut rhs = DVector::zeros(k - 1);
        for a in 1..k {
            let i = comp[a];
            let mut degree = 0.0;
            let mut divergence = 0.0;
            for (b, &j) in comp.iter().enumerate() {
                let g = graph.conductance[(i, j)];
                if g > 0.0 {
                    degree += g;
                    divergence += graph.flux[(i, j)];
                    if b > 0 {
                        lap[(a - 1, b - 1)] = -g;
                    }
                }
            }
            lap[(a - 1, a - 1)] = degree;
            rhs[a - 1] = divergence;
        }
        let solved = if k == 2 {
            // isolated pair: Φ_i - Φ_j = J_ij / G_ij
            DVector::from_element(1, rhs[0] / lap[(0, 0)])
        } else {
            match Cholesky::new(lap.clone()) {
                Some(ch) => ch.solve(&rhs),
                // connected reduced Laplacians are positive definite; LU covers
                // extreme conductance ratios that defeat Cholesky
                None => lap.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k - 1)),
            }
        };
        let mut phi = vec![0.0; k];
        phi[1..].copy_from_slice(solved.as_slice());
        let mean = phi.iter().sum::<f64>() / k as f64;
        for (a, &node) in comp.iter().enumerate() {
            values[node] = Some(phi[a] - mean);
        }
    }
    Potentials { values, components }
}

/// Gradient and circular shares of the flow, overall and per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxShares {
    pub gamma: f64,
    pub lambda: f64,
    /// Total squared flux `N`.
    pub total: f64,
    pub node_gradient: Vec<f64>,
    pub node_circular: Vec<f64>,
    /// `Λ_i / N`: a node's circular contribution to the total flux.
    pub node_circular_share: Vec<f64>,
    /// `Λ_i / (Λ_i + Γ_i)`, absent for nodes without flux.
    pub node_lambda: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDecomposition {
    pub graph: FlowGraph,
    pub potentials: Vec<Option<f64>>,
    pub components: Vec<Vec<usize>>,
    pub gradient_flux: DMatrix<f64>,
    pub circular_flux: DMatrix<f64>,
    /// `None` when the total flux vanishes (no edges, or only balanced pairs).
    pub shares: Option<FluxShares>,
}

impl FlowDecomposition {
    pub fn has_edges(&self) -> bool {
        self.graph.edge_count() > 0
    }

    pub fn gamma(&self) -> Option<f64> {
        self.shares.as_ref().map(|s| s.gamma)
    }

    pub fn lambda(&self) -> Option<f64> {
        self.shares.as_ref().map(|s| s.lambda)
    }

    pub fn connected_nodes(&self) -> Vec<usize> {
        (0..self.potentials.len()).filter(|&i| self.potentials[i].is_some()).collect()
    }
}

pub fn decompose(graph: &FlowGraph) -> FlowDecomposition {
    let n = graph.n_nodes();
    let Potentials { values, components } = solve_potentials(graph);
    let mut gradient = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if let (true, Some(pi), Some(pj)) = (graph.has_edge(i, j), values[i], values[j]) {
                gradient[(i, j)] = graph.conductance[(i, j)] * (pi - pj);
            }
        }
    }
    let circular = &graph.flux - &gradient;
    if graph.edge_count() == 0 {
        log::warn!("flow graph has no edges; decomposition metrics are undefined");
    }
    let mut decomposition = FlowDecomposition {
        graph: graph.clone(),
        potentials: values,
        components,
        gradient_flux: gradient,
        circular_flux: circular,
        shares: None,
    };
    decomposition.shares = flux_shares(&decomposition);
    decomposition
}

/// Quadratic norms weighted by `1/G_ij` on edges; `None` when `N = 0`.
pub fn flux_shares(decomp: &FlowDecomposition) -> Option<FluxShares> {
    let g = &decomp.graph;
    let n = g.n_nodes();
    let mut node_gradient = vec![0.0; n];
    let mut node_circular = vec![0.0; n];
    let mut node_total = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if g.has_edge(i, j) {
                let w = 1.0 / g.conductance[(i, j)];
                node_gradient[i] += w * decomp.gradient_flux[(i, j)].powi(2);
                node_circular[i] += w * decomp.circular_flux[(i, j)].powi(2);
                node_total[i] += w * g.flux[(i, j)].powi(2);
            }
        }
    }
    let total = 0.5 * node_total.iter().sum::<f64>();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let gradient_norm = 0.5 * node_gradient.iter().sum::<f64>();
    let circular_norm = 0.5 * node_circular.iter().sum::<f64>();
    let node_lambda = node_gradient
        .iter()
        .zip(&node_circular)
        .map(|(gr, ci)| if gr + ci > 0.0 { Some(ci / (gr + ci)) } else { None })
        .collect();
    Some(FluxShares {
        gamma: gradient_norm / total,
        lambda: circular_norm / total,
        total,
        node_circular_share: node_circular.iter().map(|c| c / total).collect(),
        node_gradient,
        node_circular,
        node_lambda,
    })
}
