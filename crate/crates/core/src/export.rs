//! Machine-readable views of networks and decompositions: JSON documents,
//! square CSV matrices and DOT graphs.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granger::CausalityNetwork;
use crate::hhkd::FlowDecomposition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub source: String,
    pub target: String,
    pub cgc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJson {
    pub labels: Vec<String>,
    pub edges: Vec<EdgeJson>,
    pub fit_ratio: Vec<f64>,
}

impl NetworkJson {
    pub fn new(network: &CausalityNetwork) -> Self {
        let l = &network.labels;
        Self {
            labels: l.clone(),
            edges: network
                .edges()
                .into_iter()
                .map(|(i, j, w)| EdgeJson { source: l[i].clone(), target: l[j].clone(), cgc: w })
                .collect(),
            fit_ratio: network.fit_ratio.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerNodeJson {
    #[serde(rename = "Gamma")]
    pub gradient: Vec<f64>,
    #[serde(rename = "Lambda")]
    pub circular: Vec<f64>,
    #[serde(rename = "Lambda_N")]
    pub circular_share: Vec<f64>,
    pub lambda_i: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdgeJson {
    pub source: String,
    pub target: String,
    pub net_flux: f64,
    pub conductance: f64,
    pub gradient_flux: f64,
    pub circular_flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionJson {
    pub labels: Vec<String>,
    pub potentials: Vec<Option<f64>>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub per_node: Option<PerNodeJson>,
    pub components: Vec<Vec<String>>,
    /// Nodes without any edge; they carry no potential.
    pub decoupled: Vec<String>,
    pub edges: Vec<FlowEdgeJson>,
}

impl DecompositionJson {
    pub fn new(labels: &[String], d: &FlowDecomposition) -> Self {
        let n = labels.len();
        let g = &d.graph;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if g.has_edge(i, j) {
                    // orient along the net flux
                    let (a, b) = if g.flux[(i, j)] >= 0.0 { (i, j) } else { (j, i) };
                    edges.push(FlowEdgeJson {
                        source: labels[a].clone(),
                        target: labels[b].clone(),
                        net_flux: g.flux[(a, b)],
                        conductance: g.conductance[(a, b)],
                        gradient_flux: d.gradient_flux[(a, b)],
                        circular_flux: d.circular_flux[(a, b)],
                    });
                }
            }
        }
        let names = |c: &Vec<usize>| c.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
        Self {
            labels: labels.to_vec(),
            potentials: d.potentials.clone(),
            gamma: d.gamma(),
            lambda: d.lambda(),
            per_node: d.shares.as_ref().map(|s| PerNodeJson {
                gradient: s.node_gradient.clone(),
                circular: s.node_circular.clone(),
                circular_share: s.node_circular_share.clone(),
                lambda_i: s.node_lambda.clone(),
            }),
            components: d.components.iter().filter(|c| c.len() > 1).map(names).collect(),
            decoupled: d.components.iter().filter(|c| c.len() == 1).flat_map(names).collect(),
            edges,
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Square matrix CSV: header row of labels, one row per source.
pub fn matrix_csv(labels: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::from("source");
    for l in labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&csv_field(l));
        for j in 0..labels.len() {
            let _ = write!(out, ",{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Number of potential bands in the DOT layout.
const DOT_BANDS: usize = 5;

/// DOT graph laid out top-down by potential: connected nodes are split into
/// potential quantile bands (band 0 holds the highest potentials) and each
/// band shares a rank. Edge pen width scales with the causality value.
pub fn network_dot(network: &CausalityNetwork, d: &FlowDecomposition) -> String {
    let labels = &network.labels;
    let mut ranked: Vec<(usize, f64)> = d.potentials.iter().enumerate().filter_map(|(i, p)| p.map(|p| (i, p))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let bands = DOT_BANDS.min(ranked.len()).max(1);
    let band_of = |pos: usize| pos * bands / ranked.len().max(1);

    let mut out = String::from("digraph causality {\n  rankdir=TB;\n  node [shape=box];\n");
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); bands];
    for (pos, &(i, p)) in ranked.iter().enumerate() {
        let band = band_of(pos);
        groups[band].push(i);
        let _ = writeln!(out, "  {} [potential={p}, band={band}, order={pos}];", dot_id(&labels[i]));
    }
    for (i, p) in d.potentials.iter().enumerate() {
        if p.is_none() {
            let _ = writeln!(out, "  {} [decoupled=true, style=dashed];", dot_id(&labels[i]));
        }
    }
    for group in groups.iter().filter(|g| !g.is_empty()) {
        let members: Vec<String> = group.iter().map(|&i| dot_id(&labels[i])).collect();
        let _ = writeln!(out, "  {{ rank=same; {}; }}", members.join("; "));
    }
    // invisible chain pins the bands in top-down order
    let heads: Vec<usize> = groups.iter().filter_map(|g| g.first().copied()).collect();
    for w in heads.windows(2) {
        let _ = writeln!(out, "  {} -> {} [style=invis];", dot_id(&labels[w[0]]), dot_id(&labels[w[1]]));
    }
    let max = network.cgc.iter().fold(0.0f64, |a, &b| a.max(b));
    for (i, j, w) in network.edges() {
        let width = if max > 0.0 { 0.5 + 4.5 * w / max } else { 1.0 };
        let _ = writeln!(out, "  {} -> {} [cgc={w}, penwidth={width:.3}];", dot_id(&labels[i]), dot_id(&labels[j]));
    }
    out.push_str("}\n");
    out
}

/// A node given either by index or by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub source: NodeRef,
    pub target: NodeRef,
    pub weight: f64,
}

/// Raw bidirectional edge list, e.g. `{"edges": [{"source": "A", "target": "B", "weight": 0.6}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    pub edges: Vec<WeightedEdge>,
}

impl EdgeList {
    /// Labels and the nonnegative bidirectional weight matrix.
    pub fn to_matrix(&self) -> Result<(Vec<String>, DMatrix<f64>)> {
        let mut labels = self.labels.clone().unwrap_or_default();
        let fixed = self.labels.is_some();
        if !fixed {
            for e in &self.edges {
                for r in [&e.source, &e.target] {
                    match r {
                        NodeRef::Label(s) if !labels.contains(s) => labels.push(s.clone()),
                        NodeRef::Index(i) if labels.len() <= *i => {
                            labels.extend((labels.len()..=*i).map(|k| k.to_string()));
                        }
                        _ => {}
                    }
                }
            }
        }
        let resolve = |r: &NodeRef| -> Result<usize> {
            match r {
                NodeRef::Index(i) if *i < labels.len() => Ok(*i),
                NodeRef::Label(s) => {
                    labels.iter().position(|l| l == s).ok_or_else(|| Error::Format(format!("unknown node '{s}'")))
                }
                NodeRef::Index(i) => Err(Error::Format(format!("node index {i} out of range"))),
            }
        };
        let n = labels.len();
        let mut m = DMatrix::zeros(n, n);
        for e in &self.edges {
            let (i, j) = (resolve(&e.source)?, resolve(&e.target)?);
            if i == j {
                return Err(Error::Domain(format!("self-loop on '{}'", labels[i])));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::Domain(format!("edge weight {} must be finite and nonnegative", e.weight)));
            }
            if m[(i, j)] != 0.0 {
                return Err(Error::Format(format!("duplicate edge {} -> {}", labels[i], labels[j])));
            }
            m[(i, j)] = e.weight;
        }
        Ok((labels, m))
    }
}
