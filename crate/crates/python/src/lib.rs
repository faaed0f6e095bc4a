//! Python bindings. Matrices cross the boundary as row-major nested lists.

use causal_hierarchy::granger::{estimate_network, CausalityNetwork, NetworkConfig};
use causal_hierarchy::hhkd::{decompose, from_bidirectional, FlowDecomposition};
use causal_hierarchy::netmetrics::{connectivity, flux_sums, null_model, NullConfig};
use causal_hierarchy::synth::{self, SyntheticSpec};
use causal_hierarchy::{data, Error};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

mod convert;
use convert::{matrix_from_rows, panel_from_rows, rows_from_matrix};

type Rows = Vec<Vec<f64>>;
type Scores = (Vec<Option<f64>>, Option<f64>, Option<f64>);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn network_config(max_lag: usize, variance_share: f64, max_terms: Option<usize>) -> PyResult<NetworkConfig> {
    let config = NetworkConfig { max_lag, variance_share, max_terms };
    config.validate().map_err(to_py)?;
    Ok(config)
}

/// Estimated conditional Granger causality network.
#[pyclass(name = "CausalityNetwork", module = "causal_hierarchy", frozen)]
struct PyNetwork(CausalityNetwork);

#[pymethods]
impl PyNetwork {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.labels.clone()
    }

    /// `cgc[i][j]` is the causal strength of `i` on `j`.
    #[getter]
    fn cgc(&self) -> Vec<Vec<f64>> {
        rows_from_matrix(&self.0.cgc)
    }

    #[getter]
    fn fit_ratio(&self) -> Vec<f64> {
        self.0.fit_ratio.clone()
    }

    /// `(source, target, cgc)` for every nonzero link.
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.0.edges()
    }

    fn connectivity(&self) -> f64 {
        connectivity(&self.0)
    }

    /// `(influx, outflux)` per node.
    fn flux_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let f = flux_sums(&self.0);
        (f.influx, f.outflux)
    }

    fn decompose(&self) -> PyResult<PyDecomposition> {
        let graph = from_bidirectional(&self.0.cgc).map_err(to_py)?;
        Ok(PyDecomposition(decompose(&graph)))
    }

    fn __repr__(&self) -> String {
        format!("CausalityNetwork(nodes={}, edges={})", self.0.n_nodes(), self.0.edges().len())
    }
}

/// Split of a flow into its gradient (hierarchy) and circular parts.
#[pyclass(name = "FlowDecomposition", module = "causal_hierarchy", frozen)]
struct PyDecomposition(FlowDecomposition);

#[pymethods]
impl PyDecomposition {
    /// Node potentials; `None` for nodes without edges.
    #[getter]
    fn potentials(&self) -> Vec<Option<f64>> {
        self.0.potentials.clone()
    }

    #[getter]
    fn gamma(&self) -> Option<f64> {
        self.0.gamma()
    }

    #[getter]
    fn lambda_(&self) -> Option<f64> {
        self.0.lambda()
    }

    #[getter]
    fn node_lambda(&self) -> Option<Vec<Option<f64>>> {
        self.0.shares.as_ref().map(|s| s.node_lambda.clone())
    }

    #[getter]
    fn components(&self) -> Vec<Vec<usize>> {
        self.0.components.clone()
    }

    #[getter]
    fn flux(&self) -> Vec<Vec<f64>> {
        rows_from_matrix(&self.0.graph.flux)
    }

    #[getter]
    fn conductance(&self) -> Vec<Vec<f64>> {
        rows_from_matrix(&self.0.graph.conductance)
    }

    #[getter]
    fn gradient_flux(&self) -> Vec<Vec<f64>> {
        rows_from_matrix(&self.0.gradient_flux)
    }

    #[getter]
    fn circular_flux(&self) -> Vec<Vec<f64>> {
        rows_from_matrix(&self.0.circular_flux)
    }

    fn __repr__(&self) -> String {
        let show = |v: Option<f64>| v.map_or("None".to_string(), |x| format!("{x:.4}"));
        format!("FlowDecomposition(gamma={}, lambda={})", show(self.0.gamma()), show(self.0.lambda()))
    }
}

/// Simple returns from a price matrix (rows = time); one row shorter.
#[pyfunction]
fn prices_to_returns(prices: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_rows(&prices).map_err(to_py)?;
    data::prices_to_returns(&m).map(|r| rows_from_matrix(&r)).map_err(to_py)
}

/// Principal-component denoising; returns `(values, kept_components)`.
#[pyfunction]
#[pyo3(signature = (values, variance_share = 0.9))]
fn pca_denoise(values: Vec<Vec<f64>>, variance_share: f64) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let m = matrix_from_rows(&values).map_err(to_py)?;
    let d = data::pca_denoise_values(&m, variance_share).map_err(to_py)?;
    Ok((rows_from_matrix(&d.values), d.kept_components))
}

/// Reads a delimited file; returns `(dates, labels, values, dropped_rows)`.
#[pyfunction]
#[pyo3(signature = (path, delimiter = ',', missing_sentinel = -99.0))]
fn load_panel(path: &str, delimiter: char, missing_sentinel: f64) -> PyResult<(Vec<String>, Vec<String>, Rows, usize)> {
    let delimiter = u8::try_from(delimiter).map_err(|_| PyValueError::new_err("delimiter must be ASCII"))?;
    let file = std::fs::File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
    let ingested = data::load_panel(file, &data::IngestConfig { delimiter, missing_sentinel }).map_err(to_py)?;
    let p = ingested.panel;
    let dates = p.dates.iter().map(|d| d.to_string()).collect();
    Ok((dates, p.labels, rows_from_matrix(&p.values), ingested.dropped_rows))
}

/// Stepwise conditional Granger causality network of a return panel (rows = time).
#[pyfunction(name = "estimate_network")]
#[pyo3(signature = (values, labels = None, max_lag = 1, variance_share = 0.9, max_terms = None))]
fn py_estimate_network(
    py: Python<'_>,
    values: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
    max_lag: usize,
    variance_share: f64,
    max_terms: Option<usize>,
) -> PyResult<PyNetwork> {
    let config = network_config(max_lag, variance_share, max_terms)?;
    let panel = panel_from_rows(&values, labels).map_err(to_py)?;
    py.detach(|| estimate_network(&panel, &config)).map(PyNetwork).map_err(to_py)
}

/// `(J, G)` from a nonnegative bidirectional flux matrix.
#[pyfunction(name = "from_bidirectional")]
fn py_from_bidirectional(cgc: Vec<Vec<f64>>) -> PyResult<(Rows, Rows)> {
    let m = matrix_from_rows(&cgc).map_err(to_py)?;
    let g = from_bidirectional(&m).map_err(to_py)?;
    Ok((rows_from_matrix(&g.flux), rows_from_matrix(&g.conductance)))
}

/// Decomposes a bidirectional flux matrix such as a CGC matrix.
#[pyfunction(name = "decompose")]
fn py_decompose(cgc: Vec<Vec<f64>>) -> PyResult<PyDecomposition> {
    let m = matrix_from_rows(&cgc).map_err(to_py)?;
    let g = from_bidirectional(&m).map_err(to_py)?;
    Ok(PyDecomposition(decompose(&g)))
}

fn spec(preset: &str, seed: u64, t_len: usize, obs_sigma: f64, ring_size: usize) -> PyResult<SyntheticSpec> {
    let base = match preset {
        "hierarchy" => SyntheticSpec::hierarchy(seed),
        "ring" => SyntheticSpec::ring(ring_size, seed),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}; use 'hierarchy' or 'ring'"))),
    };
    let spec = SyntheticSpec { t_len, obs_sigma, ..base };
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

/// Simulated networked VAR panel (rows = time).
#[pyfunction]
#[pyo3(signature = (preset = "hierarchy", seed = 0, t_len = 250, obs_sigma = 0.0, ring_size = 5))]
fn simulate(preset: &str, seed: u64, t_len: usize, obs_sigma: f64, ring_size: usize) -> PyResult<Vec<Vec<f64>>> {
    let panel = synth::simulate(&spec(preset, seed, t_len, obs_sigma, ring_size)?).map_err(to_py)?;
    Ok(rows_from_matrix(&panel.values))
}

/// Ensemble validation; returns `(scores, mean, median)`. Hierarchies are
/// scored by detection rate of the top two layers, rings by λ.
#[pyfunction]
#[pyo3(signature = (ensemble = 50, preset = "hierarchy", seed = 0, t_len = 250, obs_sigma = 0.0, ring_size = 5, variance_share = 0.9))]
#[allow(clippy::too_many_arguments)]
fn validate(
    py: Python<'_>,
    ensemble: usize,
    preset: &str,
    seed: u64,
    t_len: usize,
    obs_sigma: f64,
    ring_size: usize,
    variance_share: f64,
) -> PyResult<Scores> {
    let spec = spec(preset, seed, t_len, obs_sigma, ring_size)?;
    let config = network_config(1, variance_share, None)?;
    let r = py.detach(|| synth::validate(ensemble, &spec, &config, None)).map_err(to_py)?;
    Ok((r.outcomes.iter().map(|o| o.score).collect(), r.mean, r.median))
}

/// Connectivity quantiles of shuffled subsets; returns `(connectivities, median, ci_low, ci_high)`.
#[pyfunction(name = "null_model")]
#[pyo3(signature = (values, draws = 50, subset_length = 250, seed = 0, variance_share = 0.9))]
fn py_null_model(
    py: Python<'_>,
    values: Vec<Vec<f64>>,
    draws: usize,
    subset_length: usize,
    seed: u64,
    variance_share: f64,
) -> PyResult<(Vec<f64>, f64, f64, f64)> {
    let panel = panel_from_rows(&values, None).map_err(to_py)?;
    let config = network_config(1, variance_share, None)?;
    let null = NullConfig { draws, subset_length, ..NullConfig::default() };
    let e = py.detach(|| null_model(&panel, &null, &config, seed)).map_err(to_py)?;
    Ok((e.connectivities, e.median, e.ci_low, e.ci_high))
}

#[pymodule(name = "causal_hierarchy")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_function(wrap_pyfunction!(prices_to_returns, m)?)?;
    m.add_function(wrap_pyfunction!(pca_denoise, m)?)?;
    m.add_function(wrap_pyfunction!(load_panel, m)?)?;
    m.add_function(wrap_pyfunction!(py_estimate_network, m)?)?;
    m.add_function(wrap_pyfunction!(py_from_bidirectional, m)?)?;
    m.add_function(wrap_pyfunction!(py_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(py_null_model, m)?)?;
    Ok(())
}
