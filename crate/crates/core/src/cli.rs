//! Command-line front end. Every subcommand computes all of its outputs in
//! memory first and writes them only once nothing can fail any more.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{load_panel, prices_to_returns, slice_window, IngestConfig, ReturnPanel, WindowSelector, YearMonth};
use crate::error::{Error, Result};
use crate::export::{matrix_csv, network_dot, DecompositionJson, EdgeList, NetworkJson};
use crate::granger::{estimate_network, CausalityNetwork, NetworkConfig};
use crate::hhkd::{decompose, from_bidirectional};
use crate::netmetrics::{kde_normalized, linkage_rates, null_model, NullConfig, NullEnsemble, WindowReport};
use crate::synth::{hierarchy_topology, ring_topology, validate, DetectionResult, Preset, SyntheticSpec};

pub const OUT_DIR_ENV: &str = "CAUSAL_HIERARCHY_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "causal-hierarchy",
    version,
    about = "Granger causality networks and their hierarchy/circular flow decomposition"
)]
pub struct Cli {
    /// Directory that receives all outputs.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out", global = true)]
    pub out_dir: PathBuf,

    /// Output formats to write (JSON reports are always written).
    #[arg(long, value_delimiter = ',', default_value = "json,csv,dot", global = true)]
    pub formats: Vec<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate and decompose the network of a single window.
    Analyze(AnalyzeArgs),
    /// Rolling-window scan producing per-window reports and plot-ready tables.
    Scan(ScanArgs),
    /// Connectivity of networks estimated on shuffled row subsets.
    Null(NullArgs),
    /// Hierarchy recovery on simulated VAR networks.
    Validate(ValidateArgs),
    /// Decompose a raw edge-list JSON without estimation.
    Decompose(DecomposeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Delimited panel: header row, date column first, one column per series.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Values at or below this are treated as missing; their rows are dropped.
    #[arg(long, default_value_t = -99.0, allow_negative_numbers = true)]
    pub missing_sentinel: f64,
    /// Treat the input as prices and convert to simple returns.
    #[arg(long)]
    pub prices: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 1)]
    pub max_lag: usize,
    /// Variance share kept by PCA denoising; 1.0 disables denoising.
    #[arg(long, default_value_t = 0.90)]
    pub variance_share: f64,
    /// Cap on selected terms per target (default: one per ten rows).
    #[arg(long)]
    pub max_terms: Option<usize>,
}

impl PipelineArgs {
    fn config(&self) -> Result<NetworkConfig> {
        let c = NetworkConfig { max_lag: self.max_lag, variance_share: self.variance_share, max_terms: self.max_terms };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindowArgs {
    /// First window's start month, YYYY-MM (default: first month of the data).
    #[arg(long)]
    pub window_start: Option<String>,
    #[arg(long, default_value_t = 12)]
    pub window_length: u32,
    #[arg(long, default_value_t = 1)]
    pub window_step: u32,
}

impl WindowArgs {
    fn selector(&self, panel: &ReturnPanel) -> Result<WindowSelector> {
        let start = match &self.window_start {
            Some(s) => s.parse::<YearMonth>().map_err(|e| Error::Config(format!("--window-start: {e}")))?,
            None => YearMonth::of(panel.dates[0]),
        };
        WindowSelector::new(start, self.window_length, self.window_step)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NullModelArgs {
    #[arg(long, default_value_t = 250)]
    pub null_length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower and upper confidence quantiles.
    #[arg(long, value_delimiter = ',', default_values_t = [0.025, 0.975])]
    pub quantiles: Vec<f64>,
}

impl NullModelArgs {
    fn config(&self, draws: usize) -> Result<NullConfig> {
        if self.quantiles.len() != 2 {
            return Err(Error::Config("--quantiles takes exactly two values, e.g. 0.025,0.975".into()));
        }
        let c = NullConfig { draws, subset_length: self.null_length, quantiles: (self.quantiles[0], self.quantiles[1]) };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Restrict to one calendar window starting at --window-start.
    #[command(flatten)]
    pub window: WindowArgs,
    /// Shuffled subsets for a connectivity null model (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub null_draws: usize,
    #[command(flatten)]
    pub null: NullModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Grid points for the KDE curves on [0, 1].
    #[arg(long, default_value_t = 101)]
    pub kde_points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NullArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 50)]
    pub null_draws: usize,
    #[command(flatten)]
    pub null: NullModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Hierarchy,
    Ring,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = PresetArg::Hierarchy)]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 5)]
    pub ring_size: usize,
    #[arg(long, default_value_t = 50)]
    pub ensemble: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 250)]
    pub t_len: usize,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub self_coef: f64,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub parent_coef: f64,
    #[arg(long, default_value_t = 1.0)]
    pub process_sigma: f64,
    /// Observation noise levels; several values give a rate-vs-noise sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
    pub obs_sigma: Vec<f64>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecomposeArgs {
    /// Edge-list JSON: {"edges": [{"source", "target", "weight"}]}.
    #[arg(long)]
    pub edges: PathBuf,
}

/// Files produced by a command, keyed by path relative to the output directory.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(PathBuf, String)>,
    pub summary: String,
}

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.files.push((path.into(), contents));
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (rel, contents) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, contents)?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).ok().filter(u8::is_ascii).ok_or_else(|| Error::Config(format!("--delimiter '{c}' must be ASCII")))
}

fn load_input(args: &InputArgs) -> Result<(ReturnPanel, usize)> {
    let cfg = IngestConfig { delimiter: delimiter_byte(args.delimiter)?, missing_sentinel: args.missing_sentinel };
    let file = fs::File::open(&args.input)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.input.display()))))?;
    let ingested = load_panel(std::io::BufReader::new(file), &cfg)?;
    if ingested.dropped_rows > 0 {
        log::warn!("dropped {} rows with missing values", ingested.dropped_rows);
    }
    let mut panel = ingested.panel;
    if args.prices {
        let returns = prices_to_returns(&panel.values)?;
        panel = ReturnPanel::new(panel.dates[1..].to_vec(), panel.labels, returns)?;
    }
    Ok((panel, ingested.dropped_rows))
}

#[derive(Debug, Serialize)]
struct WindowInfo {
    label: String,
    start: String,
    end: String,
}

#[derive(Debug, Serialize)]
struct AnalyzeReport<'a> {
    config: &'a AnalyzeArgs,
    window: Option<WindowInfo>,
    rows: usize,
    dropped_rows: usize,
    connectivity: f64,
    complete: bool,
    /// Potentials cover only part of the nodes.
    partial: bool,
    gamma: Option<f64>,
    lambda: Option<f64>,
    influx: Vec<f64>,
    outflux: Vec<f64>,
    network: NetworkJson,
    decomposition: DecompositionJson,
    null: Option<NullEnsemble>,
    connectivity_within_null_ci: Option<bool>,
}

fn analyze_window(panel: &ReturnPanel, label: Option<YearMonth>, config: &NetworkConfig, dropped: usize) -> Result<WindowReport> {
    let network = estimate_network(panel, config)?;
    let decomposition = decompose(&from_bidirectional(&network.cgc)?);
    Ok(WindowReport::new(label, network, decomposition, dropped))
}

fn window_outputs(out: &mut Outputs, prefix: &str, formats: &[Format], report: &WindowReport) -> Result<()> {
    let net = &report.network;
    if formats.contains(&Format::Json) {
        out.add(format!("{prefix}network.json"), to_json(&NetworkJson::new(net))?);
        out.add(format!("{prefix}decomposition.json"), to_json(&DecompositionJson::new(&net.labels, &report.decomposition))?);
    }
    if formats.contains(&Format::Csv) {
        out.add(format!("{prefix}network.csv"), matrix_csv(&net.labels, &net.cgc));
    }
    if formats.contains(&Format::Dot) {
        out.add(format!("{prefix}graph.dot"), network_dot(net, &report.decomposition));
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs, formats: &[Format]) -> Result<Outputs> {
    let config = args.pipeline.config()?;
    let null_config = if args.null_draws > 0 { Some(args.null.config(args.null_draws)?) } else { None };
    let (full, dropped) = load_input(&args.input)?;
    let (panel, window) = match args.window.window_start {
        Some(_) => {
            let sel = args.window.selector(&full)?;
            let w = slice_window(&full, &sel, 0)?;
            let info = WindowInfo { label: w.midpoint.to_string(), start: w.start.to_string(), end: w.end.to_string() };
            (w.panel, Some((w.midpoint, info)))
        }
        None => (full.clone(), None),
    };
    let report = analyze_window(&panel, window.as_ref().map(|w| w.0), &config, dropped)?;
    let null = match &null_config {
        Some(nc) => Some(null_model(&full, nc, &config, args.null.seed)?),
        None => None,
    };
    let decomposition = &report.decomposition;
    let doc = AnalyzeReport {
        config: args,
        window: window.map(|w| w.1),
        rows: panel.n_rows(),
        dropped_rows: dropped,
        connectivity: report.connectivity,
        complete: report.is_complete(),
        partial: decomposition.connected_nodes().len() < panel.n_series(),
        gamma: decomposition.gamma(),
        lambda: decomposition.lambda(),
        influx: report.flux.influx.clone(),
        outflux: report.flux.outflux.clone(),
        network: NetworkJson::new(&report.network),
        decomposition: DecompositionJson::new(&report.network.labels, decomposition),
        connectivity_within_null_ci: null.as_ref().map(|n| n.contains(report.connectivity)),
        null,
    };
    let mut out = Outputs::default();
    out.add("report.json", to_json(&doc)?);
    window_outputs(&mut out, "", formats, &report)?;
    out.summary = format!(
        "connectivity {:.4}, gamma {}, {} edges",
        report.connectivity,
        decomposition.gamma().map_or("undefined".into(), |g| format!("{g:.4}")),
        report.network.edges().len()
    );
    if let Some(inside) = doc.connectivity_within_null_ci {
        out.summary.push_str(if inside { ", within null CI" } else { ", outside null CI" });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ScanWindow {
    label: String,
    start: String,
    end: String,
    rows: usize,
    connectivity: f64,
    complete: bool,
    partial: bool,
    gamma: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SkippedWindow {
    index: usize,
    label: String,
    reason: String,
}

#[derive(Debug, Serialize)]
struct ScanReport<'a> {
    config: &'a ScanArgs,
    dropped_rows: usize,
    windows: Vec<ScanWindow>,
    skipped: Vec<SkippedWindow>,
    in_windows: Vec<usize>,
    out_windows: Vec<usize>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn cmd_scan(args: &ScanArgs, formats: &[Format]) -> Result<Outputs> {
    let config = args.pipeline.config()?;
    if args.kde_points < 2 {
        return Err(Error::Config("--kde-points must be at least 2".into()));
    }
    let (panel, dropped) = load_input(&args.input)?;
    let sel = args.window.selector(&panel)?;
    let count = sel.full_window_count(&panel);
    if count == 0 {
        return Err(Error::InsufficientData("no full window fits in the data".into()));
    }

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for index in 0..count {
        let label = sel.midpoint(index);
        let result = slice_window(&panel, &sel, index)
            .and_then(|w| analyze_window(&w.panel, Some(label), &config, dropped).map(|r| (w, r)));
        match result {
            Ok(pair) => reports.push(pair),
            Err(e) => {
                log::warn!("skipping window {label}: {e}");
                skipped.push(SkippedWindow { index, label: label.to_string(), reason: e.to_string() });
            }
        }
    }
    if reports.is_empty() {
        return Err(Error::InsufficientData("every window was skipped".into()));
    }

    let labels = panel.labels.clone();
    let mut out = Outputs::default();
    let mut windows = Vec::new();
    let mut connectivity_csv = String::from("window,connectivity\n");
    let mut gamma_csv = String::from("window,gamma\n");
    for (w, r) in &reports {
        let label = w.midpoint.to_string();
        let d = &r.decomposition;
        windows.push(ScanWindow {
            label: label.clone(),
            start: w.start.to_string(),
            end: w.end.to_string(),
            rows: w.panel.n_rows(),
            connectivity: r.connectivity,
            complete: r.is_complete(),
            partial: d.connected_nodes().len() < labels.len(),
            gamma: d.gamma(),
            lambda: d.lambda(),
        });
        connectivity_csv.push_str(&format!("{label},{}\n", r.connectivity));
        let gamma = if r.is_complete() { d.gamma() } else { None };
        gamma_csv.push_str(&format!("{label},{}\n", opt_cell(gamma)));
        window_outputs(&mut out, &format!("windows/{label}/"), formats, r)?;
    }

    let mut potentials_csv = String::from("series");
    for (w, _) in &reports {
        potentials_csv.push_str(&format!(",{}", w.midpoint));
    }
    potentials_csv.push('\n');
    for (i, l) in labels.iter().enumerate() {
        potentials_csv.push_str(l);
        for (_, r) in &reports {
            potentials_csv.push_str(&format!(",{}", opt_cell(r.decomposition.potentials[i])));
        }
        potentials_csv.push('\n');
    }

    let rates = linkage_rates(reports.iter().map(|(_, r)| &r.network))?;
    let n = labels.len();
    let mut total_in = vec![0.0; n];
    let mut total_out = vec![0.0; n];
    for (_, r) in &reports {
        for i in 0..n {
            total_in[i] += r.flux.influx[i];
            total_out[i] += r.flux.outflux[i];
        }
    }
    let grid: Vec<f64> = (0..args.kde_points).map(|k| k as f64 / (args.kde_points - 1) as f64).collect();
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let curves: Vec<Option<Vec<f64>>> =
        [total_in.clone(), total_out.clone(), as_f64(&rates.in_windows), as_f64(&rates.out_windows)]
            .iter()
            .map(|v| kde_normalized(v, &grid).ok())
            .collect();
    let mut kde_csv = String::from("x,influx,outflux,in_windows,out_windows\n");
    for (k, x) in grid.iter().enumerate() {
        kde_csv.push_str(&x.to_string());
        for c in &curves {
            kde_csv.push_str(&format!(",{}", opt_cell(c.as_ref().map(|v| v[k]))));
        }
        kde_csv.push('\n');
    }

    let complete = windows.iter().filter(|w| w.complete).count();
    let doc = ScanReport {
        config: args,
        dropped_rows: dropped,
        windows,
        skipped,
        in_windows: rates.in_windows,
        out_windows: rates.out_windows,
    };
    out.add("scan.json", to_json(&doc)?);
    if formats.contains(&Format::Csv) {
        out.add("connectivity.csv", connectivity_csv);
        out.add("gamma.csv", gamma_csv);
        out.add("potentials.csv", potentials_csv);
        out.add("kde.csv", kde_csv);
    }
    out.summary = format!("{} windows analysed, {} complete, {} skipped", reports.len(), complete, doc.skipped.len());
    Ok(out)
}

#[derive(Debug, Serialize)]
struct NullReport<'a> {
    config: &'a NullArgs,
    rows: usize,
    ensemble: NullEnsemble,
}

pub fn cmd_null(args: &NullArgs, _formats: &[Format]) -> Result<Outputs> {
    let config = args.pipeline.config()?;
    let null_config = args.null.config(args.null_draws)?;
    let (panel, _) = load_input(&args.input)?;
    let ensemble = null_model(&panel, &null_config, &config, args.null.seed)?;
    let mut out = Outputs {
        summary: format!(
            "null connectivity median {:.4}, CI [{:.4}, {:.4}] over {} draws",
            ensemble.median, ensemble.ci_low, ensemble.ci_high, ensemble.draws
        ),
        ..Outputs::default()
    };
    out.add("null.json", to_json(&NullReport { config: args, rows: panel.n_rows(), ensemble })?);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct NoiseLevel {
    obs_sigma: f64,
    result: DetectionResult,
}

#[derive(Debug, Serialize)]
struct ValidateReport<'a> {
    config: &'a ValidateArgs,
    /// "detection_rate" for hierarchies, "lambda" for rings.
    score: &'static str,
    spectral_radius: f64,
    levels: Vec<NoiseLevel>,
}

pub fn cmd_validate(args: &ValidateArgs, formats: &[Format]) -> Result<Outputs> {
    let config = args.pipeline.config()?;
    if args.obs_sigma.is_empty() {
        return Err(Error::Config("--obs-sigma needs at least one value".into()));
    }
    let (preset, parents) = match args.preset {
        PresetArg::Hierarchy => (Preset::Hierarchy, hierarchy_topology()),
        PresetArg::Ring => (Preset::Ring, ring_topology(args.ring_size)),
    };
    let base = SyntheticSpec {
        preset,
        parents,
        t_len: args.t_len,
        self_coef: args.self_coef,
        parent_coef: args.parent_coef,
        process_sigma: args.process_sigma,
        obs_sigma: 0.0,
        seed: args.seed,
    };
    base.validate()?;
    let mut levels = Vec::new();
    for &obs_sigma in &args.obs_sigma {
        let spec = SyntheticSpec { obs_sigma, ..base.clone() };
        spec.validate()?;
        levels.push(NoiseLevel { obs_sigma, result: validate(args.ensemble, &spec, &config, None)? });
    }
    let mut csv = String::from("obs_sigma,mean,median,failures\n");
    for l in &levels {
        let failures = l.result.outcomes.iter().filter(|o| o.score.is_none()).count();
        csv.push_str(&format!("{},{},{},{failures}\n", l.obs_sigma, opt_cell(l.result.mean), opt_cell(l.result.median)));
    }
    let score = match preset {
        Preset::Hierarchy => "detection_rate",
        Preset::Ring => "lambda",
    };
    validate_outputs(args, score, base.spectral_radius(), levels, csv, formats)
}

fn validate_outputs(
    args: &ValidateArgs,
    score: &'static str,
    spectral_radius: f64,
    levels: Vec<NoiseLevel>,
    csv: String,
    formats: &[Format],
) -> Result<Outputs> {
    let summary = levels
        .iter()
        .map(|l| {
            format!(
                "obs_sigma {}: mean {} {}, median {}",
                l.obs_sigma,
                score,
                l.result.mean.map_or("undefined".into(), |m| format!("{m:.4}")),
                l.result.median.map_or("undefined".into(), |m| format!("{m:.4}"))
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let mut out = Outputs { summary, ..Outputs::default() };
    out.add("validate.json", to_json(&ValidateReport { config: args, score, spectral_radius, levels })?);
    if formats.contains(&Format::Csv) {
        out.add("detection_vs_noise.csv", csv);
    }
    Ok(out)
}

pub fn cmd_decompose(args: &DecomposeArgs, formats: &[Format]) -> Result<Outputs> {
    let text = fs::read_to_string(&args.edges)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.edges.display()))))?;
    let list: EdgeList = serde_json::from_str(&text).map_err(|e| Error::Format(format!("edge list: {e}")))?;
    let (labels, weights) = list.to_matrix()?;
    let network = CausalityNetwork::from_matrix(labels, weights)?;
    let d = decompose(&from_bidirectional(&network.cgc)?);
    let mut out = Outputs::default();
    out.add("decomposition.json", to_json(&DecompositionJson::new(&network.labels, &d))?);
    if formats.contains(&Format::Dot) {
        out.add("graph.dot", network_dot(&network, &d));
    }
    out.summary = format!("{} nodes, gamma {}", network.n_nodes(), d.gamma().map_or("undefined".into(), |g| format!("{g:.4}")));
    Ok(out)
}

/// Runs a parsed command line and writes its outputs.
pub fn run(cli: &Cli) -> Result<String> {
    let f = &cli.formats;
    let out = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, f)?,
        Command::Scan(a) => cmd_scan(a, f)?,
        Command::Null(a) => cmd_null(a, f)?,
        Command::Validate(a) => cmd_validate(a, f)?,
        Command::Decompose(a) => cmd_decompose(a, f)?,
    };
    out.write(&cli.out_dir)?;
    Ok(out.summary)
}
