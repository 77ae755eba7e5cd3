//! Monte Carlo experiments: a base model, one-parameter sweeps, a list of
//! methods and a number of replications.
//!
//! Every (grid point, replication) pair is an independent task whose data is
//! generated from `seed + replication`, so all methods and all grid points of
//! a replication see common random numbers. Tasks run through [`Exec`] and
//! results are collected in task order, which makes the output independent
//! of the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::CoupledData;
use crate::error::{PmtcError, Result};
use crate::factors::{estimate_latent, estimate_observed, per_asset_loadings, per_asset_ols, Averaging};
use crate::linalg::{lsvd, subspace_distance};
use crate::lloyd::Projection;
use crate::membership::Membership;
use crate::metrics::{cer, misclustering_loss, rescaled_core};
use crate::par::Exec;
use crate::pchooi::{pchooi, svd_outcome, PchooiOptions};
use crate::pipeline::{initialize, refine, spectral_outcome, FitOptions, Initialization};
use crate::simulate::{gen_pmtc, gen_subspace, gen_tensor_block, GroundTruth, SimDesign, SnrScale, SubspaceDesign, SubspaceTruth, TensorBlockDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    YSc,
    XHsc,
    XHscHLloyd,
    XHscPmtLloyd,
    XyPmtsc,
    XyPmtscHLloyd,
    XyPmtscPmtLloyd,
    Pchooi,
    Hooi,
    SvdY,
    /// Per-asset least squares without any grouping.
    Ungrouped,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::YSc,
        Method::XHsc,
        Method::XHscHLloyd,
        Method::XHscPmtLloyd,
        Method::XyPmtsc,
        Method::XyPmtscHLloyd,
        Method::XyPmtscPmtLloyd,
        Method::Pchooi,
        Method::Hooi,
        Method::SvdY,
        Method::Ungrouped,
    ];

    /// The six clustering methods compared on the coupled block model.
    pub const CLUSTERING: [Method; 6] = [
        Method::YSc,
        Method::XHscHLloyd,
        Method::XHscPmtLloyd,
        Method::XyPmtsc,
        Method::XyPmtscHLloyd,
        Method::XyPmtscPmtLloyd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::YSc => "Y: SC",
            Method::XHsc => "X: HSC",
            Method::XHscHLloyd => "X: HSC+HLloyd",
            Method::XHscPmtLloyd => "X: HSC+PMTLloyd",
            Method::XyPmtsc => "X+Y: PMTSC",
            Method::XyPmtscHLloyd => "X+Y: PMTSC+HLloyd",
            Method::XyPmtscPmtLloyd => "X+Y: PMTSC+PMTLloyd",
            Method::Pchooi => "PCHOOI",
            Method::Hooi => "HOOI",
            Method::SvdY => "SVD-Y",
            Method::Ungrouped => "No clustering",
        }
    }

    fn is_subspace(self) -> bool {
        matches!(self, Method::Pchooi | Method::Hooi | Method::SvdY)
    }

    fn uses_outcome(self) -> bool {
        matches!(self, Method::YSc | Method::XyPmtsc | Method::XyPmtscHLloyd | Method::XyPmtscPmtLloyd | Method::SvdY | Method::Ungrouped)
    }

    fn refinement(self) -> Option<Projection> {
        match self {
            Method::XHscHLloyd | Method::XyPmtscHLloyd => Some(Projection::Oblique),
            Method::XHscPmtLloyd | Method::XyPmtscPmtLloyd => Some(Projection::Orthogonal),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PmtcError;

    fn from_str(s: &str) -> Result<Self> {
        let key = |s: &str| s.chars().filter(|c| c.is_alphanumeric() || *c == '+').collect::<String>().to_lowercase();
        let wanted = key(s);
        Method::ALL.into_iter().find(|m| key(m.name()) == wanted).ok_or_else(|| PmtcError::UnknownMethod(s.to_string()))
    }
}

/// Data-generating model of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Pmtc(SimDesign),
    TensorBlock(TensorBlockDesign),
    Subspace(SubspaceDesign),
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(PmtcError::InvalidArgument(format!("{name} must be a positive integer, got {v}")))
    }
}

impl Model {
    /// Sets a named scalar parameter of the design.
    pub fn set_parameter(&mut self, name: &str, v: f64) -> Result<()> {
        let unknown = || PmtcError::InvalidArgument(format!("parameter `{name}` does not apply to this model"));
        match self {
            Model::Pmtc(d) => match name {
                "gamma_x" => d.gamma_x = v,
                "gamma_y" => d.gamma_y = v,
                "c_x" => d.c_x = v,
                "c_y" => d.c_y = v,
                "sigma_x" => d.sigma_x = v,
                "sigma_y" => d.sigma_y = v,
                "p" => d.dims.fill(as_count(name, v)?),
                "p1" => d.dims[0] = as_count(name, v)?,
                "periods" => d.periods = as_count(name, v)?,
                "rank" => d.ranks.fill(as_count(name, v)?),
                _ => return Err(unknown()),
            },
            Model::TensorBlock(d) => match name {
                "signal" => d.signal = v,
                "sigma" => d.sigma = v,
                "p" => d.dim = as_count(name, v)?,
                "rank" => d.clusters = as_count(name, v)?,
                "imbalance" => d.balance = vec![v, 1.0 - v],
                _ => return Err(unknown()),
            },
            Model::Subspace(d) => match name {
                "log_cx" => d.log_cx = v,
                "log_cy" => d.log_cy = v,
                "sigma_x" => d.sigma_x = v,
                "sigma_y" => d.sigma_y = v,
                "p" => d.dims.fill(as_count(name, v)?),
                "p1" => d.dims[0] = as_count(name, v)?,
                "periods" => d.periods = as_count(name, v)?,
                "rank" => d.ranks.fill(as_count(name, v)?),
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Model::Pmtc(d) => d.seed = seed,
            Model::TensorBlock(d) => d.seed = seed,
            Model::Subspace(d) => d.seed = seed,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Model::Pmtc(d) => d.validate(),
            Model::TensorBlock(d) => d.validate(),
            Model::Subspace(d) => d.validate(),
        }
    }

    fn supports(&self, m: Method) -> bool {
        match self {
            Model::Pmtc(_) => !m.is_subspace(),
            Model::TensorBlock(_) => !m.is_subspace() && !m.uses_outcome(),
            Model::Subspace(_) => m.is_subspace(),
        }
    }
}

/// A one-parameter sweep with optional fixed overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    pub parameter: String,
    pub values: Vec<f64>,
}

/// One plot-data file: mean `metric` on `mode` against the scenario's
/// parameter, one column per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub scenario: String,
    pub metric: String,
    pub mode: usize,
}

impl Panel {
    pub fn file_name(&self) -> String {
        format!("{}_{}_mode{}.csv", self.scenario, self.metric, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub model: Model,
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<String>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Lloyd iterations; unset means `2⌈ln p̄⌉`.
    #[serde(default)]
    pub lloyd_iter: Option<usize>,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default)]
    pub panels: Vec<Panel>,
}

fn default_omega() -> f64 {
    1.0
}

fn default_restarts() -> usize {
    crate::kmeans::DEFAULT_RESTARTS
}

/// A model at one grid point.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub experiment_id: String,
    pub scenario: String,
    pub parameter: String,
    pub value: f64,
    pub model: Model,
}

impl ExperimentConfig {
    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|s| s.parse()).collect()
    }

    /// Expands the scenarios into validated grid points.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let mut out = Vec::new();
        for s in &self.scenarios {
            for &v in &s.values {
                let mut model = self.model.clone();
                for (k, &fv) in &s.fixed {
                    model.set_parameter(k, fv)?;
                }
                model.set_parameter(&s.parameter, v)?;
                model.validate()?;
                out.push(GridPoint {
                    experiment_id: format!("{}/{}/{}={}", self.id, s.name, s.parameter, v),
                    scenario: s.name.clone(),
                    parameter: s.parameter.clone(),
                    value: v,
                    model,
                });
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(PmtcError::InvalidArgument("replications must be positive".into()));
        }
        if self.scenarios.is_empty() || self.scenarios.iter().any(|s| s.values.is_empty()) {
            return Err(PmtcError::InvalidArgument("every experiment needs at least one grid point".into()));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(PmtcError::InvalidArgument(format!("coupling weight must be nonnegative, got {}", self.omega)));
        }
        let methods = self.parsed_methods()?;
        if methods.is_empty() {
            return Err(PmtcError::InvalidArgument("no methods requested".into()));
        }
        if let Some(m) = methods.iter().find(|m| !self.model.supports(**m)) {
            return Err(PmtcError::InvalidArgument(format!("method `{m}` does not apply to this model")));
        }
        for p in &self.panels {
            if !self.scenarios.iter().any(|s| s.name == p.scenario) {
                return Err(PmtcError::InvalidArgument(format!("panel refers to unknown scenario `{}`", p.scenario)));
            }
        }
        self.grid().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub experiment_id: String,
    pub method: Method,
    pub replication: usize,
    /// 1-based mode index.
    pub mode: usize,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub grid: Vec<GridPoint>,
    pub records: Vec<Record>,
}

struct Ctx<'a> {
    id: &'a str,
    replication: usize,
    out: Vec<Record>,
}

impl Ctx<'_> {
    fn push(&mut self, method: Method, mode: usize, metric: &'static str, value: f64) {
        self.out.push(Record { experiment_id: self.id.to_string(), method, replication: self.replication, mode, metric, value });
    }
}

fn fit_options(cfg: &ExperimentConfig, clusters: Vec<usize>, use_outcome: bool, seed: u64) -> FitOptions {
    FitOptions {
        omega: cfg.omega,
        use_outcome,
        lloyd_iter: cfg.lloyd_iter,
        kmeans_restarts: cfg.kmeans_restarts,
        ..FitOptions::new(clusters, seed)
    }
}

fn clustering_metrics(ctx: &mut Ctx, method: Method, est: &[Membership], initial: &[Membership], truth: &GroundTruth, with_outcome: bool) -> Result<()> {
    // a single-mode estimate (outcome-only clustering) is scored on mode 1
    for (i, (m, t)) in est.iter().zip(&truth.memberships).enumerate() {
        let (rate, _) = cer(m, t)?;
        let (_, perm0) = cer(&initial[i], t)?;
        let centers = rescaled_core(&truth.core, &truth.memberships, i)?;
        let outcome = (i == 0 && with_outcome).then_some(&truth.outcome_centers);
        let loss = misclustering_loss(m, t, &perm0, &centers, outcome)?;
        ctx.push(method, i + 1, "cer", rate);
        ctx.push(method, i + 1, "misclustering_loss", loss);
    }
    Ok(())
}

fn loading_metrics(ctx: &mut Ctx, method: Method, m1: &Membership, data: &CoupledData, truth: &GroundTruth) -> Result<()> {
    let y = data.y.as_ref().expect("coupled model has an outcome panel");
    let true_asset = per_asset_loadings(&truth.loadings, &truth.memberships[0])?;
    let observed = estimate_observed(y, m1, &truth.factors, true, Averaging::GroupMean)?;
    let asset = per_asset_loadings(&observed.loadings, m1)?;
    ctx.push(method, 1, "loading_err_observed", (&asset - &true_asset).norm());
    let (_, perm) = cer(m1, &truth.memberships[0])?;
    let aligned = nalgebra::DMatrix::from_fn(truth.loadings.nrows(), truth.loadings.ncols(), |b, k| observed.loadings[(perm[b], k)]);
    ctx.push(method, 1, "loading_group_err", (aligned - &truth.loadings).norm());

    let m = truth.loadings.ncols().min(m1.num_clusters());
    let latent = estimate_latent(y, m1, m, Averaging::GroupMean)?;
    let est_space = lsvd(&per_asset_loadings(&latent.loadings, m1)?, m)?;
    let true_space = lsvd(&true_asset, m)?;
    ctx.push(method, 1, "loading_err_latent", subspace_distance(&est_space, &true_space)?);
    Ok(())
}

fn run_clustering(cfg: &ExperimentConfig, methods: &[Method], data: &CoupledData, truth: &GroundTruth, ctx: &mut Ctx, seed: u64) -> Result<()> {
    let clusters: Vec<usize> = truth.memberships.iter().map(Membership::num_clusters).collect();
    let has_outcome = data.y.is_some();
    let mut inits: [Option<Initialization>; 2] = [None, None];
    for &method in methods {
        if method == Method::Ungrouped {
            let y = data.y.as_ref().expect("coupled model has an outcome panel");
            let est = per_asset_ols(y, &truth.factors, true)?;
            let true_asset = per_asset_loadings(&truth.loadings, &truth.memberships[0])?;
            ctx.push(method, 1, "loading_err_observed", (est - true_asset).norm());
            continue;
        }
        if method == Method::YSc {
            let y = data.y.as_ref().expect("coupled model has an outcome panel");
            let m = spectral_outcome(y, clusters[0], clusters[0], cfg.kmeans_restarts, seed)?;
            let single = [m];
            clustering_metrics(ctx, method, &single, &single, truth, true)?;
            loading_metrics(ctx, method, &single[0], data, truth)?;
            continue;
        }
        let coupled = method.uses_outcome();
        let slot = usize::from(coupled);
        let opts = FitOptions { refine: method.refinement(), ..fit_options(cfg, clusters.clone(), coupled, seed) };
        if inits[slot].is_none() {
            inits[slot] = Some(initialize(data, &opts)?);
        }
        let est = refine(data, inits[slot].as_ref().unwrap(), &opts)?;
        clustering_metrics(ctx, method, &est.memberships, &est.initial, truth, has_outcome)?;
        if has_outcome {
            loading_metrics(ctx, method, &est.memberships[0], data, truth)?;
        }
    }
    Ok(())
}

fn run_subspace(cfg: &ExperimentConfig, methods: &[Method], data: &CoupledData, truth: &SubspaceTruth, ctx: &mut Ctx) -> Result<()> {
    let ranks: Vec<usize> = truth.bases.iter().map(|b| b.cols()).collect();
    for &method in methods {
        let bases = match method {
            Method::Pchooi => pchooi(data, &PchooiOptions { omega: cfg.omega, ..PchooiOptions::new(ranks.clone()) })?.bases,
            Method::Hooi => pchooi(data, &PchooiOptions::hooi(ranks.clone()))?.bases,
            Method::SvdY => vec![svd_outcome(data, ranks[0])?],
            _ => unreachable!("validated against the model"),
        };
        for (i, (b, u)) in bases.iter().zip(&truth.bases).enumerate() {
            ctx.push(method, i + 1, "subspace_dist", subspace_distance(b, u)?);
        }
    }
    Ok(())
}

fn run_task(cfg: &ExperimentConfig, methods: &[Method], point: &GridPoint, replication: usize) -> Result<Vec<Record>> {
    let seed = cfg.seed.wrapping_add(replication as u64);
    let mut model = point.model.clone();
    model.set_seed(seed);
    let mut ctx = Ctx { id: &point.experiment_id, replication, out: Vec::new() };
    match &model {
        Model::Pmtc(d) => {
            let (data, truth) = gen_pmtc(d)?;
            run_clustering(cfg, methods, &data, &truth, &mut ctx, seed)?;
        }
        Model::TensorBlock(d) => {
            let (data, truth) = gen_tensor_block(d)?;
            run_clustering(cfg, methods, &data, &truth, &mut ctx, seed)?;
        }
        Model::Subspace(d) => {
            let (data, truth) = gen_subspace(d)?;
            run_subspace(cfg, methods, &data, &truth, &mut ctx)?;
        }
    }
    Ok(ctx.out)
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let methods = cfg.parsed_methods()?;
    let grid = cfg.grid()?;
    let reps = cfg.replications;
    let results = exec.map_range(grid.len() * reps, |task| run_task(cfg, &methods, &grid[task / reps], task % reps));
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    Ok(ExperimentOutput { grid, records })
}

pub fn write_results_csv<W: Write>(records: &[Record], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["experiment_id", "method", "replication", "mode", "metric", "value"])?;
    for r in records {
        w.write_record([
            r.experiment_id.as_str(),
            r.method.name(),
            &r.replication.to_string(),
            &r.mode.to_string(),
            r.metric,
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean, Monte Carlo standard error and count of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, se: (var / n.max(1) as f64).sqrt(), n }
    }
}

pub type SummaryKey = (String, Method, usize, &'static str);

/// Per (experiment_id, method, mode, metric) summaries.
pub fn summarize(records: &[Record]) -> BTreeMap<SummaryKey, Summary> {
    let mut groups: BTreeMap<SummaryKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((r.experiment_id.clone(), r.method, r.mode, r.metric)).or_default().push(r.value);
    }
    groups.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect()
}

/// Values of one metric by replication, for paired comparisons.
pub fn values_by_replication(records: &[Record], experiment_id: &str, method: Method, mode: usize, metric: &str) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.experiment_id == experiment_id && r.method == method && r.mode == mode && r.metric == metric)
        .map(|r| (r.replication, r.value))
        .collect();
    v.sort_by_key(|(rep, _)| *rep);
    v
}

/// Plot-data table for a panel: one row per grid value, one column of
/// means per method that reported the metric.
pub fn write_panel_csv<W: Write>(panel: &Panel, output: &ExperimentOutput, methods: &[Method], writer: W) -> Result<()> {
    let summaries = summarize(&output.records);
    let points: Vec<&GridPoint> = output.grid.iter().filter(|g| g.scenario == panel.scenario).collect();
    let parameter = points.first().map_or("x", |g| g.parameter.as_str());
    let columns: Vec<Method> = methods
        .iter()
        .copied()
        .filter(|m| summaries.keys().any(|(_, km, kmode, kmet)| km == m && *kmode == panel.mode && *kmet == panel.metric))
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![parameter.to_string()];
    header.extend(columns.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    for g in points {
        let mut row = vec![g.value.to_string()];
        for m in &columns {
            let key = (g.experiment_id.clone(), *m, panel.mode, metric_name(&panel.metric));
            row.push(summaries.get(&key).map_or(String::new(), |s| s.mean.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

const METRICS: [&str; 6] = ["cer", "misclustering_loss", "loading_err_observed", "loading_group_err", "loading_err_latent", "subspace_dist"];

fn metric_name(s: &str) -> &'static str {
    METRICS.iter().find(|m| **m == s).copied().unwrap_or("")
}

/// Writes `results.csv` and one plot-data file per panel into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let methods = cfg.parsed_methods()?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    write_results_csv(&output.records, std::io::BufWriter::new(std::fs::File::create(&results)?))?;
    written.push(results);
    for panel in &cfg.panels {
        let path = dir.join(panel.file_name());
        write_panel_csv(panel, output, &methods, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

fn steps(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).round() as usize;
    (0..=n).map(|k| ((start + k as f64 * step) * 1e6).round() / 1e6).collect()
}

fn scenario(name: &str, fixed: &[(&str, f64)], parameter: &str, values: Vec<f64>) -> Scenario {
    Scenario {
        name: name.into(),
        fixed: fixed.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        parameter: parameter.into(),
        values,
    }
}

fn panels(scenarios: &[Scenario], metrics: &[(&str, usize)]) -> Vec<Panel> {
    let mut out = Vec::new();
    for (metric, mode) in metrics {
        for s in scenarios {
            out.push(Panel { scenario: s.name.clone(), metric: metric.to_string(), mode: *mode });
        }
    }
    out
}

fn names(methods: &[Method]) -> Vec<String> {
    methods.iter().map(|m| m.name().to_string()).collect()
}

pub const PRESETS: [&str; 10] = ["fig1", "figA2", "fig2", "fig3", "figA1", "figA3", "figA4", "figA5", "figA6", "figA7"];

fn coupled_preset(id: &str, base: SimDesign, gy: (f64, Vec<f64>), gx: (f64, Vec<f64>), loadings: bool) -> ExperimentConfig {
    let scenarios = vec![
        scenario("vary_gamma_y", &[("gamma_x", gy.0)], "gamma_y", gy.1),
        scenario("vary_gamma_x", &[("gamma_y", gx.0)], "gamma_x", gx.1),
    ];
    let (methods, metric_panels) = if loadings {
        let mut m = Method::CLUSTERING.to_vec();
        m.push(Method::Ungrouped);
        (m, vec![("loading_err_observed", 1), ("loading_err_latent", 1)])
    } else {
        (Method::CLUSTERING.to_vec(), vec![("cer", 1), ("cer", 2)])
    };
    ExperimentConfig {
        id: id.into(),
        model: Model::Pmtc(SimDesign { snr_x_scale: SnrScale::Core, ..base }),
        panels: panels(&scenarios, &metric_panels),
        scenarios,
        methods: names(&methods),
        replications: 100,
        seed: 0,
        omega: 1.0,
        lloyd_iter: None,
        kmeans_restarts: crate::kmeans::DEFAULT_RESTARTS,
    }
}

/// Named configurations reproducing the simulation figures.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let main_gy = (-0.5, steps(-0.45, 0.10, 0.05));
    let main_gx = (-0.1, steps(-0.7, -0.3, 0.05));
    let subspace = |id: &str, scenarios: Vec<Scenario>| {
        let panels = panels(&scenarios, &[("subspace_dist", 1), ("subspace_dist", 2)]);
        ExperimentConfig {
            id: id.into(),
            model: Model::Subspace(SubspaceDesign::default()),
            scenarios,
            methods: names(&[Method::Pchooi, Method::Hooi, Method::SvdY]),
            replications: 100,
            seed: 0,
            omega: 1.0,
            lloyd_iter: None,
            kmeans_restarts: crate::kmeans::DEFAULT_RESTARTS,
            panels,
        }
    };
    let imbalanced = SimDesign { balance: vec![vec![0.1, 0.1, 0.15, 0.2, 0.45]; 2], ..SimDesign::default() };
    Ok(match name {
        "fig1" => subspace(
            name,
            vec![
                scenario("vary_log_cy", &[("log_cx", 1.0)], "log_cy", steps(1.0, 3.0, 0.25)),
                scenario("vary_log_cx", &[("log_cy", 2.0)], "log_cx", steps(0.0, 2.0, 0.25)),
            ],
        ),
        "figA2" => subspace(name, vec![scenario("vary_rank", &[("log_cx", 0.0), ("log_cy", 1.0)], "rank", steps(2.0, 13.0, 1.0))]),
        "fig2" | "fig3" => coupled_preset(name, SimDesign::default(), main_gy, main_gx, name == "fig3"),
        "figA3" | "figA4" => coupled_preset(
            name,
            SimDesign::default(),
            (-0.55, steps(-0.45, 0.95, 0.1).into_iter().chain([1.0]).collect()),
            (-0.2, steps(-0.7, -0.04, 0.06)),
            name == "figA4",
        ),
        "figA5" | "figA6" => coupled_preset(name, imbalanced, (-0.5, steps(-0.4, 0.1, 0.05)), (-0.1, steps(-0.7, 0.4, 0.1)), name == "figA6"),
        "figA7" | "figA8" => coupled_preset(name, SimDesign::default().with_size(100, 60), main_gy, main_gx, name == "figA8"),
        "figA1" => {
            let signal = steps(0.02, 0.2, 0.02);
            let scenarios = vec![
                scenario("balanced_p80", &[("p", 80.0), ("rank", 5.0)], "signal", signal.clone()),
                scenario("balanced_p100", &[("p", 100.0), ("rank", 5.0)], "signal", signal.clone()),
                scenario("imbalanced_15", &[("p", 100.0), ("rank", 2.0), ("imbalance", 0.15)], "signal", signal.clone()),
                scenario("imbalanced_25", &[("p", 100.0), ("rank", 2.0), ("imbalance", 0.25)], "signal", signal),
            ];
            ExperimentConfig {
                id: name.into(),
                model: Model::TensorBlock(TensorBlockDesign::default()),
                panels: panels(&scenarios, &[("cer", 1)]),
                scenarios,
                methods: names(&[Method::XHsc, Method::XHscHLloyd, Method::XHscPmtLloyd]),
                replications: 100,
                seed: 0,
                omega: 1.0,
                lloyd_iter: None,
                kmeans_restarts: crate::kmeans::DEFAULT_RESTARTS,
            }
        }
        _ => return Err(PmtcError::InvalidArgument(format!("unknown preset `{name}`"))),
    })
}
