//! Experiment runner: seeded scenario sweeps, CSV reports, topology dumps
//! and SVG charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::metrics::{aggregate, Metric, RunReport, SummaryRow};
use crate::radio::RadioParams;
use crate::rigidity::decompose;
use crate::scenario::{generate_annulus, generate_rectangle, measure, Deployment, MeasurementGraph, Scenario};
use crate::sync::{localize_patches, LocalizeConfig};
use crate::topo::{
    avg_node_degree, brute_force, lmst, max_nt_top, network_throughput, Algorithm, MaxNtConfig, Network, Topology,
};

/// Caps the worker pool when set to a positive integer.
pub const THREADS_ENV: &str = "IOTOPO_THREADS";

pub const REPORT_HEADER: [&str; 10] = [
    "scenario_id",
    "seed",
    "algo",
    "beta_db",
    "avg_degree",
    "throughput_total_bps",
    "throughput_per_link_bps",
    "rms_km",
    "iterations",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Annulus,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub shape: Shape,
    pub n: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub inner_km: f64,
    #[serde(default = "one")]
    pub outer_km: f64,
    #[serde(default = "one")]
    pub width_km: f64,
    #[serde(default = "one")]
    pub height_km: f64,
    /// Defaults to the transmission range at the power cap.
    #[serde(default)]
    pub sensing_range_km: Option<f64>,
    #[serde(default)]
    pub noise_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl ScenarioSpec {
    pub fn deploy(&self, seed: u64) -> Result<Deployment> {
        match self.shape {
            Shape::Annulus => generate_annulus(self.n, self.inner_km, self.outer_km, seed),
            Shape::Rectangle => generate_rectangle(self.n, self.width_km, self.height_km, seed),
        }
    }

    pub fn scenario(&self, seed: u64, radio: &RadioParams) -> Result<Scenario> {
        let deployment = self.deploy(seed)?;
        let range = self.sensing_range_km.unwrap_or_else(|| radio.transmission_range_km());
        let graph = measure(&deployment, range, self.noise_factor, seed)?;
        Ok(Scenario { deployment, graph })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSweep {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
}

impl Default for BetaSweep {
    fn default() -> Self {
        Self {
            start_db: 0.0,
            stop_db: 30.0,
            step_db: 2.5,
        }
    }
}

impl BetaSweep {
    /// Grid points from start to stop inclusive, computed by index so the
    /// values do not drift.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.start_db + k as f64 * self.step_db).collect()
    }
}

/// Which coordinates topology extraction sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Positions {
    #[default]
    Estimated,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub sweep: Option<BetaSweep>,
    #[serde(default)]
    pub maxnttop: MaxNtConfig,
    #[serde(default = "default_step")]
    pub brute_force_step_db: f64,
    #[serde(default)]
    pub localize: LocalizeConfig,
    #[serde(default)]
    pub positions: Positions,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub dump_topologies: bool,
    /// Record wall-clock time per job. Off by default so that reports are
    /// byte-reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_step() -> f64 {
    0.01
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Minimal config for one scenario shape with defaults elsewhere.
    pub fn new(name: &str, scenario: ScenarioSpec) -> Self {
        Self {
            name: name.into(),
            scenario,
            radio: RadioParams::default(),
            algorithms: default_algorithms(),
            sweep: None,
            maxnttop: MaxNtConfig::default(),
            brute_force_step_db: default_step(),
            localize: LocalizeConfig::default(),
            positions: Positions::default(),
            output_dir: default_out(),
            dump_topologies: true,
            timing: false,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)
                .map_err(|e| config_err(&format!("line {}", e.line()), e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| {
                let line = e
                    .span()
                    .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                    .map_or_else(|| "config".to_string(), |l| format!("line {l}"));
                config_err(&line, e.message().to_string())
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.seeds.is_empty() {
            return Err(config_err("scenario.seeds", "must not be empty"));
        }
        if s.n == 0 {
            return Err(config_err("scenario.n", "must be positive"));
        }
        match s.shape {
            Shape::Annulus if !(s.inner_km >= 0.0 && s.inner_km < s.outer_km) => {
                return Err(config_err("scenario.outer_km", "need 0 <= inner_km < outer_km"));
            }
            Shape::Rectangle if !(s.width_km > 0.0 && s.height_km > 0.0) => {
                return Err(config_err("scenario.width_km", "width and height must be positive"));
            }
            _ => {}
        }
        if let Some(r) = s.sensing_range_km {
            if !(r > 0.0) {
                return Err(config_err("scenario.sensing_range_km", "must be positive"));
            }
        }
        if !(s.noise_factor >= 0.0) {
            return Err(config_err("scenario.noise_factor", "must be nonnegative"));
        }
        self.radio.validate().map_err(|e| match e {
            Error::Config { field, message } => config_err(&format!("radio.{field}"), message),
            other => other,
        })?;
        if self.algorithms.is_empty() {
            return Err(config_err("algorithms", "must not be empty"));
        }
        if let Some(sw) = &self.sweep {
            if !(sw.step_db > 0.0) {
                return Err(config_err("sweep.step_db", "must be positive"));
            }
            if !(sw.stop_db >= sw.start_db) {
                return Err(config_err("sweep.stop_db", "must not be below start_db"));
            }
        }
        if !(self.maxnttop.eps > 0.0) {
            return Err(config_err("maxnttop.eps", "must be positive"));
        }
        if self.maxnttop.max_iters == 0 {
            return Err(config_err("maxnttop.max_iters", "must be positive"));
        }
        if !(self.brute_force_step_db > 0.0) {
            return Err(config_err("brute_force_step_db", "must be positive"));
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        match &self.sweep {
            Some(sw) => sw.points(),
            None => vec![self.radio.beta_db],
        }
    }
}

/// Topology for one algorithm; a non-converged MaxNTtop run still yields
/// its last topology together with the error.
pub fn extract(
    algo: Algorithm,
    net: &Network,
    radio: &RadioParams,
    maxnt: &MaxNtConfig,
    step_db: f64,
) -> Result<(Topology, Option<Error>)> {
    let t = match algo {
        Algorithm::MaxNTtop => match max_nt_top(net, radio, maxnt) {
            Ok(t) => t,
            Err(Error::NotConverged(t)) => {
                let err = Error::NotConverged(t.clone());
                return Ok((*t, Some(err)));
            }
            Err(e) => return Err(e),
        },
        Algorithm::Lmst => lmst(net, radio)?,
        Algorithm::BruteForce => brute_force(net, radio, step_db)?,
    };
    Ok((t, None))
}

/// Localizes a scenario and builds the network topology extraction sees.
pub fn prepare_network(
    sc: &Scenario,
    localize: &LocalizeConfig,
    positions: Positions,
) -> Result<(Network, f64)> {
    let mg: &MeasurementGraph = &sc.graph;
    let patches = decompose(mg)?;
    let mut loc = localize_patches(mg.node_count, patches.clone(), localize)?;
    let rms = loc.evaluate(&sc.deployment.positions)?;
    let base = match positions {
        Positions::Estimated => Network::from_localization(&loc),
        Positions::Truth => Network::new(sc.deployment.positions.clone()),
    };
    Ok((base.with_measurements(mg).with_patches(&patches), rms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub scenario_id: String,
    pub seed: u64,
    pub algo: String,
    pub beta_db: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub reports: Vec<RunReport>,
    pub failures: Vec<Failure>,
    pub files: Vec<PathBuf>,
}

fn nan_report(cfg: &ExperimentConfig, seed: u64, algo: Algorithm, beta: f64, message: String) -> RunReport {
    RunReport {
        scenario_id: cfg.name.clone(),
        seed,
        algo: algo.tag().into(),
        beta_db: beta,
        avg_degree: f64::NAN,
        throughput_total_bps: f64::NAN,
        throughput_per_link_bps: f64::NAN,
        rms_km: f64::NAN,
        iterations: 0,
        wall_ms: 0.0,
        failure: message,
    }
}

/// Runs the pool-bounded closure, honoring the worker cap.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Runs every seed x beta x algorithm job without touching the disk.
/// Reports come out ordered by seed, then beta, then algorithm.
pub fn run_jobs(cfg: &ExperimentConfig) -> Result<(Vec<RunReport>, Vec<Option<Topology>>)> {
    cfg.validate()?;
    let betas = cfg.betas();
    let prepared: Vec<(u64, Result<(Network, f64)>)> = with_pool(|| {
        cfg.scenario
            .seeds
            .par_iter()
            .map(|&seed| {
                let net = cfg
                    .scenario
                    .scenario(seed, &cfg.radio)
                    .and_then(|sc| prepare_network(&sc, &cfg.localize, cfg.positions));
                (seed, net)
            })
            .collect()
    });

    let mut jobs = Vec::new();
    for (k, (seed, _)) in prepared.iter().enumerate() {
        for &beta in &betas {
            for &algo in &cfg.algorithms {
                jobs.push((k, *seed, beta, algo));
            }
        }
    }
    let results: Vec<(RunReport, Option<Topology>)> = with_pool(|| {
        jobs.par_iter()
            .map(|&(k, seed, beta, algo)| {
                let (net, rms) = match &prepared[k].1 {
                    Ok(x) => x,
                    Err(e) => return (nan_report(cfg, seed, algo, beta, e.to_string()), None),
                };
                let radio = cfg.radio.with_beta(beta);
                let start = Instant::now();
                let (topo, warn) = match extract(algo, net, &radio, &cfg.maxnttop, cfg.brute_force_step_db) {
                    Ok(x) => x,
                    Err(e) => return (nan_report(cfg, seed, algo, beta, e.to_string()), None),
                };
                let wall_ms = if cfg.timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                let th = network_throughput(&topo, &radio);
                let report = RunReport {
                    scenario_id: cfg.name.clone(),
                    seed,
                    algo: algo.tag().into(),
                    beta_db: beta,
                    avg_degree: avg_node_degree(&topo).unwrap_or(0.0),
                    throughput_total_bps: th.total_bps,
                    throughput_per_link_bps: th.per_link_bps,
                    rms_km: *rms,
                    iterations: topo.iterations,
                    wall_ms,
                    failure: warn.map(|e| e.to_string()).unwrap_or_default(),
                };
                (report, Some(topo))
            })
            .collect()
    });
    Ok(results.into_iter().unzip())
}

/// Full run: jobs, then reports.csv, failures.csv, summary.csv, topology
/// JSON and SVG charts under the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let (reports, topologies) = run_jobs(cfg)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();

    let path = out.join("reports.csv");
    write_reports(&path, &reports)?;
    files.push(path);

    let failures: Vec<Failure> = reports
        .iter()
        .filter(|r| !r.failure.is_empty())
        .map(|r| Failure {
            scenario_id: r.scenario_id.clone(),
            seed: r.seed,
            algo: r.algo.clone(),
            beta_db: r.beta_db,
            message: r.failure.clone(),
        })
        .collect();
    if !failures.is_empty() {
        let path = out.join("failures.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["scenario_id", "seed", "algo", "beta_db", "message"])?;
        for f in &failures {
            log::warn!("{} seed {} {} beta {}: {}", f.scenario_id, f.seed, f.algo, f.beta_db, f.message);
            w.write_record([
                f.scenario_id.clone(),
                f.seed.to_string(),
                f.algo.clone(),
                f.beta_db.to_string(),
                f.message.clone(),
            ])?;
        }
        w.flush()?;
        files.push(path);
    }

    if cfg.dump_topologies {
        let dir = out.join("topologies");
        std::fs::create_dir_all(&dir)?;
        for (r, t) in reports.iter().zip(&topologies) {
            if let Some(t) = t {
                let path = dir.join(format!("{}_s{}_{}_b{}.json", r.scenario_id, r.seed, r.algo, r.beta_db));
                t.save(&path)?;
                files.push(path);
            }
        }
    }
    files.extend(plot_reports(&reports, out)?);
    Ok(RunOutcome {
        reports,
        failures,
        files,
    })
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

pub fn write_reports(path: &Path, reports: &[RunReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_reports_to(&mut w, reports)?;
    Ok(())
}

fn write_reports_to<W: std::io::Write>(w: &mut csv::Writer<W>, reports: &[RunReport]) -> Result<()> {
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.scenario_id.clone(),
            r.seed.to_string(),
            r.algo.clone(),
            fmt_num(r.beta_db),
            fmt_num(r.avg_degree),
            fmt_num(r.throughput_total_bps),
            fmt_num(r.throughput_per_link_bps),
            fmt_num(r.rms_km),
            r.iterations.to_string(),
            fmt_num(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn reports_to_string(reports: &[RunReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_reports_to(&mut w, reports)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

/// Reads reports.csv, checking the header.
pub fn read_reports(path: &Path) -> Result<Vec<RunReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != REPORT_HEADER {
        return Err(Error::Serde(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Charts from reports: bar charts of degree and throughput per algorithm,
/// or throughput-vs-beta lines when the reports span several betas. Also
/// writes summary.csv.
pub fn plot_reports(reports: &[RunReport], out: &Path) -> Result<Vec<PathBuf>> {
    let ok: Vec<RunReport> = reports.iter().filter(|r| !r.is_failure()).cloned().collect();
    if ok.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out)?;
    let rows = aggregate(&ok)?;
    let mut files = Vec::new();
    let path = out.join("summary.csv");
    write_summary(&path, &rows)?;
    files.push(path);

    let mut algos: Vec<String> = rows.iter().map(|r| r.algo.clone()).collect();
    algos.sort();
    algos.dedup();
    let mut betas: Vec<f64> = rows.iter().map(|r| r.beta_db).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let series = |metric: Metric| -> Vec<(String, Vec<(f64, f64)>)> {
        algos
            .iter()
            .map(|a| {
                let pts = rows
                    .iter()
                    .filter(|r| &r.algo == a && r.metric == metric)
                    .map(|r| (r.beta_db, r.mean))
                    .collect();
                (a.clone(), pts)
            })
            .collect()
    };
    let charts: Vec<(&str, Metric, &str)> = vec![
        ("degree", Metric::AvgDegree, "average node degree"),
        ("throughput_total", Metric::ThroughputTotal, "network throughput (b/s)"),
        ("throughput_per_link", Metric::ThroughputPerLink, "throughput per link (b/s)"),
    ];
    for (file, metric, label) in charts {
        let svg = if betas.len() > 1 {
            line_chart(label, "beta (dB)", label, &series(metric))
        } else {
            let bars: Vec<(String, f64)> = series(metric)
                .into_iter()
                .map(|(a, pts)| (a, pts.first().map_or(0.0, |p| p.1)))
                .collect();
            bar_chart(label, &bars)
        };
        let path = out.join(format!("fig_{file}.svg"));
        std::fs::write(&path, svg)?;
        files.push(path);
    }
    Ok(files)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn nice_max(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&v| v >= x)
        .unwrap_or(10.0 * mag)
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_axis(s: &mut String, ymax: f64) {
    let (x0, y0, y1) = (PAD, H - PAD, PAD);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - PAD);
    for k in 0..=5 {
        let v = ymax * k as f64 / 5.0;
        let y = y0 - (y0 - y1) * k as f64 / 5.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, short(v));
    }
}

fn short(v: f64) -> String {
    if v.abs() >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v.abs() >= 1e3 {
        format!("{:.1}k", v / 1e3)
    } else {
        format!("{v:.2}")
    }
}

pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = svg_open(title);
    let ymax = nice_max(bars.iter().map(|b| b.1).fold(0.0, f64::max));
    y_axis(&mut s, ymax);
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    for (k, (name, v)) in bars.iter().enumerate() {
        let h = (H - 2.0 * PAD) * v / ymax;
        let x = PAD + slot * k as f64 + slot * 0.2;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            H - PAD - h,
            slot * 0.6,
            COLORS[k % COLORS.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.3,
            H - PAD + 16.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = svg_open(title);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let xmin = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let ymax = nice_max(all.iter().map(|p| p.1).fold(0.0, f64::max));
    y_axis(&mut s, ymax);
    let px = |x: f64| PAD + (W - 2.0 * PAD) * (x - xmin) / xspan;
    let py = |y: f64| H - PAD - (H - 2.0 * PAD) * y / ymax;
    for k in 0..=5 {
        let x = xmin + xspan * k as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(x), H - PAD + 16.0, short(x));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        let ly = PAD + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 110.0,
            W - PAD - 90.0,
            W - PAD - 85.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Positions as an `[x, y]` list, for coordinate dumps.
pub fn coords_json(coords: &[Option<Point>]) -> serde_json::Value {
    serde_json::to_value(coords).unwrap_or(serde_json::Value::Null)
}
