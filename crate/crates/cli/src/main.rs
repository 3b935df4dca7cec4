use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use iotopo::error::Error;
use iotopo::harness::{self, ExperimentConfig, Positions};
use iotopo::radio::RadioParams;
use iotopo::rigidity::decompose;
use iotopo::scenario::{generate_annulus, generate_rectangle, measure, Scenario};
use iotopo::sync::{localize, LocalizeConfig};
use iotopo::topo::{Algorithm, MaxNtConfig, Network};

#[derive(Parser)]
#[command(name = "iotopo", version, about = "IoT localization and topology extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded deployment and its range measurements.
    Generate(GenerateArgs),
    /// Localize a scenario and report the RMS error against its truth.
    Localize(LocalizeArgs),
    /// Extract a topology from a scenario.
    Extract(ExtractArgs),
    /// Run a full experiment config.
    Experiment(ExperimentArgs),
    /// Render charts from a reports CSV.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Annulus,
    Rectangle,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "annulus")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    inner_km: f64,
    #[arg(long, default_value_t = 1.0)]
    outer_km: f64,
    #[arg(long, default_value_t = 1.0)]
    width_km: f64,
    #[arg(long, default_value_t = 1.0)]
    height_km: f64,
    /// Sensing range; defaults to the transmission range.
    #[arg(long)]
    range_km: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LocalizeArgs {
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    scenario: PathBuf,
    #[arg(long, default_value = "maxnttop")]
    algo: String,
    /// Experiment config supplying radio and solver settings, or `defaults`.
    #[arg(long, default_value = "defaults")]
    config: String,
    #[arg(long)]
    beta_db: Option<f64>,
    /// Use localized coordinates instead of the scenario's true positions.
    #[arg(long)]
    estimated: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's seed list with one seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restricts the run to one algorithm.
    #[arg(long)]
    algo: Option<String>,
    /// Replaces any sweep with one threshold.
    #[arg(long)]
    beta_db: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    csv: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn parse_algo(name: &str) -> Result<Algorithm, Error> {
    name.parse().map_err(|_| config_err("algo", format!("unknown algorithm {name:?}")))
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    let radio = RadioParams::default();
    let dep = match a.shape {
        ShapeArg::Annulus => generate_annulus(a.n, a.inner_km, a.outer_km, a.seed),
        ShapeArg::Rectangle => generate_rectangle(a.n, a.width_km, a.height_km, a.seed),
    }
    .map_err(|e| config_err("shape", e.to_string()))?;
    let range = a.range_km.unwrap_or_else(|| radio.transmission_range_km());
    let graph = measure(&dep, range, a.noise, a.seed).map_err(|e| config_err("range_km", e.to_string()))?;
    let sc = Scenario { deployment: dep, graph };
    emit(a.out.as_deref(), &serde_json::to_value(&sc)?)
}

fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    Scenario::load(path).map_err(|e| config_err(&path.display().to_string(), e.to_string()))
}

fn run_localize(a: LocalizeArgs) -> Result<(), Error> {
    let sc = load_scenario(&a.scenario)?;
    let mut res = localize(&sc.graph, &LocalizeConfig::default())?;
    let rms = res.evaluate(&sc.deployment.positions)?;
    log::info!("localized {} of {} nodes", res.localized_count(), res.coords.len());
    let value = serde_json::json!({
        "coords": res.coords,
        "component": res.component,
        "unlocalized": res.unlocalized,
        "rms_km": rms,
    });
    emit(a.out.as_deref(), &value)
}

fn extract(a: ExtractArgs) -> Result<(), Error> {
    let algo = parse_algo(&a.algo)?;
    let (mut radio, maxnt, step, loc) = if a.config == "defaults" {
        (RadioParams::default(), MaxNtConfig::default(), 0.01, LocalizeConfig::default())
    } else {
        let cfg = ExperimentConfig::load(Path::new(&a.config))?;
        (cfg.radio, cfg.maxnttop, cfg.brute_force_step_db, cfg.localize)
    };
    if let Some(b) = a.beta_db {
        radio = radio.with_beta(b);
        radio.validate()?;
    }
    let sc = load_scenario(&a.scenario)?;
    let net = if a.estimated {
        harness::prepare_network(&sc, &loc, Positions::Estimated)?.0
    } else {
        let base = Network::new(sc.deployment.positions.clone()).with_measurements(&sc.graph);
        match decompose(&sc.graph) {
            Ok(ps) => base.with_patches(&ps),
            Err(_) => base,
        }
    };
    let (topo, warn) = harness::extract(algo, &net, &radio, &maxnt, step)?;
    emit(a.out.as_deref(), &serde_json::to_value(&topo)?)?;
    match warn {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn experiment(a: ExperimentArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = a.seed {
        cfg.scenario.seeds = vec![seed];
    }
    if let Some(name) = &a.algo {
        cfg.algorithms = vec![parse_algo(name)?];
    }
    if let Some(b) = a.beta_db {
        cfg.sweep = None;
        cfg.radio.beta_db = b;
    }
    cfg.validate()?;
    let outcome = harness::run(&cfg)?;
    println!(
        "{} reports, {} failures, written to {}",
        outcome.reports.len(),
        outcome.failures.len(),
        cfg.output_dir.display()
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{} jobs failed", outcome.failures.len())))
    }
}

fn plot(a: PlotArgs) -> Result<(), Error> {
    let reports = harness::read_reports(&a.csv).map_err(|e| config_err(&a.csv.display().to_string(), e.to_string()))?;
    for f in harness::plot_reports(&reports, &a.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Localize(a) => run_localize(a),
        Command::Extract(a) => extract(a),
        Command::Experiment(a) => experiment(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
