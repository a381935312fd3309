//! Command-line front end: `simulate`, `train`, `predict` and `evaluate`.
//!
//! Settings come from flags, then an optional TOML file (`--config`), then defaults.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_model::{
    cutoff_at_fraction, parse_journeys, parse_station_features, parse_train_metadata, segregate, Journey,
    KnownSelector, SegregateParams, StationTable, TrainMetadata, TrainTable,
};
use crate::evaluation::{
    run_experiments, write_ci_table, write_order_table, write_rmse_table, CiMethod, ExperimentData, ExperimentParams,
    ExperimentResult, IntervalTable, NObsSource,
};
use crate::feature_frames::{FeatureProfile, RouteStop, MAX_ORDER};
use crate::omlmpf::{
    train_models, ModelKind, ModelRegistry, OmlmpfError, PredictConfig, Predictor, RouteInput, TrainParams,
    MANIFEST_FILE,
};
use crate::railsim::{simulate, SimConfig};
use crate::regressors::{ForestParams, RidgeParams};
use crate::station_knn::KnnConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Fraction of known-train journeys that fall on or before the default cutoff.
pub const DEFAULT_CUTOFF_FRACTION: f64 = 0.8;
pub const DEFAULT_MIN_JOURNEYS: usize = 10;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime<E: Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "railmarkov",
    version,
    about = "Train delay prediction with n-order Markov station models"
)]
pub struct Cli {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic network and journeys.
    Simulate(SimulateArgs),
    /// Train station models and write an archive.
    Train(TrainArgs),
    /// Predict late minutes along one route with a trained archive.
    Predict(PredictArgs),
    /// Run experiments and write coverage, RMSE and order-selection tables.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ground-truth Markov order of the delay dynamics.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=3))]
    pub order: Option<u64>,
    /// Number of known trains.
    #[arg(long)]
    pub trains: Option<usize>,
    #[arg(long)]
    pub unknown_trains: Option<usize>,
    #[arg(long)]
    pub stations: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Directory holding journeys.csv, stations.csv and trains.csv.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub journeys: Option<PathBuf>,
    #[arg(long = "stations", value_name = "PATH")]
    pub stations: Option<PathBuf>,
    #[arg(long = "trains", value_name = "PATH")]
    pub trains: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SplitArgs {
    /// Trains with at least this many journeys are known.
    #[arg(long)]
    pub min_journeys: Option<usize>,
    /// Comma-separated known trains; overrides --min-journeys.
    #[arg(long, value_delimiter = ',')]
    pub known_trains: Option<Vec<String>>,
    /// Last start date of training and cross-validation journeys (YYYY-MM-DD).
    #[arg(long)]
    pub cv_cutoff: Option<NaiveDate>,
    #[arg(long)]
    pub holdout_ratio: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub profile: Option<FeatureProfile>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Highest order to train, 1..=5.
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Archive directory to write.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    pub archive: Option<PathBuf>,
    /// CSV with `station_code,distance_km` and an optional `latemin` column.
    #[arg(long, value_name = "PATH")]
    pub route: PathBuf,
    #[arg(long)]
    pub date: NaiveDate,
    #[arg(long)]
    pub train: String,
    #[arg(long)]
    pub journey_id: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Order cap N.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Comma-separated experiment ids, 1..=4.
    #[arg(long, value_delimiter = ',')]
    pub experiment: Option<Vec<u8>>,
    /// Reuse a trained archive for experiments of its profile.
    #[arg(long, value_name = "DIR")]
    pub archive: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated orders to run.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Interval half-width: `spread` (z·s) or `standard_error` (z·s/√n).
    #[arg(long)]
    pub ci_method: Option<String>,
    /// Observation count in AIC/BIC: `evaluation` or `training`.
    #[arg(long)]
    pub n_obs: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// File-based settings. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub journeys: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub trains: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub profile: Option<FeatureProfile>,
    pub order: Option<usize>,
    pub model: Option<ModelKind>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub features_per_split: Option<f64>,
    pub lambda: Option<f64>,
    pub n_max: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub experiments: Option<Vec<u8>>,
    pub orders: Option<Vec<usize>>,
    pub min_journeys: Option<usize>,
    pub known_trains: Option<Vec<String>>,
    pub cv_cutoff: Option<NaiveDate>,
    pub holdout_ratio: Option<f64>,
    pub ci_method: Option<CiMethod>,
    pub n_obs: Option<NObsSource>,
    pub simulate: Option<SimConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, &cfg),
        Command::Train(a) => cmd_train(&a, &cfg),
        Command::Predict(a) => cmd_predict(&a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(&a, &cfg),
    }
}

fn out_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| usage("an output directory is required (--out)"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut json = serde_json::to_vec_pretty(value).map_err(runtime)?;
    json.push(b'\n');
    write_file(path, &json)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

// --- simulate --------------------------------------------------------------------------

pub fn cmd_simulate(a: &SimulateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mut sim = cfg.simulate.clone().unwrap_or_default();
    if let Some(seed) = a.seed.or(cfg.seed) {
        sim.seed = seed;
    }
    if let Some(order) = a.order {
        sim.ground_truth_order = order as usize;
        sim.propagation = SimConfig::default_propagation(order as usize);
    }
    if let Some(n) = a.trains {
        sim.n_known_trains = n;
    }
    if let Some(n) = a.unknown_trains {
        sim.n_unknown_trains = n;
    }
    if let Some(n) = a.stations {
        sim.n_stations = n;
    }
    if let Some(s) = a.noise {
        sim.noise_sigma = s;
    }
    sim.fill_propagation();
    sim.validate().map_err(|e| usage(e.to_string()))?;
    let out = out_dir(&a.out, cfg)?;
    let data = simulate(&sim).map_err(runtime)?;
    data.write_to(&out).map_err(runtime)?;
    println!(
        "simulated {} stations, {} known and {} unknown trains, {} journeys into {}",
        data.network.stations.len(),
        data.network.known_trains.len(),
        data.network.unknown_trains.len(),
        data.journeys.len(),
        out.display()
    );
    Ok(())
}

// --- data loading ----------------------------------------------------------------------

struct Inputs {
    journeys: Vec<Journey>,
    stations: StationTable,
    trains: TrainTable,
}

fn resolve(flag: &Option<PathBuf>, conf: &Option<PathBuf>, dir: Option<&PathBuf>, name: &str) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| conf.clone())
        .or_else(|| dir.map(|d| d.join(name)))
}

fn existing(path: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let path = path.ok_or_else(|| usage(format!("no {what} file given (--data or --{what})")))?;
    if !path.is_file() {
        return Err(usage(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path)
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_stations(data: &DataArgs, cfg: &RunConfig) -> Result<StationTable, CliError> {
    let dir = data.data.as_ref().or(cfg.data.as_ref());
    let path = existing(resolve(&data.stations, &cfg.stations, dir, "stations.csv"), "stations")?;
    parse_station_features(open(&path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Train metadata is optional; unlisted trains get default metadata.
fn read_trains(data: &DataArgs, cfg: &RunConfig, required: bool) -> Result<TrainTable, CliError> {
    let dir = data.data.as_ref().or(cfg.data.as_ref());
    let path = resolve(&data.trains, &cfg.trains, dir, "trains.csv");
    match path {
        Some(p) if p.is_file() => parse_train_metadata(open(&p)?).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        Some(p) if required => Err(usage(format!("trains file {} does not exist", p.display()))),
        _ => Ok(TrainTable::default()),
    }
}

fn read_inputs(data: &DataArgs, cfg: &RunConfig) -> Result<Inputs, CliError> {
    let dir = data.data.as_ref().or(cfg.data.as_ref());
    let journeys_path = existing(resolve(&data.journeys, &cfg.journeys, dir, "journeys.csv"), "journeys")?;
    let stations = read_stations(data, cfg)?;
    let trains = read_trains(data, cfg, true)?;
    let journeys =
        parse_journeys(open(&journeys_path)?).map_err(|e| runtime(format!("{}: {e}", journeys_path.display())))?;
    Ok(Inputs {
        journeys,
        stations,
        trains,
    })
}

fn segregation_params(
    split: &SplitArgs,
    cfg: &RunConfig,
    journeys: &[Journey],
    seed: u64,
) -> Result<SegregateParams, CliError> {
    let selector = match split.known_trains.clone().or_else(|| cfg.known_trains.clone()) {
        Some(list) => KnownSelector::Explicit(list.into_iter().collect()),
        None => KnownSelector::MinJourneys(split.min_journeys.or(cfg.min_journeys).unwrap_or(DEFAULT_MIN_JOURNEYS)),
    };
    let cv_cutoff = match split.cv_cutoff.or(cfg.cv_cutoff) {
        Some(d) => d,
        None => cutoff_at_fraction(journeys, &selector, DEFAULT_CUTOFF_FRACTION)
            .ok_or_else(|| runtime("no known-train journeys to train on"))?,
    };
    let holdout_ratio = split
        .holdout_ratio
        .or(cfg.holdout_ratio)
        .unwrap_or(SegregateParams::DEFAULT_HOLDOUT);
    if !(0.0..1.0).contains(&holdout_ratio) {
        return Err(usage(format!("holdout ratio {holdout_ratio} outside [0, 1)")));
    }
    Ok(SegregateParams {
        selector,
        cv_cutoff,
        holdout_ratio,
        seed,
    })
}

fn train_params(m: &ModelArgs, cfg: &RunConfig) -> Result<TrainParams, CliError> {
    let forest_default = ForestParams::default();
    let forest = ForestParams {
        n_trees: m.n_trees.or(cfg.n_trees).unwrap_or(forest_default.n_trees),
        max_depth: m.max_depth.or(cfg.max_depth),
        features_per_split: m
            .features_per_split
            .or(cfg.features_per_split)
            .unwrap_or(forest_default.features_per_split),
        seed: m.seed.or(cfg.seed).unwrap_or(forest_default.seed),
        ..forest_default
    };
    if forest.n_trees == 0 {
        return Err(usage("--n-trees must be >= 1"));
    }
    if !(forest.features_per_split > 0.0 && forest.features_per_split <= 1.0) {
        return Err(usage("--features-per-split must be in (0, 1]"));
    }
    let ridge = RidgeParams {
        lambda: m.lambda.or(cfg.lambda).unwrap_or(RidgeParams::default().lambda),
        ..RidgeParams::default()
    };
    if ridge.lambda.is_nan() || ridge.lambda < 0.0 {
        return Err(usage("--lambda must be >= 0"));
    }
    let n_max = m.n_max.or(cfg.n_max).unwrap_or(MAX_ORDER);
    if !(1..=MAX_ORDER).contains(&n_max) {
        return Err(usage(format!("--n-max {n_max} outside 1..={MAX_ORDER}")));
    }
    Ok(TrainParams {
        profile: m.profile.or(cfg.profile).unwrap_or(FeatureProfile::Numeric),
        forest,
        ridge,
        n_max,
    })
}

// --- train -----------------------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cmd_train(a: &TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let params = train_params(&a.model, cfg)?;
    let out = out_dir(&a.out, cfg)?;
    let inputs = read_inputs(&a.data, cfg)?;
    let seg = segregation_params(&a.split, cfg, &inputs.journeys, params.forest.seed)?;
    let split = segregate(&inputs.journeys, &seg).map_err(runtime)?;
    if split.known_train.is_empty() {
        return Err(runtime("no training journeys after segregation"));
    }
    let mut registry = train_models(&split, &inputs.stations, &inputs.trains, &params).map_err(runtime)?;
    registry.segregation = Some(seg);
    registry.save(&out).map_err(runtime)?;
    let manifest = fs::read(out.join(MANIFEST_FILE)).map_err(runtime)?;
    println!(
        "trained {} models from {} journeys of {} known trains ({} profile)",
        registry.models.len(),
        split.known_train.len(),
        split.known_trains.len(),
        params.profile.as_str()
    );
    for (order, list) in &registry.ips_lists {
        println!("order {order} ips_list size {}", list.len());
    }
    println!("manifest sha256 {}", sha256_hex(&manifest));
    Ok(())
}

// --- predict ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RouteRow {
    station_code: String,
    distance_km: f64,
    #[serde(default)]
    latemin: Option<f64>,
}

fn read_route(path: &Path) -> Result<(Vec<RouteStop>, Option<Vec<f64>>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("route file {}: {e}", path.display())))?;
    let mut stops = Vec::new();
    let mut late = Vec::new();
    for row in reader.deserialize::<RouteRow>() {
        let row = row.map_err(|e| runtime(format!("route file {}: {e}", path.display())))?;
        stops.push(RouteStop {
            station_code: row.station_code,
            dfs_km: row.distance_km,
        });
        late.push(row.latemin);
    }
    let actuals = late
        .iter()
        .all(Option::is_some)
        .then(|| late.into_iter().flatten().collect());
    Ok((stops, actuals))
}

#[derive(Debug, Serialize)]
struct PredictSummary<'a> {
    train_number: &'a str,
    journey_id: &'a str,
    date: NaiveDate,
    n: usize,
    model_kind: ModelKind,
    stops: usize,
    fallbacks: Vec<FallbackNote<'a>>,
    total_predicted_late: f64,
    rmse: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FallbackNote<'a> {
    position: usize,
    station: &'a str,
    order: usize,
    used: &'a str,
    geo_km: f64,
    feature_distance: f64,
}

pub fn cmd_predict(a: &PredictArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let archive = a
        .archive
        .clone()
        .or_else(|| cfg.archive.clone())
        .ok_or_else(|| usage("an archive directory is required (--archive)"))?;
    if !archive.join(MANIFEST_FILE).is_file() {
        return Err(usage(format!("{} is not a model archive", archive.display())));
    }
    if !a.route.is_file() {
        return Err(usage(format!("route file {} does not exist", a.route.display())));
    }
    let out = out_dir(&a.out, cfg)?;
    let registry = ModelRegistry::load(&archive).map_err(runtime)?;
    let pcfg = PredictConfig {
        n: a.order
            .or(cfg.order)
            .unwrap_or(PredictConfig::default().n.min(registry.max_order())),
        model_kind: a.model.or(cfg.model).unwrap_or(ModelKind::Forest),
        knn: KnnConfig {
            k: a.k.or(cfg.k).unwrap_or(KnnConfig::default().k),
        },
    };
    let stations = read_stations(&a.data, cfg)?;
    let trains = read_trains(&a.data, cfg, false)?;
    let predictor = Predictor::new(&registry, &stations);
    predictor.validate(&pcfg).map_err(|e| usage(e.to_string()))?;

    let (stops, actuals) = read_route(&a.route)?;
    let metadata = trains
        .get(&a.train)
        .cloned()
        .unwrap_or_else(|| TrainMetadata::unlisted(&a.train));
    let route = RouteInput {
        train_number: a.train.clone(),
        journey_id: a
            .journey_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", a.train, a.date.format("%Y%m%d"))),
        date: a.date,
        metadata,
        stops,
        actuals,
    };
    let report = predictor.predict_journey(&route, &pcfg).map_err(|e| match e {
        OmlmpfError::Unpredictable {
            position,
            station,
            order,
            reason,
        } => runtime(format!(
            "cannot predict position {position} (`{station}`, order {order}): {reason}"
        )),
        other => runtime(other),
    })?;

    create_dir(&out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "position",
        "station_code",
        "order_used",
        "model_station",
        "fallback",
        "predicted_latemin",
        "actual_latemin",
    ])
    .map_err(runtime)?;
    for s in &report.stations {
        w.write_record([
            s.position.to_string(),
            s.station_code.clone(),
            s.order_used.to_string(),
            s.model_station.clone(),
            s.fallback.is_some().to_string(),
            format!("{:.4}", s.predicted),
            s.actual.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(runtime)?;
    }
    let bytes = w.into_inner().map_err(runtime)?;
    write_file(&out.join("report.csv"), &bytes)?;

    let fallbacks: Vec<FallbackNote> = report
        .stations
        .iter()
        .filter_map(|s| {
            s.fallback.as_ref().map(|f| FallbackNote {
                position: s.position,
                station: &s.station_code,
                order: s.order_used,
                used: &f.station,
                geo_km: f.geo_km,
                feature_distance: f.feature_distance,
            })
        })
        .collect();
    for f in &fallbacks {
        log::info!(
            "position {} `{}`: order-{} model of `{}` used ({:.1} km away)",
            f.position,
            f.station,
            f.order,
            f.used,
            f.geo_km
        );
        println!(
            "fallback position {} {} -> {} (order {})",
            f.position, f.station, f.used, f.order
        );
    }
    let summary = PredictSummary {
        train_number: &report.train_number,
        journey_id: &report.journey_id,
        date: report.date,
        n: report.n,
        model_kind: report.model_kind,
        stops: report.stations.len(),
        total_predicted_late: report.stations.last().map_or(0.0, |s| s.predicted),
        fallbacks,
        rmse: report.rmse,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "predicted {} stops for {} with {}-OMLMPF ({}); {} fallbacks",
        summary.stops,
        summary.train_number,
        summary.n,
        summary.model_kind.as_str(),
        summary.fallbacks.len()
    );
    Ok(())
}

// --- evaluate --------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct RunSummary {
    n: usize,
    model: ModelKind,
    p: usize,
    journeys: usize,
    failures: usize,
    mean_rmse: Option<f64>,
    coverage_mean: Option<[f64; 3]>,
}

#[derive(Debug, Serialize)]
struct ExperimentSummary {
    id: u8,
    profile: FeatureProfile,
    zero_shot_ok: bool,
    runs: Vec<RunSummary>,
    bic_winners: std::collections::BTreeMap<ModelKind, std::collections::BTreeMap<usize, usize>>,
    aic_winners: std::collections::BTreeMap<ModelKind, std::collections::BTreeMap<usize, usize>>,
}

fn summarize(results: &[ExperimentResult]) -> Vec<ExperimentSummary> {
    results
        .iter()
        .map(|r| ExperimentSummary {
            id: r.experiment.id,
            profile: r.experiment.profile,
            zero_shot_ok: r.zero_shot_ok,
            runs: r
                .runs
                .iter()
                .map(|run| RunSummary {
                    n: run.n,
                    model: run.kind,
                    p: run.p,
                    journeys: run.outcome.reports.len(),
                    failures: run.outcome.failures.len(),
                    mean_rmse: run.outcome.mean_rmse(),
                    coverage_mean: run.coverage.mean,
                })
                .collect(),
            bic_winners: r.selection.iter().map(|(k, s)| (*k, s.bic.counts.clone())).collect(),
            aic_winners: r.selection.iter().map(|(k, s)| (*k, s.aic.counts.clone())).collect(),
        })
        .collect()
}

fn parse_ci_method(s: &str) -> Result<CiMethod, CliError> {
    match s {
        "spread" => Ok(CiMethod::Spread),
        "standard_error" | "se" => Ok(CiMethod::StandardError),
        other => Err(usage(format!(
            "unknown CI method `{other}` (expected spread|standard_error)"
        ))),
    }
}

fn parse_n_obs(s: &str) -> Result<NObsSource, CliError> {
    match s {
        "evaluation" => Ok(NObsSource::Evaluation),
        "training" => Ok(NObsSource::Training),
        other => Err(usage(format!(
            "unknown n-obs source `{other}` (expected evaluation|training)"
        ))),
    }
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), crate::evaluation::EvalError>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(runtime)?;
    Ok(buf)
}

pub fn cmd_evaluate(a: &EvaluateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let ids = a
        .experiment
        .clone()
        .or_else(|| cfg.experiments.clone())
        .unwrap_or_else(|| vec![1, 2, 3, 4]);
    if ids.is_empty() || ids.iter().any(|id| !(1..=4).contains(id)) {
        return Err(usage(format!("experiment ids {ids:?} must be in 1..=4")));
    }
    let orders = a
        .orders
        .clone()
        .or_else(|| cfg.orders.clone())
        .unwrap_or_else(|| (1..=MAX_ORDER).collect());
    if orders.is_empty() || orders.iter().any(|n| !(1..=MAX_ORDER).contains(n)) {
        return Err(usage(format!("orders {orders:?} must be in 1..={MAX_ORDER}")));
    }
    let ci_method = match &a.ci_method {
        Some(s) => parse_ci_method(s)?,
        None => cfg.ci_method.unwrap_or_default(),
    };
    let n_obs_source = match &a.n_obs {
        Some(s) => parse_n_obs(s)?,
        None => cfg.n_obs.unwrap_or_default(),
    };
    let mut train = train_params(&a.model, cfg)?;
    let out = out_dir(&a.out, cfg)?;

    let archive = a.archive.clone().or_else(|| cfg.archive.clone());
    let supplied = match &archive {
        Some(dir) => {
            if !dir.join(MANIFEST_FILE).is_file() {
                return Err(usage(format!("{} is not a model archive", dir.display())));
            }
            Some(ModelRegistry::load(dir).map_err(runtime)?)
        }
        None => None,
    };
    let inputs = read_inputs(&a.data, cfg)?;
    // An archive carries its own split and training parameters; reuse them so the
    // evaluation sets match what the models never saw.
    let seg = match supplied.as_ref().and_then(|r| r.segregation.clone()) {
        Some(seg) => seg,
        None => segregation_params(&a.split, cfg, &inputs.journeys, train.forest.seed)?,
    };
    if let Some(r) = &supplied {
        train = TrainParams {
            profile: train.profile,
            ..r.params.clone()
        };
    }
    let max_order = orders.iter().copied().max().unwrap_or(MAX_ORDER);
    if let Some(r) = &supplied {
        if max_order > r.max_order() {
            return Err(usage(format!(
                "order {max_order} exceeds the archive's highest trained order {}",
                r.max_order()
            )));
        }
    }
    train.n_max = train.n_max.max(max_order);
    let split = segregate(&inputs.journeys, &seg).map_err(runtime)?;
    let params = ExperimentParams {
        train,
        knn: KnnConfig {
            k: a.k.or(cfg.k).unwrap_or(KnnConfig::default().k),
        },
        ci_method,
        n_obs_source,
        orders,
        kinds: ModelKind::ALL.to_vec(),
    };
    let data = ExperimentData {
        split: &split,
        stations: &inputs.stations,
        trains: &inputs.trains,
    };
    let results = run_experiments(&ids, data, &params, supplied.as_ref()).map_err(runtime)?;

    create_dir(&out)?;
    write_file(
        &out.join("ci_coverage.csv"),
        &csv_bytes(|b| write_ci_table(b, &results))?,
    )?;
    write_file(
        &out.join("rmse_per_train.csv"),
        &csv_bytes(|b| write_rmse_table(b, &results))?,
    )?;
    for kind in ModelKind::ALL {
        let name = format!("order_selection_{}.csv", kind.as_str());
        write_file(&out.join(name), &csv_bytes(|b| write_order_table(b, &results, kind))?)?;
    }
    let intervals = IntervalTable::build(split.all_journeys(), ci_method);
    write_file(&out.join("intervals.csv"), &csv_bytes(|b| intervals.write_long_csv(b))?)?;
    let summary = summarize(&results);
    write_json(&out.join("summary.json"), &summary)?;

    let mut stdout = std::io::stdout().lock();
    for e in &summary {
        let _ = writeln!(stdout, "experiment {} ({} profile)", e.id, e.profile.as_str());
        for run in &e.runs {
            let cov = run
                .coverage_mean
                .map(|c| format!("{:.1}/{:.1}/{:.1}", c[0], c[1], c[2]))
                .unwrap_or_else(|| "-".into());
            let rmse = run.mean_rmse.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                stdout,
                "  {}-OMLMPF {:<6} rmse {rmse} ci68/95/99 {cov} failures {}",
                run.n,
                run.model.as_str(),
                run.failures
            );
        }
        for (kind, counts) in &e.bic_winners {
            let _ = writeln!(stdout, "  BIC winners ({}): {counts:?}", kind.as_str());
        }
    }
    let known: BTreeSet<&String> = split.known_trains.iter().collect();
    let _ = writeln!(stdout, "{} known trains; outputs in {}", known.len(), out.display());
    Ok(())
}
