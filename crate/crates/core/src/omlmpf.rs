//! Training of per-station n-order models and feed-forward journey prediction capped at
//! order N, with nearest-known-station fallback for stations lacking a model of the
//! order required at their position.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{DataSplit, Journey, SegregateParams, StationTable, TrainMetadata, TrainTable};
use crate::feature_frames::{
    assemble_row, build_station_frames, check_order, encode_row, CategoryVocab, FeatureFrame, FeatureProfile,
    FrameError, FrameKey, JourneyContext, RouteStop, MAX_ORDER,
};
use crate::regressors::{fit_ridge, FitError, Forest, ForestParams, RidgeModel, RidgeParams};
use crate::station_knn::{nearest_known, KnnConfig, KnnError, KnnMatch};

pub const ARCHIVE_VERSION: &str = "railmarkov-model/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum OmlmpfError {
    #[error("no non-empty training frame")]
    NoFrames,
    #[error("fitting model for station `{station}` order {order}: {source}")]
    Fit {
        station: String,
        order: usize,
        source: FitError,
    },
    #[error("invalid prediction config: {0}")]
    Config(String),
    #[error("route has {0} stops; at least 2 are required")]
    RouteTooShort(usize),
    #[error("no station has an order-{0} model")]
    EmptyOrderList(usize),
    #[error("position {position} (`{station}`): no own order-{order} model and {reason}")]
    Unpredictable {
        position: usize,
        station: String,
        order: usize,
        reason: KnnError,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Ridge,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Forest, ModelKind::Ridge];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Ridge => "ridge",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forest" => Ok(ModelKind::Forest),
            "ridge" => Ok(ModelKind::Ridge),
            other => Err(format!("unknown model kind `{other}` (expected forest|ridge)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub profile: FeatureProfile,
    pub forest: ForestParams,
    pub ridge: RidgeParams,
    /// Highest order trained, 1..=5.
    pub n_max: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            profile: FeatureProfile::Numeric,
            forest: ForestParams::default(),
            ridge: RidgeParams::default(),
            n_max: MAX_ORDER,
        }
    }
}

/// Forest and ridge models trained on one (station, order) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationModel {
    pub station: String,
    pub order: usize,
    pub n_rows: usize,
    pub feature_len: usize,
    pub vocab: CategoryVocab,
    pub forest: Forest,
    pub ridge: RidgeModel,
}

impl StationModel {
    pub fn predict(&self, kind: ModelKind, features: &[f64]) -> f64 {
        match kind {
            ModelKind::Forest => self.forest.predict(features),
            ModelKind::Ridge => self.ridge.predict(features),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistry {
    pub params: TrainParams,
    pub models: BTreeMap<FrameKey, StationModel>,
    /// Order → stations owning a model of that order.
    pub ips_lists: BTreeMap<usize, BTreeSet<String>>,
    /// (train, journey id) of every journey whose rows were used for training.
    pub training_journeys: BTreeSet<(String, String)>,
    /// How the data was segregated, when known; lets evaluation rebuild the same split.
    pub segregation: Option<SegregateParams>,
}

/// FNV-1a, used to derive per-model seeds that do not depend on iteration order.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn model_seed(base: u64, station: &str, order: usize) -> u64 {
    base ^ stable_hash(station).rotate_left(7) ^ (order as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl ModelRegistry {
    pub fn profile(&self) -> FeatureProfile {
        self.params.profile
    }

    pub fn max_order(&self) -> usize {
        self.params.n_max
    }

    pub fn model(&self, station: &str, order: usize) -> Option<&StationModel> {
        self.models.get(&(station.to_string(), order))
    }

    pub fn ips_list(&self, order: usize) -> impl Iterator<Item = &str> {
        self.ips_lists.get(&order).into_iter().flatten().map(String::as_str)
    }

    pub fn has_model(&self, station: &str, order: usize) -> bool {
        self.ips_lists.get(&order).is_some_and(|s| s.contains(station))
    }

    /// Fits forest and ridge on every non-empty frame.
    pub fn from_frames(frames: &BTreeMap<FrameKey, FeatureFrame>, params: &TrainParams) -> Result<Self, OmlmpfError> {
        check_order(params.n_max)?;
        let usable: Vec<&FeatureFrame> = frames
            .values()
            .filter(|f| !f.is_empty() && f.order <= params.n_max)
            .collect();
        if usable.is_empty() {
            return Err(OmlmpfError::NoFrames);
        }
        let fitted: Vec<StationModel> = usable
            .par_iter()
            .map(|frame| {
                let (x, y) = frame.design(params.profile);
                let wrap = |source| OmlmpfError::Fit {
                    station: frame.station_code.clone(),
                    order: frame.order,
                    source,
                };
                let forest_params = ForestParams {
                    seed: model_seed(params.forest.seed, &frame.station_code, frame.order),
                    ..params.forest.clone()
                };
                let forest = Forest::fit(&x, &y, &forest_params).map_err(wrap)?;
                let ridge = fit_ridge(&x, &y, &params.ridge).map_err(wrap)?;
                Ok(StationModel {
                    station: frame.station_code.clone(),
                    order: frame.order,
                    n_rows: x.len(),
                    feature_len: x[0].len(),
                    vocab: frame.vocab.clone(),
                    forest,
                    ridge,
                })
            })
            .collect::<Result<_, OmlmpfError>>()?;

        let mut ips_lists: BTreeMap<usize, BTreeSet<String>> =
            (1..=params.n_max).map(|i| (i, BTreeSet::new())).collect();
        let mut models = BTreeMap::new();
        for m in fitted {
            ips_lists.entry(m.order).or_default().insert(m.station.clone());
            models.insert((m.station.clone(), m.order), m);
        }
        let training_journeys = usable
            .iter()
            .flat_map(|f| f.rows.iter().map(|r| (r.train_number.clone(), r.journey_id.clone())))
            .collect();
        Ok(Self {
            params: params.clone(),
            models,
            ips_lists,
            training_journeys,
            segregation: None,
        })
    }

    /// Largest encoded feature length among the models of `order`.
    pub fn feature_len_at(&self, order: usize) -> Option<usize> {
        self.models
            .values()
            .filter(|m| m.order == order)
            .map(|m| m.feature_len)
            .max()
    }
}

/// Builds frames from the training portion of `split` and fits every model.
pub fn train_models(
    split: &DataSplit,
    stations: &StationTable,
    trains: &TrainTable,
    params: &TrainParams,
) -> Result<ModelRegistry, OmlmpfError> {
    let frames = build_station_frames(split, stations, trains, params.n_max)?;
    ModelRegistry::from_frames(&frames, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    /// Order cap N, 1..=5.
    pub n: usize,
    pub model_kind: ModelKind,
    pub knn: KnnConfig,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            n: 3,
            model_kind: ModelKind::Forest,
            knn: KnnConfig::default(),
        }
    }
}

/// A journey to predict: its stops, date and train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteInput {
    pub train_number: String,
    pub journey_id: String,
    pub date: NaiveDate,
    pub metadata: TrainMetadata,
    pub stops: Vec<RouteStop>,
    /// Recorded late minutes, when scoring against actuals.
    pub actuals: Option<Vec<f64>>,
}

impl RouteInput {
    pub fn from_journey(journey: &Journey, trains: &TrainTable) -> Result<Self, OmlmpfError> {
        let date = journey.start_date().ok_or(OmlmpfError::RouteTooShort(0))?;
        Ok(Self {
            train_number: journey.train_number.clone(),
            journey_id: journey.journey_id.clone(),
            date,
            metadata: trains.lookup(&journey.train_number),
            stops: journey
                .stops
                .iter()
                .map(|s| RouteStop {
                    station_code: s.station_code.clone(),
                    dfs_km: s.distance_km,
                })
                .collect(),
            actuals: Some(journey.stops.iter().map(|s| f64::from(s.latemin)).collect()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationPrediction {
    pub position: usize,
    pub station_code: String,
    /// 0 at the source, `min(position, N)` elsewhere.
    pub order_used: usize,
    /// Station whose model produced the prediction (the station itself unless a fallback).
    pub model_station: String,
    pub fallback: Option<KnnMatch>,
    pub predicted: f64,
    pub actual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub train_number: String,
    pub journey_id: String,
    pub date: NaiveDate,
    pub n: usize,
    pub model_kind: ModelKind,
    pub stations: Vec<StationPrediction>,
    /// Root-mean-square error over every stop including the source, when actuals exist.
    pub rmse: Option<f64>,
}

impl PredictionReport {
    /// Predicted late minutes, source first.
    pub fn lms(&self) -> Vec<f64> {
        self.stations.iter().map(|s| s.predicted).collect()
    }

    pub fn fallbacks(&self) -> impl Iterator<Item = &StationPrediction> {
        self.stations.iter().filter(|s| s.fallback.is_some())
    }
}

/// Root-mean-square error of paired sequences.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> f64 {
    let n = predicted.len().min(actual.len());
    if n == 0 {
        return 0.0;
    }
    (predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// Prediction over a trained registry and the station table used for descriptors and
/// fallback search.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    pub registry: &'a ModelRegistry,
    pub stations: &'a StationTable,
}

impl<'a> Predictor<'a> {
    pub fn new(registry: &'a ModelRegistry, stations: &'a StationTable) -> Self {
        Self { registry, stations }
    }

    pub fn validate(&self, cfg: &PredictConfig) -> Result<(), OmlmpfError> {
        if !(1..=MAX_ORDER).contains(&cfg.n) {
            return Err(OmlmpfError::Config(format!("N = {} outside 1..={MAX_ORDER}", cfg.n)));
        }
        if cfg.n > self.registry.max_order() {
            return Err(OmlmpfError::Config(format!(
                "N = {} exceeds the highest trained order {}",
                cfg.n,
                self.registry.max_order()
            )));
        }
        if cfg.knn.k == 0 {
            return Err(OmlmpfError::Config("k must be >= 1".into()));
        }
        Ok(())
    }

    /// Feed-forward prediction: the source is 0 minutes late; the stop at position `i`
    /// uses the order `min(i, N)` model of its own station, or of the nearest station in
    /// that order's list, on a row whose previous late minutes are earlier predictions.
    pub fn predict_journey(&self, route: &RouteInput, cfg: &PredictConfig) -> Result<PredictionReport, OmlmpfError> {
        self.validate(cfg)?;
        if route.stops.len() < 2 {
            return Err(OmlmpfError::RouteTooShort(route.stops.len()));
        }
        let actual_at = |i: usize| route.actuals.as_ref().and_then(|a| a.get(i).copied());
        let ctx = JourneyContext {
            train_number: &route.train_number,
            journey_id: &route.journey_id,
            date: route.date,
            metadata: &route.metadata,
        };

        let mut lms = vec![0.0];
        let mut stations = vec![StationPrediction {
            position: 0,
            station_code: route.stops[0].station_code.clone(),
            order_used: 0,
            model_station: route.stops[0].station_code.clone(),
            fallback: None,
            predicted: 0.0,
            actual: actual_at(0),
        }];
        for position in 1..route.stops.len() {
            let order = position.min(cfg.n);
            let code = &route.stops[position].station_code;
            let (model_station, fallback) = if self.registry.has_model(code, order) {
                (code.clone(), None)
            } else {
                if self.registry.ips_list(order).next().is_none() {
                    return Err(OmlmpfError::EmptyOrderList(order));
                }
                let found =
                    nearest_known(code, self.registry.ips_list(order), self.stations, &cfg.knn).map_err(|reason| {
                        OmlmpfError::Unpredictable {
                            position,
                            station: code.clone(),
                            order,
                            reason,
                        }
                    })?;
                log::debug!(
                    "{} position {position} `{code}`: order-{order} fallback to `{}` ({:.1} km, feature distance {:.3})",
                    route.journey_id,
                    found.station,
                    found.geo_km,
                    found.feature_distance
                );
                (found.station.clone(), Some(found))
            };
            let model = self
                .registry
                .model(&model_station, order)
                .ok_or_else(|| OmlmpfError::Archive(format!("missing model ({model_station}, {order})")))?;
            let row = assemble_row(&ctx, &route.stops, &lms, position, order, self.stations)?;
            let features = encode_row(&row, self.registry.profile(), &model.vocab);
            let predicted = model.predict(cfg.model_kind, &features);
            lms.push(predicted);
            stations.push(StationPrediction {
                position,
                station_code: code.clone(),
                order_used: order,
                model_station,
                fallback,
                predicted,
                actual: actual_at(position),
            });
        }
        let rmse = route.actuals.as_ref().map(|a| rmse(&lms, a));
        Ok(PredictionReport {
            train_number: route.train_number.clone(),
            journey_id: route.journey_id.clone(),
            date: route.date,
            n: cfg.n,
            model_kind: cfg.model_kind,
            stations,
            rmse,
        })
    }

    /// Predicts every journey, attaching actuals and per-journey RMSE. A failing journey is
    /// recorded and skipped.
    pub fn predict_and_score(&self, journeys: &[Journey], trains: &TrainTable, cfg: &PredictConfig) -> BatchOutcome {
        let results: Vec<Result<PredictionReport, (String, String, String)>> = journeys
            .par_iter()
            .map(|j| {
                RouteInput::from_journey(j, trains)
                    .and_then(|route| self.predict_journey(&route, cfg))
                    .map_err(|e| (j.train_number.clone(), j.journey_id.clone(), e.to_string()))
            })
            .collect();
        let mut outcome = BatchOutcome::default();
        for r in results {
            match r {
                Ok(report) => outcome.reports.push(report),
                Err((train_number, journey_id, error)) => {
                    log::warn!("journey `{journey_id}` of train `{train_number}` not predicted: {error}");
                    outcome.failures.push(JourneyFailure {
                        train_number,
                        journey_id,
                        error,
                    });
                }
            }
        }
        outcome
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyFailure {
    pub train_number: String,
    pub journey_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub reports: Vec<PredictionReport>,
    pub failures: Vec<JourneyFailure>,
}

impl BatchOutcome {
    pub fn mean_rmse(&self) -> Option<f64> {
        let values: Vec<f64> = self.reports.iter().filter_map(|r| r.rmse).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

// --- archive -------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub station: String,
    pub order: usize,
    pub n_rows: usize,
    pub feature_len: usize,
    pub forest_file: String,
    pub ridge_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub profile: FeatureProfile,
    pub orders: Vec<usize>,
    pub params: TrainParams,
    pub ips_lists: BTreeMap<usize, BTreeSet<String>>,
    pub training_journeys: BTreeSet<(String, String)>,
    pub segregation: Option<SegregateParams>,
    pub models: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile<M> {
    version: String,
    kind: ModelKind,
    station: String,
    order: usize,
    feature_len: usize,
    vocab: CategoryVocab,
    model: M,
}

fn file_stem(index: usize, station: &str, order: usize) -> String {
    let clean: String = station
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{index:05}_{clean}_{order}")
}

impl ModelRegistry {
    pub fn manifest(&self) -> Manifest {
        let models = self
            .models
            .values()
            .enumerate()
            .map(|(i, m)| {
                let stem = file_stem(i, &m.station, m.order);
                ManifestEntry {
                    station: m.station.clone(),
                    order: m.order,
                    n_rows: m.n_rows,
                    feature_len: m.feature_len,
                    forest_file: format!("models/{stem}_forest.json"),
                    ridge_file: format!("models/{stem}_ridge.json"),
                }
            })
            .collect();
        Manifest {
            version: ARCHIVE_VERSION.to_string(),
            profile: self.params.profile,
            orders: (1..=self.params.n_max).collect(),
            params: self.params.clone(),
            ips_lists: self.ips_lists.clone(),
            training_journeys: self.training_journeys.clone(),
            segregation: self.segregation.clone(),
            models,
        }
    }

    /// Writes `manifest.json` and one JSON file per (station, order, kind) under `models/`.
    pub fn save(&self, dir: &Path) -> Result<Manifest, OmlmpfError> {
        fs::create_dir_all(dir.join("models"))?;
        let manifest = self.manifest();
        for entry in &manifest.models {
            let m = &self.models[&(entry.station.clone(), entry.order)];
            let header = |kind| (kind, m.station.clone(), m.order, m.feature_len, m.vocab.clone());
            let write = |path: &str, bytes: Vec<u8>| fs::write(dir.join(path), bytes);
            let (kind, station, order, feature_len, vocab) = header(ModelKind::Forest);
            write(
                &entry.forest_file,
                serde_json::to_vec(&ModelFile {
                    version: ARCHIVE_VERSION.into(),
                    kind,
                    station,
                    order,
                    feature_len,
                    vocab,
                    model: &m.forest,
                })?,
            )?;
            let (kind, station, order, feature_len, vocab) = header(ModelKind::Ridge);
            write(
                &entry.ridge_file,
                serde_json::to_vec(&ModelFile {
                    version: ARCHIVE_VERSION.into(),
                    kind,
                    station,
                    order,
                    feature_len,
                    vocab,
                    model: &m.ridge,
                })?,
            )?;
        }
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(dir.join(MANIFEST_FILE), bytes)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self, OmlmpfError> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.version != ARCHIVE_VERSION {
            return Err(OmlmpfError::Archive(format!(
                "unsupported version `{}`, expected `{ARCHIVE_VERSION}`",
                manifest.version
            )));
        }
        let mut models = BTreeMap::new();
        for entry in &manifest.models {
            let forest: ModelFile<Forest> = serde_json::from_slice(&fs::read(dir.join(&entry.forest_file))?)?;
            let ridge: ModelFile<RidgeModel> = serde_json::from_slice(&fs::read(dir.join(&entry.ridge_file))?)?;
            for (version, kind, station, order) in [
                (&forest.version, forest.kind, &forest.station, forest.order),
                (&ridge.version, ridge.kind, &ridge.station, ridge.order),
            ] {
                if version != ARCHIVE_VERSION || *station != entry.station || order != entry.order {
                    return Err(OmlmpfError::Archive(format!(
                        "{} model file for ({}, {}) does not match the manifest",
                        kind.as_str(),
                        entry.station,
                        entry.order
                    )));
                }
            }
            models.insert(
                (entry.station.clone(), entry.order),
                StationModel {
                    station: entry.station.clone(),
                    order: entry.order,
                    n_rows: entry.n_rows,
                    feature_len: entry.feature_len,
                    vocab: forest.vocab,
                    forest: forest.model,
                    ridge: ridge.model,
                },
            );
        }
        for (order, list) in &manifest.ips_lists {
            if let Some(missing) = list.iter().find(|s| !models.contains_key(&((*s).clone(), *order))) {
                return Err(OmlmpfError::Archive(format!(
                    "station `{missing}` listed for order {order} has no model"
                )));
            }
        }
        Ok(Self {
            params: manifest.params,
            models,
            ips_lists: manifest.ips_lists,
            training_journeys: manifest.training_journeys,
            segregation: manifest.segregation,
        })
    }
}
