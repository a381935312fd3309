//! Measurement protocol: Tukey outlier removal, station-month confidence intervals and
//! their coverage by predictions, per-journey RMSE, AIC/BIC order selection, and the
//! four-experiment harness.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{DataSplit, Journey, StationTable, TrainTable};
use crate::feature_frames::{FeatureProfile, MAX_ORDER};
use crate::omlmpf::{
    train_models, BatchOutcome, ModelKind, ModelRegistry, OmlmpfError, PredictConfig, PredictionReport, Predictor,
    TrainParams,
};
use crate::station_knn::KnnConfig;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("invalid information-criterion input: n_obs={n_obs}, sse={sse}, p={p}")]
    Domain { n_obs: usize, sse: f64, p: usize },
    #[error("unknown experiment {0} (expected 1..=4)")]
    Experiment(u8),
    #[error(transparent)]
    Omlmpf(#[from] OmlmpfError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
pub fn tukey_fences(values: &[f64]) -> Result<(f64, f64), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// Values inside the Tukey fences, in input order.
pub fn tukey_filter(values: &[f64]) -> Result<Vec<f64>, EvalError> {
    let (lo, hi) = tukey_fences(values)?;
    Ok(values.iter().copied().filter(|v| (lo..=hi).contains(v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CiLevel {
    L68,
    L95,
    L99,
}

impl CiLevel {
    pub const ALL: [CiLevel; 3] = [CiLevel::L68, CiLevel::L95, CiLevel::L99];

    pub fn z(self) -> f64 {
        match self {
            CiLevel::L68 => 1.0,
            CiLevel::L95 => 1.96,
            CiLevel::L99 => 2.576,
        }
    }

    pub fn percent(self) -> u8 {
        match self {
            CiLevel::L68 => 68,
            CiLevel::L95 => 95,
            CiLevel::L99 => 99,
        }
    }
}

/// Whether the interval half-width uses the sample spread `s` or the standard error `s/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    Spread,
    StandardError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: CiLevel,
    pub station: String,
    pub month: u32,
    pub sample_n: usize,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// `mean ± z·s` (or `mean ± z·s/√n`) with `s` the n−1 sample standard deviation.
/// `None` when fewer than two values are available.
pub fn ci_bounds(values: &[f64], level: CiLevel, method: CiMethod) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let s = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let half = match method {
        CiMethod::Spread => level.z() * s,
        CiMethod::StandardError => level.z() * s / (n as f64).sqrt(),
    };
    Some((mean - half, mean + half))
}

pub fn monthly_ci(
    station: &str,
    month: u32,
    values_after_tukey: &[f64],
    level: CiLevel,
    method: CiMethod,
) -> Option<Interval> {
    ci_bounds(values_after_tukey, level, method).map(|(lower, upper)| Interval {
        lower,
        upper,
        level,
        station: station.to_string(),
        month,
        sample_n: values_after_tukey.len(),
    })
}

/// Station-month intervals of every train, from its complete journey data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    /// (train, station, month) → intervals at 68/95/99.
    pub intervals: BTreeMap<(String, String, u32), [Interval; 3]>,
}

impl IntervalTable {
    /// Groups late minutes by (train, station, journey start month), removes Tukey
    /// outliers per group and builds the three intervals where at least two values remain.
    pub fn build<'a>(journeys: impl IntoIterator<Item = &'a Journey>, method: CiMethod) -> Self {
        let mut groups: BTreeMap<(String, String, u32), Vec<f64>> = BTreeMap::new();
        for j in journeys {
            let Some(month) = j.start_date().map(|d| d.month()) else {
                continue;
            };
            for s in &j.stops {
                groups
                    .entry((j.train_number.clone(), s.station_code.clone(), month))
                    .or_default()
                    .push(f64::from(s.latemin));
            }
        }
        let intervals = groups
            .into_iter()
            .filter_map(|(key, values)| {
                let kept = tukey_filter(&values).ok()?;
                let [a, b, c] = CiLevel::ALL.map(|l| monthly_ci(&key.1, key.2, &kept, l, method));
                Some((key, [a?, b?, c?]))
            })
            .collect();
        Self { intervals }
    }

    pub fn get(&self, train: &str, station: &str, month: u32) -> Option<&[Interval; 3]> {
        self.intervals.get(&(train.to_string(), station.to_string(), month))
    }

    /// Long-format rows `train, station, month, level, lower, upper, n` for plotting.
    pub fn write_long_csv<W: Write>(&self, sink: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["train", "station", "month", "level", "lower", "upper", "n"])?;
        for ((train, station, month), ivs) in &self.intervals {
            for iv in ivs {
                w.write_record([
                    train.as_str(),
                    station.as_str(),
                    &month.to_string(),
                    &iv.level.percent().to_string(),
                    &iv.lower.to_string(),
                    &iv.upper.to_string(),
                    &iv.sample_n.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCoverage {
    /// Percent inside CI68, CI95, CI99.
    pub pct: [f64; 3],
    /// Predictions that had a defined matching interval.
    pub matched: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub per_train: BTreeMap<String, TrainCoverage>,
    /// Unweighted mean of the per-train percentages.
    pub mean: Option<[f64; 3]>,
    pub excluded_trains: Vec<String>,
}

/// Percentage of predictions falling in the matching (train, station, month) interval,
/// per train, then averaged over trains. Predictions without a defined interval are left
/// out of the denominator; trains with none are excluded.
pub fn ci_coverage(reports: &[PredictionReport], intervals: &IntervalTable) -> CoverageSummary {
    let mut counts: BTreeMap<&str, ([usize; 3], usize)> = BTreeMap::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for r in reports {
        seen.insert(&r.train_number);
        let month = r.date.month();
        for s in &r.stations {
            let Some(ivs) = intervals.get(&r.train_number, &s.station_code, month) else {
                continue;
            };
            let entry = counts.entry(&r.train_number).or_default();
            entry.1 += 1;
            for (k, iv) in ivs.iter().enumerate() {
                if iv.contains(s.predicted) {
                    entry.0[k] += 1;
                }
            }
        }
    }
    let mut summary = CoverageSummary::default();
    for train in seen {
        match counts.get(train) {
            Some((inside, matched)) if *matched > 0 => {
                let pct = inside.map(|c| 100.0 * c as f64 / *matched as f64);
                summary
                    .per_train
                    .insert(train.to_string(), TrainCoverage { pct, matched: *matched });
            }
            _ => {
                log::debug!("train `{train}` has no prediction with a defined interval; excluded from coverage");
                summary.excluded_trains.push(train.to_string());
            }
        }
    }
    if !summary.per_train.is_empty() {
        let n = summary.per_train.len() as f64;
        let mut mean = [0.0; 3];
        for c in summary.per_train.values() {
            for (m, v) in mean.iter_mut().zip(c.pct) {
                *m += v;
            }
        }
        summary.mean = Some(mean.map(|v| v / n));
    }
    summary
}

fn check_ic(n_obs: usize, sse: f64, p: usize) -> Result<(), EvalError> {
    if n_obs == 0 || p == 0 || sse.is_nan() || sse < 0.0 {
        return Err(EvalError::Domain { n_obs, sse, p });
    }
    Ok(())
}

fn log_fit(n_obs: usize, sse: f64) -> f64 {
    if sse == 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = n_obs as f64;
    n * (sse / n).ln()
}

/// `n·ln(SSE/n) + 2p`; −∞ when SSE is 0.
pub fn aic(n_obs: usize, sse: f64, p: usize) -> Result<f64, EvalError> {
    check_ic(n_obs, sse, p)?;
    Ok(log_fit(n_obs, sse) + 2.0 * p as f64)
}

/// `n·ln(SSE/n) + p·ln(n)`; −∞ when SSE is 0.
pub fn bic(n_obs: usize, sse: f64, p: usize) -> Result<f64, EvalError> {
    check_ic(n_obs, sse, p)?;
    Ok(log_fit(n_obs, sse) + p as f64 * (n_obs as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn score(self, n_obs: usize, sse: f64, p: usize) -> Result<f64, EvalError> {
        match self {
            Criterion::Aic => aic(n_obs, sse, p),
            Criterion::Bic => bic(n_obs, sse, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelectionInput {
    pub train: String,
    /// The cap N of the run.
    pub order: usize,
    pub n_obs: usize,
    pub sse: f64,
    pub p: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub winners: BTreeMap<String, usize>,
    /// N → number of trains it won, for N in 1..=5.
    pub counts: BTreeMap<usize, usize>,
    pub skipped: Vec<String>,
}

/// Per-train argmin of the criterion over N = 1..=5; ties go to the smaller N. Trains
/// missing a run or with invalid inputs are skipped.
pub fn select_order(inputs: &[OrderSelectionInput], criterion: Criterion) -> OrderSelection {
    let mut by_train: BTreeMap<&str, BTreeMap<usize, &OrderSelectionInput>> = BTreeMap::new();
    for i in inputs {
        by_train.entry(&i.train).or_default().insert(i.order, i);
    }
    let mut out = OrderSelection {
        counts: (1..=MAX_ORDER).map(|n| (n, 0)).collect(),
        ..OrderSelection::default()
    };
    'train: for (train, runs) in by_train {
        let mut best: Option<(f64, usize)> = None;
        for n in 1..=MAX_ORDER {
            let Some(run) = runs.get(&n) else {
                log::warn!("train `{train}` lacks the N={n} run; skipped in order selection");
                out.skipped.push(train.to_string());
                continue 'train;
            };
            let Ok(score) = criterion.score(run.n_obs, run.sse, run.p) else {
                log::warn!("train `{train}` has invalid scores for N={n}; skipped in order selection");
                out.skipped.push(train.to_string());
                continue 'train;
            };
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, n));
            }
        }
        if let Some((_, n)) = best {
            out.winners.insert(train.to_string(), n);
            *out.counts.entry(n).or_default() += 1;
        }
    }
    out
}

// --- experiments -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSet {
    KnownCv,
    KnownTest,
    UnknownTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Experiment {
    pub id: u8,
    pub profile: FeatureProfile,
    pub eval_set: EvalSet,
}

impl Experiment {
    pub fn from_id(id: u8) -> Result<Self, EvalError> {
        let (profile, eval_set) = match id {
            1 => (FeatureProfile::Codes, EvalSet::KnownCv),
            2 => (FeatureProfile::Numeric, EvalSet::UnknownTest),
            3 => (FeatureProfile::Numeric, EvalSet::KnownCv),
            4 => (FeatureProfile::Numeric, EvalSet::KnownTest),
            other => return Err(EvalError::Experiment(other)),
        };
        Ok(Self { id, profile, eval_set })
    }

    pub fn journeys<'a>(&self, split: &'a DataSplit) -> &'a [Journey] {
        match self.eval_set {
            EvalSet::KnownCv => &split.known_cv,
            EvalSet::KnownTest => &split.known_test,
            EvalSet::UnknownTest => &split.unknown_test,
        }
    }
}

/// How `n` in AIC/BIC is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NObsSource {
    /// Number of evaluated predictions (the same observations as SSE).
    #[default]
    Evaluation,
    /// Training rows of the distinct models used for the train's predictions.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    /// Training parameters; the profile is overridden per experiment.
    pub train: TrainParams,
    pub knn: KnnConfig,
    pub ci_method: CiMethod,
    pub n_obs_source: NObsSource,
    pub orders: Vec<usize>,
    pub kinds: Vec<ModelKind>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            train: TrainParams::default(),
            knn: KnnConfig::default(),
            ci_method: CiMethod::Spread,
            n_obs_source: NObsSource::Evaluation,
            orders: (1..=MAX_ORDER).collect(),
            kinds: ModelKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExperimentData<'a> {
    pub split: &'a DataSplit,
    pub stations: &'a StationTable,
    pub trains: &'a TrainTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunStats {
    pub n_journeys: usize,
    pub mean_rmse: f64,
    pub sse: f64,
    pub n_obs: usize,
    pub training_rows: usize,
}

/// One N-capped run with one model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n: usize,
    pub kind: ModelKind,
    /// Encoded feature length used as `p` in AIC/BIC.
    pub p: usize,
    pub coverage: CoverageSummary,
    pub per_train: BTreeMap<String, TrainRunStats>,
    pub outcome: BatchOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSelection {
    pub bic: OrderSelection,
    pub aic: OrderSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub runs: Vec<RunMetrics>,
    pub selection: BTreeMap<ModelKind, KindSelection>,
    /// True when no training row came from an evaluated unknown-train journey and every
    /// training row came from the known-train training portion.
    pub zero_shot_ok: bool,
}

impl ExperimentResult {
    pub fn run(&self, kind: ModelKind, n: usize) -> Option<&RunMetrics> {
        self.runs.iter().find(|r| r.kind == kind && r.n == n)
    }
}

fn journey_key(j: &Journey) -> (String, String) {
    (j.train_number.clone(), j.journey_id.clone())
}

/// Whether the registry was trained only on the split's known-train training journeys.
pub fn zero_shot_audit(registry: &ModelRegistry, split: &DataSplit) -> bool {
    let allowed: BTreeSet<(String, String)> = split.known_train.iter().map(journey_key).collect();
    let forbidden: BTreeSet<(String, String)> = split.unknown_test.iter().map(journey_key).collect();
    registry
        .training_journeys
        .iter()
        .all(|k| allowed.contains(k) && !forbidden.contains(k))
}

/// Per-journey RMSEs, SSE, observation count and the (station, order) models used.
type TrainAccumulator = (Vec<f64>, f64, usize, BTreeSet<(String, usize)>);

fn per_train_stats(reports: &[PredictionReport], registry: &ModelRegistry) -> BTreeMap<String, TrainRunStats> {
    let mut acc: BTreeMap<&str, TrainAccumulator> = BTreeMap::new();
    for r in reports {
        let e = acc.entry(&r.train_number).or_default();
        if let Some(v) = r.rmse {
            e.0.push(v);
        }
        for s in &r.stations {
            if let Some(a) = s.actual {
                e.1 += (s.predicted - a).powi(2);
                e.2 += 1;
            }
            if s.order_used > 0 {
                e.3.insert((s.model_station.clone(), s.order_used));
            }
        }
    }
    acc.into_iter()
        .map(|(train, (rmses, sse, n_obs, used))| {
            let training_rows = used
                .iter()
                .filter_map(|(st, o)| registry.model(st, *o))
                .map(|m| m.n_rows)
                .sum();
            let mean_rmse = if rmses.is_empty() {
                f64::NAN
            } else {
                rmses.iter().sum::<f64>() / rmses.len() as f64
            };
            (
                train.to_string(),
                TrainRunStats {
                    n_journeys: rmses.len(),
                    mean_rmse,
                    sse,
                    n_obs,
                    training_rows,
                },
            )
        })
        .collect()
}

/// Runs one experiment against an already-trained registry of the matching profile.
pub fn run_experiment_with(
    experiment: Experiment,
    data: ExperimentData<'_>,
    params: &ExperimentParams,
    registry: &ModelRegistry,
    intervals: &IntervalTable,
) -> Result<ExperimentResult, EvalError> {
    let journeys = experiment.journeys(data.split);
    let predictor = Predictor::new(registry, data.stations);
    let mut runs = Vec::new();
    for &kind in &params.kinds {
        for &n in &params.orders {
            let cfg = PredictConfig {
                n,
                model_kind: kind,
                knn: params.knn,
            };
            predictor.validate(&cfg)?;
            let outcome = predictor.predict_and_score(journeys, data.trains, &cfg);
            let coverage = ci_coverage(&outcome.reports, intervals);
            let per_train = per_train_stats(&outcome.reports, registry);
            let p = registry.feature_len_at(n).unwrap_or(1);
            runs.push(RunMetrics {
                n,
                kind,
                p,
                coverage,
                per_train,
                outcome,
            });
        }
    }

    let mut selection = BTreeMap::new();
    let full = (1..=MAX_ORDER).all(|n| params.orders.contains(&n));
    if !full {
        log::info!(
            "orders {:?} do not cover 1..={MAX_ORDER}; order selection skipped",
            params.orders
        );
    }
    for &kind in params.kinds.iter().filter(|_| full) {
        let inputs: Vec<OrderSelectionInput> = runs
            .iter()
            .filter(|r| r.kind == kind)
            .flat_map(|r| {
                r.per_train.iter().map(move |(train, st)| OrderSelectionInput {
                    train: train.clone(),
                    order: r.n,
                    n_obs: match params.n_obs_source {
                        NObsSource::Evaluation => st.n_obs,
                        NObsSource::Training => st.training_rows,
                    },
                    sse: st.sse,
                    p: r.p,
                })
            })
            .collect();
        selection.insert(
            kind,
            KindSelection {
                bic: select_order(&inputs, Criterion::Bic),
                aic: select_order(&inputs, Criterion::Aic),
            },
        );
    }

    Ok(ExperimentResult {
        experiment,
        runs,
        selection,
        zero_shot_ok: zero_shot_audit(registry, data.split),
    })
}

/// Trains a registry for the experiment's profile and runs it.
pub fn run_experiment(
    id: u8,
    data: ExperimentData<'_>,
    params: &ExperimentParams,
) -> Result<ExperimentResult, EvalError> {
    let experiment = Experiment::from_id(id)?;
    let train = TrainParams {
        profile: experiment.profile,
        ..params.train.clone()
    };
    let registry = train_models(data.split, data.stations, data.trains, &train)?;
    let intervals = IntervalTable::build(data.split.all_journeys(), params.ci_method);
    run_experiment_with(experiment, data, params, &registry, &intervals)
}

/// Runs several experiments, training one registry per profile. A supplied registry is
/// reused for experiments whose profile matches it.
pub fn run_experiments(
    ids: &[u8],
    data: ExperimentData<'_>,
    params: &ExperimentParams,
    supplied: Option<&ModelRegistry>,
) -> Result<Vec<ExperimentResult>, EvalError> {
    let experiments: Vec<Experiment> = ids
        .iter()
        .map(|&id| Experiment::from_id(id))
        .collect::<Result<_, _>>()?;
    let intervals = IntervalTable::build(data.split.all_journeys(), params.ci_method);
    let mut registries: BTreeMap<FeatureProfile, ModelRegistry> = BTreeMap::new();
    let mut results = Vec::new();
    for e in experiments {
        let registry = match supplied {
            Some(r) if r.profile() == e.profile => r,
            _ => match registries.entry(e.profile) {
                std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => {
                    let train = TrainParams {
                        profile: e.profile,
                        ..params.train.clone()
                    };
                    v.insert(train_models(data.split, data.stations, data.trains, &train)?)
                }
            },
        };
        results.push(run_experiment_with(e, data, params, registry, &intervals)?);
    }
    Ok(results)
}

// --- tables ------------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        v.to_string()
    }
}

pub fn row_label(n: usize) -> String {
    format!("{n}-OMLMPF")
}

/// Mean CI coverage with rows `1-OMLMPF..5-OMLMPF` and, per (model, experiment), the
/// columns CI68, CI95, CI99.
pub fn write_ci_table<W: Write>(sink: W, results: &[ExperimentResult]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(sink);
    let kinds: BTreeSet<ModelKind> = results.iter().flat_map(|r| r.runs.iter().map(|run| run.kind)).collect();
    let orders: BTreeSet<usize> = results.iter().flat_map(|r| r.runs.iter().map(|run| run.n)).collect();
    let mut header = vec!["framework".to_string()];
    for kind in &kinds {
        for r in results {
            for level in CiLevel::ALL {
                header.push(format!(
                    "{}_exp{}_ci{}",
                    kind.as_str(),
                    r.experiment.id,
                    level.percent()
                ));
            }
        }
    }
    w.write_record(&header)?;
    for &n in &orders {
        let mut rec = vec![row_label(n)];
        for &kind in &kinds {
            for r in results {
                match r.run(kind, n).and_then(|run| run.coverage.mean) {
                    Some(m) => rec.extend(m.iter().map(|v| fmt(*v))),
                    None => rec.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format mean RMSE per train: `experiment, model, framework, train, n_journeys, mean_rmse`.
pub fn write_rmse_table<W: Write>(sink: W, results: &[ExperimentResult]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["experiment", "model", "framework", "train", "n_journeys", "mean_rmse"])?;
    for r in results {
        for run in &r.runs {
            for (train, st) in &run.per_train {
                w.write_record([
                    &r.experiment.id.to_string(),
                    run.kind.as_str(),
                    &row_label(run.n),
                    train,
                    &st.n_journeys.to_string(),
                    &fmt(st.mean_rmse),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Winner counts with rows `1-OMLMPF..5-OMLMPF` and columns `BIC_Exp<i>` then `AIC_Exp<i>`.
pub fn write_order_table<W: Write>(sink: W, results: &[ExperimentResult], kind: ModelKind) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["framework".to_string()];
    header.extend(results.iter().map(|r| format!("BIC_Exp{}", r.experiment.id)));
    header.extend(results.iter().map(|r| format!("AIC_Exp{}", r.experiment.id)));
    w.write_record(&header)?;
    for n in 1..=MAX_ORDER {
        let mut rec = vec![row_label(n)];
        for pick in [Criterion::Bic, Criterion::Aic] {
            for r in results {
                let count = r.selection.get(&kind).map_or(0, |s| {
                    let sel = if pick == Criterion::Bic { &s.bic } else { &s.aic };
                    sel.counts.get(&n).copied().unwrap_or(0)
                });
                rec.push(count.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tukey_hand_example() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(tukey_fences(&v).unwrap(), (-1.0, 7.0));
        assert_eq!(tukey_filter(&v).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn tukey_constant_and_empty() {
        assert_eq!(tukey_filter(&[3.0; 5]).unwrap(), vec![3.0; 5]);
        assert!(matches!(tukey_filter(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn ci_examples() {
        for level in CiLevel::ALL {
            assert_eq!(
                ci_bounds(&[10.0, 10.0, 10.0], level, CiMethod::Spread),
                Some((10.0, 10.0))
            );
        }
        let (lo, hi) = ci_bounds(&[0.0, 10.0], CiLevel::L95, CiMethod::Spread).unwrap();
        assert!((lo - (5.0 - 1.96 * 50f64.sqrt())).abs() < 1e-12);
        assert!((lo + 8.859).abs() < 1e-3);
        assert!((hi - 18.859).abs() < 1e-3);
        assert_eq!(ci_bounds(&[1.0], CiLevel::L68, CiMethod::Spread), None);
        let (se_lo, _) = ci_bounds(&[0.0, 10.0], CiLevel::L95, CiMethod::StandardError).unwrap();
        assert!((se_lo - (5.0 - 1.96 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn ic_examples() {
        assert_eq!(aic(10, 10.0, 3).unwrap(), 6.0);
        assert!((bic(10, 10.0, 3).unwrap() - 3.0 * 10f64.ln()).abs() < 1e-12);
        assert!((bic(10, 10.0, 3).unwrap() - 6.9078).abs() < 1e-4);
        assert_eq!(aic(5, 0.0, 2).unwrap(), f64::NEG_INFINITY);
        assert!(aic(0, 1.0, 1).is_err());
        assert!(bic(3, -1.0, 1).is_err());
        assert!(bic(3, 1.0, 0).is_err());
    }

    fn inputs(train: &str, scores_as_sse: [f64; 5]) -> Vec<OrderSelectionInput> {
        // With n_obs = 1 and p = 1, AIC = ln(SSE) + 2, so SSE = e^(score - 2).
        scores_as_sse
            .iter()
            .enumerate()
            .map(|(i, s)| OrderSelectionInput {
                train: train.into(),
                order: i + 1,
                n_obs: 1,
                sse: (s - 2.0).exp(),
                p: 1,
            })
            .collect()
    }

    #[test]
    fn selection_picks_min_then_smaller_n() {
        let mut all = inputs("a", [5.0, 6.0, 7.0, 8.0, 9.0]);
        all.extend(inputs("b", [5.0; 5]));
        all.extend(inputs("c", [9.0, 8.0, 3.0, 4.0, 3.0]));
        let sel = select_order(&all, Criterion::Aic);
        assert_eq!(sel.winners["a"], 1);
        assert_eq!(sel.winners["b"], 1);
        assert_eq!(sel.winners["c"], 3);
        assert_eq!(sel.counts[&1], 2);
        assert_eq!(sel.counts[&3], 1);
        assert_eq!(sel.counts.len(), 5);
    }

    #[test]
    fn selection_skips_incomplete_train() {
        let mut all = inputs("a", [5.0, 6.0, 7.0, 8.0, 9.0]);
        all.pop();
        let sel = select_order(&all, Criterion::Bic);
        assert!(sel.winners.is_empty());
        assert_eq!(sel.skipped, vec!["a".to_string()]);
    }

    #[test]
    fn experiment_profiles() {
        assert_eq!(Experiment::from_id(1).unwrap().profile, FeatureProfile::Codes);
        assert_eq!(Experiment::from_id(2).unwrap().eval_set, EvalSet::UnknownTest);
        assert_eq!(Experiment::from_id(3).unwrap().eval_set, EvalSet::KnownCv);
        assert_eq!(Experiment::from_id(4).unwrap().eval_set, EvalSet::KnownTest);
        assert!(Experiment::from_id(5).is_err());
    }
}
