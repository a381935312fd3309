//! Per-(station, order) training frames built from known-train journeys, and the
//! numeric encoding of their rows.
//!
//! A row for target station `Stn_0` at position `i` of a journey carries the `n`
//! stations immediately before it, `Stn_1` (previous) through `Stn_n`. Source
//! stations never produce rows.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{DataSplit, Journey, StationTable, TrainMetadata, TrainTable, TrainType};

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("order {0} outside 1..={MAX_ORDER}")]
    Order(usize),
    #[error("journey `{0}` has no stops")]
    EmptyJourney(String),
    #[error("position {position} has only {available} previous stations, order {order} requested")]
    NotEnoughPrevious {
        position: usize,
        order: usize,
        available: usize,
    },
    #[error("late-minute history has {have} entries, position {position} needs {need}")]
    History { position: usize, have: usize, need: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureProfile {
    /// Previous-station codes one-hot; no tfc/deg/dfs for previous stations.
    Codes,
    /// Previous-station tfc/deg/dfs; no station codes.
    Numeric,
}

impl FeatureProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureProfile::Codes => "codes",
            FeatureProfile::Numeric => "numeric",
        }
    }
}

impl std::str::FromStr for FeatureProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "codes" => Ok(FeatureProfile::Codes),
            "numeric" => Ok(FeatureProfile::Numeric),
            other => Err(format!("unknown profile `{other}` (expected codes|numeric)")),
        }
    }
}

pub fn check_order(n: usize) -> Result<(), FrameError> {
    if (1..=MAX_ORDER).contains(&n) {
        Ok(())
    } else {
        Err(FrameError::Order(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevStation {
    pub code: String,
    pub late_mins: f64,
    /// Distance between this station and the one after it on the route.
    pub db_km: f64,
    pub dfs_km: f64,
    pub tfc: f64,
    pub deg: f64,
}

/// One n-prev-stn example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub train_number: String,
    pub journey_id: String,
    pub train_type: TrainType,
    pub zone: String,
    pub is_superfast: bool,
    pub month: u32,
    pub weekday: u32,
    pub target_code: String,
    pub target_dfs: f64,
    pub target_tfc: f64,
    pub target_deg: f64,
    /// `prev[0]` is Stn_1, the immediately previous station.
    pub prev: Vec<PrevStation>,
    /// Stn_0 late minutes; `None` for rows assembled at prediction time.
    pub target_late: Option<f64>,
}

impl ContextRow {
    pub fn order(&self) -> usize {
        self.prev.len()
    }
}

/// A stop as seen by row assembly: a station and its distance from source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStop {
    pub station_code: String,
    pub dfs_km: f64,
}

/// Journey-level context shared by every row of one journey.
#[derive(Debug, Clone)]
pub struct JourneyContext<'a> {
    pub train_number: &'a str,
    pub journey_id: &'a str,
    pub date: NaiveDate,
    pub metadata: &'a TrainMetadata,
}

/// Assembles the `order`-prev-stn row for the stop at `position`, taking previous late
/// minutes from `late_history[position - order .. position]`.
pub fn assemble_row(
    ctx: &JourneyContext<'_>,
    stops: &[RouteStop],
    late_history: &[f64],
    position: usize,
    order: usize,
    stations: &StationTable,
) -> Result<ContextRow, FrameError> {
    check_order(order)?;
    if position < order {
        return Err(FrameError::NotEnoughPrevious {
            position,
            order,
            available: position,
        });
    }
    if late_history.len() < position {
        return Err(FrameError::History {
            position,
            have: late_history.len(),
            need: position,
        });
    }
    let target = &stops[position];
    let (target_tfc, target_deg) = stations.descriptors(&target.station_code);
    let prev = (1..=order)
        .map(|i| {
            let stop = &stops[position - i];
            let next = &stops[position - i + 1];
            let (tfc, deg) = stations.descriptors(&stop.station_code);
            PrevStation {
                code: stop.station_code.clone(),
                late_mins: late_history[position - i],
                db_km: (next.dfs_km - stop.dfs_km).abs(),
                dfs_km: stop.dfs_km,
                tfc,
                deg,
            }
        })
        .collect();
    Ok(ContextRow {
        train_number: ctx.train_number.to_string(),
        journey_id: ctx.journey_id.to_string(),
        train_type: ctx.metadata.train_type,
        zone: ctx.metadata.zone.clone(),
        is_superfast: ctx.metadata.is_superfast,
        month: ctx.date.month(),
        weekday: ctx.date.weekday().num_days_from_monday(),
        target_code: target.station_code.clone(),
        target_dfs: target.dfs_km,
        target_tfc,
        target_deg,
        prev,
        target_late: None,
    })
}

/// Every `n`-prev-stn row a journey yields, using recorded late minutes throughout.
pub fn enumerate_contexts(
    journey: &Journey,
    n: usize,
    metadata: &TrainMetadata,
    stations: &StationTable,
) -> Result<Vec<ContextRow>, FrameError> {
    check_order(n)?;
    let date = journey
        .start_date()
        .ok_or_else(|| FrameError::EmptyJourney(journey.journey_id.clone()))?;
    let stops: Vec<RouteStop> = journey
        .stops
        .iter()
        .map(|s| RouteStop {
            station_code: s.station_code.clone(),
            dfs_km: s.distance_km,
        })
        .collect();
    let lates: Vec<f64> = journey.stops.iter().map(|s| f64::from(s.latemin)).collect();
    let ctx = JourneyContext {
        train_number: &journey.train_number,
        journey_id: &journey.journey_id,
        date,
        metadata,
    };
    (n..stops.len())
        .map(|pos| {
            let mut row = assemble_row(&ctx, &stops, &lates, pos, n, stations)?;
            row.target_late = Some(lates[pos]);
            Ok(row)
        })
        .collect()
}

/// Ordered category dictionaries for each categorical column, built from training rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryVocab {
    columns: BTreeMap<String, Vec<String>>,
}

pub fn code_column(i: usize) -> String {
    format!("Stn_{i}_code")
}

impl CategoryVocab {
    pub fn column(&self, name: &str) -> &[String] {
        self.columns.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn index_of(&self, column: &str, category: &str) -> Option<usize> {
        self.column(column).binary_search_by(|c| c.as_str().cmp(category)).ok()
    }

    pub fn width(&self, column: &str) -> usize {
        self.column(column).len()
    }

    /// Builds a vocabulary directly from explicit category sets.
    pub fn from_columns<I, C, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = (C, Vec<S>)>,
        C: Into<String>,
        S: Into<String>,
    {
        Self {
            columns: columns
                .into_iter()
                .map(|(name, cats)| {
                    let set: BTreeSet<String> = cats.into_iter().map(Into::into).collect();
                    (name.into(), set.into_iter().collect())
                })
                .collect(),
        }
    }
}

fn categorical_values(row: &ContextRow) -> Vec<(String, String)> {
    let mut values = vec![
        ("train_type".to_string(), row.train_type.as_str().to_string()),
        ("zone".to_string(), row.zone.clone()),
        ("month".to_string(), row.month.to_string()),
        ("weekday".to_string(), row.weekday.to_string()),
    ];
    values.extend(
        row.prev
            .iter()
            .enumerate()
            .map(|(i, p)| (code_column(i + 1), p.code.clone())),
    );
    values
}

/// Vocabulary of a set of rows. Categories are sorted lexicographically.
pub fn build_vocab<'a>(rows: impl IntoIterator<Item = &'a ContextRow>) -> CategoryVocab {
    let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for row in rows {
        for (column, value) in categorical_values(row) {
            sets.entry(column).or_default().insert(value);
        }
    }
    CategoryVocab {
        columns: sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
    }
}

fn one_hot(out: &mut Vec<f64>, vocab: &CategoryVocab, column: &str, value: &str) {
    let start = out.len();
    out.resize(start + vocab.width(column), 0.0);
    if let Some(idx) = vocab.index_of(column, value) {
        out[start + idx] = 1.0;
    }
}

/// Length of an encoded row; a pure function of its arguments.
pub fn encoded_len(profile: FeatureProfile, n: usize, vocab: &CategoryVocab) -> usize {
    let header = ["train_type", "zone", "month", "weekday"]
        .iter()
        .map(|c| vocab.width(c))
        .sum::<usize>()
        + 1;
    let per_station: usize = (1..=n)
        .map(|i| match profile {
            FeatureProfile::Codes => vocab.width(&code_column(i)) + 2,
            FeatureProfile::Numeric => 5,
        })
        .sum();
    header + per_station + 3
}

/// Numeric feature vector of a row. Layout: one-hot train_type, zone, month, weekday;
/// is_superfast; per previous station i = 1..n either `[code one-hot, late, db]` (codes)
/// or `[late, db, dfs, tfc, deg]` (numeric); then Stn_0 dfs, tfc, deg.
pub fn encode_row(row: &ContextRow, profile: FeatureProfile, vocab: &CategoryVocab) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(profile, row.order(), vocab));
    one_hot(&mut out, vocab, "train_type", row.train_type.as_str());
    one_hot(&mut out, vocab, "zone", &row.zone);
    one_hot(&mut out, vocab, "month", &row.month.to_string());
    one_hot(&mut out, vocab, "weekday", &row.weekday.to_string());
    out.push(if row.is_superfast { 1.0 } else { 0.0 });
    for (i, p) in row.prev.iter().enumerate() {
        match profile {
            FeatureProfile::Codes => {
                one_hot(&mut out, vocab, &code_column(i + 1), &p.code);
                out.extend([p.late_mins, p.db_km]);
            }
            FeatureProfile::Numeric => out.extend([p.late_mins, p.db_km, p.dfs_km, p.tfc, p.deg]),
        }
    }
    out.extend([row.target_dfs, row.target_tfc, row.target_deg]);
    out
}

/// Training examples for one target station at one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub station_code: String,
    pub order: usize,
    pub rows: Vec<ContextRow>,
    pub vocab: CategoryVocab,
}

impl FeatureFrame {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Encoded design matrix and target vector.
    pub fn design(&self, profile: FeatureProfile) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = self.rows.iter().map(|r| encode_row(r, profile, &self.vocab)).collect();
        let y = self.rows.iter().map(|r| r.target_late.unwrap_or(0.0)).collect();
        (x, y)
    }

    pub fn train_numbers(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.train_number.as_str()).collect()
    }

    /// Writes the frame as CSV with Table-III-style column names.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), FrameError> {
        let n = self.order;
        let mut header: Vec<String> = ["train_type", "zone", "is_superfast", "month", "weekday"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=n).map(code_column));
        header.extend((1..=n).map(|i| format!("late_mins_Stn_{i}")));
        header.extend((1..=n).map(|i| format!("db_Stn_{}_Stn_{i}", i - 1)));
        header.extend((1..=n).map(|i| format!("Stn_{i}_dfs")));
        header.extend((1..=n).map(|i| format!("tfc_of_Stn_{i}")));
        header.extend((1..=n).map(|i| format!("deg_of_Stn_{i}")));
        header.extend(["Stn_0_dfs", "Stn_0_tfc", "Stn_0_deg", "Stn_0_late_minutes"].map(String::from));

        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.train_type.as_str().to_string(),
                row.zone.clone(),
                row.is_superfast.to_string(),
                row.month.to_string(),
                row.weekday.to_string(),
            ];
            rec.extend(row.prev.iter().map(|p| p.code.clone()));
            rec.extend(row.prev.iter().map(|p| p.late_mins.to_string()));
            rec.extend(row.prev.iter().map(|p| p.db_km.to_string()));
            rec.extend(row.prev.iter().map(|p| p.dfs_km.to_string()));
            rec.extend(row.prev.iter().map(|p| p.tfc.to_string()));
            rec.extend(row.prev.iter().map(|p| p.deg.to_string()));
            rec.extend([
                row.target_dfs.to_string(),
                row.target_tfc.to_string(),
                row.target_deg.to_string(),
                row.target_late.map_or_else(String::new, |v| v.to_string()),
            ]);
            writer.write_record(&rec)?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub type FrameKey = (String, usize);

/// Frames for every (station, order) reachable from `journeys`, orders 1..=n_max.
/// Empty frames are omitted.
pub fn build_frames_from_journeys<'a>(
    journeys: impl IntoIterator<Item = &'a Journey>,
    stations: &StationTable,
    trains: &TrainTable,
    n_max: usize,
) -> Result<BTreeMap<FrameKey, FeatureFrame>, FrameError> {
    check_order(n_max)?;
    let mut rows: BTreeMap<FrameKey, Vec<ContextRow>> = BTreeMap::new();
    let mut metadata_cache: BTreeMap<String, TrainMetadata> = BTreeMap::new();
    for journey in journeys {
        let metadata = metadata_cache
            .entry(journey.train_number.clone())
            .or_insert_with(|| trains.lookup(&journey.train_number));
        for n in 1..=n_max {
            for row in enumerate_contexts(journey, n, metadata, stations)? {
                rows.entry((row.target_code.clone(), n)).or_default().push(row);
            }
        }
    }
    Ok(rows
        .into_iter()
        .map(|((station, order), rows)| {
            let vocab = build_vocab(&rows);
            let frame = FeatureFrame {
                station_code: station.clone(),
                order,
                rows,
                vocab,
            };
            ((station, order), frame)
        })
        .collect())
}

/// Frames from the training portion of the known trains only.
pub fn build_station_frames(
    split: &DataSplit,
    stations: &StationTable,
    trains: &TrainTable,
    n_max: usize,
) -> Result<BTreeMap<FrameKey, FeatureFrame>, FrameError> {
    build_frames_from_journeys(&split.known_train, stations, trains, n_max)
}
