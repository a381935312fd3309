//! Journey records, station features and train metadata: CSV ingestion,
//! validation, and the known/unknown + time-based segregation of trains.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOURNEYS_HEADER: [&str; 6] = [
    "train_number",
    "journey_id",
    "actarr_date",
    "station_code",
    "latemin",
    "distance_km",
];
pub const STATIONS_HEADER: [&str; 5] = ["station_code", "latitude", "longitude", "traffic", "degree"];
pub const TRAINS_HEADER: [&str; 4] = ["train_number", "train_type", "zone", "is_superfast"];

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("duplicate station_code `{0}`")]
    DuplicateStation(String),
    #[error("duplicate train_number `{0}`")]
    DuplicateTrain(String),
    #[error("journey `{journey_id}` of train `{train}`: {message}")]
    Journey {
        train: String,
        journey_id: String,
        message: String,
    },
    #[error("known-train set is empty")]
    NoKnownTrains,
    #[error("cutoff {0} excludes every known-train journey")]
    CutoffExcludesAll(NaiveDate),
    #[error("invalid holdout ratio {0}, expected a value in [0, 1)")]
    HoldoutRatio(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One stop of one dated run of one train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyRecord {
    pub train_number: String,
    pub journey_id: String,
    pub actarr_date: NaiveDate,
    pub station_code: String,
    /// Signed arrival delay; negative means the train arrived early.
    pub latemin: i32,
    /// Cumulative distance from the source station.
    pub distance_km: f64,
    /// 1..=12, derived from `actarr_date`.
    pub month: u32,
    /// 0 = Monday ..= 6 = Sunday, derived from `actarr_date`.
    pub weekday: u32,
}

impl JourneyRecord {
    pub fn new(
        train_number: impl Into<String>,
        journey_id: impl Into<String>,
        actarr_date: NaiveDate,
        station_code: impl Into<String>,
        latemin: i32,
        distance_km: f64,
    ) -> Self {
        Self {
            train_number: train_number.into(),
            journey_id: journey_id.into(),
            actarr_date,
            station_code: station_code.into(),
            latemin,
            distance_km,
            month: actarr_date.month(),
            weekday: actarr_date.weekday().num_days_from_monday(),
        }
    }
}

/// The ordered stop list of one dated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Journey {
    pub train_number: String,
    pub journey_id: String,
    pub stops: Vec<JourneyRecord>,
}

impl Journey {
    /// Date of the first stop; month and weekday features of a journey are taken from it.
    pub fn start_date(&self) -> Option<NaiveDate> {
        self.stops.first().map(|s| s.actarr_date)
    }

    pub fn station_codes(&self) -> impl Iterator<Item = &str> {
        self.stops.iter().map(|s| s.station_code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrainType {
    Special,
    Express,
    Other,
}

impl TrainType {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainType::Special => "Special",
            TrainType::Express => "Express",
            TrainType::Other => "Other",
        }
    }
}

impl std::str::FromStr for TrainType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Special" => Ok(TrainType::Special),
            "Express" => Ok(TrainType::Express),
            "Other" => Ok(TrainType::Other),
            other => Err(format!("unknown train_type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFeatures {
    pub station_code: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Number of trains passing through the station.
    pub traffic: u32,
    /// Number of distinct stations directly connected to it.
    pub degree: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub train_number: String,
    pub train_type: TrainType,
    pub zone: String,
    pub is_superfast: bool,
}

impl TrainMetadata {
    /// Metadata assumed for trains missing from trains.csv.
    pub fn unlisted(train_number: &str) -> Self {
        Self {
            train_number: train_number.to_string(),
            train_type: TrainType::Other,
            zone: "UNK".to_string(),
            is_superfast: false,
        }
    }
}

/// Station features keyed by station code. A station absent from the table has no
/// coordinates: it is never a k-NN candidate and its traffic/degree default to 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StationTable {
    rows: BTreeMap<String, StationFeatures>,
}

impl StationTable {
    pub fn get(&self, code: &str) -> Option<&StationFeatures> {
        self.rows.get(code)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StationFeatures> {
        self.rows.values()
    }

    pub fn insert(&mut self, row: StationFeatures) -> Result<(), DataError> {
        if self.rows.contains_key(&row.station_code) {
            return Err(DataError::DuplicateStation(row.station_code));
        }
        self.rows.insert(row.station_code.clone(), row);
        Ok(())
    }

    /// Traffic and degree of a station, defaulting to 0 when the station is not listed.
    pub fn descriptors(&self, code: &str) -> (f64, f64) {
        match self.rows.get(code) {
            Some(f) => (f64::from(f.traffic), f64::from(f.degree)),
            None => {
                log::warn!("station `{code}` has no features; traffic and degree default to 0");
                (0.0, 0.0)
            }
        }
    }
}

impl FromIterator<StationFeatures> for StationTable {
    /// Later duplicates replace earlier ones; use [`StationTable::insert`] to reject them.
    fn from_iter<I: IntoIterator<Item = StationFeatures>>(iter: I) -> Self {
        Self {
            rows: iter.into_iter().map(|r| (r.station_code.clone(), r)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTable {
    rows: BTreeMap<String, TrainMetadata>,
}

impl TrainTable {
    pub fn get(&self, train_number: &str) -> Option<&TrainMetadata> {
        self.rows.get(train_number)
    }

    /// Metadata for a train, falling back to [`TrainMetadata::unlisted`] with a warning.
    pub fn lookup(&self, train_number: &str) -> TrainMetadata {
        match self.rows.get(train_number) {
            Some(m) => m.clone(),
            None => {
                log::warn!("train `{train_number}` not in metadata; using (Other, UNK, not superfast)");
                TrainMetadata::unlisted(train_number)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainMetadata> {
        self.rows.values()
    }

    pub fn insert(&mut self, row: TrainMetadata) -> Result<(), DataError> {
        if self.rows.contains_key(&row.train_number) {
            return Err(DataError::DuplicateTrain(row.train_number));
        }
        self.rows.insert(row.train_number.clone(), row);
        Ok(())
    }
}

impl FromIterator<TrainMetadata> for TrainTable {
    fn from_iter<I: IntoIterator<Item = TrainMetadata>>(iter: I) -> Self {
        Self {
            rows: iter.into_iter().map(|r| (r.train_number.clone(), r)).collect(),
        }
    }
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), DataError> {
    let found = reader.headers()?;
    // An empty stream has an empty header record; the caller treats it as an empty file.
    if found.is_empty() {
        return Ok(());
    }
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(DataError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<&'r str, DataError> {
    record.get(idx).map(str::trim).ok_or_else(|| DataError::Row {
        line,
        message: format!("missing column `{name}`"),
    })
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: u64, name: &str) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| DataError::Row {
        line,
        message: format!("invalid {name} `{raw}`: {e}"),
    })
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

/// Parses journeys.csv. Records are grouped by `(train_number, journey_id)`; groups keep
/// the order of their first row and stops keep row order.
pub fn parse_journeys<R: Read>(source: R) -> Result<Vec<Journey>, DataError> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &JOURNEYS_HEADER)?;

    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut journeys: Vec<Journey> = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = line_of(&record);
        let train_number = field(&record, 0, line, "train_number")?;
        let journey_id = field(&record, 1, line, "journey_id")?;
        let date_raw = field(&record, 2, line, "actarr_date")?;
        let station_code = field(&record, 3, line, "station_code")?;
        let latemin: i32 = parse_field(field(&record, 4, line, "latemin")?, line, "latemin")?;
        let distance_km: f64 = parse_field(field(&record, 5, line, "distance_km")?, line, "distance_km")?;

        let actarr_date = NaiveDate::parse_from_str(date_raw, DATE_FORMAT).map_err(|e| DataError::Row {
            line,
            message: format!("malformed actarr_date `{date_raw}`: {e}"),
        })?;
        if train_number.is_empty() || journey_id.is_empty() {
            return Err(DataError::Row {
                line,
                message: "empty train_number or journey_id".into(),
            });
        }
        if station_code.is_empty() {
            return Err(DataError::Row {
                line,
                message: "empty station_code".into(),
            });
        }
        if !distance_km.is_finite() || distance_km < 0.0 {
            return Err(DataError::Row {
                line,
                message: format!("negative or non-finite distance_km {distance_km}"),
            });
        }

        let key = (train_number.to_string(), journey_id.to_string());
        let slot = *index.entry(key).or_insert_with(|| {
            journeys.push(Journey {
                train_number: train_number.to_string(),
                journey_id: journey_id.to_string(),
                stops: Vec::new(),
            });
            journeys.len() - 1
        });
        let journey = &mut journeys[slot];
        if let Some(prev) = journey.stops.last() {
            if distance_km < prev.distance_km {
                return Err(DataError::Row {
                    line,
                    message: format!(
                        "distance_km {distance_km} decreases after {} within journey `{journey_id}`",
                        prev.distance_km
                    ),
                });
            }
        }
        journey.stops.push(JourneyRecord::new(
            train_number,
            journey_id,
            actarr_date,
            station_code,
            latemin,
            distance_km,
        ));
    }
    Ok(journeys)
}

pub fn parse_station_features<R: Read>(source: R) -> Result<StationTable, DataError> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &STATIONS_HEADER)?;
    let mut table = StationTable::default();
    for result in reader.records() {
        let record = result?;
        let line = line_of(&record);
        let station_code = field(&record, 0, line, "station_code")?;
        if station_code.is_empty() {
            return Err(DataError::Row {
                line,
                message: "empty station_code".into(),
            });
        }
        let latitude: f64 = parse_field(field(&record, 1, line, "latitude")?, line, "latitude")?;
        let longitude: f64 = parse_field(field(&record, 2, line, "longitude")?, line, "longitude")?;
        let traffic: u32 = parse_field(field(&record, 3, line, "traffic")?, line, "traffic")?;
        let degree: u32 = parse_field(field(&record, 4, line, "degree")?, line, "degree")?;
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(DataError::Row {
                line,
                message: format!("latitude {latitude} outside [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(DataError::Row {
                line,
                message: format!("longitude {longitude} outside [-180, 180]"),
            });
        }
        table.insert(StationFeatures {
            station_code: station_code.to_string(),
            latitude,
            longitude,
            traffic,
            degree,
        })?;
    }
    Ok(table)
}

pub fn parse_train_metadata<R: Read>(source: R) -> Result<TrainTable, DataError> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &TRAINS_HEADER)?;
    let mut table = TrainTable::default();
    for result in reader.records() {
        let record = result?;
        let line = line_of(&record);
        let train_number = field(&record, 0, line, "train_number")?;
        let train_type: TrainType = parse_field(field(&record, 1, line, "train_type")?, line, "train_type")?;
        let zone = field(&record, 2, line, "zone")?;
        let is_superfast: bool = parse_field(field(&record, 3, line, "is_superfast")?, line, "is_superfast")?;
        table.insert(TrainMetadata {
            train_number: train_number.to_string(),
            train_type,
            zone: zone.to_string(),
            is_superfast,
        })?;
    }
    Ok(table)
}

pub fn write_journeys<W: Write>(sink: W, journeys: &[Journey]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(JOURNEYS_HEADER)?;
    for stop in journeys.iter().flat_map(|j| &j.stops) {
        writer.write_record([
            stop.train_number.as_str(),
            stop.journey_id.as_str(),
            &stop.actarr_date.format(DATE_FORMAT).to_string(),
            stop.station_code.as_str(),
            &stop.latemin.to_string(),
            &stop.distance_km.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_station_features<W: Write>(sink: W, table: &StationTable) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(STATIONS_HEADER)?;
    for s in table.iter() {
        writer.write_record([
            s.station_code.as_str(),
            &s.latitude.to_string(),
            &s.longitude.to_string(),
            &s.traffic.to_string(),
            &s.degree.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_train_metadata<W: Write>(sink: W, table: &TrainTable) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(TRAINS_HEADER)?;
    for t in table.iter() {
        writer.write_record([
            t.train_number.as_str(),
            t.train_type.as_str(),
            t.zone.as_str(),
            if t.is_superfast { "true" } else { "false" },
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// How the known trains are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnownSelector {
    Explicit(BTreeSet<String>),
    /// Trains with at least this many journeys are known.
    MinJourneys(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegregateParams {
    pub selector: KnownSelector,
    /// Known-train journeys starting on or before this date feed training and cross-validation.
    pub cv_cutoff: NaiveDate,
    /// Fraction of each known train's pre-cutoff journeys held out for cross-validation.
    pub holdout_ratio: f64,
    pub seed: u64,
}

impl SegregateParams {
    /// The 4:1 train/cross-validation ratio.
    pub const DEFAULT_HOLDOUT: f64 = 0.2;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    /// Training portion of the known trains' pre-cutoff journeys. Only these feed frames.
    pub known_train: Vec<Journey>,
    /// Cross-validation portion of the known trains' pre-cutoff journeys.
    pub known_cv: Vec<Journey>,
    pub known_test: Vec<Journey>,
    pub unknown_test: Vec<Journey>,
    pub known_trains: BTreeSet<String>,
    pub unknown_trains: BTreeSet<String>,
    pub known_stations: BTreeSet<String>,
}

impl DataSplit {
    /// Training and cross-validation journeys together.
    pub fn known_train_cv(&self) -> impl Iterator<Item = &Journey> {
        self.known_train.iter().chain(&self.known_cv)
    }

    pub fn all_journeys(&self) -> impl Iterator<Item = &Journey> {
        self.known_train_cv().chain(&self.known_test).chain(&self.unknown_test)
    }
}

/// Journey count per train.
pub fn journey_counts(journeys: &[Journey]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for j in journeys {
        *counts.entry(j.train_number.clone()).or_insert(0) += 1;
    }
    counts
}

/// Splits journeys into known-train train/cv/test sets and the unknown-train test set.
///
/// The train/cv split is per known train over whole journeys: journeys are ordered by
/// (start date, id), shuffled with a seeded ChaCha8 stream and the first
/// `round(n * holdout_ratio)` become cross-validation (at least one journey always
/// stays in training).
pub fn segregate(journeys: &[Journey], params: &SegregateParams) -> Result<DataSplit, DataError> {
    if !(0.0..1.0).contains(&params.holdout_ratio) {
        return Err(DataError::HoldoutRatio(params.holdout_ratio));
    }
    let counts = journey_counts(journeys);
    let known_trains: BTreeSet<String> = match &params.selector {
        KnownSelector::Explicit(list) => list.iter().filter(|t| counts.contains_key(*t)).cloned().collect(),
        KnownSelector::MinJourneys(min) => counts
            .iter()
            .filter(|(_, &c)| c >= *min)
            .map(|(t, _)| t.clone())
            .collect(),
    };
    if known_trains.is_empty() {
        return Err(DataError::NoKnownTrains);
    }
    let unknown_trains: BTreeSet<String> = counts.keys().filter(|t| !known_trains.contains(*t)).cloned().collect();

    let mut pre_cutoff: BTreeMap<&str, Vec<&Journey>> = BTreeMap::new();
    let mut known_test = Vec::new();
    let mut unknown_test = Vec::new();
    let mut known_stations = BTreeSet::new();
    for j in journeys {
        if !known_trains.contains(&j.train_number) {
            unknown_test.push(j.clone());
            continue;
        }
        known_stations.extend(j.station_codes().map(str::to_string));
        match j.start_date() {
            Some(d) if d <= params.cv_cutoff => pre_cutoff.entry(&j.train_number).or_default().push(j),
            Some(_) => known_test.push(j.clone()),
            None => {
                return Err(DataError::Journey {
                    train: j.train_number.clone(),
                    journey_id: j.journey_id.clone(),
                    message: "journey has no stops".into(),
                })
            }
        }
    }
    if pre_cutoff.is_empty() {
        return Err(DataError::CutoffExcludesAll(params.cv_cutoff));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut known_train = Vec::new();
    let mut known_cv = Vec::new();
    for (_, mut list) in pre_cutoff {
        list.sort_by(|a, b| (a.start_date(), &a.journey_id).cmp(&(b.start_date(), &b.journey_id)));
        list.shuffle(&mut rng);
        let n = list.len();
        let n_cv = ((n as f64 * params.holdout_ratio).round() as usize).min(n - 1);
        let (cv, train) = list.split_at(n_cv);
        known_cv.extend(cv.iter().map(|j| (*j).clone()));
        known_train.extend(train.iter().map(|j| (*j).clone()));
    }
    // Stable output order regardless of shuffle.
    let order = |a: &Journey, b: &Journey| {
        (&a.train_number, a.start_date(), &a.journey_id).cmp(&(&b.train_number, b.start_date(), &b.journey_id))
    };
    known_train.sort_by(order);
    known_cv.sort_by(order);

    Ok(DataSplit {
        known_train,
        known_cv,
        known_test,
        unknown_test,
        known_trains,
        unknown_trains,
        known_stations,
    })
}

/// A cutoff date that leaves roughly `fraction` of the selected known trains' journeys on
/// or before it.
pub fn cutoff_at_fraction(journeys: &[Journey], selector: &KnownSelector, fraction: f64) -> Option<NaiveDate> {
    let counts = journey_counts(journeys);
    let is_known = |t: &str| match selector {
        KnownSelector::Explicit(list) => list.contains(t),
        KnownSelector::MinJourneys(min) => counts.get(t).is_some_and(|c| c >= min),
    };
    let mut dates: Vec<NaiveDate> = journeys
        .iter()
        .filter(|j| is_known(&j.train_number))
        .filter_map(Journey::start_date)
        .collect();
    if dates.is_empty() {
        return None;
    }
    dates.sort();
    let idx = ((dates.len() as f64 * fraction.clamp(0.0, 1.0)).ceil() as usize).clamp(1, dates.len()) - 1;
    Some(dates[idx])
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "train_number,journey_id,actarr_date,station_code,latemin,distance_km\n";

    #[test]
    fn one_row_derives_month_and_weekday() {
        let csv = format!("{HEADER}12307,J1,2016-09-19,HWH,0,0\n");
        let journeys = parse_journeys(csv.as_bytes()).unwrap();
        assert_eq!(journeys.len(), 1);
        let stop = &journeys[0].stops[0];
        assert_eq!(stop.month, 9);
        // 2016-09-19 was a Monday.
        assert_eq!(stop.weekday, 0);
    }

    #[test]
    fn table_row_values_parse_losslessly() {
        let csv = format!("{HEADER}22811,J1,2016-09-19,BBS,0,0\n22811,J1,2016-09-19,CTC,107,204\n");
        let journeys = parse_journeys(csv.as_bytes()).unwrap();
        let stop = &journeys[0].stops[1];
        assert_eq!(stop.latemin, 107);
        assert_eq!(stop.distance_km, 204.0);
        assert_eq!(stop.station_code, "CTC");
    }

    #[test]
    fn empty_body_is_empty_list() {
        assert!(parse_journeys(HEADER.as_bytes()).unwrap().is_empty());
        assert!(parse_journeys("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_date_reports_line() {
        let csv = format!("{HEADER}1,J,2016-09-19,A,0,0\n1,J,19 Sep 2016,B,3,10\n");
        match parse_journeys(csv.as_bytes()) {
            Err(DataError::Row { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("actarr_date"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn negative_distance_is_row_error() {
        let csv = format!("{HEADER}1,J,2016-09-19,A,0,-1\n");
        assert!(matches!(
            parse_journeys(csv.as_bytes()),
            Err(DataError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn decreasing_distance_is_row_error() {
        let csv = format!("{HEADER}1,J,2016-09-19,A,0,0\n1,J,2016-09-19,B,0,50\n1,J,2016-09-19,C,0,40\n");
        assert!(matches!(
            parse_journeys(csv.as_bytes()),
            Err(DataError::Row { line: 4, .. })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "train,journey,date,station,late,dist\n1,J,2016-09-19,A,0,0\n";
        assert!(matches!(parse_journeys(csv.as_bytes()), Err(DataError::Header { .. })));
    }

    #[test]
    fn station_features_parse_and_validate() {
        let ok = "station_code,latitude,longitude,traffic,degree\nNDLS,28.64,77.22,310,12\n";
        let table = parse_station_features(ok.as_bytes()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.get("NDLS").unwrap().traffic, 310);

        let dup = "station_code,latitude,longitude,traffic,degree\nA,1,1,1,1\nA,2,2,2,2\n";
        match parse_station_features(dup.as_bytes()) {
            Err(DataError::DuplicateStation(code)) => assert_eq!(code, "A"),
            other => panic!("expected duplicate error, got {other:?}"),
        }

        let bad_lat = "station_code,latitude,longitude,traffic,degree\nA,91,1,1,1\n";
        assert!(matches!(
            parse_station_features(bad_lat.as_bytes()),
            Err(DataError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn station_features_scale_to_network_size() {
        let mut csv = String::from("station_code,latitude,longitude,traffic,degree\n");
        for i in 0..819 {
            csv.push_str(&format!(
                "S{i:04},{},{},{},{}\n",
                20.0 + i as f64 * 0.01,
                80.0,
                i % 40,
                i % 7
            ));
        }
        assert_eq!(parse_station_features(csv.as_bytes()).unwrap().len(), 819);
    }

    #[test]
    fn train_metadata_parse_and_default() {
        let csv = "train_number,train_type,zone,is_superfast\n13050,Express,ER,false\n";
        let table = parse_train_metadata(csv.as_bytes()).unwrap();
        assert_eq!(table.get("13050").unwrap().train_type, TrainType::Express);
        assert!(
            parse_train_metadata("train_number,train_type,zone,is_superfast\n".as_bytes())
                .unwrap()
                .is_empty()
        );
        let fallback = table.lookup("99999");
        assert_eq!(fallback, TrainMetadata::unlisted("99999"));
        assert_eq!(fallback.zone, "UNK");

        let dup = "train_number,train_type,zone,is_superfast\n1,Other,ER,true\n1,Other,ER,true\n";
        assert!(matches!(
            parse_train_metadata(dup.as_bytes()),
            Err(DataError::DuplicateTrain(_))
        ));
    }

    fn journey(train: &str, id: &str, date: &str, stations: &[&str]) -> Journey {
        let date = NaiveDate::parse_from_str(date, DATE_FORMAT).unwrap();
        Journey {
            train_number: train.into(),
            journey_id: id.into(),
            stops: stations
                .iter()
                .enumerate()
                .map(|(i, s)| JourneyRecord::new(train, id, date, *s, i as i32, i as f64 * 10.0))
                .collect(),
        }
    }

    fn two_train_corpus() -> Vec<Journey> {
        let mut js = Vec::new();
        for d in 1..=6 {
            js.push(journey(
                "A",
                &format!("A{d}"),
                &format!("2016-01-0{d}"),
                &["X", "Y", "Z"],
            ));
        }
        js.push(journey("B", "B1", "2016-01-02", &["Y", "W"]));
        js.push(journey("B", "B2", "2016-01-03", &["Y", "W"]));
        js
    }

    #[test]
    fn threshold_selects_known_and_routes_rest_to_unknown() {
        let js = two_train_corpus();
        let params = SegregateParams {
            selector: KnownSelector::MinJourneys(5),
            cv_cutoff: NaiveDate::from_ymd_opt(2016, 1, 5).unwrap(),
            holdout_ratio: 0.2,
            seed: 3,
        };
        let split = segregate(&js, &params).unwrap();
        assert_eq!(split.known_trains, BTreeSet::from(["A".to_string()]));
        assert_eq!(split.unknown_test.len(), 2);
        assert!(split.unknown_test.iter().all(|j| j.train_number == "B"));
        assert!(split.known_trains.is_disjoint(&split.unknown_trains));
        assert_eq!(split.known_train.len() + split.known_cv.len(), 5);
        assert_eq!(split.known_cv.len(), 1);
        assert_eq!(split.known_test.len(), 1);
        assert_eq!(split.known_stations.len(), 3);
        assert_eq!(segregate(&js, &params).unwrap(), split);
    }

    #[test]
    fn segregate_errors() {
        let js = two_train_corpus();
        let mut params = SegregateParams {
            selector: KnownSelector::MinJourneys(50),
            cv_cutoff: NaiveDate::from_ymd_opt(2016, 1, 5).unwrap(),
            holdout_ratio: 0.2,
            seed: 3,
        };
        assert!(matches!(segregate(&js, &params), Err(DataError::NoKnownTrains)));
        params.selector = KnownSelector::Explicit(BTreeSet::from(["A".to_string()]));
        params.cv_cutoff = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        assert!(matches!(segregate(&js, &params), Err(DataError::CutoffExcludesAll(_))));
    }

    #[test]
    fn round_trip_through_csv() {
        let js = two_train_corpus();
        let mut buf = Vec::new();
        write_journeys(&mut buf, &js).unwrap();
        assert_eq!(parse_journeys(buf.as_slice()).unwrap(), js);
    }
}
