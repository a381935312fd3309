//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use railmarkov::data_model::{
    segregate, write_journeys, write_station_features, write_train_metadata, DataSplit, Journey, JourneyRecord,
    KnownSelector, SegregateParams, StationFeatures, StationTable, TrainMetadata, TrainTable, TrainType,
};

pub const KNOWN: [(&str, &str); 5] = [
    ("KT1", "a b c d e f"),
    ("KT2", "g b h i e j"),
    ("KT3", "m a b c k l"),
    ("KT4", "g b h i n o"),
    ("KT5", "p c i n o q"),
];
pub const UNKNOWN: [(&str, &str); 2] = [("UT1", "q r i s t f"), ("UT2", "u v b m w j")];

/// Known stations are `a..=q` and unknown ones `r..=w`, mapped to codes `KS_x` / `US_x`.
pub fn code(letter: &str) -> String {
    if letter.as_bytes()[0] <= b'q' {
        format!("KS_{letter}")
    } else {
        format!("US_{letter}")
    }
}

pub fn route(letters: &str) -> Vec<String> {
    letters.split_whitespace().map(code).collect()
}

pub struct Fixture {
    pub journeys: Vec<Journey>,
    pub stations: StationTable,
    pub trains: TrainTable,
}

/// Five known trains with four journeys each and one journey per unknown train.
pub fn fixture() -> Fixture {
    let mut journeys = Vec::new();
    let start = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
    for (t, (train, letters)) in KNOWN.iter().chain(UNKNOWN.iter()).enumerate() {
        let count = if train.starts_with("KT") { 4 } else { 1 };
        for k in 0..count {
            let date = start + chrono::Duration::days((7 * k + t) as i64);
            let id = format!("{train}-{k}");
            let stops = route(letters)
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let late = if i == 0 { 0 } else { (3 * i + k + t) as i32 };
                    JourneyRecord::new(*train, id.as_str(), date, c.as_str(), late, 40.0 * i as f64)
                })
                .collect();
            journeys.push(Journey {
                train_number: train.to_string(),
                journey_id: id,
                stops,
            });
        }
    }

    let mut stations = StationTable::default();
    for (i, letter) in ('a'..='w').enumerate() {
        let row = (i / 5) as f64;
        let col = (i % 5) as f64;
        stations
            .insert(StationFeatures {
                station_code: code(&letter.to_string()),
                latitude: 20.0 + row * 0.7 + col * 0.05,
                longitude: 78.0 + col * 0.9 + row * 0.03,
                traffic: 1 + (i as u32 * 7) % 5,
                degree: 1 + (i as u32 * 3) % 4,
            })
            .unwrap();
    }

    let mut trains = TrainTable::default();
    for (i, (train, _)) in KNOWN.iter().chain(UNKNOWN.iter()).enumerate() {
        trains
            .insert(TrainMetadata {
                train_number: train.to_string(),
                train_type: [TrainType::Express, TrainType::Special, TrainType::Other][i % 3],
                zone: ["ER", "NR"][i % 2].to_string(),
                is_superfast: i % 2 == 0,
            })
            .unwrap();
    }
    Fixture {
        journeys,
        stations,
        trains,
    }
}

pub fn fixture_params() -> SegregateParams {
    SegregateParams {
        selector: KnownSelector::Explicit(KNOWN.iter().map(|(t, _)| t.to_string()).collect::<BTreeSet<_>>()),
        cv_cutoff: NaiveDate::from_ymd_opt(2030, 1, 1).unwrap(),
        holdout_ratio: 0.0,
        seed: 0,
    }
}

pub fn fixture_split(f: &Fixture) -> DataSplit {
    segregate(&f.journeys, &fixture_params()).unwrap()
}

pub fn write_dataset(dir: &Path, f: &Fixture) {
    std::fs::create_dir_all(dir).unwrap();
    let mut buf = Vec::new();
    write_journeys(&mut buf, &f.journeys).unwrap();
    std::fs::write(dir.join("journeys.csv"), &buf).unwrap();
    buf.clear();
    write_station_features(&mut buf, &f.stations).unwrap();
    std::fs::write(dir.join("stations.csv"), &buf).unwrap();
    buf.clear();
    write_train_metadata(&mut buf, &f.trains).unwrap();
    std::fs::write(dir.join("trains.csv"), &buf).unwrap();
}
