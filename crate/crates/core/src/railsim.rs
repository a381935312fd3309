//! Synthetic rail network and journey generator with delay dynamics of a chosen Markov
//! order, plus brute-force oracles used to cross-check the main implementations.
//!
//! Delay at position `i` of a journey:
//!
//! ```text
//! d_i = max(floor, round(Σ_{j=1..m} w_j d_{i-j} + α·traffic + β·degree + bias(s_i)
//!                        + A·sin(2π(month-1)/12) + N(0, σ²)))
//! ```
//!
//! with `d_0 = 0` at the source.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{
    write_journeys, write_station_features, write_train_metadata, DataError, Journey, JourneyRecord, StationFeatures,
    StationTable, TrainMetadata, TrainTable, TrainType,
};

pub mod oracle;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    /// Stations available to known-train routes.
    pub n_stations: usize,
    pub n_known_trains: usize,
    pub n_unknown_trains: usize,
    /// Stations used only by one unknown train, never by a known train.
    pub fresh_stations_per_unknown: usize,
    /// Inclusive route length range.
    pub route_len: (usize, usize),
    pub known_journeys: (usize, usize),
    pub unknown_journeys: (usize, usize),
    /// Markov order m of the ground-truth delay recursion, 1..=3.
    pub ground_truth_order: usize,
    /// Propagation weights w_1..w_m. Empty when read from a file that omits them;
    /// [`SimConfig::fill_propagation`] then derives them from the order.
    #[serde(default)]
    pub propagation: Vec<f64>,
    pub congestion_alpha: f64,
    pub congestion_beta: f64,
    /// Standard deviation of the per-station delay offset.
    pub station_bias_sd: f64,
    pub seasonal_amplitude: f64,
    pub noise_sigma: f64,
    pub delay_floor: f64,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
    pub start_date: NaiveDate,
    pub span_days: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_stations: 40,
            n_known_trains: 20,
            n_unknown_trains: 6,
            fresh_stations_per_unknown: 3,
            route_len: (8, 14),
            known_journeys: (24, 32),
            unknown_journeys: (3, 6),
            ground_truth_order: 1,
            propagation: vec![0.8],
            congestion_alpha: 0.15,
            congestion_beta: 0.8,
            station_bias_sd: 4.0,
            seasonal_amplitude: 5.0,
            noise_sigma: 2.0,
            delay_floor: -30.0,
            lat_range: (20.0, 28.0),
            lon_range: (75.0, 88.0),
            start_date: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            span_days: 730,
        }
    }
}

impl SimConfig {
    /// Default weights for a ground-truth order.
    pub fn default_propagation(order: usize) -> Vec<f64> {
        match order {
            1 => vec![0.8],
            2 => vec![0.5, 0.4],
            _ => vec![0.4, 0.3, 0.2],
        }
    }

    /// Uses the default weights for `ground_truth_order` when none were given.
    pub fn fill_propagation(&mut self) {
        if self.propagation.is_empty() {
            self.propagation = Self::default_propagation(self.ground_truth_order);
        }
    }

    pub fn with_order(order: usize) -> Self {
        Self {
            ground_truth_order: order,
            propagation: Self::default_propagation(order),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(1..=3).contains(&self.ground_truth_order) {
            return bad(format!("ground_truth_order {} outside 1..=3", self.ground_truth_order));
        }
        if self.propagation.len() != self.ground_truth_order {
            return bad(format!(
                "{} propagation weights for order {}",
                self.propagation.len(),
                self.ground_truth_order
            ));
        }
        let (lo, hi) = self.route_len;
        if lo < 2 || lo > hi {
            return bad(format!("route_len ({lo}, {hi}) must satisfy 2 <= min <= max"));
        }
        if hi > self.n_stations {
            return bad(format!(
                "route length {hi} exceeds the {} available stations",
                self.n_stations
            ));
        }
        if self.n_unknown_trains > 0 && self.fresh_stations_per_unknown >= lo {
            return bad(format!(
                "{} fresh stations leave no room for known stations on a route of {lo}",
                self.fresh_stations_per_unknown
            ));
        }
        if self.n_known_trains == 0 {
            return bad("at least one known train is required".into());
        }
        for (name, (a, b)) in [
            ("known_journeys", self.known_journeys),
            ("unknown_journeys", self.unknown_journeys),
        ] {
            if a == 0 || a > b {
                return bad(format!("{name} ({a}, {b}) must satisfy 1 <= min <= max"));
            }
            if b as u32 > self.span_days {
                return bad(format!("{name} max {b} exceeds span of {} days", self.span_days));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.station_bias_sd >= 0.0) {
            return bad("noise_sigma and station_bias_sd must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub stations: StationTable,
    /// Train number → ordered station codes.
    pub routes: BTreeMap<String, Vec<String>>,
    pub trains: TrainTable,
    pub known_trains: BTreeSet<String>,
    pub unknown_trains: BTreeSet<String>,
    /// Per-station delay offset added by the congestion term.
    pub bias: BTreeMap<String, f64>,
}

impl Network {
    /// Recomputes traffic (trains through) and degree (distinct neighbours) from routes.
    pub fn refresh_descriptors(&mut self) {
        let mut traffic: BTreeMap<&str, u32> = BTreeMap::new();
        let mut neighbours: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for route in self.routes.values() {
            for s in route.iter().collect::<BTreeSet<_>>() {
                *traffic.entry(s).or_default() += 1;
            }
            for w in route.windows(2) {
                neighbours.entry(&w[0]).or_default().insert(&w[1]);
                neighbours.entry(&w[1]).or_default().insert(&w[0]);
            }
        }
        self.stations = self
            .stations
            .iter()
            .map(|s| StationFeatures {
                traffic: traffic.get(s.station_code.as_str()).copied().unwrap_or(0),
                degree: neighbours.get(s.station_code.as_str()).map_or(0, |n| n.len() as u32),
                ..s.clone()
            })
            .collect();
    }

    pub fn congestion(&self, cfg: &SimConfig, station: &str) -> f64 {
        let f = self.stations.get(station);
        let traffic = f.map_or(0.0, |f| f64::from(f.traffic));
        let degree = f.map_or(0.0, |f| f64::from(f.degree));
        cfg.congestion_alpha * traffic + cfg.congestion_beta * degree + self.bias.get(station).copied().unwrap_or(0.0)
    }

    /// Cumulative distance along a route from haversine legs, rounded to 0.01 km and
    /// kept strictly increasing.
    pub fn route_distances(&self, route: &[String]) -> Vec<f64> {
        let mut out = Vec::with_capacity(route.len());
        let mut total = 0.0;
        for (i, code) in route.iter().enumerate() {
            if i > 0 {
                let a = &self.stations.get(&route[i - 1]).expect("route station listed");
                let b = &self.stations.get(code).expect("route station listed");
                let leg = crate::station_knn::haversine_km((*a).into(), (*b).into());
                let next = (((total + leg) * 100.0_f64).round() / 100.0).max(total + 0.01);
                total = (next * 100.0).round() / 100.0;
            }
            out.push(total);
        }
        out
    }
}

const ZONES: [&str; 4] = ["ER", "NR", "SR", "WR"];
const TYPES: [TrainType; 3] = [TrainType::Express, TrainType::Special, TrainType::Other];

fn place(rng: &mut ChaCha8Rng, cfg: &SimConfig, code: String) -> StationFeatures {
    let lat = rng.gen_range(cfg.lat_range.0..=cfg.lat_range.1);
    let lon = rng.gen_range(cfg.lon_range.0..=cfg.lon_range.1);
    StationFeatures {
        station_code: code,
        latitude: (lat * 1e4).round() / 1e4,
        longitude: (lon * 1e4).round() / 1e4,
        traffic: 0,
        degree: 0,
    }
}

/// Orders stations along a random direction so consecutive stops are geographically close.
fn order_along_axis(rng: &mut ChaCha8Rng, stations: &StationTable, mut codes: Vec<String>) -> Vec<String> {
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let key = |c: &String| {
        let f = stations.get(c).expect("station placed");
        f.latitude * theta.cos() + f.longitude * theta.sin()
    };
    codes.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| a.cmp(b)));
    codes
}

pub fn generate_network(cfg: &SimConfig) -> Result<Network, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stations = StationTable::default();
    let pool: Vec<String> = (0..cfg.n_stations).map(|i| format!("KS{i:03}")).collect();
    for code in &pool {
        stations.insert(place(&mut rng, cfg, code.clone()))?;
    }

    let mut routes = BTreeMap::new();
    let mut trains = TrainTable::default();
    let mut known_trains = BTreeSet::new();
    let mut unknown_trains = BTreeSet::new();
    let metadata = |rng: &mut ChaCha8Rng, number: &str| TrainMetadata {
        train_number: number.to_string(),
        train_type: TYPES[rng.gen_range(0..TYPES.len())],
        zone: ZONES[rng.gen_range(0..ZONES.len())].to_string(),
        is_superfast: rng.gen_bool(0.4),
    };

    for t in 0..cfg.n_known_trains {
        let number = format!("{}", 12001 + t);
        let len = rng.gen_range(cfg.route_len.0..=cfg.route_len.1);
        let picked: Vec<String> = sample(&mut rng, pool.len(), len)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        routes.insert(number.clone(), order_along_axis(&mut rng, &stations, picked));
        trains.insert(metadata(&mut rng, &number))?;
        known_trains.insert(number);
    }
    for t in 0..cfg.n_unknown_trains {
        let number = format!("{}", 15001 + t);
        let len = rng.gen_range(cfg.route_len.0..=cfg.route_len.1);
        let mut picked: Vec<String> = sample(&mut rng, pool.len(), len - cfg.fresh_stations_per_unknown)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        for f in 0..cfg.fresh_stations_per_unknown {
            let code = format!("US{t:02}{f:02}");
            stations.insert(place(&mut rng, cfg, code.clone()))?;
            picked.push(code);
        }
        routes.insert(number.clone(), order_along_axis(&mut rng, &stations, picked));
        trains.insert(metadata(&mut rng, &number))?;
        unknown_trains.insert(number);
    }

    let bias_dist = Normal::new(0.0, cfg.station_bias_sd).map_err(|e| SimError::Config(e.to_string()))?;
    let bias = stations
        .iter()
        .map(|s| (s.station_code.clone(), bias_dist.sample(&mut rng)))
        .collect();

    let mut network = Network {
        stations,
        routes,
        trains,
        known_trains,
        unknown_trains,
        bias,
    };
    network.refresh_descriptors();
    Ok(network)
}

pub fn seasonal(cfg: &SimConfig, month: u32) -> f64 {
    cfg.seasonal_amplitude * (std::f64::consts::TAU * f64::from(month - 1) / 12.0).sin()
}

/// Delays along one route under the ground-truth recursion.
pub fn simulate_delays<R: Rng + ?Sized>(
    network: &Network,
    cfg: &SimConfig,
    route: &[String],
    month: u32,
    rng: &mut R,
) -> Vec<i32> {
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("sigma >= 0");
    let mut delays: Vec<i32> = Vec::with_capacity(route.len());
    delays.push(0);
    for (i, station) in route.iter().enumerate().skip(1) {
        let carried: f64 = cfg
            .propagation
            .iter()
            .enumerate()
            .filter(|(j, _)| *j < i)
            .map(|(j, w)| w * f64::from(delays[i - 1 - j]))
            .sum();
        let eps = if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        let d = carried + network.congestion(cfg, station) + seasonal(cfg, month) + eps;
        delays.push(d.round().max(cfg.delay_floor) as i32);
    }
    delays
}

pub fn generate_journeys(network: &Network, cfg: &SimConfig) -> Result<Vec<Journey>, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut journeys = Vec::new();
    for (number, route) in &network.routes {
        let range = if network.unknown_trains.contains(number) {
            cfg.unknown_journeys
        } else {
            cfg.known_journeys
        };
        let count = rng.gen_range(range.0..=range.1);
        let mut offsets = sample(&mut rng, cfg.span_days as usize, count).into_vec();
        offsets.sort_unstable();
        let distances = network.route_distances(route);
        for offset in offsets {
            let date = cfg.start_date + Duration::days(offset as i64);
            let journey_id = format!("{number}-{}", date.format("%Y%m%d"));
            let delays = simulate_delays(network, cfg, route, date.month(), &mut rng);
            let stops = route
                .iter()
                .zip(&distances)
                .zip(&delays)
                .map(|((code, dist), late)| {
                    JourneyRecord::new(number.as_str(), journey_id.as_str(), date, code.as_str(), *late, *dist)
                })
                .collect();
            journeys.push(Journey {
                train_number: number.clone(),
                journey_id,
                stops,
            });
        }
    }
    Ok(journeys)
}

/// A generated network with its journeys.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub config: SimConfig,
    pub network: Network,
    pub journeys: Vec<Journey>,
}

pub fn simulate(cfg: &SimConfig) -> Result<SimDataset, SimError> {
    let network = generate_network(cfg)?;
    let journeys = generate_journeys(&network, cfg)?;
    Ok(SimDataset {
        config: cfg.clone(),
        network,
        journeys,
    })
}

pub const SCENARIO_FILE: &str = "scenario.json";

impl SimDataset {
    /// Writes journeys.csv, stations.csv, trains.csv and scenario.json into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        write_journeys(&mut buf, &self.journeys)?;
        fs::write(dir.join("journeys.csv"), &buf)?;
        buf.clear();
        write_station_features(&mut buf, &self.network.stations)?;
        fs::write(dir.join("stations.csv"), &buf)?;
        buf.clear();
        write_train_metadata(&mut buf, &self.network.trains)?;
        fs::write(dir.join("trains.csv"), &buf)?;
        let mut json = serde_json::to_vec_pretty(&self.config)?;
        json.push(b'\n');
        fs::write(dir.join(SCENARIO_FILE), json)?;
        Ok(())
    }
}
