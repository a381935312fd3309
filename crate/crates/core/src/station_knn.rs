//! Two-step nearest-known-station search: a geographic k-NN pre-filter on
//! latitude/longitude, refined by k-NN on standardized (degree, traffic).

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{StationFeatures, StationTable};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("no candidate stations with known features")]
    NoCandidates,
    #[error("station `{0}` has no coordinates and cannot be matched")]
    Unlocated(String),
    #[error("k must be >= 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl From<&StationFeatures> for LatLon {
    fn from(s: &StationFeatures) -> Self {
        Self {
            lat: s.latitude,
            lon: s.longitude,
        }
    }
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// The chosen fallback station and how far it is from the target in both steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnMatch {
    pub station: String,
    pub geo_km: f64,
    /// Euclidean distance in the z-scored (degree, traffic) space of the step-1 set.
    pub feature_distance: f64,
}

fn by_distance_then_code(a: &(f64, &StationFeatures), b: &(f64, &StationFeatures)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| a.1.station_code.cmp(&b.1.station_code))
}

/// Mean and population standard deviation; a zero spread is reported as 1.
fn z_params(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
}

/// Nearest known station to `target` among `candidates`.
///
/// Step 1 keeps the `k` candidates closest by haversine distance. Step 2 z-scores degree
/// and traffic over that set (the target is scaled with the same parameters) and returns
/// the candidate with the smallest Euclidean distance. Ties are broken by geographic
/// distance, then by the lexicographically smallest station code. Candidates without
/// features are skipped.
pub fn nearest_known<'a, I>(
    target: &str,
    candidates: I,
    features: &StationTable,
    cfg: &KnnConfig,
) -> Result<KnnMatch, KnnError>
where
    I: IntoIterator<Item = &'a str>,
{
    if cfg.k == 0 {
        return Err(KnnError::ZeroK);
    }
    let target_f = features
        .get(target)
        .ok_or_else(|| KnnError::Unlocated(target.to_string()))?;
    let here = LatLon::from(target_f);

    let unique: BTreeSet<&str> = candidates.into_iter().collect();
    let mut geo: Vec<(f64, &StationFeatures)> = unique
        .into_iter()
        .filter_map(|c| features.get(c))
        .map(|f| (haversine_km(here, LatLon::from(f)), f))
        .collect();
    if geo.is_empty() {
        return Err(KnnError::NoCandidates);
    }
    geo.sort_by(by_distance_then_code);
    geo.truncate(cfg.k);

    let (deg_mean, deg_sd) = z_params(geo.iter().map(|(_, f)| f64::from(f.degree)));
    let (tfc_mean, tfc_sd) = z_params(geo.iter().map(|(_, f)| f64::from(f.traffic)));
    let z = |f: &StationFeatures| {
        (
            (f64::from(f.degree) - deg_mean) / deg_sd,
            (f64::from(f.traffic) - tfc_mean) / tfc_sd,
        )
    };
    let (td, tt) = z(target_f);
    // Equal feature distances fall back to geographic distance, then station code.
    let (feature_distance, geo_km, best) = geo
        .iter()
        .map(|(g, f)| {
            let (d, t) = z(f);
            (((d - td).powi(2) + (t - tt).powi(2)).sqrt(), *g, *f)
        })
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then_with(|| a.2.station_code.cmp(&b.2.station_code))
        })
        .expect("step-1 set is non-empty");
    Ok(KnnMatch {
        station: best.station_code.clone(),
        geo_km,
        feature_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(code: &str, lat: f64, lon: f64, traffic: u32, degree: u32) -> StationFeatures {
        StationFeatures {
            station_code: code.into(),
            latitude: lat,
            longitude: lon,
            traffic,
            degree,
        }
    }

    #[test]
    fn haversine_basics() {
        let a = LatLon { lat: 12.5, lon: 77.0 };
        assert_eq!(haversine_km(a, a), 0.0);
        let antipodal = haversine_km(LatLon { lat: 0.0, lon: 0.0 }, LatLon { lat: 0.0, lon: 180.0 });
        assert!((antipodal - std::f64::consts::PI * 6371.0).abs() < 1e-6);
        assert!((antipodal - 20015.1).abs() < 0.1);
        let b = LatLon { lat: 28.6, lon: 77.2 };
        assert_eq!(haversine_km(a, b), haversine_km(b, a));
    }

    #[test]
    fn single_candidate() {
        let table: StationTable = [st("T", 0.0, 0.0, 1, 1), st("C", 10.0, 10.0, 50, 9)]
            .into_iter()
            .collect();
        let m = nearest_known("T", ["C"], &table, &KnnConfig::default()).unwrap();
        assert_eq!(m.station, "C");
    }

    #[test]
    fn exact_twin_wins() {
        let table: StationTable = [
            st("T", 20.0, 80.0, 30, 4),
            st("TWIN", 20.0, 80.0, 30, 4),
            st("NEAR", 20.01, 80.0, 5, 1),
            st("FAR", 25.0, 85.0, 30, 4),
        ]
        .into_iter()
        .collect();
        let m = nearest_known("T", ["NEAR", "FAR", "TWIN"], &table, &KnnConfig::default()).unwrap();
        assert_eq!(m.station, "TWIN");
        assert_eq!(m.geo_km, 0.0);
        assert_eq!(m.feature_distance, 0.0);
    }

    #[test]
    fn geographic_prefilter_excludes_distant_twin() {
        let table: StationTable = [
            st("T", 20.0, 80.0, 30, 4),
            st("A", 20.1, 80.0, 1, 1),
            st("B", 20.2, 80.0, 2, 2),
            st("TWIN", 40.0, 60.0, 30, 4),
        ]
        .into_iter()
        .collect();
        let m = nearest_known("T", ["A", "B", "TWIN"], &table, &KnnConfig { k: 2 }).unwrap();
        assert_eq!(m.station, "B");
    }

    #[test]
    fn ties_break_by_code() {
        let table: StationTable = [
            st("T", 0.0, 0.0, 10, 2),
            st("B", 1.0, 0.0, 10, 2),
            st("A", -1.0, 0.0, 10, 2),
        ]
        .into_iter()
        .collect();
        let m = nearest_known("T", ["B", "A"], &table, &KnnConfig::default()).unwrap();
        assert_eq!(m.station, "A");
    }

    #[test]
    fn errors() {
        let table: StationTable = [st("T", 0.0, 0.0, 1, 1)].into_iter().collect();
        assert_eq!(
            nearest_known("T", std::iter::empty(), &table, &KnnConfig::default()),
            Err(KnnError::NoCandidates)
        );
        assert_eq!(
            nearest_known("T", ["MISSING"], &table, &KnnConfig::default()),
            Err(KnnError::NoCandidates)
        );
        assert_eq!(
            nearest_known("X", ["T"], &table, &KnnConfig::default()),
            Err(KnnError::Unlocated("X".into()))
        );
        assert_eq!(
            nearest_known("T", ["T"], &table, &KnnConfig { k: 0 }),
            Err(KnnError::ZeroK)
        );
    }
}
