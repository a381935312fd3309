//! Naive reference computations. Written independently of the library code paths so
//! tests can cross-check them; favour obviousness over speed.

use std::collections::BTreeMap;

use chrono::Datelike;

use crate::data_model::{Journey, StationTable};
use crate::omlmpf::PredictionReport;

/// Number of (target, n predecessors) windows in a journey of `len` stops.
pub fn context_count(len: usize, n: usize) -> usize {
    let mut count = 0;
    for target in 0..len {
        if target >= n {
            count += 1;
        }
    }
    count
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> f64 {
    assert_eq!(predicted.len(), actual.len());
    let mut total = 0.0;
    for i in 0..predicted.len() {
        let e = predicted[i] - actual[i];
        total += e * e;
    }
    (total / predicted.len() as f64).sqrt()
}

/// Type-7 quantile using the 1-based position `1 + (n-1)q`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = 1.0 + (v.len() as f64 - 1.0) * q;
    let below = pos.floor();
    let frac = pos - below;
    let i = below as usize;
    if i >= v.len() {
        return v[v.len() - 1];
    }
    v[i - 1] * (1.0 - frac) + v[i] * frac
}

pub fn tukey(values: &[f64]) -> Vec<f64> {
    let q1 = quantile(values, 0.25);
    let q3 = quantile(values, 0.75);
    let spread = q3 - q1;
    values
        .iter()
        .copied()
        .filter(|v| *v >= q1 - 1.5 * spread && *v <= q3 + 1.5 * spread)
        .collect()
}

/// `mean ± z·s`, n−1 sample deviation.
pub fn interval(values: &[f64], z: f64) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / values.len() as f64;
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    let s = (ss / (values.len() - 1) as f64).sqrt();
    Some((mean - z * s, mean + z * s))
}

/// Per-train coverage percentages at 68/95/99, averaged over trains with at least one
/// prediction inside a defined interval group.
pub fn coverage(reports: &[PredictionReport], history: &[Journey]) -> Option<[f64; 3]> {
    let z = [1.0, 1.96, 2.576];
    let mut per_train: BTreeMap<&str, ([f64; 3], f64)> = BTreeMap::new();
    for r in reports {
        let month = r.date.month();
        for s in &r.stations {
            let mut values = Vec::new();
            for j in history {
                if j.train_number != r.train_number || j.stops[0].actarr_date.month() != month {
                    continue;
                }
                for stop in &j.stops {
                    if stop.station_code == s.station_code {
                        values.push(f64::from(stop.latemin));
                    }
                }
            }
            if values.is_empty() {
                continue;
            }
            let kept = tukey(&values);
            let bounds: Vec<Option<(f64, f64)>> = z.iter().map(|z| interval(&kept, *z)).collect();
            if bounds.iter().any(|b| b.is_none()) {
                continue;
            }
            let entry = per_train.entry(&r.train_number).or_insert(([0.0; 3], 0.0));
            entry.1 += 1.0;
            for (inside, b) in entry.0.iter_mut().zip(&bounds) {
                let (lo, hi) = b.unwrap();
                if lo <= s.predicted && s.predicted <= hi {
                    *inside += 1.0;
                }
            }
        }
    }
    if per_train.is_empty() {
        return None;
    }
    let mut out = [0.0; 3];
    for (inside, total) in per_train.values() {
        for (o, c) in out.iter_mut().zip(inside) {
            *o += 100.0 * c / total;
        }
    }
    let n = per_train.len() as f64;
    Some(out.map(|v| v / n))
}

/// Great-circle distance from the straight-line chord between unit vectors.
pub fn chord_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let unit = |lat: f64, lon: f64| {
        let (p, l) = (lat.to_radians(), lon.to_radians());
        [p.cos() * l.cos(), p.cos() * l.sin(), p.sin()]
    };
    let (a, b) = (unit(lat1, lon1), unit(lat2, lon2));
    let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    2.0 * 6371.0 * (chord / 2.0).min(1.0).asin()
}

/// Brute-force two-step nearest station: k closest by geography, then the closest in
/// z-scored (degree, traffic) among them. Ties: geography, then code.
pub fn nearest_known(target: &str, candidates: &[&str], stations: &StationTable, k: usize) -> Option<String> {
    let t = stations.get(target)?;
    let mut all: Vec<(f64, String, f64, f64)> = Vec::new();
    for c in candidates {
        if all.iter().any(|e| e.1 == *c) {
            continue;
        }
        if let Some(f) = stations.get(c) {
            all.push((
                chord_km(t.latitude, t.longitude, f.latitude, f.longitude),
                c.to_string(),
                f64::from(f.degree),
                f64::from(f.traffic),
            ));
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    let mean_d = all.iter().map(|e| e.2).sum::<f64>() / n;
    let mean_t = all.iter().map(|e| e.3).sum::<f64>() / n;
    let mut sd_d = (all.iter().map(|e| (e.2 - mean_d).powi(2)).sum::<f64>() / n).sqrt();
    let mut sd_t = (all.iter().map(|e| (e.3 - mean_t).powi(2)).sum::<f64>() / n).sqrt();
    if sd_d == 0.0 {
        sd_d = 1.0;
    }
    if sd_t == 0.0 {
        sd_t = 1.0;
    }
    let td = (f64::from(t.degree) - mean_d) / sd_d;
    let tt = (f64::from(t.traffic) - mean_t) / sd_t;
    let mut best: Option<(f64, f64, String)> = None;
    for (geo, code, d, tr) in all {
        let dist = (((d - mean_d) / sd_d - td).powi(2) + ((tr - mean_t) / sd_t - tt).powi(2)).sqrt();
        let better = match &best {
            None => true,
            Some((bd, bg, bc)) => dist < *bd || (dist == *bd && (geo < *bg || (geo == *bg && code < *bc))),
        };
        if better {
            best = Some((dist, geo, code));
        }
    }
    best.map(|b| b.2)
}

/// `n·(ln SSE − ln n) + 2p`.
pub fn aic(n: usize, sse: f64, p: usize) -> f64 {
    n as f64 * (sse.ln() - (n as f64).ln()) + 2.0 * p as f64
}

/// `n·(ln SSE − ln n) + p·ln n`.
pub fn bic(n: usize, sse: f64, p: usize) -> f64 {
    n as f64 * (sse.ln() - (n as f64).ln()) + p as f64 * (n as f64).ln()
}

/// Mean late minutes over every stop of `journeys`; the trivial baseline predictor.
pub fn global_mean(journeys: &[Journey]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0.0;
    for j in journeys {
        for s in &j.stops {
            sum += f64::from(s.latemin);
            count += 1.0;
        }
    }
    sum / count
}
