mod common;

use std::collections::BTreeSet;

use common::*;
use railmarkov::omlmpf::{train_models, ModelKind, PredictConfig, Predictor, RouteInput, TrainParams};
use railmarkov::regressors::ForestParams;

fn small_params() -> TrainParams {
    TrainParams {
        forest: ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        },
        ..TrainParams::default()
    }
}

fn set(letters: &str) -> BTreeSet<String> {
    route(letters).into_iter().collect()
}

#[test]
fn order_lists_match_the_five_train_example() {
    let f = fixture();
    let split = fixture_split(&f);
    assert_eq!(split.known_train.len(), 20);
    assert_eq!(split.unknown_test.len(), 2);
    let reg = train_models(&split, &f.stations, &f.trains, &small_params()).unwrap();

    assert_eq!(reg.ips_lists[&1], set("b c d e f h i j a k l n o q"));
    assert_eq!(reg.ips_lists[&1].len(), 14);
    assert_eq!(reg.ips_lists[&4], set("e f j k l n o q"));
    // KS_b gets an order-2 frame from KT3 only; KS_c gets order 3 from KT3 only.
    assert!(reg.has_model("KS_b", 2) && !reg.has_model("KS_b", 3));
    assert!(reg.has_model("KS_c", 3));
    assert!(!reg.has_model("KS_m", 1));
    assert!(reg.ips_lists[&5]
        .iter()
        .all(|s| ["KS_f", "KS_j", "KS_l", "KS_o", "KS_q"].contains(&s.as_str())));
}

#[test]
fn known_train_uses_its_own_models() {
    let f = fixture();
    let split = fixture_split(&f);
    let reg = train_models(&split, &f.stations, &f.trains, &small_params()).unwrap();
    let predictor = Predictor::new(&reg, &f.stations);
    let kt3 = f.journeys.iter().find(|j| j.train_number == "KT3").unwrap();
    let route_in = RouteInput::from_journey(kt3, &f.trains).unwrap();
    let report = predictor
        .predict_journey(
            &route_in,
            &PredictConfig {
                n: 3,
                ..Default::default()
            },
        )
        .unwrap();
    let used: Vec<(usize, &str)> = report
        .stations
        .iter()
        .map(|s| (s.order_used, s.model_station.as_str()))
        .collect();
    assert_eq!(
        used,
        vec![
            (0, "KS_m"),
            (1, "KS_a"),
            (2, "KS_b"),
            (3, "KS_c"),
            (3, "KS_k"),
            (3, "KS_l")
        ]
    );
    assert!(report.fallbacks().next().is_none());
    assert_eq!(report.stations[0].predicted, 0.0);
}

#[test]
fn unknown_train_falls_back_where_models_are_missing() {
    let f = fixture();
    let split = fixture_split(&f);
    let reg = train_models(&split, &f.stations, &f.trains, &small_params()).unwrap();
    let predictor = Predictor::new(&reg, &f.stations);
    let ut2 = f.journeys.iter().find(|j| j.train_number == "UT2").unwrap();
    let route_in = RouteInput::from_journey(ut2, &f.trains).unwrap();
    for kind in ModelKind::ALL {
        let cfg = PredictConfig {
            n: 3,
            model_kind: kind,
            ..Default::default()
        };
        let report = predictor.predict_journey(&route_in, &cfg).unwrap();
        let fallbacks: Vec<(&str, usize)> = report
            .fallbacks()
            .map(|s| (s.station_code.as_str(), s.order_used))
            .collect();
        assert_eq!(fallbacks, vec![("US_v", 1), ("KS_m", 3), ("US_w", 3)]);
        for s in report.fallbacks() {
            assert!(reg.ips_lists[&s.order_used].contains(&s.model_station));
        }
        let b = &report.stations[2];
        assert_eq!((b.model_station.as_str(), b.order_used), ("KS_b", 2));
        let j = &report.stations[5];
        assert_eq!((j.model_station.as_str(), j.order_used), ("KS_j", 3));
        assert!(report.stations.iter().all(|s| s.predicted.is_finite()));
    }
}
