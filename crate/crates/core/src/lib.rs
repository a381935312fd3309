//! Train-agnostic late-minutes prediction with per-station n-order Markov regression
//! models and nearest-known-station transfer to trains never seen in training.

pub mod cli;
pub mod data_model;
pub mod evaluation;
pub mod feature_frames;
pub mod omlmpf;
pub mod railsim;
pub mod regressors;
pub mod station_knn;
