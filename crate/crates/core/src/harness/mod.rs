//! Datasets, synthetic worlds, the remote scorer, configuration and CLI.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod remote;
pub mod world;

pub use config::Config;
pub use dataset::{augment, ingest, DatasetBundle, DatasetStats, FilterReport, Format};
pub use remote::{RemoteConfig, RemoteScorer, ScoreRequest};
pub use world::{exact_posterior, gen_world, SyntheticWorld};
