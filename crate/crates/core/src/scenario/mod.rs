//! Scenario configuration, simulation of the true plant, the estimation loop
//! and output files.

pub mod config;
pub mod output;
pub mod runner;

use std::path::Path;

pub use config::ScenarioConfig;
pub use runner::{simulate, Outcome, Prepared, RunArtifacts};

use crate::error::{Error, Result};

/// Scenarios bundled with the crate, by name.
pub const FIXTURES: [(&str, &str); 4] = [
    ("scenario1", include_str!("../../fixtures/scenario1.toml")),
    ("scenario2", include_str!("../../fixtures/scenario2.toml")),
    ("test_system_a", include_str!("../../fixtures/test_system_a.toml")),
    ("duplicate_modes", include_str!("../../fixtures/duplicate_modes.toml")),
];

pub fn fixture(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Loads a scenario from a file path or, failing that, a bundled fixture name.
pub fn load_config(spec: &str) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        return ScenarioConfig::load(path);
    }
    match fixture(spec) {
        Some(text) => ScenarioConfig::from_toml(text),
        None => Err(Error::Config(format!("no config file or bundled scenario named {spec:?}"))),
    }
}
