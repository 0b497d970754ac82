#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use promforge::pipeline::{build_database, RomDatabase, RunConfig};

pub fn config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

pub fn desk_config() -> RunConfig {
    RunConfig::load(&config_path()).expect("shipped config loads")
}

/// Reduced variant for fast pipeline checks.
pub fn small_config(extra: &[&str]) -> RunConfig {
    let mut o: Vec<String> =
        ["sampling.n_train=4", "sampling.n_validation=2", "sampling.n_test=1", "fe.n_elements=20", "basis.n_modes=8"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    desk_config().with_overrides(&o).expect("overrides apply")
}

pub fn fitted(cfg: &RunConfig) -> RomDatabase {
    let mut db = build_database(cfg).expect("database builds");
    db.fit().expect("parametric model fits");
    db
}

/// Fitted database of the shipped configuration, built once per test binary.
pub fn desk_database() -> &'static RomDatabase {
    static DB: OnceLock<RomDatabase> = OnceLock::new();
    DB.get_or_init(|| fitted(&desk_config()))
}
