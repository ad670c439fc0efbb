#![allow(dead_code)]

use std::path::PathBuf;

use gridtwin::network::{parse_case, Network};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn ieee9() -> Network<f64> {
    parse_case(&fixture("ieee9.case")).unwrap()
}

pub fn ieee118() -> Network<f64> {
    parse_case(&fixture("ieee118.case")).unwrap()
}

/// `(id, V, θ degrees)` from a reference solution file.
pub fn reference(name: &str) -> Vec<(usize, f64, f64)> {
    let doc: serde_json::Value = serde_json::from_str(&fixture(name)).unwrap();
    doc["buses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            (
                b["id"].as_u64().unwrap() as usize,
                b["v"].as_f64().unwrap(),
                b["theta_deg"].as_f64().unwrap(),
            )
        })
        .collect()
}

/// The 9-bus fixture's fluctuation settings (also in `configs/ieee9.toml`).
pub fn ieee9_fluctuation(seed: u64) -> gridtwin::telemetry::FluctuationConfig {
    gridtwin::telemetry::FluctuationConfig {
        relative_sigma: 0.002,
        artificial_noise_sigma: 1e-6,
        injection_noise_sigma: 5e-5,
        seed,
        samples: 9600,
    }
}

/// The 118-bus fixture's fluctuation settings (also in `configs/ieee118_*.toml`).
pub fn ieee118_fluctuation(seed: u64) -> gridtwin::telemetry::FluctuationConfig {
    gridtwin::telemetry::FluctuationConfig {
        relative_sigma: 2e-6,
        artificial_noise_sigma: 1e-6,
        injection_noise_sigma: 1e-6,
        seed,
        samples: 4000,
    }
}
