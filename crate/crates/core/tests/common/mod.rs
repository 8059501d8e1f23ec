#![allow(dead_code)]

use std::path::PathBuf;

use sdv_guard_core::pipeline::PipelineConfig;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Default pipeline settings over the fixture catalogs, writing to `out`.
pub fn config(out: &std::path::Path) -> PipelineConfig {
    PipelineConfig {
        vss_catalog: Some(fixture("catalogs/vss.json")),
        can_catalog: Some(fixture("catalogs/can.json")),
        out_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}
