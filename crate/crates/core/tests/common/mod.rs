#![allow(dead_code)]

pub mod ulog_fixtures;

use quadsysid::config::PipelineConfig;
use quadsysid::dataset::SysIdDataset;
use quadsysid::ingest::{self, ChannelRef};
use quadsysid::pipeline::windows_from_segments;
use quadsysid::sim::{self, NoiseModel, QuadrotorParams, SimOptions};

pub const DT: f64 = 0.001;

/// The three identification maneuvers flown back to back on `params`.
pub fn flight(params: &QuadrotorParams, noise: NoiseModel, angular_accel: bool) -> SysIdDataset {
    let scripts: Vec<_> = sim::builtin_flight()
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.with_noise(noise).with_seed(100 + i as u64))
        .collect();
    sim::run_scripts(&scripts, params, DT, SimOptions { record_angular_accel: angular_accel }).unwrap()
}

/// Pipeline config whose windows cover the maneuvers of `ds`.
pub fn config_for(ds: &SysIdDataset, params: &QuadrotorParams) -> PipelineConfig {
    let mut config = PipelineConfig {
        geometry: params.geometry.clone(),
        dt_s: DT,
        segments: windows_from_segments(ds, 0),
        ..PipelineConfig::default()
    };
    if ds.angular_accel().is_some() {
        config.mapping.angular_accel = Some(ChannelRef::named("angular_accel", &["x", "y", "z"]));
    }
    config
}

/// A noiseless flight as ULog bytes with its matching config.
pub fn clean_ulog() -> (Vec<u8>, PipelineConfig) {
    let p = QuadrotorParams::crazyflie();
    let ds = flight(&p, NoiseModel::none(), false);
    (ingest::write_dataset_ulog(&ds), config_for(&ds, &p))
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
