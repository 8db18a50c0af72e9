//! Pipeline configuration, loadable from TOML or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::RigidBodyGeometry;
use crate::inertia::{DEFAULT_C_XY_Z, DEFAULT_GYRO_FILTER_S};
use crate::ingest::ChannelMapping;

/// Absolute time window `[start_s, end_s]` inside log number `log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub log: usize,
}

/// Windows for the three maneuvers. A missing thrust window means the whole
/// first log; missing angular windows skip the estimates that depend on them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentWindows {
    #[serde(default)]
    pub thrust: Option<TimeWindow>,
    #[serde(default)]
    pub roll_pitch: Option<TimeWindow>,
    #[serde(default)]
    pub yaw: Option<TimeWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub t_min_s: f64,
    pub t_max_s: f64,
    pub points: usize,
    /// Polish the best grid point by golden-section search between its
    /// neighbours.
    pub refine: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            t_min_s: 0.001,
            t_max_s: 1.0,
            points: 200,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// One thrust curve shared by all motors.
    pub lumped: bool,
    /// Regress `1 / I` instead of `I` for roll and pitch.
    pub reciprocal: bool,
    pub c_xy_z: f64,
    pub gyro_filter_s: f64,
    /// Fraction of samples closest to force balance used for hover stats.
    pub hover_percentile: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lumped: true,
            reciprocal: false,
            c_xy_z: DEFAULT_C_XY_Z,
            gyro_filter_s: DEFAULT_GYRO_FILTER_S,
            hover_percentile: 0.1,
        }
    }
}

fn default_dt() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "RigidBodyGeometry::crazyflie")]
    pub geometry: RigidBodyGeometry,
    #[serde(default)]
    pub mapping: ChannelMapping,
    /// Resampling interval, seconds.
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default)]
    pub segments: SegmentWindows,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub options: FitOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            geometry: RigidBodyGeometry::crazyflie(),
            mapping: ChannelMapping::default(),
            dt_s: default_dt(),
            segments: SegmentWindows::default(),
            sweep: SweepConfig::default(),
            options: FitOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.geometry.validate().map_err(|e| format!("geometry: {e}"))?;
        self.mapping.validate().map_err(|e| format!("mapping: {e}"))?;
        let s = &self.sweep;
        if !(s.t_min_s > 0.0 && s.t_max_s > s.t_min_s && s.t_max_s.is_finite()) {
            return Err(format!("sweep needs 0 < t_min_s < t_max_s, got [{}, {}]", s.t_min_s, s.t_max_s));
        }
        if s.points < 2 {
            return Err(format!("sweep needs at least 2 points, got {}", s.points));
        }
        let o = &self.options;
        if !(o.hover_percentile > 0.0 && o.hover_percentile <= 1.0) {
            return Err(format!("hover_percentile must lie in (0, 1], got {}", o.hover_percentile));
        }
        if !(o.c_xy_z > 0.0 && o.c_xy_z.is_finite()) {
            return Err(format!("c_xy_z must be positive, got {}", o.c_xy_z));
        }
        if !(o.gyro_filter_s >= 0.0 && o.gyro_filter_s.is_finite()) {
            return Err(format!("gyro_filter_s must be non-negative, got {}", o.gyro_filter_s));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(format!("dt_s must be positive, got {}", self.dt_s));
        }
        for (role, w) in self.windows() {
            if !(w.end_s > w.start_s) {
                return Err(format!("{role} window must have end_s > start_s"));
            }
        }
        Ok(())
    }

    /// Configured windows with their role names.
    pub fn windows(&self) -> impl Iterator<Item = (&'static str, &TimeWindow)> {
        [
            ("thrust", &self.segments.thrust),
            ("roll_pitch", &self.segments.roll_pitch),
            ("yaw", &self.segments.yaw),
        ]
        .into_iter()
        .filter_map(|(role, w)| w.as_ref().map(|w| (role, w)))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Read a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }
}
