//! Flight-log ingestion: raw channel containers, the ULog and CSV readers,
//! and resampling onto a uniform grid.

pub mod csv;
pub mod ulog;

use std::collections::BTreeMap;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SysIdDataset};

pub use self::csv::{parse_crazyflie_csv, parse_csv, write_crazyflie_csv};
pub use self::ulog::{parse_ulog, write_dataset_ulog, write_ulog, UlogWriter};

/// Metadata key counting samples dropped for going back in time.
pub const DROPPED_KEY: &str = "dropped_out_of_order";

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("not a ULog file (magic bytes do not match)")]
    MagicMismatch,
    #[error("file ends inside a message starting at byte {offset}")]
    TruncatedMessage { offset: usize },
    #[error("unsupported ULog version or incompatible flags: {0}")]
    UnsupportedVersion(String),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("non-numeric cell `{value}` in column `{column}` at line {line}")]
    NonNumericCell { line: usize, column: String, value: String },
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("channel `{0}` not found in log")]
    MissingChannel(String),
    #[error("field {field} not found in channel `{channel}`")]
    MissingField { channel: String, field: String },
    #[error("mapped channels share no time window")]
    EmptyOverlap,
    #[error("channel `{0}` has fewer than 2 samples")]
    DegenerateChannel(String),
    #[error("invalid channel mapping: {0}")]
    BadMapping(String),
    #[error("resampling interval must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// One logged topic: named fields sampled at nondecreasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Channel {
    pub fields: Vec<String>,
    /// Seconds.
    pub timestamps: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(fields: Vec<String>) -> Self {
        Channel {
            fields,
            timestamps: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Append a sample unless it goes back in time. Returns whether it was kept.
    pub fn push(&mut self, t: f64, values: Vec<f64>) -> bool {
        if self.timestamps.last().is_some_and(|&last| t < last) {
            return false;
        }
        self.timestamps.push(t);
        self.values.push(values);
        true
    }

    fn resolve(&self, name: &str, field: &FieldRef) -> Result<usize, IngestError> {
        let missing = || IngestError::MissingField {
            channel: name.to_string(),
            field: field.to_string(),
        };
        match field {
            FieldRef::Index(i) if *i < self.fields.len() => Ok(*i),
            FieldRef::Index(_) => Err(missing()),
            FieldRef::Name(n) => self.fields.iter().position(|f| f == n).ok_or_else(missing),
        }
    }

    fn column(&self, index: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[index]).collect()
    }
}

/// Parsed log: channels keyed by name plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawLog {
    pub channels: BTreeMap<String, Channel>,
    pub metadata: BTreeMap<String, String>,
}

impl RawLog {
    pub fn channel(&self, name: &str) -> Result<&Channel, IngestError> {
        self.channels
            .get(name)
            .ok_or_else(|| IngestError::MissingChannel(name.to_string()))
    }

    pub fn dropped_samples(&self) -> usize {
        self.metadata.get(DROPPED_KEY).and_then(|v| v.parse().ok()).unwrap_or(0)
    }
}

/// A field addressed by position or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldRef {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for FieldRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldRef::Index(i) => write!(f, "#{i}"),
            FieldRef::Name(n) => write!(f, "`{n}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRef {
    pub channel: String,
    pub fields: Vec<FieldRef>,
}

impl ChannelRef {
    pub fn named(channel: &str, fields: &[&str]) -> Self {
        ChannelRef {
            channel: channel.to_string(),
            fields: fields.iter().map(|f| FieldRef::Name(f.to_string())).collect(),
        }
    }
}

fn unit_scale() -> [f64; 3] {
    [1.0; 3]
}

fn default_time_column() -> String {
    "timestamp".to_string()
}

fn default_time_scale() -> f64 {
    1e-3
}

/// CSV-specific layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvLayout {
    #[serde(default = "default_time_column")]
    pub time_column: String,
    /// Seconds per unit of the time column.
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout {
            time_column: default_time_column(),
            time_scale: default_time_scale(),
        }
    }
}

/// Where the accelerometer, gyro and motor commands live in a raw log, and
/// how to convert them to SI units in the body frame used downstream
/// (x forward, y left, z up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMapping {
    pub accel: ChannelRef,
    pub gyro: ChannelRef,
    pub setpoints: ChannelRef,
    /// Raw command values mapped to 0 and 1.
    pub setpoint_scale: [f64; 2],
    /// Per-axis multipliers turning raw accelerometer values into m/s^2.
    #[serde(default = "unit_scale")]
    pub accel_scale: [f64; 3],
    /// Per-axis multipliers turning raw gyro values into rad/s.
    #[serde(default = "unit_scale")]
    pub gyro_scale: [f64; 3],
    #[serde(default)]
    pub angular_accel: Option<ChannelRef>,
    #[serde(default)]
    pub csv: CsvLayout,
}

impl Default for ChannelMapping {
    /// Canonical layout used by the writers in this crate: channels `acc`,
    /// `gyro` and `motor` in SI units with commands already in `[0, 1]`.
    fn default() -> Self {
        ChannelMapping {
            accel: ChannelRef::named("acc", &["x", "y", "z"]),
            gyro: ChannelRef::named("gyro", &["x", "y", "z"]),
            setpoints: ChannelRef::named("motor", &["m1", "m2", "m3", "m4"]),
            setpoint_scale: [0.0, 1.0],
            accel_scale: unit_scale(),
            gyro_scale: unit_scale(),
            angular_accel: None,
            csv: CsvLayout::default(),
        }
    }
}

impl ChannelMapping {
    /// Crazyflie logging conventions: acceleration in g, rates in deg/s and
    /// 16-bit PWM motor commands.
    pub fn crazyflie() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        ChannelMapping {
            setpoint_scale: [0.0, 65535.0],
            accel_scale: [crate::geometry::STANDARD_GRAVITY; 3],
            gyro_scale: [deg; 3],
            ..Self::default()
        }
    }

    /// PX4 topics. Sensors are logged in a forward-right-down frame, hence
    /// the sign flips on y and z.
    pub fn px4() -> Self {
        ChannelMapping {
            accel: ChannelRef {
                channel: "sensor_combined".into(),
                fields: vec![
                    FieldRef::Name("accelerometer_m_s2[0]".into()),
                    FieldRef::Name("accelerometer_m_s2[1]".into()),
                    FieldRef::Name("accelerometer_m_s2[2]".into()),
                ],
            },
            gyro: ChannelRef {
                channel: "sensor_combined".into(),
                fields: vec![
                    FieldRef::Name("gyro_rad[0]".into()),
                    FieldRef::Name("gyro_rad[1]".into()),
                    FieldRef::Name("gyro_rad[2]".into()),
                ],
            },
            setpoints: ChannelRef {
                channel: "actuator_motors".into(),
                fields: vec![
                    FieldRef::Name("control[0]".into()),
                    FieldRef::Name("control[1]".into()),
                    FieldRef::Name("control[2]".into()),
                    FieldRef::Name("control[3]".into()),
                ],
            },
            setpoint_scale: [0.0, 1.0],
            accel_scale: [1.0, -1.0, -1.0],
            gyro_scale: [1.0, -1.0, -1.0],
            angular_accel: None,
            csv: CsvLayout {
                time_column: "timestamp".into(),
                time_scale: 1e-6,
            },
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let [lo, hi] = self.setpoint_scale;
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(IngestError::BadMapping(format!("setpoint_scale must satisfy max > min, got [{lo}, {hi}]")));
        }
        for (what, r, n) in [("accel", &self.accel, 3), ("gyro", &self.gyro, 3), ("setpoints", &self.setpoints, 4)] {
            if r.fields.len() != n {
                return Err(IngestError::BadMapping(format!("{what} needs {n} fields, got {}", r.fields.len())));
            }
        }
        if let Some(r) = &self.angular_accel {
            if r.fields.len() != 3 {
                return Err(IngestError::BadMapping(format!("angular_accel needs 3 fields, got {}", r.fields.len())));
            }
        }
        if !(self.csv.time_scale > 0.0) {
            return Err(IngestError::BadMapping("csv time_scale must be positive".into()));
        }
        Ok(())
    }

    /// Every channel reference, with its role.
    pub fn references(&self) -> Vec<(&'static str, &ChannelRef)> {
        let mut refs = vec![("accel", &self.accel), ("gyro", &self.gyro), ("setpoints", &self.setpoints)];
        if let Some(r) = &self.angular_accel {
            refs.push(("angular_accel", r));
        }
        refs
    }
}

/// Supported log encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Ulog,
    Csv,
}

/// ULog when the bytes carry the ULog magic or are not text, CSV otherwise.
pub fn detect_format(bytes: &[u8]) -> LogFormat {
    if bytes.is_empty() || bytes.starts_with(&ulog::MAGIC[..4]) || std::str::from_utf8(bytes).is_err() {
        LogFormat::Ulog
    } else {
        LogFormat::Csv
    }
}

/// Parse a log in either supported format.
pub fn parse_log(bytes: &[u8], mapping: &ChannelMapping) -> Result<RawLog, IngestError> {
    match detect_format(bytes) {
        LogFormat::Ulog => parse_ulog(bytes),
        LogFormat::Csv => parse_crazyflie_csv(std::str::from_utf8(bytes).expect("checked utf-8"), mapping),
    }
}

struct Source<'a> {
    name: &'a str,
    t: &'a [f64],
    columns: Vec<Vec<f64>>,
}

fn source<'a>(log: &'a RawLog, r: &'a ChannelRef) -> Result<Source<'a>, IngestError> {
    let ch = log.channel(&r.channel)?;
    let columns = r
        .fields
        .iter()
        .map(|f| ch.resolve(&r.channel, f).map(|i| ch.column(i)))
        .collect::<Result<Vec<_>, _>>()?;
    if ch.len() < 2 {
        return Err(IngestError::DegenerateChannel(r.channel.clone()));
    }
    Ok(Source {
        name: &r.channel,
        t: &ch.timestamps,
        columns,
    })
}

/// Linear interpolation of each column at increasing query times.
fn interpolate_linear(src: &Source, grid: &[f64]) -> Vec<Vec<f64>> {
    let t = src.t;
    let mut out = vec![Vec::with_capacity(grid.len()); src.columns.len()];
    let mut j = 0;
    for &q in grid {
        while j + 2 < t.len() && t[j + 1] <= q {
            j += 1;
        }
        let (t0, t1) = (t[j], t[j + 1]);
        let w = if t1 > t0 { ((q - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
        for (c, col) in src.columns.iter().enumerate() {
            let v = if w == 0.0 {
                col[j]
            } else if w == 1.0 {
                col[j + 1]
            } else {
                col[j] + w * (col[j + 1] - col[j])
            };
            out[c].push(v);
        }
    }
    out
}

/// Zero-order hold: the latest sample at or before each query time.
fn hold(src: &Source, grid: &[f64]) -> Vec<Vec<f64>> {
    let t = src.t;
    let mut out = vec![Vec::with_capacity(grid.len()); src.columns.len()];
    let mut j = 0;
    for &q in grid {
        while j + 1 < t.len() && t[j + 1] <= q {
            j += 1;
        }
        for (c, col) in src.columns.iter().enumerate() {
            out[c].push(col[j]);
        }
    }
    out
}

/// Number of grid points on `[start, end]` at spacing `dt`.
pub fn grid_len(start: f64, end: f64, dt: f64) -> usize {
    ((end - start) / dt + 1e-9).floor() as usize + 1
}

/// Resample the mapped channels onto a uniform grid over their common time
/// support. Sensors are interpolated linearly, motor commands held, then
/// normalized with `setpoint_scale` and clamped to `[0, 1]`.
pub fn resample_sync(log: &RawLog, mapping: &ChannelMapping, dt: f64) -> Result<SysIdDataset, IngestError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IngestError::NonPositiveDt(dt));
    }
    mapping.validate()?;
    let accel = source(log, &mapping.accel)?;
    let gyro = source(log, &mapping.gyro)?;
    let sp = source(log, &mapping.setpoints)?;
    let alpha = mapping.angular_accel.as_ref().map(|r| source(log, r)).transpose()?;

    let sources: Vec<&Source> = [Some(&accel), Some(&gyro), Some(&sp), alpha.as_ref()].into_iter().flatten().collect();
    let start = sources.iter().map(|s| s.t[0]).fold(f64::NEG_INFINITY, f64::max);
    let end = sources.iter().map(|s| *s.t.last().unwrap()).fold(f64::INFINITY, f64::min);
    if !(end > start) {
        log::debug!(
            "no overlap between {}",
            sources.iter().map(|s| s.name).collect::<Vec<_>>().join(", ")
        );
        return Err(IngestError::EmptyOverlap);
    }
    let n = grid_len(start, end, dt);
    let grid: Vec<f64> = (0..n).map(|k| start + k as f64 * dt).collect();

    let to_vec3 = |cols: Vec<Vec<f64>>, scale: [f64; 3]| -> Vec<Vector3<f64>> {
        (0..n)
            .map(|k| Vector3::new(cols[0][k] * scale[0], cols[1][k] * scale[1], cols[2][k] * scale[2]))
            .collect()
    };
    let [lo, hi] = mapping.setpoint_scale;
    let held = hold(&sp, &grid);
    let setpoints = (0..n)
        .map(|k| Vector4::from_fn(|i, _| ((held[i][k] - lo) / (hi - lo)).clamp(0.0, 1.0)))
        .collect();
    let angular_accel = alpha.map(|a| to_vec3(interpolate_linear(&a, &grid), unit_scale()));
    Ok(SysIdDataset::new(
        dt,
        start,
        to_vec3(interpolate_linear(&accel, &grid), mapping.accel_scale),
        to_vec3(interpolate_linear(&gyro, &grid), mapping.gyro_scale),
        setpoints,
        angular_accel,
        Vec::new(),
    )?)
}
