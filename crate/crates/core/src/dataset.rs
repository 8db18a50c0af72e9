//! Uniformly sampled, synchronized proprioceptive time series.

use std::ops::Range;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("sample interval must be positive and finite, got {0}")]
    NonPositiveDt(f64),
    #[error("setpoint {value} of motor {motor} at sample {index} is outside [0, 1]")]
    SetpointOutOfRange { index: usize, motor: usize, value: f64 },
    #[error("segment `{label}` [{start}, {end}) is empty or out of bounds for {len} samples")]
    BadSegment {
        label: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("no segment labelled `{0}`")]
    UnknownLabel(String),
}

/// Labelled half-open index range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Segment {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Accelerometer specific force (body frame, m/s^2), body rates (rad/s) and
/// normalized motor commands on a uniform time grid.
///
/// Instances are validated at construction and immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SysIdDataset {
    dt: f64,
    t0: f64,
    accel: Vec<Vector3<f64>>,
    gyro: Vec<Vector3<f64>>,
    setpoints: Vec<Vector4<f64>>,
    angular_accel: Option<Vec<Vector3<f64>>>,
    segments: Vec<Segment>,
}

impl SysIdDataset {
    pub fn new(
        dt: f64,
        t0: f64,
        accel: Vec<Vector3<f64>>,
        gyro: Vec<Vector3<f64>>,
        setpoints: Vec<Vector4<f64>>,
        angular_accel: Option<Vec<Vector3<f64>>>,
        segments: Vec<Segment>,
    ) -> Result<Self, DatasetError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DatasetError::NonPositiveDt(dt));
        }
        let n = accel.len();
        if gyro.len() != n || setpoints.len() != n {
            return Err(DatasetError::LengthMismatch(format!(
                "accel {n}, gyro {}, setpoints {}",
                gyro.len(),
                setpoints.len()
            )));
        }
        if let Some(alpha) = &angular_accel {
            if alpha.len() != n {
                return Err(DatasetError::LengthMismatch(format!(
                    "accel {n}, angular_accel {}",
                    alpha.len()
                )));
            }
        }
        if n < 2 {
            return Err(DatasetError::TooShort(n));
        }
        for (index, sp) in setpoints.iter().enumerate() {
            for (motor, &value) in sp.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(DatasetError::SetpointOutOfRange { index, motor, value });
                }
            }
        }
        for seg in &segments {
            if seg.start >= seg.end || seg.end > n {
                return Err(DatasetError::BadSegment {
                    label: seg.label.clone(),
                    start: seg.start,
                    end: seg.end,
                    len: n,
                });
            }
        }
        Ok(SysIdDataset {
            dt,
            t0,
            accel,
            gyro,
            setpoints,
            angular_accel,
            segments,
        })
    }

    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn accel(&self) -> &[Vector3<f64>] {
        &self.accel
    }

    pub fn gyro(&self) -> &[Vector3<f64>] {
        &self.gyro
    }

    pub fn setpoints(&self) -> &[Vector4<f64>] {
        &self.setpoints
    }

    pub fn angular_accel(&self) -> Option<&[Vector3<f64>]> {
        self.angular_accel.as_deref()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Copy with a different segment table.
    pub fn with_segments(&self, segments: Vec<Segment>) -> Result<Self, DatasetError> {
        Self::new(
            self.dt,
            self.t0,
            self.accel.clone(),
            self.gyro.clone(),
            self.setpoints.clone(),
            self.angular_accel.clone(),
            segments,
        )
    }

    /// Standalone dataset for `range`; `t0` moves to the first kept sample and
    /// segments are clipped to the range (those falling outside are dropped).
    pub fn slice(&self, range: Range<usize>) -> Result<Self, DatasetError> {
        if range.start >= range.end || range.end > self.len() {
            return Err(DatasetError::BadSegment {
                label: String::new(),
                start: range.start,
                end: range.end,
                len: self.len(),
            });
        }
        let segments = self
            .segments
            .iter()
            .filter_map(|s| {
                let start = s.start.max(range.start);
                let end = s.end.min(range.end);
                (start < end).then(|| Segment::new(s.label.clone(), start - range.start, end - range.start))
            })
            .collect();
        Self::new(
            self.dt,
            self.time(range.start),
            self.accel[range.clone()].to_vec(),
            self.gyro[range.clone()].to_vec(),
            self.setpoints[range.clone()].to_vec(),
            self.angular_accel.as_ref().map(|a| a[range.clone()].to_vec()),
            segments,
        )
    }

    /// The labelled sub-range as a standalone dataset.
    pub fn select_segment(&self, label: &str) -> Result<Self, DatasetError> {
        let seg = self
            .segments
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| DatasetError::UnknownLabel(label.to_string()))?;
        self.slice(seg.range())
    }

    /// Append `other` in time; sample intervals must match. Segments of
    /// `other` are shifted by `self.len()`.
    pub fn concat(&self, other: &SysIdDataset) -> Result<Self, DatasetError> {
        if (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(DatasetError::LengthMismatch(format!(
                "sample intervals differ: {} vs {}",
                self.dt, other.dt
            )));
        }
        let offset = self.len();
        let angular_accel = match (&self.angular_accel, &other.angular_accel) {
            (Some(a), Some(b)) => Some([a.as_slice(), b.as_slice()].concat()),
            _ => None,
        };
        let segments = self
            .segments
            .iter()
            .cloned()
            .chain(
                other
                    .segments
                    .iter()
                    .map(|s| Segment::new(s.label.clone(), s.start + offset, s.end + offset)),
            )
            .collect();
        Self::new(
            self.dt,
            self.t0,
            [self.accel.as_slice(), other.accel.as_slice()].concat(),
            [self.gyro.as_slice(), other.gyro.as_slice()].concat(),
            [self.setpoints.as_slice(), other.setpoints.as_slice()].concat(),
            angular_accel,
            segments,
        )
    }

    /// Index range covering `[start_s, end_s]` in absolute log time, clipped
    /// to the dataset. `None` when the window misses the data.
    pub fn index_window(&self, start_s: f64, end_s: f64) -> Option<Range<usize>> {
        if !(end_s > start_s) {
            return None;
        }
        let first = ((start_s - self.t0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        let last = ((end_s - self.t0) / self.dt + 1e-9).floor();
        if last < 0.0 {
            return None;
        }
        let end = (last as usize + 1).min(self.len());
        (first < end).then_some(first..end)
    }
}
