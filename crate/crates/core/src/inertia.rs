//! Angular-dynamics identification: roll/pitch inertia, the yaw ratio
//! `Izz / K_tau`, and its decomposition through the empirical
//! `Izz ≈ C * (Ixx + Iyy) / 2` relation.
//!
//! The rigid-body model with a diagonal inertia `J` reads
//!
//! ```text
//! J w_dot - (J w) x w - sum_i r_tau_i K_tau_i f_i = sum_i (r_p_i x r_f_i) f_i
//! ```
//!
//! which is linear in `(Ixx, Iyy, Izz, K_tau_1..4)`. Near hover the precession
//! terms vanish and, for vertically actuated frames, only the ratio
//! `Izz / K_tau` is observable from yaw data.

use std::ops::Range;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SysIdDataset;
use crate::geometry::{RigidBodyGeometry, ROTOR_COUNT};
use crate::lsq::{self, LinearSystem, LsqError, SystemBuilder};
use crate::motor::{self, MotorError, ThrustCurve};

/// Mean `Izz / ((Ixx + Iyy) / 2)` over the reference platforms in
/// [`REFERENCE_PLATFORMS`].
pub const DEFAULT_C_XY_Z: f64 = 1.832;

/// Below this mean square a regressor is treated as carrying no signal.
pub const MIN_REGRESSOR_POWER: f64 = 1e-12;

/// Default gyro smoothing window before differencing, seconds.
pub const DEFAULT_GYRO_FILTER_S: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum InertiaError {
    #[error("series needs at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("insufficient excitation on the {axis} axis (regressor power {power:e})")]
    InsufficientExcitation { axis: &'static str, power: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("fitted {name} is not positive ({value})")]
    NonPositiveEstimate { name: &'static str, value: f64 },
    #[error(transparent)]
    Lsq(#[from] LsqError),
    #[error(transparent)]
    Motor(#[from] MotorError),
}

fn check_positive(name: &'static str, value: f64) -> Result<(), InertiaError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(InertiaError::NonPositiveInput { name, value })
    }
}

/// Finite-difference derivative: central in the interior, one-sided at the
/// two endpoints.
pub fn angular_acceleration(gyro: &[Vector3<f64>], dt: f64) -> Result<Vec<Vector3<f64>>, InertiaError> {
    let n = gyro.len();
    if n < 3 {
        return Err(InertiaError::TooShort(n));
    }
    check_positive("dt", dt)?;
    let mut out = Vec::with_capacity(n);
    out.push((gyro[1] - gyro[0]) / dt);
    for k in 1..n - 1 {
        out.push((gyro[k + 1] - gyro[k - 1]) / (2.0 * dt));
    }
    out.push((gyro[n - 1] - gyro[n - 2]) / dt);
    Ok(out)
}

/// Odd moving-average width for a window in seconds; 1 disables smoothing.
pub fn filter_width(window_s: f64, dt: f64) -> usize {
    if !(window_s > 0.0) {
        return 1;
    }
    let w = (window_s / dt).round().max(1.0) as usize;
    w | 1
}

fn centered_average(x: &[Vector3<f64>], half: usize) -> Vec<Vector3<f64>> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Vector3::zeros());
    for v in x {
        let last = *prefix.last().unwrap();
        prefix.push(last + v);
    }
    (0..n)
        .map(|k| {
            // shrink symmetrically at the edges to stay zero-phase
            let h = half.min(k).min(n - 1 - k);
            (prefix[k + h + 1] - prefix[k - h]) / (2 * h + 1) as f64
        })
        .collect()
}

/// Zero-phase smoothing: a centered moving average of `width` samples
/// applied twice.
pub fn smooth(x: &[Vector3<f64>], width: usize) -> Vec<Vector3<f64>> {
    if width <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let half = width / 2;
    centered_average(&centered_average(x, half), half)
}

/// Body rates, angular accelerations and per-motor forces on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDataset {
    pub gyro: Vec<Vector3<f64>>,
    pub angular_accel: Vec<Vector3<f64>>,
    pub forces: Vec<Vector4<f64>>,
    /// Index of the first sample in the dataset this was built from.
    pub offset: usize,
}

impl AngularDataset {
    pub fn new(
        gyro: Vec<Vector3<f64>>,
        angular_accel: Vec<Vector3<f64>>,
        forces: Vec<Vector4<f64>>,
    ) -> Result<Self, InertiaError> {
        if gyro.len() != angular_accel.len() || gyro.len() != forces.len() {
            return Err(InertiaError::LengthMismatch(format!(
                "gyro {}, angular_accel {}, forces {}",
                gyro.len(),
                angular_accel.len(),
                forces.len()
            )));
        }
        Ok(AngularDataset {
            gyro,
            angular_accel,
            forces,
            offset: 0,
        })
    }

    /// Build from a flight dataset using an identified motor model.
    ///
    /// Angular acceleration comes from the dataset's own channel when present,
    /// otherwise from differencing the smoothed gyro. The leading settling
    /// window of the motor reconstruction and the samples touched by filter
    /// and difference edge effects are dropped.
    pub fn from_dataset(
        ds: &SysIdDataset,
        curve: &ThrustCurve,
        t_m: f64,
        gyro_filter_s: f64,
    ) -> Result<Self, InertiaError> {
        let speeds = motor::reconstruct_speeds(ds, t_m)?;
        let forces: Vec<Vector4<f64>> = speeds.iter().map(|w| motor::predict_thrust(curve, w)).collect();
        let width = filter_width(gyro_filter_s, ds.dt());
        let (gyro, accel, edge) = match ds.angular_accel() {
            Some(alpha) => (ds.gyro().to_vec(), alpha.to_vec(), 0),
            None => {
                let smoothed = smooth(ds.gyro(), width);
                let accel = angular_acceleration(&smoothed, ds.dt())?;
                (smoothed, accel, 2 * (width / 2) + 1)
            }
        };
        let start = motor::settle_samples(t_m, ds.dt(), ds.len()).max(edge);
        let end = ds.len().saturating_sub(edge);
        if end <= start + 2 {
            return Err(InertiaError::TooShort(end.saturating_sub(start)));
        }
        let range: Range<usize> = start..end;
        let mut ad = Self::new(gyro[range.clone()].to_vec(), accel[range.clone()].to_vec(), forces[range].to_vec())?;
        ad.offset = start;
        Ok(ad)
    }

    pub fn len(&self) -> usize {
        self.gyro.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gyro.is_empty()
    }
}

/// Regression rows of the diagonal-inertia model for one sample, `A_J`.
pub fn inertia_block(rate: &Vector3<f64>, accel: &Vector3<f64>) -> [[f64; 3]; 3] {
    let (x, y, z) = (rate.x, rate.y, rate.z);
    [
        [accel.x, -y * z, z * y],
        [x * z, accel.y, -z * x],
        [-x * y, y * x, accel.z],
    ]
}

/// Full system over `[Ixx, Iyy, Izz, K_tau_1, .., K_tau_4]`: three rows per
/// sample, `[A_J | -r_tau_i f_i] x = sum_i (r_p_i x r_f_i) f_i`.
pub fn build_full_inertia_system(ad: &AngularDataset, geom: &RigidBodyGeometry) -> LinearSystem {
    let mut builder = SystemBuilder::with_capacity(3 + ROTOR_COUNT, 3 * ad.len());
    let arms = geom.moment_arms();
    for k in 0..ad.len() {
        let block = inertia_block(&ad.gyro[k], &ad.angular_accel[k]);
        let f = &ad.forces[k];
        let b = arms * f;
        for axis in 0..3 {
            let mut row = [0.0; 3 + ROTOR_COUNT];
            row[..3].copy_from_slice(&block[axis]);
            for i in 0..ROTOR_COUNT {
                row[3 + i] = -geom.rotor_torque_axes[i][axis] * f[i];
            }
            builder.push_row(&row, b[axis]);
        }
        builder.end_block();
    }
    builder.finish()
}

/// Scalar regression `a * x ≈ b` with an excitation check on `a`.
fn scalar_fit(axis: &'static str, a: &[f64], b: &[f64]) -> Result<f64, InertiaError> {
    let power = a.iter().map(|v| v * v).sum::<f64>() / a.len().max(1) as f64;
    if !(power >= MIN_REGRESSOR_POWER) {
        return Err(InertiaError::InsufficientExcitation { axis, power });
    }
    let mut builder = SystemBuilder::with_capacity(1, a.len());
    for (&ai, &bi) in a.iter().zip(b) {
        builder.push_row(&[ai], bi);
        builder.end_block();
    }
    let sol = lsq::solve_ols(&builder.finish()).map_err(|e| match e {
        LsqError::RankDeficient { .. } => InertiaError::InsufficientExcitation { axis, power },
        other => other.into(),
    })?;
    Ok(sol.x[0])
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollPitchFit {
    pub ixx_kg_m2: f64,
    pub iyy_kg_m2: f64,
    /// RMS of `w_dot - tau / I`, rad/s^2.
    pub roll_rmse_rad_s2: f64,
    pub pitch_rmse_rad_s2: f64,
    pub reciprocal: bool,
}

/// Decoupled roll and pitch inertia under the small-rate assumption,
/// `w_dot_x Ixx = tau_x`, `w_dot_y Iyy = tau_y`.
///
/// With `reciprocal` the unknown is `1 / I` and the regression is
/// `tau * (1 / I) = w_dot`.
pub fn fit_roll_pitch(
    ad: &AngularDataset,
    geom: &RigidBodyGeometry,
    reciprocal: bool,
) -> Result<RollPitchFit, InertiaError> {
    let arms = geom.moment_arms();
    let torque: Vec<Vector3<f64>> = ad.forces.iter().map(|f| arms * f).collect();
    let mut fits = [0.0; 2];
    let mut rmse = [0.0; 2];
    for (axis, name) in [(0, "roll"), (1, "pitch")] {
        let accel: Vec<f64> = ad.angular_accel.iter().map(|a| a[axis]).collect();
        let tau: Vec<f64> = torque.iter().map(|t| t[axis]).collect();
        let inertia = if reciprocal {
            let inv = scalar_fit(name, &tau, &accel)?;
            if !(inv > 0.0) {
                return Err(InertiaError::NonPositiveEstimate { name, value: inv });
            }
            1.0 / inv
        } else {
            scalar_fit(name, &accel, &tau)?
        };
        if !(inertia > 0.0) {
            return Err(InertiaError::NonPositiveEstimate { name, value: inertia });
        }
        fits[axis] = inertia;
        rmse[axis] = rms(accel.iter().zip(&tau).map(|(a, t)| a - t / inertia));
    }
    Ok(RollPitchFit {
        ixx_kg_m2: fits[0],
        iyy_kg_m2: fits[1],
        roll_rmse_rad_s2: rmse[0],
        pitch_rmse_rad_s2: rmse[1],
        reciprocal,
    })
}

/// Yaw drive per sample, `sum_i r_tau_i,z f_i`: the yaw torque per unit `K_tau`.
pub fn yaw_drive(ad: &AngularDataset, geom: &RigidBodyGeometry) -> Vec<f64> {
    ad.forces.iter().map(|f| geom.reaction_drive(f).z).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawRatioFit {
    pub ratio_kg_m2: f64,
    /// RMS of `drive - w_dot_z * ratio`, newtons.
    pub rmse_n: f64,
}

/// `w_dot_z (Izz / K_tau) = drive`, regressed with yaw acceleration as the
/// regressor.
pub fn fit_yaw_ratio(ad: &AngularDataset, geom: &RigidBodyGeometry) -> Result<YawRatioFit, InertiaError> {
    let drive = yaw_drive(ad, geom);
    let accel: Vec<f64> = ad.angular_accel.iter().map(|a| a.z).collect();
    let ratio = scalar_fit("yaw", &accel, &drive)?;
    if !(ratio > 0.0) {
        return Err(InertiaError::NonPositiveEstimate { name: "yaw ratio", value: ratio });
    }
    Ok(YawRatioFit {
        ratio_kg_m2: ratio,
        rmse_n: rms(drive.iter().zip(&accel).map(|(d, a)| d - a * ratio)),
    })
}

pub fn predict_izz(ixx: f64, iyy: f64, c_xy_z: f64) -> Result<f64, InertiaError> {
    check_positive("ixx", ixx)?;
    check_positive("iyy", iyy)?;
    check_positive("c_xy_z", c_xy_z)?;
    Ok((ixx + iyy) / 2.0 * c_xy_z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueCoefficientFit {
    pub k_tau: f64,
    /// RMS of `w_dot_z Izz - K_tau drive`, N m.
    pub rmse_n_m: f64,
}

/// `drive * K_tau = w_dot_z * Izz` with `Izz` fixed, regressed with the drive
/// as the regressor.
pub fn fit_k_tau(ad: &AngularDataset, geom: &RigidBodyGeometry, izz: f64) -> Result<TorqueCoefficientFit, InertiaError> {
    check_positive("izz", izz)?;
    let drive = yaw_drive(ad, geom);
    let target: Vec<f64> = ad.angular_accel.iter().map(|a| a.z * izz).collect();
    let k_tau = scalar_fit("yaw drive", &drive, &target)?;
    if !(k_tau > 0.0) {
        return Err(InertiaError::NonPositiveEstimate { name: "k_tau", value: k_tau });
    }
    Ok(TorqueCoefficientFit {
        k_tau,
        rmse_n_m: rms(target.iter().zip(&drive).map(|(t, d)| t - k_tau * d)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaDiagnostics {
    pub roll_rmse_rad_s2: f64,
    pub pitch_rmse_rad_s2: f64,
    /// Ratio from regressing the drive on yaw acceleration.
    pub yaw_ratio_direct_kg_m2: f64,
    pub yaw_ratio_rmse_n: f64,
    pub k_tau_rmse_n_m: f64,
    /// `|direct - izz / k_tau| / (izz / k_tau)`.
    pub yaw_ratio_disagreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaEstimate {
    pub ixx_kg_m2: f64,
    pub iyy_kg_m2: f64,
    pub izz_kg_m2: f64,
    pub k_tau: f64,
    /// `izz / k_tau` after decomposition.
    pub yaw_ratio_kg_m2: f64,
    pub c_xy_z: f64,
    pub diagnostics: InertiaDiagnostics,
}

/// Ratio disagreement above which the two yaw regressions are flagged.
pub const YAW_RATIO_DISAGREEMENT_LIMIT: f64 = 0.10;

/// Decoupled identification chain: roll/pitch fit on `roll_pitch`, then yaw
/// ratio, `Izz` prediction and `K_tau` on `yaw`.
pub fn identify_decoupled(
    roll_pitch: &AngularDataset,
    yaw: &AngularDataset,
    geom: &RigidBodyGeometry,
    reciprocal: bool,
    c_xy_z: f64,
) -> Result<InertiaEstimate, InertiaError> {
    let rp = fit_roll_pitch(roll_pitch, geom, reciprocal)?;
    let ratio = fit_yaw_ratio(yaw, geom)?;
    let izz = predict_izz(rp.ixx_kg_m2, rp.iyy_kg_m2, c_xy_z)?;
    let kt = fit_k_tau(yaw, geom, izz)?;
    let yaw_ratio = izz / kt.k_tau;
    Ok(InertiaEstimate {
        ixx_kg_m2: rp.ixx_kg_m2,
        iyy_kg_m2: rp.iyy_kg_m2,
        izz_kg_m2: izz,
        k_tau: kt.k_tau,
        yaw_ratio_kg_m2: yaw_ratio,
        c_xy_z,
        diagnostics: InertiaDiagnostics {
            roll_rmse_rad_s2: rp.roll_rmse_rad_s2,
            pitch_rmse_rad_s2: rp.pitch_rmse_rad_s2,
            yaw_ratio_direct_kg_m2: ratio.ratio_kg_m2,
            yaw_ratio_rmse_n: ratio.rmse_n,
            k_tau_rmse_n_m: kt.rmse_n_m,
            yaw_ratio_disagreement: (ratio.ratio_kg_m2 - yaw_ratio).abs() / yaw_ratio,
        },
    })
}

/// One row of the reference inertia table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePlatform {
    pub name: &'static str,
    pub mass_kg: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    /// Ratio as published alongside the inertia values.
    pub c_xy_z: f64,
}

const fn platform(name: &'static str, mass_kg: f64, ixx: f64, iyy: f64, izz: f64, c_xy_z: f64) -> ReferencePlatform {
    ReferencePlatform {
        name,
        mass_kg,
        ixx,
        iyy,
        izz,
        c_xy_z,
    }
}

/// Published inertia tensors of twelve quadrotor models.
pub const REFERENCE_PLATFORMS: [ReferencePlatform; 12] = [
    platform("x500 (PX4 Gazebo)", 2.0, 2.200e-2, 2.200e-2, 4.000e-2, 1.818),
    platform("Leshikar et al., 2021", 2.5, 5.470e1, 1.560e1, 5.720e1, 1.627),
    platform("Kaputa et al., 2020", 2.5e-1, 4.270e-4, 6.090e-4, 1.500e-3, 2.896),
    platform("Flightmare", 7.3e-1, 7.911e-3, 7.911e-3, 1.231e-2, 1.556),
    platform("Iris (PX4 Gazebo)", 1.5, 2.913e-2, 2.913e-2, 5.523e-2, 1.896),
    platform("px4vision (PX4 Gazebo)", 1.5, 2.913e-2, 2.913e-2, 5.523e-2, 1.896),
    platform("X-wing", 1.532, 1.840e-1, 1.910e-1, 3.360e-1, 1.792),
    platform("Crazyflie 2.0 (Foerster)", 2.7e-2, 1.660e-5, 1.670e-5, 2.930e-5, 1.760),
    platform("Crazyflie 2.0 (Landry)", 2.7e-2, 2.400e-5, 2.400e-5, 3.230e-5, 1.346),
    platform("Crazyflie (disk model)", 2.7e-2, 1.389e-5, 1.389e-5, 2.734e-5, 1.968),
    platform("Crazyflie (Sanca)", 2.7e-2, 1.248e-5, 1.248e-5, 2.342e-5, 1.876),
    platform("Crazyflie (Luis)", 2.7e-2, 1.400e-5, 1.400e-5, 2.170e-5, 1.550),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub ratios: Vec<f64>,
    pub mean_c_xy_z: f64,
}

/// Per-entry `izz / ((ixx + iyy) / 2)` and their mean.
pub fn inertia_scaling_table(entries: &[(f64, f64, f64)]) -> Result<ScalingTable, InertiaError> {
    let mut ratios = Vec::with_capacity(entries.len());
    for &(ixx, iyy, izz) in entries {
        check_positive("ixx", ixx)?;
        check_positive("iyy", iyy)?;
        check_positive("izz", izz)?;
        ratios.push(izz / ((ixx + iyy) / 2.0));
    }
    if ratios.is_empty() {
        return Err(InertiaError::TooShort(0));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(ScalingTable {
        ratios,
        mean_c_xy_z: mean,
    })
}
