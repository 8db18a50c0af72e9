//! Motor model and thrust-curve identification.
//!
//! Motor speeds are latent: they follow the commanded setpoints through a
//! first-order lag with time constant `T_m`. Under a zero-order-hold command
//! the lag has the exact discrete solution
//!
//! ```text
//! alpha      = exp(-dt / T_m)
//! w[k + 1]   = alpha * w[k] + (1 - alpha) * u[k]
//! ```
//!
//! For a fixed `T_m` the reconstructed speeds make the accelerometer model
//! `m * o_acc = sum_i r_f_i * (K_i0 + K_i1 w_i + K_i2 w_i^2)` linear in the
//! thrust coefficients. `T_m` itself is found by sweeping a grid and keeping
//! the candidate with the smallest least-squares residual.

use std::ops::Range;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SysIdDataset;
use crate::geometry::{RigidBodyGeometry, ROTOR_COUNT};
use crate::lsq::{self, GridError, LinearSystem, LsqError, LsqSolution, SystemBuilder};

/// Thrust polynomial order (constant, linear and quadratic terms).
pub const CURVE_TERMS: usize = 3;

/// Leading samples excluded from regressions, in multiples of `T_m`, to let the
/// reconstructed speeds forget their initial condition.
pub const SETTLE_TIME_CONSTANTS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum MotorError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{samples} samples are not enough for {unknowns} unknowns (need 10x)")]
    NotEnoughSamples { samples: usize, unknowns: usize },
    #[error("thrust curve must have 1 (lumped) or 4 coefficient triples, got {0}")]
    BadCurve(usize),
    #[error("sweep grid must be nonempty, strictly increasing and positive")]
    InvalidGrid,
    #[error("sweep objective is not finite at T_m = {0} s")]
    NonFiniteObjective(f64),
    #[error("thrust regression failed at T_m = {t_m} s (insufficient excitation?): {source}")]
    Regression { t_m: f64, source: LsqError },
    #[error(transparent)]
    Lsq(#[from] LsqError),
    #[error("percentile must lie in (0, 1], got {0}")]
    BadPercentile(f64),
    #[error("thrust curve does not reach hover thrust {target_n} N on [0, 1]")]
    NoRealRoot { target_n: f64 },
}

/// Per-motor quadratic thrust polynomials, `f_i(w) = sum_j K_ij w^j` in newtons
/// for normalized motor speed `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrustCurve {
    /// One `[K0, K1, K2]` triple shared by all motors when `lumped`, otherwise
    /// one per motor.
    pub coefficients: Vec<[f64; CURVE_TERMS]>,
    pub lumped: bool,
}

impl ThrustCurve {
    pub fn lumped(k: [f64; CURVE_TERMS]) -> Self {
        ThrustCurve {
            coefficients: vec![k],
            lumped: true,
        }
    }

    pub fn per_motor(k: [[f64; CURVE_TERMS]; ROTOR_COUNT]) -> Self {
        ThrustCurve {
            coefficients: k.to_vec(),
            lumped: false,
        }
    }

    pub fn validate(&self) -> Result<(), MotorError> {
        let expected = if self.lumped { 1 } else { ROTOR_COUNT };
        if self.coefficients.len() == expected {
            Ok(())
        } else {
            Err(MotorError::BadCurve(self.coefficients.len()))
        }
    }

    pub fn motor(&self, i: usize) -> [f64; CURVE_TERMS] {
        if self.lumped {
            self.coefficients[0]
        } else {
            self.coefficients[i]
        }
    }

    /// Coefficients averaged over the motors.
    pub fn mean(&self) -> [f64; CURVE_TERMS] {
        let n = self.coefficients.len() as f64;
        let mut out = [0.0; CURVE_TERMS];
        for k in &self.coefficients {
            for j in 0..CURVE_TERMS {
                out[j] += k[j] / n;
            }
        }
        out
    }

    pub fn thrust(&self, motor: usize, speed: f64) -> f64 {
        let [k0, k1, k2] = self.motor(motor);
        k0 + speed * (k1 + speed * k2)
    }

    /// Multiply every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ThrustCurve {
            coefficients: self
                .coefficients
                .iter()
                .map(|k| [k[0] * factor, k[1] * factor, k[2] * factor])
                .collect(),
            lumped: self.lumped,
        }
    }
}

/// Per-motor forces for one vector of motor speeds.
pub fn predict_thrust(curve: &ThrustCurve, speeds: &Vector4<f64>) -> Vector4<f64> {
    Vector4::from_fn(|i, _| curve.thrust(i, speeds[i]))
}

fn check_positive(name: &'static str, value: f64) -> Result<(), MotorError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MotorError::NonPositiveInput { name, value })
    }
}

/// Discrete decay factor of the first-order motor lag.
pub fn ema_alpha(t_m: f64, dt: f64) -> Result<f64, MotorError> {
    check_positive("time constant", t_m)?;
    check_positive("dt", dt)?;
    Ok((-dt / t_m).exp())
}

/// One exact step of the motor lag under a held command.
#[inline]
pub fn ema_update(speed: f64, setpoint: f64, alpha: f64) -> f64 {
    alpha * speed + setpoint * (1.0 - alpha)
}

/// Reconstruct motor speeds from commands. The first output is `initial` and
/// output `k + 1` is the update from output `k` under command `k`.
pub fn simulate_motor_speeds(
    setpoints: &[Vector4<f64>],
    t_m: f64,
    dt: f64,
    initial: Vector4<f64>,
) -> Result<Vec<Vector4<f64>>, MotorError> {
    let alpha = ema_alpha(t_m, dt)?;
    let mut out = Vec::with_capacity(setpoints.len());
    let mut speed = initial;
    for sp in setpoints {
        out.push(speed);
        speed = Vector4::from_fn(|i, _| ema_update(speed[i], sp[i], alpha));
    }
    Ok(out)
}

/// Speeds reconstructed from the dataset's commands, starting from the first
/// command.
pub fn reconstruct_speeds(ds: &SysIdDataset, t_m: f64) -> Result<Vec<Vector4<f64>>, MotorError> {
    simulate_motor_speeds(ds.setpoints(), t_m, ds.dt(), ds.setpoints()[0])
}

/// Number of leading samples to drop so the speed reconstruction has settled.
pub fn settle_samples(t_m: f64, dt: f64, len: usize) -> usize {
    ((SETTLE_TIME_CONSTANTS * t_m / dt).ceil() as usize).min(len / 2)
}

pub fn thrust_unknowns(lumped: bool) -> usize {
    if lumped {
        CURVE_TERMS
    } else {
        CURVE_TERMS * ROTOR_COUNT
    }
}

/// Stack the thrust regression over `range`: three rows per sample with
/// `b = m * o_acc` and columns `r_f_i * w_i^j`. When `lumped` the columns of
/// equal exponent are summed over motors.
pub fn build_thrust_system_range(
    ds: &SysIdDataset,
    speeds: &[Vector4<f64>],
    geom: &RigidBodyGeometry,
    lumped: bool,
    range: Range<usize>,
) -> Result<LinearSystem, MotorError> {
    if speeds.len() != ds.len() {
        return Err(MotorError::LengthMismatch(ds.len(), speeds.len()));
    }
    let cols = thrust_unknowns(lumped);
    let mut builder = SystemBuilder::with_capacity(cols, 3 * range.len());
    let mut row = vec![0.0; cols];
    for k in range {
        let w = speeds[k];
        let b = ds.accel()[k] * geom.mass_kg;
        for axis in 0..3 {
            row.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..ROTOR_COUNT {
                let r = geom.rotor_force_axes[i][axis];
                let mut power = 1.0;
                for j in 0..CURVE_TERMS {
                    let col = if lumped { j } else { CURVE_TERMS * i + j };
                    row[col] += r * power;
                    power *= w[i];
                }
            }
            builder.push_row(&row, b[axis]);
        }
        builder.end_block();
    }
    Ok(builder.finish())
}

pub fn build_thrust_system(
    ds: &SysIdDataset,
    speeds: &[Vector4<f64>],
    geom: &RigidBodyGeometry,
    lumped: bool,
) -> Result<LinearSystem, MotorError> {
    build_thrust_system_range(ds, speeds, geom, lumped, 0..ds.len())
}

/// Interpret a thrust regression solution as a curve.
pub fn curve_from_solution(x: &[f64], lumped: bool) -> ThrustCurve {
    let triples = x
        .chunks(CURVE_TERMS)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    ThrustCurve {
        coefficients: triples,
        lumped,
    }
}

/// Thrust fit at one fixed time constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustFit {
    pub curve: ThrustCurve,
    pub solution: LsqSolution,
    /// Residual RMSE converted to specific force, m/s^2.
    pub rmse_m_s2: f64,
    pub samples: Range<usize>,
}

/// Reconstruct speeds with `t_m`, drop the settling window and fit the curve.
pub fn fit_thrust_at(
    ds: &SysIdDataset,
    geom: &RigidBodyGeometry,
    t_m: f64,
    lumped: bool,
) -> Result<ThrustFit, MotorError> {
    let speeds = reconstruct_speeds(ds, t_m)?;
    let range = settle_samples(t_m, ds.dt(), ds.len())..ds.len();
    let sys = build_thrust_system_range(ds, &speeds, geom, lumped, range.clone())?;
    let solution = lsq::solve_ols(&sys).map_err(|source| MotorError::Regression { t_m, source })?;
    Ok(ThrustFit {
        curve: curve_from_solution(solution.x.as_slice(), lumped),
        rmse_m_s2: solution.rmse / geom.mass_kg,
        solution,
        samples: range,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorModelEstimate {
    pub time_constant_s: f64,
    /// Best grid candidate before local refinement.
    pub grid_time_constant_s: f64,
    pub curve: ThrustCurve,
    /// `(T_m candidate s, RMSE m/s^2)` in grid order.
    pub sweep_curve: Vec<(f64, f64)>,
    pub fit_rmse_m_s2: f64,
    /// The optimum sits on the first or last grid candidate.
    pub boundary_hit: bool,
    pub regression_samples: usize,
}

/// Relative bracket width at which the local refinement stops.
pub const REFINE_TOLERANCE: f64 = 1e-5;

/// Grid search for the motor time constant; the curve at the optimum is
/// refit and returned with the full RMSE curve.
///
/// With `refine`, an interior grid optimum is polished by golden-section
/// search between its two grid neighbours.
pub fn sweep_time_constant(
    ds: &SysIdDataset,
    geom: &RigidBodyGeometry,
    grid: &[f64],
    lumped: bool,
    refine: bool,
) -> Result<MotorModelEstimate, MotorError> {
    let unknowns = thrust_unknowns(lumped);
    if ds.len() < 10 * unknowns {
        return Err(MotorError::NotEnoughSamples {
            samples: ds.len(),
            unknowns,
        });
    }
    let search = lsq::try_grid_minimize(grid, |t_m| fit_thrust_at(ds, geom, t_m, lumped).map(|f| f.rmse_m_s2))
        .map_err(|e| match e {
            GridError::InvalidGrid => MotorError::InvalidGrid,
            GridError::NonFiniteObjective { candidate } => MotorError::NonFiniteObjective(candidate),
            GridError::Objective { source, .. } => source,
        })?;
    if search.on_boundary() {
        log::warn!("motor time constant optimum {} s lies on the sweep boundary", search.best);
    }
    let (mut t_m, mut rmse) = (search.best, search.best_value);
    if refine && !search.on_boundary() && grid.len() > 2 {
        let i = search.best_index;
        let (t, r) = lsq::try_golden_minimize(grid[i - 1], grid[i + 1], REFINE_TOLERANCE, |t| {
            fit_thrust_at(ds, geom, t, lumped).map(|f| f.rmse_m_s2)
        })?;
        if r < rmse {
            (t_m, rmse) = (t, r);
        }
    }
    let best = fit_thrust_at(ds, geom, t_m, lumped)?;
    Ok(MotorModelEstimate {
        time_constant_s: t_m,
        grid_time_constant_s: search.best,
        curve: best.curve,
        fit_rmse_m_s2: rmse,
        boundary_hit: search.on_boundary(),
        sweep_curve: search.curve,
        regression_samples: best.samples.len(),
    })
}

/// The speed in `[0, 1]` at which the
/// mean curve produces `target_n` per motor. Prefers the root on a rising
/// branch.
pub fn hover_command(curve: &ThrustCurve, target_n: f64) -> Result<f64, MotorError> {
    let [k0, k1, k2] = curve.mean();
    let c = k0 - target_n;
    let mut roots = Vec::with_capacity(2);
    if k2.abs() < f64::EPSILON * (k1.abs() + c.abs()).max(1e-300) {
        if k1 != 0.0 {
            roots.push(-c / k1);
        }
    } else {
        let disc = k1 * k1 - 4.0 * k2 * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // numerically stable pair
            let q = -0.5 * (k1 + k1.signum() * sq);
            if q != 0.0 {
                roots.push(q / k2);
                roots.push(c / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    let slope = |w: f64| k1 + 2.0 * k2 * w;
    let tol = 1e-12;
    let in_range: Vec<f64> = roots
        .into_iter()
        .filter(|w| w.is_finite() && *w >= -tol && *w <= 1.0 + tol)
        .map(|w| w.clamp(0.0, 1.0))
        .collect();
    in_range
        .iter()
        .copied()
        .filter(|&w| slope(w) > 0.0)
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
        .or_else(|| in_range.first().copied())
        .ok_or(MotorError::NoRealRoot { target_n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverStats {
    pub percentile: f64,
    /// Mean reconstructed speed per motor over the selected samples.
    pub mean_command: [f64; ROTOR_COUNT],
    pub predicted_hover_command: f64,
    pub selected_samples: usize,
}

impl HoverStats {
    pub fn overall_mean_command(&self) -> f64 {
        self.mean_command.iter().sum::<f64>() / ROTOR_COUNT as f64
    }
}

/// Indices of the `percentile` fraction of samples closest to force balance,
/// judged by `| |o_acc| - |g| |`. Ties keep sample order.
pub fn hover_selection(
    ds: &SysIdDataset,
    geom: &RigidBodyGeometry,
    percentile: f64,
) -> Result<Vec<usize>, MotorError> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(MotorError::BadPercentile(percentile));
    }
    let g = geom.gravity_norm();
    let mut scored: Vec<(f64, usize)> = ds
        .accel()
        .iter()
        .enumerate()
        .map(|(k, a)| ((a.norm() - g).abs(), k))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let count = ((percentile * ds.len() as f64).ceil() as usize).clamp(1, ds.len());
    let mut picked: Vec<usize> = scored[..count].iter().map(|&(_, k)| k).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Hover command distribution versus the command the curve predicts for
/// hovering, `sum_j K_j w^j = m |g| / 4`.
pub fn hover_analysis(
    ds: &SysIdDataset,
    speeds: &[Vector4<f64>],
    curve: &ThrustCurve,
    geom: &RigidBodyGeometry,
    percentile: f64,
) -> Result<HoverStats, MotorError> {
    if speeds.len() != ds.len() {
        return Err(MotorError::LengthMismatch(ds.len(), speeds.len()));
    }
    let picked = hover_selection(ds, geom, percentile)?;
    let mut mean = Vector4::zeros();
    for &k in &picked {
        mean += speeds[k];
    }
    mean /= picked.len() as f64;
    let target = geom.mass_kg * geom.gravity_norm() / ROTOR_COUNT as f64;
    Ok(HoverStats {
        percentile,
        mean_command: [mean[0], mean[1], mean[2], mean[3]],
        predicted_hover_command: hover_command(curve, target)?,
        selected_samples: picked.len(),
    })
}

/// Body-frame specific force predicted from motor speeds.
pub fn predict_specific_force(
    curve: &ThrustCurve,
    geom: &RigidBodyGeometry,
    speeds: &Vector4<f64>,
) -> Vector3<f64> {
    geom.body_force(&predict_thrust(curve, speeds)) / geom.mass_kg
}
