//! Forward simulation of a quadrotor with first-order motor lag.
//!
//! Conventions: world frame z-up with gravity `(0, 0, -9.81)`; orientation is
//! a Hamilton, scalar-first quaternion rotating body vectors into the world.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Segment, SysIdDataset};
use crate::geometry::{GeometryError, RigidBodyGeometry, ROTOR_COUNT};
use crate::motor::{self, MotorError, ThrustCurve};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at t = {time_s:.6} s")]
    UnstableStep { time_s: f64 },
    #[error("dt = {dt} must be positive and at most half the motor time constant {time_constant}")]
    StepTooLarge { dt: f64, time_constant: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid script `{name}`: {reason}")]
    InvalidScript { name: String, reason: String },
    #[error("unknown built-in script `{0}`")]
    UnknownScript(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Motor(#[from] MotorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Everything the identification recovers, plus the known geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub geometry: RigidBodyGeometry,
    /// Diagonal of the inertia tensor, kg m^2.
    pub inertia_kg_m2: Vector3<f64>,
    pub time_constant_s: f64,
    pub thrust_curve: ThrustCurve,
    pub k_tau: f64,
}

impl QuadrotorParams {
    /// Nano quadrotor reference plant.
    pub fn crazyflie() -> Self {
        QuadrotorParams {
            geometry: RigidBodyGeometry::crazyflie(),
            inertia_kg_m2: Vector3::new(1.067e-5, 1.067e-5, 1.955e-5),
            time_constant_s: 0.072,
            thrust_curve: ThrustCurve::lumped([0.0213, -0.0112, 0.1201]),
            k_tau: 4.548e-3,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.geometry.validate()?;
        self.thrust_curve.validate()?;
        if !self.inertia_kg_m2.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(SimError::InvalidParams(format!(
                "inertia entries must be positive, got {:?}",
                self.inertia_kg_m2.as_slice()
            )));
        }
        if !(self.time_constant_s > 0.0 && self.time_constant_s.is_finite()) {
            return Err(SimError::InvalidParams(format!(
                "time constant must be positive, got {}",
                self.time_constant_s
            )));
        }
        if !self.k_tau.is_finite() {
            return Err(SimError::InvalidParams("k_tau is not finite".into()));
        }
        Ok(())
    }

    /// Rotor forces for the given motor speeds.
    pub fn forces(&self, speeds: &Vector4<f64>) -> Vector4<f64> {
        motor::predict_thrust(&self.thrust_curve, speeds)
    }

    /// Body torque for the given rotor forces.
    pub fn torque(&self, forces: &Vector4<f64>) -> Vector3<f64> {
        self.geometry.torque(forces, self.k_tau)
    }

    /// `J^-1 (tau + (J w) x w)`.
    pub fn angular_acceleration(&self, rates: &Vector3<f64>, forces: &Vector4<f64>) -> Vector3<f64> {
        let j = self.inertia_kg_m2;
        let h = j.component_mul(rates);
        (self.torque(forces) + h.cross(rates)).component_div(&j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub body_rates: Vector3<f64>,
    pub motor_speeds: Vector4<f64>,
}

impl SimState {
    /// Level and at rest at the origin with the given motor speeds.
    pub fn at_rest(motor_speeds: Vector4<f64>) -> Self {
        SimState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            body_rates: Vector3::zeros(),
            motor_speeds,
        }
    }

    fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
            && self.motor_speeds.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy)]
struct RigidState {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quaternion<f64>,
    w: Vector3<f64>,
}

impl RigidState {
    fn axpy(&self, h: f64, d: &RigidState) -> RigidState {
        RigidState {
            p: self.p + d.p * h,
            v: self.v + d.v * h,
            q: self.q + d.q * h,
            w: self.w + d.w * h,
        }
    }
}

fn derivative(s: &RigidState, body_force: &Vector3<f64>, forces: &Vector4<f64>, params: &QuadrotorParams) -> RigidState {
    let rot = UnitQuaternion::new_normalize(s.q);
    RigidState {
        p: s.v,
        v: rot * body_force / params.geometry.mass_kg + params.geometry.gravity_m_s2,
        q: s.q * Quaternion::from_imag(s.w) * 0.5,
        w: params.angular_acceleration(&s.w, forces),
    }
}

/// Advance one step: rigid body by RK4 with the current motor speeds held,
/// then the exact motor lag update under `setpoint` (clamped to `[0, 1]`).
pub fn step(state: &SimState, setpoint: &Vector4<f64>, params: &QuadrotorParams, dt: f64) -> Result<SimState, SimError> {
    if !(dt > 0.0 && dt <= params.time_constant_s / 2.0) {
        return Err(SimError::StepTooLarge {
            dt,
            time_constant: params.time_constant_s,
        });
    }
    let forces = params.forces(&state.motor_speeds);
    let body_force = params.geometry.body_force(&forces);
    let s0 = RigidState {
        p: state.position,
        v: state.velocity,
        q: *state.orientation.quaternion(),
        w: state.body_rates,
    };
    let k1 = derivative(&s0, &body_force, &forces, params);
    let k2 = derivative(&s0.axpy(dt / 2.0, &k1), &body_force, &forces, params);
    let k3 = derivative(&s0.axpy(dt / 2.0, &k2), &body_force, &forces, params);
    let k4 = derivative(&s0.axpy(dt, &k3), &body_force, &forces, params);
    let s1 = RigidState {
        p: s0.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * (dt / 6.0),
        v: s0.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * (dt / 6.0),
        q: s0.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * (dt / 6.0),
        w: s0.w + (k1.w + k2.w * 2.0 + k3.w * 2.0 + k4.w) * (dt / 6.0),
    };
    let alpha = motor::ema_alpha(params.time_constant_s, dt)?;
    let next = SimState {
        position: s1.p,
        velocity: s1.v,
        orientation: UnitQuaternion::new_normalize(s1.q),
        body_rates: s1.w,
        motor_speeds: Vector4::from_fn(|i, _| {
            motor::ema_update(state.motor_speeds[i], setpoint[i].clamp(0.0, 1.0), alpha)
        }),
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SimError::UnstableStep { time_s: f64::NAN })
    }
}

/// Standard deviations of the additive Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub accel_std_m_s2: f64,
    #[serde(default)]
    pub gyro_std_rad_s: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel::default()
    }
}

/// Noise-free accelerometer and gyro readings for `state`: the body-frame
/// specific force `R^-1 (v_dot - g)` and the body rates.
pub fn ideal_measurement(state: &SimState, params: &QuadrotorParams) -> (Vector3<f64>, Vector3<f64>) {
    let forces = params.forces(&state.motor_speeds);
    (params.geometry.body_force(&forces) / params.geometry.mass_kg, state.body_rates)
}

/// Measurement with additive i.i.d. Gaussian noise drawn from `rng`.
pub fn measure(
    state: &SimState,
    params: &QuadrotorParams,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> (Vector3<f64>, Vector3<f64>) {
    let (mut accel, mut gyro) = ideal_measurement(state, params);
    if noise.accel_std_m_s2 > 0.0 {
        let n = Normal::new(0.0, noise.accel_std_m_s2).expect("finite std");
        accel += Vector3::from_fn(|_, _| n.sample(rng));
    }
    if noise.gyro_std_rad_s > 0.0 {
        let n = Normal::new(0.0, noise.gyro_std_rad_s).expect("finite std");
        gyro += Vector3::from_fn(|_, _| n.sample(rng));
    }
    (accel, gyro)
}

/// Command at which the lumped mean curve balances gravity.
pub fn hover_setpoint(params: &QuadrotorParams) -> Result<f64, SimError> {
    let g = &params.geometry;
    Ok(motor::hover_command(
        &params.thrust_curve,
        g.mass_kg * g.gravity_norm() / ROTOR_COUNT as f64,
    )?)
}

pub type SetpointFn = Arc<dyn Fn(f64) -> Vector4<f64> + Send + Sync>;

/// Motor command pattern as a function of time since the script start.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetpointPattern {
    Constant {
        command: [f64; ROTOR_COUNT],
    },
    /// All motors together: hover plus a tapered multi-sine.
    ThrottleSweep {
        hover: f64,
        amplitude: f64,
        frequencies_hz: Vec<f64>,
    },
    /// Differential roll excitation during the first half, pitch during the
    /// second half, with a rest between.
    RollPitch {
        hover: f64,
        amplitude: f64,
        frequencies_hz: Vec<f64>,
    },
    /// Diagonal motor pairs driven against each other.
    Yaw {
        hover: f64,
        amplitude: f64,
        frequencies_hz: Vec<f64>,
    },
    /// Independent per-motor random levels held for `hold_s` each.
    RandomSteps {
        hover: f64,
        amplitude: f64,
        hold_s: f64,
        seed: u64,
    },
    /// Held commands starting at each time in `times_s`.
    Piecewise {
        times_s: Vec<f64>,
        commands: Vec<[f64; ROTOR_COUNT]>,
    },
    #[serde(skip)]
    Custom(SetpointFn),
}

impl fmt::Debug for SetpointPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetpointPattern::Custom(_) => f.write_str("Custom(..)"),
            other => f.write_str(&serde_json::to_string(other).unwrap_or_default()),
        }
    }
}

/// Quiet time at hover at both ends of the built-in patterns.
pub const LEAD_S: f64 = 0.5;
const RAMP_S: f64 = 0.5;

/// Raised-cosine window that is zero for `LEAD_S` at both ends of
/// `[0, duration]`.
fn envelope(t: f64, duration: f64) -> f64 {
    let edge = (t - LEAD_S).min(duration - LEAD_S - t);
    if edge <= 0.0 {
        0.0
    } else if edge >= RAMP_S {
        1.0
    } else {
        0.5 - 0.5 * (std::f64::consts::PI * edge / RAMP_S).cos()
    }
}

/// Sum of sines with Schroeder phases, normalized to a peak of at most one.
fn multisine(t: f64, frequencies_hz: &[f64]) -> f64 {
    let n = frequencies_hz.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = frequencies_hz
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let phase = -std::f64::consts::PI * (j * (j + 1)) as f64 / n as f64;
            (std::f64::consts::TAU * f * t + phase).sin()
        })
        .sum();
    sum / n as f64
}

const ROLL: [f64; ROTOR_COUNT] = [-1.0, -1.0, 1.0, 1.0];
const PITCH: [f64; ROTOR_COUNT] = [1.0, -1.0, -1.0, 1.0];
const YAW: [f64; ROTOR_COUNT] = [-1.0, 1.0, -1.0, 1.0];

fn mix(hover: f64, delta: f64, pattern: [f64; ROTOR_COUNT]) -> Vector4<f64> {
    Vector4::from_fn(|i, _| hover + delta * pattern[i])
}

impl SetpointPattern {
    /// Command at time `t` into a script lasting `duration`, before clamping.
    pub fn command(&self, t: f64, duration: f64) -> Vector4<f64> {
        match self {
            SetpointPattern::Constant { command } => Vector4::from(*command),
            SetpointPattern::ThrottleSweep {
                hover,
                amplitude,
                frequencies_hz,
            } => Vector4::repeat(hover + amplitude * envelope(t, duration) * multisine(t, frequencies_hz)),
            SetpointPattern::RollPitch {
                hover,
                amplitude,
                frequencies_hz,
            } => {
                let half = duration / 2.0;
                let (local, axis) = if t < half { (t, ROLL) } else { (t - half, PITCH) };
                let delta = amplitude * envelope(local, half) * multisine(local, frequencies_hz);
                mix(*hover, delta, axis)
            }
            SetpointPattern::Yaw {
                hover,
                amplitude,
                frequencies_hz,
            } => mix(*hover, amplitude * envelope(t, duration) * multisine(t, frequencies_hz), YAW),
            SetpointPattern::RandomSteps {
                hover,
                amplitude,
                hold_s,
                seed,
            } => {
                if envelope(t, duration) == 0.0 || !(*hold_s > 0.0) {
                    return Vector4::repeat(*hover);
                }
                let slot = (t / hold_s).floor() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ slot);
                let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
                Vector4::from_fn(|_, _| hover + amplitude * u.sample(&mut rng))
            }
            SetpointPattern::Piecewise { times_s, commands } => {
                let idx = times_s.iter().rposition(|&s| s <= t).unwrap_or(0);
                commands.get(idx).map(|c| Vector4::from(*c)).unwrap_or_else(Vector4::zeros)
            }
            SetpointPattern::Custom(f) => f(t),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let check_freqs = |freqs: &[f64]| {
            if freqs.iter().all(|f| *f > 0.0 && f.is_finite()) {
                Ok(())
            } else {
                Err("frequencies must be positive".to_string())
            }
        };
        match self {
            SetpointPattern::ThrottleSweep { frequencies_hz, .. }
            | SetpointPattern::RollPitch { frequencies_hz, .. }
            | SetpointPattern::Yaw { frequencies_hz, .. } => check_freqs(frequencies_hz),
            SetpointPattern::RandomSteps { hold_s, .. } if !(*hold_s > 0.0) => Err("hold_s must be positive".into()),
            SetpointPattern::Piecewise { times_s, commands } => {
                if times_s.is_empty() || times_s.len() != commands.len() {
                    Err("piecewise needs one command per breakpoint".into())
                } else if times_s.windows(2).any(|w| w[1] <= w[0]) {
                    Err("piecewise breakpoints must increase".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// A timed excitation maneuver with its measurement noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcitationScript {
    pub name: String,
    pub duration_s: f64,
    pub pattern: SetpointPattern,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

impl ExcitationScript {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |reason: String| SimError::InvalidScript {
            name: self.name.clone(),
            reason,
        };
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(fail(format!("duration must be positive, got {}", self.duration_s)));
        }
        let n = self.noise;
        if !(n.accel_std_m_s2 >= 0.0 && n.gyro_std_rad_s >= 0.0 && n.accel_std_m_s2.is_finite() && n.gyro_std_rad_s.is_finite()) {
            return Err(fail("noise standard deviations must be non-negative".into()));
        }
        self.pattern.validate().map_err(fail)
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Hover command used by the built-in scripts.
pub const BUILTIN_HOVER: f64 = 0.66;

pub const BUILTIN_SCRIPTS: [&str; 4] = ["throttle_sweep", "roll_pitch_excite", "yaw_excite", "random_tumble"];

/// Built-in maneuvers, noiseless, seed 0.
pub fn builtin_script(name: &str) -> Result<ExcitationScript, SimError> {
    let (duration_s, pattern) = match name {
        "throttle_sweep" => (
            20.0,
            SetpointPattern::ThrottleSweep {
                hover: BUILTIN_HOVER,
                amplitude: 0.25,
                frequencies_hz: vec![0.3, 0.7, 1.3, 2.1, 3.1],
            },
        ),
        "roll_pitch_excite" => (
            20.0,
            SetpointPattern::RollPitch {
                hover: BUILTIN_HOVER,
                amplitude: 0.02,
                frequencies_hz: vec![1.7, 2.9],
            },
        ),
        "yaw_excite" => (
            20.0,
            SetpointPattern::Yaw {
                hover: BUILTIN_HOVER,
                amplitude: 0.15,
                frequencies_hz: vec![0.9, 1.6],
            },
        ),
        "random_tumble" => (
            5.0,
            SetpointPattern::RandomSteps {
                hover: BUILTIN_HOVER,
                amplitude: 0.1,
                hold_s: 0.15,
                seed: 7,
            },
        ),
        other => return Err(SimError::UnknownScript(other.to_string())),
    };
    Ok(ExcitationScript {
        name: name.to_string(),
        duration_s,
        pattern,
        noise: NoiseModel::none(),
        seed: 0,
    })
}

/// The three identification maneuvers in flight order.
pub fn builtin_flight() -> Vec<ExcitationScript> {
    ["throttle_sweep", "roll_pitch_excite", "yaw_excite"]
        .iter()
        .map(|n| builtin_script(n).expect("built-in"))
        .collect()
}

/// Simulation section of a config file: extra scripts and an optional plant
/// overriding the reference one. Other keys in the file are ignored.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptLibrary {
    #[serde(default)]
    pub scripts: Vec<ExcitationScript>,
    #[serde(default)]
    pub plant: Option<QuadrotorParams>,
}

impl ScriptLibrary {
    /// Script by name, looking at the file's own scripts before the built-ins.
    pub fn script(&self, name: &str) -> Result<ExcitationScript, SimError> {
        match self.scripts.iter().find(|s| s.name == name) {
            Some(s) => Ok(s.clone()),
            None => builtin_script(name),
        }
    }

    pub fn plant(&self) -> QuadrotorParams {
        self.plant.clone().unwrap_or_else(QuadrotorParams::crazyflie)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    /// Also record the true angular acceleration channel.
    #[serde(default)]
    pub record_angular_accel: bool,
}

pub fn run_script(script: &ExcitationScript, params: &QuadrotorParams, dt: f64) -> Result<SysIdDataset, SimError> {
    run_scripts(std::slice::from_ref(script), params, dt, SimOptions::default())
}

/// Fly the scripts back to back as one continuous flight starting level and
/// at rest, with motors at the first command. Each script becomes a segment
/// labelled with its name and draws its noise from its own seed.
pub fn run_scripts(
    scripts: &[ExcitationScript],
    params: &QuadrotorParams,
    dt: f64,
    options: SimOptions,
) -> Result<SysIdDataset, SimError> {
    params.validate()?;
    if !(dt > 0.0 && dt <= params.time_constant_s / 2.0) {
        return Err(SimError::StepTooLarge {
            dt,
            time_constant: params.time_constant_s,
        });
    }
    if scripts.is_empty() {
        return Err(SimError::InvalidScript {
            name: String::new(),
            reason: "no scripts".into(),
        });
    }
    for s in scripts {
        s.validate()?;
        if s.duration_s < dt {
            return Err(SimError::InvalidScript {
                name: s.name.clone(),
                reason: format!("duration {} is shorter than dt {dt}", s.duration_s),
            });
        }
    }

    let counts: Vec<usize> = scripts.iter().map(|s| (s.duration_s / dt + 1e-9).floor() as usize).collect();
    let total: usize = counts.iter().sum();
    let mut accel = Vec::with_capacity(total);
    let mut gyro = Vec::with_capacity(total);
    let mut setpoints = Vec::with_capacity(total);
    let mut alpha = options.record_angular_accel.then(|| Vec::with_capacity(total));
    let mut segments = Vec::with_capacity(scripts.len());

    let first = clamp_unit(scripts[0].pattern.command(0.0, scripts[0].duration_s));
    let mut state = SimState::at_rest(first);
    let mut k = 0usize;
    for (script, &count) in scripts.iter().zip(&counts) {
        let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
        let start = k;
        for j in 0..count {
            let sp = clamp_unit(script.pattern.command(j as f64 * dt, script.duration_s));
            let (a, g) = measure(&state, params, &script.noise, &mut rng);
            accel.push(a);
            gyro.push(g);
            setpoints.push(sp);
            if let Some(alpha) = alpha.as_mut() {
                let forces = params.forces(&state.motor_speeds);
                alpha.push(params.angular_acceleration(&state.body_rates, &forces));
            }
            state = step(&state, &sp, params, dt).map_err(|e| match e {
                SimError::UnstableStep { .. } => SimError::UnstableStep { time_s: k as f64 * dt },
                other => other,
            })?;
            k += 1;
        }
        segments.push(Segment::new(script.name.clone(), start, k));
    }
    Ok(SysIdDataset::new(dt, 0.0, accel, gyro, setpoints, alpha, segments)?)
}

fn clamp_unit(v: Vector4<f64>) -> Vector4<f64> {
    v.map(|x| x.clamp(0.0, 1.0))
}

/// Prediction residuals of a parameter set against a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationResiduals {
    pub accel_rmse_m_s2: f64,
    pub angular_accel_rmse_rad_s2: f64,
    /// RMS norm of the predicted specific force.
    pub predicted_accel_rms_m_s2: f64,
    pub samples: usize,
}

/// Replay the dataset's commands through `params` and compare predicted
/// specific force and angular acceleration against the observations.
///
/// Observed angular acceleration is the dataset's own channel when present,
/// otherwise the central difference of the gyro. The leading settling window
/// is excluded.
pub fn validate(ds: &SysIdDataset, params: &QuadrotorParams) -> Result<ValidationResiduals, SimError> {
    params.validate()?;
    let speeds = motor::reconstruct_speeds(ds, params.time_constant_s)?;
    let observed_alpha = match ds.angular_accel() {
        Some(a) => a.to_vec(),
        None => crate::inertia::angular_acceleration(ds.gyro(), ds.dt())
            .map_err(|e| SimError::InvalidParams(e.to_string()))?,
    };
    let start = motor::settle_samples(params.time_constant_s, ds.dt(), ds.len());
    let (mut acc_sq, mut alpha_sq, mut pred_sq) = (0.0, 0.0, 0.0);
    for k in start..ds.len() {
        let forces = params.forces(&speeds[k]);
        let pred = params.geometry.body_force(&forces) / params.geometry.mass_kg;
        acc_sq += (pred - ds.accel()[k]).norm_squared();
        pred_sq += pred.norm_squared();
        let alpha = params.angular_acceleration(&ds.gyro()[k], &forces);
        alpha_sq += (alpha - observed_alpha[k]).norm_squared();
    }
    let n = (ds.len() - start) as f64;
    Ok(ValidationResiduals {
        accel_rmse_m_s2: (acc_sq / (3.0 * n)).sqrt(),
        angular_accel_rmse_rad_s2: (alpha_sq / (3.0 * n)).sqrt(),
        predicted_accel_rms_m_s2: (pred_sq / n).sqrt(),
        samples: n as usize,
    })
}
