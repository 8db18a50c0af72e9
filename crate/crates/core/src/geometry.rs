//! Platform constants that are known before identification: mass, gravity
//! and the placement and orientation of the four rotors.

use nalgebra::{Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROTOR_COUNT: usize = 4;
pub const STANDARD_GRAVITY: f64 = 9.81;

const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("mass must be positive and finite, got {0}")]
    NonPositiveMass(f64),
    #[error("{axis} axis of rotor {rotor} is not unit length (norm {norm})")]
    NotUnitAxis {
        axis: &'static str,
        rotor: usize,
        norm: f64,
    },
    #[error("all rotor positions coincide")]
    DegenerateRotorPositions,
    #[error("geometry contains non-finite values")]
    NonFinite,
}

/// Rigid-body constants of a quadrotor, expressed in the body frame.
///
/// The torque axis of each rotor carries the sign of its reaction torque, so
/// for a conventional X frame the four `rotor_torque_axes` alternate between
/// `+z` and `-z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyGeometry {
    pub mass_kg: f64,
    #[serde(default = "default_gravity")]
    pub gravity_m_s2: Vector3<f64>,
    pub rotor_positions_m: [Vector3<f64>; ROTOR_COUNT],
    pub rotor_force_axes: [Vector3<f64>; ROTOR_COUNT],
    pub rotor_torque_axes: [Vector3<f64>; ROTOR_COUNT],
}

fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

impl RigidBodyGeometry {
    /// X-configuration quadrotor with all rotors thrusting along body `+z`.
    ///
    /// Rotor order: front-right, rear-right, rear-left, front-left (x forward,
    /// y left). Diagonal pairs share a spin direction.
    pub fn x_config(mass_kg: f64, arm_length_m: f64) -> Self {
        let d = arm_length_m / std::f64::consts::SQRT_2;
        let z = Vector3::z();
        RigidBodyGeometry {
            mass_kg,
            gravity_m_s2: default_gravity(),
            rotor_positions_m: [
                Vector3::new(d, -d, 0.0),
                Vector3::new(-d, -d, 0.0),
                Vector3::new(-d, d, 0.0),
                Vector3::new(d, d, 0.0),
            ],
            rotor_force_axes: [z; ROTOR_COUNT],
            rotor_torque_axes: [-z, z, -z, z],
        }
    }

    /// 27 g nano quadrotor with 46 mm arms.
    pub fn crazyflie() -> Self {
        Self::x_config(0.027, 0.046)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = std::iter::once(&self.gravity_m_s2)
            .chain(&self.rotor_positions_m)
            .chain(&self.rotor_force_axes)
            .chain(&self.rotor_torque_axes);
        if !(self.mass_kg > 0.0 && self.mass_kg.is_finite()) {
            return Err(GeometryError::NonPositiveMass(self.mass_kg));
        }
        if all.into_iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(GeometryError::NonFinite);
        }
        for (axis, set) in [("force", &self.rotor_force_axes), ("torque", &self.rotor_torque_axes)] {
            for (rotor, v) in set.iter().enumerate() {
                let norm = v.norm();
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(GeometryError::NotUnitAxis { axis, rotor, norm });
                }
            }
        }
        let first = self.rotor_positions_m[0];
        if self.rotor_positions_m.iter().all(|p| *p == first) {
            return Err(GeometryError::DegenerateRotorPositions);
        }
        Ok(())
    }

    pub fn gravity_norm(&self) -> f64 {
        self.gravity_m_s2.norm()
    }

    /// Columns `r_p_i x r_f_i`: the moment arm each unit of rotor force produces.
    pub fn moment_arms(&self) -> Matrix3x4<f64> {
        Matrix3x4::from_columns(&[
            self.rotor_positions_m[0].cross(&self.rotor_force_axes[0]),
            self.rotor_positions_m[1].cross(&self.rotor_force_axes[1]),
            self.rotor_positions_m[2].cross(&self.rotor_force_axes[2]),
            self.rotor_positions_m[3].cross(&self.rotor_force_axes[3]),
        ])
    }

    /// Body-frame force of the four rotors.
    pub fn body_force(&self, forces: &Vector4<f64>) -> Vector3<f64> {
        (0..ROTOR_COUNT).fold(Vector3::zeros(), |acc, i| acc + self.rotor_force_axes[i] * forces[i])
    }

    /// Torque produced by rotor forces through their lever arms only.
    pub fn lever_torque(&self, forces: &Vector4<f64>) -> Vector3<f64> {
        self.moment_arms() * forces
    }

    /// Reaction-torque direction weighted by rotor force, `sum r_tau_i f_i`.
    pub fn reaction_drive(&self, forces: &Vector4<f64>) -> Vector3<f64> {
        (0..ROTOR_COUNT).fold(Vector3::zeros(), |acc, i| acc + self.rotor_torque_axes[i] * forces[i])
    }

    /// Total body torque for a common torque coefficient.
    pub fn torque(&self, forces: &Vector4<f64>, k_tau: f64) -> Vector3<f64> {
        self.lever_torque(forces) + self.reaction_drive(forces) * k_tau
    }

    /// Geometry scaled uniformly by `s`: lengths by `s`, mass by `s^3`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.mass_kg *= s.powi(3);
        for p in out.rotor_positions_m.iter_mut() {
            *p *= s;
        }
        out
    }

    /// Whether every rotor thrusts along body z, making yaw torque depend on
    /// reaction torques alone.
    pub fn is_vertically_actuated(&self) -> bool {
        self.rotor_force_axes
            .iter()
            .all(|a| a.x.abs() < UNIT_NORM_TOL && a.y.abs() < UNIT_NORM_TOL)
    }
}
