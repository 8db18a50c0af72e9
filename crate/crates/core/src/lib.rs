//! Quadrotor system identification from flight logs.
//!
//! Logs are parsed ([`ingest`]) and resampled into a [`dataset::SysIdDataset`].
//! The motor lag and thrust curve come from [`motor`], the inertia and yaw
//! torque coefficient from [`inertia`], both on the solvers in [`lsq`].
//! [`pipeline`] chains the stages into an [`report::IdentificationReport`],
//! [`sim`] flies synthetic logs with known parameters and [`service`] exposes
//! the pipeline over HTTP.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod geometry;
pub mod inertia;
pub mod lsq;
pub mod motor;
pub mod sim;
pub mod ingest;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod service;
