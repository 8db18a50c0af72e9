//! End-to-end identification: ingestion, motor sweep, inertia, hover
//! statistics and validation, producing a report and its plot series.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{PipelineConfig, SegmentWindows, TimeWindow};
use crate::dataset::SysIdDataset;
use crate::inertia::{self, AngularDataset, InertiaError, YAW_RATIO_DISAGREEMENT_LIMIT};
use crate::ingest::{self, IngestError, LogFormat};
use crate::lsq;
use crate::motor::{self, MotorError, MotorModelEstimate};
use crate::report::{
    Cell, Estimate, HoverReport, IdentificationReport, InertiaReport, InputDigest, MotorReport, PlotData, Provenance,
    Table, ValidationReport, SCHEMA_VERSION, TOOL_VERSION,
};
use crate::sim::{self, QuadrotorParams, SimError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("log {index}: {source}")]
    Ingestion {
        index: usize,
        #[source]
        source: IngestError,
    },
    #[error("{role} window: {reason}")]
    Segment { role: &'static str, reason: String },
    #[error(transparent)]
    Motor(#[from] MotorError),
    #[error(transparent)]
    Inertia(#[from] InertiaError),
    #[error(transparent)]
    Validation(#[from] SimError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } | PipelineError::Ingestion { .. } | PipelineError::Segment { .. } => "ingestion",
            PipelineError::Motor(_) => "motor",
            PipelineError::Inertia(_) => "inertia",
            PipelineError::Validation(_) => "validation",
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self.stage() {
            "config" => 2,
            "ingestion" => 3,
            "motor" => 4,
            "inertia" => 5,
            "validation" => 6,
            _ => 1,
        }
    }
}

/// A finished run: the report and the series behind its figures.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub report: IdentificationReport,
    pub plots: PlotData,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content address of a run: digest of the input digests and the config.
pub fn report_id(input_digests: &[String], config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    for d in input_digests {
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())
}

/// Load the logs from disk and run the pipeline.
pub fn run_pipeline_files<P: AsRef<Path>>(config: &PipelineConfig, paths: &[P]) -> Result<PipelineRun, PipelineError> {
    let blobs = paths
        .iter()
        .map(|p| {
            std::fs::read(p.as_ref()).map_err(|e| PipelineError::Io {
                path: p.as_ref().display().to_string(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[u8]> = blobs.iter().map(Vec::as_slice).collect();
    run_pipeline(config, &refs)
}

/// Resampled datasets, their provenance entries and ingestion warnings.
pub type LoadedLogs = (Vec<SysIdDataset>, Vec<InputDigest>, Vec<String>);

/// Parse and resample every log.
pub fn load_datasets(config: &PipelineConfig, logs: &[&[u8]]) -> Result<LoadedLogs, PipelineError> {
    let mut datasets = Vec::with_capacity(logs.len());
    let mut digests = Vec::with_capacity(logs.len());
    let mut warnings = Vec::new();
    for (index, bytes) in logs.iter().enumerate() {
        let wrap = |source| PipelineError::Ingestion { index, source };
        let format = ingest::detect_format(bytes);
        let raw = ingest::parse_log(bytes, &config.mapping).map_err(wrap)?;
        if raw.dropped_samples() > 0 {
            warnings.push(format!("log {index}: dropped {} out-of-order samples", raw.dropped_samples()));
        }
        let ds = ingest::resample_sync(&raw, &config.mapping, config.dt_s).map_err(wrap)?;
        digests.push(InputDigest {
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
            format: match format {
                LogFormat::Ulog => "ulog",
                LogFormat::Csv => "csv",
            }
            .into(),
            samples: ds.len(),
            duration_s: ds.duration(),
        });
        datasets.push(ds);
    }
    Ok((datasets, digests, warnings))
}

fn select_window(datasets: &[SysIdDataset], role: &'static str, w: &TimeWindow) -> Result<SysIdDataset, PipelineError> {
    let ds = datasets.get(w.log).ok_or_else(|| PipelineError::Segment {
        role,
        reason: format!("log index {} out of range ({} logs)", w.log, datasets.len()),
    })?;
    let range = ds.index_window(w.start_s, w.end_s).ok_or_else(|| PipelineError::Segment {
        role,
        reason: format!(
            "[{}, {}] s does not overlap the log ([{}, {}] s)",
            w.start_s,
            w.end_s,
            ds.t0(),
            ds.time(ds.len() - 1)
        ),
    })?;
    if range.len() < 2 {
        return Err(PipelineError::Segment {
            role,
            reason: "window holds fewer than 2 samples".into(),
        });
    }
    ds.slice(range).map_err(|e| PipelineError::Segment { role, reason: e.to_string() })
}

fn thrust_table(ds: &SysIdDataset, est: &MotorModelEstimate, config: &PipelineConfig) -> Result<Table, MotorError> {
    let speeds = motor::reconstruct_speeds(ds, est.time_constant_s)?;
    let start = motor::settle_samples(est.time_constant_s, ds.dt(), ds.len());
    let mut t = Table::new(&[
        "time_s",
        "mean_speed",
        "measured_accel_z_m_s2",
        "predicted_accel_z_m_s2",
    ]);
    for (k, s) in speeds.iter().enumerate().skip(start) {
        let pred = motor::predict_specific_force(&est.curve, &config.geometry, s);
        t.push_nums(&[ds.time(k), s.mean(), ds.accel()[k].z, pred.z]);
    }
    Ok(t)
}

fn angular_rows(table: &mut Table, ds: &SysIdDataset, ad: &AngularDataset, axis: &str, pick: impl Fn(usize) -> (f64, f64, f64)) {
    for k in 0..ad.len() {
        let (measured, predicted, regressor) = pick(k);
        table.rows.push(vec![
            Cell::Text(axis.to_string()),
            Cell::Num(ds.time(ad.offset + k)),
            Cell::Num(measured),
            Cell::Num(predicted),
            Cell::Num(regressor),
        ]);
    }
}

struct Pooled {
    sq: f64,
    n: usize,
}

impl Pooled {
    fn add(&mut self, rmse: f64, n: usize) {
        self.sq += rmse * rmse * n as f64;
        self.n += n;
    }

    fn rmse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sq / self.n as f64).sqrt()
        }
    }
}

fn accel_rmse(ds: &SysIdDataset, est: &MotorModelEstimate, config: &PipelineConfig) -> Result<(f64, usize), MotorError> {
    let speeds = motor::reconstruct_speeds(ds, est.time_constant_s)?;
    let start = motor::settle_samples(est.time_constant_s, ds.dt(), ds.len());
    let mut sq = 0.0;
    for (s, a) in speeds.iter().zip(ds.accel()).skip(start) {
        sq += (motor::predict_specific_force(&est.curve, &config.geometry, s) - a).norm_squared();
    }
    let n = ds.len() - start;
    Ok(((sq / (3 * n.max(1)) as f64).sqrt(), n))
}

const HOVER_BIN: f64 = 0.01;

/// Run the full identification on already-loaded log bytes.
pub fn run_pipeline(config: &PipelineConfig, logs: &[&[u8]]) -> Result<PipelineRun, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    if logs.is_empty() {
        return Err(PipelineError::Config("no logs given".into()));
    }
    let (datasets, inputs, mut warnings) = load_datasets(config, logs)?;
    let geom = &config.geometry;
    let opts = &config.options;

    let thrust_ds = match &config.segments.thrust {
        Some(w) => select_window(&datasets, "thrust", w)?,
        None => {
            warnings.push("no thrust window configured; using all of log 0".into());
            datasets[0].clone()
        }
    };
    let roll_pitch_ds = config
        .segments
        .roll_pitch
        .as_ref()
        .map(|w| select_window(&datasets, "roll_pitch", w))
        .transpose()?;
    let yaw_ds = config
        .segments
        .yaw
        .as_ref()
        .map(|w| select_window(&datasets, "yaw", w))
        .transpose()?;

    // motor lag and thrust curve
    let grid = lsq::log_grid(config.sweep.t_min_s, config.sweep.t_max_s, config.sweep.points);
    let est = motor::sweep_time_constant(&thrust_ds, geom, &grid, opts.lumped, config.sweep.refine)?;
    if est.boundary_hit {
        warnings.push(format!(
            "motor time constant optimum {} s lies on the sweep boundary",
            est.grid_time_constant_s
        ));
    }
    let mut plots = PlotData::default();
    let mut sweep = Table::new(&["t_m_s", "rmse_m_s2"]);
    for &(t, r) in &est.sweep_curve {
        sweep.push_nums(&[t, r]);
    }
    plots.sweep = Some(sweep);
    plots.thrust_fit = Some(thrust_table(&thrust_ds, &est, config)?);

    // angular dynamics
    if !geom.is_vertically_actuated() {
        warnings.push("rotors are not all vertical; yaw identification assumes reaction torque alone".into());
    }
    let angular = |ds: &SysIdDataset| AngularDataset::from_dataset(ds, &est.curve, est.time_constant_s, opts.gyro_filter_s);
    let rp_ad = roll_pitch_ds.as_ref().map(angular).transpose()?;
    let yaw_ad = yaw_ds.as_ref().map(angular).transpose()?;
    let rp = rp_ad.as_ref().map(|ad| inertia::fit_roll_pitch(ad, geom, opts.reciprocal)).transpose()?;
    let ratio = yaw_ad.as_ref().map(|ad| inertia::fit_yaw_ratio(ad, geom)).transpose()?;
    let izz = rp
        .as_ref()
        .map(|f| inertia::predict_izz(f.ixx_kg_m2, f.iyy_kg_m2, opts.c_xy_z))
        .transpose()?;
    let k_tau = match (&yaw_ad, izz) {
        (Some(ad), Some(izz)) => Some(inertia::fit_k_tau(ad, geom, izz)?),
        _ => None,
    };
    const NO_RP: &str = "no roll_pitch window configured";
    const NO_YAW: &str = "no yaw window configured";
    if rp.is_none() {
        warnings.push(format!("{NO_RP}; roll, pitch and yaw inertia skipped"));
    }
    if yaw_ad.is_none() {
        warnings.push(format!("{NO_YAW}; izz, k_tau and yaw ratio skipped"));
    }
    let yaw_reason = if yaw_ad.is_none() { NO_YAW } else { NO_RP };
    let (yaw_ratio, izz_est) = match (&k_tau, izz) {
        (Some(kt), Some(izz)) => {
            let r = izz / kt.k_tau;
            if let Some(direct) = &ratio {
                let gap = (direct.ratio_kg_m2 - r).abs() / r;
                if gap > YAW_RATIO_DISAGREEMENT_LIMIT {
                    warnings.push(format!(
                        "yaw ratio from the two regressions disagrees by {:.1}% (direct {:.4e}, decomposed {:.4e})",
                        gap * 100.0,
                        direct.ratio_kg_m2,
                        r
                    ));
                }
            }
            (Estimate::Value(r), Estimate::Value(izz))
        }
        _ => (Estimate::skipped(yaw_reason), Estimate::skipped(yaw_reason)),
    };
    let inertia_report = InertiaReport {
        ixx_kg_m2: rp.as_ref().map_or(Estimate::skipped(NO_RP), |f| Estimate::Value(f.ixx_kg_m2)),
        iyy_kg_m2: rp.as_ref().map_or(Estimate::skipped(NO_RP), |f| Estimate::Value(f.iyy_kg_m2)),
        izz_kg_m2: izz_est,
        k_tau: k_tau.as_ref().map_or(Estimate::skipped(yaw_reason), |f| Estimate::Value(f.k_tau)),
        yaw_ratio_kg_m2: yaw_ratio,
        yaw_ratio_direct_kg_m2: ratio.as_ref().map_or(Estimate::skipped(NO_YAW), |f| Estimate::Value(f.ratio_kg_m2)),
        c_xy_z: opts.c_xy_z,
        reciprocal: opts.reciprocal,
        roll_rmse_rad_s2: rp.as_ref().map_or(Estimate::skipped(NO_RP), |f| Estimate::Value(f.roll_rmse_rad_s2)),
        pitch_rmse_rad_s2: rp.as_ref().map_or(Estimate::skipped(NO_RP), |f| Estimate::Value(f.pitch_rmse_rad_s2)),
        k_tau_rmse_n_m: k_tau.as_ref().map_or(Estimate::skipped(yaw_reason), |f| Estimate::Value(f.rmse_n_m)),
    };

    if rp_ad.is_some() || yaw_ad.is_some() {
        let mut table = Table::new(&["axis", "time_s", "measured_rad_s2", "predicted_rad_s2", "regressor"]);
        if let (Some(ds), Some(ad), Some(f)) = (&roll_pitch_ds, &rp_ad, &rp) {
            let arms = geom.moment_arms();
            let torque: Vec<_> = ad.forces.iter().map(|f| arms * f).collect();
            angular_rows(&mut table, ds, ad, "roll", |k| {
                (ad.angular_accel[k].x, torque[k].x / f.ixx_kg_m2, torque[k].x)
            });
            angular_rows(&mut table, ds, ad, "pitch", |k| {
                (ad.angular_accel[k].y, torque[k].y / f.iyy_kg_m2, torque[k].y)
            });
        }
        if let (Some(ds), Some(ad), Some(r)) = (&yaw_ds, &yaw_ad, &ratio) {
            let drive = inertia::yaw_drive(ad, geom);
            let scale = yaw_ratio_value(&inertia_report).unwrap_or(r.ratio_kg_m2);
            angular_rows(&mut table, ds, ad, "yaw", |k| (ad.angular_accel[k].z, drive[k] / scale, drive[k]));
        }
        plots.angular_fit = Some(table);
    }

    // hover statistics over every selected window
    let mut pieces: Vec<&SysIdDataset> = vec![&thrust_ds];
    pieces.extend(roll_pitch_ds.iter());
    pieces.extend(yaw_ds.iter());
    let hover = hover_stats(&pieces, &est, config)?;
    let hover_report = match hover {
        Ok((stats, hist)) => {
            plots.hover_hist = Some(hist);
            Estimate::Value(stats)
        }
        Err(reason) => {
            warnings.push(format!("hover analysis skipped: {reason}"));
            Estimate::Skipped(reason)
        }
    };

    // validation
    let full_params = match (&rp, &izz, &k_tau) {
        (Some(f), Some(izz), Some(kt)) => Some(QuadrotorParams {
            geometry: geom.clone(),
            inertia_kg_m2: nalgebra::Vector3::new(f.ixx_kg_m2, f.iyy_kg_m2, *izz),
            time_constant_s: est.time_constant_s,
            thrust_curve: est.curve.clone(),
            k_tau: kt.k_tau,
        }),
        _ => None,
    };
    let mut acc = Pooled { sq: 0.0, n: 0 };
    for ds in &pieces {
        let (r, n) = accel_rmse(ds, &est, config)?;
        acc.add(r, n);
    }
    let angular_rmse = match &full_params {
        Some(p) => {
            let mut ang = Pooled { sq: 0.0, n: 0 };
            for ds in [&roll_pitch_ds, &yaw_ds].into_iter().flatten() {
                let v = sim::validate(ds, p)?;
                ang.add(v.angular_accel_rmse_rad_s2, v.samples);
            }
            Estimate::Value(ang.rmse())
        }
        None => Estimate::skipped("inertia estimates incomplete"),
    };

    let report = IdentificationReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        provenance: Provenance {
            inputs,
            config: config.clone(),
        },
        motor: MotorReport {
            time_constant_s: est.time_constant_s,
            grid_time_constant_s: est.grid_time_constant_s,
            thrust_curve: est.curve.clone(),
            fit_rmse_m_s2: est.fit_rmse_m_s2,
            boundary_hit: est.boundary_hit,
            regression_samples: est.regression_samples,
            sweep_points: est.sweep_curve.len(),
        },
        inertia: inertia_report,
        hover: hover_report,
        validation: ValidationReport {
            accel_rmse_m_s2: acc.rmse(),
            angular_accel_rmse_rad_s2: angular_rmse,
            samples: acc.n,
        },
        warnings,
    };
    Ok(PipelineRun { report, plots })
}

fn yaw_ratio_value(r: &InertiaReport) -> Option<f64> {
    r.yaw_ratio_kg_m2.value().copied()
}

type HoverOutcome = Result<(HoverReport, Table), String>;

fn hover_stats(pieces: &[&SysIdDataset], est: &MotorModelEstimate, config: &PipelineConfig) -> Result<HoverOutcome, PipelineError> {
    let mut joined = pieces[0].clone();
    let mut speeds = motor::reconstruct_speeds(pieces[0], est.time_constant_s)?;
    for ds in &pieces[1..] {
        joined = joined.concat(ds).map_err(|e| PipelineError::Segment {
            role: "hover",
            reason: e.to_string(),
        })?;
        speeds.extend(motor::reconstruct_speeds(ds, est.time_constant_s)?);
    }
    let pct = config.options.hover_percentile;
    let stats = match motor::hover_analysis(&joined, &speeds, &est.curve, &config.geometry, pct) {
        Ok(s) => s,
        Err(e @ MotorError::NoRealRoot { .. }) => return Ok(Err(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let picked = motor::hover_selection(&joined, &config.geometry, pct)?;
    let bins = (1.0 / HOVER_BIN).round() as usize;
    let mut counts = vec![0usize; bins];
    for &k in &picked {
        let m = speeds[k].mean();
        counts[((m / HOVER_BIN) as usize).min(bins - 1)] += 1;
    }
    let mut hist = Table::new(&["command_lo", "command_hi", "count"]);
    for (i, c) in counts.iter().enumerate() {
        hist.push_nums(&[i as f64 * HOVER_BIN, (i + 1) as f64 * HOVER_BIN, *c as f64]);
    }
    let report = HoverReport {
        percentile: stats.percentile,
        mean_command: stats.mean_command,
        overall_mean_command: stats.overall_mean_command(),
        predicted_hover_command: stats.predicted_hover_command,
        selected_samples: stats.selected_samples,
    };
    Ok(Ok((report, hist)))
}

/// Motor-only run used by the `sweep` subcommand: the RMSE curve and the
/// selected time constant on the thrust window.
pub fn run_sweep(config: &PipelineConfig, log: &[u8]) -> Result<(MotorModelEstimate, Table), PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let (datasets, _, _) = load_datasets(config, &[log])?;
    let ds = match &config.segments.thrust {
        Some(w) => select_window(&datasets, "thrust", w)?,
        None => datasets[0].clone(),
    };
    let grid = lsq::log_grid(config.sweep.t_min_s, config.sweep.t_max_s, config.sweep.points);
    let est = motor::sweep_time_constant(&ds, &config.geometry, &grid, config.options.lumped, config.sweep.refine)?;
    let mut table = Table::new(&["t_m_s", "rmse_m_s2"]);
    for &(t, r) in &est.sweep_curve {
        table.push_nums(&[t, r]);
    }
    Ok((est, table))
}

/// Windows covering the labelled segments of a dataset, for a flight made of
/// the built-in maneuvers. Labels `throttle_sweep`, `roll_pitch_excite` and
/// `yaw_excite` map to the thrust, roll/pitch and yaw windows.
pub fn windows_from_segments(ds: &SysIdDataset, log: usize) -> SegmentWindows {
    let window = |label: &str| {
        ds.segments().iter().find(|s| s.label == label && s.end > s.start + 1).map(|s| TimeWindow {
            start_s: ds.time(s.start),
            end_s: ds.time(s.end - 1),
            log,
        })
    };
    SegmentWindows {
        thrust: window("throttle_sweep"),
        roll_pitch: window("roll_pitch_excite"),
        yaw: window("yaw_excite"),
    }
}
