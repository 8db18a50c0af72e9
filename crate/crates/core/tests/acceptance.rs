//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use nalgebra::{DMatrix, DVector, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use common::ulog_fixtures::{check_fixture, malformed_headers};
use common::{config_for, flight, rel, DT};
use quadsysid::config::PipelineConfig;
use quadsysid::ingest::{parse_ulog, write_dataset_ulog, IngestError};
use quadsysid::inertia::{build_full_inertia_system, inertia_scaling_table, AngularDataset, REFERENCE_PLATFORMS};
use quadsysid::lsq::{log_grid, solve_ols, LinearSystem};
use quadsysid::motor::{fit_thrust_at, simulate_motor_speeds};
use quadsysid::pipeline::{run_pipeline, PipelineRun};
use quadsysid::report::{Estimate, IdentificationReport};
use quadsysid::service::{router, ServiceConfig};
use quadsysid::sim::{builtin_flight, builtin_script, run_scripts, NoiseModel, QuadrotorParams, SimOptions};

const PLANT_T_M: f64 = 0.072;
const PLANT_K: [f64; 3] = [0.0213, -0.0112, 0.1201];
const PLANT_IXX: f64 = 1.067e-5;
const PLANT_IZZ: f64 = 1.955e-5;
const PLANT_K_TAU: f64 = 4.548e-3;

const CLEAN_T_M_GRID_STEPS: f64 = 1.0;
const CLEAN_K_REL: f64 = 1e-3;
const CLEAN_I_REL: f64 = 5e-3;
const CLEAN_RATIO_REL: f64 = 5e-3;
const CLEAN_RUNTIME: Duration = Duration::from_secs(60);

const NOISE: NoiseModel = NoiseModel {
    accel_std_m_s2: 0.1,
    gyro_std_rad_s: 0.01,
};
const NOISY_T_M_GRID_STEPS: f64 = 2.0;
const NOISY_K_REL: f64 = 0.05;
const NOISY_I_REL: f64 = 0.10;
const NOISY_RATIO_REL: f64 = 0.10;

const TABLE_ROW_ABS: f64 = 0.005;
const TABLE_MEAN: f64 = 1.832;
const TABLE_MEAN_ABS: f64 = 0.005;

const HOVER_EXPECTED: f64 = 0.660;
const HOVER_PREDICTED_ABS: f64 = 0.005;
const HOVER_AGREEMENT_ABS: f64 = 0.01;

const DELAY_RMSE_FACTOR: f64 = 0.5;

const EMA_SAMPLES: usize = 10_000;
const EMA_ABS: f64 = 1e-12;

const OLS_SYSTEMS: usize = 1000;
const OLS_ORTHOGONALITY_REL: f64 = 1e-8;
const OLS_RECOVERY_REL: f64 = 1e-10;

const FULL_INERTIA_REL: f64 = 1e-6;

const ULOG_FIXTURES: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn grid_steps(estimate: f64, truth: f64, grid: &[f64]) -> f64 {
    (estimate / truth).ln().abs() / (grid[1] / grid[0]).ln()
}

struct Errors {
    t_m_steps: f64,
    k: f64,
    ixx: f64,
    iyy: f64,
    ratio: f64,
}

fn round_trip_errors(report: &IdentificationReport, config: &PipelineConfig) -> Option<Errors> {
    let grid = log_grid(config.sweep.t_min_s, config.sweep.t_max_s, config.sweep.points);
    let k = report.motor.thrust_curve.mean();
    let i = &report.inertia;
    Some(Errors {
        t_m_steps: grid_steps(report.motor.time_constant_s, PLANT_T_M, &grid),
        k: (0..3).map(|j| rel(k[j], PLANT_K[j])).fold(0.0, f64::max),
        ixx: rel(*i.ixx_kg_m2.value()?, PLANT_IXX),
        iyy: rel(*i.iyy_kg_m2.value()?, PLANT_IXX),
        ratio: rel(*i.yaw_ratio_kg_m2.value()?, PLANT_IZZ / PLANT_K_TAU),
    })
}

fn describe(e: &Errors) -> String {
    format!(
        "T_m {:.3} grid steps, K {:.2e}, Ixx {:.2e}, Iyy {:.2e}, Izz/Ktau {:.2e} (relative)",
        e.t_m_steps, e.k, e.ixx, e.iyy, e.ratio
    )
}

fn planted() -> QuadrotorParams {
    let mut p = QuadrotorParams::crazyflie();
    p.time_constant_s = PLANT_T_M;
    p.thrust_curve = quadsysid::motor::ThrustCurve::lumped(PLANT_K);
    p.inertia_kg_m2 = nalgebra::Vector3::new(PLANT_IXX, PLANT_IXX, PLANT_IZZ);
    p.k_tau = PLANT_K_TAU;
    p
}

fn clean_run() -> (Vec<u8>, PipelineConfig, Result<PipelineRun, String>, Duration) {
    let p = planted();
    let ds = flight(&p, NoiseModel::none(), false);
    let log = write_dataset_ulog(&ds);
    let config = config_for(&ds, &p);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let run = pool.install(|| run_pipeline(&config, &[&log])).map_err(|e| e.to_string());
    (log, config, run, start.elapsed())
}

fn noiseless_round_trip(config: &PipelineConfig, run: &Result<PipelineRun, String>, elapsed: Duration) -> Outcome {
    let run = match run {
        Ok(r) => r,
        Err(e) => return outcome(false, e.clone()),
    };
    let Some(e) = round_trip_errors(&run.report, config) else {
        return outcome(false, "inertia estimates skipped".into());
    };
    let pass = e.t_m_steps <= CLEAN_T_M_GRID_STEPS
        && e.k <= CLEAN_K_REL
        && e.ixx <= CLEAN_I_REL
        && e.iyy <= CLEAN_I_REL
        && e.ratio <= CLEAN_RATIO_REL
        && elapsed < CLEAN_RUNTIME;
    outcome(pass, format!("{}; {:.1} s on one thread", describe(&e), elapsed.as_secs_f64()))
}

fn noisy_round_trip() -> Outcome {
    let p = planted();
    let ds = flight(&p, NOISE, false);
    let log = write_dataset_ulog(&ds);
    let config = config_for(&ds, &p);
    let run = match run_pipeline(&config, &[&log]) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let Some(e) = round_trip_errors(&run.report, &config) else {
        return outcome(false, "inertia estimates skipped".into());
    };
    let pass = e.t_m_steps <= NOISY_T_M_GRID_STEPS
        && e.k <= NOISY_K_REL
        && e.ixx <= NOISY_I_REL
        && e.iyy <= NOISY_I_REL
        && e.ratio <= NOISY_RATIO_REL;
    outcome(pass, describe(&e))
}

fn table_reproduction() -> Outcome {
    let rows: Vec<(f64, f64, f64)> = REFERENCE_PLATFORMS.iter().map(|r| (r.ixx, r.iyy, r.izz)).collect();
    let table = match inertia_scaling_table(&rows) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let worst = table
        .ratios
        .iter()
        .zip(&REFERENCE_PLATFORMS)
        .map(|(c, r)| (c - r.c_xy_z).abs())
        .fold(0.0, f64::max);
    let mean_err = (table.mean_c_xy_z - TABLE_MEAN).abs();
    outcome(
        table.ratios.len() == 12 && worst <= TABLE_ROW_ABS && mean_err <= TABLE_MEAN_ABS,
        format!("{} rows, worst row error {worst:.4}, mean {:.4}", table.ratios.len(), table.mean_c_xy_z),
    )
}

fn hover_consistency(run: &Result<PipelineRun, String>) -> Outcome {
    let p = planted();
    let per_motor = p.geometry.mass_kg * p.geometry.gravity_norm() / 4.0;
    let [k0, k1, k2] = PLANT_K;
    let oracle = (-k1 + (k1 * k1 - 4.0 * k2 * (k0 - per_motor)).sqrt()) / (2.0 * k2);
    let Ok(run) = run else {
        return outcome(false, "pipeline failed".into());
    };
    let Estimate::Value(h) = &run.report.hover else {
        return outcome(false, "hover analysis skipped".into());
    };
    let pass = (oracle - HOVER_EXPECTED).abs() <= HOVER_PREDICTED_ABS
        && (h.predicted_hover_command - oracle).abs() <= 1e-6
        && (h.overall_mean_command - h.predicted_hover_command).abs() <= HOVER_AGREEMENT_ABS;
    outcome(
        pass,
        format!(
            "quadratic root {oracle:.4}, reported {:.4}, empirical {:.4}",
            h.predicted_hover_command, h.overall_mean_command
        ),
    )
}

fn delay_necessity() -> Outcome {
    let p = planted();
    let grid = log_grid(0.001, 1.0, 200);
    let mut details = Vec::new();
    let mut pass = true;
    for (label, noise) in [("noiseless", NoiseModel::none()), ("noisy", NOISE)] {
        let script = builtin_script("throttle_sweep").unwrap().with_noise(noise).with_seed(7);
        let ds = run_scripts(&[script], &p, DT, SimOptions::default()).unwrap();
        let at_true = fit_thrust_at(&ds, &p.geometry, PLANT_T_M, true).unwrap().rmse_m_s2;
        let at_min = fit_thrust_at(&ds, &p.geometry, grid[0], true).unwrap().rmse_m_s2;
        pass &= at_true < DELAY_RMSE_FACTOR * at_min;
        details.push(format!("{label}: {at_true:.3e} vs {at_min:.3e} m/s^2"));
    }
    outcome(pass, details.join(", "))
}

fn ema_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let setpoints: Vec<Vector4<f64>> = (0..EMA_SAMPLES).map(|_| Vector4::from_fn(|_, _| rng.random())).collect();
    let initial = Vector4::from_fn(|_, _| rng.random());
    let (t_m, dt) = (PLANT_T_M, DT);
    let speeds = simulate_motor_speeds(&setpoints, t_m, dt, initial).unwrap();
    let alpha = (-dt / t_m).exp();
    let mut worst = 0.0f64;
    for i in 0..4 {
        let u: Vec<f64> = setpoints.iter().map(|s| s[i]).collect();
        for (k, s) in speeds.iter().enumerate() {
            let mut sum = alpha.powi(k as i32) * initial[i];
            let mut weight = 1.0 - alpha;
            for j in (0..k).rev() {
                sum += weight * u[j];
                weight *= alpha;
            }
            worst = worst.max((s[i] - sum).abs());
        }
    }
    outcome(worst <= EMA_ABS, format!("max deviation {worst:.2e} over {EMA_SAMPLES} samples x 4 motors"))
}

fn ols_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut ortho, mut recovery) = (0.0f64, 0.0f64);
    for _ in 0..OLS_SYSTEMS {
        let n = rng.random_range(1..8);
        let m = rng.random_range(n + 2..n + 60);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let noisy = LinearSystem { a: a.clone(), b: b.clone(), row_blocks: m };
        let x = solve_ols(&noisy).unwrap().x;
        let r = &b - &a * &x;
        ortho = ortho.max((a.transpose() * &r).norm() / (a.norm() * b.norm()));

        let x_true = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let exact = LinearSystem { b: &a * &x_true, a, row_blocks: m };
        let x = solve_ols(&exact).unwrap().x;
        recovery = recovery.max((&x - &x_true).norm() / x_true.norm());
    }
    outcome(
        ortho <= OLS_ORTHOGONALITY_REL && recovery <= OLS_RECOVERY_REL,
        format!("worst orthogonality {ortho:.2e}, worst recovery {recovery:.2e} over {OLS_SYSTEMS} systems"),
    )
}

fn full_rank_inertia() -> Outcome {
    let mut p = planted();
    p.inertia_kg_m2.y = 1.3e-5;
    let mut scripts = builtin_flight();
    scripts.push(builtin_script("random_tumble").unwrap());
    let ds = run_scripts(&scripts, &p, DT, SimOptions { record_angular_accel: true }).unwrap();
    let seg = ds.select_segment("random_tumble").unwrap();
    let ad = AngularDataset::from_dataset(&seg, &p.thrust_curve, p.time_constant_s, 0.0).unwrap();
    let sol = match solve_ols(&build_full_inertia_system(&ad, &p.geometry)) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let truth = [p.inertia_kg_m2.x, p.inertia_kg_m2.y, p.inertia_kg_m2.z, p.k_tau, p.k_tau, p.k_tau, p.k_tau];
    let worst = truth.iter().enumerate().map(|(i, t)| rel(sol.x[i], *t)).fold(0.0, f64::max);
    outcome(worst <= FULL_INERTIA_REL, format!("worst relative error {worst:.2e} over 7 unknowns"))
}

fn parser() -> Outcome {
    let failures: Vec<String> = (0..ULOG_FIXTURES).filter_map(|s| check_fixture(s).err()).collect();
    let cases = malformed_headers();
    let rejected = cases
        .iter()
        .filter(|c| matches!(parse_ulog(c), Err(IngestError::MagicMismatch)))
        .count();
    let mut detail = format!(
        "{}/{ULOG_FIXTURES} fixtures bit-exact, {rejected}/{} malformed headers rejected",
        ULOG_FIXTURES as usize - failures.len(),
        cases.len()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first failure: {f}"));
    }
    outcome(failures.is_empty() && rejected == cases.len(), detail)
}

async fn http_report(workspace: &std::path::Path, config: &PipelineConfig, log: &[u8]) -> Result<IdentificationReport, String> {
    let app = router(ServiceConfig::new(workspace));
    let boundary = "acceptance";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"flight.ulg\"\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(log);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::post("/api/logs")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    if resp.status() != StatusCode::OK {
        return Err(format!("upload returned {}", resp.status()));
    }
    let up: serde_json::Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    let request = serde_json::json!({ "log_ids": [up["log_id"]], "config": config });
    let req = Request::post("/api/identify")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(request.to_string()))
        .unwrap();
    let resp = app.oneshot(req).await.map_err(|e| e.to_string())?;
    if resp.status() != StatusCode::OK {
        return Err(format!("identify returned {}", resp.status()));
    }
    let body: serde_json::Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    serde_json::from_value(body["report"].clone()).map_err(|e| e.to_string())
}

fn service_cli_parity(log: &[u8], config: &PipelineConfig) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("flight.ulg"), log).unwrap();
    std::fs::write(d.join("config.toml"), toml::to_string(config).unwrap()).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_quadsysid"))
        .args(["identify", "--config", "config.toml", "--out", "report.json", "flight.ulg"])
        .current_dir(d)
        .env("RUST_LOG", "error")
        .status()
        .unwrap();
    if !status.success() {
        return outcome(false, format!("CLI exited with {status}"));
    }
    let cli: IdentificationReport = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let http = match runtime.block_on(http_report(&d.join("ws"), config, log)) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let same = cli.without_timestamp() == http.without_timestamp();
    outcome(same, format!("CLI and HTTP reports {}", if same { "identical" } else { "differ" }))
}

fn main() -> ExitCode {
    let (log, config, run, elapsed) = clean_run();
    let checks: Vec<Check> = vec![
        ("noiseless round trip", Box::new(|| noiseless_round_trip(&config, &run, elapsed))),
        ("noisy round trip", Box::new(noisy_round_trip)),
        ("inertia scaling table", Box::new(table_reproduction)),
        ("hover consistency", Box::new(|| hover_consistency(&run))),
        ("motor delay necessity", Box::new(delay_necessity)),
        ("motor lag convolution oracle", Box::new(ema_oracle)),
        ("least squares invariants", Box::new(ols_invariants)),
        ("full-rank inertia system", Box::new(full_rank_inertia)),
        ("log parser", Box::new(parser)),
        ("service and CLI parity", Box::new(|| service_cli_parity(&log, &config))),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
