//! Command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or config error,
//! 3 ingestion, 4 motor identification, 5 inertia identification,
//! 6 validation.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quadsysid::config::PipelineConfig;
use quadsysid::ingest::{self, ChannelMapping, ChannelRef};
use quadsysid::pipeline::{self, PipelineError};
use quadsysid::report::PlotKind;
use quadsysid::service::{self, ServiceConfig};
use quadsysid::sim::{self, NoiseModel, ScriptLibrary, SimOptions};

#[derive(Parser)]
#[command(name = "quadsysid", version, about = "Quadrotor system identification from flight logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full identification on one or more logs.
    Identify {
        /// TOML or JSON pipeline config. Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory receiving one CSV file per available plot series.
        #[arg(long)]
        plots_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Fly excitation scripts on a simulated plant and write the log.
    Simulate {
        /// Script name; repeat to fly several back to back. `flight` expands
        /// to the three identification maneuvers.
        #[arg(long, required = true)]
        script: Vec<String>,
        /// Output log, `.ulg` for ULog and anything else for CSV.
        #[arg(long)]
        out: PathBuf,
        /// Config file with extra `[[scripts]]` and an optional `[plant]`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.001)]
        dt: f64,
        /// Accelerometer noise standard deviation, m/s^2.
        #[arg(long)]
        accel_noise: Option<f64>,
        /// Gyro noise standard deviation, rad/s.
        #[arg(long)]
        gyro_noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also log the true angular acceleration.
        #[arg(long)]
        angular_accel: bool,
        /// Write a pipeline config whose windows cover the flown maneuvers.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
    /// Motor time constant sweep only; prints the RMSE curve.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        log: PathBuf,
    },
    /// Serve the HTTP interface.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        workspace: PathBuf,
        /// Default pipeline config for identify requests that carry none.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        max_upload_mib: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn other(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: format!("{} stage: {e}", e.stage()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let config = match path {
        Some(p) => PipelineConfig::load(p).map_err(Failure::config)?,
        None => PipelineConfig::default(),
    };
    config.validate().map_err(Failure::config)?;
    Ok(config)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::other(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn identify(config: Option<&Path>, out: Option<&Path>, plots_dir: Option<&Path>, format: Format, logs: &[PathBuf]) -> Result<(), Failure> {
    let config = load_config(config)?;
    let run = pipeline::run_pipeline_files(&config, logs)?;
    for w in &run.report.warnings {
        log::warn!("{w}");
    }
    if let Some(dir) = plots_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::other(format!("{}: {e}", dir.display())))?;
        for kind in PlotKind::ALL {
            if let Ok(csv) = run.plots.export(kind) {
                let path = dir.join(format!("{}.csv", kind.name()));
                std::fs::write(&path, csv).map_err(|e| Failure::other(format!("{}: {e}", path.display())))?;
            }
        }
    }
    let text = match format {
        Format::Json => run.report.to_json(),
        Format::Csv => run.report.summary_table().to_csv(),
    };
    write_output(out, &text)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    names: &[String],
    out: &Path,
    config: Option<&Path>,
    dt: f64,
    noise: NoiseModel,
    noise_given: bool,
    seed: Option<u64>,
    angular_accel: bool,
    config_out: Option<&Path>,
) -> Result<(), Failure> {
    let library = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            let is_json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            if is_json {
                serde_json::from_str::<ScriptLibrary>(&text).map_err(|e| Failure::config(e.to_string()))?
            } else {
                toml::from_str::<ScriptLibrary>(&text).map_err(|e| Failure::config(e.to_string()))?
            }
        }
        None => ScriptLibrary::default(),
    };
    let mut scripts = Vec::new();
    for name in names {
        if name == "flight" {
            scripts.extend(sim::builtin_flight());
        } else {
            scripts.push(library.script(name).map_err(|e| Failure::config(e.to_string()))?);
        }
    }
    for (i, s) in scripts.iter_mut().enumerate() {
        if noise_given {
            s.noise = noise;
        }
        if let Some(seed) = seed {
            s.seed = seed.wrapping_add(i as u64);
        }
    }
    let ds = sim::run_scripts(&scripts, &library.plant(), dt, SimOptions { record_angular_accel: angular_accel })
        .map_err(|e| Failure::other(e.to_string()))?;

    let mut mapping = ChannelMapping::default();
    if angular_accel {
        mapping.angular_accel = Some(ChannelRef::named("angular_accel", &["x", "y", "z"]));
    }
    let is_ulog = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("ulg"));
    let bytes = if is_ulog {
        ingest::write_dataset_ulog(&ds)
    } else {
        ingest::write_crazyflie_csv(&ds, &mapping)
            .map_err(|e| Failure::other(e.to_string()))?
            .into_bytes()
    };
    std::fs::write(out, bytes).map_err(|e| Failure::other(format!("{}: {e}", out.display())))?;
    log::info!("wrote {} samples ({:.1} s) to {}", ds.len(), ds.duration(), out.display());

    if let Some(path) = config_out {
        let config = PipelineConfig {
            geometry: library.plant().geometry,
            mapping,
            dt_s: dt,
            segments: pipeline::windows_from_segments(&ds, 0),
            ..PipelineConfig::default()
        };
        let text = toml::to_string(&config).map_err(|e| Failure::other(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Failure::other(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn sweep(config: Option<&Path>, out: Option<&Path>, format: Format, log_path: &Path) -> Result<(), Failure> {
    let config = load_config(config)?;
    let bytes = std::fs::read(log_path).map_err(|e| {
        Failure::from(PipelineError::Io {
            path: log_path.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let (est, table) = pipeline::run_sweep(&config, &bytes)?;
    if est.boundary_hit {
        log::warn!("best time constant lies on the sweep boundary");
    }
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&serde_json::json!({
                "time_constant_s": est.time_constant_s,
                "grid_time_constant_s": est.grid_time_constant_s,
                "rmse_m_s2": est.fit_rmse_m_s2,
                "boundary_hit": est.boundary_hit,
                "sweep": table,
            }))
            .expect("serializes");
            s.push('\n');
            s
        }
    };
    eprintln!("time constant: {:.6} s", est.time_constant_s);
    write_output(out, &text)
}

fn serve(port: u16, bind: &str, workspace: PathBuf, config: Option<&Path>, max_upload_mib: usize) -> Result<(), Failure> {
    let defaults = load_config(config)?;
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| Failure::config(format!("bad bind address: {e}")))?;
    let mut cfg = ServiceConfig::new(workspace);
    cfg.defaults = defaults;
    cfg.max_upload_bytes = max_upload_mib << 20;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::other(e.to_string()))?;
    runtime
        .block_on(service::serve(cfg, addr))
        .map_err(|e| Failure::other(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Identify {
            config,
            out,
            plots_dir,
            format,
            logs,
        } => identify(config.as_deref(), out.as_deref(), plots_dir.as_deref(), format, &logs),
        Command::Simulate {
            script,
            out,
            config,
            dt,
            accel_noise,
            gyro_noise,
            seed,
            angular_accel,
            config_out,
        } => {
            let noise = NoiseModel {
                accel_std_m_s2: accel_noise.unwrap_or(0.0),
                gyro_std_rad_s: gyro_noise.unwrap_or(0.0),
            };
            let given = accel_noise.is_some() || gyro_noise.is_some();
            simulate(&script, &out, config.as_deref(), dt, noise, given, seed, angular_accel, config_out.as_deref())
        }
        Command::Sweep { config, out, format, log } => sweep(config.as_deref(), out.as_deref(), format, &log),
        Command::Serve {
            port,
            bind,
            workspace,
            config,
            max_upload_mib,
        } => serve(port, &bind, workspace, config.as_deref(), max_upload_mib),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
