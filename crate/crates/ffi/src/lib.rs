//! C ABI over the identification toolkit.
//!
//! Every fallible function returns a [`QsidStatus`]. On failure a message is
//! kept per thread and can be read with [`qsid_last_error_message`] until the
//! next failing call on the same thread.
//!
//! Strings returned through `*mut *mut c_char` out-parameters are owned by
//! the caller and must be released with [`qsid_string_free`]. Pipeline
//! results are opaque handles released with [`qsid_result_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::Vector4;
use quadsysid::config::PipelineConfig;
use quadsysid::pipeline::{self, PipelineError, PipelineRun};
use quadsysid::report::PlotKind;
use quadsysid::{inertia, motor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Config = 4,
    Ingestion = 5,
    Motor = 6,
    Inertia = 7,
    Validation = 8,
    SeriesUnavailable = 9,
    Panic = 10,
}

/// Identified motor model in the lumped form; per-motor fits report the
/// mean curve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QsidMotorSummary {
    pub time_constant_s: f64,
    pub k: [f64; 3],
    pub fit_rmse_m_s2: f64,
    pub boundary_hit: bool,
}

/// Opaque pipeline result.
pub struct QsidResult {
    run: PipelineRun,
    report_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QsidStatus, message: impl Into<String>) -> QsidStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> QsidStatus) -> QsidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(QsidStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, QsidStatus> {
    if p.is_null() {
        return Err(fail(QsidStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(QsidStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn pipeline_status(e: &PipelineError) -> QsidStatus {
    match e.stage() {
        "config" => QsidStatus::Config,
        "ingestion" => QsidStatus::Ingestion,
        "motor" => QsidStatus::Motor,
        "inertia" => QsidStatus::Inertia,
        _ => QsidStatus::Validation,
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn qsid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qsid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Per-sample decay factor of the first-order motor lag.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn qsid_ema_alpha(time_constant_s: f64, dt_s: f64, out: *mut f64) -> QsidStatus {
    guard(|| {
        if out.is_null() {
            return fail(QsidStatus::NullPointer, "out is null");
        }
        match motor::ema_alpha(time_constant_s, dt_s) {
            Ok(a) => {
                *out = a;
                QsidStatus::Ok
            }
            Err(e) => fail(QsidStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Motor speeds under a sequence of commands.
///
/// `setpoints` and `out` hold `n` rows of 4 values, row-major. `initial`
/// holds 4 values, or is null to start from rest. Row `k + 1` of the output
/// is the update of row `k` under command `k`.
///
/// # Safety
/// `setpoints` and `out` must be valid for `4 * n` doubles; `initial` must be
/// null or valid for 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn qsid_simulate_motor_speeds(
    setpoints: *const f64,
    n: usize,
    time_constant_s: f64,
    dt_s: f64,
    initial: *const f64,
    out: *mut f64,
) -> QsidStatus {
    guard(|| {
        if n == 0 {
            return QsidStatus::Ok;
        }
        if setpoints.is_null() || out.is_null() {
            return fail(QsidStatus::NullPointer, "setpoints or out is null");
        }
        let raw = std::slice::from_raw_parts(setpoints, 4 * n);
        let sp: Vec<Vector4<f64>> = raw.chunks_exact(4).map(Vector4::from_row_slice).collect();
        let init = if initial.is_null() {
            Vector4::zeros()
        } else {
            Vector4::from_row_slice(std::slice::from_raw_parts(initial, 4))
        };
        match motor::simulate_motor_speeds(&sp, time_constant_s, dt_s, init) {
            Ok(speeds) => {
                let dst = std::slice::from_raw_parts_mut(out, 4 * n);
                for (row, s) in dst.chunks_exact_mut(4).zip(&speeds) {
                    row.copy_from_slice(s.as_slice());
                }
                QsidStatus::Ok
            }
            Err(e) => fail(QsidStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Yaw inertia from the roll and pitch inertias and the scaling constant.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn qsid_predict_izz(ixx: f64, iyy: f64, c_xy_z: f64, out: *mut f64) -> QsidStatus {
    guard(|| {
        if out.is_null() {
            return fail(QsidStatus::NullPointer, "out is null");
        }
        match inertia::predict_izz(ixx, iyy, c_xy_z) {
            Ok(v) => {
                *out = v;
                QsidStatus::Ok
            }
            Err(e) => fail(QsidStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Run the full pipeline on log files.
///
/// `config_path` names a TOML or JSON config, or is null for defaults. On
/// success `*out` receives a handle to release with [`qsid_result_free`].
///
/// # Safety
/// `log_paths` must be valid for `n_logs` NUL-terminated strings; `out` must
/// be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn qsid_identify_files(
    config_path: *const c_char,
    log_paths: *const *const c_char,
    n_logs: usize,
    out: *mut *mut QsidResult,
) -> QsidStatus {
    guard(|| {
        if out.is_null() {
            return fail(QsidStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        if log_paths.is_null() || n_logs == 0 {
            return fail(QsidStatus::InvalidArgument, "no log paths given");
        }
        let config = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            let p = match read_str(config_path, "config_path") {
                Ok(p) => p,
                Err(s) => return s,
            };
            match PipelineConfig::load(p.as_ref()) {
                Ok(c) => c,
                Err(e) => return fail(QsidStatus::Config, e),
            }
        };
        let mut paths = Vec::with_capacity(n_logs);
        for i in 0..n_logs {
            match read_str(*log_paths.add(i), "log path") {
                Ok(p) => paths.push(PathBuf::from(p)),
                Err(s) => return s,
            }
        }
        match pipeline::run_pipeline_files(&config, &paths) {
            Ok(run) => {
                let report_json = CString::new(run.report.to_json()).expect("JSON has no NUL");
                *out = Box::into_raw(Box::new(QsidResult { run, report_json }));
                QsidStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), format!("{} stage: {e}", e.stage())),
        }
    })
}

/// Report JSON owned by the result; valid until the result is freed.
/// Null when `result` is null.
///
/// # Safety
/// `result` must be null or a live handle from [`qsid_identify_files`].
#[no_mangle]
pub unsafe extern "C" fn qsid_result_report_json(result: *const QsidResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.report_json.as_ptr())
}

/// Headline motor model numbers.
///
/// # Safety
/// `result` must be null or a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn qsid_result_motor(result: *const QsidResult, out: *mut QsidMotorSummary) -> QsidStatus {
    guard(|| {
        let (Some(r), false) = (result.as_ref(), out.is_null()) else {
            return fail(QsidStatus::NullPointer, "result or out is null");
        };
        let m = &r.run.report.motor;
        *out = QsidMotorSummary {
            time_constant_s: m.time_constant_s,
            k: m.thrust_curve.mean(),
            fit_rmse_m_s2: m.fit_rmse_m_s2,
            boundary_hit: m.boundary_hit,
        };
        QsidStatus::Ok
    })
}

/// CSV for one plot series: `sweep`, `thrust_fit`, `angular_fit` or
/// `hover_hist`. Release `*out` with [`qsid_string_free`].
///
/// # Safety
/// `result` must be a live handle, `which` a NUL-terminated string and `out`
/// valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn qsid_result_plot_csv(result: *const QsidResult, which: *const c_char, out: *mut *mut c_char) -> QsidStatus {
    guard(|| {
        let (Some(r), false) = (result.as_ref(), out.is_null()) else {
            return fail(QsidStatus::NullPointer, "result or out is null");
        };
        *out = ptr::null_mut();
        let name = match read_str(which, "which") {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(kind) = PlotKind::parse(name) else {
            return fail(QsidStatus::InvalidArgument, format!("unknown plot kind `{name}`"));
        };
        match r.run.plots.export(kind) {
            Ok(csv) => {
                *out = into_c_string(csv);
                QsidStatus::Ok
            }
            Err(e) => fail(QsidStatus::SeriesUnavailable, e.to_string()),
        }
    })
}

/// Release a result handle. Null is ignored.
///
/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qsid_result_free(result: *mut QsidResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qsid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
