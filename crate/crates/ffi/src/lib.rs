//! C ABI over the evaluation harness.
//!
//! Every function returns a [`RetrainStatus`] and writes results through
//! out-pointers. On failure the message is available from
//! [`retrain_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary; they surface as `RETRAIN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use retrain_core::backtest::{make_schedule, ScenarioConfig};
use retrain_core::cli::RunConfig;
use retrain_core::cost::estimate_cost;
use retrain_core::error::HarnessError;
use retrain_core::metrics::{rmsse, sql};
use retrain_core::panel::{load_panel, Frequency, Schema, SeriesPanel};
use retrain_core::stats::{friedman, nemenyi_cd, RankMatrix};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrainStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Arguments were well-formed but rejected by validation.
    InvalidArgument = 2,
    /// The value is undefined for this input (zero benchmark scale).
    Excluded = 3,
    /// The run configuration is invalid.
    Config = 4,
    Io = 5,
    /// Any other pipeline failure, including a run where every scenario failed.
    Pipeline = 6,
    Panic = 7,
}

/// Sampling frequency of a panel.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrainFrequency {
    Daily = 0,
    Weekly = 1,
}

impl From<RetrainFrequency> for Frequency {
    fn from(f: RetrainFrequency) -> Self {
        match f {
            RetrainFrequency::Daily => Frequency::Daily,
            RetrainFrequency::Weekly => Frequency::Weekly,
        }
    }
}

/// Opaque loaded panel. Release with [`retrain_panel_free`].
pub struct RetrainPanel {
    inner: SeriesPanel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &HarnessError) -> RetrainStatus {
    match err {
        HarnessError::Config { .. } | HarnessError::UnsupportedAlpha(_) | HarnessError::AsymmetricLevels(_) => {
            RetrainStatus::Config
        }
        HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::Json(_) => RetrainStatus::Io,
        HarnessError::InvalidRankMatrix(_) | HarnessError::Misaligned(_) => RetrainStatus::InvalidArgument,
        _ => RetrainStatus::Pipeline,
    }
}

struct Failure(RetrainStatus, String);

impl From<HarnessError> for Failure {
    fn from(err: HarnessError) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(RetrainStatus::NullArgument, format!("`{name}` is null"))
}

/// Argument validation failures from pure functions.
fn rejected(err: HarnessError) -> Failure {
    invalid(err.to_string())
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(RetrainStatus::InvalidArgument, message.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RetrainStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RetrainStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            RetrainStatus::Panic
        }
    }
}

/// `len` elements at `data`; a null pointer is accepted only when `len == 0`.
unsafe fn view<'a>(data: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn out<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(name))
}

unsafe fn path_arg(ptr: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    let text = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))?;
    Ok(PathBuf::from(text))
}

/// Message of the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn retrain_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Root mean squared scaled error of `horizon` forecasts against the
/// seasonal-naive in-sample scale with period `season`.
/// Returns `RETRAIN_STATUS_EXCLUDED` when the scale is zero.
///
/// # Safety
/// `actuals` and `forecasts` must hold `horizon` values, `insample` must hold
/// `insample_len` values, and `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn retrain_rmsse(
    actuals: *const f64,
    forecasts: *const f64,
    horizon: usize,
    insample: *const f64,
    insample_len: usize,
    season: usize,
    out_value: *mut f64,
) -> RetrainStatus {
    guard(|| {
        let a = view(actuals, horizon, "actuals")?;
        let f = view(forecasts, horizon, "forecasts")?;
        let x = view(insample, insample_len, "insample")?;
        let slot = out(out_value, "out_value")?;
        match rmsse(a, f, x, season)? {
            Some(v) => {
                *slot = v;
                Ok(())
            }
            None => Err(Failure(RetrainStatus::Excluded, "zero benchmark scale".into())),
        }
    })
}

/// Scaled quantile loss of `horizon` quantile forecasts at `level`.
/// Returns `RETRAIN_STATUS_EXCLUDED` when the scale is zero.
///
/// # Safety
/// Same layout requirements as [`retrain_rmsse`].
#[no_mangle]
pub unsafe extern "C" fn retrain_sql(
    actuals: *const f64,
    quantiles: *const f64,
    horizon: usize,
    level: f64,
    insample: *const f64,
    insample_len: usize,
    season: usize,
    out_value: *mut f64,
) -> RetrainStatus {
    guard(|| {
        let a = view(actuals, horizon, "actuals")?;
        let q = view(quantiles, horizon, "quantiles")?;
        let x = view(insample, insample_len, "insample")?;
        let slot = out(out_value, "out_value")?;
        match sql(a, q, level, x, season)? {
            Some(v) => {
                *slot = v;
                Ok(())
            }
            None => Err(Failure(RetrainStatus::Excluded, "zero benchmark scale".into())),
        }
    })
}

/// Origin and model-fit counts of a rolling-origin schedule.
///
/// # Safety
/// `out_origins` and `out_fits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn retrain_schedule_counts(
    test_len: usize,
    horizon: usize,
    step: usize,
    retrain: usize,
    out_origins: *mut usize,
    out_fits: *mut usize,
) -> RetrainStatus {
    guard(|| {
        let origins = out(out_origins, "out_origins")?;
        let fits = out(out_fits, "out_fits")?;
        let schedule = make_schedule(&ScenarioConfig {
            horizon,
            step,
            test_len,
            retrain,
            frequency: Frequency::Daily,
            s_point: 1,
            s_prob: 1,
        })
        .map_err(rejected)?;
        *origins = schedule.len();
        *fits = schedule.fit_count();
        Ok(())
    })
}

/// Monetary cost of `ct_seconds` at `rate_per_hour`, scaled from
/// `dataset_series` to `target_series`.
///
/// # Safety
/// `out_cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn retrain_estimate_cost(
    ct_seconds: f64,
    rate_per_hour: f64,
    dataset_series: usize,
    target_series: f64,
    out_cost: *mut f64,
) -> RetrainStatus {
    guard(|| {
        let slot = out(out_cost, "out_cost")?;
        let model = retrain_core::cost::CostModel {
            rate_per_hour,
            dataset_series,
            target_series,
        };
        model.validate().map_err(rejected)?;
        if !(ct_seconds.is_finite() && ct_seconds >= 0.0) {
            return Err(invalid(format!(
                "ct_seconds must be finite and non-negative, got {ct_seconds}"
            )));
        }
        *slot = estimate_cost(ct_seconds, rate_per_hour, dataset_series, target_series);
        Ok(())
    })
}

/// Friedman test over a row-major `blocks x treatments` matrix where
/// lower values are better. `out_mean_ranks` receives `treatments` values.
///
/// # Safety
/// `values` must hold `blocks * treatments` values and `out_mean_ranks`
/// must have room for `treatments` values.
#[no_mangle]
pub unsafe extern "C" fn retrain_friedman(
    values: *const f64,
    blocks: usize,
    treatments: usize,
    out_statistic: *mut f64,
    out_p_value: *mut f64,
    out_mean_ranks: *mut f64,
) -> RetrainStatus {
    guard(|| {
        let cells = blocks
            .checked_mul(treatments)
            .ok_or_else(|| invalid("matrix size overflows"))?;
        let data = view(values, cells, "values")?;
        let statistic = out(out_statistic, "out_statistic")?;
        let p_value = out(out_p_value, "out_p_value")?;
        if out_mean_ranks.is_null() {
            return Err(null("out_mean_ranks"));
        }
        let rows = if treatments == 0 {
            Vec::new()
        } else {
            data.chunks(treatments).map(<[f64]>::to_vec).collect()
        };
        let labels = (0..treatments).map(|j| j.to_string()).collect();
        let result = friedman(&RankMatrix::new(labels, rows)?);
        *statistic = result.statistic;
        *p_value = result.p_value;
        slice::from_raw_parts_mut(out_mean_ranks, treatments).copy_from_slice(&result.mean_ranks);
        Ok(())
    })
}

/// Nemenyi critical difference for `treatments` compared over `blocks`.
/// `alpha` must be 0.05 or 0.10.
///
/// # Safety
/// `out_cd` must be writable.
#[no_mangle]
pub unsafe extern "C" fn retrain_nemenyi_cd(
    treatments: usize,
    blocks: usize,
    alpha: f64,
    out_cd: *mut f64,
) -> RetrainStatus {
    guard(|| {
        let slot = out(out_cd, "out_cd")?;
        *slot = nemenyi_cd(treatments, blocks, alpha).map_err(rejected)?;
        Ok(())
    })
}

/// Loads a long-format CSV panel with columns `unique_id`, `ds`, `y`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_panel` writable. On
/// success `*out_panel` owns a handle to release with [`retrain_panel_free`].
#[no_mangle]
pub unsafe extern "C" fn retrain_panel_load_csv(
    path: *const c_char,
    frequency: RetrainFrequency,
    out_panel: *mut *mut RetrainPanel,
) -> RetrainStatus {
    guard(|| {
        let slot = out(out_panel, "out_panel")?;
        *slot = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let file = File::open(&path).map_err(HarnessError::from)?;
        let inner = load_panel(file, &Schema::default(), frequency.into())?;
        *slot = Box::into_raw(Box::new(RetrainPanel { inner }));
        Ok(())
    })
}

/// Number of series in the panel.
///
/// # Safety
/// `panel` must come from [`retrain_panel_load_csv`] and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn retrain_panel_series_count(
    panel: *const RetrainPanel,
    out_count: *mut usize,
) -> RetrainStatus {
    guard(|| {
        let panel = panel.as_ref().ok_or_else(|| null("panel"))?;
        *out(out_count, "out_count")? = panel.inner.len();
        Ok(())
    })
}

/// Length of the shortest series in the panel.
///
/// # Safety
/// Same as [`retrain_panel_series_count`].
#[no_mangle]
pub unsafe extern "C" fn retrain_panel_min_length(panel: *const RetrainPanel, out_len: *mut usize) -> RetrainStatus {
    guard(|| {
        let panel = panel.as_ref().ok_or_else(|| null("panel"))?;
        *out(out_len, "out_len")? = panel.inner.min_len();
        Ok(())
    })
}

/// Releases a panel handle. Null is a no-op.
///
/// # Safety
/// `panel` must come from [`retrain_panel_load_csv`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn retrain_panel_free(panel: *mut RetrainPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Runs the TOML configuration at `config_path`, writing artifacts to
/// `out_dir` when non-null and to the configured directory otherwise.
/// `out_exit_code` receives the command-line exit code (0, 1 or 2).
///
/// # Safety
/// `config_path` must be a NUL-terminated string, `out_dir` null or
/// NUL-terminated, and `out_exit_code` writable.
#[no_mangle]
pub unsafe extern "C" fn retrain_run_config(
    config_path: *const c_char,
    out_dir: *const c_char,
    out_exit_code: *mut i32,
) -> RetrainStatus {
    guard(|| {
        let code = out(out_exit_code, "out_exit_code")?;
        let config = path_arg(config_path, "config_path")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(path_arg(out_dir, "out_dir")?)
        };
        let (exit, outcome) = retrain_core::cli::run(&config, dir);
        *code = exit;
        match outcome {
            Ok(_) => Ok(()),
            Err(summary) => {
                let status = match summary.kind {
                    "config" => RetrainStatus::Config,
                    "io" => RetrainStatus::Io,
                    _ => RetrainStatus::Pipeline,
                };
                Err(Failure(status, summary.message))
            }
        }
    })
}

/// Validates a TOML configuration without running it.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn retrain_check_config(config_path: *const c_char) -> RetrainStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        RunConfig::load(&path)?;
        Ok(())
    })
}
