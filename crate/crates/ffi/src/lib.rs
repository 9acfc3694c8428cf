//! C interface to the meme-period scanner.
//!
//! Every fallible function returns [`MementumStatus`]: `OK` (0) on success, a
//! negative code on failure, with a human-readable message retrievable through
//! [`mementum_last_error`] on the calling thread. Panics never unwind across
//! the boundary; they are caught and reported as the `ERR_PANIC` status.
//!
//! Conventions shared by the whole surface:
//! - rank states are 1-based: state `s` means cointegration rank `s - 1`;
//! - day indices are 0-based positions in the shared trading calendar;
//! - calendar entries travel as days since 1970-01-01 (`int64_t`);
//! - matrices travel row-major, one row per day.

use std::cell::RefCell;
use std::ffi::CString;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use chrono::{Duration, NaiveDate};
use mementum::detector::{detect, DetectorConfig, MementumReport, PipelineOrder};
use mementum::regimes::summarize;
use mementum::sampler::{run_mcmc, McmcSettings, PriorSpec};
use mementum::vecm::RankPath;
use mementum::Error;
use nalgebra::DMatrix;

/// Result code of every fallible call. Zero is success; each failure class
/// has its own negative code.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MementumStatus {
    Ok = 0,
    /// Malformed record in an input file.
    ErrParse = -1,
    /// Input violates a domain rule (0 states, empty horizon, ...).
    ErrValidation = -2,
    /// Array or matrix dimensions do not fit together.
    ErrDim = -3,
    /// Numerical failure inside the sampler.
    ErrNumerical = -4,
    /// Invalid configuration value.
    ErrConfig = -5,
    /// I/O or serialization failure.
    ErrIo = -6,
    /// A required pointer argument was null.
    ErrNullPointer = -7,
    /// An internal invariant broke; the message holds the panic text.
    ErrPanic = -8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn fail(err: &Error) -> MementumStatus {
    set_error(&err.to_string());
    match err {
        Error::Parse { .. } => MementumStatus::ErrParse,
        Error::Validation(_) => MementumStatus::ErrValidation,
        Error::Dim(_) => MementumStatus::ErrDim,
        Error::Numerical(_) => MementumStatus::ErrNumerical,
        Error::Config(_) => MementumStatus::ErrConfig,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => MementumStatus::ErrIo,
    }
}

/// Run `body` with a panic trap so unwinding never crosses the C boundary.
fn guarded(body: impl FnOnce() -> MementumStatus) -> MementumStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            MementumStatus::ErrPanic
        }
    }
}

macro_rules! require {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            set_error(concat!($name, " must not be null"));
            return MementumStatus::ErrNullPointer;
        }
    };
}

fn unix_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

fn date_from_epoch_days(days: i64) -> Option<NaiveDate> {
    unix_epoch().checked_add_signed(Duration::days(days))
}

fn to_epoch_days(date: NaiveDate) -> i64 {
    (date - unix_epoch()).num_days()
}

/// Message of the most recent failure on the calling thread, NUL-terminated
/// UTF-8. Empty before the first failure; the pointer stays valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mementum_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mementum_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Opaque detection result. Created by [`mementum_detect`]; read through the
/// `mementum_report_*` accessors; released with [`mementum_report_free`].
pub struct MementumReportHandle {
    inner: MementumReport,
}

fn collect_states(raw: &[u8], name: &str) -> Result<Vec<usize>, Error> {
    raw.iter()
        .enumerate()
        .map(|(t, s)| {
            if *s == 0 {
                Err(Error::Validation(format!(
                    "{name}[{t}] is 0; rank states are 1-based"
                )))
            } else {
                Ok(*s as usize)
            }
        })
        .collect()
}

/// Run the two-pair period detection pipeline.
///
/// `pr_states` and `vol_states` hold the 1-based daily rank states of the
/// price and volume pairs over the same `t_len`-day calendar, given in
/// `epoch_days` as days since 1970-01-01 in strictly increasing order.
/// `d_c`/`d_p`/`d_f`/`d_w` are the minimum span duration, the clean run
/// required before a span, the maximum bridged fall, and the maximum start
/// distance for matching spans across the pairs, all in trading days
/// (defaults 2, 2, 1, 1). `filter_before_merge` flips the within-pair stage
/// order; `false` is the default order (bridge falls, then filter spans).
///
/// On success writes a heap-allocated report to `*out_report`; the caller
/// owns it and must release it with [`mementum_report_free`].
#[no_mangle]
pub unsafe extern "C" fn mementum_detect(
    pr_states: *const u8,
    vol_states: *const u8,
    t_len: usize,
    epoch_days: *const i64,
    d_c: usize,
    d_p: usize,
    d_f: usize,
    d_w: usize,
    filter_before_merge: bool,
    out_report: *mut *mut MementumReportHandle,
) -> MementumStatus {
    guarded(|| {
        require!(pr_states, "pr_states");
        require!(vol_states, "vol_states");
        require!(epoch_days, "epoch_days");
        require!(out_report, "out_report");
        if t_len == 0 {
            return fail(&Error::Validation("t_len must be positive".into()));
        }
        let (pr_raw, vol_raw, day_raw) = unsafe {
            (
                std::slice::from_raw_parts(pr_states, t_len),
                std::slice::from_raw_parts(vol_states, t_len),
                std::slice::from_raw_parts(epoch_days, t_len),
            )
        };
        let pr = match collect_states(pr_raw, "pr_states") {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        let vol = match collect_states(vol_raw, "vol_states") {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        let mut calendar = Vec::with_capacity(t_len);
        for (t, d) in day_raw.iter().enumerate() {
            let Some(date) = date_from_epoch_days(*d) else {
                return fail(&Error::Validation(format!(
                    "epoch_days[{t}] = {d} is outside the representable date range"
                )));
            };
            if t > 0 && date <= calendar[t - 1] {
                return fail(&Error::Validation(format!(
                    "epoch_days must be strictly increasing; day {t} is not"
                )));
            }
            calendar.push(date);
        }
        let order = if filter_before_merge {
            PipelineOrder::FilterThenMerge
        } else {
            PipelineOrder::MergeThenFilter
        };
        let cfg = DetectorConfig { d_c, d_p, d_f, d_w, order };
        match detect(&RankPath::new(pr), &RankPath::new(vol), &calendar, &cfg) {
            Ok(inner) => {
                unsafe { *out_report = Box::into_raw(Box::new(MementumReportHandle { inner })) };
                MementumStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

unsafe fn borrow_report<'a>(handle: *const MementumReportHandle) -> Option<&'a MementumReport> {
    unsafe { handle.as_ref() }.map(|h| &h.inner)
}

/// Number of calendar days covered by the report; 0 when `report` is null.
#[no_mangle]
pub unsafe extern "C" fn mementum_report_len(report: *const MementumReportHandle) -> usize {
    unsafe { borrow_report(report) }.map_or(0, |r| r.calendar.len())
}

/// Number of accepted periods; 0 when `report` is null.
#[no_mangle]
pub unsafe extern "C" fn mementum_report_n_periods(report: *const MementumReportHandle) -> usize {
    unsafe { borrow_report(report) }.map_or(0, |r| r.periods.len())
}

/// Inclusive day-index bounds of period `index`.
#[no_mangle]
pub unsafe extern "C" fn mementum_report_period(
    report: *const MementumReportHandle,
    index: usize,
    out_start_day: *mut usize,
    out_end_day: *mut usize,
) -> MementumStatus {
    guarded(|| {
        require!(report, "report");
        require!(out_start_day, "out_start_day");
        require!(out_end_day, "out_end_day");
        let rep = unsafe { borrow_report(report) }.unwrap();
        let Some((s, e)) = rep.periods.get(index) else {
            return fail(&Error::Validation(format!(
                "period index {index} out of range ({} periods)",
                rep.periods.len()
            )));
        };
        unsafe {
            *out_start_day = *s;
            *out_end_day = *e;
        }
        MementumStatus::Ok
    })
}

/// Inclusive calendar bounds of period `index`, as days since 1970-01-01.
#[no_mangle]
pub unsafe extern "C" fn mementum_report_period_dates(
    report: *const MementumReportHandle,
    index: usize,
    out_start: *mut i64,
    out_end: *mut i64,
) -> MementumStatus {
    guarded(|| {
        require!(report, "report");
        require!(out_start, "out_start");
        require!(out_end, "out_end");
        let rep = unsafe { borrow_report(report) }.unwrap();
        let Some((s, e)) = rep.periods.get(index) else {
            return fail(&Error::Validation(format!(
                "period index {index} out of range ({} periods)",
                rep.periods.len()
            )));
        };
        unsafe {
            *out_start = to_epoch_days(rep.calendar[*s]);
            *out_end = to_epoch_days(rep.calendar[*e]);
        }
        MementumStatus::Ok
    })
}

/// Copy the report calendar into `out_epoch_days` (`t_len` entries, days
/// since 1970-01-01).
#[no_mangle]
pub unsafe extern "C" fn mementum_report_calendar(
    report: *const MementumReportHandle,
    out_epoch_days: *mut i64,
) -> MementumStatus {
    guarded(|| {
        require!(report, "report");
        require!(out_epoch_days, "out_epoch_days");
        let rep = unsafe { borrow_report(report) }.unwrap();
        let out = unsafe { std::slice::from_raw_parts_mut(out_epoch_days, rep.calendar.len()) };
        for (slot, date) in out.iter_mut().zip(&rep.calendar) {
            *slot = to_epoch_days(*date);
        }
        MementumStatus::Ok
    })
}

/// Copy the per-day condition masks as 0/1 bytes. Each non-null output buffer
/// must hold `t_len` bytes; null buffers are skipped.
///
/// - `out_cond1`: both pairs cointegrated that day, after bridging;
/// - `out_cond2`: day inside the union of a start-matched span pair;
/// - `out_cond3`: both pairs inside spans surviving the duration and
///   persistence filters;
/// - `out_period`: day inside an accepted period.
#[no_mangle]
pub unsafe extern "C" fn mementum_report_masks(
    report: *const MementumReportHandle,
    out_cond1: *mut u8,
    out_cond2: *mut u8,
    out_cond3: *mut u8,
    out_period: *mut u8,
) -> MementumStatus {
    guarded(|| {
        require!(report, "report");
        let rep = unsafe { borrow_report(report) }.unwrap();
        let t = rep.calendar.len();
        let copy = |dst: *mut u8, src: &[bool]| {
            if !dst.is_null() {
                let out = unsafe { std::slice::from_raw_parts_mut(dst, t) };
                for (slot, flag) in out.iter_mut().zip(src) {
                    *slot = *flag as u8;
                }
            }
        };
        copy(out_cond1, &rep.cond1_mask);
        copy(out_cond2, &rep.cond2_mask);
        copy(out_cond3, &rep.cond3_mask);
        copy(out_period, &rep.mementum_mask());
        MementumStatus::Ok
    })
}

/// Release a report. Null is tolerated; the handle must not be used after.
#[no_mangle]
pub unsafe extern "C" fn mementum_report_free(report: *mut MementumReportHandle) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Prior hyperparameters of the rank sampler. Obtain defaults from
/// [`mementum_default_priors`] and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MementumPriors {
    /// Variance of each static coefficient; exactly 0 pins them to zero.
    pub v0: f64,
    /// Degrees of freedom of the inverse-Wishart prior on the noise
    /// covariance (identity scale).
    pub nu0: f64,
    /// Dirichlet weight on staying in the current rank state.
    pub a_stay: f64,
    /// Dirichlet weight on each move to a different state.
    pub a_move: f64,
    /// Inverse-gamma shape of the random-walk increment variances.
    pub w_shape: f64,
    /// Inverse-gamma rate of the random-walk increment variances.
    pub w_rate: f64,
    /// Variance of the factor paths' first point.
    pub tau0_sq: f64,
}

fn prior_spec(p: &MementumPriors) -> PriorSpec {
    PriorSpec {
        v0: p.v0,
        nu0: p.nu0,
        a_stay: p.a_stay,
        a_move: p.a_move,
        w_shape: p.w_shape,
        w_rate: p.w_rate,
        tau0_sq: p.tau0_sq,
    }
}

/// Default priors for an `n_series`-variable system.
#[no_mangle]
pub extern "C" fn mementum_default_priors(n_series: usize) -> MementumPriors {
    let p = PriorSpec::default_for(n_series);
    MementumPriors {
        v0: p.v0,
        nu0: p.nu0,
        a_stay: p.a_stay,
        a_move: p.a_move,
        w_shape: p.w_shape,
        w_rate: p.w_rate,
        tau0_sq: p.tau0_sq,
    }
}

/// Estimate the daily cointegration-rank posterior of one multivariate
/// series by Gibbs sampling. The call blocks until the chain finishes.
///
/// `y` is row-major `t_len x n_series`, one row per day, in log levels.
/// `priors` may be null to use [`mementum_default_priors`]. The sampler runs
/// `n_burnin + n_draws` sweeps seeded by `seed` and keeps every `thin`-th
/// draw after burn-in.
///
/// `out_map_states` (required, `t_len` bytes) receives the pointwise
/// posterior-mode state per day, 1-based, ties resolved toward the lower
/// state. `out_probs` (optional, row-major `t_len x (n_series + 1)`)
/// receives the posterior probability of each state per day.
#[no_mangle]
pub unsafe extern "C" fn mementum_estimate_ranks(
    y: *const f64,
    t_len: usize,
    n_series: usize,
    priors: *const MementumPriors,
    n_draws: usize,
    n_burnin: usize,
    thin: usize,
    seed: u64,
    out_map_states: *mut u8,
    out_probs: *mut f64,
) -> MementumStatus {
    guarded(|| {
        require!(y, "y");
        require!(out_map_states, "out_map_states");
        let Some(len) = t_len.checked_mul(n_series) else {
            return fail(&Error::Dim("t_len * n_series overflows".into()));
        };
        if len == 0 {
            return fail(&Error::Dim("t_len and n_series must be positive".into()));
        }
        let data = unsafe { std::slice::from_raw_parts(y, len) };
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return fail(&Error::Validation(format!(
                "y contains a non-finite value at flat index {pos}"
            )));
        }
        let ymat = DMatrix::from_row_slice(t_len, n_series, data);
        let spec = if priors.is_null() {
            PriorSpec::default_for(n_series)
        } else {
            prior_spec(unsafe { &*priors })
        };
        let settings = McmcSettings { n_draws, n_burnin, thin, seed };
        let draws = match run_mcmc(&ymat, &spec, &settings) {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        let n_states = n_series + 1;
        let post = match summarize(&draws.states, n_states) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let map_out = unsafe { std::slice::from_raw_parts_mut(out_map_states, t_len) };
        for (slot, state) in map_out.iter_mut().zip(&post.map_path) {
            *slot = *state as u8;
        }
        if !out_probs.is_null() {
            let probs = unsafe { std::slice::from_raw_parts_mut(out_probs, t_len * n_states) };
            for t in 0..t_len {
                for s in 0..n_states {
                    probs[t * n_states + s] = post.probs[(t, s)];
                }
            }
        }
        MementumStatus::Ok
    })
}
