//! C ABI over `covdetect`.
//!
//! Every fallible function returns a [`CdStatus`]. On failure a message is
//! stored per thread and can be read with [`cd_last_error_message`].
//! Handles are opaque; each `*_new` has a matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use covdetect::cli::{run_experiment, RunOptions};
use covdetect::config::{parse_config, ExperimentConfig};
use covdetect::detectors::CusumState;
use covdetect::error::Error;
use covdetect::harness::{sweep_tradeoff, DetectorSpec, Experiment, SweepConfig};
use covdetect::hermitian::C64;
use covdetect::likelihood::{ld_divergence, llr};
use covdetect::onering::{ChangePoint, ChannelSample, LinkBudget, OneRingParams, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Config = 4,
    Censored = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> CdStatus {
    match e {
        Error::DimensionMismatch { .. }
        | Error::NotSquare { .. }
        | Error::EmptyMatrix
        | Error::EmptyWindow
        | Error::InvalidParameter { .. }
        | Error::StreamLength { .. } => CdStatus::InvalidArgument,
        Error::NotHermitian { .. }
        | Error::NotPositiveDefinite
        | Error::EigenConvergence
        | Error::NegativeEigenvalue { .. }
        | Error::Quadrature { .. } => CdStatus::Numerical,
        Error::AllCensored { .. } | Error::EmptyConditioning { .. } => CdStatus::Censored,
        Error::ConfigParse { .. } | Error::ConfigValue { .. } | Error::UnknownPreset(_) => CdStatus::Config,
        Error::Io(_) => CdStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (CdStatus, String)>) -> CdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CdStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdStatus::Panic
        }
    }
}

fn lib(e: Error) -> (CdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CdStatus, String) {
    (CdStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CdStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (CdStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (CdStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CdStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated) and returns its length without the terminator, or 0 when
/// there is no error. Pass a null `buf` to query the length.
#[no_mangle]
pub unsafe extern "C" fn cd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cd_status_name(status: CdStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        CdStatus::Ok => b"ok\0",
        CdStatus::NullPointer => b"null pointer\0",
        CdStatus::InvalidArgument => b"invalid argument\0",
        CdStatus::Numerical => b"numerical failure\0",
        CdStatus::Config => b"configuration error\0",
        CdStatus::Censored => b"all runs censored\0",
        CdStatus::Io => b"i/o error\0",
        CdStatus::BufferTooSmall => b"buffer too small\0",
        CdStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// One-ring array geometry plus link budget.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CdScenarioParams {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub aod_deg: f64,
    pub spread_deg: f64,
    pub wavelength_m: f64,
    /// 0 selects the default.
    pub quadrature_nodes: usize,
    pub delta_aod_deg: f64,
    pub tx_power_dbm: f64,
    pub distance_km: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub pilot_len: usize,
}

/// Pre- and post-change channel laws for one angle shift.
pub struct CdExperiment {
    inner: Experiment,
}

/// Known-covariance CUSUM fed one estimated channel at a time.
pub struct CdCusum {
    exp: Experiment,
    state: CusumState,
}

/// Parsed and validated experiment configuration.
pub struct CdConfig {
    inner: ExperimentConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CdTradeoffPoint {
    pub theta: f64,
    pub far: f64,
    pub neg_log_far: f64,
    pub far_stderr: f64,
    pub cadd: f64,
    pub cadd_stderr: f64,
    pub censored: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CdSweepParams {
    pub trials_far: usize,
    pub trials_delay: usize,
    pub max_run_length: usize,
    pub seed: u64,
    /// 0 uses every core. Results do not depend on it.
    pub workers: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CdCusumStep {
    pub statistic: f64,
    /// 1-based interval where the maximizing window starts.
    pub candidate: usize,
    pub interval: usize,
}

fn scenario(p: &CdScenarioParams) -> Scenario {
    Scenario {
        params_pre: OneRingParams {
            tx_antennas: p.tx_antennas,
            rx_antennas: p.rx_antennas,
            aod_deg: p.aod_deg,
            spread_deg: p.spread_deg,
            wavelength_m: p.wavelength_m,
            quadrature_nodes: if p.quadrature_nodes == 0 {
                covdetect::onering::DEFAULT_QUADRATURE_NODES
            } else {
                p.quadrature_nodes
            },
        },
        delta_aod_deg: p.delta_aod_deg,
        link: LinkBudget {
            tx_power_dbm: p.tx_power_dbm,
            distance_km: p.distance_km,
            bandwidth_hz: p.bandwidth_hz,
            noise_psd_dbm_hz: p.noise_psd_dbm_hz,
            pilot_len: p.pilot_len,
        },
        change_point: ChangePoint::At(1),
        horizon: 1,
        seed: 0,
    }
}

/// Builds the channel laws described by `params`.
#[no_mangle]
pub unsafe extern "C" fn cd_experiment_new(params: *const CdScenarioParams, out: *mut *mut CdExperiment) -> CdStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let p = as_ref(params, "params")?;
        let inner = Experiment::from_scenario(&scenario(p), "ffi").map_err(lib)?;
        *out = Box::into_raw(Box::new(CdExperiment { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cd_experiment_free(exp: *mut CdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Channel dimension `tx_antennas · rx_antennas`; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cd_experiment_dim(exp: *const CdExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.inner.model.pre.dim())
}

/// Log-determinant divergence of the post-change law from the pre-change law.
#[no_mangle]
pub unsafe extern "C" fn cd_experiment_divergence(exp: *const CdExperiment, out: *mut f64) -> CdStatus {
    guard(|| {
        let e = &as_ref(exp, "exp")?.inner;
        let out = as_mut(out, "out")?;
        *out = ld_divergence(&e.model.post, &e.model.pre).map_err(lib)?;
        Ok(())
    })
}

/// Known-covariance CUSUM threshold sweep. `points` must hold `n_thetas`
/// entries; `thetas` must be strictly increasing. Returns `Censored`, with
/// `points` still filled, when some threshold had every run censored.
#[no_mangle]
pub unsafe extern "C" fn cd_sweep_cusum(
    exp: *const CdExperiment,
    params: *const CdSweepParams,
    thetas: *const f64,
    n_thetas: usize,
    points: *mut CdTradeoffPoint,
) -> CdStatus {
    guard(|| {
        let e = &as_ref(exp, "exp")?.inner;
        let p = as_ref(params, "params")?;
        let thetas = slice(thetas, n_thetas, "thetas")?;
        if n_thetas > 0 && points.is_null() {
            return Err(null("points"));
        }
        let cfg = SweepConfig {
            thetas: thetas.to_vec(),
            trials_far: p.trials_far,
            trials_delay: p.trials_delay,
            max_run_length: p.max_run_length,
            nu_grid: covdetect::harness::DEFAULT_NU_GRID.to_vec(),
            seed: p.seed,
            workers: p.workers,
        };
        let result = sweep_tradeoff(&DetectorSpec::Cusum, e, &cfg).map_err(lib)?;
        for (k, r) in result.iter().enumerate() {
            *points.add(k) = CdTradeoffPoint {
                theta: r.theta,
                far: r.far,
                neg_log_far: r.neg_log_far,
                far_stderr: r.far_stderr,
                cadd: r.cadd,
                cadd_stderr: r.cadd_stderr,
                censored: r.censored,
            };
        }
        if let Some(r) = result.iter().find(|r| r.all_censored()) {
            return Err((
                CdStatus::Censored,
                format!("every false-alarm run was censored at threshold {}", r.theta),
            ));
        }
        Ok(())
    })
}

/// Starts a CUSUM detector using the laws of `exp` (copied).
#[no_mangle]
pub unsafe extern "C" fn cd_cusum_new(exp: *const CdExperiment, out: *mut *mut CdCusum) -> CdStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let e = as_ref(exp, "exp")?;
        *out = Box::into_raw(Box::new(CdCusum {
            exp: e.inner.clone(),
            state: CusumState::new(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cd_cusum_free(det: *mut CdCusum) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Feeds one estimated channel given as `2·dim` interleaved real and
/// imaginary parts.
#[no_mangle]
pub unsafe extern "C" fn cd_cusum_push(
    det: *mut CdCusum,
    channel: *const f64,
    len: usize,
    out: *mut CdCusumStep,
) -> CdStatus {
    guard(|| {
        let det = as_mut(det, "det")?;
        let out = as_mut(out, "out")?;
        let dim = det.exp.model.pre.dim();
        if len != 2 * dim {
            return Err((
                CdStatus::InvalidArgument,
                format!("channel has {len} values, expected {}", 2 * dim),
            ));
        }
        let raw = slice(channel, len, "channel")?;
        let h = ChannelSample(raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect());
        let l = llr(&h, &det.exp.model.pre, &det.exp.model.post).map_err(lib)?;
        det.state = det.state.step(l);
        *out = CdCusumStep {
            statistic: det.state.w(),
            candidate: det.state.candidate(),
            interval: det.state.j(),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cd_cusum_reset(det: *mut CdCusum) -> CdStatus {
    guard(|| {
        as_mut(det, "det")?.state = CusumState::new();
        Ok(())
    })
}

/// Parses a configuration document.
#[no_mangle]
pub unsafe extern "C" fn cd_config_parse(text: *const c_char, out: *mut *mut CdConfig) -> CdStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let inner = parse_config(string(text, "text")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(CdConfig { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cd_config_free(cfg: *mut CdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Writes the normalized configuration into `buf`. `written` receives the
/// length without the NUL terminator; `BufferTooSmall` is returned when it
/// does not fit.
#[no_mangle]
pub unsafe extern "C" fn cd_config_to_toml(
    cfg: *const CdConfig,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> CdStatus {
    guard(|| {
        let text = as_ref(cfg, "cfg")?.inner.to_toml();
        let written = as_mut(written, "written")?;
        *written = text.len();
        if buf.is_null() || len <= text.len() {
            return Err((CdStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1)));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Runs the configured task, writing artifacts to `output_dir`. `success`
/// is 0 when a sweep point had every run censored or a divergence check
/// failed.
#[no_mangle]
pub unsafe extern "C" fn cd_config_run(
    cfg: *const CdConfig,
    output_dir: *const c_char,
    workers: usize,
    success: *mut i32,
) -> CdStatus {
    guard(|| {
        let cfg = &as_ref(cfg, "cfg")?.inner;
        let success = as_mut(success, "success")?;
        let opts = RunOptions {
            workers,
            output_dir: PathBuf::from(string(output_dir, "output_dir")?),
            trace: false,
        };
        let report = run_experiment(cfg, &opts).map_err(lib)?;
        *success = i32::from(report.success());
        Ok(())
    })
}
