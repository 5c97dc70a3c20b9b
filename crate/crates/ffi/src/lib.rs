//! C ABI for the srploc localization engine.
//!
//! Conventions:
//! - Every fallible call returns a [`SrplocStatus`]; `SRPLOC_STATUS_OK` is 0.
//! - On failure a thread-local message is set; fetch it with
//!   [`srploc_last_error_message`]. The pointer stays valid until the next
//!   failing call on the same thread.
//! - `SrplocLocator` is an opaque handle created by the `srploc_locator_new*`
//!   constructors and released with [`srploc_locator_free`].
//! - Multichannel audio crosses the boundary as interleaved `double` frames
//!   (frame-major: sample `s` of channel `c` at index `s * n_channels + c`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use srploc::pipeline::{self, Locator, PipelineError, RunConfig};
use srploc::stft::SignalBlock;

/// Result of every fallible call in this API.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SrplocStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A parameter value is out of range or unparsable.
    InvalidArgument = 2,
    /// Geometry file or microphone layout rejected.
    GeometryError = 3,
    /// Audio file unreadable or incompatible.
    AudioError = 4,
    /// Any other failure, including internal panics.
    RuntimeError = 5,
}

/// Search parameters. Zero-initialize and call [`srploc_config_default`]
/// first, then override fields as needed.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct SrplocConfig {
    /// Analysis block length in milliseconds.
    pub block_ms: u32,
    /// Hop between blocks in milliseconds.
    pub hop_ms: u32,
    /// STFT frame length in samples (50% overlap).
    pub n_fft: u32,
    /// Processing sample rate in Hz; inputs must already be at this rate for
    /// the block API (file loading decimates automatically).
    pub sample_rate: u32,
    /// DOA grid resolution in degrees.
    pub grid_res_deg: f64,
    /// Per-pair AOA axis resolution in degrees.
    pub aoa_res_deg: f64,
    /// Pairs closer than this (degrees, seen from the array center) are
    /// dropped; 0 keeps every pair.
    pub min_pair_angle_deg: f64,
    /// Speed of sound in m/s.
    pub speed_of_sound: f64,
    /// Optional band limit in Hz; ignored unless `band_high_hz > band_low_hz`.
    pub band_low_hz: f64,
    pub band_high_hz: f64,
}

/// One DOA estimate.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct SrplocEstimate {
    pub time_s: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Pooled angular-spectrum value at the peak.
    pub score: f64,
}

/// Counters reported by [`srploc_locate_file`].
#[repr(C)]
#[derive(Clone, Copy)]
pub struct SrplocLocateSummary {
    pub n_mics: usize,
    pub n_pairs: usize,
    pub n_blocks: usize,
    pub n_estimates: usize,
    pub low_score_blocks: usize,
}

/// Opaque localization engine for one geometry and parameter set.
pub struct SrplocLocator {
    inner: Locator,
    n_channels: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl AsRef<str>) {
    let sanitized = message.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &PipelineError) -> SrplocStatus {
    match err {
        PipelineError::Geometry(_) | PipelineError::GeometryFile { .. } => {
            SrplocStatus::GeometryError
        }
        PipelineError::Audio(_) => SrplocStatus::AudioError,
        PipelineError::BadConfig(_) | PipelineError::Axis(_) | PipelineError::Srp(_) => {
            SrplocStatus::InvalidArgument
        }
        PipelineError::Signal(_) => SrplocStatus::InvalidArgument,
        _ => SrplocStatus::RuntimeError,
    }
}

fn fail(err: &PipelineError) -> SrplocStatus {
    set_error(err.to_string());
    status_for(err)
}

fn guarded(f: impl FnOnce() -> SrplocStatus) -> SrplocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            SrplocStatus::RuntimeError
        }
    }
}

fn run_config_from(config: &SrplocConfig, pooling: *const c_char) -> Result<RunConfig, SrplocStatus> {
    let mut run = RunConfig::new("", "", "");
    run.block_ms = config.block_ms;
    run.hop_ms = config.hop_ms;
    run.n_fft = config.n_fft as usize;
    run.target_fs = config.sample_rate;
    run.grid_res_deg = config.grid_res_deg;
    run.aoa_res_deg = config.aoa_res_deg;
    run.min_pair_angle_deg = config.min_pair_angle_deg;
    run.speed_of_sound = config.speed_of_sound;
    if config.band_high_hz > config.band_low_hz {
        run.band_hz = Some((config.band_low_hz, config.band_high_hz));
    }
    if !pooling.is_null() {
        let text = unsafe { CStr::from_ptr(pooling) }.to_string_lossy();
        run.pooling = text.parse().map_err(|e: srploc::srp::SrpError| {
            set_error(e.to_string());
            SrplocStatus::InvalidArgument
        })?;
    }
    Ok(run)
}

unsafe fn path_from(ptr: *const c_char) -> Result<String, SrplocStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(SrplocStatus::NullArgument);
    }
    Ok(CStr::from_ptr(ptr).to_string_lossy().into_owned())
}

/// Fills `config` with the library defaults (512 ms blocks, 256 ms hop,
/// 1024-point frames at 16 kHz, 1 degree grid, 5 degree AOA axis, all pairs,
/// 343 m/s, no band limit).
///
/// # Safety
/// `config` must be null or point to writable memory for one `SrplocConfig`.
#[no_mangle]
pub unsafe extern "C" fn srploc_config_default(config: *mut SrplocConfig) {
    if config.is_null() {
        return;
    }
    let defaults = RunConfig::new("", "", "");
    unsafe {
        *config = SrplocConfig {
            block_ms: defaults.block_ms,
            hop_ms: defaults.hop_ms,
            n_fft: defaults.n_fft as u32,
            sample_rate: defaults.target_fs,
            grid_res_deg: defaults.grid_res_deg,
            aoa_res_deg: defaults.aoa_res_deg,
            min_pair_angle_deg: defaults.min_pair_angle_deg,
            speed_of_sound: defaults.speed_of_sound,
            band_low_hz: 0.0,
            band_high_hz: 0.0,
        };
    }
}

/// Creates a locator from raw microphone positions: `mic_xyz` holds
/// `n_mics * 3` doubles, laid out x0, y0, z0, x1, ...
/// `pooling` is an optional spec string like `"sum,sum,max"`; pass null for
/// the default. On success writes the handle to `out`.
///
/// # Safety
/// `mic_xyz` must point to `n_mics * 3` readable doubles; `config` and `out`
/// must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_new(
    mic_xyz: *const f64,
    n_mics: usize,
    config: *const SrplocConfig,
    pooling: *const c_char,
    out: *mut *mut SrplocLocator,
) -> SrplocStatus {
    guarded(|| {
        if mic_xyz.is_null() || config.is_null() || out.is_null() {
            set_error("null argument to srploc_locator_new");
            return SrplocStatus::NullArgument;
        }
        let coords = std::slice::from_raw_parts(mic_xyz, n_mics * 3);
        let mics: Vec<srploc::Vec3> = coords
            .chunks_exact(3)
            .map(|c| srploc::Vec3::new(c[0], c[1], c[2]))
            .collect();
        let geometry = match srploc::ArrayGeometry::new(mics) {
            Ok(g) => g,
            Err(e) => {
                set_error(e.to_string());
                return SrplocStatus::GeometryError;
            }
        };
        let run = match run_config_from(&*config, pooling) {
            Ok(r) => r,
            Err(status) => return status,
        };
        match Locator::new(&geometry, &run) {
            Ok(inner) => {
                let n_channels = inner.n_mics();
                *out = Box::into_raw(Box::new(SrplocLocator { inner, n_channels }));
                SrplocStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Creates a locator from a geometry config file (TOML schema documented in
/// the srploc README).
///
/// # Safety
/// `geometry_path`, `config` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_new_from_file(
    geometry_path: *const c_char,
    config: *const SrplocConfig,
    pooling: *const c_char,
    out: *mut *mut SrplocLocator,
) -> SrplocStatus {
    guarded(|| {
        if config.is_null() || out.is_null() {
            set_error("null argument to srploc_locator_new_from_file");
            return SrplocStatus::NullArgument;
        }
        let path = match path_from(geometry_path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let named = match pipeline::read_geometry(Path::new(&path)) {
            Ok(n) => n,
            Err(e) => return fail(&e),
        };
        let run = match run_config_from(&*config, pooling) {
            Ok(r) => r,
            Err(status) => return status,
        };
        match Locator::new(&named.geometry, &run) {
            Ok(inner) => {
                let n_channels = inner.n_mics();
                *out = Box::into_raw(Box::new(SrplocLocator { inner, n_channels }));
                SrplocStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of microphone channels the locator expects per frame.
///
/// # Safety
/// `locator` must be null or a live handle from `srploc_locator_new*`.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_channels(locator: *const SrplocLocator) -> usize {
    if locator.is_null() {
        return 0;
    }
    unsafe { (*locator).n_channels }
}

/// Number of microphone pairs in use (after any curvilinear filtering).
///
/// # Safety
/// `locator` must be null or a live handle from `srploc_locator_new*`.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_pairs(locator: *const SrplocLocator) -> usize {
    if locator.is_null() {
        return 0;
    }
    unsafe { (*locator).inner.n_pairs() }
}

/// Nominal samples per analysis block at the configured sample rate.
///
/// # Safety
/// `locator` must be null or a live handle from `srploc_locator_new*`.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_block_samples(locator: *const SrplocLocator) -> usize {
    if locator.is_null() {
        return 0;
    }
    unsafe { (*locator).inner.block_samples() }
}

/// Localizes one block of interleaved audio at the configured sample rate.
/// `n_frames` must be at least the STFT length; the estimate is stamped
/// `start_time_s + n_frames / (2 * sample_rate)`.
///
/// # Safety
/// `interleaved` must point to `n_frames * srploc_locator_channels()`
/// readable doubles; `locator` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_process_block(
    locator: *const SrplocLocator,
    interleaved: *const f64,
    n_frames: usize,
    start_time_s: f64,
    out: *mut SrplocEstimate,
) -> SrplocStatus {
    guarded(|| {
        if locator.is_null() || interleaved.is_null() || out.is_null() {
            set_error("null argument to srploc_locator_process_block");
            return SrplocStatus::NullArgument;
        }
        let handle = &*locator;
        let n_ch = handle.n_channels;
        let data = std::slice::from_raw_parts(interleaved, n_frames * n_ch);
        let mut channels = vec![Vec::with_capacity(n_frames); n_ch];
        for (i, &v) in data.iter().enumerate() {
            channels[i % n_ch].push(v);
        }
        let block = match SignalBlock::new(
            channels,
            handle.inner.target_fs() as f64,
            start_time_s,
        ) {
            Ok(b) => b,
            Err(e) => {
                set_error(e.to_string());
                return SrplocStatus::InvalidArgument;
            }
        };
        match handle.inner.process_block(&block) {
            Ok(estimate) => {
                *out = SrplocEstimate {
                    time_s: estimate.time_s,
                    azimuth_deg: estimate.azimuth_deg,
                    elevation_deg: estimate.elevation_deg,
                    score: estimate.score,
                };
                SrplocStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// One-shot batch localization: reads a geometry file and a WAV file, writes
/// the estimate CSV, optionally reports counters into `summary`.
///
/// # Safety
/// Path pointers and `config` must be valid; `summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn srploc_locate_file(
    geometry_path: *const c_char,
    wav_path: *const c_char,
    csv_out_path: *const c_char,
    config: *const SrplocConfig,
    pooling: *const c_char,
    summary: *mut SrplocLocateSummary,
) -> SrplocStatus {
    guarded(|| {
        if config.is_null() {
            set_error("null config");
            return SrplocStatus::NullArgument;
        }
        let (geometry, wav, csv) = match (
            path_from(geometry_path),
            path_from(wav_path),
            path_from(csv_out_path),
        ) {
            (Ok(g), Ok(w), Ok(c)) => (g, w, c),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let mut run = match run_config_from(&*config, pooling) {
            Ok(r) => r,
            Err(status) => return status,
        };
        run.geometry_path = geometry.into();
        run.input_path = wav.into();
        run.output_path = csv.into();
        match pipeline::locate(&run) {
            Ok(s) => {
                if !summary.is_null() {
                    *summary = SrplocLocateSummary {
                        n_mics: s.n_mics,
                        n_pairs: s.n_pairs,
                        n_blocks: s.n_blocks,
                        n_estimates: s.n_estimates,
                        low_score_blocks: s.low_score_blocks,
                    };
                }
                SrplocStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a locator. Null is a no-op.
///
/// # Safety
/// `locator` must be a pointer returned by a `srploc_locator_new*` call that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn srploc_locator_free(locator: *mut SrplocLocator) {
    if !locator.is_null() {
        drop(Box::from_raw(locator));
    }
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn srploc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn srploc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
