//! C ABI over the `virtimu` core.
//!
//! Objects cross the boundary as opaque handles created by `*_new`, `*_read`
//! or `*_load` functions and released with the matching `*_free`. Every
//! fallible call returns a [`VirtimuStatus`]; the message of the most recent
//! failure on the calling thread is available from [`virtimu_last_error`].
//! Panics are caught and reported as `VIRTIMU_ERR_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use virtimu::auth::{verify_tremor, ErrorReport, Template};
use virtimu::features::{extract_features, FeatureSchema, Source};
use virtimu::sidechan::{virtual_sensor, VirtualSensorKind};
use virtimu::sigcore::{max_lag_corr, MotionTrace};
use virtimu::video::VideoClip;
use virtimu::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirtimuStatus {
    VirtimuOk = 0,
    VirtimuErrNull = 1,
    VirtimuErrUtf8 = 2,
    VirtimuErrInvalidArgument = 3,
    VirtimuErrParse = 4,
    VirtimuErrIo = 5,
    VirtimuErrTooShort = 6,
    VirtimuErrSchemaMismatch = 7,
    VirtimuErrConfig = 8,
    VirtimuErrBufferTooSmall = 9,
    VirtimuErrUnknownName = 10,
    VirtimuErrInternal = 11,
    VirtimuErrPanic = 12,
}

/// A motion trace: named axes sampled on a uniform grid.
pub struct VirtimuTrace(MotionTrace);

/// A decoded video clip with its camera manifest.
pub struct VirtimuVideo(VideoClip);

/// An enrolled tremor template.
pub struct VirtimuTemplate(Template);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(VirtimuStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            "parse" => VirtimuStatus::VirtimuErrParse,
            "io" => VirtimuStatus::VirtimuErrIo,
            "too_short" => VirtimuStatus::VirtimuErrTooShort,
            "schema_mismatch" => VirtimuStatus::VirtimuErrSchemaMismatch,
            "config" => VirtimuStatus::VirtimuErrConfig,
            "unknown" => VirtimuStatus::VirtimuErrUnknownName,
            "invalid_argument" | "invalid_trace" | "length_mismatch" | "dimension_mismatch" | "zero_variance"
            | "global_shutter" | "rate_deficit" | "constant_image" => VirtimuStatus::VirtimuErrInvalidArgument,
            _ => VirtimuStatus::VirtimuErrInternal,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: VirtimuStatus, msg: impl Into<String>) -> Failure {
    Failure(code, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VirtimuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VirtimuStatus::VirtimuOk,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(_) => {
            set_last_error("panic inside virtimu");
            VirtimuStatus::VirtimuErrPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(VirtimuStatus::VirtimuErrNull, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VirtimuStatus::VirtimuErrUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(VirtimuStatus::VirtimuErrNull, format!("{what} is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(VirtimuStatus::VirtimuErrNull, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(VirtimuStatus::VirtimuErrNull, "output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, cap: usize, written: *mut usize) -> Result<(), Failure> {
    if !written.is_null() {
        *written = values.len();
    }
    if cap < values.len() {
        return Err(fail(
            VirtimuStatus::VirtimuErrBufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(fail(VirtimuStatus::VirtimuErrNull, "buffer is null"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn virtimu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated when `cap > 0`). Returns the full message length without
/// the terminator.
#[no_mangle]
pub unsafe extern "C" fn virtimu_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a trace from axis-major samples: `data[a * len + i]` is sample `i`
/// of axis `a`.
#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_new(
    sample_rate: f64,
    t0: f64,
    axes: *const *const c_char,
    n_axes: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut VirtimuTrace,
) -> VirtimuStatus {
    guard(|| {
        if axes.is_null() {
            return Err(fail(VirtimuStatus::VirtimuErrNull, "axes is null"));
        }
        let names = (0..n_axes)
            .map(|a| str_arg(*axes.add(a), "axis name").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let flat = slice_arg(data, n_axes * len, "data")?;
        let cols = flat.chunks(len.max(1)).take(n_axes).map(<[f64]>::to_vec).collect();
        let trace = MotionTrace::new(sample_rate, t0, names, cols)?;
        out_arg(out, VirtimuTrace(trace))
    })
}

/// Parses trace CSV text.
#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_from_csv(text: *const c_char, out: *mut *mut VirtimuTrace) -> VirtimuStatus {
    guard(|| {
        let trace = MotionTrace::from_csv(str_arg(text, "text")?)?;
        out_arg(out, VirtimuTrace(trace))
    })
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_read_csv(path: *const c_char, out: *mut *mut VirtimuTrace) -> VirtimuStatus {
    guard(|| {
        let trace = MotionTrace::read_csv(Path::new(str_arg(path, "path")?))?;
        out_arg(out, VirtimuTrace(trace))
    })
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_write_csv(trace: *const VirtimuTrace, path: *const c_char) -> VirtimuStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        Ok(t.0.write_csv(Path::new(str_arg(path, "path")?))?)
    })
}

/// Samples per axis; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_len(trace: *const VirtimuTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_axis_count(trace: *const VirtimuTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.axes().len())
}

/// Sample rate in Hz; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_sample_rate(trace: *const VirtimuTrace) -> f64 {
    trace.as_ref().map_or(0.0, |t| t.0.sample_rate())
}

/// Copies the samples of axis `name`. `written` receives the axis length
/// even when `cap` is too small.
#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_axis(
    trace: *const VirtimuTrace,
    name: *const c_char,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> VirtimuStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let axis = t.0.axis_or_err(str_arg(name, "name")?)?;
        copy_out(axis, buf, cap, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_trace_free(trace: *mut VirtimuTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Loads a PGM-sequence video directory with its `manifest`.
#[no_mangle]
pub unsafe extern "C" fn virtimu_video_load(dir: *const c_char, out: *mut *mut VirtimuVideo) -> VirtimuStatus {
    guard(|| {
        let v = VideoClip::load(Path::new(str_arg(dir, "dir")?))?;
        out_arg(out, VirtimuVideo(v))
    })
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_video_frame_count(video: *const VirtimuVideo) -> usize {
    video.as_ref().map_or(0, |v| v.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_video_free(video: *mut VirtimuVideo) {
    if !video.is_null() {
        drop(Box::from_raw(video));
    }
}

/// Runs the `"ite"` or `"rse"` virtual sensor over a video.
#[no_mangle]
pub unsafe extern "C" fn virtimu_extract(
    video: *const VirtimuVideo,
    method: *const c_char,
    out: *mut *mut VirtimuTrace,
) -> VirtimuStatus {
    guard(|| {
        let v = ref_arg(video, "video")?;
        let kind: VirtualSensorKind = str_arg(method, "method")?.parse()?;
        out_arg(out, VirtimuTrace(virtual_sensor(kind, &v.0)?))
    })
}

/// Largest Pearson correlation over integer lags in `[-max_lag, max_lag]`.
#[no_mangle]
pub unsafe extern "C" fn virtimu_max_lag_corr(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    max_lag: usize,
    lag: *mut i64,
    corr: *mut f64,
) -> VirtimuStatus {
    guard(|| {
        let (l, c) = max_lag_corr(slice_arg(a, a_len, "a")?, slice_arg(b, b_len, "b")?, max_lag)?;
        if lag.is_null() || corr.is_null() {
            return Err(fail(VirtimuStatus::VirtimuErrNull, "output pointer is null"));
        }
        *lag = l as i64;
        *corr = c;
        Ok(())
    })
}

/// Feature vector of a trace under the default schema of `source`
/// (`"physical"`, `"ite"` or `"rse"`).
#[no_mangle]
pub unsafe extern "C" fn virtimu_features(
    trace: *const VirtimuTrace,
    source: *const c_char,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> VirtimuStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let source: Source = str_arg(source, "source")?.parse()?;
        let fv = extract_features(&t.0, &FeatureSchema::default_for(source))?;
        copy_out(&fv.values, buf, cap, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_template_load(path: *const c_char, out: *mut *mut VirtimuTemplate) -> VirtimuStatus {
    guard(|| {
        let t = Template::load(Path::new(str_arg(path, "path")?))?;
        out_arg(out, VirtimuTemplate(t))
    })
}

#[no_mangle]
pub unsafe extern "C" fn virtimu_template_free(template: *mut VirtimuTemplate) {
    if !template.is_null() {
        drop(Box::from_raw(template));
    }
}

/// Verifies a trace against a template. `accept` and `degenerate` receive 0
/// or 1.
#[no_mangle]
pub unsafe extern "C" fn virtimu_verify(
    template: *const VirtimuTemplate,
    video_id: *const c_char,
    trace: *const VirtimuTrace,
    accept: *mut i32,
    score: *mut f64,
    degenerate: *mut i32,
) -> VirtimuStatus {
    guard(|| {
        let t = ref_arg(template, "template")?;
        let tr = ref_arg(trace, "trace")?;
        let d = verify_tremor(str_arg(video_id, "video_id")?, &tr.0, &t.0)?;
        if accept.is_null() || score.is_null() || degenerate.is_null() {
            return Err(fail(VirtimuStatus::VirtimuErrNull, "output pointer is null"));
        }
        *accept = d.accept as i32;
        *score = d.score;
        *degenerate = d.degenerate as i32;
        Ok(())
    })
}

/// Cost-weighted error `c1 * fpr + c2 * fnr` of an operating point.
#[no_mangle]
pub unsafe extern "C" fn virtimu_error_cost(fpr: f64, fnr: f64, c1: f64, c2: f64, e: *mut f64) -> VirtimuStatus {
    guard(|| {
        let r = ErrorReport::from_rates(fpr, fnr, c1, c2)?;
        if e.is_null() {
            return Err(fail(VirtimuStatus::VirtimuErrNull, "output pointer is null"));
        }
        *e = r.e;
        Ok(())
    })
}
