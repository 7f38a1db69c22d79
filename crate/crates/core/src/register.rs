//! Inter-frame virtual sensor: image transformation estimation (ITE).
//!
//! Every frame is registered against a reference with FFT phase correlation,
//! producing one 3x3 planar transform per frame. The optional full mode
//! recovers rotation and scale first from the log-polar resampled magnitude
//! spectra, then estimates translation on the de-rotated frame.
//!
//! Transform convention: `M` maps reference pixel coordinates to the
//! coordinates where that content appears in frame `n`, so a pure content
//! shift by `(dx, dy)` gives `M = [[1, 0, dx], [0, 1, dy], [0, 0, 1]]`.
//!
//! A Hann window is applied before every FFT. It suppresses wrap-around
//! edges but biases large shifts toward zero, since the overlap of the
//! windowed content shrinks with displacement.

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::sigcore::{hann, MotionTrace};
use crate::video::{Frame, VideoClip};

pub type Matrix3 = [[f64; 3]; 3];

pub const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Result of a translational phase correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub dx: f64,
    pub dy: f64,
    /// Height of the normalized correlation peak, in `[0, 1]`.
    pub peak: f64,
}

/// Reusable phase correlator for one frame size.
pub struct PhaseCorrelator {
    w: usize,
    h: usize,
    window: Vec<f64>,
    fft: Fft2,
}

const MIN_SIDE: usize = 16;

impl PhaseCorrelator {
    pub fn new(w: usize, h: usize) -> Result<Self> {
        Self::with_windows(w, h, hann(w), hann(h))
    }

    /// Correlator with separable per-axis windows of length `w` and `h`.
    fn with_windows(w: usize, h: usize, wx: Vec<f64>, wy: Vec<f64>) -> Result<Self> {
        if w < MIN_SIDE || h < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "phase correlation needs at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}"
            )));
        }
        let window = (0..h)
            .flat_map(|y| {
                let wyy = wy[y];
                wx.iter().map(move |&a| a * wyy)
            })
            .collect();
        Ok(Self {
            w,
            h,
            window,
            fft: Fft2::new(w, h),
        })
    }

    /// Windowed, mean-removed spectrum of a `w x h` buffer.
    fn spectrum_of(&self, data: &[f64]) -> Result<Vec<Complex<f64>>> {
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let mut buf: Vec<Complex<f64>> = data
            .iter()
            .zip(&self.window)
            .map(|(v, w)| Complex::new((v - mean) * w, 0.0))
            .collect();
        let energy: f64 = buf.iter().map(|c| c.re * c.re).sum();
        let scale: f64 = data.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if energy <= 1e-20 * scale {
            return Err(Error::ConstantImage);
        }
        self.fft.forward(&mut buf);
        Ok(buf)
    }

    pub fn spectrum(&self, frame: &Frame) -> Result<Vec<Complex<f64>>> {
        if frame.width() != self.w || frame.height() != self.h {
            return Err(Error::DimensionMismatch(
                frame.width(),
                frame.height(),
                self.w,
                self.h,
            ));
        }
        let data: Vec<f64> = frame.data().iter().map(|&v| v as f64).collect();
        self.spectrum_of(&data)
    }

    /// Translation of `mov` relative to the content whose spectrum is `reference`.
    pub fn correlate_spectra(&self, reference: &[Complex<f64>], mov: &[Complex<f64>]) -> Shift {
        let (w, h) = (self.w, self.h);
        let mut cross: Vec<Complex<f64>> = mov
            .iter()
            .zip(reference)
            .map(|(m, r)| m * r.conj())
            .collect();
        let max_mag = cross.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let floor = max_mag * 1e-12;
        for c in cross.iter_mut() {
            let n = c.norm();
            *c = if n > floor { *c / n } else { Complex::new(0.0, 0.0) };
        }
        self.fft.inverse(&mut cross);
        let norm = (w * h) as f64;
        let surface: Vec<f64> = cross.iter().map(|c| c.re / norm).collect();
        let (mut best, mut bi) = (f64::NEG_INFINITY, 0);
        for (i, &v) in surface.iter().enumerate() {
            if v > best {
                best = v;
                bi = i;
            }
        }
        let (px, py) = (bi % w, bi / w);
        let at = |x: isize, y: isize| {
            let xx = x.rem_euclid(w as isize) as usize;
            let yy = y.rem_euclid(h as isize) as usize;
            surface[yy * w + xx]
        };
        let (pxi, pyi) = (px as isize, py as isize);
        let fx = parabolic_offset(at(pxi - 1, pyi), best, at(pxi + 1, pyi));
        let fy = parabolic_offset(at(pxi, pyi - 1), best, at(pxi, pyi + 1));
        let wrap = |p: usize, n: usize| if p > n / 2 { p as f64 - n as f64 } else { p as f64 };
        Shift {
            dx: wrap(px, w) + fx,
            dy: wrap(py, h) + fy,
            peak: best.clamp(0.0, 1.0),
        }
    }

    pub fn correlate(&self, reference: &Frame, mov: &Frame) -> Result<Shift> {
        let r = self.spectrum(reference)?;
        let m = self.spectrum(mov)?;
        Ok(snap_integer(self.correlate_spectra(&r, &m), reference, mov))
    }
}

/// Replaces a refined estimate by the nearest integer shift when `mov` is an
/// exact copy of `reference` displaced by it over their overlap. Windowing
/// biases the parabolic refinement by a few hundredths of a pixel on
/// non-periodic content; noiseless integer motion is recovered exactly.
fn snap_integer(s: Shift, reference: &Frame, mov: &Frame) -> Shift {
    let (w, h) = (reference.width() as isize, reference.height() as isize);
    let (ix, iy) = (s.dx.round() as isize, s.dy.round() as isize);
    let (ow, oh) = (w - ix.abs(), h - iy.abs());
    if ow * oh * 4 < w * h {
        return s;
    }
    for y in iy.max(0)..h.min(h + iy) {
        let (m, r) = (mov.row(y as usize), reference.row((y - iy) as usize));
        for x in ix.max(0)..w.min(w + ix) {
            if m[x as usize] != r[(x - ix) as usize] {
                return s;
            }
        }
    }
    Shift {
        dx: ix as f64,
        dy: iy as f64,
        ..s
    }
}

/// Vertex offset of the parabola through three equally spaced samples.
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Translation `(dx, dy)` such that `mov` shows the content of `reference`
/// displaced by that amount, with the normalized peak height as confidence.
pub fn phase_corr_shift(reference: &Frame, mov: &Frame) -> Result<Shift> {
    if reference.width() != mov.width() || reference.height() != mov.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            mov.width(),
            mov.height(),
        ));
    }
    PhaseCorrelator::new(reference.width(), reference.height())?.correlate(reference, mov)
}

/// Similarity transform recovered by the log-polar path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
    pub peak: f64,
}

impl Similarity {
    /// Pixel-coordinate matrix of `p = s R (q - c) + c + t`.
    pub fn matrix(&self, w: usize, h: usize) -> Matrix3 {
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        let (sin, cos) = self.rotation.sin_cos();
        let (a, b, c, d) = (
            self.scale * cos,
            -self.scale * sin,
            self.scale * sin,
            self.scale * cos,
        );
        [
            [a, b, cx - a * cx - b * cy + self.dx],
            [c, d, cy - c * cx - d * cy + self.dy],
            [0.0, 0.0, 1.0],
        ]
    }
}

const LP_THETA: usize = 256;
const LP_RHO: usize = 128;
const REFINE_ROUNDS: usize = 4;
const LP_R_MIN: f64 = 0.02;
const LP_R_MAX: f64 = 0.45;

/// Rotation/scale registration by phase correlation of log-polar magnitude
/// spectra, followed by translation on the de-rotated, de-scaled frame.
pub struct LogPolarRegistrar {
    base: PhaseCorrelator,
    lp: PhaseCorrelator,
}

impl LogPolarRegistrar {
    pub fn new(w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            base: PhaseCorrelator::new(w, h)?,
            // angle is periodic, so only the log-radius axis is windowed
            lp: PhaseCorrelator::with_windows(LP_RHO, LP_THETA, hann(LP_RHO), vec![1.0; LP_THETA])?,
        })
    }

    /// Log-polar resampling (rows = angle over `[0, pi)`, columns = log radius)
    /// of the log magnitude spectrum.
    fn log_polar(&self, spectrum: &[Complex<f64>]) -> Vec<f64> {
        let (w, h) = (self.base.w, self.base.h);
        // fftshifted magnitude with a high-pass emphasis that suppresses the
        // low-frequency lobe shared by every windowed frame
        let mut mag = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let sx = (x + w / 2) % w;
                let sy = (y + h / 2) % h;
                let fx = (sx as f64 - (w / 2) as f64) / w as f64;
                let fy = (sy as f64 - (h / 2) as f64) / h as f64;
                let c = (std::f64::consts::PI * fx).cos() * (std::f64::consts::PI * fy).cos();
                mag[sy * w + sx] = ((1.0 - c) * (2.0 - c) * spectrum[y * w + x].norm()) as f32;
            }
        }
        let log_step = (LP_R_MAX / LP_R_MIN).ln() / (LP_RHO - 1) as f64;
        let mut out = vec![0.0; LP_RHO * LP_THETA];
        for t in 0..LP_THETA {
            let theta = std::f64::consts::PI * t as f64 / LP_THETA as f64;
            let (s, c) = theta.sin_cos();
            for r in 0..LP_RHO {
                let rad = LP_R_MIN * (log_step * r as f64).exp();
                let kx = (w / 2) as f64 + rad * c * w as f64;
                let ky = (h / 2) as f64 + rad * s * h as f64;
                out[t * LP_RHO + r] = crate::video::bilinear(&mag, w, h, kx, ky) as f64;
            }
        }
        out
    }

    fn warp(frame: &Frame, rotation: f64, scale: f64) -> Frame {
        let (w, h) = (frame.width(), frame.height());
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        let (sin, cos) = rotation.sin_cos();
        Frame::from_fn(w, h, |x, y| {
            let (px, py) = (x as f64 - cx, y as f64 - cy);
            let qx = scale * (cos * px - sin * py) + cx;
            let qy = scale * (sin * px + cos * py) + cy;
            frame.sample(qx, qy)
        })
    }

    pub fn register(&self, reference: &Frame, mov: &Frame) -> Result<Similarity> {
        let rs = self.base.spectrum(reference)?;
        let ms = self.base.spectrum(mov)?;
        let lr = self.lp.spectrum_of(&self.log_polar(&rs))?;
        let lm = self.lp.spectrum_of(&self.log_polar(&ms))?;
        let lp_shift = self.lp.correlate_spectra(&lr, &lm);
        let log_step = (LP_R_MAX / LP_R_MIN).ln() / (LP_RHO - 1) as f64;
        let scale = (-lp_shift.dx * log_step).exp();
        let base_rot = std::f64::consts::PI * lp_shift.dy / LP_THETA as f64;

        let mut best: Option<Similarity> = None;
        for rotation in [base_rot, wrap_angle(base_rot + std::f64::consts::PI)] {
            let Some(cand) = self.evaluate(&rs, mov, rotation, scale) else {
                continue;
            };
            if best.is_none_or(|b| cand.peak > b.peak) {
                best = Some(cand);
            }
        }
        let mut best = best.ok_or(Error::ConstantImage)?;

        // The log-polar peak is only bin accurate; polish rotation and
        // log-scale by parabolic steps on the translation peak height.
        let mut steps = [std::f64::consts::PI / LP_THETA as f64, log_step];
        for _ in 0..REFINE_ROUNDS {
            for (axis, step) in steps.iter_mut().enumerate() {
                let probe = |d: f64| {
                    let (r, s) = if axis == 0 {
                        (best.rotation + d, best.scale)
                    } else {
                        (best.rotation, best.scale * d.exp())
                    };
                    self.evaluate(&rs, mov, r, s)
                };
                let (Some(lo), Some(hi)) = (probe(-*step), probe(*step)) else {
                    continue;
                };
                let off = parabolic_offset(lo.peak, best.peak, hi.peak);
                let moved = if off != 0.0 {
                    probe(off * *step)
                } else if lo.peak > best.peak || hi.peak > best.peak {
                    Some(if lo.peak > hi.peak { lo } else { hi })
                } else {
                    None
                };
                if let Some(c) = moved.filter(|c| c.peak > best.peak) {
                    best = c;
                }
                *step *= 0.5;
            }
        }
        best.rotation = wrap_angle(best.rotation);
        Ok(best)
    }

    /// Translation and peak after undoing `rotation` and `scale` on `mov`.
    fn evaluate(
        &self,
        reference: &[Complex<f64>],
        mov: &Frame,
        rotation: f64,
        scale: f64,
    ) -> Option<Similarity> {
        let undone = Self::warp(mov, rotation, scale);
        let us = self.base.spectrum(&undone).ok()?;
        let t = self.base.correlate_spectra(reference, &us);
        // translation measured on the de-rotated frame: t = s R t'
        let (sin, cos) = rotation.sin_cos();
        Some(Similarity {
            rotation,
            scale,
            dx: scale * (cos * t.dx - sin * t.dy),
            dy: scale * (sin * t.dx + cos * t.dy),
            peak: t.peak,
        })
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut a = a.rem_euclid(tau);
    if a > std::f64::consts::PI {
        a -= tau;
    }
    a
}

/// Per-frame planar transforms at the video frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSeries {
    pub fps: f64,
    pub matrices: Vec<Matrix3>,
    /// Peak confidence per frame; 1 for the reference frame.
    pub confidence: Vec<f64>,
}

pub const MATRIX_AXES: [&str; 9] = ["m00", "m01", "m02", "m10", "m11", "m12", "m20", "m21", "m22"];

impl TransformSeries {
    fn trace_with(&self, offset: bool) -> Result<MotionTrace> {
        let cols = (0..9)
            .map(|k| {
                let (i, j) = (k / 3, k % 3);
                self.matrices
                    .iter()
                    .map(|m| m[i][j] - if offset { IDENTITY[i][j] } else { 0.0 })
                    .collect()
            })
            .collect();
        MotionTrace::new(
            self.fps,
            0.0,
            MATRIX_AXES.iter().map(|s| s.to_string()).collect(),
            cols,
        )
    }

    /// The nine row-major matrix entries as a trace (`m00` .. `m22`).
    pub fn to_trace(&self) -> Result<MotionTrace> {
        self.trace_with(false)
    }

    /// Entries of `M - I`; a static video maps to an all-zero trace.
    pub fn to_offset_trace(&self) -> Result<MotionTrace> {
        self.trace_with(true)
    }

    /// Translation entries only, labelled `tx`/`ty`.
    pub fn translation_trace(&self) -> Result<MotionTrace> {
        let tx = self.matrices.iter().map(|m| m[0][2]).collect();
        let ty = self.matrices.iter().map(|m| m[1][2]).collect();
        MotionTrace::new(self.fps, 0.0, vec!["tx".into(), "ty".into()], vec![tx, ty])
    }

    /// CSV with columns `time_s,m00..m22` at frame timestamps.
    pub fn to_csv(&self) -> Result<String> {
        Ok(self.to_trace()?.to_csv())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IteMode {
    #[default]
    Translation,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// Every frame registered to frame 0.
    #[default]
    Reference,
    /// Consecutive pairs registered and composed.
    Chained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct IteConfig {
    pub mode: IteMode,
    pub anchor: Anchor,
}

fn mat_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn ite_extract(video: &VideoClip, mode: IteMode) -> Result<TransformSeries> {
    ite_extract_with(video, IteConfig { mode, ..Default::default() })
}

pub fn ite_extract_with(video: &VideoClip, cfg: IteConfig) -> Result<TransformSeries> {
    if video.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: video.len(),
        });
    }
    let (w, h) = (video.camera.frame_w, video.camera.frame_h);
    let pairwise: Vec<(Matrix3, f64)> = match cfg.mode {
        IteMode::Translation => {
            let pc = PhaseCorrelator::new(w, h)?;
            let spectra: Vec<Vec<Complex<f64>>> = video
                .frames
                .par_iter()
                .enumerate()
                .map(|(i, f)| pc.spectrum(f).map_err(|e| e.at_frame(i)))
                .collect::<Result<_>>()?;
            (1..video.len())
                .into_par_iter()
                .map(|n| {
                    let r = match cfg.anchor {
                        Anchor::Reference => 0,
                        Anchor::Chained => n - 1,
                    };
                    let s = snap_integer(
                        pc.correlate_spectra(&spectra[r], &spectra[n]),
                        &video.frames[r],
                        &video.frames[n],
                    );
                    let mut m = IDENTITY;
                    m[0][2] = s.dx;
                    m[1][2] = s.dy;
                    (m, s.peak)
                })
                .collect()
        }
        IteMode::Full => {
            let reg = LogPolarRegistrar::new(w, h)?;
            (1..video.len())
                .into_par_iter()
                .map(|n| {
                    let r = match cfg.anchor {
                        Anchor::Reference => 0,
                        Anchor::Chained => n - 1,
                    };
                    reg.register(&video.frames[r], &video.frames[n])
                        .map(|s| (s.matrix(w, h), s.peak))
                        .map_err(|e| e.at_frame(n))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut matrices = vec![IDENTITY];
    let mut confidence = vec![1.0];
    for (m, peak) in pairwise {
        let next = match cfg.anchor {
            Anchor::Reference => m,
            Anchor::Chained => mat_mul(&m, matrices.last().unwrap()),
        };
        matrices.push(next);
        confidence.push(peak);
    }
    Ok(TransformSeries {
        fps: video.camera.fps,
        matrices,
        confidence,
    })
}
