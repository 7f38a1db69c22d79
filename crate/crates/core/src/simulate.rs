//! Ground-truth simulator: textured planar scenes, tremor-like camera motion,
//! global/rolling-shutter rendering with exposure blur and optional
//! stabilization, and simulated physical IMU readings.
//!
//! Motion axes are expressed in the image plane: `tx`/`ty` displace the image
//! content in pixels, `rz` rotates it (radians, about the frame center) and
//! `tz` scales it by `exp(tz)`. `rx`/`ry` are treated as small pitch/yaw angles
//! mapped to vertical/horizontal content shifts with a focal length of
//! `frame_w` pixels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sigcore::{self, MotionTrace};
use crate::video::{CameraConfig, Frame, Shutter, VideoClip};

/// Cutoff of the low-pass motion estimate removed by stabilization.
pub const STABILIZATION_CUTOFF_HZ: f64 = 20.0;

/// Textured planar scene sampled by the virtual camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    data: Vec<f32>,
    texture_seed: u64,
}

impl Scene {
    pub fn new(width: usize, height: usize, data: Vec<f32>, texture_seed: u64) -> Result<Self> {
        if data.len() != width * height || width < 4 || height < 4 {
            return Err(Error::InvalidArgument(format!(
                "scene {width}x{height} with {} pixels",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidArgument("scene values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            data,
            texture_seed,
        })
    }

    /// Band-limited noise texture: seeded white noise smoothed at several
    /// scales, rescaled to `[0.1, 0.9]`.
    pub fn textured(width: usize, height: usize, texture_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(texture_seed);
        let n = width * height;
        let mut acc = vec![0.0f64; n];
        for (sigma, weight) in [(1.2, 0.5), (3.0, 0.8), (8.0, 1.0)] {
            let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let smooth = gaussian_blur(&white, width, height, sigma);
            let rms = (smooth.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            for (a, s) in acc.iter_mut().zip(&smooth) {
                *a += weight * s / rms;
            }
        }
        let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let data = acc
            .iter()
            .map(|v| (0.1 + 0.8 * (v - lo) / (hi - lo)) as f32)
            .collect();
        Self {
            width,
            height,
            data,
            texture_seed,
        }
    }

    /// A textured scene with twice the frame size in each dimension.
    pub fn for_camera(cam: &CameraConfig, texture_seed: u64) -> Self {
        Self::textured(2 * cam.frame_w, 2 * cam.frame_h, texture_seed)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texture_seed(&self) -> u64 {
        self.texture_seed
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn sample(&self, x: f64, y: f64) -> f32 {
        crate::video::bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Integer-aligned crop of the scene centered like an unmoved camera window.
    pub fn centered_crop(&self, w: usize, h: usize) -> Frame {
        let (ox, oy) = ((self.width - w) / 2, (self.height - h) / 2);
        Frame::from_fn(w, h, |x, y| self.data[(oy + y) * self.width + ox + x])
    }
}

/// Separable Gaussian blur with reflected borders.
pub(crate) fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = kernel.len() / 2;
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i - 1;
            }
            if i >= n {
                i = 2 * n - i - 1;
            }
        }
        i as usize
    };
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = reflect(x as isize + k as isize - r as isize, w);
                s += kv * data[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yy = reflect(y as isize + k as isize - r as isize, h);
                s += kv * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Parameters of one synthetic subject's postural tremor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubjectModel {
    pub subject_id: String,
    pub dominant_freq: f64,
    /// Band of the additive tremor noise, Hz.
    pub band: (f64, f64),
    /// Peak displacement of the generated `tx` axis, pixels.
    pub amplitude_px: f64,
    /// Relative weight of the fundamental (first entry) and its harmonics.
    pub harmonic_weights: Vec<f64>,
    /// RMS of the band-limited noise relative to the tonal part.
    #[serde(default = "default_noise_level")]
    pub noise_level: f64,
    pub noise_seed: u64,
}

fn default_noise_level() -> f64 {
    0.3
}

impl SubjectModel {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!(
                "subject {}: band ({lo}, {hi}) invalid",
                self.subject_id
            )));
        }
        if !(self.dominant_freq > 0.0) || !(self.amplitude_px >= 0.0) || self.noise_level < 0.0 {
            return Err(Error::Config(format!(
                "subject {}: frequency, amplitude and noise level must be non-negative",
                self.subject_id
            )));
        }
        if self.harmonic_weights.is_empty() {
            return Err(Error::Config(format!(
                "subject {}: harmonic_weights empty",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// Axis gain and phase offset of `ty` relative to `tx`.
const TY_GAIN: f64 = 0.7;

/// Generates a deterministic two-axis (`tx`, `ty`) tremor trace of the given
/// duration starting at `t = 0`.
pub fn gen_tremor(subject: &SubjectModel, duration: f64, rate: f64) -> Result<MotionTrace> {
    subject.validate()?;
    if rate < 4.0 * subject.band.1 {
        return Err(Error::RateDeficit {
            motion_hz: rate,
            required_hz: 4.0 * subject.band.1,
        });
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration {duration}")));
    }
    let n = (duration * rate).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(subject.noise_seed);
    let mut axes = Vec::with_capacity(2);
    for gain in [1.0, TY_GAIN] {
        let phases: Vec<f64> = subject
            .harmonic_weights
            .iter()
            .map(|_| rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU))
            .collect();
        let tonal: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                subject
                    .harmonic_weights
                    .iter()
                    .zip(&phases)
                    .enumerate()
                    .map(|(k, (w, p))| {
                        w * (std::f64::consts::TAU * (k + 1) as f64 * subject.dominant_freq * t + p)
                            .sin()
                    })
                    .sum()
            })
            .collect();
        let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let noise = sigcore::bandpass(&white, rate, subject.band.0, subject.band.1);
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let (tr, nr) = (rms(&tonal), rms(&noise));
        let noise_scale = if nr > 0.0 { subject.noise_level * tr / nr } else { 0.0 };
        let raw: Vec<f64> = tonal
            .iter()
            .zip(&noise)
            .map(|(t, z)| t + noise_scale * z)
            .collect();
        axes.push((gain, raw));
    }
    let peak = axes[0].1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { subject.amplitude_px / peak } else { 0.0 };
    let cols = axes
        .into_iter()
        .map(|(gain, raw)| raw.into_iter().map(|v| v * scale * gain).collect())
        .collect();
    MotionTrace::new(rate, 0.0, vec!["tx".into(), "ty".into()], cols)
}

/// Image-plane pose of the content at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    tx: f64,
    ty: f64,
    rot: f64,
    log_scale: f64,
}

struct PoseSampler<'a> {
    trace: &'a MotionTrace,
    tx: Option<usize>,
    ty: Option<usize>,
    rx: Option<usize>,
    ry: Option<usize>,
    rz: Option<usize>,
    tz: Option<usize>,
    focal: f64,
}

impl<'a> PoseSampler<'a> {
    fn new(trace: &'a MotionTrace, focal: f64) -> Result<Self> {
        let idx = |n: &str| trace.axes().iter().position(|a| a == n);
        for a in trace.axes() {
            if !["tx", "ty", "tz", "rx", "ry", "rz"].contains(&a.as_str()) {
                return Err(Error::Unknown {
                    kind: "motion axis",
                    name: a.clone(),
                });
            }
        }
        let (tx, ty) = (idx("tx"), idx("ty"));
        if tx.is_none() || ty.is_none() {
            return Err(Error::InvalidTrace("motion must include tx and ty".into()));
        }
        Ok(Self {
            trace,
            tx,
            ty,
            rx: idx("rx"),
            ry: idx("ry"),
            rz: idx("rz"),
            tz: idx("tz"),
            focal,
        })
    }

    fn at(&self, t: f64) -> Pose {
        let v = |i: Option<usize>| i.map_or(0.0, |i| self.trace.value_at(i, t));
        Pose {
            tx: v(self.tx) + self.focal * v(self.ry),
            ty: v(self.ty) + self.focal * v(self.rx),
            rot: v(self.rz),
            log_scale: v(self.tz),
        }
    }
}

/// Applies the stabilization model: subtracts `strength` times the
/// zero-phase low-pass (cutoff [`STABILIZATION_CUTOFF_HZ`]) of every axis.
pub fn stabilize(motion: &MotionTrace, strength: f64) -> Result<MotionTrace> {
    let rate = motion.sample_rate();
    motion.map_columns(|_, col| {
        let low = sigcore::lowpass(col, rate, STABILIZATION_CUTOFF_HZ);
        col.iter().zip(&low).map(|(x, l)| x - strength * l).collect()
    })
}

/// Number of whole frames whose every row and sub-exposure lies inside the
/// motion span.
pub fn frames_covered(motion: &MotionTrace, cam: &CameraConfig) -> usize {
    let readout = match cam.shutter {
        Shutter::Global => 0.0,
        Shutter::Rolling => (cam.frame_h - 1) as f64 * cam.row_scan_period,
    };
    let end = motion.t0() + motion.duration();
    let last_start = end - readout - cam.exposure_time;
    if last_start < 0.0 || motion.t0() > 1e-12 {
        return 0;
    }
    (last_start * cam.fps + 1e-9).floor() as usize + 1
}

/// Renders as many frames as the motion trace covers.
pub fn render_video(scene: &Scene, motion: &MotionTrace, cam: &CameraConfig) -> Result<VideoClip> {
    let n = frames_covered(motion, cam);
    if n == 0 {
        return Err(Error::InvalidTrace(
            "motion does not cover a single frame capture".into(),
        ));
    }
    render_frames(scene, motion, cam, n)
}

/// Renders `n_frames` frames. Row `r` of frame `k` is exposed starting at
/// `k/fps + r*row_scan_period` (rolling) or `k/fps` (global); each pixel
/// averages `exposure_samples` bilinear scene samples spread across the
/// exposure window. Frames are quantized to 8 bits.
pub fn render_frames(
    scene: &Scene,
    motion: &MotionTrace,
    cam: &CameraConfig,
    n_frames: usize,
) -> Result<VideoClip> {
    cam.validate()?;
    if cam.shutter == Shutter::Rolling && motion.sample_rate() < cam.row_rate() * (1.0 - 1e-9) {
        return Err(Error::RateDeficit {
            motion_hz: motion.sample_rate(),
            required_hz: cam.row_rate(),
        });
    }
    if n_frames > frames_covered(motion, cam) {
        return Err(Error::InvalidTrace(format!(
            "motion covers {} frames, {n_frames} requested",
            frames_covered(motion, cam)
        )));
    }
    if scene.width < cam.frame_w || scene.height < cam.frame_h {
        return Err(Error::SceneMargin {
            excursion: 0.0,
            margin: -1.0,
        });
    }
    let applied = if cam.stabilization {
        stabilize(motion, cam.stabilization_strength)?
    } else {
        motion.clone()
    };
    let sampler = PoseSampler::new(&applied, cam.frame_w as f64)?;

    let (w, h) = (cam.frame_w, cam.frame_h);
    let ox = ((scene.width - w) / 2) as f64;
    let oy = ((scene.height - h) / 2) as f64;
    let (cxf, cyf) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let margin_x = ox;
    let margin_y = oy;
    let k = if cam.exposure_time > 0.0 {
        cam.exposure_samples
    } else {
        1
    };

    let row_offset = |r: usize| match cam.shutter {
        Shutter::Global => 0.0,
        Shutter::Rolling => r as f64 * cam.row_scan_period,
    };
    let poses = |frame: usize, r: usize| -> Vec<Pose> {
        let start = frame as f64 / cam.fps + row_offset(r);
        (0..k)
            .map(|s| sampler.at(start + cam.exposure_time * (s as f64 + 0.5) / k as f64))
            .collect()
    };

    // Excursion check over every pose actually used.
    let half_diag = (cxf * cxf + cyf * cyf).sqrt();
    for frame in 0..n_frames {
        for r in 0..h {
            for p in poses(frame, r) {
                let scale = p.log_scale.exp();
                let rot_extra = half_diag * (p.rot.abs().min(1.0) + (1.0 - 1.0 / scale).abs());
                let ex = p.tx.abs() + rot_extra / scale;
                let ey = p.ty.abs() + rot_extra / scale;
                if ex > margin_x || ey > margin_y {
                    return Err(Error::SceneMargin {
                        excursion: ex.max(ey),
                        margin: margin_x.min(margin_y),
                    });
                }
            }
        }
    }

    let frames: Vec<Frame> = (0..n_frames)
        .into_par_iter()
        .map(|frame| {
            let mut data = vec![0.0f32; w * h];
            for r in 0..h {
                let ps = poses(frame, r);
                let row = &mut data[r * w..(r + 1) * w];
                for p in &ps {
                    let inv_s = (-p.log_scale).exp();
                    let (sin, cos) = p.rot.sin_cos();
                    let py = r as f64 - cyf - p.ty;
                    for (c, out) in row.iter_mut().enumerate() {
                        let px = c as f64 - cxf - p.tx;
                        // content point q maps to p = s R q + t  =>  q = R^T (p - t) / s
                        let qx = (cos * px + sin * py) * inv_s;
                        let qy = (-sin * px + cos * py) * inv_s;
                        *out += scene.sample(ox + cxf + qx, oy + cyf + qy);
                    }
                }
                for v in row.iter_mut() {
                    *v /= k as f32;
                }
            }
            let mut f = Frame::new(w, h, data).expect("frame dims");
            f.quantize();
            f
        })
        .collect();
    VideoClip::new(cam.clone(), frames)
}

/// Simulated physical IMU: motion resampled to `rate`, translation axes
/// turned into acceleration (second difference, `ax`/`ay`/`az`) and rotation
/// axes into angular rate (first difference, `gx`/`gy`/`gz`), plus seeded
/// white noise of standard deviation `noise_std`.
pub fn simulate_physical_imu(
    motion: &MotionTrace,
    rate: f64,
    noise_std: f64,
    seed: u64,
) -> Result<MotionTrace> {
    if rate > motion.sample_rate() {
        return Err(Error::InvalidArgument(format!(
            "IMU rate {rate} exceeds motion rate {}",
            motion.sample_rate()
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_std {noise_std}")));
    }
    let r = sigcore::resample(motion, rate)?;
    if r.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: r.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes = Vec::new();
    let mut cols = Vec::new();
    for (name, col) in r.axes().iter().zip(r.columns()) {
        let n = col.len();
        let (label, values): (String, Vec<f64>) = match name.as_str() {
            "tx" | "ty" | "tz" => {
                let mut a = vec![0.0; n];
                for i in 1..n - 1 {
                    a[i] = (col[i + 1] - 2.0 * col[i] + col[i - 1]) * rate * rate;
                }
                a[0] = a[1];
                a[n - 1] = a[n - 2];
                (format!("a{}", &name[1..]), a)
            }
            "rx" | "ry" | "rz" => {
                let mut g = vec![0.0; n];
                for i in 1..n - 1 {
                    g[i] = (col[i + 1] - col[i - 1]) * rate / 2.0;
                }
                g[0] = (col[1] - col[0]) * rate;
                g[n - 1] = (col[n - 1] - col[n - 2]) * rate;
                (format!("g{}", &name[1..]), g)
            }
            other => {
                return Err(Error::Unknown {
                    kind: "motion axis",
                    name: other.to_string(),
                })
            }
        };
        let noisy = values
            .into_iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + noise_std * z
            })
            .collect();
        axes.push(label);
        cols.push(noisy);
    }
    MotionTrace::new(rate, r.t0(), axes, cols)
}

/// Constant-velocity or other analytic motion helper: samples `f(t)` for
/// `tx`/`ty` at `rate` over `[0, duration]`.
pub fn analytic_motion(
    duration: f64,
    rate: f64,
    f: impl Fn(f64) -> (f64, f64),
) -> Result<MotionTrace> {
    let n = (duration * rate).round() as usize + 1;
    let (tx, ty): (Vec<f64>, Vec<f64>) = (0..n).map(|i| f(i as f64 / rate)).unzip();
    MotionTrace::new(rate, 0.0, vec!["tx".into(), "ty".into()], vec![tx, ty])
}
