//! Intra-frame virtual sensor: rolling shutter estimation (RSE).
//!
//! Consecutive frames are registered pixel-wise with a multi-resolution
//! demons scheme. Each row of the resulting displacement field is one
//! temporal sample of the rolling shutter, so the field is averaged across
//! columns and the row values are concatenated, rows first and then frames.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::simulate::gaussian_kernel;
use crate::sigcore::MotionTrace;
use crate::video::{bilinear, Frame, Shutter, VideoClip};

/// Per-pixel displacement, in pixels, of the content of the reference frame
/// as seen in the moving frame: `mov(x + d(x)) ~ ref(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    width: usize,
    height: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl DisplacementField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_abs(&self) -> f32 {
        self.dx
            .iter()
            .chain(&self.dy)
            .map(|v| v.abs())
            .fold(0.0, f32::max)
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.dx.len() as f64;
        (
            self.dx.iter().map(|&v| v as f64).sum::<f64>() / n,
            self.dy.iter().map(|&v| v as f64).sum::<f64>() / n,
        )
    }

    /// Mean over the columns of each row.
    pub fn row_means(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.width;
        let avg = |f: &[f32]| {
            f.chunks_exact(w)
                .map(|r| r.iter().map(|&v| v as f64).sum::<f64>() / w as f64)
                .collect()
        };
        (avg(&self.dx), avg(&self.dy))
    }

    /// Mean over the rows of each column.
    pub fn column_means(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.width, self.height);
        let avg = |f: &[f32]| {
            (0..w)
                .map(|c| (0..h).map(|r| f[r * w + c] as f64).sum::<f64>() / h as f64)
                .collect()
        };
        (avg(&self.dx), avg(&self.dy))
    }

    /// Offset-encoded debug images: `128 + scale * d`, clamped to 8 bits.
    pub fn to_pgm_pair(&self, scale: f32) -> (Vec<u8>, Vec<u8>) {
        let enc = |f: &[f32]| {
            let data = f
                .iter()
                .map(|v| ((128.0 + scale * v) / 255.0).clamp(0.0, 1.0))
                .collect();
            Frame::new(self.width, self.height, data)
                .expect("field dims")
                .to_pgm()
        };
        (enc(&self.dx), enc(&self.dy))
    }

    fn is_finite(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DemonsConfig {
    pub iters: usize,
    /// Gaussian regularization of the field after every update, pixels of the
    /// current pyramid level.
    pub smooth_sigma: f64,
    pub step: f64,
    pub pyramid_levels: usize,
    /// Compose updates through their exponential instead of adding them.
    pub diffeomorphic: bool,
    /// Step halvings tried before a level is considered converged.
    pub max_halvings: usize,
}

impl Default for DemonsConfig {
    fn default() -> Self {
        Self {
            iters: 30,
            smooth_sigma: 2.0,
            step: 1.0,
            pyramid_levels: 3,
            diffeomorphic: false,
            max_halvings: 4,
        }
    }
}

/// Residual diagnostics of one demons run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemonsReport {
    /// Mean squared residual after every accepted iteration, per level,
    /// coarsest first; the first entry of each level is the starting error.
    pub errors: Vec<Vec<f64>>,
}

struct Image {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Image {
    fn from_frame(f: &Frame) -> Self {
        Self {
            w: f.width(),
            h: f.height(),
            data: f.data().to_vec(),
        }
    }

    fn downsample(&self) -> Image {
        let blurred = blur(&self.data, self.w, self.h, &gaussian_kernel(1.0));
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(blurred[(2 * y).min(self.h - 1) * self.w + (2 * x).min(self.w - 1)]);
            }
        }
        Image { w, h, data }
    }
}

fn blur(data: &[f32], w: usize, h: usize, kernel: &[f64]) -> Vec<f32> {
    let k: Vec<f32> = kernel.iter().map(|&v| v as f32).collect();
    let r = (k.len() / 2) as isize;
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; data.len()];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * row[clampi(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0f32; data.len()];
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let sy = clampi(y as isize + j as isize - r, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

fn warp(img: &Image, field: &DisplacementField) -> Vec<f32> {
    let (w, h) = (img.w, img.h);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out.push(bilinear(
                &img.data,
                w,
                h,
                x as f64 + field.dx[i] as f64,
                y as f64 + field.dy[i] as f64,
            ));
        }
    }
    out
}

fn mse(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

fn gradient(data: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let i = y * w + x;
            gx[i] = (data[y * w + xr] - data[y * w + xl]) / (xr - xl).max(1) as f32;
            gy[i] = (data[yd * w + x] - data[yu * w + x]) / (yd - yu).max(1) as f32;
        }
    }
    (gx, gy)
}

/// `a ∘ b`: displacement of `x -> x + b(x) -> (x + b(x)) + a(x + b(x))`.
fn compose(a: &DisplacementField, b: &DisplacementField) -> DisplacementField {
    let (w, h) = (a.width, a.height);
    let mut out = DisplacementField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (px, py) = (x as f64 + b.dx[i] as f64, y as f64 + b.dy[i] as f64);
            out.dx[i] = b.dx[i] + bilinear(&a.dx, w, h, px, py);
            out.dy[i] = b.dy[i] + bilinear(&a.dy, w, h, px, py);
        }
    }
    out
}

/// Scaling-and-squaring exponential of a stationary velocity field.
fn exp_field(v: &DisplacementField) -> DisplacementField {
    let max = v.max_abs();
    let mut n = 0;
    while max / (1u32 << n) as f32 > 0.5 && n < 8 {
        n += 1;
    }
    let s = 1.0 / (1u32 << n) as f32;
    let mut phi = DisplacementField {
        width: v.width,
        height: v.height,
        dx: v.dx.iter().map(|d| d * s).collect(),
        dy: v.dy.iter().map(|d| d * s).collect(),
    };
    for _ in 0..n {
        phi = compose(&phi, &phi);
    }
    phi
}

fn upsample(field: &DisplacementField, w: usize, h: usize) -> DisplacementField {
    let (fw, fh) = (field.width, field.height);
    let mut out = DisplacementField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x as f64 / 2.0, y as f64 / 2.0);
            out.dx[y * w + x] = 2.0 * bilinear(&field.dx, fw, fh, sx, sy);
            out.dy[y * w + x] = 2.0 * bilinear(&field.dy, fw, fh, sx, sy);
        }
    }
    out
}

fn run_level(
    reference: &Image,
    mov: &Image,
    mut field: DisplacementField,
    cfg: &DemonsConfig,
    level: usize,
    kernel: &[f64],
) -> Result<(DisplacementField, Vec<f64>)> {
    let (w, h) = (reference.w, reference.h);
    let (rgx, rgy) = gradient(&reference.data, w, h);
    let mut warped = warp(mov, &field);
    let mut err = mse(&warped, &reference.data);
    let mut errors = vec![err];
    let mut step = cfg.step as f32;
    for iteration in 0..cfg.iters {
        if err == 0.0 {
            break;
        }
        let (wgx, wgy) = gradient(&warped, w, h);
        let mut ux = vec![0.0f32; w * h];
        let mut uy = vec![0.0f32; w * h];
        for i in 0..w * h {
            let diff = warped[i] - reference.data[i];
            let jx = 0.5 * (rgx[i] + wgx[i]);
            let jy = 0.5 * (rgy[i] + wgy[i]);
            let denom = jx * jx + jy * jy + diff * diff;
            if denom > 1e-12 {
                ux[i] = -diff * jx / denom;
                uy[i] = -diff * jy / denom;
            }
        }
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let update = DisplacementField {
                width: w,
                height: h,
                dx: ux.iter().map(|v| v * step).collect(),
                dy: uy.iter().map(|v| v * step).collect(),
            };
            let raw = if cfg.diffeomorphic {
                compose(&field, &exp_field(&update))
            } else {
                DisplacementField {
                    width: w,
                    height: h,
                    dx: field.dx.iter().zip(&update.dx).map(|(a, b)| a + b).collect(),
                    dy: field.dy.iter().zip(&update.dy).map(|(a, b)| a + b).collect(),
                }
            };
            let candidate = DisplacementField {
                width: w,
                height: h,
                dx: blur(&raw.dx, w, h, kernel),
                dy: blur(&raw.dy, w, h, kernel),
            };
            if !candidate.is_finite() {
                return Err(Error::Divergence {
                    level,
                    iteration,
                    error: f64::NAN,
                    previous: err,
                });
            }
            let cand_warped = warp(mov, &candidate);
            let cand_err = mse(&cand_warped, &reference.data);
            if cand_err <= err {
                field = candidate;
                warped = cand_warped;
                err = cand_err;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        errors.push(err);
    }
    if errors.last().copied().unwrap_or(0.0) > errors[0] * (1.0 + 1e-9) {
        return Err(Error::Divergence {
            level,
            iteration: errors.len() - 1,
            error: *errors.last().unwrap(),
            previous: errors[0],
        });
    }
    Ok((field, errors))
}

/// Multi-resolution demons registration of `mov` onto `reference`.
pub fn demons_register(reference: &Frame, mov: &Frame, cfg: &DemonsConfig) -> Result<DisplacementField> {
    demons_register_report(reference, mov, cfg).map(|(f, _)| f)
}

pub fn demons_register_report(
    reference: &Frame,
    mov: &Frame,
    cfg: &DemonsConfig,
) -> Result<(DisplacementField, DemonsReport)> {
    if reference.width() != mov.width() || reference.height() != mov.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            mov.width(),
            mov.height(),
        ));
    }
    if reference.is_constant() || mov.is_constant() {
        return Err(Error::ConstantImage);
    }
    if cfg.pyramid_levels == 0 || !(cfg.step > 0.0) || !(cfg.smooth_sigma > 0.0) {
        return Err(Error::Config(
            "demons needs pyramid_levels >= 1, step > 0 and smooth_sigma > 0".into(),
        ));
    }
    let mut refs = vec![Image::from_frame(reference)];
    let mut movs = vec![Image::from_frame(mov)];
    for _ in 1..cfg.pyramid_levels {
        let (r, m) = (refs.last().unwrap(), movs.last().unwrap());
        if r.w < 8 || r.h < 8 {
            break;
        }
        let (nr, nm) = (r.downsample(), m.downsample());
        refs.push(nr);
        movs.push(nm);
    }
    let kernel = gaussian_kernel(cfg.smooth_sigma);
    let levels = refs.len();
    let mut field = DisplacementField::zeros(refs[levels - 1].w, refs[levels - 1].h);
    let mut report = DemonsReport::default();
    for level in (0..levels).rev() {
        if field.width != refs[level].w || field.height != refs[level].h {
            field = upsample(&field, refs[level].w, refs[level].h);
        }
        let (f, errs) = run_level(&refs[level], &movs[level], field, cfg, level, &kernel)?;
        field = f;
        report.errors.push(errs);
    }
    Ok((field, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean across each row's columns: one sample per row.
    #[default]
    Rows,
    /// Mean down each column: one sample per column.
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RseConfig {
    pub demons: DemonsConfig,
    pub aggregation: Aggregation,
}

/// RSE output: the motion trace plus the row-clock time of each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RseTrace {
    pub trace: MotionTrace,
    pub sample_times: Vec<f64>,
}

pub fn rse_extract(video: &VideoClip, cfg: &RseConfig) -> Result<RseTrace> {
    if video.camera.shutter != Shutter::Rolling {
        return Err(Error::GlobalShutter);
    }
    if video.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: video.len(),
        });
    }
    let per_pair: Vec<(Vec<f64>, Vec<f64>)> = (0..video.len() - 1)
        .into_par_iter()
        .map(|n| {
            let field = demons_register(&video.frames[n], &video.frames[n + 1], &cfg.demons)
                .map_err(|e| e.at_frame(n + 1))?;
            Ok(match cfg.aggregation {
                Aggregation::Rows => field.row_means(),
                Aggregation::Columns => field.column_means(),
            })
        })
        .collect::<Result<_>>()?;
    let cam = &video.camera;
    let per_frame = match cfg.aggregation {
        Aggregation::Rows => cam.frame_h,
        Aggregation::Columns => cam.frame_w,
    };
    let mut tx = Vec::with_capacity(per_pair.len() * per_frame);
    let mut ty = Vec::with_capacity(per_pair.len() * per_frame);
    let mut times = Vec::with_capacity(per_pair.len() * per_frame);
    for (n, (x, y)) in per_pair.into_iter().enumerate() {
        tx.extend(x);
        ty.extend(y);
        for r in 0..per_frame {
            let offset = match cfg.aggregation {
                Aggregation::Rows => r as f64 * cam.row_scan_period,
                Aggregation::Columns => r as f64 / (cam.fps * per_frame as f64),
            };
            times.push(n as f64 / cam.fps + offset);
        }
    }
    let (x_axis, y_axis) = match cfg.aggregation {
        Aggregation::Rows => ("tx_rows", "ty_rows"),
        Aggregation::Columns => ("tx_cols", "ty_cols"),
    };
    let trace = MotionTrace::new(
        per_frame as f64 * cam.fps,
        0.0,
        vec![x_axis.into(), y_axis.into()],
        vec![tx, ty],
    )?;
    Ok(RseTrace {
        trace,
        sample_times: times,
    })
}
