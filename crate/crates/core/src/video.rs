//! Grayscale frames, video clips and their on-disk form (PGM frames plus a
//! `manifest` key-value file).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height} with {} pixels",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Bilinear sample with edge clamping.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.data[0];
        self.data.iter().all(|&v| v == first)
    }

    /// Rounds every pixel to the nearest of 256 levels in `[0, 1]`.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            *v = quantize_u8(*v) as f32 / 255.0;
        }
    }

    pub fn mean_abs_diff(&self, other: &Frame) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| quantize_u8(v)));
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Frame> {
        let ctx = "pgm";
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(ctx, "truncated header"));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // single whitespace byte separates header from raster
        pos += 1;
        if tokens[0] != "P5" {
            return Err(Error::parse(ctx, format!("unsupported magic {}", tokens[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(ctx, format!("bad header field '{s}'")))
        };
        let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::parse(ctx, format!("unsupported maxval {maxval}")));
        }
        let raster = bytes
            .get(pos..pos + w * h)
            .ok_or_else(|| Error::parse(ctx, "truncated raster"))?;
        Frame::new(
            w,
            h,
            raster.iter().map(|&b| b as f32 / maxval as f32).collect(),
        )
    }
}

#[inline]
pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Bilinear interpolation on a row-major grid, clamping to the border.
#[inline]
pub(crate) fn bilinear(data: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = (xc.floor() as usize).min(w - 1);
    let y0 = (yc.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (xc - x0 as f64) as f32;
    let fy = (yc - y0 as f64) as f32;
    let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
    let bot = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shutter {
    Global,
    Rolling,
}

impl fmt::Display for Shutter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shutter::Global => "global",
            Shutter::Rolling => "rolling",
        })
    }
}

impl FromStr for Shutter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Shutter::Global),
            "rolling" => Ok(Shutter::Rolling),
            _ => Err(Error::Unknown {
                kind: "shutter",
                name: s.into(),
            }),
        }
    }
}

/// Capture settings of the simulated camera; also the metadata of a clip.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub frame_w: usize,
    pub frame_h: usize,
    pub fps: f64,
    pub shutter: Shutter,
    /// Seconds between the start of consecutive row exposures.
    pub row_scan_period: f64,
    pub exposure_time: f64,
    pub stabilization: bool,
    pub stabilization_strength: f64,
    /// Sub-exposure samples averaged per pixel to approximate motion blur.
    pub exposure_samples: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            frame_w: 64,
            frame_h: 64,
            fps: 30.0,
            shutter: Shutter::Rolling,
            row_scan_period: 1.0 / (30.0 * 64.0),
            exposure_time: 0.002,
            stabilization: false,
            stabilization_strength: 0.9,
            exposure_samples: 8,
        }
    }
}

impl CameraConfig {
    /// Rolling-shutter camera whose row clock fills the whole frame period.
    pub fn rolling(frame_w: usize, frame_h: usize, fps: f64) -> Self {
        Self {
            frame_w,
            frame_h,
            fps,
            shutter: Shutter::Rolling,
            row_scan_period: 1.0 / (fps * frame_h as f64),
            ..Self::default()
        }
    }

    pub fn global(frame_w: usize, frame_h: usize, fps: f64) -> Self {
        Self {
            shutter: Shutter::Global,
            ..Self::rolling(frame_w, frame_h, fps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frame_w < 4 || self.frame_h < 4 {
            return bad(format!("frame {}x{} too small", self.frame_w, self.frame_h));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps {}", self.fps));
        }
        let frame_period = 1.0 / self.fps;
        if !(self.exposure_time >= 0.0 && self.exposure_time < frame_period) {
            return bad(format!(
                "exposure_time {} must be in [0, 1/fps)",
                self.exposure_time
            ));
        }
        if self.shutter == Shutter::Rolling {
            if !(self.row_scan_period > 0.0) {
                return bad("row_scan_period must be positive".into());
            }
            if self.row_scan_period * self.frame_h as f64 > frame_period * (1.0 + 1e-9) {
                return bad(format!(
                    "row_scan_period x frame_h = {} exceeds frame period {}",
                    self.row_scan_period * self.frame_h as f64,
                    frame_period
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.stabilization_strength) {
            return bad(format!(
                "stabilization_strength {} outside [0, 1]",
                self.stabilization_strength
            ));
        }
        if self.exposure_samples == 0 {
            return bad("exposure_samples must be at least 1".into());
        }
        Ok(())
    }

    /// Effective row sampling rate of a rolling-shutter capture.
    pub fn row_rate(&self) -> f64 {
        1.0 / self.row_scan_period
    }

    pub fn to_manifest(&self) -> String {
        format!(
            "fps={}\nframe_w={}\nframe_h={}\nshutter={}\nrow_scan_period_s={}\nexposure_time_s={}\nstabilization={}\nstabilization_strength={}\nexposure_samples={}\n",
            self.fps,
            self.frame_w,
            self.frame_h,
            self.shutter,
            self.row_scan_period,
            self.exposure_time,
            if self.stabilization { "on" } else { "off" },
            self.stabilization_strength,
            self.exposure_samples,
        )
    }

    pub fn from_manifest(text: &str) -> Result<CameraConfig> {
        let ctx = "manifest";
        let mut cfg = CameraConfig::default();
        let mut seen = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(ctx, format!("expected key=value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let float = || {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(ctx, format!("{k}: bad number '{v}'")))
            };
            let int = || {
                v.parse::<usize>()
                    .map_err(|_| Error::parse(ctx, format!("{k}: bad integer '{v}'")))
            };
            match k {
                "fps" => cfg.fps = float()?,
                "frame_w" => cfg.frame_w = int()?,
                "frame_h" => cfg.frame_h = int()?,
                "shutter" => cfg.shutter = v.parse()?,
                "row_scan_period_s" => cfg.row_scan_period = float()?,
                "exposure_time_s" => cfg.exposure_time = float()?,
                "stabilization" => {
                    cfg.stabilization = match v {
                        "on" => true,
                        "off" => false,
                        _ => return Err(Error::parse(ctx, format!("stabilization '{v}'"))),
                    }
                }
                "stabilization_strength" => cfg.stabilization_strength = float()?,
                "exposure_samples" => cfg.exposure_samples = int()?,
                _ => return Err(Error::parse(ctx, format!("unknown key '{k}'"))),
            }
            seen.push(k.to_string());
        }
        for required in [
            "fps",
            "frame_w",
            "frame_h",
            "shutter",
            "row_scan_period_s",
            "exposure_time_s",
            "stabilization",
            "stabilization_strength",
        ] {
            if !seen.iter().any(|s| s == required) {
                return Err(Error::parse(ctx, format!("missing key '{required}'")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A sequence of equally sized frames plus the capture settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub camera: CameraConfig,
    pub frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(camera: CameraConfig, frames: Vec<Frame>) -> Result<Self> {
        camera.validate()?;
        for (i, f) in frames.iter().enumerate() {
            if f.width() != camera.frame_w || f.height() != camera.frame_h {
                return Err(Error::DimensionMismatch(
                    f.width(),
                    f.height(),
                    camera.frame_w,
                    camera.frame_h,
                )
                .at_frame(i));
            }
        }
        Ok(Self { camera, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Capture start time of frame `n`.
    pub fn frame_time(&self, n: usize) -> f64 {
        n as f64 / self.camera.fps
    }

    pub fn frame_file_name(n: usize) -> String {
        format!("frame_{n:06}.pgm")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join("manifest");
        fs::write(&manifest, self.camera.to_manifest()).map_err(|e| Error::io(&manifest, e))?;
        for (n, f) in self.frames.iter().enumerate() {
            let p = dir.join(Self::frame_file_name(n));
            fs::write(&p, f.to_pgm()).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<VideoClip> {
        let manifest = dir.join("manifest");
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let camera = CameraConfig::from_manifest(&text)?;
        let mut frames = Vec::new();
        loop {
            let p = dir.join(Self::frame_file_name(frames.len()));
            if !p.exists() {
                break;
            }
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            frames.push(Frame::from_pgm(&bytes).map_err(|e| e.at_frame(frames.len()))?);
        }
        if frames.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} contains no frames",
                dir.display()
            )));
        }
        VideoClip::new(camera, frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_quantized() {
        let mut f = Frame::from_fn(7, 5, |x, y| ((x * 13 + y * 7) % 17) as f32 / 16.0);
        f.quantize();
        let back = Frame::from_pgm(&f.to_pgm()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn manifest_round_trip() {
        let cam = CameraConfig {
            stabilization: true,
            ..CameraConfig::rolling(320, 240, 30.0)
        };
        let back = CameraConfig::from_manifest(&cam.to_manifest()).unwrap();
        assert_eq!(back, cam);
    }

    #[test]
    fn manifest_missing_key() {
        let text = "fps=30\nframe_w=8\n";
        assert!(CameraConfig::from_manifest(text).is_err());
    }

    #[test]
    fn camera_constraints() {
        let mut cam = CameraConfig::rolling(16, 16, 30.0);
        cam.row_scan_period *= 2.0;
        assert!(cam.validate().is_err());
        let mut cam = CameraConfig::global(16, 16, 30.0);
        cam.exposure_time = 1.0 / 30.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn bilinear_midpoints() {
        let f = Frame::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.sample(0.5, 0.0), 0.5);
        assert_eq!(f.sample(0.5, 0.5), 1.5);
        assert_eq!(f.sample(-3.0, 9.0), 2.0);
    }

    #[test]
    fn clip_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let cam = CameraConfig::global(8, 6, 30.0);
        let frames: Vec<Frame> = (0..3)
            .map(|n| {
                let mut f = Frame::from_fn(8, 6, |x, y| ((x + y + n) % 5) as f32 / 4.0);
                f.quantize();
                f
            })
            .collect();
        let clip = VideoClip::new(cam, frames).unwrap();
        clip.save(dir.path()).unwrap();
        assert!(dir.path().join("frame_000002.pgm").exists());
        assert_eq!(VideoClip::load(dir.path()).unwrap(), clip);
    }
}
