//! Shared signal types and primitives: motion traces, correlation, resampling
//! and power spectra.
//!
//! Correlation over multi-axis data is always performed per axis; callers that
//! need a single score take the maximum absolute value over axes.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A uniformly sampled multi-axis motion signal.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    sample_rate: f64,
    t0: f64,
    axes: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl MotionTrace {
    pub fn new(
        sample_rate: f64,
        t0: f64,
        axes: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidTrace(format!("sample rate {sample_rate}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidTrace("non-finite t0".into()));
        }
        if axes.is_empty() || axes.len() != samples.len() {
            return Err(Error::InvalidTrace(format!(
                "{} axis labels for {} sample columns",
                axes.len(),
                samples.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(Error::InvalidTrace(format!("duplicate axis '{a}'")));
            }
        }
        let len = samples[0].len();
        if len == 0 {
            return Err(Error::InvalidTrace("empty trace".into()));
        }
        for (axis, col) in axes.iter().zip(&samples) {
            if col.len() != len {
                return Err(Error::InvalidTrace(format!(
                    "axis '{axis}' has {} samples, expected {len}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrace(format!("axis '{axis}' has non-finite values")));
            }
        }
        Ok(Self {
            sample_rate,
            t0,
            axes,
            samples,
        })
    }

    /// Single-axis convenience constructor.
    pub fn single(sample_rate: f64, t0: f64, axis: &str, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, t0, vec![axis.to_string()], vec![samples])
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn axes(&self) -> &[String] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time span from first to last sample.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn axis(&self, name: &str) -> Option<&[f64]> {
        self.axes
            .iter()
            .position(|a| a == name)
            .map(|i| self.samples[i].as_slice())
    }

    pub fn axis_or_err(&self, name: &str) -> Result<&[f64]> {
        self.axis(name).ok_or_else(|| Error::Unknown {
            kind: "axis",
            name: name.to_string(),
        })
    }

    /// Linear interpolation of `axis` at absolute time `t`; clamps outside the span.
    pub fn value_at(&self, axis: usize, t: f64) -> f64 {
        interp_clamped(&self.samples[axis], (t - self.t0) * self.sample_rate)
    }

    /// A new trace holding only the named axes, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<MotionTrace> {
        let cols = names
            .iter()
            .map(|n| self.axis_or_err(n).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        MotionTrace::new(
            self.sample_rate,
            self.t0,
            names.iter().map(|s| s.to_string()).collect(),
            cols,
        )
    }

    pub fn map_columns(&self, mut f: impl FnMut(&str, &[f64]) -> Vec<f64>) -> Result<MotionTrace> {
        let cols = self
            .axes
            .iter()
            .zip(&self.samples)
            .map(|(a, c)| f(a, c))
            .collect();
        MotionTrace::new(self.sample_rate, self.t0, self.axes.clone(), cols)
    }

    pub fn into_parts(self) -> (f64, f64, Vec<String>, Vec<Vec<f64>>) {
        (self.sample_rate, self.t0, self.axes, self.samples)
    }

    /// Serializes to the trace CSV format: a `# sample_rate_hz=` comment, a
    /// `time_s,<axes>` header, then one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# sample_rate_hz={}", self.sample_rate);
        out.push_str("time_s");
        for a in &self.axes {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{}", self.time(i));
            for col in &self.samples {
                let _ = write!(out, ",{}", col[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<MotionTrace> {
        let ctx = "trace csv";
        let mut rate: Option<f64> = None;
        let mut header: Option<Vec<String>> = None;
        let mut times = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("sample_rate_hz=") {
                    rate = Some(v.trim().parse().map_err(|_| {
                        Error::parse(ctx, format!("line {}: bad sample rate '{v}'", lineno + 1))
                    })?);
                }
                continue;
            }
            match &header {
                None => {
                    let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                    if names.first().map(String::as_str) != Some("time_s") || names.len() < 2 {
                        return Err(Error::parse(ctx, "header must be time_s,<axis>,..."));
                    }
                    cols = vec![Vec::new(); names.len() - 1];
                    header = Some(names[1..].to_vec());
                }
                Some(h) => {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() != h.len() + 1 {
                        return Err(Error::parse(
                            ctx,
                            format!("line {}: expected {} fields", lineno + 1, h.len() + 1),
                        ));
                    }
                    let mut vals = fields.iter().map(|f| {
                        f.trim().parse::<f64>().map_err(|_| {
                            Error::parse(ctx, format!("line {}: bad number '{f}'", lineno + 1))
                        })
                    });
                    let t = vals.next().unwrap()?;
                    if let Some(&prev) = times.last() {
                        if t <= prev {
                            return Err(Error::parse(
                                ctx,
                                format!("line {}: time not increasing", lineno + 1),
                            ));
                        }
                    }
                    times.push(t);
                    for (c, v) in cols.iter_mut().zip(vals) {
                        c.push(v?);
                    }
                }
            }
        }
        let axes = header.ok_or_else(|| Error::parse(ctx, "missing header"))?;
        if times.is_empty() {
            return Err(Error::InvalidTrace("empty trace".into()));
        }
        let rate = match rate {
            Some(r) => r,
            None if times.len() >= 2 => (times.len() - 1) as f64 / (times[times.len() - 1] - times[0]),
            None => return Err(Error::parse(ctx, "sample rate unknown for single-row trace")),
        };
        MotionTrace::new(rate, times[0], axes, cols)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<MotionTrace> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MotionTrace::from_csv(&text)
    }
}

/// Linear interpolation at fractional index `pos`, clamped to the ends.
pub(crate) fn interp_clamped(xs: &[f64], pos: f64) -> f64 {
    let last = xs.len() - 1;
    if pos <= 0.0 {
        return xs[0];
    }
    if pos >= last as f64 {
        return xs[last];
    }
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if f == 0.0 {
        xs[i]
    } else {
        xs[i] * (1.0 - f) + xs[i + 1] * f
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation coefficient of two equal-length sequences.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: a.len(),
        });
    }
    pearson_unchecked(a, b)
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Result<f64> {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Relative to the data scale, so that rounding residue of a "constant"
    // sequence is still reported as degenerate.
    let scale_a = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let scale_b = b.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if saa <= 1e-24 * scale_a || saa == 0.0 {
        return Err(Error::ZeroVariance("first"));
    }
    if sbb <= 1e-24 * scale_b || sbb == 0.0 {
        return Err(Error::ZeroVariance("second"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Exhaustive integer-lag search maximizing `|pearson_corr|`.
///
/// A positive lag means `b` is delayed relative to `a`: `a[i]` pairs with
/// `b[i + lag]`. Correlation at each lag uses only the overlapping samples.
/// Ties resolve to the smallest `|lag|`, negative before positive.
pub fn max_lag_corr(a: &[f64], b: &[f64], max_lag: usize) -> Result<(isize, f64)> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: b.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if 2 * max_lag >= n {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must be below half the length {n}"
        )));
    }
    pearson_unchecked(a, b)?;
    let mut best: Option<(isize, f64)> = None;
    let mut consider = |lag: isize| {
        let (sa, sb) = if lag >= 0 {
            let l = lag as usize;
            (&a[..n - l], &b[l..])
        } else {
            let l = (-lag) as usize;
            (&a[l..], &b[..n - l])
        };
        if let Ok(c) = pearson_unchecked(sa, sb) {
            match best {
                Some((_, bc)) if c.abs() <= bc.abs() + 1e-9 => {}
                _ => best = Some((lag, c)),
            }
        }
    };
    consider(0);
    for l in 1..=max_lag as isize {
        consider(-l);
        consider(l);
    }
    best.ok_or(Error::ZeroVariance("overlap"))
}

/// Per-axis `max_lag_corr` between two traces sharing axis labels and rate.
pub fn axis_corr(a: &MotionTrace, b: &MotionTrace, axis: &str, max_lag: usize) -> Result<(isize, f64)> {
    max_lag_corr(a.axis_or_err(axis)?, b.axis_or_err(axis)?, max_lag)
}

/// Linear-interpolation resampling onto a grid starting at the same `t0`.
pub fn resample(trace: &MotionTrace, target_rate: f64) -> Result<MotionTrace> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("target rate {target_rate}")));
    }
    if target_rate == trace.sample_rate {
        return Ok(trace.clone());
    }
    let ratio = trace.sample_rate / target_rate;
    // Number of target periods inside the span, tolerant of rounding.
    let periods = (trace.duration() * target_rate + 1e-9).floor() as usize;
    let m = periods + 1;
    let cols = trace
        .samples
        .iter()
        .map(|col| {
            (0..m)
                .map(|k| interp_clamped(col, k as f64 * ratio))
                .collect()
        })
        .collect();
    MotionTrace::new(target_rate, trace.t0, trace.axes.clone(), cols)
}

/// Resamples `trace` onto the sample instants of another grid described by
/// `rate`, `t0` and `len`, clamping outside the source span.
pub fn resample_onto(trace: &MotionTrace, rate: f64, t0: f64, len: usize) -> Result<MotionTrace> {
    let cols = (0..trace.axes.len())
        .map(|a| {
            (0..len)
                .map(|k| trace.value_at(a, t0 + k as f64 / rate))
                .collect()
        })
        .collect();
    MotionTrace::new(rate, t0, trace.axes.clone(), cols)
}

/// One-sided power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_hz: f64,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    /// Bin with the largest power whose frequency lies in `[lo, hi]`.
    pub fn peak_bin_in(&self, lo: f64, hi: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, &p) in self.power.iter().enumerate() {
            let f = self.frequency(k);
            if f < lo || f > hi {
                continue;
            }
            if best.is_none_or(|b| p > self.power[b]) {
                best = Some(k);
            }
        }
        best
    }

    pub fn peak_bin(&self) -> usize {
        self.peak_bin_in(0.0, f64::INFINITY).unwrap_or(0)
    }

    /// Power summed over bins with frequency in `[lo, hi)`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.power
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = self.frequency(*k);
                f >= lo && f < hi
            })
            .map(|(_, p)| p)
            .sum()
    }
}

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Power spectrum of the mean-removed, Hann-windowed signal.
///
/// Normalization: with `y` the mean-removed samples and `w` the window,
/// `total_power() == Σ (w·y)² / Σ w²`, the window-weighted variance of the
/// signal. Interior bins are doubled to fold the negative frequencies.
pub fn power_spectrum(samples: &[f64], sample_rate: f64) -> Result<Spectrum> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::TooShort { needed: 8, got: n });
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("sample rate {sample_rate}")));
    }
    let m = mean(samples);
    let w = hann(n);
    let wsum2: f64 = w.iter().map(|v| v * v).sum();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .zip(&w)
        .map(|(x, wi)| Complex::new((x - m) * wi, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (n as f64 * wsum2);
    let half = n / 2;
    let power = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            let folded = k != 0 && !(n.is_multiple_of(2) && k == half);
            if folded {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    Ok(Spectrum {
        bin_hz: sample_rate / n as f64,
        power,
    })
}

/// The time-domain side of the spectrum normalization: `Σ (w·y)² / Σ w²`.
pub fn windowed_variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    let w = hann(samples.len());
    let num: f64 = samples.iter().zip(&w).map(|(x, wi)| ((x - m) * wi).powi(2)).sum();
    num / w.iter().map(|v| v * v).sum::<f64>()
}

/// Zero-phase frequency-domain filter: `gain(f)` multiplies every bin.
///
/// The signal is mirrored to twice its length before the FFT so that the
/// implied periodic extension is continuous at the ends.
pub fn fft_filter(samples: &[f64], sample_rate: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let len = 2 * n;
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .chain(samples.iter().rev())
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if k <= len / 2 { k } else { len - k };
        let f = kk as f64 * sample_rate / len as f64;
        *c *= gain(f);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / len as f64).collect()
}

/// Ideal zero-phase low-pass at `cutoff_hz`.
pub fn lowpass(samples: &[f64], sample_rate: f64, cutoff_hz: f64) -> Vec<f64> {
    fft_filter(samples, sample_rate, |f| if f <= cutoff_hz { 1.0 } else { 0.0 })
}

/// Ideal zero-phase band-pass keeping `[lo, hi]`.
pub fn bandpass(samples: &[f64], sample_rate: f64, lo: f64, hi: f64) -> Vec<f64> {
    fft_filter(samples, sample_rate, |f| if f >= lo && f <= hi { 1.0 } else { 0.0 })
}

/// Subtracts the mean and scales to unit peak magnitude; constant input maps to zeros.
pub fn normalize_amplitude(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let m = mean(xs);
    let peak = xs.iter().map(|v| (v - m).abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|v| (v - m) / peak).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(f: f64, rate: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / rate + phase).sin()).collect()
    }

    #[test]
    fn pearson_self_and_negated() {
        let x = sine(3.0, 100.0, 200, 0.3);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_corr(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_corr(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_evaluated() {
        // means 2 and 7/3; deviations (-1,0,1) and (-4/3,-1/3,5/3)
        // sab = 3, saa = 2, sbb = 42/9 -> r = 3 / sqrt(2 * 42/9) = 3 / sqrt(28/3)
        let expected = 3.0 / (28.0f64 / 3.0).sqrt();
        let r = pearson_corr(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - expected).abs() < 1e-12, "{r} vs {expected}");
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson_corr(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson_corr(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(matches!(
            pearson_corr(&[0.1; 50], &sine(1.0, 50.0, 50, 0.0)),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn lag_search_constructed_shift() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let mut shifted = vec![0.0; 3];
        shifted.extend_from_slice(&x[..197]);
        let (lag, c) = max_lag_corr(&x, &shifted, 20).unwrap();
        assert_eq!(lag, 3);
        assert!((c - 1.0).abs() < 1e-12);
        let (lag, c) = max_lag_corr(&x, &x, 20).unwrap();
        assert_eq!(lag, 0);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lag_search_delayed_sine() {
        let rate = 1000.0;
        let a = sine(8.0, rate, 2000, 0.0);
        let b: Vec<f64> = (0..2000)
            .map(|i| (2.0 * PI * 8.0 * (i as f64 / rate - 0.010)).sin())
            .collect();
        let (lag, c) = max_lag_corr(&a, &b, 50).unwrap();
        assert_eq!(lag, 10);
        assert!(c > 0.999_999);
    }

    #[test]
    fn lag_bound_enforced() {
        let x = sine(1.0, 10.0, 10, 0.0);
        assert!(max_lag_corr(&x, &x, 5).is_err());
    }

    #[test]
    fn resample_constant_and_identity() {
        let t = MotionTrace::single(100.0, 0.5, "tx", vec![2.5; 101]).unwrap();
        let r = resample(&t, 37.0).unwrap();
        assert!(r.columns()[0].iter().all(|&v| v == 2.5));
        assert!((r.duration() - t.duration()).abs() <= 1.0 / 37.0);
        assert_eq!(resample(&t, 100.0).unwrap(), t);
    }

    #[test]
    fn resample_round_trip() {
        let t = MotionTrace::single(100.0, 0.0, "tx", sine(1.3, 100.0, 301, 0.2)).unwrap();
        let back = resample(&resample(&t, 400.0).unwrap(), 100.0).unwrap();
        assert_eq!(back.len(), t.len());
        for (a, b) in back.columns()[0].iter().zip(t.columns()[0].iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_sine_downsample() {
        let t = MotionTrace::single(100.0, 0.0, "tx", sine(1.0, 100.0, 1001, 0.0)).unwrap();
        let r = resample(&t, 50.0).unwrap();
        let analytic = sine(1.0, 50.0, r.len(), 0.0);
        assert!(pearson_corr(&r.columns()[0], &analytic).unwrap() >= 0.999);
    }

    #[test]
    fn resample_rejects_bad_rate() {
        let t = MotionTrace::single(10.0, 0.0, "tx", vec![1.0, 2.0]).unwrap();
        assert!(resample(&t, 0.0).is_err());
    }

    #[test]
    fn trace_invariants() {
        assert!(MotionTrace::single(10.0, 0.0, "tx", vec![]).is_err());
        assert!(MotionTrace::single(0.0, 0.0, "tx", vec![1.0]).is_err());
        assert!(MotionTrace::single(10.0, 0.0, "tx", vec![f64::NAN]).is_err());
        assert!(MotionTrace::new(
            10.0,
            0.0,
            vec!["a".into(), "b".into()],
            vec![vec![1.0], vec![1.0, 2.0]]
        )
        .is_err());
    }

    #[test]
    fn spectrum_single_tone_peak() {
        let rate = 100.0;
        let s = power_spectrum(&sine(8.0, rate, 1024, 0.0), rate).unwrap();
        let peak = s.frequency(s.peak_bin());
        assert!((peak - 8.0).abs() <= s.bin_hz / 2.0 + 1e-12, "peak {peak}");
    }

    #[test]
    fn spectrum_constant_is_zero() {
        let s = power_spectrum(&[4.2; 64], 10.0).unwrap();
        assert!(s.total_power() < 1e-20);
    }

    #[test]
    fn spectrum_two_tones() {
        let rate = 100.0;
        let x: Vec<f64> = sine(5.0, rate, 2048, 0.0)
            .iter()
            .zip(sine(12.0, rate, 2048, 1.0))
            .map(|(a, b)| a + 0.7 * b)
            .collect();
        let s = power_spectrum(&x, rate).unwrap();
        let mut bins: Vec<usize> = (0..s.power.len()).collect();
        bins.sort_by(|&a, &b| s.power[b].total_cmp(&s.power[a]));
        // Hann main lobe spans neighbor bins; take the best bin of each lobe.
        let first = s.frequency(bins[0]);
        let second = bins
            .iter()
            .map(|&b| s.frequency(b))
            .find(|f| (f - first).abs() > 2.0)
            .unwrap();
        let mut peaks = [first, second];
        peaks.sort_by(f64::total_cmp);
        assert!((peaks[0] - 5.0).abs() < s.bin_hz);
        assert!((peaks[1] - 12.0).abs() < s.bin_hz);
    }

    #[test]
    fn spectrum_parseval() {
        let x: Vec<f64> = (0..301).map(|i| ((i * i) as f64 * 0.01).sin() + 0.1 * i as f64).collect();
        let s = power_spectrum(&x, 50.0).unwrap();
        let v = windowed_variance(&x);
        assert!((s.total_power() - v).abs() <= 1e-6 * v);
    }

    #[test]
    fn spectrum_too_short() {
        assert!(matches!(power_spectrum(&[1.0; 7], 1.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let t = MotionTrace::new(
            30.0,
            0.25,
            vec!["tx".into(), "ty".into()],
            vec![vec![0.1, -0.2, 0.3], vec![1.0, 2.0, 3.5]],
        )
        .unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("# sample_rate_hz=30\ntime_s,tx,ty\n"));
        assert_eq!(MotionTrace::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn csv_rejects_unordered_time() {
        let text = "time_s,tx\n0,1\n0,2\n";
        assert!(MotionTrace::from_csv(text).is_err());
    }

    #[test]
    fn lowpass_passes_slow_tone() {
        let rate = 1000.0;
        let x = sine(3.0, rate, 3000, 0.4);
        let y = lowpass(&x, rate, 20.0);
        // Gibbs ringing from the mirrored ends stays near the edges.
        let err = x[300..2700]
            .iter()
            .zip(&y[300..2700])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "{err}");
        let z = lowpass(&sine(60.0, rate, 3000, 0.0), rate, 20.0);
        assert!(z[300..2700].iter().map(|v| v.abs()).fold(0.0, f64::max) < 0.05);
    }
}
