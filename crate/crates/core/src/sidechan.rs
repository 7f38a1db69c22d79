//! Side-channel analysis: leakage detection, separability of intended and
//! unintended components, controllability of a mitigation, and the
//! virtual-sensor dispatch used to turn video into motion.
//!
//! All signals handed to this module must already share one sample grid.
//! Separability is only ever established relative to the decomposers
//! supplied; failing them does not prove a channel inseparable in general.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::register::{ite_extract, IteMode};
use crate::rse::{rse_extract, RseConfig};
use crate::sigcore::{bandpass, max_lag_corr, MotionTrace};
use crate::simulate::{render_frames, Scene};
use crate::video::{CameraConfig, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Detection and intended/unintended correlation floor.
    pub alpha: f64,
    /// Cross-correlation ceiling for separability.
    pub beta: f64,
    /// Minimum score drop when the mitigation is enabled.
    pub delta: f64,
    /// Lag search bound, samples.
    pub max_lag: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.3,
            delta: 0.1,
            max_lag: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub detected: bool,
    pub score: f64,
    pub lag: isize,
}

/// Leakage test: `|corr(m, s_vi)|` maximized over lags exceeds `alpha`.
pub fn detect_channel(m: &[f64], s_vi: &[f64], alpha: f64, max_lag: usize) -> Result<Detection> {
    let (lag, c) = max_lag_corr(m, s_vi, max_lag)?;
    Ok(Detection {
        detected: c.abs() > alpha,
        score: c.abs(),
        lag,
    })
}

/// Splits a measurement into intended and unintended estimates.
pub trait Decomposer {
    fn name(&self) -> String;
    /// Returns `(m_int, m_vi)`.
    fn decompose(&self, m: &[f64], rate: f64) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Zero-phase band-pass split into an intended and an unintended band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassDecomposer {
    pub intended: (f64, f64),
    pub side: (f64, f64),
}

impl Decomposer for BandpassDecomposer {
    fn name(&self) -> String {
        format!(
            "bandpass[int {}-{} Hz, side {}-{} Hz]",
            self.intended.0, self.intended.1, self.side.0, self.side.1
        )
    }

    fn decompose(&self, m: &[f64], rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            bandpass(m, rate, self.intended.0, self.intended.1),
            bandpass(m, rate, self.side.0, self.side.1),
        ))
    }
}

/// Hands the whole measurement out as both components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityDecomposer;

impl Decomposer for IdentityDecomposer {
    fn name(&self) -> String {
        "identity".into()
    }

    fn decompose(&self, m: &[f64], _rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((m.to_vec(), m.to_vec()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Classification {
    NoChannel,
    Inseparable,
    /// Separable but uncontrollable.
    Separable,
    Controllable,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::NoChannel => "no-channel",
            Classification::Inseparable => "inseparable",
            Classification::Separable => "separable",
            Classification::Controllable => "controllable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVerdict {
    pub variable: String,
    /// Named correlation scores in the order they were computed.
    pub scores: Vec<(String, f64)>,
    pub thresholds: Thresholds,
    pub detected: bool,
    pub separable: bool,
    pub controllable: bool,
    pub classification: Classification,
    /// Decomposer that established separability, if any.
    pub decomposer: Option<String>,
    pub note: String,
}

impl ChannelVerdict {
    pub fn score(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|s| s.1)
    }

    /// `controllable => separable => detected`, and the classification
    /// agrees with the flags.
    pub fn lattice_holds(&self) -> bool {
        let chain = (!self.controllable || self.separable) && (!self.separable || self.detected);
        let class = match (self.detected, self.separable, self.controllable) {
            (false, _, _) => Classification::NoChannel,
            (true, false, _) => Classification::Inseparable,
            (true, true, false) => Classification::Separable,
            (true, true, true) => Classification::Controllable,
        };
        chain && class == self.classification
    }

    /// `key: value` lines.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variable: {}", self.variable);
        let _ = writeln!(out, "classification: {}", self.classification);
        let _ = writeln!(out, "detected: {}", self.detected);
        let _ = writeln!(out, "separable: {}", self.separable);
        let _ = writeln!(out, "controllable: {}", self.controllable);
        let t = &self.thresholds;
        let _ = writeln!(out, "alpha: {}", t.alpha);
        let _ = writeln!(out, "beta: {}", t.beta);
        let _ = writeln!(out, "delta: {}", t.delta);
        for (n, v) in &self.scores {
            let _ = writeln!(out, "score.{n}: {v:.6}");
        }
        if let Some(d) = &self.decomposer {
            let _ = writeln!(out, "decomposer: {d}");
        }
        let _ = writeln!(out, "note: {}", self.note);
        out
    }
}

/// Checks leakage of `s_vi` into `m`, then the four correlation bounds for
/// each decomposer in turn; the first decomposer meeting all of them makes
/// the channel separable.
pub fn test_separability(
    variable: &str,
    m: &[f64],
    s_int: &[f64],
    s_vi: &[f64],
    rate: f64,
    decomposers: &[&dyn Decomposer],
    th: &Thresholds,
) -> Result<ChannelVerdict> {
    let det = detect_channel(m, s_vi, th.alpha, th.max_lag)?;
    let mut v = ChannelVerdict {
        variable: variable.to_string(),
        scores: vec![("m~s_vi".into(), det.score)],
        thresholds: *th,
        detected: det.detected,
        separable: false,
        controllable: false,
        classification: Classification::NoChannel,
        decomposer: None,
        note: String::new(),
    };
    if !det.detected {
        v.note = format!("no leakage above alpha {}", th.alpha);
        return Ok(v);
    }
    let corr = |a: &[f64], b: &[f64]| -> Result<f64> {
        if a.iter().all(|x| *x == a[0]) {
            // an all-zero component carries nothing of either signal
            return Ok(0.0);
        }
        Ok(max_lag_corr(a, b, th.max_lag)?.1.abs())
    };
    let mut tried = Vec::new();
    for d in decomposers {
        let (m_int, m_vi) = d.decompose(m, rate)?;
        let name = d.name();
        let s = [
            (format!("{name}:m_int~s_int"), corr(&m_int, s_int)?),
            (format!("{name}:m_vi~s_vi"), corr(&m_vi, s_vi)?),
            (format!("{name}:m_int~s_vi"), corr(&m_int, s_vi)?),
            (format!("{name}:m_vi~s_int"), corr(&m_vi, s_int)?),
        ];
        let ok = s[0].1 > th.alpha && s[1].1 > th.alpha && s[2].1 < th.beta && s[3].1 < th.beta;
        v.scores.extend(s);
        tried.push(name.clone());
        if ok {
            v.separable = true;
            v.classification = Classification::Separable;
            v.decomposer = Some(name);
            v.note = "separable".into();
            return Ok(v);
        }
    }
    v.classification = Classification::Inseparable;
    v.note = format!("not separable by supplied decomposers: {}", tried.join("; "));
    Ok(v)
}

/// A hidden variable that may leak into a sensor's output.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenVar {
    pub name: String,
    pub samples: Vec<f64>,
}

/// A sensor whose output can be measured with its mitigation on or off.
pub trait Sensor {
    fn name(&self) -> &str;
    fn rate(&self) -> f64;
    fn intended(&self) -> &[f64];
    fn hidden(&self) -> &[HiddenVar];
    fn has_mitigation(&self) -> bool;
    /// Output with the mitigation engaged (`true`) or bypassed.
    fn measure(&self, mitigation_enabled: bool) -> Result<Vec<f64>>;

    fn hidden_var(&self, name: &str) -> Result<&HiddenVar> {
        self.hidden().iter().find(|h| h.name == name).ok_or_else(|| Error::Unknown {
            kind: "hidden variable",
            name: name.to_string(),
        })
    }
}

/// Upgrades a separable verdict to controllable when the sensor's
/// mitigation lowers the detection score by at least `delta`.
pub fn classify_controllability(sensor: &dyn Sensor, verdict: &ChannelVerdict) -> Result<ChannelVerdict> {
    let mut v = verdict.clone();
    if !verdict.separable {
        return Ok(v);
    }
    if !sensor.has_mitigation() {
        v.note = "separable; no mitigation to toggle".into();
        return Ok(v);
    }
    let th = &verdict.thresholds;
    let s = &sensor.hidden_var(&verdict.variable)?.samples;
    let off = detect_channel(&sensor.measure(false)?, s, th.alpha, th.max_lag)?.score;
    let on = detect_channel(&sensor.measure(true)?, s, th.alpha, th.max_lag)?.score;
    v.scores.push(("mitigation_off:m~s_vi".into(), off));
    v.scores.push(("mitigation_on:m~s_vi".into(), on));
    if off - on >= th.delta {
        v.controllable = true;
        v.classification = Classification::Controllable;
        v.note = format!("mitigation lowers leakage by {:.3}", off - on);
    } else {
        v.note = format!("mitigation changes leakage by only {:.3}", off - on);
    }
    Ok(v)
}

/// Full analysis of one hidden variable of a sensor, mitigation bypassed.
pub fn analyze(
    sensor: &dyn Sensor,
    variable: &str,
    decomposers: &[&dyn Decomposer],
    th: &Thresholds,
) -> Result<ChannelVerdict> {
    let m = sensor.measure(false)?;
    let s_vi = &sensor.hidden_var(variable)?.samples;
    let v = test_separability(variable, &m, sensor.intended(), s_vi, sensor.rate(), decomposers, th)?;
    classify_controllability(sensor, &v)
}

/// Suppression of one frequency band: `g(m) = m - strength * bandpass(m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStop {
    pub lo: f64,
    pub hi: f64,
    pub strength: f64,
}

/// Linear mixing sensor: `m = s_int + sum leakage_i * s_vi + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSensor {
    pub name: String,
    pub rate: f64,
    pub s_int: Vec<f64>,
    pub hidden: Vec<HiddenVar>,
    pub leakage: Vec<f64>,
    pub noise: Vec<f64>,
    pub mitigation: Option<BandStop>,
}

impl SyntheticSensor {
    pub fn new(
        name: &str,
        rate: f64,
        s_int: Vec<f64>,
        hidden: Vec<(HiddenVar, f64)>,
        noise: Vec<f64>,
        mitigation: Option<BandStop>,
    ) -> Result<Self> {
        let n = s_int.len();
        for (i, (h, _)) in hidden.iter().enumerate() {
            if hidden[..i].iter().any(|o| o.0.name == h.name) {
                return Err(Error::InvalidArgument(format!("duplicate hidden variable '{}'", h.name)));
            }
            if h.samples.len() != n {
                return Err(Error::LengthMismatch {
                    left: h.samples.len(),
                    right: n,
                });
            }
        }
        if noise.len() != n {
            return Err(Error::LengthMismatch {
                left: noise.len(),
                right: n,
            });
        }
        let (hidden, leakage) = hidden.into_iter().unzip();
        Ok(Self {
            name: name.to_string(),
            rate,
            s_int,
            hidden,
            leakage,
            noise,
            mitigation,
        })
    }
}

impl Sensor for SyntheticSensor {
    fn name(&self) -> &str {
        &self.name
    }

    fn rate(&self) -> f64 {
        self.rate
    }

    fn intended(&self) -> &[f64] {
        &self.s_int
    }

    fn hidden(&self) -> &[HiddenVar] {
        &self.hidden
    }

    fn has_mitigation(&self) -> bool {
        self.mitigation.is_some()
    }

    fn measure(&self, mitigation_enabled: bool) -> Result<Vec<f64>> {
        let mut m: Vec<f64> = self.s_int.iter().zip(&self.noise).map(|(a, b)| a + b).collect();
        for (h, k) in self.hidden.iter().zip(&self.leakage) {
            for (mi, s) in m.iter_mut().zip(&h.samples) {
                *mi += k * s;
            }
        }
        if let (true, Some(g)) = (mitigation_enabled, self.mitigation) {
            let band = bandpass(&m, self.rate, g.lo, g.hi);
            for (mi, b) in m.iter_mut().zip(&band) {
                *mi -= g.strength * b;
            }
        }
        Ok(m)
    }
}

/// Unit-variance band-limited Gaussian noise.
pub fn band_noise(n: usize, rate: f64, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b = bandpass(&white, rate, lo, hi);
    let sd = (b.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    b.into_iter().map(|v| v / sd).collect()
}

/// One construction of the synthetic suite with its known answer.
pub struct SuiteCase {
    pub sensor: SyntheticSensor,
    pub variable: String,
    pub decomposers: Vec<Box<dyn Decomposer + Send + Sync>>,
    pub expected: Classification,
}

/// Band-disjoint, band-overlapping, leak-free and mitigated sensors.
pub fn synthetic_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    let (rate, n) = (200.0, 2000);
    let noise = |s: u64| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        (0..n).map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>()
    };
    let low = band_noise(n, rate, 0.5, 5.0, seed);
    let high = band_noise(n, rate, 20.0, 30.0, seed + 1);
    let mid_a = band_noise(n, rate, 5.0, 10.0, seed + 2);
    let mid_b = band_noise(n, rate, 5.0, 10.0, seed + 3);
    let disjoint = BandpassDecomposer {
        intended: (0.0, 5.0),
        side: (20.0, 30.0),
    };
    let overlap = BandpassDecomposer {
        intended: (5.0, 10.0),
        side: (5.0, 10.0),
    };
    let var = |s: &[f64]| HiddenVar {
        name: "s_v1".into(),
        samples: s.to_vec(),
    };
    let stop_high = BandStop {
        lo: 20.0,
        hi: 30.0,
        strength: 1.0,
    };
    let stop_mid = BandStop {
        lo: 5.0,
        hi: 10.0,
        strength: 1.0,
    };
    let mk = |name: &str, s_int: &[f64], s_vi: &[f64], k: f64, g: Option<BandStop>, ns: u64| {
        SyntheticSensor::new(name, rate, s_int.to_vec(), vec![(var(s_vi), k)], noise(ns), g)
    };
    let boxed = |d: BandpassDecomposer| -> Vec<Box<dyn Decomposer + Send + Sync>> {
        vec![Box::new(d), Box::new(IdentityDecomposer)]
    };
    Ok(vec![
        SuiteCase {
            sensor: mk("no-leakage", &low, &high, 0.0, None, seed + 10)?,
            variable: "s_v1".into(),
            decomposers: boxed(disjoint),
            expected: Classification::NoChannel,
        },
        SuiteCase {
            sensor: mk("band-overlapping", &mid_a, &mid_b, 1.0, None, seed + 11)?,
            variable: "s_v1".into(),
            decomposers: boxed(overlap),
            expected: Classification::Inseparable,
        },
        SuiteCase {
            sensor: mk("band-overlapping-mitigated", &mid_a, &mid_b, 1.0, Some(stop_mid), seed + 12)?,
            variable: "s_v1".into(),
            decomposers: boxed(overlap),
            expected: Classification::Inseparable,
        },
        SuiteCase {
            sensor: mk("band-disjoint", &low, &high, 1.0, None, seed + 13)?,
            variable: "s_v1".into(),
            decomposers: boxed(disjoint),
            expected: Classification::Separable,
        },
        SuiteCase {
            sensor: mk(
                "band-disjoint-weak-mitigation",
                &low,
                &high,
                1.0,
                Some(BandStop {
                    strength: 0.05,
                    ..stop_high
                }),
                seed + 14,
            )?,
            variable: "s_v1".into(),
            decomposers: boxed(disjoint),
            expected: Classification::Separable,
        },
        SuiteCase {
            sensor: mk("band-disjoint-mitigated", &low, &high, 1.0, Some(stop_high), seed + 15)?,
            variable: "s_v1".into(),
            decomposers: boxed(disjoint),
            expected: Classification::Controllable,
        },
    ])
}

impl SuiteCase {
    pub fn run(&self, th: &Thresholds) -> Result<ChannelVerdict> {
        let ds: Vec<&dyn Decomposer> = self.decomposers.iter().map(|d| d.as_ref() as &dyn Decomposer).collect();
        analyze(&self.sensor, &self.variable, &ds, th)
    }
}

/// Video-to-motion virtual sensor functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirtualSensorKind {
    Ite,
    Rse,
}

impl FromStr for VirtualSensorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ite" => Ok(Self::Ite),
            "rse" => Ok(Self::Rse),
            _ => Err(Error::Unknown {
                kind: "virtual sensor",
                name: s.to_string(),
            }),
        }
    }
}

/// Runs a virtual sensor: ITE gives the offset transform series at the
/// frame rate, RSE the per-row trace at the row rate.
pub fn virtual_sensor(kind: VirtualSensorKind, video: &VideoClip) -> Result<MotionTrace> {
    match kind {
        VirtualSensorKind::Ite => ite_extract(video, IteMode::Translation)?.to_offset_trace(),
        VirtualSensorKind::Rse => Ok(rse_extract(video, &RseConfig::default())?.trace),
    }
}

/// Hand-held camera: the scene is the intended signal, hand motion the
/// hidden one, stabilization the mitigation. Signals live on the row clock
/// of the rolling shutter: `m_int` is the per-row mean intensity and the
/// decomposer's `m_vi` is the RSE row trace.
pub struct CameraSensor {
    pub camera: CameraConfig,
    pub scene: Scene,
    pub motion: MotionTrace,
    pub frames: usize,
    s_int: Vec<f64>,
    hidden: Vec<HiddenVar>,
}

impl CameraSensor {
    /// `motion` must be horizontal (`ty` ignored as zero on the row clock).
    pub fn new(camera: CameraConfig, scene: Scene, motion: MotionTrace, frames: usize) -> Result<Self> {
        camera.validate()?;
        let crop = scene.centered_crop(camera.frame_w, camera.frame_h);
        let profile: Vec<f64> = (0..camera.frame_h)
            .map(|r| crop.row(r).iter().map(|&v| v as f64).sum::<f64>() / camera.frame_w as f64)
            .collect();
        let pairs = frames.saturating_sub(1);
        let s_int: Vec<f64> = (0..pairs).flat_map(|_| profile.iter().copied()).collect();
        let tx = motion.axis_or_err("tx")?;
        let rate = motion.sample_rate();
        let truth = (0..pairs)
            .flat_map(|n| (0..camera.frame_h).map(move |r| (n, r)))
            .map(|(n, r)| {
                let t = n as f64 / camera.fps + r as f64 * camera.row_scan_period;
                crate::sigcore::interp_clamped(tx, (t - motion.t0()) * rate)
            })
            .collect();
        Ok(Self {
            camera,
            scene,
            motion,
            frames,
            s_int,
            hidden: vec![HiddenVar {
                name: "hand_motion".into(),
                samples: truth,
            }],
        })
    }

    pub fn render(&self, stabilization: bool) -> Result<VideoClip> {
        let cam = CameraConfig {
            stabilization,
            ..self.camera.clone()
        };
        render_frames(&self.scene, &self.motion, &cam, self.frames)
    }
}

impl Sensor for CameraSensor {
    fn name(&self) -> &str {
        "camera"
    }

    fn rate(&self) -> f64 {
        self.camera.row_rate()
    }

    fn intended(&self) -> &[f64] {
        &self.s_int
    }

    fn hidden(&self) -> &[HiddenVar] {
        &self.hidden
    }

    fn has_mitigation(&self) -> bool {
        true
    }

    /// The RSE row trace of the rendered clip: the motion-bearing part of
    /// the camera output on the row clock.
    fn measure(&self, mitigation_enabled: bool) -> Result<Vec<f64>> {
        let t = virtual_sensor(VirtualSensorKind::Rse, &self.render(mitigation_enabled)?)?;
        Ok(t.axis_or_err("tx_rows")?.to_vec())
    }
}

/// Splits camera output into per-row intensity and the RSE row trace.
pub struct CameraDecomposer<'a> {
    pub sensor: &'a CameraSensor,
}

impl Decomposer for CameraDecomposer<'_> {
    fn name(&self) -> String {
        "row-intensity/rse".into()
    }

    fn decompose(&self, _m: &[f64], _rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let clip = self.sensor.render(false)?;
        let h = clip.camera.frame_h;
        let m_int: Vec<f64> = clip.frames[..clip.len() - 1]
            .iter()
            .flat_map(|f| (0..h).map(move |r| f.row(r).iter().map(|&v| v as f64).sum::<f64>() / f.width() as f64))
            .collect();
        let m_vi = virtual_sensor(VirtualSensorKind::Rse, &clip)?
            .axis_or_err("tx_rows")?
            .to_vec();
        Ok((m_int, m_vi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{gen_tremor, SubjectModel};

    #[test]
    fn detection_examples() {
        let s = band_noise(2000, 200.0, 2.0, 20.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..2000)
            .map(|_| (0.1f64).sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>();
        let leaky: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| a + b).collect();
        assert!(detect_channel(&leaky, &s, 0.3, 10).unwrap().detected);
        let exact = detect_channel(&s, &s, 0.3, 10).unwrap();
        assert!((exact.score - 1.0).abs() < 1e-12);
        let other = band_noise(2000, 200.0, 2.0, 20.0, 9);
        let none = detect_channel(&other, &s, 0.3, 10).unwrap();
        assert!(!none.detected && none.score < 0.15, "{none:?}");
        assert!(detect_channel(&vec![1.0; 100], &s[..100], 0.3, 10).is_err());
    }

    #[test]
    fn identical_components_not_separable() {
        let s_int = band_noise(2000, 200.0, 0.5, 5.0, 3);
        let s_vi = band_noise(2000, 200.0, 20.0, 30.0, 4);
        let m: Vec<f64> = s_int.iter().zip(&s_vi).map(|(a, b)| a + b).collect();
        let v = test_separability("v", &m, &s_int, &s_vi, 200.0, &[&IdentityDecomposer], &Thresholds::default())
            .unwrap();
        assert_eq!(v.classification, Classification::Inseparable);
        assert!(v.note.contains("not separable by supplied decomposers"));
        assert!(v.lattice_holds());
    }

    #[test]
    fn suite_matches_construction() {
        let th = Thresholds::default();
        for case in synthetic_suite(7).unwrap() {
            let v = case.run(&th).unwrap();
            assert_eq!(v.classification, case.expected, "{}\n{}", case.sensor.name, v.report());
            assert!(v.lattice_holds());
        }
    }

    #[test]
    fn uncontrollable_without_mitigation() {
        let s = synthetic_suite(7).unwrap().remove(3);
        assert!(!s.sensor.has_mitigation());
        let v = s.run(&Thresholds::default()).unwrap();
        assert_eq!(v.classification, Classification::Separable);
        assert!(v.note.contains("no mitigation"));
    }

    #[test]
    fn inseparable_stays_inseparable_with_mitigation() {
        let s = synthetic_suite(7).unwrap().remove(2);
        assert!(s.sensor.has_mitigation());
        let v = s.run(&Thresholds::default()).unwrap();
        assert_eq!(v.classification, Classification::Inseparable);
    }

    #[test]
    fn report_lines_are_key_value() {
        let v = synthetic_suite(7).unwrap()[5].run(&Thresholds::default()).unwrap();
        let r = v.report();
        assert!(r.lines().all(|l| l.contains(": ")));
        assert!(r.contains("classification: controllable"));
    }

    #[test]
    fn duplicate_hidden_names_rejected() {
        let s = vec![0.0; 10];
        let h = HiddenVar {
            name: "x".into(),
            samples: s.clone(),
        };
        assert!(SyntheticSensor::new("d", 10.0, s.clone(), vec![(h.clone(), 1.0), (h, 1.0)], s, None).is_err());
    }

    #[test]
    fn virtual_sensor_dispatch() {
        assert!("sonar".parse::<VirtualSensorKind>().is_err());
        let cam = CameraConfig::rolling(32, 24, 30.0);
        let scene = Scene::for_camera(&cam, 2);
        let still = crate::simulate::analytic_motion(0.3, cam.row_rate(), |_| (0.0, 0.0)).unwrap();
        let clip = render_frames(&scene, &still, &cam, 5).unwrap();
        let ite = virtual_sensor(VirtualSensorKind::Ite, &clip).unwrap();
        assert!(ite.columns().iter().all(|c| c.iter().all(|v| v.abs() < 1e-9)));
        let rse = virtual_sensor(VirtualSensorKind::Rse, &clip).unwrap();
        assert_eq!(rse.len(), 4 * 24);
    }

    fn camera_sensor() -> CameraSensor {
        let cam = CameraConfig::rolling(48, 32, 30.0);
        let subj = SubjectModel {
            subject_id: "c".into(),
            dominant_freq: 9.0,
            band: (7.0, 11.0),
            amplitude_px: 2.5,
            harmonic_weights: vec![1.0],
            noise_level: 0.2,
            noise_seed: 4,
        };
        let m = gen_tremor(&subj, 1.5, cam.row_rate()).unwrap();
        let tx = m.axis("tx").unwrap().to_vec();
        let motion = MotionTrace::new(m.sample_rate(), 0.0, vec!["tx".into(), "ty".into()], vec![tx.clone(), vec![0.0; tx.len()]])
            .unwrap();
        let cam = CameraConfig {
            stabilization_strength: 1.0,
            ..cam
        };
        CameraSensor::new(cam.clone(), Scene::for_camera(&cam, 8), motion, 40).unwrap()
    }

    #[test]
    fn rse_passes_detection_on_tremor_video() {
        let s = camera_sensor();
        let m = s.measure(false).unwrap();
        let d = detect_channel(&m, &s.hidden()[0].samples, 0.5, 200).unwrap();
        assert!(d.detected, "{d:?}");
    }

    #[test]
    fn camera_with_stabilization_is_controllable() {
        let s = camera_sensor();
        let th = Thresholds {
            max_lag: 200,
            ..Default::default()
        };
        let d = CameraDecomposer { sensor: &s };
        let v = analyze(&s, "hand_motion", &[&d], &th).unwrap();
        assert_eq!(v.classification, Classification::Controllable, "{}", v.report());
        assert!(v.lattice_holds());
    }
}
