//! Randomized invariants shared by the `properties` and `acceptance` test
//! targets. Every property runs [`CASES`] cases drawn from one fixed seed.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::process::Command;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use virtimu::auth::{
    and_fuse, error_report, fusion_report, train_classifier, AuthDecision, Modality, SvmParams,
    Template,
};
use virtimu::experiment::{run_experiment, table_csv, error_csv, truth_corr, ExperimentConfig};
use virtimu::features::{extract_features, FeatureSchema, FeatureVector, Source, PER_AXIS};
use virtimu::register::{ite_extract, phase_corr_shift, IteMode};
use virtimu::rse::{demons_register, rse_extract, DemonsConfig, RseConfig};
use virtimu::sidechan::{
    analyze, band_noise, detect_channel, BandStop, BandpassDecomposer, Classification,
    Decomposer, HiddenVar, IdentityDecomposer, Sensor, SyntheticSensor, Thresholds,
};
use virtimu::sigcore::{
    pearson_corr, power_spectrum, resample, windowed_variance, MotionTrace,
};
use virtimu::simulate::{analytic_motion, render_frames, Scene, SubjectModel};
use virtimu::video::{CameraConfig, Frame, Shutter, VideoClip};

pub const CASES: u32 = 100;
const SEED: [u8; 32] = *b"virtimu-property-corpus-seed-v01";

pub struct Property {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        max_shrink_iters: 64,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &SEED));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

fn ok<T>(r: virtimu::Result<T>) -> Result<T, TestCaseError> {
    r.map_err(|e| fail(e.to_string()))
}

fn tone_motion(duration: f64, rate: f64, f: f64, amp: f64, phase: f64) -> MotionTrace {
    analytic_motion(duration, rate, |t| (amp * (TAU * f * t + phase).sin(), 0.5 * amp * (TAU * f * t).cos()))
        .expect("motion")
}

fn global_cam(w: usize, h: usize) -> CameraConfig {
    CameraConfig {
        exposure_time: 0.0,
        ..CameraConfig::global(w, h, 30.0)
    }
}

fn render_constant(scene: &Scene, cam: &CameraConfig, tx: f64, ty: f64) -> Frame {
    let m = analytic_motion(0.2, 1000.0, |_| (tx, ty)).unwrap();
    render_frames(scene, &m, cam, 1).unwrap().frames.remove(0)
}

// ---- sigcore ----

fn pair_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(-1e3f64..1e3, n),
        )
    })
}

pub fn pearson_symmetric_and_bounded() -> Result<(), String> {
    check(pair_strategy(), |(a, b)| {
        let ab = pearson_corr(&a, &b);
        let ba = pearson_corr(&b, &a);
        match (ab, ba) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
                prop_assert!(x.abs() <= 1.0);
            }
            (Err(_), Err(_)) => {}
            (x, y) => return Err(fail(format!("asymmetric outcome {x:?} / {y:?}"))),
        }
        Ok(())
    })
}

pub fn pearson_affine_invariant() -> Result<(), String> {
    check((pair_strategy(), 0.01f64..100.0, -1e3f64..1e3), |((a, b), alpha, beta)| {
        let r = ok(pearson_corr(&a, &b))?;
        let mapped: Vec<f64> = a.iter().map(|v| alpha * v + beta).collect();
        let r2 = ok(pearson_corr(&mapped, &b))?;
        prop_assert!((r - r2).abs() <= 1e-9, "{r} vs {r2}");
        Ok(())
    })
}

fn trace_strategy() -> impl Strategy<Value = MotionTrace> {
    (1usize..4, 2usize..300, 1.0f64..5000.0, -10.0f64..10.0).prop_flat_map(|(axes, n, rate, t0)| {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, n), axes).prop_map(move |cols| {
            let names = (0..cols.len()).map(|i| format!("a{i}")).collect();
            MotionTrace::new(rate, t0, names, cols).unwrap()
        })
    })
}

pub fn resample_same_rate_is_identity() -> Result<(), String> {
    check(trace_strategy(), |t| {
        let r = ok(resample(&t, t.sample_rate()))?;
        prop_assert_eq!(r, t);
        Ok(())
    })
}

pub fn parseval() -> Result<(), String> {
    let s = (8usize..2048, 1.0f64..10_000.0)
        .prop_flat_map(|(n, rate)| (prop::collection::vec(-50.0f64..50.0, n), Just(rate)));
    check(s, |(x, rate)| {
        let p = ok(power_spectrum(&x, rate))?;
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos()).collect();
        let v = x.iter().zip(&w).map(|(a, b)| ((a - mean) * b).powi(2)).sum::<f64>() / w.iter().map(|b| b * b).sum::<f64>();
        prop_assert!((windowed_variance(&x) - v).abs() <= 1e-9 * v.max(1e-300));
        let err = (p.total_power() - v).abs();
        prop_assert!(err <= 1e-6 * v.max(1e-300), "spectrum {} vs variance {v}", p.total_power());
        Ok(())
    })
}

// ---- simulate ----

pub fn render_deterministic() -> Result<(), String> {
    check((any::<u64>(), 0.5f64..20.0, 0.0f64..2.0), |(seed, f, amp)| {
        let cam = CameraConfig::rolling(24, 16, 30.0);
        let scene = Scene::for_camera(&cam, seed);
        let m = tone_motion(0.2, cam.row_rate(), f, amp, 0.3);
        let a = ok(render_frames(&scene, &m, &cam, 3))?;
        let b = ok(render_frames(&Scene::for_camera(&cam, seed), &m, &cam, 3))?;
        prop_assert!(a.frames == b.frames);
        Ok(())
    })
}

pub fn global_integer_shift_is_crop() -> Result<(), String> {
    check((any::<u64>(), -4i32..=4, -4i32..=4), |(seed, tx, ty)| {
        let cam = global_cam(24, 16);
        let scene = Scene::for_camera(&cam, seed);
        let f = render_constant(&scene, &cam, tx as f64, ty as f64);
        let ox = ((scene.width() - 24) / 2) as i32 - tx;
        let oy = ((scene.height() - 16) / 2) as i32 - ty;
        let mut expect = Frame::from_fn(24, 16, |x, y| {
            scene.data()[(oy + y as i32) as usize * scene.width() + (ox + x as i32) as usize]
        });
        expect.quantize();
        prop_assert!(f == expect);
        Ok(())
    })
}

pub fn rolling_constant_motion_matches_global() -> Result<(), String> {
    check((any::<u64>(), -3.0f64..3.0, -3.0f64..3.0), |(seed, tx, ty)| {
        let rolling = CameraConfig::rolling(20, 14, 30.0);
        let global = CameraConfig {
            shutter: Shutter::Global,
            ..rolling.clone()
        };
        let scene = Scene::for_camera(&rolling, seed);
        let m = ok(analytic_motion(0.2, rolling.row_rate(), |_| (tx, ty)))?;
        let a = ok(render_frames(&scene, &m, &rolling, 2))?;
        let b = ok(render_frames(&scene, &m, &global, 2))?;
        prop_assert!(a.frames == b.frames);
        Ok(())
    })
}

pub fn full_stabilization_cancels_slow_motion() -> Result<(), String> {
    // The stabilizer filters the trace mirrored to 2n samples, so tones on
    // that grid, centred on the mirror point, are exactly band-limited.
    const RATE: f64 = 1000.0;
    const N: usize = 1001;
    let bin = RATE / (2 * N) as f64;
    check((any::<u64>(), 1usize..=30, 1usize..=30, 0.0f64..3.0), |(seed, k1, k2, amp)| {
        let cam = CameraConfig {
            stabilization: true,
            stabilization_strength: 1.0,
            ..CameraConfig::global(32, 24, 30.0)
        };
        let still = CameraConfig {
            stabilization: false,
            ..cam.clone()
        };
        let scene = Scene::for_camera(&cam, seed);
        let phase = |k: usize, t: f64| TAU * k as f64 * bin * (t + 0.5 / RATE);
        let m = ok(analytic_motion((N - 1) as f64 / RATE, RATE, |t| {
            (amp * phase(k1, t).cos(), 0.6 * amp * phase(k2, t).cos())
        }))?;
        prop_assert_eq!(m.len(), N);
        let zero = ok(analytic_motion((N - 1) as f64 / RATE, RATE, |_| (0.0, 0.0)))?;
        let a = ok(render_frames(&scene, &m, &cam, 6))?;
        let b = ok(render_frames(&scene, &zero, &still, 6))?;
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            let e = fa.mean_abs_diff(fb);
            prop_assert!(e < 1e-3, "mean abs error {e}");
        }
        Ok(())
    })
}

// ---- register ----

pub fn phase_corr_antisymmetric() -> Result<(), String> {
    check((any::<u64>(), -3.0f64..3.0, -3.0f64..3.0), |(seed, dx, dy)| {
        let cam = global_cam(32, 32);
        let scene = Scene::for_camera(&cam, seed);
        let a = render_constant(&scene, &cam, 0.0, 0.0);
        let b = render_constant(&scene, &cam, dx, dy);
        let ab = ok(phase_corr_shift(&a, &b))?;
        let ba = ok(phase_corr_shift(&b, &a))?;
        prop_assert!((ab.dx + ba.dx).abs() <= 0.5 && (ab.dy + ba.dy).abs() <= 0.5, "{ab:?} {ba:?}");
        Ok(())
    })
}

pub fn ite_integer_composition_exact() -> Result<(), String> {
    let s = (any::<u64>(), prop::collection::vec((-4i32..=4, -4i32..=4), 2..6));
    check(s, |(seed, shifts)| {
        let cam = global_cam(64, 64);
        let scene = Scene::for_camera(&cam, seed);
        let frames = shifts
            .iter()
            .map(|&(x, y)| render_constant(&scene, &cam, x as f64, y as f64))
            .collect();
        let clip = ok(VideoClip::new(cam.clone(), frames))?;
        let t = ok(ok(ite_extract(&clip, IteMode::Translation))?.to_trace())?;
        let (m02, m12) = (t.axis("m02").unwrap(), t.axis("m12").unwrap());
        for (n, &(x, y)) in shifts.iter().enumerate() {
            let (ex, ey) = ((x - shifts[0].0) as f64, (y - shifts[0].1) as f64);
            prop_assert!((m02[n] - ex).abs() < 1e-6 && (m12[n] - ey).abs() < 1e-6, "frame {n}: ({}, {}) vs ({ex}, {ey})", m02[n], m12[n]);
        }
        Ok(())
    })
}

fn noisy(f: &Frame, sigma: f64, seed: u64) -> Frame {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    let data = f
        .data()
        .iter()
        .map(|v| if sigma > 0.0 { v + n.sample(&mut rng) as f32 } else { *v })
        .collect();
    Frame::new(f.width(), f.height(), data).unwrap()
}

pub fn peak_falls_with_noise() -> Result<(), String> {
    check((any::<u64>(), -2.0f64..2.0), |(seed, dx)| {
        let cam = global_cam(32, 32);
        let scene = Scene::for_camera(&cam, seed);
        let a = render_constant(&scene, &cam, 0.0, 0.0);
        let b = render_constant(&scene, &cam, dx, 0.5);
        let mut prev = f64::INFINITY;
        for sigma in [0.0, 0.01, 0.03, 0.1] {
            let mean = (0..20)
                .map(|k| {
                    let s = seed.wrapping_add(k);
                    phase_corr_shift(&noisy(&a, sigma, s), &noisy(&b, sigma, s ^ 0x5555)).map(|r| r.peak)
                })
                .sum::<virtimu::Result<f64>>()
                .map_err(|e| fail(e.to_string()))?
                / 20.0;
            prop_assert!(mean < prev, "sigma {sigma}: mean peak {mean} after {prev}");
            prev = mean;
        }
        Ok(())
    })
}

// ---- rse ----

pub fn demons_identical_frames_zero_field() -> Result<(), String> {
    check((any::<u64>(), 12usize..40, 10usize..30), |(seed, w, h)| {
        let scene = Scene::textured(w * 2, h * 2, seed);
        let f = scene.centered_crop(w, h);
        prop_assume!(!f.is_constant());
        let d = ok(demons_register(&f, &f, &DemonsConfig::default()))?;
        prop_assert!(d.max_abs() < 1e-6, "max |d| = {}", d.max_abs());
        Ok(())
    })
}

pub fn rse_length_and_row_clock() -> Result<(), String> {
    check((any::<u64>(), 2usize..6, 8usize..20, 1.0f64..12.0), |(seed, n, h, f)| {
        let cam = CameraConfig::rolling(16, h, 30.0);
        let scene = Scene::for_camera(&cam, seed);
        let m = tone_motion(0.3, cam.row_rate(), f, 1.0, 0.1);
        let clip = ok(render_frames(&scene, &m, &cam, n))?;
        let r = ok(rse_extract(&clip, &RseConfig::default()))?;
        prop_assert_eq!(r.trace.len(), (n - 1) * h);
        prop_assert_eq!(r.sample_times.len(), (n - 1) * h);
        let ts = &r.sample_times;
        prop_assert!(ts.windows(2).all(|w| w[1] > w[0]));
        for k in 0..n - 1 {
            for row in 0..h {
                let expect = ts[0] + k as f64 / cam.fps + row as f64 * cam.row_scan_period;
                prop_assert!((ts[k * h + row] - expect).abs() < 1e-9);
            }
        }
        Ok(())
    })
}

fn tx_corr(virt: &[f64], times: &[f64], motion: &MotionTrace) -> Result<f64, TestCaseError> {
    if virt.iter().all(|v| *v == virt[0]) {
        return Ok(0.0);
    }
    Ok(ok(truth_corr(virt, times, motion, 0.1))?.1)
}

// RSE sees x(t + 1/fps) - x(t), so tones near multiples of the frame rate
// vanish from it; the bands below keep |sin(pi f / fps)| above 0.4.
fn above_nyquist_tone() -> impl Strategy<Value = f64> {
    prop_oneof![18.0f64..25.0, 35.0f64..55.0]
}

pub fn rse_recovers_tones_ite_misses() -> Result<(), String> {
    check((any::<u64>(), above_nyquist_tone(), 0.0f64..TAU), |(seed, f, phase)| {
        let cam = CameraConfig::rolling(48, 32, 30.0);
        let scene = Scene::for_camera(&cam, seed);
        let m = tone_motion(1.1, cam.row_rate(), f, 1.5, phase);
        let clip = ok(render_frames(&scene, &m, &cam, 30))?;
        let r = ok(rse_extract(&clip, &RseConfig::default()))?;
        let rse = tx_corr(r.trace.axis("tx_rows").unwrap(), &r.sample_times, &m)?;
        let ite = ok(ok(ite_extract(&clip, IteMode::Translation))?.to_offset_trace())?;
        let times: Vec<f64> = (0..clip.len()).map(|i| clip.frame_time(i)).collect();
        let ite_c = tx_corr(ite.axis("m02").unwrap(), &times, &m)?;
        prop_assert!(rse >= 0.7 && ite_c < 0.5, "f={f}: rse {rse}, ite {ite_c}");
        Ok(())
    })
}

pub fn exposure_blur_attenuates() -> Result<(), String> {
    check((any::<u64>(), 35.0f64..55.0), |(seed, f)| {
        let mut prev = f64::INFINITY;
        for exposure in [0.001, 0.008, 0.016] {
            let cam = CameraConfig {
                exposure_time: exposure,
                ..CameraConfig::rolling(48, 32, 30.0)
            };
            let scene = Scene::for_camera(&cam, seed);
            let m = tone_motion(0.5, cam.row_rate(), f, 1.5, 0.0);
            let clip = ok(render_frames(&scene, &m, &cam, 12))?;
            let r = ok(rse_extract(&clip, &RseConfig::default()))?;
            let x = r.trace.axis("tx_rows").unwrap();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
            prop_assert!(sd < prev, "f={f} exposure {exposure}: amplitude {sd} after {prev}");
            prev = sd;
        }
        Ok(())
    })
}

// ---- features ----

fn schema_trace(source: Source, duration: f64, rate: f64, seed: u64, scale: f64) -> MotionTrace {
    let schema = FeatureSchema::default_for(source);
    let n = (duration * rate) as usize;
    let cols = schema
        .axes
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let noise = band_noise(n, rate, 0.5, rate.min(80.0) / 2.5, seed + k as u64);
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    scale * ((TAU * (3.0 + k as f64) * t).sin() + 0.4 * noise[i] + 0.2)
                })
                .collect()
        })
        .collect();
    MotionTrace::new(rate, 0.0, schema.axes.clone(), cols).unwrap()
}

fn source_strategy() -> impl Strategy<Value = Source> {
    prop_oneof![Just(Source::Physical), Just(Source::Ite), Just(Source::Rse)]
}

pub fn feature_length_fixed() -> Result<(), String> {
    check((source_strategy(), 2.0f64..6.0, 30.0f64..3000.0, any::<u32>()), |(src, d, rate, seed)| {
        let schema = FeatureSchema::default_for(src);
        let fv = ok(extract_features(&schema_trace(src, d, rate, seed as u64, 1.0), &schema))?;
        prop_assert_eq!(fv.values.len(), PER_AXIS * schema.axes.len());
        Ok(())
    })
}

pub fn feature_amplitude_scaling() -> Result<(), String> {
    // mean, std, rms, peak_to_peak, mean_abs_diff scale; the rest do not.
    const SCALED: [usize; 5] = [0, 1, 2, 6, 7];
    check((source_strategy(), 0.1f64..10.0, any::<u32>()), |(src, alpha, seed)| {
        let schema = FeatureSchema::default_for(src);
        let rate = src.canonical_rate();
        let a = ok(extract_features(&schema_trace(src, 3.0, rate, seed as u64, 1.0), &schema))?;
        let b = ok(extract_features(&schema_trace(src, 3.0, rate, seed as u64, alpha), &schema))?;
        for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            let j = i % PER_AXIS;
            let expect = if SCALED.contains(&j) { alpha * x } else { *x };
            prop_assert!((y - expect).abs() <= 1e-9 * expect.abs().max(1.0), "feature {i}: {y} vs {expect}");
        }
        Ok(())
    })
}

pub fn features_deterministic() -> Result<(), String> {
    check((source_strategy(), any::<u32>()), |(src, seed)| {
        let schema = FeatureSchema::default_for(src);
        let t = schema_trace(src, 2.5, src.canonical_rate(), seed as u64, 1.0);
        prop_assert_eq!(ok(extract_features(&t, &schema))?, ok(extract_features(&t.clone(), &schema))?);
        Ok(())
    })
}

// ---- auth ----

fn decision(id: String, accept: bool, m: Modality) -> AuthDecision {
    AuthDecision {
        video_id: id,
        accept,
        score: if accept { 1.0 } else { -1.0 },
        modality: m,
        degenerate: false,
    }
}

fn decisions_strategy() -> impl Strategy<Value = Vec<(bool, bool, bool)>> {
    prop::collection::vec(any::<(bool, bool, bool)>(), 2..80)
        .prop_filter("both classes", |v| v.iter().any(|d| d.2) && v.iter().any(|d| !d.2))
}

pub fn fusion_containment() -> Result<(), String> {
    check(decisions_strategy(), |ds| {
        let v: Vec<_> = ds.iter().enumerate().map(|(i, d)| decision(format!("v{i}"), d.0, Modality::Visual)).collect();
        let t: Vec<_> = ds.iter().enumerate().map(|(i, d)| decision(format!("v{i}"), d.1, Modality::Tremor)).collect();
        let legit: Vec<bool> = ds.iter().map(|d| d.2).collect();
        let r = ok(fusion_report(&v, &t, &legit, 1.0, 1.0))?;
        let m = &r.multimodal;
        prop_assert!(m.fpr <= r.unimodal.fpr.min(r.tremor.fpr));
        prop_assert!(m.fnr >= r.unimodal.fnr.max(r.tremor.fnr));
        prop_assert!(r.containment_holds());
        for (a, b) in v.iter().zip(&t) {
            prop_assert_eq!(ok(and_fuse(a, b))?.accept, a.accept && b.accept);
        }
        Ok(())
    })
}

pub fn error_rates_match_counting() -> Result<(), String> {
    check((decisions_strategy(), 0.0f64..5.0, 0.0f64..5.0), |(ds, c1, c2)| {
        let pairs: Vec<_> = ds
            .iter()
            .enumerate()
            .map(|(i, d)| (decision(format!("v{i}"), d.0, Modality::Tremor), d.2))
            .collect();
        let r = ok(error_report(&pairs, c1, c2))?;
        let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
        for (d, legit) in &pairs {
            if *legit {
                p += 1;
                tp += d.accept as usize;
            } else {
                n += 1;
                tn += !d.accept as usize;
            }
        }
        let (fpr, fnr) = ((n - tn) as f64 / n as f64, (p - tp) as f64 / p as f64);
        prop_assert_eq!(r.fpr, fpr);
        prop_assert_eq!(r.fnr, fnr);
        prop_assert_eq!(r.tpr, tp as f64 / p as f64);
        prop_assert_eq!(r.tnr, tn as f64 / n as f64);
        prop_assert_eq!(r.e, c1 * fpr + c2 * fnr);
        Ok(())
    })
}

fn toy_sets(seed: u64, classes: usize, per: usize, dim: usize) -> Vec<(String, Vec<FeatureVector>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..classes)
        .map(|c| {
            let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let vs = (0..per)
                .map(|_| FeatureVector {
                    values: center.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect(),
                    schema_id: "toy".into(),
                    source: Source::Physical,
                })
                .collect();
            (format!("c{c}"), vs)
        })
        .collect()
}

fn probes(seed: u64, dim: usize) -> Vec<FeatureVector> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    (0..10)
        .map(|_| FeatureVector {
            values: (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect(),
            schema_id: "toy".into(),
            source: Source::Physical,
        })
        .collect()
}

pub fn ovo_order_invariant() -> Result<(), String> {
    check((any::<u64>(), 0usize..6), |(seed, perm)| {
        let sets = toy_sets(seed, 3, 6, 3);
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let shuffled: Vec<_> = orders[perm].iter().map(|&i| sets[i].clone()).collect();
        let p = SvmParams::default();
        let a = ok(train_classifier(&sets, &p, 3, 1))?.model;
        let b = ok(train_classifier(&shuffled, &p, 3, 1))?.model;
        for x in probes(seed, 3) {
            prop_assert_eq!(ok(a.predict(&x.values))?, ok(b.predict(&x.values))?);
        }
        Ok(())
    })
}

pub fn normalization_affine_invariant() -> Result<(), String> {
    check((any::<u64>(), 0usize..4, 0.1f64..10.0, -5.0f64..5.0), |(seed, j, alpha, beta)| {
        let sets = toy_sets(seed, 3, 6, 4);
        let map = |fv: &FeatureVector| {
            let mut g = fv.clone();
            g.values[j] = alpha * g.values[j] + beta;
            g
        };
        let mapped: Vec<_> = sets.iter().map(|(s, v)| (s.clone(), v.iter().map(map).collect())).collect();
        let p = SvmParams::default();
        let ta = ok(Template::new(ok(train_classifier(&sets, &p, 3, 1))?.model, "c0", "0"))?;
        let tb = ok(Template::new(ok(train_classifier(&mapped, &p, 3, 1))?.model, "c0", "0"))?;
        for x in probes(seed, 4) {
            let da = ok(ta.verify("x", &x))?;
            let db = ok(tb.verify("x", &map(&x)))?;
            prop_assert_eq!(da.accept, db.accept);
        }
        Ok(())
    })
}

// ---- sidechan ----

fn band() -> impl Strategy<Value = (f64, f64)> {
    (1.0f64..80.0, 2.0f64..15.0).prop_map(|(lo, w)| (lo, (lo + w).min(99.0)))
}

pub fn lattice_never_violated() -> Result<(), String> {
    let s = (any::<u32>(), band(), band(), 0.0f64..1.5, prop::option::of((band(), 0.0f64..1.0)), band(), band());
    check(s, |(seed, bi, bs, k, mit, di, ds)| {
        let (rate, n) = (200.0, 1000);
        let seed = seed as u64;
        let s_int = band_noise(n, rate, bi.0, bi.1, seed);
        let s_vi = band_noise(n, rate, bs.0, bs.1, seed + 1);
        let noise: Vec<f64> = band_noise(n, rate, 1.0, 99.0, seed + 2).iter().map(|v| 0.1 * v).collect();
        let g = mit.map(|((lo, hi), strength)| BandStop { lo, hi, strength });
        let hv = HiddenVar {
            name: "h".into(),
            samples: s_vi,
        };
        let sensor = ok(SyntheticSensor::new("random", rate, s_int, vec![(hv, k)], noise, g))?;
        let d = BandpassDecomposer {
            intended: di,
            side: ds,
        };
        let decs: [&dyn Decomposer; 2] = [&d, &IdentityDecomposer];
        let v = ok(analyze(&sensor, "h", &decs, &Thresholds::default()))?;
        prop_assert!(v.lattice_holds(), "{}", v.report());
        let expect = match (v.detected, v.separable, v.controllable) {
            (false, _, _) => Classification::NoChannel,
            (true, false, _) => Classification::Inseparable,
            (true, true, false) => Classification::Separable,
            (true, true, true) => Classification::Controllable,
        };
        prop_assert_eq!(v.classification, expect);
        Ok(())
    })
}

pub fn detection_symmetric() -> Result<(), String> {
    check((pair_strategy(), 0usize..8), |((a, b), lag)| {
        prop_assume!(a.len() > 2 * lag + 2);
        let x = detect_channel(&a, &b, 0.3, lag);
        let y = detect_channel(&b, &a, 0.3, lag);
        match (x, y) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.score - y.score).abs() <= 1e-12, "{x:?} {y:?}");
                prop_assert_eq!(x.detected, y.detected);
                prop_assert_eq!(x.lag, -y.lag);
            }
            (Err(_), Err(_)) => {}
            (x, y) => return Err(fail(format!("{x:?} / {y:?}"))),
        }
        Ok(())
    })
}

pub fn full_mitigation_lowers_leakage() -> Result<(), String> {
    check((any::<u32>(), 0.5f64..1.5), |(seed, k)| {
        let (rate, n) = (200.0, 2000);
        let seed = seed as u64;
        let s_vi = band_noise(n, rate, 20.0, 30.0, seed + 1);
        let hv = HiddenVar {
            name: "h".into(),
            samples: s_vi.clone(),
        };
        let noise: Vec<f64> = band_noise(n, rate, 1.0, 99.0, seed + 2).iter().map(|v| 0.1 * v).collect();
        let g = BandStop {
            lo: 20.0,
            hi: 30.0,
            strength: 1.0,
        };
        let sensor = ok(SyntheticSensor::new(
            "mitigated",
            rate,
            band_noise(n, rate, 0.5, 5.0, seed),
            vec![(hv, k)],
            noise,
            Some(g),
        ))?;
        let th = Thresholds::default();
        let off = ok(detect_channel(&ok(sensor.measure(false))?, &s_vi, th.alpha, th.max_lag))?.score;
        let on = ok(detect_channel(&ok(sensor.measure(true))?, &s_vi, th.alpha, th.max_lag))?.score;
        prop_assert!(off - on >= th.delta, "off {off} on {on}");
        Ok(())
    })
}

// ---- cli ----

pub fn tiny_config(seed: u64) -> ExperimentConfig {
    let subject = |id: &str, f: f64| SubjectModel {
        subject_id: id.into(),
        dominant_freq: f,
        band: (f - 1.0, f + 1.0),
        amplitude_px: 1.5,
        harmonic_weights: vec![1.0],
        noise_level: 0.3,
        noise_seed: 0,
    };
    ExperimentConfig {
        seed,
        duration_s: 2.2,
        legit_videos: 5,
        imposter_videos_per_imposter: 2,
        folds: 2,
        camera: CameraConfig {
            exposure_samples: 2,
            ..CameraConfig::rolling(24, 16, 30.0)
        },
        subjects: vec![subject("a", 5.0), subject("b", 9.0), subject("c", 13.0)],
        ..Default::default()
    }
}

pub fn evaluation_deterministic() -> Result<(), String> {
    check(any::<u64>(), |seed| {
        let cfg = ExperimentConfig {
            methods: vec![Source::Physical],
            ..tiny_config(seed)
        };
        let a = ok(run_experiment(&cfg))?;
        let b = ok(run_experiment(&cfg.clone()))?;
        prop_assert_eq!(table_csv(&a), table_csv(&b));
        prop_assert_eq!(error_csv(&a), error_csv(&b));
        Ok(())
    })
}

fn invocation() -> impl Strategy<Value = Vec<String>> {
    let missing = "[a-z]{4,10}".prop_map(|s| format!("/nonexistent/{s}"));
    prop_oneof![
        missing.clone().prop_map(|p| vec!["extract".into(), "--method".into(), "rse".into(), p]),
        missing.clone().prop_map(|p| vec!["features".into(), "--source".into(), "ite".into(), p]),
        missing.clone().prop_map(|p| vec!["evaluate".into(), "--dataset".into(), p]),
        missing.clone().prop_map(|p| vec!["--config".into(), p, "simulate".into()]),
        missing.clone().prop_map(|p| vec!["verify".into(), "--template".into(), p.clone(), "--trace".into(), p]),
        "[a-z]{3,8}".prop_map(|m| vec!["extract".into(), "--method".into(), format!("x{m}"), "dir".into()]),
        "[a-z]{3,8}".prop_map(|c| vec![format!("no{c}")]),
        "[a-z]{2,6}".prop_map(|s| vec!["--seed".into(), s, "evaluate".into()]),
        missing.prop_map(|p| vec!["plot".into(), format!("x={p}")]),
    ]
}

pub fn cli_errors_are_one_line() -> Result<(), String> {
    check(invocation(), |args| {
        let out = Command::new(env!("CARGO_BIN_EXE_virtimu"))
            .args(&args)
            .output()
            .map_err(|e| fail(e.to_string()))?;
        let err = String::from_utf8_lossy(&out.stderr);
        prop_assert!(!out.status.success(), "{args:?} succeeded");
        prop_assert_eq!(err.lines().count(), 1, "{:?}: {}", args, err);
        prop_assert!(err.starts_with("error["), "{}", err);
        Ok(())
    })
}

pub fn all() -> Vec<Property> {
    macro_rules! p {
        ($($f:ident),* $(,)?) => { vec![$(Property { name: stringify!($f), run: $f }),*] };
    }
    p![
        pearson_symmetric_and_bounded,
        pearson_affine_invariant,
        resample_same_rate_is_identity,
        parseval,
        render_deterministic,
        global_integer_shift_is_crop,
        rolling_constant_motion_matches_global,
        full_stabilization_cancels_slow_motion,
        phase_corr_antisymmetric,
        ite_integer_composition_exact,
        peak_falls_with_noise,
        demons_identical_frames_zero_field,
        rse_length_and_row_clock,
        rse_recovers_tones_ite_misses,
        exposure_blur_attenuates,
        feature_length_fixed,
        feature_amplitude_scaling,
        features_deterministic,
        fusion_containment,
        error_rates_match_counting,
        ovo_order_invariant,
        normalization_affine_invariant,
        lattice_never_violated,
        detection_symmetric,
        full_mitigation_lowers_leakage,
        evaluation_deterministic,
        cli_errors_are_one_line,
    ]
}
