//! Synthetic tremor-authentication experiment: dataset layout, per-clip
//! synthesis and extraction, and the Table-1 style evaluation.
//!
//! Each subject takes the legitimate role in turn. Legitimate clips carry
//! the subject's own tremor; imposter clips claim the subject's identity
//! while carrying another subject's tremor. Clip seeds do not depend on the
//! stabilization setting, so both settings see the same physical motion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::auth::{
    fusion_report, train_classifier, visual_stub, Attack, AuthDecision, FusionReport, Kernel,
    SvmParams, Template, VisualStub,
};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureSchema, FeatureVector, Source};
use crate::register::{ite_extract_with, IteConfig};
use crate::rse::{rse_extract, DemonsConfig, RseConfig};
use crate::sigcore::{interp_clamped, max_lag_corr, MotionTrace};
use crate::simulate::{gen_tremor, render_frames, simulate_physical_imu, Scene, SubjectModel};
use crate::video::{CameraConfig, VideoClip};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Clip length, seconds.
    pub duration_s: f64,
    pub legit_videos: usize,
    pub imposter_videos_per_imposter: usize,
    /// Share of each subject's legitimate clips used for enrollment.
    pub train_fraction: f64,
    pub folds: usize,
    pub kernel: Kernel,
    pub c1: f64,
    pub c2: f64,
    pub methods: Vec<Source>,
    /// Stabilization settings to evaluate, `"off"` and/or `"on"`.
    pub stabilization: Vec<String>,
    pub imu_rate_hz: f64,
    /// Accelerometer noise, pixels/s^2.
    pub imu_noise_std: f64,
    /// Per-clip uniform jitter of the dominant frequency, Hz.
    pub freq_jitter_hz: f64,
    /// Per-clip uniform relative jitter of the amplitude.
    pub amplitude_jitter: f64,
    /// Bound of the lag search against ground truth, seconds.
    pub max_lag_s: f64,
    pub camera: CameraConfig,
    pub ite: IteConfig,
    pub demons: DemonsConfig,
    pub visual: VisualStub,
    pub subjects: Vec<SubjectModel>,
}

fn subject(id: &str, f: f64, amplitude: f64) -> SubjectModel {
    SubjectModel {
        subject_id: id.to_string(),
        dominant_freq: f,
        band: (f - 1.0, f + 1.0),
        amplitude_px: amplitude,
        harmonic_weights: vec![1.0],
        noise_level: 0.3,
        noise_seed: 0,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            duration_s: 3.0,
            legit_videos: 30,
            imposter_videos_per_imposter: 6,
            train_fraction: 0.8,
            folds: 5,
            kernel: Kernel::Quadratic,
            c1: 1.0,
            c2: 1.0,
            methods: Source::ALL.to_vec(),
            stabilization: vec!["off".into(), "on".into()],
            imu_rate_hz: 408.0,
            imu_noise_std: 200.0,
            freq_jitter_hz: 0.4,
            amplitude_jitter: 0.2,
            max_lag_s: 0.1,
            camera: CameraConfig::rolling(64, 48, 30.0),
            ite: IteConfig::default(),
            demons: DemonsConfig::default(),
            visual: VisualStub::default(),
            subjects: vec![
                subject("s1", 11.5, 0.6),
                subject("s2", 18.5, 0.6),
                subject("s3", 12.5, 0.65),
                subject("s4", 17.5, 0.65),
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(Error::Config("no subjects configured".into()));
        }
        for (i, s) in self.subjects.iter().enumerate() {
            s.validate()?;
            if self.subjects[..i].iter().any(|o| o.subject_id == s.subject_id) {
                return Err(Error::Config(format!("duplicate subject id '{}'", s.subject_id)));
            }
            if s.subject_id.is_empty() || !s.subject_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                return Err(Error::Config(format!(
                    "subject id '{}' must be ASCII letters, digits or '-'",
                    s.subject_id
                )));
            }
        }
        if self.legit_videos == 0 || self.imposter_videos_per_imposter == 0 {
            return Err(Error::Config("video counts must be positive".into()));
        }
        if !(self.duration_s > 0.0) || !(self.max_lag_s > 0.0) {
            return Err(Error::Config("durations must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {}", self.train_fraction)));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::Config("costs must be non-negative".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        for s in &self.stabilization {
            parse_stabilization(s)?;
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) || self.freq_jitter_hz < 0.0 {
            return Err(Error::Config("jitter out of range".into()));
        }
        self.camera.validate()?;
        Ok(())
    }

    pub fn stabilization_settings(&self) -> Result<Vec<bool>> {
        self.stabilization.iter().map(|s| parse_stabilization(s)).collect()
    }

    fn subject_by_id(&self, id: &str) -> Result<&SubjectModel> {
        self.subjects
            .iter()
            .find(|s| s.subject_id == id)
            .ok_or_else(|| Error::Unknown {
                kind: "subject",
                name: id.to_string(),
            })
    }

    /// Enrollment clips per subject.
    pub fn train_count(&self) -> usize {
        ((self.legit_videos as f64 * self.train_fraction).round() as usize).clamp(1, self.legit_videos)
    }

    /// Camera for one stabilization setting.
    pub fn camera_for(&self, stabilization: bool) -> CameraConfig {
        CameraConfig {
            stabilization,
            ..self.camera.clone()
        }
    }
}

pub fn parse_stabilization(s: &str) -> Result<bool> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(Error::Config(format!("stabilization '{s}' is not on/off"))),
    }
}

pub fn stabilization_label(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

/// One clip of the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipSpec {
    pub id: String,
    /// Identity the clip claims.
    pub claimed: String,
    /// Subject whose tremor moves the camera.
    pub actor: String,
    pub legit: bool,
    pub index: usize,
    pub seed: u64,
}

fn mix(mut h: u64, v: u64) -> u64 {
    // splitmix64 step over the running hash
    h ^= v.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}

fn hash_str(h: u64, s: &str) -> u64 {
    s.bytes().fold(mix(h, s.len() as u64), |h, b| mix(h, b as u64))
}

/// All clips of one stabilization setting, in a fixed order.
pub fn clip_specs(cfg: &ExperimentConfig) -> Vec<ClipSpec> {
    let mut out = Vec::new();
    for claimed in &cfg.subjects {
        let cid = &claimed.subject_id;
        for i in 0..cfg.legit_videos {
            out.push(ClipSpec {
                id: format!("{cid}-legit-{i:02}"),
                claimed: cid.clone(),
                actor: cid.clone(),
                legit: true,
                index: i,
                seed: mix(hash_str(hash_str(cfg.seed, cid), cid), i as u64),
            });
        }
        for actor in cfg.subjects.iter().filter(|s| s.subject_id != *cid) {
            let aid = &actor.subject_id;
            for i in 0..cfg.imposter_videos_per_imposter {
                out.push(ClipSpec {
                    id: format!("{cid}-imposter-{aid}-{i:02}"),
                    claimed: cid.clone(),
                    actor: aid.clone(),
                    legit: false,
                    index: i,
                    seed: mix(hash_str(hash_str(cfg.seed, cid), aid), 1000 + i as u64),
                });
            }
        }
    }
    out
}

/// Raw material of one clip.
#[derive(Debug, Clone)]
pub struct ClipData {
    pub motion: MotionTrace,
    pub imu: MotionTrace,
    pub video: Option<VideoClip>,
}

/// The actor's tremor model with this clip's frequency/amplitude jitter.
pub fn clip_subject(cfg: &ExperimentConfig, spec: &ClipSpec) -> Result<SubjectModel> {
    let base = cfg.subject_by_id(&spec.actor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let df = if cfg.freq_jitter_hz > 0.0 {
        rng.random_range(-cfg.freq_jitter_hz..=cfg.freq_jitter_hz)
    } else {
        0.0
    };
    let da = if cfg.amplitude_jitter > 0.0 {
        rng.random_range(-cfg.amplitude_jitter..=cfg.amplitude_jitter)
    } else {
        0.0
    };
    Ok(SubjectModel {
        dominant_freq: base.dominant_freq + df,
        band: (base.band.0 + df, base.band.1 + df),
        amplitude_px: base.amplitude_px * (1.0 + da),
        noise_seed: mix(spec.seed, 1),
        ..base.clone()
    })
}

fn frame_count(cfg: &ExperimentConfig) -> usize {
    (cfg.duration_s * cfg.camera.fps).round().max(2.0) as usize
}

/// Synthesizes motion, physical IMU readings and (when `render`) the video.
pub fn synthesize_clip(cfg: &ExperimentConfig, spec: &ClipSpec, stabilization: bool, render: bool) -> Result<ClipData> {
    let subj = clip_subject(cfg, spec)?;
    let cam = cfg.camera_for(stabilization);
    let rate = cam.row_rate().max(4.0 * subj.band.1).max(cfg.imu_rate_hz);
    let n = frame_count(cfg);
    let motion = gen_tremor(&subj, cfg.duration_s + 2.0 / cam.fps, rate)?;
    let imu = simulate_physical_imu(&motion, cfg.imu_rate_hz, cfg.imu_noise_std, mix(spec.seed, 2))?;
    let video = if render {
        let scene = Scene::for_camera(&cam, mix(spec.seed, 3));
        Some(render_frames(&scene, &motion, &cam, n)?)
    } else {
        None
    };
    Ok(ClipData { motion, imu, video })
}

/// A virtual or physical trace with the time of each sample.
#[derive(Debug, Clone)]
pub struct TimedTrace {
    pub trace: MotionTrace,
    pub times: Vec<f64>,
}

/// Trace of `method` for a clip, with sample times on the capture clock.
pub fn method_trace(cfg: &ExperimentConfig, method: Source, clip: &ClipData) -> Result<TimedTrace> {
    match method {
        Source::Physical => {
            let times = (0..clip.imu.len()).map(|i| clip.imu.time(i)).collect();
            Ok(TimedTrace {
                trace: clip.imu.clone(),
                times,
            })
        }
        Source::Ite => {
            let video = clip.video.as_ref().ok_or_else(|| Error::InvalidArgument("clip has no video".into()))?;
            let trace = ite_extract_with(video, cfg.ite)?.to_offset_trace()?;
            let times = (0..trace.len()).map(|i| video.frame_time(i)).collect();
            Ok(TimedTrace { trace, times })
        }
        Source::Rse => {
            let video = clip.video.as_ref().ok_or_else(|| Error::InvalidArgument("clip has no video".into()))?;
            let r = rse_extract(
                video,
                &RseConfig {
                    demons: cfg.demons,
                    ..Default::default()
                },
            )?;
            Ok(TimedTrace {
                trace: r.trace,
                times: r.sample_times,
            })
        }
    }
}

/// Horizontal-translation axis of each virtual trace.
pub fn tx_axis(method: Source) -> &'static str {
    match method {
        Source::Physical => "ax",
        Source::Ite => "m02",
        Source::Rse => "tx_rows",
    }
}

/// Max-lag |correlation| of a timed virtual axis against the true `tx`
/// motion. Both are put on the motion's sample grid over the virtual
/// trace's time span before the bounded lag search.
pub fn truth_corr(virt: &[f64], times: &[f64], motion: &MotionTrace, max_lag_s: f64) -> Result<(isize, f64)> {
    if virt.len() != times.len() || virt.len() < 2 {
        return Err(Error::LengthMismatch {
            left: virt.len(),
            right: times.len(),
        });
    }
    let rate = motion.sample_rate();
    let tx = motion.axis_or_err("tx")?;
    let (t0, t1) = (times[0], *times.last().unwrap());
    let n = ((t1 - t0) * rate).floor() as usize + 1;
    let mut virt_grid = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = t0 + i as f64 / rate;
        while k + 2 < times.len() && times[k + 1] <= t {
            k += 1;
        }
        let span = times[k + 1] - times[k];
        let u = if span > 0.0 { ((t - times[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
        virt_grid.push(virt[k] + u * (virt[k + 1] - virt[k]));
        truth.push(interp_clamped(tx, (t - motion.t0()) * rate));
    }
    let lag = ((max_lag_s * rate).round() as usize).min((n.saturating_sub(1)) / 2);
    let (l, c) = max_lag_corr(&virt_grid, &truth, lag)?;
    Ok((l, c.abs()))
}

/// Per-clip outcome: features per method, and ground-truth correlation of
/// the video-derived methods.
#[derive(Debug, Clone)]
pub struct ClipResult {
    pub spec: ClipSpec,
    pub stabilization: bool,
    pub features: BTreeMap<Source, FeatureVector>,
    pub truth_corr: BTreeMap<Source, f64>,
    /// The virtual trace carried no motion at all.
    pub degenerate: BTreeMap<Source, bool>,
}

pub fn process_clip(cfg: &ExperimentConfig, spec: &ClipSpec, stabilization: bool, clip: &ClipData) -> Result<ClipResult> {
    let mut features = BTreeMap::new();
    let mut corr = BTreeMap::new();
    let mut degenerate = BTreeMap::new();
    for &m in &cfg.methods {
        let tt = method_trace(cfg, m, clip).map_err(|e| Error::InvalidArgument(format!("{}: {m}: {e}", spec.id)))?;
        let schema = FeatureSchema::default_for(m);
        features.insert(m, extract_features(&tt.trace, &schema)?);
        if m != Source::Physical {
            let axis = tt.trace.axis_or_err(tx_axis(m))?;
            let flat = axis.iter().all(|v| *v == axis[0]);
            degenerate.insert(m, flat);
            if !flat {
                corr.insert(m, truth_corr(axis, &tt.times, &clip.motion, cfg.max_lag_s)?.1);
            }
        }
    }
    Ok(ClipResult {
        spec: spec.clone(),
        stabilization,
        features,
        truth_corr: corr,
        degenerate,
    })
}

/// Synthesizes and processes every clip of one stabilization setting in memory.
pub fn run_clips(cfg: &ExperimentConfig, stabilization: bool) -> Result<Vec<ClipResult>> {
    let render = cfg.methods.iter().any(|m| *m != Source::Physical);
    clip_specs(cfg)
        .par_iter()
        .map(|spec| {
            let data = synthesize_clip(cfg, spec, stabilization, render)?;
            process_clip(cfg, spec, stabilization, &data)
        })
        .collect()
}

/// One row of the Table-1 style summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: Source,
    pub stabilization: bool,
    pub tpr: f64,
    pub tnr: f64,
    pub cv_accuracy: f64,
    pub legit_tests: usize,
    pub imposter_tests: usize,
    pub fusion: FusionReport,
}

/// Enrolls on each subject's first legitimate clips, then verifies the
/// held-out legitimate clips and all imposter clips against the claimed
/// subject's template.
/// Visual and tremor decisions for one test clip, with its legitimacy.
pub type LabeledDecisions = (AuthDecision, AuthDecision, bool);

pub fn evaluate_method(
    cfg: &ExperimentConfig,
    method: Source,
    stabilization: bool,
    results: &[ClipResult],
) -> Result<(TableRow, Vec<LabeledDecisions>)> {
    let ntrain = cfg.train_count();
    let get = |r: &ClipResult| -> Result<FeatureVector> {
        r.features.get(&method).cloned().ok_or_else(|| Error::InvalidArgument(format!("{}: no {method} features", r.spec.id)))
    };
    let mut sets = Vec::new();
    for s in &cfg.subjects {
        let fvs = results
            .iter()
            .filter(|r| r.spec.legit && r.spec.claimed == s.subject_id && r.spec.index < ntrain)
            .map(get)
            .collect::<Result<Vec<_>>>()?;
        sets.push((s.subject_id.clone(), fvs));
    }
    let params = SvmParams {
        kernel: cfg.kernel,
        ..Default::default()
    };
    let report = train_classifier(&sets, &params, cfg.folds, cfg.seed)?;
    let templates: BTreeMap<&str, Template> = cfg
        .subjects
        .iter()
        .map(|s| Ok((s.subject_id.as_str(), Template::new(report.model.clone(), &s.subject_id, "0")?)))
        .collect::<Result<_>>()?;
    let mut decisions = Vec::new();
    for r in results.iter().filter(|r| !(r.spec.legit && r.spec.index < ntrain)) {
        let t = &templates[r.spec.claimed.as_str()];
        let mut tremor = t.verify(&r.spec.id, &get(r)?)?;
        if r.degenerate.get(&method).copied().unwrap_or(false) {
            tremor.accept = false;
            tremor.degenerate = true;
        }
        let attack = if r.spec.legit { Attack::None } else { Attack::PerfectMask };
        let visual = visual_stub(&r.spec.id, attack, &cfg.visual);
        decisions.push((visual, tremor, r.spec.legit));
    }
    let (v, t, l): (Vec<_>, Vec<_>, Vec<_>) = decisions.iter().cloned().fold(
        (Vec::new(), Vec::new(), Vec::new()),
        |(mut a, mut b, mut c), (x, y, z)| {
            a.push(x);
            b.push(y);
            c.push(z);
            (a, b, c)
        },
    );
    let fusion = fusion_report(&v, &t, &l, cfg.c1, cfg.c2)?;
    let row = TableRow {
        method,
        stabilization,
        tpr: fusion.tremor.tpr,
        tnr: fusion.tremor.tnr,
        cv_accuracy: report.cv_accuracy,
        legit_tests: fusion.tremor.positives,
        imposter_tests: fusion.tremor.negatives,
        fusion,
    };
    Ok((row, decisions))
}

/// Full evaluation over every configured method and stabilization setting.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<TableRow>,
    pub clips: Vec<ClipResult>,
}

impl Evaluation {
    pub fn row(&self, method: Source, stabilization: bool) -> Option<&TableRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.stabilization == stabilization)
    }
}

/// Evaluates clip results already computed for the given settings.
pub fn evaluate_results(cfg: &ExperimentConfig, clips: Vec<ClipResult>) -> Result<Evaluation> {
    let mut rows = Vec::new();
    for stab in cfg.stabilization_settings()? {
        let subset: Vec<ClipResult> = clips.iter().filter(|c| c.stabilization == stab).cloned().collect();
        if subset.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no clips for stabilization {}",
                stabilization_label(stab)
            )));
        }
        for &m in &cfg.methods {
            rows.push(evaluate_method(cfg, m, stab, &subset)?.0);
        }
    }
    Ok(Evaluation { rows, clips })
}

/// Synthesizes, extracts and evaluates the whole experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let mut clips = Vec::new();
    for stab in cfg.stabilization_settings()? {
        clips.extend(run_clips(cfg, stab)?);
    }
    evaluate_results(cfg, clips)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// `method,stabilization,tpr,tnr,cv_accuracy,legit_tests,imposter_tests`
pub fn table_csv(eval: &Evaluation) -> String {
    let mut out = String::from("method,stabilization,tpr,tnr,cv_accuracy,legit_tests,imposter_tests\n");
    for r in &eval.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            stabilization_label(r.stabilization),
            fmt6(r.tpr),
            fmt6(r.tnr),
            fmt6(r.cv_accuracy),
            r.legit_tests,
            r.imposter_tests
        );
    }
    out
}

/// Unimodal, tremor-only and AND-fused error per method and setting.
pub fn error_csv(eval: &Evaluation) -> String {
    let mut out = String::from(
        "method,stabilization,c1,c2,fpr_u,fnr_u,e_u,fpr_tremor,fnr_tremor,e_tremor,fpr_m,fnr_m,e_m,e_m_minus_e_u\n",
    );
    for r in &eval.rows {
        let f = &r.fusion;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            stabilization_label(r.stabilization),
            f.unimodal.c1,
            f.unimodal.c2,
            fmt6(f.unimodal.fpr),
            fmt6(f.unimodal.fnr),
            fmt6(f.unimodal.e),
            fmt6(f.tremor.fpr),
            fmt6(f.tremor.fnr),
            fmt6(f.tremor.e),
            fmt6(f.multimodal.fpr),
            fmt6(f.multimodal.fnr),
            fmt6(f.multimodal.e),
            fmt6(f.delta)
        );
    }
    out
}

/// Per-clip correlation with ground truth.
pub fn correlation_csv(eval: &Evaluation) -> String {
    let mut out = String::from("clip_id,actor,legit,stabilization,method,corr\n");
    for c in &eval.clips {
        for (m, v) in &c.truth_corr {
            let _ = writeln!(
                out,
                "{},{},{},{},{m},{}",
                c.spec.id,
                c.spec.actor,
                c.spec.legit,
                stabilization_label(c.stabilization),
                fmt6(*v)
            );
        }
    }
    out
}

/// Human-readable summary of an evaluation.
pub fn summary(eval: &Evaluation) -> String {
    let mut out = String::new();
    for r in &eval.rows {
        let _ = writeln!(
            out,
            "{:<8} stab={:<3} TPR={:.3} TNR={:.3} CV={:.3}  E_u={:.3} E_m={:.3} E_m-E_u={:+.3}",
            r.method.to_string(),
            stabilization_label(r.stabilization),
            r.tpr,
            r.tnr,
            r.cv_accuracy,
            r.fusion.unimodal.e,
            r.fusion.multimodal.e,
            r.fusion.delta
        );
    }
    out
}

/// Directory of one clip inside a dataset tree.
pub fn clip_dir(root: &Path, stabilization: bool, id: &str) -> PathBuf {
    root.join(format!("stab_{}", stabilization_label(stabilization))).join(id)
}

pub const DATASET_INDEX: &str = "dataset.csv";

/// Writes the dataset tree: per clip a video directory plus `motion.csv`
/// and `imu.csv`; `dataset.csv` indexes every clip.
pub fn write_dataset(cfg: &ExperimentConfig, root: &Path) -> Result<Vec<(ClipSpec, bool)>> {
    cfg.validate()?;
    let specs = clip_specs(cfg);
    let mut index = String::from("clip_id,stabilization,claimed,actor,legit,index,seed\n");
    let mut written = Vec::new();
    for stab in cfg.stabilization_settings()? {
        specs
            .par_iter()
            .map(|spec| {
                let data = synthesize_clip(cfg, spec, stab, true)?;
                let dir = clip_dir(root, stab, &spec.id);
                data.video.as_ref().expect("rendered").save(&dir)?;
                data.motion.write_csv(&dir.join("motion.csv"))?;
                data.imu.write_csv(&dir.join("imu.csv"))
            })
            .collect::<Result<Vec<()>>>()?;
        for spec in &specs {
            let _ = writeln!(
                index,
                "{},{},{},{},{},{},{}",
                spec.id,
                stabilization_label(stab),
                spec.claimed,
                spec.actor,
                spec.legit,
                spec.index,
                spec.seed
            );
            written.push((spec.clone(), stab));
        }
    }
    let path = root.join(DATASET_INDEX);
    std::fs::write(&path, index).map_err(|e| Error::io(&path, e))?;
    Ok(written)
}

/// Reads `dataset.csv` of a dataset tree.
pub fn read_index(root: &Path) -> Result<Vec<(ClipSpec, bool)>> {
    let path = root.join(DATASET_INDEX);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let ctx = "dataset index";
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(ctx, format!("line {}: expected 7 fields", n + 1)));
        }
        let bad = |what: &str| Error::parse(ctx, format!("line {}: bad {what}", n + 1));
        out.push((
            ClipSpec {
                id: f[0].to_string(),
                claimed: f[2].to_string(),
                actor: f[3].to_string(),
                legit: f[4].parse().map_err(|_| bad("legit"))?,
                index: f[5].parse().map_err(|_| bad("index"))?,
                seed: f[6].parse().map_err(|_| bad("seed"))?,
            },
            parse_stabilization(f[1])?,
        ));
    }
    Ok(out)
}

/// Loads one clip written by [`write_dataset`].
pub fn load_clip(root: &Path, spec: &ClipSpec, stabilization: bool) -> Result<ClipData> {
    let dir = clip_dir(root, stabilization, &spec.id);
    Ok(ClipData {
        motion: MotionTrace::read_csv(&dir.join("motion.csv"))?,
        imu: MotionTrace::read_csv(&dir.join("imu.csv"))?,
        video: Some(VideoClip::load(&dir)?),
    })
}

/// Evaluates a dataset tree written by [`write_dataset`].
pub fn evaluate_dataset(cfg: &ExperimentConfig, root: &Path) -> Result<Evaluation> {
    cfg.validate()?;
    let index = read_index(root)?;
    let clips = index
        .par_iter()
        .map(|(spec, stab)| {
            let data = load_clip(root, spec, *stab)?;
            process_clip(cfg, spec, *stab, &data)
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_results(cfg, clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            duration_s: 2.2,
            legit_videos: 5,
            imposter_videos_per_imposter: 2,
            folds: 2,
            camera: CameraConfig::rolling(32, 24, 30.0),
            methods: vec![Source::Physical],
            subjects: vec![subject("a", 5.0, 2.0), subject("b", 12.0, 2.0)],
            ..Default::default()
        }
    }

    #[test]
    fn counts_and_ids() {
        let cfg = ExperimentConfig::default();
        let specs = clip_specs(&cfg);
        assert_eq!(specs.len(), 4 * 48);
        let mut ids: Vec<&str> = specs.iter().map(|s| s.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), specs.len());
        assert_eq!(specs.iter().filter(|s| s.legit).count(), 120);
        assert_eq!(cfg.train_count(), 24);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let empty = ExperimentConfig {
            subjects: vec![],
            ..Default::default()
        };
        assert!(matches!(empty.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("bogus_key = 1").is_err());
        let partial = ExperimentConfig::from_toml("seed = 5\n[camera]\nframe_w = 80\n").unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.camera.frame_w, 80);
    }

    #[test]
    fn physical_only_pipeline_separates_subjects() {
        let cfg = tiny();
        let eval = run_experiment(&cfg).unwrap();
        let r = eval.row(Source::Physical, false).unwrap();
        assert_eq!(r.legit_tests, 2);
        assert_eq!(r.imposter_tests, 4);
        assert!(r.tpr == 1.0 && r.tnr == 1.0, "{r:?}");
        assert!(r.fusion.containment_holds());
        // physical readings do not depend on the camera setting
        let on = eval.row(Source::Physical, true).unwrap();
        assert_eq!((on.tpr, on.tnr), (r.tpr, r.tnr));
    }

    #[test]
    fn truth_corr_of_exact_samples_is_one() {
        let m = crate::simulate::analytic_motion(2.0, 500.0, |t| ((std::f64::consts::TAU * 3.0 * t).sin(), 0.0)).unwrap();
        let times: Vec<f64> = (0..60).map(|i| i as f64 / 30.0).collect();
        let v: Vec<f64> = times.iter().map(|&t| m.value_at(0, t)).collect();
        let (_, c) = truth_corr(&v, &times, &m, 0.1).unwrap();
        assert!(c > 0.97, "{c}");
    }
}
