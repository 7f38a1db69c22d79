//! Command-line surface. `main.rs` only forwards the process arguments to
//! [`main_args`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::auth::{train_classifier, verify_tremor, SvmParams, Template};
use crate::error::{Error, Result};
use crate::experiment::{
    correlation_csv, error_csv, evaluate_dataset, load_clip, method_trace, read_index,
    run_experiment, stabilization_label, summary, table_csv, truth_corr, write_dataset,
    ExperimentConfig,
};
use crate::features::{extract_features, features_csv, FeatureSchema, FeatureVector, Source};
use crate::register::{ite_extract_with, IteConfig, IteMode};
use crate::rse::{rse_extract, RseConfig};
use crate::sidechan::{synthetic_suite, Thresholds};
use crate::sigcore::{normalize_amplitude, resample_onto, MotionTrace};
use crate::video::VideoClip;

#[derive(Debug, Parser)]
#[command(
    name = "virtimu",
    version,
    about = "Virtual IMU extraction from rolling-shutter video and tremor authentication"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic dataset: videos, motion and physical IMU traces.
    Simulate,
    /// Run a virtual sensor over video directories.
    Extract {
        /// ite or rse.
        #[arg(long)]
        method: Source,
        /// ITE transform model: translation or full.
        #[arg(long, default_value = "translation")]
        mode: String,
        #[arg(required = true)]
        videos: Vec<PathBuf>,
    },
    /// Feature vectors of trace CSVs.
    Features {
        /// physical, ite or rse.
        #[arg(long)]
        source: Source,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Train the tremor classifier and write templates.
    Enroll {
        #[arg(long)]
        source: Source,
        /// Only write this subject's template.
        #[arg(long)]
        subject: Option<String>,
        /// Dataset tree written by `simulate`; enrolls its training clips.
        #[arg(long, conflicts_with = "sample")]
        dataset: Option<PathBuf>,
        /// Stabilization setting of the dataset clips.
        #[arg(long, default_value = "off")]
        stabilization: String,
        /// Labeled trace, `SUBJECT=PATH`. Repeatable.
        #[arg(long)]
        sample: Vec<String>,
    },
    /// Verify a trace or a video against a template.
    Verify {
        #[arg(long)]
        template: PathBuf,
        #[arg(long, conflicts_with = "video", required_unless_present = "video")]
        trace: Option<PathBuf>,
        #[arg(long)]
        video: Option<PathBuf>,
        /// Id reported in the decision; defaults to the input's file name.
        #[arg(long)]
        id: Option<String>,
    },
    /// Table of TPR/TNR per method and stabilization, plus fusion error.
    Evaluate {
        /// Dataset tree written by `simulate`; synthesized in memory when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Side-channel lattice on the synthetic sensor suite, or leak
    /// detection of a video's virtual sensors against its true motion.
    Sidechan {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        max_lag: Option<usize>,
        /// Video directory holding `motion.csv`.
        #[arg(long)]
        video: Option<PathBuf>,
    },
    /// Aligned, amplitude-normalized columns for overlay plots.
    Plot {
        /// Output resolution in Hz; defaults to the highest input rate.
        #[arg(long)]
        rate: Option<f64>,
        /// `LABEL=PATH[:AXIS]`. With no axis the horizontal axis is guessed.
        #[arg(required = true)]
        traces: Vec<String>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Failures print one `error[<kind>]: <reason>` line.
pub fn main_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.exit_code() == 0 {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {line}");
            return 2;
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}

/// Effective configuration: file (or defaults) with the seed override.
pub fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command; returns what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    if g.print_config {
        return Ok(cfg.to_toml());
    }
    let Some(cmd) = &cli.command else {
        return Err(Error::InvalidArgument("no command given (see --help)".into()));
    };
    let out = |default: &str| g.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cmd {
        Command::Simulate => cmd_simulate(&cfg, &out("dataset"), g.force),
        Command::Extract { method, mode, videos } => cmd_extract(&cfg, *method, mode, videos, &out("out"), g.force),
        Command::Features { source, traces } => cmd_features(*source, traces, &out("out"), g.force),
        Command::Enroll {
            source,
            subject,
            dataset,
            stabilization,
            sample,
        } => {
            let samples = match dataset {
                Some(root) => dataset_samples(&cfg, root, *source, stabilization)?,
                None => labeled_samples(*source, sample)?,
            };
            cmd_enroll(&cfg, samples, subject.as_deref(), &out("out"), g.force)
        }
        Command::Verify {
            template,
            trace,
            video,
            id,
        } => cmd_verify(&cfg, template, trace.as_deref(), video.as_deref(), id.as_deref()),
        Command::Evaluate { dataset } => cmd_evaluate(&cfg, dataset.as_deref(), &out("out"), g.force),
        Command::Sidechan {
            alpha,
            beta,
            delta,
            max_lag,
            video,
        } => {
            let d = Thresholds::default();
            let th = Thresholds {
                alpha: alpha.unwrap_or(d.alpha),
                beta: beta.unwrap_or(d.beta),
                delta: delta.unwrap_or(d.delta),
                max_lag: max_lag.unwrap_or(d.max_lag),
            };
            match video {
                Some(v) => cmd_sidechan_video(&cfg, v, &th),
                None => cmd_sidechan_suite(cfg.seed, &th, &out("out"), g.force),
            }
        }
        Command::Plot { rate, traces } => cmd_plot(traces, *rate, &out("out"), g.force),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_output(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.to_path_buf()));
    }
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

pub fn cmd_simulate(cfg: &ExperimentConfig, root: &Path, force: bool) -> Result<String> {
    if root.exists() {
        let mut entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::OutputNotEmpty(root.to_path_buf()));
        }
    }
    ensure_dir(root)?;
    let written = write_dataset(cfg, root)?;
    write_output(&root.join("config.toml"), cfg.to_toml().as_bytes(), true)?;
    let mut out = String::new();
    for stab in cfg.stabilization_settings()? {
        let n = written.iter().filter(|(_, s)| *s == stab).count();
        let _ = writeln!(out, "stabilization={} clips={n}", stabilization_label(stab));
    }
    let _ = writeln!(out, "wrote {}", root.display());
    Ok(out)
}

pub fn cmd_extract(
    cfg: &ExperimentConfig,
    method: Source,
    mode: &str,
    videos: &[PathBuf],
    out_dir: &Path,
    force: bool,
) -> Result<String> {
    let mode = match mode {
        "translation" => IteMode::Translation,
        "full" => IteMode::Full,
        _ => {
            return Err(Error::Unknown {
                kind: "ITE mode",
                name: mode.to_string(),
            })
        }
    };
    let mut out = String::new();
    for dir in videos {
        let video = VideoClip::load(dir)?;
        let trace = match method {
            Source::Ite => ite_extract_with(&video, IteConfig { mode, ..cfg.ite })?.to_offset_trace()?,
            Source::Rse => {
                rse_extract(
                    &video,
                    &RseConfig {
                        demons: cfg.demons,
                        ..Default::default()
                    },
                )?
                .trace
            }
            Source::Physical => {
                return Err(Error::InvalidArgument("physical traces are not extracted from video".into()));
            }
        };
        let path = out_dir.join(format!("{}-{method}.csv", file_label(dir)));
        write_output(&path, trace.to_csv().as_bytes(), force)?;
        let _ = writeln!(
            out,
            "wrote {} rate_hz={} samples={}",
            path.display(),
            trace.sample_rate(),
            trace.len()
        );
    }
    Ok(out)
}

/// Id of a trace file: its stem with a trailing `-<source>` removed.
fn trace_id(path: &Path, source: Source) -> String {
    let stem = file_label(path);
    let suffix = format!("-{source}");
    stem.strip_suffix(&suffix).map(str::to_string).unwrap_or(stem)
}

pub fn cmd_features(source: Source, traces: &[PathBuf], out_dir: &Path, force: bool) -> Result<String> {
    let schema = FeatureSchema::default_for(source);
    let rows = traces
        .iter()
        .map(|p| Ok((trace_id(p, source), extract_features(&MotionTrace::read_csv(p)?, &schema)?)))
        .collect::<Result<Vec<_>>>()?;
    let path = out_dir.join(format!("features-{source}.csv"));
    write_output(&path, features_csv(&schema, &rows)?.as_bytes(), force)?;
    Ok(format!("wrote {} vectors={} schema={}\n", path.display(), rows.len(), schema.id()))
}

type Samples = Vec<(String, Vec<FeatureVector>)>;

fn push_sample(sets: &mut Samples, subject: &str, fv: FeatureVector) {
    match sets.iter_mut().find(|(s, _)| s == subject) {
        Some((_, v)) => v.push(fv),
        None => sets.push((subject.to_string(), vec![fv])),
    }
}

fn labeled_samples(source: Source, specs: &[String]) -> Result<Samples> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("enroll needs --dataset or --sample".into()));
    }
    let schema = FeatureSchema::default_for(source);
    let mut sets = Samples::new();
    for s in specs {
        let (subject, path) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("sample '{s}' is not SUBJECT=PATH")))?;
        let fv = extract_features(&MotionTrace::read_csv(Path::new(path))?, &schema)?;
        push_sample(&mut sets, subject, fv);
    }
    Ok(sets)
}

fn dataset_samples(cfg: &ExperimentConfig, root: &Path, source: Source, stabilization: &str) -> Result<Samples> {
    let stab = crate::experiment::parse_stabilization(stabilization)?;
    let ntrain = cfg.train_count();
    let schema = FeatureSchema::default_for(source);
    let mut sets = Samples::new();
    for (spec, s) in read_index(root)? {
        if s != stab || !spec.legit || spec.index >= ntrain {
            continue;
        }
        let clip = load_clip(root, &spec, s)?;
        let fv = extract_features(&method_trace(cfg, source, &clip)?.trace, &schema)?;
        push_sample(&mut sets, &spec.claimed, fv);
    }
    if sets.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no enrollment clips in {} for stabilization {stabilization}",
            root.display()
        )));
    }
    Ok(sets)
}

fn now_stamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into())
}

pub fn cmd_enroll(
    cfg: &ExperimentConfig,
    sets: Samples,
    subject: Option<&str>,
    out_dir: &Path,
    force: bool,
) -> Result<String> {
    let params = SvmParams {
        kernel: cfg.kernel,
        ..Default::default()
    };
    let min = sets.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    let report = train_classifier(&sets, &params, cfg.folds.min(min), cfg.seed)?;
    let stamp = now_stamp();
    let subjects: Vec<String> = match subject {
        Some(s) => vec![s.to_string()],
        None => report.model.classes.clone(),
    };
    let mut out = format!(
        "classes={} cv_accuracy={:.6} train_accuracy={:.6}\n",
        report.model.classes.join(","),
        report.cv_accuracy,
        report.train_accuracy
    );
    for s in &subjects {
        let t = Template::new(report.model.clone(), s, &stamp)?;
        let path = out_dir.join(format!("{s}.template"));
        write_output(&path, t.to_text().as_bytes(), force)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(out)
}

pub fn cmd_verify(
    cfg: &ExperimentConfig,
    template: &Path,
    trace: Option<&Path>,
    video: Option<&Path>,
    id: Option<&str>,
) -> Result<String> {
    let t = Template::load(template)?;
    let schema = FeatureSchema::parse_id(&t.model.schema_id)?;
    let (input, trace) = match (trace, video) {
        (Some(p), _) => (p, MotionTrace::read_csv(p)?),
        (None, Some(dir)) => {
            let clip = VideoClip::load(dir)?;
            let data = crate::experiment::ClipData {
                motion: MotionTrace::single(1.0, 0.0, "tx", vec![0.0, 0.0])?,
                imu: MotionTrace::single(1.0, 0.0, "ax", vec![0.0, 0.0])?,
                video: Some(clip),
            };
            if schema.source == Source::Physical {
                return Err(Error::InvalidArgument("physical templates verify traces, not videos".into()));
            }
            (dir, method_trace(cfg, schema.source, &data)?.trace)
        }
        (None, None) => return Err(Error::InvalidArgument("verify needs --trace or --video".into())),
    };
    let id = id.map(str::to_string).unwrap_or_else(|| file_label(input));
    let d = verify_tremor(&id, &trace, &t)?;
    Ok(format!(
        "video_id={} subject={} accept={} score={:.6} degenerate={}\n",
        d.video_id, t.subject_id, d.accept, d.score, d.degenerate
    ))
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, dataset: Option<&Path>, out_dir: &Path, force: bool) -> Result<String> {
    let eval = match dataset {
        Some(root) => {
            if !root.join(crate::experiment::DATASET_INDEX).exists() {
                return Err(Error::InvalidArgument(format!("{} holds no dataset", root.display())));
            }
            evaluate_dataset(cfg, root)?
        }
        None => run_experiment(cfg)?,
    };
    for (name, text) in [
        ("table.csv", table_csv(&eval)),
        ("errors.csv", error_csv(&eval)),
        ("correlation.csv", correlation_csv(&eval)),
    ] {
        write_output(&out_dir.join(name), text.as_bytes(), force)?;
    }
    Ok(format!("{}wrote {}\n", summary(&eval), out_dir.display()))
}

pub fn cmd_sidechan_suite(seed: u64, th: &Thresholds, out_dir: &Path, force: bool) -> Result<String> {
    let mut out = String::new();
    let mut report = String::new();
    for case in synthetic_suite(seed)? {
        let v = case.run(th)?;
        let _ = writeln!(
            out,
            "{} classification={} expected={} lattice={}",
            crate::sidechan::Sensor::name(&case.sensor),
            v.classification,
            case.expected,
            if v.lattice_holds() { "ok" } else { "violated" }
        );
        let _ = writeln!(report, "sensor: {}\n{}", crate::sidechan::Sensor::name(&case.sensor), v.report());
    }
    let path = out_dir.join("sidechan.txt");
    write_output(&path, report.as_bytes(), force)?;
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(out)
}

/// Leak detection of ITE and RSE on a video against its `motion.csv`.
pub fn cmd_sidechan_video(cfg: &ExperimentConfig, dir: &Path, th: &Thresholds) -> Result<String> {
    let video = VideoClip::load(dir)?;
    let motion = MotionTrace::read_csv(&dir.join("motion.csv"))?;
    let mut out = String::new();
    for method in [Source::Ite, Source::Rse] {
        let (virt, times) = match method {
            Source::Ite => {
                let t = ite_extract_with(&video, cfg.ite)?.to_offset_trace()?;
                let times = (0..t.len()).map(|i| video.frame_time(i)).collect::<Vec<_>>();
                (t.axis_or_err("m02")?.to_vec(), times)
            }
            _ => {
                let r = rse_extract(&video, &RseConfig::default())?;
                (r.trace.axis_or_err("tx_rows")?.to_vec(), r.sample_times)
            }
        };
        let flat = virt.iter().all(|v| *v == virt[0]);
        let (lag, score) = if flat { (0, 0.0) } else { truth_corr(&virt, &times, &motion, cfg.max_lag_s)? };
        let _ = writeln!(
            out,
            "{} variable=hand_motion detected={} score={score:.6} lag={lag} alpha={}",
            method,
            score > th.alpha,
            th.alpha
        );
    }
    Ok(out)
}

struct PlotInput {
    label: String,
    trace: MotionTrace,
    axis: usize,
}

fn guess_axis(trace: &MotionTrace) -> usize {
    ["tx", "tx_rows", "m02", "ax"]
        .iter()
        .find_map(|n| trace.axes().iter().position(|a| a == n))
        .unwrap_or(0)
}

fn parse_plot_input(spec: &str) -> Result<PlotInput> {
    let (label, rest) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("'{spec}' is not LABEL=PATH[:AXIS]")))?;
    let (path, axis) = match rest.rsplit_once(':') {
        Some((p, a)) if !a.contains('/') && !a.is_empty() => (p, Some(a)),
        _ => (rest, None),
    };
    let trace = MotionTrace::read_csv(Path::new(path))?;
    if trace.is_empty() {
        return Err(Error::InvalidTrace(format!("{path}: empty trace")));
    }
    let axis = match axis {
        Some(a) => trace
            .axes()
            .iter()
            .position(|n| n == a)
            .ok_or_else(|| Error::Unknown {
                kind: "axis",
                name: a.to_string(),
            })?,
        None => guess_axis(&trace),
    };
    Ok(PlotInput {
        label: label.to_string(),
        trace,
        axis,
    })
}

/// Puts every input on one grid over the common time span and scales each
/// column to unit peak.
pub fn plot_table(specs: &[String], rate: Option<f64>) -> Result<String> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("plot needs at least one trace".into()));
    }
    let inputs = specs.iter().map(|s| parse_plot_input(s)).collect::<Result<Vec<_>>>()?;
    let rate = rate.unwrap_or_else(|| inputs.iter().map(|i| i.trace.sample_rate()).fold(0.0, f64::max));
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidArgument(format!("plot rate {rate}")));
    }
    let t0 = inputs.iter().map(|i| i.trace.t0()).fold(f64::NEG_INFINITY, f64::max);
    let t1 = inputs
        .iter()
        .map(|i| i.trace.t0() + i.trace.duration())
        .fold(f64::INFINITY, f64::min);
    if t1 < t0 {
        return Err(Error::InvalidArgument("traces do not overlap in time".into()));
    }
    let len = ((t1 - t0) * rate + 1e-9).floor() as usize + 1;
    let cols = inputs
        .iter()
        .map(|i| {
            let col = &i.trace.columns()[i.axis];
            let axis_trace = MotionTrace::single(i.trace.sample_rate(), i.trace.t0(), "v", col.clone())?;
            let on_grid = resample_onto(&axis_trace, rate, t0, len)?;
            Ok(normalize_amplitude(&on_grid.columns()[0]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = format!("# sample_rate_hz={rate}\ntime_s");
    for i in &inputs {
        let _ = write!(out, ",{}", i.label);
    }
    out.push('\n');
    for k in 0..len {
        let _ = write!(out, "{}", t0 + k as f64 / rate);
        for c in &cols {
            let _ = write!(out, ",{}", c[k]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_plot(specs: &[String], rate: Option<f64>, out_dir: &Path, force: bool) -> Result<String> {
    let table = plot_table(specs, rate)?;
    let path = out_dir.join("plot.csv");
    write_output(&path, table.as_bytes(), force)?;
    Ok(format!("wrote {}\n", path.display()))
}
