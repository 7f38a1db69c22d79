//! Tremor enrollment and verification, the visual stub, AND fusion and the
//! cost-weighted error model.
//!
//! Identification is multi-class: one binary max-margin classifier per pair
//! of subjects, majority vote over pairs. A claim is accepted when the
//! predicted subject equals the claimed one.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::sigcore::MotionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `(1 + x.y)^2`
    #[default]
    Quadratic,
}

impl Kernel {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match self {
            Kernel::Linear => dot,
            Kernel::Quadratic => (1.0 + dot) * (1.0 + dot),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Linear => "linear",
            Kernel::Quadratic => "quadratic",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Kernel::Linear),
            "quadratic" => Ok(Kernel::Quadratic),
            _ => Err(Error::Unknown {
                kind: "kernel",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: Kernel::Quadratic,
            c: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Two-class kernel machine, `f(x) = sum coef_i k(sv_i, x) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub kernel: Kernel,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * self.kernel.eval(s, x))
            .sum::<f64>()
            + self.bias
    }
}

/// Dual coordinate solver with second-order working-set selection.
/// Labels are `+1` / `-1`. Ties in selection go to the lowest index.
pub fn train_binary(x: &[Vec<f64>], y: &[f64], p: &SvmParams) -> Result<BinarySvm> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) || y.iter().any(|v| v.abs() != 1.0) {
        return Err(Error::InvalidArgument("binary labels must contain both +1 and -1".into()));
    }
    const TAU: f64 = 1e-12;
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| p.kernel.eval(&x[i], &x[j])).collect())
        .collect();
    let c = p.c;
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * g[t] > gmax {
                gmax = -y[t] * g[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let yg = y[t] * g[t];
            gmax2 = gmax2.max(yg);
            let b = gmax + yg;
            if b > 0.0 {
                let a = (k[i][i] + k[t][t] - 2.0 * k[i][t]).max(TAU);
                let obj = -b * b / a;
                if obj < obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < p.tol {
            break;
        }
        let Some(j) = j_sel else { break };
        iter += 1;
        if iter > p.max_iter {
            break;
        }
        let qij = y[i] * y[j] * k[i][j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[i][t] * di + y[j] * k[j][t] * dj);
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    let (support, coef) = (0..n)
        .filter(|&t| alpha[t] > 0.0)
        .map(|t| (x[t].clone(), alpha[t] * y[t]))
        .unzip();
    Ok(BinarySvm {
        kernel: p.kernel,
        support,
        coef,
        bias: -rho,
    })
}

/// Per-feature z-scoring fitted on enrollment data. Features whose
/// enrollment spread is zero are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub dim: usize,
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("no enrollment features".into()));
        }
        let n = rows.len() as f64;
        let (mut kept, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
        for f in 0..dim {
            let m = rows.iter().map(|r| r[f]).sum::<f64>() / n;
            let s = (rows.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / n).sqrt();
            if s > 1e-12 * m.abs().max(1e-300) && s > 0.0 {
                kept.push(f);
                mean.push(m);
                std.push(s);
            }
        }
        if kept.is_empty() {
            return Err(Error::DegenerateClasses("every feature is constant".into()));
        }
        Ok(Self { dim, kept, mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.dim,
            });
        }
        Ok(self
            .kept
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&f, (m, s))| (x[f] - m) / s)
            .collect())
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.dim).filter(|f| !self.kept.contains(f)).collect()
    }
}

/// Trained identification model shared by every enrolled subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub schema_id: String,
    /// Class labels, sorted.
    pub classes: Vec<String>,
    pub norm: Normalizer,
    /// `(a, b, svm)` with `a < b`; positive decision favors class `a`.
    pub pairs: Vec<(usize, usize, BinarySvm)>,
}

impl Model {
    /// Per-pair decision values and the majority-vote class. Vote ties go
    /// to the lower class index.
    pub fn votes(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let z = self.norm.apply(x)?;
        let mut votes = vec![0usize; self.classes.len()];
        let decisions: Vec<f64> = self
            .pairs
            .iter()
            .map(|(a, b, svm)| {
                let d = svm.decision(&z);
                votes[if d > 0.0 { *a } else { *b }] += 1;
                d
            })
            .collect();
        let best = (0..votes.len()).fold(0, |b, c| if votes[c] > votes[b] { c } else { b });
        Ok((best, decisions))
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.votes(x)?.0])
    }

    /// Worst-case pairwise margin of `class` against every other class.
    fn class_score(&self, class: usize, decisions: &[f64]) -> f64 {
        self.pairs
            .iter()
            .zip(decisions)
            .filter_map(|((a, b, _), &d)| {
                if *a == class {
                    Some(d)
                } else if *b == class {
                    Some(-d)
                } else {
                    None
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: Model,
    pub cv_accuracy: f64,
    pub train_accuracy: f64,
}

/// Labeled enrollment samples of one subject.
pub type SubjectSamples = (String, Vec<FeatureVector>);

fn fit_model(schema_id: &str, classes: &[String], data: &[(usize, &[f64])], p: &SvmParams) -> Result<Model> {
    let rows: Vec<&[f64]> = data.iter().map(|(_, x)| *x).collect();
    let norm = Normalizer::fit(&rows)?;
    let z: Vec<(usize, Vec<f64>)> = data
        .iter()
        .map(|(c, x)| Ok((*c, norm.apply(x)?)))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = z
                .iter()
                .filter(|(c, _)| *c == a || *c == b)
                .map(|(c, x)| (x.clone(), if *c == a { 1.0 } else { -1.0 }))
                .unzip();
            if !ys.contains(&1.0) || !ys.contains(&-1.0) {
                return Err(Error::InvalidArgument(format!(
                    "pair {}/{} lacks samples in a fold",
                    classes[a], classes[b]
                )));
            }
            pairs.push((a, b, train_binary(&xs, &ys, p)?));
        }
    }
    Ok(Model {
        schema_id: schema_id.to_string(),
        classes: classes.to_vec(),
        norm,
        pairs,
    })
}

/// One-vs-one training with stratified `folds`-fold cross validation.
///
/// Samples are ordered by sorted subject id, then by their order within the
/// subject, so the result does not depend on how subjects are enumerated.
pub fn train_classifier(
    sets: &[SubjectSamples],
    p: &SvmParams,
    folds: usize,
    seed: u64,
) -> Result<TrainReport> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "one-vs-one training needs at least 2 subjects, got {}",
            sets.len()
        )));
    }
    let mut sorted: Vec<&SubjectSamples> = sets.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let classes: Vec<String> = sorted.iter().map(|s| s.0.clone()).collect();
    if classes.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate subject ids".into()));
    }
    let schema_id = sorted[0]
        .1
        .first()
        .map(|f| f.schema_id.clone())
        .ok_or_else(|| Error::InvalidArgument(format!("subject {} has no samples", classes[0])))?;
    let folds = folds.max(1);
    let mut data: Vec<(usize, &[f64])> = Vec::new();
    for (c, (id, fvs)) in sorted.iter().map(|s| (&s.0, &s.1)).enumerate() {
        if fvs.len() < folds {
            return Err(Error::InvalidArgument(format!(
                "subject {id} has {} samples, fewer than {folds} folds",
                fvs.len()
            )));
        }
        for fv in fvs.iter() {
            if fv.schema_id != schema_id {
                return Err(Error::SchemaMismatch {
                    expected: schema_id.clone(),
                    got: fv.schema_id.clone(),
                });
            }
            data.push((c, &fv.values));
        }
    }
    for (i, (ci, xi)) in data.iter().enumerate() {
        if let Some((cj, _)) = data[i + 1..].iter().find(|(cj, xj)| cj != ci && xj == xi) {
            return Err(Error::DegenerateClasses(format!(
                "identical feature vectors in subjects {} and {}",
                classes[*ci], classes[*cj]
            )));
        }
    }
    let model = fit_model(&schema_id, &classes, &data, p)?;
    let correct = data
        .iter()
        .map(|(c, x)| Ok(usize::from(model.votes(x)?.0 == *c)))
        .sum::<Result<usize>>()?;
    let train_accuracy = correct as f64 / data.len() as f64;

    let cv_accuracy = if folds > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fold_of = vec![0usize; data.len()];
        for c in 0..classes.len() {
            let mut members: Vec<usize> = (0..data.len()).filter(|&i| data[i].0 == c).collect();
            members.shuffle(&mut rng);
            for (rank, &i) in members.iter().enumerate() {
                fold_of[i] = rank % folds;
            }
        }
        let mut hits = 0usize;
        for f in 0..folds {
            let train: Vec<(usize, &[f64])> = (0..data.len())
                .filter(|&i| fold_of[i] != f)
                .map(|i| data[i])
                .collect();
            let m = fit_model(&schema_id, &classes, &train, p)?;
            for i in (0..data.len()).filter(|&i| fold_of[i] == f) {
                hits += usize::from(m.votes(data[i].1)?.0 == data[i].0);
            }
        }
        hits as f64 / data.len() as f64
    } else {
        train_accuracy
    };
    Ok(TrainReport {
        model,
        cv_accuracy,
        train_accuracy,
    })
}

/// Enrolled state for one claimed identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject_id: String,
    pub created_at: String,
    pub model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Visual,
    Tremor,
    Fused,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Visual => "visual",
            Modality::Tremor => "tremor",
            Modality::Fused => "fused",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthDecision {
    pub video_id: String,
    pub accept: bool,
    pub score: f64,
    pub modality: Modality,
    /// The input carried no usable tremor.
    pub degenerate: bool,
}

const TEMPLATE_MAGIC: &str = "virtimu-template 1";

fn join(xs: impl IntoIterator<Item = impl fmt::Display>) -> String {
    xs.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

impl Template {
    pub fn new(model: Model, subject_id: &str, created_at: &str) -> Result<Self> {
        if !model.classes.iter().any(|c| c == subject_id) {
            return Err(Error::Unknown {
                kind: "subject",
                name: subject_id.to_string(),
            });
        }
        Ok(Self {
            subject_id: subject_id.to_string(),
            created_at: created_at.to_string(),
            model,
        })
    }

    fn class_index(&self) -> usize {
        self.model.classes.iter().position(|c| *c == self.subject_id).unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let _ = writeln!(out, "{TEMPLATE_MAGIC}");
        let _ = writeln!(out, "subject_id={}", self.subject_id);
        let _ = writeln!(out, "created_at={}", self.created_at);
        let _ = writeln!(out, "schema_id={}", m.schema_id);
        let kernel = m.pairs.first().map_or(Kernel::Quadratic, |p| p.2.kernel);
        let _ = writeln!(out, "kernel={kernel}");
        let _ = writeln!(out, "classes={}", m.classes.join(","));
        let _ = writeln!(out, "dim={}", m.norm.dim);
        let _ = writeln!(out, "kept={}", join(&m.norm.kept));
        let _ = writeln!(out, "dropped={}", join(m.norm.dropped()));
        let _ = writeln!(out, "mean={}", join(&m.norm.mean));
        let _ = writeln!(out, "std={}", join(&m.norm.std));
        let _ = writeln!(out, "pairs={}", m.pairs.len());
        for (a, b, svm) in &m.pairs {
            let _ = writeln!(out, "pair={a} {b}");
            let _ = writeln!(out, "bias={}", svm.bias);
            let _ = writeln!(out, "support={}", svm.support.len());
            for (s, c) in svm.support.iter().zip(&svm.coef) {
                let _ = writeln!(out, "sv={c} {}", join(s));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "template";
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(TEMPLATE_MAGIC) {
            return Err(Error::parse(ctx, format!("missing '{TEMPLATE_MAGIC}' header")));
        }
        let mut next = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(ctx, format!("missing '{key}'")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(ctx, format!("expected '{key}=', got '{line}'")))
        };
        fn nums<T: FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
            s.split_whitespace()
                .map(|v| v.parse().map_err(|_| Error::parse("template", format!("{key}: bad value '{v}'"))))
                .collect()
        }
        let subject_id = next("subject_id")?;
        let created_at = next("created_at")?;
        let schema_id = next("schema_id")?;
        FeatureSchema::parse_id(&schema_id)?;
        let kernel: Kernel = next("kernel")?.parse()?;
        let classes: Vec<String> = next("classes")?.split(',').map(str::to_string).collect();
        let dim: usize = next("dim")?
            .parse()
            .map_err(|_| Error::parse(ctx, "bad dim"))?;
        let kept: Vec<usize> = nums(&next("kept")?, "kept")?;
        let _dropped: Vec<usize> = nums(&next("dropped")?, "dropped")?;
        let mean: Vec<f64> = nums(&next("mean")?, "mean")?;
        let std: Vec<f64> = nums(&next("std")?, "std")?;
        if mean.len() != kept.len() || std.len() != kept.len() || kept.iter().any(|&k| k >= dim) {
            return Err(Error::parse(ctx, "normalization arrays inconsistent"));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::parse(ctx, "normalization std must be positive"));
        }
        let npairs: usize = next("pairs")?
            .parse()
            .map_err(|_| Error::parse(ctx, "bad pairs"))?;
        let mut pairs = Vec::with_capacity(npairs);
        for _ in 0..npairs {
            let ab: Vec<usize> = nums(&next("pair")?, "pair")?;
            if ab.len() != 2 || ab[0] >= classes.len() || ab[1] >= classes.len() {
                return Err(Error::parse(ctx, "bad pair indices"));
            }
            let bias: f64 = next("bias")?
                .parse()
                .map_err(|_| Error::parse(ctx, "bad bias"))?;
            let nsv: usize = next("support")?
                .parse()
                .map_err(|_| Error::parse(ctx, "bad support count"))?;
            let mut support = Vec::with_capacity(nsv);
            let mut coef = Vec::with_capacity(nsv);
            for _ in 0..nsv {
                let v: Vec<f64> = nums(&next("sv")?, "sv")?;
                if v.len() != kept.len() + 1 {
                    return Err(Error::parse(ctx, "support vector length"));
                }
                coef.push(v[0]);
                support.push(v[1..].to_vec());
            }
            pairs.push((
                ab[0],
                ab[1],
                BinarySvm {
                    kernel,
                    support,
                    coef,
                    bias,
                },
            ));
        }
        let model = Model {
            schema_id,
            classes,
            norm: Normalizer { dim, kept, mean, std },
            pairs,
        };
        Template::new(model, &subject_id, &created_at)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Classifies a feature vector against this template's claimed identity.
    pub fn verify(&self, video_id: &str, fv: &FeatureVector) -> Result<AuthDecision> {
        if fv.schema_id != self.model.schema_id {
            return Err(Error::SchemaMismatch {
                expected: self.model.schema_id.clone(),
                got: fv.schema_id.clone(),
            });
        }
        let (pred, decisions) = self.model.votes(&fv.values)?;
        let claimed = self.class_index();
        Ok(AuthDecision {
            video_id: video_id.to_string(),
            accept: pred == claimed,
            score: self.model.class_score(claimed, &decisions),
            modality: Modality::Tremor,
            degenerate: false,
        })
    }
}

fn is_degenerate(trace: &MotionTrace) -> bool {
    trace.columns().iter().all(|c| {
        let m = c.iter().sum::<f64>() / c.len() as f64;
        c.iter().all(|v| (v - m).abs() <= 1e-9)
    })
}

/// Verifies a virtual (or physical) motion trace against a template. A
/// trace without motion is rejected with the degenerate flag set.
pub fn verify_tremor(video_id: &str, trace: &MotionTrace, template: &Template) -> Result<AuthDecision> {
    let schema = FeatureSchema::parse_id(&template.model.schema_id)?;
    let relevant = trace.select(&schema.axes.iter().map(String::as_str).collect::<Vec<_>>())?;
    if is_degenerate(&relevant) {
        return Ok(AuthDecision {
            video_id: video_id.to_string(),
            accept: false,
            score: f64::NEG_INFINITY,
            modality: Modality::Tremor,
            degenerate: true,
        });
    }
    let fv = crate::features::extract_features(trace, &schema)?;
    template.verify(video_id, &fv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attack {
    None,
    PerfectMask,
}

/// Operating point of the stand-in facial recognizer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VisualStub {
    pub tpr: f64,
    pub tnr: f64,
}

impl Default for VisualStub {
    /// A face matcher fooled by a perfect mask.
    fn default() -> Self {
        Self { tpr: 1.0, tnr: 0.0 }
    }
}

/// FNV-1a of the id mapped to `[0, 1)`; decides fractional operating points
/// reproducibly per video.
fn unit_hash(id: &str) -> f64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn visual_stub(video_id: &str, attack: Attack, stub: &VisualStub) -> AuthDecision {
    let u = unit_hash(video_id);
    let accept = match attack {
        Attack::None => u < stub.tpr,
        Attack::PerfectMask => u >= stub.tnr,
    };
    AuthDecision {
        video_id: video_id.to_string(),
        accept,
        score: if accept { 1.0 } else { -1.0 },
        modality: Modality::Visual,
        degenerate: false,
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Accepts iff both modalities accept; the score is the smaller of the two
/// logistic-normalized scores.
pub fn and_fuse(visual: &AuthDecision, tremor: &AuthDecision) -> Result<AuthDecision> {
    if visual.modality != Modality::Visual || tremor.modality != Modality::Tremor {
        return Err(Error::ModalityMismatch(format!(
            "expected visual and tremor, got {} and {}",
            visual.modality, tremor.modality
        )));
    }
    if visual.video_id != tremor.video_id {
        return Err(Error::InvalidArgument(format!(
            "decisions for different videos: {} and {}",
            visual.video_id, tremor.video_id
        )));
    }
    Ok(AuthDecision {
        video_id: visual.video_id.clone(),
        accept: visual.accept && tremor.accept,
        score: logistic(visual.score).min(logistic(tremor.score)),
        modality: Modality::Fused,
        degenerate: tremor.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub tpr: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub c1: f64,
    pub c2: f64,
    /// `c1 * fpr + c2 * fnr`
    pub e: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl ErrorReport {
    /// Report from given rates, for plugging in an external operating point.
    pub fn from_rates(fpr: f64, fnr: f64, c1: f64, c2: f64) -> Result<Self> {
        for (name, v) in [("fpr", fpr), ("fnr", fnr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return Err(Error::InvalidArgument("costs must be non-negative".into()));
        }
        Ok(Self {
            tpr: 1.0 - fnr,
            tnr: 1.0 - fpr,
            fpr,
            fnr,
            c1,
            c2,
            e: c1 * fpr + c2 * fnr,
            positives: 0,
            negatives: 0,
        })
    }
}

/// Empirical rates from decisions paired with ground truth
/// (`true` = legitimate user).
pub fn error_report(decisions: &[(AuthDecision, bool)], c1: f64, c2: f64) -> Result<ErrorReport> {
    let positives = decisions.iter().filter(|d| d.1).count();
    let negatives = decisions.len() - positives;
    if positives == 0 {
        return Err(Error::MissingClass("legitimate"));
    }
    if negatives == 0 {
        return Err(Error::MissingClass("imposter"));
    }
    let tp = decisions.iter().filter(|(d, l)| *l && d.accept).count();
    let tn = decisions.iter().filter(|(d, l)| !*l && !d.accept).count();
    let tpr = tp as f64 / positives as f64;
    let tnr = tn as f64 / negatives as f64;
    let fpr = (negatives - tn) as f64 / negatives as f64;
    let fnr = (positives - tp) as f64 / positives as f64;
    let mut r = ErrorReport::from_rates(fpr, fnr, c1, c2)?;
    r.tpr = tpr;
    r.tnr = tnr;
    r.positives = positives;
    r.negatives = negatives;
    Ok(r)
}

/// Unimodal versus AND-fused multimodal error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionReport {
    pub unimodal: ErrorReport,
    pub tremor: ErrorReport,
    pub multimodal: ErrorReport,
    /// `E_m - E_u`
    pub delta: f64,
}

impl FusionReport {
    pub fn new(unimodal: ErrorReport, tremor: ErrorReport, multimodal: ErrorReport) -> Self {
        Self {
            unimodal,
            tremor,
            multimodal,
            delta: multimodal.e - unimodal.e,
        }
    }

    /// Accept-region containment of AND fusion: the fused system never
    /// accepts more imposters, nor rejects fewer legitimate users, than
    /// either modality.
    pub fn containment_holds(&self) -> bool {
        let m = &self.multimodal;
        let eps = 1e-12;
        m.fpr <= self.unimodal.fpr + eps
            && m.fpr <= self.tremor.fpr + eps
            && m.fnr + eps >= self.unimodal.fnr
            && m.fnr + eps >= self.tremor.fnr
    }
}

/// Fuses paired visual/tremor decisions and reports all three systems.
pub fn fusion_report(
    visual: &[AuthDecision],
    tremor: &[AuthDecision],
    legit: &[bool],
    c1: f64,
    c2: f64,
) -> Result<FusionReport> {
    if visual.len() != tremor.len() || visual.len() != legit.len() {
        return Err(Error::LengthMismatch {
            left: visual.len(),
            right: tremor.len(),
        });
    }
    let fused = visual
        .iter()
        .zip(tremor)
        .map(|(v, t)| and_fuse(v, t))
        .collect::<Result<Vec<_>>>()?;
    let pair = |ds: &[AuthDecision]| ds.iter().cloned().zip(legit.iter().copied()).collect::<Vec<_>>();
    Ok(FusionReport::new(
        error_report(&pair(visual), c1, c2)?,
        error_report(&pair(tremor), c1, c2)?,
        error_report(&pair(&fused), c1, c2)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Source;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            values,
            schema_id: FeatureSchema::new(Source::Physical, &["ax"]).id(),
            source: Source::Physical,
        }
    }

    fn clusters() -> Vec<SubjectSamples> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mk = |cx: f64, cy: f64| -> Vec<FeatureVector> {
            (0..20)
                .map(|_| {
                    let dx: f64 = rand::Rng::random_range(&mut rng, -0.5..0.5);
                    let dy: f64 = rand::Rng::random_range(&mut rng, -0.5..0.5);
                    fv(vec![cx + dx, cy + dy])
                })
                .collect()
        };
        vec![("a".into(), mk(0.0, 0.0)), ("b".into(), mk(3.0, 3.0))]
    }

    #[test]
    fn separable_clusters_linear() {
        let p = SvmParams {
            kernel: Kernel::Linear,
            ..Default::default()
        };
        let r = train_classifier(&clusters(), &p, 5, 1).unwrap();
        assert_eq!(r.cv_accuracy, 1.0);
        assert_eq!(r.train_accuracy, 1.0);
    }

    fn xor() -> Vec<SubjectSamples> {
        let pts = |s: f64| -> Vec<FeatureVector> {
            [(1.0, 1.0), (-1.0, -1.0), (1.2, 0.9), (-0.9, -1.1), (0.8, 1.1)]
                .iter()
                .map(|&(x, y)| fv(vec![s * x, y]))
                .collect()
        };
        vec![("a".into(), pts(1.0)), ("b".into(), pts(-1.0))]
    }

    #[test]
    fn xor_needs_quadratic() {
        let q = train_classifier(&xor(), &SvmParams::default(), 1, 0).unwrap();
        assert_eq!(q.train_accuracy, 1.0);
        let lin = SvmParams {
            kernel: Kernel::Linear,
            ..Default::default()
        };
        let l = train_classifier(&xor(), &lin, 1, 0).unwrap();
        assert!(l.train_accuracy <= 0.75, "{}", l.train_accuracy);
    }

    #[test]
    fn kkt_conditions_hold() {
        // brute-force check of the dual optimality conditions
        let sets = xor();
        let x: Vec<Vec<f64>> = sets.iter().flat_map(|s| s.1.iter().map(|f| f.values.clone())).collect();
        let y: Vec<f64> = (0..x.len()).map(|i| if i < 5 { 1.0 } else { -1.0 }).collect();
        let p = SvmParams::default();
        let svm = train_binary(&x, &y, &p).unwrap();
        let sum: f64 = svm.coef.iter().sum();
        assert!(sum.abs() < 1e-9);
        for (xi, yi) in x.iter().zip(&y) {
            let m = yi * svm.decision(xi);
            let coef = svm
                .support
                .iter()
                .position(|s| s == xi)
                .map_or(0.0, |k| svm.coef[k].abs());
            if coef == 0.0 {
                assert!(m >= 1.0 - 2e-3, "{m}");
            } else if coef < p.c {
                assert!((m - 1.0).abs() < 2e-3, "{m}");
            } else {
                assert!(m <= 1.0 + 2e-3, "{m}");
            }
        }
    }

    #[test]
    fn single_subject_rejected() {
        let sets = vec![clusters().remove(0)];
        assert!(train_classifier(&sets, &SvmParams::default(), 5, 0).is_err());
    }

    #[test]
    fn degenerate_classes_reported() {
        let sets = vec![
            ("a".into(), vec![fv(vec![1.0, 2.0]); 5]),
            ("b".into(), vec![fv(vec![1.0, 2.0]); 5]),
        ];
        assert!(matches!(
            train_classifier(&sets, &SvmParams::default(), 5, 0),
            Err(Error::DegenerateClasses(_))
        ));
    }

    #[test]
    fn enumeration_order_invariant() {
        let mut sets = clusters();
        sets.push((
            "c".into(),
            (0..20).map(|i| fv(vec![-3.0 + 0.01 * i as f64, 2.5])).collect(),
        ));
        let r1 = train_classifier(&sets, &SvmParams::default(), 5, 9).unwrap();
        sets.reverse();
        let r2 = train_classifier(&sets, &SvmParams::default(), 5, 9).unwrap();
        assert_eq!(r1.model, r2.model);
        assert_eq!(r1.cv_accuracy, r2.cv_accuracy);
    }

    #[test]
    fn template_round_trip_and_verify() {
        let r = train_classifier(&clusters(), &SvmParams::default(), 5, 0).unwrap();
        let t = Template::new(r.model, "a", "0").unwrap();
        let back = Template::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        let own = t.verify("v", &clusters()[0].1[0]).unwrap();
        assert!(own.accept && own.score > 0.0);
        let other = t.verify("v", &clusters()[1].1[0]).unwrap();
        assert!(!other.accept && other.score < 0.0);
        let mut wrong = clusters()[0].1[0].clone();
        wrong.schema_id = "tremor-v1/rse:tx_rows".into();
        assert!(matches!(t.verify("v", &wrong), Err(Error::SchemaMismatch { .. })));
        assert!(Template::from_text("nonsense").is_err());
    }

    #[test]
    fn stub_operating_points() {
        let s = VisualStub::default();
        assert!(visual_stub("v1", Attack::None, &s).accept);
        assert!(visual_stub("v1", Attack::PerfectMask, &s).accept);
        let strict = VisualStub { tpr: 1.0, tnr: 1.0 };
        assert!(!visual_stub("v1", Attack::PerfectMask, &strict).accept);
    }

    fn dec(accept: bool, modality: Modality) -> AuthDecision {
        AuthDecision {
            video_id: "v".into(),
            accept,
            score: if accept { 0.5 } else { -0.5 },
            modality,
            degenerate: false,
        }
    }

    #[test]
    fn fusion_truth_table() {
        for (v, t) in [(true, true), (true, false), (false, true), (false, false)] {
            let f = and_fuse(&dec(v, Modality::Visual), &dec(t, Modality::Tremor)).unwrap();
            assert_eq!(f.accept, v && t);
            assert_eq!(f.modality, Modality::Fused);
        }
        assert!(matches!(
            and_fuse(&dec(true, Modality::Tremor), &dec(true, Modality::Tremor)),
            Err(Error::ModalityMismatch(_))
        ));
    }

    #[test]
    fn operating_point_arithmetic() {
        for (c1, c2) in [(1.0, 1.0), (2.0, 0.5), (0.0, 3.0)] {
            let m = ErrorReport::from_rates(0.125, 0.083, c1, c2).unwrap();
            let u = ErrorReport::from_rates(1.0, 0.0, c1, c2).unwrap();
            let d = FusionReport::new(u, m, m).delta;
            assert!((d - (-0.875 * c1 + 0.083 * c2)).abs() < 1e-12);
        }
        let m = ErrorReport::from_rates(0.125, 0.083, 1.0, 1.0).unwrap();
        let u = ErrorReport::from_rates(1.0, 0.0, 1.0, 1.0).unwrap();
        assert!((m.e - u.e + 0.792).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier_zero_error() {
        let ds = vec![(dec(true, Modality::Tremor), true), (dec(false, Modality::Tremor), false)];
        let r = error_report(&ds, 3.0, 7.0).unwrap();
        assert_eq!(r.e, 0.0);
        assert!(matches!(
            error_report(&ds[..1], 1.0, 1.0),
            Err(Error::MissingClass(_))
        ));
    }
}
