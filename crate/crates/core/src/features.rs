//! Fixed-length tremor feature vectors from motion traces.
//!
//! Every axis contributes [`PER_AXIS`] values in the order of
//! [`FEATURE_NAMES`]; axes are concatenated in schema order. The full list is
//! documented in `features.md` at the crate root.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sigcore::{power_spectrum, resample, MotionTrace};

/// Version tag of the feature list below. Bump when the list changes.
pub const SCHEMA_VERSION: &str = "tremor-v1";

pub const FEATURE_NAMES: [&str; 14] = [
    "mean",
    "std",
    "rms",
    "skewness",
    "kurtosis",
    "zcr",
    "peak_to_peak",
    "mean_abs_diff",
    "dominant_hz",
    "band_2_6",
    "band_6_10",
    "band_10_14",
    "centroid_hz",
    "entropy",
];

pub const PER_AXIS: usize = FEATURE_NAMES.len();

pub const TREMOR_BAND: (f64, f64) = (2.0, 20.0);
pub const SUB_BANDS: [(f64, f64); 3] = [(2.0, 6.0), (6.0, 10.0), (10.0, 14.0)];

/// Minimum trace length, seconds.
pub const MIN_DURATION_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Physical,
    Ite,
    Rse,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Physical, Source::Ite, Source::Rse];

    /// Rate every trace of this source is resampled to before extraction.
    pub fn canonical_rate(self) -> f64 {
        match self {
            Source::Physical => 400.0,
            Source::Ite => 30.0,
            Source::Rse => 2000.0,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Physical => "physical",
            Source::Ite => "ite",
            Source::Rse => "rse",
        })
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Source::Physical),
            "ite" => Ok(Source::Ite),
            "rse" => Ok(Source::Rse),
            _ => Err(Error::Unknown {
                kind: "method",
                name: s.to_string(),
            }),
        }
    }
}

/// Binds a source and an ordered axis list to the feature list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub source: Source,
    pub axes: Vec<String>,
}

impl FeatureSchema {
    pub fn new(source: Source, axes: &[&str]) -> Self {
        Self {
            source,
            axes: axes.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Schema used by the experiment pipeline for each source.
    pub fn default_for(source: Source) -> Self {
        match source {
            Source::Physical => Self::new(source, &["ax", "ay"]),
            Source::Ite => Self::new(source, &crate::register::MATRIX_AXES),
            Source::Rse => Self::new(source, &["tx_rows", "ty_rows"]),
        }
    }

    /// e.g. `tremor-v1/rse:tx_rows,ty_rows`
    pub fn id(&self) -> String {
        format!("{SCHEMA_VERSION}/{}:{}", self.source, self.axes.join(","))
    }

    pub fn parse_id(id: &str) -> Result<Self> {
        let bad = || Error::parse("schema id", format!("'{id}'"));
        let rest = id
            .strip_prefix(SCHEMA_VERSION)
            .and_then(|r| r.strip_prefix('/'))
            .ok_or_else(bad)?;
        let (src, axes) = rest.split_once(':').ok_or_else(bad)?;
        let axes: Vec<String> = axes.split(',').map(str::to_string).collect();
        if axes.iter().any(String::is_empty) {
            return Err(bad());
        }
        Ok(Self {
            source: src.parse()?,
            axes,
        })
    }

    pub fn len(&self) -> usize {
        self.axes.len() * PER_AXIS
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    /// Column names, `<axis>.<feature>`.
    pub fn names(&self) -> Vec<String> {
        self.axes
            .iter()
            .flat_map(|a| FEATURE_NAMES.iter().map(move |f| format!("{a}.{f}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_id: String,
    pub source: Source,
}

/// Resamples `trace` to the schema source's canonical rate and extracts the
/// schema's features.
pub fn extract_features(trace: &MotionTrace, schema: &FeatureSchema) -> Result<FeatureVector> {
    let needed = (MIN_DURATION_S * trace.sample_rate()).ceil() as usize;
    if trace.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: trace.len(),
        });
    }
    let canon = resample(trace, schema.source.canonical_rate())?;
    let mut values = Vec::with_capacity(schema.len());
    for axis in &schema.axes {
        values.extend(axis_features(canon.axis_or_err(axis)?, canon.sample_rate())?);
    }
    Ok(FeatureVector {
        values,
        schema_id: schema.id(),
        source: schema.source,
    })
}

/// The [`FEATURE_NAMES`] values of one axis.
pub fn axis_features(x: &[f64], rate: f64) -> Result<[f64; PER_AXIS]> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = m2.sqrt();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let (max, min) = x
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    let mad = if x.len() > 1 {
        x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    // Relative threshold so round-off on a constant signal counts as constant.
    let constant = std <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) || m2 == 0.0;
    if constant {
        return Ok([mean, 0.0, rms, 0.0, 0.0, 0.0, max - min, mad, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
    let skew = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n / m2.powf(1.5);
    let kurt = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (m2 * m2);
    let mut crossings = 0usize;
    let mut prev_sign = 0.0f64;
    for v in x {
        let s = (v - mean).signum();
        if v - mean != 0.0 {
            if prev_sign != 0.0 && s != prev_sign {
                crossings += 1;
            }
            prev_sign = s;
        }
    }
    let zcr = crossings as f64 / (n - 1.0);

    let spec = power_spectrum(x, rate)?;
    let (lo, hi) = TREMOR_BAND;
    let in_band: Vec<(f64, f64)> = spec
        .power
        .iter()
        .enumerate()
        .map(|(k, &p)| (spec.frequency(k), p))
        .filter(|&(f, _)| f >= lo && f <= hi)
        .collect();
    let total: f64 = in_band.iter().map(|&(_, p)| p).sum();
    let spectral = if total > 0.0 && !in_band.is_empty() {
        let dominant = in_band
            .iter()
            .fold((0.0, f64::NEG_INFINITY), |best, &(f, p)| if p > best.1 { (f, p) } else { best })
            .0;
        let frac = |(a, b): (f64, f64)| {
            in_band
                .iter()
                .filter(|&&(f, _)| f >= a && f < b)
                .map(|&(_, p)| p)
                .sum::<f64>()
                / total
        };
        let centroid = in_band.iter().map(|&(f, p)| f * p).sum::<f64>() / total;
        let entropy = if in_band.len() > 1 {
            -in_band
                .iter()
                .map(|&(_, p)| p / total)
                .filter(|&q| q > 0.0)
                .map(|q| q * q.ln())
                .sum::<f64>()
                / (in_band.len() as f64).ln()
        } else {
            0.0
        };
        [
            dominant,
            frac(SUB_BANDS[0]),
            frac(SUB_BANDS[1]),
            frac(SUB_BANDS[2]),
            centroid,
            entropy,
        ]
    } else {
        [0.0; 6]
    };
    Ok([
        mean,
        std,
        rms,
        skew,
        kurt,
        zcr,
        max - min,
        mad,
        spectral[0],
        spectral[1],
        spectral[2],
        spectral[3],
        spectral[4],
        spectral[5],
    ])
}

/// Feature dump CSV: `video_id,<schema names>` then one row per vector.
pub fn features_csv(schema: &FeatureSchema, rows: &[(String, FeatureVector)]) -> Result<String> {
    let mut out = String::from("video_id");
    for n in schema.names() {
        out.push(',');
        out.push_str(&n);
    }
    out.push('\n');
    let id = schema.id();
    for (video, fv) in rows {
        if fv.schema_id != id {
            return Err(Error::SchemaMismatch {
                expected: id,
                got: fv.schema_id.clone(),
            });
        }
        out.push_str(video);
        for v in &fv.values {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}
