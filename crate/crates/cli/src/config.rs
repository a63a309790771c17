//! Experiment configuration with a content fingerprint.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use twr_core::sampling::{sample_tree, NoiseDistribution};
use twr_core::{EdgeVector, Exponent, Measure, Metric, Tree, UncertaintySpec};

use crate::error::{CliError, Context, Result};
use crate::formats::{
    read_beta, read_measure_dir, read_points, read_text, read_tree, MatrixFormat,
};
use crate::parallel::Evaluation;

/// The radius grid used when none is given.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0];

/// An exponent that serializes as a number, or as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue(pub Exponent);

impl Default for PValue {
    fn default() -> Self {
        PValue(Exponent::TWO)
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for PValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<Exponent>()
            .map(PValue)
            .map_err(|_| format!("`{s}` is not a number ≥ 1 or `inf`"))
    }
}

impl Serialize for PValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0.value())
        }
    }
}

impl<'de> Deserialize<'de> for PValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PVisitor;
        impl Visitor<'_> for PVisitor {
            type Value = PValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number ≥ 1 or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<PValue, E> {
                Exponent::new(v).map(PValue).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PValue, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PValue, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<PValue, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(PVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TreeSource {
    File {
        path: PathBuf,
    },
    Sample {
        points: PathBuf,
        branching: usize,
        depth: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum MetricConfig {
    Tw,
    RtBox {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    RtBall {
        p: PValue,
        lambda: f64,
    },
}

impl MetricConfig {
    /// Resolve against a tree, reading the beta file if there is one.
    pub fn build(&self, tree: &Tree) -> Result<Metric> {
        Ok(match self {
            MetricConfig::Tw => Metric::Tw,
            MetricConfig::RtBox { beta_file, beta } => {
                let beta = match (beta_file, beta) {
                    (Some(path), None) => {
                        let (alpha, beta) = read_beta(path, tree)?;
                        UncertaintySpec::Box {
                            alpha,
                            beta: beta.clone(),
                        }
                        .validate(tree)
                        .context(path.display())?;
                        beta
                    }
                    (None, Some(b)) => EdgeVector::constant(tree.edge_count(), *b),
                    _ => {
                        return Err(CliError::config(
                            "rt-box needs exactly one of a beta file or a constant beta",
                        ))
                    }
                };
                Metric::RtBox { beta }
            }
            MetricConfig::RtBall { p, lambda } => Metric::RtBall {
                p: p.0,
                lambda: *lambda,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    UniformSigned,
    UniformPositive,
}

impl From<NoiseKind> for NoiseDistribution {
    fn from(k: NoiseKind) -> Self {
        match k {
            NoiseKind::UniformSigned => NoiseDistribution::UniformSigned,
            NoiseKind::UniformPositive => NoiseDistribution::UniformPositive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub distribution: NoiseKind,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            deltas: vec![0.0],
            seed: 0,
            distribution: NoiseKind::default(),
        }
    }
}

/// Kernel bandwidths: explicit `t` values and/or quantile levels (percent).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BandwidthConfig {
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub quantiles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
}

/// `path` is a file for single-matrix runs and a directory otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: MatrixFormat,
}

fn default_lambda_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub tree: TreeSource,
    pub measures: PathBuf,
    #[serde(default)]
    pub normalize: bool,
    pub metric: MetricConfig,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    /// Exponent of the ball in sweeps; falls back to the metric's, then 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_p: Option<PValue>,
    #[serde(default)]
    pub bandwidth: BandwidthConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::from_json(&read_text(path)?)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::config(format!(
                    "{}: no such file or directory",
                    p.display()
                )))
            }
        };
        match &self.tree {
            TreeSource::File { path } => must_exist(path)?,
            TreeSource::Sample { points, .. } => must_exist(points)?,
        }
        must_exist(&self.measures)?;
        if let MetricConfig::RtBox {
            beta_file: Some(path),
            ..
        } = &self.metric
        {
            must_exist(path)?;
        }
        if let Some(&bad) = self
            .lambda_grid
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(CliError::config(format!(
                "lambda grid entries must be > 0, got {bad}"
            )));
        }
        if let Some(&bad) = self
            .noise
            .deltas
            .iter()
            .find(|d| !(d.is_finite() && **d >= 0.0))
        {
            return Err(CliError::config(format!(
                "noise deltas must be ≥ 0, got {bad}"
            )));
        }
        if let Some(&bad) = self
            .bandwidth
            .t
            .iter()
            .find(|t| !(t.is_finite() && **t > 0.0))
        {
            return Err(CliError::config(format!(
                "bandwidths must be > 0, got {bad}"
            )));
        }
        if let Some(&bad) = self
            .bandwidth
            .quantiles
            .iter()
            .find(|q| !(0.0..=100.0).contains(*q))
        {
            return Err(CliError::config(format!(
                "quantile levels are percents, got {bad}"
            )));
        }
        Ok(())
    }

    pub fn load_tree(&self) -> Result<Tree> {
        match &self.tree {
            TreeSource::File { path } => read_tree(path),
            TreeSource::Sample {
                points,
                branching,
                depth,
                seed,
            } => {
                let cloud = read_points(points)?;
                Ok(sample_tree(&cloud, *branching, *depth, *seed)
                    .context(points.display())?
                    .tree)
            }
        }
    }

    pub fn load_measures(&self, tree: &Tree) -> Result<Vec<Measure>> {
        read_measure_dir(&self.measures, tree, self.normalize)
    }

    pub fn sweep_exponent(&self) -> Exponent {
        match (self.sweep_p, &self.metric) {
            (Some(p), _) => p.0,
            (None, MetricConfig::RtBall { p, .. }) => p.0,
            _ => Exponent::TWO,
        }
    }
}
