use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Experiment description read from a single JSON document. Unknown keys are
/// rejected at every level.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default = "unit_variance")]
    pub sigma_x2: f64,
    #[serde(default = "unit_variance")]
    pub sigma_y2: f64,
    pub data: DataSource,
    #[serde(default)]
    pub bias: BiasSource,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub partition: Option<PartitionSource>,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn unit_variance() -> f64 {
    1.0
}

fn mnist_side() -> usize {
    28
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Window {
        #[serde(default = "mnist_side")]
        height: usize,
        #[serde(default = "mnist_side")]
        width: usize,
        s: usize,
    },
    RegionBlock {
        #[serde(default = "mnist_side")]
        height: usize,
        #[serde(default = "mnist_side")]
        width: usize,
        #[serde(default = "region_side")]
        region_side: usize,
    },
    /// 0-based `parents[i]` with edge weight `weights[i]`.
    Forest {
        m: usize,
        parents: Vec<usize>,
        weights: Vec<f64>,
    },
    /// Samples `(x, e)` from a forest mixture and fits the forest selected by `e`.
    Fmm {
        parent_prior: Vec<Vec<f64>>,
        edge_weights: Vec<Vec<f64>>,
        edge_biases: Vec<Vec<f64>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// JSON file `{"weights": [[...], ...]}`.
    File { path: PathBuf },
}

fn region_side() -> usize {
    7
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Idx {
        path: PathBuf,
        #[serde(default)]
        image_index: usize,
    },
    Constant {
        value: f64,
    },
    /// Independent `U[low, high)` pixels; the seed defaults to the top-level one.
    Uniform {
        #[serde(default = "minus_one")]
        low: f64,
        #[serde(default = "plus_one")]
        high: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// The `x` drawn by an `fmm` model source.
    Sampled,
    Explicit {
        values: Vec<f64>,
    },
}

fn minus_one() -> f64 {
    -1.0
}

fn plus_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BiasSource {
    #[default]
    Zero,
    /// Mean of `k` images of an IDX file; the seed defaults to the top-level one.
    MeanOfK {
        path: PathBuf,
        #[serde(default = "thousand")]
        k: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// JSON array file.
    File { path: PathBuf },
    Values { values: Vec<f64> },
}

fn thousand() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSource {
    /// 0-based latent indices.
    Explicit { blocks: Vec<Vec<usize>> },
    /// Connected components of the latent overlap graph.
    Components,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fm,
    Cavi,
    Block,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fm => "fm",
            Algorithm::Cavi => "cavi",
            Algorithm::Block => "block",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ModelFile {
    pub weights: Vec<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks the cross-field invariants that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("field `algorithms` must not be empty".into()));
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..k].contains(a) {
                return Err(Error::Config(format!("field `algorithms` lists `{}` twice", a.name())));
            }
        }
        for (name, v) in [("sigma_x2", self.sigma_x2), ("sigma_y2", self.sigma_y2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("field `{name}` must be positive, got {v}")));
            }
        }
        let region = matches!(self.model, ModelSource::RegionBlock { .. });
        if self.algorithms.contains(&Algorithm::Block) && self.partition.is_none() && !region {
            return Err(Error::Config(
                "algorithm `block` needs field `partition` unless the model is `region_block`".into(),
            ));
        }
        let fmm = matches!(self.model, ModelSource::Fmm { .. });
        if matches!(self.data, DataSource::Sampled) != fmm {
            return Err(Error::Config("field `data` of kind `sampled` goes with model kind `fmm` and only with it".into()));
        }
        Ok(())
    }
}
