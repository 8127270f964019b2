use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{block_run, cavi_run, independent_components, BlockPartition};
use crate::error::{check_len, Error, Result};
use crate::fm::fm_run;
use crate::generators::{
    forest_model, load_idx_images, mean_bias, region_block_model, sample_fmm, window_model, FmmSpec, ImageGrid,
};
use crate::linalg::Matrix;
use crate::model::{ridge_loss, ridge_optimum, ConvergenceTrace, GaussianDefModel, Observation, VariationalState};

use super::config::{Algorithm, BiasSource, DataSource, ExperimentConfig, ModelFile, ModelSource, PartitionSource};

pub const CSV_HEADER: &str = "iteration,algorithm,ridge_loss,elbo,fm_bound,gap";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const ORACLE_FILE: &str = "oracle.txt";

/// Relative threshold reported as `iterations_to_1pct`.
const ONE_PERCENT: f64 = 0.01;

/// A fully materialized experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: GaussianDefModel,
    pub x: Observation,
    pub partition: Option<BlockPartition>,
}

#[derive(Debug, Clone)]
pub struct AlgorithmReport {
    pub algorithm: Algorithm,
    pub trace: ConvergenceTrace,
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub oracle_loss: f64,
    pub algorithms: Vec<AlgorithmReport>,
    pub summary_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub oracle_loss: f64,
    pub optimal_mean: Vec<f64>,
    pub path: PathBuf,
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::EmptyModel { n: 0, m: 0 });
    }
    Matrix::from_rows(rows)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn observed_count(source: &ModelSource) -> Result<usize> {
    Ok(match source {
        ModelSource::Window { height, width, .. } | ModelSource::RegionBlock { height, width, .. } => height * width,
        ModelSource::Forest { parents, .. } => parents.len(),
        ModelSource::Fmm { parent_prior, .. } => parent_prior.len(),
        ModelSource::File { path } => read_json::<ModelFile>(path)?.weights.len(),
    })
}

fn build_bias(config: &ExperimentConfig, n: usize) -> Result<Vec<f64>> {
    let bias = match &config.bias {
        BiasSource::Zero => vec![0.0; n],
        BiasSource::MeanOfK { path, k, seed } => {
            mean_bias(&load_idx_images(path)?.images, *k, seed.unwrap_or(config.seed))?
        }
        BiasSource::File { path } => read_json(path)?,
        BiasSource::Values { values } => values.clone(),
    };
    check_len("bias length vs observed variables", n, bias.len())?;
    Ok(bias)
}

fn build_data(config: &ExperimentConfig, n: usize, sampled: Option<Vec<f64>>) -> Result<Observation> {
    let x = match &config.data {
        DataSource::Idx { path, image_index } => {
            let mut images = load_idx_images(path)?.images;
            if *image_index >= images.len() {
                return Err(Error::IndexOutOfRange {
                    index: *image_index,
                    len: images.len(),
                });
            }
            images.swap_remove(*image_index)
        }
        DataSource::Constant { value } => vec![*value; n],
        DataSource::Uniform { low, high, seed } => {
            if !(low < high) {
                return Err(Error::Config(format!("field `data` needs low < high, got [{low}, {high})")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(config.seed));
            (0..n).map(|_| rng.random_range(*low..*high)).collect()
        }
        DataSource::Sampled => sampled.expect("validated: sampled data comes with an fmm model"),
        DataSource::Explicit { values } => values.clone(),
    };
    check_len("data length vs observed variables", n, x.len())?;
    Observation::new(x)
}

/// Builds the model, the observation and the block partition (if any).
pub fn build_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let (sx2, sy2) = (config.sigma_x2, config.sigma_y2);
    let n = observed_count(&config.model)?;
    let mut sampled = None;
    let (model, own_partition) = match &config.model {
        ModelSource::Window { height, width, s } => {
            let grid = ImageGrid::new(*height, *width)?;
            (window_model(grid, *s, build_bias(config, n)?, sx2, sy2)?, None)
        }
        ModelSource::RegionBlock {
            height,
            width,
            region_side,
        } => {
            let grid = ImageGrid::new(*height, *width)?;
            let (model, part) = region_block_model(grid, *region_side, build_bias(config, n)?, sx2, sy2)?;
            (model, Some(part))
        }
        ModelSource::Forest { m, parents, weights } => {
            (forest_model(*m, parents, weights, build_bias(config, n)?, sx2, sy2)?, None)
        }
        ModelSource::Fmm {
            parent_prior,
            edge_weights,
            edge_biases,
            seed,
        } => {
            let spec = FmmSpec::new(
                to_matrix(parent_prior)?,
                sy2,
                sx2,
                to_matrix(edge_weights)?,
                to_matrix(edge_biases)?,
            )?;
            let sample = sample_fmm(&spec, seed.unwrap_or(config.seed));
            let weights: Vec<f64> = sample.e.iter().enumerate().map(|(i, &j)| spec.edge_weights().get(i, j)).collect();
            let extra = build_bias(config, n)?;
            let bias = sample
                .e
                .iter()
                .enumerate()
                .map(|(i, &j)| spec.edge_biases().get(i, j) + extra[i])
                .collect();
            sampled = Some(sample.x);
            (forest_model(spec.m(), &sample.e, &weights, bias, sx2, sy2)?, None)
        }
        ModelSource::File { path } => {
            let file: ModelFile = read_json(path)?;
            (
                GaussianDefModel::new(to_matrix(&file.weights)?, build_bias(config, n)?, sx2, sy2)?,
                None,
            )
        }
    };
    let x = build_data(config, n, sampled)?;
    let partition = match &config.partition {
        Some(PartitionSource::Explicit { blocks }) => Some(BlockPartition::new(blocks.clone(), model.m())?),
        Some(PartitionSource::Components) => Some(independent_components(&model)),
        None => own_partition,
    };
    Ok(Experiment { model, x, partition })
}

fn resolve_output(config: &ExperimentConfig, output_dir: Option<&Path>) -> Result<PathBuf> {
    let dir = output_dir
        .map(Path::to_path_buf)
        .or_else(|| config.output_path.clone())
        .ok_or_else(|| Error::Config("no output directory: set field `output_path` or pass --output-dir".into()))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
}

/// CSV rendering of a trace; floats use the shortest round-trip decimal form.
pub fn trace_csv(algorithm: Algorithm, trace: &ConvergenceTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in trace.rows() {
        write!(out, "{},{},{},{},", row.iteration, algorithm.name(), row.ridge_loss, row.elbo)
            .expect("writing to a String cannot fail");
        push_opt(&mut out, row.fm_bound);
        out.push(',');
        push_opt(&mut out, row.gap);
        out.push('\n');
    }
    out
}

fn oracle_of(exp: &Experiment) -> Result<(Vec<f64>, f64)> {
    let mean = ridge_optimum(&exp.model, &exp.x)?;
    let loss = ridge_loss(&exp.model, &exp.x, &mean)?;
    Ok((mean, loss))
}

/// Runs every configured algorithm and writes `<algorithm>.csv` and
/// `summary.txt` into `output_dir` (or the config's `output_path`).
pub fn run(config: &ExperimentConfig, output_dir: Option<&Path>) -> Result<RunReport> {
    let exp = build_experiment(config)?;
    let dir = resolve_output(config, output_dir)?;
    let (_, oracle_loss) = oracle_of(&exp)?;
    let init = VariationalState::prior(&exp.model);
    let mut summary = String::new();
    writeln!(summary, "sigma_x2={}", config.sigma_x2).unwrap();
    writeln!(summary, "sigma_y2={}", config.sigma_y2).unwrap();
    writeln!(summary, "seed={}", config.seed).unwrap();
    writeln!(summary, "iterations={}", config.iterations).unwrap();
    writeln!(summary, "oracle_loss={oracle_loss}").unwrap();
    let mut algorithms = Vec::new();
    for &algorithm in &config.algorithms {
        let (_, trace) = match algorithm {
            Algorithm::Fm => fm_run(&exp.model, &exp.x, &init, config.iterations)?,
            Algorithm::Cavi => cavi_run(&exp.model, &exp.x, &init, config.iterations)?,
            Algorithm::Block => {
                let partition = exp.partition.as_ref().expect("validated: block has a partition");
                block_run(&exp.model, &exp.x, &init, config.iterations, partition)?
            }
        };
        let csv_path = dir.join(format!("{}.csv", algorithm.name()));
        std::fs::write(&csv_path, trace_csv(algorithm, &trace))?;
        let name = algorithm.name();
        let last = trace.last().expect("a trace always holds the initial row");
        writeln!(summary, "{name}.final_loss={}", last.ridge_loss).unwrap();
        match trace.first_within(oracle_loss, ONE_PERCENT) {
            Some(t) => writeln!(summary, "{name}.iterations_to_1pct={t}").unwrap(),
            None => writeln!(summary, "{name}.iterations_to_1pct=none").unwrap(),
        }
        algorithms.push(AlgorithmReport {
            algorithm,
            trace,
            csv_path,
        });
    }
    let summary_path = dir.join(SUMMARY_FILE);
    std::fs::write(&summary_path, summary)?;
    Ok(RunReport {
        oracle_loss,
        algorithms,
        summary_path,
    })
}

/// Solves the normal equations and writes `oracle.txt` with `oracle_loss`
/// and the comma-separated `optimal_mean`.
pub fn oracle(config: &ExperimentConfig, output_dir: Option<&Path>) -> Result<OracleReport> {
    let exp = build_experiment(config)?;
    let dir = resolve_output(config, output_dir)?;
    let (optimal_mean, oracle_loss) = oracle_of(&exp)?;
    let mean: Vec<String> = optimal_mean.iter().map(f64::to_string).collect();
    let text = format!(
        "oracle_loss={oracle_loss}\noptimal_mean={}\nsigma_x2={}\nsigma_y2={}\nseed={}\n",
        mean.join(","),
        config.sigma_x2,
        config.sigma_y2,
        config.seed
    );
    let path = dir.join(ORACLE_FILE);
    std::fs::write(&path, text)?;
    Ok(OracleReport {
        oracle_loss,
        optimal_mean,
        path,
    })
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a pool of {threads} threads: {e}")))?;
    Ok(pool.install(f))
}
