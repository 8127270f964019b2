use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::model::check_variance;

/// Forest mixture model: observed `i` picks its parent `e_i` from
/// `parent_prior[i]`, then `x_i ~ N(edge_biases[i][e_i] + edge_weights[i][e_i] y_{e_i}, cond_var)`.
#[derive(Debug, Clone)]
pub struct FmmSpec {
    parent_prior: Matrix,
    prior_var: f64,
    cond_var: f64,
    edge_weights: Matrix,
    edge_biases: Matrix,
}

impl FmmSpec {
    pub fn new(parent_prior: Matrix, prior_var: f64, cond_var: f64, edge_weights: Matrix, edge_biases: Matrix) -> Result<Self> {
        check_variance("prior variance", prior_var)?;
        check_variance("conditional variance", cond_var)?;
        let (n, m) = (parent_prior.rows(), parent_prior.cols());
        if n == 0 || m == 0 {
            return Err(Error::EmptyModel { n, m });
        }
        for other in [&edge_weights, &edge_biases] {
            check_len("edge parameter rows", n, other.rows())?;
            check_len("edge parameter cols", m, other.cols())?;
        }
        for (what, mat) in [("edge weights", &edge_weights), ("edge biases", &edge_biases)] {
            if let Some(index) = mat.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEntry { what, index });
            }
        }
        for i in 0..n {
            let row = parent_prior.row(i);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidParameter(format!("parent prior row {i} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("parent prior row {i} sums to {total}")));
            }
        }
        Ok(Self {
            parent_prior,
            prior_var,
            cond_var,
            edge_weights,
            edge_biases,
        })
    }

    pub fn n(&self) -> usize {
        self.parent_prior.rows()
    }

    pub fn m(&self) -> usize {
        self.parent_prior.cols()
    }

    pub fn parent_prior(&self) -> &Matrix {
        &self.parent_prior
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    pub fn cond_var(&self) -> f64 {
        self.cond_var
    }

    pub fn edge_weights(&self) -> &Matrix {
        &self.edge_weights
    }

    pub fn edge_biases(&self) -> &Matrix {
        &self.edge_biases
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmmSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// 0-based parent of every observed variable.
    pub e: Vec<usize>,
}

/// Ancestral sample using ChaCha8 seeded by `seed`: all `e_i` first, then
/// all `y_j`, then all `x_i`.
pub fn sample_fmm(spec: &FmmSpec, seed: u64) -> FmmSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<usize> = (0..spec.n())
        .map(|i| {
            WeightedIndex::new(spec.parent_prior.row(i))
                .expect("validated categorical")
                .sample(&mut rng)
        })
        .collect();
    let prior = Normal::new(0.0, spec.prior_var.sqrt()).expect("positive variance");
    let y: Vec<f64> = (0..spec.m()).map(|_| prior.sample(&mut rng)).collect();
    let noise = Normal::new(0.0, spec.cond_var.sqrt()).expect("positive variance");
    let x = e
        .iter()
        .enumerate()
        .map(|(i, &j)| spec.edge_biases.get(i, j) + spec.edge_weights.get(i, j) * y[j] + noise.sample(&mut rng))
        .collect();
    FmmSample { x, y, e }
}
