//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use forest_mixture::generators::{forest_model, window_model, ImageGrid};
use forest_mixture::{AuxParams, GaussianDefModel, Matrix, Observation, VariationalState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dense-ish model with roughly `zero_frac` exact zeros in `W`.
pub fn random_model(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, zero_frac: f64) -> GaussianDefModel {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let mut w = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            if !rng.random_bool(zero_frac) {
                w.set(i, j, rng.random_range(-2.0..=2.0));
            }
        }
    }
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sx2 = rng.random_range(0.5..2.0);
    let sy2 = rng.random_range(0.5..2.0);
    GaussianDefModel::new(w, b, sx2, sy2).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, m: usize) -> VariationalState {
    let mu = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let s2 = (0..m).map(|_| rng.random_range(0.1..=4.0)).collect();
    VariationalState::new(mu, s2).unwrap()
}

pub fn random_observation(rng: &mut ChaCha8Rng, n: usize) -> Observation {
    Observation::new((0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

pub fn random_forest(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> GaussianDefModel {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let parents: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) { -v } else { v }
        })
        .collect();
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    forest_model(m, &parents, &weights, b, rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)).unwrap()
}

/// 28x28 window model with `b = 0` and uniform `x` in `[-1, 1)`.
pub fn window_problem(s: usize, seed: u64) -> (GaussianDefModel, Observation) {
    let grid = ImageGrid::mnist();
    let model = window_model(grid, s, vec![0.0; grid.pixels()], 1.0, 1.0).unwrap();
    (model, uniform_image(grid.pixels(), seed))
}

pub fn uniform_image(n: usize, seed: u64) -> Observation {
    let mut r = rng(seed);
    Observation::new((0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// ELBO from its definition, every term written out with dense loops.
pub fn elbo_oracle(model: &GaussianDefModel, x: &Observation, q: &VariationalState) -> f64 {
    let w = model.weights();
    let (sx2, sy2) = (model.sigma_x2(), model.sigma_y2());
    let tau = std::f64::consts::TAU;
    let mut total = 0.0;
    for i in 0..model.n() {
        let mut mean = model.bias()[i];
        let mut var = 0.0;
        for j in 0..model.m() {
            mean += w.get(i, j) * q.mu()[j];
            var += w.get(i, j).powi(2) * q.sigma2()[j];
        }
        let r = x.as_slice()[i] - mean;
        total += -0.5 * (tau * sx2).ln() - (r * r + var) / (2.0 * sx2);
    }
    for j in 0..model.m() {
        let (mu, s2) = (q.mu()[j], q.sigma2()[j]);
        total += -0.5 * (tau * sy2).ln() - (mu * mu + s2) / (2.0 * sy2);
        total += 0.5 * (tau * std::f64::consts::E * s2).ln();
    }
    total
}

/// Closed-form Jensen gap from dense loops.
pub fn gap_oracle(model: &GaussianDefModel, q: &VariationalState) -> f64 {
    let w = model.weights();
    let mut total = 0.0;
    for i in 0..model.n() {
        let (mut l1, mut l2) = (0.0, 0.0);
        for j in 0..model.m() {
            let t = w.get(i, j).abs() * q.sigma2()[j].sqrt();
            l1 += t;
            l2 += t * t;
        }
        total += l1 * l1 - l2;
    }
    total / (2.0 * model.sigma_x2())
}

/// Ridge minimizer by Gaussian elimination with partial pivoting on the
/// normal equations `(W^T W / sx2 + I / sy2) mu = W^T (x - b) / sx2`.
pub fn normal_equations_oracle(model: &GaussianDefModel, x: &Observation) -> Vec<f64> {
    let (n, m) = (model.n(), model.m());
    let w = model.weights();
    let (sx2, sy2) = (model.sigma_x2(), model.sigma_y2());
    let mut a = vec![vec![0.0; m + 1]; m];
    for r in 0..m {
        for c in 0..m {
            a[r][c] = (0..n).map(|i| w.get(i, r) * w.get(i, c)).sum::<f64>() / sx2;
        }
        a[r][r] += 1.0 / sy2;
        a[r][m] = (0..n).map(|i| w.get(i, r) * (x.as_slice()[i] - model.bias()[i])).sum::<f64>() / sx2;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..m).map(|r| a[r][m] / a[r][r]).collect()
}

/// A feasible auxiliary point: eps mixes the given row weights with a random
/// simplex point on the support, bhat is random with one entry solved from
/// the bias-split constraint. With `off_pattern`, some mass lands on zero
/// weights too.
pub fn random_feasible_aux(
    rng: &mut ChaCha8Rng,
    model: &GaussianDefModel,
    base: &AuxParams,
    off_pattern: bool,
) -> AuxParams {
    let (n, m) = (model.n(), model.m());
    let w = model.weights();
    let (base_eps, _) = base.to_dense();
    let mut eps = Matrix::zeros(n, m);
    let mut bhat = Matrix::zeros(n, m);
    let t: f64 = rng.random_range(0.0..1.0);
    for i in 0..n {
        let allowed: Vec<usize> = (0..m).filter(|&j| off_pattern || w.get(i, j) != 0.0 || base_eps.get(i, j) > 0.0).collect();
        let raw: Vec<f64> = allowed.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (k, &j) in allowed.iter().enumerate() {
            eps.set(i, j, (1.0 - t) * base_eps.get(i, j) + t * raw[k] / total);
        }
        let top = allowed
            .iter()
            .copied()
            .max_by(|&a, &b| eps.get(i, a).total_cmp(&eps.get(i, b)))
            .unwrap();
        let mut split = 0.0;
        for &j in &allowed {
            if j != top {
                let v = rng.random_range(-3.0..3.0);
                bhat.set(i, j, v);
                split += eps.get(i, j) * v;
            }
        }
        bhat.set(i, top, (model.bias()[i] - split) / eps.get(i, top));
    }
    AuxParams::from_dense(model, &eps, &bhat).unwrap()
}
