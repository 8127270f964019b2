//! Auxiliary simplex weights `eps` and split biases `bhat`, and their
//! closed-form optimum for a fixed variational state.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg::{Matrix, SparsePattern};
use crate::model::{AffineLayer, GaussianDefModel, VariationalState};

use super::PAR_MIN_LEN;

/// Row sums of `eps` must equal 1 within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// `sum_j eps_ij bhat_ij` must equal `b_i` within this tolerance (scaled by
/// the magnitude of the summands).
pub const BIAS_SPLIT_TOL: f64 = 1e-9;

/// Auxiliary parameters of the FM bound for one affine layer.
///
/// Storage follows the weight sparsity: one `(eps, bhat)` pair per nonzero
/// weight, plus an explicit list per row of positions where `w_ij = 0` but
/// `eps_ij != 0`. Every other position has `eps_ij = 0`; its `bhat_ij` has no
/// effect on any objective and reads back as the row's fill value.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxParams {
    pattern: Arc<SparsePattern>,
    eps: Vec<f64>,
    bhat: Vec<f64>,
    extra: Vec<Vec<OffPattern>>,
    bhat_fill: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OffPattern {
    pub col: usize,
    pub eps: f64,
    pub bhat: f64,
}

impl AuxParams {
    /// Builds auxiliary parameters from dense `n x m` matrices.
    pub fn from_dense(model: &GaussianDefModel, eps: &Matrix, bhat: &Matrix) -> Result<Self> {
        Self::from_dense_layer(model.layer(), eps, bhat)
    }

    pub fn from_dense_layer(layer: &AffineLayer, eps: &Matrix, bhat: &Matrix) -> Result<Self> {
        for m in [eps, bhat] {
            check_len("aux rows", layer.n(), m.rows())?;
            check_len("aux cols", layer.m(), m.cols())?;
        }
        let pattern = Arc::clone(layer.pattern());
        let mut on_eps = Vec::with_capacity(pattern.nnz());
        let mut on_bhat = Vec::with_capacity(pattern.nnz());
        let mut extra = Vec::with_capacity(layer.n());
        let mut bhat_fill = Vec::with_capacity(layer.n());
        for i in 0..layer.n() {
            let mut row_extra = Vec::new();
            let mut fill = None;
            let mut on = pattern.row_range(i).peekable();
            for j in 0..layer.m() {
                if on.peek().is_some_and(|&p| pattern.col_of(p) == j) {
                    on.next();
                    on_eps.push(eps.get(i, j));
                    on_bhat.push(bhat.get(i, j));
                } else if eps.get(i, j) != 0.0 {
                    row_extra.push(OffPattern {
                        col: j,
                        eps: eps.get(i, j),
                        bhat: bhat.get(i, j),
                    });
                } else if fill.is_none() {
                    fill = Some(bhat.get(i, j));
                }
            }
            extra.push(row_extra);
            bhat_fill.push(fill.unwrap_or(0.0));
        }
        Ok(Self {
            pattern,
            eps: on_eps,
            bhat: on_bhat,
            extra,
            bhat_fill,
        })
    }

    pub fn n(&self) -> usize {
        self.pattern.rows()
    }

    pub fn m(&self) -> usize {
        self.pattern.cols()
    }

    pub fn eps(&self, i: usize, j: usize) -> f64 {
        match self.pattern.position(i, j) {
            Some(p) => self.eps[p],
            None => self.extra[i]
                .iter()
                .find(|e| e.col == j)
                .map_or(0.0, |e| e.eps),
        }
    }

    pub fn bhat(&self, i: usize, j: usize) -> f64 {
        match self.pattern.position(i, j) {
            Some(p) => self.bhat[p],
            None => self.extra[i]
                .iter()
                .find(|e| e.col == j)
                .map_or(self.bhat_fill[i], |e| e.bhat),
        }
    }

    pub fn to_dense(&self) -> (Matrix, Matrix) {
        let (n, m) = (self.n(), self.m());
        let mut eps = Matrix::zeros(n, m);
        let mut bhat = Matrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                bhat.set(i, j, self.bhat_fill[i]);
            }
            for e in &self.extra[i] {
                eps.set(i, e.col, e.eps);
                bhat.set(i, e.col, e.bhat);
            }
            for p in self.pattern.row_range(i) {
                eps.set(i, self.pattern.col_of(p), self.eps[p]);
                bhat.set(i, self.pattern.col_of(p), self.bhat[p]);
            }
        }
        (eps, bhat)
    }

    pub(crate) fn on_pattern(&self) -> (&[f64], &[f64]) {
        (&self.eps, &self.bhat)
    }

    pub(crate) fn off_pattern(&self, i: usize) -> &[OffPattern] {
        &self.extra[i]
    }

    /// Checks that these parameters belong to `layer` and satisfy the simplex
    /// and bias-split constraints. A zero `eps` where the weight is nonzero is
    /// reported as a division hazard.
    pub fn validate(&self, layer: &AffineLayer) -> Result<()> {
        if !Arc::ptr_eq(&self.pattern, layer.pattern()) && *self.pattern != **layer.pattern() {
            return Err(Error::InvalidAux(
                "parameters were built for a different weight matrix".into(),
            ));
        }
        let p = &self.pattern;
        for i in 0..p.rows() {
            for q in p.row_range(i) {
                if self.eps[q] == 0.0 {
                    return Err(Error::DivisionHazard {
                        row: i,
                        col: p.col_of(q),
                    });
                }
            }
        }
        for i in 0..p.rows() {
            let entries = p
                .row_range(i)
                .map(|q| (p.col_of(q), self.eps[q], self.bhat[q]))
                .chain(self.extra[i].iter().map(|e| (e.col, e.eps, e.bhat)));
            let mut sum = 0.0;
            let mut split = 0.0;
            let mut scale = layer.bias()[i].abs();
            for (j, e, bh) in entries {
                if !(e >= 0.0) || !e.is_finite() {
                    return Err(Error::InvalidAux(format!("eps[{i}][{j}] = {e} is not a probability")));
                }
                if !bh.is_finite() {
                    return Err(Error::InvalidAux(format!("bhat[{i}][{j}] is not finite")));
                }
                sum += e;
                if e > 0.0 {
                    split += e * bh;
                    scale += (e * bh).abs();
                }
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidAux(format!("row {i} of eps sums to {sum}")));
            }
            if (split - layer.bias()[i]).abs() > BIAS_SPLIT_TOL * (1.0 + scale) {
                return Err(Error::InvalidAux(format!(
                    "row {i}: sum_j eps_ij bhat_ij = {split}, bias is {}",
                    layer.bias()[i]
                )));
            }
        }
        Ok(())
    }
}

/// Closed-form maximizer of the FM bound over `(eps, bhat)` for fixed `q`:
/// `eps_ij ∝ |w_ij| Std[y_j]` and `bhat_ij = E[eta_i] - w_ij mu_j / eps_ij`.
pub fn optimal_aux(model: &GaussianDefModel, q: &VariationalState) -> Result<AuxParams> {
    model.check_state(q)?;
    Ok(optimal_aux_layer(model.layer(), q))
}

/// As [`optimal_aux`] for an arbitrary affine layer whose parents follow `q`.
pub fn optimal_aux_layer(layer: &AffineLayer, q: &VariationalState) -> AuxParams {
    let p = layer.pattern();
    let std = q.std();
    let mu = q.mu();
    let n = layer.n();

    let row_stats: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|i| {
            let l1: f64 = p.row_entries(i).map(|(j, w)| w.abs() * std[j]).sum();
            let eta = layer.bias()[i] + p.row_dot(i, mu);
            (l1, eta)
        })
        .collect();

    let mut eps = vec![0.0; p.nnz()];
    let mut bhat = vec![0.0; p.nnz()];
    eps.par_iter_mut()
        .zip(bhat.par_iter_mut())
        .enumerate()
        .with_min_len(PAR_MIN_LEN)
        .for_each(|(k, (e, bh))| {
            let (i, j, w) = (p.row_of(k), p.col_of(k), p.value(k));
            let (l1, eta) = row_stats[i];
            *e = w.abs() * std[j] / l1;
            *bh = eta - w * mu[j] / *e;
        });

    let mut extra = vec![Vec::new(); n];
    let mut bhat_fill = Vec::with_capacity(n);
    for i in 0..n {
        if p.row_range(i).is_empty() {
            // Constant row: every simplex point is optimal; use the uniform one.
            let u = 1.0 / layer.m() as f64;
            let b = layer.bias()[i];
            extra[i] = (0..layer.m())
                .map(|col| OffPattern { col, eps: u, bhat: b })
                .collect();
            bhat_fill.push(b);
        } else {
            bhat_fill.push(row_stats[i].1);
        }
    }

    AuxParams {
        pattern: Arc::clone(p),
        eps,
        bhat,
        extra,
        bhat_fill,
    }
}

/// Per-row auxiliary objective `L_i = sum_j eps_ij E[-a(eta_hat_ij)]` with the
/// Gaussian log-partition `a(eta) = eta^2 / (2 sigma_x2)`. Only these terms of
/// the FM bound depend on `(eps, bhat)`.
pub fn aux_objective(model: &GaussianDefModel, q: &VariationalState, aux: &AuxParams) -> Result<Vec<f64>> {
    model.check_state(q)?;
    aux.validate(model.layer())?;
    let p = model.pattern();
    let s = 2.0 * model.sigma_x2();
    Ok((0..model.n())
        .map(|i| {
            let on: f64 = p
                .row_range(i)
                .map(|k| {
                    let (j, w) = (p.col_of(k), p.value(k));
                    let (e, bh) = (aux.eps[k], aux.bhat[k]);
                    let mean = bh + w * q.mu()[j] / e;
                    w * w * q.sigma2()[j] / e + e * mean * mean
                })
                .sum();
            let off: f64 = aux.extra[i].iter().map(|o| o.eps * o.bhat * o.bhat).sum();
            -(on + off) / s
        })
        .collect())
}
