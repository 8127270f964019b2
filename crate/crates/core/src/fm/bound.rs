use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::{accurate_sum, NeumaierSum};
use crate::model::{gaussian_kl, AffineLayer, GaussianDefModel, Observation, VariationalState};

use super::aux::AuxParams;
use super::PAR_MIN_LEN;

/// FM lower bound on the ELBO:
/// `sum_i sum_j eps_ij E[log p_hat(x_i | y_j)] - sum_j KL(q(y_j) || p(y_j))`.
///
/// Positions with `eps_ij = 0` and `w_ij = 0` contribute nothing.
pub fn fm_bound(model: &GaussianDefModel, x: &Observation, q: &VariationalState, aux: &AuxParams) -> Result<f64> {
    model.check_observation(x)?;
    model.check_state(q)?;
    aux.validate(model.layer())?;
    Ok(fm_bound_unchecked(model, x.as_slice(), q, aux))
}

pub(crate) fn fm_bound_unchecked(model: &GaussianDefModel, x: &[f64], q: &VariationalState, aux: &AuxParams) -> f64 {
    let lik = likelihood_bound(model.layer(), model.sigma_x2(), x, None, q, aux);
    let kl = accurate_sum(
        q.mu()
            .iter()
            .zip(q.sigma2())
            .map(|(&m, &s)| gaussian_kl(m, s, model.sigma_y2())),
    );
    lik - kl
}

/// `sum_i sum_j eps_ij E[log N(c_i; eta_hat_ij, sigma2)]` where child `i` has
/// mean `child_mean[i]` and variance `child_var[i]` (zero when observed) and
/// the parents follow `parent`.
pub(crate) fn likelihood_bound(
    layer: &AffineLayer,
    sigma2: f64,
    child_mean: &[f64],
    child_var: Option<&[f64]>,
    parent: &VariationalState,
    aux: &AuxParams,
) -> f64 {
    let p = layer.pattern();
    let (eps, bhat) = aux.on_pattern();
    let log_norm = -0.5 * (2.0 * PI * sigma2).ln();
    let inv = 1.0 / (2.0 * sigma2);
    let rows: Vec<f64> = (0..layer.n())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|i| {
            let c = child_mean[i];
            let cv = child_var.map_or(0.0, |v| v[i]);
            let mut row = NeumaierSum::new();
            for k in p.row_range(i) {
                let (j, w, e) = (p.col_of(k), p.value(k), eps[k]);
                let d = c - (bhat[k] + w * parent.mu()[j] / e);
                // e * (d^2 + cv + w^2 s^2 / e^2), folded so small e cannot overflow
                row.add(e * (log_norm - (d * d + cv) * inv) - w * w * parent.sigma2()[j] / e * inv);
            }
            for o in aux.off_pattern(i) {
                let d = c - o.bhat;
                row.add(o.eps * (log_norm - (d * d + cv) * inv));
            }
            row.value()
        })
        .collect();
    accurate_sum(rows)
}

/// Jensen gap between the ELBO and the FM bound at the optimal auxiliary
/// parameters: `(1 / 2 sigma_x2) sum_i ||w_i ⊙ Std[y]||_1^2 - ||w_i ⊙ Std[y]||_2^2`.
pub fn jensen_gap(model: &GaussianDefModel, q: &VariationalState) -> Result<f64> {
    model.check_state(q)?;
    Ok(layer_gap(model.layer(), model.sigma_x2(), q))
}

pub(crate) fn layer_gap(layer: &AffineLayer, sigma2: f64, q: &VariationalState) -> f64 {
    let p = layer.pattern();
    let std = q.std();
    let rows = (0..layer.n()).map(|i| {
        let (l1, l2sq) = p.row_entries(i).fold((0.0, 0.0), |(a, b), (j, w)| {
            let t = w.abs() * std[j];
            (a + t, b + t * t)
        });
        l1 * l1 - l2sq
    });
    accurate_sum(rows) / (2.0 * sigma2)
}
