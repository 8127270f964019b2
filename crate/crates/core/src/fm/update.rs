use rayon::prelude::*;

use crate::error::Result;
use crate::model::{
    elbo, ridge_loss_from_eta, ConvergenceTrace, GaussianDefModel, Observation, VariationalState,
};

use super::aux::{optimal_aux_layer, AuxParams};
use super::bound::{fm_bound_unchecked, layer_gap};
use super::PAR_MIN_LEN;

/// Maximizes the FM bound over `q` for fixed auxiliary parameters. Every
/// latent is updated independently from the same incoming state:
///
/// `sigma2_j = 1 / (1/sigma_y2 + (1/sigma_x2) S_j)`,
/// `mu_j = sum_i w_ij (x_i - bhat_ij) / (sigma_x2/sigma_y2 + S_j)`,
/// with `S_j = sum_i w_ij^2 / eps_ij` over the nonzero weights of column `j`.
///
/// At `aux = optimal_aux(q)` the numerator equals
/// `(x - E[eta]) · w_j + mu_j S_j`.
pub fn fm_variational_step(
    model: &GaussianDefModel,
    x: &Observation,
    q: &VariationalState,
    aux: &AuxParams,
) -> Result<VariationalState> {
    model.check_observation(x)?;
    model.check_state(q)?;
    aux.validate(model.layer())?;
    Ok(step_unchecked(model, x.as_slice(), aux))
}

pub(crate) fn step_unchecked(model: &GaussianDefModel, x: &[f64], aux: &AuxParams) -> VariationalState {
    let p = model.pattern();
    let (eps, bhat) = aux.on_pattern();
    let (sx2, sy2) = (model.sigma_x2(), model.sigma_y2());
    let ratio = sx2 / sy2;
    let (mu, sigma2): (Vec<f64>, Vec<f64>) = (0..model.m())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|j| {
            let mut s = 0.0;
            let mut num = 0.0;
            for k in p.col_range(j) {
                let pos = p.csr_pos(k);
                let w = p.value(pos);
                s += w * w / eps[pos];
                num += w * (x[p.row_of_csc(k)] - bhat[pos]);
            }
            (num / (ratio + s), 1.0 / (1.0 / sy2 + s / sx2))
        })
        .unzip();
    VariationalState::from_parts_unchecked(mu, sigma2)
}

/// Iterates the FM algorithm tracking only the ridge loss. `fm_run` records
/// the full set of objectives; this is the lean loop for long experiments.
///
/// The aux phase is folded into the variational phase: at the optimal aux,
/// `w_ij^2 / eps_ij = |w_ij| l1_i / std_j` with `l1_i = sum_j |w_ij| std_j`,
/// so `S_j = (sum_i |w_ij| l1_i) / std_j` and no aux storage is needed.
#[derive(Debug, Clone)]
pub struct FmSolver<'a> {
    model: &'a GaussianDefModel,
    x: &'a Observation,
    q: VariationalState,
    eta: Vec<f64>,
    iteration: usize,
}

impl<'a> FmSolver<'a> {
    pub fn new(model: &'a GaussianDefModel, x: &'a Observation, init: VariationalState) -> Result<Self> {
        model.check_observation(x)?;
        model.check_state(&init)?;
        let eta = model.layer().mean_eta(init.mu());
        Ok(Self {
            model,
            x,
            q: init,
            eta,
            iteration: 0,
        })
    }

    pub fn state(&self) -> &VariationalState {
        &self.q
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One aux phase followed by one variational phase.
    pub fn step(&mut self) {
        let model = self.model;
        let p = model.pattern();
        let std = self.q.std();
        let x = self.x.as_slice();
        let (resid, l1): (Vec<f64>, Vec<f64>) = (0..model.n())
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|i| {
                let l1 = p.row_entries(i).map(|(j, w)| w.abs() * std[j]).sum::<f64>();
                (x[i] - self.eta[i], l1)
            })
            .unzip();
        let (sx2, sy2) = (model.sigma_x2(), model.sigma_y2());
        let ratio = sx2 / sy2;
        let mu = self.q.mu();
        let (next_mu, next_s2): (Vec<f64>, Vec<f64>) = (0..model.m())
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|j| {
                let (mut a, mut c) = (0.0, 0.0);
                for (i, w) in p.col_entries(j) {
                    a += w * resid[i];
                    c += w.abs() * l1[i];
                }
                let s = c / std[j];
                ((a + mu[j] * s) / (ratio + s), 1.0 / (1.0 / sy2 + s / sx2))
            })
            .unzip();
        self.eta = model.layer().mean_eta(&next_mu);
        self.q = VariationalState::from_parts_unchecked(next_mu, next_s2);
        self.iteration += 1;
    }

    pub fn ridge_loss(&self) -> f64 {
        ridge_loss_from_eta(self.model, self.x.as_slice(), &self.eta, self.q.mu())
    }

    pub fn into_state(self) -> VariationalState {
        self.q
    }
}

/// Runs `iterations` rounds of the FM algorithm. Row `t` of the trace holds
/// the ridge loss and ELBO at `q_t`, the FM bound at `(q_t, optimal_aux(q_t))`
/// and the closed-form Jensen gap at `q_t`; the trace has `iterations + 1` rows.
pub fn fm_run(
    model: &GaussianDefModel,
    x: &Observation,
    init: &VariationalState,
    iterations: usize,
) -> Result<(VariationalState, ConvergenceTrace)> {
    model.check_observation(x)?;
    model.check_state(init)?;
    let layer = model.layer();
    let mut q = init.clone();
    let mut trace = ConvergenceTrace::with_capacity(iterations + 1);
    for t in 0..=iterations {
        let aux = optimal_aux_layer(layer, &q);
        let eta = layer.mean_eta(q.mu());
        trace.push(
            ridge_loss_from_eta(model, x.as_slice(), &eta, q.mu()),
            elbo(model, x, &q)?,
            Some(fm_bound_unchecked(model, x.as_slice(), &q, &aux)),
            Some(layer_gap(layer, model.sigma_x2(), &q)),
        );
        if t < iterations {
            q = step_unchecked(model, x.as_slice(), &aux);
        }
    }
    Ok((q, trace))
}
