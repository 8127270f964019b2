//! Single-layer Gaussian models, factorized Gaussian variational states and
//! the objectives evaluated on them.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{accurate_sum, Matrix, NeumaierSum, SparsePattern};

/// Affine natural-parameter map `eta = b + W y` with its sparse views.
#[derive(Debug, Clone)]
pub struct AffineLayer {
    weights: Matrix,
    bias: Vec<f64>,
    pattern: Arc<SparsePattern>,
}

impl AffineLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        check_len("bias length vs weight rows", weights.rows(), bias.len())?;
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::EmptyModel {
                n: weights.rows(),
                m: weights.cols(),
            });
        }
        if let Some(index) = weights.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                what: "weights",
                index,
            });
        }
        if let Some(index) = bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { what: "bias", index });
        }
        let pattern = Arc::new(SparsePattern::from_dense(&weights));
        Ok(Self {
            weights,
            bias,
            pattern,
        })
    }

    /// Number of child (output) variables.
    #[inline]
    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    /// Number of parent (input) variables.
    #[inline]
    pub fn m(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// `E[eta_i] = b_i + w_i · mu` for every row.
    pub fn mean_eta(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.bias[i] + self.pattern.row_dot(i, mu))
            .collect()
    }

    /// `Var[eta_i] = sum_j w_ij^2 sigma_j^2` under a factorized parent state.
    pub fn var_eta(&self, sigma2: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                self.pattern
                    .row_entries(i)
                    .map(|(j, w)| w * w * sigma2[j])
                    .sum()
            })
            .collect()
    }
}

/// Gaussian single-layer DEF: `y_j ~ N(0, sigma_y2)`, `x_i | y ~ N(b_i + w_i·y, sigma_x2)`.
#[derive(Debug, Clone)]
pub struct GaussianDefModel {
    layer: AffineLayer,
    sigma_x2: f64,
    sigma_y2: f64,
}

/// Checks every model invariant without building the model.
pub fn validate_model(weights: &Matrix, bias: &[f64], sigma_x2: f64, sigma_y2: f64) -> Result<()> {
    check_len("bias length vs weight rows", weights.rows(), bias.len())?;
    if weights.rows() == 0 || weights.cols() == 0 {
        return Err(Error::EmptyModel {
            n: weights.rows(),
            m: weights.cols(),
        });
    }
    check_variance("sigma_x2", sigma_x2)?;
    check_variance("sigma_y2", sigma_y2)?;
    if let Some(index) = weights.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry {
            what: "weights",
            index,
        });
    }
    if let Some(index) = bias.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry { what: "bias", index });
    }
    Ok(())
}

pub(crate) fn check_variance(name: &'static str, value: f64) -> Result<()> {
    // `!(v > 0)` also rejects NaN.
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::NonPositiveVariance { name, value });
    }
    Ok(())
}

impl GaussianDefModel {
    pub fn new(weights: Matrix, bias: Vec<f64>, sigma_x2: f64, sigma_y2: f64) -> Result<Self> {
        validate_model(&weights, &bias, sigma_x2, sigma_y2)?;
        Ok(Self {
            layer: AffineLayer::new(weights, bias)?,
            sigma_x2,
            sigma_y2,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(
        rows: &[R],
        bias: Vec<f64>,
        sigma_x2: f64,
        sigma_y2: f64,
    ) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, bias, sigma_x2, sigma_y2)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.layer.n()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.layer.m()
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn sigma_y2(&self) -> f64 {
        self.sigma_y2
    }

    pub fn layer(&self) -> &AffineLayer {
        &self.layer
    }

    pub fn weights(&self) -> &Matrix {
        self.layer.weights()
    }

    pub fn bias(&self) -> &[f64] {
        self.layer.bias()
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.layer.pattern
    }

    /// Same weights and variances with a different bias vector.
    pub fn with_bias(&self, bias: Vec<f64>) -> Result<Self> {
        Self::new(self.weights().clone(), bias, self.sigma_x2, self.sigma_y2)
    }

    pub(crate) fn check_observation(&self, x: &Observation) -> Result<()> {
        check_len("observation length vs model n", self.n(), x.len())
    }

    pub(crate) fn check_state(&self, q: &VariationalState) -> Result<()> {
        check_len("variational state length vs model m", self.m(), q.len())
    }

    /// Sum of squared weights per latent column.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        let p = self.pattern();
        (0..self.m())
            .map(|j| p.col_entries(j).map(|(_, w)| w * w).sum())
            .collect()
    }
}

/// Factorized Gaussian `q(y) = prod_j N(mu_j, sigma2_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    mu: Vec<f64>,
    sigma2: Vec<f64>,
}

impl VariationalState {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        check_len("variational variances vs means", mu.len(), sigma2.len())?;
        if let Some(index) = mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                what: "variational means",
                index,
            });
        }
        for &s in &sigma2 {
            check_variance("variational variance", s)?;
        }
        Ok(Self { mu, sigma2 })
    }

    /// Prior moments: `mu = 0`, `sigma2 = sigma_y2`.
    pub fn prior(model: &GaussianDefModel) -> Self {
        Self {
            mu: vec![0.0; model.m()],
            sigma2: vec![model.sigma_y2(); model.m()],
        }
    }

    pub(crate) fn from_parts_unchecked(mu: Vec<f64>, sigma2: Vec<f64>) -> Self {
        debug_assert_eq!(mu.len(), sigma2.len());
        Self { mu, sigma2 }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn std(&self) -> Vec<f64> {
        self.sigma2.iter().map(|s| s.sqrt()).collect()
    }

    pub(crate) fn set(&mut self, j: usize, mu: f64, sigma2: f64) {
        self.mu[j] = mu;
        self.sigma2[j] = sigma2;
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.mu, self.sigma2)
    }
}

/// Observed vector `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                what: "observation",
                index,
            });
        }
        Ok(Self(x))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Observation {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `E_q[log N(child; eta, sigma2)]` where the child has mean `child_mean` and
/// variance `child_var` (0 when observed) and `eta` has the given moments.
#[inline]
pub(crate) fn expected_gaussian_loglik(
    child_mean: f64,
    child_var: f64,
    eta_mean: f64,
    eta_var: f64,
    sigma2: f64,
) -> f64 {
    let d = child_mean - eta_mean;
    -0.5 * (2.0 * PI * sigma2).ln() - (d * d + child_var + eta_var) / (2.0 * sigma2)
}

/// `E_q[log N(y; 0, prior_var)] + H(q)` for a single Gaussian factor.
#[inline]
pub(crate) fn prior_plus_entropy(mu: f64, sigma2: f64, prior_var: f64) -> f64 {
    -0.5 * (2.0 * PI * prior_var).ln() - (mu * mu + sigma2) / (2.0 * prior_var)
        + gaussian_entropy(sigma2)
}

#[inline]
pub(crate) fn gaussian_entropy(sigma2: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * sigma2).ln()
}

/// `KL(N(mu, sigma2) || N(0, prior_var))`.
#[inline]
pub fn gaussian_kl(mu: f64, sigma2: f64, prior_var: f64) -> f64 {
    0.5 * ((mu * mu + sigma2) / prior_var - 1.0 - (sigma2 / prior_var).ln())
}

/// Mean-field evidence lower bound, every expectation in closed form.
pub fn elbo(model: &GaussianDefModel, x: &Observation, q: &VariationalState) -> Result<f64> {
    model.check_observation(x)?;
    model.check_state(q)?;
    let layer = model.layer();
    let eta = layer.mean_eta(q.mu());
    let var = layer.var_eta(q.sigma2());
    let mut total = NeumaierSum::new();
    for i in 0..model.n() {
        total.add(expected_gaussian_loglik(
            x.as_slice()[i],
            0.0,
            eta[i],
            var[i],
            model.sigma_x2(),
        ));
    }
    for j in 0..model.m() {
        total.add(prior_plus_entropy(q.mu()[j], q.sigma2()[j], model.sigma_y2()));
    }
    Ok(total.value())
}

/// Ridge regression objective attained by the variational mean.
pub fn ridge_loss(model: &GaussianDefModel, x: &Observation, mu: &[f64]) -> Result<f64> {
    model.check_observation(x)?;
    check_len("mean length vs model m", model.m(), mu.len())?;
    let eta = model.layer().mean_eta(mu);
    Ok(ridge_loss_from_eta(model, x.as_slice(), &eta, mu))
}

pub(crate) fn ridge_loss_from_eta(model: &GaussianDefModel, x: &[f64], eta: &[f64], mu: &[f64]) -> f64 {
    let fit = accurate_sum(x.iter().zip(eta).map(|(xi, ei)| (xi - ei) * (xi - ei)));
    let reg = accurate_sum(mu.iter().map(|m| m * m));
    fit / (2.0 * model.sigma_x2()) + reg / (2.0 * model.sigma_y2())
}

#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

fn precision_matrix(model: &GaussianDefModel) -> DMatrix<f64> {
    let m = model.m();
    let p = model.pattern();
    let mut lambda = DMatrix::<f64>::identity(m, m) / model.sigma_y2();
    let inv_x = 1.0 / model.sigma_x2();
    for i in 0..model.n() {
        let r = p.row_range(i);
        for a in r.clone() {
            let (ja, wa) = (p.col_of(a), p.value(a));
            for b in r.clone() {
                let (jb, wb) = (p.col_of(b), p.value(b));
                lambda[(ja, jb)] += inv_x * wa * wb;
            }
        }
    }
    lambda
}

fn factor(model: &GaussianDefModel) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
    precision_matrix(model)
        .cholesky()
        .expect("posterior precision is positive definite whenever sigma_y2 > 0")
}

fn scaled_projection(model: &GaussianDefModel, x: &Observation) -> DVector<f64> {
    let resid: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(model.bias())
        .map(|(xi, bi)| xi - bi)
        .collect();
    let p = model.pattern();
    DVector::from_iterator(
        model.m(),
        (0..model.m()).map(|j| {
            p.col_entries(j).map(|(i, w)| w * resid[i]).sum::<f64>() / model.sigma_x2()
        }),
    )
}

/// Exact Gaussian posterior `p(y | x)`; its mean is the unique ridge minimizer.
pub fn exact_posterior(model: &GaussianDefModel, x: &Observation) -> Result<Posterior> {
    model.check_observation(x)?;
    let chol = factor(model);
    let mean = chol.solve(&scaled_projection(model, x));
    let inv = chol.inverse();
    let m = model.m();
    let covariance = Matrix::from_row_major(
        m,
        m,
        (0..m).flat_map(|r| (0..m).map(move |c| (r, c))).map(|(r, c)| inv[(r, c)]).collect(),
    )?;
    Ok(Posterior {
        mean: mean.iter().copied().collect(),
        covariance,
    })
}

/// Posterior mean only; skips forming the inverse.
pub fn ridge_optimum(model: &GaussianDefModel, x: &Observation) -> Result<Vec<f64>> {
    model.check_observation(x)?;
    let mean = factor(model).solve(&scaled_projection(model, x));
    Ok(mean.iter().copied().collect())
}

/// `log p(x)` under the marginal `N(b, sigma_x2 I + sigma_y2 W W^T)`, computed
/// through the m x m precision with the determinant lemma and Woodbury.
pub fn log_marginal_likelihood(model: &GaussianDefModel, x: &Observation) -> Result<f64> {
    model.check_observation(x)?;
    let chol = factor(model);
    let proj = scaled_projection(model, x);
    let mean = chol.solve(&proj);
    let n = model.n() as f64;
    let m = model.m() as f64;
    let log_det_lambda: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let resid_sq: f64 = x
        .as_slice()
        .iter()
        .zip(model.bias())
        .map(|(xi, bi)| (xi - bi) * (xi - bi))
        .sum();
    let quad = resid_sq / model.sigma_x2() - proj.dot(&mean);
    Ok(-0.5
        * (n * (2.0 * PI).ln()
            + n * model.sigma_x2().ln()
            + m * model.sigma_y2().ln()
            + log_det_lambda
            + quad))
}

/// One recorded iteration of an inference run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub ridge_loss: f64,
    pub elbo: f64,
    /// Only recorded by the FM algorithm.
    pub fm_bound: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    rows: Vec<TraceRow>,
}

/// Slack allowed between a recorded FM bound and the ELBO of the same row.
pub const TRACE_DOMINANCE_SLACK: f64 = 1e-9;

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            rows: Vec::with_capacity(n),
        }
    }

    /// Appends the next row. Iteration numbers are assigned consecutively.
    pub fn push(&mut self, ridge_loss: f64, elbo: f64, fm_bound: Option<f64>, gap: Option<f64>) {
        if let Some(b) = fm_bound {
            debug_assert!(b <= elbo + TRACE_DOMINANCE_SLACK * (1.0 + elbo.abs()));
        }
        self.rows.push(TraceRow {
            iteration: self.rows.len(),
            ridge_loss,
            elbo,
            fm_bound,
            gap,
        });
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn ridge_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.ridge_loss)
    }

    /// First iteration whose ridge loss is within `rel` (relative) of `optimum`.
    pub fn first_within(&self, optimum: f64, rel: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| within_relative(r.ridge_loss, optimum, rel))
            .map(|r| r.iteration)
    }

    /// First iteration at which the relative ridge-loss change drops below `tol`.
    pub fn converged_at(&self, tol: f64) -> Option<usize> {
        self.rows.windows(2).find_map(|w| {
            let (a, b) = (w[0].ridge_loss, w[1].ridge_loss);
            let scale = a.abs().max(f64::MIN_POSITIVE);
            ((a - b).abs() / scale < tol).then_some(w[1].iteration)
        })
    }
}

/// `loss <= optimum + rel * |optimum|`.
#[inline]
pub fn within_relative(loss: f64, optimum: f64, rel: f64) -> bool {
    loss - optimum <= rel * optimum.abs()
}
