//! Multi-layer Gaussian DEFs. Only evaluation of the bound is provided; there
//! are no closed-form updates for interior layers.

use crate::error::{check_len, Error, Result};
use crate::linalg::{accurate_sum, Matrix, NeumaierSum};
use crate::model::{
    check_variance, expected_gaussian_loglik, gaussian_entropy, prior_plus_entropy, AffineLayer,
    GaussianDefModel, Observation, VariationalState,
};

use super::aux::{optimal_aux_layer, AuxParams};
use super::bound::likelihood_bound;

/// Conditional `y^(l) | y^(l+1) ~ N(b^(l) + W^(l) y^(l+1), sigma2)`.
#[derive(Debug, Clone)]
pub struct DeepLayer {
    affine: AffineLayer,
    sigma2: f64,
}

impl DeepLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_variance("layer variance", sigma2)?;
        Ok(Self {
            affine: AffineLayer::new(weights, bias)?,
            sigma2,
        })
    }

    pub fn affine(&self) -> &AffineLayer {
        &self.affine
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Layer 0 is observed; `layers[l]` generates layer `l` from layer `l + 1`,
/// and the top layer `L = layers.len()` has prior `N(0, top_sigma2)`.
#[derive(Debug, Clone)]
pub struct DeepGaussianModel {
    layers: Vec<DeepLayer>,
    top_sigma2: f64,
}

impl DeepGaussianModel {
    pub fn new(layers: Vec<DeepLayer>, top_sigma2: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("deep model needs at least one layer"));
        }
        check_variance("top prior variance", top_sigma2)?;
        for pair in layers.windows(2) {
            check_len("consecutive layer dimensions", pair[0].affine.m(), pair[1].affine.n())?;
        }
        Ok(Self { layers, top_sigma2 })
    }

    /// The single-layer model viewed as a depth-one deep model.
    pub fn from_single(model: &GaussianDefModel) -> Self {
        Self {
            layers: vec![DeepLayer {
                affine: model.layer().clone(),
                sigma2: model.sigma_x2(),
            }],
            top_sigma2: model.sigma_y2(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[DeepLayer] {
        &self.layers
    }

    pub fn top_sigma2(&self) -> f64 {
        self.top_sigma2
    }

    /// `m_0, ..., m_L`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].affine.n())
            .chain(self.layers.iter().map(|l| l.affine.m()))
            .collect()
    }

    fn check_inputs(&self, observed: &Observation, q: &[VariationalState]) -> Result<()> {
        let dims = self.layer_dims();
        check_len("observed layer", dims[0], observed.len())?;
        check_len("variational layers", self.depth(), q.len())?;
        for (l, ql) in q.iter().enumerate() {
            check_len("variational layer width", dims[l + 1], ql.len())?;
        }
        Ok(())
    }
}

/// Optimal auxiliary parameters of every layer for the given states.
pub fn deep_optimal_aux(model: &DeepGaussianModel, q: &[VariationalState]) -> Result<Vec<AuxParams>> {
    check_len("variational layers", model.depth(), q.len())?;
    model
        .layers
        .iter()
        .zip(q)
        .map(|(layer, parent)| {
            check_len("variational layer width", layer.affine.m(), parent.len())?;
            Ok(optimal_aux_layer(&layer.affine, parent))
        })
        .collect()
}

/// Exact mean-field ELBO of the deep model, all expectations in closed form.
pub fn deep_elbo(model: &DeepGaussianModel, observed: &Observation, q: &[VariationalState]) -> Result<f64> {
    model.check_inputs(observed, q)?;
    let mut total = NeumaierSum::new();
    for (l, layer) in model.layers.iter().enumerate() {
        let parent = &q[l];
        let eta = layer.affine.mean_eta(parent.mu());
        let var = layer.affine.var_eta(parent.sigma2());
        let (mean, child_var) = child_moments(observed, q, l);
        for i in 0..layer.affine.n() {
            total.add(expected_gaussian_loglik(
                mean[i],
                child_var.map_or(0.0, |v| v[i]),
                eta[i],
                var[i],
                layer.sigma2,
            ));
        }
        if l > 0 {
            total.add(accurate_sum(q[l - 1].sigma2().iter().map(|&s| gaussian_entropy(s))));
        }
    }
    total.add(top_terms(model, q));
    Ok(total.value())
}

/// FM lower bound of the deep ELBO: every conditional term is replaced by its
/// `eps`-weighted forest-mixture counterpart.
pub fn deep_fm_bound(
    model: &DeepGaussianModel,
    observed: &Observation,
    q: &[VariationalState],
    aux: &[AuxParams],
) -> Result<f64> {
    model.check_inputs(observed, q)?;
    check_len("auxiliary layers", model.depth(), aux.len())?;
    for (layer, a) in model.layers.iter().zip(aux) {
        a.validate(&layer.affine)?;
    }
    let mut total = NeumaierSum::new();
    for (l, layer) in model.layers.iter().enumerate() {
        let (mean, child_var) = child_moments(observed, q, l);
        total.add(likelihood_bound(&layer.affine, layer.sigma2, mean, child_var, &q[l], &aux[l]));
        if l > 0 {
            total.add(accurate_sum(q[l - 1].sigma2().iter().map(|&s| gaussian_entropy(s))));
        }
    }
    total.add(top_terms(model, q));
    Ok(total.value())
}

fn child_moments<'a>(
    observed: &'a Observation,
    q: &'a [VariationalState],
    layer: usize,
) -> (&'a [f64], Option<&'a [f64]>) {
    if layer == 0 {
        (observed.as_slice(), None)
    } else {
        (q[layer - 1].mu(), Some(q[layer - 1].sigma2()))
    }
}

fn top_terms(model: &DeepGaussianModel, q: &[VariationalState]) -> f64 {
    let top = q.last().expect("depth >= 1");
    accurate_sum(
        top.mu()
            .iter()
            .zip(top.sigma2())
            .map(|(&m, &s)| prior_plus_entropy(m, s, model.top_sigma2)),
    )
}
