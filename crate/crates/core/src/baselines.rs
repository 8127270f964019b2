//! Coordinate-ascent baselines: single-coordinate CAVI and parallel block
//! coordinate ascent with simultaneous (Jacobi) reads.
//!
//! One iteration is one parallel round: CAVI updates one latent, a block round
//! updates one latent per block, and the FM algorithm updates all of them.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::fm::PAR_MIN_LEN;
use crate::linalg::accurate_sum;
use crate::model::{
    elbo, ridge_loss_from_eta, ConvergenceTrace, GaussianDefModel, Observation, VariationalState,
};

/// Disjoint, covering, non-empty groups of latent indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    m: usize,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &j in block {
                if j >= m {
                    return Err(Error::InvalidPartition(format!("index {j} out of range for m = {m}")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::InvalidPartition(format!("index {j} appears twice")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {j} is not covered")));
        }
        Ok(Self { blocks, m })
    }

    /// A single block `{0..m}`.
    pub fn whole(m: usize) -> Self {
        Self {
            blocks: vec![(0..m).collect()],
            m,
        }
    }

    pub fn singletons(m: usize) -> Self {
        Self {
            blocks: (0..m).map(|j| vec![j]).collect(),
            m,
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block index of every latent.
    pub fn block_of(&self) -> Vec<usize> {
        let mut owner = vec![0; self.m];
        for (b, block) in self.blocks.iter().enumerate() {
            for &j in block {
                owner[j] = b;
            }
        }
        owner
    }

    /// Latents updated in round `round`: position `round mod |block|` of every
    /// block, blocks in listed order.
    pub fn schedule(&self, round: usize) -> Vec<usize> {
        self.blocks.iter().map(|b| b[round % b.len()]).collect()
    }
}

/// True iff no observed variable has parents in two different blocks.
pub fn blocks_conditionally_independent(model: &GaussianDefModel, partition: &BlockPartition) -> Result<bool> {
    check_len("partition size vs model m", model.m(), partition.m())?;
    let owner = partition.block_of();
    let p = model.pattern();
    Ok((0..model.n()).all(|i| {
        let mut blocks = p.row_entries(i).map(|(j, _)| owner[j]);
        match blocks.next() {
            Some(first) => blocks.all(|b| b == first),
            None => true,
        }
    }))
}

/// Finest partition whose blocks are conditionally independent: connected
/// components of the graph linking latents that share an observed child.
pub fn independent_components(model: &GaussianDefModel) -> BlockPartition {
    let m = model.m();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let p = model.pattern();
    for i in 0..model.n() {
        let mut cols = p.row_entries(i).map(|(j, _)| j);
        if let Some(first) = cols.next() {
            for j in cols {
                let (ra, rb) = (find(&mut parent, first), find(&mut parent, j));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut index_of_root = vec![usize::MAX; m];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for j in 0..m {
        let r = find(&mut parent, j);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[index_of_root[r]].push(j);
    }
    BlockPartition { blocks, m }
}

/// Posterior precision of latent `j` under CAVI: `1/sigma_y2 + (1/sigma_x2) sum_i w_ij^2`.
#[inline]
fn cavi_precision(model: &GaussianDefModel, col_sq: f64) -> f64 {
    1.0 / model.sigma_y2() + col_sq / model.sigma_x2()
}

/// CAVI optimum of coordinate `j` given the residual `r_i = x_i - E[eta_i]`.
fn cavi_coordinate(model: &GaussianDefModel, j: usize, mu_j: f64, resid: impl Fn(usize) -> f64) -> (f64, f64) {
    let p = model.pattern();
    let mut num = 0.0;
    let mut col_sq = 0.0;
    for (i, w) in p.col_entries(j) {
        num += w * (resid(i) + w * mu_j);
        col_sq += w * w;
    }
    let prec = cavi_precision(model, col_sq);
    (num / model.sigma_x2() / prec, 1.0 / prec)
}

/// Replaces factor `j` of `q` with its mean-field optimum given all others.
pub fn cavi_update(model: &GaussianDefModel, x: &Observation, q: &VariationalState, j: usize) -> Result<VariationalState> {
    model.check_observation(x)?;
    model.check_state(q)?;
    if j >= model.m() {
        return Err(Error::IndexOutOfRange { index: j, len: model.m() });
    }
    let layer = model.layer();
    let p = model.pattern();
    let xs = x.as_slice();
    let (mu, s2) = cavi_coordinate(model, j, q.mu()[j], |i| {
        xs[i] - (layer.bias()[i] + p.row_dot(i, q.mu()))
    });
    let mut next = q.clone();
    next.set(j, mu, s2);
    Ok(next)
}

/// One block round: the scheduled latent of every block is updated by CAVI,
/// all reading the same incoming `q`.
pub fn block_round(
    model: &GaussianDefModel,
    x: &Observation,
    q: &VariationalState,
    partition: &BlockPartition,
    round: usize,
) -> Result<VariationalState> {
    model.check_observation(x)?;
    model.check_state(q)?;
    check_len("partition size vs model m", model.m(), partition.m())?;
    let eta = model.layer().mean_eta(q.mu());
    let resid: Vec<f64> = x.as_slice().iter().zip(&eta).map(|(a, b)| a - b).collect();
    let updates: Vec<(usize, (f64, f64))> = partition
        .schedule(round)
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|j| (j, cavi_coordinate(model, j, q.mu()[j], |i| resid[i])))
        .collect();
    let mut next = q.clone();
    for (j, (mu, s2)) in updates {
        next.set(j, mu, s2);
    }
    Ok(next)
}

/// Coordinate ascent that keeps the residual `x - E[eta]` up to date, so an
/// update of latent `j` costs O(nnz of column j). Intended for long runs where
/// a full trace is not needed; the residual is recomputed from scratch by
/// [`CoordinateAscent::refresh`].
#[derive(Debug, Clone)]
pub struct CoordinateAscent<'a> {
    model: &'a GaussianDefModel,
    x: &'a Observation,
    q: VariationalState,
    resid: Vec<f64>,
    col_sq: Vec<f64>,
    fit_sq: f64,
    mu_sq: f64,
}

impl<'a> CoordinateAscent<'a> {
    pub fn new(model: &'a GaussianDefModel, x: &'a Observation, init: VariationalState) -> Result<Self> {
        model.check_observation(x)?;
        model.check_state(&init)?;
        let mut s = Self {
            model,
            x,
            q: init,
            resid: Vec::new(),
            col_sq: model.column_sq_norms(),
            fit_sq: 0.0,
            mu_sq: 0.0,
        };
        s.refresh();
        Ok(s)
    }

    pub fn refresh(&mut self) {
        let eta = self.model.layer().mean_eta(self.q.mu());
        self.resid = self.x.as_slice().iter().zip(&eta).map(|(a, b)| a - b).collect();
        self.fit_sq = accurate_sum(self.resid.iter().map(|r| r * r));
        self.mu_sq = accurate_sum(self.q.mu().iter().map(|m| m * m));
    }

    /// Simultaneous CAVI updates of `selected`, all reading the current state.
    pub fn apply(&mut self, selected: &[usize]) {
        let model = self.model;
        let p = model.pattern();
        let (q, resid, col_sq) = (&self.q, &self.resid, &self.col_sq);
        let updates: Vec<(usize, f64, f64)> = selected
            .par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|&j| {
                let mu_j = q.mu()[j];
                let num: f64 = p.col_entries(j).map(|(i, w)| w * (resid[i] + w * mu_j)).sum();
                let prec = cavi_precision(model, col_sq[j]);
                (j, num / model.sigma_x2() / prec, 1.0 / prec)
            })
            .collect();
        for (j, mu, s2) in updates {
            let old = self.q.mu()[j];
            let delta = mu - old;
            for (i, w) in p.col_entries(j) {
                let r = self.resid[i];
                let next = r - w * delta;
                self.fit_sq += next * next - r * r;
                self.resid[i] = next;
            }
            self.mu_sq += mu * mu - old * old;
            self.q.set(j, mu, s2);
        }
    }

    pub fn state(&self) -> &VariationalState {
        &self.q
    }

    /// Ridge loss from running sums of squares, O(1); exact again after
    /// [`CoordinateAscent::refresh`].
    pub fn ridge_loss(&self) -> f64 {
        self.fit_sq / (2.0 * self.model.sigma_x2()) + self.mu_sq / (2.0 * self.model.sigma_y2())
    }

    pub fn into_state(self) -> VariationalState {
        self.q
    }
}

fn record(trace: &mut ConvergenceTrace, model: &GaussianDefModel, x: &Observation, q: &VariationalState) -> Result<()> {
    let eta = model.layer().mean_eta(q.mu());
    trace.push(
        ridge_loss_from_eta(model, x.as_slice(), &eta, q.mu()),
        elbo(model, x, q)?,
        None,
        None,
    );
    Ok(())
}

/// Cyclic CAVI: iteration `t` updates latent `t mod m`.
pub fn cavi_run(
    model: &GaussianDefModel,
    x: &Observation,
    init: &VariationalState,
    iterations: usize,
) -> Result<(VariationalState, ConvergenceTrace)> {
    let mut q = init.clone();
    let mut trace = ConvergenceTrace::with_capacity(iterations + 1);
    record(&mut trace, model, x, &q)?;
    for t in 0..iterations {
        q = cavi_update(model, x, &q, t % model.m())?;
        record(&mut trace, model, x, &q)?;
    }
    Ok((q, trace))
}

/// Block coordinate ascent: iteration `t` is `block_round(.., t)`.
pub fn block_run(
    model: &GaussianDefModel,
    x: &Observation,
    init: &VariationalState,
    iterations: usize,
    partition: &BlockPartition,
) -> Result<(VariationalState, ConvergenceTrace)> {
    check_len("partition size vs model m", model.m(), partition.m())?;
    let mut q = init.clone();
    let mut trace = ConvergenceTrace::with_capacity(iterations + 1);
    record(&mut trace, model, x, &q)?;
    for t in 0..iterations {
        q = block_round(model, x, &q, partition, t)?;
        record(&mut trace, model, x, &q)?;
    }
    Ok((q, trace))
}
