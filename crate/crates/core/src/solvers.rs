//! Per-machine local computations: the plain gradient step, the
//! variance-reduced classification epoch, and the factorization epoch over
//! a row block. Each is a deterministic function of its inputs and the
//! supplied [`RngState`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{DivergedInfo, Error, Result};
use crate::linalg::{Matrix, ParamVector};
use crate::losses::{
    logistic_grad, mf_grad, shard_mean_gradient, LabeledExample, LogisticLossSpec, MfLossSpec,
    Rating,
};
use crate::protocol::Payload;
use crate::rng::RngState;

/// Inner-loop length, mini-batch size and learning rate of one
/// variance-reduced epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrgEpochConfig {
    pub t_max: usize,
    pub batch_size: usize,
    pub gamma: f64,
}

impl SvrgEpochConfig {
    /// `gamma = 0` is accepted (the epoch degenerates to the identity);
    /// run configurations require a strictly positive rate separately.
    pub fn new(t_max: usize, batch_size: usize, gamma: f64) -> Result<Self> {
        if t_max == 0 || batch_size == 0 {
            return Err(Error::contract("t_max and batch_size must be >= 1".to_string()));
        }
        if !(gamma >= 0.0) {
            return Err(Error::contract(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(SvrgEpochConfig { t_max, batch_size, gamma })
    }
}

/// A worker's factor state: the local user-factor block `P_b` and its copy
/// of the shared item-factor matrix `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub p_block: Matrix,
    pub q_shared: Matrix,
}

impl FactorState {
    pub fn new(p_block: Matrix, q_shared: Matrix) -> Result<Self> {
        if p_block.n_cols() != q_shared.n_cols() {
            return Err(Error::contract(format!(
                "latent dimension mismatch: P has {}, Q has {}",
                p_block.n_cols(),
                q_shared.n_cols()
            )));
        }
        if !p_block.all_finite() || !q_shared.all_finite() {
            return Err(Error::contract("non-finite factor entries".to_string()));
        }
        Ok(FactorState { p_block, q_shared })
    }
}

/// Gradient provider for a machine's shard, for plain gradient steps.
pub trait ShardObjective {
    fn gradient(&self, w: &ParamVector) -> Result<ParamVector>;
    fn dim(&self) -> usize;
}

/// Logistic shard backed by shared example storage.
#[derive(Debug, Clone)]
pub struct LogisticShard {
    pub examples: Arc<Vec<LabeledExample>>,
    pub spec: LogisticLossSpec,
    pub dim: usize,
}

impl ShardObjective for LogisticShard {
    fn gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        shard_mean_gradient(w, &self.examples, &self.spec)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// One fixed-step gradient step on the shard objective:
/// `w' = w - gamma * grad_shard(w)`.
pub fn gradient_local_step<S: ShardObjective + ?Sized>(
    w_bar_delayed: &ParamVector,
    shard: &S,
    gamma: f64,
) -> Result<ParamVector> {
    if !(gamma >= 0.0) {
        return Err(Error::contract(format!("gamma must be >= 0, got {gamma}")));
    }
    let grad = shard.gradient(w_bar_delayed)?;
    let mut next = w_bar_delayed.clone();
    next.add_scaled(-gamma, &grad);
    if !next.all_finite() {
        return Err(Error::diverged_with(DivergedInfo {
            context: "gradient_local_step".to_string(),
            step: 0,
            last_iterate: Some(w_bar_delayed.clone()),
            ..DivergedInfo::default()
        }));
    }
    Ok(next)
}

/// One variance-reduced epoch: anchors the full-shard gradient at `w_tilde`,
/// then runs `t_max` mini-batch steps of
/// `w <- w - gamma (g_B(w) - g_B(w_tilde) + mu)`,
/// where `g_B` is the batch-mean gradient and `mu` the anchor. Batches are
/// drawn uniformly with replacement from the shard.
pub fn svrg_local_epoch(
    w_tilde: &ParamVector,
    shard: &[LabeledExample],
    cfg: &SvrgEpochConfig,
    spec: &LogisticLossSpec,
    rng: RngState,
) -> Result<ParamVector> {
    if shard.len() < cfg.batch_size {
        return Err(Error::contract(format!(
            "shard of {} examples is smaller than batch size {}",
            shard.len(),
            cfg.batch_size
        )));
    }
    let mu = shard_mean_gradient(w_tilde, shard, spec)?;
    let mut rng = rng.rng();
    let mut w = w_tilde.clone();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for t in 0..cfg.t_max {
        batch.clear();
        for _ in 0..cfg.batch_size {
            batch.push(shard[rng.gen_range(0..shard.len())].clone());
        }
        let g_cur = logistic_grad(&w, &batch, spec)?;
        let g_anchor = logistic_grad(w_tilde, &batch, spec)?;
        {
            let wv = w.values_mut();
            for j in 0..wv.len() {
                wv[j] -= cfg.gamma * (g_cur.values()[j] - g_anchor.values()[j] + mu.values()[j]);
            }
        }
        if !w.all_finite() {
            return Err(Error::diverged_with(DivergedInfo {
                context: "svrg_local_epoch".to_string(),
                step: t as u64,
                last_iterate: Some(w_tilde.clone()),
                ..DivergedInfo::default()
            }));
        }
    }
    Ok(w)
}

/// `n_steps` stochastic steps over a row block: each step samples one
/// observed rating uniformly with replacement and applies the exact
/// gradient to row `p_u` of the local block and row `q_i` of the shared
/// matrix, both computed from the pre-step values.
///
/// Rating user/item indices are local to the state's matrices.
pub fn mf_local_epoch(
    mut state: FactorState,
    block_ratings: &[Rating],
    gamma: f64,
    spec: &MfLossSpec,
    rng: RngState,
    n_steps: usize,
) -> Result<FactorState> {
    if block_ratings.is_empty() {
        return Err(Error::contract("mf_local_epoch over an empty block".to_string()));
    }
    for r in block_ratings {
        if r.user >= state.p_block.n_rows() || r.item >= state.q_shared.n_rows() {
            return Err(Error::contract(format!(
                "rating ({}, {}) outside block of {} users x {} items",
                r.user,
                r.item,
                state.p_block.n_rows(),
                state.q_shared.n_rows()
            )));
        }
    }
    let mut rng = rng.rng();
    for step in 0..n_steps {
        let r = &block_ratings[rng.gen_range(0..block_ratings.len())];
        let (grad_p, grad_q) = mf_grad(
            state.p_block.row(r.user),
            state.q_shared.row(r.item),
            r.value,
            spec,
        )?;
        let mut finite = true;
        for (v, g) in state.p_block.row_mut(r.user).iter_mut().zip(&grad_p) {
            *v -= gamma * g;
            finite &= v.is_finite();
        }
        for (v, g) in state.q_shared.row_mut(r.item).iter_mut().zip(&grad_q) {
            *v -= gamma * g;
            finite &= v.is_finite();
        }
        if !finite {
            return Err(Error::diverged_with(DivergedInfo {
                context: "mf_local_epoch".to_string(),
                step: step as u64,
                ..DivergedInfo::default()
            }));
        }
    }
    Ok(state)
}

/// Initializes factor matrices with entries i.i.d. uniform in
/// `[0, 1/sqrt(K)]`. `P` is sampled row-major first, then `Q`.
pub fn init_factors(
    n_users_block: usize,
    n_items: usize,
    spec: &MfLossSpec,
    rng: RngState,
) -> FactorState {
    let hi = 1.0 / (spec.k_latent as f64).sqrt();
    let mut rng = rng.rng();
    let mut sample = |rows: usize, cols: usize| {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.0..hi)).collect();
        Matrix::from_data(rows, cols, data).unwrap()
    };
    let p_block = sample(n_users_block, spec.k_latent);
    let q_shared = sample(n_items, spec.k_latent);
    FactorState { p_block, q_shared }
}

/// A machine's local computation as seen by the run drivers: one complete
/// pass producing the payload that is sent to the master.
pub trait LocalSolver: Send {
    type P: Payload;

    fn run_epoch(&mut self, basis: &Self::P, epoch: u64) -> Result<Self::P>;

    /// Worker-local state that never travels (the `P` block in
    /// factorization); `None` for parameter-vector solvers.
    fn local_factors(&self) -> Option<&Matrix> {
        None
    }
}

/// Plain fixed-step gradient solver over a shard objective.
pub struct GradientSolver<S: ShardObjective + Send> {
    pub shard: S,
    pub gamma: f64,
}

impl<S: ShardObjective + Send> LocalSolver for GradientSolver<S> {
    type P = ParamVector;

    fn run_epoch(&mut self, basis: &ParamVector, _epoch: u64) -> Result<ParamVector> {
        gradient_local_step(basis, &self.shard, self.gamma)
    }
}

/// Variance-reduced epoch solver over a classification shard.
pub struct SvrgSolver {
    pub shard: Arc<Vec<LabeledExample>>,
    pub spec: LogisticLossSpec,
    pub cfg: SvrgEpochConfig,
    pub rng: RngState,
}

impl LocalSolver for SvrgSolver {
    type P = ParamVector;

    fn run_epoch(&mut self, basis: &ParamVector, epoch: u64) -> Result<ParamVector> {
        svrg_local_epoch(basis, &self.shard, &self.cfg, &self.spec, self.rng.fork(epoch))
    }
}

/// Factorization epoch solver: owns the local `P` block across epochs,
/// receives `Q` as the basis and sends the updated `Q` back.
pub struct MfSolver {
    pub p_block: Matrix,
    pub ratings: Arc<Vec<Rating>>,
    pub gamma: f64,
    pub spec: MfLossSpec,
    pub rng: RngState,
    pub steps_per_epoch: usize,
}

impl LocalSolver for MfSolver {
    type P = Matrix;

    fn run_epoch(&mut self, basis: &Matrix, epoch: u64) -> Result<Matrix> {
        let state = FactorState::new(self.p_block.clone(), basis.clone())?;
        let state = mf_local_epoch(
            state,
            &self.ratings,
            self.gamma,
            &self.spec,
            self.rng.fork(epoch),
            self.steps_per_epoch,
        )?;
        self.p_block = state.p_block;
        Ok(state.q_shared)
    }

    fn local_factors(&self) -> Option<&Matrix> {
        Some(&self.p_block)
    }
}
