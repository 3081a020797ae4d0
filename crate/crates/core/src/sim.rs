//! Deterministic scheduling machinery for the simulated backend: bounded
//! delay schedules, per-machine compute-time models, quadratic reference
//! problems with an exactly solvable minimizer, and the squared-error
//! envelope whose sup-norm is non-increasing along a run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_dense, Matrix, ParamVector};
use crate::rng::{splitmix64, RngState};
use crate::solvers::ShardObjective;
use std::sync::Arc;

/// How delays are assigned to (machine, round) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    /// Every machine lags by the bound at every round.
    Constant,
    /// Independent uniform draw from `{0, ..., d_max}` per (machine, round).
    UniformRandom,
    /// One rotating machine takes the full bound each round, the rest none.
    AdversarialCycle,
}

/// Bounded delay assignment `d(i, k) <= d_max`, also clamped to `k` so a
/// basis can never predate round 0. A pure function of its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySchedule {
    pub kind: DelayKind,
    pub d_max: u64,
    pub machines: usize,
    pub seed: u64,
}

pub fn make_delay_schedule(kind: DelayKind, d_max: u64, machines: usize, seed: u64) -> DelaySchedule {
    DelaySchedule { kind, d_max, machines, seed }
}

impl DelaySchedule {
    pub fn delay(&self, machine: usize, round: u64) -> u64 {
        let raw = match self.kind {
            DelayKind::Constant => self.d_max,
            DelayKind::UniformRandom => {
                let h = splitmix64(self.seed ^ splitmix64((machine as u64) << 32 | (round & 0xffff_ffff)) ^ splitmix64(round));
                h % (self.d_max + 1)
            }
            DelayKind::AdversarialCycle => {
                if self.machines > 0 && (round % self.machines as u64) == machine as u64 {
                    self.d_max
                } else {
                    0
                }
            }
        };
        raw.min(round)
    }
}

/// Per-machine timing for the ticked simulator: how many logical ticks one
/// local pass takes, and the one-way message latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    pub compute_ticks_per_epoch: u64,
    pub comm_ticks: u64,
}

impl MachineModel {
    pub fn new(compute_ticks_per_epoch: u64, comm_ticks: u64) -> Result<Self> {
        if compute_ticks_per_epoch == 0 {
            return Err(Error::contract("compute_ticks_per_epoch must be >= 1".to_string()));
        }
        Ok(MachineModel { compute_ticks_per_epoch, comm_ticks })
    }

    pub fn uniform(machines: usize, compute_ticks: u64, comm_ticks: u64) -> Vec<MachineModel> {
        vec![MachineModel { compute_ticks_per_epoch: compute_ticks, comm_ticks }; machines]
    }
}

/// Sum of per-machine least-squares blocks `L_i(w) = 1/2 ||A_i w - b_i||^2`.
/// The global minimizer is computable exactly, which makes the convergence
/// theorem and its proof invariants checkable on real runs.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    blocks: Vec<(Matrix, Vec<f64>)>,
    dim: usize,
}

impl QuadraticProblem {
    pub fn new(blocks: Vec<(Matrix, Vec<f64>)>) -> Result<Self> {
        let dim = blocks
            .first()
            .map(|(a, _)| a.n_cols())
            .ok_or_else(|| Error::contract("quadratic problem needs at least one block".to_string()))?;
        for (a, b) in &blocks {
            if a.n_cols() != dim || a.n_rows() != b.len() {
                return Err(Error::contract("inconsistent block shapes".to_string()));
            }
        }
        Ok(QuadraticProblem { blocks, dim })
    }

    /// Gaussian random instance with `rows` rows per block. With
    /// `rows >= 3 * dim` the blocks are well conditioned with overwhelming
    /// probability.
    pub fn random(machines: usize, dim: usize, rows: usize, seed: u64) -> Self {
        let mut rng = RngState::new(seed, 0).rng();
        let normal = rand_distr::StandardNormal;
        let scale = 1.0 / (rows as f64).sqrt();
        let blocks = (0..machines)
            .map(|_| {
                let data: Vec<f64> =
                    (0..rows * dim).map(|_| scale * rng.sample::<f64, _>(normal)).collect();
                let b: Vec<f64> = (0..rows).map(|_| rng.sample::<f64, _>(normal)).collect();
                (Matrix::from_data(rows, dim, data).unwrap(), b)
            })
            .collect();
        QuadraticProblem { blocks, dim }
    }

    /// Separable toy `L_i(w) = 1/2 ||w - c_i||^2` (identity design).
    pub fn from_centers(centers: &[Vec<f64>]) -> Self {
        let dim = centers[0].len();
        let blocks = centers
            .iter()
            .map(|c| {
                let mut a = Matrix::zeros(dim, dim);
                for j in 0..dim {
                    a.set(j, j, 1.0);
                }
                (a, c.clone())
            })
            .collect();
        QuadraticProblem { blocks, dim }
    }

    pub fn machines(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `grad L_i(w) = A_i^T (A_i w - b_i)`.
    pub fn block_gradient(&self, block: usize, w: &ParamVector) -> ParamVector {
        let (a, b) = &self.blocks[block];
        let mut r = a.matvec(w.values());
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        ParamVector::from_vec(a.transpose_matvec(&r))
    }

    /// Largest block smoothness constant `max_i lambda_max(A_i^T A_i)`,
    /// found by power iteration on each Gram matrix.
    pub fn smoothness(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(a, _)| spectral_top_eigenvalue(&a.gram(), 300))
            .fold(0.0, f64::max)
    }
}

/// Power iteration on a symmetric PSD matrix; deterministic start vector.
pub fn spectral_top_eigenvalue(h: &Matrix, iters: usize) -> f64 {
    let n = h.n_rows();
    let mut z: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.01).collect();
    let mut eig = 0.0;
    for _ in 0..iters {
        let hz = h.matvec(&z);
        let norm: f64 = hz.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        z = hz.iter().map(|v| v / norm).collect();
        eig = norm;
    }
    eig
}

/// One shard of a quadratic problem, usable as a plain-gradient objective.
#[derive(Clone)]
pub struct QuadraticShard {
    pub problem: Arc<QuadraticProblem>,
    pub block: usize,
}

impl ShardObjective for QuadraticShard {
    fn gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        Ok(self.problem.block_gradient(self.block, w))
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }
}

/// Exact minimizer `w*` of the summed quadratic objective together with the
/// shifted per-machine fixed points `w_i* = w* - gamma grad L_i(w*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub w_star: ParamVector,
    pub w_i_star: Vec<ParamVector>,
}

/// Solves `sum_i A_i^T A_i w = sum_i A_i^T b_i` exactly, then evaluates one
/// block gradient per machine to shift the fixed points.
pub fn solve_reference_minimizer(problem: &QuadraticProblem, gamma: f64) -> Result<ReferenceSolution> {
    let dim = problem.dim();
    let mut h = Matrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for (a, b) in &problem.blocks {
        let g = a.gram();
        for i in 0..dim {
            for j in 0..dim {
                h.set(i, j, h.get(i, j) + g.get(i, j));
            }
        }
        let atb = a.transpose_matvec(b);
        for (r, v) in rhs.iter_mut().zip(&atb) {
            *r += v;
        }
    }
    let w_star = ParamVector::from_vec(solve_dense(&h, &rhs)?);
    let w_i_star = (0..problem.machines())
        .map(|i| {
            let mut w = w_star.clone();
            w.add_scaled(-gamma, &problem.block_gradient(i, &w_star));
            w
        })
        .collect();
    Ok(ReferenceSolution { w_star, w_i_star })
}

/// The `(D+1) x M` table of squared distances `||w_i^{k-d} - w_i*||^2`
/// tracked along a run. Advancing one aggregation event shifts the delay
/// rows down and recomputes row 0 from the current slot iterates; its
/// sup-norm never increases when the step size is admissible.
#[derive(Debug, Clone)]
pub struct ErrorEnvelope {
    rows: Vec<Vec<f64>>,
    reference: ReferenceSolution,
}

impl ErrorEnvelope {
    pub fn new(d_max: u64, reference: ReferenceSolution, initial_slots: &[ParamVector]) -> Result<Self> {
        if initial_slots.len() != reference.w_i_star.len() {
            return Err(Error::contract("slot count does not match reference".to_string()));
        }
        let row0: Vec<f64> = initial_slots
            .iter()
            .zip(&reference.w_i_star)
            .map(|(w, ws)| w.distance_sq(ws))
            .collect();
        let rows = vec![row0; d_max as usize + 1];
        Ok(ErrorEnvelope { rows, reference })
    }

    pub fn machines(&self) -> usize {
        self.rows[0].len()
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, delay: u64) -> &[f64] {
        &self.rows[delay as usize]
    }

    /// Mean of the row at the given delay: the proof's bound on the next
    /// squared error of a machine that used a basis that stale.
    pub fn bound_for(&self, delay: u64) -> f64 {
        let row = &self.rows[delay as usize];
        row.iter().sum::<f64>() / row.len() as f64
    }

    pub fn linf(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |acc: f64, &v| acc.max(v))
    }

    /// Advances one aggregation event:`rows[d+1] <- rows[d]`, then row 0 is
    /// recomputed from the current slot iterates. Returns the new sup-norm.
    pub fn step(&mut self, slots: &[ParamVector]) -> f64 {
        for d in (1..self.rows.len()).rev() {
            let (lo, hi) = self.rows.split_at_mut(d);
            hi[0].copy_from_slice(&lo[d - 1]);
        }
        for (entry, (w, ws)) in self.rows[0]
            .iter_mut()
            .zip(slots.iter().zip(&self.reference.w_i_star))
        {
            *entry = w.distance_sq(ws);
        }
        self.linf()
    }

    pub fn reference(&self) -> &ReferenceSolution {
        &self.reference
    }
}

/// Per-event rows of an envelope, exportable as CSV with columns
/// `event,machine,delay_slot,squared_error,linf_norm`.
#[derive(Debug, Clone, Default)]
pub struct EnvelopeLog {
    records: Vec<(u64, usize, u64, f64, f64)>,
}

impl EnvelopeLog {
    pub fn record(&mut self, event: u64, env: &ErrorEnvelope) {
        let linf = env.linf();
        for d in 0..env.depth() as u64 {
            for (machine, &err) in env.row(d).iter().enumerate() {
                self.records.push((event, machine, d, err, linf));
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("event,machine,delay_slot,squared_error,linf_norm\n");
        for (event, machine, slot, err, linf) in &self.records {
            out.push_str(&format!("{event},{machine},{slot},{err},{linf}\n"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
