//! End-to-end drivers for the asynchronous algorithms: build the
//! per-machine solvers from a partitioned dataset, run one of the backends,
//! and assemble the final model. Worker-local factor blocks are
//! concatenated into the full user matrix at termination.

use std::ops::ControlFlow;
use std::sync::Arc;

use crate::engine::{run_round_mode, run_ticked_mode, RoundEval, SimRun, TickedConfig};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, ParamVector};
use crate::losses::{
    logistic_objective, mf_objective, LabeledExample, LogisticLossSpec, MfLossSpec, Rating,
};
use crate::metrics::{evaluate_rmse, UnseenPolicy};
use crate::protocol::CommStats;
use crate::rng::RngState;
use crate::sim::{DelaySchedule, MachineModel};
use crate::solvers::{init_factors, LocalSolver, MfSolver, SvrgEpochConfig, SvrgSolver};
use crate::threaded::{run_threaded, ThreadedConfig, ThreadedRun};
use crate::trace::RunTrace;

/// A sharded binary classification problem.
#[derive(Clone)]
pub struct BcProblem {
    pub shards: Vec<Arc<Vec<LabeledExample>>>,
    pub dim: usize,
    pub spec: LogisticLossSpec,
    pub train: Arc<Vec<LabeledExample>>,
    pub valid: Arc<Vec<LabeledExample>>,
    pub svrg: SvrgEpochConfig,
    pub seed: u64,
    pub warm_start: bool,
}

impl BcProblem {
    pub fn machines(&self) -> usize {
        self.shards.len()
    }

    fn solvers(&self) -> Vec<SvrgSolver> {
        self.shards
            .iter()
            .enumerate()
            .map(|(j, shard)| SvrgSolver {
                shard: Arc::clone(shard),
                spec: self.spec,
                cfg: self.svrg,
                rng: RngState::new(self.seed, j as u64),
            })
            .collect()
    }

    fn evaluator(&self) -> impl FnMut(&ParamVector, &[SvrgSolver]) -> RoundEval + '_ {
        move |w, _| self.evaluate(w)
    }

    pub fn evaluate(&self, w: &ParamVector) -> RoundEval {
        let train = logistic_objective(w, &self.train, &self.spec).ok();
        let valid = if self.valid.is_empty() {
            None
        } else {
            logistic_objective(w, &self.valid, &self.spec).ok()
        };
        RoundEval { train_objective: train, validation_objective: valid, test_metric: None }
    }

    /// Warm start shared by this problem's runs: one synchronized
    /// mini-batch gradient pass from the origin.
    pub fn warm_started_initial(
        &self,
        stats: &mut CommStats,
        trace: &mut RunTrace,
    ) -> Result<ParamVector> {
        let w0 = ParamVector::zeros(self.dim);
        if !self.warm_start {
            return Ok(w0);
        }
        crate::engine::warm_start_pass(
            &w0,
            &self.shards,
            &self.spec,
            self.svrg.gamma,
            self.svrg.batch_size,
            stats,
            trace,
        )
    }
}

/// Result of a classification run.
pub struct BcRun {
    pub sim: SimRun<ParamVector>,
    pub final_w: ParamVector,
    pub wall_seconds: f64,
}

fn merge_prefix(sim: &mut SimRun<ParamVector>, stats: CommStats, mut trace: RunTrace) {
    sim.stats.sends += stats.sends;
    sim.stats.receives += stats.receives;
    sim.stats.broadcasts += stats.broadcasts;
    sim.stats.gathers += stats.gathers;
    sim.stats.stale_drops += stats.stale_drops;
    sim.stats.time_in_calls += stats.time_in_calls;
    trace.events.extend(std::mem::take(&mut sim.trace.events));
    sim.trace = trace;
    for row in &mut sim.rounds {
        row.comm_sends += stats.sends;
    }
}

/// Variance-reduced classification on the round-mode simulator: every
/// machine runs one epoch per round against a delay-scheduled basis.
pub fn run_adg_bc_rounds(
    problem: &BcProblem,
    schedule: &DelaySchedule,
    max_epochs: u64,
    stop_epsilon: Option<f64>,
) -> Result<BcRun> {
    let started = std::time::Instant::now();
    let mut stats = CommStats::default();
    let mut trace = RunTrace::default();
    let w0 = problem.warm_started_initial(&mut stats, &mut trace)?;
    let mut machines = problem.solvers();
    let mut sim = run_round_mode(
        &mut machines,
        w0,
        schedule,
        max_epochs,
        stop_epsilon,
        problem.evaluator(),
        |_| ControlFlow::Continue(()),
    )?;
    merge_prefix(&mut sim, stats, trace);
    let final_w = sim.final_broadcast.clone();
    Ok(BcRun { sim, final_w, wall_seconds: started.elapsed().as_secs_f64() })
}

/// Same algorithm on the ticked simulator with per-machine compute times.
pub fn run_adg_bc_ticked(
    problem: &BcProblem,
    models: &[MachineModel],
    max_epochs: u64,
    stop_epsilon: Option<f64>,
    broadcast_on_ingest: bool,
) -> Result<BcRun> {
    let started = std::time::Instant::now();
    let mut stats = CommStats::default();
    let mut trace = RunTrace::default();
    let w0 = problem.warm_started_initial(&mut stats, &mut trace)?;
    let mut machines = problem.solvers();
    let cfg = TickedConfig { max_master_epochs: max_epochs, stop_epsilon, broadcast_on_ingest };
    let mut sim = run_ticked_mode(&mut machines, models, w0, &cfg, problem.evaluator())?;
    merge_prefix(&mut sim, stats, trace);
    let final_w = sim.final_broadcast.clone();
    Ok(BcRun { sim, final_w, wall_seconds: started.elapsed().as_secs_f64() })
}

/// Same algorithm on real threads.
pub fn run_adg_bc_threaded(
    problem: &BcProblem,
    max_epochs: u64,
    stop_epsilon: Option<f64>,
) -> Result<(ThreadedRun<ParamVector>, ParamVector)> {
    let mut stats = CommStats::default();
    let mut trace = RunTrace::default();
    let w0 = problem.warm_started_initial(&mut stats, &mut trace)?;
    let solvers = problem.solvers();
    let cfg = ThreadedConfig {
        max_master_epochs: max_epochs,
        stop_epsilon,
        ..ThreadedConfig::default()
    };
    let eval_problem = problem.clone();
    let mut run = run_threaded(solvers, w0, &cfg, move |w| eval_problem.evaluate(w))?;
    run.stats.sends += stats.sends;
    run.stats.receives += stats.receives;
    run.stats.broadcasts += stats.broadcasts;
    run.stats.gathers += stats.gathers;
    trace.events.extend(std::mem::take(&mut run.trace.events));
    run.trace = trace;
    let final_w = run.final_broadcast.clone();
    Ok((run, final_w))
}

/// One worker's slice of a row-partitioned rating matrix. Rating user
/// indices are local to the block (`user - user_start`).
#[derive(Debug, Clone)]
pub struct MfBlock {
    pub user_start: usize,
    pub n_users: usize,
    pub ratings: Arc<Vec<Rating>>,
}

/// A row-partitioned factorization problem, plus held-out sets.
#[derive(Clone)]
pub struct MfProblem {
    pub blocks: Vec<MfBlock>,
    pub n_users: usize,
    pub n_items: usize,
    pub train: Arc<Vec<Rating>>,
    pub valid: Arc<Vec<Rating>>,
    pub test: Arc<Vec<Rating>>,
    pub spec: MfLossSpec,
    pub gamma: f64,
    pub seed: u64,
}

impl MfProblem {
    /// Builds the block structure from a training set and a per-user
    /// machine assignment (contiguous user ranges).
    pub fn from_partition(
        train: Vec<Rating>,
        valid: Vec<Rating>,
        test: Vec<Rating>,
        n_users: usize,
        n_items: usize,
        assignment: &[usize],
        m: usize,
        spec: MfLossSpec,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        if assignment.len() != n_users {
            return Err(Error::contract("assignment must cover every user".to_string()));
        }
        let mut starts = vec![usize::MAX; m];
        let mut sizes = vec![0usize; m];
        for (u, &b) in assignment.iter().enumerate() {
            if b >= m {
                return Err(Error::contract(format!("machine {b} out of range")));
            }
            if starts[b] == usize::MAX {
                starts[b] = u;
            } else if assignment[u - 1] != b {
                return Err(Error::contract("user blocks must be contiguous".to_string()));
            }
            sizes[b] += 1;
        }
        if starts.iter().any(|&s| s == usize::MAX) {
            return Err(Error::InfeasiblePartition("a machine received no users".to_string()));
        }
        let mut per_block: Vec<Vec<Rating>> = vec![Vec::new(); m];
        for r in &train {
            let b = assignment[r.user];
            per_block[b].push(Rating { user: r.user - starts[b], item: r.item, value: r.value });
        }
        if per_block.iter().any(Vec::is_empty) {
            return Err(Error::InfeasiblePartition(
                "a machine received no training ratings".to_string(),
            ));
        }
        let blocks = per_block
            .into_iter()
            .enumerate()
            .map(|(b, ratings)| MfBlock {
                user_start: starts[b],
                n_users: sizes[b],
                ratings: Arc::new(ratings),
            })
            .collect();
        Ok(MfProblem {
            blocks,
            n_users,
            n_items,
            train: Arc::new(train),
            valid: Arc::new(valid),
            test: Arc::new(test),
            spec,
            gamma,
            seed,
        })
    }

    pub fn machines(&self) -> usize {
        self.blocks.len()
    }

    /// Initial factor state: per-machine `P` blocks on their own streams,
    /// one shared `Q` on the stream after the last machine, so every
    /// machine starts from the same broadcast.
    pub fn initial_factors(&self) -> (Vec<Matrix>, Matrix) {
        let p_blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| {
                init_factors(b.n_users, 1, &self.spec, RngState::new(self.seed, j as u64)).p_block
            })
            .collect();
        let q = init_factors(1, self.n_items, &self.spec, RngState::new(self.seed, self.machines() as u64))
            .q_shared;
        (p_blocks, q)
    }

    pub fn solvers(&self) -> Vec<MfSolver> {
        let (p_blocks, _) = self.initial_factors();
        self.blocks
            .iter()
            .zip(p_blocks)
            .enumerate()
            .map(|(j, (block, p_block))| MfSolver {
                p_block,
                ratings: Arc::clone(&block.ratings),
                gamma: self.gamma,
                spec: self.spec,
                rng: RngState::new(self.seed, j as u64),
                steps_per_epoch: block.ratings.len(),
            })
            .collect()
    }

    /// Stitches the per-machine blocks back into the full user matrix.
    pub fn assemble_p(&self, blocks: &[&Matrix]) -> Matrix {
        let k = self.spec.k_latent;
        let mut full = Matrix::zeros(self.n_users, k);
        for (meta, block) in self.blocks.iter().zip(blocks) {
            full.write_rows(meta.user_start, block);
        }
        full
    }

    /// Objectives and test error for a full model snapshot. The training
    /// objective is reported per rating so values are comparable across
    /// machine counts.
    pub fn evaluate(&self, p: &Matrix, q: &Matrix) -> RoundEval {
        let train = mf_objective(p, q, &self.train, &self.spec)
            .ok()
            .map(|v| v / self.train.len() as f64);
        let valid = if self.valid.is_empty() {
            None
        } else {
            mf_objective(p, q, &self.valid, &self.spec).ok().map(|v| v / self.valid.len() as f64)
        };
        let rmse = if self.test.is_empty() {
            None
        } else {
            evaluate_rmse(p, q, &self.test, UnseenPolicy::Skip, None).ok().map(|r| r.rmse)
        };
        RoundEval { train_objective: train, validation_objective: valid, test_metric: rmse }
    }

    fn god_mode_evaluator(&self) -> impl FnMut(&Matrix, &[MfSolver]) -> RoundEval + '_ {
        move |q, solvers| {
            let blocks: Vec<&Matrix> =
                solvers.iter().map(|s| s.local_factors().expect("mf solver has factors")).collect();
            let p = self.assemble_p(&blocks);
            self.evaluate(&p, q)
        }
    }
}

/// Result of a factorization run: the averaged item matrix plus the
/// concatenated user blocks.
pub struct MfRun {
    pub sim: SimRun<Matrix>,
    pub p_full: Matrix,
    pub q_final: Matrix,
    pub wall_seconds: f64,
}

/// Row-split factorization on the round-mode simulator.
pub fn run_adg_mf_rounds(
    problem: &MfProblem,
    schedule: &DelaySchedule,
    max_epochs: u64,
    stop_epsilon: Option<f64>,
) -> Result<MfRun> {
    let started = std::time::Instant::now();
    let (_, q0) = problem.initial_factors();
    let mut machines = problem.solvers();
    let sim = run_round_mode(
        &mut machines,
        q0,
        schedule,
        max_epochs,
        stop_epsilon,
        problem.god_mode_evaluator(),
        |_| ControlFlow::Continue(()),
    )?;
    let blocks: Vec<&Matrix> = machines.iter().map(|s| &s.p_block).collect();
    let p_full = problem.assemble_p(&blocks);
    let q_final = sim.final_broadcast.clone();
    Ok(MfRun { sim, p_full, q_final, wall_seconds: started.elapsed().as_secs_f64() })
}

/// Row-split factorization on the ticked simulator.
pub fn run_adg_mf_ticked(
    problem: &MfProblem,
    models: &[MachineModel],
    max_epochs: u64,
    stop_epsilon: Option<f64>,
    broadcast_on_ingest: bool,
) -> Result<MfRun> {
    let started = std::time::Instant::now();
    let (_, q0) = problem.initial_factors();
    let mut machines = problem.solvers();
    let cfg = TickedConfig { max_master_epochs: max_epochs, stop_epsilon, broadcast_on_ingest };
    let sim = run_ticked_mode(&mut machines, models, q0, &cfg, problem.god_mode_evaluator())?;
    let blocks: Vec<&Matrix> = machines.iter().map(|s| &s.p_block).collect();
    let p_full = problem.assemble_p(&blocks);
    let q_final = sim.final_broadcast.clone();
    Ok(MfRun { sim, p_full, q_final, wall_seconds: started.elapsed().as_secs_f64() })
}

/// Row-split factorization on real threads. Objectives are not sampled
/// during the run (the master has no view of worker `P` blocks); the final
/// model is evaluated once at the end.
pub fn run_adg_mf_threaded(
    problem: &MfProblem,
    max_epochs: u64,
) -> Result<(ThreadedRun<Matrix>, Matrix, Matrix)> {
    let (_, q0) = problem.initial_factors();
    let solvers = problem.solvers();
    let cfg = ThreadedConfig {
        max_master_epochs: max_epochs,
        stop_epsilon: None,
        ..ThreadedConfig::default()
    };
    let run = run_threaded(solvers, q0, &cfg, |_| RoundEval::default())?;
    let blocks: Vec<&Matrix> = run
        .local_factors
        .iter()
        .map(|b| b.as_ref().expect("every machine reports factors"))
        .collect();
    let p_full = problem.assemble_p(&blocks);
    let q_final = run.final_broadcast.clone();
    Ok((run, p_full, q_final))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_user_rows, synth_ratings, RatingMatrix};
    use crate::sim::{make_delay_schedule, DelayKind};

    fn toy_problem(m: usize, seed: u64) -> MfProblem {
        let synth = synth_ratings(12, 8, 2, 0.05, 0.7, seed).unwrap();
        let matrix = synth.matrix;
        let assignment = partition_user_rows(&matrix, m).unwrap().assignment;
        let n_users = matrix.n_users;
        let n_items = matrix.n_items;
        MfProblem::from_partition(
            matrix.ratings.clone(),
            vec![],
            vec![],
            n_users,
            n_items,
            &assignment,
            m,
            MfLossSpec::new(0.05, 2).unwrap(),
            0.01,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn single_machine_mf_runs_and_improves() {
        let problem = toy_problem(1, 3);
        let schedule = make_delay_schedule(DelayKind::Constant, 0, 1, 0);
        let run = run_adg_mf_rounds(&problem, &schedule, 30, None).unwrap();
        let first = run.sim.rounds.first().unwrap().eval.train_objective.unwrap();
        let last = run.sim.rounds.last().unwrap().eval.train_objective.unwrap();
        assert!(last < first, "objective should improve: {first} -> {last}");
        assert_eq!(run.p_full.n_rows(), problem.n_users);
    }

    #[test]
    fn mf_rounds_deterministic_under_seed() {
        let problem = toy_problem(2, 4);
        let schedule = make_delay_schedule(DelayKind::UniformRandom, 3, 2, 9);
        let a = run_adg_mf_rounds(&problem, &schedule, 10, None).unwrap();
        let b = run_adg_mf_rounds(&problem, &schedule, 10, None).unwrap();
        assert_eq!(a.sim.trace, b.sim.trace);
        assert_eq!(a.q_final, b.q_final);
        assert_eq!(a.p_full, b.p_full);
    }

    #[test]
    fn k1_single_rating_blocks_hand_checked() {
        // two workers, one rating each, K = 1, one round at delay 0:
        // worker j updates (p_j, q) from the shared q0 by one exact
        // gradient step, the master averages the two q copies.
        let ratings = vec![
            Rating { user: 0, item: 0, value: 1.0 },
            Rating { user: 1, item: 0, value: 2.0 },
        ];
        let matrix = RatingMatrix::new(ratings, 2, 1).unwrap();
        let spec = MfLossSpec::new(0.0, 1).unwrap();
        let gamma = 0.1;
        let problem = MfProblem::from_partition(
            matrix.ratings.clone(),
            vec![],
            vec![],
            2,
            1,
            &[0, 1],
            2,
            spec,
            gamma,
            7,
        )
        .unwrap();
        let schedule = make_delay_schedule(DelayKind::Constant, 0, 2, 0);
        let run = run_adg_mf_rounds(&problem, &schedule, 1, None).unwrap();

        let (p_blocks, q0) = problem.initial_factors();
        let q0v = q0.get(0, 0);
        let mut expected_q = Vec::new();
        let mut expected_p = Vec::new();
        for (j, r) in [1.0f64, 2.0].iter().enumerate() {
            let p0 = p_blocks[j].get(0, 0);
            // one step on (r - q p)^2: dp = -2 (r - qp) q, dq = -2 (r - qp) p
            let resid = r - q0v * p0;
            let p1 = p0 - gamma * (-2.0 * resid * q0v);
            let q1 = q0v - gamma * (-2.0 * resid * p0);
            expected_p.push(p1);
            expected_q.push(q1);
        }
        let q_mean = (expected_q[0] + expected_q[1]) / 2.0;
        assert!((run.q_final.get(0, 0) - q_mean).abs() < 1e-15);
        assert!((run.p_full.get(0, 0) - expected_p[0]).abs() < 1e-15);
        assert!((run.p_full.get(1, 0) - expected_p[1]).abs() < 1e-15);
    }
}
