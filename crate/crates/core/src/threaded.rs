//! Threaded backend: one OS thread per machine, communication exclusively
//! by message passing. The master role is co-located with machine 0, which
//! computes local passes like any worker. Each direction is a bounded
//! queue where a full queue overwrites the oldest unread message, so
//! nobody ever blocks on anybody else's pass and memory stays bounded
//! under a lagging master.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::engine::{RoundEval, RoundRecord, RunOutcome};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::protocol::{
    master_aggregate, master_ingest, worker_select_basis, CommStats, IngestOutcome,
    MasterBroadcast, MasterTable, WorkerMessage,
};
use crate::solvers::LocalSolver;
use crate::trace::{RunTrace, TraceEvent};

/// Bounded mailbox; pushing onto a full queue drops the oldest unread
/// message, consistent with latest-wins ingestion. Never blocks.
pub struct Mailbox<T> {
    inner: Mutex<std::collections::VecDeque<T>>,
    cap: usize,
}

impl<T> Mailbox<T> {
    pub fn new(cap: usize) -> Self {
        Mailbox {
            inner: Mutex::new(std::collections::VecDeque::with_capacity(cap.max(1))),
            cap: cap.max(1),
        }
    }

    pub fn push(&self, value: T) {
        let mut q = self.inner.lock().expect("mailbox poisoned");
        if q.len() == self.cap {
            q.pop_front();
        }
        q.push_back(value);
    }

    /// Removes and returns everything, oldest first.
    pub fn drain(&self) -> Vec<T> {
        let mut q = self.inner.lock().expect("mailbox poisoned");
        q.drain(..).collect()
    }

    /// Keeps only the newest message.
    pub fn take_latest(&self) -> Option<T> {
        let mut q = self.inner.lock().expect("mailbox poisoned");
        let last = q.pop_back();
        q.clear();
        last
    }
}

/// Outcome of a threaded run, including what each worker saw.
pub struct ThreadedRun<P> {
    pub final_broadcast: P,
    pub rounds: Vec<RoundRecord>,
    pub trace: RunTrace,
    pub stats: CommStats,
    pub outcome: RunOutcome,
    pub wall_seconds: f64,
    pub epochs_completed: Vec<u64>,
    /// Highest master round each machine had received when it stopped.
    pub rounds_seen: Vec<u64>,
    /// Worker-local factor blocks collected at shutdown (factorization runs).
    pub local_factors: Vec<Option<Matrix>>,
}

pub struct ThreadedConfig {
    pub max_master_epochs: u64,
    pub stop_epsilon: Option<f64>,
    /// Capacity of each worker -> master queue before old messages are
    /// overwritten.
    pub worker_queue_cap: usize,
}

impl Default for ThreadedConfig {
    fn default() -> Self {
        ThreadedConfig { max_master_epochs: 10, stop_epsilon: None, worker_queue_cap: 8 }
    }
}

struct WorkerReport {
    epochs: u64,
    sends: u64,
    rounds_seen: u64,
    local_factors: Option<Matrix>,
}

/// Runs machines 1..m on worker threads and the master loop (machine 0) on
/// the calling thread. `evaluate` only sees the broadcast payload; anything
/// needing worker-local state is computed after shutdown from the returned
/// factor blocks.
pub fn run_threaded<S, F>(
    mut solvers: Vec<S>,
    initial: S::P,
    cfg: &ThreadedConfig,
    mut evaluate: F,
) -> Result<ThreadedRun<S::P>>
where
    S: LocalSolver + 'static,
    F: FnMut(&S::P) -> RoundEval,
{
    let m = solvers.len();
    if m == 0 {
        return Err(Error::contract("need at least one machine".to_string()));
    }
    let start = Instant::now();
    let stop = Arc::new(AtomicBool::new(false));
    let failure: Arc<Mutex<Option<Error>>> = Arc::new(Mutex::new(None));

    let mut to_master: Vec<Arc<Mailbox<WorkerMessage<S::P>>>> = Vec::new();
    let mut to_worker: Vec<Arc<Mailbox<MasterBroadcast<S::P>>>> = Vec::new();
    let mut handles = Vec::new();

    let mut worker_solvers: Vec<S> = solvers.drain(1..).collect();
    let mut master_solver = solvers.pop().expect("machine 0 exists");

    for (offset, mut solver) in worker_solvers.drain(..).enumerate() {
        let id = offset + 1;
        let inbox = Arc::new(Mailbox::<MasterBroadcast<S::P>>::new(1));
        let outbox = Arc::new(Mailbox::<WorkerMessage<S::P>>::new(cfg.worker_queue_cap));
        to_worker.push(Arc::clone(&inbox));
        to_master.push(Arc::clone(&outbox));
        let stop = Arc::clone(&stop);
        let failure = Arc::clone(&failure);
        let w0 = initial.clone();
        handles.push(std::thread::spawn(move || {
            let mut last_local = w0;
            let mut epoch = 0u64;
            let mut sends = 0u64;
            let mut rounds_seen = 0u64;
            while !stop.load(Ordering::Acquire) {
                let received = inbox.take_latest();
                if let Some(b) = &received {
                    rounds_seen = rounds_seen.max(b.master_round);
                }
                let basis = worker_select_basis(received.as_ref(), &last_local);
                match solver.run_epoch(&basis, epoch) {
                    Ok(payload) => {
                        last_local = payload.clone();
                        outbox.push(WorkerMessage {
                            worker_id: id,
                            payload,
                            local_epoch: epoch,
                            wall_tick: epoch,
                        });
                        sends += 1;
                        epoch += 1;
                    }
                    Err(e) => {
                        let mut slot = failure.lock().expect("failure slot poisoned");
                        *slot = Some(match e {
                            Error::Diverged(mut info) => {
                                info.machine = Some(id);
                                Error::Diverged(info)
                            }
                            other => other,
                        });
                        break;
                    }
                }
            }
            WorkerReport {
                epochs: epoch,
                sends,
                rounds_seen,
                local_factors: solver.local_factors().cloned(),
            }
        }));
    }

    let mut table = MasterTable::new(m, initial.clone());
    let mut trace = RunTrace::default();
    let mut stats = CommStats::default();
    let mut rounds = Vec::new();
    let mut validation_history: Vec<f64> = Vec::new();
    let mut outcome = RunOutcome::BudgetExhausted;
    let mut basis = initial;
    let mut master_error: Option<Error> = None;

    for epoch in 0..cfg.max_master_epochs {
        match master_solver.run_epoch(&basis, epoch) {
            Ok(payload) => {
                stats.sends += 1;
                trace.push(TraceEvent::Send { tick: epoch, machine: 0, epoch });
                let msg =
                    WorkerMessage { worker_id: 0, payload, local_epoch: epoch, wall_tick: epoch };
                let fresh = master_ingest(&mut table, msg, &mut stats)?;
                trace.push(TraceEvent::Ingest {
                    tick: epoch,
                    machine: 0,
                    epoch,
                    stale: fresh == IngestOutcome::Stale,
                });
            }
            Err(e) => {
                master_error = Some(match e {
                    Error::Diverged(mut info) => {
                        info.machine = Some(0);
                        Error::Diverged(info)
                    }
                    other => other,
                });
                break;
            }
        }
        let comm_start = Instant::now();
        for outbox in &to_master {
            for msg in outbox.drain() {
                let epoch_of = msg.local_epoch;
                let machine = msg.worker_id;
                let fresh = master_ingest(&mut table, msg, &mut stats)?;
                trace.push(TraceEvent::Ingest {
                    tick: epoch,
                    machine,
                    epoch: epoch_of,
                    stale: fresh == IngestOutcome::Stale,
                });
            }
        }
        if let Some(e) = failure.lock().expect("failure slot poisoned").take() {
            master_error = Some(e);
            break;
        }
        let broadcast = master_aggregate(&table)?;
        let round = rounds.len() as u64 + 1;
        let eval = evaluate(&broadcast);
        stats.broadcasts += 1;
        trace.push(TraceEvent::Aggregate { tick: epoch, round, objective: eval.train_objective });
        trace.push(TraceEvent::Broadcast { tick: epoch, round });
        let bcast = MasterBroadcast { payload: broadcast.clone(), master_round: round };
        for inbox in &to_worker {
            inbox.push(bcast.clone());
        }
        stats.time_in_calls += comm_start.elapsed().as_secs_f64();
        rounds.push(RoundRecord {
            round,
            tick: epoch,
            wall_seconds: start.elapsed().as_secs_f64(),
            comm_sends: stats.sends,
            comm_time: stats.time_in_calls,
            eval,
        });
        basis = broadcast;
        if let Some(v) = eval.validation_objective {
            validation_history.push(v);
            if let Some(eps) = cfg.stop_epsilon {
                if crate::metrics::should_stop(&validation_history, eps) {
                    outcome = RunOutcome::Stopped { round };
                    break;
                }
            }
        }
    }

    stop.store(true, Ordering::Release);
    let mut epochs_completed = vec![0u64; m];
    let mut rounds_seen = vec![0u64; m];
    let mut local_factors: Vec<Option<Matrix>> = vec![None; m];
    epochs_completed[0] = rounds.len() as u64;
    rounds_seen[0] = rounds.len() as u64;
    local_factors[0] = master_solver.local_factors().cloned();

    for (offset, h) in handles.into_iter().enumerate() {
        match h.join() {
            Ok(report) => {
                epochs_completed[offset + 1] = report.epochs;
                rounds_seen[offset + 1] = report.rounds_seen;
                local_factors[offset + 1] = report.local_factors;
                stats.sends += report.sends;
            }
            Err(_) => {
                master_error
                    .get_or_insert_with(|| Error::Data(format!("worker {} panicked", offset + 1)));
            }
        }
    }
    // drain the final deposits so no completed epoch is lost
    let final_tick = cfg.max_master_epochs;
    for outbox in &to_master {
        for msg in outbox.drain() {
            let epoch_of = msg.local_epoch;
            let machine = msg.worker_id;
            let fresh = master_ingest(&mut table, msg, &mut stats)?;
            trace.push(TraceEvent::Ingest {
                tick: final_tick,
                machine,
                epoch: epoch_of,
                stale: fresh == IngestOutcome::Stale,
            });
        }
    }
    if let Some(e) = failure.lock().expect("failure slot poisoned").take() {
        master_error.get_or_insert(e);
    }

    if let Some(e) = master_error {
        return Err(match e {
            Error::Diverged(mut info) => {
                info.stats = Some(stats);
                info.trace = Some(trace);
                Error::Diverged(info)
            }
            other => other,
        });
    }

    let final_broadcast = master_aggregate(&table)?;
    Ok(ThreadedRun {
        final_broadcast,
        rounds,
        trace,
        stats,
        outcome,
        wall_seconds: start.elapsed().as_secs_f64(),
        epochs_completed,
        rounds_seen,
        local_factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::linalg::ParamVector;
    use crate::solvers::{GradientSolver, ShardObjective};

    struct Centering {
        center: f64,
    }

    impl ShardObjective for Centering {
        fn gradient(&self, w: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::from_vec(vec![w.values()[0] - self.center]))
        }

        fn dim(&self) -> usize {
            1
        }
    }

    #[test]
    fn mailbox_overwrites_oldest() {
        let mb = Mailbox::new(2);
        mb.push(1);
        mb.push(2);
        mb.push(3);
        assert_eq!(mb.drain(), vec![2, 3]);
        assert_eq!(mb.take_latest(), None);
    }

    #[test]
    fn single_machine_threaded_matches_serial() {
        let solvers = vec![GradientSolver { shard: Centering { center: 2.0 }, gamma: 0.5 }];
        let cfg = ThreadedConfig { max_master_epochs: 12, ..ThreadedConfig::default() };
        let run =
            run_threaded(solvers, ParamVector::zeros(1), &cfg, |_| RoundEval::default()).unwrap();
        let mut w = 0.0;
        for _ in 0..12 {
            w += 0.5 * (2.0 - w);
        }
        assert!((run.final_broadcast.values()[0] - w).abs() < 1e-15);
        assert_eq!(run.epochs_completed[0], 12);
    }

    #[test]
    fn workers_make_progress_and_receive_broadcasts() {
        let solvers: Vec<_> = [0.0, 4.0, 2.0]
            .iter()
            .map(|&c| GradientSolver { shard: Centering { center: c }, gamma: 0.3 })
            .collect();
        let cfg = ThreadedConfig { max_master_epochs: 200, ..ThreadedConfig::default() };
        let run =
            run_threaded(solvers, ParamVector::zeros(1), &cfg, |_| RoundEval::default()).unwrap();
        assert_eq!(run.epochs_completed.len(), 3);
        for (i, &e) in run.epochs_completed.iter().enumerate() {
            assert!(e > 0, "machine {i} never completed an epoch");
        }
        for (i, &r) in run.rounds_seen.iter().enumerate().skip(1) {
            assert!(r > 0, "worker {i} never saw a broadcast");
        }
    }

    #[test]
    fn worker_divergence_aborts_the_run() {
        struct Exploding;
        impl ShardObjective for Exploding {
            fn gradient(&self, w: &ParamVector) -> Result<ParamVector> {
                Ok(ParamVector::from_vec(vec![w.values()[0] * -1e308]))
            }
            fn dim(&self) -> usize {
                1
            }
        }
        enum Mixed {
            Fine(GradientSolver<Centering>),
            Bad(GradientSolver<Exploding>),
        }
        impl LocalSolver for Mixed {
            type P = ParamVector;
            fn run_epoch(&mut self, basis: &ParamVector, epoch: u64) -> Result<ParamVector> {
                match self {
                    Mixed::Fine(s) => s.run_epoch(basis, epoch),
                    Mixed::Bad(s) => s.run_epoch(basis, epoch),
                }
            }
        }
        let solvers = vec![
            Mixed::Fine(GradientSolver { shard: Centering { center: 2.0 }, gamma: 0.5 }),
            Mixed::Bad(GradientSolver { shard: Exploding, gamma: 10.0 }),
        ];
        // the budget is far beyond what the master can finish before the
        // worker thread gets scheduled and reports its failure
        let cfg = ThreadedConfig { max_master_epochs: 50_000_000, ..ThreadedConfig::default() };
        let out = run_threaded(solvers, ParamVector::from_vec(vec![1.0]), &cfg, |_| {
            RoundEval::default()
        });
        assert!(matches!(out, Err(Error::Diverged(_))));
    }
}
