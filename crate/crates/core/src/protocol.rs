//! Wire-level types and master-side operations of the parameter exchange.
//!
//! Workers send their updated payload (a parameter vector, or the shared
//! item-factor matrix) to the master after each full local pass. The master
//! keeps one slot per worker holding the latest copy it has seen, averages
//! the slots, and broadcasts the result. Messages that are older than the
//! slot they target are dropped (latest-wins ingestion).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, ParamVector};

/// Anything the machines can exchange and the master can average.
pub trait Payload: Clone + PartialEq + Send + 'static {
    /// Elementwise arithmetic mean over the slots, summed in slot order.
    fn average(slots: &[Self]) -> Result<Self>;
    fn all_finite(&self) -> bool;
}

impl Payload for ParamVector {
    fn average(slots: &[Self]) -> Result<Self> {
        ParamVector::mean_of(slots)
    }

    fn all_finite(&self) -> bool {
        self.all_finite()
    }
}

impl Payload for Matrix {
    fn average(slots: &[Self]) -> Result<Self> {
        Matrix::mean_of(slots)
    }

    fn all_finite(&self) -> bool {
        self.all_finite()
    }
}

/// A worker's update: payload plus the worker's monotone epoch counter.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerMessage<P> {
    pub worker_id: usize,
    pub payload: P,
    pub local_epoch: u64,
    pub wall_tick: u64,
}

/// The master's averaged parameter at a given round.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterBroadcast<P> {
    pub payload: P,
    pub master_round: u64,
}

/// Whether an ingested message replaced its slot or was dropped as stale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Fresh,
    Stale,
}

/// Per-worker slots holding the latest payload received from each machine.
/// Slots start at the common initial parameter so the round-0 average is
/// defined and equals that initial parameter.
#[derive(Debug, Clone)]
pub struct MasterTable<P> {
    slots: Vec<P>,
    rounds_seen: Vec<Option<u64>>,
}

impl<P: Payload> MasterTable<P> {
    pub fn new(machines: usize, initial: P) -> Self {
        MasterTable {
            slots: vec![initial; machines],
            rounds_seen: vec![None; machines],
        }
    }

    pub fn machines(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[P] {
        &self.slots
    }

    pub fn epoch_seen(&self, worker: usize) -> Option<u64> {
        self.rounds_seen[worker]
    }
}

/// Latest-wins ingestion: the slot is overwritten only by a strictly newer
/// `local_epoch` from the same worker; anything else is counted and dropped.
pub fn master_ingest<P: Payload>(
    table: &mut MasterTable<P>,
    msg: WorkerMessage<P>,
    stats: &mut CommStats,
) -> Result<IngestOutcome> {
    if msg.worker_id >= table.machines() {
        return Err(Error::protocol(format!(
            "worker id {} out of range for {} machines",
            msg.worker_id,
            table.machines()
        )));
    }
    stats.receives += 1;
    let seen = table.rounds_seen[msg.worker_id];
    if seen.is_some_and(|e| msg.local_epoch <= e) {
        stats.stale_drops += 1;
        return Ok(IngestOutcome::Stale);
    }
    table.rounds_seen[msg.worker_id] = Some(msg.local_epoch);
    table.slots[msg.worker_id] = msg.payload;
    Ok(IngestOutcome::Fresh)
}

/// Master step: the elementwise mean of the latest per-worker payloads.
pub fn master_aggregate<P: Payload>(table: &MasterTable<P>) -> Result<P> {
    P::average(&table.slots)
}

/// A worker's basis for its next pass: the broadcast received since its
/// previous pass started, or its own last local parameter otherwise.
pub fn worker_select_basis<P: Clone>(
    last_broadcast: Option<&MasterBroadcast<P>>,
    last_local: &P,
) -> P {
    match last_broadcast {
        Some(b) => b.payload.clone(),
        None => last_local.clone(),
    }
}

/// Counters of communication operations, in the accounting used for the
/// overhead comparisons: `sends` counts payload deposits by any machine
/// (master included), `receives` counts master-side ingests (stale ones
/// included, tracked separately in `stale_drops`), `broadcasts` counts
/// master broadcast operations and `gathers` counts synchronous collection
/// barriers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CommStats {
    pub sends: u64,
    pub receives: u64,
    pub broadcasts: u64,
    pub gathers: u64,
    pub stale_drops: u64,
    /// Wall-clock seconds spent inside communication calls (threaded
    /// backend only; zero in the simulator).
    pub time_in_calls: f64,
}

impl CommStats {
    /// Total number of communication calls, the quantity compared across
    /// algorithms at equal epoch counts.
    pub fn total_calls(&self) -> u64 {
        self.sends + self.receives + self.broadcasts + self.gathers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(worker: usize, epoch: u64, v: Vec<f64>) -> WorkerMessage<ParamVector> {
        WorkerMessage {
            worker_id: worker,
            payload: ParamVector::from_vec(v),
            local_epoch: epoch,
            wall_tick: 0,
        }
    }

    #[test]
    fn aggregate_is_arithmetic_mean() {
        let mut table = MasterTable::new(2, ParamVector::zeros(2));
        let mut stats = CommStats::default();
        master_ingest(&mut table, msg(0, 0, vec![1.0, 3.0]), &mut stats).unwrap();
        master_ingest(&mut table, msg(1, 0, vec![3.0, 1.0]), &mut stats).unwrap();
        let mean = master_aggregate(&table).unwrap();
        assert_eq!(mean.values(), &[2.0, 2.0]);
    }

    #[test]
    fn aggregate_of_identical_slots_is_idempotent() {
        let v = ParamVector::from_vec(vec![0.25, -1.5, 4.0]);
        let table = MasterTable::new(4, v.clone());
        let mean = master_aggregate(&table).unwrap();
        for (a, b) in mean.values().iter().zip(v.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_matches_brute_force_sum() {
        use rand::Rng;
        let mut rng = crate::rng::RngState::new(9, 0).rng();
        let m = 5;
        let d = 7;
        let mut table = MasterTable::new(m, ParamVector::zeros(d));
        let mut stats = CommStats::default();
        let mut payloads = Vec::new();
        for w in 0..m {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
            payloads.push(v.clone());
            master_ingest(&mut table, msg(w, 0, v), &mut stats).unwrap();
        }
        let mean = master_aggregate(&table).unwrap();
        for j in 0..d {
            let brute: f64 = payloads.iter().map(|p| p[j]).sum::<f64>() / m as f64;
            assert!((mean.values()[j] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn ingest_fresh_updates_slot_and_counter() {
        let mut table = MasterTable::new(2, ParamVector::zeros(1));
        let mut stats = CommStats::default();
        let out = master_ingest(&mut table, msg(1, 3, vec![7.0]), &mut stats).unwrap();
        assert_eq!(out, IngestOutcome::Fresh);
        assert_eq!(table.epoch_seen(1), Some(3));
        assert_eq!(table.slots()[1].values(), &[7.0]);
        assert_eq!(stats.receives, 1);
        assert_eq!(stats.stale_drops, 0);
    }

    #[test]
    fn ingest_replayed_epoch_is_dropped() {
        let mut table = MasterTable::new(2, ParamVector::zeros(1));
        let mut stats = CommStats::default();
        master_ingest(&mut table, msg(0, 2, vec![1.0]), &mut stats).unwrap();
        let out = master_ingest(&mut table, msg(0, 2, vec![99.0]), &mut stats).unwrap();
        assert_eq!(out, IngestOutcome::Stale);
        assert_eq!(table.slots()[0].values(), &[1.0]);
        assert_eq!(stats.stale_drops, 1);
    }

    #[test]
    fn ingest_keeps_newest_of_two_pending_messages() {
        let mut table = MasterTable::new(4, ParamVector::zeros(1));
        let mut stats = CommStats::default();
        master_ingest(&mut table, msg(3, 5, vec![5.0]), &mut stats).unwrap();
        master_ingest(&mut table, msg(3, 7, vec![7.0]), &mut stats).unwrap();
        assert_eq!(table.slots()[3].values(), &[7.0]);
        assert_eq!(table.epoch_seen(3), Some(7));
        // and an out-of-order older message afterwards is dropped too
        let out = master_ingest(&mut table, msg(3, 6, vec![6.0]), &mut stats).unwrap();
        assert_eq!(out, IngestOutcome::Stale);
        assert_eq!(table.slots()[3].values(), &[7.0]);
    }

    #[test]
    fn ingest_rejects_out_of_range_worker() {
        let mut table = MasterTable::new(2, ParamVector::zeros(1));
        let mut stats = CommStats::default();
        let err = master_ingest(&mut table, msg(2, 0, vec![0.0]), &mut stats);
        assert!(matches!(err, Err(Error::Protocol(_))));
    }

    #[test]
    fn ingest_rejects_shape_mismatch_at_aggregate() {
        let mut table = MasterTable::new(2, ParamVector::zeros(2));
        let mut stats = CommStats::default();
        master_ingest(&mut table, msg(0, 0, vec![1.0]), &mut stats).unwrap();
        assert!(matches!(master_aggregate(&table), Err(Error::Protocol(_))));
    }

    #[test]
    fn basis_selection() {
        let local = ParamVector::from_vec(vec![1.0]);
        let bcast = MasterBroadcast { payload: ParamVector::from_vec(vec![2.0]), master_round: 4 };
        assert_eq!(worker_select_basis(Some(&bcast), &local).values(), &[2.0]);
        assert_eq!(worker_select_basis::<ParamVector>(None, &local).values(), &[1.0]);
    }

    #[test]
    fn slot_epochs_never_decrease() {
        use rand::Rng;
        let mut rng = crate::rng::RngState::new(11, 0).rng();
        let mut table = MasterTable::new(3, ParamVector::zeros(1));
        let mut stats = CommStats::default();
        let mut last: [Option<u64>; 3] = [None; 3];
        for _ in 0..500 {
            let w = rng.gen_range(0..3usize);
            let e = rng.gen_range(0..50u64);
            master_ingest(&mut table, msg(w, e, vec![e as f64]), &mut stats).unwrap();
            let seen = table.epoch_seen(w);
            assert!(seen >= last[w]);
            last[w] = seen;
        }
    }
}
