//! Master-side bookkeeping of which chunk is where.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use thiserror::Error;

use crate::audio::ChunkId;

pub type WorkerId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrackerError {
    #[error("unknown worker {0}")]
    UnknownWorker(WorkerId),
    #[error("unknown chunk {0}")]
    UnknownChunk(ChunkId),
    #[error("chunk {0} registered twice")]
    DuplicateChunk(ChunkId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkState {
    Pending,
    Sent { worker: WorkerId, at: Instant },
    Done,
    Deleted,
    Failed,
}

impl ChunkState {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            ChunkState::Done | ChunkState::Deleted | ChunkState::Failed
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    state: ChunkState,
    /// Failed attempts so far.
    attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerCounts {
    pub name: String,
    pub granted: usize,
    pub done: usize,
    pub deleted: usize,
    pub live: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateCounts {
    pub pending: usize,
    pub sent: usize,
    pub done: usize,
    pub deleted: usize,
    pub failed: usize,
}

impl StateCounts {
    pub fn total(&self) -> usize {
        self.pending + self.sent + self.done + self.deleted + self.failed
    }
}

#[derive(Debug, Clone)]
pub struct WorkTracker {
    chunks: BTreeMap<ChunkId, Entry>,
    /// Pending chunks, granted smallest id first.
    pending: BTreeSet<ChunkId>,
    workers: Vec<WorkerCounts>,
    max_attempts: u32,
    requeue_events: usize,
}

impl WorkTracker {
    pub fn new(max_attempts: u32) -> Self {
        WorkTracker {
            chunks: BTreeMap::new(),
            pending: BTreeSet::new(),
            workers: Vec::new(),
            max_attempts: max_attempts.max(1),
            requeue_events: 0,
        }
    }

    pub fn add_worker(&mut self, name: impl Into<String>) -> WorkerId {
        self.workers.push(WorkerCounts {
            name: name.into(),
            live: true,
            ..WorkerCounts::default()
        });
        self.workers.len() - 1
    }

    pub fn add_chunk(&mut self, id: ChunkId) -> Result<(), TrackerError> {
        if self.chunks.contains_key(&id) {
            return Err(TrackerError::DuplicateChunk(id));
        }
        self.chunks.insert(
            id.clone(),
            Entry {
                state: ChunkState::Pending,
                attempts: 0,
            },
        );
        self.pending.insert(id);
        Ok(())
    }

    fn live_worker(&self, w: WorkerId) -> Result<(), TrackerError> {
        match self.workers.get(w) {
            Some(c) if c.live => Ok(()),
            _ => Err(TrackerError::UnknownWorker(w)),
        }
    }

    /// Hands up to `n` pending chunks to `worker`, smallest id first.
    pub fn grant(&mut self, worker: WorkerId, n: usize) -> Result<Vec<ChunkId>, TrackerError> {
        self.live_worker(worker)?;
        let now = Instant::now();
        let mut out = Vec::with_capacity(n.min(self.pending.len()));
        while out.len() < n {
            let Some(id) = self.pending.pop_first() else {
                break;
            };
            self.chunks
                .get_mut(&id)
                .expect("pending chunk is tracked")
                .state = ChunkState::Sent { worker, at: now };
            out.push(id);
        }
        self.workers[worker].granted += out.len();
        Ok(out)
    }

    /// Moves a non-terminal chunk to a terminal state. Returns false when
    /// the chunk was already terminal: the first result wins.
    fn resolve(
        &mut self,
        worker: WorkerId,
        id: &ChunkId,
        to: ChunkState,
    ) -> Result<bool, TrackerError> {
        if worker >= self.workers.len() {
            return Err(TrackerError::UnknownWorker(worker));
        }
        let e = self
            .chunks
            .get_mut(id)
            .ok_or_else(|| TrackerError::UnknownChunk(id.clone()))?;
        if e.state.is_terminal() {
            return Ok(false);
        }
        if e.state == ChunkState::Pending {
            self.pending.remove(id);
        }
        e.state = to;
        match to {
            ChunkState::Done => self.workers[worker].done += 1,
            ChunkState::Deleted => self.workers[worker].deleted += 1,
            _ => {}
        }
        Ok(true)
    }

    pub fn complete(&mut self, worker: WorkerId, id: &ChunkId) -> Result<bool, TrackerError> {
        self.resolve(worker, id, ChunkState::Done)
    }

    pub fn delete(&mut self, worker: WorkerId, id: &ChunkId) -> Result<bool, TrackerError> {
        self.resolve(worker, id, ChunkState::Deleted)
    }

    /// Counts a failed attempt and returns the chunk to Pending, or marks it
    /// Failed once it has used up its attempts. Returns the new state.
    fn bump(&mut self, id: &ChunkId) -> ChunkState {
        let max = self.max_attempts;
        let e = self.chunks.get_mut(id).expect("tracked chunk");
        e.attempts += 1;
        e.state = if e.attempts >= max {
            ChunkState::Failed
        } else {
            self.pending.insert(id.clone());
            ChunkState::Pending
        };
        self.requeue_events += 1;
        e.state
    }

    /// A worker reported that processing `id` failed.
    pub fn fail(&mut self, worker: WorkerId, id: &ChunkId) -> Result<ChunkState, TrackerError> {
        if worker >= self.workers.len() {
            return Err(TrackerError::UnknownWorker(worker));
        }
        let e = self
            .chunks
            .get(id)
            .ok_or_else(|| TrackerError::UnknownChunk(id.clone()))?;
        match e.state {
            ChunkState::Sent { worker: w, .. } if w == worker => Ok(self.bump(id)),
            s => Ok(s),
        }
    }

    /// Returns every chunk held by `worker` to Pending (or Failed) and
    /// retires the worker. Returns how many chunks it held.
    pub fn requeue_worker(&mut self, worker: WorkerId) -> Result<usize, TrackerError> {
        self.live_worker(worker)?;
        self.workers[worker].live = false;
        let held = self.held_by(worker);
        for id in &held {
            self.bump(id);
        }
        Ok(held.len())
    }

    pub fn held_by(&self, worker: WorkerId) -> Vec<ChunkId> {
        self.chunks
            .iter()
            .filter(|(_, e)| matches!(e.state, ChunkState::Sent { worker: w, .. } if w == worker))
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn state(&self, id: &ChunkId) -> Option<ChunkState> {
        self.chunks.get(id).map(|e| e.state)
    }

    pub fn attempts(&self, id: &ChunkId) -> Option<u32> {
        self.chunks.get(id).map(|e| e.attempts)
    }

    pub fn counts(&self) -> StateCounts {
        let mut c = StateCounts::default();
        for e in self.chunks.values() {
            match e.state {
                ChunkState::Pending => c.pending += 1,
                ChunkState::Sent { .. } => c.sent += 1,
                ChunkState::Done => c.done += 1,
                ChunkState::Deleted => c.deleted += 1,
                ChunkState::Failed => c.failed += 1,
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// True when every registered chunk is terminal.
    pub fn all_terminal(&self) -> bool {
        self.pending.is_empty() && self.chunks.values().all(|e| e.state.is_terminal())
    }

    pub fn failed(&self) -> Vec<ChunkId> {
        self.chunks
            .iter()
            .filter(|(_, e)| e.state == ChunkState::Failed)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn workers(&self) -> &[WorkerCounts] {
        &self.workers
    }

    pub fn requeue_events(&self) -> usize {
        self.requeue_events
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    /// Checks the structural invariants; used by tests and debug builds.
    pub fn check(&self) -> Result<(), String> {
        let c = self.counts();
        if c.total() != self.chunks.len() {
            return Err("state counts do not sum to the chunk total".into());
        }
        if c.pending != self.pending.len() {
            return Err(format!(
                "{} pending states but {} queued",
                c.pending,
                self.pending.len()
            ));
        }
        for (id, e) in &self.chunks {
            if e.attempts > self.max_attempts {
                return Err(format!("{id} has {} attempts", e.attempts));
            }
            match e.state {
                ChunkState::Pending if !self.pending.contains(id) => {
                    return Err(format!("{id} pending but not queued"))
                }
                ChunkState::Sent { worker, .. }
                    if !self.workers.get(worker).is_some_and(|w| w.live) =>
                {
                    return Err(format!("{id} sent to dead worker {worker}"))
                }
                ChunkState::Failed if e.attempts != self.max_attempts => {
                    return Err(format!("{id} failed after {} attempts", e.attempts))
                }
                _ => {}
            }
        }
        let resolved: usize = self.workers.iter().map(|w| w.done + w.deleted).sum();
        if resolved != c.done + c.deleted {
            return Err("per-worker counters disagree with chunk states".into());
        }
        Ok(())
    }
}
