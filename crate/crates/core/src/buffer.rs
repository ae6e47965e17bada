//! Bounded staging buffer between scoring and inference.
//!
//! In [`BufferPolicy::Priority`] mode the buffer serves the highest-priority
//! frame first (oldest on ties) and, when full, evicts the lowest-priority
//! resident (oldest on ties) only if the arrival outranks it; otherwise the
//! arrival is rejected. A resident is therefore never displaced by a frame of
//! lower or equal priority.
//!
//! [`BufferPolicy::Fifo`] ignores priorities: it serves and evicts the
//! oldest arrival. It is the ablation baseline.
//!
//! Every operation takes one mutex and returns without waiting for space or
//! for entries.

use std::cmp::Ordering;
use std::collections::VecDeque;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::entropy::PriorityScore;
use crate::error::ConfigError;
use crate::scalar::Scalar;
use crate::video::Frame;

/// Priority and frame id of the entry a pop would serve.
pub type ServeKey<T> = (T, u64);

/// Default number of staged frames.
pub const DEFAULT_CAPACITY: usize = 16;

/// A frame with its score, as staged for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFrame<T> {
    pub frame_id: u64,
    pub capture_time_ns: u64,
    pub frame: Frame,
    pub score: PriorityScore<T>,
}

impl<T: Scalar> ScoredFrame<T> {
    pub fn new(frame: Frame, score: PriorityScore<T>) -> Self {
        Self {
            frame_id: frame.frame_id,
            capture_time_ns: frame.capture_time_ns,
            frame,
            score,
        }
    }

    pub fn priority(&self) -> T {
        self.score.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferPolicy {
    Priority,
    Fifo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PushOutcome {
    Accepted,
    /// Inserted after evicting the resident with this frame id.
    AcceptedEvicting(u64),
    /// Buffer full and the arrival did not outrank any resident.
    Rejected,
}

/// State observed under the same lock as a push.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushTrace<T> {
    pub len_before: usize,
    pub len_after: usize,
    /// `(priority, frame_id)` of the entry `pop_highest` would return.
    pub max_before: Option<(T, u64)>,
    pub max_after: Option<(T, u64)>,
    pub min_before: Option<(T, u64)>,
}

#[derive(Debug)]
pub struct FrameBuffer<T> {
    capacity: usize,
    policy: BufferPolicy,
    entries: Mutex<VecDeque<ScoredFrame<T>>>,
}

/// Serve order: higher priority first, then lower frame id.
fn serve_order<T: Scalar>(a: &ScoredFrame<T>, b: &ScoredFrame<T>) -> Ordering {
    a.priority()
        .partial_cmp(&b.priority())
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.frame_id.cmp(&a.frame_id))
}

/// Eviction order: lower priority first, then lower frame id.
fn evict_order<T: Scalar>(a: &ScoredFrame<T>, b: &ScoredFrame<T>) -> Ordering {
    a.priority()
        .partial_cmp(&b.priority())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.frame_id.cmp(&b.frame_id))
}

fn best_index<T: Scalar>(
    entries: &VecDeque<ScoredFrame<T>>,
    better: fn(&ScoredFrame<T>, &ScoredFrame<T>) -> Ordering,
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        match best {
            Some(b) if better(e, &entries[b]) != Ordering::Greater => {}
            _ => best = Some(i),
        }
    }
    best
}

impl<T: Scalar> FrameBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self, ConfigError> {
        Self::with_policy(capacity, BufferPolicy::Priority)
    }

    pub fn with_policy(capacity: usize, policy: BufferPolicy) -> Result<Self, ConfigError> {
        if capacity == 0 {
            return Err(ConfigError::new("buffer_capacity", "capacity must be >= 1"));
        }
        Ok(Self {
            capacity,
            policy,
            entries: Mutex::new(VecDeque::with_capacity(capacity)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> BufferPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.lock().is_empty()
    }

    pub fn push(&self, item: ScoredFrame<T>) -> PushOutcome {
        let mut entries = self.entries.lock();
        self.push_locked(&mut entries, item)
    }

    /// Like [`push`](Self::push), also reporting buffer state before and after.
    pub fn push_traced(&self, item: ScoredFrame<T>) -> (PushOutcome, PushTrace<T>) {
        let mut entries = self.entries.lock();
        let key = |e: &VecDeque<ScoredFrame<T>>, i: Option<usize>| {
            i.map(|i| (e[i].priority(), e[i].frame_id))
        };
        let len_before = entries.len();
        let max_before = key(&entries, self.serve_index(&entries));
        let min_before = key(&entries, best_index(&entries, |a, b| evict_order(b, a)));
        let outcome = self.push_locked(&mut entries, item);
        let trace = PushTrace {
            len_before,
            len_after: entries.len(),
            max_before,
            max_after: key(&entries, self.serve_index(&entries)),
            min_before,
        };
        (outcome, trace)
    }

    fn serve_index(&self, entries: &VecDeque<ScoredFrame<T>>) -> Option<usize> {
        match self.policy {
            BufferPolicy::Priority => best_index(entries, serve_order),
            BufferPolicy::Fifo => (!entries.is_empty()).then_some(0),
        }
    }

    fn push_locked(&self, entries: &mut VecDeque<ScoredFrame<T>>, item: ScoredFrame<T>) -> PushOutcome {
        if entries.len() < self.capacity {
            entries.push_back(item);
            return PushOutcome::Accepted;
        }
        match self.policy {
            BufferPolicy::Fifo => {
                let evicted = entries.pop_front().expect("full buffer has entries");
                entries.push_back(item);
                PushOutcome::AcceptedEvicting(evicted.frame_id)
            }
            BufferPolicy::Priority => {
                // Min under eviction order == max under its reverse.
                let victim = best_index(entries, |a, b| evict_order(b, a))
                    .expect("full buffer has entries");
                if item.priority() > entries[victim].priority() {
                    let evicted = entries.remove(victim).expect("index in range");
                    entries.push_back(item);
                    PushOutcome::AcceptedEvicting(evicted.frame_id)
                } else {
                    PushOutcome::Rejected
                }
            }
        }
    }

    /// Removes the next entry to serve, or `None` when empty.
    pub fn pop_highest(&self) -> Option<ScoredFrame<T>> {
        let mut entries = self.entries.lock();
        let i = self.serve_index(&entries)?;
        entries.remove(i)
    }

    /// Like [`pop_highest`](Self::pop_highest), also returning the key of the
    /// entry that would be served next, observed under the same lock.
    pub fn pop_highest_traced(&self) -> Option<(ScoredFrame<T>, Option<ServeKey<T>>)> {
        let mut entries = self.entries.lock();
        let i = self.serve_index(&entries)?;
        let item = entries.remove(i)?;
        let next = self
            .serve_index(&entries)
            .map(|j| (entries[j].priority(), entries[j].frame_id));
        Some((item, next))
    }

    /// Frame ids currently resident, in arrival order.
    pub fn resident_ids(&self) -> Vec<u64> {
        self.entries.lock().iter().map(|e| e.frame_id).collect()
    }
}
