//! Radio links: range-based contact detection and bandwidth-limited,
//! interruptible message transfer.

use crate::routing::{MessageId, NodeId};

/// A radio interface class shared by two nodes lets them connect.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkProfile {
    pub name: String,
    pub range_m: f64,
    pub rate_bps: f64,
}

impl LinkProfile {
    pub fn new(name: &str, range_m: f64, rate_bps: f64) -> Self {
        assert!(range_m > 0.0 && rate_bps > 0.0);
        Self { name: name.to_string(), range_m, rate_bps }
    }
}

/// Seconds to push `size` bytes through `profile` uninterrupted.
pub fn transfer_time(size_bytes: u64, profile: &LinkProfile) -> f64 {
    debug_assert!(size_bytes > 0);
    8.0 * size_bytes as f64 / profile.rate_bps
}

/// Picks the connecting profile for a node pair: the highest-rate profile
/// carried by both sides whose range covers the pair's distance. `shared`
/// must be sorted by descending rate; ties broken by name at construction.
pub fn select_profile(shared: &[(usize, f64)], dist_sq: f64) -> Option<usize> {
    shared
        .iter()
        .find(|(_, range_sq)| dist_sq <= *range_sq)
        .map(|(idx, _)| *idx)
}

/// Indexes of the profiles two interface sets share, sorted by descending
/// rate (then name), each with its squared range.
pub fn shared_profiles(
    profiles: &[LinkProfile],
    a: &[usize],
    b: &[usize],
) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = a
        .iter()
        .filter(|i| b.contains(i))
        .map(|&i| (i, profiles[i].range_m * profiles[i].range_m))
        .collect();
    out.sort_by(|(i, _), (j, _)| {
        profiles[*j]
            .rate_bps
            .total_cmp(&profiles[*i].rate_bps)
            .then_with(|| profiles[*i].name.cmp(&profiles[*j].name))
    });
    out
}

/// One queued message copy moving across a link.
#[derive(Debug, Clone)]
pub struct TransferJob {
    pub message_id: MessageId,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub copies: u32,
    pub size_bits: f64,
    pub bits_remaining: f64,
    /// Creation time of the message, for queue ordering.
    pub created_at: f64,
}

/// An active contact between two nodes over one profile. The queue is kept
/// sorted by (message creation time, message id); only the head job drains.
#[derive(Debug, Clone)]
pub struct ContactLink {
    pub a: NodeId,
    pub b: NodeId,
    pub profile: usize,
    pub established_at: f64,
    pub queue: Vec<TransferJob>,
    /// Buffer versions of (a, b) at the last offer evaluation.
    pub evaluated_versions: (u64, u64),
    /// Forces a full-buffer offer evaluation on the next step.
    pub needs_full_eval: bool,
}

impl ContactLink {
    pub fn new(a: NodeId, b: NodeId, profile: usize, established_at: f64) -> Self {
        debug_assert!(a < b);
        Self {
            a,
            b,
            profile,
            established_at,
            queue: Vec::new(),
            evaluated_versions: (0, 0),
            needs_full_eval: true,
        }
    }

    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn has_queued(&self, id: MessageId) -> bool {
        self.queue.iter().any(|j| j.message_id == id)
    }

    /// Inserts preserving (created_at, id) order. A partially drained head is
    /// never preempted.
    pub fn enqueue(&mut self, job: TransferJob) {
        let key = |j: &TransferJob| (j.created_at.to_bits(), j.message_id);
        let start = match self.queue.first() {
            Some(head) if head.bits_remaining < head.size_bits => 1,
            _ => 0,
        };
        let mut at = self.queue.len();
        for i in start..self.queue.len() {
            if key(&job) < key(&self.queue[i]) {
                at = i;
                break;
            }
        }
        self.queue.insert(at, job);
    }

    /// Drains the head of the queue at the profile rate for `dt` seconds,
    /// returning every job that completed. Bits drained never exceed
    /// rate x dt.
    pub fn advance_transfers(&mut self, rate_bps: f64, dt: f64) -> Vec<TransferJob> {
        let mut budget = rate_bps * dt;
        let mut done = Vec::new();
        while let Some(head) = self.queue.first_mut() {
            if head.bits_remaining > budget {
                head.bits_remaining -= budget;
                break;
            }
            budget -= head.bits_remaining;
            let mut job = self.queue.remove(0);
            job.bits_remaining = 0.0;
            done.push(job);
        }
        done
    }

    /// Tears the link down: every queued and in-flight job is aborted.
    pub fn take_aborted(&mut self) -> Vec<TransferJob> {
        std::mem::take(&mut self.queue)
    }
}
