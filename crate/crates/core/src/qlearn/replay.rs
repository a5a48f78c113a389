//! Proportional prioritized replay over a ring buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Binary tree of partial sums over `capacity` leaves.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut at = self.leaves + i;
        self.nodes[at] = value;
        while at > 1 {
            at /= 2;
            self.nodes[at] = self.nodes[2 * at] + self.nodes[2 * at + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`, for `mass` in `[0, total)`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut at = 1;
        while at < self.leaves {
            let left = self.nodes[2 * at];
            if mass < left || self.nodes[2 * at + 1] <= 0.0 {
                at *= 2;
            } else {
                mass -= left;
                at = 2 * at + 1;
            }
        }
        at - self.leaves
    }
}

/// Counters describing the buffer, stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMeta {
    pub capacity: usize,
    pub len: usize,
    pub inserted: u64,
    pub max_priority: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct PrioritizedReplay<T> {
    items: Vec<T>,
    tree: SumTree,
    capacity: usize,
    next: usize,
    inserted: u64,
    alpha: f64,
    max_priority: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplaySample {
    pub indices: Vec<usize>,
    /// `(N * P(i))^-beta`, divided by the batch maximum.
    pub weights: Vec<f64>,
}

/// Added to absolute TD errors so no transition becomes unsampleable.
pub const PRIORITY_EPSILON: f64 = 1e-6;

impl<T> PrioritizedReplay<T> {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            tree: SumTree::new(capacity),
            capacity,
            next: 0,
            inserted: 0,
            alpha,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// Stores `item` at the largest priority seen so far, evicting the oldest
    /// entry once full.
    pub fn push(&mut self, item: T) {
        let p = self.max_priority;
        self.push_with_priority(item, p);
    }

    pub fn push_with_priority(&mut self, item: T, priority: f64) {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.tree.set(slot, priority.powf(self.alpha));
        self.max_priority = self.max_priority.max(priority);
        self.next = (slot + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> ReplaySample {
        assert!(!self.is_empty(), "sampling from an empty replay buffer");
        let total = self.tree.total();
        let n = self.len() as f64;
        let indices: Vec<usize> = (0..batch)
            .map(|_| self.tree.find(rng.gen::<f64>() * total).min(self.len() - 1))
            .collect();
        let raw: Vec<f64> = indices.iter().map(|&i| (n * self.probability(i)).powf(-beta)).collect();
        let max = raw.iter().cloned().fold(f64::MIN, f64::max);
        ReplaySample {
            indices,
            weights: raw.iter().map(|w| w / max).collect(),
        }
    }

    /// Resets priorities to `|td| + 1e-6`.
    pub fn update_priorities(&mut self, indices: &[usize], td_abs: &[f64]) {
        for (&i, &td) in indices.iter().zip(td_abs) {
            let p = td.abs() + PRIORITY_EPSILON;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }

    pub fn meta(&self) -> ReplayMeta {
        ReplayMeta {
            capacity: self.capacity,
            len: self.len(),
            inserted: self.inserted,
            max_priority: self.max_priority,
            alpha: self.alpha,
        }
    }
}
