//! Proportional prioritized replay over a fixed-capacity ring.

use rand::Rng;

/// Binary sum tree over `capacity` leaves.
#[derive(Debug, Clone)]
struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> SumTree {
        SumTree {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.capacity + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut n = self.capacity + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass` (clamped to a valid leaf).
    fn find(&self, mut mass: f64) -> usize {
        let mut n = 1;
        while n < self.capacity {
            let left = self.nodes[2 * n];
            if mass < left || self.nodes[2 * n + 1] <= 0.0 {
                n *= 2;
            } else {
                mass -= left;
                n = 2 * n + 1;
            }
        }
        n - self.capacity
    }
}

/// A drawn item: its slot, sampling probability and normalized importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub slot: usize,
    pub probability: f64,
    pub weight: f64,
}

/// Items are drawn with probability `p_i^α / Σ p^α`; the oldest item is
/// evicted when a push would exceed capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<Option<T>>,
    tree: SumTree,
    alpha: f64,
    eps: f64,
    next: usize,
    len: usize,
    max_priority: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayBufferError {
    #[error("replay capacity must be positive")]
    ZeroCapacity,
    #[error("priority exponent must be finite and non-negative, got {0}")]
    BadAlpha(f64),
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, alpha: f64, eps: f64) -> Result<ReplayBuffer<T>, ReplayBufferError> {
        if capacity == 0 {
            return Err(ReplayBufferError::ZeroCapacity);
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(ReplayBufferError::BadAlpha(alpha));
        }
        let cap = capacity.next_power_of_two();
        Ok(ReplayBuffer {
            items: (0..capacity).map(|_| None).collect(),
            tree: SumTree::new(cap),
            alpha,
            eps,
            next: 0,
            len: 0,
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.items.len()
    }

    pub fn get(&self, slot: usize) -> Option<&T> {
        self.items.get(slot).and_then(|x| x.as_ref())
    }

    /// Raw priority of a slot (before the exponent).
    pub fn priority(&self, slot: usize) -> f64 {
        self.tree.get(slot).powf(1.0 / self.alpha.max(f64::MIN_POSITIVE))
    }

    /// Probability that one draw returns `slot`.
    pub fn probability(&self, slot: usize) -> f64 {
        self.tree.get(slot) / self.tree.total()
    }

    /// Inserts with the largest priority seen so far; returns the slot.
    pub fn push(&mut self, item: T) -> usize {
        let slot = self.next;
        self.items[slot] = Some(item);
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.items.len();
        self.len = (self.len + 1).min(self.items.len());
        slot
    }

    /// Sets the priority of `slot` to `|td| + eps`.
    pub fn update_priority(&mut self, slot: usize, abs_td: f64) {
        if self.items[slot].is_none() {
            return;
        }
        let p = if abs_td.is_finite() { abs_td.abs() + self.eps } else { self.max_priority };
        self.max_priority = self.max_priority.max(p);
        self.tree.set(slot, p.powf(self.alpha));
    }

    fn draw_at(&self, mass: f64, beta: f64) -> Draw {
        let slot = self.tree.find(mass).min(self.items.len() - 1);
        let probability = self.probability(slot);
        Draw {
            slot,
            probability,
            weight: (self.len as f64 * probability).powf(-beta),
        }
    }

    /// Draws `k` slots with stratified sampling: the total mass is cut into
    /// `k` equal segments and one point is drawn uniformly in each. Weights are
    /// `(N·P(i))^-β` divided by the batch maximum.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, beta: f64, rng: &mut R) -> Vec<Draw> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        let total = self.tree.total();
        let seg = total / k as f64;
        let mut draws: Vec<Draw> = (0..k)
            .map(|i| self.draw_at((i as f64 + rng.gen::<f64>()) * seg, beta))
            .collect();
        normalize(&mut draws);
        draws
    }

    /// Draws `k` independent slots.
    pub fn sample_iid<R: Rng + ?Sized>(&self, k: usize, beta: f64, rng: &mut R) -> Vec<Draw> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        let total = self.tree.total();
        let mut draws: Vec<Draw> = (0..k).map(|_| self.draw_at(rng.gen::<f64>() * total, beta)).collect();
        normalize(&mut draws);
        draws
    }
}

fn normalize(draws: &mut [Draw]) {
    let max = draws.iter().map(|d| d.weight).fold(0.0, f64::max);
    if max > 0.0 {
        for d in draws {
            d.weight /= max;
        }
    }
}
