use crate::rng::Rng;
use rand::Rng as _;

/// One stored decision. `action` holds the action index for discrete agents
/// and the action vector otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Terminal state reached; truncation does not count.
    pub terminal: bool,
    /// Last decision of its episode, terminal or truncated.
    pub episode_end: bool,
}

/// Fixed-capacity ring with FIFO eviction and uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Item by age: `0` is the oldest still stored.
    pub fn get_chronological(&self, i: usize) -> Option<&T> {
        if i >= self.items.len() {
            return None;
        }
        let start = if self.items.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.items.get((start + i) % self.capacity)
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut Rng) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..batch)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }

    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Vec<&T> {
        self.sample_indices(batch, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

impl ReplayBuffer<Transition> {
    /// Up to `window` chronologically consecutive transitions starting at a
    /// uniformly drawn one, stopping after an episode end or the newest item.
    pub fn sample_sequence(&self, window: usize, rng: &mut Rng) -> Vec<&Transition> {
        let len = self.items.len();
        let start = rng.random_range(0..len);
        let mut out = Vec::with_capacity(window);
        for i in start..(start + window).min(len) {
            let t = self.get_chronological(i).expect("in range");
            out.push(t);
            if t.episode_end {
                break;
            }
        }
        out
    }
}
