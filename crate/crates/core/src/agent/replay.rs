use rand::Rng;

use super::{AgentError, Transition};

/// Fixed-capacity ring of transitions; the oldest is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    inserted: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, AgentError> {
        if capacity == 0 {
            return Err(AgentError::BadConfig("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1024)),
            inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes ever made.
    pub fn inserted(&self) -> usize {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.inserted % self.capacity] = t;
        }
        self.inserted += 1;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.inserted % self.capacity
        };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `size` draws uniformly with replacement.
    pub fn sample<R: Rng>(&self, size: usize, rng: &mut R) -> Result<Vec<Transition>, AgentError> {
        if self.items.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        if size == 0 {
            return Err(AgentError::EmptyBatch);
        }
        Ok((0..size)
            .map(|_| self.items[rng.gen_range(0..self.items.len())].clone())
            .collect())
    }
}
