use std::sync::Arc;

use rand::Rng;

use crate::types::Observation;

/// One environment step. `reward` is rewritten whenever the reward
/// function changes; the observations are kept so it can be recomputed.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub observation: Arc<Observation>,
    pub next_observation: Arc<Observation>,
    pub reward: f64,
    /// True only for genuine terminal states; time-limit truncation keeps bootstrapping.
    pub done: bool,
}

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
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

    pub fn store(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.head] = transition;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    /// Uniform sample with replacement; indices are raw storage slots.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..count).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    /// Rewrites every reward as `reward_fn(next_observation)`.
    pub fn relabel_all(&mut self, mut reward_fn: impl FnMut(&Observation) -> f64) -> usize {
        for t in &mut self.items {
            t.reward = reward_fn(&t.next_observation);
        }
        self.items.len()
    }

    /// Rewrites rewards from a precomputed slice in storage order.
    pub fn set_rewards(&mut self, rewards: &[f64]) {
        assert_eq!(rewards.len(), self.items.len());
        for (t, &r) in self.items.iter_mut().zip(rewards) {
            t.reward = r;
        }
    }

    /// Storage-order view used by relabeling.
    pub fn as_slice(&self) -> &[Transition] {
        &self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: f64) -> Transition {
        let o = Arc::new(Observation::state_vector(vec![tag], 0, 0).unwrap());
        let n = Arc::new(Observation::state_vector(vec![tag + 0.5], 1, 0).unwrap());
        Transition {
            state: vec![tag],
            action: vec![0.0],
            next_state: vec![tag + 0.5],
            observation: o,
            next_observation: n,
            reward: 0.0,
            done: false,
        }
    }

    #[test]
    fn single_item_sampling() {
        let mut buf = ReplayBuffer::new(4);
        buf.store(transition(1.0));
        let idx = buf.sample_indices(3, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(idx.iter().all(|&i| buf.get(i).unwrap().state == vec![1.0]));
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(2);
        let kept = transition(2.0);
        let obs = Arc::clone(&kept.next_observation);
        buf.store(transition(1.0));
        buf.store(kept);
        buf.store(transition(3.0));
        assert_eq!(buf.len(), 2);
        let states: Vec<f64> = buf.iter().map(|t| t.state[0]).collect();
        assert_eq!(states, vec![2.0, 3.0]);
        assert_eq!(obs.data(), &[2.5]);
        assert!(buf.iter().any(|t| Arc::ptr_eq(&t.next_observation, &obs)));
    }

    #[test]
    fn relabel_constant_and_idempotent() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..5 {
            buf.store(transition(i as f64));
        }
        assert_eq!(buf.relabel_all(|_| 0.25), 5);
        assert!(buf.iter().all(|t| t.reward == 0.25));
        buf.relabel_all(|o| o.data()[0]);
        let first: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        buf.relabel_all(|o| o.data()[0]);
        let second: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(first, second);
        assert_eq!(first, vec![0.5, 1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn sampling_is_uniform() {
        // chi-square over 10k draws from a 10-element buffer
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.store(transition(i as f64));
        }
        let mut counts = [0usize; 10];
        for i in buf.sample_indices(10_000, &mut ChaCha8Rng::seed_from_u64(8)) {
            counts[i] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
        // 99th percentile of chi-square with 9 degrees of freedom
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }
}
