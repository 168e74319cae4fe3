use std::collections::VecDeque;

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<F> {
    pub state: [F; 3],
    pub action: usize,
    pub reward: F,
    pub next_state: [F; 3],
    pub done: bool,
}

/// Fixed-capacity experience memory; the oldest transition is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<F> {
    entries: VecDeque<Transition<F>>,
    capacity: usize,
}

impl<F: Copy> ReplayBuffer<F> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition<F>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<F>> {
        self.entries.iter()
    }

    /// `batch` distinct transitions drawn uniformly, or `None` when fewer
    /// than `batch` are stored.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Option<Vec<Transition<F>>> {
        if self.entries.len() < batch {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.entries.len(), batch)
                .into_iter()
                .map(|i| self.entries[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: usize) -> Transition<f32> {
        Transition {
            state: [i as f32, 0.0, 1.0],
            action: i % 5,
            reward: i as f32,
            next_state: [0.0; 3],
            done: false,
        }
    }

    #[test]
    fn keeps_most_recent_entries() {
        let mut naive: Vec<Transition<f32>> = Vec::new();
        let mut buf = ReplayBuffer::new(7);
        for i in 0..50 {
            buf.push(t(i));
            naive.push(t(i));
            let tail = &naive[naive.len().saturating_sub(7)..];
            assert_eq!(buf.iter().copied().collect::<Vec<_>>(), tail);
            assert!(buf.len() <= buf.capacity());
        }
    }

    #[test]
    fn sampling_requires_a_full_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(100);
        for i in 0..10 {
            buf.push(t(i));
        }
        assert!(buf.sample(11, &mut rng).is_none());
        let batch = buf.sample(10, &mut rng).unwrap();
        let mut seen: Vec<_> = batch.iter().map(|x| x.reward as usize).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
