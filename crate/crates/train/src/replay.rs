//! Fixed-capacity ring of planner experience.

use std::sync::Arc;

use leader_core::{IntentionDistribution, Observation, ScenarioStream};
use leader_neural::EncodedState;

use crate::TrainError;

/// One planning step: the inputs the planner saw and the value it
/// estimated, plus the encodings and recurrent memories the networks need
/// to replay the step.
#[derive(Debug, Clone)]
pub struct ReplayEntry {
    pub b: IntentionDistribution,
    pub z: Observation,
    pub q: IntentionDistribution,
    pub value: f64,
    pub episode: u64,
    pub step: usize,
    pub encoded: EncodedState,
    /// `q` in slot-block layout.
    pub slot_q: Vec<f64>,
    /// Generator memory before this step.
    pub generator_memory: Vec<f64>,
    /// Critic memory before this step.
    pub critic_memory: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    entries: Vec<Arc<ReplayEntry>>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, TrainError> {
        if capacity == 0 {
            return Err(TrainError::Config("buffer capacity must be positive".into()));
        }
        Ok(Self {
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
        })
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

    /// Entries pushed over the buffer's lifetime.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, entry: ReplayEntry) {
        let entry = Arc::new(entry);
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.entries[slot] = entry;
        }
        self.inserted += 1;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Arc<ReplayEntry>> {
        let split = if self.entries.len() < self.capacity {
            0
        } else {
            (self.inserted % self.capacity as u64) as usize
        };
        self.entries[split..].iter().chain(&self.entries[..split])
    }

    /// `n` distinct entries chosen uniformly (partial Fisher-Yates).
    pub fn sample(&self, n: usize, stream: &mut ScenarioStream) -> Result<Vec<Arc<ReplayEntry>>, TrainError> {
        if n == 0 || self.entries.len() < n {
            return Err(TrainError::NotReady {
                have: self.entries.len(),
                need: n,
            });
        }
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        for i in 0..n {
            let j = i + (stream.next_u64() % (idx.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        Ok(idx[..n].iter().map(|&i| Arc::clone(&self.entries[i])).collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use leader_core::driving::{EgoState, Observation};
    use leader_core::geometry::{Polyline, Vec2};

    pub fn dummy(step: usize, value: f64) -> ReplayEntry {
        let path = Arc::new(Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)], 5.0).unwrap());
        let b = IntentionDistribution::uniform(&[2]).unwrap();
        ReplayEntry {
            b: b.clone(),
            z: Observation {
                ego: EgoState::on_path(path, 0.0, 1.0),
                exo: vec![],
            },
            q: b,
            value,
            episode: 0,
            step,
            encoded: EncodedState {
                features: vec![],
                slot_agents: vec![],
                counts: vec![2],
            },
            slot_q: vec![],
            generator_memory: vec![],
            critic_memory: vec![],
        }
    }

    #[test]
    fn eviction_drops_the_oldest() {
        let mut r = ReplayBuffer::new(3).unwrap();
        for i in 0..4 {
            r.push(dummy(i, 0.0));
        }
        assert_eq!(r.len(), 3);
        let steps: Vec<usize> = r.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![1, 2, 3]);
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let mut r = ReplayBuffer::new(8).unwrap();
        for i in 0..8 {
            r.push(dummy(i, 0.0));
        }
        let mut s = ScenarioStream::new(1);
        let mut steps: Vec<usize> = r.sample(8, &mut s).unwrap().iter().map(|e| e.step).collect();
        steps.sort_unstable();
        assert_eq!(steps, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn undersized_buffer_is_not_ready() {
        let mut r = ReplayBuffer::new(8).unwrap();
        r.push(dummy(0, 0.0));
        assert!(matches!(
            r.sample(2, &mut ScenarioStream::new(0)),
            Err(TrainError::NotReady { have: 1, need: 2 })
        ));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut r = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            r.push(dummy(i, 0.0));
        }
        let mut s = ScenarioStream::new(5);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[r.sample(1, &mut s).unwrap()[0].step] += 1;
        }
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 3.0 * sigma, "count {c}");
        }
    }

    proptest::proptest! {
        #[test]
        fn never_exceeds_capacity(cap in 1usize..20, pushes in 0usize..100) {
            let mut r = ReplayBuffer::new(cap).unwrap();
            for i in 0..pushes {
                r.push(dummy(i, 0.0));
                proptest::prop_assert!(r.len() <= cap);
            }
            let newest: Vec<usize> = r.iter().map(|e| e.step).collect();
            let expect: Vec<usize> = (pushes.saturating_sub(cap)..pushes).collect();
            proptest::prop_assert_eq!(newest, expect);
        }
    }
}
