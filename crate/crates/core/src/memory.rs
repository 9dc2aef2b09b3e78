//! Bounded episodic memory with reservoir and entropy-balanced updates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Labeled;
use crate::scalar::Scalar;
use crate::stream::Example;

pub const SNAPSHOT_MAGIC: &[u8; 6] = b"LRMEM1";

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySlot<S> {
    pub features: Vec<S>,
    pub label: usize,
    pub task_id: usize,
    /// Most recent interference score; 0 until a scoring pass sees the slot.
    pub score: S,
}

impl<S> MemorySlot<S> {
    pub fn labeled(&self) -> Labeled<'_, S> {
        Labeled::new(&self.features, self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    /// Replace a uniformly random slot on acceptance.
    Reservoir,
    /// Replace the lowest-scored slot of the most populated class on acceptance.
    EntropyBalanced,
}

/// What a single `update` did to the buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome<S> {
    Appended { slot: usize },
    Replaced { slot: usize, evicted_label: usize, evicted_score: S },
    Rejected,
}

#[derive(Debug, Clone)]
pub struct MemoryBuffer<S> {
    capacity: usize,
    slots: Vec<MemorySlot<S>>,
    seen: u64,
    policy: UpdatePolicy,
    rng: ChaCha8Rng,
}

impl<S: Scalar> MemoryBuffer<S> {
    pub fn new(capacity: usize, policy: UpdatePolicy, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("memory capacity must be positive"));
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            seen: 0,
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() >= self.capacity
    }

    /// Number of `update` calls so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn policy(&self) -> UpdatePolicy {
        self.policy
    }

    pub fn slots(&self) -> &[MemorySlot<S>] {
        &self.slots
    }

    pub fn slot(&self, i: usize) -> &MemorySlot<S> {
        &self.slots[i]
    }

    pub fn scores(&self) -> Vec<S> {
        self.slots.iter().map(|s| s.score).collect()
    }

    /// Offers one example to the buffer.
    ///
    /// Until the buffer is full the example is appended. Afterwards an integer
    /// is drawn uniformly from `0..=N` (N = examples seen before this one) and
    /// the example is kept when the draw is `<= M`.
    pub fn update(&mut self, example: &Example<S>) -> UpdateOutcome<S> {
        self.update_parts(&example.features, example.label, example.task_id)
    }

    pub fn update_parts(&mut self, features: &[S], label: usize, task_id: usize) -> UpdateOutcome<S> {
        let n = self.seen;
        self.seen += 1;
        let slot = MemorySlot {
            features: features.to_vec(),
            label,
            task_id,
            score: S::zero(),
        };
        if self.slots.len() < self.capacity {
            self.slots.push(slot);
            return UpdateOutcome::Appended {
                slot: self.slots.len() - 1,
            };
        }
        let draw = self.rng.gen_range(0..=n);
        if draw > self.capacity as u64 {
            return UpdateOutcome::Rejected;
        }
        let target = match self.policy {
            UpdatePolicy::Reservoir => self.rng.gen_range(0..self.slots.len()),
            UpdatePolicy::EntropyBalanced => self.balanced_victim(),
        };
        let old = std::mem::replace(&mut self.slots[target], slot);
        UpdateOutcome::Replaced {
            slot: target,
            evicted_label: old.label,
            evicted_score: old.score,
        }
    }

    /// Lowest-scored slot (first on ties) of the most populated class
    /// (smallest label on ties).
    pub fn balanced_victim(&self) -> usize {
        let counts = self.class_counts();
        let mut majority = None;
        for (&label, &n) in &counts {
            match majority {
                Some((_, best)) if n <= best => {}
                _ => majority = Some((label, n)),
            }
        }
        let (label, _) = majority.expect("balanced_victim needs a nonempty buffer");
        let mut victim: Option<usize> = None;
        for (i, s) in self.slots.iter().enumerate() {
            if s.label != label {
                continue;
            }
            match victim {
                Some(v) if s.score >= self.slots[v].score => {}
                _ => victim = Some(i),
            }
        }
        victim.expect("majority class has at least one slot")
    }

    pub fn set_scores(&mut self, scores: &[S]) -> Result<()> {
        if scores.len() != self.slots.len() {
            return Err(Error::invalid(format!(
                "{} scores for {} slots",
                scores.len(),
                self.slots.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite memory score".into()));
        }
        for (slot, &s) in self.slots.iter_mut().zip(scores) {
            slot.score = s;
        }
        Ok(())
    }

    /// `k` distinct slot indices when `k <= len`, otherwise `k` draws with replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        let n = self.slots.len();
        if n == 0 {
            return Err(Error::EmptyBuffer);
        }
        if k <= n {
            Ok(index::sample(rng, n, k).into_vec())
        } else {
            Ok((0..k).map(|_| rng.gen_range(0..n)).collect())
        }
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.slots {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn task_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.slots {
            *counts.entry(s.task_id).or_insert(0) += 1;
        }
        counts
    }

    /// Snapshot layout (little-endian): `LRMEM1`, policy u8, capacity u64,
    /// seen u64, slot count u64, feature width u64, then per slot
    /// label u32, task u32, score f64, features f64 each.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let dim = self.slots.first().map_or(0, |s| s.features.len());
        let mut buf = Vec::new();
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.push(match self.policy {
            UpdatePolicy::Reservoir => 0,
            UpdatePolicy::EntropyBalanced => 1,
        });
        for v in [self.capacity as u64, self.seen, self.slots.len() as u64, dim as u64] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for s in &self.slots {
            buf.extend_from_slice(&(s.label as u32).to_le_bytes());
            buf.extend_from_slice(&(s.task_id as u32).to_le_bytes());
            buf.extend_from_slice(&s.score.as_f64().to_le_bytes());
            for f in &s.features {
                buf.extend_from_slice(&f.as_f64().to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Restores slots, counters and policy. The sampling rng restarts from `seed`.
    pub fn read_snapshot(path: &Path, seed: u64) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let fmt = |offset: usize, message: &str| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        };
        if bytes.len() < 39 {
            return Err(fmt(bytes.len(), "truncated header"));
        }
        if &bytes[..6] != SNAPSHOT_MAGIC {
            return Err(fmt(0, "expected magic LRMEM1"));
        }
        let policy = match bytes[6] {
            0 => UpdatePolicy::Reservoir,
            1 => UpdatePolicy::EntropyBalanced,
            _ => return Err(fmt(6, "unknown policy tag")),
        };
        let word = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (capacity, seen, count, dim) = (word(7) as usize, word(15), word(23) as usize, word(31) as usize);
        let record = 16 + dim * 8;
        if bytes.len() != 39 + count * record {
            return Err(fmt(bytes.len(), "slot payload length mismatch"));
        }
        let mut buffer = MemoryBuffer::new(capacity, policy, seed)?;
        buffer.seen = seen;
        for i in 0..count {
            let o = 39 + i * record;
            let f64_at = |p: usize| f64::from_le_bytes(bytes[p..p + 8].try_into().unwrap());
            buffer.slots.push(MemorySlot {
                label: u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize,
                task_id: u32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap()) as usize,
                score: S::of(f64_at(o + 8)),
                features: (0..dim).map(|d| S::of(f64_at(o + 16 + d * 8))).collect(),
            });
        }
        if buffer.slots.len() > capacity {
            return Err(fmt(31, "more slots than capacity"));
        }
        Ok(buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn push(buf: &mut MemoryBuffer<f64>, label: usize) -> UpdateOutcome<f64> {
        buf.update_parts(&[label as f64], label, 1)
    }

    #[test]
    fn appends_until_full() {
        let mut b = MemoryBuffer::new(4, UpdatePolicy::EntropyBalanced, 1).unwrap();
        push(&mut b, 0);
        push(&mut b, 1);
        assert_eq!(push(&mut b, 2), UpdateOutcome::Appended { slot: 2 });
        assert_eq!(b.len(), 3);
        assert_eq!(b.seen(), 3);
    }

    #[test]
    fn balanced_eviction_targets_min_score_of_majority() {
        let mut b = MemoryBuffer::new(4, UpdatePolicy::EntropyBalanced, 1).unwrap();
        for l in [0, 1, 0, 0] {
            push(&mut b, l);
        }
        b.set_scores(&[0.9, 5.0, 0.1, 0.5]).unwrap();
        assert_eq!(b.class_counts(), BTreeMap::from([(0, 3), (1, 1)]));
        assert_eq!(b.balanced_victim(), 2);
        // With N = M = 4 the draw in 0..=4 is always <= 4: forced acceptance.
        match push(&mut b, 7) {
            UpdateOutcome::Replaced { slot, evicted_label, evicted_score } => {
                assert_eq!((slot, evicted_label, evicted_score), (2, 0, 0.1));
            }
            other => panic!("expected replacement, got {other:?}"),
        }
        assert_eq!(b.slot(2).label, 7);
        assert_eq!(b.slot(2).score, 0.0);
    }

    #[test]
    fn ties_break_on_smallest_label_then_index() {
        let mut b = MemoryBuffer::new(4, UpdatePolicy::EntropyBalanced, 1).unwrap();
        for l in [3, 1, 3, 1] {
            push(&mut b, l);
        }
        b.set_scores(&[0.0, 0.2, 0.0, 0.2]).unwrap();
        assert_eq!(b.balanced_victim(), 1);
    }

    #[test]
    fn rejection_only_advances_counter() {
        let mut b = MemoryBuffer::new(2, UpdatePolicy::Reservoir, 3).unwrap();
        push(&mut b, 0);
        push(&mut b, 1);
        let before = b.slots().to_vec();
        let mut rejected = false;
        for i in 0..200 {
            let seen = b.seen();
            let snapshot = b.slots().to_vec();
            if push(&mut b, 2 + i) == UpdateOutcome::Rejected {
                assert_eq!(b.slots(), &snapshot[..]);
                assert_eq!(b.seen(), seen + 1);
                rejected = true;
            }
        }
        assert!(rejected);
        assert_ne!(b.slots(), &before[..]);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn set_scores_checks_length() {
        let mut b = MemoryBuffer::new(3, UpdatePolicy::Reservoir, 1).unwrap();
        push(&mut b, 0);
        push(&mut b, 1);
        assert!(b.set_scores(&[1.0]).is_err());
        b.set_scores(&[0.0, 0.0]).unwrap();
        assert!(b.scores().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sample_uniform_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty = MemoryBuffer::<f64>::new(3, UpdatePolicy::Reservoir, 1).unwrap();
        assert!(matches!(empty.sample_uniform(1, &mut rng), Err(Error::EmptyBuffer)));
        let mut b = MemoryBuffer::new(10, UpdatePolicy::Reservoir, 1).unwrap();
        for l in 0..10 {
            push(&mut b, l);
        }
        let mut all = b.sample_uniform(10, &mut rng).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(b.sample_uniform(25, &mut rng).unwrap().len(), 25);
    }

    #[test]
    fn sample_uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut b = MemoryBuffer::new(10, UpdatePolicy::Reservoir, 1).unwrap();
        for l in 0..10 {
            push(&mut b, l);
        }
        let draws = 100_000;
        let mut freq = [0usize; 10];
        for _ in 0..draws {
            freq[b.sample_uniform(1, &mut rng).unwrap()[0]] += 1;
        }
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for f in freq {
            assert!((f as f64 - 0.1 * draws as f64).abs() < 3.0 * sigma, "{freq:?}");
        }
    }

    #[test]
    fn class_counts_cases() {
        let mut b = MemoryBuffer::new(5, UpdatePolicy::Reservoir, 1).unwrap();
        assert!(b.class_counts().is_empty());
        for l in [1, 1, 2] {
            push(&mut b, l);
        }
        assert_eq!(b.class_counts(), BTreeMap::from([(1, 2), (2, 1)]));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.bin");
        let mut b = MemoryBuffer::new(3, UpdatePolicy::EntropyBalanced, 1).unwrap();
        for l in 0..5 {
            b.update_parts(&[l as f64, 0.5], l, l / 2 + 1);
        }
        let n = b.len();
        b.set_scores(&vec![0.25; n]).unwrap();
        b.write_snapshot(&path).unwrap();
        let r = MemoryBuffer::<f64>::read_snapshot(&path, 1).unwrap();
        assert_eq!(r.slots(), b.slots());
        assert_eq!((r.capacity(), r.seen(), r.policy()), (3, 5, UpdatePolicy::EntropyBalanced));

        std::fs::write(&path, b"LRMEM2garbage-garbage-garbage-garbage-xx").unwrap();
        assert!(matches!(
            MemoryBuffer::<f64>::read_snapshot(&path, 1),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
