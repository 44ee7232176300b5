use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softmax, RngStream};

pub const DEFAULT_POOL_CAPACITY: usize = 200;

/// A textual reflection scored by the cumulative reward of the session it
/// was written about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionEntry {
    text: String,
    score: f64,
    source_user: usize,
    session_length: usize,
}

impl ReflectionEntry {
    /// Scores the reflection with the sum of the source session's rewards.
    pub fn from_session(text: impl Into<String>, rewards: &[f64], source_user: usize) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::domain("reflection source session is empty"));
        }
        let score = crate::simenv::session_metrics(rewards)?.r_cum();
        Ok(ReflectionEntry {
            text: text.into(),
            score,
            source_user,
            session_length: rewards.len(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn source_user(&self) -> usize {
        self.source_user
    }

    pub fn session_length(&self) -> usize {
        self.session_length
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Slot {
    seq: u64,
    entry: ReflectionEntry,
}

/// Capacity-bounded reflection memory. When full, the lowest-scoring entry
/// is evicted, the oldest one among equal scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionPool {
    capacity: usize,
    next_seq: u64,
    slots: Vec<Slot>,
}

impl Default for ReflectionPool {
    fn default() -> Self {
        ReflectionPool::new(DEFAULT_POOL_CAPACITY)
    }
}

impl ReflectionPool {
    pub fn new(capacity: usize) -> Self {
        ReflectionPool {
            capacity,
            next_seq: 0,
            slots: Vec::new(),
        }
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

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = &ReflectionEntry> {
        self.slots.iter().map(|s| &s.entry)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.entry.score).collect()
    }

    pub fn insert(&mut self, entry: ReflectionEntry) {
        self.slots.push(Slot {
            seq: self.next_seq,
            entry,
        });
        self.next_seq += 1;
        if self.slots.len() > self.capacity {
            let victim = self
                .slots
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.entry
                        .score
                        .total_cmp(&b.entry.score)
                        .then(a.seq.cmp(&b.seq))
                })
                .map(|(i, _)| i)
                .expect("pool is non-empty");
            self.slots.remove(victim);
        }
    }

    /// Per-entry probabilities `exp(alpha S_u) / sum_v exp(alpha S_v)`.
    pub fn sampling_distribution(&self, alpha: f64) -> Result<Vec<f64>> {
        softmax(&self.scores(), alpha)
    }

    /// One draw from the score-weighted distribution; `None` for an empty pool.
    pub fn draw_index(&self, alpha: f64, rng: &mut RngStream) -> Result<Option<usize>> {
        if self.is_empty() {
            return Ok(None);
        }
        let probs = self.sampling_distribution(alpha)?;
        Ok(Some(inverse_cdf(&probs, rng.uniform())))
    }

    /// `n_samples` draws with replacement, de-duplicated in draw order.
    pub fn sample(&self, alpha: f64, n_samples: usize, rng: &mut RngStream) -> Result<Vec<String>> {
        if self.is_empty() || n_samples == 0 {
            return Ok(Vec::new());
        }
        let probs = self.sampling_distribution(alpha)?;
        let mut picked: Vec<usize> = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let i = inverse_cdf(&probs, rng.uniform());
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        Ok(picked
            .into_iter()
            .map(|i| self.slots[i].entry.text.clone())
            .collect())
    }
}

fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Convenience wrapper matching the pool's sampling contract.
pub fn sample_reflections(pool: &ReflectionPool, alpha: f64, n_samples: usize, rng: &mut RngStream) -> Result<Vec<String>> {
    pool.sample(alpha, n_samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(score: f64, tag: usize) -> ReflectionEntry {
        ReflectionEntry::from_session(format!("r{tag}"), &[score], tag).unwrap()
    }

    /// Reference: keep the top `cap` entries by (score desc, recency desc).
    fn oracle(inserted: &[(f64, usize)], cap: usize) -> Vec<usize> {
        let mut v: Vec<(f64, usize, usize)> = inserted
            .iter()
            .enumerate()
            .map(|(seq, (s, tag))| (*s, seq, *tag))
            .collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        v.truncate(cap);
        let mut tags: Vec<usize> = v.into_iter().map(|x| x.2).collect();
        tags.sort_unstable();
        tags
    }

    fn tags(pool: &ReflectionPool) -> Vec<usize> {
        let mut t: Vec<usize> = pool.entries().map(|e| e.source_user()).collect();
        t.sort_unstable();
        t
    }

    #[test]
    fn insert_into_empty() {
        let mut pool = ReflectionPool::default();
        pool.insert(entry(1.0, 0));
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.capacity(), 200);
    }

    #[test]
    fn eviction_matches_oracle() {
        let mut pool = ReflectionPool::new(200);
        let mut inserted = Vec::new();
        for i in 0..200 {
            let s = (i % 37) as f64 + 1.0;
            pool.insert(entry(s, i));
            inserted.push((s, i));
        }
        // above the minimum: previous minimum leaves
        pool.insert(entry(50.0, 1000));
        inserted.push((50.0, 1000));
        assert_eq!(pool.len(), 200);
        assert_eq!(tags(&pool), oracle(&inserted, 200));
        // below the minimum: the new entry itself leaves
        pool.insert(entry(-5.0, 1001));
        inserted.push((-5.0, 1001));
        assert_eq!(pool.len(), 200);
        assert!(!tags(&pool).contains(&1001));
        assert_eq!(tags(&pool), oracle(&inserted, 200));
    }

    #[test]
    fn ties_evict_oldest() {
        let mut pool = ReflectionPool::new(2);
        pool.insert(entry(1.0, 0));
        pool.insert(entry(1.0, 1));
        pool.insert(entry(1.0, 2));
        assert_eq!(tags(&pool), vec![1, 2]);
    }

    #[test]
    fn score_is_session_sum() {
        let e = ReflectionEntry::from_session("x", &[0.5, 0.25, 1.0], 3).unwrap();
        assert_eq!(e.score(), 1.75);
        assert_eq!(e.session_length(), 3);
        assert!(ReflectionEntry::from_session("x", &[], 3).is_err());
    }

    #[test]
    fn empty_pool_samples_nothing() {
        let pool = ReflectionPool::default();
        let mut rng = RngStream::new(0, 0);
        assert!(sample_reflections(&pool, 1.0, 3, &mut rng).unwrap().is_empty());
        assert_eq!(pool.draw_index(1.0, &mut rng).unwrap(), None);
    }

    #[test]
    fn two_entry_frequency() {
        let mut pool = ReflectionPool::new(10);
        pool.insert(entry(1.0, 0));
        pool.insert(entry(2.0, 1));
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let first = (0..n)
            .filter(|_| pool.draw_index(1.0, &mut rng).unwrap() == Some(0))
            .count();
        let freq = first as f64 / n as f64;
        assert!((freq - 0.268_941_42).abs() < 0.01, "{freq}");
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let mut pool = ReflectionPool::new(10);
        for (i, s) in [3.0, -1.0, 10.0, 0.5].iter().enumerate() {
            pool.insert(entry(*s, i));
        }
        let mut rng = RngStream::new(6, 0);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[pool.draw_index(0.0, &mut rng).unwrap().unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn sample_dedupes() {
        let mut pool = ReflectionPool::new(10);
        pool.insert(entry(100.0, 0));
        pool.insert(entry(0.0, 1));
        let got = pool.sample(1.0, 3, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(got, vec!["r0".to_string()]);
    }
}
