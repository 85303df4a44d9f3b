//! Counter-based randomness and deterministic parallel reduction.
//!
//! Sample `i` of a run reads the ChaCha8 keystream with key `master_seed` and stream id `i`;
//! the position inside that stream is the reveal counter. Results therefore depend only on
//! `(master_seed, i)`, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per parallel block. Blocks are reduced in index order, so floating-point sums are
/// identical for every worker count.
pub const BLOCK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStream {
    pub master_seed: u64,
    pub start: u64,
    pub end: u64,
}

impl SampleStream {
    pub fn new(master_seed: u64, n_samples: u64) -> Self {
        SampleStream { master_seed, start: 0, end: n_samples }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        sample_rng(self.master_seed, index)
    }
}

pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub trait Mergeable: Send {
    fn merge(&mut self, other: Self);
}

/// Runs `body(acc, i)` for every sample index of the stream and reduces the per-block
/// accumulators in block order.
pub fn reduce_samples<A, F, M>(stream: &SampleStream, make: M, body: F) -> A
where
    A: Mergeable,
    M: Fn() -> A + Sync,
    F: Fn(&mut A, u64) + Sync,
{
    let blocks = stream.len().div_ceil(BLOCK);
    let parts: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = make();
            let lo = stream.start + b * BLOCK;
            let hi = (lo + BLOCK).min(stream.end);
            for i in lo..hi {
                body(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = make();
    for p in parts {
        total.merge(p);
    }
    total
}

/// Sum and sum of squares of an observable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    /// Adds `count` zero observations.
    pub fn push_zeros(&mut self, count: u64) {
        self.n += count;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

impl Mergeable for Moments {
    fn merge(&mut self, other: Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

impl<A: Mergeable> Mergeable for Vec<A> {
    fn merge(&mut self, other: Self) {
        if self.is_empty() {
            *self = other;
            return;
        }
        assert_eq!(self.len(), other.len(), "merging accumulators of different shapes");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}
