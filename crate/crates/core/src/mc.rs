//! Deterministic random substreams and Monte Carlo accumulators.
//!
//! Every parallel Monte Carlo loop splits its samples into fixed-size chunks.
//! Chunk `i` draws from ChaCha stream `i` of a key derived from the run seed,
//! and chunk statistics are merged in chunk order. Results therefore depend
//! on the seed alone, not on how many worker threads execute the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per substream chunk.
pub const CHUNK: usize = 4096;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seed plus a derivation path; hands out independent ChaCha streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Substreams {
    seed: u64,
    domain: u64,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self { seed, domain: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An unrelated family of streams for a named sub-task.
    pub fn derive(&self, label: &str) -> Self {
        // FNV-1a over the label, then mixed with the current domain.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.derive_index(h)
    }

    /// An unrelated family of streams for the `index`-th sub-task.
    pub fn derive_index(&self, index: u64) -> Self {
        let mut state = self.domain ^ index.rotate_left(17);
        let domain = splitmix64(&mut state) ^ splitmix64(&mut state).rotate_left(32);
        Self {
            seed: self.seed,
            domain,
        }
    }

    /// The `id`-th stream.
    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            let word = splitmix64(&mut state) ^ if i % 2 == 0 { self.domain } else { 0 };
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(id);
        rng
    }
}

/// Running mean and centered second moment (Welford / Chan).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl McEstimate {
    /// `scale · mean` with the matching standard error.
    pub fn from_stats(stats: &RunningStats, scale: f64, seed: u64) -> Self {
        Self {
            value: scale * stats.mean,
            std_error: scale.abs() * stats.std_error(),
            samples: stats.count,
            seed,
        }
    }

    /// |a − b| in units of the combined standard error; 0 when both are exact
    /// and equal, infinite when exact and different.
    pub fn discrepancy(&self, other: &McEstimate) -> f64 {
        let diff = (self.value - other.value).abs();
        let se = self.std_error.hypot(other.std_error);
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn agrees_with(&self, other: &McEstimate, sigmas: f64) -> bool {
        self.discrepancy(other) <= sigmas
    }
}

pub(crate) fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        Err(Error::TooFewSamples(samples))
    } else {
        Ok(())
    }
}

/// Runs `draw` `samples` times across deterministic chunked substreams and
/// merges the statistics in chunk order.
pub fn chunked_stats<F>(samples: usize, streams: &Substreams, draw: F) -> RunningStats
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<RunningStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams.stream(c as u64);
            let len = CHUNK.min(samples - c * CHUNK);
            let mut stats = RunningStats::default();
            for _ in 0..len {
                stats.push(draw(&mut rng));
            }
            stats
        })
        .collect();
    partial.iter().fold(RunningStats::default(), |mut acc, s| {
        acc.merge(s);
        acc
    })
}

/// Generates `count` items across deterministic chunked substreams, in order.
pub fn chunked_draws<T, F>(count: usize, streams: &Substreams, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    let nested: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams.stream(c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    nested.into_iter().flatten().collect()
}
