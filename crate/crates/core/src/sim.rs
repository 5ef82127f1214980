//! Deterministic randomness and Monte-Carlo estimation shared by every
//! experiment.
//!
//! # Generator
//!
//! Streams are backed by ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! generator. A stream is the pair `(base_seed, stream_index)`: the base seed
//! is expanded into the 256-bit ChaCha key with `SeedableRng::seed_from_u64`
//! and the stream index selects one of the 2^64 independent ChaCha streams
//! under that key via `set_stream`. Opening any stream is O(1), so replication
//! `i` can be generated on any worker without touching replications `< i`.
//!
//! [`RngStream::split`] derives child streams: a child's base seed is the
//! SplitMix64 mix of the parent pair and its stream index is the child index.
//!
//! # Normal draws
//!
//! Standard normals come from `rand_distr::StandardNormal` (ziggurat method).
//!
//! The reproducibility golden tests pin this exact combination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The concrete generator handed out by [`RngStream::generator`].
pub type Generator = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> Generator {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Child stream `index` of this stream. Children of one parent share a key
    /// and differ in ChaCha stream; children of different parents differ in key.
    pub fn split(&self, index: u64) -> RngStream {
        let key = splitmix64(self.base_seed ^ splitmix64(self.stream_index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        RngStream::new(key, index)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` standard normal draws from the start of `stream`.
pub fn sample_std_normal(stream: RngStream, n: usize) -> Vec<f64> {
    let mut rng = stream.generator();
    std_normal_vec(&mut rng, n)
}

pub(crate) fn std_normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub(crate) fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Monte-Carlo estimate of an expectation.
///
/// `std_error` is the sample standard deviation (divisor `n - 1`) over
/// `sqrt(n_samples)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "a Monte-Carlo estimate needs at least 2 samples, got {n}"
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let ss = compensated_sum(samples.iter().map(|v| (v - mean) * (v - mean)));
        let var = ss / (n - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_samples: n,
        })
    }

    /// Sample standard deviation implied by the standard error.
    pub fn std_dev(&self) -> f64 {
        self.std_error * (self.n_samples as f64).sqrt()
    }

    /// Whether `value` lies within `k` standard errors (plus `slack`) of the mean.
    pub fn within(&self, value: f64, k: f64, slack: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error + slack
    }
}

/// Average `evaluator` over `n` draws produced by `sampler` from `stream`.
///
/// Draws are generated sequentially from a single generator, so the result
/// depends only on `(stream, n)`.
pub fn mc_estimate<T, S, E>(mut sampler: S, mut evaluator: E, n: usize, stream: RngStream) -> Result<McEstimate>
where
    S: FnMut(&mut Generator) -> T,
    E: FnMut(&T) -> f64,
{
    if n < 2 {
        return Err(Error::invalid(format!("mc_estimate needs n >= 2, got {n}")));
    }
    let mut rng = stream.generator();
    let mut values = Vec::with_capacity(n);
    for index in 0..n {
        let draw = sampler(&mut rng);
        let v = evaluator(&draw);
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        values.push(v);
    }
    McEstimate::from_samples(&values)
}

/// Run `job` once per replication on the rayon pool, each with its own child
/// stream of `stream`, and return results in replication order.
///
/// On failure the error of the lowest failing replication is returned, so the
/// outcome is independent of the worker count.
pub fn replicate<T, F>(stream: RngStream, reps: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, RngStream) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| job(i, stream.split(i)))
        .collect();
    results.into_iter().collect()
}

/// Draws per child stream in [`parallel_samples`].
pub const SAMPLE_CHUNK: usize = 1 << 15;

/// `n` values of `draw`, generated in fixed chunks of [`SAMPLE_CHUNK`] on the
/// rayon pool. Chunk `k` uses `stream.split(k)`, so the output depends only on
/// `(stream, n)`.
pub fn parallel_samples<T, F>(stream: RngStream, n: usize, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Generator) -> T + Sync,
{
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let blocks: Vec<Vec<T>> = (0..chunks as u64)
        .into_par_iter()
        .map(|k| {
            let len = SAMPLE_CHUNK.min(n - k as usize * SAMPLE_CHUNK);
            let mut rng = stream.split(k).generator();
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    blocks.into_iter().flatten().collect()
}
