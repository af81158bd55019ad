//! Complex Brownian increments.
//!
//! Convention: each increment is `dB = X + iY` with `X, Y` independent
//! `N(0, dt)`, so that `E[dB dB*] = 2 dt` and `E[dB dB] = 0`. Much of the
//! state-diffusion literature normalizes `dB dB* = dt` instead; everything in
//! this crate uses the factor-2 rule.
//!
//! Generation is counter based. A stream is keyed by `(seed, stream_id)`:
//! the ChaCha8 key is derived from `seed` via `seed_from_u64`, the ChaCha
//! stream number is `stream_id`, and block `k` of an `n`-channel stream starts
//! at word position `4 n k`. Each complex value consumes two `u64` draws
//! `(a, b)` turned into a Box–Muller pair:
//!
//! ```text
//! u1 = ((a >> 11) + 1) * 2^-53        in (0, 1]
//! u2 = (b >> 11) * 2^-53              in [0, 1)
//! r  = sqrt(-2 ln u1) * sqrt(dt)
//! dB = r cos(2π u2) + i r sin(2π u2)
//! ```
//!
//! using `libm` so that output bits do not depend on the platform's libm.

use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NoiseError {
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("refinement factor must be at least 1")]
    ZeroRefinement,
    #[error("increment source exhausted after {0} blocks")]
    Exhausted(u64),
    #[error("increment block has {found} channels, expected {expected}")]
    ChannelMismatch { expected: usize, found: usize },
}

/// One step's worth of increments, one complex value per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexIncrementBlock {
    pub dt: f64,
    pub values: Vec<C64>,
}

impl ComplexIncrementBlock {
    pub fn zeros(n: usize, dt: f64) -> Self {
        Self {
            dt,
            values: alloc::vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// Anything that yields successive increment blocks for one trajectory.
pub trait IncrementSource {
    fn next_block(&mut self, n: usize, dt: f64) -> Result<ComplexIncrementBlock, NoiseError>;
}

/// Counter-based stream of complex Gaussian increments.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            counter: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of blocks drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Repositions the stream at block `counter`.
    pub fn seek(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Draws the next block of `n` increments and advances the counter by one.
    pub fn sample_increments(
        &mut self,
        n: usize,
        dt: f64,
    ) -> Result<ComplexIncrementBlock, NoiseError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(NoiseError::NonPositiveStep(dt));
        }
        self.rng
            .set_word_pos(u128::from(self.counter) * 4 * n as u128);
        let sd = libm::sqrt(dt);
        let values = (0..n)
            .map(|_| {
                let a = self.rng.next_u64();
                let b = self.rng.next_u64();
                let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
                let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                let r = libm::sqrt(-2.0 * libm::log(u1)) * sd;
                let theta = 2.0 * core::f64::consts::PI * u2;
                C64::new(r * libm::cos(theta), r * libm::sin(theta))
            })
            .collect();
        self.counter += 1;
        Ok(ComplexIncrementBlock { dt, values })
    }
}

impl IncrementSource for NoiseStream {
    fn next_block(&mut self, n: usize, dt: f64) -> Result<ComplexIncrementBlock, NoiseError> {
        self.sample_increments(n, dt)
    }
}

/// The stream for trajectory `trajectory_id` of an ensemble seeded by `seed`.
///
/// Output depends only on `(seed, trajectory_id)`, never on ensemble size or
/// scheduling.
pub fn substream(seed: u64, trajectory_id: u64) -> NoiseStream {
    NoiseStream::new(seed, trajectory_id)
}

/// Coarse increments built by summing `factor` consecutive fine increments
/// of the inner source.
///
/// Driving runs at `dt` and `dt / 2` from the same fine stream couples the
/// two discretizations to one Brownian path, which is what strong-order
/// refinement studies compare.
#[derive(Debug, Clone)]
pub struct Coarsened<S> {
    inner: S,
    factor: usize,
}

impl<S: IncrementSource> Coarsened<S> {
    pub fn new(inner: S, factor: usize) -> Result<Self, NoiseError> {
        if factor == 0 {
            return Err(NoiseError::ZeroRefinement);
        }
        Ok(Self { inner, factor })
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: IncrementSource> IncrementSource for Coarsened<S> {
    fn next_block(&mut self, n: usize, dt: f64) -> Result<ComplexIncrementBlock, NoiseError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(NoiseError::NonPositiveStep(dt));
        }
        let fine_dt = dt / self.factor as f64;
        let mut acc = ComplexIncrementBlock::zeros(n, dt);
        for _ in 0..self.factor {
            let block = self.inner.next_block(n, fine_dt)?;
            for (a, b) in acc.values.iter_mut().zip(&block.values) {
                *a += b;
            }
        }
        Ok(acc)
    }
}

/// Replays a fixed list of blocks (e.g. read back from an increment dump).
#[derive(Debug, Clone)]
pub struct ReplaySource {
    blocks: Vec<Vec<C64>>,
    next: usize,
}

impl ReplaySource {
    pub fn new(blocks: Vec<Vec<C64>>) -> Self {
        Self { blocks, next: 0 }
    }
}

impl IncrementSource for ReplaySource {
    fn next_block(&mut self, n: usize, dt: f64) -> Result<ComplexIncrementBlock, NoiseError> {
        let values = self
            .blocks
            .get(self.next)
            .ok_or(NoiseError::Exhausted(self.next as u64))?
            .clone();
        if values.len() != n {
            return Err(NoiseError::ChannelMismatch {
                expected: n,
                found: values.len(),
            });
        }
        self.next += 1;
        Ok(ComplexIncrementBlock { dt, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_reproduces_bits() {
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(
                a.sample_increments(2, 1e-3).unwrap(),
                b.sample_increments(2, 1e-3).unwrap()
            );
        }
        assert_eq!(a.counter(), 100);
    }

    #[test]
    fn streams_differ() {
        let x = NoiseStream::new(7, 0).sample_increments(4, 1.0).unwrap();
        let y = NoiseStream::new(7, 1).sample_increments(4, 1.0).unwrap();
        let z = NoiseStream::new(8, 0).sample_increments(4, 1.0).unwrap();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn seek_gives_random_access() {
        let mut s = NoiseStream::new(1, 1);
        let blocks: Vec<_> = (0..10).map(|_| s.sample_increments(3, 0.1).unwrap()).collect();
        let mut t = NoiseStream::new(1, 1);
        t.seek(6);
        assert_eq!(t.sample_increments(3, 0.1).unwrap(), blocks[6]);
    }

    #[test]
    fn rejects_bad_step() {
        let mut s = NoiseStream::new(0, 0);
        assert_eq!(
            s.sample_increments(1, 0.0),
            Err(NoiseError::NonPositiveStep(0.0))
        );
        assert!(s.sample_increments(1, -1.0).is_err());
        assert!(s.sample_increments(1, f64::NAN).is_err());
        assert_eq!(s.counter(), 0);
    }

    #[test]
    fn coarsened_sums_fine_blocks() {
        let mut fine = NoiseStream::new(5, 2);
        let f1 = fine.sample_increments(2, 0.5).unwrap();
        let f2 = fine.sample_increments(2, 0.5).unwrap();
        let mut coarse = Coarsened::new(NoiseStream::new(5, 2), 2).unwrap();
        let c = coarse.next_block(2, 1.0).unwrap();
        assert_eq!(c.dt, 1.0);
        for k in 0..2 {
            assert_eq!(c.values[k], f1.values[k] + f2.values[k]);
        }
        assert!(Coarsened::new(NoiseStream::new(0, 0), 0).is_err());
    }

    #[test]
    fn replay_exhausts() {
        let mut r = ReplaySource::new(alloc::vec![alloc::vec![C64::new(1.0, 0.0)]]);
        assert_eq!(r.next_block(1, 0.1).unwrap().values[0], C64::new(1.0, 0.0));
        assert_eq!(r.next_block(1, 0.1), Err(NoiseError::Exhausted(1)));
    }
}
