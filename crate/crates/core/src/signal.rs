//! Periodic environmental signal.
//!
//! The signal carries no information about the fishery. It is a one-hot
//! vector of length `G` whose hot bit advances by one every step, starting
//! from a random per-episode offset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSource {
    cardinality: usize,
    episode_offset: usize,
}

impl SignalSource {
    pub fn new(cardinality: usize, episode_offset: usize) -> Result<Self> {
        if cardinality == 0 {
            return param("signal cardinality must be positive");
        }
        Ok(SignalSource {
            cardinality,
            episode_offset: episode_offset % cardinality,
        })
    }

    /// Source with a fresh uniformly drawn offset.
    pub fn random<R: Rng + ?Sized>(cardinality: usize, rng: &mut R) -> Result<Self> {
        let offset = new_episode_offset(rng, cardinality)?;
        SignalSource::new(cardinality, offset)
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn episode_offset(&self) -> usize {
        self.episode_offset
    }

    /// Index `i` with `(t - offset) mod G = i`, using the nonnegative modulus.
    pub fn hot_index(&self, t: usize) -> usize {
        let g = self.cardinality as i64;
        (t as i64 - self.episode_offset as i64).rem_euclid(g) as usize
    }

    pub fn one_hot(&self, t: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.cardinality];
        v[self.hot_index(t)] = 1.0;
        v
    }

    /// Writes the one-hot vector into `out`, which must have length `G`.
    pub fn write_one_hot(&self, t: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cardinality);
        out.fill(0.0);
        out[self.hot_index(t)] = 1.0;
    }
}

/// Uniform draw from `[0, G)`.
pub fn new_episode_offset<R: Rng + ?Sized>(rng: &mut R, cardinality: usize) -> Result<usize> {
    if cardinality == 0 {
        return param("signal cardinality must be positive");
    }
    Ok(rng.random_range(0..cardinality))
}
