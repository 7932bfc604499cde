//! Reproducible Brownian increments.
//!
//! Every path is addressed by `(seed, stream_id)`. The pair is mixed through
//! a splitmix64 finalizer into independent ChaCha8 generators, one for the
//! increments and one for the auxiliary normals used by the exponential
//! integrator, so that a streamed path and a materialized [`NoisePath`] with
//! the same address are bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const TAG_INCREMENTS: u64 = 0;
const TAG_AUX: u64 = 1;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream `(seed, stream_id, tag)`.
pub fn mix(seed: u64, stream_id: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream_id) ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn substream(seed: u64, stream_id: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream_id, tag))
}

/// On-the-fly generator of the increments of one path.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    r: usize,
    sqrt_dt: f64,
    inc: ChaCha8Rng,
    aux: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64, r: usize, dt: f64) -> NoiseStream {
        NoiseStream {
            r,
            sqrt_dt: dt.sqrt(),
            inc: substream(seed, stream_id, TAG_INCREMENTS),
            aux: substream(seed, stream_id, TAG_AUX),
        }
    }

    /// Fills `dw` with `N(0, dt)` increments and `zeta` with standard normals.
    #[inline]
    pub fn next_into(&mut self, dw: &mut [f64], zeta: &mut [f64]) {
        for k in 0..self.r {
            let z: f64 = StandardNormal.sample(&mut self.inc);
            dw[k] = self.sqrt_dt * z;
            zeta[k] = StandardNormal.sample(&mut self.aux);
        }
    }
}

/// A materialized path of `steps` increments in `r` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub r: usize,
    pub seed: u64,
    pub stream_id: u64,
    /// row-major `steps x r`, variance `dt`
    pub increments: Vec<f64>,
    /// row-major `steps x r`, standard normal
    pub aux: Vec<f64>,
}

impl NoisePath {
    pub fn generate(seed: u64, stream_id: u64, steps: usize, r: usize, dt: f64) -> Result<NoisePath> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Precondition("noise step dt must be positive".into()));
        }
        let mut s = NoiseStream::new(seed, stream_id, r, dt);
        let mut increments = vec![0.0; steps * r];
        let mut aux = vec![0.0; steps * r];
        for n in 0..steps {
            s.next_into(&mut increments[n * r..(n + 1) * r], &mut aux[n * r..(n + 1) * r]);
        }
        Ok(NoisePath {
            dt,
            r,
            seed,
            stream_id,
            increments,
            aux,
        })
    }

    /// A path with all increments zero.
    pub fn zero(steps: usize, r: usize, dt: f64) -> NoisePath {
        NoisePath {
            dt,
            r,
            seed: 0,
            stream_id: 0,
            increments: vec![0.0; steps * r],
            aux: vec![0.0; steps * r],
        }
    }

    pub fn steps(&self) -> usize {
        self.increments.len().checked_div(self.r).unwrap_or(0)
    }

    #[inline]
    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n * self.r..(n + 1) * self.r]
    }

    #[inline]
    pub fn aux_normal(&self, n: usize) -> &[f64] {
        &self.aux[n * self.r..(n + 1) * self.r]
    }

    /// Sums consecutive blocks of `factor` increments. The auxiliary normals
    /// of the coarse path are drawn afresh from a substream of this path's
    /// address.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps by factor {factor}",
                self.steps()
            )));
        }
        let r = self.r;
        let m = self.steps() / factor;
        let mut increments = vec![0.0; m * r];
        for n in 0..m {
            for j in 0..factor {
                for k in 0..r {
                    increments[n * r + k] += self.increments[(n * factor + j) * r + k];
                }
            }
        }
        let mut rng = substream(self.seed, self.stream_id, TAG_AUX + 1 + factor as u64);
        let aux = (0..m * r).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(NoisePath {
            dt: self.dt * factor as f64,
            r,
            seed: self.seed,
            stream_id: self.stream_id,
            increments,
            aux,
        })
    }

    /// Sample variance of all increments and its standard error under the
    /// Gaussian model.
    pub fn variance_estimate(&self) -> (f64, f64) {
        let n = self.increments.len() as f64;
        let mean = self.increments.iter().sum::<f64>() / n;
        let var = self.increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var, self.dt * (2.0 / (n - 1.0)).sqrt())
    }
}
