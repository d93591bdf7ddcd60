//! Seeded random streams and the gamma/Dirichlet/beta samplers built on them.
//!
//! Every sampler takes a [`RandomStream`] by value and draws from a fresh
//! ChaCha20 generator keyed by `(master_seed, stream_index)`, so a call is a
//! pure function of its arguments.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Open01};

use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    master_seed: u64,
    stream_index: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub const fn new(master_seed: u64, stream_index: u64) -> Self {
        RandomStream {
            master_seed,
            stream_index,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// A generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Child stream `k`. Children of one parent differ in their ChaCha stream
    /// and share a key derived from the parent, so they are independent of
    /// each other and of the parent.
    pub fn substream(&self, k: u64) -> RandomStream {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index));
        RandomStream::new(key, k)
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        Err(Error::InvalidInput("sample count must be positive".into()))
    } else {
        Ok(())
    }
}

/// `ln G` for `G ~ Gamma(shape, 1)`, accurate when `G` itself would underflow.
pub(crate) fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape validated by caller");
        g.sample(rng).ln()
    } else {
        // G(a) = G(a + 1) · U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape validated by caller");
        let u: f64 = Open01.sample(rng);
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// Normalizes log-weights onto the simplex in place.
pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - top).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// `count` independent Gamma draws, shape–scale convention (mean `shape·scale`).
pub fn sample_gamma(shape: f64, scale: f64, count: usize, stream: RandomStream) -> Result<Vec<f64>> {
    require_positive("gamma shape", shape)?;
    require_positive("gamma scale", scale)?;
    check_count(count)?;
    let dist = Gamma::new(shape, scale).map_err(|e| Error::InvalidInput(alloc::format!("{e}")))?;
    let mut rng = stream.rng();
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}

/// `count` Dirichlet(alphas) vectors built by normalizing independent gamma
/// draws (in log space, so small shapes do not underflow).
pub fn sample_dirichlet(alphas: &[f64], count: usize, stream: RandomStream) -> Result<Vec<Vec<f64>>> {
    if alphas.len() < 2 {
        return Err(Error::InvalidInput("a Dirichlet needs at least two parameters".into()));
    }
    for &a in alphas {
        require_positive("Dirichlet parameter", a)?;
    }
    check_count(count)?;
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| {
            let mut draw: Vec<f64> = alphas.iter().map(|&a| log_gamma_variate(&mut rng, a)).collect();
            softmax_in_place(&mut draw);
            draw
        })
        .collect())
}

/// One Beta(a, b) draw as the pair `(x, 1 - x)`, each accurate near 0.
pub(crate) fn beta_pair<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> (f64, f64) {
    let la = log_gamma_variate(rng, a);
    let lb = log_gamma_variate(rng, b);
    let d = la - lb;
    // x = 1/(1 + e^{-d}), 1 - x = 1/(1 + e^{d})
    (1.0 / (1.0 + (-d).exp()), 1.0 / (1.0 + d.exp()))
}

pub fn sample_beta(a: f64, b: f64, count: usize, stream: RandomStream) -> Result<Vec<f64>> {
    require_positive("beta shape a", a)?;
    require_positive("beta shape b", b)?;
    check_count(count)?;
    let mut rng = stream.rng();
    Ok((0..count).map(|_| beta_pair(&mut rng, a, b).0).collect())
}
