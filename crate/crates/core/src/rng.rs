//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream derived from a
//! master seed and a `(purpose, a, b)` triple, so that work items (for
//! example the `(h, i)` ensemble members) can run in any order or in
//! parallel and still produce bit-identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Env = 1,
    Data = 2,
    Init = 3,
    Member = 4,
    Eval = 5,
    Law = 6,
    Misc = 7,
}

/// Independent stream for `(purpose, a, b)` under `master`.
///
/// `a` and `b` must each fit in 28 bits.
pub fn substream(master: u64, purpose: Purpose, a: u64, b: u64) -> StreamRng {
    debug_assert!(a < (1 << 28) && b < (1 << 28));
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 56) | (a << 28) | b);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Fill a vector with i.i.d. `N(0, sigma^2)` draws.
pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, sigma: f64) -> Vec<f64> {
    (0..len).map(|_| sigma * standard_normal(rng)).collect()
}

/// Uniform draw from the unit sphere in `R^dim` (Gaussian then normalize).
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v = normal_vec(rng, dim, 1.0);
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}
