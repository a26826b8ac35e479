//! Reproducible counter-based random-number substreams.
//!
//! Monte Carlo runs draw sample `i` from `substream(master_seed, i)`, a
//! ChaCha8 stream keyed by the master seed with the sample index as stream
//! counter. Distinct sample indices may be generated concurrently with no
//! shared state, and the output for a given `(seed, index)` pair is
//! bit-identical across runs and thread counts.
//!
//! Poisson variates are drawn by cumulative inversion for small means and by
//! PTRD-style transformed rejection (Hormann's constants) for large means; the
//! switch-over at mean 30 is part of the reproducibility contract.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// Mean threshold between cumulative inversion and PTRD rejection.
pub const POISSON_INVERSION_CUTOFF: f64 = 30.0;

/// Substream for one Monte Carlo sample: ChaCha8 keyed by `master_seed`,
/// stream counter = `index`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws `N ~ Poisson(mean)`.
///
/// `mean` must be finite and nonnegative; `mean = 0` always returns 0.
pub fn sample_poisson<R: RngCore>(mean: f64, rng: &mut R) -> u64 {
    assert!(mean.is_finite() && mean >= 0.0, "Poisson mean must be finite and >= 0");
    if mean == 0.0 {
        0
    } else if mean <= POISSON_INVERSION_CUTOFF {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrd(mean, rng)
    }
}

/// Sequential search along the cdf. For `mean <= 30` the start weight
/// `e^{-mean} >= e^{-30} ~ 9.4e-14` is comfortably above underflow.
fn poisson_inversion<R: RngCore>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if k > 2000 {
            // cdf exhausted by rounding; the remaining mass is < 1e-300
            break;
        }
    }
    k
}

/// Transformed rejection with squeeze, after Hormann's PTRD. Valid for
/// mean >= 10; used here for mean > 30. The acceptance test is the exact
/// log-pmf comparison, so the sampled law is exact.
fn poisson_ptrd<R: RngCore>(mean: f64, rng: &mut R) -> u64 {
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);

    loop {
        let mut v: f64 = rng.gen();
        if v <= 0.86 * v_r {
            // immediate acceptance region
            let u = v / v_r - 0.43;
            return ((2.0 * a / (0.5 - u.abs()) + b) * u + mean + 0.445).floor() as u64;
        }
        let u: f64 = if v >= v_r {
            rng.gen::<f64>() - 0.5
        } else {
            let mut u = v / v_r - 0.93;
            u = 0.5f64.copysign(u) - u;
            v = rng.gen::<f64>() * v_r;
            u
        };
        let us = 0.5 - u.abs();
        if us < 0.013 && v > us {
            continue;
        }
        let kf = ((2.0 * a / us + b) * u + mean + 0.445).floor();
        if kf < 0.0 {
            continue;
        }
        let k = kf as u64;
        v = v * inv_alpha / (a / (us * us) + b);
        if v.ln() <= kf * mean.ln() - mean - ln_gamma(kf + 1.0) {
            return k;
        }
    }
}

/// Inverts a cumulative-probability table: returns the smallest index `i`
/// with `u < cum[i]`. `cum` must be nondecreasing with last entry ~1.
pub fn sample_categorical<R: RngCore>(cum: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let idx = cum.partition_point(|&c| c <= u);
    idx.min(cum.len() - 1)
}

/// A fair sign, +1.0 or -1.0.
pub fn sample_sign<R: RngCore>(rng: &mut R) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}
