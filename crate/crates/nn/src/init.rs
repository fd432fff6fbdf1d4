//! Seeded parameter initialization. All randomness in the workspace flows
//! through named ChaCha streams derived from one base seed.

use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent RNG stream from a base seed and a stream name.
/// FNV-1a over the name keeps the derivation stable across builds.
pub fn stream(base_seed: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(base_seed ^ h)
}

/// Glorot/Xavier uniform for a [fan_in, fan_out] weight matrix.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(&[fan_in, fan_out], -limit, limit, rng)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("uniform: shape/data length")
}

/// Standard normal draws via Box-Muller, so no extra distribution crate is
/// needed and streams stay reproducible.
pub fn normal(shape: &[usize], mean: f64, std: f64, rng: &mut impl Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| mean + std * standard_normal(rng)).collect();
    Tensor::from_vec(shape, data).expect("normal: shape/data length")
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; u1 is kept away from zero so ln stays finite.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_name_dependent() {
        let mut a = stream(42, "model1/init");
        let mut b = stream(42, "model1/init");
        let mut c = stream(42, "model2/init");
        let (x, y, z): (f64, f64, f64) = (a.random(), b.random(), c.random());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn normal_moments_roughly_match() {
        let mut rng = stream(7, "test/normal");
        let t = normal(&[10_000], 2.0, 3.0, &mut rng);
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64;
        assert!((mean - 2.0).abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 3.0).abs() < 0.1, "std {}", var.sqrt());
    }
}
