//! Random phase points for sampled checks and estimates.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::delay_system::{InputHistory, Vector};
use crate::error::Result;

/// Uniform sample from the closed ball of radius `radius` in `Rⁿ`.
pub fn point_in_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vector {
    let dir = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let norm = dir.norm();
    if norm == 0.0 {
        return Vector::zeros(n);
    }
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    dir * (r / norm)
}

/// Smooth random history: a few low-frequency sinusoids per input channel,
/// rescaled to L² norm `norm`.
pub fn smooth_history<R: Rng + ?Sized>(rng: &mut R, delay: f64, step: f64, input_dim: usize, norm: f64) -> Result<InputHistory> {
    let modes = 3;
    let coeffs: Vec<(f64, f64, f64)> = (0..input_dim * modes)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..3.0) / delay,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let raw = InputHistory::from_fn(delay, step, input_dim, |theta| {
        Vector::from_fn(input_dim, |i, _| {
            coeffs[i * modes..(i + 1) * modes]
                .iter()
                .map(|(a, w, p)| a * (w * theta + p).cos())
                .sum()
        })
    })?;
    let current = raw.l2_norm();
    Ok(if current > 0.0 { raw.scaled(norm / current) } else { raw })
}

/// A random `(x, φ)` with `‖x‖² + ‖φ‖² ≤ radius²`, split at a random ratio.
pub fn pair_in_ball<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    input_dim: usize,
    delay: f64,
    step: f64,
    radius: f64,
) -> Result<(Vector, InputHistory)> {
    let total = radius * rng.random::<f64>().sqrt();
    let split: f64 = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
    let x = point_in_ball(rng, n, 1.0);
    let x = if x.norm() > 0.0 { x.normalize() * (total * split.cos()) } else { x };
    let phi = smooth_history(rng, delay, step, input_dim, total * split.sin())?;
    Ok((x, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_respect_their_balls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert!(point_in_ball(&mut rng, 3, 2.0).norm() <= 2.0 + 1e-12);
            let (x, phi) = pair_in_ball(&mut rng, 2, 1, 1.0, 0.05, 0.7).unwrap();
            assert!(x.norm_squared() + phi.l2_norm_squared() <= 0.49 + 1e-12);
        }
    }
}
