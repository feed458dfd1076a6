//! `x' = sin x + b0 u(t) + b1 u(t − h) + ∫ b_int u(t + θ) dθ` with positive coefficients.

use std::sync::Arc;

use crate::delay_system::{DelaySystem, KernelKind, Matrix, PlantModel, Vector};
use crate::error::{Error, Result};

pub const DELAY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarPlant {
    pub b0: f64,
    pub b1: f64,
    pub bint: f64,
}

impl Default for ScalarPlant {
    fn default() -> Self {
        Self { b0: 1.0, b1: 0.5, bint: 0.5 }
    }
}

impl PlantModel for ScalarPlant {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &Vector) -> Vector {
        x.map(f64::sin)
    }
    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        Matrix::from_element(1, 1, x[0].cos())
    }
    fn b0(&self, _x: &Vector) -> Matrix {
        Matrix::from_element(1, 1, self.b0)
    }
    fn b1(&self, _x: &Vector) -> Matrix {
        Matrix::from_element(1, 1, self.b1)
    }
    fn bint(&self, _theta: f64, _x: &Vector) -> Matrix {
        Matrix::from_element(1, 1, self.bint)
    }
    fn kernel(&self) -> KernelKind {
        if self.bint == 0.0 {
            KernelKind::Absent
        } else {
            KernelKind::ThetaInvariant
        }
    }
}

impl ScalarPlant {
    /// Bounds on `B(y, φ)` from `β' = cos(ξ)β + b_int` with `cos ξ ∈ [−1, 1]`:
    /// `b1 + e^{−h}b0 + (1 − e^{−h})b_int ≤ B ≤ b1 + e^h b0 + (e^h − 1)b_int`.
    pub fn input_bounds(&self, h: f64) -> (f64, f64) {
        let (lo, hi) = ((-h).exp(), h.exp());
        (self.b1 + lo * self.b0 + (1.0 - lo) * self.bint, self.b1 + hi * self.b0 + (hi - 1.0) * self.bint)
    }
}

/// `R = ∞`, `M_f = 1`.
pub fn system(plant: ScalarPlant, delay: f64) -> Result<DelaySystem> {
    if !(plant.b0 > 0.0 && plant.b1 > 0.0 && plant.bint >= 0.0) {
        return Err(Error::InvalidParameter("scalar scenario needs b0, b1 > 0 and b_int ≥ 0".into()));
    }
    Ok(DelaySystem::new(Arc::new(plant), delay, f64::INFINITY, 1.0)?.with_input_bounds(plant.b1, plant.bint))
}

/// `|κ| = |sin y + y| / B ≤ 2|y| / B_min`
pub fn kappa_bound(plant: &ScalarPlant, h: f64) -> f64 {
    2.0 / plant.input_bounds(h).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_system::InputHistory;
    use crate::predictor::{predict_with, Integrator};
    use crate::reduction::compute_b;
    use crate::sampling::pair_in_ball;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn input_gain_stays_inside_analytic_bounds() {
        let plant = ScalarPlant::default();
        let sys = system(plant, DELAY).unwrap();
        let (lo, hi) = plant.input_bounds(DELAY);
        assert!(lo > 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (x, phi) = pair_in_ball(&mut rng, 1, 1, DELAY, 0.01, 8.0).unwrap();
            let pred = predict_with(&sys, &x, &phi, Integrator::Rk4).unwrap();
            let b = compute_b(&sys, &pred).unwrap().b[(0, 0)];
            assert!(b >= lo - 1e-9 && b <= hi + 1e-9, "{lo} ≤ {b} ≤ {hi}");
        }
    }

    #[test]
    fn extreme_trajectories_attain_the_bounds() {
        // ξ ≡ 0 keeps cos ξ = 1, which attains the upper bound
        let plant = ScalarPlant::default();
        let sys = system(plant, DELAY).unwrap();
        let phi = InputHistory::zeros(DELAY, 1e-3, 1).unwrap();
        let pred = predict_with(&sys, &Vector::zeros(1), &phi, Integrator::Rk4).unwrap();
        let b = compute_b(&sys, &pred).unwrap().b[(0, 0)];
        assert!((b - plant.input_bounds(DELAY).1).abs() < 1e-9);
        // ξ ≡ π keeps cos ξ = −1, which attains the lower bound
        let pi = Vector::from_element(1, std::f64::consts::PI);
        let pred = predict_with(&sys, &pi, &phi, Integrator::Rk4).unwrap();
        let b = compute_b(&sys, &pred).unwrap().b[(0, 0)];
        assert!((b - plant.input_bounds(DELAY).0).abs() < 1e-6);
    }

    #[test]
    fn rejects_mixed_signs() {
        assert!(system(ScalarPlant { b0: 1.0, b1: -0.5, bint: 0.5 }, DELAY).is_err());
    }
}
