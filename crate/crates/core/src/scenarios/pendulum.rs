//! Inverted pendulum with one point delay:
//! `x1' = x2`, `x2' = sin x1 + u(t) + u(t − h)`.

use std::sync::Arc;

use crate::delay_system::{DelaySystem, Matrix, PlantModel, Vector};
use crate::error::{Error, Result};

pub const DELAY: f64 = std::f64::consts::FRAC_PI_4;

/// Bounds of `sin y / y` on the real line used by the negativity grid.
pub const ALPHA_MIN: f64 = -0.22;
pub const ALPHA_MAX: f64 = 1.0;
pub const ALPHA_STEP: f64 = 1e-2;
/// Per-axis resolution of the input-matrix grid (32² ≈ 10³ samples).
pub const SECTOR_GRID: usize = 32;

#[derive(Debug, Clone, Copy, Default)]
pub struct Pendulum;

impl PlantModel for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[1], x[0].sin()])
    }
    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, x[0].cos(), 0.0])
    }
    fn b0(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
    fn b1(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
}

/// `R = ∞`, `M_f = 1`, `‖B1‖ = 1`, no distributed kernel.
pub fn system(delay: f64) -> Result<DelaySystem> {
    Ok(DelaySystem::new(Arc::new(Pendulum), delay, f64::INFINITY, 1.0)?.with_input_bounds(1.0, 0.0))
}

/// `sin y1 / y1`, with the removable singularity filled in.
pub fn pendulum_alpha(y1: f64) -> f64 {
    if y1.abs() < 1e-8 {
        1.0 - y1 * y1 / 6.0
    } else {
        y1.sin() / y1
    }
}

/// Ring sector containing `β(h)`: `β1² + β2² ∈ [r2_min, r2_max]`, `β1/β2 ∈ [ratio_min, ratio_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub r2_min: f64,
    pub r2_max: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Sector {
    pub fn contains(&self, beta: &Vector, tol: f64) -> bool {
        let r2 = beta[0] * beta[0] + beta[1] * beta[1];
        let ratio = beta[0] / beta[1];
        beta[1] > 0.0
            && r2 >= self.r2_min - tol
            && r2 <= self.r2_max + tol
            && ratio >= self.ratio_min - tol
            && ratio <= self.ratio_max + tol
    }
}

/// `[1, e^{2h}]` and `[tanh h, tan h]`, valid for `h ∈ [0, π/2)`.
pub fn pendulum_sector(h: f64) -> Result<Sector> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&h) {
        return Err(Error::OutOfRange {
            what: "pendulum delay",
            value: h,
            lo: 0.0,
            hi: std::f64::consts::FRAC_PI_2,
        });
    }
    Ok(Sector {
        r2_min: 1.0,
        r2_max: (2.0 * h).exp(),
        ratio_min: h.tanh(),
        ratio_max: h.tan(),
    })
}

/// Grid over the sector shifted by `B1 = (0, 1)`: `per_axis` radii × `per_axis` angles, edges included.
pub fn pendulum_input_grid(h: f64, per_axis: usize) -> Result<Vec<Vector>> {
    let sector = pendulum_sector(h)?;
    let per_axis = per_axis.max(2);
    let (r_lo, r_hi) = (sector.r2_min.sqrt(), sector.r2_max.sqrt());
    let (a_lo, a_hi) = (sector.ratio_min.atan(), sector.ratio_max.atan());
    let mut out = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        let r = r_lo + (r_hi - r_lo) * i as f64 / (per_axis - 1) as f64;
        for j in 0..per_axis {
            // angle measured from the β2 axis, so tan(angle) = β1/β2
            let a = a_lo + (a_hi - a_lo) * j as f64 / (per_axis - 1) as f64;
            out.push(Vector::from_vec(vec![r * a.sin(), 1.0 + r * a.cos()]));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityReport {
    pub negative: bool,
    /// Largest eigenvalue of `V⁻¹Fᵀ + FV⁻¹ − 4kBBᵀ` over the grid.
    pub worst_eigenvalue: f64,
    pub worst_alpha: f64,
    pub worst_b: Vector,
}

/// Evaluates `V⁻¹Fᵀ + FV⁻¹ − 4kBBᵀ` with `F = [[0, 1], [α, 0]]` for `α` on a grid of
/// `[ALPHA_MIN, ALPHA_MAX]` with spacing `alpha_step` and every `B` in `b_samples`.
pub fn pendulum_negativity(v: &Matrix, k: f64, alpha_step: f64, b_samples: &[Vector]) -> Result<NegativityReport> {
    if v.shape() != (2, 2) {
        return Err(Error::InvalidParameter("V must be 2×2".into()));
    }
    if !(alpha_step > 0.0) {
        return Err(Error::NonPositive("alpha step"));
    }
    let v_inv = v.clone().try_inverse().ok_or_else(|| Error::InvalidParameter("V is singular".into()))?;
    let count = ((ALPHA_MAX - ALPHA_MIN) / alpha_step).ceil() as usize;
    let mut report = NegativityReport {
        negative: false,
        worst_eigenvalue: f64::NEG_INFINITY,
        worst_alpha: f64::NAN,
        worst_b: Vector::zeros(2),
    };
    for i in 0..=count {
        let alpha = (ALPHA_MIN + i as f64 * alpha_step).min(ALPHA_MAX);
        let f = Matrix::from_row_slice(2, 2, &[0.0, 1.0, alpha, 0.0]);
        let base = &v_inv * f.transpose() + &f * &v_inv;
        for b in b_samples {
            let m = &base - b * b.transpose() * (4.0 * k);
            let lam = m.symmetric_eigen().eigenvalues.max();
            if lam > report.worst_eigenvalue {
                report.worst_eigenvalue = lam;
                report.worst_alpha = alpha;
                report.worst_b = b.clone();
            }
        }
    }
    report.negative = report.worst_eigenvalue < 0.0;
    Ok(report)
}

/// Negativity check on the default grids for delay `h`.
pub fn pendulum_negativity_default(v: &Matrix, k: f64, h: f64) -> Result<NegativityReport> {
    pendulum_negativity(v, k, ALPHA_STEP, &pendulum_input_grid(h, SECTOR_GRID)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn alpha_examples() {
        assert_eq!(pendulum_alpha(0.0), 1.0);
        assert!(pendulum_alpha(PI).abs() < 1e-15);
        // global minimum of sinc, located by a fine scan
        let min = (1..200_000).map(|i| pendulum_alpha(i as f64 * 1e-4)).fold(f64::INFINITY, f64::min);
        assert!((min + 0.2172336).abs() < 1e-6, "{min}");
        assert!(min >= -0.2173 - 1e-3);
    }

    #[test]
    fn sector_examples() {
        let s = pendulum_sector(0.0).unwrap();
        assert_eq!((s.r2_min, s.r2_max, s.ratio_min, s.ratio_max), (1.0, 1.0, 0.0, 0.0));
        let s = pendulum_sector(FRAC_PI_4).unwrap();
        assert!((s.r2_max - 4.810477).abs() < 1e-6);
        assert!((s.ratio_min - 0.655794).abs() < 1e-6);
        assert!((s.ratio_max - 1.0).abs() < 1e-15);
        assert!(pendulum_sector(FRAC_PI_2).is_err());
    }

    #[test]
    fn grid_lies_in_shifted_sector() {
        let s = pendulum_sector(FRAC_PI_4).unwrap();
        let grid = pendulum_input_grid(FRAC_PI_4, SECTOR_GRID).unwrap();
        assert_eq!(grid.len(), SECTOR_GRID * SECTOR_GRID);
        for b in &grid {
            let beta = Vector::from_vec(vec![b[0], b[1] - 1.0]);
            assert!(s.contains(&beta, 1e-12));
        }
    }

    /// `F + Fᵀ − 4kBBᵀ` is negative definite iff `(1 + α) < 8k b1 b2` (given `b1 b2 > 0`).
    fn closed_form(k: f64, alpha: f64, b: &Vector) -> bool {
        let p = b[0] * b[1];
        4.0 * k * b[0] * b[0] > 0.0 && (1.0 + alpha - 4.0 * k * p).abs() < 4.0 * k * p
    }

    #[test]
    fn negativity_examples() {
        let eye = Matrix::identity(2, 2);
        let r = pendulum_negativity_default(&eye, 1.0, FRAC_PI_4).unwrap();
        assert!(r.negative && r.worst_eigenvalue < 0.0);
        assert!(closed_form(1.0, r.worst_alpha, &r.worst_b));

        let r0 = pendulum_negativity_default(&eye, 0.0, FRAC_PI_4).unwrap();
        assert!(!r0.negative);
        // with k = 0 the eigenvalues are ±(1 + α)
        assert!((r0.worst_eigenvalue - 2.0).abs() < 1e-12);

        assert!(pendulum_negativity_default(&eye, 1e3, FRAC_PI_4).unwrap().negative);
    }

    #[test]
    fn grid_verdict_matches_closed_form() {
        let grid = pendulum_input_grid(FRAC_PI_4, 8).unwrap();
        for k in [0.1, 0.25, 0.5, 1.0] {
            let expected = grid.iter().all(|b| closed_form(k, ALPHA_MAX, b) && closed_form(k, ALPHA_MIN, b));
            let got = pendulum_negativity(&Matrix::identity(2, 2), k, ALPHA_STEP, &grid).unwrap().negative;
            assert_eq!(got, expected, "k = {k}");
        }
    }
}
