//! Linear plant with a constant distributed kernel and a static gain on the prediction.

use nalgebra::DMatrix;

use crate::delay_system::{Matrix, Vector};
use crate::error::{Error, Result};
use crate::linear_ref::{linear_transformed_input, LinearDelaySystem, LinearKernel};

/// Closed-loop poles placed by [`ackermann`] when no gain is supplied.
pub const DEFAULT_POLES: [f64; 4] = [-1.0, -2.0, -3.0, -4.0];

/// `x' = [[0, 1], [2, −1]]x + (0, 1)u + (0, 0.5)u(t − 0.5) + ∫(0.2, 0.3)u(t + θ)dθ`; open-loop poles 1 and −2.
pub fn default_system() -> LinearDelaySystem {
    LinearDelaySystem::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]),
        Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
        Matrix::from_column_slice(2, 1, &[0.0, 0.5]),
        LinearKernel::Constant(Matrix::from_column_slice(2, 1, &[0.2, 0.3])),
        0.5,
    )
    .expect("valid shapes")
}

/// Gain `K` (1×n) placing the eigenvalues of `A + bK` at `poles` for a single input.
pub fn ackermann(a: &Matrix, b: &Matrix, poles: &[f64]) -> Result<Matrix> {
    let n = a.nrows();
    if b.ncols() != 1 {
        return Err(Error::InvalidParameter("pole placement needs a single input; supply K".into()));
    }
    if poles.len() < n {
        return Err(Error::InvalidParameter(format!("need {n} poles")));
    }
    let mut ctrb = Matrix::zeros(n, n);
    let mut col = b.column(0).into_owned();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let inv = ctrb.try_inverse().ok_or_else(|| Error::InvalidParameter("transformed pair (A, B) is not controllable".into()))?;
    let mut p = Matrix::identity(n, n);
    for &pole in &poles[..n] {
        p = p * (a - Matrix::identity(n, n) * pole);
    }
    let last = inv.rows(n - 1, 1).into_owned();
    Ok(-(last * p))
}

/// Solves `AᵀP + PA = −Q` by vectorisation.
pub fn lyapunov_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = Vector::from_iterator(n * n, q.iter().map(|v| -v));
    let vec_p = op.lu().solve(&rhs).ok_or_else(|| Error::InvalidParameter("Lyapunov equation is singular".into()))?;
    let p = Matrix::from_column_slice(n, n, vec_p.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// The gain to use: `supplied`, or pole placement on the transformed pair `(A, e^{Ah}B0 + Q(0))`.
pub fn resolve_gain(sys: &LinearDelaySystem, supplied: Option<Matrix>) -> Result<Matrix> {
    match supplied {
        Some(k) => {
            if k.shape() != (sys.input_dim(), sys.state_dim()) {
                return Err(Error::DimensionMismatch {
                    what: "gain K",
                    expected: sys.input_dim() * sys.state_dim(),
                    got: k.len(),
                });
            }
            Ok(k)
        }
        None => ackermann(&sys.a, &linear_transformed_input(sys), &DEFAULT_POLES),
    }
}
