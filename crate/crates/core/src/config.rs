//! TOML description of a linear plant with a constant distributed kernel.
//!
//! ```toml
//! n = 2
//! m = 1
//! h = 0.5
//! A = [0.0, 1.0, 2.0, -1.0]   # row-major n×n
//! B0 = [0.0, 1.0]             # row-major n×m
//! B1 = [0.0, 0.5]
//! Bint_constant = [0.2, 0.3]
//! K = [-1.0, -2.0]            # optional, row-major m×n
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::delay_system::Matrix;
use crate::error::{Error, Result};
use crate::linear_ref::{LinearDelaySystem, LinearKernel};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B0")]
    pub b0: Vec<f64>,
    #[serde(rename = "B1")]
    pub b1: Vec<f64>,
    #[serde(rename = "Bint_constant", default)]
    pub bint_constant: Option<Vec<f64>>,
    #[serde(rename = "K", default)]
    pub k: Option<Vec<f64>>,
}

fn matrix(what: &'static str, rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            what,
            expected: rows * cols,
            got: data.len(),
        });
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(Matrix::from_row_slice(rows, cols, data))
}

impl LinearConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn system(&self) -> Result<LinearDelaySystem> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParameter("n and m must be positive".into()));
        }
        let (n, m) = (self.n, self.m);
        let bint = match &self.bint_constant {
            Some(data) => LinearKernel::Constant(matrix("Bint_constant", n, m, data)?),
            None => LinearKernel::Zero,
        };
        LinearDelaySystem::new(
            matrix("A", n, n, &self.a)?,
            matrix("B0", n, m, &self.b0)?,
            matrix("B1", n, m, &self.b1)?,
            bint,
            self.h,
        )
    }

    /// The gain `K` (m×n) if one was given.
    pub fn gain(&self) -> Result<Option<Matrix>> {
        self.k.as_deref().map(|k| matrix("K", self.m, self.n, k)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
n = 2
m = 1
h = 0.5
A = [0.0, 1.0, 2.0, -1.0]
B0 = [0.0, 1.0]
B1 = [0.0, 0.5]
Bint_constant = [0.2, 0.3]
"#;

    #[test]
    fn parses_row_major() {
        let cfg = LinearConfig::parse(SAMPLE).unwrap();
        let sys = cfg.system().unwrap();
        assert_eq!(sys.a[(1, 0)], 2.0);
        assert_eq!(sys.a[(0, 1)], 1.0);
        assert_eq!(sys.b1[(1, 0)], 0.5);
        assert!(cfg.gain().unwrap().is_none());
    }

    #[test]
    fn gain_and_errors() {
        let with_k = format!("{SAMPLE}K = [-1.0, -2.0]\n");
        let k = LinearConfig::parse(&with_k).unwrap().gain().unwrap().unwrap();
        assert_eq!((k.nrows(), k.ncols()), (1, 2));

        let bad = SAMPLE.replace("A = [0.0, 1.0, 2.0, -1.0]", "A = [0.0, 1.0, 2.0]");
        assert!(matches!(LinearConfig::parse(&bad).unwrap().system(), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(LinearConfig::parse("n = 1\nbogus = 3"), Err(Error::Config(_))));
    }
}
