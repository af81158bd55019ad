//! JSON shapes for matrices and vectors, and float formatting for CSV.
//!
//! A matrix is `{"dim": [rows, cols], "entries": [[re, im], ...]}` in
//! row-major order; a vector is `{"dim": n, "entries": [[re, im], ...]}`.

use qsd_core::linalg::ComplexMatrix;
use qsd_core::C64;
use serde::{Deserialize, Serialize};

use crate::error::QsdError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: [usize; 2],
    pub entries: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<ComplexMatrix, QsdError> {
        let [r, c] = self.dim;
        let data = self.entries.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::new(r, c, data).map_err(|e| QsdError::Config(format!("bad matrix: {e}")))
    }

    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        Self {
            dim: [m.rows(), m.cols()],
            entries: m.as_slice().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        Self::from_matrix(&ComplexMatrix::from_diagonal(diag))
    }
}

impl VectorJson {
    pub fn to_vector(&self) -> Result<Vec<C64>, QsdError> {
        if self.entries.len() != self.dim {
            return Err(QsdError::Config(format!(
                "vector declares {} entries but has {}",
                self.dim,
                self.entries.len()
            )));
        }
        Ok(self.entries.iter().map(|&[re, im]| C64::new(re, im)).collect())
    }

    pub fn from_vector(v: &[C64]) -> Self {
        Self {
            dim: v.len(),
            entries: v.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

/// Shortest round-trip representation; `NaN`, `inf`, `-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_owned()
    } else if x.is_nan() {
        "NaN".to_owned()
    } else if x > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

pub fn parse_f64(s: &str) -> Result<f64, QsdError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| QsdError::Parse(format!("not a number: {s:?}")))
}
