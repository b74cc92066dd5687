//! Cholesky factorization with an escalating diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Jitter levels tried in order after a plain factorization fails. Each is
/// multiplied by `max(1, mean diagonal)` so the ladder follows the matrix scale.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Clone, Debug)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn n(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b` by forward substitution.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

pub fn factorize(a: &DMatrix<f64>) -> Result<Factor> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let n = a.nrows();
    let scale = if n == 0 { 1.0 } else { (a.trace() / n as f64).abs().max(1.0) };
    for delta in JITTER_LADDER {
        let jitter = delta * scale;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factor { chol, jitter });
        }
    }
    Err(Error::Conditioning { max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_singular_psd() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let f = factorize(&a).unwrap();
        assert!(f.jitter > 0.0);
        let rebuilt = f.lower() * f.lower().transpose();
        let mut target = a.clone();
        for i in 0..3 {
            target[(i, i)] += f.jitter;
        }
        assert!((rebuilt - target).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn indefinite_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(factorize(&a), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn log_det_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let f = factorize(&a).unwrap();
        assert!((f.log_det() - 6.0f64.ln()).abs() < 1e-14);
    }
}
