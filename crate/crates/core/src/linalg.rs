//! Dense LU factorization with partial pivoting, sized for MANA systems.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// A factorized square system `A x = b`.
#[derive(Clone)]
pub struct Factorized {
    lu: LU<f64, Dyn, Dyn>,
    dim: usize,
}

impl Factorized {
    /// Factorizes `a`; `sigma` only labels the error.
    pub fn new(a: DMatrix<f64>, sigma: u8) -> Result<Self> {
        let dim = a.nrows();
        debug_assert_eq!(dim, a.ncols());
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular { sigma });
        }
        let u = lu.u();
        if u.diagonal().iter().any(|d| !d.is_finite()) {
            return Err(Error::Singular { sigma });
        }
        Ok(Self { lu, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let ok = self.lu.solve_mut(b);
        debug_assert!(ok);
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let ok = self.lu.solve_mut(&mut x);
        debug_assert!(ok);
        x
    }
}

/// 2-norm condition number via singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 2.0, 3.0]);
        let f = Factorized::new(a, 0).unwrap();
        let mut b = DVector::from_vec(vec![1.0, 2.0]);
        f.solve_in_place(&mut b);
        assert!((b[0] - 0.1).abs() < 1e-15);
        assert!((b[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Factorized::new(a, 7), Err(Error::Singular { sigma: 7 })));
    }
}
