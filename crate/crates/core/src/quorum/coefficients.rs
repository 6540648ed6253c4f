//! Coefficients of the single-shot estimator of one matrix entry.
//!
//! The entry `(i, j)` of the reconstructed operation is read from
//! `E_ij = |i0><i| (x) |j0><w_j|`, where `<w_j| = sum_k (psi^-1)_kj <k|`
//! (the bra of column `j` of `conj(psi^-1)`). The second factor is a finite
//! combination of dyads `|j0><k|`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{inverse, kron, ComplexMatrix, ZERO};
use crate::quorum::finite::FiniteQuorum;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCoefficients {
    pub i: usize,
    pub j: usize,
    pub i0: usize,
    pub j0: usize,
    /// `(k, (psi^-1)_kj)` for the nonzero entries of column `j`.
    pub combination: Vec<(usize, Complex64)>,
    dim: usize,
}

pub fn estimator_coefficients(i: usize, j: usize, i0: usize, j0: usize, psi: &ComplexMatrix) -> Result<EstimatorCoefficients> {
    let inv = inverse(psi)?;
    from_inverse(i, j, i0, j0, &inv)
}

/// Same as [`estimator_coefficients`] with `psi^-1` already computed.
pub fn from_inverse(i: usize, j: usize, i0: usize, j0: usize, psi_inv: &ComplexMatrix) -> Result<EstimatorCoefficients> {
    let d = psi_inv.nrows();
    for index in [i, j, i0, j0] {
        if index >= d {
            return Err(Error::IndexOutOfWindow { index, size: d });
        }
    }
    let combination = (0..d)
        .filter_map(|k| {
            let c = psi_inv[(k, j)];
            (c != ZERO).then_some((k, c))
        })
        .collect();
    Ok(EstimatorCoefficients {
        i,
        j,
        i0,
        j0,
        combination,
        dim: d,
    })
}

impl EstimatorCoefficients {
    /// Coefficient of `|j0><k|` in the second factor.
    pub fn coefficient(&self, k: usize) -> Complex64 {
        self.combination
            .iter()
            .find(|(kk, _)| *kk == k)
            .map_or(ZERO, |(_, c)| *c)
    }

    /// `E_ij` as a `d^2 x d^2` operator.
    pub fn operator(&self) -> ComplexMatrix {
        let d = self.dim;
        let mut first = ComplexMatrix::zeros(d, d);
        first[(self.i0, self.i)] = Complex64::new(1.0, 0.0);
        let mut second = ComplexMatrix::zeros(d, d);
        for &(k, c) in &self.combination {
            second[(self.j0, k)] = c;
        }
        kron(&first, &second)
    }

    /// `a_ij(kl) = <i|Q(k)^dag|i0> <w_j|Q(l)^dag|j0>`.
    pub fn finite(&self, q: &FiniteQuorum, k: usize, l: usize) -> Complex64 {
        let qk = &q.duals()[k];
        let ql = &q.duals()[l];
        let first = qk[(self.i0, self.i)].conj();
        let second: Complex64 = self
            .combination
            .iter()
            .map(|&(m, c)| c * ql[(self.j0, m)].conj())
            .sum();
        first * second
    }
}
