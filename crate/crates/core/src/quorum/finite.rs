//! Quorums for finite-dimensional systems.
//!
//! The built-in quorum is the identity plus the generalized Gell-Mann
//! matrices (the Pauli matrices for qubits): `d^2` Hermitian observables
//! forming a basis of operator space. The duals `Q(l)` come from the
//! pseudoinverse of the Gram matrix `G_lm = Tr[O(l)^dag O(m)]`, giving
//! `Tr[Q(l)^dag O(m)] = delta_lm`.
//!
//! Measuring `O(l)` (chosen with weight `w_l`) and finding eigenvalue `e`
//! gives the single-shot estimate `Tr[Q(l)^dag H] e / w_l` of `<H>`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hs_inner, ComplexMatrix, ZERO};

/// Eigenvalues closer than this are treated as one eigenspace.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Observable {
    pub matrix: ComplexMatrix,
    /// Distinct eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Projector onto each eigenspace, aligned with `eigenvalues`.
    pub projectors: Vec<ComplexMatrix>,
}

impl Observable {
    pub fn new(matrix: ComplexMatrix) -> Self {
        let (values, vectors) = hermitian_eigen(&matrix);
        let d = matrix.nrows();
        let mut eigenvalues: Vec<f64> = Vec::new();
        let mut projectors: Vec<ComplexMatrix> = Vec::new();
        for (c, &value) in values.iter().enumerate() {
            let v = vectors.column(c);
            let p = v * v.adjoint();
            match eigenvalues.last() {
                Some(&last) if (value - last).abs() < DEGENERACY_TOLERANCE => {
                    *projectors.last_mut().expect("paired with eigenvalues") += p;
                }
                _ => {
                    eigenvalues.push(value);
                    projectors.push(ComplexMatrix::zeros(d, d) + p);
                }
            }
        }
        Self {
            matrix,
            eigenvalues,
            projectors,
        }
    }

    pub fn outcomes(&self) -> usize {
        self.eigenvalues.len()
    }
}

#[derive(Debug, Clone)]
pub struct FiniteQuorum {
    dim: usize,
    observables: Vec<Observable>,
    duals: Vec<ComplexMatrix>,
    weights: Vec<f64>,
}

/// Identity followed by the generalized Gell-Mann matrices: symmetric and
/// antisymmetric off-diagonal pairs, then the diagonal ones.
pub fn gell_mann_basis(d: usize) -> Vec<ComplexMatrix> {
    let mut out = vec![ComplexMatrix::identity(d, d)];
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::i();
    for j in 0..d {
        for k in j + 1..d {
            let mut sym = ComplexMatrix::zeros(d, d);
            sym[(j, k)] = one;
            sym[(k, j)] = one;
            out.push(sym);
            let mut anti = ComplexMatrix::zeros(d, d);
            anti[(j, k)] = -i;
            anti[(k, j)] = i;
            out.push(anti);
        }
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut diag = ComplexMatrix::zeros(d, d);
        for m in 0..l {
            diag[(m, m)] = Complex64::new(norm, 0.0);
        }
        diag[(l, l)] = Complex64::new(-(l as f64) * norm, 0.0);
        out.push(diag);
    }
    out
}

pub fn build_finite_quorum(dim: usize) -> Result<FiniteQuorum> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("quorum dimension {dim} must be >= 2")));
    }
    FiniteQuorum::from_observables(gell_mann_basis(dim))
}

impl FiniteQuorum {
    /// Builds duals for an arbitrary spanning family of Hermitian observables
    /// with uniform sampling weights.
    pub fn from_observables(matrices: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = matrices
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty quorum".into()))?
            .nrows();
        let count = matrices.len();
        let gram = ComplexMatrix::from_fn(count, count, |l, m| {
            hs_inner(&matrices[l], &matrices[m]).expect("quorum operators share a shape")
        });
        let rank = gram.rank(1e-10 * gram.norm());
        if rank < dim * dim {
            return Err(Error::SpanDeficiency {
                rank,
                needed: dim * dim,
            });
        }
        let pinv = gram
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        // Q(l) = sum_m pinv_ml O(m)
        let duals = (0..count)
            .map(|l| {
                (0..count).fold(ComplexMatrix::zeros(dim, dim), |acc, m| {
                    acc + matrices[m].map(|z| z * pinv[(m, l)])
                })
            })
            .collect();
        let observables = matrices.into_iter().map(Observable::new).collect();
        Ok(Self {
            dim,
            observables,
            duals,
            weights: vec![1.0 / count as f64; count],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn duals(&self) -> &[ComplexMatrix] {
        &self.duals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rank of the Gram matrix of the observables.
    pub fn gram_rank(&self) -> usize {
        let n = self.len();
        let gram = ComplexMatrix::from_fn(n, n, |l, m| {
            hs_inner(&self.observables[l].matrix, &self.observables[m].matrix).unwrap()
        });
        gram.rank(1e-10 * gram.norm())
    }

    /// `Tr[Q(l)^dag O(m)]`.
    pub fn biorthogonality(&self) -> ComplexMatrix {
        let n = self.len();
        ComplexMatrix::from_fn(n, n, |l, m| hs_inner(&self.duals[l], &self.observables[m].matrix).unwrap())
    }

    /// Single-shot estimate of `<|a><b|>` (that is, `rho_ba`) from eigenvalue
    /// index `outcome` of observable `obs`: `<b|Q(l)^dag|a> e / w_l`.
    pub fn dyad(&self, obs: usize, outcome: usize, a: usize, b: usize) -> Complex64 {
        let e = self.observables[obs].eigenvalues[outcome];
        self.duals[obs][(a, b)].conj() * (e / self.weights[obs])
    }

    /// Exact probability of measuring observable `obs` and finding eigenspace
    /// `outcome` on the single-system state `rho`.
    pub fn outcome_probability(&self, rho: &ComplexMatrix, obs: usize, outcome: usize) -> f64 {
        let p = &self.observables[obs].projectors[outcome];
        self.weights[obs] * (rho * p).trace().re
    }
}

/// Coefficients `c_l = Tr[Q(l)^dag H]`, so that `H = sum_l c_l O(l)`.
pub fn expand_in_quorum(h: &ComplexMatrix, q: &FiniteQuorum) -> Result<Vec<Complex64>> {
    q.duals.iter().map(|dual| hs_inner(dual, h)).collect()
}

pub fn resum(coefficients: &[Complex64], q: &FiniteQuorum) -> ComplexMatrix {
    coefficients
        .iter()
        .zip(&q.observables)
        .fold(ComplexMatrix::from_element(q.dim, q.dim, ZERO), |acc, (c, o)| {
            acc + o.matrix.map(|z| z * c)
        })
}
