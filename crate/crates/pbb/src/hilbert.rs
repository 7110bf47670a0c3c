//! Complex sparse linear algebra on the truncated transmon ⊗ Fock space.
//!
//! The basis ordering is transmon-major and fixed: basis index
//! `u * n_fock + n` holds transmon level `u` and Fock state `n`. Mode
//! operators are therefore block-diagonal per transmon level, which keeps
//! their application cache-friendly.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Fraction of top-Fock-level population above which a state is considered
/// to have leaked out of the truncated space.
pub const TRUNCATION_POPULATION_LIMIT: f64 = 1e-6;

/// Dimensions of the tensor-product space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    n_levels: usize,
    n_fock: usize,
}

impl Dims {
    pub fn new(n_levels: usize, n_fock: usize) -> Result<Self> {
        if n_levels < 2 {
            return Err(Error::InvalidDimension(format!(
                "n_levels must be >= 2, got {n_levels}"
            )));
        }
        if n_fock < 2 {
            return Err(Error::InvalidDimension(format!(
                "n_fock must be >= 2, got {n_fock}"
            )));
        }
        Ok(Dims { n_levels, n_fock })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn total(&self) -> usize {
        self.n_levels * self.n_fock
    }

    /// Basis index of |u⟩ ⊗ |n⟩ (transmon-major).
    pub fn index(&self, u: usize, n: usize) -> usize {
        debug_assert!(u < self.n_levels && n < self.n_fock);
        u * self.n_fock + n
    }

    /// Inverse of [`Dims::index`].
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.n_fock, index % self.n_fock)
    }
}

/// Compressed sparse row complex matrix.
///
/// Stored entries are kept exactly as assigned (duplicate triplets are
/// summed); explicit zeros are only removed by [`SparseOperator::pruned`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseOperator {
    /// Build from coordinate triplets. Duplicates are summed; column order
    /// within each row is ascending.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, Complex64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidDimension(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, Complex64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        // merge duplicates, then build the row pointers by counting
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match merged.last_mut() {
                Some((lr, lc, lv)) if *lr == r && *lc == c => *lv += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = merged.iter().map(|&(_, c, _)| c).collect();
        let values = merged.iter().map(|&(_, _, v)| v).collect();
        Ok(SparseOperator {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseOperator {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        SparseOperator {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    /// Conjugate transpose. Applying it twice returns the operator with the
    /// exact same stored entries.
    pub fn adjoint(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((self.col_idx[k], r, self.values[k].conj()));
            }
        }
        SparseOperator::from_triplets(self.cols, self.rows, &triplets)
            .expect("adjoint indices in range")
    }

    /// Drop stored entries with |value| <= `drop_tol`.
    pub fn pruned(&self, drop_tol: f64) -> Self {
        let triplets: Vec<_> = self
            .triplets()
            .into_iter()
            .filter(|(_, _, v)| v.norm() > drop_tol)
            .collect();
        SparseOperator::from_triplets(self.rows, self.cols, &triplets).expect("indices in range")
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &SparseOperator) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut triplets = self.triplets();
        triplets.extend(other.triplets());
        SparseOperator::from_triplets(self.rows, self.cols, &triplets)
    }

    pub fn sub(&self, other: &SparseOperator) -> Result<Self> {
        self.add(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    /// Sparse matrix product self * other (Gustavson with dense accumulator).
    pub fn matmul(&self, other: &SparseOperator) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut acc = vec![Complex64::ZERO; other.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..self.rows {
            touched.clear();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.values[k];
                let mid = self.col_idx[k];
                for j in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    let c = other.col_idx[j];
                    if acc[c] == Complex64::ZERO && !touched.contains(&c) {
                        touched.push(c);
                    }
                    acc[c] += a * other.values[j];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = Complex64::ZERO;
            }
        }
        SparseOperator::from_triplets(self.rows, other.cols, &triplets)
    }

    /// y = A x into a preallocated buffer. This is the trajectory-engine hot
    /// loop; `y` is overwritten.
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let mut s = Complex64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::ZERO; self.rows];
        self.apply_into(x, &mut y);
        y
    }

    /// Maximum entry magnitude of A - A† (0 for Hermitian operators).
    pub fn hermiticity_error(&self) -> f64 {
        self.sub(&self.adjoint())
            .map(|d| {
                d.values
                    .iter()
                    .map(|v| v.norm())
                    .fold(0.0f64, f64::max)
            })
            .unwrap_or(f64::INFINITY)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }
}

/// Kronecker product consistent with the transmon-major basis ordering:
/// `tensor(T, F)` places `T` on the transmon factor and `F` on the Fock
/// factor, so row index = (row of T) * F.rows + (row of F).
pub fn tensor(a: &SparseOperator, b: &SparseOperator) -> SparseOperator {
    let mut triplets = Vec::with_capacity(a.nnz() * b.nnz());
    for ra in 0..a.rows {
        for ka in a.row_ptr[ra]..a.row_ptr[ra + 1] {
            let ca = a.col_idx[ka];
            let va = a.values[ka];
            for rb in 0..b.rows {
                for kb in b.row_ptr[rb]..b.row_ptr[rb + 1] {
                    triplets.push((
                        ra * b.rows + rb,
                        ca * b.cols + b.col_idx[kb],
                        va * b.values[kb],
                    ));
                }
            }
        }
    }
    SparseOperator::from_triplets(a.rows * b.rows, a.cols * b.cols, &triplets)
        .expect("indices in range")
}

/// Complex state vector on the tensor-product space.
#[derive(Debug, Clone)]
pub struct StateVector {
    dims: Dims,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Basis state |index⟩ with index = u * n_fock + n.
    pub fn basis_state(dims: Dims, index: usize) -> Result<Self> {
        if index >= dims.total() {
            return Err(Error::InvalidDimension(format!(
                "basis index {index} outside dimension {}",
                dims.total()
            )));
        }
        let mut amplitudes = vec![Complex64::ZERO; dims.total()];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { dims, amplitudes })
    }

    pub fn from_amplitudes(dims: Dims, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != dims.total() {
            return Err(Error::DimensionMismatch(format!(
                "state length {} vs dimension {}",
                amplitudes.len(),
                dims.total()
            )));
        }
        Ok(StateVector { dims, amplitudes })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// ⟨ψ|A|ψ⟩ for a normalized state.
    pub fn expectation(&self, op: &SparseOperator) -> Result<Complex64> {
        expectation_raw(&self.amplitudes, op)
    }
}

/// ⟨x|A|x⟩ without normalization.
pub fn expectation_raw(x: &[Complex64], op: &SparseOperator) -> Result<Complex64> {
    if op.rows() != x.len() || op.cols() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "expectation: operator {}x{} vs state length {}",
            op.rows(),
            op.cols(),
            x.len()
        )));
    }
    let y = op.apply(x);
    Ok(x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum())
}

/// Annihilation operator on the truncated Fock space: ⟨n-1|a|n⟩ = √n.
/// The highest Fock state only annihilates downward (truncation).
pub fn fock_annihilation(n_fock: usize) -> Result<SparseOperator> {
    if n_fock < 2 {
        return Err(Error::InvalidDimension(format!(
            "fock_annihilation needs n_fock >= 2, got {n_fock}"
        )));
    }
    let triplets: Vec<_> = (1..n_fock)
        .map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0)))
        .collect();
    SparseOperator::from_triplets(n_fock, n_fock, &triplets)
}

/// Number operator a†a as a diagonal matrix.
pub fn fock_number(n_fock: usize) -> Result<SparseOperator> {
    if n_fock < 2 {
        return Err(Error::InvalidDimension(format!(
            "fock_number needs n_fock >= 2, got {n_fock}"
        )));
    }
    let diag: Vec<_> = (0..n_fock).map(|n| Complex64::new(n as f64, 0.0)).collect();
    Ok(SparseOperator::diagonal(&diag))
}

/// Transmon lowering operator Σ_u g_{u+1} |u⟩⟨u+1| with g_{u+1} = √(u+1) g1.
pub fn transmon_lowering(n_levels: usize, g1: f64) -> Result<SparseOperator> {
    if n_levels < 2 {
        return Err(Error::InvalidDimension(format!(
            "transmon_lowering needs n_levels >= 2, got {n_levels}"
        )));
    }
    if g1 <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "transmon_lowering needs g1 > 0, got {g1}"
        )));
    }
    let triplets: Vec<_> = (0..n_levels - 1)
        .map(|u| {
            (
                u,
                u + 1,
                Complex64::new(((u + 1) as f64).sqrt() * g1, 0.0),
            )
        })
        .collect();
    SparseOperator::from_triplets(n_levels, n_levels, &triplets)
}

/// |u⟩⟨v| on the transmon factor.
pub fn level_transition(n_levels: usize, u: usize, v: usize) -> Result<SparseOperator> {
    if u >= n_levels || v >= n_levels {
        return Err(Error::InvalidDimension(format!(
            "level_transition ({u}, {v}) outside {n_levels} levels"
        )));
    }
    SparseOperator::from_triplets(n_levels, n_levels, &[(u, v, Complex64::new(1.0, 0.0))])
}

/// Population of the top Fock level, used as the truncation-leakage guard.
pub fn top_fock_population(dims: Dims, x: &[Complex64]) -> f64 {
    let n_top = dims.n_fock() - 1;
    (0..dims.n_levels())
        .map(|u| x[dims.index(u, n_top)].norm_sqr())
        .sum()
}
