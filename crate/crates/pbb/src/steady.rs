//! Dense-Liouvillian steady state and a reference master-equation
//! propagator for small Hilbert-space dimensions.
//!
//! The Liouvillian is vectorized column-major: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
//! Memory grows as dim⁴, so the solver is capped at total dimension
//! [`DENSE_STEADY_STATE_DIM_CAP`].

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{fock_annihilation, fock_number, tensor, Dims, SparseOperator};
use crate::model::{build_hamiltonian, build_jump_operators, JumpOperator, SystemParams};

/// Largest tensor-product dimension accepted by [`steady_state_dense`].
pub const DENSE_STEADY_STATE_DIM_CAP: usize = 256;

/// Steady-state density matrix with the dimensions it lives on.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    dims: Dims,
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.diagonal().sum()
    }

    /// tr(ρ A).
    pub fn expectation(&self, op: &SparseOperator) -> Result<Complex64> {
        if op.rows() != self.mat.nrows() || op.cols() != self.mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expectation: operator {}x{} vs density matrix {}x{}",
                op.rows(),
                op.cols(),
                self.mat.nrows(),
                self.mat.ncols()
            )));
        }
        // tr(ρ A) = Σ_{r,c} A[r,c] ρ[c,r]
        let mut acc = Complex64::ZERO;
        for (r, c, v) in op.triplets() {
            acc += v * self.mat[(c, r)];
        }
        Ok(acc)
    }

    /// ⟨a†a⟩.
    pub fn photon_number(&self) -> f64 {
        let n_op = tensor(
            &SparseOperator::identity(self.dims.n_levels()),
            &fock_number(self.dims.n_fock()).expect("n_fock >= 2"),
        );
        self.expectation(&n_op).expect("dims match").re
    }

    /// ⟨a⟩.
    pub fn field_amplitude(&self) -> Complex64 {
        let a_op = tensor(
            &SparseOperator::identity(self.dims.n_levels()),
            &fock_annihilation(self.dims.n_fock()).expect("n_fock >= 2"),
        );
        self.expectation(&a_op).expect("dims match")
    }

    /// Population of transmon level u (traced over the mode).
    pub fn level_population(&self, u: usize) -> f64 {
        (0..self.dims.n_fock())
            .map(|n| self.mat[(self.dims.index(u, n), self.dims.index(u, n))].re)
            .sum()
    }
}

/// Dense Liouvillian superoperator matrix for the given Hamiltonian and
/// jump operators (column-major vectorization).
pub fn liouvillian_matrix(h: &SparseOperator, jumps: &[JumpOperator]) -> Result<DMatrix<Complex64>> {
    let d = h.rows();
    if h.cols() != d {
        return Err(Error::DimensionMismatch("Hamiltonian must be square".into()));
    }
    let id = DMatrix::<Complex64>::identity(d, d);
    let hd = h.to_dense();
    let minus_i = Complex64::new(0.0, -1.0);

    // -i (1 ⊗ H - Hᵀ ⊗ 1)
    let mut m = (id.kronecker(&hd) - hd.transpose().kronecker(&id)) * minus_i;

    for j in jumps {
        if j.op.rows() != d || j.op.cols() != d {
            return Err(Error::DimensionMismatch(format!(
                "jump operator {}x{} vs Hamiltonian {d}x{d}",
                j.op.rows(),
                j.op.cols()
            )));
        }
        let ld = j.op.to_dense();
        let ll = j.op.adjoint().matmul(&j.op)?.to_dense();
        let half = Complex64::new(0.5, 0.0);
        m += ld.conjugate().kronecker(&ld)
            - id.kronecker(&ll).scale(0.5)
            - (ll.transpose() * half).kronecker(&id);
    }
    Ok(m)
}

/// Solve L ρ = 0 with trace normalization by a null-space computation.
///
/// Errors with [`Error::DegenerateSteadyState`] when the null space has
/// dimension > 1 (no representative is picked).
pub fn steady_state_dense(params: &SystemParams, dims: Dims) -> Result<DensityMatrix> {
    params.validate()?;
    let d = dims.total();
    if d > DENSE_STEADY_STATE_DIM_CAP {
        return Err(Error::InvalidDimension(format!(
            "dense steady state capped at total dimension {DENSE_STEADY_STATE_DIM_CAP}, got {d}"
        )));
    }
    let h = build_hamiltonian(params, dims)?;
    let jumps = build_jump_operators(params, dims)?;
    steady_state_from_ops(dims, &h, &jumps)
}

/// Same as [`steady_state_dense`] but from explicit operators.
pub fn steady_state_from_ops(
    dims: Dims,
    h: &SparseOperator,
    jumps: &[JumpOperator],
) -> Result<DensityMatrix> {
    let d = dims.total();
    let m = liouvillian_matrix(h, jumps)?;

    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_sv * 1e-10 * (d as f64);
    let null_indices: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(i, _)| i)
        .collect();
    if null_indices.is_empty() {
        return Err(Error::Numerical(format!(
            "Liouvillian has no null vector within tolerance (smallest σ = {:.3e}, tol = {:.3e})",
            svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min),
            tol
        )));
    }
    if null_indices.len() > 1 {
        return Err(Error::DegenerateSteadyState {
            dimension: null_indices.len(),
        });
    }

    // null vector = conjugate of the corresponding row of Vᵀ
    let row = v_t.row(null_indices[0]);
    let mut rho = DMatrix::<Complex64>::zeros(d, d);
    for col in 0..d {
        for r in 0..d {
            rho[(r, col)] = row[col * d + r].conj();
        }
    }

    // Hermitize and normalize the trace
    let rho_h = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = rho_h.diagonal().sum();
    if tr.norm() < 1e-12 {
        return Err(Error::Numerical(
            "steady-state candidate has vanishing trace".into(),
        ));
    }
    let rho_n = rho_h / tr;

    // positivity check
    let eig = rho_n.clone().symmetric_eigen();
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ev < -1e-9 {
        return Err(Error::Numerical(format!(
            "steady state not positive semidefinite (min eigenvalue {min_ev:.3e})"
        )));
    }

    Ok(DensityMatrix { dims, mat: rho_n })
}

/// Reference master-equation propagator: fixed-step RK4 on
/// ρ̇ = -i[H,ρ] + Σ (LρL† - ½{L†L, ρ}), evaluated in operator form.
///
/// Deliberately independent of the vectorized-Liouvillian path so the two
/// can cross-check each other.
pub fn propagate_master_equation(
    dims: Dims,
    h: &SparseOperator,
    jumps: &[JumpOperator],
    rho0: DMatrix<Complex64>,
    t_final: f64,
    n_steps: usize,
) -> Result<DensityMatrix> {
    let d = dims.total();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial density matrix {}x{} vs dimension {d}",
            rho0.nrows(),
            rho0.ncols()
        )));
    }
    let hd = h.to_dense();
    let ls: Vec<DMatrix<Complex64>> = jumps.iter().map(|j| j.op.to_dense()).collect();
    let lls: Vec<DMatrix<Complex64>> = jumps
        .iter()
        .map(|j| j.op.adjoint().matmul(&j.op).map(|m| m.to_dense()))
        .collect::<Result<_>>()?;

    let rhs = |rho: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let mut out = (&hd * rho - rho * &hd) * Complex64::new(0.0, -1.0);
        for (l, ll) in ls.iter().zip(&lls) {
            out += l * rho * l.adjoint() - (ll * rho + rho * ll).scale(0.5);
        }
        out
    };

    let dt = t_final / n_steps as f64;
    let mut rho = rho0;
    for _ in 0..n_steps {
        let k1 = rhs(&rho);
        let k2 = rhs(&(&rho + &k1 * Complex64::new(dt / 2.0, 0.0)));
        let k3 = rhs(&(&rho + &k2 * Complex64::new(dt / 2.0, 0.0)));
        let k4 = rhs(&(&rho + &k3 * Complex64::new(dt, 0.0)));
        rho += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(dt / 6.0, 0.0);
    }
    Ok(DensityMatrix { dims, mat: rho })
}
