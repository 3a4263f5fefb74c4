//! System-side objects: Hamiltonian and coupling operators, Liouville-space
//! vectorization, superoperator builders, and the free propagator.
//!
//! Vectorization convention: `rho_{ij}` maps to slot `i*d + j`, so
//! `vec(A rho C) = (A kron C^T) vec(rho)`.

use ndarray::linalg::kron;
use ndarray::{Array1, Array2};
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{imag_unit, re, LinalgError, Scalar};

#[derive(Debug, Clone, Error)]
pub enum SystemError {
    #[error("operator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator {which} is not Hermitian (max deviation {dev:e})")]
    NotHermitian { which: String, dev: f64 },
    #[error("coupling operator dimension {got} does not match Hamiltonian dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn hermiticity_deviation<T: Scalar>(m: &Array2<Complex<T>>) -> T {
    let mut dev = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > dev {
                dev = d;
            }
        }
    }
    dev
}

fn check_hermitian<T: Scalar>(m: &Array2<Complex<T>>, which: &str) -> Result<(), SystemError> {
    if m.nrows() != m.ncols() {
        return Err(SystemError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let dev = hermiticity_deviation(m);
    let tol = T::of(1e-12).max(T::eps() * T::of(100.0));
    if dev > tol {
        return Err(SystemError::NotHermitian {
            which: which.to_string(),
            dev: dev.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// The system Hamiltonian together with one coupling operator per bath.
#[derive(Debug, Clone)]
pub struct SystemSpec<T: Scalar> {
    pub hamiltonian: Array2<Complex<T>>,
    pub coupling_ops: Vec<Array2<Complex<T>>>,
}

impl<T: Scalar> SystemSpec<T> {
    pub fn new(
        hamiltonian: Array2<Complex<T>>,
        coupling_ops: Vec<Array2<Complex<T>>>,
    ) -> Result<Self, SystemError> {
        check_hermitian(&hamiltonian, "hamiltonian")?;
        let d = hamiltonian.nrows();
        for (i, op) in coupling_ops.iter().enumerate() {
            check_hermitian(op, &format!("coupling[{i}]"))?;
            if op.nrows() != d {
                return Err(SystemError::DimensionMismatch {
                    expected: d,
                    got: op.nrows(),
                });
            }
        }
        Ok(Self {
            hamiltonian,
            coupling_ops,
        })
    }

    /// Hilbert-space dimension d.
    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Liouville-space dimension d^2.
    pub fn liouville_dim(&self) -> usize {
        self.dim() * self.dim()
    }
}

/// Stack a density matrix row-major into a Liouville vector.
pub fn vectorize<T: Scalar>(rho: &Array2<Complex<T>>) -> Array1<Complex<T>> {
    Array1::from_iter(rho.iter().copied())
}

/// Inverse of `vectorize`.
pub fn devectorize<T: Scalar>(v: &Array1<Complex<T>>, d: usize) -> Array2<Complex<T>> {
    Array2::from_shape_fn((d, d), |(i, j)| v[i * d + j])
}

/// Superoperator for left multiplication: `O rho`.
pub fn left_super<T: Scalar>(op: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let id = Array2::eye(op.nrows());
    kron(op, &id)
}

/// Superoperator for right multiplication: `rho O`.
pub fn right_super<T: Scalar>(op: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let id = Array2::eye(op.nrows());
    kron(&id, &op.t().to_owned())
}

/// Commutator superoperator `[O, .]`.
pub fn commutator_super<T: Scalar>(op: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    left_super(op) - right_super(op)
}

/// Anticommutator superoperator `{O, .}`.
pub fn anticommutator_super<T: Scalar>(op: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    left_super(op) + right_super(op)
}

/// `exp(c H)` for Hermitian `H`, via its eigendecomposition.
pub fn herm_exp<T: Scalar>(
    h: &Array2<Complex<T>>,
    c: Complex<T>,
) -> Result<Array2<Complex<T>>, SystemError> {
    let (vals, vecs) = T::eigh(h)?;
    let d = h.nrows();
    let mut phases = Array2::<Complex<T>>::zeros((d, d));
    for i in 0..d {
        phases[(i, i)] = (c * vals[i]).exp();
    }
    let vdag = vecs.t().mapv(|z| z.conj());
    Ok(vecs.dot(&phases).dot(&vdag))
}

/// Unitary free propagator on Liouville space for time `dt`:
/// `exp(-i H dt) kron conj(exp(-i H dt))`.
pub fn free_propagator<T: Scalar>(
    h: &Array2<Complex<T>>,
    dt: T,
) -> Result<Array2<Complex<T>>, SystemError> {
    let u = herm_exp(h, -imag_unit::<T>() * dt)?;
    let uc = u.mapv(|z| z.conj());
    Ok(kron(&u, &uc))
}

/// Eigenbasis of a coupling operator, with the Liouville-space rotations
/// into and out of it. Influence nodes are diagonal in this basis.
#[derive(Debug, Clone)]
pub struct CouplingBasis<T: Scalar> {
    /// Eigenvalues of the coupling operator, ascending.
    pub eigvals: Vec<T>,
    /// Unitary of column eigenvectors.
    pub vectors: Array2<Complex<T>>,
    /// Rotation into the eigenbasis: `vec(V^dag rho V)`.
    pub into_basis: Array2<Complex<T>>,
    /// Rotation back out.
    pub out_of_basis: Array2<Complex<T>>,
}

impl<T: Scalar> CouplingBasis<T> {
    pub fn new(op: &Array2<Complex<T>>) -> Result<Self, SystemError> {
        check_hermitian(op, "coupling")?;
        let (vals, v) = T::eigh(op)?;
        let vdag = v.t().mapv(|z| z.conj());
        let into_basis = kron(&vdag, &v.t().to_owned());
        let out_of_basis = kron(&v, &v.mapv(|z| z.conj()));
        Ok(Self {
            eigvals: vals.to_vec(),
            vectors: v,
            into_basis,
            out_of_basis,
        })
    }

    /// Liouville eigenvalue differences `lam_i - lam_j` indexed by slot.
    pub fn minus_diag(&self) -> Vec<T> {
        let d = self.eigvals.len();
        let mut out = Vec::with_capacity(d * d);
        for &a in &self.eigvals {
            for &b in &self.eigvals {
                out.push(a - b);
            }
        }
        out
    }

    /// Liouville eigenvalue sums `lam_i + lam_j` indexed by slot.
    pub fn plus_diag(&self) -> Vec<T> {
        let d = self.eigvals.len();
        let mut out = Vec::with_capacity(d * d);
        for &a in &self.eigvals {
            for &b in &self.eigvals {
                out.push(a + b);
            }
        }
        out
    }
}

// Two-level building blocks, ground state at index 0.

pub fn sigma_x<T: Scalar>() -> Array2<Complex<T>> {
    ndarray::array![
        [re(T::zero()), re(T::one())],
        [re(T::one()), re(T::zero())],
    ]
}

pub fn sigma_z<T: Scalar>() -> Array2<Complex<T>> {
    ndarray::array![
        [re(-T::one()), re(T::zero())],
        [re(T::zero()), re(T::one())],
    ]
}

/// Excited-state projector `sigma^+ sigma^-`.
pub fn excited_projector<T: Scalar>() -> Array2<Complex<T>> {
    ndarray::array![
        [re(T::zero()), re(T::zero())],
        [re(T::zero()), re(T::one())],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense<T: Scalar>(d: usize, seed: f64) -> Array2<Complex<T>> {
        let mut k = 0.0;
        Array2::from_shape_fn((d, d), |_| {
            k += 1.0;
            Complex::new(T::of((seed + k).sin()), T::of((seed + 2.0 * k).cos()))
        })
    }

    #[test]
    fn vectorize_roundtrip() {
        let rho = dense::<f64>(3, 0.3);
        let v = vectorize(&rho);
        assert_eq!(v[5], rho[(1, 2)]);
        let back = devectorize(&v, 3);
        assert_eq!(back, rho);
    }

    #[test]
    fn super_ops_match_direct_multiplication() {
        let o = dense::<f64>(3, 1.0);
        let rho = dense::<f64>(3, 2.0);
        let lhs = devectorize(&left_super(&o).dot(&vectorize(&rho)), 3);
        let direct = o.dot(&rho);
        assert!((&lhs - &direct).iter().all(|z| z.norm() < 1e-13));
        let rhs = devectorize(&right_super(&o).dot(&vectorize(&rho)), 3);
        let direct = rho.dot(&o);
        assert!((&rhs - &direct).iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn free_propagator_phase_of_coherence() {
        // H = delta |e><e|: rho_ge picks up exp(i delta t).
        let delta = 0.7;
        let t = 1.3;
        let h = excited_projector::<f64>().mapv(|z| z * delta);
        let g = free_propagator(&h, t).unwrap();
        let rho = array![
            [re(0.5_f64), re(0.3)],
            [re(0.3), re(0.5)],
        ];
        let out = devectorize(&g.dot(&vectorize(&rho)), 2);
        let expect = Complex::new(0.0, delta * t).exp() * 0.3;
        assert!((out[(0, 1)] - expect).norm() < 1e-14);
        assert!((out[(1, 0)] - expect.conj()).norm() < 1e-14);
        assert!((out[(0, 0)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn free_propagator_is_unitary_and_trace_preserving() {
        let h = dense::<f64>(2, 3.0);
        let h = (&h + &h.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
        let g = free_propagator(&h, 0.37).unwrap();
        let gdag = g.t().mapv(|z| z.conj());
        let prod = gdag.dot(&g);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - re(want)).norm() < 1e-13);
            }
        }
        // <<I| g = <<I|  (columns of g sum correctly over diagonal slots).
        let rho = dense::<f64>(2, 4.0);
        let out = devectorize(&g.dot(&vectorize(&rho)), 2);
        let tr_in = rho[(0, 0)] + rho[(1, 1)];
        let tr_out = out[(0, 0)] + out[(1, 1)];
        assert!((tr_in - tr_out).norm() < 1e-13);
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let h = dense::<f64>(2, 5.0);
        assert!(SystemSpec::new(h, vec![]).is_err());
    }

    #[test]
    fn coupling_basis_rotation_matches_direct() {
        let op = sigma_x::<f64>();
        let basis = CouplingBasis::new(&op).unwrap();
        let rho = dense::<f64>(2, 6.0);
        let v = &basis.vectors;
        let vdag = v.t().mapv(|z| z.conj());
        let direct = vdag.dot(&rho).dot(v);
        let rotated = devectorize(&basis.into_basis.dot(&vectorize(&rho)), 2);
        assert!((&rotated - &direct).iter().all(|z| z.norm() < 1e-13));
        let round = basis.out_of_basis.dot(&basis.into_basis);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((round[(i, j)] - re(want)).norm() < 1e-13);
            }
        }
    }
}
