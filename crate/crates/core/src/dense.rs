//! Dense reference implementations, built from explicit 2×2 Kronecker
//! products. Deliberately independent of the bitmask fast path; used as the
//! small-instance oracle (n ≤ 12).

use crate::model::HamiltonianSpec;
use crate::pauli::PauliString;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

const MAX_DENSE_WIDTH: usize = 12;

fn single_site(x: bool, z: bool) -> DMatrix<Complex64> {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    match (x, z) {
        (false, false) => DMatrix::from_row_slice(2, 2, &[l, o, o, l]),
        (true, false) => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        // |0> is the sigma^z = +1 eigenstate; bit set means flipped.
        (false, true) => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        // X * Z (Z acts first).
        (true, true) => DMatrix::from_row_slice(2, 2, &[o, -l, l, o]),
    }
}

/// Dense matrix of a Pauli string, site 0 as the least significant bit.
pub fn pauli_matrix(p: &PauliString) -> DMatrix<Complex64> {
    assert!(p.n() <= MAX_DENSE_WIDTH, "dense oracle limited to {MAX_DENSE_WIDTH} spins");
    let mut m = DMatrix::identity(1, 1);
    for site in (0..p.n()).rev() {
        let factor = single_site(p.x_mask() >> site & 1 == 1, p.z_mask() >> site & 1 == 1);
        m = m.kronecker(&factor);
    }
    m * p.phase().as_complex()
}

/// Dense real symmetric matrix of a Hamiltonian spec.
pub fn hamiltonian_matrix(h: &HamiltonianSpec) -> DMatrix<f64> {
    let dim = 1usize << h.n();
    let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
    for (term, coeff) in h.terms() {
        acc += pauli_matrix(term) * Complex64::new(*coeff, 0.0);
    }
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let v = acc[(i, j)];
            assert!(v.im.abs() < 1e-14, "Hamiltonian must be real in this basis");
            out[(i, j)] = v.re;
        }
        out[(i, i)] += h.constant();
    }
    out
}

/// Ascending eigenvalues and matching eigenvectors of a dense symmetric
/// matrix.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Reference Schrödinger propagation: exact exponential steps of the
/// midpoint-frozen Hamiltonian, each via a full eigendecomposition. O(steps ·
/// dim³); only for oracle comparisons.
pub fn propagate_dense<F>(
    hamiltonian_at: F,
    psi0: &[Complex64],
    total_time: f64,
    steps: usize,
) -> Vec<Complex64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let dim = psi0.len();
    let mut psi = DVector::from_column_slice(psi0);
    let dtau = 1.0 / steps as f64;
    for k in 0..steps {
        let tau_mid = (k as f64 + 0.5) * dtau;
        let h = hamiltonian_at(tau_mid);
        assert_eq!(h.nrows(), dim);
        let eig = SymmetricEigen::new(h);
        // psi <- V exp(-i E dt) V^T psi
        let mut rotated = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        for c in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..dim {
                acc += psi[r] * eig.eigenvectors[(r, c)];
            }
            let angle = -eig.eigenvalues[c] * total_time * dtau;
            rotated[c] = acc * Complex64::new(angle.cos(), angle.sin());
        }
        let mut next = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        for r in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..dim {
                acc += rotated[c] * eig.eigenvectors[(r, c)];
            }
            next[r] = acc;
        }
        psi = next;
    }
    psi.iter().copied().collect()
}
