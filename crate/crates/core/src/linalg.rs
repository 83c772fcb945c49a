//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::C64;

/// `‖A − Aᴴ‖_F / ‖A‖_F`, zero for the zero matrix.
pub fn hermitian_defect(a: &DMatrix<C64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / norm
}

pub fn hermitian_part(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
///
/// The sort is stable, so exactly tied eigenvalues keep the solver's order.
pub fn hermitian_eigen(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// `Σ_k w_k v_k v_kᴴ` over the given eigenpair columns.
pub fn weighted_outer_sum(values: &[f64], vectors: &DMatrix<C64>, cols: std::ops::Range<usize>) -> DMatrix<C64> {
    let n = vectors.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in cols {
        let v = vectors.column(k);
        out += (v.clone() * v.adjoint()).scale(values[k]);
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
