//! Signal-subspace extraction and the lifted (vectorised-covariance) model.
//!
//! The `P` dominant eigenpairs of the spectral matrix give `R̂ₛ`. Row-stacking
//! `R̂ₛ` yields `r_V`, which is modelled as `G′ S′` where column `q` of `G′` is
//! the row-stacked outer product `g_q g_qᴴ` and `S′ ≥ 0` holds path powers.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigen, weighted_outer_sum};
use crate::model::{AngleGrid, SteeringDictionary};
use crate::spectral::SpectralMatrix;
use crate::C64;

/// Eigen-split of a spectral matrix into signal and noise parts.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    /// Descending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: DMatrix<C64>,
    pub num_signals: usize,
    /// `Σ_{k≤P} λ_k μ_k μ_kᴴ`
    pub signal: DMatrix<C64>,
}

impl SubspaceDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_{k>P} λ_k μ_k μ_kᴴ`
    pub fn noise(&self) -> DMatrix<C64> {
        weighted_outer_sum(&self.eigenvalues, &self.eigenvectors, self.num_signals..self.dim())
    }

    /// Noise-subspace eigenvectors (M × (M−P)).
    pub fn noise_basis(&self) -> DMatrix<C64> {
        self.eigenvectors.columns(self.num_signals, self.dim() - self.num_signals).into_owned()
    }
}

/// Eigendecomposition of `R̂` keeping the `P` largest eigenpairs as the
/// signal subspace. Requires `1 ≤ P < M`.
pub fn decompose(spectral: &SpectralMatrix, num_signals: usize) -> Result<SubspaceDecomposition> {
    let m = spectral.dim();
    if num_signals == 0 || num_signals >= m {
        return domain(format!("signal dimension {num_signals} must be in [1, {m})"));
    }
    let defect = hermitian_defect(&spectral.matrix);
    if defect > 1e-10 {
        return domain(format!("spectral matrix is not Hermitian (relative defect {defect:.3e})"));
    }
    let (eigenvalues, eigenvectors) = hermitian_eigen(&spectral.matrix);
    let signal = weighted_outer_sum(&eigenvalues, &eigenvectors, 0..num_signals);
    Ok(SubspaceDecomposition {
        eigenvalues,
        eigenvectors,
        num_signals,
        signal,
    })
}

/// Row-major stacking: `out[i·M + j] = A[i, j]` (0-based), no conjugation.
pub fn vectorize_rows(a: &DMatrix<C64>) -> DVector<C64> {
    let (rows, cols) = a.shape();
    DVector::from_fn(rows * cols, |k, _| a[(k / cols, k % cols)])
}

/// Inverse of [`vectorize_rows`].
pub fn unvectorize_rows(v: &DVector<C64>, rows: usize) -> Result<DMatrix<C64>> {
    if rows == 0 || !v.len().is_multiple_of(rows) {
        return Err(Error::Dimension(format!("cannot reshape {} entries into {rows} rows", v.len())));
    }
    let cols = v.len() / rows;
    Ok(DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// `r_V`: the row-stacked signal part `R̂ₛ`.
pub fn vectorize_signal_subspace(dec: &SubspaceDecomposition) -> DVector<C64> {
    vectorize_rows(&dec.signal)
}

/// Lifted dictionary `G′` (M²×Q): `G′[i·M + j, q] = G[i, q] · conj(G[j, q])`.
pub fn lift_dictionary(dict: &SteeringDictionary) -> DMatrix<C64> {
    let g = &dict.matrix;
    let (m, q) = g.shape();
    DMatrix::from_fn(m * m, q, |row, col| g[(row / m, col)] * g[(row % m, col)].conj())
}

/// Measurement vector and lifted dictionary for the nonnegative program.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub r_v: DVector<C64>,
    pub g_lift: DMatrix<C64>,
    pub grid: AngleGrid,
}

impl LiftedSystem {
    pub fn new(r_v: DVector<C64>, g_lift: DMatrix<C64>, grid: AngleGrid) -> Result<Self> {
        if r_v.len() != g_lift.nrows() || g_lift.ncols() != grid.len() {
            return Err(Error::Dimension(format!(
                "r_V has {} rows, G′ is {:?}, grid has {} angles",
                r_v.len(),
                g_lift.shape(),
                grid.len()
            )));
        }
        Ok(Self { r_v, g_lift, grid })
    }

    /// Builds `(r_V, G′)` from a decomposition and the focus-frequency dictionary.
    pub fn from_decomposition(dec: &SubspaceDecomposition, dict: &SteeringDictionary) -> Result<Self> {
        if dict.num_sensors() != dec.dim() {
            return Err(Error::Dimension(format!(
                "dictionary has {} sensors, covariance is {}×{}",
                dict.num_sensors(),
                dec.dim(),
                dec.dim()
            )));
        }
        Self::new(vectorize_signal_subspace(dec), lift_dictionary(dict), dict.grid.clone())
    }
}

/// Auto-term (`D1`) and cross-term (`D2`) parts of `G E{SSᴴ} Gᴴ`.
#[derive(Debug, Clone)]
pub struct Interference {
    pub auto_terms: DMatrix<C64>,
    pub cross_terms: DMatrix<C64>,
}

/// `E{SSᴴ}` estimated from sparse amplitude snapshots `S` (Q×L).
pub fn source_covariance(s: &DMatrix<C64>) -> DMatrix<C64> {
    (s * s.adjoint()).unscale(s.ncols().max(1) as f64)
}

/// Splits `G C Gᴴ` (with `C = E{SSᴴ}`, Q×Q) into `D1 = G diag(C) Gᴴ` and
/// `D2 = G offdiag(C) Gᴴ`.
pub fn split_interference(dict: &SteeringDictionary, source_cov: &DMatrix<C64>) -> Result<Interference> {
    let q = dict.matrix.ncols();
    if source_cov.shape() != (q, q) {
        return Err(Error::Dimension(format!(
            "source covariance is {:?}, dictionary has {q} columns",
            source_cov.shape()
        )));
    }
    let diag = DMatrix::from_diagonal(&source_cov.diagonal());
    let off = source_cov - &diag;
    let g = &dict.matrix;
    Ok(Interference {
        auto_terms: g * diag * g.adjoint(),
        cross_terms: g * off * g.adjoint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_dictionary, ArrayGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_psd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        let a = DMatrix::from_fn(m, m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a * a.adjoint()
    }

    #[test]
    fn identity_spectrum_rank_one_signal() {
        let r = SpectralMatrix::from_matrix(DMatrix::identity(5, 5), 1, 1.0).unwrap();
        let dec = decompose(&r, 1).unwrap();
        assert!(dec.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!((dec.signal.trace().re - 1.0).abs() < 1e-12);
        let mu = dec.eigenvectors.column(0);
        assert!((&dec.signal - &mu * mu.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn signal_plus_noise_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in 1..6 {
            let a = random_psd(6, &mut rng);
            let r = SpectralMatrix::from_matrix(a.clone(), 1, 1.0).unwrap();
            let dec = decompose(&r, p).unwrap();
            assert!((&dec.signal + dec.noise() - &a).norm() / a.norm() < 1e-10);
            let gram = dec.eigenvectors.adjoint() * &dec.eigenvectors;
            assert!((gram - DMatrix::<C64>::identity(6, 6)).norm() < 1e-10);
        }
    }

    #[test]
    fn exact_rank_two_is_all_signal() {
        let geom = ArrayGeometry::new(11, 2.5, 1500.0).unwrap();
        let grid = AngleGrid::uniform(-10.0, 10.0, 0.2).unwrap();
        let dict = build_dictionary(&grid, 1500.0, &geom).unwrap();
        let g1 = dict.column(30);
        let g2 = dict.column(70);
        let r = &g1 * g1.adjoint() + (&g2 * g2.adjoint()).scale(0.5);
        let dec = decompose(&SpectralMatrix::from_matrix(r.clone(), 1, 1500.0).unwrap(), 2).unwrap();
        assert!((&dec.signal - &r).norm() / r.norm() < 1e-12);
        assert!(dec.eigenvalues[2..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn invalid_signal_dimension() {
        let r = SpectralMatrix::from_matrix(DMatrix::identity(3, 3), 1, 1.0).unwrap();
        assert!(decompose(&r, 0).is_err());
        assert!(decompose(&r, 3).is_err());
        let mut skew = r.clone();
        skew.matrix[(0, 1)] = c(1.0, 0.0);
        assert!(decompose(&skew, 1).is_err());
    }

    #[test]
    fn row_stacking_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let v = vectorize_rows(&a);
        assert_eq!(v.as_slice(), &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        assert_eq!(unvectorize_rows(&v, 2).unwrap(), a);
        assert!(unvectorize_rows(&v, 3).is_err());
    }

    #[test]
    fn hermitian_stacking_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_psd(4, &mut rng);
        let dec = decompose(&SpectralMatrix::from_matrix(a, 1, 1.0).unwrap(), 2).unwrap();
        let v = vectorize_signal_subspace(&dec);
        for i in 0..4 {
            for j in 0..4 {
                assert!((v[i * 4 + j] - v[j * 4 + i].conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn lifted_column_hand_example() {
        // g = [1, -j]  ->  g gᴴ = [[1, j], [-j, 1]]
        let grid = AngleGrid::new(vec![-30.0, 0.0, 30.0]).unwrap();
        let dict = SteeringDictionary {
            frequency: 1.0,
            matrix: DMatrix::from_row_slice(2, 3, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(0.0, -1.0)]),
            grid,
        };
        let lifted = lift_dictionary(&dict);
        let col: Vec<C64> = lifted.column(2).iter().copied().collect();
        assert_eq!(col, vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]);
        // broadside column is all ones
        assert!(lifted.column(1).iter().all(|z| *z == c(1.0, 0.0)));
    }

    #[test]
    fn lifted_diagonal_rows_are_ones_and_unit_modulus() {
        let geom = ArrayGeometry::new(5, 1.0, 1500.0).unwrap();
        let dict = build_dictionary(&AngleGrid::uniform(-20.0, 20.0, 1.0).unwrap(), 700.0, &geom).unwrap();
        let lifted = lift_dictionary(&dict);
        for i in 0..5 {
            assert!(lifted.row(i * 5 + i).iter().all(|z| (*z - c(1.0, 0.0)).norm() < 1e-14));
        }
        assert!(lifted.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_path_lift_consistency() {
        let geom = ArrayGeometry::new(11, 2.5, 1500.0).unwrap();
        let grid = AngleGrid::uniform(-10.0, 10.0, 0.2).unwrap();
        let dict = build_dictionary(&grid, 1500.0, &geom).unwrap();
        let g = dict.column(44);
        let r = (&g * g.adjoint()).scale(2.5);
        let dec = decompose(&SpectralMatrix::from_matrix(r, 1, 1500.0).unwrap(), 1).unwrap();
        let sys = LiftedSystem::from_decomposition(&dec, &dict).unwrap();
        let expect = sys.g_lift.column(44).scale(2.5);
        assert!((&sys.r_v - expect).norm() < 1e-12);
    }

    #[test]
    fn incoherent_sources_have_no_cross_terms() {
        let geom = ArrayGeometry::new(4, 0.5, 1.0).unwrap();
        let dict = build_dictionary(&AngleGrid::uniform(-60.0, 60.0, 10.0).unwrap(), 1.0, &geom).unwrap();
        let mut cov = DMatrix::zeros(13, 13);
        cov[(2, 2)] = c(1.0, 0.0);
        cov[(9, 9)] = c(0.3, 0.0);
        let parts = split_interference(&dict, &cov).unwrap();
        assert_eq!(parts.cross_terms.norm(), 0.0);
    }

    #[test]
    fn coherent_pair_cross_terms_match_direct_assembly() {
        let geom = ArrayGeometry::new(4, 0.5, 1.0).unwrap();
        let dict = build_dictionary(&AngleGrid::uniform(-60.0, 60.0, 10.0).unwrap(), 1.0, &geom).unwrap();
        let mut s = DMatrix::zeros(13, 1);
        s[(3, 0)] = c(1.0, 0.0);
        s[(8, 0)] = c(1.0, 0.0);
        let parts = split_interference(&dict, &source_covariance(&s)).unwrap();
        let (g1, g2) = (dict.column(3), dict.column(8));
        let cross = &g1 * g2.adjoint() + &g2 * g1.adjoint();
        assert!((&parts.cross_terms - &cross).norm() < 1e-12);
        let auto = &g1 * g1.adjoint() + &g2 * g2.adjoint();
        assert!((&parts.auto_terms - &auto).norm() < 1e-12);
    }

    #[test]
    fn auto_plus_cross_is_full_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geom = ArrayGeometry::new(4, 0.5, 1.0).unwrap();
        let dict = build_dictionary(&AngleGrid::uniform(-60.0, 60.0, 10.0).unwrap(), 1.0, &geom).unwrap();
        let mut s = DMatrix::zeros(13, 6);
        for l in 0..6 {
            s[(1, l)] = c(rng.random(), rng.random());
            s[(7, l)] = c(rng.random(), rng.random());
        }
        let cov = source_covariance(&s);
        let parts = split_interference(&dict, &cov).unwrap();
        let full = &dict.matrix * &s * s.adjoint() * dict.matrix.adjoint() / c(6.0, 0.0);
        assert!((parts.auto_terms + parts.cross_terms - full).norm() < 1e-12);
    }
}
