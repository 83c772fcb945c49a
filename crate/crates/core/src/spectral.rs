//! Spectral (covariance) matrix estimation and broadband frequency smoothing.
//!
//! Coherent raypaths produce a rank-deficient covariance at any single
//! frequency. Averaging covariances from many bins after mapping each onto
//! the focus frequency decorrelates paths with distinct delays and restores
//! the signal-subspace rank.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigen, hermitian_part, median};
use crate::model::{build_dictionary, ArrayGeometry, AngleGrid};
use crate::simulator::SnapshotMatrix;
use crate::C64;

/// Focusing fits with a cross-matrix condition number above this are rejected.
pub const MAX_FOCUSING_CONDITION: f64 = 1e12;

/// Hermitian PSD covariance estimate `R̂` at `focus_frequency`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    pub matrix: DMatrix<C64>,
    pub num_snapshots: usize,
    pub focus_frequency: f64,
}

impl SpectralMatrix {
    /// Wraps an externally supplied covariance, checking Hermitian symmetry.
    pub fn from_matrix(matrix: DMatrix<C64>, num_snapshots: usize, focus_frequency: f64) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!("covariance must be square, got {:?}", matrix.shape())));
        }
        let defect = hermitian_defect(&matrix);
        if defect > 1e-10 {
            return domain(format!("covariance is not Hermitian (relative defect {defect:.3e})"));
        }
        Ok(Self {
            matrix: hermitian_part(&matrix),
            num_snapshots,
            focus_frequency,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.matrix).0
    }

    /// Number of eigenvalues above `factor` times the median eigenvalue.
    pub fn rank_above_median(&self, factor: f64) -> usize {
        let vals = self.eigenvalues();
        let floor = factor * median(&vals);
        vals.iter().filter(|&&v| v > floor).count()
    }
}

/// `R̂ = (1/L) Σ_l y_l y_lᴴ`.
pub fn estimate_spectral_matrix(snapshots: &SnapshotMatrix) -> Result<SpectralMatrix> {
    let l = snapshots.num_snapshots();
    if l == 0 {
        return domain("cannot estimate a covariance from zero snapshots");
    }
    let y = &snapshots.data;
    let r = (y * y.adjoint()).unscale(l as f64);
    Ok(SpectralMatrix {
        matrix: hermitian_part(&r),
        num_snapshots: l,
        focus_frequency: snapshots.frequency,
    })
}

/// Unitary map from the array manifold at one frequency onto the focus
/// frequency, fitted over an angle grid.
#[derive(Debug, Clone)]
pub struct FocusingTransform {
    pub matrix: DMatrix<C64>,
    pub source_frequency: f64,
    pub focus_frequency: f64,
    /// `max_θ ‖T g_ν(θ) − g_ν₀(θ)‖ / √M` over the fitting grid.
    pub max_fit_residual: f64,
    /// Condition number of the cross matrix `G_ν₀ G_νᴴ`.
    pub condition: f64,
}

/// Orthogonal-Procrustes focusing: `T = U Vᴴ` where `U Σ Vᴴ = G_ν₀ G_νᴴ`,
/// the unitary matrix minimising `‖T G_ν − G_ν₀‖_F` over the grid.
pub fn focusing_transform(
    frequency: f64,
    focus_frequency: f64,
    grid: &AngleGrid,
    geom: &ArrayGeometry,
) -> Result<FocusingTransform> {
    let source = build_dictionary(grid, frequency, geom)?.matrix;
    let target = build_dictionary(grid, focus_frequency, geom)?.matrix;
    let cross = &target * source.adjoint();
    let svd = cross.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_FOCUSING_CONDITION) {
        return Err(Error::SingularFocusing { frequency_hz: frequency, condition });
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    let matrix = u * v_t;
    let mapped = &matrix * &source;
    let scale = (geom.num_sensors as f64).sqrt();
    let max_fit_residual = (0..grid.len())
        .map(|q| (mapped.column(q) - target.column(q)).norm() / scale)
        .fold(0.0, f64::max);
    Ok(FocusingTransform {
        matrix,
        source_frequency: frequency,
        focus_frequency,
        max_fit_residual,
        condition,
    })
}

/// `(1/B) Σ_b T_b R̂(ν_b) T_bᴴ` with [`focusing_transform`] per bin.
///
/// Bins already at the focus frequency use the identity.
pub fn focus_and_smooth(
    bins: &[SnapshotMatrix],
    focus_frequency: f64,
    grid: &AngleGrid,
    geom: &ArrayGeometry,
) -> Result<SpectralMatrix> {
    if bins.is_empty() {
        return domain("no frequency bins to smooth");
    }
    if !(focus_frequency.is_finite() && focus_frequency > 0.0) {
        return domain(format!("focus frequency must be positive, got {focus_frequency}"));
    }
    let lo = bins.iter().map(|b| b.frequency).fold(f64::INFINITY, f64::min);
    let hi = bins.iter().map(|b| b.frequency).fold(f64::NEG_INFINITY, f64::max);
    if focus_frequency < lo || focus_frequency > hi {
        return domain(format!("focus frequency {focus_frequency} outside band [{lo}, {hi}]"));
    }
    if let Some(b) = bins.iter().find(|b| b.num_sensors() != geom.num_sensors) {
        return Err(Error::Dimension(format!(
            "bin at {} Hz has {} sensors, array has {}",
            b.frequency,
            b.num_sensors(),
            geom.num_sensors
        )));
    }

    let focused: Vec<DMatrix<C64>> = bins
        .par_iter()
        .map(|bin| -> Result<DMatrix<C64>> {
            let r = estimate_spectral_matrix(bin)?.matrix;
            if bin.frequency == focus_frequency {
                return Ok(r);
            }
            let t = focusing_transform(bin.frequency, focus_frequency, grid, geom)?.matrix;
            Ok(&t * r * t.adjoint())
        })
        .collect::<Result<_>>()?;

    let m = geom.num_sensors;
    let sum = focused.iter().fold(DMatrix::zeros(m, m), |acc, r| acc + r);
    Ok(SpectralMatrix {
        matrix: hermitian_part(&sum.unscale(bins.len() as f64)),
        num_snapshots: bins.iter().map(|b| b.num_snapshots()).sum(),
        focus_frequency,
    })
}
