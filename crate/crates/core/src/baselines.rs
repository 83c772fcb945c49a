//! MUSIC and conventional (Bartlett) beamforming.

use crate::error::{domain, Error, Result};
use crate::estimate::Algorithm;
use crate::model::{build_dictionary, AngleGrid, ArrayGeometry};
use crate::spectral::SpectralMatrix;
use crate::subspace::decompose;

/// Nonnegative spectrum over an angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSpectrum {
    pub grid: AngleGrid,
    pub values: Vec<f64>,
    pub algorithm: Algorithm,
}

impl PseudoSpectrum {
    /// Copy scaled to unit maximum (unchanged if the maximum is zero).
    pub fn normalized(&self) -> Self {
        let peak = self.values.iter().copied().fold(0.0, f64::max);
        let mut out = self.clone();
        if peak > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= peak);
        }
        out
    }
}

fn check(spectral: &SpectralMatrix, geom: &ArrayGeometry) -> Result<()> {
    geom.validate()?;
    if spectral.dim() != geom.num_sensors {
        return Err(Error::Dimension(format!(
            "spectral matrix is {0}×{0}, array has {1} sensors",
            spectral.dim(),
            geom.num_sensors
        )));
    }
    Ok(())
}

/// `1 / (‖E_nᴴ g(θ)‖² + η)` with `η = 1e-12·M`.
pub fn music_spectrum(
    spectral: &SpectralMatrix,
    num_signals: usize,
    grid: &AngleGrid,
    geom: &ArrayGeometry,
    frequency: f64,
) -> Result<PseudoSpectrum> {
    check(spectral, geom)?;
    let dec = decompose(spectral, num_signals)?;
    let en = dec.noise_basis();
    let dict = build_dictionary(grid, frequency, geom)?;
    let eta = 1e-12 * geom.num_sensors as f64;
    let proj = en.adjoint() * &dict.matrix;
    let values = proj
        .column_iter()
        .map(|c| 1.0 / (c.norm_squared() + eta))
        .collect();
    Ok(PseudoSpectrum {
        grid: grid.clone(),
        values,
        algorithm: Algorithm::Music,
    })
}

/// `g(θ)ᴴ R̂ g(θ) / M²`.
pub fn cbf_spectrum(
    spectral: &SpectralMatrix,
    grid: &AngleGrid,
    geom: &ArrayGeometry,
    frequency: f64,
) -> Result<PseudoSpectrum> {
    check(spectral, geom)?;
    if !(frequency.is_finite() && frequency > 0.0) {
        return domain(format!("frequency must be positive, got {frequency}"));
    }
    let dict = build_dictionary(grid, frequency, geom)?;
    let m2 = (geom.num_sensors * geom.num_sensors) as f64;
    let rg = &spectral.matrix * &dict.matrix;
    let values = rg
        .column_iter()
        .zip(dict.matrix.column_iter())
        .map(|(rg, g)| (g.dotc(&rg).re / m2).max(0.0))
        .collect();
    Ok(PseudoSpectrum {
        grid: grid.clone(),
        values,
        algorithm: Algorithm::Cbf,
    })
}
