//! End-to-end angle estimation from frequency-domain snapshots.
//!
//! `subspace_cs` focuses and smooths all bins before the lifted solve. The
//! other algorithms work on the single bin nearest the focus frequency, as
//! they would without frequency smoothing.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::baselines::{cbf_spectrum, music_spectrum};
use crate::error::{domain, Error, Result};
use crate::model::{build_dictionary, AngleGrid, ArrayGeometry};
use crate::simulator::SnapshotMatrix;
use crate::solvers::{bpdn, choose_delta, reweighted_cs, subspace_cs, SolveDiagnostics, SolverConfig};
use crate::spectral::{estimate_spectral_matrix, focus_and_smooth, SpectralMatrix};
use crate::subspace::{decompose, LiftedSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    SubspaceCs,
    ReweightedCs,
    Bpdn,
    Music,
    Cbf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::SubspaceCs,
        Algorithm::ReweightedCs,
        Algorithm::Bpdn,
        Algorithm::Music,
        Algorithm::Cbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SubspaceCs => "subspace_cs",
            Algorithm::ReweightedCs => "reweighted_cs",
            Algorithm::Bpdn => "bpdn",
            Algorithm::Music => "music",
            Algorithm::Cbf => "cbf",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown algorithm {s:?}")))
    }
}

pub const DEFAULT_DELTA_FACTOR: f64 = 1.0;
pub const DEFAULT_INFEASIBLE_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Number of arrivals `P`; not part of the serialized form, callers set
    /// it from the known path count.
    #[serde(skip)]
    pub num_paths: usize,
    /// Focus frequency in Hz; `None` uses the centre of the observed band.
    pub focus_frequency: Option<f64>,
    /// δ = factor · noise floor for `subspace_cs`.
    pub delta_factor: f64,
    /// When δ is infeasible, retry with `margin ×` the minimal residual.
    /// `0` disables the retry and surfaces the infeasibility.
    pub infeasible_margin: f64,
    /// ε for `bpdn` / `reweighted_cs`; `None` estimates it from the noise
    /// eigenvalues of the reference bin.
    pub epsilon: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            num_paths: 1,
            focus_frequency: None,
            delta_factor: DEFAULT_DELTA_FACTOR,
            infeasible_margin: DEFAULT_INFEASIBLE_MARGIN,
            epsilon: None,
            solver: SolverConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn with_paths(num_paths: usize) -> Self {
        Self {
            num_paths,
            ..Self::default()
        }
    }

    pub fn validate(&self, geom: &ArrayGeometry) -> Result<()> {
        if self.num_paths == 0 || self.num_paths >= geom.num_sensors {
            return domain(format!(
                "number of paths {} must be in [1, {})",
                self.num_paths, geom.num_sensors
            ));
        }
        if !(self.delta_factor.is_finite() && self.delta_factor >= 0.0) {
            return domain(format!("delta_factor must be ≥ 0, got {}", self.delta_factor));
        }
        if !(self.infeasible_margin == 0.0 || (self.infeasible_margin.is_finite() && self.infeasible_margin >= 1.0)) {
            return domain(format!("infeasible_margin must be 0 or ≥ 1, got {}", self.infeasible_margin));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return domain(format!("epsilon must be ≥ 0, got {e}"));
            }
        }
        if let Some(f) = self.focus_frequency {
            if !(f.is_finite() && f > 0.0) {
                return domain(format!("focus frequency must be positive, got {f}"));
            }
        }
        self.solver.validate()
    }
}

/// Spectrum produced by one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub algorithm: Algorithm,
    pub grid: AngleGrid,
    /// Nonnegative per-angle values (powers, magnitudes or pseudo-spectrum).
    pub values: Vec<f64>,
    pub diagnostics: Option<SolveDiagnostics>,
    /// The residual bound was raised to the feasibility margin.
    pub relaxed: bool,
}

/// Shared intermediate results for several algorithms on the same data.
pub struct Estimator<'a> {
    bins: &'a [SnapshotMatrix],
    grid: &'a AngleGrid,
    geom: &'a ArrayGeometry,
    cfg: EstimatorConfig,
    focus: f64,
    reference: usize,
    reference_cov: OnceLock<Result<SpectralMatrix>>,
    smoothed: OnceLock<Result<SpectralMatrix>>,
}

impl<'a> Estimator<'a> {
    pub fn new(bins: &'a [SnapshotMatrix], grid: &'a AngleGrid, geom: &'a ArrayGeometry, cfg: EstimatorConfig) -> Result<Self> {
        geom.validate()?;
        cfg.validate(geom)?;
        if bins.is_empty() {
            return domain("no frequency bins");
        }
        if let Some(b) = bins.iter().find(|b| b.num_sensors() != geom.num_sensors) {
            return Err(Error::Dimension(format!(
                "snapshots have {} sensors, array has {}",
                b.num_sensors(),
                geom.num_sensors
            )));
        }
        let lo = bins.iter().map(|b| b.frequency).fold(f64::INFINITY, f64::min);
        let hi = bins.iter().map(|b| b.frequency).fold(f64::NEG_INFINITY, f64::max);
        let focus = cfg.focus_frequency.unwrap_or(0.5 * (lo + hi));
        let reference = bins
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.frequency - focus).abs().total_cmp(&(b.1.frequency - focus).abs()))
            .map(|(i, _)| i)
            .expect("bins is not empty");
        Ok(Self {
            bins,
            grid,
            geom,
            cfg,
            focus,
            reference,
            reference_cov: OnceLock::new(),
            smoothed: OnceLock::new(),
        })
    }

    pub fn focus_frequency(&self) -> f64 {
        self.focus
    }

    /// The bin used by the single-frequency algorithms.
    pub fn reference_bin(&self) -> &SnapshotMatrix {
        &self.bins[self.reference]
    }

    pub fn reference_covariance(&self) -> Result<&SpectralMatrix> {
        self.reference_cov
            .get_or_init(|| estimate_spectral_matrix(self.reference_bin()))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn smoothed_covariance(&self) -> Result<&SpectralMatrix> {
        self.smoothed
            .get_or_init(|| focus_and_smooth(self.bins, self.focus, self.grid, self.geom))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `√(σ̂² M L)` with σ̂² the mean of the `M − P` smallest reference-bin
    /// eigenvalues: the expected Frobenius norm of `L` noise snapshots.
    pub fn noise_norm(&self, snapshots: usize) -> Result<f64> {
        let ev = self.reference_covariance()?.eigenvalues();
        let tail = &ev[self.cfg.num_paths..];
        let sigma2 = (tail.iter().sum::<f64>() / tail.len() as f64).max(0.0);
        Ok((sigma2 * self.geom.num_sensors as f64 * snapshots as f64).sqrt())
    }

    pub fn run(&self, algorithm: Algorithm) -> Result<Estimate> {
        let p = self.cfg.num_paths;
        let freq = self.reference_bin().frequency;
        match algorithm {
            Algorithm::Music => {
                let s = music_spectrum(self.reference_covariance()?, p, self.grid, self.geom, freq)?;
                Ok(self.pseudo(algorithm, s.values))
            }
            Algorithm::Cbf => {
                let s = cbf_spectrum(self.reference_covariance()?, self.grid, self.geom, freq)?;
                Ok(self.pseudo(algorithm, s.values))
            }
            Algorithm::Bpdn => {
                let dict = build_dictionary(self.grid, freq, self.geom)?;
                let y = self.reference_bin().data.column(0).into_owned();
                let eps = match self.cfg.epsilon {
                    Some(e) => e,
                    None => self.noise_norm(1)?,
                };
                let cfg = SolverConfig { epsilon: eps, ..self.cfg.solver };
                let s = bpdn(&dict, &y, &cfg)?;
                Ok(self.sparse(algorithm, s.magnitude(), s.diagnostics, false))
            }
            Algorithm::ReweightedCs => {
                let dict = build_dictionary(self.grid, freq, self.geom)?;
                let y = &self.reference_bin().data;
                let eps = match self.cfg.epsilon {
                    Some(e) => e,
                    None => self.noise_norm(y.ncols())?,
                };
                let cfg = SolverConfig { epsilon: eps, ..self.cfg.solver };
                let s = reweighted_cs(&dict, y, &cfg)?;
                Ok(self.sparse(algorithm, s.magnitude(), s.diagnostics, false))
            }
            Algorithm::SubspaceCs => {
                let dec = decompose(self.smoothed_covariance()?, p)?;
                let dict = build_dictionary(self.grid, self.focus, self.geom)?;
                let lifted = LiftedSystem::from_decomposition(&dec, &dict)?;
                let delta = choose_delta(&dec, self.cfg.delta_factor);
                let cfg = SolverConfig { epsilon: delta, ..self.cfg.solver };
                match subspace_cs(&lifted, &cfg) {
                    Ok(s) => Ok(self.sparse(algorithm, s.magnitude(), s.diagnostics, false)),
                    Err(Error::Infeasible { min_residual, .. }) if self.cfg.infeasible_margin > 0.0 => {
                        let relaxed = SolverConfig {
                            epsilon: self.cfg.infeasible_margin * min_residual,
                            ..cfg
                        };
                        let s = subspace_cs(&lifted, &relaxed)?;
                        Ok(self.sparse(algorithm, s.magnitude(), s.diagnostics, true))
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }

    fn pseudo(&self, algorithm: Algorithm, values: Vec<f64>) -> Estimate {
        Estimate {
            algorithm,
            grid: self.grid.clone(),
            values,
            diagnostics: None,
            relaxed: false,
        }
    }

    fn sparse(&self, algorithm: Algorithm, values: Vec<f64>, diagnostics: SolveDiagnostics, relaxed: bool) -> Estimate {
        Estimate {
            algorithm,
            grid: self.grid.clone(),
            values,
            diagnostics: Some(diagnostics),
            relaxed,
        }
    }
}

/// Runs one algorithm; see [`Estimator`] to share work across several.
pub fn estimate(
    algorithm: Algorithm,
    bins: &[SnapshotMatrix],
    grid: &AngleGrid,
    geom: &ArrayGeometry,
    cfg: EstimatorConfig,
) -> Result<Estimate> {
    Estimator::new(bins, grid, geom, cfg)?.run(algorithm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RaypathSet;
    use crate::simulator::{synthesize_broadband, Coherence, NoiseSpec};

    fn geom() -> ArrayGeometry {
        ArrayGeometry::new(11, 0.5, 1.0).unwrap()
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("capon".parse::<Algorithm>().is_err());
    }

    #[test]
    fn every_algorithm_finds_a_single_path() {
        let grid = AngleGrid::uniform(-40.0, 40.0, 1.0).unwrap();
        let paths = RaypathSet::from_angles(&[7.0]).unwrap();
        let bins = synthesize_broadband(&paths, (0.9, 1.1), 8, 20, Coherence::Coherent, NoiseSpec::new(20.0, 3), &geom()).unwrap();
        let geom = geom();
        let est = Estimator::new(&bins, &grid, &geom, EstimatorConfig::with_paths(1)).unwrap();
        for a in Algorithm::ALL {
            let e = est.run(a).unwrap();
            assert_eq!(e.values.len(), grid.len());
            assert_eq!(grid.angles()[argmax(&e.values)], 7.0, "{a}");
        }
    }

    #[test]
    fn reference_bin_is_nearest_to_focus() {
        let grid = AngleGrid::uniform(-40.0, 40.0, 1.0).unwrap();
        let paths = RaypathSet::from_angles(&[7.0]).unwrap();
        let bins = synthesize_broadband(&paths, (0.9, 1.1), 5, 2, Coherence::Coherent, NoiseSpec::noiseless(0), &geom()).unwrap();
        let geom = geom();
        let est = Estimator::new(&bins, &grid, &geom, EstimatorConfig::with_paths(1)).unwrap();
        assert!((est.focus_frequency() - 1.0).abs() < 1e-12);
        assert!((est.reference_bin().frequency - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let grid = AngleGrid::uniform(-40.0, 40.0, 1.0).unwrap();
        let paths = RaypathSet::from_angles(&[7.0]).unwrap();
        let bins = synthesize_broadband(&paths, (0.9, 1.1), 2, 2, Coherence::Coherent, NoiseSpec::noiseless(0), &geom()).unwrap();
        assert!(Estimator::new(&bins, &grid, &geom(), EstimatorConfig::with_paths(11)).is_err());
        assert!(Estimator::new(&[], &grid, &geom(), EstimatorConfig::with_paths(1)).is_err());
        let other = ArrayGeometry::new(8, 0.5, 1.0).unwrap();
        assert!(matches!(
            Estimator::new(&bins, &grid, &other, EstimatorConfig::with_paths(1)),
            Err(Error::Dimension(_))
        ));
        let mut cfg = EstimatorConfig::with_paths(1);
        cfg.infeasible_margin = 0.5;
        assert!(Estimator::new(&bins, &grid, &geom(), cfg).is_err());
    }
}
