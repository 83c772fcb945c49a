//! Sparse recovery over an angle grid.
//!
//! * [`bpdn`]: single-snapshot basis-pursuit denoising,
//!   `min ‖s‖₁ s.t. ‖G s − y‖₂ ≤ ε`.
//! * [`reweighted_cs`]: iteratively reweighted ℓ1 over one or many
//!   snapshots, with weights `1 / (ŝ_q + ξ)` built from per-row ℓ1 norms.
//! * [`subspace_cs`]: nonnegative recovery of path powers from the lifted
//!   signal-subspace covariance, `min 1ᵀs′ s.t. s′ ≥ 0, ‖r_V − G′ s′‖₂ ≤ δ`.
//!
//! Every solve is deterministic and single threaded.

mod complex_l1;
mod nonneg;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{AngleGrid, SteeringDictionary};
use crate::subspace::{LiftedSystem, SubspaceDecomposition};
use crate::C64;

/// Default `ξ` relative to the largest first-pass row norm.
pub const DEFAULT_XI_RELATIVE: f64 = 1e-3;

/// Floor on δ relative to `‖r_V‖`.
pub const DELTA_FLOOR_RELATIVE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Residual bound: `ε` for [`bpdn`] / [`reweighted_cs`], `δ` for [`subspace_cs`].
    pub epsilon: f64,
    /// Absolute `ξ`; `None` uses [`DEFAULT_XI_RELATIVE`] × the first-pass maximum.
    pub reweight_xi: Option<f64>,
    pub max_reweight_iters: usize,
    /// Reweighting stops when `‖ŝ^{k+1} − ŝ^k‖∞ ≤ reweight_tol · ‖ŝ^{k+1}‖∞`.
    pub reweight_tol: f64,
    /// First-order optimality tolerance of the inner solves.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            reweight_xi: None,
            max_reweight_iters: 10,
            reweight_tol: 1e-6,
            inner_tol: 1e-10,
            inner_max_iters: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return domain(format!("residual bound must be ≥ 0, got {}", self.epsilon));
        }
        if let Some(xi) = self.reweight_xi {
            if !(xi.is_finite() && xi > 0.0) {
                return domain(format!("ξ must be positive, got {xi}"));
            }
        }
        if !(self.inner_tol > 0.0 && self.reweight_tol > 0.0) {
            return domain("tolerances must be positive");
        }
        if self.inner_max_iters == 0 {
            return domain("inner_max_iters must be positive");
        }
        Ok(())
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Relative first-order optimality violation.
    pub optimality: f64,
    /// The inner objective (or path residual) never increased.
    pub monotone: bool,
    /// Residual bound actually enforced.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumValues {
    /// Complex amplitudes, Q×L.
    Complex(DMatrix<C64>),
    /// Nonnegative path powers.
    Power(Vec<f64>),
}

/// Recovered sparse vector over an angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectrum {
    pub grid: AngleGrid,
    pub values: SpectrumValues,
    pub diagnostics: SolveDiagnostics,
}

impl SparseSpectrum {
    /// Per-angle magnitude: mean |s_ql| over snapshots, or the power itself.
    pub fn magnitude(&self) -> Vec<f64> {
        match &self.values {
            SpectrumValues::Complex(s) => s
                .row_iter()
                .map(|row| row.iter().map(|z| z.norm()).sum::<f64>() / s.ncols() as f64)
                .collect(),
            SpectrumValues::Power(p) => p.clone(),
        }
    }
}

fn check_dims(dict: &SteeringDictionary, rows: usize) -> Result<()> {
    if dict.num_sensors() != rows {
        return Err(Error::Dimension(format!(
            "dictionary has {} sensors, data has {rows}",
            dict.num_sensors()
        )));
    }
    Ok(())
}

/// Single-snapshot basis-pursuit denoising.
pub fn bpdn(dict: &SteeringDictionary, y: &DVector<C64>, cfg: &SolverConfig) -> Result<SparseSpectrum> {
    cfg.validate()?;
    check_dims(dict, y.len())?;
    let y = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let weights = vec![1.0; dict.grid.len()];
    let out = complex_l1::solve(&dict.matrix, &y, &weights, cfg.epsilon, cfg.inner_tol, cfg.inner_max_iters);
    Ok(SparseSpectrum {
        grid: dict.grid.clone(),
        diagnostics: SolveDiagnostics {
            iterations: out.iterations,
            residual: out.residual,
            objective: out.objective,
            converged: out.converged,
            optimality: out.optimality,
            monotone: out.monotone,
            bound: cfg.epsilon,
        },
        values: SpectrumValues::Complex(out.coefficients),
    })
}

/// Trace of a reweighted solve, for inspecting the fixed point.
#[derive(Debug, Clone)]
pub struct ReweightTrace {
    pub spectrum: SparseSpectrum,
    /// Weights used in the final pass.
    pub weights: Vec<f64>,
    /// Row ℓ1 norms of the previous pass.
    pub previous_rows: Vec<f64>,
    pub xi: f64,
    pub passes: usize,
}

fn row_l1(s: &DMatrix<C64>) -> Vec<f64> {
    s.row_iter().map(|row| row.iter().map(|z| z.norm()).sum()).collect()
}

/// Reweighted ℓ1 over the snapshots in `y` (M×L).
pub fn reweighted_cs(dict: &SteeringDictionary, y: &DMatrix<C64>, cfg: &SolverConfig) -> Result<SparseSpectrum> {
    Ok(reweighted_cs_trace(dict, y, cfg)?.spectrum)
}

/// [`reweighted_cs`] returning the final weights as well.
pub fn reweighted_cs_trace(dict: &SteeringDictionary, y: &DMatrix<C64>, cfg: &SolverConfig) -> Result<ReweightTrace> {
    cfg.validate()?;
    check_dims(dict, y.nrows())?;
    if y.ncols() == 0 {
        return domain("reweighted recovery needs at least one snapshot");
    }
    let q = dict.grid.len();
    let mut weights = vec![1.0; q];
    let mut out = complex_l1::solve(&dict.matrix, y, &weights, cfg.epsilon, cfg.inner_tol, cfg.inner_max_iters);
    let mut rows = row_l1(&out.coefficients);
    let mut previous_rows = vec![0.0; q];
    let xi = cfg
        .reweight_xi
        .unwrap_or_else(|| DEFAULT_XI_RELATIVE * rows.iter().copied().fold(0.0, f64::max))
        .max(f64::MIN_POSITIVE);
    let mut iterations = out.iterations;
    let mut monotone = out.monotone;
    let mut passes = 1;

    while passes < cfg.max_reweight_iters.max(1) {
        weights = rows.iter().map(|r| 1.0 / (r + xi)).collect();
        let next = complex_l1::solve(
            &dict.matrix,
            y,
            &weights,
            cfg.epsilon,
            cfg.inner_tol,
            cfg.inner_max_iters,
        );
        iterations += next.iterations;
        monotone &= next.monotone;
        passes += 1;
        let next_rows = row_l1(&next.coefficients);
        let change = rows.iter().zip(&next_rows).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next_rows.iter().copied().fold(0.0, f64::max);
        previous_rows = std::mem::replace(&mut rows, next_rows);
        out = next;
        if change <= cfg.reweight_tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let spectrum = SparseSpectrum {
        grid: dict.grid.clone(),
        diagnostics: SolveDiagnostics {
            iterations,
            residual: out.residual,
            objective: out.objective,
            converged: out.converged,
            optimality: out.optimality,
            monotone,
            bound: cfg.epsilon,
        },
        values: SpectrumValues::Complex(out.coefficients),
    };
    Ok(ReweightTrace {
        spectrum,
        weights,
        previous_rows,
        xi,
        passes,
    })
}

fn realify(lifted: &LiftedSystem) -> (DMatrix<f64>, DVector<f64>) {
    let (n, q) = lifted.g_lift.shape();
    let a = DMatrix::from_fn(2 * n, q, |i, j| {
        let z = lifted.g_lift[(i % n, j)];
        if i < n {
            z.re
        } else {
            z.im
        }
    });
    let b = DVector::from_fn(2 * n, |i, _| {
        let z = lifted.r_v[i % n];
        if i < n {
            z.re
        } else {
            z.im
        }
    });
    (a, b)
}

/// Nonnegative path powers from the lifted system; `cfg.epsilon` is `δ`.
///
/// Fails with [`Error::Infeasible`] carrying the smallest achievable
/// residual when no nonnegative `s′` meets `δ`.
pub fn subspace_cs(lifted: &LiftedSystem, cfg: &SolverConfig) -> Result<SparseSpectrum> {
    cfg.validate()?;
    if cfg.epsilon <= 0.0 {
        return domain("δ must be positive");
    }
    let (a, b) = realify(lifted);
    let path = nonneg::nonneg_l1(&a, &b, cfg.epsilon, cfg.inner_max_iters.min(100 * a.ncols() + 100));
    if !path.feasible {
        return Err(Error::Infeasible {
            bound: cfg.epsilon,
            min_residual: path.residual,
        });
    }
    let powers: Vec<f64> = path.x.iter().map(|&v| v.max(0.0)).collect();
    Ok(SparseSpectrum {
        grid: lifted.grid.clone(),
        diagnostics: SolveDiagnostics {
            iterations: path.iterations,
            residual: path.residual,
            objective: powers.iter().sum(),
            converged: path.optimality <= cfg.inner_tol.max(1e-9),
            optimality: path.optimality,
            monotone: path.monotone,
            bound: cfg.epsilon,
        },
        values: SpectrumValues::Power(powers),
    })
}

/// Residual bound for [`subspace_cs`]: `factor · √(Σ_{k>P} λ_k²)`, floored at
/// `1e-9 · ‖r_V‖` so it is always positive. `factor = 0` gives the floor
/// (interpolation mode).
pub fn choose_delta(dec: &SubspaceDecomposition, factor: f64) -> f64 {
    let noise: f64 = dec.eigenvalues[dec.num_signals..].iter().map(|v| v * v).sum::<f64>().sqrt();
    let floor = DELTA_FLOOR_RELATIVE * dec.signal.norm();
    (factor * noise).max(floor).max(f64::MIN_POSITIVE)
}
