//! Nonnegative ℓ1 recovery by homotopy.
//!
//! `min 1ᵀx  s.t.  x ≥ 0,  ‖A x − b‖₂ ≤ δ`
//!
//! The solution coincides with the nonnegative LASSO
//! `½‖Ax − b‖² + λ 1ᵀx, x ≥ 0` at the λ where the residual equals δ. The
//! LASSO solution is piecewise linear in λ, so the path is followed exactly
//! from `λ_max = max Aᵀb` downwards, one active-set event at a time, until
//! the residual reaches δ. Reaching `λ = 0` first means δ is below the
//! nonnegative least-squares residual, i.e. infeasible.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct PathOutcome {
    pub x: DVector<f64>,
    #[allow(dead_code)]
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub feasible: bool,
    /// Relative KKT violation at the final λ.
    pub optimality: f64,
    /// Residual never increased along the path.
    pub monotone: bool,
}

enum Event {
    Join(usize),
    Leave(usize),
    Residual,
    End,
}

/// Follows the path down to residual `delta`. Never fails: an infeasible
/// `delta` returns the λ = 0 end point with `feasible = false`.
pub(crate) fn nonneg_l1(a: &DMatrix<f64>, b: &DVector<f64>, delta: f64, max_iters: usize) -> PathOutcome {
    let q = a.ncols();
    let b_norm = b.norm();
    let corr0 = a.tr_mul(b);
    let lambda_max = corr0.max();
    let zero = || DVector::zeros(q);

    if b_norm <= delta {
        return PathOutcome {
            x: zero(),
            lambda: lambda_max.max(0.0),
            residual: b_norm,
            iterations: 0,
            feasible: true,
            optimality: 0.0,
            monotone: true,
        };
    }
    if lambda_max <= 0.0 {
        return PathOutcome {
            x: zero(),
            lambda: 0.0,
            residual: b_norm,
            iterations: 0,
            feasible: false,
            optimality: 0.0,
            monotone: true,
        };
    }

    let mut active: Vec<usize> = vec![corr0.imax()];
    let mut blocked = vec![false; q];
    let mut lambda = lambda_max;
    let mut residual = b_norm;
    let mut monotone = true;
    let mut iterations = 0;
    let mut x = zero();

    while iterations < max_iters {
        iterations += 1;
        let k = active.len();
        let sub = DMatrix::from_fn(a.nrows(), k, |i, j| a[(i, active[j])]);
        let gram = sub.tr_mul(&sub);
        let chol = match gram.cholesky() {
            Some(c) => c,
            None => {
                // the last column made the active set dependent
                let j = active.pop().expect("active set is never empty here");
                blocked[j] = true;
                if active.is_empty() {
                    break;
                }
                continue;
            }
        };
        let s_b = chol.solve(&sub.tr_mul(b));
        let d = chol.solve(&DVector::from_element(k, 1.0));
        // x_A(λ) = s_b − λ d,  r(λ) = r_b + λ v
        let r_b = b - &sub * &s_b;
        let v = &sub * &d;
        let alpha = a.tr_mul(&r_b);
        let beta = a.tr_mul(&v);

        let below = |l: f64| l >= 0.0 && l < lambda * (1.0 - 1e-13);
        let mut next = 0.0;
        let mut event = Event::End;

        for j in 0..q {
            if blocked[j] || active.contains(&j) {
                continue;
            }
            let denom = 1.0 - beta[j];
            if denom <= 0.0 {
                continue;
            }
            let l = alpha[j] / denom;
            if below(l) && l > next {
                next = l;
                event = Event::Join(j);
            }
        }
        for (i, &j) in active.iter().enumerate() {
            if d[i] >= 0.0 {
                continue;
            }
            let l = s_b[i] / d[i];
            if below(l) && l > next {
                next = l;
                event = Event::Leave(j);
            }
        }
        // ‖r_b + λ v‖ = δ on the segment [next, lambda]
        let end_res = (&r_b + &v * next).norm();
        if end_res <= delta {
            let (aa, bb, cc) = (v.norm_squared(), 2.0 * r_b.dot(&v), r_b.norm_squared() - delta * delta);
            let disc = (bb * bb - 4.0 * aa * cc).max(0.0).sqrt();
            let root = if aa > 0.0 { (-bb + disc) / (2.0 * aa) } else { next };
            next = root.clamp(next, lambda);
            event = Event::Residual;
        }

        lambda = next;
        let xs = &s_b - &d * lambda;
        x.fill(0.0);
        for (i, &j) in active.iter().enumerate() {
            x[j] = xs[i].max(0.0);
        }
        let new_res = (b - a * &x).norm();
        monotone &= new_res <= residual * (1.0 + 1e-9) + 1e-300;
        residual = new_res;

        match event {
            Event::Join(j) => active.push(j),
            Event::Leave(j) => {
                active.retain(|&i| i != j);
                x[j] = 0.0;
                if active.is_empty() {
                    break;
                }
            }
            Event::Residual | Event::End => break,
        }
    }

    // δ near the floor sits at the round-off level of ‖b‖
    let feasible = residual <= delta * (1.0 + 1e-9) + 1e-13 * b_norm;
    let optimality = kkt_violation(a, b, &x, lambda, lambda_max);
    PathOutcome {
        x,
        lambda,
        residual,
        iterations,
        feasible,
        optimality,
        monotone,
    }
}

/// `max(max_j (c_j − λ)_+, max_{x_j>0} |c_j − λ|) / λ_max` with `c = Aᵀ(b − Ax)`.
pub(crate) fn kkt_violation(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, lambda: f64, lambda_max: f64) -> f64 {
    let c = a.tr_mul(&(b - a * x));
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let v = if x[j] > 0.0 { (c[j] - lambda).abs() } else { (c[j] - lambda).max(0.0) };
        worst = worst.max(v);
    }
    worst / lambda_max.max(f64::MIN_POSITIVE)
}
