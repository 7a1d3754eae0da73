use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct L1Options {
    pub max_iters: usize,
    /// Stop once successive iterates differ by less than this in the max norm.
    pub tol: f64,
    /// Nesterov momentum (FISTA). Plain ISTA when false.
    pub accelerated: bool,
}

impl Default for L1Options {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-8,
            accelerated: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub coefficients: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `0.5 ||y - D c||^2 + l1 ||c||_1 + l2 ||c||^2`.
pub fn l1_objective(design: &DMatrix<f64>, targets: &DVector<f64>, l1: f64, l2: f64, c: &DVector<f64>) -> f64 {
    let r = targets - design * c;
    0.5 * r.norm_squared() + l1 * c.lp_norm(1) + l2 * c.norm_squared()
}

fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Proximal-gradient solver for the elastic-net objective [`l1_objective`],
/// fixed step `1/L`. Returns the best iterate seen; `converged` is false
/// when `max_iters` ran out first.
pub fn solve_l1(
    design: &DMatrix<f64>,
    targets: &DVector<f64>,
    l1: f64,
    l2: f64,
    warm_start: Option<&DVector<f64>>,
    opts: L1Options,
) -> Result<L1Solution> {
    let (n, m) = design.shape();
    if targets.len() != n {
        return Err(dim_err("targets length differs from design rows"));
    }
    if !(l1.is_finite() && l1 >= 0.0 && l2.is_finite() && l2 >= 0.0) {
        return Err(Error::InvalidArgument("l1 and l2 weights must be finite and >= 0".into()));
    }
    if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("l1 problem"));
    }
    let mut x = match warm_start {
        Some(w) if w.len() == m => w.clone(),
        Some(_) => return Err(dim_err("warm start has wrong length")),
        None => DVector::zeros(m),
    };

    let gram = design.transpose() * design;
    let dty = design.transpose() * targets;
    let s_max = design.singular_values().iter().cloned().fold(0.0, f64::max);
    let lipschitz = s_max * s_max + 2.0 * l2;
    if lipschitz == 0.0 {
        // Zero design and no ridge: the prox of the l1 term alone.
        let z = DVector::zeros(m);
        let objective = l1_objective(design, targets, l1, l2, &z);
        return Ok(L1Solution {
            coefficients: z,
            objective,
            iterations: 0,
            converged: true,
        });
    }
    let step = 1.0 / lipschitz;

    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut best = x.clone();
    let mut best_obj = l1_objective(design, targets, l1, l2, &x);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let grad = &gram * &y - &dty + &y * (2.0 * l2);
        let mut next = &y - grad * step;
        next.apply(|v| *v = soft_threshold(*v, l1 * step));

        let moved = (&next - &x).amax();
        if opts.accelerated {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            y = &next + (&next - &x) * beta;
            theta = theta_next;
        } else {
            y = next.clone();
        }
        x = next;

        let obj = l1_objective(design, targets, l1, l2, &x);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from(&x);
        }
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(L1Solution {
        coefficients: best,
        objective: best_obj,
        iterations,
        converged,
    })
}

/// Coordinate descent on the same objective, given the Gram matrix `D^T D`,
/// `D^T y` and `y^T y`. Suited to few columns and many rows; each sweep costs
/// `O(m^2)` regardless of the row count.
pub fn solve_l1_gram(
    gram: &DMatrix<f64>,
    dty: &DVector<f64>,
    yty: f64,
    l1: f64,
    l2: f64,
    warm_start: Option<&DVector<f64>>,
    opts: L1Options,
) -> Result<L1Solution> {
    let m = dty.len();
    if gram.shape() != (m, m) {
        return Err(dim_err("Gram matrix does not match the correlation vector"));
    }
    if !(l1.is_finite() && l1 >= 0.0 && l2.is_finite() && l2 >= 0.0) {
        return Err(Error::InvalidArgument("l1 and l2 weights must be finite and >= 0".into()));
    }
    if gram.iter().chain(dty.iter()).any(|v| !v.is_finite()) || !yty.is_finite() {
        return Err(Error::NonFinite("l1 problem"));
    }
    let mut c = match warm_start {
        Some(w) if w.len() == m => w.clone(),
        Some(_) => return Err(dim_err("warm start has wrong length")),
        None => DVector::zeros(m),
    };
    let objective = |c: &DVector<f64>| {
        0.5 * (c.dot(&(gram * c)) - 2.0 * c.dot(dty) + yty) + l1 * c.lp_norm(1) + l2 * c.norm_squared()
    };
    // Running D^T D c, updated per coordinate.
    let mut gc = gram * &c;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        iterations = it;
        let mut moved = 0.0_f64;
        for j in 0..m {
            let denom = gram[(j, j)] + 2.0 * l2;
            let old = c[j];
            let new = if denom > 0.0 {
                let rho = dty[j] - (gc[j] - gram[(j, j)] * old);
                soft_threshold(rho, l1) / denom
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                for i in 0..m {
                    gc[i] += gram[(i, j)] * delta;
                }
                c[j] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    let obj = objective(&c).max(0.0);
    Ok(L1Solution {
        coefficients: c,
        objective: obj,
        iterations,
        converged,
    })
}
