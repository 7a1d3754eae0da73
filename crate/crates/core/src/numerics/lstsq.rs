use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};

/// `min_W ||targets - design W||_F^2 + ridge ||W||_F^2`.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub design: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub ridge: f64,
}

impl RidgeProblem {
    pub fn new(design: DMatrix<f64>, targets: DMatrix<f64>, ridge: f64) -> Self {
        Self { design, targets, ridge }
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: DMatrix<f64>,
    /// Numerical rank of the design.
    pub rank: usize,
    /// Set when the unregularized design is rank deficient and the
    /// minimum-norm solution was returned.
    pub degenerate: bool,
}

/// Solves the ridge problem through a singular value decomposition of the
/// design. With `ridge == 0` and a rank-deficient design this is the
/// minimum-norm solution.
pub fn solve_least_squares(problem: &RidgeProblem) -> Result<DMatrix<f64>> {
    solve_least_squares_detailed(problem).map(|s| s.coefficients)
}

pub fn solve_least_squares_detailed(problem: &RidgeProblem) -> Result<LeastSquares> {
    let RidgeProblem { design, targets, ridge } = problem;
    let (n, m) = design.shape();
    if n == 0 || m == 0 {
        return Err(dim_err("least squares needs a non-empty design"));
    }
    if targets.nrows() != n {
        return Err(dim_err(format!(
            "design has {n} rows but targets have {}",
            targets.nrows()
        )));
    }
    if !(ridge.is_finite() && *ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares inputs"));
    }

    let svd = design.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = s_max * (n.max(m) as f64) * f64::EPSILON;
    let rank = s.iter().filter(|&&x| x > cutoff).count();

    // W = V diag(s / (s^2 + ridge)) U^T Y, dropping numerically null directions.
    let mut projected = u.transpose() * targets;
    for (i, mut row) in projected.row_iter_mut().enumerate() {
        let si = s[i];
        let gain = if si > cutoff || (*ridge > 0.0 && si > 0.0) {
            si / (si * si + ridge)
        } else {
            0.0
        };
        row *= gain;
    }
    let coefficients = v_t.transpose() * projected;
    Ok(LeastSquares {
        coefficients,
        rank,
        degenerate: rank < m && *ridge == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_design_returns_targets() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = solve_least_squares(&RidgeProblem::new(DMatrix::identity(3, 3), y.clone(), 0.0)).unwrap();
        assert!((w - y).norm() < 1e-12);
    }

    #[test]
    fn inconsistent_pair_gives_mean() {
        let d = DMatrix::from_element(2, 1, 1.0);
        let y = DMatrix::from_column_slice(2, 1, &[1.0, 3.0]);
        let w = solve_least_squares(&RidgeProblem::new(d, y, 0.0)).unwrap();
        assert!((w[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random(&mut rng, 50, 5);
        let y = random(&mut rng, 50, 1);
        let w = solve_least_squares(&RidgeProblem::new(d.clone(), y.clone(), 0.0)).unwrap();
        let r = y - &d * w;
        assert!((d.transpose() * r).norm() < 1e-8);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        // Two identical columns: the minimum-norm solution splits the weight.
        let col = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = DMatrix::from_fn(3, 2, |i, _| col[(i, 0)]);
        let y = &col * 2.0;
        let s = solve_least_squares_detailed(&RidgeProblem::new(d, y, 0.0)).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.rank, 1);
        assert!((s.coefficients[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.coefficients[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_matches_augmented_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random(&mut rng, 20, 4);
        let y = random(&mut rng, 20, 2);
        let lam: f64 = 0.7;
        let w = solve_least_squares(&RidgeProblem::new(d.clone(), y.clone(), lam)).unwrap();
        // Stationarity of the ridge objective.
        let g = d.transpose() * (&d * &w - &y) + &w * lam;
        assert!(g.norm() < 1e-10);
    }

    #[test]
    fn tiny_ridge_is_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random(&mut rng, 30, 4);
        let y = random(&mut rng, 30, 1);
        let w0 = solve_least_squares(&RidgeProblem::new(d.clone(), y.clone(), 0.0)).unwrap();
        let w1 = solve_least_squares(&RidgeProblem::new(d, y, 1e-12)).unwrap();
        assert!((w0 - w1).norm() < 1e-6);
    }

    #[test]
    fn rejects_non_finite() {
        let d = DMatrix::from_element(2, 1, f64::NAN);
        let y = DMatrix::zeros(2, 1);
        assert!(matches!(
            solve_least_squares(&RidgeProblem::new(d, y, 0.0)),
            Err(Error::NonFinite(_))
        ));
    }
}
