use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};

/// Minimum-cost perfect matching of rows to columns (Hungarian method with
/// potentials). Entry `i` of the result is the column assigned to row `i`.
/// Among equally cheap matchings the lexicographically smallest is returned.
pub fn linear_sum_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(dim_err(format!(
            "assignment needs a square cost matrix, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    let n = cost.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let best = assignment_cost(cost, &hungarian(cost));
    let scale = cost.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let slack = 1e-12 * scale * n as f64;

    // Fix rows one at a time to the smallest column that keeps the optimum.
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    for row in 0..n {
        let mut chosen = None;
        for col in 0..n {
            if fixed.contains(&col) {
                continue;
            }
            let mut trial = fixed.clone();
            trial.push(col);
            if completed_cost(cost, &trial) <= best + slack {
                chosen = Some(col);
                break;
            }
        }
        // The column from the unconstrained optimum always qualifies, so this
        // only trips on pathological rounding; fall back to the first free one.
        let col = chosen.unwrap_or_else(|| (0..n).find(|c| !fixed.contains(c)).unwrap());
        fixed.push(col);
        debug_assert_eq!(fixed.len(), row + 1);
    }
    Ok(fixed)
}

/// Total cost of a permutation.
pub fn assignment_cost(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

/// Cost of the best completion when the first rows are pinned to `prefix`.
fn completed_cost(cost: &DMatrix<f64>, prefix: &[usize]) -> f64 {
    let n = cost.nrows();
    let k = prefix.len();
    let pinned: f64 = prefix.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    if k == n {
        return pinned;
    }
    let free: Vec<usize> = (0..n).filter(|c| !prefix.contains(c)).collect();
    let sub = DMatrix::from_fn(n - k, n - k, |i, j| cost[(k + i, free[j])]);
    pinned + assignment_cost(&sub, &hungarian(&sub))
}

fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based potentials; index 0 is a virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search in lexicographic order, keeping the first strict minimum.
    pub(crate) fn brute_force(cost: &DMatrix<f64>) -> Vec<usize> {
        fn rec(cost: &DMatrix<f64>, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
            let n = cost.nrows();
            if cur.len() == n {
                let c = assignment_cost(cost, cur);
                if c < best.0 {
                    *best = (c, cur.clone());
                }
                return;
            }
            for j in 0..n {
                if !cur.contains(&j) {
                    cur.push(j);
                    rec(cost, cur, best);
                    cur.pop();
                }
            }
        }
        let mut best = (f64::INFINITY, Vec::new());
        rec(cost, &mut Vec::new(), &mut best);
        best.1
    }

    #[test]
    fn picks_the_zeros() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(linear_sum_assignment(&c).unwrap(), vec![1, 0]);
    }

    #[test]
    fn two_by_two() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.0]);
        let p = linear_sum_assignment(&c).unwrap();
        assert_eq!(p, vec![0, 1]);
        assert_eq!(assignment_cost(&c, &p), 1.0);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let c = DMatrix::from_element(4, 4, 2.5);
        assert_eq!(linear_sum_assignment(&c).unwrap(), vec![0, 1, 2, 3]);
        let c = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 5.0, 0.0, 0.0, 5.0, 5.0, 5.0, 0.0]);
        assert_eq!(linear_sum_assignment(&c).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=6 {
            for _ in 0..10 {
                let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
                assert_eq!(linear_sum_assignment(&c).unwrap(), brute_force(&c));
            }
        }
    }

    #[test]
    fn transpose_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = DMatrix::from_fn(5, 5, |_, _| rng.random_range(0.0..1.0));
        let p = linear_sum_assignment(&c).unwrap();
        let q = linear_sum_assignment(&c.transpose()).unwrap();
        for (i, &j) in p.iter().enumerate() {
            assert_eq!(q[j], i);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(linear_sum_assignment(&DMatrix::zeros(2, 3)).is_err());
        assert!(linear_sum_assignment(&DMatrix::from_element(2, 2, f64::NAN)).is_err());
        assert!(linear_sum_assignment(&DMatrix::zeros(0, 0)).unwrap().is_empty());
    }
}
