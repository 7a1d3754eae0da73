//! Dense numerical kernels shared by the solvers.

mod assignment;
mod eigen;
mod l1;
mod lstsq;

pub use assignment::{assignment_cost, linear_sum_assignment};
pub use eigen::eigenvalues;
pub use l1::{l1_objective, solve_l1, solve_l1_gram, L1Options, L1Solution};
pub use lstsq::{solve_least_squares, solve_least_squares_detailed, LeastSquares, RidgeProblem};
