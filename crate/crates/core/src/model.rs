//! The four operator families and the `transition_at` contract shared by
//! every predictor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Anything that yields an affine transition `x_{t+1} = A_t x_t + b_t`.
pub trait Dynamics {
    /// State dimension `p`.
    fn dim(&self) -> usize;

    /// Number of transitions the model defines, or `None` when it is
    /// time-invariant and valid for every `t`.
    fn steps(&self) -> Option<usize>;

    /// The operator and offset applied at step `t`.
    fn transition_at(&self, t: usize) -> Result<(DMatrix<f64>, DVector<f64>)>;

    /// Applies the step-`t` transition to `x`.
    fn step(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(dim_err(format!(
                "state has length {}, model dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        let (a, b) = self.transition_at(t)?;
        Ok(a * x + b)
    }

    fn check_index(&self, t: usize) -> Result<()> {
        match self.steps() {
            Some(n) if t >= n => Err(Error::IndexOutOfRange { index: t, limit: n }),
            _ => Ok(()),
        }
    }
}

fn check_finite_mat(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_square(m: &DMatrix<f64>, p: usize, what: &str) -> Result<()> {
    if m.nrows() != p || m.ncols() != p {
        return Err(dim_err(format!(
            "{what} is {}x{}, expected {p}x{p}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Time-invariant affine dynamics `x_{t+1} = A x_t + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "crate::serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub b: DVector<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_square(&a, b.len(), "operator")?;
        check_finite_mat(&a, "operator")?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("offset"));
        }
        Ok(Self { a, b })
    }

    pub fn without_offset(a: DMatrix<f64>) -> Result<Self> {
        let p = a.nrows();
        Self::new(a, DVector::zeros(p))
    }
}

impl Dynamics for LinearModel {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn steps(&self) -> Option<usize> {
        None
    }

    fn transition_at(&self, _t: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        Ok((self.a.clone(), self.b.clone()))
    }

    fn step(&self, _t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(dim_err("state length does not match model"));
        }
        Ok(&self.a * x + &self.b)
    }
}

/// Piecewise-constant affine dynamics driven by a discrete state path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingModel {
    #[serde(with = "crate::serde_mat::matrices")]
    pub operators: Vec<DMatrix<f64>>,
    #[serde(with = "crate::serde_mat::vectors")]
    pub offsets: Vec<DVector<f64>>,
    /// Active state for each transition `t -> t+1`.
    pub state_path: Vec<usize>,
    pub stickiness: f64,
}

impl SwitchingModel {
    pub fn new(
        operators: Vec<DMatrix<f64>>,
        offsets: Vec<DVector<f64>>,
        state_path: Vec<usize>,
        stickiness: f64,
    ) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::InvalidArgument("switching model needs at least one state".into()));
        }
        if offsets.len() != operators.len() {
            return Err(dim_err("one offset per discrete state is required"));
        }
        let p = offsets[0].len();
        for (f, b) in operators.iter().zip(&offsets) {
            check_square(f, p, "state operator")?;
            check_finite_mat(f, "state operator")?;
            if b.len() != p {
                return Err(dim_err("offset lengths differ"));
            }
        }
        if let Some(&z) = state_path.iter().find(|&&z| z >= operators.len()) {
            return Err(Error::InvalidArgument(format!("state label {z} exceeds J")));
        }
        if !(stickiness > 0.0 && stickiness < 1.0) {
            return Err(Error::InvalidArgument("stickiness must lie in (0, 1)".into()));
        }
        Ok(Self {
            operators,
            offsets,
            state_path,
            stickiness,
        })
    }

    pub fn num_states(&self) -> usize {
        self.operators.len()
    }

    /// Indices `t` where `state_path[t] != state_path[t-1]`.
    pub fn switch_indices(&self) -> Vec<usize> {
        switch_indices(&self.state_path)
    }
}

pub fn switch_indices(path: &[usize]) -> Vec<usize> {
    path.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| i + 1)
        .collect()
}

impl Dynamics for SwitchingModel {
    fn dim(&self) -> usize {
        self.offsets[0].len()
    }

    fn steps(&self) -> Option<usize> {
        Some(self.state_path.len())
    }

    fn transition_at(&self, t: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_index(t)?;
        let z = self.state_path[t];
        Ok((self.operators[z].clone(), self.offsets[z].clone()))
    }
}

/// Sparse time-varying mixture of global operators, `A_t = sum_j c_{jt} f_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedModel {
    #[serde(with = "crate::serde_mat::matrices")]
    pub operators: Vec<DMatrix<f64>>,
    /// `J x T`; column `t` weights the operators at step `t`.
    #[serde(with = "crate::serde_mat::matrix")]
    pub coefficients: DMatrix<f64>,
}

impl DecomposedModel {
    /// Requires every operator to have unit Frobenius norm (to 1e-9).
    pub fn new(operators: Vec<DMatrix<f64>>, coefficients: DMatrix<f64>) -> Result<Self> {
        let m = Self::new_unnormalized(operators, coefficients)?;
        for (j, f) in m.operators.iter().enumerate() {
            let n = f.norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "operator {j} has Frobenius norm {n}, expected 1"
                )));
            }
        }
        Ok(m)
    }

    /// Same as [`DecomposedModel::new`] but skips the unit-norm check.
    pub fn new_unnormalized(operators: Vec<DMatrix<f64>>, coefficients: DMatrix<f64>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::InvalidArgument("decomposed model needs at least one operator".into()));
        }
        let p = operators[0].nrows();
        for f in &operators {
            check_square(f, p, "basis operator")?;
            check_finite_mat(f, "basis operator")?;
        }
        if coefficients.nrows() != operators.len() {
            return Err(dim_err(format!(
                "coefficients have {} rows for {} operators",
                coefficients.nrows(),
                operators.len()
            )));
        }
        check_finite_mat(&coefficients, "coefficients")?;
        Ok(Self {
            operators,
            coefficients,
        })
    }

    pub fn num_operators(&self) -> usize {
        self.operators.len()
    }

    /// `sum_j c_j f_j` for an arbitrary coefficient vector.
    pub fn combine(&self, c: &DVector<f64>) -> DMatrix<f64> {
        combine_operators(&self.operators, c)
    }

    /// Rescales every operator to unit Frobenius norm, moving the norm into
    /// the matching coefficient row so each `A_t` is unchanged.
    pub fn normalize(&mut self) {
        for (j, f) in self.operators.iter_mut().enumerate() {
            let n = f.norm();
            if n > 0.0 {
                *f /= n;
                let mut row = self.coefficients.row_mut(j);
                row *= n;
            }
        }
    }
}

pub fn combine_operators(operators: &[DMatrix<f64>], c: &DVector<f64>) -> DMatrix<f64> {
    let p = operators[0].nrows();
    let mut out = DMatrix::zeros(p, p);
    for (f, &cj) in operators.iter().zip(c.iter()) {
        if cj != 0.0 {
            out += f * cj;
        }
    }
    out
}

impl Dynamics for DecomposedModel {
    fn dim(&self) -> usize {
        self.operators[0].nrows()
    }

    fn steps(&self) -> Option<usize> {
        Some(self.coefficients.ncols())
    }

    fn transition_at(&self, t: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_index(t)?;
        let c = self.coefficients.column(t).into_owned();
        Ok((self.combine(&c), DVector::zeros(self.dim())))
    }
}

/// One operator (and optional offset) per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingModel {
    #[serde(with = "crate::serde_mat::matrices")]
    pub operators: Vec<DMatrix<f64>>,
    #[serde(with = "crate::serde_mat::opt_vectors", default)]
    pub offsets: Option<Vec<DVector<f64>>>,
}

impl TimeVaryingModel {
    pub fn new(operators: Vec<DMatrix<f64>>, offsets: Option<Vec<DVector<f64>>>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::InvalidArgument("time-varying model needs at least one operator".into()));
        }
        let p = operators[0].nrows();
        for a in &operators {
            check_square(a, p, "time-varying operator")?;
            check_finite_mat(a, "time-varying operator")?;
        }
        if let Some(bs) = &offsets {
            if bs.len() != operators.len() || bs.iter().any(|b| b.len() != p) {
                return Err(dim_err("offsets must match operators in count and dimension"));
            }
        }
        Ok(Self { operators, offsets })
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }
}

impl Dynamics for TimeVaryingModel {
    fn dim(&self) -> usize {
        self.operators[0].nrows()
    }

    fn steps(&self) -> Option<usize> {
        Some(self.operators.len())
    }

    fn transition_at(&self, t: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_index(t)?;
        let b = match &self.offsets {
            Some(bs) => bs[t].clone(),
            None => DVector::zeros(self.dim()),
        };
        Ok((self.operators[t].clone(), b))
    }

    fn step(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_index(t)?;
        if x.len() != self.dim() {
            return Err(dim_err("state length does not match model"));
        }
        let mut y = &self.operators[t] * x;
        if let Some(bs) = &self.offsets {
            y += &bs[t];
        }
        Ok(y)
    }
}

/// Any of the four families, for serialization and dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Linear(LinearModel),
    Switching(SwitchingModel),
    Decomposed(DecomposedModel),
    TimeVarying(TimeVaryingModel),
}

impl Model {
    fn inner(&self) -> &dyn Dynamics {
        match self {
            Model::Linear(m) => m,
            Model::Switching(m) => m,
            Model::Decomposed(m) => m,
            Model::TimeVarying(m) => m,
        }
    }
}

impl Dynamics for Model {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn steps(&self) -> Option<usize> {
        self.inner().steps()
    }

    fn transition_at(&self, t: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.inner().transition_at(t)
    }

    fn step(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.inner().step(t, x)
    }
}

impl From<LinearModel> for Model {
    fn from(m: LinearModel) -> Self {
        Model::Linear(m)
    }
}

impl From<SwitchingModel> for Model {
    fn from(m: SwitchingModel) -> Self {
        Model::Switching(m)
    }
}

impl From<DecomposedModel> for Model {
    fn from(m: DecomposedModel) -> Self {
        Model::Decomposed(m)
    }
}

impl From<TimeVaryingModel> for Model {
    fn from(m: TimeVaryingModel) -> Self {
        Model::TimeVarying(m)
    }
}
