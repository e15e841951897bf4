//! The 4D-Var cost function of one assimilation window, its gradient, and
//! the solvers that minimise it.
//!
//! For a window starting at `t` with background `x_B`, the cost is
//!
//! ```text
//! J(x) = ½ (x_B − x)ᵀ B⁻¹ (x_B − x) + ½ Σ_τ (y_τ − G_τ x)ᵀ R_τ⁻¹ (y_τ − G_τ x)
//! ```
//!
//! where `G_τ = H_τ M^k` maps the initial state to the predicted observations
//! `k` model steps into the window. `J` is a strictly convex quadratic whose
//! Hessian `B⁻¹ + Σ G_τᵀ R_τ⁻¹ G_τ` is SPD whenever `B` and every `R_τ` are.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::dynamics::TangentLinearModel;
use crate::error::{domain, Error, Result};
use crate::grid::{GridGeometry, StateLayout, StateVector};
use crate::obs_operator::ObsOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceRole {
    Background,
    Observation,
}

/// Symmetric positive-definite error covariance with its factorization.
#[derive(Debug, Clone)]
pub struct Covariance {
    role: CovarianceRole,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

const EIGEN_CHECK_MAX_DIM: usize = 64;

impl Covariance {
    pub fn new(role: CovarianceRole, matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || !matrix.is_square() {
            return Err(domain("covariance must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(domain("covariance has non-finite entries"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(domain(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        if n <= EIGEN_CHECK_MAX_DIM {
            let min_eig = SymmetricEigen::new(matrix.clone()).eigenvalues.min();
            if min_eig <= 0.0 {
                return Err(Error::Numeric(format!(
                    "covariance is not positive definite (smallest eigenvalue {min_eig:e})"
                )));
            }
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::Numeric("Cholesky factorization of covariance failed".into()))?;
        let inverse = symmetrize(chol.inverse());
        Ok(Self {
            role,
            matrix,
            inverse,
        })
    }

    /// Background covariance; entries coupling different compositions must be zero.
    pub fn background(matrix: DMatrix<f64>, layout: &StateLayout) -> Result<Self> {
        if matrix.nrows() != layout.len() {
            return Err(domain(format!(
                "background covariance is {}×{}, layout needs n = {}",
                matrix.nrows(),
                matrix.ncols(),
                layout.len()
            )));
        }
        let p = layout.n_compositions();
        for ((i, j), v) in matrix
            .iter()
            .enumerate()
            .map(|(idx, v)| ((idx % matrix.nrows(), idx / matrix.nrows()), v))
        {
            if i % p != j % p && *v != 0.0 {
                return Err(domain(format!(
                    "background covariance couples compositions at ({i}, {j})"
                )));
            }
        }
        Self::new(CovarianceRole::Background, matrix)
    }

    /// Per-composition blocks `σ² exp(−d/ℓ)` over centroid distance `d`.
    pub fn background_exponential(
        grid: &GridGeometry,
        layout: &StateLayout,
        sigma: f64,
        length: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0 && length > 0.0) {
            return Err(domain("background sigma and length scale must be positive"));
        }
        let corr = exponential_correlation(grid, length);
        let p = layout.n_compositions();
        let n = layout.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            if i % p == j % p {
                sigma * sigma * corr[(i / p, j / p)]
            } else {
                0.0
            }
        });
        Self::background(matrix, layout)
    }

    /// `σ² I` of size `m`.
    pub fn observation_diagonal(m: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(domain(format!("observation sigma must be positive, got {sigma}")));
        }
        Self::new(
            CovarianceRole::Observation,
            DMatrix::from_diagonal_element(m, m, sigma * sigma),
        )
    }

    pub fn role(&self) -> CovarianceRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `factor · C`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.role, &self.matrix * factor)
    }
}

/// `exp(−d/ℓ)` between every pair of centroids.
pub fn exponential_correlation(grid: &GridGeometry, length: f64) -> DMatrix<f64> {
    let n = grid.n_cells();
    DMatrix::from_fn(n, n, |i, j| (-grid.distance(i, j) / length).exp())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Observations collected at one step offset of a window.
#[derive(Debug, Clone)]
pub struct WindowObservation {
    pub offset: usize,
    pub values: DVector<f64>,
    pub operator: Arc<ObsOperator>,
    pub error: Arc<Covariance>,
}

/// Everything needed to evaluate and minimise `J` for one window.
#[derive(Debug, Clone)]
pub struct WindowProblem {
    background: StateVector,
    b: Arc<Covariance>,
    observations: Vec<WindowObservation>,
    tlm: Arc<TangentLinearModel>,
    steps_per_window: usize,
}

impl WindowProblem {
    pub fn new(
        background: StateVector,
        b: Arc<Covariance>,
        observations: Vec<WindowObservation>,
        tlm: Arc<TangentLinearModel>,
        steps_per_window: usize,
    ) -> Result<Self> {
        let n = background.len();
        if b.dim() != n || tlm.dim() != n {
            return Err(domain(format!(
                "background length {n}, B is {}, M is {}",
                b.dim(),
                tlm.dim()
            )));
        }
        for obs in &observations {
            if obs.offset > steps_per_window {
                return Err(domain(format!(
                    "observation offset {} outside window of {steps_per_window} steps",
                    obs.offset
                )));
            }
            let m = obs.values.len();
            if obs.operator.n_state() != n || obs.operator.n_obs() != m || obs.error.dim() != m {
                return Err(domain(format!(
                    "observation block at offset {} has mismatched dimensions",
                    obs.offset
                )));
            }
            if obs.values.iter().any(|v| !v.is_finite()) {
                return Err(domain("observation values must be finite"));
            }
        }
        Ok(Self {
            background,
            b,
            observations,
            tlm,
            steps_per_window,
        })
    }

    pub fn background(&self) -> &StateVector {
        &self.background
    }

    pub fn b(&self) -> &Arc<Covariance> {
        &self.b
    }

    pub fn observations(&self) -> &[WindowObservation] {
        &self.observations
    }

    pub fn tlm(&self) -> &Arc<TangentLinearModel> {
        &self.tlm
    }

    pub fn steps_per_window(&self) -> usize {
        self.steps_per_window
    }

    pub fn dim(&self) -> usize {
        self.background.len()
    }

    /// Same problem with the observation values replaced.
    pub fn with_observation_values(&self, values: &[DVector<f64>]) -> Result<Self> {
        if values.len() != self.observations.len() {
            return Err(domain("one value vector per observation time is required"));
        }
        let observations = self
            .observations
            .iter()
            .zip(values)
            .map(|(o, v)| WindowObservation {
                values: v.clone(),
                ..o.clone()
            })
            .collect();
        Self::new(
            self.background.clone(),
            Arc::clone(&self.b),
            observations,
            Arc::clone(&self.tlm),
            self.steps_per_window,
        )
    }

    pub fn with_background(&self, background: StateVector) -> Result<Self> {
        Self::new(
            background,
            Arc::clone(&self.b),
            self.observations.clone(),
            Arc::clone(&self.tlm),
            self.steps_per_window,
        )
    }

    /// Same problem with every observation covariance multiplied by `factor`.
    pub fn with_scaled_observation_errors(&self, factor: f64) -> Result<Self> {
        let observations = self
            .observations
            .iter()
            .map(|o| {
                Ok(WindowObservation {
                    error: Arc::new(o.error.scaled(factor)?),
                    ..o.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.background.clone(),
            Arc::clone(&self.b),
            observations,
            Arc::clone(&self.tlm),
            self.steps_per_window,
        )
    }

    /// `G_τ = H_τ M^k` for observation block `i`.
    pub fn forward_operator(&self, i: usize) -> DMatrix<f64> {
        let obs = &self.observations[i];
        obs.operator.to_dense() * self.tlm.power(obs.offset).as_ref()
    }

    /// `B⁻¹ + Σ G_τᵀ R_τ⁻¹ G_τ`
    pub fn hessian(&self) -> DMatrix<f64> {
        let mut hess = self.b.inverse().clone();
        for (i, obs) in self.observations.iter().enumerate() {
            let g = self.forward_operator(i);
            hess += g.transpose() * obs.error.inverse() * &g;
        }
        symmetrize(hess)
    }

    /// `B⁻¹ x_B + Σ G_τᵀ R_τ⁻¹ y_τ`
    pub fn rhs(&self) -> DVector<f64> {
        let mut rhs = self.b.inverse() * self.background.values();
        for (i, obs) in self.observations.iter().enumerate() {
            let g = self.forward_operator(i);
            rhs += g.transpose() * (obs.error.inverse() * &obs.values);
        }
        rhs
    }

    fn predicted(&self, obs: &WindowObservation, x: &DVector<f64>) -> DVector<f64> {
        obs.operator.apply(&self.tlm.propagate(x, obs.offset))
    }

    /// Matrix-free Hessian-vector product.
    fn hessian_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.b.inverse() * v;
        for (i, obs) in self.observations.iter().enumerate() {
            let gv = self.predicted(obs, v);
            let weighted = obs.error.inverse() * gv;
            out += self.forward_operator_transpose_apply(i, &weighted);
        }
        out
    }

    fn forward_operator_transpose_apply(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        let obs = &self.observations[i];
        let mut ht_w = DVector::zeros(self.dim());
        for (r, row) in obs.operator.rows().iter().enumerate() {
            for &(c, weight) in row {
                ht_w[c] += weight * w[r];
            }
        }
        self.tlm.power(obs.offset).tr_mul(&ht_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ClosedForm,
    ConjugateGradient,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::ClosedForm => "closed_form",
            SolverKind::ConjugateGradient => "conjugate_gradient",
        }
    }
}

/// Minimiser of `J` for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub x_a: StateVector,
    pub j_at_min: f64,
    pub gradient_norm: f64,
    pub solver: SolverKind,
    pub iterations: usize,
}

fn check_state(p: &WindowProblem, x: &StateVector) -> Result<()> {
    if x.len() != p.dim() {
        return Err(domain(format!(
            "state length {} does not match problem dimension {}",
            x.len(),
            p.dim()
        )));
    }
    Ok(())
}

/// `J(x)`.
pub fn eval_j(p: &WindowProblem, x: &StateVector) -> Result<f64> {
    check_state(p, x)?;
    let x = x.values();
    let db = p.background.values() - x;
    let mut j = 0.5 * db.dot(&(p.b.inverse() * &db));
    for obs in &p.observations {
        let r = &obs.values - p.predicted(obs, x);
        j += 0.5 * r.dot(&(obs.error.inverse() * &r));
    }
    Ok(j)
}

/// `∇J(x) = −B⁻¹(x_B − x) − Σ G_τᵀ R_τ⁻¹ (y_τ − G_τ x)`.
pub fn grad_j(p: &WindowProblem, x: &StateVector) -> Result<DVector<f64>> {
    check_state(p, x)?;
    Ok(gradient(p, x.values()))
}

fn gradient(p: &WindowProblem, x: &DVector<f64>) -> DVector<f64> {
    let db = p.background.values() - x;
    let mut g = -(p.b.inverse() * db);
    for (i, obs) in p.observations.iter().enumerate() {
        let r = &obs.values - p.predicted(obs, x);
        let w = obs.error.inverse() * r;
        g -= p.forward_operator_transpose_apply(i, &w);
    }
    g
}

fn factor_hessian(p: &WindowProblem) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(p.hessian()).ok_or_else(|| Error::Numeric("Hessian of J is not positive definite".into()))
}

fn finish(p: &WindowProblem, x: DVector<f64>, solver: SolverKind, iterations: usize) -> Result<AnalysisResult> {
    let gradient_norm = gradient(p, &x).norm();
    let x_a = StateVector::new(x, p.background.time_index())
        .map_err(|e| Error::Numeric(format!("analysis is not finite: {e}")))?;
    let j_at_min = eval_j(p, &x_a)?;
    Ok(AnalysisResult {
        x_a,
        j_at_min,
        gradient_norm,
        solver,
        iterations,
    })
}

/// Solve the normal equations `(B⁻¹ + Σ GᵀR⁻¹G) x = B⁻¹x_B + Σ GᵀR⁻¹y` directly.
pub fn solve_closed_form(p: &WindowProblem) -> Result<AnalysisResult> {
    let chol = factor_hessian(p)?;
    let x = chol.solve(&p.rhs());
    finish(p, x, SolverKind::ClosedForm, 0)
}

/// Conjugate-gradient minimisation starting from the background.
pub fn solve_iterative(p: &WindowProblem, tol: f64, max_iter: usize) -> Result<AnalysisResult> {
    solve_iterative_from(p, p.background.values().clone(), tol, max_iter)
}

/// Conjugate-gradient minimisation from an explicit start; stops once the
/// true gradient norm is at most `tol`.
pub fn solve_iterative_from(
    p: &WindowProblem,
    start: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<AnalysisResult> {
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    if start.len() != p.dim() {
        return Err(domain("start vector has the wrong length"));
    }
    let mut x = start;
    let mut r = -gradient(p, &x);
    let mut iterations = 0;
    'outer: loop {
        if r.norm() <= tol {
            break;
        }
        let mut d = r.clone();
        let mut rr = r.norm_squared();
        loop {
            if iterations >= max_iter {
                return Err(Error::Convergence {
                    iterations,
                    gradient_norm: gradient(p, &x).norm(),
                });
            }
            let hd = p.hessian_apply(&d);
            let curvature = d.dot(&hd);
            if !(curvature > 0.0) {
                return Err(Error::Numeric(format!(
                    "non-positive curvature {curvature:e} in conjugate gradient"
                )));
            }
            let alpha = rr / curvature;
            x.axpy(alpha, &d, 1.0);
            r.axpy(-alpha, &hd, 1.0);
            iterations += 1;
            let rr_new = r.norm_squared();
            if rr_new.sqrt() <= tol {
                // Recursive residuals drift; confirm against the true gradient
                // and restart from it if needed.
                r = -gradient(p, &x);
                continue 'outer;
            }
            d = &r + &d * (rr_new / rr);
            rr = rr_new;
        }
    }
    finish(p, x, SolverKind::ConjugateGradient, iterations)
}

/// Coefficients of the analysis as an affine map of its inputs:
/// `x_A = L x_B + Σ K_τ y_τ`.
#[derive(Debug, Clone)]
pub struct GainOperators {
    pub l: DMatrix<f64>,
    pub k: Vec<DMatrix<f64>>,
}

impl GainOperators {
    pub fn apply(&self, background: &DVector<f64>, values: &[DVector<f64>]) -> DVector<f64> {
        let mut x = &self.l * background;
        for (k, y) in self.k.iter().zip(values) {
            x += k * y;
        }
        x
    }
}

/// `L = A⁻¹B⁻¹`, `K_τ = A⁻¹G_τᵀR_τ⁻¹` with `A` the Hessian of `J`.
pub fn gain_operators(p: &WindowProblem) -> Result<GainOperators> {
    let chol = factor_hessian(p)?;
    let l = chol.solve(p.b.inverse());
    let k = (0..p.observations.len())
        .map(|i| {
            let g = p.forward_operator(i);
            chol.solve(&(g.transpose() * p.observations[i].error.inverse()))
        })
        .collect();
    Ok(GainOperators { l, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar_problem(xb: f64, y: Option<f64>) -> WindowProblem {
        let b = Arc::new(Covariance::new(CovarianceRole::Background, dmatrix![1.0]).unwrap());
        let tlm = Arc::new(TangentLinearModel::identity(1, 1.0).unwrap());
        let observations = y
            .map(|y| WindowObservation {
                offset: 0,
                values: DVector::from_element(1, y),
                operator: Arc::new(ObsOperator::selection(1, &[0]).unwrap()),
                error: Arc::new(Covariance::observation_diagonal(1, 1.0).unwrap()),
            })
            .into_iter()
            .collect();
        WindowProblem::new(StateVector::from_slice(&[xb], 0).unwrap(), b, observations, tlm, 1).unwrap()
    }

    fn state(v: f64) -> StateVector {
        StateVector::from_slice(&[v], 0).unwrap()
    }

    #[test]
    fn scalar_cost_and_gradient() {
        let p = scalar_problem(0.0, Some(0.0));
        assert_eq!(eval_j(&p, &state(1.0)).unwrap(), 1.0);
        assert_eq!(grad_j(&p, &state(1.0)).unwrap()[0], 2.0);
    }

    #[test]
    fn scalar_closed_form_and_gains() {
        let p = scalar_problem(0.0, Some(2.0));
        let res = solve_closed_form(&p).unwrap();
        assert!((res.x_a.values()[0] - 1.0).abs() < 1e-15);
        let gains = gain_operators(&p).unwrap();
        assert!((gains.l[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((gains.k[0][(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn no_observations_gives_identity_l() {
        let p = scalar_problem(3.0, None);
        let gains = gain_operators(&p).unwrap();
        assert!((gains.l[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(solve_closed_form(&p).unwrap().x_a.values()[0], 3.0);
    }

    #[test]
    fn iterative_edge_cases() {
        let p = scalar_problem(0.0, Some(2.0));
        let closed = solve_closed_form(&p).unwrap();
        let from_min = solve_iterative_from(&p, closed.x_a.values().clone(), 1e-12, 10).unwrap();
        assert_eq!(from_min.iterations, 0);

        let pure = scalar_problem(4.0, None);
        let one = solve_iterative_from(&pure, DVector::zeros(1), 1e-12, 10).unwrap();
        assert_eq!(one.iterations, 1);
        assert_eq!(one.x_a.values()[0], 4.0);

        assert!(matches!(
            solve_iterative_from(&p, DVector::from_element(1, 100.0), 1e-12, 0),
            Err(Error::Convergence { iterations: 0, .. })
        ));
        assert!(solve_iterative(&p, 0.0, 10).is_err());
    }

    #[test]
    fn covariance_validation() {
        assert!(Covariance::new(CovarianceRole::Background, dmatrix![1.0, 0.5; 0.4, 1.0]).is_err());
        assert!(matches!(
            Covariance::new(CovarianceRole::Background, dmatrix![1.0, 2.0; 2.0, 1.0]),
            Err(Error::Numeric(_))
        ));
        let layout = StateLayout::new(2, 2).unwrap();
        let coupled = dmatrix![
            1.0, 0.1, 0.0, 0.0;
            0.1, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 1.0
        ];
        assert!(Covariance::background(coupled, &layout).is_err());
        let grid = GridGeometry::line(2, 1.0).unwrap();
        let b = Covariance::background_exponential(&grid, &layout, 1.0, 2.0).unwrap();
        assert_eq!(b.matrix()[(0, 1)], 0.0);
        assert!((b.matrix()[(0, 2)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!(Covariance::observation_diagonal(3, 0.0).is_err());
    }

    #[test]
    fn problem_rejects_mismatched_blocks() {
        let p = scalar_problem(0.0, Some(1.0));
        let bad = WindowObservation {
            offset: 0,
            values: DVector::zeros(2),
            operator: Arc::new(ObsOperator::selection(1, &[0]).unwrap()),
            error: Arc::new(Covariance::observation_diagonal(1, 1.0).unwrap()),
        };
        assert!(WindowProblem::new(p.background().clone(), p.b().clone(), vec![bad], p.tlm().clone(), 1).is_err());
        assert!(eval_j(&p, &StateVector::zeros(2, 0)).is_err());
    }

    #[test]
    fn weights_scale_cost() {
        let p = scalar_problem(0.3, Some(1.7));
        let x = state(-0.4);
        let j = eval_j(&p, &x).unwrap();
        let half_b = Arc::new(p.b().scaled(0.5).unwrap());
        let doubled = WindowProblem::new(
            p.background().clone(),
            half_b,
            p.observations().to_vec(),
            p.tlm().clone(),
            1,
        )
        .unwrap()
        .with_scaled_observation_errors(0.5)
        .unwrap();
        assert!((eval_j(&doubled, &x).unwrap() - 2.0 * j).abs() < 1e-14);
    }
}
