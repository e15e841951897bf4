//! Nonlinear evolution `m`, its tangent-linear matrix at the zero state, and
//! products of that matrix over several model steps.

use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::grid::{GridGeometry, StateLayout, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `m(x) = A x`
    LinearAdvectionDiffusion,
    /// `m(x) = A x + ε x⊙x`
    QuadraticPerturbed,
}

/// One model step `x ↦ m(x)`.
#[derive(Debug, Clone)]
pub struct NonlinearModel {
    kind: ModelKind,
    advection: f64,
    diffusion: f64,
    quadratic_gain: f64,
    dt: f64,
    linear: DMatrix<f64>,
}

const SPECTRAL_SLACK: f64 = 1e-12;

impl NonlinearModel {
    /// Upwind advection along the first axis plus centred diffusion on every
    /// axis, periodic boundaries, applied independently to each composition.
    pub fn advection_diffusion(
        grid: &GridGeometry,
        layout: &StateLayout,
        advection: f64,
        diffusion: f64,
        dt: f64,
    ) -> Result<Self> {
        Self::on_grid(grid, layout, advection, diffusion, 0.0, dt)
    }

    pub fn quadratic_perturbed(
        grid: &GridGeometry,
        layout: &StateLayout,
        advection: f64,
        diffusion: f64,
        quadratic_gain: f64,
        dt: f64,
    ) -> Result<Self> {
        let mut m = Self::on_grid(grid, layout, advection, diffusion, quadratic_gain, dt)?;
        m.kind = ModelKind::QuadraticPerturbed;
        Ok(m)
    }

    fn on_grid(
        grid: &GridGeometry,
        layout: &StateLayout,
        advection: f64,
        diffusion: f64,
        quadratic_gain: f64,
        dt: f64,
    ) -> Result<Self> {
        check_params(advection, diffusion, quadratic_gain, dt)?;
        if layout.n_cells() != grid.n_cells() {
            return Err(domain("layout and grid disagree on the number of cells"));
        }
        let courant = advection * dt / grid.spacing();
        let mix = diffusion * dt / (grid.spacing() * grid.spacing());
        let stencil = stencil_matrix(grid, courant, mix);
        let radius = stencil_spectral_radius(grid, courant, mix);
        check_radius(radius, diffusion)?;

        let p = layout.n_compositions();
        let n = layout.len();
        let mut linear = DMatrix::zeros(n, n);
        for (i, j, v) in stencil
            .iter()
            .enumerate()
            .map(|(idx, v)| (idx % grid.n_cells(), idx / grid.n_cells(), *v))
        {
            if v != 0.0 {
                for c in 0..p {
                    linear[(i * p + c, j * p + c)] = v;
                }
            }
        }
        Ok(Self {
            kind: ModelKind::LinearAdvectionDiffusion,
            advection,
            diffusion,
            quadratic_gain,
            dt,
            linear,
        })
    }

    /// Linear model with an explicit matrix `A`.
    pub fn linear_from_matrix(matrix: DMatrix<f64>, dt: f64) -> Result<Self> {
        Self::from_matrix(ModelKind::LinearAdvectionDiffusion, matrix, 0.0, dt)
    }

    pub fn quadratic_from_matrix(matrix: DMatrix<f64>, quadratic_gain: f64, dt: f64) -> Result<Self> {
        Self::from_matrix(ModelKind::QuadraticPerturbed, matrix, quadratic_gain, dt)
    }

    fn from_matrix(kind: ModelKind, matrix: DMatrix<f64>, quadratic_gain: f64, dt: f64) -> Result<Self> {
        check_params(0.0, 0.0, quadratic_gain, dt)?;
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(domain("model matrix must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(domain("model matrix has non-finite entries"));
        }
        let radius = matrix
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        check_radius(radius, 0.0)?;
        Ok(Self {
            kind,
            advection: 0.0,
            diffusion: 0.0,
            quadratic_gain,
            dt,
            linear: matrix,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn advection(&self) -> f64 {
        self.advection
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn quadratic_gain(&self) -> f64 {
        match self.kind {
            ModelKind::LinearAdvectionDiffusion => 0.0,
            ModelKind::QuadraticPerturbed => self.quadratic_gain,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.linear.nrows()
    }

    /// The linear part `A`.
    pub fn linear_part(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// `m(x)` for one step.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.linear * x;
        let eps = self.quadratic_gain();
        if eps != 0.0 {
            out.zip_apply(x, |o, v| *o += eps * v * v);
        }
        out
    }

    /// `m(x) − A x`, the part the tangent-linear model drops.
    pub fn defect(&self, x: &DVector<f64>) -> DVector<f64> {
        let eps = self.quadratic_gain();
        x.map(|v| eps * v * v)
    }
}

fn check_params(advection: f64, diffusion: f64, quadratic_gain: f64, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(domain(format!("model step must be positive, got {dt}")));
    }
    if !(diffusion.is_finite() && diffusion >= 0.0) {
        return Err(domain(format!("diffusion must be non-negative, got {diffusion}")));
    }
    if !advection.is_finite() || !quadratic_gain.is_finite() {
        return Err(domain("advection and quadratic gain must be finite"));
    }
    Ok(())
}

fn check_radius(radius: f64, diffusion: f64) -> Result<()> {
    let bound = 1.0 + 10.0 * diffusion;
    if radius > bound + SPECTRAL_SLACK {
        return Err(domain(format!(
            "spectral radius {radius} exceeds stability bound {bound}"
        )));
    }
    Ok(())
}

/// N×N single-composition stencil.
fn stencil_matrix(grid: &GridGeometry, courant: f64, mix: f64) -> DMatrix<f64> {
    let n = grid.n_cells();
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        let upstream = if courant >= 0.0 {
            grid.translate(i, -1, 0)
        } else {
            grid.translate(i, 1, 0)
        };
        a[(i, i)] -= courant.abs();
        a[(i, upstream)] += courant.abs();

        let axes: &[(isize, isize)] = if grid.dim() == 1 {
            &[(1, 0)]
        } else {
            &[(1, 0), (0, 1)]
        };
        for &(dx, dy) in axes {
            a[(i, i)] -= 2.0 * mix;
            a[(i, grid.translate(i, dx, dy))] += mix;
            a[(i, grid.translate(i, -dx, -dy))] += mix;
        }
    }
    a
}

/// The stencil is circulant (block circulant in 2-D) so its eigenvalues are
/// the symbol evaluated at the grid's discrete wavenumbers.
fn stencil_spectral_radius(grid: &GridGeometry, courant: f64, mix: f64) -> f64 {
    let side = grid.side();
    let wave = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / side as f64;
    let ky_range = if grid.dim() == 1 { 1 } else { side };
    let mut radius: f64 = 0.0;
    for kx in 0..side {
        let tx = wave(kx);
        for ky in 0..ky_range {
            let ty = wave(ky);
            let mut re = 1.0 - courant.abs() * (1.0 - tx.cos()) + 2.0 * mix * (tx.cos() - 1.0);
            let im = courant.abs() * tx.sin();
            if grid.dim() == 2 {
                re += 2.0 * mix * (ty.cos() - 1.0);
            }
            radius = radius.max(re.hypot(im));
        }
    }
    radius
}

/// Advance a state by `steps` applications of `m`.
pub fn evolve_nonlinear(model: &NonlinearModel, x: &StateVector, steps: usize) -> Result<StateVector> {
    if steps == 0 {
        return Err(domain("evolve needs at least one step"));
    }
    if x.len() != model.dim() {
        return Err(domain(format!(
            "state length {} does not match model dimension {}",
            x.len(),
            model.dim()
        )));
    }
    let mut v = x.values().clone();
    for step in 1..=steps {
        v = model.apply(&v);
        if v.iter().any(|e| !e.is_finite()) {
            return Err(Error::Overflow { step });
        }
    }
    StateVector::new(v, x.time_index() + steps as u64)
}

/// Jacobian of `m` at the zero state: the quadratic term vanishes there, so
/// this is exactly the linear part for both model kinds.
pub fn tangent_linear_at_zero(model: &NonlinearModel) -> TangentLinearModel {
    TangentLinearModel::new(model.linear.clone(), model.dt)
        .expect("model construction already validated the matrix")
}

/// Time-invariant tangent-linear matrix `M` and its memoized powers.
pub struct TangentLinearModel {
    matrix: DMatrix<f64>,
    dt: f64,
    powers: Mutex<Vec<Arc<DMatrix<f64>>>>,
}

impl TangentLinearModel {
    pub fn new(matrix: DMatrix<f64>, dt: f64) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(domain("tangent-linear matrix must be square and non-empty"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(domain(format!("model step must be positive, got {dt}")));
        }
        let identity = Arc::new(DMatrix::identity(matrix.nrows(), matrix.ncols()));
        Ok(Self {
            matrix,
            dt,
            powers: Mutex::new(vec![identity]),
        })
    }

    pub fn identity(n: usize, dt: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), dt)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `M^k`; `M^0 = I`.
    pub fn power(&self, k: usize) -> Arc<DMatrix<f64>> {
        let mut powers = self.powers.lock().unwrap_or_else(|e| e.into_inner());
        while powers.len() <= k {
            let next = &self.matrix * powers.last().expect("identity is always cached").as_ref();
            powers.push(Arc::new(next));
        }
        Arc::clone(&powers[k])
    }

    /// `M^k x`.
    pub fn propagate(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        self.power(k).as_ref() * x
    }

    /// Product of the one-step matrices taking time `from` to time `to`.
    pub fn propagator_product(&self, from: f64, to: f64) -> Result<Arc<DMatrix<f64>>> {
        Ok(self.power(steps_between(from, to, self.dt)?))
    }
}

impl Clone for TangentLinearModel {
    fn clone(&self) -> Self {
        Self::new(self.matrix.clone(), self.dt).expect("already validated")
    }
}

impl fmt::Debug for TangentLinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TangentLinearModel")
            .field("dim", &self.dim())
            .field("dt", &self.dt)
            .finish()
    }
}

/// Whole number of steps of length `dt` separating two times.
pub fn steps_between(from: f64, to: f64, dt: f64) -> Result<usize> {
    if !(from.is_finite() && to.is_finite()) {
        return Err(domain("times must be finite"));
    }
    if to < from {
        return Err(domain(format!("end time {to} precedes start time {from}")));
    }
    let k = (to - from) / dt;
    let rounded = k.round();
    if (k - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(domain(format!(
            "interval [{from}, {to}] is not a multiple of the step {dt}"
        )));
    }
    Ok(rounded as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn fd_jacobian(m: &NonlinearModel, at: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let n = at.len();
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut plus = at.clone();
            let mut minus = at.clone();
            plus[j] += h;
            minus[j] -= h;
            let col = (m.apply(&plus) - m.apply(&minus)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        jac
    }

    #[test]
    fn identity_dynamics_leave_state_unchanged() {
        let grid = GridGeometry::line(6, 1.0).unwrap();
        let layout = StateLayout::new(6, 2).unwrap();
        let m = NonlinearModel::advection_diffusion(&grid, &layout, 0.0, 0.0, 0.1).unwrap();
        let x = StateVector::from_slice(&[1.0, -2.0, 3.0, 0.5, 4.0, 1.5, 2.0, 2.0, 0.0, 1.0, 7.0, -1.0], 3).unwrap();
        let out = evolve_nonlinear(&m, &x, 5).unwrap();
        assert_eq!(out.values(), x.values());
        assert_eq!(out.time_index(), 8);
    }

    #[test]
    fn half_identity_iterates() {
        let m = NonlinearModel::linear_from_matrix(DMatrix::identity(2, 2) * 0.5, 1.0).unwrap();
        let x = StateVector::from_slice(&[2.0, 2.0], 0).unwrap();
        let out = evolve_nonlinear(&m, &x, 2).unwrap();
        assert_eq!(out.values().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn quadratic_single_step() {
        let m = NonlinearModel::quadratic_from_matrix(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        let x = StateVector::from_slice(&[1.0], 0).unwrap();
        assert_eq!(evolve_nonlinear(&m, &x, 1).unwrap().values()[0], 2.0);
    }

    #[test]
    fn overflow_names_step() {
        let m = NonlinearModel::quadratic_from_matrix(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        let x = StateVector::from_slice(&[10.0], 0).unwrap();
        match evolve_nonlinear(&m, &x, 50) {
            Err(Error::Overflow { step }) => assert!(step > 1 && step < 50),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn unstable_matrix_rejected() {
        assert!(NonlinearModel::linear_from_matrix(DMatrix::identity(2, 2) * 1.5, 1.0).is_err());
        let grid = GridGeometry::line(8, 1.0).unwrap();
        let layout = StateLayout::new(8, 1).unwrap();
        // Courant number 3 is far outside the upwind stability region.
        assert!(NonlinearModel::advection_diffusion(&grid, &layout, 3.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn analytic_radius_matches_eigenvalues() {
        for dim in [1, 2] {
            let grid = GridGeometry::new(dim, 5, 1.0).unwrap();
            let layout = StateLayout::new(grid.n_cells(), 1).unwrap();
            let m = NonlinearModel::advection_diffusion(&grid, &layout, 0.6, 0.1, 0.5).unwrap();
            let numeric = m
                .linear_part()
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            let analytic = stencil_spectral_radius(&grid, 0.3, 0.05);
            assert!((numeric - analytic).abs() < 1e-10, "{numeric} vs {analytic}");
        }
    }

    #[test]
    fn tangent_linear_is_linear_part() {
        let a = dmatrix![0.9, 0.1; 0.1, 0.9];
        let m = NonlinearModel::linear_from_matrix(a.clone(), 0.1).unwrap();
        let tlm = tangent_linear_at_zero(&m);
        assert_eq!(tlm.matrix(), &a);
        let fd = fd_jacobian(&m, &DVector::zeros(2), 1e-5);
        assert!((fd - &a).abs().max() <= 1e-12);

        let q = NonlinearModel::quadratic_from_matrix(a.clone(), 0.7, 0.1).unwrap();
        assert_eq!(tangent_linear_at_zero(&q).matrix(), &a);
    }

    #[test]
    fn jacobian_matches_finite_differences_on_grids() {
        for (dim, side, p) in [(1, 32, 1), (1, 8, 3), (2, 4, 2)] {
            let grid = GridGeometry::new(dim, side, 1.0).unwrap();
            let layout = StateLayout::new(grid.n_cells(), p).unwrap();
            let m = NonlinearModel::quadratic_perturbed(&grid, &layout, 0.4, 0.2, 0.3, 0.5).unwrap();
            let tlm = tangent_linear_at_zero(&m);
            let fd = fd_jacobian(&m, &DVector::zeros(layout.len()), 1e-4);
            let rel = (fd - tlm.matrix()).norm() / tlm.matrix().norm();
            assert!(rel <= 1e-6, "relative Jacobian error {rel}");
        }
    }

    #[test]
    fn propagator_examples() {
        let tlm = TangentLinearModel::new(dmatrix![2.0], 0.5).unwrap();
        assert_eq!(*tlm.propagator_product(1.0, 1.0).unwrap(), DMatrix::identity(1, 1));
        assert_eq!(tlm.propagator_product(0.0, 1.5).unwrap()[(0, 0)], 8.0);
        assert!(matches!(tlm.propagator_product(0.0, 0.7), Err(Error::Domain(_))));
        assert!(tlm.propagator_product(1.0, 0.0).is_err());

        let perm = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 1.0, 0.0, 0.0];
        let tlm = TangentLinearModel::new(perm, 1.0).unwrap();
        assert_eq!(*tlm.power(3), DMatrix::identity(3, 3));
    }

    #[test]
    fn linear_evolution_equals_propagator() {
        let grid = GridGeometry::line(10, 1.0).unwrap();
        let layout = StateLayout::new(10, 2).unwrap();
        let m = NonlinearModel::advection_diffusion(&grid, &layout, 0.5, 0.1, 0.5).unwrap();
        let tlm = tangent_linear_at_zero(&m);
        let x = StateVector::new(DVector::from_fn(20, |i, _| (i as f64 * 0.7).sin()), 0).unwrap();
        let mut direct = x.values().clone();
        for _ in 0..4 {
            direct = m.linear_part() * direct;
        }
        let evolved = evolve_nonlinear(&m, &x, 4).unwrap();
        assert_eq!(evolved.values(), &direct);
        let via_product = tlm.propagate(x.values(), 4);
        assert!((evolved.values() - via_product).amax() <= 1e-14);
    }

    #[test]
    fn quadratic_remainder_scales_with_gain() {
        let grid = GridGeometry::line(8, 1.0).unwrap();
        let layout = StateLayout::new(8, 1).unwrap();
        let x = StateVector::new(DVector::from_fn(8, |i, _| 0.3 * (i as f64).cos()), 0).unwrap();
        let remainder = |eps: f64| {
            let m = NonlinearModel::quadratic_perturbed(&grid, &layout, 0.5, 0.1, eps, 0.5).unwrap();
            let tlm = tangent_linear_at_zero(&m);
            (evolve_nonlinear(&m, &x, 3).unwrap().values() - tlm.propagate(x.values(), 3)).norm()
        };
        let (r1, r2) = (remainder(1e-3), remainder(2e-3));
        let ratio = r2 / r1;
        assert!((ratio - 2.0).abs() < 0.01, "remainder ratio {ratio}");
        assert!(r1 <= 10.0 * 1e-3 * x.values().norm_squared());
    }
}
