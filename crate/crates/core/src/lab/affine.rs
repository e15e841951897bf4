//! The analysis as an affine function of the observations,
//! `y ↦ C + Σ K_τ y_τ` with `C = L x_B`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::assimilation::solve_window;
use crate::cost::{gain_operators, WindowProblem};
use crate::error::{domain, Result};

pub const AFFINE_TOLERANCE: f64 = 1e-10;

/// Worst residuals of each affinity check, each relative to `1 + ‖reference‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineReport {
    pub trials: usize,
    /// `x(y′+y″) − x(0)` against the sum of the separate increments.
    pub superposition: f64,
    /// `x(0)` against `L x_B`.
    pub offset: f64,
    /// Unit-probe increments against the columns of `K`.
    pub gain: f64,
    /// `x(3y) − x(0)` against `3 (x(y) − x(0))`.
    pub scaling: f64,
    pub tolerance: f64,
}

impl AffineReport {
    pub fn worst(&self) -> f64 {
        self.superposition.max(self.offset).max(self.gain).max(self.scaling)
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.tolerance
    }
}

fn relative(residual: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    residual.amax() / (1.0 + reference.amax())
}

fn random_values(sizes: &[usize], rng: &mut impl Rng) -> Vec<DVector<f64>> {
    sizes
        .iter()
        .map(|&m| DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal))))
        .collect()
}

/// Probe the window-solve map of `p` with random and unit observation vectors.
pub fn verify_affine(p: &WindowProblem, trials: usize, rng: &mut impl Rng) -> Result<AffineReport> {
    if trials < 3 {
        return Err(domain(format!("affinity check needs at least 3 trials, got {trials}")));
    }
    let sizes: Vec<usize> = p.observations().iter().map(|o| o.values.len()).collect();
    let solve = |values: &[DVector<f64>]| -> Result<DVector<f64>> {
        Ok(solve_window(&p.with_observation_values(values)?)?.x_a.into_values())
    };
    let zeros: Vec<DVector<f64>> = sizes.iter().map(|&m| DVector::zeros(m)).collect();

    let gains = gain_operators(p)?;
    let x0 = solve(&zeros)?;
    let offset = relative(&(&x0 - &gains.l * p.background().values()), &x0);

    let mut superposition: f64 = 0.0;
    let mut scaling: f64 = 0.0;
    for _ in 0..trials {
        let y1 = random_values(&sizes, rng);
        let y2 = random_values(&sizes, rng);
        let sum: Vec<_> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let d1 = solve(&y1)? - &x0;
        let d2 = solve(&y2)? - &x0;
        let d12 = solve(&sum)? - &x0;
        superposition = superposition.max(relative(&(&d12 - &d1 - &d2), &d12));
        let tripled: Vec<_> = y1.iter().map(|v| v * 3.0).collect();
        let d3 = solve(&tripled)? - &x0;
        scaling = scaling.max(relative(&(&d3 - &d1 * 3.0), &d3));
    }

    let mut gain: f64 = 0.0;
    for (block, &m) in sizes.iter().enumerate() {
        for j in 0..m {
            let mut probe = zeros.clone();
            probe[block][j] = 1.0;
            let column = solve(&probe)? - &x0;
            let expected = gains.k[block].column(j).into_owned();
            gain = gain.max(relative(&(&column - &expected), &expected));
        }
    }

    Ok(AffineReport {
        trials,
        superposition,
        offset,
        gain,
        scaling,
        tolerance: AFFINE_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Covariance, CovarianceRole, WindowObservation};
    use crate::dynamics::TangentLinearModel;
    use crate::grid::StateVector;
    use crate::obs_operator::ObsOperator;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn problem() -> WindowProblem {
        let b = Arc::new(Covariance::new(CovarianceRole::Background, dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap());
        let tlm = Arc::new(TangentLinearModel::new(dmatrix![0.9, 0.1; 0.0, 0.8], 1.0).unwrap());
        let obs = |offset, y: f64| WindowObservation {
            offset,
            values: DVector::from_element(1, y),
            operator: Arc::new(ObsOperator::from_rows(2, vec![vec![(0, 0.25), (1, 0.75)]]).unwrap()),
            error: Arc::new(Covariance::observation_diagonal(1, 0.5).unwrap()),
        };
        WindowProblem::new(
            StateVector::from_slice(&[1.0, -2.0], 0).unwrap(),
            b,
            vec![obs(0, 0.3), obs(2, -0.7)],
            tlm,
            2,
        )
        .unwrap()
    }

    #[test]
    fn affine_checks_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = verify_affine(&problem(), 4, &mut rng).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(verify_affine(&problem(), 2, &mut rng).is_err());
    }
}
