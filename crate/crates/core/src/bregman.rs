//! Outer Bregman iteration.
//!
//! Only the subgradient `λ_k` and the adjoint `p_k` are carried from step to
//! step; the control is recovered on demand as `P(λ_k)`.

use crate::error::{Error, Result};
use crate::fem::{ControlField, FeFunction};
use crate::problem::ControlProblem;
use crate::ssn::{newton_solve, NewtonOptions, SubproblemSpec};

/// Sequence of regularization parameters `α_1, α_2, …`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum RegularizationSchedule {
    Constant { alpha: f64 },
    /// `α_k = alpha0 · ratio^(k−1)` with `0 < ratio ≤ 1`.
    Geometric { alpha0: f64, ratio: f64 },
}

impl RegularizationSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        let s = Self::Constant { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn geometric(alpha0: f64, ratio: f64) -> Result<Self> {
        let s = Self::Geometric { alpha0, ratio };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha must be positive and finite, got {alpha}"
                    )));
                }
            }
            Self::Geometric { alpha0, ratio } => {
                if !(alpha0 > 0.0 && alpha0.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha0 must be positive and finite, got {alpha0}"
                    )));
                }
                if !(ratio > 0.0 && ratio <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "geometric ratio must lie in (0, 1], got {ratio}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `α_k` for `k ≥ 1`.
    pub fn alpha(&self, k: usize) -> f64 {
        assert!(k >= 1, "schedule is indexed from 1");
        match *self {
            Self::Constant { alpha } => alpha,
            Self::Geometric { alpha0, ratio } => alpha0 * ratio.powi((k - 1) as i32),
        }
    }

    /// Uniform upper bound on the sequence.
    pub fn bound(&self) -> f64 {
        match *self {
            Self::Constant { alpha } => alpha,
            Self::Geometric { alpha0, .. } => alpha0,
        }
    }

    /// `γ_k = Σ_{j≤k} 1/α_j`, summed in order.
    pub fn gamma(&self, k: usize) -> f64 {
        (1..=k).fold(0.0, |g, j| g + 1.0 / self.alpha(j))
    }
}

/// Scalars recorded after each outer step.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// `‖u_k − u†‖` when a reference control is attached.
    pub error: Option<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub gradient_steps: usize,
}

#[derive(Clone, Debug)]
pub struct BregmanState {
    k: usize,
    lambda: FeFunction,
    adjoint: FeFunction,
    gamma: f64,
    reference: Option<ControlField>,
    history: Vec<IterationRecord>,
}

impl BregmanState {
    /// `λ_0 = 0`, `p_0 = 0`, `γ_0 = 0`.
    ///
    /// `λ_0 = 0` is a subgradient of the regularizer at `u_0 = P(0)` for any
    /// box: `−u_0` points outward wherever the clamp is active.
    pub fn new(problem: &ControlProblem) -> Self {
        let space = problem.space();
        Self {
            k: 0,
            lambda: space.zero_function(),
            adjoint: space.zero_function(),
            gamma: 0.0,
            reference: None,
            history: Vec::new(),
        }
    }

    /// Records `‖u_k − reference‖` in the history after every step.
    pub fn with_reference(mut self, reference: ControlField) -> Result<Self> {
        if !std::sync::Arc::ptr_eq(reference.space(), self.lambda.space()) {
            return Err(Error::SpaceMismatch);
        }
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> &FeFunction {
        &self.lambda
    }

    pub fn adjoint(&self) -> &FeFunction {
        &self.adjoint
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reference(&self) -> Option<&ControlField> {
        self.reference.as_ref()
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.history.last()
    }
}

/// Advances the iteration by one step: solves the proximal subproblem with
/// `α_k` and `λ_{k−1}`, then sets `λ_k = λ_{k−1} − p_k/α_k`.
pub fn bregman_step(
    state: &mut BregmanState,
    problem: &ControlProblem,
    schedule: &RegularizationSchedule,
    opts: &NewtonOptions,
) -> Result<()> {
    let k = state.k + 1;
    let alpha = schedule.alpha(k);
    let attach = |e: Error| Error::Iteration {
        k,
        source: Box::new(e),
    };
    let spec = SubproblemSpec::new(problem, alpha, &state.lambda).map_err(attach)?;
    let res = newton_solve(&spec, opts, Some(&state.adjoint)).map_err(attach)?;

    state.lambda = state.lambda.axpy(-1.0 / alpha, &res.adjoint)?;
    state.adjoint = res.adjoint;
    state.gamma += 1.0 / alpha;
    state.k = k;
    let error = match &state.reference {
        Some(r) => Some(recover_control_field(state, problem)?.distance(r)?),
        None => None,
    };
    state.history.push(IterationRecord {
        k,
        alpha,
        gamma: state.gamma,
        error,
        residual: res.residual,
        newton_iterations: res.newton_iterations,
        cg_iterations: res.cg_iterations,
        gradient_steps: res.gradient_steps,
    });
    Ok(())
}

/// Nodal control `P(λ_k)`; for `k = 0` this is `P(0)`.
pub fn recover_control(state: &BregmanState, problem: &ControlProblem) -> Result<FeFunction> {
    problem.project_admissible(&state.lambda)
}

/// `P(λ_k)` at the quadrature points, the control the subproblem solver
/// actually works with.
pub fn recover_control_field(state: &BregmanState, problem: &ControlProblem) -> Result<ControlField> {
    problem.project_field(&state.lambda.to_field())
}

/// `½‖u‖² − ½‖v‖² − (u − v, λ)`, or `+∞` if `u` or `v` violates the bounds.
pub fn bregman_distance(
    u: &ControlField,
    v: &ControlField,
    lambda: &ControlField,
    problem: &ControlProblem,
) -> Result<f64> {
    let bounds = problem.bounds();
    if !bounds.field_is_admissible(u) || !bounds.field_is_admissible(v) {
        return Ok(f64::INFINITY);
    }
    let diff = u.axpy(-1.0, v)?;
    Ok(0.5 * u.inner(u)? - 0.5 * v.inner(v)? - diff.inner(lambda)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{FeSpace, Mesh};
    use crate::problem::BoxConstraints;

    fn small_problem() -> ControlProblem {
        let space = FeSpace::new(Mesh::interval(-1.0, 1.0, 32).unwrap()).unwrap();
        let bounds = BoxConstraints::constant(&space, -1.0, 1.0).unwrap();
        let z = space
            .interpolate(|x| (1.0 - x[0] * x[0]) + (std::f64::consts::PI * x[0]).sin())
            .unwrap();
        ControlProblem::new(&space, bounds, z, space.zero_field()).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(RegularizationSchedule::constant(0.0).is_err());
        assert!(RegularizationSchedule::constant(f64::INFINITY).is_err());
        assert!(RegularizationSchedule::geometric(1.0, 1.5).is_err());
        assert!(RegularizationSchedule::geometric(1.0, 0.0).is_err());
        let g = RegularizationSchedule::geometric(2.0, 0.5).unwrap();
        assert_eq!(g.alpha(1), 2.0);
        assert_eq!(g.alpha(3), 0.5);
        assert_eq!(g.gamma(3), 0.5 + 1.0 + 2.0);
        assert!((1..50).all(|k| g.alpha(k) <= g.bound()));
    }

    #[test]
    fn constant_one_gives_gamma_k() {
        let p = small_problem();
        let s = RegularizationSchedule::constant(1.0).unwrap();
        let mut st = BregmanState::new(&p);
        for k in 1..=5 {
            bregman_step(&mut st, &p, &s, &NewtonOptions::default()).unwrap();
            assert_eq!(st.gamma(), k as f64);
            assert_eq!(s.gamma(k), k as f64);
        }
    }

    #[test]
    fn recover_control_clamps() {
        let p = small_problem();
        let mut st = BregmanState::new(&p);
        st.lambda = p.space().interpolate(|_| 10.0).unwrap();
        let u = recover_control(&st, &p).unwrap();
        assert!(u.coeffs().iter().all(|&v| v == 1.0));
        st.lambda = p.space().interpolate(|x| 0.5 * x[0]).unwrap();
        assert_eq!(recover_control(&st, &p).unwrap().coeffs(), st.lambda.coeffs());
    }

    #[test]
    fn zero_state_recovers_projection_of_zero() {
        let p = small_problem();
        let st = BregmanState::new(&p);
        let u = recover_control(&st, &p).unwrap();
        assert!(u.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distance_identities() {
        let p = small_problem();
        let s = p.space();
        let u = s.sample(|x| 0.3 * x[0]).unwrap();
        let v = s.sample(|x| (2.0 * x[0]).sin() * 0.5).unwrap();
        assert_eq!(bregman_distance(&u, &u, &v, &p).unwrap(), 0.0);
        let d = bregman_distance(&u, &v, &v, &p).unwrap();
        let half = 0.5 * u.distance(&v).unwrap().powi(2);
        assert!((d - half).abs() < 1e-14);
        let bad = s.sample(|_| 2.0).unwrap();
        assert_eq!(bregman_distance(&bad, &v, &v, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn iteration_error_is_tagged_with_index() {
        let p = small_problem();
        let s = RegularizationSchedule::constant(1.0).unwrap();
        let mut st = BregmanState::new(&p);
        let opts = NewtonOptions {
            max_newton: 1,
            tol: 1e-300,
            ..Default::default()
        };
        match bregman_step(&mut st, &p, &s, &opts) {
            Err(Error::Iteration { k: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.k(), 0);
    }
}
