//! Semi-smooth Newton method for the proximal subproblem
//!
//! ```text
//! minimize ½‖Su − z‖² + α(½‖u‖² − (λ, u))   subject to u_a ≤ u ≤ u_b,
//! ```
//!
//! whose solution is the fixed point `u = P(−p(u)/α + λ)` with
//! `p(u) = S*(Su − z)`. Controls are represented at quadrature points; each
//! Newton step only solves for the inactive part, a finite element function
//! restricted to the basis functions that see inactive points.

use crate::error::{Error, Result};
use crate::fem::{ControlField, FeFunction, FeSpace, PointLabel, PointwiseClassification};
use crate::linalg::cg_solve;
use crate::problem::{BoxConstraints, ControlProblem};

/// One instance of the proximal subproblem.
#[derive(Clone, Copy, Debug)]
pub struct SubproblemSpec<'a> {
    pub problem: &'a ControlProblem,
    pub alpha: f64,
    pub lambda: &'a FeFunction,
}

impl<'a> SubproblemSpec<'a> {
    pub fn new(problem: &'a ControlProblem, alpha: f64, lambda: &'a FeFunction) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if !std::sync::Arc::ptr_eq(lambda.space(), problem.space()) {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            problem,
            alpha,
            lambda,
        })
    }

    /// Objective of the subproblem at an admissible control.
    pub fn objective(&self, u: &ControlField) -> Result<f64> {
        let lam = self.lambda.to_field();
        let tracking = self.problem.tracking_cost(u)?;
        Ok(tracking + self.alpha * (0.5 * u.inner(u)? - u.inner(&lam)?))
    }

    /// `‖u − P(−p(u)/α + λ)‖` with `p(u)` recomputed from scratch.
    pub fn fixed_point_residual(&self, u: &ControlField) -> Result<f64> {
        let p = self.problem.adjoint_of(u)?;
        let target = self.projected_target(&p)?;
        u.distance(&target)
    }

    /// `P(−p/α + λ)` at the quadrature points.
    pub fn projected_target(&self, p: &FeFunction) -> Result<ControlField> {
        let v = self.lambda.to_field().axpy(-1.0 / self.alpha, &p.to_field())?;
        self.problem.project_field(&v)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Absolute L² tolerance on the fixed-point residual.
    pub tol: f64,
    pub max_newton: usize,
    /// Relative residual tolerance of the inner CG solve.
    pub cg_tol: f64,
    /// CG iteration cap as a multiple of the number of unknowns.
    pub cg_max_factor: usize,
    /// Projected gradient steps taken when CG fails, before retrying Newton.
    pub fallback_steps: usize,
    /// Budget of continuation solves when Newton cycles; 0 disables it.
    pub max_continuation: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_newton: 50,
            cg_tol: 1e-12,
            cg_max_factor: 10,
            fallback_steps: 20,
            max_continuation: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub adjoint: FeFunction,
    pub control: ControlField,
    pub classification: PointwiseClassification,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub gradient_steps: usize,
    pub residual: f64,
    /// Auxiliary solves at larger `α` used to globalize this solve.
    pub continuation_levels: usize,
}

fn classify_values(v: &[f64], bounds: &BoxConstraints) -> PointwiseClassification {
    let labels = v
        .iter()
        .zip(bounds.lower_quad().iter().zip(bounds.upper_quad()))
        .map(|(&x, (&a, &b))| {
            if x >= b {
                PointLabel::ActiveUpper
            } else if x <= a {
                PointLabel::ActiveLower
            } else {
                PointLabel::Inactive
            }
        })
        .collect();
    PointwiseClassification::new(labels)
}

fn shifted_adjoint(p: &FeFunction, lambda: &FeFunction, alpha: f64) -> Vec<f64> {
    let pq = p.to_field();
    let lq = lambda.to_field();
    pq.values()
        .iter()
        .zip(lq.values())
        .map(|(&pv, &lv)| -pv / alpha + lv)
        .collect()
}

/// Labels each quadrature point by where `−p/α + λ` sits relative to the
/// bounds; equality with a bound counts as active.
pub fn classify(
    p: &FeFunction,
    lambda: &FeFunction,
    alpha: f64,
    bounds: &BoxConstraints,
) -> PointwiseClassification {
    classify_values(&shifted_adjoint(p, lambda, alpha), bounds)
}

/// Reduced Newton operator `M_I + (1/α) M_I K⁻¹ M K⁻¹ M_I` for a fixed
/// classification, applied matrix-free.
pub struct ReducedOperator<'a> {
    spec: SubproblemSpec<'a>,
    cls: &'a PointwiseClassification,
    /// DOFs whose basis function is nonzero at some inactive point.
    reduced: Vec<usize>,
    /// `diag(M_I)` on the reduced set.
    diag: Vec<f64>,
}

impl<'a> ReducedOperator<'a> {
    pub fn new(spec: SubproblemSpec<'a>, cls: &'a PointwiseClassification) -> Result<Self> {
        let space = spec.problem.space();
        if cls.len() != space.num_quad() {
            return Err(Error::DimensionMismatch {
                expected: space.num_quad(),
                found: cls.len(),
            });
        }
        let mut full_diag = vec![0.0; space.num_dofs()];
        let w = space.quad_weights();
        for q in 0..space.num_quad() {
            if !cls.is(q, PointLabel::Inactive) {
                continue;
            }
            let (nodes, phi) = space.quad_basis(q);
            for (&i, &v) in nodes.iter().zip(phi) {
                full_diag[i] += w[q] * v * v;
            }
        }
        let reduced: Vec<usize> = (0..full_diag.len()).filter(|&i| full_diag[i] > 0.0).collect();
        let diag = reduced.iter().map(|&i| full_diag[i]).collect();
        Ok(Self {
            spec,
            cls,
            reduced,
            diag,
        })
    }

    pub fn reduced_indices(&self) -> &[usize] {
        &self.reduced
    }

    fn space(&self) -> &FeSpace {
        self.spec.problem.space()
    }

    /// `M_I x` for a full-length nodal vector.
    pub fn truncated_mass(&self, x: &[f64]) -> Vec<f64> {
        let space = self.space();
        let vals = space.eval_at_quad(x);
        space.load_masked(&vals, |q| self.cls.is(q, PointLabel::Inactive))
    }

    /// Full-length application of the reduced operator.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let space = self.space();
        if x.len() != space.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: space.num_dofs(),
                found: x.len(),
            });
        }
        let ops = self.spec.problem.operators();
        let mi_x = self.truncated_mass(x);
        let y = ops.solve_dirichlet(&mi_x)?;
        let my = ops.mass().spmv(&y)?;
        let p = ops.solve_dirichlet(&my)?;
        let mi_p = self.truncated_mass(&p);
        Ok(mi_x
            .iter()
            .zip(&mi_p)
            .map(|(a, b)| a + b / self.spec.alpha)
            .collect())
    }

    fn apply_reduced(&self, xr: &[f64], out: &mut [f64]) -> Result<()> {
        let mut full = vec![0.0; self.space().num_dofs()];
        for (&i, &v) in self.reduced.iter().zip(xr) {
            full[i] = v;
        }
        let y = self.apply(&full)?;
        for (o, &i) in out.iter_mut().zip(&self.reduced) {
            *o = y[i];
        }
        Ok(())
    }
}

/// `(M_I + (1/α) M_I K⁻¹ M K⁻¹ M_I) x` for a vector supported on the reduced set.
pub fn apply_reduced_operator(
    spec: SubproblemSpec<'_>,
    cls: &PointwiseClassification,
    x: &[f64],
) -> Result<Vec<f64>> {
    ReducedOperator::new(spec, cls)?.apply(x)
}

struct NewtonStep {
    control: ControlField,
    adjoint: FeFunction,
    cg_iterations: usize,
}

/// Solves for the next iterate given the classification of the current one.
fn newton_step(
    spec: &SubproblemSpec<'_>,
    cls: &PointwiseClassification,
    state_offset: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonStep> {
    let problem = spec.problem;
    let space = problem.space();
    let ops = problem.operators();
    let bounds = problem.bounds();
    let nq = space.num_quad();

    // values prescribed on the active sets
    let mut active = vec![0.0; nq];
    for q in 0..nq {
        active[q] = match cls.labels()[q] {
            PointLabel::ActiveLower => bounds.lower_quad()[q],
            PointLabel::ActiveUpper => bounds.upper_quad()[q],
            PointLabel::Inactive => 0.0,
        };
    }
    let g = space.load_masked(&active, |q| !cls.is(q, PointLabel::Inactive));
    let y_fixed: Vec<f64> = ops
        .solve_dirichlet(&g)?
        .iter()
        .zip(state_offset)
        .map(|(a, b)| a + b)
        .collect();
    let residual: Vec<f64> = y_fixed
        .iter()
        .zip(problem.target().coeffs())
        .map(|(y, z)| y - z)
        .collect();
    let p_fixed = ops.solve_dirichlet(&ops.mass().spmv(&residual)?)?;

    // right-hand side  M_I(−p_fixed/α + λ)
    let p_fixed_q = space.eval_at_quad(&p_fixed);
    let lam_q = space.eval_at_quad(spec.lambda.coeffs());
    let rhs_q: Vec<f64> = p_fixed_q
        .iter()
        .zip(&lam_q)
        .map(|(p, l)| -p / spec.alpha + l)
        .collect();
    let rhs_full = space.load_masked(&rhs_q, |q| cls.is(q, PointLabel::Inactive));

    let op = ReducedOperator::new(*spec, cls)?;
    let mut inactive_coeffs = vec![0.0; space.num_dofs()];
    let mut cg_iterations = 0;
    if !op.reduced.is_empty() {
        let rhs: Vec<f64> = op.reduced.iter().map(|&i| rhs_full[i]).collect();
        let out = cg_solve(
            |x, y| op.apply_reduced(x, y),
            &rhs,
            Some(&op.diag),
            opts.cg_tol,
            opts.cg_max_factor * op.reduced.len().max(1),
        )?;
        cg_iterations = out.iterations;
        for (&i, v) in op.reduced.iter().zip(out.x) {
            inactive_coeffs[i] = v;
        }
    }

    let inactive_q = space.eval_at_quad(&inactive_coeffs);
    let control: Vec<f64> = (0..nq)
        .map(|q| match cls.labels()[q] {
            PointLabel::Inactive => inactive_q[q],
            _ => active[q],
        })
        .collect();
    let control = ControlField::new(space, control)?;

    // p = K⁻¹M(K⁻¹(g + M_I ũ + M e) − z)
    let y_inactive = ops.solve_dirichlet(&op.truncated_mass(&inactive_coeffs))?;
    let state_residual: Vec<f64> = residual
        .iter()
        .zip(&y_inactive)
        .map(|(r, y)| r + y)
        .collect();
    let adjoint = ops.solve_dirichlet(&ops.mass().spmv(&state_residual)?)?;
    Ok(NewtonStep {
        control,
        adjoint: FeFunction::new(space, adjoint)?,
        cg_iterations,
    })
}

/// Projected gradient step with Armijo backtracking along
/// `−S*(Su − z) − α(u − λ)`.
pub fn projected_gradient_step(
    spec: &SubproblemSpec<'_>,
    u: &ControlField,
    step: f64,
) -> Result<ControlField> {
    const MIN_STEP: f64 = 1e-14;
    const SUFFICIENT_DECREASE: f64 = 1e-4;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let problem = spec.problem;
    let p = problem.adjoint_of(u)?.to_field();
    let lam = spec.lambda.to_field();
    let direction: Vec<f64> = u
        .values()
        .iter()
        .zip(p.values().iter().zip(lam.values()))
        .map(|(&uv, (&pv, &lv))| -pv - spec.alpha * (uv - lv))
        .collect();
    let f0 = spec.objective(u)?;
    let mut s = step;
    while s >= MIN_STEP {
        let trial: Vec<f64> = u
            .values()
            .iter()
            .zip(&direction)
            .map(|(&uv, &d)| uv + s * d)
            .collect();
        let candidate = problem.project_field(&ControlField::new(problem.space(), trial)?)?;
        let moved = candidate.distance(u)?;
        if moved == 0.0 {
            return Ok(candidate);
        }
        let f1 = spec.objective(&candidate)?;
        if f1 <= f0 - SUFFICIENT_DECREASE / s * moved * moved {
            return Ok(candidate);
        }
        s *= 0.5;
    }
    Err(Error::GlobalizationStalled { min_step: MIN_STEP })
}

/// Runs the semi-smooth Newton iteration from the adjoint `warm_start`
/// (zero when absent).
///
/// Exits once the classification stops changing and the fixed-point residual
/// is at most `opts.tol`. A failing CG solve triggers a few projected gradient
/// steps from the current point before Newton resumes. If the active sets
/// cycle or the iteration cap is hit, the subproblem is re-solved by
/// continuation: first at a larger regularization parameter, then walking
/// back down to `α` with warm starts.
pub fn newton_solve(
    spec: &SubproblemSpec<'_>,
    opts: &NewtonOptions,
    warm_start: Option<&FeFunction>,
) -> Result<NewtonResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", opts.tol)));
    }
    let problem = spec.problem;
    let space = problem.space();
    let state_offset = problem.operators().solve_dirichlet(&problem.source().load())?;
    let start = match warm_start {
        Some(p) if std::sync::Arc::ptr_eq(p.space(), space) => p.clone(),
        Some(_) => return Err(Error::SpaceMismatch),
        None => space.zero_function(),
    };
    match newton_iterate(spec, opts, start.clone(), &state_offset) {
        Err(Error::NewtonNotConverged { iterations, .. }) if opts.max_continuation > 0 => {
            continuation(spec, opts, start, &state_offset, iterations)
        }
        other => other,
    }
}

const CONTINUATION_GROWTH: f64 = 4.0;
const CONTINUATION_MIN_RATIO: f64 = 1.01;

fn continuation(
    spec: &SubproblemSpec<'_>,
    opts: &NewtonOptions,
    start: FeFunction,
    state_offset: &[f64],
    spent: usize,
) -> Result<NewtonResult> {
    let at = |alpha: f64| SubproblemSpec { alpha, ..*spec };
    let mut newton = spent;
    let mut cg = 0;
    let mut grad = 0;
    let mut levels = 0;
    let mut tally = |r: &NewtonResult| {
        newton += r.newton_iterations;
        cg += r.cg_iterations;
        grad += r.gradient_steps;
    };
    let mut last_failure = None;

    // climb until Newton converges
    let mut alpha = spec.alpha;
    let mut solved = None;
    while levels < opts.max_continuation {
        alpha *= CONTINUATION_GROWTH;
        levels += 1;
        match newton_iterate(&at(alpha), opts, start.clone(), state_offset) {
            Ok(r) => {
                tally(&r);
                solved = Some(r);
                break;
            }
            Err(e @ Error::NewtonNotConverged { .. }) => last_failure = Some(e),
            Err(e) => return Err(e),
        }
    }
    let Some(mut current) = solved else {
        return Err(last_failure.expect("at least one level attempted"));
    };

    // walk back down, shrinking the ratio when a level fails
    let mut ratio = CONTINUATION_GROWTH;
    while alpha > spec.alpha {
        if levels >= opts.max_continuation {
            return Err(last_failure.unwrap_or(Error::NewtonNotConverged {
                iterations: newton,
                residual: current.residual,
                adjoint: current.adjoint.into_coeffs(),
            }));
        }
        let next = (alpha / ratio).max(spec.alpha);
        levels += 1;
        match newton_iterate(&at(next), opts, current.adjoint.clone(), state_offset) {
            Ok(r) => {
                tally(&r);
                current = r;
                alpha = next;
                ratio = (ratio * ratio).min(CONTINUATION_GROWTH);
            }
            Err(e @ Error::NewtonNotConverged { .. }) => {
                ratio = ratio.sqrt();
                if ratio < CONTINUATION_MIN_RATIO {
                    return Err(e);
                }
                last_failure = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    current.newton_iterations = newton;
    current.cg_iterations = cg;
    current.gradient_steps = grad;
    current.continuation_levels = levels;
    Ok(current)
}

/// Plain Newton loop; reports a revisited classification (a cycle) or the
/// iteration cap as `NewtonNotConverged`.
fn newton_iterate(
    spec: &SubproblemSpec<'_>,
    opts: &NewtonOptions,
    start: FeFunction,
    state_offset: &[f64],
) -> Result<NewtonResult> {
    let problem = spec.problem;
    let mut adjoint = start;
    let mut cls = classify(&adjoint, spec.lambda, spec.alpha, problem.bounds());
    let mut seen: Vec<PointwiseClassification> = Vec::new();
    let mut cg_total = 0;
    let mut gradient_steps = 0;
    let mut residual = f64::INFINITY;

    for it in 1..=opts.max_newton {
        let step = match newton_step(spec, &cls, state_offset, opts) {
            Ok(step) => step,
            Err(Error::CgNotConverged { iterations, .. }) => {
                cg_total += iterations;
                let mut u = spec.projected_target(&adjoint)?;
                for _ in 0..opts.fallback_steps {
                    u = projected_gradient_step(spec, &u, 1.0 / spec.alpha)?;
                    gradient_steps += 1;
                }
                adjoint = problem.adjoint_of(&u)?;
                let new_cls = classify(&adjoint, spec.lambda, spec.alpha, problem.bounds());
                residual = u.distance(&spec.projected_target(&adjoint)?)?;
                if residual <= opts.tol {
                    return Ok(NewtonResult {
                        adjoint,
                        control: u,
                        classification: new_cls,
                        newton_iterations: it,
                        cg_iterations: cg_total,
                        gradient_steps,
                        residual,
                        continuation_levels: 0,
                    });
                }
                cls = new_cls;
                continue;
            }
            Err(e) => return Err(e),
        };
        cg_total += step.cg_iterations;
        let new_cls = classify(&step.adjoint, spec.lambda, spec.alpha, problem.bounds());
        let target = spec.projected_target(&step.adjoint)?;
        residual = step.control.distance(&target)?;
        let settled = new_cls == cls;
        adjoint = step.adjoint;
        if settled && residual <= opts.tol {
            return Ok(NewtonResult {
                adjoint,
                control: step.control,
                classification: cls,
                newton_iterations: it,
                cg_iterations: cg_total,
                gradient_steps,
                residual,
                continuation_levels: 0,
            });
        }
        if !settled && seen.contains(&new_cls) {
            return Err(Error::NewtonNotConverged {
                iterations: it,
                residual,
                adjoint: adjoint.into_coeffs(),
            });
        }
        seen.push(std::mem::replace(&mut cls, new_cls));
    }
    Err(Error::NewtonNotConverged {
        iterations: opts.max_newton,
        residual,
        adjoint: adjoint.into_coeffs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;
    use crate::problem::BoxConstraints;

    fn interval_problem(n: usize, lo: f64, hi: f64, z: impl Fn(f64) -> f64) -> ControlProblem {
        let space = FeSpace::new(Mesh::interval(0.0, 1.0, n).unwrap()).unwrap();
        let bounds = BoxConstraints::constant(&space, lo, hi).unwrap();
        let target = space.interpolate(|x| z(x[0])).unwrap();
        ControlProblem::new(&space, bounds, target, space.zero_field()).unwrap()
    }

    #[test]
    fn classify_all_lower_at_zero() {
        let p = interval_problem(4, 0.0, 0.1, |_| 0.0);
        let zero = p.space().zero_function();
        let cls = classify(&zero, &zero, 1.0, p.bounds());
        assert_eq!(cls.count(PointLabel::ActiveLower), cls.len());
    }

    #[test]
    fn classify_direct_comparison() {
        // three quadrature points with -p = (2, 0.05, -2)
        let space = FeSpace::new(Mesh::interval(0.0, 1.0, 2).unwrap()).unwrap();
        let bounds = BoxConstraints::constant(&space, 0.0, 0.1).unwrap();
        let cls = classify_values(&[2.0, 0.05, -2.0], &bounds);
        assert_eq!(
            cls.labels(),
            &[
                PointLabel::ActiveUpper,
                PointLabel::Inactive,
                PointLabel::ActiveLower
            ]
        );
    }

    #[test]
    fn classify_scale_invariant() {
        let p = interval_problem(16, -0.3, 0.2, |_| 0.0);
        let adj = p.space().interpolate(|x| (6.0 * x[0]).sin()).unwrap();
        let lam = p.space().interpolate(|x| 0.1 * x[0]).unwrap();
        let base = classify(&adj, &lam, 0.7, p.bounds());
        for c in [0.25, 2.0, 8.0] {
            let scaled = adj.map(|v| c * v);
            assert_eq!(classify(&scaled, &lam, c * 0.7, p.bounds()), base);
        }
    }

    #[test]
    fn reduced_operator_is_mass_when_all_inactive() {
        let p = interval_problem(8, -10.0, 10.0, |_| 0.0);
        let lam = p.space().zero_function();
        let spec = SubproblemSpec::new(&p, 1e300, &lam).unwrap();
        let cls = PointwiseClassification::uniform(p.space(), PointLabel::Inactive);
        let x: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let ax = apply_reduced_operator(spec, &cls, &x).unwrap();
        let mx = p.space().mass().spmv(&x).unwrap();
        for (a, b) in ax.iter().zip(mx) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(apply_reduced_operator(spec, &cls, &[0.0; 9])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn singleton_box_is_fully_active() {
        let p = interval_problem(32, 0.0, 0.0, |x| x.sin());
        let lam = p.space().zero_function();
        let spec = SubproblemSpec::new(&p, 1.0, &lam).unwrap();
        let res = newton_solve(&spec, &NewtonOptions::default(), None).unwrap();
        assert!(res.newton_iterations <= 2);
        assert!(res.control.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_positive_alpha() {
        let p = interval_problem(4, 0.0, 1.0, |_| 0.0);
        let lam = p.space().zero_function();
        assert!(SubproblemSpec::new(&p, 0.0, &lam).is_err());
        assert!(SubproblemSpec::new(&p, -1.0, &lam).is_err());
    }

    #[test]
    fn projected_gradient_rejects_bad_step() {
        let p = interval_problem(4, 0.0, 1.0, |_| 0.0);
        let lam = p.space().zero_function();
        let spec = SubproblemSpec::new(&p, 1.0, &lam).unwrap();
        assert!(projected_gradient_step(&spec, &p.space().zero_field(), 0.0).is_err());
    }
}
