//! Box-constrained tracking problem for `−Δy = u + e_Ω`, `y = 0` on the
//! boundary, with the state and adjoint solution operators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_stiffness, ControlField, DirichletSolver, FeFunction, FeSpace, Stiffness,
};
use crate::linalg::SparseSymMatrix;

#[derive(Clone, Debug)]
pub enum Bound {
    Constant(f64),
    Function(FeFunction),
}

/// Pointwise bounds `u_a ≤ u ≤ u_b`, stored at the nodes and at the
/// quadrature points.
#[derive(Clone, Debug)]
pub struct BoxConstraints {
    lower_nodes: Vec<f64>,
    upper_nodes: Vec<f64>,
    lower_quad: Vec<f64>,
    upper_quad: Vec<f64>,
}

impl BoxConstraints {
    pub fn new(space: &Arc<FeSpace>, lower: Bound, upper: Bound) -> Result<Self> {
        let expand = |b: &Bound| -> Result<(Vec<f64>, Vec<f64>)> {
            match b {
                Bound::Constant(c) => {
                    if c.is_nan() {
                        return Err(Error::InvalidParameter("NaN bound".into()));
                    }
                    Ok((vec![*c; space.num_dofs()], vec![*c; space.num_quad()]))
                }
                Bound::Function(f) => {
                    if !Arc::ptr_eq(f.space(), space) {
                        return Err(Error::SpaceMismatch);
                    }
                    Ok((f.coeffs().to_vec(), space.eval_at_quad(f.coeffs())))
                }
            }
        };
        let (lower_nodes, lower_quad) = expand(&lower)?;
        let (upper_nodes, upper_quad) = expand(&upper)?;
        if let Some(i) = (0..lower_nodes.len()).find(|&i| lower_nodes[i] > upper_nodes[i]) {
            return Err(Error::InvalidBounds {
                location: format!("node {i}"),
            });
        }
        if let Some(q) = (0..lower_quad.len()).find(|&q| lower_quad[q] > upper_quad[q]) {
            return Err(Error::InvalidBounds {
                location: format!("quadrature point {q}"),
            });
        }
        Ok(Self {
            lower_nodes,
            upper_nodes,
            lower_quad,
            upper_quad,
        })
    }

    pub fn constant(space: &Arc<FeSpace>, lower: f64, upper: f64) -> Result<Self> {
        Self::new(space, Bound::Constant(lower), Bound::Constant(upper))
    }

    pub fn lower_quad(&self) -> &[f64] {
        &self.lower_quad
    }

    pub fn upper_quad(&self) -> &[f64] {
        &self.upper_quad
    }

    pub fn lower_nodes(&self) -> &[f64] {
        &self.lower_nodes
    }

    pub fn upper_nodes(&self) -> &[f64] {
        &self.upper_nodes
    }

    pub fn clamp_nodes(&self, v: &[f64]) -> Vec<f64> {
        clamp_slice(v, &self.lower_nodes, &self.upper_nodes)
    }

    pub fn clamp_quad(&self, v: &[f64]) -> Vec<f64> {
        clamp_slice(v, &self.lower_quad, &self.upper_quad)
    }

    pub fn field_is_admissible(&self, u: &ControlField) -> bool {
        u.values()
            .iter()
            .zip(self.lower_quad.iter().zip(&self.upper_quad))
            .all(|(&v, (&a, &b))| a <= v && v <= b)
    }
}

fn clamp_slice(v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&a, &b))| a.max(b.min(x)))
        .collect()
}

/// Mesh-dependent operators shared between problems with different data.
#[derive(Debug)]
pub struct PdeOperators {
    space: Arc<FeSpace>,
    stiffness: Stiffness,
    solver: DirichletSolver,
}

impl PdeOperators {
    pub fn new(space: &Arc<FeSpace>) -> Result<Self> {
        let stiffness = assemble_stiffness(space)?;
        let solver = DirichletSolver::new(&stiffness)?;
        Ok(Self {
            space: Arc::clone(space),
            stiffness,
            solver,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn stiffness(&self) -> &Stiffness {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        self.space.mass()
    }

    /// `K⁻¹ f` with homogeneous Dirichlet conditions.
    pub fn solve_dirichlet(&self, load: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(load)
    }
}

/// Problem data: bounds, target state `z`, fixed source `e_Ω`.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    ops: Arc<PdeOperators>,
    bounds: Arc<BoxConstraints>,
    target: FeFunction,
    source: ControlField,
}

impl ControlProblem {
    pub fn new(
        space: &Arc<FeSpace>,
        bounds: BoxConstraints,
        target: FeFunction,
        source: ControlField,
    ) -> Result<Self> {
        let ops = Arc::new(PdeOperators::new(space)?);
        Self::with_operators(ops, Arc::new(bounds), target, source)
    }

    pub fn with_operators(
        ops: Arc<PdeOperators>,
        bounds: Arc<BoxConstraints>,
        target: FeFunction,
        source: ControlField,
    ) -> Result<Self> {
        if !Arc::ptr_eq(target.space(), ops.space()) || !Arc::ptr_eq(source.space(), ops.space()) {
            return Err(Error::SpaceMismatch);
        }
        if bounds.lower_nodes.len() != ops.space().num_dofs()
            || bounds.lower_quad.len() != ops.space().num_quad()
        {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            ops,
            bounds,
            target,
            source,
        })
    }

    /// Same operators and bounds, different target data (e.g. noisy `z^δ`).
    pub fn with_target(&self, target: FeFunction) -> Result<Self> {
        Self::with_operators(
            Arc::clone(&self.ops),
            Arc::clone(&self.bounds),
            target,
            self.source.clone(),
        )
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        self.ops.space()
    }

    pub fn operators(&self) -> &Arc<PdeOperators> {
        &self.ops
    }

    pub fn bounds(&self) -> &BoxConstraints {
        &self.bounds
    }

    pub fn target(&self) -> &FeFunction {
        &self.target
    }

    pub fn source(&self) -> &ControlField {
        &self.source
    }

    fn check_field(&self, u: &ControlField) -> Result<()> {
        if Arc::ptr_eq(u.space(), self.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    fn check_fn(&self, u: &FeFunction) -> Result<()> {
        if Arc::ptr_eq(u.space(), self.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Linear part of the control-to-state map, `u ↦ K⁻¹(∫ u φᵢ)`.
    pub fn apply_solution_operator(&self, u: &ControlField) -> Result<FeFunction> {
        self.check_field(u)?;
        let y = self.ops.solve_dirichlet(&u.load())?;
        FeFunction::new(self.space(), y)
    }

    /// Adjoint of the linear control-to-state map in the L² pairing,
    /// `w ↦ K⁻¹ M w`, as a finite element function.
    pub fn apply_adjoint_operator(&self, w: &FeFunction) -> Result<FeFunction> {
        self.check_fn(w)?;
        let load = self.ops.mass().spmv(w.coeffs())?;
        FeFunction::new(self.space(), self.ops.solve_dirichlet(&load)?)
    }

    /// State `y` solving `K y = ∫ (u + e_Ω) φᵢ`, zero on the boundary.
    pub fn solve_state(&self, u: &ControlField) -> Result<FeFunction> {
        self.check_field(u)?;
        let total = u.axpy(1.0, &self.source)?;
        self.apply_solution_operator(&total)
    }

    /// `solve_state` for a piecewise-linear control.
    pub fn solve_state_nodal(&self, u: &FeFunction) -> Result<FeFunction> {
        self.check_fn(u)?;
        self.solve_state(&u.to_field())
    }

    /// Adjoint `p` solving `K p = M (y − z)`, zero on the boundary; this is the
    /// convention `p(u) = S*(Su − z)`.
    pub fn solve_adjoint(&self, y: &FeFunction, z: &FeFunction) -> Result<FeFunction> {
        self.check_fn(y)?;
        self.check_fn(z)?;
        let residual = y.axpy(-1.0, z)?;
        self.apply_adjoint_operator(&residual)
    }

    /// `p(u) = S*(Su − z)` for this problem's target.
    pub fn adjoint_of(&self, u: &ControlField) -> Result<FeFunction> {
        let y = self.solve_state(u)?;
        self.solve_adjoint(&y, &self.target)
    }

    /// Nodal clamp onto the box.
    pub fn project_admissible(&self, v: &FeFunction) -> Result<FeFunction> {
        self.check_fn(v)?;
        FeFunction::new(self.space(), self.bounds.clamp_nodes(v.coeffs()))
    }

    /// Pointwise projection at the quadrature points.
    pub fn project_field(&self, v: &ControlField) -> Result<ControlField> {
        self.check_field(v)?;
        ControlField::new(self.space(), self.bounds.clamp_quad(v.values()))
    }

    /// `½‖Su − z‖²`.
    pub fn tracking_cost(&self, u: &ControlField) -> Result<f64> {
        let y = self.solve_state(u)?;
        let r = y.axpy(-1.0, &self.target)?;
        Ok(0.5 * self.ops.mass().bilinear(r.coeffs(), r.coeffs())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;

    fn problem_on(a: f64, b: f64, n: usize, lo: f64, hi: f64) -> ControlProblem {
        let space = FeSpace::new(Mesh::interval(a, b, n).unwrap()).unwrap();
        let bounds = BoxConstraints::constant(&space, lo, hi).unwrap();
        ControlProblem::new(&space, bounds, space.zero_function(), space.zero_field()).unwrap()
    }

    #[test]
    fn zero_source_gives_zero_state() {
        let p = problem_on(0.0, 1.0, 8, -1.0, 1.0);
        let y = p.solve_state(&p.space().zero_field()).unwrap();
        assert!(y.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_source_midpoint_value() {
        let p = problem_on(0.0, 1.0, 2, -1.0, 1.0);
        let one = p.space().sample(|_| 1.0).unwrap();
        let y = p.solve_state(&one).unwrap();
        assert!((y.coeffs()[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn adjoint_of_matching_state_vanishes() {
        let p = problem_on(0.0, 1.0, 8, -1.0, 1.0);
        let y = p.space().interpolate(|x| x[0] * (1.0 - x[0])).unwrap();
        let adj = p.solve_adjoint(&y, &y).unwrap();
        assert!(adj.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_unit_residual() {
        let p = problem_on(0.0, 1.0, 2, -1.0, 1.0);
        let y = p.space().interpolate(|_| 1.0).unwrap();
        let z = p.space().zero_function();
        let adj = p.solve_adjoint(&y, &z).unwrap();
        assert!((adj.coeffs()[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn projection_clamps_nodes() {
        let p = problem_on(0.0, 1.0, 2, 0.0, 0.1);
        let v = FeFunction::new(p.space(), vec![-2.0, 0.05, 2.0]).unwrap();
        assert_eq!(p.project_admissible(&v).unwrap().coeffs(), &[0.0, 0.05, 0.1]);
        let inside = FeFunction::new(p.space(), vec![0.0, 0.07, 0.1]).unwrap();
        assert_eq!(
            p.project_admissible(&inside).unwrap().coeffs(),
            inside.coeffs()
        );
    }

    #[test]
    fn inconsistent_bounds_rejected() {
        let space = FeSpace::new(Mesh::interval(0.0, 1.0, 4).unwrap()).unwrap();
        assert!(matches!(
            BoxConstraints::constant(&space, 1.0, 0.0),
            Err(Error::InvalidBounds { .. })
        ));
    }

    #[test]
    fn foreign_space_rejected() {
        let p = problem_on(0.0, 1.0, 4, -1.0, 1.0);
        let other = FeSpace::new(Mesh::interval(0.0, 1.0, 4).unwrap()).unwrap();
        assert!(matches!(
            p.solve_state(&other.zero_field()),
            Err(Error::SpaceMismatch)
        ));
    }
}
