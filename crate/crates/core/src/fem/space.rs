use std::sync::{Arc, OnceLock};

use super::mesh::{Mesh, Point};
use crate::error::{Error, Result};
use crate::linalg::SparseSymMatrix;

/// Quadrature rule on the reference cell in barycentric coordinates; weights
/// sum to one and are scaled by the cell measure.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Two-point Gauss rule, exact to degree 3.
    pub fn gauss2() -> Self {
        let s = 0.5 / 3f64.sqrt();
        Self {
            points: vec![vec![0.5 + s, 0.5 - s], vec![0.5 - s, 0.5 + s]],
            weights: vec![0.5, 0.5],
        }
    }

    /// Three-point Gauss rule, exact to degree 5.
    pub fn gauss3() -> Self {
        let s = 0.5 * (0.6f64).sqrt();
        Self {
            points: vec![
                vec![0.5 + s, 0.5 - s],
                vec![0.5, 0.5],
                vec![0.5 - s, 0.5 + s],
            ],
            weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
        }
    }

    /// Edge-midpoint rule on triangles, exact to degree 2.
    pub fn edge_midpoints() -> Self {
        Self {
            points: vec![
                vec![0.5, 0.5, 0.0],
                vec![0.0, 0.5, 0.5],
                vec![0.5, 0.0, 0.5],
            ],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// Seven-point symmetric triangle rule, exact to degree 5.
    pub fn triangle7() -> Self {
        let (a1, b1) = (0.059_715_871_789_770, 0.470_142_064_105_115);
        let (a2, b2) = (0.797_426_985_353_087, 0.101_286_507_323_456);
        let (w1, w2) = (0.132_394_152_788_506, 0.125_939_180_544_827);
        let third = 1.0 / 3.0;
        Self {
            points: vec![
                vec![third, third, third],
                vec![a1, b1, b1],
                vec![b1, a1, b1],
                vec![b1, b1, a1],
                vec![a2, b2, b2],
                vec![b2, a2, b2],
                vec![b2, b2, a2],
            ],
            weights: vec![0.225, w1, w1, w1, w2, w2, w2],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Piecewise-linear Lagrange space on a mesh together with the quadrature
/// points used to represent controls and truncated mass matrices.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Mesh,
    rule: QuadratureRule,
    qp_cell: Vec<usize>,
    qp_weight: Vec<f64>,
    qp_coord: Vec<Point>,
    qp_basis: Vec<f64>,
    mass: OnceLock<SparseSymMatrix>,
}

impl FeSpace {
    /// Default rule: 2-point Gauss per interval, edge midpoints per triangle.
    pub fn new(mesh: Mesh) -> Result<Arc<Self>> {
        let rule = match mesh.dim() {
            1 => QuadratureRule::gauss2(),
            _ => QuadratureRule::edge_midpoints(),
        };
        Self::with_rule(mesh, rule)
    }

    pub fn with_rule(mesh: Mesh, rule: QuadratureRule) -> Result<Arc<Self>> {
        let k = mesh.nodes_per_cell();
        if rule.points.iter().any(|p| p.len() != k) {
            return Err(Error::InvalidParameter(
                "quadrature rule does not match the cell type".into(),
            ));
        }
        let nq = mesh.num_cells() * rule.len();
        let mut qp_cell = Vec::with_capacity(nq);
        let mut qp_weight = Vec::with_capacity(nq);
        let mut qp_coord = Vec::with_capacity(nq);
        let mut qp_basis = Vec::with_capacity(nq * k);
        for c in 0..mesh.num_cells() {
            let meas = mesh.cell_measure(c);
            if !(meas > 0.0) {
                return Err(Error::DegenerateElement(c));
            }
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                qp_cell.push(c);
                qp_weight.push(w * meas);
                qp_coord.push(mesh.map_point(c, bary));
                qp_basis.extend_from_slice(bary);
            }
        }
        Ok(Arc::new(Self {
            mesh,
            rule,
            qp_cell,
            qp_weight,
            qp_coord,
            qp_basis,
            mass: OnceLock::new(),
        }))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_quad(&self) -> usize {
        self.qp_weight.len()
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.qp_weight
    }

    pub fn quad_points(&self) -> &[Point] {
        &self.qp_coord
    }

    /// Global node indices and basis values at quadrature point `q`.
    pub fn quad_basis(&self, q: usize) -> (&[usize], &[f64]) {
        let k = self.mesh.nodes_per_cell();
        (
            self.mesh.cell(self.qp_cell[q]),
            &self.qp_basis[q * k..(q + 1) * k],
        )
    }

    /// Consistent mass matrix, assembled on first use.
    pub fn mass(&self) -> &SparseSymMatrix {
        self.mass
            .get_or_init(|| super::assembly::mass_matrix(self).expect("mass assembly on a validated space"))
    }

    /// Values of the nodal vector `coeffs` at all quadrature points.
    pub fn eval_at_quad(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.num_quad())
            .map(|q| {
                let (nodes, phi) = self.quad_basis(q);
                nodes.iter().zip(phi).map(|(&i, &v)| v * coeffs[i]).sum()
            })
            .collect()
    }

    /// Load vector `bᵢ = Σ_q w_q f_q φᵢ(x_q)`, restricted to the points where
    /// `mask` holds.
    pub fn load_masked(&self, values: &[f64], mask: impl Fn(usize) -> bool) -> Vec<f64> {
        let mut b = vec![0.0; self.num_dofs()];
        for q in 0..self.num_quad() {
            if !mask(q) {
                continue;
            }
            let wf = self.qp_weight[q] * values[q];
            let (nodes, phi) = self.quad_basis(q);
            for (&i, &v) in nodes.iter().zip(phi) {
                b[i] += wf * v;
            }
        }
        b
    }

    pub fn load(&self, values: &[f64]) -> Vec<f64> {
        self.load_masked(values, |_| true)
    }

    /// Nodal interpolation of a pointwise function.
    pub fn interpolate(self: &Arc<Self>, f: impl Fn(Point) -> f64) -> Result<FeFunction> {
        let coeffs = self
            .mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let v = f(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { node: i })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeFunction {
            space: Arc::clone(self),
            coeffs,
        })
    }

    /// Samples a pointwise function at the quadrature points.
    pub fn sample(self: &Arc<Self>, f: impl Fn(Point) -> f64) -> Result<ControlField> {
        let values = self
            .qp_coord
            .iter()
            .enumerate()
            .map(|(q, &x)| {
                let v = f(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::InvalidParameter(format!(
                        "non-finite value at quadrature point {q}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlField {
            space: Arc::clone(self),
            values,
        })
    }

    pub fn zero_function(self: &Arc<Self>) -> FeFunction {
        FeFunction::new(self, vec![0.0; self.num_dofs()]).expect("length matches")
    }

    pub fn zero_field(self: &Arc<Self>) -> ControlField {
        ControlField::new(self, vec![0.0; self.num_quad()]).expect("length matches")
    }

    /// L² distance between a finite element function and a pointwise function,
    /// integrated with a degree-5 rule so the result reflects the
    /// discretization error rather than the quadrature error.
    pub fn l2_error(&self, u: &FeFunction, f: impl Fn(Point) -> f64) -> f64 {
        let rule = match self.mesh.dim() {
            1 => QuadratureRule::gauss3(),
            _ => QuadratureRule::triangle7(),
        };
        let mut acc = 0.0;
        for c in 0..self.mesh.num_cells() {
            let nodes = self.mesh.cell(c);
            let meas = self.mesh.cell_measure(c);
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let uh: f64 = nodes.iter().zip(bary).map(|(&i, &l)| l * u.coeffs[i]).sum();
                let d = uh - f(self.mesh.map_point(c, bary));
                acc += w * meas * d * d;
            }
        }
        acc.sqrt()
    }
}

/// Coefficient vector of a piecewise-linear function.
#[derive(Clone, Debug)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: space.num_dofs(),
                found: coeffs.len(),
            });
        }
        Ok(Self {
            space: Arc::clone(space),
            coeffs,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn same_space(&self, other: &FeFunction) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    /// Values at the quadrature points.
    pub fn to_field(&self) -> ControlField {
        ControlField {
            space: Arc::clone(&self.space),
            values: self.space.eval_at_quad(&self.coeffs),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeFunction {
        FeFunction {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &FeFunction) -> Result<FeFunction> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(FeFunction {
            space: Arc::clone(&self.space),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x + a * y)
                .collect(),
        })
    }
}

/// `uᵀ M v`.
pub fn l2_inner(u: &FeFunction, v: &FeFunction) -> Result<f64> {
    if !u.same_space(v) {
        return Err(Error::SpaceMismatch);
    }
    u.space.mass().bilinear(&u.coeffs, &v.coeffs)
}

pub fn l2_norm(u: &FeFunction) -> f64 {
    l2_inner(u, u).expect("same space").max(0.0).sqrt()
}

/// A function known by its values at the quadrature points of a space.
///
/// Controls live here: the pointwise projection of a piecewise-linear function
/// onto the admissible box is not itself piecewise linear. The L² inner product
/// is the quadrature sum, which agrees with `uᵀMv` for piecewise-linear inputs.
#[derive(Clone, Debug)]
pub struct ControlField {
    space: Arc<FeSpace>,
    values: Vec<f64>,
}

impl ControlField {
    pub fn new(space: &Arc<FeSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.num_quad() {
            return Err(Error::DimensionMismatch {
                expected: space.num_quad(),
                found: values.len(),
            });
        }
        Ok(Self {
            space: Arc::clone(space),
            values,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_space(&self, other: &ControlField) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    pub fn inner(&self, other: &ControlField) -> Result<f64> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(self
            .space
            .quad_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).expect("same space").max(0.0).sqrt()
    }

    pub fn distance(&self, other: &ControlField) -> Result<f64> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(self
            .space
            .quad_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &ControlField) -> Result<ControlField> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(ControlField {
            space: Arc::clone(&self.space),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        })
    }

    /// Load vector `∫ u φᵢ`.
    pub fn load(&self) -> Vec<f64> {
        self.space.load(&self.values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointLabel {
    ActiveLower,
    Inactive,
    ActiveUpper,
}

/// Active/inactive label for every quadrature point of a space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointwiseClassification {
    labels: Vec<PointLabel>,
}

impl PointwiseClassification {
    pub fn new(labels: Vec<PointLabel>) -> Self {
        Self { labels }
    }

    pub fn uniform(space: &FeSpace, label: PointLabel) -> Self {
        Self {
            labels: vec![label; space.num_quad()],
        }
    }

    pub fn labels(&self) -> &[PointLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, label: PointLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn is(&self, q: usize, label: PointLabel) -> bool {
        self.labels[q] == label
    }

    /// Number of points whose label differs from `other`.
    pub fn changes(&self, other: &PointwiseClassification) -> usize {
        self.labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count()
    }
}
