use super::space::{FeSpace, PointLabel, PointwiseClassification};
use crate::error::{Error, Result};
use crate::linalg::{Factorization, SparseSymMatrix};

/// Stiffness matrix before and after symmetric elimination of the Dirichlet
/// (boundary) nodes.
#[derive(Clone, Debug)]
pub struct Stiffness {
    pub full: SparseSymMatrix,
    pub reduced: SparseSymMatrix,
    /// Full-space index of each reduced row.
    pub interior: Vec<usize>,
}

pub fn assemble_stiffness(space: &FeSpace) -> Result<Stiffness> {
    let mesh = space.mesh();
    let k = mesh.nodes_per_cell();
    let mut triplets = Vec::with_capacity(mesh.num_cells() * k * k);
    for c in 0..mesh.num_cells() {
        let grads = mesh.cell_gradients(c)?;
        let meas = mesh.cell_measure(c);
        let nodes = mesh.cell(c);
        for a in 0..k {
            for b in 0..k {
                let g = grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1];
                triplets.push((nodes[a], nodes[b], meas * g));
            }
        }
    }
    let full = SparseSymMatrix::from_triplets(mesh.num_nodes(), &triplets)?;
    let interior = mesh.interior_nodes();
    let reduced = full.principal_submatrix(&interior);
    Ok(Stiffness {
        full,
        reduced,
        interior,
    })
}

pub(crate) fn mass_matrix(space: &FeSpace) -> Result<SparseSymMatrix> {
    masked_mass(space, |_| true)
}

pub fn assemble_mass(space: &FeSpace) -> Result<SparseSymMatrix> {
    mass_matrix(space)
}

/// Mass matrix integrated only over the quadrature points carrying `label`.
pub fn assemble_truncated_mass(
    space: &FeSpace,
    cls: &PointwiseClassification,
    label: PointLabel,
) -> Result<SparseSymMatrix> {
    if cls.len() != space.num_quad() {
        return Err(Error::DimensionMismatch {
            expected: space.num_quad(),
            found: cls.len(),
        });
    }
    masked_mass(space, |q| cls.is(q, label))
}

fn masked_mass(space: &FeSpace, mask: impl Fn(usize) -> bool) -> Result<SparseSymMatrix> {
    let k = space.mesh().nodes_per_cell();
    let w = space.quad_weights();
    let mut triplets = Vec::with_capacity(space.num_quad() * k * k);
    for q in 0..space.num_quad() {
        if !mask(q) {
            continue;
        }
        let (nodes, phi) = space.quad_basis(q);
        for a in 0..k {
            for b in 0..k {
                let v = w[q] * phi[a] * phi[b];
                if v != 0.0 {
                    triplets.push((nodes[a], nodes[b], v));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(space.num_dofs(), &triplets)
}

/// Factorized Dirichlet Laplacian: maps a full-space load vector `f` to the
/// nodal vector `y` with `K_red y_int = f_int` and `y = 0` on the boundary.
#[derive(Clone, Debug)]
pub struct DirichletSolver {
    n: usize,
    interior: Vec<usize>,
    factor: Factorization,
}

impl DirichletSolver {
    pub fn new(stiffness: &Stiffness) -> Result<Self> {
        Ok(Self {
            n: stiffness.full.dim(),
            interior: stiffness.interior.clone(),
            factor: Factorization::new(&stiffness.reduced)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: load.len(),
            });
        }
        let mut rhs: Vec<f64> = self.interior.iter().map(|&i| load[i]).collect();
        self.factor.solve_in_place(&mut rhs)?;
        let mut y = vec![0.0; self.n];
        for (&i, v) in self.interior.iter().zip(rhs) {
            y[i] = v;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;
    use std::sync::Arc;

    fn interval(a: f64, b: f64, n: usize) -> Arc<FeSpace> {
        FeSpace::new(Mesh::interval(a, b, n).unwrap()).unwrap()
    }

    #[test]
    fn stiffness_two_elements() {
        let k = assemble_stiffness(&interval(0.0, 1.0, 2)).unwrap();
        assert_eq!(k.reduced.to_dense(), vec![4.0]);
    }

    #[test]
    fn stiffness_four_elements() {
        let k = assemble_stiffness(&interval(0.0, 1.0, 4)).unwrap();
        let expected = [8.0, -4.0, 0.0, -4.0, 8.0, -4.0, 0.0, -4.0, 8.0];
        for (a, b) in k.reduced.to_dense().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_single_cell_square_has_no_interior() {
        let s = FeSpace::new(Mesh::unit_square(1).unwrap()).unwrap();
        let k = assemble_stiffness(&s).unwrap();
        assert_eq!(k.reduced.dim(), 0);
        assert_eq!(k.full.dim(), 4);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        for s in [
            interval(-1.0, 1.0, 9),
            FeSpace::new(Mesh::rectangle(0.0, 2.0, 0.0, 1.0, 4, 3).unwrap()).unwrap(),
        ] {
            let k = assemble_stiffness(&s).unwrap();
            let r = k.full.spmv(&vec![1.0; s.num_dofs()]).unwrap();
            assert!(r.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn mass_middle_row() {
        let m = assemble_mass(&interval(0.0, 1.0, 2)).unwrap();
        let row = [m.get(1, 0), m.get(1, 1), m.get(1, 2)];
        for (a, b) in row.iter().zip([1.0 / 12.0, 1.0 / 3.0, 1.0 / 12.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_partition_of_unity() {
        for s in [
            interval(-1.0, 1.0, 7),
            FeSpace::new(Mesh::rectangle(0.0, 2.0, 0.0, 1.5, 3, 4).unwrap()).unwrap(),
        ] {
            let m = assemble_mass(&s).unwrap();
            let ones = vec![1.0; s.num_dofs()];
            let total: f64 = m.spmv(&ones).unwrap().iter().sum();
            assert!((total - s.mesh().domain().measure()).abs() < 1e-13);
            assert!(m.to_dense().iter().all(|&v| v >= 0.0));
            assert!(m.is_symmetric());
        }
    }

    #[test]
    fn truncated_mass_extremes() {
        let s = interval(0.0, 1.0, 5);
        let m = assemble_mass(&s).unwrap();
        let all = PointwiseClassification::uniform(&s, PointLabel::Inactive);
        assert_eq!(
            assemble_truncated_mass(&s, &all, PointLabel::Inactive).unwrap(),
            m
        );
        let none = PointwiseClassification::uniform(&s, PointLabel::ActiveUpper);
        let mi = assemble_truncated_mass(&s, &none, PointLabel::Inactive).unwrap();
        assert_eq!(mi.nnz(), 0);
    }

    #[test]
    fn truncated_mass_split_by_element() {
        let s = interval(0.0, 1.0, 2);
        // two Gauss points per element: left element inactive, right active upper
        let labels = vec![
            PointLabel::Inactive,
            PointLabel::Inactive,
            PointLabel::ActiveUpper,
            PointLabel::ActiveUpper,
        ];
        let cls = PointwiseClassification::new(labels);
        let mi = assemble_truncated_mass(&s, &cls, PointLabel::Inactive).unwrap();
        let mb = assemble_truncated_mass(&s, &cls, PointLabel::ActiveUpper).unwrap();
        let m = assemble_mass(&s).unwrap();
        let h = 0.5;
        // left element: h/6 [[2,1],[1,2]] on nodes 0,1
        assert!((mi.get(0, 0) - h / 3.0).abs() < 1e-15);
        assert!((mi.get(0, 1) - h / 6.0).abs() < 1e-15);
        assert_eq!(mi.get(2, 2), 0.0);
        for (i, j) in (0..3).flat_map(|i| (0..3).map(move |j| (i, j))) {
            assert!((mi.get(i, j) + mb.get(i, j) - m.get(i, j)).abs() <= 1e-14);
        }
    }

    #[test]
    fn dirichlet_solve_constant_source() {
        // -y'' = 1 on (0,1), y(0.5) = 1/8 is nodally exact for P1
        let s = interval(0.0, 1.0, 2);
        let k = assemble_stiffness(&s).unwrap();
        let solver = DirichletSolver::new(&k).unwrap();
        let load = s.mass().spmv(&[1.0; 3]).unwrap();
        let y = solver.solve(&load).unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[2], 0.0);
        assert!((y[1] - 0.125).abs() < 1e-15);
    }
}
