//! Dense reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use bregman_ocp::problem::ControlProblem;

/// Dense matrices of the quadrature-level discretization.
pub struct DenseModel {
    /// Control-to-state map on quadrature values (`n × nq`).
    pub solution: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub weights: DVector<f64>,
    /// State produced by the fixed source.
    pub offset: DVector<f64>,
    pub target: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DenseModel {
    pub fn new(problem: &ControlProblem) -> Self {
        let space = problem.space();
        let n = space.num_dofs();
        let nq = space.num_quad();
        let stiff = &problem.operators().stiffness().full;
        let interior: Vec<usize> = (0..n).filter(|&i| !space.mesh().is_boundary(i)).collect();
        let m = interior.len();
        let mut kred = DMatrix::zeros(m, m);
        for (a, &i) in interior.iter().enumerate() {
            for (b, &j) in interior.iter().enumerate() {
                kred[(a, b)] = stiff.get(i, j);
            }
        }
        let kinv = kred.cholesky().expect("stiffness SPD").inverse();

        // load matrix: B[i, q] = w_q φ_i(x_q)
        let mut load = DMatrix::zeros(n, nq);
        for q in 0..nq {
            let (nodes, phi) = space.quad_basis(q);
            for (&i, &v) in nodes.iter().zip(phi) {
                load[(i, q)] += space.quad_weights()[q] * v;
            }
        }
        let mut solution = DMatrix::zeros(n, nq);
        let load_int = load.select_rows(&interior);
        let s_int = &kinv * load_int;
        for (a, &i) in interior.iter().enumerate() {
            solution.set_row(i, &s_int.row(a));
        }
        let mut mass = DMatrix::zeros(n, n);
        let mm = space.mass();
        for i in 0..n {
            let (cols, vals) = mm.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                mass[(i, j)] = v;
            }
        }
        let src = DVector::from_column_slice(problem.source().values());
        let offset = &solution * src;
        DenseModel {
            solution,
            mass,
            weights: DVector::from_column_slice(space.quad_weights()),
            offset,
            target: DVector::from_column_slice(problem.target().coeffs()),
            lower: problem.bounds().lower_quad().to_vec(),
            upper: problem.bounds().upper_quad().to_vec(),
        }
    }

    /// Hessian and linear term of the proximal subproblem in quadrature values.
    fn quadratic(&self, alpha: f64, lambda_q: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let st_m = self.solution.transpose() * &self.mass;
        let mut h = &st_m * &self.solution;
        for q in 0..self.weights.len() {
            h[(q, q)] += alpha * self.weights[q];
        }
        let lam = DVector::from_column_slice(lambda_q);
        let g = &st_m * (&self.offset - &self.target) - alpha * self.weights.component_mul(&lam);
        (h, g)
    }

    /// Unconstrained minimizer.
    pub fn solve_unconstrained(&self, alpha: f64, lambda_q: &[f64]) -> Vec<f64> {
        let (h, g) = self.quadratic(alpha, lambda_q);
        let u = h.cholesky().expect("Hessian SPD").solve(&(-g));
        u.iter().copied().collect()
    }

    /// Box-constrained minimizer by a dense primal-dual active set iteration.
    pub fn solve_box(&self, alpha: f64, lambda_q: &[f64]) -> Vec<f64> {
        let (h, g) = self.quadratic(alpha, lambda_q);
        let nq = g.len();
        let mut u: Vec<f64> = (0..nq)
            .map(|q| lambda_q[q].clamp(self.lower[q], self.upper[q]))
            .collect();
        let mut mu = vec![0.0; nq];
        let mut sets: Option<Vec<i8>> = None;
        for _ in 0..200 {
            let new_sets: Vec<i8> = (0..nq)
                .map(|q| {
                    let t = u[q] + mu[q] / alpha;
                    if t > self.upper[q] {
                        1
                    } else if t < self.lower[q] {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            if sets.as_ref() == Some(&new_sets) {
                return u;
            }
            let free: Vec<usize> = (0..nq).filter(|&q| new_sets[q] == 0).collect();
            let mut fixed = DVector::zeros(nq);
            for q in 0..nq {
                fixed[q] = match new_sets[q] {
                    1 => self.upper[q],
                    -1 => self.lower[q],
                    _ => 0.0,
                };
            }
            let rhs_full = -(&g + &h * &fixed);
            let mut x = fixed.clone();
            if !free.is_empty() {
                let hff = h.select_rows(&free).select_columns(&free);
                let rhs = rhs_full.select_rows(&free);
                let xf = hff.cholesky().expect("free block SPD").solve(&rhs);
                for (a, &q) in free.iter().enumerate() {
                    x[q] = xf[a];
                }
            }
            let grad = &h * &x + &g;
            for q in 0..nq {
                mu[q] = if new_sets[q] == 0 { 0.0 } else { -grad[q] / self.weights[q] };
                u[q] = x[q];
            }
            sets = Some(new_sets);
        }
        panic!("dense active set oracle did not converge");
    }
}

/// Quadrature-weighted L² distance.
pub fn quad_distance(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn quad_norm(w: &[f64], a: &[f64]) -> f64 {
    w.iter().zip(a).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}
