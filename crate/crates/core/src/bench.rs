//! Closed-form benchmark problems with known solutions.
//!
//! Each case carries the exact control `u†`, state `y†`, adjoint `p†`, the
//! data `z` and the source `e_Ω` as point functions. Adjoints are given in
//! each example's own sign convention; `adjoint_sign` maps them to the
//! convention `p(u) = S*(Su − z)` used by the solver.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bregman::{recover_control_field, BregmanState, RegularizationSchedule};
use crate::error::{Error, Result};
use crate::fem::{ControlField, Domain, FeSpace, Mesh, Point};
use crate::problem::{BoxConstraints, ControlProblem};
use crate::stopping::Regularity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Ex1, CaseId::Ex2, CaseId::Ex3, CaseId::Ex4];

    pub fn as_str(&self) -> &'static str {
        match self {
            CaseId::Ex1 => "ex1",
            CaseId::Ex2 => "ex2",
            CaseId::Ex3 => "ex3",
            CaseId::Ex4 => "ex4",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ex1" => Ok(CaseId::Ex1),
            "ex2" => Ok(CaseId::Ex2),
            "ex3" => Ok(CaseId::Ex3),
            "ex4" => Ok(CaseId::Ex4),
            _ => Err(Error::UnknownCase(s.to_string())),
        }
    }
}

/// Dense polynomial, ascending coefficients.
#[derive(Clone, Debug, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn from_roots(scale: f64, roots: &[f64]) -> Self {
        let mut p = Poly(vec![scale]);
        for &r in roots {
            p = p.mul(&Poly(vec![-r, 1.0]));
        }
        p
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut c = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly(c)
    }

    fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// `sin(πx)`, exactly zero at integers and exactly ±1 at half-integers.
pub fn sin_pi(x: f64) -> f64 {
    let twice = 2.0 * x;
    let n = twice.round();
    if twice == n {
        match (n as i64).rem_euclid(4) {
            1 => 1.0,
            3 => -1.0,
            _ => 0.0,
        }
    } else {
        (PI * x).sin()
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Piecewise polynomial on consecutive intervals `[breaks[i], breaks[i+1]]`.
#[derive(Clone, Debug)]
struct Piecewise {
    breaks: Vec<f64>,
    pieces: Vec<Poly>,
}

impl Piecewise {
    fn piece(&self, x: f64) -> &Poly {
        let i = self.breaks[1..self.breaks.len() - 1]
            .iter()
            .take_while(|&&b| x > b)
            .count();
        &self.pieces[i]
    }

    fn eval(&self, x: f64) -> f64 {
        self.piece(x).eval(x)
    }

    fn second_derivative(&self, x: f64) -> f64 {
        self.piece(x).derivative().derivative().eval(x)
    }
}

/// How the example states its data `z` in terms of `y†` and `p†`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConvention {
    /// `z = y† − Δp†`
    MinusLaplacian,
    /// `z = y† + Δp†`
    PlusLaplacian,
}

#[derive(Clone, Debug)]
enum Formulas {
    Ex1 {
        state: Piecewise,
        adjoint: Piecewise,
        quartic: Poly,
    },
    Ex2,
    Ex3 {
        adjoint: Poly,
    },
    Ex4,
}

/// One benchmark problem with its analytic solution and default parameters.
#[derive(Clone, Debug)]
pub struct BenchmarkCase {
    pub id: CaseId,
    pub domain: Domain,
    pub lower: f64,
    pub upper: f64,
    pub kappa: f64,
    pub tau: f64,
    pub alpha: f64,
    pub desk_dof: usize,
    pub full_dof: usize,
    pub convention: DataConvention,
    /// Solver adjoint equals `adjoint_sign · p†` when the example is consistent.
    pub adjoint_sign: f64,
    /// Abscissae (per coordinate) where the closed forms are not smooth.
    pub breakpoints: Vec<f64>,
    formulas: Formulas,
}

impl BenchmarkCase {
    pub fn new(id: CaseId) -> Self {
        match id {
            CaseId::Ex1 => {
                let state = Piecewise {
                    breaks: vec![-1.0, -0.5, 0.25, 0.75, 1.0],
                    pieces: vec![
                        Poly(vec![7.0 / 3072.0, 803.0 / 15360.0, 1.0 / 20.0]),
                        Poly(vec![-157.0 / 15360.0, 7.0 / 3072.0]),
                        Poly(vec![
                            -581.0 / 49152.0,
                            11.0 / 480.0,
                            -3.0 / 32.0,
                            1.0 / 6.0,
                            -13.0 / 192.0,
                            -1.0 / 20.0,
                            1.0 / 30.0,
                        ]),
                        Poly(vec![-271.0 / 15360.0, 271.0 / 15360.0]),
                    ]
                    .into_iter()
                    .map(|p| p.scale(-1.0))
                    .collect(),
                };
                let adjoint = Piecewise {
                    breaks: vec![-1.0, 0.25, 0.75, 1.0],
                    pieces: vec![
                        Poly::from_roots(1.0, &[-1.0, -0.5, -0.5, -0.5, 0.25, 0.25, 0.25, 0.25]),
                        Poly(vec![0.0]),
                        Poly::from_roots(1.0, &[1.0, 0.75, 0.75, 0.75, 0.75]).scale(-1.0),
                    ],
                };
                BenchmarkCase {
                    id,
                    domain: Domain::Interval { a: -1.0, b: 1.0 },
                    lower: 0.0,
                    upper: 0.1,
                    kappa: 0.25,
                    tau: 5e3,
                    alpha: 1.0,
                    desk_dof: 1025,
                    full_dof: 100_000,
                    convention: DataConvention::MinusLaplacian,
                    adjoint_sign: -1.0,
                    breakpoints: vec![-0.5, 0.25, 0.75],
                    formulas: Formulas::Ex1 {
                        state,
                        adjoint,
                        quartic: Poly::from_roots(1.0, &[-1.0, 0.25, 0.75, 1.0]),
                    },
                }
            }
            CaseId::Ex2 => BenchmarkCase {
                id,
                domain: Domain::Interval { a: -1.0, b: 1.0 },
                lower: -1.0,
                upper: 1.0,
                kappa: 1.0,
                tau: 1e6,
                alpha: 1.0,
                desk_dof: 1025,
                full_dof: 100_000,
                convention: DataConvention::PlusLaplacian,
                adjoint_sign: 1.0,
                breakpoints: vec![0.0],
                formulas: Formulas::Ex2,
            },
            CaseId::Ex3 => BenchmarkCase {
                id,
                domain: Domain::Interval { a: 0.0, b: 1.0 },
                lower: -1.0,
                upper: 1.0,
                kappa: 1.0 / 3.0,
                tau: 5e5,
                alpha: 1.0,
                desk_dof: 1025,
                full_dof: 100_000,
                convention: DataConvention::PlusLaplacian,
                adjoint_sign: 1.0,
                breakpoints: vec![1.0 / 3.0],
                formulas: Formulas::Ex3 {
                    adjoint: Poly::from_roots(-27.0, &[0.0, 1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
                },
            },
            CaseId::Ex4 => BenchmarkCase {
                id,
                domain: Domain::Rectangle {
                    x0: 0.0,
                    x1: 1.0,
                    y0: 0.0,
                    y1: 1.0,
                },
                lower: -1.0,
                upper: 1.0,
                kappa: 1.0,
                tau: 1e7,
                alpha: 0.1,
                desk_dof: 65 * 65,
                full_dof: 1_000_000,
                convention: DataConvention::PlusLaplacian,
                adjoint_sign: 1.0,
                breakpoints: vec![0.5],
                formulas: Formulas::Ex4,
            },
        }
    }

    pub fn regularity(&self) -> Regularity {
        Regularity::ActiveSet { kappa: self.kappa }
    }

    pub fn schedule(&self) -> RegularizationSchedule {
        RegularizationSchedule::Constant { alpha: self.alpha }
    }

    /// `p†` in the example's own convention.
    pub fn exact_adjoint(&self, x: Point) -> f64 {
        match &self.formulas {
            Formulas::Ex1 { adjoint, .. } => adjoint.eval(x[0]),
            Formulas::Ex2 => sin_pi(x[0]),
            Formulas::Ex3 { adjoint } => adjoint.eval(x[0]),
            Formulas::Ex4 => -sin_pi(2.0 * x[0]) * sin_pi(2.0 * x[1]) / (8.0 * PI * PI),
        }
    }

    pub fn exact_control(&self, x: Point) -> f64 {
        match &self.formulas {
            Formulas::Ex1 { quartic, .. } => {
                let t = x[0];
                if t <= -0.5 {
                    0.1
                } else if (0.25..=0.75).contains(&t) {
                    quartic.eval(t)
                } else {
                    0.0
                }
            }
            _ => -sign(self.exact_adjoint(x)),
        }
    }

    pub fn exact_state(&self, x: Point) -> f64 {
        match &self.formulas {
            Formulas::Ex1 { state, .. } => state.eval(x[0]),
            Formulas::Ex2 | Formulas::Ex3 { .. } => 1.0 - x[0] * x[0],
            Formulas::Ex4 => sin_pi(x[0]) * sin_pi(x[1]),
        }
    }

    /// `Δp†` from the closed form.
    fn adjoint_laplacian(&self, x: Point) -> f64 {
        match &self.formulas {
            Formulas::Ex1 { adjoint, .. } => adjoint.second_derivative(x[0]),
            Formulas::Ex2 => -PI * PI * sin_pi(x[0]),
            Formulas::Ex3 { adjoint } => adjoint.derivative().derivative().eval(x[0]),
            Formulas::Ex4 => sin_pi(2.0 * x[0]) * sin_pi(2.0 * x[1]),
        }
    }

    /// Data `z` as displayed for the example.
    pub fn target(&self, x: Point) -> f64 {
        match self.formulas {
            Formulas::Ex4 => {
                sin_pi(x[0]) * sin_pi(x[1]) + sin_pi(2.0 * x[0]) * sin_pi(2.0 * x[1])
            }
            _ => match self.convention {
                DataConvention::MinusLaplacian => self.exact_state(x) - self.adjoint_laplacian(x),
                DataConvention::PlusLaplacian => self.exact_state(x) + self.adjoint_laplacian(x),
            },
        }
    }

    /// Source `e_Ω`.
    pub fn source(&self, x: Point) -> f64 {
        match self.formulas {
            Formulas::Ex1 { .. } => 0.0,
            Formulas::Ex2 | Formulas::Ex3 { .. } => 2.0 - self.exact_control(x),
            Formulas::Ex4 => {
                2.0 * PI * PI * sin_pi(x[0]) * sin_pi(x[1]) - self.exact_control(x)
            }
        }
    }

    /// Builds the mesh for roughly `dof` unknowns: `dof` nodes in 1D, a
    /// `round(√dof)`-per-side node grid in 2D.
    pub fn mesh(&self, dof: usize) -> Result<Mesh> {
        if dof < 3 {
            return Err(Error::InvalidParameter(format!("dof must be >= 3, got {dof}")));
        }
        match self.domain {
            Domain::Interval { a, b } => Mesh::interval(a, b, dof - 1),
            Domain::Rectangle { x0, x1, y0, y1 } => {
                let side = ((dof as f64).sqrt().round() as usize).max(3);
                Mesh::rectangle(x0, x1, y0, y1, side - 1, side - 1)
            }
        }
    }

    /// `u†` at the quadrature points.
    pub fn exact_control_field(&self, space: &Arc<FeSpace>) -> Result<ControlField> {
        space.sample(|x| self.exact_control(x))
    }
}

/// Builds the discrete problem for `id` with about `dof` unknowns.
pub fn build_case(id: CaseId, dof: usize) -> Result<(ControlProblem, BenchmarkCase)> {
    let case = BenchmarkCase::new(id);
    let space = FeSpace::new(case.mesh(dof)?)?;
    let bounds = BoxConstraints::constant(&space, case.lower, case.upper)?;
    let target = space.interpolate(|x| case.target(x))?;
    let source = space.sample(|x| case.source(x))?;
    let problem = ControlProblem::new(&space, bounds, target, source)?;
    Ok((problem, case))
}

/// `‖P(λ_k) − u†‖` over the quadrature points.
pub fn error_to_exact(
    state: &BregmanState,
    case: &BenchmarkCase,
    problem: &ControlProblem,
) -> Result<f64> {
    let u = recover_control_field(state, problem)?;
    u.distance(&case.exact_control_field(problem.space())?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub tolerance: f64,
    pub worst_violation: f64,
    pub worst_point: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub case: CaseId,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<16} {} worst={:.3e} at ({:.6}, {:.6}) tol={:.0e} n={}",
                self.case,
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.worst_violation,
                c.worst_point[0],
                c.worst_point[1],
                c.tolerance,
                c.samples
            )?;
        }
        Ok(())
    }
}

pub const FD_STEP: f64 = 1e-4;
pub const VERIFY_TOL: f64 = 1e-4;
/// Below this magnitude the adjoint is treated as zero by the
/// complementarity check.
const ADJOINT_ZERO: f64 = 1e-12;

fn interior_samples(case: &BenchmarkCase, count: usize) -> Vec<Point> {
    let margin = 4.0 * FD_STEP;
    let near_break = |t: f64| case.breakpoints.iter().any(|b| (t - b).abs() < margin);
    match case.domain {
        Domain::Interval { a, b } => {
            let mut pts = Vec::with_capacity(count);
            let mut n = count;
            // refine the grid until enough points survive the breakpoint filter
            while pts.len() < count {
                pts = (0..n)
                    .map(|i| a + (i as f64 + 0.5) * (b - a) / n as f64)
                    .filter(|&t| !near_break(t) && t - a > margin && b - t > margin)
                    .map(|t| [t, 0.0])
                    .collect();
                n += 1;
            }
            pts
        }
        Domain::Rectangle { x0, x1, y0, y1 } => {
            let mut side = (count as f64).sqrt().ceil() as usize;
            loop {
                let axis = |lo: f64, hi: f64| -> Vec<f64> {
                    (0..side)
                        .map(|i| lo + (i as f64 + 0.5) * (hi - lo) / side as f64)
                        .filter(|&t| !near_break(t) && t - lo > margin && hi - t > margin)
                        .collect()
                };
                let xs = axis(x0, x1);
                let ys = axis(y0, y1);
                if xs.len() * ys.len() >= count {
                    return ys
                        .iter()
                        .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
                        .collect();
                }
                side += 1;
            }
        }
    }
}

fn boundary_samples(case: &BenchmarkCase, count: usize) -> Vec<Point> {
    match case.domain {
        Domain::Interval { a, b } => vec![[a, 0.0], [b, 0.0]],
        Domain::Rectangle { x0, x1, y0, y1 } => {
            let per_side = (count / 4).max(2);
            let mut pts = Vec::with_capacity(4 * per_side);
            for i in 0..per_side {
                let s = i as f64 / (per_side - 1) as f64;
                let x = x0 + s * (x1 - x0);
                let y = y0 + s * (y1 - y0);
                pts.extend([[x, y0], [x, y1], [x0, y], [x1, y]]);
            }
            pts
        }
    }
}

/// Second-difference Laplacian with step `h`.
fn fd_laplacian(f: impl Fn(Point) -> f64, x: Point, h: f64, dim: usize) -> f64 {
    let c = f(x);
    let mut lap = (f([x[0] + h, x[1]]) - 2.0 * c + f([x[0] - h, x[1]])) / (h * h);
    if dim == 2 {
        lap += (f([x[0], x[1] + h]) - 2.0 * c + f([x[0], x[1] - h])) / (h * h);
    }
    lap
}

fn worst_of(name: &str, tol: f64, points: &[Point], violation: impl Fn(Point) -> f64) -> CheckResult {
    let mut worst = 0.0;
    let mut at = points.first().copied().unwrap_or([0.0, 0.0]);
    for &x in points {
        let v = violation(x);
        if v > worst || v.is_nan() {
            worst = v;
            at = x;
        }
    }
    CheckResult {
        name: name.to_string(),
        passed: worst <= tol,
        samples: points.len(),
        tolerance: tol,
        worst_violation: worst,
        worst_point: at,
    }
}

/// Checks the closed forms of a case at `samples` interior points:
///
/// * `state_equation`: `−Δy† = u† + e_Ω` by finite differences
/// * `data_consistency`: `z` against `y† ∓ Δp†` per the example's convention
/// * `complementarity`: `u† = u_b` where the solver adjoint is negative,
///   `u† = u_a` where it is positive, and `u†` admissible everywhere
/// * `boundary_traces`: `y†` and `p†` vanish on the boundary
pub fn verify_case(case: &BenchmarkCase, samples: usize) -> Result<VerificationReport> {
    if samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "verification needs at least 100 samples, got {samples}"
        )));
    }
    let dim = case.domain.dim();
    let pts = interior_samples(case, samples);
    let h = FD_STEP;

    let state_eq = worst_of("state_equation", VERIFY_TOL, &pts, |x| {
        let lhs = -fd_laplacian(|p| case.exact_state(p), x, h, dim);
        (lhs - case.exact_control(x) - case.source(x)).abs()
    });

    let sign = match case.convention {
        DataConvention::MinusLaplacian => -1.0,
        DataConvention::PlusLaplacian => 1.0,
    };
    let data = worst_of("data_consistency", VERIFY_TOL, &pts, |x| {
        let lap = fd_laplacian(|p| case.exact_adjoint(p), x, h, dim);
        (case.target(x) - case.exact_state(x) - sign * lap).abs()
    });

    let comp = worst_of("complementarity", VERIFY_TOL, &pts, |x| {
        let u = case.exact_control(x);
        let p = case.adjoint_sign * case.exact_adjoint(x);
        let outside = (case.lower - u).max(u - case.upper).max(0.0);
        let mismatch = if p < -ADJOINT_ZERO {
            (u - case.upper).abs()
        } else if p > ADJOINT_ZERO {
            (u - case.lower).abs()
        } else {
            0.0
        };
        outside.max(mismatch)
    });

    let bnd = boundary_samples(case, samples);
    let traces = worst_of("boundary_traces", VERIFY_TOL, &bnd, |x| {
        case.exact_state(x).abs().max(case.exact_adjoint(x).abs())
    });

    Ok(VerificationReport {
        case: case.id,
        checks: vec![state_eq, data, comp, traces],
    })
}

/// One row of a run's convergence history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub k: usize,
    pub alpha_k: f64,
    pub gamma_k: f64,
    pub err_exact: f64,
    pub e_n: f64,
    pub e_r: f64,
    pub stopped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub case: CaseId,
    pub delta: f64,
    pub tau: f64,
    pub seed: u64,
    pub dof: usize,
    pub schedule: String,
    pub regularity: String,
}

/// Convergence history of one run; at most one row is flagged `stopped`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn stopped_row(&self) -> Option<&RunRow> {
        self.rows.iter().find(|r| r.stopped)
    }

    /// Smallest error and the step where it occurs.
    pub fn min_error(&self) -> Option<(usize, f64)> {
        self.rows
            .iter()
            .map(|r| (r.k, r.err_exact))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Smallest error over steps `1..=k`.
    pub fn min_error_up_to(&self, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.k <= k)
            .map(|r| r.err_exact)
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn error_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k).map(|r| r.err_exact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_pi_exact_zeros() {
        for n in -4..=4 {
            assert_eq!(sin_pi(n as f64), 0.0);
        }
        assert_eq!(sin_pi(0.5), 1.0);
        assert_eq!(sin_pi(-0.5), -1.0);
        assert_eq!(sin_pi(1.5), -1.0);
        assert!((sin_pi(0.3) - (PI * 0.3).sin()).abs() < 1e-16);
    }

    #[test]
    fn poly_basics() {
        let p = Poly::from_roots(2.0, &[1.0, -1.0]);
        assert_eq!(p.0, vec![-2.0, 0.0, 2.0]);
        assert_eq!(p.derivative().derivative().eval(7.0), 4.0);
        assert_eq!(Poly(vec![3.0]).derivative().eval(1.0), 0.0);
    }

    #[test]
    fn case_ids_parse() {
        for id in CaseId::ALL {
            assert_eq!(id.as_str().parse::<CaseId>().unwrap(), id);
        }
        assert!(matches!("ex9".parse::<CaseId>(), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn ex1_control_pieces() {
        let c = BenchmarkCase::new(CaseId::Ex1);
        assert_eq!(c.exact_control([-0.75, 0.0]), 0.1);
        assert_eq!(c.exact_control([0.0, 0.0]), 0.0);
        let x = 0.5;
        let q = (x + 1.0) * (x - 0.25) * (x - 0.75) * (x - 1.0);
        assert!((c.exact_control([x, 0.0]) - q).abs() < 1e-16);
        assert_eq!(c.exact_control([0.9, 0.0]), 0.0);
    }

    #[test]
    fn ex1_state_is_continuous() {
        let c = BenchmarkCase::new(CaseId::Ex1);
        for &b in &c.breakpoints {
            let l = c.exact_state([b - 1e-12, 0.0]);
            let r = c.exact_state([b + 1e-12, 0.0]);
            assert!((l - r).abs() < 1e-12, "jump at {b}");
        }
    }

    #[test]
    fn ex2_second_difference() {
        let c = BenchmarkCase::new(CaseId::Ex2);
        let x = [0.3, 0.0];
        let lap = fd_laplacian(|p| c.exact_state(p), x, FD_STEP, 1);
        assert!((-lap - 2.0).abs() < 1e-6);
        assert!((c.exact_control(x) + c.source(x) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mesh_sizes() {
        let c = BenchmarkCase::new(CaseId::Ex2);
        assert_eq!(c.mesh(1025).unwrap().num_nodes(), 1025);
        let c = BenchmarkCase::new(CaseId::Ex4);
        assert_eq!(c.mesh(4225).unwrap().num_nodes(), 4225);
        assert!(c.mesh(2).is_err());
    }

    #[test]
    fn samples_avoid_breakpoints() {
        let c = BenchmarkCase::new(CaseId::Ex1);
        let pts = interior_samples(&c, 1000);
        assert!(pts.len() >= 1000);
        for p in pts {
            assert!(c.breakpoints.iter().all(|b| (p[0] - b).abs() >= 4.0 * FD_STEP));
        }
        let c = BenchmarkCase::new(CaseId::Ex4);
        assert!(interior_samples(&c, 1000).len() >= 1000);
    }

    #[test]
    fn verification_needs_enough_samples() {
        assert!(verify_case(&BenchmarkCase::new(CaseId::Ex2), 10).is_err());
    }
}
