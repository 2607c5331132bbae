use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Computational domain. 1D points use only the first coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
        }
    }
}

/// Equidistant interval mesh or structured triangulation of a rectangle.
///
/// In 2D every grid cell is split along its lower-left to upper-right
/// diagonal. Nodes are numbered row by row, `node(i, j) = j·(nx+1) + i`.
#[derive(Clone, Debug)]
pub struct Mesh {
    domain: Domain,
    divisions: (usize, usize),
    nodes: Vec<Point>,
    cells: Vec<usize>,
    is_boundary: Vec<bool>,
}

impl Mesh {
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("interval mesh needs at least one element".into()));
        }
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidMesh(format!("empty interval ({a}, {b})")));
        }
        let h = (b - a) / n as f64;
        let nodes: Vec<Point> = (0..=n)
            .map(|i| {
                let x = if i == n { b } else { a + i as f64 * h };
                [x, 0.0]
            })
            .collect();
        let cells = (0..n).flat_map(|e| [e, e + 1]).collect();
        let mut is_boundary = vec![false; n + 1];
        is_boundary[0] = true;
        is_boundary[n] = true;
        Ok(Self {
            domain: Domain::Interval { a, b },
            divisions: (n, 0),
            nodes,
            cells,
            is_boundary,
        })
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh("rectangle mesh needs nx, ny >= 1".into()));
        }
        if !(x1 > x0) || !(y1 > y0) {
            return Err(Error::InvalidMesh(format!(
                "empty rectangle ({x0}, {x1}) x ({y0}, {y1})"
            )));
        }
        let hx = (x1 - x0) / nx as f64;
        let hy = (y1 - y0) / ny as f64;
        let coord = |i: usize, n: usize, lo: f64, hi: f64, h: f64| {
            if i == n {
                hi
            } else {
                lo + i as f64 * h
            }
        };
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut is_boundary = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([coord(i, nx, x0, x1, hx), coord(j, ny, y0, y1, hy)]);
                is_boundary.push(i == 0 || j == 0 || i == nx || j == ny);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut cells = Vec::with_capacity(6 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                cells.extend_from_slice(&[a, b, c]);
                cells.extend_from_slice(&[a, c, d]);
            }
        }
        Ok(Self {
            domain: Domain::Rectangle { x0, x1, y0, y1 },
            divisions: (nx, ny),
            nodes,
            cells,
            is_boundary,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::rectangle(0.0, 1.0, 0.0, 1.0, n, n)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn divisions(&self) -> (usize, usize) {
        self.divisions
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.dim() + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / self.nodes_per_cell()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.nodes_per_cell();
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.is_boundary[i]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| !self.is_boundary[i]).collect()
    }

    /// Signed measure of a cell (length in 1D, area in 2D).
    pub fn cell_measure(&self, c: usize) -> f64 {
        let v = self.cell(c);
        match self.dim() {
            1 => self.nodes[v[1]][0] - self.nodes[v[0]][0],
            _ => {
                let [ax, ay] = self.nodes[v[0]];
                let [bx, by] = self.nodes[v[1]];
                let [cx, cy] = self.nodes[v[2]];
                0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
            }
        }
    }

    /// Constant gradients of the cell's local basis functions.
    pub fn cell_gradients(&self, c: usize) -> Result<Vec<Point>> {
        let v = self.cell(c);
        let meas = self.cell_measure(c);
        if !(meas > 0.0) {
            return Err(Error::DegenerateElement(c));
        }
        Ok(match self.dim() {
            1 => vec![[-1.0 / meas, 0.0], [1.0 / meas, 0.0]],
            _ => {
                let p: Vec<Point> = v.iter().map(|&i| self.nodes[i]).collect();
                let two_area = 2.0 * meas;
                (0..3)
                    .map(|k| {
                        let a = p[(k + 1) % 3];
                        let b = p[(k + 2) % 3];
                        [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area]
                    })
                    .collect()
            }
        })
    }

    /// Maps barycentric coordinates on cell `c` to a physical point.
    pub fn map_point(&self, c: usize, bary: &[f64]) -> Point {
        let mut x = [0.0, 0.0];
        for (&node, &l) in self.cell(c).iter().zip(bary) {
            x[0] += l * self.nodes[node][0];
            x[1] += l * self.nodes[node][1];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        assert_eq!(Mesh::interval(0.0, 1.0, 8).unwrap().num_nodes(), 9);
        let m = Mesh::rectangle(0.0, 2.0, 0.0, 1.0, 4, 3).unwrap();
        assert_eq!(m.num_nodes(), 5 * 4);
        assert_eq!(m.num_cells(), 2 * 4 * 3);
        assert_eq!(m.boundary_nodes().len(), 2 * 5 + 2 * 2);
    }

    #[test]
    fn cells_tile_the_domain() {
        for m in [
            Mesh::interval(-1.0, 1.0, 7).unwrap(),
            Mesh::rectangle(0.0, 2.0, -1.0, 1.0, 5, 3).unwrap(),
        ] {
            let total: f64 = (0..m.num_cells()).map(|c| m.cell_measure(c)).sum();
            assert!((0..m.num_cells()).all(|c| m.cell_measure(c) > 0.0));
            assert!((total - m.domain().measure()).abs() < 1e-13);
        }
    }

    #[test]
    fn gradients_of_partition_of_unity_sum_to_zero() {
        let m = Mesh::unit_square(3).unwrap();
        for c in 0..m.num_cells() {
            let g = m.cell_gradients(c).unwrap();
            let sx: f64 = g.iter().map(|v| v[0]).sum();
            let sy: f64 = g.iter().map(|v| v[1]).sum();
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_mesh() {
        assert!(Mesh::interval(0.0, 1.0, 0).is_err());
        assert!(Mesh::interval(1.0, 1.0, 4).is_err());
        assert!(Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0, 2).is_err());
    }
}
