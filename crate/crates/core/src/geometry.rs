//! Graph sheets over a horizontal grid and their classical geometry.
//!
//! A sheet stores nodal values together with finite-difference gradient and
//! Hessian fields, and carries a C² cubic B-spline interpolant for queries
//! between nodes. Outside a non-periodic grid a sheet is continued by the
//! constant extension of its boundary values; periodic grids wrap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{FractionalParams, KernelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid grid: {0}")]
    GridInvalid(String),
    #[error("no sheets given")]
    Empty,
    #[error("sheet {sheet} has {got} values, grid has {expected} nodes")]
    ShapeMismatch { sheet: usize, got: usize, expected: usize },
    #[error("non-finite value in sheet {sheet} at node {node}")]
    NonFinite { sheet: usize, node: usize },
    #[error("sheets {lower} and {upper} are not strictly ordered at node {node} (x' = {coords:?})")]
    OrderingViolated { lower: usize, upper: usize, node: usize, coords: Vec<f64> },
    #[error("point {0:?} is not an interior point of the grid")]
    BoundaryNode(Vec<f64>),
    #[error("index out of range: {0}")]
    Index(String),
    #[error(transparent)]
    Params(#[from] KernelError),
    #[error("malformed stack document: {0}")]
    Document(String),
}

/// Tensor grid over the horizontal box `[-extent, extent]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "dim")]
    pub dim_horizontal: usize,
    pub extent: f64,
    pub resolution: usize,
    pub periodic: bool,
}

impl GridSpec {
    pub fn new(dim_horizontal: usize, extent: f64, resolution: usize, periodic: bool) -> Result<Self, GeometryError> {
        let g = Self { dim_horizontal, extent, resolution, periodic };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(1..=2).contains(&self.dim_horizontal) {
            return Err(GeometryError::GridInvalid(format!(
                "horizontal dimension must be 1 or 2, got {}",
                self.dim_horizontal
            )));
        }
        if self.resolution < 8 {
            return Err(GeometryError::GridInvalid(format!("resolution must be >= 8, got {}", self.resolution)));
        }
        if !(self.extent > 0.0) || !self.extent.is_finite() {
            return Err(GeometryError::GridInvalid(format!("extent must be positive, got {}", self.extent)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            2.0 * self.extent / self.resolution as f64
        } else {
            2.0 * self.extent / (self.resolution - 1) as f64
        }
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim_horizontal as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major multi-index of a flat node index (x fastest).
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.resolution, node / self.resolution]
    }

    pub fn coord_1d(&self, k: usize) -> f64 {
        -self.extent + k as f64 * self.spacing()
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let mi = self.multi_index(node);
        (0..self.dim_horizontal).map(|d| self.coord_1d(mi[d])).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.node_coords(k)).collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(&self.node_coords(k))).collect()
    }

    fn node_near(&self, x: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mut idx = 0;
        let mut stride = 1;
        for (d, &xd) in x.iter().enumerate().take(self.dim_horizontal) {
            let u = (xd + self.extent) / h;
            let k = u.round();
            if (u - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.resolution {
                return None;
            }
            idx += k as usize * stride;
            stride *= self.resolution;
            let _ = d;
        }
        Some(idx)
    }

    pub(crate) fn is_interior(&self, x: &[f64]) -> bool {
        if self.periodic {
            return true;
        }
        let h = self.spacing();
        x.iter().all(|&v| v > -self.extent + 0.5 * h && v < self.extent - 0.5 * h)
    }
}

const JET_RADIUS: f64 = 1e-3;

/// `(∇g·z, zᵀ D²g z)`.
fn jet_terms(j: &Jet, z: &[f64]) -> (f64, f64) {
    let mut lin = 0.0;
    let mut quad = 0.0;
    for a in 0..z.len() {
        lin += j.grad[a] * z[a];
        for b in 0..z.len() {
            quad += z[a] * j.hess[a][b] * z[b];
        }
    }
    (lin, quad)
}

/// Value, gradient and Hessian of a sheet at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl Jet {
    pub fn grad_sq(&self) -> f64 {
        self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1]
    }

    /// `sqrt(1 + |∇g|^2)`.
    pub fn area_factor(&self) -> f64 {
        (1.0 + self.grad_sq()).sqrt()
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }

    /// Upward unit normal `(-∇g, 1)/W` in `R^{dim+1}`.
    pub fn upward_normal(&self, dim: usize) -> Vec<f64> {
        let w = self.area_factor();
        let mut nu: Vec<f64> = (0..dim).map(|d| -self.grad[d] / w).collect();
        nu.push(1.0 / w);
        nu
    }

    /// Classical mean curvature `-div(∇g/W)` (sum of principal curvatures).
    pub fn mean_curvature(&self) -> f64 {
        let g = self.grad;
        let h = self.hess;
        let w2 = 1.0 + self.grad_sq();
        let quad = g[0] * (h[0][0] * g[0] + h[0][1] * g[1]) + g[1] * (h[1][0] * g[0] + h[1][1] * g[1]);
        -(w2 * self.laplacian() - quad) / w2.powf(1.5)
    }

    /// Frobenius norm of the shape operator.
    pub fn second_fundamental_norm(&self) -> f64 {
        let g = self.grad;
        let w2 = 1.0 + self.grad_sq();
        // G^{-1} = I - ∇g∇gᵀ / W²
        let ginv = [
            [1.0 - g[0] * g[0] / w2, -g[0] * g[1] / w2],
            [-g[1] * g[0] / w2, 1.0 - g[1] * g[1] / w2],
        ];
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = ginv[i][0] * self.hess[0][j] + ginv[i][1] * self.hess[1][j];
            }
        }
        let tr = m[0][0] * m[0][0] + m[0][1] * m[1][0] + m[1][0] * m[0][1] + m[1][1] * m[1][1];
        (tr.max(0.0) / w2).sqrt()
    }
}

/// Cubic B-spline interpolant on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
struct Spline {
    grid: GridSpec,
    coef: Vec<f64>,
}

fn solve_line(values: &[f64], periodic: bool) -> Vec<f64> {
    let n = values.len();
    if periodic {
        // (c_{k-1} + 4 c_k + c_{k+1}) / 6 = f_k, cyclic; Jacobi sweeps contract by 1/2
        let mut c: Vec<f64> = values.to_vec();
        let mut next = vec![0.0; n];
        for _ in 0..64 {
            for k in 0..n {
                next[k] = 1.5 * values[k] - 0.25 * (c[(k + n - 1) % n] + c[(k + 1) % n]);
            }
            std::mem::swap(&mut c, &mut next);
        }
        return c;
    }
    // natural end conditions give c_0 = f_0, c_{n-1} = f_{n-1}
    let mut c = vec![0.0; n];
    c[0] = values[0];
    c[n - 1] = values[n - 1];
    let m = n - 2;
    if m == 0 {
        return c;
    }
    let mut rhs: Vec<f64> = (1..n - 1).map(|k| 6.0 * values[k]).collect();
    rhs[0] -= c[0];
    rhs[m - 1] -= c[n - 1];
    let mut diag = vec![4.0; m];
    for k in 1..m {
        let w = 1.0 / diag[k - 1];
        diag[k] -= w;
        rhs[k] -= w * rhs[k - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = rhs[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        x[k] = (rhs[k] - x[k + 1]) / diag[k];
    }
    c[1..n - 1].copy_from_slice(&x);
    c
}

fn basis(t: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    let b = [u * u * u / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0, (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0];
    let d = [-0.5 * u * u, 1.5 * t2 - 2.0 * t, -1.5 * t2 + t + 0.5, 0.5 * t2];
    let dd = [u, 3.0 * t - 2.0, -3.0 * t + 1.0, t];
    (b, d, dd)
}

/// `b_k(t+δ) - b_k(t)` for the four cubic B-spline pieces, expanded in `δ`
/// so that no rounding from `b_k(t)` survives the subtraction.
fn basis_diff(t: f64, d: f64) -> [f64; 4] {
    let p1 = d;
    let p2 = d * (2.0 * t + d);
    let p3 = d * (3.0 * t * t + 3.0 * t * d + d * d);
    [
        (-3.0 * p1 + 3.0 * p2 - p3) / 6.0,
        (-6.0 * p2 + 3.0 * p3) / 6.0,
        (3.0 * p1 + 3.0 * p2 - 3.0 * p3) / 6.0,
        p3 / 6.0,
    ]
}

impl Spline {
    /// `g(x+z) - g(x)`, computed inside one cell when both points share it.
    fn diff(&self, x: &[f64], z: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let dim = self.grid.dim_horizontal;
        let mut y = [0.0; 2];
        let mut cell = [(0isize, 0.0, 0.0); 2];
        for k in 0..dim {
            y[k] = x[k] + z[k];
            let (i, ty, clamped) = self.locate(y[k]);
            let d = z[k] / h;
            let tx = ty - d;
            if clamped || !(-1e-12..=1.0 + 1e-12).contains(&tx) {
                return self.eval(&y[..dim]).value - self.eval(x).value;
            }
            cell[k] = (i, tx, d);
        }
        if dim == 1 {
            let (i, t, d) = cell[0];
            let db = basis_diff(t, d);
            return (0..4).map(|k| self.coef_at(i - 1 + k as isize, 0) * db[k]).sum();
        }
        let ((i, tx, dx), (j, ty, dy)) = (cell[0], cell[1]);
        let (bx, _, _) = basis(tx);
        let (by_end, _, _) = basis(ty + dy);
        let dbx = basis_diff(tx, dx);
        let dby = basis_diff(ty, dy);
        let mut acc = 0.0;
        for ky in 0..4 {
            for kx in 0..4 {
                let c = self.coef_at(i - 1 + kx as isize, j - 1 + ky as isize);
                // b(t')b(u') - b(t)b(u) = Δb_x b(u') + b(t) Δb_y
                acc += c * (dbx[kx] * by_end[ky] + bx[kx] * dby[ky]);
            }
        }
        acc
    }

    fn new(grid: GridSpec, values: &[f64]) -> Self {
        let r = grid.resolution;
        let mut coef = values.to_vec();
        if grid.dim_horizontal == 1 {
            coef = solve_line(&coef, grid.periodic);
        } else {
            for row in 0..r {
                let line = solve_line(&coef[row * r..(row + 1) * r], grid.periodic);
                coef[row * r..(row + 1) * r].copy_from_slice(&line);
            }
            for col in 0..r {
                let line: Vec<f64> = (0..r).map(|row| coef[row * r + col]).collect();
                let solved = solve_line(&line, grid.periodic);
                for row in 0..r {
                    coef[row * r + col] = solved[row];
                }
            }
        }
        Self { grid, coef }
    }

    fn coef_at(&self, i: isize, j: isize) -> f64 {
        let r = self.grid.resolution as isize;
        if self.grid.periodic {
            let ii = i.rem_euclid(r) as usize;
            let jj = j.rem_euclid(r) as usize;
            return self.coef[jj as usize * r as usize + ii];
        }
        if i < 0 {
            return 2.0 * self.coef_at(0, j) - self.coef_at(1, j);
        }
        if i >= r {
            return 2.0 * self.coef_at(r - 1, j) - self.coef_at(r - 2, j);
        }
        if j < 0 {
            return 2.0 * self.coef_at(i, 0) - self.coef_at(i, 1);
        }
        if j >= r {
            return 2.0 * self.coef_at(i, r - 1) - self.coef_at(i, r - 2);
        }
        self.coef[j as usize * r as usize + i as usize]
    }

    /// Cell index, local coordinate and whether the coordinate was clamped.
    fn locate(&self, x: f64) -> (isize, f64, bool) {
        let g = &self.grid;
        let h = g.spacing();
        let r = g.resolution;
        if g.periodic {
            let period = 2.0 * g.extent;
            let xw = (x + g.extent).rem_euclid(period);
            let u = xw / h;
            let i = (u.floor() as isize).min(r as isize - 1);
            return (i, u - i as f64, false);
        }
        let clamped = x < -g.extent || x > g.extent;
        let xc = x.clamp(-g.extent, g.extent);
        let u = (xc + g.extent) / h;
        let i = (u.floor() as isize).clamp(0, r as isize - 2);
        (i, u - i as f64, clamped)
    }

    fn eval(&self, x: &[f64]) -> Jet {
        let h = self.grid.spacing();
        if self.grid.dim_horizontal == 1 {
            let (i, t, clamped) = self.locate(x[0]);
            let (b, d, dd) = basis(t);
            let mut jet = Jet::default();
            for k in 0..4 {
                let c = self.coef_at(i - 1 + k as isize, 0);
                jet.value += c * b[k];
                jet.grad[0] += c * d[k] / h;
                jet.hess[0][0] += c * dd[k] / (h * h);
            }
            if clamped {
                jet.grad[0] = 0.0;
                jet.hess[0][0] = 0.0;
            }
            return jet;
        }
        let (i, tx, cx) = self.locate(x[0]);
        let (j, ty, cy) = self.locate(x[1]);
        let (bx, dx, ddx) = basis(tx);
        let (by, dy, ddy) = basis(ty);
        let mut jet = Jet::default();
        for ky in 0..4 {
            for kx in 0..4 {
                let c = self.coef_at(i - 1 + kx as isize, j - 1 + ky as isize);
                jet.value += c * bx[kx] * by[ky];
                jet.grad[0] += c * dx[kx] * by[ky] / h;
                jet.grad[1] += c * bx[kx] * dy[ky] / h;
                jet.hess[0][0] += c * ddx[kx] * by[ky] / (h * h);
                jet.hess[1][1] += c * bx[kx] * ddy[ky] / (h * h);
                jet.hess[0][1] += c * dx[kx] * dy[ky] / (h * h);
            }
        }
        if cx {
            jet.grad[0] = 0.0;
            jet.hess[0][0] = 0.0;
            jet.hess[0][1] = 0.0;
        }
        if cy {
            jet.grad[1] = 0.0;
            jet.hess[1][1] = 0.0;
            jet.hess[0][1] = 0.0;
        }
        jet.hess[1][0] = jet.hess[0][1];
        jet
    }
}

/// One graph `x_n = g(x')` over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSheet {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    /// Finite-difference gradient at each node.
    pub gradient: Vec<[f64; 2]>,
    /// Finite-difference Hessian at each node.
    pub hessian: Vec<[[f64; 2]; 2]>,
    /// True when one-sided stencils were used at a non-periodic boundary.
    pub boundary_downgraded: bool,
    spline: Spline,
}

fn fd_first(f: &dyn Fn(isize) -> f64, k: isize, r: isize, periodic: bool, h: f64) -> (f64, bool) {
    if periodic || (k > 0 && k < r - 1) {
        return ((f(k + 1) - f(k - 1)) / (2.0 * h), false);
    }
    if k == 0 {
        ((-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h), true)
    } else {
        ((3.0 * f(k) - 4.0 * f(k - 1) + f(k - 2)) / (2.0 * h), true)
    }
}

fn fd_second(f: &dyn Fn(isize) -> f64, k: isize, r: isize, periodic: bool, h: f64) -> (f64, bool) {
    if periodic || (k > 0 && k < r - 1) {
        return ((f(k + 1) - 2.0 * f(k) + f(k - 1)) / (h * h), false);
    }
    if k == 0 {
        ((2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / (h * h), true)
    } else {
        ((2.0 * f(k) - 5.0 * f(k - 1) + 4.0 * f(k - 2) - f(k - 3)) / (h * h), true)
    }
}

impl GraphSheet {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GeometryError> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(GeometryError::ShapeMismatch { sheet: 0, got: values.len(), expected: grid.len() });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { sheet: 0, node });
        }
        let r = grid.resolution as isize;
        let h = grid.spacing();
        let per = grid.periodic;
        let at = |i: isize, j: isize| -> f64 {
            let (i, j) = if per { (i.rem_euclid(r), j.rem_euclid(r)) } else { (i, j) };
            values[(j * r + i) as usize]
        };
        let mut gradient = vec![[0.0; 2]; grid.len()];
        let mut hessian = vec![[[0.0; 2]; 2]; grid.len()];
        let mut downgraded = false;
        for node in 0..grid.len() {
            let [ix, iy] = grid.multi_index(node);
            let (ix, iy) = (ix as isize, iy as isize);
            let fx = |k: isize| at(k, iy);
            let (gx, dx1) = fd_first(&fx, ix, r, per, h);
            let (hxx, dx2) = fd_second(&fx, ix, r, per, h);
            gradient[node][0] = gx;
            hessian[node][0][0] = hxx;
            downgraded |= dx1 || dx2;
            if grid.dim_horizontal == 2 {
                let fy = |k: isize| at(ix, k);
                let (gy, dy1) = fd_first(&fy, iy, r, per, h);
                let (hyy, dy2) = fd_second(&fy, iy, r, per, h);
                let gx_at = |k: isize| -> f64 {
                    let fxk = |m: isize| at(m, k);
                    fd_first(&fxk, ix, r, per, h).0
                };
                let (hxy, dxy) = fd_first(&gx_at, iy, r, per, h);
                gradient[node][1] = gy;
                hessian[node][1][1] = hyy;
                hessian[node][0][1] = hxy;
                hessian[node][1][0] = hxy;
                downgraded |= dy1 || dy2 || dxy;
            }
        }
        let spline = Spline::new(grid, &values);
        Ok(Self { grid, values, gradient, hessian, boundary_downgraded: downgraded, spline })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self, GeometryError> {
        grid.validate()?;
        Self::new(grid, grid.sample(f))
    }

    /// Interpolated jet at an arbitrary horizontal point.
    pub fn jet(&self, x: &[f64]) -> Jet {
        self.spline.eval(x)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.spline.eval(x).value
    }

    /// `(g(x+z) - g(x)) / |z|`, free of cancellation when both points lie
    /// in one spline cell.
    pub fn rise(&self, x: &[f64], z: &[f64]) -> f64 {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.spline.diff(x, z) / r
    }

    /// `g(x+z) - g(x) - ∇g(x+z)·z`. Below a small fraction of the grid
    /// spacing the jet at `x` is used, since the three terms cancel to `O(|z|²)`.
    pub fn tangent_defect(&self, x: &[f64], z: &[f64]) -> f64 {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < JET_RADIUS * self.grid.spacing() {
            let (_, quad) = jet_terms(&self.jet(x), z);
            return -0.5 * quad;
        }
        let mut y = [0.0; 2];
        for k in 0..z.len() {
            y[k] = x[k] + z[k];
        }
        let (lin, _) = jet_terms(&self.jet(&y[..z.len()]), z);
        self.spline.diff(x, z) - lin
    }

    /// Jet from the stored finite-difference fields.
    pub fn node_jet(&self, node: usize) -> Jet {
        Jet { value: self.values[node], grad: self.gradient[node], hess: self.hessian[node] }
    }

    pub fn max_gradient(&self) -> f64 {
        self.gradient.iter().map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt()).fold(0.0, f64::max)
    }

    pub fn max_hessian(&self) -> f64 {
        self.hessian
            .iter()
            .map(|h| (h[0][0] * h[0][0] + h[0][1] * h[0][1] + h[1][0] * h[1][0] + h[1][1] * h[1][1]).sqrt())
            .fold(0.0, f64::max)
    }

    /// The reflected sheet `-g`.
    pub fn negated(&self) -> Self {
        Self::new(self.grid, self.values.iter().map(|v| -v).collect()).expect("negation keeps a valid sheet")
    }
}

/// Ordered stack of sheets sharing one grid. Sheet `k` (0-based) has
/// orientation sign `parity_base * (-1)^k`; with `parity_base = +1` the set
/// `E` lies below the first sheet and alternates upward.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetStack {
    pub sheets: Vec<GraphSheet>,
    pub params: FractionalParams,
    pub parity_base: i32,
    /// `(max |∇g|, max |D²g|)` over all sheets.
    pub delta: (f64, f64),
}

impl SheetStack {
    pub fn grid(&self) -> &GridSpec {
        &self.sheets[0].grid
    }

    pub fn len(&self) -> usize {
        self.sheets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sheets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim_horizontal
    }

    /// Orientation sign of sheet `k`: +1 when `E` lies directly below it.
    pub fn parity(&self, k: usize) -> f64 {
        let base = if self.parity_base >= 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 { base } else { -base }
    }

    /// Whether points below the lowest sheet belong to `E`.
    pub fn e_below(&self) -> bool {
        self.parity_base >= 0
    }

    /// Heights of all sheets at `x'`, ascending.
    pub fn heights(&self, x: &[f64]) -> Vec<f64> {
        self.sheets.iter().map(|s| s.value(x)).collect()
    }

    pub fn with_params(&self, params: FractionalParams) -> Self {
        Self { params, ..self.clone() }
    }

    /// Sheets shifted by `t * phi_k`; ordering is re-validated.
    pub fn perturbed(&self, t: f64, phi: &[Vec<f64>]) -> Result<Self, GeometryError> {
        let gs: Vec<Vec<f64>> = self
            .sheets
            .iter()
            .zip(phi)
            .map(|(s, p)| s.values.iter().zip(p).map(|(v, q)| v + t * q).collect())
            .collect();
        let mut st = build_stack(*self.grid(), gs, self.params)?;
        st.parity_base = self.parity_base;
        Ok(st)
    }
}

/// Validates ordering and finiteness and fills derivative fields.
pub fn build_stack(grid: GridSpec, gs: Vec<Vec<f64>>, params: FractionalParams) -> Result<SheetStack, GeometryError> {
    grid.validate()?;
    params.validate()?;
    if gs.is_empty() {
        return Err(GeometryError::Empty);
    }
    if params.n != grid.dim_horizontal + 1 {
        return Err(GeometryError::GridInvalid(format!(
            "grid of horizontal dimension {} does not match n = {}",
            grid.dim_horizontal, params.n
        )));
    }
    for (k, g) in gs.iter().enumerate() {
        if g.len() != grid.len() {
            return Err(GeometryError::ShapeMismatch { sheet: k, got: g.len(), expected: grid.len() });
        }
        if let Some(node) = g.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { sheet: k, node });
        }
    }
    for k in 1..gs.len() {
        if let Some(node) = (0..grid.len()).find(|&i| !(gs[k - 1][i] < gs[k][i])) {
            return Err(GeometryError::OrderingViolated {
                lower: k - 1,
                upper: k,
                node,
                coords: grid.node_coords(node),
            });
        }
    }
    let sheets: Vec<GraphSheet> = gs.into_iter().map(|v| GraphSheet::new(grid, v)).collect::<Result<_, _>>()?;
    let dg = sheets.iter().map(|s| s.max_gradient()).fold(0.0, f64::max);
    let dh = sheets.iter().map(|s| s.max_hessian()).fold(0.0, f64::max);
    Ok(SheetStack { sheets, params, parity_base: 1, delta: (dg, dh) })
}

/// [`build_stack`] from closures evaluated at the grid nodes.
pub fn build_stack_fn(
    grid: GridSpec,
    fs: &[&dyn Fn(&[f64]) -> f64],
    params: FractionalParams,
) -> Result<SheetStack, GeometryError> {
    grid.validate()?;
    build_stack(grid, fs.iter().map(|f| grid.sample(f)).collect(), params)
}

/// Upward normal, mean curvature `-div(∇g/W)` and the norm of the second
/// fundamental form at an interior point.
pub fn normal_and_curvature(sheet: &GraphSheet, x: &[f64]) -> Result<(Vec<f64>, f64, f64), GeometryError> {
    let grid = &sheet.grid;
    if x.len() != grid.dim_horizontal || !grid.is_interior(x) {
        return Err(GeometryError::BoundaryNode(x.to_vec()));
    }
    let jet = match grid.node_near(x) {
        Some(node) => sheet.node_jet(node),
        None => sheet.jet(x),
    };
    Ok((jet.upward_normal(grid.dim_horizontal), jet.mean_curvature(), jet.second_fundamental_norm()))
}

/// Euclidean distance from `(x', g_i(x'))` to the interpolated sheet `j`.
pub fn sheet_distance(stack: &SheetStack, i: usize, x: &[f64], j: usize) -> Result<f64, GeometryError> {
    if i >= stack.len() || j >= stack.len() || i == j {
        return Err(GeometryError::Index(format!("sheets {i} and {j} for a stack of {}", stack.len())));
    }
    let dim = stack.dim();
    let p_h = stack.sheets[i].value(x);
    let sj = &stack.sheets[j];
    let dist2 = |y: &[f64]| -> f64 {
        let mut d = (sj.value(y) - p_h).powi(2);
        for k in 0..dim {
            d += (y[k] - x[k]).powi(2);
        }
        d
    };
    let window = (sj.value(x) - p_h).abs();
    let h = stack.grid().spacing();
    // coarse scan of the window at a quarter of the grid spacing
    let steps = ((window / (0.25 * h)).ceil() as isize).clamp(1, 400);
    let mut best = x.to_vec();
    let mut best_d = dist2(x);
    let mut y = vec![0.0; dim];
    let range = |_: usize| -steps..=steps;
    if dim == 1 {
        for a in range(0) {
            y[0] = x[0] + window * a as f64 / steps as f64;
            let d = dist2(&y);
            if d < best_d {
                best_d = d;
                best.copy_from_slice(&y);
            }
        }
    } else {
        let steps2 = steps.min(60);
        for a in -steps2..=steps2 {
            for b in -steps2..=steps2 {
                y[0] = x[0] + window * a as f64 / steps2 as f64;
                y[1] = x[1] + window * b as f64 / steps2 as f64;
                if (y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2) > window * window {
                    continue;
                }
                let d = dist2(&y);
                if d < best_d {
                    best_d = d;
                    best.copy_from_slice(&y);
                }
            }
        }
    }
    // compass search on the interpolant
    let mut step = (window / steps as f64).max(1e-3 * h);
    while step > 1e-13 * (1.0 + window) {
        let mut improved = false;
        for k in 0..dim {
            for sgn in [-1.0, 1.0] {
                let mut cand = best.clone();
                cand[k] += sgn * step;
                let d = dist2(&cand);
                if d < best_d {
                    best_d = d;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best_d.sqrt())
}

/// Serialized stack layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackDocument {
    pub grid: GridSpec,
    pub sheets: Vec<Vec<f64>>,
    pub s: f64,
    #[serde(default = "default_parity")]
    pub parity_base: i32,
}

fn default_parity() -> i32 {
    1
}

impl SheetStack {
    pub fn to_document(&self) -> StackDocument {
        StackDocument {
            grid: *self.grid(),
            sheets: self.sheets.iter().map(|s| s.values.clone()).collect(),
            s: self.params.s,
            parity_base: self.parity_base,
        }
    }

    pub fn from_document(doc: &StackDocument) -> Result<Self, GeometryError> {
        let params = FractionalParams::new(doc.grid.dim_horizontal + 1, doc.s)?;
        let mut st = build_stack(doc.grid, doc.sheets.clone(), params)?;
        st.parity_base = if doc.parity_base >= 0 { 1 } else { -1 };
        Ok(st)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("stack documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let doc: StackDocument = serde_json::from_str(text).map_err(|e| GeometryError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}
