//! The limiting sheet-interaction system
//! `Δg_i = 2 Σ_{j≠i} (-1)^{i-j} / (g_j - g_i)`, its radial Lane–Emden seed
//! `g'' + (m-1) g'/r = 1/g`, and the balancing amplitudes of the
//! multi-layer ansatz `g_i = a_i g`.

use faer::prelude::*;
use faer::sparse::SparseColMat;
use ode_solvers::{Dopri5, OutputType, System, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::cone::SphereGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TodaError {
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64, last: Vec<Vec<f64>> },
    #[error("profiles {lower} and {upper} collapse at iteration {iteration}")]
    OrderingCollapse { lower: usize, upper: usize, iteration: usize },
    #[error("Lane–Emden profile lost positivity at r = {r}")]
    BlowdownToZero { r: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("linear solve failed: {0}")]
    Linear(String),
}

/// Amplitudes `a_i` with `a_i = 2 Σ_{j≠i} (-1)^{i-j} / (a_j - a_i)`, in decreasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingVector {
    pub a: Vec<f64>,
    pub residual: f64,
}

fn alt(i: usize, j: usize) -> f64 {
    if (i + j) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn balancing_residual(a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|i| a[i] - 2.0 * (0..a.len()).filter(|&j| j != i).map(|j| alt(i, j) / (a[j] - a[i])).sum::<f64>())
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn solve_balancing(n: usize) -> Result<BalancingVector, TodaError> {
    if n == 0 {
        return Err(TodaError::Invalid("N must be at least 1".into()));
    }
    let mut a: Vec<f64> = (0..n).map(|i| 0.5 * (n as f64 - 1.0) - i as f64).collect();
    let mut res = balancing_residual(&a);
    let mut norm = max_abs(&res);
    for _ in 0..100 {
        if norm <= 1e-13 {
            break;
        }
        let jac = Mat::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                1.0 - 2.0 * (0..n).filter(|&k| k != i).map(|k| alt(i, k) / (a[k] - a[i]).powi(2)).sum::<f64>()
            } else {
                2.0 * alt(i, j) / (a[j] - a[i]).powi(2)
            }
        });
        let rhs = Col::<f64>::from_fn(n, |i| -res[i]);
        let step = jac.partial_piv_lu().solve(&rhs);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| a[i] + t * step[i]).collect();
            let ordered = trial.windows(2).all(|w| w[0] > w[1]);
            if ordered {
                let r = balancing_residual(&trial);
                let nr = max_abs(&r);
                if nr < norm || t < 1e-3 {
                    a = trial;
                    res = r;
                    norm = nr;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(TodaError::NewtonDiverged { iterations: 0, residual: norm, last: vec![a] });
            }
        }
    }
    if norm > 1e-12 {
        return Err(TodaError::NewtonDiverged { iterations: 100, residual: norm, last: vec![a] });
    }
    Ok(BalancingVector { a, residual: norm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneEmdenOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step the integrator may take.
    pub h_max: f64,
    /// Number of stored output intervals.
    pub samples: usize,
}

impl Default for LaneEmdenOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-13, h_max: 0.05, samples: 4000 }
    }
}

/// Radial solution of `g'' + (m-1) g'/r = 1/g`, `g(0) = g0`, `g'(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub m: usize,
    pub g0: f64,
    /// Start of the numerical integration; the series is used below it.
    pub r_start: f64,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
}

impl RadialProfile {
    fn series(&self, r: f64) -> (f64, f64) {
        series(self.m, self.g0, r)
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    /// `(g, g')` at `0 ≤ r ≤ r_max` by cubic Hermite interpolation.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        if r <= self.r_start {
            return self.series(r);
        }
        let r = r.min(self.r_max());
        let k = self.r.partition_point(|&x| x <= r).clamp(1, self.r.len() - 1);
        let (x0, x1) = (self.r[k - 1], self.r[k]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        let (y0, y1, d0, d1) = (self.g[k - 1], self.g[k], self.dg[k - 1], self.dg[k]);
        let h00 = 2.0 * t * t * t - 3.0 * t * t + 1.0;
        let h10 = t * t * t - 2.0 * t * t + t;
        let h01 = -2.0 * t * t * t + 3.0 * t * t;
        let h11 = t * t * t - t * t;
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = (6.0 * t * t - 6.0 * t) / h;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t * t + 6.0 * t) / h;
        let dh11 = 3.0 * t * t - 2.0 * t;
        let d = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
        (v, d)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

/// `g0 + r²/(2 m g0) - r⁴/(8 m (m+2) g0³)` and its derivative.
fn series(m: usize, g0: f64, r: f64) -> (f64, f64) {
    let m = m as f64;
    let a = 1.0 / (2.0 * m * g0);
    let b = -1.0 / (8.0 * m * (m + 2.0) * g0.powi(3));
    (g0 + a * r * r + b * r.powi(4), 2.0 * a * r + 4.0 * b * r.powi(3))
}

struct LaneEmden {
    m: f64,
}

impl System<f64, Vector2<f64>> for LaneEmden {
    fn system(&self, r: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        dy[1] = 1.0 / y[0] - (self.m - 1.0) * y[1] / r;
    }
}

pub fn lane_emden_radial(m: usize, r_max: f64, g0: f64) -> Result<RadialProfile, TodaError> {
    lane_emden_with(m, r_max, g0, &LaneEmdenOptions::default())
}

pub fn lane_emden_with(m: usize, r_max: f64, g0: f64, opts: &LaneEmdenOptions) -> Result<RadialProfile, TodaError> {
    if m == 0 || !(g0 > 0.0) || !(r_max > 0.0) || !r_max.is_finite() {
        return Err(TodaError::Invalid(format!("need m >= 1, g0 > 0, r_max > 0 (m = {m}, g0 = {g0}, r_max = {r_max})")));
    }
    let r_start = (1e-3 * g0).min(r_max / (2.0 * opts.samples as f64));
    let (y0, d0) = series(m, g0, r_start);
    let dx = (r_max - r_start) / opts.samples as f64;
    let mut solver = Dopri5::from_param(
        LaneEmden { m: m as f64 },
        r_start,
        r_max,
        dx,
        Vector2::new(y0, d0),
        opts.rtol,
        opts.atol,
        0.9,
        0.04,
        0.2,
        10.0,
        opts.h_max,
        0.0,
        1_000_000,
        1000,
        OutputType::Dense,
    );
    solver.integrate().map_err(|e| TodaError::Invalid(format!("integrator failed: {e:?}")))?;
    let (xs, ys) = solver.results().get();
    let mut r = Vec::with_capacity(xs.len());
    let mut g = Vec::with_capacity(xs.len());
    let mut dg = Vec::with_capacity(xs.len());
    for (x, y) in xs.iter().zip(ys) {
        if !(y[0] > 0.0) {
            return Err(TodaError::BlowdownToZero { r: *x });
        }
        if r.last().map_or(false, |&last| *x <= last) {
            continue;
        }
        r.push(*x);
        g.push(y[0]);
        dg.push(y[1]);
    }
    Ok(RadialProfile { m, g0, r_start, r, g, dg })
}

/// Computational domains for the interaction system. Flat domains carry
/// Dirichlet data on boundary slots; the sphere has none and adds the
/// zeroth-order term `(n-2) g_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TodaDomain {
    /// `(-L/2, L/2)` with `nodes` interior points.
    Interval { length: f64, nodes: usize },
    /// `(-lx/2, lx/2) × (-ly/2, ly/2)` with `nx × ny` interior points.
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
    /// Disc of the given radius; cell-centred polar differences, one-sided
    /// cubic in the outer ring.
    Disc { radius: f64, n_r: usize, n_theta: usize },
    Sphere { grid: SphereGrid, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    diag: f64,
    nodes: Vec<(usize, f64)>,
    boundary: Vec<(usize, f64)>,
}

/// Weights for the `order`-th derivative at `0` of the interpolant through `xs`.
fn fd_weights(xs: &[f64], order: usize) -> Vec<f64> {
    let k = xs.len();
    let vander = Mat::<f64>::from_fn(k, k, |p, j| xs[j].powi(p as i32));
    // d^order/dx^order of x^p at 0
    let rhs = Col::<f64>::from_fn(k, |p| if p == order { (1..=order).product::<usize>() as f64 } else { 0.0 });
    let w = vander.partial_piv_lu().solve(&rhs);
    (0..k).map(|j| w[j]).collect()
}

impl TodaDomain {
    pub fn validate(&self) -> Result<(), TodaError> {
        let ok = match self {
            TodaDomain::Interval { length, nodes } => *length > 0.0 && *nodes >= 1,
            TodaDomain::Rectangle { lx, ly, nx, ny } => *lx > 0.0 && *ly > 0.0 && *nx >= 1 && *ny >= 1,
            TodaDomain::Disc { radius, n_r, n_theta } => *radius > 0.0 && *n_r >= 4 && *n_theta >= 4,
            TodaDomain::Sphere { grid, n } => grid.validate().is_ok() && grid.dim + 2 == *n,
        };
        if ok {
            Ok(())
        } else {
            Err(TodaError::Invalid(format!("bad domain {self:?}")))
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TodaDomain::Interval { nodes, .. } => *nodes,
            TodaDomain::Rectangle { nx, ny, .. } => nx * ny,
            TodaDomain::Disc { n_r, n_theta, .. } => n_r * n_theta,
            TodaDomain::Sphere { grid, .. } => grid.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of unknown `k`; on the sphere, the embedded point.
    pub fn node(&self, k: usize) -> Vec<f64> {
        match self {
            TodaDomain::Interval { length, nodes } => {
                let h = length / (*nodes as f64 + 1.0);
                vec![-0.5 * length + (k as f64 + 1.0) * h]
            }
            TodaDomain::Rectangle { lx, ly, nx, ny } => {
                let (hx, hy) = (lx / (*nx as f64 + 1.0), ly / (*ny as f64 + 1.0));
                let (i, j) = (k % nx, k / nx);
                vec![-0.5 * lx + (i as f64 + 1.0) * hx, -0.5 * ly + (j as f64 + 1.0) * hy]
            }
            TodaDomain::Disc { radius, n_r, n_theta } => {
                let (i, l) = (k / n_theta, k % n_theta);
                let r = (i as f64 + 0.5) * radius / *n_r as f64;
                let th = (l as f64 + 0.5) * 2.0 * PI / *n_theta as f64;
                vec![r * th.cos(), r * th.sin()]
            }
            TodaDomain::Sphere { grid, .. } => grid.point(k),
        }
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Points carrying Dirichlet data, in slot order.
    pub fn boundary_points(&self) -> Vec<Vec<f64>> {
        match self {
            TodaDomain::Interval { length, .. } => vec![vec![-0.5 * length], vec![0.5 * length]],
            TodaDomain::Rectangle { lx, ly, nx, ny } => {
                let (hx, hy) = (lx / (*nx as f64 + 1.0), ly / (*ny as f64 + 1.0));
                let mut out = Vec::new();
                for i in 0..*nx {
                    let x = -0.5 * lx + (i as f64 + 1.0) * hx;
                    out.push(vec![x, -0.5 * ly]);
                    out.push(vec![x, 0.5 * ly]);
                }
                for j in 0..*ny {
                    let y = -0.5 * ly + (j as f64 + 1.0) * hy;
                    out.push(vec![-0.5 * lx, y]);
                    out.push(vec![0.5 * lx, y]);
                }
                out
            }
            TodaDomain::Disc { radius, n_theta, .. } => (0..*n_theta)
                .map(|l| {
                    let th = (l as f64 + 0.5) * 2.0 * PI / *n_theta as f64;
                    vec![radius * th.cos(), radius * th.sin()]
                })
                .collect(),
            TodaDomain::Sphere { .. } => Vec::new(),
        }
    }

    /// Weights of the discrete `L²` inner product.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            TodaDomain::Interval { length, nodes } => vec![length / (*nodes as f64 + 1.0); *nodes],
            TodaDomain::Rectangle { lx, ly, nx, ny } => vec![lx * ly / ((*nx as f64 + 1.0) * (*ny as f64 + 1.0)); nx * ny],
            TodaDomain::Disc { radius, n_r, n_theta } => {
                let (dr, dt) = (radius / *n_r as f64, 2.0 * PI / *n_theta as f64);
                (0..n_r * n_theta).map(|k| (((k / n_theta) as f64) + 0.5) * dr * dr * dt).collect()
            }
            TodaDomain::Sphere { grid, .. } => grid.weights(),
        }
    }

    fn shift(&self) -> f64 {
        match self {
            TodaDomain::Sphere { n, .. } => *n as f64 - 2.0,
            _ => 0.0,
        }
    }

    /// Second-order discrete Laplacian with boundary slots as extra columns.
    fn rows(&self) -> Vec<Row> {
        match self {
            TodaDomain::Interval { length, nodes } => {
                let h = length / (*nodes as f64 + 1.0);
                let c = 1.0 / (h * h);
                (0..*nodes)
                    .map(|k| {
                        let mut row = Row { diag: -2.0 * c, nodes: vec![], boundary: vec![] };
                        if k == 0 { row.boundary.push((0, c)) } else { row.nodes.push((k - 1, c)) }
                        if k + 1 == *nodes { row.boundary.push((1, c)) } else { row.nodes.push((k + 1, c)) }
                        row
                    })
                    .collect()
            }
            TodaDomain::Rectangle { lx, ly, nx, ny } => {
                let (hx, hy) = (lx / (*nx as f64 + 1.0), ly / (*ny as f64 + 1.0));
                let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
                let mut rows = Vec::with_capacity(nx * ny);
                for j in 0..*ny {
                    for i in 0..*nx {
                        let mut row = Row { diag: -2.0 * (cx + cy), nodes: vec![], boundary: vec![] };
                        if i == 0 { row.boundary.push((2 * nx + 2 * j, cx)) } else { row.nodes.push((j * nx + i - 1, cx)) }
                        if i + 1 == *nx { row.boundary.push((2 * nx + 2 * j + 1, cx)) } else { row.nodes.push((j * nx + i + 1, cx)) }
                        if j == 0 { row.boundary.push((2 * i, cy)) } else { row.nodes.push(((j - 1) * nx + i, cy)) }
                        if j + 1 == *ny { row.boundary.push((2 * i + 1, cy)) } else { row.nodes.push(((j + 1) * nx + i, cy)) }
                        rows.push(row);
                    }
                }
                rows
            }
            TodaDomain::Disc { radius, n_r, n_theta } => {
                let (nr, nt) = (*n_r, *n_theta);
                let dr = radius / nr as f64;
                let dt = 2.0 * PI / nt as f64;
                // outer ring: cubic through the wall value and three centres, differentiated pointwise
                let stencil = [0.5, 0.0, -1.0, -2.0];
                let (d1, d2) = (fd_weights(&stencil, 1), fd_weights(&stencil, 2));
                let mut rows = Vec::with_capacity(nr * nt);
                for i in 0..nr {
                    let rc = (i as f64 + 0.5) * dr;
                    let vol = rc * dr * dt;
                    for l in 0..nt {
                        let idx = |ii: usize, ll: usize| ii * nt + (ll % nt);
                        let mut row = Row { diag: 0.0, nodes: vec![], boundary: vec![] };
                        // angular faces: length dr, distance rc dt
                        let ca = dr / (rc * dt) / vol;
                        row.nodes.push((idx(i, l + nt - 1), ca));
                        row.nodes.push((idx(i, l + 1), ca));
                        row.diag -= 2.0 * ca;
                        if i + 1 == nr {
                            let w: Vec<f64> = (0..4).map(|j| (d2[j] + d1[j] * dr / rc) / (dr * dr)).collect();
                            row.boundary.push((l, w[0]));
                            row.diag += w[1];
                            row.nodes.push((idx(i - 1, l), w[2]));
                            row.nodes.push((idx(i - 2, l), w[3]));
                            rows.push(row);
                            continue;
                        }
                        if i > 0 {
                            let c = i as f64 * dr * dt / dr / vol;
                            row.nodes.push((idx(i - 1, l), c));
                            row.diag -= c;
                        }
                        let c = (i as f64 + 1.0) * dr * dt / vol / dr;
                        row.nodes.push((idx(i + 1, l), c));
                        row.diag -= c;
                        rows.push(row);
                    }
                }
                rows
            }
            TodaDomain::Sphere { grid, .. } => grid
                .laplacian_stencil()
                .into_iter()
                .map(|(nodes, diag)| Row { diag, nodes, boundary: vec![] })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub residual: f64,
    pub step: f64,
}

/// Profiles `g_1 < … < g_N` on a domain, with their Dirichlet data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodaState {
    pub domain: TodaDomain,
    /// `profiles[i][k]`: profile `i` at node `k`.
    pub profiles: Vec<Vec<f64>>,
    /// `boundary[i][b]`: Dirichlet value of profile `i` at slot `b`.
    pub boundary: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub history: Vec<IterationLog>,
}

impl TodaState {
    /// A state from given values; the residual norm is evaluated.
    pub fn new(domain: TodaDomain, profiles: Vec<Vec<f64>>, boundary: Vec<Vec<f64>>) -> Result<Self, TodaError> {
        domain.validate()?;
        let mut st = Self { domain, profiles, boundary, residual_norm: f64::NAN, iterations: 0, history: vec![] };
        st.check_shapes()?;
        st.residual_norm = toda_residual(&st)?.max.iter().fold(0.0, |m: f64, v| m.max(*v));
        Ok(st)
    }

    pub fn on_sphere(grid: SphereGrid, n: usize, profiles: Vec<Vec<f64>>) -> Result<Self, TodaError> {
        let k = profiles.len();
        Self::new(TodaDomain::Sphere { grid, n }, profiles, vec![vec![]; k])
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    fn check_shapes(&self) -> Result<(), TodaError> {
        let m = self.domain.len();
        let nb = self.domain.boundary_points().len();
        if self.profiles.is_empty() || self.boundary.len() != self.profiles.len() {
            return Err(TodaError::Invalid("need boundary data for every profile".into()));
        }
        if self.profiles.iter().any(|p| p.len() != m) || self.boundary.iter().any(|b| b.len() != nb) {
            return Err(TodaError::Invalid(format!("profiles need {m} values and {nb} boundary values")));
        }
        Ok(())
    }

    /// The state under `g_i ↦ -g_{N+1-i}`, which maps solutions to solutions.
    pub fn flipped(&self) -> Self {
        let rev = |v: &Vec<Vec<f64>>| v.iter().rev().map(|p| p.iter().map(|x| -x).collect()).collect();
        Self { profiles: rev(&self.profiles), boundary: rev(&self.boundary), ..self.clone() }
    }
}

fn interaction(profiles: &[Vec<f64>], i: usize, k: usize) -> f64 {
    2.0 * (0..profiles.len())
        .filter(|&j| j != i)
        .map(|j| alt(i, j) / (profiles[j][k] - profiles[i][k]))
        .sum::<f64>()
}

fn residual_fields(domain: &TodaDomain, rows: &[Row], profiles: &[Vec<f64>], boundary: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let shift = domain.shift();
    (0..profiles.len())
        .map(|i| {
            let g = &profiles[i];
            rows.iter()
                .enumerate()
                .map(|(k, row)| {
                    let lap = row.diag * g[k]
                        + row.nodes.iter().map(|&(j, c)| c * g[j]).sum::<f64>()
                        + row.boundary.iter().map(|&(b, c)| c * boundary[i][b]).sum::<f64>();
                    lap + shift * g[k] - interaction(profiles, i, k)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub fields: Vec<Vec<f64>>,
    pub max: Vec<f64>,
    pub l2: Vec<f64>,
}

/// Pointwise residual of every equation, with max and weighted `L²` norms.
pub fn toda_residual(state: &TodaState) -> Result<ResidualReport, TodaError> {
    state.check_shapes()?;
    let rows = state.domain.rows();
    let fields = residual_fields(&state.domain, &rows, &state.profiles, &state.boundary);
    let w = state.domain.weights();
    let max = fields.iter().map(|f| max_abs(f)).collect();
    let l2 = fields.iter().map(|f| f.iter().zip(&w).map(|(r, w)| w * r * r).sum::<f64>().sqrt()).collect();
    Ok(ResidualReport { fields, max, l2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TodaOptions {
    pub tol: f64,
    /// A Newton correction below `step_tol * (1 + max|g|)` also counts as
    /// convergence; fine grids reach the rounding floor before `tol`.
    pub step_tol: f64,
    pub max_iterations: usize,
}

impl Default for TodaOptions {
    fn default() -> Self {
        Self { tol: 1e-10, step_tol: 1e-10, max_iterations: 60 }
    }
}

fn ordered(profiles: &[Vec<f64>]) -> Option<(usize, usize)> {
    for i in 0..profiles.len().saturating_sub(1) {
        if profiles[i].iter().zip(&profiles[i + 1]).any(|(a, b)| !(b - a > 1e-8)) {
            return Some((i, i + 1));
        }
    }
    None
}

/// Per-profile discrete harmonic extension of the boundary data.
pub fn harmonic_extension(domain: &TodaDomain, boundary: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TodaError> {
    let rows = domain.rows();
    let m = domain.len();
    let mut trip = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        trip.push((k, k, row.diag + domain.shift()));
        for &(j, c) in &row.nodes {
            trip.push((k, j, c));
        }
    }
    let lu = sparse_lu(m, trip)?;
    Ok(boundary
        .iter()
        .map(|b| {
            let rhs = Col::<f64>::from_fn(m, |k| -rows[k].boundary.iter().map(|&(s, c)| c * b[s]).sum::<f64>());
            let x = lu.solve(&rhs);
            (0..m).map(|k| x[k]).collect()
        })
        .collect())
}

fn sparse_lu(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Result<faer::sparse::linalg::solvers::Lu<usize, f64>, TodaError> {
    trip.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(trip.len());
    for t in trip {
        match merged.last_mut() {
            Some(last) if last.0 == t.0 && last.1 == t.1 => last.2 += t.2,
            _ => merged.push(t),
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &merged)
        .map_err(|e| TodaError::Linear(format!("{e:?}")))?;
    mat.sp_lu().map_err(|e| TodaError::Linear(format!("{e:?}")))
}

/// Damped Newton for the interaction system with Dirichlet data
/// `boundary[i][slot]`. The step is capped at 90% of the distance to the
/// first collision of neighbouring profiles and halved until the residual
/// decreases. Without an initial guess the harmonic extension is used.
pub fn toda_solve(
    domain: &TodaDomain,
    boundary: Vec<Vec<f64>>,
    initial: Option<Vec<Vec<f64>>>,
    opts: &TodaOptions,
) -> Result<TodaState, TodaError> {
    domain.validate()?;
    let n = boundary.len();
    let m = domain.len();
    let slots = domain.boundary_points().len();
    if n == 0 || boundary.iter().any(|b| b.len() != slots) {
        return Err(TodaError::Invalid(format!("need boundary data with {slots} slots per profile")));
    }
    if slots > 0 {
        for b in 0..slots {
            if (0..n.saturating_sub(1)).any(|i| !(boundary[i + 1][b] > boundary[i][b])) {
                return Err(TodaError::Invalid(format!("boundary data not strictly ordered at slot {b}")));
            }
        }
    }
    let mut g = match initial {
        Some(g) => g,
        None => harmonic_extension(domain, &boundary)?,
    };
    if g.len() != n || g.iter().any(|p| p.len() != m) {
        return Err(TodaError::Invalid("initial guess has the wrong shape".into()));
    }
    if let Some((lower, upper)) = ordered(&g) {
        return Err(TodaError::OrderingCollapse { lower, upper, iteration: 0 });
    }
    let rows = domain.rows();
    let shift = domain.shift();
    let mut res = residual_fields(domain, &rows, &g, &boundary);
    let mut norm = res.iter().map(|f| max_abs(f)).fold(0.0, f64::max);
    let mut history = vec![IterationLog { iteration: 0, residual: norm, step: 0.0 }];
    let mut it = 0;
    while norm > opts.tol {
        if it >= opts.max_iterations {
            return Err(TodaError::NewtonDiverged { iterations: it, residual: norm, last: g });
        }
        it += 1;
        let mut trip = Vec::new();
        for i in 0..n {
            for (k, row) in rows.iter().enumerate() {
                let r = i * m + k;
                let mut diag = row.diag + shift;
                for j in (0..n).filter(|&j| j != i) {
                    let q = 2.0 * alt(i, j) / (g[j][k] - g[i][k]).powi(2);
                    diag -= q;
                    trip.push((r, j * m + k, q));
                }
                trip.push((r, r, diag));
                for &(j, c) in &row.nodes {
                    trip.push((r, i * m + j, c));
                }
            }
        }
        let lu = sparse_lu(n * m, trip)?;
        let rhs = Col::<f64>::from_fn(n * m, |r| -res[r / m][r % m]);
        let dx = lu.solve(&rhs);
        let step: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|k| dx[i * m + k]).collect()).collect();
        let mut t_max: f64 = 1.0;
        for i in 0..n.saturating_sub(1) {
            for k in 0..m {
                let gap = g[i + 1][k] - g[i][k];
                let dgap = step[i + 1][k] - step[i][k];
                if dgap < 0.0 {
                    t_max = t_max.min(0.9 * gap / -dgap);
                }
            }
        }
        let scale = 1.0 + g.iter().map(|p| max_abs(p)).fold(0.0, f64::max);
        let tiny = step.iter().map(|p| max_abs(p)).fold(0.0, f64::max) <= opts.step_tol * scale;
        let mut t = t_max;
        let done;
        loop {
            let trial: Vec<Vec<f64>> =
                (0..n).map(|i| (0..m).map(|k| g[i][k] + t * step[i][k]).collect()).collect();
            if ordered(&trial).is_none() {
                let r = residual_fields(domain, &rows, &trial, &boundary);
                let nr = r.iter().map(|f| max_abs(f)).fold(0.0, f64::max);
                if nr < norm || nr <= opts.tol || tiny {
                    g = trial;
                    res = r;
                    norm = nr;
                    done = tiny;
                    break;
                }
            } else if tiny {
                // no admissible step and nothing left to correct
                let (lower, upper) = ordered(&trial).unwrap_or((0, 1));
                return Err(TodaError::OrderingCollapse { lower, upper, iteration: it });
            }
            t *= 0.5;
            if t < 1e-10 {
                if ordered(&(0..n).map(|i| (0..m).map(|k| g[i][k] + t * step[i][k]).collect()).collect::<Vec<Vec<f64>>>()).is_some() {
                    return Err(TodaError::OrderingCollapse { lower: 0, upper: 1, iteration: it });
                }
                return Err(TodaError::NewtonDiverged { iterations: it, residual: norm, last: g });
            }
        }
        history.push(IterationLog { iteration: it, residual: norm, step: t });
        if done {
            break;
        }
    }
    Ok(TodaState { domain: domain.clone(), profiles: g, boundary, residual_norm: norm, iterations: it, history })
}

/// Boundary data and nodal values of the ansatz `g_i = a_i G(|x'|)` on a
/// flat domain, with the balancing amplitudes reordered increasingly and `G`
/// the Lane–Emden profile in dimension `m`.
pub fn ansatz(domain: &TodaDomain, n_profiles: usize, g0: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), TodaError> {
    domain.validate()?;
    let m = match domain {
        TodaDomain::Interval { .. } => 1,
        TodaDomain::Rectangle { .. } | TodaDomain::Disc { .. } => 2,
        TodaDomain::Sphere { .. } => return Err(TodaError::Invalid("the flat ansatz needs a flat domain".into())),
    };
    let bal = solve_balancing(n_profiles)?;
    let amps: Vec<f64> = bal.a.iter().rev().copied().collect();
    let pts = domain.boundary_points();
    let nodes = domain.nodes();
    let r_max = pts.iter().chain(&nodes).map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let prof = lane_emden_radial(m, r_max * 1.01, g0)?;
    let at = |p: &Vec<f64>| prof.value(p.iter().map(|v| v * v).sum::<f64>().sqrt());
    let boundary = amps.iter().map(|a| pts.iter().map(|p| a * at(p)).collect()).collect();
    let values = amps.iter().map(|a| nodes.iter().map(|p| a * at(p)).collect()).collect();
    Ok((boundary, values))
}
