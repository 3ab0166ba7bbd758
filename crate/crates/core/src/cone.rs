//! Spherical limit of the sheet interaction system and the integral
//! certificate that rules out stable cones in low dimensions.
//!
//! Profiles live on `S^{n-2}`, discretized as `S^1` with uniform angles or
//! `S^2` with a colatitude–longitude grid whose cell areas are the exact
//! band areas. The Laplace–Beltrami operator is the finite-volume stencil on
//! that grid.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::kernel::sphere_area;
use crate::quadrature::legendre_unit;
use crate::toda::{TodaDomain, TodaError, TodaState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("sphere dimension must be 1 or 2, got {0}")]
    UnsupportedSphere(usize),
    #[error("invalid sphere grid: {0}")]
    Grid(String),
    #[error("state does not live on S^{expected} (n = {n})")]
    DimensionMismatch { n: usize, expected: usize },
    #[error("gap {gap} between profiles {lower} and {upper} is not positive at node {node}")]
    NonPositiveGap { lower: usize, upper: usize, node: usize, gap: f64 },
    #[error("degenerate denominator in the Hardy quotient")]
    DegenerateDenominator,
    #[error("n = {0} is below 3")]
    DimensionTooSmall(usize),
    #[error(transparent)]
    Toda(#[from] TodaError),
}

/// Cell-centred grid on `S^1` (`dim = 1`) or `S^2` (`dim = 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub dim: usize,
    /// Colatitude cells (`S^2` only; 1 for `S^1`).
    pub n_theta: usize,
    /// Angular cells along the circle or in longitude.
    pub n_phi: usize,
}

impl SphereGrid {
    pub fn circle(n_phi: usize) -> Result<Self, ConeError> {
        let g = Self { dim: 1, n_theta: 1, n_phi };
        g.validate()?;
        Ok(g)
    }

    pub fn sphere(n_theta: usize, n_phi: usize) -> Result<Self, ConeError> {
        let g = Self { dim: 2, n_theta, n_phi };
        g.validate()?;
        Ok(g)
    }

    /// The grid for `S^{n-2}` with roughly `resolution` cells per great half-circle.
    pub fn for_dimension(n: usize, resolution: usize) -> Result<Self, ConeError> {
        match n {
            3 => Self::circle(2 * resolution),
            4 => Self::sphere(resolution, 2 * resolution),
            _ => Err(ConeError::UnsupportedSphere(n.saturating_sub(2))),
        }
    }

    pub fn validate(&self) -> Result<(), ConeError> {
        match self.dim {
            1 if self.n_phi >= 3 && self.n_theta == 1 => Ok(()),
            2 if self.n_phi >= 4 && self.n_theta >= 2 => Ok(()),
            1 | 2 => Err(ConeError::Grid(format!("{} x {} cells is too coarse", self.n_theta, self.n_phi))),
            d => Err(ConeError::UnsupportedSphere(d)),
        }
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtheta(&self) -> f64 {
        PI / self.n_theta as f64
    }

    fn dphi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    fn index(&self, k: usize, l: usize) -> usize {
        k * self.n_phi + l % self.n_phi
    }

    /// `(θ, φ)` of node `idx`; `θ = π/2` on the circle.
    pub fn angles(&self, idx: usize) -> (f64, f64) {
        let (k, l) = (idx / self.n_phi, idx % self.n_phi);
        let phi = (l as f64 + 0.5) * self.dphi();
        if self.dim == 1 {
            (0.5 * PI, phi)
        } else {
            ((k as f64 + 0.5) * self.dtheta(), phi)
        }
    }

    /// Embedding of node `idx` in `R^{dim+1}`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let (th, ph) = self.angles(idx);
        if self.dim == 1 {
            vec![ph.cos(), ph.sin()]
        } else {
            vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
        }
    }

    /// Quadrature weights. On `S^2` the latitude nodes are midpoint
    /// Chebyshev nodes in `θ`, so Fejér's first rule integrates every
    /// spherical harmonic of degree below `n_theta` exactly.
    pub fn weights(&self) -> Vec<f64> {
        let dp = self.dphi();
        if self.dim == 1 {
            return vec![dp; self.n_phi];
        }
        let nt = self.n_theta;
        let mut w = Vec::with_capacity(self.len());
        for k in 0..nt {
            let th = (k as f64 + 0.5) * self.dtheta();
            let series: f64 = (1..=nt / 2).map(|j| (2.0 * j as f64 * th).cos() / (4.0 * (j * j) as f64 - 1.0)).sum();
            let a = dp * 2.0 / nt as f64 * (1.0 - 2.0 * series);
            w.extend(std::iter::repeat(a).take(self.n_phi));
        }
        w
    }

    /// Exact areas of the latitude-longitude cells.
    fn band_areas(&self) -> Vec<f64> {
        let (dp, dt) = (self.dphi(), self.dtheta());
        let mut w = Vec::with_capacity(self.len());
        for k in 0..self.n_theta {
            let a = dp * ((k as f64 * dt).cos() - ((k + 1) as f64 * dt).cos());
            w.extend(std::iter::repeat(a).take(self.n_phi));
        }
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Finite-volume Laplace–Beltrami stencil: `(node, [(neighbour, coefficient)], diagonal)`.
    pub fn laplacian_stencil(&self) -> Vec<(Vec<(usize, f64)>, f64)> {
        let dp = self.dphi();
        if self.dim == 1 {
            let c = 1.0 / (dp * dp);
            return (0..self.n_phi)
                .map(|l| (vec![((l + self.n_phi - 1) % self.n_phi, c), ((l + 1) % self.n_phi, c)], -2.0 * c))
                .collect();
        }
        let dt = self.dtheta();
        let w = self.band_areas();
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.n_theta {
            let th = (k as f64 + 0.5) * dt;
            let s_lo = (k as f64 * dt).sin();
            let s_hi = ((k + 1) as f64 * dt).sin();
            for l in 0..self.n_phi {
                let area = w[self.index(k, l)];
                let mut nb = Vec::with_capacity(4);
                let mut diag = 0.0;
                // latitude faces, length sin θ_face dφ, distance dθ
                if k > 0 {
                    let c = s_lo * dp / dt / area;
                    nb.push((self.index(k - 1, l), c));
                    diag -= c;
                }
                if k + 1 < self.n_theta {
                    let c = s_hi * dp / dt / area;
                    nb.push((self.index(k + 1, l), c));
                    diag -= c;
                }
                // longitude faces, length dθ, distance sin θ dφ
                let c = dt / (th.sin() * dp) / area;
                nb.push((self.index(k, l + self.n_phi - 1), c));
                nb.push((self.index(k, l + 1), c));
                diag -= 2.0 * c;
                out.push((nb, diag));
            }
        }
        out
    }

    pub fn apply_laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.laplacian_stencil()
            .iter()
            .enumerate()
            .map(|(i, (nb, d))| d * u[i] + nb.iter().map(|&(j, c)| c * u[j]).sum::<f64>())
            .collect()
    }

    /// Squared gradient norm of `u` at every node from centred differences.
    pub fn gradient_sq(&self, u: &[f64]) -> Vec<f64> {
        let dp = self.dphi();
        let mut out = vec![0.0; self.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let (k, l) = (idx / self.n_phi, idx % self.n_phi);
            let (th, _) = self.angles(idx);
            let s = if self.dim == 1 { 1.0 } else { th.sin() };
            let up = (u[self.index(k, l + 1)] - u[self.index(k, l + self.n_phi - 1)]) / (2.0 * dp * s);
            let mut g2 = up * up;
            if self.dim == 2 {
                let dt = self.dtheta();
                let ut = if k == 0 {
                    (u[self.index(1, l)] - u[idx]) / dt
                } else if k + 1 == self.n_theta {
                    (u[idx] - u[self.index(k - 1, l)]) / dt
                } else {
                    (u[self.index(k + 1, l)] - u[self.index(k - 1, l)]) / (2.0 * dt)
                };
                g2 += ut * ut;
            }
            *o = g2;
        }
        out
    }
}

fn check_sphere_state(state: &TodaState, n: usize) -> Result<&SphereGrid, ConeError> {
    match &state.domain {
        TodaDomain::Sphere { grid, n: m } if grid.dim + 2 == n && *m == n => Ok(grid),
        _ => Err(ConeError::DimensionMismatch { n, expected: n.saturating_sub(2) }),
    }
}

/// `Δ_S g_i + (n-2) g_i - 2 Σ_{j≠i} (-1)^{i-j} / (g_j - g_i)` at every node.
pub fn sphere_toda_residual(state: &TodaState, n: usize) -> Result<Vec<Vec<f64>>, ConeError> {
    check_sphere_state(state, n)?;
    Ok(crate::toda::toda_residual(state)?.fields)
}

/// Raw integrals of the certificate for one consecutive gap `v_i = g_{i+1} - g_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapIntegrals {
    /// `∫ |∇ log v_i|² + (n-2) |S^{n-2}|`.
    pub a: f64,
    /// `4 ∫ v_i^{-2}`.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarinaReport {
    pub n: usize,
    pub eps: f64,
    pub per_gap: Vec<GapIntegrals>,
    /// `((n-3)² + ε)/4 · |S^{n-2}|`.
    pub stability_bound: f64,
    /// `(n-2) |S^{n-2}|`, the lower bound every `A_i` carries.
    pub curvature_floor: f64,
    /// Relative slack allowed in `A_i ≤ B_i` for discretization error.
    pub slack: f64,
    pub contradiction: bool,
}

impl FarinaReport {
    /// Assembles the report from computed integrals.
    ///
    /// The interaction equation forces `A_i ≤ B_i` for every gap, stability
    /// forces `B_i ≤ stability_bound` for some gap. Since `A_i ≥ curvature_floor`,
    /// both cannot hold once `curvature_floor > stability_bound`; the flag
    /// records that every gap compatible with the first inequality violates the second.
    pub fn from_integrals(n: usize, eps: f64, per_gap: Vec<GapIntegrals>, slack: f64) -> Result<Self, ConeError> {
        if n < 3 {
            return Err(ConeError::DimensionTooSmall(n));
        }
        let area = sphere_area(n - 1);
        let nf = n as f64;
        let stability_bound = ((nf - 3.0).powi(2) + eps) / 4.0 * area;
        let curvature_floor = (nf - 2.0) * area;
        let contradiction = curvature_floor > stability_bound
            && per_gap
                .iter()
                .filter(|g| g.a <= g.b + slack * g.a.abs().max(g.b.abs()))
                .all(|g| g.b > stability_bound);
        Ok(Self { n, eps, per_gap, stability_bound, curvature_floor, slack, contradiction })
    }
}

/// Evaluates the integral certificate on an ordered spherical state.
pub fn farina_certificate(state: &TodaState, n: usize, eps: f64) -> Result<FarinaReport, ConeError> {
    let grid = check_sphere_state(state, n)?;
    let area = sphere_area(n - 1);
    let mut per_gap = Vec::new();
    for i in 0..state.profiles.len().saturating_sub(1) {
        let v: Vec<f64> = state.profiles[i + 1].iter().zip(&state.profiles[i]).map(|(u, l)| u - l).collect();
        if let Some((node, &gap)) = v.iter().enumerate().find(|(_, g)| !(**g > 0.0)) {
            return Err(ConeError::NonPositiveGap { lower: i, upper: i + 1, node, gap });
        }
        let logv: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        let a = grid.integrate(&grid.gradient_sq(&logv)) + (n as f64 - 2.0) * area;
        let b = 4.0 * grid.integrate(&v.iter().map(|x| x.powi(-2)).collect::<Vec<_>>());
        per_gap.push(GapIntegrals { a, b });
    }
    FarinaReport::from_integrals(n, eps, per_gap, 1e-6)
}

/// `(n-2) - (n-3)²/4`; positive exactly for `3 ≤ n ≤ 7`.
pub fn dimension_gap(n: usize) -> f64 {
    let n = n as f64;
    (n - 2.0) - (n - 3.0).powi(2) / 4.0
}

/// Cutoff in `t = log r`: zero for `t < -(2w + P)`, smooth ramps of width
/// `w` on both sides of a plateau of length `P`, zero again for `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyCutoff {
    pub ramp: f64,
    pub plateau: f64,
}

impl HardyCutoff {
    /// A grid of ramp widths and plateau lengths in `log r`.
    pub fn family() -> Vec<Self> {
        let mut out = Vec::new();
        for ramp in [1.0, 2.0, 4.0, 8.0] {
            for plateau in [5.0, 10.0, 20.0, 40.0] {
                out.push(Self { ramp, plateau });
            }
        }
        out
    }

    fn smoothstep(t: f64) -> (f64, f64) {
        let t = t.clamp(0.0, 1.0);
        (t * t * t * (10.0 - 15.0 * t + 6.0 * t * t), 30.0 * t * t * (1.0 - t) * (1.0 - t))
    }

    /// `(χ, dχ/dt)`.
    fn chi(&self, t: f64) -> (f64, f64) {
        let start = -(2.0 * self.ramp + self.plateau);
        if t <= start || t >= 0.0 {
            (0.0, 0.0)
        } else if t < start + self.ramp {
            let (v, d) = Self::smoothstep((t - start) / self.ramp);
            (v, d / self.ramp)
        } else if t > -self.ramp {
            let (v, d) = Self::smoothstep(-t / self.ramp);
            (v, -d / self.ramp)
        } else {
            (1.0, 0.0)
        }
    }
}

/// `inf ∫_0^1 ψ'² r^{n-2} dr / ∫_0^1 ψ² r^{n-4} dr` over `ψ = r^{-(n-3)/2} χ(log r)`.
///
/// In `t = log r` both integrands lose their powers of `r`, and the
/// quotient becomes `∫ (χ' - αχ)² dt / ∫ χ² dt` with `α = (n-3)/2`.
pub fn hardy_ratio(n: usize, family: &[HardyCutoff]) -> Result<f64, ConeError> {
    if n < 3 {
        return Err(ConeError::DimensionTooSmall(n));
    }
    let alpha = (n as f64 - 3.0) / 2.0;
    let gl = legendre_unit(12);
    let mut best = f64::INFINITY;
    for c in family {
        if !(c.ramp > 0.0 && c.plateau >= 0.0) {
            return Err(ConeError::DegenerateDenominator);
        }
        let start = -(2.0 * c.ramp + c.plateau);
        let pieces = [(start, start + c.ramp), (start + c.ramp, -c.ramp), (-c.ramp, 0.0)];
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in pieces {
            if b <= a {
                continue;
            }
            let m = ((b - a) / 0.25).ceil().max(1.0) as usize;
            let h = (b - a) / m as f64;
            for k in 0..m {
                let lo = a + k as f64 * h;
                for &(t, w) in gl.iter() {
                    let (v, d) = c.chi(lo + t * h);
                    num += w * h * (d - alpha * v).powi(2);
                    den += w * h * v * v;
                }
            }
        }
        if !(den > 0.0) {
            return Err(ConeError::DegenerateDenominator);
        }
        best = best.min(num / den);
    }
    if !best.is_finite() {
        return Err(ConeError::DegenerateDenominator);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_weights_and_constants() {
        let g = SphereGrid::sphere(24, 48).unwrap();
        assert_relative_eq!(g.weights().iter().sum::<f64>(), 4.0 * PI, max_relative = 1e-13);
        let lap = g.apply_laplacian(&vec![1.0; g.len()]);
        assert!(lap.iter().all(|v| v.abs() < 1e-10));
        let c = SphereGrid::circle(40).unwrap();
        assert_relative_eq!(c.weights().iter().sum::<f64>(), 2.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn circle_eigenfunction() {
        let c = SphereGrid::circle(400).unwrap();
        let u: Vec<f64> = (0..c.len()).map(|i| c.angles(i).1.cos()).collect();
        let lu = c.apply_laplacian(&u);
        let err = lu.iter().zip(&u).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4);
    }

    #[test]
    fn dimension_gap_values() {
        assert_eq!(dimension_gap(7), 1.0);
        assert_eq!(dimension_gap(4), 1.75);
        assert_eq!(dimension_gap(8), -0.25);
    }

    #[test]
    fn hardy_n3_goes_to_zero() {
        let r = hardy_ratio(3, &HardyCutoff::family()).unwrap();
        assert!(r < 0.02 && r >= 0.0);
    }
}
