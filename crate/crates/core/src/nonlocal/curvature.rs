//! Fractional mean curvature of sheets and the exterior term of the
//! Euler–Lagrange equation.

use serde::Serialize;

use super::columns::{clip_inside, clip_outside, signed, split};
use super::{unit_directions, CylinderDomain, NonlocalError};
use crate::geometry::{sheet_distance, GeometryError, GraphSheet, SheetStack};
use crate::kernel::{FractionalParams, VerticalProfile};
use crate::quadrature::{pv_integrate, IntegralResult, PowerTail, PvOptions, QuadratureSpec};

pub(crate) fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn shifted(x: &[f64], z: &[f64]) -> [f64; 2] {
    let mut y = [0.0; 2];
    for k in 0..x.len() {
        y[k] = x[k] + z[k];
    }
    y
}

/// Far-field model `c |z|^-power` fitted at `r_tail`, averaged over directions.
pub(crate) fn far_tail(f: &(dyn Fn(&[f64]) -> f64 + Sync), dim: usize, spec: &QuadratureSpec, power: f64) -> PowerTail {
    let dirs = unit_directions(dim, 64);
    let r = spec.r_tail;
    let mean = dirs
        .iter()
        .map(|w| {
            let z: Vec<f64> = w.iter().map(|v| v * r).collect();
            f(&z)
        })
        .sum::<f64>()
        / dirs.len() as f64;
    PowerTail { coeff: mean * r.powf(power), power }
}

/// Radii where a periodic sheet repeats, so radial panels never straddle
/// more than one period.
pub(crate) fn period_breaks(stack_grid: &crate::geometry::GridSpec, spec: &QuadratureSpec) -> Vec<f64> {
    if !stack_grid.periodic {
        return Vec::new();
    }
    let period = 2.0 * stack_grid.extent;
    (1..=32).map(|k| k as f64 * period).take_while(|&r| r < spec.r_tail).collect()
}

/// Distances from `x` to the nearest spline knots in dimension 1, where the
/// interpolant's third derivative jumps.
pub(crate) fn knot_breaks(grid: &crate::geometry::GridSpec, x: &[f64], spec: &QuadratureSpec) -> Vec<f64> {
    if grid.dim_horizontal != 1 {
        return Vec::new();
    }
    let h = grid.spacing();
    let u = (x[0] + grid.extent) / h;
    let last = if grid.periodic { grid.resolution as i64 } else { grid.resolution as i64 - 1 };
    (0..=last)
        .map(|k| (k as f64 - u).abs() * h)
        .filter(|&d| d > 1e-9 * h && d < spec.r_tail)
        .collect()
}

/// Distances along the unit direction `w` from `x` to the faces of a
/// non-periodic grid box, where the constant extension starts.
pub(crate) fn box_exits(grid: &crate::geometry::GridSpec, x: &[f64], w: &[f64]) -> Vec<f64> {
    if grid.periodic {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (xk, wk) in x.iter().zip(w) {
        if wk.abs() < 1e-14 {
            continue;
        }
        for face in [-grid.extent, grid.extent] {
            let t = (face - xk) / wk;
            if t > 0.0 {
                out.push(t);
            }
        }
    }
    out
}

fn check_point(grid: &crate::geometry::GridSpec, x: &[f64]) -> Result<(), NonlocalError> {
    if x.len() != grid.dim_horizontal || !grid.is_interior(x) {
        return Err(GeometryError::BoundaryNode(x.to_vec()).into());
    }
    Ok(())
}

fn check_index(stack: &SheetStack, i: usize) -> Result<(), NonlocalError> {
    if i >= stack.len() {
        return Err(NonlocalError::Index(format!("sheet {i} of {}", stack.len())));
    }
    Ok(())
}

/// Smallest vertical gap from sheet `i` to its neighbours at `x`.
pub(crate) fn local_gap(stack: &SheetStack, i: usize, x: &[f64]) -> f64 {
    let h = stack.heights(x);
    let mut gap = f64::INFINITY;
    if i > 0 {
        gap = gap.min(h[i] - h[i - 1]);
    }
    if i + 1 < h.len() {
        gap = gap.min(h[i + 1] - h[i]);
    }
    gap
}

/// Fractional mean curvature of a single graph, oriented by the upward
/// normal: `-σ ∫ F((g(y')-g(x'))/|x'-y'|) |x'-y'|^{-(n-1+s)} dy'` with
/// `F(t) = s ∫_0^t (1+τ²)^{-(n+s)/2} dτ`. Tends to `c_∘ H` as `s → 1`.
pub fn hs_graph(
    sheet: &GraphSheet,
    x: &[f64],
    p: &FractionalParams,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, NonlocalError> {
    let grid = &sheet.grid;
    check_point(grid, x)?;
    if p.n != grid.dim_horizontal + 1 {
        return Err(NonlocalError::DomainInvalid(format!("n = {} for a {}-dimensional grid", p.n, grid.dim_horizontal)));
    }
    let lip = sheet.max_gradient();
    if lip >= 1.0 {
        return Err(NonlocalError::NotLipschitz(lip));
    }
    let prof = VerticalProfile::new(p.half_exponent());
    let pw = p.n as f64 - 1.0 + p.s;
    let scale = p.sigma * p.s;
    let f = move |z: &[f64]| -> f64 {
        let r = norm(z);
        let slope = sheet.rise(x, z);
        -scale * prof.f1(slope) * r.powf(-pw)
    };
    let mut breaks = period_breaks(grid, spec);
    breaks.extend(knot_breaks(grid, x, spec));
    let edges = |w: &[f64]| box_exits(grid, x, w);
    let opts = PvOptions {
        core_power: Some(-p.s),
        ray_breaks: Some(&edges),
        breakpoints: breaks,
        tails: vec![far_tail(&f, grid.dim_horizontal, spec, p.n as f64 + p.s)],
        ..Default::default()
    };
    Ok(pv_integrate(&f, x, spec, &opts)?)
}

/// Signed and unsigned interaction of sheet `j` with a point of sheet `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossIntegral {
    /// `σ ∫_{Γ_j} ν(y)·(y-x) |y-x|^{-(n+s)} dH_y` with `ν` the outward normal of `E`.
    pub signed: IntegralResult,
    /// `σ ∫_{Γ_j} |y-x|^{-(n+s)} dH_y`.
    pub unsigned: IntegralResult,
}

pub fn hs_cross(stack: &SheetStack, i: usize, x: &[f64], j: usize, spec: &QuadratureSpec) -> Result<CrossIntegral, NonlocalError> {
    check_index(stack, i)?;
    check_index(stack, j)?;
    if i == j {
        return Err(NonlocalError::Index(format!("hs_cross needs distinct sheets, got {i} twice")));
    }
    let grid = stack.grid();
    if x.len() != grid.dim_horizontal {
        return Err(GeometryError::BoundaryNode(x.to_vec()).into());
    }
    let p = stack.params;
    let a = p.half_exponent();
    let dim = grid.dim_horizontal;
    let xn = stack.sheets[i].value(x);
    let sj = &stack.sheets[j];
    let par = stack.parity(j);
    let sigma = p.sigma;
    let signed_f = move |z: &[f64]| -> f64 {
        let y = shifted(x, z);
        let jet = sj.jet(&y[..dim]);
        let dz = jet.value - xn;
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let tang = jet.grad[0] * z[0] + if dim == 2 { jet.grad[1] * z[1] } else { 0.0 };
        sigma * par * (dz - tang) * (r2 + dz * dz).powf(-a)
    };
    let unsigned_f = move |z: &[f64]| -> f64 {
        let y = shifted(x, z);
        let jet = sj.jet(&y[..dim]);
        let dz = jet.value - xn;
        let r2: f64 = z.iter().map(|v| v * v).sum();
        sigma * (r2 + dz * dz).powf(-a) * jet.area_factor()
    };
    let gap = (sj.value(x) - xn).abs();
    let edges = |w: &[f64]| box_exits(grid, x, w);
    let mut opts = PvOptions {
        core_power: Some(dim as f64 - 1.0),
        smooth_radius: Some(0.5 * gap),
        breakpoints: period_breaks(grid, spec),
        ray_breaks: Some(&edges),
        ..Default::default()
    };
    opts.tails = vec![far_tail(&signed_f, dim, spec, p.n as f64 + p.s)];
    let signed_v = pv_integrate(&signed_f, x, spec, &opts)?;
    opts.tails = vec![far_tail(&unsigned_f, dim, spec, p.n as f64 + p.s)];
    let unsigned_v = pv_integrate(&unsigned_f, x, spec, &opts)?;
    Ok(CrossIntegral { signed: signed_v, unsigned: unsigned_v })
}

/// Set-based nonlocal mean curvature
/// `p.v. ∫ (χ_{E^c} - χ_E)(y) |x-y|^{-n-s} dy` at `x = (x', g_i(x'))`, without
/// the `σ` prefactor. The surface form of the fractional mean curvature of the
/// whole boundary equals `(sσ/2)` times this value.
pub fn h_k(stack: &SheetStack, i: usize, x: &[f64], spec: &QuadratureSpec) -> Result<IntegralResult, NonlocalError> {
    check_index(stack, i)?;
    let grid = stack.grid();
    if x.len() != grid.dim_horizontal {
        return Err(GeometryError::BoundaryNode(x.to_vec()).into());
    }
    let p = stack.params;
    let a = p.half_exponent();
    let prof = VerticalProfile::new(a);
    let dim = grid.dim_horizontal;
    let xn = stack.sheets[i].value(x);
    let e_below = stack.e_below();
    let f = move |z: &[f64]| -> f64 {
        let r = norm(z);
        let y = shifted(x, z);
        let rel: Vec<f64> = stack
            .heights(&y[..dim])
            .iter()
            .enumerate()
            .map(|(k, h)| if k == i { stack.sheets[i].rise(x, z) } else { (h - xn) / r })
            .collect();
        let d: f64 = signed(&rel, e_below).into_iter().map(|(lo, hi, u)| u * prof.seg(lo, hi)).sum();
        r.powf(1.0 - 2.0 * a) * d
    };
    let mut breaks = period_breaks(grid, spec);
    breaks.extend(knot_breaks(grid, x, spec));
    let edges = |w: &[f64]| box_exits(grid, x, w);
    let opts = PvOptions {
        core_power: Some(-p.s),
        ray_breaks: Some(&edges),
        smooth_radius: Some((0.5 * local_gap(stack, i, x)).min(spec.r_core)),
        breakpoints: breaks,
        // far columns carry (u_bottom + u_top) F_inf, which vanishes for an odd count
        tails: vec![far_tail(&f, dim, spec, if stack.len() % 2 == 1 { 2.0 * a } else { 2.0 * a - 1.0 })],
        ..Default::default()
    };
    Ok(pv_integrate(&f, x, spec, &opts)?)
}

/// `Σ_j H_s[Γ_j ∩ Ω](x)` for `x = (x', g_i(x'))`, each sheet truncated to the
/// disc and oriented by the outward normal of `E`.
pub fn hs_in_domain(
    stack: &SheetStack,
    omega: &CylinderDomain,
    i: usize,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<IntegralResult, NonlocalError> {
    check_index(stack, i)?;
    if x.len() != stack.dim() || !omega.in_disc(x) {
        return Err(NonlocalError::DomainInvalid(format!("point {x:?} is outside the disc")));
    }
    let p = stack.params;
    let a = p.half_exponent();
    let dim = stack.dim();
    let xn = stack.sheets[i].value(x);
    let sigma = p.sigma;
    let f = move |z: &[f64]| -> f64 {
        let y = shifted(x, z);
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let mut acc = 0.0;
        for (j, sh) in stack.sheets.iter().enumerate() {
            let jet = sh.jet(&y[..dim]);
            let dz = jet.value - xn;
            let defect = if j == i {
                sh.tangent_defect(x, z)
            } else {
                dz - jet.grad[0] * z[0] - if dim == 2 { jet.grad[1] * z[1] } else { 0.0 }
            };
            acc += stack.parity(j) * defect * (r2 + dz * dz).powf(-a);
        }
        sigma * acc
    };
    let wall = move |w: &[f64]| omega.ray_to_wall(x, w);
    let opts = PvOptions {
        core_power: Some(-p.s),
        smooth_radius: Some((0.5 * local_gap(stack, i, x)).min(spec.r_core)),
        ray_length: Some(&wall),
        ..Default::default()
    };
    Ok(pv_integrate(&f, x, spec, &opts)?)
}

/// Wall quadrature: points `y'` on `∂B'_R`, outward unit normals and weights.
pub(crate) fn wall_nodes(omega: &CylinderDomain, dim: usize, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let r = omega.horizontal_radius;
    if dim == 1 {
        return vec![(vec![r], vec![1.0], 1.0), (vec![-r], vec![-1.0], 1.0)];
    }
    let delta = omega.distance_to_wall(x).max(1e-6 * r);
    let m = ((16.0 * r / delta).ceil() as usize).clamp(256, 8192);
    unit_directions(2, m)
        .into_iter()
        .map(|w| (vec![r * w[0], r * w[1]], w, r * 2.0 * std::f64::consts::PI / m as f64))
        .collect()
}

/// `∫_{B'_R} (|y'-x'|² + c²)^{-a} dy'`.
pub(crate) fn face_integral(omega: &CylinderDomain, x: &[f64], c: f64, a: f64) -> f64 {
    let c = c.abs();
    let r = omega.horizontal_radius;
    if x.len() == 1 {
        let prof = VerticalProfile::new(a);
        return c.powf(1.0 - 2.0 * a) * prof.seg((-r - x[0]) / c, (r - x[0]) / c);
    }
    let delta = omega.distance_to_wall(x).max(1e-6 * r);
    let m = ((16.0 * r / delta.min(c.max(1e-3 * r))).ceil() as usize).clamp(256, 8192);
    let dirs = unit_directions(2, m);
    let base = c.powf(2.0 - 2.0 * a);
    dirs.iter()
        .map(|w| {
            let l = omega.ray_to_wall(x, w);
            (base - (l * l + c * c).powf(1.0 - a)) / (2.0 * (a - 1.0))
        })
        .sum::<f64>()
        * 2.0
        * std::f64::consts::PI
        / m as f64
}

/// Exterior term of the Euler–Lagrange equation at `x = (x', g_i(x'))`:
/// `σ (∫_{E∩∂Ω} n_Ω·(x-y) K dH_y + s ∫_{E∖Ω} K dy)`.
pub fn ext1(
    stack: &SheetStack,
    omega: &CylinderDomain,
    i: usize,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<IntegralResult, NonlocalError> {
    check_index(stack, i)?;
    omega.check_stack(stack)?;
    if x.len() != stack.dim() || !omega.in_disc(x) {
        return Err(NonlocalError::DomainInvalid(format!("point {x:?} is outside the disc")));
    }
    let p = stack.params;
    let a = p.half_exponent();
    let prof = VerticalProfile::new(a);
    let dim = stack.dim();
    let xn = stack.sheets[i].value(x);
    let (zlo, zhi) = (omega.z_min, omega.z_max);
    let e_below = stack.e_below();
    let bulk_f = move |z: &[f64]| -> f64 {
        let r = norm(z);
        let y = shifted(x, z);
        let y = &y[..dim];
        let (e, _) = split(&stack.heights(y), e_below);
        let e = if omega.in_disc(y) { clip_outside(&e, zlo, zhi) } else { e };
        let d: f64 = e.iter().map(|&(lo, hi)| prof.seg((lo - xn) / r, (hi - xn) / r)).sum();
        r.powf(1.0 - 2.0 * a) * d
    };
    let wall = move |w: &[f64]| {
        let mut b = box_exits(stack.grid(), x, w);
        b.push(omega.ray_to_wall(x, w));
        b
    };
    let vdist = (xn - zlo).min(zhi - xn);
    let mut breaks = period_breaks(stack.grid(), spec);
    breaks.push(omega.distance_to_wall(x));
    let opts = PvOptions {
        core_power: Some(dim as f64 - 1.0),
        smooth_radius: Some(0.5 * vdist.min(omega.distance_to_wall(x))),
        breakpoints: breaks,
        ray_breaks: Some(&wall),
        tails: vec![far_tail(&bulk_f, dim, spec, 2.0 * a - 1.0)],
        ..Default::default()
    };
    let bulk = pv_integrate(&bulk_f, x, spec, &opts)?;

    let mut boundary = 0.0;
    let n_sheets = stack.len();
    // above all sheets is E when the top interval is in E
    let e_top = (n_sheets % 2 == 0) == e_below;
    if e_top {
        boundary += (xn - zhi) * face_integral(omega, x, zhi - xn, a);
    }
    if e_below {
        boundary += (zlo - xn) * face_integral(omega, x, zlo - xn, a);
    }
    for (y, w, weight) in wall_nodes(omega, dim, x) {
        let r = norm(&x.iter().zip(&y).map(|(u, v)| u - v).collect::<Vec<_>>());
        let (e, _) = split(&stack.heights(&y), e_below);
        let col: f64 = clip_inside(&e, zlo, zhi).iter().map(|&(lo, hi)| prof.seg((lo - xn) / r, (hi - xn) / r)).sum();
        let xw: f64 = x.iter().zip(&w).map(|(u, v)| u * v).sum();
        boundary += weight * (xw - omega.horizontal_radius) * r.powf(1.0 - 2.0 * a) * col;
    }
    let value = p.sigma * (boundary + p.s * bulk.value);
    Ok(IntegralResult {
        value,
        est_error: p.sigma * p.s * bulk.est_error,
        core_contrib: p.sigma * p.s * bulk.core_contrib,
        tail_contrib: p.sigma * p.s * bulk.tail_contrib,
    })
}

/// Classical mean curvature of sheet `i` predicted by the interaction law,
/// `2σ (Σ_{j<i} (-1)^{i-j}/d_j - Σ_{j>i} (-1)^{i-j}/d_j)`, with `d_j` the
/// distance from `(x', g_i(x'))` to sheet `j`. The sign matches the Toda system
/// `Δg_i = 2 Σ_{j≠i} (-1)^{i-j}/(g_j - g_i)` with `H = -Δg`.
pub fn interaction_prediction(stack: &SheetStack, i: usize, x: &[f64]) -> Result<f64, NonlocalError> {
    check_index(stack, i)?;
    let mut acc = 0.0;
    for j in 0..stack.len() {
        if j == i {
            continue;
        }
        let d = sheet_distance(stack, i, x, j)?;
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        if j < i {
            acc += sign / d;
        } else {
            acc -= sign / d;
        }
    }
    Ok(2.0 * stack.params.sigma * acc)
}
