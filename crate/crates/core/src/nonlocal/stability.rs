//! Stability quadratic form and the first and second variations of the
//! fractional perimeter along vertical graph flows `g_j → g_j + t φ_j`.

use rayon::prelude::*;
use serde::Serialize;

use super::columns::{clip_inside, clip_outside, split};
use super::curvature::{box_exits, face_integral, far_tail, h_k, norm, shifted, wall_nodes};
use super::{disc_rule, CylinderDomain, NonlocalError};
use crate::geometry::{GraphSheet, GridSpec, Jet, SheetStack};
use crate::kernel::VerticalProfile;
use crate::quadrature::{pv_integrate, PvOptions, QuadratureSpec};

/// Test function on each sheet, stored on the stack grid and interpolated.
/// Values at `|x'| ≥ support_radius` are treated as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationField {
    pub eta: Vec<GraphSheet>,
    pub support_radius: f64,
    /// Radii below the support radius where the field is not smooth; used
    /// to split the outer quadrature.
    pub breaks: Vec<f64>,
}

impl PerturbationField {
    pub fn from_fn(
        grid: GridSpec,
        n_sheets: usize,
        support_radius: f64,
        f: impl Fn(usize, &[f64]) -> f64,
    ) -> Result<Self, NonlocalError> {
        let eta = (0..n_sheets)
            .map(|k| {
                let vals = grid.sample(|x| {
                    let r = norm(x);
                    if r >= support_radius {
                        0.0
                    } else {
                        f(k, x)
                    }
                });
                GraphSheet::new(grid, vals)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { eta, support_radius, breaks: Vec::new() })
    }

    pub fn zero(grid: GridSpec, n_sheets: usize, support_radius: f64) -> Result<Self, NonlocalError> {
        Self::from_fn(grid, n_sheets, support_radius, |_, _| 0.0)
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        if norm(x) >= self.support_radius {
            0.0
        } else {
            self.eta[i].value(x)
        }
    }

    pub(crate) fn jet(&self, i: usize, x: &[f64]) -> Jet {
        if norm(x) >= self.support_radius {
            Jet::default()
        } else {
            self.eta[i].jet(x)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.eta.iter().all(|s| s.values.iter().all(|v| *v == 0.0))
    }

    pub fn validate(&self, stack: &SheetStack, omega: &CylinderDomain) -> Result<(), NonlocalError> {
        if self.eta.len() != stack.len() {
            return Err(NonlocalError::SupportViolation(format!(
                "{} fields for {} sheets",
                self.eta.len(),
                stack.len()
            )));
        }
        if self.eta.iter().any(|e| e.grid != *stack.grid()) {
            return Err(NonlocalError::SupportViolation("field grid differs from the stack grid".into()));
        }
        if !(self.support_radius > 0.0 && self.support_radius < omega.horizontal_radius) {
            return Err(NonlocalError::SupportViolation(format!(
                "support radius {} must lie in (0, {})",
                self.support_radius, omega.horizontal_radius
            )));
        }
        Ok(())
    }
}

/// Terms of the stability inequality for one test function.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StabilityReport {
    /// `σ ∬_{Γ×Γ} |ν(x)-ν(y)|² η²(x) K(x-y)`.
    pub lhs_interaction: f64,
    /// `σ ∬_{Γ×Γ} (η(x)-η(y))² K(x-y)`.
    pub rhs_dirichlet: f64,
    pub ext2: f64,
    /// `rhs_dirichlet + ext2 - lhs_interaction`.
    pub margin: f64,
}

/// Terms of the second variation of `per_s` along a vertical flow.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SecondVariation {
    /// Stability terms evaluated at `η = ζ = X·ν`.
    pub form: StabilityReport,
    /// `-∫_Γ H_K div_τ(ζ X_τ) dH` (the divergence term, `div X = 0` here).
    pub curvature_term: f64,
    /// `2 margin + 2σ curvature_term`.
    pub value: f64,
}

type Eta<'a> = &'a (dyn Fn(usize, &[f64]) -> f64 + Sync);

fn check_common(stack: &SheetStack, omega: &CylinderDomain) -> Result<(), NonlocalError> {
    if stack.params.n >= 4 {
        return Err(NonlocalError::DimensionTooLarge(stack.params.n));
    }
    omega.check_stack(stack)
}

/// Inner surface integrals at `x = (x', g_i(x'))` over `Γ_j ∩ Ω`:
/// `∫ (η_i(x') - η_j(y'))² K W_j dy'` when `dirichlet`, otherwise
/// `∫ |ν_i(x) - ν_j(y)|² K W_j dy'`.
fn surface_inner(
    stack: &SheetStack,
    omega: &CylinderDomain,
    eta: Eta<'_>,
    i: usize,
    j: usize,
    x: &[f64],
    dirichlet: bool,
    spec: &QuadratureSpec,
) -> Result<f64, NonlocalError> {
    let p = stack.params;
    let a = p.half_exponent();
    let dim = stack.dim();
    let si = stack.sheets[i].jet(x);
    let nu_i: Vec<f64> = si.upward_normal(dim).iter().map(|v| v * stack.parity(i)).collect();
    let eta_x = eta(i, x);
    let sj = &stack.sheets[j];
    let pj = stack.parity(j);
    let f = |z: &[f64]| -> f64 {
        let y = shifted(x, z);
        let y = &y[..dim];
        let jet = sj.jet(y);
        let dz = jet.value - si.value;
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let k = (r2 + dz * dz).powf(-a) * jet.area_factor();
        if dirichlet {
            let d = eta_x - eta(j, y);
            d * d * k
        } else {
            let nu_j = jet.upward_normal(dim);
            let diff: f64 = nu_i.iter().zip(&nu_j).map(|(u, v)| (u - pj * v).powi(2)).sum();
            diff * k
        }
    };
    let wall = |w: &[f64]| omega.ray_to_wall(x, w);
    let opts = if i == j {
        PvOptions { core_power: Some(-p.s), ray_length: Some(&wall), ..Default::default() }
    } else {
        let gap = (sj.value(x) - si.value).abs();
        PvOptions {
            core_power: Some(dim as f64 - 1.0),
            smooth_radius: Some(0.5 * gap),
            ray_length: Some(&wall),
            ..Default::default()
        }
    };
    Ok(pv_integrate(&f, x, spec, &opts)?.value)
}

/// `dir · V(x)` where `V(x) = ∫_{E∖Ω} ∇K(y-x) dy + ∫_{E∩∂Ω} K(y-x) n_Ω dH_y`,
/// `x = (x', g_i(x'))`.
fn ext2_component(
    stack: &SheetStack,
    omega: &CylinderDomain,
    i: usize,
    x: &[f64],
    dir: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64, NonlocalError> {
    let p = stack.params;
    let a = p.half_exponent();
    let prof = VerticalProfile::new(a);
    let prof1 = VerticalProfile::new(a + 1.0);
    let dim = stack.dim();
    let ns = p.n as f64 + p.s;
    let xn = stack.sheets[i].value(x);
    let (zlo, zhi) = (omega.z_min, omega.z_max);
    let e_below = stack.e_below();
    let dn = dir[dim];
    let bulk_f = |z: &[f64]| -> f64 {
        let r = norm(z);
        let y = shifted(x, z);
        let y = &y[..dim];
        let (e, _) = split(&stack.heights(y), e_below);
        let e = if omega.in_disc(y) { clip_outside(&e, zlo, zhi) } else { e };
        let zdir: f64 = z.iter().zip(dir).map(|(u, v)| u * v).sum();
        let r2 = r * r;
        let mut vert = 0.0;
        let mut seg1 = 0.0;
        for &(lo, hi) in &e {
            let (t1, t2) = (lo - xn, hi - xn);
            let p2 = if t2.is_finite() { (r2 + t2 * t2).powf(-a) } else { 0.0 };
            let p1 = if t1.is_finite() { (r2 + t1 * t1).powf(-a) } else { 0.0 };
            vert += p2 - p1;
            seg1 += prof1.seg(t1 / r, t2 / r);
        }
        dn * vert - ns * zdir * r.powf(-1.0 - 2.0 * a) * seg1
    };
    let vdist = (xn - zlo).min(zhi - xn);
    let wdist = omega.distance_to_wall(x);
    let wall = |w: &[f64]| {
        let mut b = box_exits(stack.grid(), x, w);
        b.push(omega.ray_to_wall(x, w));
        b
    };
    let opts = PvOptions {
        core_power: Some(dim as f64 - 1.0),
        smooth_radius: Some(0.5 * vdist.min(wdist)),
        breakpoints: vec![wdist],
        ray_breaks: Some(&wall),
        tails: vec![far_tail(&bulk_f, dim, spec, ns)],
        ..Default::default()
    };
    let mut total = pv_integrate(&bulk_f, x, spec, &opts)?.value;
    let e_top = (stack.len() % 2 == 0) == e_below;
    if e_top {
        total += dn * face_integral(omega, x, zhi - xn, a);
    }
    if e_below {
        total -= dn * face_integral(omega, x, zlo - xn, a);
    }
    for (y, w, weight) in wall_nodes(omega, dim, x) {
        let r = norm(&x.iter().zip(&y).map(|(u, v)| u - v).collect::<Vec<_>>());
        let (e, _) = split(&stack.heights(&y), e_below);
        let col: f64 = clip_inside(&e, zlo, zhi).iter().map(|&(lo, hi)| prof.seg((lo - xn) / r, (hi - xn) / r)).sum();
        let wd: f64 = w.iter().zip(dir).map(|(u, v)| u * v).sum();
        total += weight * wd * r.powf(1.0 - 2.0 * a) * col;
    }
    Ok(total)
}

/// The vector `V(x)` of the exterior stability term at `x = (x', g_i(x'))`,
/// from the bulk-plus-boundary formula.
pub fn ext2_vector(
    stack: &SheetStack,
    omega: &CylinderDomain,
    i: usize,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, NonlocalError> {
    check_common(stack, omega)?;
    let n = stack.params.n;
    (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            ext2_component(stack, omega, i, x, &e, spec)
        })
        .collect()
}

/// `V(x)` rewritten by Gauss–Green as `∫_{∂E∖Ω} K(y-x) ν_E(y) dH_y`; valid
/// because the sheets describe `∂E` everywhere.
pub fn ext2_vector_gauss_green(
    stack: &SheetStack,
    omega: &CylinderDomain,
    i: usize,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, NonlocalError> {
    check_common(stack, omega)?;
    let p = stack.params;
    let a = p.half_exponent();
    let dim = stack.dim();
    let xn = stack.sheets[i].value(x);
    let wdist = omega.distance_to_wall(x);
    let grid = stack.grid();
    let wall = |w: &[f64]| {
        let mut b = box_exits(grid, x, w);
        b.push(omega.ray_to_wall(x, w));
        b
    };
    (0..p.n)
        .map(|k| {
            let f = |z: &[f64]| -> f64 {
                let y = shifted(x, z);
                let y = &y[..dim];
                if omega.in_disc(y) {
                    return 0.0;
                }
                let r2: f64 = z.iter().map(|v| v * v).sum();
                let mut acc = 0.0;
                for (j, sh) in stack.sheets.iter().enumerate() {
                    let jet = sh.jet(y);
                    let comp = if k == dim { 1.0 } else { -jet.grad[k] };
                    acc += stack.parity(j) * comp * (r2 + (jet.value - xn).powi(2)).powf(-a);
                }
                acc
            };
            let opts = PvOptions {
                core_power: Some(dim as f64 - 1.0),
                smooth_radius: Some(0.5 * wdist),
                breakpoints: vec![wdist],
                ray_breaks: Some(&wall),
                tails: vec![far_tail(&f, dim, spec, p.n as f64 + p.s)],
                ..Default::default()
            };
            Ok(pv_integrate(&f, x, spec, &opts)?.value)
        })
        .collect()
}

fn stability_core(
    stack: &SheetStack,
    omega: &CylinderDomain,
    eta: Eta<'_>,
    support: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<StabilityReport, NonlocalError> {
    let p = stack.params;
    let dim = stack.dim();
    let nsh = stack.len();
    let mut cuts = breaks.to_vec();
    cuts.push(support);
    let full = disc_rule(dim, omega.horizontal_radius, spec, &cuts, false);
    let inside = disc_rule(dim, support, spec, breaks, false);

    let rhs: f64 = full
        .par_iter()
        .map(|(x, w)| -> Result<f64, NonlocalError> {
            let mut acc = 0.0;
            for i in 0..nsh {
                let wi = stack.sheets[i].jet(x).area_factor();
                for j in 0..nsh {
                    acc += wi * surface_inner(stack, omega, eta, i, j, x, true, spec)?;
                }
            }
            Ok(w * acc)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();

    let parts: Vec<(f64, f64)> = inside
        .par_iter()
        .map(|(x, w)| -> Result<(f64, f64), NonlocalError> {
            let mut lhs = 0.0;
            let mut ext = 0.0;
            for i in 0..nsh {
                let e = eta(i, x);
                if e == 0.0 {
                    continue;
                }
                let jet = stack.sheets[i].jet(x);
                let weight = e * e * jet.area_factor();
                for j in 0..nsh {
                    lhs += weight * surface_inner(stack, omega, eta, i, j, x, false, spec)?;
                }
                let nu: Vec<f64> = jet.upward_normal(dim).iter().map(|v| v * stack.parity(i)).collect();
                ext += weight * ext2_component(stack, omega, i, x, &nu, spec)?;
            }
            Ok((w * lhs, w * ext))
        })
        .collect::<Result<_, _>>()?;
    let lhs: f64 = parts.iter().map(|q| q.0).sum();
    let ext: f64 = parts.iter().map(|q| q.1).sum();
    let lhs_interaction = p.sigma * lhs;
    let rhs_dirichlet = p.sigma * rhs;
    let ext2 = 2.0 * p.sigma * ext;
    Ok(StabilityReport { lhs_interaction, rhs_dirichlet, ext2, margin: rhs_dirichlet + ext2 - lhs_interaction })
}

/// Evaluates the three terms of the stability inequality for `pert`.
pub fn stability_form(
    stack: &SheetStack,
    pert: &PerturbationField,
    omega: &CylinderDomain,
    spec: &QuadratureSpec,
) -> Result<StabilityReport, NonlocalError> {
    check_common(stack, omega)?;
    pert.validate(stack, omega)?;
    if pert.is_zero() {
        return Ok(StabilityReport::default());
    }
    let eta = |i: usize, x: &[f64]| pert.value(i, x);
    stability_core(stack, omega, &eta, pert.support_radius, &pert.breaks, spec)
}

/// `d/dt per_s(E_t)` at `t = 0` for `g_j → g_j + t φ_j`:
/// `2σ Σ_j ∫ H_K(x_j) ζ_j dH` with `ζ_j dH = ±φ_j dy'`.
pub fn first_variation(
    stack: &SheetStack,
    phi: &PerturbationField,
    omega: &CylinderDomain,
    spec: &QuadratureSpec,
) -> Result<f64, NonlocalError> {
    check_common(stack, omega)?;
    phi.validate(stack, omega)?;
    if phi.is_zero() {
        return Ok(0.0);
    }
    let rule = disc_rule(stack.dim(), phi.support_radius, spec, &phi.breaks, false);
    let total: f64 = rule
        .par_iter()
        .map(|(x, w)| -> Result<f64, NonlocalError> {
            let mut acc = 0.0;
            for j in 0..stack.len() {
                let f = phi.value(j, x);
                if f != 0.0 {
                    acc += stack.parity(j) * f * h_k(stack, j, x, spec)?.value;
                }
            }
            Ok(w * acc)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(2.0 * stack.params.sigma * total)
}

/// `d²/dt² per_s(E_t)` at `t = 0` for `g_j → g_j + t φ_j`, from the localized
/// second-variation formula.
pub fn second_variation(
    stack: &SheetStack,
    phi: &PerturbationField,
    omega: &CylinderDomain,
    spec: &QuadratureSpec,
) -> Result<SecondVariation, NonlocalError> {
    check_common(stack, omega)?;
    phi.validate(stack, omega)?;
    let proxy = stack.delta.1 * stack.grid().spacing();
    if proxy > 0.5 {
        return Err(NonlocalError::RoughBoundary(proxy));
    }
    if phi.is_zero() {
        return Ok(SecondVariation::default());
    }
    let zeta = |i: usize, x: &[f64]| stack.parity(i) * phi.value(i, x) / stack.sheets[i].jet(x).area_factor();
    let form = stability_core(stack, omega, &zeta, phi.support_radius, &phi.breaks, spec)?;

    let dim = stack.dim();
    let rule = disc_rule(dim, phi.support_radius, spec, &phi.breaks, false);
    let curv: f64 = rule
        .par_iter()
        .map(|(x, w)| -> Result<f64, NonlocalError> {
            let mut acc = 0.0;
            for j in 0..stack.len() {
                let f = phi.jet(j, x);
                if f.value == 0.0 {
                    continue;
                }
                let g = stack.sheets[j].jet(x);
                let w2 = 1.0 + g.grad_sq();
                let dot = (0..dim).map(|k| f.grad[k] * g.grad[k]).sum::<f64>();
                let mut quad = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        quad += g.grad[a] * g.hess[a][b] * g.grad[b];
                    }
                }
                let div = 2.0 * f.value * dot / w2 + f.value * f.value * g.laplacian() / w2
                    - 2.0 * f.value * f.value * quad / (w2 * w2);
                acc -= stack.parity(j) * h_k(stack, j, x, spec)?.value * div;
            }
            Ok(w * acc)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    let value = 2.0 * form.margin + 2.0 * stack.params.sigma * curv;
    Ok(SecondVariation { form, curvature_term: curv, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_stack_fn;
    use crate::kernel::FractionalParams;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::new(0.05, 0.1, 200.0, 1e-7).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_report() {
        let p = FractionalParams::new(2, 0.8).unwrap();
        let grid = GridSpec::new(1, 3.0, 121, false).unwrap();
        let st = build_stack_fn(grid, &[&|_: &[f64]| 0.0], p).unwrap();
        let om = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
        let pert = PerturbationField::zero(grid, 1, 0.5).unwrap();
        assert_eq!(stability_form(&st, &pert, &om, &spec()).unwrap(), StabilityReport::default());
        assert_eq!(first_variation(&st, &pert, &om, &spec()).unwrap(), 0.0);
    }

    #[test]
    fn flat_sheet_has_no_interaction() {
        let p = FractionalParams::new(2, 0.8).unwrap();
        let grid = GridSpec::new(1, 3.0, 121, false).unwrap();
        let st = build_stack_fn(grid, &[&|_: &[f64]| 0.0], p).unwrap();
        let om = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
        let pert = PerturbationField::from_fn(grid, 1, 0.6, |_, x| (1.0 - (x[0] / 0.6).powi(2)).powi(3)).unwrap();
        let rep = stability_form(&st, &pert, &om, &spec()).unwrap();
        assert!(rep.lhs_interaction.abs() < 1e-14);
        assert!(rep.rhs_dirichlet > 0.0);
        assert!(rep.margin > 0.0);
    }

    #[test]
    fn support_outside_domain_is_rejected() {
        let p = FractionalParams::new(2, 0.8).unwrap();
        let grid = GridSpec::new(1, 3.0, 61, false).unwrap();
        let st = build_stack_fn(grid, &[&|_: &[f64]| 0.0], p).unwrap();
        let om = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
        let pert = PerturbationField::from_fn(grid, 1, 1.5, |_, _| 1.0).unwrap();
        assert!(matches!(stability_form(&st, &pert, &om, &spec()), Err(NonlocalError::SupportViolation(_))));
    }

    #[test]
    fn gauss_green_rewrite_agrees() {
        let p = FractionalParams::new(2, 0.7).unwrap();
        let grid = GridSpec::new(1, 4.0, 161, false).unwrap();
        let st = build_stack_fn(
            grid,
            &[&|x: &[f64]| 0.1 * (x[0]).sin() - 0.3, &|x: &[f64]| 0.3 + 0.05 * x[0] * x[0].cos()],
            p,
        )
        .unwrap();
        let om = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
        let spec = QuadratureSpec::new(0.02, 0.05, 200.0, 1e-10).unwrap();
        for x in [[0.0], [0.4]] {
            let v = ext2_vector(&st, &om, 0, &x, &spec).unwrap();
            let g = ext2_vector_gauss_green(&st, &om, 0, &x, &spec).unwrap();
            for k in 0..2 {
                assert!((v[k] - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "{v:?} vs {g:?}");
            }
        }
    }
}
