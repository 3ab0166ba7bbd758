//! Relative fractional perimeter.

use rayon::prelude::*;

use super::columns::{clip_inside, clip_outside, split, ColumnSet, Interval};
use super::curvature::{far_tail, norm, shifted};
use super::{disc_rule, CylinderDomain, NonlocalError};
use crate::kernel::{FractionalParams, VerticalProfile};
use crate::quadrature::{pv_integrate, IntegralResult, PvOptions, QuadratureSpec};

fn scaled(iv: &[Interval], r: f64) -> Vec<Interval> {
    iv.iter().map(|&(lo, hi)| (lo / r, hi / r)).collect()
}

fn pair_sum(prof: &VerticalProfile, a: &[Interval], b: &[Interval]) -> f64 {
    let mut acc = 0.0;
    for &i in a {
        for &j in b {
            acc += prof.q(i, j);
        }
    }
    acc
}

/// Half the smallest distance between consecutive switching heights of the
/// column at `x`, domain lids included.
fn column_scale<S: ColumnSet + ?Sized>(set: &S, omega: &CylinderDomain, x: &[f64]) -> f64 {
    let mut h = set.boundaries(x);
    h.push(omega.z_min);
    h.push(omega.z_max);
    h.sort_by(f64::total_cmp);
    h.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min) * 0.5
}

/// `σ ∬_{(R^n×R^n)∖(Ω^c×Ω^c)} (χ_E(x)-χ_E(y))² |x-y|^{-n-s} dx dy`.
///
/// The kernel is integrated exactly along vertical columns, leaving an outer
/// integral over the disc and an inner one over all horizontal offsets. The
/// inner integrals run at a fixed refinement level so that nearby sets are
/// evaluated on identical nodes.
pub fn per_s<S: ColumnSet + ?Sized>(
    set: &S,
    omega: &CylinderDomain,
    p: &FractionalParams,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, NonlocalError> {
    omega.validate()?;
    p.validate().map_err(|e| NonlocalError::DomainInvalid(e.to_string()))?;
    if p.n >= 4 {
        return Err(NonlocalError::DimensionTooLarge(p.n));
    }
    let dim = set.horizontal_dim();
    if p.n != dim + 1 {
        return Err(NonlocalError::DomainInvalid(format!("n = {} for a set over R^{dim}", p.n)));
    }
    let a = p.half_exponent();
    let prof = VerticalProfile::new(a);
    let (zlo, zhi) = (omega.z_min, omega.z_max);
    let e_below = set.e_below();
    let outer = disc_rule(dim, omega.horizontal_radius, spec, &[], true);
    let inner = |x: &Vec<f64>| -> Result<(f64, f64), NonlocalError> {
        let (e, ec) = split(&set.boundaries(x), e_below);
        let a_in = clip_inside(&e, zlo, zhi);
        let ac_in = clip_inside(&ec, zlo, zhi);
        if a_in.is_empty() && ac_in.is_empty() {
            return Ok((0.0, 0.0));
        }
        let f = |z: &[f64]| -> f64 {
            let r = norm(z);
            let y = shifted(x, z);
            let y = &y[..dim];
            let (ey, ecy) = split(&set.boundaries(y), e_below);
            let inside = omega.in_disc(y);
            let (ey_out, ecy_out) = if inside {
                (clip_outside(&ey, zlo, zhi), clip_outside(&ecy, zlo, zhi))
            } else {
                (ey.clone(), ecy.clone())
            };
            let ai = scaled(&a_in, r);
            let aci = scaled(&ac_in, r);
            let v = pair_sum(&prof, &ai, &scaled(&ecy, r))
                + pair_sum(&prof, &ai, &scaled(&ecy_out, r))
                + pair_sum(&prof, &aci, &scaled(&ey, r))
                + pair_sum(&prof, &aci, &scaled(&ey_out, r));
            r.powf(2.0 - 2.0 * a) * v
        };
        let wall = |w: &[f64]| vec![omega.ray_to_wall(x, w)];
        let opts = PvOptions {
            core_power: Some(-p.s),
            smooth_radius: Some(column_scale(set, omega, x).min(spec.r_core)),
            breakpoints: vec![omega.distance_to_wall(x)],
            ray_breaks: Some(&wall),
            tails: vec![far_tail(&f, dim, spec, 2.0 * a - 1.0)],
            fixed_level: Some(1),
            ..Default::default()
        };
        let res = pv_integrate(&f, x, spec, &opts)?;
        Ok((res.value, res.est_error))
    };
    let parts: Vec<(f64, f64)> = outer
        .par_iter()
        .map(|(x, w)| inner(x).map(|(v, e)| (w * v, w * e)))
        .collect::<Result<_, _>>()?;
    let value: f64 = parts.iter().map(|p| p.0).sum();
    let err: f64 = parts.iter().map(|p| p.1.abs()).sum();
    Ok(IntegralResult { value: p.sigma * value, est_error: p.sigma * err, core_contrib: 0.0, tail_contrib: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::super::columns::{Complement, EmptySet};
    use super::*;
    use crate::geometry::{build_stack_fn, GridSpec};
    use approx::assert_relative_eq;

    #[test]
    fn empty_set_has_no_perimeter() {
        let p = FractionalParams::new(2, 0.8).unwrap();
        let om = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
        let v = per_s(&EmptySet { dim: 1 }, &om, &p, &QuadratureSpec::default()).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn complement_symmetry_and_flat_value() {
        let p = FractionalParams::new(2, 0.6).unwrap();
        let spec = QuadratureSpec::new(0.05, 0.1, 200.0, 1e-8).unwrap();
        let grid = GridSpec::new(1, 3.0, 121, false).unwrap();
        let st = build_stack_fn(grid, &[&|x: &[f64]| 0.1 * (-4.0 * x[0] * x[0]).exp()], p).unwrap();
        let om = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
        let v = per_s(&st, &om, &p, &spec).unwrap().value;
        let w = per_s(&Complement(&st), &om, &p, &spec).unwrap().value;
        assert_relative_eq!(v, w, max_relative = 1e-12);
        assert!(v > 0.0);
    }
}
