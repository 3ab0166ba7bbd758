//! Fractional mean curvature, fractional perimeter and the stability form
//! on sheet stacks.
//!
//! Every surface quantity here carries the prefactor `σ = 1 - s`, so values
//! stay finite as `s → 1`. Set-based quantities use the kernel
//! `K(z) = |z|^{-n-s}` without that prefactor and say so in their names
//! (`h_k`).
//!
//! Most integrals are reduced to the horizontal variable by integrating the
//! kernel exactly along vertical columns; see [`crate::kernel::VerticalProfile`].

mod columns;
mod curvature;
mod perimeter;
mod stability;

pub use columns::{ColumnSet, Complement, EmptySet};
pub use curvature::{
    ext1, h_k, hs_cross, hs_graph, hs_in_domain, interaction_prediction, CrossIntegral,
};
pub use perimeter::per_s;
pub use stability::{
    ext2_vector, ext2_vector_gauss_green, first_variation, second_variation, stability_form,
    PerturbationField, SecondVariation, StabilityReport,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, SheetStack};
use crate::quadrature::{legendre_unit, QuadratureError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlocalError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid domain: {0}")]
    DomainInvalid(String),
    #[error("sheet {sheet} leaves the vertical extent of the domain near x' = {at:?}")]
    SheetOutsideDomain { sheet: usize, at: Vec<f64> },
    #[error("perturbation is not supported inside the domain: {0}")]
    SupportViolation(String),
    #[error("sheets are too rough for the C^(1,1) proxy: max |D²g| h = {0}")]
    RoughBoundary(f64),
    #[error("sheet gradient bound {0} is not below 1")]
    NotLipschitz(f64),
    #[error("dimension n = {0} is not supported here")]
    DimensionTooLarge(usize),
    #[error("index out of range: {0}")]
    Index(String),
}

/// The cylinder `B'_R × (z_min, z_max)`, centred at the horizontal origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderDomain {
    pub horizontal_radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl CylinderDomain {
    pub fn new(horizontal_radius: f64, z_min: f64, z_max: f64) -> Result<Self, NonlocalError> {
        let d = Self { horizontal_radius, z_min, z_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), NonlocalError> {
        if !(self.horizontal_radius > 0.0) || !self.horizontal_radius.is_finite() {
            return Err(NonlocalError::DomainInvalid(format!("radius {}", self.horizontal_radius)));
        }
        if !(self.z_min < self.z_max) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(NonlocalError::DomainInvalid(format!("vertical range ({}, {})", self.z_min, self.z_max)));
        }
        Ok(())
    }

    pub fn in_disc(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.horizontal_radius * self.horizontal_radius
    }

    /// Distance from `x` (inside the disc) to the wall along the unit direction `w`.
    pub fn ray_to_wall(&self, x: &[f64], w: &[f64]) -> f64 {
        let xw: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let disc = (xw * xw + self.horizontal_radius * self.horizontal_radius - xx).max(0.0);
        -xw + disc.sqrt()
    }

    pub fn distance_to_wall(&self, x: &[f64]) -> f64 {
        self.horizontal_radius - x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Checks that every sheet stays strictly inside `(z_min, z_max)` over the
    /// closed disc (grid nodes and a ring of wall points).
    pub fn check_stack(&self, stack: &SheetStack) -> Result<(), NonlocalError> {
        self.validate()?;
        let dim = stack.dim();
        let r = self.horizontal_radius;
        let mut probes: Vec<Vec<f64>> =
            stack.grid().nodes().into_iter().filter(|x| self.in_disc(x)).collect();
        if dim == 1 {
            probes.push(vec![r]);
            probes.push(vec![-r]);
        } else {
            for k in 0..128 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 128.0;
                probes.push(vec![r * th.cos(), r * th.sin()]);
            }
        }
        for (j, sh) in stack.sheets.iter().enumerate() {
            for x in &probes {
                let v = sh.value(x);
                if !(v > self.z_min && v < self.z_max) {
                    return Err(NonlocalError::SheetOutsideDomain { sheet: j, at: x.clone() });
                }
            }
        }
        Ok(())
    }
}

/// Outer quadrature on the disc `B'_R` in dimension 1 or 2.
///
/// Panels have width about `8 h`, are split at the given radii and are
/// geometrically graded towards the wall when `grade_wall` is set.
pub(crate) fn disc_rule(dim: usize, radius: f64, spec: &QuadratureSpec, cuts: &[f64], grade_wall: bool) -> Vec<(Vec<f64>, f64)> {
    let gl = legendre_unit(8);
    let width = (8.0 * spec.h_grid).min(radius / 4.0);
    let mut radial_cuts: Vec<f64> = vec![0.0, radius];
    radial_cuts.extend(cuts.iter().copied().filter(|&c| c > 0.0 && c < radius));
    radial_cuts.sort_by(f64::total_cmp);
    radial_cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * radius);
    let mut panels: Vec<(f64, f64)> = Vec::new();
    for w in radial_cuts.windows(2) {
        let m = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        for k in 0..m {
            panels.push((w[0] + (w[1] - w[0]) * k as f64 / m as f64, w[0] + (w[1] - w[0]) * (k + 1) as f64 / m as f64));
        }
    }
    if grade_wall {
        let (lo, hi) = panels.pop().expect("at least one panel");
        let mut outer = hi - lo;
        let mut start = lo;
        for _ in 0..14 {
            let inner = 0.5 * outer;
            panels.push((start, hi - inner));
            start = hi - inner;
            outer = inner;
        }
        panels.push((start, hi));
    }
    let mut radial: Vec<(f64, f64)> = Vec::new();
    for (a, b) in panels {
        for &(t, w) in gl.iter() {
            radial.push((a + (b - a) * t, (b - a) * w));
        }
    }
    if dim == 1 {
        let mut out = Vec::with_capacity(2 * radial.len());
        for &(r, w) in &radial {
            out.push((vec![r], w));
            out.push((vec![-r], w));
        }
        return out;
    }
    let m = (4 * radial_cuts.len()).max(32).next_power_of_two();
    let mut out = Vec::with_capacity(m * radial.len());
    for k in 0..m {
        let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
        let (c, s) = (th.cos(), th.sin());
        for &(r, w) in &radial {
            out.push((vec![r * c, r * s], w * r * 2.0 * std::f64::consts::PI / m as f64));
        }
    }
    out
}

/// Unit directions used to sample far fields and wall circles.
pub(crate) fn unit_directions(dim: usize, m: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    (0..m)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
            vec![th.cos(), th.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_rule_measures() {
        let spec = QuadratureSpec::default();
        let r1 = disc_rule(1, 1.5, &spec, &[0.7], true);
        let len: f64 = r1.iter().map(|p| p.1).sum();
        assert!((len - 3.0).abs() < 1e-13);
        let r2 = disc_rule(2, 1.5, &spec, &[], false);
        let area: f64 = r2.iter().map(|p| p.1).sum();
        assert!((area - std::f64::consts::PI * 2.25).abs() < 1e-12);
        let mom: f64 = r2.iter().map(|p| p.1 * (p.0[0] * p.0[0] + p.0[1] * p.0[1])).sum();
        assert!((mom - std::f64::consts::PI * 1.5f64.powi(4) / 2.0).abs() < 1e-11);
    }

    #[test]
    fn wall_distance() {
        let d = CylinderDomain::new(2.0, -1.0, 1.0).unwrap();
        assert!((d.ray_to_wall(&[0.5], &[1.0]) - 1.5).abs() < 1e-15);
        assert!((d.ray_to_wall(&[0.5], &[-1.0]) - 2.5).abs() < 1e-15);
        assert!((d.ray_to_wall(&[0.0, 1.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!(CylinderDomain::new(1.0, 1.0, 0.0).is_err());
    }
}
