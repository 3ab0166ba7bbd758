//! Sets that depend only on the vertical coordinate, and the separation
//! threshold scan on finite realizations of the alternating slab pattern.
//!
//! For such sets the kernel integrates out over horizontal hyperplanes and
//! the fractional mean curvature reduces to a one-dimensional principal
//! value of the sign profile `u = χ_{E^c} - χ_E`:
//!
//! `H_s(x) = σ c_{n,s} p.v.∫ u(t) |t - x_n|^{-1-s} dt`.
//!
//! Since `u` is piecewise constant this principal value is a finite sum over
//! the jumps of `u`; periodic patterns add lattice sums that are evaluated
//! with an Euler–Maclaurin remainder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_stack_fn, GeometryError, GridSpec, SheetStack};
use crate::kernel::{c_ns, FractionalParams};
use crate::nonlocal::{stability_form, CylinderDomain, NonlocalError, PerturbationField, StabilityReport};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlabError {
    #[error("invalid slab pattern: {0}")]
    Pattern(String),
    #[error("boundary index {index} out of range for {count} breakpoints")]
    Index { index: usize, count: usize },
    #[error("min margin does not change sign over the spacing grid at sigma = {sigma} (range {lo:.3e} .. {hi:.3e})")]
    NoSignChange { sigma: f64, lo: f64, hi: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid scan configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nonlocal(#[from] NonlocalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Horizontal slabs bounded by the planes `x_n = a_k`.
///
/// Points below `a_1` lie in `E^c`; membership alternates at every
/// breakpoint. With `periodic_cell = Some(L)` the breakpoints describe one
/// cell `[a_1, a_1 + L)` and repeat with period `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabPattern {
    pub breakpoints: Vec<f64>,
    pub periodic_cell: Option<f64>,
    pub params: FractionalParams,
    pub c_star: Option<f64>,
}

impl SlabPattern {
    pub fn new(breakpoints: Vec<f64>, periodic_cell: Option<f64>, params: FractionalParams) -> Result<Self, SlabError> {
        let p = Self { breakpoints, periodic_cell, params, c_star: None };
        p.validate()?;
        Ok(p)
    }

    /// `E = ⋃_k {2k ≤ x_n / (C_* √σ) ≤ 2k+1}`, one cell `[0, 2w)` with `w = C_* √σ`.
    pub fn alternating(params: FractionalParams, c_star: f64) -> Result<Self, SlabError> {
        let w = c_star * params.sigma.sqrt();
        let mut p = Self::new(vec![0.0, w], Some(2.0 * w), params)?;
        p.c_star = Some(c_star);
        Ok(p)
    }

    /// The first `count` planes `x_n = k C_* √σ` of the alternating pattern,
    /// with nothing beyond them.
    pub fn alternating_finite(params: FractionalParams, c_star: f64, count: usize) -> Result<Self, SlabError> {
        let w = c_star * params.sigma.sqrt();
        let mut p = Self::new((0..count).map(|k| k as f64 * w).collect(), None, params)?;
        p.c_star = Some(c_star);
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SlabError> {
        self.params.validate().map_err(|e| SlabError::Pattern(e.to_string()))?;
        if self.breakpoints.is_empty() {
            return Err(SlabError::Pattern("no breakpoints".into()));
        }
        if self.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(SlabError::Pattern("non-finite breakpoint".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SlabError::Pattern("breakpoints must be strictly increasing".into()));
        }
        if let Some(l) = self.periodic_cell {
            let first = self.breakpoints[0];
            let last = *self.breakpoints.last().unwrap();
            if !(l > 0.0 && l.is_finite()) || last >= first + l {
                return Err(SlabError::Pattern(format!("breakpoints do not fit in a cell of length {l}")));
            }
            if self.breakpoints.len() % 2 != 0 {
                return Err(SlabError::Pattern("a periodic pattern needs an even number of breakpoints per cell".into()));
            }
        }
        Ok(())
    }
}

/// The sign profile of a slab pattern together with its reduction constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabProfile {
    pub pattern: SlabPattern,
    /// `c_{n,s}`, the integral of the kernel over a horizontal hyperplane at unit height.
    pub constant: f64,
}

impl SlabProfile {
    /// `u(t) = χ_{E^c}(t) - χ_E(t)`; at a breakpoint the value above it is returned.
    pub fn u(&self, t: f64) -> f64 {
        let b = &self.pattern.breakpoints;
        let t = match self.pattern.periodic_cell {
            Some(l) => b[0] + (t - b[0]).rem_euclid(l),
            None => t,
        };
        let crossed = b.partition_point(|&a| a <= t);
        if crossed % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Jump `u(a+) - u(a-)` at breakpoint `k`.
    pub fn jump(&self, k: usize) -> f64 {
        if k % 2 == 0 {
            -2.0
        } else {
            2.0
        }
    }
}

pub fn slab_reduce(pattern: &SlabPattern) -> Result<SlabProfile, SlabError> {
    pattern.validate()?;
    Ok(SlabProfile { pattern: pattern.clone(), constant: c_ns(&pattern.params) })
}

/// Regularized `Σ_{m≥0} (d + m L)^{-s}`, the value of `L^{-s} ζ(s, d/L)`.
/// Only combinations whose coefficients sum to zero are meaningful for `s < 1`.
fn lattice_sum(d: f64, l: f64, s: f64) -> f64 {
    const M: usize = 24;
    // B_2/2!, B_4/4!, ..., B_12/12!
    const B: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let mut acc: f64 = (0..M).map(|m| (d + m as f64 * l).powf(-s)).sum();
    let x = d + M as f64 * l;
    acc += -x.powf(1.0 - s) / (l * (1.0 - s)) + 0.5 * x.powf(-s);
    // f^(2k-1)(M) with f(m) = (d + m L)^{-s}
    let mut rising = -s;
    let mut deriv = rising * l * x.powf(-s - 1.0);
    for (k, bk) in B.iter().enumerate() {
        acc -= bk * deriv;
        let j = 2 * k + 1;
        rising *= (-s - j as f64) * (-s - j as f64 - 1.0);
        deriv = rising * l.powi(j as i32 + 2) * x.powf(-s - j as f64 - 2.0);
    }
    acc
}

/// Fractional mean curvature of the slab set at the boundary plane
/// `x_n = a_{boundary_index}` (0-based), normalized as `σ c_{n,s} p.v.∫ u |t - x_n|^{-1-s}`.
///
/// With `F(t) = -sgn(t-x)|t-x|^{-s}/s` the principal value equals
/// `Σ_b J_b sgn(b-x)|b-x|^{-s}/s` over the jumps `J_b` of `u` away from `x`;
/// the two half-lines next to `x` cancel because the jump there is symmetric.
pub fn slab_hs_1d(pattern: &SlabPattern, boundary_index: usize) -> Result<f64, SlabError> {
    let prof = slab_reduce(pattern)?;
    let b = &pattern.breakpoints;
    if boundary_index >= b.len() {
        return Err(SlabError::Index { index: boundary_index, count: b.len() });
    }
    let s = pattern.params.s;
    let x = b[boundary_index];
    let pv = match pattern.periodic_cell {
        None => b
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != boundary_index)
            .map(|(k, &a)| prof.jump(k) * (a - x).signum() * (a - x).abs().powf(-s))
            .sum::<f64>(),
        Some(l) => {
            let mut right = 0.0;
            let mut left = 0.0;
            for (k, &a) in b.iter().enumerate() {
                let up = {
                    let d = (a - x).rem_euclid(l);
                    if d == 0.0 { l } else { d }
                };
                let down = {
                    let d = (x - a).rem_euclid(l);
                    if d == 0.0 { l } else { d }
                };
                right += prof.jump(k) * lattice_sum(up, l, s);
                left += prof.jump(k) * lattice_sum(down, l, s);
            }
            right - left
        }
    } / s;
    Ok(pattern.params.sigma * prof.constant * pv)
}

/// Cutoff test function attached to each sheet of the scan stack:
/// `η_k(x') = ε_k ψ(|x'|)` with `ψ = 1` up to `plateau`, a quintic
/// smoothstep down to zero at `support`, and `ε_k = (-1)^k` when
/// `alternating`, else `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMode {
    pub id: String,
    pub alternating: bool,
    pub plateau: f64,
    pub support: f64,
}

impl ScanMode {
    pub fn profile(&self, r: f64) -> f64 {
        if r <= self.plateau {
            return 1.0;
        }
        if r >= self.support {
            return 0.0;
        }
        let t = (r - self.plateau) / (self.support - self.plateau);
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }

    pub fn sign(&self, k: usize) -> f64 {
        if self.alternating && k % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    fn field(&self, grid: GridSpec, n_sheets: usize) -> Result<PerturbationField, NonlocalError> {
        let field = PerturbationField::from_fn(grid, n_sheets, self.support, |k, x| self.sign(k) * self.profile(x[0].abs()))?;
        Ok(if self.plateau > 0.0 { field.with_breaks(vec![self.plateau]) } else { field })
    }
}

/// Finite realization used by the scan: `sheets` flat sheets in `n = 2`
/// at heights `(k - (N-1)/2) d`, inside the cylinder of radius
/// `horizontal_radius` whose lids sit at `±N d / 2`, the next planes of the
/// periodic pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub sheets: usize,
    pub horizontal_radius: f64,
    pub resolution: usize,
    pub modes: Vec<ScanMode>,
}

impl ScanConfig {
    /// Six sheets on the unit disc; three profiles, each with both sign patterns.
    pub fn standard() -> Self {
        let mut modes = Vec::new();
        for (plateau, support) in [(0.0, 0.8), (0.3, 0.8), (0.5, 0.9)] {
            for alternating in [false, true] {
                let id = format!("{}-p{plateau}-r{support}", if alternating { "alt" } else { "same" });
                modes.push(ScanMode { id, alternating, plateau, support });
            }
        }
        Self { sheets: 6, horizontal_radius: 1.0, resolution: 121, modes }
    }

    pub fn validate(&self) -> Result<(), SlabError> {
        if self.sheets < 6 {
            return Err(SlabError::Config(format!("need at least 6 sheets, got {}", self.sheets)));
        }
        if self.modes.is_empty() {
            return Err(SlabError::Config("empty mode family".into()));
        }
        for m in &self.modes {
            if !(m.plateau >= 0.0 && m.plateau < m.support && m.support < self.horizontal_radius) {
                return Err(SlabError::Config(format!("mode {} needs 0 <= plateau < support < radius", m.id)));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec, SlabError> {
        Ok(GridSpec::new(1, 1.25 * self.horizontal_radius, self.resolution, false)?)
    }

    /// The stack and domain at spacing `d`.
    pub fn realize(&self, sigma: f64, d: f64) -> Result<(SheetStack, CylinderDomain), SlabError> {
        let p = FractionalParams::from_sigma(2, sigma).map_err(|e| SlabError::Config(e.to_string()))?;
        let grid = self.grid()?;
        let mid = 0.5 * (self.sheets as f64 - 1.0);
        let heights: Vec<f64> = (0..self.sheets).map(|k| (k as f64 - mid) * d).collect();
        let fns: Vec<Box<dyn Fn(&[f64]) -> f64>> =
            heights.iter().map(|&h| Box::new(move |_: &[f64]| h) as Box<dyn Fn(&[f64]) -> f64>).collect();
        let refs: Vec<&dyn Fn(&[f64]) -> f64> = fns.iter().map(|f| f.as_ref()).collect();
        let stack = build_stack_fn(grid, &refs, p)?;
        let lid = 0.5 * self.sheets as f64 * d;
        let omega = CylinderDomain::new(self.horizontal_radius, -lid, lid)?;
        Ok((stack, omega))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub sigma: f64,
    pub spacing: f64,
    pub min_margin: f64,
    pub worst_mode_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRecord {
    pub sigma: f64,
    /// Smallest spacing with nonnegative min margin.
    pub d_star: f64,
    /// `d_star / √σ`.
    pub c_star: f64,
    pub worst_mode_id: String,
    /// Grid evaluations followed by the bisection steps.
    pub rows: Vec<ScanRow>,
    /// `σ Σ_i ∫_{B'} (g_{i+1} - g_i)^{-2}` at the threshold configuration.
    pub l2_observable: f64,
}

/// Smallest stability margin over the mode family at spacing `d`.
pub fn min_margin(sigma: f64, d: f64, config: &ScanConfig, spec: &QuadratureSpec) -> Result<ScanRow, SlabError> {
    config.validate()?;
    let (stack, omega) = config.realize(sigma, d)?;
    let grid = *stack.grid();
    let reports: Vec<StabilityReport> = config
        .modes
        .par_iter()
        .map(|m| -> Result<StabilityReport, SlabError> {
            let field = m.field(grid, stack.len())?;
            Ok(stability_form(&stack, &field, &omega, spec)?)
        })
        .collect::<Result<_, _>>()?;
    let (k, worst) = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.margin.total_cmp(&b.1.margin))
        .expect("non-empty mode family");
    Ok(ScanRow { sigma, spacing: d, min_margin: worst.margin, worst_mode_id: config.modes[k].id.clone() })
}

/// Evaluates the min margin at `d = c √σ` for every `c` in `spacing_grid`
/// (increasing), then bisects the first sign change from negative to
/// nonnegative to a relative width of `1e-3`.
pub fn slab_stability_scan(
    sigma: f64,
    spacing_grid: &[f64],
    config: &ScanConfig,
    spec: &QuadratureSpec,
) -> Result<ThresholdRecord, SlabError> {
    config.validate()?;
    if spacing_grid.len() < 2 || spacing_grid.windows(2).any(|w| !(w[1] > w[0])) || spacing_grid[0] <= 0.0 {
        return Err(SlabError::Config("spacing grid must be positive and increasing with at least two points".into()));
    }
    let root = sigma.sqrt();
    let mut rows = Vec::new();
    for &c in spacing_grid {
        rows.push(min_margin(sigma, c * root, config, spec)?);
    }
    let k = rows
        .windows(2)
        .position(|w| w[0].min_margin < 0.0 && w[1].min_margin >= 0.0)
        .ok_or(SlabError::NoSignChange { sigma, lo: rows[0].spacing, hi: rows[rows.len() - 1].spacing })?;
    let (mut lo, mut hi) = (rows[k].spacing, rows[k + 1].spacing);
    let mut worst = rows[k + 1].worst_mode_id.clone();
    while hi - lo > 1e-3 * hi {
        let mid = (lo * hi).sqrt();
        let row = min_margin(sigma, mid, config, spec)?;
        if row.min_margin >= 0.0 {
            hi = mid;
            worst = row.worst_mode_id.clone();
        } else {
            lo = mid;
        }
        rows.push(row);
    }
    let d_star = hi;
    let (stack, omega) = config.realize(sigma, d_star)?;
    Ok(ThresholdRecord {
        sigma,
        d_star,
        c_star: d_star / root,
        worst_mode_id: worst,
        rows,
        l2_observable: l2_observable(&stack, &omega),
    })
}

/// `σ Σ_i ∫_{B'} (g_{i+1} - g_i)^{-2} dx'` by the grid rule on nodes inside the disc.
pub fn l2_observable(stack: &SheetStack, omega: &CylinderDomain) -> f64 {
    let grid = stack.grid();
    let cell = grid.spacing().powi(grid.dim_horizontal as i32);
    let mut acc = 0.0;
    for x in grid.nodes().iter().filter(|x| omega.in_disc(x)) {
        let h = stack.heights(x);
        acc += h.windows(2).map(|w| (w[1] - w[0]).powi(-2)).sum::<f64>() * cell;
    }
    stack.params.sigma * acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
}

fn log_fit(points: &[(f64, f64)]) -> Result<SeparationFit, SlabError> {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(SlabError::DegenerateFit("all sigma values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy <= 1e-300 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SeparationFit { exponent: slope, prefactor: intercept.exp(), r2 })
}

/// Least-squares fit of `log d* = exponent log σ + log prefactor`.
///
/// With `robust`, the single point whose removal gives the best `r²` is
/// dropped first (needs at least four points).
pub fn separation_exponent_fit(thresholds: &[(f64, f64)], robust: bool) -> Result<SeparationFit, SlabError> {
    if thresholds.len() < 3 {
        return Err(SlabError::DegenerateFit(format!("need at least 3 points, got {}", thresholds.len())));
    }
    if thresholds.iter().any(|&(s, d)| !(s > 0.0 && d > 0.0 && s.is_finite() && d.is_finite())) {
        return Err(SlabError::DegenerateFit("all values must be positive".into()));
    }
    if !robust {
        return log_fit(thresholds);
    }
    if thresholds.len() < 4 {
        return Err(SlabError::DegenerateFit("the robust fit needs at least 4 points".into()));
    }
    let mut best: Option<SeparationFit> = None;
    for skip in 0..thresholds.len() {
        let rest: Vec<(f64, f64)> =
            thresholds.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, p)| *p).collect();
        let fit = log_fit(&rest)?;
        if best.map_or(true, |b| fit.r2 > b.r2) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one subset"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(s: f64) -> FractionalParams {
        FractionalParams::new(3, s).unwrap()
    }

    #[test]
    fn profile_signs() {
        let prof = slab_reduce(&SlabPattern::new(vec![0.0], None, params(0.5)).unwrap()).unwrap();
        assert_eq!(prof.u(-1.0), 1.0);
        assert_eq!(prof.u(1.0), -1.0);
        let per = slab_reduce(&SlabPattern::alternating(params(0.5), 1.0).unwrap()).unwrap();
        let w = 0.5f64.sqrt();
        let flips = (0..400).map(|k| k as f64 * 4.0 * w / 400.0 + 1e-3).collect::<Vec<_>>();
        let changes = flips.windows(2).filter(|t| per.u(t[0]) != per.u(t[1])).count();
        assert_eq!(changes, 3);
        assert_eq!(per.u(0.5 * w), -1.0);
        assert_eq!(per.u(1.5 * w), 1.0);
        assert_eq!(per.u(-0.5 * w), 1.0);
    }

    #[test]
    fn lattice_sum_matches_zeta_values() {
        // ζ(1/2) = -1.4603545088095868
        assert_relative_eq!(lattice_sum(1.0, 1.0, 0.5), -1.4603545088095868, max_relative = 1e-13);
        // ζ(1/2, 1/2) = (√2 - 1) ζ(1/2)
        assert_relative_eq!(lattice_sum(0.5, 1.0, 0.5), (2f64.sqrt() - 1.0) * -1.4603545088095868, max_relative = 1e-13);
        // scaling in L
        assert_relative_eq!(lattice_sum(0.6, 2.0, 0.3), 2f64.powf(-0.3) * lattice_sum(0.3, 1.0, 0.3), max_relative = 1e-13);
    }

    #[test]
    fn half_space_and_periodic_zero() {
        let h = slab_hs_1d(&SlabPattern::new(vec![0.3], None, params(0.7)).unwrap(), 0).unwrap();
        assert_eq!(h, 0.0);
        for s in [0.3, 0.8, 0.95] {
            let pat = SlabPattern::alternating(params(s), 10.0).unwrap();
            for k in 0..2 {
                assert!(slab_hs_1d(&pat, k).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn thin_slab_is_positive_at_its_bottom() {
        let pat = SlabPattern::new(vec![0.0, 1.0], None, params(0.5)).unwrap();
        let h = slab_hs_1d(&pat, 0).unwrap();
        assert_relative_eq!(h, 0.5 * c_ns(&pat.params) * 2.0 / 0.5, max_relative = 1e-14);
        assert_relative_eq!(slab_hs_1d(&pat, 1).unwrap(), h, max_relative = 1e-14);
    }

    #[test]
    fn exact_power_law_fit() {
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.02].iter().map(|&s| (s, 3.0 * f64::sqrt(s))).collect();
        let fit = separation_exponent_fit(&pts, false).unwrap();
        assert_relative_eq!(fit.exponent, 0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.prefactor, 3.0, max_relative = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert!(separation_exponent_fit(&pts[..2], false).is_err());
    }

    #[test]
    fn mode_profile_is_smooth_cutoff() {
        let m = ScanMode { id: "m".into(), alternating: true, plateau: 0.2, support: 0.6 };
        assert_eq!(m.profile(0.1), 1.0);
        assert_eq!(m.profile(0.7), 0.0);
        assert_relative_eq!(m.profile(0.4), 0.5, epsilon = 1e-15);
        assert_eq!(m.sign(3), -1.0);
    }
}
