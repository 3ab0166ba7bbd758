//! Deterministic quadrature for principal-value integrals, singular radial
//! cores and power-law tails.
//!
//! Everything here works with fixed node sets, so two calls with the same
//! inputs produce bit-identical results. The singular core is integrated with
//! Gauss–Jacobi nodes carrying the local power of the paired integrand, the
//! bulk with Gauss–Legendre panels, and the far field analytically.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussJacobi, GaussLegendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::sphere_area;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    SpecInvalid(String),
    #[error("symmetrised integrand is not integrable at the centre (local exponent {exponent:.4})")]
    NonIntegrableSingularity { exponent: f64 },
    #[error("tail integral diverges: power {power} <= dimension {dim}")]
    DivergentTail { power: f64, dim: usize },
    #[error("entry {index} is not strictly positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("empty input")]
    Empty,
    #[error("unsupported integration dimension {0} (only 1 and 2 are implemented)")]
    UnsupportedDimension(usize),
    #[error("non-finite integrand value at radius {radius:e}")]
    NonFinite { radius: f64 },
}

/// Resolution controls shared by every singular integral in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Target node spacing of the bulk panels.
    pub h_grid: f64,
    /// Radius of the singular core around the evaluation point.
    pub r_core: f64,
    /// Radius beyond which the integrand is replaced by its power-law tail.
    pub r_tail: f64,
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { h_grid: 0.02, r_core: 0.05, r_tail: 200.0, tol: 1e-8 }
    }
}

impl QuadratureSpec {
    pub fn new(h_grid: f64, r_core: f64, r_tail: f64, tol: f64) -> Result<Self, QuadratureError> {
        let spec = Self { h_grid, r_core, r_tail, tol };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        let ok = self.h_grid > 0.0 && self.h_grid < self.r_core && self.r_core < self.r_tail;
        if !ok || !self.r_tail.is_finite() {
            return Err(QuadratureError::SpecInvalid(format!(
                "need 0 < h_grid < r_core < r_tail, got h_grid={}, r_core={}, r_tail={}",
                self.h_grid, self.r_core, self.r_tail
            )));
        }
        if !(self.tol > 0.0) {
            return Err(QuadratureError::SpecInvalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// Same spec with the bulk spacing halved.
    pub fn refined(&self) -> Self {
        Self { h_grid: 0.5 * self.h_grid, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub est_error: f64,
    pub core_contrib: f64,
    pub tail_contrib: f64,
}

impl IntegralResult {
    pub fn bulk(&self) -> f64 {
        self.value - self.core_contrib - self.tail_contrib
    }
}

/// Far-field model `coeff * |z|^-power`, integrated exactly beyond `r_tail`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTail {
    pub coeff: f64,
    pub power: f64,
}

/// Options for [`pv_integrate`].
#[derive(Clone, Default)]
pub struct PvOptions<'a> {
    /// Local power `p` of the paired radial integrand near the centre,
    /// Jacobian included: `rho^(dim-1) (f(z)+f(-z)) ~ rho^p`. Estimated when absent.
    pub core_power: Option<f64>,
    /// Radius up to which the paired integrand is `rho^p` times a smooth
    /// function. Defaults to `r_core`.
    pub smooth_radius: Option<f64>,
    /// Radii where the paired integrand has kinks or jumps.
    pub breakpoints: Vec<f64>,
    pub tails: Vec<PowerTail>,
    /// Star-shaped integration domain around the centre: distance to the
    /// boundary along a unit direction. Replaces the ball of radius `r_tail`.
    pub ray_length: Option<&'a (dyn Fn(&[f64]) -> f64 + Sync)>,
    /// Angular midpoint nodes on the half circle (dimension 2 only).
    pub angular_nodes: Option<usize>,
    /// Extra radii per unit direction where the integrand jumps, e.g. the
    /// crossing of a domain boundary that is not centred at `x0`.
    pub ray_breaks: Option<&'a (dyn Fn(&[f64]) -> Vec<f64> + Sync)>,
    /// Skip the Richardson refinement and return the base resolution only.
    pub single_pass: bool,
    /// Evaluate at exactly this refinement level (error estimated against
    /// the level below). Keeps the node set independent of the integrand.
    pub fixed_level: Option<u32>,
}

const GL_ORDER: usize = 8;
const JACOBI_ORDER: usize = 24;

type NodeTable = Arc<Vec<(f64, f64)>>;

fn rule_cache() -> &'static Mutex<HashMap<(usize, u64), NodeTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), NodeTable>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn legendre_unit(m: usize) -> NodeTable {
    let key = (m, u64::MAX);
    if let Some(t) = rule_cache().lock().expect("rule cache poisoned").get(&key) {
        return t.clone();
    }
    let rule = GaussLegendre::new(m.max(2)).expect("Gauss-Legendre degree >= 2");
    let mut v: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = Arc::new(v);
    rule_cache().lock().expect("rule cache poisoned").insert(key, t.clone());
    t
}

/// Gauss–Jacobi rule on [0, 1] for the weight `t^p`: `∫ t^p h(t) dt ≈ Σ w h(t)`.
pub fn jacobi_unit(m: usize, p: f64) -> NodeTable {
    let key = (m, p.to_bits());
    if let Some(t) = rule_cache().lock().expect("rule cache poisoned").get(&key) {
        return t.clone();
    }
    let rule = GaussJacobi::new(m.max(2), 0.0, p).expect("Gauss-Jacobi parameters");
    let scale = 2f64.powf(-p - 1.0);
    let mut v: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), w * scale))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = Arc::new(v);
    rule_cache().lock().expect("rule cache poisoned").insert(key, t.clone());
    t
}

/// A one-dimensional node set.
#[derive(Debug, Clone, Default)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_panel(&mut self, a: f64, b: f64, m: usize) {
        if b <= a {
            return;
        }
        for &(t, w) in legendre_unit(m).iter() {
            self.nodes.push(a + (b - a) * t);
            self.weights.push((b - a) * w);
        }
    }

    /// Gauss–Legendre panels of width at most `h` on [a, b], split at `breaks`.
    /// Panels touching an endpoint flagged in `grade` are refined
    /// geometrically `levels` times toward that endpoint.
    pub fn panels(a: f64, b: f64, h: f64, breaks: &[f64], grade: (bool, bool), levels: usize) -> Self {
        let mut cuts = vec![a, b];
        cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
        let mut rule = Rule1D::default();
        for win in cuts.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let count = ((hi - lo) / h).ceil().max(1.0) as usize;
            let w = (hi - lo) / count as f64;
            for k in 0..count {
                let p0 = lo + k as f64 * w;
                let p1 = if k + 1 == count { hi } else { p0 + w };
                let grade_lo = k == 0 && grade.0 && lo == a;
                let grade_hi = k + 1 == count && grade.1 && hi == b;
                rule.graded_panel(p0, p1, grade_lo, grade_hi, levels);
            }
        }
        rule
    }

    fn graded_panel(&mut self, a: f64, b: f64, at_a: bool, at_b: bool, levels: usize) {
        if !at_a && !at_b {
            self.push_panel(a, b, GL_ORDER);
            return;
        }
        if at_a && at_b {
            let mid = 0.5 * (a + b);
            self.graded_panel(a, mid, true, false, levels);
            self.graded_panel(mid, b, false, true, levels);
            return;
        }
        let len = b - a;
        let mut outer = 1.0;
        for _ in 0..levels {
            let inner = 0.5 * outer;
            if at_a {
                self.push_panel(a + inner * len, a + outer * len, GL_ORDER);
            } else {
                self.push_panel(b - outer * len, b - inner * len, GL_ORDER);
            }
            outer = inner;
        }
        if at_a {
            self.push_panel(a, a + outer * len, GL_ORDER);
        } else {
            self.push_panel(b - outer * len, b, GL_ORDER);
        }
    }
}

/// Radial node set on [0, r_end] adapted to a `rho^p` singularity at 0.
#[derive(Debug, Clone)]
struct RadialRule {
    core: Rule1D,
    bulk: Rule1D,
}

fn radial_rule(spec: &QuadratureSpec, p: f64, smooth: f64, r_end: f64, breaks: &[f64], level: u32) -> RadialRule {
    let split = 2f64.powi(level as i32);
    let mut rho_c = smooth.min(spec.r_core).min(r_end);
    for &b in breaks {
        if b > 0.0 && b < rho_c {
            rho_c = b;
        }
    }
    let m_core = JACOBI_ORDER + 8 * level as usize;
    let mut core = Rule1D::default();
    for &(t, w) in jacobi_unit(m_core, p).iter() {
        core.nodes.push(rho_c * t);
        // the table integrates h(t) against t^p; we feed the full S(rho)
        core.weights.push(rho_c * w * t.powf(-p));
    }
    let mut bulk = Rule1D::default();
    let mut cuts: Vec<f64> = vec![rho_c];
    // geometric panels from rho_c to r_core
    let mut r = rho_c;
    while r < spec.r_core && r < r_end {
        r = (2.0 * r).min(spec.r_core).min(r_end);
        cuts.push(r);
    }
    // then panels of width max(8 h, rho / 2)
    while r < r_end {
        let w = (GL_ORDER as f64 * spec.h_grid).max(0.5 * r);
        r = (r + w).min(r_end);
        cuts.push(r);
    }
    cuts.extend(breaks.iter().copied().filter(|&b| b > rho_c && b < r_end));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    for win in cuts.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let pieces = split as usize;
        let w = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            bulk.push_panel(lo + k as f64 * w, if k + 1 == pieces { hi } else { lo + (k + 1) as f64 * w }, GL_ORDER);
        }
    }
    RadialRule { core, bulk }
}

fn estimate_power(paired: &dyn Fn(f64) -> f64, rho_c: f64) -> Result<f64, QuadratureError> {
    let r1 = rho_c * 1e-7;
    let r2 = 2.0 * r1;
    let s1 = paired(r1);
    let s2 = paired(r2);
    if !s1.is_finite() || !s2.is_finite() {
        return Err(QuadratureError::NonIntegrableSingularity { exponent: f64::NAN });
    }
    let tiny = 1e-300;
    if s1.abs() < tiny && s2.abs() < tiny {
        return Ok(0.0);
    }
    if s1.abs() < tiny || s2.abs() < tiny {
        return Ok(0.0);
    }
    let p = (s2.abs() / s1.abs()).ln() / 2f64.ln();
    if !p.is_finite() || p <= -1.0 + 1e-3 {
        return Err(QuadratureError::NonIntegrableSingularity { exponent: p });
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, Default)]
struct Parts {
    core: f64,
    bulk: f64,
}

fn radial_pass(
    paired: &dyn Fn(f64) -> f64,
    spec: &QuadratureSpec,
    p: f64,
    smooth: f64,
    r_end: f64,
    breaks: &[f64],
    level: u32,
) -> Result<Parts, QuadratureError> {
    let rule = radial_rule(spec, p, smooth, r_end, breaks, level);
    let mut parts = Parts::default();
    for (&r, &w) in rule.core.nodes.iter().zip(&rule.core.weights) {
        let v = paired(r);
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite { radius: r });
        }
        parts.core += w * v;
    }
    for (&r, &w) in rule.bulk.nodes.iter().zip(&rule.bulk.weights) {
        let v = paired(r);
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite { radius: r });
        }
        parts.bulk += w * v;
    }
    Ok(parts)
}

/// Principal value of `∫_{|z| < r_tail} f(z) dz` where `f` is given as a
/// function of the displacement `z` from `x0`. Antipodal nodes are paired so
/// odd singular parts cancel exactly.
pub fn pv_integrate_symmetric<F>(f: F, x0: &[f64], spec: &QuadratureSpec) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pv_integrate(&f, x0, spec, &PvOptions::default())
}

/// General principal-value integrator; see [`PvOptions`].
pub fn pv_integrate(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x0: &[f64],
    spec: &QuadratureSpec,
    opts: &PvOptions<'_>,
) -> Result<IntegralResult, QuadratureError> {
    spec.validate()?;
    let dim = x0.len();
    if dim == 0 || dim > 2 {
        return Err(QuadratureError::UnsupportedDimension(dim));
    }
    if let Some(level) = opts.fixed_level {
        let mut fine = pv_level(f, dim, spec, opts, level)?;
        if level > 0 && !opts.single_pass {
            let prev = pv_level(f, dim, spec, opts, level - 1)?;
            fine.est_error = (fine.value - prev.value).abs();
        }
        return Ok(fine);
    }
    let coarse = pv_level(f, dim, spec, opts, 0)?;
    if opts.single_pass {
        return Ok(coarse);
    }
    let mut prev = coarse;
    let mut level = 1;
    loop {
        let mut fine = pv_level(f, dim, spec, opts, level)?;
        fine.est_error = (fine.value - prev.value).abs();
        if fine.est_error <= spec.tol || level >= 3 {
            return Ok(fine);
        }
        prev = fine;
        level += 1;
    }
}

fn pv_level(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    dim: usize,
    spec: &QuadratureSpec,
    opts: &PvOptions<'_>,
    level: u32,
) -> Result<IntegralResult, QuadratureError> {
    let smooth = opts.smooth_radius.unwrap_or(spec.r_core).max(1e-300);
    let directions: Vec<(Vec<f64>, f64)> = match dim {
        1 => vec![(vec![1.0], 1.0)],
        _ => {
            let m = opts.angular_nodes.unwrap_or(32) << level.min(2);
            (0..m)
                .map(|k| {
                    let th = (k as f64 + 0.5) * PI / m as f64;
                    (vec![th.cos(), th.sin()], PI / m as f64)
                })
                .collect()
        }
    };
    let jac = |r: f64| if dim == 1 { 1.0 } else { r };
    let per_direction = |(omega, wdir): &(Vec<f64>, f64)| -> Result<Parts, QuadratureError> {
        let neg: Vec<f64> = omega.iter().map(|v| -v).collect();
        let (lp, lm) = match opts.ray_length {
            Some(len) => (len(omega), len(&neg)),
            None => (spec.r_tail, spec.r_tail),
        };
        let r_end = lp.max(lm);
        let paired = |r: f64| -> f64 {
            let mut zp = [0.0; 2];
            let mut zm = [0.0; 2];
            for d in 0..dim {
                zp[d] = r * omega[d];
                zm[d] = -zp[d];
            }
            let a = if r <= lp { f(&zp[..dim]) } else { 0.0 };
            let b = if r <= lm { f(&zm[..dim]) } else { 0.0 };
            jac(r) * (a + b)
        };
        let mut breaks = opts.breakpoints.clone();
        if opts.ray_length.is_some() {
            breaks.push(lp.min(lm));
        }
        if let Some(rb) = opts.ray_breaks {
            breaks.extend(rb(omega).into_iter().chain(rb(&neg)).filter(|b| *b > 0.0 && b.is_finite()));
        }
        let p = match opts.core_power {
            Some(p) => p,
            None => estimate_power(&paired, smooth.min(spec.r_core))?,
        };
        let parts = radial_pass(&paired, spec, p, smooth, r_end, &breaks, level)?;
        Ok(Parts { core: wdir * parts.core, bulk: wdir * parts.bulk })
    };
    let parts: Vec<Parts> = if directions.len() > 1 {
        directions.par_iter().map(per_direction).collect::<Result<_, _>>()?
    } else {
        directions.iter().map(per_direction).collect::<Result<_, _>>()?
    };
    let core: f64 = parts.iter().map(|p| p.core).sum();
    let bulk: f64 = parts.iter().map(|p| p.bulk).sum();
    let mut tail = 0.0;
    if opts.ray_length.is_none() {
        for t in &opts.tails {
            tail += t.coeff * tail_integral(spec.r_tail, t.power, dim)?;
        }
    }
    Ok(IntegralResult { value: core + bulk + tail, est_error: 0.0, core_contrib: core, tail_contrib: tail })
}

/// `∫_{|z| ≥ rho} |z|^-power dz` over R^dim.
pub fn tail_integral(rho: f64, power: f64, dim: usize) -> Result<f64, QuadratureError> {
    if dim == 0 {
        return Err(QuadratureError::UnsupportedDimension(dim));
    }
    if !(rho > 0.0) {
        return Err(QuadratureError::SpecInvalid(format!("tail radius must be positive, got {rho}")));
    }
    let d = dim as f64;
    if power <= d {
        return Err(QuadratureError::DivergentTail { power, dim });
    }
    Ok(sphere_area(dim) * rho.powf(d - power) / (power - d))
}

/// Both sides of the telescoping mean inequality
/// `1/(Σ h)^2 ≤ len^-3 Σ h^-2`.
pub fn am_hm_bound(h: &[f64]) -> Result<(f64, f64), QuadratureError> {
    if h.is_empty() {
        return Err(QuadratureError::Empty);
    }
    if let Some((index, &value)) = h.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
        return Err(QuadratureError::NonPositiveEntry { index, value });
    }
    let sum: f64 = h.iter().sum();
    let inv: f64 = h.iter().map(|v| v.powi(-2)).sum();
    let len = h.len() as f64;
    Ok((1.0 / (sum * sum), inv / len.powi(3)))
}
