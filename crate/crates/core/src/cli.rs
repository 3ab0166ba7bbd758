//! Batch front-end behind the `fracmin` binary.
//!
//! A run is described by one JSON [`ExperimentConfig`]; command-line flags
//! override its fields. Every output file carries the tool version and the
//! SHA-256 of the effective configuration.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cone::{dimension_gap, farina_certificate, hardy_ratio, sphere_toda_residual, HardyCutoff, SphereGrid};
use crate::geometry::{build_stack_fn, GridSpec, SheetStack, StackDocument};
use crate::kernel::{c_circ, c_ns, c_ns_quadrature, FractionalParams};
use crate::nonlocal::{first_variation, h_k, per_s, second_variation, CylinderDomain, PerturbationField};
use crate::quadrature::QuadratureSpec;
use crate::slab::{separation_exponent_fit, slab_hs_1d, slab_stability_scan, ScanConfig, SlabPattern, ThresholdRecord};
use crate::toda::{ansatz, toda_residual, toda_solve, TodaDomain, TodaOptions, TodaState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "ConfigInvalid",
            CliError::Numerical(_) => "NumericalFailure",
            CliError::Io(_) => "Io",
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::ConfigInvalid(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Kernel,
    HsEval,
    SlabCheck,
    SlabStability,
    SeparationFit,
    Toda,
    Cone,
    VariationOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `n` and `s`; unset values fall back to a per-command default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsBlock {
    pub n: Option<usize>,
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsEvalBlock {
    pub stack: Option<StackDocument>,
    pub stack_path: Option<PathBuf>,
    /// Evaluation points `x'`; by default grid nodes with `|x'| <= radius`.
    pub points: Option<Vec<Vec<f64>>>,
    pub radius: f64,
    pub stride: usize,
}

impl Default for HsEvalBlock {
    fn default() -> Self {
        Self { stack: None, stack_path: None, points: None, radius: 0.5, stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlabBlock {
    pub sigma: f64,
    pub cstar: f64,
    /// Number of boundary planes checked by `slab-check`.
    pub sheets: usize,
    pub sigmas: Vec<f64>,
    /// Spacings in units of `√σ`.
    pub spacings: Vec<f64>,
    pub robust: bool,
    pub scan: ScanConfig,
}

impl Default for SlabBlock {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            cstar: 5.0,
            sheets: 6,
            sigmas: vec![0.2, 0.1, 0.05, 0.02],
            spacings: vec![0.5, 1.0, 2.0, 4.0],
            robust: false,
            scan: ScanConfig::standard(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TodaBlock {
    pub domain: TodaDomain,
    pub profiles: usize,
    pub g0: f64,
    pub options: TodaOptions,
}

impl Default for TodaBlock {
    fn default() -> Self {
        Self {
            domain: TodaDomain::Disc { radius: 1.0, n_r: 16, n_theta: 32 },
            profiles: 2,
            g0: 1.0,
            options: TodaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeBlock {
    pub resolution: usize,
    pub eps: f64,
}

impl Default for ConeBlock {
    fn default() -> Self {
        Self { resolution: 32, eps: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationBlock {
    /// Stack to perturb; defaults to a Gaussian bump over `[-3, 3]`.
    pub stack: Option<StackDocument>,
    pub stack_path: Option<PathBuf>,
    /// Radius of the `(1 - (r/R)²)³` perturbation profile.
    pub support: f64,
    /// Amplitude per sheet; missing entries use `1 + j/2`.
    pub amplitudes: Vec<f64>,
    pub omega: CylinderDomain,
    pub fd_step: f64,
}

impl Default for VariationBlock {
    fn default() -> Self {
        Self {
            stack: None,
            stack_path: None,
            support: 0.6,
            amplitudes: Vec::new(),
            omega: CylinderDomain { horizontal_radius: 1.0, z_min: -1.0, z_max: 1.0 },
            fd_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub params: ParamsBlock,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub hs_eval: HsEvalBlock,
    #[serde(default)]
    pub slab: SlabBlock,
    #[serde(default)]
    pub toda: TodaBlock,
    #[serde(default)]
    pub cone: ConeBlock,
    #[serde(default)]
    pub variation: VariationBlock,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            params: ParamsBlock::default(),
            quadrature: None,
            hs_eval: HsEvalBlock::default(),
            slab: SlabBlock::default(),
            toda: TodaBlock::default(),
            cone: ConeBlock::default(),
            variation: VariationBlock::default(),
            output_path: None,
            format: Format::Csv,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(invalid)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configs always serialize");
        Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn quad(&self, fallback: QuadratureSpec) -> Result<QuadratureSpec, CliError> {
        let q = self.quadrature.unwrap_or(fallback);
        q.validate().map_err(invalid)?;
        Ok(q)
    }

    fn params(&self, n: usize, s: f64) -> Result<FractionalParams, CliError> {
        FractionalParams::new(self.params.n.unwrap_or(n), self.params.s.unwrap_or(s)).map_err(invalid)
    }
}

/// Tabular and structured forms of one experiment's result.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: String,
    pub result: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    fn new(summary: String, result: Value, header: &[&str]) -> Self {
        Self { summary, result, header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    /// CSV with `version` and `config_hash` appended to every row.
    pub fn to_csv(&self, hash: &str) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.header.clone();
        header.extend(["version".to_string(), "config_hash".to_string()]);
        w.write_record(&header).map_err(|e| CliError::Io(e.into()))?;
        for r in &self.rows {
            let mut rec = r.clone();
            rec.extend([VERSION.to_string(), hash.to_string()]);
            w.write_record(&rec).map_err(|e| CliError::Io(e.into()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    pub fn to_json(&self, config: &ExperimentConfig, hash: &str) -> Vec<u8> {
        let doc = json!({
            "tool": "fracmin",
            "version": VERSION,
            "config_hash": hash,
            "command": config.command,
            "config": config,
            "result": self.result,
        });
        let mut out = serde_json::to_vec_pretty(&doc).expect("reports always serialize");
        out.push(b'\n');
        out
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| invalid(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn load_stack(inline: &Option<StackDocument>, path: &Option<PathBuf>) -> Result<Option<SheetStack>, CliError> {
    let doc = match (inline, path) {
        (Some(_), Some(_)) => return Err(invalid("give either an inline stack or stack_path, not both")),
        (Some(d), None) => d.clone(),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        (None, None) => return Ok(None),
    };
    SheetStack::from_document(&doc).map(Some).map_err(invalid)
}

pub fn run_kernel(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let p = cfg.params(3, 0.5)?;
    let (c, q, circ) = (c_ns(&p), c_ns_quadrature(&p), c_circ(p.n));
    let mut rep = Report::new(
        format!("kernel n={} s={}: c_ns = {c:.6} (quadrature {q:.6}), c_circ = {circ:.6}", p.n, p.s),
        json!({"n": p.n, "s": p.s, "sigma": p.sigma, "c_ns": c, "c_ns_quadrature": q, "c_circ": circ}),
        &["n", "s", "sigma", "c_ns", "c_ns_quadrature", "c_circ"],
    );
    rep.row(vec![p.n.to_string(), num(p.s), num(p.sigma), num(c), num(q), num(circ)]);
    Ok(rep)
}

fn default_eval_points(stack: &SheetStack, radius: f64, stride: usize) -> Vec<Vec<f64>> {
    let grid = stack.grid();
    let mid = grid.resolution / 2;
    let keep = |k: usize| k.abs_diff(mid) % stride.max(1) == 0;
    (0..grid.len())
        .filter(|&node| grid.multi_index(node)[..grid.dim_horizontal].iter().all(|&k| keep(k)))
        .map(|node| grid.node_coords(node))
        .filter(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius)
        .collect()
}

pub fn run_hs_eval(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.hs_eval;
    let mut stack = load_stack(&b.stack, &b.stack_path)?.ok_or_else(|| invalid("hs-eval needs hs_eval.stack or hs_eval.stack_path"))?;
    if let Some(s) = cfg.params.s {
        stack = stack.with_params(FractionalParams::new(stack.params.n, s).map_err(invalid)?);
    }
    if cfg.params.n.is_some_and(|n| n != stack.params.n) {
        return Err(invalid(format!("--n {} does not match the stack dimension {}", cfg.params.n.unwrap(), stack.params.n)));
    }
    let spec = cfg.quad(QuadratureSpec::default())?;
    let points = b.points.clone().unwrap_or_else(|| default_eval_points(&stack, b.radius, b.stride));
    if points.iter().any(|x| x.len() != stack.dim()) {
        return Err(invalid(format!("evaluation points must have {} coordinates", stack.dim())));
    }
    let p = stack.params;
    let scale = 0.5 * p.s * p.sigma;
    let jobs: Vec<(usize, &Vec<f64>)> = (0..stack.len()).flat_map(|i| points.iter().map(move |x| (i, x))).collect();
    let values = jobs
        .par_iter()
        .map(|&(i, x)| h_k(&stack, i, x, &spec).map(|r| (scale * r.value, scale * r.est_error)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;

    let coords: Vec<String> = (1..=stack.dim()).map(|k| format!("x{k}")).collect();
    let mut header: Vec<&str> = vec!["sheet"];
    header.extend(coords.iter().map(|c| c.as_str()));
    header.extend(["value", "est_error"]);
    let max = values.iter().map(|v| v.0.abs()).fold(0.0, f64::max);
    let mut rep = Report::new(
        format!("hs-eval: {} points on {} sheets, max |H_s| = {max:.6e}", points.len(), stack.len()),
        Value::Null,
        &header,
    );
    let mut entries = Vec::new();
    for (&(i, x), &(v, e)) in jobs.iter().zip(&values) {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().map(|c| num(*c)));
        row.extend([num(v), num(e)]);
        rep.row(row);
        entries.push(json!({"sheet": i, "x": x, "value": v, "est_error": e}));
    }
    rep.result = json!({"n": p.n, "s": p.s, "values": entries});
    Ok(rep)
}

pub fn run_slab_check(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.slab;
    if b.sheets < 2 || b.sheets % 2 != 0 {
        return Err(invalid(format!("slab.sheets must be an even number >= 2, got {}", b.sheets)));
    }
    let p = FractionalParams::from_sigma(cfg.params.n.unwrap_or(2), b.sigma).map_err(invalid)?;
    if !(b.cstar > 0.0) {
        return Err(invalid("slab.cstar must be positive"));
    }
    // one cell holding `sheets` planes of the alternating pattern
    let w = b.cstar * p.sigma.sqrt();
    let planes: Vec<f64> = (0..b.sheets).map(|k| k as f64 * w).collect();
    let pattern = SlabPattern::new(planes.clone(), Some(b.sheets as f64 * w), p).map_err(invalid)?;
    let values = (0..b.sheets).map(|k| slab_hs_1d(&pattern, k)).collect::<Result<Vec<_>, _>>().map_err(numerical)?;
    let max = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut rep = Report::new(
        format!("slab-check sigma={} cstar={} sheets={}: max |H_s| = {max:.3e}", b.sigma, b.cstar, b.sheets),
        json!({"sigma": b.sigma, "cstar": b.cstar, "spacing": w, "values": values, "max_abs": max}),
        &["boundary", "height", "hs"],
    );
    for (k, v) in values.iter().enumerate() {
        rep.row(vec![k.to_string(), num(planes[k]), num(*v)]);
    }
    Ok(rep)
}

fn scan_spec(cfg: &ExperimentConfig) -> Result<QuadratureSpec, CliError> {
    cfg.quad(QuadratureSpec { h_grid: 0.1, r_core: 0.2, r_tail: 200.0, tol: 1e-4 })
}

fn check_scan(b: &SlabBlock) -> Result<(), CliError> {
    b.scan.validate().map_err(invalid)?;
    if b.spacings.len() < 2 || b.spacings.windows(2).any(|w| !(w[1] > w[0])) || !(b.spacings[0] > 0.0) {
        return Err(invalid("slab.spacings must be positive and increasing with at least two entries"));
    }
    Ok(())
}

fn push_scan_rows(rep: &mut Report, rec: &ThresholdRecord) {
    for r in &rec.rows {
        rep.row(vec![num(r.sigma), num(r.spacing), num(r.min_margin), r.worst_mode_id.clone()]);
    }
}

const SCAN_HEADER: [&str; 4] = ["sigma", "spacing", "min_margin", "worst_mode_id"];

pub fn run_slab_stability(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.slab;
    check_scan(b)?;
    FractionalParams::from_sigma(2, b.sigma).map_err(invalid)?;
    let spec = scan_spec(cfg)?;
    let rec = slab_stability_scan(b.sigma, &b.spacings, &b.scan, &spec).map_err(numerical)?;
    let mut rep = Report::new(
        format!("slab-stability sigma={}: d* = {:.5} (c* = {:.4}), worst mode {}", rec.sigma, rec.d_star, rec.c_star, rec.worst_mode_id),
        json!({
            "sigma": rec.sigma,
            "d_star": rec.d_star,
            "c_star": rec.c_star,
            "worst_mode_id": rec.worst_mode_id,
            "l2_observable": rec.l2_observable,
            "rows": rec.rows,
        }),
        &SCAN_HEADER,
    );
    push_scan_rows(&mut rep, &rec);
    Ok(rep)
}

pub fn run_separation_fit(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.slab;
    check_scan(b)?;
    if b.sigmas.len() < 3 {
        return Err(invalid("separation-fit needs at least three sigmas"));
    }
    for &s in &b.sigmas {
        FractionalParams::from_sigma(2, s).map_err(invalid)?;
    }
    let spec = scan_spec(cfg)?;
    // par_iter keeps input order on collect
    let records = b
        .sigmas
        .par_iter()
        .map(|&s| slab_stability_scan(s, &b.spacings, &b.scan, &spec))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.sigma, r.d_star)).collect();
    let fit = separation_exponent_fit(&pts, b.robust).map_err(numerical)?;
    let thresholds: Vec<Value> = records
        .iter()
        .map(|r| json!({"sigma": r.sigma, "d_star": r.d_star, "c_star": r.c_star, "worst_mode_id": r.worst_mode_id, "l2_observable": r.l2_observable}))
        .collect();
    let mut rep = Report::new(
        format!("separation-fit: exponent = {:.4}, prefactor = {:.4}, r2 = {:.5}", fit.exponent, fit.prefactor, fit.r2),
        json!({"exponent": fit.exponent, "prefactor": fit.prefactor, "r2": fit.r2, "thresholds": thresholds}),
        &SCAN_HEADER,
    );
    for r in &records {
        push_scan_rows(&mut rep, r);
    }
    Ok(rep)
}

pub fn run_toda(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.toda;
    b.domain.validate().map_err(invalid)?;
    if b.profiles < 1 || !(b.g0 > 0.0) {
        return Err(invalid("toda.profiles must be >= 1 and toda.g0 positive"));
    }
    let (boundary, guess) = ansatz(&b.domain, b.profiles, b.g0).map_err(invalid)?;
    let interp = TodaState::new(b.domain.clone(), guess.clone(), boundary.clone()).map_err(numerical)?;
    let ansatz_res = toda_residual(&interp).map_err(numerical)?.max.into_iter().fold(0.0, f64::max);
    let sol = toda_solve(&b.domain, boundary, None, &b.options).map_err(numerical)?;
    let dev = sol.profiles.iter().zip(&guess).flat_map(|(a, g)| a.iter().zip(g).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max);
    let mut rep = Report::new(
        format!(
            "toda: {} profiles, {} Newton iterations, residual {:.3e}; ansatz residual {ansatz_res:.3e}, max |g - ansatz| {dev:.3e}",
            sol.profiles.len(),
            sol.iterations,
            sol.residual_norm
        ),
        json!({"ansatz_residual": ansatz_res, "ansatz_deviation": dev, "nodes": b.domain.nodes(), "state": sol}),
        &["iteration", "residual", "step"],
    );
    for h in &sol.history {
        rep.row(vec![h.iteration.to_string(), num(h.residual), num(h.step)]);
    }
    Ok(rep)
}

pub fn run_cone(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let n = cfg.params.n.unwrap_or(4);
    let b = &cfg.cone;
    if !(b.eps > 0.0) {
        return Err(invalid("cone.eps must be positive"));
    }
    let grid = SphereGrid::for_dimension(n, b.resolution).map_err(invalid)?;
    let c = 1.0 / ((n - 2) as f64).sqrt();
    let state = TodaState::on_sphere(grid.clone(), n, vec![vec![-c; grid.len()], vec![c; grid.len()]]).map_err(numerical)?;
    let res = sphere_toda_residual(&state, n).map_err(numerical)?;
    let max_res = res.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let report = farina_certificate(&state, n, b.eps).map_err(numerical)?;
    let hardy = hardy_ratio(n, &HardyCutoff::family()).map_err(numerical)?;
    let gap = dimension_gap(n);
    let mut rep = Report::new(
        format!(
            "cone n={n}: residual {max_res:.2e}, A = {:.6}, B = {:.6}, bound {:.6}, contradiction {}, hardy ratio {hardy:.4}, dimension gap {gap}",
            report.per_gap[0].a, report.per_gap[0].b, report.stability_bound, report.contradiction
        ),
        json!({"n": n, "residual": max_res, "farina": report, "hardy_ratio": hardy, "hardy_constant": ((n as f64 - 2.0) / 2.0).powi(2), "dimension_gap": gap}),
        &["profile", "theta", "phi", "value", "residual"],
    );
    for (i, (prof, r)) in state.profiles.iter().zip(&res).enumerate() {
        for k in 0..grid.len() {
            let (theta, phi) = grid.angles(k);
            rep.row(vec![i.to_string(), num(theta), num(phi), num(prof[k]), num(r[k])]);
        }
    }
    Ok(rep)
}

fn default_variation_stack(p: FractionalParams) -> Result<SheetStack, CliError> {
    let grid = GridSpec::new(1, 3.0, 241, false).map_err(invalid)?;
    build_stack_fn(grid, &[&|x: &[f64]| 0.1 * (-4.0 * x[0] * x[0]).exp()], p).map_err(invalid)
}

pub fn run_variation_oracle(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.variation;
    let stack = match load_stack(&b.stack, &b.stack_path)? {
        Some(st) => match cfg.params.s {
            Some(s) => st.with_params(FractionalParams::new(st.params.n, s).map_err(invalid)?),
            None => st,
        },
        None => default_variation_stack(cfg.params(2, 0.7)?)?,
    };
    b.omega.validate().map_err(invalid)?;
    if !(b.fd_step > 0.0) || !(b.support > 0.0) {
        return Err(invalid("variation.fd_step and variation.support must be positive"));
    }
    let spec = cfg.quad(QuadratureSpec { h_grid: 0.05, r_core: 0.1, r_tail: 200.0, tol: 1e-7 })?;
    let amp: Vec<f64> = (0..stack.len()).map(|j| b.amplitudes.get(j).copied().unwrap_or(1.0 + 0.5 * j as f64)).collect();
    let support = b.support;
    let pert = PerturbationField::from_fn(*stack.grid(), stack.len(), support, |j, x| {
        let r2 = x.iter().map(|v| v * v).sum::<f64>() / (support * support);
        amp[j] * (1.0 - r2).powi(3)
    })
    .map_err(invalid)?;
    pert.validate(&stack, &b.omega).map_err(invalid)?;
    let phi: Vec<Vec<f64>> = pert.eta.iter().map(|e| e.values.clone()).collect();
    let p = stack.params;
    let per = |t: f64| -> Result<f64, CliError> {
        let st = stack.perturbed(t, &phi).map_err(numerical)?;
        Ok(per_s(&st, &b.omega, &p, &spec).map_err(numerical)?.value)
    };
    let h = b.fd_step;
    let (pm, p0, pp) = (per(-h)?, per(0.0)?, per(h)?);
    let fd1 = (pp - pm) / (2.0 * h);
    let fd2 = (pp - 2.0 * p0 + pm) / (h * h);
    let v1 = first_variation(&stack, &pert, &b.omega, &spec).map_err(numerical)?;
    let v2 = second_variation(&stack, &pert, &b.omega, &spec).map_err(numerical)?;
    let (e1, e2) = ((v1 - fd1).abs() / fd1.abs(), (v2.value - fd2).abs() / fd2.abs());
    let mut rep = Report::new(
        format!(
            "variation-oracle: first {v1:.6} vs FD {fd1:.6} ({:.3}%), second {:.6} vs FD {fd2:.6} ({:.3}%)",
            100.0 * e1,
            v2.value,
            100.0 * e2
        ),
        json!({
            "per_s": p0,
            "first_variation": v1,
            "first_fd": fd1,
            "first_rel_error": e1,
            "second_variation": v2,
            "second_fd": fd2,
            "second_rel_error": e2,
            "fd_step": h,
        }),
        &["per_s", "first_variation", "first_fd", "first_rel_error", "second_variation", "second_fd", "second_rel_error"],
    );
    rep.row(vec![num(p0), num(v1), num(fd1), num(e1), num(v2.value), num(fd2), num(e2)]);
    Ok(rep)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    match cfg.command {
        Command::Kernel => run_kernel(cfg),
        Command::HsEval => run_hs_eval(cfg),
        Command::SlabCheck => run_slab_check(cfg),
        Command::SlabStability => run_slab_stability(cfg),
        Command::SeparationFit => run_separation_fit(cfg),
        Command::Toda => run_toda(cfg),
        Command::Cone => run_cone(cfg),
        Command::VariationOracle => run_variation_oracle(cfg),
    }
}

const COLUMNS_HELP: &str = "\
CSV columns (every row also carries version, config_hash):
  kernel            n, s, sigma, c_ns, c_ns_quadrature, c_circ
  hs-eval           sheet, x1[, x2], value, est_error
  slab-check        boundary, height, hs
  slab-stability    sigma, spacing, min_margin, worst_mode_id
  separation-fit    sigma, spacing, min_margin, worst_mode_id (all scans)
  toda              iteration, residual, step
  cone              profile, theta, phi, value, residual
  variation-oracle  per_s, first_variation, first_fd, first_rel_error,
                    second_variation, second_fd, second_rel_error

Exit status: 0 success, 2 invalid configuration, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "fracmin", version, about = "Fractional mean curvature and stability experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Run one experiment.
    #[command(after_help = COLUMNS_HELP)]
    Run(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Experiment; overrides the config's `command`.
    pub command: Option<Command>,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, env = "FRACMIN_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub cstar: Option<f64>,
    #[arg(long)]
    pub sheets: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Spacing grid in units of √σ.
    #[arg(long, value_delimiter = ',')]
    pub spacings: Option<Vec<f64>>,
    #[arg(long)]
    pub robust: bool,
    /// Stack document for hs-eval and variation-oracle.
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<usize>,
    #[arg(long)]
    pub g0: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub fd_step: Option<f64>,
}

impl RunArgs {
    /// Loads the config file (if any) and applies the flag overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                let mut cfg = ExperimentConfig::from_json(&text)?;
                if let Some(c) = self.command {
                    cfg.command = c;
                }
                cfg
            }
            None => ExperimentConfig::new(self.command.ok_or_else(|| invalid("give a command or --config"))?),
        };
        cfg.params.n = self.n.or(cfg.params.n);
        cfg.params.s = self.s.or(cfg.params.s);
        cfg.output_path = self.out.clone().or(cfg.output_path);
        cfg.format = self.format.unwrap_or(cfg.format);
        let sl = &mut cfg.slab;
        sl.sigma = self.sigma.unwrap_or(sl.sigma);
        sl.cstar = self.cstar.unwrap_or(sl.cstar);
        sl.sheets = self.sheets.unwrap_or(sl.sheets);
        sl.sigmas = self.sigmas.clone().unwrap_or(std::mem::take(&mut sl.sigmas));
        sl.spacings = self.spacings.clone().unwrap_or(std::mem::take(&mut sl.spacings));
        sl.robust |= self.robust;
        if let Some(p) = &self.stack {
            match cfg.command {
                Command::VariationOracle => cfg.variation.stack_path = Some(p.clone()),
                _ => cfg.hs_eval.stack_path = Some(p.clone()),
            }
        }
        cfg.toda.profiles = self.profiles.unwrap_or(cfg.toda.profiles);
        cfg.toda.g0 = self.g0.unwrap_or(cfg.toda.g0);
        cfg.cone.resolution = self.resolution.unwrap_or(cfg.cone.resolution);
        cfg.cone.eps = self.eps.unwrap_or(cfg.cone.eps);
        cfg.variation.fd_step = self.fd_step.unwrap_or(cfg.variation.fd_step);
        Ok(cfg)
    }
}

/// Runs a resolved configuration. With an output path the file is written
/// and the summary goes to stdout; otherwise the body goes to stdout and the
/// summary to stderr.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let report = execute(cfg)?;
    let hash = cfg.hash();
    let body = match cfg.format {
        Format::Csv => report.to_csv(&hash)?,
        Format::Json => report.to_json(cfg, &hash),
    };
    match &cfg.output_path {
        Some(path) => {
            write_atomic(path, &body)?;
            println!("{}", report.summary);
        }
        None => {
            eprintln!("{}", report.summary);
            std::io::stdout().write_all(&body)?;
        }
    }
    Ok(report)
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(0) => Err(invalid("--threads must be positive")),
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(invalid),
        None => Ok(()),
    }
}

fn report_error(e: &CliError, command: Option<Command>) -> ExitCode {
    let diag = json!({"error": e.kind(), "message": e.to_string(), "command": command, "exit_code": e.exit_code()});
    eprintln!("{diag}");
    ExitCode::from(e.exit_code())
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let Action::Run(args) = cli.action;
    let cfg = match configure_threads(args.threads).and_then(|_| args.resolve()) {
        Ok(c) => c,
        Err(e) => return report_error(&e, args.command),
    };
    match run(&cfg) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => report_error(&e, Some(cfg.command)),
    }
}
