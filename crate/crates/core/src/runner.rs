//! Scenario configuration, orchestration of the solver stages, and the
//! CSV/JSON/VTK result files.
//!
//! Every written file carries the configuration fingerprint (SHA-256 of the
//! canonical configuration JSON). Output is byte-for-byte reproducible for
//! a given configuration; wall-clock timings go to `timings.txt` only.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cell::{
    build_cell_mesh, effective_tensors, solve_inclusion_corrector, solve_neumann_cell,
    solve_pc_permittivity, sweep_mu_eff, ResonanceCurve,
};
use crate::error::{Error, Result};
use crate::geometry::{make_microstructure, GeometryId, MacroDomain, Microstructure, ShapeVariant};
use crate::helmholtz::{
    assemble_and_solve, build_domain_mesh, build_macro_mesh, measure_transmission, region_norm,
    DomainMesh, IncidentWave, LateralBoundary, Mode, Rect, SolveOptions,
};
use crate::hmm::{homogenized_solve, run_hmm, HmmReport, HmmResolution, HomogenizedModel};
use crate::slab::{
    closed_form_coeffs, interface_matching_oracle, layer_parameters, CoefficientSet, SlabParams,
};
use crate::vtk::field_to_vtk;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexValue> for Complex64 {
    fn from(c: ComplexValue) -> Self {
        Complex64::new(c.re, c.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Coeffs,
    Cell,
    EParallel,
    HParallel,
    Hmm,
}

/// Frequency grid over `ω`: explicit `values`, or `points` equispaced
/// samples from `min` to `max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl SweepSpec {
    pub fn linspace(min: f64, max: f64, points: usize) -> Self {
        SweepSpec {
            values: None,
            min: Some(min),
            max: Some(max),
            points: Some(points),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.values, self.min, self.max, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(n)) if n >= 1 => {
                if n == 1 {
                    vec![lo]
                } else {
                    (0..n)
                        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                        .collect()
                }
            }
            _ => {
                return Err(Error::Config(
                    "sweep needs either `values` or all of `min`, `max`, `points`".into(),
                ))
            }
        };
        if grid.is_empty() || grid.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("sweep values must be finite and non-negative".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sweep grid must be strictly increasing".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub geometry: GeometryId,
    pub variant: ShapeVariant,
    pub r: f64,
    /// Turn the cross-section by 90° (plates normal to `e1`).
    pub rotated: bool,
    pub eta: f64,
    pub qm: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    pub eps0: f64,
    pub mu0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<ComplexValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1_inv: Option<ComplexValue>,
    /// Overrides the computed perfect-conductor permittivity entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub modes: Vec<RunMode>,
    pub cells_per_eta: usize,
    pub cell_n: usize,
    pub macro_n: usize,
    pub lateral: LateralBoundary,
    pub strip: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            geometry: GeometryId::Sigma1,
            variant: ShapeVariant::SquareBase,
            r: 0.25,
            rotated: false,
            eta: 0.125,
            qm: [0.25, 0.75],
            k0: Some(12.0),
            omega: None,
            eps0: 1.0,
            mu0: 1.0,
            eps1: None,
            eps1_inv: Some(ComplexValue { re: 1.0, im: -0.01 }),
            gamma: None,
            modes: vec![
                RunMode::Coeffs,
                RunMode::Cell,
                RunMode::EParallel,
                RunMode::HParallel,
                RunMode::Hmm,
            ],
            cells_per_eta: 32,
            cell_n: 64,
            macro_n: 32,
            lateral: LateralBoundary::Periodic,
            strip: [0.05, 0.20],
            output: None,
            sweep: None,
        }
    }
}

const KNOWN_KEYS: [&str; 21] = [
    "geometry",
    "variant",
    "r",
    "rotated",
    "eta",
    "qm",
    "k0",
    "omega",
    "eps0",
    "mu0",
    "eps1",
    "eps1_inv",
    "gamma",
    "modes",
    "cells_per_eta",
    "cell_n",
    "macro_n",
    "lateral",
    "strip",
    "output",
    "sweep",
];

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
    let unknown: Vec<&str> = obj
        .keys()
        .map(String::as_str)
        .filter(|k| !KNOWN_KEYS.contains(k))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    if obj.contains_key("k0") && obj.contains_key("omega") {
        return Err(Error::Config("`k0` and `omega` are mutually exclusive keys".into()));
    }
    if obj.contains_key("eps1") && obj.contains_key("eps1_inv") {
        return Err(Error::Config("`eps1` and `eps1_inv` are mutually exclusive keys".into()));
    }
    let mut cfg: ScenarioConfig =
        serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string()))?;
    if obj.contains_key("omega") {
        cfg.k0 = None;
    }
    if obj.contains_key("eps1") {
        cfg.eps1_inv = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn validate(&mut self) -> Result<()> {
        self.domain().map_err(config_err)?;
        self.microstructure().map_err(config_err)?;
        if !(self.eps0 > 0.0 && self.mu0 > 0.0) {
            return Err(Error::Config("eps0 and mu0 must be positive".into()));
        }
        match (self.k0, self.omega) {
            (Some(k), None) | (None, Some(k)) if k > 0.0 && k.is_finite() => {}
            (Some(_), Some(_)) => {
                return Err(Error::Config("`k0` and `omega` are mutually exclusive keys".into()))
            }
            _ => return Err(Error::Config("exactly one positive `k0` or `omega` is required".into())),
        }
        let eps1 = self.eps1()?;
        if !(eps1.re > 0.0 && eps1.im >= 0.0 && eps1.is_finite()) {
            return Err(Error::Config(format!("eps1 must satisfy Re > 0 and Im >= 0, got {eps1}")));
        }
        if self.cells_per_eta < 4 || !self.cells_per_eta.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "cells_per_eta must be a multiple of 4 and at least 4, got {}",
                self.cells_per_eta
            )));
        }
        if self.cell_n == 0 || !self.cell_n.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "cell_n must be a positive multiple of 4, got {}",
                self.cell_n
            )));
        }
        build_macro_mesh_check(&self.domain()?, self.macro_n)?;
        let (a, b) = (self.strip[0], self.strip[1]);
        if !(0.0 <= a && a < b && b <= self.qm[0]) {
            return Err(Error::Config(format!(
                "strip [{a}, {b}] must lie left of Q_M = [{}, {}]",
                self.qm[0], self.qm[1]
            )));
        }
        if let Some(g) = self.gamma {
            if !(g >= 1.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be >= 1, got {g}")));
            }
        }
        if let Some(s) = &self.sweep {
            s.grid()?;
        }
        let set: BTreeSet<RunMode> = self.modes.iter().copied().collect();
        if set.is_empty() {
            return Err(Error::Config("`modes` must not be empty".into()));
        }
        self.modes = set.into_iter().collect();
        Ok(())
    }

    pub fn k0(&self) -> f64 {
        match (self.k0, self.omega) {
            (Some(k), _) => k,
            (None, Some(w)) => w * (self.eps0 * self.mu0).sqrt(),
            _ => 12.0,
        }
    }

    pub fn omega(&self) -> f64 {
        self.k0() / (self.eps0 * self.mu0).sqrt()
    }

    pub fn eps1(&self) -> Result<Complex64> {
        match (self.eps1, self.eps1_inv) {
            (Some(e), None) => Ok(e.into()),
            (None, Some(inv)) => {
                let inv: Complex64 = inv.into();
                if inv.norm() == 0.0 {
                    return Err(Error::Config("eps1_inv must be nonzero".into()));
                }
                Ok(Complex64::new(1.0, 0.0) / inv)
            }
            (None, None) => Ok(Complex64::new(1.0, 0.0) / Complex64::new(1.0, -0.01)),
            (Some(_), Some(_)) => Err(Error::Config(
                "`eps1` and `eps1_inv` are mutually exclusive keys".into(),
            )),
        }
    }

    pub fn microstructure(&self) -> Result<Microstructure> {
        let m = make_microstructure(self.geometry, self.variant, self.r)?;
        Ok(if self.rotated { m.rotated() } else { m })
    }

    pub fn domain(&self) -> Result<MacroDomain> {
        MacroDomain::new((self.qm[0], self.qm[1]), self.eta)
    }

    pub fn wave(&self) -> Result<IncidentWave> {
        IncidentWave::from_right(self.k0())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            lateral: self.lateral,
        }
    }

    pub fn has(&self, mode: RunMode) -> bool {
        self.modes.contains(&mode)
    }

    /// Canonical JSON (output location excluded) used for fingerprinting.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn build_macro_mesh_check(domain: &MacroDomain, n: usize) -> Result<()> {
    let aligned = |x: f64| ((x * n as f64) - (x * n as f64).round()).abs() < 1e-9;
    if n == 0 || !aligned(domain.qm.0) || !aligned(domain.qm.1) {
        return Err(Error::Config(format!(
            "macro_n = {n} must place the slab faces {:?} on grid lines",
            domain.qm
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffRow {
    pub geometry: GeometryId,
    pub alpha: f64,
    pub gamma: f64,
    pub k0: f64,
    pub length: f64,
    pub coeffs: CoefficientSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub gamma: Option<f64>,
    pub mu_pc: Option<[f64; 3]>,
    #[serde(rename = "A_eff")]
    pub a_eff: [[f64; 2]; 2],
    pub alpha: f64,
    pub n: usize,
    pub mu_hc: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineSummary {
    pub mode: Mode,
    pub geometry: GeometryId,
    pub eta: f64,
    pub k0: f64,
    #[serde(rename = "T_num")]
    pub t_num: f64,
    pub norm_qm: f64,
    pub norm_inclusions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega: f64,
    pub k0: f64,
    pub mu: Option<Complex64>,
    pub abs_t_coeffs: Option<f64>,
    pub t_num_e_parallel: Option<f64>,
    pub t_num_h_parallel: Option<f64>,
    pub t_num_hmm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Config,
    Solver,
    Validation,
}

impl FailureKind {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => FailureKind::Config,
            Error::Accuracy { .. } => FailureKind::Validation,
            _ => FailureKind::Solver,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 1,
            FailureKind::Solver => 2,
            FailureKind::Validation => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub fingerprint: String,
    pub config: ScenarioConfig,
    pub coeffs: Option<Vec<CoeffRow>>,
    pub cell: Option<CellReport>,
    pub fine: Vec<FineSummary>,
    pub hmm: Option<HmmReport>,
    pub sweep: Option<Vec<SweepRow>>,
    pub failures: Vec<Failure>,
    /// Wall-clock seconds per stage; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    fn new(config: &ScenarioConfig) -> Self {
        let mut config = config.clone();
        config.output = None;
        RunReport {
            schema_version: SCHEMA_VERSION,
            fingerprint: config.fingerprint(),
            config,
            coeffs: None,
            cell: None,
            fine: Vec::new(),
            hmm: None,
            sweep: None,
            failures: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Exit status: 0 without failures, else the code of the most severe kind.
    pub fn exit_code(&self) -> i32 {
        self.failures
            .iter()
            .map(|f| f.kind.exit_code())
            .max()
            .unwrap_or(0)
    }

    fn record<T>(&mut self, stage: &str, started: Instant, result: Result<T>) -> Option<T> {
        let secs = started.elapsed().as_secs_f64();
        log::info!("{stage}: {secs:.3} s");
        self.timings.push((stage.to_string(), secs));
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                log::error!("{stage} failed: {e}");
                self.failures.push(Failure {
                    stage: stage.to_string(),
                    kind: FailureKind::of(&e),
                    message: e.to_string(),
                });
                None
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes files into an output directory, skipping everything when no
/// directory is configured.
struct Sink<'a> {
    dir: Option<&'a Path>,
    fingerprint: String,
}

impl Sink<'_> {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut out = format!(
            "# metawave schema_version={SCHEMA_VERSION} fingerprint={}\n",
            self.fingerprint
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush()?;
        }
        self.write(name, &String::from_utf8(out).expect("csv is utf-8"))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let Value::Object(map) = &mut v {
            map.insert("fingerprint".into(), Value::String(self.fingerprint.clone()));
            map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        }
        self.write(name, &serde_json::to_string_pretty(&v)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Perfect-conductor `γ` of the compact cylinder with the configured shape,
/// shared by the two cylinder geometries.
fn conductor_gamma(cfg: &ScenarioConfig) -> Result<f64> {
    if let Some(g) = cfg.gamma {
        return Ok(g);
    }
    let m = make_microstructure(GeometryId::Sigma1, cfg.variant, cfg.r)?;
    solve_pc_permittivity(&build_cell_mesh(&m, cfg.cell_n)?)
}

pub fn coefficient_rows(cfg: &ScenarioConfig, gamma: f64) -> Result<Vec<CoeffRow>> {
    let domain = cfg.domain()?;
    GeometryId::ALL
        .iter()
        .map(|&id| {
            let m = make_microstructure(id, cfg.variant, cfg.r)?;
            let params = SlabParams {
                omega: cfg.omega(),
                eps0: cfg.eps0,
                mu0: cfg.mu0,
                length: domain.width(),
                alpha: m.alpha,
                gamma: Complex64::new(gamma, 0.0),
            };
            Ok(CoeffRow {
                geometry: id,
                alpha: m.alpha,
                gamma,
                k0: params.k0(),
                length: params.length,
                coeffs: closed_form_coeffs(id, &params)?,
            })
        })
        .collect()
}

fn coeff_csv(sink: &Sink, rows: &[CoeffRow]) -> Result<()> {
    let mut header = vec!["schema_version", "geometry", "alpha", "gamma_re", "gamma_im", "k0", "L"];
    let names = ["R", "T", "R_M", "T_M"];
    let cols: Vec<String> = names
        .iter()
        .flat_map(|n| [format!("re_{n}"), format!("im_{n}"), format!("abs_{n}")])
        .collect();
    header.extend(cols.iter().map(String::as_str));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                r.geometry.name().to_string(),
                num(r.alpha),
                num(r.gamma),
                num(0.0),
                num(r.k0),
                num(r.length),
            ];
            for c in [r.coeffs.r, r.coeffs.t, r.coeffs.r_m, r.coeffs.t_m] {
                row.extend([num(c.re), num(c.im), num(c.norm())]);
            }
            row
        })
        .collect();
    sink.csv("coeffs.csv", &header, &body)
}

fn fine_csv(sink: &Sink, rows: &[FineSummary]) -> Result<()> {
    let header = [
        "schema_version",
        "mode",
        "geometry",
        "eta",
        "k0",
        "T_num",
        "norm_QM",
        "norm_inclusions",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.mode.name().to_string(),
                r.geometry.name().to_string(),
                num(r.eta),
                num(r.k0),
                num(r.t_num),
                num(r.norm_qm),
                num(r.norm_inclusions),
            ]
        })
        .collect();
    sink.csv("fine_summary.csv", &header, &body)
}

fn fine_modes(cfg: &ScenarioConfig) -> Vec<Mode> {
    let mut modes = Vec::new();
    if cfg.has(RunMode::EParallel) {
        modes.push(Mode::EParallel);
    }
    if cfg.has(RunMode::HParallel) {
        modes.push(Mode::HParallel);
    }
    modes
}

fn strip(cfg: &ScenarioConfig) -> (f64, f64) {
    (cfg.strip[0], cfg.strip[1])
}

fn fine_summary(
    cfg: &ScenarioConfig,
    mesh: &Arc<DomainMesh>,
    mode: Mode,
) -> Result<(FineSummary, crate::helmholtz::FieldSolution)> {
    let sol = assemble_and_solve(mesh, mode, cfg.eps1()?, &cfg.wave()?, cfg.solve_options())?;
    let qm = Rect::strip((cfg.qm[0], cfg.qm[1]));
    Ok((
        FineSummary {
            mode,
            geometry: cfg.geometry,
            eta: cfg.eta,
            k0: cfg.k0(),
            t_num: measure_transmission(&sol, strip(cfg))?,
            norm_qm: region_norm(&sol, &qm, false),
            norm_inclusions: region_norm(&sol, &qm, true),
        },
        sol,
    ))
}

/// Runs the configured modes in dependency order (cell, coefficients,
/// homogenized pipeline, fine solves). Stage failures are recorded in the
/// report and do not stop later independent stages.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunReport> {
    let mut report = RunReport::new(cfg);
    let sink = Sink {
        dir: out,
        fingerprint: report.fingerprint.clone(),
    };
    let fp = report.fingerprint.clone();
    let title = |what: &str| format!("metawave {what} fingerprint={fp}");

    if cfg.has(RunMode::Cell) {
        let t = Instant::now();
        let result = (|| {
            let m = cfg.microstructure()?;
            let cell = build_cell_mesh(&m, cfg.cell_n)?;
            let hc = Some((cfg.omega(), cfg.eps0, cfg.mu0, cfg.eps1()?));
            let eff = effective_tensors(&cell, hc)?;
            Ok(CellReport {
                gamma: eff.gamma,
                mu_pc: eff.mu_pc,
                a_eff: eff.a_eff,
                alpha: m.alpha,
                n: cfg.cell_n,
                mu_hc: eff.mu_hc,
            })
        })();
        if let Some(c) = report.record("cell", t, result) {
            sink.json("cell.json", &c)?;
            report.cell = Some(c);
        }
    }

    if cfg.has(RunMode::Coeffs) {
        let t = Instant::now();
        let result = conductor_gamma(cfg).and_then(|g| coefficient_rows(cfg, g));
        if let Some(rows) = report.record("coeffs", t, result) {
            coeff_csv(&sink, &rows)?;
            report.coeffs = Some(rows);
        }
    }

    if cfg.has(RunMode::Hmm) {
        let t = Instant::now();
        let res = HmmResolution {
            cell_n: cfg.cell_n,
            macro_n: cfg.macro_n,
            cells_per_eta: cfg.cells_per_eta,
        };
        let result = (|| {
            run_hmm(
                &cfg.domain()?,
                &cfg.microstructure()?,
                cfg.eps1()?,
                &cfg.wave()?,
                res,
                cfg.solve_options(),
            )
        })();
        if let Some(run) = report.record("hmm", t, result) {
            sink.json("hmm.json", &run.report)?;
            sink.write("hmm_macro.vtk", &field_to_vtk(&run.macro_solution, &title("hmm-macro")))?;
            sink.write("hmm_u0.vtk", &field_to_vtk(&run.reconstruction, &title("hmm-u0")))?;
            report.hmm = Some(run.report);
        }
    }

    let modes = fine_modes(cfg);
    if !modes.is_empty() {
        let t = Instant::now();
        let mesh = report.record("fine-mesh", t, (|| {
            Ok(Arc::new(build_domain_mesh(&cfg.domain()?, &cfg.microstructure()?, cfg.cells_per_eta)?))
        })());
        if let Some(mesh) = mesh {
            for mode in modes {
                let t = Instant::now();
                if let Some((row, sol)) = report.record(mode.name(), t, fine_summary(cfg, &mesh, mode)) {
                    sink.write(&format!("field_{}.vtk", mode.name()), &field_to_vtk(&sol, &title(mode.name())))?;
                    report.fine.push(row);
                }
            }
            fine_csv(&sink, &report.fine)?;
        }
    }

    finish(&sink, &report)?;
    Ok(report)
}

fn finish(sink: &Sink, report: &RunReport) -> Result<()> {
    sink.write("report.json", &report.to_json())?;
    let mut timings = format!("# fingerprint={}\n", report.fingerprint);
    for (stage, secs) in &report.timings {
        timings.push_str(&format!("{stage}\t{secs:.6}\n"));
    }
    sink.write("timings.txt", &timings)
}

/// Evaluates the configured modes at every `ω` of the sweep grid. Samples
/// run in parallel; rows keep grid order and failed samples are marked.
pub fn run_sweep(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunReport> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("`sweep` requires a `sweep` grid in the configuration".into()))?
        .grid()?;
    let mut report = RunReport::new(cfg);
    let sink = Sink {
        dir: out,
        fingerprint: report.fingerprint.clone(),
    };
    let t = Instant::now();
    let setup = (|| -> Result<_> {
        let m = cfg.microstructure()?;
        let domain = cfg.domain()?;
        let cell = build_cell_mesh(&m, cfg.cell_n)?;
        let gamma = if cfg.has(RunMode::Coeffs) {
            Some(conductor_gamma(cfg)?)
        } else {
            None
        };
        let a_eff = if cfg.has(RunMode::Hmm) {
            Some(solve_neumann_cell(&cell)?)
        } else {
            None
        };
        let fine = if fine_modes(cfg).is_empty() {
            None
        } else {
            Some(Arc::new(build_domain_mesh(&domain, &m, cfg.cells_per_eta)?))
        };
        let coarse = if cfg.has(RunMode::Hmm) {
            Some(Arc::new(build_macro_mesh(&domain, cfg.macro_n)?))
        } else {
            None
        };
        Ok((m, domain, cell, gamma, a_eff, fine, coarse))
    })();
    let Some((m, domain, cell, gamma, a_eff, fine, coarse)) = report.record("sweep-setup", t, setup)
    else {
        finish(&sink, &report)?;
        return Ok(report);
    };
    let eps1 = cfg.eps1()?;
    let scale = (cfg.eps0 * cfg.mu0).sqrt();
    let t = Instant::now();
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&omega| {
            let k0 = omega * scale;
            let mut row = SweepRow {
                omega,
                k0,
                mu: None,
                abs_t_coeffs: None,
                t_num_e_parallel: None,
                t_num_h_parallel: None,
                t_num_hmm: None,
                error: None,
            };
            let result = (|| -> Result<()> {
                let corrector = solve_inclusion_corrector(&cell, omega, cfg.eps0, cfg.mu0, eps1)?;
                row.mu = Some(corrector.mu_eff);
                if let Some(g) = gamma {
                    let params = SlabParams {
                        omega,
                        eps0: cfg.eps0,
                        mu0: cfg.mu0,
                        length: domain.width(),
                        alpha: m.alpha,
                        gamma: Complex64::new(g, 0.0),
                    };
                    row.abs_t_coeffs = Some(closed_form_coeffs(cfg.geometry, &params)?.t.norm());
                }
                if k0 == 0.0 {
                    return Ok(());
                }
                let wave = IncidentWave::from_right(k0)?;
                if let Some(mesh) = &fine {
                    for mode in fine_modes(cfg) {
                        let sol = assemble_and_solve(mesh, mode, eps1, &wave, cfg.solve_options())?;
                        let t_num = Some(measure_transmission(&sol, strip(cfg))?);
                        match mode {
                            Mode::EParallel => row.t_num_e_parallel = t_num,
                            _ => row.t_num_h_parallel = t_num,
                        }
                    }
                }
                if let (Some(a), Some(mesh)) = (a_eff, &coarse) {
                    let model = HomogenizedModel {
                        a_eff: a,
                        mu_eff: corrector.mu_eff,
                        k0,
                        eps1: Some(eps1),
                    };
                    let sol = homogenized_solve(mesh, &model, &wave, cfg.solve_options())?;
                    row.t_num_hmm = Some(measure_transmission(&sol, strip(cfg))?);
                }
                Ok(())
            })();
            if let Err(e) = result {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    report.timings.push(("sweep".into(), t.elapsed().as_secs_f64()));
    for r in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("sweep sample omega = {} failed: {}", r.omega, r.error.as_deref().unwrap_or(""));
    }
    let header = [
        "schema_version",
        "omega",
        "k0",
        "re_mu",
        "im_mu",
        "abs_T_coeffs",
        "T_num_e_parallel",
        "T_num_h_parallel",
        "T_num_hmm",
        "failed",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                num(r.omega),
                num(r.k0),
                opt_num(r.mu.map(|m| m.re)),
                opt_num(r.mu.map(|m| m.im)),
                opt_num(r.abs_t_coeffs),
                opt_num(r.t_num_e_parallel),
                opt_num(r.t_num_h_parallel),
                opt_num(r.t_num_hmm),
                u8::from(r.error.is_some()).to_string(),
            ]
        })
        .collect();
    sink.csv("sweep.csv", &header, &body)?;
    report.sweep = Some(rows);
    finish(&sink, &report)?;
    Ok(report)
}

/// `μ_eff(ω)` over the sweep grid (default: 200 points on `[0.1, 20]`).
pub fn run_mu_sweep(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ResonanceCurve> {
    let grid = cfg
        .sweep
        .clone()
        .unwrap_or_else(|| SweepSpec::linspace(0.1, 20.0, 200))
        .grid()?;
    let cell = build_cell_mesh(&cfg.microstructure()?, cfg.cell_n)?;
    let curve = sweep_mu_eff(&cell, &grid, cfg.eps0, cfg.mu0, cfg.eps1()?)?;
    let sink = Sink {
        dir: out,
        fingerprint: cfg.fingerprint(),
    };
    let body: Vec<Vec<String>> = curve
        .samples
        .iter()
        .map(|s| {
            vec![
                SCHEMA_VERSION.to_string(),
                num(s.omega),
                num(s.k0),
                opt_num(s.mu.map(|m| m.re)),
                opt_num(s.mu.map(|m| m.im)),
                u8::from(s.mu.is_none()).to_string(),
            ]
        })
        .collect();
    sink.csv(
        "mu_sweep.csv",
        &["schema_version", "omega", "k0", "re_mu", "im_mu", "failed"],
        &body,
    )?;
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub draws: usize,
    pub seed: u64,
    pub max_deviation: f64,
    pub max_energy_defect: f64,
    pub sigma4_exact: bool,
}

impl OracleCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_deviation < tol && self.max_energy_defect < tol && self.sigma4_exact
    }
}

/// Seeded random comparison of the closed-form coefficients against the
/// interface-matching oracle, plus the lossless energy balance.
pub fn verify_oracle(draws: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0f64;
    let mut max_energy_defect = 0.0f64;
    let mut sigma4_exact = true;
    for _ in 0..draws {
        let alpha = rng.gen_range(0.1..0.9);
        let gamma = rng.gen_range(1.0..5.0);
        let k0 = rng.gen_range(1.0..20.0);
        let length = rng.gen_range(0.1..1.0);
        let params = SlabParams::normalized(k0, length, alpha, Complex64::new(gamma, 0.0));
        for id in [GeometryId::Sigma1, GeometryId::Sigma2, GeometryId::Sigma3] {
            let closed = closed_form_coeffs(id, &params)?;
            let (a_m, k_m) = layer_parameters(id, &params).expect("layer geometry");
            let oracle = interface_matching_oracle(a_m, k_m, k0, length)?;
            max_deviation = max_deviation.max(closed.max_deviation(&oracle));
            max_energy_defect = max_energy_defect.max((closed.energy() - 1.0).abs());
        }
        let c4 = closed_form_coeffs(GeometryId::Sigma4, &params)?;
        sigma4_exact &= c4.r == Complex64::new(-1.0, 0.0) && c4.t == Complex64::new(0.0, 0.0);
    }
    Ok(OracleCheck {
        draws,
        seed,
        max_deviation,
        max_energy_defect,
        sigma4_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = parse_config_str("{}").unwrap();
        assert_eq!(cfg.k0(), 12.0);
        assert_eq!(cfg.eta, 0.125);
        assert_eq!(cfg.geometry, GeometryId::Sigma1);
        assert_eq!(cfg.eps1_inv, Some(ComplexValue { re: 1.0, im: -0.01 }));
        assert_eq!(cfg, {
            let mut d = ScenarioConfig::default();
            d.validate().unwrap();
            d
        });
    }

    #[test]
    fn rejects_bad_configs() {
        let err = parse_config_str(r#"{"eta": 0.13}"#).unwrap_err().to_string();
        assert!(err.contains("eta must be a reciprocal power of two dividing |Q_M|"), "{err}");
        let err = parse_config_str(r#"{"k0": 12, "omega": 12}"#).unwrap_err().to_string();
        assert!(err.contains("mutually exclusive"), "{err}");
        let err = parse_config_str(r#"{"foo": 1, "bar": 2, "r": 0.2}"#).unwrap_err().to_string();
        assert!(err.contains("foo") && err.contains("bar"), "{err}");
        assert!(parse_config_str(r#"{"cells_per_eta": 6}"#).is_err());
        assert!(parse_config_str(r#"{"r": 0.6}"#).is_err());
        assert!(parse_config_str(r#"{"strip": [0.1, 0.3]}"#).is_err());
        assert!(parse_config_str(r#"{"eps1": {"re": 1.0, "im": -0.1}}"#).is_err());
        assert!(parse_config_str(r#"{"sweep": {"values": [2.0, 1.0]}}"#).is_err());
        assert!(parse_config_str("[1, 2]").is_err());
    }

    #[test]
    fn omega_and_physical_units() {
        let cfg = parse_config_str(r#"{"omega": 3.0, "eps0": 4.0, "mu0": 1.0}"#).unwrap();
        assert_eq!(cfg.k0, None);
        assert_eq!(cfg.k0(), 6.0);
        assert_eq!(cfg.omega(), 3.0);
    }

    #[test]
    fn fingerprint_ignores_output_location() {
        let a = parse_config_str(r#"{"output": "a"}"#).unwrap();
        let b = parse_config_str(r#"{"output": "b"}"#).unwrap();
        let c = parse_config_str(r#"{"k0": 11}"#).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn sweep_grid_forms() {
        let s = SweepSpec::linspace(1.0, 2.0, 3);
        assert_eq!(s.grid().unwrap(), vec![1.0, 1.5, 2.0]);
        let bad = SweepSpec {
            values: Some(vec![1.0]),
            min: Some(0.0),
            max: None,
            points: None,
        };
        assert!(bad.grid().is_err());
    }

    #[test]
    fn coefficient_rows_cover_all_geometries() {
        let cfg = parse_config_str(r#"{"gamma": 1.5}"#).unwrap();
        let rows = coefficient_rows(&cfg, 1.5).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].coeffs.r, Complex64::new(-1.0, 0.0));
        assert_eq!(rows[0].length, 0.5);
    }

    #[test]
    fn report_round_trips() {
        let cfg = parse_config_str(r#"{"modes": ["coeffs"], "gamma": 1.7}"#).unwrap();
        let report = run_scenario(&cfg, None).unwrap();
        let json = report.to_json();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(report.exit_code(), 0);
    }

    #[test]
    fn seeded_oracle_check() {
        let check = verify_oracle(20, 7).unwrap();
        assert!(check.passed(1e-10), "{check:?}");
        assert_eq!(verify_oracle(20, 7).unwrap(), check);
    }

    proptest::proptest! {
        #[test]
        fn fingerprint_tracks_content(k0 in 1.0f64..20.0, r in 0.05f64..0.45) {
            let json = format!(r#"{{"k0": {k0}, "r": {r}, "modes": ["coeffs"]}}"#);
            let a = parse_config_str(&json).unwrap();
            let b = parse_config_str(&json).unwrap();
            proptest::prop_assert_eq!(a.fingerprint(), b.fingerprint());
            let shifted = parse_config_str(&format!(
                r#"{{"k0": {}, "r": {r}, "modes": ["coeffs"]}}"#,
                k0 + 0.5
            ))
            .unwrap();
            proptest::prop_assert_ne!(a.fingerprint(), shifted.fingerprint());
        }
    }
    #[test]
    fn coeffs_scenario_matches_closed_form() {
        let cfg = parse_config_str(r#"{"modes": ["coeffs"]}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&cfg, Some(dir.path())).unwrap();
        let rows = report.coeffs.as_ref().unwrap();
        assert_eq!(rows.len(), 4);
        for row in rows {
            let m = make_microstructure(row.geometry, ShapeVariant::SquareBase, 0.25).unwrap();
            let p = SlabParams::normalized(12.0, 0.5, m.alpha, Complex64::new(row.gamma, 0.0));
            let direct = closed_form_coeffs(row.geometry, &p).unwrap();
            assert_eq!(row.coeffs, direct);
        }
        let csv = std::fs::read_to_string(dir.path().join("coeffs.csv")).unwrap();
        assert!(csv.contains(&report.fingerprint));
        assert_eq!(csv.lines().count(), 6);
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn conductor_gamma_feeds_coefficients() {
        let cfg = parse_config_str(r#"{"modes": ["coeffs", "cell"]}"#).unwrap();
        let report = run_scenario(&cfg, None).unwrap();
        let gamma = report.cell.as_ref().unwrap().gamma.unwrap();
        let rows = report.coeffs.as_ref().unwrap();
        assert!(rows.iter().all(|r| r.gamma == gamma));
        assert_eq!(rows, &coefficient_rows(&cfg, gamma).unwrap());
    }

    #[test]
    fn single_point_sweep_restricts_the_scenario() {
        let base = r#""eta": 0.25, "cells_per_eta": 8, "cell_n": 16, "macro_n": 16, "k0": 7.0,
            "gamma": 1.5, "modes": ["coeffs", "h-parallel", "e-parallel"]"#;
        let scenario = parse_config_str(&format!("{{{base}}}")).unwrap();
        let sweep = parse_config_str(&format!(r#"{{{base}, "sweep": {{"values": [7.0]}}}}"#)).unwrap();
        let a = run_scenario(&scenario, None).unwrap();
        let b = run_sweep(&sweep, None).unwrap();
        let row = &b.sweep.as_ref().unwrap()[0];
        assert!(row.error.is_none());
        let t = |m: Mode| a.fine.iter().find(|f| f.mode == m).unwrap().t_num;
        assert_eq!(row.t_num_h_parallel, Some(t(Mode::HParallel)));
        assert_eq!(row.t_num_e_parallel, Some(t(Mode::EParallel)));
        let sigma1 = &a.coeffs.as_ref().unwrap()[0];
        assert_eq!(row.abs_t_coeffs, Some(sigma1.coeffs.t.norm()));
    }

    #[test]
    fn partial_failures_are_recorded() {
        // the fine mesh exceeds the node budget; the coefficient stage still runs
        let cfg = parse_config_str(
            r#"{"cells_per_eta": 512, "gamma": 1.5, "modes": ["coeffs", "e-parallel"]}"#,
        )
        .unwrap();
        let report = run_scenario(&cfg, None).unwrap();
        assert_eq!(report.coeffs.as_ref().unwrap().len(), 4);
        assert!(report.fine.is_empty());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].stage, "fine-mesh");
        assert_eq!(report.exit_code(), 2);
    }

    #[test]
    fn h_parallel_transmission_dips_at_the_resonance() {
        let cfg = parse_config_str(
            r#"{"eps1": {"re": 1.0, "im": 0.0}, "modes": ["h-parallel"],
                "sweep": {"min": 6.0, "max": 12.0, "points": 50}}"#,
        )
        .unwrap();
        let report = run_sweep(&cfg, None).unwrap();
        let rows = report.sweep.unwrap();
        assert_eq!(rows.len(), 50);
        assert!(rows.windows(2).all(|w| w[0].omega < w[1].omega));
        assert!(rows.iter().all(|r| r.error.is_none()));
        let t = |r: &SweepRow| r.t_num_h_parallel.unwrap();
        let resonance = (8.0 * std::f64::consts::PI.powi(2)).sqrt();
        let first_flip = rows
            .windows(2)
            .position(|w| w[0].mu.unwrap().re * w[1].mu.unwrap().re < 0.0)
            .unwrap();
        assert!(rows[first_flip].k0 <= resonance + 0.2 && resonance - 0.2 <= rows[first_flip + 1].k0);
        let off_resonance = t(&rows[0]);
        let dip = rows
            .iter()
            .filter(|r| r.k0 > resonance && r.k0 < resonance + 1.0)
            .map(t)
            .fold(f64::INFINITY, f64::min);
        assert!(off_resonance > 0.9, "{off_resonance}");
        assert!(dip < 0.5 * off_resonance, "dip {dip} vs {off_resonance}");
    }
}
