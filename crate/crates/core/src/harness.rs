//! Experiment driver: strike tables and ATM parameter surfaces comparing the
//! pricers against Monte Carlo, written as versioned CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{mc_tvo_price, mc_vanilla_price, McConfig};
use crate::pricers::{
    dfa_full_price_t0, dfa_price, svve_price, svve_quadrature, vanilla_svve_price, Contract,
    DfaQuadConfig, Method, ModelParams, PricingResult,
};

pub const SCHEMA_LINE: &str = "#schema=1";
/// Marker written in place of a value whose evaluation failed.
pub const ERR_MARK: &str = "ERR";
/// Marker for cells that do not apply (a relative error without an MC column).
pub const NA_MARK: &str = "NA";

const MONEYNESS_RANGE: (f64, f64) = (0.5, 2.0);

fn default_spot() -> f64 {
    100.0
}

fn default_svve_nodes() -> usize {
    64
}

/// Contract terms shared by every cell, with the strike grid given as K/S0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractGrid {
    pub t: f64,
    pub sigma_bar: f64,
    pub moneyness: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "H")]
    Hurst,
    #[serde(rename = "nu")]
    VolVol,
    #[serde(rename = "rho")]
    Correlation,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Hurst => "H",
            SweepParam::VolVol => "nu",
            SweepParam::Correlation => "rho",
        }
    }

    // open bounds of the sweep
    fn bounds(&self) -> (f64, f64) {
        match self {
            SweepParam::Hurst => (0.0, 0.5),
            SweepParam::VolVol => (0.0, 0.6),
            SweepParam::Correlation => (-1.0, 1.0),
        }
    }

    fn apply(&self, p: &mut ModelParams, v: f64) {
        match self {
            SweepParam::Hurst => p.h = v,
            SweepParam::VolVol => p.nu = v,
            SweepParam::Correlation => p.rho = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.param.bounds();
        let name = self.param.name();
        if self.points == 0 {
            return Err(Error::Config(format!(
                "axis {name} needs at least one point"
            )));
        }
        if !(self.lo > a && self.hi < b && self.lo <= self.hi) {
            return Err(Error::Config(format!(
                "axis {name} range [{}, {}] must lie inside ({a}, {b})",
                self.lo, self.hi
            )));
        }
        if self.points == 1 && self.lo != self.hi {
            return Err(Error::Config(format!(
                "single-point axis {name} needs lo == hi"
            )));
        }
        Ok(())
    }
}

/// Two swept parameters; the third keeps its model value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub x: Axis,
    pub y: Axis,
    /// K/S0 of the surface; ATM by default.
    #[serde(default = "one")]
    pub moneyness: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_spot")]
    pub spot: f64,
    pub model: ModelSection,
    pub contract: ContractGrid,
    pub mc: McConfig,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub dfa_quad: DfaQuadConfig,
    #[serde(default = "default_svve_nodes")]
    pub svve_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSpec>,
}

/// Model parameters except the spot, which the config carries separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub y0: f64,
    pub nu: f64,
    pub rho: f64,
    pub h: f64,
}

/// Command-line values that replace those of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.mc.seed = s;
        }
        if let Some(n) = o.paths {
            self.mc.n_paths = n;
        }
        if let Some(n) = o.steps {
            self.mc.n_steps = n;
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(p) = &o.output {
            self.output = Some(p.clone());
        }
        self.validate()
    }

    pub fn params(&self) -> ModelParams {
        let m = self.model;
        ModelParams {
            s0: self.spot,
            y0: m.y0,
            nu: m.nu,
            rho: m.rho,
            h: m.h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Domain { op, msg } => Error::Config(format!("{op}: {msg}")),
            other => other,
        };
        self.params().validate().map_err(cfg_err)?;
        Contract::new(self.spot, self.contract.t, self.contract.sigma_bar).map_err(cfg_err)?;
        self.mc.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("method set is empty".into()));
        }
        if self.contract.moneyness.is_empty() {
            return Err(Error::Config("moneyness grid is empty".into()));
        }
        let (lo, hi) = MONEYNESS_RANGE;
        let in_range = |m: f64| (lo..=hi).contains(&m);
        if let Some(m) = self.contract.moneyness.iter().find(|m| !in_range(**m)) {
            return Err(Error::Config(format!("K/S0 = {m} outside [{lo}, {hi}]")));
        }
        if self.svve_nodes < 32 {
            return Err(Error::Config(format!(
                "svve_nodes must be >= 32, got {}",
                self.svve_nodes
            )));
        }
        if let Some(s) = &self.surface {
            s.x.validate()?;
            s.y.validate()?;
            if s.x.param == s.y.param {
                return Err(Error::Config(
                    "surface axes must sweep different parameters".into(),
                ));
            }
            if !in_range(s.moneyness) {
                return Err(Error::Config(format!(
                    "surface K/S0 = {} outside [{lo}, {hi}]",
                    s.moneyness
                )));
            }
        }
        Ok(())
    }

    fn contract_at(&self, moneyness: f64) -> Contract {
        Contract {
            k: moneyness * self.spot,
            t: self.contract.t,
            sigma_bar: self.contract.sigma_bar,
        }
    }
}

/// Prices one contract with one method under the experiment settings.
pub fn price_with(
    method: Method,
    contract: &Contract,
    params: &ModelParams,
    cfg: &ExperimentConfig,
) -> Result<PricingResult> {
    match method {
        Method::Mc => mc_tvo_price(contract, params, &cfg.mc),
        Method::McVanilla => mc_vanilla_price(contract, params, &cfg.mc),
        Method::Dfa => dfa_price(contract, params),
        Method::DfaFull => dfa_full_price_t0(contract, params, &cfg.dfa_quad),
        Method::Svve => svve_price(contract, params),
        Method::SvveQuad => svve_quadrature(contract, params, cfg.svve_nodes),
        Method::VanillaSvve => vanilla_svve_price(contract, params),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Err,
    Na,
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Num(x) if x.is_finite() => write!(out, "{x}").unwrap(),
            Cell::Num(_) | Cell::Err => out.push_str(ERR_MARK),
            Cell::Text(s) => out.push_str(s),
            Cell::Na => out.push_str(NA_MARK),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) if x.is_finite() => Some(*x),
            _ => None,
        }
    }
}

/// Rows of cells under named columns, plus the messages of failed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub errors: Vec<String>,
}

impl Artifact {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SCHEMA_LINE} kind={}\n", self.kind);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.render(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// |formula - MC| / MC in percent.
pub fn rel_err_pct(value: f64, mc: f64) -> Option<f64> {
    let r = (value - mc).abs() / mc * 100.0;
    r.is_finite().then_some(r)
}

type Outcome = std::result::Result<PricingResult, String>;

fn evaluate(cfg: &ExperimentConfig, cells: Vec<(Contract, ModelParams)>) -> Vec<Vec<Outcome>> {
    cells
        .par_iter()
        .map(|(c, p)| {
            cfg.methods
                .iter()
                .map(|m| price_with(*m, c, p, cfg).map_err(|e| format!("{m}: {e}")))
                .collect()
        })
        .collect()
}

fn mc_reference(methods: &[Method], results: &[Outcome]) -> Option<Option<f64>> {
    methods
        .iter()
        .position(|m| *m == Method::Mc)
        .map(|i| results[i].as_ref().ok().map(|r| r.price))
}

/// One row per K/S0 node: each method's price, the MC standard error, and
/// each formula's relative error against MC.
pub fn run_table(cfg: &ExperimentConfig) -> Result<Artifact> {
    cfg.validate()?;
    let params = cfg.params();
    let cells = cfg
        .contract
        .moneyness
        .iter()
        .map(|&m| (cfg.contract_at(m), params))
        .collect();
    let results = evaluate(cfg, cells);

    let mut columns = vec!["k_over_s0".to_string()];
    for m in &cfg.methods {
        columns.push(m.tag().to_string());
        if m.is_monte_carlo() {
            columns.push(format!("{m}_std_err"));
        }
    }
    let has_mc = cfg.methods.contains(&Method::Mc);
    let formulas: Vec<usize> = (0..cfg.methods.len())
        .filter(|&i| !cfg.methods[i].is_monte_carlo())
        .collect();
    if has_mc {
        for &i in &formulas {
            columns.push(format!("{}_rel_err_pct", cfg.methods[i]));
        }
    }

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (m, res) in cfg.contract.moneyness.iter().zip(&results) {
        let mut row = vec![Cell::Num(*m)];
        for (method, r) in cfg.methods.iter().zip(res) {
            match r {
                Ok(p) => row.push(Cell::Num(p.price)),
                Err(e) => {
                    row.push(Cell::Err);
                    errors.push(format!("K/S0={m}: {e}"));
                }
            }
            if method.is_monte_carlo() {
                row.push(
                    r.as_ref()
                        .ok()
                        .and_then(|p| p.std_err)
                        .map_or(Cell::Err, Cell::Num),
                );
            }
        }
        if let Some(mc) = mc_reference(&cfg.methods, res) {
            for &i in &formulas {
                let v = mc
                    .zip(res[i].as_ref().ok())
                    .and_then(|(mc, p)| rel_err_pct(p.price, mc));
                row.push(v.map_or(Cell::Err, Cell::Num));
            }
        }
        rows.push(row);
    }
    Ok(Artifact {
        kind: "table",
        columns,
        rows,
        errors,
    })
}

/// Long-format surface: one row per (x, y, method) with the price, the MC
/// standard error and the relative error against MC.
pub fn run_surface(cfg: &ExperimentConfig) -> Result<Artifact> {
    cfg.validate()?;
    let spec = cfg
        .surface
        .as_ref()
        .ok_or_else(|| Error::Config("no [surface] section in config".into()))?;
    let xs = spec.x.values();
    let ys = spec.y.values();
    let contract = cfg.contract_at(spec.moneyness);
    let mut points = Vec::new();
    let mut cells = Vec::new();
    for &x in &xs {
        for &y in &ys {
            let mut p = cfg.params();
            spec.x.param.apply(&mut p, x);
            spec.y.param.apply(&mut p, y);
            points.push((x, y));
            cells.push((contract, p));
        }
    }
    let results = evaluate(cfg, cells);
    let columns = vec![
        spec.x.param.name().to_string(),
        spec.y.param.name().to_string(),
        "method".into(),
        "price".into(),
        "std_err".into(),
        "rel_err_pct".into(),
    ];
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for ((x, y), res) in points.iter().zip(&results) {
        let mc = mc_reference(&cfg.methods, res);
        for (method, r) in cfg.methods.iter().zip(res) {
            let mut row = vec![
                Cell::Num(*x),
                Cell::Num(*y),
                Cell::Text(method.tag().into()),
            ];
            match r {
                Ok(p) => {
                    row.push(Cell::Num(p.price));
                    row.push(p.std_err.map_or(Cell::Na, Cell::Num));
                }
                Err(e) => {
                    row.extend([Cell::Err, Cell::Err]);
                    errors.push(format!("({x}, {y}): {e}"));
                }
            }
            let rel = match (method.is_monte_carlo(), mc) {
                (true, _) | (false, None) => Cell::Na,
                (false, Some(mc)) => mc
                    .zip(r.as_ref().ok())
                    .and_then(|(mc, p)| rel_err_pct(p.price, mc))
                    .map_or(Cell::Err, Cell::Num),
            };
            row.push(rel);
            rows.push(row);
        }
    }
    Ok(Artifact {
        kind: "surface",
        columns,
        rows,
        errors,
    })
}

/// Outcome of one built-in invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Fast invariants of the pricing stack.
pub fn selftest() -> Result<Vec<Check>> {
    use crate::bsm::c_value;
    use crate::specfun::ncdf;

    let mut out = Vec::new();
    let refl = (-8..=8)
        .map(|i| (ncdf(i as f64 * 0.5) + ncdf(-(i as f64) * 0.5) - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(check(
        "normal cdf reflection",
        refl < 1e-14,
        format!("max residual {refl:e}"),
    ));

    let c = Contract::new(100.0, 1.0, 0.3)?;
    let p0 = ModelParams::new(100.0, 0.3, 0.0, -0.7, 0.1)?;
    let bs = c.k * c.sigma_bar / p0.y0 * c_value(0.0, p0.y0 * p0.y0 * c.t);
    let quad = DfaQuadConfig::default();
    let worst = [
        dfa_price(&c, &p0)?.price,
        dfa_full_price_t0(&c, &p0, &quad)?.price,
        svve_price(&c, &p0)?.price,
        svve_quadrature(&c, &p0, 64)?.price,
    ]
    .iter()
    .map(|v| (v - bs).abs() / bs)
    .fold(0.0, f64::max);
    out.push(check(
        "zero vol-of-vol collapse",
        worst < 1e-12,
        format!("max rel diff {worst:e}"),
    ));

    let mut worst = 0.0f64;
    for h in [0.1, 0.3] {
        for nu in [0.01, 0.1] {
            for rho in [-0.7, 0.0, 0.5] {
                let p = ModelParams::new(100.0, 0.3, nu, rho, h)?;
                let a = svve_price(&c, &p)?.price;
                let b = svve_quadrature(&c, &p, 64)?.price;
                worst = worst.max((a - b).abs() / b);
            }
        }
    }
    out.push(check(
        "SVVE closed form vs quadrature",
        worst < 1e-6,
        format!("max rel diff {worst:e}"),
    ));

    let p = ModelParams::new(100.0, 0.3, 0.05, -0.7, 0.1)?;
    let scaled = Contract { k: 400.0, ..c };
    let ps = ModelParams { s0: 400.0, ..p };
    let worst = [
        (dfa_price(&c, &p)?.price, dfa_price(&scaled, &ps)?.price),
        (svve_price(&c, &p)?.price, svve_price(&scaled, &ps)?.price),
    ]
    .iter()
    .map(|(a, b)| (b - 4.0 * a).abs() / b)
    .fold(0.0, f64::max);
    out.push(check(
        "homogeneity in (S0, K)",
        worst < 1e-12,
        format!("max rel diff {worst:e}"),
    ));

    let tiny = ModelParams { nu: 1e-6, ..p };
    let r = dfa_full_price_t0(&c, &tiny, &quad)?;
    let hp = tiny.hurst()?;
    let want = hp.kappa_h() / (1.5 + p.h);
    let e = (r.diagnostics["i1"] - want).abs() / want;
    out.push(check(
        "DFA integrals small vol-of-vol limit",
        e < 1e-4,
        format!("rel diff {e:e}"),
    ));

    let mc = McConfig {
        n_steps: 32,
        n_paths: 2_000,
        seed: 3,
        ..McConfig::default()
    };
    let a = mc_tvo_price(&c, &p, &mc)?;
    let b = mc_tvo_price(&c, &p, &mc)?;
    out.push(check(
        "Monte Carlo seed determinism",
        a == b,
        format!("price {}", a.price),
    ));
    Ok(out)
}
