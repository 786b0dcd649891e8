//! Seeded sweeps over random user drops.
//!
//! Work items are `(sweep value, drop)` pairs. Drop `d` always uses the child
//! seed `derive_seed(seed, DropSeed, d)`, so every scheme and sweep value sees
//! the same user positions, and rows come back in item order whatever the
//! number of worker threads.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{LinkGains, LosMode};
use crate::error::{Error, Result};
use crate::linkchain::{validate_closed_form, McOptions, ValidationReport};
use crate::optimizer::{optimize_scheme, BcdOptions, BcdProblem, OptimizeMode};
use crate::rate::{to_db, Scheme};
use crate::rng::{derive_seed, Domain};
use crate::scenario::{build_scenario, EnvironmentKind, NetworkScenario, ScenarioParams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DROPS: usize = 100;
pub const MIN_CDF_DROPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "P_m_dbm")]
    PmDbm,
    M,
    K,
    S,
    #[serde(rename = "environment")]
    Environment,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PmDbm => "P_m_dbm",
            Self::M => "M",
            Self::K => "K",
            Self::S => "S",
            Self::Environment => "environment",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P_m_dbm" => Ok(Self::PmDbm),
            "M" => Ok(Self::M),
            "K" => Ok(Self::K),
            "S" => Ok(Self::S),
            "environment" => Ok(Self::Environment),
            _ => Err(Error::config(
                "sweep.param",
                format!("unknown parameter '{s}' (P_m_dbm | M | K | S | environment)"),
            )),
        }
    }
}

/// A sweep value, numeric or an environment name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Num(f64),
    Text(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Num(v) => write!(f, "{v}"),
            Self::Text(s) => f.write_str(s),
        }
    }
}

impl SweepValue {
    /// Parse a command-line token for `param`.
    pub fn parse_for(param: SweepParam, token: &str) -> Result<Self> {
        let t = token.trim();
        match param {
            SweepParam::Environment => Ok(Self::Text(t.to_string())),
            _ => t
                .parse::<f64>()
                .map(Self::Num)
                .map_err(|_| Error::config("sweep.values", format!("'{t}' is not a number"))),
        }
    }

    fn number(&self, param: SweepParam) -> Result<f64> {
        match self {
            Self::Num(v) => Ok(*v),
            Self::Text(s) => s
                .parse()
                .map_err(|_| Error::config("sweep.values", format!("{}: '{s}' is not a number", param.as_str()))),
        }
    }

    fn count(&self, param: SweepParam, max: usize) -> Result<usize> {
        let v = self.number(param)?;
        if v.fract() != 0.0 || v < 1.0 || v > max as f64 {
            return Err(Error::config(
                "sweep.values",
                format!("{} must be an integer in [1, {max}], got {v}", param.as_str()),
            ));
        }
        Ok(v as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
}

impl Sweep {
    /// Scenario parameters for one sweep value.
    pub fn apply(&self, base: &ScenarioParams, value: &SweepValue) -> Result<ScenarioParams> {
        let mut p = base.clone();
        match self.param {
            SweepParam::PmDbm => {
                let v = value.number(self.param)?;
                if !(-30.0..=60.0).contains(&v) {
                    return Err(Error::config("sweep.values", format!("P_m_dbm {v} outside [-30, 60]")));
                }
                p.p_uxnb_dbm = v;
            }
            SweepParam::M => p.num_uxnbs = value.count(self.param, 256)?,
            SweepParam::K => p.num_users = value.count(self.param, 256)?,
            SweepParam::S => p.s_antennas = value.count(self.param, 4096)?,
            SweepParam::Environment => {
                let name = match value {
                    SweepValue::Text(s) => s.clone(),
                    SweepValue::Num(v) => v.to_string(),
                };
                let kind: EnvironmentKind = name.parse()?;
                if kind == EnvironmentKind::Custom && p.custom_environment.is_none() {
                    return Err(Error::config("sweep.values", "custom environment needs custom_environment"));
                }
                p.environment = kind;
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub enabled: bool,
    pub trials: usize,
    /// Imposed LoS probability on every access link.
    pub force_los: Option<f64>,
    /// Drop molecular absorption on the backhaul.
    pub force_tau_one: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            trials: McOptions::default().trials,
            force_los: None,
            force_tau_one: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: ScenarioParams,
    pub scheme: Scheme,
    pub optimize: OptimizeMode,
    pub sweep: Option<Sweep>,
    pub drops: usize,
    pub seed: u64,
    pub mc: McConfig,
    pub bcd: BcdOptions,
    /// Fill `runtime_ms`; off by default so outputs are byte-reproducible.
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            scenario: ScenarioParams::default(),
            scheme: Scheme::AerialCellfree,
            optimize: OptimizeMode::Joint,
            sweep: None,
            drops: DEFAULT_DROPS,
            seed: 1,
            mc: McConfig::default(),
            bcd: BcdOptions::default(),
            record_runtime: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)
            .map_err(|e| Error::config("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("expected {CONFIG_SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.drops == 0 {
            return Err(Error::config("drops", "must be >= 1"));
        }
        self.scenario.validate()?;
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::config("sweep.values", "empty value list"));
            }
            for v in &sw.values {
                sw.apply(&self.scenario, v)?;
            }
        }
        if let Some(p) = self.mc.force_los {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("mc.force_los", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Sweep parameter name and values; a run without a sweep has one
    /// unnamed point at the base parameters.
    fn points(&self) -> Result<Vec<(String, SweepValue, ScenarioParams)>> {
        match &self.sweep {
            None => Ok(vec![(String::new(), SweepValue::Text(String::new()), self.scenario.clone())]),
            Some(sw) => sw
                .values
                .iter()
                .map(|v| Ok((sw.param.as_str().to_string(), v.clone(), sw.apply(&self.scenario, v)?)))
                .collect(),
        }
    }

    pub fn drop_scenario(&self, params: &ScenarioParams, drop: usize) -> Result<NetworkScenario> {
        build_scenario(params, derive_seed(self.seed, Domain::DropSeed, drop as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: String,
    pub scheme: Scheme,
    pub optimize: OptimizeMode,
    pub drop: usize,
    pub min_sinr_db: f64,
    pub min_rate_bps_hz: f64,
    pub iters_outer: usize,
    pub iters_bisection: usize,
    pub runtime_ms: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedItem {
    pub sweep_value: String,
    pub drop: usize,
    pub reason: String,
    pub solver_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedItem>,
}

impl RunOutput {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        if self.rows.is_empty() {
            wr.write_record(ROW_HEADER)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn any_solver_failure(&self) -> bool {
        self.failures.iter().any(|f| f.solver_failure)
    }

    /// Mean and median min-rate per sweep value, in sweep order.
    pub fn summarize(&self) -> Vec<SweepSummary> {
        let mut out: Vec<SweepSummary> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some(s) if s.sweep_value == r.sweep_value => s.rates.push(r.min_rate_bps_hz),
                _ => out.push(SweepSummary {
                    sweep_value: r.sweep_value.clone(),
                    scheme: r.scheme,
                    optimize: r.optimize,
                    rates: vec![r.min_rate_bps_hz],
                }),
            }
        }
        out
    }
}

/// Sidecar written next to a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub failures: Vec<FailedItem>,
}

impl RunMeta {
    pub fn new(config: &ExperimentConfig, out: &RunOutput) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            rows: out.rows.len(),
            failures: out.failures.clone(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub const ROW_HEADER: [&str; 11] = [
    "sweep_param",
    "sweep_value",
    "scheme",
    "optimize",
    "drop",
    "min_sinr_db",
    "min_rate_bps_hz",
    "iters_outer",
    "iters_bisection",
    "runtime_ms",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep_value: String,
    pub scheme: Scheme,
    pub optimize: OptimizeMode,
    pub rates: Vec<f64>,
}

impl SweepSummary {
    pub fn mean(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }

    pub fn median(&self) -> f64 {
        let mut v = self.rates.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

fn run_item(cfg: &ExperimentConfig, name: &str, value: &SweepValue, params: &ScenarioParams, drop: usize) -> Result<ResultRow> {
    let t0 = Instant::now();
    let scenario = cfg.drop_scenario(params, drop)?;
    let problem = BcdProblem::new(&scenario, cfg.scheme)?;
    let init = problem.initial_allocation()?;
    let opts = BcdOptions {
        mode: cfg.optimize,
        ..cfg.bcd.clone()
    };
    let trace = optimize_scheme(&problem, &init, &opts)?;
    let last = trace.last();
    Ok(ResultRow {
        sweep_param: name.to_string(),
        sweep_value: value.to_string(),
        scheme: cfg.scheme,
        optimize: cfg.optimize,
        drop,
        min_sinr_db: to_db(last.min_sinr),
        min_rate_bps_hz: last.min_rate,
        iters_outer: trace.outer_iterations(),
        iters_bisection: trace.total_bisection_iters(),
        runtime_ms: if cfg.record_runtime { t0.elapsed().as_millis() as u64 } else { 0 },
        seed: cfg.seed,
    })
}

/// Every `(sweep value, drop)` item. A failing item is logged and skipped.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let points = cfg.points()?;
    let items: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.drops).map(move |d| (p, d)))
        .collect();
    info!(
        "running {} items: {} x {} drops, scheme {}, optimize {}",
        items.len(),
        points.len(),
        cfg.drops,
        cfg.scheme.as_str(),
        cfg.optimize
    );
    let results: Vec<Result<ResultRow>> = items
        .par_iter()
        .map(|&(p, d)| {
            let (name, value, params) = &points[p];
            run_item(cfg, name, value, params, d)
        })
        .collect();
    let mut out = RunOutput {
        rows: Vec::with_capacity(items.len()),
        failures: Vec::new(),
    };
    for (&(p, d), r) in items.iter().zip(results) {
        match r {
            Ok(row) => out.rows.push(row),
            Err(e) => {
                warn!("row {} = {}, drop {d} aborted: {e}", points[p].0, points[p].1);
                out.failures.push(FailedItem {
                    sweep_value: points[p].1.to_string(),
                    drop: d,
                    reason: e.to_string(),
                    solver_failure: e.is_solver(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub sweep_param: String,
    pub sweep_value: String,
    pub scheme: Scheme,
    pub optimize: OptimizeMode,
    pub min_rate_bps_hz: f64,
    pub cdf: f64,
    pub seed: u64,
}

/// Empirical CDF of the per-drop min rate for each sweep value.
pub fn cdf_experiment(cfg: &ExperimentConfig) -> Result<(Vec<CdfRow>, RunOutput)> {
    if cfg.drops < MIN_CDF_DROPS {
        return Err(Error::config(
            "drops",
            format!("a CDF needs at least {MIN_CDF_DROPS} drops, got {}", cfg.drops),
        ));
    }
    let out = run(cfg)?;
    let rows = empirical_cdf(&out.rows);
    Ok((rows, out))
}

pub fn empirical_cdf(rows: &[ResultRow]) -> Vec<CdfRow> {
    let mut cdf = Vec::with_capacity(rows.len());
    let mut start = 0;
    while start < rows.len() {
        let end = start + rows[start..].iter().take_while(|r| r.sweep_value == rows[start].sweep_value).count();
        let mut group: Vec<&ResultRow> = rows[start..end].iter().collect();
        group.sort_by(|a, b| a.min_rate_bps_hz.total_cmp(&b.min_rate_bps_hz));
        let n = group.len() as f64;
        for (i, r) in group.iter().enumerate() {
            cdf.push(CdfRow {
                sweep_param: r.sweep_param.clone(),
                sweep_value: r.sweep_value.clone(),
                scheme: r.scheme,
                optimize: r.optimize,
                min_rate_bps_hz: r.min_rate_bps_hz,
                cdf: (i + 1) as f64 / n,
                seed: r.seed,
            });
        }
        start = end;
    }
    cdf
}

pub fn write_cdf_csv<W: Write>(rows: &[CdfRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Chain against closed form on drop 0 at the base parameters, with the
/// allocation the configured optimisation mode produces.
pub fn mc_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    if cfg.mc.trials == 0 {
        return Err(Error::config("mc.trials", "validation needs a positive trial count"));
    }
    let scenario = cfg.drop_scenario(&cfg.scenario, 0)?;
    let problem = BcdProblem::new(&scenario, Scheme::AerialCellfree)?;
    let opts = BcdOptions {
        mode: match cfg.optimize {
            OptimizeMode::Joint | OptimizeMode::Power => OptimizeMode::Power,
            _ => OptimizeMode::None,
        },
        ..cfg.bcd.clone()
    };
    let los = cfg.mc.force_los.map_or(LosMode::Model, LosMode::Forced);
    let mut gains = LinkGains::compute_with(&scenario, los)?;
    if cfg.mc.force_tau_one {
        gains = gains.without_absorption();
    }
    let alloc = if opts.mode == OptimizeMode::None {
        problem.initial_allocation()?
    } else {
        let pp = crate::optimizer::PowerProblem::new(crate::rate::SinrModel::new(&scenario, &gains));
        crate::optimizer::bisection_power(&pp, &opts.bisection)?.alloc
    };
    let mc = McOptions {
        trials: cfg.mc.trials,
        seed: cfg.seed,
        ..Default::default()
    };
    validate_closed_form(&scenario, &gains, &alloc, &mc)
}
