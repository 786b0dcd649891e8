//! Alternating power split and placement steps.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::debug;
use serde::{Deserialize, Serialize};

use super::placement::{placement_step, PlacementOptions};
use super::power::{bisection_power, BisectionOptions, PowerProblem};
use crate::baselines::{terrestrial_model, Association, TerrestrialParams};
use crate::channel::LinkGains;
use crate::error::{Error, Result};
use crate::rate::{min_sinr, rate_from_sinr, PowerAllocation, Scheme, SinrModel};
use crate::scenario::NetworkScenario;
use crate::socp::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    None,
    Power,
    Placement,
    Joint,
}

impl OptimizeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Power => "power",
            Self::Placement => "placement",
            Self::Joint => "joint",
        }
    }

    pub fn power(&self) -> bool {
        matches!(self, Self::Power | Self::Joint)
    }

    pub fn placement(&self) -> bool {
        matches!(self, Self::Placement | Self::Joint)
    }
}

impl fmt::Display for OptimizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "power" => Ok(Self::Power),
            "placement" => Ok(Self::Placement),
            "joint" => Ok(Self::Joint),
            _ => Err(Error::config(
                "optimize",
                format!("unknown mode '{s}' (none | power | placement | joint)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdOptions {
    pub mode: OptimizeMode,
    pub max_outer: usize,
    /// Relative min-SINR change that ends the loop.
    pub tol: f64,
    /// Halvings of a rejected placement step before it is dropped.
    pub max_step_halvings: usize,
    pub bisection: BisectionOptions,
    pub placement: PlacementOptions,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            mode: OptimizeMode::Joint,
            max_outer: 15,
            tol: 1e-3,
            max_step_halvings: 4,
            bisection: BisectionOptions::default(),
            placement: PlacementOptions::default(),
        }
    }
}

/// A scheme bound to its scenario. The cellular association is fixed from
/// the initial geometry.
#[derive(Debug, Clone)]
pub struct BcdProblem {
    pub scenario: NetworkScenario,
    pub scheme: Scheme,
    pub mask: Vec<bool>,
    pub terrestrial: TerrestrialParams,
}

impl BcdProblem {
    pub fn new(scenario: &NetworkScenario, scheme: Scheme) -> Result<Self> {
        let n = scenario.num_users() * scenario.num_uxnbs();
        let mask = match scheme {
            Scheme::AerialCellular => Association::max_gain(&LinkGains::compute(scenario)?).mask(),
            _ => vec![true; n],
        };
        Ok(Self {
            scenario: scenario.clone(),
            scheme,
            mask,
            terrestrial: TerrestrialParams::default(),
        })
    }

    pub fn model_at(&self, scenario: &NetworkScenario) -> Result<SinrModel> {
        match self.scheme {
            Scheme::TerrestrialCellfree => terrestrial_model(scenario, &self.terrestrial),
            _ => Ok(SinrModel::new(scenario, &LinkGains::compute(scenario)?)),
        }
    }

    pub fn power_problem(&self, scenario: &NetworkScenario) -> Result<PowerProblem> {
        PowerProblem::with_mask(self.model_at(scenario)?, self.mask.clone())
    }

    /// Equal split of each budget among the users the scheme lets it serve.
    pub fn initial_allocation(&self) -> Result<PowerAllocation> {
        Ok(self.power_problem(&self.scenario)?.uniform_allocation())
    }

    pub fn supports_placement(&self) -> bool {
        self.scheme != Scheme::TerrestrialCellfree
    }

    /// The cellular split stays equal among each UxNB's served users.
    pub fn supports_power(&self) -> bool {
        self.scheme != Scheme::AerialCellular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaRecord {
    pub status: SolveStatus,
    pub newton_steps: usize,
    pub surrogate_min_sinr: f64,
    pub frozen_min_sinr: f64,
    /// True min-SINR at the accepted step, or at the full step if none was.
    pub candidate_min_sinr: f64,
    /// Fraction of the proposed move taken; zero when rejected.
    pub step_scale: f64,
    pub accepted: bool,
    pub lower_bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub iteration: usize,
    pub min_sinr: f64,
    pub min_rate: f64,
    pub alloc: PowerAllocation,
    pub positions: Vec<[f64; 2]>,
    pub bisection_iters: usize,
    pub power_accepted: bool,
    pub sca: Option<ScaRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub scheme: Scheme,
    pub mode: OptimizeMode,
    /// Entry 0 is the starting point.
    pub iterations: Vec<OuterIteration>,
    pub converged: bool,
}

#[derive(Serialize)]
struct CsvRow {
    iteration: usize,
    min_sinr: f64,
    min_rate: f64,
    bisection_iters: usize,
}

impl OptimizationTrace {
    pub fn last(&self) -> &OuterIteration {
        self.iterations.last().expect("trace holds the starting point")
    }

    /// Outer iterations performed, not counting the starting point.
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn total_bisection_iters(&self) -> usize {
        self.iterations.iter().map(|i| i.bisection_iters).sum()
    }

    pub fn min_sinr_series(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.min_sinr).collect()
    }

    pub fn is_non_decreasing(&self, rel_tol: f64) -> bool {
        self.iterations
            .windows(2)
            .all(|w| w[1].min_sinr >= w[0].min_sinr * (1.0 - rel_tol))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// `iteration,min_sinr,min_rate,bisection_iters`, one row per entry.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for it in &self.iterations {
            wr.serialize(CsvRow {
                iteration: it.iteration,
                min_sinr: it.min_sinr,
                min_rate: it.min_rate,
                bisection_iters: it.bisection_iters,
            })?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Aerial cell-free optimisation from `init_alloc` at the scenario's positions.
pub fn bcd_optimize(
    scenario: &NetworkScenario,
    init_alloc: &PowerAllocation,
    opts: &BcdOptions,
) -> Result<OptimizationTrace> {
    optimize_scheme(&BcdProblem::new(scenario, Scheme::AerialCellfree)?, init_alloc, opts)
}

fn true_min(problem: &BcdProblem, scenario: &NetworkScenario, alloc: &PowerAllocation) -> Result<f64> {
    Ok(min_sinr(&problem.model_at(scenario)?.sinr(alloc)?).0)
}

fn record(
    iteration: usize,
    sinr: f64,
    alloc: &PowerAllocation,
    scenario: &NetworkScenario,
    bisection_iters: usize,
    power_accepted: bool,
    sca: Option<ScaRecord>,
) -> Result<OuterIteration> {
    Ok(OuterIteration {
        iteration,
        min_sinr: sinr,
        min_rate: rate_from_sinr(sinr)?,
        alloc: alloc.clone(),
        positions: scenario.uxnbs.iter().map(|u| [u[0], u[1]]).collect(),
        bisection_iters,
        power_accepted,
        sca,
    })
}

fn placement_move(
    problem: &BcdProblem,
    scenario: &NetworkScenario,
    alloc: &PowerAllocation,
    current: f64,
    opts: &BcdOptions,
) -> Result<(Option<(NetworkScenario, f64)>, ScaRecord)> {
    let gains = LinkGains::compute(scenario)?;
    let step = placement_step(scenario, &gains, alloc, &opts.placement)?;
    let from: Vec<[f64; 2]> = scenario.uxnbs.iter().map(|u| [u[0], u[1]]).collect();
    let mut rec = ScaRecord {
        status: step.status,
        newton_steps: step.newton_steps,
        surrogate_min_sinr: step.surrogate_min_sinr,
        frozen_min_sinr: step.frozen_min_sinr,
        candidate_min_sinr: f64::NAN,
        step_scale: 0.0,
        accepted: false,
        lower_bound_holds: step.lower_bound_holds(1e-6),
    };
    let mut scale = 1.0;
    for _ in 0..=opts.max_step_halvings {
        let xy: Vec<[f64; 2]> = from
            .iter()
            .zip(&step.uxnb_xy)
            .map(|(a, b)| [a[0] + scale * (b[0] - a[0]), a[1] + scale * (b[1] - a[1])])
            .collect();
        let cand = scenario.with_uxnb_xy(&xy);
        let s = true_min(problem, &cand, alloc)?;
        if rec.candidate_min_sinr.is_nan() {
            rec.candidate_min_sinr = s;
        }
        if s >= current {
            rec.candidate_min_sinr = s;
            rec.step_scale = scale;
            rec.accepted = true;
            return Ok((Some((cand, s)), rec));
        }
        scale *= 0.5;
    }
    Ok((None, rec))
}

/// Run the outer loop for any scheme. Placement is skipped for the
/// terrestrial scheme, whose APs are fixed, and power for the cellular one.
pub fn optimize_scheme(
    problem: &BcdProblem,
    init_alloc: &PowerAllocation,
    opts: &BcdOptions,
) -> Result<OptimizationTrace> {
    if opts.max_outer == 0 || !(opts.tol >= 0.0) {
        return Err(Error::config("bcd", "need max_outer >= 1 and tol >= 0"));
    }
    let do_power = opts.mode.power() && problem.supports_power();
    let do_place = opts.mode.placement() && problem.supports_placement();
    let mut scenario = problem.scenario.clone();
    let mut alloc = init_alloc.clone();
    let mut current = true_min(problem, &scenario, &alloc)?;
    let mut trace = OptimizationTrace {
        scheme: problem.scheme,
        mode: opts.mode,
        iterations: vec![record(0, current, &alloc, &scenario, 0, false, None)?],
        converged: !do_power && !do_place,
    };
    if trace.converged {
        return Ok(trace);
    }
    for it in 1..=opts.max_outer {
        let wrap = |e: Error| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        };
        let before = current;
        let mut sca = None;
        if do_place {
            let (moved, rec) = placement_move(problem, &scenario, &alloc, current, opts).map_err(wrap)?;
            if let Some((s, v)) = moved {
                scenario = s;
                current = v;
            }
            sca = Some(rec);
        }
        let mut bisection_iters = 0;
        let mut power_accepted = false;
        if do_power {
            let pp = problem.power_problem(&scenario).map_err(wrap)?;
            let out = bisection_power(&pp, &opts.bisection).map_err(wrap)?;
            bisection_iters = out.iterations;
            let v = out.min_sinr();
            if v >= current {
                alloc = out.alloc;
                current = v;
                power_accepted = true;
            }
        }
        debug!("outer iteration {it}: min SINR {before} -> {current}");
        trace
            .iterations
            .push(record(it, current, &alloc, &scenario, bisection_iters, power_accepted, sca).map_err(wrap)?);
        // With fixed positions one bisection already reaches the fixed point.
        let change = (current - before).abs() / before.abs().max(f64::MIN_POSITIVE);
        if !do_place || change < opts.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}
