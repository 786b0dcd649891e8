//! Max-min SINR power split by bisection over a target `eta`.
//!
//! For a fixed `eta` the SINR constraints become cones in `T_km = sqrt(P_km)`:
//!
//! ```text
//! || D_k vec(T) || <= L_k(T) / sqrt(eta)          per user
//! || T_{.m} ||    <= sqrt(P_m)                     per UxNB
//! T_km >= 0
//! ```
//!
//! Each user cone is divided by `||D_k T_u||` at the uniform split so that
//! every constraint in the program is of order one.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::channel::LinkGains;
use crate::error::{Error, Result};
use crate::rate::{min_sinr, PowerAllocation, SinrModel};
use crate::scenario::NetworkScenario;
use crate::socp::{self, AffineExpr, ConeProgram, SocConstraint, SolveOptions, SolveResult};

/// Power-split problem for a fixed geometry. `mask[k * M + m]` is false for
/// links that must carry no power.
#[derive(Debug, Clone)]
pub struct PowerProblem {
    pub model: SinrModel,
    pub mask: Vec<bool>,
}

impl PowerProblem {
    pub fn new(model: SinrModel) -> Self {
        let n = model.num_users * model.num_uxnbs;
        Self {
            model,
            mask: vec![true; n],
        }
    }

    pub fn with_mask(model: SinrModel, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != model.num_users * model.num_uxnbs {
            return Err(Error::Domain("mask dimensions do not match".into()));
        }
        Ok(Self { model, mask })
    }

    pub fn from_scenario(scenario: &NetworkScenario, gains: &LinkGains) -> Self {
        Self::new(SinrModel::new(scenario, gains))
    }

    fn idx(&self, k: usize, m: usize) -> usize {
        k * self.model.num_uxnbs + m
    }

    /// Equal split of each budget among the links the mask allows.
    pub fn uniform_allocation(&self) -> PowerAllocation {
        let (kn, mn) = (self.model.num_users, self.model.num_uxnbs);
        let mut a = PowerAllocation::zeros(kn, mn);
        for m in 0..mn {
            let load = (0..kn).filter(|k| self.mask[self.idx(*k, m)]).count();
            for k in 0..kn {
                if self.mask[self.idx(k, m)] {
                    a.set(k, m, self.model.p_uxnb[m] / load as f64);
                }
            }
        }
        a
    }

    /// Users that cannot reach the HAPS through any allowed link.
    pub fn unreachable_users(&self) -> Vec<usize> {
        let m = &self.model;
        (0..m.num_users)
            .filter(|&k| {
                m.p_user[k] <= 0.0
                    || (0..m.num_uxnbs).all(|j| {
                        !self.mask[self.idx(k, j)]
                            || m.gamma2(j) * m.beta2(k, j) <= 0.0
                            || m.p_uxnb[j] <= 0.0
                    })
            })
            .collect()
    }

    /// Rows of `D_k` as coefficients on `T_km`, and its constant coordinate.
    fn interference_coefs(&self, k: usize) -> (Vec<f64>, f64) {
        let m = &self.model;
        let mg2 = m.num_uxnbs as f64 * m.g * m.g;
        let coefs = (0..m.num_uxnbs)
            .map(|j| {
                if self.mask[self.idx(k, j)] {
                    (mg2 * m.rho2[j] * (m.column_load(j) + m.sigma2)).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        (coefs, m.haps_noise_term().sqrt())
    }

    fn signal_coefs(&self, k: usize) -> Vec<f64> {
        let m = &self.model;
        let c = (m.num_uxnbs as f64 * m.g * m.g * m.n * m.s * m.p_user[k]).sqrt();
        (0..m.num_uxnbs)
            .map(|j| {
                if self.mask[self.idx(k, j)] {
                    c * (m.gamma2(j) * m.beta2(k, j)).sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Feasibility program for min-SINR >= `eta`.
    pub fn compile(&self, eta: f64) -> Result<ConeProgram> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("target SINR must be > 0, got {eta}")));
        }
        self.model.validate()?;
        let (kn, mn) = (self.model.num_users, self.model.num_uxnbs);
        let t_unif = self.uniform_allocation().sqrt();
        let mut p = ConeProgram::new(kn * mn);
        let inv = 1.0 / eta.sqrt();
        for k in 0..kn {
            let (d, d0) = self.interference_coefs(k);
            let scale = ((0..mn)
                .map(|j| (d[j] * t_unif[self.idx(k, j)]).powi(2))
                .sum::<f64>()
                + d0 * d0)
                .sqrt();
            if !(scale > 0.0) {
                return Err(Error::Degenerate(format!(
                    "user {k} has no interference or noise term"
                )));
            }
            let mut lhs: Vec<AffineExpr> = (0..mn)
                .filter(|&j| self.mask[self.idx(k, j)])
                .map(|j| AffineExpr::var(self.idx(k, j), d[j] / scale))
                .collect();
            lhs.push(AffineExpr::constant(d0 / scale));
            let l = self.signal_coefs(k);
            let mut rhs = AffineExpr::default();
            for j in 0..mn {
                rhs = rhs.term(self.idx(k, j), l[j] * inv / scale);
            }
            p.add_soc(SocConstraint::new(lhs, rhs));
            // Without a constant noise term the row is scale free and t = 0
            // satisfies every target, so pin its amplitude sum away from zero.
            // Any row direction scaled to this sum still fits every budget.
            if d0 == 0.0 {
                let floor = 0.5
                    * self
                        .model
                        .p_uxnb
                        .iter()
                        .map(|pm| (pm / kn as f64).sqrt())
                        .fold(f64::INFINITY, f64::min);
                let g = (0..mn)
                    .filter(|&j| self.mask[self.idx(k, j)])
                    .map(|j| (self.idx(k, j), -1.0))
                    .collect();
                p.add_linear(g, -floor);
            }
        }
        for j in 0..mn {
            let root = self.model.p_uxnb[j].sqrt();
            let lhs = (0..kn)
                .filter(|&k| self.mask[self.idx(k, j)])
                .map(|k| AffineExpr::var(self.idx(k, j), 1.0 / root))
                .collect();
            p.add_soc(SocConstraint::new(lhs, AffineExpr::constant(1.0)));
            for k in 0..kn {
                let hi = if self.mask[self.idx(k, j)] { f64::INFINITY } else { 0.0 };
                p.set_bounds(self.idx(k, j), 0.0, hi);
            }
        }
        Ok(p)
    }

    /// Square-root amplitudes to an allocation, clipped onto the budgets.
    pub fn allocation_from_sqrt(&self, t: &[f64]) -> PowerAllocation {
        let (kn, mn) = (self.model.num_users, self.model.num_uxnbs);
        let mut a = PowerAllocation::from_sqrt(kn, mn, &t.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
        for m in 0..mn {
            let sum = a.column_sum(m);
            if sum > self.model.p_uxnb[m] {
                let f = self.model.p_uxnb[m] / sum;
                for k in 0..kn {
                    a.set(k, m, a.get(k, m) * f);
                }
            }
        }
        a
    }

    /// Scale down the rows of users above the minimum SINR until every user
    /// sits exactly at it. SINR of a row scaled by `c` is `c^2 A / (c^2 B + C)`,
    /// increasing in `c`, so the minimum is unchanged and budgets stay met.
    pub fn equalize(&self, alloc: &PowerAllocation) -> Result<PowerAllocation> {
        let m = &self.model;
        let sinr = m.sinr(alloc)?;
        let (target, _) = min_sinr(&sinr);
        let mut out = alloc.clone();
        if !(target > 0.0) {
            return Ok(out);
        }
        let c = m.haps_noise_term();
        for k in 0..m.num_users {
            if sinr[k] <= target {
                continue;
            }
            let a = m.signal_amplitude(k, alloc).powi(2);
            let b = m.interference_plus_noise(k, alloc) - c;
            let c2 = target * c / (a - target * b);
            if !(c2 > 0.0 && c2 < 1.0) {
                continue;
            }
            for j in 0..m.num_uxnbs {
                out.set(k, j, alloc.get(k, j) * c2);
            }
        }
        Ok(out)
    }

    pub fn probe(&self, eta: f64, opts: &SolveOptions) -> Result<(bool, SolveResult)> {
        let prog = self.compile(eta)?;
        let x0 = self.uniform_allocation().sqrt();
        let r = socp::solve_from(&prog, opts, Some(&x0))?;
        Ok((r.is_feasible(), r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    pub eta_min: f64,
    pub eta_max: f64,
    pub epsilon: f64,
    pub max_doublings: usize,
    /// Trim users above the minimum SINR so the returned split has equal SINRs.
    pub equalize: bool,
    pub solver: SolveOptions,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self {
            eta_min: 0.0,
            eta_max: 1500.0,
            epsilon: 0.01,
            max_doublings: 8,
            equalize: true,
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityProbe {
    pub eta: f64,
    pub feasible: bool,
    pub newton_steps: usize,
    pub phase1_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionOutcome {
    pub alloc: PowerAllocation,
    /// Largest target proven feasible.
    pub eta_min: f64,
    pub eta_max: f64,
    pub epsilon: f64,
    /// Feasibility solves performed.
    pub iterations: usize,
    pub doublings: usize,
    pub probes: Vec<FeasibilityProbe>,
    /// Closed-form SINR at `alloc`.
    pub sinr: Vec<f64>,
    /// SINR spread of the solver point before equalisation.
    pub raw_spread: f64,
}

impl BisectionOutcome {
    pub fn min_sinr(&self) -> f64 {
        min_sinr(&self.sinr).0
    }

    pub fn spread(&self) -> f64 {
        spread(&self.sinr)
    }

    /// True when no probe was feasible above an infeasible one.
    pub fn is_monotone(&self) -> bool {
        is_nested(&self.probes)
    }
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max - min_sinr(v).0
}

pub fn is_nested(probes: &[FeasibilityProbe]) -> bool {
    let lowest_infeasible = probes
        .iter()
        .filter(|p| !p.feasible)
        .map(|p| p.eta)
        .fold(f64::INFINITY, f64::min);
    probes.iter().all(|p| !p.feasible || p.eta < lowest_infeasible)
}

/// Bisection on the common SINR target.
pub fn bisection_power(problem: &PowerProblem, opts: &BisectionOptions) -> Result<BisectionOutcome> {
    if !(opts.epsilon > 0.0) || !(opts.eta_max > opts.eta_min) || opts.eta_min < 0.0 {
        return Err(Error::config(
            "bisection",
            "need 0 <= eta_min < eta_max and epsilon > 0",
        ));
    }
    let dead = problem.unreachable_users();
    if !dead.is_empty() {
        return Err(Error::Degenerate(format!(
            "users {dead:?} have no usable link; every eta > 0 is infeasible"
        )));
    }
    let mut lo = opts.eta_min;
    let mut hi = opts.eta_max;
    let mut best: Option<Vec<f64>> = None;
    let mut probes = Vec::new();
    let mut doublings = 0;
    loop {
        let mut any_infeasible = false;
        while hi - lo > opts.epsilon {
            let eta = 0.5 * (lo + hi);
            let (ok, r) = problem.probe(eta, &opts.solver)?;
            probes.push(FeasibilityProbe {
                eta,
                feasible: ok,
                newton_steps: r.iterations,
                phase1_slack: r.phase1_slack,
            });
            if r.status == socp::SolveStatus::MaxIter {
                return Err(Error::Solver(format!(
                    "feasibility solve at eta = {eta} hit the iteration limit"
                )));
            }
            if ok {
                lo = eta;
                best = Some(r.x);
            } else {
                hi = eta;
                any_infeasible = true;
            }
        }
        if any_infeasible || doublings >= opts.max_doublings {
            if !any_infeasible {
                warn!("bisection bracket still feasible at eta = {hi} after {doublings} doublings");
            }
            break;
        }
        doublings += 1;
        lo = hi;
        hi *= 2.0;
        warn!("every probe was feasible; doubling the upper bracket to {hi}");
    }
    let raw = match &best {
        Some(t) => problem.allocation_from_sqrt(t),
        None => problem.uniform_allocation(),
    };
    let raw_sinr = problem.model.sinr(&raw)?;
    let raw_spread = spread(&raw_sinr);
    let alloc = if opts.equalize {
        problem.equalize(&raw)?
    } else {
        raw
    };
    let sinr = problem.model.sinr(&alloc)?;
    Ok(BisectionOutcome {
        alloc,
        eta_min: lo,
        eta_max: hi,
        epsilon: opts.epsilon,
        iterations: probes.len(),
        doublings,
        probes,
        sinr,
        raw_spread,
    })
}

/// Feasibility of each target on a grid, for checking that feasible sets nest.
pub fn feasibility_profile(
    problem: &PowerProblem,
    etas: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<FeasibilityProbe>> {
    etas.iter()
        .map(|&eta| {
            let (ok, r) = problem.probe(eta, opts)?;
            Ok(FeasibilityProbe {
                eta,
                feasible: ok,
                newton_steps: r.iterations,
                phase1_slack: r.phase1_slack,
            })
        })
        .collect()
}

/// Compile the power-feasibility program for a scenario at target `eta`.
pub fn compile_power_feasibility(
    scenario: &NetworkScenario,
    gains: &LinkGains,
    eta: f64,
) -> Result<ConeProgram> {
    PowerProblem::from_scenario(scenario, gains).compile(eta)
}
