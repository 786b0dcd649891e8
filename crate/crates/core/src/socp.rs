//! Small second-order cone program solver.
//!
//! Programs have the form
//!
//! ```text
//! maximize   f^T x
//! subject to ||A_i x + b_i|| <= c_i^T x + d_i
//!            g_j^T x <= h_j
//!            lo <= x <= hi
//! ```
//!
//! and are solved with a log-barrier interior-point method. A phase-I problem
//! with one slack shared by every cone and linear constraint finds a strictly
//! feasible start or certifies infeasibility. Newton systems are dense; each
//! cone only touches the variables it mentions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sum_i coef_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize, coef: f64) -> Self {
        Self {
            terms: vec![(i, coef)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, i: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((i, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(i, c)| c * x[*i]).sum::<f64>() + self.constant
    }
}

/// `||lhs|| <= rhs` with every component affine in `x`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub lhs: Vec<AffineExpr>,
    pub rhs: AffineExpr,
}

impl SocConstraint {
    pub fn new(lhs: Vec<AffineExpr>, rhs: AffineExpr) -> Self {
        Self { lhs, rhs }
    }

    /// `||A x + b|| - (c^T x + d)`; positive when violated.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let n2: f64 = self.lhs.iter().map(|e| e.eval(x).powi(2)).sum();
        n2.sqrt() - self.rhs.eval(x)
    }
}

/// `sum_i g_i x_i <= h`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub g: Vec<(usize, f64)>,
    pub h: f64,
}

impl LinearConstraint {
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.g.iter().map(|(i, c)| c * x[*i]).sum::<f64>() - self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProgram {
    pub n_vars: usize,
    /// Maximised.
    pub objective: Vec<f64>,
    pub soc: Vec<SocConstraint>,
    pub linear: Vec<LinearConstraint>,
    #[serde(with = "crate::serde_num::vec")]
    pub lower: Vec<f64>,
    #[serde(with = "crate::serde_num::vec")]
    pub upper: Vec<f64>,
}

impl ConeProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            soc: Vec::new(),
            linear: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n_vars],
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn add_soc(&mut self, c: SocConstraint) {
        self.soc.push(c);
    }

    pub fn add_linear(&mut self, g: Vec<(usize, f64)>, h: f64) {
        self.linear.push(LinearConstraint { g, h });
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        self.lower[i] = lo;
        self.upper[i] = hi;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars;
        if self.objective.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Solver(format!(
                "dimension mismatch: n_vars = {n}, objective {}, bounds {}/{}",
                self.objective.len(),
                self.lower.len(),
                self.upper.len()
            )));
        }
        let check_terms = |terms: &[(usize, f64)], what: &str| -> Result<()> {
            for (i, c) in terms {
                if *i >= n {
                    return Err(Error::Solver(format!("{what}: index {i} out of range")));
                }
                if !c.is_finite() {
                    return Err(Error::Solver(format!("{what}: non-finite coefficient")));
                }
            }
            Ok(())
        };
        for (j, s) in self.soc.iter().enumerate() {
            for e in s.lhs.iter().chain(std::iter::once(&s.rhs)) {
                check_terms(&e.terms, &format!("cone {j}"))?;
                if !e.constant.is_finite() {
                    return Err(Error::Solver(format!("cone {j}: non-finite constant")));
                }
            }
        }
        for (j, l) in self.linear.iter().enumerate() {
            check_terms(&l.g, &format!("linear {j}"))?;
            if !l.h.is_finite() {
                return Err(Error::Solver(format!("linear {j}: non-finite bound")));
            }
        }
        for i in 0..n {
            if !self.objective[i].is_finite() {
                return Err(Error::Solver("non-finite objective".into()));
            }
            if self.lower[i].is_nan() || self.upper[i].is_nan() || self.lower[i] > self.upper[i] {
                return Err(Error::Solver(format!("variable {i}: invalid bounds")));
            }
        }
        Ok(())
    }

    /// Dense `(A, b, c, d)` / `(g, h)` form used for the JSON dump.
    pub fn to_dense(&self) -> DenseProgram {
        let n = self.n_vars;
        let dense_row = |terms: &[(usize, f64)]| {
            let mut r = vec![0.0; n];
            for (i, c) in terms {
                r[*i] += c;
            }
            r
        };
        DenseProgram {
            n_vars: n,
            objective: self.objective.clone(),
            soc: self
                .soc
                .iter()
                .map(|s| DenseSoc {
                    a: s.lhs.iter().map(|e| dense_row(&e.terms)).collect(),
                    b: s.lhs.iter().map(|e| e.constant).collect(),
                    c: dense_row(&s.rhs.terms),
                    d: s.rhs.constant,
                })
                .collect(),
            linear: self
                .linear
                .iter()
                .map(|l| DenseLinear {
                    g: dense_row(&l.g),
                    h: l.h,
                })
                .collect(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn from_dense(d: &DenseProgram) -> Self {
        let sparse = |row: &[f64]| -> Vec<(usize, f64)> {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect()
        };
        Self {
            n_vars: d.n_vars,
            objective: d.objective.clone(),
            soc: d
                .soc
                .iter()
                .map(|s| SocConstraint {
                    lhs: s
                        .a
                        .iter()
                        .zip(&s.b)
                        .map(|(row, b)| AffineExpr {
                            terms: sparse(row),
                            constant: *b,
                        })
                        .collect(),
                    rhs: AffineExpr {
                        terms: sparse(&s.c),
                        constant: s.d,
                    },
                })
                .collect(),
            linear: d
                .linear
                .iter()
                .map(|l| LinearConstraint {
                    g: sparse(&l.g),
                    h: l.h,
                })
                .collect(),
            lower: d.lower.clone(),
            upper: d.upper.clone(),
        }
    }

    /// Write the dense JSON form:
    /// `{"n_vars", "objective", "soc": [{"a", "b", "c", "d"}], "linear": [{"g", "h"}],
    /// "lower", "upper"}`. Infinite bounds are the strings `"inf"` / `"-inf"`.
    pub fn dump_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &self.to_dense())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSoc {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLinear {
    pub g: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub soc: Vec<DenseSoc>,
    pub linear: Vec<DenseLinear>,
    #[serde(with = "crate::serde_num::vec")]
    pub lower: Vec<f64>,
    #[serde(with = "crate::serde_num::vec")]
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `||A x + b|| - (c^T x + d)` per cone.
    pub soc: Vec<f64>,
    /// `g^T x - h` per linear constraint.
    pub linear: Vec<f64>,
    /// `max(lo - x, x - hi)` per variable.
    pub bounds: Vec<f64>,
    pub max_soc: f64,
    pub max_linear: f64,
    pub max_bound: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.max_soc.max(self.max_linear).max(self.max_bound)
    }
}

pub fn check_point(p: &ConeProgram, x: &[f64]) -> ResidualReport {
    let soc: Vec<f64> = p.soc.iter().map(|s| s.residual(x)).collect();
    let linear: Vec<f64> = p.linear.iter().map(|l| l.residual(x)).collect();
    let bounds: Vec<f64> = (0..p.n_vars)
        .map(|i| (p.lower[i] - x[i]).max(x[i] - p.upper[i]))
        .collect();
    let mx = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ResidualReport {
        max_soc: mx(&soc),
        max_linear: mx(&linear),
        max_bound: mx(&bounds),
        soc,
        linear,
        bounds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasiblePoint,
    Infeasible,
    MaxIter,
}

/// How far phase I is pushed once feasibility is established.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhaseOne {
    /// Stop at the first strictly feasible iterate.
    EarlyStop,
    /// Continue towards the point of largest common margin, until the
    /// barrier gap is below `rel_gap` times that margin.
    MaxMargin { rel_gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    /// Newton step budget over both phases.
    pub max_iter: usize,
    pub phase_one: PhaseOne,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            max_iter: 2000,
            phase_one: PhaseOne::EarlyStop,
            mu: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub max_soc_residual: f64,
    pub max_linear_residual: f64,
    /// Newton steps over both phases.
    pub iterations: usize,
    /// Phase-I slack at exit; negative means a strictly feasible point was found.
    pub phase1_slack: f64,
    /// Barrier gap bound `theta / t` after each centring.
    pub gap_history: Vec<f64>,
}

impl SolveResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::FeasiblePoint)
    }
}

struct Cone {
    idx: Vec<usize>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    d: f64,
    /// Constant Hessian of `v^2 - ||r||^2`: `2 c c^T - 2 A^T A`.
    h0: DMatrix<f64>,
}

impl Cone {
    fn compile(s: &SocConstraint, extra: Option<(usize, f64)>) -> Self {
        let mut idx: Vec<usize> = s
            .lhs
            .iter()
            .chain(std::iter::once(&s.rhs))
            .flat_map(|e| e.terms.iter().map(|(i, _)| *i))
            .chain(extra.map(|(i, _)| i))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let pos = |i: usize| idx.binary_search(&i).unwrap();
        let ns = idx.len();
        let mut a = DMatrix::zeros(s.lhs.len(), ns);
        let mut b = DVector::zeros(s.lhs.len());
        for (r, e) in s.lhs.iter().enumerate() {
            for (i, v) in &e.terms {
                a[(r, pos(*i))] += v;
            }
            b[r] = e.constant;
        }
        let mut c = DVector::zeros(ns);
        for (i, v) in &s.rhs.terms {
            c[pos(*i)] += v;
        }
        if let Some((i, v)) = extra {
            c[pos(i)] += v;
        }
        let h0 = (&c * c.transpose() - a.transpose() * &a) * 2.0;
        Self {
            idx,
            a,
            b,
            c,
            d: s.rhs.constant,
            h0,
        }
    }

    fn local(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.idx.len(), self.idx.iter().map(|i| x[*i]))
    }

    /// `(v, r)` with `v = c^T x + d`, `r = A x + b`.
    fn parts(&self, xl: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.c.dot(xl) + self.d, &self.a * xl + &self.b)
    }

    fn margin_product(v: f64, r: &DVector<f64>) -> Option<f64> {
        let rn = r.norm();
        if v > rn && v.is_finite() {
            let u = (v - rn) * (v + rn);
            (u > 0.0).then_some(u)
        } else {
            None
        }
    }
}

struct Lin {
    g: Vec<(usize, f64)>,
    h: f64,
}

impl Lin {
    fn slack(&self, x: &DVector<f64>) -> f64 {
        self.h - self.g.iter().map(|(i, c)| c * x[*i]).sum::<f64>()
    }
}

/// Barrier problem `minimize t f0^T x + phi(x)` over the interior.
struct Barrier {
    n: usize,
    f0: DVector<f64>,
    cones: Vec<Cone>,
    lins: Vec<Lin>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<bool>,
}

impl Barrier {
    fn theta(&self) -> f64 {
        let bounds: usize = (0..self.n)
            .filter(|i| !self.fixed[*i])
            .map(|i| self.lower[i].is_finite() as usize + self.upper[i].is_finite() as usize)
            .sum();
        (2 * self.cones.len() + self.lins.len() + bounds) as f64
    }

    fn phi(&self, x: &DVector<f64>) -> Option<f64> {
        let mut acc = 0.0;
        for c in &self.cones {
            let (v, r) = c.parts(&c.local(x));
            acc -= Cone::margin_product(v, &r)?.ln();
        }
        for l in &self.lins {
            let s = l.slack(x);
            if !(s > 0.0) {
                return None;
            }
            acc -= s.ln();
        }
        for i in 0..self.n {
            if self.fixed[i] {
                continue;
            }
            if self.lower[i].is_finite() {
                let s = x[i] - self.lower[i];
                if !(s > 0.0) {
                    return None;
                }
                acc -= s.ln();
            }
            if self.upper[i].is_finite() {
                let s = self.upper[i] - x[i];
                if !(s > 0.0) {
                    return None;
                }
                acc -= s.ln();
            }
        }
        Some(acc)
    }

    fn value(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        self.phi(x).map(|p| t * self.f0.dot(x) + p)
    }

    fn grad_hess(&self, t: f64, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = &self.f0 * t;
        let mut h = DMatrix::zeros(n, n);
        for c in &self.cones {
            let xl = c.local(x);
            let (v, r) = c.parts(&xl);
            let rn = r.norm();
            let u = (v - rn) * (v + rn);
            let gu = &c.c * (2.0 * v) - c.a.transpose() * &r * 2.0;
            for (p, &i) in c.idx.iter().enumerate() {
                g[i] -= gu[p] / u;
                for (q, &j) in c.idx.iter().enumerate() {
                    h[(i, j)] += gu[p] * gu[q] / (u * u) - c.h0[(p, q)] / u;
                }
            }
        }
        for l in &self.lins {
            let s = l.slack(x);
            for &(i, ci) in &l.g {
                g[i] += ci / s;
                for &(j, cj) in &l.g {
                    h[(i, j)] += ci * cj / (s * s);
                }
            }
        }
        for i in 0..n {
            if self.fixed[i] {
                continue;
            }
            if self.lower[i].is_finite() {
                let s = x[i] - self.lower[i];
                g[i] -= 1.0 / s;
                h[(i, i)] += 1.0 / (s * s);
            }
            if self.upper[i].is_finite() {
                let s = self.upper[i] - x[i];
                g[i] += 1.0 / s;
                h[(i, i)] += 1.0 / (s * s);
            }
        }
        for i in 0..n {
            if self.fixed[i] {
                g[i] = 0.0;
                for j in 0..n {
                    h[(i, j)] = 0.0;
                    h[(j, i)] = 0.0;
                }
                h[(i, i)] = 1.0;
            }
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        if reg > 0.0 {
            for i in 0..n {
                m[(i, i)] += reg;
            }
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
        reg = if reg == 0.0 { scale * 1e-14 } else { reg * 100.0 };
    }
    Err(Error::Solver("singular Newton system".into()))
}

enum Center {
    Converged,
    /// Line search or inner-iteration cap ended centring before convergence.
    Stalled,
    EarlyExit,
    Budget,
}

/// Newton centring at fixed `t`; `stop` may end it early at any iterate.
fn center(
    bp: &Barrier,
    t: f64,
    x: &mut DVector<f64>,
    used: &mut usize,
    budget: usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<Center> {
    const MAX_INNER: usize = 200;
    let mut f = bp
        .value(t, x)
        .ok_or_else(|| Error::Solver("iterate left the barrier domain".into()))?;
    for _ in 0..MAX_INNER {
        if *used >= budget {
            return Ok(Center::Budget);
        }
        let (g, h) = bp.grad_hess(t, x);
        let dx = newton_direction(&g, h)?;
        let lambda2 = -g.dot(&dx);
        if lambda2 / 2.0 <= 1e-10 {
            return Ok(Center::Converged);
        }
        *used += 1;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let trial = &*x + &dx * alpha;
            if let Some(ft) = bp.value(t, &trial) {
                if ft <= f - 0.25 * alpha * lambda2 {
                    *x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(Center::Stalled);
        }
        if stop(x) {
            return Ok(Center::EarlyExit);
        }
    }
    Ok(Center::Stalled)
}

fn interior_start(p: &ConeProgram, x0: Option<&[f64]>) -> Vec<f64> {
    (0..p.n_vars)
        .map(|i| {
            let (lo, hi) = (p.lower[i], p.upper[i]);
            let guess = x0.map(|v| v[i]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) if lo == hi => lo,
                (true, true) => {
                    let w = hi - lo;
                    match guess {
                        Some(g) => g.clamp(lo + 1e-3 * w, hi - 1e-3 * w),
                        None => 0.5 * (lo + hi),
                    }
                }
                (true, false) => guess.map_or(lo + 1.0, |g| g.max(lo + 1e-6 * (1.0 + lo.abs()))),
                (false, true) => guess.map_or(hi - 1.0, |g| g.min(hi - 1e-6 * (1.0 + hi.abs()))),
                (false, false) => guess.unwrap_or(0.0),
            }
        })
        .collect()
}

fn fixed_mask(p: &ConeProgram) -> Vec<bool> {
    (0..p.n_vars).map(|i| p.lower[i] == p.upper[i]).collect()
}

fn result(
    p: &ConeProgram,
    status: SolveStatus,
    x: Vec<f64>,
    iterations: usize,
    phase1_slack: f64,
    gap_history: Vec<f64>,
) -> SolveResult {
    let r = check_point(p, &x);
    SolveResult {
        status,
        objective_value: p.objective_value(&x),
        max_soc_residual: r.max_soc,
        max_linear_residual: r.max_linear.max(r.max_bound),
        x,
        iterations,
        phase1_slack,
        gap_history,
    }
}

pub fn solve(p: &ConeProgram, opts: &SolveOptions) -> Result<SolveResult> {
    solve_from(p, opts, None)
}

/// Solve starting from a guess, which is moved into the box interior first.
pub fn solve_from(p: &ConeProgram, opts: &SolveOptions, x0: Option<&[f64]>) -> Result<SolveResult> {
    p.validate()?;
    if let Some(v) = x0 {
        if v.len() != p.n_vars {
            return Err(Error::Solver("initial point has the wrong dimension".into()));
        }
    }
    let n = p.n_vars;
    let fixed = fixed_mask(p);
    let start = interior_start(p, x0);
    let mut used = 0usize;
    let mut gaps = Vec::new();

    let r0 = check_point(p, &start);
    let strictly = r0.max_soc < 0.0 && r0.max_linear < 0.0;
    let (x_feas, slack) = if strictly && matches!(opts.phase_one, PhaseOne::EarlyStop) {
        (start, r0.max_soc.max(r0.max_linear))
    } else {
        // Phase I in (x, s): every cone and linear constraint is relaxed by s.
        let s_idx = n;
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        lower.push(-1.0);
        upper.push(f64::INFINITY);
        let mut fx = fixed.clone();
        fx.push(false);
        let mut f0 = DVector::zeros(n + 1);
        f0[s_idx] = 1.0;
        let bp = Barrier {
            n: n + 1,
            f0,
            cones: p.soc.iter().map(|s| Cone::compile(s, Some((s_idx, 1.0)))).collect(),
            lins: p
                .linear
                .iter()
                .map(|l| {
                    let mut g = l.g.clone();
                    g.push((s_idx, -1.0));
                    Lin { g, h: l.h }
                })
                .collect(),
            lower,
            upper,
            fixed: fx,
        };
        let viol = r0.max_soc.max(r0.max_linear).max(-0.5);
        let mut x = DVector::from_iterator(n + 1, start.iter().copied().chain([viol + 1.0]));
        let theta = bp.theta();
        let mut t = (theta / 5.0).max(1.0);
        let early = matches!(opts.phase_one, PhaseOne::EarlyStop);
        let stop = move |x: &DVector<f64>| early && x[s_idx] < 0.0;
        let feasible;
        loop {
            let c = center(&bp, t, &mut x, &mut used, opts.max_iter, &stop)?;
            let s = x[s_idx];
            let gap = theta / t;
            gaps.push(gap);
            match c {
                Center::EarlyExit => {
                    feasible = true;
                    break;
                }
                Center::Budget => {
                    let xs = x.as_slice()[..n].to_vec();
                    return Ok(result(p, SolveStatus::MaxIter, xs, used, s, gaps));
                }
                Center::Converged | Center::Stalled => {}
            }
            // The lower bound s - theta/t on the phase-I optimum holds on the central path only.
            if matches!(c, Center::Converged) && s - gap > opts.tol_feas {
                feasible = false;
                break;
            }
            if let PhaseOne::MaxMargin { rel_gap } = opts.phase_one {
                if s < 0.0 && gap <= rel_gap * s.abs() {
                    feasible = true;
                    break;
                }
            } else if s < 0.0 {
                feasible = true;
                break;
            }
            if gap <= 0.1 * opts.tol_feas {
                if !matches!(c, Center::Converged) {
                    // Line search exhausted at a negligible gap: the slack is as good as it gets.
                    log::debug!("phase I stalled at slack {s:.3e}, gap {gap:.1e}; deciding on the slack");
                }
                feasible = s <= opts.tol_feas;
                break;
            }
            t *= opts.mu;
        }
        let s = x[s_idx];
        let xs = x.as_slice()[..n].to_vec();
        if !feasible {
            return Ok(result(p, SolveStatus::Infeasible, xs, used, s, gaps));
        }
        if s >= 0.0 {
            // Feasible only up to tolerance: no interior to run phase II from.
            return Ok(result(p, SolveStatus::FeasiblePoint, xs, used, s, gaps));
        }
        (xs, s)
    };

    if p.objective.iter().all(|c| *c == 0.0) {
        return Ok(result(p, SolveStatus::FeasiblePoint, x_feas, used, slack, gaps));
    }

    let bp = Barrier {
        n,
        f0: -DVector::from_column_slice(&p.objective),
        cones: p.soc.iter().map(|s| Cone::compile(s, None)).collect(),
        lins: p
            .linear
            .iter()
            .map(|l| Lin {
                g: l.g.clone(),
                h: l.h,
            })
            .collect(),
        lower: p.lower.clone(),
        upper: p.upper.clone(),
        fixed,
    };
    let theta = bp.theta();
    let mut x = DVector::from_vec(x_feas);
    let never = |_: &DVector<f64>| false;
    let mut t = (theta / (1.0 + p.objective_value(x.as_slice()).abs())).max(1e-6);
    loop {
        let c = center(&bp, t, &mut x, &mut used, opts.max_iter, &never)?;
        let gap = theta / t;
        gaps.push(gap);
        let xs = x.as_slice().to_vec();
        if matches!(c, Center::Budget) {
            return Ok(result(p, SolveStatus::MaxIter, xs, used, slack, gaps));
        }
        let obj = p.objective_value(&xs);
        if gap <= opts.tol_gap * obj.abs().max(1.0) {
            return Ok(result(p, SolveStatus::Optimal, xs, used, slack, gaps));
        }
        t *= opts.mu;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(n: usize, center: &[f64], r: f64) -> SocConstraint {
        SocConstraint::new(
            (0..n)
                .map(|i| AffineExpr::var(i, 1.0).plus(-center[i]))
                .collect(),
            AffineExpr::constant(r),
        )
    }

    #[test]
    fn unit_disc_maximum() {
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 0.0];
        p.add_soc(SocConstraint::new(
            vec![AffineExpr::var(0, 1.0), AffineExpr::constant(0.0)],
            AffineExpr::constant(1.0),
        ));
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.objective_value, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn symmetric_disc_maximum() {
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 1.0];
        p.add_soc(disc(2, &[0.0, 0.0], 2f64.sqrt()));
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.objective_value, 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 1e-4);
        assert!(r.max_soc_residual <= 1e-8);
    }

    #[test]
    fn disjoint_discs_are_infeasible() {
        let mut p = ConeProgram::new(2);
        p.add_soc(disc(2, &[0.0, 0.0], 1.0));
        p.add_soc(disc(2, &[3.0, 0.0], 1.0));
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.phase1_slack > 0.0);
    }

    #[test]
    fn touching_discs_are_feasible_to_tolerance() {
        let mut p = ConeProgram::new(2);
        p.add_soc(disc(2, &[0.0, 0.0], 1.0));
        p.add_soc(disc(2, &[2.0, 0.0], 1.0));
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::FeasiblePoint);
        assert!(r.max_soc_residual <= 1e-8);
    }

    #[test]
    fn linear_and_bounds_respected() {
        // maximize x + 2y, x + y <= 1, 0 <= x, y <= 0.7
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 2.0];
        p.add_linear(vec![(0, 1.0), (1, 1.0)], 1.0);
        p.set_bounds(0, 0.0, f64::INFINITY);
        p.set_bounds(1, f64::NEG_INFINITY, 0.7);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.objective_value, 1.7, epsilon = 1e-7);
    }

    #[test]
    fn fixed_variables_stay_put() {
        let mut p = ConeProgram::new(3);
        p.objective = vec![1.0, 1.0, 1.0];
        p.add_soc(disc(3, &[0.0, 0.0, 0.0], 1.0));
        p.set_bounds(2, 0.5, 0.5);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.x[2], 0.5);
        let expect = 0.5 + 2.0 * (0.75f64 / 2.0).sqrt();
        assert_abs_diff_eq!(r.objective_value, expect, epsilon = 1e-7);
    }

    #[test]
    fn check_point_hand_values() {
        let mut p = ConeProgram::new(2);
        p.add_soc(disc(2, &[0.0, 0.0], 1.0));
        p.add_linear(vec![(0, 1.0), (1, -2.0)], 0.5);
        p.set_bounds(1, -1.0, 1.0);
        let inside = check_point(&p, &[0.1, 0.2]);
        assert!(inside.max() <= 0.0);
        let boundary = check_point(&p, &[0.6, 0.8]);
        assert_abs_diff_eq!(boundary.soc[0], 0.0, epsilon = 1e-15);
        let out = check_point(&p, &[3.0, 4.0]);
        assert_abs_diff_eq!(out.soc[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.linear[0], 3.0 - 8.0 - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.bounds[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gap_decreases_geometrically() {
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 0.3];
        p.add_soc(disc(2, &[0.2, 0.1], 1.5));
        let r = solve(&p, &SolveOptions::default()).unwrap();
        let phase2: Vec<f64> = r.gap_history.iter().rev().take(4).copied().collect();
        for w in phase2.windows(2) {
            assert_abs_diff_eq!(w[1] / w[0], 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ball_oracle_in_many_dimensions() {
        // maximize f^T x over ||x - x0|| <= r gives f^T x0 + r ||f||.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 10, 30] {
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = rng.random_range(0.5..2.0);
            let mut p = ConeProgram::new(n);
            p.objective = f.clone();
            p.add_soc(disc(n, &x0, r));
            let sol = solve(&p, &SolveOptions::default()).unwrap();
            let fn_: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expect = f.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() + r * fn_;
            assert_abs_diff_eq!(sol.objective_value, expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn dense_round_trip() {
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 0.0];
        p.add_soc(disc(2, &[0.5, 0.0], 1.0));
        p.add_linear(vec![(1, 1.0)], 0.3);
        p.set_bounds(0, 0.0, 2.0);
        let d = p.to_dense();
        let json = serde_json::to_string(&d).unwrap();
        let back: DenseProgram = serde_json::from_str(&json).unwrap();
        let q = ConeProgram::from_dense(&back);
        let a = solve(&p, &SolveOptions::default()).unwrap();
        let b = solve(&q, &SolveOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn invalid_programs_rejected() {
        let mut p = ConeProgram::new(2);
        p.add_linear(vec![(5, 1.0)], 0.0);
        assert!(solve(&p, &SolveOptions::default()).is_err());
        let mut q = ConeProgram::new(1);
        q.set_bounds(0, 1.0, 0.0);
        assert!(solve(&q, &SolveOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let mut p = ConeProgram::new(3);
        p.objective = vec![0.3, -0.2, 1.0];
        p.add_soc(disc(3, &[0.1, 0.2, 0.3], 1.0));
        p.add_soc(disc(3, &[0.5, 0.0, 0.0], 1.2));
        let a = solve(&p, &SolveOptions::default()).unwrap();
        let b = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
