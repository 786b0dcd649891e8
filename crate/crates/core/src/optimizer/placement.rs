//! One successive-convex-approximation step for UxNB placement.
//!
//! With `eta = zeta^4`, slack amplitudes `beta_km <= true beta_km` in the
//! signal, `nu_km >= true beta_km` in the interference and `t_k >= sqrt(Den_k)`,
//! the step solves
//!
//! ```text
//! maximize   zeta
//! subject to (2/t^l - t/t^l^2) * sum_m w_km beta_km >= zeta^2           (rotated cone)
//!            2/beta^l - beta/beta^l^2 >= cbar_km ||p_u,k - p_m||          (cone)
//!            nu_km * d_lin,km >= 1 / cbar_km                             (rotated cone)
//!            t_k >= ||[sqrt((a_km + s2_H) P_k') nu_k'm]_{k',m}, sqrt(c_k)|| (cone)
//!            UxNBs inside the area, slacks positive
//! ```
//!
//! where `w_km = sqrt(M G^2 N S P_k) gamma_m sqrt(P_km)`, `a_km = M G^2 rho_m^2 P_km`,
//! `d_lin` is the first-order expansion of the link distance (a global
//! under-estimate, so `nu` over-estimates the gain) and `cbar_km = 1 / sqrt(eta_km beta0)`.
//! Backhaul gains and excess-loss factors are frozen at the expansion point.
//!
//! The program is written in scaled variables `x / L`, `beta / beta^l`,
//! `nu / beta^l`, `t / t^l` and `zeta / zeta_ref` so every entry is of order one.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGains;
use crate::error::{Error, Result};
use crate::rate::{min_sinr, PowerAllocation, SinrModel};
use crate::scenario::{access_geometry_at, NetworkScenario};
use crate::socp::{self, AffineExpr, ConeProgram, SocConstraint, SolveOptions, SolveStatus};

/// Linearisation point of a placement step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    pub uxnb_xy: Vec<[f64; 2]>,
    /// `t^l_k = sqrt(Den_k)`.
    pub t_l: Vec<f64>,
    /// `beta^l_km`, row-major.
    pub beta_l: Vec<f64>,
    /// `SINR_k^(1/4)`.
    pub zeta_l: Vec<f64>,
    /// Excess-loss factor per link, frozen.
    pub excess: Vec<f64>,
    pub beta0: f64,
    /// Closed-form inputs at the expansion point; backhaul terms stay frozen.
    pub model: SinrModel,
}

impl ScaState {
    pub fn at(scenario: &NetworkScenario, gains: &LinkGains, alloc: &PowerAllocation) -> Result<Self> {
        let model = SinrModel::new(scenario, gains);
        let sinr = model.sinr(alloc)?;
        let kn = scenario.num_users();
        let t_l: Vec<f64> = (0..kn)
            .map(|k| model.interference_plus_noise(k, alloc).sqrt())
            .collect();
        let zeta_l: Vec<f64> = sinr.iter().map(|s| s.powf(0.25)).collect();
        if let Some(k) = (0..kn).find(|&k| !(zeta_l[k] > 0.0 && t_l[k] > 0.0)) {
            return Err(Error::Domain(format!(
                "non-positive linearisation point: user {k} has zero SINR"
            )));
        }
        Ok(Self {
            uxnb_xy: scenario.uxnbs.iter().map(|u| [u[0], u[1]]).collect(),
            t_l,
            beta_l: gains.access.iter().map(|a| a.beta()).collect(),
            zeta_l,
            excess: gains.access.iter().map(|a| a.eta).collect(),
            beta0: gains.access.first().map_or(1.0, |a| a.beta0),
            model,
        })
    }

    /// Closed-form model at new positions with backhaul and excess loss frozen.
    pub fn frozen_model(&self, scenario: &NetworkScenario, xy: &[[f64; 2]]) -> SinrModel {
        let mut m = self.model.clone();
        let mn = m.num_uxnbs;
        for k in 0..m.num_users {
            for j in 0..mn {
                let p = [xy[j][0], xy[j][1], scenario.uxnbs[j][2]];
                let d = access_geometry_at(scenario.users[k], p).distance_m;
                m.beta2[k * mn + j] = self.excess[k * mn + j] * self.beta0 / (d * d);
            }
        }
        m
    }
}

/// Variable layout of the compiled step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementLayout {
    pub num_users: usize,
    pub num_uxnbs: usize,
    /// Position unit (m).
    pub length_scale: f64,
    /// `zeta_ref = min_k zeta^l_k`.
    pub zeta_ref: f64,
}

impl PlacementLayout {
    pub fn x(&self, m: usize) -> usize {
        2 * m
    }
    pub fn y(&self, m: usize) -> usize {
        2 * m + 1
    }
    pub fn zeta(&self) -> usize {
        2 * self.num_uxnbs
    }
    pub fn t(&self, k: usize) -> usize {
        self.zeta() + 1 + k
    }
    pub fn beta(&self, k: usize, m: usize) -> usize {
        self.t(self.num_users) + k * self.num_uxnbs + m
    }
    pub fn nu(&self, k: usize, m: usize) -> usize {
        self.beta(self.num_users, 0) + k * self.num_uxnbs + m
    }
    pub fn n_vars(&self) -> usize {
        self.nu(self.num_users, 0)
    }
}

#[derive(Debug, Clone)]
pub struct PlacementProgram {
    pub program: ConeProgram,
    pub layout: PlacementLayout,
    /// Strictly feasible start built from the expansion point.
    pub start: Vec<f64>,
}

fn dist(user: [f64; 2], x: f64, y: f64, z: f64) -> f64 {
    ((user[0] - x).powi(2) + (user[1] - y).powi(2) + z * z).sqrt()
}

/// Compile the convex placement step around `state`.
pub fn compile_placement_step(
    scenario: &NetworkScenario,
    alloc: &PowerAllocation,
    state: &ScaState,
) -> Result<PlacementProgram> {
    let m = &state.model;
    let (kn, mn) = (m.num_users, m.num_uxnbs);
    if state.t_l.iter().chain(&state.beta_l).chain(&state.zeta_l).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("non-positive linearisation point".into()));
    }
    let area = &scenario.area;
    let scale = (area.x_max - area.x_min).max(area.y_max - area.y_min);
    let zeta_ref = state.zeta_l.iter().copied().fold(f64::INFINITY, f64::min);
    let lay = PlacementLayout {
        num_users: kn,
        num_uxnbs: mn,
        length_scale: scale,
        zeta_ref,
    };
    let mut p = ConeProgram::new(lay.n_vars());
    p.objective[lay.zeta()] = 1.0;
    let users = &scenario.users;
    let z = |j: usize| scenario.uxnbs[j][2];
    let d_l = |k: usize, j: usize| dist(users[k], state.uxnb_xy[j][0], state.uxnb_xy[j][1], z(j));
    let mg2 = mn as f64 * m.g * m.g;

    // Signal: rotated cone U_k V_k >= r_k^2 zeta^2.
    for k in 0..kn {
        let c = (mg2 * m.n * m.s * m.p_user[k]).sqrt();
        let w: Vec<f64> = (0..mn)
            .map(|j| c * m.gamma2(j).sqrt() * alloc.get(k, j).sqrt() * state.beta_l[k * mn + j])
            .collect();
        let u_l: f64 = w.iter().sum();
        let r = zeta_ref / state.zeta_l[k];
        let mut diff = AffineExpr::var(lay.t(k), 1.0).plus(-2.0);
        let mut sum = AffineExpr::var(lay.t(k), -1.0).plus(2.0);
        for (j, wj) in w.iter().enumerate() {
            diff = diff.term(lay.beta(k, j), wj / u_l);
            sum = sum.term(lay.beta(k, j), wj / u_l);
        }
        p.add_soc(SocConstraint::new(
            vec![AffineExpr::var(lay.zeta(), 2.0 * r), diff],
            sum,
        ));
    }

    // Signal slack below the true gain: ||p_u - p_m|| / d^l <= 2 - beta_hat.
    for k in 0..kn {
        for j in 0..mn {
            let dl = d_l(k, j);
            p.add_soc(SocConstraint::new(
                vec![
                    AffineExpr::var(lay.x(j), -scale / dl).plus(users[k][0] / dl),
                    AffineExpr::var(lay.y(j), -scale / dl).plus(users[k][1] / dl),
                    AffineExpr::constant(z(j) / dl),
                ],
                AffineExpr::var(lay.beta(k, j), -1.0).plus(2.0),
            ));
        }
    }

    // Interference slack above the true gain: nu_hat * q >= 1, q = d_lin / d^l.
    for k in 0..kn {
        for j in 0..mn {
            let dl = d_l(k, j);
            let [xl, yl] = state.uxnb_xy[j];
            let gx = (xl - users[k][0]) / (dl * dl);
            let gy = (yl - users[k][1]) / (dl * dl);
            let q = AffineExpr::var(lay.x(j), gx * scale)
                .term(lay.y(j), gy * scale)
                .plus(1.0 - gx * xl - gy * yl);
            let mut diff = AffineExpr::var(lay.nu(k, j), 1.0).plus(-q.constant);
            let mut sum = AffineExpr::var(lay.nu(k, j), 1.0).plus(q.constant);
            for (i, c) in &q.terms {
                diff = diff.term(*i, -c);
                sum = sum.term(*i, *c);
            }
            p.add_soc(SocConstraint::new(vec![AffineExpr::constant(2.0), diff], sum));
        }
    }

    // Interference-plus-noise: t_hat_k >= ||...|| / t^l_k.
    for k in 0..kn {
        let tl = state.t_l[k];
        let a: Vec<f64> = (0..mn).map(|j| mg2 * m.rho2[j] * alloc.get(k, j)).collect();
        let mut lhs = Vec::with_capacity(kn * mn + 1);
        for kp in 0..kn {
            for j in 0..mn {
                let c = ((a[j] + m.sigma2_haps) * m.p_user[kp]).sqrt() * state.beta_l[kp * mn + j] / tl;
                if c > 0.0 {
                    lhs.push(AffineExpr::var(lay.nu(kp, j), c));
                }
            }
        }
        let cst = m.sigma2 * a.iter().sum::<f64>() + m.sigma2_haps * mn as f64 * m.sigma2;
        lhs.push(AffineExpr::constant(cst.sqrt() / tl));
        p.add_soc(SocConstraint::new(lhs, AffineExpr::var(lay.t(k), 1.0)));
    }

    for j in 0..mn {
        p.set_bounds(lay.x(j), area.x_min / scale, area.x_max / scale);
        p.set_bounds(lay.y(j), area.y_min / scale, area.y_max / scale);
    }
    p.set_bounds(lay.zeta(), 0.0, f64::INFINITY);
    for k in 0..kn {
        p.set_bounds(lay.t(k), 0.0, f64::INFINITY);
        for j in 0..mn {
            p.set_bounds(lay.beta(k, j), 0.0, f64::INFINITY);
            p.set_bounds(lay.nu(k, j), 0.0, f64::INFINITY);
        }
    }

    let start = interior_point(scenario, state, &lay, &p);
    Ok(PlacementProgram {
        program: p,
        layout: lay,
        start,
    })
}

/// A point strictly inside every constraint, near the expansion point.
fn interior_point(
    scenario: &NetworkScenario,
    state: &ScaState,
    lay: &PlacementLayout,
    p: &ConeProgram,
) -> Vec<f64> {
    let (kn, mn) = (lay.num_users, lay.num_uxnbs);
    let scale = lay.length_scale;
    let mut x = vec![0.0; lay.n_vars()];
    for j in 0..mn {
        for (idx, v) in [(lay.x(j), state.uxnb_xy[j][0]), (lay.y(j), state.uxnb_xy[j][1])] {
            let (lo, hi) = (p.lower[idx], p.upper[idx]);
            let w = hi - lo;
            x[idx] = (v / scale).clamp(lo + 1e-4 * w, hi - 1e-4 * w);
        }
    }
    for k in 0..kn {
        for j in 0..mn {
            let (xm, ym) = (x[lay.x(j)] * scale, x[lay.y(j)] * scale);
            let d = dist(scenario.users[k], xm, ym, scenario.uxnbs[j][2]);
            let [xl, yl] = state.uxnb_xy[j];
            let dl = dist(scenario.users[k], xl, yl, scenario.uxnbs[j][2]);
            x[lay.beta(k, j)] = (2.0 - d / dl - 0.01).max(1e-3);
            let q = 1.0
                + ((xl - scenario.users[k][0]) * (xm - xl) + (yl - scenario.users[k][1]) * (ym - yl))
                    / (dl * dl);
            x[lay.nu(k, j)] = 1.0 / q.max(1e-3) + 0.01;
        }
    }
    // t from the interference cones, zeta from the signal cones.
    let n_sig = kn;
    let n_beta = kn * mn;
    let n_nu = kn * mn;
    for k in 0..kn {
        let cone = &p.soc[n_sig + n_beta + n_nu + k];
        let norm = cone.lhs.iter().map(|e| e.eval(&x).powi(2)).sum::<f64>().sqrt();
        x[lay.t(k)] = norm + 0.01;
    }
    let mut zeta = f64::INFINITY;
    for k in 0..kn {
        let cone = &p.soc[k];
        let diff = cone.lhs[1].eval(&x);
        let sum = cone.rhs.eval(&x);
        let uv = (sum * sum - diff * diff) / 4.0;
        let r = lay.zeta_ref / state.zeta_l[k];
        zeta = zeta.min(uv.max(0.0).sqrt() / r);
    }
    x[lay.zeta()] = 0.9 * zeta;
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementStep {
    pub status: SolveStatus,
    pub newton_steps: usize,
    /// Proposed UxNB positions.
    pub uxnb_xy: Vec<[f64; 2]>,
    /// `(zeta_ref zeta_hat)^4`, the surrogate's guaranteed min-SINR.
    pub surrogate_min_sinr: f64,
    /// Min-SINR of the frozen-gain model at the proposed positions.
    pub frozen_min_sinr: f64,
    /// Min-SINR at the expansion point.
    pub start_min_sinr: f64,
}

impl PlacementStep {
    /// The surrogate is a lower bound of the frozen model at the solution.
    pub fn lower_bound_holds(&self, rel_tol: f64) -> bool {
        self.surrogate_min_sinr <= self.frozen_min_sinr * (1.0 + rel_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementOptions {
    pub solver: SolveOptions,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self {
            solver: SolveOptions {
                tol_gap: 1e-7,
                ..SolveOptions::default()
            },
        }
    }
}

/// Solve one placement step from the current geometry.
pub fn placement_step(
    scenario: &NetworkScenario,
    gains: &LinkGains,
    alloc: &PowerAllocation,
    opts: &PlacementOptions,
) -> Result<PlacementStep> {
    let state = ScaState::at(scenario, gains, alloc)?;
    let prog = compile_placement_step(scenario, alloc, &state)?;
    let r = socp::solve_from(&prog.program, &opts.solver, Some(&prog.start))?;
    if !r.is_feasible() && r.status != SolveStatus::MaxIter {
        return Err(Error::Solver(format!(
            "placement step returned {:?}",
            r.status
        )));
    }
    let lay = prog.layout;
    let xy: Vec<[f64; 2]> = (0..lay.num_uxnbs)
        .map(|j| {
            let a = &scenario.area;
            [
                (r.x[lay.x(j)] * lay.length_scale).clamp(a.x_min, a.x_max),
                (r.x[lay.y(j)] * lay.length_scale).clamp(a.y_min, a.y_max),
            ]
        })
        .collect();
    let frozen = state.frozen_model(scenario, &xy);
    let frozen_min = min_sinr(&frozen.sinr(alloc)?).0;
    let start_min = min_sinr(&state.model.sinr(alloc)?).0;
    Ok(PlacementStep {
        status: r.status,
        newton_steps: r.iterations,
        uxnb_xy: xy,
        surrogate_min_sinr: (lay.zeta_ref * r.x[lay.zeta()]).powi(4),
        frozen_min_sinr: frozen_min,
        start_min_sinr: start_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, ScenarioParams};

    fn setup(k: usize, m: usize, seed: u64) -> (NetworkScenario, LinkGains, PowerAllocation) {
        let p = ScenarioParams {
            num_users: k,
            num_uxnbs: m,
            ..Default::default()
        };
        let s = build_scenario(&p, seed).unwrap();
        let g = LinkGains::compute(&s).unwrap();
        let a = PowerAllocation::uniform_for(&s);
        (s, g, a)
    }

    #[test]
    fn start_point_is_strictly_feasible() {
        let (s, g, a) = setup(4, 4, 2);
        let st = ScaState::at(&s, &g, &a).unwrap();
        let prog = compile_placement_step(&s, &a, &st).unwrap();
        let r = socp::check_point(&prog.program, &prog.start);
        assert!(r.max() < 0.0, "{:?}", r.max());
    }

    #[test]
    fn expansion_point_is_tight() {
        // At the expansion point the scaled slacks are all one and zeta_hat = 1
        // is feasible with the weakest user's signal cone active.
        let (s, g, a) = setup(3, 4, 5);
        let st = ScaState::at(&s, &g, &a).unwrap();
        let prog = compile_placement_step(&s, &a, &st).unwrap();
        let lay = prog.layout;
        let mut x = vec![1.0; lay.n_vars()];
        for j in 0..4 {
            x[lay.x(j)] = st.uxnb_xy[j][0] / lay.length_scale;
            x[lay.y(j)] = st.uxnb_xy[j][1] / lay.length_scale;
        }
        let r = socp::check_point(&prog.program, &x);
        assert!(r.max_soc <= 1e-9, "{}", r.max_soc);
        let weakest = (0..3).min_by(|a, b| st.zeta_l[*a].total_cmp(&st.zeta_l[*b])).unwrap();
        assert!(r.soc[weakest].abs() <= 1e-9);
    }

    #[test]
    fn taylor_expansion_is_a_global_under_estimator() {
        for &tl in &[0.3, 1.0, 7.0] {
            for i in 1..50 {
                let t = i as f64 * 0.2;
                assert!(1.0 / t >= -(t - tl) / (tl * tl) + 1.0 / tl - 1e-15);
            }
            assert_eq!(-(tl - tl) / (tl * tl) + 1.0 / tl, 1.0 / tl);
        }
    }

    #[test]
    fn step_does_not_lose_and_bounds_hold() {
        for seed in 0..4 {
            let (s, g, a) = setup(4, 4, seed);
            let st = placement_step(&s, &g, &a, &PlacementOptions::default()).unwrap();
            assert_eq!(st.status, SolveStatus::Optimal);
            assert!(st.surrogate_min_sinr >= st.start_min_sinr * (1.0 - 1e-6));
            assert!(st.lower_bound_holds(1e-9), "{st:?}");
            for p in &st.uxnb_xy {
                assert!(s.area.contains(p[0], p[1]));
            }
        }
    }

    #[test]
    fn single_user_pulls_uxnb_overhead() {
        // Noise-limited access so the SINR grows as the UxNB approaches.
        let (mut s, _, _) = setup(1, 1, 0);
        s.users = vec![[500.0, 500.0]];
        s.uxnbs = vec![[150.0, 800.0, 120.0]];
        s.radio.sigma2_uxnb_w = 1e-9;
        let mut xy = [150.0, 800.0];
        let mut last = 0.0;
        for _ in 0..14 {
            let sc = s.with_uxnb_xy(&[xy]);
            let g = LinkGains::compute(&sc).unwrap();
            let a = PowerAllocation::uniform_for(&sc);
            let st = placement_step(&sc, &g, &a, &PlacementOptions::default()).unwrap();
            assert!(st.start_min_sinr >= last);
            last = st.start_min_sinr;
            xy = st.uxnb_xy[0];
        }
        let err = ((xy[0] - 500.0).powi(2) + (xy[1] - 500.0).powi(2)).sqrt();
        assert!(err < 2.0, "{xy:?}");
    }
}
