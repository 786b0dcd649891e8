//! Comparison schemes: aerial cellular and terrestrial cell-free.
//!
//! Both reuse the aerial cell-free closed form.
//!
//! * Aerial cellular: each user is served by the UxNB with the largest
//!   `beta^2_km` (ties to the lower index), whose budget is split equally
//!   among its users. Every other `P_km` is zero. All interference terms are
//!   kept, because every user still transmits at full power.
//! * Terrestrial cell-free: APs on the same grid at 10 m, NLoS access with
//!   path-loss exponent 3.7, and an ideal backhaul (`rho = gamma = tau = 1`,
//!   no HAPS noise, `S = G = 1`). The expression reduces to the match-filter
//!   cell-free uplink SINR and is invariant to a common scaling of `P_km`.

use serde::{Deserialize, Serialize};

use crate::channel::{reference_gain, LinkGains};
use crate::error::{Error, Result};
use crate::rate::{PowerAllocation, Scheme, SinrModel, SinrReport};
use crate::scenario::{access_geometry_at, NetworkScenario};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    /// Serving UxNB of each user.
    pub serving: Vec<usize>,
    /// Users served by each UxNB.
    pub load: Vec<usize>,
}

impl Association {
    /// Strongest-gain association; ties go to the lowest UxNB index.
    pub fn max_gain(gains: &LinkGains) -> Self {
        let (kn, mn) = (gains.num_users, gains.num_uxnbs);
        let mut serving = Vec::with_capacity(kn);
        let mut load = vec![0; mn];
        for k in 0..kn {
            let mut best = 0;
            for m in 1..mn {
                if gains.beta2(k, m) > gains.beta2(k, best) {
                    best = m;
                }
            }
            serving.push(best);
            load[best] += 1;
        }
        Self { serving, load }
    }

    pub fn mask(&self) -> Vec<bool> {
        let mn = self.load.len();
        let mut mask = vec![false; self.serving.len() * mn];
        for (k, &m) in self.serving.iter().enumerate() {
            mask[k * mn + m] = true;
        }
        mask
    }

    /// `P_km = P_m / load_m` on serving links, zero elsewhere.
    pub fn allocation(&self, p_uxnb: &[f64]) -> PowerAllocation {
        let mn = self.load.len();
        let mut a = PowerAllocation::zeros(self.serving.len(), mn);
        for (k, &m) in self.serving.iter().enumerate() {
            a.set(k, m, p_uxnb[m] / self.load[m] as f64);
        }
        a
    }
}

pub fn aerial_cellular_sinr(scenario: &NetworkScenario, gains: &LinkGains) -> Result<SinrReport> {
    let assoc = Association::max_gain(gains);
    aerial_cellular_sinr_with(scenario, gains, &assoc.allocation(&scenario.p_uxnb_w))
}

/// Cellular SINR for an allocation that is already zero off the serving links.
pub fn aerial_cellular_sinr_with(
    scenario: &NetworkScenario,
    gains: &LinkGains,
    alloc: &PowerAllocation,
) -> Result<SinrReport> {
    for k in 0..alloc.num_users {
        let active = (0..alloc.num_uxnbs).filter(|m| alloc.get(k, *m) > 0.0).count();
        if active > 1 {
            return Err(Error::Domain(format!(
                "user {k} is allocated power on {active} UxNBs in the cellular scheme"
            )));
        }
    }
    SinrModel::new(scenario, gains).report(Scheme::AerialCellular, alloc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrestrialParams {
    pub ap_height_m: f64,
    pub path_loss_exponent: f64,
}

impl Default for TerrestrialParams {
    fn default() -> Self {
        Self {
            ap_height_m: 10.0,
            path_loss_exponent: 3.7,
        }
    }
}

/// Ground APs at the UxNB grid positions, lowered to the AP height.
pub fn terrestrial_scenario(scenario: &NetworkScenario, params: &TerrestrialParams) -> NetworkScenario {
    let mut s = scenario.clone();
    for u in &mut s.uxnbs {
        u[2] = params.ap_height_m;
    }
    s
}

/// `beta^2 = beta0 d^-n`, no LoS component.
pub fn terrestrial_beta2(distance_m: f64, beta0: f64, exponent: f64) -> Result<f64> {
    if !(distance_m >= 1.0) {
        return Err(Error::Domain(format!(
            "AP distance {distance_m} m below the 1 m reference"
        )));
    }
    Ok(beta0 * distance_m.powf(-exponent))
}

/// Closed-form model with the ideal-backhaul limit applied.
pub fn terrestrial_model(scenario: &NetworkScenario, params: &TerrestrialParams) -> Result<SinrModel> {
    let ts = terrestrial_scenario(scenario, params);
    let beta0 = reference_gain(ts.radio.f_sub6_hz);
    let (kn, mn) = (ts.num_users(), ts.num_uxnbs());
    let mut beta2 = Vec::with_capacity(kn * mn);
    for k in 0..kn {
        for m in 0..mn {
            let d = access_geometry_at(ts.users[k], ts.uxnbs[m]).distance_m;
            beta2.push(terrestrial_beta2(d, beta0, params.path_loss_exponent)?);
        }
    }
    Ok(SinrModel {
        num_users: kn,
        num_uxnbs: mn,
        beta2,
        rho2: vec![1.0; mn],
        tau: vec![1.0; mn],
        p_user: ts.p_user_w.clone(),
        p_uxnb: ts.p_uxnb_w.clone(),
        sigma2: ts.radio.sigma2_uxnb_w,
        sigma2_haps: 0.0,
        n: ts.radio.n() as f64,
        g: 1.0,
        s: 1.0,
    })
}

pub fn terrestrial_cellfree_sinr(
    scenario: &NetworkScenario,
    params: &TerrestrialParams,
    alloc: &PowerAllocation,
) -> Result<SinrReport> {
    terrestrial_model(scenario, params)?.report(Scheme::TerrestrialCellfree, alloc)
}
