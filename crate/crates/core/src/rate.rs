//! Closed-form use-and-then-forget SINR of the aerial cell-free uplink.
//!
//! For user k,
//!
//! ```text
//!            M G^2 N S P_k (sum_m gamma_m sqrt(P_km) beta_km)^2
//! SINR_k = -----------------------------------------------------------------------------
//!          M G^2 sum_m rho_m^2 P_km L_m + M G^2 sum_m rho_m^2 P_km s2 + s2_H (X + M s2)
//! ```
//!
//! with `L_m = sum_k' beta_k'm^2 P_k'` and `X = sum_m L_m`. The denominator
//! carries `rho^2` rather than `gamma^2` because the absorbed share of the
//! backhaul signal is re-emitted: `tau rho^2 + (1 - tau) rho^2 = rho^2`.
//!
//! [`SinrTerms`] splits the same quantity into desired signal, user
//! interference, forwarded UxNB noise, re-emission and HAPS noise, using the
//! normalisation moment `F^2 = N / M^2 (X + M s2)`.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGains;
use crate::error::{Error, Result};
use crate::scenario::NetworkScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AerialCellfree,
    AerialCellular,
    TerrestrialCellfree,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::AerialCellfree => "aerial_cellfree",
            Scheme::AerialCellular => "aerial_cellular",
            Scheme::TerrestrialCellfree => "terrestrial_cellfree",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "aerial_cellfree" => Ok(Scheme::AerialCellfree),
            "aerial_cellular" => Ok(Scheme::AerialCellular),
            "terrestrial_cellfree" => Ok(Scheme::TerrestrialCellfree),
            other => Err(Error::config("scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

/// Per-(k, m) power split `P_km` of the UxNB budgets, row-major in `(k, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub num_users: usize,
    pub num_uxnbs: usize,
    pub p: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(num_users: usize, num_uxnbs: usize) -> Self {
        Self {
            num_users,
            num_uxnbs,
            p: vec![0.0; num_users * num_uxnbs],
        }
    }

    /// Equal split `P_km = P_m / K`.
    pub fn uniform(p_uxnb: &[f64], num_users: usize) -> Self {
        let m_n = p_uxnb.len();
        let mut p = Vec::with_capacity(num_users * m_n);
        for _ in 0..num_users {
            p.extend(p_uxnb.iter().map(|pm| pm / num_users as f64));
        }
        Self {
            num_users,
            num_uxnbs: m_n,
            p,
        }
    }

    pub fn uniform_for(scenario: &NetworkScenario) -> Self {
        Self::uniform(&scenario.p_uxnb_w, scenario.num_users())
    }

    /// From square-root amplitudes `T_km = sqrt(P_km)`.
    pub fn from_sqrt(num_users: usize, num_uxnbs: usize, t: &[f64]) -> Self {
        Self {
            num_users,
            num_uxnbs,
            p: t.iter().map(|x| x * x).collect(),
        }
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.p[k * self.num_uxnbs + m]
    }

    pub fn set(&mut self, k: usize, m: usize, v: f64) {
        self.p[k * self.num_uxnbs + m] = v;
    }

    pub fn sqrt(&self) -> Vec<f64> {
        self.p.iter().map(|x| x.sqrt()).collect()
    }

    pub fn column_sum(&self, m: usize) -> f64 {
        (0..self.num_users).map(|k| self.get(k, m)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    /// Largest relative overshoot of a UxNB budget, `max_m (sum_k P_km - P_m) / P_m`.
    pub fn max_budget_violation(&self, p_uxnb: &[f64]) -> f64 {
        (0..self.num_uxnbs)
            .map(|m| (self.column_sum(m) - p_uxnb[m]) / p_uxnb[m])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self, p_uxnb: &[f64], rel_tol: f64) -> Result<()> {
        if self.p.len() != self.num_users * self.num_uxnbs || p_uxnb.len() != self.num_uxnbs {
            return Err(Error::Domain("allocation dimensions do not match".into()));
        }
        if self.p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Domain("allocations must be finite and >= 0".into()));
        }
        let v = self.max_budget_violation(p_uxnb);
        if v > rel_tol {
            return Err(Error::Domain(format!(
                "UxNB power budget exceeded by {:.3e} (relative)",
                v
            )));
        }
        Ok(())
    }
}

/// Per-user SINR breakdown in the normalisation of the term-wise derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrTerms {
    /// `E[DS_k]^2`.
    pub desired_power: f64,
    pub user_interference: f64,
    pub forwarded_noise: f64,
    pub reemission: f64,
    pub haps_noise: f64,
}

impl SinrTerms {
    pub fn interference_plus_noise(&self) -> f64 {
        self.user_interference + self.forwarded_noise + self.reemission + self.haps_noise
    }

    pub fn sinr(&self) -> f64 {
        self.desired_power / self.interference_plus_noise()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrReport {
    pub scheme: Scheme,
    #[serde(with = "crate::serde_num::vec")]
    pub sinr: Vec<f64>,
    /// Spectral efficiency, bits/s/Hz.
    #[serde(with = "crate::serde_num::vec")]
    pub rate: Vec<f64>,
    pub terms: Vec<SinrTerms>,
    /// `F_NORM^2`.
    pub f_norm2: f64,
}

impl SinrReport {
    pub fn min_sinr(&self) -> (f64, usize) {
        min_sinr(&self.sinr)
    }

    pub fn min_rate(&self) -> f64 {
        rate_from_sinr(self.min_sinr().0).unwrap_or(0.0)
    }
}

/// Everything the closed form depends on, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrModel {
    pub num_users: usize,
    pub num_uxnbs: usize,
    /// `beta^2_km`, row-major.
    pub beta2: Vec<f64>,
    pub rho2: Vec<f64>,
    pub tau: Vec<f64>,
    pub p_user: Vec<f64>,
    pub p_uxnb: Vec<f64>,
    pub sigma2: f64,
    pub sigma2_haps: f64,
    pub n: f64,
    pub g: f64,
    pub s: f64,
}

impl SinrModel {
    pub fn new(scenario: &NetworkScenario, gains: &LinkGains) -> Self {
        Self {
            num_users: scenario.num_users(),
            num_uxnbs: scenario.num_uxnbs(),
            beta2: gains.access.iter().map(|a| a.beta2).collect(),
            rho2: gains.backhaul.iter().map(|b| b.rho2).collect(),
            tau: gains.backhaul.iter().map(|b| b.tau).collect(),
            p_user: scenario.p_user_w.clone(),
            p_uxnb: scenario.p_uxnb_w.clone(),
            sigma2: scenario.radio.sigma2_uxnb_w,
            sigma2_haps: scenario.radio.sigma2_haps_w,
            n: scenario.radio.n() as f64,
            g: scenario.radio.g() as f64,
            s: scenario.radio.s() as f64,
        }
    }

    pub fn beta2(&self, k: usize, m: usize) -> f64 {
        self.beta2[k * self.num_uxnbs + m]
    }

    pub fn gamma2(&self, m: usize) -> f64 {
        self.rho2[m] * self.tau[m]
    }

    /// `L_m = sum_k beta^2_km P_k`, the received user power per element at UxNB m.
    pub fn column_load(&self, m: usize) -> f64 {
        (0..self.num_users)
            .map(|k| self.beta2(k, m) * self.p_user[k])
            .sum()
    }

    /// `X = sum_m L_m`.
    pub fn total_load(&self) -> f64 {
        (0..self.num_uxnbs).map(|m| self.column_load(m)).sum()
    }

    /// `sigma_H^2 (X + M sigma^2)`: the allocation-independent HAPS noise term.
    pub fn haps_noise_term(&self) -> f64 {
        self.sigma2_haps * (self.total_load() + self.num_uxnbs as f64 * self.sigma2)
    }

    /// `N / M^2 (X + M sigma^2)`.
    pub fn f_norm2(&self) -> f64 {
        let m = self.num_uxnbs as f64;
        self.n / (m * m) * (self.total_load() + m * self.sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        let km = self.num_users * self.num_uxnbs;
        if self.beta2.len() != km
            || self.rho2.len() != self.num_uxnbs
            || self.tau.len() != self.num_uxnbs
            || self.p_user.len() != self.num_users
            || self.p_uxnb.len() != self.num_uxnbs
        {
            return Err(Error::Domain("SINR model dimensions are inconsistent".into()));
        }
        let all = self
            .beta2
            .iter()
            .chain(&self.rho2)
            .chain(&self.tau)
            .chain(&self.p_user)
            .chain(&self.p_uxnb)
            .chain([&self.sigma2, &self.sigma2_haps, &self.n, &self.g, &self.s]);
        for v in all {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Domain(format!("non-finite or negative input {v}")));
            }
        }
        Ok(())
    }

    /// Numerator amplitude `sqrt(M G^2 N S P_k) sum_m gamma_m sqrt(P_km) beta_km`.
    pub fn signal_amplitude(&self, k: usize, alloc: &PowerAllocation) -> f64 {
        let m_n = self.num_uxnbs;
        let c = (m_n as f64 * self.g * self.g * self.n * self.s * self.p_user[k]).sqrt();
        c * (0..m_n)
            .map(|m| (self.gamma2(m) * alloc.get(k, m) * self.beta2(k, m)).sqrt())
            .sum::<f64>()
    }

    /// Denominator of the closed form for user k.
    pub fn interference_plus_noise(&self, k: usize, alloc: &PowerAllocation) -> f64 {
        let m_n = self.num_uxnbs;
        let mg2 = m_n as f64 * self.g * self.g;
        let forwarded: f64 = (0..m_n)
            .map(|m| self.rho2[m] * alloc.get(k, m) * (self.column_load(m) + self.sigma2))
            .sum();
        mg2 * forwarded + self.haps_noise_term()
    }

    /// Single-expression evaluation of the closed form.
    pub fn sinr(&self, alloc: &PowerAllocation) -> Result<Vec<f64>> {
        self.validate()?;
        (0..self.num_users)
            .map(|k| {
                let num = self.signal_amplitude(k, alloc).powi(2);
                let den = self.interference_plus_noise(k, alloc);
                ratio(num, den)
            })
            .collect()
    }

    pub fn terms(&self, k: usize, alloc: &PowerAllocation) -> SinrTerms {
        let m_n = self.num_uxnbs;
        let f2 = self.f_norm2();
        let (n, g, s) = (self.n, self.g, self.s);
        let amp: f64 = (0..m_n)
            .map(|m| (self.gamma2(m) * alloc.get(k, m) * self.beta2(k, m)).sqrt())
            .sum();
        let desired = (g * n * s * self.p_user[k].sqrt() * amp).powi(2) / f2;
        let scale = n * s * g * g / f2;
        let mut users = 0.0;
        let mut noise = 0.0;
        let mut reemit = 0.0;
        for m in 0..m_n {
            let p = alloc.get(k, m);
            let load = self.column_load(m);
            users += self.gamma2(m) * p * load;
            noise += self.gamma2(m) * p * self.sigma2;
            reemit += (1.0 - self.tau[m]) * self.rho2[m] * p * (load + self.sigma2);
        }
        SinrTerms {
            desired_power: desired,
            user_interference: scale * users,
            forwarded_noise: scale * noise,
            reemission: scale * reemit,
            haps_noise: m_n as f64 * s * self.sigma2_haps,
        }
    }

    pub fn report(&self, scheme: Scheme, alloc: &PowerAllocation) -> Result<SinrReport> {
        if alloc.num_users != self.num_users || alloc.num_uxnbs != self.num_uxnbs {
            return Err(Error::Domain("allocation does not match the model".into()));
        }
        let sinr = self.sinr(alloc)?;
        let f2 = self.f_norm2();
        if !(f2 > 0.0) {
            return Err(Error::Domain("normalisation moment is zero".into()));
        }
        let terms = (0..self.num_users).map(|k| self.terms(k, alloc)).collect();
        let rate = sinr.iter().map(|s| rate_from_sinr(*s)).collect::<Result<_>>()?;
        Ok(SinrReport {
            scheme,
            sinr,
            rate,
            terms,
            f_norm2: f2,
        })
    }
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else if num == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Domain("zero interference-plus-noise with non-zero signal".into()))
    }
}

/// Closed-form SINR of every user for the aerial cell-free scheme.
pub fn closed_form_sinr(
    scenario: &NetworkScenario,
    gains: &LinkGains,
    alloc: &PowerAllocation,
) -> Result<SinrReport> {
    SinrModel::new(scenario, gains).report(Scheme::AerialCellfree, alloc)
}

/// `log2(1 + sinr)` in bits/s/Hz.
pub fn rate_from_sinr(sinr: f64) -> Result<f64> {
    if sinr.is_nan() || sinr < 0.0 {
        return Err(Error::Domain(format!("SINR must be >= 0, got {sinr}")));
    }
    Ok(sinr.ln_1p() / std::f64::consts::LN_2)
}

/// Minimum value and its index; ties go to the lowest index.
pub fn min_sinr(sinr: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (k, &v) in sinr.iter().enumerate() {
        if v < best.0 {
            best = (v, k);
        }
    }
    best
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
