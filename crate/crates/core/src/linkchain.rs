//! Monte Carlo execution of the two-slot relay chain.
//!
//! Each trial draws symbols, access channels, UxNB noise, HAPS noise and
//! re-emission phases, runs match filtering, per-user normalisation and power
//! scaling at every UxNB, forwards over the beamformed backhaul, and combines
//! at the HAPS. The use-and-then-forget estimator then gives
//! `SINR_k = |E[y s*]|^2 / (E|y|^2 - |E[y s*]|^2)`.
//!
//! With the normalisation factors of a trial held fixed, the chain is linear
//! in the symbols and noises, so each impairment is replayed on its own to
//! split `E|y|^2` into desired, user, forwarded-noise, re-emission and
//! HAPS-noise powers.
//!
//! Trials are processed in fixed blocks whose partial sums are reduced in
//! block order, so results do not depend on the number of worker threads.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_access_channel, steering_access, steering_backhaul_rx, LinkGains, SteeringVector};
use crate::error::{Error, Result};
use crate::rate::{PowerAllocation, SinrModel, SinrTerms};
use crate::rng::{complex_normal, stream, Domain};
use crate::scenario::NetworkScenario;

pub const MIN_TRIALS: usize = 1000;
const BLOCK: usize = 250;

/// How each UxNB scales the combined signal of user k before power allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the instantaneous magnitude, as the transceiver does.
    #[default]
    Instantaneous,
    /// Divide by the closed form's deterministic moment `sqrt(f_norm2)`.
    ClosedFormMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolModel {
    /// `CN(0, 1)`.
    #[default]
    Gaussian,
    /// `exp(j phi)`, `phi ~ U(0, 2 pi)`.
    UnitModulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub trials: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub symbols: SymbolModel,
    /// Batches for the confidence interval.
    pub batches: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            trials: 20_000,
            seed: 1,
            normalization: Normalization::Instantaneous,
            symbols: SymbolModel::Gaussian,
            batches: 20,
        }
    }
}

/// Empirical powers at the HAPS combiner output, same units as [`SinrTerms`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermPowers {
    /// `|E[y s*]|^2`.
    pub desired_power: f64,
    /// `E|y_U|^2 - |E[y s*]|^2`, direct path.
    pub user_interference: f64,
    pub forwarded_noise: f64,
    pub reemission: f64,
    pub haps_noise: f64,
}

impl TermPowers {
    pub fn total(&self) -> f64 {
        self.desired_power + self.user_interference + self.forwarded_noise + self.reemission + self.haps_noise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSinr {
    pub alpha: [f64; 2],
    pub total_power: f64,
    /// `+inf` when the residual power vanishes.
    #[serde(with = "crate::serde_num")]
    pub sinr: f64,
    /// 95% half-width from batch estimates.
    #[serde(with = "crate::serde_num")]
    pub ci95: f64,
    pub trials: usize,
    pub terms: TermPowers,
    /// Sample mean of the re-emission component.
    pub reemission_mean: [f64; 2],
    /// `E|y_COMB_km|^2` for each UxNB.
    pub norm_moment: Vec<f64>,
}

impl EmpiricalSinr {
    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha[0], self.alpha[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub users: Vec<EmpiricalSinr>,
    pub trials: usize,
    pub discarded: usize,
    pub options: McOptions,
}

/// Fixed per-scenario quantities of the chain.
struct Chain {
    k: usize,
    m: usize,
    n: usize,
    sqrt_pk: Vec<f64>,
    sqrt_pkm: Vec<f64>,
    gains: LinkGains,
    steer: Vec<SteeringVector>,
    /// `G sum_m'' <c_m'', c_m>`, the backhaul array response of UxNB m.
    array: Vec<Complex64>,
    /// `sum_m conj(c_ms)`, weight of HAPS element s after combining.
    haps_weight: Vec<Complex64>,
    gamma: Vec<f64>,
    reemit: Vec<f64>,
    sigma2: f64,
    sigma2_haps: f64,
    fixed_norm: f64,
}

#[derive(Clone, Default)]
struct UserAcc {
    ys: Complex64,
    y2: f64,
    yu2: f64,
    yn2: f64,
    yr2: f64,
    yh2: f64,
    yr: Complex64,
    comb2: Vec<f64>,
}

#[derive(Clone)]
struct Partial {
    users: Vec<UserAcc>,
    trials: usize,
    discarded: usize,
}

impl Partial {
    fn new(k: usize, m: usize) -> Self {
        Self {
            users: vec![
                UserAcc {
                    comb2: vec![0.0; m],
                    ..Default::default()
                };
                k
            ],
            trials: 0,
            discarded: 0,
        }
    }

    fn merge(&mut self, o: &Partial) {
        for (a, b) in self.users.iter_mut().zip(&o.users) {
            a.ys += b.ys;
            a.y2 += b.y2;
            a.yu2 += b.yu2;
            a.yn2 += b.yn2;
            a.yr2 += b.yr2;
            a.yh2 += b.yh2;
            a.yr += b.yr;
            for (x, y) in a.comb2.iter_mut().zip(&b.comb2) {
                *x += y;
            }
        }
        self.trials += o.trials;
        self.discarded += o.discarded;
    }
}

impl Chain {
    fn new(scenario: &NetworkScenario, gains: &LinkGains, alloc: &PowerAllocation, norm: Normalization) -> Result<Self> {
        let (k, m) = (scenario.num_users(), scenario.num_uxnbs());
        if alloc.num_users != k || alloc.num_uxnbs != m || gains.num_users != k || gains.num_uxnbs != m {
            return Err(Error::Domain("allocation or gains do not match the scenario".into()));
        }
        let radio = &scenario.radio;
        let mut steer = Vec::with_capacity(k * m);
        for kk in 0..k {
            for mm in 0..m {
                steer.push(steering_access(&scenario.access_geometry(kk, mm), radio));
            }
        }
        let c: Vec<SteeringVector> = (0..m)
            .map(|mm| Ok(steering_backhaul_rx(&scenario.backhaul_geometry(mm)?, radio)))
            .collect::<Result<_>>()?;
        let g = radio.g() as f64;
        let array = (0..m)
            .map(|mm| c.iter().map(|cp| cp.inner(&c[mm])).sum::<Complex64>() * g)
            .collect();
        let haps_weight = (0..radio.s())
            .map(|si| c.iter().map(|cm| cm.0[si].conj()).sum())
            .collect();
        let model = SinrModel::new(scenario, gains);
        Ok(Self {
            k,
            m,
            n: radio.n(),
            sqrt_pk: scenario.p_user_w.iter().map(|p| p.sqrt()).collect(),
            sqrt_pkm: alloc.p.iter().map(|p| p.max(0.0).sqrt()).collect(),
            gains: gains.clone(),
            steer,
            array,
            haps_weight,
            gamma: gains.backhaul.iter().map(|b| b.gamma2.sqrt()).collect(),
            reemit: gains
                .backhaul
                .iter()
                .map(|b| ((1.0 - b.tau).max(0.0) * b.rho2).sqrt())
                .collect(),
            sigma2: radio.sigma2_uxnb_w,
            sigma2_haps: radio.sigma2_haps_w,
            fixed_norm: match norm {
                Normalization::Instantaneous => 0.0,
                Normalization::ClosedFormMoment => model.f_norm2().sqrt(),
            },
        })
    }

    fn symbol(&self, rng: &mut impl Rng, model: SymbolModel) -> Complex64 {
        match model {
            SymbolModel::Gaussian => complex_normal(rng, 1.0),
            SymbolModel::UnitModulus => Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
        }
    }

    /// One trial. A trial with a zero normalisation magnitude is counted as discarded.
    fn trial(&self, seed: u64, t: usize, symbols: SymbolModel, acc: &mut Partial) {
        let (kn, mn, nn) = (self.k, self.m, self.n);
        let t = t as u64;
        let mut rs = stream(seed, Domain::Symbols, t, 0, 0);
        let s: Vec<Complex64> = (0..kn).map(|_| self.symbol(&mut rs, symbols)).collect();
        let mut rh = stream(seed, Domain::AccessChannel, t, 0, 0);
        let h: Vec<Vec<Complex64>> = (0..kn * mn)
            .map(|i| sample_access_channel(&self.gains.access[i], &self.steer[i], &mut rh).h)
            .collect();
        let mut rz = stream(seed, Domain::UxnbNoise, t, 0, 0);
        let z: Vec<Complex64> = (0..mn * nn).map(|_| complex_normal(&mut rz, self.sigma2)).collect();
        let mut rw = stream(seed, Domain::Reemission, t, 0, 0);
        let omega: Vec<Complex64> = (0..mn)
            .map(|_| Complex64::from_polar(1.0, rw.random_range(0.0..2.0 * PI)))
            .collect();
        let mut rn = stream(seed, Domain::HapsNoise, t, 0, 0);

        // Received signal component per (m, n), signal and noise kept apart.
        let mut rx_sig = vec![Complex64::new(0.0, 0.0); mn * nn];
        for kk in 0..kn {
            let a = s[kk] * self.sqrt_pk[kk];
            for mm in 0..mn {
                for (n, hv) in h[kk * mn + mm].iter().enumerate() {
                    rx_sig[mm * nn + n] += hv * a;
                }
            }
        }
        let mut out = Vec::with_capacity(kn);
        for kk in 0..kn {
            let (mut yu, mut yn, mut yr) = (Complex64::default(), Complex64::default(), Complex64::default());
            let mut comb2 = vec![0.0; mn];
            for mm in 0..mn {
                let p = self.sqrt_pkm[kk * mn + mm];
                let hk = &h[kk * mn + mm];
                let (mut cs, mut cn) = (Complex64::default(), Complex64::default());
                for n in 0..nn {
                    let mag = hk[n].norm();
                    if mag == 0.0 {
                        continue;
                    }
                    let w = hk[n].conj() / mag;
                    cs += rx_sig[mm * nn + n] * w;
                    cn += z[mm * nn + n] * w;
                }
                let comb = cs + cn;
                comb2[mm] = comb.norm_sqr();
                if p == 0.0 {
                    continue;
                }
                let denom = if self.fixed_norm > 0.0 { self.fixed_norm } else { comb.norm() };
                if denom == 0.0 {
                    acc.discarded += 1;
                    return;
                }
                let f = p / denom;
                let direct = self.array[mm] * self.gamma[mm] * f;
                yu += direct * cs;
                yn += direct * cn;
                yr += self.array[mm] * self.reemit[mm] * omega[mm] * f * comb;
            }
            let yh: Complex64 = self
                .haps_weight
                .iter()
                .map(|w| w * complex_normal(&mut rn, self.sigma2_haps))
                .sum();
            out.push((yu, yn, yr, yh, comb2));
        }
        for (kk, (yu, yn, yr, yh, comb2)) in out.into_iter().enumerate() {
            let y = yu + yn + yr + yh;
            let u = &mut acc.users[kk];
            u.ys += y * s[kk].conj();
            u.y2 += y.norm_sqr();
            u.yu2 += yu.norm_sqr();
            u.yn2 += yn.norm_sqr();
            u.yr2 += yr.norm_sqr();
            u.yh2 += yh.norm_sqr();
            u.yr += yr;
            for (a, b) in u.comb2.iter_mut().zip(comb2) {
                *a += b;
            }
        }
        acc.trials += 1;
    }

    fn block(&self, opts: &McOptions, start: usize, end: usize) -> Partial {
        let mut p = Partial::new(self.k, self.m);
        for t in start..end {
            self.trial(opts.seed, t, opts.symbols, &mut p);
        }
        p
    }
}

fn uatf(ys: Complex64, y2: f64, n: f64) -> (Complex64, f64, f64) {
    let alpha = ys / n;
    let total = y2 / n;
    let rest = total - alpha.norm_sqr();
    let sinr = if rest <= 1e-12 * total { f64::INFINITY } else { alpha.norm_sqr() / rest };
    (alpha, total, sinr)
}

/// Run the chain and form the use-and-then-forget SINR of every user.
pub fn estimate_empirical_sinr(
    scenario: &NetworkScenario,
    gains: &LinkGains,
    alloc: &PowerAllocation,
    opts: &McOptions,
) -> Result<McResult> {
    if opts.trials < MIN_TRIALS {
        return Err(Error::config(
            "mc.trials",
            format!("need at least {MIN_TRIALS} trials, got {}", opts.trials),
        ));
    }
    if opts.batches < 2 || opts.batches > opts.trials {
        return Err(Error::config("mc.batches", "need 2 <= batches <= trials"));
    }
    let chain = Chain::new(scenario, gains, alloc, opts.normalization)?;
    let blocks: Vec<(usize, usize)> = (0..opts.trials)
        .step_by(BLOCK)
        .map(|a| (a, (a + BLOCK).min(opts.trials)))
        .collect();
    let parts: Vec<Partial> = blocks.par_iter().map(|&(a, b)| chain.block(opts, a, b)).collect();

    // Batches are contiguous runs of blocks merged in order.
    let per_batch = parts.len().div_ceil(opts.batches).max(1);
    let mut total = Partial::new(chain.k, chain.m);
    let mut batch_sinr: Vec<Vec<f64>> = vec![Vec::new(); chain.k];
    for chunk in parts.chunks(per_batch) {
        let mut b = Partial::new(chain.k, chain.m);
        for p in chunk {
            b.merge(p);
        }
        if b.trials > 0 {
            for (kk, u) in b.users.iter().enumerate() {
                batch_sinr[kk].push(uatf(u.ys, u.y2, b.trials as f64).2);
            }
        }
        total.merge(&b);
    }
    if total.trials == 0 {
        return Err(Error::Degenerate("every trial was discarded".into()));
    }
    if total.discarded > 0 {
        warn!("{} trials discarded for a zero normalisation magnitude", total.discarded);
    }
    let n = total.trials as f64;
    let users = total
        .users
        .iter()
        .enumerate()
        .map(|(kk, u)| {
            let (alpha, tot, sinr) = uatf(u.ys, u.y2, n);
            let b = &batch_sinr[kk];
            let ci95 = if b.iter().all(|v| v.is_finite()) && b.len() > 1 {
                let mean = b.iter().sum::<f64>() / b.len() as f64;
                let var = b.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
                1.96 * (var / b.len() as f64).sqrt()
            } else {
                f64::INFINITY
            };
            if sinr.is_finite() && ci95 > 0.1 * sinr {
                warn!("user {kk}: 95% CI {ci95:.3e} exceeds 10% of the SINR {sinr:.3e}");
            }
            let desired = alpha.norm_sqr();
            EmpiricalSinr {
                alpha: [alpha.re, alpha.im],
                total_power: tot,
                sinr,
                ci95,
                trials: total.trials,
                terms: TermPowers {
                    desired_power: desired,
                    user_interference: u.yu2 / n - desired,
                    forwarded_noise: u.yn2 / n,
                    reemission: u.yr2 / n,
                    haps_noise: u.yh2 / n,
                },
                reemission_mean: [u.yr.re / n, u.yr.im / n],
                norm_moment: u.comb2.iter().map(|v| v / n).collect(),
            }
        })
        .collect();
    Ok(McResult {
        users,
        trials: total.trials,
        discarded: total.discarded,
        options: opts.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserComparison {
    pub user: usize,
    #[serde(with = "crate::serde_num")]
    pub closed_form_sinr: f64,
    #[serde(with = "crate::serde_num")]
    pub empirical_sinr: f64,
    #[serde(with = "crate::serde_num")]
    pub ci95: f64,
    /// `10 log10(empirical / closed form)`.
    #[serde(with = "crate::serde_num")]
    pub gap_db: f64,
    pub closed_form_terms: SinrTerms,
    pub empirical_terms: TermPowers,
    /// Mean of `E|y_COMB_km|^2` over m, against the closed form's `f_norm2`.
    pub norm_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub discarded: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub f_norm2: f64,
    pub users: Vec<UserComparison>,
    /// Largest `|gap_db|` over users.
    #[serde(with = "crate::serde_num")]
    pub max_abs_gap_db: f64,
}

impl ValidationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Closed form against the chain, user by user.
pub fn validate_closed_form(
    scenario: &NetworkScenario,
    gains: &LinkGains,
    alloc: &PowerAllocation,
    opts: &McOptions,
) -> Result<ValidationReport> {
    let model = SinrModel::new(scenario, gains);
    let cf = model.sinr(alloc)?;
    let mc = estimate_empirical_sinr(scenario, gains, alloc, opts)?;
    let users: Vec<UserComparison> = mc
        .users
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let norm = e.norm_moment.iter().sum::<f64>() / e.norm_moment.len() as f64;
            UserComparison {
                user: k,
                closed_form_sinr: cf[k],
                empirical_sinr: e.sinr,
                ci95: e.ci95,
                gap_db: 10.0 * (e.sinr / cf[k]).log10(),
                closed_form_terms: model.terms(k, alloc),
                empirical_terms: e.terms,
                norm_moment: norm,
            }
        })
        .collect();
    let max_abs_gap_db = users.iter().map(|u| u.gap_db.abs()).fold(0.0, f64::max);
    Ok(ValidationReport {
        trials: mc.trials,
        discarded: mc.discarded,
        seed: opts.seed,
        normalization: opts.normalization,
        f_norm2: model.f_norm2(),
        users,
        max_abs_gap_db,
    })
}
