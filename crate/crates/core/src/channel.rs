//! Deterministic channel quantities and random access-channel draws.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::scenario::{
    AccessGeometry, BackhaulGeometry, Environment, NetworkScenario, RadioParams, UpaShape,
    SPEED_OF_LIGHT,
};

/// Probability of a LoS user-to-UxNB link at elevation `theta_deg`.
///
/// Logistic model `1 / (1 + A exp(-B (theta - A)))`, theta in degrees.
pub fn los_probability(theta_deg: f64, env: &Environment) -> Result<f64> {
    if !(0.0..=90.0).contains(&theta_deg) {
        return Err(Error::Domain(format!(
            "elevation {theta_deg} deg outside [0, 90]"
        )));
    }
    Ok(1.0 / (1.0 + env.a * (-env.b * (theta_deg - env.a)).exp()))
}

/// Free-space path loss `20 log10(4 pi f d / c)` in dB.
pub fn fspl_db(freq_hz: f64, distance_m: f64) -> f64 {
    20.0 * (4.0 * PI * freq_hz * distance_m / SPEED_OF_LIGHT).log10()
}

/// Channel power gain at the 1 m reference distance, `(4 pi f / c)^-2`.
pub fn reference_gain(freq_hz: f64) -> f64 {
    (4.0 * PI * freq_hz / SPEED_OF_LIGHT).powi(-2)
}

/// Large-scale gain of one user-to-UxNB link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessGain {
    /// `beta^2_km`, linear power gain.
    pub beta2: f64,
    pub p_los: f64,
    /// Excessive-loss factor (linear, <= 1).
    pub eta: f64,
    pub beta0: f64,
}

impl AccessGain {
    pub fn beta(&self) -> f64 {
        self.beta2.sqrt()
    }

    /// Mean path loss in dB, `p_los PL_LoS + (1 - p_los) PL_NLoS`.
    pub fn path_loss_db(&self) -> f64 {
        -10.0 * self.beta2.log10()
    }
}

pub fn access_gain(geom: &AccessGeometry, radio: &RadioParams, env: &Environment) -> Result<AccessGain> {
    let p_los = los_probability(geom.elevation_deg, env)?;
    access_gain_with_los(geom, radio, env, p_los)
}

/// As [`access_gain`] with an externally imposed LoS probability.
pub fn access_gain_with_los(
    geom: &AccessGeometry,
    radio: &RadioParams,
    env: &Environment,
    p_los: f64,
) -> Result<AccessGain> {
    if !(geom.distance_m >= 1.0) {
        return Err(Error::Domain(format!(
            "link distance {} m is below the 1 m reference distance",
            geom.distance_m
        )));
    }
    if !(0.0..=1.0).contains(&p_los) {
        return Err(Error::Domain(format!("LoS probability {p_los} outside [0, 1]")));
    }
    let beta0 = reference_gain(radio.f_sub6_hz);
    let eta_db = p_los * env.eta_los_db + (1.0 - p_los) * env.eta_nlos_db;
    let eta = 10f64.powf(-eta_db / 10.0);
    Ok(AccessGain {
        beta2: eta * beta0 / (geom.distance_m * geom.distance_m),
        p_los,
        eta,
        beta0,
    })
}

/// Gain of one UxNB-to-HAPS sub-THz link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackhaulGain {
    /// Free-space power gain `rho^2_m`.
    pub rho2: f64,
    /// Beer-Lambert transmittance.
    pub tau: f64,
    /// `gamma^2_m = rho^2_m tau_m`.
    pub gamma2: f64,
    /// Effective absorbing height along the slant path (m).
    pub effective_height_m: f64,
}

impl BackhaulGain {
    pub fn rho(&self) -> f64 {
        self.rho2.sqrt()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma2.sqrt()
    }
}

pub fn backhaul_gain(
    geom: &BackhaulGeometry,
    radio: &RadioParams,
    absorption_db_per_km: f64,
    effective_height_m: f64,
) -> Result<BackhaulGain> {
    if !(geom.vertical_m > 0.0) {
        return Err(Error::Geometry("UxNB must be below the HAPS".into()));
    }
    if !(geom.distance_m > 1.0) {
        return Err(Error::Domain(format!(
            "backhaul distance {} m is below the reference distance",
            geom.distance_m
        )));
    }
    let gamma0 = reference_gain(radio.f_thz_hz);
    let rho2 = gamma0 / (geom.distance_m * geom.distance_m);
    let h_e_m = effective_height_m * geom.distance_m / geom.vertical_m;
    let tau = 10f64.powf(-absorption_db_per_km * (h_e_m / 1000.0) / 10.0);
    Ok(BackhaulGain {
        rho2,
        tau,
        gamma2: rho2 * tau,
        effective_height_m: h_e_m,
    })
}

/// Per-element phase profile of a UPA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sum_i conj(self_i) other_i`.
    pub fn inner(&self, other: &SteeringVector) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Half-wavelength UPA response; element `(w, l)` sits at index `w * length + l`.
fn upa_response(shape: UpaShape, elevation_deg: f64, azimuth_rad: f64, bulk_phase: f64) -> SteeringVector {
    let sin_t = elevation_deg.to_radians().sin();
    let u = PI * sin_t * azimuth_rad.cos();
    let v = PI * sin_t * azimuth_rad.sin();
    let mut out = Vec::with_capacity(shape.count());
    for w in 0..shape.width {
        for l in 0..shape.length {
            out.push(Complex64::from_polar(1.0, bulk_phase + u * w as f64 + v * l as f64));
        }
    }
    SteeringVector(out)
}

fn bulk_phase(distance_m: f64, lambda: f64) -> f64 {
    // Reduce before forming the phase; d / lambda is ~1e7 at sub-THz.
    2.0 * PI * (distance_m / lambda).fract()
}

/// `a_km`: UxNB receive array toward user k (length N).
pub fn steering_access(geom: &AccessGeometry, radio: &RadioParams) -> SteeringVector {
    upa_response(
        radio.uxnb_rx,
        geom.elevation_deg,
        geom.azimuth_rad,
        bulk_phase(geom.distance_m, radio.lambda_sub6()),
    )
}

/// `b_m`: UxNB transmit array toward the HAPS (length G).
pub fn steering_backhaul_tx(geom: &BackhaulGeometry, radio: &RadioParams) -> SteeringVector {
    upa_response(
        radio.uxnb_tx,
        geom.elevation_deg,
        geom.azimuth_rad,
        bulk_phase(geom.distance_m, radio.lambda_thz()),
    )
}

/// `c_m`: HAPS receive array toward UxNB m (length S), no bulk phase.
pub fn steering_backhaul_rx(geom: &BackhaulGeometry, radio: &RadioParams) -> SteeringVector {
    upa_response(radio.haps_rx, geom.elevation_deg, geom.azimuth_rad, 0.0)
}

/// One Ricean draw of `h_km` across the N receive elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: Vec<Complex64>,
}

/// `h_kmn = beta_km (sqrt(p_los) a_kmn + sqrt(1 - p_los) w_n)`, `w_n ~ CN(0, 1)`.
pub fn sample_access_channel<R: Rng + ?Sized>(
    gain: &AccessGain,
    steering: &SteeringVector,
    rng: &mut R,
) -> ChannelSample {
    let beta = gain.beta();
    let los = gain.p_los.sqrt();
    let nlos = (1.0 - gain.p_los).max(0.0).sqrt();
    let h = steering
        .0
        .iter()
        .map(|a| {
            let diffuse = if nlos > 0.0 {
                complex_normal(rng, 1.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            (a * los + diffuse * nlos) * beta
        })
        .collect();
    ChannelSample { h }
}

/// How the LoS probability of access links is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "p_los")]
pub enum LosMode {
    /// Elevation-dependent model.
    #[default]
    Model,
    /// Same probability on every link (1.0 gives pure LoS).
    Forced(f64),
}

/// All large-scale gains of a scenario, access gains row-major in `(k, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGains {
    pub num_users: usize,
    pub num_uxnbs: usize,
    pub access: Vec<AccessGain>,
    pub backhaul: Vec<BackhaulGain>,
}

impl LinkGains {
    pub fn compute(scenario: &NetworkScenario) -> Result<Self> {
        Self::compute_with(scenario, LosMode::Model)
    }

    pub fn compute_with(scenario: &NetworkScenario, los: LosMode) -> Result<Self> {
        let k_n = scenario.num_users();
        let m_n = scenario.num_uxnbs();
        let mut access = Vec::with_capacity(k_n * m_n);
        for k in 0..k_n {
            for m in 0..m_n {
                let geom = scenario.access_geometry(k, m);
                let gain = match los {
                    LosMode::Model => access_gain(&geom, &scenario.radio, &scenario.env)?,
                    LosMode::Forced(p) => {
                        access_gain_with_los(&geom, &scenario.radio, &scenario.env, p)?
                    }
                };
                access.push(gain);
            }
        }
        let backhaul = (0..m_n)
            .map(|m| {
                let geom = scenario.backhaul_geometry(m)?;
                backhaul_gain(
                    &geom,
                    &scenario.radio,
                    scenario.absorption_db_per_km,
                    scenario.effective_height_m,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            num_users: k_n,
            num_uxnbs: m_n,
            access,
            backhaul,
        })
    }

    pub fn access(&self, k: usize, m: usize) -> &AccessGain {
        &self.access[k * self.num_uxnbs + m]
    }

    pub fn beta2(&self, k: usize, m: usize) -> f64 {
        self.access(k, m).beta2
    }

    /// Forces `tau_m = 1` on every backhaul link (no molecular absorption).
    pub fn without_absorption(mut self) -> Self {
        for b in &mut self.backhaul {
            b.tau = 1.0;
            b.gamma2 = b.rho2;
        }
        self
    }
}
