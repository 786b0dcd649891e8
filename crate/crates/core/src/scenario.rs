//! Network geometry and radio bookkeeping.
//!
//! Coordinates are metres in a local east/north/up frame. Users sit on the
//! ground (z = 0), UxNBs hover at a fixed height and the HAPS hovers above the
//! centre of the service area. Azimuths use `atan2(dy, dx)`: east is 0 and
//! angles grow counter-clockwise. Elevations are reported in degrees because
//! the LoS-probability model consumes degrees; trigonometry uses radians.
//!
//! UxNB indices are row-major over the initial placement grid: index
//! `m = row * g + col` with `g = ceil(sqrt(M))`, row 0 at `y_min`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Thermal noise power in watts for a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power_w(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((psd_dbm_hz - 30.0) / 10.0) * bandwidth_hz
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Uniform planar array shape, `width x length` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpaShape {
    pub width: usize,
    pub length: usize,
}

impl UpaShape {
    pub fn new(width: usize, length: usize) -> Self {
        Self { width, length }
    }

    /// Most square factorisation of `count` (e.g. 400 -> 20 x 20, 32 -> 4 x 8).
    pub fn near_square(count: usize) -> Self {
        let mut width = (count as f64).sqrt().floor() as usize;
        while width > 1 && count % width != 0 {
            width -= 1;
        }
        let width = width.max(1);
        Self {
            width,
            length: count / width,
        }
    }

    pub fn count(&self) -> usize {
        self.width * self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub f_sub6_hz: f64,
    pub f_thz_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// Receiver noise power per UxNB antenna element (W).
    pub sigma2_uxnb_w: f64,
    /// Receiver noise power per HAPS antenna element (W).
    pub sigma2_haps_w: f64,
    pub uxnb_rx: UpaShape,
    pub uxnb_tx: UpaShape,
    pub haps_rx: UpaShape,
}

impl RadioParams {
    pub fn n(&self) -> usize {
        self.uxnb_rx.count()
    }

    pub fn g(&self) -> usize {
        self.uxnb_tx.count()
    }

    pub fn s(&self) -> usize {
        self.haps_rx.count()
    }

    pub fn lambda_sub6(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_sub6_hz
    }

    pub fn lambda_thz(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_thz_hz
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_sub6_hz", self.f_sub6_hz),
            ("f_thz_hz", self.f_thz_hz),
            ("bandwidth_hz", self.bandwidth_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.sigma2_uxnb_w >= 0.0 && self.sigma2_uxnb_w.is_finite()) {
            return Err(Error::config("sigma2_uxnb_w", "must be finite and >= 0"));
        }
        if !(self.sigma2_haps_w >= 0.0 && self.sigma2_haps_w.is_finite()) {
            return Err(Error::config("sigma2_haps_w", "must be finite and >= 0"));
        }
        for (name, upa) in [
            ("uxnb_rx", self.uxnb_rx),
            ("uxnb_tx", self.uxnb_tx),
            ("haps_rx", self.haps_rx),
        ] {
            if upa.width == 0 || upa.length == 0 {
                return Err(Error::config(name, "antenna counts must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Suburban,
    Urban,
    DenseUrban,
    Custom,
}

impl EnvironmentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvironmentKind::Suburban => "suburban",
            EnvironmentKind::Urban => "urban",
            EnvironmentKind::DenseUrban => "dense_urban",
            EnvironmentKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for EnvironmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "suburban" => Ok(EnvironmentKind::Suburban),
            "urban" => Ok(EnvironmentKind::Urban),
            "dense_urban" | "denseurban" => Ok(EnvironmentKind::DenseUrban),
            "custom" => Ok(EnvironmentKind::Custom),
            other => Err(Error::config("environment", format!("unknown environment {other:?}"))),
        }
    }
}

/// Air-to-ground propagation environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: EnvironmentKind,
    /// LoS-probability shape parameter (unitless).
    pub a: f64,
    /// LoS-probability slope (1/degree).
    pub b: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
}

#[derive(Deserialize)]
struct EnvironmentTable {
    environments: Vec<Environment>,
}

const ENVIRONMENT_TABLE: &str = include_str!("../data/environments.json");

impl Environment {
    /// Shipped constants for the named environment.
    pub fn preset(kind: EnvironmentKind) -> Result<Self> {
        let table: EnvironmentTable = serde_json::from_str(ENVIRONMENT_TABLE)?;
        table
            .environments
            .into_iter()
            .find(|e| e.name == kind)
            .ok_or_else(|| Error::config("environment", format!("no preset for {}", kind.as_str())))
    }

    pub fn urban() -> Self {
        Self::preset(EnvironmentKind::Urban).expect("urban preset is shipped")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::config("environment", "A and B must be positive"));
        }
        if !(self.eta_nlos_db >= self.eta_los_db && self.eta_los_db >= 0.0) {
            return Err(Error::config(
                "environment",
                "need eta_nlos_db >= eta_los_db >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Area {
    pub fn square(side: f64) -> Self {
        Self {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) {
            return Err(Error::config("area.x", "x_max must exceed x_min"));
        }
        if !(self.y_max > self.y_min) {
            return Err(Error::config("area.y", "y_max must exceed y_min"));
        }
        Ok(())
    }
}

/// Elevation/azimuth/distance of one user-to-UxNB link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessGeometry {
    pub distance_m: f64,
    pub elevation_deg: f64,
    pub azimuth_rad: f64,
}

/// Geometry of one UxNB-to-HAPS link as seen from the HAPS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackhaulGeometry {
    pub distance_m: f64,
    pub elevation_deg: f64,
    pub azimuth_rad: f64,
    /// `h_HAPS - z_d`.
    pub vertical_m: f64,
}

/// Everything needed to evaluate one network snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub schema_version: u32,
    /// Ground users `(x, y)`.
    pub users: Vec<[f64; 2]>,
    /// UxNB positions `(x, y, z)`.
    pub uxnbs: Vec<[f64; 3]>,
    pub haps: [f64; 3],
    pub area: Area,
    pub radio: RadioParams,
    pub env: Environment,
    pub absorption_db_per_km: f64,
    /// Effective absorbing height for a UxNB at the HAPS nadir (m).
    pub effective_height_m: f64,
    /// Transmit power of each user, `P_k` (W).
    pub p_user_w: Vec<f64>,
    /// Total power budget of each UxNB, `P_m` (W).
    pub p_uxnb_w: Vec<f64>,
}

impl NetworkScenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_uxnbs(&self) -> usize {
        self.uxnbs.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.env.validate()?;
        self.area.validate()?;
        if self.users.is_empty() {
            return Err(Error::config("users", "need at least one user"));
        }
        if self.uxnbs.is_empty() {
            return Err(Error::config("uxnbs", "need at least one UxNB"));
        }
        if self.p_user_w.len() != self.users.len() {
            return Err(Error::config("p_user_w", "one power per user"));
        }
        if self.p_uxnb_w.len() != self.uxnbs.len() {
            return Err(Error::config("p_uxnb_w", "one power per UxNB"));
        }
        if self.p_user_w.iter().chain(&self.p_uxnb_w).any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::config("power", "all powers must be positive"));
        }
        for (m, u) in self.uxnbs.iter().enumerate() {
            if !self.area.contains(u[0], u[1]) {
                return Err(Error::Geometry(format!("UxNB {m} outside the flight area")));
            }
            if !(u[2] > 0.0) {
                return Err(Error::Geometry(format!("UxNB {m} must fly above ground")));
            }
            if u[2] >= self.haps[2] {
                return Err(Error::Geometry(format!("UxNB {m} is not below the HAPS")));
            }
        }
        if !(self.absorption_db_per_km >= 0.0 && self.effective_height_m >= 0.0) {
            return Err(Error::config("absorption", "K_a and h_e must be >= 0"));
        }
        Ok(())
    }

    pub fn access_geometry(&self, k: usize, m: usize) -> AccessGeometry {
        access_geometry_at(self.users[k], self.uxnbs[m])
    }

    pub fn backhaul_geometry(&self, m: usize) -> Result<BackhaulGeometry> {
        backhaul_geometry_at(self.uxnbs[m], self.haps)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        if sc.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}", sc.schema_version),
            ));
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Copy with the UxNBs moved to new horizontal positions.
    pub fn with_uxnb_xy(&self, xy: &[[f64; 2]]) -> Self {
        let mut out = self.clone();
        for (u, p) in out.uxnbs.iter_mut().zip(xy) {
            u[0] = p[0];
            u[1] = p[1];
        }
        out
    }
}

pub fn access_geometry_at(user: [f64; 2], uxnb: [f64; 3]) -> AccessGeometry {
    let dx = user[0] - uxnb[0];
    let dy = user[1] - uxnb[1];
    let z = uxnb[2];
    let d = (dx * dx + dy * dy + z * z).sqrt();
    let elevation = (z / d).clamp(-1.0, 1.0).asin().to_degrees();
    AccessGeometry {
        distance_m: d,
        elevation_deg: elevation,
        azimuth_rad: dy.atan2(dx),
    }
}

pub fn backhaul_geometry_at(uxnb: [f64; 3], haps: [f64; 3]) -> Result<BackhaulGeometry> {
    let vertical = haps[2] - uxnb[2];
    if !(vertical > 0.0) {
        return Err(Error::Geometry(format!(
            "UxNB height {} must be below the HAPS altitude {}",
            uxnb[2], haps[2]
        )));
    }
    let dx = uxnb[0] - haps[0];
    let dy = uxnb[1] - haps[1];
    let d = (dx * dx + dy * dy + vertical * vertical).sqrt();
    Ok(BackhaulGeometry {
        distance_m: d,
        elevation_deg: (vertical / d).clamp(-1.0, 1.0).asin().to_degrees(),
        azimuth_rad: dy.atan2(dx),
        vertical_m: vertical,
    })
}

/// Initial placement: cell centres of a `ceil(sqrt(M))`-regular grid, row-major.
pub fn grid_positions(area: &Area, m: usize, height: f64) -> Vec<[f64; 3]> {
    let g = (m as f64).sqrt().ceil().max(1.0) as usize;
    let sx = (area.x_max - area.x_min) / g as f64;
    let sy = (area.y_max - area.y_min) / g as f64;
    (0..m)
        .map(|i| {
            let col = i % g;
            let row = i / g;
            [
                area.x_min + (col as f64 + 0.5) * sx,
                area.y_min + (row as f64 + 0.5) * sy,
                height,
            ]
        })
        .collect()
}

/// Parameters from which a scenario is drawn. Defaults are the reference
/// simulation setup (urban, 1 km square, K = M = 16, N = 4, G = 9, S = 400).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub num_users: usize,
    pub num_uxnbs: usize,
    pub area: Area,
    pub uxnb_height_m: f64,
    pub haps_altitude_m: f64,
    pub f_sub6_hz: f64,
    pub f_thz_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// HAPS receiver noise PSD; falls back to `noise_psd_dbm_hz`.
    pub haps_noise_psd_dbm_hz: Option<f64>,
    pub n_antennas: usize,
    pub g_antennas: usize,
    pub s_antennas: usize,
    pub environment: EnvironmentKind,
    /// Required when `environment` is `custom`.
    pub custom_environment: Option<Environment>,
    pub p_user_w: f64,
    pub p_uxnb_dbm: f64,
    pub absorption_db_per_km: f64,
    pub effective_height_km: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            num_users: 16,
            num_uxnbs: 16,
            area: Area::square(1000.0),
            uxnb_height_m: 120.0,
            haps_altitude_m: 20_000.0,
            f_sub6_hz: 2.0e9,
            f_thz_hz: 120.0e9,
            bandwidth_hz: 1.0e6,
            noise_psd_dbm_hz: -174.0,
            haps_noise_psd_dbm_hz: None,
            n_antennas: 4,
            g_antennas: 9,
            s_antennas: 400,
            environment: EnvironmentKind::Urban,
            custom_environment: None,
            p_user_w: 0.2,
            p_uxnb_dbm: 25.0,
            absorption_db_per_km: 0.5,
            effective_height_km: 1.6,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::config("num_users", "must be >= 1"));
        }
        if self.num_uxnbs == 0 {
            return Err(Error::config("num_uxnbs", "must be >= 1"));
        }
        for (name, v) in [
            ("n_antennas", self.n_antennas),
            ("g_antennas", self.g_antennas),
            ("s_antennas", self.s_antennas),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        self.area.validate()?;
        if !(self.uxnb_height_m > 0.0) {
            return Err(Error::config("uxnb_height_m", "must be positive"));
        }
        if !(self.haps_altitude_m > self.uxnb_height_m) {
            return Err(Error::config("haps_altitude_m", "must exceed the UxNB height"));
        }
        if !(self.p_user_w > 0.0 && self.p_user_w.is_finite()) {
            return Err(Error::config("p_user_w", "must be positive"));
        }
        if !self.p_uxnb_dbm.is_finite() {
            return Err(Error::config("p_uxnb_dbm", "must be finite"));
        }
        if !(self.absorption_db_per_km >= 0.0) {
            return Err(Error::config("absorption_db_per_km", "must be >= 0"));
        }
        if !(self.effective_height_km >= 0.0) {
            return Err(Error::config("effective_height_km", "must be >= 0"));
        }
        self.environment()?.validate()?;
        self.radio().validate()
    }

    pub fn environment(&self) -> Result<Environment> {
        match self.environment {
            EnvironmentKind::Custom => self
                .custom_environment
                .ok_or_else(|| Error::config("custom_environment", "required for a custom environment")),
            kind => Environment::preset(kind),
        }
    }

    pub fn radio(&self) -> RadioParams {
        let sigma2 = noise_power_w(self.noise_psd_dbm_hz, self.bandwidth_hz);
        let sigma2_h = noise_power_w(
            self.haps_noise_psd_dbm_hz.unwrap_or(self.noise_psd_dbm_hz),
            self.bandwidth_hz,
        );
        RadioParams {
            f_sub6_hz: self.f_sub6_hz,
            f_thz_hz: self.f_thz_hz,
            bandwidth_hz: self.bandwidth_hz,
            noise_psd_dbm_hz: self.noise_psd_dbm_hz,
            sigma2_uxnb_w: sigma2,
            sigma2_haps_w: sigma2_h,
            uxnb_rx: UpaShape::near_square(self.n_antennas),
            uxnb_tx: UpaShape::near_square(self.g_antennas),
            haps_rx: UpaShape::near_square(self.s_antennas),
        }
    }
}

/// Draws users uniformly over the area and places the UxNBs on the grid.
/// Deterministic for a fixed seed.
pub fn build_scenario(params: &ScenarioParams, seed: u64) -> Result<NetworkScenario> {
    params.validate()?;
    let area = params.area;
    let mut rng = rng::stream(seed, Domain::UserDrop, 0, 0, 0);
    let users = (0..params.num_users)
        .map(|_| {
            [
                rng.random_range(area.x_min..area.x_max),
                rng.random_range(area.y_min..area.y_max),
            ]
        })
        .collect();
    let (cx, cy) = area.center();
    let p_uxnb = dbm_to_w(params.p_uxnb_dbm);
    let scenario = NetworkScenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        users,
        uxnbs: grid_positions(&area, params.num_uxnbs, params.uxnb_height_m),
        haps: [cx, cy, params.haps_altitude_m],
        area,
        radio: params.radio(),
        env: params.environment()?,
        absorption_db_per_km: params.absorption_db_per_km,
        effective_height_m: params.effective_height_km * 1000.0,
        p_user_w: vec![params.p_user_w; params.num_users],
        p_uxnb_w: vec![p_uxnb; params.num_uxnbs],
    };
    scenario.validate()?;
    Ok(scenario)
}
