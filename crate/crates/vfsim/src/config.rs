//! Scenario configuration with its defaults and presets.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A rejected configuration, pointing at the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("config error at `{path}`: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PointVortex,
    Stability,
    Reduced,
    Square,
    Collision,
    TravelingWave,
    Helix,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::PointVortex,
        ScenarioKind::Stability,
        ScenarioKind::Reduced,
        ScenarioKind::Square,
        ScenarioKind::Collision,
        ScenarioKind::TravelingWave,
        ScenarioKind::Helix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::PointVortex => "point_vortex",
            ScenarioKind::Stability => "stability",
            ScenarioKind::Reduced => "reduced",
            ScenarioKind::Square => "square",
            ScenarioKind::Collision => "collision",
            ScenarioKind::TravelingWave => "traveling_wave",
            ScenarioKind::Helix => "helix",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    #[default]
    Square,
    Polygon,
    PolygonCenter,
    Segment,
    Hexagon,
}

/// Point-vortex backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub kind: GeometryKind,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "R", default = "one")]
    pub r: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            kind: GeometryKind::Square,
            n: None,
            r: 1.0,
            gamma: 1.0,
            gamma0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            l: default_l(),
            m: default_m(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DilationProfile {
    /// `Φ₀ = 1 + a e^{-(σ/w)²}`
    #[default]
    Bump,
    /// The exact collision profile at `t = 0`.
    Collision,
}

/// Initial perturbation of the filaments (or of `Φ` for dilation data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    None,
    /// `u_j = a·c_j e^{-((σ - s_j)/w)²}` with random unit `c_j` and
    /// centers `s_j ∈ [-spread, spread]` unless `coefficients` is given.
    Gaussian {
        #[serde(default = "small_amplitude")]
        amplitude: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "one")]
        spread: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coefficients: Option<Vec<[f64; 2]>>,
        /// Rescales the data so that the square's `Ẽ₀` hits this value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_tilde_e0: Option<f64>,
    },
    /// `u_j = X_j(Φ₀ - 1)`.
    Dilation {
        #[serde(default)]
        profile: DilationProfile,
        #[serde(default = "bump_amplitude")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// Random `u_1, u_2` with `u_3 = -u_1`, `u_4 = -u_2`.
    Parallelogram {
        #[serde(default = "small_amplitude")]
        amplitude: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "one")]
        spread: f64,
    },
    /// Field CSV (`sigma,re_0,im_0,…`) on the configured grid.
    File { path: PathBuf },
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig::Gaussian {
            amplitude: small_amplitude(),
            width: default_width(),
            spread: 1.0,
            coefficients: None,
            target_tilde_e0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T", default = "one")]
    pub t: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            dt: default_dt(),
            sample_every: default_sample_every(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardConfig {
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
    #[serde(default = "default_cap_factor")]
    pub energy_cap_factor: f64,
    #[serde(default = "default_boundary_tol")]
    pub boundary_tol: f64,
    #[serde(default = "default_delta_mod")]
    pub delta_mod: f64,
    /// Constant in the predicted existence time.
    #[serde(default = "default_predicted_c")]
    pub predicted_t_constant: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            delta_min: default_delta_min(),
            energy_cap_factor: default_cap_factor(),
            boundary_tol: default_boundary_tol(),
            delta_mod: default_delta_mod(),
            predicted_t_constant: default_predicted_c(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearChoice {
    #[default]
    Rk4,
    ExactPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedConfig {
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub nonlinear: NonlinearChoice,
    #[serde(default = "default_eta1")]
    pub eta1: f64,
}

impl Default for ReducedConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            nonlinear: NonlinearChoice::Rk4,
            eta1: default_eta1(),
        }
    }
}

/// `c²` values from `from` to `to` in `count` evenly spaced steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.from + step * k as f64).collect()
    }

    /// Parses `c2=FROM:TO:COUNT`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let err = || ConfigError::new("wave.sweep", format!("expected c2=FROM:TO:COUNT, got `{text}`"));
        let body = text.strip_prefix("c2=").ok_or_else(err)?;
        let parts: Vec<&str> = body.split(':').collect();
        if parts.len() != 3 {
            return Err(err());
        }
        Ok(Self {
            from: parts[0].parse().map_err(|_| err())?,
            to: parts[1].parse().map_err(|_| err())?,
            count: parts[2].parse().map_err(|_| err())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            c2: default_c2(),
            eta3: None,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelixConfig {
    #[serde(rename = "N", default = "default_helix_n")]
    pub n: usize,
    /// Carrier wavenumber; defaults to `c/2` (steady moduli).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default = "default_helix_times")]
    pub times: Vec<f64>,
}

impl Default for HelixConfig {
    fn default() -> Self {
        Self {
            n: default_helix_n(),
            nu: None,
            times: default_helix_times(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Inclusive range of polygon sizes; defaults to the geometry's `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[usize; 2]>,
}

/// Everything a run needs; sections not used by a scenario are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioKind>,
    #[serde(default)]
    pub config: GeometryConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub guards: GuardConfig,
    #[serde(default)]
    pub reduced: ReducedConfig,
    #[serde(default)]
    pub wave: WaveConfig,
    #[serde(default)]
    pub helix: HelixConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn default_l() -> f64 {
    128.0
}
fn default_m() -> usize {
    4096
}
fn default_dt() -> f64 {
    1e-3
}
fn default_sample_every() -> usize {
    10
}
fn small_amplitude() -> f64 {
    0.01
}
fn bump_amplitude() -> f64 {
    0.05
}
fn default_width() -> f64 {
    2.0
}
fn default_delta_min() -> f64 {
    vfsim_core::filament::DEFAULT_DELTA_MIN
}
fn default_cap_factor() -> f64 {
    vfsim_core::filament::DEFAULT_ENERGY_CAP_FACTOR
}
fn default_boundary_tol() -> f64 {
    vfsim_core::filament::DEFAULT_BOUNDARY_TOL
}
fn default_delta_mod() -> f64 {
    vfsim_core::reduced::DEFAULT_DELTA_MOD
}
fn default_eta1() -> f64 {
    vfsim_core::reduced::DEFAULT_ETA1
}
fn default_predicted_c() -> f64 {
    0.1
}
fn default_c2() -> f64 {
    1.9
}
fn default_helix_n() -> usize {
    3
}
fn default_helix_times() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be a positive finite number, got {x}")))
    }
}

impl ScenarioConfig {
    /// Parses JSON, rejecting unknown keys, then validates.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The built-in configuration reproducing each scenario's regime.
    pub fn preset(kind: ScenarioKind) -> Self {
        let mut c = ScenarioConfig {
            scenario: Some(kind),
            ..Default::default()
        };
        match kind {
            ScenarioKind::PointVortex => {
                c.time = TimeConfig {
                    t: 10.0,
                    dt: 1e-3,
                    sample_every: 100,
                };
            }
            ScenarioKind::Stability => {
                c.config = GeometryConfig {
                    kind: GeometryKind::Polygon,
                    n: Some(8),
                    ..Default::default()
                };
            }
            ScenarioKind::Reduced => {
                c.perturbation = PerturbationConfig::Dilation {
                    profile: DilationProfile::Bump,
                    amplitude: 0.05,
                    width: 1.0,
                };
                c.time = TimeConfig {
                    t: 5.0,
                    dt: 1e-3,
                    sample_every: 100,
                };
            }
            ScenarioKind::Square => {
                c.perturbation = PerturbationConfig::Parallelogram {
                    amplitude: 0.01,
                    width: 2.0,
                    spread: 1.0,
                };
                c.grid = GridConfig { l: 128.0, m: 2048 };
                c.time = TimeConfig {
                    t: 10.0,
                    dt: 1e-3,
                    sample_every: 100,
                };
            }
            ScenarioKind::Collision => {
                c.config = GeometryConfig {
                    kind: GeometryKind::PolygonCenter,
                    n: Some(4),
                    r: 1.0,
                    gamma: 1.0,
                    gamma0: Some(-1.5),
                };
                c.perturbation = PerturbationConfig::Dilation {
                    profile: DilationProfile::Collision,
                    amplitude: 1.0,
                    width: 1.0,
                };
                c.grid = GridConfig { l: 40.0, m: 2048 };
                c.time = TimeConfig {
                    t: 1.05,
                    dt: 1e-3,
                    sample_every: 250,
                };
            }
            ScenarioKind::TravelingWave => {
                c.grid = GridConfig { l: 256.0, m: 4096 };
            }
            ScenarioKind::Helix => {
                // c = 2ν with ν = 56π/L a grid wavenumber
                let nu = std::f64::consts::PI * 56.0 / 256.0;
                c.grid = GridConfig { l: 256.0, m: 4096 };
                c.wave.c2 = 4.0 * nu * nu;
                c.helix.nu = Some(nu);
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("grid.L", self.grid.l)?;
        if self.grid.m % 2 != 0 {
            return Err(ConfigError::new("grid.M", format!("must be even, got {}", self.grid.m)));
        }
        if self.grid.m < 8 {
            return Err(ConfigError::new("grid.M", format!("must be at least 8, got {}", self.grid.m)));
        }
        if !(self.time.t >= 0.0 && self.time.t.is_finite()) {
            return Err(ConfigError::new("time.T", "must be finite and non-negative"));
        }
        positive("time.dt", self.time.dt)?;
        if self.time.sample_every == 0 {
            return Err(ConfigError::new("time.sample_every", "must be at least 1"));
        }
        positive("config.R", self.config.r)?;
        if !self.config.gamma.is_finite() || self.config.gamma == 0.0 {
            return Err(ConfigError::new("config.gamma", "must be finite and nonzero"));
        }
        if let Some(n) = self.config.n {
            if n < 2 {
                return Err(ConfigError::new("config.N", format!("must be at least 2, got {n}")));
            }
        }
        match self.config.kind {
            GeometryKind::Polygon | GeometryKind::PolygonCenter if self.config.n.is_none() => {
                return Err(ConfigError::new("config.N", "required for polygon configurations"));
            }
            GeometryKind::PolygonCenter if self.config.gamma0.is_none() => {
                return Err(ConfigError::new("config.gamma0", "required for centered polygons"));
            }
            _ => {}
        }
        positive("guards.delta_min", self.guards.delta_min)?;
        positive("guards.energy_cap_factor", self.guards.energy_cap_factor)?;
        positive("guards.boundary_tol", self.guards.boundary_tol)?;
        positive("guards.delta_mod", self.guards.delta_mod)?;
        positive("guards.predicted_t_constant", self.guards.predicted_t_constant)?;
        positive("reduced.eta1", self.reduced.eta1)?;
        if !self.reduced.omega.is_finite() || self.reduced.omega < 0.0 {
            return Err(ConfigError::new("reduced.omega", "must be finite and non-negative"));
        }
        match &self.perturbation {
            PerturbationConfig::Gaussian {
                amplitude,
                width,
                spread,
                target_tilde_e0,
                ..
            } => {
                if !amplitude.is_finite() {
                    return Err(ConfigError::new("perturbation.amplitude", "must be finite"));
                }
                positive("perturbation.width", *width)?;
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(ConfigError::new("perturbation.spread", "must be non-negative"));
                }
                if let Some(e) = target_tilde_e0 {
                    positive("perturbation.target_tilde_e0", *e)?;
                }
            }
            PerturbationConfig::Dilation { width, amplitude, .. } => {
                positive("perturbation.width", *width)?;
                if !amplitude.is_finite() || *amplitude <= -1.0 {
                    return Err(ConfigError::new(
                        "perturbation.amplitude",
                        "must be finite and above -1 so that Φ₀ stays away from zero",
                    ));
                }
            }
            PerturbationConfig::Parallelogram { width, spread, amplitude } => {
                if !amplitude.is_finite() {
                    return Err(ConfigError::new("perturbation.amplitude", "must be finite"));
                }
                positive("perturbation.width", *width)?;
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(ConfigError::new("perturbation.spread", "must be non-negative"));
                }
            }
            PerturbationConfig::None | PerturbationConfig::File { .. } => {}
        }
        let scenario = self.scenario;
        if matches!(scenario, Some(ScenarioKind::TravelingWave) | Some(ScenarioKind::Helix)) {
            self.validate_wave()?;
        }
        if scenario == Some(ScenarioKind::Helix) {
            if self.helix.n == 0 {
                return Err(ConfigError::new("helix.N", "must be positive"));
            }
            if self.helix.times.iter().any(|t| !t.is_finite()) {
                return Err(ConfigError::new("helix.times", "must be finite"));
            }
        }
        if let Some([lo, hi]) = self.stability.n_range {
            if lo < 3 || hi < lo {
                return Err(ConfigError::new(
                    "stability.n_range",
                    format!("need 3 ≤ lo ≤ hi, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    fn validate_wave(&self) -> Result<(), ConfigError> {
        let w = &self.wave;
        positive("wave.omega", w.omega)?;
        let eta3 = w.eta3.unwrap_or(vfsim_core::traveling_wave::DEFAULT_ETA3_FACTOR * w.omega);
        let check = |path: &str, c2: f64| -> Result<(), ConfigError> {
            let gap = 2.0 * w.omega - c2;
            if c2 > 0.0 && gap > 0.0 && gap < eta3 {
                Ok(())
            } else {
                Err(ConfigError::new(
                    path,
                    format!(
                        "c2 = {c2} is outside the travelling-wave regime 0 < 2·omega - c2 < eta3 \
                         (omega = {}, eta3 = {eta3})",
                        w.omega
                    ),
                ))
            }
        };
        match w.sweep {
            Some(s) => {
                if s.count == 0 {
                    return Err(ConfigError::new("wave.sweep.count", "must be positive"));
                }
                check("wave.sweep.from", s.from)?;
                check("wave.sweep.to", s.to)?;
            }
            None => check("wave.c2", w.c2)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_square_file_gets_defaults() {
        let c = ScenarioConfig::from_json(r#"{"scenario": "square", "config": {"kind": "square"}}"#).unwrap();
        assert_eq!(c.grid.l, 128.0);
        assert_eq!(c.grid.m, 4096);
        assert_eq!(c.time.dt, 1e-3);
        assert_eq!(c.guards.delta_min, 1e-3);
        assert_eq!(c.guards.energy_cap_factor, 10.0);
    }

    #[test]
    fn odd_m_points_at_grid_m() {
        let e = ScenarioConfig::from_json(r#"{"grid": {"L": 10, "M": 1025}}"#).unwrap_err();
        assert_eq!(e.path, "grid.M");
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let e = ScenarioConfig::from_json(r#"{"grid": {"L": 10, "Q": 3}}"#).unwrap_err();
        assert_eq!(e.path, "grid.Q");
        let e = ScenarioConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
        assert!(e.reason.contains("bogus"));
        let e = ScenarioConfig::from_json(r#"{"perturbation": {"kind": "gaussian", "amp": 1}}"#).unwrap_err();
        assert!(e.path.starts_with("perturbation"), "{e}");
    }

    #[test]
    fn supersonic_wave_is_rejected() {
        let e = ScenarioConfig::from_json(
            r#"{"scenario": "traveling_wave", "wave": {"omega": 1, "c2": 2.0}}"#,
        )
        .unwrap_err();
        assert_eq!(e.path, "wave.c2");
        assert!(e.reason.contains("regime"));
        assert!(ScenarioConfig::from_json(r#"{"scenario": "traveling_wave", "wave": {"omega": 1, "c2": 2.5}}"#).is_err());
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for kind in ScenarioKind::ALL {
            let p = ScenarioConfig::preset(kind);
            p.validate().unwrap();
            let back = ScenarioConfig::from_json(&p.to_json()).unwrap();
            assert_eq!(back, p, "{kind}");
        }
    }

    #[test]
    fn sweep_parsing() {
        let s = SweepConfig::parse("c2=1.99:1.90:10").unwrap();
        let v = s.values();
        assert_eq!(v.len(), 10);
        assert!((v[9] - 1.90).abs() < 1e-12);
        assert!(SweepConfig::parse("c=1:2:3").is_err());
        assert!(SweepConfig::parse("c2=1:2").is_err());
    }

    #[test]
    fn polygon_needs_n() {
        let e = ScenarioConfig::from_json(r#"{"config": {"kind": "polygon"}}"#).unwrap_err();
        assert_eq!(e.path, "config.N");
        let e = ScenarioConfig::from_json(r#"{"config": {"kind": "polygon_center", "N": 4}}"#).unwrap_err();
        assert_eq!(e.path, "config.gamma0");
    }
}
