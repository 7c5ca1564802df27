//! Scenario files, the experiment suite and deterministic result bundles.
//!
//! A scenario is a JSON object whose omitted fields take the reference
//! values (16 modes and subcarriers at 2.4 GHz, three scatterers with the
//! jammer at 39 m, two misaligned users). Angles are given in degrees.

use crate::channel::{
    build_channels, check_sensing_validity, jammer_array, jamming_channel, ChannelSet, ScatterPoint, ScatterScene,
    SystemConfig, UcaGeometry, UserArray,
};
use crate::emusic::{pseudospectrum_freq, pseudospectrum_oam, sample_covariance};
use crate::numerics::{find_peaks_1d, hermitian_eig, Axis, Grid2D};
use crate::optimizer::{
    mean_element_gain, mean_jamming_gain, rate_report, run_ao, sensing_noise_for_budget, sensing_power, AoConfig,
    BeamformerState, CommLinks, RateReport, SensingPower,
};
use crate::sensing::{
    azimuth_distance, estimate_scene, freq_snapshots, half_height_width, oam_snapshots, simulate_echoes,
    steering_comparison_spectrum, EchoNoise, EchoRealizations, SensingConfig, SensingReport, SteeringKind,
};
use crate::waveform::{allocate_modes, dft_basis, index_information_bits, DftBasis, ModeAllocation};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

const DEG: f64 = PI / 180.0;

/// Experiment identifiers accepted by [`run_experiment`].
pub const EXPERIMENTS: [&str; 7] = [
    "sensing-accuracy",
    "emusic-vs-music",
    "resolution-vs-nt",
    "steering-comparison",
    "ao-convergence",
    "jamming-mitigation",
    "full-pipeline",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("experiment {experiment}: {message}")]
    Runtime { experiment: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// True for errors caused by the scenario file itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, HarnessError::Parse { .. } | HarnessError::Validation { .. })
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn runtime(experiment: &str, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime {
        experiment: experiment.into(),
        message: e.to_string(),
    }
}

/// OFDM numerology and attenuation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemSpec {
    pub n_t: usize,
    pub n_f: usize,
    pub n_f_prime: usize,
    pub delta_f: f64,
    pub f0: f64,
    /// Cyclic prefix, s; a quarter symbol when omitted.
    pub t_cp: Option<f64>,
    pub c: f64,
    pub beta: f64,
    pub beta_user: Vec<f64>,
    pub beta_jam: Vec<f64>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        let d = SystemConfig::default();
        SystemSpec {
            n_t: d.n_t,
            n_f: d.n_f,
            n_f_prime: d.n_f_prime,
            delta_f: d.delta_f,
            f0: d.f0,
            t_cp: None,
            c: d.c,
            beta: d.beta,
            beta_user: d.beta_user,
            beta_jam: d.beta_jam,
        }
    }
}

impl SystemSpec {
    pub fn config(&self) -> SystemConfig {
        SystemConfig {
            n_t: self.n_t,
            n_f: self.n_f,
            n_f_prime: self.n_f_prime,
            delta_f: self.delta_f,
            f0: self.f0,
            t_cp: self.t_cp.unwrap_or(0.25 / self.delta_f),
            c: self.c,
            beta: self.beta,
            beta_user: self.beta_user.clone(),
            beta_jam: self.beta_jam.clone(),
        }
    }
}

/// One receiving user UCA placed on a sphere around the transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserSpec {
    pub distance: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Centre displacement from the sphere point, m.
    pub offset: [f64; 3],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub radius: f64,
}

impl Default for UserSpec {
    fn default() -> Self {
        UserSpec {
            distance: 30.0,
            azimuth_deg: 0.0,
            elevation_deg: 45.0,
            offset: [0.0; 3],
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometrySpec {
    pub r_t: f64,
    pub r_r: f64,
    pub users: Vec<UserSpec>,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            r_t: 0.5,
            r_r: 0.25,
            users: vec![
                UserSpec {
                    offset: [0.3, 0.0, 0.0],
                    yaw_deg: 3.0,
                    pitch_deg: 5.0,
                    ..Default::default()
                },
                UserSpec {
                    azimuth_deg: 40.0,
                    offset: [0.0, 0.3, 0.0],
                    yaw_deg: -4.0,
                    pitch_deg: 3.0,
                    ..Default::default()
                },
            ],
        }
    }
}

impl GeometrySpec {
    pub fn geometry(&self) -> UcaGeometry {
        UcaGeometry {
            r_t: self.r_t,
            r_r: self.r_r,
            users: self
                .users
                .iter()
                .map(|u| {
                    let mut a = UserArray::on_ring(
                        u.radius,
                        u.distance,
                        u.azimuth_deg * DEG,
                        u.elevation_deg * DEG,
                        u.offset,
                    );
                    a.yaw = u.yaw_deg * DEG;
                    a.pitch = u.pitch_deg * DEG;
                    a
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointSpec {
    pub range: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub rcs: f64,
}

impl Default for PointSpec {
    fn default() -> Self {
        PointSpec {
            range: 30.0,
            azimuth_deg: 0.0,
            elevation_deg: 45.0,
            rcs: 1.0,
        }
    }
}

impl PointSpec {
    fn point(&self) -> ScatterPoint {
        ScatterPoint {
            range: self.range,
            azimuth: self.azimuth_deg * DEG,
            elevation: self.elevation_deg * DEG,
            rcs: self.rcs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub points: Vec<PointSpec>,
    /// Common radial velocity, m/s.
    pub velocity: f64,
    pub jammer_index: usize,
    pub jammer_elements: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let p = |range, az, el| PointSpec {
            range,
            azimuth_deg: az,
            elevation_deg: el,
            rcs: 1.0,
        };
        SceneSpec {
            points: vec![p(39.0, 10.0, 50.0), p(25.0, 30.0, 38.0), p(18.0, 55.0, 16.0)],
            velocity: 3.0,
            jammer_index: 0,
            jammer_elements: 4,
        }
    }
}

impl SceneSpec {
    pub fn scene(&self) -> ScatterScene {
        ScatterScene {
            points: self.points.iter().map(PointSpec::point).collect(),
            velocity: self.velocity,
            jammer_index: self.jammer_index,
            jammer_elements: self.jammer_elements,
        }
    }
}

/// Echo simulation and EMUSIC settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingSpec {
    /// Echo SNR of the sensing experiments, dB.
    pub ssnr_db: f64,
    /// SSNR threshold met by the sensing power in the full pipeline, dB.
    pub gamma_s_db: f64,
    pub realizations: usize,
    pub noise: EchoNoise,
    pub g_hat: usize,
    pub rho: f64,
    pub nu: f64,
    pub theta_step_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub phi_step_deg: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub range_step: f64,
    pub profile_phi_step_deg: f64,
    pub velocity_min: f64,
    pub velocity_max: f64,
    pub velocity_step: f64,
    pub floor_db: f64,
    pub angle_gate_deg: f64,
    pub range_gate: f64,
    pub min_separation: usize,
}

impl Default for SensingSpec {
    fn default() -> Self {
        SensingSpec {
            ssnr_db: 20.0,
            gamma_s_db: 20.0,
            realizations: 256,
            noise: EchoNoise::Uniform,
            g_hat: 3,
            rho: 1.0,
            nu: 1.0,
            theta_step_deg: 0.1,
            phi_min_deg: 0.1,
            phi_max_deg: 90.0,
            phi_step_deg: 0.1,
            range_min: 5.0,
            range_max: 80.0,
            range_step: 0.25,
            profile_phi_step_deg: 1.0,
            velocity_min: -12.0,
            velocity_max: 12.0,
            velocity_step: 0.05,
            floor_db: -30.0,
            angle_gate_deg: 2.0,
            range_gate: 3.0,
            min_separation: 3,
        }
    }
}

impl SensingSpec {
    pub fn config(&self) -> SensingConfig {
        SensingConfig {
            ssnr_db: self.ssnr_db,
            realizations: self.realizations,
            noise: self.noise,
            g_hat: self.g_hat,
            rho: self.rho,
            nu: self.nu,
            reweight: true,
            theta: Axis::from_range(
                "theta",
                0.0,
                180.0 * DEG - self.theta_step_deg * DEG,
                self.theta_step_deg * DEG,
            ),
            phi: Axis::from_range(
                "phi",
                self.phi_min_deg * DEG,
                self.phi_max_deg * DEG,
                self.phi_step_deg * DEG,
            ),
            range: Axis::from_range("range", self.range_min, self.range_max, self.range_step),
            profile_phi_step: self.profile_phi_step_deg * DEG,
            velocity: Axis::from_range("velocity", self.velocity_min, self.velocity_max, self.velocity_step),
            floor_db: self.floor_db,
            angle_gate: self.angle_gate_deg * DEG,
            range_gate: self.range_gate,
            min_separation: self.min_separation,
        }
    }
}

/// Communication links, power budget and mode hopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommSpec {
    /// Modes per user `N_k`.
    pub mode_sizes: Vec<usize>,
    /// Per-slot power budget `P_t`.
    pub total_power: f64,
    /// Share of `P_t` spent on the sensing mode.
    pub sensing_fraction: f64,
    /// `(P_t/N_f) · mean|h|² / σ²` for user 1, dB.
    pub comm_snr_db: f64,
    /// Received jamming power per element over `σ²`, dB.
    pub jnr_db: f64,
    /// 1-based OFDM slot optimised.
    pub slot: usize,
    /// Hex hopping key shared with the users.
    pub index_key: String,
    /// Hex index bits selecting the slot's mode partition.
    pub index_bits: String,
}

impl Default for CommSpec {
    fn default() -> Self {
        CommSpec {
            mode_sizes: vec![8, 7],
            total_power: 1.0,
            sensing_fraction: 0.1,
            comm_snr_db: -20.0,
            jnr_db: 10.0,
            slot: 1,
            index_key: "0123456789abcdef".into(),
            index_bits: "a5c3".into(),
        }
    }
}

impl CommSpec {
    fn key(&self) -> Result<u64, HarnessError> {
        let bytes = hex::decode(pad_hex(&self.index_key)).map_err(|e| invalid("comm.index_key", e.to_string()))?;
        if bytes.len() > 8 {
            return Err(invalid("comm.index_key", "at most 16 hex digits"));
        }
        Ok(bytes.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b)))
    }

    fn bits(&self) -> Result<Vec<bool>, HarnessError> {
        let bytes = hex::decode(pad_hex(&self.index_bits)).map_err(|e| invalid("comm.index_bits", e.to_string()))?;
        Ok(bytes
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
            .collect())
    }
}

fn pad_hex(s: &str) -> String {
    if s.len() % 2 == 1 {
        format!("0{s}")
    } else {
        s.to_string()
    }
}

/// Two-target azimuthal resolution sweep over array sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolutionSpec {
    pub n_t_values: Vec<usize>,
    pub azimuths_deg: Vec<f64>,
    pub range: f64,
    pub elevation_deg: f64,
    pub g_hat: usize,
    pub realizations: usize,
    pub scan_min_deg: f64,
    pub scan_max_deg: f64,
    pub scan_step_deg: f64,
}

impl Default for ResolutionSpec {
    fn default() -> Self {
        ResolutionSpec {
            n_t_values: vec![16, 4],
            azimuths_deg: vec![15.8, 16.6],
            range: 30.0,
            elevation_deg: 40.0,
            g_hat: 2,
            realizations: 16384,
            scan_min_deg: 10.0,
            scan_max_deg: 22.0,
            scan_step_deg: 0.05,
        }
    }
}

/// Array-model comparison at a fixed elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteeringSpec {
    pub azimuths_deg: Vec<f64>,
    pub elevation_deg: f64,
    pub snapshots: usize,
    pub g_hat: usize,
    pub theta_step_deg: f64,
    /// Azimuth window whose strongest peak is measured, degrees.
    pub width_window_deg: [f64; 2],
}

impl Default for SteeringSpec {
    fn default() -> Self {
        SteeringSpec {
            azimuths_deg: vec![15.8, 16.6, 29.0, 50.0],
            elevation_deg: 10.0,
            snapshots: 4096,
            g_hat: 4,
            theta_step_deg: 0.05,
            width_window_deg: [45.0, 55.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonSpec {
    pub g_hat_values: Vec<usize>,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        ComparisonSpec {
            g_hat_values: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JammingSpec {
    /// Communication SNRs swept, dB.
    pub snr_db_values: Vec<f64>,
    /// Lower SSNR threshold of the degraded-sensing variant, dB.
    pub low_gamma_s_db: f64,
}

impl Default for JammingSpec {
    fn default() -> Self {
        JammingSpec {
            snr_db_values: vec![-30.0, -25.0, -20.0, -15.0, -10.0],
            low_gamma_s_db: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    /// Grid step of exported 2-D pseudospectra, degrees.
    pub spectrum_step_deg: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { spectrum_step_deg: 0.5 }
    }
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub experiment: Option<String>,
    pub seed: u64,
    pub system: SystemSpec,
    pub geometry: GeometrySpec,
    pub scene: SceneSpec,
    pub sensing: SensingSpec,
    pub comm: CommSpec,
    pub ao: AoConfig,
    pub resolution: ResolutionSpec,
    pub steering: SteeringSpec,
    pub emusic_vs_music: ComparisonSpec,
    pub jamming: JammingSpec,
    pub output: OutputSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            experiment: None,
            seed: 1,
            system: SystemSpec::default(),
            geometry: GeometrySpec::default(),
            scene: SceneSpec::default(),
            sensing: SensingSpec::default(),
            comm: CommSpec::default(),
            ao: AoConfig::default(),
            resolution: ResolutionSpec::default(),
            steering: SteeringSpec::default(),
            emusic_vs_music: ComparisonSpec::default(),
            jamming: JammingSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

/// A parsed scenario plus the paths of fields that were ignored.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub unknown_fields: Vec<String>,
}

/// Parses and validates a scenario from JSON text. Unknown fields are
/// collected, not rejected.
pub fn parse_scenario(text: &str, origin: &str) -> Result<LoadedScenario, HarnessError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let scenario: Scenario =
        serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string())).map_err(|e| {
            HarnessError::Parse {
                path: origin.into(),
                message: e.to_string(),
            }
        })?;
    de.end().map_err(|e| HarnessError::Parse {
        path: origin.into(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(LoadedScenario {
        scenario,
        unknown_fields: unknown,
    })
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, &path.display().to_string())
}

fn positive(field: &str, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite, got {v}")))
    }
}

/// Canonical experiment id, case-insensitive.
pub fn canonical_experiment(id: &str) -> Option<&'static str> {
    let lower = id.to_ascii_lowercase();
    EXPERIMENTS.iter().copied().find(|e| *e == lower)
}

impl Scenario {
    /// Checks every field, reporting the first violation with its path.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if let Some(id) = &self.experiment {
            if canonical_experiment(id).is_none() {
                return Err(invalid(
                    "experiment",
                    format!("unknown id `{id}`; expected one of {}", EXPERIMENTS.join(", ")),
                ));
            }
        }
        let s = &self.system;
        if s.n_t < 2 || !s.n_t.is_multiple_of(2) || s.n_t > 128 {
            return Err(invalid(
                "system.n_t",
                format!("must be even and in [2, 128], got {}", s.n_t),
            ));
        }
        if s.n_f == 0 {
            return Err(invalid("system.n_f", "must be at least 1"));
        }
        for (f, v) in [("system.delta_f", s.delta_f), ("system.f0", s.f0), ("system.c", s.c)] {
            positive(f, v)?;
        }
        let cfg = s.config();
        cfg.validate().map_err(|e| invalid("system", e.to_string()))?;

        let g = &self.geometry;
        positive("geometry.r_t", g.r_t)?;
        positive("geometry.r_r", g.r_r)?;
        if g.users.is_empty() {
            return Err(invalid("geometry.users", "at least one user is required"));
        }
        for (i, u) in g.users.iter().enumerate() {
            positive(&format!("geometry.users[{i}].distance"), u.distance)?;
            positive(&format!("geometry.users[{i}].radius"), u.radius)?;
            for (f, v) in [
                ("azimuth_deg", u.azimuth_deg),
                ("elevation_deg", u.elevation_deg),
                ("yaw_deg", u.yaw_deg),
                ("pitch_deg", u.pitch_deg),
            ] {
                finite(&format!("geometry.users[{i}].{f}"), v)?;
            }
        }
        if s.beta_user.len() < g.users.len() {
            return Err(invalid(
                "system.beta_user",
                format!("needs one entry per user ({})", g.users.len()),
            ));
        }
        if s.beta_jam.len() < g.users.len() {
            return Err(invalid(
                "system.beta_jam",
                format!("needs one entry per user ({})", g.users.len()),
            ));
        }
        let geom = g.geometry();
        geom.validate().map_err(|e| invalid("geometry", e.to_string()))?;

        let sc = &self.scene;
        if sc.points.is_empty() {
            return Err(invalid("scene.points", "at least one point is required"));
        }
        for (i, p) in sc.points.iter().enumerate() {
            positive(&format!("scene.points[{i}].range"), p.range)?;
            if !(0.0..360.0).contains(&p.azimuth_deg) {
                return Err(invalid(
                    format!("scene.points[{i}].azimuth_deg"),
                    "must lie in [0, 360)",
                ));
            }
            if !(p.elevation_deg > 0.0 && p.elevation_deg < 90.0) {
                return Err(invalid(
                    format!("scene.points[{i}].elevation_deg"),
                    "must lie in (0, 90)",
                ));
            }
            finite(&format!("scene.points[{i}].rcs"), p.rcs)?;
        }
        if sc.jammer_index >= sc.points.len() {
            return Err(invalid(
                "scene.jammer_index",
                format!("must index one of the {} points", sc.points.len()),
            ));
        }
        if sc.jammer_elements == 0 {
            return Err(invalid("scene.jammer_elements", "must be at least 1"));
        }
        let scene = sc.scene();
        scene
            .validate(&cfg, &geom)
            .map_err(|e| invalid("scene", e.to_string()))?;
        check_sensing_validity(&cfg, &scene).map_err(|e| invalid("scene", e.to_string()))?;

        let se = &self.sensing;
        finite("sensing.ssnr_db", se.ssnr_db)?;
        finite("sensing.gamma_s_db", se.gamma_s_db)?;
        if se.realizations == 0 {
            return Err(invalid("sensing.realizations", "must be at least 1"));
        }
        if se.g_hat == 0 || se.g_hat >= s.n_t.min(s.n_f) {
            return Err(invalid(
                "sensing.g_hat",
                format!("must lie in [1, {})", s.n_t.min(s.n_f)),
            ));
        }
        if !(se.rho > 0.0 && se.rho <= 1.0) {
            return Err(invalid("sensing.rho", "must lie in (0, 1]"));
        }
        positive("sensing.nu", se.nu)?;
        for (f, v) in [
            ("sensing.theta_step_deg", se.theta_step_deg),
            ("sensing.phi_step_deg", se.phi_step_deg),
            ("sensing.range_step", se.range_step),
            ("sensing.profile_phi_step_deg", se.profile_phi_step_deg),
            ("sensing.velocity_step", se.velocity_step),
            ("sensing.angle_gate_deg", se.angle_gate_deg),
            ("sensing.range_gate", se.range_gate),
        ] {
            positive(f, v)?;
        }
        if !(se.phi_min_deg > 0.0 && se.phi_min_deg < se.phi_max_deg && se.phi_max_deg <= 90.0) {
            return Err(invalid(
                "sensing.phi_min_deg",
                "need 0 < phi_min_deg < phi_max_deg ≤ 90",
            ));
        }
        if !(se.range_min > 0.0 && se.range_min < se.range_max) {
            return Err(invalid("sensing.range_min", "need 0 < range_min < range_max"));
        }
        if se.range_max >= cfg.unambiguous_range() {
            return Err(invalid(
                "sensing.range_max",
                format!("must stay below the unambiguous range {:.1} m", cfg.unambiguous_range()),
            ));
        }
        if !(se.velocity_min < se.velocity_max) {
            return Err(invalid("sensing.velocity_min", "must be below velocity_max"));
        }
        if se.velocity_min.abs().max(se.velocity_max.abs()) >= cfg.max_velocity() {
            return Err(invalid(
                "sensing.velocity_max",
                format!("must stay below {:.1} m/s", cfg.max_velocity()),
            ));
        }
        finite("sensing.floor_db", se.floor_db)?;

        let c = &self.comm;
        if c.mode_sizes.len() != g.users.len() {
            return Err(invalid(
                "comm.mode_sizes",
                format!("needs one entry per user ({})", g.users.len()),
            ));
        }
        if c.mode_sizes.contains(&0) {
            return Err(invalid("comm.mode_sizes", "every user needs at least one mode"));
        }
        if c.mode_sizes.iter().sum::<usize>() + 1 > s.n_t {
            return Err(invalid(
                "comm.mode_sizes",
                format!("sum must leave one of the {} modes for sensing", s.n_t),
            ));
        }
        positive("comm.total_power", c.total_power)?;
        if !(0.0..1.0).contains(&c.sensing_fraction) {
            return Err(invalid("comm.sensing_fraction", "must lie in [0, 1)"));
        }
        finite("comm.comm_snr_db", c.comm_snr_db)?;
        finite("comm.jnr_db", c.jnr_db)?;
        if c.slot == 0 || c.slot > s.n_t {
            return Err(invalid("comm.slot", format!("must lie in [1, {}]", s.n_t)));
        }
        c.key()?;
        c.bits()?;

        positive("ao.tolerance", self.ao.tolerance)?;
        if self.ao.max_iterations == 0 {
            return Err(invalid("ao.max_iterations", "must be at least 1"));
        }

        let r = &self.resolution;
        for (i, &n) in r.n_t_values.iter().enumerate() {
            if n < 2 || n % 2 != 0 {
                return Err(invalid(
                    format!("resolution.n_t_values[{i}]"),
                    format!("must be even and ≥ 2, got {n}"),
                ));
            }
            if r.g_hat >= n {
                return Err(invalid(
                    "resolution.g_hat",
                    format!("must be below every N_t (got {n})"),
                ));
            }
        }
        if r.azimuths_deg.is_empty() || r.g_hat == 0 || r.realizations == 0 {
            return Err(invalid("resolution", "needs azimuths, g_hat ≥ 1 and realizations ≥ 1"));
        }
        positive("resolution.range", r.range)?;
        positive("resolution.scan_step_deg", r.scan_step_deg)?;
        if !(r.scan_min_deg < r.scan_max_deg) {
            return Err(invalid("resolution.scan_min_deg", "must be below scan_max_deg"));
        }
        if !(r.elevation_deg > 0.0 && r.elevation_deg < 90.0) {
            return Err(invalid("resolution.elevation_deg", "must lie in (0, 90)"));
        }

        let st = &self.steering;
        if st.azimuths_deg.is_empty() || st.snapshots == 0 || st.g_hat == 0 || st.g_hat >= s.n_t {
            return Err(invalid("steering", "needs azimuths, snapshots ≥ 1 and 1 ≤ g_hat < N_t"));
        }
        positive("steering.theta_step_deg", st.theta_step_deg)?;
        if !(st.elevation_deg > 0.0 && st.elevation_deg < 90.0) {
            return Err(invalid("steering.elevation_deg", "must lie in (0, 90)"));
        }
        for (i, &gh) in self.emusic_vs_music.g_hat_values.iter().enumerate() {
            if gh == 0 || gh >= s.n_t.min(s.n_f) {
                return Err(invalid(format!("emusic_vs_music.g_hat_values[{i}]"), "out of range"));
            }
        }
        for (i, &v) in self.jamming.snr_db_values.iter().enumerate() {
            finite(&format!("jamming.snr_db_values[{i}]"), v)?;
        }
        finite("jamming.low_gamma_s_db", self.jamming.low_gamma_s_db)?;
        positive("output.spectrum_step_deg", self.output.spectrum_step_deg)?;
        Ok(())
    }
}

/// One output file of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Every numeric output of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub experiment: String,
    pub artifacts: Vec<Artifact>,
}

impl ResultBundle {
    fn new(experiment: &str) -> Self {
        ResultBundle {
            experiment: experiment.into(),
            artifacts: Vec::new(),
        }
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("JSON values serialise");
        bytes.push(b'\n');
        self.artifacts.push(Artifact {
            name: format!("{name}.json"),
            bytes,
        });
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory CSV write");
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .expect("in-memory CSV write");
        }
        let bytes = w.into_inner().expect("in-memory CSV flush");
        self.artifacts.push(Artifact {
            name: format!("{name}.csv"),
            bytes,
        });
    }

    /// Artifact by file name.
    pub fn get(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// Run metadata written next to the artifacts; excluded from content hashes.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub experiment: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub unknown_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub files: Vec<ManifestEntry>,
    pub metadata: String,
}

/// Writes `bundle` under `out_dir/{experiment}/` with `run.json` and a
/// `manifest.json` listing every artifact with its SHA-256.
pub fn emit(bundle: &ResultBundle, meta: &RunMetadata, out_dir: &Path) -> Result<Manifest, HarnessError> {
    let dir = out_dir.join(&bundle.experiment);
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::with_capacity(bundle.artifacts.len());
    for a in &bundle.artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
        files.push(ManifestEntry {
            path: format!("{}/{}", bundle.experiment, a.name),
            sha256: hex::encode(Sha256::digest(&a.bytes)),
            bytes: a.bytes.len(),
        });
    }
    let mut run = serde_json::to_vec_pretty(meta).expect("metadata serialises");
    run.push(b'\n');
    std::fs::write(dir.join("run.json"), run)?;
    let manifest = Manifest {
        experiment: bundle.experiment.clone(),
        files,
        metadata: format!("{}/run.json", bundle.experiment),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}

/// Per-truth-point match of a detected estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointMatch {
    pub truth: usize,
    pub estimate: Option<usize>,
    pub range_error: f64,
    pub azimuth_error_deg: f64,
    pub elevation_error_deg: f64,
}

impl PointMatch {
    /// True when every error is within the given tolerances.
    pub fn within(&self, azimuth_deg: f64, elevation_deg: f64, range: f64) -> bool {
        self.estimate.is_some()
            && self.azimuth_error_deg <= azimuth_deg
            && self.elevation_error_deg <= elevation_deg
            && self.range_error <= range
    }
}

/// Greedily matches each true point to the closest unused detected
/// estimate, in units of 1° azimuth, 1° elevation and 1 m range.
pub fn match_estimates(truth: &[ScatterPoint], report: &SensingReport) -> Vec<PointMatch> {
    let est = &report.estimate.points;
    let mut candidates = Vec::new();
    for (t, p) in truth.iter().enumerate() {
        for (e, q) in est.iter().enumerate() {
            if !q.detected {
                continue;
            }
            let da = azimuth_distance(p.azimuth, q.theta) / DEG;
            let de = (p.elevation - q.phi).abs() / DEG;
            let dr = (p.range - q.range).abs();
            candidates.push((da.max(de).max(dr), t, e, da, de, dr));
        }
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<PointMatch> = (0..truth.len())
        .map(|t| PointMatch {
            truth: t,
            estimate: None,
            range_error: f64::INFINITY,
            azimuth_error_deg: f64::INFINITY,
            elevation_error_deg: f64::INFINITY,
        })
        .collect();
    let mut used = vec![false; est.len()];
    for (_, t, e, da, de, dr) in candidates {
        if out[t].estimate.is_none() && !used[e] {
            used[e] = true;
            out[t] = PointMatch {
                truth: t,
                estimate: Some(e),
                range_error: dr,
                azimuth_error_deg: da,
                elevation_error_deg: de,
            };
        }
    }
    out
}

fn report_json(truth: &ScatterScene, report: &SensingReport) -> serde_json::Value {
    let matches = match_estimates(&truth.points, report);
    json!({
        "truth": truth.points.iter().map(|p| json!({
            "range": p.range, "azimuth_deg": p.azimuth / DEG, "elevation_deg": p.elevation / DEG,
        })).collect::<Vec<_>>(),
        "velocity_truth": truth.velocity,
        "estimates": report.estimate.points.iter().zip(&report.scores).map(|(p, s)| json!({
            "detected": p.detected, "range": p.range, "azimuth_deg": p.theta / DEG,
            "elevation_deg": p.phi / DEG, "range_fit": s,
        })).collect::<Vec<_>>(),
        "velocity": report.estimate.velocity,
        "jammer_estimate": report.jammer,
        "matches": matches.iter().map(|m| json!({
            "truth": m.truth, "estimate": m.estimate,
            "range_error": finite_or_null(m.range_error),
            "azimuth_error_deg": finite_or_null(m.azimuth_error_deg),
            "elevation_error_deg": finite_or_null(m.elevation_error_deg),
        })).collect::<Vec<_>>(),
        "oam_eigenvalues": report.oam_eigenvalues,
        "freq_eigenvalues": report.freq_eigenvalues,
    })
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn grid_rows(grid: &Grid2D, scale1: f64, scale2: f64) -> Vec<Vec<f64>> {
    let (n1, n2) = grid.shape();
    let mut rows = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            rows.push(vec![
                grid.axis1.value(i) / scale1,
                grid.axis2.value(j) / scale2,
                grid.get(i, j),
            ]);
        }
    }
    rows
}

fn export_axes(s: &Scenario) -> (Axis, Axis) {
    let step = s.output.spectrum_step_deg * DEG;
    (
        Axis::from_range("theta", 0.0, 180.0 * DEG - step, step),
        Axis::from_range("phi", s.sensing.phi_min_deg * DEG, s.sensing.phi_max_deg * DEG, step),
    )
}

/// The validated physical setup of a scenario.
pub struct World {
    pub cfg: SystemConfig,
    pub geom: UcaGeometry,
    pub scene: ScatterScene,
}

impl Scenario {
    pub fn world(&self) -> World {
        World {
            cfg: self.system.config(),
            geom: self.geometry.geometry(),
            scene: self.scene.scene(),
        }
    }
}

/// Everything the optimiser needs for one slot.
pub struct CommSetup {
    pub basis: DftBasis,
    pub alloc: ModeAllocation,
    pub channels: ChannelSet,
    /// True links, with the jammer at its real position.
    pub truth: CommLinks,
    /// `log2 Π_n C_n`.
    pub index_bits: f64,
    /// `|h|²` of the slot's sensing-mode cells.
    pub sensing_gains: Vec<f64>,
    pub sensing_noise: f64,
    pub sensing: SensingPower,
    pub data_budget: f64,
}

/// Builds channels, mode allocation, noise and jamming levels and the
/// sensing power of the configured slot at communication SNR `snr_db`.
pub fn comm_setup(s: &Scenario, world: &World, snr_db: f64, gamma_s_db: f64) -> Result<CommSetup, String> {
    let cfg = &world.cfg;
    let channels = build_channels(cfg, &world.geom, &world.scene).map_err(|e| e.to_string())?;
    let basis = dft_basis(cfg.n_t);
    let alloc = allocate_modes(
        cfg.n_t,
        &s.comm.mode_sizes,
        s.comm.slot,
        &s.comm.bits().map_err(|e| e.to_string())?,
        s.comm.key().map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let index_bits = index_information_bits(cfg.n_t, &s.comm.mode_sizes).map_err(|e| e.to_string())? as f64;
    let p_t = s.comm.total_power;
    let noise_var = (p_t / cfg.n_f as f64) * mean_element_gain(&channels.comm[0]) / db(snr_db);
    let jamming_power = db(s.comm.jnr_db) * noise_var / mean_jamming_gain(&channels.jam[0]);
    let truth = CommLinks {
        comm: channels.comm.clone(),
        jam: channels.jam.clone(),
        jamming_power,
        noise_var,
    };
    let col = cfg.mode_row(alloc.sensing_mode);
    let sensing_gains: Vec<f64> = (0..cfg.n_f).map(|q| channels.sensing[(q, col)].norm_sqr()).collect();
    let gamma = db(gamma_s_db);
    let sensing_noise = sensing_noise_for_budget(&sensing_gains, gamma, s.comm.sensing_fraction * p_t);
    let sensing = sensing_power(&sensing_gains, gamma, sensing_noise);
    let data_budget = p_t - sensing.power.iter().sum::<f64>();
    Ok(CommSetup {
        basis,
        alloc,
        channels,
        truth,
        index_bits,
        sensing_gains,
        sensing_noise,
        sensing,
        data_budget,
    })
}

fn db(v: f64) -> f64 {
    10f64.powf(v / 10.0)
}

/// Jamming channels rebuilt from a jammer position estimate.
pub fn reconstructed_jamming(world: &World, jammer: &ScatterPoint) -> Vec<Vec<crate::numerics::CMat>> {
    let pos = jammer_array(&world.cfg, jammer, world.scene.jammer_elements);
    (0..world.geom.users.len())
        .map(|k| {
            (0..world.cfg.n_f)
                .map(|q| jamming_channel(&world.cfg, &world.geom, &pos, k, q))
                .collect()
        })
        .collect()
}

/// Outcome of one beamforming scheme, evaluated on the true links.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub label: String,
    pub state: BeamformerState,
    /// Report from the optimiser's own channel model (trace, duality).
    pub model: RateReport,
    /// SINR and ASR under the true jamming channel.
    pub truth: RateReport,
}

/// Runs the AO on `model` links and evaluates the result on the truth.
pub fn run_scheme(label: &str, setup: &CommSetup, model: &CommLinks, ao: &AoConfig) -> Result<SchemeOutcome, String> {
    let init = BeamformerState::identity(
        &setup.basis,
        &setup.alloc,
        model.subcarriers(),
        setup.data_budget,
        setup.sensing.power.clone(),
    )
    .map_err(|e| e.to_string())?;
    let (state, model_report) =
        run_ao(init, model, setup.data_budget, setup.index_bits, ao).map_err(|e| e.to_string())?;
    let truth = rate_report(&state, &setup.truth, setup.index_bits);
    Ok(SchemeOutcome {
        label: label.into(),
        state,
        model: model_report,
        truth,
    })
}

/// Fixed identity beamformers with uniform power.
pub fn identity_scheme(setup: &CommSetup) -> Result<SchemeOutcome, String> {
    let state = BeamformerState::identity(
        &setup.basis,
        &setup.alloc,
        setup.truth.subcarriers(),
        setup.data_budget,
        setup.sensing.power.clone(),
    )
    .map_err(|e| e.to_string())?;
    let truth = rate_report(&state, &setup.truth, setup.index_bits);
    Ok(SchemeOutcome {
        label: "identity".into(),
        state,
        model: truth.clone(),
        truth,
    })
}

/// Sensing stage of the pipeline: echoes at SSNR `gamma_s_db` with per-cell
/// noise, EMUSIC estimation and the jammer pick.
pub fn sense_for_pipeline(s: &Scenario, world: &World, gamma_s_db: f64, label: &str) -> Result<SensingReport, String> {
    let mut sc = s.sensing.config();
    sc.ssnr_db = gamma_s_db;
    sc.noise = EchoNoise::PerCell;
    let mut rng = crate::rng::stream(s.seed, &format!("echoes/{label}"));
    let echoes = simulate_echoes(
        &world.cfg,
        &world.geom,
        &world.scene,
        sc.ssnr_db,
        sc.noise,
        sc.realizations,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    estimate_scene(&world.cfg, &world.geom, &echoes, &sc).map_err(|e| e.to_string())
}

/// Jammer position estimate from a sensing report.
pub fn jammer_estimate(report: &SensingReport) -> Option<ScatterPoint> {
    let p = &report.estimate.points[report.jammer?];
    Some(ScatterPoint {
        range: p.range,
        azimuth: p.theta,
        elevation: p.phi,
        rcs: 1.0,
    })
}

/// Proposed scheme: sense, rebuild the jamming channel from the estimate and optimise.
pub fn proposed_scheme(
    world: &World,
    setup: &CommSetup,
    report: &SensingReport,
    ao: &AoConfig,
) -> Result<SchemeOutcome, String> {
    let jammer = jammer_estimate(report).ok_or("sensing detected no jammer")?;
    let model = setup.truth.with_jamming_channel(reconstructed_jamming(world, &jammer));
    run_scheme("proposed", setup, &model, ao)
}

/// Runs one experiment.
pub fn run_experiment(s: &Scenario, experiment: &str) -> Result<ResultBundle, HarnessError> {
    let id =
        canonical_experiment(experiment).ok_or_else(|| invalid("experiment", format!("unknown id `{experiment}`")))?;
    let r = match id {
        "sensing-accuracy" => sensing_accuracy(s),
        "emusic-vs-music" => emusic_vs_music(s),
        "resolution-vs-nt" => resolution_vs_nt(s),
        "steering-comparison" => steering_comparison(s),
        "ao-convergence" => ao_convergence(s),
        "jamming-mitigation" => jamming_mitigation(s),
        _ => full_pipeline(s),
    };
    r.map_err(|e| runtime(id, e))
}

fn sensing_echoes(s: &Scenario, world: &World, sc: &SensingConfig, label: &str) -> Result<EchoRealizations, String> {
    let mut rng = crate::rng::stream(s.seed, &format!("echoes/{label}"));
    simulate_echoes(
        &world.cfg,
        &world.geom,
        &world.scene,
        sc.ssnr_db,
        sc.noise,
        sc.realizations,
        &mut rng,
    )
    .map_err(|e| e.to_string())
}

fn sensing_accuracy(s: &Scenario) -> Result<ResultBundle, String> {
    let world = s.world();
    let sc = s.sensing.config();
    let echoes = sensing_echoes(s, &world, &sc, "sensing-accuracy")?;
    let report = estimate_scene(&world.cfg, &world.geom, &echoes, &sc).map_err(|e| e.to_string())?;
    let mut b = ResultBundle::new("sensing-accuracy");
    b.json("estimates", &report_json(&world.scene, &report));
    let (theta, phi) = export_axes(s);
    let oam = sc
        .subspace(
            &sample_covariance(&oam_snapshots(&echoes)).map_err(|e| e.to_string())?,
            sc.g_hat,
        )
        .map_err(|e| e.to_string())?;
    let spec = pseudospectrum_oam(&oam, &world.cfg, &world.geom, 0, &theta, &phi).map_err(|e| e.to_string())?;
    b.csv(
        "oam_spectrum_q0",
        &["theta_deg", "phi_deg", "value"],
        grid_rows(&spec.grid, DEG, DEG),
    );
    let freq = sc
        .subspace(
            &sample_covariance(&freq_snapshots(&echoes)).map_err(|e| e.to_string())?,
            sc.g_hat,
        )
        .map_err(|e| e.to_string())?;
    let coarse_phi = Axis::from_range("phi", sc.phi.start, sc.phi.stop(), s.output.spectrum_step_deg * DEG);
    let fspec =
        pseudospectrum_freq(&freq, &world.cfg, &world.geom, 1, &coarse_phi, &sc.range).map_err(|e| e.to_string())?;
    b.csv(
        "freq_spectrum_mode1",
        &["phi_deg", "range_m", "value"],
        grid_rows(&fspec.grid, DEG, 1.0),
    );
    Ok(b)
}

fn emusic_vs_music(s: &Scenario) -> Result<ResultBundle, String> {
    let world = s.world();
    let base = s.sensing.config();
    let echoes = sensing_echoes(s, &world, &base, "emusic-vs-music")?;
    let cov = sample_covariance(&oam_snapshots(&echoes)).map_err(|e| e.to_string())?;
    let (theta, phi) = export_axes(s);
    let jam = world.scene.jammer();
    let mut b = ResultBundle::new("emusic-vs-music");
    let mut rows = Vec::new();
    for &g in &s.emusic_vs_music.g_hat_values {
        for (method, reweight) in [("emusic", true), ("music", false)] {
            let sc = SensingConfig {
                g_hat: g,
                reweight,
                ..base.clone()
            };
            let report = estimate_scene(&world.cfg, &world.geom, &echoes, &sc).map_err(|e| e.to_string())?;
            let peaks = &report.oam_peaks[0];
            let jammer_in_peaks = peaks.iter().any(|p| {
                azimuth_distance(p.axis1, jam.azimuth) <= sc.angle_gate
                    && (p.axis2 - jam.elevation).abs() <= sc.angle_gate
            });
            let matches = match_estimates(&world.scene.points, &report);
            let all_recovered = matches.iter().all(|m| m.within(0.5, 0.5, 1.0));
            rows.push(json!({
                "g_hat": g,
                "method": method,
                "q0_peaks": peaks.iter().map(|p| json!({"azimuth_deg": p.axis1 / DEG, "elevation_deg": p.axis2 / DEG, "height": p.height})).collect::<Vec<_>>(),
                "jammer_in_peak_set": jammer_in_peaks,
                "all_points_recovered": all_recovered,
                "sensing": report_json(&world.scene, &report),
            }));
            let model = sc.subspace(&cov, g).map_err(|e| e.to_string())?;
            let spec =
                pseudospectrum_oam(&model, &world.cfg, &world.geom, 0, &theta, &phi).map_err(|e| e.to_string())?;
            let (n1, n2) = spec.grid.shape();
            let az = (0..n1).map(|i| {
                vec![
                    0.0,
                    theta.value(i) / DEG,
                    (0..n2).map(|j| spec.grid.get(i, j)).fold(0.0, f64::max),
                ]
            });
            let el = (0..n2).map(|j| {
                vec![
                    1.0,
                    phi.value(j) / DEG,
                    (0..n1).map(|i| spec.grid.get(i, j)).fold(0.0, f64::max),
                ]
            });
            b.csv(
                &format!("profiles_{method}_g{g}"),
                &["profile", "angle_deg", "value"],
                az.chain(el).collect::<Vec<_>>(),
            );
        }
    }
    b.json(
        "results",
        &json!({ "profile_codes": {"0": "azimuth", "1": "elevation"}, "runs": rows }),
    );
    Ok(b)
}

/// Two-target azimuth scan for one array size.
#[derive(Debug, Clone, Serialize)]
pub struct ResolutionResult {
    pub n_t: usize,
    pub theta_deg: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// Peaks inside the targets' span (±1°) above the detection floor, degrees.
    pub peaks_deg: Vec<f64>,
}

/// Azimuth pseudospectrum of the resolution pair at `n_t` elements.
pub fn resolution_scan(s: &Scenario, n_t: usize) -> Result<ResolutionResult, String> {
    let r = &s.resolution;
    let cfg = SystemConfig {
        n_t,
        ..s.system.config()
    };
    let geom = UcaGeometry {
        users: Vec::new(),
        ..s.geometry.geometry()
    };
    let scene = ScatterScene {
        points: r
            .azimuths_deg
            .iter()
            .map(|&a| ScatterPoint {
                range: r.range,
                azimuth: a * DEG,
                elevation: r.elevation_deg * DEG,
                rcs: 1.0,
            })
            .collect(),
        velocity: 0.0,
        jammer_index: 0,
        jammer_elements: 1,
    };
    let mut rng = crate::rng::stream(s.seed, &format!("echoes/resolution/nt{n_t}"));
    let echoes = simulate_echoes(
        &cfg,
        &geom,
        &scene,
        s.sensing.ssnr_db,
        EchoNoise::Uniform,
        r.realizations,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let cov = sample_covariance(&oam_snapshots(&echoes)).map_err(|e| e.to_string())?;
    let eig = hermitian_eig(&cov).map_err(|e| e.to_string())?;
    let model = crate::emusic::reweight_noise_subspace(&eig, r.g_hat, s.sensing.rho, s.sensing.nu)
        .map_err(|e| e.to_string())?;
    let theta = Axis::from_range(
        "theta",
        r.scan_min_deg * DEG,
        r.scan_max_deg * DEG,
        r.scan_step_deg * DEG,
    );
    let phi = Axis {
        name: "phi".into(),
        start: r.elevation_deg * DEG,
        step: 1.0,
        count: 1,
    };
    let spec = pseudospectrum_oam(&model, &cfg, &geom, 0, &theta, &phi).map_err(|e| e.to_string())?;
    let values: Vec<f64> = (0..theta.count).map(|i| spec.grid.get(i, 0)).collect();
    let top = values.iter().cloned().fold(0.0, f64::max);
    let lo = r.azimuths_deg.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = r.azimuths_deg.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let floor = db(s.sensing.floor_db);
    let peaks_deg = find_peaks_1d(&values, values.len(), 1)
        .into_iter()
        .filter(|&(_, h)| h >= top * floor)
        .map(|(i, _)| theta.value(i) / DEG)
        .filter(|&t| t >= lo && t <= hi)
        .collect::<Vec<f64>>();
    let mut peaks_deg = peaks_deg;
    peaks_deg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ResolutionResult {
        n_t,
        theta_deg: (0..theta.count).map(|i| theta.value(i) / DEG).collect(),
        spectrum: values,
        peaks_deg,
    })
}

fn resolution_vs_nt(s: &Scenario) -> Result<ResultBundle, String> {
    let mut b = ResultBundle::new("resolution-vs-nt");
    let mut summary = Vec::new();
    for &n in &s.resolution.n_t_values {
        let r = resolution_scan(s, n)?;
        b.csv(
            &format!("spectrum_nt{n}"),
            &["theta_deg", "value"],
            r.theta_deg.iter().zip(&r.spectrum).map(|(t, v)| vec![*t, *v]),
        );
        summary.push(json!({"n_t": n, "peaks_deg": r.peaks_deg, "peak_count": r.peaks_deg.len()}));
    }
    b.json(
        "summary",
        &json!({"targets_deg": s.resolution.azimuths_deg, "runs": summary}),
    );
    Ok(b)
}

/// Azimuth spectra of the four array models.
#[derive(Debug, Clone, Serialize)]
pub struct SteeringResult {
    pub theta_deg: Vec<f64>,
    pub spectra: Vec<(SteeringKind, Vec<f64>)>,
    /// Half-height width of the strongest peak in the width window, degrees.
    pub widths_deg: Vec<(SteeringKind, f64)>,
    /// `(max − min)/max` of each spectrum over the whole axis.
    pub flatness: Vec<(SteeringKind, f64)>,
}

/// Simulates the steering-comparison scene for every array model.
pub fn steering_results(s: &Scenario) -> Result<SteeringResult, String> {
    let st = &s.steering;
    let cfg = s.system.config();
    let geom = s.geometry.geometry();
    let step = st.theta_step_deg * DEG;
    let theta = Axis::from_range("theta", 0.0, 180.0 * DEG - step, step);
    let azimuths: Vec<f64> = st.azimuths_deg.iter().map(|a| a * DEG).collect();
    let mut spectra = Vec::new();
    let mut widths = Vec::new();
    let mut flatness = Vec::new();
    for kind in SteeringKind::ALL {
        let mut rng = crate::rng::stream(s.seed, &format!("steering/{}", kind.label()));
        let v = steering_comparison_spectrum(
            kind,
            &cfg,
            &geom,
            &azimuths,
            st.elevation_deg * DEG,
            s.sensing.ssnr_db,
            st.snapshots,
            st.g_hat,
            &theta,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let w = half_height_width(&v, &theta, st.width_window_deg[0] * DEG, st.width_window_deg[1] * DEG) / DEG;
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        widths.push((kind, w));
        flatness.push((kind, (max - min) / max));
        spectra.push((kind, v));
    }
    Ok(SteeringResult {
        theta_deg: (0..theta.count).map(|i| theta.value(i) / DEG).collect(),
        spectra,
        widths_deg: widths,
        flatness,
    })
}

fn steering_comparison(s: &Scenario) -> Result<ResultBundle, String> {
    let r = steering_results(s)?;
    let mut b = ResultBundle::new("steering-comparison");
    let header: Vec<&str> = std::iter::once("theta_deg")
        .chain(r.spectra.iter().map(|(k, _)| k.label()))
        .collect();
    let rows = (0..r.theta_deg.len()).map(|i| {
        std::iter::once(r.theta_deg[i])
            .chain(r.spectra.iter().map(|(_, v)| v[i]))
            .collect()
    });
    b.csv("spectra", &header, rows);
    b.json(
        "summary",
        &json!({
            "elevation_deg": s.steering.elevation_deg,
            "azimuths_deg": s.steering.azimuths_deg,
            "width_window_deg": s.steering.width_window_deg,
            "half_height_width_deg": r.widths_deg.iter().map(|(k, w)| (k.label().to_string(), finite_or_null(*w))).collect::<serde_json::Map<_, _>>(),
            "relative_flatness": r.flatness.iter().map(|(k, f)| (k.label().to_string(), json!(f))).collect::<serde_json::Map<_, _>>(),
        }),
    );
    Ok(b)
}

fn trace_rows(report: &RateReport) -> Vec<Vec<f64>> {
    report
        .block_objectives
        .iter()
        .zip(&report.asr_trace)
        .enumerate()
        .map(|(i, (o, a))| vec![(i + 1) as f64, *a, o[0], o[1], o[2], o[3]])
        .collect()
}

const TRACE_HEADER: [&str; 6] = [
    "iteration",
    "asr",
    "objective_weight",
    "objective_rx",
    "objective_tx",
    "objective_power",
];

fn scheme_json(o: &SchemeOutcome, n_f: usize) -> serde_json::Value {
    json!({
        "label": o.label,
        "asr": o.truth.asr,
        "asr_without_index": o.truth.rate_only,
        "model_asr": o.model.asr,
        "iterations": o.model.asr_trace.len(),
        "converged_at": o.model.converged_at,
        "index_term": o.truth.index_bits / n_f as f64,
    })
}

fn ao_convergence(s: &Scenario) -> Result<ResultBundle, String> {
    let world = s.world();
    let setup = comm_setup(s, &world, s.comm.comm_snr_db, s.sensing.gamma_s_db)?;
    let report = sense_for_pipeline(s, &world, s.sensing.gamma_s_db, "pipeline")?;
    let proposed = proposed_scheme(&world, &setup, &report, &s.ao)?;
    let low = sense_for_pipeline(s, &world, s.jamming.low_gamma_s_db, "pipeline-low")?;
    let low_scheme = match proposed_scheme(&world, &setup, &low, &s.ao) {
        Ok(mut o) => {
            o.label = "low_ssnr_threshold".into();
            Some(o)
        }
        Err(_) => None,
    };
    let no_sensing = run_scheme("no_sensing", &setup, &setup.truth.without_jamming(), &s.ao)?;
    let n_f = world.cfg.n_f;
    let mut b = ResultBundle::new("ao-convergence");
    b.csv("trace_proposed", &TRACE_HEADER, trace_rows(&proposed.model));
    b.csv("trace_no_sensing", &TRACE_HEADER, trace_rows(&no_sensing.model));
    let mut schemes = vec![scheme_json(&proposed, n_f), scheme_json(&no_sensing, n_f)];
    if let Some(o) = &low_scheme {
        b.csv("trace_low_ssnr_threshold", &TRACE_HEADER, trace_rows(&o.model));
        schemes.push(scheme_json(o, n_f));
    }
    b.json(
        "summary",
        &json!({
            "jammer_csi": "estimated",
            "initial_objective": proposed.model.initial_objective,
            "max_objective_increase": proposed.model.max_objective_increase(),
            "converged_at": proposed.model.converged_at,
            "no_mode_hopping_asr": proposed.truth.rate_only,
            "schemes": schemes,
        }),
    );
    Ok(b)
}

fn jamming_mitigation(s: &Scenario) -> Result<ResultBundle, String> {
    let world = s.world();
    let report = sense_for_pipeline(s, &world, s.sensing.gamma_s_db, "pipeline")?;
    let jammer = jammer_estimate(&report).ok_or("sensing detected no jammer")?;
    let recon = reconstructed_jamming(&world, &jammer);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &snr in &s.jamming.snr_db_values {
        let setup = comm_setup(s, &world, snr, s.sensing.gamma_s_db)?;
        let proposed = run_scheme(
            "proposed",
            &setup,
            &setup.truth.with_jamming_channel(recon.clone()),
            &s.ao,
        )?;
        let oracle = run_scheme("oracle_jammer_csi", &setup, &setup.truth, &s.ao)?;
        let no_sensing = run_scheme("no_sensing", &setup, &setup.truth.without_jamming(), &s.ao)?;
        let identity = identity_scheme(&setup)?;
        rows.push(vec![
            snr,
            proposed.truth.asr,
            oracle.truth.asr,
            no_sensing.truth.asr,
            identity.truth.asr,
        ]);
        table.push(json!({
            "comm_snr_db": snr,
            "proposed": proposed.truth.asr,
            "oracle_jammer_csi": oracle.truth.asr,
            "no_sensing": no_sensing.truth.asr,
            "identity": identity.truth.asr,
        }));
    }
    let mut b = ResultBundle::new("jamming-mitigation");
    b.csv(
        "asr_vs_snr",
        &["comm_snr_db", "proposed", "oracle_jammer_csi", "no_sensing", "identity"],
        rows,
    );
    b.json(
        "summary",
        &json!({
            "jnr_db": s.comm.jnr_db,
            "jammer_csi": "estimated; oracle_jammer_csi uses the true jammer position",
            "jammer_estimate": {"range": jammer.range, "azimuth_deg": jammer.azimuth / DEG, "elevation_deg": jammer.elevation / DEG},
            "sweep": table,
        }),
    );
    Ok(b)
}

fn full_pipeline(s: &Scenario) -> Result<ResultBundle, String> {
    let world = s.world();
    let setup = comm_setup(s, &world, s.comm.comm_snr_db, s.sensing.gamma_s_db)?;
    let report = sense_for_pipeline(s, &world, s.sensing.gamma_s_db, "pipeline")?;
    let proposed = proposed_scheme(&world, &setup, &report, &s.ao)?;
    let n_f = world.cfg.n_f;
    let mut b = ResultBundle::new("full-pipeline");
    b.json("estimates", &report_json(&world.scene, &report));
    b.csv("trace", &TRACE_HEADER, trace_rows(&proposed.model));
    let st = &proposed.state;
    b.json(
        "allocation",
        &json!({
            "slot": setup.alloc.slot,
            "sensing_mode": setup.alloc.sensing_mode,
            "user_modes": setup.alloc.user_modes,
            "sensing_power": st.sensing_power,
            "power_floor": st.power_floor,
            "power_dual": st.power_dual,
            "streams": st.streams.iter().enumerate().map(|(i, x)| json!({
                "subcarrier": x.subcarrier, "user": x.user, "mode": x.mode,
                "power": st.power[i], "weight": st.weights[i], "tx_dual": st.tx_duals[i],
                "sinr": proposed.truth.sinr[i], "model_sinr": proposed.model.sinr[i], "model_mse": proposed.model.mse[i],
            })).collect::<Vec<_>>(),
        }),
    );
    b.json(
        "summary",
        &json!({
            "jammer_csi": "estimated",
            "sensing_noise": setup.sensing_noise,
            "total_power": st.total_power(),
            "scheme": scheme_json(&proposed, n_f),
        }),
    );
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_reference_defaults() {
        let s = parse_scenario("{}", "inline").unwrap().scenario;
        assert_eq!(s, Scenario::default());
        let cfg = s.system.config();
        assert_eq!((cfg.n_f, cfg.delta_f, cfg.f0), (16, 200e3, 2.4e9));
        assert_eq!((s.geometry.r_t, s.geometry.r_r), (0.5, 0.25));
        assert_eq!(
            (s.sensing.gamma_s_db, s.sensing.rho, s.sensing.nu, s.scene.velocity),
            (20.0, 1.0, 1.0, 3.0)
        );
    }

    #[test]
    fn odd_element_count_is_rejected_with_path() {
        let e = parse_scenario(r#"{"system": {"n_t": 15}}"#, "inline").unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("system.n_t"), "{e}");
    }

    #[test]
    fn unknown_fields_are_reported_not_rejected() {
        let l = parse_scenario(r#"{"colour": 1, "sensing": {"ssnr_db": 10, "shade": 2}}"#, "inline").unwrap();
        assert_eq!(
            l.unknown_fields,
            vec!["colour".to_string(), "sensing.shade".to_string()]
        );
        assert_eq!(l.scenario.sensing.ssnr_db, 10.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_scenario("{\n  \"seed\": \"x\"\n}", "s.json").unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn hex_fields_decode() {
        let c = CommSpec {
            index_key: "ff".into(),
            index_bits: "a".into(),
            ..Default::default()
        };
        assert_eq!(c.key().unwrap(), 255);
        assert_eq!(
            c.bits().unwrap(),
            vec![false, false, false, false, true, false, true, false]
        );
        let bad = CommSpec {
            index_key: "zz".into(),
            ..Default::default()
        };
        assert!(bad.key().is_err());
    }

    #[test]
    fn experiment_ids_are_case_insensitive() {
        assert_eq!(canonical_experiment("resolution-vs-Nt"), Some("resolution-vs-nt"));
        assert_eq!(canonical_experiment("nope"), None);
    }

    #[test]
    fn empty_bundle_emits_metadata_only() {
        let dir = tempfile::tempdir().unwrap();
        let b = ResultBundle::new("x");
        let meta = RunMetadata {
            experiment: "x".into(),
            seed: 1,
            version: "0".into(),
            threads: 1,
            wall_time_s: 0.0,
            unknown_fields: vec![],
        };
        let m = emit(&b, &meta, dir.path()).unwrap();
        assert!(m.files.is_empty());
        assert!(dir.path().join("x/run.json").exists());
        assert!(dir.path().join("x/manifest.json").exists());
    }

    #[test]
    fn large_grid_round_trips_through_csv() {
        let a1 = Axis::from_range("theta", 0.0, 179.9, 0.1);
        let a2 = Axis::from_range("phi", 0.1, 90.0, 0.1);
        assert_eq!((a1.count, a2.count), (1800, 900));
        let g = Grid2D::from_fn(a1, a2, |x, y| x * 1000.0 + y);
        let mut b = ResultBundle::new("g");
        b.csv("grid", &["theta", "phi", "value"], grid_rows(&g, 1.0, 1.0));
        let mut r = csv::Reader::from_reader(b.artifacts[0].bytes.as_slice());
        assert_eq!(r.headers().unwrap(), vec!["theta", "phi", "value"]);
        let mut n = 0;
        for (k, rec) in r.records().enumerate() {
            let rec = rec.unwrap();
            let v: f64 = rec[2].parse().unwrap();
            assert_eq!(v, g.values()[k]);
            n += 1;
        }
        assert_eq!(n, 1800 * 900);
    }
}
