//! Channel synthesis from scene geometry: the mono-static OAM sensing channel
//! with Bessel-modulated mode gains, the user communication channels and the
//! jamming channels.
//!
//! Angles are radians. Azimuth `θ` is measured in the x-y plane of the
//! transmit UCA, elevation `φ` is the polar angle from its boresight (z axis).

use crate::numerics::{bessel_j, CMat, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// Global physical constants and OFDM numerology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Elements per UCA, equal to the number of OAM modes.
    pub n_t: usize,
    /// Number of subcarriers.
    pub n_f: usize,
    /// Oversampled sample count per symbol.
    pub n_f_prime: usize,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Carrier frequency, Hz.
    pub f0: f64,
    /// Cyclic prefix duration, s.
    pub t_cp: f64,
    /// Propagation speed, m/s.
    pub c: f64,
    /// Sensing attenuation constant.
    pub beta: f64,
    /// Communication attenuation constant per user.
    pub beta_user: Vec<f64>,
    /// Jamming attenuation constant per user.
    pub beta_jam: Vec<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let delta_f = 200e3;
        SystemConfig {
            n_t: 16,
            n_f: 16,
            n_f_prime: 16,
            delta_f,
            f0: 2.4e9,
            t_cp: 0.25 / delta_f,
            c: SPEED_OF_LIGHT,
            beta: 1.0,
            beta_user: vec![1.0, 1.0],
            beta_jam: vec![1.0, 1.0],
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_t < 2 || !self.n_t.is_multiple_of(2) {
            return Err(ChannelError::Config(format!(
                "n_t must be even and at least 2, got {}",
                self.n_t
            )));
        }
        if self.n_t > 128 {
            return Err(ChannelError::Config(format!("n_t = {} exceeds 128", self.n_t)));
        }
        if self.n_f < 1 {
            return Err(ChannelError::Config("n_f must be at least 1".into()));
        }
        if self.n_f_prime < self.n_f {
            return Err(ChannelError::Config(format!(
                "n_f_prime ({}) must be at least n_f ({})",
                self.n_f_prime, self.n_f
            )));
        }
        for (name, v) in [("delta_f", self.delta_f), ("f0", self.f0), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ChannelError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_cp.is_finite() && self.t_cp >= 0.0) {
            return Err(ChannelError::Config(format!(
                "t_cp must be non-negative, got {}",
                self.t_cp
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ChannelError::Config("beta must be non-negative".into()));
        }
        if self
            .beta_user
            .iter()
            .chain(&self.beta_jam)
            .any(|b| !(b.is_finite() && *b >= 0.0))
        {
            return Err(ChannelError::Config(
                "attenuation constants must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Useful symbol duration `1/Δf`.
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Symbol duration including the cyclic prefix.
    pub fn slot_period(&self) -> f64 {
        self.symbol_period() + self.t_cp
    }

    /// Sensing duration: one slot per OAM mode.
    pub fn sensing_duration(&self) -> f64 {
        self.n_t as f64 * self.slot_period()
    }

    /// Occupied bandwidth `N_f·Δf`.
    pub fn bandwidth(&self) -> f64 {
        self.n_f as f64 * self.delta_f
    }

    /// Frequency of subcarrier `q` (0-based).
    pub fn frequency(&self, q: usize) -> f64 {
        self.f0 + q as f64 * self.delta_f
    }

    /// Wavelength of subcarrier `q`.
    pub fn wavelength(&self, q: usize) -> f64 {
        self.c / self.frequency(q)
    }

    /// Mode orders `−N_t/2+1, …, N_t/2` in row order.
    pub fn modes(&self) -> Vec<i32> {
        let half = (self.n_t / 2) as i32;
        (1 - half..=half).collect()
    }

    /// Row index of mode `l` in the mode-domain basis.
    pub fn mode_row(&self, l: i32) -> usize {
        (l + (self.n_t / 2) as i32 - 1) as usize
    }

    /// Doppler shift `2 v f_0 / c`.
    pub fn doppler(&self, velocity: f64) -> f64 {
        2.0 * velocity * self.f0 / self.c
    }

    /// Largest radial speed for which the slow-time model is valid, `c Δf / (2 f_0)`.
    pub fn max_velocity(&self) -> f64 {
        self.c * self.delta_f / (2.0 * self.f0)
    }

    /// Range ambiguity of the subcarrier phase ramp alone, `c / (2Δf)`.
    ///
    /// The frequency-domain steering vector also carries the two-way distance
    /// phase, which halves the effective unambiguous range to `c / (4Δf)`.
    pub fn unambiguous_range(&self) -> f64 {
        self.c / (2.0 * self.delta_f)
    }

    pub fn beta_user(&self, k: usize) -> f64 {
        self.beta_user.get(k).copied().unwrap_or(1.0)
    }

    pub fn beta_jam(&self, k: usize) -> f64 {
        self.beta_jam.get(k).copied().unwrap_or(1.0)
    }
}

/// Placement of one user's receive UCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserArray {
    /// UCA radius, m.
    pub radius: f64,
    /// Centre position, m.
    pub center: [f64; 3],
    /// Rotation about the array's first in-plane axis, rad.
    pub pitch: f64,
    /// Rotation about the array's second in-plane axis, rad.
    pub yaw: f64,
}

impl UserArray {
    /// Array on a sphere of radius `distance` at (`azimuth`, `elevation`), shifted by `offset`.
    pub fn on_ring(radius: f64, distance: f64, azimuth: f64, elevation: f64, offset: [f64; 3]) -> Self {
        let p = spherical_to_cartesian(distance, azimuth, elevation);
        UserArray {
            radius,
            center: [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]],
            pitch: 0.0,
            yaw: 0.0,
        }
    }

    /// Orthonormal frame `(e1, e2, normal)` of the array plane.
    ///
    /// Without misalignment the frame is the transmit frame rotated so the
    /// normal lies along the line of sight, which keeps a user on the z axis
    /// coaxial with the transmitter.
    pub fn frame(&self) -> [[f64; 3]; 3] {
        let dist = norm3(self.center);
        let los = if dist > 0.0 {
            scale3(self.center, 1.0 / dist)
        } else {
            [0.0, 0.0, 1.0]
        };
        let r = rotation_taking_z_to(los);
        let mut e1 = mat_vec(&r, [1.0, 0.0, 0.0]);
        let mut e2 = mat_vec(&r, [0.0, 1.0, 0.0]);
        let mut nz = mat_vec(&r, [0.0, 0.0, 1.0]);
        // pitch: rotate (e2, n) about e1; yaw: rotate (e1, n) about e2
        let (sp, cp) = self.pitch.sin_cos();
        let (e2p, nzp) = (
            add3(scale3(e2, cp), scale3(nz, sp)),
            add3(scale3(nz, cp), scale3(e2, -sp)),
        );
        e2 = e2p;
        nz = nzp;
        let (sy, cy) = self.yaw.sin_cos();
        let (e1y, nzy) = (
            add3(scale3(e1, cy), scale3(nz, -sy)),
            add3(scale3(nz, cy), scale3(e1, sy)),
        );
        e1 = e1y;
        nz = nzy;
        [e1, e2, nz]
    }

    /// Position of receive element `u` (0-based) of an `n_t`-element UCA.
    pub fn element(&self, n_t: usize, u: usize) -> [f64; 3] {
        let [e1, e2, _] = self.frame();
        let a = 2.0 * PI * u as f64 / n_t as f64;
        add3(
            self.center,
            add3(scale3(e1, self.radius * a.cos()), scale3(e2, self.radius * a.sin())),
        )
    }
}

/// Transmit/echo UCA radii and the user arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcaGeometry {
    /// Transmit UCA radius, m.
    pub r_t: f64,
    /// Echo-receive UCA radius, m.
    pub r_r: f64,
    pub users: Vec<UserArray>,
}

impl UcaGeometry {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.r_t > 0.0 && self.r_r > 0.0) {
            return Err(ChannelError::Config("UCA radii must be positive".into()));
        }
        for (k, u) in self.users.iter().enumerate() {
            if !(u.radius > 0.0) {
                return Err(ChannelError::Config(format!("user {k} radius must be positive")));
            }
            if u.center.iter().any(|c| !c.is_finite()) {
                return Err(ChannelError::Config(format!("user {k} centre is not finite")));
            }
        }
        Ok(())
    }

    /// Position of transmit element `n` (0-based) on the x-y plane.
    pub fn tx_element(&self, n_t: usize, n: usize) -> [f64; 3] {
        let a = 2.0 * PI * n as f64 / n_t as f64;
        [self.r_t * a.cos(), self.r_t * a.sin(), 0.0]
    }
}

/// A reflecting point in spherical coordinates about the transmit UCA centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    /// Distance, m.
    pub range: f64,
    /// Azimuth, rad.
    pub azimuth: f64,
    /// Polar angle from boresight, rad.
    pub elevation: f64,
    /// Radar cross section.
    pub rcs: f64,
}

impl ScatterPoint {
    pub fn position(&self) -> [f64; 3] {
        spherical_to_cartesian(self.range, self.azimuth, self.elevation)
    }
}

/// Jammer plus clutter points sharing one radial velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterScene {
    pub points: Vec<ScatterPoint>,
    /// Radial velocity, m/s (positive closing).
    pub velocity: f64,
    /// Index of the jammer in `points`.
    pub jammer_index: usize,
    /// Number of jammer antenna elements.
    pub jammer_elements: usize,
}

impl ScatterScene {
    pub fn validate(&self, cfg: &SystemConfig, geom: &UcaGeometry) -> Result<(), ChannelError> {
        if self.points.is_empty() {
            return Err(ChannelError::Scene("scene has no points".into()));
        }
        if self.points.len() > cfg.n_t {
            return Err(ChannelError::Scene(format!(
                "{} points exceed the {} resolvable by N_t modes",
                self.points.len(),
                cfg.n_t
            )));
        }
        let min_range = 10.0 * geom.r_t.max(geom.r_r);
        for (g, p) in self.points.iter().enumerate() {
            if !(p.range > min_range) {
                return Err(ChannelError::Scene(format!(
                    "point {g}: range {} m must exceed {min_range} m (far field)",
                    p.range
                )));
            }
            if !(0.0..2.0 * PI).contains(&p.azimuth) {
                return Err(ChannelError::Scene(format!("point {g}: azimuth outside [0, 2π)")));
            }
            if !(p.elevation > 0.0 && p.elevation < PI / 2.0) {
                return Err(ChannelError::Scene(format!("point {g}: elevation outside (0, π/2)")));
            }
            if !p.rcs.is_finite() {
                return Err(ChannelError::Scene(format!("point {g}: rcs is not finite")));
            }
        }
        if self.jammer_index >= self.points.len() {
            return Err(ChannelError::Scene("jammer_index out of range".into()));
        }
        if self.jammer_elements == 0 {
            return Err(ChannelError::Scene("jammer needs at least one element".into()));
        }
        Ok(())
    }

    pub fn jammer(&self) -> &ScatterPoint {
        &self.points[self.jammer_index]
    }
}

/// Every channel used by one frame.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Sensing channel, `N_f × N_t` (subcarrier × slot/mode).
    pub sensing: CMat,
    /// `comm[k][q]`: user `k` at subcarrier `q`, `N_t × N_t`.
    pub comm: Vec<Vec<CMat>>,
    /// `jam[k][q]`: jammer to user `k` at subcarrier `q`, `N_t × N_J`.
    pub jam: Vec<Vec<CMat>>,
}

pub fn spherical_to_cartesian(range: f64, azimuth: f64, elevation: f64) -> [f64; 3] {
    let (st, ct) = azimuth.sin_cos();
    let (sp, cp) = elevation.sin_cos();
    [range * sp * ct, range * sp * st, range * cp]
}

/// Euclidean distance from a point to a UCA element at (`radius`, `alpha`) on the x-y plane.
pub fn exact_distance(point: &ScatterPoint, radius: f64, alpha: f64) -> f64 {
    let p = point.position();
    let e = [radius * alpha.cos(), radius * alpha.sin(), 0.0];
    distance3(p, e)
}

/// Far-field split of the element distance into an amplitude distance
/// `√(R²+r²)` and the subtractive phase term `r R sinφ cos(α−θ)/√(R²+r²)`.
pub fn approx_distance(point: &ScatterPoint, radius: f64, alpha: f64) -> (f64, f64) {
    let base = (point.range * point.range + radius * radius).sqrt();
    let correction = radius * point.range * point.elevation.sin() * (alpha - point.azimuth).cos() / base;
    (base, correction)
}

/// Complex mode gain `A_{q,l,g}` of a scatter point seen on OAM mode `mode`.
pub fn sensing_mode_gain(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    point: &ScatterPoint,
    q: usize,
    mode: i32,
) -> Result<C64, ChannelError> {
    if mode.unsigned_abs() as usize > cfg.n_t / 2 {
        return Err(ChannelError::Config(format!(
            "mode {mode} exceeds N_t/2 = {}",
            cfg.n_t / 2
        )));
    }
    let lambda = cfg.wavelength(q);
    let r2 = point.range * point.range;
    let dt = (r2 + geom.r_t * geom.r_t).sqrt();
    let dr = (r2 + geom.r_r * geom.r_r).sqrt();
    let amp = cfg.beta * lambda * cfg.n_t as f64 / (4.0 * PI * dt * dr);
    let phase = -2.0 * PI * (dt + dr) / lambda + 2.0 * point.azimuth * mode as f64;
    let s = point.elevation.sin();
    let jt = bessel_j(mode, 2.0 * PI * geom.r_t * point.range * s / (lambda * dt))?;
    let jr = bessel_j(0, 2.0 * PI * geom.r_r * point.range * s / (lambda * dr))?;
    Ok(C64::from_polar(amp * jt * jr, phase))
}

/// Checks the cyclic-prefix and velocity validity conditions of the echo model.
pub fn check_sensing_validity(cfg: &SystemConfig, scene: &ScatterScene) -> Result<(), ChannelError> {
    let max_delay = scene.points.iter().map(|p| 2.0 * p.range / cfg.c).fold(0.0, f64::max);
    if cfg.t_cp < max_delay {
        return Err(ChannelError::Config(format!(
            "cyclic prefix {:.3e} s is shorter than the maximum echo delay {:.3e} s",
            cfg.t_cp, max_delay
        )));
    }
    if scene.velocity.abs() >= cfg.max_velocity() {
        return Err(ChannelError::Config(format!(
            "velocity {} m/s is outside the model validity |v| < {:.3} m/s",
            scene.velocity,
            cfg.max_velocity()
        )));
    }
    Ok(())
}

/// Echo channel of a single point (including its cross section), `N_f × N_t`.
pub fn point_sensing_channel(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    point: &ScatterPoint,
    velocity: f64,
) -> Result<CMat, ChannelError> {
    let modes = cfg.modes();
    let tau = 2.0 * point.range / cfg.c;
    let fd = cfg.doppler(velocity);
    let t0 = cfg.slot_period();
    let mut h = CMat::zeros(cfg.n_f, cfg.n_t);
    for q in 0..cfg.n_f {
        let delay = C64::from_polar(point.rcs, -2.0 * PI * cfg.frequency(q) * tau);
        for (i, &l) in modes.iter().enumerate() {
            let slow = C64::from_polar(1.0, 2.0 * PI * fd * (i + 1) as f64 * t0);
            h[(q, i)] = sensing_mode_gain(cfg, geom, point, q, l)? * delay * slow;
        }
    }
    Ok(h)
}

/// Sensing channel `H_s` (`N_f × N_t`): the sum of every point's echo channel.
pub fn sensing_channel(cfg: &SystemConfig, geom: &UcaGeometry, scene: &ScatterScene) -> Result<CMat, ChannelError> {
    check_sensing_validity(cfg, scene)?;
    let mut h = CMat::zeros(cfg.n_f, cfg.n_t);
    for p in &scene.points {
        h += point_sensing_channel(cfg, geom, p, scene.velocity)?;
    }
    Ok(h)
}

/// Per-point echo channels, used when point phases are redrawn per realisation.
pub fn sensing_components(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    scene: &ScatterScene,
) -> Result<Vec<CMat>, ChannelError> {
    check_sensing_validity(cfg, scene)?;
    scene
        .points
        .iter()
        .map(|p| point_sensing_channel(cfg, geom, p, scene.velocity))
        .collect()
}

fn free_space(beta: f64, lambda: f64, d: f64) -> C64 {
    C64::from_polar(beta * lambda / (4.0 * PI * d), 2.0 * PI * d / lambda)
}

/// Communication channel of user `k` at subcarrier `q`, `N_t × N_t`
/// (receive element × transmit element), from exact 3-D distances.
pub fn comm_channel(cfg: &SystemConfig, geom: &UcaGeometry, k: usize, q: usize) -> CMat {
    let user = &geom.users[k];
    let lambda = cfg.wavelength(q);
    let beta = cfg.beta_user(k);
    let rx: Vec<[f64; 3]> = (0..cfg.n_t).map(|u| user.element(cfg.n_t, u)).collect();
    let tx: Vec<[f64; 3]> = (0..cfg.n_t).map(|n| geom.tx_element(cfg.n_t, n)).collect();
    CMat::from_fn(cfg.n_t, cfg.n_t, |u, n| {
        free_space(beta, lambda, distance3(rx[u], tx[n]))
    })
}

/// Element positions of a jammer array centred on `center`: a horizontal line
/// perpendicular to the line of sight, spacing `spacing`.
pub fn jammer_elements(center: [f64; 3], count: usize, spacing: f64) -> Vec<[f64; 3]> {
    let horiz = (center[0] * center[0] + center[1] * center[1]).sqrt();
    let dir = if horiz > 0.0 {
        [-center[1] / horiz, center[0] / horiz, 0.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|j| add3(center, scale3(dir, (j as f64 - mid) * spacing)))
        .collect()
}

/// Jamming channel to user `k` at subcarrier `q`, `N_t × N_J`, for jammer
/// elements at `jammer` (ground truth or reconstructed).
pub fn jamming_channel(cfg: &SystemConfig, geom: &UcaGeometry, jammer: &[[f64; 3]], k: usize, q: usize) -> CMat {
    let user = &geom.users[k];
    let lambda = cfg.wavelength(q);
    let beta = cfg.beta_jam(k);
    let rx: Vec<[f64; 3]> = (0..cfg.n_t).map(|u| user.element(cfg.n_t, u)).collect();
    CMat::from_fn(cfg.n_t, jammer.len(), |u, j| {
        free_space(beta, lambda, distance3(rx[u], jammer[j]))
    })
}

/// Jammer element positions for a jammer at `point`, spaced half a carrier wavelength.
pub fn jammer_array(cfg: &SystemConfig, point: &ScatterPoint, count: usize) -> Vec<[f64; 3]> {
    jammer_elements(point.position(), count, 0.5 * cfg.c / cfg.f0)
}

/// Builds the full channel set for a scene with the jammer at its true position.
pub fn build_channels(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    scene: &ScatterScene,
) -> Result<ChannelSet, ChannelError> {
    let sensing = sensing_channel(cfg, geom, scene)?;
    let jam_pos = jammer_array(cfg, scene.jammer(), scene.jammer_elements);
    let comm = (0..geom.users.len())
        .map(|k| (0..cfg.n_f).map(|q| comm_channel(cfg, geom, k, q)).collect())
        .collect();
    let jam = (0..geom.users.len())
        .map(|k| {
            (0..cfg.n_f)
                .map(|q| jamming_channel(cfg, geom, &jam_pos, k, q))
                .collect()
        })
        .collect();
    Ok(ChannelSet { sensing, comm, jam })
}

pub(crate) fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Rotation matrix taking the z axis onto the unit vector `d` about `z × d`.
fn rotation_taking_z_to(d: [f64; 3]) -> [[f64; 3]; 3] {
    let c = d[2];
    let axis = [-d[1], d[0], 0.0];
    let s = norm3(axis);
    if s < 1e-12 {
        return if c > 0.0 {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        } else {
            [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]
        };
    }
    let k = scale3(axis, 1.0 / s);
    let t = 1.0 - c;
    [
        [
            c + k[0] * k[0] * t,
            k[0] * k[1] * t - k[2] * s,
            k[0] * k[2] * t + k[1] * s,
        ],
        [
            k[1] * k[0] * t + k[2] * s,
            c + k[1] * k[1] * t,
            k[1] * k[2] * t - k[0] * s,
        ],
        [
            k[2] * k[0] * t - k[1] * s,
            k[2] * k[1] * t + k[0] * s,
            c + k[2] * k[2] * t,
        ],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn geom() -> UcaGeometry {
        UcaGeometry {
            r_t: 0.5,
            r_r: 0.25,
            users: vec![UserArray::on_ring(0.5, 30.0, 0.0, 0.0, [0.0; 3])],
        }
    }

    fn pt(range: f64, az: f64, el: f64) -> ScatterPoint {
        ScatterPoint {
            range,
            azimuth: deg(az),
            elevation: deg(el),
            rcs: 1.0,
        }
    }

    #[test]
    fn exact_distance_trivial_cases() {
        let p = ScatterPoint {
            elevation: 0.0,
            ..pt(39.0, 10.0, 50.0)
        };
        assert!((exact_distance(&p, 0.5, 1.3) - (39.0f64 * 39.0 + 0.25).sqrt()).abs() < 1e-12);
        assert!((exact_distance(&pt(39.0, 10.0, 50.0), 0.0, 0.0) - 39.0).abs() < 1e-12);
    }

    #[test]
    fn exact_distance_matches_cartesian_oracle() {
        let p = pt(39.0, 10.0, 50.0);
        let (t, f) = (deg(10.0), deg(50.0));
        let x = 39.0 * f.sin() * t.cos() - 0.5;
        let y = 39.0 * f.sin() * t.sin();
        let z = 39.0 * f.cos();
        let oracle = (x * x + y * y + z * z).sqrt();
        assert!((exact_distance(&p, 0.5, 0.0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn approx_distance_cases() {
        let p = ScatterPoint {
            elevation: 0.0,
            ..pt(39.0, 10.0, 50.0)
        };
        let (a, c) = approx_distance(&p, 0.5, 0.0);
        assert!((a - (39.0f64 * 39.0 + 0.25).sqrt()).abs() < 1e-12);
        assert_eq!(c, 0.0);
        let p = pt(39.0, 10.0, 50.0);
        let (a, c) = approx_distance(&p, 0.5, 0.0);
        let exact = exact_distance(&p, 0.5, 0.0);
        assert!(((a - c) - exact).abs() / exact <= 1e-3);
        let (_, c) = approx_distance(&p, 0.5, p.azimuth + PI / 2.0);
        assert!(c.abs() < 1e-15);
    }

    #[test]
    fn mode_gain_on_boresight() {
        let cfg = SystemConfig::default();
        let g = geom();
        let p = ScatterPoint {
            elevation: 1e-9,
            ..pt(39.0, 10.0, 50.0)
        };
        assert!(sensing_mode_gain(&cfg, &g, &p, 0, 3).unwrap().norm() < 1e-12);
        let a0 = sensing_mode_gain(&cfg, &g, &p, 0, 0).unwrap().norm();
        let lam = cfg.wavelength(0);
        let want = lam * 16.0 / (4.0 * PI * ((39.0f64.powi(2) + 0.25) * (39.0f64.powi(2) + 0.0625)).sqrt());
        assert!((a0 - want).abs() < 1e-12 * want);
    }

    #[test]
    fn mode_gain_symmetric_in_mode_sign() {
        let cfg = SystemConfig::default();
        let p = pt(25.0, 30.0, 38.0);
        for l in 1..=7 {
            let a = sensing_mode_gain(&cfg, &geom(), &p, 3, l).unwrap().norm();
            let b = sensing_mode_gain(&cfg, &geom(), &p, 3, -l).unwrap().norm();
            assert!((a - b).abs() <= 1e-14 * a.max(1e-300));
        }
        assert!(sensing_mode_gain(&cfg, &geom(), &p, 0, 9).is_err());
    }

    #[test]
    fn sensing_channel_zero_rcs_and_static_scene() {
        let cfg = SystemConfig::default();
        let scene = ScatterScene {
            points: vec![ScatterPoint {
                rcs: 0.0,
                ..pt(39.0, 10.0, 50.0)
            }],
            velocity: 3.0,
            jammer_index: 0,
            jammer_elements: 1,
        };
        let h = sensing_channel(&cfg, &geom(), &scene).unwrap();
        assert!(h.iter().all(|z| z.norm() == 0.0));

        // v = 0: every slot sees exactly the mode gain and delay phase
        let scene = ScatterScene {
            points: vec![pt(39.0, 10.0, 50.0)],
            velocity: 0.0,
            ..scene
        };
        let h = sensing_channel(&cfg, &geom(), &scene).unwrap();
        let tau = 78.0 / cfg.c;
        for (i, &l) in cfg.modes().iter().enumerate() {
            let a = sensing_mode_gain(&cfg, &geom(), &scene.points[0], 2, l).unwrap();
            let want = a * C64::from_polar(1.0, -2.0 * PI * cfg.frequency(2) * tau);
            assert!((h[(2, i)] - want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn sensing_channel_rejects_long_delay_and_fast_motion() {
        let cfg = SystemConfig::default();
        let mut scene = ScatterScene {
            points: vec![pt(500.0, 10.0, 50.0)],
            velocity: 0.0,
            jammer_index: 0,
            jammer_elements: 1,
        };
        assert!(sensing_channel(&cfg, &geom(), &scene).is_err());
        scene.points[0].range = 39.0;
        scene.velocity = 2.0e4;
        assert!(sensing_channel(&cfg, &geom(), &scene).is_err());
    }

    #[test]
    fn coaxial_user_channel_is_circulant() {
        let cfg = SystemConfig::default();
        let g = geom();
        let h = comm_channel(&cfg, &g, 0, 0);
        let n = cfg.n_t;
        for u in 0..n {
            for m in 0..n {
                let a = h[(u, m)];
                let b = h[((u + 1) % n, (m + 1) % n)];
                assert!((a - b).norm() < 1e-12 * a.norm());
            }
        }
    }

    #[test]
    fn jammer_zero_attenuation_gives_zero_matrix() {
        let cfg = SystemConfig {
            beta_jam: vec![0.0],
            ..Default::default()
        };
        let g = geom();
        let jam = jammer_array(&cfg, &pt(39.0, 10.0, 50.0), 4);
        let h = jamming_channel(&cfg, &g, &jam, 0, 0);
        assert_eq!(h.shape(), (16, 4));
        assert!(h.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn user_frame_is_orthonormal() {
        let mut u = UserArray::on_ring(0.5, 30.0, deg(40.0), deg(45.0), [0.3, 0.0, 0.0]);
        u.pitch = deg(4.0);
        u.yaw = deg(-3.0);
        let f = u.frame();
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|c| f[i][c] * f[j][c]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }
}
