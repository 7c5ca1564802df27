//! End-to-end jammer sensing: noisy echo realisations, OAM- and
//! frequency-domain EMUSIC searches, peak association across subcarriers and
//! modes, range–angle pairing, fusion and velocity estimation.

use crate::channel::{
    point_sensing_channel, sensing_components, ChannelError, ScatterPoint, ScatterScene, SystemConfig, UcaGeometry,
};
use crate::emusic::{
    estimate_velocity, fuse_estimates, music_subspace, pseudospectrum_freq, pseudospectrum_oam,
    reweight_noise_subspace, sample_covariance, spectrum_value, Domain, DomainPeaks, EmusicError, Estimate,
    PointEstimate, Pseudospectrum, SnapshotSet, SubspaceModel,
};
use crate::numerics::{bessel_j, find_peaks, find_peaks_1d, hermitian_eig, Axis, CMat, CVec, Peak, C64};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Emusic(#[from] EmusicError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error("invalid sensing configuration: {0}")]
    Config(String),
}

/// How echo-domain noise variance is set from the target SSNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoNoise {
    /// White noise, variance = mean echo power / SSNR.
    Uniform,
    /// Per-cell variance |h|² / SSNR, as left by echo division when each
    /// cell's sensing power meets the SSNR threshold exactly.
    PerCell,
}

/// Search grids and estimator settings.
#[derive(Debug, Clone)]
pub struct SensingConfig {
    pub ssnr_db: f64,
    pub realizations: usize,
    pub noise: EchoNoise,
    pub g_hat: usize,
    pub rho: f64,
    pub nu: f64,
    /// `false` runs conventional MUSIC (unit noise weights).
    pub reweight: bool,
    /// Azimuth axis, rad.
    pub theta: Axis,
    /// Elevation axis, rad.
    pub phi: Axis,
    /// Range axis, m.
    pub range: Axis,
    /// Elevation step of the coarse range-profile search, rad.
    pub profile_phi_step: f64,
    /// Velocity axis, m/s.
    pub velocity: Axis,
    /// Peaks below the spectrum maximum by more than this many dB are ignored.
    pub floor_db: f64,
    /// Association gate in angle, rad.
    pub angle_gate: f64,
    /// Association gate in range, m.
    pub range_gate: f64,
    /// Peak merge distance, grid cells.
    pub min_separation: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        let d = PI / 180.0;
        SensingConfig {
            ssnr_db: 20.0,
            realizations: 256,
            noise: EchoNoise::Uniform,
            g_hat: 3,
            rho: 1.0,
            nu: 1.0,
            reweight: true,
            theta: Axis::from_range("theta", 0.0, 179.9 * d, 0.1 * d),
            phi: Axis::from_range("phi", 0.1 * d, 90.0 * d, 0.1 * d),
            range: Axis::from_range("range", 5.0, 80.0, 0.25),
            profile_phi_step: 1.0 * d,
            velocity: Axis::from_range("velocity", -12.0, 12.0, 0.05),
            floor_db: -30.0,
            angle_gate: 2.0 * d,
            range_gate: 3.0,
            min_separation: 3,
        }
    }
}

impl SensingConfig {
    /// EMUSIC (or MUSIC when `reweight` is off) subspace model of a covariance.
    pub fn subspace(&self, cov: &CMat, g_hat: usize) -> Result<SubspaceModel, SensingError> {
        let eig = hermitian_eig(cov)?;
        let g = g_hat.min(eig.dim() - 1).max(1);
        Ok(if self.reweight {
            reweight_noise_subspace(&eig, g, self.rho, self.nu)?
        } else {
            music_subspace(&eig, g)?
        })
    }

    fn floor_ratio(&self) -> f64 {
        10f64.powf(self.floor_db / 10.0)
    }
}

/// Noisy echo-channel realisations (`N_f × N_t` each).
#[derive(Debug, Clone)]
pub struct EchoRealizations {
    pub samples: Vec<CMat>,
    /// Noise variance per cell.
    pub noise_var: DMatrix<f64>,
}

/// Draws echo realisations: every point gets an independent uniform phase per
/// realisation and complex Gaussian noise is added per cell.
pub fn simulate_echoes<R: Rng>(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    scene: &ScatterScene,
    ssnr_db: f64,
    noise: EchoNoise,
    realizations: usize,
    rng: &mut R,
) -> Result<EchoRealizations, SensingError> {
    let parts = sensing_components(cfg, geom, scene)?;
    simulate_from_components(&parts, ssnr_db, noise, realizations, rng)
}

fn simulate_from_components<R: Rng>(
    parts: &[CMat],
    ssnr_db: f64,
    noise: EchoNoise,
    realizations: usize,
    rng: &mut R,
) -> Result<EchoRealizations, SensingError> {
    if realizations == 0 {
        return Err(SensingError::Config("at least one realisation is required".into()));
    }
    let (nf, nt) = parts[0].shape();
    let nominal: CMat = parts.iter().fold(CMat::zeros(nf, nt), |acc, h| acc + h);
    let gamma = 10f64.powf(ssnr_db / 10.0);
    let noise_var = match noise {
        EchoNoise::Uniform => {
            let mean = nominal.iter().map(|z| z.norm_sqr()).sum::<f64>() / (nf * nt) as f64;
            DMatrix::from_element(nf, nt, mean / gamma)
        }
        EchoNoise::PerCell => DMatrix::from_fn(nf, nt, |i, j| nominal[(i, j)].norm_sqr() / gamma),
    };
    let mut samples = Vec::with_capacity(realizations);
    for _ in 0..realizations {
        let mut h = CMat::zeros(nf, nt);
        for p in parts {
            let phase = C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>());
            h += p * phase;
        }
        for i in 0..nf {
            for j in 0..nt {
                h[(i, j)] += crate::rng::complex_gaussian(rng, noise_var[(i, j)]);
            }
        }
        samples.push(h);
    }
    Ok(EchoRealizations { samples, noise_var })
}

/// OAM-domain snapshots: every subcarrier row of every realisation (length `N_t`).
pub fn oam_snapshots(echoes: &EchoRealizations) -> SnapshotSet {
    let (nf, nt) = echoes.samples[0].shape();
    let mut data = CMat::zeros(nt, nf * echoes.samples.len());
    for (r, h) in echoes.samples.iter().enumerate() {
        for q in 0..nf {
            data.set_column(r * nf + q, &h.row(q).transpose());
        }
    }
    SnapshotSet {
        domain: Domain::Oam,
        data,
    }
}

/// Frequency-domain snapshots: every mode column of every realisation (length `N_f`).
pub fn freq_snapshots(echoes: &EchoRealizations) -> SnapshotSet {
    let (nf, nt) = echoes.samples[0].shape();
    let mut data = CMat::zeros(nf, nt * echoes.samples.len());
    for (r, h) in echoes.samples.iter().enumerate() {
        for i in 0..nt {
            data.set_column(r * nt + i, &h.column(i));
        }
    }
    SnapshotSet {
        domain: Domain::Frequency,
        data,
    }
}

/// Expected OAM-domain covariance for incoherent points plus white noise:
/// `(1/N_f) Σ_q Σ_g a_{qg} a_{qg}^H + σ² I` with `σ²` set from `ssnr_db`.
pub fn expected_oam_covariance(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    scene: &ScatterScene,
    ssnr_db: f64,
) -> Result<CMat, SensingError> {
    let parts = sensing_components(cfg, geom, scene)?;
    let nt = cfg.n_t;
    let mut r = CMat::zeros(nt, nt);
    let mut power = 0.0;
    for h in &parts {
        for q in 0..cfg.n_f {
            let row: CVec = h.row(q).transpose();
            power += row.norm_squared();
            r += &row * row.adjoint();
        }
    }
    r /= C64::new(cfg.n_f as f64, 0.0);
    let sigma2 = power / (cfg.n_f * nt) as f64 / 10f64.powf(ssnr_db / 10.0);
    Ok(r + CMat::identity(nt, nt) * C64::new(sigma2, 0.0))
}

/// Everything the sensing stage produces.
#[derive(Debug, Clone)]
pub struct SensingReport {
    pub estimate: Estimate,
    /// Index of the jammer within `estimate.points`.
    pub jammer: Option<usize>,
    /// Pairing score of each estimate.
    pub scores: Vec<f64>,
    pub oam_eigenvalues: Vec<f64>,
    pub freq_eigenvalues: Vec<f64>,
    /// OAM-domain peaks per subcarrier, above the detection floor.
    pub oam_peaks: Vec<Vec<Peak>>,
    /// Range-profile peaks `(R, height)` per mode, above the detection floor.
    pub range_peaks: Vec<Vec<(f64, f64)>>,
    /// Angle tracks `(θ, φ)` and range tracks `R` before pairing.
    pub angle_tracks: Vec<(f64, f64)>,
    pub range_tracks: Vec<f64>,
}

fn wrap_pi(d: f64) -> f64 {
    let r = d.rem_euclid(PI);
    if r > PI / 2.0 {
        r - PI
    } else {
        r
    }
}

/// Azimuth difference modulo π (the OAM steering period).
pub fn azimuth_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

/// OAM-domain peaks of one spectrum above the floor.
pub fn oam_peak_set(spec: &Pseudospectrum, max_count: usize, min_separation: usize, floor_ratio: f64) -> Vec<Peak> {
    let top = spec.grid.max_value();
    find_peaks(&spec.grid, max_count, min_separation)
        .into_iter()
        .filter(|p| p.height >= top * floor_ratio)
        .collect()
}

struct Track {
    sum: Vec<f64>,
    count: usize,
    weight: f64,
    last_member: usize,
}

impl Track {
    fn center(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }
}

/// Greedy gating of per-channel detections into tracks; `dist` returns the
/// gated distance between a detection and a track centre.
fn cluster<F>(groups: &[Vec<(Vec<f64>, f64)>], dist: F, gate: f64) -> Vec<Track>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let mut tracks: Vec<Track> = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        for (x, h) in group {
            let best = tracks
                .iter()
                .enumerate()
                .filter(|(_, t)| t.last_member != g)
                .map(|(i, t)| (i, dist(x, &t.center())))
                .filter(|(_, d)| *d <= gate)
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            match best {
                Some((i, _)) => {
                    let t = &mut tracks[i];
                    for (s, v) in t.sum.iter_mut().zip(x) {
                        *s += v;
                    }
                    t.count += 1;
                    t.weight += h;
                    t.last_member = g;
                }
                None => tracks.push(Track {
                    sum: x.clone(),
                    count: 1,
                    weight: *h,
                    last_member: g,
                }),
            }
        }
    }
    tracks
}

/// Noise-free `N_f × N_t` echo of a unit point at `(θ, φ, R)`.
fn joint_signature(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    theta: f64,
    phi: f64,
    range: f64,
) -> Result<CMat, SensingError> {
    let p = ScatterPoint {
        range,
        azimuth: theta,
        elevation: phi,
        rcs: 1.0,
    };
    Ok(point_sensing_channel(cfg, geom, &p, 0.0)?)
}

/// Minimum pair score for an angle track and a range track to be associated.
pub const PAIR_THRESHOLD: f64 = 0.5;

/// Per-subcarrier Capon (MVDR) filters passing the angle `(θ, φ)` with unit
/// gain; `signature` is the noise-free `N_f × N_t` echo of a point there.
fn capon_filters(inv_cov: &CMat, signature: &CMat) -> Vec<CVec> {
    (0..signature.nrows())
        .map(|q| {
            let a: CVec = signature.row(q).transpose();
            let w = inv_cov * &a;
            let g = a.dotc(&w);
            if g.norm() > 0.0 {
                w / g.conj()
            } else {
                CVec::zeros(a.len())
            }
        })
        .collect()
}

/// Capon spectrum `‖a‖² / (a^H R^{-1} a)` averaged over subcarrier rows of a
/// signature.
fn capon_power(inv_cov: &CMat, signature: &CMat) -> f64 {
    let nf = signature.nrows();
    (0..nf)
        .map(|q| {
            let a: CVec = signature.row(q).transpose();
            a.norm_squared() / a.dotc(&(inv_cov * &a)).re
        })
        .sum::<f64>()
        / nf as f64
}

/// Applies per-subcarrier spatial filters to an echo, giving its
/// frequency signature along the filtered direction.
fn filter_echo(filters: &[CVec], h: &CMat) -> CVec {
    CVec::from_fn(filters.len(), |q, _| {
        let row: CVec = h.row(q).transpose();
        filters[q].dotc(&row)
    })
}

/// Fraction of the spatially isolated echo energy explained by a point at
/// `reference`'s range: `Σ_r |y0^H y_r|² / (‖y0‖² Σ_r ‖y_r‖²)`, in `[0, 1]`.
fn range_fit(reference: &CVec, isolated: &[CVec]) -> f64 {
    let n0 = reference.norm_squared();
    let energy: f64 = isolated.iter().map(|y| y.norm_squared()).sum();
    if n0 <= 0.0 || energy <= 0.0 {
        return 0.0;
    }
    isolated.iter().map(|y| reference.dotc(y).norm_sqr()).sum::<f64>() / (n0 * energy)
}

fn window(name: &str, center: f64, half: f64, step: f64, lo: f64, hi: f64) -> Axis {
    let start = (center - half).max(lo);
    let stop = (center + half).min(hi);
    let n = ((stop - start) / step).floor() as usize + 1;
    Axis {
        name: name.into(),
        start,
        step,
        count: n.max(1),
    }
}

fn grid_argmax(spec: &Pseudospectrum) -> (f64, f64) {
    let g = &spec.grid;
    let (n1, n2) = g.shape();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for i in 0..n1 {
        for j in 0..n2 {
            if g.get(i, j) > best.2 {
                best = (i, j, g.get(i, j));
            }
        }
    }
    (g.axis1.value(best.0), g.axis2.value(best.1))
}

/// Runs the full sensing chain on pre-drawn echo realisations.
pub fn estimate_scene(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    echoes: &EchoRealizations,
    sc: &SensingConfig,
) -> Result<SensingReport, SensingError> {
    let nf = cfg.n_f;
    let nt = cfg.n_t;
    let floor = sc.floor_ratio();

    // OAM domain: per-subcarrier (θ, φ) peak sets, clustered into angle tracks.
    let oam_cov = sample_covariance(&oam_snapshots(echoes))?;
    let oam_model = sc.subspace(&oam_cov, sc.g_hat)?;
    let mut oam_peaks = Vec::with_capacity(nf);
    for q in 0..nf {
        let spec = pseudospectrum_oam(&oam_model, cfg, geom, q, &sc.theta, &sc.phi)?;
        oam_peaks.push(oam_peak_set(&spec, nt - 1, sc.min_separation, floor));
    }
    let groups: Vec<Vec<(Vec<f64>, f64)>> = oam_peaks
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|p| (vec![p.axis1, p.axis2], p.height / ps[0].height))
                .collect()
        })
        .collect();
    let angle_dist = |a: &[f64], b: &[f64]| azimuth_distance(a[0], b[0]).max((a[1] - b[1]).abs());
    let mut angle_tracks: Vec<Track> = cluster(&groups, angle_dist, sc.angle_gate)
        .into_iter()
        .filter(|t| 2 * t.count >= nf)
        .collect();
    angle_tracks.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());

    // Frequency domain: per-mode range profiles, clustered into range tracks.
    let freq_cov = sample_covariance(&freq_snapshots(echoes))?;
    let freq_model = sc.subspace(&freq_cov, sc.g_hat)?;
    let coarse_phi = Axis::from_range("phi", sc.phi.start, sc.phi.stop(), sc.profile_phi_step);
    let modes = cfg.modes();
    let range_peaks: Vec<Vec<(f64, f64)>> = modes
        .iter()
        .map(|&l| -> Result<Vec<(f64, f64)>, SensingError> {
            let spec = pseudospectrum_freq(&freq_model, cfg, geom, l, &coarse_phi, &sc.range)?;
            let (n1, n2) = spec.grid.shape();
            let profile: Vec<f64> = (0..n2)
                .map(|j| (0..n1).map(|i| spec.grid.get(i, j)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let top = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok(find_peaks_1d(&profile, nf - 1, sc.min_separation)
                .into_iter()
                .filter(|&(_, h)| h >= top * floor)
                .map(|(j, h)| (sc.range.value(j), h / top))
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let rgroups: Vec<Vec<(Vec<f64>, f64)>> = range_peaks
        .iter()
        .map(|ps| ps.iter().map(|&(r, h)| (vec![r], h)).collect())
        .collect();
    let mut range_tracks: Vec<Track> = cluster(&rgroups, |a, b| (a[0] - b[0]).abs(), sc.range_gate)
        .into_iter()
        .filter(|t| 2 * t.count >= nt)
        .collect();
    range_tracks.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    let keep = 12;
    angle_tracks.truncate(keep);
    range_tracks.truncate(keep);

    // Range per angle track: isolate the track's echo with Capon filters and
    // run a (φ, R) EMUSIC search on the isolated frequency snapshots.
    let angle_centers: Vec<Vec<f64>> = angle_tracks.iter().map(|t| t.center()).collect();
    let range_centers: Vec<f64> = range_tracks.iter().map(|t| t.center()[0]).collect();
    let inv_cov = oam_cov
        .clone()
        .try_inverse()
        .ok_or_else(|| SensingError::Config("OAM covariance is singular".into()))?;
    let probe_range = 0.5 * (sc.range.start + sc.range.stop());
    let fine = sc.theta.step;
    let per_track: Vec<Option<(DomainPeaks, f64, f64)>> = angle_centers
        .par_iter()
        .map(|a| -> Result<Option<(DomainPeaks, f64, f64)>, SensingError> {
            let (theta0, phi0) = (a[0], a[1]);
            let probe = joint_signature(cfg, geom, theta0, phi0, probe_range)?;
            let filters = capon_filters(&inv_cov, &probe);
            let isolated: Vec<CVec> = echoes.samples.iter().map(|h| filter_echo(&filters, h)).collect();
            let cov = sample_covariance(&SnapshotSet::from_vectors(Domain::Frequency, &isolated)?)?;
            let model = sc.subspace(&cov, 1)?;
            let proj = model.projector();
            let steer = |phi: f64, r: f64| -> Result<CVec, SensingError> {
                Ok(filter_echo(&filters, &joint_signature(cfg, geom, theta0, phi, r)?))
            };
            let profile: Vec<f64> = (0..sc.range.count)
                .map(|j| Ok(spectrum_value(&proj, &steer(phi0, sc.range.value(j))?)))
                .collect::<Result<_, SensingError>>()?;
            let coarse = (0..profile.len())
                .max_by(|&i, &j| profile[i].partial_cmp(&profile[j]).unwrap().then(j.cmp(&i)))
                .map(|j| sc.range.value(j))
                .unwrap_or(probe_range);
            let fit = range_fit(&steer(phi0, coarse)?, &isolated);
            if fit < PAIR_THRESHOLD {
                return Ok(None);
            }
            let th_axis = window("theta", theta0, sc.angle_gate, fine, f64::NEG_INFINITY, f64::INFINITY);
            let ph_axis = window("phi", phi0, sc.angle_gate, sc.phi.step, sc.phi.start, sc.phi.stop());
            let rg_axis = window(
                "range",
                coarse,
                sc.range_gate,
                sc.range.step / 5.0,
                sc.range.start,
                sc.range.stop(),
            );
            let oam: Vec<(f64, f64)> = (0..nf)
                .map(|q| -> Result<(f64, f64), SensingError> {
                    let s = pseudospectrum_oam(&oam_model, cfg, geom, q, &th_axis, &ph_axis)?;
                    let (t, p) = grid_argmax(&s);
                    Ok((t.rem_euclid(PI), p))
                })
                .collect::<Result<_, _>>()?;
            let mut best = (phi0, coarse, f64::NEG_INFINITY);
            for i in 0..ph_axis.count {
                for j in 0..rg_axis.count {
                    let v = spectrum_value(&proj, &steer(ph_axis.value(i), rg_axis.value(j))?);
                    if v > best.2 {
                        best = (ph_axis.value(i), rg_axis.value(j), v);
                    }
                }
            }
            let power = capon_power(&inv_cov, &probe);
            Ok(Some((
                DomainPeaks {
                    oam,
                    freq: vec![(best.0, best.1)],
                },
                fit,
                power,
            )))
        })
        .collect::<Result<_, _>>()?;
    // Elevation ghosts of one scatterer share its azimuth and range; keep the
    // detection with the largest Capon spectrum.
    let mut found: Vec<(DomainPeaks, f64, f64, PointEstimate)> = Vec::new();
    for (p, fit, power) in per_track.into_iter().flatten() {
        let est = fuse_estimates(std::slice::from_ref(&p), 0.0).points.remove(0);
        let twin = found.iter().position(|f| {
            azimuth_distance(f.3.theta, est.theta) <= sc.angle_gate && (f.3.range - est.range).abs() <= sc.range_gate
        });
        match twin {
            Some(i) if found[i].2 >= power => {}
            Some(i) => found[i] = (p, fit, power, est),
            None => found.push((p, fit, power, est)),
        }
    }
    let peaks: Vec<DomainPeaks> = found.iter().map(|f| f.0.clone()).collect();
    let scores: Vec<f64> = found.iter().map(|f| f.1).collect();

    // Velocity from slow-time rows after removing the strongest point's mode signature.
    let velocity = if peaks.is_empty() {
        0.0
    } else {
        let strongest = (0..peaks.len())
            .max_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap().then(j.cmp(&i)))
            .unwrap_or(0);
        let fused = fuse_estimates(&peaks[strongest..=strongest], 0.0);
        let p = &fused.points[0];
        let x = 2.0 * PI * geom.r_t * p.phi.sin() / cfg.wavelength(0);
        let comp: Vec<C64> = modes
            .iter()
            .map(|&l| {
                let j = bessel_j(l, x).unwrap_or(1.0);
                C64::from_polar(j.signum(), -2.0 * p.theta * l as f64)
            })
            .collect();
        let mut slow = oam_snapshots(echoes);
        for mut col in slow.data.column_iter_mut() {
            for (i, c) in comp.iter().enumerate() {
                col[i] *= c;
            }
        }
        estimate_velocity(&slow, cfg, 1, sc.rho, sc.nu, &sc.velocity)?
    };

    let estimate = fuse_estimates(&peaks, velocity);
    let jammer = estimate
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.detected)
        .max_by(|a, b| a.1.range.partial_cmp(&b.1.range).unwrap())
        .map(|(i, _)| i);
    Ok(SensingReport {
        estimate,
        jammer,
        scores,
        oam_eigenvalues: hermitian_eig(&oam_cov)?.eigenvalues,
        freq_eigenvalues: hermitian_eig(&freq_cov)?.eigenvalues,
        oam_peaks,
        range_peaks,
        angle_tracks: angle_centers.iter().map(|c| (c[0], c[1])).collect(),
        range_tracks: range_centers,
    })
}

/// Draws echoes and runs [`estimate_scene`].
pub fn sense_scene<R: Rng>(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    scene: &ScatterScene,
    sc: &SensingConfig,
    rng: &mut R,
) -> Result<SensingReport, SensingError> {
    let echoes = simulate_echoes(cfg, geom, scene, sc.ssnr_db, sc.noise, sc.realizations, rng)?;
    estimate_scene(cfg, geom, &echoes, sc)
}

/// Array response models compared in the steering experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringKind {
    /// Concentric transmit/receive UCAs with OAM modes: `e^{j2θl} J_l(k r_t sinφ) J_0(k r_r sinφ)`.
    OamMimo,
    /// OAM transmit UCA with a single receive element: `e^{jθl} J_l(k r_t sinφ)`.
    OamMiso,
    /// Conventional receive UCA: `e^{−j k r_r sinφ cos(2πm/N_t − θ)}`.
    Mimo,
    /// Single element: no angular dependence.
    Miso,
}

impl SteeringKind {
    pub const ALL: [SteeringKind; 4] = [
        SteeringKind::OamMimo,
        SteeringKind::OamMiso,
        SteeringKind::Mimo,
        SteeringKind::Miso,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SteeringKind::OamMimo => "oam_mimo",
            SteeringKind::OamMiso => "oam_miso",
            SteeringKind::Mimo => "mimo",
            SteeringKind::Miso => "miso",
        }
    }
}

/// Steering vector of the given array model at the carrier wavelength.
pub fn steering_kind(kind: SteeringKind, cfg: &SystemConfig, geom: &UcaGeometry, theta: f64, phi: f64) -> CVec {
    let k = 2.0 * PI / cfg.wavelength(0);
    let s = phi.sin();
    let modes = cfg.modes();
    let n = cfg.n_t;
    match kind {
        SteeringKind::OamMimo => {
            let j0 = bessel_j(0, k * geom.r_r * s).unwrap_or(0.0);
            CVec::from_fn(n, |i, _| {
                let l = modes[i];
                C64::from_polar(
                    bessel_j(l, k * geom.r_t * s).unwrap_or(0.0) * j0,
                    2.0 * theta * l as f64,
                )
            })
        }
        SteeringKind::OamMiso => CVec::from_fn(n, |i, _| {
            let l = modes[i];
            C64::from_polar(bessel_j(l, k * geom.r_t * s).unwrap_or(0.0), theta * l as f64)
        }),
        SteeringKind::Mimo => CVec::from_fn(n, |m, _| {
            let a = 2.0 * PI * (m + 1) as f64 / n as f64;
            C64::from_polar(1.0, -k * geom.r_r * s * (a - theta).cos())
        }),
        SteeringKind::Miso => CVec::from_element(n, C64::new(1.0, 0.0)),
    }
}

/// 1-D azimuth pseudospectrum of a steering model at fixed elevation.
pub fn azimuth_spectrum<F>(model: &SubspaceModel, steer: F, theta: &Axis) -> Vec<f64>
where
    F: Fn(f64) -> CVec + Sync,
{
    let proj = model.projector();
    (0..theta.count)
        .into_par_iter()
        .map(|i| crate::emusic::spectrum_value(&proj, &steer(theta.value(i))))
        .collect()
}

/// Simulates incoherent sources on a steering model and returns the
/// resulting azimuth pseudospectrum.
#[allow(clippy::too_many_arguments)]
pub fn steering_comparison_spectrum<R: Rng>(
    kind: SteeringKind,
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    azimuths: &[f64],
    phi: f64,
    ssnr_db: f64,
    snapshots: usize,
    g_hat: usize,
    theta: &Axis,
    rng: &mut R,
) -> Result<Vec<f64>, SensingError> {
    let n = cfg.n_t;
    let sources: Vec<CVec> = azimuths
        .iter()
        .map(|&t| steering_kind(kind, cfg, geom, t, phi))
        .collect();
    let power: f64 = sources.iter().map(|a| a.norm_squared()).sum::<f64>() / n as f64;
    let sigma2 = power / 10f64.powf(ssnr_db / 10.0);
    let mut data = CMat::zeros(n, snapshots);
    for c in 0..snapshots {
        let mut x = CVec::zeros(n);
        for a in &sources {
            x += a * C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>());
        }
        for i in 0..n {
            x[i] += crate::rng::complex_gaussian(rng, sigma2);
        }
        data.set_column(c, &x);
    }
    let cov = sample_covariance(&SnapshotSet {
        domain: Domain::Oam,
        data,
    })?;
    let eig = hermitian_eig(&cov)?;
    let model = reweight_noise_subspace(&eig, g_hat, 1.0, 1.0)?;
    Ok(azimuth_spectrum(
        &model,
        |t| steering_kind(kind, cfg, geom, t, phi),
        theta,
    ))
}

/// Full width at half height (linear) of the highest peak within `[lo, hi]`.
pub fn half_height_width(values: &[f64], axis: &Axis, lo: f64, hi: f64) -> f64 {
    let idx: Vec<usize> = (0..values.len())
        .filter(|&i| axis.value(i) >= lo && axis.value(i) <= hi)
        .collect();
    let Some(&peak) = idx.iter().max_by(|&&a, &&b| values[a].partial_cmp(&values[b]).unwrap()) else {
        return f64::NAN;
    };
    let half = 0.5 * values[peak];
    let mut a = peak;
    while a > 0 && values[a] > half {
        a -= 1;
    }
    let mut b = peak;
    while b + 1 < values.len() && values[b] > half {
        b += 1;
    }
    (b - a) as f64 * axis.step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn azimuth_distance_wraps() {
        assert!((azimuth_distance(0.01, PI - 0.01) - 0.02).abs() < 1e-12);
        assert!((azimuth_distance(1.0, 1.2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn half_width_of_triangle() {
        let axis = Axis::from_range("t", 0.0, 10.0, 1.0);
        let v = [0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0];
        assert_eq!(half_height_width(&v, &axis, 0.0, 10.0), 4.0);
    }

    #[test]
    fn miso_is_flat() {
        let cfg = SystemConfig::default();
        let g = UcaGeometry {
            r_t: 0.5,
            r_r: 0.25,
            users: vec![],
        };
        let a = steering_kind(SteeringKind::Miso, &cfg, &g, 0.1, 0.2);
        let b = steering_kind(SteeringKind::Miso, &cfg, &g, 1.1, 0.2);
        assert_eq!(a, b);
    }
}
