//! Enhanced MUSIC estimation: sample covariance, noise-subspace reweighting,
//! OAM-domain `(θ, φ)` and frequency-domain `(φ, R)` pseudospectra, 1-D
//! velocity search and fusion of per-domain peaks into point estimates.

use crate::channel::{SystemConfig, UcaGeometry};
use crate::numerics::{bessel_j, hermitian_eig, Axis, CMat, CVec, EigenDecomposition, Grid2D, NumericsError, C64};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Pseudospectrum denominators are clamped to this value.
pub const DENOMINATOR_FLOOR: f64 = 1e-18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmusicError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("reweighting parameters outside the valid range: {0}")]
    Validity(String),
    #[error("outside model validity: {0}")]
    Model(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Which array dimension a snapshot spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Domain {
    /// Length `N_t`: one subcarrier across modes (or slow time).
    Oam,
    /// Length `N_f`: one mode across subcarriers.
    Frequency,
}

/// Snapshot vectors stored as the columns of one matrix.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub domain: Domain,
    pub data: CMat,
}

impl SnapshotSet {
    pub fn from_vectors(domain: Domain, vectors: &[CVec]) -> Result<Self, EmusicError> {
        let first = vectors
            .first()
            .ok_or_else(|| EmusicError::Contract("snapshot set is empty".into()))?;
        let dim = first.len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(EmusicError::Contract("snapshot vectors differ in length".into()));
        }
        Ok(SnapshotSet {
            domain,
            data: CMat::from_columns(vectors),
        })
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

/// `R = (1/𝒩) Σ h h^H`.
pub fn sample_covariance(snapshots: &SnapshotSet) -> Result<CMat, EmusicError> {
    if snapshots.is_empty() {
        return Err(EmusicError::Contract("snapshot set is empty".into()));
    }
    let x = &snapshots.data;
    let r = x * x.adjoint() / C64::new(x.ncols() as f64, 0.0);
    Ok((&r + r.adjoint()) * C64::new(0.5, 0.0))
}

/// Noise subspace with optional eigenvalue-dependent column weights.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    pub signal_dim: usize,
    /// Columns `Ĝ+1 … dim` of the eigenbasis, scaled.
    pub noise_subspace: CMat,
    /// Scale applied to each noise column.
    pub weights: Vec<f64>,
    pub raw_eigen: EigenDecomposition,
    pub rho: f64,
    pub nu: f64,
    pub reweighted: bool,
}

impl SubspaceModel {
    /// Noise projector `Û_n Û_n^H`.
    pub fn projector(&self) -> CMat {
        &self.noise_subspace * self.noise_subspace.adjoint()
    }

    pub fn dim(&self) -> usize {
        self.raw_eigen.dim()
    }
}

fn check_signal_dim(eig: &EigenDecomposition, g_hat: usize) -> Result<(), EmusicError> {
    if g_hat < 1 || g_hat >= eig.dim() {
        return Err(EmusicError::Contract(format!(
            "signal dimension {g_hat} must lie in [1, {})",
            eig.dim()
        )));
    }
    Ok(())
}

fn build_subspace(
    eig: &EigenDecomposition,
    g_hat: usize,
    rho: f64,
    nu: f64,
    weights: Vec<f64>,
    reweighted: bool,
) -> SubspaceModel {
    let n = eig.dim();
    let mut un = eig.eigenvectors.columns(g_hat, n - g_hat).into_owned();
    for (j, w) in weights.iter().enumerate() {
        un.column_mut(j).scale_mut(*w);
    }
    SubspaceModel {
        signal_dim: g_hat,
        noise_subspace: un,
        weights,
        raw_eigen: eig.clone(),
        rho,
        nu,
        reweighted,
    }
}

/// Scales noise eigenvector `Ĝ+κ` by `(ρ μ_min / μ_{Ĝ+κ})^ν`.
pub fn reweight_noise_subspace(
    eig: &EigenDecomposition,
    g_hat: usize,
    rho: f64,
    nu: f64,
) -> Result<SubspaceModel, EmusicError> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(EmusicError::Validity(format!("rho = {rho} must lie in (0, 1]")));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(EmusicError::Validity(format!("nu = {nu} must be positive")));
    }
    check_signal_dim(eig, g_hat)?;
    let n = eig.dim();
    let mu_min = eig.eigenvalues[n - 1];
    let weights = (g_hat..n)
        .map(|i| {
            let mu = eig.eigenvalues[i];
            if mu > 0.0 && mu_min > 0.0 {
                (rho * mu_min / mu).powf(nu)
            } else {
                rho.powf(nu)
            }
        })
        .collect();
    Ok(build_subspace(eig, g_hat, rho, nu, weights, true))
}

/// Conventional MUSIC noise subspace (unit weights).
pub fn music_subspace(eig: &EigenDecomposition, g_hat: usize) -> Result<SubspaceModel, EmusicError> {
    check_signal_dim(eig, g_hat)?;
    let weights = vec![1.0; eig.dim() - g_hat];
    Ok(build_subspace(eig, g_hat, 1.0, 1.0, weights, false))
}

/// Signal dimension from the largest ratio between consecutive eigenvalues.
pub fn estimate_signal_dim(eig: &EigenDecomposition) -> usize {
    let mu = &eig.eigenvalues;
    let mut best = (1, f64::NEG_INFINITY);
    for i in 0..mu.len().saturating_sub(1) {
        let ratio = mu[i] / mu[i + 1].max(f64::MIN_POSITIVE);
        if ratio > best.1 {
            best = (i + 1, ratio);
        }
    }
    best.0
}

/// Trace masses of the noise subspace split at the true signal dimension.
#[derive(Debug, Clone, Copy)]
pub struct ProjectorRatio {
    /// `Tr(Û_χ Û_χ^H) / Tr(Û_n Û_n^H)` after reweighting.
    pub reweighted: f64,
    /// The same ratio with unit weights, `(G − Ĝ)/(N − G)`.
    pub unweighted: f64,
    /// `(μ_{G+1}/μ_G)^{2ν}`, the contraction bound on `reweighted/unweighted`.
    pub contraction: f64,
}

/// Ratio of misclassified-signal to true-noise projector masses for a
/// subspace model whose true signal dimension is `g_true > Ĝ`.
pub fn projector_ratio(model: &SubspaceModel, g_true: usize) -> Result<ProjectorRatio, EmusicError> {
    let g_hat = model.signal_dim;
    let n = model.dim();
    if g_true <= g_hat || g_true >= n {
        return Err(EmusicError::Contract(format!(
            "true dimension {g_true} must lie in ({g_hat}, {n})"
        )));
    }
    let split = g_true - g_hat;
    let mass = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>();
    let reweighted = mass(&model.weights[..split]) / mass(&model.weights[split..]);
    let unweighted = split as f64 / (n - g_true) as f64;
    let mu = &model.raw_eigen.eigenvalues;
    let contraction = (mu[g_true] / mu[g_true - 1]).powf(2.0 * model.nu);
    Ok(ProjectorRatio {
        reweighted,
        unweighted,
        contraction,
    })
}

/// OAM-domain steering vector: entry `l` is `e^{j2θl} J_l(2π r_t sinφ / λ_q)`.
pub fn steering_oam(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    q: usize,
    theta: f64,
    phi: f64,
) -> Result<CVec, EmusicError> {
    let x = 2.0 * PI * geom.r_t * phi.sin() / cfg.wavelength(q);
    let modes = cfg.modes();
    let mut a = CVec::zeros(modes.len());
    for (i, &l) in modes.iter().enumerate() {
        a[i] = C64::from_polar(bessel_j(l, x)?, 2.0 * theta * l as f64);
    }
    Ok(a)
}

/// Frequency-domain steering vector of mode `l` for elevation `phi` and range `range`.
pub fn steering_freq(
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    mode: i32,
    phi: f64,
    range: f64,
) -> Result<CVec, EmusicError> {
    if !(range > 0.0) {
        return Err(EmusicError::Contract(format!("range {range} must be positive")));
    }
    let r2 = range * range;
    let dt = (r2 + geom.r_t * geom.r_t).sqrt();
    let dr = (r2 + geom.r_r * geom.r_r).sqrt();
    let s = phi.sin();
    let mut b = CVec::zeros(cfg.n_f);
    for q in 0..cfg.n_f {
        let lambda = cfg.wavelength(q);
        let amp = lambda / (dt * dr)
            * bessel_j(0, 2.0 * PI * geom.r_r * range * s / (lambda * dr))?
            * bessel_j(mode, 2.0 * PI * geom.r_t * range * s / (lambda * dt))?;
        let phase = -2.0 * PI * (dt + dr) / lambda - 2.0 * PI * (2.0 * range / cfg.c) * cfg.frequency(q);
        b[q] = C64::from_polar(amp, phase);
    }
    Ok(b)
}

/// Rejects ranges beyond the subcarrier-ramp ambiguity `c/(2Δf)`.
pub fn check_unambiguous_range(cfg: &SystemConfig, range: f64) -> Result<(), EmusicError> {
    let limit = cfg.unambiguous_range();
    if range >= limit {
        return Err(EmusicError::Model(format!(
            "range {range} m is beyond the unambiguous range {limit:.1} m"
        )));
    }
    Ok(())
}

/// A pseudospectrum together with the number of cells whose denominator was clamped.
#[derive(Debug, Clone)]
pub struct Pseudospectrum {
    pub grid: Grid2D,
    pub saturated: usize,
}

/// `1 / (â^H Q â)` for unit-norm `â`; returns (value, clamped).
fn inverse_quadratic(denominator: f64) -> (f64, bool) {
    if denominator < DENOMINATOR_FLOOR {
        (1.0 / DENOMINATOR_FLOOR, true)
    } else {
        (1.0 / denominator, false)
    }
}

/// Evaluates `P_q(θ, φ) = 1/(â_q^H Û_n Û_n^H â_q)` with unit-norm steering on
/// a grid whose first axis is azimuth and second is elevation (radians).
pub fn pseudospectrum_oam(
    subspace: &SubspaceModel,
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    q: usize,
    theta: &Axis,
    phi: &Axis,
) -> Result<Pseudospectrum, EmusicError> {
    let n = cfg.n_t;
    if subspace.dim() != n {
        return Err(EmusicError::Contract("subspace is not OAM-domain".into()));
    }
    let proj = subspace.projector();
    let modes = cfg.modes();
    let k = 2.0 * PI * geom.r_t / cfg.wavelength(q);

    // For each elevation, the quadratic form collapses to a trigonometric
    // polynomial in 2θ with coefficients c_d = Σ_{m−l=d} J_l J_m Q_lm.
    let coeffs: Vec<(Vec<C64>, f64)> = (0..phi.count)
        .into_par_iter()
        .map(|j| {
            let x = k * phi.value(j).sin();
            let bj: Vec<f64> = modes.iter().map(|&l| bessel_j(l, x).unwrap_or(0.0)).collect();
            let norm2: f64 = bj.iter().map(|v| v * v).sum();
            let mut c = vec![C64::new(0.0, 0.0); n];
            for a in 0..n {
                for b in a..n {
                    c[b - a] += proj[(a, b)] * (bj[a] * bj[b]);
                }
            }
            (c, norm2)
        })
        .collect();
    let harmonics: Vec<Vec<C64>> = (0..theta.count)
        .map(|i| {
            let t = theta.value(i);
            (0..n).map(|d| C64::from_polar(1.0, 2.0 * t * d as f64)).collect()
        })
        .collect();

    let rows: Vec<(Vec<f64>, usize)> = (0..theta.count)
        .into_par_iter()
        .map(|i| {
            let h = &harmonics[i];
            let mut out = Vec::with_capacity(phi.count);
            let mut sat = 0;
            for (c, norm2) in &coeffs {
                if *norm2 < 1e-300 {
                    out.push(1.0);
                    continue;
                }
                let mut acc = c[0].re;
                for d in 1..n {
                    acc += 2.0 * (c[d] * h[d]).re;
                }
                let (v, clamped) = inverse_quadratic(acc / norm2);
                sat += usize::from(clamped);
                out.push(v);
            }
            (out, sat)
        })
        .collect();
    let saturated = rows.iter().map(|r| r.1).sum();
    let values = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(Pseudospectrum {
        grid: Grid2D::new(theta.clone(), phi.clone(), values),
        saturated,
    })
}

/// Value of `1/(b̂^H Û_n Û_n^H b̂)` for one steering vector.
pub fn spectrum_value(proj: &CMat, b: &CVec) -> f64 {
    let norm2 = b.norm_squared();
    if norm2 < 1e-300 {
        return 1.0;
    }
    let d = (b.adjoint() * proj * b)[(0, 0)].re / norm2;
    inverse_quadratic(d).0
}

/// Evaluates `P_l(φ, R)` on a grid whose first axis is elevation (rad) and
/// second is range (m).
pub fn pseudospectrum_freq(
    subspace: &SubspaceModel,
    cfg: &SystemConfig,
    geom: &UcaGeometry,
    mode: i32,
    phi: &Axis,
    range: &Axis,
) -> Result<Pseudospectrum, EmusicError> {
    if subspace.dim() != cfg.n_f {
        return Err(EmusicError::Contract("subspace is not frequency-domain".into()));
    }
    if range.start <= 0.0 {
        return Err(EmusicError::Contract("range axis must be positive".into()));
    }
    let proj = subspace.projector();
    let rows: Vec<Result<(Vec<f64>, usize), EmusicError>> = (0..phi.count)
        .into_par_iter()
        .map(|i| {
            let p = phi.value(i);
            let mut out = Vec::with_capacity(range.count);
            let mut sat = 0;
            for j in 0..range.count {
                let b = steering_freq(cfg, geom, mode, p, range.value(j))?;
                let norm2 = b.norm_squared();
                let v = if norm2 < 1e-300 {
                    1.0
                } else {
                    let d = (b.adjoint() * &proj * &b)[(0, 0)].re / norm2;
                    let (v, clamped) = inverse_quadratic(d);
                    sat += usize::from(clamped);
                    v
                };
                out.push(v);
            }
            Ok((out, sat))
        })
        .collect();
    let mut values = Vec::with_capacity(phi.count * range.count);
    let mut saturated = 0;
    for r in rows {
        let (v, s) = r?;
        values.extend(v);
        saturated += s;
    }
    Ok(Pseudospectrum {
        grid: Grid2D::new(phi.clone(), range.clone(), values),
        saturated,
    })
}

/// Slow-time steering vector `e^{j2π f_d i T_0}`, `i = 1 … N_t`.
pub fn steering_velocity(cfg: &SystemConfig, velocity: f64) -> CVec {
    let fd = cfg.doppler(velocity);
    let t0 = cfg.slot_period();
    CVec::from_fn(cfg.n_t, |i, _| {
        C64::from_polar(1.0, 2.0 * PI * fd * (i + 1) as f64 * t0)
    })
}

/// 1-D EMUSIC velocity search over slow-time snapshots (length `N_t`).
///
/// Returns the grid velocity with the largest pseudospectrum value.
pub fn estimate_velocity(
    snapshots: &SnapshotSet,
    cfg: &SystemConfig,
    g_hat: usize,
    rho: f64,
    nu: f64,
    velocity: &Axis,
) -> Result<f64, EmusicError> {
    if snapshots.dim() < 2 || snapshots.dim() != cfg.n_t {
        return Err(EmusicError::Contract(
            "velocity search needs N_t ≥ 2 slow-time samples".into(),
        ));
    }
    let vmax = cfg.max_velocity();
    if velocity.start.abs() >= vmax || velocity.stop().abs() >= vmax {
        return Err(EmusicError::Model(format!(
            "velocity search range exceeds the model validity |v| < {vmax:.3} m/s"
        )));
    }
    let r = sample_covariance(snapshots)?;
    let eig = hermitian_eig(&r)?;
    let model = reweight_noise_subspace(&eig, g_hat, rho, nu)?;
    let proj = model.projector();
    let mut best = (velocity.start, f64::NEG_INFINITY);
    for i in 0..velocity.count {
        let v = velocity.value(i);
        let p = spectrum_value(&proj, &steering_velocity(cfg, v));
        if p > best.1 {
            best = (v, p);
        }
    }
    Ok(best.0)
}

/// Per-domain peak values associated with one scatter point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DomainPeaks {
    /// `(θ̂_q, φ̂_q)` per subcarrier, radians.
    pub oam: Vec<(f64, f64)>,
    /// `(φ̂_l, R̂_l)` per mode, radians and metres.
    pub freq: Vec<(f64, f64)>,
}

/// Fused estimate of one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEstimate {
    pub detected: bool,
    pub theta: f64,
    pub phi: f64,
    pub range: f64,
    pub raw: DomainPeaks,
}

/// Fused estimates for all associated points plus the shared velocity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub points: Vec<PointEstimate>,
    pub velocity: f64,
}

impl Estimate {
    pub fn detected(&self) -> impl Iterator<Item = &PointEstimate> {
        self.points.iter().filter(|p| p.detected)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Arithmetic means of per-domain peaks: azimuth over subcarriers, elevation
/// over subcarriers and modes together, range over modes. A point with an
/// empty domain is marked undetected.
pub fn fuse_estimates(peaks: &[DomainPeaks], velocity: f64) -> Estimate {
    let points = peaks
        .iter()
        .map(|p| {
            let detected = !p.oam.is_empty() && !p.freq.is_empty();
            let theta = mean(p.oam.iter().map(|x| x.0));
            let phi = mean(p.oam.iter().map(|x| x.1).chain(p.freq.iter().map(|x| x.0)));
            let range = mean(p.freq.iter().map(|x| x.1));
            PointEstimate {
                detected,
                theta,
                phi,
                range,
                raw: p.clone(),
            }
        })
        .collect();
    Estimate { points, velocity }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::UserArray;
    use crate::numerics::{find_peaks, frobenius};

    fn geom() -> UcaGeometry {
        UcaGeometry {
            r_t: 0.5,
            r_r: 0.25,
            users: vec![UserArray::on_ring(0.5, 30.0, 0.0, 0.7, [0.0; 3])],
        }
    }

    fn eig_diag(mu: &[f64]) -> EigenDecomposition {
        let n = mu.len();
        let mut m = CMat::zeros(n, n);
        for (i, v) in mu.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        hermitian_eig(&m).unwrap()
    }

    #[test]
    fn covariance_of_one_snapshot_is_outer_product() {
        let v = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 1.0)]);
        let s = SnapshotSet::from_vectors(Domain::Oam, std::slice::from_ref(&v)).unwrap();
        let r = sample_covariance(&s).unwrap();
        assert!(frobenius(&(r - &v * v.adjoint())) < 1e-14);
        let scaled = SnapshotSet::from_vectors(Domain::Oam, &[v.clone() * C64::new(0.0, 2.0)]).unwrap();
        let r2 = sample_covariance(&scaled).unwrap();
        assert!(frobenius(&(r2 - &v * v.adjoint() * C64::new(4.0, 0.0))) < 1e-13);
        assert!(SnapshotSet::from_vectors(Domain::Oam, &[v, CVec::zeros(2)]).is_err());
    }

    #[test]
    fn reweighting_examples() {
        let e = eig_diag(&[10.0, 4.0, 2.0, 1.0]);
        let m = reweight_noise_subspace(&e, 1, 1.0, 1.0).unwrap();
        let want = [0.25, 0.5, 1.0];
        for (w, x) in m.weights.iter().zip(want) {
            assert!((w - x).abs() < 1e-14);
        }
        let flat = eig_diag(&[5.0, 1.0, 1.0, 1.0]);
        let m = reweight_noise_subspace(&flat, 1, 1.0, 2.0).unwrap();
        assert!(m.weights.iter().all(|w| (w - 1.0).abs() < 1e-14));
        assert!(matches!(
            reweight_noise_subspace(&e, 1, 1.0, 0.0),
            Err(EmusicError::Validity(_))
        ));
        assert!(matches!(
            reweight_noise_subspace(&e, 1, 1.5, 1.0),
            Err(EmusicError::Validity(_))
        ));
        assert!(reweight_noise_subspace(&e, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn signal_dim_from_gap() {
        assert_eq!(estimate_signal_dim(&eig_diag(&[100.0, 90.0, 1.1, 1.0])), 2);
    }

    #[test]
    fn oam_steering_cases() {
        let cfg = SystemConfig::default();
        let a = steering_oam(&cfg, &geom(), 0, 0.3, 1e-12).unwrap();
        for (i, &l) in cfg.modes().iter().enumerate() {
            let want = if l == 0 { 1.0 } else { 0.0 };
            assert!((a[i].norm() - want).abs() < 1e-9);
        }
        let b = steering_oam(&cfg, &geom(), 0, 0.3 + PI, 0.8).unwrap();
        let c = steering_oam(&cfg, &geom(), 0, 0.3, 0.8).unwrap();
        assert!((b - c).norm() < 1e-12);
    }

    #[test]
    fn oam_spectrum_of_identity_subspace_is_flat() {
        let cfg = SystemConfig::default();
        let e = hermitian_eig(&CMat::identity(16, 16)).unwrap();
        let m = music_subspace(&e, 1).unwrap();
        // with a single signal direction removed the spectrum is not flat;
        // use the full basis as noise subspace instead
        let full = SubspaceModel {
            noise_subspace: CMat::identity(16, 16),
            weights: vec![1.0; 16],
            ..m
        };
        let th = Axis::from_range("theta", 0.0, PI, 0.05);
        let ph = Axis::from_range("phi", 0.05, 1.5, 0.05);
        let s = pseudospectrum_oam(&full, &cfg, &geom(), 0, &th, &ph).unwrap();
        assert!((s.grid.max_value() - s.grid.min_value()).abs() < 1e-9);
    }

    #[test]
    fn oam_spectrum_peaks_at_single_target() {
        let cfg = SystemConfig::default();
        let g = geom();
        let th = Axis::from_range("theta", 0.0, 179.5f64.to_radians(), 0.5f64.to_radians());
        let ph = Axis::from_range("phi", 0.5f64.to_radians(), 89.5f64.to_radians(), 0.5f64.to_radians());
        let (ti, pj) = (70usize, 60usize);
        let a = steering_oam(&cfg, &g, 0, th.value(ti), ph.value(pj)).unwrap();
        let r = &a * a.adjoint() + CMat::identity(16, 16) * C64::new(1e-9, 0.0);
        let m = music_subspace(&hermitian_eig(&r).unwrap(), 1).unwrap();
        let s = pseudospectrum_oam(&m, &cfg, &g, 0, &th, &ph).unwrap();
        // exhaustive argmax oracle
        let mut best = (0, 0, f64::NEG_INFINITY);
        for i in 0..th.count {
            for j in 0..ph.count {
                if s.grid.get(i, j) > best.2 {
                    best = (i, j, s.grid.get(i, j));
                }
            }
        }
        assert_eq!((best.0, best.1), (ti, pj));
        let p = find_peaks(&s.grid, 3, 2);
        assert_eq!((p[0].i, p[0].j), (ti, pj));
    }

    #[test]
    fn freq_steering_cases() {
        let cfg = SystemConfig::default();
        let g = geom();
        let b = steering_freq(&cfg, &g, 2, 1e-12, 30.0).unwrap();
        assert!(b.norm() < 1e-15);
        assert!(check_unambiguous_range(&cfg, 749.0).is_ok());
        assert!(check_unambiguous_range(&cfg, 750.0).is_err());
        let r0 = steering_freq(&cfg, &g, 1, 0.7, 30.0).unwrap().normalize();
        // monotone over the main lobe, whose first null sits at c / (4 N_f Δf)
        let mut prev = 1.0 + 1e-12;
        for k in 1..45 {
            let r = steering_freq(&cfg, &g, 1, 0.7, 30.0 + 0.5 * k as f64)
                .unwrap()
                .normalize();
            let c = (r.adjoint() * &r0)[(0, 0)].norm();
            assert!(c <= prev, "correlation rose at δ = {} m", 0.5 * k as f64);
            prev = c;
        }
    }

    #[test]
    fn freq_spectrum_peaks_at_single_target() {
        let cfg = SystemConfig::default();
        let g = geom();
        let ph = Axis::from_range("phi", 30f64.to_radians(), 60f64.to_radians(), 1f64.to_radians());
        let rg = Axis::from_range("range", 20.0, 60.0, 0.25);
        let b = steering_freq(&cfg, &g, 1, ph.value(20), rg.value(76)).unwrap();
        let r = &b * b.adjoint() + CMat::identity(16, 16) * C64::new(1e-30, 0.0);
        let m = music_subspace(&hermitian_eig(&r).unwrap(), 1).unwrap();
        let s = pseudospectrum_freq(&m, &cfg, &g, 1, &ph, &rg).unwrap();
        // range is sharply identified; elevation only weakly, so check the range argmax
        let mut best = (0, 0, f64::NEG_INFINITY);
        for i in 0..ph.count {
            for j in 0..rg.count {
                if s.grid.get(i, j) > best.2 {
                    best = (i, j, s.grid.get(i, j));
                }
            }
        }
        assert_eq!(best.1, 76);
        assert_eq!(s.grid.get(20, 76), best.2);
    }

    #[test]
    fn velocity_from_pure_tone() {
        let cfg = SystemConfig::default();
        let axis = Axis::from_range("v", -10.0, 10.0, 0.05);
        for v in [0.0, 3.0, -3.0] {
            let tone = steering_velocity(&cfg, v);
            let snaps: Vec<CVec> = (0..32)
                .map(|k| {
                    let phase = C64::from_polar(1.0, 0.37 * k as f64);
                    let mut x = &tone * phase;
                    // deterministic small perturbation keeps the covariance full rank
                    for i in 0..x.len() {
                        x[i] += C64::new(1e-7 * ((k * 7 + i * 3) % 5) as f64, -1e-7 * ((k + i) % 3) as f64);
                    }
                    x
                })
                .collect();
            let set = SnapshotSet::from_vectors(Domain::Oam, &snaps).unwrap();
            let est = estimate_velocity(&set, &cfg, 1, 1.0, 1.0, &axis).unwrap();
            assert!((est - v).abs() <= 0.05 + 1e-9, "v = {v}, estimate {est}");
        }
        let bad = Axis::from_range("v", -2.0e4, 2.0e4, 100.0);
        let set = SnapshotSet::from_vectors(Domain::Oam, &vec![steering_velocity(&cfg, 0.0); 4]).unwrap();
        assert!(estimate_velocity(&set, &cfg, 1, 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn fusion_means() {
        let p = DomainPeaks {
            oam: vec![(10f64.to_radians(), 0.5), (12f64.to_radians(), 0.5)],
            freq: vec![(0.5, 30.0), (0.5, 32.0)],
        };
        let e = fuse_estimates(&[p, DomainPeaks::default()], 1.0);
        assert!((e.points[0].theta - 11f64.to_radians()).abs() < 1e-15);
        assert!((e.points[0].phi - 0.5).abs() < 1e-15);
        assert!((e.points[0].range - 31.0).abs() < 1e-15);
        assert!(e.points[0].detected);
        assert!(!e.points[1].detected);
    }

    #[test]
    fn projector_ratio_example() {
        let e = eig_diag(&[50.0, 20.0, 8.0, 1.5, 1.2, 1.0]);
        let m = reweight_noise_subspace(&e, 1, 0.5, 1.0).unwrap();
        let r = projector_ratio(&m, 3).unwrap();
        assert!(r.reweighted <= r.contraction * r.unweighted * (1.0 + 1e-12));
        assert!(r.reweighted <= r.unweighted);
    }
}
