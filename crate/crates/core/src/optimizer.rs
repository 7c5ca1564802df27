//! Weighted-MSE alternating optimisation of mode-domain transmit/receive
//! beamformers and stream powers for one OFDM slot, with SINR/MSE
//! evaluation, sensing-power sizing and achievable-sum-rate accounting.
//!
//! Each data stream is a `(subcarrier, user, mode)` triple. Its precoder is
//! the mode-domain column `t = W_tx f_l` and its combiner `u = W_rx f_l`.
//! The received sample of stream `(q, k, l)` is
//! `u^H (H_kq Σ_m √p_m t_m s_m + H_J,kq x_J + n)`, where `m` runs over every
//! stream sharing subcarrier `q`.

use crate::numerics::{hermitian_eig, CMat, CVec, NumericsError, C64};
use crate::waveform::{DftBasis, ModeAllocation};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Smallest MSE admitted before inverting it into a weight.
pub const MSE_CLAMP: f64 = 1e-12;
/// Allowed increase of the weighted-MSE objective across one block update.
pub const MONOTONE_TOL: f64 = 1e-8;
/// Condition number above which the receive Gram matrix is regularised.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid optimiser input: {0}")]
    Config(String),
    #[error("power budget {budget} cannot cover {streams} stream floors of {floor}")]
    Infeasible { budget: f64, streams: usize, floor: f64 },
    #[error("transmit-norm bisection failed to bracket for stream {stream}")]
    Bracket { stream: usize },
    #[error("weighted MSE rose by {increase:e} in the {block} block of iteration {iteration}")]
    NonMonotone {
        block: &'static str,
        iteration: usize,
        increase: f64,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Channels and impairments seen by the communication users of one slot.
#[derive(Debug, Clone)]
pub struct CommLinks {
    /// `comm[k][q]`, receive element × transmit element.
    pub comm: Vec<Vec<CMat>>,
    /// `jam[k][q]`, receive element × jammer element.
    pub jam: Vec<Vec<CMat>>,
    /// Per-element jamming power `P_J` (Gaussian jamming, covariance `P_J I`).
    pub jamming_power: f64,
    /// Receiver noise variance `σ²`.
    pub noise_var: f64,
}

impl CommLinks {
    pub fn users(&self) -> usize {
        self.comm.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.comm.first().map_or(0, Vec::len)
    }

    /// Copy with the jamming term removed, as assumed by an optimiser
    /// without jamming CSI.
    pub fn without_jamming(&self) -> Self {
        CommLinks {
            jamming_power: 0.0,
            ..self.clone()
        }
    }

    /// Copy using a different (e.g. reconstructed) jamming channel.
    pub fn with_jamming_channel(&self, jam: Vec<Vec<CMat>>) -> Self {
        CommLinks { jam, ..self.clone() }
    }

    fn validate(&self, n_t: usize) -> Result<(), OptimizerError> {
        if self.comm.is_empty() || self.comm.len() != self.jam.len() {
            return Err(OptimizerError::Config(
                "comm and jam channel user counts differ or are zero".into(),
            ));
        }
        let n_f = self.subcarriers();
        for k in 0..self.users() {
            if self.comm[k].len() != n_f || self.jam[k].len() != n_f {
                return Err(OptimizerError::Config(format!("user {k} has a ragged subcarrier list")));
            }
            for q in 0..n_f {
                if self.comm[k][q].shape() != (n_t, n_t) || self.jam[k][q].nrows() != n_t {
                    return Err(OptimizerError::Config(format!(
                        "channel shape mismatch at user {k}, subcarrier {q}"
                    )));
                }
            }
        }
        if !(self.noise_var > 0.0) || !(self.jamming_power >= 0.0) {
            return Err(OptimizerError::Config(
                "noise variance must be > 0 and jamming power ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// One data stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stream {
    pub subcarrier: usize,
    pub user: usize,
    pub mode: i32,
}

/// Beamformers, powers, weights and duals of one slot.
#[derive(Debug, Clone, Serialize)]
pub struct BeamformerState {
    pub streams: Vec<Stream>,
    /// Mode-domain transmit columns `W_tx f_l`, one per stream.
    #[serde(skip)]
    pub tx: Vec<CVec>,
    /// Mode-domain receive columns `W_rx f_l`, one per stream.
    #[serde(skip)]
    pub rx: Vec<CVec>,
    /// Stream powers `P_{q i_k}`.
    pub power: Vec<f64>,
    /// MSE weights `w_{q i_k}`.
    pub weights: Vec<f64>,
    /// Sensing power per subcarrier on the slot's sensing mode.
    pub sensing_power: Vec<f64>,
    /// Transmit-norm duals, one per stream.
    pub tx_duals: Vec<f64>,
    /// Total-power dual.
    pub power_dual: f64,
    /// Stream power floor `P̄`.
    pub power_floor: f64,
    /// Number of MSE values clamped before weight inversion.
    pub clamped_weights: usize,
    #[serde(skip)]
    by_subcarrier: Vec<std::ops::Range<usize>>,
}

impl BeamformerState {
    /// Identity beamformers with the data budget spread uniformly.
    pub fn identity(
        basis: &DftBasis,
        alloc: &ModeAllocation,
        n_f: usize,
        data_budget: f64,
        sensing_power: Vec<f64>,
    ) -> Result<Self, OptimizerError> {
        let mut streams = Vec::new();
        let mut by_subcarrier = Vec::with_capacity(n_f);
        for q in 0..n_f {
            let start = streams.len();
            for (k, modes) in alloc.user_modes.iter().enumerate() {
                for &mode in modes {
                    streams.push(Stream {
                        subcarrier: q,
                        user: k,
                        mode,
                    });
                }
            }
            by_subcarrier.push(start..streams.len());
        }
        if streams.is_empty() {
            return Err(OptimizerError::Config("allocation carries no user modes".into()));
        }
        if !(data_budget > 0.0) {
            return Err(OptimizerError::Config(format!(
                "data power budget {data_budget} must be positive"
            )));
        }
        let n = streams.len();
        let floor = data_budget / (basis.n_t * basis.n_t) as f64;
        if floor * n as f64 > data_budget * (1.0 + 1e-12) {
            return Err(OptimizerError::Infeasible {
                budget: data_budget,
                streams: n,
                floor,
            });
        }
        let columns: Vec<CVec> = streams.iter().map(|s| basis.mode_vector(s.mode)).collect();
        Ok(BeamformerState {
            tx: columns.clone(),
            rx: columns,
            power: vec![data_budget / n as f64; n],
            weights: vec![1.0; n],
            sensing_power,
            tx_duals: vec![0.0; n],
            power_dual: 0.0,
            power_floor: floor,
            clamped_weights: 0,
            streams,
            by_subcarrier,
        })
    }

    /// Index of stream `(q, k, l)`.
    pub fn stream_index(&self, q: usize, k: usize, mode: i32) -> Option<usize> {
        let range = self.by_subcarrier.get(q)?.clone();
        range
            .into_iter()
            .find(|&i| self.streams[i].user == k && self.streams[i].mode == mode)
    }

    /// Stream indices on subcarrier `q`.
    pub fn on_subcarrier(&self, q: usize) -> std::ops::Range<usize> {
        self.by_subcarrier[q].clone()
    }

    pub fn subcarriers(&self) -> usize {
        self.by_subcarrier.len()
    }

    pub fn data_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Sensing plus data power, `Tr(Σ P_sq P_sqᵀ + Σ P_kq P_kqᵀ)`.
    pub fn total_power(&self) -> f64 {
        self.data_power() + self.sensing_power.iter().sum::<f64>()
    }

    /// Element-domain transmit beamformer `W_tx` of user `k` on subcarrier
    /// `q`. Columns of unallocated modes keep their identity image.
    pub fn tx_matrix(&self, basis: &DftBasis, k: usize, q: usize) -> CMat {
        self.element_matrix(basis, k, q, &self.tx)
    }

    /// Element-domain receive beamformer `W_rx` of user `k` on subcarrier `q`.
    pub fn rx_matrix(&self, basis: &DftBasis, k: usize, q: usize) -> CMat {
        self.element_matrix(basis, k, q, &self.rx)
    }

    fn element_matrix(&self, basis: &DftBasis, k: usize, q: usize, cols: &[CVec]) -> CMat {
        // W F^H = [images], so W = [images] F.
        let mut images = basis.matrix.adjoint();
        for i in self.on_subcarrier(q) {
            if self.streams[i].user == k {
                images.set_column(basis.mode_index(self.streams[i].mode), &cols[i]);
            }
        }
        images * &basis.matrix
    }

    /// Scales every receive column to unit norm.
    pub fn normalize_rx(&mut self) {
        for u in &mut self.rx {
            let n = u.norm();
            if n > 0.0 {
                *u /= C64::new(n, 0.0);
            }
        }
    }
}

/// Signal amplitude, interference power and noise power of one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamTerms {
    /// `√P u^H H t`.
    pub signal: C64,
    /// Intra-user inter-mode interference.
    pub inter_mode: f64,
    /// Inter-user interference.
    pub inter_user: f64,
    /// Jamming power after combining.
    pub jamming: f64,
    /// Noise power after combining, `σ² ‖u‖²`.
    pub noise: f64,
}

impl StreamTerms {
    /// Total interference `Σ`.
    pub fn interference(&self) -> f64 {
        self.inter_mode + self.inter_user + self.jamming
    }
}

fn quad(u: &CVec, h: &CMat, t: &CVec) -> C64 {
    (u.adjoint() * h * t)[(0, 0)]
}

/// Decomposes stream `s`'s received sample into its power terms.
pub fn stream_terms(state: &BeamformerState, links: &CommLinks, s: usize) -> StreamTerms {
    let st = state.streams[s];
    let h = &links.comm[st.user][st.subcarrier];
    let u = &state.rx[s];
    let uh = u.adjoint() * h;
    let gain = |m: usize| (&uh * &state.tx[m])[(0, 0)];
    let signal = gain(s) * state.power[s].sqrt();
    let (mut inter_mode, mut inter_user) = (0.0, 0.0);
    for m in state.on_subcarrier(st.subcarrier) {
        if m == s {
            continue;
        }
        let p = state.power[m] * gain(m).norm_sqr();
        if state.streams[m].user == st.user {
            inter_mode += p;
        } else {
            inter_user += p;
        }
    }
    let jamming = if links.jamming_power > 0.0 {
        links.jamming_power * (links.jam[st.user][st.subcarrier].adjoint() * u).norm_squared()
    } else {
        0.0
    };
    StreamTerms {
        signal,
        inter_mode,
        inter_user,
        jamming,
        noise: links.noise_var * u.norm_squared(),
    }
}

/// Interference power `Σ` of stream `s`: inter-mode, inter-user and jamming.
pub fn interference_power(state: &BeamformerState, links: &CommLinks, s: usize) -> f64 {
    stream_terms(state, links, s).interference()
}

/// SINR of stream `s`.
pub fn sinr(state: &BeamformerState, links: &CommLinks, s: usize) -> f64 {
    let t = stream_terms(state, links, s);
    t.signal.norm_sqr() / (t.interference() + t.noise)
}

/// MSE `|R − 1|² + Σ + σ²‖u‖²` of stream `s`.
pub fn mse(state: &BeamformerState, links: &CommLinks, s: usize) -> f64 {
    let t = stream_terms(state, links, s);
    (t.signal - 1.0).norm_sqr() + t.interference() + t.noise
}

/// Weighted-MSE objective `Σ (w ε − ln w)`, minimised by the AO.
pub fn weighted_mse_objective(state: &BeamformerState, links: &CommLinks) -> f64 {
    (0..state.streams.len())
        .map(|s| state.weights[s] * mse(state, links, s) - state.weights[s].ln())
        .sum()
}

/// Weight block: `w = 1/ε`, with ε clamped at [`MSE_CLAMP`]. Returns the
/// number of clamped streams.
pub fn update_weights(state: &mut BeamformerState, links: &CommLinks) -> usize {
    let eps: Vec<f64> = (0..state.streams.len()).map(|s| mse(state, links, s)).collect();
    let mut clamped = 0;
    for (w, e) in state.weights.iter_mut().zip(eps) {
        if e < MSE_CLAMP {
            clamped += 1;
        }
        *w = 1.0 / e.max(MSE_CLAMP);
    }
    state.clamped_weights = clamped;
    clamped
}

/// Solves `C x = b` for Hermitian positive semidefinite `C`, regularising
/// by `1e-10 · tr(C)/dim` when its condition number exceeds [`MAX_CONDITION`].
fn hermitian_solve(c: &CMat, rhs: &[CVec]) -> Result<Vec<CVec>, OptimizerError> {
    let sym = (c + c.adjoint()) * C64::new(0.5, 0.0);
    let eig = hermitian_eig(&sym)?;
    let max = eig.eigenvalues[0];
    let min = eig.eigenvalues[eig.dim() - 1];
    let reg = if min <= max / MAX_CONDITION {
        1e-10 * sym.trace().re / sym.nrows() as f64
    } else {
        0.0
    };
    let v = &eig.eigenvectors;
    Ok(rhs
        .iter()
        .map(|b| {
            let mut y = v.adjoint() * b;
            for (i, yi) in y.iter_mut().enumerate() {
                *yi /= eig.eigenvalues[i].max(0.0) + reg;
            }
            v * y
        })
        .collect())
}

/// MMSE receive Gram matrix `B_kq + σ² I` of user `k` on subcarrier `q`.
fn receive_gram(state: &BeamformerState, links: &CommLinks, k: usize, q: usize) -> CMat {
    let h = &links.comm[k][q];
    let n = h.nrows();
    let mut c = CMat::identity(n, n) * C64::new(links.noise_var, 0.0);
    if links.jamming_power > 0.0 {
        let hj = &links.jam[k][q];
        c += hj * hj.adjoint() * C64::new(links.jamming_power, 0.0);
    }
    for m in state.on_subcarrier(q) {
        let v = h * &state.tx[m];
        c += &v * v.adjoint() * C64::new(state.power[m], 0.0);
    }
    c
}

/// Receive block: MMSE combiners `u = (B + σ²I)^{-1} H t √P` for every stream.
pub fn update_rx(state: &mut BeamformerState, links: &CommLinks) -> Result<(), OptimizerError> {
    let users = links.users();
    let solved: Vec<Vec<(usize, CVec)>> = (0..state.subcarriers())
        .into_par_iter()
        .map(|q| -> Result<Vec<(usize, CVec)>, OptimizerError> {
            let mut out = Vec::new();
            for k in 0..users {
                let idx: Vec<usize> = state.on_subcarrier(q).filter(|&s| state.streams[s].user == k).collect();
                if idx.is_empty() {
                    continue;
                }
                let c = receive_gram(state, links, k, q);
                let h = &links.comm[k][q];
                let rhs: Vec<CVec> = idx
                    .iter()
                    .map(|&s| h * &state.tx[s] * C64::new(state.power[s].sqrt(), 0.0))
                    .collect();
                out.extend(idx.into_iter().zip(hermitian_solve(&c, &rhs)?));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    for (s, u) in solved.into_iter().flatten() {
        state.rx[s] = u;
    }
    Ok(())
}

/// Exact per-stream transmit solution for the dual `ζ` meeting `‖t‖ ≤ 1`.
///
/// `eigenvalues`/`coeffs` describe `(p M + ζ I) t = b` in the eigenbasis of
/// `M`, with `coeffs = V^H b`.
fn transmit_dual(eigenvalues: &[f64], coeffs: &CVec, power: f64) -> Option<f64> {
    let norm2 = |z: f64| -> f64 {
        eigenvalues
            .iter()
            .zip(coeffs.iter())
            .map(|(&ev, b)| b.norm_sqr() / (power * ev.max(0.0) + z).powi(2))
            .sum()
    };
    let top = power * eigenvalues.iter().cloned().fold(0.0, f64::max);
    let total: f64 = coeffs.iter().map(|b| b.norm_sqr()).sum();
    // Minimum-norm solution at ζ = 0; infinite if b leaves the range of M.
    let mut free_norm = 0.0;
    for (&ev, b) in eigenvalues.iter().zip(coeffs.iter()) {
        let d = power * ev.max(0.0);
        if d > 1e-12 * top {
            free_norm += b.norm_sqr() / (d * d);
        } else if b.norm_sqr() > 1e-24 * total {
            free_norm = f64::INFINITY;
        }
    }
    if free_norm <= 1.0 {
        return Some(0.0);
    }
    let mut hi = 1.0f64.max(top);
    while norm2(hi) > 1.0 {
        hi *= 2.0;
        if hi > 2f64.powi(60) {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm2(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(hi)
}

/// Transmit block: per stream `t = (P M + ζ I)^{-1} w √P H^H u`, where
/// `M = Σ_m w_m H_m^H u_m u_m^H H_m` over the subcarrier's streams and `ζ`
/// is bisected so that `‖t‖ = 1` whenever the unconstrained solution
/// exceeds unit norm.
pub fn update_tx(state: &mut BeamformerState, links: &CommLinks) -> Result<(), OptimizerError> {
    let solved: Vec<Vec<(usize, CVec, f64)>> = (0..state.subcarriers())
        .into_par_iter()
        .map(|q| -> Result<Vec<(usize, CVec, f64)>, OptimizerError> {
            let range = state.on_subcarrier(q);
            let n = state.tx[range.start].len();
            let back: Vec<CVec> = range
                .clone()
                .map(|s| links.comm[state.streams[s].user][q].adjoint() * &state.rx[s])
                .collect();
            let mut m = CMat::zeros(n, n);
            for (i, s) in range.clone().enumerate() {
                m += &back[i] * back[i].adjoint() * C64::new(state.weights[s], 0.0);
            }
            let eig = hermitian_eig(&((&m + m.adjoint()) * C64::new(0.5, 0.0)))?;
            let v = &eig.eigenvectors;
            let mut out = Vec::new();
            for (i, s) in range.enumerate() {
                let p = state.power[s];
                if p <= 0.0 {
                    continue;
                }
                let coeffs = v.adjoint() * &back[i] * C64::new(state.weights[s] * p.sqrt(), 0.0);
                let zeta = transmit_dual(&eig.eigenvalues, &coeffs, p).ok_or(OptimizerError::Bracket { stream: s })?;
                let mut y = coeffs;
                for (j, yj) in y.iter_mut().enumerate() {
                    let d = p * eig.eigenvalues[j].max(0.0) + zeta;
                    *yj = if d > 1e-12 * p * eig.eigenvalues[0] {
                        *yj / d
                    } else {
                        C64::new(0.0, 0.0)
                    };
                }
                out.push((s, v * y, zeta));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    for (s, t, zeta) in solved.into_iter().flatten() {
        state.tx[s] = t;
        state.tx_duals[s] = zeta;
    }
    Ok(())
}

/// Power block.
///
/// With amplitudes `a = √P`, the weighted MSE is `Σ_l D_l a_l² − 2 c_l a_l`
/// plus terms independent of power, where `c_l = w_l Re(u_l^H H t_l)` and
/// `D_l = Σ_m w_m |u_m^H H_m t_l|²`. The minimiser over
/// `{Σ a² = budget, a ≥ √P̄}` is `a_l = max(c_l⁺/(D_l + η), √P̄)`, with `η`
/// bisected on `(−min D, ∞)` to meet the budget with equality.
pub fn update_power(state: &mut BeamformerState, links: &CommLinks, budget: f64) -> Result<(), OptimizerError> {
    let n = state.streams.len();
    let floor_amp = state.power_floor.sqrt();
    if state.power_floor * n as f64 > budget * (1.0 + 1e-12) {
        return Err(OptimizerError::Infeasible {
            budget,
            streams: n,
            floor: state.power_floor,
        });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for q in 0..state.subcarriers() {
        let range = state.on_subcarrier(q);
        for l in range.clone() {
            c[l] = (state.weights[l] * quad(&state.rx[l], &links.comm[state.streams[l].user][q], &state.tx[l]).re)
                .max(0.0);
            d[l] = range
                .clone()
                .map(|m| {
                    state.weights[m]
                        * quad(&state.rx[m], &links.comm[state.streams[m].user][q], &state.tx[l]).norm_sqr()
                })
                .sum();
        }
    }
    let amp = |l: usize, eta: f64| -> f64 {
        let den = d[l] + eta;
        if den > 0.0 {
            (c[l] / den).max(floor_amp)
        } else {
            floor_amp
        }
    };
    let total = |eta: f64| -> f64 { (0..n).map(|l| amp(l, eta).powi(2)).sum() };
    let (argmin, d_min) = d
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let lo0 = -d_min + 1e-15 * d_min.abs().max(1.0);
    let power: Vec<f64>;
    let eta: f64;
    if total(lo0) < budget {
        // Hard case: even η → −min D leaves budget unused; the surplus goes to
        // the stream with the smallest curvature.
        eta = -d_min;
        let mut p: Vec<f64> = (0..n)
            .map(|l| if l == argmin { 0.0 } else { amp(l, lo0).powi(2) })
            .collect();
        p[argmin] = (budget - p.iter().sum::<f64>()).max(state.power_floor);
        power = p;
    } else {
        let mut hi = 1.0f64.max(d_min.abs());
        while total(hi) > budget {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(OptimizerError::Infeasible {
                    budget,
                    streams: n,
                    floor: state.power_floor,
                });
            }
        }
        let mut lo = lo0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi.abs().max(1e-300) {
                break;
            }
        }
        eta = hi;
        let raw: Vec<f64> = (0..n).map(|l| amp(l, hi).powi(2)).collect();
        // Remove the bisection residual by rescaling the unclamped streams.
        let clamped: f64 = raw.iter().filter(|&&p| p <= state.power_floor).sum();
        let free: f64 = raw.iter().filter(|&&p| p > state.power_floor).sum();
        let scale = if free > 0.0 { (budget - clamped) / free } else { 1.0 };
        power = raw
            .into_iter()
            .map(|p| if p > state.power_floor { p * scale } else { p })
            .collect();
    }
    // Squaring the floor amplitude can round just below the floor.
    state.power = power.into_iter().map(|p| p.max(state.power_floor)).collect();
    state.power_dual = eta;
    Ok(())
}

/// Sensing powers meeting an SSNR target with equality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensingPower {
    /// `P_{q i_s} = γ_s σ² / |h_{q i_s}|²` per subcarrier; zero for excluded cells.
    pub power: Vec<f64>,
    /// Subcarriers whose channel gain is zero and so carry no sensing power.
    pub excluded: Vec<usize>,
}

/// Sizes sensing power so every cell's SSNR `P |h|²/σ²` equals `gamma`
/// (linear).
pub fn sensing_power(gains: &[f64], gamma: f64, noise_var: f64) -> SensingPower {
    let mut excluded = Vec::new();
    let power = gains
        .iter()
        .enumerate()
        .map(|(q, &g)| {
            if g > 0.0 {
                gamma * noise_var / g
            } else {
                excluded.push(q);
                0.0
            }
        })
        .collect();
    SensingPower { power, excluded }
}

/// Echo noise variance for which [`sensing_power`] spends exactly `target`
/// in total.
pub fn sensing_noise_for_budget(gains: &[f64], gamma: f64, target: f64) -> f64 {
    let inv: f64 = gains.iter().filter(|&&g| g > 0.0).map(|g| 1.0 / g).sum();
    if inv == 0.0 || gamma == 0.0 {
        return 0.0;
    }
    target / (gamma * inv)
}

/// Achievable sum rate `(1/N_f)[Σ log2(1+γ) + index_bits]` from per-stream
/// SINRs.
pub fn asr(sinrs: &[f64], n_f: usize, index_bits: f64) -> f64 {
    (sinrs.iter().map(|g| (1.0 + g).log2()).sum::<f64>() + index_bits) / n_f as f64
}

/// AO controls.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AoConfig {
    /// Relative change of the rate term below which the loop stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fail if a block raises the weighted MSE by more than [`MONOTONE_TOL`].
    pub check_monotone: bool,
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            tolerance: 1e-4,
            max_iterations: 100,
            check_monotone: true,
        }
    }
}

/// Per-stream SINR/MSE plus the iteration trace.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub streams: Vec<Stream>,
    pub sinr: Vec<f64>,
    pub mse: Vec<f64>,
    /// `log2 Π_n C_n`.
    pub index_bits: f64,
    /// Final ASR including the index term.
    pub asr: f64,
    /// Final ASR without the index term.
    pub rate_only: f64,
    /// Weighted-MSE objective before the first block.
    pub initial_objective: f64,
    /// Objective after each block (weights, receive, transmit, power), per iteration.
    pub block_objectives: Vec<[f64; 4]>,
    /// ASR after each iteration.
    pub asr_trace: Vec<f64>,
    /// Iteration at which the relative rate change first fell below tolerance.
    pub converged_at: Option<usize>,
}

impl RateReport {
    /// Largest increase of the objective across any single block update.
    pub fn max_objective_increase(&self) -> f64 {
        let mut prev = self.initial_objective;
        let mut worst = f64::NEG_INFINITY;
        for row in &self.block_objectives {
            for &v in row {
                worst = worst.max(v - prev);
                prev = v;
            }
        }
        worst
    }
}

/// SINR and MSE of every stream under `links`.
pub fn evaluate(state: &BeamformerState, links: &CommLinks) -> (Vec<f64>, Vec<f64>) {
    (0..state.streams.len())
        .map(|s| {
            let t = stream_terms(state, links, s);
            let den = t.interference() + t.noise;
            (t.signal.norm_sqr() / den, (t.signal - 1.0).norm_sqr() + den)
        })
        .unzip()
}

/// Rate report of a fixed state evaluated under `links` (no iterations).
pub fn rate_report(state: &BeamformerState, links: &CommLinks, index_bits: f64) -> RateReport {
    let (sinr, mse) = evaluate(state, links);
    let n_f = state.subcarriers();
    let rate_only = asr(&sinr, n_f, 0.0);
    RateReport {
        streams: state.streams.clone(),
        asr: rate_only + index_bits / n_f as f64,
        rate_only,
        sinr,
        mse,
        index_bits,
        initial_objective: weighted_mse_objective(state, links),
        block_objectives: Vec::new(),
        asr_trace: Vec::new(),
        converged_at: None,
    }
}

/// Runs the weight → receive → transmit → power cycle from `init` until the
/// relative change of the rate term drops below the tolerance or the
/// iteration cap is hit. The receive filters and weights are then refreshed,
/// the report recorded, and the receive columns normalised.
pub fn run_ao(
    init: BeamformerState,
    links: &CommLinks,
    data_budget: f64,
    index_bits: f64,
    cfg: &AoConfig,
) -> Result<(BeamformerState, RateReport), OptimizerError> {
    let n_t = init.tx.first().map_or(0, |t| t.len());
    links.validate(n_t)?;
    if links.subcarriers() != init.subcarriers() {
        return Err(OptimizerError::Config(
            "state and channels disagree on subcarrier count".into(),
        ));
    }
    let mut state = init;
    let n_f = state.subcarriers();
    let initial_objective = weighted_mse_objective(&state, links);
    let mut prev_obj = initial_objective;
    let mut block_objectives = Vec::new();
    let mut asr_trace = Vec::new();
    let mut prev_rate: Option<f64> = None;
    let mut converged_at = None;
    const BLOCKS: [&str; 4] = ["weight", "receive", "transmit", "power"];
    for iteration in 1..=cfg.max_iterations {
        let mut row = [0.0; 4];
        for (b, name) in BLOCKS.iter().enumerate() {
            match b {
                0 => {
                    update_weights(&mut state, links);
                }
                1 => update_rx(&mut state, links)?,
                2 => update_tx(&mut state, links)?,
                _ => update_power(&mut state, links, data_budget)?,
            }
            let obj = weighted_mse_objective(&state, links);
            if cfg.check_monotone && obj - prev_obj > MONOTONE_TOL {
                return Err(OptimizerError::NonMonotone {
                    block: name,
                    iteration,
                    increase: obj - prev_obj,
                });
            }
            row[b] = obj;
            prev_obj = obj;
        }
        block_objectives.push(row);
        let (sinr, _) = evaluate(&state, links);
        let rate = asr(&sinr, n_f, 0.0);
        asr_trace.push(rate + index_bits / n_f as f64);
        if let Some(p) = prev_rate {
            if (rate - p).abs() <= cfg.tolerance * rate.abs().max(f64::MIN_POSITIVE) {
                converged_at = Some(iteration);
                break;
            }
        }
        prev_rate = Some(rate);
    }
    update_rx(&mut state, links)?;
    update_weights(&mut state, links);
    let mut report = rate_report(&state, links, index_bits);
    report.initial_objective = initial_objective;
    report.block_objectives = block_objectives;
    report.asr_trace = asr_trace;
    report.converged_at = converged_at;
    state.normalize_rx();
    Ok((state, report))
}

/// Mean per-element gain `mean |h|²` of a set of channel matrices.
pub fn mean_element_gain(mats: &[CMat]) -> f64 {
    let (sum, count) = mats
        .iter()
        .fold((0.0, 0usize), |(s, c), m| (s + m.norm_squared(), c + m.len()));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean received jamming power per receive element and unit `P_J`,
/// `mean_u Σ_j |h_uj|²`.
pub fn mean_jamming_gain(mats: &[CMat]) -> f64 {
    if mats.is_empty() {
        return 0.0;
    }
    mats.iter().map(|m| m.norm_squared() / m.nrows() as f64).sum::<f64>() / mats.len() as f64
}
