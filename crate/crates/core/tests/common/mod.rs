//! Helpers shared by integration tests: random link instances and a
//! symbol-level Monte-Carlo oracle for per-stream SINR and MSE.

#![allow(dead_code)]

use isac_core::numerics::{CMat, CVec, C64};
use isac_core::optimizer::{update_rx, BeamformerState, CommLinks};
use isac_core::rng::complex_gaussian;
use isac_core::waveform::{allocate_modes, dft_basis, DftBasis, ModeAllocation};
use rand::Rng;
use std::f64::consts::FRAC_1_SQRT_2;

/// A random multiuser configuration with arbitrary beamformers and powers.
pub struct RandomConfig {
    pub basis: DftBasis,
    pub alloc: ModeAllocation,
    pub links: CommLinks,
    pub state: BeamformerState,
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_gaussian(rng, 1.0))
}

/// Draws channels, jamming, noise, unit-norm transmit beamformers and
/// positive powers; receivers are the MMSE combiners for that draw.
pub fn random_config<R: Rng>(rng: &mut R, n_t: usize, sizes: &[usize], n_f: usize, n_j: usize) -> RandomConfig {
    let basis = dft_basis(n_t);
    let bits: Vec<bool> = (0..64).map(|_| rng.random()).collect();
    let alloc = allocate_modes(n_t, sizes, 1 + rng.random_range(0..n_t), &bits, rng.random()).unwrap();
    let k = sizes.len();
    let links = CommLinks {
        comm: (0..k)
            .map(|_| (0..n_f).map(|_| gaussian_matrix(rng, n_t, n_t)).collect())
            .collect(),
        jam: (0..k)
            .map(|_| (0..n_f).map(|_| gaussian_matrix(rng, n_t, n_j)).collect())
            .collect(),
        jamming_power: rng.random_range(0.05..0.5),
        noise_var: rng.random_range(0.05..0.5),
    };
    let mut state = BeamformerState::identity(&basis, &alloc, n_f, 1.0, vec![0.0; n_f]).unwrap();
    for s in 0..state.streams.len() {
        let t = gaussian_vector(rng, n_t);
        state.tx[s] = &t / C64::new(t.norm(), 0.0);
        state.power[s] = rng.random_range(0.02..0.3);
    }
    update_rx(&mut state, &links).unwrap();
    RandomConfig {
        basis,
        alloc,
        links,
        state,
    }
}

/// Unit-power QPSK symbol.
fn qpsk<R: Rng>(rng: &mut R) -> C64 {
    let re = if rng.random::<bool>() {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    let im = if rng.random::<bool>() {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    C64::new(re, im)
}

/// Empirical `(SINR, MSE)` of every stream.
///
/// Each draw transmits independent QPSK symbols on every stream, Gaussian
/// jamming symbols of power `P_J` on every jammer element and Gaussian noise
/// on every receive element; the estimate of stream `s` is `u_s^H y`.
/// SINR is the empirical power of the stream's own contribution to the
/// estimate over the empirical power of everything else in it.
pub fn monte_carlo<R: Rng>(
    state: &BeamformerState,
    links: &CommLinks,
    draws: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let n_streams = state.streams.len();
    let mut signal = vec![0.0; n_streams];
    let mut distortion = vec![0.0; n_streams];
    let mut err = vec![0.0; n_streams];
    let n_users = links.users();
    for q in 0..links.subcarriers() {
        let range = state.on_subcarrier(q);
        let n_t = links.comm[0][q].nrows();
        let n_j = links.jam[0][q].ncols();
        for _ in 0..draws {
            let mut x = CVec::zeros(n_t);
            let symbols: Vec<C64> = range.clone().map(|_| qpsk(rng)).collect();
            for (m, sym) in range.clone().zip(&symbols) {
                x += &state.tx[m] * (*sym * state.power[m].sqrt());
            }
            for k in 0..n_users {
                let z = CVec::from_fn(n_j, |_, _| complex_gaussian(rng, links.jamming_power));
                let n = CVec::from_fn(n_t, |_, _| complex_gaussian(rng, links.noise_var));
                let y = &links.comm[k][q] * &x + &links.jam[k][q] * z + n;
                for (m, sym) in range.clone().zip(&symbols) {
                    if state.streams[m].user != k {
                        continue;
                    }
                    let est = state.rx[m].dotc(&y);
                    let own_rx = &links.comm[k][q] * &state.tx[m] * (*sym * state.power[m].sqrt());
                    let own = state.rx[m].dotc(&own_rx);
                    signal[m] += own.norm_sqr();
                    distortion[m] += (est - own).norm_sqr();
                    err[m] += (est - sym).norm_sqr();
                }
            }
        }
    }
    let sinr = signal.iter().zip(&distortion).map(|(s, d)| s / d).collect();
    let mse = err.iter().map(|e| e / draws as f64).collect();
    (sinr, mse)
}
