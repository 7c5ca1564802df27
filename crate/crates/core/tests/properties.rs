//! Property tests over the public numeric, waveform and optimiser API.

use isac_core::numerics::{bessel_j, find_peaks, hermitian_eig, Axis, CMat, Grid2D, C64};
use isac_core::optimizer::{sensing_noise_for_budget, sensing_power};
use isac_core::waveform::{allocate_modes, count_mode_combinations, index_information_bits};
use proptest::prelude::*;
use std::collections::HashSet;
use std::f64::consts::PI;

/// `J_l(z) = j^{-l}/(2π) ∫ e^{j(z cos α − lα)} dα` sampled on a dense circular aperture.
fn aperture_bessel(l: i32, z: f64, elements: usize) -> C64 {
    let sum: C64 = (0..elements)
        .map(|n| {
            let a = 2.0 * PI * n as f64 / elements as f64;
            C64::from_polar(1.0, z * a.cos() - l as f64 * a)
        })
        .sum();
    C64::i().powi(-l) * sum / elements as f64
}

proptest! {
    #[test]
    fn dense_aperture_sum_equals_bessel(l in -8i32..=8, z in 0.0f64..20.0) {
        let v = aperture_bessel(l, z, 512);
        prop_assert!((v.re - bessel_j(l, z).unwrap()).abs() < 1e-10);
        prop_assert!(v.im.abs() < 1e-10);
    }

    #[test]
    fn bessel_three_term_recurrence(l in -20i32..=20, x in 0.05f64..40.0) {
        let lhs = bessel_j(l - 1, x).unwrap() + bessel_j(l + 1, x).unwrap();
        let rhs = 2.0 * l as f64 / x * bessel_j(l, x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn bessel_squares_sum_to_one(x in 0.0f64..30.0) {
        let s: f64 = (-60..=60).map(|l| bessel_j(l, x).unwrap().powi(2)).sum();
        prop_assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_sum_to_trace(n in 2usize..12, entries in prop::collection::vec(-1.0f64..1.0, 288)) {
        let a = CMat::from_fn(n, n, |i, j| C64::new(entries[2 * (i * n + j)], entries[2 * (i * n + j) + 1]));
        let r = &a * a.adjoint();
        let eig = hermitian_eig(&r).unwrap();
        let trace: f64 = (0..n).map(|i| r[(i, i)].re).sum();
        prop_assert!((eig.eigenvalues.iter().sum::<f64>() - trace).abs() < 1e-9 * (1.0 + trace));
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((eig.reconstruct() - &r).norm() < 1e-9 * (1.0 + r.norm()));
    }

    #[test]
    fn peaks_are_invariant_to_offset(values in prop::collection::vec(0.0f64..1.0, 20 * 15), c in -5.0f64..5.0) {
        let g = Grid2D::new(Axis::from_range("a", 0.0, 19.0, 1.0), Axis::from_range("b", 0.0, 14.0, 1.0), values);
        let p: Vec<(usize, usize)> = find_peaks(&g, 10, 2).iter().map(|p| (p.i, p.j)).collect();
        let q: Vec<(usize, usize)> = find_peaks(&g.offset(c), 10, 2).iter().map(|p| (p.i, p.j)).collect();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn allocations_are_disjoint_and_sized(
        slot in 1usize..=16,
        key in any::<u64>(),
        bits in prop::collection::vec(any::<bool>(), 0..64),
        split in 1usize..14,
    ) {
        let sizes = [split, 15 - split];
        let a = allocate_modes(16, &sizes, slot, &bits, key).unwrap();
        let mut seen = HashSet::new();
        prop_assert!(seen.insert(a.sensing_mode));
        for (k, modes) in a.user_modes.iter().enumerate() {
            prop_assert_eq!(modes.len(), sizes[k]);
            for &l in modes {
                prop_assert!((-7..=8).contains(&l));
                prop_assert!(seen.insert(l));
            }
        }
        let again = allocate_modes(16, &sizes, slot, &bits, key).unwrap();
        prop_assert_eq!(a, again);
    }

    #[test]
    fn mode_combinations_never_increase(n_t in (2usize..=20).prop_map(|n| 2 * n), frac in 0.1f64..0.9) {
        let first = (((n_t - 1) as f64 * frac) as usize).max(1);
        let sizes = [first, n_t - 1 - first];
        if sizes[1] == 0 {
            return Ok(());
        }
        let counts: Vec<u128> = (1..=n_t).map(|n| count_mode_combinations(n_t, &sizes, n).unwrap()).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        let bits: u64 = counts.iter().map(|c| c.trailing_zeros() as u64).sum();
        prop_assert_eq!(bits, index_information_bits(n_t, &sizes).unwrap());
    }

    #[test]
    fn sensing_power_meets_threshold_and_budget(
        gains in prop::collection::vec(1e-9f64..1e-3, 1..32),
        gamma_db in -5.0f64..30.0,
        target in 0.01f64..10.0,
    ) {
        let gamma = 10f64.powf(gamma_db / 10.0);
        let noise = sensing_noise_for_budget(&gains, gamma, target);
        let p = sensing_power(&gains, gamma, noise);
        prop_assert!((p.power.iter().sum::<f64>() - target).abs() < 1e-9 * target);
        for (q, g) in gains.iter().enumerate() {
            prop_assert!((p.power[q] * g / noise - gamma).abs() < 1e-9 * gamma);
        }
    }
}
