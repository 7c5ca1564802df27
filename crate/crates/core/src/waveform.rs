//! Mode-domain waveform: DFT mode basis, keyed index-modulation mode hopping,
//! ISAC symbol assembly, mode-combination counting and echo division.

use crate::numerics::{CMat, CVec, C64};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error("mode allocation: {0}")]
    Allocation(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Unitary DFT basis whose rows are indexed by OAM mode.
///
/// Row `l + N_t/2 − 1` (0-based) holds `e^{−j2π n l / N_t}/√N_t` for
/// element `n = 0 … N_t−1`, covering modes `−N_t/2+1 … N_t/2`.
#[derive(Debug, Clone)]
pub struct DftBasis {
    pub n_t: usize,
    pub matrix: CMat,
}

impl DftBasis {
    pub fn modes(&self) -> Vec<i32> {
        let half = (self.n_t / 2) as i32;
        (1 - half..=half).collect()
    }

    /// Row index of mode `l`.
    pub fn mode_index(&self, l: i32) -> usize {
        (l + (self.n_t / 2) as i32 - 1) as usize
    }

    /// Element-domain excitation of mode `l`, `F^H e_l`.
    pub fn mode_vector(&self, l: i32) -> CVec {
        self.matrix.row(self.mode_index(l)).adjoint()
    }

    /// Mode-domain coefficients of an element-domain vector, `F x`.
    pub fn decompose(&self, x: &CVec) -> CVec {
        &self.matrix * x
    }

    /// Element-domain vector from mode-domain coefficients, `F^H c`.
    pub fn synthesize(&self, c: &CVec) -> CVec {
        self.matrix.adjoint() * c
    }
}

/// DFT mode basis for an `n_t`-element UCA.
pub fn dft_basis(n_t: usize) -> DftBasis {
    assert!(n_t >= 2, "DFT basis needs at least two elements");
    let half = (n_t / 2) as i32;
    let scale = 1.0 / (n_t as f64).sqrt();
    let matrix = CMat::from_fn(n_t, n_t, |row, n| {
        let l = row as i32 + 1 - half;
        C64::from_polar(scale, -2.0 * PI * (n as f64) * l as f64 / n_t as f64)
    });
    DftBasis { n_t, matrix }
}

/// Mode order after a first-order reflection (`l → −l`), wrapped into the mode range.
pub fn reflected_mode(l: i32, n_t: usize) -> i32 {
    let n = n_t as i32;
    let half = n / 2;
    let mut r = -l;
    while r <= -half {
        r += n;
    }
    while r > half {
        r -= n;
    }
    r
}

/// Mode assignment for one OFDM slot.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ModeAllocation {
    /// 1-based slot index.
    pub slot: usize,
    pub sensing_mode: i32,
    /// Mode set of each user, in ascending order.
    pub user_modes: Vec<Vec<i32>>,
}

impl ModeAllocation {
    /// User owning mode `l`, if any.
    pub fn owner(&self, l: i32) -> Option<usize> {
        self.user_modes.iter().position(|m| m.contains(&l))
    }
}

/// Sensing mode of slot `slot` (1-based) under the ascending sweep.
pub fn sensing_mode(n_t: usize, slot: usize) -> i32 {
    slot as i32 - (n_t / 2) as i32
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

fn check_sizes(n_t: usize, sizes: &[usize], slot: usize) -> Result<(), WaveformError> {
    let total: usize = sizes.iter().sum();
    if total + 1 > n_t {
        return Err(WaveformError::Allocation(format!(
            "user mode sizes sum to {total}, but only {} modes remain after sensing",
            n_t - 1
        )));
    }
    if slot < 1 || slot > n_t {
        return Err(WaveformError::Allocation(format!("slot {slot} outside [1, {n_t}]")));
    }
    Ok(())
}

/// `log2` of the number of user partitions `Π_k binom(remaining, N_k)`,
/// rounded down, where `remaining` starts at `N_t − 1`.
pub fn partition_bits(n_t: usize, sizes: &[usize]) -> u32 {
    floor_log2_product(1, n_t, sizes)
}

fn floor_log2_product(lead: u64, n_t: usize, sizes: &[usize]) -> u32 {
    let mut remaining = (n_t - 1) as u64;
    let mut exact: Option<u128> = Some(lead as u128);
    let mut approx = (lead as f64).log2();
    for &s in sizes {
        let b = binomial(remaining, s as u64);
        exact = match (exact, b) {
            (Some(e), Some(b)) => e.checked_mul(b),
            _ => None,
        };
        approx += ln_binomial(remaining, s as u64) / std::f64::consts::LN_2;
        remaining -= s as u64;
    }
    match exact {
        Some(0) => 0,
        Some(v) => 127 - v.leading_zeros(),
        None => approx.floor() as u32,
    }
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Exponent `e` of `C_n = 2^e`, the number of distinguishable mode
/// combinations of slot `slot`.
pub fn mode_combination_bits(n_t: usize, sizes: &[usize], slot: usize) -> Result<u32, WaveformError> {
    check_sizes(n_t, sizes, slot)?;
    Ok(floor_log2_product((n_t - slot + 1) as u64, n_t, sizes))
}

/// `C_n = 2^{⌊log2((N_t−n+1) Π_k binom(remaining, N_k))⌋}`.
pub fn count_mode_combinations(n_t: usize, sizes: &[usize], slot: usize) -> Result<u128, WaveformError> {
    let bits = mode_combination_bits(n_t, sizes, slot)?;
    if bits >= 128 {
        return Err(WaveformError::Allocation(format!("C_{slot} = 2^{bits} overflows")));
    }
    Ok(1u128 << bits)
}

/// `log2 Π_{n=1}^{N_t} C_n`, the index-modulation information per frame.
pub fn index_information_bits(n_t: usize, sizes: &[usize]) -> Result<u64, WaveformError> {
    (1..=n_t)
        .map(|n| mode_combination_bits(n_t, sizes, n).map(u64::from))
        .sum()
}

/// Deterministic keyed mode hopping.
///
/// The sensing mode follows the ascending sweep. The remaining modes are
/// shuffled by a generator keyed on `(key, slot)`; the leading
/// [`partition_bits`] bits of `index_bits` select one partition of the
/// shuffled modes into the user sets by combinatorial unranking.
pub fn allocate_modes(
    n_t: usize,
    sizes: &[usize],
    slot: usize,
    index_bits: &[bool],
    key: u64,
) -> Result<ModeAllocation, WaveformError> {
    check_sizes(n_t, sizes, slot)?;
    let half = (n_t / 2) as i32;
    let sensing = sensing_mode(n_t, slot);
    let mut pool: Vec<i32> = (1 - half..=half).filter(|&l| l != sensing).collect();
    let mut rng = crate::rng::stream(key, &format!("hopping/slot{slot}"));
    pool.shuffle(&mut rng);

    let used_bits = partition_bits(n_t, sizes).min(127) as usize;
    let mut rank: u128 = 0;
    for i in 0..used_bits {
        rank = (rank << 1) | u128::from(index_bits.get(i).copied().unwrap_or(false));
    }

    let mut user_modes = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let count = binomial(pool.len() as u64, size as u64).unwrap_or(u128::MAX);
        let local = rank.checked_rem(count).unwrap_or(0);
        rank = rank.checked_div(count).unwrap_or(rank);
        let picked = unrank_combination(pool.len(), size, local);
        let mut set: Vec<i32> = picked.iter().map(|&i| pool[i]).collect();
        let keep: Vec<i32> = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| !picked.contains(i))
            .map(|(_, &m)| m)
            .collect();
        pool = keep;
        set.sort_unstable();
        user_modes.push(set);
    }
    Ok(ModeAllocation {
        slot,
        sensing_mode: sensing,
        user_modes,
    })
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0usize;
    for remaining in (1..=k).rev() {
        let mut i = next;
        loop {
            let c = binomial((n - i - 1) as u64, (remaining - 1) as u64).unwrap_or(u128::MAX);
            if rank < c {
                break;
            }
            rank -= c;
            i += 1;
        }
        out.push(i);
        next = i + 1;
    }
    out
}

/// Transmit ISAC symbol for one slot: element-domain vectors per subcarrier
/// and the mode-domain components they were built from.
#[derive(Debug, Clone)]
pub struct IsacSymbol {
    /// `x_q`, element domain, one per subcarrier.
    pub element: Vec<CVec>,
    /// Mode-domain sensing component `P_sq s_{q,s}` per subcarrier.
    pub sensing: Vec<CVec>,
    /// Mode-domain component `P_kq s_{q,k}` per user and subcarrier.
    pub users: Vec<Vec<CVec>>,
}

/// Assembles `x_q = F^H (P_sq s_{q,s} + Σ_k P_kq s_{q,k})`, each mode-domain
/// vector carrying the `1/√N_f` normalisation. The carrier factor is omitted.
///
/// `data` and `powers` are `N_f × N_t` (subcarrier × mode row).
pub fn build_isac_symbol(
    basis: &DftBasis,
    alloc: &ModeAllocation,
    data: &CMat,
    powers: &DMatrix<f64>,
) -> Result<IsacSymbol, WaveformError> {
    let n_t = basis.n_t;
    let n_f = data.nrows();
    if data.ncols() != n_t || powers.shape() != (n_f, n_t) {
        return Err(WaveformError::Contract(
            "data and power shapes must be N_f × N_t".into(),
        ));
    }
    let norm = 1.0 / (n_f as f64).sqrt();
    let s_row = basis.mode_index(alloc.sensing_mode);
    let mut element = Vec::with_capacity(n_f);
    let mut sensing = Vec::with_capacity(n_f);
    let mut users = vec![Vec::with_capacity(n_f); alloc.user_modes.len()];
    for q in 0..n_f {
        for (row, l) in basis.modes().into_iter().enumerate() {
            let p = powers[(q, row)];
            if p < 0.0 || !p.is_finite() {
                return Err(WaveformError::Contract(format!("invalid power {p} at ({q}, mode {l})")));
            }
            if p > 0.0 && row != s_row && alloc.owner(l).is_none() {
                return Err(WaveformError::Contract(format!(
                    "power on unallocated mode {l} at subcarrier {q}"
                )));
            }
        }
        let mut s_vec = CVec::zeros(n_t);
        s_vec[s_row] = data[(q, s_row)] * powers[(q, s_row)].sqrt() * norm;
        let mut total = s_vec.clone();
        for (k, modes) in alloc.user_modes.iter().enumerate() {
            let mut u_vec = CVec::zeros(n_t);
            for &l in modes {
                let row = basis.mode_index(l);
                u_vec[row] = data[(q, row)] * powers[(q, row)].sqrt() * norm;
            }
            total += &u_vec;
            users[k].push(u_vec);
        }
        element.push(basis.synthesize(&total));
        sensing.push(s_vec);
    }
    Ok(IsacSymbol {
        element,
        sensing,
        users,
    })
}

/// Result of element-wise echo division.
#[derive(Debug, Clone)]
pub struct EchoDivision {
    /// `Y / S` on valid cells, zero elsewhere.
    pub channel: CMat,
    /// `false` marks cells with a zero reference, excluded downstream.
    pub valid: DMatrix<bool>,
}

impl EchoDivision {
    pub fn flagged_cells(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// Element-wise division of the received echo by the transmitted reference.
pub fn echo_division(received: &CMat, reference: &CMat) -> Result<EchoDivision, WaveformError> {
    if received.shape() != reference.shape() {
        return Err(WaveformError::Contract("echo and reference shapes differ".into()));
    }
    let (r, c) = received.shape();
    let valid = DMatrix::from_fn(r, c, |i, j| reference[(i, j)].norm() > 0.0);
    let channel = CMat::from_fn(r, c, |i, j| {
        if valid[(i, j)] {
            received[(i, j)] / reference[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(EchoDivision { channel, valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::frobenius;

    #[test]
    fn dft_two_point() {
        let b = dft_basis(2);
        // mode 0 row is constant, mode 1 row alternates
        let r0 = b.mode_index(0);
        let r1 = b.mode_index(1);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.matrix[(r0, 0)] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((b.matrix[(r0, 1)] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((b.matrix[(r1, 0)] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((b.matrix[(r1, 1)] - C64::new(-s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dft_unitary_and_round_trip() {
        let b = dft_basis(16);
        let e = &b.matrix * b.matrix.adjoint() - CMat::identity(16, 16);
        assert!(frobenius(&e) <= 1e-12);
        for l in b.modes() {
            let c = b.decompose(&b.mode_vector(l));
            for (i, z) in c.iter().enumerate() {
                let want = if i == b.mode_index(l) { 1.0 } else { 0.0 };
                assert!((z - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn reflected_mode_wraps() {
        assert_eq!(reflected_mode(3, 16), -3);
        assert_eq!(reflected_mode(-7, 16), 7);
        assert_eq!(reflected_mode(8, 16), 8);
        assert_eq!(reflected_mode(0, 16), 0);
    }

    #[test]
    fn combination_counts() {
        assert_eq!(count_mode_combinations(16, &[8, 7], 1).unwrap(), 65536);
        assert_eq!(count_mode_combinations(16, &[15], 16).unwrap(), 1);
        let c: Vec<u128> = (1..=16)
            .map(|n| count_mode_combinations(16, &[8, 7], n).unwrap())
            .collect();
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
        assert!(count_mode_combinations(16, &[8, 8], 1).is_err());
        assert_eq!(index_information_bits(16, &[8, 7]).unwrap(), 238);
    }

    #[test]
    fn forced_partition_ignores_bits() {
        let a = allocate_modes(16, &[15], 3, &[true; 8], 9).unwrap();
        let b = allocate_modes(16, &[15], 3, &[false; 8], 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.user_modes[0].len(), 15);
        assert!(!a.user_modes[0].contains(&a.sensing_mode));
    }

    #[test]
    fn allocation_is_deterministic_and_disjoint() {
        let bits = [
            true, false, true, true, false, false, true, false, true, true, true, false, true,
        ];
        let a = allocate_modes(16, &[8, 7], 5, &bits, 42).unwrap();
        assert_eq!(a, allocate_modes(16, &[8, 7], 5, &bits, 42).unwrap());
        let mut all: Vec<i32> = a.user_modes.concat();
        all.push(a.sensing_mode);
        all.sort_unstable();
        assert_eq!(all, (-7..=8).collect::<Vec<_>>());
    }

    #[test]
    fn sweep_covers_every_mode() {
        let mut s: Vec<i32> = (1..=16).map(|n| sensing_mode(16, n)).collect();
        s.sort_unstable();
        assert_eq!(s, (-7..=8).collect::<Vec<_>>());
    }

    #[test]
    fn symbol_one_hot_and_zero() {
        let b = dft_basis(8);
        let alloc = allocate_modes(8, &[3, 2], 2, &[], 1).unwrap();
        let ones = CMat::from_element(1, 8, C64::new(1.0, 0.0));
        let zero = DMatrix::zeros(1, 8);
        let sym = build_isac_symbol(&b, &alloc, &ones, &zero).unwrap();
        assert!(sym.element[0].iter().all(|z| z.norm() == 0.0));

        let mut p = DMatrix::zeros(1, 8);
        p[(0, b.mode_index(alloc.sensing_mode))] = 1.0;
        let sym = build_isac_symbol(&b, &alloc, &ones, &p).unwrap();
        let want = b.mode_vector(alloc.sensing_mode);
        assert!((&sym.element[0] - want).norm() < 1e-12);
    }

    #[test]
    fn symbol_rejects_power_off_allocation() {
        let b = dft_basis(8);
        let alloc = allocate_modes(8, &[3, 2], 2, &[], 1).unwrap();
        let free = b
            .modes()
            .into_iter()
            .find(|&l| l != alloc.sensing_mode && alloc.owner(l).is_none())
            .unwrap();
        let mut p = DMatrix::zeros(1, 8);
        p[(0, b.mode_index(free))] = 1.0;
        let ones = CMat::from_element(1, 8, C64::new(1.0, 0.0));
        assert!(build_isac_symbol(&b, &alloc, &ones, &p).is_err());
    }

    #[test]
    fn echo_division_cases() {
        let h = CMat::from_fn(3, 4, |i, j| C64::new(i as f64 + 1.0, j as f64 - 1.0));
        let mut s = CMat::from_fn(3, 4, |i, j| C64::from_polar(2.0, 0.3 * (i + j) as f64));
        let y = h.component_mul(&s);
        let d = echo_division(&y, &s).unwrap();
        assert!(frobenius(&(d.channel - &h)) < 1e-12);
        s[(1, 2)] = C64::new(0.0, 0.0);
        let d = echo_division(&y, &s).unwrap();
        assert_eq!(d.flagged_cells(), 1);
        assert!(!d.valid[(1, 2)]);
        assert!((d.channel[(0, 0)] - h[(0, 0)]).norm() < 1e-12);
    }
}
