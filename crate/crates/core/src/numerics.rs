//! Shared numerical kernels: Bessel functions of the first kind, Hermitian
//! eigendecomposition, scalar bisection and 2-D grid peak detection.
//!
//! Every function here is pure; higher modules rely on these contracts for
//! determinism.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;
/// Dynamically sized complex matrix.
pub type CMat = DMatrix<C64>;
/// Dynamically sized complex column vector.
pub type CVec = DVector<C64>;

/// Largest Bessel order accepted by [`bessel_j`].
pub const MAX_BESSEL_ORDER: u32 = 64;

/// Arguments below this magnitude use the ascending power series.
const SERIES_LIMIT: f64 = 12.0;

/// Relative tolerance for the Hermitian input check of [`hermitian_eig`].
pub const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("bisection endpoints do not bracket a root: f(lo)={f_lo:.6e}, f(hi)={f_hi:.6e}")]
    Bracket { f_lo: f64, f_hi: f64 },
    #[error("invalid bisection interval or tolerance: lo={lo}, hi={hi}, tol={tol}")]
    Interval { lo: f64, hi: f64, tol: f64 },
}

/// Bessel function of the first kind `J_order(x)`.
///
/// Uses the ascending power series for `|x| < 12` and Miller's downward
/// recurrence normalised by `J_0 + 2 Σ J_{2k} = 1` otherwise. Negative orders
/// follow `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(order: i32, x: f64) -> Result<f64, NumericsError> {
    if !x.is_finite() {
        return Err(NumericsError::Domain(format!("non-finite argument {x}")));
    }
    let n = order.unsigned_abs();
    if n > MAX_BESSEL_ORDER {
        return Err(NumericsError::Domain(format!(
            "order {order} exceeds the supported range |order| <= {MAX_BESSEL_ORDER}"
        )));
    }
    let order_sign = if order < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let arg_sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    let value = if ax < SERIES_LIMIT {
        bessel_series(n, ax)
    } else {
        bessel_miller(n, ax)
    };
    Ok(order_sign * arg_sign * value)
}

/// Evaluates `J_l(x)` for every order in `orders`, sharing one call per order.
pub fn bessel_j_many(orders: &[i32], x: f64) -> Result<Vec<f64>, NumericsError> {
    orders.iter().map(|&l| bessel_j(l, x)).collect()
}

fn bessel_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    if half == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 200 {
            break;
        }
    }
    sum
}

fn bessel_miller(n: u32, x: f64) -> f64 {
    let top = (n as f64).max(x);
    let mut m = (top + 20.0 + (160.0 * top).sqrt()) as u32;
    m += m % 2;
    let mut next = 0.0_f64;
    let mut cur = 1e-300_f64;
    let mut norm = 0.0_f64;
    let mut result = 0.0_f64;
    for k in (1..=m).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // `cur` now holds the unnormalised J_{k-1}.
        let idx = k - 1;
        if idx == n {
            result = cur;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
    }
    norm += cur;
    result / norm
}

/// Eigenvalues sorted in descending order with their paired eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Real eigenvalues, `eigenvalues[i] >= eigenvalues[i + 1]`.
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix; column `n` pairs with `eigenvalues[n]`.
    pub eigenvectors: CMat,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rebuilds `U Ω U^H`.
    pub fn reconstruct(&self) -> CMat {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &mu) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(mu);
        }
        scaled * u.adjoint()
    }
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// Input asymmetry `‖R − R^H‖` above `1e-8·‖R‖` is rejected. The input is
/// symmetrised before factorisation.
pub fn hermitian_eig(r: &CMat) -> Result<EigenDecomposition, NumericsError> {
    let (rows, cols) = r.shape();
    if rows != cols || rows == 0 {
        return Err(NumericsError::Shape { rows, cols });
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::Domain("matrix has non-finite entries".into()));
    }
    let norm = frobenius(r);
    let asym = frobenius(&(r - r.adjoint()));
    let tolerance = HERMITIAN_TOL * norm;
    if asym > tolerance {
        return Err(NumericsError::NotHermitian {
            asymmetry: asym,
            tolerance,
        });
    }
    let sym = (r + r.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMat::zeros(rows, rows);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Root of a monotone function on `[lo, hi]` by interval halving.
///
/// Stops once the bracket is no wider than `tol`; the number of halvings is
/// at most `ceil(log2((hi − lo)/tol))`. Returns the bracket midpoint.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && tol > 0.0 && lo <= hi) {
        return Err(NumericsError::Interval { lo, hi, tol });
    }
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(NumericsError::Bracket { f_lo, f_hi });
    }
    let max_iter = bisect_iterations(lo, hi, tol);
    let (mut a, mut b) = (lo, hi);
    let lo_negative = f_lo < 0.0;
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Upper bound on the halvings [`bisect`] performs for a given bracket.
pub fn bisect_iterations(lo: f64, hi: f64, tol: f64) -> u32 {
    let ratio = (hi - lo) / tol;
    if ratio <= 1.0 {
        0
    } else {
        ratio.log2().ceil() as u32
    }
}

/// One sampled axis of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Axis {
    pub name: String,
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    /// Samples `start, start+step, …` up to and including `stop` (within half a step).
    pub fn from_range(name: &str, start: f64, stop: f64, step: f64) -> Self {
        let count = if step > 0.0 && stop >= start {
            ((stop - start) / step + 0.5).floor() as usize + 1
        } else {
            1
        };
        Axis {
            name: name.to_string(),
            start,
            step,
            count,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    pub fn stop(&self) -> f64 {
        self.value(self.count.saturating_sub(1))
    }
}

/// Real-valued function sampled on a rectangular grid, stored axis-1 major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub axis1: Axis,
    pub axis2: Axis,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn new(axis1: Axis, axis2: Axis, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            axis1.count * axis2.count,
            "grid values must match axis sample counts"
        );
        Grid2D { axis1, axis2, values }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(axis1: Axis, axis2: Axis, f: F) -> Self {
        let mut values = Vec::with_capacity(axis1.count * axis2.count);
        for i in 0..axis1.count {
            let a = axis1.value(i);
            for j in 0..axis2.count {
                values.push(f(a, axis2.value(j)));
            }
        }
        Grid2D::new(axis1, axis2, values)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.count, self.axis2.count)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.count + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Adds `c` to every cell.
    pub fn offset(&self, c: f64) -> Grid2D {
        Grid2D::new(
            self.axis1.clone(),
            self.axis2.clone(),
            self.values.iter().map(|v| v + c).collect(),
        )
    }
}

/// A local maximum reported by [`find_peaks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub i: usize,
    pub j: usize,
    pub axis1: f64,
    pub axis2: f64,
    pub height: f64,
}

/// Local maxima of a grid sorted by descending height.
///
/// A cell qualifies when it is no lower than any of its (up to eight)
/// neighbours and strictly higher than at least one. Peaks closer than
/// `min_separation` cells (Chebyshev distance) to an already accepted,
/// higher peak are merged into it. Ties in height go to the lower linear
/// index. At most `max_count` peaks are returned.
pub fn find_peaks(grid: &Grid2D, max_count: usize, min_separation: usize) -> Vec<Peak> {
    let (n1, n2) = grid.shape();
    let mut candidates = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let v = grid.get(i, j);
            let mut dominates = true;
            let mut strict = false;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= n1 as i64 || nj >= n2 as i64 {
                        continue;
                    }
                    let w = grid.get(ni as usize, nj as usize);
                    if w > v {
                        dominates = false;
                    } else if w < v {
                        strict = true;
                    }
                }
            }
            if dominates && strict {
                candidates.push((i, j, v));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.0 * n2 + a.1).cmp(&(b.0 * n2 + b.1)))
    });
    let mut peaks: Vec<Peak> = Vec::new();
    for (i, j, v) in candidates {
        if peaks.len() >= max_count {
            break;
        }
        let close = peaks.iter().any(|p| {
            let d = (p.i as i64 - i as i64).abs().max((p.j as i64 - j as i64).abs());
            (d as usize) < min_separation
        });
        if close {
            continue;
        }
        peaks.push(Peak {
            i,
            j,
            axis1: grid.axis1.value(i),
            axis2: grid.axis2.value(j),
            height: v,
        });
    }
    peaks
}

/// Local maxima of a 1-D profile (strictly higher than at least one
/// neighbour, lower than none), sorted by descending height, merged within
/// `min_separation` samples.
pub fn find_peaks_1d(values: &[f64], max_count: usize, min_separation: usize) -> Vec<(usize, f64)> {
    let n = values.len();
    let mut cand = Vec::new();
    for i in 0..n {
        let v = values[i];
        let left = if i > 0 { Some(values[i - 1]) } else { None };
        let right = if i + 1 < n { Some(values[i + 1]) } else { None };
        let mut dominates = true;
        let mut strict = false;
        for w in [left, right].into_iter().flatten() {
            if w > v {
                dominates = false;
            } else if w < v {
                strict = true;
            }
        }
        if dominates && strict {
            cand.push((i, v));
        }
    }
    cand.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, v) in cand {
        if out.len() >= max_count {
            break;
        }
        if out
            .iter()
            .any(|&(k, _)| ((k as i64 - i as i64).unsigned_abs() as usize) < min_separation)
        {
            continue;
        }
        out.push((i, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Integral representation J_n(x) = (1/π)∫_0^π cos(nτ − x sin τ) dτ,
    /// evaluated with a composite trapezoid rule (spectrally accurate here).
    fn bessel_integral(n: i32, x: f64) -> f64 {
        let steps = 4000;
        let h = std::f64::consts::PI / steps as f64;
        let mut sum = 0.0;
        for k in 0..=steps {
            let t = k as f64 * h;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            sum += w * (n as f64 * t - x * t.sin()).cos();
        }
        sum * h / std::f64::consts::PI
    }

    #[test]
    fn bessel_trivial_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(-3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn bessel_matches_integral_oracle() {
        let v = bessel_j(2, 3.5).unwrap();
        assert!((v - bessel_integral(2, 3.5)).abs() < 1e-10);
        // Frozen reference value.
        assert!((v - 0.458_629_184_194_307_5).abs() < 1e-12, "{v}");
        for &(n, x) in &[
            (0, 11.9),
            (5, 12.1),
            (8, 19.25),
            (16, 25.0),
            (3, 30.0),
            (40, 20.0),
            (1, 50.0),
        ] {
            let a = bessel_j(n, x).unwrap();
            let b = bessel_integral(n, x);
            assert!((a - b).abs() < 1e-10, "J_{n}({x}): {a} vs {b}");
        }
    }

    #[test]
    fn bessel_negative_order_and_argument() {
        let a = bessel_j(3, 4.2).unwrap();
        assert!((bessel_j(-3, 4.2).unwrap() + a).abs() < 1e-15);
        assert!((bessel_j(3, -4.2).unwrap() + a).abs() < 1e-15);
        let b = bessel_j(4, 14.0).unwrap();
        assert!((bessel_j(-4, 14.0).unwrap() - b).abs() < 1e-15);
    }

    #[test]
    fn bessel_rejects_bad_input() {
        assert!(bessel_j(1, f64::NAN).is_err());
        assert!(bessel_j(1, f64::INFINITY).is_err());
        assert!(bessel_j(65, 1.0).is_err());
    }

    #[test]
    fn bessel_continuous_across_series_limit() {
        for n in 0..20 {
            let a = bessel_j(n, 12.0 - 1e-9).unwrap();
            let b = bessel_j(n, 12.0).unwrap();
            assert!((a - b).abs() < 1e-9, "order {n}: {a} vs {b}");
        }
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = hermitian_eig(&CMat::identity(4, 4)).unwrap();
        assert!(e.eigenvalues.iter().all(|&m| (m - 1.0).abs() < 1e-14));
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = C64::new(1.0, 0.0);
        d[(1, 1)] = C64::new(3.0, 0.0);
        let e = hermitian_eig(&d).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        assert!((e.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((e.eigenvectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = CMat::identity(3, 3);
        m[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(hermitian_eig(&m), Err(NumericsError::NotHermitian { .. })));
        assert!(matches!(
            hermitian_eig(&CMat::zeros(2, 3)),
            Err(NumericsError::Shape { .. })
        ));
    }

    #[test]
    fn bisect_examples() {
        let r = bisect(|x| x - 2.0, 0.0, 5.0, 1e-9).unwrap();
        assert!((r - 2.0).abs() < 1e-9);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-9).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-9);
        assert!(matches!(
            bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9),
            Err(NumericsError::Bracket { .. })
        ));
        let r = bisect(|x| 3.0 - x, 0.0, 5.0, 1e-9).unwrap();
        assert!((r - 3.0).abs() < 1e-9);
    }

    #[test]
    fn bisect_respects_iteration_bound() {
        let mut calls = 0u32;
        let _ = bisect(
            |x| {
                calls += 1;
                x - 0.123_456
            },
            0.0,
            1.0,
            1e-6,
        )
        .unwrap();
        // two endpoint evaluations plus at most ceil(log2(1e6)) = 20 halvings
        assert!(calls <= 2 + bisect_iterations(0.0, 1.0, 1e-6));
        assert_eq!(bisect_iterations(0.0, 1.0, 1e-6), 20);
    }

    fn axis(name: &str, n: usize) -> Axis {
        Axis {
            name: name.into(),
            start: 0.0,
            step: 1.0,
            count: n,
        }
    }

    #[test]
    fn peaks_on_constant_grid_are_empty() {
        let g = Grid2D::from_fn(axis("a", 10), axis("b", 12), |_, _| 3.0);
        assert!(find_peaks(&g, 5, 1).is_empty());
    }

    #[test]
    fn peaks_single_spike() {
        let g = Grid2D::from_fn(axis("a", 10), axis("b", 12), |a, b| {
            if a == 4.0 && b == 7.0 {
                5.0
            } else {
                1.0
            }
        });
        let p = find_peaks(&g, 5, 1);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].axis1, p[0].axis2), (4.0, 7.0));
    }

    #[test]
    fn peaks_two_gaussian_bumps_match_exhaustive_scan() {
        let bump = |a: f64, b: f64, ca: f64, cb: f64, h: f64| h * (-((a - ca).powi(2) + (b - cb).powi(2)) / 4.0).exp();
        let g = Grid2D::from_fn(axis("a", 30), axis("b", 30), |a, b| {
            bump(a, b, 10.0, 10.0, 1.0) + bump(a, b, 10.0, 20.0, 0.7)
        });
        let p = find_peaks(&g, 10, 3);
        assert_eq!(p.len(), 2);
        // exhaustive oracle: argmax over each half of the grid
        let mut best = [(0.0, 0, 0); 2];
        for i in 0..30 {
            for j in 0..30 {
                let side = usize::from(j >= 15);
                let v = g.get(i, j);
                if v > best[side].0 {
                    best[side] = (v, i, j);
                }
            }
        }
        assert_eq!((p[0].i, p[0].j), (best[0].1, best[0].2));
        assert_eq!((p[1].i, p[1].j), (best[1].1, best[1].2));
        assert!((p[0].axis2 - 10.0).abs() <= 1.0 && (p[1].axis2 - 20.0).abs() <= 1.0);
    }

    #[test]
    fn peaks_merge_and_tie_break() {
        // two equal cells side by side: one peak, at the lower index
        let g = Grid2D::from_fn(axis("a", 5), axis("b", 5), |a, b| {
            if a == 2.0 && (b == 2.0 || b == 3.0) {
                2.0
            } else {
                0.0
            }
        });
        let p = find_peaks(&g, 5, 2);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].i, p[0].j), (2, 2));
    }

    #[test]
    fn peaks_1d() {
        let v = [0.0, 1.0, 0.5, 0.5, 2.0, 0.0, 0.1];
        let p = find_peaks_1d(&v, 5, 1);
        assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), vec![4, 1, 6]);
        let p = find_peaks_1d(&v, 5, 4);
        assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), vec![4]);
    }
}
