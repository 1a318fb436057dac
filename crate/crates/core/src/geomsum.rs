//! Sums of independent geometric variables.
//!
//! Convention: a geometric variable with failure probability `q` has
//! `P(X = k) = (1 − q) q^k` for `k ≥ 0`, so the success parameter is
//! `p = 1 − q`.
//!
//! The negative binomial mass uses Loader's saddle-point form (Stirling
//! remainder plus deviance), which keeps full relative precision for
//! arguments far beyond the range of direct factorials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomParams {
    q: Vec<f64>,
}

impl GeomParams {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(bad) = q.iter().find(|v| !(0.0..1.0).contains(*v)) {
            return Err(Error::BadParams(format!("failure probability {bad} not in [0, 1)")));
        }
        Ok(GeomParams { q })
    }

    pub fn equal(n: usize, q: f64) -> Result<Self> {
        Self::new(vec![q; n])
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

// stirlerr(n) for n = 0..=15.
const SFERR: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_09,
    0.027_677_925_684_998_339_15,
    0.020_790_672_103_765_093_11,
    0.016_644_691_189_821_192_16,
    0.013_876_128_823_070_747_10,
    0.011_896_709_945_891_770_10,
    0.010_411_265_261_972_096_50,
    0.009_255_462_182_712_732_918,
    0.008_330_563_433_362_871_256,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_866,
    0.006_408_994_188_004_207_068,
    0.005_951_370_112_758_847_736,
    0.005_554_733_551_962_801_371,
];

/// `ln(n!) − ((n + 1/2) ln n − n + ln √(2π))`.
pub fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < 16 {
        return SFERR[n as usize];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np − x`, accurate when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Binomial mass `C(n, x) p^x q^(n−x)` with `q = 1 − p` passed separately.
fn dbinom_raw(x: u64, n: u64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 1.0;
        }
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return lc.exp();
    }
    if x > n {
        return 0.0;
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = 2.0 * LN_SQRT_2PI + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `P(X_1 + … + X_n = m)` for i.i.d. geometrics with success parameter `p`,
/// i.e. `C(m + n − 1, n − 1) p^n (1 − p)^m`.
pub fn neg_binomial_pmf(n: u64, m: u64, p: f64) -> f64 {
    assert!(n >= 1, "need at least one variable");
    assert!(p > 0.0 && p <= 1.0, "p = {p} not in (0, 1]");
    let total = n + m;
    // C(m+n−1, n−1) = n/(n+m) · C(n+m, n).
    (n as f64 / total as f64) * dbinom_raw(n, total, p, 1.0 - p)
}

/// `ln N!` through the Stirling remainder.
pub fn ln_factorial(n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    LN_SQRT_2PI + (nf + 0.5) * nf.ln() - nf + stirlerr(n)
}

/// `N! / (N^{N+1/2} e^{−N})`.
pub fn stirling_ratio(n: u64) -> f64 {
    assert!(n >= 1);
    (LN_SQRT_2PI + stirlerr(n)).exp()
}

/// Bracket for the i.i.d. mass at the matching parameter `p = n/(m + n)`:
/// `(1/3, 1/2) · √(n / (m (m + n)))`.
pub fn basic_geom_bounds(n: u64, m: u64) -> (f64, f64) {
    assert!(n >= 1 && m >= 1);
    let base = (n as f64 / (m as f64 * (m + n) as f64)).sqrt();
    (base / 3.0, base / 2.0)
}

/// An interval stored by the logarithms of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBracket {
    pub ln_lower: f64,
    pub ln_upper: f64,
}

impl LogBracket {
    pub fn lower(&self) -> f64 {
        self.ln_lower.exp()
    }

    pub fn upper(&self) -> f64 {
        self.ln_upper.exp()
    }

    pub fn contains_ln(&self, ln_value: f64, rel_tol: f64) -> bool {
        ln_value >= self.ln_lower - rel_tol && ln_value <= self.ln_upper + rel_tol
    }
}

/// Stirling bracket of `C(M + N, M)`:
/// `(1/3, 1/2) · √((M+N)/(MN)) · (M+N)^{M+N} / (M^M N^N)`.
pub fn binom_bounds(big_m: u64, big_n: u64) -> LogBracket {
    assert!(big_m >= 1 && big_n >= 1);
    let m = big_m as f64;
    let n = big_n as f64;
    let s = m + n;
    let ln_base = 0.5 * (s / (m * n)).ln() + m * (n / m).ln_1p() + n * (m / n).ln_1p();
    LogBracket {
        ln_lower: ln_base - 3f64.ln(),
        ln_upper: ln_base - 2f64.ln(),
    }
}

/// `ln C(M + N, M)`.
pub fn ln_binom(big_m: u64, big_n: u64) -> f64 {
    ln_factorial(big_m + big_n) - ln_factorial(big_m) - ln_factorial(big_n)
}

/// Distribution of the sum on `0..=horizon`.
pub fn geom_sum_pmf_vec(params: &GeomParams, horizon: usize) -> Vec<f64> {
    let mut dist = vec![0.0; horizon + 1];
    dist[0] = 1.0;
    for &q in params.q() {
        convolve_geometric(&mut dist, q);
    }
    dist
}

// In place: new[s] = (1 − q) old[s] + q new[s − 1].
fn convolve_geometric(dist: &mut [f64], q: f64) {
    let mut prev = 0.0;
    for v in dist.iter_mut() {
        let next = (1.0 - q) * *v + q * prev;
        *v = next;
        prev = next;
    }
}

/// `P(X_1 + … + X_n = t)` for independent geometrics.
pub fn geom_sum_pmf(params: &GeomParams, t: usize) -> f64 {
    geom_sum_pmf_vec(params, t)[t]
}

/// `(1/2) √(n / (t (t + n)))`.
pub fn geom_sum_bound(n: usize, t: usize) -> f64 {
    assert!(t >= 1, "bound needs t ≥ 1");
    let (n, t) = (n as f64, t as f64);
    0.5 * (n / (t * (t + n))).sqrt()
}

/// Value of the sum at the predicted maximizer `q_i = t/(t + n)`.
pub fn equal_parameter_value(n: usize, t: usize) -> f64 {
    neg_binomial_pmf(n as u64, t as u64, n as f64 / (t + n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMax {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub resolution: f64,
    pub predicted_q: f64,
    pub predicted_value: f64,
}

const GRID_LIMIT: u64 = 200_000_000;

/// Exhaustive search over the grid `{0, h, 2h, …} ∩ [0, 1)` in each
/// coordinate. Ties go to the lexicographically smallest grid point.
pub fn geom_sum_max_search(n: usize, t: usize, resolution: f64) -> Result<GridMax> {
    if n == 0 || !(resolution > 0.0 && resolution < 1.0) {
        return Err(Error::BadParams(format!("n = {n}, resolution = {resolution}")));
    }
    let steps = (1.0 / resolution).ceil() as u64;
    let side = (0..steps).take_while(|&i| (i as f64) * resolution < 1.0).count() as u64;
    let cells = side.checked_pow(n as u32).filter(|&c| c <= GRID_LIMIT).ok_or_else(|| {
        Error::BadParams(format!("grid with {side}^{n} points is too large"))
    })?;
    // Coordinate 0 is the most significant digit of the cell index.
    let decode = |idx: u64| -> Vec<f64> {
        let mut q = vec![0.0; n];
        let mut rest = idx;
        for v in q.iter_mut().rev() {
            *v = (rest % side) as f64 * resolution;
            rest /= side;
        }
        q
    };
    let value_at = |idx: u64| -> f64 {
        let mut dist = vec![0.0; t + 1];
        dist[0] = 1.0;
        for q in decode(idx) {
            convolve_geometric(&mut dist, q);
        }
        dist[t]
    };
    let (best_idx, best_val) = (0..cells)
        .into_par_iter()
        .map(|idx| (idx, value_at(idx)))
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    Ok(GridMax {
        argmax: decode(best_idx),
        value: best_val,
        resolution,
        predicted_q: t as f64 / (t + n) as f64,
        predicted_value: equal_parameter_value(n, t),
    })
}

/// `P(X_1 + … + X_n = t)` where variable `i` is a mixture of geometrics with
/// components `(weight, q)`.
pub fn geom_mixture_pmf(mixtures: &[Vec<(f64, f64)>], t: usize) -> Result<f64> {
    Ok(geom_mixture_pmf_vec(mixtures, t)?[t])
}

pub fn geom_mixture_pmf_vec(mixtures: &[Vec<(f64, f64)>], horizon: usize) -> Result<Vec<f64>> {
    let mut dist = vec![0.0; horizon + 1];
    dist[0] = 1.0;
    for (i, comps) in mixtures.iter().enumerate() {
        let total: f64 = comps.iter().map(|c| c.0).sum();
        if comps.is_empty() || comps.iter().any(|c| c.0 < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadWeights(format!("variable {i}: weights sum to {total}")));
        }
        if let Some(c) = comps.iter().find(|c| !(0.0..1.0).contains(&c.1)) {
            return Err(Error::BadParams(format!("variable {i}: q = {} not in [0, 1)", c.1)));
        }
        let mut law = vec![0.0; horizon + 1];
        for &(w, q) in comps {
            let mut term = w * (1.0 - q);
            for v in law.iter_mut() {
                *v += term;
                term *= q;
            }
        }
        let mut next = vec![0.0; horizon + 1];
        for (s, a) in dist.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (k, b) in law[..=horizon - s].iter().enumerate() {
                next[s + k] += a * b;
            }
        }
        dist = next;
    }
    Ok(dist)
}
