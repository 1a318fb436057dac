//! Maximal transition probabilities `p*(x, y) = sup_t p^t(x, y)`.
//!
//! The supremum is taken over `t ≤ T` by repeated evolution. For reversible
//! chains whose class is aperiodic the remainder is controlled by the
//! spectral bound
//!
//! ```text
//! |p^t(x, y) − π(y)| ≤ √(π(y)/π(x)) · λ*^t
//! ```
//!
//! with `λ*` the largest nontrivial eigenvalue modulus. Since `π(y)` is the
//! limit of `p^t(x, y)` it is itself a lower bound for `p*(x, y)`, so
//! `max(running max, π(y))` is within `tail_eps` of the true supremum.
//!
//! [`starr_ratio`] evaluates the even-time maximal function of Starr's
//! inequality with the same certificate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chain::{point_mass, ChainSpec};
use crate::error::{Error, Result};
use crate::reversible::ReversibleClass;

/// Certification threshold on the additive tail error.
pub const CERT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalRow {
    pub x: usize,
    pub horizon: usize,
    pub pstar: Vec<f64>,
    /// Time of the running maximum; `None` when the limit `π(y)` exceeded it.
    pub argmax_t: Vec<Option<usize>>,
    pub pstar_even: Vec<f64>,
    pub pstar_odd: Vec<f64>,
    pub certified: bool,
    pub tail_eps: Option<f64>,
    pub lambda_star: Option<f64>,
}

impl MaximalRow {
    pub fn sum(&self) -> f64 {
        self.pstar.iter().sum()
    }

    pub fn even_sum(&self) -> f64 {
        self.pstar_even.iter().sum()
    }

    pub fn odd_sum(&self) -> f64 {
        self.pstar_odd.iter().sum()
    }

    /// CSV with columns `y,pstar,argmax_t,certified,tail_eps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,pstar,argmax_t,certified,tail_eps\n");
        let eps = self.tail_eps.map(|e| e.to_string()).unwrap_or_default();
        for (y, p) in self.pstar.iter().enumerate() {
            let arg = match self.argmax_t[y] {
                Some(t) => t.to_string(),
                None => "limit".into(),
            };
            let _ = writeln!(out, "{y},{p},{arg},{},{eps}", self.certified);
        }
        out
    }
}

/// Spectral data needed to certify a truncated supremum from `x`.
#[derive(Debug, Clone)]
pub struct TailCertificate {
    /// Stationary distribution on the whole state space (zero off the class).
    pub pi: Vec<f64>,
    pub lambda_star: f64,
    /// `max_y √(π(y)/π(x))` over the class.
    pub spread: f64,
}

impl TailCertificate {
    pub fn of(chain: &ChainSpec, x: usize) -> Option<Self> {
        let class = ReversibleClass::of(chain, x).ok()?;
        let mut pi = vec![0.0; chain.n()];
        for (k, &s) in class.states.iter().enumerate() {
            pi[s] = class.pi[k];
        }
        let px = pi[x];
        let spread = class
            .pi
            .iter()
            .map(|&p| (p / px).sqrt())
            .fold(0.0, f64::max);
        Some(TailCertificate {
            pi,
            lambda_star: class.lambda_star(),
            spread,
        })
    }

    pub fn tail_eps(&self, horizon: usize) -> f64 {
        self.spread * self.lambda_star.powf(horizon as f64)
    }

    /// Smallest horizon with `tail_eps ≤ eps`, if `λ* < 1`.
    pub fn horizon_for(&self, eps: f64) -> Option<usize> {
        if self.lambda_star >= 1.0 - 1e-12 {
            return None;
        }
        if self.lambda_star <= 0.0 || self.spread <= eps {
            return Some(1);
        }
        let t = ((eps / self.spread).ln() / self.lambda_star.ln()).ceil();
        Some((t.max(1.0)) as usize)
    }
}

/// `max_{t ≤ T} p^t(x, ·)`, certified when the spectral tail bound allows.
pub fn maximal_row(chain: &ChainSpec, x: usize, horizon: usize) -> MaximalRow {
    let cert = TailCertificate::of(chain, x);
    maximal_row_with(chain, x, horizon, cert.as_ref())
}

/// Picks the horizon from the spectral certificate, capped at `max_horizon`.
pub fn maximal_row_certified(chain: &ChainSpec, x: usize, max_horizon: usize) -> MaximalRow {
    let cert = TailCertificate::of(chain, x);
    let horizon = cert
        .as_ref()
        .and_then(|c| c.horizon_for(CERT_EPS))
        .map_or(max_horizon, |t| t.min(max_horizon));
    maximal_row_with(chain, x, horizon.max(1), cert.as_ref())
}

fn maximal_row_with(
    chain: &ChainSpec,
    x: usize,
    horizon: usize,
    cert: Option<&TailCertificate>,
) -> MaximalRow {
    let n = chain.n();
    let mut cur = point_mass(n, x);
    let mut next = vec![0.0; n];
    let mut pstar = cur.clone();
    let mut argmax_t: Vec<Option<usize>> = vec![Some(0); n];
    let mut pstar_even = cur.clone();
    let mut pstar_odd = vec![0.0; n];
    for t in 1..=horizon {
        chain.step_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        let parity = if t % 2 == 0 {
            &mut pstar_even
        } else {
            &mut pstar_odd
        };
        for y in 0..n {
            let v = cur[y];
            if v > pstar[y] {
                pstar[y] = v;
                argmax_t[y] = Some(t);
            }
            if v > parity[y] {
                parity[y] = v;
            }
        }
    }
    let mut certified = false;
    let mut tail_eps = None;
    let mut lambda_star = None;
    if let Some(c) = cert {
        lambda_star = Some(c.lambda_star);
        let eps = c.tail_eps(horizon);
        tail_eps = Some(eps);
        certified = c.lambda_star < 1.0 - 1e-12 && eps <= CERT_EPS;
        if certified {
            for y in 0..n {
                let limit = c.pi[y];
                if limit > pstar[y] {
                    pstar[y] = limit;
                    argmax_t[y] = None;
                }
                pstar_even[y] = pstar_even[y].max(limit);
                pstar_odd[y] = pstar_odd[y].max(limit);
            }
        }
    }
    MaximalRow {
        x,
        horizon,
        pstar,
        argmax_t,
        pstar_even,
        pstar_odd,
        certified,
        tail_eps,
        lambda_star,
    }
}

/// `Σ_y p*(x, y)` over `t ≤ T`. When certified this is a lower bound on the
/// true row sum and within `n · tail_eps` of it.
pub fn maximal_row_sum(chain: &ChainSpec, x: usize, horizon: usize) -> f64 {
    maximal_row(chain, x, horizon).sum()
}

/// Right-hand side of the row-sum bound, `2e · max(1, ln(1/π(x)))`.
pub fn row_sum_bound(pi_x: f64) -> f64 {
    2.0 * std::f64::consts::E * (1.0f64).max((1.0 / pi_x).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarrRatio {
    pub x: usize,
    pub p_exp: f64,
    pub horizon: usize,
    /// `‖sup_k P^{2k} f‖_p / ‖f‖_p` in `L^p(π)` with `f = 1_x`.
    pub ratio: f64,
    /// `p / (p − 1)`.
    pub bound: f64,
    pub certified: bool,
    pub tail_eps: f64,
    pub lambda_star: f64,
}

/// Horizon (in even steps) with `λ*^{2T} ≤ 1e-14`.
pub fn starr_horizon(lambda_star: f64) -> usize {
    if lambda_star <= 0.0 {
        return 1;
    }
    ((1e-14f64).ln() / (2.0 * lambda_star.ln())).ceil().max(1.0) as usize
}

/// Starr's maximal inequality for `f = 1_x` on an irreducible reversible
/// chain, sup over even times `0, 2, …, 2T`.
pub fn starr_ratio(chain: &ChainSpec, x: usize, p_exp: f64, horizon: usize) -> Result<StarrRatio> {
    if !(p_exp > 1.0) || !p_exp.is_finite() {
        return Err(Error::BadParams(format!("exponent {p_exp} must exceed 1")));
    }
    if !chain.is_irreducible() {
        return Err(Error::NotIrreducible(x));
    }
    let class = ReversibleClass::of(chain, x)?;
    let lambda_star = class.lambda_star();
    if lambda_star >= 1.0 - 1e-12 {
        return Err(Error::Uncertifiable);
    }
    let pi = &class.pi;
    let n = chain.n();
    let mut f = point_mass(n, x);
    let mut g = f.clone();
    let mut tmp = vec![0.0; n];
    for _ in 0..horizon {
        chain.apply_into(&f, &mut tmp);
        chain.apply_into(&tmp, &mut f);
        for (gy, fy) in g.iter_mut().zip(&f) {
            *gy = gy.max(*fy);
        }
    }
    // Beyond 2T: |p^{2k}(y, x) − π(x)| ≤ √(π(x)/π(y)) λ*^{2k}.
    let spread = pi.iter().map(|&p| (pi[x] / p).sqrt()).fold(0.0, f64::max);
    let tail_eps = spread * lambda_star.powf(2.0 * (horizon as f64 + 1.0));
    let certified = tail_eps <= CERT_EPS;
    if certified {
        g.iter_mut().for_each(|v| *v = v.max(pi[x]));
    }
    let lp_g: f64 = pi.iter().zip(&g).map(|(p, v)| p * v.powf(p_exp)).sum();
    let ratio = (lp_g / pi[x]).powf(1.0 / p_exp);
    Ok(StarrRatio {
        x,
        p_exp,
        horizon,
        ratio,
        bound: p_exp / (p_exp - 1.0),
        certified,
        tail_eps,
        lambda_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_cycle_uncertified() {
        let c = ChainSpec::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        let row = maximal_row(&c, 0, 10);
        assert_eq!(row.pstar, vec![1.0, 1.0]);
        assert_eq!(row.argmax_t[1], Some(1));
        assert!(!row.certified);
        assert_eq!(row.lambda_star, Some(1.0));
    }

    #[test]
    fn lazy_two_state_certified() {
        let c = ChainSpec::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let row = maximal_row(&c, 0, 3);
        assert!(row.certified);
        assert_eq!(row.pstar, vec![1.0, 0.5]);
        assert_eq!(row.argmax_t[0], Some(0));
        assert!(row.sum() <= row_sum_bound(0.5));
    }

    #[test]
    fn limit_replaces_running_max_when_certified() {
        // p^t(0, 1) = (1 − 0.8^t)/2 increases to 1/2.
        let c = ChainSpec::from_dense(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let row = maximal_row(&c, 0, 200);
        assert!(row.certified);
        assert!((row.pstar[1] - 0.5).abs() < 1e-14);
        // Rounding can push some p^t(0, 1) a few ulps past 1/2.
        assert!(row.argmax_t[1].is_none() || row.pstar[1] > 0.5);
        let short = maximal_row(&c, 0, 5);
        assert!(!short.certified);
        assert!(short.pstar[1] < 0.5);
    }

    #[test]
    fn single_state_row_sum() {
        let c = ChainSpec::from_rows(vec![vec![(0, 1.0)]]).unwrap();
        let s = maximal_row_sum(&c, 0, 1);
        assert_eq!(s, 1.0);
        assert!(s <= 2.0 * std::f64::consts::E);
    }

    #[test]
    fn certified_horizon_is_tight() {
        let c = ChainSpec::from_dense(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let row = maximal_row_certified(&c, 0, 10_000);
        assert!(row.certified);
        assert!(row.tail_eps.unwrap() <= CERT_EPS);
        let before = maximal_row(&c, 0, row.horizon - 1);
        assert!(!before.certified);
    }

    #[test]
    fn starr_rows_equal_to_pi() {
        // Every row is π, so P^{2k} f = π(x) for k ≥ 1.
        let pi = [0.1, 0.2, 0.3, 0.4];
        let c = ChainSpec::from_dense(&vec![pi.to_vec(); 4]).unwrap();
        let r = starr_ratio(&c, 0, 2.0, 5).unwrap();
        assert!(r.certified);
        // E_π g² = π(x)·1 + (1 − π(x))·π(x)², ratio = sqrt(that / π(x)).
        let expected = ((0.1 + 0.9 * 0.01) / 0.1f64).sqrt();
        assert!((r.ratio - expected).abs() < 1e-14);
        assert!(r.ratio <= 2.0);
    }

    #[test]
    fn starr_lazy_two_state() {
        let c = ChainSpec::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let r = starr_ratio(&c, 0, 2.0, 4).unwrap();
        // g = (1, 1/2); E_π g² = (1 + 1/4)/2; ratio = sqrt(1.25).
        assert!((r.ratio - 1.25f64.sqrt()).abs() < 1e-14);
        assert!(r.ratio <= r.bound);
    }

    #[test]
    fn starr_errors() {
        let cyc = ChainSpec::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert!(matches!(starr_ratio(&cyc, 0, 2.0, 5), Err(Error::Uncertifiable)));
        let lazy = ChainSpec::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(starr_ratio(&lazy, 0, 1.0, 5), Err(Error::BadParams(_))));
        let nonrev = ChainSpec::from_dense(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        assert!(matches!(starr_ratio(&nonrev, 0, 2.0, 5), Err(Error::NotReversible)));
    }

    #[test]
    fn starr_horizon_meets_target() {
        let t = starr_horizon(0.9);
        assert!(0.9f64.powf(2.0 * t as f64) <= 1e-14);
        assert!(0.9f64.powf(2.0 * (t - 1) as f64) > 1e-14);
    }
}
