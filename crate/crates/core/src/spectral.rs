//! Return probabilities of a killed reversible chain as eigen-expansions.
//!
//! For a reversible chain killed on entering `U`, the π-weighted
//! symmetrization of the killed matrix is a principal submatrix of a
//! symmetric matrix, so
//!
//! ```text
//! P_x(X_t = x, τ(U) > t) = Σ_i a_i λ_i^t,   a_i = v_i(x)² ≥ 0,
//! ```
//!
//! where `v_i` are orthonormal eigenvectors of the symmetrized killed matrix.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chain::{point_mass, ChainSpec};
use crate::error::{Error, Result};
use crate::reversible::ReversibleClass;

/// Eigenvalues closer than this are reported as one cluster.
pub const CLUSTER_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KilledSpectrum {
    pub x: usize,
    pub u: Vec<usize>,
    /// `(a_i, λ_i)`, sorted by decreasing `λ_i`.
    pub terms: Vec<(f64, f64)>,
    /// Every eigenvalue of the (unkilled) class chain is `≥ −1e-12`.
    pub nonneg_eigen: bool,
    pub min_chain_eigenvalue: f64,
    /// Number of eigenvalue groups with internal gaps below [`CLUSTER_GAP`].
    pub degenerate_clusters: usize,
}

impl KilledSpectrum {
    pub fn min_coefficient(&self) -> f64 {
        self.terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min)
    }

    pub fn min_lambda(&self) -> f64 {
        self.terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min)
    }

    /// `{"terms": [[a, lambda], ...], "nonneg_eigen": bool}`.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\"terms\":[");
        for (i, (a, l)) in self.terms.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "[{a:.17e},{l:.17e}]");
        }
        let _ = write!(out, "],\"nonneg_eigen\":{}}}", self.nonneg_eigen);
        out
    }
}

fn check_u(chain: &ChainSpec, x: usize, u: &[usize]) -> Result<Vec<bool>> {
    let mut in_u = vec![false; chain.n()];
    for &s in u {
        if s >= chain.n() {
            return Err(Error::BadIndex { row: x, index: s, n: chain.n() });
        }
        in_u[s] = true;
    }
    if in_u[x] {
        return Err(Error::StateInU(x));
    }
    Ok(in_u)
}

pub fn killed_spectrum(chain: &ChainSpec, x: usize, u: &[usize]) -> Result<KilledSpectrum> {
    let in_u = check_u(chain, x, u)?;
    let class = ReversibleClass::of(chain, x)?;
    let keep: Vec<usize> = class
        .states
        .iter()
        .enumerate()
        .filter(|(_, &g)| !in_u[g])
        .map(|(k, _)| k)
        .collect();
    let lx = class.local[x].expect("x lies in its own class");
    let row = keep.iter().position(|&k| k == lx).expect("x is kept");
    let eig = class.symmetrized(&keep).symmetric_eigen();
    let mut terms: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let v = eig.eigenvectors[(row, i)];
            (v * v, lambda)
        })
        .collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1));
    let degenerate_clusters = terms
        .windows(2)
        .filter(|w| w[0].1 - w[1].1 < CLUSTER_GAP)
        .count();
    let min_chain_eigenvalue = class.min_eigenvalue();
    let mut u_sorted: Vec<usize> = u.to_vec();
    u_sorted.sort_unstable();
    u_sorted.dedup();
    Ok(KilledSpectrum {
        x,
        u: u_sorted,
        terms,
        nonneg_eigen: min_chain_eigenvalue >= -1e-12,
        min_chain_eigenvalue,
        degenerate_clusters,
    })
}

/// `P_x(X_t = x, τ(U) > t)` for `t = 0..=horizon` by direct evolution.
pub fn killed_return_probs(chain: &ChainSpec, x: usize, u: &[usize], horizon: usize) -> Result<Vec<f64>> {
    let in_u = check_u(chain, x, u)?;
    let n = chain.n();
    let mut cur = point_mass(n, x);
    let mut next = vec![0.0; n];
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(1.0);
    for _ in 0..horizon {
        chain.step_into(&cur, &mut next);
        for (v, &dead) in next.iter_mut().zip(&in_u) {
            if dead {
                *v = 0.0;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        out.push(cur[x]);
    }
    Ok(out)
}

pub fn killed_return_prob(chain: &ChainSpec, x: usize, u: &[usize], t: usize) -> Result<f64> {
    Ok(killed_return_probs(chain, x, u, t)?[t])
}

/// `Σ a_i λ_i^t`.
pub fn reconstruct(spectrum: &KilledSpectrum, t: usize) -> f64 {
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    spectrum.terms.iter().map(|&(a, l)| a * l.powi(t)).sum()
}

/// The law of one excursion length, normalized from the return
/// probabilities: a mixture of geometrics with failure probabilities `λ_i`
/// and weights proportional to `a_i / (1 − λ_i)`.
///
/// Requires `λ_i ∈ [0, 1)`; negative coefficients from rounding are clipped
/// to zero here.
pub fn excursion_mixture(spectrum: &KilledSpectrum) -> Result<Vec<(f64, f64)>> {
    let mut comps = Vec::with_capacity(spectrum.terms.len());
    for &(a, l) in &spectrum.terms {
        if l < -1e-12 || l >= 1.0 {
            return Err(Error::NotApplicable(format!("eigenvalue {l} outside [0, 1)")));
        }
        comps.push((a.max(0.0) / (1.0 - l), l.max(0.0)));
    }
    let total: f64 = comps.iter().map(|c| c.0).sum();
    if !(total > 0.0) {
        return Err(Error::NotApplicable("empty spectrum".into()));
    }
    comps.iter_mut().for_each(|c| c.0 /= total);
    comps.retain(|c| c.0 > 0.0);
    Ok(comps)
}
