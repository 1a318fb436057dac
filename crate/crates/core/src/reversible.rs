//! Symmetrization of a reversible chain on one communicating class.
//!
//! On a closed irreducible class with stationary `π`, detailed balance makes
//! `A = D^{1/2} P D^{-1/2}` symmetric, with `D = diag(π)`. Its eigenvalues are
//! those of `P` on the class and drive both the tail certificate used by
//! [`crate::maxprob`] and the killed-chain decomposition in
//! [`crate::spectral`].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::chain::{detailed_balance_defect, stationary, ChainSpec};
use crate::error::{Error, Result};

/// Tolerance on detailed balance when deciding reversibility.
pub const REVERSIBLE_TOL: f64 = 1e-10;

/// A reversible chain restricted to the closed class of a state.
#[derive(Debug, Clone)]
pub struct ReversibleClass {
    /// Global indices of the class, increasing.
    pub states: Vec<usize>,
    /// Global index → position in `states`, `None` outside the class.
    pub local: Vec<Option<usize>>,
    /// Stationary distribution on the class (local indexing).
    pub pi: Vec<f64>,
    /// The restricted chain (local indexing).
    pub chain: ChainSpec,
}

impl ReversibleClass {
    pub fn of(chain: &ChainSpec, x: usize) -> Result<Self> {
        let states = chain.communicating_class(x);
        if !chain.is_closed(&states) {
            return Err(Error::NotIrreducible(x));
        }
        let restricted = chain.restrict(&states)?;
        let pi = stationary(&restricted)?;
        if pi.pi.iter().any(|&p| p <= 0.0) {
            return Err(Error::NotIrreducible(x));
        }
        if detailed_balance_defect(&restricted, &pi) > REVERSIBLE_TOL {
            return Err(Error::NotReversible);
        }
        let mut local = vec![None; chain.n()];
        for (k, &s) in states.iter().enumerate() {
            local[s] = Some(k);
        }
        Ok(ReversibleClass {
            states,
            local,
            pi: pi.pi,
            chain: restricted,
        })
    }

    /// `√π(i) p(i, j) / √π(j)` over the given local states, symmetrized to
    /// remove rounding asymmetry.
    pub fn symmetrized(&self, keep: &[usize]) -> DMatrix<f64> {
        let m = keep.len();
        let mut pos = vec![usize::MAX; self.states.len()];
        for (k, &s) in keep.iter().enumerate() {
            pos[s] = k;
        }
        let mut a = DMatrix::zeros(m, m);
        for (k, &s) in keep.iter().enumerate() {
            for &(j, p) in self.chain.row(s) {
                if pos[j] != usize::MAX {
                    a[(k, pos[j])] = self.pi[s].sqrt() * p / self.pi[j].sqrt();
                }
            }
        }
        (&a + a.transpose()) * 0.5
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        let all: Vec<usize> = (0..self.states.len()).collect();
        self.symmetrized(&all).symmetric_eigen()
    }

    /// Largest eigenvalue modulus after removing the trivial eigenvalue 1.
    pub fn lambda_star(&self) -> f64 {
        let eig = self.eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if vals.len() <= 1 {
            return 0.0;
        }
        let top = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty");
        vals.swap_remove(top);
        vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).min(1.0)
    }

    /// Smallest eigenvalue of the class chain.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
