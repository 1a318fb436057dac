//! Exact hitting-time and surprise probabilities for finite Markov chains.
//!
//! The crate is organised around [`ChainSpec`], a validated sparse
//! row-stochastic matrix. Hitting-time and surprise distributions are exact
//! dynamic programs ([`hitting`]); maximal transition probabilities carry a
//! spectral truncation certificate ([`maxprob`]); killed-chain expansions
//! live in [`spectral`]; sums of geometric variables in [`geomsum`]; the
//! example families in [`constructions`]; and bound checks, campaigns and
//! experiments in [`harness`].
//!
//! ```
//! use hitstat::{hitting_pmf, ChainSpec};
//!
//! let chain = ChainSpec::from_dense(&[vec![0.7, 0.3], vec![0.0, 1.0]]).unwrap();
//! let pmf = hitting_pmf(&chain, 0, 1, 5);
//! assert!((pmf.at(3) - 0.7 * 0.7 * 0.3).abs() < 1e-15);
//! ```

pub mod chain;
pub mod constructions;
pub mod error;
pub mod geomsum;
pub mod harness;
pub mod hitting;
pub mod maxprob;
pub mod reversible;
pub mod rng;
pub mod spectral;

pub use chain::{
    evolve, is_reversible, mixing_profile, mixing_time, stationary, validate, ChainSpec,
    MixingProfile, RawChain, StationaryDist,
};
pub use error::{Error, Result};
pub use hitting::{
    expected_hitting, hitting_pmf, loop_erase, mc_hitting_moments, sample_path,
    stationary_hitting_pmf, surprise_pmf, HittingPmf, MomentEstimate, SurprisePmf,
};
pub use maxprob::{maximal_row, maximal_row_sum, starr_ratio, MaximalRow};
pub use spectral::{killed_return_prob, killed_spectrum, reconstruct, KilledSpectrum};
