//! Upper bounds on `P_x(τ(y) = t)` and related quantities.
//!
//! Each kind has an applicability predicate. [`bound_value`] returns
//! [`Error::NotApplicable`] instead of a number whenever the predicate fails.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    /// `n/t` for `t > n`.
    General,
    /// `n²/t` on the surprise probability, `t > n`.
    SurpriseGeneral,
    /// `2e·max(1, log 1/π(x))/t` for reversible chains.
    ReversibleLogPi,
    /// `4e·log n/t` for simple graph walks.
    GraphLogN,
    /// `√(2n)/t` for reversible chains, `t ≥ 4n + 4`.
    ExtremalReversible,
    /// `n√(2n)/t` on the surprise probability, `t ≥ 4n + 4`.
    SurpriseExtremal,
    /// `(1/2)√(n/(t(t − n)))` for reversible chains with non-negative spectrum.
    PositiveEigen,
    /// `1/(t·π(x))`.
    Stationary,
    /// `1/t` for the chain started from `π`.
    StationaryStart,
    /// `P_π(τ(y) = t) − P_π(τ(y) = t − 1) ≤ 0`.
    StationaryMonotone,
    /// `d_x(s)·ψ(t − s) + 1/(t − s)` with `ψ(u) = n/u`, `s = ⌊t/2⌋`.
    Composite,
    /// `4/t` once `t > 2·t_mix(1/4)·⌈log₂ n⌉`.
    CompositeFour,
    /// `Σ_y p*(x, y) ≤ 2e·max(1, log 1/π(x))` with a certified `p*`.
    MaxProbSum,
    /// `(1/t)·Σ_z p*(x, z)`.
    MaxSurprise,
    /// `(1/2)√(n/(t(t + n)))` for sums of `n` geometrics.
    GeomSum,
}

impl BoundKind {
    pub const ALL: [BoundKind; 15] = [
        BoundKind::General,
        BoundKind::SurpriseGeneral,
        BoundKind::ReversibleLogPi,
        BoundKind::GraphLogN,
        BoundKind::ExtremalReversible,
        BoundKind::SurpriseExtremal,
        BoundKind::PositiveEigen,
        BoundKind::Stationary,
        BoundKind::StationaryStart,
        BoundKind::StationaryMonotone,
        BoundKind::Composite,
        BoundKind::CompositeFour,
        BoundKind::MaxProbSum,
        BoundKind::MaxSurprise,
        BoundKind::GeomSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::General => "general",
            BoundKind::SurpriseGeneral => "surprise-general",
            BoundKind::ReversibleLogPi => "reversible-log-pi",
            BoundKind::GraphLogN => "graph-log-n",
            BoundKind::ExtremalReversible => "extremal-reversible",
            BoundKind::SurpriseExtremal => "surprise-extremal",
            BoundKind::PositiveEigen => "positive-eigen",
            BoundKind::Stationary => "stationary",
            BoundKind::StationaryStart => "stationary-start",
            BoundKind::StationaryMonotone => "stationary-monotone",
            BoundKind::Composite => "composite",
            BoundKind::CompositeFour => "composite-four",
            BoundKind::MaxProbSum => "maxprob-sum",
            BoundKind::MaxSurprise => "max-surprise",
            BoundKind::GeomSum => "geom-sum",
        }
    }

    pub fn precondition(self) -> &'static str {
        match self {
            BoundKind::General | BoundKind::SurpriseGeneral => "t > n",
            BoundKind::ReversibleLogPi => "reversible, t > 0",
            BoundKind::GraphLogN => "simple graph walk, n ≥ 2, t > 0",
            BoundKind::ExtremalReversible | BoundKind::SurpriseExtremal => "reversible, t ≥ 4n + 4",
            BoundKind::PositiveEigen => "reversible, eigenvalues ≥ 0, t > n",
            BoundKind::Stationary => "unique π, π(x) > 0, t > 0",
            BoundKind::StationaryStart | BoundKind::StationaryMonotone => "π start, t > 0",
            BoundKind::Composite => "unique π, t > s > 0",
            BoundKind::CompositeFour => "t > 2·t_mix(1/4)·⌈log₂ n⌉",
            BoundKind::MaxProbSum => "reversible, certified p*",
            BoundKind::MaxSurprise => "p* over times ≥ t − 1, t > 0",
            BoundKind::GeomSum => "t ≥ 1",
        }
    }

    /// Kinds whose exact value is `P_x(τ(y) = t)`.
    pub fn is_pointwise(self) -> bool {
        matches!(
            self,
            BoundKind::General
                | BoundKind::ReversibleLogPi
                | BoundKind::GraphLogN
                | BoundKind::ExtremalReversible
                | BoundKind::PositiveEigen
                | BoundKind::Stationary
                | BoundKind::Composite
                | BoundKind::CompositeFour
                | BoundKind::MaxSurprise
        )
    }

    pub fn is_surprise(self) -> bool {
        matches!(self, BoundKind::SurpriseGeneral | BoundKind::SurpriseExtremal)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::BadParams(format!("unknown bound kind {s:?}")))
    }
}

/// Everything a bound may depend on. Unknown facts stay `None`/`false`,
/// which makes the corresponding kinds inapplicable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundCtx {
    pub n: usize,
    pub t: usize,
    pub pi_x: Option<f64>,
    pub s: Option<usize>,
    pub d_x_s: Option<f64>,
    pub t_mix_quarter: Option<usize>,
    pub pstar_sum: Option<f64>,
    pub reversible: bool,
    pub simple_graph: bool,
    pub nonneg_eigen: bool,
    pub certified: bool,
    pub pi_start: bool,
}

impl BoundCtx {
    pub fn new(n: usize, t: usize) -> Self {
        BoundCtx {
            n,
            t,
            ..Default::default()
        }
    }
}

fn log_pi_factor(pi_x: f64) -> f64 {
    1f64.max((1.0 / pi_x).ln())
}

fn na(kind: BoundKind) -> Error {
    Error::NotApplicable(format!("{kind}: requires {}", kind.precondition()))
}

/// `⌈log₂ n⌉`.
pub fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

pub fn bound_value(kind: BoundKind, ctx: &BoundCtx) -> Result<f64> {
    let n = ctx.n as f64;
    let t = ctx.t as f64;
    let ok = match kind {
        BoundKind::General | BoundKind::SurpriseGeneral => ctx.t > ctx.n,
        BoundKind::ReversibleLogPi => ctx.reversible && ctx.t > 0 && ctx.pi_x.is_some_and(|p| p > 0.0),
        BoundKind::GraphLogN => ctx.simple_graph && ctx.n >= 2 && ctx.t > 0,
        BoundKind::ExtremalReversible | BoundKind::SurpriseExtremal => {
            ctx.reversible && ctx.t >= 4 * ctx.n + 4
        }
        BoundKind::PositiveEigen => ctx.reversible && ctx.nonneg_eigen && ctx.t > ctx.n,
        BoundKind::Stationary => ctx.t > 0 && ctx.pi_x.is_some_and(|p| p > 0.0),
        BoundKind::StationaryStart | BoundKind::StationaryMonotone => ctx.pi_start && ctx.t > 0,
        BoundKind::Composite => {
            matches!((ctx.s, ctx.d_x_s), (Some(s), Some(_)) if s > 0 && ctx.t > s)
        }
        BoundKind::CompositeFour => ctx
            .t_mix_quarter
            .is_some_and(|tm| ctx.t > 2 * tm * ceil_log2(ctx.n)),
        BoundKind::MaxProbSum => ctx.reversible && ctx.certified && ctx.pi_x.is_some_and(|p| p > 0.0),
        BoundKind::MaxSurprise => ctx.t > 0 && ctx.pstar_sum.is_some(),
        BoundKind::GeomSum => ctx.t >= 1,
    };
    if !ok {
        return Err(na(kind));
    }
    Ok(match kind {
        BoundKind::General => n / t,
        BoundKind::SurpriseGeneral => n * n / t,
        BoundKind::ReversibleLogPi => 2.0 * E * log_pi_factor(ctx.pi_x.unwrap_or(1.0)) / t,
        BoundKind::GraphLogN => 4.0 * E * n.ln() / t,
        BoundKind::ExtremalReversible => (2.0 * n).sqrt() / t,
        BoundKind::SurpriseExtremal => n * (2.0 * n).sqrt() / t,
        BoundKind::PositiveEigen => 0.5 * (n / (t * (t - n))).sqrt(),
        BoundKind::Stationary => 1.0 / (t * ctx.pi_x.unwrap_or(1.0)),
        BoundKind::StationaryStart => 1.0 / t,
        BoundKind::StationaryMonotone => 0.0,
        BoundKind::Composite => {
            let u = t - ctx.s.unwrap_or(0) as f64;
            ctx.d_x_s.unwrap_or(1.0) * (n / u) + 1.0 / u
        }
        BoundKind::CompositeFour => 4.0 / t,
        BoundKind::MaxProbSum => 2.0 * E * log_pi_factor(ctx.pi_x.unwrap_or(1.0)),
        BoundKind::MaxSurprise => ctx.pstar_sum.unwrap_or(0.0) / t,
        BoundKind::GeomSum => 0.5 * (n / (t * (t + n))).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_examples() {
        let v = bound_value(BoundKind::General, &BoundCtx::new(10, 100)).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
        let ctx = BoundCtx {
            reversible: true,
            ..BoundCtx::new(10, 44)
        };
        let v = bound_value(BoundKind::ExtremalReversible, &ctx).unwrap();
        assert!((v - 20f64.sqrt() / 44.0).abs() < 1e-15);
        assert!((v - 0.101_64).abs() < 1e-5);
        let ctx = BoundCtx {
            simple_graph: true,
            ..BoundCtx::new(2, 1)
        };
        let v = bound_value(BoundKind::GraphLogN, &ctx).unwrap();
        assert!((v - 7.536).abs() < 1e-3);
    }

    #[test]
    fn not_applicable_is_explicit() {
        assert!(matches!(
            bound_value(BoundKind::General, &BoundCtx::new(10, 10)),
            Err(Error::NotApplicable(_))
        ));
        assert!(bound_value(BoundKind::ExtremalReversible, &BoundCtx::new(10, 44)).is_err());
        let rev = BoundCtx {
            reversible: true,
            ..BoundCtx::new(10, 43)
        };
        assert!(bound_value(BoundKind::ExtremalReversible, &rev).is_err());
        assert!(bound_value(BoundKind::Composite, &BoundCtx::new(3, 5)).is_err());
    }

    #[test]
    fn composite_uses_start_distance() {
        let ctx = BoundCtx {
            s: Some(4),
            d_x_s: Some(0.5),
            ..BoundCtx::new(5, 10)
        };
        let v = bound_value(BoundKind::Composite, &ctx).unwrap();
        assert!((v - (0.5 * 5.0 / 6.0 + 1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn log2_ceiling() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(8), 3);
        assert_eq!(ceil_log2(9), 4);
    }

    #[test]
    fn names_round_trip() {
        for k in BoundKind::ALL {
            assert_eq!(k.name().parse::<BoundKind>().unwrap(), k);
        }
    }
}
