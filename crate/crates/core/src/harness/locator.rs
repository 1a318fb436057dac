//! Locating a time with large surprise probability from a hitting window.
//!
//! If every path from `x` into `U` passes through `y`, then each state of
//! `U ∖ {y}` first visited within `N` steps of `τ(y)` is a new state at
//! some time in `[t, t + 2N)` whenever `t ≤ τ(y) < t + N`. Averaging over
//! the `2N` times gives some `s` with
//!
//! `P_x(S_s) ≥ P_x(t ≤ τ(y) < t + N) · E_y Z_N / (2N)`,
//!
//! where `Z_N` counts the states of `U ∖ {y}` visited at times `1..=N`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::hitting::{hitting_pmf, surprise_pmf, MomentEstimate, StepSampler};
use crate::rng;

/// z-score of the one-sided lower bound used on Monte Carlo estimates.
pub const LOCATOR_Z: f64 = 2.576;

/// Tail mass below which the hitting pmf is considered saturated when the
/// window start is chosen automatically.
const WINDOW_TAIL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LocatorOptions {
    /// Window start; chosen to maximize the window mass when `None`.
    pub t: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Largest horizon tried when `t` is chosen automatically.
    pub max_horizon: usize,
}

impl Default for LocatorOptions {
    fn default() -> Self {
        LocatorOptions {
            t: None,
            samples: 2000,
            seed: 0,
            max_horizon: 1 << 24,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocatorResult {
    pub x: usize,
    pub y: usize,
    pub n_window: usize,
    pub t: usize,
    /// Located time in `[t, t + 2N)` maximizing `P_x(S_s)`; ties go to the
    /// smallest `s`.
    pub s: usize,
    /// Exact `P_x(S_s)`.
    pub lhs: f64,
    pub rhs: f64,
    /// `P_x(t ≤ τ(y) < t + N)`.
    pub window_mass: f64,
    /// `E_y Z_N`, exact or the sample mean.
    pub ez: f64,
    /// Value of `E_y Z_N` used in `rhs`: exact, or the lower confidence
    /// bound clamped at zero.
    pub ez_used: f64,
    pub ez_exact: bool,
    pub ez_estimate: Option<MomentEstimate>,
    pub pass: bool,
}

impl LocatorResult {
    pub const CSV_HEADER: &'static str = "x,y,N,t,s,lhs,rhs,window_mass,ez,ez_used,ez_exact,pass";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.x,
            self.y,
            self.n_window,
            self.t,
            self.s,
            self.lhs,
            self.rhs,
            self.window_mass,
            self.ez,
            self.ez_used,
            self.ez_exact,
            self.pass
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("locator result serializes");
        s.push('\n');
        s
    }
}

/// Errors with `PreconditionFailed` when some state of `U` can be reached
/// from `x` while avoiding `y`.
pub fn check_separation(chain: &ChainSpec, x: usize, y: usize, u: &[usize]) -> Result<()> {
    let n = chain.n();
    let mut in_u = vec![false; n];
    for &v in u {
        if v >= n {
            return Err(Error::BadIndex { row: 0, index: v, n });
        }
        in_u[v] = true;
    }
    if x == y {
        return Ok(());
    }
    let mut seen = vec![false; n];
    seen[x] = true;
    seen[y] = true;
    let mut queue = VecDeque::from([x]);
    while let Some(v) = queue.pop_front() {
        if in_u[v] {
            return Err(Error::PreconditionFailed(format!(
                "state {} in U is reachable from {} without visiting {}",
                chain.label(v),
                chain.label(x),
                chain.label(y)
            )));
        }
        for &(w, p) in chain.row(v) {
            if p > 0.0 && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok(())
}

/// The path from `y` when every state it meets within `steps` steps has a
/// single successor.
fn deterministic_path(chain: &ChainSpec, y: usize, steps: usize) -> Option<Vec<usize>> {
    let mut path = Vec::with_capacity(steps + 1);
    let mut v = y;
    path.push(v);
    for _ in 0..steps {
        let row: Vec<_> = chain.row(v).iter().filter(|e| e.1 > 0.0).collect();
        if row.len() != 1 {
            return None;
        }
        v = row[0].0;
        path.push(v);
    }
    Some(path)
}

fn count_new(path: impl Iterator<Item = usize>, in_u: &[bool], y: usize, seen: &mut [bool]) -> usize {
    seen.fill(false);
    let mut count = 0;
    for v in path {
        if in_u[v] && v != y && !seen[v] {
            seen[v] = true;
            count += 1;
        }
    }
    count
}

/// `E_y Z_N`: exact when the walk from `y` is deterministic for `N` steps,
/// otherwise a Monte Carlo estimate.
pub fn expected_new_in_u(
    chain: &ChainSpec,
    y: usize,
    u: &[usize],
    n_window: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, Option<MomentEstimate>)> {
    let n = chain.n();
    let mut in_u = vec![false; n];
    for &v in u {
        in_u[v] = true;
    }
    if let Some(path) = deterministic_path(chain, y, n_window) {
        let mut seen = vec![false; n];
        let z = count_new(path.into_iter().skip(1), &in_u, y, &mut seen);
        return Ok((z as f64, None));
    }
    if samples < 2 {
        return Err(Error::BadParams("need at least 2 samples".into()));
    }
    let sampler = StepSampler::new(chain);
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let mut seen = vec![false; n];
            let mut v = y;
            let steps = (0..n_window).map(|_| {
                v = sampler.step(v, &mut rng);
                v
            });
            count_new(steps, &in_u, y, &mut seen) as f64
        })
        .collect();
    let est = MomentEstimate::from_samples(&values, seed);
    Ok((est.mean, Some(est)))
}

/// Window start maximizing `P_x(t ≤ τ(y) < t + N)`, with the pmf extended
/// until its tail is below `1e-6` or `max_horizon` is reached.
pub fn best_window(chain: &ChainSpec, x: usize, y: usize, n_window: usize, max_horizon: usize) -> Result<(usize, f64)> {
    let mut horizon = (4 * n_window).max(64);
    let pmf = loop {
        let pmf = hitting_pmf(chain, x, y, horizon);
        if pmf.tail <= WINDOW_TAIL || horizon >= max_horizon {
            break pmf;
        }
        horizon = (horizon * 2).min(max_horizon);
    };
    let mut best = (0, 0.0);
    let mut mass: f64 = pmf.pmf[..n_window.min(pmf.pmf.len())].iter().sum();
    for t in 0..pmf.pmf.len() {
        if mass > best.1 {
            best = (t, mass);
        }
        mass -= pmf.pmf[t];
        if t + n_window < pmf.pmf.len() {
            mass += pmf.pmf[t + n_window];
        }
    }
    if best.1 <= 0.0 {
        return Err(Error::Unreachable { from: x, to: y });
    }
    Ok(best)
}

pub fn surprise_lower_locator(
    chain: &ChainSpec,
    x: usize,
    y: usize,
    u: &[usize],
    n_window: usize,
    opts: &LocatorOptions,
) -> Result<LocatorResult> {
    if n_window == 0 {
        return Err(Error::BadParams("N must be positive".into()));
    }
    check_separation(chain, x, y, u)?;
    let t = match opts.t {
        Some(t) => t,
        None => best_window(chain, x, y, n_window, opts.max_horizon)?.0,
    };
    let end = t + 2 * n_window;
    let pmf = hitting_pmf(chain, x, y, end);
    let window_mass = pmf.window(t, t + n_window);
    let (ez, estimate) = expected_new_in_u(chain, y, u, n_window, opts.samples, opts.seed)?;
    let ez_used = match &estimate {
        None => ez,
        Some(e) => (e.mean - e.half_width(LOCATOR_Z)).max(0.0),
    };
    let rhs = window_mass * ez_used / (2 * n_window) as f64;
    let sp = surprise_pmf(chain, x, end);
    let (mut s, mut lhs) = (t, sp.s[t]);
    for k in t + 1..end {
        if sp.s[k] > lhs {
            s = k;
            lhs = sp.s[k];
        }
    }
    Ok(LocatorResult {
        x,
        y,
        n_window,
        t,
        s,
        lhs,
        rhs,
        window_mass,
        ez,
        ez_used,
        ez_exact: estimate.is_none(),
        ez_estimate: estimate,
        pass: lhs + 1e-12 >= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{pure_birth_tail, pure_birth_tail_time};

    #[test]
    fn pure_birth_tail_is_exact_and_passes() {
        let n = 16;
        let inst = pure_birth_tail(n, pure_birth_tail_time(n)).unwrap();
        let u = &inst.sets["U"];
        let r = surprise_lower_locator(&inst.chain, 0, n - 1, u, n, &LocatorOptions::default()).unwrap();
        assert!(r.ez_exact);
        assert_eq!(r.ez, n as f64);
        assert!(r.rhs > 0.0);
        assert!(r.pass, "{r:?}");
        assert!(r.s >= r.t && r.s < r.t + 2 * n);
    }

    #[test]
    fn bypass_fails_precondition() {
        // 0 → 1 → 2 and 0 → 2 directly; U = {2}, y = 1.
        let c = ChainSpec::from_rows(vec![
            vec![(1, 0.5), (2, 0.5)],
            vec![(2, 1.0)],
            vec![(2, 1.0)],
        ])
        .unwrap();
        let err = surprise_lower_locator(&c, 0, 1, &[2], 2, &LocatorOptions::default()).unwrap_err();
        assert!(matches!(err, Error::PreconditionFailed(_)));
    }

    #[test]
    fn empty_window_is_vacuous() {
        let inst = pure_birth_tail(4, 8).unwrap();
        let opts = LocatorOptions {
            t: Some(0),
            ..Default::default()
        };
        // τ(y) ≥ 3 so a window [0, 1) carries no mass.
        let r = surprise_lower_locator(&inst.chain, 0, 3, &inst.sets["U"], 1, &opts).unwrap();
        assert_eq!(r.window_mass, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert!(r.pass);
    }
}
