//! Exact hitting-time and surprise distributions, path sampling, loop
//! erasure and Monte Carlo hitting moments.
//!
//! Convention: `τ(y) = min{t ≥ 0 : X_t = y}`, so a chain started at `y` has
//! `τ(y) = 0`. The surprise probability at time `t ≥ 1` is
//! `P_x(S_t) = Σ_y P_x(τ(y) = t)` since the events `{τ(y) = t}` are disjoint.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{point_mass, stationary, ChainSpec};
use crate::error::{Error, Result};
use crate::rng;

/// Default step cap for Monte Carlo paths.
pub const DEFAULT_CAP: u64 = 100_000_000;

/// `P_x(τ(y) = t)` for `t = 0..=horizon` plus the tail `P_x(τ(y) > horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingPmf {
    pub x: usize,
    pub y: usize,
    pub horizon: usize,
    pub pmf: Vec<f64>,
    pub tail: f64,
}

impl HittingPmf {
    pub fn at(&self, t: usize) -> f64 {
        self.pmf.get(t).copied().unwrap_or(0.0)
    }

    /// `P_x(from ≤ τ(y) < to)` restricted to the horizon.
    pub fn window(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.horizon + 1);
        if from >= to {
            return 0.0;
        }
        self.pmf[from..to].iter().sum()
    }

    /// CSV with columns `t,p,tail_flag`, one row per `t = 0..=horizon`.
    /// `tail_flag` is 1 on the last row when mass remains beyond the horizon.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p,tail_flag\n");
        for (t, p) in self.pmf.iter().enumerate() {
            let flag = u8::from(t == self.horizon && self.tail > 0.0);
            let _ = writeln!(out, "{t},{p},{flag}");
        }
        out
    }
}

/// Forward dynamic program for a single start.
pub fn hitting_pmf(chain: &ChainSpec, x: usize, y: usize, horizon: usize) -> HittingPmf {
    let n = chain.n();
    let mut pmf = vec![0.0; horizon + 1];
    if x == y {
        pmf[0] = 1.0;
        return HittingPmf {
            x,
            y,
            horizon,
            pmf,
            tail: 0.0,
        };
    }
    let mut cur = point_mass(n, x);
    let mut next = vec![0.0; n];
    for p in pmf.iter_mut().skip(1) {
        chain.step_into(&cur, &mut next);
        *p = next[y];
        next[y] = 0.0;
        std::mem::swap(&mut cur, &mut next);
    }
    let tail = cur.iter().sum::<f64>();
    HittingPmf {
        x,
        y,
        horizon,
        pmf,
        tail,
    }
}

/// `P_x(τ(y) = t)` for every start `x` at once, by the backward recursion
/// `f_t(x) = Σ_z p(x, z) f_{t−1}(z)` for `x ≠ y`.
pub fn hitting_pmfs_to(chain: &ChainSpec, y: usize, horizon: usize) -> Vec<HittingPmf> {
    let n = chain.n();
    let mut pmfs = vec![vec![0.0; horizon + 1]; n];
    pmfs[y][0] = 1.0;
    // f = P_x(τ(y) = t - 1); survive = P_x(τ(y) > t).
    let mut f = point_mass(n, y);
    let mut next = vec![0.0; n];
    let mut survive = vec![1.0; n];
    survive[y] = 0.0;
    let mut next_survive = vec![0.0; n];
    for t in 1..=horizon {
        chain.apply_into(&f, &mut next);
        chain.apply_into(&survive, &mut next_survive);
        next[y] = 0.0;
        next_survive[y] = 0.0;
        for x in 0..n {
            pmfs[x][t] = next[x];
        }
        std::mem::swap(&mut f, &mut next);
        std::mem::swap(&mut survive, &mut next_survive);
    }
    pmfs.into_iter()
        .enumerate()
        .map(|(x, pmf)| HittingPmf {
            x,
            y,
            horizon,
            pmf,
            tail: survive[x],
        })
        .collect()
}

/// `P_x(S_t)` for `t = 0..=horizon`; `s[0] = 1` under the `τ(x) = 0`
/// convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisePmf {
    pub x: usize,
    pub horizon: usize,
    pub s: Vec<f64>,
}

impl SurprisePmf {
    pub fn at(&self, t: usize) -> f64 {
        self.s.get(t).copied().unwrap_or(0.0)
    }
}

pub fn surprise_pmf(chain: &ChainSpec, x: usize, horizon: usize) -> SurprisePmf {
    let mut s = vec![0.0; horizon + 1];
    for y in 0..chain.n() {
        let h = hitting_pmf(chain, x, y, horizon);
        for (acc, p) in s.iter_mut().zip(&h.pmf) {
            *acc += p;
        }
    }
    SurprisePmf { x, horizon, s }
}

/// Surprise distributions for every start, from the per-target backward
/// recursions.
pub fn surprise_pmfs(chain: &ChainSpec, horizon: usize) -> Vec<SurprisePmf> {
    let n = chain.n();
    let mut s = vec![vec![0.0; horizon + 1]; n];
    for y in 0..n {
        for h in hitting_pmfs_to(chain, y, horizon) {
            for (acc, p) in s[h.x].iter_mut().zip(&h.pmf) {
                *acc += p;
            }
        }
    }
    s.into_iter()
        .enumerate()
        .map(|(x, s)| SurprisePmf { x, horizon, s })
        .collect()
}

/// `q[t] = P_π(τ(y) = t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryHitting {
    pub y: usize,
    pub horizon: usize,
    pub q: Vec<f64>,
    pub tail: f64,
}

pub fn stationary_hitting_pmf(chain: &ChainSpec, y: usize, horizon: usize) -> Result<StationaryHitting> {
    let pi = stationary(chain)?;
    Ok(stationary_hitting_from(chain, &pi.pi, y, horizon))
}

pub(crate) fn stationary_hitting_from(chain: &ChainSpec, pi: &[f64], y: usize, horizon: usize) -> StationaryHitting {
    let mut q = vec![0.0; horizon + 1];
    q[0] = pi[y];
    let mut cur = pi.to_vec();
    cur[y] = 0.0;
    let mut next = vec![0.0; chain.n()];
    for v in q.iter_mut().skip(1) {
        chain.step_into(&cur, &mut next);
        *v = next[y];
        next[y] = 0.0;
        std::mem::swap(&mut cur, &mut next);
    }
    StationaryHitting {
        y,
        horizon,
        tail: cur.iter().sum(),
        q,
    }
}

/// `E_x τ(y)` by solving `h(z) = 1 + Σ_w p(z, w) h(w)`, `h(y) = 0`, over the
/// states reachable from `x` before `y`.
pub fn expected_hitting(chain: &ChainSpec, x: usize, y: usize) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let n = chain.n();
    // States reachable from x without passing through y.
    let mut reach = vec![false; n];
    let mut stack = vec![x];
    reach[x] = true;
    while let Some(u) = stack.pop() {
        for &(v, _) in chain.row(u) {
            if v != y && !reach[v] {
                reach[v] = true;
                stack.push(v);
            }
        }
    }
    // Every one of them must be able to reach y.
    let mut rev = vec![Vec::new(); n];
    for u in (0..n).filter(|&u| reach[u]) {
        for &(v, _) in chain.row(u) {
            rev[v].push(u);
        }
    }
    let mut hits = vec![false; n];
    let mut stack = vec![y];
    hits[y] = true;
    while let Some(v) = stack.pop() {
        for &u in &rev[v] {
            if !hits[u] {
                hits[u] = true;
                stack.push(u);
            }
        }
    }
    if (0..n).any(|u| reach[u] && !hits[u]) {
        return Err(Error::Unreachable { from: x, to: y });
    }
    let states: Vec<usize> = (0..n).filter(|&u| reach[u]).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &s) in states.iter().enumerate() {
        index[s] = k;
    }
    let m = states.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    for (k, &s) in states.iter().enumerate() {
        for &(v, p) in chain.row(s) {
            if index[v] != usize::MAX {
                a[(k, index[v])] -= p;
            }
        }
    }
    let b = DVector::from_element(m, 1.0);
    let h = a
        .lu()
        .solve(&b)
        .ok_or(Error::Unreachable { from: x, to: y })?;
    Ok(h[index[x]])
}

/// Inverse-CDF step sampler with per-row cumulative tables.
#[derive(Debug, Clone)]
pub struct StepSampler {
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl StepSampler {
    pub fn new(chain: &ChainSpec) -> Self {
        let mut targets = Vec::with_capacity(chain.n());
        let mut cumulative = Vec::with_capacity(chain.n());
        for row in chain.rows() {
            let mut acc = 0.0;
            targets.push(row.iter().map(|&(j, _)| j).collect());
            cumulative.push(
                row.iter()
                    .map(|&(_, p)| {
                        acc += p;
                        acc
                    })
                    .collect(),
            );
        }
        StepSampler {
            targets,
            cumulative,
        }
    }

    #[inline]
    pub fn step(&self, from: usize, rng: &mut rng::Rng) -> usize {
        let targets = &self.targets[from];
        if targets.len() == 1 {
            return targets[0];
        }
        let cum = &self.cumulative[from];
        let u: f64 = rng.gen::<f64>() * cum[cum.len() - 1];
        let k = cum.partition_point(|&c| c <= u);
        targets[k.min(targets.len() - 1)]
    }

    /// Steps until `y` is hit; `None` if `cap` steps elapse first.
    pub fn hitting_time(&self, x: usize, y: usize, cap: u64, rng: &mut rng::Rng) -> Option<u64> {
        let mut cur = x;
        let mut t = 0u64;
        while cur != y {
            if t >= cap {
                return None;
            }
            cur = self.step(cur, rng);
            t += 1;
        }
        Some(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledPath {
    pub states: Vec<usize>,
    /// Set when `cap` steps elapsed before `y` was hit.
    pub truncated: bool,
}

impl SampledPath {
    pub fn into_result(self, cap: u64) -> Result<Vec<usize>> {
        if self.truncated {
            Err(Error::CapExceeded { cap })
        } else {
            Ok(self.states)
        }
    }
}

/// Simulates from `x` until `y` is hit or `cap` steps elapse.
pub fn sample_path(chain: &ChainSpec, x: usize, y: usize, seed: u64, cap: u64) -> SampledPath {
    let sampler = StepSampler::new(chain);
    let mut rng = rng::seeded(seed);
    let mut states = vec![x];
    let mut cur = x;
    while cur != y {
        if states.len() as u64 > cap {
            return SampledPath {
                states,
                truncated: true,
            };
        }
        cur = sampler.step(cur, &mut rng);
        states.push(cur);
    }
    SampledPath {
        states,
        truncated: false,
    }
}

/// Loop erasure of a path: `w_0 = z_0`; with `k_i` the last index of the path
/// lying in `{w_0..w_i}`, `w_{i+1} = z_{k_i + 1}` until `k_i` is the end.
pub fn loop_erase(path: &[usize]) -> Vec<usize> {
    let Some(&first) = path.first() else {
        return Vec::new();
    };
    let end = path.len() - 1;
    let mut last = std::collections::HashMap::with_capacity(path.len());
    for (i, &s) in path.iter().enumerate() {
        last.insert(s, i);
    }
    let mut erased = vec![first];
    // k_{i+1} = max(k_i, last index of w_{i+1}).
    let mut k = last[&first];
    while k < end {
        let w = path[k + 1];
        erased.push(w);
        k = k.max(last[&w]);
    }
    erased
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
    pub ci95_mean: f64,
    pub seed: u64,
}

impl MomentEstimate {
    pub fn from_samples(values: &[f64], seed: u64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MomentEstimate {
            mean,
            variance,
            samples: values.len(),
            ci95_mean: 1.96 * (variance / n).sqrt(),
            seed,
        }
    }

    /// Half-width of a normal-approximation interval at the given z-score.
    pub fn half_width(&self, z: f64) -> f64 {
        z * (self.variance / self.samples as f64).sqrt()
    }
}

/// Independent hitting times of `y` from `x`; sample `i` uses stream `i`.
pub fn sample_hitting_times(
    chain: &ChainSpec,
    x: usize,
    y: usize,
    samples: usize,
    seed: u64,
    cap: u64,
) -> Result<Vec<u64>> {
    let sampler = StepSampler::new(chain);
    let times: Vec<Option<u64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| sampler.hitting_time(x, y, cap, &mut rng::stream(seed, i)))
        .collect();
    times
        .into_iter()
        .map(|t| t.ok_or(Error::CapExceeded { cap }))
        .collect()
}

pub fn mc_hitting_moments(
    chain: &ChainSpec,
    x: usize,
    y: usize,
    samples: usize,
    seed: u64,
    cap: u64,
) -> Result<MomentEstimate> {
    if samples < 2 {
        return Err(Error::BadParams("need at least 2 samples".into()));
    }
    let times = sample_hitting_times(chain, x, y, samples, seed, cap)?;
    let values: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    Ok(MomentEstimate::from_samples(&values, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> ChainSpec {
        ChainSpec::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap()
    }

    fn leaky(p: f64) -> ChainSpec {
        ChainSpec::from_rows(vec![vec![(0, 1.0 - p), (1, p)], vec![(1, 1.0)]]).unwrap()
    }

    #[test]
    fn start_at_target() {
        let h = hitting_pmf(&leaky(0.3), 1, 1, 5);
        assert_eq!(h.pmf, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.tail, 0.0);
    }

    #[test]
    fn geometric_closed_form() {
        let h = hitting_pmf(&leaky(0.3), 0, 1, 10);
        assert!((h.pmf[3] - 0.7 * 0.7 * 0.3).abs() < 1e-15);
        let total: f64 = h.pmf.iter().sum::<f64>() + h.tail;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_forward() {
        let c = ChainSpec::from_dense(&[
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.1, 0.3],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        for y in 0..3 {
            let all = hitting_pmfs_to(&c, y, 40);
            for x in 0..3 {
                let fwd = hitting_pmf(&c, x, y, 40);
                for t in 0..=40 {
                    assert!((fwd.pmf[t] - all[x].pmf[t]).abs() < 1e-15);
                }
                assert!((fwd.tail - all[x].tail).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn surprise_examples() {
        let c = ChainSpec::from_dense(&[vec![0.4, 0.6], vec![0.5, 0.5]]).unwrap();
        let s = surprise_pmf(&c, 0, 5);
        assert!((s.s[1] - 0.6).abs() < 1e-15);
        let one = ChainSpec::from_rows(vec![vec![(0, 1.0)]]).unwrap();
        let s = surprise_pmf(&one, 0, 5);
        assert!(s.s[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stationary_start_two_cycle() {
        let q = stationary_hitting_pmf(&two_cycle(), 1, 4).unwrap();
        assert!((q.q[0] - 0.5).abs() < 1e-15);
        assert!((q.q[1] - 0.5).abs() < 1e-15);
        assert_eq!(q.q[2], 0.0);
    }

    #[test]
    fn expected_hitting_examples() {
        assert_eq!(expected_hitting(&leaky(0.25), 1, 1).unwrap(), 0.0);
        assert!((expected_hitting(&leaky(0.25), 0, 1).unwrap() - 4.0).abs() < 1e-12);
        // The absorbing state 1 is reachable from 0 but never reaches 2.
        let c = ChainSpec::from_rows(vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]]).unwrap();
        assert!(matches!(expected_hitting(&c, 0, 2), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn sample_path_examples() {
        let c = two_cycle();
        for seed in 0..5 {
            assert_eq!(sample_path(&c, 0, 1, seed, 10).states, vec![0, 1]);
        }
        assert_eq!(sample_path(&c, 1, 1, 0, 10).states, vec![1]);
        let stuck = ChainSpec::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)]]).unwrap();
        let p = sample_path(&stuck, 0, 1, 0, 5);
        assert!(p.truncated);
        assert!(matches!(p.into_result(5), Err(Error::CapExceeded { cap: 5 })));
    }

    #[test]
    fn sample_path_is_deterministic() {
        let c = ChainSpec::from_dense(&[vec![0.5, 0.3, 0.2], vec![0.3, 0.3, 0.4], vec![0.1, 0.1, 0.8]]).unwrap();
        assert_eq!(sample_path(&c, 0, 2, 42, 1000), sample_path(&c, 0, 2, 42, 1000));
    }

    #[test]
    fn loop_erase_examples() {
        assert_eq!(loop_erase(&[0, 1, 2]), vec![0, 1, 2]);
        // a b a c
        assert_eq!(loop_erase(&[0, 1, 0, 2]), vec![0, 2]);
        assert_eq!(loop_erase(&[0, 1, 2, 1, 3, 0, 4]), vec![0, 4]);
        assert_eq!(loop_erase(&[0, 1, 2, 3, 1, 4]), vec![0, 1, 4]);
        assert_eq!(loop_erase(&[5]), vec![5]);
    }

    #[test]
    fn mc_moments_examples() {
        let est = mc_hitting_moments(&two_cycle(), 0, 1, 10, 7, 100).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.variance, 0.0);
        let est = mc_hitting_moments(&leaky(0.5), 0, 1, 4000, 11, DEFAULT_CAP).unwrap();
        assert!((est.mean - 2.0).abs() <= est.half_width(3.0), "{est:?}");
        assert!(mc_hitting_moments(&leaky(0.5), 0, 1, 1, 11, 10).is_err());
        let stuck = ChainSpec::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)]]).unwrap();
        assert!(matches!(
            mc_hitting_moments(&stuck, 0, 1, 3, 0, 50),
            Err(Error::CapExceeded { cap: 50 })
        ));
    }

    #[test]
    fn csv_shape() {
        let h = hitting_pmf(&leaky(0.5), 0, 1, 100);
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 102);
        assert!(csv.lines().last().unwrap().ends_with(",1"));
    }
}
