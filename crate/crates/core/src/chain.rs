//! Finite Markov chains: validated sparse transition structure, distribution
//! evolution, stationary distributions, reversibility and mixing.
//!
//! A [`ChainSpec`] is immutable once validated. Rows are stored sparse and
//! sorted by target index, so `p(x, y)` lookups are a binary search and one
//! application of the transition matrix costs `O(nnz)`.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on input row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest chain solved by a dense linear system in [`stationary`].
pub const DENSE_LIMIT: usize = 2000;

/// Unvalidated chain, exactly as it appears in the JSON interchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawChain {
    pub n: usize,
    pub states: Vec<String>,
    pub rows: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl RawChain {
    pub fn validate(self) -> Result<ChainSpec> {
        validate(self)
    }
}

/// A validated row-stochastic transition structure over `n` labelled states.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    states: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    metadata: BTreeMap<String, String>,
}

/// Checks every chain invariant and returns the validated chain.
///
/// Rows are sorted by target, repeated targets are merged and zero entries
/// dropped. Nothing is renormalized.
pub fn validate(raw: RawChain) -> Result<ChainSpec> {
    let RawChain {
        n,
        states,
        rows,
        metadata,
    } = raw;
    if n == 0 {
        return Err(Error::Empty);
    }
    if states.len() != n {
        return Err(Error::SizeMismatch {
            declared: n,
            found: states.len(),
            what: "state labels",
        });
    }
    if rows.len() != n {
        return Err(Error::SizeMismatch {
            declared: n,
            found: rows.len(),
            what: "rows",
        });
    }
    let mut seen = HashSet::with_capacity(n);
    for label in &states {
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
    }
    let mut clean = Vec::with_capacity(n);
    for (row_idx, row) in rows.into_iter().enumerate() {
        let mut entries = Vec::with_capacity(row.len());
        let mut sum = 0.0;
        for (col, p) in row {
            if col >= n {
                return Err(Error::BadIndex {
                    row: row_idx,
                    index: col,
                    n,
                });
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::NegativeEntry {
                    row: row_idx,
                    col,
                    value: p,
                });
            }
            sum += p;
            if p > 0.0 {
                entries.push((col, p));
            }
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowSum { row: row_idx, sum });
        }
        entries.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (c, p) in entries {
            match merged.last_mut() {
                Some((last, q)) if *last == c => *q += p,
                _ => merged.push((c, p)),
            }
        }
        clean.push(merged);
    }
    Ok(ChainSpec {
        states,
        rows: clean,
        metadata,
    })
}

impl ChainSpec {
    /// Builds a chain with labels `"0"..."n-1"`.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        validate(RawChain {
            n,
            states: (0..n).map(|i| i.to_string()).collect(),
            rows,
            metadata: BTreeMap::new(),
        })
    }

    /// Builds a chain from a dense row-major matrix.
    pub fn from_dense(matrix: &[Vec<f64>]) -> Result<Self> {
        let rows = matrix
            .iter()
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn label(&self, i: usize) -> &str {
        &self.states[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// Resolves a state given either by label or by numeric index.
    pub fn resolve(&self, state: &str) -> Result<usize> {
        if let Some(i) = self.index_of(state) {
            return Ok(i);
        }
        match state.parse::<usize>() {
            Ok(i) if i < self.n() => Ok(i),
            _ => Err(Error::UnknownState(state.to_string())),
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::SizeMismatch {
                declared: self.n(),
                found: labels.len(),
                what: "state labels",
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        self.states = labels;
        Ok(self)
    }

    /// Transition probability `p(x, y)`.
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        let row = &self.rows[x];
        match row.binary_search_by_key(&y, |&(c, _)| c) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    /// One step of a row vector: returns `dist · P`.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.step_into(dist, &mut out);
        out
    }

    pub(crate) fn step_into(&self, dist: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let mass = dist[i];
            if mass == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += mass * p;
            }
        }
    }

    /// One application to a column vector: returns `P f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(f, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row.iter().map(|&(j, p)| p * f[j]).sum();
        }
    }

    /// The lazy chain `(I + P) / 2`.
    pub fn lazy(&self) -> ChainSpec {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r: Vec<(usize, f64)> = row.iter().map(|&(j, p)| (j, p / 2.0)).collect();
                match r.binary_search_by_key(&i, |&(c, _)| c) {
                    Ok(k) => r[k].1 += 0.5,
                    Err(k) => r.insert(k, (i, 0.5)),
                }
                r
            })
            .collect();
        let mut metadata = self.metadata.clone();
        metadata.insert("lazy".into(), "true".into());
        ChainSpec {
            states: self.states.clone(),
            rows,
            metadata,
        }
    }

    /// The two-step chain `P^2`.
    pub fn squared(&self) -> ChainSpec {
        let n = self.n();
        let rows = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let two = self.step(&self.step(&e));
                two.into_iter()
                    .enumerate()
                    .filter(|&(_, p)| p > 0.0)
                    .collect()
            })
            .collect();
        ChainSpec {
            states: self.states.clone(),
            rows,
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        m
    }

    /// Restricts the chain to a closed set of states, relabelled `0..k` in the
    /// given order. Fails if mass can leave the set.
    pub fn restrict(&self, keep: &[usize]) -> Result<ChainSpec> {
        let mut index = vec![usize::MAX; self.n()];
        for (k, &s) in keep.iter().enumerate() {
            index[s] = k;
        }
        let mut rows = Vec::with_capacity(keep.len());
        for &s in keep {
            let mut r = Vec::with_capacity(self.rows[s].len());
            for &(j, p) in &self.rows[s] {
                if index[j] == usize::MAX {
                    return Err(Error::NotIrreducible(s));
                }
                r.push((index[j], p));
            }
            rows.push(r);
        }
        validate(RawChain {
            n: keep.len(),
            states: keep.iter().map(|&s| self.states[s].clone()).collect(),
            rows,
            metadata: self.metadata.clone(),
        })
    }

    /// States reachable from `x` (including `x`).
    pub fn reachable_from(&self, x: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.rows[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn reaching(&self, x: usize) -> Vec<bool> {
        let n = self.n();
        let mut rev = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                rev[j].push(i);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &rev[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// The communicating class of `x`, in increasing index order.
    pub fn communicating_class(&self, x: usize) -> Vec<usize> {
        let fwd = self.reachable_from(x);
        let back = self.reaching(x);
        (0..self.n()).filter(|&s| fwd[s] && back[s]).collect()
    }

    /// Whether no mass leaves the given class.
    pub fn is_closed(&self, class: &[usize]) -> bool {
        let mut member = vec![false; self.n()];
        class.iter().for_each(|&s| member[s] = true);
        class
            .iter()
            .all(|&s| self.rows[s].iter().all(|&(j, _)| member[j]))
    }

    pub fn is_irreducible(&self) -> bool {
        self.communicating_class(0).len() == self.n()
    }

    /// Period of the communicating class of `x`.
    pub fn period(&self, x: usize) -> usize {
        let class = self.communicating_class(x);
        let mut member = vec![false; self.n()];
        class.iter().for_each(|&s| member[s] = true);
        let mut dist = vec![usize::MAX; self.n()];
        dist[x] = 0;
        let mut queue = VecDeque::from([x]);
        let mut g = 0usize;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.rows[u] {
                if !member[v] {
                    continue;
                }
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                } else {
                    g = gcd(g, (dist[u] + 1).abs_diff(dist[v]));
                }
            }
        }
        g
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawChain = serde_json::from_str(s)?;
        validate(raw)
    }

    /// Serializes to the chain interchange format. Probabilities are written
    /// with 17 significant digits.
    pub fn to_json_string(&self) -> String {
        let mut out = String::new();
        self.write_json_fields(&mut out);
        out.push('}');
        out
    }

    /// Writes `{"n":..,"states":..,"rows":..,"metadata":..` without the
    /// closing brace so callers can append fields.
    pub(crate) fn write_json_fields(&self, out: &mut String) {
        let _ = write!(out, "{{\"n\":{},\"states\":[", self.n());
        for (i, s) in self.states.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&serde_json::to_string(s).expect("string serializes"));
        }
        out.push_str("],\"rows\":[");
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push('[');
            for (k, &(j, p)) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "[{j},{p:.16e}]");
            }
            out.push(']');
        }
        out.push_str("],\"metadata\":");
        out.push_str(&serde_json::to_string(&self.metadata).expect("map serializes"));
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Checks that `dist` is a probability vector of the right length.
pub fn check_distribution(dist: &[f64], n: usize) -> Result<()> {
    if dist.len() != n {
        return Err(Error::BadDistribution(format!(
            "length {} but chain has {n} states",
            dist.len()
        )));
    }
    if let Some(v) = dist.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::BadDistribution(format!("entry {v}")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::BadDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// Returns `dist · P^t`.
pub fn evolve(chain: &ChainSpec, dist: &[f64], t: usize) -> Result<Vec<f64>> {
    check_distribution(dist, chain.n())?;
    let mut cur = dist.to_vec();
    let mut next = vec![0.0; chain.n()];
    for _ in 0..t {
        chain.step_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Point mass at `x`.
pub fn point_mass(n: usize, x: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[x] = 1.0;
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
    /// Max-norm of `πP − π`.
    pub residual: f64,
}

impl StationaryDist {
    pub fn get(&self, x: usize) -> f64 {
        self.pi[x]
    }
}

/// The unique stationary distribution.
///
/// Chains with at most [`DENSE_LIMIT`] states are solved directly; larger
/// chains use power iteration on the lazy chain from two different starts.
pub fn stationary(chain: &ChainSpec) -> Result<StationaryDist> {
    let pi = if chain.n() <= DENSE_LIMIT {
        stationary_dense(chain)?
    } else {
        stationary_power(chain)?
    };
    let image = chain.step(&pi);
    let residual = image
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(StationaryDist { pi, residual })
}

fn stationary_dense(chain: &ChainSpec) -> Result<Vec<f64>> {
    let n = chain.n();
    // Rows of P^T - I sum to zero, so one equation is redundant and can be
    // replaced by the normalization.
    let mut a = chain.to_dense().transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.full_piv_lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 1e-12 * hi.max(1.0)) {
        return Err(Error::NotUnique);
    }
    let x = lu.solve(&b).ok_or(Error::NotUnique)?;
    normalize_nonneg(x.iter().copied().collect())
}

fn normalize_nonneg(mut v: Vec<f64>) -> Result<Vec<f64>> {
    for p in v.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-9 {
                return Err(Error::NotUnique);
            }
            *p = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if !(s > 0.0) {
        return Err(Error::NotUnique);
    }
    v.iter_mut().for_each(|p| *p /= s);
    Ok(v)
}

fn stationary_power(chain: &ChainSpec) -> Result<Vec<f64>> {
    let n = chain.n();
    let lazy = chain.lazy();
    let run = |start: Vec<f64>| -> Option<Vec<f64>> {
        let mut cur = start;
        let mut next = vec![0.0; n];
        for _ in 0..10_000_000 / n.max(1) + 10_000 {
            lazy.step_into(&cur, &mut next);
            let diff = cur
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut cur, &mut next);
            if diff <= 1e-14 {
                return Some(cur);
            }
        }
        None
    };
    let uniform = vec![1.0 / n as f64; n];
    let mut skewed: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
    let total: f64 = skewed.iter().sum();
    skewed.iter_mut().for_each(|v| *v /= total);
    let a = run(uniform).ok_or(Error::NotUnique)?;
    let b = run(skewed).ok_or(Error::NotUnique)?;
    let gap = a
        .iter()
        .zip(&b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    if gap > 1e-8 {
        return Err(Error::NotUnique);
    }
    normalize_nonneg(a)
}

/// Largest detailed-balance violation `|π(x)p(x,y) − π(y)p(y,x)|`.
pub fn detailed_balance_defect(chain: &ChainSpec, pi: &StationaryDist) -> f64 {
    let mut worst = 0.0f64;
    for (x, row) in chain.rows().iter().enumerate() {
        for &(y, p) in row {
            let d = (pi.pi[x] * p - pi.pi[y] * chain.prob(y, x)).abs();
            worst = worst.max(d);
        }
    }
    worst
}

pub fn is_reversible(chain: &ChainSpec, pi: &StationaryDist, tol: f64) -> bool {
    detailed_balance_defect(chain, pi) <= tol
}

/// Total-variation distance between two distributions.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>()
}

/// `d_x(t)` for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub x: usize,
    pub horizon: usize,
    pub d: Vec<f64>,
}

impl MixingProfile {
    pub fn compute(chain: &ChainSpec, pi: &StationaryDist, x: usize, horizon: usize) -> Self {
        let n = chain.n();
        let mut cur = point_mass(n, x);
        let mut next = vec![0.0; n];
        let mut d = Vec::with_capacity(horizon + 1);
        d.push(tv_distance(&cur, &pi.pi).min(1.0));
        for _ in 0..horizon {
            chain.step_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
            d.push(tv_distance(&cur, &pi.pi).min(1.0));
        }
        MixingProfile { x, horizon, d }
    }

    /// First `t ≤ horizon` with `d_x(t) ≤ eps`, for this start only.
    pub fn mixing_time(&self, eps: f64) -> Result<usize> {
        self.d
            .iter()
            .position(|&v| v <= eps)
            .ok_or_else(|| Error::HorizonTooSmall {
                horizon: self.horizon,
                detail: format!("d_{}({}) = {} > {eps}", self.x, self.horizon, self.d[self.horizon]),
            })
    }
}

pub fn mixing_profile(chain: &ChainSpec, x: usize, horizon: usize) -> Result<MixingProfile> {
    let pi = stationary(chain)?;
    Ok(MixingProfile::compute(chain, &pi, x, horizon))
}

/// `t_mix(eps) = min{t : max_x d_x(t) ≤ eps}` searched up to `horizon`.
pub fn mixing_time(chain: &ChainSpec, pi: &StationaryDist, eps: f64, horizon: usize) -> Result<usize> {
    let profiles: Vec<MixingProfile> = (0..chain.n())
        .map(|x| MixingProfile::compute(chain, pi, x, horizon))
        .collect();
    mixing_time_from_profiles(&profiles, eps, horizon)
}

pub fn mixing_time_from_profiles(
    profiles: &[MixingProfile],
    eps: f64,
    horizon: usize,
) -> Result<usize> {
    // d(t) is non-increasing, so the first crossing of the worst start is it.
    (0..=horizon)
        .find(|&t| profiles.iter().all(|p| p.d[t] <= eps))
        .ok_or_else(|| Error::HorizonTooSmall {
            horizon,
            detail: format!("max_x d_x({horizon}) > {eps}"),
        })
}
