//! Chain families: the extremal examples and the randomized test corpora.
//!
//! Every builder returns a [`FamilyInstance`] carrying the chain together
//! with its parameters, designated states and the exact values the harness
//! compares against.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng as _;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::geomsum::neg_binomial_pmf;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    CycleTrap,
    CycleTrapMulti,
    PureBirth,
    PureBirthTail,
    Gm,
    GmTorus,
    CycleGraph,
    PathGraph,
    BinaryTree,
    Torus3,
    RandomChain,
    RandomReversible,
    RandomGraph,
    /// A chain supplied by the caller.
    Custom,
}

impl Family {
    pub const ALL: [Family; 13] = [
        Family::CycleTrap,
        Family::CycleTrapMulti,
        Family::PureBirth,
        Family::PureBirthTail,
        Family::Gm,
        Family::GmTorus,
        Family::CycleGraph,
        Family::PathGraph,
        Family::BinaryTree,
        Family::Torus3,
        Family::RandomChain,
        Family::RandomReversible,
        Family::RandomGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::CycleTrap => "cycle-trap",
            Family::CycleTrapMulti => "cycle-trap-multi",
            Family::PureBirth => "pure-birth",
            Family::PureBirthTail => "pure-birth-tail",
            Family::Gm => "gm",
            Family::GmTorus => "gm-torus",
            Family::CycleGraph => "cycle-graph",
            Family::PathGraph => "path-graph",
            Family::BinaryTree => "binary-tree",
            Family::Torus3 => "torus3",
            Family::RandomChain => "random-chain",
            Family::RandomReversible => "random-reversible",
            Family::RandomGraph => "random-graph",
            Family::Custom => "custom",
        }
    }

    /// Graph random walks, which are reversible with `π ∝ degree`.
    pub fn is_graph_walk(self) -> bool {
        matches!(
            self,
            Family::Gm
                | Family::GmTorus
                | Family::CycleGraph
                | Family::PathGraph
                | Family::BinaryTree
                | Family::Torus3
                | Family::RandomGraph
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::BadParams(format!("unknown family {s:?}")))
    }
}

/// Designated entries that hold numbers rather than states.
const NUMERIC_ROLES: [&str; 2] = ["target_t", "N"];

#[derive(Debug, Clone)]
pub struct FamilyInstance {
    pub chain: ChainSpec,
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    pub designated: BTreeMap<String, usize>,
    pub sets: BTreeMap<String, Vec<usize>>,
    pub closed_forms: BTreeMap<String, f64>,
}

impl FamilyInstance {
    fn new(chain: ChainSpec, family: Family, params: &[(&str, f64)]) -> Self {
        let params: BTreeMap<String, f64> =
            params.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        let mut inst = FamilyInstance {
            chain,
            family,
            params,
            designated: BTreeMap::new(),
            sets: BTreeMap::new(),
            closed_forms: BTreeMap::new(),
        };
        let tag = inst.params_string();
        inst.chain = inst
            .chain
            .clone()
            .with_metadata("family", family.name())
            .with_metadata("params", tag);
        inst
    }

    fn designate(mut self, role: &str, state: usize) -> Self {
        self.designated.insert(role.into(), state);
        self
    }

    fn closed_form(mut self, name: &str, value: f64) -> Self {
        self.closed_forms.insert(name.into(), value);
        self
    }

    fn set(mut self, name: &str, states: Vec<usize>) -> Self {
        self.sets.insert(name.into(), states);
        self
    }

    fn note(mut self, key: &str, value: &str) -> Self {
        self.chain = self.chain.clone().with_metadata(key, value);
        self
    }

    /// Wraps a loaded chain. The `family` and `params` metadata written by
    /// [`FamilyInstance::to_json`] are read back when present.
    pub fn from_chain(chain: ChainSpec) -> Self {
        let meta = chain.metadata();
        let family = meta
            .get("family")
            .and_then(|f| f.parse().ok())
            .unwrap_or(Family::Custom);
        let params = meta
            .get("params")
            .map(|p| {
                p.split(';')
                    .filter_map(|kv| {
                        let (k, v) = kv.split_once('=')?;
                        Some((k.to_string(), v.parse().ok()?))
                    })
                    .collect()
            })
            .unwrap_or_default();
        FamilyInstance {
            chain,
            family,
            params,
            designated: BTreeMap::new(),
            sets: BTreeMap::new(),
            closed_forms: BTreeMap::new(),
        }
    }

    /// Reads chain JSON, plus `designated`, `sets` and `closed_forms` when
    /// the file came from [`FamilyInstance::to_json`].
    pub fn from_json_str(s: &str) -> Result<Self> {
        let chain = ChainSpec::from_json_str(s)?;
        let mut inst = FamilyInstance::from_chain(chain);
        let doc: serde_json::Value = serde_json::from_str(s)?;
        if let Some(v) = doc.get("designated") {
            inst.designated = serde_json::from_value(v.clone())?;
        }
        if let Some(v) = doc.get("sets") {
            inst.sets = serde_json::from_value(v.clone())?;
        }
        if let Some(v) = doc.get("closed_forms") {
            inst.closed_forms = serde_json::from_value(v.clone())?;
        }
        let n = inst.chain.n();
        let states = inst
            .designated
            .iter()
            .filter(|(role, _)| !NUMERIC_ROLES.contains(&role.as_str()))
            .map(|(_, &i)| i)
            .chain(inst.sets.values().flatten().copied());
        for i in states {
            if i >= n {
                return Err(Error::BadIndex { row: 0, index: i, n });
            }
        }
        Ok(inst)
    }

    /// Replaces the chain by `(I + P)/2` and records `lazy=1`.
    pub fn into_lazy(mut self) -> Self {
        self.params.insert("lazy".into(), 1.0);
        let tag = self.params_string();
        self.chain = self.chain.lazy().with_metadata("params", tag);
        self
    }

    pub fn role(&self, name: &str) -> Option<usize> {
        self.designated.get(name).copied()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    /// `k=v` pairs joined by `;`, keys sorted.
    pub fn params_string(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            let _ = write!(out, "{k}={}", fmt_num(*v));
        }
        out
    }

    /// Chain interchange JSON plus `family`, `params`, `designated`,
    /// `closed_forms` and `sets`.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        self.chain.write_json_fields(&mut out);
        let num_map: serde_json::Map<String, serde_json::Value> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), json_num(*v)))
            .collect();
        let closed: serde_json::Map<String, serde_json::Value> = self
            .closed_forms
            .iter()
            .map(|(k, v)| (k.clone(), json_num(*v)))
            .collect();
        let _ = write!(
            out,
            ",\"family\":{},\"params\":{},\"designated\":{},\"closed_forms\":{},\"sets\":{}}}",
            serde_json::Value::from(self.family.name()),
            serde_json::Value::Object(num_map),
            serde_json::to_string(&self.designated).expect("map serializes"),
            serde_json::Value::Object(closed),
            serde_json::to_string(&self.sets).expect("map serializes"),
        );
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn json_num(v: f64) -> serde_json::Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        serde_json::Value::from(v as i64)
    } else {
        serde_json::Value::from(v)
    }
}

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    labels: Vec<String>,
    allow_loops: bool,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            labels: (0..n).map(|i| i.to_string()).collect(),
            allow_loops: false,
        }
    }

    /// Permits `u == v` edges, which the walk then treats as holding.
    pub fn allowing_loops(mut self) -> Self {
        self.allow_loops = true;
        self
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn add_vertex(&mut self, label: impl Into<String>) -> usize {
        self.adj.push(Vec::new());
        self.labels.push(label.into());
        self.adj.len() - 1
    }

    pub fn set_label(&mut self, v: usize, label: impl Into<String>) {
        self.labels[v] = label.into();
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Adds `{u, v}`; a repeated edge is collapsed.
    pub fn add_edge(&mut self, u: usize, v: usize) -> bool {
        if let Err(pos) = self.adj[u].binary_search(&v) {
            self.adj[u].insert(pos, v);
            if u != v {
                let pos = self.adj[v].binary_search(&u).unwrap_err();
                self.adj[v].insert(pos, u);
            }
            true
        } else {
            false
        }
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        let loops = (0..self.n()).filter(|&u| self.adj[u].binary_search(&u).is_ok()).count();
        (self.adj.iter().map(Vec::len).sum::<usize>() - loops) / 2 + loops
    }

    fn bfs_colors(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        if self.n() == 0 {
            return dist;
        }
        dist[0] = Some(0);
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued vertices have a distance");
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_colors().iter().all(Option::is_some)
    }

    pub fn is_bipartite(&self) -> bool {
        let dist = self.bfs_colors();
        (0..self.n()).all(|u| {
            self.adj[u].iter().all(|&v| match (dist[u], dist[v]) {
                (Some(a), Some(b)) => a % 2 != b % 2,
                _ => true,
            })
        })
    }
}

/// Complete binary tree with `2^h − 1` vertices in heap order.
pub fn binary_tree_graph(h: u32) -> Result<Graph> {
    if h < 1 || h > 30 {
        return Err(Error::BadParams(format!("tree height {h}")));
    }
    let n = (1usize << h) - 1;
    let mut g = Graph::new(n);
    for i in 1..n {
        g.add_edge(i, (i - 1) / 2);
    }
    Ok(g)
}

/// `(Z/kZ)^3` with nearest-neighbour edges; for `k = 2` the two edges along
/// each axis coincide and are collapsed.
pub fn torus3(k: usize) -> Result<Graph> {
    if k < 2 {
        return Err(Error::BadParams(format!("torus side {k} < 2")));
    }
    let idx = |a: usize, b: usize, c: usize| (a * k + b) * k + c;
    let mut g = Graph::new(k * k * k);
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                let u = idx(a, b, c);
                g.set_label(u, format!("h{a}_{b}_{c}"));
                g.add_edge(u, idx((a + 1) % k, b, c));
                g.add_edge(u, idx(a, (b + 1) % k, c));
                g.add_edge(u, idx(a, b, (c + 1) % k));
            }
        }
    }
    Ok(g)
}

pub fn cycle_graph(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::BadParams(format!("cycle needs n ≥ 3, got {n}")));
    }
    let mut g = Graph::new(n);
    for i in 0..n {
        g.add_edge(i, (i + 1) % n);
    }
    Ok(g)
}

pub fn path_graph(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::BadParams(format!("path needs n ≥ 2, got {n}")));
    }
    let mut g = Graph::new(n);
    for i in 1..n {
        g.add_edge(i - 1, i);
    }
    Ok(g)
}

/// Simple random walk: `p(u, v) = 1/deg(u)` on edges.
pub fn graph_walk_chain(g: &Graph) -> Result<ChainSpec> {
    if g.n() == 0 {
        return Err(Error::Empty);
    }
    if !g.allow_loops {
        if let Some(u) = (0..g.n()).find(|&u| g.adj[u].binary_search(&u).is_ok()) {
            return Err(Error::SelfLoop(u));
        }
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let rows = (0..g.n())
        .map(|u| {
            let d = g.degree(u) as f64;
            g.adj[u].iter().map(|&v| (v, 1.0 / d)).collect()
        })
        .collect();
    ChainSpec::from_rows(rows)?.with_labels(g.labels.clone())
}

fn graph_instance(g: &Graph, family: Family, params: &[(&str, f64)]) -> Result<FamilyInstance> {
    let chain = graph_walk_chain(g)?;
    Ok(FamilyInstance::new(chain, family, params)
        .closed_form("edges", g.edge_count() as f64)
        .closed_form("max_degree", g.max_degree() as f64))
}

pub fn cycle_graph_instance(n: usize) -> Result<FamilyInstance> {
    graph_instance(&cycle_graph(n)?, Family::CycleGraph, &[("n", n as f64)])
}

pub fn path_graph_instance(n: usize) -> Result<FamilyInstance> {
    let inst = graph_instance(&path_graph(n)?, Family::PathGraph, &[("n", n as f64)])?;
    let len = (n - 1) as f64;
    Ok(inst
        .designate("x", 0)
        .designate("y", n - 1)
        .closed_form("expected_hitting", len * len))
}

pub fn binary_tree_instance(h: u32) -> Result<FamilyInstance> {
    let inst = graph_instance(&binary_tree_graph(h)?, Family::BinaryTree, &[("h", f64::from(h))])?;
    Ok(inst.designate("root", 0))
}

pub fn torus3_instance(k: usize) -> Result<FamilyInstance> {
    let mut inst = graph_instance(&torus3(k)?, Family::Torus3, &[("k", k as f64)])?;
    if k == 2 {
        inst = inst.note("collapsed_edges", "true");
    }
    Ok(inst)
}

/// Splits `t = r·period + k` with `1 ≤ k ≤ period`.
fn split_time(t: usize, period: usize) -> (usize, usize) {
    let r = (t - 1) / period;
    (r, t - r * period)
}

/// Cycle `s_1 → … → s_{n−1}` whose last state exits to `u` with
/// probability `q = 1/r`, where `t = r(n − 1) + k`, `1 ≤ k ≤ n − 1`.
///
/// `u` returns to `s_2`; for `n = 2` there is no `s_2` and `u` returns to
/// `s_1`.
pub fn cycle_trap(n: usize, t: usize) -> Result<FamilyInstance> {
    if n < 2 {
        return Err(Error::BadParams(format!("cycle trap needs n ≥ 2, got {n}")));
    }
    // The construction needs r ≥ 2, which holds exactly when t ≥ 2n − 1.
    let (r, k) = split_time(t.max(1), n - 1);
    if r < 2 {
        return Err(Error::BadHorizon { t, min: 2 * n - 1 });
    }
    let q = 1.0 / r as f64;
    let u = n - 1;
    let last = n - 2;
    let mut rows: Vec<Vec<(usize, f64)>> = (0..last).map(|i| vec![(i + 1, 1.0)]).collect();
    rows.push(vec![(0, 1.0 - q), (u, q)]);
    rows.push(vec![(if n >= 3 { 1 } else { 0 }, 1.0)]);
    let mut labels: Vec<String> = (1..n).map(|i| format!("s{i}")).collect();
    labels.push("u".into());
    let chain = ChainSpec::from_rows(rows)?.with_labels(labels)?;
    let hit = (1.0 - q).powi(r as i32) * q;
    Ok(FamilyInstance::new(chain, Family::CycleTrap, &[("n", n as f64), ("t", t as f64)])
        .designate("x", n - 1 - k)
        .designate("y", u)
        .designate("target_t", t)
        .closed_form("r", r as f64)
        .closed_form("k", k as f64)
        .closed_form("q", q)
        .closed_form("hit_prob", hit)
        .closed_form("claim_bound", n as f64 / (8.0 * t as f64)))
}

/// Cycle `s_1 → … → s_n` whose last state exits to each of `u_1..u_n`
/// with probability `q = 1/r`, where `t = r·n + k`, `1 ≤ k ≤ n`.
pub fn cycle_trap_multi(n: usize, t: usize) -> Result<FamilyInstance> {
    if n < 2 {
        return Err(Error::BadParams(format!("needs n ≥ 2, got {n}")));
    }
    if t < 2 * n {
        return Err(Error::BadHorizon { t, min: 2 * n });
    }
    let (r, k) = split_time(t, n);
    if r < n {
        return Err(Error::BadParams(format!(
            "1 − n·q = 1 − {n}/{r} < 0; need t > n²"
        )));
    }
    let q = 1.0 / r as f64;
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n - 1).map(|i| vec![(i + 1, 1.0)]).collect();
    let mut exit = vec![(0, 1.0 - n as f64 * q)];
    exit.extend((n..2 * n).map(|j| (j, q)));
    rows.push(exit);
    for _ in 0..n {
        rows.push(vec![(1, 1.0)]);
    }
    let labels: Vec<String> = (1..=n)
        .map(|i| format!("s{i}"))
        .chain((1..=n).map(|i| format!("u{i}")))
        .collect();
    let chain = ChainSpec::from_rows(rows)?.with_labels(labels)?;
    let nf = n as f64;
    Ok(FamilyInstance::new(chain, Family::CycleTrapMulti, &[("n", nf), ("t", t as f64)])
        .designate("x", n - k)
        .designate("target_t", t)
        .set("U", (n..2 * n).collect())
        .closed_form("r", r as f64)
        .closed_form("k", k as f64)
        .closed_form("q", q)
        .closed_form("claim_bound", nf * nf / (56.0 * t as f64)))
}

/// Horizon used for the multi-exit trap checks: `t = n² + 2n`, the smallest
/// multiple-plus-remainder with `r = n + 1` and `k = n`.
pub fn cycle_trap_multi_time(n: usize) -> usize {
    n * n + 2 * n
}

fn birth_rows(n: usize, p: f64) -> Vec<Vec<(usize, f64)>> {
    (0..n - 1).map(|i| vec![(i, 1.0 - p), (i + 1, p)]).collect()
}

/// Pure-birth chain on `1..n` with hold `1 − p`, advance `p = n/t`.
pub fn pure_birth(n: usize, t: usize) -> Result<FamilyInstance> {
    if n < 2 || t < n {
        return Err(Error::BadParams(format!("pure birth needs n ≥ 2, t ≥ n (n={n}, t={t})")));
    }
    let p = n as f64 / t as f64;
    let mut rows = birth_rows(n, p);
    rows.push(vec![(n - 1, 1.0)]);
    let labels = (1..=n).map(|i| i.to_string()).collect();
    let chain = ChainSpec::from_rows(rows)?.with_labels(labels)?;
    let steps = (n - 1) as f64;
    Ok(FamilyInstance::new(chain, Family::PureBirth, &[("n", n as f64), ("t", t as f64)])
        .designate("x", 0)
        .designate("y", n - 1)
        .designate("target_t", t)
        .closed_form("p", p)
        .closed_form("hit_pmf_at_t", neg_binomial_pmf((n - 1) as u64, (t - n + 1) as u64, p))
        .closed_form("expected_hitting", steps / p)
        .closed_form("claim_bound", (n as f64).sqrt() / (3.0 * t as f64)))
}

/// Pure-birth chain on `1..n` followed by a deterministic run
/// `n → n + 1 → … → 2n`, with `2n` absorbing.
pub fn pure_birth_tail(n: usize, t: usize) -> Result<FamilyInstance> {
    if n < 2 || (t as f64) < (n as f64).powf(1.5) {
        return Err(Error::BadParams(format!("needs n ≥ 2, t ≥ n√n (n={n}, t={t})")));
    }
    let p = n as f64 / t as f64;
    let mut rows = birth_rows(n, p);
    rows.extend((n - 1..2 * n - 1).map(|i| vec![(i + 1, 1.0)]));
    rows.push(vec![(2 * n - 1, 1.0)]);
    let labels = (1..=2 * n).map(|i| i.to_string()).collect();
    let chain = ChainSpec::from_rows(rows)?.with_labels(labels)?;
    Ok(FamilyInstance::new(chain, Family::PureBirthTail, &[("n", n as f64), ("t", t as f64)])
        .designate("x", 0)
        .designate("y", n - 1)
        .designate("N", n)
        .set("U", (n - 1..2 * n).collect())
        .closed_form("p", p)
        .closed_form("z_n", n as f64))
}

/// Smallest admissible horizon for [`pure_birth_tail`].
pub fn pure_birth_tail_time(n: usize) -> usize {
    (n as f64).powf(1.5).ceil() as usize
}

/// Path `v_1 … v_{2^m}` with a complete binary tree of height `2m − k`
/// rooted at `w_k = v_{2^k}` for `k = 1..m−1`.
pub fn g_m_graph(m: u32) -> Result<(Graph, Vec<usize>)> {
    if !(2..=8).contains(&m) {
        return Err(Error::BadParams(format!("m = {m} outside 2..=8")));
    }
    let len = 1usize << m;
    let mut g = path_graph(len)?;
    for i in 0..len {
        g.set_label(i, format!("v{}", i + 1));
    }
    let w: Vec<usize> = (0..=m).map(|k| (1usize << k) - 1).collect();
    for k in 1..m {
        let height = 2 * m - k;
        let size = (1usize << height) - 1;
        // Heap order; index 0 is the root w_k.
        let mut ids = Vec::with_capacity(size);
        ids.push(w[k as usize]);
        for i in 1..size {
            let v = g.add_vertex(format!("t{k}_{i}"));
            ids.push(v);
            g.add_edge(v, ids[(i - 1) / 2]);
        }
    }
    Ok((g, w))
}

/// `2^{2m} − 2^m − 2m + 2`.
pub fn g_m_size(m: u32) -> usize {
    (1usize << (2 * m)) - (1usize << m) - 2 * m as usize + 2
}

pub fn g_m(m: u32) -> Result<FamilyInstance> {
    let (g, w) = g_m_graph(m)?;
    let mut inst = graph_instance(&g, Family::Gm, &[("m", f64::from(m))])?
        .designate("x", w[m as usize])
        .designate("y", w[0])
        .closed_form("n", g.n() as f64);
    for (k, &v) in w.iter().enumerate() {
        inst = inst.designate(&format!("w{k}"), v);
    }
    Ok(inst)
}

/// Largest `k` with `k³ ≤ n`.
pub fn icbrt(n: usize) -> usize {
    let mut k = (n as f64).cbrt().round() as usize;
    while k * k * k > n {
        k -= 1;
    }
    while (k + 1).pow(3) <= n {
        k += 1;
    }
    k
}

/// `G_m` joined at `w_0` to the vertex `(0, 0, 0)` of a 3-torus of side
/// `⌊n^{1/3}⌋`, where `n` is the size of `G_m`.
pub fn g_m_torus(m: u32) -> Result<FamilyInstance> {
    let (mut g, w) = g_m_graph(m)?;
    let n = g.n();
    let k = icbrt(n);
    let torus = torus3(k)?;
    let offset = n;
    for v in 0..torus.n() {
        g.add_vertex(torus.labels()[v].clone());
    }
    for u in 0..torus.n() {
        for &v in torus.neighbors(u) {
            g.add_edge(offset + u, offset + v);
        }
    }
    g.add_edge(w[0], offset);
    let mut inst = graph_instance(&g, Family::GmTorus, &[("m", f64::from(m))])?
        .designate("x", w[m as usize])
        .designate("y", w[0])
        .designate("N", n)
        .set("U", (offset..offset + torus.n()).collect())
        .closed_form("n_gm", n as f64)
        .closed_form("k", k as f64);
    if k == 2 {
        inst = inst.note("collapsed_edges", "true");
    }
    Ok(inst)
}

/// Rows of i.i.d. uniforms, normalized.
pub fn random_chain(n: usize, seed: u64) -> Result<FamilyInstance> {
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut rng = rng::seeded(seed);
    let rows = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + f64::MIN_POSITIVE).collect();
            normalize(w)
        })
        .collect();
    let chain = ChainSpec::from_rows(rows)?;
    Ok(FamilyInstance::new(chain, Family::RandomChain, &[("n", n as f64), ("seed", seed as f64)]))
}

fn normalize(w: Vec<f64>) -> Vec<(usize, f64)> {
    let total: f64 = w.iter().sum();
    let mut row: Vec<(usize, f64)> = w
        .into_iter()
        .enumerate()
        .filter(|&(_, v)| v > 0.0)
        .map(|(j, v)| (j, v / total))
        .collect();
    // Push the rounding residue into the largest entry.
    let sum: f64 = row.iter().map(|e| e.1).sum();
    if let Some(big) = row.iter_mut().max_by(|a, b| a.1.total_cmp(&b.1)) {
        big.1 += 1.0 - sum;
    }
    row
}

/// Symmetric weights `w(u, v) = w(v, u) ≥ 0` on a random connected support
/// (spanning tree plus extra pairs and some self-weights), `p = w / Σ w`.
pub fn random_reversible(n: usize, seed: u64) -> Result<FamilyInstance> {
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut rng = rng::seeded(seed);
    let mut w = vec![vec![0.0f64; n]; n];
    for v in 1..n {
        let u = rng.gen_range(0..v);
        let x = rng.gen_range(0.1..1.0);
        w[u][v] = x;
        w[v][u] = x;
    }
    for u in 0..n {
        for v in u..n {
            if rng.gen_bool(0.3) {
                let x = rng.gen_range(0.1..1.0);
                w[u][v] += x;
                if u != v {
                    w[v][u] += x;
                }
            }
        }
    }
    if n == 1 {
        w[0][0] = 1.0;
    }
    let rows = w.into_iter().map(normalize).collect();
    let chain = ChainSpec::from_rows(rows)?;
    Ok(FamilyInstance::new(chain, Family::RandomReversible, &[("n", n as f64), ("seed", seed as f64)]))
}

/// Erdős–Rényi graph, resampled until connected.
pub fn random_graph_raw(n: usize, edge_prob: f64, seed: u64) -> Result<Graph> {
    if n < 2 || !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::BadParams(format!("n = {n}, edge_prob = {edge_prob}")));
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..100_000 {
        let mut g = Graph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(edge_prob) {
                    g.add_edge(u, v);
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected)
}

pub fn random_graph(n: usize, edge_prob: f64, seed: u64) -> Result<FamilyInstance> {
    let g = random_graph_raw(n, edge_prob, seed)?;
    graph_instance(
        &g,
        Family::RandomGraph,
        &[("n", n as f64), ("edge_prob", edge_prob), ("seed", seed as f64)],
    )
}

/// Builds a family from named numeric parameters, as given on the command
/// line. Missing horizons default to the smallest admissible one where the
/// family has such a rule.
pub fn construct(family: Family, params: &BTreeMap<String, f64>) -> Result<FamilyInstance> {
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .ok_or_else(|| Error::BadParams(format!("{family} needs --{k}")))
    };
    let int = |k: &str| -> Result<usize> {
        let v = get(k)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::BadParams(format!("--{k} must be a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    };
    let seed = || params.get("seed").map_or(0, |&s| s as u64);
    match family {
        Family::CycleTrap => cycle_trap(int("n")?, int("t")?),
        Family::CycleTrapMulti => {
            let n = int("n")?;
            let t = if params.contains_key("t") { int("t")? } else { cycle_trap_multi_time(n) };
            cycle_trap_multi(n, t)
        }
        Family::PureBirth => pure_birth(int("n")?, int("t")?),
        Family::PureBirthTail => {
            let n = int("n")?;
            let t = if params.contains_key("t") { int("t")? } else { pure_birth_tail_time(n) };
            pure_birth_tail(n, t)
        }
        Family::Gm => g_m(int("m")? as u32),
        Family::GmTorus => g_m_torus(int("m")? as u32),
        Family::CycleGraph => cycle_graph_instance(int("n")?),
        Family::PathGraph => path_graph_instance(int("n")?),
        Family::BinaryTree => binary_tree_instance(int("h")? as u32),
        Family::Torus3 => torus3_instance(int("k")?),
        Family::RandomChain => random_chain(int("n")?, seed()),
        Family::RandomReversible => {
            let inst = random_reversible(int("n")?, seed())?;
            Ok(if params.get("lazy").is_some_and(|&l| l != 0.0) { inst.into_lazy() } else { inst })
        }
        Family::RandomGraph => random_graph(int("n")?, get("edge_prob")?, seed()),
        Family::Custom => Err(Error::BadParams("a custom chain is read from a file, not built".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{is_reversible, stationary};
    use crate::hitting::hitting_pmf;

    #[test]
    fn cycle_trap_closed_form() {
        let inst = cycle_trap(5, 9).unwrap();
        assert_eq!(inst.closed_forms["hit_prob"], 0.125);
        assert_eq!(inst.role("x"), Some(3));
        let pmf = hitting_pmf(&inst.chain, 3, 4, 9);
        assert!((pmf.at(9) - 0.125).abs() < 1e-12);
        assert_eq!(inst.chain.period(0), 4);
        assert!(matches!(cycle_trap(5, 9).unwrap().family, Family::CycleTrap));
        assert!(matches!(cycle_trap(5, 8), Err(Error::BadHorizon { min: 9, .. })));
    }

    #[test]
    fn cycle_trap_two_states() {
        let inst = cycle_trap(2, 4).unwrap();
        let pmf = hitting_pmf(&inst.chain, inst.role("x").unwrap(), 1, 4);
        assert!((pmf.at(4) - inst.closed_forms["hit_prob"]).abs() < 1e-12);
    }

    #[test]
    fn cycle_trap_not_reversible() {
        let inst = cycle_trap(5, 9).unwrap();
        let pi = stationary(&inst.chain).unwrap();
        assert!(!is_reversible(&inst.chain, &pi, 1e-12));
    }

    #[test]
    fn multi_trap_validity() {
        let inst = cycle_trap_multi(4, 24).unwrap();
        assert_eq!(inst.closed_forms["r"], 5.0);
        assert_eq!(inst.closed_forms["k"], 4.0);
        assert!((inst.chain.prob(3, 0) - 0.2).abs() < 1e-15);
        assert_eq!(inst.chain.n(), 8);
        assert_eq!(inst.chain.period(0), 4);
        assert!(matches!(cycle_trap_multi(4, 12), Err(Error::BadParams(_))));
        assert_eq!(cycle_trap_multi_time(4), 24);
    }

    #[test]
    fn pure_birth_small() {
        let inst = pure_birth(2, 4).unwrap();
        let pmf = hitting_pmf(&inst.chain, 0, 1, 4);
        assert!((pmf.at(4) - 0.0625).abs() < 1e-12);
        assert!((inst.closed_forms["hit_pmf_at_t"] - 0.0625).abs() < 1e-15);
        let pi = stationary(&inst.chain).unwrap();
        assert!((pi.pi[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_birth_tail_structure() {
        let inst = pure_birth_tail(16, 64).unwrap();
        assert_eq!(inst.chain.n(), 32);
        for i in 15..31 {
            assert_eq!(inst.chain.row(i), &[(i + 1, 1.0)]);
        }
        assert_eq!(inst.sets["U"].len(), 17);
        assert!(pure_birth_tail(16, 63).is_err());
    }

    #[test]
    fn graph_shapes() {
        assert_eq!(binary_tree_graph(3).unwrap().n(), 7);
        let t = torus3(3).unwrap();
        assert_eq!(t.n(), 27);
        assert!((0..27).all(|v| t.degree(v) == 6));
        assert!((0..8).all(|v| torus3(2).unwrap().degree(v) == 3));
        assert!(cycle_graph(8).unwrap().is_bipartite());
        assert!(!cycle_graph(7).unwrap().is_bipartite());
        assert!(torus3(1).is_err());
    }

    #[test]
    fn g_m_sizes() {
        for m in 2..=8 {
            let (g, w) = g_m_graph(m).unwrap();
            assert_eq!(g.n(), g_m_size(m), "m = {m}");
            assert_eq!(g.max_degree(), 4);
            for k in 1..m as usize {
                assert_eq!(g.degree(w[k]), 4);
            }
        }
        assert_eq!(g_m_size(2), 10);
        assert_eq!(g_m_size(3), 52);
    }

    #[test]
    fn g_m_torus_size() {
        let inst = g_m_torus(3).unwrap();
        assert_eq!(inst.chain.n(), 52 + 27);
        assert_eq!(inst.sets["U"].len(), 27);
        assert_eq!(icbrt(52), 3);
        assert_eq!(icbrt(64), 4);
    }

    #[test]
    fn walk_chain_rules() {
        let c = graph_walk_chain(&cycle_graph(4).unwrap()).unwrap();
        assert_eq!(c.prob(0, 1), 0.5);
        let mut g = Graph::new(2);
        g.add_edge(0, 0);
        g.add_edge(0, 1);
        assert!(matches!(graph_walk_chain(&g), Err(Error::SelfLoop(0))));
        assert!(graph_walk_chain(&g.clone().allowing_loops()).is_ok());
        let mut split = Graph::new(4);
        split.add_edge(0, 1);
        split.add_edge(2, 3);
        assert!(matches!(graph_walk_chain(&split), Err(Error::Disconnected)));
    }

    #[test]
    fn random_families_deterministic() {
        let a = random_reversible(7, 3).unwrap();
        let b = random_reversible(7, 3).unwrap();
        assert_eq!(a.chain, b.chain);
        let pi = stationary(&a.chain).unwrap();
        assert!(is_reversible(&a.chain, &pi, 1e-12));
        let g = random_graph(8, 0.5, 11).unwrap();
        assert!(g.chain.is_irreducible());
        assert_eq!(random_chain(5, 1).unwrap().chain, random_chain(5, 1).unwrap().chain);
    }

    #[test]
    fn json_has_closed_forms() {
        let inst = cycle_trap(5, 9).unwrap();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
        assert_eq!(v["closed_forms"]["hit_prob"].as_f64(), Some(0.125));
        assert_eq!(v["family"], "cycle-trap");
        assert_eq!(v["n"], 5);
        let back = ChainSpec::from_json_str(&inst.to_json()).unwrap();
        assert_eq!(back.n(), 5);
    }

    #[test]
    fn construct_dispatch() {
        let p = |kv: &[(&str, f64)]| kv.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        let inst = construct(Family::CycleTrap, &p(&[("n", 5.0), ("t", 9.0)])).unwrap();
        assert_eq!(inst.closed_forms["hit_prob"], 0.125);
        let multi = construct(Family::CycleTrapMulti, &p(&[("n", 4.0)])).unwrap();
        assert_eq!(multi.param("t"), Some(24.0));
        assert!(matches!(construct(Family::Gm, &p(&[])), Err(Error::BadParams(_))));
        assert!(construct(Family::PathGraph, &p(&[("n", 2.5)])).is_err());
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = pure_birth_tail(4, 8).unwrap();
        let back = FamilyInstance::from_json_str(&inst.to_json()).unwrap();
        assert_eq!(back.family, Family::PureBirthTail);
        assert_eq!(back.params, inst.params);
        assert_eq!(back.designated, inst.designated);
        assert_eq!(back.sets, inst.sets);
        assert_eq!(back.chain, inst.chain);
        let plain = FamilyInstance::from_chain(ChainSpec::from_dense(&[vec![1.0]]).unwrap());
        assert_eq!(plain.family, Family::Custom);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }
}
