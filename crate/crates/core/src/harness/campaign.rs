//! Verification campaigns: exact values against every applicable bound over
//! a corpus of chains.
//!
//! Chains are processed in parallel and merged in corpus order. For each
//! `(chain, x, y, kind)` the report keeps the row with the smallest slack
//! and every violating row; the summary counts all checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use super::bounds::{bound_value, BoundCtx, BoundKind};
use super::report::{KindSummary, ReportRow, VerificationReport};
use crate::chain::{mixing_time_from_profiles, stationary, MixingProfile, StationaryDist};
use crate::constructions::{random_chain, random_graph, random_reversible, FamilyInstance};
use crate::error::{Error, Result};
use crate::hitting::{hitting_pmfs_to, stationary_hitting_from, surprise_pmfs};
use crate::maxprob::{maximal_row, maximal_row_certified, TailCertificate};
use crate::reversible::ReversibleClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XyPolicy {
    AllPairs,
    /// Only the instance's designated `x` and `y`.
    Designated,
}

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub kinds: BTreeSet<BoundKind>,
    /// Times `1..=t_max` are examined; each kind filters by its predicate.
    pub t_max: usize,
    pub xy: XyPolicy,
    /// Horizon for `d_x(t)` and `t_mix(1/4)`; at least `t_max`.
    pub mix_horizon: usize,
    /// Largest horizon tried when certifying `p*`.
    pub pstar_cap: usize,
}

impl CampaignSpec {
    pub fn new(kinds: impl IntoIterator<Item = BoundKind>, t_max: usize) -> Self {
        CampaignSpec {
            kinds: kinds.into_iter().collect(),
            t_max,
            xy: XyPolicy::AllPairs,
            mix_horizon: t_max,
            pstar_cap: 1_000_000,
        }
    }

    pub fn grid(&self) -> String {
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.name()).collect();
        format!(
            "t=1..={};pairs={};kinds={};mix_horizon={}",
            self.t_max,
            match self.xy {
                XyPolicy::AllPairs => "all",
                XyPolicy::Designated => "designated",
            },
            kinds.join("+"),
            self.mix_horizon.max(self.t_max)
        )
    }
}

/// Seeded corpora used by the suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corpus {
    /// Dense random chains, `n = 2 + seed mod (n_max − 1)`.
    Random { count: usize, n_max: usize, seed: u64 },
    /// Random reversible chains with the same size rule.
    Reversible { count: usize, n_max: usize, seed: u64, lazy: bool },
    /// Connected Erdős–Rényi graphs, `n = 4 + seed mod (n_max − 3)`.
    Graph { count: usize, n_max: usize, edge_prob: f64, seed: u64 },
}

impl Corpus {
    pub fn seeds(&self) -> Vec<u64> {
        let (count, seed) = match *self {
            Corpus::Random { count, seed, .. }
            | Corpus::Reversible { count, seed, .. }
            | Corpus::Graph { count, seed, .. } => (count, seed),
        };
        (0..count as u64).map(|i| seed + i).collect()
    }

    pub fn build(&self) -> Result<Vec<FamilyInstance>> {
        let seeds = self.seeds();
        seeds
            .par_iter()
            .map(|&s| match *self {
                Corpus::Random { n_max, .. } => random_chain(size_rule(s, 2, n_max), s),
                Corpus::Reversible { n_max, lazy, .. } => {
                    let inst = random_reversible(size_rule(s, 2, n_max), s)?;
                    Ok(if lazy { inst.into_lazy() } else { inst })
                }
                Corpus::Graph { n_max, edge_prob, .. } => {
                    random_graph(size_rule(s, 4, n_max), edge_prob, s)
                }
            })
            .collect()
    }
}

fn size_rule(seed: u64, lo: usize, hi: usize) -> usize {
    let hi = hi.max(lo);
    lo + (seed % (hi - lo + 1) as u64) as usize
}

/// Facts about one chain shared by all of its rows.
struct ChainFacts {
    pi: Option<StationaryDist>,
    reversible: bool,
    nonneg_eigen: bool,
    profiles: Vec<MixingProfile>,
    t_mix_quarter: Option<usize>,
}

fn chain_facts(inst: &FamilyInstance, spec: &CampaignSpec, needs_mixing: bool) -> ChainFacts {
    let chain = &inst.chain;
    let pi = stationary(chain).ok();
    let class = if chain.is_irreducible() {
        ReversibleClass::of(chain, 0).ok()
    } else {
        None
    };
    let reversible = class.is_some();
    let nonneg_eigen = class.as_ref().is_some_and(|c| c.min_eigenvalue() >= -1e-12);
    let mut profiles = Vec::new();
    let mut t_mix_quarter = None;
    if let (Some(pi), true) = (&pi, needs_mixing) {
        let h = spec.mix_horizon.max(spec.t_max);
        profiles = (0..chain.n())
            .map(|x| MixingProfile::compute(chain, pi, x, h))
            .collect();
        t_mix_quarter = mixing_time_from_profiles(&profiles, 0.25, h).ok();
    }
    ChainFacts {
        pi,
        reversible,
        nonneg_eigen,
        profiles,
        t_mix_quarter,
    }
}

/// Accumulates rows for one chain.
struct Collector<'a> {
    inst: &'a FamilyInstance,
    params: String,
    rows: Vec<ReportRow>,
    summary: BTreeMap<BoundKind, KindSummary>,
}

impl<'a> Collector<'a> {
    fn new(inst: &'a FamilyInstance) -> Self {
        Collector {
            inst,
            params: inst.params_string(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    /// Checks one group of rows sharing `(x, y, kind)`.
    fn group(&mut self, x: &str, y: &str, kind: BoundKind, items: impl Iterator<Item = (Option<usize>, f64, Option<f64>)>) {
        let summary = self.summary.entry(kind).or_default();
        let mut worst: Option<ReportRow> = None;
        let mut first_na: Option<ReportRow> = None;
        let mut violations = Vec::new();
        for (t, exact, bound) in items {
            let r = ReportRow {
                family: self.inst.family.name().to_string(),
                params: self.params.clone(),
                x: x.to_string(),
                y: y.to_string(),
                t,
                exact,
                kind,
                bound,
            };
            summary.record(&r);
            match r.slack() {
                None => {
                    if first_na.is_none() {
                        first_na = Some(r);
                    }
                }
                Some(s) => {
                    if r.pass() == Some(false) {
                        violations.push(r.clone());
                    }
                    if worst.as_ref().and_then(ReportRow::slack).is_none_or(|w| s < w) {
                        worst = Some(r);
                    }
                }
            }
        }
        match worst {
            Some(w) => {
                if w.pass() != Some(false) {
                    self.rows.push(w);
                }
            }
            None => self.rows.extend(first_na),
        }
        self.rows.extend(violations);
    }
}

fn bound_or_none(kind: BoundKind, ctx: &BoundCtx) -> Option<f64> {
    bound_value(kind, ctx).ok()
}

fn verify_instance(inst: &FamilyInstance, spec: &CampaignSpec) -> Result<(Vec<ReportRow>, BTreeMap<BoundKind, KindSummary>)> {
    let chain = &inst.chain;
    let n = chain.n();
    let t_max = spec.t_max;
    let kinds = &spec.kinds;
    let needs_mixing = kinds.contains(&BoundKind::Composite) || kinds.contains(&BoundKind::CompositeFour);
    let facts = chain_facts(inst, spec, needs_mixing);
    let pi_of = |x: usize| facts.pi.as_ref().map(|p| p.pi[x]);
    let mut col = Collector::new(inst);

    let (xs, ys): (Vec<usize>, Vec<usize>) = match spec.xy {
        XyPolicy::AllPairs => ((0..n).collect(), (0..n).collect()),
        XyPolicy::Designated => {
            let x = inst.role("x").ok_or_else(|| Error::BadParams("no designated x".into()))?;
            let y = inst.role("y").ok_or_else(|| Error::BadParams("no designated y".into()))?;
            (vec![x], vec![y])
        }
    };

    let base_ctx = |x: usize, t: usize| BoundCtx {
        pi_x: pi_of(x),
        reversible: facts.reversible,
        simple_graph: inst.family.is_graph_walk(),
        nonneg_eigen: facts.nonneg_eigen,
        t_mix_quarter: facts.t_mix_quarter,
        ..BoundCtx::new(n, t)
    };

    let pointwise: Vec<BoundKind> = kinds.iter().copied().filter(|k| k.is_pointwise()).collect();
    if !pointwise.is_empty() {
        let pstar_sums: Vec<Option<f64>> = (0..n)
            .map(|x| {
                (kinds.contains(&BoundKind::MaxSurprise) && xs.contains(&x))
                    .then(|| maximal_row(chain, x, t_max).sum())
            })
            .collect();
        for &y in &ys {
            let pmfs = hitting_pmfs_to(chain, y, t_max);
            for &x in &xs {
                if x == y {
                    continue;
                }
                let pmf = &pmfs[x];
                let (xl, yl) = (chain.label(x).to_string(), chain.label(y).to_string());
                for &kind in &pointwise {
                    let items = (1..=t_max).map(|t| {
                        let mut ctx = base_ctx(x, t);
                        ctx.pstar_sum = pstar_sums[x];
                        if kind == BoundKind::Composite && !facts.profiles.is_empty() {
                            let s = t / 2;
                            ctx.s = Some(s);
                            ctx.d_x_s = Some(facts.profiles[x].d[s]);
                        }
                        (Some(t), pmf.pmf[t], bound_or_none(kind, &ctx))
                    });
                    col.group(&xl, &yl, kind, items);
                }
            }
        }
    }

    let surprise: Vec<BoundKind> = kinds.iter().copied().filter(|k| k.is_surprise()).collect();
    if !surprise.is_empty() {
        let all = surprise_pmfs(chain, t_max);
        for &x in &xs {
            let xl = chain.label(x).to_string();
            for &kind in &surprise {
                let items = (1..=t_max).map(|t| (Some(t), all[x].s[t], bound_or_none(kind, &base_ctx(x, t))));
                col.group(&xl, "*", kind, items);
            }
        }
    }

    if kinds.contains(&BoundKind::StationaryStart) || kinds.contains(&BoundKind::StationaryMonotone) {
        if let Some(pi) = &facts.pi {
            for &y in &ys {
                let q = stationary_hitting_from(chain, &pi.pi, y, t_max).q;
                let yl = chain.label(y).to_string();
                let ctx = |t| BoundCtx {
                    pi_start: true,
                    ..BoundCtx::new(n, t)
                };
                if kinds.contains(&BoundKind::StationaryStart) {
                    let items = (1..=t_max).map(|t| (Some(t), q[t], bound_or_none(BoundKind::StationaryStart, &ctx(t))));
                    col.group("pi", &yl, BoundKind::StationaryStart, items);
                }
                if kinds.contains(&BoundKind::StationaryMonotone) {
                    let items = (1..=t_max).map(|t| {
                        (Some(t), q[t] - q[t - 1], bound_or_none(BoundKind::StationaryMonotone, &ctx(t)))
                    });
                    col.group("pi", &yl, BoundKind::StationaryMonotone, items);
                }
            }
        }
    }

    if kinds.contains(&BoundKind::MaxProbSum) {
        for &x in &xs {
            // Without a reversible class there is no certificate to chase.
            let row = if TailCertificate::of(chain, x).is_some() {
                maximal_row_certified(chain, x, spec.pstar_cap)
            } else {
                maximal_row(chain, x, t_max)
            };
            let mut ctx = base_ctx(x, 0);
            ctx.certified = row.certified;
            // On a reducible chain the relevant π is that of x's class.
            if let (Some(_), None) = (row.lambda_star, ctx.pi_x) {
                ctx.pi_x = ReversibleClass::of(chain, x)
                    .ok()
                    .and_then(|c| c.local[x].map(|k| c.pi[k]));
            }
            let xl = chain.label(x).to_string();
            let sum = row.sum();
            col.group(&xl, "*", BoundKind::MaxProbSum, std::iter::once((None, sum, bound_or_none(BoundKind::MaxProbSum, &ctx))));
        }
    }

    Ok((col.rows, col.summary))
}

/// Runs every kind in `spec` over the corpus.
pub fn verify_family(corpus: &[FamilyInstance], spec: &CampaignSpec) -> Result<VerificationReport> {
    let per_chain: Vec<_> = super::with_pool(|| {
        corpus
            .par_iter()
            .map(|inst| verify_instance(inst, spec))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut report = VerificationReport {
        chains: corpus.len(),
        grid: spec.grid(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        ..Default::default()
    };
    for (rows, summary) in per_chain {
        report.rows.extend(rows);
        for (k, s) in summary {
            report.summary.entry(k).or_default().merge(&s);
        }
    }
    for inst in corpus {
        if let Some(seed) = inst.param("seed") {
            report.seeds.push(seed as u64);
        }
    }
    if spec.kinds.contains(&BoundKind::Composite) {
        report
            .notes
            .push("composite uses the start-specific d_x(s) with s = floor(t/2) and psi(u) = n/u".into());
    }
    if spec.kinds.contains(&BoundKind::MaxProbSum) {
        report
            .notes
            .push("maxprob-sum uses pi on the communicating class of x; uncertified rows are n/a".into());
    }
    Ok(report)
}

/// Human-readable one-line status for a finished campaign.
pub fn status_line(report: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} chains, {} checks, {} violations",
        report.chains,
        report.summary.values().map(|k| k.checked).sum::<u64>(),
        report.violations()
    );
    s
}
