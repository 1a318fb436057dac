//! `hitstat` command line.
//!
//! Exit codes: 0 when every assertion of the command holds, 1 when one
//! fails (the failing row goes to stderr), 2 on usage errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hitstat::chain::{check_distribution, mixing_time_from_profiles};
use hitstat::constructions::{construct, Family, FamilyInstance};
use hitstat::geomsum::{
    basic_geom_bounds, binom_bounds, geom_sum_bound, geom_sum_max_search, geom_sum_pmf, ln_binom,
    neg_binomial_pmf, GeomParams,
};
use hitstat::harness::campaign::{verify_family, CampaignSpec, Corpus, XyPolicy};
use hitstat::harness::experiments::{
    experiment_cycle_pstar, experiment_gm_peak, experiment_gm_scaling, ExperimentReport,
};
use hitstat::harness::locator::{surprise_lower_locator, LocatorOptions};
use hitstat::harness::{with_pool, BoundKind};
use hitstat::maxprob::{maximal_row, maximal_row_certified, row_sum_bound, starr_horizon, starr_ratio};
use hitstat::reversible::ReversibleClass;
use hitstat::spectral::{killed_return_probs, killed_spectrum, reconstruct};
use hitstat::{hitting_pmf, is_reversible, stationary, surprise_pmf, ChainSpec, Error, MixingProfile};

#[derive(Parser)]
#[command(name = "hitstat", version, about = "Exact hitting-time and surprise probabilities for finite Markov chains")]
struct Cli {
    /// Chain JSON file.
    #[arg(long, global = true)]
    chain: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a chain file and print its structure.
    Validate,
    /// Stationary distribution.
    Stationary,
    /// Exact distribution of the hitting time of `--to` from `--from`.
    Hitting {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        horizon: usize,
    },
    /// Probability that a new state is visited at each time.
    Surprise {
        #[arg(long)]
        from: String,
        #[arg(long)]
        horizon: usize,
    },
    /// Maximal transition probabilities from `--from`.
    Maxprob {
        #[arg(long)]
        from: String,
        /// Fixed horizon; by default the horizon is chosen to certify the row.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        max_horizon: usize,
    },
    /// L^p norm of the even-time maximal function of the indicator of `--from`.
    Starr {
        #[arg(long)]
        from: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Sums of independent geometric variables.
    Geom {
        #[command(subcommand)]
        cmd: GeomCmd,
    },
    /// Spectral expansion of the return probabilities of the killed chain.
    Spectral {
        #[arg(long)]
        from: String,
        /// Killing set, comma separated.
        #[arg(long, value_delimiter = ',')]
        kill: Vec<String>,
        /// Compare the expansion with the dynamic program up to this time.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Build a chain family.
    Construct {
        #[arg(long)]
        family: String,
        #[command(flatten)]
        params: FamilyArgs,
    },
    /// Check bounds over a corpus, a family instance or a chain file.
    Verify {
        /// random | reversible | lazy-reversible | graph
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "general")]
        kinds: Vec<String>,
        #[command(flatten)]
        params: FamilyArgs,
        /// Corpus size.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 200)]
        tmax: usize,
        /// all | designated
        #[arg(long, default_value = "all")]
        pairs: String,
    },
    /// Find a time with large surprise probability from a hitting window.
    LocateSurprise {
        #[arg(long)]
        family: Option<String>,
        #[command(flatten)]
        params: FamilyArgs,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long, value_delimiter = ',')]
        kill: Vec<String>,
        /// Window length N.
        #[arg(long)]
        window: Option<usize>,
        /// Window start; chosen automatically when absent.
        #[arg(long = "start")]
        start: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Scaling experiments.
    Experiment {
        #[command(subcommand)]
        cmd: ExperimentCmd,
    },
    /// Total-variation distance to stationarity and the mixing time.
    Mix {
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
        #[arg(long)]
        from: Option<String>,
    },
}

#[derive(Subcommand)]
enum GeomCmd {
    /// Mass of the sum at `--t` with failure probabilities `--q`.
    Pmf {
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        #[arg(long)]
        t: usize,
    },
    /// Mass of `n` i.i.d. geometrics at `m` for success probability `p`.
    Negbin {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        p: f64,
    },
    /// Bracket of the i.i.d. mass at the matching parameter.
    Bracket {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
    },
    /// Bracket of a binomial coefficient, in logs.
    Binom {
        #[arg(long = "big-m")]
        big_m: u64,
        #[arg(long = "big-n")]
        big_n: u64,
    },
    /// Grid search for the parameters maximizing the mass at `--t`.
    Search {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    CyclePstar {
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
        n: Vec<usize>,
    },
    GmScaling {
        #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
        m: Vec<u32>,
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    GmPeak {
        #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
        m: Vec<u32>,
    },
}

#[derive(Args, Default)]
struct FamilyArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    lazy: bool,
}

impl FamilyArgs {
    fn to_map(&self, seed: Option<u64>) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        let ints = [("n", self.n), ("t", self.t), ("m", self.m), ("h", self.h), ("k", self.k)];
        for (k, v) in ints {
            if let Some(v) = v {
                p.insert(k.to_string(), v as f64);
            }
        }
        if let Some(e) = self.edge_prob {
            p.insert("edge_prob".into(), e);
        }
        if let Some(s) = seed {
            p.insert("seed".into(), s as f64);
        }
        if self.lazy {
            p.insert("lazy".into(), 1.0);
        }
        p
    }
}

enum Failure {
    Usage(String),
    Assertion(String),
}

type CliResult<T> = Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

/// Input problems are usage errors; anything the mathematics rejects is an
/// assertion failure.
fn classify(e: Error) -> Failure {
    match e {
        Error::BadIndex { .. }
        | Error::UnknownState(_)
        | Error::BadParams(_)
        | Error::BadHorizon { .. }
        | Error::BadWeights(_)
        | Error::Json(_)
        | Error::Empty
        | Error::SizeMismatch { .. }
        | Error::RowSum { .. }
        | Error::NegativeEntry { .. }
        | Error::DuplicateLabel(_)
        | Error::BadDistribution(_)
        | Error::StateInU(_)
        | Error::SelfLoop(_)
        | Error::Disconnected => Failure::Usage(e.to_string()),
        other => Failure::Assertion(other.to_string()),
    }
}

/// Output text plus the assertions it carries.
struct Report {
    body: String,
    failures: Vec<String>,
    summary: Option<String>,
}

impl Report {
    fn new(body: String) -> Self {
        Report {
            body,
            failures: Vec::new(),
            summary: None,
        }
    }

    fn assert(mut self, ok: bool, row: impl FnOnce() -> String) -> Self {
        if !ok {
            self.failures.push(row());
        }
        self
    }
}

struct Ctx {
    chain: Option<PathBuf>,
    format: Option<Format>,
    seed: Option<u64>,
}

impl Ctx {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn read_instance(&self) -> CliResult<FamilyInstance> {
        let path = self.chain.as_ref().ok_or_else(|| usage("--chain is required"))?;
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        FamilyInstance::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    fn read_chain(&self) -> CliResult<ChainSpec> {
        Ok(self.read_instance()?.chain)
    }
}

fn state(chain: &ChainSpec, s: &str) -> CliResult<usize> {
    chain.resolve(s).map_err(classify)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        chain: cli.chain.clone(),
        format: cli.format,
        seed: cli.seed,
    };
    let result = with_pool(|| run(&ctx, cli.cmd));
    let report = match result {
        Ok(r) => r,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("FAIL {msg}");
            return ExitCode::from(1);
        }
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &report.body) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(report.body.as_bytes()).and_then(|_| out.flush()) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
        }
    }
    if let Some(s) = &report.summary {
        eprint!("{s}");
    }
    if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &report.failures {
            eprintln!("FAIL {f}");
        }
        ExitCode::from(1)
    }
}

fn run(ctx: &Ctx, cmd: Cmd) -> CliResult<Report> {
    match cmd {
        Cmd::Validate => validate_cmd(ctx),
        Cmd::Stationary => stationary_cmd(ctx),
        Cmd::Hitting { from, to, horizon } => {
            let chain = ctx.read_chain()?;
            let pmf = hitting_pmf(&chain, state(&chain, &from)?, state(&chain, &to)?, horizon);
            Ok(Report::new(match ctx.format_or(Format::Csv) {
                Format::Csv => pmf.to_csv(),
                Format::Json => pretty(&serde_json::to_value(&pmf).expect("pmf serializes")),
            }))
        }
        Cmd::Surprise { from, horizon } => {
            let chain = ctx.read_chain()?;
            let sp = surprise_pmf(&chain, state(&chain, &from)?, horizon);
            Ok(Report::new(match ctx.format_or(Format::Csv) {
                Format::Csv => {
                    let mut out = String::from("t,p\n");
                    for (t, p) in sp.s.iter().enumerate() {
                        let _ = writeln!(out, "{t},{p}");
                    }
                    out
                }
                Format::Json => pretty(&serde_json::to_value(&sp).expect("pmf serializes")),
            }))
        }
        Cmd::Maxprob { from, horizon, max_horizon } => maxprob_cmd(ctx, &from, horizon, max_horizon),
        Cmd::Starr { from, p, horizon } => starr_cmd(ctx, &from, p, horizon),
        Cmd::Geom { cmd } => geom_cmd(ctx, cmd),
        Cmd::Spectral { from, kill, horizon } => spectral_cmd(ctx, &from, &kill, horizon),
        Cmd::Construct { family, params } => {
            let family: Family = family.parse().map_err(classify)?;
            let inst = construct(family, &params.to_map(ctx.seed)).map_err(classify)?;
            Ok(Report::new(match ctx.format_or(Format::Json) {
                Format::Json => inst.to_json() + "\n",
                Format::Csv => {
                    let mut out = String::from("from,to,p\n");
                    for (i, row) in inst.chain.rows().iter().enumerate() {
                        for (j, p) in row {
                            let _ = writeln!(out, "{},{},{p}", inst.chain.label(i), inst.chain.label(*j));
                        }
                    }
                    out
                }
            }))
        }
        Cmd::Verify { corpus, family, kinds, params, count, tmax, pairs } => {
            verify_cmd(ctx, corpus, family, &kinds, &params, count, tmax, &pairs)
        }
        Cmd::LocateSurprise { family, params, from, to, kill, window, start, samples } => {
            locate_cmd(ctx, family, &params, from, to, &kill, window, start, samples)
        }
        Cmd::Experiment { cmd } => experiment_cmd(ctx, cmd),
        Cmd::Mix { eps, horizon, from } => mix_cmd(ctx, eps, horizon, from),
    }
}

fn validate_cmd(ctx: &Ctx) -> CliResult<Report> {
    let path = ctx.chain.as_ref().ok_or_else(|| usage("--chain is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let chain = match ChainSpec::from_json_str(&text) {
        Ok(c) => c,
        Err(Error::Json(e)) => return Err(usage(format!("{}: {e}", path.display()))),
        Err(e) => {
            let body = pretty(&json!({"valid": false, "error": e.to_string()}));
            return Ok(Report::new(body).assert(false, || format!("{}: {e}", path.display())));
        }
    };
    let pi = stationary(&chain).ok();
    let reversible = pi.as_ref().map(|p| is_reversible(&chain, p, 1e-10));
    let irreducible = chain.is_irreducible();
    let facts = [
        ("valid", json!(true)),
        ("n", json!(chain.n())),
        ("nnz", json!(chain.nnz())),
        ("irreducible", json!(irreducible)),
        ("period", json!(irreducible.then(|| chain.period(0)))),
        ("reversible", json!(reversible)),
    ];
    Ok(Report::new(match ctx.format_or(Format::Json) {
        Format::Json => pretty(&Value::Object(facts.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        Format::Csv => {
            let mut out = String::from("key,value\n");
            for (k, v) in facts {
                let _ = writeln!(out, "{k},{v}");
            }
            out
        }
    }))
}

fn stationary_cmd(ctx: &Ctx) -> CliResult<Report> {
    let chain = ctx.read_chain()?;
    let pi = stationary(&chain).map_err(classify)?;
    check_distribution(&pi.pi, chain.n()).map_err(classify)?;
    Ok(Report::new(match ctx.format_or(Format::Json) {
        Format::Json => pretty(&json!({
            "states": chain.states(),
            "pi": pi.pi,
            "residual": pi.residual,
            "reversible": is_reversible(&chain, &pi, 1e-10),
        })),
        Format::Csv => {
            let mut out = String::from("state,pi\n");
            for (i, p) in pi.pi.iter().enumerate() {
                let _ = writeln!(out, "{},{p}", chain.label(i));
            }
            out
        }
    }))
}

fn maxprob_cmd(ctx: &Ctx, from: &str, horizon: Option<usize>, max_horizon: usize) -> CliResult<Report> {
    let chain = ctx.read_chain()?;
    let x = state(&chain, from)?;
    let row = match horizon {
        Some(h) => maximal_row(&chain, x, h),
        None => maximal_row_certified(&chain, x, max_horizon),
    };
    let class_pi = ReversibleClass::of(&chain, x)
        .ok()
        .and_then(|c| c.local[x].map(|k| c.pi[k]));
    let bound = class_pi.filter(|_| row.certified).map(row_sum_bound);
    let sum = row.sum();
    let body = match ctx.format_or(Format::Csv) {
        Format::Csv => row.to_csv(),
        Format::Json => {
            let mut v = serde_json::to_value(&row).expect("row serializes");
            v["sum"] = json!(sum);
            v["sum_bound"] = json!(bound);
            pretty(&v)
        }
    };
    let mut rep = Report::new(body);
    rep.summary = Some(format!(
        "sum {sum} over horizon {}{}\n",
        row.horizon,
        bound.map_or(" (uncertified)".into(), |b| format!(", bound {b}"))
    ));
    Ok(rep.assert(bound.is_none_or(|b| sum <= b + 1e-12), || {
        format!("maxprob-sum x={from} sum={sum} bound={}", bound.unwrap_or(f64::NAN))
    }))
}

fn starr_cmd(ctx: &Ctx, from: &str, p: f64, horizon: Option<usize>) -> CliResult<Report> {
    let chain = ctx.read_chain()?;
    let x = state(&chain, from)?;
    let horizon = match horizon {
        Some(h) => h,
        None => starr_horizon(ReversibleClass::of(&chain, x).map_err(classify)?.lambda_star()),
    };
    let r = starr_ratio(&chain, x, p, horizon).map_err(classify)?;
    let body = match ctx.format_or(Format::Json) {
        Format::Json => pretty(&serde_json::to_value(&r).expect("ratio serializes")),
        Format::Csv => format!(
            "x,p,horizon,ratio,bound,certified,tail_eps\n{},{},{},{},{},{},{}\n",
            from, r.p_exp, r.horizon, r.ratio, r.bound, r.certified, r.tail_eps
        ),
    };
    Ok(Report::new(body).assert(r.ratio <= r.bound + 1e-9, || {
        format!("starr x={from} p={p} ratio={} bound={}", r.ratio, r.bound)
    }))
}

fn geom_cmd(ctx: &Ctx, cmd: GeomCmd) -> CliResult<Report> {
    let (v, ok, row) = match cmd {
        GeomCmd::Pmf { q, t } => {
            let n = q.len();
            let params = GeomParams::new(q).map_err(classify)?;
            let p = geom_sum_pmf(&params, t);
            let bound = (t >= 1).then(|| geom_sum_bound(n, t));
            let ok = bound.is_none_or(|b| p <= b + 1e-12);
            (json!({"n": n, "t": t, "p": p, "bound": bound}), ok, format!("geom-sum t={t} p={p} bound={bound:?}"))
        }
        GeomCmd::Negbin { n, m, p } => {
            if n == 0 || !(p > 0.0 && p <= 1.0) {
                return Err(usage("need n ≥ 1 and 0 < p ≤ 1"));
            }
            (json!({"n": n, "m": m, "p": p, "pmf": neg_binomial_pmf(n, m, p)}), true, String::new())
        }
        GeomCmd::Bracket { n, m } => {
            if n == 0 || m == 0 {
                return Err(usage("need n, m ≥ 1"));
            }
            let (lo, hi) = basic_geom_bounds(n, m);
            let v = neg_binomial_pmf(n, m, n as f64 / (n + m) as f64);
            let ok = lo <= v * (1.0 + 1e-12) && v <= hi * (1.0 + 1e-12);
            (json!({"n": n, "m": m, "value": v, "lower": lo, "upper": hi}), ok, format!("bracket n={n} m={m} value={v}"))
        }
        GeomCmd::Binom { big_m, big_n } => {
            if big_m == 0 || big_n == 0 {
                return Err(usage("need M, N ≥ 1"));
            }
            let b = binom_bounds(big_m, big_n);
            let exact = ln_binom(big_m, big_n);
            let ok = b.contains_ln(exact, 1e-12 * exact.abs().max(1.0));
            (
                json!({"M": big_m, "N": big_n, "ln_binom": exact, "ln_lower": b.ln_lower, "ln_upper": b.ln_upper}),
                ok,
                format!("binom M={big_m} N={big_n} ln={exact}"),
            )
        }
        GeomCmd::Search { n, t, resolution } => {
            let g = geom_sum_max_search(n, t, resolution).map_err(classify)?;
            let dist = g.argmax.iter().map(|q| (q - g.predicted_q).abs()).fold(0.0, f64::max);
            let ok = dist <= 10.0 * resolution;
            (
                serde_json::to_value(&g).expect("grid result serializes"),
                ok,
                format!("search n={n} t={t} argmax={:?} predicted={}", g.argmax, g.predicted_q),
            )
        }
    };
    let body = match ctx.format_or(Format::Json) {
        Format::Json => pretty(&v),
        Format::Csv => flat_csv(&v),
    };
    Ok(Report::new(body).assert(ok, || row))
}

/// Two-line CSV of a flat JSON object; arrays are joined with `;`.
fn flat_csv(v: &Value) -> String {
    let obj = v.as_object().expect("flat object");
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let vals: Vec<String> = obj
        .values()
        .map(|v| match v {
            Value::Array(a) => a.iter().map(Value::to_string).collect::<Vec<_>>().join(";"),
            Value::Null => String::new(),
            other => other.to_string(),
        })
        .collect();
    format!("{}\n{}\n", keys.join(","), vals.join(","))
}

fn spectral_cmd(ctx: &Ctx, from: &str, kill: &[String], horizon: Option<usize>) -> CliResult<Report> {
    let chain = ctx.read_chain()?;
    let x = state(&chain, from)?;
    let u = kill.iter().map(|s| state(&chain, s)).collect::<CliResult<Vec<_>>>()?;
    let spec = killed_spectrum(&chain, x, &u).map_err(classify)?;
    let body = match ctx.format_or(Format::Json) {
        Format::Json => spec.to_json() + "\n",
        Format::Csv => {
            let mut out = String::from("a,lambda\n");
            for (a, l) in &spec.terms {
                let _ = writeln!(out, "{a},{l}");
            }
            out
        }
    };
    let mut rep = Report::new(body);
    if let Some(h) = horizon {
        let dp = killed_return_probs(&chain, x, &u, h).map_err(classify)?;
        let (t, err) = dp
            .iter()
            .enumerate()
            .map(|(t, &v)| (t, (reconstruct(&spec, t) - v).abs()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        rep.summary = Some(format!("max reconstruction error {err:e} at t={t}\n"));
        rep = rep.assert(err <= 1e-10, || format!("spectral t={t} error={err}"));
    }
    let min_a = spec.min_coefficient();
    Ok(rep.assert(min_a >= -1e-12, || format!("spectral coefficient {min_a} < 0")))
}

fn parse_kinds(kinds: &[String]) -> CliResult<Vec<BoundKind>> {
    if kinds.iter().any(|k| k == "all") {
        return Ok(BoundKind::ALL.into_iter().filter(|k| *k != BoundKind::GeomSum).collect());
    }
    kinds.iter().map(|k| k.parse::<BoundKind>().map_err(classify)).collect()
}

#[allow(clippy::too_many_arguments)]
fn verify_cmd(
    ctx: &Ctx,
    corpus: Option<String>,
    family: Option<String>,
    kinds: &[String],
    params: &FamilyArgs,
    count: usize,
    tmax: usize,
    pairs: &str,
) -> CliResult<Report> {
    let kinds = parse_kinds(kinds)?;
    let seed = ctx.seed.unwrap_or(1);
    let insts = if ctx.chain.is_some() {
        vec![ctx.read_instance()?]
    } else if let Some(f) = family {
        let f: Family = f.parse().map_err(classify)?;
        vec![construct(f, &params.to_map(ctx.seed)).map_err(classify)?]
    } else {
        let name = corpus.ok_or_else(|| usage("give one of --chain, --family or --corpus"))?;
        let n_max = params.n.unwrap_or(10);
        let c = match name.as_str() {
            "random" => Corpus::Random { count, n_max, seed },
            "reversible" => Corpus::Reversible { count, n_max, seed, lazy: params.lazy },
            "lazy-reversible" => Corpus::Reversible { count, n_max, seed, lazy: true },
            "graph" => Corpus::Graph { count, n_max, edge_prob: params.edge_prob.unwrap_or(0.3), seed },
            other => return Err(usage(format!("unknown corpus {other:?}"))),
        };
        c.build().map_err(classify)?
    };
    let mut spec = CampaignSpec::new(kinds, tmax);
    spec.xy = match pairs {
        "all" => XyPolicy::AllPairs,
        "designated" => XyPolicy::Designated,
        other => return Err(usage(format!("unknown pair policy {other:?}"))),
    };
    let report = verify_family(&insts, &spec).map_err(classify)?;
    let body = match ctx.format_or(Format::Csv) {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    let mut rep = Report::new(body);
    rep.summary = Some(report.summary_text());
    rep.failures = report.failing_rows().map(|r| r.to_csv_line()).collect();
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn locate_cmd(
    ctx: &Ctx,
    family: Option<String>,
    params: &FamilyArgs,
    from: Option<String>,
    to: Option<String>,
    kill: &[String],
    window: Option<usize>,
    start: Option<usize>,
    samples: usize,
) -> CliResult<Report> {
    let inst = match family {
        Some(f) => construct(f.parse().map_err(classify)?, &params.to_map(None)).map_err(classify)?,
        None => ctx.read_instance()?,
    };
    let chain = &inst.chain;
    let pick = |arg: &Option<String>, role: &str| -> CliResult<usize> {
        match arg {
            Some(s) => state(chain, s),
            None => inst.role(role).ok_or_else(|| usage(format!("--{} is required", if role == "x" { "from" } else { "to" }))),
        }
    };
    let x = pick(&from, "x")?;
    let y = pick(&to, "y")?;
    let u = if kill.is_empty() {
        inst.sets.get("U").cloned().ok_or_else(|| usage("--kill is required"))?
    } else {
        kill.iter().map(|s| state(chain, s)).collect::<CliResult<Vec<_>>>()?
    };
    let n_window = window.or(inst.role("N")).ok_or_else(|| usage("--window is required"))?;
    let opts = LocatorOptions {
        t: start,
        samples,
        seed: ctx.seed.unwrap_or(0),
        ..Default::default()
    };
    let r = surprise_lower_locator(chain, x, y, &u, n_window, &opts).map_err(classify)?;
    let body = match ctx.format_or(Format::Json) {
        Format::Json => r.to_json(),
        Format::Csv => r.to_csv(),
    };
    Ok(Report::new(body).assert(r.pass, || r.to_csv().lines().nth(1).unwrap_or_default().to_string()))
}

fn experiment_cmd(ctx: &Ctx, cmd: ExperimentCmd) -> CliResult<Report> {
    let rep: ExperimentReport = match cmd {
        ExperimentCmd::CyclePstar { n } => experiment_cycle_pstar(&n),
        ExperimentCmd::GmScaling { m, samples } => experiment_gm_scaling(&m, samples, ctx.seed.unwrap_or(1)),
        ExperimentCmd::GmPeak { m } => experiment_gm_peak(&m),
    }
    .map_err(classify)?;
    let body = match ctx.format_or(Format::Json) {
        Format::Json => rep.to_json(),
        Format::Csv => rep.to_csv(),
    };
    let mut out = Report::new(body);
    out.summary = Some(rep.assertion_text());
    out.failures = rep.failures().map(|a| format!("{}: {}", a.name, a.detail)).collect();
    Ok(out)
}

fn mix_cmd(ctx: &Ctx, eps: f64, horizon: usize, from: Option<String>) -> CliResult<Report> {
    let chain = ctx.read_chain()?;
    let pi = stationary(&chain).map_err(classify)?;
    let starts: Vec<usize> = match &from {
        Some(s) => vec![state(&chain, s)?],
        None => (0..chain.n()).collect(),
    };
    let profiles: Vec<MixingProfile> = starts
        .iter()
        .map(|&x| MixingProfile::compute(&chain, &pi, x, horizon))
        .collect();
    let d: Vec<f64> = (0..=horizon)
        .map(|t| profiles.iter().map(|p| p.d[t]).fold(0.0, f64::max))
        .collect();
    let t_mix = mixing_time_from_profiles(&profiles, eps, horizon).ok();
    let body = match ctx.format_or(Format::Json) {
        Format::Json => pretty(&json!({"eps": eps, "horizon": horizon, "t_mix": t_mix, "d": d})),
        Format::Csv => {
            let mut out = String::from("t,d\n");
            for (t, v) in d.iter().enumerate() {
                let _ = writeln!(out, "{t},{v}");
            }
            out
        }
    };
    Ok(Report::new(body).assert(t_mix.is_some(), || format!("mix d({horizon}) = {} > {eps}", d[horizon])))
}
