use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use congest_iso::approx::run_approx_iso;
use congest_iso::central::{
    run_adaptive, run_central, run_nonadaptive, tester_rng, DensityTester, Probe, QueryTester, WalkTester,
};
use congest_iso::decision::{run_decision_protocol, DecisionParams, ACCEPT, REJECT, SKIPPED};
use congest_iso::graph::{read_graph, write_graph, Graph};
use congest_iso::instances::{
    default_lb_sides, gen_decision_lb, gen_far_pair, gen_isomorphic_pair, gen_testing_lb, BitMatrix, CertifiedPair,
};
use congest_iso::rng::derive_seed;
use congest_iso::sim::NetworkConfig;
use congest_iso::streaming::{space_budget, stream_decide, stream_read, StreamState};
use congest_iso::testing::{run_tester, TestParams};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] congest_iso::Error),
    #[error("{0}: {1}")]
    File(PathBuf, std::io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "congest-iso", version, about = "Distributed graph isomorphism in a simulated CONGEST network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance pair to a directory.
    Gen(GenArgs),
    /// Exact decision by fingerprints.
    Decide(DecideArgs),
    /// Property tester.
    TestIso(TestArgs),
    /// Approximate isomorphism; writes `v,g(v)` rows.
    ApproxIso(TestArgs),
    /// One-pass decision over an edge stream.
    StreamDecide(StreamArgs),
    /// A centralized query tester run over the network.
    CentralSim(CentralArgs),
    /// Parameter sweep; one CSV row per (n, seed).
    Bench(BenchArgs),
}

#[derive(Args)]
struct Net {
    #[arg(long)]
    seed: u64,
    /// Bits per edge per round (default `max(32, 4 ceil(log2 n))`).
    #[arg(long)]
    bandwidth: Option<usize>,
}

impl Net {
    fn config(&self, n: usize) -> NetworkConfig {
        let cfg = NetworkConfig::congest(n, self.seed);
        match self.bandwidth {
            Some(b) => cfg.with_bandwidth(b),
            None => cfg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Iso,
    Far,
    DecisionLb,
    TestingLb,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 24)]
    n: usize,
    #[arg(long, default_value_t = 0.3, value_parser = parse_eps)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long)]
    seed: u64,
    /// Matrix side for the decision gadget.
    #[arg(long, default_value_t = 2)]
    k_bits: usize,
    /// Row-major matrix codes for the decision gadget.
    #[arg(long, default_value_t = 0)]
    x: u64,
    #[arg(long, default_value_t = 0)]
    y: u64,
    /// Path length for the spliced family.
    #[arg(long = "d", default_value_t = 6)]
    d: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecideArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    known: PathBuf,
    #[command(flatten)]
    net: Net,
    /// Number of primes (default 2n).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rounds_only: bool,
    /// Transcript JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    known: PathBuf,
    #[arg(long, value_parser = parse_eps)]
    eps: f64,
    #[command(flatten)]
    net: Net,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    /// Edge stream, one `u v` per line.
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    known: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    k: Option<usize>,
    /// Rename arbitrary ids on first appearance.
    #[arg(long)]
    rename: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Nonadaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum TesterKind {
    Pairs,
    Degrees,
    Walk,
}

#[derive(Args)]
struct CentralArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Nonadaptive)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = TesterKind::Pairs)]
    tester: TesterKind,
    /// Query budget (walk length for the walk tester).
    #[arg(long, default_value_t = 50)]
    q: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.1, value_parser = parse_eps)]
    eps: f64,
    #[command(flatten)]
    net: Net,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Decide,
    TestIso,
    ApproxIso,
}

#[derive(Args)]
struct BenchArgs {
    /// `n=A..B` doubles from A; `n=A..B:S` steps by S.
    #[arg(long, value_parser = parse_sweep, required = true)]
    sweep: Vec<Vec<usize>>,
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long, default_value_t = 0.3, value_parser = parse_eps)]
    eps: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Far pairs instead of isomorphic ones.
    #[arg(long)]
    far: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_eps(s: &str) -> Result<f64, String> {
    let e: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if e > 0.0 && e < 1.0 {
        Ok(e)
    } else {
        Err(format!("{e} is outside (0, 1)"))
    }
}

fn parse_sweep(s: &str) -> Result<Vec<usize>, String> {
    let body = s.strip_prefix("n=").ok_or("expected n=A..B")?;
    let (range, step) = match body.split_once(':') {
        Some((r, st)) => (r, Some(st.parse::<usize>().map_err(|e| e.to_string())?)),
        None => (body, None),
    };
    let (a, b) = range.split_once("..").ok_or("expected n=A..B")?;
    let a: usize = a.parse().map_err(|e| format!("{e}"))?;
    let b: usize = b.parse().map_err(|e| format!("{e}"))?;
    if a < 2 || a > b || step == Some(0) {
        return Err(format!("empty sweep {s}"));
    }
    let mut ns = Vec::new();
    let mut n = a;
    while n <= b {
        ns.push(n);
        n = match step {
            Some(st) => n + st,
            None => n * 2,
        };
    }
    Ok(ns)
}

fn load(path: &Path) -> CliResult<Graph> {
    let f = File::open(path).map_err(|e| CliError::File(path.to_owned(), e))?;
    read_graph(BufReader::new(f)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::File(path.to_owned(), e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::File(path.to_owned(), e))
}

/// Parameter problems are the caller's fault.
fn usage(e: congest_iso::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn test_params(n: usize, eps: f64, s: Option<usize>, t: Option<usize>) -> CliResult<TestParams> {
    match s {
        Some(s) => TestParams::desk(n, eps, s, t),
        None => TestParams::full(n, eps).and_then(|p| match t {
            Some(t) => TestParams::desk(n, eps, p.s, Some(t)),
            None => Ok(p),
        }),
    }
    .map_err(usage)
}

fn pair(a: &Path, b: &Path) -> CliResult<(Graph, Graph)> {
    let (g, h) = (load(a)?, load(b)?);
    if g.n() != h.n() {
        return Err(CliError::Usage(format!("graphs have {} and {} nodes", g.n(), h.n())));
    }
    Ok((g, h))
}

fn gen(a: &GenArgs) -> CliResult<()> {
    let (gu, gk, cert) = match a.kind {
        Kind::Iso => split(gen_isomorphic_pair(a.n, a.p, a.seed)?),
        Kind::Far => split(gen_far_pair(a.n, a.eps, a.seed)?),
        Kind::DecisionLb => {
            let bits = a.k_bits * a.k_bits;
            if bits > 63 || a.x >> bits != 0 || a.y >> bits != 0 {
                return Err(CliError::Usage(format!("codes must fit {bits} bits")));
            }
            let (gxy, gxx) = gen_decision_lb(&BitMatrix::from_code(a.k_bits, a.x), &BitMatrix::from_code(a.k_bits, a.y))?;
            (gxy, gxx, json!({"kind": "decision_lb", "x": a.x, "y": a.y, "k_bits": a.k_bits}).to_string())
        }
        Kind::TestingLb => {
            let (g1, g2) = default_lb_sides(a.n, a.eps, a.seed)?;
            let yes = gen_testing_lb(1, 2, a.d, &g1, &g2)?;
            let no = gen_testing_lb(1, 1, a.d, &g1, &g2)?;
            (yes, no, json!({"kind": "testing_lb", "d": a.d, "topology": [1, 2], "known": [1, 1]}).to_string())
        }
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::File(a.out.clone(), e))?;
    for (name, g) in [("topology.txt", &gu), ("known.txt", &gk)] {
        let path = a.out.join(name);
        let mut w = create(&path)?;
        write_graph(g, &mut w)?;
        w.flush().map_err(|e| CliError::File(path, e))?;
    }
    write_text(&a.out.join("certificate.json"), &format!("{cert}\n"))
}

fn split(p: CertifiedPair) -> (Graph, Graph, String) {
    let cert = p.to_json();
    (p.gu, p.gk, cert)
}

fn verdict(accept: Option<bool>) -> &'static str {
    match accept {
        Some(true) => ACCEPT,
        Some(false) => REJECT,
        None => SKIPPED,
    }
}

fn decide(a: &DecideArgs) -> CliResult<bool> {
    let (gu, gk) = pair(&a.topology, &a.known)?;
    let params = DecisionParams {
        k: a.k,
        root: 0,
        rounds_only: a.rounds_only,
    };
    let out = run_decision_protocol(&gu, &gk, a.net.config(gu.n()), &params)?;
    if let Some(path) = &a.out {
        write_text(path, &out.transcript.to_json())?;
    }
    println!(
        "{}",
        json!({
            "verdict": verdict(out.accept),
            "rounds": out.transcript.rounds,
            "bits": out.transcript.total_bits,
            "k": out.fingerprint.primes.len(),
        })
    );
    Ok(true)
}

fn test_iso(a: &TestArgs) -> CliResult<bool> {
    let (gu, gk) = pair(&a.topology, &a.known)?;
    let params = test_params(gu.n(), a.eps, a.s, a.t)?;
    let out = run_tester(&gu, &gk, &params, a.net.config(gu.n()))?;
    if let Some(path) = &a.out {
        write_text(path, &out.transcript.to_json())?;
    }
    println!("{}", out.to_json());
    Ok(true)
}

fn approx_iso(a: &TestArgs) -> CliResult<bool> {
    let (gu, gk) = pair(&a.topology, &a.known)?;
    let params = test_params(gu.n(), a.eps, a.s, a.t)?;
    let out = run_approx_iso(&gu, &gk, &params, a.net.config(gu.n()))?;
    let summary = json!({
        "verdict": if out.g.is_some() { ACCEPT } else { REJECT },
        "delta": out.delta,
        "eps_n2": params.eps * (gu.n() * gu.n()) as f64,
        "rounds": out.transcript.rounds,
        "bits": out.transcript.total_bits,
        "s": params.s,
        "t": params.t,
    });
    println!("{summary}");
    let Some(csv) = out.mapping_csv() else {
        eprintln!("error: the tester rejected, no mapping emitted");
        return Ok(false);
    };
    match &a.out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(true)
}

fn stream(a: &StreamArgs) -> CliResult<bool> {
    let gk = load(&a.known)?;
    let mut st = StreamState::seeded(gk.n(), a.k, a.seed)?;
    if a.rename {
        st = st.with_renaming();
    }
    let f = File::open(&a.topology).map_err(|e| CliError::File(a.topology.clone(), e))?;
    stream_read(&mut st, BufReader::new(f))?;
    let accept = stream_decide(&mut st, &gk)?;
    println!(
        "{}",
        json!({
            "verdict": verdict(Some(accept)),
            "edges": st.edges_seen(),
            "peak_bits": st.meter().peak(),
            "budget_bits": space_budget(gk.n()),
        })
    );
    Ok(true)
}

fn central(a: &CentralArgs) -> CliResult<bool> {
    let g = load(&a.topology)?;
    let n = g.n();
    let make = || -> CliResult<Box<dyn QueryTester>> {
        let mut rng = tester_rng(a.net.seed);
        Ok(match a.tester {
            TesterKind::Pairs => Box::new(DensityTester::new(n, a.rho, a.eps, a.q, Probe::Pairs, &mut rng)?),
            TesterKind::Degrees => Box::new(DensityTester::new(n, a.rho, a.eps, a.q, Probe::Degrees, &mut rng)?),
            TesterKind::Walk => Box::new(WalkTester::new(n, a.q, (a.rho * n as f64) as usize, rng)),
        })
    };
    let (want, _) = run_central(make()?.as_mut(), &g)?;
    let mut boxed = make()?;
    let out = match a.mode {
        Mode::Adaptive => run_adaptive(&mut boxed, &g, 0, a.net.config(n))?,
        Mode::Nonadaptive => run_nonadaptive(&mut boxed, &g, 0, a.net.config(n))?,
    };
    println!(
        "{}",
        json!({
            "verdict": verdict(Some(out.accept)),
            "central_verdict": verdict(Some(want)),
            "queries": out.queries,
            "depth": out.depth,
            "rounds": out.rounds,
            "bits": out.transcript.total_bits,
        })
    );
    Ok(out.accept == want)
}

fn bench(a: &BenchArgs) -> CliResult<bool> {
    let mut rows = Vec::new();
    for &n in a.sweep.iter().flatten() {
        for trial in 0..a.trials {
            let seed = derive_seed(a.seed, &[n as u64, trial]);
            let p = if a.far { gen_far_pair(n, a.eps, seed)? } else { gen_isomorphic_pair(n, 0.5, seed)? };
            let mut cfg = NetworkConfig::congest(n, seed);
            cfg.record_events = false;
            if let Some(b) = a.bandwidth {
                cfg = cfg.with_bandwidth(b);
            }
            let d = p.gu.diameter().unwrap_or(0);
            let (s, t, rounds, bits, v) = match a.algo {
                Algo::Decide => {
                    let params = DecisionParams {
                        k: a.k,
                        root: 0,
                        rounds_only: true,
                    };
                    let out = run_decision_protocol(&p.gu, &p.gk, cfg, &params)?;
                    (0, 0, out.transcript.rounds, out.transcript.total_bits, verdict(out.accept))
                }
                Algo::TestIso => {
                    let params = test_params(n, a.eps, a.s, a.t)?;
                    let out = run_tester(&p.gu, &p.gk, &params, cfg)?;
                    let v = verdict(Some(out.accept));
                    (params.s, params.t, out.transcript.rounds, out.transcript.total_bits, v)
                }
                Algo::ApproxIso => {
                    let params = test_params(n, a.eps, a.s, a.t)?;
                    let out = run_approx_iso(&p.gu, &p.gk, &params, cfg)?;
                    let v = verdict(Some(out.g.is_some()));
                    (params.s, params.t, out.transcript.rounds, out.transcript.total_bits, v)
                }
            };
            rows.push((n, seed, format!("{n},{d},{s},{t},{rounds},{bits},{v}")));
        }
    }
    rows.sort();
    let mut csv = String::from("n,D,s,t,rounds,bits,verdict\n");
    for (_, _, row) in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    match &a.out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(true)
}

fn run(cli: &Cli) -> CliResult<bool> {
    match &cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Decide(a) => decide(a),
        Command::TestIso(a) => test_iso(a),
        Command::ApproxIso(a) => approx_iso(a),
        Command::StreamDecide(a) => stream(a),
        Command::CentralSim(a) => central(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(
            e @ (CliError::Usage(_)
            | CliError::File(..)
            | CliError::Run(congest_iso::Error::TooLarge { .. } | congest_iso::Error::SizeMismatch { .. })),
        ) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
