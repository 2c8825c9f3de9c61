//! Command-line front end: plan a query, run update streams, cross-check
//! against the reference evaluator, and benchmark per-update work.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use aivm::engine::{Engine, UpdateOutcome};
use aivm::enumerate::enumerate;
use aivm::oracle::OracleDb;
use aivm::planner::{build_plan, Plan, PlanError};
use aivm::query::{parse_query, Query};
use aivm::viewtree::{EnumerationLimits, ProjectionPolicy};
use aivm::Rat;
use clap::{Args, Parser, Subcommand};
use rand::distributions::Distribution;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_PLANNER_LIMIT: u8 = 3;

#[derive(Parser)]
#[command(name = "aivm", about = "Adaptive incremental view maintenance for join queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a query: compute widths and per-configuration view trees.
    Plan(PlanArgs),
    /// Load a plan, apply bulk data and an update stream, answer queries.
    Run(RunArgs),
    /// Replay a stream comparing the engine against the reference evaluator.
    Check(CheckArgs),
    /// Measure per-update work across database sizes and fit an exponent.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// File containing one query, e.g. `Q(A,B,C) = R(A,B), S(B,C)`.
    query: PathBuf,
    /// Write the plan file here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Cap on the number of view trees enumerated.
    #[arg(long, default_value_t = 20000)]
    trees: usize,
    /// Projection placement policy: `eager` or `eager-and-keep`.
    #[arg(long, default_value = "eager-and-keep")]
    policy: String,
    /// Pin the running threshold exponent (a rational such as 1/3) instead
    /// of the optimal one.
    #[arg(long)]
    epsilon: Option<String>,
    /// Planner worker threads. Accepted for forward compatibility; the
    /// planner currently runs single-threaded.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    plan: PathBuf,
    /// Bulk-load file: one `R a b` line per tuple.
    #[arg(long)]
    bulk: Option<PathBuf>,
    /// Update stream (`+R a b`, `-R a b`, `? enum|count|stats`); stdin if
    /// omitted.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// `ring` sums result multiplicities; `distinct` counts distinct
    /// result tuples (requires a full enumeration per query).
    #[arg(long, default_value = "ring")]
    count_mode: String,
}

#[derive(Args)]
struct CheckArgs {
    plan: PathBuf,
    #[arg(long)]
    bulk: Option<PathBuf>,
    /// Update stream to replay; a seeded random stream is generated if
    /// omitted.
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length of the generated stream when no stream file is given.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Compare engine and reference only every k-th update.
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Args)]
struct BenchArgs {
    plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated database sizes.
    #[arg(long, default_value = "1000,10000,100000")]
    sizes: String,
    /// Measured updates per size.
    #[arg(long, default_value_t = 500)]
    updates: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => cmd_run(a),
        Command::Check(a) => cmd_check(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn cmd_plan(a: PlanArgs) -> Result<u8, String> {
    let text = fs::read_to_string(&a.query).map_err(|e| format!("{}: {e}", a.query.display()))?;
    let q = parse_query(text.trim()).map_err(|e| e.to_string())?;
    let policy = ProjectionPolicy::from_str(&a.policy)?;
    let limits = EnumerationLimits { max_trees: a.trees, projection_policy: policy };
    let epsilon = match &a.epsilon {
        Some(s) => Some(parse_rat(s)?),
        None => None,
    };
    let plan = match build_plan(&q, &limits, epsilon) {
        Ok(p) => p,
        Err(PlanError::TreeLimit) => {
            eprintln!(
                "error: view tree enumeration exceeded {} trees; raise --trees",
                a.trees
            );
            return Ok(EXIT_PLANNER_LIMIT);
        }
        Err(e) => return Err(e.to_string()),
    };
    println!("query {}", q.pretty_print());
    println!("mw {}", plan.mw);
    println!("epsilon-star {}", plan.epsilon_star);
    println!("epsilon {}", plan.epsilon);
    println!("dw {}", plan.dw);
    println!("config  cost");
    for cp in &plan.configs {
        println!("{:6}  {}", cp.config.code(), describe(&cp.cost));
    }
    if let Some(out) = &a.output {
        fs::write(out, plan.serialize()).map_err(|e| format!("{}: {e}", out.display()))?;
        println!("plan written to {}", out.display());
    }
    Ok(0)
}

/// Human-readable piecewise form, e.g. `eps on [0,1/2]; 1-eps on [1/2,1]`.
fn describe(f: &aivm::piecewise::PiecewiseLinear) -> String {
    let breaks = f.breakpoints();
    f.pieces()
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{} on [{},{}]", p.serialize(), breaks[i], breaks[i + 1]))
        .collect::<Vec<_>>()
        .join("; ")
}

fn parse_rat(s: &str) -> Result<Rat, String> {
    Rat::from_str(s).map_err(|_| format!("not a rational: {s:?}"))
}

fn load_plan(path: &PathBuf) -> Result<Plan, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Plan::deserialize(&text).map_err(|e| e.to_string())
}

/// Parse `R a b` into the atom index and a layout-order tuple.
fn parse_tuple_line(
    engine: &mut Engine,
    relation: &str,
    tokens: &[&str],
) -> Result<(usize, Vec<i64>), String> {
    let atom = engine.atom_index(relation).map_err(|e| e.to_string())?;
    let declared: Vec<i64> = tokens.iter().map(|t| engine.interner.intern(t)).collect();
    let tuple = engine.layout_tuple(atom, &declared).map_err(|e| e.to_string())?;
    Ok((atom, tuple))
}

fn bulk_load(engine: &mut Engine, path: &PathBuf) -> Result<(), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut tuples = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let Some(rel) = it.next() else { continue };
        if rel.starts_with('#') {
            continue;
        }
        let rest: Vec<&str> = it.collect();
        let (atom, tuple) = parse_tuple_line(engine, rel, &rest)
            .map_err(|e| format!("{}:{}: {e}", path.display(), no + 1))?;
        tuples.push((atom, tuple));
    }
    engine.initial_build(&tuples);
    Ok(())
}

/// One parsed stream line.
enum StreamOp {
    Update { insert: bool, relation: String, tokens: Vec<String> },
    Enum,
    Count,
    Stats,
}

fn parse_stream_line(line: &str) -> Result<Option<StreamOp>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut it = line.split_whitespace();
    let head = it.next().unwrap();
    if head == "?" {
        return match it.next() {
            Some("enum") => Ok(Some(StreamOp::Enum)),
            Some("count") => Ok(Some(StreamOp::Count)),
            Some("stats") => Ok(Some(StreamOp::Stats)),
            other => Err(format!("unknown query {other:?}")),
        };
    }
    let (insert, relation) = match head.strip_prefix('+') {
        Some(r) => (true, r),
        None => match head.strip_prefix('-') {
            Some(r) => (false, r),
            None => return Err(format!("expected +R, -R or ?: {line:?}")),
        },
    };
    Ok(Some(StreamOp::Update {
        insert,
        relation: relation.to_string(),
        tokens: it.map(str::to_string).collect(),
    }))
}

/// Render an enumeration tuple in head-variable order.
fn render_result(engine: &Engine, tuple: &[i64]) -> String {
    engine
        .query
        .free_vars
        .iter()
        .map(|v| {
            let id = engine.query.var_id(v).expect("head var");
            engine.interner.render(tuple[id])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_run(a: RunArgs) -> Result<u8, String> {
    let distinct = match a.count_mode.as_str() {
        "ring" => false,
        "distinct" => true,
        other => return Err(format!("unknown count mode {other:?}")),
    };
    let mut engine = Engine::new(load_plan(&a.plan)?);
    if let Some(bulk) = &a.bulk {
        bulk_load(&mut engine, bulk)?;
    }
    let stdin = io::stdin();
    let reader: Box<dyn BufRead> = match &a.stream {
        Some(p) => Box::new(io::BufReader::new(
            fs::File::open(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
        None => Box::new(stdin.lock()),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in reader.lines() {
        let line = line.map_err(|e| e.to_string())?;
        let Some(op) = parse_stream_line(&line)? else { continue };
        match op {
            StreamOp::Update { insert, relation, tokens } => {
                let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
                let (_, tuple) = parse_tuple_line(&mut engine, &relation, &refs)?;
                let outcome = if insert {
                    engine.insert(&relation, &tuple)
                } else {
                    engine.delete(&relation, &tuple)
                }
                .map_err(|e| e.to_string())?;
                if outcome == UpdateOutcome::Rejected {
                    let _ = writeln!(out, "ERR reject");
                }
            }
            StreamOp::Enum => {
                let res = enumerate(&mut engine).map_err(|e| e.to_string())?;
                for (t, m) in &res.tuples {
                    let _ = writeln!(out, "{} # {}", render_result(&engine, t), m);
                }
            }
            StreamOp::Count => {
                let c = if distinct {
                    enumerate(&mut engine).map_err(|e| e.to_string())?.tuples.len() as i64
                } else {
                    engine.count()
                };
                let _ = writeln!(out, "{c}");
            }
            StreamOp::Stats => {
                let _ = writeln!(
                    out,
                    "N={} M={} work={} major={} minor={}",
                    engine.n,
                    engine.m,
                    engine.work.get(),
                    engine.stats.major,
                    engine.stats.minor
                );
            }
        }
    }
    Ok(0)
}

/// Skewed value sampler: Zipf-like over `1..=domain`.
struct Skew {
    domain: i64,
}

impl Skew {
    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        // Squaring a uniform sample concentrates mass on small values.
        let u: f64 = rand::distributions::Open01.sample(rng);
        1 + ((u * u) * self.domain as f64) as i64
    }
}

/// Generate one random update against the current reference state: mostly
/// skewed inserts, with deletes drawn from the live tuples.
fn random_update(
    q: &Query,
    db: &OracleDb,
    rng: &mut ChaCha8Rng,
    skew: &Skew,
) -> (bool, String, Vec<i64>) {
    let atom = rng.gen_range(0..q.atoms.len());
    let relation = q.atoms[atom].relation.clone();
    let arity = q.atoms[atom].schema.len();
    let live = db.relation(&relation);
    if !live.is_empty() && rng.gen_bool(0.3) {
        let idx = rng.gen_range(0..live.len());
        let tuple = live.keys().nth(idx).unwrap().clone();
        return (false, relation, tuple);
    }
    let tuple: Vec<i64> = (0..arity).map(|_| skew.sample(rng)).collect();
    (true, relation, tuple)
}

fn cmd_check(a: CheckArgs) -> Result<u8, String> {
    let mut engine = Engine::new(load_plan(&a.plan)?);
    let q = engine.query.clone();
    let mut db = OracleDb::new(&q);
    if let Some(bulk) = &a.bulk {
        bulk_load(&mut engine, bulk)?;
        for base in &engine.bases {
            let atom = base.atom;
            for (t, _) in base.full.iter() {
                db.apply(&q.atoms[atom].relation, t, 1).map_err(|e| e.to_string())?;
            }
        }
    }
    let every = a.every.max(1);
    let mut updates: Vec<(bool, String, Vec<i64>)> = Vec::new();
    match &a.stream {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            for line in text.lines() {
                let Some(op) = parse_stream_line(line)? else { continue };
                if let StreamOp::Update { insert, relation, tokens } = op {
                    let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
                    let (_, tuple) = parse_tuple_line(&mut engine, &relation, &refs)?;
                    updates.push((insert, relation, tuple));
                }
            }
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let skew = Skew { domain: (a.steps as i64 / 4).max(8) };
            // Pre-generation keeps generation and application independent of
            // engine internals; the reference state evolves as we go.
            let mut shadow = db.clone();
            for _ in 0..a.steps {
                let u = random_update(&q, &shadow, &mut rng, &skew);
                let _ = shadow.apply(&u.1, &u.2, if u.0 { 1 } else { -1 });
                updates.push(u);
            }
        }
    }
    for (step, (insert, relation, tuple)) in updates.iter().enumerate() {
        let delta = if *insert { 1 } else { -1 };
        let engine_applied = if *insert {
            engine.insert(relation, tuple)
        } else {
            engine.delete(relation, tuple)
        }
        .map_err(|e| e.to_string())?
            == UpdateOutcome::Applied;
        let oracle_applied = db.apply(relation, tuple, delta).map_err(|e| e.to_string())?;
        if engine_applied != oracle_applied {
            println!(
                "DIVERGED step {step}: engine applied={engine_applied}, reference applied={oracle_applied}"
            );
            return Ok(EXIT_DIVERGENCE);
        }
        if step % every != 0 {
            continue;
        }
        let expected: Vec<(Vec<i64>, i64)> =
            db.evaluate(&q).map_err(|e| e.to_string())?.into_iter().collect();
        let got = enumerate(&mut engine).map_err(|e| e.to_string())?;
        if got.tuples != expected {
            println!("DIVERGED step {step} after {}{relation} {:?}", if *insert { '+' } else { '-' }, tuple);
            dump_divergence(&engine, &expected, &got.tuples);
            return Ok(EXIT_DIVERGENCE);
        }
        let count: i64 = expected.iter().map(|(_, m)| m).sum();
        if engine.count() != count {
            println!(
                "DIVERGED step {step}: count {} vs reference {count}",
                engine.count()
            );
            return Ok(EXIT_DIVERGENCE);
        }
    }
    println!(
        "PASS {} updates, N={} M={} major={} minor={}",
        updates.len(),
        engine.n,
        engine.m,
        engine.stats.major,
        engine.stats.minor
    );
    Ok(0)
}

fn dump_divergence(engine: &Engine, expected: &[(Vec<i64>, i64)], got: &[(Vec<i64>, i64)]) {
    println!("  expected {} tuples, got {}", expected.len(), got.len());
    let exp: BTreeMap<_, _> = expected.iter().cloned().collect();
    let act: BTreeMap<_, _> = got.iter().cloned().collect();
    for (t, m) in &exp {
        if act.get(t) != Some(m) {
            println!(
                "  first difference: {} # {} vs {:?}",
                render_result(engine, t),
                m,
                act.get(t)
            );
            break;
        }
    }
    for (t, m) in &act {
        if !exp.contains_key(t) {
            println!("  spurious: {} # {}", render_result(engine, t), m);
            break;
        }
    }
    println!(
        "  state digest: N={} M={} work={} major={} minor={}",
        engine.n,
        engine.m,
        engine.work.get(),
        engine.stats.major,
        engine.stats.minor
    );
}

fn cmd_bench(a: BenchArgs) -> Result<u8, String> {
    let plan = load_plan(&a.plan)?;
    let q = plan.query.clone();
    let sizes: Vec<usize> = a
        .sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad size {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    println!("size     mean-work/update");
    for &n in &sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let skew = Skew { domain: (n as i64).max(8) };
        let mut engine = Engine::new(plan.clone());
        let mut db = OracleDb::new(&q);
        let mut bulk = Vec::new();
        while db.total_tuples() < n {
            let atom = rng.gen_range(0..q.atoms.len());
            let arity = q.atoms[atom].schema.len();
            let tuple: Vec<i64> = (0..arity).map(|_| skew.sample(&mut rng)).collect();
            if db.apply(&q.atoms[atom].relation, &tuple, 1).map_err(|e| e.to_string())? {
                bulk.push((atom, tuple));
            }
        }
        engine.initial_build(&bulk);
        let mut applied = 0u64;
        let mut work = 0u64;
        while applied < a.updates as u64 {
            let (insert, relation, tuple) = random_update(&q, &db, &mut rng, &skew);
            let before = engine.work.get();
            let outcome = if insert {
                engine.insert(&relation, &tuple)
            } else {
                engine.delete(&relation, &tuple)
            }
            .map_err(|e| e.to_string())?;
            if outcome == UpdateOutcome::Applied {
                db.apply(&relation, &tuple, if insert { 1 } else { -1 })
                    .map_err(|e| e.to_string())?;
                work += engine.work.get() - before;
                applied += 1;
            }
        }
        let mean = work as f64 / applied as f64;
        println!("{n:<8} {mean:.1}");
        points.push(((n as f64).ln(), mean.ln()));
    }
    let exponent = fit_slope(&points);
    println!("fitted exponent {exponent:.3} (reference mw {})", plan.mw);
    Ok(0)
}

/// Least-squares slope through (x, y) points.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
