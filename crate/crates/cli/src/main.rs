use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use polyrlt::bench::{compare, root_stats, Manifest};
use polyrlt::bnb::{solve, SolveOptions, Termination};
use polyrlt::generator::{generate_instance, random_base, GeneratorConfig};
use polyrlt::problem::{parse_problem, serialize_problem};
use polyrlt::reduction::{reduce, serialize_reduced, DEFAULT_CAP};
use polyrlt::{PolynomialProgram, ReductionError, Scheme};

const EXIT_RESOURCE: u8 = 2;
const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(name = "polyrlt", version, about = "RLT relaxations and branch-and-bound for box-constrained polynomial programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a program to a relative gap with spatial branch-and-bound.
    Solve(SolveArgs),
    /// Write the degree-reduced program produced by a scheme.
    Quadrify(QuadrifyArgs),
    /// Root relaxation size and value for one or all schemes.
    Stats(StatsArgs),
    /// Raise a base program to degree delta with random monomials.
    Generate(GenerateArgs),
    /// Run every configuration of a manifest on its instances.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SchemeArgs {
    /// baseline, s1, s2, s3 or quadrlt
    #[arg(long, default_value = "quadrlt")]
    scheme: Scheme,
    /// Target degree of the reduced program.
    #[arg(long, short = 'd', default_value_t = 2)]
    degree: usize,
    /// Maximum number of generated variables for schemes 2 and 3.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-3)]
    rel_gap: f64,
    /// Node limit.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct QuadrifyArgs {
    file: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    file: PathBuf,
    /// Scheme to report; all schemes when omitted.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long, short = 'd', default_value_t = 2)]
    degree: usize,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Base program file.
    #[arg(long, conflicts_with = "random_base", required_unless_present = "random_base")]
    base: Option<PathBuf>,
    /// Random degree-2 base, given as `n,density`.
    #[arg(long, value_parser = parse_random_base)]
    random_base: Option<(usize, f64)>,
    #[arg(long)]
    delta: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    manifest: PathBuf,
    /// Per-configuration summary.
    #[arg(long, default_value = "compare.csv")]
    csv: PathBuf,
    /// Full results.
    #[arg(long, default_value = "compare.json")]
    json: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn parse_random_base(s: &str) -> Result<(usize, f64), String> {
    let (n, dens) = s.split_once(',').ok_or("expected `n,density`")?;
    let n = n.trim().parse().map_err(|e| format!("bad n: {e}"))?;
    let dens = dens.trim().parse().map_err(|e| format!("bad density: {e}"))?;
    Ok((n, dens))
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, err: e.into() }
    }
}

fn parse_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_PARSE,
        err: e.into(),
    }
}

fn load(path: &Path) -> Result<PolynomialProgram, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_problem(&text).map_err(|e| parse_err(anyhow!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_solve(a: SolveArgs) -> Result<u8, Failure> {
    let p = load(&a.file)?;
    let opts = SolveOptions {
        scheme: a.scheme.scheme,
        d: a.scheme.degree,
        time_limit: a.time_limit,
        rel_gap: a.rel_gap,
        node_limit: a.nodes,
        threads: a.threads.max(1),
        cap: a.scheme.cap,
        ..SolveOptions::default()
    };
    let r = solve(&p, &opts);
    println!("termination  {:?}", r.termination);
    println!("upper bound  {}", r.upper_bound.map_or("none".into(), |v| v.to_string()));
    println!("lower bound  {}", r.lower_bound);
    println!("gap          {}", r.gap.map_or("NA".into(), |v| format!("{v:.3e}")));
    println!("nodes        {} (max depth {})", r.nodes, r.max_depth);
    println!("time         {:.3} s", r.wall_time);
    if let Some(x) = &r.incumbent {
        let xs: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
        println!("x            [{}]", xs.join(", "));
    }
    if let Some(m) = &r.message {
        println!("message      {m}");
    }
    if let Some(path) = &a.report {
        fs::write(path, r.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if r.termination == Termination::ResourceLimit { EXIT_RESOURCE } else { 0 })
}

fn run_quadrify(a: QuadrifyArgs) -> Result<u8, Failure> {
    let p = load(&a.file)?;
    match reduce(&p, a.scheme.scheme, a.scheme.degree, a.scheme.cap) {
        Ok(rp) => {
            emit(a.out.as_deref(), &serialize_reduced(&rp))?;
            Ok(0)
        }
        Err(e @ ReductionError::ResourceLimit { .. }) => Err(Failure {
            code: EXIT_RESOURCE,
            err: e.into(),
        }),
        Err(e) => Err(e.into()),
    }
}

fn run_stats(a: StatsArgs) -> Result<u8, Failure> {
    let p = load(&a.file)?;
    let schemes: Vec<Scheme> = a.scheme.map_or_else(|| Scheme::ALL.to_vec(), |s| vec![s]);
    let mut code = 0;
    let mut rows = Vec::new();
    if !a.json {
        println!("{:<10} {:>3} {:>8} {:>8} {:>14} {:>10}", "scheme", "d", "Nvars", "Ncons", "root", "time(s)");
    }
    for s in schemes {
        match root_stats(&p, s, a.degree, a.cap) {
            Ok(st) => {
                if !a.json {
                    println!(
                        "{:<10} {:>3} {:>8} {:>8} {:>14} {:>10.3}",
                        s.to_string(),
                        st.d,
                        st.nvars,
                        st.ncons,
                        st.root_value.map_or("NA".into(), |v| format!("{v:.6}")),
                        st.build_time + st.solve_time
                    );
                }
                rows.push(serde_json::to_value(&st)?);
            }
            Err(e) => {
                if e.is_resource_limit() {
                    code = EXIT_RESOURCE;
                } else if code == 0 {
                    code = 1;
                }
                if !a.json {
                    println!("{:<10} {:>3} {:>8} {:>8} {:>14}   {e}", s.to_string(), a.degree, "NA", "NA", "NA");
                }
                rows.push(serde_json::json!({"scheme": s, "d": a.degree, "error": e.to_string()}));
            }
        }
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    }
    Ok(code)
}

fn run_generate(a: GenerateArgs) -> Result<u8, Failure> {
    let base = match (&a.base, a.random_base) {
        (Some(path), _) => load(path)?,
        (None, Some((n, density))) => random_base(n, density, a.seed)?,
        (None, None) => unreachable!("clap requires one base"),
    };
    let p = generate_instance(&GeneratorConfig::new(base, a.delta, a.k, a.seed))?;
    let text = if a.json {
        polyrlt::problem::serialize_problem_json(&p)
    } else {
        serialize_problem(&p)
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

fn run_compare(a: CompareArgs) -> Result<u8, Failure> {
    let text = fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let m = Manifest::parse(&text).map_err(|e| parse_err(anyhow!("{}: {e}", a.manifest.display())))?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let instances = m.load_instances(dir).map_err(parse_err)?;
    let mut opts = m.options();
    opts.threads = a.threads.max(1);
    let cmp = compare(&instances, &m.configs, &opts);
    print!("{}", cmp.to_table());
    fs::write(&a.csv, cmp.to_csv()).with_context(|| format!("writing {}", a.csv.display()))?;
    fs::write(&a.json, cmp.to_json()).with_context(|| format!("writing {}", a.json.display()))?;
    let limited = cmp.results.iter().any(|r| r.termination == Termination::ResourceLimit);
    Ok(if limited { EXIT_RESOURCE } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Quadrify(a) => run_quadrify(a),
        Command::Stats(a) => run_stats(a),
        Command::Generate(a) => run_generate(a),
        Command::Compare(a) => run_compare(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
