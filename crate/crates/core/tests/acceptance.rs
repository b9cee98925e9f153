use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polyrlt::bench::{compare, generate_set, CompareOptions, Config, GenerateSpec};
use polyrlt::bnb::{root_stats, solve, SolveOptions, Termination};
use polyrlt::generator::{generate_instance, random_base, GeneratorConfig};
use polyrlt::problem::{evaluate, parse_problem};
use polyrlt::rlt::RowTag;
use polyrlt::{build_relaxation, reduce, Constraint, Monomial, Multiset, Polynomial, PolynomialProgram, Scheme, Sense};

const CAP: usize = 3000;
const ROOT_TOL: f64 = 1e-6;

fn example(name: &str) -> PolynomialProgram {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name);
    parse_problem(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sizes(p: &PolynomialProgram, s: Scheme, d: usize) -> Option<(usize, usize)> {
    let rp = reduce(p, s, d, CAP).ok()?;
    let rel = build_relaxation(&rp).ok()?;
    Some((rel.num_vars(), rel.num_constraints()))
}

fn root(p: &PolynomialProgram, s: Scheme, d: usize) -> Option<f64> {
    root_stats(p, s, d, CAP).ok()?.root_value
}

/// Prints the verdict line and fails the test on a violation.
fn report(id: u32, what: &str, failures: &[String], elapsed: Duration, limit: Option<f64>) {
    let mut failures = failures.to_vec();
    if let Some(limit) = limit {
        if elapsed.as_secs_f64() >= limit {
            failures.push(format!("runtime {:.1}s over the {limit}s limit", elapsed.as_secs_f64()));
        }
    }
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {verdict}: {what} ({:.2}s)", elapsed.as_secs_f64());
    for f in failures.iter().take(20) {
        println!("    {f}");
    }
    assert!(failures.is_empty(), "criterion {id}: {} violation(s), first: {}", failures.len(), failures[0]);
}

fn expect(failures: &mut Vec<String>, label: &str, got: impl std::fmt::Debug, want: impl std::fmt::Debug) {
    let (g, w) = (format!("{got:?}"), format!("{want:?}"));
    if g != w {
        failures.push(format!("{label}: got {g}, expected {w}"));
    }
}

#[test]
fn criterion_01_ex1_sizes() {
    let t = Instant::now();
    let p = example("ex1.poly");
    let mut f = Vec::new();
    expect(&mut f, "baseline (Ncons, Nvars)", sizes(&p, Scheme::Baseline, 2).map(|s| (s.1, s.0)), Some((8, 7)));
    expect(&mut f, "scheme 1 (Ncons, Nvars)", sizes(&p, Scheme::S1, 2).map(|s| (s.1, s.0)), Some((10, 6)));
    report(1, "Ex1 baseline 8/7 and scheme 1 10/6 constraints/variables", &f, t.elapsed(), Some(1.0));
}

#[test]
fn criterion_02_ex2_constraint_flip() {
    let t = Instant::now();
    let p = example("ex2.poly");
    let mut f = Vec::new();
    expect(&mut f, "baseline Ncons", sizes(&p, Scheme::Baseline, 2).map(|s| s.1), Some(16));
    expect(&mut f, "scheme 1 Ncons", sizes(&p, Scheme::S1, 2).map(|s| s.1), Some(15));
    report(2, "Ex2 baseline 16 vs scheme 1 15 constraints", &f, t.elapsed(), None);
}

#[test]
fn criterion_03_ex3_variable_flip() {
    let t = Instant::now();
    let p = example("ex3.poly");
    let mut f = Vec::new();
    expect(&mut f, "baseline Nvars", sizes(&p, Scheme::Baseline, 2).map(|s| s.0), Some(7));
    expect(&mut f, "scheme 1 Nvars", sizes(&p, Scheme::S1, 2).map(|s| s.0), Some(9));
    report(3, "Ex3 baseline 7 vs scheme 1 9 variables", &f, t.elapsed(), None);
}

#[test]
fn criterion_04_ex4_quadrlt_deltas() {
    let t = Instant::now();
    let p = example("ex4.poly");
    let mut f = Vec::new();
    match (sizes(&p, Scheme::S1, 2), sizes(&p, Scheme::QuadRlt, 2)) {
        (Some(s1), Some(qr)) => {
            expect(&mut f, "Ncons(S1) - Ncons(QR)", s1.1 as i64 - qr.1 as i64, 4);
            expect(&mut f, "Nvars(S1) - Nvars(QR)", s1.0 as i64 - qr.0 as i64, 1);
        }
        other => f.push(format!("builds failed: {other:?}")),
    }
    report(4, "Ex4 QUAD-RLT has 4 fewer constraints and 1 fewer variable than scheme 1", &f, t.elapsed(), None);
}

fn expect_close(f: &mut Vec<String>, label: &str, got: Option<f64>, want: f64, tol: f64) {
    match got {
        Some(v) if (v - want).abs() <= tol => {}
        other => f.push(format!("{label}: got {other:?}, expected {want} +- {tol}")),
    }
}

#[test]
fn criterion_05_ex5_root_values() {
    let t = Instant::now();
    let p = example("ex5.poly");
    let mut f = Vec::new();
    expect_close(&mut f, "scheme 1 root", root(&p, Scheme::S1, 2), -38.0, 0.01);
    expect_close(&mut f, "QUAD-RLT root", root(&p, Scheme::QuadRlt, 2), -43.81, 0.01);
    report(5, "Ex5 roots scheme 1 = -38, QUAD-RLT = -43.81 (+- 0.01)", &f, t.elapsed(), None);
}

#[test]
fn criterion_06_ex4_root_values() {
    let t = Instant::now();
    let p = example("ex4.poly");
    let mut f = Vec::new();
    expect_close(&mut f, "QUAD-RLT root", root(&p, Scheme::QuadRlt, 2), 0.0, 1e-6);
    expect_close(&mut f, "scheme 1 root", root(&p, Scheme::S1, 2), -0.5, 1e-6);
    report(6, "Ex4 roots QUAD-RLT = 0, scheme 1 = -0.5 (+- 1e-6)", &f, t.elapsed(), None);
}

struct Case {
    name: String,
    p: PolynomialProgram,
    degrees: Vec<usize>,
}

/// 60 generated instances with n in 2..=6, delta in 3..=6, k in {1, 3}.
fn property_cases() -> Vec<Case> {
    (0..60u64)
        .map(|seed| {
            let n = 2 + (seed % 5) as usize;
            let delta = 3 + ((seed / 5) % 4) as usize;
            let k = if seed % 2 == 0 { 1 } else { 3 };
            let base = random_base(n, 0.5, seed).unwrap();
            let p = generate_instance(&GeneratorConfig::new(base, delta, k, seed)).unwrap();
            let degrees = [2, 3, 4].into_iter().filter(|&d| d < delta).collect();
            Case {
                name: format!("n{n}-delta{delta}-k{k}-s{seed}"),
                p,
                degrees,
            }
        })
        .collect()
}

#[test]
fn criterion_07_size_orderings() {
    let t = Instant::now();
    let mut f = Vec::new();
    let mut checked = 0;
    for c in property_cases() {
        let base = sizes(&c.p, Scheme::Baseline, 2);
        for &d in &c.degrees {
            let chain: Vec<(Scheme, Option<(usize, usize)>)> = [Scheme::QuadRlt, Scheme::S1, Scheme::S2, Scheme::S3]
                .into_iter()
                .map(|s| (s, sizes(&c.p, s, d)))
                .collect();
            for pair in chain.windows(2) {
                if let ((sa, Some(a)), (sb, Some(b))) = (pair[0], pair[1]) {
                    checked += 1;
                    if a.0 > b.0 || a.1 > b.1 {
                        f.push(format!("{} d={d}: {sa} (Nvars, Ncons) {a:?} exceeds {sb} {b:?}", c.name));
                    }
                }
            }
            if let (Some(b), Some(s2)) = (base, chain[2].1) {
                checked += 1;
                if b.0 > s2.0 {
                    f.push(format!("{} d={d}: Nvars baseline {} > s2 {}", c.name, b.0, s2.0));
                }
            }
        }
    }
    println!("    {checked} comparisons on 60 instances");
    report(7, "Nvars/Ncons orderings QR <= S1 <= S2 <= S3 and Nvars(baseline) <= Nvars(S2)", &f, t.elapsed(), Some(300.0));
}

fn not_above(a: f64, b: f64) -> bool {
    a <= b + ROOT_TOL * b.abs().max(1.0)
}

#[test]
fn criterion_08_root_orderings() {
    let t = Instant::now();
    let mut f = Vec::new();
    let mut checked = 0;
    for c in property_cases() {
        let base = root(&c.p, Scheme::Baseline, 2);
        for &d in &c.degrees {
            let v: Vec<Option<f64>> = [Scheme::S1, Scheme::S2, Scheme::S3].into_iter().map(|s| root(&c.p, s, d)).collect();
            let pairs = [("s1", v[0], "s2", v[1]), ("s2", v[1], "s3", v[2]), ("s2", v[1], "baseline", base)];
            for (na, a, nb, b) in pairs {
                if let (Some(a), Some(b)) = (a, b) {
                    checked += 1;
                    if !not_above(a, b) {
                        f.push(format!("{} d={d}: root {na} {a} > {nb} {b}", c.name));
                    }
                }
            }
        }
    }
    println!("    {checked} comparisons on 60 instances");
    report(8, "root values S1 <= S2 <= S3 and S2 <= baseline (1e-6)", &f, t.elapsed(), None);
}

/// Single monomial over `size` distinct variables of `n`, plus `r` linear rows.
fn single_monomial(n: usize, size: usize, r: usize, rng: &mut ChaCha8Rng) -> PolynomialProgram {
    let bounds: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let l = rng.gen_range(0.0..2.0);
            (l, l + rng.gen_range(0.5..3.0))
        })
        .collect();
    let objective = Polynomial::monomial(rng.gen_range(1.0..5.0), Multiset::from_atoms(0..size as u32));
    let mut p = PolynomialProgram::with_box(&bounds, objective).unwrap();
    for _ in 0..r {
        let row = Polynomial::from_monomials((0..n as u32).map(|j| Monomial::new(rng.gen_range(-1.0..1.0), Multiset::from_atoms([j]))));
        p.constraints.push(Constraint::new(row, Sense::Ge, -10.0));
    }
    p
}

#[test]
fn criterion_09_single_monomial_counts() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut f = Vec::new();
    for size in [4usize, 5, 6] {
        for (n, r) in [(size, 0), (size + 1, 1), (size + 2, 3)] {
            let p = single_monomial(n, size, r, &mut rng);
            let label = format!("|J|={size} n={n} R={r}");
            let (s1, base) = (sizes(&p, Scheme::S1, 2), sizes(&p, Scheme::Baseline, 2));
            expect(&mut f, &format!("{label} Nvars(S1)"), s1.map(|s| s.0), Some(n + 2 * (size - 1)));
            expect(&mut f, &format!("{label} Ncons(S1)"), s1.map(|s| s.1), Some(r + 5 * (size - 1)));
            if let (Some(s1), Some(b)) = (s1, base) {
                if s1.0 > b.0 || s1.1 > b.1 {
                    f.push(format!("{label}: S1 {s1:?} exceeds baseline {b:?}"));
                }
            }
        }
    }
    report(9, "single monomial: Nvars(S1) = n + 2(|J|-1), Ncons(S1) = R + 5(|J|-1), both <= baseline", &f, t.elapsed(), None);
}

fn random_multilinear(seed: u64) -> PolynomialProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let n = rng.gen_range(2..=5usize);
    let delta = rng.gen_range(3..=4usize).min(n);
    let bounds: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let l = rng.gen_range(0.0..2.0);
            (l, l + rng.gen_range(0.5..2.5))
        })
        .collect();
    let mut obj = Polynomial::zero();
    for j in 0..n as u32 {
        obj.add_term(rng.gen_range(-10.0..10.0), Multiset::from_atoms([j]));
    }
    for size in 2..=delta {
        for _ in 0..2 {
            let mut vars: Vec<u32> = (0..n as u32).collect();
            for i in 0..size {
                let k = rng.gen_range(i..n);
                vars.swap(i, k);
            }
            obj.add_term(rng.gen_range(-10.0..10.0), Multiset::from_atoms(vars[..size].iter().copied()));
        }
    }
    PolynomialProgram::with_box(&bounds, obj).unwrap()
}

/// Minimum over the 2^n box vertices; exact for multilinear objectives.
fn vertex_oracle(p: &PolynomialProgram) -> f64 {
    let b = p.bounds();
    (0..1usize << b.len())
        .map(|mask| {
            let x: Vec<f64> = b.iter().enumerate().map(|(j, &(l, u))| if mask >> j & 1 == 1 { u } else { l }).collect();
            p.evaluate_objective(&x).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_10_global_optimality() {
    let t = Instant::now();
    let mut f = Vec::new();
    let mut cases: Vec<(String, PolynomialProgram, f64)> =
        (0..20).map(|s| random_multilinear(s)).map(|p| { let o = vertex_oracle(&p); (String::new(), p, o) }).collect();
    for (i, c) in cases.iter_mut().enumerate() {
        c.0 = format!("ml{i}");
    }
    let ex5 = example("ex5.poly");
    expect_close(&mut f, "Ex5 vertex oracle", Some(vertex_oracle(&ex5)), -38.0, 1e-9);
    cases.push(("ex5".into(), ex5, -38.0));
    for (name, p, oracle) in &cases {
        for s in Scheme::ALL {
            let r = solve(p, &SolveOptions { scheme: s, d: 2, time_limit: 60.0, cap: CAP, ..SolveOptions::default() });
            let tol = 1e-3 * oracle.abs().max(r.gap_floor);
            match r.upper_bound {
                Some(ub) if r.termination == Termination::Optimal && (ub - oracle).abs() <= tol && r.lower_bound <= oracle + tol => {}
                _ => f.push(format!(
                    "{name} {s}: {:?} ub {:?} lb {} oracle {oracle}",
                    r.termination, r.upper_bound, r.lower_bound
                )),
            }
        }
    }
    report(10, "21 multilinear instances x 5 schemes match the vertex oracle (rel 1e-3)", &f, t.elapsed(), Some(600.0));
}

fn semantic_cases() -> Vec<(String, PolynomialProgram, Vec<usize>)> {
    let mut cases: Vec<_> = (1..=5).map(|i| (format!("ex{i}"), example(&format!("ex{i}.poly")), vec![2])).collect();
    for seed in 0..6u64 {
        let base = random_base(3 + (seed % 3) as usize, 0.5, seed).unwrap();
        let p = generate_instance(&GeneratorConfig::new(base, 5, 1 + (seed % 2) as usize * 2, seed)).unwrap();
        cases.push((format!("gen{seed}"), p, vec![2, 3, 4]));
    }
    cases
}

fn random_point(rng: &mut ChaCha8Rng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter().map(|&(l, u)| rng.gen_range(l..=u)).collect()
}

#[test]
fn criterion_11_semantics() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut f = Vec::new();
    for (name, p, degrees) in semantic_cases() {
        let b = p.bounds();
        for s in Scheme::ALL {
            for &d in &degrees {
                let Ok(rp) = reduce(&p, s, d, CAP) else { continue };
                let rel = build_relaxation(&rp).unwrap();
                for _ in 0..100 {
                    let x = random_point(&mut rng, &b);
                    let aux = rp.lift(&x);
                    let val = rp.valuation(&x, &aux);
                    let want = p.evaluate_objective(&x).unwrap();
                    let got = rp.objective.evaluate_with(&val);
                    if (got - want).abs() > 1e-9 * want.abs().max(1.0) {
                        f.push(format!("{name} {s} d={d}: objective {got} vs source {want} at {x:?}"));
                    }
                    for (c, src) in rp.constraints.iter().zip(&p.constraints) {
                        let (g, w) = (c.poly.evaluate_with(&val), evaluate(&src.poly, &x).unwrap());
                        if (g - w).abs() > 1e-9 * w.abs().max(1.0) {
                            f.push(format!("{name} {s} d={d}: constraint {g} vs {w}"));
                        }
                    }
                    for row in &rp.defining {
                        let v = row.constraint().poly.evaluate_with(&val);
                        if v.abs() > 1e-9 * aux[row.aux as usize].abs().max(1.0) {
                            f.push(format!("{name} {s} d={d}: defining row of q{} off by {v}", row.aux));
                        }
                    }
                    let lifted = rel.lift(&x);
                    for row in &rel.constraints {
                        if let RowTag::BoundFactor { .. } = row.tag {
                            let act = row.activity(&lifted) - row.rhs;
                            let scale = row.coeffs.iter().fold(row.rhs.abs(), |m, e| m.max((e.1 * lifted[e.0]).abs())).max(1.0);
                            if act < -1e-9 * scale {
                                f.push(format!("{name} {s} d={d}: bound-factor row {:?} negative ({act})", row.tag));
                            }
                        }
                    }
                }
            }
        }
    }
    report(11, "reduced programs reproduce source values; bound-factor rows nonnegative when lifted", &f, t.elapsed(), None);
}

#[test]
fn criterion_12_compare_pipeline() {
    let t = Instant::now();
    let set = generate_set(&GenerateSpec {
        count: 5,
        random_base: (4, 0.5),
        delta: 10,
        k: 1,
        seed: 1,
    })
    .unwrap();
    let configs: Vec<Config> = [Scheme::Baseline, Scheme::S1, Scheme::S2, Scheme::S3, Scheme::QuadRlt]
        .into_iter()
        .map(|s| Config::new(s, 2))
        .collect();
    let opts = CompareOptions {
        budget: 60.0,
        ..CompareOptions::default()
    };
    let cmp = compare(&set, &configs, &opts);
    print!("{}", cmp.to_table());
    let mut f = cmp.ordering_violations();
    expect(&mut f, "result count", cmp.results.len(), set.len() * configs.len());
    expect(&mut f, "summary rows", cmp.rows.len(), configs.len());
    expect(&mut f, "frequency lines", cmp.frequencies.len(), 3);
    report(12, "compare on 5 generated instances (delta 10, 60 s) completes with consistent orderings", &f, t.elapsed(), None);
}
