//! Multi-scheme comparisons: per-instance solve results, geometric-mean
//! tables, root-node statistics and empirical size/bound frequencies.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use crate::bnb::{root_stats, RootError, RootStats};
use crate::bnb::{solve, SolveOptions, SolveReport, Termination};
use crate::generator::{generate_instance, random_base, GeneratorConfig};
use crate::problem::{parse_problem, PolynomialProgram, ProblemError};
use crate::reduction::{Scheme, DEFAULT_CAP};

/// Floor applied to gaps before taking geometric means.
pub const GAP_FLOOR: f64 = 1e-4;
/// Floor applied to times (seconds) before taking geometric means.
pub const TIME_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Config {
    pub scheme: Scheme,
    #[serde(default = "default_degree")]
    pub d: usize,
}

fn default_degree() -> usize {
    2
}

impl Config {
    pub fn new(scheme: Scheme, d: usize) -> Self {
        Config { scheme, d }
    }

    pub fn label(&self) -> String {
        match self.scheme {
            Scheme::Baseline => "baseline".into(),
            s => format!("{s}(d={})", self.d),
        }
    }
}

/// Geometric mean of `values` after flooring each at `floor`.
pub fn geometric_mean(values: &[f64], floor: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let s: f64 = values.iter().map(|v| v.max(floor).ln()).sum();
    Some((s / values.len() as f64).exp())
}

/// Percentage change of `value` with respect to `reference`.
pub fn pct_diff(value: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| 100.0 * (value - reference) / reference.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceResult {
    pub instance: String,
    pub config: Config,
    pub solved: bool,
    pub gap: Option<f64>,
    /// Wall time, or the budget when unsolved.
    pub time: f64,
    pub upper_bound: Option<f64>,
    pub lower_bound: f64,
    pub nodes: usize,
    pub termination: Termination,
    pub root: Option<RootStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub config: Config,
    pub label: String,
    pub instances: usize,
    pub solved: usize,
    /// Over instances with a gap; `None` (NA) when no instance has one.
    pub gmean_gap: Option<f64>,
    pub gmean_time: f64,
    pub pct_diff_gap: Option<f64>,
    pub pct_diff_time: Option<f64>,
    pub best_gap_count: usize,
    pub best_time_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootRow {
    pub config: Config,
    pub label: String,
    /// Instances whose root relaxation built and solved.
    pub available: usize,
    pub mean_opt: Option<f64>,
    pub mean_nvars: Option<f64>,
    pub mean_ncons: Option<f64>,
    pub pct_diff_opt: Option<f64>,
    pub pct_diff_nvars: Option<f64>,
    pub pct_diff_ncons: Option<f64>,
    pub best_opt_count: usize,
    pub best_nvars_count: usize,
    pub best_ncons_count: usize,
}

/// Share of instances (in percent) where an observation holds, with the
/// number of instances it was checked on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frequency {
    pub description: String,
    pub checked: usize,
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub budget: f64,
    pub rel_gap: f64,
    pub gap_floor: f64,
    pub time_floor: f64,
    pub instances: Vec<String>,
    pub results: Vec<InstanceResult>,
    pub rows: Vec<ComparisonRow>,
    pub root_rows: Vec<RootRow>,
    pub frequencies: Vec<Frequency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub budget: f64,
    pub rel_gap: f64,
    pub cap: usize,
    pub threads: usize,
    pub node_limit: Option<usize>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            budget: 3600.0,
            rel_gap: 1e-3,
            cap: DEFAULT_CAP,
            threads: 1,
            node_limit: None,
        }
    }
}

fn run_one(name: &str, p: &PolynomialProgram, config: Config, o: &CompareOptions) -> InstanceResult {
    let opts = SolveOptions {
        scheme: config.scheme,
        d: config.d,
        time_limit: o.budget,
        rel_gap: o.rel_gap,
        node_limit: o.node_limit,
        threads: o.threads,
        cap: o.cap,
        ..SolveOptions::default()
    };
    let r: SolveReport = solve(p, &opts);
    let solved = r.solved(o.rel_gap);
    InstanceResult {
        instance: name.to_string(),
        config,
        solved,
        gap: r.gap,
        time: if solved { r.wall_time } else { o.budget },
        upper_bound: r.upper_bound,
        lower_bound: r.lower_bound,
        nodes: r.nodes,
        termination: r.termination,
        root: r.root.filter(|s| s.root_value.is_some()),
    }
}

/// Runs every configuration on every instance, in input order.
pub fn compare(instances: &[(String, PolynomialProgram)], configs: &[Config], o: &CompareOptions) -> Comparison {
    let mut results = Vec::with_capacity(instances.len() * configs.len());
    for (name, p) in instances {
        for &c in configs {
            results.push(run_one(name, p, c, o));
        }
    }
    summarize(instances.iter().map(|(n, _)| n.clone()).collect(), configs, results, o)
}

/// Aggregates per-instance results into the comparison tables.
pub fn summarize(
    names: Vec<String>,
    configs: &[Config],
    results: Vec<InstanceResult>,
    o: &CompareOptions,
) -> Comparison {
    let get = |inst: &str, c: Config| results.iter().find(|r| r.instance == inst && r.config == c);
    let mut rows: Vec<ComparisonRow> = configs
        .iter()
        .map(|&c| {
            let mine: Vec<&InstanceResult> = results.iter().filter(|r| r.config == c).collect();
            let gaps: Vec<f64> = mine.iter().filter_map(|r| r.gap).collect();
            let times: Vec<f64> = mine.iter().map(|r| r.time).collect();
            ComparisonRow {
                config: c,
                label: c.label(),
                instances: mine.len(),
                solved: mine.iter().filter(|r| r.solved).count(),
                gmean_gap: geometric_mean(&gaps, GAP_FLOOR),
                gmean_time: geometric_mean(&times, TIME_FLOOR).unwrap_or(f64::NAN),
                pct_diff_gap: None,
                pct_diff_time: None,
                best_gap_count: 0,
                best_time_count: 0,
            }
        })
        .collect();
    let reference = reference_index(configs, |i| rows[i].gmean_gap.is_some());
    if let Some(ri) = reference {
        let (rg, rt) = (rows[ri].gmean_gap, rows[ri].gmean_time);
        for row in rows.iter_mut() {
            row.pct_diff_gap = row.gmean_gap.zip(rg).and_then(|(a, b)| pct_diff(a, b));
            row.pct_diff_time = pct_diff(row.gmean_time, rt);
        }
    }
    for name in &names {
        let gaps: Vec<Option<f64>> = configs
            .iter()
            .map(|&c| get(name, c).and_then(|r| r.gap).map(|g| g.max(GAP_FLOOR)))
            .collect();
        if let Some(i) = strict_best(&gaps, false) {
            rows[i].best_gap_count += 1;
        }
        let times: Vec<Option<f64>> = configs
            .iter()
            .map(|&c| get(name, c).filter(|r| r.solved).map(|r| r.time.max(TIME_FLOOR)))
            .collect();
        if let Some(i) = strict_best(&times, false) {
            rows[i].best_time_count += 1;
        }
    }

    let root_of = |inst: &str, c: Config| get(inst, c).and_then(|r| r.root.clone());
    let mut root_rows: Vec<RootRow> = configs
        .iter()
        .map(|&c| {
            let stats: Vec<RootStats> = names.iter().filter_map(|n| root_of(n, c)).collect();
            let mean = |f: &dyn Fn(&RootStats) -> f64| {
                (!stats.is_empty()).then(|| stats.iter().map(f).sum::<f64>() / stats.len() as f64)
            };
            RootRow {
                config: c,
                label: c.label(),
                available: stats.len(),
                mean_opt: mean(&|s| s.root_value.unwrap_or(f64::NAN)),
                mean_nvars: mean(&|s| s.nvars as f64),
                mean_ncons: mean(&|s| s.ncons as f64),
                pct_diff_opt: None,
                pct_diff_nvars: None,
                pct_diff_ncons: None,
                best_opt_count: 0,
                best_nvars_count: 0,
                best_ncons_count: 0,
            }
        })
        .collect();
    if let Some(ri) = reference_index(configs, |i| root_rows[i].available > 0) {
        let (ro, rv, rc) = (root_rows[ri].mean_opt, root_rows[ri].mean_nvars, root_rows[ri].mean_ncons);
        for row in root_rows.iter_mut() {
            row.pct_diff_opt = row.mean_opt.zip(ro).and_then(|(a, b)| pct_diff(a, b));
            row.pct_diff_nvars = row.mean_nvars.zip(rv).and_then(|(a, b)| pct_diff(a, b));
            row.pct_diff_ncons = row.mean_ncons.zip(rc).and_then(|(a, b)| pct_diff(a, b));
        }
    }
    for name in &names {
        let stats: Vec<Option<RootStats>> = configs.iter().map(|&c| root_of(name, c)).collect();
        let opts: Vec<Option<f64>> = stats.iter().map(|s| s.as_ref().and_then(|s| s.root_value)).collect();
        if let Some(i) = strict_best(&opts, true) {
            root_rows[i].best_opt_count += 1;
        }
        let nv: Vec<Option<f64>> = stats.iter().map(|s| s.as_ref().map(|s| s.nvars as f64)).collect();
        if let Some(i) = strict_best(&nv, false) {
            root_rows[i].best_nvars_count += 1;
        }
        let nc: Vec<Option<f64>> = stats.iter().map(|s| s.as_ref().map(|s| s.ncons as f64)).collect();
        if let Some(i) = strict_best(&nc, false) {
            root_rows[i].best_ncons_count += 1;
        }
    }

    let frequencies = frequencies(&names, configs, &root_of);
    Comparison {
        budget: o.budget,
        rel_gap: o.rel_gap,
        gap_floor: GAP_FLOOR,
        time_floor: TIME_FLOOR,
        instances: names,
        results,
        rows,
        root_rows,
        frequencies,
    }
}

/// The baseline configuration, or Scheme 1 when the baseline is missing or
/// has no usable values.
fn reference_index(configs: &[Config], usable: impl Fn(usize) -> bool) -> Option<usize> {
    let find = |s: Scheme| configs.iter().position(|c| c.scheme == s).filter(|&i| usable(i));
    find(Scheme::Baseline).or_else(|| find(Scheme::S1))
}

/// Index of the strictly best value (largest if `maximize`), `None` on ties
/// or when fewer than one value is present.
fn strict_best(values: &[Option<f64>], maximize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut tied = false;
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        let key = if maximize { -v } else { v };
        match best {
            None => best = Some((i, key)),
            Some((_, b)) if (key - b).abs() <= 1e-9 * (1.0 + b.abs()) => tied = true,
            Some((_, b)) if key < b => {
                best = Some((i, key));
                tied = false;
            }
            _ => {}
        }
    }
    if tied {
        None
    } else {
        best.map(|b| b.0)
    }
}

fn frequencies(
    names: &[String],
    configs: &[Config],
    root_of: &dyn Fn(&str, Config) -> Option<RootStats>,
) -> Vec<Frequency> {
    let degrees: Vec<usize> = {
        let mut d: Vec<usize> = configs.iter().filter(|c| c.scheme != Scheme::Baseline).map(|c| c.d).collect();
        d.sort();
        d.dedup();
        d
    };
    let has = |s: Scheme, d: usize| configs.contains(&Config::new(s, d));
    let baseline = configs.iter().find(|c| c.scheme == Scheme::Baseline).copied();
    let mut out = Vec::new();
    let mut push = |description: String, pairs: Vec<bool>| {
        let checked = pairs.len();
        let hits = pairs.iter().filter(|&&b| b).count();
        out.push(Frequency {
            description,
            checked,
            percent: (checked > 0).then(|| 100.0 * hits as f64 / checked as f64),
        });
    };
    for &d in &degrees {
        if has(Scheme::QuadRlt, d) && has(Scheme::S1, d) {
            let pairs = names
                .iter()
                .filter_map(|n| {
                    let a = root_of(n, Config::new(Scheme::QuadRlt, d))?.root_value?;
                    let b = root_of(n, Config::new(Scheme::S1, d))?.root_value?;
                    Some(a >= b - 1e-6 * (1.0 + b.abs()))
                })
                .collect();
            push(format!("root(quadrlt,d={d}) >= root(s1,d={d})"), pairs);
        }
        if let Some(base) = baseline {
            if has(Scheme::S1, d) {
                let pairs = names
                    .iter()
                    .filter_map(|n| {
                        let a = root_of(n, Config::new(Scheme::S1, d))?;
                        let b = root_of(n, base)?;
                        Some(a.nvars <= b.nvars && a.ncons <= b.ncons)
                    })
                    .collect();
                push(format!("Nvars and Ncons of s1(d={d}) <= baseline"), pairs);
            }
            if has(Scheme::S2, d) {
                let pairs = names
                    .iter()
                    .filter_map(|n| {
                        let a = root_of(n, base)?;
                        let b = root_of(n, Config::new(Scheme::S2, d))?;
                        Some(a.ncons <= b.ncons)
                    })
                    .collect();
                push(format!("Ncons of baseline <= s2(d={d})"), pairs);
            }
        }
    }
    out
}

impl Comparison {
    /// Size and root-bound orderings between schemes that every instance
    /// should satisfy; returns a description of each violation.
    pub fn ordering_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let configs: Vec<Config> = self.rows.iter().map(|r| r.config).collect();
        let root = |inst: &str, c: Config| {
            self.results
                .iter()
                .find(|r| r.instance == inst && r.config == c)
                .and_then(|r| r.root.clone())
        };
        let base = configs.iter().find(|c| c.scheme == Scheme::Baseline).copied();
        for inst in &self.instances {
            for &c in &configs {
                if c.scheme == Scheme::Baseline {
                    continue;
                }
                let at = |s: Scheme| {
                    if s == Scheme::Baseline {
                        base.and_then(|b| root(inst, b))
                    } else {
                        root(inst, Config::new(s, c.d)).filter(|_| configs.contains(&Config::new(s, c.d)))
                    }
                };
                if c.scheme != Scheme::QuadRlt {
                    continue;
                }
                let chain = [Scheme::QuadRlt, Scheme::S1, Scheme::S2, Scheme::S3];
                for w in chain.windows(2) {
                    if let (Some(a), Some(b)) = (at(w[0]), at(w[1])) {
                        if a.nvars > b.nvars || a.ncons > b.ncons {
                            out.push(format!(
                                "{inst} d={}: size {}({}, {}) > {}({}, {})",
                                c.d, w[0], a.nvars, a.ncons, w[1], b.nvars, b.ncons
                            ));
                        }
                    }
                }
                if let (Some(a), Some(b)) = (at(Scheme::Baseline), at(Scheme::S2)) {
                    if a.nvars > b.nvars {
                        out.push(format!("{inst} d={}: Nvars baseline {} > s2 {}", c.d, a.nvars, b.nvars));
                    }
                }
                let val = |s: Scheme| at(s).and_then(|r| r.root_value);
                for (lo, hi) in [
                    (Scheme::S1, Scheme::S2),
                    (Scheme::S2, Scheme::S3),
                    (Scheme::S2, Scheme::Baseline),
                ] {
                    if let (Some(a), Some(b)) = (val(lo), val(hi)) {
                        if a > b + 1e-6 * (1.0 + b.abs()) {
                            out.push(format!("{inst} d={}: root {lo} {a} > {hi} {b}", c.d));
                        }
                    }
                }
            }
        }
        out
    }

    /// Per-configuration summary as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "config,scheme,d,instances,solved,gmean_gap,gmean_time,pct_diff_gap,pct_diff_time,best_gap_count,best_time_count,\
root_available,mean_root_opt,mean_nvars,mean_ncons,pct_diff_opt,pct_diff_nvars,pct_diff_ncons,best_opt_count,best_nvars_count,best_ncons_count\n",
        );
        for (r, q) in self.rows.iter().zip(&self.root_rows) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.config.scheme,
                r.config.d,
                r.instances,
                r.solved,
                opt(r.gmean_gap),
                r.gmean_time,
                opt(r.pct_diff_gap),
                opt(r.pct_diff_time),
                r.best_gap_count,
                r.best_time_count,
                q.available,
                opt(q.mean_opt),
                opt(q.mean_nvars),
                opt(q.mean_ncons),
                opt(q.pct_diff_opt),
                opt(q.pct_diff_nvars),
                opt(q.pct_diff_ncons),
                q.best_opt_count,
                q.best_nvars_count,
                q.best_ncons_count
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    /// Aligned text tables: solve summary, root statistics, frequencies.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} instances, budget {} s, target gap {:e}; geometric means with gap floor {:e}, time floor {} s; unsolved time = budget",
            self.instances.len(),
            self.budget,
            self.rel_gap,
            self.gap_floor,
            self.time_floor
        )
        .unwrap();
        writeln!(
            out,
            "{:<14} {:>10} {:>9} {:>10} {:>9} {:>7} {:>6} {:>6}",
            "Scheme", "Gap", "%Diff", "Time", "%Diff", "Solved", "#Gap", "#Time"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<14} {:>10} {:>9} {:>10.2} {:>9} {:>7} {:>6} {:>6}",
                r.label,
                fmt_opt(r.gmean_gap, 4),
                fmt_opt(r.pct_diff_gap, 1),
                r.gmean_time,
                fmt_opt(r.pct_diff_time, 1),
                format!("{}/{}", r.solved, r.instances),
                r.best_gap_count,
                r.best_time_count
            )
            .unwrap();
        }
        out.push('\n');
        writeln!(
            out,
            "{:<14} {:>12} {:>8} {:>10} {:>8} {:>10} {:>8} {:>11}",
            "Root", "Opt", "%Diff", "Nvars", "%Diff", "Ncons", "%Diff", "Count(O/V/C)"
        )
        .unwrap();
        for r in &self.root_rows {
            writeln!(
                out,
                "{:<14} {:>12} {:>8} {:>10} {:>8} {:>10} {:>8} {:>11}",
                r.label,
                fmt_opt(r.mean_opt, 4),
                fmt_opt(r.pct_diff_opt, 1),
                fmt_opt(r.mean_nvars, 1),
                fmt_opt(r.pct_diff_nvars, 1),
                fmt_opt(r.mean_ncons, 1),
                fmt_opt(r.pct_diff_ncons, 1),
                format!("{}/{}/{}", r.best_opt_count, r.best_nvars_count, r.best_ncons_count)
            )
            .unwrap();
        }
        if !self.frequencies.is_empty() {
            out.push('\n');
            for f in &self.frequencies {
                writeln!(out, "{:<44} {:>7} of {}", f.description, fmt_opt(f.percent, 1) + "%", f.checked).unwrap();
            }
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.prec$}"))
}

// ---------------------------------------------------------------------------
// manifest

/// Generated instance set: `count` instances from one random base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub count: usize,
    /// `(n, density)` of the random degree-2 base.
    pub random_base: (usize, f64),
    pub delta: usize,
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Input of the `compare` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub instances: Vec<PathBuf>,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
    pub configs: Vec<Config>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_rel_gap")]
    pub rel_gap: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_budget() -> f64 {
    3600.0
}

fn default_rel_gap() -> f64 {
    1e-3
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, ProblemError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ProblemError::Json(e.to_string()))?;
        if m.configs.is_empty() || (m.instances.is_empty() && m.generate.is_none()) {
            return Err(ProblemError::InvalidConfig(
                "manifest needs at least one config and one instance".into(),
            ));
        }
        Ok(m)
    }

    /// Loads instance files (relative to `dir`) and generates the requested set.
    pub fn load_instances(&self, dir: &Path) -> Result<Vec<(String, PolynomialProgram)>, ManifestError> {
        let mut out = Vec::new();
        for path in &self.instances {
            let full = if path.is_absolute() { path.clone() } else { dir.join(path) };
            let text = std::fs::read_to_string(&full).map_err(|e| ManifestError::Io(full.display().to_string(), e.to_string()))?;
            let p = parse_problem(&text).map_err(|e| ManifestError::Problem(full.display().to_string(), e))?;
            out.push((path.display().to_string(), p));
        }
        if let Some(g) = &self.generate {
            out.extend(generate_set(g).map_err(|e| ManifestError::Problem("generate".into(), e))?);
        }
        Ok(out)
    }

    pub fn options(&self) -> CompareOptions {
        CompareOptions {
            budget: self.budget,
            rel_gap: self.rel_gap,
            cap: self.cap,
            ..CompareOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("{0}: {1}")]
    Problem(String, ProblemError),
}

/// `count` instances raised from one random base, seeds `seed..seed+count`.
pub fn generate_set(g: &GenerateSpec) -> Result<Vec<(String, PolynomialProgram)>, ProblemError> {
    let (n, density) = g.random_base;
    let base = random_base(n, density, g.seed)?;
    (0..g.count)
        .map(|i| {
            let seed = g.seed + i as u64;
            let p = generate_instance(&GeneratorConfig::new(base.clone(), g.delta, g.k, seed))?;
            Ok((format!("gen-d{}-k{}-s{seed}", g.delta, g.k), p))
        })
        .collect()
}
