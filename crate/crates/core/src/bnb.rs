//! Best-bound RLT branch-and-bound over the original variables' box.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::algebra::VarKey;
use crate::lp::{backend_from_env, solve_with, LpBackend, LpError, LpStatus};
use crate::problem::PolynomialProgram;
use crate::reduction::{reduce, ReducedProgram, ReductionError, Scheme, DEFAULT_CAP};
use crate::rlt::{build_relaxation_shared, LinVarId, LinearRelaxation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GapError {
    #[error("no incumbent")]
    NoIncumbent,
    #[error("upper bound {ub} below lower bound {lb}")]
    NumericalFailure { ub: f64, lb: f64 },
}

/// `(ub - lb) / |ub|`, with `|ub|` floored at `floor`.
pub fn compute_gap(ub: Option<f64>, lb: f64, floor: f64) -> Result<f64, GapError> {
    let ub = ub.ok_or(GapError::NoIncumbent)?;
    if ub < lb - 1e-9 * (1.0 + ub.abs()) {
        return Err(GapError::NumericalFailure { ub, lb });
    }
    Ok(((ub - lb) / ub.abs().max(floor)).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BranchError {
    #[error("every product identity holds at the LP point")]
    NoViolation,
}

/// Identity violation of every relaxation column that stands for a product:
/// `(atoms, |value - Π atom values|)`.
fn identity_violations<'a>(
    rel: &'a LinearRelaxation,
    values: &'a [f64],
) -> impl Iterator<Item = (crate::algebra::Multiset, f64)> + 'a {
    let atom_val = move |k: VarKey| match k {
        VarKey::Atom(j) => values[rel.atom_column(j as usize)],
        VarKey::Aux(_) => unreachable!(),
    };
    rel.columns().iter().enumerate().filter_map(move |(c, id)| {
        let product = match id {
            LinVarId::Var(VarKey::Atom(_)) => return None,
            LinVarId::Var(VarKey::Aux(_)) | LinVarId::Rlt(_) => rel.atom_monomial(c),
        };
        let v = (values[c] - product.product(atom_val)).abs();
        Some((product, v))
    })
}

/// Variable with the largest summed identity violation and its branch point
/// `clamp(x_j, l + 0.1 w, u - 0.1 w)`. Ties go to the smaller index.
pub fn select_branching_variable(
    values: &[f64],
    rel: &LinearRelaxation,
    eps: f64,
) -> Result<(usize, f64), BranchError> {
    let n = rel.box_bounds.len();
    let mut theta = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for (m, v) in identity_violations(rel, values) {
        worst = worst.max(v);
        for k in m.keys() {
            if let VarKey::Atom(j) = k {
                theta[j as usize] += v;
            }
        }
    }
    if worst <= eps {
        return Err(BranchError::NoViolation);
    }
    let mut best: Option<usize> = None;
    for j in 0..n {
        let (l, u) = rel.box_bounds[j];
        if u - l <= 0.0 || theta[j] <= 0.0 {
            continue;
        }
        if best.is_none_or(|b| theta[j] > theta[b]) {
            best = Some(j);
        }
    }
    let j = best.ok_or(BranchError::NoViolation)?;
    let (l, u) = rel.box_bounds[j];
    let w = u - l;
    let x = values[rel.atom_column(j)];
    Ok((j, x.clamp(l + 0.1 * w, u - 0.1 * w)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub scheme: Scheme,
    pub d: usize,
    /// Seconds.
    pub time_limit: f64,
    pub rel_gap: f64,
    pub node_limit: Option<usize>,
    pub gap_floor: f64,
    /// Identity violations at or below this are treated as exact.
    pub violation_eps: f64,
    /// Feasibility tolerance for accepting an LP point as an incumbent.
    pub feas_tol: f64,
    /// Boxes with every side below this are fathomed.
    pub min_diameter: f64,
    pub threads: usize,
    pub cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            scheme: Scheme::QuadRlt,
            d: 2,
            time_limit: 3600.0,
            rel_gap: 1e-3,
            node_limit: None,
            gap_floor: 1e-6,
            violation_eps: 1e-6,
            feas_tol: 1e-6,
            min_diameter: 1e-7,
            threads: 1,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gap target reached or tree exhausted.
    Optimal,
    Infeasible,
    TimeLimit,
    NodeLimit,
    ResourceLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootStats {
    pub scheme: Scheme,
    pub d: usize,
    pub nvars: usize,
    pub ncons: usize,
    /// `None` when the LP could not be solved.
    pub root_value: Option<f64>,
    pub build_time: f64,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub d: usize,
    pub incumbent: Option<Vec<f64>>,
    pub upper_bound: Option<f64>,
    pub lower_bound: f64,
    /// `None` without an incumbent.
    pub gap: Option<f64>,
    pub gap_floor: f64,
    pub nodes: usize,
    pub max_depth: usize,
    pub wall_time: f64,
    pub root: Option<RootStats>,
    pub termination: Termination,
    pub message: Option<String>,
}

impl SolveReport {
    pub fn solved(&self, rel_gap: f64) -> bool {
        self.termination == Termination::Optimal && self.gap.is_some_and(|g| g <= rel_gap)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Vec<(f64, f64)>,
    lb: f64,
    depth: usize,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lb
            .total_cmp(&self.lb)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Outcome {
    Infeasible,
    Failed { msg: String, too_large: bool },
    Solved {
        lp_value: f64,
        point: Vec<f64>,
        branch: Option<(usize, f64)>,
        root: Option<(usize, usize, f64, f64)>,
    },
}

struct Shared<'a> {
    p: &'a PolynomialProgram,
    rp: Arc<ReducedProgram>,
    opts: SolveOptions,
    backend: &'a dyn LpBackend,
}

fn process(sh: &Shared<'_>, node: &Node) -> Outcome {
    let t0 = Instant::now();
    let rel = match build_relaxation_shared(sh.rp.clone(), &node.bounds) {
        Ok(r) => r,
        Err(e) => return Outcome::Failed { msg: e.to_string(), too_large: false },
    };
    let build = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let sol = match solve_with(sh.backend, &rel, None) {
        Ok(s) => s,
        Err(e) => {
            let too_large = matches!(e, LpError::TooLarge { .. });
            return Outcome::Failed { msg: e.to_string(), too_large };
        }
    };
    let solve = t1.elapsed().as_secs_f64();
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Outcome::Infeasible,
        s => {
            return Outcome::Failed {
                msg: format!("LP status {s:?}"),
                too_large: false,
            }
        }
    }
    let point: Vec<f64> = (0..sh.p.n())
        .map(|j| {
            let (l, u) = node.bounds[j];
            sol.values[rel.atom_column(j)].clamp(l, u)
        })
        .collect();
    let branch = select_branching_variable(&sol.values, &rel, sh.opts.violation_eps).ok();
    Outcome::Solved {
        lp_value: sol.objective,
        point,
        branch,
        root: (node.depth == 0).then_some((rel.num_vars(), rel.num_constraints(), build, solve)),
    }
}

fn fathomable(lb: f64, ub: Option<f64>, rel_gap: f64, floor: f64) -> bool {
    ub.is_some_and(|ub| lb >= ub - rel_gap * ub.abs().max(floor))
}

/// Runs branch-and-bound with the bundled LP backend (or the one named in
/// the environment).
pub fn solve(p: &PolynomialProgram, opts: &SolveOptions) -> SolveReport {
    match backend_from_env() {
        Ok(b) => solve_with_backend(p, opts, b.as_ref()),
        Err(e) => failed_report(opts, Termination::NumericalFailure, e.to_string(), 0.0),
    }
}

fn failed_report(opts: &SolveOptions, t: Termination, msg: String, wall: f64) -> SolveReport {
    SolveReport {
        scheme: opts.scheme,
        d: opts.d,
        incumbent: None,
        upper_bound: None,
        lower_bound: f64::NEG_INFINITY,
        gap: None,
        gap_floor: opts.gap_floor,
        nodes: 0,
        max_depth: 0,
        wall_time: wall,
        root: None,
        termination: t,
        message: Some(msg),
    }
}

pub fn solve_with_backend(p: &PolynomialProgram, opts: &SolveOptions, backend: &dyn LpBackend) -> SolveReport {
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(opts.time_limit.max(0.0));
    let rp = match reduce(p, opts.scheme, opts.d, opts.cap) {
        Ok(rp) => Arc::new(rp),
        Err(e @ ReductionError::ResourceLimit { .. }) => {
            return failed_report(opts, Termination::ResourceLimit, e.to_string(), start.elapsed().as_secs_f64())
        }
        Err(e) => {
            return failed_report(opts, Termination::NumericalFailure, e.to_string(), start.elapsed().as_secs_f64())
        }
    };
    let shared = Shared { p, rp, opts: *opts, backend };
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bounds: p.bounds(),
        lb: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
    });
    let mut seq = 1;
    let mut ub: Option<f64> = None;
    let mut incumbent: Option<Vec<f64>> = None;
    // lower bounds of nodes closed without being resolved
    let mut closed_lb = f64::INFINITY;
    let mut nodes = 0;
    let mut max_depth = 0;
    let mut root: Option<RootStats> = None;
    let mut termination = Termination::Optimal;
    let mut message = None;
    let threads = opts.threads.max(1);

    'outer: loop {
        if let Some(top) = heap.peek() {
            if fathomable(top.lb, ub, opts.rel_gap, opts.gap_floor) {
                // best-first: every open node is within the target
                closed_lb = closed_lb.min(top.lb);
                heap.clear();
            }
        }
        if heap.is_empty() {
            break;
        }
        if Instant::now() >= deadline {
            termination = Termination::TimeLimit;
            break;
        }
        if opts.node_limit.is_some_and(|lim| nodes >= lim) {
            termination = Termination::NodeLimit;
            break;
        }
        let batch_len = match opts.node_limit {
            Some(lim) => threads.min(lim - nodes),
            None => threads,
        };
        let mut batch = Vec::with_capacity(batch_len);
        while batch.len() < batch_len {
            match heap.pop() {
                Some(n) => batch.push(n),
                None => break,
            }
        }
        let outcomes: Vec<Outcome> = if batch.len() == 1 {
            vec![process(&shared, &batch[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|node| {
                        let sh = &shared;
                        s.spawn(move || process(sh, node))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("node worker panicked")).collect()
            })
        };
        for (node, outcome) in batch.into_iter().zip(outcomes) {
            nodes += 1;
            max_depth = max_depth.max(node.depth);
            match outcome {
                Outcome::Infeasible => {
                    if node.depth == 0 {
                        root = Some(RootStats {
                            scheme: opts.scheme,
                            d: opts.d,
                            nvars: 0,
                            ncons: 0,
                            root_value: None,
                            build_time: 0.0,
                            solve_time: 0.0,
                        });
                    }
                }
                Outcome::Failed { msg, too_large } => {
                    if node.depth == 0 {
                        termination = if too_large {
                            Termination::ResourceLimit
                        } else {
                            Termination::NumericalFailure
                        };
                        message = Some(msg);
                        closed_lb = closed_lb.min(node.lb);
                        break 'outer;
                    }
                    // split without LP information; children keep the parent's bound
                    message.get_or_insert(msg);
                    let (j, width) = node
                        .bounds
                        .iter()
                        .map(|&(l, u)| u - l)
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |a, (j, w)| if w > a.1 { (j, w) } else { a });
                    if width < opts.min_diameter {
                        closed_lb = closed_lb.min(node.lb);
                        continue;
                    }
                    let at = 0.5 * (node.bounds[j].0 + node.bounds[j].1);
                    for side in 0..2 {
                        let mut bounds = node.bounds.clone();
                        if side == 0 {
                            bounds[j].1 = at;
                        } else {
                            bounds[j].0 = at;
                        }
                        heap.push(Node {
                            bounds,
                            lb: node.lb,
                            depth: node.depth + 1,
                            seq,
                        });
                        seq += 1;
                    }
                }
                Outcome::Solved {
                    lp_value,
                    point,
                    branch,
                    root: root_info,
                } => {
                    if let Some((nvars, ncons, bt, st)) = root_info {
                        root = Some(RootStats {
                            scheme: opts.scheme,
                            d: opts.d,
                            nvars,
                            ncons,
                            root_value: Some(lp_value),
                            build_time: bt,
                            solve_time: st,
                        });
                    }
                    let lb = lp_value.max(node.lb);
                    if p.is_feasible(&point, opts.feas_tol).unwrap_or(false) {
                        let val = p.evaluate_objective(&point).expect("point has n entries");
                        if ub.is_none_or(|u| val < u) {
                            ub = Some(val);
                            incumbent = Some(point.clone());
                        }
                    }
                    if fathomable(lb, ub, opts.rel_gap, opts.gap_floor) {
                        closed_lb = closed_lb.min(lb);
                        continue;
                    }
                    let diameter = node.bounds.iter().map(|&(l, u)| u - l).fold(0.0, f64::max);
                    let Some((j, at)) = branch.filter(|_| diameter >= opts.min_diameter) else {
                        // exact at this point or too small to split
                        closed_lb = closed_lb.min(lb);
                        continue;
                    };
                    for side in 0..2 {
                        let mut bounds = node.bounds.clone();
                        if side == 0 {
                            bounds[j].1 = at;
                        } else {
                            bounds[j].0 = at;
                        }
                        heap.push(Node {
                            bounds,
                            lb,
                            depth: node.depth + 1,
                            seq,
                        });
                        seq += 1;
                    }
                }
            }
        }
    }

    let open_lb = heap.iter().map(|n| n.lb).fold(f64::INFINITY, f64::min);
    let mut lower_bound = open_lb.min(closed_lb);
    if let Some(u) = ub {
        lower_bound = lower_bound.min(u);
    }
    if ub.is_none() && termination == Termination::Optimal {
        termination = Termination::Infeasible;
        lower_bound = f64::INFINITY;
    }
    let gap = compute_gap(ub, lower_bound, opts.gap_floor).ok();
    if termination == Termination::Optimal && gap.is_some_and(|g| g > opts.rel_gap) {
        // tree exhausted on nodes that could not be resolved
        termination = Termination::NumericalFailure;
    }
    SolveReport {
        scheme: opts.scheme,
        d: opts.d,
        incumbent,
        upper_bound: ub,
        lower_bound,
        gap,
        gap_floor: opts.gap_floor,
        nodes,
        max_depth,
        wall_time: start.elapsed().as_secs_f64(),
        root,
        termination,
        message,
    }
}

/// Builds the scheme's relaxation and solves the root LP once.
pub fn root_stats(p: &PolynomialProgram, scheme: Scheme, d: usize, cap: usize) -> Result<RootStats, RootError> {
    let t0 = Instant::now();
    let rp = reduce(p, scheme, d, cap)?;
    let rel = build_relaxation_shared(Arc::new(rp), &p.bounds())?;
    let build_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let backend = backend_from_env()?;
    let sol = backend.solve(&rel)?;
    Ok(RootStats {
        scheme,
        d,
        nvars: rel.num_vars(),
        ncons: rel.num_constraints(),
        root_value: (sol.status == LpStatus::Optimal).then_some(sol.objective),
        build_time,
        solve_time: t1.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Relaxation(#[from] crate::rlt::RltError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl RootError {
    /// Whether the failure is a size limit (reported as NA).
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            RootError::Reduction(ReductionError::ResourceLimit { .. }) | RootError::Lp(LpError::TooLarge { .. })
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Multiset, Polynomial};
    use crate::problem::parse_problem;
    use crate::reduction::ReducedProgram;
    use crate::rlt::build_relaxation;

    fn ex5() -> PolynomialProgram {
        parse_problem("vars\nx1 1 2\nx2 9 10\nx3 1 2\nx4 9 10\nobjective\n1 1 2 3 4\n-10 1 2\n-1 1 3 4\n").unwrap()
    }

    #[test]
    fn gap_formula() {
        let g = compute_gap(Some(-38.0), -43.81, 1e-6).unwrap();
        assert!((g - 5.81 / 38.0).abs() < 1e-12);
        assert!((g - 0.15289).abs() < 1e-5);
        assert_eq!(compute_gap(Some(2.0), 2.0, 1e-6).unwrap(), 0.0);
        assert_eq!(compute_gap(None, 0.0, 1e-6), Err(GapError::NoIncumbent));
        assert!(matches!(compute_gap(Some(1.0), 2.0, 1e-6), Err(GapError::NumericalFailure { .. })));
        assert!((compute_gap(Some(0.0), -1e-7, 1e-6).unwrap() - 0.1).abs() < 1e-12);
    }

    fn mccormick() -> LinearRelaxation {
        let p = PolynomialProgram::with_box(&[(0.0, 1.0); 3], Polynomial::monomial(1.0, Multiset::from_atoms([0, 1]))).unwrap();
        build_relaxation(&ReducedProgram::baseline(&p)).unwrap()
    }

    fn values(rel: &LinearRelaxation, atoms: &[f64], x12: f64) -> Vec<f64> {
        let mut v = vec![0.0; rel.num_vars()];
        for (j, &a) in atoms.iter().enumerate() {
            v[rel.atom_column(j)] = a;
        }
        let c = rel.registry.get(&LinVarId::Rlt(Multiset::from_atoms([0, 1]))).unwrap();
        v[c] = x12;
        v
    }

    #[test]
    fn branching_rule() {
        let rel = mccormick();
        let v = values(&rel, &[0.5, 0.5, 0.0], 0.9);
        assert_eq!(select_branching_variable(&v, &rel, 1e-6), Ok((0, 0.5)));
        let v = values(&rel, &[0.5, 0.4, 0.0], 0.2);
        assert_eq!(select_branching_variable(&v, &rel, 1e-6), Err(BranchError::NoViolation));
        let v = values(&rel, &[1.0, 0.5, 0.0], 0.0);
        assert_eq!(select_branching_variable(&v, &rel, 1e-6), Ok((0, 0.9)));
    }

    #[test]
    fn ex5_global_optimum() {
        let opts = SolveOptions {
            scheme: Scheme::QuadRlt,
            ..SolveOptions::default()
        };
        let r = solve(&ex5(), &opts);
        assert_eq!(r.termination, Termination::Optimal);
        assert!((r.upper_bound.unwrap() + 38.0).abs() <= 1e-3 * 38.0, "{r:?}");
        assert!(r.gap.unwrap() <= 1e-3);
        assert!(r.lower_bound <= -38.0 + 1e-9);
        let x = r.incumbent.unwrap();
        for (a, b) in x.iter().zip([2.0, 10.0, 1.0, 9.0]) {
            assert!((a - b).abs() < 1e-2, "{x:?}");
        }
        let root = r.root.unwrap();
        assert!((root.root_value.unwrap() + 43.81).abs() < 0.01);
    }

    #[test]
    fn trilinear_on_unit_box() {
        let p = PolynomialProgram::with_box(&[(0.0, 1.0); 3], Polynomial::monomial(1.0, Multiset::from_atoms([0, 1, 2]))).unwrap();
        for s in Scheme::ALL {
            let r = solve(&p, &SolveOptions { scheme: s, ..SolveOptions::default() });
            assert_eq!(r.termination, Termination::Optimal, "{s}");
            assert!(r.upper_bound.unwrap().abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn limits_are_reported() {
        let opts = SolveOptions {
            scheme: Scheme::S1,
            node_limit: Some(1),
            ..SolveOptions::default()
        };
        let r = solve(&ex5(), &opts);
        assert_eq!(r.nodes, 1);
        assert!(matches!(r.termination, Termination::NodeLimit | Termination::Optimal));
        let opts = SolveOptions {
            scheme: Scheme::S3,
            cap: 10,
            ..SolveOptions::default()
        };
        assert_eq!(solve(&ex5(), &opts).termination, Termination::ResourceLimit);
    }

    #[test]
    fn infeasible_program() {
        let p = parse_problem("vars\nx1 0 1\nx2 0 1\nobjective\n1 1 2\nconstraints\n>= 3 1 1 ; 1 2\n").unwrap();
        let r = solve(&p, &SolveOptions::default());
        assert_eq!(r.termination, Termination::Infeasible);
        assert!(r.incumbent.is_none());
    }

    #[test]
    fn constrained_program() {
        // min -x1 x2 s.t. x1 + x2 <= 1 on [0,1]^2 -> -0.25
        let p = parse_problem("vars\nx1 0 1\nx2 0 1\nobjective\n-1 1 2\nconstraints\n<= 1 1 1 ; 1 2\n").unwrap();
        let r = solve(&p, &SolveOptions::default());
        assert_eq!(r.termination, Termination::Optimal);
        assert!((r.upper_bound.unwrap() + 0.25).abs() < 1e-3, "{r:?}");
        assert!(p.is_feasible(r.incumbent.as_ref().unwrap(), 1e-6).unwrap());
    }

    #[test]
    fn parallel_matches_serial() {
        let serial = solve(&ex5(), &SolveOptions { scheme: Scheme::S1, ..SolveOptions::default() });
        let par = solve(&ex5(), &SolveOptions { scheme: Scheme::S1, threads: 3, ..SolveOptions::default() });
        let (a, b) = (serial.upper_bound.unwrap(), par.upper_bound.unwrap());
        assert!((a - b).abs() <= 2e-3 * a.abs());
    }

    #[test]
    fn report_json_fields() {
        let r = solve(&ex5(), &SolveOptions::default());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["incumbent", "upper_bound", "lower_bound", "gap", "nodes", "wall_time", "root", "termination"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["scheme"], "quadrlt");
    }
}
