//! LP solving for relaxations. The bundled backend is a dense revised simplex
//! run on the dual of `min c·x s.t. A x (>=|=) b, lo <= x <= hi`: the dual
//! has one equality row per primal column and a trivially feasible slack
//! basis, and the primal point is read off the simplex multipliers.

use std::env;

use thiserror::Error;

use crate::problem::Sense;
use crate::rlt::{LinearConstraint, LinearRelaxation, RltError};

/// Environment variable selecting the backend (`simplex` or `minilp`).
pub const BACKEND_ENV: &str = "POLYRLT_LP_BACKEND";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("LP too large for the dense backend: {cols} columns (limit {max})")]
    TooLarge { cols: usize, max: usize },
    #[error(transparent)]
    Relaxation(#[from] RltError),
    #[error("unknown LP backend `{0}`")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective including the relaxation's constant; meaningful when optimal.
    pub objective: f64,
    /// One value per relaxation column.
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: Option<usize>,
    /// Relative cost perturbation against degenerate stalling.
    pub perturbation: f64,
    /// Dense inverse of this dimension is the memory ceiling.
    pub max_columns: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            max_iter: None,
            perturbation: 1e-7,
            max_columns: 4000,
        }
    }
}

pub trait LpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, rel: &LinearRelaxation) -> Result<LpSolution, LpError>;
}

/// Bundled dense revised simplex.
#[derive(Debug, Clone, Default)]
pub struct DenseSimplex {
    pub opts: LpOptions,
}

impl LpBackend for DenseSimplex {
    fn name(&self) -> &'static str {
        "simplex"
    }

    fn solve(&self, rel: &LinearRelaxation) -> Result<LpSolution, LpError> {
        let n = rel.num_vars();
        let mut cost = vec![0.0; n];
        for &(j, c) in &rel.objective.coeffs {
            cost[j] += c;
        }
        let res = solve_dense(&cost, &rel.col_bounds, &rel.constraints, &self.opts)?;
        let objective = match res.status {
            LpStatus::Optimal => rel.objective_value(&res.x),
            _ => f64::NAN,
        };
        Ok(LpSolution {
            status: res.status,
            objective,
            values: res.x,
            iterations: res.iterations,
        })
    }
}

/// Backend named by [`BACKEND_ENV`], defaulting to the bundled simplex.
pub fn backend_from_env() -> Result<Box<dyn LpBackend>, LpError> {
    match env::var(BACKEND_ENV).ok().as_deref() {
        None | Some("") | Some("simplex") => Ok(Box::new(DenseSimplex::default())),
        #[cfg(feature = "minilp")]
        Some("minilp") => Ok(Box::new(MinilpBackend)),
        Some(other) => Err(LpError::UnknownBackend(other.to_string())),
    }
}

/// Solves `rel`, first rebuilding it over `overrides` (a new box for the
/// original variables) when given; aux/RLT bounds and bound factors follow.
pub fn solve_lp(rel: &LinearRelaxation, overrides: Option<&[(f64, f64)]>) -> Result<LpSolution, LpError> {
    let backend = backend_from_env()?;
    solve_with(backend.as_ref(), rel, overrides)
}

pub fn solve_with(
    backend: &dyn LpBackend,
    rel: &LinearRelaxation,
    overrides: Option<&[(f64, f64)]>,
) -> Result<LpSolution, LpError> {
    match overrides {
        Some(b) => backend.solve(&rel.rebuild(b)?),
        None => backend.solve(rel),
    }
}

#[cfg(feature = "minilp")]
#[derive(Debug, Clone, Copy, Default)]
pub struct MinilpBackend;

#[cfg(feature = "minilp")]
impl LpBackend for MinilpBackend {
    fn name(&self) -> &'static str {
        "minilp"
    }

    fn solve(&self, rel: &LinearRelaxation) -> Result<LpSolution, LpError> {
        use minilp::{ComparisonOp, OptimizationDirection, Problem};
        let mut cost = vec![0.0; rel.num_vars()];
        for &(j, c) in &rel.objective.coeffs {
            cost[j] += c;
        }
        let mut prob = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = cost
            .iter()
            .zip(&rel.col_bounds)
            .map(|(&c, &b)| prob.add_var(c, b))
            .collect();
        for row in &rel.constraints {
            let expr: Vec<_> = row.coeffs.iter().map(|&(j, a)| (vars[j], a)).collect();
            let op = match row.sense {
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            prob.add_constraint(expr.as_slice(), op, row.rhs);
        }
        let solved = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| prob.solve()))
            .map_err(|_| LpError::NumericalFailure("minilp aborted".into()))?;
        match solved {
            Ok(sol) => {
                let values: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
                Ok(LpSolution {
                    status: LpStatus::Optimal,
                    objective: rel.objective_value(&values),
                    values,
                    iterations: 0,
                })
            }
            Err(minilp::Error::Infeasible) => Ok(infeasible(rel.num_vars())),
            Err(minilp::Error::Unbounded) => Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                values: vec![f64::NAN; rel.num_vars()],
                iterations: 0,
            }),
        }
    }
}

#[cfg(feature = "minilp")]
fn infeasible(n: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::INFINITY,
        values: vec![f64::NAN; n],
        iterations: 0,
    }
}

// ---------------------------------------------------------------------------
// dense simplex on the dual

const BLAND_AFTER: usize = 50;

#[derive(Debug, Clone)]
pub struct DenseResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DualCol {
    /// Multiplier of primal row `i`, with sign `+1`/`-1` (free rows use both).
    Row(usize, f64),
    /// Multiplier of `x_j >= lo_j`.
    Lower(usize),
    /// Multiplier of `x_j <= hi_j`.
    Upper(usize),
}

struct Dual {
    n: usize,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    cols: Vec<DualCol>,
    cost_primal: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl Dual {
    fn cost(&self, q: usize) -> f64 {
        match self.cols[q] {
            DualCol::Row(i, s) => -s * self.rows[i].1,
            DualCol::Lower(j) => -self.bounds[j].0,
            DualCol::Upper(j) => self.bounds[j].1,
        }
    }

    /// Reduced cost `cost_q - π·a_q`.
    fn reduced(&self, q: usize, pi: &[f64]) -> f64 {
        match self.cols[q] {
            DualCol::Row(i, s) => {
                let (a, b) = &self.rows[i];
                -s * (b + a.iter().map(|&(j, v)| v * pi[j]).sum::<f64>())
            }
            DualCol::Lower(j) => -self.bounds[j].0 - pi[j],
            DualCol::Upper(j) => self.bounds[j].1 + pi[j],
        }
    }

    /// `out = B^{-1} a_q`.
    fn ftran(&self, q: usize, binv: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut axpy = |j: usize, v: f64| {
            for (i, o) in out.iter_mut().enumerate() {
                *o += binv[i * n + j] * v;
            }
        };
        match self.cols[q] {
            DualCol::Row(i, s) => {
                for &(j, v) in &self.rows[i].0 {
                    axpy(j, s * v);
                }
            }
            DualCol::Lower(j) => axpy(j, 1.0),
            DualCol::Upper(j) => axpy(j, -1.0),
        }
    }

    fn column_dense(&self, q: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        match self.cols[q] {
            DualCol::Row(i, s) => {
                for &(j, a) in &self.rows[i].0 {
                    v[j] += s * a;
                }
            }
            DualCol::Lower(j) => v[j] = 1.0,
            DualCol::Upper(j) => v[j] = -1.0,
        }
        v
    }

    /// Gauss-Jordan inverse of the basis matrix; `None` if singular.
    fn invert(&self, basis: &[usize]) -> Option<Vec<f64>> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for (k, &q) in basis.iter().enumerate() {
            for (i, v) in self.column_dense(q).into_iter().enumerate() {
                a[i * n + k] = v;
            }
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))?;
            if a[p * n + c].abs() < 1e-11 {
                return None;
            }
            if p != c {
                for k in 0..n {
                    a.swap(p * n + k, c * n + k);
                    inv.swap(p * n + k, c * n + k);
                }
            }
            let d = a[c * n + c];
            for k in 0..n {
                a[c * n + k] /= d;
                inv[c * n + k] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r * n + c];
                    if f != 0.0 {
                        for k in 0..n {
                            a[r * n + k] -= f * a[c * n + k];
                            inv[r * n + k] -= f * inv[c * n + k];
                        }
                    }
                }
            }
        }
        Some(inv)
    }
}

/// `inv` is `B^{-1}` with basis column `k` in row `k`; returns `B^{-1} c`.
fn basic_values(inv: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    (0..n)
        .map(|i| (0..n).map(|k| inv[i * n + k] * rhs[k]).sum())
        .collect()
}

/// Simplex multipliers `π = c_B^T B^{-1}`.
fn multipliers(inv: &[f64], cb: &[f64]) -> Vec<f64> {
    let n = cb.len();
    let mut pi = vec![0.0; n];
    for (i, &c) in cb.iter().enumerate() {
        if c != 0.0 {
            for k in 0..n {
                pi[k] += c * inv[i * n + k];
            }
        }
    }
    pi
}

/// Geometric row/column equilibration followed by unit row maxima.
/// Returns `(row scale, column scale)`; the scaled matrix is `R A S`.
fn equilibrate(rows: &[&LinearConstraint], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![1.0; rows.len()];
    let mut c = vec![1.0; n];
    for _ in 0..6 {
        for (i, row) in rows.iter().enumerate() {
            let (lo, hi) = row.coeffs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(j, a)| {
                let v = (a * c[j]).abs();
                (lo.min(v), hi.max(v))
            });
            r[i] = 1.0 / (lo * hi).sqrt();
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![0.0f64; n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                let v = (a * r[i]).abs();
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for j in 0..n {
            if hi[j] > 0.0 {
                c[j] = 1.0 / (lo[j] * hi[j]).sqrt();
            }
        }
    }
    for (i, row) in rows.iter().enumerate() {
        let m = row.coeffs.iter().fold(0.0f64, |m, &(j, a)| m.max((a * c[j]).abs()));
        r[i] = 1.0 / m;
    }
    (r, c)
}

/// Solves `min cost·x s.t. rows, bounds` with the dense dual method.
pub fn solve_dense(
    cost: &[f64],
    bounds: &[(f64, f64)],
    rows: &[LinearConstraint],
    opts: &LpOptions,
) -> Result<DenseResult, LpError> {
    let n = cost.len();
    if n > opts.max_columns {
        return Err(LpError::TooLarge {
            cols: n,
            max: opts.max_columns,
        });
    }
    let infeasible = |iterations| DenseResult {
        status: LpStatus::Infeasible,
        x: vec![f64::NAN; n],
        iterations,
    };
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(LpError::NumericalFailure("non-finite column bound".into()));
        }
        if lo > hi + opts.feas_tol {
            return Ok(infeasible(0));
        }
    }
    let mut live = Vec::with_capacity(rows.len());
    for r in rows {
        if r.coeffs.iter().any(|e| e.1 != 0.0) {
            live.push(r);
            continue;
        }
        let ok = match r.sense {
            Sense::Ge => r.rhs <= opts.feas_tol,
            Sense::Eq => r.rhs.abs() <= opts.feas_tol,
        };
        if !ok {
            return Ok(infeasible(0));
        }
    }
    let (rscale, cscale) = equilibrate(&live, n);
    let mut scaled = Vec::with_capacity(live.len());
    let mut cols = Vec::new();
    for (i, r) in live.iter().enumerate() {
        let coeffs = r.coeffs.iter().map(|&(j, a)| (j, a * rscale[i] * cscale[j])).collect::<Vec<_>>();
        scaled.push((coeffs, r.rhs * rscale[i]));
        cols.push(DualCol::Row(i, 1.0));
        if r.sense == Sense::Eq {
            cols.push(DualCol::Row(i, -1.0));
        }
    }
    let first_bound_col = cols.len();
    for j in 0..n {
        cols.push(DualCol::Lower(j));
        cols.push(DualCol::Upper(j));
    }
    let dual = Dual {
        n,
        rows: scaled,
        cols,
        cost_primal: cost
            .iter()
            .zip(&cscale)
            .enumerate()
            .map(|(j, (c, s))| perturb(c * s, j, opts.perturbation))
            .collect(),
        bounds: bounds.iter().zip(&cscale).map(|(&(lo, hi), s)| (lo / s, hi / s)).collect(),
    };
    let max_iter = opts.max_iter.unwrap_or(50 * (n + dual.cols.len()) + 10_000);
    let refactor_every = n.clamp(50, 200);
    let max_refactors = 2 * max_iter / refactor_every + 100;
    let mut refactors = 0;
    let mut piv_rel: f64 = 1e-7;
    let mut force_bland = false;
    let mut recoveries = 0;

    // slack basis: z_lo_j when c_j >= 0, z_hi_j otherwise
    let mut basis: Vec<usize> = (0..n)
        .map(|j| first_bound_col + 2 * j + usize::from(cost[j] < 0.0))
        .collect();
    let mut in_basis = vec![false; dual.cols.len()];
    for &q in &basis {
        in_basis[q] = true;
    }
    let mut binv = dual
        .invert(&basis)
        .ok_or_else(|| LpError::NumericalFailure("singular slack basis".into()))?;
    let mut good = (basis.clone(), binv.clone());
    let mut xb = basic_values(&binv, &dual.cost_primal);
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    let mut since_refactor = 0;
    let mut degenerate = 0;
    let mut rejected = vec![false; dual.cols.len()];
    let mut n_rejected = 0;
    let mut verified_once = false;
    loop {
        if since_refactor >= refactor_every || (since_refactor > 0 && verified_once) {
            refactors += 1;
            if refactors > max_refactors {
                return Err(LpError::NumericalFailure("refactorization budget exhausted".into()));
            }
            match dual.invert(&basis) {
                Some(inv) => {
                    binv = inv;
                    xb = basic_values(&binv, &dual.cost_primal);
                    good = (basis.clone(), binv.clone());
                }
                None if recoveries < 8 => {
                    // singular: return to the last good basis with stricter pivoting
                    recoveries += 1;
                    for &q in &basis {
                        in_basis[q] = false;
                    }
                    basis = good.0.clone();
                    binv = good.1.clone();
                    for &q in &basis {
                        in_basis[q] = true;
                    }
                    xb = basic_values(&binv, &dual.cost_primal);
                    piv_rel = (piv_rel * 10.0).min(1e-2);
                    if recoveries >= 4 {
                        force_bland = true;
                    }
                    verified_once = false;
                }
                None => return Err(LpError::NumericalFailure("singular basis".into())),
            }
            since_refactor = 0;
        }
        let cb: Vec<f64> = basis.iter().map(|&q| dual.cost(q)).collect();
        let pi = multipliers(&binv, &cb);
        let bland = force_bland || degenerate >= BLAND_AFTER;
        let mut enter = None;
        let mut best = -opts.opt_tol;
        for q in 0..dual.cols.len() {
            if in_basis[q] || rejected[q] {
                continue;
            }
            let d = dual.reduced(q, &pi);
            if d < best {
                enter = Some(q);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(q) = enter else {
            if n_rejected > 0 {
                if since_refactor == 0 {
                    return Err(LpError::NumericalFailure("no acceptable pivot".into()));
                }
                rejected.iter_mut().for_each(|r| *r = false);
                n_rejected = 0;
                since_refactor = refactor_every;
                continue;
            }
            // optimal for the current factorization; confirm on a fresh one
            if since_refactor > 0 && !verified_once {
                verified_once = true;
                continue;
            }
            let x: Vec<f64> = pi
                .iter()
                .zip(&cscale)
                .zip(bounds)
                .map(|((&p, &s), &(lo, hi))| (-p * s).clamp(lo, hi))
                .collect();
            let viol = rows.iter().map(|r| r.violation(&x) / row_scale(r)).fold(0.0, f64::max);
            if viol > 1e-5 {
                return Err(LpError::NumericalFailure(format!(
                    "final point violates a row by {viol:e}"
                )));
            }
            return Ok(DenseResult {
                status: LpStatus::Optimal,
                x,
                iterations,
            });
        };
        verified_once = false;
        if iterations >= max_iter {
            return Ok(DenseResult {
                status: LpStatus::IterLimit,
                x: vec![f64::NAN; n],
                iterations,
            });
        }
        dual.ftran(q, &binv, &mut w);
        let wmax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let piv_tol = (piv_rel * wmax).max(1e-11);
        let leave = if bland {
            // textbook ratio test, lowest basic index on ties
            let mut leave = None::<(usize, f64)>;
            for i in 0..n {
                if w[i] > piv_tol {
                    let ratio = xb[i].max(0.0) / w[i];
                    let better = match leave {
                        None => true,
                        Some((l, r)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            leave.map(|l| l.0)
        } else {
            // Harris two-pass ratio test
            let mut theta_max = f64::INFINITY;
            for i in 0..n {
                if w[i] > piv_tol {
                    theta_max = theta_max.min(((xb[i] + opts.feas_tol) / w[i]).max(0.0));
                }
            }
            let mut leave = None;
            let mut best_w = 0.0;
            for i in 0..n {
                if w[i] > piv_tol && xb[i].max(0.0) / w[i] <= theta_max && w[i] > best_w {
                    leave = Some(i);
                    best_w = w[i];
                }
            }
            leave
        };
        let Some(r) = leave else {
            if w.iter().any(|&v| v > 1e-12 * (1.0 + wmax)) {
                // only tiny pivots: try another entering column
                rejected[q] = true;
                n_rejected += 1;
                continue;
            }
            if since_refactor > 0 {
                since_refactor = refactor_every;
                continue;
            }
            // dual unbounded: the primal has no feasible point
            return Ok(infeasible(iterations));
        };
        if n_rejected > 0 {
            rejected.iter_mut().for_each(|r| *r = false);
            n_rejected = 0;
        }
        let theta = (xb[r] / w[r]).max(0.0);
        // progress test on the objective decrease; Bland stays on until it is real
        let gain = -theta * dual.reduced(q, &pi);
        let scale = 1.0 + cb.iter().zip(&xb).map(|(a, b)| a * b).sum::<f64>().abs();
        if gain <= 1e-11 * scale {
            degenerate += 1;
        } else if gain > 1e-8 * scale {
            degenerate = 0;
        }
        for i in 0..n {
            xb[i] -= theta * w[i];
        }
        xb[r] = theta;
        // update the inverse: pivot on w_r
        let wr = w[r];
        for k in 0..n {
            binv[r * n + k] /= wr;
        }
        for i in 0..n {
            if i != r && w[i] != 0.0 {
                let f = w[i];
                for k in 0..n {
                    binv[i * n + k] -= f * binv[r * n + k];
                }
            }
        }
        in_basis[basis[r]] = false;
        in_basis[q] = true;
        basis[r] = q;
        iterations += 1;
        since_refactor += 1;
    }
}

/// Pushes `c` away from zero by a pseudo-random fraction of `eps (1 + |c|)`.
/// The dual right-hand side loses its degeneracy while reduced costs, and so
/// primal feasibility of the returned point, are unaffected.
fn perturb(c: f64, j: usize, eps: f64) -> f64 {
    let mut h = (j as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    let u = 0.5 + 0.5 * (h >> 11) as f64 / (1u64 << 53) as f64;
    let sign = if c < 0.0 { -1.0 } else { 1.0 };
    c + sign * eps * (1.0 + c.abs()) * u
}

fn row_scale(r: &LinearConstraint) -> f64 {
    r.coeffs.iter().fold(1.0f64, |a, e| a.max(e.1.abs())).max(r.rhs.abs())
}
