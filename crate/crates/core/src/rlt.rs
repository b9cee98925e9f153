//! J-sets, bound-factor constraints, the linearization operator and the
//! assembly of the RLT linear relaxation of a (reduced) polynomial program.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{Multiset, Polynomial, VarKey, COEF_EPS};
use crate::problem::Sense;
use crate::reduction::ReducedProgram;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RltError {
    #[error("key {0} has a non-finite bound")]
    UnboundedKey(String),
    #[error("key {key} has negative lower bound {lb}")]
    NegativeLowerBound { key: String, lb: f64 },
    #[error("box has {got} entries, program has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Column of a linear relaxation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinVarId {
    /// An original or auxiliary variable.
    Var(VarKey),
    /// RLT variable standing for the product of a multiset of size >= 2.
    Rlt(Multiset),
}

impl LinVarId {
    /// The product of keys this column stands for.
    pub fn monomial(&self) -> Multiset {
        match self {
            LinVarId::Var(k) => Multiset::singleton(*k),
            LinVarId::Rlt(m) => m.clone(),
        }
    }

    /// Column name used in MPS output: `x<j>`, `q<a>` or `X_<keys>`.
    pub fn name(&self) -> String {
        match self {
            LinVarId::Var(k) => k.to_string(),
            LinVarId::Rlt(m) => {
                let mut s = String::from("X");
                for k in m.iter() {
                    write!(s, "_{k}").unwrap();
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowTag {
    /// Bound factor of J-set `jset` with lower factors `lower` (the rest upper).
    BoundFactor { jset: Multiset, lower: Multiset },
    /// Linearization of problem constraint `r`.
    Linearized(usize),
    /// Defining equality of an auxiliary variable.
    Defining(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// Sorted by column, no zero entries.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: RowTag,
}

impl LinearConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (self.rhs - act).abs(),
        }
    }
}

/// Bidirectional map between monomials over keys and column indices.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub columns: Vec<LinVarId>,
    index: HashMap<LinVarId, usize>,
}

impl Registry {
    pub fn column(&mut self, id: LinVarId) -> usize {
        if let Some(&j) = self.index.get(&id) {
            return j;
        }
        let j = self.columns.len();
        self.index.insert(id.clone(), j);
        self.columns.push(id);
        j
    }

    /// Column of a nonempty monomial; size-1 monomials map to their key.
    pub fn monomial_column(&mut self, m: &Multiset) -> usize {
        if m.size() == 1 {
            self.column(LinVarId::Var(m.iter().next().unwrap()))
        } else {
            self.column(LinVarId::Rlt(m.clone()))
        }
    }

    pub fn get(&self, id: &LinVarId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Maximal elements under multiset inclusion, in canonical order.
pub fn compute_jsets(monomials: &[Multiset]) -> Vec<Multiset> {
    let mut sorted: Vec<&Multiset> = monomials.iter().collect();
    sorted.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.cmp(b)));
    sorted.dedup();
    let mut out: Vec<Multiset> = Vec::new();
    for m in sorted {
        if !out.iter().any(|j| j.contains_multiset(m)) {
            out.push(m.clone());
        }
    }
    out.sort();
    out
}

/// Sparse linear form `Σ a_j X_j + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearExpr {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

/// `[poly]_L`: every monomial of size >= 2 becomes its RLT column.
pub fn linearize(poly: &Polynomial, reg: &mut Registry) -> LinearExpr {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let mut constant = 0.0;
    for (m, c) in poly.terms() {
        if m.is_empty() {
            constant += c;
        } else {
            *acc.entry(reg.monomial_column(m)).or_insert(0.0) += c;
        }
    }
    LinearExpr {
        coeffs: acc.into_iter().filter(|(_, c)| c.abs() >= COEF_EPS).collect(),
        constant,
    }
}

/// `(Π lo^mult, Π hi^mult)` of an atom multiset over a box.
pub fn aux_bounds(def: &Multiset, bounds: &[(f64, f64)]) -> Result<(f64, f64), RltError> {
    let mut lo = 1.0;
    let mut hi = 1.0;
    for (k, m) in def.entries() {
        let (l, u) = match *k {
            VarKey::Atom(j) => bounds[j as usize],
            VarKey::Aux(_) => unreachable!("aux definitions are over atoms"),
        };
        if l < 0.0 {
            return Err(RltError::NegativeLowerBound { key: k.to_string(), lb: l });
        }
        lo *= l.powi(*m as i32);
        hi *= u.powi(*m as i32);
    }
    Ok((lo, hi))
}

fn check_bound(k: VarKey, (l, u): (f64, f64)) -> Result<(), RltError> {
    if !(l.is_finite() && u.is_finite()) {
        return Err(RltError::UnboundedKey(k.to_string()));
    }
    if l < 0.0 {
        return Err(RltError::NegativeLowerBound { key: k.to_string(), lb: l });
    }
    Ok(())
}

/// Linearized bound factors `Π_{J1}(x - l) Π_{J2}(u - x) >= 0` over every
/// split `J1 ∪ J2 = J`. Repeated keys yield one row per count of lower
/// factors, so identical products are generated once.
pub fn bound_factor_block<F>(
    j: &Multiset,
    bounds: F,
    reg: &mut Registry,
) -> Result<Vec<LinearConstraint>, RltError>
where
    F: Fn(VarKey) -> (f64, f64),
{
    let entries = j.entries();
    let mut factors = Vec::with_capacity(entries.len());
    for &(k, _) in entries {
        let b = bounds(k);
        check_bound(k, b)?;
        factors.push((
            Polynomial::affine(k, 1.0, -b.0),
            Polynomial::affine(k, -1.0, b.1),
        ));
    }
    let mut rows = Vec::new();
    let mut lower = Vec::with_capacity(entries.len());
    expand_block(j, entries, &factors, 0, &Polynomial::constant(1.0), &mut lower, reg, &mut rows);
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn expand_block(
    j: &Multiset,
    entries: &[(VarKey, u32)],
    factors: &[(Polynomial, Polynomial)],
    i: usize,
    partial: &Polynomial,
    lower: &mut Vec<(VarKey, u32)>,
    reg: &mut Registry,
    rows: &mut Vec<LinearConstraint>,
) {
    if i == entries.len() {
        let lin = linearize(partial, reg);
        if lin.coeffs.is_empty() && lin.constant >= 0.0 {
            return;
        }
        rows.push(LinearConstraint {
            coeffs: lin.coeffs,
            sense: Sense::Ge,
            rhs: -lin.constant,
            tag: RowTag::BoundFactor {
                jset: j.clone(),
                lower: Multiset::from_entries(lower.iter().copied()),
            },
        });
        return;
    }
    let (k, m) = entries[i];
    let (lf, uf) = &factors[i];
    for a in 0..=m {
        let mut p = partial.clone();
        for _ in 0..a {
            p = &p * lf;
        }
        for _ in a..m {
            p = &p * uf;
        }
        if a > 0 {
            lower.push((k, a));
        }
        expand_block(j, entries, factors, i + 1, &p, lower, reg, rows);
        if a > 0 {
            lower.pop();
        }
    }
}

/// RLT relaxation of a reduced program over a box of original variables.
#[derive(Debug, Clone)]
pub struct LinearRelaxation {
    pub program: Arc<ReducedProgram>,
    pub box_bounds: Vec<(f64, f64)>,
    pub registry: Registry,
    pub col_bounds: Vec<(f64, f64)>,
    pub objective: LinearExpr,
    pub constraints: Vec<LinearConstraint>,
    pub jsets: Vec<Multiset>,
}

impl LinearRelaxation {
    /// All LP columns: originals, auxes and RLT variables.
    pub fn num_vars(&self) -> usize {
        self.registry.len()
    }

    /// Structural rows; column bounds are not counted.
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn columns(&self) -> &[LinVarId] {
        &self.registry.columns
    }

    /// Column of original variable `j`.
    pub fn atom_column(&self, j: usize) -> usize {
        self.registry
            .get(&LinVarId::Var(VarKey::Atom(j as u32)))
            .expect("every original variable is registered")
    }

    /// Atom multiset a column stands for.
    pub fn atom_monomial(&self, col: usize) -> Multiset {
        self.program.expand(&self.registry.columns[col].monomial())
    }

    /// Column values of the lifted point: every column set to its product.
    pub fn lift(&self, point: &[f64]) -> Vec<f64> {
        let aux = self.program.lift(point);
        let val = self.program.valuation(point, &aux);
        self.registry
            .columns
            .iter()
            .map(|c| c.monomial().product(&val))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.constant + self.objective.coeffs.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    /// Same program over a different box.
    pub fn rebuild(&self, box_bounds: &[(f64, f64)]) -> Result<LinearRelaxation, RltError> {
        build_relaxation_shared(self.program.clone(), box_bounds)
    }

    /// Free-format compatible MPS text laid out on the fixed-format columns.
    pub fn to_mps(&self, name: &str) -> String {
        let names: Vec<String> = self.registry.columns.iter().map(LinVarId::name).collect();
        let mut out = String::new();
        writeln!(out, "NAME          {name}").unwrap();
        out.push_str("ROWS\n N  OBJ\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let t = match c.sense {
                Sense::Ge => 'G',
                Sense::Eq => 'E',
            };
            writeln!(out, " {t}  R{}", i + 1).unwrap();
        }
        let mut by_col: Vec<Vec<(String, f64)>> = vec![Vec::new(); names.len()];
        for &(j, c) in &self.objective.coeffs {
            by_col[j].push(("OBJ".into(), c));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                by_col[j].push((format!("R{}", i + 1), a));
            }
        }
        for entries in by_col.iter_mut().filter(|e| e.is_empty()) {
            // every bounded column must be declared
            entries.push(("OBJ".into(), 0.0));
        }
        out.push_str("COLUMNS\n");
        for (j, entries) in by_col.iter().enumerate() {
            for (row, v) in entries {
                writeln!(out, "    {:<8}  {:<8}  {:>12}", names[j], row, fmt_num(*v)).unwrap();
            }
        }
        out.push_str("RHS\n");
        for (i, row) in self.constraints.iter().enumerate() {
            if row.rhs != 0.0 {
                writeln!(out, "    {:<8}  {:<8}  {:>12}", "RHS", format!("R{}", i + 1), fmt_num(row.rhs)).unwrap();
            }
        }
        out.push_str("BOUNDS\n");
        for (j, &(lo, hi)) in self.col_bounds.iter().enumerate() {
            if lo == hi {
                writeln!(out, " FX {:<8}  {:<8}  {:>12}", "BND", names[j], fmt_num(lo)).unwrap();
            } else {
                if lo != 0.0 {
                    writeln!(out, " LO {:<8}  {:<8}  {:>12}", "BND", names[j], fmt_num(lo)).unwrap();
                }
                writeln!(out, " UP {:<8}  {:<8}  {:>12}", "BND", names[j], fmt_num(hi)).unwrap();
            }
        }
        out.push_str("ENDATA\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

/// Builds the relaxation over the program's own box.
pub fn build_relaxation(rp: &ReducedProgram) -> Result<LinearRelaxation, RltError> {
    let b = rp.source.bounds();
    build_relaxation_shared(Arc::new(rp.clone()), &b)
}

/// Builds the relaxation of `rp` over `box_bounds`.
pub fn build_relaxation_shared(
    rp: Arc<ReducedProgram>,
    box_bounds: &[(f64, f64)],
) -> Result<LinearRelaxation, RltError> {
    let n = rp.n();
    if box_bounds.len() != n {
        return Err(RltError::DimensionMismatch {
            expected: n,
            got: box_bounds.len(),
        });
    }
    for (j, &b) in box_bounds.iter().enumerate() {
        check_bound(VarKey::Atom(j as u32), b)?;
    }
    let aux_b = rp
        .aux_defs
        .iter()
        .map(|d| aux_bounds(d, box_bounds))
        .collect::<Result<Vec<_>, _>>()?;
    let key_bounds = |k: VarKey| match k {
        VarKey::Atom(j) => box_bounds[j as usize],
        VarKey::Aux(a) => aux_b[a as usize],
    };

    let mut reg = Registry::default();
    for j in 0..n {
        reg.column(LinVarId::Var(VarKey::Atom(j as u32)));
    }
    for a in 0..rp.num_aux() {
        reg.column(LinVarId::Var(VarKey::Aux(a as u32)));
    }

    let objective = linearize(&rp.objective, &mut reg);
    let mut constraints = Vec::new();
    let rows = rp
        .constraints
        .iter()
        .enumerate()
        .map(|(r, c)| (c.clone(), RowTag::Linearized(r)))
        .chain(rp.defining.iter().map(|d| (d.constraint(), RowTag::Defining(d.aux))));
    let mut monomials = Vec::new();
    for (c, tag) in rows {
        monomials.extend(c.poly.terms().map(|(m, _)| m).filter(|m| m.size() >= 2).cloned());
        let lin = linearize(&c.poly, &mut reg);
        let rhs = c.rhs - lin.constant;
        if lin.coeffs.is_empty() && rhs.abs() < COEF_EPS {
            continue;
        }
        constraints.push(LinearConstraint {
            coeffs: lin.coeffs,
            sense: c.sense,
            rhs,
            tag,
        });
    }
    monomials.extend(rp.objective.terms().map(|(m, _)| m).filter(|m| m.size() >= 2).cloned());
    let jsets = compute_jsets(&monomials);
    for j in &jsets {
        constraints.extend(bound_factor_block(j, key_bounds, &mut reg)?);
    }
    let col_bounds = reg
        .columns
        .iter()
        .map(|c| match c {
            LinVarId::Var(k) => key_bounds(*k),
            LinVarId::Rlt(m) => (m.product(|k| key_bounds(k).0), m.product(|k| key_bounds(k).1)),
        })
        .collect();
    Ok(LinearRelaxation {
        program: rp,
        box_bounds: box_bounds.to_vec(),
        registry: reg,
        col_bounds,
        objective,
        constraints,
        jsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::expand_product;
    use crate::problem::PolynomialProgram;
    use crate::reduction::{reduce, Scheme, DEFAULT_CAP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ms(ids: &[u32]) -> Multiset {
        Multiset::from_atoms(ids.iter().map(|i| i - 1))
    }

    fn x(j: u32) -> VarKey {
        VarKey::Atom(j - 1)
    }

    fn program(bounds: &[(f64, f64)], terms: &[(f64, &[u32])]) -> PolynomialProgram {
        let mut obj = Polynomial::zero();
        for &(c, ids) in terms {
            obj.add_term(c, ms(ids));
        }
        PolynomialProgram::with_box(bounds, obj).unwrap()
    }

    fn counts(p: &PolynomialProgram, s: Scheme) -> (usize, usize) {
        let rel = build_relaxation(&reduce(p, s, 2, DEFAULT_CAP).unwrap()).unwrap();
        (rel.num_vars(), rel.num_constraints())
    }

    #[test]
    fn jsets_examples() {
        let got = compute_jsets(&[ms(&[1, 2, 3]), ms(&[1, 2]), ms(&[1, 3]), ms(&[2, 3])]);
        assert_eq!(got, vec![ms(&[1, 2, 3])]);
        let got = compute_jsets(&[ms(&[1, 2, 3]), ms(&[1, 2, 4])]);
        assert_eq!(got, vec![ms(&[1, 2, 3]), ms(&[1, 2, 4])]);
        assert_eq!(compute_jsets(&[ms(&[1, 2])]), vec![ms(&[1, 2])]);
        assert_eq!(compute_jsets(&[ms(&[1, 1]), ms(&[1, 2])]), vec![ms(&[1, 1]), ms(&[1, 2])]);
    }

    #[test]
    fn linearize_examples() {
        let mut reg = Registry::default();
        let lin = linearize(&Polynomial::monomial(1.0, ms(&[1, 2, 3])), &mut reg);
        assert_eq!(lin.coeffs, vec![(0, 1.0)]);
        assert_eq!(reg.columns[0], LinVarId::Rlt(ms(&[1, 2, 3])));

        let mut reg = Registry::default();
        let lin = linearize(&Polynomial::affine(x(1), 3.0, 2.0), &mut reg);
        assert_eq!(lin.coeffs, vec![(0, 3.0)]);
        assert_eq!(lin.constant, 2.0);
        assert_eq!(reg.columns[0], LinVarId::Var(x(1)));
    }

    #[test]
    fn linearize_lower_factor_product() {
        let l = [0.5, 1.5, 2.5];
        let factors: Vec<Polynomial> = (0..3).map(|j| Polynomial::affine(x(j + 1), 1.0, -l[j as usize])).collect();
        let mut reg = Registry::default();
        let lin = linearize(&expand_product(&factors), &mut reg);
        let coef = |id: LinVarId| {
            let j = reg.get(&id).unwrap();
            lin.coeffs.iter().find(|e| e.0 == j).unwrap().1
        };
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        close(coef(LinVarId::Rlt(ms(&[1, 2, 3]))), 1.0);
        close(coef(LinVarId::Rlt(ms(&[1, 2]))), -l[2]);
        close(coef(LinVarId::Rlt(ms(&[1, 3]))), -l[1]);
        close(coef(LinVarId::Rlt(ms(&[2, 3]))), -l[0]);
        close(coef(LinVarId::Var(x(1))), l[1] * l[2]);
        close(coef(LinVarId::Var(x(2))), l[0] * l[2]);
        close(coef(LinVarId::Var(x(3))), l[0] * l[1]);
        close(lin.constant, -l[0] * l[1] * l[2]);
        assert_eq!(lin.coeffs.len(), 7);
    }

    #[test]
    fn block_sizes() {
        let b = |_k: VarKey| (1.0, 2.0);
        let mut reg = Registry::default();
        assert_eq!(bound_factor_block(&ms(&[1, 2, 3]), b, &mut reg).unwrap().len(), 8);
        assert_eq!(bound_factor_block(&ms(&[1, 2]), b, &mut reg).unwrap().len(), 4);
        assert_eq!(bound_factor_block(&ms(&[1, 1]), b, &mut reg).unwrap().len(), 3);
        assert_eq!(bound_factor_block(&ms(&[1, 1, 2, 2, 2]), b, &mut reg).unwrap().len(), 12);
        let bad = |_k: VarKey| (0.0, f64::INFINITY);
        assert!(matches!(
            bound_factor_block(&ms(&[1, 2]), bad, &mut reg),
            Err(RltError::UnboundedKey(_))
        ));
    }

    #[test]
    fn repeated_key_rows() {
        // (x - 1)^2, (x - 1)(2 - x), (2 - x)^2 with X = x^2
        let mut reg = Registry::default();
        let rows = bound_factor_block(&ms(&[1, 1]), |_| (1.0, 2.0), &mut reg).unwrap();
        let xc = reg.get(&LinVarId::Var(x(1))).unwrap();
        let sq = reg.get(&LinVarId::Rlt(ms(&[1, 1]))).unwrap();
        let as_tuple = |r: &LinearConstraint| {
            let get = |c: usize| r.coeffs.iter().find(|e| e.0 == c).map_or(0.0, |e| e.1);
            (get(sq), get(xc), r.rhs)
        };
        let mut got: Vec<(f64, f64, f64)> = rows.iter().map(as_tuple).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![(-1.0, 3.0, 2.0), (1.0, -4.0, -4.0), (1.0, -2.0, -1.0)]);
    }

    #[test]
    fn aux_bounds_examples() {
        let b = [(1.0, 2.0), (9.0, 10.0), (1.0, 2.0), (9.0, 10.0)];
        assert_eq!(aux_bounds(&ms(&[1, 2]), &b).unwrap(), (9.0, 20.0));
        assert_eq!(aux_bounds(&ms(&[1, 3, 4]), &b).unwrap(), (9.0, 40.0));
        assert_eq!(aux_bounds(&ms(&[1, 2, 2, 3]), &[(0.0, 1.0); 3]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn example_counts() {
        let unit3 = [(0.0, 1.0); 3];
        let ex1 = program(&unit3, &[(1.0, &[1, 2, 3])]);
        assert_eq!(counts(&ex1, Scheme::Baseline), (7, 8));
        assert_eq!(counts(&ex1, Scheme::S1).1, 10);
        let ex2 = program(&[(0.0, 1.0); 4], &[(1.0, &[1, 2, 3]), (1.0, &[1, 2, 4])]);
        assert_eq!(counts(&ex2, Scheme::Baseline).1, 16);
        assert_eq!(counts(&ex2, Scheme::S1).1, 15);
        let ex3 = program(&unit3, &[(1.0, &[1, 2, 3]), (1.0, &[1, 2]), (1.0, &[1, 3]), (1.0, &[2, 3])]);
        assert_eq!(counts(&ex3, Scheme::Baseline), (7, 8));
        assert_eq!(counts(&ex3, Scheme::S1).0, 9);
        let ex4 = program(&unit3, &[(1.0, &[1, 3]), (-1.0, &[1, 2, 3])]);
        let (qv, qc) = counts(&ex4, Scheme::QuadRlt);
        let (sv, sc) = counts(&ex4, Scheme::S1);
        assert_eq!((sv - qv, sc - qc), (1, 4));
        let quad = program(&[(0.0, 1.0); 2], &[(1.0, &[1, 2])]);
        assert_eq!(counts(&quad, Scheme::Baseline), (3, 4));
    }

    #[test]
    fn single_jset_variable_count() {
        for size in 2..=6u32 {
            let ids: Vec<u32> = (1..=size).collect();
            let p = program(&vec![(0.0, 1.0); size as usize], &[(1.0, &ids)]);
            let expect: usize = size as usize
                + (2..=size as usize)
                    .map(|k| (0..k).fold(1usize, |a, i| a * (size as usize - i) / (i + 1)))
                    .sum::<usize>();
            assert_eq!(counts(&p, Scheme::Baseline), (expect, 1 << size));
        }
    }

    #[test]
    fn mps_layout() {
        let p = program(&[(0.0, 1.0); 2], &[(1.0, &[1, 2]), (-2.0, &[1])]);
        let rel = build_relaxation(&reduce(&p, Scheme::Baseline, 2, DEFAULT_CAP).unwrap()).unwrap();
        let mps = rel.to_mps("mc");
        assert!(mps.starts_with("NAME          mc\nROWS\n N  OBJ\n G  R1\n"));
        assert!(mps.contains("    X_x1_x2   OBJ"));
        assert!(mps.contains(" UP BND       x1"));
        assert!(mps.ends_with("ENDATA\n"));
    }

    #[test]
    fn mps_declares_unused_columns() {
        let p = program(&[(0.0, 1.0); 3], &[(1.0, &[1, 2])]);
        let rel = build_relaxation(&reduce(&p, Scheme::Baseline, 2, DEFAULT_CAP).unwrap()).unwrap();
        let mps = rel.to_mps("u");
        let columns = &mps[mps.find("COLUMNS").unwrap()..mps.find("RHS").unwrap()];
        assert!(columns.contains("    x3        OBJ"));
    }

    fn random_program(rng: &mut ChaCha8Rng) -> PolynomialProgram {
        let n = rng.gen_range(1..=4);
        let bounds: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let l = rng.gen_range(0.0..2.0);
                (l, l + rng.gen_range(0.1..2.0))
            })
            .collect();
        let mut obj = Polynomial::zero();
        for _ in 0..rng.gen_range(1..=4) {
            let size = rng.gen_range(1..=5);
            obj.add_term(
                rng.gen_range(-5.0..5.0),
                Multiset::from_atoms((0..size).map(|_| rng.gen_range(0..n as u32))),
            );
        }
        PolynomialProgram::with_box(&bounds, obj).unwrap()
    }

    #[test]
    fn lifted_points_satisfy_every_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let p = random_program(&mut rng);
            for s in Scheme::ALL {
                let rp = match reduce(&p, s, 2, 5_000) {
                    Ok(rp) => rp,
                    Err(_) => continue,
                };
                let rel = build_relaxation(&rp).unwrap();
                for _ in 0..100 {
                    let pt: Vec<f64> = p.vars.iter().map(|v| rng.gen_range(v.lb..=v.ub)).collect();
                    let lifted = rel.lift(&pt);
                    for row in &rel.constraints {
                        let scale = 1.0 + row.coeffs.iter().map(|e| (e.1 * lifted[e.0]).abs()).sum::<f64>();
                        assert!(row.violation(&lifted) <= 1e-9 * scale, "{s} {:?}", row.tag);
                    }
                    for (j, &(lo, hi)) in rel.col_bounds.iter().enumerate() {
                        assert!(lifted[j] >= lo - 1e-9 * (1.0 + lo.abs()) && lifted[j] <= hi + 1e-9 * (1.0 + hi.abs()));
                    }
                    let want = p.evaluate_objective(&pt).unwrap();
                    let got = rel.objective_value(&lifted);
                    assert!((want - got).abs() <= 1e-9 * (1.0 + want.abs()));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn jsets_form_an_antichain(raw in prop::collection::vec(prop::collection::vec(0u32..4, 2..5), 1..8)) {
            let monos: Vec<Multiset> = raw.into_iter().map(Multiset::from_atoms).collect();
            let js = compute_jsets(&monos);
            for (i, a) in js.iter().enumerate() {
                for (k, b) in js.iter().enumerate() {
                    if i != k {
                        prop_assert!(!b.contains_multiset(a));
                    }
                }
            }
            for m in &monos {
                prop_assert!(js.iter().any(|j| j.contains_multiset(m)));
            }
        }
    }
}
