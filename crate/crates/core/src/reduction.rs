//! Degree reduction to a program of degree at most `d` through auxiliary
//! variables `q` with defining equalities. `d = 2` is quadrification.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Multiset, Polynomial, VarKey};
use crate::problem::{Constraint, PolynomialProgram, Sense};
use crate::rlt::compute_jsets;

/// Default cap on generated variables for the enumerating schemes.
pub const DEFAULT_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("target degree must be at least 2, got {0}")]
    InvalidDegree(usize),
    #[error("resource limit: more than {cap} generated variables (reached {generated})")]
    ResourceLimit { generated: usize, cap: usize },
    #[error("unknown scheme `{0}` (expected baseline, s1, s2, s3 or quadrlt)")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Baseline,
    S1,
    S2,
    S3,
    QuadRlt,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Baseline, Scheme::S1, Scheme::S2, Scheme::S3, Scheme::QuadRlt];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::S1 => "s1",
            Scheme::S2 => "s2",
            Scheme::S3 => "s3",
            Scheme::QuadRlt => "quadrlt",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ReductionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "rlt" => Ok(Scheme::Baseline),
            "s1" | "scheme1" => Ok(Scheme::S1),
            "s2" | "scheme2" => Ok(Scheme::S2),
            "s3" | "scheme3" => Ok(Scheme::S3),
            "quadrlt" | "quad-rlt" | "qr" => Ok(Scheme::QuadRlt),
            _ => Err(ReductionError::UnknownScheme(s.to_string())),
        }
    }
}

/// `q_aux = Π rhs`, with `rhs` of size at most `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DefiningRow {
    pub aux: u32,
    pub rhs: Multiset,
}

impl DefiningRow {
    /// The row as the polynomial equality `q_aux - Π rhs = 0`.
    pub fn constraint(&self) -> Constraint {
        let mut poly = Polynomial::var(VarKey::Aux(self.aux));
        poly.add_term(-1.0, self.rhs.clone());
        Constraint::new(poly, Sense::Eq, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProgram {
    pub source: PolynomialProgram,
    /// Objective over atoms and auxes, every monomial of size at most `d`.
    pub objective: Polynomial,
    pub constraints: Vec<Constraint>,
    /// Sorted so that every row only references auxes of smaller multisets.
    pub defining: Vec<DefiningRow>,
    /// `aux_defs[a]` is the atom multiset that `q_a` stands for.
    pub aux_defs: Vec<Multiset>,
    pub scheme: Scheme,
    pub d: usize,
}

impl ReducedProgram {
    /// The source itself, without auxiliary variables.
    pub fn baseline(p: &PolynomialProgram) -> Self {
        ReducedProgram {
            source: p.clone(),
            objective: p.objective.clone(),
            constraints: p.constraints.clone(),
            defining: Vec::new(),
            aux_defs: Vec::new(),
            scheme: Scheme::Baseline,
            d: p.degree().max(2),
        }
    }

    pub fn n(&self) -> usize {
        self.source.n()
    }

    pub fn num_aux(&self) -> usize {
        self.aux_defs.len()
    }

    /// Problem rows followed by the defining equalities.
    pub fn all_constraints(&self) -> Vec<Constraint> {
        self.constraints
            .iter()
            .cloned()
            .chain(self.defining.iter().map(DefiningRow::constraint))
            .collect()
    }

    pub fn degree(&self) -> usize {
        let rows = self.constraints.iter().map(|c| c.poly.degree());
        let defs = self.defining.iter().map(|r| r.rhs.size());
        rows.chain(defs).fold(self.objective.degree(), usize::max)
    }

    /// Atom multiset a key stands for.
    pub fn expand_key(&self, key: VarKey) -> Multiset {
        match key {
            VarKey::Atom(_) => Multiset::singleton(key),
            VarKey::Aux(a) => self.aux_defs[a as usize].clone(),
        }
    }

    /// Atom multiset of a product of keys.
    pub fn expand(&self, m: &Multiset) -> Multiset {
        m.substitute(|k| self.expand_key(k))
    }

    /// Values of every key at an original point, auxes set to their products.
    pub fn lift(&self, point: &[f64]) -> Vec<f64> {
        self.aux_defs
            .iter()
            .map(|def| {
                def.product(|k| match k {
                    VarKey::Atom(j) => point[j as usize],
                    VarKey::Aux(_) => unreachable!("aux definitions are over atoms"),
                })
            })
            .collect()
    }

    /// Key valuation at `point` with `aux` from [`lift`](Self::lift).
    pub fn valuation<'a>(&self, point: &'a [f64], aux: &'a [f64]) -> impl Fn(VarKey) -> f64 + 'a {
        move |k| match k {
            VarKey::Atom(j) => point[j as usize],
            VarKey::Aux(a) => aux[a as usize],
        }
    }

    /// Rewrites a polynomial over keys into one over atoms.
    pub fn substitute_poly(&self, poly: &Polynomial) -> Polynomial {
        poly.map_monomials(|m| self.expand(m))
    }
}

/// Applies `scheme` with target degree `d`.
pub fn reduce(
    p: &PolynomialProgram,
    scheme: Scheme,
    d: usize,
    cap: usize,
) -> Result<ReducedProgram, ReductionError> {
    match scheme {
        Scheme::Baseline => Ok(ReducedProgram::baseline(p)),
        Scheme::S1 => apply_scheme1(p, d),
        Scheme::S2 => apply_scheme2(p, d, cap),
        Scheme::S3 => apply_scheme3(p, d, cap),
        Scheme::QuadRlt => apply_quadrlt(p, d),
    }
}

struct Reducer {
    d: usize,
    cap: usize,
    ids: HashMap<Multiset, u32>,
    defs: Vec<Multiset>,
    defined: Vec<bool>,
    rows: Vec<DefiningRow>,
    seen_rows: HashSet<DefiningRow>,
    products: HashSet<Multiset>,
}

impl Reducer {
    fn new(d: usize, cap: usize) -> Result<Self, ReductionError> {
        if d < 2 {
            return Err(ReductionError::InvalidDegree(d));
        }
        Ok(Reducer {
            d,
            cap,
            ids: HashMap::new(),
            defs: Vec::new(),
            defined: Vec::new(),
            rows: Vec::new(),
            seen_rows: HashSet::new(),
            products: HashSet::new(),
        })
    }

    fn generated(&self) -> usize {
        self.defs.len() + self.products.len()
    }

    fn check_cap(&self) -> Result<(), ReductionError> {
        if self.generated() > self.cap {
            return Err(ReductionError::ResourceLimit {
                generated: self.generated(),
                cap: self.cap,
            });
        }
        Ok(())
    }

    fn aux(&mut self, m: &Multiset) -> u32 {
        if let Some(&id) = self.ids.get(m) {
            return id;
        }
        let id = self.defs.len() as u32;
        self.ids.insert(m.clone(), id);
        self.defs.push(m.clone());
        self.defined.push(false);
        id
    }

    /// Key standing for an atom multiset: the atom itself for size 1.
    fn key(&mut self, m: &Multiset) -> VarKey {
        if m.size() == 1 {
            m.iter().next().unwrap()
        } else {
            VarKey::Aux(self.aux(m))
        }
    }

    fn is_defined(&self, m: &Multiset) -> bool {
        self.ids.get(m).is_some_and(|&id| self.defined[id as usize])
    }

    fn add_row(&mut self, aux: u32, rhs: Multiset) -> Result<(), ReductionError> {
        self.defined[aux as usize] = true;
        let row = DefiningRow { aux, rhs };
        if self.seen_rows.insert(row.clone()) {
            if row.rhs.size() >= 2 {
                self.products.insert(row.rhs.clone());
            }
            self.rows.push(row);
        }
        self.check_cap()
    }

    /// Chain `C_J`: peel the trailing `d - 1` elements while `|J'| > d`,
    /// then close with `q_{J'} = Π J'`. Stops early at an already defined aux.
    fn chain(&mut self, j: &Multiset) -> Result<(), ReductionError> {
        let mut cur = j.clone();
        loop {
            if self.is_defined(&cur) {
                return Ok(());
            }
            let id = self.aux(&cur);
            if cur.size() > self.d {
                let (pre, tail) = cur.split_trailing(self.d - 1);
                let head = self.key(&pre);
                let rhs = Multiset::from_keys(std::iter::once(head).chain(tail));
                self.add_row(id, rhs)?;
                cur = pre;
            } else {
                return self.add_row(id, cur);
            }
        }
    }

    /// Chain over the complement of `jp` in `j`, ending with a row that
    /// references `q_{jp}`.
    fn chain_from(&mut self, j: &Multiset, jp: &Multiset) -> Result<(), ReductionError> {
        let comp = j
            .complement(jp)
            .expect("seed is a submultiset of the monomial")
            .to_flat();
        let d = self.d;
        let mut r = comp.len();
        let mut cur = j.clone();
        loop {
            if self.is_defined(&cur) {
                return Ok(());
            }
            let id = self.aux(&cur);
            if r >= d {
                let cut = r - (d - 1);
                let pre = jp.union(&Multiset::from_keys(comp[..cut].iter().copied()));
                let head = self.key(&pre);
                let rhs = Multiset::from_keys(std::iter::once(head).chain(comp[cut..r].iter().copied()));
                self.add_row(id, rhs)?;
                cur = pre;
                r = cut;
            } else {
                let head = self.key(jp);
                let rhs = Multiset::from_keys(std::iter::once(head).chain(comp[..r].iter().copied()));
                self.add_row(id, rhs)?;
                break;
            }
        }
        if jp.size() <= d && !self.is_defined(jp) {
            let id = self.aux(jp);
            self.add_row(id, jp.clone())?;
        }
        Ok(())
    }

    /// One row per unordered decomposition of `m` into 2..=d nonempty parts.
    fn decompositions(&mut self, m: &Multiset) -> Result<(), ReductionError> {
        let id = self.aux(m);
        let mut parts = Vec::new();
        let mut found = Vec::new();
        partitions(m, self.d, &mut parts, &mut found);
        for ps in found {
            let keys: Vec<VarKey> = ps.iter().map(|p| self.key(p)).collect();
            self.add_row(id, Multiset::from_keys(keys))?;
        }
        Ok(())
    }

    fn finish(self, p: &PolynomialProgram, scheme: Scheme) -> ReducedProgram {
        let d = self.d;
        let replace = |m: &Multiset| -> Multiset {
            if m.size() > d {
                Multiset::singleton(VarKey::Aux(self.ids[m]))
            } else {
                m.clone()
            }
        };
        let objective = p.objective.map_monomials(replace);
        let constraints = p
            .constraints
            .iter()
            .map(|c| Constraint::new(c.poly.map_monomials(replace), c.sense, c.rhs))
            .collect();
        let mut defining = self.rows;
        let defs = &self.defs;
        defining.sort_by(|a, b| {
            let (da, db) = (&defs[a.aux as usize], &defs[b.aux as usize]);
            (da.size(), da, &a.rhs).cmp(&(db.size(), db, &b.rhs))
        });
        ReducedProgram {
            source: p.clone(),
            objective,
            constraints,
            defining,
            aux_defs: self.defs,
            scheme,
            d,
        }
    }
}

/// Every nonempty submultiset of `m`, in canonical order of enumeration.
pub fn submultisets(m: &Multiset) -> Vec<Multiset> {
    let entries = m.entries();
    let mut out = Vec::new();
    let mut counts = vec![0u32; entries.len()];
    loop {
        let mut i = 0;
        while i < entries.len() && counts[i] == entries[i].1 {
            counts[i] = 0;
            i += 1;
        }
        if i == entries.len() {
            break;
        }
        counts[i] += 1;
        out.push(Multiset::from_entries(
            entries.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(&(k, _), &c)| (k, c)),
        ));
    }
    out
}

/// Unordered decompositions of `m` into 2..=`max_parts` nonempty parts.
/// Parts are emitted in nondecreasing order so each decomposition appears once.
fn partitions(rem: &Multiset, max_parts: usize, acc: &mut Vec<Multiset>, out: &mut Vec<Vec<Multiset>>) {
    if rem.is_empty() {
        if acc.len() >= 2 {
            out.push(acc.clone());
        }
        return;
    }
    let left = max_parts - acc.len();
    if left == 0 {
        return;
    }
    if left == 1 {
        if acc.last().is_some_and(|last| rem >= last) {
            acc.push(rem.clone());
            out.push(acc.clone());
            acc.pop();
        }
        return;
    }
    for part in submultisets(rem) {
        if acc.last().is_some_and(|last| &part < last) {
            continue;
        }
        if acc.is_empty() && part == *rem {
            continue;
        }
        let next = rem.complement(&part).expect("part drawn from remainder");
        acc.push(part);
        partitions(&next, max_parts, acc, out);
        acc.pop();
    }
}

fn high_degree_monomials(p: &PolynomialProgram, d: usize) -> Vec<Multiset> {
    p.nonlinear_monomials()
        .into_iter()
        .filter(|m| m.size() > d)
        .collect()
}

/// Scheme 1: the chain `C_J` for every monomial of size above `d`.
pub fn apply_scheme1(p: &PolynomialProgram, d: usize) -> Result<ReducedProgram, ReductionError> {
    let mut r = Reducer::new(d, usize::MAX)?;
    for j in high_degree_monomials(p, d) {
        r.chain(&j)?;
    }
    Ok(r.finish(p, Scheme::S1))
}

fn enumerate_all(r: &mut Reducer, subs: BTreeSet<(usize, Multiset)>) -> Result<(), ReductionError> {
    for (_, m) in &subs {
        r.aux(m);
        r.check_cap()?;
    }
    for (_, m) in subs {
        r.decompositions(&m)?;
    }
    Ok(())
}

/// Scheme 2: every submultiset of size at least 2 of every J-set larger
/// than `d`, with a row per decomposition.
pub fn apply_scheme2(p: &PolynomialProgram, d: usize, cap: usize) -> Result<ReducedProgram, ReductionError> {
    let mut r = Reducer::new(d, cap)?;
    let mut subs = BTreeSet::new();
    for j in compute_jsets(&p.nonlinear_monomials()) {
        if j.size() > d {
            for s in submultisets(&j) {
                if s.size() >= 2 {
                    subs.insert((s.size(), s));
                }
            }
            if subs.len() > cap {
                return Err(ReductionError::ResourceLimit {
                    generated: subs.len(),
                    cap,
                });
            }
        }
    }
    enumerate_all(&mut r, subs)?;
    Ok(r.finish(p, Scheme::S2))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Scheme 3: every multiset of size 2..=δ over the variables, with a row per
/// decomposition. Only needed when δ exceeds `d`.
pub fn apply_scheme3(p: &PolynomialProgram, d: usize, cap: usize) -> Result<ReducedProgram, ReductionError> {
    let mut r = Reducer::new(d, cap)?;
    let delta = p.degree();
    let n = p.n();
    if delta <= d || n == 0 {
        return Ok(r.finish(p, Scheme::S3));
    }
    let total: f64 = (2..=delta).map(|s| binomial(n + s - 1, s)).sum();
    if total > cap as f64 {
        return Err(ReductionError::ResourceLimit {
            generated: total.min(usize::MAX as f64) as usize,
            cap,
        });
    }
    let subs = all_multisets(n, delta)
        .into_iter()
        .filter(|m| m.size() >= 2)
        .map(|m| (m.size(), m))
        .collect();
    enumerate_all(&mut r, subs)?;
    Ok(r.finish(p, Scheme::S3))
}

/// All multisets of size 1..=`max` over atoms `0..n`.
pub fn all_multisets(n: usize, max: usize) -> Vec<Multiset> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = Vec::new();
    fn rec(n: u32, max: usize, start: u32, cur: &mut Vec<u32>, out: &mut Vec<Multiset>) {
        if !cur.is_empty() {
            out.push(Multiset::from_atoms(cur.iter().copied()));
        }
        if cur.len() == max {
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(n, max, j, cur, out);
            cur.pop();
        }
    }
    rec(n as u32, max, 0, &mut cur, &mut out);
    out
}

/// QUAD-RLT: process monomials above `d` from the highest degree down, each
/// reusing the largest problem monomial it strictly contains.
pub fn apply_quadrlt(p: &PolynomialProgram, d: usize) -> Result<ReducedProgram, ReductionError> {
    let mut r = Reducer::new(d, usize::MAX)?;
    let mons = p.nonlinear_monomials();
    let mut high: Vec<Multiset> = mons.iter().filter(|m| m.size() > d).cloned().collect();
    high.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.cmp(b)));
    let pool: BTreeSet<Multiset> = mons.into_iter().collect();
    for j in &high {
        if r.is_defined(j) {
            continue;
        }
        let seed = pool
            .iter()
            .filter(|c| c.size() < j.size() && j.contains_multiset(c))
            .fold(None::<&Multiset>, |best, c| match best {
                Some(b) if b.size() >= c.size() => Some(b),
                _ => Some(c),
            });
        match seed {
            Some(jp) => r.chain_from(j, jp)?,
            None => r.chain(j)?,
        }
    }
    Ok(r.finish(p, Scheme::QuadRlt))
}

// ---------------------------------------------------------------------------
// text output

fn write_key(out: &mut String, k: VarKey) {
    match k {
        VarKey::Atom(j) => write!(out, " {}", j + 1).unwrap(),
        VarKey::Aux(a) => write!(out, " q{}", a + 1).unwrap(),
    }
}

fn write_poly_terms(out: &mut String, poly: &Polynomial) {
    for (i, (m, c)) in poly.terms().enumerate() {
        if i > 0 {
            out.push_str(" ;");
        }
        write!(out, " {c}").unwrap();
        for k in m.iter() {
            write_key(out, k);
        }
    }
}

/// Problem format with auxes written `qN`, an `aux` section giving each
/// aux's atom multiset, and a `defining` section of `qN = keys...` rows.
pub fn serialize_reduced(rp: &ReducedProgram) -> String {
    let mut out = String::new();
    writeln!(out, "# scheme {} degree {}", rp.scheme, rp.d).unwrap();
    out.push_str("vars\n");
    for v in &rp.source.vars {
        writeln!(out, "{} {} {}", v.name, v.lb, v.ub).unwrap();
    }
    if !rp.aux_defs.is_empty() {
        out.push_str("aux\n");
        for (a, def) in rp.aux_defs.iter().enumerate() {
            write!(out, "q{}", a + 1).unwrap();
            for k in def.iter() {
                write_key(&mut out, k);
            }
            out.push('\n');
        }
    }
    out.push_str("objective\n");
    for (m, c) in rp.objective.terms() {
        write!(out, "{c}").unwrap();
        for k in m.iter() {
            write_key(&mut out, k);
        }
        out.push('\n');
    }
    if !rp.constraints.is_empty() {
        out.push_str("constraints\n");
        for c in &rp.constraints {
            write!(out, "{} {}", c.sense.symbol(), c.rhs).unwrap();
            write_poly_terms(&mut out, &c.poly);
            out.push('\n');
        }
    }
    if !rp.defining.is_empty() {
        out.push_str("defining\n");
        for row in &rp.defining {
            write!(out, "q{} =", row.aux + 1).unwrap();
            for k in row.rhs.iter() {
                write_key(&mut out, k);
            }
            out.push('\n');
        }
    }
    out
}
