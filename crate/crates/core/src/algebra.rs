//! Multisets of variable keys and sparse polynomials over them.
//!
//! A monomial is identified by the multiset of variables it multiplies
//! (repetition = power). Multisets are stored run-length encoded and kept in
//! canonical order so that equal monomials compare equal regardless of how
//! they were built.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients with absolute value below this are dropped on normalization.
pub const COEF_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("multiset {sub} is not contained in {sup}")]
    NotSubmultiset { sub: String, sup: String },
}

/// A variable of a (possibly reduced) polynomial program.
///
/// `Atom(j)` is original variable `x_j` (0-based), `Aux(a)` is the auxiliary
/// variable with handle `a` created by a reduction scheme. The derived order
/// puts every atom before every auxiliary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarKey {
    Atom(u32),
    Aux(u32),
}

impl VarKey {
    pub fn is_atom(self) -> bool {
        matches!(self, VarKey::Atom(_))
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Atom(j) => write!(f, "x{}", j + 1),
            VarKey::Aux(a) => write!(f, "q{}", a + 1),
        }
    }
}

/// Canonical bag of variable keys: strictly increasing keys, multiplicities >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Multiset {
    entries: Vec<(VarKey, u32)>,
}

impl Multiset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts and merges a flat list of keys.
    pub fn from_keys<I: IntoIterator<Item = VarKey>>(keys: I) -> Self {
        let mut flat: Vec<VarKey> = keys.into_iter().collect();
        flat.sort_unstable();
        let mut entries: Vec<(VarKey, u32)> = Vec::new();
        for k in flat {
            match entries.last_mut() {
                Some((last, m)) if *last == k => *m += 1,
                _ => entries.push((k, 1)),
            }
        }
        Multiset { entries }
    }

    /// Multiset over original variables given by 0-based indices.
    pub fn from_atoms<I: IntoIterator<Item = u32>>(ids: I) -> Self {
        Self::from_keys(ids.into_iter().map(VarKey::Atom))
    }

    pub fn singleton(key: VarKey) -> Self {
        Multiset {
            entries: vec![(key, 1)],
        }
    }

    /// Builds from (key, multiplicity) pairs in any order; zero multiplicities are skipped.
    pub fn from_entries<I: IntoIterator<Item = (VarKey, u32)>>(pairs: I) -> Self {
        let mut map: BTreeMap<VarKey, u32> = BTreeMap::new();
        for (k, m) in pairs {
            if m > 0 {
                *map.entry(k).or_insert(0) += m;
            }
        }
        Multiset {
            entries: map.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(VarKey, u32)] {
        &self.entries
    }

    /// Total number of elements counting repetitions (the monomial degree).
    pub fn size(&self) -> usize {
        self.entries.iter().map(|&(_, m)| m as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct keys.
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn multiplicity(&self, key: VarKey) -> u32 {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(&key))
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn contains(&self, key: VarKey) -> bool {
        self.multiplicity(key) > 0
    }

    /// Expanded element sequence in canonical order, repetitions included.
    pub fn iter(&self) -> impl Iterator<Item = VarKey> + '_ {
        self.entries
            .iter()
            .flat_map(|&(k, m)| std::iter::repeat(k).take(m as usize))
    }

    pub fn to_flat(&self) -> Vec<VarKey> {
        self.iter().collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = VarKey> + '_ {
        self.entries.iter().map(|&(k, _)| k)
    }

    pub fn all_atoms(&self) -> bool {
        self.entries.iter().all(|(k, _)| k.is_atom())
    }

    /// True when no key is repeated.
    pub fn is_set(&self) -> bool {
        self.entries.iter().all(|&(_, m)| m == 1)
    }

    /// Multiset sum: multiplicities add.
    pub fn union(&self, other: &Multiset) -> Multiset {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Multiset { entries: out }
    }

    /// `mult_sub(k) <= mult_self(k)` for every key of `sub`.
    pub fn contains_multiset(&self, sub: &Multiset) -> bool {
        is_submultiset(sub, self)
    }

    /// Elements of `self` left after removing those of `sub`.
    pub fn complement(&self, sub: &Multiset) -> Result<Multiset, AlgebraError> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut j = 0;
        let b = &sub.entries;
        for &(k, m) in &self.entries {
            if j < b.len() && b[j].0 < k {
                return Err(self.not_sub(sub));
            }
            if j < b.len() && b[j].0 == k {
                if b[j].1 > m {
                    return Err(self.not_sub(sub));
                }
                if m > b[j].1 {
                    out.push((k, m - b[j].1));
                }
                j += 1;
            } else {
                out.push((k, m));
            }
        }
        if j < b.len() {
            return Err(self.not_sub(sub));
        }
        Ok(Multiset { entries: out })
    }

    fn not_sub(&self, sub: &Multiset) -> AlgebraError {
        AlgebraError::NotSubmultiset {
            sub: sub.to_string(),
            sup: self.to_string(),
        }
    }

    /// The first `k` elements of the canonical sequence.
    pub fn prefix(&self, k: usize) -> Multiset {
        Multiset::from_keys(self.iter().take(k))
    }

    /// Splits off the last `k` elements of the canonical sequence.
    pub fn split_trailing(&self, k: usize) -> (Multiset, Vec<VarKey>) {
        let flat = self.to_flat();
        let cut = flat.len().saturating_sub(k);
        (Multiset::from_keys(flat[..cut].iter().copied()), flat[cut..].to_vec())
    }

    /// Replaces every key with the multiset it stands for and sums the results.
    pub fn substitute<F>(&self, mut expand: F) -> Multiset
    where
        F: FnMut(VarKey) -> Multiset,
    {
        let mut acc = Multiset::new();
        for &(k, m) in &self.entries {
            let e = expand(k);
            for _ in 0..m {
                acc = acc.union(&e);
            }
        }
        acc
    }

    /// Product of `value(key)` over the elements.
    pub fn product<F: Fn(VarKey) -> f64>(&self, value: F) -> f64 {
        self.entries
            .iter()
            .map(|&(k, m)| value(k).powi(m as i32))
            .product()
    }
}

/// Canonical multiset of a flat key list.
pub fn canonicalize(keys: &[VarKey]) -> Multiset {
    Multiset::from_keys(keys.iter().copied())
}

pub fn is_submultiset(sub: &Multiset, sup: &Multiset) -> bool {
    let mut j = 0;
    let b = &sup.entries;
    for &(k, m) in &sub.entries {
        while j < b.len() && b[j].0 < k {
            j += 1;
        }
        if j == b.len() || b[j].0 != k || b[j].1 < m {
            return false;
        }
        j += 1;
    }
    true
}

impl Ord for Multiset {
    /// Lexicographic on the expanded element sequence; a proper prefix sorts first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for Multiset {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub vars: Multiset,
}

impl Monomial {
    pub fn new(coef: f64, vars: Multiset) -> Self {
        Monomial { coef, vars }
    }

    pub fn degree(&self) -> usize {
        self.vars.size()
    }
}

/// Sparse polynomial keyed by canonical multisets. The empty multiset is the
/// constant term. No stored coefficient is smaller than [`COEF_EPS`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Multiset, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(c, Multiset::new());
        p
    }

    pub fn var(key: VarKey) -> Self {
        Self::monomial(1.0, Multiset::singleton(key))
    }

    pub fn monomial(coef: f64, vars: Multiset) -> Self {
        let mut p = Self::zero();
        p.add_term(coef, vars);
        p
    }

    /// `key - c`
    pub fn affine(key: VarKey, slope: f64, c: f64) -> Self {
        let mut p = Self::monomial(slope, Multiset::singleton(key));
        p.add_term(c, Multiset::new());
        p
    }

    pub fn from_monomials<I: IntoIterator<Item = Monomial>>(monos: I) -> Self {
        let mut p = Self::zero();
        for m in monos {
            p.add_term(m.coef, m.vars);
        }
        p
    }

    /// Adds `coef * vars`, merging with an existing term.
    pub fn add_term(&mut self, coef: f64, vars: Multiset) {
        match self.terms.entry(vars) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += coef;
                if e.get().abs() < COEF_EPS {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                if coef.abs() >= COEF_EPS {
                    e.insert(coef);
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Multiset, f64)> {
        self.terms.iter().map(|(k, &c)| (k, c))
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|(k, &c)| Monomial::new(c, k.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coef(&self, vars: &Multiset) -> f64 {
        self.terms.get(vars).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coef(&Multiset::new())
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Multiset::size).max().unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero();
        for (k, c) in self.terms() {
            out.add_term(c * s, k.clone());
        }
        out
    }

    /// Drops coefficients below `COEF_EPS`.
    pub fn normalized(mut self) -> Polynomial {
        self.terms.retain(|_, c| c.abs() >= COEF_EPS);
        self
    }

    /// Applies `f` to every monomial's multiset, summing collisions.
    pub fn map_monomials<F>(&self, mut f: F) -> Polynomial
    where
        F: FnMut(&Multiset) -> Multiset,
    {
        let mut out = Polynomial::zero();
        for (k, c) in self.terms() {
            out.add_term(c, f(k));
        }
        out
    }

    pub fn evaluate_with<F: Fn(VarKey) -> f64>(&self, value: F) -> f64 {
        self.terms
            .iter()
            .map(|(k, &c)| c * k.product(&value))
            .sum()
    }

    /// Every key appearing in some term.
    pub fn keys(&self) -> impl Iterator<Item = VarKey> + '_ {
        self.terms.keys().flat_map(|m| m.keys())
    }
}

fn mul_raw(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut acc: BTreeMap<Multiset, f64> = BTreeMap::new();
    for (ka, ca) in a.terms() {
        for (kb, cb) in b.terms() {
            *acc.entry(ka.union(kb)).or_insert(0.0) += ca * cb;
        }
    }
    Polynomial { terms: acc }
}

/// Fully distributed product of the factors.
pub fn expand_product(factors: &[Polynomial]) -> Polynomial {
    let mut acc = Polynomial::constant(1.0);
    for f in factors {
        acc = mul_raw(&acc, f);
    }
    acc.normalized()
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (k, c) in rhs.terms() {
            out.add_term(c, k.clone());
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (k, c) in rhs.terms() {
            out.add_term(-c, k.clone());
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        mul_raw(self, rhs).normalized()
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (k, c)) in self.terms().enumerate() {
            let sign = if c < 0.0 { "-" } else if i > 0 { "+" } else { "" };
            if i > 0 {
                write!(f, " {sign} ")?;
            } else {
                write!(f, "{sign}")?;
            }
            let a = c.abs();
            if k.is_empty() {
                write!(f, "{a}")?;
            } else {
                if a != 1.0 {
                    write!(f, "{a}*")?;
                }
                let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                write!(f, "{}", parts.join("*"))?;
            }
        }
        Ok(())
    }
}
