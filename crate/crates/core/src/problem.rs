//! Polynomial program model, text/JSON file format and evaluation.
//!
//! Text format (`#` starts a comment, indices are 1-based):
//!
//! ```text
//! vars
//! x1 0 1
//! x2 0 2
//! objective
//! 1 1 2          # x1*x2
//! -3 2           # -3*x2
//! constraints
//! >= 1 2 1 ; 1 2 2   # 2*x1 + x2^2 >= 1
//! ```
//!
//! Every objective line is `coef idx...`; zero indices is a constant term.
//! Constraint lines are `sense rhs term ; term ; ...` with sense one of
//! `>=`, `=`, `<=`. A `<=` row is stored as the negated `>=` row.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Multiset, Polynomial, VarKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("variable {var} has negative lower bound {lb}")]
    NegativeLowerBound { var: String, lb: f64 },
    #[error("variable {var} has invalid bounds [{lb}, {ub}]")]
    InvalidBounds { var: String, lb: f64, ub: f64 },
    #[error("objective has no terms")]
    EmptyObjective,
    #[error("line {line}: unknown variable index {index}")]
    UnknownVariable { line: usize, index: usize },
    #[error("point has {got} coordinates, program has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid JSON problem: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    /// `poly >= rhs`
    Ge,
    /// `poly = rhs`
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub poly: Polynomial,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(poly: Polynomial, sense: Sense, rhs: f64) -> Self {
        Constraint { poly, sense, rhs }
    }

    /// Signed violation at a point (0 when satisfied).
    pub fn violation_with<F: Fn(VarKey) -> f64>(&self, value: F) -> f64 {
        let lhs = self.poly.evaluate_with(value);
        match self.sense {
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Minimize `objective` subject to `constraints` over the box given by the
/// variable bounds. Inequalities are kept ahead of equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialProgram {
    pub vars: Vec<Variable>,
    pub objective: Polynomial,
    pub constraints: Vec<Constraint>,
}

impl PolynomialProgram {
    /// Validates the box and reorders constraints (GE block first).
    pub fn new(
        vars: Vec<Variable>,
        objective: Polynomial,
        mut constraints: Vec<Constraint>,
    ) -> Result<Self, ProblemError> {
        for v in &vars {
            if !(v.lb.is_finite() && v.ub.is_finite()) || v.lb > v.ub {
                return Err(ProblemError::InvalidBounds {
                    var: v.name.clone(),
                    lb: v.lb,
                    ub: v.ub,
                });
            }
            if v.lb < 0.0 {
                return Err(ProblemError::NegativeLowerBound {
                    var: v.name.clone(),
                    lb: v.lb,
                });
            }
        }
        let n = vars.len();
        let polys = std::iter::once(&objective).chain(constraints.iter().map(|c| &c.poly));
        for p in polys {
            for k in p.keys() {
                match k {
                    VarKey::Atom(j) if (j as usize) < n => {}
                    _ => {
                        return Err(ProblemError::UnknownVariable {
                            line: 0,
                            index: key_index(k),
                        })
                    }
                }
            }
        }
        constraints.sort_by_key(|c| c.sense == Sense::Eq);
        Ok(PolynomialProgram {
            vars,
            objective,
            constraints,
        })
    }

    /// Box-only program with variables named `x1..xn`.
    pub fn with_box(bounds: &[(f64, f64)], objective: Polynomial) -> Result<Self, ProblemError> {
        let vars = bounds
            .iter()
            .enumerate()
            .map(|(j, &(lb, ub))| Variable {
                name: format!("x{}", j + 1),
                lb,
                ub,
            })
            .collect();
        Self::new(vars, objective, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.vars.iter().map(|v| (v.lb, v.ub)).collect()
    }

    /// Number of inequality rows (they come first).
    pub fn num_inequalities(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.sense == Sense::Ge)
            .count()
    }

    pub fn degree(&self) -> usize {
        std::iter::once(&self.objective)
            .chain(self.constraints.iter().map(|c| &c.poly))
            .map(Polynomial::degree)
            .max()
            .unwrap_or(0)
    }

    /// Distinct monomials of degree >= 2 across objective and constraints.
    pub fn nonlinear_monomials(&self) -> Vec<Multiset> {
        let mut out: Vec<Multiset> = std::iter::once(&self.objective)
            .chain(self.constraints.iter().map(|c| &c.poly))
            .flat_map(|p| p.terms().map(|(m, _)| m.clone()))
            .filter(|m| m.size() >= 2)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn evaluate_objective(&self, point: &[f64]) -> Result<f64, ProblemError> {
        self.check_dim(point)?;
        evaluate(&self.objective, point)
    }

    /// Largest constraint or bound violation at `point`.
    pub fn max_violation(&self, point: &[f64]) -> Result<f64, ProblemError> {
        self.check_dim(point)?;
        let val = |k: VarKey| match k {
            VarKey::Atom(j) => point[j as usize],
            VarKey::Aux(_) => f64::NAN,
        };
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(point) {
            worst = worst.max(v.lb - x).max(x - v.ub);
        }
        for c in &self.constraints {
            worst = worst.max(c.violation_with(val));
        }
        Ok(worst)
    }

    pub fn is_feasible(&self, point: &[f64], tol: f64) -> Result<bool, ProblemError> {
        Ok(self.max_violation(point)? <= tol)
    }

    fn check_dim(&self, point: &[f64]) -> Result<(), ProblemError> {
        if point.len() != self.n() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n(),
                got: point.len(),
            });
        }
        Ok(())
    }
}

fn key_index(k: VarKey) -> usize {
    match k {
        VarKey::Atom(j) | VarKey::Aux(j) => j as usize + 1,
    }
}

/// Evaluates a polynomial over original variables at `point`.
pub fn evaluate(poly: &Polynomial, point: &[f64]) -> Result<f64, ProblemError> {
    for k in poly.keys() {
        match k {
            VarKey::Atom(j) if (j as usize) < point.len() => {}
            _ => {
                return Err(ProblemError::DimensionMismatch {
                    expected: key_index(k),
                    got: point.len(),
                })
            }
        }
    }
    Ok(poly.evaluate_with(|k| match k {
        VarKey::Atom(j) => point[j as usize],
        VarKey::Aux(_) => unreachable!(),
    }))
}

// ---------------------------------------------------------------------------
// text format

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Vars,
    Objective,
    Constraints,
}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in line.char_indices() {
        let sep = ch.is_whitespace() || ch == ';';
        match (sep, start) {
            (true, Some(s)) => {
                out.push(Tok {
                    text: &line[s..i],
                    col: s + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
        if ch == ';' {
            out.push(Tok {
                text: &line[i..i + 1],
                col: i + 1,
            });
        }
    }
    if let Some(s) = start {
        out.push(Tok {
            text: &line[s..],
            col: s + 1,
        });
    }
    out
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ProblemError {
    ProblemError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn parse_f64(t: &Tok<'_>, line: usize) -> Result<f64, ProblemError> {
    t.text
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, t.col, format!("expected a number, found `{}`", t.text)))
}

fn parse_term(toks: &[Tok<'_>], line: usize, n: usize) -> Result<(f64, Multiset), ProblemError> {
    let coef = parse_f64(&toks[0], line)?;
    let mut ids = Vec::with_capacity(toks.len() - 1);
    for t in &toks[1..] {
        let idx: usize = t.text.parse().map_err(|_| {
            syntax(line, t.col, format!("expected a variable index, found `{}`", t.text))
        })?;
        if idx == 0 || idx > n {
            return Err(ProblemError::UnknownVariable { line, index: idx });
        }
        ids.push(idx as u32 - 1);
    }
    Ok((coef, Multiset::from_atoms(ids)))
}

/// Parses the text format, or JSON when the input starts with `{`.
pub fn parse_problem(text: &str) -> Result<PolynomialProgram, ProblemError> {
    if text.trim_start().starts_with('{') {
        return parse_problem_json(text);
    }
    let mut section = Section::None;
    let mut vars: Vec<Variable> = Vec::new();
    let mut objective = Polynomial::zero();
    let mut objective_terms = 0usize;
    let mut constraints = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokenize(content);
        if toks.is_empty() {
            continue;
        }
        if toks.len() == 1 {
            let next = match toks[0].text {
                "vars" => Some(Section::Vars),
                "objective" => Some(Section::Objective),
                "constraints" => Some(Section::Constraints),
                _ => None,
            };
            if let Some(s) = next {
                section = s;
                continue;
            }
        }
        match section {
            Section::None => {
                return Err(syntax(line, toks[0].col, "expected a section header"));
            }
            Section::Vars => {
                if toks.len() != 3 {
                    return Err(syntax(line, toks[0].col, "expected `name lb ub`"));
                }
                if objective_terms > 0 || !constraints.is_empty() {
                    return Err(syntax(line, 1, "variables must be declared first"));
                }
                vars.push(Variable {
                    name: toks[0].text.to_string(),
                    lb: parse_f64(&toks[1], line)?,
                    ub: parse_f64(&toks[2], line)?,
                });
            }
            Section::Objective => {
                if let Some(t) = toks.iter().find(|t| t.text == ";") {
                    return Err(syntax(line, t.col, "`;` not allowed in objective"));
                }
                let (c, m) = parse_term(&toks, line, vars.len())?;
                objective.add_term(c, m);
                objective_terms += 1;
            }
            Section::Constraints => {
                if toks.len() < 3 {
                    return Err(syntax(line, toks[0].col, "expected `sense rhs terms...`"));
                }
                let flip = match toks[0].text {
                    ">=" => Some(false),
                    "=" | "==" => None,
                    "<=" => Some(true),
                    other => {
                        return Err(syntax(line, toks[0].col, format!("unknown sense `{other}`")))
                    }
                };
                let rhs = parse_f64(&toks[1], line)?;
                let mut poly = Polynomial::zero();
                for chunk in toks[2..].split(|t| t.text == ";") {
                    if chunk.is_empty() {
                        continue;
                    }
                    let (c, m) = parse_term(chunk, line, vars.len())?;
                    poly.add_term(c, m);
                }
                let c = match flip {
                    None => Constraint::new(poly, Sense::Eq, rhs),
                    Some(false) => Constraint::new(poly, Sense::Ge, rhs),
                    Some(true) => Constraint::new(poly.scale(-1.0), Sense::Ge, -rhs),
                };
                constraints.push(c);
            }
        }
    }
    if objective_terms == 0 {
        return Err(ProblemError::EmptyObjective);
    }
    PolynomialProgram::new(vars, objective, constraints)
}

#[derive(Serialize, Deserialize)]
struct JsonVar {
    name: String,
    lb: f64,
    ub: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonConstraint {
    sense: String,
    rhs: f64,
    terms: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JsonProblem {
    vars: Vec<JsonVar>,
    objective: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<JsonConstraint>,
}

fn json_term(t: &[f64], n: usize) -> Result<(f64, Multiset), ProblemError> {
    let (&coef, idx) = t
        .split_first()
        .ok_or_else(|| ProblemError::Json("empty term".into()))?;
    let mut ids = Vec::with_capacity(idx.len());
    for &i in idx {
        if i.fract() != 0.0 || i < 1.0 {
            return Err(ProblemError::Json(format!("bad variable index {i}")));
        }
        let i = i as usize;
        if i > n {
            return Err(ProblemError::UnknownVariable { line: 0, index: i });
        }
        ids.push(i as u32 - 1);
    }
    Ok((coef, Multiset::from_atoms(ids)))
}

fn parse_problem_json(text: &str) -> Result<PolynomialProgram, ProblemError> {
    let jp: JsonProblem =
        serde_json::from_str(text).map_err(|e| ProblemError::Json(e.to_string()))?;
    let vars: Vec<Variable> = jp
        .vars
        .into_iter()
        .map(|v| Variable {
            name: v.name,
            lb: v.lb,
            ub: v.ub,
        })
        .collect();
    let n = vars.len();
    if jp.objective.is_empty() {
        return Err(ProblemError::EmptyObjective);
    }
    let mut objective = Polynomial::zero();
    for t in &jp.objective {
        let (c, m) = json_term(t, n)?;
        objective.add_term(c, m);
    }
    let mut constraints = Vec::new();
    for jc in jp.constraints {
        let mut poly = Polynomial::zero();
        for t in &jc.terms {
            let (c, m) = json_term(t, n)?;
            poly.add_term(c, m);
        }
        constraints.push(match jc.sense.as_str() {
            ">=" => Constraint::new(poly, Sense::Ge, jc.rhs),
            "=" | "==" => Constraint::new(poly, Sense::Eq, jc.rhs),
            "<=" => Constraint::new(poly.scale(-1.0), Sense::Ge, -jc.rhs),
            s => return Err(ProblemError::Json(format!("unknown sense `{s}`"))),
        });
    }
    PolynomialProgram::new(vars, objective, constraints)
}

fn write_term(out: &mut String, coef: f64, m: &Multiset) {
    write!(out, "{coef}").unwrap();
    for k in m.iter() {
        if let VarKey::Atom(j) = k {
            write!(out, " {}", j + 1).unwrap();
        }
    }
}

/// Deterministic text form; `parse_problem` reads it back to an equal program.
pub fn serialize_problem(p: &PolynomialProgram) -> String {
    let mut out = String::new();
    out.push_str("vars\n");
    for v in &p.vars {
        writeln!(out, "{} {} {}", v.name, v.lb, v.ub).unwrap();
    }
    out.push_str("objective\n");
    if p.objective.is_empty() {
        out.push_str("0\n");
    }
    for (m, c) in p.objective.terms() {
        write_term(&mut out, c, m);
        out.push('\n');
    }
    if !p.constraints.is_empty() {
        out.push_str("constraints\n");
        let ordered = p
            .constraints
            .iter()
            .filter(|c| c.sense == Sense::Ge)
            .chain(p.constraints.iter().filter(|c| c.sense == Sense::Eq));
        for c in ordered {
            write!(out, "{} {}", c.sense.symbol(), c.rhs).unwrap();
            for (i, (m, coef)) in c.poly.terms().enumerate() {
                out.push_str(if i == 0 { " " } else { " ; " });
                write_term(&mut out, coef, m);
            }
            out.push('\n');
        }
    }
    out
}

/// JSON form with the same field names as the text sections.
pub fn serialize_problem_json(p: &PolynomialProgram) -> String {
    let term = |m: &Multiset, c: f64| -> Vec<f64> {
        std::iter::once(c)
            .chain(m.iter().map(|k| key_index(k) as f64))
            .collect()
    };
    let jp = JsonProblem {
        vars: p
            .vars
            .iter()
            .map(|v| JsonVar {
                name: v.name.clone(),
                lb: v.lb,
                ub: v.ub,
            })
            .collect(),
        objective: p.objective.terms().map(|(m, c)| term(m, c)).collect(),
        constraints: p
            .constraints
            .iter()
            .map(|c| JsonConstraint {
                sense: c.sense.symbol().to_string(),
                rhs: c.rhs,
                terms: c.poly.terms().map(|(m, k)| term(m, k)).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&jp).expect("problem serializes")
}
