//! Turns a decoded tree into concrete equations, solves them and grades
//! the result against gold answers.
//!
//! Each side is expanded exactly into a quotient of polynomials in `x, y`
//! with rational coefficients. One-unknown problems of degree at most two
//! use closed forms; higher degrees fall back to bracketed bisection. Two
//! unknowns are supported for linear systems.

mod poly;
mod roots;

use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uet::{Decimal, ExprNode, ExprView, Operator, TargetSymbol, Unknown};

pub use poly::{Poly, RatFn};
pub use roots::{horner, real_roots, RootSearch};

/// Default relative tolerance of `check_answer`.
pub const ANSWER_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("slot n{0} has no value")]
    UnresolvedSlot(usize),
    #[error("malformed equation tree: {0}")]
    Malformed(String),
}

/// Arithmetic over numbers and unknowns.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Decimal),
    Var(Unknown),
    Bin(Operator, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Expr {
    pub fn eval(&self, point: [f64; 2]) -> f64 {
        match self {
            Expr::Num(d) => d.to_f64(),
            Expr::Var(u) => point[u.index()],
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(point), r.eval(point));
                match op {
                    Operator::Add => a + b,
                    Operator::Sub => a - b,
                    Operator::Mul => a * b,
                    Operator::Div => a / b,
                    Operator::Pow => a.powf(b),
                    Operator::Eq | Operator::Seq => f64::NAN,
                }
            }
        }
    }

    /// Upper bound on intermediate magnitudes, used to scale residuals.
    fn magnitude(&self, point: [f64; 2]) -> f64 {
        match self {
            Expr::Num(d) => d.to_f64().abs(),
            Expr::Var(u) => point[u.index()].abs(),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.magnitude(point), r.magnitude(point));
                match op {
                    Operator::Add | Operator::Sub => a + b,
                    Operator::Mul => a * b,
                    Operator::Div => a / r.eval(point).abs(),
                    Operator::Pow => a.powf(r.eval(point)),
                    Operator::Eq | Operator::Seq => f64::NAN,
                }
            }
        }
    }

    fn uses(&self, u: Unknown) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == u,
            Expr::Bin(_, l, r) => l.uses(u) || r.uses(u),
        }
    }

    fn to_ratfn(&self) -> Result<RatFn, Reject> {
        Ok(match self {
            Expr::Num(d) => RatFn::poly(Poly::constant(d.to_rational())),
            Expr::Var(u) => RatFn::poly(Poly::var(u.index())),
            Expr::Bin(op, l, r) => {
                let a = l.to_ratfn()?;
                let b = r.to_ratfn()?;
                let overflow = || Reject::Unsupported("expansion exceeds the degree limit".into());
                match op {
                    Operator::Add => a.add(&b).ok_or_else(overflow)?,
                    Operator::Sub => a.sub(&b).ok_or_else(overflow)?,
                    Operator::Mul => a.mul(&b).ok_or_else(overflow)?,
                    Operator::Div => a.div(&b).map_err(|_| Reject::DivisionByZero)?.ok_or_else(overflow)?,
                    Operator::Pow => {
                        let k = b
                            .as_constant()
                            .filter(|k| k.is_integer() && !k.is_negative() && *k <= BigRational::from_integer(4.into()))
                            .ok_or_else(|| {
                                Reject::Unsupported("exponent must be an integer constant in 0..=4".into())
                            })?;
                        a.pow(k.to_integer().to_u32().unwrap_or(0)).ok_or_else(overflow)?
                    }
                    Operator::Eq | Operator::Seq => return Err(Reject::Unsupported("nested relation".into())),
                }
            }
        })
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        match self {
            Expr::Num(d) if d.is_negative() => write!(f, "({})", d.canonical()),
            Expr::Num(d) => write!(f, "{}", d.canonical()),
            Expr::Var(u) => f.write_str(u.name()),
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                let wrap = p < parent || (right && p == parent);
                if wrap {
                    f.write_str("(")?;
                }
                l.fmt_prec(f, p, false)?;
                f.write_str(op.symbol())?;
                r.fmt_prec(f, p, true)?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.lhs, self.rhs)
    }
}

impl Equation {
    /// `|lhs - rhs| / max(1, magnitude)` at a point.
    pub fn residual(&self, point: [f64; 2]) -> f64 {
        let diff = (self.lhs.eval(point) - self.rhs.eval(point)).abs();
        let scale = self.lhs.magnitude(point).max(self.rhs.magnitude(point)).max(1.0);
        diff / scale
    }

    fn uses(&self, u: Unknown) -> bool {
        self.lhs.uses(u) || self.rhs.uses(u)
    }
}

enum Reject {
    DivisionByZero,
    Unsupported(String),
}

fn side(node: &ExprNode, slots: &[Decimal]) -> Result<Expr, SolveError> {
    Ok(match node.view() {
        ExprView::Leaf(TargetSymbol::Slot(i)) => {
            Expr::Num(slots.get(*i).cloned().ok_or(SolveError::UnresolvedSlot(*i))?)
        }
        ExprView::Leaf(TargetSymbol::Const(d)) => Expr::Num(d.clone()),
        ExprView::Leaf(TargetSymbol::Unknown(u)) => Expr::Var(*u),
        ExprView::Leaf(TargetSymbol::Op(op)) => {
            return Err(SolveError::Malformed(format!("operator {op:?} as a leaf")))
        }
        ExprView::Binary(op @ (Operator::Eq | Operator::Seq), ..) => {
            return Err(SolveError::Malformed(format!("'{}' inside an expression", op.symbol())))
        }
        ExprView::Binary(op, l, r) => Expr::Bin(op, Box::new(side(l, slots)?), Box::new(side(r, slots)?)),
    })
}

/// Splits the `;` chain and replaces slots by their values.
pub fn substitute(tree: &ExprNode, slots: &[Decimal]) -> Result<Vec<Equation>, SolveError> {
    tree.equations()
        .into_iter()
        .map(|eq| match eq.view() {
            ExprView::Binary(Operator::Eq, l, r) => Ok(Equation {
                lhs: side(l, slots)?,
                rhs: side(r, slots)?,
            }),
            _ => Err(SolveError::Malformed("equation not rooted at '='".into())),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Solved,
    NoSolution,
    Infinite,
    Unsupported,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Solved => "solved",
            SolveStatus::NoSolution => "no-solution",
            SolveStatus::Infinite => "infinite",
            SolveStatus::Unsupported => "unsupported",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub status: SolveStatus,
    pub unknowns: Vec<Unknown>,
    /// One assignment per solution, aligned with `unknowns`.
    pub solutions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl SolutionSet {
    fn with(status: SolveStatus, unknowns: &[Unknown]) -> Self {
        SolutionSet {
            status,
            unknowns: unknowns.to_vec(),
            solutions: Vec::new(),
            reason: None,
        }
    }

    fn unsupported(unknowns: &[Unknown], reason: impl Into<String>) -> Self {
        SolutionSet {
            reason: Some(reason.into()),
            ..Self::with(SolveStatus::Unsupported, unknowns)
        }
    }

    fn solved(unknowns: &[Unknown], solutions: Vec<Vec<f64>>) -> Self {
        if solutions.is_empty() {
            return Self::with(SolveStatus::NoSolution, unknowns);
        }
        SolutionSet {
            solutions,
            ..Self::with(SolveStatus::Solved, unknowns)
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.solutions.iter().flatten().copied()
    }
}

impl fmt::Display for SolutionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "status: {}", self.status)?;
        if let Some(r) = &self.reason {
            writeln!(f, "reason: {r}")?;
        }
        for s in &self.solutions {
            let parts: Vec<String> = self
                .unknowns
                .iter()
                .zip(s)
                .map(|(u, v)| format!("{} = {v}", u.name()))
                .collect();
            writeln!(f, "{}", parts.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub roots: RootSearch,
    /// Accepted residual, relative to the magnitude of the equation terms.
    pub residual: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            roots: RootSearch::default(),
            residual: 1e-6,
        }
    }
}

pub fn solve(equations: &[Equation], unknowns: &[Unknown]) -> SolutionSet {
    solve_with(equations, unknowns, &SolveConfig::default())
}

/// Substitutes and solves; malformed trees come back as unsupported.
pub fn solve_tree(tree: &ExprNode, slots: &[Decimal], unknowns: &[Unknown]) -> SolutionSet {
    match substitute(tree, slots) {
        Ok(eqs) => solve(&eqs, unknowns),
        Err(e) => SolutionSet::unsupported(unknowns, e.to_string()),
    }
}

struct Expanded {
    /// Numerator of `lhs - rhs`.
    numerator: Poly,
    denominators: [Poly; 2],
}

pub fn solve_with(equations: &[Equation], unknowns: &[Unknown], cfg: &SolveConfig) -> SolutionSet {
    if equations.is_empty() {
        return SolutionSet::unsupported(unknowns, "no equations");
    }
    if unknowns.is_empty() || unknowns.len() > 2 {
        return SolutionSet::unsupported(unknowns, "expected one or two unknowns");
    }
    for u in Unknown::ALL {
        if !unknowns.contains(&u) && equations.iter().any(|e| e.uses(u)) {
            return SolutionSet::unsupported(unknowns, format!("unexpected unknown {}", u.name()));
        }
    }
    let mut expanded = Vec::with_capacity(equations.len());
    for eq in equations {
        let (l, r) = match (eq.lhs.to_ratfn(), eq.rhs.to_ratfn()) {
            (Ok(l), Ok(r)) => (l, r),
            (Err(Reject::DivisionByZero), _) | (_, Err(Reject::DivisionByZero)) => {
                return SolutionSet::with(SolveStatus::NoSolution, unknowns)
            }
            (Err(Reject::Unsupported(m)), _) | (_, Err(Reject::Unsupported(m))) => {
                return SolutionSet::unsupported(unknowns, m)
            }
        };
        let numerator = match (l.num.mul(&r.den), r.num.mul(&l.den)) {
            (Some(a), Some(b)) => a.sub(&b),
            _ => return SolutionSet::unsupported(unknowns, "expansion exceeds the degree limit"),
        };
        expanded.push(Expanded {
            numerator,
            denominators: [l.den, r.den],
        });
    }
    if expanded
        .iter()
        .any(|e| e.numerator.as_constant().is_some_and(|c| !c.is_zero()))
    {
        return SolutionSet::with(SolveStatus::NoSolution, unknowns);
    }
    if unknowns.len() == 1 {
        solve_one(equations, &expanded, unknowns, cfg)
    } else {
        solve_two(&expanded, unknowns)
    }
}

/// Highest total degree of the cleared equations, or `None` if a side
/// cannot be expanded (unsupported power, division by zero, overflow).
pub fn polynomial_degree(equations: &[Equation]) -> Option<u32> {
    let mut degree = 0;
    for eq in equations {
        let l = eq.lhs.to_ratfn().ok()?;
        let r = eq.rhs.to_ratfn().ok()?;
        let n = l.num.mul(&r.den)?.sub(&r.num.mul(&l.den)?);
        degree = degree.max(n.total_degree());
    }
    Some(degree)
}

/// A candidate root, exact when it came from a closed form.
struct Root {
    value: f64,
    exact: Option<BigRational>,
}

fn closed_form(c: &[BigRational]) -> Vec<Root> {
    let exact = |r: BigRational| Root {
        value: poly::ratio_to_f64(&r),
        exact: Some(r),
    };
    match c.len() {
        2 => vec![exact(-&c[0] / &c[1])],
        3 => {
            let (a, b, cc) = (&c[2], &c[1], &c[0]);
            let four = BigRational::from_integer(4.into());
            let disc = b * b - &four * a * cc;
            if disc.is_negative() {
                return Vec::new();
            }
            let two_a = a + a;
            if let Some(s) = poly::exact_sqrt(&disc) {
                let mut r = vec![exact((-b - &s) / &two_a), exact((-b + &s) / &two_a)];
                r.sort_by(|x, y| x.value.partial_cmp(&y.value).unwrap());
                if r[0].exact == r[1].exact {
                    r.pop();
                }
                return r;
            }
            // Cancellation-free form of the quadratic formula.
            let (af, bf, cf) = (poly::ratio_to_f64(a), poly::ratio_to_f64(b), poly::ratio_to_f64(cc));
            let sd = poly::ratio_to_f64(&disc).sqrt();
            let q = -0.5 * (bf + if bf >= 0.0 { sd } else { -sd });
            let mut r = [q / af, cf / q];
            r.sort_by(|x, y| x.partial_cmp(y).unwrap());
            r.into_iter().map(|value| Root { value, exact: None }).collect()
        }
        _ => Vec::new(),
    }
}

fn solve_one(equations: &[Equation], expanded: &[Expanded], unknowns: &[Unknown], cfg: &SolveConfig) -> SolutionSet {
    let u = unknowns[0].index();
    let Some(pivot) = expanded.iter().find(|e| !e.numerator.is_zero()) else {
        return SolutionSet::with(SolveStatus::Infinite, unknowns);
    };
    let coeffs = pivot.numerator.univariate(u).expect("only the declared unknown occurs");
    let candidates = if coeffs.len() <= 3 {
        closed_form(&coeffs)
    } else {
        let scale = coeffs.iter().map(|c| poly::ratio_to_f64(c).abs()).fold(0.0, f64::max);
        let f: Vec<f64> = coeffs.iter().map(|c| poly::ratio_to_f64(c) / scale).collect();
        real_roots(&f, &cfg.roots)
            .into_iter()
            .map(|value| Root { value, exact: None })
            .collect()
    };
    let mut point = [0.0; 2];
    let mut out = Vec::new();
    for root in candidates {
        point[u] = root.value;
        let defined = expanded.iter().all(|e| {
            e.denominators.iter().all(|q| match &root.exact {
                Some(r) => {
                    let mut p = [&BigRational::zero(), &BigRational::zero()];
                    p[u] = r;
                    !q.eval_exact(p).is_zero()
                }
                None => q.eval(point).abs() > 1e-12 * q.scale_f64().max(1.0),
            })
        });
        let satisfied = expanded.iter().zip(equations).all(|(e, eq)| match &root.exact {
            Some(r) => {
                let mut p = [&BigRational::zero(), &BigRational::zero()];
                p[u] = r;
                e.numerator.eval_exact(p).is_zero()
            }
            None => eq.residual(point) < cfg.residual,
        });
        if defined && satisfied && root.value.is_finite() {
            out.push(vec![root.value]);
        }
    }
    SolutionSet::solved(unknowns, out)
}

fn solve_two(expanded: &[Expanded], unknowns: &[Unknown]) -> SolutionSet {
    let (iu, iv) = (unknowns[0].index(), unknowns[1].index());
    let mut rows = Vec::new();
    for e in expanded {
        if e.numerator.is_zero() {
            continue;
        }
        if e.numerator.total_degree() > 1 {
            return SolutionSet::unsupported(unknowns, "nonlinear system in two unknowns");
        }
        let mut ea = [0, 0];
        ea[iu] = 1;
        let mut eb = [0, 0];
        eb[iv] = 1;
        rows.push([
            e.numerator.coefficient(ea),
            e.numerator.coefficient(eb),
            e.numerator.coefficient([0, 0]),
        ]);
    }
    let Some(first) = rows.first() else {
        return SolutionSet::with(SolveStatus::Infinite, unknowns);
    };
    let Some(second) = rows
        .iter()
        .skip(1)
        .find(|r| &r[0] * &first[1] - &r[1] * &first[0] != BigRational::zero())
    else {
        // Every row is a multiple of the first in its unknown part.
        let consistent = rows.iter().all(|r| {
            let k = if !first[0].is_zero() {
                &r[0] / &first[0]
            } else {
                &r[1] / &first[1]
            };
            r[2] == &first[2] * k
        });
        let status = if consistent {
            SolveStatus::Infinite
        } else {
            SolveStatus::NoSolution
        };
        return SolutionSet::with(status, unknowns);
    };
    let [a1, b1, c1] = first;
    let [a2, b2, c2] = second;
    let det = a1 * b2 - a2 * b1;
    let x = (b1 * c2 - b2 * c1) / &det;
    let y = (a2 * c1 - a1 * c2) / &det;
    let mut point = [BigRational::zero(), BigRational::zero()];
    point[iu] = x.clone();
    point[iv] = y.clone();
    let p = [&point[0], &point[1]];
    let all_rows = rows.iter().all(|r| (&r[0] * &x + &r[1] * &y + &r[2]).is_zero());
    let defined = expanded
        .iter()
        .all(|e| e.denominators.iter().all(|q| !q.eval_exact(p).is_zero()));
    if !all_rows || !defined {
        return SolutionSet::with(SolveStatus::NoSolution, unknowns);
    }
    SolutionSet::solved(unknowns, vec![vec![poly::ratio_to_f64(&x), poly::ratio_to_f64(&y)]])
}

/// Whether every gold value is matched, within `tol · max(1, |gold|)`, by
/// a distinct value among the flattened solutions.
pub fn check_answer(sol: &SolutionSet, gold: &[f64], tol: f64) -> bool {
    if !sol.is_solved() || gold.is_empty() {
        return false;
    }
    let predicted: Vec<f64> = sol.values().collect();
    let mut used = vec![false; predicted.len()];
    fn assign(gold: &[f64], predicted: &[f64], used: &mut [bool], tol: f64) -> bool {
        let Some((&g, rest)) = gold.split_first() else {
            return true;
        };
        for i in 0..predicted.len() {
            if !used[i] && (predicted[i] - g).abs() <= tol * g.abs().max(1.0) {
                used[i] = true;
                if assign(rest, predicted, used, tol) {
                    return true;
                }
                used[i] = false;
            }
        }
        false
    }
    assign(gold, &predicted, &mut used, tol)
}
