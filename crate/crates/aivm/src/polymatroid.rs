//! Symbolic covering bounds over degree constraints.
//!
//! For an acyclic constraint set `C` the enumeration cost of its guarding
//! query is governed by the linear program
//!
//! ```text
//! minimize   sum_i w_i * p_i
//! subject to sum_{i : A in Z_i - Y_i} w_i >= 1   for every target variable A
//!            w >= 0
//! ```
//!
//! The feasible region depends only on which variables each constraint
//! covers, never on the exponents, so it is independent of `eps`. Its
//! vertices are enumerated once, exactly, over rationals; the bound as a
//! function of `eps` is then the lower envelope of the affine objective
//! values at those vertices. The same machinery with unit exponents yields
//! fractional edge cover numbers.

use std::collections::BTreeSet;

use num::rational::Ratio;
use num::{One, Signed, Zero};
use thiserror::Error;

/// Machine-word rationals for the tiny 0/1 systems inside the vertex
/// enumeration. Matrix entries are 0 or 1 and dimensions stay below ten,
/// so denominators are bounded by small determinants and `i128` cannot
/// overflow; results are widened to `Rat` at the end.
type Frac = Ratio<i128>;

use crate::constraints::{AffineExpr, ConstraintSet};
use crate::piecewise::PiecewiseLinear;
use crate::query::VarSet;
use crate::Rat;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("no constraint covers a target variable")]
    Infeasible,
    #[error("more than {0} candidate bases")]
    BasisLimit(usize),
    #[error("an exponent is negative somewhere on [0, 1]")]
    NegativeExponent,
}

const BASIS_LIMIT: usize = 1_000_000;

/// All vertices of `{w >= 0 : sum_{i : covers[i] ∋ A} w_i >= 1 for A in
/// target}`, each as a weight vector indexed like `covers`. Sorted and
/// deduplicated, hence deterministic.
pub fn cover_vertices(covers: &[VarSet], target: VarSet) -> Result<Vec<Vec<Rat>>, LpError> {
    let rows: Vec<usize> = target.iter().collect(); // variable ids
    if rows.is_empty() {
        return Ok(vec![vec![Rat::zero(); covers.len()]]);
    }
    for &v in &rows {
        if !covers.iter().any(|c| c.contains(v)) {
            return Err(LpError::Infeasible);
        }
    }
    let n = covers.len();
    let m = rows.len();
    let max_t = m.min(n);
    let mut vertices: BTreeSet<Vec<Frac>> = BTreeSet::new();
    let mut budget = BASIS_LIMIT;
    // A vertex has some support T (|T| = t <= m) and t linearly independent
    // tight covering rows R with A[R, T] w_T = 1.
    for t in 1..=max_t {
        for support in subsets(n, t) {
            for tight in subsets(m, t) {
                if budget == 0 {
                    return Err(LpError::BasisLimit(BASIS_LIMIT));
                }
                budget -= 1;
                let a: Vec<Vec<Frac>> = tight
                    .iter()
                    .map(|&r| {
                        support
                            .iter()
                            .map(|&c| {
                                if covers[c].contains(rows[r]) {
                                    Frac::one()
                                } else {
                                    Frac::zero()
                                }
                            })
                            .collect()
                    })
                    .collect();
                let Some(w_t) = solve_square(a) else { continue };
                if w_t.iter().any(|w| w.is_negative()) {
                    continue;
                }
                let mut w = vec![Frac::zero(); n];
                for (&c, v) in support.iter().zip(w_t) {
                    w[c] = v;
                }
                let feasible = rows.iter().all(|&r| {
                    let s: Frac = (0..n)
                        .filter(|&c| covers[c].contains(r))
                        .map(|c| w[c])
                        .sum();
                    s >= Frac::one()
                });
                if feasible {
                    vertices.insert(w);
                }
            }
        }
    }
    if vertices.is_empty() {
        return Err(LpError::Infeasible);
    }
    Ok(vertices
        .into_iter()
        .map(|w| w.into_iter().map(widen).collect())
        .collect())
}

fn widen(f: Frac) -> Rat {
    Rat::new((*f.numer()).into(), (*f.denom()).into())
}

/// All `k`-element subsets of `0..n`, ascending.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Solve `a x = 1` for square `a`; `None` when singular.
fn solve_square(mut a: Vec<Vec<Frac>>) -> Option<Vec<Frac>> {
    let t = a.len();
    let mut b = vec![Frac::one(); t];
    for col in 0..t {
        let pivot = (col..t).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for x in &mut a[col] {
            *x /= p;
        }
        b[col] /= p;
        for r in 0..t {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col];
                for c in 0..t {
                    let sub = a[col][c] * f;
                    a[r][c] -= sub;
                }
                let sub = b[col] * f;
                b[r] -= sub;
            }
        }
    }
    Some(b)
}

/// Objective value `sum_i w_i * p_i` at one vertex, as a function of `eps`.
pub fn objective_at(weights: &[Rat], exponents: &[AffineExpr]) -> AffineExpr {
    weights
        .iter()
        .zip(exponents)
        .fold(AffineExpr::zero(), |acc, (w, p)| acc.add(&p.scale(w)))
}

/// The covering bound of an acyclic constraint set over all its variables,
/// as an exact piecewise-linear function of `eps` on `[0, 1]`.
pub fn symbolic_bound(c: &ConstraintSet) -> Result<PiecewiseLinear, LpError> {
    symbolic_bound_over(c, c.vars())
}

/// As `symbolic_bound` but covering only `target`.
///
/// Constraints with identical cover sets are interchangeable in the LP: at
/// any fixed `eps` an optimal solution concentrates each group's weight on
/// its cheapest member. Grouping first shrinks the vertex enumeration and
/// leaves the bound unchanged; the per-group cost becomes the lower
/// envelope of the group's exponents.
pub fn symbolic_bound_over(c: &ConstraintSet, target: VarSet) -> Result<PiecewiseLinear, LpError> {
    if c.constraints().iter().any(|dc| !dc.exponent.nonneg_on_unit()) {
        return Err(LpError::NegativeExponent);
    }
    let mut groups: Vec<(VarSet, Vec<AffineExpr>)> = Vec::new();
    for dc in c.constraints() {
        let cover = dc.covered();
        match groups.iter_mut().find(|(v, _)| *v == cover) {
            Some((_, exps)) => exps.push(dc.exponent.clone()),
            None => groups.push((cover, vec![dc.exponent.clone()])),
        }
    }
    let covers: Vec<VarSet> = groups.iter().map(|(v, _)| *v).collect();
    let costs: Vec<PiecewiseLinear> =
        groups.iter().map(|(_, exps)| PiecewiseLinear::lower_envelope(exps)).collect();
    let vertices = cover_vertices(&covers, target)?;
    let objectives: Vec<PiecewiseLinear> = vertices
        .iter()
        .map(|w| {
            w.iter().zip(&costs).fold(PiecewiseLinear::constant(Rat::zero()), |acc, (wi, f)| {
                if wi.is_zero() {
                    acc
                } else {
                    acc.add(&f.scale(wi))
                }
            })
        })
        .collect();
    Ok(PiecewiseLinear::min_of(&objectives))
}

/// Fractional edge cover number of `target` by the given schemas: the same
/// LP with every exponent equal to 1.
pub fn fractional_edge_cover(schemas: &[VarSet], target: VarSet) -> Result<Rat, LpError> {
    let vertices = cover_vertices(schemas, target)?;
    vertices
        .iter()
        .map(|w| w.iter().cloned().sum::<Rat>())
        .min()
        .ok_or(LpError::Infeasible)
}
