//! Degree constraints `(Z | Y, N^p)` with exponents affine in the threshold
//! parameter `eps`.
//!
//! A constraint bounds, in any guarding relation, the number of distinct
//! `Z`-projections per `Y`-binding by `N^p`. Four families arise for a set
//! of leaves with one atom marked as the update:
//!
//! * size constraints `(Xi | ∅, N^1)` for every non-delta atom;
//! * light constraints `(Xi | {Y}, N^eps)` for every non-delta atom and
//!   light join variable `Y` in its schema;
//! * heavy constraints `({Y} | ∅, N^(1-eps))` for every heavy join variable
//!   occurring in a non-delta atom;
//! * update constraints `({A} | ∅, N^0)` for every variable of the updated
//!   atom's schema (a single-tuple delta binds them all).
//!
//! Constraint sets are projected onto variable subsets, and their light
//! constraints induce a directed graph whose maximal acyclic subsets feed
//! the polymatroid bound.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::query::{DegreeConfiguration, Label, Query, VarId, VarSet};
use crate::Rat;

/// An exact affine function of `eps`: `c0 + c1 * eps`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct AffineExpr {
    pub c0: Rat,
    pub c1: Rat,
}

impl AffineExpr {
    pub fn constant(c: Rat) -> AffineExpr {
        AffineExpr { c0: c, c1: Rat::zero() }
    }

    pub fn zero() -> AffineExpr {
        AffineExpr::constant(Rat::zero())
    }

    pub fn one() -> AffineExpr {
        AffineExpr::constant(Rat::one())
    }

    /// `eps`
    pub fn eps() -> AffineExpr {
        AffineExpr { c0: Rat::zero(), c1: Rat::one() }
    }

    /// `1 - eps`
    pub fn one_minus_eps() -> AffineExpr {
        AffineExpr { c0: Rat::one(), c1: -Rat::one() }
    }

    pub fn eval(&self, eps: &Rat) -> Rat {
        &self.c0 + &self.c1 * eps
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        AffineExpr { c0: &self.c0 + &other.c0, c1: &self.c1 + &other.c1 }
    }

    pub fn scale(&self, k: &Rat) -> AffineExpr {
        AffineExpr { c0: &self.c0 * k, c1: &self.c1 * k }
    }

    /// Nonnegative on the whole interval `[0, 1]`.
    pub fn nonneg_on_unit(&self) -> bool {
        !self.c0.is_negative() && !(&self.c0 + &self.c1).is_negative()
    }

    /// Render as `c0 + c1*eps` with `p/q` rationals; stable for plan files.
    pub fn serialize(&self) -> String {
        format!("{} + {}*eps", self.c0, self.c1)
    }

    pub fn parse(text: &str) -> Result<AffineExpr, String> {
        let (c0, rest) = text.split_once('+').ok_or("missing '+' in affine expression")?;
        let c1 = rest.trim().strip_suffix("*eps").ok_or("missing '*eps'")?;
        let parse_rat = |s: &str| -> Result<Rat, String> {
            s.trim().parse::<Rat>().map_err(|e| format!("bad rational {s:?}: {e}"))
        };
        Ok(AffineExpr { c0: parse_rat(c0)?, c1: parse_rat(c1)? })
    }
}

impl PartialOrd for AffineExpr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AffineExpr {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.c0, &self.c1).cmp(&(&other.c0, &other.c1))
    }
}

/// One degree constraint `(Z | Y, N^exponent)` with `Y ⊊ Z`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct DegreeConstraint {
    pub z: VarSet,
    pub y: VarSet,
    pub exponent: AffineExpr,
}

impl DegreeConstraint {
    /// Variables this constraint can cover in the polymatroid LP.
    pub fn covered(&self) -> VarSet {
        self.z.minus(self.y)
    }

    pub fn is_light(&self) -> bool {
        !self.y.is_empty()
    }
}

/// An ordered, duplicate-free list of degree constraints.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct ConstraintSet {
    constraints: Vec<DegreeConstraint>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("configuration labels a variable that is not a join variable")]
    NotAJoinVariable,
    #[error("more than {0} maximal acyclic subsets")]
    SubsetLimit(usize),
}

/// Deterministic order: compare the sorted variable tuples of `Z`, then of
/// `Y`, then the exponent coefficients. Ascending `VarId` order equals the
/// lexicographic order of the sorted variable-name tuples.
fn cmp_constraints(a: &DegreeConstraint, b: &DegreeConstraint) -> Ordering {
    let key = |s: VarSet| s.iter().collect::<Vec<_>>();
    key(a.z)
        .cmp(&key(b.z))
        .then_with(|| key(a.y).cmp(&key(b.y)))
        .then_with(|| a.exponent.cmp(&b.exponent))
}

impl ConstraintSet {
    pub fn new(mut constraints: Vec<DegreeConstraint>) -> ConstraintSet {
        constraints.sort_by(cmp_constraints);
        constraints.dedup();
        ConstraintSet { constraints }
    }

    pub fn constraints(&self) -> &[DegreeConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Union of all `Z` sets.
    pub fn vars(&self) -> VarSet {
        self.constraints.iter().fold(VarSet::EMPTY, |acc, c| acc.union(c.z))
    }

    /// Project onto `v`: keep `(Z∩v | Y, N^p)` whenever `Y ⊊ Z∩v`; other
    /// constraints become uninformative and are discarded.
    pub fn project(&self, v: VarSet) -> ConstraintSet {
        let kept = self
            .constraints
            .iter()
            .filter_map(|c| {
                let z = c.z.intersect(v);
                if c.y.is_strict_subset(z) {
                    Some(DegreeConstraint { z, y: c.y, exponent: c.exponent.clone() })
                } else {
                    None
                }
            })
            .collect();
        ConstraintSet::new(kept)
    }

    /// Directed graph edges `(y, z)` for `y ∈ Y`, `z ∈ Z - Y`. Only light
    /// constraints contribute edges.
    pub fn graph_edges(&self) -> Vec<(VarId, VarId)> {
        let mut edges = BTreeSet::new();
        for c in &self.constraints {
            for y in c.y.iter() {
                for z in c.z.minus(c.y).iter() {
                    edges.insert((y, z));
                }
            }
        }
        edges.into_iter().collect()
    }

    /// Whether the constraint graph of this set is acyclic.
    pub fn is_acyclic(&self) -> bool {
        edges_acyclic(&self.graph_edges())
    }

    /// All maximal (under inclusion) acyclic subsets. Constraints with
    /// `Y = ∅` never create edges and belong to every result; only the light
    /// constraints are searched.
    ///
    /// A subset of light constraints is acyclic exactly when some linear
    /// order of the variables makes every edge go forward, so the maximal
    /// acyclic subsets are the maximal elements of `{constraints fully
    /// forward under pi}` over all permutations `pi` of the variables that
    /// touch an edge.
    pub fn maximal_acyclic_subsets(&self) -> Result<Vec<ConstraintSet>, ConstraintError> {
        const LIMIT: usize = 10_000;
        let (light, rest): (Vec<_>, Vec<_>) =
            self.constraints.iter().cloned().partition(|c| c.is_light());
        if light.is_empty() {
            return Ok(vec![self.clone()]);
        }
        let incident: Vec<VarId> = {
            let set = light.iter().fold(VarSet::EMPTY, |acc, c| acc.union(c.z.union(c.y)));
            set.iter().collect()
        };
        if incident.len() > 10 {
            return Err(ConstraintError::SubsetLimit(LIMIT));
        }
        let mut kept_masks: Vec<u64> = Vec::new();
        let mut perm = incident.clone();
        permutations(&mut perm, 0, &mut |order: &[VarId]| {
            let rank = |v: VarId| order.iter().position(|&o| o == v).unwrap();
            let mut mask = 0u64;
            for (i, c) in light.iter().enumerate() {
                let forward = c.y.iter().all(|y| {
                    c.z.minus(c.y).iter().all(|z| rank(y) < rank(z))
                });
                if forward {
                    mask |= 1 << i;
                }
            }
            if !kept_masks.iter().any(|k| mask & k == mask) {
                kept_masks.retain(|k| k & mask != *k);
                kept_masks.push(mask);
            }
        });
        if kept_masks.len() > LIMIT {
            return Err(ConstraintError::SubsetLimit(LIMIT));
        }
        let mut out: Vec<ConstraintSet> = kept_masks
            .into_iter()
            .map(|mask| {
                let mut cs = rest.clone();
                cs.extend(
                    light
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| mask >> i & 1 == 1)
                        .map(|(_, c)| c.clone()),
                );
                ConstraintSet::new(cs)
            })
            .collect();
        out.sort_by(|a, b| a.serialize_sets().cmp(&b.serialize_sets()));
        Ok(out)
    }

    fn serialize_sets(&self) -> Vec<(Vec<VarId>, Vec<VarId>, AffineExpr)> {
        self.constraints
            .iter()
            .map(|c| (c.z.iter().collect(), c.y.iter().collect(), c.exponent.clone()))
            .collect()
    }

    /// Textual form `(Z|Y, c0 + c1*eps); ...` with variable names.
    pub fn serialize(&self, q: &Query) -> String {
        let mut out = String::new();
        for (i, c) in self.constraints.iter().enumerate() {
            if i > 0 {
                out.push_str("; ");
            }
            let _ = write!(
                out,
                "({}|{}, {})",
                q.set_names(c.z).join(","),
                q.set_names(c.y).join(","),
                c.exponent.serialize()
            );
        }
        out
    }

    pub fn parse(q: &Query, text: &str) -> Result<ConstraintSet, String> {
        let mut cs = Vec::new();
        for part in text.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let inner = part
                .strip_prefix('(')
                .and_then(|p| p.strip_suffix(')'))
                .ok_or("constraint not parenthesized")?;
            let (zy, exp) = inner.rsplit_once(',').ok_or("missing exponent")?;
            let (z, y) = zy.split_once('|').ok_or("missing '|'")?;
            let to_set = |s: &str| -> Result<VarSet, String> {
                let mut set = VarSet::EMPTY;
                for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                    let v = q.var_id(name).ok_or_else(|| format!("unknown variable {name:?}"))?;
                    set = set.union(VarSet::singleton(v));
                }
                Ok(set)
            };
            cs.push(DegreeConstraint {
                z: to_set(z)?,
                y: to_set(y)?,
                exponent: AffineExpr::parse(exp.trim())?,
            });
        }
        Ok(ConstraintSet::new(cs))
    }
}

/// Heap-style recursion visiting every permutation of `items[at..]`.
fn permutations<T: Copy>(items: &mut [T], at: usize, visit: &mut impl FnMut(&[T])) {
    if at == items.len() {
        visit(items);
        return;
    }
    for i in at..items.len() {
        items.swap(at, i);
        permutations(items, at + 1, visit);
        items.swap(at, i);
    }
}

fn edges_acyclic(edges: &[(VarId, VarId)]) -> bool {
    // Kahn's algorithm over the (tiny) variable universe.
    let nodes: BTreeSet<VarId> =
        edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut indeg: std::collections::BTreeMap<VarId, usize> =
        nodes.iter().map(|&n| (n, 0)).collect();
    for &(_, b) in edges {
        *indeg.get_mut(&b).unwrap() += 1;
    }
    let mut queue: Vec<VarId> =
        indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut removed = 0;
    while let Some(n) = queue.pop() {
        removed += 1;
        for &(a, b) in edges {
            if a == n {
                let d = indeg.get_mut(&b).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(b);
                }
            }
        }
    }
    removed == nodes.len()
}

/// A topological order of `vars` consistent with the constraint graph of an
/// acyclic set (ties broken by ascending `VarId`).
pub fn topological_order(c: &ConstraintSet, vars: VarSet) -> Vec<VarId> {
    let edges = c.graph_edges();
    let nodes: Vec<VarId> = vars.iter().collect();
    let mut indeg: std::collections::BTreeMap<VarId, usize> =
        nodes.iter().map(|&n| (n, 0)).collect();
    for &(a, b) in &edges {
        if vars.contains(a) && vars.contains(b) {
            *indeg.get_mut(&b).unwrap() += 1;
        }
    }
    let mut out = Vec::with_capacity(nodes.len());
    let mut remaining: BTreeSet<VarId> = nodes.iter().copied().collect();
    while !remaining.is_empty() {
        let next = remaining
            .iter()
            .copied()
            .find(|&n| indeg[&n] == 0)
            .expect("constraint graph must be acyclic");
        remaining.remove(&next);
        out.push(next);
        for &(a, b) in &edges {
            if a == next && remaining.contains(&b) {
                *indeg.get_mut(&b).unwrap() -= 1;
            }
        }
    }
    out
}

/// An atom at the leaves of a delta view, with its delta flag.
#[derive(Clone, Copy, Debug)]
pub struct LeafAtom {
    pub atom: usize,
    pub is_delta: bool,
}

/// Derive the degree constraints guarded by the given leaves under a degree
/// configuration. Guards record which atom guarantees each constraint.
pub fn derive_constraints(
    q: &Query,
    leaves: &[LeafAtom],
    config: &DegreeConfiguration,
) -> Result<ConstraintSet, ConstraintError> {
    if config.labels.len() != q.join_variables().len() {
        return Err(ConstraintError::NotAJoinVariable);
    }
    let jv = q.join_variables();
    let mut out = Vec::new();
    let mut heavy_done = VarSet::EMPTY;
    for leaf in leaves {
        let schema = q.atom_set(leaf.atom);
        if leaf.is_delta {
            for v in schema.iter() {
                out.push(DegreeConstraint {
                    z: VarSet::singleton(v),
                    y: VarSet::EMPTY,
                    exponent: AffineExpr::zero(),
                });
            }
            continue;
        }
        out.push(DegreeConstraint {
            z: schema,
            y: VarSet::EMPTY,
            exponent: AffineExpr::one(),
        });
        for (pos, &v) in jv.iter().enumerate() {
            if !schema.contains(v) {
                continue;
            }
            match config.label_at(pos) {
                Label::Light => {
                    let y = VarSet::singleton(v);
                    if y.is_strict_subset(schema) {
                        out.push(DegreeConstraint { z: schema, y, exponent: AffineExpr::eps() });
                    }
                }
                Label::Heavy => {
                    if !heavy_done.contains(v) {
                        heavy_done = heavy_done.union(VarSet::singleton(v));
                        out.push(DegreeConstraint {
                            z: VarSet::singleton(v),
                            y: VarSet::EMPTY,
                            exponent: AffineExpr::one_minus_eps(),
                        });
                    }
                }
            }
        }
    }
    Ok(ConstraintSet::new(out))
}

/// The atoms among `leaves` that guard at least one constraint of `c`
/// (size/light constraints by schema, heavy constraints by membership), with
/// the delta atom always included.
pub fn guard_atoms(q: &Query, leaves: &[LeafAtom], c: &ConstraintSet) -> Vec<usize> {
    let mut guards: BTreeSet<usize> = BTreeSet::new();
    for leaf in leaves {
        if leaf.is_delta {
            guards.insert(leaf.atom);
            continue;
        }
        let schema = q.atom_set(leaf.atom);
        // An atom guards every non-update constraint whose variables its
        // schema contains; update constraints belong to the delta atom.
        let guards_constraint = c.constraints().iter().any(|dc| {
            dc.exponent != AffineExpr::zero() && dc.z.union(dc.y).is_subset(schema)
        });
        if guards_constraint {
            guards.insert(leaf.atom);
        }
    }
    guards.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{parse_query, DegreeConfiguration};

    fn four_cycle() -> Query {
        parse_query("Q(A,B,C,D) = R(A,B), S(B,C), T(C,D), U(D,A)").unwrap()
    }

    fn cfg(code: &str) -> DegreeConfiguration {
        DegreeConfiguration::parse_code(code).unwrap()
    }

    fn set(q: &Query, names: &[&str]) -> VarSet {
        VarSet::from_iter(names.iter().map(|n| q.var_id(n).unwrap()))
    }

    /// Constraints for the 4-cycle, update to R, A/B light and C/D heavy.
    fn c_full(q: &Query) -> ConstraintSet {
        let leaves = [
            LeafAtom { atom: 1, is_delta: false },
            LeafAtom { atom: 2, is_delta: false },
            LeafAtom { atom: 3, is_delta: false },
            LeafAtom { atom: 0, is_delta: true },
        ];
        derive_constraints(q, &leaves, &cfg("LLHH")).unwrap()
    }

    #[test]
    fn four_cycle_llhh_nine_constraints() {
        let q = four_cycle();
        let c = c_full(&q);
        assert_eq!(c.len(), 9);
        let expect = ConstraintSet::new(vec![
            DegreeConstraint { z: set(&q, &["B", "C"]), y: VarSet::EMPTY, exponent: AffineExpr::one() },
            DegreeConstraint { z: set(&q, &["C", "D"]), y: VarSet::EMPTY, exponent: AffineExpr::one() },
            DegreeConstraint { z: set(&q, &["A", "D"]), y: VarSet::EMPTY, exponent: AffineExpr::one() },
            DegreeConstraint { z: set(&q, &["A", "D"]), y: set(&q, &["A"]), exponent: AffineExpr::eps() },
            DegreeConstraint { z: set(&q, &["B", "C"]), y: set(&q, &["B"]), exponent: AffineExpr::eps() },
            DegreeConstraint { z: set(&q, &["C"]), y: VarSet::EMPTY, exponent: AffineExpr::one_minus_eps() },
            DegreeConstraint { z: set(&q, &["D"]), y: VarSet::EMPTY, exponent: AffineExpr::one_minus_eps() },
            DegreeConstraint { z: set(&q, &["A"]), y: VarSet::EMPTY, exponent: AffineExpr::zero() },
            DegreeConstraint { z: set(&q, &["B"]), y: VarSet::EMPTY, exponent: AffineExpr::zero() },
        ]);
        assert_eq!(c, expect);
    }

    /// Constraints for the subtree joining the update on R with S only.
    fn c1(q: &Query) -> ConstraintSet {
        let leaves = [
            LeafAtom { atom: 0, is_delta: true },
            LeafAtom { atom: 1, is_delta: false },
        ];
        derive_constraints(q, &leaves, &cfg("LLHH")).unwrap()
    }

    #[test]
    fn delta_r_join_s_constraints() {
        let q = four_cycle();
        let expect = ConstraintSet::new(vec![
            DegreeConstraint { z: set(&q, &["B", "C"]), y: VarSet::EMPTY, exponent: AffineExpr::one() },
            DegreeConstraint { z: set(&q, &["B", "C"]), y: set(&q, &["B"]), exponent: AffineExpr::eps() },
            DegreeConstraint { z: set(&q, &["C"]), y: VarSet::EMPTY, exponent: AffineExpr::one_minus_eps() },
            DegreeConstraint { z: set(&q, &["A"]), y: VarSet::EMPTY, exponent: AffineExpr::zero() },
            DegreeConstraint { z: set(&q, &["B"]), y: VarSet::EMPTY, exponent: AffineExpr::zero() },
        ]);
        assert_eq!(c1(&q), expect);
    }

    #[test]
    fn delta_only_leaves_give_update_constraints() {
        let q = four_cycle();
        let c = derive_constraints(&q, &[LeafAtom { atom: 0, is_delta: true }], &cfg("LLHH"))
            .unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.constraints().iter().all(|dc| dc.exponent == AffineExpr::zero()));
    }

    #[test]
    fn projection_matches_worked_example() {
        let q = four_cycle();
        let c2 = c1(&q).project(set(&q, &["A", "C"]));
        let expect = ConstraintSet::new(vec![
            DegreeConstraint { z: set(&q, &["C"]), y: VarSet::EMPTY, exponent: AffineExpr::one() },
            DegreeConstraint { z: set(&q, &["C"]), y: VarSet::EMPTY, exponent: AffineExpr::one_minus_eps() },
            DegreeConstraint { z: set(&q, &["A"]), y: VarSet::EMPTY, exponent: AffineExpr::zero() },
        ]);
        assert_eq!(c2, expect);
    }

    #[test]
    fn projection_identity_and_composition() {
        let q = four_cycle();
        let c = c_full(&q);
        assert_eq!(c.project(c.vars()), c);
        let v = set(&q, &["A", "B", "C"]);
        let w = set(&q, &["A", "C"]);
        assert_eq!(c.project(v).project(w), c.project(v.intersect(w)));
    }

    #[test]
    fn conditioned_constraint_dropped_when_uninformative() {
        let q = four_cycle();
        // (AD|A, eps) projected onto {A}: Y is no longer strict subset.
        let c = ConstraintSet::new(vec![DegreeConstraint {
            z: set(&q, &["A", "D"]),
            y: set(&q, &["A"]),
            exponent: AffineExpr::eps(),
        }]);
        assert!(c.project(set(&q, &["A"])).is_empty());
    }

    #[test]
    fn graph_edges_and_acyclicity() {
        let q = four_cycle();
        let cyc = ConstraintSet::new(vec![
            DegreeConstraint { z: set(&q, &["A", "B"]), y: set(&q, &["A"]), exponent: AffineExpr::eps() },
            DegreeConstraint { z: set(&q, &["A", "B"]), y: set(&q, &["B"]), exponent: AffineExpr::eps() },
        ]);
        let a = q.var_id("A").unwrap();
        let b = q.var_id("B").unwrap();
        assert_eq!(cyc.graph_edges(), vec![(a, b), (b, a)]);
        assert!(!cyc.is_acyclic());

        let c = c_full(&q);
        assert!(c.is_acyclic());
        let subsets = c.maximal_acyclic_subsets().unwrap();
        assert_eq!(subsets, vec![c]);
    }

    #[test]
    fn two_cycle_yields_two_maximal_subsets() {
        let q = four_cycle();
        let c = ConstraintSet::new(vec![
            DegreeConstraint { z: set(&q, &["A", "B"]), y: set(&q, &["A"]), exponent: AffineExpr::eps() },
            DegreeConstraint { z: set(&q, &["A", "B"]), y: set(&q, &["B"]), exponent: AffineExpr::eps() },
            DegreeConstraint { z: set(&q, &["A", "B"]), y: VarSet::EMPTY, exponent: AffineExpr::one() },
        ]);
        let subsets = c.maximal_acyclic_subsets().unwrap();
        assert_eq!(subsets.len(), 2);
        for s in &subsets {
            assert_eq!(s.len(), 2);
            assert!(s.constraints().iter().any(|dc| !dc.is_light()));
        }
    }

    #[test]
    fn serialization_roundtrip() {
        let q = four_cycle();
        let c = c_full(&q);
        let text = c.serialize(&q);
        let back = ConstraintSet::parse(&q, &text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.serialize(&q), text);
    }

    #[test]
    fn every_variable_covered_in_derived_sets() {
        let q = four_cycle();
        for config in q.degree_configurations() {
            for delta in 0..q.atoms.len() {
                let leaves: Vec<LeafAtom> = (0..q.atoms.len())
                    .map(|atom| LeafAtom { atom, is_delta: atom == delta })
                    .collect();
                let c = derive_constraints(&q, &leaves, &config).unwrap();
                let covered = c
                    .constraints()
                    .iter()
                    .fold(VarSet::EMPTY, |acc, dc| acc.union(dc.covered()));
                assert_eq!(covered, q.all_vars_set());
            }
        }
    }
}
