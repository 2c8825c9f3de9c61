//! Independent reference implementations used to check the engine.
//!
//! Nothing here shares code with the incremental machinery: joins are
//! evaluated from scratch by backtracking with per-call hash indexes, and
//! the covering LP is solved by an exact-rational simplex on its dual
//! rather than by vertex enumeration.

use std::collections::{BTreeMap, HashMap};

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::query::{Query, VarId, VarSet};
use crate::Rat;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("naive join exceeded {0} elementary steps")]
    StepLimit(u64),
    #[error("update refers to unknown relation {0:?}")]
    UnknownRelation(String),
}

const STEP_LIMIT: u64 = 1_000_000_000;

/// Natural join of counted relations, projected onto `out_vars`, summing
/// multiplicity products. `schemas[i]` lays out `tuples[i]` in ascending
/// variable order.
pub fn naive_join(
    schemas: &[VarSet],
    tuples: &[&HashMap<Vec<i64>, i64>],
    out_vars: VarSet,
) -> Result<BTreeMap<Vec<i64>, i64>, OracleError> {
    assert_eq!(schemas.len(), tuples.len());
    // Pre-index every atom by the variables bound before it joins.
    let mut bound = VarSet::EMPTY;
    let mut indexes: Vec<HashMap<Vec<i64>, Vec<(Vec<i64>, i64)>>> = Vec::new();
    let mut key_vars: Vec<VarSet> = Vec::new();
    let mut steps: u64 = 0;
    for (schema, rel) in schemas.iter().zip(tuples) {
        let kv = schema.intersect(bound);
        let kpos = positions(*schema, kv);
        let mut idx: HashMap<Vec<i64>, Vec<(Vec<i64>, i64)>> = HashMap::new();
        for (t, &m) in rel.iter() {
            steps += 1;
            if steps > STEP_LIMIT {
                return Err(OracleError::StepLimit(STEP_LIMIT));
            }
            idx.entry(kpos.iter().map(|&p| t[p]).collect()).or_default().push((t.clone(), m));
        }
        indexes.push(idx);
        key_vars.push(kv);
        bound = bound.union(*schema);
    }
    let mut out: BTreeMap<Vec<i64>, i64> = BTreeMap::new();
    let out_ids: Vec<VarId> = out_vars.iter().collect();
    let mut binding: HashMap<VarId, i64> = HashMap::new();
    fn rec(
        at: usize,
        schemas: &[VarSet],
        indexes: &[HashMap<Vec<i64>, Vec<(Vec<i64>, i64)>>],
        key_vars: &[VarSet],
        binding: &mut HashMap<VarId, i64>,
        mult: i64,
        out_ids: &[VarId],
        out: &mut BTreeMap<Vec<i64>, i64>,
        steps: &mut u64,
    ) -> Result<(), OracleError> {
        if at == schemas.len() {
            let key: Vec<i64> = out_ids.iter().map(|v| binding[v]).collect();
            *out.entry(key).or_insert(0) += mult;
            return Ok(());
        }
        let key: Vec<i64> = key_vars[at].iter().map(|v| binding[&v]).collect();
        let Some(matches) = indexes[at].get(&key) else { return Ok(()) };
        let layout: Vec<VarId> = schemas[at].iter().collect();
        for (t, m) in matches {
            *steps += 1;
            if *steps > STEP_LIMIT {
                return Err(OracleError::StepLimit(STEP_LIMIT));
            }
            let added: Vec<VarId> = layout
                .iter()
                .copied()
                .filter(|v| !binding.contains_key(v))
                .collect();
            for (&v, pos) in layout.iter().zip(0..) {
                if added.contains(&v) {
                    binding.insert(v, t[pos]);
                }
            }
            rec(at + 1, schemas, indexes, key_vars, binding, mult * m, out_ids, out, steps)?;
            for v in added {
                binding.remove(&v);
            }
        }
        Ok(())
    }
    rec(0, schemas, &indexes, &key_vars, &mut binding, 1, &out_ids, &mut out, &mut steps)?;
    out.retain(|_, m| *m != 0);
    Ok(out)
}

fn positions(schema: VarSet, vars: VarSet) -> Vec<usize> {
    let layout: Vec<VarId> = schema.iter().collect();
    vars.iter().map(|v| layout.binary_search(&v).unwrap()).collect()
}

/// A from-scratch database: plain counted relations keyed by name.
#[derive(Clone, Debug, Default)]
pub struct OracleDb {
    relations: BTreeMap<String, HashMap<Vec<i64>, i64>>,
}

impl OracleDb {
    pub fn new(q: &Query) -> OracleDb {
        OracleDb {
            relations: q.atoms.iter().map(|a| (a.relation.clone(), HashMap::new())).collect(),
        }
    }

    /// Insert (`delta = 1`) or delete (`delta = -1`) one tuple. Returns
    /// `false` without side effects when a delete targets an absent tuple
    /// or an insert a present one.
    pub fn apply(&mut self, relation: &str, tuple: &[i64], delta: i64) -> Result<bool, OracleError> {
        let rel = self
            .relations
            .get_mut(relation)
            .ok_or_else(|| OracleError::UnknownRelation(relation.to_string()))?;
        let present = rel.contains_key(tuple);
        if (delta > 0 && present) || (delta < 0 && !present) {
            return Ok(false);
        }
        if delta > 0 {
            rel.insert(tuple.to_vec(), 1);
        } else {
            rel.remove(tuple);
        }
        Ok(true)
    }

    pub fn relation(&self, name: &str) -> &HashMap<Vec<i64>, i64> {
        &self.relations[name]
    }

    pub fn total_tuples(&self) -> usize {
        self.relations.values().map(|r| r.len()).sum()
    }

    /// The full query result with multiplicities, sorted by tuple.
    pub fn evaluate(&self, q: &Query) -> Result<BTreeMap<Vec<i64>, i64>, OracleError> {
        let schemas: Vec<VarSet> = (0..q.atoms.len()).map(|i| q.atom_set(i)).collect();
        let rels: Vec<&HashMap<Vec<i64>, i64>> =
            q.atoms.iter().map(|a| &self.relations[&a.relation]).collect();
        naive_join(&schemas, &rels, q.all_vars_set())
    }

    /// Result multiplicity total (equals the distinct-output count when
    /// every base multiplicity is one).
    pub fn count(&self, q: &Query) -> Result<i64, OracleError> {
        Ok(self.evaluate(q)?.values().sum())
    }

    /// A view over `out_vars` joining only the given atoms.
    pub fn view(
        &self,
        q: &Query,
        atoms: &[usize],
        out_vars: VarSet,
    ) -> Result<BTreeMap<Vec<i64>, i64>, OracleError> {
        let schemas: Vec<VarSet> = atoms.iter().map(|&i| q.atom_set(i)).collect();
        let rels: Vec<&HashMap<Vec<i64>, i64>> =
            atoms.iter().map(|&i| &self.relations[&q.atoms[i].relation]).collect();
        naive_join(&schemas, &rels, out_vars)
    }
}

/// Exact-rational covering LP value at a fixed cost vector:
/// `min sum w_i c_i` s.t. `sum_{i : target var in covers[i]} w_i >= 1`,
/// `w >= 0`. Solved through the dual packing LP `max sum y_A` s.t.
/// `A^T y <= c`, `y >= 0` by standard simplex with Bland's rule, whose
/// slack basis is immediately feasible. `None` when infeasible.
pub fn lp_check(covers: &[VarSet], costs: &[Rat], target: VarSet) -> Option<Rat> {
    let vars: Vec<VarId> = target.iter().collect();
    if vars.is_empty() {
        return Some(Rat::zero());
    }
    if vars.iter().any(|&v| !covers.iter().any(|c| c.contains(v))) {
        return None; // primal infeasible, dual unbounded
    }
    // Dual tableau: rows = one per cover constraint, columns = structural
    // variables y_A plus slacks; maximize sum y_A.
    let m = covers.len();
    let n = vars.len();
    let cols = n + m;
    let mut tableau: Vec<Vec<Rat>> = Vec::with_capacity(m + 1);
    for (i, cover) in covers.iter().enumerate() {
        let mut row = vec![Rat::zero(); cols + 1];
        for (j, &v) in vars.iter().enumerate() {
            if cover.contains(v) {
                row[j] = Rat::one();
            }
        }
        row[n + i] = Rat::one();
        row[cols] = costs[i].clone();
        tableau.push(row);
    }
    // Objective row holds the negated reduced costs of `max sum y_A`.
    let mut obj = vec![Rat::zero(); cols + 1];
    for j in 0..n {
        obj[j] = -Rat::one();
    }
    let mut basis: Vec<usize> = (n..cols).collect();
    loop {
        // Bland's rule: smallest improving column.
        let Some(enter) = (0..cols).find(|&j| obj[j].is_negative()) else {
            break;
        };
        let mut leave: Option<(usize, Rat)> = None;
        for (r, row) in tableau.iter().enumerate() {
            if row[enter].is_positive() {
                let ratio = &row[cols] / &row[enter];
                let better = match &leave {
                    None => true,
                    Some((lr, lv)) => ratio < *lv || (ratio == *lv && basis[r] < basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (r, _) = leave?; // unbounded dual: primal infeasible
        let pivot = tableau[r][enter].clone();
        for x in tableau[r].iter_mut() {
            *x /= &pivot;
        }
        let prow = tableau[r].clone();
        for (rr, row) in tableau.iter_mut().enumerate() {
            if rr != r && !row[enter].is_zero() {
                let f = row[enter].clone();
                for (x, p) in row.iter_mut().zip(&prow) {
                    *x -= &f * p;
                }
            }
        }
        if !obj[enter].is_zero() {
            let f = obj[enter].clone();
            for (x, p) in obj.iter_mut().zip(&prow) {
                *x -= &f * p;
            }
        }
        basis[r] = enter;
    }
    Some(obj[cols].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use crate::rat;

    fn vs(bits: &[usize]) -> VarSet {
        VarSet::from_iter(bits.iter().copied())
    }

    #[test]
    fn triangle_join_counts() {
        let q = parse_query("Q(A,B,C) = R(A,B), S(B,C), T(C,A)").unwrap();
        let mut db = OracleDb::new(&q);
        // Tuples are laid out in ascending variable order: T(C,A) holding
        // C=3, A=1 is stored as [1, 3].
        for (r, t) in [("R", [1, 2]), ("S", [2, 3]), ("T", [1, 3]), ("R", [1, 4])] {
            assert!(db.apply(r, &t, 1).unwrap());
        }
        let out = db.evaluate(&q).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[&vec![1, 2, 3]], 1);
        assert_eq!(db.count(&q).unwrap(), 1);
    }

    #[test]
    fn rejected_updates_have_no_effect() {
        let q = parse_query("Q(A,B) = R(A,B)").unwrap();
        let mut db = OracleDb::new(&q);
        assert!(!db.apply("R", &[1, 2], -1).unwrap());
        assert!(db.apply("R", &[1, 2], 1).unwrap());
        assert!(!db.apply("R", &[1, 2], 1).unwrap());
        assert_eq!(db.relation("R").len(), 1);
    }

    #[test]
    fn view_projects_and_aggregates() {
        let q = parse_query("Q(A,B,C) = R(A,B), S(B,C)").unwrap();
        let mut db = OracleDb::new(&q);
        db.apply("R", &[1, 2], 1).unwrap();
        db.apply("R", &[3, 2], 1).unwrap();
        db.apply("S", &[2, 9], 1).unwrap();
        // A is var 0; view over {B} joining R alone aggregates two tuples.
        let b = q.var_id("B").unwrap();
        let v = db.view(&q, &[0], VarSet::singleton(b)).unwrap();
        assert_eq!(v[&vec![2]], 2);
        // Full join projected to all vars.
        let out = db.evaluate(&q).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn lp_check_matches_known_values() {
        // Triangle edge cover: 3/2.
        let covers = vec![vs(&[0, 1]), vs(&[1, 2]), vs(&[0, 2])];
        let ones = vec![rat(1, 1); 3];
        assert_eq!(lp_check(&covers, &ones, vs(&[0, 1, 2])), Some(rat(3, 2)));
        // Covering one variable costs 1; covering nothing costs 0.
        assert_eq!(lp_check(&covers, &ones, vs(&[1])), Some(rat(1, 1)));
        assert_eq!(lp_check(&covers, &ones, VarSet::EMPTY), Some(rat(0, 1)));
        // Uncoverable variable: infeasible.
        assert_eq!(lp_check(&covers, &ones, vs(&[5])), None);
        // Weighted: covering {0,1} with singleton covers costing 1/3, 1/4.
        let covers = vec![vs(&[0]), vs(&[1])];
        let costs = vec![rat(1, 3), rat(1, 4)];
        assert_eq!(lp_check(&covers, &costs, vs(&[0, 1])), Some(rat(7, 12)));
    }
}
