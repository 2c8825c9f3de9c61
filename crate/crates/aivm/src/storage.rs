//! Physical storage: interned values, counted relations with lazy group
//! indexes, and the heavy/light partitioning state.
//!
//! Tuples are vectors of `i64` values ordered by ascending variable id of
//! the relation's schema. Document values that parse as integers are kept
//! as themselves; all other tokens are interned to negative ids so the two
//! ranges never collide.
//!
//! Every elementary index operation bumps a shared work counter, which the
//! constant-delay and complexity probes read.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::rc::Rc;

use num::BigInt;

use crate::query::{VarId, VarSet};
use crate::Rat;

/// Shared operation counter.
#[derive(Clone, Default, Debug)]
pub struct WorkCounter(Rc<Cell<u64>>);

impl WorkCounter {
    pub fn new() -> WorkCounter {
        WorkCounter::default()
    }

    pub fn bump(&self) {
        self.0.set(self.0.get() + 1);
    }

    pub fn get(&self) -> u64 {
        self.0.get()
    }
}

/// Two-way map from non-integer tokens to negative ids.
#[derive(Default, Debug, Clone)]
pub struct Interner {
    by_name: HashMap<String, i64>,
    names: Vec<String>,
}

impl Interner {
    pub fn new() -> Interner {
        Interner::default()
    }

    /// Integer tokens map to themselves; everything else gets a negative id.
    pub fn intern(&mut self, token: &str) -> i64 {
        if let Ok(v) = token.parse::<i64>() {
            if v >= 0 {
                return v;
            }
        }
        if let Some(&id) = self.by_name.get(token) {
            return id;
        }
        let id = -(self.names.len() as i64) - 1;
        self.names.push(token.to_string());
        self.by_name.insert(token.to_string(), id);
        id
    }

    pub fn render(&self, value: i64) -> String {
        if value >= 0 {
            value.to_string()
        } else {
            self.names[(-value - 1) as usize].clone()
        }
    }
}

/// The key of a lazily built group index: project each tuple onto `key`,
/// group, and within each group aggregate multiplicities per projection
/// onto `proj`.
type IndexKey = (VarSet, VarSet);
type GroupIndex = HashMap<Vec<i64>, HashMap<Vec<i64>, i64>>;

/// A multiset of tuples over a fixed schema with counted multiplicities.
#[derive(Clone, Debug)]
pub struct Relation {
    pub schema: VarSet,
    tuples: HashMap<Vec<i64>, i64>,
    indexes: HashMap<IndexKey, GroupIndex>,
    work: WorkCounter,
}

impl Relation {
    pub fn new(schema: VarSet, work: WorkCounter) -> Relation {
        Relation { schema, tuples: HashMap::new(), indexes: HashMap::new(), work }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, i64)> {
        self.tuples.iter().map(|(t, &m)| (t, m))
    }

    pub fn multiplicity(&self, tuple: &[i64]) -> i64 {
        self.work.bump();
        self.tuples.get(tuple).copied().unwrap_or(0)
    }

    /// Positions (within the schema's ascending-variable tuple layout) of
    /// the variables in `vars`.
    pub fn positions(&self, vars: VarSet) -> Vec<usize> {
        let layout: Vec<VarId> = self.schema.iter().collect();
        vars.iter().map(|v| layout.binary_search(&v).expect("var in schema")).collect()
    }

    fn project(tuple: &[i64], positions: &[usize]) -> Vec<i64> {
        positions.iter().map(|&p| tuple[p]).collect()
    }

    /// Add `delta` to the multiplicity of `tuple`; removes it at zero.
    /// Keeps every built index in sync.
    pub fn add(&mut self, tuple: &[i64], delta: i64) {
        if delta == 0 {
            return;
        }
        debug_assert_eq!(tuple.len(), self.schema.len() as usize);
        self.work.bump();
        let entry = self.tuples.entry(tuple.to_vec()).or_insert(0);
        *entry += delta;
        if *entry == 0 {
            self.tuples.remove(tuple);
        }
        let keys: Vec<IndexKey> = self.indexes.keys().copied().collect();
        for (key_vars, proj_vars) in keys {
            let kpos = self.positions(key_vars);
            let ppos = self.positions(proj_vars);
            let k = Relation::project(tuple, &kpos);
            let p = Relation::project(tuple, &ppos);
            self.work.bump();
            let idx = self.indexes.get_mut(&(key_vars, proj_vars)).unwrap();
            let group = idx.entry(k.clone()).or_default();
            let slot = group.entry(p).or_insert(0);
            *slot += delta;
            if *slot == 0 {
                let p = Relation::project(tuple, &ppos);
                group.remove(&p);
                if group.is_empty() {
                    idx.remove(&k);
                }
            }
        }
    }

    fn ensure_index(&mut self, key_vars: VarSet, proj_vars: VarSet) {
        if self.indexes.contains_key(&(key_vars, proj_vars)) {
            return;
        }
        let kpos = self.positions(key_vars);
        let ppos = self.positions(proj_vars);
        let mut idx: GroupIndex = HashMap::new();
        for (t, &m) in &self.tuples {
            self.work.bump();
            *idx.entry(Relation::project(t, &kpos))
                .or_default()
                .entry(Relation::project(t, &ppos))
                .or_insert(0) += m;
        }
        self.indexes.insert((key_vars, proj_vars), idx);
    }

    /// Distinct projections onto `proj_vars` among tuples matching `key`
    /// on `key_vars`, with aggregated multiplicities. `key` is laid out in
    /// ascending variable order of `key_vars`.
    pub fn probe(
        &mut self,
        key_vars: VarSet,
        proj_vars: VarSet,
        key: &[i64],
    ) -> Vec<(Vec<i64>, i64)> {
        self.ensure_index(key_vars, proj_vars);
        self.work.bump();
        let mut out: Vec<(Vec<i64>, i64)> = self.indexes[&(key_vars, proj_vars)]
            .get(key)
            .map(|g| g.iter().map(|(p, &m)| (p.clone(), m)).collect())
            .unwrap_or_default();
        out.sort();
        out
    }

    /// Aggregated multiplicity of one `(key, projection)` pair.
    pub fn probe_one(
        &mut self,
        key_vars: VarSet,
        proj_vars: VarSet,
        key: &[i64],
        proj: &[i64],
    ) -> i64 {
        self.ensure_index(key_vars, proj_vars);
        self.work.bump();
        self.indexes[&(key_vars, proj_vars)]
            .get(key)
            .and_then(|g| g.get(proj))
            .copied()
            .unwrap_or(0)
    }

    /// Number of distinct projections for a key (without listing them).
    pub fn group_size(&mut self, key_vars: VarSet, proj_vars: VarSet, key: &[i64]) -> usize {
        self.ensure_index(key_vars, proj_vars);
        self.work.bump();
        self.indexes[&(key_vars, proj_vars)].get(key).map_or(0, |g| g.len())
    }

    /// Tuples sorted ascending; for deterministic replay and output.
    pub fn sorted_tuples(&self) -> Vec<(Vec<i64>, i64)> {
        let mut out: Vec<(Vec<i64>, i64)> =
            self.tuples.iter().map(|(t, &m)| (t.clone(), m)).collect();
        out.sort();
        out
    }
}

/// Heavy/light classification of one join variable's values with exact
/// threshold tests; values never seen are light.
#[derive(Clone, Debug, Default)]
pub struct Partition {
    heavy: HashSet<i64>,
}

impl Partition {
    pub fn is_heavy(&self, value: i64) -> bool {
        self.heavy.contains(&value)
    }

    pub fn set_heavy(&mut self, value: i64, heavy: bool) {
        if heavy {
            self.heavy.insert(value);
        } else {
            self.heavy.remove(&value);
        }
    }

    pub fn heavy_values(&self) -> impl Iterator<Item = i64> + '_ {
        self.heavy.iter().copied()
    }
}

/// Exact comparisons of an integer degree against the relaxed thresholds
/// `(3/2) * M^eps` and `(1/2) * M^eps`, plus the strict threshold `M^eps`,
/// all with `eps = p/q` rational and big-integer arithmetic.
#[derive(Clone, Debug)]
pub struct Thresholds {
    pub m: u64,
    pub eps: Rat,
}

impl Thresholds {
    pub fn new(m: u64, eps: Rat) -> Thresholds {
        Thresholds { m, eps }
    }

    fn cmp_scaled(&self, degree: u64, num: u64, den: u64) -> std::cmp::Ordering {
        // degree vs (num/den) * M^(p/q)  <=>  (degree*den)^q vs num^q * M^p
        let p = self.eps.numer().clone();
        let q = self.eps.denom().clone();
        let (p, q) = (p.try_into().unwrap_or(0u32), q.try_into().unwrap_or(1u32));
        let lhs = BigInt::from(degree) * BigInt::from(den);
        let lhs = lhs.pow(q);
        let rhs = BigInt::from(num).pow(q) * BigInt::from(self.m).pow(p);
        lhs.cmp(&rhs)
    }

    /// `degree > (3/2) * M^eps`: a light value must become heavy.
    pub fn above_upper(&self, degree: u64) -> bool {
        self.cmp_scaled(degree, 3, 2) == std::cmp::Ordering::Greater
    }

    /// `degree <= (1/2) * M^eps`: a heavy value must become light.
    pub fn below_lower(&self, degree: u64) -> bool {
        self.cmp_scaled(degree, 1, 2) != std::cmp::Ordering::Greater
    }

    /// `degree > M^eps`: the strict classification used for fresh builds
    /// keeps hysteresis out of the initial state.
    pub fn above_strict(&self, degree: u64) -> bool {
        self.cmp_scaled(degree, 1, 1) == std::cmp::Ordering::Greater
    }
}

/// One base relation: the unpartitioned multiset plus one fragment per
/// signature over the relation's join variables. Signatures are bitmasks
/// with bit `i` set when the `i`-th join variable (ascending) is heavy.
#[derive(Clone, Debug)]
pub struct BaseRelation {
    pub atom: usize,
    pub schema: VarSet,
    /// Join variables of the query that occur in this schema, ascending.
    pub join_vars: Vec<VarId>,
    pub full: Relation,
    pub fragments: BTreeMap<u32, Relation>,
}

impl BaseRelation {
    pub fn new(atom: usize, schema: VarSet, join_vars: Vec<VarId>, work: &WorkCounter) -> Self {
        let nsig = 1u32 << join_vars.len();
        let fragments = (0..nsig).map(|s| (s, Relation::new(schema, work.clone()))).collect();
        BaseRelation { atom, schema, join_vars, full: Relation::new(schema, work.clone()), fragments }
    }

    /// The fragment signature of a tuple under the current partitions.
    pub fn signature(&self, tuple: &[i64], partitions: &BTreeMap<VarId, Partition>) -> u32 {
        let layout: Vec<VarId> = self.schema.iter().collect();
        let mut sig = 0;
        for (i, &jv) in self.join_vars.iter().enumerate() {
            let pos = layout.binary_search(&jv).expect("join var in schema");
            if partitions[&jv].is_heavy(tuple[pos]) {
                sig |= 1 << i;
            }
        }
        sig
    }
}
