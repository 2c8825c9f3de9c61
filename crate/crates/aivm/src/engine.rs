//! The incremental maintenance engine.
//!
//! One engine holds, for every degree configuration, a materialized view
//! tree from the plan. Base relations are partitioned into fragments by
//! the heavy/light signature of their join-variable values; the leaf of a
//! configuration's tree reads the single fragment whose signature agrees
//! with the configuration.
//!
//! A single-tuple update touches exactly the configurations that agree
//! with the tuple's signature. For each, the delta of every view on the
//! leaf-to-root path is computed by evaluating the planned guarding query
//! (an intersection join over the strategy's schema, bound by the update
//! tuple), projecting its matches onto the view schema, and weighting each
//! match by the product of the child multiplicities — the delta-path child
//! through its own delta, siblings through their materializations.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::constraints::topological_order;
use crate::planner::{ConfigPlan, GuardingStrategy, Plan};
use crate::query::{Query, VarId, VarSet};
use crate::storage::{BaseRelation, Interner, Partition, Relation, Thresholds, WorkCounter};
use crate::viewtree::NodeKind;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("tuple arity mismatch for relation {0:?}")]
    Arity(String),
}

/// Whether an update changed the database.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Insert of a present tuple or delete of an absent one; no effects.
    Rejected,
}

/// Materialized state of one degree configuration.
#[derive(Debug)]
pub struct ConfigState {
    /// View contents per tree node id; `None` for atom leaves, which read
    /// the matching base fragment instead.
    pub views: Vec<Option<Relation>>,
    /// Running total multiplicity of the configuration's result.
    pub count: i64,
}

/// Counters the rebalancer fills in; the audit and stream tests read them.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct RebalanceStats {
    pub major: u64,
    pub minor: u64,
}

pub struct Engine {
    pub query: Query,
    pub plan: Plan,
    pub work: WorkCounter,
    pub interner: Interner,
    /// Current capacity threshold; invariant `floor(M/4) <= N < M`.
    pub m: u64,
    /// Total distinct tuples across all base relations.
    pub n: u64,
    pub partitions: BTreeMap<VarId, Partition>,
    /// Per (join variable, atom): distinct-tuple degree of each value.
    pub degrees: BTreeMap<(VarId, usize), HashMap<i64, u64>>,
    pub bases: Vec<BaseRelation>,
    /// One state per plan configuration, same order as `plan.configs`.
    pub states: Vec<ConfigState>,
    pub stats: RebalanceStats,
    /// Disables capacity doubling/halving during rebuild replays.
    pub(crate) major_enabled: bool,
}

impl Engine {
    pub fn new(plan: Plan) -> Engine {
        let query = plan.query.clone();
        let work = WorkCounter::new();
        let join_vars = query.join_variables();
        let bases = (0..query.atoms.len())
            .map(|atom| {
                let schema = query.atom_set(atom);
                let jv = join_vars.iter().copied().filter(|&v| schema.contains(v)).collect();
                BaseRelation::new(atom, schema, jv, &work)
            })
            .collect();
        let partitions = join_vars.iter().map(|&v| (v, Partition::default())).collect();
        let mut degrees = BTreeMap::new();
        for &v in &join_vars {
            for a in 0..query.atoms.len() {
                if query.atom_set(a).contains(v) {
                    degrees.insert((v, a), HashMap::new());
                }
            }
        }
        let states = plan
            .configs
            .iter()
            .map(|cp| ConfigState {
                views: cp
                    .tree
                    .nodes
                    .iter()
                    .map(|n| match n.kind {
                        NodeKind::AtomLeaf => None,
                        _ => Some(Relation::new(n.schema, work.clone())),
                    })
                    .collect(),
                count: 0,
            })
            .collect();
        Engine {
            query,
            plan,
            work,
            interner: Interner::new(),
            m: 1,
            n: 0,
            partitions,
            degrees,
            bases,
            states,
            stats: RebalanceStats::default(),
            major_enabled: true,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds::new(self.m, self.plan.epsilon.clone())
    }

    pub fn atom_index(&self, relation: &str) -> Result<usize, EngineError> {
        self.query
            .atom_index(relation)
            .ok_or_else(|| EngineError::UnknownRelation(relation.to_string()))
    }

    /// Convert a tuple given in the atom's declared column order into the
    /// ascending-variable layout used by storage.
    pub fn layout_tuple(&self, atom: usize, declared: &[i64]) -> Result<Vec<i64>, EngineError> {
        let names = &self.query.atoms[atom].schema;
        if names.len() != declared.len() {
            return Err(EngineError::Arity(self.query.atoms[atom].relation.clone()));
        }
        let mut pairs: Vec<(VarId, i64)> = names
            .iter()
            .zip(declared)
            .map(|(n, &v)| (self.query.var_id(n).expect("schema var"), v))
            .collect();
        pairs.sort_by_key(|&(v, _)| v);
        Ok(pairs.into_iter().map(|(_, v)| v).collect())
    }

    /// Render a result tuple over `vars` back to document tokens.
    pub fn render_tuple(&self, tuple: &[i64]) -> Vec<String> {
        tuple.iter().map(|&v| self.interner.render(v)).collect()
    }

    /// Insert one tuple (ascending-variable layout). Duplicate inserts are
    /// rejected without side effects.
    pub fn insert(&mut self, relation: &str, tuple: &[i64]) -> Result<UpdateOutcome, EngineError> {
        self.update(relation, tuple, 1)
    }

    /// Delete one tuple (ascending-variable layout). Deletes of absent
    /// tuples are rejected without side effects.
    pub fn delete(&mut self, relation: &str, tuple: &[i64]) -> Result<UpdateOutcome, EngineError> {
        self.update(relation, tuple, -1)
    }

    fn update(
        &mut self,
        relation: &str,
        tuple: &[i64],
        delta: i64,
    ) -> Result<UpdateOutcome, EngineError> {
        let atom = self.atom_index(relation)?;
        if tuple.len() != self.query.atoms[atom].schema.len() {
            return Err(EngineError::Arity(relation.to_string()));
        }
        let present = self.bases[atom].full.multiplicity(tuple) > 0;
        if (delta > 0 && present) || (delta < 0 && !present) {
            return Ok(UpdateOutcome::Rejected);
        }
        // Propagate through fragments and views while the partition state
        // still matches the materialized contents.
        self.propagate(atom, tuple, delta);
        self.bases[atom].full.add(tuple, delta);
        self.n = if delta > 0 { self.n + 1 } else { self.n - 1 };
        // Degree bookkeeping on distinct-tuple transitions.
        let layout: Vec<VarId> = self.bases[atom].schema.iter().collect();
        let mut touched: Vec<(VarId, i64)> = Vec::new();
        for &jv in &self.bases[atom].join_vars.clone() {
            let pos = layout.binary_search(&jv).expect("join var in schema");
            let value = tuple[pos];
            let slot = self.degrees.get_mut(&(jv, atom)).unwrap().entry(value).or_insert(0);
            if delta > 0 {
                *slot += 1;
            } else {
                *slot -= 1;
            }
            touched.push((jv, value));
        }
        crate::rebalance::after_update(self, &touched);
        Ok(UpdateOutcome::Applied)
    }

    /// Degree of a value in a join variable: the largest distinct-tuple
    /// count over the atoms containing the variable.
    pub fn degree(&self, var: VarId, value: i64) -> u64 {
        self.degrees
            .iter()
            .filter(|((v, _), _)| *v == var)
            .map(|(_, counts)| counts.get(&value).copied().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Update fragments and every affected configuration's views for one
    /// tuple change, without touching the unpartitioned base, `N`, degree
    /// counters, or the partitions. Shared by updates and migrations.
    pub(crate) fn propagate(&mut self, atom: usize, tuple: &[i64], delta: i64) {
        let sig = self.bases[atom].signature(tuple, &self.partitions);
        let affected: Vec<usize> = (0..self.plan.configs.len())
            .filter(|&i| self.config_matches(i, atom, sig))
            .collect();
        for cfg in affected {
            self.propagate_config(cfg, atom, tuple, delta);
        }
        self.bases[atom].fragments.get_mut(&sig).unwrap().add(tuple, delta);
    }

    /// Does configuration `cfg` agree with fragment signature `sig` on the
    /// atom's join variables?
    fn config_matches(&self, cfg: usize, atom: usize, sig: u32) -> bool {
        let config = &self.plan.configs[cfg].config;
        let jv = self.query.join_variables();
        self.bases[atom].join_vars.iter().enumerate().all(|(i, v)| {
            let pos = jv.binary_search(v).expect("join var");
            let heavy = sig >> i & 1 == 1;
            matches!(
                (heavy, config.label_at(pos)),
                (true, crate::query::Label::Heavy) | (false, crate::query::Label::Light)
            )
        })
    }

    /// Propagate one tuple delta up configuration `cfg`'s delta path.
    fn propagate_config(&mut self, cfg: usize, atom: usize, tuple: &[i64], delta: i64) {
        let plan_cfg: ConfigPlan = self.plan.configs[cfg].clone();
        let tree = plan_cfg.tree.clone();
        let relation = self.query.atoms[atom].relation.clone();
        let dt = crate::viewtree::delta_view_tree(&self.query, &tree, &relation)
            .expect("plan trees have a leaf per atom");
        // Delta of the leaf itself: the single changed tuple.
        let leaf = dt.delta_path[0];
        let mut child_delta: HashMap<Vec<i64>, i64> = HashMap::new();
        child_delta.insert(tuple.to_vec(), delta);
        let mut child_node = leaf;
        for &node in &dt.delta_path[1..] {
            let nd = &tree.nodes[node];
            let delta_here: HashMap<Vec<i64>, i64> = match nd.kind {
                NodeKind::ProjectionView => {
                    let child_schema = tree.nodes[child_node].schema;
                    let positions: Vec<usize> = {
                        let layout: Vec<VarId> = child_schema.iter().collect();
                        nd.schema.iter().map(|v| layout.binary_search(&v).unwrap()).collect()
                    };
                    let mut out: HashMap<Vec<i64>, i64> = HashMap::new();
                    for (t, m) in &child_delta {
                        let p: Vec<i64> = positions.iter().map(|&i| t[i]).collect();
                        *out.entry(p).or_insert(0) += m;
                    }
                    out.retain(|_, m| *m != 0);
                    out
                }
                NodeKind::JoinView => {
                    let strategy = plan_cfg
                        .strategy(node, &relation)
                        .expect("plan stores a strategy per delta-path join view")
                        .clone();
                    self.join_delta(cfg, &tree, node, child_node, atom, tuple, &child_delta, &strategy)
                }
                NodeKind::AtomLeaf => unreachable!("leaf can only start the path"),
            };
            // Fold the delta into the materialization before moving up;
            // ancestors use this view only through `delta_here`.
            let view = self.states[cfg].views[node].as_mut().expect("internal node view");
            for (t, m) in &delta_here {
                view.add(t, *m);
            }
            if node == tree.root {
                self.states[cfg].count += delta_here.values().sum::<i64>();
            }
            child_delta = delta_here;
            child_node = node;
        }
        // Single-atom trees: the root is the leaf itself and the count
        // follows the fragment directly.
        if dt.delta_path.len() == 1 && leaf == tree.root {
            self.states[cfg].count += delta;
        }
    }

    /// Delta of a join view: evaluate the guarding query, project onto the
    /// join schema, and weight by child multiplicities.
    #[allow(clippy::too_many_arguments)]
    fn join_delta(
        &mut self,
        cfg: usize,
        tree: &crate::viewtree::ViewTree,
        node: usize,
        delta_child: usize,
        atom: usize,
        tuple: &[i64],
        child_delta: &HashMap<Vec<i64>, i64>,
        strategy: &GuardingStrategy,
    ) -> HashMap<Vec<i64>, i64> {
        let matches = self.guarding_matches(cfg, atom, tuple, strategy);
        let x = tree.nodes[node].schema;
        let x_layout: Vec<VarId> = strategy.schema.iter().collect();
        let out_positions: Vec<usize> =
            x.iter().map(|v| x_layout.binary_search(&v).unwrap()).collect();
        let mut candidates: Vec<Vec<i64>> = matches
            .into_iter()
            .map(|t| out_positions.iter().map(|&p| t[p]).collect())
            .collect();
        candidates.sort();
        candidates.dedup();

        let children = tree.nodes[node].children.clone();
        let layout: Vec<VarId> = x.iter().collect();
        let mut out: HashMap<Vec<i64>, i64> = HashMap::new();
        'cand: for cand in candidates {
            let mut mult = 1i64;
            for &child in &children {
                let cschema = tree.nodes[child].schema;
                let cpos: Vec<usize> =
                    cschema.iter().map(|v| layout.binary_search(&v).unwrap()).collect();
                let ct: Vec<i64> = cpos.iter().map(|&p| cand[p]).collect();
                let m = if child == delta_child {
                    child_delta.get(&ct).copied().unwrap_or(0)
                } else {
                    self.child_multiplicity(cfg, tree, child, &ct)
                };
                if m == 0 {
                    continue 'cand;
                }
                mult *= m;
            }
            out.insert(cand, mult);
        }
        out
    }

    /// Multiplicity of a tuple in a child node's materialization: views
    /// read their relation, atom leaves read the matching fragment.
    fn child_multiplicity(&mut self, cfg: usize, tree: &crate::viewtree::ViewTree, child: usize, tuple: &[i64]) -> i64 {
        match tree.nodes[child].kind {
            NodeKind::AtomLeaf => {
                let a = tree.nodes[child].source_atom.expect("leaf has atom");
                let sig = self.config_signature(cfg, a);
                self.bases[a].fragments.get_mut(&sig).unwrap().multiplicity(tuple)
            }
            _ => self.states[cfg].views[child].as_ref().expect("view").multiplicity(tuple),
        }
    }

    /// The fragment signature configuration `cfg` selects for `atom`.
    pub fn config_signature(&self, cfg: usize, atom: usize) -> u32 {
        let config = &self.plan.configs[cfg].config;
        let jv = self.query.join_variables();
        let mut sig = 0;
        for (i, v) in self.bases[atom].join_vars.iter().enumerate() {
            let pos = jv.binary_search(v).expect("join var");
            if config.label_at(pos) == crate::query::Label::Heavy {
                sig |= 1 << i;
            }
        }
        sig
    }

    /// Evaluate the guarding query: an intersection join over the
    /// strategy's schema, with the update tuple binding the delta atom's
    /// variables and the guard fragments bounding the rest. Set semantics;
    /// returns full tuples over the strategy schema.
    fn guarding_matches(
        &mut self,
        cfg: usize,
        atom: usize,
        tuple: &[i64],
        strategy: &GuardingStrategy,
    ) -> Vec<Vec<i64>> {
        let xp = strategy.schema;
        let atom_schema = self.bases[atom].schema;
        let atom_layout: Vec<VarId> = atom_schema.iter().collect();
        let bound0 = atom_schema.intersect(xp);
        // Consistency of the update tuple with the bound variables is
        // automatic: it IS the binding.
        let mut binding: BTreeMap<VarId, i64> = bound0
            .iter()
            .map(|v| (v, tuple[atom_layout.binary_search(&v).unwrap()]))
            .collect();
        // Variable order: delta-bound first, then the topological order of
        // the strategy's constraint graph over the rest.
        let order: Vec<VarId> = topological_order(&strategy.constraints, xp)
            .into_iter()
            .filter(|v| !bound0.contains(*v))
            .collect();
        // Non-delta guards with their effective schemas.
        let guards: Vec<(usize, VarSet)> = strategy
            .guards
            .iter()
            .copied()
            .filter(|&g| g != atom)
            .map(|g| (g, self.bases[g].schema.intersect(xp)))
            .collect();

        let mut results: Vec<Vec<i64>> = Vec::new();
        self.extend_matches(cfg, &guards, &order, 0, &mut binding, xp, &mut results);
        results
    }

    #[allow(clippy::too_many_arguments)]
    fn extend_matches(
        &mut self,
        cfg: usize,
        guards: &[(usize, VarSet)],
        order: &[VarId],
        at: usize,
        binding: &mut BTreeMap<VarId, i64>,
        xp: VarSet,
        out: &mut Vec<Vec<i64>>,
    ) {
        if at == order.len() {
            out.push(xp.iter().map(|v| binding[&v]).collect());
            return;
        }
        let v = order[at];
        let vset = VarSet::singleton(v);
        let bound: VarSet = VarSet::from_iter(binding.keys().copied());
        // Guards containing v, probed on their bound variables; the first
        // enumerates candidates, the rest filter by membership.
        let relevant: Vec<(usize, VarSet)> = guards
            .iter()
            .copied()
            .filter(|&(_, eff)| eff.contains(v))
            .collect();
        if relevant.is_empty() {
            // Unconstrained variables cannot appear: every strategy schema
            // variable is covered by a size or update constraint, and the
            // guards of size constraints contain it.
            unreachable!("strategy schema variable without a guard");
        }
        // Pick the guard with the fewest candidates to drive the loop.
        let mut best: Option<(usize, Vec<i64>, i64 /* guard idx */)> = None;
        for (idx, &(g, eff)) in relevant.iter().enumerate() {
            let key_vars = eff.intersect(bound);
            let key: Vec<i64> = key_vars.iter().map(|kv| binding[&kv]).collect();
            let sig = self.config_signature(cfg, g);
            let frag = self.bases[g].fragments.get_mut(&sig).unwrap();
            let size = frag.group_size(key_vars, vset, &key);
            if best.as_ref().map_or(true, |(s, _, _)| size < *s) {
                let values: Vec<i64> = frag
                    .probe(key_vars, vset, &key)
                    .into_iter()
                    .map(|(t, _)| t[0])
                    .collect();
                best = Some((size, values, idx as i64));
            }
        }
        let (_, values, drive) = best.expect("at least one relevant guard");
        'vals: for value in values {
            for (idx, &(g, eff)) in relevant.iter().enumerate() {
                if idx as i64 == drive {
                    continue;
                }
                let key_vars = eff.intersect(bound);
                let key: Vec<i64> = key_vars.iter().map(|kv| binding[&kv]).collect();
                let sig = self.config_signature(cfg, g);
                let frag = self.bases[g].fragments.get_mut(&sig).unwrap();
                if frag.probe_one(key_vars, vset, &key, &[value]) == 0 {
                    continue 'vals;
                }
            }
            binding.insert(v, value);
            self.extend_matches(cfg, guards, order, at + 1, binding, xp, out);
            binding.remove(&v);
        }
    }

    /// Full rebuild at the current capacity: clears every fragment, view,
    /// partition, and counter, then replays all tuples in sorted order
    /// with minor rebalancing active and capacity changes disabled.
    pub(crate) fn rebuild(&mut self) {
        let mut all: Vec<(usize, Vec<i64>)> = Vec::new();
        for (a, base) in self.bases.iter().enumerate() {
            for (t, _) in base.full.sorted_tuples() {
                all.push((a, t));
            }
        }
        all.sort();
        let m = self.m;
        let plan = self.plan.clone();
        let interner = std::mem::take(&mut self.interner);
        let stats = self.stats;
        *self = Engine::new(plan);
        self.interner = interner;
        self.m = m;
        self.stats = stats;
        self.major_enabled = false;
        for (a, t) in &all {
            let relation = self.query.atoms[*a].relation.clone();
            let r = self.insert(&relation, t);
            debug_assert_eq!(r, Ok(UpdateOutcome::Applied));
        }
        self.major_enabled = true;
    }

    /// Bulk load: sets the capacity from the known final size, then replays
    /// the distinct tuples in sorted order through the normal insert path.
    pub fn initial_build(&mut self, tuples: &[(usize, Vec<i64>)]) {
        let mut all: Vec<(usize, Vec<i64>)> = tuples.to_vec();
        all.sort();
        all.dedup();
        self.m = 2 * all.len() as u64 + 1;
        self.major_enabled = false;
        for (a, t) in &all {
            let relation = self.query.atoms[*a].relation.clone();
            let _ = self.insert(&relation, t);
        }
        self.major_enabled = true;
    }

    /// Total result multiplicity, summed over configurations.
    pub fn count(&self) -> i64 {
        self.states.iter().map(|s| s.count).sum()
    }
}
