//! Constant-delay enumeration of the maintained result.
//!
//! Every variable has a unique owner view in each configuration's tree:
//! the node carrying the variable whose subtree contains every other node
//! carrying it. Visiting owner views ancestors-first, all non-owned schema
//! variables of a view are bound by the time it is probed, so each probe
//! returns exactly the distinct extensions of the current binding and no
//! probe ever dead-ends. The full result is the disjoint union over
//! configurations, because a tuple's fragment signature selects exactly
//! one configuration.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::Engine;
use crate::query::{VarId, VarSet};
use crate::viewtree::{NodeKind, ViewTree};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EnumerateError {
    #[error("variable has no unique owner view")]
    NoOwner,
}

/// Owner node per variable: the node containing the variable whose subtree
/// contains every node that also contains it.
pub fn compute_owners(tree: &ViewTree) -> Result<BTreeMap<VarId, usize>, EnumerateError> {
    // Subtree membership masks.
    let n = tree.nodes.len();
    let mut under = vec![0u64; n];
    fn fill(tree: &ViewTree, node: usize, under: &mut Vec<u64>) {
        let mut mask = 1u64 << node;
        for &c in &tree.nodes[node].children.clone() {
            fill(tree, c, under);
            mask |= under[c];
        }
        under[node] = mask;
    }
    fill(tree, tree.root, &mut under);

    let all_vars = tree.nodes.iter().fold(VarSet::EMPTY, |acc, nd| acc.union(nd.schema));
    let mut owners = BTreeMap::new();
    for v in all_vars.iter() {
        let holders: u64 = tree
            .nodes
            .iter()
            .filter(|nd| nd.schema.contains(v))
            .fold(0u64, |m, nd| m | 1 << nd.id);
        let owner = tree
            .nodes
            .iter()
            .filter(|nd| nd.schema.contains(v))
            .find(|nd| holders & under[nd.id] == holders)
            .ok_or(EnumerateError::NoOwner)?;
        owners.insert(v, owner.id);
    }
    Ok(owners)
}

/// Owner views in ancestors-first (pre-order) visit order, each with the
/// set of variables it owns. Views owning nothing are skipped.
pub fn owner_order(
    tree: &ViewTree,
    owners: &BTreeMap<VarId, usize>,
) -> Vec<(usize, VarSet)> {
    let mut owned: BTreeMap<usize, VarSet> = BTreeMap::new();
    for (&v, &node) in owners {
        let e = owned.entry(node).or_insert(VarSet::EMPTY);
        *e = e.union(VarSet::singleton(v));
    }
    let mut order = Vec::new();
    let mut stack = vec![tree.root];
    while let Some(node) = stack.pop() {
        if let Some(&vars) = owned.get(&node) {
            order.push((node, vars));
        }
        // Push children reversed so the leftmost is visited first.
        for &c in tree.nodes[node].children.iter().rev() {
            stack.push(c);
        }
    }
    order
}

/// Results of one enumeration together with the constant-delay proxy.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Sorted tuples over all query variables (ascending id) with result
    /// multiplicities.
    pub tuples: Vec<(Vec<i64>, i64)>,
    /// Largest number of elementary index operations spent between two
    /// consecutive emissions (or before the first / the end).
    pub max_probes_per_tuple: u64,
}

/// Enumerate the full result: the sorted disjoint union over all
/// configurations.
pub fn enumerate(engine: &mut Engine) -> Result<Enumeration, EnumerateError> {
    let all_vars = engine.query.all_vars_set();
    let mut tuples: Vec<(Vec<i64>, i64)> = Vec::new();
    let mut max_probes: u64 = 0;
    for cfg in 0..engine.plan.configs.len() {
        let tree = engine.plan.configs[cfg].tree.clone();
        let owners = compute_owners(&tree)?;
        let order = owner_order(&tree, &owners);
        let mut binding: BTreeMap<VarId, i64> = BTreeMap::new();
        let mut last_work = engine.work.get();
        descend(
            engine,
            cfg,
            &tree,
            &order,
            0,
            &mut binding,
            all_vars,
            &mut tuples,
            &mut last_work,
            &mut max_probes,
        );
        let tail = engine.work.get() - last_work;
        max_probes = max_probes.max(tail);
    }
    tuples.sort();
    Ok(Enumeration { tuples, max_probes_per_tuple: max_probes })
}

#[allow(clippy::too_many_arguments)]
fn descend(
    engine: &mut Engine,
    cfg: usize,
    tree: &ViewTree,
    order: &[(usize, VarSet)],
    at: usize,
    binding: &mut BTreeMap<VarId, i64>,
    all_vars: VarSet,
    out: &mut Vec<(Vec<i64>, i64)>,
    last_work: &mut u64,
    max_probes: &mut u64,
) {
    if at == order.len() {
        let tuple: Vec<i64> = all_vars.iter().map(|v| binding[&v]).collect();
        // Result multiplicity: the product of the unpartitioned base
        // lookups, independent of the fragment routing.
        let mut mult = 1i64;
        for a in 0..engine.bases.len() {
            let schema = engine.bases[a].schema;
            let layout: Vec<VarId> = all_vars.iter().collect();
            let sub: Vec<i64> = schema
                .iter()
                .map(|v| tuple[layout.binary_search(&v).unwrap()])
                .collect();
            mult *= engine.bases[a].full.multiplicity(&sub);
        }
        debug_assert!(mult > 0, "owner enumeration emits only real tuples");
        out.push((tuple, mult));
        let spent = engine.work.get() - *last_work;
        *max_probes = (*max_probes).max(spent);
        *last_work = engine.work.get();
        return;
    }
    let (node, owned) = order[at];
    let schema = tree.nodes[node].schema;
    let key_vars = schema.minus(owned);
    let key: Vec<i64> = key_vars.iter().map(|v| binding[&v]).collect();
    let extensions: Vec<Vec<i64>> = match tree.nodes[node].kind {
        NodeKind::AtomLeaf => {
            let a = tree.nodes[node].source_atom.expect("leaf has atom");
            let sig = engine.config_signature(cfg, a);
            let frag = engine.bases[a].fragments.get_mut(&sig).unwrap();
            frag.probe(key_vars, owned, &key).into_iter().map(|(t, _)| t).collect()
        }
        _ => {
            let view = engine.states[cfg].views[node].as_mut().expect("view");
            view.probe(key_vars, owned, &key).into_iter().map(|(t, _)| t).collect()
        }
    };
    let owned_ids: Vec<VarId> = owned.iter().collect();
    for ext in extensions {
        for (v, x) in owned_ids.iter().zip(&ext) {
            binding.insert(*v, *x);
        }
        descend(engine, cfg, tree, order, at + 1, binding, all_vars, out, last_work, max_probes);
        for v in &owned_ids {
            binding.remove(v);
        }
    }
}
