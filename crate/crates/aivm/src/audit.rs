//! Structural audits of a running engine. These recompute every invariant
//! from first principles (using the independent oracle join for view
//! contents) and are meant to run after every update in tests.

use std::collections::HashMap;

use thiserror::Error;

use crate::engine::Engine;
use crate::enumerate::compute_owners;
use crate::oracle::naive_join;
use crate::query::{VarId, VarSet};
use crate::viewtree::NodeKind;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum AuditViolation {
    #[error("fragments of atom {atom} do not partition the base relation")]
    FragmentPartition { atom: usize },
    #[error("tuple sits in a fragment that contradicts its signature (atom {atom})")]
    FragmentSignature { atom: usize },
    #[error("degree counter mismatch for variable {var} in atom {atom}")]
    DegreeCounter { var: VarId, atom: usize },
    #[error("size invariant violated: floor(M/4) <= N < M fails for M={m}, N={n}")]
    SizeInvariant { m: u64, n: u64 },
    #[error("recorded size N={n} does not match the stored tuples ({actual})")]
    SizeCounter { n: u64, actual: u64 },
    #[error("threshold invariant violated for variable {var}, value {value}")]
    ThresholdInvariant { var: VarId, value: i64 },
    #[error("variable without a unique owner in configuration {cfg}")]
    OwnerUniqueness { cfg: usize },
    #[error("view {node} of configuration {cfg} differs from its from-scratch contents")]
    ViewExactness { cfg: usize, node: usize },
    #[error("view {node} of configuration {cfg} changed off the delta path")]
    DeltaPathLocality { cfg: usize, node: usize },
    #[error("couldn't evaluate the reference join: {0}")]
    Oracle(String),
}

/// Run every stateless audit: fragment partitioning, degree counters, size
/// and threshold invariants, owner uniqueness, and view exactness.
pub fn audit(engine: &mut Engine) -> Result<(), AuditViolation> {
    audit_fragments(engine)?;
    audit_degrees(engine)?;
    audit_size_and_thresholds(engine)?;
    audit_owners(engine)?;
    audit_views(engine)?;
    Ok(())
}

/// Run the cheap audits only, skipping the from-scratch view comparison.
/// Suitable for running after every update in long randomized streams.
pub fn audit_structural(engine: &Engine) -> Result<(), AuditViolation> {
    audit_fragments(engine)?;
    audit_degrees(engine)?;
    audit_size_and_thresholds(engine)?;
    audit_owners(engine)?;
    Ok(())
}

/// Fragments are disjoint, cover the base relation, and agree with each
/// tuple's current signature.
pub fn audit_fragments(engine: &Engine) -> Result<(), AuditViolation> {
    for (a, base) in engine.bases.iter().enumerate() {
        let mut seen: HashMap<Vec<i64>, u32> = HashMap::new();
        for (&sig, frag) in &base.fragments {
            for (t, m) in frag.iter() {
                if m != 1 || seen.insert(t.clone(), sig).is_some() {
                    return Err(AuditViolation::FragmentPartition { atom: a });
                }
            }
        }
        if seen.len() != base.full.len() {
            return Err(AuditViolation::FragmentPartition { atom: a });
        }
        for (t, m) in base.full.iter() {
            if m != 1 {
                return Err(AuditViolation::FragmentPartition { atom: a });
            }
            let expected = base.signature(t, &engine.partitions);
            if seen.get(t) != Some(&expected) {
                return Err(AuditViolation::FragmentSignature { atom: a });
            }
        }
    }
    Ok(())
}

/// Degree counters equal the true per-atom distinct-tuple degrees.
pub fn audit_degrees(engine: &Engine) -> Result<(), AuditViolation> {
    for (&(var, atom), counts) in &engine.degrees {
        let layout: Vec<VarId> = engine.bases[atom].schema.iter().collect();
        let pos = layout.binary_search(&var).expect("join var in schema");
        let mut actual: HashMap<i64, u64> = HashMap::new();
        for (t, _) in engine.bases[atom].full.iter() {
            *actual.entry(t[pos]).or_insert(0) += 1;
        }
        let stored: HashMap<i64, u64> =
            counts.iter().filter(|(_, &d)| d > 0).map(|(&v, &d)| (v, d)).collect();
        if stored != actual {
            return Err(AuditViolation::DegreeCounter { var, atom });
        }
    }
    Ok(())
}

/// `floor(M/4) <= N < M`, `N` matches the stored tuples, and every
/// classified value respects the relaxed thresholds.
pub fn audit_size_and_thresholds(engine: &Engine) -> Result<(), AuditViolation> {
    let actual: u64 = engine.bases.iter().map(|b| b.full.len() as u64).sum();
    if actual != engine.n {
        return Err(AuditViolation::SizeCounter { n: engine.n, actual });
    }
    if !(engine.m / 4 <= engine.n && engine.n < engine.m) {
        return Err(AuditViolation::SizeInvariant { m: engine.m, n: engine.n });
    }
    let t = engine.thresholds();
    for (&var, part) in &engine.partitions {
        // Heavy values must sit above the demotion threshold.
        for value in part.heavy_values() {
            if t.below_lower(engine.degree(var, value)) {
                return Err(AuditViolation::ThresholdInvariant { var, value });
            }
        }
        // Light values (everything else with nonzero degree) must sit at
        // or below the promotion threshold.
        let mut values: Vec<i64> = Vec::new();
        for ((v, _), counts) in &engine.degrees {
            if *v == var {
                values.extend(counts.iter().filter(|(_, &d)| d > 0).map(|(&x, _)| x));
            }
        }
        values.sort();
        values.dedup();
        for value in values {
            if !part.is_heavy(value) && t.above_upper(engine.degree(var, value)) {
                return Err(AuditViolation::ThresholdInvariant { var, value });
            }
        }
    }
    Ok(())
}

/// Every variable owns a unique owner view in every configuration.
pub fn audit_owners(engine: &Engine) -> Result<(), AuditViolation> {
    for (cfg, plan_cfg) in engine.plan.configs.iter().enumerate() {
        if compute_owners(&plan_cfg.tree).is_err() {
            return Err(AuditViolation::OwnerUniqueness { cfg });
        }
    }
    Ok(())
}

/// Every materialized view equals the from-scratch join of the fragments
/// below it, projected onto the view schema.
pub fn audit_views(engine: &mut Engine) -> Result<(), AuditViolation> {
    for cfg in 0..engine.plan.configs.len() {
        let tree = engine.plan.configs[cfg].tree.clone();
        for node in &tree.nodes {
            if node.kind == NodeKind::AtomLeaf {
                continue;
            }
            let atoms = tree.leaves_under(node.id);
            let schemas: Vec<VarSet> = atoms.iter().map(|&a| engine.bases[a].schema).collect();
            let frags: Vec<HashMap<Vec<i64>, i64>> = atoms
                .iter()
                .map(|&a| {
                    let sig = engine.config_signature(cfg, a);
                    engine.bases[a].fragments[&sig]
                        .iter()
                        .map(|(t, m)| (t.clone(), m))
                        .collect()
                })
                .collect();
            let refs: Vec<&HashMap<Vec<i64>, i64>> = frags.iter().collect();
            let expected = naive_join(&schemas, &refs, node.schema)
                .map_err(|e| AuditViolation::Oracle(e.to_string()))?;
            let view = engine.states[cfg].views[node.id].as_ref().expect("view");
            let got: HashMap<Vec<i64>, i64> = view.iter().map(|(t, m)| (t.clone(), m)).collect();
            let expected: HashMap<Vec<i64>, i64> = expected.into_iter().collect();
            if got != expected {
                return Err(AuditViolation::ViewExactness { cfg, node: node.id });
            }
        }
    }
    Ok(())
}

/// A snapshot of every view's contents, for the delta-path locality check.
pub type ViewSnapshot = Vec<Vec<Option<Vec<(Vec<i64>, i64)>>>>;

pub fn snapshot_views(engine: &Engine) -> ViewSnapshot {
    engine
        .states
        .iter()
        .map(|s| s.views.iter().map(|v| v.as_ref().map(|r| r.sorted_tuples())).collect())
        .collect()
}

/// After an update to `relation`, views may change only on the leaf-to-root
/// path of that relation's leaf, and only in configurations matching the
/// tuple's signature. Rebalancing moves tuples between fragments, so this
/// check is meaningful only for updates that triggered no rebalancing.
pub fn check_delta_path_locality(
    engine: &Engine,
    before: &ViewSnapshot,
    relation: &str,
) -> Result<(), AuditViolation> {
    let after = snapshot_views(engine);
    for (cfg, plan_cfg) in engine.plan.configs.iter().enumerate() {
        let dt = crate::viewtree::delta_view_tree(&engine.query, &plan_cfg.tree, relation)
            .expect("leaf per atom");
        for node in 0..plan_cfg.tree.nodes.len() {
            if dt.delta_path.contains(&node) {
                continue;
            }
            if before[cfg][node] != after[cfg][node] {
                return Err(AuditViolation::DeltaPathLocality { cfg, node });
            }
        }
    }
    Ok(())
}
