//! Width planning: choosing, per degree configuration, the view tree and
//! per-view guarding strategies that minimize the worst-case single-update
//! maintenance cost, symbolically in the threshold parameter `eps`.
//!
//! Costs are exact piecewise-linear functions of `eps` on `[0, 1]`:
//!
//! * the cost of one delta view is the best covering bound over all schema
//!   extensions `X' ⊇ X` within the variables of its derived constraints
//!   and all maximal acyclic subsets of the projected constraint set;
//! * the cost of a tree under one configuration is the pointwise maximum
//!   over all (delta-path view, updated relation) pairs;
//! * the cost of a configuration is the pointwise minimum over trees;
//! * the maintenance width is the minimum over `eps` of the pointwise
//!   maximum over configurations, reported with its smallest minimizer.
//!
//! The dynamic width replaces the covering bound by fractional edge cover
//! numbers and ignores configurations; it upper-bounds classical
//! non-adaptive maintenance and the planner records both.

use std::collections::HashMap;

use num::Zero;
use thiserror::Error;

use crate::constraints::{
    derive_constraints, guard_atoms, ConstraintError, ConstraintSet, LeafAtom,
};
use crate::piecewise::PiecewiseLinear;
use crate::polymatroid::{fractional_edge_cover, symbolic_bound, LpError};
use crate::query::{parse_query, DegreeConfiguration, Query, VarSet};
use crate::viewtree::{
    delta_view_tree, enumerate_view_trees, EnumerationLimits, NodeKind, ViewTree,
};
use crate::Rat;

#[derive(Error, Debug)]
pub enum PlanError {
    #[error("view tree enumeration exceeded the configured limit")]
    TreeLimit,
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error("constraint derivation failed: {0}")]
    Constraint(#[from] ConstraintError),
    #[error("plan file malformed: {0}")]
    Malformed(String),
}

/// How one delta view is computed for one updated relation: the guarding
/// query is the join of the guard atoms' projections onto `schema`, with
/// the join order derived from the acyclic constraint set.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GuardingStrategy {
    /// Node id of the delta view in the configuration's tree.
    pub view: usize,
    /// Updated relation name.
    pub relation: String,
    /// The extension `X'` of the view schema the guarding query ranges over.
    pub schema: VarSet,
    /// The chosen maximal acyclic subset of the projected constraints.
    pub constraints: ConstraintSet,
    /// Atom indices whose relations appear in the guarding query.
    pub guards: Vec<usize>,
}

/// The plan for one degree configuration: a view tree plus one guarding
/// strategy per (delta-path join view, updated relation).
#[derive(Clone, Debug)]
pub struct ConfigPlan {
    pub config: DegreeConfiguration,
    pub tree: ViewTree,
    pub strategies: Vec<GuardingStrategy>,
    /// This tree's update cost as a function of `eps`.
    pub cost: PiecewiseLinear,
}

impl ConfigPlan {
    pub fn strategy(&self, view: usize, relation: &str) -> Option<&GuardingStrategy> {
        self.strategies.iter().find(|s| s.view == view && s.relation == relation)
    }
}

/// A complete maintenance plan.
#[derive(Clone, Debug)]
pub struct Plan {
    pub query: Query,
    /// The threshold exponent the engine runs at.
    pub epsilon: Rat,
    /// Maintenance width (optimal over `eps`, not necessarily at `epsilon`).
    pub mw: Rat,
    /// Smallest optimal `eps`.
    pub epsilon_star: Rat,
    /// Dynamic width.
    pub dw: Rat,
    pub configs: Vec<ConfigPlan>,
}

impl Plan {
    pub fn config(&self, config: &DegreeConfiguration) -> &ConfigPlan {
        self.configs
            .iter()
            .find(|c| &c.config == config)
            .expect("plan covers every configuration")
    }
}

type DeltaKey = (u32, usize, u32, VarSet);

/// One way to compute a delta view together with its cost function.
#[derive(Clone, Debug)]
struct Candidate {
    schema: VarSet,
    constraints: ConstraintSet,
    cost: PiecewiseLinear,
}

/// Incremental-width planner with memoized delta-view costs.
pub struct Planner<'a> {
    q: &'a Query,
    join_vars: Vec<crate::query::VarId>,
    memo: HashMap<DeltaKey, Vec<Candidate>>,
    costs: HashMap<DeltaKey, PiecewiseLinear>,
    tree_costs: HashMap<Vec<DeltaKey>, PiecewiseLinear>,
    bounds: HashMap<ConstraintSet, PiecewiseLinear>,
    subsets: HashMap<ConstraintSet, Vec<ConstraintSet>>,
}

impl<'a> Planner<'a> {
    pub fn new(q: &'a Query) -> Planner<'a> {
        Planner {
            q,
            join_vars: q.join_variables(),
            memo: HashMap::new(),
            costs: HashMap::new(),
            tree_costs: HashMap::new(),
            bounds: HashMap::new(),
            subsets: HashMap::new(),
        }
    }

    /// Memo key for one delta view. Only the labels of join variables
    /// appearing in a non-delta leaf influence the derived constraints, so
    /// the configuration collapses to a bitmask of visible heavy positions.
    fn delta_key(
        &self,
        leaf_atoms: &[usize],
        delta: usize,
        config: &DegreeConfiguration,
        x: VarSet,
    ) -> DeltaKey {
        let mask = leaf_atoms.iter().fold(0u32, |m, &a| m | 1 << a);
        let visible = leaf_atoms
            .iter()
            .filter(|&&a| a != delta)
            .fold(VarSet::EMPTY, |acc, &a| acc.union(self.q.atom_set(a)));
        let mut code = 0u32;
        for (pos, &v) in self.join_vars.iter().enumerate() {
            if visible.contains(v) && config.label_at(pos) == crate::query::Label::Heavy {
                code |= 1 << pos;
            }
        }
        (mask, delta, code, x)
    }

    /// All candidate strategies for a delta view over the given leaves
    /// (ascending atom indices), with `delta` marking the updated atom and
    /// `x` the view schema.
    fn candidates(
        &mut self,
        leaf_atoms: &[usize],
        delta: usize,
        config: &DegreeConfiguration,
        x: VarSet,
    ) -> Result<&[Candidate], PlanError> {
        let key = self.delta_key(leaf_atoms, delta, config, x);
        if !self.memo.contains_key(&key) {
            let leaves: Vec<LeafAtom> = leaf_atoms
                .iter()
                .map(|&atom| LeafAtom { atom, is_delta: atom == delta })
                .collect();
            let dc = derive_constraints(self.q, &leaves, config)?;
            let universe = dc.vars();
            let mut out = Vec::new();
            for ext in x.supersets_within(universe) {
                let projected = dc.project(ext);
                if !self.subsets.contains_key(&projected) {
                    let subs = projected.maximal_acyclic_subsets()?;
                    self.subsets.insert(projected.clone(), subs);
                }
                for subset in self.subsets[&projected].clone() {
                    let cost = match self.bounds.get(&subset) {
                        Some(f) => f.clone(),
                        None => {
                            let f = symbolic_bound(&subset)?;
                            self.bounds.insert(subset.clone(), f.clone());
                            f
                        }
                    };
                    out.push(Candidate { schema: ext, constraints: subset, cost });
                }
            }
            self.memo.insert(key.clone(), out);
        }
        Ok(&self.memo[&key])
    }

    /// Pointwise-minimum cost of one delta view.
    fn delta_view_cost(
        &mut self,
        leaf_atoms: &[usize],
        delta: usize,
        config: &DegreeConfiguration,
        x: VarSet,
    ) -> Result<PiecewiseLinear, PlanError> {
        let key = self.delta_key(leaf_atoms, delta, config, x);
        if let Some(f) = self.costs.get(&key) {
            return Ok(f.clone());
        }
        let costs: Vec<PiecewiseLinear> = self
            .candidates(leaf_atoms, delta, config, x)?
            .iter()
            .map(|c| c.cost.clone())
            .collect();
        let f = PiecewiseLinear::min_of(&costs);
        self.costs.insert(key, f.clone());
        Ok(f)
    }

    /// The strategy attaining the minimum cost at `eps` for one delta view,
    /// first in generation order among ties.
    fn strategy_at(
        &mut self,
        leaf_atoms: &[usize],
        delta: usize,
        config: &DegreeConfiguration,
        x: VarSet,
        view: usize,
        eps: &Rat,
    ) -> Result<GuardingStrategy, PlanError> {
        let best = self
            .candidates(leaf_atoms, delta, config, x)?
            .iter()
            .min_by_key(|c| c.cost.eval(eps))
            .expect("at least one candidate exists")
            .clone();
        let leaves: Vec<LeafAtom> = leaf_atoms
            .iter()
            .map(|&atom| LeafAtom { atom, is_delta: atom == delta })
            .collect();
        let guards = guard_atoms(self.q, &leaves, &best.constraints);
        Ok(GuardingStrategy {
            view,
            relation: self.q.atoms[delta].relation.clone(),
            schema: best.schema,
            constraints: best.constraints.clone(),
            guards,
        })
    }

    /// Update cost of one tree under one configuration: the pointwise
    /// maximum over every join view on every single-update delta path.
    pub fn tree_update_cost(
        &mut self,
        tree: &ViewTree,
        config: &DegreeConfiguration,
    ) -> Result<PiecewiseLinear, PlanError> {
        let mut keys = Vec::new();
        let mut sites = Vec::new();
        for delta in 0..self.q.atoms.len() {
            let dt = delta_view_tree(self.q, tree, &self.q.atoms[delta].relation)
                .expect("leaf bijection holds for enumerated trees");
            for &node in &dt.delta_path {
                if tree.nodes[node].kind != NodeKind::JoinView {
                    continue;
                }
                let leaf_atoms = tree.leaves_under(node);
                let x = tree.nodes[node].schema;
                keys.push(self.delta_key(&leaf_atoms, delta, config, x));
                sites.push((leaf_atoms, delta, x));
            }
        }
        keys.sort();
        keys.dedup();
        if let Some(f) = self.tree_costs.get(&keys) {
            return Ok(f.clone());
        }
        let mut parts = vec![PiecewiseLinear::constant(Rat::zero())];
        for (leaf_atoms, delta, x) in sites {
            parts.push(self.delta_view_cost(&leaf_atoms, delta, config, x)?);
        }
        let f = PiecewiseLinear::max_of(&parts);
        self.tree_costs.insert(keys, f.clone());
        Ok(f)
    }

    /// All guarding strategies for a chosen tree at a fixed `eps`.
    fn tree_strategies(
        &mut self,
        tree: &ViewTree,
        config: &DegreeConfiguration,
        eps: &Rat,
    ) -> Result<Vec<GuardingStrategy>, PlanError> {
        let mut out = Vec::new();
        for delta in 0..self.q.atoms.len() {
            let dt = delta_view_tree(self.q, tree, &self.q.atoms[delta].relation)
                .expect("leaf bijection holds for enumerated trees");
            for &node in &dt.delta_path {
                if tree.nodes[node].kind != NodeKind::JoinView {
                    continue;
                }
                let leaf_atoms = tree.leaves_under(node);
                let x = tree.nodes[node].schema;
                out.push(self.strategy_at(&leaf_atoms, delta, config, x, node, eps)?);
            }
        }
        Ok(out)
    }
}

/// Update cost of one configuration: pointwise minimum over the trees.
pub fn config_cost(
    q: &Query,
    trees: &[ViewTree],
    config: &DegreeConfiguration,
) -> Result<PiecewiseLinear, PlanError> {
    let mut planner = Planner::new(q);
    let costs: Vec<PiecewiseLinear> = trees
        .iter()
        .map(|t| planner.tree_update_cost(t, config))
        .collect::<Result<_, _>>()?;
    Ok(PiecewiseLinear::min_of(&costs))
}

/// Dynamic width: best over trees of the worst fractional edge cover of
/// `X ∖ Y` over all pairs of a view `V(X)` and a leaf `R(Y)` below it.
pub fn dynamic_width(q: &Query, trees: &[ViewTree]) -> Result<Rat, PlanError> {
    let mut best: Option<Rat> = None;
    for tree in trees {
        let mut worst = Rat::zero();
        for node in &tree.nodes {
            if node.kind == NodeKind::AtomLeaf {
                continue;
            }
            let leaf_atoms = tree.leaves_under(node.id);
            let schemas: Vec<VarSet> = leaf_atoms.iter().map(|&a| q.atom_set(a)).collect();
            for &a in &leaf_atoms {
                let target = node.schema.minus(q.atom_set(a));
                let rho = fractional_edge_cover(&schemas, target)?;
                if rho > worst {
                    worst = rho;
                }
            }
        }
        if best.as_ref().map_or(true, |b| worst < *b) {
            best = Some(worst);
        }
    }
    best.ok_or(PlanError::Malformed("no view trees".into()))
}

/// Build the full plan. `eps_override` pins the running threshold exponent;
/// the width and its smallest optimal `eps` are reported either way.
pub fn build_plan(
    q: &Query,
    limits: &EnumerationLimits,
    eps_override: Option<Rat>,
) -> Result<Plan, PlanError> {
    let trees = enumerate_view_trees(q, limits).map_err(|_| PlanError::TreeLimit)?;
    let mut planner = Planner::new(q);
    let configs = q.degree_configurations();
    // Per-configuration cost functions and the per-tree costs behind them.
    let mut per_config_tree_costs: Vec<Vec<PiecewiseLinear>> = Vec::with_capacity(configs.len());
    let mut config_costs: Vec<PiecewiseLinear> = Vec::with_capacity(configs.len());
    for config in &configs {
        let costs: Vec<PiecewiseLinear> = trees
            .iter()
            .map(|t| planner.tree_update_cost(t, config))
            .collect::<Result<_, _>>()?;
        config_costs.push(PiecewiseLinear::min_of(&costs));
        per_config_tree_costs.push(costs);
    }
    let overall = PiecewiseLinear::max_of(&config_costs);
    let (mw, epsilon_star) = overall.min_over_unit();
    let epsilon = eps_override.unwrap_or_else(|| epsilon_star.clone());

    let mut config_plans = Vec::with_capacity(configs.len());
    for (config, tree_costs) in configs.iter().zip(&per_config_tree_costs) {
        let best_cost = tree_costs
            .iter()
            .map(|c| c.eval(&epsilon))
            .min()
            .expect("at least one tree");
        let chosen = trees
            .iter()
            .zip(tree_costs)
            .filter(|(_, c)| c.eval(&epsilon) == best_cost)
            .min_by_key(|(t, _)| t.canonical_key(q))
            .map(|(t, c)| (t.clone(), c.clone()))
            .expect("at least one tree");
        let strategies = planner.tree_strategies(&chosen.0, config, &epsilon)?;
        config_plans.push(ConfigPlan {
            config: config.clone(),
            tree: chosen.0,
            strategies,
            cost: chosen.1,
        });
    }
    let dw = dynamic_width(q, &trees)?;
    Ok(Plan { query: q.clone(), epsilon, mw, epsilon_star, dw, configs: config_plans })
}

/// Maintenance width and its smallest optimal `eps`, without building the
/// per-configuration artifacts.
pub fn maintenance_width(q: &Query, limits: &EnumerationLimits) -> Result<(Rat, Rat), PlanError> {
    let trees = enumerate_view_trees(q, limits).map_err(|_| PlanError::TreeLimit)?;
    let mut planner = Planner::new(q);
    let mut config_costs = Vec::new();
    for config in q.degree_configurations() {
        let costs: Vec<PiecewiseLinear> = trees
            .iter()
            .map(|t| planner.tree_update_cost(t, &config))
            .collect::<Result<_, _>>()?;
        config_costs.push(PiecewiseLinear::min_of(&costs));
    }
    Ok(PiecewiseLinear::max_of(&config_costs).min_over_unit())
}

const PLAN_VERSION: &str = "aivm-plan v1";

impl Plan {
    /// Versioned text form; `Plan::deserialize` restores it bit-exactly.
    pub fn serialize(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "{PLAN_VERSION}");
        let _ = writeln!(out, "query {}", self.query.pretty_print());
        let _ = writeln!(out, "epsilon {}", self.epsilon);
        let _ = writeln!(out, "mw {}", self.mw);
        let _ = writeln!(out, "epsilon-star {}", self.epsilon_star);
        let _ = writeln!(out, "dw {}", self.dw);
        let _ = writeln!(out, "configs {}", self.configs.len());
        for cp in &self.configs {
            let _ = writeln!(out, "config {}", cp.config.code());
            out.push_str(&cp.tree.serialize(&self.query));
            let _ = writeln!(out, "strategies {}", cp.strategies.len());
            for s in &cp.strategies {
                let _ = writeln!(
                    out,
                    "strategy view={} rel={} schema={} guards={}",
                    s.view,
                    s.relation,
                    self.query.set_names(s.schema).join(","),
                    s.guards
                        .iter()
                        .map(|&a| self.query.atoms[a].relation.as_str())
                        .collect::<Vec<_>>()
                        .join(","),
                );
                let _ = writeln!(out, "constraints {}", s.constraints.serialize(&self.query));
            }
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Plan, PlanError> {
        let bad = |m: &str| PlanError::Malformed(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(PLAN_VERSION) {
            return Err(bad("unknown plan version"));
        }
        let field = |line: Option<&str>, key: &str| -> Result<String, PlanError> {
            line.and_then(|l| l.strip_prefix(key))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| PlanError::Malformed(format!("expected `{key}` line")))
        };
        let query = parse_query(&field(lines.next(), "query ")?)
            .map_err(|e| PlanError::Malformed(e.to_string()))?;
        let parse_rat = |s: &str| -> Result<Rat, PlanError> {
            s.parse().map_err(|_| PlanError::Malformed(format!("bad rational {s:?}")))
        };
        let epsilon = parse_rat(&field(lines.next(), "epsilon ")?)?;
        let mw = parse_rat(&field(lines.next(), "mw ")?)?;
        let epsilon_star = parse_rat(&field(lines.next(), "epsilon-star ")?)?;
        let dw = parse_rat(&field(lines.next(), "dw ")?)?;
        let n: usize = field(lines.next(), "configs ")?
            .parse()
            .map_err(|_| bad("bad config count"))?;
        let rest: Vec<&str> = lines.collect();
        let mut pos = 0;
        let mut configs = Vec::with_capacity(n);
        let mut planner = Planner::new(&query);
        for _ in 0..n {
            let code = rest
                .get(pos)
                .and_then(|l| l.strip_prefix("config "))
                .ok_or_else(|| bad("expected `config` line"))?;
            let config =
                DegreeConfiguration::parse_code(code).ok_or_else(|| bad("bad config code"))?;
            pos += 1;
            let (tree, used) = ViewTree::deserialize_prefix(&query, &rest[pos..])
                .map_err(|e| PlanError::Malformed(e))?;
            pos += used;
            let k: usize = rest
                .get(pos)
                .and_then(|l| l.strip_prefix("strategies "))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("expected `strategies` line"))?;
            pos += 1;
            let mut strategies = Vec::with_capacity(k);
            for _ in 0..k {
                let line = rest.get(pos).ok_or_else(|| bad("truncated strategy"))?;
                let mut view = None;
                let mut relation = None;
                let mut schema = None;
                let mut guards = None;
                for part in line
                    .strip_prefix("strategy ")
                    .ok_or_else(|| bad("expected `strategy` line"))?
                    .split_whitespace()
                {
                    let (key, value) =
                        part.split_once('=').ok_or_else(|| bad("bad strategy field"))?;
                    match key {
                        "view" => view = value.parse::<usize>().ok(),
                        "rel" => relation = Some(value.to_string()),
                        "schema" => {
                            let mut set = VarSet::EMPTY;
                            for name in value.split(',').filter(|s| !s.is_empty()) {
                                let v = query
                                    .var_id(name)
                                    .ok_or_else(|| bad("unknown variable in schema"))?;
                                set = set.union(VarSet::singleton(v));
                            }
                            schema = Some(set);
                        }
                        "guards" => {
                            guards = Some(
                                value
                                    .split(',')
                                    .filter(|s| !s.is_empty())
                                    .map(|r| {
                                        query
                                            .atom_index(r)
                                            .ok_or_else(|| bad("unknown guard relation"))
                                    })
                                    .collect::<Result<Vec<usize>, _>>()?,
                            );
                        }
                        _ => return Err(bad("unknown strategy field")),
                    }
                }
                pos += 1;
                let ctext = rest
                    .get(pos)
                    .and_then(|l| l.strip_prefix("constraints "))
                    .ok_or_else(|| bad("expected `constraints` line"))?;
                let constraints =
                    ConstraintSet::parse(&query, ctext).map_err(PlanError::Malformed)?;
                pos += 1;
                strategies.push(GuardingStrategy {
                    view: view.ok_or_else(|| bad("missing view id"))?,
                    relation: relation.ok_or_else(|| bad("missing relation"))?,
                    schema: schema.ok_or_else(|| bad("missing schema"))?,
                    constraints,
                    guards: guards.ok_or_else(|| bad("missing guards"))?,
                });
            }
            let cost = planner.tree_update_cost(&tree, &config)?;
            configs.push(ConfigPlan { config, tree, strategies, cost });
        }
        drop(planner);
        Ok(Plan { query, epsilon, mw, epsilon_star, dw, configs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::fixtures::FIXTURES;
    use crate::rat;

    fn plan_fixture(name: &str) -> Plan {
        let fx = FIXTURES.iter().find(|f| f.name == name).unwrap();
        let q = parse_query(fx.text).unwrap();
        build_plan(&q, &EnumerationLimits::default(), None).unwrap()
    }

    #[test]
    fn hierarchical_width_zero() {
        let p = plan_fixture("hierarchical");
        assert_eq!(p.mw, rat(0, 1));
        assert_eq!(p.epsilon_star, rat(0, 1));
        assert_eq!(p.dw, rat(0, 1));
    }

    #[test]
    fn three_path_width_half() {
        let p = plan_fixture("3-path");
        assert_eq!(p.mw, rat(1, 2));
        assert_eq!(p.epsilon_star, rat(1, 2));
        assert_eq!(p.dw, rat(1, 1));
    }

    #[test]
    fn four_cycle_width_two_thirds() {
        let p = plan_fixture("4-cycle");
        assert_eq!(p.mw, rat(2, 3));
        assert_eq!(p.epsilon_star, rat(1, 3));
        assert_eq!(p.dw, rat(1, 1));
    }

    #[test]
    fn plan_serialization_bit_exact() {
        let p = plan_fixture("3-path");
        let text = p.serialize();
        let back = Plan::deserialize(&text).unwrap();
        assert_eq!(back.serialize(), text);
        assert_eq!(back.epsilon, p.epsilon);
        assert_eq!(back.configs.len(), p.configs.len());
        for (a, b) in p.configs.iter().zip(&back.configs) {
            assert_eq!(a.tree.canonical_key(&p.query), b.tree.canonical_key(&p.query));
            assert_eq!(a.strategies, b.strategies);
        }
    }

    #[test]
    fn epsilon_override_respected() {
        let fx = FIXTURES.iter().find(|f| f.name == "3-path").unwrap();
        let q = parse_query(fx.text).unwrap();
        let p = build_plan(&q, &EnumerationLimits::default(), Some(rat(1, 4))).unwrap();
        assert_eq!(p.epsilon, rat(1, 4));
        assert_eq!(p.epsilon_star, rat(1, 2));
        assert_eq!(p.mw, rat(1, 2));
    }
}
