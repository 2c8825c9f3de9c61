//! View trees: rooted trees of join and projection views over the atoms of a
//! join query.
//!
//! The leaves of a view tree are in bijection with the query's atoms. A join
//! view has at least two children and its schema is the union of the child
//! schemas; a projection view has one child and drops part of the child
//! schema. A projection may only drop a variable when every atom containing
//! that variable lies in the subtree below the projection — this is what
//! makes top-down enumeration from owner views sound.
//!
//! The enumeration covers every binary join shape (all recursive
//! two-partitions of the atom set) combined with one of two projection
//! policies:
//!
//! * `Eager`: directly above every leaf and every non-root join, insert a
//!   projection dropping all droppable variables (those whose atoms all lie
//!   below), when that set is non-empty.
//! * `EagerAndKeep`: at each such position generate a variant for every
//!   subset of the droppable set (including dropping nothing).
//!
//! The root never gets a projection on top: dropping every remaining
//! variable is the count view, which is handled separately.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::query::{Query, VarSet};

/// Node kind within a [`ViewTree`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NodeKind {
    AtomLeaf,
    JoinView,
    ProjectionView,
}

/// One node of a view tree.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ViewNode {
    pub id: usize,
    pub kind: NodeKind,
    pub schema: VarSet,
    pub children: Vec<usize>,
    /// Atom index in the query, for `AtomLeaf` nodes.
    pub source_atom: Option<usize>,
}

/// A view tree; nodes are stored in an id-indexed table with the root last
/// by construction (children precede parents).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ViewTree {
    pub nodes: Vec<ViewNode>,
    pub root: usize,
}

/// A view tree with one atom marked as updated; `delta_path` lists the node
/// ids from the updated leaf to the root, leaf first.
#[derive(Clone, Debug)]
pub struct DeltaViewTree<'a> {
    pub base: &'a ViewTree,
    pub updated_atom: usize,
    pub delta_path: Vec<usize>,
}

/// Structural violation found by [`validate_view_tree`].
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    #[error("node {0} is not reachable from the root exactly once")]
    NotATree(usize),
    #[error("leaves are not in bijection with the query atoms")]
    LeafBijection,
    #[error("join node {0} needs at least two children")]
    JoinArity(usize),
    #[error("join node {0} schema differs from the union of child schemas")]
    JoinSchema(usize),
    #[error("projection node {0} must have exactly one child")]
    ProjectionArity(usize),
    #[error("projection node {0} schema is not a strict subset of its child schema")]
    ProjectionSchema(usize),
    #[error("projection node {0} drops a variable with atoms outside its subtree")]
    ProjectionScope(usize),
    #[error("atom leaf {0} schema differs from its atom")]
    LeafSchema(usize),
}

/// Projection policy used by [`enumerate_view_trees`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProjectionPolicy {
    Eager,
    EagerAndKeep,
}

impl std::str::FromStr for ProjectionPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eager" => Ok(ProjectionPolicy::Eager),
            "eager-and-keep" => Ok(ProjectionPolicy::EagerAndKeep),
            other => Err(format!("unknown policy {other:?} (eager|eager-and-keep)")),
        }
    }
}

/// Limits for tree enumeration.
#[derive(Clone, Copy, Debug)]
pub struct EnumerationLimits {
    pub max_trees: usize,
    pub projection_policy: ProjectionPolicy,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits { max_trees: 20000, projection_policy: ProjectionPolicy::EagerAndKeep }
    }
}

/// Raised when enumeration exceeds `max_trees`; carries the partial list.
#[derive(Debug)]
pub struct TreeLimitExceeded {
    pub partial: Vec<ViewTree>,
}

impl std::fmt::Display for TreeLimitExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "view tree enumeration limit exceeded ({} trees kept)", self.partial.len())
    }
}

impl std::error::Error for TreeLimitExceeded {}

impl ViewTree {
    /// Atom indices at the leaves of the subtree rooted at `node`.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut atoms = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            let nd = &self.nodes[n];
            if let Some(a) = nd.source_atom {
                atoms.push(a);
            }
            stack.extend(nd.children.iter().copied());
        }
        atoms.sort_unstable();
        atoms
    }

    /// Parent index per node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.nodes.len()];
        for n in &self.nodes {
            for &c in &n.children {
                parent[c] = Some(n.id);
            }
        }
        parent
    }

    /// The leaf node id holding atom `atom`.
    pub fn leaf_of_atom(&self, atom: usize) -> Option<usize> {
        self.nodes.iter().find(|n| n.source_atom == Some(atom)).map(|n| n.id)
    }

    /// A canonical, order-insensitive key for deduplication: a recursively
    /// built string of sorted child keys plus schemas.
    pub fn canonical_key(&self, q: &Query) -> String {
        fn go(t: &ViewTree, q: &Query, n: usize, out: &mut String) {
            let node = &t.nodes[n];
            match node.kind {
                NodeKind::AtomLeaf => {
                    let _ = write!(out, "L:{}", q.atoms[node.source_atom.unwrap()].relation);
                }
                NodeKind::ProjectionView => {
                    let _ = write!(out, "P[{}](", q.set_names(node.schema).join(","));
                    go(t, q, node.children[0], out);
                    out.push(')');
                }
                NodeKind::JoinView => {
                    let mut keys: Vec<String> = node
                        .children
                        .iter()
                        .map(|&c| {
                            let mut s = String::new();
                            go(t, q, c, &mut s);
                            s
                        })
                        .collect();
                    keys.sort();
                    let _ = write!(out, "J[{}](", q.set_names(node.schema).join(","));
                    out.push_str(&keys.join("|"));
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        go(self, q, self.root, &mut s);
        s
    }

    /// Serialize to the indented text form used inside plan files.
    pub fn serialize(&self, q: &Query) -> String {
        let mut out = String::from("view-tree\n");
        for n in &self.nodes {
            let kind = match n.kind {
                NodeKind::AtomLeaf => "atom",
                NodeKind::JoinView => "join",
                NodeKind::ProjectionView => "proj",
            };
            let schema = q.set_names(n.schema).join(" ");
            let _ = write!(out, "  {} {} [{}]", n.id, kind, schema);
            if let Some(a) = n.source_atom {
                let _ = write!(out, " atom={}", q.atoms[a].relation);
            }
            if !n.children.is_empty() {
                let _ = write!(
                    out,
                    " <- {}",
                    n.children.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
                );
            }
            out.push('\n');
        }
        let _ = writeln!(out, "  root {}", self.root);
        out
    }

    /// Parse the output of [`ViewTree::serialize`]; round-trips bit-exactly.
    pub fn deserialize(q: &Query, text: &str) -> Result<ViewTree, String> {
        let lines: Vec<&str> = text.lines().collect();
        let (tree, used) = ViewTree::deserialize_prefix(q, &lines)?;
        if lines[used..].iter().any(|l| !l.trim().is_empty()) {
            return Err("trailing content after view tree".into());
        }
        Ok(tree)
    }

    /// Parse a serialized tree from the start of `lines`; returns the tree
    /// and the number of lines consumed. Lets plan files embed trees.
    pub fn deserialize_prefix(q: &Query, lines: &[&str]) -> Result<(ViewTree, usize), String> {
        if lines.first().map(|l| l.trim()) != Some("view-tree") {
            return Err("missing view-tree header".into());
        }
        let mut nodes: Vec<ViewNode> = Vec::new();
        let mut root = None;
        let mut used = 1;
        for line in &lines[1..] {
            let line = line.trim();
            used += 1;
            if line.is_empty() {
                continue;
            }
            if let Some(r) = line.strip_prefix("root ") {
                root = Some(r.trim().parse::<usize>().map_err(|e| e.to_string())?);
                break;
            }
            let mut rest = line;
            let id: usize = take_token(&mut rest)?.parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
            let kind = match take_token(&mut rest)? {
                "atom" => NodeKind::AtomLeaf,
                "join" => NodeKind::JoinView,
                "proj" => NodeKind::ProjectionView,
                k => return Err(format!("unknown node kind {k:?}")),
            };
            let open = rest.find('[').ok_or("missing schema")?;
            let close = rest.find(']').ok_or("missing schema")?;
            let schema_names: Vec<&str> =
                rest[open + 1..close].split_whitespace().collect();
            let mut schema = VarSet::EMPTY;
            for name in schema_names {
                let v = q.var_id(name).ok_or_else(|| format!("unknown variable {name:?}"))?;
                schema = schema.union(VarSet::singleton(v));
            }
            rest = rest[close + 1..].trim();
            let mut source_atom = None;
            if let Some(r) = rest.strip_prefix("atom=") {
                let (rel, tail) = r.split_once(' ').unwrap_or((r, ""));
                source_atom =
                    Some(q.atom_index(rel).ok_or_else(|| format!("unknown relation {rel:?}"))?);
                rest = tail.trim();
            }
            let mut children = Vec::new();
            if let Some(r) = rest.strip_prefix("<-") {
                for tok in r.split_whitespace() {
                    children.push(tok.parse::<usize>().map_err(|e| e.to_string())?);
                }
            }
            if id != nodes.len() {
                return Err(format!("non-contiguous node id {id}"));
            }
            nodes.push(ViewNode { id, kind, schema, children, source_atom });
        }
        let root = root.ok_or("missing root line")?;
        Ok((ViewTree { nodes, root }, used))
    }
}

fn take_token<'a>(rest: &mut &'a str) -> Result<&'a str, String> {
    let r = rest.trim_start();
    let end = r.find(|c: char| c.is_whitespace()).unwrap_or(r.len());
    if end == 0 {
        return Err("unexpected end of line".into());
    }
    let tok = &r[..end];
    *rest = &r[end..];
    Ok(tok)
}

/// Check structural invariants; reports the first violation found.
pub fn validate_view_tree(q: &Query, t: &ViewTree) -> Result<(), TreeViolation> {
    // Reachability and acyclicity: every node visited exactly once from root.
    let mut seen = vec![false; t.nodes.len()];
    let mut stack = vec![t.root];
    while let Some(n) = stack.pop() {
        if n >= t.nodes.len() || seen[n] {
            return Err(TreeViolation::NotATree(n));
        }
        seen[n] = true;
        stack.extend(t.nodes[n].children.iter().copied());
    }
    if let Some(missed) = seen.iter().position(|s| !s) {
        return Err(TreeViolation::NotATree(missed));
    }

    // Leaf bijection with atoms.
    let mut leaf_atoms: Vec<usize> = t
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::AtomLeaf)
        .filter_map(|n| n.source_atom)
        .collect();
    leaf_atoms.sort_unstable();
    if leaf_atoms != (0..q.atoms.len()).collect::<Vec<_>>() {
        return Err(TreeViolation::LeafBijection);
    }

    for n in &t.nodes {
        match n.kind {
            NodeKind::AtomLeaf => {
                if !n.children.is_empty() || n.schema != q.atom_set(n.source_atom.unwrap()) {
                    return Err(TreeViolation::LeafSchema(n.id));
                }
            }
            NodeKind::JoinView => {
                if n.children.len() < 2 {
                    return Err(TreeViolation::JoinArity(n.id));
                }
                let union = n
                    .children
                    .iter()
                    .fold(VarSet::EMPTY, |acc, &c| acc.union(t.nodes[c].schema));
                if union != n.schema {
                    return Err(TreeViolation::JoinSchema(n.id));
                }
            }
            NodeKind::ProjectionView => {
                if n.children.len() != 1 {
                    return Err(TreeViolation::ProjectionArity(n.id));
                }
                let child = n.children[0];
                if !n.schema.is_strict_subset(t.nodes[child].schema) {
                    return Err(TreeViolation::ProjectionSchema(n.id));
                }
                let dropped = t.nodes[child].schema.minus(n.schema);
                let below: std::collections::BTreeSet<usize> =
                    t.leaves_under(n.id).into_iter().collect();
                for v in dropped.iter() {
                    if q.atoms_of(v).iter().any(|a| !below.contains(a)) {
                        return Err(TreeViolation::ProjectionScope(n.id));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Build the delta view tree for an update to `relation`.
pub fn delta_view_tree<'a>(
    q: &Query,
    t: &'a ViewTree,
    relation: &str,
) -> Result<DeltaViewTree<'a>, String> {
    let atom = q
        .atom_index(relation)
        .ok_or_else(|| format!("unknown relation {relation:?}"))?;
    let leaf = t.leaf_of_atom(atom).ok_or("tree missing atom leaf")?;
    let parents = t.parents();
    let mut path = vec![leaf];
    let mut cur = leaf;
    while let Some(p) = parents[cur] {
        path.push(p);
        cur = p;
    }
    Ok(DeltaViewTree { base: t, updated_atom: atom, delta_path: path })
}

/// A subtree under construction during enumeration.
#[derive(Clone)]
struct Fragment {
    nodes: Vec<ViewNode>,
    root: usize,
    atom_mask: u32,
}

impl Fragment {
    fn schema(&self) -> VarSet {
        self.nodes[self.root].schema
    }
}

/// Variables droppable above a subtree covering `atom_mask`: those in
/// `schema` whose atoms all lie within the subtree.
fn droppable(q: &Query, schema: VarSet, atom_mask: u32) -> VarSet {
    VarSet::from_iter(
        schema
            .iter()
            .filter(|&v| q.atoms_of(v).iter().all(|&a| atom_mask >> a & 1 == 1)),
    )
}

/// All subsets of `set`, ascending by mask; first element is the empty set.
fn subsets_of(set: VarSet) -> Vec<VarSet> {
    VarSet::EMPTY.supersets_within(set)
}

/// Enumerate deduplicated, valid view trees for `q` under the given limits.
pub fn enumerate_view_trees(
    q: &Query,
    limits: &EnumerationLimits,
) -> Result<Vec<ViewTree>, TreeLimitExceeded> {
    let k = q.atoms.len();
    let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };

    // Memoized construction of subtree variants per atom subset. For each
    // subset we keep the variants both before ("raw") and after
    // ("projected") the policy's projection step: children of a join use the
    // projected variants, while the overall root uses the raw ones, so the
    // root never receives a projection on top.
    let mut memo: BTreeMap<u32, FragmentVariants> = BTreeMap::new();
    build_fragments(q, full, limits.projection_policy, &mut memo);

    let mut by_key: BTreeMap<String, ViewTree> = BTreeMap::new();
    let mut exceeded = false;
    for frag in &memo[&full].raw {
        let tree = ViewTree { nodes: frag.nodes.clone(), root: frag.root };
        debug_assert_eq!(validate_view_tree(q, &tree), Ok(()));
        let key = tree.canonical_key(q);
        if by_key.len() >= limits.max_trees && !by_key.contains_key(&key) {
            exceeded = true;
            break;
        }
        by_key.insert(key, tree);
    }
    let trees: Vec<ViewTree> = by_key.into_values().collect();
    if exceeded {
        Err(TreeLimitExceeded { partial: trees })
    } else {
        Ok(trees)
    }
}

#[derive(Clone, Default)]
struct FragmentVariants {
    /// Leaf, or join of projected child variants; no projection on top.
    raw: Vec<Fragment>,
    /// `raw` with the policy's projection step applied above.
    projected: Vec<Fragment>,
}

/// Compute all subtree variants over the atoms of `mask`.
fn build_fragments(
    q: &Query,
    mask: u32,
    policy: ProjectionPolicy,
    memo: &mut BTreeMap<u32, FragmentVariants>,
) {
    if memo.contains_key(&mask) {
        return;
    }
    let mut raw: Vec<Fragment> = Vec::new();
    if mask.count_ones() == 1 {
        let atom = mask.trailing_zeros() as usize;
        raw.push(Fragment {
            nodes: vec![ViewNode {
                id: 0,
                kind: NodeKind::AtomLeaf,
                schema: q.atom_set(atom),
                children: vec![],
                source_atom: Some(atom),
            }],
            root: 0,
            atom_mask: mask,
        });
    } else {
        // All unordered two-partitions: the side containing the lowest atom.
        let low = mask & mask.wrapping_neg();
        let rest = mask & !low;
        let mut sub = 0u32;
        loop {
            let left = low | sub;
            let right = mask & !left;
            if right != 0 {
                build_fragments(q, left, policy, memo);
                build_fragments(q, right, policy, memo);
                let lefts = memo[&left].projected.clone();
                let rights = memo[&right].projected.clone();
                for lf in &lefts {
                    for rf in &rights {
                        raw.push(join_fragments(lf, rf, mask));
                    }
                }
            }
            if sub == rest {
                break;
            }
            sub = (sub.wrapping_sub(rest)) & rest;
        }
    }
    let projected = raw
        .iter()
        .flat_map(|f| project_variants(q, f.clone(), policy))
        .collect();
    memo.insert(mask, FragmentVariants { raw, projected });
}

/// Combine two fragments under a new binary join node.
fn join_fragments(left: &Fragment, right: &Fragment, mask: u32) -> Fragment {
    let mut nodes = left.nodes.clone();
    let offset = nodes.len();
    for n in &right.nodes {
        nodes.push(ViewNode {
            id: n.id + offset,
            kind: n.kind,
            schema: n.schema,
            children: n.children.iter().map(|c| c + offset).collect(),
            source_atom: n.source_atom,
        });
    }
    let schema = left.schema().union(right.schema());
    let root = nodes.len();
    nodes.push(ViewNode {
        id: root,
        kind: NodeKind::JoinView,
        schema,
        children: vec![left.root, right.root + offset],
        source_atom: None,
    });
    Fragment { nodes, root, atom_mask: mask }
}

/// Apply the projection policy above a fragment, producing one variant per
/// retained drop choice. Dropping the entire schema is never allowed.
fn project_variants(q: &Query, frag: Fragment, policy: ProjectionPolicy) -> Vec<Fragment> {
    let schema = frag.schema();
    let mut droppable = droppable(q, schema, frag.atom_mask);
    if droppable == schema && !droppable.is_empty() {
        // Keep at least one variable: full marginalization is the count
        // view, not an enumerable view tree node.
        let keep = droppable.iter().next().unwrap();
        droppable = droppable.minus(VarSet::singleton(keep));
    }
    if droppable.is_empty() {
        return vec![frag];
    }
    let drops: Vec<VarSet> = match policy {
        ProjectionPolicy::Eager => vec![droppable],
        ProjectionPolicy::EagerAndKeep => subsets_of(droppable),
    };
    drops
        .into_iter()
        .map(|d| {
            if d.is_empty() {
                return frag.clone();
            }
            let mut nodes = frag.nodes.clone();
            let root = nodes.len();
            nodes.push(ViewNode {
                id: root,
                kind: NodeKind::ProjectionView,
                schema: schema.minus(d),
                children: vec![frag.root],
                source_atom: None,
            });
            Fragment { nodes, root, atom_mask: frag.atom_mask }
        })
        .collect()
}
