//! Join queries: atoms, variables, join variables, and degree configurations.
//!
//! A join query is written as `Q(A,B,C) = R(A,B), S(B,C), T(C,A)`. The head
//! must list exactly the union of the body variables (full join queries
//! only). Every relation symbol may appear at most once; self-joins must be
//! pre-renamed by the caller, with updates duplicated accordingly.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Identifier of a variable within its [`Query`]: an index into the
/// query-wide lexicographically sorted variable table.
pub type VarId = usize;

/// A set of query variables, stored as a bitmask over [`VarId`].
///
/// The bit order coincides with the fixed total (lexicographic) order of the
/// query's variables, which makes iteration over a `VarSet` deterministic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VarSet(pub u64);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn singleton(v: VarId) -> VarSet {
        VarSet(1 << v)
    }

    pub fn from_iter<I: IntoIterator<Item = VarId>>(iter: I) -> VarSet {
        let mut s = VarSet(0);
        for v in iter {
            s.0 |= 1 << v;
        }
        s
    }

    pub fn contains(self, v: VarId) -> bool {
        self.0 >> v & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }

    pub fn intersect(self, other: VarSet) -> VarSet {
        VarSet(self.0 & other.0)
    }

    pub fn minus(self, other: VarSet) -> VarSet {
        VarSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_strict_subset(self, other: VarSet) -> bool {
        self.is_subset(other) && self.0 != other.0
    }

    /// Iterate members in ascending [`VarId`] order.
    pub fn iter(self) -> impl Iterator<Item = VarId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(v)
            }
        })
    }

    /// All subsets `s` with `self ⊆ s ⊆ universe`, ascending by mask value.
    pub fn supersets_within(self, universe: VarSet) -> Vec<VarSet> {
        debug_assert!(self.is_subset(universe));
        let free = universe.minus(self).0;
        let mut out = Vec::new();
        // Enumerate submasks of `free` in ascending order.
        let mut sub = 0u64;
        loop {
            out.push(VarSet(self.0 | sub));
            if sub == free {
                break;
            }
            sub = (sub.wrapping_sub(free)) & free;
        }
        out.sort_by_key(|s| s.0);
        out
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VarSet{:?}", self.iter().collect::<Vec<_>>())
    }
}

/// Heavy/light label of a join variable in a degree configuration.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Label {
    Light,
    Heavy,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Light => "L",
            Label::Heavy => "H",
        })
    }
}

/// A heavy/light assignment to the join variables of a query, aligned with
/// [`Query::join_variables`].
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct DegreeConfiguration {
    pub labels: Vec<Label>,
}

impl DegreeConfiguration {
    /// The label of a join variable given its position in `join_variables`.
    pub fn label_at(&self, pos: usize) -> Label {
        self.labels[pos]
    }

    /// Compact form such as `LLHH`.
    pub fn code(&self) -> String {
        self.labels.iter().map(|l| l.to_string()).collect()
    }

    pub fn parse_code(code: &str) -> Option<DegreeConfiguration> {
        let mut labels = Vec::new();
        for c in code.chars() {
            labels.push(match c {
                'L' => Label::Light,
                'H' => Label::Heavy,
                _ => return None,
            });
        }
        Some(DegreeConfiguration { labels })
    }
}

/// One body atom `R(A,B)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Atom {
    pub relation: String,
    /// Schema in source order; variables are distinct within the atom.
    pub schema: Vec<String>,
}

/// A full join query.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Query {
    pub name: String,
    /// Head variables in source order (equals the union of body variables).
    pub free_vars: Vec<String>,
    pub atoms: Vec<Atom>,
    /// All variables, sorted lexicographically; index = [`VarId`].
    vars: Vec<String>,
}

/// Errors raised while parsing or validating a query.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("head variables {head:?} do not equal the union of body variables {body:?}")]
    HeadMismatch { head: Vec<String>, body: Vec<String> },
    #[error("duplicate relation symbol {0:?} (rename self-join copies first)")]
    DuplicateRelation(String),
    #[error("duplicate variable {var:?} in atom {relation:?}")]
    DuplicateVariableInAtom { relation: String, var: String },
    #[error("duplicate head variable {0:?}")]
    DuplicateHeadVariable(String),
    #[error("query has more than 64 variables")]
    TooManyVariables,
}

impl Query {
    /// Build a query from parts, validating all structural invariants.
    pub fn new(name: String, free_vars: Vec<String>, atoms: Vec<Atom>) -> Result<Query, QueryError> {
        let mut body: BTreeSet<String> = BTreeSet::new();
        let mut rels: BTreeSet<String> = BTreeSet::new();
        for atom in &atoms {
            if !rels.insert(atom.relation.clone()) {
                return Err(QueryError::DuplicateRelation(atom.relation.clone()));
            }
            let mut seen = BTreeSet::new();
            for v in &atom.schema {
                if !seen.insert(v.clone()) {
                    return Err(QueryError::DuplicateVariableInAtom {
                        relation: atom.relation.clone(),
                        var: v.clone(),
                    });
                }
                body.insert(v.clone());
            }
        }
        let mut head_seen = BTreeSet::new();
        for v in &free_vars {
            if !head_seen.insert(v.clone()) {
                return Err(QueryError::DuplicateHeadVariable(v.clone()));
            }
        }
        if head_seen != body {
            return Err(QueryError::HeadMismatch {
                head: free_vars,
                body: body.into_iter().collect(),
            });
        }
        let vars: Vec<String> = body.into_iter().collect();
        if vars.len() > 64 {
            return Err(QueryError::TooManyVariables);
        }
        Ok(Query { name, free_vars, atoms, vars })
    }

    /// All variables in the fixed total (lexicographic) order.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.binary_search_by(|v| v.as_str().cmp(name)).ok()
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.vars[id]
    }

    pub fn all_vars_set(&self) -> VarSet {
        VarSet::from_iter(0..self.vars.len())
    }

    /// Schema of atom `i` as a set.
    pub fn atom_set(&self, i: usize) -> VarSet {
        VarSet::from_iter(
            self.atoms[i]
                .schema
                .iter()
                .map(|v| self.var_id(v).expect("atom variable interned")),
        )
    }

    /// Atom indices whose schema contains `v` (the set `at(v)`).
    pub fn atoms_of(&self, v: VarId) -> Vec<usize> {
        (0..self.atoms.len()).filter(|&i| self.atom_set(i).contains(v)).collect()
    }

    pub fn atom_index(&self, relation: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.relation == relation)
    }

    /// The join variables: variables occurring in at least two atoms, in the
    /// fixed total order.
    pub fn join_variables(&self) -> Vec<VarId> {
        (0..self.vars.len()).filter(|&v| self.atoms_of(v).len() >= 2).collect()
    }

    pub fn join_var_set(&self) -> VarSet {
        VarSet::from_iter(self.join_variables())
    }

    /// All `2^n` degree configurations over the join variables, ordered
    /// lexicographically with `Light < Heavy`.
    pub fn degree_configurations(&self) -> Vec<DegreeConfiguration> {
        let n = self.join_variables().len();
        let mut out = Vec::with_capacity(1 << n);
        for i in 0..1u64 << n {
            let labels = (0..n)
                .map(|j| {
                    if i >> (n - 1 - j) & 1 == 1 {
                        Label::Heavy
                    } else {
                        Label::Light
                    }
                })
                .collect();
            out.push(DegreeConfiguration { labels });
        }
        out
    }

    /// The label a configuration assigns to variable `v`, if `v` is a join
    /// variable.
    pub fn label_of(&self, config: &DegreeConfiguration, v: VarId) -> Option<Label> {
        let jv = self.join_variables();
        jv.iter().position(|&j| j == v).map(|pos| config.label_at(pos))
    }

    /// A query is hierarchical when for any two variables the sets of atoms
    /// containing them are nested or disjoint.
    pub fn is_hierarchical(&self) -> bool {
        let n = self.vars.len();
        let at: Vec<BTreeSet<usize>> =
            (0..n).map(|v| self.atoms_of(v).into_iter().collect()).collect();
        for x in 0..n {
            for y in x + 1..n {
                let nested = at[x].is_subset(&at[y]) || at[y].is_subset(&at[x]);
                let disjoint = at[x].intersection(&at[y]).next().is_none();
                if !nested && !disjoint {
                    return false;
                }
            }
        }
        true
    }

    /// Canonical text form; `parse_query` of this string yields back the
    /// same query.
    pub fn pretty_print(&self) -> String {
        let head = self.free_vars.join(",");
        let body = self
            .atoms
            .iter()
            .map(|a| format!("{}({})", a.relation, a.schema.join(",")))
            .collect::<Vec<_>>()
            .join(", ");
        format!("{}({}) = {}", self.name, head, body)
    }

    /// Map a set back to sorted variable names (for display/serialization).
    pub fn set_names(&self, s: VarSet) -> Vec<String> {
        s.iter().map(|v| self.vars[v].clone()).collect()
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len()
            && self.text.as_bytes()[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), QueryError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {:?}", c as char))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            self.err("expected identifier")
        } else {
            Ok(self.text[start..self.pos].to_string())
        }
    }

    fn var_list(&mut self) -> Result<Vec<String>, QueryError> {
        self.expect(b'(')?;
        let mut vars = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(vars);
        }
        loop {
            vars.push(self.ident()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(vars);
                }
                _ => return self.err("expected ',' or ')'"),
            }
        }
    }
}

/// Parse the textual query format `Name(V1,...,Vn) = R1(A,B), R2(B,C), ...`.
pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let mut p = Parser { text, pos: 0 };
    let name = p.ident()?;
    let free_vars = p.var_list()?;
    p.expect(b'=')?;
    let mut atoms = Vec::new();
    loop {
        let relation = p.ident()?;
        let schema = p.var_list()?;
        atoms.push(Atom { relation, schema });
        p.skip_ws();
        match p.peek() {
            Some(b',') => p.pos += 1,
            None => break,
            _ => return p.err("expected ',' or end of input"),
        }
    }
    Query::new(name, free_vars, atoms)
}

/// Fixture queries used across tests and benchmarks.
pub mod fixtures {
    /// Row of the standard fixture table: name, text, maintenance width,
    /// optimal threshold exponent (when pinned), dynamic width.
    pub struct Fixture {
        pub name: &'static str,
        pub text: &'static str,
        pub mw: (i64, i64),
        pub eps_star: Option<(i64, i64)>,
        pub dw: (i64, i64),
    }

    pub const FIXTURES: &[Fixture] = &[
        Fixture {
            name: "hierarchical",
            text: "Q(A,B,C) = R(A,B), S(A,C)",
            mw: (0, 1),
            eps_star: Some((0, 1)),
            dw: (0, 1),
        },
        Fixture {
            name: "3-path",
            text: "Q(X1,X2,X3,X4) = R1(X1,X2), R2(X2,X3), R3(X3,X4)",
            mw: (1, 2),
            eps_star: Some((1, 2)),
            dw: (1, 1),
        },
        Fixture {
            name: "4-path",
            text: "Q(X1,X2,X3,X4,X5) = R1(X1,X2), R2(X2,X3), R3(X3,X4), R4(X4,X5)",
            mw: (1, 2),
            eps_star: Some((1, 2)),
            dw: (1, 1),
        },
        Fixture {
            name: "triangle",
            text: "Q(A,B,C) = R(A,B), S(B,C), T(C,A)",
            mw: (1, 2),
            eps_star: None,
            dw: (1, 1),
        },
        Fixture {
            name: "lw3",
            text: "Q(X1,X2,X3) = R1(X2,X3), R2(X1,X3), R3(X1,X2)",
            mw: (1, 2),
            eps_star: Some((1, 2)),
            dw: (1, 1),
        },
        Fixture {
            name: "lw4",
            text: "Q(X1,X2,X3,X4) = R1(X2,X3,X4), R2(X1,X3,X4), R3(X1,X2,X4), R4(X1,X2,X3)",
            mw: (1, 2),
            eps_star: Some((1, 2)),
            dw: (1, 1),
        },
        Fixture {
            name: "lw5",
            text: "Q(X1,X2,X3,X4,X5) = R1(X2,X3,X4,X5), R2(X1,X3,X4,X5), R3(X1,X2,X4,X5), R4(X1,X2,X3,X5), R5(X1,X2,X3,X4)",
            mw: (1, 2),
            eps_star: Some((1, 2)),
            dw: (1, 1),
        },
        Fixture {
            name: "4-cycle",
            text: "Q(A,B,C,D) = R(A,B), S(B,C), T(C,D), U(D,A)",
            mw: (2, 3),
            eps_star: Some((1, 3)),
            dw: (1, 1),
        },
        Fixture {
            name: "diamond",
            text: "Q(X1,X2,X3,X4) = R1(X1,X2), R2(X2,X3), R3(X3,X4), R4(X4,X1), R5(X1,X3)",
            mw: (2, 3),
            eps_star: Some((1, 3)),
            dw: (1, 1),
        },
        Fixture {
            name: "paw",
            text: "Q(X1,X2,X3,X4) = R1(X1,X2), R2(X2,X3), R3(X3,X1), R4(X3,X4)",
            mw: (2, 3),
            eps_star: None,
            dw: (1, 1),
        },
        Fixture {
            name: "big-paw",
            text: "Q(X1,X2,X3,X4,X5) = R1(X1,X2), R2(X2,X3), R3(X3,X1), R4(X1,X4), R5(X2,X5)",
            mw: (2, 3),
            eps_star: Some((1, 3)),
            dw: (1, 1),
        },
        Fixture {
            name: "bow-tie",
            text: "Q(X1,X2,X3,X4,X5) = R1(X1,X2), R2(X2,X3), R3(X3,X1), R4(X3,X4), R5(X4,X5), R6(X5,X3)",
            mw: (1, 1),
            eps_star: Some((0, 1)),
            dw: (1, 1),
        },
    ];
}
