//! Grammars, simple workflows, dependency assignments and views.
//!
//! Modules are addressed by index into [`WorkflowGrammar::modules`];
//! occurrences and ports inside a [`SimpleWorkflow`] are 0-based. Files and
//! user-facing output use names and 1-based numbers (see [`crate::format`]).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::matrix::{DependencyMatrix, MAX_PORTS};

pub type ModuleId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Atomic,
    Composite,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleDecl {
    pub name: String,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub kind: ModuleKind,
}

impl ModuleDecl {
    pub fn new(name: impl Into<String>, n_inputs: usize, n_outputs: usize, kind: ModuleKind) -> Self {
        ModuleDecl {
            name: name.into(),
            n_inputs,
            n_outputs,
            kind,
        }
    }

    pub fn is_composite(&self) -> bool {
        self.kind == ModuleKind::Composite
    }
}

/// A port of one occurrence inside a simple workflow. Which side (input or
/// output) is implied by where the reference appears.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub occ: usize,
    pub port: usize,
}

impl PortRef {
    pub fn new(occ: usize, port: usize) -> Self {
        PortRef { occ, port }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DataEdge {
    /// Output port.
    pub from: PortRef,
    /// Input port.
    pub to: PortRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SimpleWorkflow {
    pub occurrences: Vec<ModuleId>,
    pub edges: Vec<DataEdge>,
    /// Entry `x` is the port that the lhs input `x` maps to.
    pub initial_inputs: Vec<PortRef>,
    /// Entry `y` is the port that the lhs output `y` maps to.
    pub final_outputs: Vec<PortRef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    /// 1-based, in declaration order of the original grammar.
    pub id: usize,
    pub lhs: ModuleId,
    pub rhs: SimpleWorkflow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkflowGrammar {
    pub modules: Vec<ModuleDecl>,
    pub start: ModuleId,
    /// Sorted by id. Ids may be sparse after [`restrict_grammar`].
    pub productions: Vec<Production>,
}

impl WorkflowGrammar {
    pub fn module(&self, id: ModuleId) -> &ModuleDecl {
        &self.modules[id]
    }

    pub fn module_index(&self, name: &str) -> Option<ModuleId> {
        self.modules.iter().position(|m| m.name == name)
    }

    pub fn name(&self, id: ModuleId) -> &str {
        &self.modules[id].name
    }

    pub fn production(&self, k: usize) -> Option<&Production> {
        self.productions
            .binary_search_by_key(&k, |p| p.id)
            .ok()
            .map(|idx| &self.productions[idx])
    }

    pub fn composites(&self) -> impl Iterator<Item = ModuleId> + '_ {
        (0..self.modules.len()).filter(|&m| self.modules[m].is_composite())
    }

    pub fn composite_count(&self) -> usize {
        self.composites().count()
    }

    pub fn productions_of(&self, m: ModuleId) -> impl Iterator<Item = &Production> + '_ {
        self.productions.iter().filter(move |p| p.lhs == m)
    }

    /// Reorders every rhs into the deterministic topological order so that
    /// occurrence position `i` matches the `(k, i)` edge ids used downstream.
    pub fn normalize(&mut self) -> Result<(), ModelError> {
        for p in &mut self.productions {
            let order = topological_order(&p.rhs).map_err(|_| ModelError::Cyclic(p.id))?;
            if order.iter().enumerate().any(|(a, &b)| a != b) {
                p.rhs = p.rhs.permuted(&order);
            }
        }
        self.productions.sort_by_key(|p| p.id);
        Ok(())
    }

    /// Composites that have at least one terminal-only derivation.
    pub fn productive_modules(&self) -> Vec<bool> {
        let mut productive: Vec<bool> = self.modules.iter().map(|m| !m.is_composite()).collect();
        loop {
            let mut changed = false;
            for p in &self.productions {
                if !productive[p.lhs] && p.rhs.occurrences.iter().all(|&m| productive[m]) {
                    productive[p.lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                return productive;
            }
        }
    }

    /// Modules reachable from the start module through productions.
    pub fn reachable_modules(&self) -> Vec<bool> {
        let mut seen = vec![false; self.modules.len()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(m) = queue.pop_front() {
            for p in self.productions_of(m) {
                for &o in &p.rhs.occurrences {
                    if !seen[o] {
                        seen[o] = true;
                        queue.push_back(o);
                    }
                }
            }
        }
        seen
    }
}

/// Deterministic Kahn order: among ready occurrences, the one with the
/// smallest declaration index goes first.
pub fn topological_order(w: &SimpleWorkflow) -> Result<Vec<usize>, ModelError> {
    let n = w.occurrences.len();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &w.edges {
        if e.from.occ >= n || e.to.occ >= n {
            return Err(ModelError::Invalid("edge references a missing occurrence".into()));
        }
        succ[e.from.occ].push(e.to.occ);
        indegree[e.to.occ] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &s in &succ[v] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() != n {
        return Err(ModelError::Invalid("simple workflow has a cycle".into()));
    }
    Ok(order)
}

impl SimpleWorkflow {
    /// Occurrence `order[a]` becomes occurrence `a`.
    fn permuted(&self, order: &[usize]) -> SimpleWorkflow {
        let mut new_pos = vec![0; order.len()];
        for (a, &old) in order.iter().enumerate() {
            new_pos[old] = a;
        }
        let remap = |p: PortRef| PortRef::new(new_pos[p.occ], p.port);
        SimpleWorkflow {
            occurrences: order.iter().map(|&o| self.occurrences[o]).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| DataEdge {
                    from: remap(e.from),
                    to: remap(e.to),
                })
                .collect(),
            initial_inputs: self.initial_inputs.iter().copied().map(remap).collect(),
            final_outputs: self.final_outputs.iter().copied().map(remap).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateModule { module: String },
    ZeroArity { module: String },
    TooManyPorts { module: String },
    StartOutOfRange,
    LhsNotComposite { production: usize },
    DuplicateProductionId { production: usize },
    BadReference { production: usize, detail: String },
    AdjacentEdges { production: usize, detail: String },
    CyclicWorkflow { production: usize },
    PortCoverage { production: usize, detail: String },
    ArityMismatch { production: usize },
    Unproductive { module: String },
    Unreachable { module: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateModule { module } => write!(f, "duplicate module name `{module}`"),
            Violation::ZeroArity { module } => write!(f, "module `{module}` needs at least one input and one output"),
            Violation::TooManyPorts { module } => {
                write!(f, "module `{module}` has more than {MAX_PORTS} ports on one side")
            }
            Violation::StartOutOfRange => write!(f, "start module does not exist"),
            Violation::LhsNotComposite { production } => {
                write!(f, "production {production}: lhs is not a composite module")
            }
            Violation::DuplicateProductionId { production } => {
                write!(f, "production id {production} used twice")
            }
            Violation::BadReference { production, detail } => {
                write!(f, "production {production}: {detail}")
            }
            Violation::AdjacentEdges { production, detail } => {
                write!(f, "production {production}: adjacent edges at {detail}")
            }
            Violation::CyclicWorkflow { production } => {
                write!(f, "production {production}: data edges form a cycle")
            }
            Violation::PortCoverage { production, detail } => {
                write!(f, "production {production}: {detail}")
            }
            Violation::ArityMismatch { production } => {
                write!(f, "production {production}: boundary ports do not match the lhs arity")
            }
            Violation::Unproductive { module } => write!(f, "composite `{module}` is unproductive"),
            Violation::Unreachable { module } => write!(f, "module `{module}` is unreachable from the start"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_grammar(g: &WorkflowGrammar) -> ValidationReport {
    let mut v = Vec::new();
    let mut names = HashMap::new();
    for m in &g.modules {
        if names.insert(m.name.as_str(), ()).is_some() {
            v.push(Violation::DuplicateModule { module: m.name.clone() });
        }
        if m.n_inputs == 0 || m.n_outputs == 0 {
            v.push(Violation::ZeroArity { module: m.name.clone() });
        }
        if m.n_inputs > MAX_PORTS || m.n_outputs > MAX_PORTS {
            v.push(Violation::TooManyPorts { module: m.name.clone() });
        }
    }
    if g.start >= g.modules.len() {
        v.push(Violation::StartOutOfRange);
        return ValidationReport { violations: v };
    }
    let mut ids = BTreeSet::new();
    for p in &g.productions {
        if !ids.insert(p.id) {
            v.push(Violation::DuplicateProductionId { production: p.id });
        }
        check_production(g, p, &mut v);
    }
    let productive = g.productive_modules();
    let reachable = g.reachable_modules();
    for (m, decl) in g.modules.iter().enumerate() {
        if !productive[m] {
            v.push(Violation::Unproductive { module: decl.name.clone() });
        }
        if !reachable[m] {
            v.push(Violation::Unreachable { module: decl.name.clone() });
        }
    }
    ValidationReport { violations: v }
}

fn check_production(g: &WorkflowGrammar, p: &Production, v: &mut Vec<Violation>) {
    let k = p.id;
    if p.lhs >= g.modules.len() || !g.modules[p.lhs].is_composite() {
        v.push(Violation::LhsNotComposite { production: k });
        return;
    }
    let w = &p.rhs;
    if w.occurrences.is_empty() {
        v.push(Violation::BadReference {
            production: k,
            detail: "empty right-hand side".into(),
        });
        return;
    }
    if let Some(&bad) = w.occurrences.iter().find(|&&m| m >= g.modules.len()) {
        v.push(Violation::BadReference {
            production: k,
            detail: format!("unknown module index {bad}"),
        });
        return;
    }
    let arity = |r: PortRef, input: bool| -> Option<usize> {
        let m = g.modules.get(*w.occurrences.get(r.occ)?)?;
        Some(if input { m.n_inputs } else { m.n_outputs })
    };
    let valid = |r: PortRef, input: bool| arity(r, input).is_some_and(|n| r.port < n);

    // Count how often each port is used; every port must be used exactly once.
    let mut in_use: HashMap<PortRef, usize> = HashMap::new();
    let mut out_use: HashMap<PortRef, usize> = HashMap::new();
    let mut ok = true;
    for e in &w.edges {
        if !valid(e.from, false) || !valid(e.to, true) {
            v.push(Violation::BadReference {
                production: k,
                detail: format!("edge {:?} -> {:?} references a missing port", e.from, e.to),
            });
            ok = false;
            continue;
        }
        *out_use.entry(e.from).or_default() += 1;
        *in_use.entry(e.to).or_default() += 1;
    }
    let mut adjacent = BTreeSet::new();
    for (r, &c) in &out_use {
        if c > 1 {
            adjacent.insert(format!("output {}.{}", r.occ + 1, r.port + 1));
        }
    }
    for (r, &c) in &in_use {
        if c > 1 {
            adjacent.insert(format!("input {}.{}", r.occ + 1, r.port + 1));
        }
    }
    for a in adjacent {
        v.push(Violation::AdjacentEdges { production: k, detail: a });
    }
    for &r in &w.initial_inputs {
        if valid(r, true) {
            *in_use.entry(r).or_default() += 1;
        } else {
            ok = false;
            v.push(Violation::BadReference {
                production: k,
                detail: format!("initial input {r:?} references a missing port"),
            });
        }
    }
    for &r in &w.final_outputs {
        if valid(r, false) {
            *out_use.entry(r).or_default() += 1;
        } else {
            ok = false;
            v.push(Violation::BadReference {
                production: k,
                detail: format!("final output {r:?} references a missing port"),
            });
        }
    }
    if ok {
        for (o, &m) in w.occurrences.iter().enumerate() {
            let decl = &g.modules[m];
            for x in 0..decl.n_inputs {
                let c = in_use.get(&PortRef::new(o, x)).copied().unwrap_or(0);
                if c != 1 {
                    v.push(Violation::PortCoverage {
                        production: k,
                        detail: format!("input {} of occurrence {} ({}) used {c} times", x + 1, o + 1, decl.name),
                    });
                }
            }
            for y in 0..decl.n_outputs {
                let c = out_use.get(&PortRef::new(o, y)).copied().unwrap_or(0);
                if c != 1 {
                    v.push(Violation::PortCoverage {
                        production: k,
                        detail: format!("output {} of occurrence {} ({}) used {c} times", y + 1, o + 1, decl.name),
                    });
                }
            }
        }
        if topological_order(w).is_err() {
            v.push(Violation::CyclicWorkflow { production: k });
        }
    }
    let lhs = &g.modules[p.lhs];
    if w.initial_inputs.len() != lhs.n_inputs || w.final_outputs.len() != lhs.n_outputs {
        v.push(Violation::ArityMismatch { production: k });
    }
}

/// Per-module dependency matrices, keyed by module name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencyAssignment {
    map: BTreeMap<String, DependencyMatrix>,
}

impl DependencyAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: DependencyMatrix) -> Option<DependencyMatrix> {
        self.map.insert(name.into(), m)
    }

    pub fn get(&self, name: &str) -> Option<&DependencyMatrix> {
        self.map.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<DependencyMatrix> {
        self.map.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DependencyMatrix)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Keeps only the entries whose names satisfy `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(&str) -> bool) -> DependencyAssignment {
        DependencyAssignment {
            map: self
                .map
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Dense per-module lookup for `g`; missing entries stay `None`.
    pub fn indexed(&self, g: &WorkflowGrammar) -> Vec<Option<DependencyMatrix>> {
        g.modules.iter().map(|m| self.map.get(&m.name).cloned()).collect()
    }
}

impl FromIterator<(String, DependencyMatrix)> for DependencyAssignment {
    fn from_iter<I: IntoIterator<Item = (String, DependencyMatrix)>>(iter: I) -> Self {
        DependencyAssignment {
            map: iter.into_iter().collect(),
        }
    }
}

/// A view: the expandable composites plus perceived dependencies for every
/// other module that remains derivable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub expandable: BTreeSet<String>,
    pub assignment: DependencyAssignment,
}

impl View {
    /// Every composite expandable, atomics keep their declared dependencies.
    pub fn default_view(g: &WorkflowGrammar, lambda: &DependencyAssignment) -> View {
        View {
            expandable: g.composites().map(|m| g.name(m).to_string()).collect(),
            assignment: lambda.restricted(|n| g.module_index(n).is_some_and(|m| !g.modules[m].is_composite())),
        }
    }
}

/// Keeps productions whose lhs is expandable, turns every other composite
/// atomic and drops modules that become underivable. Production ids and
/// occurrence positions are preserved, so `(k, i)` ids stay meaningful.
pub fn restrict_grammar(g: &WorkflowGrammar, expandable: &BTreeSet<String>) -> Result<WorkflowGrammar, ModelError> {
    let mut keep_prod = vec![false; g.modules.len()];
    for name in expandable {
        let m = g
            .module_index(name)
            .filter(|&m| g.modules[m].is_composite())
            .ok_or_else(|| ModelError::NotComposite(name.clone()))?;
        keep_prod[m] = true;
    }
    // Derivable set under the kept productions.
    let mut seen = vec![false; g.modules.len()];
    seen[g.start] = true;
    let mut queue = VecDeque::from([g.start]);
    while let Some(m) = queue.pop_front() {
        if !keep_prod[m] {
            continue;
        }
        for p in g.productions_of(m) {
            for &o in &p.rhs.occurrences {
                if !seen[o] {
                    seen[o] = true;
                    queue.push_back(o);
                }
            }
        }
    }
    let mut new_id = vec![usize::MAX; g.modules.len()];
    let mut modules = Vec::new();
    for (m, decl) in g.modules.iter().enumerate() {
        if seen[m] {
            new_id[m] = modules.len();
            let mut d = decl.clone();
            if !keep_prod[m] {
                d.kind = ModuleKind::Atomic;
            }
            modules.push(d);
        }
    }
    let productions = g
        .productions
        .iter()
        .filter(|p| keep_prod[p.lhs] && seen[p.lhs])
        .map(|p| Production {
            id: p.id,
            lhs: new_id[p.lhs],
            rhs: SimpleWorkflow {
                occurrences: p.rhs.occurrences.iter().map(|&o| new_id[o]).collect(),
                ..p.rhs.clone()
            },
        })
        .collect();
    Ok(WorkflowGrammar {
        modules,
        start: new_id[g.start],
        productions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(a: usize, ap: usize, b: usize, bp: usize) -> DataEdge {
        DataEdge {
            from: PortRef::new(a, ap),
            to: PortRef::new(b, bp),
        }
    }

    fn minimal() -> WorkflowGrammar {
        WorkflowGrammar {
            modules: vec![
                ModuleDecl::new("S", 1, 1, ModuleKind::Composite),
                ModuleDecl::new("a", 1, 1, ModuleKind::Atomic),
            ],
            start: 0,
            productions: vec![Production {
                id: 1,
                lhs: 0,
                rhs: SimpleWorkflow {
                    occurrences: vec![1],
                    edges: vec![],
                    initial_inputs: vec![PortRef::new(0, 0)],
                    final_outputs: vec![PortRef::new(0, 0)],
                },
            }],
        }
    }

    #[test]
    fn minimal_grammar_is_valid() {
        assert!(validate_grammar(&minimal()).is_valid());
    }

    #[test]
    fn two_edges_into_one_port_are_adjacent() {
        let mut g = minimal();
        g.modules[0].n_outputs = 2;
        g.modules.push(ModuleDecl::new("b", 1, 2, ModuleKind::Atomic));
        g.modules.push(ModuleDecl::new("c", 2, 1, ModuleKind::Atomic));
        // b.o1 -> c.i1 and b.o2 -> c.i1; c.i2 left dangling.
        g.productions[0].rhs = SimpleWorkflow {
            occurrences: vec![2, 3],
            edges: vec![edge(0, 0, 1, 0), edge(0, 1, 1, 0)],
            initial_inputs: vec![PortRef::new(0, 0)],
            final_outputs: vec![PortRef::new(1, 0), PortRef::new(1, 0)],
        };
        let report = validate_grammar(&g);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::AdjacentEdges { .. })));
    }

    #[test]
    fn diamond_order_breaks_ties_by_declaration() {
        // m1 -> {m2, m3} -> m4, declared m4, m3, m1, m2.
        let w = SimpleWorkflow {
            occurrences: vec![0, 0, 0, 0],
            edges: vec![edge(2, 0, 3, 0), edge(2, 1, 1, 0), edge(3, 0, 0, 0), edge(1, 0, 0, 1)],
            initial_inputs: vec![],
            final_outputs: vec![],
        };
        assert_eq!(topological_order(&w).unwrap(), vec![2, 1, 3, 0]);
        let single = SimpleWorkflow {
            occurrences: vec![0],
            ..Default::default()
        };
        assert_eq!(topological_order(&single).unwrap(), vec![0]);
    }

    #[test]
    fn cycle_is_rejected() {
        let w = SimpleWorkflow {
            occurrences: vec![0, 0],
            edges: vec![edge(0, 0, 1, 0), edge(1, 0, 0, 0)],
            initial_inputs: vec![],
            final_outputs: vec![],
        };
        assert!(topological_order(&w).is_err());
    }

    #[test]
    fn unproductive_and_unreachable_are_reported() {
        let mut g = minimal();
        g.modules.push(ModuleDecl::new("X", 1, 1, ModuleKind::Composite));
        let report = validate_grammar(&g);
        assert!(report.violations.contains(&Violation::Unproductive { module: "X".into() }));
        assert!(report.violations.contains(&Violation::Unreachable { module: "X".into() }));
    }

    #[test]
    fn restriction_to_nothing_keeps_only_start() {
        let g = minimal();
        let r = restrict_grammar(&g, &BTreeSet::new()).unwrap();
        assert_eq!(r.modules.len(), 1);
        assert!(r.productions.is_empty());
        assert_eq!(r.modules[0].kind, ModuleKind::Atomic);
        let full = restrict_grammar(&g, &BTreeSet::from(["S".to_string()])).unwrap();
        assert_eq!(full, g);
        assert!(restrict_grammar(&g, &BTreeSet::from(["a".to_string()])).is_err());
    }
}
