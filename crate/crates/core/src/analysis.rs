//! Static analysis: production graph, recursion class, cycle table and the
//! full dependency assignment.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::matrix::{DependencyMatrix, RowMask};
use crate::model::{DependencyAssignment, ModuleId, SimpleWorkflow, WorkflowGrammar};

/// Edge `(k, i)` of the production graph: occurrence `i` (1-based, in
/// topological position) of production `k`'s rhs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct EdgeId {
    pub k: usize,
    pub i: usize,
}

impl EdgeId {
    pub fn new(k: usize, i: usize) -> Self {
        EdgeId { k, i }
    }
}

impl From<(usize, usize)> for EdgeId {
    fn from((k, i): (usize, usize)) -> Self {
        EdgeId { k, i }
    }
}

impl From<EdgeId> for (usize, usize) {
    fn from(e: EdgeId) -> Self {
        (e.k, e.i)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PgEdge {
    pub id: EdgeId,
    pub from: ModuleId,
    pub to: ModuleId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductionGraph {
    pub n_vertices: usize,
    /// Sorted by id.
    pub edges: Vec<PgEdge>,
}

pub fn build_production_graph(g: &WorkflowGrammar) -> ProductionGraph {
    let mut edges = Vec::new();
    for p in &g.productions {
        for (pos, &m) in p.rhs.occurrences.iter().enumerate() {
            edges.push(PgEdge {
                id: EdgeId::new(p.id, pos + 1),
                from: p.lhs,
                to: m,
            });
        }
    }
    edges.sort_by_key(|e| e.id);
    ProductionGraph {
        n_vertices: g.modules.len(),
        edges,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionClass {
    NonRecursive,
    StrictlyLinear,
    Linear,
    General,
}

impl RecursionClass {
    /// Classes the labeling scheme accepts.
    pub fn is_labelable(self) -> bool {
        matches!(self, RecursionClass::NonRecursive | RecursionClass::StrictlyLinear)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle {
    pub edges: Vec<EdgeId>,
    /// `modules[t - 1]` is the source of `edges[t - 1]`.
    pub modules: Vec<ModuleId>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edge at 1-based position `t`, wrapping around.
    pub fn edge_at(&self, t: usize) -> EdgeId {
        self.edges[(t - 1) % self.edges.len()]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleTable {
    pub cycles: Vec<Cycle>,
}

impl CycleTable {
    /// Cycle `s` (1-based).
    pub fn cycle(&self, s: usize) -> &Cycle {
        &self.cycles[s - 1]
    }

    pub fn edge_lists(&self) -> Vec<Vec<EdgeId>> {
        self.cycles.iter().map(|c| c.edges.clone()).collect()
    }
}

/// Classifies recursion from the shape of the production graph's strongly
/// connected components. The cycle table is returned only for the strictly
/// linear class (empty for non-recursive grammars).
pub fn classify_recursion(pg: &ProductionGraph) -> (RecursionClass, Option<CycleTable>) {
    let mut graph = DiGraph::<(), ()>::with_capacity(pg.n_vertices, pg.edges.len());
    let nodes: Vec<_> = (0..pg.n_vertices).map(|_| graph.add_node(())).collect();
    for e in &pg.edges {
        graph.add_edge(nodes[e.from], nodes[e.to], ());
    }
    let mut component = vec![usize::MAX; pg.n_vertices];
    for (c, scc) in tarjan_scc(&graph).into_iter().enumerate() {
        for v in scc {
            component[v.index()] = c;
        }
    }
    let internal: Vec<&PgEdge> = pg
        .edges
        .iter()
        .filter(|e| component[e.from] == component[e.to])
        .collect();
    if internal.is_empty() {
        return (RecursionClass::NonRecursive, Some(CycleTable::default()));
    }

    // Linear: no production puts two occurrences back into its own component.
    let mut per_production: HashMap<usize, usize> = HashMap::new();
    for e in &internal {
        *per_production.entry(e.id.k).or_default() += 1;
    }
    let linear = per_production.values().all(|&c| c <= 1);

    // Strictly linear: within each component every vertex has exactly one
    // internal outgoing and one internal incoming edge.
    let mut out_deg = vec![0usize; pg.n_vertices];
    let mut in_deg = vec![0usize; pg.n_vertices];
    let mut out_edge = vec![None; pg.n_vertices];
    for e in &internal {
        out_deg[e.from] += 1;
        in_deg[e.to] += 1;
        out_edge[e.from] = Some(**e);
    }
    let on_cycle: Vec<ModuleId> = (0..pg.n_vertices).filter(|&v| out_deg[v] > 0 || in_deg[v] > 0).collect();
    let simple = on_cycle.iter().all(|&v| out_deg[v] == 1 && in_deg[v] == 1);
    if !simple {
        let class = if linear {
            RecursionClass::Linear
        } else {
            RecursionClass::General
        };
        return (class, None);
    }

    // Each component is one simple cycle; start each at its smallest edge.
    let mut starts: Vec<&PgEdge> = Vec::new();
    let mut best: BTreeMap<usize, &PgEdge> = BTreeMap::new();
    for e in &internal {
        let c = component[e.from];
        match best.get(&c) {
            Some(b) if b.id <= e.id => {}
            _ => {
                best.insert(c, e);
            }
        }
    }
    starts.extend(best.values());
    starts.sort_by_key(|e| e.id);
    let cycles = starts
        .into_iter()
        .map(|first| {
            let mut edges = vec![first.id];
            let mut modules = vec![first.from];
            let mut cur = first.to;
            while cur != first.from {
                let e = out_edge[cur].expect("vertex on a simple cycle");
                edges.push(e.id);
                modules.push(cur);
                cur = e.to;
            }
            Cycle { edges, modules }
        })
        .collect();
    (RecursionClass::StrictlyLinear, Some(CycleTable { cycles }))
}

/// Where reachability starts inside a simple workflow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowSource {
    /// Bit `x` = initial input `x`.
    InitialInputs,
    /// Bit `c` = output `c` of the given occurrence (0-based).
    OutputsOf(usize),
}

/// Per-port reachability masks of one forward sweep over a workflow.
#[derive(Clone, Debug)]
pub struct Flow {
    pub in_masks: Vec<Vec<RowMask>>,
    pub out_masks: Vec<Vec<RowMask>>,
}

/// Propagates source bitmasks along data edges and dependency matrices.
/// Occurrences must be in topological order (as after normalization).
pub fn propagate(w: &SimpleWorkflow, deps: &[&DependencyMatrix], source: FlowSource) -> Flow {
    let n = w.occurrences.len();
    let mut in_masks: Vec<Vec<RowMask>> = deps.iter().map(|m| vec![0; m.rows()]).collect();
    let mut out_masks: Vec<Vec<RowMask>> = deps.iter().map(|m| vec![0; m.cols()]).collect();
    if let FlowSource::InitialInputs = source {
        for (x, r) in w.initial_inputs.iter().enumerate() {
            in_masks[r.occ][r.port] |= 1 << x;
        }
    }
    // Incoming edge per occurrence, bucketed so the sweep stays linear.
    let mut incoming: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); n];
    for e in &w.edges {
        incoming[e.to.occ].push((e.to.port, e.from.occ, e.from.port));
    }
    let first = match source {
        FlowSource::InitialInputs => 0,
        FlowSource::OutputsOf(i) => i,
    };
    for o in first..n {
        for &(port, src_occ, src_port) in &incoming[o] {
            in_masks[o][port] |= out_masks[src_occ][src_port];
        }
        if source == FlowSource::OutputsOf(o) {
            for (c, m) in out_masks[o].iter_mut().enumerate() {
                *m = 1 << c;
            }
            continue;
        }
        let dep = deps[o];
        for x in 0..dep.rows() {
            let mask = in_masks[o][x];
            if mask == 0 {
                continue;
            }
            let mut row = dep.row_mask(x);
            while row != 0 {
                let y = row.trailing_zeros() as usize;
                out_masks[o][y] |= mask;
                row &= row - 1;
            }
        }
    }
    Flow { in_masks, out_masks }
}

/// Matrix with entry `[r, c]` = bit `r` of `masks[c]`.
pub(crate) fn matrix_from_column_masks(rows: usize, masks: &[RowMask]) -> DependencyMatrix {
    let mut m = DependencyMatrix::zeros(rows, masks.len());
    for (c, &mask) in masks.iter().enumerate() {
        let mut bits = mask;
        while bits != 0 {
            let r = bits.trailing_zeros() as usize;
            m.set(r, c, true);
            bits &= bits - 1;
        }
    }
    m
}

/// Initial-inputs × final-outputs reachability of `w` under `deps`
/// (one matrix per occurrence).
pub fn induced_matrix(w: &SimpleWorkflow, deps: &[&DependencyMatrix]) -> DependencyMatrix {
    let flow = propagate(w, deps, FlowSource::InitialInputs);
    let masks: Vec<RowMask> = w
        .final_outputs
        .iter()
        .map(|r| flow.out_masks[r.occ][r.port])
        .collect();
    matrix_from_column_masks(w.initial_inputs.len(), &masks)
}

/// Name-keyed convenience wrapper around [`induced_matrix`].
pub fn induced_matrix_named(
    g: &WorkflowGrammar,
    w: &SimpleWorkflow,
    a: &DependencyAssignment,
) -> Result<DependencyMatrix, AnalysisError> {
    let deps = w
        .occurrences
        .iter()
        .map(|&m| a.get(g.name(m)).ok_or_else(|| AnalysisError::MissingDependency(g.name(m).to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(induced_matrix(w, &deps))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnsafeWitness {
    /// Production whose induced matrix disagrees.
    pub production: usize,
    pub module: String,
    pub expected: DependencyMatrix,
    pub induced: DependencyMatrix,
    /// Production that fixed the expected matrix.
    pub defined_by: usize,
}

/// Full assignment λ* over `g`, indexed by module.
pub fn compute_full_assignment(
    g: &WorkflowGrammar,
    lambda: &DependencyAssignment,
) -> Result<Vec<DependencyMatrix>, AnalysisError> {
    compute_full_assignment_scheduled(g, lambda, |_| 0)
}

/// Worklist fixpoint where `pick(n)` selects which of the `n` currently
/// verifiable productions (in id order) is processed next.
pub fn compute_full_assignment_scheduled(
    g: &WorkflowGrammar,
    lambda: &DependencyAssignment,
    mut pick: impl FnMut(usize) -> usize,
) -> Result<Vec<DependencyMatrix>, AnalysisError> {
    let mut star: Vec<Option<DependencyMatrix>> = vec![None; g.modules.len()];
    for (m, decl) in g.modules.iter().enumerate() {
        if decl.is_composite() {
            continue;
        }
        let mat = lambda
            .get(&decl.name)
            .ok_or_else(|| AnalysisError::MissingDependency(decl.name.clone()))?;
        if mat.rows() != decl.n_inputs || mat.cols() != decl.n_outputs || !mat.covers_rows_and_columns() {
            return Err(AnalysisError::BadDependency(decl.name.clone()));
        }
        star[m] = Some(mat.clone());
    }
    let mut defined_by = vec![0usize; g.modules.len()];
    let mut pending: Vec<usize> = (0..g.productions.len()).collect();
    loop {
        let ready: Vec<usize> = pending
            .iter()
            .copied()
            .filter(|&p| g.productions[p].rhs.occurrences.iter().all(|&m| star[m].is_some()))
            .collect();
        if ready.is_empty() {
            break;
        }
        let choice = ready[pick(ready.len()).min(ready.len() - 1)];
        pending.retain(|&p| p != choice);
        let p = &g.productions[choice];
        let deps: Vec<&DependencyMatrix> = p.rhs.occurrences.iter().map(|&m| star[m].as_ref().unwrap()).collect();
        let induced = induced_matrix(&p.rhs, &deps);
        match &star[p.lhs] {
            None => {
                star[p.lhs] = Some(induced);
                defined_by[p.lhs] = p.id;
            }
            Some(expected) if *expected == induced => {}
            Some(expected) => {
                return Err(AnalysisError::Unsafe(Box::new(UnsafeWitness {
                    production: p.id,
                    module: g.name(p.lhs).to_string(),
                    expected: expected.clone(),
                    induced,
                    defined_by: defined_by[p.lhs],
                })));
            }
        }
    }
    let missing: Vec<String> = star
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(m, _)| g.name(m).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(AnalysisError::Unproductive(missing));
    }
    Ok(star.into_iter().map(Option::unwrap).collect())
}

pub fn assignment_by_name(g: &WorkflowGrammar, star: &[DependencyMatrix]) -> DependencyAssignment {
    g.modules
        .iter()
        .zip(star)
        .map(|(m, s)| (m.name.clone(), s.clone()))
        .collect()
}

/// Output of the `analyze` command.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub recursion_class: RecursionClass,
    pub cycles: Vec<Vec<EdgeId>>,
    pub safe: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<BTreeMap<String, DependencyMatrix>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<UnsafeWitness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn analyze(g: &WorkflowGrammar, lambda: &DependencyAssignment) -> AnalysisReport {
    let pg = build_production_graph(g);
    let (class, cycles) = classify_recursion(&pg);
    let cycles = cycles.map(|c| c.edge_lists()).unwrap_or_default();
    let mut report = AnalysisReport {
        recursion_class: class,
        cycles,
        safe: false,
        lambda_star: None,
        witness: None,
        error: None,
    };
    match compute_full_assignment(g, lambda) {
        Ok(star) => {
            report.safe = true;
            report.lambda_star = Some(
                g.modules
                    .iter()
                    .zip(star)
                    .map(|(m, s)| (m.name.clone(), s))
                    .collect(),
            );
        }
        Err(AnalysisError::Unsafe(w)) => report.witness = Some(*w),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Everything the run engine and view labeler need about a labelable
/// grammar under its default view.
#[derive(Clone, Debug)]
pub struct Schema {
    pub grammar: WorkflowGrammar,
    pub lambda: DependencyAssignment,
    pub lambda_star: Vec<DependencyMatrix>,
    pub pg: ProductionGraph,
    pub class: RecursionClass,
    pub cycles: CycleTable,
    module_cycle: Vec<Option<(usize, usize)>>,
    edge_cycle: HashMap<EdgeId, (usize, usize)>,
    prod_index: HashMap<usize, usize>,
}

impl Schema {
    pub fn new(grammar: WorkflowGrammar, lambda: DependencyAssignment) -> Result<Schema, AnalysisError> {
        let report = crate::model::validate_grammar(&grammar);
        if let Some(v) = report.violations.first() {
            return Err(AnalysisError::Model(crate::error::ModelError::Invalid(v.to_string())));
        }
        let pg = build_production_graph(&grammar);
        let (class, cycles) = classify_recursion(&pg);
        let cycles = match (class.is_labelable(), cycles) {
            (true, Some(c)) => c,
            _ => {
                return Err(AnalysisError::NotStrictlyLinear(match class {
                    RecursionClass::Linear => "linear",
                    _ => "general",
                }))
            }
        };
        let lambda_star = compute_full_assignment(&grammar, &lambda)?;
        let mut module_cycle = vec![None; grammar.modules.len()];
        let mut edge_cycle = HashMap::new();
        for (s0, c) in cycles.cycles.iter().enumerate() {
            for (t0, (&e, &m)) in c.edges.iter().zip(&c.modules).enumerate() {
                module_cycle[m] = Some((s0 + 1, t0 + 1));
                edge_cycle.insert(e, (s0 + 1, t0 + 1));
            }
        }
        let prod_index = grammar.productions.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
        Ok(Schema {
            grammar,
            lambda,
            lambda_star,
            pg,
            class,
            cycles,
            module_cycle,
            edge_cycle,
            prod_index,
        })
    }

    /// `(s, t)`: the cycle a module lies on and the position of its
    /// outgoing cycle edge.
    pub fn cycle_of_module(&self, m: ModuleId) -> Option<(usize, usize)> {
        self.module_cycle[m]
    }

    /// `(s, t)` if `e` is the `t`-th edge of cycle `s`.
    pub fn cycle_of_edge(&self, e: EdgeId) -> Option<(usize, usize)> {
        self.edge_cycle.get(&e).copied()
    }

    pub fn production(&self, k: usize) -> Option<&crate::model::Production> {
        self.prod_index.get(&k).map(|&i| &self.grammar.productions[i])
    }

    /// Target module of edge `(k, i)`.
    pub fn edge_target(&self, e: EdgeId) -> Option<ModuleId> {
        self.production(e.k)?.rhs.occurrences.get(e.i.checked_sub(1)?).copied()
    }

    /// Number of composites, the `|Δ|` of the depth and query bounds.
    pub fn composite_count(&self) -> usize {
        self.grammar.composite_count()
    }
}
