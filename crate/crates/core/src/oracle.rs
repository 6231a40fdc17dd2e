//! Brute-force ground truth.
//!
//! [`FlatPortGraph`] spells out a projected run as an explicit port graph
//! and answers reachability by search. [`enumerate_and_check_safety`]
//! derives terminal workflows exhaustively up to a bound and compares their
//! boundary dependencies. Neither shares traversal code with the labels.

use std::collections::{HashMap, VecDeque};
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::compute_full_assignment;
use crate::error::AnalysisError;
use crate::matrix::DependencyMatrix;
use crate::model::{restrict_grammar, DependencyAssignment, ModuleId, View, WorkflowGrammar};
use crate::run::{Endpoint, ItemId, RunProjection, RunState};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("unknown data item d{}", .0 + 1)]
    UnknownItem(ItemId),
    #[error("data item d{} is hidden by the view", .0 + 1)]
    Hidden(ItemId),
    #[error("enumeration guard exceeded: {0}")]
    GuardExceeded(&'static str),
}

/// Closure is materialized up to this many ports.
const CLOSURE_LIMIT: usize = 2000;

#[derive(Debug)]
pub struct FlatPortGraph {
    adj: Vec<Vec<u32>>,
    /// Vertex of each item's producing port; `None` if hidden.
    item_from: Vec<Option<u32>>,
    /// Vertex of each item's consuming port.
    item_to: Vec<Option<u32>>,
    closure: OnceLock<Vec<Vec<u64>>>,
}

impl FlatPortGraph {
    /// `deps(m)` gives the perceived dependency matrix of module `m` of the
    /// run's grammar for every instance left unexpanded by the projection.
    pub fn build<'a>(rs: &RunState, proj: &RunProjection, deps: impl Fn(ModuleId) -> &'a DependencyMatrix) -> FlatPortGraph {
        let mut ids: HashMap<(u8, usize, usize), u32> = HashMap::new();
        let mut adj: Vec<Vec<u32>> = Vec::new();
        let mut vertex = |key: (u8, usize, usize), adj: &mut Vec<Vec<u32>>| -> u32 {
            *ids.entry(key).or_insert_with(|| {
                adj.push(Vec::new());
                (adj.len() - 1) as u32
            })
        };
        // Keys: 0 = boundary input, 1 = boundary output, 2 = node input, 3 = node output.
        for &n in &proj.frontier {
            let m = rs.nodes[n].module().expect("frontier holds instances");
            for (x, y) in deps(m).pairs() {
                let a = vertex((2, n, x), &mut adj);
                let b = vertex((3, n, y), &mut adj);
                adj[a as usize].push(b);
            }
        }
        let mut item_from = vec![None; proj.items.len()];
        let mut item_to = vec![None; proj.items.len()];
        for (id, it) in proj.items.iter().enumerate() {
            let Some(it) = it else { continue };
            let from = match it.producer {
                Endpoint::Boundary(x) => vertex((0, 0, x), &mut adj),
                Endpoint::Port { node, port } => vertex((3, node, port), &mut adj),
            };
            let to = match it.consumer {
                Endpoint::Boundary(y) => vertex((1, 0, y), &mut adj),
                Endpoint::Port { node, port } => vertex((2, node, port), &mut adj),
            };
            adj[from as usize].push(to);
            item_from[id] = Some(from);
            item_to[id] = Some(to);
        }
        FlatPortGraph {
            adj,
            item_from,
            item_to,
            closure: OnceLock::new(),
        }
    }

    pub fn port_count(&self) -> usize {
        self.adj.len()
    }

    fn endpoints(&self, d1: ItemId, d2: ItemId) -> Result<(u32, u32), OracleError> {
        let get = |v: &Vec<Option<u32>>, d: ItemId| match v.get(d) {
            None => Err(OracleError::UnknownItem(d)),
            Some(None) => Err(OracleError::Hidden(d)),
            Some(Some(x)) => Ok(*x),
        };
        Ok((get(&self.item_from, d1)?, get(&self.item_to, d2)?))
    }

    /// All vertices reachable from `v`, itself included.
    fn search(&self, v: u32) -> Vec<u64> {
        let mut seen = vec![0u64; self.adj.len().div_ceil(64)];
        let mut queue = VecDeque::from([v]);
        seen[v as usize / 64] |= 1 << (v % 64);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adj[u as usize] {
                let (word, bit) = (w as usize / 64, w % 64);
                if seen[word] >> bit & 1 == 0 {
                    seen[word] |= 1 << bit;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Does `d2` depend on `d1`, i.e. is the consuming port of `d2`
    /// reachable from the producing port of `d1`? True for `d1 = d2`.
    pub fn reachable(&self, d1: ItemId, d2: ItemId) -> Result<bool, OracleError> {
        let (from, to) = self.endpoints(d1, d2)?;
        if self.adj.len() <= CLOSURE_LIMIT {
            let closure = self
                .closure
                .get_or_init(|| (0..self.adj.len() as u32).map(|v| self.search(v)).collect());
            let row = &closure[from as usize];
            return Ok(row[to as usize / 64] >> (to % 64) & 1 == 1);
        }
        let set = self.search(from);
        Ok(set[to as usize / 64] >> (to % 64) & 1 == 1)
    }

    /// Reachability from one source to many targets with a single search.
    pub fn reachable_many(&self, d1: ItemId, targets: &[ItemId]) -> Result<Vec<bool>, OracleError> {
        let (from, _) = self.endpoints(d1, d1)?;
        let set = self.search(from);
        targets
            .iter()
            .map(|&d2| {
                let (_, to) = self.endpoints(d1, d2)?;
                Ok(set[to as usize / 64] >> (to % 64) & 1 == 1)
            })
            .collect()
    }

    pub fn is_visible(&self, d: ItemId) -> bool {
        matches!(self.item_from.get(d), Some(Some(_)))
    }
}

/// Builds the oracle for `view` over a run of the default grammar.
pub fn oracle_for_view(rs: &RunState, view: &View) -> Result<FlatPortGraph, AnalysisError> {
    let g = &rs.schema().grammar;
    let restricted = restrict_grammar(g, &view.expandable)?;
    let star = compute_full_assignment(&restricted, &view.assignment)?;
    let by_name: HashMap<&str, &DependencyMatrix> =
        restricted.modules.iter().zip(&star).map(|(m, s)| (m.name.as_str(), s)).collect();
    let expandable: Vec<bool> = g.modules.iter().map(|m| view.expandable.contains(&m.name)).collect();
    let proj = rs.project(&expandable);
    Ok(FlatPortGraph::build(rs, &proj, |m| by_name[g.name(m)]))
}

/// A terminal derivation found by enumeration: production ids in order of
/// application (leftmost pending composite first) and its boundary matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Derivation {
    pub productions: Vec<usize>,
    pub matrix: DependencyMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SafetyVerdict {
    SafeWithinBound,
    UnsafePair { module: String, first: Derivation, second: Derivation },
}

pub const MAX_ENUM_COMPOSITES: usize = 4;
pub const MAX_ENUM_BOUND: usize = 5;
const MAX_ENUM_STATES: usize = 200_000;

/// An explicit flat workflow used only by the enumerator.
#[derive(Clone)]
struct Flat {
    occ: Vec<Option<ModuleId>>,
    edges: Vec<((usize, usize), (usize, usize))>,
    inputs: Vec<(usize, usize)>,
    outputs: Vec<(usize, usize)>,
    steps: Vec<usize>,
}

impl Flat {
    fn single(g: &WorkflowGrammar, m: ModuleId) -> Flat {
        let d = g.module(m);
        Flat {
            occ: vec![Some(m)],
            edges: Vec::new(),
            inputs: (0..d.n_inputs).map(|x| (0, x)).collect(),
            outputs: (0..d.n_outputs).map(|y| (0, y)).collect(),
            steps: Vec::new(),
        }
    }

    fn first_composite(&self, g: &WorkflowGrammar) -> Option<usize> {
        self.occ
            .iter()
            .position(|o| o.is_some_and(|m| g.module(m).is_composite()))
    }

    fn expand(&self, g: &WorkflowGrammar, at: usize, k: usize) -> Flat {
        let p = g.production(k).expect("production exists");
        let w = &p.rhs;
        let off = self.occ.len();
        let mut next = self.clone();
        next.occ[at] = None;
        next.occ.extend(w.occurrences.iter().map(|&m| Some(m)));
        let in_map = |port: (usize, usize)| -> (usize, usize) {
            if port.0 == at {
                let r = w.initial_inputs[port.1];
                (off + r.occ, r.port)
            } else {
                port
            }
        };
        let out_map = |port: (usize, usize)| -> (usize, usize) {
            if port.0 == at {
                let r = w.final_outputs[port.1];
                (off + r.occ, r.port)
            } else {
                port
            }
        };
        for e in &mut next.edges {
            *e = (out_map(e.0), in_map(e.1));
        }
        for i in &mut next.inputs {
            *i = in_map(*i);
        }
        for o in &mut next.outputs {
            *o = out_map(*o);
        }
        next.edges.extend(
            w.edges
                .iter()
                .map(|e| ((off + e.from.occ, e.from.port), (off + e.to.occ, e.to.port))),
        );
        next.steps.push(k);
        next
    }

    /// Boundary reachability by depth-first search over explicit ports.
    fn boundary_matrix(&self, g: &WorkflowGrammar, lambda: &DependencyAssignment) -> DependencyMatrix {
        let mut next_of_out: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for &(a, b) in &self.edges {
            next_of_out.insert(a, b);
        }
        let mut m = DependencyMatrix::zeros(self.inputs.len(), self.outputs.len());
        for (x, &start) in self.inputs.iter().enumerate() {
            let mut reached_outputs = std::collections::HashSet::new();
            let mut stack = vec![start];
            let mut seen = std::collections::HashSet::new();
            while let Some((o, port)) = stack.pop() {
                if !seen.insert((o, port)) {
                    continue;
                }
                let module = self.occ[o].expect("terminal workflow");
                let dep = lambda.get(g.name(module)).expect("atomic dependency");
                for y in 0..dep.cols() {
                    if dep.get(port, y) {
                        reached_outputs.insert((o, y));
                        if let Some(&nx) = next_of_out.get(&(o, y)) {
                            stack.push(nx);
                        }
                    }
                }
            }
            for (y, out) in self.outputs.iter().enumerate() {
                if reached_outputs.contains(out) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }
}

/// Enumerates every terminal derivation of every composite using at most
/// `bound` production applications and compares their boundary matrices.
pub fn enumerate_and_check_safety(
    g: &WorkflowGrammar,
    lambda: &DependencyAssignment,
    bound: usize,
) -> Result<SafetyVerdict, OracleError> {
    if g.composite_count() > MAX_ENUM_COMPOSITES {
        return Err(OracleError::GuardExceeded("more than 4 composites"));
    }
    if bound > MAX_ENUM_BOUND {
        return Err(OracleError::GuardExceeded("bound above 5"));
    }
    let mut states = 0usize;
    for m in g.composites() {
        let mut first: Option<Derivation> = None;
        let mut stack = vec![Flat::single(g, m)];
        while let Some(f) = stack.pop() {
            states += 1;
            if states > MAX_ENUM_STATES {
                return Err(OracleError::GuardExceeded("too many derivation states"));
            }
            match f.first_composite(g) {
                None => {
                    let d = Derivation {
                        matrix: f.boundary_matrix(g, lambda),
                        productions: f.steps,
                    };
                    match &first {
                        None => first = Some(d),
                        Some(a) if a.matrix != d.matrix => {
                            return Ok(SafetyVerdict::UnsafePair {
                                module: g.name(m).to_string(),
                                first: a.clone(),
                                second: d,
                            });
                        }
                        Some(_) => {}
                    }
                }
                Some(at) if f.steps.len() < bound => {
                    let target = f.occ[at].unwrap();
                    // Reverse so the lowest production id is explored first.
                    for p in g.productions_of(target).collect::<Vec<_>>().into_iter().rev() {
                        stack.push(f.expand(g, at, p.id));
                    }
                }
                Some(_) => {}
            }
        }
    }
    Ok(SafetyVerdict::SafeWithinBound)
}
