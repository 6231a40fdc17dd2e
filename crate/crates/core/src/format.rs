//! JSON file formats for grammars and views.
//!
//! Grammar file:
//!
//! ```json
//! {
//!   "modules": [{"name": "S", "inputs": 1, "outputs": 1, "kind": "composite"}, ...],
//!   "start": "S",
//!   "productions": [{
//!     "lhs": "S",
//!     "occurrences": ["a", "b"],
//!     "edges": [{"from": ["a", 1, 1], "to": ["b", 1, 1]}],
//!     "inputs": [["a", 1, 1]],
//!     "outputs": [["b", 1, 1]]
//!   }],
//!   "dependencies": {"a": [[1, 1]], "b": [[1, 1]]}
//! }
//! ```
//!
//! A port reference `[name, ordinal, port]` names the `ordinal`-th occurrence
//! of `name` in the production (1-based, file order) and a 1-based port.
//! `inputs[x]` is the rhs port that lhs input `x` maps to; `outputs` likewise.
//! `dependencies` lists `[input, output]` pairs (1-based) per atomic module.
//!
//! View file: `{"expandable": [...], "dependencies": {...}}` where the
//! dependencies cover every unexpandable derivable module.
//!
//! Writers emit pretty-printed JSON with a trailing newline; files written
//! this way round-trip byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::matrix::DependencyMatrix;
use crate::model::{
    DataEdge, DependencyAssignment, ModuleDecl, ModuleKind, PortRef, Production, SimpleWorkflow, View,
    WorkflowGrammar,
};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ModuleEntry {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub kind: ModuleKind,
}

/// `(module name, 1-based occurrence ordinal, 1-based port)`.
pub type PortEntry = (String, usize, usize);

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: PortEntry,
    pub to: PortEntry,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ProductionEntry {
    pub lhs: String,
    pub occurrences: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeEntry>,
    pub inputs: Vec<PortEntry>,
    pub outputs: Vec<PortEntry>,
}

pub type DependencyEntries = BTreeMap<String, Vec<(usize, usize)>>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GrammarFile {
    pub modules: Vec<ModuleEntry>,
    pub start: String,
    pub productions: Vec<ProductionEntry>,
    #[serde(default)]
    pub dependencies: DependencyEntries,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ViewFile {
    pub expandable: Vec<String>,
    #[serde(default)]
    pub dependencies: DependencyEntries,
}

/// A grammar together with the dependency assignment for its atomics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrammarSpec {
    pub grammar: WorkflowGrammar,
    pub lambda: DependencyAssignment,
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

impl GrammarFile {
    /// Resolves names into a grammar. Occurrences are reordered into the
    /// deterministic topological order. Structural rules beyond name
    /// resolution are left to [`crate::model::validate_grammar`].
    pub fn into_spec(self) -> Result<GrammarSpec, ModelError> {
        let modules: Vec<ModuleDecl> = self
            .modules
            .iter()
            .map(|m| ModuleDecl::new(m.name.clone(), m.inputs, m.outputs, m.kind))
            .collect();
        let mut index = HashMap::new();
        for (i, m) in modules.iter().enumerate() {
            index.entry(m.name.clone()).or_insert(i);
        }
        let lookup = |name: &str| index.get(name).copied().ok_or_else(|| ModelError::UnknownModule(name.into()));
        let start = lookup(&self.start)?;
        let mut productions = Vec::with_capacity(self.productions.len());
        for (pos, p) in self.productions.iter().enumerate() {
            let k = pos + 1;
            let lhs = lookup(&p.lhs)?;
            let occurrences = p.occurrences.iter().map(|n| lookup(n)).collect::<Result<Vec<_>, _>>()?;
            let resolve = |(name, ordinal, port): &PortEntry| -> Result<PortRef, ModelError> {
                let m = lookup(name)?;
                let occ = occurrences
                    .iter()
                    .enumerate()
                    .filter(|(_, &o)| o == m)
                    .nth(ordinal.wrapping_sub(1))
                    .map(|(i, _)| i)
                    .ok_or_else(|| ModelError::UnknownOccurrence {
                        production: k,
                        module: name.clone(),
                        ordinal: *ordinal,
                    })?;
                if *port == 0 {
                    return Err(ModelError::PortOutOfRange {
                        module: name.clone(),
                        port: 0,
                    });
                }
                Ok(PortRef::new(occ, port - 1))
            };
            let edges = p
                .edges
                .iter()
                .map(|e| {
                    Ok(DataEdge {
                        from: resolve(&e.from)?,
                        to: resolve(&e.to)?,
                    })
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            let initial_inputs = p.inputs.iter().map(resolve).collect::<Result<_, _>>()?;
            let final_outputs = p.outputs.iter().map(resolve).collect::<Result<_, _>>()?;
            productions.push(Production {
                id: k,
                lhs,
                rhs: SimpleWorkflow {
                    occurrences,
                    edges,
                    initial_inputs,
                    final_outputs,
                },
            });
        }
        let mut grammar = WorkflowGrammar {
            modules,
            start,
            productions,
        };
        grammar.normalize()?;
        let lambda = dependencies_from_entries(&grammar, &self.dependencies)?;
        Ok(GrammarSpec { grammar, lambda })
    }

    pub fn from_spec(spec: &GrammarSpec) -> GrammarFile {
        let g = &spec.grammar;
        let productions = g
            .productions
            .iter()
            .map(|p| {
                let w = &p.rhs;
                let names: Vec<String> = w.occurrences.iter().map(|&m| g.name(m).to_string()).collect();
                let entry = |r: PortRef| -> PortEntry {
                    let m = w.occurrences[r.occ];
                    let ordinal = w.occurrences[..=r.occ].iter().filter(|&&o| o == m).count();
                    (g.name(m).to_string(), ordinal, r.port + 1)
                };
                ProductionEntry {
                    lhs: g.name(p.lhs).to_string(),
                    occurrences: names,
                    edges: w
                        .edges
                        .iter()
                        .map(|e| EdgeEntry {
                            from: entry(e.from),
                            to: entry(e.to),
                        })
                        .collect(),
                    inputs: w.initial_inputs.iter().map(|&r| entry(r)).collect(),
                    outputs: w.final_outputs.iter().map(|&r| entry(r)).collect(),
                }
            })
            .collect();
        GrammarFile {
            modules: g
                .modules
                .iter()
                .map(|m| ModuleEntry {
                    name: m.name.clone(),
                    inputs: m.n_inputs,
                    outputs: m.n_outputs,
                    kind: m.kind,
                })
                .collect(),
            start: g.name(g.start).to_string(),
            productions,
            dependencies: dependencies_to_entries(&spec.lambda),
        }
    }
}

pub fn dependencies_to_entries(a: &DependencyAssignment) -> DependencyEntries {
    a.iter()
        .map(|(n, m)| (n.clone(), m.pairs().into_iter().map(|(r, c)| (r + 1, c + 1)).collect()))
        .collect()
}

/// Builds matrices using the port counts declared in `g`.
pub fn dependencies_from_entries(
    g: &WorkflowGrammar,
    entries: &DependencyEntries,
) -> Result<DependencyAssignment, ModelError> {
    let mut out = DependencyAssignment::new();
    for (name, pairs) in entries {
        let m = g.module_index(name).ok_or_else(|| ModelError::UnknownModule(name.clone()))?;
        let decl = g.module(m);
        let mut mat = DependencyMatrix::zeros(decl.n_inputs, decl.n_outputs);
        for &(r, c) in pairs {
            if r == 0 || c == 0 || r > decl.n_inputs || c > decl.n_outputs {
                return Err(ModelError::DependencyShape(name.clone()));
            }
            mat.set(r - 1, c - 1, true);
        }
        out.insert(name.clone(), mat);
    }
    Ok(out)
}

pub fn parse_grammar(text: &str) -> Result<GrammarSpec, ModelError> {
    let file: GrammarFile = serde_json::from_str(text)?;
    file.into_spec()
}

pub fn write_grammar(spec: &GrammarSpec) -> String {
    to_canonical_json(&GrammarFile::from_spec(spec))
}

pub fn load_grammar(path: &std::path::Path) -> Result<GrammarSpec, ModelError> {
    parse_grammar(&std::fs::read_to_string(path)?)
}

pub fn parse_view(text: &str, g: &WorkflowGrammar) -> Result<View, ModelError> {
    let file: ViewFile = serde_json::from_str(text)?;
    Ok(View {
        expandable: file.expandable.into_iter().collect::<BTreeSet<_>>(),
        assignment: dependencies_from_entries(g, &file.dependencies)?,
    })
}

pub fn write_view(v: &View) -> String {
    to_canonical_json(&ViewFile {
        expandable: v.expandable.iter().cloned().collect(),
        dependencies: dependencies_to_entries(&v.assignment),
    })
}

pub fn load_view(path: &std::path::Path, g: &WorkflowGrammar) -> Result<View, ModelError> {
    parse_view(&std::fs::read_to_string(path)?, g)
}
