//! Streaming run derivation and the compressed parse tree.
//!
//! A [`RunState`] starts from one instance of the start module and grows by
//! [`RunState::apply_production`]. Every instance and recursive node lives
//! in an append-only arena; data items keep their identity when the
//! composite they touch is expanded, only their current endpoints move.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{EdgeId, Schema};
use crate::error::RunError;
use crate::label::EdgeLabel;
use crate::model::{ModuleId, PortRef};

pub type NodeIdx = usize;
pub type ItemId = usize;

/// `A:3` for the third instance of `A`, `R:2` for the second recursive node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeId {
    Instance { module: ModuleId, ordinal: usize },
    Recursive { ordinal: usize },
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeIdx>,
    /// Label of the edge from the parent.
    pub edge: Option<EdgeLabel>,
    /// Number of nodes on the root path, root included.
    pub depth: usize,
    pub children: Vec<NodeIdx>,
    /// Instance whose expansion created this node and the 0-based rhs
    /// position it came from. `None` for the start instance and for
    /// recursive nodes.
    pub origin: Option<(NodeIdx, usize)>,
    pub expanded_by: Option<usize>,
    /// Items currently attached to each input / output port (instances only).
    pub in_items: Vec<ItemId>,
    pub out_items: Vec<ItemId>,
}

impl TreeNode {
    pub fn module(&self) -> Option<ModuleId> {
        match self.id {
            NodeId::Instance { module, .. } => Some(module),
            NodeId::Recursive { .. } => None,
        }
    }
}

/// Where an item currently starts or ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    /// 0-based input (as producer) or output (as consumer) port of the start module.
    Boundary(usize),
    Port { node: NodeIdx, port: usize },
}

#[derive(Clone, Debug)]
pub struct DataItem {
    pub producer: Endpoint,
    pub consumer: Endpoint,
    /// Node and 0-based output port where the producing port was created.
    pub src_anchor: Option<(NodeIdx, usize)>,
    /// Node and 0-based input port where the consuming port was created.
    pub dst_anchor: Option<(NodeIdx, usize)>,
    /// Instance whose expansion created the item; `None` for start items.
    pub created_under: Option<NodeIdx>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub target: NodeIdx,
    pub production: usize,
}

/// One line of a derivation log file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub target: String,
    pub production: usize,
}

#[derive(Clone, Debug)]
pub struct RunState {
    schema: Arc<Schema>,
    pub nodes: Vec<TreeNode>,
    pub items: Vec<DataItem>,
    pub root: NodeIdx,
    pub start_node: NodeIdx,
    counters: Vec<usize>,
    recursive_counter: usize,
    index: HashMap<NodeId, NodeIdx>,
    pending: BTreeSet<NodeIdx>,
    pub steps: Vec<Step>,
    max_depth: usize,
}

impl RunState {
    /// One instance of the start module plus one item per boundary port.
    pub fn start(schema: Arc<Schema>) -> RunState {
        let g = &schema.grammar;
        let mut rs = RunState {
            counters: vec![0; g.modules.len()],
            schema: schema.clone(),
            nodes: Vec::new(),
            items: Vec::new(),
            root: 0,
            start_node: 0,
            recursive_counter: 0,
            index: HashMap::new(),
            pending: BTreeSet::new(),
            steps: Vec::new(),
            max_depth: 0,
        };
        let start = g.start;
        rs.start_node = match schema.cycle_of_module(start) {
            Some((s, t)) => {
                let r = rs.push_recursive(None, None);
                rs.push_instance(start, Some(r), Some(EdgeLabel::Recursive { s, t, i: 1 }), None)
            }
            None => rs.push_instance(start, None, None, None),
        };
        let decl = g.module(start);
        let s_node = rs.start_node;
        for x in 0..decl.n_inputs {
            let id = rs.items.len();
            rs.items.push(DataItem {
                producer: Endpoint::Boundary(x),
                consumer: Endpoint::Port { node: s_node, port: x },
                src_anchor: None,
                dst_anchor: Some((s_node, x)),
                created_under: None,
            });
            rs.nodes[s_node].in_items[x] = id;
        }
        for y in 0..decl.n_outputs {
            let id = rs.items.len();
            rs.items.push(DataItem {
                producer: Endpoint::Port { node: s_node, port: y },
                consumer: Endpoint::Boundary(y),
                src_anchor: Some((s_node, y)),
                dst_anchor: None,
                created_under: None,
            });
            rs.nodes[s_node].out_items[y] = id;
        }
        rs
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn push_node(&mut self, id: NodeId, parent: Option<NodeIdx>, edge: Option<EdgeLabel>, origin: Option<(NodeIdx, usize)>) -> NodeIdx {
        let idx = self.nodes.len();
        let depth = parent.map_or(1, |p| self.nodes[p].depth + 1);
        self.max_depth = self.max_depth.max(depth);
        let (n_in, n_out) = match id {
            NodeId::Instance { module, .. } => {
                let d = self.schema.grammar.module(module);
                (d.n_inputs, d.n_outputs)
            }
            NodeId::Recursive { .. } => (0, 0),
        };
        self.nodes.push(TreeNode {
            id,
            parent,
            edge,
            depth,
            children: Vec::new(),
            origin,
            expanded_by: None,
            in_items: vec![usize::MAX; n_in],
            out_items: vec![usize::MAX; n_out],
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(idx);
        }
        self.index.insert(id, idx);
        idx
    }

    fn push_instance(&mut self, module: ModuleId, parent: Option<NodeIdx>, edge: Option<EdgeLabel>, origin: Option<(NodeIdx, usize)>) -> NodeIdx {
        self.counters[module] += 1;
        let id = NodeId::Instance {
            module,
            ordinal: self.counters[module],
        };
        let idx = self.push_node(id, parent, edge, origin);
        if self.schema.grammar.module(module).is_composite() {
            self.pending.insert(idx);
        }
        idx
    }

    fn push_recursive(&mut self, parent: Option<NodeIdx>, edge: Option<EdgeLabel>) -> NodeIdx {
        self.recursive_counter += 1;
        let id = NodeId::Recursive {
            ordinal: self.recursive_counter,
        };
        self.push_node(id, parent, edge, None)
    }

    /// Replaces `target` by the rhs of production `k` and returns the ids of
    /// the items created for the rhs's internal edges.
    pub fn apply_production(&mut self, target: NodeIdx, k: usize) -> Result<Range<ItemId>, RunError> {
        let schema = self.schema.clone();
        let node = self.nodes.get(target).ok_or_else(|| RunError::UnknownNode(format!("#{target}")))?;
        let module = match node.module() {
            Some(m) => m,
            None => return Err(RunError::NotComposite(self.node_name(target))),
        };
        if node.expanded_by.is_some() {
            return Err(RunError::AlreadyExpanded(self.node_name(target)));
        }
        if !schema.grammar.module(module).is_composite() {
            return Err(RunError::NotComposite(self.node_name(target)));
        }
        let p = schema.production(k).ok_or(RunError::UnknownProduction(k))?;
        if p.lhs != module {
            return Err(RunError::WrongLhs {
                production: k,
                lhs: schema.grammar.name(p.lhs).to_string(),
                target: self.node_name(target),
            });
        }
        self.pending.remove(&target);
        self.nodes[target].expanded_by = Some(k);
        self.steps.push(Step { target, production: k });

        // Parse-tree extension, one node per rhs occurrence.
        let mut inst = Vec::with_capacity(p.rhs.occurrences.len());
        for (pos, &m) in p.rhs.occurrences.iter().enumerate() {
            let e = EdgeId::new(k, pos + 1);
            let origin = Some((target, pos));
            let idx = if schema.cycle_of_edge(e).is_some() {
                let owner = self.nodes[target].parent.expect("cycle member sits under a recursive node");
                let (s, t) = match self.nodes[owner].children.first().and_then(|&c| self.nodes[c].edge) {
                    Some(EdgeLabel::Recursive { s, t, .. }) => (s, t),
                    _ => unreachable!("recursive node without a first child"),
                };
                let next = self.nodes[owner].children.len() + 1;
                self.push_instance(m, Some(owner), Some(EdgeLabel::Recursive { s, t, i: next }), origin)
            } else if let Some((s, t)) = schema.cycle_of_module(m) {
                let r = self.push_recursive(Some(target), Some(EdgeLabel::Composite { k, i: pos + 1 }));
                self.push_instance(m, Some(r), Some(EdgeLabel::Recursive { s, t, i: 1 }), origin)
            } else {
                self.push_instance(m, Some(target), Some(EdgeLabel::Composite { k, i: pos + 1 }), origin)
            };
            inst.push(idx);
        }

        // Boundary items move onto the rhs ports; identity is kept.
        let w = &p.rhs;
        for (x, r) in w.initial_inputs.iter().enumerate() {
            let item = self.nodes[target].in_items[x];
            let n = inst[r.occ];
            self.nodes[n].in_items[r.port] = item;
            self.items[item].consumer = Endpoint::Port { node: n, port: r.port };
        }
        for (y, r) in w.final_outputs.iter().enumerate() {
            let item = self.nodes[target].out_items[y];
            let n = inst[r.occ];
            self.nodes[n].out_items[r.port] = item;
            self.items[item].producer = Endpoint::Port { node: n, port: r.port };
        }
        let first = self.items.len();
        for e in &w.edges {
            let id = self.items.len();
            let (a, b) = (inst[e.from.occ], inst[e.to.occ]);
            self.items.push(DataItem {
                producer: Endpoint::Port { node: a, port: e.from.port },
                consumer: Endpoint::Port { node: b, port: e.to.port },
                src_anchor: Some((a, e.from.port)),
                dst_anchor: Some((b, e.to.port)),
                created_under: Some(target),
            });
            self.nodes[a].out_items[e.from.port] = id;
            self.nodes[b].in_items[e.to.port] = id;
        }
        Ok(first..self.items.len())
    }

    pub fn apply_named(&mut self, target: &str, k: usize) -> Result<Range<ItemId>, RunError> {
        let idx = self.node_by_name(target).ok_or_else(|| RunError::UnknownNode(target.to_string()))?;
        self.apply_production(idx, k)
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeIdx> {
        let (m, n) = name.rsplit_once(':')?;
        let ordinal: usize = n.parse().ok()?;
        let id = if m == "R" && self.schema.grammar.module_index("R").is_none() {
            NodeId::Recursive { ordinal }
        } else {
            NodeId::Instance {
                module: self.schema.grammar.module_index(m)?,
                ordinal,
            }
        };
        self.index.get(&id).copied()
    }

    pub fn node_name(&self, idx: NodeIdx) -> String {
        match self.nodes[idx].id {
            NodeId::Instance { module, ordinal } => format!("{}:{}", self.schema.grammar.name(module), ordinal),
            NodeId::Recursive { ordinal } => format!("R:{ordinal}"),
        }
    }

    /// Unexpanded composite instances in creation order.
    pub fn pending(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        self.pending.iter().copied()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn oldest_pending(&self) -> Option<NodeIdx> {
        self.pending.first().copied()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// Largest number of nodes on any root path so far.
    pub fn depth(&self) -> usize {
        self.max_depth
    }

    /// Edge labels from the root down to `node`.
    pub fn path(&self, node: NodeIdx) -> Vec<EdgeLabel> {
        let mut out = Vec::with_capacity(self.nodes[node].depth);
        let mut cur = node;
        while let Some(e) = self.nodes[cur].edge {
            out.push(e);
            cur = self.nodes[cur].parent.expect("labeled edge has a parent");
        }
        out.reverse();
        out
    }

    pub fn log_entries(&self) -> Vec<LogEntry> {
        self.steps
            .iter()
            .map(|s| LogEntry {
                target: self.node_name(s.target),
                production: s.production,
            })
            .collect()
    }

    /// JSON-lines derivation log.
    pub fn log_text(&self) -> String {
        write_log(&self.log_entries())
    }

    pub fn replay(schema: Arc<Schema>, entries: &[LogEntry]) -> Result<RunState, RunError> {
        let mut rs = RunState::start(schema);
        for e in entries {
            rs.apply_named(&e.target, e.production)?;
        }
        Ok(rs)
    }

    /// The instance that created `node` by its expansion: the origin for
    /// ordinary children. Recursive nodes have no creator of their own.
    pub fn creator(&self, node: NodeIdx) -> Option<NodeIdx> {
        self.nodes[node].origin.map(|(c, _)| c)
    }

    /// Projection of the run onto a view given by the expandable flags of
    /// the default grammar's modules.
    pub fn project(&self, expandable: &[bool]) -> RunProjection {
        let n = self.nodes.len();
        let mut present = vec![false; n];
        let mut open = vec![false; n];
        // Creators always precede the nodes they create in the arena.
        for idx in 0..n {
            let node = &self.nodes[idx];
            let Some(m) = node.module() else { continue };
            present[idx] = match node.origin {
                None => idx == self.start_node,
                Some((c, _)) => open[c],
            };
            open[idx] = present[idx] && node.expanded_by.is_some() && expandable[m];
        }
        let frontier: Vec<NodeIdx> = (0..n).filter(|&i| present[i] && !open[i]).collect();
        let items = self
            .items
            .iter()
            .map(|it| {
                let visible = it.created_under.is_none_or(|c| open[c]);
                visible.then(|| ProjectedItem {
                    producer: self.lift(it.producer, false, &present, &open),
                    consumer: self.lift(it.consumer, true, &present, &open),
                })
            })
            .collect();
        RunProjection {
            frontier,
            items,
            present,
            open,
        }
    }

    /// Walks an endpoint up through port maps until it reaches a node that
    /// is unexpanded in the view.
    fn lift(&self, ep: Endpoint, input: bool, present: &[bool], open: &[bool]) -> Endpoint {
        let Endpoint::Port { mut node, mut port } = ep else { return ep };
        while !present[node] || open[node] {
            let (creator, occ) = self.nodes[node].origin.expect("hidden node has a creator");
            let k = self.nodes[creator].expanded_by.expect("creator is expanded");
            let w = &self.schema.production(k).expect("known production").rhs;
            let boundary = if input { &w.initial_inputs } else { &w.final_outputs };
            port = boundary
                .iter()
                .position(|&r| r == PortRef::new(occ, port))
                .expect("port reattached through the boundary");
            node = creator;
        }
        Endpoint::Port { node, port }
    }
}

/// A data item as seen in a view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectedItem {
    pub producer: Endpoint,
    pub consumer: Endpoint,
}

/// A run restricted to a view: its unexpanded instances and visible items.
#[derive(Clone, Debug)]
pub struct RunProjection {
    /// Present instances that are not expanded in the view.
    pub frontier: Vec<NodeIdx>,
    /// `None` for items hidden by the view.
    pub items: Vec<Option<ProjectedItem>>,
    pub present: Vec<bool>,
    /// Present and expanded in the view.
    pub open: Vec<bool>,
}

impl RunProjection {
    pub fn visible_items(&self) -> Vec<ItemId> {
        (0..self.items.len()).filter(|&i| self.items[i].is_some()).collect()
    }
}

/// Replays `entries` and projects the result onto `expandable`.
pub fn project_view(schema: Arc<Schema>, entries: &[LogEntry], expandable: &[bool]) -> Result<RunProjection, RunError> {
    Ok(RunState::replay(schema, entries)?.project(expandable))
}

pub fn write_log(entries: &[LogEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{}", serde_json::to_string(e).expect("plain struct"));
    }
    s
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, RunError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| RunError::BadLog {
                line: n + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
