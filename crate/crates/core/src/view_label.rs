//! View labels: λ*(S) plus the I / O / Z reachability tables of a view.
//!
//! For production `k` with rhs occurrences `M_1..M_n`:
//!
//! * `I(k,i)`: inputs of the lhs × inputs of `M_i`;
//! * `O(k,i)`: outputs of the lhs × outputs of `M_i`, `[r,c]` set iff lhs
//!   output `r` depends on output `c` of `M_i`;
//! * `Z(k,i,j)`: outputs of `M_i` × inputs of `M_j`, all false for `i ≥ j`.
//!
//! [`Variant::Default`] materializes every table. [`Variant::SpaceEfficient`]
//! keeps only λ* and computes tables on demand behind a bounded memo.
//! [`Variant::QueryEfficient`] also stores, for every cycle and start
//! position, the period of the full-cycle product and its powers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::ops::Deref;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    compute_full_assignment, matrix_from_column_masks, propagate, EdgeId, FlowSource, Schema,
};
use crate::decode::matrix_period;
use crate::error::{AnalysisError, DecodeError};
use crate::format::to_canonical_json;
use crate::label::EdgeLabel;
use crate::matrix::{DependencyMatrix, RowMask};
use crate::model::{restrict_grammar, SimpleWorkflow, View, WorkflowGrammar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Default,
    SpaceEfficient,
    QueryEfficient,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Default, Variant::SpaceEfficient, Variant::QueryEfficient];

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::SpaceEfficient => "space",
            Variant::QueryEfficient => "query",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Variant::Default),
            "space" | "space_efficient" => Ok(Variant::SpaceEfficient),
            "query" | "query_efficient" => Ok(Variant::QueryEfficient),
            other => Err(format!("unknown variant `{other}` (expected default, space or query)")),
        }
    }
}

/// A matrix owned by the label, shared from the memo, or built for one query.
pub enum MatRef<'a> {
    Borrowed(&'a DependencyMatrix),
    Shared(Arc<DependencyMatrix>),
    Owned(DependencyMatrix),
}

impl Deref for MatRef<'_> {
    type Target = DependencyMatrix;

    fn deref(&self) -> &DependencyMatrix {
        match self {
            MatRef::Borrowed(m) => m,
            MatRef::Shared(m) => m,
            MatRef::Owned(m) => m,
        }
    }
}

impl MatRef<'_> {
    pub fn into_owned(self) -> DependencyMatrix {
        match self {
            MatRef::Borrowed(m) => m.clone(),
            MatRef::Shared(m) => (*m).clone(),
            MatRef::Owned(m) => m,
        }
    }
}

/// A cycle of the default grammar as seen by a view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleView {
    pub edges: Vec<EdgeId>,
    /// Input / output arity of the member at each position.
    pub in_arity: Vec<usize>,
    pub out_arity: Vec<usize>,
    /// Whether the production of each cycle edge is part of the view.
    pub in_view: Vec<bool>,
}

impl CycleView {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn complete(&self) -> bool {
        self.in_view.iter().all(|&b| b)
    }
}

/// Tables of one production.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProdTables {
    pub inputs: Vec<DependencyMatrix>,
    pub outputs: Vec<DependencyMatrix>,
    /// Row-major `n × n`; entries with `i ≥ j` are all false.
    pub z: Vec<DependencyMatrix>,
}

/// Powers of one full-cycle product from one start position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirPowers {
    pub a: usize,
    pub b: usize,
    /// `powers[e - 1] = X^e` for `e` in `1..=b`.
    pub powers: Vec<DependencyMatrix>,
    /// `prefixes[r - 1]` = product of the first `r` factors, `r` in `1..l`.
    pub prefixes: Vec<DependencyMatrix>,
}

impl DirPowers {
    fn build(factors: &[&DependencyMatrix]) -> DirPowers {
        let mut prefixes = Vec::with_capacity(factors.len());
        let mut acc = factors[0].clone();
        for f in &factors[1..] {
            prefixes.push(acc.clone());
            acc = acc.multiply(f);
        }
        let (a, b) = matrix_period(&acc);
        let mut powers = vec![acc.clone()];
        for _ in 1..b {
            let next = powers.last().unwrap().multiply(&acc);
            powers.push(next);
        }
        DirPowers { a, b, powers, prefixes }
    }

    pub fn power(&self, e: usize) -> &DependencyMatrix {
        let e = reduce_exponent(e, self.a, self.b);
        &self.powers[e - 1]
    }
}

/// Exponent below `b` with the same power, given `X^a = X^b`.
pub fn reduce_exponent(e: usize, a: usize, b: usize) -> usize {
    if e < b {
        e
    } else {
        a + (e - a) % (b - a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclePowers {
    pub inputs: Vec<DirPowers>,
    pub outputs: Vec<DirPowers>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum TableKey {
    I(usize, usize),
    O(usize, usize),
    Z(usize, usize, usize),
}

/// Memo capacity of the space-efficient variant, in tables.
const MEMO_TABLES: usize = 512;

struct LazyTables {
    grammar: WorkflowGrammar,
    star: Vec<DependencyMatrix>,
    /// Production id → index in `grammar.productions`.
    prod_index: Vec<Option<usize>>,
    memo: Mutex<LruCache<TableKey, Arc<DependencyMatrix>>>,
}

impl LazyTables {
    fn workflow(&self, k: usize) -> Option<(&SimpleWorkflow, usize, usize)> {
        let p = &self.grammar.productions[(*self.prod_index.get(k)?)?];
        let lhs = self.grammar.module(p.lhs);
        Some((&p.rhs, lhs.n_inputs, lhs.n_outputs))
    }

    fn compute(&self, key: TableKey) -> Option<DependencyMatrix> {
        let (k, i) = match key {
            TableKey::I(k, i) | TableKey::O(k, i) | TableKey::Z(k, i, _) => (k, i),
        };
        let (w, n_in, _) = self.workflow(k)?;
        if i == 0 || i > w.occurrences.len() {
            return None;
        }
        let deps: Vec<&DependencyMatrix> = w.occurrences.iter().map(|&m| &self.star[m]).collect();
        Some(match key {
            TableKey::I(..) => {
                let flow = propagate(w, &deps, FlowSource::InitialInputs);
                matrix_from_column_masks(n_in, &flow.in_masks[i - 1])
            }
            TableKey::O(..) => output_table(w, &deps, i - 1),
            TableKey::Z(_, _, j) => {
                if j == 0 || j > w.occurrences.len() {
                    return None;
                }
                let rows = deps[i - 1].cols();
                if i >= j {
                    DependencyMatrix::zeros(rows, deps[j - 1].rows())
                } else {
                    let flow = propagate(w, &deps, FlowSource::OutputsOf(i - 1));
                    matrix_from_column_masks(rows, &flow.in_masks[j - 1])
                }
            }
        })
    }

    fn get(&self, key: TableKey) -> Option<Arc<DependencyMatrix>> {
        if let Some(m) = self.memo.lock().unwrap().get(&key) {
            return Some(m.clone());
        }
        let m = Arc::new(self.compute(key)?);
        self.memo.lock().unwrap().put(key, m.clone());
        Some(m)
    }
}

fn output_table(w: &SimpleWorkflow, deps: &[&DependencyMatrix], occ: usize) -> DependencyMatrix {
    let flow = propagate(w, deps, FlowSource::OutputsOf(occ));
    let rows: Vec<RowMask> = w.final_outputs.iter().map(|r| flow.out_masks[r.occ][r.port]).collect();
    DependencyMatrix::from_row_masks(deps[occ].cols(), &rows)
}

/// All tables of one production under the dependency matrices `deps`.
pub fn production_tables(w: &SimpleWorkflow, deps: &[&DependencyMatrix], n_lhs_inputs: usize) -> ProdTables {
    let n = w.occurrences.len();
    let init = propagate(w, deps, FlowSource::InitialInputs);
    let inputs = (0..n)
        .map(|i| matrix_from_column_masks(n_lhs_inputs, &init.in_masks[i]))
        .collect();
    let mut outputs = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * n);
    for i in 0..n {
        let flow = propagate(w, deps, FlowSource::OutputsOf(i));
        let rows: Vec<RowMask> = w.final_outputs.iter().map(|r| flow.out_masks[r.occ][r.port]).collect();
        outputs.push(DependencyMatrix::from_row_masks(deps[i].cols(), &rows));
        for j in 0..n {
            z.push(if i < j {
                matrix_from_column_masks(deps[i].cols(), &flow.in_masks[j])
            } else {
                DependencyMatrix::zeros(deps[i].cols(), deps[j].rows())
            });
        }
    }
    ProdTables { inputs, outputs, z }
}

enum Tables {
    Materialized(Vec<Option<ProdTables>>),
    Lazy(LazyTables),
}

pub struct ViewLabel {
    pub variant: Variant,
    pub expandable: BTreeSet<String>,
    pub lambda_star_s: DependencyMatrix,
    pub cycles: Vec<CycleView>,
    /// Indexed by production id.
    visible: Vec<bool>,
    tables: Tables,
    /// Query-efficient only; `None` for cycles the view breaks.
    powers: Vec<Option<CyclePowers>>,
    /// λ* of the view by module name. Absent after loading a label file
    /// that does not carry it (only the space-efficient one does).
    pub lambda_star: Option<BTreeMap<String, DependencyMatrix>>,
}

impl std::fmt::Debug for ViewLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ViewLabel")
            .field("variant", &self.variant)
            .field("expandable", &self.expandable)
            .field("lambda_star_s", &self.lambda_star_s)
            .finish_non_exhaustive()
    }
}

struct ViewParts {
    restricted: WorkflowGrammar,
    star: Vec<DependencyMatrix>,
    visible: Vec<bool>,
    cycles: Vec<CycleView>,
}

fn view_parts(schema: &Schema, expandable: &BTreeSet<String>, star: Option<Vec<DependencyMatrix>>, view: Option<&View>) -> Result<ViewParts, AnalysisError> {
    let restricted = restrict_grammar(&schema.grammar, expandable)?;
    let star = match star {
        Some(s) => s,
        None => compute_full_assignment(&restricted, &view.expect("view given").assignment)?,
    };
    let max_k = schema.grammar.productions.iter().map(|p| p.id).max().unwrap_or(0);
    let mut visible = vec![false; max_k + 1];
    for p in &restricted.productions {
        visible[p.id] = true;
    }
    let g = &schema.grammar;
    let cycles = schema
        .cycles
        .cycles
        .iter()
        .map(|c| CycleView {
            edges: c.edges.clone(),
            in_arity: c.modules.iter().map(|&m| g.module(m).n_inputs).collect(),
            out_arity: c.modules.iter().map(|&m| g.module(m).n_outputs).collect(),
            in_view: c.edges.iter().map(|e| visible[e.k]).collect(),
        })
        .collect();
    Ok(ViewParts {
        restricted,
        star,
        visible,
        cycles,
    })
}

impl ViewLabel {
    /// Labels `view` over the grammar of `schema`. Fails if the view is unsafe.
    pub fn build(schema: &Schema, view: &View, variant: Variant) -> Result<ViewLabel, AnalysisError> {
        let parts = view_parts(schema, &view.expandable, None, Some(view))?;
        Ok(Self::assemble(variant, view.expandable.clone(), parts))
    }

    fn assemble(variant: Variant, expandable: BTreeSet<String>, parts: ViewParts) -> ViewLabel {
        let ViewParts {
            restricted,
            star,
            visible,
            cycles,
        } = parts;
        let lambda_star_s = star[restricted.start].clone();
        let lambda_star: BTreeMap<String, DependencyMatrix> = restricted
            .modules
            .iter()
            .zip(&star)
            .map(|(m, s)| (m.name.clone(), s.clone()))
            .collect();
        let tables = match variant {
            Variant::SpaceEfficient => {
                let mut prod_index = vec![None; visible.len()];
                for (idx, p) in restricted.productions.iter().enumerate() {
                    prod_index[p.id] = Some(idx);
                }
                Tables::Lazy(LazyTables {
                    grammar: restricted,
                    star,
                    prod_index,
                    memo: Mutex::new(LruCache::new(NonZeroUsize::new(MEMO_TABLES).unwrap())),
                })
            }
            _ => {
                let mut per_k = vec![None; visible.len()];
                for p in &restricted.productions {
                    let deps: Vec<&DependencyMatrix> = p.rhs.occurrences.iter().map(|&m| &star[m]).collect();
                    let n_in = restricted.module(p.lhs).n_inputs;
                    per_k[p.id] = Some(production_tables(&p.rhs, &deps, n_in));
                }
                Tables::Materialized(per_k)
            }
        };
        let mut label = ViewLabel {
            variant,
            expandable,
            lambda_star_s,
            cycles,
            visible,
            tables,
            powers: Vec::new(),
            lambda_star: Some(lambda_star),
        };
        if variant == Variant::QueryEfficient {
            label.powers = (0..label.cycles.len()).map(|s| label.build_powers(s)).collect();
        }
        label
    }

    fn build_powers(&self, s0: usize) -> Option<CyclePowers> {
        let c = &self.cycles[s0];
        if !c.complete() {
            return None;
        }
        let l = c.len();
        let mut inputs = Vec::with_capacity(l);
        let mut outputs = Vec::with_capacity(l);
        for start in 0..l {
            let ins: Vec<MatRef<'_>> = (0..l)
                .map(|a| {
                    let e = c.edges[(start + a) % l];
                    self.table_i(e.k, e.i).expect("cycle edge in view")
                })
                .collect();
            let outs: Vec<MatRef<'_>> = (0..l)
                .map(|a| {
                    let e = c.edges[(start + a) % l];
                    self.table_o(e.k, e.i).expect("cycle edge in view")
                })
                .collect();
            inputs.push(DirPowers::build(&ins.iter().map(|m| &**m).collect::<Vec<_>>()));
            outputs.push(DirPowers::build(&outs.iter().map(|m| &**m).collect::<Vec<_>>()));
        }
        Some(CyclePowers { inputs, outputs })
    }

    pub fn production_visible(&self, k: usize) -> bool {
        self.visible.get(k).copied().unwrap_or(false)
    }

    /// Checks that every production an edge label stands for is in the view.
    pub fn check_visible(&self, e: EdgeLabel) -> Result<(), DecodeError> {
        match e {
            EdgeLabel::Composite { k, .. } => {
                if self.production_visible(k) {
                    Ok(())
                } else if k < self.visible.len() {
                    Err(DecodeError::NotVisible(e.to_string()))
                } else {
                    Err(DecodeError::UnknownEdge(e.to_string()))
                }
            }
            EdgeLabel::Recursive { s, t, i } => {
                let c = self.cycle(s).ok_or_else(|| DecodeError::UnknownEdge(e.to_string()))?;
                if t == 0 || t > c.len() || i == 0 {
                    return Err(DecodeError::UnknownEdge(e.to_string()));
                }
                let steps = i - 1;
                let ok = if steps >= c.len() {
                    c.complete()
                } else {
                    (0..steps).all(|a| c.in_view[(t - 1 + a) % c.len()])
                };
                if ok {
                    Ok(())
                } else {
                    Err(DecodeError::NotVisible(e.to_string()))
                }
            }
        }
    }

    /// Cycle `s` (1-based).
    pub fn cycle(&self, s: usize) -> Option<&CycleView> {
        self.cycles.get(s.checked_sub(1)?)
    }

    fn unknown(k: usize, i: usize) -> DecodeError {
        DecodeError::UnknownEdge(format!("({k},{i})"))
    }

    pub fn table_i(&self, k: usize, i: usize) -> Result<MatRef<'_>, DecodeError> {
        match &self.tables {
            Tables::Materialized(t) => t
                .get(k)
                .and_then(Option::as_ref)
                .and_then(|p| p.inputs.get(i.checked_sub(1)?))
                .map(MatRef::Borrowed)
                .ok_or_else(|| Self::unknown(k, i)),
            Tables::Lazy(l) => l.get(TableKey::I(k, i)).map(MatRef::Shared).ok_or_else(|| Self::unknown(k, i)),
        }
    }

    pub fn table_o(&self, k: usize, i: usize) -> Result<MatRef<'_>, DecodeError> {
        match &self.tables {
            Tables::Materialized(t) => t
                .get(k)
                .and_then(Option::as_ref)
                .and_then(|p| p.outputs.get(i.checked_sub(1)?))
                .map(MatRef::Borrowed)
                .ok_or_else(|| Self::unknown(k, i)),
            Tables::Lazy(l) => l.get(TableKey::O(k, i)).map(MatRef::Shared).ok_or_else(|| Self::unknown(k, i)),
        }
    }

    pub fn table_z(&self, k: usize, i: usize, j: usize) -> Result<MatRef<'_>, DecodeError> {
        let err = || DecodeError::UnknownEdge(format!("({k},{i},{j})"));
        match &self.tables {
            Tables::Materialized(t) => {
                let p = t.get(k).and_then(Option::as_ref).ok_or_else(err)?;
                let n = p.inputs.len();
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(err());
                }
                Ok(MatRef::Borrowed(&p.z[(i - 1) * n + (j - 1)]))
            }
            Tables::Lazy(l) => l.get(TableKey::Z(k, i, j)).map(MatRef::Shared).ok_or_else(err),
        }
    }

    /// Product of `count` consecutive cycle factors of cycle `s` starting at
    /// 0-based position `start`, in the input (`outputs = false`) or output
    /// direction, as at most two factors. Returns an empty list for
    /// `count = 0`.
    pub fn cycle_factors(&self, s: usize, start: usize, count: usize, outputs: bool) -> Result<Vec<MatRef<'_>>, DecodeError> {
        let c = self.cycle(s).ok_or_else(|| DecodeError::UnknownEdge(format!("cycle {s}")))?;
        let l = c.len();
        let (m, r) = (count / l, count % l);
        let mut out = Vec::with_capacity(2);
        if let Some(Some(p)) = self.powers.get(s - 1) {
            let dir = if outputs { &p.outputs[start % l] } else { &p.inputs[start % l] };
            if m > 0 {
                out.push(MatRef::Borrowed(dir.power(m)));
            }
            if r > 0 {
                out.push(MatRef::Borrowed(&dir.prefixes[r - 1]));
            }
            return Ok(out);
        }
        let factor = |a: usize| -> Result<MatRef<'_>, DecodeError> {
            let e = c.edges[(start + a) % l];
            if !c.in_view[(start + a) % l] {
                return Err(DecodeError::NotVisible(format!("cycle {s} edge {e}")));
            }
            if outputs {
                self.table_o(e.k, e.i)
            } else {
                self.table_i(e.k, e.i)
            }
        };
        let product = |n: usize| -> Result<DependencyMatrix, DecodeError> {
            let mut acc = factor(0)?.into_owned();
            for a in 1..n {
                acc = acc.multiply(&*factor(a)?);
            }
            Ok(acc)
        };
        if m > 0 {
            let x = product(l)?;
            out.push(MatRef::Owned(power_on_the_fly(&x, m)));
        }
        if r > 0 {
            out.push(MatRef::Owned(product(r)?));
        }
        Ok(out)
    }

    /// Serialized size in bytes.
    pub fn size_bytes(&self) -> usize {
        self.to_json().len()
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&self.to_file())
    }

    fn to_file(&self) -> ViewLabelFile {
        let mut file = ViewLabelFile {
            variant: self.variant,
            expandable: self.expandable.iter().cloned().collect(),
            lambda_star_s: self.lambda_star_s.clone(),
            cycles: self.cycles.iter().map(|c| c.edges.clone()).collect(),
            productions: (0..self.visible.len()).filter(|&k| self.visible[k]).collect(),
            tables: None,
            cycle_powers: None,
            lambda_star: None,
        };
        match &self.tables {
            Tables::Lazy(l) => {
                file.lambda_star = Some(
                    l.grammar
                        .modules
                        .iter()
                        .zip(&l.star)
                        .map(|(m, s)| (m.name.clone(), s.clone()))
                        .collect(),
                )
            }
            Tables::Materialized(t) => {
                file.tables = Some(
                    t.iter()
                        .enumerate()
                        .filter_map(|(k, p)| p.as_ref().map(|p| (k, p)))
                        .map(|(k, p)| {
                            let n = p.inputs.len();
                            let z = (0..n)
                                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                                .filter(|&(i, j)| !p.z[i * n + j].is_zero())
                                .map(|(i, j)| (i + 1, j + 1, p.z[i * n + j].clone()))
                                .collect();
                            TableFile {
                                k,
                                inputs: p.inputs.clone(),
                                outputs: p.outputs.clone(),
                                z,
                            }
                        })
                        .collect(),
                );
            }
        }
        if self.variant == Variant::QueryEfficient {
            file.cycle_powers = Some(self.powers.clone());
        }
        file
    }

    /// Reads a label written by [`ViewLabel::to_json`] for the grammar of
    /// `schema`.
    pub fn from_json(text: &str, schema: &Schema) -> Result<ViewLabel, crate::error::ModelError> {
        use crate::error::ModelError;
        let file: ViewLabelFile = serde_json::from_str(text)?;
        let expandable: BTreeSet<String> = file.expandable.iter().cloned().collect();
        let bad = |m: &str| ModelError::Invalid(format!("view label: {m}"));
        let star_by_name = |restricted: &WorkflowGrammar, named: &BTreeMap<String, DependencyMatrix>| {
            restricted
                .modules
                .iter()
                .map(|m| named.get(&m.name).cloned().ok_or_else(|| bad("lambda_star is missing a module")))
                .collect::<Result<Vec<_>, _>>()
        };
        let restricted = restrict_grammar(&schema.grammar, &expandable)?;
        let star = match &file.lambda_star {
            Some(named) => star_by_name(&restricted, named)?,
            // Materialized labels never consult λ* beyond λ*(S).
            None => restricted
                .modules
                .iter()
                .map(|m| DependencyMatrix::zeros(m.n_inputs, m.n_outputs))
                .collect(),
        };
        let parts = view_parts(schema, &expandable, Some(star), None).map_err(|e| bad(&e.to_string()))?;
        if file.cycles != parts.cycles.iter().map(|c| c.edges.clone()).collect::<Vec<_>>() {
            return Err(bad("cycle table does not match the grammar"));
        }
        let expected_prods: Vec<usize> = (0..parts.visible.len()).filter(|&k| parts.visible[k]).collect();
        if file.productions != expected_prods {
            return Err(bad("production set does not match the grammar"));
        }
        let lambda_star = file.lambda_star.clone();
        let tables = match (file.variant, file.tables) {
            (Variant::SpaceEfficient, _) => {
                let mut prod_index = vec![None; parts.visible.len()];
                for (idx, p) in parts.restricted.productions.iter().enumerate() {
                    prod_index[p.id] = Some(idx);
                }
                Tables::Lazy(LazyTables {
                    grammar: parts.restricted,
                    star: parts.star,
                    prod_index,
                    memo: Mutex::new(LruCache::new(NonZeroUsize::new(MEMO_TABLES).unwrap())),
                })
            }
            (_, Some(entries)) => {
                let mut per_k: Vec<Option<ProdTables>> = vec![None; parts.visible.len()];
                for t in entries {
                    let p = schema.production(t.k).ok_or_else(|| bad("unknown production"))?;
                    let g = &schema.grammar;
                    let n = p.rhs.occurrences.len();
                    if t.inputs.len() != n || t.outputs.len() != n || t.k >= per_k.len() {
                        return Err(bad("table size mismatch"));
                    }
                    let mut z = Vec::with_capacity(n * n);
                    for i in 0..n {
                        for j in 0..n {
                            let rows = g.module(p.rhs.occurrences[i]).n_outputs;
                            let cols = g.module(p.rhs.occurrences[j]).n_inputs;
                            z.push(DependencyMatrix::zeros(rows, cols));
                        }
                    }
                    for (i, j, m) in t.z {
                        if i == 0 || j == 0 || i >= j || j > n || z[(i - 1) * n + j - 1].rows() != m.rows() {
                            return Err(bad("bad Z entry"));
                        }
                        z[(i - 1) * n + j - 1] = m;
                    }
                    per_k[t.k] = Some(ProdTables {
                        inputs: t.inputs,
                        outputs: t.outputs,
                        z,
                    });
                }
                Tables::Materialized(per_k)
            }
            (_, None) => return Err(bad("missing tables")),
        };
        let powers = match (file.variant, file.cycle_powers) {
            (Variant::QueryEfficient, Some(p)) if p.len() == parts.cycles.len() => p,
            (Variant::QueryEfficient, _) => return Err(bad("missing cycle powers")),
            _ => Vec::new(),
        };
        Ok(ViewLabel {
            variant: file.variant,
            expandable,
            lambda_star_s: file.lambda_star_s,
            cycles: parts.cycles,
            visible: parts.visible,
            tables,
            powers,
            lambda_star,
        })
    }
}

/// `x^e` via the period of `x`, computed from scratch.
pub fn power_on_the_fly(x: &DependencyMatrix, e: usize) -> DependencyMatrix {
    let mut seen: HashMap<DependencyMatrix, usize> = HashMap::new();
    let mut powers = vec![x.clone()];
    seen.insert(x.clone(), 1);
    loop {
        let n = powers.len();
        if n == e {
            return powers.pop().unwrap();
        }
        let next = powers[n - 1].multiply(x);
        if let Some(&a) = seen.get(&next) {
            let b = n + 1;
            return powers[reduce_exponent(e, a, b) - 1].clone();
        }
        seen.insert(next.clone(), n + 1);
        powers.push(next);
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    k: usize,
    inputs: Vec<DependencyMatrix>,
    outputs: Vec<DependencyMatrix>,
    /// Non-zero `Z(k,i,j)` entries, 1-based.
    z: Vec<(usize, usize, DependencyMatrix)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewLabelFile {
    variant: Variant,
    expandable: Vec<String>,
    lambda_star_s: DependencyMatrix,
    cycles: Vec<Vec<EdgeId>>,
    productions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tables: Option<Vec<TableFile>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cycle_powers: Option<Vec<Option<CyclePowers>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    lambda_star: Option<BTreeMap<String, DependencyMatrix>>,
}
