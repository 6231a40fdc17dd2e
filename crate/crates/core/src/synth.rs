//! Seeded generators for strictly linear-recursive grammars, runs and safe
//! views.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, one stream
//! per generator call, so outputs are identical across platforms.
//!
//! Grammar shape for nesting depth `d` and recursion length `r`:
//!
//! * level 0 holds the start module `S` with one production;
//! * each level `1..d` holds a cycle group `C{L}_1..C{L}_r` and one plain
//!   composite `P{L}`;
//! * member `C{L}_j` has a recursive production whose rhs contains
//!   `C{L}_{j+1}` (wrapping) and a terminating production with the same
//!   skeleton where that slot holds an atomic stub;
//! * every rhs at level `L < d - 1` references composites of level `L + 1`.
//!
//! Atomics are fresh per occurrence. The stub of each terminating production
//! receives the greatest fixpoint of the cycle's composed induced matrices,
//! which makes the two productions of every member agree: the grammar is
//! safe by construction.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{compute_full_assignment, induced_matrix, Schema};
use crate::format::GrammarSpec;
use crate::matrix::DependencyMatrix;
use crate::model::{
    restrict_grammar, DataEdge, DependencyAssignment, ModuleDecl, ModuleId, ModuleKind, PortRef, Production,
    SimpleWorkflow, View, WorkflowGrammar,
};
use crate::run::RunState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    /// Occurrences per rhs.
    pub workflow_size: usize,
    /// Maximum ports on either side of a module.
    pub module_degree: usize,
    /// Number of composite levels, the start module included.
    pub nesting_depth: usize,
    /// Composites per cycle.
    pub recursion_length: usize,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            workflow_size: 40,
            module_degree: 4,
            nesting_depth: 4,
            recursion_length: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
}

/// Probability that a pending cycle member is expanded recursively.
const RECURSE_PROBABILITY: f64 = 0.85;

/// Random `rows × cols` matrix with a true entry in every row and column.
fn random_dependencies(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DependencyMatrix {
    let mut m = DependencyMatrix::zeros(rows, cols);
    for r in 0..rows {
        m.set(r, rng.gen_range(0..cols), true);
    }
    for c in 0..cols {
        m.set(rng.gen_range(0..rows), c, true);
    }
    for r in 0..rows {
        for c in 0..cols {
            if rng.gen_bool(0.15) {
                m.set(r, c, true);
            }
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Token {
    Lhs(usize),
    Out(usize, usize),
}

/// A composite reference placed at a fixed rhs position.
#[derive(Clone, Copy, Debug)]
struct Slot {
    pos: usize,
    module: ModuleId,
}

struct Builder {
    rng: ChaCha8Rng,
    modules: Vec<ModuleDecl>,
    lambda: Vec<Option<DependencyMatrix>>,
    degree: usize,
}

impl Builder {
    fn atomic(&mut self, n_in: usize, n_out: usize) -> ModuleId {
        let id = self.modules.len();
        self.modules
            .push(ModuleDecl::new(format!("a{id}"), n_in, n_out, ModuleKind::Atomic));
        let m = random_dependencies(&mut self.rng, n_in, n_out);
        self.lambda.push(Some(m));
        id
    }

    /// Picks `count` non-adjacent positions in `1..=n-3`.
    fn slot_positions(&mut self, n: usize, count: usize) -> Option<Vec<usize>> {
        if count == 0 {
            return Some(Vec::new());
        }
        if n < 2 * count + 2 {
            return None;
        }
        // Choose gaps: positions p_1 < ... < p_c with p_1 ≥ 1, p_{a+1} ≥ p_a + 2, p_c ≤ n - 3.
        let free = n - 3 - (2 * count - 1) + 1;
        let mut offsets: Vec<usize> = (0..count).map(|_| self.rng.gen_range(0..free)).collect();
        offsets.sort_unstable();
        Some(offsets.iter().enumerate().map(|(a, &o)| 1 + o + 2 * a).collect())
    }

    /// Builds a topologically ordered rhs of `n` occurrences with the given
    /// composite slots, wiring fresh atomics around them so that at most
    /// `degree` ports are live between any two occurrences.
    fn wire(&mut self, n: usize, a_in: usize, a_out: usize, slots: &[Slot]) -> SimpleWorkflow {
        let d = self.degree;
        let mut live: Vec<Token> = (0..a_in).map(Token::Lhs).collect();
        let mut occurrences = Vec::with_capacity(n);
        let mut edges = Vec::new();
        let mut initial_inputs = vec![PortRef::new(0, 0); a_in];
        let composite_at = |o: usize| slots.iter().find(|s| s.pos == o).map(|s| s.module);
        for o in 0..n {
            let l = live.len();
            let (module, take) = match composite_at(o) {
                Some(m) => {
                    let cin = self.modules[m].n_inputs;
                    debug_assert!(cin <= l);
                    (m, cin)
                }
                None => {
                    let (n_in, n_out) = if o == n - 1 {
                        let lhs_live = live.iter().filter(|t| matches!(t, Token::Lhs(_))).count();
                        let lo = 1.max(l + 1 - a_out.min(l)).max(lhs_live);
                        let k = self.rng.gen_range(lo..=l);
                        (k, a_out + k - l)
                    } else {
                        let (lo, hi) = match composite_at(o + 1) {
                            Some(m) => {
                                let (cin, cout) = (self.modules[m].n_inputs, self.modules[m].n_outputs);
                                (cin, d.min(d + cin - cout))
                            }
                            None => (1, d),
                        };
                        let target = self.rng.gen_range(lo..=hi);
                        let in_lo = 1.max((l + 1).saturating_sub(target));
                        let in_hi = l.min(d).min(d + l - target);
                        let n_in = self.rng.gen_range(in_lo..=in_hi);
                        (n_in, target + n_in - l)
                    };
                    (self.atomic(n_in, n_out), n_in)
                }
            };
            // The last occurrence must absorb every lhs input still live.
            live.shuffle(&mut self.rng);
            if o == n - 1 {
                live.sort_by_key(|t| !matches!(t, Token::Lhs(_)));
            }
            let consumed: Vec<Token> = live.drain(..take).collect();
            for (p, tok) in consumed.into_iter().enumerate() {
                match tok {
                    Token::Lhs(x) => initial_inputs[x] = PortRef::new(o, p),
                    Token::Out(a, y) => edges.push(DataEdge {
                        from: PortRef::new(a, y),
                        to: PortRef::new(o, p),
                    }),
                }
            }
            occurrences.push(module);
            live.extend((0..self.modules[module].n_outputs).map(|y| Token::Out(o, y)));
        }
        live.shuffle(&mut self.rng);
        let final_outputs = live
            .into_iter()
            .map(|t| match t {
                Token::Out(a, y) => PortRef::new(a, y),
                Token::Lhs(_) => unreachable!("every lhs input is consumed"),
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(final_outputs.len(), a_out);
        SimpleWorkflow {
            occurrences,
            edges,
            initial_inputs,
            final_outputs,
        }
    }

    fn deps<'a>(&'a self, w: &SimpleWorkflow, star: &'a [Option<DependencyMatrix>]) -> Vec<&'a DependencyMatrix> {
        w.occurrences
            .iter()
            .map(|&m| star[m].as_ref().or(self.lambda[m].as_ref()).expect("dependencies known bottom-up"))
            .collect()
    }
}

/// Generates a grammar and its atomic dependencies.
pub fn gen_grammar(p: &GenParams) -> Result<GrammarSpec, GenError> {
    if p.workflow_size == 0 || p.module_degree == 0 || p.nesting_depth == 0 || p.recursion_length == 0 {
        return Err(GenError::Infeasible("all parameters must be at least 1".into()));
    }
    if p.module_degree > crate::matrix::MAX_PORTS {
        return Err(GenError::Infeasible(format!("module degree above {}", crate::matrix::MAX_PORTS)));
    }
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(p.seed),
        modules: Vec::new(),
        lambda: Vec::new(),
        degree: p.module_degree,
    };
    let (d, r, n) = (p.nesting_depth, p.recursion_length, p.workflow_size);
    let arity = |b: &mut Builder| (b.rng.gen_range(1..=p.module_degree), b.rng.gen_range(1..=p.module_degree));

    // Composite declarations: S, then per level the cycle group and P.
    let (si, so) = arity(&mut b);
    b.modules.push(ModuleDecl::new("S", si, so, ModuleKind::Composite));
    b.lambda.push(None);
    let mut groups: Vec<Vec<ModuleId>> = vec![Vec::new()];
    let mut plain: Vec<Option<ModuleId>> = vec![None];
    for level in 1..d {
        let mut g = Vec::new();
        for j in 1..=r {
            let (ci, co) = arity(&mut b);
            g.push(b.modules.len());
            b.modules.push(ModuleDecl::new(format!("C{level}_{j}"), ci, co, ModuleKind::Composite));
            b.lambda.push(None);
        }
        groups.push(g);
        let (ci, co) = arity(&mut b);
        plain.push(Some(b.modules.len()));
        b.modules.push(ModuleDecl::new(format!("P{level}"), ci, co, ModuleKind::Composite));
        b.lambda.push(None);
    }

    // Next-level references of a rhs at `level`.
    let refs = |b: &mut Builder, level: usize, plain_owner: bool| -> Vec<ModuleId> {
        if level + 1 >= d {
            return Vec::new();
        }
        let member = groups[level + 1][b.rng.gen_range(0..r)];
        let mut out = vec![member];
        if plain_owner || b.rng.gen_bool(0.5) {
            out.push(plain[level + 1].unwrap());
        }
        out
    };
    let infeasible = || GenError::Infeasible(format!("workflow size {n} too small for the composite slots"));

    let mut productions: Vec<(usize, Production)> = Vec::new();
    let mut star: Vec<Option<DependencyMatrix>> = vec![None; b.modules.len()];
    for level in (1..d).rev() {
        // Plain composite.
        let pm = plain[level].unwrap();
        let mut targets = refs(&mut b, level, true);
        targets.shuffle(&mut b.rng);
        let pos = b.slot_positions(n, targets.len()).ok_or_else(infeasible)?;
        let slots: Vec<Slot> = pos.iter().zip(&targets).map(|(&pos, &module)| Slot { pos, module }).collect();
        let (pi, po) = (b.modules[pm].n_inputs, b.modules[pm].n_outputs);
        let w = b.wire(n, pi, po, &slots);
        star.resize(b.modules.len(), None);
        let m = induced_matrix(&w, &b.deps(&w, &star));
        star[pm] = Some(m);
        productions.push((pm, Production { id: 0, lhs: pm, rhs: w }));

        // Cycle group: skeletons first, then the fixpoint.
        let group = groups[level].clone();
        let mut skeletons = Vec::with_capacity(r);
        for (j, &cm) in group.iter().enumerate() {
            let next = group[(j + 1) % r];
            let mut targets = refs(&mut b, level, false);
            targets.push(next);
            targets.shuffle(&mut b.rng);
            let pos = b.slot_positions(n, targets.len()).ok_or_else(infeasible)?;
            let slots: Vec<Slot> = pos.iter().zip(&targets).map(|(&pos, &module)| Slot { pos, module }).collect();
            let slot_pos = slots.iter().find(|s| s.module == next).unwrap().pos;
            let (ci, co) = (b.modules[cm].n_inputs, b.modules[cm].n_outputs);
            let w = b.wire(n, ci, co, &slots);
            skeletons.push((w, slot_pos, next));
        }
        star.resize(b.modules.len(), None);
        // x[j] is the candidate λ* of member j; iterate from all-true.
        let mut x: Vec<DependencyMatrix> = group
            .iter()
            .map(|&m| DependencyMatrix::full(b.modules[m].n_inputs, b.modules[m].n_outputs))
            .collect();
        let apply = |b: &Builder, star: &[Option<DependencyMatrix>], j: usize, slot_value: &DependencyMatrix| {
            let (w, slot_pos, _) = &skeletons[j];
            let mut deps = b.deps_except(w, star, *slot_pos);
            deps[*slot_pos] = slot_value;
            induced_matrix(w, &deps)
        };
        loop {
            let before = x[0].clone();
            for j in (0..r).rev() {
                let nx = x[(j + 1) % r].clone();
                x[j] = apply(&b, &star, j, &nx);
            }
            if x[0] == before {
                break;
            }
        }
        for (j, &cm) in group.iter().enumerate() {
            star[cm] = Some(x[j].clone());
        }
        for (j, &cm) in group.iter().enumerate() {
            let (w, slot_pos, _) = skeletons[j].clone();
            let stub_value = x[(j + 1) % r].clone();
            let stub = b.modules.len();
            let next = group[(j + 1) % r];
            b.modules.push(ModuleDecl::new(
                format!("a{stub}"),
                b.modules[next].n_inputs,
                b.modules[next].n_outputs,
                ModuleKind::Atomic,
            ));
            b.lambda.push(Some(stub_value));
            let mut term = w.clone();
            term.occurrences[slot_pos] = stub;
            productions.push((cm, Production { id: 0, lhs: cm, rhs: w }));
            productions.push((cm, Production { id: 0, lhs: cm, rhs: term }));
        }
        star.resize(b.modules.len(), None);
    }
    // Start module.
    let targets = {
        let mut t = if d > 1 {
            vec![groups[1][b.rng.gen_range(0..r)], plain[1].unwrap()]
        } else {
            Vec::new()
        };
        t.shuffle(&mut b.rng);
        t
    };
    let pos = b.slot_positions(n, targets.len()).ok_or_else(infeasible)?;
    let slots: Vec<Slot> = pos.iter().zip(&targets).map(|(&pos, &module)| Slot { pos, module }).collect();
    let w = b.wire(n, si, so, &slots);
    productions.push((0, Production { id: 0, lhs: 0, rhs: w }));

    // Declaration order: S, then levels top-down, members before P.
    let rank = |m: ModuleId| -> usize {
        if m == 0 {
            return 0;
        }
        let name = &b.modules[m].name;
        let level: usize = name[1..].split('_').next().unwrap().parse().unwrap();
        level * 2 + usize::from(name.starts_with('P'))
    };
    productions.sort_by_key(|(m, _)| rank(*m));
    let productions: Vec<Production> = productions
        .into_iter()
        .enumerate()
        .map(|(idx, (_, mut p))| {
            p.id = idx + 1;
            p
        })
        .collect();
    let grammar = WorkflowGrammar {
        modules: b.modules.clone(),
        start: 0,
        productions,
    };
    let lambda: DependencyAssignment = b
        .modules
        .iter()
        .zip(&b.lambda)
        .filter_map(|(m, l)| l.clone().map(|l| (m.name.clone(), l)))
        .collect();
    Ok(GrammarSpec { grammar, lambda })
}

impl Builder {
    fn deps_except<'a>(&'a self, w: &SimpleWorkflow, star: &'a [Option<DependencyMatrix>], skip: usize) -> Vec<&'a DependencyMatrix> {
        static PLACEHOLDER: std::sync::OnceLock<DependencyMatrix> = std::sync::OnceLock::new();
        let placeholder = PLACEHOLDER.get_or_init(|| DependencyMatrix::zeros(0, 0));
        w.occurrences
            .iter()
            .enumerate()
            .map(|(o, &m)| {
                if o == skip {
                    placeholder
                } else {
                    star[m].as_ref().or(self.lambda[m].as_ref()).expect("dependencies known bottom-up")
                }
            })
            .collect()
    }
}

/// Analyzed synthetic grammar.
pub fn gen_schema(p: &GenParams) -> Result<Arc<Schema>, GenError> {
    let spec = gen_grammar(p)?;
    Schema::new(spec.grammar, spec.lambda)
        .map(Arc::new)
        .map_err(|e| GenError::Infeasible(format!("generated grammar rejected: {e}")))
}

/// Derives a random run of about `target` items: pending composites are
/// picked uniformly, cycle members recurse with high probability (always,
/// for the last open one), and
/// expansions that would push the run past `1.1 × target` are skipped.
/// Stops once the run holds at least `0.9 × target` items or nothing can be
/// expanded; the run may end with composites still pending.
pub fn gen_run(schema: Arc<Schema>, target: usize, seed: u64) -> RunState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rs = RunState::start(schema.clone());
    let low = (target * 9).div_ceil(10);
    let high = target * 11 / 10;
    let g = &schema.grammar;
    // Recursive productions have a cycle edge in their rhs.
    let recursive: Vec<bool> = {
        let max = g.productions.iter().map(|p| p.id).max().unwrap_or(0);
        let mut v = vec![false; max + 1];
        for p in &g.productions {
            v[p.id] = (1..=p.rhs.occurrences.len())
                .any(|i| schema.cycle_of_edge(crate::analysis::EdgeId::new(p.id, i)).is_some());
        }
        v
    };
    let mut blocked: BTreeSet<usize> = BTreeSet::new();
    while rs.item_count() < low {
        let open: Vec<usize> = rs.pending().filter(|n| !blocked.contains(n)).collect();
        if open.is_empty() {
            break;
        }
        let node = open[rng.gen_range(0..open.len())];
        let m = rs.nodes[node].module().expect("pending nodes are instances");
        let options: Vec<&Production> = g.productions_of(m).collect();
        let (rec, non): (Vec<&Production>, Vec<&Production>) = options.iter().partition(|p| recursive[p.id]);
        // The last open cycle member keeps recursing so the run cannot die out
        // below the target.
        let last_chain = !rec.is_empty()
            && open
                .iter()
                .filter(|&&n| schema.cycle_of_module(rs.nodes[n].module().expect("instance")).is_some())
                .count()
                == 1;
        let mut order: Vec<&Production> = Vec::new();
        if !rec.is_empty() && (last_chain || rng.gen_bool(RECURSE_PROBABILITY)) {
            order.extend(rec.iter().copied());
            order.extend(non.iter().copied());
        } else {
            order.extend(non.iter().copied());
            order.extend(rec.iter().copied());
        }
        match order.into_iter().find(|p| rs.item_count() + p.rhs.edges.len() <= high.max(low)) {
            Some(p) => {
                rs.apply_production(node, p.id).expect("valid step");
            }
            None => {
                blocked.insert(node);
            }
        }
    }
    rs
}

/// Random safe view with `size` expandable composites, grown from the start
/// module through derivable children. White-box views perceive λ*; grey-box
/// views add spurious dependencies to a few unexpandable modules, keeping a
/// candidate only if the view stays safe (white-box after 100 failures).
pub fn gen_safe_view(schema: &Schema, size: usize, grey: bool, seed: u64) -> View {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &schema.grammar;
    let mut chosen: BTreeSet<ModuleId> = BTreeSet::new();
    if size > 0 && g.module(g.start).is_composite() {
        chosen.insert(g.start);
    }
    while chosen.len() < size {
        let frontier: BTreeSet<ModuleId> = chosen
            .iter()
            .flat_map(|&m| g.productions_of(m))
            .flat_map(|p| p.rhs.occurrences.iter().copied())
            .filter(|&m| g.module(m).is_composite() && !chosen.contains(&m))
            .collect();
        if frontier.is_empty() {
            break;
        }
        let options: Vec<ModuleId> = frontier.into_iter().collect();
        chosen.insert(options[rng.gen_range(0..options.len())]);
    }
    let expandable: BTreeSet<String> = chosen.iter().map(|&m| g.name(m).to_string()).collect();
    let restricted = restrict_grammar(g, &expandable).expect("chosen modules are composites");
    let white: DependencyAssignment = restricted
        .modules
        .iter()
        .filter(|m| !m.is_composite())
        .map(|m| {
            let orig = g.module_index(&m.name).unwrap();
            (m.name.clone(), schema.lambda_star[orig].clone())
        })
        .collect();
    let white_view = View {
        expandable: expandable.clone(),
        assignment: white.clone(),
    };
    if !grey {
        return white_view;
    }
    let unexpandable: Vec<String> = restricted
        .modules
        .iter()
        .filter(|m| !m.is_composite())
        .map(|m| m.name.clone())
        .collect();
    for _ in 0..100 {
        let mut a = white.clone();
        let count = rng.gen_range(1..=3usize).min(unexpandable.len());
        let mut changed = false;
        for name in unexpandable.choose_multiple(&mut rng, count) {
            let mut m = a.get(name).unwrap().clone();
            let zeros: Vec<(usize, usize)> = (0..m.rows())
                .flat_map(|r| (0..m.cols()).map(move |c| (r, c)))
                .filter(|&(r, c)| !m.get(r, c))
                .collect();
            if zeros.is_empty() {
                continue;
            }
            let extra = rng.gen_range(1..=2usize).min(zeros.len());
            for &(r, c) in zeros.choose_multiple(&mut rng, extra) {
                m.set(r, c, true);
            }
            a.insert(name.clone(), m);
            changed = true;
        }
        if changed && compute_full_assignment(&restricted, &a).is_ok() {
            return View {
                expandable,
                assignment: a,
            };
        }
    }
    white_view
}
