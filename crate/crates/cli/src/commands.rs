use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use provlabel::analysis::analyze as analyze_grammar;
use provlabel::format::{load_grammar, load_view, to_canonical_json, write_grammar, write_view};
use provlabel::label::{label_item, LabelStore};
use provlabel::model::validate_grammar;
use provlabel::oracle::oracle_for_view;
use provlabel::run::{parse_log, RunState};
use provlabel::synth::{gen_run, gen_safe_view, gen_schema, GenParams};
use provlabel::{decode, DataLabel, Schema, Variant, View, ViewLabel};

use crate::{CmdResult, Failure};

fn print_json<T: Serialize>(value: &T) {
    print!("{}", to_canonical_json(value));
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::input)
}

pub fn load_schema(path: &Path) -> Result<Arc<Schema>, Failure> {
    let spec = load_grammar(path).with_context(|| format!("loading {}", path.display())).map_err(Failure::input)?;
    Ok(Arc::new(Schema::new(spec.grammar, spec.lambda)?))
}

fn load_run(schema: &Arc<Schema>, log: &Path) -> Result<RunState, Failure> {
    let entries = parse_log(&read(log)?)?;
    Ok(RunState::replay(schema.clone(), &entries)?)
}

fn view_or_default(schema: &Schema, view: Option<&Path>) -> Result<View, Failure> {
    match view {
        Some(p) => Ok(load_view(p, &schema.grammar).with_context(|| format!("loading {}", p.display()))?),
        None => Ok(View::default_view(&schema.grammar, &schema.lambda)),
    }
}

/// `dN` or `N`, 1-based, to an item id.
pub fn parse_item(s: &str) -> Result<usize, Failure> {
    let digits = s.strip_prefix('d').unwrap_or(s);
    match digits.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n - 1),
        _ => Err(Failure::input(anyhow!("bad item `{s}` (expected dN with N ≥ 1)"))),
    }
}

pub fn validate(grammar: &Path) -> CmdResult {
    let spec = load_grammar(grammar)?;
    let report = validate_grammar(&spec.grammar);
    print_json(&serde_json::json!({
        "valid": report.is_valid(),
        "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    }));
    Ok(if report.is_valid() { 0 } else { 2 })
}

pub fn analyze(grammar: &Path) -> CmdResult {
    let spec = load_grammar(grammar)?;
    let report = validate_grammar(&spec.grammar);
    if let Some(v) = report.violations.first() {
        return Err(Failure::input(anyhow!("invalid grammar: {v}")));
    }
    let r = analyze_grammar(&spec.grammar, &spec.lambda);
    print_json(&r);
    Ok(if r.safe && r.recursion_class.is_labelable() { 0 } else { 3 })
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub workflow_size: usize,
    #[arg(long, default_value_t = 4)]
    pub module_degree: usize,
    #[arg(long, default_value_t = 4)]
    pub nesting_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub recursion_length: usize,
    /// Target item count of the run.
    #[arg(long, default_value_t = 1000)]
    pub items: usize,
    /// Expandable composites in the view; all of them when absent.
    #[arg(long)]
    pub view_size: Option<usize>,
    /// Add spurious dependencies to the view.
    #[arg(long)]
    pub grey: bool,
}

impl GenerateArgs {
    pub fn params(&self) -> GenParams {
        GenParams {
            workflow_size: self.workflow_size,
            module_degree: self.module_degree,
            nesting_depth: self.nesting_depth,
            recursion_length: self.recursion_length,
            seed: self.seed,
        }
    }
}

pub fn generate(a: &GenerateArgs) -> CmdResult {
    let p = a.params();
    let spec = provlabel::synth::gen_grammar(&p)?;
    let schema = gen_schema(&p)?;
    let size = a.view_size.unwrap_or(schema.composite_count()).min(schema.composite_count());
    let view = gen_safe_view(&schema, size, a.grey, a.seed);
    let rs = gen_run(schema.clone(), a.items, a.seed);
    std::fs::create_dir_all(&a.out_dir)?;
    let files = [
        ("grammar", a.out_dir.join("grammar.json"), write_grammar(&spec)),
        ("view", a.out_dir.join("view.json"), write_view(&view)),
        ("log", a.out_dir.join("run.jsonl"), rs.log_text()),
    ];
    for (_, path, text) in &files {
        write(path, text)?;
    }
    print_json(&serde_json::json!({
        "grammar": files[0].1,
        "view": files[1].1,
        "log": files[2].1,
        "composites": schema.composite_count(),
        "view_size": size,
        "items": rs.item_count(),
        "steps": rs.steps.len(),
    }));
    Ok(0)
}

pub fn derive(grammar: &Path, log: Option<&Path>, items: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let schema = load_schema(grammar)?;
    let rs = match log {
        Some(l) => load_run(&schema, l)?,
        None => gen_run(schema.clone(), items, seed),
    };
    if log.is_none() {
        match out {
            Some(p) => write(p, rs.log_text())?,
            None => {
                print!("{}", rs.log_text());
                return Ok(0);
            }
        }
    }
    print_json(&serde_json::json!({
        "items": rs.item_count(),
        "steps": rs.steps.len(),
        "pending": rs.pending_count(),
        "depth": rs.depth(),
    }));
    Ok(0)
}

pub fn label_run(grammar: &Path, log: &Path, out: &Path) -> CmdResult {
    let schema = load_schema(grammar)?;
    let rs = load_run(&schema, log)?;
    let mut store = LabelStore::default();
    let mut max_bits = 0;
    let mut total_bits = 0;
    for d in 0..rs.item_count() {
        let l = label_item(&rs, d);
        store.push(&l);
        let bits = store.labels[d].len() * 8;
        max_bits = max_bits.max(bits);
        total_bits += bits;
    }
    write(out, store.to_bytes())?;
    print_json(&serde_json::json!({
        "items": rs.item_count(),
        "max_label_bits": max_bits,
        "avg_label_bits": total_bits as f64 / rs.item_count().max(1) as f64,
    }));
    Ok(0)
}

pub fn label_view(grammar: &Path, view: Option<&Path>, variant: Variant, out: &Path) -> CmdResult {
    let schema = load_schema(grammar)?;
    let v = view_or_default(&schema, view)?;
    let vl = ViewLabel::build(&schema, &v, variant)?;
    let text = vl.to_json();
    write(out, &text)?;
    print_json(&serde_json::json!({
        "variant": variant,
        "expandable": v.expandable,
        "bytes": text.len(),
    }));
    Ok(0)
}

fn stored_label(store: &LabelStore, item: usize) -> Result<DataLabel, Failure> {
    match store.get(item) {
        Some(l) => Ok(l?),
        None => Err(Failure::input(anyhow!("no item d{} in a store of {}", item + 1, store.len()))),
    }
}

pub fn query(grammar: &Path, labels: &Path, view: &Path, from: &str, to: &str) -> CmdResult {
    let schema = load_schema(grammar)?;
    let bytes = std::fs::read(labels).with_context(|| format!("reading {}", labels.display()))?;
    let store = LabelStore::from_bytes(&bytes)?;
    let vl = ViewLabel::from_json(&read(view)?, &schema)?;
    let d1 = stored_label(&store, parse_item(from)?)?;
    let d2 = stored_label(&store, parse_item(to)?)?;
    let q = decode(&d1, &d2, &vl)?;
    print_json(&q);
    Ok(if q.reachable { 0 } else { 1 })
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub grammar: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// View file; the default view when absent.
    #[arg(long)]
    pub view: Option<PathBuf>,
    /// Variant to check; all three when absent.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Sampled pairs; every pair of visible items when absent.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Serialize)]
struct Mismatch {
    variant: Variant,
    from: String,
    to: String,
    decoded: Option<bool>,
    oracle: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn oracle_check(a: &OracleArgs) -> CmdResult {
    let schema = load_schema(&a.grammar)?;
    let rs = load_run(&schema, &a.log)?;
    let v = view_or_default(&schema, a.view.as_deref())?;
    let oracle = oracle_for_view(&rs, &v)?;
    let visible: Vec<usize> = (0..rs.item_count()).filter(|&d| oracle.is_visible(d)).collect();
    let pairs: Vec<(usize, usize)> = match a.pairs {
        None => visible.iter().flat_map(|&x| visible.iter().map(move |&y| (x, y))).collect(),
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..n)
                .map(|_| (visible[rng.gen_range(0..visible.len())], visible[rng.gen_range(0..visible.len())]))
                .collect()
        }
    };
    let labels: Vec<DataLabel> = (0..rs.item_count()).map(|d| label_item(&rs, d)).collect();
    let variants: Vec<Variant> = a.variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
    let mut mismatches = Vec::new();
    for &variant in &variants {
        let vl = ViewLabel::build(&schema, &v, variant)?;
        for &(x, y) in &pairs {
            let truth = oracle.reachable(x, y).map_err(Failure::input)?;
            let got = decode(&labels[x], &labels[y], &vl);
            let decoded = got.as_ref().ok().map(|q| q.reachable);
            if decoded != Some(truth) {
                mismatches.push(Mismatch {
                    variant,
                    from: format!("d{}", x + 1),
                    to: format!("d{}", y + 1),
                    decoded,
                    oracle: truth,
                    error: got.err().map(|e| e.to_string()),
                });
            }
        }
    }
    print_json(&serde_json::json!({
        "visible_items": visible.len(),
        "pairs_checked": pairs.len() * variants.len(),
        "mismatches": mismatches,
    }));
    Ok(if mismatches.is_empty() { 0 } else { 1 })
}
