//! Measurement harness. Writes one long-format CSV per experiment:
//!
//! * `label_length.csv`: max and mean label bits per run;
//! * `label_time.csv`: seconds to label every item of a run;
//! * `view_label_size.csv`: bytes and build seconds per view size and variant;
//! * `query_time.csv`: mean and p99 latency and mean factor count per variant;
//! * `factor_sweep.csv`: label bits while varying nesting depth or module degree.
//!
//! Runs are generated in parallel; every timed section runs on one thread
//! with nothing else timed concurrently.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use provlabel::label::{label_item, DataLabel};
use provlabel::run::RunState;
use provlabel::synth::{gen_run, gen_safe_view, gen_schema, GenParams};
use provlabel::{decode, Schema, Variant, ViewLabel};

use crate::{CmdResult, Failure};

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Run sizes in items, comma separated.
    #[arg(long, default_value = "1000,2000,4000,8000,16000,32000", value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Runs per size.
    #[arg(long, default_value_t = 100)]
    pub reps: u64,
    /// Grammar seed; run `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Variant for the query experiment; all three when absent.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Timed queries per configuration, after 1000 warmup queries.
    #[arg(long, default_value_t = 100_000)]
    pub queries: usize,
    /// Nesting depths for the factor sweep; none when given without values.
    #[arg(long, default_value = "1,2,3,4,5,6,7,8", value_delimiter = ',', num_args = 0..)]
    pub sweep_depths: Vec<usize>,
    /// Module degrees for the factor sweep; none when given without values.
    #[arg(long, default_value = "2,3,4,5,6,7,8", value_delimiter = ',', num_args = 0..)]
    pub sweep_degrees: Vec<usize>,
    /// Run size for the factor sweep.
    #[arg(long, default_value_t = 4000)]
    pub sweep_items: usize,
}

/// One CSV row.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRecord {
    pub nesting_depth: usize,
    pub module_degree: usize,
    pub view_size: usize,
    pub n: usize,
    pub rep: u64,
    pub seed: u64,
    pub variant: String,
    pub metric: &'static str,
    pub value: f64,
}

struct Config {
    params: GenParams,
    schema: Arc<Schema>,
}

impl Config {
    fn new(params: GenParams) -> Result<Config, Failure> {
        let schema = gen_schema(&params)?;
        Ok(Config { params, schema })
    }

    fn record(&self, n: usize, rep: u64, seed: u64, metric: &'static str, value: f64) -> BenchRecord {
        BenchRecord {
            nesting_depth: self.params.nesting_depth,
            module_degree: self.params.module_degree,
            view_size: 0,
            n,
            rep,
            seed,
            variant: String::new(),
            metric,
            value,
        }
    }
}

fn write_csv(dir: &Path, name: &str, rows: &[BenchRecord]) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    }
    w.flush()?;
    Ok(path)
}

fn threads() -> usize {
    rayon::current_num_threads()
}

/// Runs for reps `0..reps`, generated in parallel a batch at a time and
/// handed to `each` in rep order.
fn for_each_run(cfg: &Config, n: usize, reps: u64, mut each: impl FnMut(u64, u64, &RunState)) {
    let batch = threads().max(1) as u64;
    let mut start = 0;
    while start < reps {
        let end = (start + batch).min(reps);
        let runs: Vec<RunState> = (start..end)
            .into_par_iter()
            .map(|r| gen_run(Arc::clone(&cfg.schema), n, cfg.params.seed + r))
            .collect();
        for (r, rs) in (start..end).zip(&runs) {
            each(r, cfg.params.seed + r, rs);
        }
        start = end;
    }
}

fn label_lengths(cfg: &Config, sizes: &[usize], reps: u64, lengths: &mut Vec<BenchRecord>, times: Option<&mut Vec<BenchRecord>>) {
    let mut times = times;
    for &n in sizes {
        for_each_run(cfg, n, reps, |rep, seed, rs| {
            let t0 = Instant::now();
            let encoded: Vec<Vec<u8>> = (0..rs.item_count()).map(|d| label_item(rs, d).encode()).collect();
            let secs = t0.elapsed().as_secs_f64();
            let bits: Vec<usize> = encoded.iter().map(|e| e.len() * 8).collect();
            let max = bits.iter().copied().max().unwrap_or(0);
            let avg = bits.iter().sum::<usize>() as f64 / bits.len().max(1) as f64;
            let items = rs.item_count();
            lengths.push(cfg.record(items, rep, seed, "max_label_bits", max as f64));
            lengths.push(cfg.record(items, rep, seed, "avg_label_bits", avg));
            if let Some(t) = times.as_deref_mut() {
                t.push(cfg.record(items, rep, seed, "total_label_time", secs));
            }
        });
    }
}

fn view_sizes(cfg: &Config, variants: &[Variant]) -> Result<Vec<BenchRecord>, Failure> {
    let mut out = Vec::new();
    for size in 1..=cfg.schema.composite_count() {
        let view = gen_safe_view(&cfg.schema, size, false, cfg.params.seed);
        for &v in variants {
            let t0 = Instant::now();
            let vl = ViewLabel::build(&cfg.schema, &view, v)?;
            let secs = t0.elapsed().as_secs_f64();
            for (metric, value) in [("view_label_bytes", vl.size_bytes() as f64), ("view_label_time", secs)] {
                let mut r = cfg.record(0, 0, cfg.params.seed, metric, value);
                r.view_size = size;
                r.variant = v.short_name().to_string();
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn query_times(cfg: &Config, sizes: &[usize], variants: &[Variant], queries: usize) -> Result<Vec<BenchRecord>, Failure> {
    let mut out = Vec::new();
    let size = 8.min(cfg.schema.composite_count());
    let view = gen_safe_view(&cfg.schema, size, false, cfg.params.seed);
    let labels: Vec<ViewLabel> = variants
        .iter()
        .map(|&v| ViewLabel::build(&cfg.schema, &view, v))
        .collect::<Result<_, _>>()?;
    let expandable: Vec<bool> = cfg.schema.grammar.modules.iter().map(|m| view.expandable.contains(&m.name)).collect();
    for &n in sizes {
        let rs = gen_run(Arc::clone(&cfg.schema), n, cfg.params.seed);
        let proj = rs.project(&expandable);
        let visible = proj.visible_items();
        if visible.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.params.seed ^ n as u64);
        // Labels of each sampled pair sit side by side, as a caller holding
        // them would pass them in.
        let batch: Vec<(DataLabel, DataLabel)> = (0..queries + 1000)
            .map(|_| {
                let a = visible[rng.gen_range(0..visible.len())];
                let b = visible[rng.gen_range(0..visible.len())];
                (label_item(&rs, a), label_item(&rs, b))
            })
            .collect();
        for (vl, &v) in labels.iter().zip(variants) {
            for (a, b) in &batch[..1000] {
                std::hint::black_box(decode(a, b, vl)?);
            }
            let mut samples = Vec::with_capacity(queries);
            let mut factors = 0usize;
            for (a, b) in &batch[1000..] {
                let t0 = Instant::now();
                let q = decode(a, b, vl)?;
                samples.push(t0.elapsed().as_nanos() as f64);
                factors += q.matrices_multiplied;
                std::hint::black_box(q);
            }
            let mean = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
            samples.sort_by(f64::total_cmp);
            let p99 = samples.get(samples.len() * 99 / 100).copied().unwrap_or(0.0);
            for (metric, value) in [
                ("query_ns_mean", mean),
                ("query_ns_p99", p99),
                ("matrices_multiplied_mean", factors as f64 / queries.max(1) as f64),
            ] {
                let mut r = cfg.record(rs.item_count(), 0, cfg.params.seed, metric, value);
                r.view_size = size;
                r.variant = v.short_name().to_string();
                out.push(r);
            }
        }
    }
    Ok(out)
}

pub fn run(a: &BenchArgs) -> CmdResult {
    if let Ok(t) = std::env::var("PROVLABEL_THREADS") {
        let n: usize = t.parse().map_err(|_| Failure::input(anyhow!("PROVLABEL_THREADS must be a positive integer")))?;
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    if a.sizes.is_empty() || a.reps == 0 {
        return Err(Failure::input(anyhow!("need at least one size and one repetition")));
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let variants: Vec<Variant> = a.variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
    let base = Config::new(GenParams {
        seed: a.seed,
        ..GenParams::default()
    })?;

    let mut lengths = Vec::new();
    let mut times = Vec::new();
    label_lengths(&base, &a.sizes, a.reps, &mut lengths, Some(&mut times));
    let mut written = vec![
        write_csv(&a.out_dir, "label_length.csv", &lengths)?,
        write_csv(&a.out_dir, "label_time.csv", &times)?,
        write_csv(&a.out_dir, "view_label_size.csv", &view_sizes(&base, &variants)?)?,
        write_csv(&a.out_dir, "query_time.csv", &query_times(&base, &a.sizes, &variants, a.queries)?)?,
    ];

    let mut sweep = Vec::new();
    let configs = a
        .sweep_depths
        .iter()
        .map(|&d| GenParams {
            nesting_depth: d,
            seed: a.seed,
            ..GenParams::default()
        })
        .chain(a.sweep_degrees.iter().map(|&k| GenParams {
            module_degree: k,
            seed: a.seed,
            ..GenParams::default()
        }));
    for p in configs {
        let cfg = Config::new(p)?;
        label_lengths(&cfg, &[a.sweep_items], a.reps, &mut sweep, None);
    }
    written.push(write_csv(&a.out_dir, "factor_sweep.csv", &sweep)?);

    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "written": written })).expect("plain json")
    );
    Ok(0)
}
