#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use provlabel::format::{load_grammar, load_view, GrammarSpec};
use provlabel::matrix::DependencyMatrix;
use provlabel::run::{parse_log, RunState};
use provlabel::{Schema, View};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn spec(name: &str) -> GrammarSpec {
    load_grammar(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn schema(name: &str) -> Arc<Schema> {
    let s = spec(name);
    Arc::new(Schema::new(s.grammar, s.lambda).unwrap_or_else(|e| panic!("{name}: {e}")))
}

pub fn view(schema: &Schema, name: &str) -> View {
    load_view(&fixture(name), &schema.grammar).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn running_run(schema: &Arc<Schema>) -> RunState {
    let text = std::fs::read_to_string(fixture("running_run.jsonl")).unwrap();
    RunState::replay(schema.clone(), &parse_log(&text).unwrap()).unwrap()
}

pub fn m(rows: &[&[u8]]) -> DependencyMatrix {
    let rows: Vec<Vec<u8>> = rows.iter().map(|r| r.to_vec()).collect();
    DependencyMatrix::from_rows(&rows).expect("rectangular 0/1 rows")
}
