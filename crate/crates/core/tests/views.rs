mod common;

use std::collections::BTreeSet;

use common::{running_run, fixture, schema, view};
use provlabel::label::label_item;
use provlabel::model::View;
use provlabel::oracle::oracle_for_view;
use provlabel::run::{parse_log, RunState};
use provlabel::{decode, Variant, ViewLabel};

#[test]
fn white_and_grey_views_answer_differently() {
    let sc = schema("white_grey.json");
    let log = parse_log(&std::fs::read_to_string(fixture("white_grey_run.jsonl")).unwrap()).unwrap();
    let rs = RunState::replay(sc.clone(), &log).unwrap();
    // Items 0 and 1 feed the start inputs; item 2 leaves the first output.
    let (d2, d4) = (1, 2);
    let l2 = label_item(&rs, d2);
    let l4 = label_item(&rs, d4);
    for (file, expected) in [("white_grey_view_white.json", false), ("white_grey_view_grey.json", true)] {
        let v = view(&sc, file);
        let oracle = oracle_for_view(&rs, &v).unwrap();
        assert_eq!(oracle.reachable(d2, d4).unwrap(), expected, "{file}");
        for variant in Variant::ALL {
            let vl = ViewLabel::build(&sc, &v, variant).unwrap();
            assert_eq!(decode(&l2, &l4, &vl).unwrap().reachable, expected, "{file} {variant:?}");
        }
    }
}

fn white_box(sc: &provlabel::Schema, expandable: &[&str]) -> View {
    let expandable: BTreeSet<String> = expandable.iter().map(|s| s.to_string()).collect();
    let restricted = provlabel::model::restrict_grammar(&sc.grammar, &expandable).unwrap();
    let assignment = restricted
        .modules
        .iter()
        .filter(|m| !expandable.contains(&m.name))
        .map(|m| (m.name.clone(), sc.lambda_star[sc.grammar.module_index(&m.name).unwrap()].clone()))
        .collect();
    View { expandable, assignment }
}

#[test]
fn white_box_views_agree_with_the_default_view() {
    let sc = schema("running.json");
    let rs = running_run(&sc);
    let default = ViewLabel::build(&sc, &View::default_view(&sc.grammar, &sc.lambda), Variant::Default).unwrap();
    let labels: Vec<_> = (0..rs.item_count()).map(|d| label_item(&rs, d)).collect();
    for coarse in [&["S", "A", "B"][..], &["S"], &["S", "A", "B", "C"]] {
        let v = white_box(&sc, coarse);
        let vl = ViewLabel::build(&sc, &v, Variant::Default).unwrap();
        let oracle = oracle_for_view(&rs, &v).unwrap();
        let visible: Vec<usize> = (0..rs.item_count()).filter(|&d| oracle.is_visible(d)).collect();
        for &a in &visible {
            for &b in &visible {
                let fine = decode(&labels[a], &labels[b], &default).unwrap().reachable;
                let got = decode(&labels[a], &labels[b], &vl).unwrap().reachable;
                assert_eq!(got, fine, "{coarse:?}: {a} -> {b}");
                assert_eq!(oracle.reachable(a, b).unwrap(), got, "{coarse:?}: {a} -> {b}");
            }
        }
    }
}

#[test]
fn u2_decoding_matches_the_oracle() {
    let sc = schema("running.json");
    let rs = running_run(&sc);
    let v = view(&sc, "running_view_u2.json");
    let oracle = oracle_for_view(&rs, &v).unwrap();
    let labels: Vec<_> = (0..rs.item_count()).map(|d| label_item(&rs, d)).collect();
    let visible: Vec<usize> = (0..rs.item_count()).filter(|&d| oracle.is_visible(d)).collect();
    assert!(visible.len() < rs.item_count());
    for variant in Variant::ALL {
        let vl = ViewLabel::build(&sc, &v, variant).unwrap();
        for &a in &visible {
            for &b in &visible {
                let got = decode(&labels[a], &labels[b], &vl).unwrap().reachable;
                assert_eq!(got, oracle.reachable(a, b).unwrap(), "{variant:?}: {a} -> {b}");
            }
        }
    }
}

#[test]
fn hidden_items_are_rejected() {
    let sc = schema("running.json");
    let rs = running_run(&sc);
    let v = view(&sc, "running_view_u2.json");
    let oracle = oracle_for_view(&rs, &v).unwrap();
    let vl = ViewLabel::build(&sc, &v, Variant::Default).unwrap();
    let hidden = (0..rs.item_count()).find(|&d| !oracle.is_visible(d)).unwrap();
    let l = label_item(&rs, hidden);
    assert!(decode(&l, &l, &vl).is_err());
}
