use std::io::Cursor;
use std::path::{Path, PathBuf};

use hcc::error::CliError;
use hcc::formats::{
    load_taxonomy, parse_scores, parse_taxonomy, write_scores, ScoreRow, TaxonomyDoc,
};
use hcc::model::{load_model, parse_model, save_model, Model, ModelMetadata};
use hcc::pipeline::{build_space, calibrate_parallel, records_from, CoverModeArg};
use hcc_core::fixtures::{diamond, dish};
use hcc_core::{synth_generate, threshold_at, CoverFamily, SynthConfig, Taxonomy};

fn dish_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/dish.json")
}

fn p() -> &'static Path {
    Path::new("scores.csv")
}

const HEADER: &str = "instance_id,true_leaf,omelette,pancakes,Greek salad,Caesar salad,cheese sandwich,ham sandwich,tuna sandwich";

#[test]
fn fixture_file_matches_the_builtin_dish() {
    let t = load_taxonomy(&dish_path()).unwrap();
    assert_eq!(t.fingerprint(), dish().fingerprint());
    let doc = TaxonomyDoc::from_taxonomy(&t);
    assert_eq!(doc.build().unwrap().fingerprint(), t.fingerprint());
}

#[test]
fn taxonomy_errors_are_input_errors() {
    let cyclic = r#"{"nodes":["a","b"],"edges":[["a","b"],["b","a"]]}"#;
    let e = parse_taxonomy(cyclic, Path::new("t.json")).unwrap_err();
    assert!(e.is_validation());
    let unknown = r#"{"nodes":["a"],"edges":[],"extra":1}"#;
    assert!(parse_taxonomy(unknown, Path::new("t.json")).is_err());
}

#[test]
fn column_order_does_not_matter() {
    let t = dish();
    let a = format!("{HEADER}\nx,omelette,0.5,0.1,0.1,0.1,0.1,0.05,0.05\n");
    let b = "tuna sandwich,instance_id,Greek salad,pancakes,true_leaf,omelette,Caesar salad,ham sandwich,cheese sandwich\n\
             0.05,x,0.1,0.1,omelette,0.5,0.1,0.05,0.1\n";
    let ta = parse_scores(Cursor::new(a), p(), &t, false).unwrap();
    let tb = parse_scores(Cursor::new(b), p(), &t, false).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(ta.rows[0].scores.values()[0], 0.5);
}

#[test]
fn rows_that_do_not_sum_to_one_are_rejected_by_name() {
    let t = dish();
    let text = format!(
        "{HEADER}\nok,omelette,0.4,0.1,0.1,0.1,0.1,0.1,0.1\nbad7,pancakes,0.38,0.1,0.1,0.1,0.1,0.1,0.1\n"
    );
    let e = parse_scores(Cursor::new(text.clone()), p(), &t, false).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("bad7") && msg.contains("line 3"), "{msg}");
    assert!(e.is_validation());

    let table = parse_scores(Cursor::new(text), p(), &t, true).unwrap();
    let sum: f64 = table.rows[1].scores.values().iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn unknown_and_missing_leaf_columns_are_rejected() {
    let t = dish();
    let soup = format!("{HEADER},soup\nx,omelette,0.4,0.1,0.1,0.1,0.1,0.1,0.1,0\n");
    let msg = parse_scores(Cursor::new(soup), p(), &t, false)
        .unwrap_err()
        .to_string();
    assert!(msg.contains("soup"), "{msg}");

    let short = "instance_id,omelette,pancakes\nx,0.5,0.5\n";
    let msg = parse_scores(Cursor::new(short), p(), &t, false)
        .unwrap_err()
        .to_string();
    assert!(msg.contains("missing column"), "{msg}");

    let internal = format!("{HEADER},salad\nx,omelette,0.4,0.1,0.1,0.1,0.1,0.1,0.1,0\n");
    assert!(parse_scores(Cursor::new(internal), p(), &t, false).is_err());
}

#[test]
fn bad_cells_name_their_row() {
    let t = dish();
    let nan = format!("{HEADER}\nq1,omelette,abc,0.1,0.1,0.1,0.1,0.1,0.1\n");
    let msg = parse_scores(Cursor::new(nan), p(), &t, false)
        .unwrap_err()
        .to_string();
    assert!(msg.contains("q1") && msg.contains("omelette"), "{msg}");

    let truth = format!("{HEADER}\nq2,salad,0.4,0.1,0.1,0.1,0.1,0.1,0.1\n");
    let msg = parse_scores(Cursor::new(truth), p(), &t, false)
        .unwrap_err()
        .to_string();
    assert!(msg.contains("q2") && msg.contains("salad"), "{msg}");

    let dup = format!(
        "{HEADER}\nq3,omelette,0.4,0.1,0.1,0.1,0.1,0.1,0.1\nq3,omelette,0.4,0.1,0.1,0.1,0.1,0.1,0.1\n"
    );
    let msg = parse_scores(Cursor::new(dup), p(), &t, false)
        .unwrap_err()
        .to_string();
    assert!(msg.contains("duplicate"), "{msg}");

    let neg = format!("{HEADER}\nq4,omelette,1.1,-0.1,0,0,0,0,0\n");
    assert!(parse_scores(Cursor::new(neg), p(), &t, false).is_err());

    let empty = format!("{HEADER}\n");
    assert!(parse_scores(Cursor::new(empty), p(), &t, false).is_err());
}

#[test]
fn truth_column_is_optional() {
    let t = dish();
    let text = "instance_id,omelette,pancakes,Greek salad,Caesar salad,cheese sandwich,ham sandwich,tuna sandwich\n\
                u,0.4,0.1,0.1,0.1,0.1,0.1,0.1\n";
    let table = parse_scores(Cursor::new(text), p(), &t, false).unwrap();
    assert!(!table.has_truth);
    assert_eq!(table.rows[0].true_leaf, None);
    assert!(table.truths(p()).is_err());
}

fn synth_rows(t: &Taxonomy, n: usize, seed: u64) -> Vec<ScoreRow> {
    let cfg = SynthConfig {
        n,
        signal: 2.0,
        noise: 1.0,
        seed,
    };
    synth_generate(t, &cfg)
        .unwrap()
        .into_iter()
        .map(|i| ScoreRow {
            scores: i.scores,
            true_leaf: Some(i.true_leaf),
        })
        .collect()
}

#[test]
fn written_scores_read_back_identically() {
    let t = dish();
    let rows = synth_rows(&t, 50, 1);
    let mut buf = Vec::new();
    write_scores(&mut buf, &t, &rows).unwrap();
    let table = parse_scores(Cursor::new(buf), p(), &t, false).unwrap();
    assert_eq!(table.rows, rows);
}

fn calibrated(t: &Taxonomy, n: usize) -> Model {
    let rows = synth_rows(t, n, 9);
    let mut buf = Vec::new();
    write_scores(&mut buf, t, &rows).unwrap();
    let table = parse_scores(Cursor::new(buf), p(), t, false).unwrap();
    let space = build_space(t, CoverModeArg::Auto, None).unwrap();
    let records = records_from(t, &table, p()).unwrap();
    Model {
        family: calibrate_parallel(t, &space, &records).unwrap(),
        risk_control: None,
        metadata: ModelMetadata::new(None, Some(9), None),
    }
}

#[test]
fn saved_model_gives_identical_thresholds() {
    let t = dish();
    let model = calibrated(&t, 300);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &t, &path).unwrap();
    let loaded = load_model(&path, &t).unwrap();
    assert_eq!(loaded.family.predictors().len(), 11);
    for (a, b) in model
        .family
        .predictors()
        .iter()
        .zip(loaded.family.predictors())
    {
        assert_eq!(a.cover(), b.cover());
        assert_eq!(
            threshold_at(a, 0.1).unwrap().to_bits(),
            threshold_at(b, 0.1).unwrap().to_bits()
        );
    }
    assert_eq!(loaded, model);
}

#[test]
fn model_for_another_taxonomy_is_rejected() {
    let t = dish();
    let model = calibrated(&t, 40);
    let text = serde_json::to_string(&model.to_doc(&t)).unwrap();
    let e = parse_model(&text, &diamond(), Path::new("m.json")).unwrap_err();
    assert!(matches!(e, CliError::Model { .. }));
    assert!(e.to_string().contains("taxonomy"), "{e}");
}

#[test]
fn damaged_models_are_rejected() {
    let t = dish();
    let m = Path::new("m.json");
    assert!(parse_model("", &t, m).is_err());
    assert!(parse_model("{\"format_version\": 1", &t, m).is_err());

    let model = calibrated(&t, 40);
    let good = model.to_doc(&t);

    let mut doc = good.clone();
    doc.format_version = 99;
    assert!(Model::from_doc(doc, &t, m).is_err());

    let mut doc = good.clone();
    doc.covers[3].conformity.reverse();
    assert!(Model::from_doc(doc, &t, m).is_err());

    let mut doc = good.clone();
    doc.covers.swap(1, 2);
    assert!(Model::from_doc(doc, &t, m).is_err());

    let mut doc = good.clone();
    doc.covers[0].conformity.pop();
    assert!(Model::from_doc(doc, &t, m).is_err());

    let mut doc = good;
    doc.covers[2].members.push("soup".into());
    assert!(Model::from_doc(doc, &t, m).is_err());
}
