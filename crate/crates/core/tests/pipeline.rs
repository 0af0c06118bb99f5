use std::fs;
use std::path::Path;

use cytomap::error::ErrorCategory;
use cytomap::pipeline::{run_all, run_stage, Outcome, RunConfig, Stage, StageManifest};

fn tiny(dir: &Path) -> RunConfig {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny.toml")).unwrap();
    let mut cfg = RunConfig::from_toml(&text).unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn run(cfg: &RunConfig, stages: &[Stage]) {
    for &s in stages {
        run_stage(cfg, s).unwrap();
    }
}

fn err(cfg: &RunConfig, stage: Stage) -> String {
    let e = run_stage(cfg, stage).unwrap_err();
    assert_eq!(e.category(), ErrorCategory::Input, "{e}");
    e.to_string()
}

#[test]
fn phantom_and_mesh_build_a_graph_and_rerun_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    assert_eq!(run_stage(&cfg, Stage::Phantom).unwrap(), Outcome::Ran);
    assert_eq!(run_stage(&cfg, Stage::Mesh).unwrap(), Outcome::Ran);
    let graph = dir.path().join("mesh/graph.bin");
    assert!(graph.exists());
    let before = fs::read(StageManifest::path(dir.path(), "mesh")).unwrap();
    assert_eq!(run_stage(&cfg, Stage::Phantom).unwrap(), Outcome::UpToDate);
    assert_eq!(run_stage(&cfg, Stage::Mesh).unwrap(), Outcome::UpToDate);
    assert_eq!(fs::read(StageManifest::path(dir.path(), "mesh")).unwrap(), before);

    // A copied artifact tree stays valid.
    let copy = tempfile::tempdir().unwrap();
    for stage in ["phantom", "mesh"] {
        fs::create_dir(copy.path().join(stage)).unwrap();
        for e in fs::read_dir(dir.path().join(stage)).unwrap() {
            let e = e.unwrap();
            fs::copy(e.path(), copy.path().join(stage).join(e.file_name())).unwrap();
        }
    }
    assert_eq!(run_stage(&tiny(copy.path()), Stage::Mesh).unwrap(), Outcome::UpToDate);
}

#[test]
fn missing_upstream_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let msg = err(&cfg, Stage::Mesh);
    assert!(msg.contains("missing artifact") && msg.contains("`phantom`"), "{msg}");

    run(&cfg, &[Stage::Phantom, Stage::Mesh, Stage::TrainEncoder, Stage::Features]);
    let msg = err(&cfg, Stage::Eval);
    assert!(msg.contains("missing artifact") && msg.contains("train-gnn"), "{msg}");
    assert!(!dir.path().join("eval").exists());
}

#[test]
fn stale_and_partial_upstreams_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    run(&cfg, &[Stage::Phantom, Stage::Mesh]);

    // Different phantom config than the one on disk.
    let mut other = cfg.clone();
    other.phantom.seed = 1;
    let msg = err(&other, Stage::Mesh);
    let (old, new) = (Stage::Phantom.config_hash(&cfg), Stage::Phantom.config_hash(&other));
    assert!(msg.contains("stale artifact phantom") && msg.contains(&old) && msg.contains(&new), "{msg}");

    // Regenerating the phantom invalidates the mesh built from the old one.
    assert_eq!(run_stage(&other, Stage::Phantom).unwrap(), Outcome::Ran);
    let msg = err(&other, Stage::TrainEncoder);
    assert!(msg.contains("stale artifact mesh") && msg.contains("phantom/"), "{msg}");
    assert_eq!(run_stage(&other, Stage::Mesh).unwrap(), Outcome::Ran);

    // Edited output file.
    let graph = dir.path().join("mesh/graph.bin");
    let mut bytes = fs::read(&graph).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&graph, bytes).unwrap();
    let msg = err(&other, Stage::TrainEncoder);
    assert!(msg.contains("stale artifact mesh/graph.bin") && msg.contains("expected hash"), "{msg}");
    assert_eq!(run_stage(&other, Stage::Mesh).unwrap(), Outcome::Ran);

    // A stage that never finished.
    let mut m = StageManifest::read(dir.path(), "mesh").unwrap().unwrap();
    m.complete = false;
    m.write(dir.path()).unwrap();
    let msg = err(&other, Stage::TrainEncoder);
    assert!(msg.contains("did not complete"), "{msg}");
}

#[test]
fn full_run_reports_every_model_and_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (tiny(a.path()), tiny(b.path()));
    assert!(run_all(&ca).unwrap().iter().all(|(_, o)| *o == Outcome::Ran));
    run_all(&cb).unwrap();
    assert!(run_all(&ca).unwrap().iter().all(|(_, o)| *o == Outcome::UpToDate));

    let report = fs::read(a.path().join("eval/report.json")).unwrap();
    assert_eq!(report, fs::read(b.path().join("eval/report.json")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&report).unwrap();
    for spec in &ca.gnn.models {
        assert!(json["models"][spec.key()].is_object(), "no row for {}", spec.key());
    }
    for f in ["labels.ply", "predictions.ply"] {
        assert_eq!(fs::read(a.path().join("export").join(f)).unwrap(), fs::read(b.path().join("export").join(f)).unwrap());
    }
}
