use std::path::Path;
use std::process::{Command, Output};

use cxr_core::pipeline::StudyStatus;
use cxr_core::records::{parse_ndjson, RunRecord};

fn cxr(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_cxr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "cxr {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn synth_run_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cxr(&["synth", "--out", "corpus", "--count", "20", "--seed", "7"], d);
    cxr(&["run", "--input", "corpus", "--backend", "fixture", "--out", "a.ndjson"], d);
    cxr(&["run", "--input", "corpus", "--backend", "fixture", "--out", "b.ndjson"], d);
    let a = std::fs::read(d.join("a.ndjson")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.ndjson")).unwrap());

    let runs: Vec<RunRecord> = parse_ndjson(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(runs.len(), 20);
    for r in &runs {
        let rejected = matches!(r.study.status, StudyStatus::Rejected(_));
        assert_eq!(rejected, r.prediction.is_none(), "{}", r.file);
        assert_eq!(rejected, r.study.prediction_set_ref.is_none(), "{}", r.file);
        if let Some(p) = &r.prediction {
            assert_eq!(r.study.prediction_set_ref.as_deref(), Some(p.digest().as_str()));
            p.check().unwrap();
        }
    }

    let eval = cxr(&["evaluate", "--pred", "a.ndjson", "--ref", "corpus/references.ndjson"], d);
    let text = String::from_utf8(eval.stdout).unwrap();
    assert!(text.starts_with("Metric,Value,CI Lower,CI Upper\nPPV,"), "{text}");
    assert!(text.contains("\nPathology,AUC,Precision (%),Recall (%)\n"));
    let by = cxr(
        &["evaluate", "--pred", "a.ndjson", "--ref", "corpus/references.ndjson", "--by", "gender", "--format", "markdown"],
        d,
    );
    assert!(String::from_utf8(by.stdout).unwrap().starts_with("| Gender | AUC |"));
}

#[test]
fn tiny_backend_runs_without_a_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cxr(&["synth", "--out", "corpus", "--count", "3"], d);
    cxr(&["run", "--input", "corpus", "--backend", "tiny", "--seed", "5", "--out", "t1.ndjson"], d);
    cxr(&["run", "--input", "corpus", "--backend", "tiny", "--seed", "5", "--out", "t2.ndjson"], d);
    let t1 = std::fs::read_to_string(d.join("t1.ndjson")).unwrap();
    assert_eq!(t1, std::fs::read_to_string(d.join("t2.ndjson")).unwrap());
    assert_eq!(t1.lines().count(), 3);
}

#[test]
fn render_refuses_values_above_100() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("t.csv"), "Old Rib Fracture,0.97,100.38,98.10\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cxr"))
        .args(["render", "--table", "t.csv"])
        .current_dir(d)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("100.38"));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cxr"))
        .args(["evaluate", "--pred", "x", "--ref", "y", "--by", "height"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
