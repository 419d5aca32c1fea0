use std::path::Path;
use std::process::{Command, Output};

use hoifit::fixture::{perturb_motion, synthetic_motion};
use hoifit::pipeline::PoseJson;

fn hoifit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoifit")).args(args).output().expect("run hoifit")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fixture_estimate_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let out = hoifit(&["--seed", "4", "make-fixture", "--out", s(&fx)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est = dir.path().join("est");
    let bundle = fx.join("scene.bundle");
    let out = hoifit(&["--seed", "4", "estimate", s(&bundle), "--out", s(&est)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pose = PoseJson::read(&est.join("pose.json")).unwrap();
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fx.join("truth.json")).unwrap()).unwrap();
    let t: Vec<f64> = truth["translation"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let err = ((pose.translation[0] - t[0]).powi(2) + (pose.translation[1] - t[1]).powi(2) + (pose.translation[2] - t[2]).powi(2)).sqrt();
    assert!(err < 0.01, "translation error {err}");
    let trace = std::fs::read_to_string(est.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 601);

    let spec = format!("{}@{}", s(&fx.join("template.obj")), s(&est.join("pose.json")));
    let rd = dir.path().join("rd");
    let out = hoifit(&["render-debug", "--mesh", &spec, "--out", s(&rd)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(rd.join("silhouette.smap").exists() && rd.join("depth.dmap").exists());
}

#[test]
fn interpolate_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let reference = synthetic_motion(2, 61, 30.0);
    let sim = perturb_motion(&reference, 9, 0.01);
    let ref_path = dir.path().join("ref.json");
    let sim_path = dir.path().join("sim.json");
    std::fs::write(&ref_path, reference.to_json().unwrap()).unwrap();
    std::fs::write(&sim_path, sim.to_json().unwrap()).unwrap();

    let interp = dir.path().join("interp.json");
    let out = hoifit(&["interpolate", s(&ref_path), "--keyframes", "5", "--out", s(&interp)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let seq = hoifit::motion::HOISequence::from_json(&std::fs::read_to_string(&interp).unwrap()).unwrap();
    assert_eq!(seq.len(), 61);
    assert_eq!(seq.keyframe_indices.as_deref(), Some(&[0, 15, 30, 45, 60][..]));

    let labels = dir.path().join("labels.json");
    std::fs::write(&labels, r#"{"contact": ["R_Wrist"], "separate": ["L_Wrist"]}"#).unwrap();
    let score = dir.path().join("score");
    let out = hoifit(&[
        "score",
        s(&sim_path),
        "--reference",
        s(&ref_path),
        "--labels",
        s(&labels),
        "--out",
        s(&score),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(score.join("scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 62);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(score.join("summary.json")).unwrap()).unwrap();
    let r = summary["r_imitate"].as_f64().unwrap();
    assert!(r > 0.0 && r < 1.0, "{r}");
    assert_eq!(summary["r_contact"].as_f64().unwrap(), 1.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bundle");
    assert_eq!(hoifit(&["estimate", s(&missing), "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(hoifit(&["--set", "no_such_key=1", "make-fixture", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(hoifit(&["--set", "lr=abc", "make-fixture", "--out", s(dir.path())]).status.code(), Some(5));
    assert_eq!(hoifit(&["bogus"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = hoifit(&["interpolate", s(&bad), "--out", s(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn depth_required_for_stage_two() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert!(hoifit(&["make-fixture", "--out", s(&fx)]).status.success());
    let bundle = fx.join("scene.bundle");
    let text = std::fs::read_to_string(&bundle).unwrap();
    let stripped: String = text.lines().filter(|l| !l.starts_with("depth")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&bundle, stripped).unwrap();
    let out = hoifit(&["estimate", s(&bundle), "--out", s(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
}
