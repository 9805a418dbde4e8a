use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use lecomh::cli::{nearest_coverage, RunConfig, RunManifest};
use lecomh::eval::parse_curve;

const SMOKE: &str = "\
# 200 examples, short schedules, narrow heads
data.n_train = 200
data.n_test = 100
pretrain.epochs = 10
lecomh.epochs = 10
lecomh.batch_size = 64
lecomh.collab_hidden = 32,32
lecomh.selection_hidden = 32
eval.lambdas = 0,1
";

fn lecomh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lecomh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("smoke.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn smoke_pipeline_is_fast_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let t = Instant::now();
    ok(&lecomh(&["pipeline", "--config", &cfg, "--out", a.to_str().unwrap()]));
    assert!(t.elapsed().as_secs_f64() < 30.0, "pipeline took {:?}", t.elapsed());
    ok(&lecomh(&["pipeline", "--config", &cfg, "--out", b.to_str().unwrap()]));

    let curve = std::fs::read_to_string(a.join("curve.csv")).unwrap();
    assert!(!parse_curve(&curve, "curve.csv").unwrap().is_empty());

    let (ma, mb) = (RunManifest::read(&a).unwrap(), RunManifest::read(&b).unwrap());
    assert!(ma.verify(&a).unwrap().is_empty());
    assert_eq!(ma.files, mb.files);
    for f in ["curve.csv", "baselines.csv", "train.csv", "consensus.csv"] {
        assert!(ma.digest_of(f).is_some(), "{f} missing from manifest");
    }
    assert_eq!(ma.selection_mode, "argmax");
}

#[test]
fn stages_resume_from_saved_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let run = tmp.path().join("run");
    let out = run.to_str().unwrap();
    ok(&lecomh(&["gen-data", "--config", &cfg, "--out", out]));
    ok(&lecomh(&["pretrain", "--out", out]));
    let weights = std::fs::read(run.join("classifier.weights")).unwrap();
    ok(&lecomh(&["pipeline", "--stage", "consensus", "--out", out]));
    assert_eq!(std::fs::read(run.join("classifier.weights")).unwrap(), weights);
    assert!(run.join("curve.csv").exists());

    // single-lambda train and eval on the same directory
    ok(&lecomh(&["train", "--out", out]));
    ok(&lecomh(&["eval", "--out", out]));
    assert!(run.join("predictions.csv").exists());

    let again = lecomh(&["pretrain", "--out", out]);
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    ok(&lecomh(&["pretrain", "--out", out, "--force"]));
}

#[test]
fn invalid_noise_rate_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "data.annotators = cm:0.9,idn:1.5\n");
    let out = lecomh(&["gen-data", "--config", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.annotators"));
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.cfg");
    let out = lecomh(&["gen-data", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    let cfg = write_config(tmp.path(), &format!("{SMOKE}pretrain.learning_rate = 1e200\n"));
    let out = lecomh(&["pipeline", "--config", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage pretrain"), "{stderr}");
    assert!(tmp.path().join("r/train.csv").exists());

    let out = lecomh(&["train", "--stage", "pretrain"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lecomh(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_picks_point_nearest_half_coverage() {
    assert_eq!(nearest_coverage(&[0.6, 0.4], 0.5), Some(1));
    assert_eq!(nearest_coverage(&[0.4, 0.6], 0.5), Some(0));
    assert_eq!(nearest_coverage(&[0.0, 0.45, 1.0], 0.5), Some(1));
    assert_eq!(nearest_coverage(&[], 0.5), None);

    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    std::fs::create_dir_all(&run).unwrap();
    std::fs::write(
        run.join("curve.csv"),
        "lambda,coverage,mean_cost,accuracy,accuracy_std,trials\n0,0.4,1,0.91,0,1\n1,0.6,0.5,0.93,0,1\n",
    )
    .unwrap();
    let out = lecomh(&["report", run.to_str().unwrap(), tmp.path().join("gone").to_str().unwrap()]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 1, "{text}");
    assert!(rows[0].contains(",lecomh,"));
    assert!(rows[0].ends_with(",0.4,0.91,0.93"), "{}", rows[0]);
    assert!(text.contains("98.77"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gone"));
}

#[test]
fn schema_lists_defaults_that_parse_back() {
    let out = lecomh(&["schema"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(RunConfig::parse(&text, "schema").unwrap(), RunConfig::default());
}
