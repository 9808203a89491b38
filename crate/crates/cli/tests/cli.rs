use std::path::Path;
use std::process::{Command, Output};

const SMALL_MODEL: &str = "
[walk]
walk_length = 10
walks_per_node = 2
samples_per_type = [3, 3, 1]

[model]
layer1_units = 8
layer2_units = 4
mlp_units = [8, 4]

[model.encoder]
content_hidden = 4
mlp_hidden = 4
neighbor_hidden = 8
attention_dim = 8
embed_dim = 8
heads = 2
";

fn hdgnn(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdgnn"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn small_graph(dir: &Path) -> std::path::PathBuf {
    let cfg = write_config(
        dir,
        "small.toml",
        &format!("seed = 3\n[synth]\nn_papers = 600\nn_authors = 200\nyears = 30\n[train]\nmax_epochs = 3\n{SMALL_MODEL}"),
    );
    let data = dir.join("data");
    let d = data.to_str().unwrap();
    ok(hdgnn(&cfg, &["--out", d, "synth"]));
    ok(hdgnn(&cfg, &["--out", d, "sample"]));
    cfg
}

#[test]
fn training_twice_with_one_seed_gives_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_graph(tmp.path());
    let data = tmp.path().join("data");
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        ok(hdgnn(
            &cfg,
            &["--input", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7", "train"],
        ));
    }
    let a = std::fs::read(tmp.path().join("a/checkpoint-paper-full.bin")).unwrap();
    let b = std::fs::read(tmp.path().join("b/checkpoint-paper-full.bin")).unwrap();
    assert!(!a.is_empty());
    assert!(a == b, "checkpoints differ");
    let h: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/history-paper-full.json")).unwrap()).unwrap();
    assert_eq!(h["history"]["epochs"].as_array().unwrap().len(), 3);
}

#[test]
fn baseline_report_and_predictions_have_their_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_graph(tmp.path());
    let d = tmp.path().join("data");
    let d = d.to_str().unwrap();
    ok(hdgnn(&cfg, &["--out", d, "eval", "--baseline", "uniform"]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(d).join("report.json")).unwrap()).unwrap();
    for key in ["msle", "acc", "n", "by_venue"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report["msle"].as_f64().unwrap() >= 0.0);

    ok(hdgnn(&cfg, &["--out", d, "train", "--task", "author", "--variant", "novenue"]));
    ok(hdgnn(&cfg, &["--out", d, "predict", "--task", "author", "--variant", "novenue"]));
    let csv = std::fs::read_to_string(Path::new(d).join("predictions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("target_id,kind,label,prediction"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1], "author");
    assert_eq!(row[3].split('.').nth(1).unwrap().len(), 6);

    ok(hdgnn(&cfg, &["--out", d, "stats", "--years", "5"]));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(d).join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["paper_pearson"].as_array().unwrap().len(), 5);
    assert_eq!(stats["productivity"].as_array().unwrap().len(), 5);
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_config(tmp.path(), "typo.toml", "[walk]\nrestart = 0.5\n");
    assert_eq!(hdgnn(&typo, &["synth"]).status.code(), Some(1));

    let empty = write_config(tmp.path(), "empty.toml", "");
    let nowhere = tmp.path().join("nowhere");
    let out = hdgnn(&empty, &["--out", nowhere.to_str().unwrap(), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let cfg = small_graph(tmp.path());
    let d = tmp.path().join("data");
    let huge = std::fs::read_to_string(&cfg).unwrap().replace("[train]", "[train]\nlearning_rate = 1e300");
    let huge = write_config(tmp.path(), "huge.toml", &huge);
    assert_eq!(hdgnn(&huge, &["--out", d.to_str().unwrap(), "train"]).status.code(), Some(3));
}

#[test]
fn trained_model_beats_the_constant_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        "seed = 0
[walk]
samples_per_type = [3, 3, 1]

[model]
layer1_units = 16
layer2_units = 8
mlp_units = [16, 8]

[model.encoder]
content_hidden = 8
mlp_hidden = 8
neighbor_hidden = 16
attention_dim = 16
embed_dim = 16
heads = 2

[train]
learning_rate = 0.003
max_epochs = 60
",
    );
    let d = tmp.path().to_str().unwrap();
    ok(hdgnn(&cfg, &["--out", d, "synth"]));
    ok(hdgnn(&cfg, &["--out", d, "sample"]));
    ok(hdgnn(&cfg, &["--out", d, "train"]));
    let msle = |args: &[&str]| -> f64 {
        let mut all = vec!["--out", d, "eval"];
        all.extend_from_slice(args);
        ok(hdgnn(&cfg, &all));
        let r: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
        r["msle"].as_f64().unwrap()
    };
    let model = msle(&[]);
    let uniform = msle(&["--baseline", "uniform"]);
    assert!(model < uniform, "model {model} vs uniform {uniform}");
}
