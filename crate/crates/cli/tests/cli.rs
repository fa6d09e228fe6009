use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn jointrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointrec")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jointrec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config(extra_train: Value) -> Value {
    let mut train = json!({ "epochs": 2, "batch_size": 8, "seed": 4 });
    for (k, v) in extra_train.as_object().unwrap() {
        train[k] = v.clone();
    }
    json!({
        "data": {
            "seed": 4,
            "synth": {
                "emotion_labels": ["neutral", "happy"],
                "intent_labels": ["question", "statement", "request"],
                "dims": { "audio": 4, "video": 3, "text": 2 },
                "seq_len": [2, 5],
                "delta": 6.0,
                "per_pair": { "train": 6, "val": 2, "test": 3 },
                "pairs": [{ "emotion": "happy", "intent": "request", "train": 2, "val": 1, "test": 1 }]
            }
        },
        "model": { "h": 8 },
        "train": train
    })
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn fixture(cfg: Value) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("config.json");
    fs::write(&config, cfg.to_string()).unwrap();
    let data = root.join("data");
    ok(&["synth", "--config", s(&config), "--out", s(&data)]);
    Fixture {
        _dir: dir,
        root,
        config,
        data,
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    serde_json::from_str(lines[0]).unwrap()
}

fn split_labels(data: &Path, split: &str) -> HashMap<String, (String, String)> {
    let vocab: Value = serde_json::from_str(fs::read_to_string(data.join("manifest.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    let name = |task: &str, v: &Value| -> String {
        match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => vocab[format!("{task}_labels")][n.as_u64().unwrap() as usize].as_str().unwrap().to_string(),
            _ => panic!("label {v}"),
        }
    };
    fs::read_to_string(data.join("manifest.jsonl"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|r| r["split"] == split)
        .map(|r| (r["id"].as_str().unwrap().to_string(), (name("emotion", &r["emotion"]), name("intent", &r["intent"]))))
        .collect()
}

fn csv_rows(path: &Path) -> Vec<(String, String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect()
}

/// Macro-F1 over classes present in gold or predictions, then the harmonic mean.
fn external_jrbm(gold: &HashMap<String, (String, String)>, rows: &[(String, String, String)]) -> f64 {
    let f1 = |pairs: Vec<(&str, &str)>| {
        let mut labels: Vec<&str> = pairs.iter().flat_map(|&(g, p)| [g, p]).collect();
        labels.sort();
        labels.dedup();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&c| {
                let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as f64;
                let fp = pairs.iter().filter(|&&(g, p)| g != c && p == c).count() as f64;
                let fn_ = pairs.iter().filter(|&&(g, p)| g == c && p != c).count() as f64;
                2.0 * tp / (2.0 * tp + fp + fn_)
            })
            .collect();
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    let e = f1(rows.iter().map(|(id, e, _)| (gold[id].0.as_str(), e.as_str())).collect());
    let i = f1(rows.iter().map(|(id, _, i)| (gold[id].1.as_str(), i.as_str())).collect());
    if e == 0.0 || i == 0.0 {
        0.0
    } else {
        2.0 * e * i / (e + i)
    }
}

#[test]
fn synth_is_loadable_deterministic_and_counted() {
    let f = fixture(config(json!({})));
    let manifest = fs::read_to_string(f.data.join("manifest.jsonl")).unwrap();
    // 6 pairs; five at 6/2/3 and one at 2/1/1, plus the header line.
    assert_eq!(manifest.lines().count(), 1 + 5 * 11 + 4);
    let again = f.root.join("again");
    ok(&["synth", "--config", s(&f.config), "--out", s(&again)]);
    assert_eq!(manifest, fs::read_to_string(again.join("manifest.jsonl")).unwrap());
    for entry in fs::read_dir(f.data.join("features")).unwrap() {
        let p = entry.unwrap().path();
        assert_eq!(fs::read(&p).unwrap(), fs::read(again.join("features").join(p.file_name().unwrap())).unwrap());
    }
    let other = f.root.join("other");
    ok(&["synth", "--config", s(&f.config), "--out", s(&other), "--seed", "5"]);
    // Labels and layout depend only on the synth config; the features follow the seed.
    assert_eq!(manifest, fs::read_to_string(other.join("manifest.jsonl")).unwrap());
    let first = |dir: &std::path::Path| fs::read(dir.join("features").join("000000.audio.fea")).unwrap();
    assert_ne!(first(&f.data), first(&other));
    assert_eq!(split_labels(&f.data, "test").len(), 5 * 3 + 1);
}

#[test]
fn train_eval_vote_round_trip() {
    let f = fixture(config(json!({ "epochs": 1 })));
    let run = f.root.join("run");
    ok(&["train", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&run)]);
    let history = read_json(&run.join("history.json"));
    assert_eq!(history["epochs"].as_array().unwrap().len(), 1);
    assert_eq!(history["checkpoints"].as_array().unwrap().len(), 1);
    assert_eq!(history["config"]["use_swfc"], true);

    let ckpt = run.join(history["checkpoints"][0]["path"].as_str().unwrap());
    let ev = f.root.join("eval");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&f.data), "--split", "test", "--out", s(&ev)]);
    let report = read_json(&ev.join("report.json"));
    let rows = csv_rows(&ev.join("preds.csv"));
    let gold = split_labels(&f.data, "test");
    assert_eq!(rows.len(), gold.len());
    let recomputed = external_jrbm(&gold, &rows);
    assert!((report["jrbm"].as_f64().unwrap() - recomputed).abs() < 1e-12);

    let vote = f.root.join("vote");
    ok(&["vote", "--preds", s(&ev.join("preds.csv")), "--data", s(&f.data), "--split", "test", "--out", s(&vote)]);
    assert_eq!(fs::read(ev.join("preds.csv")).unwrap(), fs::read(vote.join("preds.csv")).unwrap());
}

#[test]
fn toggles_reach_training_and_match_library_runs() {
    let cfg = config(json!({ "use_swfc": false, "use_augmentation": false }));
    let f = fixture(cfg);
    let run = f.root.join("run");
    ok(&["train", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&run)]);
    let history = read_json(&run.join("history.json"));
    assert_eq!(history["config"]["use_swfc"], false);
    assert_eq!(history["config"]["use_augmentation"], false);
    assert_eq!(history["config"]["use_modality_dropout"], true);
    assert_eq!(history["augmentation"], Value::Null);

    let dataset = jointrec::corpus::load_manifest(&f.data.join("manifest.jsonl"), &f.data).unwrap();
    let lib_cfg = jointrec::training::TrainConfig {
        epochs: 2,
        batch_size: 8,
        seed: 4,
        use_swfc: false,
        use_augmentation: false,
        model: jointrec::training::ModelSettings {
            h: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    let lib = jointrec::training::train(&lib_cfg, &dataset).unwrap();
    let lib: Value = serde_json::from_str(&lib.history.to_json()).unwrap();
    assert_eq!(lib, history);
}

#[test]
fn vote_matches_plurality_with_planted_disagreements() {
    let f = fixture(config(json!({})));
    let gold = split_labels(&f.data, "val");
    let mut ids: Vec<&String> = gold.keys().collect();
    ids.sort();
    let emotions = ["neutral", "happy"];
    let intents = ["question", "statement", "request"];
    // Table k predicts label (j + k * (j % 3)) for the j-th id.
    let mut paths = Vec::new();
    let mut tables = Vec::new();
    for k in 0..3 {
        let rows: Vec<(String, &str, &str)> = ids
            .iter()
            .enumerate()
            .map(|(j, id)| ((*id).clone(), emotions[(j + k * (j % 2)) % 2], intents[(j + k * (j % 3)) % 3]))
            .collect();
        let mut text = String::from("id,emotion,intent\n");
        for (id, e, i) in &rows {
            text.push_str(&format!("{id},{e},{i}\n"));
        }
        let p = f.root.join(format!("m{k}.csv"));
        fs::write(&p, text).unwrap();
        paths.push(p);
        tables.push(rows);
    }
    let out = f.root.join("vote");
    ok(&["vote", "--preds", s(&paths[0]), s(&paths[1]), s(&paths[2]), "--data", s(&f.data), "--out", s(&out)]);
    let voted = csv_rows(&out.join("preds.csv"));
    let pick = |votes: [&str; 3]| -> String {
        let count = |l: &str| votes.iter().filter(|&&v| v == l).count();
        let top = votes.iter().map(|v| count(v)).max().unwrap();
        let mut winners: Vec<&str> = votes.iter().copied().filter(|v| count(v) == top).collect();
        winners.sort();
        winners.dedup();
        if winners.len() == 1 { winners[0].to_string() } else { votes[0].to_string() }
    };
    for (j, (id, e, i)) in voted.iter().enumerate() {
        assert_eq!(id, &tables[0][j].0);
        assert_eq!(e, &pick([tables[0][j].1, tables[1][j].1, tables[2][j].1]));
        assert_eq!(i, &pick([tables[0][j].2, tables[1][j].2, tables[2][j].2]));
    }
    let report = read_json(&out.join("ensemble.json"));
    assert_eq!(report["members"].as_array().unwrap().len(), 3);
    assert!((report["voted_jrbm"].as_f64().unwrap() - external_jrbm(&gold, &voted)).abs() < 1e-12);
}

#[test]
fn perfect_predictions_score_one() {
    let f = fixture(config(json!({})));
    let gold = split_labels(&f.data, "val");
    let mut text = String::from("id,emotion,intent\n");
    for (id, (e, i)) in &gold {
        text.push_str(&format!("{id},{e},{i}\n"));
    }
    let p = f.root.join("gold.csv");
    fs::write(&p, text).unwrap();
    let out = f.root.join("vote");
    ok(&["vote", "--preds", s(&p), "--data", s(&f.data), "--out", s(&out)]);
    assert_eq!(read_json(&out.join("ensemble.json"))["voted_jrbm"], 1.0);
}

#[test]
fn error_contract() {
    let f = fixture(config(json!({})));

    let bad = f.root.join("bad.json");
    fs::write(&bad, r#"{"train": {"use_swfc": true, "use_swcf": false}}"#).unwrap();
    let out = jointrec(&["train", "--config", s(&bad), "--data", s(&f.data), "--out", s(&f.root.join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "SchemaViolation");

    let diverge = f.root.join("diverge.json");
    fs::write(&diverge, config(json!({ "step_size": 1e300 })).to_string()).unwrap();
    let out = jointrec(&["train", "--config", s(&diverge), "--data", s(&f.data), "--out", s(&f.root.join("y"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "DivergedLoss");

    let a = f.root.join("a.csv");
    let b = f.root.join("b.csv");
    let gold = split_labels(&f.data, "val");
    let mut text = String::from("id,emotion,intent\n");
    for id in gold.keys() {
        text.push_str(&format!("{id},neutral,question\n"));
    }
    fs::write(&a, &text).unwrap();
    fs::write(&b, text.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let out = jointrec(&["vote", "--preds", s(&a), s(&b), "--data", s(&f.data), "--out", s(&f.root.join("z"))]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["error"], "IdSetMismatch");

    let out = jointrec(&["train", "--config", s(&f.root.join("missing.json")), "--data", s(&f.data), "--out", s(&f.root.join("w"))]);
    assert_eq!(out.status.code(), Some(1));
    error_line(&out);

    let out = jointrec(&["synth", "--config", s(&bad), "--out", s(&f.root.join("v"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablation_table_has_canonical_rows_and_reruns_identically() {
    let f = fixture(config(json!({ "epochs": 1 })));
    let a = f.root.join("a");
    let stdout = ok(&["ablate", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&a)]);
    let table = read_json(&a.join("ablation.json"));
    let names: Vec<&str> = table["rows"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["full", "w/o Data Aug", "w/o SWFC Loss", "w/o Modality Dropout"]);
    assert!(table["rows"].as_array().unwrap().iter().all(|r| r["jrbm"].is_f64()));
    assert_eq!(stdout, fs::read_to_string(a.join("ablation.txt")).unwrap());
    for name in names {
        assert!(stdout.lines().any(|l| l.starts_with(name)));
    }
    let b = f.root.join("b");
    ok(&["ablate", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&b)]);
    assert_eq!(fs::read(a.join("ablation.json")).unwrap(), fs::read(b.join("ablation.json")).unwrap());
}

#[test]
fn ablation_continues_past_failing_rows() {
    // Diverges in every row; all four rows are still attempted and recorded.
    let f = fixture(config(json!({ "step_size": 1e300 })));
    let out_dir = f.root.join("abl");
    let out = jointrec(&["ablate", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let table = read_json(&out_dir.join("ablation.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["jrbm"].is_null() && r["error"].as_str().unwrap().contains("diverged")));
}
