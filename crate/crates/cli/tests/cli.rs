use std::fs;
use std::path::Path;
use std::process::Command;

use softgrad_cli::run::read_records;
use softgrad_core::mpm::snapshot;

fn softgrad(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_softgrad")).args(args).current_dir(cwd).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn catalog_lists_every_task() {
    let d = tempfile::tempdir().unwrap();
    let (code, out, _) = softgrad(&["catalog"], d.path());
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 9);
    assert_eq!(entries[2]["id"], "push_rope");
    assert_eq!(entries[2]["action_size"], 6);
    assert_eq!(entries[2]["horizon"], 6);
}

#[test]
fn cem_run_writes_records_and_summary() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "run.toml",
        "task = \"push_rope\"\nmethod = \"cem_mpc\"\nseeds = [1, 2, 3]\nout = \"r\"\n[cem]\npopulation = 8\nelite_fraction = 0.25\niterations = 2\n",
    );
    let (code, _, err) = softgrad(&["run", "--config", &cfg], d.path());
    assert_eq!(code, 0, "{err}");
    let r = d.path().join("r");
    let files = sorted_files(&r);
    let records: Vec<_> = files.iter().filter(|f| f.starts_with("seed_") && f.ends_with(".jsonl")).collect();
    assert_eq!(records.len(), 3);
    assert!(files.contains(&"summary.json".to_string()));
    assert_eq!(files.iter().filter(|f| f.starts_with("trace_")).count(), 3);
    for seed in 1..=3 {
        let trace = fs::read_to_string(r.join(format!("trace_{seed}.jsonl"))).unwrap();
        let best: Vec<f64> = trace.lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["best_score"].as_f64().unwrap()).collect();
        assert_eq!(best.len(), 2);
        assert!(best[1] >= best[0]);
        let recs = read_records(&r.join(format!("seed_{seed}.jsonl"))).unwrap();
        assert_eq!(recs.iter().map(|x| x.t).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        assert!((recs[5].r_gt - best[1]).abs() < 1e-12);
    }
}

/// Independent aggregation of the final `r_gt` of every record file.
#[test]
fn summary_matches_record_files() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = softgrad(&["run", "--task", "push_rope", "--method", "random", "--seeds", "4,5,6,7", "--out", "r"], d.path());
    assert_eq!(code, 0, "{err}");
    let r = d.path().join("r");
    let mut finals = Vec::new();
    for seed in 4..=7 {
        let text = fs::read_to_string(r.join(format!("seed_{seed}.jsonl"))).unwrap();
        let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        finals.push(last["r_gt"].as_f64().unwrap());
    }
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let se = (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_seeds"], 4);
    assert!((summary["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((summary["standard_error"].as_f64().unwrap() - se).abs() < 1e-12);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "run.toml", "task = \"whip_rope\"\nmethod = \"random\"\nseeds = [1, 2, 3]\nsnapshots = true\n");
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let (code, _, err) = softgrad(&["run", "--config", &cfg, "--out", out, "--workers", workers], d.path());
        assert_eq!(code, 0, "{err}");
    }
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let files = sorted_files(&a);
    assert_eq!(files, sorted_files(&b));
    for f in files.iter().filter(|f| *f != "timing.json") {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn export_frames() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "run.toml", "task = \"push_rope\"\nmethod = \"scripted_expert\"\nseeds = [1, 2]\nsnapshots = true\nout = \"r\"\n");
    assert_eq!(softgrad(&["run", "--config", &cfg], d.path()).0, 0);
    let (code, _, err) = softgrad(&["export", "r/seed_1.jsonl", "--frames", "0..5", "--out", "ex"], d.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(sorted_files(&d.path().join("ex")).len(), 6);
    assert_eq!(softgrad(&["export", "r/seed_2.jsonl", "--out", "all"], d.path()).0, 0);
    let frames = sorted_files(&d.path().join("all"));
    assert_eq!(frames.len(), 6);
    for (t, f) in frames.iter().enumerate() {
        let s = snapshot::decode(&fs::read(d.path().join("all").join(f)).unwrap()).unwrap();
        assert_eq!(s.frame as usize, t);
        assert!(s.x.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
    }
}

#[test]
fn export_without_snapshots_fails() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(softgrad(&["run", "--task", "push_rope", "--method", "random", "--seeds", "1,2", "--out", "r"], d.path()).0, 0);
    let (code, _, err) = softgrad(&["export", "r/seed_1.jsonl", "--frames", "0..2", "--out", "ex"], d.path());
    assert_eq!(code, 2);
    assert!(err.contains("no snapshot"), "{err}");
}

#[test]
fn gradcheck_examples() {
    let d = tempfile::tempdir().unwrap();
    let (code, out, err) = softgrad(&["gradcheck", "--task", "push_rope", "--steps", "2", "--tolerance", "1e-3", "--out", "g"], d.path());
    assert_eq!(code, 0, "{out}{err}");
    let table = fs::read_to_string(d.path().join("g/gradcheck_push_rope.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 6);
    let (code, out, err) = softgrad(&["gradcheck", "--task", "whip_rope", "--steps", "10", "--tolerance", "1e-4"], d.path());
    assert_eq!(code, 0, "{out}{err}");
    let (code, _, err) = softgrad(&["gradcheck", "--task", "whip_rope", "--steps", "3", "--adjoint-fault", "0.01"], d.path());
    assert_eq!(code, 1);
    assert!(err.contains("whip_rope") && err.contains("step"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let bad = write(d.path(), "bad.toml", "task = \"push_rope\"\nmethod = \"random\"\n\nseeds = [1, 2\n");
    let (code, _, err) = softgrad(&["run", "--config", &bad], d.path());
    assert_eq!(code, 2);
    assert!(err.contains("line"), "{err}");
    assert_eq!(softgrad(&["run", "--task", "fold_laundry", "--method", "random"], d.path()).0, 2);
    assert_eq!(softgrad(&["run", "--task", "push_rope", "--method", "ppo"], d.path()).0, 2);
    assert_eq!(softgrad(&["run", "--task", "push_rope", "--method", "random", "--seeds", "1,1"], d.path()).0, 2);
    assert_eq!(softgrad(&["run", "--task", "push_rope", "--method", "random", "--precision", "half"], d.path()).0, 2);
    assert_eq!(softgrad(&["frobnicate"], d.path()).0, 2);
    assert_eq!(softgrad(&["gradcheck", "--task", "push_rope", "--steps", "9"], d.path()).0, 2);
}

#[test]
fn resume_with_other_config_is_refused() {
    let d = tempfile::tempdir().unwrap();
    let base = ["run", "--task", "push_rope", "--seeds", "1,2", "--out", "r", "--method"];
    assert_eq!(softgrad(&[&base[..], &["random"]].concat(), d.path()).0, 0);
    assert_eq!(softgrad(&[&base[..], &["random"]].concat(), d.path()).0, 0);
    let (code, _, err) = softgrad(&[&base[..], &["scripted_expert"]].concat(), d.path());
    assert_eq!(code, 2);
    assert!(err.contains("config hash"), "{err}");
}

#[test]
fn single_precision_run() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = softgrad(&["run", "--task", "whip_rope", "--method", "random", "--seeds", "1,2", "--precision", "single", "--out", "r"], d.path());
    assert_eq!(code, 0, "{err}");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["precision"], "single");
}
