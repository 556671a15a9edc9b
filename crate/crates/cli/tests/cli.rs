use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cts_core::graph::{parse_ntriples, CausalGraph};
use cts_core::synthgen::CausalSpec;

fn cts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cts"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn cts")
}

/// Runs and returns the run directory printed on stdout.
fn run_ok(args: &[&str]) -> PathBuf {
    let out = cts(args);
    assert!(
        out.status.success(),
        "cts {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Re-runs `command` from the config persisted in `dir` after wiping the
/// directory and checks every file comes back byte for byte.
fn assert_reproducible(dir: &Path, command: &str, scratch: &Path) {
    let before = snapshot(dir);
    let config = scratch.join(format!("{command}.toml"));
    std::fs::copy(dir.join("config.toml"), &config).unwrap();
    std::fs::remove_dir_all(dir).unwrap();
    let again = run_ok(&["--config", config.to_str().unwrap(), command]);
    assert_eq!(again, dir);
    let after = snapshot(dir);
    assert_eq!(before.keys().collect::<Vec<_>>(), after.keys().collect::<Vec<_>>());
    for (name, bytes) in &before {
        assert!(after[name] == *bytes, "{command}: {} differs after re-run", name.display());
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_header_plus_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let dir = run_ok(&["--outdir", s(&out), "generate", "--vars", "5", "--steps", "5000", "--max-lag", "200", "--seed", "1"]);
    let csv = std::fs::read_to_string(dir.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5001);
    let spec = CausalSpec::load(dir.join("spec.json")).unwrap();
    assert_eq!(spec.n_vars, 5);
    assert!(spec.cross_edges().all(|e| e.lag <= 200));

    // a second invocation in another root writes identical files
    let other = tmp.path().join("other");
    let dir2 = run_ok(&["--outdir", s(&other), "generate", "--vars", "5", "--steps", "5000", "--max-lag", "200", "--seed", "1"]);
    assert_eq!(std::fs::read(dir.join("data.csv")).unwrap(), std::fs::read(dir2.join("data.csv")).unwrap());
    assert_eq!(std::fs::read(dir.join("spec.json")).unwrap(), std::fs::read(dir2.join("spec.json")).unwrap());
}

#[test]
fn validation_and_runtime_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let r = cts(&["--outdir", s(&out), "generate", "--vars", "1"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("generate.vars"));

    let r = cts(&["generate", "--no-such-flag"]);
    assert_eq!(r.status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[generate]\nvarz = 3\n").unwrap();
    let r = cts(&["--config", s(&bad), "generate"]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("varz") && err.contains("generate"), "{err}");

    let r = cts(&["--outdir", s(&out), "discover"]);
    assert_eq!(r.status.code(), Some(1), "missing --data is a usage error");

    let missing = tmp.path().join("missing.csv");
    let r = cts(&["--outdir", s(&out), "discover", "--data", s(&missing)]);
    assert_eq!(r.status.code(), Some(2));

    let r = cts(&["--help"]);
    assert_eq!(r.status.code(), Some(0));
}

#[test]
fn help_lists_defaults() {
    for sub in ["generate", "discover", "train", "evaluate", "exp1", "exp2"] {
        let r = cts(&[sub, "--help"]);
        assert!(r.status.success());
        let text = String::from_utf8(r.stdout).unwrap();
        let mut blocks: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            let t = line.trim_start();
            if t.starts_with("--") || (t.starts_with('-') && t.chars().nth(2) == Some(',')) {
                blocks.push((t.to_string(), String::new()));
            } else if let Some(last) = blocks.last_mut() {
                last.1.push_str(line);
            }
        }
        assert!(!blocks.is_empty());
        for (flag, body) in blocks {
            if flag.contains("--help") || flag.contains("--version") {
                continue;
            }
            assert!(
                flag.contains("[default: ") || body.contains("[default: "),
                "{sub} `{flag}` lacks a default"
            );
        }
    }
}

#[test]
fn file_values_yield_to_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, format!("seed = 4\noutdir = \"{}\"\n[generate]\nsteps = 300\nvars = 3\ncross_edges = 1\n", s(&tmp.path().join("runs")))).unwrap();
    let dir = run_ok(&["--config", s(&cfg), "generate", "--steps", "250"]);
    let persisted = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(persisted.contains("steps = 250"));
    assert!(persisted.contains("vars = 3"));
    assert!(persisted.contains("seed = 4"));
    assert_eq!(std::fs::read_to_string(dir.join("data.csv")).unwrap().lines().count(), 251);
}

#[test]
fn strict_alpha_on_noise_gives_empty_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let gen = run_ok(&["--outdir", s(&out), "generate", "--cross-edges", "0", "--steps", "2000", "--seed", "3"]);
    let data = gen.join("data.csv");
    let dir = run_ok(&["--outdir", s(&out), "discover", "--data", s(&data), "--alpha", "1e-12", "--max-lag", "50"]);
    let graph = CausalGraph::import_json(&std::fs::read_to_string(dir.join("graph.json")).unwrap()).unwrap();
    assert!(graph.edges.is_empty());
    assert!(parse_ntriples(&std::fs::read_to_string(dir.join("graph.nt")).unwrap()).unwrap().is_empty());
}

#[test]
fn pipeline_commands_reproduce_from_persisted_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let o = s(&out);
    let gen = run_ok(&["--outdir", o, "--seed", "7", "generate", "--steps", "3000", "--cross-edges", "2", "--max-lag", "60"]);
    let data = gen.join("data.csv");
    let disc = run_ok(&["--outdir", o, "discover", "--data", s(&data), "--max-lag", "60"]);
    let graph_path = disc.join("graph.json");

    // recovered edges against the generating structure
    let spec = CausalSpec::load(gen.join("spec.json")).unwrap();
    let graph = CausalGraph::import_json(&std::fs::read_to_string(&graph_path).unwrap()).unwrap();
    let truth: Vec<(usize, usize, usize)> = spec.cross_edges().map(|e| (e.cause, e.effect, e.lag)).collect();
    let found: Vec<(usize, usize, usize)> = graph.edges.iter().map(|e| (e.cause, e.effect, e.lag)).collect();
    let false_pos = found
        .iter()
        .filter(|f| !truth.iter().any(|t| t.0 == f.0 && t.1 == f.1))
        .count();
    assert!(false_pos <= 1, "truth {truth:?} found {found:?}");
    for t in &truth {
        assert!(found.contains(t), "missed {t:?} in {found:?}");
    }

    // N-Triples reparse to the same edges
    let triples = parse_ntriples(&std::fs::read_to_string(disc.join("graph.nt")).unwrap()).unwrap();
    assert_eq!(triples, graph.edge_triples());

    let g = s(&graph_path);
    let pairs = run_ok(&["--outdir", o, "pairs", "--data", s(&data), "--graph", g]);
    let samples = run_ok(&["--outdir", o, "build-samples", "--data", s(&data), "--graph", g]);
    let train = run_ok(&["--outdir", o, "--seed", "2", "train", "--data", s(&data), "--graph", g, "--epochs", "3"]);
    let model = train.join("model.json");
    let evaluate = run_ok(&["--outdir", o, "evaluate", "--data", s(&data), "--graph", g, "--model", s(&model)]);
    let export = run_ok(&["--outdir", o, "export-graph", "--graph", g]);
    assert_eq!(std::fs::read(export.join("graph.nt")).unwrap(), std::fs::read(disc.join("graph.nt")).unwrap());

    let scratch = tmp.path().join("configs");
    std::fs::create_dir(&scratch).unwrap();
    for (dir, command) in [
        (&gen, "generate"),
        (&disc, "discover"),
        (&pairs, "pairs"),
        (&samples, "build-samples"),
        (&train, "train"),
        (&evaluate, "evaluate"),
        (&export, "export-graph"),
    ] {
        assert_reproducible(dir, command, &scratch);
    }
}

#[test]
fn experiment_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let o = s(&out);
    let e1 = run_ok(&[
        "--outdir", o, "exp1", "--n-datasets", "2", "--steps", "1500", "--seeds", "1,2", "--epochs", "3",
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(e1.join("exp1.json")).unwrap()).unwrap();
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    for m in models {
        let (ns, sy, d) = (
            m["mape_nonsync"].as_f64().unwrap(),
            m["mape_sync"].as_f64().unwrap(),
            m["diff_pct"].as_f64().unwrap(),
        );
        assert!(ns > 0.0 && sy > 0.0);
        assert!((100.0 * (ns - sy) / ns - d).abs() < 1e-9);
    }
    let table = std::fs::read_to_string(e1.join("exp1.txt")).unwrap();
    assert!(table.contains("ridge") && table.contains("mlp"));

    let e2 = run_ok(&[
        "--outdir", o, "exp2", "--n-sources", "2", "--source-steps", "1500", "--target-steps", "800", "--seeds", "1",
        "--epochs", "3",
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(e2.join("exp2.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let mut shape: Vec<(String, bool)> = rows
        .iter()
        .map(|r| (r["variant"].as_str().unwrap().to_string(), r["synchronized"].as_bool().unwrap()))
        .collect();
    shape.sort();
    assert_eq!(
        shape,
        vec![
            ("pretrained_finetuned".to_string(), false),
            ("pretrained_finetuned".to_string(), true),
            ("target_only".to_string(), false),
            ("target_only".to_string(), true),
        ]
    );

    let scratch = tmp.path().join("configs");
    std::fs::create_dir(&scratch).unwrap();
    assert_reproducible(&e1, "exp1", &scratch);
    assert_reproducible(&e2, "exp2", &scratch);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = run_ok(&["--outdir", s(&tmp.path().join("g")), "generate", "--steps", "1500", "--seed", "5"]);
    let data = gen.join("data.csv");
    let one = run_ok(&["--outdir", s(&tmp.path().join("a")), "--jobs", "1", "discover", "--data", s(&data), "--max-lag", "40"]);
    let many = run_ok(&["--outdir", s(&tmp.path().join("b")), "--jobs", "4", "discover", "--data", s(&data), "--max-lag", "40"]);
    for f in ["graph.json", "graph.nt", "scans.json"] {
        assert_eq!(std::fs::read(one.join(f)).unwrap(), std::fs::read(many.join(f)).unwrap(), "{f}");
    }
}
