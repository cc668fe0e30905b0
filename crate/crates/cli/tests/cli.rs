use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn longdoc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longdoc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LONGDOC_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixtures(dir: &Path, kind: &str, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["fixtures", kind, "--out", out, "--seed", "3"];
    args.extend_from_slice(extra);
    let o = longdoc(&args, dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn retrieve_prints_paragraphs_json() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("doc.txt"),
        "Ada Lovelace wrote the first program. It ran on paper.\n\nCharles Babbage designed the engine.\n\nThe weather was mild.",
    )
    .unwrap();
    fs::write(
        dir.path().join("config.toml"),
        "[retrieval]\nlayers = [4, 8]\nk = 2\n",
    )
    .unwrap();
    let o = longdoc(
        &[
            "retrieve",
            "--config",
            "config.toml",
            "--document",
            "doc.txt",
            "--query",
            "Who designed the engine?",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(json["paragraphs"].as_array().unwrap().contains(&1.into()));
    assert_eq!(json["k"], 2);
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = longdoc(
        &[
            "retrieve",
            "--config",
            "nope.toml",
            "--document",
            "d.txt",
            "--query",
            "q",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
}

#[test]
fn failing_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path(), "planted", &["--samples", "2"]);
    let path = dir.path().join("fixture.json");
    let mut fixture: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    fixture["fail"] = true.into();
    fs::write(&path, fixture.to_string()).unwrap();
    let o = longdoc(&["retrieve", "--config", "config.toml"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn eval_on_perfect_fixture_prints_ones() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(
        dir.path(),
        "planted",
        &[
            "--samples",
            "4",
            "--min-paragraphs",
            "1",
            "--max-paragraphs",
            "1",
        ],
    );
    let o = longdoc(
        &["eval", "--config", "config.toml", "--ks", "1,2,3,5"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(
        rows.iter().all(|r| r.split('\t').nth(1) == Some("1.0000")),
        "{table}"
    );
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(csv.starts_with("sample_id,k,f1,seconds\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["aggregates"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path(), "planted", &["--samples", "3"]);
    for ablation in ["attn_only", "emb_only", "no_entity"] {
        let o = longdoc(
            &[
                "eval",
                "--config",
                "config.toml",
                "--k",
                "3",
                "--ablation",
                ablation,
                "--workers",
                "2",
                "--strategy",
                "chunked",
                "--out",
                "ablate",
            ],
            dir.path(),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{ablation}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(stdout(&o).lines().count(), 2);
    }
}

#[test]
fn malformed_dataset_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path(), "planted", &["--samples", "3"]);
    let path = dir.path().join("dataset.jsonl");
    let mut lines: Vec<String> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[1] = "{\"id\": \"broken\"".into();
    fs::write(&path, lines.join("\n")).unwrap();
    let o = longdoc(&["eval", "--config", "config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("record 2"));
}

#[test]
fn analyze_layers_finds_planted_layer() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(
        dir.path(),
        "profile",
        &["--samples", "3", "--num-layers", "10", "--best-layers", "7"],
    );
    let o = longdoc(&["analyze-layers", "--config", "config.toml"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(json["selected_layers"], serde_json::json!([7]));
    let profile: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/layer_profile.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(profile["selected_layers"], serde_json::json!([7]));
    assert!(dir.path().join("out/layer_ranks.csv").exists());
}

#[test]
fn analyze_layers_without_subqueries_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path(), "planted", &["--samples", "2"]);
    let o = longdoc(&["analyze-layers", "--config", "config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subquery"));
}

#[test]
fn niah_covers_both_ends() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("spec.toml"),
        "filler = \"The grass is green. The sky is blue. Birds sing at dawn.\"\nneedle = \"The code word is tangerine.\"\nquestion = \"What is the code word?\"\ndepths = [0.0, 1.0]\ntarget_tokens = 80\n",
    )
    .unwrap();
    fixtures(
        dir.path(),
        "niah",
        &[
            "--spec",
            "spec.toml",
            "--num-layers",
            "4",
            "--heads",
            "8",
            "--plant",
            "2:3",
        ],
    );
    let o = longdoc(
        &[
            "niah",
            "--config",
            "config.toml",
            "--spec",
            "haystack.toml",
            "--layers",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/niah.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,2,3,8,"));
    assert!(rows[1].starts_with("1,2,3,8,"));
}
