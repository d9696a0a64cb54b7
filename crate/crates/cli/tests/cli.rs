use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qoe-audit"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn generate(dir: &Path) {
    let out = run(
        dir,
        &[
            "--out",
            "gen",
            "--set",
            "gen.scenario=learnable",
            "--set",
            "gen.edges_per_system=20",
            "gen",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const DATA: [&str; 6] = [
    "--set",
    "data.edges=gen/edges.jsonl",
    "--set",
    "data.features=gen/features.bin",
    "--set",
    "data.evidence=gen/evidence.bin",
];

fn with_data<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = DATA.to_vec();
    v.extend_from_slice(extra);
    v
}

#[test]
fn audit_writes_q_vectors_with_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let out = run(tmp.path(), &with_data(&["--out", "a", "audit"]));
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("a/q_vectors.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    assert_eq!(
        lines.next().unwrap(),
        "group_id,n_edges,lenient,strict,fair,consensus,q_total"
    );
    assert_eq!(lines.count(), 10);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("a/manifest_audit.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "audit");
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn empty_contract_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    std::fs::write(tmp.path().join("empty.contracts"), "# nothing here\n").unwrap();
    let out = run(
        tmp.path(),
        &with_data(&[
            "--out",
            "a",
            "--set",
            "contracts.file=empty.contracts",
            "audit",
        ]),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(tmp.path().join("a/error.txt").exists());
}

#[test]
fn bad_flags_and_overrides_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["--jobs", "0", "gen"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["--set", "nonsense.key=1", "gen"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(
        tmp.path(),
        &[
            "--set",
            "bootstrap.level=1.5",
            "--set",
            "data.edges=missing.csv",
            "drift",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = run(tmp.path(), &["audit"]);
    assert_eq!(out.status.code(), Some(2), "missing data.edges");
}

#[test]
fn contract_parse_error_reports_offset() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    std::fs::write(tmp.path().join("bad.contracts"), "broken: mean >= \n").unwrap();
    let out = run(
        tmp.path(),
        &with_data(&[
            "--out",
            "a",
            "--set",
            "contracts.file=bad.contracts",
            "audit",
        ]),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = std::fs::read_to_string(tmp.path().join("a/error.txt")).unwrap();
    assert!(err.contains("offset"), "{err}");
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    std::fs::write(
        tmp.path().join("run.toml"),
        "seed = 5\n[bootstrap]\nn_resamples = 50\n[contracts]\nfamily = \"simple\"\n",
    )
    .unwrap();
    let out = run(
        tmp.path(),
        &with_data(&[
            "--config",
            "run.toml",
            "--seed",
            "9",
            "--out",
            "d",
            "--set",
            "bootstrap.n_resamples=30",
            "drift",
        ]),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(tmp.path().join("d/drift.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mos", "mos_hat", "lenient", "strict", "q_total"]);
    assert!(rows.iter().all(|r| r.ends_with(",30,9")), "{csv}");
}

#[test]
fn rejected_rows_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("edges.csv"),
        "edge_id,ratings,system_id,system_type\ne1,3|4|5,a,x\ne2,3|9,a,x\ne3,2|2,b,x\n",
    )
    .unwrap();
    let out = run(
        tmp.path(),
        &["--set", "data.edges=edges.csv", "--out", "a", "audit"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rejected = std::fs::read_to_string(tmp.path().join("a/rejected_rows.csv")).unwrap();
    assert_eq!(rejected.lines().count(), 3, "{rejected}");
    assert!(rejected.lines().nth(2).unwrap().contains("9"), "{rejected}");
    let strict = run(
        tmp.path(),
        &[
            "--set",
            "data.edges=edges.csv",
            "--set",
            "data.strict=true",
            "audit",
        ],
    );
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn bin_gain_and_difficulty_layouts() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let out = run(tmp.path(), &with_data(&["--out", "b", "bin-gain"]));
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("b/bin_gain.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "bin_center,n,q_total_range");
    assert_eq!(csv.lines().count(), 2 + 32);

    let out = run(
        tmp.path(),
        &with_data(&[
            "--out",
            "d",
            "--set",
            "difficulty.predictor=oracle",
            "difficulty",
        ]),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(tmp.path().join("d/difficulty.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "family,fraction,seed,D");
    assert_eq!(csv.lines().count(), 2 + 27 + 9);
    assert!(
        csv.lines().skip(2).all(|l| l.ends_with(",0.000000")),
        "{csv}"
    );
}

#[test]
fn train_reports_every_model() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let out = run(
        tmp.path(),
        &with_data(&[
            "--out",
            "t",
            "--jobs",
            "2",
            "--set",
            "model.epochs=3",
            "--set",
            "model.hidden_dims=[16]",
            "--set",
            "split.seeds=[13]",
            "--set",
            "split.train_fractions=[0.5]",
            "train",
        ]),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(tmp.path().join("t/metrics.csv")).unwrap();
    let models: Vec<&str> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        models,
        [
            "mos_mlp",
            "knn",
            "c1",
            "id_contract",
            "no_local_evidence",
            "graph_only"
        ]
    );
    let c1 = csv.lines().find(|l| l.starts_with("c1,")).unwrap();
    assert!(c1.split(',').all(|f| !f.is_empty()), "{c1}");
    assert!(tmp
        .path()
        .join("t/checkpoints/c1_seed13_frac0.5.ckpt")
        .exists());
}

#[test]
fn unknown_model_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let out = run(
        tmp.path(),
        &with_data(&["--set", "train.models=[\"forest\"]", "train"]),
    );
    assert_eq!(out.status.code(), Some(2));
}
