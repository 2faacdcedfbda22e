use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otod_cli::args::{AblateArgs, EvalArgs, OtodArgs, ScorerKind, SimulateArgs, SweepTempArgs};
use otod_cli::commands::{cmd_ablate, cmd_eval, cmd_simulate, cmd_sweep_temp};
use otod_core::scoring::{score_batch, softmax, OtodConfig, ScorerSpec};
use otod_core::tensor_io::load_manifest;
use otod_core::wasserstein::w1_part_score;
use otod_core::Error;
use serde_json::Value;
use tempfile::TempDir;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/manifest.json")
}

fn otod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otod"))
        .args(args)
        .output()
        .unwrap()
}

fn eval_args(scorer: ScorerKind, temp: Option<f64>, out: &Path) -> EvalArgs {
    EvalArgs {
        manifest: fixture(),
        scorer,
        otod: OtodArgs {
            alpha: None,
            temp,
            preset: None,
        },
        gamma: 0.1,
        top_m: None,
        epsilon: None,
        out: out.to_path_buf(),
    }
}

fn copy_fixture(dir: &Path) -> PathBuf {
    let src = fixture();
    for entry in fs::read_dir(src.parent().unwrap()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.join(entry.file_name())).unwrap();
    }
    dir.join("manifest.json")
}

#[test]
fn validate_exit_codes() {
    let ok = otod(&["validate", fixture().to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["ok"], true);

    let tmp = TempDir::new().unwrap();
    let manifest = copy_fixture(tmp.path());
    let broken = tmp.path().join("ood1.features.f32");
    let bytes = fs::read(&broken).unwrap();
    fs::write(&broken, &bytes[..bytes.len() - 4]).unwrap();
    let bad = otod(&["validate", manifest.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["ok"], false);
    assert!(report.to_string().contains("ood1.features.f32"), "{report}");

    let missing = otod(&["validate", tmp.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn non_finite_value_is_located() {
    let tmp = TempDir::new().unwrap();
    let manifest = copy_fixture(tmp.path());
    let path = tmp.path().join("id_test.logits.f32");
    let mut bytes = fs::read(&path).unwrap();
    bytes[4 * 9..4 * 10].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, bytes).unwrap();
    let out = otod(&["validate", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("id_test.logits.f32"), "{text}");
}

#[test]
fn eval_reports_share_a_schema_across_scorers() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("otod");
    let b = tmp.path().join("msp");
    cmd_eval(&eval_args(ScorerKind::Otod, Some(3.0), &a)).unwrap();
    cmd_eval(&eval_args(ScorerKind::Msp, None, &b)).unwrap();
    let ja: Value =
        serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    let jb: Value =
        serde_json::from_str(&fs::read_to_string(b.join("report.json")).unwrap()).unwrap();
    let keys = |v: &Value| {
        v["report"]
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(keys(&ja), keys(&jb));
    assert_ne!(ja["report"]["scorer_id"], jb["report"]["scorer_id"]);
    assert_eq!(ja["format_version"], 1);
    assert!(fs::read_to_string(a.join("report.md"))
        .unwrap()
        .contains("format_version"));
}

#[test]
fn eval_needs_a_temperature_for_otod() {
    let tmp = TempDir::new().unwrap();
    let out = otod(&[
        "eval",
        fixture().to_str().unwrap(),
        "--scorer",
        "otod",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let preset = otod(&[
        "eval",
        fixture().to_str().unwrap(),
        "--scorer",
        "otod",
        "--preset",
        "cifar100",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(preset.status.code(), Some(0));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["scorer"]["temperature"], 3.0);
}

#[test]
fn mds_without_labels_is_a_precondition_failure() {
    let tmp = TempDir::new().unwrap();
    let manifest = copy_fixture(tmp.path());
    let mut json: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    json["id_train"].as_object_mut().unwrap().remove("labels");
    fs::write(&manifest, serde_json::to_string(&json).unwrap()).unwrap();
    let mut args = eval_args(ScorerKind::Mds, None, &tmp.path().join("out"));
    args.manifest = manifest;
    let err = cmd_eval(&args).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
    assert_eq!(otod_cli::exit_code_for(&err), 1);
}

#[test]
fn every_scorer_evaluates_the_fixture() {
    let tmp = TempDir::new().unwrap();
    for kind in [
        ScorerKind::Msp,
        ScorerKind::Ebo,
        ScorerKind::Gen,
        ScorerKind::Mds,
        ScorerKind::Klm,
    ] {
        let report = cmd_eval(&eval_args(kind, None, tmp.path())).unwrap();
        for row in &report.per_ood {
            assert!((0.0..=1.0).contains(&row.auroc) && (0.0..=1.0).contains(&row.fpr_at_95));
        }
    }
}

#[test]
fn ablation_full_row_matches_eval() {
    let tmp = TempDir::new().unwrap();
    let rows = cmd_ablate(&AblateArgs {
        manifest: fixture(),
        temp: Some(3.0),
        preset: None,
        out: tmp.path().to_path_buf(),
    })
    .unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.mean_auroc) && (0.0..=1.0).contains(&r.mean_fpr_at_95));
    }
    let report = cmd_eval(&eval_args(
        ScorerKind::Otod,
        Some(3.0),
        &tmp.path().join("e"),
    ))
    .unwrap();
    assert_eq!(rows[2].mean_auroc, report.average.auroc);
    assert_eq!(rows[2].mean_fpr_at_95, report.average.fpr_at_95);
    let md = fs::read_to_string(tmp.path().join("ablation.md")).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| (")).count(), 3);
}

#[test]
fn temperature_sweep_preserves_order_and_matches_eval() {
    let tmp = TempDir::new().unwrap();
    let sweep = |temps: Vec<f64>| {
        cmd_sweep_temp(&SweepTempArgs {
            manifest: fixture(),
            temps,
            alpha: None,
            out: tmp.path().to_path_buf(),
        })
    };
    let one = sweep(vec![1.0]).unwrap();
    let report = cmd_eval(&eval_args(
        ScorerKind::Otod,
        Some(1.0),
        &tmp.path().join("e"),
    ))
    .unwrap();
    assert_eq!(one[0].mean_auroc, report.average.auroc);

    let many = sweep(vec![10.0, 1.0, 3.0]).unwrap();
    let temps: Vec<f64> = many.iter().map(|p| p.temperature).collect();
    assert_eq!(temps, [10.0, 1.0, 3.0]);
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "T,mean_fpr,mean_auroc");
    assert_eq!(body.len(), 4);

    assert!(matches!(
        sweep(vec![1.0, 0.0]),
        Err(Error::InvalidConfig(_))
    ));
    assert!(matches!(sweep(vec![-2.0]), Err(Error::InvalidConfig(_))));
}

fn sim_args(out: &Path, shifts: Option<Vec<f64>>) -> SimulateArgs {
    SimulateArgs {
        d: None,
        n: Some(500),
        shifts,
        mu: None,
        sigma_scale: None,
        seed: 7,
        out: out.to_path_buf(),
    }
}

#[test]
fn simulation_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_simulate(&sim_args(&a, None)).unwrap();
    cmd_simulate(&sim_args(&b, None)).unwrap();
    assert_eq!(
        fs::read(a.join("sweep.csv")).unwrap(),
        fs::read(b.join("sweep.csv")).unwrap()
    );

    let single = cmd_simulate(&sim_args(&tmp.path().join("c"), Some(vec![0.0]))).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].shift, 0.0);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let run = |threads: &str, out: &str| {
        let o = tmp.path().join(out);
        let status = otod(&[
            "--threads",
            threads,
            "simulate",
            "--n",
            "300",
            "--seed",
            "3",
            "--out",
            o.to_str().unwrap(),
        ]);
        assert_eq!(status.status.code(), Some(0));
        fs::read(o.join("sweep.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("4", "four"));
}

#[test]
fn malformed_simulation_grid_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let err = cmd_simulate(&sim_args(tmp.path(), Some(vec![0.5, 1.0]))).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
}

#[test]
fn otod_scores_match_a_per_part_recomputation() {
    let bundle = load_manifest(fixture()).unwrap();
    let spec = ScorerSpec::Otod {
        alpha: [1.0 / 3.0; 3],
        temperature: 3.0,
    };
    let scorer = spec.build::<f64>(&bundle).unwrap();
    let scores = score_batch(&bundle.id_test, &scorer).unwrap();
    let cfg = OtodConfig::uniform(3.0).unwrap();
    assert_eq!(cfg.alpha, [1.0 / 3.0; 3]);
    for i in [0, 17, 199] {
        let f: Vec<f64> = bundle
            .id_test
            .features
            .row(i)
            .iter()
            .map(|&x| x as f64)
            .collect();
        let l: Vec<f64> = bundle
            .id_test
            .logits
            .row(i)
            .iter()
            .map(|&x| x as f64)
            .collect();
        let p = softmax(&l, 3.0).unwrap();
        let by_hand =
            (w1_part_score(&f).unwrap() + w1_part_score(&l).unwrap() + w1_part_score(&p).unwrap())
                / 3.0;
        assert!((scores.scores[i] - by_hand).abs() < 1e-12, "sample {i}");
    }

    let golden =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/id_test_scores.txt");
    let text: String = scores.scores.iter().map(|s| format!("{s:e}\n")).collect();
    if std::env::var_os("OTOD_BLESS").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &text).unwrap();
    }
    assert_eq!(fs::read_to_string(&golden).unwrap(), text);
}
