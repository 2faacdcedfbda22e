//! Subcommand implementations. Each writes its artifacts under the requested output
//! directory and returns the computed result.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use otod_core::metrics::{evaluate, markdown_table, EvalReport, DEFAULT_TPR};
use otod_core::scoring::{default_mds_epsilon, ScorerSpec};
use otod_core::simulate::{feature_md_sweep, GaussianSimSpec, SweepPoint};
use otod_core::synthetic::{synthetic_bundle, SyntheticSpec};
use otod_core::tensor_io::{
    load_manifest, validate_bundle, write_bundle, DatasetBundle, ValidationReport,
};
use otod_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    AblateArgs, EvalArgs, OtodArgs, Preset, ScorerKind, SimulateArgs, SweepTempArgs, SynthArgs,
};
use crate::artifacts::{csv_header, write_json, write_text, FORMAT_VERSION};

fn manifest_str(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn resolve_temperature(temp: Option<f64>, preset: Option<Preset>) -> Result<f64> {
    let t = temp
        .or(preset.map(Preset::temperature))
        .ok_or_else(|| Error::InvalidConfig("OTOD needs --temp or --preset".into()))?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {t}"
        )));
    }
    Ok(t)
}

fn resolve_alpha(alpha: Option<&[f64]>) -> Result<[f64; 3]> {
    match alpha {
        None => Ok([1.0 / 3.0; 3]),
        Some(&[a, b, c]) => Ok([a, b, c]),
        Some(other) => Err(Error::InvalidConfig(format!(
            "--alpha takes three weights, got {}",
            other.len()
        ))),
    }
}

fn otod_spec(otod: &OtodArgs) -> Result<ScorerSpec> {
    Ok(ScorerSpec::Otod {
        alpha: resolve_alpha(otod.alpha.as_deref())?,
        temperature: resolve_temperature(otod.temp, otod.preset)?,
    })
}

/// Turns command-line scorer flags into a fully resolved spec for `bundle`.
pub fn resolve_scorer(args: &EvalArgs, bundle: &DatasetBundle) -> Result<ScorerSpec> {
    let k = bundle.dims.k;
    let fitted_epsilon = || -> Result<Option<f64>> {
        let train = bundle.id_train.as_ref().ok_or_else(|| {
            Error::Precondition(format!(
                "{:?} requires a labeled id_train split",
                args.scorer
            ))
        })?;
        if train.labels.is_none() {
            return Err(Error::Precondition(
                "MDS/KLM require labels on id_train".into(),
            ));
        }
        Ok(Some(match args.epsilon {
            Some(e) => e,
            None => default_mds_epsilon(train)?,
        }))
    };
    Ok(match args.scorer {
        ScorerKind::Otod => otod_spec(&args.otod)?,
        ScorerKind::Msp => ScorerSpec::Msp,
        ScorerKind::Ebo => ScorerSpec::Ebo {
            temperature: args.otod.temp.unwrap_or(1.0),
        },
        ScorerKind::Gen => ScorerSpec::Gen {
            gamma: args.gamma,
            top_m: Some(args.top_m.unwrap_or(k.min(100))),
        },
        ScorerKind::Mds => ScorerSpec::Mds {
            epsilon: fitted_epsilon()?,
        },
        ScorerKind::Klm => ScorerSpec::Klm {
            epsilon: fitted_epsilon()?,
        },
    })
}

/// Outcome of `validate`: the report plus the process exit code.
pub struct ValidateOutcome {
    pub report: ValidationReport,
    pub exit_code: u8,
}

pub fn cmd_validate(manifest: &Path) -> ValidateOutcome {
    match load_manifest(manifest) {
        Ok(bundle) => {
            let report = validate_bundle(&bundle);
            let exit_code = if report.ok { 0 } else { 1 };
            ValidateOutcome { report, exit_code }
        }
        Err(e) => {
            let location = match &e {
                Error::Io { path, .. }
                | Error::Manifest { path, .. }
                | Error::ShapeMismatch { path, .. }
                | Error::NonFinite { path, .. }
                | Error::Csv { path, .. } => path.to_string_lossy().into_owned(),
                _ => manifest_str(manifest),
            };
            ValidateOutcome {
                report: ValidationReport::load_failure(location, &e),
                exit_code: if e.is_io() { 2 } else { 1 },
            }
        }
    }
}

fn load_valid(manifest: &Path) -> Result<DatasetBundle> {
    let bundle = load_manifest(manifest)?;
    let report = validate_bundle(&bundle);
    if !report.ok {
        let first = report
            .issues
            .iter()
            .find(|i| i.severity == otod_core::tensor_io::Severity::Error)
            .expect("failed report has an error issue");
        return Err(Error::Precondition(format!(
            "bundle failed validation: {}: {}",
            first.location, first.message
        )));
    }
    Ok(bundle)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Serialize)]
struct EvalConfig<'a> {
    command: &'static str,
    manifest: String,
    scorer: &'a ScorerSpec,
    tpr_target: f64,
}

fn run_eval(bundle: &DatasetBundle, spec: &ScorerSpec) -> Result<EvalReport> {
    let scorer = spec.build::<f64>(bundle)?;
    evaluate(bundle, &scorer)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let bundle = load_valid(&args.manifest)?;
    let spec = resolve_scorer(args, &bundle)?;
    let report = run_eval(&bundle, &spec)?;

    let config = EvalConfig {
        command: "eval",
        manifest: manifest_str(&args.manifest),
        scorer: &spec,
        tpr_target: DEFAULT_TPR,
    };
    ensure_dir(&args.out)?;
    write_json(
        &args.out.join("report.json"),
        &json!({ "format_version": FORMAT_VERSION, "config": config, "report": report }),
    )?;
    let table = markdown_table(std::slice::from_ref(&report));
    let md = format!(
        "{table}\n<!-- format_version: {FORMAT_VERSION} -->\n<!-- config: {} -->\n",
        serde_json::to_string(&config).expect("config serializes")
    );
    write_text(&args.out.join("report.md"), &md)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: &'static str,
    pub alpha: [f64; 3],
    pub mean_fpr_at_95: f64,
    pub mean_auroc: f64,
}

/// Weights for the features-only, features+logits and all-inputs settings.
pub const ABLATION_SETTINGS: [(&str, [f64; 3]); 3] = [
    ("i", [1.0, 0.0, 0.0]),
    ("ii", [0.5, 0.5, 0.0]),
    ("iii", [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
];

pub fn cmd_ablate(args: &AblateArgs) -> Result<Vec<AblationRow>> {
    let temperature = resolve_temperature(args.temp, args.preset)?;
    let bundle = load_valid(&args.manifest)?;
    let rows = ABLATION_SETTINGS
        .iter()
        .map(|&(setting, alpha)| {
            let report = run_eval(&bundle, &ScorerSpec::Otod { alpha, temperature })?;
            Ok(AblationRow {
                setting,
                alpha,
                mean_fpr_at_95: report.average.fpr_at_95,
                mean_auroc: report.average.auroc,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let config = json!({
        "command": "ablate",
        "manifest": manifest_str(&args.manifest),
        "temperature": temperature,
        "tpr_target": DEFAULT_TPR,
    });
    let mut md = String::from(
        "| Setting | Features | Logits | Probs | FPR@95↓ | AUROC↑ |\n|---|:-:|:-:|:-:|---:|---:|\n",
    );
    for row in &rows {
        let mark = |a: f64| if a > 0.0 { "✓" } else { "✗" };
        let _ = writeln!(
            md,
            "| ({}) | {} | {} | {} | {:.2} | {:.2} |",
            row.setting,
            mark(row.alpha[0]),
            mark(row.alpha[1]),
            mark(row.alpha[2]),
            100.0 * row.mean_fpr_at_95,
            100.0 * row.mean_auroc
        );
    }
    let _ = write!(
        md,
        "\n<!-- format_version: {FORMAT_VERSION} -->\n<!-- config: {config} -->\n"
    );
    ensure_dir(&args.out)?;
    write_text(&args.out.join("ablation.md"), &md)?;
    write_json(
        &args.out.join("ablation.json"),
        &json!({ "format_version": FORMAT_VERSION, "config": config, "rows": rows }),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemperaturePoint {
    pub temperature: f64,
    pub mean_fpr_at_95: f64,
    pub mean_auroc: f64,
}

pub fn cmd_sweep_temp(args: &SweepTempArgs) -> Result<Vec<TemperaturePoint>> {
    if let Some(t) = args.temps.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "temperature grid contains non-positive {t}"
        )));
    }
    let alpha = resolve_alpha(args.alpha.as_deref())?;
    let bundle = load_valid(&args.manifest)?;
    let points = args
        .temps
        .iter()
        .map(|&temperature| {
            let report = run_eval(&bundle, &ScorerSpec::Otod { alpha, temperature })?;
            Ok(TemperaturePoint {
                temperature,
                mean_fpr_at_95: report.average.fpr_at_95,
                mean_auroc: report.average.auroc,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let config = json!({
        "command": "sweep-temp",
        "manifest": manifest_str(&args.manifest),
        "alpha": alpha,
        "temperatures": args.temps,
        "tpr_target": DEFAULT_TPR,
    });
    let mut csv = csv_header(&config);
    csv.push_str("T,mean_fpr,mean_auroc\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{},{}",
            p.temperature, p.mean_fpr_at_95, p.mean_auroc
        );
    }
    ensure_dir(&args.out)?;
    write_text(&args.out.join("sweep.csv"), &csv)?;
    Ok(points)
}

/// Default simulation spec with command-line overrides applied.
pub fn simulation_spec(args: &SimulateArgs) -> Result<GaussianSimSpec> {
    let defaults = GaussianSimSpec::default();
    let d = args.d.unwrap_or(defaults.d);
    let mut spec = GaussianSimSpec::isotropic(d, args.n.unwrap_or(defaults.n_per_side), args.seed);
    spec.mu_in = if d == defaults.d {
        defaults.mu_in
    } else {
        spec.mu_in
    };
    if let Some(shifts) = &args.shifts {
        spec.shift_grid = shifts.clone();
    }
    if let Some(mu) = &args.mu {
        spec.mu_in = match mu.as_slice() {
            [v] => vec![*v; d],
            many if many.len() == d => many.to_vec(),
            many => {
                return Err(Error::InvalidConfig(format!(
                    "--mu takes 1 or {d} values, got {}",
                    many.len()
                )))
            }
        };
    }
    if let Some(scale) = args.sigma_scale {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "--sigma-scale must be non-negative, got {scale}"
            )));
        }
        spec.sigma.iter_mut().for_each(|v| *v *= scale);
    }
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<SweepPoint>> {
    let spec = simulation_spec(args)?;
    let points = feature_md_sweep(&spec)?;
    let config = json!({ "command": "simulate", "spec": spec, "scorer": "feature_part" });
    let mut csv = csv_header(&config);
    csv.push_str("shift,tv_proxy,md,stderr,auroc\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.shift, p.tv_proxy, p.md_estimate, p.md_stderr, p.auroc
        );
    }
    ensure_dir(&args.out)?;
    write_text(&args.out.join("sweep.csv"), &csv)?;
    write_json(
        &args.out.join("sweep.json"),
        &json!({ "format_version": FORMAT_VERSION, "config": config, "points": points }),
    )?;
    Ok(points)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<std::path::PathBuf> {
    let spec = SyntheticSpec {
        d: args.d,
        k: args.k,
        n_train_per_class: args.n_train_per_class,
        n_test: args.n_test,
        n_ood: args.n_ood,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let bundle = synthetic_bundle(&spec)?;
    write_bundle(&bundle, &args.out)
}
