use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rebasin_core::checkpoint::{read_checkpoint, write_checkpoint};
use rebasin_core::counterexample::{build_counterexample, classification_error, verify_no_lmc};
use rebasin_core::data::gen_quadrant_dataset;
use rebasin_core::eval::{calibration, interpolation_curve, loss_barrier};
use rebasin_core::matching::{
    activation_matching, correlation_matching, greedy_unidirectional_matching, soblap_objective, ste_matching,
    weight_matching_with, SteConfig, WeightMatchingOptions,
};
use rebasin_core::train::{record_activations, train_mlp_with, TrainConfig, DEFAULT_ACTIVATION_ROWS};
use rebasin_core::{apply_permutation, loss_and_accuracy, Dataset, ModelWeights, PermutationSet, Split};
use serde_json::{json, Value};

use crate::data::DataArgs;
use crate::Method;

pub struct Report {
    pub json: Value,
    /// False when a self-check failed; the process then exits non-zero.
    pub ok: bool,
}

impl From<Value> for Report {
    fn from(json: Value) -> Self {
        Report { json, ok: true }
    }
}

fn read_model(path: &Path) -> Result<ModelWeights> {
    read_checkpoint(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn scores(model: &ModelWeights, train: &Dataset, test: &Dataset) -> Result<Value> {
    Ok(json!({
        "train": loss_and_accuracy(model, train)?,
        "test": loss_and_accuracy(model, test)?,
    }))
}

pub fn train(config: Option<&Path>, data: &DataArgs, seed: Option<u64>, out: &Path) -> Result<Report> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            TrainConfig::from_text(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let (train, test) = data.load()?;
    eprintln!("training {:?} on {} ({} rows)", cfg.widths, data.describe(), train.len());
    let model = train_mlp_with(&cfg, &train, |epoch, _| {
        if epoch > 0 {
            eprintln!("epoch {epoch}/{}", cfg.epochs);
        }
    })?;
    write_checkpoint(out, &model)?;
    let mut json = scores(&model, &train, &test)?;
    json["checkpoint"] = json!(out);
    json["config"] = serde_json::to_value(&cfg)?;
    Ok(json.into())
}

#[allow(clippy::too_many_arguments)]
pub fn align(
    a_path: &Path,
    b_path: &Path,
    method: Method,
    data: &DataArgs,
    seed: u64,
    steps: usize,
    perm_out: &Path,
    out: &Path,
) -> Result<Report> {
    let a = read_model(a_path)?;
    let b = read_model(b_path)?;
    a.check_same_shape(&b)?;
    let mut extra = json!({});
    let perms = match method {
        Method::Weight => {
            let r = weight_matching_with(&a, &b, seed, &WeightMatchingOptions::default(), |_, _| {})?;
            eprintln!("weight matching: {} passes, converged {}", r.passes, r.converged);
            extra = json!({ "passes": r.passes, "converged": r.converged });
            r.perms
        }
        Method::Greedy => greedy_unidirectional_matching(&a, &b)?,
        Method::Activation | Method::Correlation => {
            let (train, _) = data.load()?;
            let za = record_activations(&a, &train, DEFAULT_ACTIVATION_ROWS)?;
            let zb = record_activations(&b, &train, DEFAULT_ACTIVATION_ROWS)?;
            if method == Method::Activation {
                activation_matching(&za, &zb)?
            } else {
                let r = correlation_matching(&za, &zb)?;
                if !r.zero_variance.is_empty() {
                    eprintln!("warning: {} constant units had their correlations zeroed", r.zero_variance.len());
                }
                extra = json!({ "zero_variance_units": r.zero_variance.len() });
                r.perms
            }
        }
        Method::Ste => {
            let (train, _) = data.load()?;
            let cfg = SteConfig {
                steps,
                seed,
                ..SteConfig::default()
            };
            let r = ste_matching(&a, &b, &train, &cfg)?;
            eprintln!("STE: best candidate at step {} of {steps}", r.best_step);
            extra = json!({ "best_step": r.best_step, "best_train_midpoint_loss": r.best_loss, "candidates": r.candidates });
            r.perms
        }
    };
    let before = soblap_objective(&a, &b, &PermutationSet::identity_for(&b))?;
    let after = soblap_objective(&a, &b, &perms)?;
    write_text(perm_out, &perms.to_text())?;
    write_checkpoint(out, &apply_permutation(&b, &perms)?)?;
    Ok(json!({
        "method": format!("{method:?}").to_lowercase(),
        "soblap_before": before,
        "soblap_after": after,
        "identity": perms.is_identity(),
        "perm_file": perm_out,
        "checkpoint": out,
        "details": extra,
    })
    .into())
}

pub fn interp_barrier(a_path: &Path, b_path: &Path, data: &DataArgs, points: usize, out: &Path) -> Result<Report> {
    let a = read_model(a_path)?;
    let b = read_model(b_path)?;
    a.check_same_shape(&b)?;
    let (train, test) = data.load()?;
    let curve = interpolation_curve(&a, &b, &train, &test, points)?;
    write_text(out, &curve.to_csv())?;
    Ok(json!({
        "points": points,
        "csv": out,
        "train": loss_barrier(&curve, Split::Train)?,
        "test": loss_barrier(&curve, Split::Test)?,
    })
    .into())
}

pub fn merge_many(paths: &[PathBuf], data: &DataArgs, seed: u64, out: &Path) -> Result<Report> {
    let models = paths.iter().map(|p| read_model(p)).collect::<Result<Vec<_>>>()?;
    let (train, test) = data.load()?;
    let r = rebasin_core::matching::merge_many(&models, seed)?;
    eprintln!("merge: {} rounds, converged {}", r.rounds, r.converged);
    write_checkpoint(out, &r.merged)?;
    let describe = |m: &ModelWeights| -> Result<Value> {
        let mut v = scores(m, &train, &test)?;
        v["test_ece"] = json!(calibration(m, &test)?.ece);
        Ok(v)
    };
    let inputs = paths
        .iter()
        .zip(&models)
        .map(|(p, m)| {
            let mut v = describe(m)?;
            v["checkpoint"] = json!(p);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut merged = describe(&r.merged)?;
    merged["checkpoint"] = json!(out);
    Ok(json!({
        "rounds": r.rounds,
        "converged": r.converged,
        "models": inputs,
        "merged": merged,
    })
    .into())
}

pub fn counterexample(samples: usize, points: usize, seed: u64, out: &Path) -> Result<Report> {
    let pair = build_counterexample();
    let data = gen_quadrant_dataset::<f64>(samples, seed)?;
    let endpoint_errors = [classification_error(&pair.a, &data)?, classification_error(&pair.b, &data)?];
    let report = verify_no_lmc(&pair, &data, points)?;
    write_text(out, &report.to_csv())?;
    let pass = report.all_positive && endpoint_errors == [0.0, 0.0];
    let barriers: Vec<String> = report.curves.iter().map(|c| format!("{:.4}", c.barrier)).collect();
    eprintln!(
        "{}: {} permutations, interior error barriers [{}]",
        if pass { "PASS" } else { "FAIL" },
        report.curves.len(),
        barriers.join(", ")
    );
    let curves: Vec<Value> = report
        .curves
        .iter()
        .map(|c| {
            json!({
                "perm_id": c.perm_id,
                "perms": c.perms,
                "barrier": c.barrier,
                "max_error": c.max_error,
                "argmax_lambda": c.argmax_lambda,
            })
        })
        .collect();
    Ok(Report {
        json: json!({
            "result": if pass { "PASS" } else { "FAIL" },
            "samples": samples,
            "endpoint_errors": endpoint_errors,
            "min_barrier": report.min_barrier(),
            "curves": curves,
            "csv": out,
        }),
        ok: pass,
    })
}
