use std::fs;
use std::path::{Path, PathBuf};

use mifi::data::{
    keyframe_indices, keyframe_select_axis, load_features, save_dataset, save_features, Split,
    SynthConfig,
};
use mifi::harness::{dump_embeddings, evaluate, train, FeatureSource, Metrics};
use mifi::head::{flatten_grads, flatten_params, head_loss_at, sample_loss_and_grads, HeadParams};
use mifi::losses::{
    casl_alpha, loss_from_logits, loss_grad_wrt_logits, max_relative_error, CaslConfig, LossKind,
};
use mifi::numerics::{Rng, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{parse_source_label, source_label, LossName, RunConfig};
use crate::error::{config_err, io_err, CliError, CliResult};

pub const CONFIG_FILE: &str = "config.json";
pub const HEAD_FILE: &str = "head.mifi";
pub const HEAD_SIDECAR: &str = "head.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const SYNTH_FILE: &str = "synth.json";

/// Gradient-check failure threshold.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const GRADCHECK_STREAM: u64 = 0x4752_4144;
const GRADCHECK_CLASSES: usize = 16;
const GRADCHECK_HEAD_DIM: usize = 8;

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn to_json(value: &impl Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(config_err)?;
    s.push('\n');
    Ok(s)
}

pub fn synth(config: &SynthConfig, out: &Path) -> CliResult<()> {
    config.validate().map_err(config_err)?;
    let ds = mifi::data::generate_synthetic(config)?;
    save_dataset(&ds, out)?;
    write_text(&out.join(SYNTH_FILE), &to_json(config)?)?;
    println!(
        "wrote {} clips ({} drivers x {} classes) to {}",
        ds.samples.len(),
        config.n_drivers,
        config.n_classes,
        out.display()
    );
    Ok(())
}

/// Hyperparameters and provenance stored next to `head.mifi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct HeadSidecar {
    pub source: String,
    pub n_classes: usize,
    pub dim: usize,
    pub loss: LossName,
    pub casl: Option<CaslConfig>,
    pub seed: u64,
    pub best_epoch: u32,
    pub best_val_accuracy: Option<f64>,
}

/// Head as an `n_classes x (dim + 1)` tensor with the bias in the last column.
pub fn head_tensor(params: &HeadParams) -> CliResult<Tensor> {
    let (n, d) = (params.n_classes(), params.dim());
    let mut data = Vec::with_capacity(n * (d + 1));
    for k in 0..n {
        data.extend_from_slice(&params.weight()[k * d..(k + 1) * d]);
        data.push(params.bias()[k]);
    }
    Ok(Tensor::new(vec![n, d + 1], data)?)
}

pub fn head_from_tensor(t: &Tensor) -> CliResult<HeadParams> {
    let &[n, cols] = t.dims() else {
        return Err(mifi::Error::Shape(format!("head must be rank 2, got {:?}", t.dims())).into());
    };
    if cols < 2 {
        return Err(mifi::Error::Shape(format!("head has {cols} columns")).into());
    }
    let d = cols - 1;
    let mut weight = Vec::with_capacity(n * d);
    let mut bias = Vec::with_capacity(n);
    for row in t.data().chunks(cols) {
        weight.extend_from_slice(&row[..d]);
        bias.push(row[d]);
    }
    Ok(HeadParams::new(n, d, weight, bias)?)
}

fn write_metrics(metrics: &Metrics, dir: &Path) -> CliResult<()> {
    metrics.write_json(dir.join(METRICS_FILE))?;
    metrics.write_confusion_csv(dir.join(CONFUSION_FILE))?;
    Ok(())
}

pub fn train_run(config: &RunConfig) -> CliResult<()> {
    config.validate()?;
    let loss = config.loss_kind()?;
    let sgd = config.sgd()?;
    let source = config.source()?;
    let ds = config.dataset()?;
    let outcome = train(&ds, source, &loss, &sgd, config.seed)?;

    let out = &config.out;
    create_dir(out)?;
    write_text(&out.join(CONFIG_FILE), &config.to_json()?)?;
    save_features(&head_tensor(&outcome.params)?, out.join(HEAD_FILE))?;
    let sidecar = HeadSidecar {
        source: source_label(source),
        n_classes: outcome.params.n_classes(),
        dim: outcome.params.dim(),
        loss: config.loss,
        casl: loss.casl().copied(),
        seed: config.seed,
        best_epoch: outcome.best_epoch,
        best_val_accuracy: outcome.best_val_accuracy,
    };
    write_text(&out.join(HEAD_SIDECAR), &to_json(&sidecar)?)?;
    outcome.history.write_csv(out.join(HISTORY_FILE))?;
    let metrics = evaluate(&outcome.params, &ds, Split::Test, source)?;
    write_metrics(&metrics, out)?;
    dump_embeddings(
        &outcome.params,
        &ds,
        Split::Test,
        source,
        out.join(EMBEDDINGS_FILE),
    )?;

    let val = outcome
        .best_val_accuracy
        .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
    println!(
        "{} {}: best epoch {}, val accuracy {val}, test accuracy {:.4}, macro-F1 {:.4}",
        sidecar.source,
        loss.name(),
        outcome.best_epoch,
        metrics.accuracy,
        metrics.macro_f1
    );
    Ok(())
}

pub fn load_sidecar(run: &Path) -> CliResult<HeadSidecar> {
    let path = run.join(HEAD_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn eval_run(
    run: &Path,
    split: Split,
    view: Option<usize>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let config = RunConfig::load(Some(&run.join(CONFIG_FILE)))?;
    let sidecar = load_sidecar(run)?;
    let params = head_from_tensor(&load_features(run.join(HEAD_FILE))?)?;
    let source = match view {
        Some(v @ (1 | 2)) => FeatureSource::View(v),
        Some(v) => return Err(config_err(format!("view must be 1 or 2, got {v}"))),
        None => parse_source_label(&sidecar.source)?,
    };
    let ds = config.dataset()?;
    let metrics = evaluate(&params, &ds, split, source)?;

    let out = out.unwrap_or_else(|| {
        let mut name = format!("eval-{split}");
        if let FeatureSource::View(v) = source {
            name.push_str(&format!("-cam{v}"));
        }
        run.join(name)
    });
    create_dir(&out)?;
    write_metrics(&metrics, &out)?;
    println!(
        "{} on {split}: accuracy {:.4}, macro-F1 {:.4} ({} clips)",
        source_label(source),
        metrics.accuracy,
        metrics.macro_f1,
        metrics.n_samples
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckLine {
    pub name: &'static str,
    pub max_relative_error: f64,
}

/// Worst relative error of each loss kind and of the full head pipeline over
/// `cases` random draws. `corrupt` perturbs the analytic gradients.
pub fn gradcheck_report(
    config: &RunConfig,
    cases: usize,
    h: f64,
    corrupt: bool,
) -> CliResult<Vec<GradcheckLine>> {
    if cases == 0 {
        return Err(config_err("gradcheck needs at least one case"));
    }
    let casl = config.casl();
    let kinds = [
        LossKind::CrossEntropy,
        LossKind::Focal {
            gamma: config.fl_gamma,
        },
        LossKind::Asymmetric {
            lambda1: config.asl_lambda1,
            lambda2: config.asl_lambda2,
        },
        LossKind::Cyclical(casl),
    ];
    for k in &kinds {
        k.validate().map_err(config_err)?;
    }
    let mut rng = Rng::stream(config.seed, GRADCHECK_STREAM);
    let mut lines = Vec::new();
    for kind in &kinds {
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let logits: Vec<f64> = (0..GRADCHECK_CLASSES)
                .map(|_| 2.0 * rng.standard_normal())
                .collect();
            let target = rng.below(GRADCHECK_CLASSES);
            let epoch = rng.below(casl.total_epochs as usize + 1) as u32;
            let mut analytic = loss_grad_wrt_logits(kind, &logits, target, epoch)?;
            if corrupt {
                analytic[target] += 1e-2;
            }
            let err = max_relative_error(&analytic, &logits, h, |z| {
                Ok(loss_from_logits(kind, z, target, epoch)?.value)
            })?;
            worst = worst.max(err);
        }
        lines.push(GradcheckLine {
            name: kind.name(),
            max_relative_error: worst,
        });
    }

    let mut worst = 0.0f64;
    for case in 0..cases {
        let kind = &kinds[case % kinds.len()];
        let params = HeadParams::init(GRADCHECK_CLASSES, GRADCHECK_HEAD_DIM, 0.5, &mut rng)?;
        let pooled: Vec<f32> = (0..GRADCHECK_HEAD_DIM)
            .map(|_| rng.standard_normal() as f32)
            .collect();
        let target = rng.below(GRADCHECK_CLASSES);
        let epoch = rng.below(casl.total_epochs as usize + 1) as u32;
        let (_, grads) = sample_loss_and_grads(&params, &pooled, target, kind, epoch)?;
        let mut analytic = flatten_grads(&grads);
        if corrupt {
            analytic[0] += 1e-2;
        }
        let err = max_relative_error(&analytic, &flatten_params(&params), h, |t| {
            head_loss_at(t, GRADCHECK_CLASSES, &pooled, target, kind, epoch)
        })?;
        worst = worst.max(err);
    }
    lines.push(GradcheckLine {
        name: "head",
        max_relative_error: worst,
    });
    Ok(lines)
}

pub fn gradcheck(config: &RunConfig, cases: usize, h: f64, corrupt: bool) -> CliResult<()> {
    let lines = gradcheck_report(config, cases, h, corrupt)?;
    let mut failed = Vec::new();
    for line in &lines {
        let ok = line.max_relative_error < GRADCHECK_TOLERANCE;
        println!(
            "{:<5} max relative error {:.3e} {}",
            line.name,
            line.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(line.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

/// `epoch,beta=<b>...` with one row per epoch in `0..=total_epochs`.
pub fn alpha_sweep_csv(betas: &[f64], total_epochs: u32) -> CliResult<String> {
    if betas.is_empty() {
        return Err(config_err("at least one beta is required"));
    }
    let configs = betas
        .iter()
        .map(|&beta| {
            let cfg = CaslConfig {
                beta,
                total_epochs,
                ..CaslConfig::default()
            };
            cfg.validate().map_err(config_err)?;
            Ok(cfg)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut csv = String::from("epoch");
    for b in betas {
        csv.push_str(&format!(",beta={b}"));
    }
    csv.push('\n');
    for e in 0..=total_epochs {
        csv.push_str(&e.to_string());
        for cfg in &configs {
            csv.push_str(&format!(",{}", casl_alpha(e, cfg)?));
        }
        csv.push('\n');
    }
    Ok(csv)
}

pub fn sweep_alpha(betas: &[f64], total_epochs: u32, out: Option<&Path>) -> CliResult<()> {
    let csv = alpha_sweep_csv(betas, total_epochs)?;
    match out {
        Some(path) => write_text(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn keyframes(input: &Path, n: usize, axis: usize, out: Option<&Path>) -> CliResult<()> {
    let t = load_features(input)?;
    let idx = keyframe_indices(&t, axis, n)?;
    let line: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
    println!("{}", line.join(" "));
    if let Some(path) = out {
        save_features(&keyframe_select_axis(&t, axis, n)?, path)?;
    }
    Ok(())
}
