//! Head training over fused (or single-view) pooled features, evaluation
//! metrics, the voting baseline and run-artifact writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::fusion::{fuse_views, FusionMode};
use crate::head::{argmax, lr_at, sgd_step, HeadGrads, HeadParams, SgdConfig, DEFAULT_INIT_STD};
use crate::losses::{casl_alpha, LossKind};
use crate::numerics::{global_average_pool, Rng};

const INIT_STREAM: u64 = 0x494E_4954;
const SHUFFLE_STREAM: u64 = 0x5348_5546 << 20;

/// What the head consumes: a fusion of both cameras or one camera alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Fused(FusionMode),
    /// 1-based camera id.
    View(usize),
}

impl FeatureSource {
    pub fn pooled(&self, sample: &Sample) -> Result<Vec<f32>> {
        match *self {
            FeatureSource::Fused(mode) => {
                let views: Vec<_> = sample.views.iter().collect();
                global_average_pool(&fuse_views(mode, &views)?.tensor)
            }
            FeatureSource::View(camera) => global_average_pool(sample.view(camera)?),
        }
    }

    /// Head input length for clips with `channels` channels.
    pub fn pooled_len(&self, channels: usize) -> usize {
        match *self {
            FeatureSource::Fused(mode) => mode.pooled_len(channels),
            FeatureSource::View(_) => channels,
        }
    }
}

/// Pooled head inputs and labels of one split, in dataset order.
#[derive(Debug, Clone)]
pub struct PooledSplit {
    pub ids: Vec<String>,
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl PooledSplit {
    pub fn build(dataset: &Dataset, split: Split, source: FeatureSource) -> Result<Self> {
        let mut out = PooledSplit {
            ids: Vec::new(),
            features: Vec::new(),
            labels: Vec::new(),
        };
        for s in dataset.split(split) {
            out.ids.push(s.id.clone());
            out.features.push(source.pooled(s)?);
            out.labels.push(s.label);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn predict(&self, params: &HeadParams) -> Result<Vec<usize>> {
        self.features
            .iter()
            .map(|x| Ok(params.forward_pooled(x)?.predicted()))
            .collect()
    }

    pub fn accuracy(&self, params: &HeadParams) -> Result<f64> {
        let preds = self.predict(params)?;
        let hits = preds
            .iter()
            .zip(&self.labels)
            .filter(|(p, y)| p == y)
            .count();
        Ok(hits as f64 / self.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Cyclical weight, present only when training with the cyclical loss.
    pub alpha: Option<f64>,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "epoch",
            "alpha",
            "lr",
            "train_loss",
            "train_accuracy",
            "val_accuracy",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                opt(r.alpha),
                r.lr.to_string(),
                r.train_loss.to_string(),
                r.train_accuracy.to_string(),
                opt(r.val_accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy (earliest
    /// on ties), or the final parameters when there is no validation split.
    pub params: HeadParams,
    pub history: TrainHistory,
    pub best_epoch: u32,
    pub best_val_accuracy: Option<f64>,
}

pub fn train(
    dataset: &Dataset,
    source: FeatureSource,
    loss: &LossKind,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    sgd.validate()?;
    loss.validate()?;
    if let Some(cfg) = loss.casl() {
        if sgd.epochs > cfg.total_epochs + 1 {
            return Err(Error::InvalidInput(format!(
                "{} epochs exceed the cyclical schedule length {}",
                sgd.epochs, cfg.total_epochs
            )));
        }
    }
    let train_set = PooledSplit::build(dataset, Split::Train, source)?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("train split is empty".into()));
    }
    let val_set = PooledSplit::build(dataset, Split::Val, source)?;
    let dim = train_set.features[0].len();
    let n_classes = dataset.n_classes;

    let mut params = HeadParams::init(
        n_classes,
        dim,
        DEFAULT_INIT_STD,
        &mut Rng::stream(seed, INIT_STREAM),
    )?;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, u32, HeadParams)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..sgd.epochs {
        let lr = lr_at(epoch, sgd)?;
        let alpha = loss.casl().map(|cfg| casl_alpha(epoch, cfg)).transpose()?;
        Rng::stream(seed, SHUFFLE_STREAM + epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks(sgd.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = HeadGrads::zeros(n_classes, dim);
            for &i in batch {
                let x = &train_set.features[i];
                let out = params.forward_pooled(x)?;
                let l = loss.evaluate(&out.probs, train_set.labels[i], epoch)?;
                if !l.value.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss in epoch {epoch}, batch {b} (sample {})",
                        train_set.ids[i]
                    )));
                }
                loss_sum += l.value;
                grads.accumulate(x, &l.grad_logits, scale)?;
            }
            sgd_step(&mut params, &grads, lr)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
        }

        let train_accuracy = train_set.accuracy(&params)?;
        let val_accuracy = if val_set.is_empty() {
            None
        } else {
            Some(val_set.accuracy(&params)?)
        };
        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, params.clone()));
            }
        }
        history.records.push(EpochRecord {
            epoch,
            alpha,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy,
            val_accuracy,
        });
    }

    Ok(match best {
        Some((acc, epoch, p)) => TrainOutcome {
            params: p,
            history,
            best_epoch: epoch,
            best_val_accuracy: Some(acc),
        },
        None => TrainOutcome {
            params,
            history,
            best_epoch: sgd.epochs - 1,
            best_val_accuracy: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_samples: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Precision, recall and F1 of a class with no support or no predictions are 0.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let n = confusion.len();
        if n == 0 || confusion.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidInput("no samples to score".into()));
        }
        let diag: u64 = (0..n).map(|k| confusion[k][k]).sum();
        let mut precision = Vec::with_capacity(n);
        let mut recall = Vec::with_capacity(n);
        let mut f1 = Vec::with_capacity(n);
        for k in 0..n {
            let tp = confusion[k][k];
            let predicted: u64 = confusion.iter().map(|r| r[k]).sum();
            let actual: u64 = confusion[k].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            });
        }
        Ok(Metrics {
            n_samples: total,
            accuracy: ratio(diag, total),
            macro_f1: f1.iter().sum::<f64>() / n as f64,
            per_class_precision: precision,
            per_class_recall: recall,
            per_class_f1: f1,
            confusion,
        })
    }

    pub fn from_predictions(
        n_classes: usize,
        labels: &[usize],
        predictions: &[usize],
    ) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            if y >= n_classes || p >= n_classes {
                return Err(Error::InvalidInput(format!(
                    "class index out of range ({y} / {p} for {n_classes} classes)"
                )));
            }
            confusion[y][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn min_recall(&self) -> f64 {
        self.per_class_recall
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// `n × n` integer matrix with a header row of class ids.
    pub fn write_confusion_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((0..self.confusion.len()).map(|k| k.to_string()))?;
        for row in &self.confusion {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn nonempty(set: PooledSplit, split: Split) -> Result<PooledSplit> {
    if set.is_empty() {
        return Err(Error::InvalidInput(format!("{split} split is empty")));
    }
    Ok(set)
}

pub fn evaluate(
    params: &HeadParams,
    dataset: &Dataset,
    split: Split,
    source: FeatureSource,
) -> Result<Metrics> {
    let set = nonempty(PooledSplit::build(dataset, split, source)?, split)?;
    let preds = set.predict(params)?;
    Metrics::from_predictions(dataset.n_classes, &set.labels, &preds)
}

/// Evaluates a head trained on one camera's pooled features.
pub fn single_view_evaluate(
    params: &HeadParams,
    dataset: &Dataset,
    split: Split,
    camera: usize,
) -> Result<Metrics> {
    evaluate(params, dataset, split, FeatureSource::View(camera))
}

/// Class holding the single largest probability across both views. Ties go
/// to the lower class, then to camera 1.
pub fn vote_predict(probs_v1: &[f64], probs_v2: &[f64]) -> Result<usize> {
    if probs_v1.len() != probs_v2.len() || probs_v1.is_empty() {
        return Err(Error::Shape(format!(
            "vote needs equal non-empty probability vectors ({} vs {})",
            probs_v1.len(),
            probs_v2.len()
        )));
    }
    let (a, b) = (argmax(probs_v1), argmax(probs_v2));
    Ok(match probs_v2[b].partial_cmp(&probs_v1[a]) {
        Some(std::cmp::Ordering::Greater) => b,
        Some(std::cmp::Ordering::Equal) => a.min(b),
        _ => a,
    })
}

/// Voting baseline over two single-camera heads.
pub fn vote_evaluate(
    head_v1: &HeadParams,
    head_v2: &HeadParams,
    dataset: &Dataset,
    split: Split,
) -> Result<Metrics> {
    let mut labels = Vec::new();
    let mut preds = Vec::new();
    for s in dataset.split(split) {
        let p1 = head_v1.forward_pooled(&FeatureSource::View(1).pooled(s)?)?;
        let p2 = head_v2.forward_pooled(&FeatureSource::View(2).pooled(s)?)?;
        labels.push(s.label);
        preds.push(vote_predict(&p1.probs, &p2.probs)?);
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput(format!("{split} split is empty")));
    }
    Metrics::from_predictions(dataset.n_classes, &labels, &preds)
}

/// Writes `id,label,f0..f{D-1}` rows of the head's pooled input for a split.
pub fn dump_embeddings(
    params: &HeadParams,
    dataset: &Dataset,
    split: Split,
    source: FeatureSource,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let path = path.as_ref();
    let set = nonempty(PooledSplit::build(dataset, split, source)?, split)?;
    if set.features[0].len() != params.dim() {
        return Err(Error::Shape(format!(
            "pooled features have length {}, head expects {}",
            set.features[0].len(),
            params.dim()
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..params.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for ((id, x), y) in set.ids.iter().zip(&set.features).zip(&set.labels) {
        let mut row = vec![id.clone(), y.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))?;
    Ok(set.len())
}
