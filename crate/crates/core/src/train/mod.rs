//! Training loop, validation, checkpoint selection and prediction export.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::dataset::{
    build_windows, fit_stats, merge_window_predictions, normalize, Modality, NormalizationStats,
    PerModality, SequenceWindow, Split, VideoRecord, WINDOW_LEN,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, CccMode, EvalReport};
use crate::model::{Model, ModelConfig};
use crate::nn::{clip_global_norm, masked_mse, Ctx, Mode, RmsProp, Rng, Tensor, DEFAULT_LR};

pub const HISTORY_HEADER: &str =
    "epoch,train_loss,val_ccc_valence,val_ccc_arousal,val_mse_valence,val_mse_arousal";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub ccc_mode: CccMode,
    pub model: ModelConfig,
    /// When set, `best.ckpt` and `history.csv` are written here as training runs.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: DEFAULT_LR,
            seed: 0,
            shuffle: true,
            grad_clip: Some(5.0),
            ccc_mode: CccMode::Concat,
            model: ModelConfig::default(),
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning-rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch-size must be ≥ 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("grad-clip must be > 0, got {c}")));
            }
        }
        if self.model.seq_len != WINDOW_LEN {
            return Err(Error::Config(format!(
                "model.seq-len must be {WINDOW_LEN}, got {}",
                self.model.seq_len
            )));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: EvalReport,
}

impl HistoryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.val.ccc_valence,
            self.val.ccc_arousal,
            self.val.mse_valence,
            self.val.mse_arousal
        )
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State with the best mean validation CCC (the initial state when no epoch ran).
    pub best: Checkpoint,
    /// State after the final epoch.
    pub last: Checkpoint,
    pub history: Vec<HistoryRow>,
}

/// Applies per-modality statistics to the tracks a model consumes.
pub fn normalize_record(
    record: &VideoRecord,
    stats: &NormalizationStats,
    modalities: &[Modality],
) -> Result<VideoRecord> {
    let mut features = PerModality::default();
    for &m in modalities {
        let s = stats
            .get(m)
            .ok_or_else(|| Error::Coverage(format!("no normalization statistics for {m}")))?;
        features.set(m, normalize(record.track(m)?, s)?);
    }
    Ok(VideoRecord {
        features,
        ..record.clone()
    })
}

fn check_widths(record: &VideoRecord, cfg: &ModelConfig) -> Result<()> {
    for &m in cfg.variant.modalities() {
        let t = record.track(m)?;
        if t.cols() != cfg.input_dim(m) {
            return Err(Error::WidthMismatch {
                modality: m.to_string(),
                expected: cfg.input_dim(m),
                found: t.cols(),
            });
        }
    }
    Ok(())
}

/// Stacks windows into `[B × 15 × dim]` inputs, `[B·15·2]` targets and `[B·15]` masks.
fn stack(
    windows: &[&SequenceWindow],
    modalities: &[Modality],
    cfg: &ModelConfig,
) -> Result<(PerModality<Tensor>, Vec<f64>, Vec<bool>)> {
    let b = windows.len();
    let mut inputs = PerModality::default();
    for &m in modalities {
        let dim = cfg.input_dim(m);
        let mut data = Vec::with_capacity(b * WINDOW_LEN * dim);
        for w in windows {
            data.extend_from_slice(
                w.features
                    .get(m)
                    .ok_or_else(|| Error::Coverage(format!("window lacks {m} features")))?,
            );
        }
        inputs.set(m, Tensor::from_vec(&[b, WINDOW_LEN, dim], data)?);
    }
    let targets = windows.iter().flat_map(|w| w.targets.iter().copied()).collect();
    let mask = windows.iter().flat_map(|w| w.mask.iter().copied()).collect();
    Ok((inputs, targets, mask))
}

/// Per-frame predictions for one (already normalized) record in inference mode.
pub fn predict_record(
    model: &mut Model,
    record: &VideoRecord,
    batch_size: usize,
) -> Result<Vec<[f64; 2]>> {
    let modalities = model.modalities();
    let windows = build_windows(0, record, modalities)?;
    let mut rng = Rng::seed_from_u64(0);
    let mut pieces = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size.max(1)) {
        let refs: Vec<&SequenceWindow> = chunk.iter().collect();
        let (inputs, _, _) = stack(&refs, modalities, model.config())?;
        let y = model.forward(&inputs, &mut Ctx::new(Mode::Infer, &mut rng))?;
        y.ensure_finite("predictions")?;
        for (w, rows) in chunk.iter().zip(y.data().chunks_exact(2 * WINDOW_LEN)) {
            let rows = rows.chunks_exact(2).map(|r| [r[0], r[1]]).collect();
            pieces.push((w.start, rows));
        }
    }
    merge_window_predictions(record.n_frames, &pieces)
}

fn validation_report(
    model: &mut Model,
    val: &[VideoRecord],
    batch_size: usize,
    mode: CccMode,
) -> Result<EvalReport> {
    let preds = val
        .iter()
        .map(|r| predict_record(model, r, batch_size))
        .collect::<Result<Vec<_>>>()?;
    let pairs = val
        .iter()
        .zip(&preds)
        .map(|(r, p)| {
            let labels = r
                .labels
                .as_ref()
                .ok_or_else(|| Error::Coverage(format!("{}: no labels", r.video_id)))?;
            Ok((r.video_id.as_str(), Some(p.as_slice()), labels))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(&pairs, mode)
}

fn at(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NumericFault(msg) => {
            Error::NumericFault(format!("epoch {epoch}, batch {batch}: {msg}"))
        }
        other => other,
    }
}

fn write_outputs(dir: &Path, best: Option<&Checkpoint>, history: &[HistoryRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(b) = best {
        save_checkpoint(dir.join(BEST_CHECKPOINT), b)?;
    }
    let p = dir.join(HISTORY_FILE);
    fs::write(&p, history_csv(history)).map_err(|e| Error::io(&p, e))
}

/// Trains on the `train` split and selects by mean validation CCC on `val`.
pub fn train(records: &[VideoRecord], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let modalities = cfg.model.variant.modalities();
    let split = |s: Split| records.iter().filter(move |r| r.split == s).collect::<Vec<_>>();
    let (train_set, val_set) = (split(Split::Train), split(Split::Val));
    if train_set.is_empty() {
        return Err(Error::Config("manifest has no train rows".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("manifest has no val rows".into()));
    }
    for r in train_set.iter().chain(&val_set) {
        r.validate()?;
        check_widths(r, &cfg.model)?;
        if r.labels.is_none() {
            return Err(Error::Coverage(format!("{}: no labels", r.video_id)));
        }
    }

    let stats = fit_stats(modalities, |m| {
        train_set.iter().filter_map(|r| r.features.get(m)).collect()
    })?;
    let norm_train = train_set
        .iter()
        .map(|r| normalize_record(r, &stats, modalities))
        .collect::<Result<Vec<_>>>()?;
    let norm_val = val_set
        .iter()
        .map(|r| normalize_record(r, &stats, modalities))
        .collect::<Result<Vec<_>>>()?;
    let mut windows = Vec::new();
    for (i, r) in norm_train.iter().enumerate() {
        windows.extend(
            build_windows(i, r, modalities)?
                .into_iter()
                .filter(|w| w.mask.iter().any(|m| *m)),
        );
    }
    if windows.is_empty() {
        return Err(Error::Config("train split has no labelled frames".into()));
    }

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut model = Model::build(&cfg.model, &mut rng)?;
    let mut opt = RmsProp::new(cfg.learning_rate);
    let initial = Checkpoint::capture(&model, &opt, &stats, 0, None);
    let mut best = initial.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    if let Some(dir) = &cfg.checkpoint_dir {
        write_outputs(dir, None, &history)?;
    }

    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SequenceWindow> = idx.iter().map(|&i| &windows[i]).collect();
            let (inputs, targets, mask) = stack(&batch, modalities, &cfg.model)?;
            let step = |model: &mut Model, opt: &mut RmsProp, rng: &mut Rng| -> Result<f64> {
                let y = model.forward(&inputs, &mut Ctx::new(Mode::Train, rng))?;
                y.ensure_finite("model output")?;
                let (loss, grad) = masked_mse(&y, &targets, &mask)?;
                if !loss.is_finite() {
                    return Err(Error::NumericFault(format!("loss is {loss}")));
                }
                model.zero_grad();
                model.backward(&grad)?;
                if let Some(c) = cfg.grad_clip {
                    let norm = clip_global_norm(model.params_mut().into_iter().map(|(_, p)| p), c);
                    if !norm.is_finite() {
                        return Err(Error::NumericFault(format!("gradient norm is {norm}")));
                    }
                }
                opt.step(model.params_mut())?;
                Ok(loss)
            };
            let loss = step(&mut model, &mut opt, &mut rng).map_err(|e| at(epoch, bi + 1, e))?;
            loss_sum += loss;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches as f64;
        let val = validation_report(&mut model, &norm_val, cfg.batch_size, cfg.ccc_mode)
            .map_err(|e| at(epoch, 0, e))?;
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val ccc {:.4}/{:.4}",
            val.ccc_valence,
            val.ccc_arousal
        );
        let score = val.mean_ccc();
        history.push(HistoryRow {
            epoch,
            train_loss,
            val,
        });
        let improved = score > best_score;
        if improved {
            best_score = score;
            best = Checkpoint::capture(&model, &opt, &stats, epoch, Some(score));
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            write_outputs(dir, improved.then_some(&best), &history)?;
        }
    }
    let last = if cfg.epochs == 0 {
        initial
    } else {
        let best_val = (best_score > f64::NEG_INFINITY).then_some(best_score);
        Checkpoint::capture(&model, &opt, &stats, cfg.epochs, best_val)
    };
    if cfg.epochs == 0 {
        if let Some(dir) = &cfg.checkpoint_dir {
            write_outputs(dir, Some(&best), &history)?;
        }
    }
    Ok(TrainOutcome {
        best,
        last,
        history,
    })
}

/// Model plus normalization statistics restored from a checkpoint.
pub struct Predictor {
    model: Model,
    stats: NormalizationStats,
    /// Windows per forward pass; affects throughput only.
    pub batch_size: usize,
}

impl Predictor {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            model: ckpt.restore_model()?,
            stats: ckpt.normalization()?,
            batch_size: 32,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Normalizes the record and returns one prediction per frame.
    pub fn predict(&mut self, record: &VideoRecord) -> Result<Vec<[f64; 2]>> {
        record.validate()?;
        check_widths(record, self.model.config())?;
        let norm = normalize_record(record, &self.stats, self.model.modalities())?;
        predict_record(&mut self.model, &norm, self.batch_size)
    }
}

/// `frame,valence,arousal`, one row per frame.
pub fn predictions_csv(preds: &[[f64; 2]]) -> String {
    let mut s = String::from("frame,valence,arousal\n");
    for (i, p) in preds.iter().enumerate() {
        s.push_str(&format!("{i},{},{}\n", p[0], p[1]));
    }
    s
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[[f64; 2]]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, predictions_csv(preds)).map_err(|e| Error::io(path, e))
}

/// Reads a prediction CSV written by [`write_predictions`].
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<[f64; 2]>> {
    let labels = crate::dataset::load_labels(path)?;
    Ok(labels
        .valence
        .iter()
        .zip(&labels.arousal)
        .map(|(v, a)| [*v, *a])
        .collect())
}

/// Writes `<video_id>.csv` for every record; returns the written paths.
pub fn predict_to_dir(
    records: &[VideoRecord],
    ckpt: &Checkpoint,
    out_dir: impl AsRef<Path>,
    batch_size: usize,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut predictor = Predictor::from_checkpoint(ckpt)?;
    predictor.batch_size = batch_size;
    let mut written = Vec::with_capacity(records.len());
    for r in records {
        let preds = predictor.predict(r)?;
        let p = out_dir.join(format!("{}.csv", r.video_id));
        write_predictions(&p, &preds)?;
        written.push(p);
    }
    Ok(written)
}

/// Scores a checkpoint on labelled records.
pub fn evaluate_checkpoint(
    records: &[VideoRecord],
    ckpt: &Checkpoint,
    mode: CccMode,
    batch_size: usize,
) -> Result<EvalReport> {
    let mut predictor = Predictor::from_checkpoint(ckpt)?;
    predictor.batch_size = batch_size;
    let preds = records
        .iter()
        .map(|r| predictor.predict(r))
        .collect::<Result<Vec<_>>>()?;
    let pairs = records
        .iter()
        .zip(&preds)
        .map(|(r, p)| {
            let labels = r
                .labels
                .as_ref()
                .ok_or_else(|| Error::Coverage(format!("{}: no labels", r.video_id)))?;
            Ok((r.video_id.as_str(), Some(p.as_slice()), labels))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(&pairs, mode)
}
