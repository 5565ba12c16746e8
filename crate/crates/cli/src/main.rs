//! `affseq`: audio feature extraction, training, evaluation and prediction.
//!
//! Exit codes: 0 success, 2 I/O failure, 3 domain or configuration error,
//! 4 numeric fault.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affseq_core::audio_io::read_wav;
use affseq_core::dataset::{load_manifest, load_records, ManifestEntry, Split};
use affseq_core::dsp::{extract_audio_track, DspParams};
use affseq_core::metrics::{evaluate, CccMode, EvalReport};
use affseq_core::model::{Cell, ModelConfig, Variant};
use affseq_core::train::{
    evaluate_checkpoint, history_csv, load_checkpoint, predict_to_dir, read_predictions,
    save_checkpoint, train, Checkpoint, TrainConfig,
};
use affseq_core::Error;
use clap::error::ErrorKind;
use clap::{ArgMatches, Command};

use config::{with_keys, KeySpec, Settings, EVALUATE_KEYS, EXTRACT_KEYS, PREDICT_KEYS, TRAIN_KEYS};

type Result<T> = std::result::Result<T, Error>;

fn cli() -> Command {
    Command::new("affseq")
        .about("Continuous valence/arousal estimation from audio and visual features")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .subcommand(with_keys(
            Command::new("extract-audio").about("Write an N×168 audio feature file from a WAV"),
            EXTRACT_KEYS,
        ))
        .subcommand(with_keys(
            Command::new("train").about("Train on the manifest's train split, select on val"),
            TRAIN_KEYS,
        ))
        .subcommand(with_keys(
            Command::new("evaluate").about("Report CCC and MSE against labels"),
            EVALUATE_KEYS,
        ))
        .subcommand(with_keys(
            Command::new("predict").about("Write per-frame predictions for every manifest row"),
            PREDICT_KEYS,
        ))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        2
    } else if e.is_numeric_fault() {
        4
    } else {
        3
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(matches: &ArgMatches) -> Result<()> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let keys: &[KeySpec] = match name {
        "extract-audio" => EXTRACT_KEYS,
        "train" => TRAIN_KEYS,
        "evaluate" => EVALUATE_KEYS,
        "predict" => PREDICT_KEYS,
        other => unreachable!("unregistered subcommand {other}"),
    };
    let s = Settings::resolve(sub, keys)?;
    init_threads(&s)?;
    match name {
        "extract-audio" => cmd_extract_audio(&s),
        "train" => cmd_train(&s),
        "evaluate" => cmd_evaluate(&s),
        _ => cmd_predict(&s),
    }
}

fn init_threads(s: &Settings) -> Result<()> {
    let threads = match s.get::<usize>("threads")? {
        Some(n) => Some(n),
        None => match std::env::var("AFFSEQ_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Error::Config(format!("AFFSEQ_THREADS: cannot parse {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn cmd_extract_audio(s: &Settings) -> Result<()> {
    let wav = s.require("wav")?;
    let frames: usize = s
        .get("frames")?
        .ok_or_else(|| Error::Config("--frames is required".into()))?;
    let out = s.require("out")?;
    let d = DspParams::default();
    let params = DspParams {
        n_fft: s.get_or("dsp.n-fft", d.n_fft)?,
        stft_hop: s.get_or("dsp.hop", d.stft_hop)?,
        n_mels: s.get_or("dsp.n-mels", d.n_mels)?,
        n_mfcc: s.get_or("dsp.n-mfcc", d.n_mfcc)?,
        fmin: s.get_or("dsp.fmin", d.fmin)?,
        fmax: s.get("dsp.fmax")?,
        log_floor: d.log_floor,
    };
    let clip = read_wav(wav)?;
    let track = extract_audio_track(&clip, frames, &params)?;
    track.save(out)?;
    println!("{out}: rows={} cols={}", track.rows(), track.cols());
    Ok(())
}

fn manifest(s: &Settings) -> Result<Vec<ManifestEntry>> {
    load_manifest(s.require("manifest")?)
}

fn cmd_train(s: &Settings) -> Result<()> {
    let entries = manifest(s)?;
    let out = PathBuf::from(s.require("out")?);
    let d = TrainConfig::default();
    let md = ModelConfig::default();
    let grad_clip = match s.raw("grad-clip") {
        None => d.grad_clip,
        Some("off") | Some("none") => None,
        Some(_) => s.get("grad-clip")?,
    };
    let cfg = TrainConfig {
        epochs: s.get_or("epochs", d.epochs)?,
        batch_size: s.get_or("batch-size", d.batch_size)?,
        learning_rate: s.get_or("learning-rate", d.learning_rate)?,
        seed: s.get_or("seed", d.seed)?,
        shuffle: s.get_or("shuffle", d.shuffle)?,
        grad_clip,
        ccc_mode: s.get_or("ccc-mode", d.ccc_mode)?,
        model: ModelConfig {
            variant: s.get_or("model.variant", md.variant)?,
            cell: s.get_or("model.cell", md.cell)?,
            dropout: s.get_or("model.dropout", md.dropout)?,
            width_divisor: s.get_or("model.width-divisor", md.width_divisor)?,
            ..md
        },
        checkpoint_dir: Some(out.clone()),
    };
    cfg.validate()?;
    let records = load_records(&entries, cfg.model.variant.modalities(), true)?;
    let outcome = train(&records, &cfg)?;
    save_checkpoint(out.join("last.ckpt"), &outcome.last)?;
    let hist = out.join(affseq_core::train::HISTORY_FILE);
    fs::write(&hist, history_csv(&outcome.history)).map_err(|e| Error::Io {
        path: hist.clone(),
        source: e,
    })?;
    match outcome.best.best_val {
        Some(v) => println!(
            "best epoch {} (mean val CCC {v:.4}); wrote {}",
            outcome.best.epoch,
            out.display()
        ),
        None => println!("no epochs run; wrote initial checkpoint to {}", out.display()),
    }
    Ok(())
}

/// Fails when `--model.*` keys disagree with the checkpoint.
fn check_expected(s: &Settings, ckpt: &Checkpoint) -> Result<()> {
    let mut expected = ckpt.model.clone();
    if let Some(v) = s.get::<Variant>("model.variant")? {
        expected.variant = v;
    }
    if let Some(c) = s.get::<Cell>("model.cell")? {
        expected.cell = c;
    }
    ckpt.check_config(&expected)
}

fn load_checked(s: &Settings) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(s.require("checkpoint")?)?;
    check_expected(s, &ckpt)?;
    Ok(ckpt)
}

fn select_rows(s: &Settings, entries: Vec<ManifestEntry>) -> Result<Vec<ManifestEntry>> {
    let keep: Option<Split> = match s.raw("split").unwrap_or("val") {
        "all" => None,
        other => Some(other.parse()?),
    };
    let rows: Vec<_> = entries
        .into_iter()
        .filter(|e| keep.is_none_or(|k| e.split == k))
        .collect();
    if rows.is_empty() {
        return Err(Error::Config("no manifest rows in the selected split".into()));
    }
    Ok(rows)
}

fn cmd_evaluate(s: &Settings) -> Result<()> {
    let mode: CccMode = s.get_or("ccc-mode", CccMode::Concat)?;
    let entries = select_rows(s, manifest(s)?)?;
    let report: EvalReport = match (s.raw("checkpoint"), s.raw("predictions")) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either --checkpoint or --predictions, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config("--checkpoint or --predictions is required".into()))
        }
        (Some(_), None) => {
            let ckpt = load_checked(s)?;
            let records = load_records(&entries, ckpt.model.variant.modalities(), true)?;
            evaluate_checkpoint(&records, &ckpt, mode, batch_size(s)?)?
        }
        (None, Some(dir)) => {
            let records = load_records(&entries, &[], true)?;
            let preds = records
                .iter()
                .map(|r| {
                    let p = Path::new(dir).join(format!("{}.csv", r.video_id));
                    if p.exists() {
                        read_predictions(&p).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let pairs = records
                .iter()
                .zip(&preds)
                .map(|(r, p)| {
                    (
                        r.video_id.as_str(),
                        p.as_deref(),
                        r.labels.as_ref().expect("labels were requested"),
                    )
                })
                .collect::<Vec<_>>();
            evaluate(&pairs, mode)?
        }
    };
    println!("{report}");
    if let Some(p) = s.raw("report") {
        fs::write(p, report.to_csv()).map_err(|e| Error::Io {
            path: PathBuf::from(p),
            source: e,
        })?;
    }
    Ok(())
}

fn batch_size(s: &Settings) -> Result<usize> {
    match s.get_or("batch-size", 32)? {
        0 => Err(Error::Config("batch-size must be ≥ 1".into())),
        b => Ok(b),
    }
}

fn cmd_predict(s: &Settings) -> Result<()> {
    let entries = manifest(s)?;
    let ckpt = load_checked(s)?;
    let out = s.require("out")?;
    let records = load_records(&entries, ckpt.model.variant.modalities(), false)?;
    let written = predict_to_dir(&records, &ckpt, out, batch_size(s)?)?;
    println!("wrote {} prediction files to {out}", written.len());
    Ok(())
}
