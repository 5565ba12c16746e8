//! Flat `key = value` configuration merged with command-line flags.
//!
//! Every key is also a `--key` flag of the same name; flags win over the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use affseq_core::Error;
use clap::{Arg, ArgMatches, Command};

pub struct KeySpec {
    pub key: &'static str,
    pub help: &'static str,
}

const fn key(key: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, help }
}

pub const THREADS: KeySpec = key(
    "threads",
    "worker threads (default: AFFSEQ_THREADS, else all cores); 1 is bit-deterministic",
);

pub const EXTRACT_KEYS: &[KeySpec] = &[
    key("wav", "input WAV file"),
    key("frames", "number of video frames N (rows of the output)"),
    key("out", "output feature file"),
    key("dsp.n-fft", "FFT size [2048]"),
    key("dsp.hop", "STFT hop in samples [512]"),
    key("dsp.n-mels", "mel bands [128]"),
    key("dsp.n-mfcc", "MFCC coefficients [40]"),
    key("dsp.fmin", "lowest filterbank frequency in Hz [0]"),
    key("dsp.fmax", "highest filterbank frequency in Hz [Nyquist]"),
    THREADS,
];

pub const TRAIN_KEYS: &[KeySpec] = &[
    key("manifest", "manifest CSV"),
    key("out", "output directory for best.ckpt, last.ckpt and history.csv"),
    key("epochs", "training epochs [10]"),
    key("batch-size", "windows per batch [32]"),
    key("learning-rate", "RMSprop learning rate [0.0001]"),
    key("seed", "seed for initialization, shuffling and dropout [0]"),
    key("shuffle", "shuffle windows every epoch: true|false [true]"),
    key("grad-clip", "global gradient-norm ceiling, or off [5]"),
    key("ccc-mode", "validation CCC aggregation: concat|per-video-mean [concat]"),
    key("model.variant", "fusion|audio_only|video_only [fusion]"),
    key("model.cell", "recurrent cell: gru|bilstm [gru]"),
    key("model.dropout", "dropout rate [0.25]"),
    key("model.width-divisor", "divide every hidden width by this [1]"),
    THREADS,
];

pub const EVALUATE_KEYS: &[KeySpec] = &[
    key("manifest", "manifest CSV"),
    key("checkpoint", "checkpoint to score"),
    key("predictions", "directory of <video_id>.csv predictions to score instead of a checkpoint"),
    key("split", "rows to score: train|val|all [val]"),
    key("ccc-mode", "concat|per-video-mean [concat]"),
    key("report", "also write the metric CSV here"),
    key("batch-size", "windows per forward pass [32]"),
    key("model.variant", "expected variant; must match the checkpoint"),
    key("model.cell", "expected cell; must match the checkpoint"),
    THREADS,
];

pub const PREDICT_KEYS: &[KeySpec] = &[
    key("manifest", "manifest CSV"),
    key("checkpoint", "checkpoint to run"),
    key("out", "output directory for <video_id>.csv files"),
    key("batch-size", "windows per forward pass [32]"),
    key("model.variant", "expected variant; must match the checkpoint"),
    key("model.cell", "expected cell; must match the checkpoint"),
    THREADS,
];

/// Adds `--config` and one `--<key>` flag per spec.
pub fn with_keys(mut cmd: Command, keys: &[KeySpec]) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .help("flat key = value file; any flag below may appear as a key"),
    );
    for k in keys {
        cmd = cmd.arg(Arg::new(k.key).long(k.key).value_name("VALUE").help(k.help));
    }
    cmd
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are
/// rejected with their line number.
pub fn parse_config(text: &str, keys: &[KeySpec]) -> Result<BTreeMap<String, String>, Error> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
        let (k, v) = (k.trim(), v.trim());
        if !keys.iter().any(|s| s.key == k) {
            return Err(Error::Config(format!("line {line_no}: unknown key {k:?}")));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {line_no}: duplicate key {k:?}")));
        }
    }
    Ok(out)
}

/// Resolved settings for one subcommand.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn resolve(matches: &ArgMatches, keys: &[KeySpec]) -> Result<Self, Error> {
        let mut values = match matches.get_one::<String>("config") {
            Some(p) => {
                let path = Path::new(p);
                let text = fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                parse_config(&text, keys)?
            }
            None => BTreeMap::new(),
        };
        for k in keys {
            if let Some(v) = matches.get_one::<String>(k.key) {
                values.insert(k.key.to_string(), v.clone());
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Error> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require(&self, key: &str) -> Result<&str, Error> {
        self.raw(key)
            .ok_or_else(|| Error::Config(format!("--{key} is required")))
    }
}
