#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use affseq_core::dataset::{FeatureTrack, LabelTrack, Modality, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_affseq");

pub fn affseq(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("AFFSEQ_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn affseq")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// `frames × dim` rows of per-dimension sinusoids with random phase and
/// frequency in `[flo, fhi)` radians per frame.
pub fn sinusoid_rows(rng: &mut ChaCha8Rng, frames: usize, dim: usize, flo: f64, fhi: f64) -> Vec<Vec<f64>> {
    let phase: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let freq: Vec<f64> = (0..dim).map(|_| rng.gen_range(flo..fhi)).collect();
    (0..frames)
        .map(|t| (0..dim).map(|j| (freq[j] * t as f64 + phase[j]).sin()).collect())
        .collect()
}

/// Writes full-width feature files, label CSVs and a manifest for the given
/// `(video_id, split, n_frames)` rows; returns the manifest path.
pub fn write_toy_dataset(dir: &Path, videos: &[(&str, Split, usize)], seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = String::from(
        "video_id,split,audio_path,expnet_path,facepose_path,label_path,n_frames\n",
    );
    for &(id, split, n) in videos {
        let mut paths = Vec::new();
        let mut first_cols = Vec::new();
        for m in Modality::ALL {
            let rows = sinusoid_rows(&mut rng, n, m.width(), 0.2, 1.0);
            first_cols.push(rows.iter().map(|r| r[0]).collect::<Vec<_>>());
            let name = format!("{id}.{m}.feat");
            FeatureTrack::from_rows(m, m.width(), rows)
                .unwrap()
                .save(dir.join(&name))
                .unwrap();
            paths.push(name);
        }
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|t| {
                if t % 7 == 3 {
                    (-5.0, -5.0)
                } else {
                    (
                        (0.6 * first_cols[0][t] + 0.3 * first_cols[2][t]).tanh(),
                        (0.7 * first_cols[1][t]).tanh(),
                    )
                }
            })
            .collect();
        let label = format!("{id}.labels.csv");
        LabelTrack::from_pairs(&pairs).save(dir.join(&label)).unwrap();
        writeln!(
            manifest,
            "{id},{split},{},{},{},{label},{n}",
            paths[0], paths[1], paths[2]
        )
        .unwrap();
    }
    let p = dir.join("manifest.csv");
    std::fs::write(&p, manifest).unwrap();
    p
}

pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
