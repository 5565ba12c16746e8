use affseq_core::dataset::{
    build_windows, load_feature_track, merge_window_predictions, normalize, window_track,
    ColumnStats, FeatureTrack, LabelTrack, Modality, PerModality, Split, VideoRecord, WINDOW_LEN,
};
use proptest::prelude::*;

fn record(n: usize, dim: usize, valid: &[bool]) -> VideoRecord {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|t| (0..dim).map(|j| (t * dim + j) as f64).collect())
        .collect();
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|t| if valid[t] { (0.1, -0.1) } else { (-5.0, -5.0) })
        .collect();
    let mut features = PerModality::default();
    features.set(Modality::Audio, FeatureTrack::from_rows(Modality::Audio, dim, rows).unwrap());
    VideoRecord {
        video_id: "v".into(),
        split: Split::Train,
        n_frames: n,
        features,
        labels: Some(LabelTrack::from_pairs(&pairs)),
    }
}

#[test]
fn window_start_examples() {
    assert_eq!(window_track(15).unwrap(), vec![0]);
    assert_eq!(window_track(25).unwrap(), vec![0, 10]);
    assert_eq!(window_track(30).unwrap(), vec![0, 10, 15]);
}

#[test]
fn thirty_frames_merge_against_brute_force() {
    // Window k predicts the constant k + 1 on every frame.
    let starts = window_track(30).unwrap();
    let windows: Vec<(usize, Vec<[f64; 1]>)> = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, vec![[k as f64 + 1.0]; WINDOW_LEN]))
        .collect();
    let merged = merge_window_predictions(30, &windows).unwrap();
    assert_eq!(merged.len(), 30);
    for (f, got) in merged.iter().enumerate() {
        let covering: Vec<f64> = starts
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= f && f < s + WINDOW_LEN)
            .map(|(k, _)| k as f64 + 1.0)
            .collect();
        let want = covering.iter().sum::<f64>() / covering.len() as f64;
        assert_eq!(got[0], want, "frame {f}");
    }
}

#[test]
fn feature_file_round_trip_is_f32() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.affw");
    let rows = vec![vec![0.1; 168], vec![-1.0 / 3.0; 168]];
    FeatureTrack::from_rows(Modality::Audio, 168, rows).unwrap().save(&p).unwrap();
    let t = load_feature_track(&p, Modality::Audio).unwrap();
    assert_eq!(t.row(0)[5], 0.1f32 as f64);
    assert_eq!(t.row(1)[0], (-1.0f32 / 3.0) as f64);
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"AFFW");
    assert_eq!(bytes.len(), 16 + 4 * 2 * 168);
}

proptest! {
    #[test]
    fn windows_cover_every_frame(n in 1usize..800) {
        let starts = window_track(n).unwrap();
        let mut covered = vec![false; n];
        for &s in &starts {
            if n >= WINDOW_LEN {
                prop_assert!(s + WINDOW_LEN <= n);
            }
            for c in covered.iter_mut().skip(s).take(WINDOW_LEN) {
                *c = true;
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        prop_assert!(starts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn merging_constant_windows_is_idempotent(n in 1usize..300, c in -1.0..1.0f64) {
        let windows: Vec<(usize, Vec<[f64; 2]>)> = window_track(n)
            .unwrap()
            .into_iter()
            .map(|s| (s, vec![[c, -c]; WINDOW_LEN]))
            .collect();
        let merged = merge_window_predictions(n, &windows).unwrap();
        prop_assert_eq!(merged.len(), n);
        for v in merged {
            prop_assert!((v[0] - c).abs() < 1e-15 && (v[1] + c).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_frames_masked_everywhere(n in 1usize..120, valid in prop::collection::vec(any::<bool>(), 120)) {
        let rec = record(n, 3, &valid[..n]);
        let windows = build_windows(0, &rec, &[Modality::Audio]).unwrap();
        for w in &windows {
            for i in 0..WINDOW_LEN {
                let f = w.start + i;
                let expected = f < n && valid[f];
                prop_assert_eq!(w.mask[i], expected, "start {} offset {}", w.start, i);
            }
            // Padding repeats the last frame.
            let feats = w.features.get(Modality::Audio).unwrap();
            for i in 0..WINDOW_LEN {
                let f = (w.start + i).min(n - 1);
                prop_assert_eq!(&feats[3 * i..3 * i + 3], rec.track(Modality::Audio).unwrap().row(f));
            }
        }
    }

    #[test]
    fn fitted_stats_standardize_training_rows(
        a in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 4), 2..40),
        b in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 4), 2..40),
    ) {
        let ta = FeatureTrack::from_rows(Modality::Facepose, 4, a).unwrap();
        let tb = FeatureTrack::from_rows(Modality::Facepose, 4, b).unwrap();
        let stats = ColumnStats::fit([&ta, &tb]).unwrap();
        let (na, nb) = (normalize(&ta, &stats).unwrap(), normalize(&tb, &stats).unwrap());
        let rows: Vec<&[f64]> = (0..na.rows()).map(|i| na.row(i)).chain((0..nb.rows()).map(|i| nb.row(i))).collect();
        let n = rows.len() as f64;
        for j in 0..4 {
            if stats.std[j] <= 1e-6 {
                continue;
            }
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10, "column {} mean {}", j, mean);
            prop_assert!((var - 1.0).abs() < 1e-10, "column {} var {}", j, var);
        }
    }
}
