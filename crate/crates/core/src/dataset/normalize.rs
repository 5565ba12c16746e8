use crate::dataset::{FeatureTrack, Modality, PerModality};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-column mean and standard deviation of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl ColumnStats {
    /// Statistics over the concatenated rows of `tracks`.
    pub fn fit<'a>(tracks: impl IntoIterator<Item = &'a FeatureTrack>) -> Result<Self> {
        let tracks: Vec<&FeatureTrack> = tracks.into_iter().collect();
        let cols = tracks
            .first()
            .map(|t| t.cols())
            .ok_or_else(|| Error::domain("no tracks to fit normalization statistics on"))?;
        if tracks.iter().any(|t| t.cols() != cols) {
            return Err(Error::domain("tracks disagree on column count"));
        }
        let n: usize = tracks.iter().map(|t| t.rows()).sum();
        if n == 0 {
            return Err(Error::domain("no rows to fit normalization statistics on"));
        }
        let mut mean = vec![0.0; cols];
        for t in &tracks {
            for r in 0..t.rows() {
                for (m, v) in mean.iter_mut().zip(t.row(r)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        // Two-pass variance.
        let mut var = vec![0.0; cols];
        for t in &tracks {
            for r in 0..t.rows() {
                for ((s, v), m) in var.iter_mut().zip(t.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Normalization statistics for every modality the model consumes.
pub type NormalizationStats = PerModality<ColumnStats>;

/// Column-wise z-score `(x - mean) / max(std, 1e-8)`.
pub fn normalize(track: &FeatureTrack, stats: &ColumnStats) -> Result<FeatureTrack> {
    if track.cols() != stats.dim() {
        return Err(Error::domain(format!(
            "{} track has {} columns but statistics have {}",
            track.modality(),
            track.cols(),
            stats.dim()
        )));
    }
    let mut out = track.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s.max(STD_FLOOR);
        }
    }
    Ok(out)
}

/// Fits statistics for `modalities` on the given training tracks.
pub fn fit_stats<'a>(
    modalities: &[Modality],
    train_tracks: impl Fn(Modality) -> Vec<&'a FeatureTrack>,
) -> Result<NormalizationStats> {
    let mut stats = NormalizationStats::default();
    for &m in modalities {
        stats.set(m, ColumnStats::fit(train_tracks(m))?);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(rows: Vec<Vec<f64>>) -> FeatureTrack {
        let cols = rows[0].len();
        FeatureTrack::from_rows(Modality::Audio, cols, rows).unwrap()
    }

    #[test]
    fn mean_rows_map_to_zero() {
        let stats = ColumnStats {
            mean: vec![1.0, -2.0],
            std: vec![3.0, 0.5],
        };
        let t = track(vec![vec![1.0, -2.0]; 4]);
        assert!(normalize(&t, &stats).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_column_stays_finite() {
        let t = track(vec![vec![7.0, 1.0], vec![7.0, 3.0]]);
        let stats = ColumnStats::fit([&t]).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let n = normalize(&t, &stats).unwrap();
        assert!(n.data().iter().all(|v| v.is_finite()));
        assert_eq!(n.row(0), &[0.0, -1.0]);
        assert_eq!(n.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn z_score() {
        let t = track(vec![vec![1.0], vec![3.0]]);
        let stats = ColumnStats {
            mean: vec![2.0],
            std: vec![1.0],
        };
        assert_eq!(normalize(&t, &stats).unwrap().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let t = track(vec![vec![1.0, 2.0]]);
        let stats = ColumnStats {
            mean: vec![0.0],
            std: vec![1.0],
        };
        assert!(normalize(&t, &stats).is_err());
    }
}
