//! Concordance correlation coefficient and MSE over frame-level tracks.

use std::fmt;
use std::str::FromStr;

use crate::dataset::LabelTrack;
use crate::error::{Error, Result};

/// CCC value; `degenerate` is set when both sequences are constant with equal
/// means (0/0), in which case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ccc {
    pub value: f64,
    pub degenerate: bool,
}

/// `2·cov(p, g) / (var(p) + var(g) + (mean(p) − mean(g))²)` with population moments.
pub fn ccc(pred: &[f64], gold: &[f64]) -> Result<Ccc> {
    if pred.len() != gold.len() {
        return Err(Error::domain(format!(
            "ccc: {} predictions vs {} labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::domain("ccc needs at least 2 values"));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = gold.iter().sum::<f64>() / n;
    let (mut vp, mut vg, mut cov) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        let (dp, dg) = (p - mp, g - mg);
        vp += dp * dp;
        vg += dg * dg;
        cov += dp * dg;
    }
    let (vp, vg, cov) = (vp / n, vg / n, cov / n);
    let denom = vp + vg + (mp - mg) * (mp - mg);
    if denom == 0.0 {
        return Ok(Ccc {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Ccc {
        value: 2.0 * cov / denom,
        degenerate: false,
    })
}

fn mse(pred: &[f64], gold: &[f64]) -> f64 {
    pred.iter().zip(gold).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / pred.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CccMode {
    /// One CCC over the valid frames of all videos concatenated.
    #[default]
    Concat,
    /// Mean of per-video CCCs.
    PerVideoMean,
}

impl FromStr for CccMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(CccMode::Concat),
            "per-video-mean" => Ok(CccMode::PerVideoMean),
            other => Err(Error::Config(format!(
                "unknown ccc mode {other:?} (expected concat or per-video-mean)"
            ))),
        }
    }
}

impl fmt::Display for CccMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CccMode::Concat => "concat",
            CccMode::PerVideoMean => "per-video-mean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub ccc_valence: f64,
    pub ccc_arousal: f64,
    pub mse_valence: f64,
    pub mse_arousal: f64,
    pub n_frames_evaluated: usize,
}

impl EvalReport {
    /// Mean of the two CCCs, used for model selection.
    pub fn mean_ccc(&self) -> f64 {
        (self.ccc_valence + self.ccc_arousal) / 2.0
    }

    /// `metric,valence,arousal` CSV with `ccc` and `mse` rows.
    pub fn to_csv(&self) -> String {
        format!(
            "metric,valence,arousal\nccc,{},{}\nmse,{},{}\n",
            self.ccc_valence, self.ccc_arousal, self.mse_valence, self.mse_arousal
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames evaluated: {}", self.n_frames_evaluated)?;
        writeln!(f, "            valence   arousal")?;
        writeln!(f, "CCC      {:>10.4} {:>9.4}", self.ccc_valence, self.ccc_arousal)?;
        write!(f, "MSE      {:>10.4} {:>9.4}", self.mse_valence, self.mse_arousal)
    }
}

/// Valid-frame columns of one video.
fn valid_columns(pred: &[[f64; 2]], labels: &LabelTrack) -> [(Vec<f64>, Vec<f64>); 2] {
    let mut out: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for (i, p) in pred.iter().enumerate() {
        if labels.valid[i] {
            out[0].0.push(p[0]);
            out[0].1.push(labels.valence[i]);
            out[1].0.push(p[1]);
            out[1].1.push(labels.arousal[i]);
        }
    }
    out
}

/// `(video_id, predictions, labels)` for one video.
pub type ScoredVideo<'a> = (&'a str, Option<&'a [[f64; 2]]>, &'a LabelTrack);

/// Scores per-frame predictions against labels over valid frames.
///
/// `pairs` holds `(video_id, predictions, labels)`; a `None` prediction track is a
/// coverage error.
pub fn evaluate(
    pairs: &[ScoredVideo<'_>],
    mode: CccMode,
) -> Result<EvalReport> {
    let mut cols: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    let mut per_video: Vec<[f64; 2]> = Vec::new();
    for (id, pred, labels) in pairs {
        let pred = pred.ok_or_else(|| Error::Coverage(format!("no predictions for video {id}")))?;
        if pred.len() != labels.len() {
            return Err(Error::domain(format!(
                "video {id}: {} predicted frames vs {} labelled",
                pred.len(),
                labels.len()
            )));
        }
        let v = valid_columns(pred, labels);
        if mode == CccMode::PerVideoMean && v[0].0.len() >= 2 {
            per_video.push([ccc(&v[0].0, &v[0].1)?.value, ccc(&v[1].0, &v[1].1)?.value]);
        }
        for (acc, (p, g)) in cols.iter_mut().zip(v) {
            acc.0.extend(p);
            acc.1.extend(g);
        }
    }
    let n = cols[0].0.len();
    if n < 2 {
        return Err(Error::domain(format!("only {n} valid frames to evaluate")));
    }
    let (ccc_valence, ccc_arousal) = match mode {
        CccMode::Concat => (ccc(&cols[0].0, &cols[0].1)?.value, ccc(&cols[1].0, &cols[1].1)?.value),
        CccMode::PerVideoMean => {
            if per_video.is_empty() {
                return Err(Error::domain("no video has 2 or more valid frames"));
            }
            let k = per_video.len() as f64;
            (
                per_video.iter().map(|c| c[0]).sum::<f64>() / k,
                per_video.iter().map(|c| c[1]).sum::<f64>() / k,
            )
        }
    };
    Ok(EvalReport {
        ccc_valence,
        ccc_arousal,
        mse_valence: mse(&cols[0].0, &cols[0].1),
        mse_arousal: mse(&cols[1].0, &cols[1].1),
        n_frames_evaluated: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_concordance() {
        let x = [0.3, -0.2, 0.9, 0.1];
        assert!((ccc(&x, &x).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_values() {
        let c = ccc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().value;
        assert!((c - 8.0 / 22.0).abs() < 1e-12);
        let c = ccc(&[-1.0, 0.0, 1.0], &[0.0, 1.0, 2.0]).unwrap().value;
        assert!((c - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_errors() {
        let c = ccc(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
        assert!(ccc(&[1.0], &[1.0]).is_err());
        assert!(ccc(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn evaluate_perfect_and_constant() {
        let labels = LabelTrack::from_pairs(&[(0.1, 0.2), (-0.5, 0.4), (-5.0, -5.0), (0.7, -0.1)]);
        let pred: Vec<[f64; 2]> = (0..4).map(|i| [labels.valence[i], labels.arousal[i]]).collect();
        let r = evaluate(&[("a", Some(&pred), &labels)], CccMode::Concat).unwrap();
        assert_eq!(r.n_frames_evaluated, 3);
        assert!((r.ccc_valence - 1.0).abs() < 1e-12 && (r.ccc_arousal - 1.0).abs() < 1e-12);
        assert_eq!((r.mse_valence, r.mse_arousal), (0.0, 0.0));

        let grid: Vec<(f64, f64)> = (0..21).map(|i| (-1.0 + 0.1 * i as f64, 1.0 - 0.1 * i as f64)).collect();
        let labels = LabelTrack::from_pairs(&grid);
        let zeros = vec![[0.0, 0.0]; 21];
        let r = evaluate(&[("a", Some(&zeros), &labels)], CccMode::Concat).unwrap();
        assert_eq!(r.ccc_valence, 0.0);
        assert_eq!(r.ccc_arousal, 0.0);
    }

    #[test]
    fn evaluate_errors() {
        let labels = LabelTrack::from_pairs(&[(0.1, 0.2), (0.3, 0.4)]);
        assert!(matches!(
            evaluate(&[("a", None, &labels)], CccMode::Concat),
            Err(Error::Coverage(_))
        ));
        let short = vec![[0.0, 0.0]];
        assert!(evaluate(&[("a", Some(&short), &labels)], CccMode::Concat).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = EvalReport {
            ccc_valence: 1.0,
            ccc_arousal: 0.5,
            mse_valence: 0.0,
            mse_arousal: 0.25,
            n_frames_evaluated: 3,
        };
        assert_eq!(r.to_csv(), "metric,valence,arousal\nccc,1,0.5\nmse,0,0.25\n");
    }

    fn nonconstant() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 2..50)
            .prop_filter("non-constant", |v| v.iter().any(|x| (x - v[0]).abs() > 1e-6))
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..60)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ab = ccc(&a, &b).unwrap().value;
            let ba = ccc(&b, &a).unwrap().value;
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn shift_and_scale_penalized(x in nonconstant(), c in prop_oneof![-2.0f64..-0.01, 0.01f64..2.0]) {
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!(ccc(&x, &shifted).unwrap().value < 1.0);
            let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            prop_assert!(ccc(&x, &doubled).unwrap().value < 1.0);
        }
    }
}
