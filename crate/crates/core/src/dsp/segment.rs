use crate::error::{Error, Result};

/// Half-overlapping split of a clip into one segment per video frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPlan {
    pub segment_len: usize,
    pub hop: usize,
    pub starts: Vec<usize>,
}

impl SegmentPlan {
    pub fn n_segments(&self) -> usize {
        self.starts.len()
    }

    /// Sample range of segment `i`.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.starts[i]..self.starts[i] + self.segment_len
    }
}

/// Splits `clip_len` samples into `n_frames` segments overlapping by half.
///
/// With `N > 1` the segment length is `floor(2T / (N + 1))`, consecutive
/// segments start `floor(L / 2)` apart and the last one is anchored to end
/// exactly at the clip end.
pub fn plan_segments(clip_len: usize, n_frames: usize) -> Result<SegmentPlan> {
    if n_frames == 0 {
        return Err(Error::domain("n_frames must be ≥ 1"));
    }
    if clip_len < n_frames {
        return Err(Error::domain(format!(
            "clip has {clip_len} samples, fewer than the {n_frames} frames requested"
        )));
    }
    if n_frames == 1 {
        return Ok(SegmentPlan {
            segment_len: clip_len,
            hop: clip_len / 2,
            starts: vec![0],
        });
    }
    let segment_len = 2 * clip_len / (n_frames + 1);
    let hop = segment_len / 2;
    let mut starts: Vec<usize> = (0..n_frames - 1).map(|i| i * hop).collect();
    starts.push(clip_len - segment_len);
    Ok(SegmentPlan {
        segment_len,
        hop,
        starts,
    })
}
