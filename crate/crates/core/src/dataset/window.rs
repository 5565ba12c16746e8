use crate::error::{Error, Result};

/// Frames per training sequence.
pub const WINDOW_LEN: usize = 15;
/// Frames shared by consecutive windows.
pub const WINDOW_OVERLAP: usize = 5;
pub const WINDOW_HOP: usize = WINDOW_LEN - WINDOW_OVERLAP;

/// Start frames of the windows covering a track of `n_frames`.
///
/// Regular starts every 10 frames; when the last regular window stops short of
/// the end an extra window anchored at `n_frames - 15` is appended. Tracks
/// shorter than a window get a single (padded) window at 0.
pub fn window_track(n_frames: usize) -> Result<Vec<usize>> {
    window_starts(n_frames, WINDOW_LEN, WINDOW_HOP)
}

pub fn window_starts(n_frames: usize, len: usize, hop: usize) -> Result<Vec<usize>> {
    if n_frames == 0 {
        return Err(Error::domain("n_frames must be ≥ 1"));
    }
    if len == 0 || hop == 0 {
        return Err(Error::domain("window length and hop must be ≥ 1"));
    }
    if n_frames <= len {
        return Ok(vec![0]);
    }
    let last = n_frames - len;
    let mut starts: Vec<usize> = (0..=last).step_by(hop).collect();
    if *starts.last().unwrap() != last {
        starts.push(last);
    }
    Ok(starts)
}

/// Averages overlapping per-window predictions back to one value per frame.
///
/// `windows` holds `(start, rows)` pairs; rows falling at or past `n_frames`
/// (padding of short tracks) are ignored.
pub fn merge_window_predictions<const D: usize>(
    n_frames: usize,
    windows: &[(usize, Vec<[f64; D]>)],
) -> Result<Vec<[f64; D]>> {
    let mut sum = vec![[0.0; D]; n_frames];
    let mut count = vec![0u32; n_frames];
    for (start, rows) in windows {
        for (offset, row) in rows.iter().enumerate() {
            let frame = start + offset;
            if frame >= n_frames {
                break;
            }
            for (s, v) in sum[frame].iter_mut().zip(row) {
                *s += v;
            }
            count[frame] += 1;
        }
    }
    if let Some(frame) = count.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!(
            "frame {frame} of {n_frames} is not covered by any window"
        )));
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(mut s, c)| {
            for v in &mut s {
                *v /= c as f64;
            }
            s
        })
        .collect())
}
