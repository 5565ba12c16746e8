use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Mean squared error over the unmasked `(frame, dimension)` elements.
///
/// `pred` and `target` are `[..., D]`; `mask` has one entry per row (frame)
/// and applies to all `D` outputs of that row. Returns the loss and
/// `∂loss/∂pred`, which is zero on masked rows.
pub fn masked_mse(pred: &Tensor, target: &[f64], mask: &[bool]) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() {
        return Err(Error::domain(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let d = pred.last_dim();
    if mask.len() * d != pred.len() {
        return Err(Error::domain(format!(
            "mse: mask has {} rows, predictions have {}",
            mask.len(),
            pred.outer_len()
        )));
    }
    let kept = mask.iter().filter(|m| **m).count() * d;
    if kept == 0 {
        return Err(Error::domain("mse: every element is masked"));
    }
    let scale = 1.0 / kept as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (r, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        for j in r * d..(r + 1) * d {
            let e = pred.data()[j] - target[j];
            loss += e * e;
            grad[j] = 2.0 * e * scale;
        }
    }
    Ok((loss * scale, Tensor::from_vec(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let p = Tensor::from_vec(&[1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (l, g) = masked_mse(&p, p.data(), &[true, true]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_element_hand_value() {
        let p = Tensor::from_vec(&[1, 1], vec![0.5]).unwrap();
        let (l, g) = masked_mse(&p, &[0.0], &[true]).unwrap();
        assert_eq!(l, 0.25);
        assert_eq!(g.data(), &[1.0]);
    }

    #[test]
    fn fully_masked_is_error() {
        let p = Tensor::zeros(&[1, 2, 2]);
        assert!(masked_mse(&p, &[0.0; 4], &[false, false]).is_err());
    }

    #[test]
    fn half_masked_equals_kept_half() {
        let p = Tensor::from_vec(&[1, 4, 2], vec![0.1, -0.3, 0.7, 0.2, -0.9, 0.4, 0.0, 0.5]).unwrap();
        let t = [0.2, 0.1, -0.5, 0.6, 0.3, 0.3, -0.1, -0.8];
        let mask = [true, false, true, false];
        let (l, g) = masked_mse(&p, &t, &mask).unwrap();
        let kept_p = Tensor::from_vec(&[1, 2, 2], vec![0.1, -0.3, -0.9, 0.4]).unwrap();
        let (lk, _) = masked_mse(&kept_p, &[0.2, 0.1, 0.3, 0.3], &[true, true]).unwrap();
        assert!((l - lk).abs() < 1e-15);
        assert_eq!(&g.data()[2..4], &[0.0, 0.0]);
    }
}
