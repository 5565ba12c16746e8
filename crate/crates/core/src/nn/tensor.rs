use crate::error::{Error, Result};

/// Dense row-major array of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::domain(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of all axes but the last.
    pub fn outer_len(&self) -> usize {
        self.shape[..self.shape.len().saturating_sub(1)].iter().product()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::domain(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Errors with a numeric fault naming `what` if any entry is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NumericFault(format!(
                "{what}: non-finite value {} at flat index {i}",
                self.data[i]
            ))),
        }
    }

    pub(crate) fn expect_last_dim(&self, dim: usize, what: &str) -> Result<()> {
        if self.shape.is_empty() || self.last_dim() != dim {
            return Err(Error::domain(format!(
                "{what}: expected last dimension {dim}, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// `(batch, time, features)` of a rank-3 tensor.
    pub(crate) fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [b, t, f] => Ok((b, t, f)),
            _ => Err(Error::domain(format!(
                "{what}: expected [batch, time, features], got {:?}",
                self.shape
            ))),
        }
    }
}

/// Reorders `[B, T, F]` into `[T, B, F]` (and back with arguments swapped).
pub(crate) fn swap_leading(data: &[f64], outer: usize, inner: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let src = (o * inner + i) * f;
            let dst = (i * outer + o) * f;
            out[dst..dst + f].copy_from_slice(&data[src..src + f]);
        }
    }
    out
}

/// Reverses the time axis of a `[B, T, F]` tensor.
pub fn reverse_time(x: &Tensor) -> Result<Tensor> {
    let (b, t, f) = x.dims3("reverse_time")?;
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ti in 0..t {
            let src = (bi * t + ti) * f;
            let dst = (bi * t + (t - 1 - ti)) * f;
            out[dst..dst + f].copy_from_slice(&x.data()[src..src + f]);
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// Joins tensors along the last axis; leading axes must agree.
pub fn concat_features(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::domain("concatenate: no inputs"))?;
    let lead = &first.shape()[..first.shape().len() - 1];
    for p in parts {
        if &p.shape()[..p.shape().len() - 1] != lead {
            return Err(Error::domain(format!(
                "concatenate: leading shapes differ ({:?} vs {:?})",
                first.shape(),
                p.shape()
            )));
        }
    }
    let rows = first.outer_len();
    let total: usize = parts.iter().map(|p| p.last_dim()).sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for p in parts {
            let w = p.last_dim();
            data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::from_vec(&shape, data)
}

/// Inverse of [`concat_features`]: splits the last axis into `widths`.
pub fn split_features(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let total: usize = widths.iter().sum();
    x.expect_last_dim(total, "split")?;
    let rows = x.outer_len();
    let lead = &x.shape()[..x.shape().len() - 1];
    let mut outs: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
    for r in 0..rows {
        let mut off = r * total;
        for (o, &w) in outs.iter_mut().zip(widths) {
            o.extend_from_slice(&x.data()[off..off + w]);
            off += w;
        }
    }
    outs.into_iter()
        .zip(widths)
        .map(|(d, &w)| {
            let mut shape = lead.to_vec();
            shape.push(w);
            Tensor::from_vec(&shape, d)
        })
        .collect()
}
