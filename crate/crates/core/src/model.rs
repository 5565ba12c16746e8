//! The three-branch fusion network and its unimodal baselines.
//!
//! Every layer is time-distributed: inputs are `[batch × time × dim]` and the
//! model emits one `(valence, arousal)` pair per frame.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::dataset::{Modality, PerModality};
use crate::error::{Error, Result};
use crate::nn::{
    concat_features, split_features, BatchNorm, Bidirectional, Ctx, Dense, Dropout, Gru, Layer, Lstm,
    PRelu, Param, Rng, Tanh, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Fusion,
    AudioOnly,
    VideoOnly,
}

impl Variant {
    /// Input modalities consumed by this variant, in branch order.
    pub fn modalities(self) -> &'static [Modality] {
        match self {
            Variant::Fusion => &Modality::ALL,
            Variant::AudioOnly => &[Modality::Audio],
            Variant::VideoOnly => &[Modality::Expnet],
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(Variant::Fusion),
            "audio_only" => Ok(Variant::AudioOnly),
            "video_only" => Ok(Variant::VideoOnly),
            other => Err(Error::Config(format!(
                "unknown model variant {other:?} (expected fusion, audio_only or video_only)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Fusion => "fusion",
            Variant::AudioOnly => "audio_only",
            Variant::VideoOnly => "video_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Gru,
    Bilstm,
}

impl FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(Cell::Gru),
            "bilstm" => Ok(Cell::Bilstm),
            other => Err(Error::Config(format!(
                "unknown cell {other:?} (expected gru or bilstm)"
            ))),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cell::Gru => "gru",
            Cell::Bilstm => "bilstm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub cell: Cell,
    pub seq_len: usize,
    pub dropout: f64,
    pub input_dims: PerModality<usize>,
    /// Divides every hidden width; 1 gives the full-size network.
    pub width_divisor: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Fusion,
            cell: Cell::Gru,
            seq_len: crate::dataset::WINDOW_LEN,
            dropout: 0.25,
            input_dims: PerModality {
                audio: Some(Modality::Audio.width()),
                expnet: Some(Modality::Expnet.width()),
                facepose: Some(Modality::Facepose.width()),
            },
            width_divisor: 1,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn input_dim(&self, m: Modality) -> usize {
        self.input_dims.get(m).copied().unwrap_or_else(|| m.width())
    }

    fn width(&self, w: usize) -> usize {
        (w / self.width_divisor.max(1)).max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_divisor == 0 {
            return Err(Error::Config("model.width-divisor must be ≥ 1".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("model.seq-len must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "model.dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        for m in self.variant.modalities() {
            if self.input_dim(*m) == 0 {
                return Err(Error::Config(format!("model.{m}-dim must be ≥ 1")));
            }
        }
        Ok(())
    }

    /// Flat `key=value` pairs echoed into checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("model.variant".to_string(), self.variant.to_string()),
            ("model.cell".to_string(), self.cell.to_string()),
            ("model.seq-len".to_string(), self.seq_len.to_string()),
            ("model.dropout".to_string(), self.dropout.to_string()),
            ("model.width-divisor".to_string(), self.width_divisor.to_string()),
        ];
        for m in Modality::ALL {
            out.push((format!("model.{m}-dim"), self.input_dim(m).to_string()));
        }
        out
    }

    /// Inverse of [`ModelConfig::to_pairs`]; missing keys keep their defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        let mut cfg = Self::default();
        for (k, v) in pairs {
            match k.as_str() {
                "model.variant" => cfg.variant = v.parse()?,
                "model.cell" => cfg.cell = v.parse()?,
                "model.seq-len" => cfg.seq_len = num(k, v)?,
                "model.dropout" => cfg.dropout = num(k, v)?,
                "model.width-divisor" => cfg.width_divisor = num(k, v)?,
                _ => {
                    if let Some(m) = k
                        .strip_prefix("model.")
                        .and_then(|s| s.strip_suffix("-dim"))
                    {
                        let m: Modality = m.parse()?;
                        cfg.input_dims.set(m, num(k, v)?);
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Layers applied in order; parameters are named `<index>.<name>`.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: impl Layer + 'static) -> &mut Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Layer for Sequential {
    fn kind(&self) -> &'static str {
        "sequential"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, &mut ctx.reborrow())?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().into_iter().map(move |(n, p)| (format!("{i}.{n}"), p)))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params_mut()
                    .into_iter()
                    .map(move |(n, p)| (format!("{i}.{n}"), p))
            })
            .collect()
    }

    fn buffers(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.buffers().into_iter().map(move |(n, b)| (format!("{i}.{n}"), b)))
            .collect()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.buffers_mut()
                    .into_iter()
                    .map(move |(n, b)| (format!("{i}.{n}"), b))
            })
            .collect()
    }
}

fn recurrent(cell: Cell, input: usize, width: usize, rng: &mut Rng) -> Box<dyn Layer> {
    match cell {
        Cell::Gru => Box::new(Gru::new(input, width, rng)),
        Cell::Bilstm => {
            let half = (width / 2).max(1);
            Box::new(Bidirectional::new(
                Box::new(Lstm::new(input, half, rng)),
                Box::new(Lstm::new(input, half, rng)),
            ))
        }
    }
}

fn recurrent_width(cell: Cell, width: usize) -> usize {
    match cell {
        Cell::Gru => width,
        Cell::Bilstm => 2 * (width / 2).max(1),
    }
}

fn build_branch(cfg: &ModelConfig, m: Modality, rng: &mut Rng) -> Result<(Sequential, usize)> {
    let mut s = Sequential::new();
    let mut dim = cfg.input_dim(m);
    match m {
        Modality::Audio | Modality::Expnet => {
            let (widths, drop): (&[usize], bool) = if m == Modality::Audio {
                (&[128, 64], true)
            } else {
                (&[256, 256, 64], false)
            };
            for &w in widths {
                let w = cfg.width(w);
                s.layers.push(recurrent(cfg.cell, dim, w, rng));
                dim = recurrent_width(cfg.cell, w);
                s.push(PRelu::new(dim));
                if drop {
                    s.push(Dropout::new(cfg.dropout)?);
                }
            }
        }
        Modality::Facepose => {
            for w in [128, 64] {
                let w = cfg.width(w);
                s.push(Dense::new(dim, w, rng));
                s.push(Dropout::new(cfg.dropout)?);
                dim = w;
            }
        }
    }
    s.push(BatchNorm::new(dim));
    Ok((s, dim))
}

/// A built network: one branch per consumed modality plus the regression head.
pub struct Model {
    config: ModelConfig,
    branches: Vec<(Modality, Sequential)>,
    branch_widths: Vec<usize>,
    head: Sequential,
}

/// One row of [`Model::param_table`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub kind: &'static str,
    pub params: usize,
}

impl Model {
    /// Builds the network with Glorot/orthogonal weights and zero biases.
    pub fn build(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut branches = Vec::new();
        let mut branch_widths = Vec::new();
        for &m in config.variant.modalities() {
            let (b, w) = build_branch(config, m, rng)?;
            branches.push((m, b));
            branch_widths.push(w);
        }
        let fused: usize = branch_widths.iter().sum();
        let hidden = config.width(64);
        let mut head = Sequential::new();
        head.push(Dense::new(fused, hidden, rng))
            .push(PRelu::new(hidden))
            .push(Dense::new(hidden, 2, rng))
            .push(Tanh::new());
        Ok(Self {
            config: config.clone(),
            branches,
            branch_widths,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn modalities(&self) -> &'static [Modality] {
        self.config.variant.modalities()
    }

    /// `[B × T × dim]` per consumed modality in, `[B × T × 2]` out.
    pub fn forward(&mut self, inputs: &PerModality<Tensor>, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let mut outs = Vec::with_capacity(self.branches.len());
        for (m, branch) in &mut self.branches {
            let x = inputs
                .get(*m)
                .ok_or_else(|| Error::Coverage(format!("model input for {m} is missing")))?;
            outs.push(branch.forward(x, &mut ctx.reborrow())?);
        }
        let fused = if outs.len() == 1 {
            outs.pop().expect("one branch")
        } else {
            concat_features(&outs.iter().collect::<Vec<_>>())?
        };
        self.head.forward(&fused, &mut ctx.reborrow())
    }

    /// Accumulates parameter gradients and returns input gradients.
    pub fn backward(&mut self, grad: &Tensor) -> Result<PerModality<Tensor>> {
        let g = self.head.backward(grad)?;
        let parts = if self.branches.len() == 1 {
            vec![g]
        } else {
            split_features(&g, &self.branch_widths)?
        };
        let mut out = PerModality::default();
        for ((m, branch), g) in self.branches.iter_mut().zip(parts) {
            out.set(*m, branch.backward(&g)?);
        }
        Ok(out)
    }

    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (m, b) in &self.branches {
            out.extend(b.params().into_iter().map(|(n, p)| (format!("{m}.{n}"), p)));
        }
        out.extend(self.head.params().into_iter().map(|(n, p)| (format!("head.{n}"), p)));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (m, b) in &mut self.branches {
            let m = *m;
            out.extend(b.params_mut().into_iter().map(move |(n, p)| (format!("{m}.{n}"), p)));
        }
        out.extend(self.head.params_mut().into_iter().map(|(n, p)| (format!("head.{n}"), p)));
        out
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (m, b) in &self.branches {
            out.extend(b.buffers().into_iter().map(|(n, t)| (format!("{m}.{n}"), t)));
        }
        out.extend(self.head.buffers().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (m, b) in &mut self.branches {
            let m = *m;
            out.extend(b.buffers_mut().into_iter().map(move |(n, t)| (format!("{m}.{n}"), t)));
        }
        out.extend(self.head.buffers_mut().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Per-layer parameter counts, in forward order.
    pub fn param_table(&self) -> Vec<LayerSummary> {
        let mut rows = Vec::new();
        let groups = self
            .branches
            .iter()
            .map(|(m, b)| (m.to_string(), b))
            .chain(std::iter::once(("head".to_string(), &self.head)));
        for (prefix, seq) in groups {
            for (i, l) in seq.layers().iter().enumerate() {
                rows.push(LayerSummary {
                    name: format!("{prefix}.{i}"),
                    kind: l.kind(),
                    params: l.param_count(),
                });
            }
        }
        rows
    }

    pub fn format_param_table(&self) -> String {
        let mut s = format!("{:<14} {:<14} {:>10}\n", "layer", "kind", "params");
        for r in self.param_table() {
            s.push_str(&format!("{:<14} {:<14} {:>10}\n", r.name, r.kind, r.params));
        }
        s.push_str(&format!("{:<14} {:<14} {:>10}\n", "total", "", self.parameter_count()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::{Rng as _, SeedableRng};

    fn inputs(cfg: &ModelConfig, b: usize, rng: &mut Rng, scale: f64) -> PerModality<Tensor> {
        let mut out = PerModality::default();
        for &m in cfg.variant.modalities() {
            let shape = [b, cfg.seq_len, cfg.input_dim(m)];
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            out.set(m, Tensor::from_vec(&shape, data).unwrap());
        }
        out
    }

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            width_divisor: 8,
            input_dims: PerModality {
                audio: Some(12),
                expnet: Some(20),
                facepose: Some(9),
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let cfg = small(Variant::Fusion);
        let mut rng = Rng::seed_from_u64(1);
        let mut model = Model::build(&cfg, &mut rng).unwrap();
        for (_, p) in model.params_mut() {
            p.value.fill(0.0);
        }
        let x = inputs(&cfg, 4, &mut rng, 0.0);
        let y = model.forward(&x, &mut Ctx::new(Mode::Infer, &mut rng)).unwrap();
        assert_eq!(y.shape(), &[4, 15, 2]);
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_shape_and_bound() {
        for variant in [Variant::Fusion, Variant::AudioOnly, Variant::VideoOnly] {
            for cell in [Cell::Gru, Cell::Bilstm] {
                let cfg = ModelConfig { cell, ..small(variant) };
                let mut rng = Rng::seed_from_u64(2);
                let mut model = Model::build(&cfg, &mut rng).unwrap();
                let x = inputs(&cfg, 4, &mut rng, 50.0);
                for mode in [Mode::Train, Mode::Infer] {
                    let y = model.forward(&x, &mut Ctx::new(mode, &mut rng)).unwrap();
                    assert_eq!(y.shape(), &[4, 15, 2]);
                    assert!(y.data().iter().all(|v| v.abs() <= 1.0));
                }
            }
        }
    }

    #[test]
    fn full_size_counts() {
        let mut rng = Rng::seed_from_u64(3);
        let model = Model::build(&ModelConfig::default(), &mut rng).unwrap();
        let table = model.param_table();
        let find = |name: &str| table.iter().find(|r| r.name == name).unwrap().params;
        assert_eq!(find("audio.0"), 114_048);
        assert_eq!(find("audio.1"), 128);
        assert_eq!(find("expnet.0"), 1_770_240);
        assert_eq!(find("head.0"), 12_352);
        assert_eq!(find("head.1"), 64);
        assert_eq!(find("head.2"), 130);
        assert_eq!(
            model.parameter_count(),
            table.iter().map(|r| r.params).sum::<usize>()
        );
    }

    #[test]
    fn unimodal_heads_take_branch_width() {
        let mut rng = Rng::seed_from_u64(4);
        for v in [Variant::AudioOnly, Variant::VideoOnly] {
            let model = Model::build(&ModelConfig::with_variant(v), &mut rng).unwrap();
            let head0 = model.param_table().into_iter().find(|r| r.name == "head.0").unwrap();
            assert_eq!(head0.params, 64 * 64 + 64);
        }
    }

    #[test]
    fn unknown_variant_is_config_error() {
        assert!(matches!("trimodal".parse::<Variant>(), Err(Error::Config(_))));
        assert!(matches!("rnn".parse::<Cell>(), Err(Error::Config(_))));
    }

    #[test]
    fn config_pairs_round_trip() {
        let cfg = ModelConfig {
            cell: Cell::Bilstm,
            ..small(Variant::VideoOnly)
        };
        let map: BTreeMap<_, _> = cfg.to_pairs().into_iter().collect();
        assert_eq!(ModelConfig::from_pairs(&map).unwrap(), cfg);
    }

    #[test]
    fn zeroed_video_branches_leave_audio_function() {
        let cfg = small(Variant::Fusion);
        let mut rng = Rng::seed_from_u64(5);
        let mut model = Model::build(&cfg, &mut rng).unwrap();
        for (name, p) in model.params_mut() {
            if name.starts_with("expnet.") || name.starts_with("facepose.") {
                p.value.fill(0.0);
            }
        }
        let base = inputs(&cfg, 2, &mut rng, 1.0);
        let run = |model: &mut Model, x: &PerModality<Tensor>| {
            let mut r = Rng::seed_from_u64(0);
            model.forward(x, &mut Ctx::new(Mode::Infer, &mut r)).unwrap()
        };
        let y0 = run(&mut model, &base);
        let mut other = inputs(&cfg, 2, &mut rng, 1.0);
        other.audio = base.audio.clone();
        assert_eq!(run(&mut model, &other).data(), y0.data());
        let mut changed = base.clone();
        changed.audio.as_mut().unwrap().data_mut()[0] += 0.5;
        assert_ne!(run(&mut model, &changed).data(), y0.data());
    }
}
