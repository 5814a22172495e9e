//! Recognition heads on top of the heatmaps: three conv blocks (conv, batch
//! norm, ReLU, max-pool), an optional LSTM over frames, then a dense stack.

pub mod layers;

pub use layers::{
    batch_norm, conv, cross_entropy, cross_entropy_rows, dense, lstm, lstm_forward, max_pool, softmax, update_running,
    BatchStats, ConvGeom, BN_EPS, BN_MOMENTUM,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::ctensor::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "CNN2D")]
    Cnn2d,
    #[serde(rename = "CNN3D")]
    Cnn3d,
    #[serde(rename = "CNN2D_LSTM")]
    Cnn2dLstm,
    #[serde(rename = "CNN3D_LSTM")]
    Cnn3dLstm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Cnn2d,
        ClassifierKind::Cnn3d,
        ClassifierKind::Cnn2dLstm,
        ClassifierKind::Cnn3dLstm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Cnn2d => "CNN2D",
            ClassifierKind::Cnn3d => "CNN3D",
            ClassifierKind::Cnn2dLstm => "CNN2D_LSTM",
            ClassifierKind::Cnn3dLstm => "CNN3D_LSTM",
        }
    }

    pub fn has_lstm(self) -> bool {
        matches!(self, ClassifierKind::Cnn2dLstm | ClassifierKind::Cnn3dLstm)
    }

    pub fn conv_rank(self) -> usize {
        match self {
            ClassifierKind::Cnn2d | ClassifierKind::Cnn2dLstm => 2,
            ClassifierKind::Cnn3d | ClassifierKind::Cnn3dLstm => 3,
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    /// Accepts `CNN2D`, `2DCNN`, `CNN2D_LSTM`, `2DCNN-LSTM` and similar.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        let norm = norm.replace("2DCNN", "CNN2D").replace("3DCNN", "CNN3D");
        match norm.as_str() {
            "CNN2D" => Ok(ClassifierKind::Cnn2d),
            "CNN3D" => Ok(ClassifierKind::Cnn3d),
            "CNN2DLSTM" => Ok(ClassifierKind::Cnn2dLstm),
            "CNN3DLSTM" => Ok(ClassifierKind::Cnn3dLstm),
            _ => Err(Error::Config(format!("unknown classifier '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool: usize,
    pub lstm_hidden: usize,
    /// Output widths of the dense layers; the last one is the class count.
    pub fc_sizes: Vec<usize>,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, n_classes: usize) -> Self {
        Self {
            kind,
            conv_channels: vec![4, 8, 16],
            kernel_size: 3,
            pool: 2,
            lstm_hidden: 512,
            fc_sizes: vec![512, 128, n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.fc_sizes.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.len() != 3 || self.conv_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config(format!("conv_channels must list 3 positive widths, got {:?}", self.conv_channels)));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.pool == 0 {
            return Err(Error::Config("pool must be >= 1".into()));
        }
        if self.fc_sizes.is_empty() || self.fc_sizes.iter().any(|&f| f == 0) {
            return Err(Error::Config(format!("fc_sizes must be positive, got {:?}", self.fc_sizes)));
        }
        if self.n_classes() < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.n_classes())));
        }
        if self.kind.has_lstm() && self.lstm_hidden == 0 {
            return Err(Error::Config("lstm_hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// How a per-sample heatmap is laid out for the conv stack.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    /// Frames fed to the LSTM (conv runs per frame), or `None`.
    seq: Option<usize>,
    /// `[channels, depth, height, width]` of one conv input.
    conv_in: [usize; 4],
    kernel: [usize; 3],
    pool: [usize; 3],
    /// Per-block output `[channels, depth, height, width]`.
    blocks: Vec<[usize; 4]>,
    flat: usize,
}

fn construction(stage: &str, reason: String) -> Error {
    Error::Construction { stage: stage.to_string(), reason }
}

fn plan(spec: &ClassifierSpec, input: &[usize]) -> Result<Layout> {
    let (k, p) = (spec.kernel_size, spec.pool);
    let rank_err = |want: &str| {
        construction(
            "input",
            format!("{} expects a {want} heatmap, got shape {input:?}", spec.kind),
        )
    };
    // Frame axis is never pooled.
    let (seq, conv_in, kernel, pool) = match (spec.kind, input) {
        (ClassifierKind::Cnn2d, &[f, x]) => (None, [1, 1, f, x], [1, k, k], [1, 1, p]),
        (ClassifierKind::Cnn2d, &[f, x, y]) => (None, [f, 1, x, y], [1, k, k], [1, p, p]),
        (ClassifierKind::Cnn2d, _) => return Err(rank_err("[frames, a] or [frames, a, b]")),
        (ClassifierKind::Cnn3d, &[f, x, y]) => (None, [1, f, x, y], [k, k, k], [1, p, p]),
        (ClassifierKind::Cnn3d, &[f, x, y, z]) => (None, [f, x, y, z], [k, k, k], [p, p, p]),
        (ClassifierKind::Cnn3d, _) => return Err(rank_err("[frames, a, b] or [frames, a, b, c]")),
        (ClassifierKind::Cnn2dLstm, &[f, x, y]) => (Some(f), [1, 1, x, y], [1, k, k], [1, p, p]),
        (ClassifierKind::Cnn2dLstm, _) => return Err(rank_err("[frames, a, b]")),
        (ClassifierKind::Cnn3dLstm, &[f, x, y, z]) => (Some(f), [1, x, y, z], [k, k, k], [p, p, p]),
        (ClassifierKind::Cnn3dLstm, _) => return Err(rank_err("[frames, a, b, c]")),
    };
    if conv_in.iter().any(|&d| d == 0) || seq == Some(0) {
        return Err(construction("input", format!("empty axis in {input:?}")));
    }
    let mut blocks = Vec::new();
    let mut cur = conv_in;
    for (i, &ch) in spec.conv_channels.iter().enumerate() {
        let dims = [cur[1] / pool[0], cur[2] / pool[1], cur[3] / pool[2]];
        if dims.iter().any(|&d| d == 0) {
            return Err(construction(
                &format!("pool{}", i + 1),
                format!("pooling {pool:?} empties feature map {:?}", &cur[1..]),
            ));
        }
        cur = [ch, dims[0], dims[1], dims[2]];
        blocks.push(cur);
    }
    let flat = cur.iter().product();
    Ok(Layout { seq, conv_in, kernel, pool, blocks, flat })
}

/// Mode of the batch-norm layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A parameterized classifier for one input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T: Scalar> {
    spec: ClassifierSpec,
    input_shape: Vec<usize>,
    layout: Layout,
    params: ParamSet<T>,
    /// Batch-norm running means and variances.
    buffers: ParamSet<T>,
    trace: Vec<String>,
}

fn he_uniform<T: Scalar>(shape: &[usize], fan_in: usize, r: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let data = (0..shape.iter().product()).map(|_| lit(r.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

fn uniform<T: Scalar>(shape: &[usize], bound: f64, r: &mut impl Rng) -> Tensor<T> {
    let data = (0..shape.iter().product()).map(|_| lit(r.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

impl<T: Scalar> Classifier<T> {
    /// Builds and initializes the model for per-sample inputs of
    /// `input_shape` (frame axis first).
    pub fn new(spec: ClassifierSpec, input_shape: &[usize], seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = plan(&spec, input_shape)?;
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let mut trace = vec![format!("input {input_shape:?}")];
        let stream = |name: &str| rng::stream(seed, &format!("classifier/{name}"), 0);
        let kvol: usize = layout.kernel.iter().product();
        let mut cin = layout.conv_in[0];
        let per = if layout.seq.is_some() { "per frame " } else { "" };
        trace.push(format!("conv input {per}{:?}", layout.conv_in));
        for (i, block) in layout.blocks.iter().enumerate() {
            let cout = block[0];
            let l = i + 1;
            let mut w_shape = vec![cout, cin];
            w_shape.extend_from_slice(&layout.kernel);
            params.push(format!("conv{l}.weight"), he_uniform::<T>(&w_shape, cin * kvol, &mut stream(&format!("conv{l}"))));
            params.push(format!("conv{l}.bias"), Tensor::<T>::zeros(&[cout]));
            params.push(format!("bn{l}.gamma"), Tensor::full(&[cout], T::one()));
            params.push(format!("bn{l}.beta"), Tensor::<T>::zeros(&[cout]));
            buffers.push(format!("bn{l}.running_mean"), Tensor::<T>::zeros(&[cout]));
            buffers.push(format!("bn{l}.running_var"), Tensor::full(&[cout], T::one()));
            trace.push(format!("block{l} conv+bn+relu+pool{:?} -> {block:?}", layout.pool));
            cin = cout;
        }
        let mut width = layout.flat;
        trace.push(format!("flatten {per}-> {width}"));
        if let Some(t) = layout.seq {
            let h = spec.lstm_hidden;
            let bound = 1.0 / (h as f64).sqrt();
            let mut r = stream("lstm");
            params.push("lstm.w_ih", uniform::<T>(&[4 * h, width], bound, &mut r));
            params.push("lstm.w_hh", uniform::<T>(&[4 * h, h], bound, &mut r));
            params.push("lstm.bias", uniform::<T>(&[4 * h], bound, &mut r));
            trace.push(format!("lstm over {t} frames -> {h}"));
            width = h;
        }
        for (i, &out) in spec.fc_sizes.iter().enumerate() {
            let l = i + 1;
            params.push(format!("fc{l}.weight"), he_uniform::<T>(&[out, width], width, &mut stream(&format!("fc{l}"))));
            params.push(format!("fc{l}.bias"), Tensor::<T>::zeros(&[out]));
            trace.push(format!("fc{l} -> {out}"));
            width = out;
        }
        Ok(Self { spec, input_shape: input_shape.to_vec(), layout, params, buffers, trace })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Human-readable layer-by-layer shape trace.
    pub fn shape_trace(&self) -> &[String] {
        &self.trace
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn buffers(&self) -> &ParamSet<T> {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.buffers
    }

    /// Records logits `[B, n_classes]` for a batch `x: [B, ..input_shape]`.
    /// In [`Mode::Train`] batch statistics are used and returned per
    /// normalization layer; in [`Mode::Eval`] running statistics are used.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, vars: &[Var], mode: Mode) -> Result<(Var, Vec<BatchStats<T>>)> {
        if vars.len() != self.params.len() {
            return Err(Error::Parameter(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let xs = tape.value(x).shape().to_vec();
        if xs.len() != self.input_shape.len() + 1 || xs[1..] != self.input_shape[..] {
            return Err(Error::Dimension {
                op: "classifier input",
                left: xs,
                right: self.input_shape.clone(),
            });
        }
        let b = xs[0];
        let var = |name: &str| -> Var { vars[self.params.position(name).expect("parameter exists")] };
        let lay = &self.layout;
        let rows = b * lay.seq.unwrap_or(1);
        let mut shape = vec![rows];
        shape.extend_from_slice(&lay.conv_in);
        let mut h = tape.reshape(x, &shape)?;
        let mut stats = Vec::new();
        for l in 1..=lay.blocks.len() {
            h = conv(tape, h, var(&format!("conv{l}.weight")), var(&format!("conv{l}.bias")))?;
            let running = match mode {
                Mode::Train => None,
                Mode::Eval => {
                    let m = self.buffers.get(&format!("bn{l}.running_mean")).expect("buffer").as_real()?;
                    let v = self.buffers.get(&format!("bn{l}.running_var")).expect("buffer").as_real()?;
                    Some((m.data(), v.data()))
                }
            };
            let (y, st) = batch_norm(tape, h, var(&format!("bn{l}.gamma")), var(&format!("bn{l}.beta")), running)?;
            stats.extend(st);
            h = tape.relu(y)?;
            h = max_pool(tape, h, lay.pool)?;
        }
        h = match lay.seq {
            Some(t) => {
                let seq = tape.reshape(h, &[b, t, lay.flat])?;
                lstm(tape, seq, var("lstm.w_ih"), var("lstm.w_hh"), var("lstm.bias"))?
            }
            None => tape.reshape(h, &[b, lay.flat])?,
        };
        let n_fc = self.spec.fc_sizes.len();
        for l in 1..=n_fc {
            h = dense(tape, h, var(&format!("fc{l}.weight")), var(&format!("fc{l}.bias")))?;
            if l < n_fc {
                h = tape.relu(h)?;
            }
        }
        Ok((h, stats))
    }

    /// Folds per-layer batch statistics into the running buffers.
    pub fn update_running_stats(&mut self, stats: &[BatchStats<T>]) -> Result<()> {
        if stats.len() != self.layout.blocks.len() {
            return Err(Error::Parameter(format!(
                "{} batch statistics for {} normalization layers",
                stats.len(),
                self.layout.blocks.len()
            )));
        }
        for (i, st) in stats.iter().enumerate() {
            let l = i + 1;
            let mut mean = self.buffers.get(&format!("bn{l}.running_mean")).expect("buffer").as_real()?.clone();
            let mut var = self.buffers.get(&format!("bn{l}.running_var")).expect("buffer").as_real()?.clone();
            update_running(mean.data_mut(), var.data_mut(), st);
            *self.buffers.get_mut(&format!("bn{l}.running_mean")).expect("buffer") = mean.into();
            *self.buffers.get_mut(&format!("bn{l}.running_var")).expect("buffer") = var.into();
        }
        Ok(())
    }

    /// Inference-mode logits for a batch of heatmaps.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.register_frozen(&mut tape);
        let x = tape.constant(batch.clone());
        let (y, _) = self.forward(&mut tape, x, &vars, Mode::Eval)?;
        Ok(tape.real(y)?.clone())
    }

    /// Total conv weights and biases, for bookkeeping checks.
    pub fn conv_param_counts(&self) -> (usize, usize) {
        let mut weights = 0;
        let mut biases = 0;
        for p in self.params.iter() {
            let n: usize = p.value.shape().iter().product();
            if p.name.starts_with("conv") && p.name.ends_with(".weight") {
                weights += n;
            } else if p.name.starts_with("conv") && p.name.ends_with(".bias") {
                biases += n;
            }
        }
        (weights, biases)
    }
}
