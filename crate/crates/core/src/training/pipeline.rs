//! A slicing kind, a front-end (frozen DFT or learnable) and a classifier.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::classifier::{Classifier, ClassifierKind, ClassifierSpec};
use crate::ctensor::{ComplexTensor, Tensor};
use crate::cubelearn::{prepare_input, CubeLearn, CubeLearnConfig, LOG_EPS};
use crate::dft_oracle::{preprocess_fft_as, reduce_input, HeatmapOptions, SlicingKind};
use crate::error::{Error, Result};
use crate::radar_sim::{clutter_removal, RawDataCube};
use crate::rng;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontendKind {
    /// Fixed DFT heatmaps.
    Dft,
    /// Learnable complex linear layers.
    #[default]
    Cubelearn,
}

impl FrontendKind {
    pub fn name(self) -> &'static str {
        match self {
            FrontendKind::Dft => "dft",
            FrontendKind::Cubelearn => "cubelearn",
        }
    }
}

impl fmt::Display for FrontendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrontendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dft" | "fft" | "frozen" => Ok(FrontendKind::Dft),
            "cubelearn" | "learned" | "learnable" => Ok(FrontendKind::Cubelearn),
            _ => Err(Error::Config(format!("unknown front-end '{s}' (expected dft or cubelearn)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub frontend: FrontendKind,
    /// Learnable front-end settings; `kind`, `angle_out`, `aggregation` and
    /// `log_after_modulus` also shape the frozen-DFT heatmaps.
    pub cubelearn: CubeLearnConfig,
    pub classifier: ClassifierSpec,
    /// Fractions of the sample and chirp axes kept; `None` uses the kind's
    /// default (half for DAT and RDAT, full otherwise).
    #[serde(default)]
    pub reduce: Option<[f64; 2]>,
    #[serde(default)]
    pub clutter_removal: bool,
}

impl PipelineConfig {
    pub fn new(kind: SlicingKind, classifier: ClassifierKind, frontend: FrontendKind, n_classes: usize) -> Self {
        Self {
            frontend,
            cubelearn: CubeLearnConfig::for_kind(kind),
            classifier: ClassifierSpec::new(classifier, n_classes),
            reduce: None,
            clutter_removal: false,
        }
    }

    /// Parses `KIND:CLASSIFIER`, e.g. `DT:CNN2D` or `R-D-T:2DCNN-LSTM`.
    pub fn parse(spec: &str, frontend: FrontendKind, n_classes: usize) -> Result<Self> {
        let (kind, clf) = spec
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("pipeline '{spec}' must look like KIND:CLASSIFIER")))?;
        Ok(Self::new(kind.parse()?, clf.parse()?, frontend, n_classes))
    }

    pub fn kind(&self) -> SlicingKind {
        self.cubelearn.kind
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.kind(), self.classifier.kind)
    }

    pub fn fractions(&self) -> [f64; 2] {
        self.reduce
            .unwrap_or(if self.kind().default_half_input() { [0.5, 0.5] } else { [1.0, 1.0] })
    }

    pub fn heatmap_options(&self) -> HeatmapOptions {
        HeatmapOptions { angle_out: self.cubelearn.angle_out, aggregation: self.cubelearn.aggregation }
    }

    /// Cube shape seen by the front-end after input reduction.
    pub fn reduced_shape(&self, raw: [usize; 4]) -> Result<[usize; 4]> {
        let [fs, fc] = self.fractions();
        let cut = |frac: f64, len: usize, what: &str| -> Result<usize> {
            let exact = frac * len as f64;
            let k = exact.round();
            if !(frac > 0.0 && frac <= 1.0) || (exact - k).abs() > 1e-9 || k < 1.0 {
                return Err(Error::Config(format!("{what} fraction {frac} of {len} is not a whole count")));
            }
            Ok(k as usize)
        };
        Ok([raw[0], raw[1], cut(fc, raw[2], "chirp")?, cut(fs, raw[3], "sample")?])
    }

    pub fn heatmap_shape(&self, raw: [usize; 4]) -> Result<Vec<usize>> {
        Ok(self.kind().output_shape(self.reduced_shape(raw)?, self.cubelearn.angle_out))
    }
}

/// Per-sample network input, prepared once when a split is loaded.
#[derive(Clone, Debug, PartialEq)]
pub enum ExampleInput<T> {
    /// Heatmap ready for the classifier.
    Heatmap(Tensor<T>),
    /// Sliced cube for the learnable front-end, in 32-bit as stored on disk.
    Raw(ComplexTensor<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example<T> {
    pub label: usize,
    pub input: ExampleInput<T>,
}

/// Front-end plus classifier for one cube shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline<T: Scalar> {
    pub config: PipelineConfig,
    /// Raw cube shape before reduction.
    pub raw_shape: [usize; 4],
    pub frontend: Option<CubeLearn<T>>,
    pub classifier: Classifier<T>,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(config: PipelineConfig, raw_shape: [usize; 4], seed: u64) -> Result<Self> {
        let reduced = config.reduced_shape(raw_shape)?;
        config.cubelearn.validate(reduced)?;
        let frontend = match config.frontend {
            FrontendKind::Dft => None,
            FrontendKind::Cubelearn => Some(CubeLearn::new(config.cubelearn.clone(), reduced, rng::derive_seed(seed, "frontend", 0))?),
        };
        let heat = config.heatmap_shape(raw_shape)?;
        let classifier = Classifier::new(config.classifier.clone(), &heat, rng::derive_seed(seed, "classifier", 0))?;
        Ok(Self { config, raw_shape, frontend, classifier })
    }

    pub fn heatmap_shape(&self) -> Vec<usize> {
        self.classifier.input_shape().to_vec()
    }

    pub fn n_classes(&self) -> usize {
        self.config.classifier.n_classes()
    }

    fn condition(&self, cube: &RawDataCube<f32>) -> Result<RawDataCube<f32>> {
        if cube.shape() != self.raw_shape {
            return Err(Error::Shape(format!(
                "cube shape {:?} does not match the pipeline's {:?}",
                cube.shape(),
                self.raw_shape
            )));
        }
        let cube = if self.config.clutter_removal { clutter_removal(cube)? } else { cube.clone() };
        let [fs, fc] = self.config.fractions();
        if fs == 1.0 && fc == 1.0 {
            Ok(cube)
        } else {
            reduce_input(&cube, fs, fc).map_err(|e| Error::Config(e.to_string()))
        }
    }

    /// Frozen-DFT heatmap of a conditioned cube.
    fn dft_heatmap(&self, cube: &RawDataCube<f32>) -> Result<Tensor<T>> {
        let h = preprocess_fft_as::<T, f32>(cube, self.config.kind(), &self.config.heatmap_options())?;
        Ok(if self.config.cubelearn.log_after_modulus {
            let eps: T = lit(LOG_EPS);
            h.map(|v| (v + eps).ln())
        } else {
            h
        })
    }

    /// Builds the stored input for one raw cube.
    pub fn prepare(&self, cube: &RawDataCube<f32>) -> Result<ExampleInput<T>> {
        let cube = self.condition(cube)?;
        match &self.frontend {
            None => Ok(ExampleInput::Heatmap(self.dft_heatmap(&cube)?)),
            Some(_) => Ok(ExampleInput::Raw(prepare_input(&cube, self.config.kind())?)),
        }
    }

    /// Heatmap for a stored input with the current front-end weights.
    pub fn heatmap(&self, input: &ExampleInput<T>) -> Result<Tensor<T>> {
        match (input, &self.frontend) {
            (ExampleInput::Heatmap(h), _) => Ok(h.clone()),
            (ExampleInput::Raw(x), Some(m)) => m.heatmap_prepared(&x.cast::<T>()),
            (ExampleInput::Raw(_), None) => Err(Error::Parameter("raw input without a learnable front-end".into())),
        }
    }

    /// Heatmap of a raw cube end to end (conditioning included).
    pub fn heatmap_of_cube(&self, cube: &RawDataCube<f32>) -> Result<Tensor<T>> {
        let input = self.prepare(cube)?;
        self.heatmap(&input)
    }

    /// Replaces raw inputs by heatmaps computed with the current weights.
    /// Used when the front-end is not being trained.
    pub fn freeze_inputs(&self, examples: &mut [Example<T>]) -> Result<()> {
        for ex in examples.iter_mut() {
            if matches!(ex.input, ExampleInput::Raw(_)) {
                ex.input = ExampleInput::Heatmap(self.heatmap(&ex.input)?);
            }
        }
        Ok(())
    }
}

/// Stacks equally shaped tensors along a new leading axis.
pub fn stack<T: Scalar>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = items.first().ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
    let mut data = Vec::with_capacity(first.len() * items.len());
    for t in items {
        if t.shape() != first.shape() {
            return Err(Error::Dimension { op: "stack", left: first.shape().to_vec(), right: t.shape().to_vec() });
        }
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    Tensor::from_vec(&shape, data)
}
