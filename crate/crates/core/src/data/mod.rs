//! Biased classification benchmarks.
//!
//! A [`BiasedDataset`] pairs each sample with a target class `y` and one or two
//! bias labels. Class `c` is predominantly paired with bias class `c`, so a
//! sample is bias-aligned on an axis exactly when its bias label equals its
//! target.
//!
//! Colorized MNIST variants are stored compactly (grayscale bytes plus palette
//! indices) and expanded on demand into `3 × 28 × 28` channel-major feature
//! rows, so a 60 000-sample set costs ~50 MB rather than ~1 GB.

mod builders;
mod cache;
mod idx;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builders::{
    assign_pseudo_bias, build_biased_mnist, build_multicolor_mnist, build_synthetic_blobs,
    inject_bias_label_noise, split, BLOB_NOISE_STD,
};
pub use cache::{load_dataset, save_dataset, DatasetManifest};
pub use idx::{load_idx, load_mnist_split, parse_idx_images, parse_idx_labels, IdxImages};

/// Ten background colors, RGB in `[0, 1]`. Color `c` is the predominant bias
/// of digit `c`.
pub const PALETTE: [[f64; 3]; 10] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.75, 0.10],
    [0.10, 0.20, 0.90],
    [0.95, 0.85, 0.10],
    [0.80, 0.10, 0.80],
    [0.10, 0.80, 0.80],
    [0.95, 0.50, 0.05],
    [0.45, 0.10, 0.65],
    [0.55, 0.35, 0.15],
    [0.05, 0.40, 0.25],
];

pub type Palette = Vec<[f64; 3]>;

pub fn default_palette() -> Palette {
    PALETTE.to_vec()
}

/// Feature storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Explicit `[N × dim]` features.
    Dense(Array2<f64>),
    /// Grayscale digits with a background color per image half.
    ///
    /// Pixel value per channel `c` is `g + (1 − g)·palette[color][c]`, with
    /// `g = gray/255`: white strokes, background tinted by the color. Columns
    /// `0..cols/2` take `left`, the remaining columns take `right`.
    Colorized {
        rows: usize,
        cols: usize,
        gray: Vec<u8>,
        left: Vec<u8>,
        right: Vec<u8>,
        palette: Palette,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLabels {
    Single(Vec<usize>),
    /// Left and right bias labels.
    Pair(Vec<usize>, Vec<usize>),
}

/// Generation parameters recorded alongside a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub kind: String,
    /// Nominal aligned fraction per bias axis.
    pub rho: Vec<f64>,
    pub seed: u64,
    pub noise_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedDataset {
    features: Features,
    labels: Vec<usize>,
    bias: BiasLabels,
    num_classes: usize,
    num_bias: usize,
    pub info: DatasetInfo,
}

impl BiasedDataset {
    pub fn new(
        features: Features,
        labels: Vec<usize>,
        bias: BiasLabels,
        num_classes: usize,
        num_bias: usize,
        info: DatasetInfo,
    ) -> Result<Self> {
        let n = labels.len();
        let rows = match &features {
            Features::Dense(x) => x.nrows(),
            Features::Colorized {
                rows,
                cols,
                gray,
                left,
                right,
                palette,
            } => {
                if gray.len() != n * rows * cols || left.len() != n || right.len() != n {
                    return Err(Error::dim("colorized storage does not match the sample count"));
                }
                if left.iter().chain(right).any(|&c| c as usize >= palette.len()) {
                    return Err(Error::param("color index outside the palette"));
                }
                n
            }
        };
        if rows != n {
            return Err(Error::dim(format!("{rows} feature rows for {n} labels")));
        }
        if labels.iter().any(|&y| y >= num_classes) {
            return Err(Error::param("target label out of range"));
        }
        let axes: Vec<&Vec<usize>> = match &bias {
            BiasLabels::Single(b) => vec![b],
            BiasLabels::Pair(l, r) => vec![l, r],
        };
        for b in axes {
            if b.len() != n {
                return Err(Error::dim("bias labels do not match the sample count"));
            }
            if b.iter().any(|&v| v >= num_bias) {
                return Err(Error::param("bias label out of range"));
            }
        }
        if num_bias < num_classes {
            return Err(Error::param("every class needs a predominant bias class"));
        }
        Ok(Self {
            features,
            labels,
            bias,
            num_classes,
            num_bias,
            info,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_bias(&self) -> usize {
        self.num_bias
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bias_labels(&self) -> &BiasLabels {
        &self.bias
    }

    pub fn input_dim(&self) -> usize {
        match &self.features {
            Features::Dense(x) => x.ncols(),
            Features::Colorized { rows, cols, .. } => 3 * rows * cols,
        }
    }

    /// Number of bias axes (1 or 2).
    pub fn bias_axes(&self) -> usize {
        match self.bias {
            BiasLabels::Single(_) => 1,
            BiasLabels::Pair(..) => 2,
        }
    }

    pub fn bias(&self, axis: usize) -> &[usize] {
        match (&self.bias, axis) {
            (BiasLabels::Single(b), 0) => b,
            (BiasLabels::Pair(l, _), 0) => l,
            (BiasLabels::Pair(_, r), 1) => r,
            _ => panic!("bias axis {axis} out of range"),
        }
    }

    /// Predominant bias class of target class `y`.
    pub fn predominant(&self, y: usize) -> usize {
        y
    }

    pub fn is_aligned(&self, axis: usize, i: usize) -> bool {
        self.bias(axis)[i] == self.predominant(self.labels[i])
    }

    /// Empirical aligned fraction per axis.
    pub fn aligned_fraction(&self) -> Vec<f64> {
        (0..self.bias_axes())
            .map(|a| {
                let n = (0..self.len()).filter(|&i| self.is_aligned(a, i)).count();
                n as f64 / self.len().max(1) as f64
            })
            .collect()
    }

    /// Group index: `0` aligned / `1` conflicting for one axis; for two axes
    /// `2·conflicting_L + conflicting_R`, i.e. (alig,alig), (alig,conf),
    /// (conf,alig), (conf,conf).
    pub fn group(&self, i: usize) -> usize {
        (0..self.bias_axes()).fold(0, |g, a| 2 * g + usize::from(!self.is_aligned(a, i)))
    }

    pub fn group_count(&self) -> usize {
        1 << self.bias_axes()
    }

    pub fn group_names(&self) -> Vec<String> {
        match self.bias_axes() {
            1 => vec!["aligned".into(), "conflicting".into()],
            _ => vec![
                "alig_alig".into(),
                "alig_conf".into(),
                "conf_alig".into(),
                "conf_conf".into(),
            ],
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.group_count()];
        for i in 0..self.len() {
            out[self.group(i)] += 1;
        }
        out
    }

    /// Materializes the feature rows of the given samples.
    pub fn batch(&self, idx: &[usize]) -> Array2<f64> {
        match &self.features {
            Features::Dense(x) => x.select(ndarray::Axis(0), idx),
            Features::Colorized { .. } => {
                let mut out = Array2::zeros((idx.len(), self.input_dim()));
                for (r, &i) in idx.iter().enumerate() {
                    self.write_colorized(i, out.row_mut(r).as_slice_mut().unwrap());
                }
                out
            }
        }
    }

    /// Feature rows `start..end`.
    pub fn range(&self, start: usize, end: usize) -> Array2<f64> {
        match &self.features {
            Features::Dense(x) => x.slice(s![start..end, ..]).to_owned(),
            Features::Colorized { .. } => self.batch(&(start..end).collect::<Vec<_>>()),
        }
    }

    fn write_colorized(&self, i: usize, out: &mut [f64]) {
        let Features::Colorized {
            rows,
            cols,
            gray,
            left,
            right,
            palette,
        } = &self.features
        else {
            unreachable!()
        };
        let plane = rows * cols;
        let img = &gray[i * plane..(i + 1) * plane];
        let colors = [palette[left[i] as usize], palette[right[i] as usize]];
        let half = cols / 2;
        for c in 0..3 {
            let dst = &mut out[c * plane..(c + 1) * plane];
            for r in 0..*rows {
                for col in 0..*cols {
                    let g = f64::from(img[r * cols + col]) / 255.0;
                    let tint = colors[usize::from(col >= half)][c];
                    dst[r * cols + col] = g + (1.0 - g) * tint;
                }
            }
        }
    }

    /// Samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> BiasedDataset {
        let pick = |v: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let features = match &self.features {
            Features::Dense(x) => Features::Dense(x.select(ndarray::Axis(0), idx)),
            Features::Colorized {
                rows,
                cols,
                gray,
                left,
                right,
                palette,
            } => {
                let plane = rows * cols;
                let mut g = Vec::with_capacity(idx.len() * plane);
                for &i in idx {
                    g.extend_from_slice(&gray[i * plane..(i + 1) * plane]);
                }
                Features::Colorized {
                    rows: *rows,
                    cols: *cols,
                    gray: g,
                    left: idx.iter().map(|&i| left[i]).collect(),
                    right: idx.iter().map(|&i| right[i]).collect(),
                    palette: palette.clone(),
                }
            }
        };
        let bias = match &self.bias {
            BiasLabels::Single(b) => BiasLabels::Single(pick(b)),
            BiasLabels::Pair(l, r) => BiasLabels::Pair(pick(l), pick(r)),
        };
        BiasedDataset {
            features,
            labels: pick(&self.labels),
            bias,
            num_classes: self.num_classes,
            num_bias: self.num_bias,
            info: self.info.clone(),
        }
    }

    /// Copy with replaced bias labels (alignment follows automatically).
    pub fn with_bias(&self, bias: BiasLabels) -> Result<BiasedDataset> {
        BiasedDataset::new(
            self.features.clone(),
            self.labels.clone(),
            bias,
            self.num_classes,
            self.num_bias,
            self.info.clone(),
        )
    }
}
