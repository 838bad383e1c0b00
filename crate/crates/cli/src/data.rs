use std::path::PathBuf;

use bise::data::{
    build_biased_mnist, build_multicolor_mnist, build_synthetic_blobs, default_palette, inject_bias_label_noise,
    load_mnist_split, BiasedDataset, IdxImages,
};
use bise::seed;
use rand::seq::SliceRandom;

use crate::config::{DatasetKind, DatasetSpec};
use crate::error::CliResult;

pub struct Splits {
    pub train: BiasedDataset,
    pub val: Option<BiasedDataset>,
    pub test: BiasedDataset,
}

impl Splits {
    pub fn named(&self) -> Vec<(&'static str, &BiasedDataset)> {
        let mut out = vec![("train", &self.train)];
        if let Some(v) = &self.val {
            out.push(("val", v));
        }
        out.push(("test", &self.test));
        out
    }
}

pub fn mnist_dir(spec: &DatasetSpec) -> PathBuf {
    spec.mnist_dir
        .clone()
        .or_else(|| std::env::var_os("BISE_MNIST_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

fn subset(images: &IdxImages, labels: &[u8], idx: &[usize]) -> (IdxImages, Vec<u8>) {
    let size = images.rows * images.cols;
    let mut pixels = Vec::with_capacity(idx.len() * size);
    for &i in idx {
        pixels.extend_from_slice(&images.pixels[i * size..(i + 1) * size]);
    }
    let sub = IdxImages {
        count: idx.len(),
        rows: images.rows,
        cols: images.cols,
        pixels,
    };
    (sub, idx.iter().map(|&i| labels[i]).collect())
}

/// Builds train/val/test for one seed. Validation data, when requested, is
/// carved out of the training images and colored like the test set.
pub fn build_splits(spec: &DatasetSpec, s: u64) -> CliResult<Splits> {
    let (train, val, test) = match spec.kind {
        DatasetKind::SyntheticBlobs => {
            let make = |n: usize, rho: f64, tag: &str| {
                build_synthetic_blobs(spec.classes, n, spec.dim, rho, spec.bias_strength, seed::derive(s, tag))
            };
            let train = make(spec.n_per_class, spec.rho[0], "data")?;
            let val = if spec.val_fraction > 0.0 {
                let n = ((spec.n_per_class as f64) * spec.val_fraction).round().max(1.0) as usize;
                Some(make(n, spec.test_rho[0], "data-val")?)
            } else {
                None
            };
            (train, val, make(spec.test_n_per_class, spec.test_rho[0], "data-test")?)
        }
        kind => {
            let dir = mnist_dir(spec);
            let (images, labels) = load_mnist_split(&dir, true)?;
            let (test_images, test_labels) = load_mnist_split(&dir, false)?;
            let palette = default_palette();
            let color = |im: &IdxImages, lb: &[u8], rho: &[f64], seed: u64| match kind {
                DatasetKind::MulticolorMnist => build_multicolor_mnist(im, lb, rho[0], rho[1], &palette, seed),
                _ => build_biased_mnist(im, lb, rho[0], &palette, seed),
            };
            let mut order: Vec<usize> = (0..images.count).collect();
            let n_val = (images.count as f64 * spec.val_fraction).round() as usize;
            let (train, val) = if n_val > 0 {
                order.shuffle(&mut seed::stream(s, "split"));
                let (vi, vl) = subset(&images, &labels, &order[..n_val]);
                let (ti, tl) = subset(&images, &labels, &order[n_val..]);
                (
                    color(&ti, &tl, &spec.rho, s)?,
                    Some(color(&vi, &vl, &spec.test_rho, seed::derive(s, "data-val"))?),
                )
            } else {
                (color(&images, &labels, &spec.rho, s)?, None)
            };
            let test = color(&test_images, &test_labels, &spec.test_rho, seed::derive(s, "data-test"))?;
            (train, val, test)
        }
    };
    let train = if spec.noise_p > 0.0 {
        inject_bias_label_noise(&train, spec.noise_p, seed::derive(s, "noise"))?
    } else {
        train
    };
    Ok(Splits { train, val, test })
}
