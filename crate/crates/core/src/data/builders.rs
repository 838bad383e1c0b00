use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{BiasLabels, BiasedDataset, DatasetInfo, Features, IdxImages, Palette};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::seed::{self, Rng};

/// Per-coordinate noise standard deviation of [`build_synthetic_blobs`].
pub const BLOB_NOISE_STD: f64 = 0.5;

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::param(format!("aligned fraction must lie in [0, 1], got {rho}")))
    }
}

/// Bias class for target `y`: `y` itself with probability `rho`, otherwise
/// uniform over the remaining `k − 1` classes.
fn draw_bias(rng: &mut Rng, y: usize, k: usize, rho: f64) -> usize {
    if rng.gen_bool(rho) {
        y
    } else {
        let c = rng.gen_range(0..k - 1);
        if c >= y {
            c + 1
        } else {
            c
        }
    }
}

fn check_mnist(images: &IdxImages, labels: &[u8], palette: &Palette) -> Result<()> {
    if palette.len() != 10 {
        return Err(Error::param(format!("palette needs 10 colors, got {}", palette.len())));
    }
    if palette.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::param("palette channels must lie in [0, 1]"));
    }
    if images.count != labels.len() {
        return Err(Error::dim("image and label counts differ"));
    }
    if labels.iter().any(|&l| l > 9) {
        return Err(Error::param("MNIST labels must be digits 0..=9"));
    }
    Ok(())
}

/// Colors the whole background of each digit; the color is the digit's own
/// palette entry with probability `rho`, otherwise one of the other nine.
pub fn build_biased_mnist(
    images: &IdxImages,
    labels: &[u8],
    rho: f64,
    palette: &Palette,
    seed: u64,
) -> Result<BiasedDataset> {
    check_rho(rho)?;
    check_mnist(images, labels, palette)?;
    let mut rng = seed::stream(seed, "data");
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let b: Vec<usize> = y.iter().map(|&y| draw_bias(&mut rng, y, 10, rho)).collect();
    let colors: Vec<u8> = b.iter().map(|&c| c as u8).collect();
    BiasedDataset::new(
        Features::Colorized {
            rows: images.rows,
            cols: images.cols,
            gray: images.pixels.clone(),
            left: colors.clone(),
            right: colors,
            palette: palette.clone(),
        },
        y,
        BiasLabels::Single(b),
        10,
        10,
        DatasetInfo {
            kind: "biased-mnist".into(),
            rho: vec![rho],
            seed,
            noise_p: 0.0,
        },
    )
}

/// Colors the left and right background halves independently, each aligned
/// with its own probability.
pub fn build_multicolor_mnist(
    images: &IdxImages,
    labels: &[u8],
    rho_l: f64,
    rho_r: f64,
    palette: &Palette,
    seed: u64,
) -> Result<BiasedDataset> {
    check_rho(rho_l)?;
    check_rho(rho_r)?;
    check_mnist(images, labels, palette)?;
    let mut rng = seed::stream(seed, "data");
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let mut bl = Vec::with_capacity(y.len());
    let mut br = Vec::with_capacity(y.len());
    for &t in &y {
        bl.push(draw_bias(&mut rng, t, 10, rho_l));
        br.push(draw_bias(&mut rng, t, 10, rho_r));
    }
    BiasedDataset::new(
        Features::Colorized {
            rows: images.rows,
            cols: images.cols,
            gray: images.pixels.clone(),
            left: bl.iter().map(|&c| c as u8).collect(),
            right: br.iter().map(|&c| c as u8).collect(),
            palette: palette.clone(),
        },
        y,
        BiasLabels::Pair(bl, br),
        10,
        10,
        DatasetInfo {
            kind: "multicolor-mnist".into(),
            rho: vec![rho_l, rho_r],
            seed,
            noise_p: 0.0,
        },
    )
}

/// Download-free analogue of the colorized benchmark.
///
/// The first `dim/2` coordinates carry a class prototype, the rest carry
/// `bias_strength` times a bias prototype; every coordinate gets
/// `N(0, BLOB_NOISE_STD²)` noise. Prototypes are standard normal. Bias labels
/// are drawn as in [`build_biased_mnist`]. Samples are shuffled.
pub fn build_synthetic_blobs(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    rho: f64,
    bias_strength: f64,
    seed: u64,
) -> Result<BiasedDataset> {
    if num_classes < 2 {
        return Err(Error::param("need at least two classes"));
    }
    if dim < 2 * num_classes {
        return Err(Error::param(format!(
            "dimension {dim} is below twice the class count {num_classes}"
        )));
    }
    check_rho(rho)?;
    let mut rng = seed::stream(seed, "data");
    let half = dim / 2;
    let normal = |rng: &mut Rng| -> f64 { StandardNormal.sample(rng) };
    let class_protos = Array2::from_shape_simple_fn((num_classes, half), || normal(&mut rng));
    let bias_protos = Array2::from_shape_simple_fn((num_classes, dim - half), || normal(&mut rng));

    let n = num_classes * n_per_class;
    let mut order: Vec<usize> = (0..n).map(|i| i / n_per_class).collect();
    order.shuffle(&mut rng);
    let mut x = Array2::zeros((n, dim));
    let mut bias = Vec::with_capacity(n);
    for (i, &y) in order.iter().enumerate() {
        let b = draw_bias(&mut rng, y, num_classes, rho);
        bias.push(b);
        let mut row = x.row_mut(i);
        for j in 0..dim {
            let signal = if j < half {
                class_protos[[y, j]]
            } else {
                bias_strength * bias_protos[[b, j - half]]
            };
            row[j] = signal + BLOB_NOISE_STD * normal(&mut rng);
        }
    }
    BiasedDataset::new(
        Features::Dense(x),
        order,
        BiasLabels::Single(bias),
        num_classes,
        num_classes,
        DatasetInfo {
            kind: "synthetic-blobs".into(),
            rho: vec![rho],
            seed,
            noise_p: 0.0,
        },
    )
}

/// Replaces the bias label of exactly `round(p·N)` samples (per bias axis)
/// with a uniformly drawn different class. Features are untouched.
pub fn inject_bias_label_noise(ds: &BiasedDataset, p: f64, seed: u64) -> Result<BiasedDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("noise fraction must lie in [0, 1], got {p}")));
    }
    let mut rng = seed::stream(seed, "noise");
    let n = ds.len();
    let count = (p * n as f64).round() as usize;
    let k = ds.num_bias();
    let mut corrupt = |labels: &[usize]| {
        let mut out = labels.to_vec();
        for i in index::sample(&mut rng, n, count) {
            let c = rng.gen_range(0..k - 1);
            out[i] = if c >= labels[i] { c + 1 } else { c };
        }
        out
    };
    let bias = match ds.bias_labels() {
        BiasLabels::Single(b) => BiasLabels::Single(corrupt(b)),
        BiasLabels::Pair(l, r) => {
            let l = corrupt(l);
            BiasLabels::Pair(l, corrupt(r))
        }
    };
    let mut out = ds.with_bias(bias)?;
    out.info.noise_p = p;
    Ok(out)
}

/// Replaces the bias labels by the identifier's class predictions; a sample
/// counts as aligned exactly when the identifier classifies it correctly.
pub fn assign_pseudo_bias(ds: &BiasedDataset, identifier: &Mlp) -> Result<BiasedDataset> {
    if identifier.output_dim() != ds.num_classes() {
        return Err(Error::dim("identifier output does not match the class count"));
    }
    let mut pred = Vec::with_capacity(ds.len());
    let chunk = 1024;
    for start in (0..ds.len()).step_by(chunk) {
        let x = ds.range(start, (start + chunk).min(ds.len()));
        pred.extend(identifier.predict(x.view(), None)?);
    }
    ds.with_bias(BiasLabels::Single(pred))
}

/// Random disjoint train/val/test partition. Sizes are `round(f·N)` for train
/// and val; test takes the remainder.
pub fn split(
    ds: &BiasedDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(BiasedDataset, BiasedDataset, BiasedDataset)> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split fractions {fractions:?} must sum to 1")));
    }
    let n = ds.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::stream(seed, "split"));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    Ok((
        ds.subset(&perm[..n_train]),
        ds.subset(&perm[n_train..n_train + n_val]),
        ds.subset(&perm[n_train + n_val..]),
    ))
}
