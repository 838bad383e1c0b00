use serde::{Deserialize, Serialize};

use crate::data::BiasedDataset;
use crate::error::{Error, Result};

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `(r_aligned, r_conflicting) = (1/(Cρ), (C−1)/(C(1−ρ)))`.
pub fn two_group_weights(rho: f64, classes: usize) -> Result<(f64, f64)> {
    open_unit("rho", rho)?;
    if classes < 2 {
        return Err(Error::param("need at least two classes"));
    }
    let c = classes as f64;
    Ok((1.0 / (c * rho), (c - 1.0) / (c * (1.0 - rho))))
}

/// `[r_MD, r_WD, r_MB, r_WB]` for a binary target with class prior `c_B` on
/// class `B` and a binary attribute whose positive share is `ρ_D` inside
/// class `D` and `ρ_B` inside class `B`.
pub fn four_group_weights(rho_d: f64, rho_b: f64, c_b: f64) -> Result<[f64; 4]> {
    open_unit("rho_D", rho_d)?;
    open_unit("rho_B", rho_b)?;
    open_unit("c_B", c_b)?;
    Ok([
        1.0 / (4.0 * (1.0 - rho_d) * (1.0 - c_b)),
        1.0 / (4.0 * rho_d * (1.0 - c_b)),
        1.0 / (4.0 * (1.0 - rho_b) * c_b),
        1.0 / (4.0 * rho_b * c_b),
    ])
}

/// `1/(a_L·a_R)` with `a = ρ` on an aligned axis and `1 − ρ` otherwise.
pub fn multi_bias_weights(rho_l: f64, rho_r: f64, aligned_l: bool, aligned_r: bool) -> Result<f64> {
    open_unit("rho_L", rho_l)?;
    open_unit("rho_R", rho_r)?;
    let a = |rho: f64, aligned: bool| if aligned { rho } else { 1.0 - rho };
    Ok(1.0 / (a(rho_l, aligned_l) * a(rho_r, aligned_r)))
}

/// Per-sample weighting scheme for the reweighted cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum GroupWeights {
    Uniform,
    TwoGroup { rho: f64, classes: usize },
    /// Binary target and binary attribute: `y ∈ {D=0, B=1}`, `b ∈ {M=0, W=1}`.
    FourGroup { rho_d: f64, rho_b: f64, c_b: f64 },
    MultiBias { rho_l: f64, rho_r: f64 },
}

impl GroupWeights {
    /// Two-group or multi-bias weights from the dataset's own aligned
    /// fractions, so that the two-group weights sum to exactly `N`.
    pub fn empirical(ds: &BiasedDataset) -> Self {
        let rho = ds.aligned_fraction();
        match rho.as_slice() {
            [r] => GroupWeights::TwoGroup {
                rho: *r,
                classes: ds.num_classes(),
            },
            _ => GroupWeights::MultiBias {
                rho_l: rho[0],
                rho_r: rho[1],
            },
        }
    }

    /// Four-group parameters estimated from a binary dataset.
    pub fn empirical_four_group(ds: &BiasedDataset) -> Result<Self> {
        if ds.num_classes() != 2 || ds.num_bias() != 2 || ds.bias_axes() != 1 {
            return Err(Error::param("four-group weights need binary targets and attributes"));
        }
        let (y, b) = (ds.labels(), ds.bias(0));
        let count = |cls: usize| y.iter().filter(|&&v| v == cls).count();
        let women = |cls: usize| y.iter().zip(b).filter(|(&v, &w)| v == cls && w == 1).count();
        let (nd, nb) = (count(0), count(1));
        Ok(GroupWeights::FourGroup {
            rho_d: women(0) as f64 / nd.max(1) as f64,
            rho_b: women(1) as f64 / nb.max(1) as f64,
            c_b: nb as f64 / ds.len().max(1) as f64,
        })
    }

    pub fn per_sample(&self, ds: &BiasedDataset) -> Result<Vec<f64>> {
        let n = ds.len();
        match *self {
            GroupWeights::Uniform => Ok(vec![1.0; n]),
            GroupWeights::TwoGroup { rho, classes } => {
                let (ra, rc) = two_group_weights(rho, classes)?;
                Ok((0..n).map(|i| if ds.is_aligned(0, i) { ra } else { rc }).collect())
            }
            GroupWeights::FourGroup { rho_d, rho_b, c_b } => {
                let w = four_group_weights(rho_d, rho_b, c_b)?;
                let (y, b) = (ds.labels(), ds.bias(0));
                (0..n)
                    .map(|i| {
                        if y[i] > 1 || b[i] > 1 {
                            Err(Error::param("four-group weights need binary labels"))
                        } else {
                            Ok(w[2 * y[i] + b[i]])
                        }
                    })
                    .collect()
            }
            GroupWeights::MultiBias { rho_l, rho_r } => {
                if ds.bias_axes() != 2 {
                    return Err(Error::param("multi-bias weights need two bias axes"));
                }
                (0..n)
                    .map(|i| multi_bias_weights(rho_l, rho_r, ds.is_aligned(0, i), ds.is_aligned(1, i)))
                    .collect()
            }
        }
    }
}
