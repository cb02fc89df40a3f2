//! Synthetic datasets with known ground-truth entropy, quantized to `r`
//! integer levels and dequantized to bin centers in `[-1, 1]`.

use std::collections::HashMap;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, BsiError, Result};
use crate::predictor::DataDistribution;
use crate::rng::{Role, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataKind {
    PointSet {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        std: f64,
        weights: Vec<f64>,
    },
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub kind: DataKind,
    pub dim: usize,
    #[serde(default = "default_levels")]
    pub r: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_levels() -> u32 {
    256
}

/// Both views of a generated dataset; row `i` of each describes the same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub continuous: Array2<f64>,
    pub levels: Array2<u32>,
    pub r: u32,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.levels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.levels.ncols()
    }

    /// Rebuild from integer levels alone.
    pub fn from_levels(levels: Array2<u32>, r: u32) -> Result<Self> {
        if let Some(bad) = levels.iter().find(|&&l| l >= r) {
            return Err(domain(format!("level {bad} outside 0..{r}")));
        }
        Ok(Self {
            continuous: levels.mapv(|l| dequantize(l, r)),
            levels,
            r,
        })
    }
}

impl DatasetSpec {
    /// A single atom repeated in every sample.
    pub fn one_atom(atom: Vec<f64>, seed: u64) -> Self {
        Self {
            dim: atom.len(),
            kind: DataKind::PointSet {
                atoms: vec![atom],
                weights: vec![1.0],
            },
            r: default_levels(),
            seed,
        }
    }

    /// Two equiprobable 1-D atoms at `-0.5` and `+0.5`.
    pub fn two_atom(seed: u64) -> Self {
        Self {
            dim: 1,
            kind: DataKind::PointSet {
                atoms: vec![vec![-0.5], vec![0.5]],
                weights: vec![0.5, 0.5],
            },
            r: default_levels(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(domain("dataset dimension must be at least 1"));
        }
        if self.r < 2 {
            return Err(domain(format!("r = {} must be at least 2", self.r)));
        }
        let (centers, weights) = match &self.kind {
            DataKind::StandardNormal => return Ok(()),
            DataKind::PointSet { atoms, weights } => (atoms, weights),
            DataKind::GaussianMixture {
                means,
                std,
                weights,
            } => {
                if !(*std >= 0.0 && std.is_finite()) {
                    return Err(domain(format!("component std {std} must be non-negative")));
                }
                (means, weights)
            }
        };
        if centers.is_empty() {
            return Err(domain("dataset has no components"));
        }
        check_dim(centers.len(), weights.len())?;
        for c in centers {
            check_dim(self.dim, c.len())?;
            if c.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(domain("atoms and means must lie in [-1, 1]"));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(domain("weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(domain(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// The generating distribution in normalized units, before quantization.
    pub fn distribution(&self) -> DataDistribution {
        match &self.kind {
            DataKind::PointSet { atoms, weights } => DataDistribution::PointSet {
                atoms: atoms.clone(),
                weights: weights.clone(),
            },
            DataKind::GaussianMixture {
                means,
                std,
                weights,
            } => DataDistribution::GaussianMixture {
                means: means.clone(),
                std: *std,
                weights: weights.clone(),
            },
            DataKind::StandardNormal => DataDistribution::GaussianMixture {
                means: vec![vec![0.0; self.dim]],
                std: 1.0,
                weights: vec![1.0],
            },
        }
    }

    /// The point set after quantization, for point-set data. Atoms landing in
    /// the same bin are merged.
    pub fn quantized_distribution(&self) -> DataDistribution {
        match &self.kind {
            DataKind::PointSet { atoms, weights } => {
                let mut merged: Vec<(Vec<f64>, f64)> = Vec::new();
                for (a, w) in atoms.iter().zip(weights) {
                    let q: Vec<f64> = a
                        .iter()
                        .map(|v| dequantize(quantize(*v, self.r), self.r))
                        .collect();
                    match merged.iter_mut().find(|(m, _)| *m == q) {
                        Some((_, mw)) => *mw += w,
                        None => merged.push((q, *w)),
                    }
                }
                let (atoms, weights) = merged.into_iter().unzip();
                DataDistribution::PointSet { atoms, weights }
            }
            _ => self.distribution(),
        }
    }

    fn draw(&self, stream: &mut Stream) -> Vec<f64> {
        let pick = |weights: &[f64], stream: &mut Stream| {
            let u = stream.uniform();
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return i;
                }
            }
            weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
        };
        match &self.kind {
            DataKind::PointSet { atoms, weights } => atoms[pick(weights, stream)].clone(),
            DataKind::GaussianMixture {
                means,
                std,
                weights,
            } => {
                let m = &means[pick(weights, stream)];
                m.iter().map(|v| v + std * stream.normal()).collect()
            }
            DataKind::StandardNormal => stream.normal_vec(self.dim),
        }
    }
}

/// Draw `count` samples. Sample `i` depends only on `(seed, i)`.
pub fn generate(spec: &DatasetSpec, count: usize) -> Result<Dataset> {
    spec.validate()?;
    if count == 0 {
        return Err(BsiError::Contract("sample count must be at least 1".into()));
    }
    let mut levels = Vec::with_capacity(count * spec.dim);
    for i in 0..count {
        let mut stream = Stream::new(spec.seed, Role::Data, &[i as u64]);
        levels.extend(
            spec.draw(&mut stream)
                .into_iter()
                .map(|v| quantize(v, spec.r)),
        );
    }
    let levels = Array2::from_shape_vec((count, spec.dim), levels).expect("rows have dim entries");
    Dataset::from_levels(levels, spec.r)
}

/// Nearest level of `v` on the grid `2j/(r-1) - 1`, ties to even, clamped to `0..r`.
pub fn quantize(v: f64, r: u32) -> u32 {
    let top = (r - 1) as f64;
    ((v + 1.0) * top / 2.0).round_ties_even().clamp(0.0, top) as u32
}

/// Bin center of level `j` in normalized units.
pub fn dequantize(j: u32, r: u32) -> f64 {
    2.0 * j as f64 / (r - 1) as f64 - 1.0
}

/// Plug-in entropy of the empirical distribution over whole rows, in bits per dimension.
pub fn empirical_entropy_bits_per_dim(levels: &Array2<u32>) -> Result<f64> {
    if levels.nrows() == 0 || levels.ncols() == 0 {
        return Err(BsiError::Contract("entropy of an empty dataset".into()));
    }
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for row in levels.rows() {
        *counts.entry(row.to_vec()).or_default() += 1;
    }
    let total = levels.nrows() as f64;
    let mut freqs: Vec<usize> = counts.into_values().collect();
    freqs.sort_unstable();
    let bits: f64 = freqs
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok(bits / levels.ncols() as f64)
}

/// CSV with header `d0,...,d{n-1}`; integer levels or continuous values.
pub fn write_csv(out: &mut impl Write, data: &Dataset, integer: bool) -> Result<()> {
    let header: Vec<String> = (0..data.dim()).map(|d| format!("d{d}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let row: Vec<String> = if integer {
            data.levels.row(i).iter().map(u32::to_string).collect()
        } else {
            data.continuous
                .row(i)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect()
        };
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
