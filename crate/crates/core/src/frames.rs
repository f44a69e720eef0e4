//! Regularly spaced unit-vector frames used as input matrices.
//!
//! A frame whose Gram-type matrix `BBᵀ` is diagonal spreads the input
//! energy evenly over the state directions; for the circle frame it is a
//! multiple of the identity.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Column-count guard for sphere frames.
pub const MAX_FRAME_COLUMNS: usize = 1 << 20;

/// `2 × m` matrix with columns `(cos 2kπ/m, sin 2kπ/m)` for `k = 1..m`.
pub fn circle_frame(m: usize) -> Result<DMatrix<f64>> {
    if m <= 2 {
        return Err(Error::Domain(format!("circle frame needs m > 2, got {m}")));
    }
    Ok(DMatrix::from_fn(2, m, |r, c| {
        let theta = 2.0 * PI * (c + 1) as f64 / m as f64;
        if r == 0 {
            theta.cos()
        } else {
            theta.sin()
        }
    }))
}

/// Circle frame with each angle perturbed uniformly by at most
/// `max_jitter` radians.
pub fn jittered_circle_frame(m: usize, max_jitter: f64, seed: u64) -> Result<DMatrix<f64>> {
    if m <= 2 {
        return Err(Error::Domain(format!("circle frame needs m > 2, got {m}")));
    }
    if !(max_jitter >= 0.0) || !max_jitter.is_finite() {
        return Err(Error::Domain(format!(
            "jitter must be finite and >= 0, got {max_jitter}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = DMatrix::zeros(2, m);
    for c in 0..m {
        let jitter = if max_jitter > 0.0 {
            rng.random_range(-max_jitter..=max_jitter)
        } else {
            0.0
        };
        let theta = 2.0 * PI * (c + 1) as f64 / m as f64 + jitter;
        b[(0, c)] = theta.cos();
        b[(1, c)] = theta.sin();
    }
    Ok(b)
}

/// Angle counts `N₁, …, N_{n−1}` of a parametrically regular sphere frame
/// in `ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    counts: Vec<usize>,
}

impl FrameSpec {
    /// Every count must exceed 2 and there must be at least two of them
    /// (`n ≥ 3`; the planar case is [`circle_frame`]).
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Domain(format!(
                "sphere frame needs n >= 3 (at least two angle counts), got {}",
                counts.len()
            )));
        }
        if let Some(bad) = counts.iter().find(|&&c| c <= 2) {
            return Err(Error::Domain(format!(
                "angle counts must exceed 2, got {bad}"
            )));
        }
        let spec = FrameSpec { counts };
        let m = spec
            .counts
            .iter()
            .skip(1)
            .try_fold(spec.counts[0] as u128 + 1, |acc, &c| {
                acc.checked_mul(c as u128)
            })
            .unwrap_or(u128::MAX);
        if m > MAX_FRAME_COLUMNS as u128 {
            return Err(Error::Capacity {
                context: "sphere_frame",
                requested: m,
                limit: MAX_FRAME_COLUMNS as u128,
            });
        }
        Ok(spec)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.len() + 1
    }

    /// `(N₁+1)·N₂···N_{n−1}`.
    pub fn m(&self) -> usize {
        (self.counts[0] + 1) * self.counts[1..].iter().product::<usize>()
    }

    /// `(N₁+2)/2 · N₂···N_{n−1}`, the predicted largest eigenvalue of `BBᵀ`.
    pub fn predicted_max_eigenvalue(&self) -> f64 {
        (self.counts[0] as f64 + 2.0) / 2.0 * self.counts[1..].iter().product::<usize>() as f64
    }
}

/// Unit vectors at evenly spaced generalized Euler angles.
///
/// `θ₁ = jπ/N₁` for `j = 0..=N₁` and `θ_k = 2jπ/N_k` for `j = 1..=N_k`;
/// coordinates are `x_n = cos θ₁`, `x_{n−1} = sin θ₁ cos θ₂`, …,
/// `x₂ = sin θ₁ ⋯ sin θ_{n−2} cos θ_{n−1}`, `x₁ = sin θ₁ ⋯ sin θ_{n−1}`.
/// Columns run with `θ₁` outermost. The pole columns repeat.
pub fn sphere_frame(spec: &FrameSpec) -> DMatrix<f64> {
    let n = spec.n();
    let m = spec.m();
    let mut b = DMatrix::zeros(n, m);
    let mut digits = vec![0usize; n - 1];
    for col in 0..m {
        let angles: Vec<f64> = digits
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                if k == 0 {
                    j as f64 * PI / spec.counts[0] as f64
                } else {
                    2.0 * (j + 1) as f64 * PI / spec.counts[k] as f64
                }
            })
            .collect();
        let mut sin_prod = 1.0;
        for (k, theta) in angles.iter().enumerate() {
            b[(n - 1 - k, col)] = sin_prod * theta.cos();
            sin_prod *= theta.sin();
        }
        b[(0, col)] = sin_prod;

        // odometer over the angle indices, last angle fastest
        for k in (0..n - 1).rev() {
            let radix = if k == 0 {
                spec.counts[0] + 1
            } else {
                spec.counts[k]
            };
            digits[k] += 1;
            if digits[k] < radix {
                break;
            }
            digits[k] = 0;
        }
    }
    b
}

/// Summary of `BBᵀ` for a frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameSpectrum {
    pub n: usize,
    pub m: usize,
    pub gram_diagonal: Vec<f64>,
    pub max_off_diagonal: f64,
    pub max_eigenvalue: f64,
    /// Closed-form prediction: `m/2` for circle frames,
    /// `(N₁+2)/2·N₂···N_{n−1}` for sphere frames.
    pub formula_value: f64,
}

impl FrameSpectrum {
    pub fn of(b: &DMatrix<f64>, formula_value: f64) -> Self {
        let g = b * b.transpose();
        let n = g.nrows();
        let mut max_off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    max_off = max_off.max(g[(i, j)].abs());
                }
            }
        }
        FrameSpectrum {
            n,
            m: b.ncols(),
            gram_diagonal: g.diagonal().iter().copied().collect(),
            max_off_diagonal: max_off,
            max_eigenvalue: numerics::symmetric_max_eigenvalue(&g),
            formula_value,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum serializes")
    }
}

/// One row per column: `column, x1, …, xn`.
pub fn frame_csv(b: &DMatrix<f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["column".to_string()];
    header.extend((1..=b.nrows()).map(|i| format!("x{i}")));
    w.write_record(&header).expect("in-memory write");
    for (c, col) in b.column_iter().enumerate() {
        let mut row = vec![(c + 1).to_string()];
        row.extend(col.iter().map(|&v| crate::io::fmt_f64(v)));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}
