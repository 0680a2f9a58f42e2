//! Per-pixel change energies and binary change maps.

use crate::error::{Error, Result};
use crate::image::{ChangeImage, GridShape};

/// Nonnegative change energy of every HR pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeScores {
    energy: Vec<f64>,
    shape: GridShape,
}

impl ChangeScores {
    pub fn new(energy: Vec<f64>, shape: GridShape) -> Result<Self> {
        if energy.len() != shape.pixel_count() {
            return Err(Error::dims(
                "change scores length",
                shape.pixel_count(),
                energy.len(),
            ));
        }
        if let Some(index) = energy.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::NonFinite {
                index,
                value: energy[index],
            });
        }
        Ok(Self { energy, shape })
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn max(&self) -> f64 {
        self.energy.iter().copied().fold(0.0, f64::max)
    }
}

/// Binary HR change map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMask {
    mask: Vec<bool>,
    shape: GridShape,
}

impl ChangeMask {
    pub fn new(mask: Vec<bool>, shape: GridShape) -> Result<Self> {
        if mask.len() != shape.pixel_count() {
            return Err(Error::dims(
                "change mask length",
                shape.pixel_count(),
                mask.len(),
            ));
        }
        Ok(Self { mask, shape })
    }

    pub fn empty(shape: GridShape) -> Self {
        Self {
            mask: vec![false; shape.pixel_count()],
            shape,
        }
    }

    pub fn from_fn(shape: GridShape, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(shape.pixel_count());
        for r in 0..shape.rows() {
            for c in 0..shape.cols() {
                mask.push(f(r, c));
            }
        }
        Self { mask, shape }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[self.shape.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = self.shape.index(row, col);
        self.mask[i] = value;
    }

    /// Number of changed pixels.
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn union(&self, other: &ChangeMask) -> Result<ChangeMask> {
        if self.shape != other.shape {
            return Err(Error::dims("mask union grid", self.shape, other.shape));
        }
        Ok(Self {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a || *b)
                .collect(),
            shape: self.shape,
        })
    }
}

/// Euclidean norm of every pixel column of the change image.
pub fn energy_image(dx: &ChangeImage) -> ChangeScores {
    ChangeScores {
        energy: dx.column_norms(),
        shape: dx.shape(),
    }
}

/// `mask[p] = energy[p] ≥ τ`.
pub fn threshold_map(scores: &ChangeScores, tau: f64) -> ChangeMask {
    ChangeMask {
        mask: scores.energy.iter().map(|&e| e >= tau).collect(),
        shape: scores.shape,
    }
}

/// Mean over a cyclic `(2r+1) × (2r+1)` window around every pixel.
pub fn box_smooth(scores: &ChangeScores, radius: usize) -> ChangeScores {
    if radius == 0 {
        return scores.clone();
    }
    let (rows, cols) = (scores.shape.rows(), scores.shape.cols());
    let side = 2 * radius + 1;
    let wrap = |i: usize, off: usize, len: usize| (i + len * side - radius + off) % len;
    let mut horiz = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &scores.energy[r * cols..(r + 1) * cols];
        for c in 0..cols {
            horiz[r * cols + c] = (0..side).map(|o| row[wrap(c, o, cols)]).sum();
        }
    }
    let norm = (side * side) as f64;
    let mut energy = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let s: f64 = (0..side).map(|o| horiz[wrap(r, o, rows) * cols + c]).sum();
            // clamp round-off below zero
            energy[r * cols + c] = (s / norm).max(0.0);
        }
    }
    ChangeScores {
        energy,
        shape: scores.shape,
    }
}

/// Spatially regularized change-vector analysis: box smoothing of the
/// energies followed by thresholding.
pub fn scva(scores: &ChangeScores, smoothing_radius: usize, tau: f64) -> ChangeMask {
    threshold_map(&box_smooth(scores, smoothing_radius), tau)
}

/// Otsu threshold on a histogram of the energies.
///
/// The returned `τ` separates the two classes with maximal between-class
/// variance. When all energies are equal there is nothing to separate and
/// the threshold lies above the maximum, so the map is empty.
pub fn otsu_threshold(scores: &ChangeScores, bins: usize) -> f64 {
    let bins = bins.max(2);
    let e = &scores.energy;
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return above(hi);
    }
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0usize; bins];
    for &v in e {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        hist[b] += 1;
    }
    let total = e.len() as f64;
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &h)| h as f64 * center(b))
        .sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_bin) = (-1.0, 0);
    for (b, &h) in hist.iter().enumerate().take(bins - 1) {
        w0 += h as f64;
        sum0 += h as f64 * center(b);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best {
            best = between;
            best_bin = b;
        }
    }
    lo + (best_bin + 1) as f64 * width
}

fn above(v: f64) -> f64 {
    let next = v + v.abs() * 1e-12;
    if next > v {
        next
    } else {
        f64::MIN_POSITIVE.max(v * 2.0)
    }
}
