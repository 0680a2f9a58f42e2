//! Procedural hyperspectral reference scene.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::unmix::{mix, EndmemberModel};
use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

/// Size and content of a synthetic reference scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSettings {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub endmembers: usize,
    /// Gaussian blobs per endmember abundance field.
    pub blobs: usize,
    /// Exponent applied to the blob fields before normalization; larger
    /// values give sharper material boundaries.
    pub sharpness: f64,
    /// Mean area in pixels of the piecewise-constant parcels (Voronoi
    /// cells) overlaid on the blobs; 0 disables them.
    pub parcel_area: f64,
    /// Share of the parcel layer in every pixel's abundances.
    pub parcel_weight: f64,
}

impl Default for SceneSettings {
    fn default() -> Self {
        Self {
            rows: 120,
            cols: 120,
            bands: 32,
            endmembers: 5,
            blobs: 6,
            sharpness: 3.0,
            parcel_area: 18.0,
            parcel_weight: 0.7,
        }
    }
}

/// Reference image together with the mixture that generated it.
#[derive(Debug, Clone)]
pub struct ReferenceScene {
    pub image: MultiBandImage,
    pub model: EndmemberModel,
}

/// Smooth positive spectra mixed by Gaussian-blob abundance maps.
pub fn synthetic_reference(settings: &SceneSettings, seed: u64) -> Result<ReferenceScene> {
    let SceneSettings {
        rows,
        cols,
        bands,
        endmembers: r,
        blobs,
        sharpness,
        parcel_area,
        parcel_weight,
    } = *settings;
    if r < 2 || bands < 2 || blobs == 0 || !(sharpness > 0.0) {
        return Err(Error::invalid(
            "scene needs at least two endmembers, two bands, one blob and positive sharpness",
        ));
    }
    if !(0.0..=1.0).contains(&parcel_weight)
        || !(parcel_area >= 0.0)
        || (parcel_area == 0.0 && parcel_weight > 0.0)
    {
        return Err(Error::invalid(
            "parcel weight must lie in [0, 1] and needs a positive parcel area",
        ));
    }
    let shape = GridShape::new(rows, cols)?;
    let parcels = if parcel_area > 0.0 {
        ((shape.pixel_count() as f64 / parcel_area).round() as usize).max(1)
    } else {
        0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // distinct albedos, spread evenly and assigned in random order
    let mut albedo: Vec<f64> = (0..r)
        .map(|k| 0.08 + 0.5 * k as f64 / (r - 1) as f64)
        .collect();
    for k in (1..r).rev() {
        albedo.swap(k, rng.random_range(0..=k));
    }
    let mut spectra = Array2::zeros((bands, r));
    for k in 0..r {
        let base = albedo[k];
        let bumps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.08..0.3),
                    rng.random_range(-0.15..0.35),
                )
            })
            .collect();
        for b in 0..bands {
            let t = b as f64 / (bands - 1) as f64;
            let v: f64 = base
                + bumps
                    .iter()
                    .map(|(c, w, a)| a * (-(t - c) * (t - c) / (2.0 * w * w)).exp())
                    .sum::<f64>();
            spectra[(b, k)] = v.clamp(0.02, 1.0);
        }
    }

    let n = shape.pixel_count();
    let mut abundances = Array2::zeros((r, n));
    for k in 0..r {
        let centers: Vec<(f64, f64, f64)> = (0..blobs)
            .map(|_| {
                (
                    rng.random_range(0.0..rows as f64),
                    rng.random_range(0.0..cols as f64),
                    rng.random_range(0.05..0.18) * rows.min(cols) as f64,
                )
            })
            .collect();
        for i in 0..rows {
            for j in 0..cols {
                let field: f64 = 0.02
                    + centers
                        .iter()
                        .map(|(ci, cj, s)| {
                            let (di, dj) = (i as f64 - ci, j as f64 - cj);
                            (-(di * di + dj * dj) / (2.0 * s * s)).exp()
                        })
                        .sum::<f64>();
                abundances[(k, shape.index(i, j))] = field.powf(sharpness);
            }
        }
    }
    for mut col in abundances.columns_mut() {
        let s = col.sum();
        col /= s;
    }

    if parcels > 0 {
        let seeds: Vec<(f64, f64, Vec<f64>)> = (0..parcels)
            .map(|_| {
                let mut mix: Vec<f64> = (0..r)
                    .map(|_| rng.random_range(0.0f64..1.0).powi(4))
                    .collect();
                mix[rng.random_range(0..r)] += 1.0;
                let s: f64 = mix.iter().sum();
                mix.iter_mut().for_each(|v| *v /= s);
                (
                    rng.random_range(0.0..rows as f64),
                    rng.random_range(0.0..cols as f64),
                    mix,
                )
            })
            .collect();
        for i in 0..rows {
            for j in 0..cols {
                let d2 =
                    |s: &(f64, f64, Vec<f64>)| (i as f64 - s.0).powi(2) + (j as f64 - s.1).powi(2);
                let nearest = seeds
                    .iter()
                    .min_by(|a, b| d2(a).total_cmp(&d2(b)))
                    .expect("parcels > 0");
                let p = shape.index(i, j);
                for k in 0..r {
                    abundances[(k, p)] =
                        (1.0 - parcel_weight) * abundances[(k, p)] + parcel_weight * nearest.2[k];
                }
            }
        }
    }
    let model = EndmemberModel::new(spectra, abundances, shape)?;
    Ok(ReferenceScene {
        image: mix(&model),
        model,
    })
}
