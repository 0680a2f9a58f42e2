//! Linear mixing model and a simplex-constrained unmixing.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

const SIMPLEX_TOL: f64 = 1e-6;
const INNER_ITERS: usize = 30;

/// `X = M·A` with nonnegative endmember spectra `M` (bands × R) and
/// abundances `A` (R × pixels) on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberModel {
    endmembers: Array2<f64>,
    abundances: Array2<f64>,
    shape: GridShape,
}

impl EndmemberModel {
    pub fn new(endmembers: Array2<f64>, abundances: Array2<f64>, shape: GridShape) -> Result<Self> {
        let r = endmembers.ncols();
        if r < 2 {
            return Err(Error::invalid(format!(
                "at least two endmembers are required, got {r}"
            )));
        }
        if abundances.nrows() != r {
            return Err(Error::dims("abundance rows", r, abundances.nrows()));
        }
        if abundances.ncols() != shape.pixel_count() {
            return Err(Error::dims(
                "abundance columns",
                shape.pixel_count(),
                abundances.ncols(),
            ));
        }
        if let Some(v) = endmembers.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "endmember entries must be nonnegative, found {v}"
            )));
        }
        for (p, col) in abundances.axis_iter(Axis(1)).enumerate() {
            let sum: f64 = col.sum();
            if col.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL
            {
                return Err(Error::invalid(format!(
                    "abundances of pixel {p} are off the simplex"
                )));
            }
        }
        Ok(Self {
            endmembers,
            abundances,
            shape,
        })
    }

    pub(crate) fn from_parts(
        endmembers: Array2<f64>,
        abundances: Array2<f64>,
        shape: GridShape,
    ) -> Self {
        Self {
            endmembers,
            abundances,
            shape,
        }
    }

    pub fn endmembers(&self) -> &Array2<f64> {
        &self.endmembers
    }

    pub fn abundances(&self) -> &Array2<f64> {
        &self.abundances
    }

    pub(crate) fn abundances_mut(&mut self) -> &mut Array2<f64> {
        &mut self.abundances
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn bands(&self) -> usize {
        self.endmembers.nrows()
    }

    pub fn endmember_count(&self) -> usize {
        self.endmembers.ncols()
    }
}

/// `X = M·A` as an image.
pub fn mix(model: &EndmemberModel) -> MultiBandImage {
    MultiBandImage::from_parts(model.shape, model.endmembers.dot(&model.abundances))
}

/// Euclidean projection onto `{a ≥ 0, Σa = 1}` (sort-based).
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Result of [`unmix`].
#[derive(Debug, Clone)]
pub struct Unmixing {
    pub model: EndmemberModel,
    /// `‖X − M·A‖_F / ‖X‖_F`.
    pub relative_error: f64,
}

/// Successive projection to pick `r` extreme pixels as initial endmembers,
/// then alternating updates: projected accelerated gradient on the simplex
/// for the abundances and nonnegative least squares (clipped) for the
/// endmembers. The seed breaks ties between equally extreme pixels.
pub fn unmix(x_ref: &MultiBandImage, r: usize, iters: usize, seed: u64) -> Result<Unmixing> {
    let (m, n) = (x_ref.bands(), x_ref.pixel_count());
    if r < 2 || r > m || r > n {
        return Err(Error::invalid(format!(
            "endmember count {r} must lie in [2, min(bands = {m}, pixels = {n})]"
        )));
    }
    if iters == 0 {
        return Err(Error::invalid("unmixing needs at least one iteration"));
    }
    if let Some(v) = x_ref.as_slice().iter().find(|v| **v < 0.0) {
        return Err(Error::invalid(format!(
            "reference image must be nonnegative, found {v}"
        )));
    }
    let x = x_ref.matrix().to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = successive_projection(&x, r, &mut rng);
    let mut endmembers = Array2::zeros((m, r));
    for (k, &p) in picks.iter().enumerate() {
        endmembers.column_mut(k).assign(&x.column(p));
    }
    let mut abundances = Array2::from_elem((r, n), 1.0 / r as f64);
    for _ in 0..iters {
        update_abundances(&x, &endmembers, &mut abundances);
        update_endmembers(&x, &abundances, &mut endmembers);
    }
    update_abundances(&x, &endmembers, &mut abundances);
    let fit = &x - &endmembers.dot(&abundances);
    let norm = x_ref.frobenius_norm();
    let relative_error = if norm > 0.0 {
        fit.iter().map(|v| v * v).sum::<f64>().sqrt() / norm
    } else {
        0.0
    };
    Ok(Unmixing {
        model: EndmemberModel::from_parts(endmembers, abundances, x_ref.shape()),
        relative_error,
    })
}

fn successive_projection(x: &Array2<f64>, r: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut residual = x.clone();
    let mut picks = Vec::with_capacity(r);
    for _ in 0..r {
        let norms: Vec<f64> = residual.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
        let best = norms.iter().copied().fold(0.0, f64::max);
        let candidates: Vec<usize> = (0..norms.len())
            .filter(|&p| norms[p] >= best * (1.0 - 1e-9) && !picks.contains(&p))
            .collect();
        let p = if candidates.is_empty() {
            (0..norms.len()).find(|p| !picks.contains(p)).unwrap_or(0)
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        picks.push(p);
        if norms[p] > 0.0 {
            let u = residual.column(p).to_owned() / norms[p].sqrt();
            let proj = u.dot(&residual);
            for (b, mut row) in residual.rows_mut().into_iter().enumerate() {
                row.scaled_add(-u[b], &proj);
            }
        }
    }
    picks
}

fn update_abundances(x: &Array2<f64>, m: &Array2<f64>, a: &mut Array2<f64>) {
    let g = m.t().dot(m);
    let h = m.t().dot(x);
    let lmax = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)])
        .symmetric_eigenvalues()
        .max();
    if !(lmax > 0.0) {
        return;
    }
    let step = 1.0 / lmax;
    let mut y = a.clone();
    let mut t = 1.0f64;
    for _ in 0..INNER_ITERS {
        let grad = g.dot(&y) - &h;
        let mut next = &y - &(grad * step);
        for mut col in next.axis_iter_mut(Axis(1)) {
            let mut v = col.to_vec();
            project_simplex(&mut v);
            col.assign(&ndarray::Array1::from(v));
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + &((&next - &*a) * ((t - 1.0) / t_next));
        *a = next;
        t = t_next;
    }
}

fn update_endmembers(x: &Array2<f64>, a: &Array2<f64>, m: &mut Array2<f64>) {
    let r = a.nrows();
    let aat = a.dot(&a.t());
    let ridge = 1e-12 * (0..r).map(|i| aat[(i, i)]).sum::<f64>().max(1e-300);
    let gram = DMatrix::from_fn(r, r, |i, j| aat[(i, j)] + if i == j { ridge } else { 0.0 });
    let Some(inv) = gram.try_inverse() else {
        return;
    };
    let xat = x.dot(&a.t());
    let inv = Array2::from_shape_fn((r, r), |(i, j)| inv[(i, j)]);
    let mut next = xat.dot(&inv);
    next.mapv_inplace(|v| v.max(0.0));
    *m = next;
}
