use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use super::pixel_op::Scratch;
use super::system::{per_band, SylvesterSystem};
use crate::error::{Error, Result};
use crate::image::MultiBandImage;

/// Largest number of unknowns (`bands · pixels`) solved densely when the
/// modal solve misses the tolerance.
pub const DENSE_FALLBACK_LIMIT: usize = 1024;

/// Result of [`solve_fusion_detailed`].
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub latent: MultiBandImage,
    /// Achieved relative stationarity residual.
    pub residual: f64,
    /// Refinement sweeps after the initial modal solve.
    pub refinement_iters: usize,
    /// True when the dense fallback produced the answer.
    pub used_dense: bool,
}

/// Minimizer of the fusion objective.
pub fn solve_fusion(system: &SylvesterSystem) -> Result<MultiBandImage> {
    solve_fusion_detailed(system).map(|o| o.latent)
}

/// Solves the normal equations and reports the residual certificate.
///
/// The spectral side is decoupled by eigendecomposing
/// `Λ_LR^{½}·C1·Λ_LR^{½}`; every mode is then a shifted pixel-side system
/// `w·(d·I + R·Rᵀ) = r` solved exactly in the Fourier domain. Iterative
/// refinement absorbs round-off; tiny systems fall back to a dense solve.
pub fn solve_fusion_detailed(system: &SylvesterSystem) -> Result<FusionOutcome> {
    let settings = system.settings;
    let modal = ModalSolver::new(system);
    let mut x = modal.solve(&system.c3);
    let mut residual = system.residual_of(&x);
    let mut iters = 0;
    while residual > settings.solver_tol && iters < settings.max_iters {
        let r = &system.c3 - &system.apply(&x);
        let candidate = &x + &modal.solve(&r);
        let next = system.residual_of(&candidate);
        iters += 1;
        if next >= residual {
            break;
        }
        x = candidate;
        residual = next;
    }
    let mut used_dense = false;
    if residual > settings.solver_tol
        && system.bands() * system.shape().pixel_count() <= DENSE_FALLBACK_LIMIT
    {
        let dense = dense_solve(system)?;
        let dense_residual = system.residual_of(&dense);
        if dense_residual < residual {
            x = dense;
            residual = dense_residual;
            used_dense = true;
        }
    }
    if !(residual <= settings.solver_tol) {
        return Err(Error::NonConvergence {
            iterations: iters,
            residual,
            tolerance: settings.solver_tol,
        });
    }
    Ok(FusionOutcome {
        latent: MultiBandImage::from_parts(system.shape(), x),
        residual,
        refinement_iters: iters,
        used_dense,
    })
}

struct ModalSolver<'a> {
    system: &'a SylvesterSystem,
    /// `Λ_LR^{½}·Q`, mapping mode coefficients back to bands.
    back: Array2<f64>,
    /// `Qᵀ·Λ_LR^{½}`, mapping band rows to modes.
    forward: Array2<f64>,
    shifts: Vec<f64>,
}

impl<'a> ModalSolver<'a> {
    fn new(system: &'a SylvesterSystem) -> Self {
        let m = system.bands();
        let eig = SymmetricEigen::new(system.whitened_c1());
        let sd: Vec<f64> = system.lr_inv_var.iter().map(|w| 1.0 / w.sqrt()).collect();
        let q = &eig.eigenvectors;
        let back = Array2::from_shape_fn((m, m), |(b, i)| sd[b] * q[(b, i)]);
        let forward = back.t().to_owned();
        // eigenvalues are bounded below by λ·min variance; clamp round-off
        let floor = system.lambda_reg * sd.iter().fold(f64::INFINITY, |a, s| a.min(s * s));
        let shifts = eig.eigenvalues.iter().map(|d| d.max(floor)).collect();
        Self {
            system,
            back,
            forward,
            shifts,
        }
    }

    fn solve(&self, rhs: &Array2<f64>) -> Array2<f64> {
        let modes = self.forward.dot(rhs);
        let pixel = &self.system.pixel;
        let n = self.system.shape().pixel_count();
        let w = per_band(&modes, n, |i, r, out, s: &mut Scratch| {
            pixel.solve_shifted(r, self.shifts[i], out, s)
        });
        self.back.dot(&w)
    }
}

/// Dense solve of the vectorized normal equations (row-major `X`).
fn dense_solve(system: &SylvesterSystem) -> Result<Array2<f64>> {
    let m = system.bands();
    let n = system.shape().pixel_count();
    let size = m * n;
    // pixel Gram matrix G = R·Rᵀ, one row per unit vector
    let mut g = vec![0.0; n * n];
    let mut unit = vec![0.0; n];
    let mut scratch = Scratch::default();
    for p in 0..n {
        unit[p] = 1.0;
        system
            .pixel
            .gram(&unit, &mut g[p * n..(p + 1) * n], &mut scratch);
        unit[p] = 0.0;
    }
    let a = DMatrix::from_fn(size, size, |row, col| {
        let (b, p) = (row / n, row % n);
        let (b2, p2) = (col / n, col % n);
        let mut v = if p == p2 { system.c1[(b, b2)] } else { 0.0 };
        if b == b2 {
            v += system.lr_inv_var[b] * g[p2 * n + p];
        }
        v
    });
    let rhs = DVector::from_iterator(size, system.c3.iter().copied());
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("dense fusion system is singular".into()))?,
    };
    Ok(Array2::from_shape_vec((m, n), sol.iter().copied().collect()).expect("m·n entries"))
}
