//! Change-image step: an ℓ2,1-penalized spectral deblurring problem
//! solved by forward-backward splitting with the group soft-threshold
//! proximal operator.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::degradation::{spectral_degrade, BandNoise, SensorModel, SpectralResponse};
use crate::error::{Error, Result};
use crate::image::{ChangeImage, MultiBandImage};

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITERS: usize = 100_000;
const LIPSCHITZ_PADDING: f64 = 1.01;

/// How the forward-backward step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepPolicy {
    /// `η = 1/β` at every step.
    #[default]
    Fixed,
    /// Starts at `4/β` and halves until the quadratic upper bound holds;
    /// the accepted step carries over to the next iteration.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSettings {
    /// Absolute weight of `‖ΔX‖_{2,1}`.
    pub gamma: f64,
    /// Maximum number of forward-backward iterations.
    pub steps: usize,
    pub step_policy: StepPolicy,
    /// Stop once `‖V_{j+1} − V_j‖_F ≤ tol·‖V_j‖_F`; zero disables it.
    pub tol: f64,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            steps: 100,
            step_policy: StepPolicy::Fixed,
            tol: 1e-6,
        }
    }
}

impl CorrectionSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("correction needs at least one step"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid(format!(
                "correction tolerance must be nonnegative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// `Λ_HR^{-½}·L` together with the Lipschitz constant of the data-term
/// gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSpectralOp {
    op: Array2<f64>,
    inv_sd: Vec<f64>,
    lipschitz: f64,
}

impl WhitenedSpectralOp {
    pub fn new(l: &SpectralResponse, noise: &BandNoise) -> Result<Self> {
        Self::from_matrix(l.matrix().view(), noise)
    }

    /// Operator of an HR sensor; a missing spectral part is the identity.
    pub fn from_sensor(sensor: &SensorModel, latent_bands: usize) -> Result<Self> {
        match &sensor.spectral {
            Some(l) => Self::new(l, &sensor.noise),
            None => Self::from_matrix(Array2::eye(latent_bands).view(), &sensor.noise),
        }
    }

    fn from_matrix(l: ArrayView2<f64>, noise: &BandNoise) -> Result<Self> {
        if l.nrows() != noise.bands() {
            return Err(Error::dims(
                "whitening noise bands",
                l.nrows(),
                noise.bands(),
            ));
        }
        let inv_sd: Vec<f64> = noise.variances().iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut op = l.to_owned();
        for (mut row, w) in op.rows_mut().into_iter().zip(&inv_sd) {
            row *= *w;
        }
        let mut w = Self {
            op,
            inv_sd,
            lipschitz: 0.0,
        };
        w.lipschitz = lipschitz_bound(&w);
        Ok(w)
    }

    pub fn op(&self) -> &Array2<f64> {
        &self.op
    }

    /// `β`, an upper bound on the Lipschitz constant of `∇f`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn output_bands(&self) -> usize {
        self.op.nrows()
    }

    pub fn input_bands(&self) -> usize {
        self.op.ncols()
    }

    fn whiten(&self, dy: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = dy.to_owned();
        for (mut row, w) in out.rows_mut().into_iter().zip(&self.inv_sd) {
            row *= *w;
        }
        out
    }

    fn check(&self, dx: &MultiBandImage, dy: &MultiBandImage) -> Result<()> {
        if dx.bands() != self.input_bands() {
            return Err(Error::dims(
                "change image bands",
                self.input_bands(),
                dx.bands(),
            ));
        }
        if dy.bands() != self.output_bands() {
            return Err(Error::dims(
                "predicted change bands",
                self.output_bands(),
                dy.bands(),
            ));
        }
        if dx.shape() != dy.shape() {
            return Err(Error::dims("change grid", dx.shape(), dy.shape()));
        }
        Ok(())
    }
}

/// `Y_pHR = L·X`.
pub fn predicted_hr(x: &MultiBandImage, l: &SpectralResponse) -> Result<MultiBandImage> {
    spectral_degrade(x, l)
}

/// `ΔY_pHR = Y_HR − Y_pHR`.
pub fn predicted_change(y_hr: &MultiBandImage, y_phr: &MultiBandImage) -> Result<MultiBandImage> {
    y_hr.subtract(y_phr)
}

/// `f(ΔX) = ‖Λ_HR^{-½}(ΔY − L·ΔX)‖_F²`.
pub fn f_value(dx: &ChangeImage, dy: &MultiBandImage, w: &WhitenedSpectralOp) -> Result<f64> {
    w.check(dx, dy)?;
    let target = w.whiten(&dy.matrix());
    Ok(data_misfit(&w.op, &dx.matrix(), &target))
}

/// `∇f(ΔX) = 2·Lᵀ·Λ_HR⁻¹·(L·ΔX − ΔY)`.
pub fn grad_f(
    dx: &ChangeImage,
    dy: &MultiBandImage,
    w: &WhitenedSpectralOp,
) -> Result<MultiBandImage> {
    w.check(dx, dy)?;
    let target = w.whiten(&dy.matrix());
    Ok(MultiBandImage::from_parts(
        dx.shape(),
        gradient(&w.op, &dx.matrix(), &target),
    ))
}

fn data_misfit(op: &Array2<f64>, v: &ArrayView2<f64>, target: &Array2<f64>) -> f64 {
    let r = op.dot(v) - target;
    r.iter().map(|x| x * x).sum()
}

fn gradient(op: &Array2<f64>, v: &ArrayView2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let r = op.dot(v) - target;
    op.t().dot(&r) * 2.0
}

fn l21(v: &ArrayView2<f64>) -> f64 {
    v.axis_iter(Axis(1))
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum()
}

/// Group soft-thresholding of every pixel column: the column norm shrinks
/// by `threshold` and columns shorter than it vanish.
pub fn prox_group_soft(u: &MultiBandImage, threshold: f64) -> MultiBandImage {
    let mut out = u.matrix().to_owned();
    shrink_columns(&mut out, threshold);
    MultiBandImage::from_parts(u.shape(), out)
}

fn shrink_columns(a: &mut Array2<f64>, threshold: f64) {
    if threshold <= 0.0 {
        return;
    }
    for mut col in a.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= threshold {
            col.fill(0.0);
        } else {
            col *= 1.0 - threshold / norm;
        }
    }
}

/// `β = 2·σ_max(Λ_HR^{-½}L)²`, by power iteration on `opᵀ·op`, padded by 1%.
pub fn lipschitz_bound(w: &WhitenedSpectralOp) -> f64 {
    let gram = w.op.t().dot(&w.op);
    let m = gram.nrows();
    // deterministic start with no special alignment
    let mut v = Array1::from_shape_fn(m, |i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.7548776662).fract());
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let next = gram.dot(&v);
        let rayleigh = v.dot(&next);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            break;
        }
        v = next / norm;
        let converged = (rayleigh - estimate).abs() <= POWER_TOL * rayleigh.abs();
        estimate = rayleigh.max(estimate);
        if converged {
            break;
        }
    }
    // a zero operator still needs a usable step
    (2.0 * estimate * LIPSCHITZ_PADDING).max(f64::MIN_POSITIVE)
}

/// Result of [`solve_correction_traced`].
#[derive(Debug, Clone)]
pub struct CorrectionOutcome {
    pub change: ChangeImage,
    /// `f + γ‖·‖_{2,1}` at the start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Forward-backward iterations `U = V − η∇f(V)`, `V ← prox_{ηγ‖·‖_{2,1}}(U)`.
pub fn solve_correction(
    dx0: &ChangeImage,
    dy: &MultiBandImage,
    w: &WhitenedSpectralOp,
    settings: &CorrectionSettings,
) -> Result<ChangeImage> {
    solve_correction_traced(dx0, dy, w, settings).map(|o| o.change)
}

pub fn solve_correction_traced(
    dx0: &ChangeImage,
    dy: &MultiBandImage,
    w: &WhitenedSpectralOp,
    settings: &CorrectionSettings,
) -> Result<CorrectionOutcome> {
    settings.validate()?;
    w.check(dx0, dy)?;
    let gamma = settings.gamma;
    let target = w.whiten(&dy.matrix());
    let objective =
        |v: &Array2<f64>| data_misfit(&w.op, &v.view(), &target) + gamma * l21(&v.view());

    let mut v = dx0.matrix().to_owned();
    let mut current = objective(&v);
    let mut trace = vec![current];
    let mut eta = match settings.step_policy {
        StepPolicy::Fixed => 1.0 / w.lipschitz,
        StepPolicy::Backtracking => 4.0 / w.lipschitz,
    };
    let mut iterations = 0;
    for _ in 0..settings.steps {
        let grad = gradient(&w.op, &v.view(), &target);
        let f_v = data_misfit(&w.op, &v.view(), &target);
        let next = loop {
            let mut u = &v - &(&grad * eta);
            shrink_columns(&mut u, eta * gamma);
            if settings.step_policy == StepPolicy::Fixed {
                break u;
            }
            let step = &u - &v;
            let bound =
                f_v + (&grad * &step).sum() + step.iter().map(|x| x * x).sum::<f64>() / (2.0 * eta);
            if data_misfit(&w.op, &u.view(), &target) <= bound * (1.0 + 1e-15) + 1e-300
                || eta <= 1.0 / w.lipschitz
            {
                break u;
            }
            eta *= 0.5;
        };
        iterations += 1;
        let change = (&next - &v).iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = next;
        current = objective(&v);
        trace.push(current);
        if change <= settings.tol * scale || change == 0.0 {
            break;
        }
    }
    Ok(CorrectionOutcome {
        change: ChangeImage::new(MultiBandImage::from_parts(dx0.shape(), v)),
        objective_trace: trace,
        iterations,
    })
}
