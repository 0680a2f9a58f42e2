use crate::error::{Error, Result};
use crate::robust::{ChangeMask, ChangeScores};

/// One operating point: pixels with `score ≥ threshold` are declared changed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
}

/// Empirical ROC, ordered by increasing threshold: it starts at
/// `(1, 1)` for `τ = −∞` and ends at `(0, 0)` for `τ = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    /// Builds a curve from points already ordered by increasing threshold.
    pub fn from_points(points: Vec<RocPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a ROC curve needs at least two points"));
        }
        for w in points.windows(2) {
            if !(w[0].threshold <= w[1].threshold && w[0].pfa >= w[1].pfa && w[0].pd >= w[1].pd) {
                return Err(Error::invalid(
                    "ROC points must be monotone in the threshold",
                ));
            }
        }
        if points
            .iter()
            .any(|p| !(0.0..=1.0).contains(&p.pfa) || !(0.0..=1.0).contains(&p.pd))
        {
            return Err(Error::invalid("PFA and PD must lie in [0, 1]"));
        }
        Ok(Self { points })
    }

    /// Point farthest from the no-detection corner `(PFA, PD) = (1, 0)`.
    pub fn optimal_point(&self) -> RocPoint {
        let d = |p: &RocPoint| (1.0 - p.pfa).powi(2) + p.pd.powi(2);
        *self
            .points
            .iter()
            .max_by(|a, b| d(a).total_cmp(&d(b)))
            .expect("curve has points")
    }
}

/// Exact empirical ROC with every distinct score as a threshold.
pub fn roc(scores: &ChangeScores, truth: &ChangeMask) -> Result<RocCurve> {
    if scores.shape() != truth.shape() {
        return Err(Error::dims("ROC truth grid", scores.shape(), truth.shape()));
    }
    roc_from_slices(scores.energy(), truth.as_slice())
}

/// [`roc`] on raw slices, e.g. scores pooled over several pairs.
pub fn roc_from_slices(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::dims("ROC truth length", scores.len(), truth.len()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!(
            "ROC scores must not be NaN, found {s}"
        )));
    }
    let positives = truth.iter().filter(|t| **t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "ROC needs both changed and unchanged pixels in the truth",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // sweep from the highest score down; a point is emitted after each run
    // of equal scores
    let (np, nn) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        pfa: 0.0,
        pd: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: s,
            pfa: fp as f64 / nn,
            pd: tp as f64 / np,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        pfa: 1.0,
        pd: 1.0,
    });
    points.reverse();
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve over `PFA ∈ [0, 1]`.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[0].pfa - w[1].pfa) * (w[0].pd + w[1].pd) / 2.0)
        .sum()
}

/// Distance from `(1, 0)` to the crossing of the curve with the
/// anti-diagonal `PD = 1 − PFA`, divided by `√2`.
pub fn diag_distance(curve: &RocCurve) -> f64 {
    // g > 0 above the anti-diagonal; the curve runs from g = 1 to g = −1
    let g = |p: &RocPoint| p.pd + p.pfa - 1.0;
    for w in curve.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ga, gb) = (g(a), g(b));
        if ga >= 0.0 && gb <= 0.0 {
            let t = if ga == gb { 0.0 } else { ga / (ga - gb) };
            let pfa = a.pfa + t * (b.pfa - a.pfa);
            let pd = a.pd + t * (b.pd - a.pd);
            return (((1.0 - pfa).powi(2) + pd.powi(2)).sqrt() / std::f64::consts::SQRT_2)
                .clamp(0.0, 1.0);
        }
    }
    0.0
}
