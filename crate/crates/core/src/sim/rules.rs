//! Abundance-editing change rules and change-mask geometry.

use super::unmix::{project_simplex, EndmemberModel};
use crate::error::{Error, Result};
use crate::image::GridShape;
use crate::robust::ChangeMask;

/// Edit applied to the abundances of masked pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChangeRule {
    /// No change.
    Identity,
    /// Exchanges the abundances of endmembers `i` and `j`.
    Swap { i: usize, j: usize },
    /// Endmember `i` is replaced by endmember `j`: its abundance moves to `j`.
    Replace { i: usize, j: usize },
    /// Abundance of `i` multiplied by `factor`, then renormalized.
    Rescale { i: usize, factor: f64 },
}

impl ChangeRule {
    pub fn name(&self) -> &'static str {
        match self {
            ChangeRule::Identity => "identity",
            ChangeRule::Swap { .. } => "swap",
            ChangeRule::Replace { .. } => "replace",
            ChangeRule::Rescale { .. } => "rescale",
        }
    }

    fn validate(&self, r: usize) -> Result<()> {
        let check = |k: usize| {
            if k >= r {
                Err(Error::invalid(format!(
                    "endmember index {k} out of range for {r} endmembers"
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            ChangeRule::Identity => Ok(()),
            ChangeRule::Swap { i, j } | ChangeRule::Replace { i, j } => {
                check(i)?;
                check(j)
            }
            ChangeRule::Rescale { i, factor } => {
                check(i)?;
                if !(factor > 0.0) || !factor.is_finite() {
                    return Err(Error::invalid(format!(
                        "rescale factor must be positive, got {factor}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Applies `rule` to the abundances of masked pixels; other pixels are
/// left bit-identical.
pub fn apply_change_rule(
    model: &EndmemberModel,
    mask: &ChangeMask,
    rule: ChangeRule,
) -> Result<EndmemberModel> {
    rule.validate(model.endmember_count())?;
    if mask.shape() != model.shape() {
        return Err(Error::dims("change mask grid", model.shape(), mask.shape()));
    }
    let mut out = model.clone();
    if rule == ChangeRule::Identity {
        return Ok(out);
    }
    let a = out.abundances_mut();
    let mut column = vec![0.0; a.nrows()];
    for (p, &changed) in mask.as_slice().iter().enumerate() {
        if !changed {
            continue;
        }
        for (k, v) in column.iter_mut().enumerate() {
            *v = a[(k, p)];
        }
        match rule {
            ChangeRule::Identity => {}
            ChangeRule::Swap { i, j } => column.swap(i, j),
            ChangeRule::Replace { i, j } => {
                if i != j {
                    column[j] += column[i];
                    column[i] = 0.0;
                }
            }
            ChangeRule::Rescale { i, factor } => {
                column[i] *= factor;
                let s: f64 = column.iter().sum();
                if s > 0.0 {
                    column.iter_mut().for_each(|v| *v /= s);
                }
            }
        }
        project_simplex(&mut column);
        for (k, v) in column.iter().enumerate() {
            a[(k, p)] = *v;
        }
    }
    Ok(out)
}

/// Geometric primitive of a change mask, in HR pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Pixel {
        row: usize,
        col: usize,
    },
    /// Axis-aligned rectangle with top-left corner `(row, col)`.
    Rect {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    /// Right isosceles triangle with the right angle at `(row, col)`;
    /// row `row + k` covers columns `col ..= col + k` for `k < size`.
    Triangle {
        row: usize,
        col: usize,
        size: usize,
    },
}

impl Region {
    pub fn square(row: usize, col: usize, size: usize) -> Self {
        Region::Rect {
            row,
            col,
            height: size,
            width: size,
        }
    }

    fn bounds(&self) -> (usize, usize, usize, usize) {
        match *self {
            Region::Pixel { row, col } => (row, col, 1, 1),
            Region::Rect {
                row,
                col,
                height,
                width,
            } => (row, col, height, width),
            Region::Triangle { row, col, size } => (row, col, size, size),
        }
    }

    fn contains(&self, r: usize, c: usize) -> bool {
        let (r0, c0, h, w) = self.bounds();
        if r < r0 || c < c0 || r >= r0 + h || c >= c0 + w {
            return false;
        }
        match self {
            Region::Triangle { .. } => c - c0 <= r - r0,
            _ => true,
        }
    }
}

/// Union of regions on an HR grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    pub shape: GridShape,
    pub regions: Vec<Region>,
}

pub fn rasterize_mask(spec: &MaskSpec) -> Result<ChangeMask> {
    let mut mask = ChangeMask::empty(spec.shape);
    for region in &spec.regions {
        let (r0, c0, h, w) = region.bounds();
        if h == 0 || w == 0 || r0 + h > spec.shape.rows() || c0 + w > spec.shape.cols() {
            return Err(Error::invalid(format!(
                "region {region:?} does not fit in {}",
                spec.shape
            )));
        }
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                if region.contains(r, c) {
                    mask.set(r, c, true);
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn model() -> EndmemberModel {
        let m = Array2::from_elem((2, 3), 0.5);
        let a = Array2::from_shape_vec((3, 2), vec![0.7, 0.2, 0.3, 0.5, 0.0, 0.3]).unwrap();
        EndmemberModel::new(m, a, GridShape::new(1, 2).unwrap()).unwrap()
    }

    #[test]
    fn swap_exchanges_masked_abundances() {
        let mask = ChangeMask::new(vec![true, false], GridShape::new(1, 2).unwrap()).unwrap();
        let out = apply_change_rule(&model(), &mask, ChangeRule::Swap { i: 0, j: 1 }).unwrap();
        let a = out.abundances();
        assert_eq!((a[(0, 0)], a[(1, 0)], a[(2, 0)]), (0.3, 0.7, 0.0));
        assert_eq!(a.column(1), model().abundances().column(1));
    }

    #[test]
    fn identity_and_empty_mask_are_no_ops() {
        let full = ChangeMask::new(vec![true, true], GridShape::new(1, 2).unwrap()).unwrap();
        assert_eq!(
            apply_change_rule(&model(), &full, ChangeRule::Identity).unwrap(),
            model()
        );
        let empty = ChangeMask::empty(GridShape::new(1, 2).unwrap());
        for rule in [
            ChangeRule::Swap { i: 0, j: 2 },
            ChangeRule::Replace { i: 1, j: 0 },
            ChangeRule::Rescale { i: 0, factor: 3.0 },
        ] {
            assert_eq!(apply_change_rule(&model(), &empty, rule).unwrap(), model());
        }
    }

    #[test]
    fn replace_and_rescale_stay_on_simplex() {
        let full = ChangeMask::new(vec![true, true], GridShape::new(1, 2).unwrap()).unwrap();
        let out = apply_change_rule(&model(), &full, ChangeRule::Replace { i: 0, j: 2 }).unwrap();
        assert_eq!(out.abundances()[(0, 0)], 0.0);
        assert!((out.abundances()[(2, 0)] - 0.7).abs() < 1e-15);
        let out =
            apply_change_rule(&model(), &full, ChangeRule::Rescale { i: 1, factor: 4.0 }).unwrap();
        for col in out.abundances().columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        // 0.3·4 / (0.7 + 1.2 + 0) on pixel 0
        assert!((out.abundances()[(1, 0)] - 1.2 / 1.9).abs() < 1e-12);
    }

    #[test]
    fn invalid_rules_rejected() {
        let full = ChangeMask::new(vec![true, true], GridShape::new(1, 2).unwrap()).unwrap();
        assert!(apply_change_rule(&model(), &full, ChangeRule::Swap { i: 0, j: 3 }).is_err());
        assert!(
            apply_change_rule(&model(), &full, ChangeRule::Rescale { i: 0, factor: 0.0 }).is_err()
        );
    }

    #[test]
    fn rasterization_examples() {
        let shape = GridShape::new(6, 7).unwrap();
        let empty = MaskSpec {
            shape,
            regions: vec![],
        };
        assert_eq!(rasterize_mask(&empty).unwrap().count(), 0);
        let full = MaskSpec {
            shape,
            regions: vec![Region::Rect {
                row: 0,
                col: 0,
                height: 6,
                width: 7,
            }],
        };
        assert_eq!(rasterize_mask(&full).unwrap().count(), 42);
        let sq = rasterize_mask(&MaskSpec {
            shape,
            regions: vec![Region::square(2, 3, 3)],
        })
        .unwrap();
        let set: Vec<usize> = (0..42).filter(|&p| sq.as_slice()[p]).collect();
        assert_eq!(set, vec![17, 18, 19, 24, 25, 26, 31, 32, 33]);
        let tri = rasterize_mask(&MaskSpec {
            shape,
            regions: vec![
                Region::Triangle {
                    row: 0,
                    col: 0,
                    size: 3,
                },
                Region::Pixel { row: 5, col: 6 },
            ],
        })
        .unwrap();
        assert_eq!(tri.count(), 7);
        assert!(tri.get(2, 2) && !tri.get(0, 1) && tri.get(5, 6));
        let out = MaskSpec {
            shape,
            regions: vec![Region::square(5, 5, 2)],
        };
        assert!(rasterize_mask(&out).is_err());
    }
}
