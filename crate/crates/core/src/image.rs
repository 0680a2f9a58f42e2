//! Multi-band image containers.
//!
//! An image with `B` bands over an `rows × cols` grid is stored as a
//! `B × n` matrix (`n = rows · cols`) in row-major order, so each row is one
//! band in raster order and each column is the spectral vector of one pixel.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Pixel grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "grid shape must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels `rows · cols`.
    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Raster index of pixel `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// A `bands × pixels` real image.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandImage {
    shape: GridShape,
    values: Array2<f64>,
    band_centers: Option<Vec<f64>>,
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

impl MultiBandImage {
    /// Builds an image from band-major values (`bands` consecutive rasters).
    pub fn new(bands: usize, shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if bands == 0 {
            return Err(Error::invalid("image must have at least one band"));
        }
        let expected = bands * shape.pixel_count();
        if values.len() != expected {
            return Err(Error::dims(
                "image values",
                format!("{expected} values ({bands} bands x {shape})"),
                format!("{} values", values.len()),
            ));
        }
        check_finite(&values)?;
        let values = Array2::from_shape_vec((bands, shape.pixel_count()), values)
            .expect("length checked above");
        Ok(Self {
            shape,
            values,
            band_centers: None,
        })
    }

    /// Wraps a `bands × pixels` matrix.
    pub fn from_array(shape: GridShape, values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("image must have at least one band"));
        }
        if values.ncols() != shape.pixel_count() {
            return Err(Error::dims(
                "image matrix columns",
                shape.pixel_count(),
                values.ncols(),
            ));
        }
        let values = values.as_standard_layout().into_owned();
        check_finite(values.as_slice().expect("standard layout"))?;
        Ok(Self {
            shape,
            values,
            band_centers: None,
        })
    }

    pub fn zeros(bands: usize, shape: GridShape) -> Self {
        Self {
            shape,
            values: Array2::zeros((bands, shape.pixel_count())),
            band_centers: None,
        }
    }

    pub fn filled(bands: usize, shape: GridShape, value: f64) -> Self {
        Self {
            shape,
            values: Array2::from_elem((bands, shape.pixel_count()), value),
            band_centers: None,
        }
    }

    /// Attaches band-center wavelengths (nm), one per band.
    pub fn with_band_centers(mut self, centers: Vec<f64>) -> Result<Self> {
        if centers.len() != self.bands() {
            return Err(Error::dims("band centers", self.bands(), centers.len()));
        }
        check_finite(&centers)?;
        self.band_centers = Some(centers);
        Ok(self)
    }

    pub fn band_centers(&self) -> Option<&[f64]> {
        self.band_centers.as_deref()
    }

    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn pixel_count(&self) -> usize {
        self.shape.pixel_count()
    }

    /// The underlying `bands × pixels` matrix.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.values
    }

    /// Band-major raw values.
    pub fn as_slice(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("images are kept in standard layout")
    }

    /// Raster of band `b`.
    pub fn band(&self, b: usize) -> ArrayView1<'_, f64> {
        self.values.row(b)
    }

    /// Spectral vector of pixel `p`.
    pub fn pixel(&self, p: usize) -> ArrayView1<'_, f64> {
        self.values.column(p)
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.values[[band, self.shape.index(row, col)]]
    }

    /// Same geometry and band count.
    pub fn same_layout(&self, other: &MultiBandImage) -> bool {
        self.shape == other.shape && self.bands() == other.bands()
    }

    pub(crate) fn check_same_layout(
        &self,
        other: &MultiBandImage,
        context: &'static str,
    ) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::dims(
                context,
                format!("{} bands x {}", self.bands(), self.shape),
                format!("{} bands x {}", other.bands(), other.shape),
            ))
        }
    }

    /// Elementwise `self − other`.
    pub fn subtract(&self, other: &MultiBandImage) -> Result<MultiBandImage> {
        self.check_same_layout(other, "subtract")?;
        Ok(Self {
            shape: self.shape,
            values: &self.values - &other.values,
            band_centers: self.band_centers.clone(),
        })
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &MultiBandImage) -> Result<MultiBandImage> {
        self.check_same_layout(other, "add")?;
        Ok(Self {
            shape: self.shape,
            values: &self.values + &other.values,
            band_centers: self.band_centers.clone(),
        })
    }

    pub fn scaled(&self, factor: f64) -> MultiBandImage {
        Self {
            shape: self.shape,
            values: &self.values * factor,
            band_centers: self.band_centers.clone(),
        }
    }

    /// Frobenius norm of the value matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &MultiBandImage) -> Result<f64> {
        self.check_same_layout(other, "inner product")?;
        let mut acc = 0.0;
        Zip::from(&self.values)
            .and(&other.values)
            .for_each(|a, b| acc += a * b);
        Ok(acc)
    }

    /// Euclidean norm of each pixel's spectral vector.
    pub fn column_norms(&self) -> Vec<f64> {
        self.values
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Builds an image from an internally computed matrix of known shape.
    pub(crate) fn from_parts(shape: GridShape, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.ncols(), shape.pixel_count());
        Self {
            shape,
            values: values.as_standard_layout().into_owned(),
            band_centers: None,
        }
    }
}

/// HR hyperspectral change image `ΔX = X(t_i) − X(t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeImage {
    image: MultiBandImage,
}

impl ChangeImage {
    pub fn new(image: MultiBandImage) -> Self {
        Self { image }
    }

    pub fn zeros(bands: usize, shape: GridShape) -> Self {
        Self::new(MultiBandImage::zeros(bands, shape))
    }

    /// Change image between two latent images, `after − before` in the
    /// convention `X(t_i) − X(t_j)`.
    pub fn between(latent_ti: &MultiBandImage, latent_tj: &MultiBandImage) -> Result<Self> {
        latent_ti.subtract(latent_tj).map(Self::new)
    }

    pub fn image(&self) -> &MultiBandImage {
        &self.image
    }

    pub fn into_image(self) -> MultiBandImage {
        self.image
    }

    /// `Σ_p ‖Δx_p‖₂`.
    pub fn l21_norm(&self) -> f64 {
        self.image.column_norms().iter().sum()
    }
}

impl std::ops::Deref for ChangeImage {
    type Target = MultiBandImage;

    fn deref(&self) -> &MultiBandImage {
        &self.image
    }
}
