//! Pixel grids holding projected densities, and the image error metric.

use alloc::format;
use alloc::vec::Vec;

use crate::axis::AxisPair;
use crate::error::{Error, Result};

/// Physical ranges covered by an image, in beam units.
///
/// `x` runs along columns (the first axis of a pair) and `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Extent { x_min, x_max, y_min, y_max }
    }

    pub fn symmetric(half_x: f64, half_y: f64) -> Self {
        Extent::new(-half_x, half_x, -half_y, half_y)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
        if ok(self.x_min, self.x_max) && ok(self.y_min, self.y_max) {
            Ok(())
        } else {
            Err(Error::InvalidImage(format!("ill-formed extent {self:?}")))
        }
    }
}

/// A `width x height` grid of non-negative pixel values, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageGrid {
    width: usize,
    height: usize,
    extent: Extent,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, extent: Extent) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty grid {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch { expected: width * height, found: pixels.len() });
        }
        extent.validate()?;
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidImage(format!(
                "pixel {i} is {} (must be finite and non-negative)",
                pixels[i]
            )));
        }
        Ok(ImageGrid { width, height, extent, pixels })
    }

    pub fn zeros(width: usize, height: usize, extent: Extent) -> Self {
        ImageGrid { width, height, extent, pixels: alloc::vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Value at column `col`, row `row`.
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn cell_size(&self) -> (f64, f64) {
        let e = &self.extent;
        (
            (e.x_max - e.x_min) / self.width as f64,
            (e.y_max - e.y_min) / self.height as f64,
        )
    }

    /// Physical coordinates of the center of cell `(col, row)`.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let (dx, dy) = self.cell_size();
        (
            self.extent.x_min + (col as f64 + 0.5) * dx,
            self.extent.y_min + (row as f64 + 0.5) * dy,
        )
    }

    /// Mass-weighted mean position, using cell centers.
    pub fn centroid(&self) -> Result<(f64, f64)> {
        let total = self.sum();
        if total <= 0.0 {
            return Err(Error::DegenerateDensity);
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for row in 0..self.height {
            for col in 0..self.width {
                let m = self.get(col, row);
                let (x, y) = self.cell_center(col, row);
                cx += m * x;
                cy += m * y;
            }
        }
        Ok((cx / total, cy / total))
    }

    /// Multiplies every pixel by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<ImageGrid> {
        ImageGrid::new(
            self.width,
            self.height,
            self.pixels.iter().map(|p| p * c).collect(),
            self.extent,
        )
    }
}

fn check_shapes(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left_width: a.width,
            left_height: a.height,
            right_width: b.width,
            right_height: b.height,
        })
    }
}

/// Mean squared pixel difference between two equally shaped grids.
pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(mse_slices(&a.pixels, &b.pixels))
}

pub(crate) fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    ss / a.len() as f64
}

/// Rescales a grid so that its pixels sum to one.
pub fn normalize(g: &ImageGrid) -> Result<ImageGrid> {
    let total = g.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    Ok(ImageGrid {
        width: g.width,
        height: g.height,
        extent: g.extent,
        pixels: g.pixels.iter().map(|p| p / total).collect(),
    })
}

/// A stack of equally sized projections keyed by axis pair, held in
/// canonical channel order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectionSet {
    channels: Vec<(AxisPair, ImageGrid)>,
}

impl ProjectionSet {
    pub fn new(mut channels: Vec<(AxisPair, ImageGrid)>) -> Result<Self> {
        let Some((_, first)) = channels.first() else {
            return Err(Error::ShapeMismatch("projection set needs at least one channel".into()));
        };
        let (w, h) = (first.width, first.height);
        for (pair, img) in &channels {
            if img.width != w || img.height != h {
                return Err(Error::ShapeMismatch(format!(
                    "channel {pair} is {}x{}, expected {w}x{h}",
                    img.width, img.height
                )));
            }
        }
        channels.sort_by_key(|(p, _)| p.ordinal());
        if channels.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::ShapeMismatch("duplicate channel in projection set".into()));
        }
        Ok(ProjectionSet { channels })
    }

    pub fn get(&self, pair: AxisPair) -> Option<&ImageGrid> {
        self.channels.iter().find(|(p, _)| *p == pair).map(|(_, g)| g)
    }

    pub fn pairs(&self) -> impl Iterator<Item = AxisPair> + '_ {
        self.channels.iter().map(|(p, _)| *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AxisPair, &ImageGrid)> + '_ {
        self.channels.iter().map(|(p, g)| (*p, g))
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// `(width, height)` shared by all channels.
    pub fn shape(&self) -> (usize, usize) {
        let g = &self.channels[0].1;
        (g.width, g.height)
    }
}
