//! Pyramid histogram of oriented gradients.
//!
//! Gradient orientations are hard-binned into `K` bins, weighted by gradient
//! magnitude, over a pyramid of `2^l × 2^l` cell grids for `l = 0..=L`. The
//! per-cell histograms are concatenated level by level (cells row-major) and
//! the whole vector is L1-normalised.

use thiserror::Error;

use crate::geometry::Frame;
use crate::Scalar;

/// Deepest pyramid level accepted without an explicit override.
pub const MAX_LEVELS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PhogError {
    #[error("window {width}x{height} is smaller than the {min}x{min} minimum")]
    WindowTooSmall { width: usize, height: usize, min: usize },
    #[error("gray buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("at least 2 orientation bins are required, got {0}")]
    TooFewBins(usize),
    #[error("pyramid depth {0} exceeds the cap of {MAX_LEVELS}")]
    TooManyLevels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrientationRange {
    /// 0–360 degrees, gradient sign preserved.
    #[default]
    Signed,
    /// 0–180 degrees, opposite gradients share a bin.
    Unsigned,
}

impl OrientationRange {
    pub fn degrees(self) -> f64 {
        match self {
            Self::Signed => 360.0,
            Self::Unsigned => 180.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Signed => "signed",
            Self::Unsigned => "unsigned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhogParams {
    pub bins: usize,
    pub levels: usize,
    pub orientation: OrientationRange,
    /// Permits `levels > MAX_LEVELS`.
    pub allow_deep_pyramid: bool,
}

impl Default for PhogParams {
    fn default() -> Self {
        Self { bins: 20, levels: 3, orientation: OrientationRange::Signed, allow_deep_pyramid: false }
    }
}

impl PhogParams {
    pub fn new(bins: usize, levels: usize, orientation: OrientationRange) -> Result<Self, PhogError> {
        let p = Self { bins, levels, orientation, allow_deep_pyramid: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PhogError> {
        if self.bins < 2 {
            return Err(PhogError::TooFewBins(self.bins));
        }
        if self.levels > MAX_LEVELS && !self.allow_deep_pyramid {
            return Err(PhogError::TooManyLevels(self.levels));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        phog_dimension(self.bins, self.levels)
    }

    /// Smallest window side the pyramid can be built on.
    pub fn min_side(&self) -> usize {
        (1usize << self.levels).max(2)
    }
}

/// Descriptor length `K · Σ_{l=0..L} 4^l`.
pub fn phog_dimension(bins: usize, levels: usize) -> usize {
    bins * (0..=levels).map(|l| 1usize << (2 * l)).sum::<usize>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<T>,
    /// Degrees within the configured orientation range.
    pub orientation: Vec<T>,
}

/// Central-difference gradients with replicated borders.
pub fn compute_gradients<T: Scalar>(
    gray: &[T],
    width: usize,
    height: usize,
    range: OrientationRange,
) -> Result<Gradients<T>, PhogError> {
    if width < 2 || height < 2 {
        return Err(PhogError::WindowTooSmall { width, height, min: 2 });
    }
    if gray.len() != width * height {
        return Err(PhogError::BufferLength { expected: width * height, actual: gray.len() });
    }
    let span = T::lit(range.degrees());
    let mut magnitude = Vec::with_capacity(gray.len());
    let mut orientation = Vec::with_capacity(gray.len());
    for y in 0..height {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(height - 1);
        for x in 0..width {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(width - 1);
            let gx = gray[y * width + right] - gray[y * width + left];
            let gy = gray[down * width + x] - gray[up * width + x];
            magnitude.push(gx.hypot(gy));
            let mut theta = gy.atan2(gx).to_degrees();
            if theta < T::zero() {
                theta = theta + span;
            }
            // a lone negative-zero or rounding can land exactly on the span
            while theta >= span {
                theta = theta - span;
            }
            orientation.push(theta);
        }
    }
    Ok(Gradients { width, height, magnitude, orientation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhogDescriptor<T> {
    pub values: Vec<T>,
    pub bins: usize,
    pub levels: usize,
}

impl<T: Scalar> PhogDescriptor<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Histogram of one cell at one level.
    pub fn cell(&self, level: usize, row: usize, col: usize) -> &[T] {
        let offset = phog_dimension(self.bins, level) - self.bins * (1 << (2 * level));
        let start = offset + (row * (1 << level) + col) * self.bins;
        &self.values[start..start + self.bins]
    }
}

/// Start of cell `i` when `extent` is split into `parts` cells.
#[inline]
fn cell_start(i: usize, extent: usize, parts: usize) -> usize {
    i * extent / parts
}

/// Descriptor of a frame crop; colour crops are converted to luma first.
pub fn phog_descriptor<T: Scalar>(window: &Frame, params: &PhogParams) -> Result<PhogDescriptor<T>, PhogError> {
    let gray: Vec<T> = window.luma();
    phog_from_gray(&gray, window.width(), window.height(), params)
}

pub fn phog_from_gray<T: Scalar>(
    gray: &[T],
    width: usize,
    height: usize,
    params: &PhogParams,
) -> Result<PhogDescriptor<T>, PhogError> {
    params.validate()?;
    let min = params.min_side();
    if width < min || height < min {
        return Err(PhogError::WindowTooSmall { width, height, min });
    }
    let grads = compute_gradients(gray, width, height, params.orientation)?;
    let k = params.bins;
    let bin_width = T::lit(params.orientation.degrees()) / T::from_usize_lossy(k);
    let bins: Vec<usize> =
        grads.orientation.iter().map(|&theta| (theta / bin_width).floor().to_usize().unwrap_or(0).min(k - 1)).collect();

    let mut values = vec![T::zero(); params.dimension()];
    let mut offset = 0;
    // per-axis lookup of which cell a coordinate falls in, rebuilt per level
    let mut col_of = vec![0usize; width];
    let mut row_of = vec![0usize; height];
    for level in 0..=params.levels {
        let parts = 1usize << level;
        for c in 0..parts {
            col_of[cell_start(c, width, parts)..cell_start(c + 1, width, parts)].fill(c);
        }
        for r in 0..parts {
            row_of[cell_start(r, height, parts)..cell_start(r + 1, height, parts)].fill(r);
        }
        for (y, &row) in row_of.iter().enumerate() {
            let row_base = offset + row * parts * k;
            for (x, &col) in col_of.iter().enumerate() {
                let i = y * width + x;
                let slot = row_base + col * k + bins[i];
                values[slot] = values[slot] + grads.magnitude[i];
            }
        }
        offset += parts * parts * k;
    }

    let total: T = values.iter().copied().sum();
    if total > T::zero() {
        for v in &mut values {
            *v = *v / total;
        }
    }
    Ok(PhogDescriptor { values, bins: k, levels: params.levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_examples() {
        assert_eq!(phog_dimension(20, 1), 100);
        assert_eq!(phog_dimension(20, 3), 1700);
        assert_eq!(phog_dimension(1, 0), 1);
    }

    #[test]
    fn constant_window_has_no_gradient() {
        let g = compute_gradients(&[7.0f64; 20], 5, 4, OrientationRange::Signed).unwrap();
        assert!(g.magnitude.iter().all(|&m| m == 0.0));
        let d = phog_from_gray(&[7.0f64; 64], 8, 8, &PhogParams::default()).unwrap();
        assert_eq!(d.len(), 1700);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_central_differences() {
        // I(x, y) = x on a 4x4 window
        let gray: Vec<f64> = (0..16).map(|i| (i % 4) as f64).collect();
        let g = compute_gradients(&gray, 4, 4, OrientationRange::Signed).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expected = if x == 0 || x == 3 { 1.0 } else { 2.0 };
                assert_eq!(g.magnitude[y * 4 + x], expected);
                assert_eq!(g.orientation[y * 4 + x], 0.0);
            }
        }
    }

    #[test]
    fn vertical_step_edge_lands_in_the_horizontal_bin() {
        let gray: Vec<f64> = (0..64).map(|i| if i % 8 < 4 { 0.0 } else { 255.0 }).collect();
        let p = PhogParams::new(8, 0, OrientationRange::Signed).unwrap();
        let d = phog_from_gray(&gray, 8, 8, &p).unwrap();
        assert_eq!(d.values[0], 1.0);
        assert!(d.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unsigned_orientations_fold_opposites() {
        let gray: Vec<f64> = (0..64).map(|i| if i % 8 < 4 { 255.0 } else { 0.0 }).collect();
        let g = compute_gradients(&gray, 8, 8, OrientationRange::Unsigned).unwrap();
        let signed = compute_gradients(&gray, 8, 8, OrientationRange::Signed).unwrap();
        assert_eq!(signed.orientation[3], 180.0);
        assert_eq!(g.orientation[3], 0.0);
    }

    #[test]
    fn small_windows_are_rejected() {
        let p = PhogParams::default();
        assert!(matches!(phog_from_gray(&[0.0f64; 28], 7, 4, &p), Err(PhogError::WindowTooSmall { min: 8, .. })));
        assert!(compute_gradients(&[0.0f64; 3], 3, 1, OrientationRange::Signed).is_err());
        assert_eq!(PhogParams::new(1, 2, OrientationRange::Signed), Err(PhogError::TooFewBins(1)));
        assert_eq!(PhogParams::new(4, 4, OrientationRange::Signed), Err(PhogError::TooManyLevels(4)));
        let deep = PhogParams { levels: 4, allow_deep_pyramid: true, ..PhogParams::default() };
        assert_eq!(phog_from_gray(&[1.0f64; 256], 16, 16, &deep).unwrap().len(), 20 * 341);
    }

    #[test]
    fn cell_accessor_follows_layout() {
        let gray: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let p = PhogParams::new(4, 2, OrientationRange::Signed).unwrap();
        let d = phog_from_gray(&gray, 8, 8, &p).unwrap();
        assert_eq!(d.cell(0, 0, 0), &d.values[0..4]);
        assert_eq!(d.cell(1, 1, 0), &d.values[4 + 8..4 + 12]);
        assert_eq!(d.cell(2, 3, 3), &d.values[d.len() - 4..]);
        // each level carries the same total mass
        let level_sum = |l: usize| -> f64 {
            let n = 1 << l;
            (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| d.cell(l, r, c).iter().sum::<f64>()).sum()
        };
        assert!((level_sum(0) - level_sum(2)).abs() < 1e-12);
    }
}
