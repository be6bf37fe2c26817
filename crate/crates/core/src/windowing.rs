//! Sliding-window selection over the foreground mask.
//!
//! A window is kept when its foreground pixel count reaches
//! `occupancy_fraction × window area`; the matching crop of the raw frame is
//! returned with it.

use thiserror::Error;

use crate::geometry::{BoundingBox, Frame, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("mask is {mask_w}x{mask_h} but frame is {frame_w}x{frame_h}")]
    DimensionMismatch { mask_w: usize, mask_h: usize, frame_w: usize, frame_h: usize },
    #[error("{window_w}x{window_h} window does not fit a {width}x{height} frame")]
    WindowTooLarge { window_w: usize, window_h: usize, width: usize, height: usize },
    #[error("invalid window configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub width: usize,
    pub height: usize,
    pub stride_x: usize,
    pub stride_y: usize,
    /// Minimum foreground fraction in (0, 1].
    pub occupancy_fraction: f64,
}

impl Default for WindowConfig {
    /// 32 wide by 80 tall, the size of the training patches.
    fn default() -> Self {
        Self { width: 32, height: 80, stride_x: 8, stride_y: 8, occupancy_fraction: 0.5 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), WindowError> {
        if self.width == 0 || self.height == 0 {
            return Err(WindowError::InvalidConfig("window size must be positive"));
        }
        if self.stride_x == 0 || self.stride_y == 0 {
            return Err(WindowError::InvalidConfig("strides must be at least 1"));
        }
        if !(self.occupancy_fraction > 0.0 && self.occupancy_fraction <= 1.0) {
            return Err(WindowError::InvalidConfig("occupancy fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Minimum foreground count for a window to be kept.
    pub fn required_count(&self) -> f64 {
        self.occupancy_fraction * (self.width * self.height) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateWindow {
    pub bbox: BoundingBox,
    pub patch: Frame,
    /// Foreground pixels inside the window.
    pub occupancy: usize,
}

/// Window origins along one axis: the stride grid plus one position flush
/// with the far edge when the grid does not land on it.
pub fn axis_positions(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    if window > extent || stride == 0 {
        return Vec::new();
    }
    let last = extent - window;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Summed-area table with a zero first row and column.
struct Integral {
    stride: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(mask: &Mask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += u32::from(mask.get(x, y));
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    fn count(&self, b: &BoundingBox) -> usize {
        let s = self.stride;
        let (x0, y0, x1, y1) = (b.x, b.y, b.x + b.width, b.y + b.height);
        (self.sums[y1 * s + x1] + self.sums[y0 * s + x0] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]) as usize
    }
}

/// Scans the mask in row-major order and returns every window whose
/// foreground occupancy passes the threshold.
pub fn select_windows(mask: &Mask, frame: &Frame, cfg: &WindowConfig) -> Result<Vec<CandidateWindow>, WindowError> {
    cfg.validate()?;
    if mask.width() != frame.width() || mask.height() != frame.height() {
        return Err(WindowError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    if cfg.width > frame.width() || cfg.height > frame.height() {
        return Err(WindowError::WindowTooLarge {
            window_w: cfg.width,
            window_h: cfg.height,
            width: frame.width(),
            height: frame.height(),
        });
    }

    let integral = Integral::new(mask);
    let needed = cfg.required_count();
    let xs = axis_positions(frame.width(), cfg.width, cfg.stride_x);
    let ys = axis_positions(frame.height(), cfg.height, cfg.stride_y);

    let mut out = Vec::new();
    for &y in &ys {
        for &x in &xs {
            let bbox = BoundingBox { x, y, width: cfg.width, height: cfg.height };
            let occupancy = integral.count(&bbox);
            if occupancy as f64 >= needed {
                let patch = frame.crop(&bbox).expect("window positions lie inside the frame");
                out.push(CandidateWindow { bbox, patch, occupancy });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(w: usize, h: usize) -> Frame {
        Frame::new(w, h, 1, (0..w * h).map(|i| (i % 251) as u8).collect(), 1).unwrap()
    }

    #[test]
    fn nine_of_sixteen_passes_half_occupancy() {
        let mut mask = Mask::zeros(4, 4);
        for i in 0..9 {
            mask.set(i % 4, i / 4, true);
        }
        let cfg = WindowConfig { width: 4, height: 4, stride_x: 1, stride_y: 1, occupancy_fraction: 0.5 };
        let w = select_windows(&mask, &frame(4, 4), &cfg).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].occupancy, 9);
    }

    #[test]
    fn empty_mask_selects_nothing() {
        let cfg = WindowConfig { width: 3, height: 2, stride_x: 1, stride_y: 1, occupancy_fraction: 0.1 };
        assert!(select_windows(&Mask::zeros(10, 7), &frame(10, 7), &cfg).unwrap().is_empty());
    }

    #[test]
    fn full_mask_on_exact_grid() {
        let mask = Mask::from_values(8, 8, vec![1; 64]).unwrap();
        let cfg = WindowConfig { width: 4, height: 4, stride_x: 4, stride_y: 4, occupancy_fraction: 0.5 };
        let w = select_windows(&mask, &frame(8, 8), &cfg).unwrap();
        let origins: Vec<_> = w.iter().map(|c| (c.bbox.x, c.bbox.y)).collect();
        assert_eq!(origins, vec![(0, 0), (4, 0), (0, 4), (4, 4)]);
        assert_eq!(w[3].patch, frame(8, 8).crop(&w[3].bbox).unwrap());
    }

    #[test]
    fn flush_edge_positions_are_added() {
        assert_eq!(axis_positions(10, 4, 4), vec![0, 4, 6]);
        assert_eq!(axis_positions(8, 4, 4), vec![0, 4]);
        assert_eq!(axis_positions(4, 4, 3), vec![0]);
        assert!(axis_positions(3, 4, 1).is_empty());
    }

    #[test]
    fn errors() {
        let cfg = WindowConfig { width: 4, height: 4, stride_x: 1, stride_y: 1, occupancy_fraction: 0.5 };
        assert!(matches!(
            select_windows(&Mask::zeros(5, 5), &frame(6, 5), &cfg),
            Err(WindowError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            select_windows(&Mask::zeros(3, 3), &frame(3, 3), &cfg),
            Err(WindowError::WindowTooLarge { .. })
        ));
        let zero_stride = WindowConfig { stride_x: 0, ..cfg };
        assert!(select_windows(&Mask::zeros(5, 5), &frame(5, 5), &zero_stride).is_err());
    }

    proptest! {
        #[test]
        fn adding_foreground_never_drops_a_window(
            bits in prop::collection::vec(any::<bool>(), 12 * 10),
            extra in prop::collection::vec(0usize..120, 1..20),
            w in 1usize..6, h in 1usize..6, sx in 1usize..4, sy in 1usize..4, frac in 0.05f64..1.0,
        ) {
            let cfg = WindowConfig { width: w, height: h, stride_x: sx, stride_y: sy, occupancy_fraction: frac };
            let mask = Mask::from_values(12, 10, bits.iter().map(|&b| u8::from(b)).collect()).unwrap();
            let mut more = mask.clone();
            for i in extra {
                more.set(i % 12, i / 12, true);
            }
            let f = frame(12, 10);
            let before: Vec<_> = select_windows(&mask, &f, &cfg).unwrap().into_iter().map(|c| c.bbox).collect();
            let after: Vec<_> = select_windows(&more, &f, &cfg).unwrap().into_iter().map(|c| c.bbox).collect();
            prop_assert!(before.iter().all(|b| after.contains(b)));
            prop_assert!(after.iter().all(|b| b.fits_within(12, 10)));
        }
    }
}
