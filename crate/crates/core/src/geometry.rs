//! Frames, masks, boxes and the detection/track records passed between stages.
//!
//! Coordinates have their origin at the top-left pixel, x grows rightward and
//! y grows downward.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("box {bbox:?} does not fit inside a {width}x{height} image")]
    BoxOutside { bbox: BoundingBox, width: usize, height: usize },
    #[error("box width and height must be positive")]
    EmptyBox,
}

/// An 8-bit image, grayscale or interleaved RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
    index: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>, index: u64) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(FrameError::Channels(channels));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(FrameError::BufferLength { expected, actual: pixels.len() });
        }
        Ok(Self { width, height, channels, pixels, index })
    }

    /// A grayscale frame filled with one value.
    pub fn filled(width: usize, height: usize, value: u8, index: u64) -> Result<Self, FrameError> {
        Self::new(width, height, 1, vec![value; width * height], index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// All channel values of the pixel at `(x, y)`.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let start = (y * self.width + x) * self.channels;
        &self.pixels[start..start + self.channels]
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox { x: 0, y: 0, width: self.width, height: self.height }
    }

    /// Copies the pixels under `bbox` into a new frame carrying the same index.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<Frame, FrameError> {
        bbox.check_inside(self.width, self.height)?;
        let row_len = bbox.width * self.channels;
        let mut out = Vec::with_capacity(bbox.height * row_len);
        for y in bbox.y..bbox.y + bbox.height {
            let start = (y * self.width + bbox.x) * self.channels;
            out.extend_from_slice(&self.pixels[start..start + row_len]);
        }
        Frame::new(bbox.width, bbox.height, self.channels, out, self.index)
    }

    /// Luma plane as reals (0.299 R + 0.587 G + 0.114 B for colour frames).
    pub fn luma<T: crate::Scalar>(&self) -> Vec<T> {
        if self.channels == 1 {
            return self.pixels.iter().map(|&p| T::from_byte(p)).collect();
        }
        let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        self.pixels
            .chunks_exact(3)
            .map(|c| wr * T::from_byte(c[0]) + wg * T::from_byte(c[1]) + wb * T::from_byte(c[2]))
            .collect()
    }
}

/// Binary foreground image: 1 = foreground, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    /// Builds a mask from raw values; any non-zero value counts as foreground.
    pub fn from_values(width: usize, height: usize, values: Vec<u8>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(FrameError::BufferLength { expected: width * height, actual: values.len() });
        }
        let data = values.into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, foreground: bool) {
        self.data[y * self.width + x] = u8::from(foreground);
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn foreground_ratio(&self) -> f64 {
        self.foreground_count() as f64 / self.data.len() as f64
    }

    /// Grayscale frame with foreground at 255, for export.
    pub fn to_frame(&self, index: u64) -> Frame {
        let pixels = self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        Frame { width: self.width, height: self.height, channels: 1, pixels, index }
    }
}

/// Axis-aligned box in integer pixel coordinates (top-left corner plus size).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyBox);
        }
        Ok(Self { x, y, width, height })
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn centroid(&self) -> Point {
        centroid(self)
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x + self.width <= width && self.y + self.height <= height
    }

    pub fn check_inside(&self, width: usize, height: usize) -> Result<(), FrameError> {
        if self.width == 0 || self.height == 0 {
            return Err(FrameError::EmptyBox);
        }
        if !self.fits_within(width, height) {
            return Err(FrameError::BoxOutside { bbox: *self, width, height });
        }
        Ok(())
    }
}

/// A point in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        euclidean_distance(*self, *other)
    }
}

/// Centre of the box: `(x + width / 2, y + height / 2)`.
pub fn centroid(bbox: &BoundingBox) -> Point {
    Point { x: bbox.x as f64 + bbox.width as f64 / 2.0, y: bbox.y as f64 + bbox.height as f64 / 2.0 }
}

pub fn euclidean_distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// A classifier-accepted window in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: u64,
    pub bbox: BoundingBox,
    /// Pedestrian-class probability in [0, 1].
    pub score: f64,
}

impl Detection {
    pub fn centroid(&self) -> Point {
        self.bbox.centroid()
    }
}

/// One confirmed track's state at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub track_id: u64,
    pub frame_index: u64,
    /// Box of the detection that updated the track this frame.
    pub bbox: BoundingBox,
    /// Filtered (posterior) centre.
    pub center: Point,
    /// Centre predicted before the measurement update.
    pub predicted_center: Point,
    pub score: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn centroid_examples() {
        let c = centroid(&BoundingBox::new(0, 0, 4, 2).unwrap());
        assert_eq!((c.x, c.y), (2.0, 1.0));
        let c = centroid(&BoundingBox::new(10, 20, 80, 32).unwrap());
        assert_eq!((c.x, c.y), (50.0, 36.0));
        let c = centroid(&BoundingBox::new(5, 5, 1, 1).unwrap());
        assert_eq!((c.x, c.y), (5.5, 5.5));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        let p = Point::new(7.25, -3.5);
        assert_eq!(euclidean_distance(p, p), 0.0);
        let d = euclidean_distance(Point::new(1.0, 1.0), Point::new(2.0, 2.0));
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn frame_validation() {
        assert!(Frame::new(0, 4, 1, vec![], 1).is_err());
        assert_eq!(Frame::new(2, 2, 2, vec![0; 8], 1), Err(FrameError::Channels(2)));
        assert_eq!(Frame::new(2, 2, 3, vec![0; 4], 1), Err(FrameError::BufferLength { expected: 12, actual: 4 }));
    }

    #[test]
    fn crop_copies_the_right_pixels() {
        let pixels: Vec<u8> = (0..16).collect();
        let f = Frame::new(4, 4, 1, pixels, 3).unwrap();
        let c = f.crop(&BoundingBox::new(1, 2, 2, 2).unwrap()).unwrap();
        assert_eq!(c.pixels(), &[9, 10, 13, 14]);
        assert_eq!(c.index(), 3);
        assert!(f.crop(&BoundingBox::new(3, 3, 2, 1).unwrap()).is_err());
    }

    #[test]
    fn luma_weights() {
        let f = Frame::new(1, 1, 3, vec![100, 200, 50], 1).unwrap();
        let l: Vec<f64> = f.luma();
        assert!((l[0] - (29.9 + 117.4 + 5.7)).abs() < 1e-9);
    }

    fn point() -> impl Strategy<Value = Point> {
        (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            let ab = euclidean_distance(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, euclidean_distance(b, a));
            prop_assert!(ab <= euclidean_distance(a, c) + euclidean_distance(c, b) + 1e-9);
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn centroid_lies_inside_box(x in 0usize..500, y in 0usize..500, w in 1usize..200, h in 1usize..200) {
            let b = BoundingBox::new(x, y, w, h).unwrap();
            let c = b.centroid();
            prop_assert!(c.x >= x as f64 && c.x <= (x + w) as f64);
            prop_assert!(c.y >= y as f64 && c.y <= (y + h) as f64);
        }
    }
}
