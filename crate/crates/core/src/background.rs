//! Adaptive per-pixel Gaussian mixture background model.
//!
//! Every pixel keeps `K` weighted Gaussian components with a shared scalar
//! variance across channels. Each new value is matched against the components
//! in decreasing `w/σ` order (a match lies within 2.5σ of the mean), weights
//! decay towards the matched component, and the matched component's mean and
//! variance adapt at rate `ρ = α·η(x | μ, σ²)`. When nothing matches, the
//! least probable component is replaced by one centred on the new value.
//!
//! A pixel is background when its matched component ranks within the first
//! `B` components, `B` being the smallest prefix of the `w/σ`-sorted mixture
//! whose cumulative weight exceeds `T`.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Frame, Mask};
use crate::Scalar;

/// Largest channel count a component mean can hold.
pub const MAX_CHANNELS: usize = 3;

/// Matches lie within this many standard deviations of a component mean.
pub const MATCH_SIGMAS: f64 = 2.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackgroundError {
    #[error("model dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("background parameter `{name}` out of range: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("frame is {found_w}x{found_h} but the model was built for {expected_w}x{expected_h}")]
    DimensionMismatch { expected_w: usize, expected_h: usize, found_w: usize, found_h: usize },
    #[error("frame has {found} channels but the model was seeded with {expected}")]
    ChannelMismatch { expected: usize, found: usize },
}

/// Learning parameters of the mixture model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams<T> {
    /// Components per pixel.
    pub k: usize,
    /// Learning rate `α`.
    pub alpha: T,
    /// Portion of the data the background must account for (`T`).
    pub background_threshold: T,
    /// Variance given to freshly created components.
    pub init_variance: T,
    /// Weight given to freshly created components.
    pub init_weight: T,
    /// Lower bound applied to every variance after adaptation.
    pub variance_floor: T,
}

impl<T: Scalar> Default for BackgroundParams<T> {
    fn default() -> Self {
        Self {
            k: 5,
            alpha: T::lit(0.05),
            background_threshold: T::lit(0.7),
            init_variance: T::lit(225.0),
            init_weight: T::lit(0.05),
            variance_floor: T::lit(4.0),
        }
    }
}

impl<T: Scalar> BackgroundParams<T> {
    pub fn validate(&self) -> Result<(), BackgroundError> {
        let bad = |name, value: T| Err(BackgroundError::InvalidParam { name, value: value.as_f64() });
        let open_unit = |v: T| v > T::zero() && v < T::one();
        if self.k == 0 {
            return Err(BackgroundError::InvalidParam { name: "k", value: 0.0 });
        }
        if !open_unit(self.alpha) {
            return bad("alpha", self.alpha);
        }
        if !open_unit(self.background_threshold) {
            return bad("threshold", self.background_threshold);
        }
        if !open_unit(self.init_weight) {
            return bad("init_weight", self.init_weight);
        }
        if self.variance_floor <= T::zero() || !self.variance_floor.is_finite() {
            return bad("variance_floor", self.variance_floor);
        }
        if self.init_variance < self.variance_floor || !self.init_variance.is_finite() {
            return bad("init_variance", self.init_variance);
        }
        Ok(())
    }
}

/// One weighted Gaussian with an isotropic covariance `σ²·I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent<T> {
    pub weight: T,
    /// Per-channel mean; entries beyond the frame's channel count are unused.
    pub mean: [T; MAX_CHANNELS],
    pub variance: T,
}

impl<T: Scalar> GaussianComponent<T> {
    pub fn new(weight: T, mean: &[T], variance: T) -> Self {
        let mut m = [T::zero(); MAX_CHANNELS];
        m[..mean.len()].copy_from_slice(mean);
        Self { weight, mean: m, variance }
    }

    /// Ranking key `w/σ`.
    #[inline]
    pub fn fitness(&self) -> T {
        self.weight / self.variance.sqrt()
    }
}

#[inline]
fn squared_distance<T: Scalar>(x: &[T], mean: &[T]) -> T {
    x.iter().zip(mean).fold(T::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    })
}

/// True when `‖x − μ‖² ≤ 2.5² σ²` over the channels of `x`.
#[inline]
pub fn match_component<T: Scalar>(pixel: &[T], comp: &GaussianComponent<T>) -> bool {
    let n = pixel.len();
    squared_distance(pixel, &comp.mean[..n]) <= T::lit(MATCH_SIGMAS * MATCH_SIGMAS) * comp.variance
}

/// Isotropic multivariate normal density with `n = x.len()` dimensions.
pub fn gaussian_density<T: Scalar>(x: &[T], mean: &[T], variance: T) -> T {
    let n = T::from_usize_lossy(x.len());
    let two = T::lit(2.0);
    let norm = (two * T::PI() * variance).powf(n / two);
    (-squared_distance(x, mean) / (two * variance)).exp() / norm
}

/// Number of leading components (in the given order) whose cumulative weight
/// first exceeds `threshold`. Falls back to the full count when rounding keeps
/// the total at or below the threshold.
pub fn background_count<T: Scalar>(sorted_weights: impl IntoIterator<Item = T>, threshold: T) -> usize {
    let mut total = T::zero();
    let mut count = 0;
    for w in sorted_weights {
        count += 1;
        total = total + w;
        if total > threshold {
            return count;
        }
    }
    count
}

fn sort_by_fitness<T: Scalar>(comps: &mut [GaussianComponent<T>], tracked: Option<usize>) -> Option<usize> {
    // Insertion sort: K is tiny and the order barely changes between frames.
    let mut tracked = tracked;
    for i in 1..comps.len() {
        let mut j = i;
        while j > 0 && comps[j - 1].fitness() < comps[j].fitness() {
            comps.swap(j - 1, j);
            tracked = tracked.map(|t| {
                if t == j {
                    j - 1
                } else if t == j - 1 {
                    j
                } else {
                    t
                }
            });
            j -= 1;
        }
    }
    tracked
}

/// Updates one pixel's components (kept sorted by decreasing `w/σ`) with a new
/// observation. Returns the post-update rank of the matched component, or
/// `None` when no component matched and the weakest one was replaced.
pub(crate) fn update_components<T: Scalar>(
    comps: &mut [GaussianComponent<T>],
    pixel: &[T],
    params: &BackgroundParams<T>,
) -> Option<usize> {
    let n = pixel.len();
    let alpha = params.alpha;
    let keep = T::one() - alpha;

    // Components that carry no weight have never seen data and cannot match.
    let matched = comps.iter().position(|c| c.weight > T::zero() && match_component(pixel, c));

    for (i, c) in comps.iter_mut().enumerate() {
        c.weight = keep * c.weight;
        if Some(i) == matched {
            c.weight = c.weight + alpha;
        }
    }

    match matched {
        Some(i) => {
            let c = &mut comps[i];
            let rho = (alpha * gaussian_density(pixel, &c.mean[..n], c.variance)).max(T::zero()).min(T::one());
            let stay = T::one() - rho;
            for (m, &x) in c.mean[..n].iter_mut().zip(pixel) {
                *m = stay * *m + rho * x;
            }
            let spread = squared_distance(pixel, &c.mean[..n]);
            c.variance = (stay * c.variance + rho * spread).max(params.variance_floor);
        }
        None => {
            let last = comps.len() - 1;
            comps[last] = GaussianComponent::new(params.init_weight, pixel, params.init_variance);
        }
    }

    let total: T = comps.iter().map(|c| c.weight).sum();
    for c in comps.iter_mut() {
        c.weight = c.weight / total;
    }

    sort_by_fitness(comps, matched)
}

/// The `K` components modelling one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMixture<T> {
    components: Vec<GaussianComponent<T>>,
}

impl<T: Scalar> PixelMixture<T> {
    /// One component with weight 1 and mean `seed`; the rest carry weight 0.
    pub fn new(k: usize, seed: &[T], init_variance: T) -> Self {
        let mut components = vec![GaussianComponent::new(T::zero(), seed, init_variance); k.max(1)];
        components[0].weight = T::one();
        Self { components }
    }

    /// Wraps explicit components, sorting them by decreasing `w/σ`.
    pub fn from_components(mut components: Vec<GaussianComponent<T>>) -> Self {
        sort_by_fitness(&mut components, None);
        Self { components }
    }

    pub fn components(&self) -> &[GaussianComponent<T>] {
        &self.components
    }

    pub fn weight_sum(&self) -> T {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Components are kept in decreasing `w/σ` order, so the ranking for
    /// [`background_count`] is the storage order.
    pub fn background_count(&self, threshold: T) -> usize {
        background_count(self.components.iter().map(|c| c.weight), threshold)
    }
}

/// Feeds one observation into a mixture.
///
/// Returns the rank (in the re-sorted mixture) of the component that matched,
/// or `None` when the weakest component was replaced.
pub fn update_pixel<T: Scalar>(
    mixture: &mut PixelMixture<T>,
    pixel: &[T],
    params: &BackgroundParams<T>,
) -> Option<usize> {
    update_components(&mut mixture.components, pixel, params)
}

/// Mixture grid for a whole frame.
#[derive(Debug, Clone)]
pub struct BackgroundModel<T> {
    width: usize,
    height: usize,
    channels: Option<usize>,
    params: BackgroundParams<T>,
    components: Vec<GaussianComponent<T>>,
    frames_seen: u64,
}

impl<T: Scalar> BackgroundModel<T> {
    pub fn new(width: usize, height: usize, params: BackgroundParams<T>) -> Result<Self, BackgroundError> {
        if width == 0 || height == 0 {
            return Err(BackgroundError::InvalidDimensions { width, height });
        }
        params.validate()?;
        let k = params.k;
        let mut template = vec![GaussianComponent::new(T::zero(), &[], params.init_variance); k];
        template[0].weight = T::one();
        let components = template.iter().copied().cycle().take(width * height * k).collect();
        Ok(Self { width, height, channels: None, params, components, frames_seen: 0 })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &BackgroundParams<T> {
        &self.params
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Components of the pixel at `(x, y)`, sorted by decreasing `w/σ`.
    pub fn mixture(&self, x: usize, y: usize) -> &[GaussianComponent<T>] {
        let k = self.params.k;
        let start = (y * self.width + x) * k;
        &self.components[start..start + k]
    }

    pub fn mixtures(&self) -> impl Iterator<Item = &[GaussianComponent<T>]> {
        self.components.chunks_exact(self.params.k)
    }

    /// Advances the model by one frame and returns its foreground mask.
    ///
    /// The first frame seeds every pixel's leading component mean with the
    /// observed value, so it classifies as background throughout.
    pub fn process_frame(&mut self, frame: &Frame) -> Result<Mask, BackgroundError> {
        if frame.width() != self.width || frame.height() != self.height {
            return Err(BackgroundError::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                found_w: frame.width(),
                found_h: frame.height(),
            });
        }
        let channels = frame.channels();
        match self.channels {
            Some(expected) if expected != channels => {
                return Err(BackgroundError::ChannelMismatch { expected, found: channels });
            }
            Some(_) => {}
            None => {
                self.channels = Some(channels);
                self.seed(frame);
            }
        }

        let k = self.params.k;
        let width = self.width;
        let params = self.params;
        let mut mask = Mask::zeros(self.width, self.height);
        let pixels = frame.pixels();

        self.components.par_chunks_mut(width * k).zip(mask.data_mut().par_chunks_mut(width)).enumerate().for_each(
            |(y, (row_comps, row_mask))| {
                let row_pixels = &pixels[y * width * channels..(y + 1) * width * channels];
                let mut value = [T::zero(); MAX_CHANNELS];
                for (x, (comps, out)) in row_comps.chunks_exact_mut(k).zip(row_mask).enumerate() {
                    for (v, &p) in value.iter_mut().zip(&row_pixels[x * channels..(x + 1) * channels]) {
                        *v = T::from_byte(p);
                    }
                    let rank = update_components(comps, &value[..channels], &params);
                    let background = match rank {
                        Some(r) => r < background_count(comps.iter().map(|c| c.weight), params.background_threshold),
                        None => false,
                    };
                    *out = u8::from(!background);
                }
            },
        );

        self.frames_seen += 1;
        Ok(mask)
    }

    fn seed(&mut self, frame: &Frame) {
        let k = self.params.k;
        let channels = frame.channels();
        for (comps, px) in self.components.chunks_exact_mut(k).zip(frame.pixels().chunks_exact(channels)) {
            for c in comps.iter_mut() {
                for (m, &p) in c.mean.iter_mut().zip(px) {
                    *m = T::from_byte(p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> BackgroundParams<f64> {
        BackgroundParams::default()
    }

    #[test]
    fn init_model_shapes() {
        let p = BackgroundParams { k: 3, alpha: 0.05, background_threshold: 0.7, ..params() };
        let m = BackgroundModel::new(4, 4, p).unwrap();
        assert_eq!(m.mixtures().count(), 16);
        assert!(m.mixtures().all(|c| c.len() == 3));

        let p1 = BackgroundParams { k: 1, ..params() };
        let m = BackgroundModel::new(1, 1, p1).unwrap();
        assert_eq!(m.mixture(0, 0)[0].weight, 1.0);

        assert!(matches!(BackgroundModel::new(0, 4, params()), Err(BackgroundError::InvalidDimensions { .. })));
    }

    #[test]
    fn rejects_out_of_range_params() {
        for bad in [
            BackgroundParams { alpha: 1.5, ..params() },
            BackgroundParams { alpha: 0.0, ..params() },
            BackgroundParams { background_threshold: 1.0, ..params() },
            BackgroundParams { init_weight: 0.0, ..params() },
            BackgroundParams { k: 0, ..params() },
            BackgroundParams { init_variance: 1.0, ..params() },
        ] {
            assert!(BackgroundModel::new(2, 2, bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn match_rule_examples() {
        let c = GaussianComponent::new(1.0, &[95.0], 16.0);
        assert!(match_component(&[100.0], &c));
        assert!(!match_component(&[120.0], &c));
        assert!(match_component(&[95.0], &c));
        // exactly 2.5 sigma is still a match
        assert!(match_component(&[105.0], &c));
    }

    #[test]
    fn density_examples() {
        let inv_sqrt_2pi = 0.398_942_280_401_432_7;
        assert!((gaussian_density::<f64>(&[3.0], &[3.0], 1.0) - inv_sqrt_2pi).abs() < 1e-15);
        assert!((gaussian_density::<f64>(&[4.0], &[3.0], 1.0) - 0.241_970_724_519_143_37).abs() < 1e-15);
        // sigma = 2 halves the peak
        assert!((gaussian_density::<f64>(&[0.0], &[0.0], 4.0) - 0.199_471_140_200_716_35).abs() < 1e-15);
    }

    #[test]
    fn density_three_channels_is_product_of_marginals() {
        let x = [10.0, 12.0, 7.0];
        let mu = [11.0, 9.0, 7.5];
        let joint = gaussian_density(&x, &mu, 9.0);
        let product: f64 = (0..3).map(|i| gaussian_density(&x[i..=i], &mu[i..=i], 9.0)).product();
        assert!((joint - product).abs() < 1e-18);
    }

    #[test]
    fn matched_weight_update_follows_learning_rule() {
        // Two components of weight 0.5 each; the first matches.
        let comps = vec![GaussianComponent::new(0.5, &[100.0], 16.0), GaussianComponent::new(0.5, &[10.0], 16.0)];
        let mut m = PixelMixture::from_components(comps);
        let rank = update_pixel(&mut m, &[100.0], &params());
        assert_eq!(rank, Some(0));
        // (1 - 0.05) * 0.5 + 0.05 = 0.525, and the total stays 1 so
        // renormalisation leaves it alone.
        assert!((m.components()[0].weight - 0.525).abs() < 1e-12);
        assert!((m.components()[1].weight - 0.475).abs() < 1e-12);
    }

    #[test]
    fn unmatched_value_replaces_weakest_component() {
        let comps = vec![GaussianComponent::new(0.7, &[100.0], 16.0), GaussianComponent::new(0.3, &[50.0], 16.0)];
        let mut m = PixelMixture::from_components(comps);
        let p = params();
        assert_eq!(update_pixel(&mut m, &[200.0], &p), None);
        let fresh = m.components().iter().find(|c| c.mean[0] == 200.0).unwrap();
        assert_eq!(fresh.variance, p.init_variance);
        // 0.05 / (0.95 * 0.7 + 0.05)
        assert!((fresh.weight - 0.05 / 0.715).abs() < 1e-12);
        assert!((m.weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_count_examples() {
        assert_eq!(background_count([0.6, 0.3, 0.1], 0.7), 2);
        assert_eq!(background_count([1.0], 0.5), 1);
        assert_eq!(background_count([0.4, 0.4, 0.2], 0.9), 3);
    }

    #[test]
    fn first_frame_is_all_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pixels: Vec<u8> = (0..12 * 9).map(|_| rng.random()).collect();
        let frame = Frame::new(12, 9, 1, pixels, 1).unwrap();
        let mut model = BackgroundModel::new(12, 9, params()).unwrap();
        let mask = model.process_frame(&frame).unwrap();
        assert_eq!(mask.foreground_count(), 0);
    }

    #[test]
    fn colour_frames_are_supported() {
        let frame = Frame::new(3, 2, 3, vec![40; 18], 1).unwrap();
        let mut model = BackgroundModel::new(3, 2, params()).unwrap();
        model.process_frame(&frame).unwrap();
        let mut moved = frame.clone();
        moved.pixels_mut()[0..3].copy_from_slice(&[250, 10, 90]);
        let mask = model.process_frame(&moved).unwrap();
        assert!(mask.get(0, 0));
        assert_eq!(mask.foreground_count(), 1);
        let gray = Frame::filled(3, 2, 40, 3).unwrap();
        assert!(matches!(model.process_frame(&gray), Err(BackgroundError::ChannelMismatch { .. })));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut model = BackgroundModel::new(4, 4, params()).unwrap();
        let f = Frame::filled(5, 4, 0, 1).unwrap();
        assert!(matches!(model.process_frame(&f), Err(BackgroundError::DimensionMismatch { .. })));
    }

    #[test]
    fn identical_models_give_identical_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frames: Vec<Frame> = (0..20)
            .map(|t| {
                let px = (0..16 * 16).map(|_| rng.random_range(0..=255u8)).collect();
                Frame::new(16, 16, 1, px, t + 1).unwrap()
            })
            .collect();
        let mut a = BackgroundModel::new(16, 16, params()).unwrap();
        let mut b = BackgroundModel::new(16, 16, params()).unwrap();
        for f in &frames {
            assert_eq!(a.process_frame(f).unwrap(), b.process_frame(f).unwrap());
        }
    }

    fn mixture_strategy() -> impl Strategy<Value = PixelMixture<f64>> {
        prop::collection::vec((0.01f64..1.0, 0.0f64..255.0, 4.0f64..400.0), 1..=5).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            PixelMixture::from_components(
                raw.into_iter().map(|(w, m, v)| GaussianComponent::new(w / total, &[m], v)).collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn update_preserves_normalisation_and_floor(mut m in mixture_strategy(), x in 0.0f64..255.0) {
            let p = params();
            update_pixel(&mut m, &[x], &p);
            prop_assert!((m.weight_sum() - 1.0).abs() < 1e-9);
            prop_assert!(m.components().iter().all(|c| c.variance >= p.variance_floor));
            let f: Vec<f64> = m.components().iter().map(|c| c.fitness()).collect();
            prop_assert!(f.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn matching_never_lowers_the_matched_weight(m in mixture_strategy(), pick in 0usize..5) {
            let pick = pick % m.components().len();
            let target = m.components()[pick];
            let x = target.mean[0];
            // the first matching component in rank order is the one updated
            let first = m.components().iter().position(|c| match_component(&[x], c)).unwrap();
            let before = m.components()[first];
            let mut after = m.clone();
            let rank = update_pixel(&mut after, &[x], &params()).unwrap();
            prop_assert!(after.components()[rank].weight >= before.weight - 1e-12);
        }

        #[test]
        fn mean_converges_monotonically(start in 0.0f64..255.0, x in 0.0f64..255.0) {
            let mut m = PixelMixture::new(1, &[start], 1e6);
            let mut gap = (start - x).abs();
            for _ in 0..50 {
                update_pixel(&mut m, &[x], &params());
                let now = (m.components()[0].mean[0] - x).abs();
                prop_assert!(now <= gap + 1e-12);
                gap = now;
            }
        }

        #[test]
        fn background_count_ignores_uniform_variance_scaling(m in mixture_strategy(), scale in 0.01f64..100.0, t in 0.05f64..0.95) {
            let scaled = PixelMixture::from_components(
                m.components().iter().map(|c| GaussianComponent { variance: c.variance * scale, ..*c }).collect(),
            );
            prop_assert_eq!(m.background_count(t), scaled.background_count(t));
        }
    }
}
