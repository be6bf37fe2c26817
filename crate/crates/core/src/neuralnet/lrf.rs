//! Local-receptive-field network with one output neuron.
//!
//! `N_lrf` small filters of `S_x × S_y` pixels are slid over the window with
//! steps `D_x`, `D_y`. Every position reuses the same filter weights `l_jk`
//! and bias `θ_j`; each (position, filter) activation has its own output
//! weight `w_ij`:
//!
//! `net(x) = h( Σ_i Σ_j w_ij · g( Σ_k x_ik · l_jk + θ_j ) + φ )`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetError, Transfer};
use crate::Scalar;

/// Window and receptive-field layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LrfGeometry {
    pub window_width: usize,
    pub window_height: usize,
    pub field_width: usize,
    pub field_height: usize,
    pub stride_x: usize,
    pub stride_y: usize,
}

impl LrfGeometry {
    pub fn validate(&self) -> Result<(), NetError> {
        let g = |msg: &str| Err(NetError::Geometry(format!("{msg} ({self:?})")));
        if self.window_width == 0 || self.window_height == 0 {
            return g("window must be non-empty");
        }
        if self.field_width == 0 || self.field_height == 0 {
            return g("receptive field must be non-empty");
        }
        if self.stride_x == 0 || self.stride_y == 0 {
            return g("strides must be at least 1");
        }
        if self.field_width > self.window_width || self.field_height > self.window_height {
            return g("receptive field is larger than the window");
        }
        Ok(())
    }

    /// Pixels per receptive field (`M`).
    pub fn field_size(&self) -> usize {
        self.field_width * self.field_height
    }

    pub fn input_len(&self) -> usize {
        self.window_width * self.window_height
    }

    /// Top-left corners of every field position, row-major.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let ys = (0..=self.window_height - self.field_height).step_by(self.stride_y);
        ys.flat_map(|y| (0..=self.window_width - self.field_width).step_by(self.stride_x).map(move |x| (x, y)))
            .collect()
    }

    /// Number of field positions (`N_p`).
    pub fn n_positions(&self) -> usize {
        let nx = (self.window_width - self.field_width) / self.stride_x + 1;
        let ny = (self.window_height - self.field_height) / self.stride_y + 1;
        nx * ny
    }

    /// Index into the window of the `k`-th field pixel at `origin`.
    #[inline]
    pub fn pixel_index(&self, origin: (usize, usize), k: usize) -> usize {
        let (x, y) = origin;
        (y + k / self.field_width) * self.window_width + x + k % self.field_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrfNetwork<T> {
    geometry: LrfGeometry,
    n_fields: usize,
    /// `n_fields × M`, row-major.
    pub field_weights: Vec<T>,
    pub field_biases: Vec<T>,
    /// `N_p × n_fields`, row-major.
    pub output_weights: Vec<T>,
    pub output_bias: T,
    hidden: Transfer,
    output: Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LrfTrace<T> {
    pub pre_hidden: Vec<T>,
    pub hidden: Vec<T>,
    pub output: T,
}

impl<T: Scalar> LrfNetwork<T> {
    pub fn zeros(geometry: LrfGeometry, n_fields: usize, hidden: Transfer, output: Transfer) -> Result<Self, NetError> {
        geometry.validate()?;
        if n_fields == 0 {
            return Err(NetError::Geometry("at least one receptive field is required".into()));
        }
        Ok(Self {
            geometry,
            n_fields,
            field_weights: vec![T::zero(); n_fields * geometry.field_size()],
            field_biases: vec![T::zero(); n_fields],
            output_weights: vec![T::zero(); geometry.n_positions() * n_fields],
            output_bias: T::zero(),
            hidden,
            output,
        })
    }

    /// Uniform `±1/√fan_in` initialisation from `seed`.
    pub fn new(
        geometry: LrfGeometry,
        n_fields: usize,
        hidden: Transfer,
        output: Transfer,
        seed: u64,
    ) -> Result<Self, NetError> {
        let mut net = Self::zeros(geometry, n_fields, hidden, output)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field_bound = 1.0 / (geometry.field_size() as f64).sqrt();
        let out_bound = 1.0 / (net.output_weights.len() as f64).sqrt();
        for w in net.field_weights.iter_mut().chain(net.field_biases.iter_mut()) {
            *w = T::lit(rng.random_range(-field_bound..=field_bound));
        }
        for w in net.output_weights.iter_mut() {
            *w = T::lit(rng.random_range(-out_bound..=out_bound));
        }
        net.output_bias = T::lit(rng.random_range(-out_bound..=out_bound));
        Ok(net)
    }

    /// Assembles a network from raw parameter arrays, checking their lengths.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        geometry: LrfGeometry,
        n_fields: usize,
        field_weights: Vec<T>,
        field_biases: Vec<T>,
        output_weights: Vec<T>,
        output_bias: T,
        hidden: Transfer,
        output: Transfer,
    ) -> Result<Self, NetError> {
        let mut net = Self::zeros(geometry, n_fields, hidden, output)?;
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(NetError::Geometry(format!("{name} has {got} values, expected {want}")))
            }
        };
        check("field weights", field_weights.len(), net.field_weights.len())?;
        check("field biases", field_biases.len(), net.field_biases.len())?;
        check("output weights", output_weights.len(), net.output_weights.len())?;
        net.field_weights = field_weights;
        net.field_biases = field_biases;
        net.output_weights = output_weights;
        net.output_bias = output_bias;
        Ok(net)
    }

    pub fn geometry(&self) -> &LrfGeometry {
        &self.geometry
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn hidden_transfer(&self) -> Transfer {
        self.hidden
    }

    pub fn output_transfer(&self) -> Transfer {
        self.output
    }

    pub(crate) fn trace(&self, window: &[T]) -> Result<LrfTrace<T>, NetError> {
        let geom = &self.geometry;
        if window.len() != geom.input_len() {
            return Err(NetError::Geometry(format!(
                "window has {} pixels, the network expects {}x{}",
                window.len(),
                geom.window_width,
                geom.window_height
            )));
        }
        let m = geom.field_size();
        let positions = geom.positions();
        let mut pre_hidden = Vec::with_capacity(positions.len() * self.n_fields);
        let mut hidden = Vec::with_capacity(positions.len() * self.n_fields);
        let mut patch = vec![T::zero(); m];
        let mut sum = self.output_bias;
        for (i, &origin) in positions.iter().enumerate() {
            for (k, p) in patch.iter_mut().enumerate() {
                *p = window[geom.pixel_index(origin, k)];
            }
            for j in 0..self.n_fields {
                let weights = &self.field_weights[j * m..(j + 1) * m];
                let u = weights.iter().zip(&patch).fold(self.field_biases[j], |acc, (&l, &x)| acc + l * x);
                let a = self.hidden.apply(u);
                sum = sum + self.output_weights[i * self.n_fields + j] * a;
                pre_hidden.push(u);
                hidden.push(a);
            }
        }
        Ok(LrfTrace { pre_hidden, hidden, output: self.output.apply(sum) })
    }

    pub(crate) fn apply_step(&mut self, g: &LrfGradients<T>, factor: T) {
        let pairs = self
            .field_weights
            .iter_mut()
            .zip(&g.field_weights)
            .chain(self.field_biases.iter_mut().zip(&g.field_biases))
            .chain(self.output_weights.iter_mut().zip(&g.output_weights));
        for (w, &d) in pairs {
            *w = *w + factor * d;
        }
        self.output_bias = self.output_bias + factor * g.output_bias;
    }
}

/// Evaluates the network on a row-major window of `window_width × window_height` values.
pub fn lrf_forward<T: Scalar>(net: &LrfNetwork<T>, window: &[T]) -> Result<T, NetError> {
    Ok(net.trace(window)?.output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrfGradients<T> {
    pub field_weights: Vec<T>,
    pub field_biases: Vec<T>,
    pub output_weights: Vec<T>,
    pub output_bias: T,
}

impl<T: Scalar> LrfGradients<T> {
    pub fn zeros_like(net: &LrfNetwork<T>) -> Self {
        Self {
            field_weights: vec![T::zero(); net.field_weights.len()],
            field_biases: vec![T::zero(); net.field_biases.len()],
            output_weights: vec![T::zero(); net.output_weights.len()],
            output_bias: T::zero(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        let pairs = self
            .field_weights
            .iter_mut()
            .zip(&other.field_weights)
            .chain(self.field_biases.iter_mut().zip(&other.field_biases))
            .chain(self.output_weights.iter_mut().zip(&other.output_weights));
        for (a, &b) in pairs {
            *a = *a + b;
        }
        self.output_bias = self.output_bias + other.output_bias;
    }
}
