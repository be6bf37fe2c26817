use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetError, Transfer};
use crate::Scalar;

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![T::zero(); inputs * outputs], biases: vec![T::zero(); outputs] }
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> T {
        self.weights[out * self.inputs + input]
    }

    fn affine(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, &b)| row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x)),
        );
    }
}

/// Intermediate values of one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass<T> {
    /// Weighted inputs of each layer.
    pub pre_activations: Vec<Vec<T>>,
    /// `activations[0]` is the input after any [`InputScaling`], `activations[l + 1]`
    /// the output of layer `l`.
    pub activations: Vec<Vec<T>>,
}

impl<T> ForwardPass<T> {
    pub fn outputs(&self) -> &[T] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Per-feature affine map `(x - offset) * scale` applied to inputs before
/// the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling<T> {
    pub offset: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> InputScaling<T> {
    /// Standardises every feature to zero mean and unit variance over
    /// `rows`. Features with a standard deviation below `min_std` are divided
    /// by `min_std` instead.
    pub fn standardize<'a>(rows: impl IntoIterator<Item = &'a [T]>, min_std: T) -> Option<Self> {
        let mut sum: Vec<T> = Vec::new();
        let mut sum_sq: Vec<T> = Vec::new();
        let mut n = 0usize;
        for row in rows {
            if n == 0 {
                sum = vec![T::zero(); row.len()];
                sum_sq = vec![T::zero(); row.len()];
            }
            if row.len() != sum.len() {
                return None;
            }
            for ((s, q), &x) in sum.iter_mut().zip(&mut sum_sq).zip(row) {
                *s = *s + x;
                *q = *q + x * x;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let count = T::from_usize_lossy(n);
        let offset: Vec<T> = sum.iter().map(|&s| s / count).collect();
        let scale = sum_sq
            .iter()
            .zip(&offset)
            .map(|(&q, &m)| {
                let var = (q / count - m * m).max(T::zero());
                T::one() / var.sqrt().max(min_std)
            })
            .collect();
        Some(Self { offset, scale })
    }

    pub fn apply(&self, input: &[T]) -> Vec<T> {
        input.iter().zip(&self.offset).zip(&self.scale).map(|((&x, &o), &s)| (x - o) * s).collect()
    }
}

/// Dense feed-forward network with two outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    sizes: Vec<usize>,
    layers: Vec<DenseLayer<T>>,
    hidden: Transfer,
    output: Transfer,
    scaling: Option<InputScaling<T>>,
}

fn check_sizes(sizes: &[usize]) -> Result<(), NetError> {
    if sizes.len() < 2 {
        return Err(NetError::Topology(format!("need at least input and output layers, got {sizes:?}")));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(NetError::Topology(format!("layer {i} has no neurons")));
    }
    let out = *sizes.last().unwrap();
    if out != 2 {
        return Err(NetError::OutputWidth(out));
    }
    Ok(())
}

impl<T: Scalar> Network<T> {
    /// Sigmoid hidden layers and identity (logit) outputs, uniformly initialised
    /// in `±1/√fan_in` from `seed`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self, NetError> {
        Self::with_transfers(sizes, Transfer::Sigmoid, Transfer::Identity, seed)
    }

    pub fn with_transfers(sizes: &[usize], hidden: Transfer, output: Transfer, seed: u64) -> Result<Self, NetError> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || T::lit(rng.random_range(-bound..=bound));
                let weights = (0..fan_in * fan_out).map(|_| draw()).collect();
                let biases = (0..fan_out).map(|_| draw()).collect();
                DenseLayer { inputs: fan_in, outputs: fan_out, weights, biases }
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), layers, hidden, output, scaling: None })
    }

    pub fn zeros(sizes: &[usize], hidden: Transfer, output: Transfer) -> Result<Self, NetError> {
        check_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Ok(Self { sizes: sizes.to_vec(), layers, hidden, output, scaling: None })
    }

    /// Assembles a network from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<DenseLayer<T>>, hidden: Transfer, output: Transfer) -> Result<Self, NetError> {
        let first = layers.first().ok_or_else(|| NetError::Topology("no layers".into()))?;
        let mut sizes = vec![first.inputs];
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs != *sizes.last().unwrap() {
                return Err(NetError::Topology(format!(
                    "layer {} takes {} inputs but the previous layer produces {}",
                    i + 1,
                    layer.inputs,
                    sizes.last().unwrap()
                )));
            }
            if layer.weights.len() != layer.inputs * layer.outputs || layer.biases.len() != layer.outputs {
                return Err(NetError::Topology(format!("layer {} parameter arrays do not match its shape", i + 1)));
            }
            sizes.push(layer.outputs);
        }
        check_sizes(&sizes)?;
        Ok(Self { sizes, layers, hidden, output, scaling: None })
    }

    /// Installs an input transform; both vectors must match the input width.
    pub fn with_input_scaling(mut self, scaling: InputScaling<T>) -> Result<Self, NetError> {
        for v in [&scaling.offset, &scaling.scale] {
            if v.len() != self.input_size() {
                return Err(NetError::DimensionMismatch { expected: self.input_size(), found: v.len() });
            }
        }
        self.scaling = Some(scaling);
        Ok(self)
    }

    pub fn input_scaling(&self) -> Option<&InputScaling<T>> {
        self.scaling.as_ref()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn hidden_transfer(&self) -> Transfer {
        self.hidden
    }

    pub fn output_transfer(&self) -> Transfer {
        self.output
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub(crate) fn transfer_for(&self, layer: usize) -> Transfer {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<ForwardPass<T>, NetError> {
        if input.len() != self.input_size() {
            return Err(NetError::DimensionMismatch { expected: self.input_size(), found: input.len() });
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(match &self.scaling {
            Some(s) => s.apply(input),
            None => input.to_vec(),
        });
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(activations.last().unwrap(), &mut z);
            let f = self.transfer_for(i);
            activations.push(z.iter().map(|&v| f.apply(v)).collect());
            pre_activations.push(z);
        }
        Ok(ForwardPass { pre_activations, activations })
    }

    /// Output values only.
    pub fn predict(&self, input: &[T]) -> Result<[T; 2], NetError> {
        let pass = self.forward(input)?;
        let out = pass.outputs();
        Ok([out[0], out[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_with_sigmoid_output_is_half() {
        let net = Network::<f64>::zeros(&[3, 4, 2], Transfer::Sigmoid, Transfer::Sigmoid).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 5.0]).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn linear_chain() {
        let mut net = Network::<f64>::zeros(&[1, 1, 2], Transfer::Identity, Transfer::Identity).unwrap();
        for layer in net.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 1.0);
        }
        assert_eq!(net.predict(&[3.0]).unwrap(), [3.0, 3.0]);
    }

    #[test]
    fn topology_checks() {
        assert!(matches!(Network::<f64>::new(&[3], 0), Err(NetError::Topology(_))));
        assert!(matches!(Network::<f64>::new(&[3, 0, 2], 0), Err(NetError::Topology(_))));
        assert_eq!(Network::<f64>::new(&[3, 4, 3], 0), Err(NetError::OutputWidth(3)));
        let bad = vec![DenseLayer::<f64>::zeros(3, 4), DenseLayer::zeros(5, 2)];
        assert!(Network::from_layers(bad, Transfer::Sigmoid, Transfer::Identity).is_err());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = Network::<f64>::new(&[16, 9, 2], 42).unwrap();
        let b = Network::<f64>::new(&[16, 9, 2], 42).unwrap();
        let c = Network::<f64>::new(&[16, 9, 2], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= 0.25));
        assert!(a.layers()[1].weights.iter().all(|w| w.abs() <= 1.0 / 3.0));
        assert_eq!(a.parameter_count(), 16 * 9 + 9 + 9 * 2 + 2);
    }

    #[test]
    fn works_in_single_precision() {
        let net = Network::<f32>::new(&[4, 3, 2], 1).unwrap();
        let out = net.predict(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
