//! Pedestrian / background classifiers.
//!
//! [`Network`] is a dense feed-forward net over PHOG descriptors with two
//! output logits (index 0 = pedestrian, index 1 = background), trained by
//! full-batch gradient descent on softmax cross-entropy. [`LrfNetwork`] is the
//! shared-weight local-receptive-field variant that scores raw pixel windows
//! with a single output neuron.

mod dense;
mod lrf;
mod model_file;
mod train;

use thiserror::Error;

pub use dense::{DenseLayer, ForwardPass, InputScaling, Network};
pub use lrf::{lrf_forward, LrfGeometry, LrfGradients, LrfNetwork};
pub use model_file::{load_classifier, load_lrf, load_network, save_lrf, save_network, Classifier, ModelFileError};
pub use train::{
    batch_gradient, gradient, lrf_gradient, sample_loss, train, train_lrf, Gradients, LossKind, Sample, TrainConfig,
    TrainReport,
};

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input has {found} values, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("network must have exactly 2 outputs, got {0}")]
    OutputWidth(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("incompatible receptive-field geometry: {0}")]
    Geometry(String),
}

/// Element-wise activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transfer {
    Identity,
    Sigmoid,
    Tanh,
}

impl Transfer {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Self::Identity => z,
            Self::Sigmoid => crate::scalar::sigmoid(z),
            Self::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative<T: Scalar>(self, _z: T, a: T) -> T {
        match self {
            Self::Identity => T::one(),
            Self::Sigmoid => a * (T::one() - a),
            Self::Tanh => T::one() - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Self::Identity),
            "sigmoid" => Some(Self::Sigmoid),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }
}

/// Class label. The pedestrian class is output 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pedestrian,
    Background,
}

impl Label {
    pub fn output_index(self) -> usize {
        match self {
            Self::Pedestrian => 0,
            Self::Background => 1,
        }
    }

    pub fn from_output_index(i: usize) -> Self {
        if i == 0 {
            Self::Pedestrian
        } else {
            Self::Background
        }
    }

    /// Conventional binary encoding: 1 for pedestrian, 0 for background.
    pub fn as_binary(self) -> u8 {
        match self {
            Self::Pedestrian => 1,
            Self::Background => 0,
        }
    }

    pub fn from_binary(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Pedestrian),
            0 => Some(Self::Background),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification<T> {
    pub label: Label,
    /// Softmax probability of the pedestrian class.
    pub score: T,
}

/// Turns two output values into a label and pedestrian probability. Exact
/// ties go to the pedestrian class.
pub fn classify_outputs<T: Scalar>(outputs: &[T]) -> Classification<T> {
    let probs = crate::scalar::softmax(outputs);
    let label = if outputs[0] >= outputs[1] { Label::Pedestrian } else { Label::Background };
    Classification { label, score: probs[0] }
}

/// Runs the network on a descriptor and classifies the result.
pub fn classify<T: Scalar>(net: &Network<T>, descriptor: &[T]) -> Result<Classification<T>, NetError> {
    let pass = net.forward(descriptor)?;
    Ok(classify_outputs(pass.outputs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classify_examples() {
        let c = classify_outputs(&[0.9f64, 0.1]);
        assert_eq!(c.label, Label::Pedestrian);
        // 1 / (1 + e^-0.8)
        assert!((c.score - 0.689_974_481_127_612_8).abs() < 1e-12);

        let tie = classify_outputs(&[0.3f64, 0.3]);
        assert_eq!(tie.label, Label::Pedestrian);
        assert_eq!(tie.score, 0.5);

        let bg = classify_outputs(&[-1.0f64, 2.0]);
        assert_eq!(bg.label, Label::Background);
    }

    #[test]
    fn classify_rejects_wrong_length() {
        let net = Network::<f64>::zeros(&[4, 3, 2], Transfer::Sigmoid, Transfer::Identity).unwrap();
        assert_eq!(classify(&net, &[0.0; 5]), Err(NetError::DimensionMismatch { expected: 4, found: 5 }));
    }

    #[test]
    fn transfer_names_round_trip() {
        for t in [Transfer::Identity, Transfer::Sigmoid, Transfer::Tanh] {
            assert_eq!(Transfer::from_name(t.name()), Some(t));
        }
        assert_eq!(Transfer::from_name("relu"), None);
    }

    proptest! {
        #[test]
        fn label_ignores_a_common_shift(a in -50.0f64..50.0, b in -50.0f64..50.0, shift in -1e3f64..1e3) {
            prop_assume!((a - b).abs() > 1e-9);
            let base = classify_outputs(&[a, b]).label;
            prop_assert_eq!(base, classify_outputs(&[a + shift, b + shift]).label);
        }
    }
}
