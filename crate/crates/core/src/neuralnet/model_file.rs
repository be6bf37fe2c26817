//! Plain-text model files.
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! saved model loads back bit-identical. Layout of a dense network:
//!
//! ```text
//! PEDTRACK-MLP 1
//! scalar f64
//! transfers sigmoid identity
//! sizes 1700 200 100 2
//! scaling standard      (or `scaling none`, without the next two lines)
//! offset <1700 values>
//! scale <1700 values>
//! layer 1 200 1700
//! weights <200*1700 values, row-major by output neuron>
//! biases <200 values>
//! layer 2 100 200
//! ...
//! end
//! ```
//!
//! and of a receptive-field network:
//!
//! ```text
//! PEDTRACK-LRF 1
//! scalar f64
//! transfers sigmoid sigmoid
//! geometry <window_w> <window_h> <field_w> <field_h> <stride_x> <stride_y>
//! fields <n_fields>
//! field_weights <n_fields*field_w*field_h values>
//! field_biases <n_fields values>
//! output_weights <positions*n_fields values>
//! output_bias <value>
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{DenseLayer, InputScaling, LrfGeometry, LrfNetwork, NetError, Network, Transfer};
use crate::Scalar;

pub const MLP_MAGIC: &str = "PEDTRACK-MLP";
pub const LRF_MAGIC: &str = "PEDTRACK-LRF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (header `{found}`)")]
    BadMagic { found: String },
    #[error("unsupported model format version `{found}` (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: String },
    #[error("model stores `{found}` values but `{expected}` was requested")]
    ScalarMismatch { expected: &'static str, found: String },
    #[error("model file ends early: expected `{expected}`")]
    Truncated { expected: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(
        "layer {layer} declares {found_out}x{found_in} weights but the topology needs {expected_out}x{expected_in}"
    )]
    LayerShape { layer: usize, expected_out: usize, expected_in: usize, found_out: usize, found_in: usize },
    #[error("line {line}: `{field}` holds {found} values, expected {expected}")]
    ValueCount { line: usize, field: String, expected: usize, found: usize },
    #[error("invalid model: {0}")]
    Invalid(#[from] NetError),
}

/// Either classifier head, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier<T> {
    Dense(Network<T>),
    Lrf(LrfNetwork<T>),
}

fn push_values<T: Scalar>(out: &mut String, key: &str, values: &[T]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

pub fn network_to_string<T: Scalar>(net: &Network<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MLP_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "scalar {}", T::NAME);
    let _ = writeln!(out, "transfers {} {}", net.hidden_transfer().name(), net.output_transfer().name());
    out.push_str("sizes");
    for s in net.sizes() {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
    match net.input_scaling() {
        Some(s) => {
            out.push_str("scaling standard\n");
            push_values(&mut out, "offset", &s.offset);
            push_values(&mut out, "scale", &s.scale);
        }
        None => out.push_str("scaling none\n"),
    }
    for (i, layer) in net.layers().iter().enumerate() {
        let _ = writeln!(out, "layer {} {} {}", i + 1, layer.outputs, layer.inputs);
        push_values(&mut out, "weights", &layer.weights);
        push_values(&mut out, "biases", &layer.biases);
    }
    out.push_str("end\n");
    out
}

pub fn lrf_to_string<T: Scalar>(net: &LrfNetwork<T>) -> String {
    let g = net.geometry();
    let mut out = String::new();
    let _ = writeln!(out, "{LRF_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "scalar {}", T::NAME);
    let _ = writeln!(out, "transfers {} {}", net.hidden_transfer().name(), net.output_transfer().name());
    let _ = writeln!(
        out,
        "geometry {} {} {} {} {} {}",
        g.window_width, g.window_height, g.field_width, g.field_height, g.stride_x, g.stride_y
    );
    let _ = writeln!(out, "fields {}", net.n_fields());
    push_values(&mut out, "field_weights", &net.field_weights);
    push_values(&mut out, "field_biases", &net.field_biases);
    push_values(&mut out, "output_weights", &net.output_weights);
    push_values(&mut out, "output_bias", &[net.output_bias]);
    out.push_str("end\n");
    out
}

pub fn save_network<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    fs::write(path, network_to_string(net))?;
    Ok(())
}

pub fn save_lrf<T: Scalar>(net: &LrfNetwork<T>, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    fs::write(path, lrf_to_string(net))?;
    Ok(())
}

pub fn load_network<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>, ModelFileError> {
    match parse_classifier(&fs::read_to_string(path)?)? {
        Classifier::Dense(n) => Ok(n),
        Classifier::Lrf(_) => Err(ModelFileError::BadMagic { found: LRF_MAGIC.into() }),
    }
}

pub fn load_lrf<T: Scalar>(path: impl AsRef<Path>) -> Result<LrfNetwork<T>, ModelFileError> {
    match parse_classifier(&fs::read_to_string(path)?)? {
        Classifier::Lrf(n) => Ok(n),
        Classifier::Dense(_) => Err(ModelFileError::BadMagic { found: MLP_MAGIC.into() }),
    }
}

pub fn load_classifier<T: Scalar>(path: impl AsRef<Path>) -> Result<Classifier<T>, ModelFileError> {
    parse_classifier(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank line as (1-based line number, key, remaining tokens).
    fn next_entry(&mut self, expected: &str) -> Result<(usize, &'a str, Vec<&'a str>), ModelFileError> {
        for (i, line) in self.inner.by_ref() {
            let mut tokens = line.split_whitespace();
            if let Some(key) = tokens.next() {
                return Ok((i + 1, key, tokens.collect()));
            }
        }
        Err(ModelFileError::Truncated { expected: expected.to_string() })
    }

    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), ModelFileError> {
        let (line, found, rest) = self.next_entry(key)?;
        if found != key {
            return Err(ModelFileError::Parse { line, message: format!("expected `{key}`, found `{found}`") });
        }
        Ok((line, rest))
    }
}

fn parse_num<N: std::str::FromStr>(line: usize, token: &str) -> Result<N, ModelFileError> {
    token.parse().map_err(|_| ModelFileError::Parse { line, message: format!("cannot parse `{token}`") })
}

fn parse_values<T: Scalar>(lines: &mut Lines<'_>, key: &str, count: usize) -> Result<Vec<T>, ModelFileError> {
    let (line, tokens) = lines.expect(key)?;
    if tokens.len() != count {
        return Err(ModelFileError::ValueCount { line, field: key.into(), expected: count, found: tokens.len() });
    }
    tokens.iter().map(|t| parse_num(line, t)).collect()
}

fn parse_transfers(lines: &mut Lines<'_>) -> Result<(Transfer, Transfer), ModelFileError> {
    let (line, tokens) = lines.expect("transfers")?;
    let get = |i: usize| {
        tokens
            .get(i)
            .and_then(|t| Transfer::from_name(t))
            .ok_or_else(|| ModelFileError::Parse { line, message: "expected two transfer names".into() })
    };
    Ok((get(0)?, get(1)?))
}

fn parse_usizes(line: usize, tokens: &[&str], count: usize, field: &str) -> Result<Vec<usize>, ModelFileError> {
    if tokens.len() != count {
        return Err(ModelFileError::ValueCount { line, field: field.into(), expected: count, found: tokens.len() });
    }
    tokens.iter().map(|t| parse_num(line, t)).collect()
}

pub fn parse_classifier<T: Scalar>(text: &str) -> Result<Classifier<T>, ModelFileError> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let (_, magic, rest) = lines.next_entry("model header")?;
    if magic != MLP_MAGIC && magic != LRF_MAGIC {
        return Err(ModelFileError::BadMagic { found: magic.into() });
    }
    let version = rest.first().copied().unwrap_or("");
    if version != FORMAT_VERSION.to_string() {
        return Err(ModelFileError::UnsupportedVersion { found: version.into() });
    }
    let (line, scalar) = lines.expect("scalar")?;
    match scalar.first() {
        Some(&s) if s == T::NAME => {}
        Some(&s) => return Err(ModelFileError::ScalarMismatch { expected: T::NAME, found: s.into() }),
        None => return Err(ModelFileError::Parse { line, message: "missing scalar type".into() }),
    }
    let (hidden, output) = parse_transfers(&mut lines)?;

    let model = if magic == MLP_MAGIC {
        let (line, tokens) = lines.expect("sizes")?;
        let sizes: Vec<usize> = tokens.iter().map(|t| parse_num(line, t)).collect::<Result<_, _>>()?;
        if sizes.len() < 2 {
            return Err(ModelFileError::Parse { line, message: "need at least two layer sizes".into() });
        }
        let (line, tokens) = lines.expect("scaling")?;
        let scaling = match tokens.as_slice() {
            ["none"] => None,
            ["standard"] => Some(InputScaling {
                offset: parse_values(&mut lines, "offset", sizes[0])?,
                scale: parse_values(&mut lines, "scale", sizes[0])?,
            }),
            _ => {
                return Err(ModelFileError::Parse {
                    line,
                    message: "expected `scaling none` or `scaling standard`".into(),
                })
            }
        };
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let (line, tokens) = lines.expect("layer")?;
            let header = parse_usizes(line, &tokens, 3, "layer")?;
            if header[0] != i + 1 {
                return Err(ModelFileError::Parse {
                    line,
                    message: format!("expected layer {}, found {}", i + 1, header[0]),
                });
            }
            if header[1] != w[1] || header[2] != w[0] {
                return Err(ModelFileError::LayerShape {
                    layer: i + 1,
                    expected_out: w[1],
                    expected_in: w[0],
                    found_out: header[1],
                    found_in: header[2],
                });
            }
            let weights = parse_values(&mut lines, "weights", w[0] * w[1])?;
            let biases = parse_values(&mut lines, "biases", w[1])?;
            layers.push(DenseLayer { inputs: w[0], outputs: w[1], weights, biases });
        }
        let net = Network::from_layers(layers, hidden, output)?;
        Classifier::Dense(match scaling {
            Some(s) => net.with_input_scaling(s)?,
            None => net,
        })
    } else {
        let (line, tokens) = lines.expect("geometry")?;
        let g = parse_usizes(line, &tokens, 6, "geometry")?;
        let geometry = LrfGeometry {
            window_width: g[0],
            window_height: g[1],
            field_width: g[2],
            field_height: g[3],
            stride_x: g[4],
            stride_y: g[5],
        };
        geometry.validate()?;
        let (line, tokens) = lines.expect("fields")?;
        let n_fields = parse_usizes(line, &tokens, 1, "fields")?[0];
        let field_weights = parse_values(&mut lines, "field_weights", n_fields * geometry.field_size())?;
        let field_biases = parse_values(&mut lines, "field_biases", n_fields)?;
        let output_weights = parse_values(&mut lines, "output_weights", geometry.n_positions() * n_fields)?;
        let output_bias = parse_values(&mut lines, "output_bias", 1)?[0];
        Classifier::Lrf(LrfNetwork::from_parts(
            geometry,
            n_fields,
            field_weights,
            field_biases,
            output_weights,
            output_bias,
            hidden,
            output,
        )?)
    };
    lines.expect("end")?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_round_trip_is_exact() {
        let net = Network::<f64>::new(&[6, 5, 3, 2], 77).unwrap();
        let text = network_to_string(&net);
        let back = match parse_classifier::<f64>(&text).unwrap() {
            Classifier::Dense(n) => n,
            other => panic!("{other:?}"),
        };
        assert_eq!(back, net);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(net.predict(&x).unwrap(), back.predict(&x).unwrap());
        }
    }

    #[test]
    fn scaled_network_round_trip() {
        let rows = [vec![1.0, 2.0, 3.0], vec![3.0, 2.0, -1.0]];
        let scaling = InputScaling::standardize(rows.iter().map(Vec::as_slice), 1e-6).unwrap();
        assert_eq!(scaling.offset, vec![2.0, 2.0, 1.0]);
        assert_eq!(scaling.scale[0], 1.0);
        assert_eq!(scaling.scale[1], 1e6);
        let net = Network::<f64>::new(&[3, 4, 2], 8).unwrap().with_input_scaling(scaling).unwrap();
        let text = network_to_string(&net);
        assert!(text.contains("scaling standard\noffset 2 2 1\n"));
        assert_eq!(parse_classifier::<f64>(&text).unwrap(), Classifier::Dense(net));
    }

    #[test]
    fn single_precision_round_trip() {
        let net = Network::<f32>::new(&[4, 3, 2], 5).unwrap();
        assert_eq!(parse_classifier::<f32>(&network_to_string(&net)).unwrap(), Classifier::Dense(net.clone()));
        assert!(matches!(
            parse_classifier::<f64>(&network_to_string(&net)),
            Err(ModelFileError::ScalarMismatch { .. })
        ));
    }

    #[test]
    fn lrf_round_trip_is_exact() {
        let g = LrfGeometry {
            window_width: 6,
            window_height: 8,
            field_width: 3,
            field_height: 4,
            stride_x: 3,
            stride_y: 2,
        };
        let net = LrfNetwork::<f64>::new(g, 2, Transfer::Tanh, Transfer::Sigmoid, 3).unwrap();
        assert_eq!(parse_classifier::<f64>(&lrf_to_string(&net)).unwrap(), Classifier::Lrf(net));
    }

    #[test]
    fn truncated_file_is_a_structured_error() {
        let net = Network::<f64>::new(&[3, 3, 2], 1).unwrap();
        let text = network_to_string(&net);
        let cut: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        match parse_classifier::<f64>(&cut) {
            Err(ModelFileError::Truncated { expected }) => assert_eq!(expected, "biases"),
            other => panic!("{other:?}"),
        }
        let half = &text[..text.len() / 2];
        assert!(parse_classifier::<f64>(half).is_err());
    }

    #[test]
    fn mismatched_layer_dimensions_name_the_layer() {
        let net = Network::<f64>::new(&[3, 4, 2], 1).unwrap();
        let text = network_to_string(&net).replace("layer 2 2 4", "layer 2 2 5");
        match parse_classifier::<f64>(&text) {
            Err(e @ ModelFileError::LayerShape { layer: 2, .. }) => assert!(e.to_string().contains("layer 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_checks() {
        assert!(matches!(parse_classifier::<f64>("HELLO 1\n"), Err(ModelFileError::BadMagic { .. })));
        assert!(matches!(
            parse_classifier::<f64>("PEDTRACK-MLP 2\nscalar f64\n"),
            Err(ModelFileError::UnsupportedVersion { .. })
        ));
        assert!(matches!(parse_classifier::<f64>(""), Err(ModelFileError::Truncated { .. })));
    }
}
