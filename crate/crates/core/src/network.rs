//! Coordinate MLPs and coordinate KANs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::autodiff::{ParamId, Tape, Var};
use crate::basis::{BasisFamily, BasisSpec};
use crate::encoding::{Encoding, EncodingSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Mlp,
    Kan,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::Kan => "kan",
        }
    }
}

fn d_relu() -> Activation {
    Activation::Relu
}
fn d_basis() -> BasisSpec {
    BasisSpec::new(BasisFamily::Bspline)
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub arch: Arch,
    /// Number of weight layers; defaults to 6.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Hidden width; defaults to 256 (MLP) or 64 (KAN).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default = "d_relu")]
    pub activation: Activation,
    #[serde(default = "d_basis")]
    pub basis: BasisSpec,
    #[serde(default)]
    pub encoding: EncodingSpec,
    /// Per-output additive bias in KAN layers.
    #[serde(default = "d_true")]
    pub kan_bias: bool,
}

impl NetworkConfig {
    pub fn mlp(activation: Activation, encoding: EncodingSpec) -> Self {
        Self { arch: Arch::Mlp, depth: None, width: None, activation, basis: d_basis(), encoding, kan_bias: true }
    }

    pub fn kan(basis: BasisSpec) -> Self {
        Self {
            arch: Arch::Kan,
            depth: None,
            width: None,
            activation: d_relu(),
            basis,
            encoding: EncodingSpec::Identity,
            kan_bias: true,
        }
    }

    pub fn with_shape(mut self, depth: usize, width: usize) -> Self {
        self.depth = Some(depth);
        self.width = Some(width);
        self
    }

    pub fn depth(&self) -> usize {
        self.depth.unwrap_or(6)
    }

    pub fn width(&self) -> usize {
        self.width.unwrap_or(match self.arch {
            Arch::Mlp => 256,
            Arch::Kan => 64,
        })
    }

    /// Human-readable nonlinearity label for reports.
    pub fn nonlinearity_label(&self) -> String {
        match self.arch {
            Arch::Mlp => self.activation.label(),
            Arch::Kan => self.basis.label(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() < 1 || self.width() < 1 {
            return Err(Error::InvalidParam("depth and width must be >= 1".into()));
        }
        self.encoding.validate()?;
        match self.arch {
            Arch::Mlp => self.activation.validate(),
            Arch::Kan => {
                if self.encoding != EncodingSpec::Identity {
                    return Err(Error::InvalidParam(format!(
                        "kan networks take raw coordinates; encoding {} is not allowed",
                        self.encoding.name()
                    )));
                }
                self.basis.validate()
            }
        }
    }

    /// Number of trainable scalars, computed from the configuration alone.
    pub fn param_count(&self, in_dim: usize, out_dim: usize) -> usize {
        let dims = self.layer_dims(in_dim, out_dim);
        let body: usize = dims
            .windows(2)
            .map(|w| match self.arch {
                Arch::Mlp => w[0] * w[1] + w[1],
                Arch::Kan => w[0] * w[1] * self.basis.coeff_count() + if self.kan_bias { w[1] } else { 0 },
            })
            .sum();
        let enc = match self.encoding {
            EncodingSpec::Fkan { omega_max } if self.arch == Arch::Mlp => 2 * in_dim * omega_max,
            _ => 0,
        };
        body + enc
    }

    fn layer_dims(&self, in_dim: usize, out_dim: usize) -> Vec<usize> {
        let first = match self.arch {
            Arch::Mlp => self.encoding.output_dim(in_dim),
            Arch::Kan => in_dim,
        };
        let mut dims = vec![first];
        dims.extend(std::iter::repeat_n(self.width(), self.depth() - 1));
        dims.push(out_dim);
        dims
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// All trainable tensors of one network; a tensor's index is its [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    pub params: Vec<Param>,
}

impl ParameterSet {
    fn push(&mut self, name: String, value: Tensor) -> ParamId {
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All scalars concatenated in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Linear { weight: ParamId, bias: ParamId },
    Kan { coeffs: ParamId, bias: Option<ParamId> },
}

/// A built network: architecture plus fixed encoding state. Trainable
/// values live in a separate [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    activation: Activation,
    hidden_activation: Activation,
    encoding: Encoding,
    encoding_coeffs: Option<ParamId>,
    layers: Vec<Layer>,
    in_dim: usize,
    out_dim: usize,
}

fn uniform_tensor<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

impl Network {
    /// Builds the network and its initial parameters deterministically from `seed`.
    pub fn build(config: &NetworkConfig, in_dim: usize, out_dim: usize, seed: u64) -> Result<(Network, ParameterSet)> {
        config.validate()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidParam("input and output dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::default();
        let (encoding, enc_init) = match config.arch {
            Arch::Mlp => config.encoding.build(in_dim, &mut rng),
            Arch::Kan => (Encoding::Identity { d: in_dim }, None),
        };
        let encoding_coeffs = enc_init.map(|c| params.push("encoding.fkan".into(), c));
        let dims = config.layer_dims(in_dim, out_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let activation = config.activation.clone();
        let hidden_activation = activation.hidden();
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            match config.arch {
                Arch::Mlp => {
                    let bound = if activation.is_sine() {
                        if l == 0 {
                            1.0 / fan_in as f64
                        } else {
                            (6.0 / fan_in as f64).sqrt() / hidden_activation.omega()
                        }
                    } else {
                        (6.0 / fan_in as f64).sqrt()
                    };
                    let weight = uniform_tensor(&[fan_out, fan_in], bound, &mut rng);
                    let bias = uniform_tensor(&[fan_out], 1.0 / (fan_in as f64).sqrt(), &mut rng);
                    let weight = params.push(format!("layer{l}.weight"), weight);
                    let bias = params.push(format!("layer{l}.bias"), bias);
                    layers.push(Layer::Linear { weight, bias });
                }
                Arch::Kan => {
                    let coeffs = config.basis.init_coeffs(fan_in, fan_out, &mut rng);
                    let coeffs = params.push(format!("layer{l}.coeffs"), coeffs);
                    let bias =
                        config.kan_bias.then(|| params.push(format!("layer{l}.bias"), Tensor::zeros(&[fan_out])));
                    layers.push(Layer::Kan { coeffs, bias });
                }
            }
        }
        let net = Network {
            config: config.clone(),
            activation,
            hidden_activation,
            encoding,
            encoding_coeffs,
            layers,
            in_dim,
            out_dim,
        };
        Ok((net, params))
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Fan-in of the first weight layer.
    pub fn first_fan_in(&self) -> usize {
        match self.config.arch {
            Arch::Mlp => self.encoding.output_dim(),
            Arch::Kan => self.in_dim,
        }
    }

    /// Registers every parameter on the tape and records the forward pass
    /// of `x: [batch, in_dim]`, returning `[batch, out_dim]`.
    pub fn forward(&self, tape: &mut Tape, params: &ParameterSet, x: Var) -> Result<Var> {
        let vars: Vec<Var> = params.params.iter().enumerate().map(|(id, p)| tape.param(id, p.value.clone())).collect();
        self.forward_with(tape, &vars, x)
    }

    /// Forward pass using parameter nodes already on the tape.
    pub fn forward_with(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = self.encoding.apply(tape, x, self.encoding_coeffs.map(|id| vars[id]))?;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = match *layer {
                Layer::Linear { weight, bias } => {
                    let z = tape.matmul_nt(h, vars[weight])?;
                    let z = tape.add_row(z, vars[bias])?;
                    if l == last {
                        z
                    } else if l == 0 {
                        tape.map(z, &self.activation)
                    } else {
                        tape.map(z, &self.hidden_activation)
                    }
                }
                Layer::Kan { coeffs, bias } => {
                    let z = self.config.basis.layer(tape, h, vars[coeffs])?;
                    match bias {
                        Some(b) => tape.add_row(z, vars[b])?,
                        None => z,
                    }
                }
            };
        }
        Ok(h)
    }

    /// Evaluates the network on `x` in chunks without recording.
    pub fn predict(&self, params: &ParameterSet, x: &Tensor) -> Result<Tensor> {
        const CHUNK: usize = 4096;
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let mut out = Vec::with_capacity(n * self.out_dim);
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let mut tape = Tape::inference();
            let xv = tape.constant(Tensor::matrix(end - start, d, x.data()[start * d..end * d].to_vec()));
            let y = self.forward(&mut tape, params, xv)?;
            out.extend_from_slice(tape.value(y).data());
            start = end;
        }
        Ok(Tensor::matrix(n, self.out_dim, out))
    }
}
