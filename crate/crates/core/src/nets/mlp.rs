use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::toydata::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Generator,
    Critic,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply_var(self, x: Var<'_>) -> Result<Var<'_>> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => x.relu(),
            Activation::LeakyRelu => x.leaky_relu(),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    0.01 * v
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }
}

/// Layer widths for the toy networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub data_dim: usize,
    pub hidden_width: usize,
    pub generator_hidden_layers: usize,
    pub critic_hidden_layers: usize,
    pub num_targets: usize,
}

impl Architecture {
    /// 512-unit ReLU MLPs: three hidden layers for generators, two for the critic
    /// and the classifier trunk.
    pub fn toy(num_targets: usize) -> Self {
        Architecture {
            data_dim: 2,
            hidden_width: 512,
            generator_hidden_layers: 3,
            critic_hidden_layers: 2,
            num_targets,
        }
    }

    /// Layer width chain for a role, input first.
    pub fn widths(&self, role: Role) -> Vec<usize> {
        let (hidden, out) = match role {
            Role::Generator => (self.generator_hidden_layers, self.data_dim),
            Role::Critic => (self.critic_hidden_layers, 1),
            Role::Classifier => (self.critic_hidden_layers, self.num_targets),
        };
        let mut w = vec![self.data_dim];
        w.extend(std::iter::repeat(self.hidden_width).take(hidden));
        w.push(out);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[fan_in, fan_out]`, applied as `x · W + b`.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub role: Role,
    pub layers: Vec<Layer>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpParams {
    /// Output activation by role: generators and the critic are linear, the
    /// classifier has one sigmoid head per target domain.
    pub fn output_activation(role: Role) -> Activation {
        match role {
            Role::Classifier => Activation::Sigmoid,
            Role::Generator | Role::Critic => Activation::Identity,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(role: Role, arch: &Architecture, stream: &Stream) -> Self {
        let widths = arch.widths(role);
        let mut s = stream.clone();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| s.uniform_in(-limit, limit))
                    .collect();
                Layer {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("sized above"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        MlpParams {
            role,
            layers,
            hidden: Activation::Relu,
            output: Self::output_activation(role),
        }
    }

    pub fn from_layers(role: Role, layers: Vec<Layer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            let (fi, fo) = l.weight.dims2();
            if l.weight.shape().len() != 2 || l.bias.shape() != [fo] {
                return Err(Error::Dimension {
                    op: "mlp",
                    operand: "bias",
                    expected: format!("[{fo}]"),
                    found: l.bias.shape().to_vec(),
                });
            }
            if i > 0 && layers[i - 1].weight.cols() != fi {
                return Err(Error::Dimension {
                    op: "mlp",
                    operand: "weight",
                    expected: format!("{} input rows", layers[i - 1].weight.cols()),
                    found: l.weight.shape().to_vec(),
                });
            }
        }
        Ok(MlpParams {
            role,
            layers,
            hidden: Activation::Relu,
            output: Self::output_activation(role),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in `[w0, b0, w1, b1, ..]` order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Registers every parameter as a tape leaf, in [`MlpParams::tensors`] order.
    pub fn register<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors().into_iter().map(|t| tape.input(t.clone())).collect()
    }

    fn check_input(&self, cols: usize, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 || cols != self.input_dim() {
            return Err(Error::Dimension {
                op: "mlp-forward",
                operand: "batch",
                expected: format!("[rows, {}]", self.input_dim()),
                found: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Forward pass on the tape using previously registered parameter nodes.
    pub fn forward_with<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        self.check_input(shape.get(1).copied().unwrap_or(0), &shape)?;
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, pair) in params.chunks(2).enumerate() {
            h = h.matmul(pair[0])?.add(pair[1])?;
            h = if i == last {
                self.output.apply_var(h)?
            } else {
                self.hidden.apply_var(h)?
            };
        }
        Ok(h)
    }

    /// Forward pass registering fresh parameter nodes.
    pub fn forward<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Result<Var<'t>> {
        let params = self.register(tape);
        self.forward_with(&params, x)
    }

    /// Tape-free forward pass.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.cols(), x.shape())?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = Tensor::matmul(&h, &l.weight, false, false)?;
            let act = if i == last { self.output } else { self.hidden };
            let c = h.cols();
            for row in h.data_mut().chunks_mut(c) {
                for (v, b) in row.iter_mut().zip(l.bias.data()) {
                    *v = act.apply(*v + b);
                }
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference, relative_error};

    #[test]
    fn toy_shapes() {
        let arch = Architecture::toy(6);
        assert_eq!(arch.widths(Role::Generator), vec![2, 512, 512, 512, 2]);
        assert_eq!(arch.widths(Role::Critic), vec![2, 512, 512, 1]);
        assert_eq!(arch.widths(Role::Classifier), vec![2, 512, 512, 6]);
        let g = MlpParams::init(Role::Generator, &arch, &Stream::new(1));
        assert_eq!(
            g.num_params(),
            2 * 512 + 512 + 2 * (512 * 512 + 512) + 512 * 2 + 2
        );
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = Architecture::toy(6);
        let a = MlpParams::init(Role::Critic, &arch, &Stream::new(5));
        let b = MlpParams::init(Role::Critic, &arch, &Stream::new(5));
        assert_eq!(a, b);
        let limit = (6.0f64 / (512.0 + 512.0)).sqrt();
        assert!(a.layers[1].weight.data().iter().all(|w| w.abs() <= limit));
        assert!(a.layers.iter().all(|l| l.bias.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_generator_outputs_zero() {
        let arch = Architecture::toy(6);
        let mut g = MlpParams::init(Role::Generator, &arch, &Stream::new(2));
        for t in g.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::from_rows(&[[0.3, -0.7], [1.0, 2.0]]).unwrap();
        assert!(g.eval(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classifier_outputs_are_probabilities() {
        let arch = Architecture { hidden_width: 16, ..Architecture::toy(3) };
        let c = MlpParams::init(Role::Classifier, &arch, &Stream::new(3));
        let x = Tensor::from_rows(&[[5.0, -4.0], [0.0, 0.0], [-2.0, 9.0]]).unwrap();
        let p = c.eval(&x).unwrap();
        assert_eq!(p.shape(), &[3, 3]);
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn hand_set_affine_critic() {
        let layer = Layer {
            weight: Tensor::matrix(1, 1, vec![2.0]).unwrap(),
            bias: Tensor::vector(vec![1.0]),
        };
        let f = MlpParams::from_layers(Role::Critic, vec![layer]).unwrap();
        let out = f.eval(&Tensor::matrix(1, 1, vec![3.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn tape_and_eval_agree() {
        let arch = Architecture { hidden_width: 8, ..Architecture::toy(2) };
        let g = MlpParams::init(Role::Generator, &arch, &Stream::new(4));
        let x = Tensor::from_rows(&[[0.1, 0.2], [-0.3, 0.9]]).unwrap();
        let tape = Tape::new();
        let y = g.forward(&tape, tape.input(x.clone())).unwrap();
        assert_eq!(*y.value(), g.eval(&x).unwrap());
    }

    #[test]
    fn rejects_wrong_input_width() {
        let arch = Architecture { hidden_width: 4, ..Architecture::toy(2) };
        let g = MlpParams::init(Role::Critic, &arch, &Stream::new(4));
        assert!(g.eval(&Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let arch = Architecture { hidden_width: 6, ..Architecture::toy(3) };
        let x = Tensor::from_rows(&[[0.4, -0.2], [1.1, 0.3], [-0.8, 0.5]]).unwrap();
        for role in [Role::Generator, Role::Critic, Role::Classifier] {
            let net = MlpParams::init(role, &arch, &Stream::new(9));
            let loss_of = |p: &MlpParams| -> f64 {
                let y = p.eval(&x).unwrap();
                y.data().iter().enumerate().map(|(i, v)| v * (0.5 + i as f64 * 0.1)).sum()
            };
            let tape = Tape::new();
            let params = net.register(&tape);
            let y = net.forward_with(&params, tape.input(x.clone())).unwrap();
            let w = Tensor::new(
                y.shape(),
                (0..y.value().len()).map(|i| 0.5 + i as f64 * 0.1).collect(),
            )
            .unwrap();
            let loss = y.mul(tape.input(w)).unwrap().sum().unwrap();
            let grads = tape.grad(loss, &params).unwrap();
            for (k, g) in grads.iter().enumerate() {
                let fd = finite_difference(net.tensors()[k], 1e-5, |t| {
                    let mut p = net.clone();
                    *p.tensors_mut()[k] = t.clone();
                    loss_of(&p)
                });
                let err = relative_error(g.data(), fd.data(), 1e-10);
                assert!(err < 1e-5, "{role:?} tensor {k}: {err}");
            }
        }
    }
}
