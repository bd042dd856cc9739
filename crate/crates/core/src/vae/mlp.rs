//! Two-headed multilayer perceptron: a shared trunk followed by a mean head
//! and a log-variance head. The log-variance head is clamped to [−10, 10]
//! before any exponentiation.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::distributions::{DiagGaussian, Prng};
use crate::error::{Error, Result};

pub const LOG_VARIANCE_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Softplus,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Softplus => crate::autodiff::softplus_scalar(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softplus" => Ok(Activation::Softplus),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidParameter(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

/// Architecture of one two-headed MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
    pub activation: Activation,
    /// Initial bias of the log-variance head. Starting it negative makes
    /// the initial output distribution sharp, which keeps the latent code
    /// informative from the first iterations.
    pub logvar_bias_init: f64,
    /// Fixed affine input preprocessing `(x - center) * scale`, applied
    /// before the first layer.
    pub input_center: f64,
    pub input_scale: f64,
    /// Multiplier on the ±1/√fan_in weight init bound.
    pub init_gain: f64,
}

impl MlpConfig {
    pub fn new(input_width: usize, hidden_widths: &[usize], output_width: usize) -> Self {
        MlpConfig {
            input_width,
            hidden_widths: hidden_widths.to_vec(),
            output_width,
            activation: Activation::Softplus,
            logvar_bias_init: 0.0,
            input_center: 0.0,
            input_scale: 1.0,
            init_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::InvalidParameter("zero-width mlp layer".into()));
        }
        if self.hidden_widths.iter().any(|w| *w == 0) {
            return Err(Error::InvalidParameter("zero-width hidden layer".into()));
        }
        Ok(())
    }
}

/// One affine layer: weight `[in, out]` plus bias `[1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut Prng) -> Self {
        let bound = gain / (fan_in as f64).sqrt();
        let weight = Tensor::matrix(
            fan_in,
            fan_out,
            (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound))
                .collect(),
        )
        .expect("layer weight shape");
        Layer {
            weight,
            bias: Tensor::zeros(1, fan_out),
        }
    }

    fn out_width(&self) -> usize {
        self.bias.len()
    }
}

/// Graph node ids of one registered MLP's parameters, in layout order.
#[derive(Debug, Clone)]
pub struct MlpNodeIds {
    pub trunk: Vec<(NodeId, NodeId)>,
    pub mean_head: (NodeId, NodeId),
    pub logvar_head: (NodeId, NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub config: MlpConfig,
    pub trunk: Vec<Layer>,
    pub mean_head: Layer,
    pub logvar_head: Layer,
}

impl Mlp {
    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero.
    pub fn init(config: MlpConfig, rng: &mut Prng) -> Result<Self> {
        config.validate()?;
        let mut trunk = Vec::new();
        let mut prev = config.input_width;
        for &w in &config.hidden_widths {
            trunk.push(Layer::init(prev, w, config.init_gain, rng));
            prev = w;
        }
        let mean_head = Layer::init(prev, config.output_width, config.init_gain, rng);
        let mut logvar_head = Layer::init(prev, config.output_width, config.init_gain, rng);
        for b in logvar_head.bias.data_mut() {
            *b = config.logvar_bias_init;
        }
        Ok(Mlp {
            config,
            trunk,
            mean_head,
            logvar_head,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.trunk {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.mean_head.weight);
        out.push(&self.mean_head.bias);
        out.push(&self.logvar_head.weight);
        out.push(&self.logvar_head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.trunk {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.mean_head.weight);
        out.push(&mut self.mean_head.bias);
        out.push(&mut self.logvar_head.weight);
        out.push(&mut self.logvar_head.bias);
        out
    }

    /// `(name, tensor)` pairs in layout order, for checkpoints.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("{prefix}.trunk{i}.weight"), &l.weight));
            out.push((format!("{prefix}.trunk{i}.bias"), &l.bias));
        }
        out.push((format!("{prefix}.mean.weight"), &self.mean_head.weight));
        out.push((format!("{prefix}.mean.bias"), &self.mean_head.bias));
        out.push((format!("{prefix}.logvar.weight"), &self.logvar_head.weight));
        out.push((format!("{prefix}.logvar.bias"), &self.logvar_head.bias));
        out
    }

    /// Registers every parameter as a trainable graph leaf.
    pub fn register(&self, graph: &mut Graph) -> Result<MlpNodeIds> {
        let mut trunk = Vec::new();
        for l in &self.trunk {
            trunk.push((
                graph.parameter(l.weight.clone())?,
                graph.parameter(l.bias.clone())?,
            ));
        }
        let mean_head = (
            graph.parameter(self.mean_head.weight.clone())?,
            graph.parameter(self.mean_head.bias.clone())?,
        );
        let logvar_head = (
            graph.parameter(self.logvar_head.weight.clone())?,
            graph.parameter(self.logvar_head.bias.clone())?,
        );
        Ok(MlpNodeIds {
            trunk,
            mean_head,
            logvar_head,
        })
    }

    /// Differentiable batched forward pass. Returns (mean, clamped
    /// log-variance) nodes, each `[batch, output_width]`.
    pub fn graph_forward(
        &self,
        graph: &mut Graph,
        ids: &MlpNodeIds,
        input: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let mut h = input;
        if self.config.input_center != 0.0 || self.config.input_scale != 1.0 {
            let shifted = graph.add_scalar(h, -self.config.input_center)?;
            h = graph.scale(shifted, self.config.input_scale)?;
        }
        for (w, b) in &ids.trunk {
            let lin = graph.matmul(h, *w)?;
            let lin = graph.add(lin, *b)?;
            h = match self.config.activation {
                Activation::Softplus => graph.softplus(lin)?,
                Activation::Tanh => graph.tanh(lin)?,
                Activation::Relu => graph.relu(lin)?,
            };
        }
        let mean = graph.matmul(h, ids.mean_head.0)?;
        let mean = graph.add(mean, ids.mean_head.1)?;
        let lv = graph.matmul(h, ids.logvar_head.0)?;
        let lv = graph.add(lv, ids.logvar_head.1)?;
        let lv = graph.clamp(lv, -LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP)?;
        Ok((mean, lv))
    }

    fn max_width(&self) -> usize {
        self.trunk
            .iter()
            .map(Layer::out_width)
            .chain([self.config.input_width, self.config.output_width])
            .max()
            .unwrap_or(1)
    }

    /// Gradient-free forward pass for one example. Accumulation order matches
    /// the graph kernels exactly, so both paths produce bit-identical
    /// outputs.
    pub fn forward_one(&self, input: &[f64], scratch: &mut ForwardScratch) -> DiagGaussian {
        debug_assert_eq!(input.len(), self.config.input_width);
        scratch.ensure(self.max_width());
        let (cur, next) = (&mut scratch.a, &mut scratch.b);
        cur[..input.len()].copy_from_slice(input);
        if self.config.input_center != 0.0 || self.config.input_scale != 1.0 {
            for v in cur[..input.len()].iter_mut() {
                *v = (*v + -self.config.input_center) * self.config.input_scale;
            }
        }
        let mut width = input.len();

        for layer in &self.trunk {
            let out_w = layer.out_width();
            matvec(&cur[..width], &layer.weight, &layer.bias, &mut next[..out_w]);
            for v in next[..out_w].iter_mut() {
                *v = self.config.activation.apply(*v);
            }
            cur[..out_w].copy_from_slice(&next[..out_w]);
            width = out_w;
        }

        let out_w = self.config.output_width;
        let mut mean = vec![0.0; out_w];
        let mut lv = vec![0.0; out_w];
        matvec(&cur[..width], &self.mean_head.weight, &self.mean_head.bias, &mut mean);
        matvec(&cur[..width], &self.logvar_head.weight, &self.logvar_head.bias, &mut lv);
        for v in lv.iter_mut() {
            *v = v.clamp(-LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP);
        }
        DiagGaussian {
            mean,
            log_variance: lv,
        }
    }
}

/// `out = x·W + b` for a single row, accumulating over the input axis in the
/// same order as the batched kernel.
fn matvec(x: &[f64], w: &Tensor, b: &Tensor, out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        let row = &w.data()[i * n..(i + 1) * n];
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    for (o, bj) in out.iter_mut().zip(b.data()) {
        *o += bj;
    }
}

/// Reusable buffers for `forward_one`.
#[derive(Debug, Default)]
pub struct ForwardScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ForwardScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, width: usize) {
        if self.a.len() < width {
            self.a.resize(width, 0.0);
            self.b.resize(width, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_mlp() -> Mlp {
        let mut rng = Prng::new(31);
        Mlp::init(MlpConfig::new(2, &[7, 5], 3), &mut rng).unwrap()
    }

    #[test]
    fn plain_and_graph_forward_agree_bitwise() {
        let mlp = small_mlp();
        let batch = [[0.25, -0.5], [0.9, 0.1], [0.0, 0.0]];

        let mut graph = Graph::new();
        let ids = mlp.register(&mut graph).unwrap();
        let flat: Vec<f64> = batch.iter().flatten().copied().collect();
        let x = graph.constant(Tensor::matrix(3, 2, flat).unwrap()).unwrap();
        let (mean, lv) = mlp.graph_forward(&mut graph, &ids, x).unwrap();

        let mut scratch = ForwardScratch::new();
        for (row, example) in batch.iter().enumerate() {
            let d = mlp.forward_one(example, &mut scratch);
            for j in 0..3 {
                assert_eq!(d.mean[j], graph.value(mean).data()[row * 3 + j]);
                assert_eq!(d.log_variance[j], graph.value(lv).data()[row * 3 + j]);
            }
        }
    }

    #[test]
    fn logvar_clamped_to_ten() {
        // Force a huge log-variance via the bias and confirm the clamp.
        let mut mlp = small_mlp();
        for v in mlp.logvar_head.bias.data_mut() {
            *v = 1e6;
        }
        let mut scratch = ForwardScratch::new();
        let d = mlp.forward_one(&[0.3, 0.3], &mut scratch);
        assert!(d.log_variance.iter().all(|v| *v <= LOG_VARIANCE_CLAMP));
    }

    #[test]
    fn empty_hidden_list_gives_linear_heads() {
        let mut rng = Prng::new(9);
        let mut mlp = Mlp::init(MlpConfig::new(2, &[], 2), &mut rng).unwrap();
        // Make the mean head the identity and zero the log-variance head.
        mlp.mean_head.weight = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        mlp.mean_head.bias = Tensor::zeros(1, 2);
        mlp.logvar_head.weight = Tensor::zeros(2, 2);
        mlp.logvar_head.bias = Tensor::zeros(1, 2);
        let mut scratch = ForwardScratch::new();
        let d = mlp.forward_one(&[0.7, -0.2], &mut scratch);
        assert_eq!(d.mean, vec![0.7, -0.2]);
        assert_eq!(d.log_variance, vec![0.0, 0.0]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Mlp::init(MlpConfig::new(2, &[4], 2), &mut Prng::new(5)).unwrap();
        let b = Mlp::init(MlpConfig::new(2, &[4], 2), &mut Prng::new(5)).unwrap();
        assert_eq!(a, b);
    }
}
