//! Encoder/decoder networks, the three training objectives (negative ELBO,
//! importance-weighted, MSE), and the training loop.

mod checkpoint;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mlp::{Activation, ForwardScratch, Layer, Mlp, MlpConfig, MlpNodeIds, LOG_VARIANCE_CLAMP};

use crate::autodiff::{AdamConfig, AdamOutcome, AdamState, Graph, NodeId, Tensor};
use crate::datasets::DatasetSpec;
use crate::distributions::{
    diag_gaussian_log_density, kl_diag_to_standard, reparameterize, DiagGaussian, Prng, LN_2PI,
};
use crate::error::{Error, Result};

/// Hidden widths used when no architecture is specified.
pub const DEFAULT_HIDDEN: [usize; 4] = [256, 256, 256, 256];
pub const DEFAULT_LATENT_DIM: usize = 2;

/// Encoder (ℝ² → latent Gaussian) plus decoder (latent → ℝ² Gaussian).
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
}

/// Node ids of a model registered in a graph.
pub struct VaeNodeIds {
    pub encoder: MlpNodeIds,
    pub decoder: MlpNodeIds,
}

/// Model architecture knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub encoder_logvar_bias_init: f64,
    pub decoder_logvar_bias_init: f64,
    /// Fixed encoder input preprocessing `(x - center) * scale`; the data
    /// lives on the unit square, so centering at 0.5 and scaling by 2 maps
    /// it onto [-1, 1].
    pub input_center: f64,
    pub input_scale: f64,
    /// Multiplier on the ±1/√fan_in weight init bound.
    pub init_gain: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: DEFAULT_LATENT_DIM,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Softplus,
            encoder_logvar_bias_init: 0.0,
            decoder_logvar_bias_init: 0.0,
            input_center: 0.5,
            input_scale: 2.0,
            init_gain: 1.0,
        }
    }
}

impl VaeModel {
    pub fn from_config(cfg: &ModelConfig, rng: &mut Prng) -> Result<Self> {
        if cfg.latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be >= 1".into()));
        }
        let mut enc_cfg = MlpConfig::new(2, &cfg.hidden, cfg.latent_dim);
        enc_cfg.activation = cfg.activation;
        enc_cfg.logvar_bias_init = cfg.encoder_logvar_bias_init;
        enc_cfg.input_center = cfg.input_center;
        enc_cfg.input_scale = cfg.input_scale;
        enc_cfg.init_gain = cfg.init_gain;
        let mut dec_cfg = MlpConfig::new(cfg.latent_dim, &cfg.hidden, 2);
        dec_cfg.activation = cfg.activation;
        dec_cfg.logvar_bias_init = cfg.decoder_logvar_bias_init;
        dec_cfg.init_gain = cfg.init_gain;
        Ok(VaeModel {
            encoder: Mlp::init(enc_cfg, rng)?,
            decoder: Mlp::init(dec_cfg, rng)?,
            latent_dim: cfg.latent_dim,
        })
    }

    pub fn init(
        latent_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut Prng,
    ) -> Result<Self> {
        VaeModel::from_config(
            &ModelConfig {
                latent_dim,
                hidden: hidden.to_vec(),
                activation,
                ..ModelConfig::default()
            },
            rng,
        )
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.params();
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.encoder.named_params("encoder");
        out.extend(self.decoder.named_params("decoder"));
        out
    }

    pub fn register(&self, graph: &mut Graph) -> Result<VaeNodeIds> {
        Ok(VaeNodeIds {
            encoder: self.encoder.register(graph)?,
            decoder: self.decoder.register(graph)?,
        })
    }

    /// Rebuilds the id structure from a flat id list in `params_mut` order
    /// (used by the finite-difference harness, which registers the
    /// parameters itself).
    pub fn node_ids_from_flat(&self, flat: &[NodeId]) -> Result<VaeNodeIds> {
        let expect = self.params().len();
        if flat.len() != expect {
            return Err(Error::LengthMismatch {
                op: "node_ids_from_flat",
                lhs: flat.len(),
                rhs: expect,
            });
        }
        let mut it = flat.iter().copied();
        let mut take_mlp = |mlp: &Mlp| -> MlpNodeIds {
            let trunk = (0..mlp.trunk.len())
                .map(|_| (it.next().unwrap(), it.next().unwrap()))
                .collect();
            MlpNodeIds {
                trunk,
                mean_head: (it.next().unwrap(), it.next().unwrap()),
                logvar_head: (it.next().unwrap(), it.next().unwrap()),
            }
        };
        let encoder = take_mlp(&self.encoder);
        let decoder = take_mlp(&self.decoder);
        Ok(VaeNodeIds { encoder, decoder })
    }

    /// Gradient-free batch encoding. Errors on non-finite outputs, naming
    /// the offending example.
    pub fn encode(&self, xs: &[[f64; 2]]) -> Result<Vec<DiagGaussian>> {
        if xs.is_empty() {
            return Err(Error::EmptyInput { op: "encode" });
        }
        let mut scratch = ForwardScratch::new();
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let d = self.encoder.forward_one(x, &mut scratch);
                if d.mean.iter().chain(&d.log_variance).any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteExample { example_index: i });
                }
                Ok(d)
            })
            .collect()
    }

    /// Gradient-free batch decoding.
    pub fn decode(&self, zs: &[Vec<f64>]) -> Result<Vec<DiagGaussian>> {
        if zs.is_empty() {
            return Err(Error::EmptyInput { op: "decode" });
        }
        let mut scratch = ForwardScratch::new();
        zs.iter()
            .enumerate()
            .map(|(i, z)| {
                if z.len() != self.latent_dim {
                    return Err(Error::LengthMismatch {
                        op: "decode",
                        lhs: z.len(),
                        rhs: self.latent_dim,
                    });
                }
                let d = self.decoder.forward_one(z, &mut scratch);
                if d.mean.iter().chain(&d.log_variance).any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteExample { example_index: i });
                }
                Ok(d)
            })
            .collect()
    }
}

/// Per-example batch means of the two loss terms, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction_nats: f64,
    pub regularization_nats: f64,
    pub total_nats: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Elbo,
    Iwae { k: usize },
    Mse,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Elbo => "elbo",
            Objective::Iwae { .. } => "iwae",
            Objective::Mse => "mse",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elbo" => Ok(Objective::Elbo),
            "mse" => Ok(Objective::Mse),
            "iwae" => Ok(Objective::Iwae { k: 10 }),
            other => match other.strip_prefix("iwae:") {
                Some(k) => Ok(Objective::Iwae {
                    k: k.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad iwae sample count {k:?}"))
                    })?,
                }),
                None => Err(Error::InvalidParameter(format!(
                    "unknown objective {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// History record cadence in iterations.
    pub checkpoint_every: usize,
    /// Cosine learning-rate decay floor as a fraction of the base rate:
    /// lr(t) = lr·(f + (1−f)·½(1+cos(πt/T))). 1.0 keeps the rate constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Elbo,
            iterations: 60_000,
            batch_size: 200,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 200,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidParameter(
                "final_lr_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidParameter(
                "checkpoint_every must be >= 1".into(),
            ));
        }
        if let Objective::Iwae { k } = self.objective {
            if k == 0 {
                return Err(Error::InvalidParameter("iwae requires k >= 1".into()));
            }
        }
        Ok(())
    }
}

/// One loss-history row. For the `mse` objective the reconstruction column
/// holds the raw mean-squared error rather than nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub regularization: f64,
}

fn batch_tensor(xs: &[[f64; 2]]) -> Result<Tensor> {
    Tensor::matrix(xs.len(), 2, xs.iter().flatten().copied().collect())
}

pub struct ElboNodes {
    pub loss: NodeId,
    pub recon: NodeId,
    pub reg: NodeId,
}

/// Differentiable negative-ELBO graph with caller-supplied reparameterization
/// noise `u` (`batch × latent_dim`, row-major).
pub fn elbo_graph_with_noise(
    graph: &mut Graph,
    model: &VaeModel,
    ids: &VaeNodeIds,
    xs: &[[f64; 2]],
    u: &[f64],
) -> Result<ElboNodes> {
    let m = xs.len();
    let d = model.latent_dim;
    let x = graph.constant(batch_tensor(xs)?)?;
    let (mu, lv) = model.encoder.graph_forward(graph, &ids.encoder, x)?;
    let u = graph.constant(Tensor::matrix(m, d, u.to_vec())?)?;
    let z = reparameterize_nodes(graph, mu, lv, u)?;
    let (xm, xlv) = model.decoder.graph_forward(graph, &ids.decoder, z)?;

    let recon_cells = gaussian_nll_cells(graph, x, xm, xlv)?;
    let recon = graph.sum(recon_cells)?;
    let recon = graph.scale(recon, 1.0 / m as f64)?;

    let reg_cells = kl_cells(graph, mu, lv)?;
    let reg = graph.sum(reg_cells)?;
    let reg = graph.scale(reg, 0.5 / m as f64)?;

    let loss = graph.add(recon, reg)?;
    Ok(ElboNodes { loss, recon, reg })
}

/// `z = μ + exp(lv/2) ⊙ u` as graph nodes.
fn reparameterize_nodes(graph: &mut Graph, mu: NodeId, lv: NodeId, u: NodeId) -> Result<NodeId> {
    let half_lv = graph.scale(lv, 0.5)?;
    let sigma = graph.exp(half_lv)?;
    let noise = graph.mul(sigma, u)?;
    graph.add(mu, noise)
}

/// Per-cell negative Gaussian log-density `½ln2π + ½lv + (x-μ)²/(2σ²)`.
fn gaussian_nll_cells(graph: &mut Graph, x: NodeId, mean: NodeId, lv: NodeId) -> Result<NodeId> {
    let diff = graph.sub(x, mean)?;
    let sq = graph.square(diff)?;
    let neg_lv = graph.neg(lv)?;
    let inv_var = graph.exp(neg_lv)?;
    let quad = graph.mul(sq, inv_var)?;
    let half_quad = graph.scale(quad, 0.5)?;
    let half_lv = graph.scale(lv, 0.5)?;
    let partial = graph.add(half_lv, half_quad)?;
    graph.add_scalar(partial, 0.5 * LN_2PI)
}

/// Per-cell `μ² + σ² − lv − 1` (KL to the standard normal is half the sum).
fn kl_cells(graph: &mut Graph, mu: NodeId, lv: NodeId) -> Result<NodeId> {
    let mu2 = graph.square(mu)?;
    let var = graph.exp(lv)?;
    let a = graph.add(mu2, var)?;
    let b = graph.add_scalar(lv, 1.0)?;
    graph.sub(a, b)
}

pub struct IwaeNodes {
    pub loss: NodeId,
    /// Mean reconstruction term over all K samples, for history rows.
    pub recon_mean: NodeId,
    pub encoder_mean: NodeId,
    pub encoder_logvar: NodeId,
}

/// Differentiable K-sample importance-weighted objective with caller-supplied
/// noise of length `batch × k × latent_dim`, example-major: the noise for
/// example `i`, sample `s` starts at `(i·k + s)·latent_dim`.
///
/// All K samples are decoded in one batched pass: the encoder outputs are
/// row-tiled to `[m·k, d]`, so decoder matmuls see the full `m·k` batch.
pub fn iwae_graph_with_noise(
    graph: &mut Graph,
    model: &VaeModel,
    ids: &VaeNodeIds,
    xs: &[[f64; 2]],
    k: usize,
    noise: &[f64],
) -> Result<IwaeNodes> {
    let m = xs.len();
    let d = model.latent_dim;
    if noise.len() != m * k * d {
        return Err(Error::LengthMismatch {
            op: "iwae_graph_with_noise",
            lhs: noise.len(),
            rhs: m * k * d,
        });
    }
    let x = graph.constant(batch_tensor(xs)?)?;
    let (mu, lv) = model.encoder.graph_forward(graph, &ids.encoder, x)?;
    let mu_t = graph.repeat_rows_interleave(mu, k)?;
    let lv_t = graph.repeat_rows_interleave(lv, k)?;
    let x_t = graph.repeat_rows_interleave(x, k)?;

    let u = graph.constant(Tensor::matrix(m * k, d, noise.to_vec())?)?;
    let z = reparameterize_nodes(graph, mu_t, lv_t, u)?;
    let (xm, xlv) = model.decoder.graph_forward(graph, &ids.decoder, z)?;

    // log p(x|z): negate the NLL cells and sum per row
    let nll_cells = gaussian_nll_cells(graph, x_t, xm, xlv)?;
    let lpx_cells = graph.neg(nll_cells)?;
    let lpx = graph.sum_rows(lpx_cells)?;

    // log p(z) under the standard normal prior
    let z2 = graph.square(z)?;
    let half_z2 = graph.scale(z2, 0.5)?;
    let pz_cells = graph.add_scalar(half_z2, 0.5 * LN_2PI)?;
    let neg_pz = graph.neg(pz_cells)?;
    let lpz = graph.sum_rows(neg_pz)?;

    // log q(z|x)
    let q_cells = gaussian_nll_cells(graph, z, mu_t, lv_t)?;
    let lq_cells = graph.neg(q_cells)?;
    let lq = graph.sum_rows(lq_cells)?;

    let joint = graph.add(lpx, lpz)?;
    let w = graph.sub(joint, lq)?; // [m·k, 1]
    let w_rows = graph.reshape(w, m, k)?;
    let lme = graph.log_mean_exp_rows(w_rows)?;
    let neg = graph.neg(lme)?;
    let total = graph.sum(neg)?;
    let loss = graph.scale(total, 1.0 / m as f64)?;

    let recon_sum = graph.sum(nll_cells)?;
    let recon_mean = graph.scale(recon_sum, 1.0 / (m * k) as f64)?;
    Ok(IwaeNodes {
        loss,
        recon_mean,
        encoder_mean: mu,
        encoder_logvar: lv,
    })
}

pub struct MseNodes {
    pub loss: NodeId,
    pub mse: NodeId,
    pub reg: NodeId,
}

/// The mistaken objective: per-coordinate mean squared error of the decoder
/// mean plus the regularizer with weight 1. The decoder log-variance head is
/// ignored.
pub fn mse_graph_with_noise(
    graph: &mut Graph,
    model: &VaeModel,
    ids: &VaeNodeIds,
    xs: &[[f64; 2]],
    u: &[f64],
) -> Result<MseNodes> {
    let m = xs.len();
    let d = model.latent_dim;
    let x = graph.constant(batch_tensor(xs)?)?;
    let (mu, lv) = model.encoder.graph_forward(graph, &ids.encoder, x)?;
    let u = graph.constant(Tensor::matrix(m, d, u.to_vec())?)?;
    let z = reparameterize_nodes(graph, mu, lv, u)?;
    let (xm, _xlv) = model.decoder.graph_forward(graph, &ids.decoder, z)?;

    let diff = graph.sub(x, xm)?;
    let sq = graph.square(diff)?;
    let mse_sum = graph.sum(sq)?;
    let mse = graph.scale(mse_sum, 1.0 / (m as f64 * 2.0))?;

    let reg_cells = kl_cells(graph, mu, lv)?;
    let reg = graph.sum(reg_cells)?;
    let reg = graph.scale(reg, 0.5 / m as f64)?;

    let loss = graph.add(mse, reg)?;
    Ok(MseNodes { loss, mse, reg })
}

fn draw_noise(rng: &mut Prng, m: usize, d: usize) -> Vec<f64> {
    let mut u = vec![0.0; m * d];
    rng.fill_normal(&mut u);
    u
}

/// Attributes a non-finite batched loss to a specific example by replaying
/// the batch through the gradient-free path. `noise` is example-major with
/// `k` samples per example.
fn locate_bad_example(model: &VaeModel, xs: &[[f64; 2]], k: usize, noise: &[f64]) -> Option<usize> {
    let d = model.latent_dim;
    let gaussians = model.encode(xs).ok()?;
    for (i, (x, q)) in xs.iter().zip(&gaussians).enumerate() {
        for s in 0..k {
            let u = &noise[(i * k + s) * d..(i * k + s + 1) * d];
            let Ok(z) = reparameterize(q, u) else {
                return Some(i);
            };
            let Ok(p) = model.decode(std::slice::from_ref(&z)) else {
                return Some(i);
            };
            let Ok(lpx) = diag_gaussian_log_density(x, &p[0]) else {
                return Some(i);
            };
            let kl = kl_diag_to_standard(q);
            if !lpx.is_finite() || !kl.is_finite() {
                return Some(i);
            }
        }
    }
    None
}

fn map_non_finite(err: Error, model: &VaeModel, xs: &[[f64; 2]], k: usize, noise: &[f64]) -> Error {
    match err {
        Error::NonFinite { .. } => match locate_bad_example(model, xs, k, noise) {
            Some(i) => Error::NonFiniteExample { example_index: i },
            None => err,
        },
        other => other,
    }
}

/// Single-sample negative ELBO of a batch: reconstruction via one
/// reparameterized draw per example, regularization in closed form.
pub fn negative_elbo(model: &VaeModel, xs: &[[f64; 2]], rng: &mut Prng) -> Result<LossBreakdown> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { op: "negative_elbo" });
    }
    let u = draw_noise(rng, xs.len(), model.latent_dim);
    let mut graph = Graph::new();
    let ids = model.register(&mut graph)?;
    let nodes = elbo_graph_with_noise(&mut graph, model, &ids, xs, &u)
        .map_err(|e| map_non_finite(e, model, xs, 1, &u))?;
    Ok(LossBreakdown {
        reconstruction_nats: graph.value(nodes.recon).item(),
        regularization_nats: graph.value(nodes.reg).item(),
        total_nats: graph.value(nodes.loss).item(),
    })
}

/// K-sample importance-weighted objective of a batch, in nats.
pub fn iwae_objective(model: &VaeModel, xs: &[[f64; 2]], rng: &mut Prng, k: usize) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { op: "iwae_objective" });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("iwae requires k >= 1".into()));
    }
    let noise = draw_noise(rng, xs.len() * k, model.latent_dim);
    let mut graph = Graph::new();
    let ids = model.register(&mut graph)?;
    let nodes = iwae_graph_with_noise(&mut graph, model, &ids, xs, k, &noise)
        .map_err(|e| map_non_finite(e, model, xs, k, &noise))?;
    Ok(graph.value(nodes.loss).item())
}

/// The mistaken MSE objective of a batch: per-coordinate MSE plus the
/// regularizer.
pub fn mse_objective(model: &VaeModel, xs: &[[f64; 2]], rng: &mut Prng) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { op: "mse_objective" });
    }
    let u = draw_noise(rng, xs.len(), model.latent_dim);
    let mut graph = Graph::new();
    let ids = model.register(&mut graph)?;
    let nodes = mse_graph_with_noise(&mut graph, model, &ids, xs, &u)
        .map_err(|e| map_non_finite(e, model, xs, 1, &u))?;
    Ok(graph.value(nodes.loss).item())
}

/// Mean closed-form KL of encoder outputs held in graph nodes.
fn mean_kl_from_nodes(graph: &Graph, mu: NodeId, lv: NodeId) -> f64 {
    let mu_t = graph.value(mu);
    let lv_t = graph.value(lv);
    let m = mu_t.rows();
    let mut acc = 0.0;
    for (mi, lvi) in mu_t.data().iter().zip(lv_t.data()) {
        acc += 0.5 * (mi * mi + lvi.exp() - 1.0 - lvi);
    }
    acc / m as f64
}

/// Runs the configured objective for `cfg.iterations` Adam steps, recording
/// a history row every `cfg.checkpoint_every` iterations. Deterministic
/// given the generator. Aborts if the loss goes non-finite or more than ten
/// consecutive steps are skipped for non-finite gradients.
pub fn train(
    model: &mut VaeModel,
    data: &DatasetSpec,
    cfg: &TrainConfig,
    rng: &mut Prng,
) -> Result<Vec<TrainRecord>> {
    cfg.validate()?;
    let mut adam = {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        AdamState::new(cfg.adam, &sizes)
    };
    let mut history = Vec::new();
    let mut last_checkpoint = 0;
    let mut consecutive_skips = 0;

    for iteration in 0..cfg.iterations {
        if cfg.final_lr_fraction < 1.0 {
            let progress = iteration as f64 / cfg.iterations as f64;
            let shape = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            let factor = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * shape;
            adam.set_learning_rate(cfg.adam.learning_rate * factor);
        }
        let batch = data.sample_batch(rng, cfg.batch_size);
        let mut graph = Graph::new();
        let ids = model.register(&mut graph)?;

        let diverged = |_e: Error| Error::TrainingDiverged {
            iteration,
            last_checkpoint,
        };

        let (loss_node, record) = match cfg.objective {
            Objective::Elbo => {
                let u = draw_noise(rng, batch.len(), model.latent_dim);
                let nodes =
                    elbo_graph_with_noise(&mut graph, model, &ids, &batch, &u).map_err(diverged)?;
                let rec = TrainRecord {
                    iteration,
                    total: graph.value(nodes.loss).item(),
                    reconstruction: graph.value(nodes.recon).item(),
                    regularization: graph.value(nodes.reg).item(),
                };
                (nodes.loss, rec)
            }
            Objective::Iwae { k } => {
                let noise = draw_noise(rng, batch.len() * k, model.latent_dim);
                let nodes = iwae_graph_with_noise(&mut graph, model, &ids, &batch, k, &noise)
                    .map_err(diverged)?;
                let rec = TrainRecord {
                    iteration,
                    total: graph.value(nodes.loss).item(),
                    reconstruction: graph.value(nodes.recon_mean).item(),
                    regularization: mean_kl_from_nodes(
                        &graph,
                        nodes.encoder_mean,
                        nodes.encoder_logvar,
                    ),
                };
                (nodes.loss, rec)
            }
            Objective::Mse => {
                let u = draw_noise(rng, batch.len(), model.latent_dim);
                let nodes =
                    mse_graph_with_noise(&mut graph, model, &ids, &batch, &u).map_err(diverged)?;
                let rec = TrainRecord {
                    iteration,
                    total: graph.value(nodes.loss).item(),
                    reconstruction: graph.value(nodes.mse).item(),
                    regularization: graph.value(nodes.reg).item(),
                };
                (nodes.loss, rec)
            }
        };

        if !record.total.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration,
                last_checkpoint,
            });
        }

        let grads = graph.backward(loss_node)?;
        let grad_tensors: Vec<Tensor> = grads.into_tensors();
        match adam.update(&mut model.params_mut(), &grad_tensors)? {
            AdamOutcome::Applied => consecutive_skips = 0,
            AdamOutcome::SkippedNonFinite { .. } => {
                consecutive_skips += 1;
                if consecutive_skips > 10 {
                    return Err(Error::TrainingDiverged {
                        iteration,
                        last_checkpoint,
                    });
                }
            }
        }

        if iteration % cfg.checkpoint_every == 0 || iteration + 1 == cfg.iterations {
            history.push(record);
            last_checkpoint = iteration;
        }
    }
    Ok(history)
}
