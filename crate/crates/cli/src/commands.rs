//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vaelab::analysis;
use vaelab::autodiff::AdamConfig;
use vaelab::datasets::{DatasetKind, DatasetSpec};
use vaelab::distributions::Prng;
use vaelab::evaluation::{
    density_grid, evaluation_report, ground_truth_grid, importance_nll,
    latent_correspondence_map, EvalReport,
};
use vaelab::vae::{
    load_checkpoint, save_checkpoint, train, Activation, ModelConfig, Objective, TrainConfig,
    TrainRecord, VaeModel,
};

use crate::error::{CliError, ErrorKind};
use crate::heatmap::{render_heatmap, write_ppm};
use crate::manifest::{load_config_value, RunManifest};
use crate::table::{flag, int, num, text, write_table, Cell};
use crate::{CommonArgs, TrainFlags};

// Architecture and optimization defaults shared by train and
// reproduce-tables; established by the calibration runs recorded in the
// repository README.
pub const DEFAULT_HIDDEN: &[usize] = &[128, 128];
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_ENC_LOGVAR_BIAS: f64 = -2.0;
pub const DEFAULT_DEC_LOGVAR_BIAS: f64 = -4.0;
pub const DEFAULT_INPUT_CENTER: f64 = 0.5;
pub const DEFAULT_INPUT_SCALE: f64 = 2.0;
pub const DEFAULT_INIT_GAIN: f64 = 2.449;
pub const DEFAULT_FINAL_LR_FRACTION: f64 = 0.02;
pub const DEFAULT_SEED: u64 = 7;

fn parse_hidden(s: &str) -> Result<Vec<usize>, CliError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| CliError::new(ErrorKind::Config, format!("bad hidden width {w:?}")))
        })
        .collect()
}

fn parse_dataset(s: &str) -> Result<DatasetSpec, CliError> {
    let kind: DatasetKind = s
        .parse()
        .map_err(|e: vaelab::Error| CliError::new(ErrorKind::Config, e.to_string()))?;
    Ok(DatasetSpec::from_kind(kind))
}

fn parse_objective(s: &str) -> Result<Objective, CliError> {
    s.parse()
        .map_err(|e: vaelab::Error| CliError::new(ErrorKind::Config, e.to_string()))
}

fn parse_activation(s: &str) -> Result<Activation, CliError> {
    s.parse()
        .map_err(|e: vaelab::Error| CliError::new(ErrorKind::Config, e.to_string()))
}

fn load_model(path: &Path) -> Result<VaeModel, CliError> {
    load_checkpoint(path).map_err(|e| CliError::new(ErrorKind::Checkpoint, e.to_string()))
}

fn resolve_out_dir(common: &CommonArgs, run_name: &str) -> Result<PathBuf, CliError> {
    let dir = match &common.out_dir {
        Some(d) => d.clone(),
        None => match std::env::var_os("VAELAB_OUT") {
            Some(root) => PathBuf::from(root).join(run_name),
            None => PathBuf::from("runs").join(run_name),
        },
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::new(ErrorKind::Io, format!("create {dir:?}: {e}")))?;
    Ok(dir)
}

fn config_json<T: Serialize>(cfg: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::new(ErrorKind::Config, e.to_string()))
}

/// Merges a config file (or replayed manifest) with defaults, then lets
/// explicit flags override individual fields.
fn base_config<T: for<'de> Deserialize<'de> + Default>(
    common: &CommonArgs,
    command: &str,
) -> Result<T, CliError> {
    match &common.config {
        Some(path) => {
            let value = load_config_value(path, command)?;
            serde_json::from_value(value)
                .map_err(|e| CliError::new(ErrorKind::Config, format!("config: {e}")))
        }
        None => Ok(T::default()),
    }
}

fn override_field<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainCfg {
    pub dataset: String,
    pub objective: String,
    pub iters: usize,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: String,
    pub enc_logvar_bias: f64,
    pub dec_logvar_bias: f64,
    pub input_center: f64,
    pub input_scale: f64,
    pub init_gain: f64,
    pub final_lr_fraction: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainCfg {
    fn default() -> Self {
        TrainCfg {
            dataset: "eight_gaussians".into(),
            objective: "elbo".into(),
            iters: 60_000,
            batch: 200,
            seed: DEFAULT_SEED,
            lr: DEFAULT_LR,
            hidden: DEFAULT_HIDDEN.to_vec(),
            latent_dim: 2,
            activation: "softplus".into(),
            enc_logvar_bias: DEFAULT_ENC_LOGVAR_BIAS,
            dec_logvar_bias: DEFAULT_DEC_LOGVAR_BIAS,
            input_center: DEFAULT_INPUT_CENTER,
            input_scale: DEFAULT_INPUT_SCALE,
            init_gain: DEFAULT_INIT_GAIN,
            final_lr_fraction: DEFAULT_FINAL_LR_FRACTION,
            checkpoint_every: 200,
        }
    }
}

impl TrainCfg {
    fn apply_flags(&mut self, flags: &TrainFlags) -> Result<(), CliError> {
        override_field(&mut self.dataset, &flags.dataset);
        override_field(&mut self.objective, &flags.objective);
        override_field(&mut self.iters, &flags.iters);
        override_field(&mut self.batch, &flags.batch);
        override_field(&mut self.seed, &flags.seed);
        override_field(&mut self.lr, &flags.lr);
        if let Some(h) = &flags.hidden {
            self.hidden = parse_hidden(h)?;
        }
        override_field(&mut self.latent_dim, &flags.latent_dim);
        override_field(&mut self.activation, &flags.activation);
        override_field(&mut self.enc_logvar_bias, &flags.enc_logvar_bias);
        override_field(&mut self.dec_logvar_bias, &flags.dec_logvar_bias);
        override_field(&mut self.checkpoint_every, &flags.checkpoint_every);
        Ok(())
    }

    fn model_config(&self) -> Result<ModelConfig, CliError> {
        Ok(ModelConfig {
            latent_dim: self.latent_dim,
            hidden: self.hidden.clone(),
            activation: parse_activation(&self.activation)?,
            encoder_logvar_bias_init: self.enc_logvar_bias,
            decoder_logvar_bias_init: self.dec_logvar_bias,
            input_center: self.input_center,
            input_scale: self.input_scale,
            init_gain: self.init_gain,
        })
    }

    fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            objective: parse_objective(&self.objective)?,
            iterations: self.iters,
            batch_size: self.batch,
            adam: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            final_lr_fraction: self.final_lr_fraction,
        })
    }
}

fn history_rows(history: &[TrainRecord]) -> Vec<Vec<Cell>> {
    history
        .iter()
        .map(|h| {
            vec![
                int(h.iteration as i64),
                num(h.total),
                num(h.reconstruction),
                num(h.regularization),
            ]
        })
        .collect()
}

const HISTORY_HEADER: [&str; 4] = ["iteration", "total", "reconstruction", "regularization"];

fn train_one(cfg: &TrainCfg, data: &DatasetSpec) -> Result<(VaeModel, Vec<TrainRecord>), CliError> {
    let mut model = VaeModel::from_config(&cfg.model_config()?, &mut Prng::new(cfg.seed))
        .map_err(CliError::from)?;
    let tc = cfg.train_config()?;
    let history =
        train(&mut model, data, &tc, &mut Prng::new(cfg.seed)).map_err(CliError::from)?;
    Ok((model, history))
}

pub fn run_train(common: &CommonArgs, flags: &TrainFlags) -> Result<(), CliError> {
    let mut cfg: TrainCfg = base_config(common, "train")?;
    cfg.apply_flags(flags)?;
    let data = parse_dataset(&cfg.dataset)?;
    let out = resolve_out_dir(common, &format!("train-{}-{}", cfg.dataset, cfg.objective))?;

    let (model, history) = train_one(&cfg, &data)?;

    let ckpt = out.join("checkpoint.ckpt");
    save_checkpoint(&model, &ckpt).map_err(CliError::from)?;
    write_table(
        &out.join("loss_history.csv"),
        &HISTORY_HEADER,
        &history_rows(&history),
    )
    .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;

    let mut manifest = RunManifest::new("train", config_json(&cfg)?);
    manifest.record_dataset(&data);
    manifest.artifacts = vec!["checkpoint.ckpt".into(), "loss_history.csv".into()];
    manifest.save(&out)?;
    println!(
        "trained {} ({}) for {} iterations -> {}",
        cfg.dataset,
        cfg.objective,
        cfg.iters,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalCfg {
    pub checkpoint: String,
    pub dataset: String,
    pub n_eval: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg {
            checkpoint: "checkpoint.ckpt".into(),
            dataset: "eight_gaussians".into(),
            n_eval: 10_000,
            k: 250,
            seed: DEFAULT_SEED,
        }
    }
}

const REPORT_HEADER: [&str; 8] = [
    "dataset",
    "entropy_bits",
    "neg_elbo_bits",
    "neg_elbo_stderr_bits",
    "nll_bits",
    "nll_stderr_bits",
    "k",
    "n_eval",
];

fn report_row(r: &EvalReport) -> Vec<Cell> {
    vec![
        text(r.dataset.clone()),
        num(r.entropy_bits),
        num(r.neg_elbo_bits),
        num(r.neg_elbo_stderr_bits),
        num(r.nll_bits),
        num(r.nll_stderr_bits),
        int(r.k as i64),
        int(r.n_eval as i64),
    ]
}

pub fn run_eval(
    common: &CommonArgs,
    checkpoint: Option<PathBuf>,
    dataset: Option<String>,
    n_eval: Option<usize>,
    k: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg: EvalCfg = base_config(common, "eval")?;
    if let Some(c) = checkpoint {
        cfg.checkpoint = c.display().to_string();
    }
    override_field(&mut cfg.dataset, &dataset);
    override_field(&mut cfg.n_eval, &n_eval);
    override_field(&mut cfg.k, &k);
    override_field(&mut cfg.seed, &seed);

    let data = parse_dataset(&cfg.dataset)?;
    let model = load_model(Path::new(&cfg.checkpoint))?;
    let out = resolve_out_dir(common, &format!("eval-{}", cfg.dataset))?;

    let report = evaluation_report(&model, &data, cfg.n_eval, cfg.k, &mut Prng::new(cfg.seed))
        .map_err(CliError::from)?;
    write_table(
        &out.join("eval_report.csv"),
        &REPORT_HEADER,
        &[report_row(&report)],
    )
    .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;

    let mut manifest = RunManifest::new("eval", config_json(&cfg)?);
    manifest.record_dataset(&data);
    manifest.artifacts = vec!["eval_report.csv".into()];
    manifest.save(&out)?;
    println!(
        "{}: H={:.3} -ELBO={:.3} NLL={:.3} (bits) -> {}",
        report.dataset,
        report.entropy_bits,
        report.neg_elbo_bits,
        report.nll_bits,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridCfg {
    pub checkpoint: String,
    pub dataset: String,
    pub resolution: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg {
            checkpoint: "checkpoint.ckpt".into(),
            dataset: "eight_gaussians".into(),
            resolution: 200,
            k: 100,
            seed: DEFAULT_SEED,
        }
    }
}

fn grid_csv_rows(values: &[f64], resolution: usize) -> Vec<Vec<Cell>> {
    values
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let ix = idx % resolution;
            let iy = idx / resolution;
            vec![
                int(ix as i64),
                int(iy as i64),
                num((ix as f64 + 0.5) / resolution as f64),
                num((iy as f64 + 0.5) / resolution as f64),
                if v.is_finite() {
                    num(*v)
                } else {
                    text("-inf")
                },
            ]
        })
        .collect()
}

const GRID_HEADER: [&str; 5] = ["ix", "iy", "x", "y", "log_density_nats"];

fn write_grid_artifacts(
    out: &Path,
    stem: &str,
    values: &[f64],
    resolution: usize,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    write_table(
        &out.join(format!("{stem}.csv")),
        &GRID_HEADER,
        &grid_csv_rows(values, resolution),
    )
    .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    let heat = render_heatmap(values, resolution, resolution);
    write_ppm(&heat.image, &out.join(format!("{stem}.ppm")))
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    manifest.artifacts.push(format!("{stem}.csv"));
    manifest.artifacts.push(format!("{stem}.ppm"));
    manifest.notes.push(format!(
        "{stem}: {} normalization [{:.6}, {:.6}]{}",
        heat.colormap,
        heat.lo,
        heat.hi,
        if heat.degenerate { " (degenerate)" } else { "" }
    ));
    Ok(())
}

pub fn run_grid(
    common: &CommonArgs,
    checkpoint: Option<PathBuf>,
    dataset: Option<String>,
    resolution: Option<usize>,
    k: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg: GridCfg = base_config(common, "grid")?;
    if let Some(c) = checkpoint {
        cfg.checkpoint = c.display().to_string();
    }
    override_field(&mut cfg.dataset, &dataset);
    override_field(&mut cfg.resolution, &resolution);
    override_field(&mut cfg.k, &k);
    override_field(&mut cfg.seed, &seed);

    let data = parse_dataset(&cfg.dataset)?;
    let model = load_model(Path::new(&cfg.checkpoint))?;
    let out = resolve_out_dir(common, &format!("grid-{}", cfg.dataset))?;

    let mut manifest = RunManifest::new("grid", config_json(&cfg)?);
    manifest.record_dataset(&data);

    let grid =
        density_grid(&model, cfg.resolution, cfg.k, cfg.seed).map_err(CliError::from)?;
    write_grid_artifacts(&out, "grid_model", &grid.log_density_nats, cfg.resolution, &mut manifest)?;
    let truth = ground_truth_grid(&data, cfg.resolution);
    write_grid_artifacts(&out, "grid_truth", &truth, cfg.resolution, &mut manifest)?;

    manifest.save(&out)?;
    println!(
        "grid {}x{} (K={}): estimated mass {:.4} -> {}",
        cfg.resolution,
        cfg.resolution,
        cfg.k,
        grid.total_mass(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// latent-map
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentMapCfg {
    pub checkpoint: String,
    pub dataset: String,
    pub points: usize,
    pub seed: u64,
}

impl Default for LatentMapCfg {
    fn default() -> Self {
        LatentMapCfg {
            checkpoint: "checkpoint.ckpt".into(),
            dataset: "eight_gaussians".into(),
            points: 10_000,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn run_latent_map(
    common: &CommonArgs,
    checkpoint: Option<PathBuf>,
    dataset: Option<String>,
    points: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg: LatentMapCfg = base_config(common, "latent-map")?;
    if let Some(c) = checkpoint {
        cfg.checkpoint = c.display().to_string();
    }
    override_field(&mut cfg.dataset, &dataset);
    override_field(&mut cfg.points, &points);
    override_field(&mut cfg.seed, &seed);

    let data = parse_dataset(&cfg.dataset)?;
    let model = load_model(Path::new(&cfg.checkpoint))?;
    let out = resolve_out_dir(common, &format!("latent-map-{}", cfg.dataset))?;

    let map = latent_correspondence_map(&model, &data, cfg.points, &mut Prng::new(cfg.seed))
        .map_err(CliError::from)?;
    write_ppm(&map.input_image, &out.join("latent_input.ppm"))
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    write_ppm(&map.latent_image, &out.join("latent_space.ppm"))
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;

    let mut manifest = RunManifest::new("latent-map", config_json(&cfg)?);
    manifest.record_dataset(&data);
    manifest.artifacts = vec!["latent_input.ppm".into(), "latent_space.ppm".into()];
    manifest
        .notes
        .push(format!("latent bound ±{}", map.latent_bound));
    manifest.save(&out)?;
    println!("latent map over {} points -> {}", cfg.points, out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChecksCfg {
    pub seed: u64,
    pub pitfall: bool,
    pub pitfall_iters: usize,
}

impl Default for ChecksCfg {
    fn default() -> Self {
        ChecksCfg {
            seed: DEFAULT_SEED,
            pitfall: false,
            pitfall_iters: 4_000,
        }
    }
}

const CHECKS_HEADER: [&str; 6] = ["check", "case", "lhs", "rhs", "tolerance", "result"];

fn check_row(check: &str, case: String, lhs: f64, rhs: f64, tol: f64) -> (Vec<Cell>, bool) {
    let pass = (lhs - rhs).abs() <= tol;
    (
        vec![
            text(check),
            text(case),
            num(lhs),
            num(rhs),
            num(tol),
            flag(pass),
        ],
        pass,
    )
}

/// All fast identity checks; returns CSV rows plus the overall verdict.
pub fn identity_check_rows(seed: u64) -> Result<(Vec<Vec<Cell>>, bool), CliError> {
    let mut rows = Vec::new();
    let mut all_pass = true;
    let mut push = |row: (Vec<Cell>, bool)| {
        all_pass &= row.1;
        rows.push(row.0);
    };

    // Channel capacity identity over 1000 random cases: exact algebra, so
    // the tolerance is 1e-9 relative.
    let mut rng = Prng::new(seed);
    for i in 0..1000 {
        let d = 1 + rng.below(64);
        let noise = (rng.next_f64()).max(1e-12).min(1.0);
        let c = analysis::channel_identity(d, noise).map_err(CliError::from)?;
        let tol = 1e-9 * c.capacity_bits.abs().max(1e-300);
        push(check_row(
            "channel-identity",
            format!("case{i}:d={d},N={noise:.6}"),
            c.regularization_bits,
            c.capacity_bits,
            tol,
        ));
    }

    // Flow limit on 20 random invertible affine maps at ε ∈ {0.1, 0.01}:
    // the measured ELBO−NLL gap must match ½ε²·tr(A⁻¹A⁻ᵀ) within
    // 3 Monte-Carlo standard errors, and the two gaps must shrink
    // quadratically in ε.
    let mut rng = Prng::new(seed ^ 0x5f5f);
    for i in 0..20 {
        let n = if i % 2 == 0 { 2 } else { 3 };
        let map = random_affine(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut gaps = [0.0; 2];
        for (j, eps) in [0.1, 0.01].into_iter().enumerate() {
            let g = analysis::flow_limit_gap(&map, &x, eps, &mut rng, 100_000)
                .map_err(CliError::from)?;
            gaps[j] = g.gap_nats;
            push(check_row(
                "flow-limit",
                format!("map{i}:n={n},eps={eps}"),
                g.gap_nats,
                g.expected_gap_nats,
                3.0 * g.stderr_nats + 1e-9,
            ));
        }
        push(check_row(
            "flow-limit-ratio",
            format!("map{i}:n={n}"),
            gaps[1] / gaps[0],
            0.01,
            0.002,
        ));
    }

    // Quantized reconstruction cost.
    let uniform = analysis::quantized_uniform_bits(1.0 / 256.0).map_err(CliError::from)?;
    push(check_row(
        "quantized-uniform",
        "bin=1/256".into(),
        uniform,
        8.0,
        0.0,
    ));
    let p = vaelab::distributions::DiagGaussian::standard(1);
    let bin = 1.0 / 256.0;
    let q = analysis::quantized_recon_bits(&p, &[-bin / 2.0], bin).map_err(CliError::from)?;
    let density = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    push(check_row(
        "quantized-centered-bin",
        "sigma=1,bin=1/256".into(),
        q.bits,
        -(density * bin).log2(),
        1e-4,
    ));
    // Small-bin limit: cost approaches density + log bin volume, error
    // linear in the bin width.
    let p = vaelab::distributions::DiagGaussian::new(vec![0.3], vec![-0.7])
        .map_err(CliError::from)?;
    let x = [0.55];
    let limit_err = |b: f64| -> Result<f64, CliError> {
        let got = analysis::quantized_recon_bits(&p, &x, b)
            .map_err(CliError::from)?
            .bits;
        let want = (-vaelab::distributions::diag_gaussian_log_density(&x, &p)
            .map_err(CliError::from)?
            - b.ln())
            / std::f64::consts::LN_2;
        Ok((got - want).abs())
    };
    let (e3, e4) = (limit_err(1e-3)?, limit_err(1e-4)?);
    push(check_row(
        "quantized-bin-limit",
        "error ratio bin 1e-3 / 1e-4".into(),
        e3 / e4,
        10.0,
        1.5,
    ));

    // Optimal-variance reconstruction spot values.
    let at_opt = analysis::optimal_recon_nats_for_mse(
        1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E),
    )
    .map_err(CliError::from)?;
    push(check_row(
        "mse-spot",
        "MSE=1/(2*pi*e) -> 0 nats".into(),
        at_opt,
        0.0,
        1e-9,
    ));
    let v = analysis::optimal_recon_nats_for_mse(0.01).map_err(CliError::from)?;
    let want = 0.5 * ((2.0 * std::f64::consts::PI * 0.01).ln() + 1.0);
    push(check_row(
        "mse-spot",
        "MSE=0.01 nats value".into(),
        v,
        want,
        1e-9,
    ));
    push(check_row(
        "mse-spot",
        "MSE=0.01 bits/dim at 8-bit accuracy".into(),
        v / std::f64::consts::LN_2 + 8.0,
        6.7251673,
        1e-5,
    ));

    // Full-covariance KL reduces to the diagonal closed form.
    let mut rng = Prng::new(seed ^ 0xabcd);
    for i in 0..100 {
        let n = 1 + rng.below(6);
        let mean: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let lv: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mut cov = vec![0.0; n * n];
        for j in 0..n {
            cov[j * n + j] = lv[j].exp();
        }
        let full = analysis::FullCovGaussian::new(mean.clone(), cov).map_err(CliError::from)?;
        let a = analysis::kl_fullcov_to_standard(&full).map_err(CliError::from)?;
        let diag = vaelab::distributions::DiagGaussian::new(mean, lv).map_err(CliError::from)?;
        let b = vaelab::distributions::kl_diag_to_standard(&diag);
        push(check_row(
            "fullcov-diag-reduction",
            format!("case{i}:n={n}"),
            a,
            b,
            1e-12,
        ));
    }

    Ok((rows, all_pass))
}

fn random_affine(rng: &mut Prng, n: usize) -> analysis::AffineMap {
    loop {
        let m: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect();
        if let Ok(map) = analysis::AffineMap::new(m, b) {
            if map.det().abs() > 0.3 {
                return map;
            }
        }
    }
}

/// Rows for the MSE-pitfall training comparison.
pub fn pitfall_rows(seed: u64, iters: usize) -> Result<(Vec<Vec<Cell>>, bool), CliError> {
    let cfg = TrainConfig {
        objective: Objective::Mse,
        iterations: iters,
        batch_size: 200,
        adam: AdamConfig {
            learning_rate: DEFAULT_LR,
            ..AdamConfig::default()
        },
        seed,
        checkpoint_every: (iters / 4).max(1),
        final_lr_fraction: 1.0,
    };
    let report = analysis::mse_pitfall_experiment(
        &DatasetSpec::eight_gaussians(),
        DEFAULT_HIDDEN,
        &cfg,
    )
    .map_err(CliError::from)?;

    let mut rows = Vec::new();
    let mut all_pass = true;

    // Over-regularization direction: the MSE-trained model's final
    // regularization loss sits strictly below the ELBO-trained model's.
    let pass = report.mse_arm.final_regularization_nats
        < report.elbo_arm.final_regularization_nats;
    all_pass &= pass;
    rows.push(vec![
        text("mse-pitfall-overregularization"),
        text(format!("iters={iters}")),
        num(report.mse_arm.final_regularization_nats),
        num(report.elbo_arm.final_regularization_nats),
        text("lhs < rhs"),
        flag(pass),
    ]);

    // Rescaling the inputs by 0.1 shrinks the trained MSE: the data scale
    // acts as a hidden regularization weight.
    let base = report.scaled_mse_arms[0].final_mse;
    let scaled = report.scaled_mse_arms[1].final_mse;
    let pass = scaled < base;
    all_pass &= pass;
    rows.push(vec![
        text("mse-pitfall-scale"),
        text(format!(
            "final MSE at input scale 0.1 vs 1.0 (reg {:.4} vs {:.4} nats)",
            report.scaled_mse_arms[1].final_regularization_nats,
            report.scaled_mse_arms[0].final_regularization_nats
        )),
        num(scaled),
        num(base),
        text("lhs < rhs"),
        flag(pass),
    ]);

    // Informational: nats-equivalent of the MSE arm's reconstruction error.
    rows.push(vec![
        text("mse-pitfall-eq-nats"),
        text(format!(
            "optimal-variance recon nats at MSE={:.6}; elbo model NLL {:.3} bits",
            report.mse_arm.final_mse, report.elbo_model_nll_bits
        )),
        num(report.mse_arm_recon_nats_equivalent),
        num(report.mse_arm_recon_nats_equivalent),
        num(0.0),
        flag(true),
    ]);

    Ok((rows, all_pass))
}

pub fn run_checks(
    common: &CommonArgs,
    pitfall: bool,
    pitfall_iters: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg: ChecksCfg = base_config(common, "checks")?;
    cfg.pitfall |= pitfall;
    override_field(&mut cfg.pitfall_iters, &pitfall_iters);
    override_field(&mut cfg.seed, &seed);
    let out = resolve_out_dir(common, "checks")?;

    let (mut rows, mut all_pass) = identity_check_rows(cfg.seed)?;
    if cfg.pitfall {
        let (extra, ok) = pitfall_rows(cfg.seed, cfg.pitfall_iters)?;
        rows.extend(extra);
        all_pass &= ok;
    }

    write_table(&out.join("checks.csv"), &CHECKS_HEADER, &rows)
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    let mut manifest = RunManifest::new("checks", config_json(&cfg)?);
    manifest.artifacts = vec!["checks.csv".into()];
    manifest.save(&out)?;

    println!(
        "{} checks -> {} ({})",
        rows.len(),
        out.display(),
        if all_pass { "all pass" } else { "FAILURES" }
    );
    if all_pass {
        Ok(())
    } else {
        Err(CliError::new(
            ErrorKind::Runtime,
            "one or more checks failed (see checks.csv)".into(),
        ))
    }
}

// ---------------------------------------------------------------------------
// reproduce-tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReproduceCfg {
    pub seed: u64,
    pub iters: usize,
    pub iwae_iters: usize,
    pub batch: usize,
    pub k_train: usize,
    pub n_eval: usize,
    pub k_eval: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: String,
    pub enc_logvar_bias: f64,
    pub dec_logvar_bias: f64,
    pub input_center: f64,
    pub input_scale: f64,
    pub init_gain: f64,
    pub final_lr_fraction: f64,
    pub grid_resolution: usize,
    pub grid_k: usize,
    pub map_points: usize,
}

impl Default for ReproduceCfg {
    fn default() -> Self {
        ReproduceCfg {
            seed: DEFAULT_SEED,
            iters: 60_000,
            iwae_iters: 30_000,
            batch: 200,
            k_train: 10,
            n_eval: 10_000,
            k_eval: 250,
            lr: DEFAULT_LR,
            hidden: DEFAULT_HIDDEN.to_vec(),
            latent_dim: 2,
            activation: "softplus".into(),
            enc_logvar_bias: DEFAULT_ENC_LOGVAR_BIAS,
            dec_logvar_bias: DEFAULT_DEC_LOGVAR_BIAS,
            input_center: DEFAULT_INPUT_CENTER,
            input_scale: DEFAULT_INPUT_SCALE,
            init_gain: DEFAULT_INIT_GAIN,
            final_lr_fraction: DEFAULT_FINAL_LR_FRACTION,
            grid_resolution: 200,
            grid_k: 100,
            map_points: 10_000,
        }
    }
}

const TABLE3_HEADER: [&str; 8] = [
    "dataset",
    "entropy_bits",
    "loss_bits",
    "loss_stderr_bits",
    "nll_bits",
    "nll_stderr_bits",
    "k",
    "n_eval",
];

#[allow(clippy::too_many_arguments)]
pub fn run_reproduce_tables(
    common: &CommonArgs,
    flags: &TrainFlags,
    iwae_iters: Option<usize>,
    k_train: Option<usize>,
    n_eval: Option<usize>,
    k_eval: Option<usize>,
    grid_resolution: Option<usize>,
    grid_k: Option<usize>,
    map_points: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg: ReproduceCfg = base_config(common, "reproduce-tables")?;
    override_field(&mut cfg.seed, &flags.seed);
    override_field(&mut cfg.iters, &flags.iters);
    override_field(&mut cfg.batch, &flags.batch);
    override_field(&mut cfg.lr, &flags.lr);
    if let Some(h) = &flags.hidden {
        cfg.hidden = parse_hidden(h)?;
    }
    override_field(&mut cfg.latent_dim, &flags.latent_dim);
    override_field(&mut cfg.activation, &flags.activation);
    override_field(&mut cfg.enc_logvar_bias, &flags.enc_logvar_bias);
    override_field(&mut cfg.dec_logvar_bias, &flags.dec_logvar_bias);
    override_field(&mut cfg.iwae_iters, &iwae_iters);
    override_field(&mut cfg.k_train, &k_train);
    override_field(&mut cfg.n_eval, &n_eval);
    override_field(&mut cfg.k_eval, &k_eval);
    override_field(&mut cfg.grid_resolution, &grid_resolution);
    override_field(&mut cfg.grid_k, &grid_k);
    override_field(&mut cfg.map_points, &map_points);

    let out = resolve_out_dir(common, "reproduce-tables")?;
    let mut manifest = RunManifest::new("reproduce-tables", config_json(&cfg)?);

    let mut table1 = Vec::new();
    let mut table3 = Vec::new();
    for kind in DatasetKind::all() {
        let data = DatasetSpec::from_kind(kind);
        manifest.record_dataset(&data);

        for objective in ["elbo", format!("iwae:{}", cfg.k_train).as_str()] {
            let tc = TrainCfg {
                dataset: kind.name().into(),
                objective: objective.into(),
                iters: if objective == "elbo" {
                    cfg.iters
                } else {
                    cfg.iwae_iters
                },
                batch: cfg.batch,
                seed: cfg.seed,
                lr: cfg.lr,
                hidden: cfg.hidden.clone(),
                latent_dim: cfg.latent_dim,
                activation: cfg.activation.clone(),
                enc_logvar_bias: cfg.enc_logvar_bias,
                dec_logvar_bias: cfg.dec_logvar_bias,
                input_center: cfg.input_center,
                input_scale: cfg.input_scale,
                init_gain: cfg.init_gain,
                final_lr_fraction: cfg.final_lr_fraction,
                checkpoint_every: 200,
            };
            let (model, history) = train_one(&tc, &data)?;
            let tag = format!("{}-{}", kind.name(), parse_objective(objective)?.name());

            let ckpt_name = format!("{tag}.ckpt");
            save_checkpoint(&model, &out.join(&ckpt_name)).map_err(CliError::from)?;
            manifest.artifacts.push(ckpt_name);
            let hist_name = format!("{tag}-history.csv");
            write_table(&out.join(&hist_name), &HISTORY_HEADER, &history_rows(&history))
                .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
            manifest.artifacts.push(hist_name);

            let report = evaluation_report(
                &model,
                &data,
                cfg.n_eval,
                cfg.k_eval,
                &mut Prng::new(cfg.seed + 1),
            )
            .map_err(CliError::from)?;

            if objective == "elbo" {
                table1.push(report_row(&report));
            } else {
                // The IWAE table's loss column is the K-sample objective
                // measured on the evaluation set.
                let xs = data.sample_batch(&mut Prng::new(cfg.seed + 2), cfg.n_eval);
                let loss = importance_nll(&model, &xs, cfg.k_train, &mut Prng::new(cfg.seed + 3))
                    .map_err(CliError::from)?;
                let ln2 = std::f64::consts::LN_2;
                table3.push(vec![
                    text(kind.name()),
                    num(report.entropy_bits),
                    num(loss.mean_nats / ln2),
                    num(loss.stderr_nats / ln2),
                    num(report.nll_bits),
                    num(report.nll_stderr_bits),
                    int(cfg.k_eval as i64),
                    int(cfg.n_eval as i64),
                ]);
            }

            // Figures: estimated density grid and latent correspondence.
            let grid = density_grid(&model, cfg.grid_resolution, cfg.grid_k, cfg.seed + 4)
                .map_err(CliError::from)?;
            write_grid_artifacts(
                &out,
                &format!("{tag}-grid"),
                &grid.log_density_nats,
                cfg.grid_resolution,
                &mut manifest,
            )?;
            let map = latent_correspondence_map(
                &model,
                &data,
                cfg.map_points,
                &mut Prng::new(cfg.seed + 5),
            )
            .map_err(CliError::from)?;
            for (suffix, image) in [("input", &map.input_image), ("latent", &map.latent_image)] {
                let name = format!("{tag}-map-{suffix}.ppm");
                write_ppm(image, &out.join(&name))
                    .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
                manifest.artifacts.push(name);
            }
        }

        // Ground-truth density figure, once per dataset.
        let truth = ground_truth_grid(&data, cfg.grid_resolution);
        write_grid_artifacts(
            &out,
            &format!("{}-truth-grid", kind.name()),
            &truth,
            cfg.grid_resolution,
            &mut manifest,
        )?;
    }

    write_table(&out.join("table1.csv"), &REPORT_HEADER, &table1)
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    write_table(&out.join("table3.csv"), &TABLE3_HEADER, &table3)
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    manifest.artifacts.push("table1.csv".into());
    manifest.artifacts.push("table3.csv".into());
    manifest.save(&out)?;
    println!("tables and figures -> {}", out.display());
    Ok(())
}
