use vaelab::autodiff::AdamConfig;
use vaelab::datasets::{DatasetKind, DatasetSpec};
use vaelab::distributions::Prng;
use vaelab::vae::{train, Activation, ModelConfig, Objective, TrainConfig, VaeModel};

// args: hidden lr iters enc_lv_bias dec_lv_bias [dataset] [activation]
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hidden: Vec<usize> = args
        .get(1)
        .map(|s| s.split(',').map(|w| w.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![64, 64]);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20000);
    let enc_b: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let dec_b: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let kind: DatasetKind = args
        .get(6)
        .map(|s| s.parse().unwrap())
        .unwrap_or(DatasetKind::EightGaussians);
    let act = match args.get(7).map(String::as_str) {
        Some("tanh") => Activation::Tanh,
        Some("relu") => Activation::Relu,
        _ => Activation::Softplus,
    };
    let data = DatasetSpec::from_kind(kind);
    let gain: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mcfg = ModelConfig {
        latent_dim: 2,
        hidden,
        activation: act,
        encoder_logvar_bias_init: enc_b,
        decoder_logvar_bias_init: dec_b,
        init_gain: gain,
        ..ModelConfig::default()
    };
    let mut model = VaeModel::from_config(&mcfg, &mut Prng::new(10)).unwrap();
    let final_frac: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let cfg = TrainConfig {
        objective: Objective::Elbo,
        iterations: iters,
        batch_size: 200,
        adam: AdamConfig { learning_rate: lr, ..Default::default() },
        seed: 11,
        checkpoint_every: (iters / 10).max(1),
        final_lr_fraction: final_frac,
    };
    let hist = train(&mut model, &data, &cfg, &mut Prng::new(11)).unwrap();
    let ln2 = std::f64::consts::LN_2;
    for h in &hist {
        println!(
            "iter {:6}: total {:7.3} bits (recon {:7.3}, reg {:6.3})",
            h.iteration,
            h.total / ln2,
            h.reconstruction / ln2,
            h.regularization / ln2
        );
    }
    let report =
        vaelab::evaluation::evaluation_report(&model, &data, 4000, 250, &mut Prng::new(12))
            .unwrap();
    println!(
        "EVAL {}: H={:.3} -ELBO={:.3}±{:.3} NLL={:.3}±{:.3}",
        data.name(),
        report.entropy_bits,
        report.neg_elbo_bits,
        report.neg_elbo_stderr_bits,
        report.nll_bits,
        report.nll_stderr_bits
    );
}
