use std::time::Instant;
use vaelab::datasets::{DatasetKind, DatasetSpec};
use vaelab::distributions::Prng;
use vaelab::evaluation::evaluation_report;
use vaelab::vae::{train, Activation, Objective, TrainConfig, VaeModel};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hidden: Vec<usize> = args
        .get(1)
        .map(|s| s.split(',').map(|w| w.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![64, 64]);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let objective = match args.get(3).map(String::as_str) {
        Some("iwae") => Objective::Iwae { k: 10 },
        _ => Objective::Elbo,
    };
    let iters: usize = args
        .get(4)
        .map(|s| s.parse().unwrap())
        .unwrap_or(match objective {
            Objective::Iwae { .. } => 30_000,
            _ => 60_000,
        });

    println!("hidden={hidden:?} lr={lr} objective={} iters={iters}", objective.name());
    for kind in DatasetKind::all() {
        let data = DatasetSpec::from_kind(kind);
        let mut model =
            VaeModel::init(2, &hidden, Activation::Softplus, &mut Prng::new(10)).unwrap();
        let cfg = TrainConfig {
            objective,
            iterations: iters,
            batch_size: 200,
            adam: vaelab::autodiff::AdamConfig {
                learning_rate: lr,
                ..Default::default()
            },
            seed: 11,
            checkpoint_every: 500,
            final_lr_fraction: 1.0,
        };
        let t0 = Instant::now();
        let hist = train(&mut model, &data, &cfg, &mut Prng::new(11)).unwrap();
        let train_min = t0.elapsed().as_secs_f64() / 60.0;
        let t1 = Instant::now();
        let report = evaluation_report(&model, &data, 10_000, 250, &mut Prng::new(12)).unwrap();
        let eval_s = t1.elapsed().as_secs_f64();
        println!(
            "{:16} H={:7.3}  -ELBO={:7.3}±{:.3}  NLL={:7.3}±{:.3}  (train {train_min:.1} min, eval {eval_s:.0} s, final loss {:.3} nats)",
            kind.name(),
            report.entropy_bits,
            report.neg_elbo_bits,
            report.neg_elbo_stderr_bits,
            report.nll_bits,
            report.nll_stderr_bits,
            hist.last().unwrap().total,
        );
    }
}
