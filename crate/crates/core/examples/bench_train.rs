use std::time::Instant;
use vaelab::datasets::DatasetSpec;
use vaelab::distributions::Prng;
use vaelab::vae::{train, Activation, Objective, TrainConfig, VaeModel};

fn main() {
    let data = DatasetSpec::eight_gaussians();
    for hidden in [vec![64, 64], vec![128, 128], vec![128, 128, 128], vec![256, 256, 256, 256]] {
        for (obj, iters) in [(Objective::Elbo, 300usize), (Objective::Iwae { k: 10 }, 100)] {
            let mut model =
                VaeModel::init(2, &hidden, Activation::Softplus, &mut Prng::new(1)).unwrap();
            let cfg = TrainConfig {
                objective: obj,
                iterations: iters,
                batch_size: 200,
                checkpoint_every: 1000,
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            train(&mut model, &data, &cfg, &mut Prng::new(2)).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let per_iter = dt / iters as f64 * 1000.0;
            let full = per_iter / 1000.0 * if matches!(obj, Objective::Elbo) { 60000.0 } else { 30000.0 } / 60.0;
            println!(
                "hidden {hidden:?} {:6}: {per_iter:7.2} ms/iter -> full run {full:6.1} min",
                obj.name()
            );
        }
    }
}
