use std::time::Instant;
use vaelab::autodiff::Graph;
use vaelab::datasets::DatasetSpec;
use vaelab::distributions::Prng;
use vaelab::vae::{Activation, VaeModel};

fn main() {
    let data = DatasetSpec::eight_gaussians();
    let model = VaeModel::init(2, &[64, 64], Activation::Softplus, &mut Prng::new(1)).unwrap();
    let mut rng = Prng::new(2);
    let iters = 300;

    // 1. sampling only
    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = data.sample_batch(&mut rng, 200);
    }
    println!("sample_batch: {:.2} ms/iter", t0.elapsed().as_secs_f64() / iters as f64 * 1e3);

    // 2. register only
    let t0 = Instant::now();
    for _ in 0..iters {
        let mut g = Graph::new();
        let _ = model.register(&mut g).unwrap();
    }
    println!("register:     {:.2} ms/iter", t0.elapsed().as_secs_f64() / iters as f64 * 1e3);

    // 3. full forward (via public negative_elbo)
    let batch = data.sample_batch(&mut rng, 200);
    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = vaelab::vae::negative_elbo(&model, &batch, &mut rng).unwrap();
    }
    println!("fwd only:     {:.2} ms/iter", t0.elapsed().as_secs_f64() / iters as f64 * 1e3);

    // 4. transcendental cost estimate
    let xs: Vec<f64> = (0..12800).map(|i| (i % 100) as f64 * 0.01 - 0.5).collect();
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..1000 {
        for x in &xs {
            acc += x.exp().ln_1p();
        }
    }
    println!("softplus 12.8k elems: {:.3} ms ({} total, acc={acc:.1})", t0.elapsed().as_secs_f64(), 12800*1000);
}
