//! Estimator-level properties of the objectives on a fixed model: Jensen
//! ordering against the single-sample bound and monotone tightening in K.

use vaelab::datasets::DatasetSpec;
use vaelab::distributions::{log_mean_exp, Prng};
use vaelab::evaluation::importance_nll;
use vaelab::vae::{negative_elbo, Activation, VaeModel};

fn fixed_model() -> VaeModel {
    // A lightly trained model: enough structure for the weights to vary.
    let mut model =
        VaeModel::init(2, &[16, 16], Activation::Softplus, &mut Prng::new(42)).unwrap();
    let data = DatasetSpec::eight_gaussians();
    let cfg = vaelab::vae::TrainConfig {
        iterations: 300,
        batch_size: 100,
        checkpoint_every: 100,
        ..Default::default()
    };
    vaelab::vae::train(&mut model, &data, &cfg, &mut Prng::new(43)).unwrap();
    model
}

/// Grouped estimates from one 50-weight draw per example: averaging the
/// log-mean-exp over disjoint groups of size k gives an unbiased, paired
/// estimate of E[NLL_k].
fn grouped_nll(weights: &[f64], k: usize) -> f64 {
    let groups = weights.len() / k;
    let mut acc = 0.0;
    for g in 0..groups {
        acc += -log_mean_exp(&weights[g * k..(g + 1) * k]).unwrap();
    }
    acc / groups as f64
}

#[test]
fn nll_estimates_tighten_monotonically_in_k() {
    let model = fixed_model();
    let data = DatasetSpec::eight_gaussians();
    let n = 10_000;
    let xs = data.sample_batch(&mut Prng::new(7), n);

    // One K=50 estimate per example carries the weights for every smaller K
    // via grouping; recover the raw weights by replaying the noise.
    let gaussians = model.encode(&xs).unwrap();
    let mut rng = Prng::new(8);
    let k_max = 50;
    let mut noise = vec![0.0; n * k_max * 2];
    rng.fill_normal(&mut noise);

    let mut means = [0.0; 4]; // K = 1, 5, 10, 50
    let ks = [1usize, 5, 10, 50];
    let mut scratch = vaelab::vae::ForwardScratch::new();
    let mut weights = Vec::with_capacity(k_max);
    for (i, (x, q)) in xs.iter().zip(&gaussians).enumerate() {
        weights.clear();
        for s in 0..k_max {
            let u = &noise[(i * k_max + s) * 2..(i * k_max + s + 1) * 2];
            let z = vaelab::distributions::reparameterize(q, u).unwrap();
            let p = model.decoder.forward_one(&z, &mut scratch);
            let lpx = vaelab::distributions::diag_gaussian_log_density(x, &p).unwrap();
            let lpz = vaelab::distributions::standard_normal_log_density(&z);
            let lq = vaelab::distributions::diag_gaussian_log_density(&z, q).unwrap();
            weights.push(lpx + lpz - lq);
        }
        for (j, k) in ks.iter().enumerate() {
            means[j] += grouped_nll(&weights, *k);
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    println!("paired grouped NLL estimates (nats): {means:?}");
    for j in 1..4 {
        assert!(
            means[j] <= means[j - 1] + 1e-6,
            "K={} mean {} vs K={} mean {}",
            ks[j],
            means[j],
            ks[j - 1],
            means[j - 1]
        );
    }
}

#[test]
fn elbo_upper_bounds_importance_nll() {
    let model = fixed_model();
    let data = DatasetSpec::eight_gaussians();
    let xs = data.sample_batch(&mut Prng::new(17), 2000);
    let elbo = negative_elbo(&model, &xs, &mut Prng::new(18)).unwrap();
    let nll = importance_nll(&model, &xs, 250, &mut Prng::new(19)).unwrap();
    assert!(
        elbo.total_nats >= nll.mean_nats - 3.0 * nll.stderr_nats,
        "-ELBO {} vs NLL {} ± {}",
        elbo.total_nats,
        nll.mean_nats,
        nll.stderr_nats
    );
}

#[test]
fn single_sample_mean_dominates_iwae_value() {
    // Jensen direction on the same weights: -mean(w) >= -log mean exp(w),
    // so the K-sample objective sits below the single-sample average.
    let model = fixed_model();
    let data = DatasetSpec::eight_gaussians();
    let xs = data.sample_batch(&mut Prng::new(20), 10_000);
    let k = 10;
    let iwae = vaelab::vae::iwae_objective(&model, &xs, &mut Prng::new(21), k).unwrap();

    // Replay the identical weights and average them without the log-mean-exp.
    let gaussians = model.encode(&xs).unwrap();
    let mut rng = Prng::new(21);
    let mut noise = vec![0.0; xs.len() * k * 2];
    rng.fill_normal(&mut noise);
    let mut scratch = vaelab::vae::ForwardScratch::new();
    let mut acc = 0.0;
    for (i, (x, q)) in xs.iter().zip(&gaussians).enumerate() {
        for s in 0..k {
            let u = &noise[(i * k + s) * 2..(i * k + s + 1) * 2];
            let z = vaelab::distributions::reparameterize(q, u).unwrap();
            let p = model.decoder.forward_one(&z, &mut scratch);
            let lpx = vaelab::distributions::diag_gaussian_log_density(x, &p).unwrap();
            let lpz = vaelab::distributions::standard_normal_log_density(&z);
            let lq = vaelab::distributions::diag_gaussian_log_density(&z, q).unwrap();
            acc += -(lpx + lpz - lq);
        }
    }
    let single_sample_mean = acc / (xs.len() * k) as f64;
    assert!(
        single_sample_mean >= iwae - 1e-9,
        "mean -w {single_sample_mean} vs iwae {iwae}"
    );
}
