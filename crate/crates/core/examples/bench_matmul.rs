use std::time::Instant;
use vaelab::autodiff::{matmul_nn, matmul_nt, matmul_tn};

fn bench(name: &str, m: usize, k: usize, n: usize, f: impl Fn(&[f64], &[f64], &mut [f64])) {
    let a: Vec<f64> = (0..m * k).map(|i| (i % 13) as f64 * 0.1).collect();
    let b: Vec<f64> = (0..k * n).map(|i| (i % 7) as f64 * 0.2).collect();
    let mut c = vec![0.0; m * n];
    let reps = (200_000_000 / (2 * m * k * n)).max(3);
    let t0 = Instant::now();
    for _ in 0..reps {
        f(&a, &b, &mut c);
    }
    let dt = t0.elapsed().as_secs_f64();
    let gflops = (2.0 * (m * k * n * reps) as f64) / dt / 1e9;
    println!("{name} {m}x{k}x{n}: {gflops:.2} GFLOP/s ({reps} reps)");
}

fn main() {
    for (m, k, n) in [(200, 64, 64), (200, 128, 128), (2000, 64, 64), (200, 2, 64), (200, 64, 2)] {
        bench("nn", m, k, n, |a, b, c| matmul_nn(a, b, m, k, n, c));
    }
    let (m, k, n) = (200, 128, 128);
    bench("nt", m, k, n, |a, b, c| matmul_nt(a, b, m, n, k, c)); // a: m x k as A[m,k]... nt: A[m,k]·B[n,k]
    bench("tn", k, m, n, |a, b, c| matmul_tn(a, b, m, k, n, c)); // A[m,k] -> k x... 
}
