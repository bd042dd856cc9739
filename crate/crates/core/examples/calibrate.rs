use vaelab::datasets::{density_normalization, DatasetSpec};

fn main() {
    for spec in [
        DatasetSpec::eight_gaussians(),
        DatasetSpec::checkerboard(),
        DatasetSpec::two_spirals(),
    ] {
        let h = spec.entropy_bits().unwrap();
        let norm = density_normalization(&spec, 2048);
        println!("{:16} H = {h:.5} bits, normalization = {norm:.6}", spec.name());
    }
}
