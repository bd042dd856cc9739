//! Gaussian primitives shared by training, evaluation, and the analysis
//! checks: sampling, reparameterization, log-densities, and the closed-form
//! KL to the standard normal prior.
//!
//! All log-probabilities here are in nats. Conversion to bits happens only
//! at reporting boundaries (`/ ln 2`).

mod prng;

pub use prng::Prng;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal Gaussian given by a mean vector and a log-variance vector of the
/// same length. Houses both encoder and decoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::LengthMismatch {
                op: "DiagGaussian::new",
                lhs: mean.len(),
                rhs: log_variance.len(),
            });
        }
        Ok(DiagGaussian { mean, log_variance })
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `count` i.i.d. standard normal draws.
pub fn sample_standard_normal(rng: &mut Prng, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    rng.fill_normal(&mut out);
    out
}

/// `z = mean + exp(log_variance / 2) ⊙ u`.
pub fn reparameterize(q: &DiagGaussian, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != q.dim() {
        return Err(Error::LengthMismatch {
            op: "reparameterize",
            lhs: q.dim(),
            rhs: u.len(),
        });
    }
    Ok(q.mean
        .iter()
        .zip(&q.log_variance)
        .zip(u)
        .map(|((m, lv), ui)| m + (0.5 * lv).exp() * ui)
        .collect())
}

/// Log-density of `x` under the diagonal Gaussian, in nats:
/// `Σᵢ [-½ ln 2π - ½ lvᵢ - (xᵢ-mᵢ)² / (2 exp(lvᵢ))]`.
pub fn diag_gaussian_log_density(x: &[f64], p: &DiagGaussian) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::LengthMismatch {
            op: "diag_gaussian_log_density",
            lhs: x.len(),
            rhs: p.dim(),
        });
    }
    let mut total = 0.0;
    for ((xi, mi), lvi) in x.iter().zip(&p.mean).zip(&p.log_variance) {
        let diff = xi - mi;
        total += -0.5 * LN_2PI - 0.5 * lvi - diff * diff / (2.0 * lvi.exp());
    }
    Ok(total)
}

/// Log-density of `x` under the standard normal, in nats.
pub fn standard_normal_log_density(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * (x.len() as f64) * LN_2PI - 0.5 * sq
}

/// Closed-form `KL(q ‖ N(0, I))` in nats:
/// `½‖μ‖² + ½[Σσ² - d - Σ ln σ²]`. Always ≥ 0.
pub fn kl_diag_to_standard(q: &DiagGaussian) -> f64 {
    let mean_sq: f64 = q.mean.iter().map(|m| m * m).sum();
    let var_sum: f64 = q.log_variance.iter().map(|lv| lv.exp()).sum();
    let lv_sum: f64 = q.log_variance.iter().sum();
    let d = q.dim() as f64;
    0.5 * mean_sq + 0.5 * (var_sum - d - lv_sum)
}

/// Overflow-safe `log(mean(exp(values)))`: shifts by the maximum before
/// exponentiating.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput { op: "log_mean_exp" });
    }
    Ok(log_mean_exp_slice(values))
}

pub(crate) fn log_mean_exp_slice(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // all -inf (zero weights) or a stray inf; propagate as-is
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn reparameterize_zero_noise_returns_mean() {
        let q = DiagGaussian::new(vec![0.3, -0.7], vec![1.2, -0.4]).unwrap();
        let z = reparameterize(&q, &[0.0, 0.0]).unwrap();
        assert_eq!(z, q.mean);
    }

    #[test]
    fn reparameterize_unit_scale() {
        let q = DiagGaussian::standard(2);
        let z = reparameterize(&q, &[1.0, -1.0]).unwrap();
        assert_eq!(z, vec![1.0, -1.0]);
    }

    #[test]
    fn reparameterize_sigma_two() {
        // log-variance ln 4 gives σ = 2 elementwise
        let q = DiagGaussian::new(vec![1.0, 1.0], vec![4.0_f64.ln(), 4.0_f64.ln()]).unwrap();
        let z = reparameterize(&q, &[1.0, 0.0]).unwrap();
        assert!((z[0] - 3.0).abs() < TOL);
        assert!((z[1] - 1.0).abs() < TOL);
    }

    #[test]
    fn reparameterize_rejects_length_mismatch() {
        let q = DiagGaussian::standard(2);
        assert!(reparameterize(&q, &[1.0]).is_err());
    }

    #[test]
    fn log_density_standard_at_origin() {
        let p = DiagGaussian::standard(1);
        let v = diag_gaussian_log_density(&[0.0], &p).unwrap();
        assert!((v - (-0.9189385332046727)).abs() < TOL);
    }

    #[test]
    fn log_density_zero_residual_two_dims() {
        let p = DiagGaussian::new(vec![0.4, -1.1], vec![0.0, 0.0]).unwrap();
        let v = diag_gaussian_log_density(&[0.4, -1.1], &p).unwrap();
        assert!((v - (-LN_2PI)).abs() < TOL);
    }

    #[test]
    fn log_density_unit_residual() {
        let p = DiagGaussian::standard(2);
        let v = diag_gaussian_log_density(&[1.0, 0.0], &p).unwrap();
        assert!((v - (-LN_2PI - 0.5)).abs() < TOL);
    }

    #[test]
    fn kl_zero_for_standard() {
        for d in [1, 3, 8] {
            assert_eq!(kl_diag_to_standard(&DiagGaussian::standard(d)), 0.0);
        }
    }

    #[test]
    fn kl_unit_mean_shift() {
        let q = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((kl_diag_to_standard(&q) - 0.5).abs() < TOL);
    }

    #[test]
    fn kl_log_variance_one() {
        // ½(e - 1 - 1) = (e - 2)/2
        let q = DiagGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let expect = (std::f64::consts::E - 2.0) / 2.0;
        assert!((kl_diag_to_standard(&q) - expect).abs() < TOL);
    }

    #[test]
    fn log_mean_exp_single_value_is_identity() {
        assert_eq!(log_mean_exp(&[-3.7]).unwrap(), -3.7);
    }

    #[test]
    fn log_mean_exp_equal_weights() {
        let v = log_mean_exp(&[0.0, 0.0]).unwrap();
        assert!(v.abs() < TOL);
    }

    #[test]
    fn log_mean_exp_rejects_empty() {
        assert!(log_mean_exp(&[]).is_err());
    }

    #[test]
    fn log_mean_exp_handles_extreme_values() {
        let v = log_mean_exp(&[-1000.0, -1000.0]).unwrap();
        assert!((v + 1000.0).abs() < 1e-9);
        let w = log_mean_exp(&[700.0, 690.0]).unwrap();
        assert!(w.is_finite());
    }

    #[test]
    fn averaging_before_log_drowns_out_rare_errors() {
        // Weights p(x|z) = 1 with probability 0.9 and 2^-10 with probability
        // 0.1. The mean of -log₂ w is 1 bit; -log₂ of the mean is ≈ 0.15.
        let weights_log2: Vec<f64> = (0..10)
            .map(|i| if i == 0 { -10.0 } else { 0.0 })
            .collect();
        let mean_neg_log2: f64 =
            weights_log2.iter().map(|w| -w).sum::<f64>() / weights_log2.len() as f64;
        assert!((mean_neg_log2 - 1.0).abs() < TOL);

        let nats: Vec<f64> = weights_log2.iter().map(|w| w * std::f64::consts::LN_2).collect();
        let neg_log2_mean = -log_mean_exp(&nats).unwrap() / std::f64::consts::LN_2;
        let expect = -(0.9_f64 + 0.1 * 2.0_f64.powi(-10)).log2();
        assert!((neg_log2_mean - expect).abs() < 1e-9);
        assert!((expect - 0.152).abs() < 5e-3);
    }
}
