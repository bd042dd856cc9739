//! Likelihood estimation and figure data: importance-sampled NLL, density
//! grids, latent correspondence maps, and the per-dataset evaluation report.

use rayon::prelude::*;

use crate::datasets::DatasetSpec;
use crate::distributions::{
    diag_gaussian_log_density, kl_diag_to_standard, log_mean_exp, reparameterize,
    standard_normal_log_density, DiagGaussian, Prng,
};
use crate::error::{Error, Result};
use crate::vae::{ForwardScratch, VaeModel};

/// Importance-sampled negative log-likelihood estimates, in nats.
#[derive(Debug, Clone)]
pub struct ImportanceNll {
    pub per_example: Vec<f64>,
    pub mean_nats: f64,
    /// Standard error of the mean over examples.
    pub stderr_nats: f64,
    pub k: usize,
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// K-sample importance weights for one example, appended to `out`.
/// `noise` holds the example's K·d reparameterization draws.
pub(crate) fn importance_weights_one(
    model: &VaeModel,
    x: &[f64; 2],
    q: &DiagGaussian,
    noise: &[f64],
    k: usize,
    scratch: &mut ForwardScratch,
    out: &mut Vec<f64>,
) -> crate::error::Result<()> {
    let d = model.latent_dim;
    out.clear();
    for s in 0..k {
        let u = &noise[s * d..(s + 1) * d];
        let z = reparameterize(q, u)?;
        let p = model.decoder.forward_one(&z, scratch);
        let lpx = diag_gaussian_log_density(x, &p)?;
        let lpz = standard_normal_log_density(&z);
        let lq = diag_gaussian_log_density(&z, q)?;
        out.push(lpx + lpz - lq);
    }
    Ok(())
}

/// Estimates −log p(x) for each example by averaging K importance weights
/// p(x|z)p(z)/q(z|x) inside the logarithm. No gradients; the weights match
/// `iwae_objective` exactly for the same generator state (noise is drawn
/// example-major, K·latent_dim values per example, before any computation).
pub fn importance_nll(
    model: &VaeModel,
    xs: &[[f64; 2]],
    k: usize,
    rng: &mut Prng,
) -> Result<ImportanceNll> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { op: "importance_nll" });
    }
    if k == 0 {
        return Err(Error::InvalidParameter(
            "importance_nll requires k >= 1".into(),
        ));
    }
    let d = model.latent_dim;
    let mut noise = vec![0.0; xs.len() * k * d];
    rng.fill_normal(&mut noise);

    let gaussians = model.encode(xs)?;
    let per_example: Vec<f64> = xs
        .par_iter()
        .zip(gaussians.par_iter())
        .zip(noise.par_chunks(k * d))
        .map(|((x, q), noise_i)| {
            let mut scratch = ForwardScratch::new();
            let mut weights = Vec::with_capacity(k);
            importance_weights_one(model, x, q, noise_i, k, &mut scratch, &mut weights)?;
            Ok(-log_mean_exp(&weights)?)
        })
        .collect::<Result<_>>()?;

    let (mean_nats, stderr_nats) = mean_and_stderr(&per_example);
    Ok(ImportanceNll {
        per_example,
        mean_nats,
        stderr_nats,
        k,
    })
}

/// Estimated log-density over cell centers of a grid on the unit square.
/// Row-major with `index = iy · width + ix`; `iy` counts up from y = 0.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub width: usize,
    pub height: usize,
    pub log_density_nats: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

impl DensityGrid {
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            (ix as f64 + 0.5) / self.width as f64,
            (iy as f64 + 0.5) / self.height as f64,
        ]
    }

    /// Riemann sum of exp(log-density) times cell area.
    pub fn total_mass(&self) -> f64 {
        let cell = 1.0 / (self.width as f64 * self.height as f64);
        self.log_density_nats
            .iter()
            .map(|ld| if ld.is_finite() { ld.exp() } else { 0.0 })
            .sum::<f64>()
            * cell
    }
}

/// Model log-density estimated by importance sampling at every cell center.
/// Each cell owns an independent generator substream derived from
/// `(seed, cell index)`, so parallel and serial evaluation agree exactly.
pub fn density_grid(
    model: &VaeModel,
    resolution: usize,
    k: usize,
    seed: u64,
) -> Result<DensityGrid> {
    if resolution < 2 {
        return Err(Error::InvalidParameter("resolution must be >= 2".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("density_grid requires k >= 1".into()));
    }
    let base = Prng::new(seed);
    let d = model.latent_dim;
    let cells = resolution * resolution;
    let log_density_nats: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % resolution;
            let iy = idx / resolution;
            let x = [
                (ix as f64 + 0.5) / resolution as f64,
                (iy as f64 + 0.5) / resolution as f64,
            ];
            let mut rng = base.substream(idx as u64);
            let mut noise = vec![0.0; k * d];
            rng.fill_normal(&mut noise);
            let mut scratch = ForwardScratch::new();
            let q = model.encoder.forward_one(&x, &mut scratch);
            let mut weights = Vec::with_capacity(k);
            importance_weights_one(model, &x, &q, &noise, k, &mut scratch, &mut weights)?;
            log_mean_exp(&weights)
        })
        .collect::<Result<_>>()?;
    Ok(DensityGrid {
        width: resolution,
        height: resolution,
        log_density_nats,
        k,
        seed,
    })
}

/// Ground-truth log-density at the same cell centers (−∞ off support).
pub fn ground_truth_grid(data: &DatasetSpec, resolution: usize) -> Vec<f64> {
    (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % resolution;
            let iy = idx / resolution;
            data.true_log_density([
                (ix as f64 + 0.5) / resolution as f64,
                (iy as f64 + 0.5) / resolution as f64,
            ])
        })
        .collect()
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = (y * self.width + x) * 3;
            self.pixels[i..i + 3].copy_from_slice(&color);
        }
    }
}

/// Input scatter and latent scatter with shared per-point colors.
#[derive(Debug, Clone)]
pub struct LatentMap {
    pub input_image: RgbImage,
    pub latent_image: RgbImage,
    /// (input point, posterior mean, color) triples in sample order.
    pub points: Vec<([f64; 2], Vec<f64>, [u8; 3])>,
    /// Latent plot bounds: the square [−bound, bound]².
    pub latent_bound: f64,
}

const SCATTER_SIZE: usize = 400;
const LATENT_BOUND: f64 = 3.0;
const BACKGROUND: [u8; 3] = [10, 10, 14];

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Color of an input-space point: hue from its angle around the square's
/// center, brightness from its ground-truth density quantile within the
/// sampled batch.
fn point_colors(data: &DatasetSpec, xs: &[[f64; 2]]) -> Vec<[u8; 3]> {
    let densities: Vec<f64> = xs
        .iter()
        .map(|x| {
            let ld = data.true_log_density(*x);
            if ld.is_finite() {
                ld.exp()
            } else {
                0.0
            }
        })
        .collect();
    let mut sorted = densities.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    xs.iter()
        .zip(&densities)
        .map(|(x, dens)| {
            let hue = (x[1] - 0.5).atan2(x[0] - 0.5).to_degrees();
            let quantile = if hi > lo {
                let rank = sorted.partition_point(|v| v < dens);
                rank as f64 / (sorted.len() - 1) as f64
            } else {
                1.0
            };
            hsv_to_rgb(hue, 0.85, 0.35 + 0.65 * quantile)
        })
        .collect()
}

fn splat(image: &mut RgbImage, px: f64, py: f64, color: [u8; 3]) {
    if !(px.is_finite() && py.is_finite()) {
        return;
    }
    let (x, y) = (px.round() as i64, py.round() as i64);
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 {
                image.set(nx as usize, ny as usize, color);
            }
        }
    }
}

/// Samples `m` points, colors them by position and density, and rasterizes
/// the input scatter next to the scatter of posterior means μ_φ(x).
pub fn latent_correspondence_map(
    model: &VaeModel,
    data: &DatasetSpec,
    m: usize,
    rng: &mut Prng,
) -> Result<LatentMap> {
    if m == 0 {
        return Err(Error::EmptyInput {
            op: "latent_correspondence_map",
        });
    }
    let xs = data.sample_batch(rng, m);
    let colors = point_colors(data, &xs);
    let gaussians = model.encode(&xs)?;

    let mut input_image = RgbImage::filled(SCATTER_SIZE, SCATTER_SIZE, BACKGROUND);
    let mut latent_image = RgbImage::filled(SCATTER_SIZE, SCATTER_SIZE, BACKGROUND);
    let size = SCATTER_SIZE as f64;
    let mut points = Vec::with_capacity(m);
    for ((x, q), color) in xs.iter().zip(&gaussians).zip(&colors) {
        splat(&mut input_image, x[0] * size, (1.0 - x[1]) * size, *color);
        // Latent plotted over [−bound, bound]²; only the first two latent
        // coordinates are shown.
        let (lx, ly) = (q.mean[0], q.mean.get(1).copied().unwrap_or(0.0));
        if lx.abs() <= LATENT_BOUND && ly.abs() <= LATENT_BOUND {
            let px = (lx + LATENT_BOUND) / (2.0 * LATENT_BOUND) * size;
            let py = (1.0 - (ly + LATENT_BOUND) / (2.0 * LATENT_BOUND)) * size;
            splat(&mut latent_image, px, py, *color);
        }
        points.push((*x, q.mean.clone(), *color));
    }
    Ok(LatentMap {
        input_image,
        latent_image,
        points,
        latent_bound: LATENT_BOUND,
    })
}

/// One row of the results table, all likelihood columns in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub entropy_bits: f64,
    pub neg_elbo_bits: f64,
    pub neg_elbo_stderr_bits: f64,
    pub nll_bits: f64,
    pub nll_stderr_bits: f64,
    pub k: usize,
    pub n_eval: usize,
}

/// Evaluates a trained model on fresh samples: single-sample negative ELBO
/// (sampled reconstruction plus closed-form KL, per example) and the
/// K-sample importance NLL, both converted to bits at this boundary.
pub fn evaluation_report(
    model: &VaeModel,
    data: &DatasetSpec,
    n_eval: usize,
    k: usize,
    rng: &mut Prng,
) -> Result<EvalReport> {
    if n_eval == 0 {
        return Err(Error::EmptyInput {
            op: "evaluation_report",
        });
    }
    let xs = data.sample_batch(rng, n_eval);
    let d = model.latent_dim;
    let mut elbo_noise = vec![0.0; n_eval * d];
    rng.fill_normal(&mut elbo_noise);

    let gaussians = model.encode(&xs)?;
    let neg_elbo: Vec<f64> = xs
        .par_iter()
        .zip(gaussians.par_iter())
        .zip(elbo_noise.par_chunks(d))
        .map(|((x, q), u)| {
            let mut scratch = ForwardScratch::new();
            let z = reparameterize(q, u)?;
            let p = model.decoder.forward_one(&z, &mut scratch);
            let recon = -diag_gaussian_log_density(x, &p)?;
            Ok(recon + kl_diag_to_standard(q))
        })
        .collect::<Result<_>>()?;
    let (elbo_mean, elbo_stderr) = mean_and_stderr(&neg_elbo);

    let nll = importance_nll(model, &xs, k, rng)?;

    let ln2 = std::f64::consts::LN_2;
    Ok(EvalReport {
        dataset: data.name().to_string(),
        entropy_bits: data.entropy_bits()?,
        neg_elbo_bits: elbo_mean / ln2,
        neg_elbo_stderr_bits: elbo_stderr / ln2,
        nll_bits: nll.mean_nats / ln2,
        nll_stderr_bits: nll.stderr_nats / ln2,
        k,
        n_eval,
    })
}
