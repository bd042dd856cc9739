//! Archimedean spiral band geometry.
//!
//! The two-spirals dataset is uniform over the union of two point-symmetric
//! bands: all points within `half_width` of either spiral centerline
//! `γ(t) = center + (r_max·t/t_max)·(cos(t+φ), sin(t+φ))`, `t ∈ [0, t_max]`,
//! with arm phases φ = 0 and φ = π.
//!
//! Distances to the centerlines are computed by scanning a precomputed table
//! of curve points and polishing each local minimum with Newton steps on
//! D(t) = |p − γ(t)|². Local minima of the distance to this curve are
//! separated by roughly a full turn in `t`, so the scan cannot skip one.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

/// Scan resolution for the distance tables.
const SCAN: usize = 256;

#[derive(Debug, Clone)]
pub struct SpiralParams {
    pub center: [f64; 2],
    pub turns: f64,
    pub r_max: f64,
    pub half_width: f64,
    scan: [Vec<[f64; 2]>; 2],
    /// Half the maximum arc length between consecutive scan points: a local
    /// minimum can undershoot its sampled neighborhood by at most this much.
    scan_margin: f64,
    band_area: OnceLock<f64>,
}

impl PartialEq for SpiralParams {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center
            && self.turns == other.turns
            && self.r_max == other.r_max
            && self.half_width == other.half_width
    }
}

impl SpiralParams {
    pub fn new(center: [f64; 2], turns: f64, r_max: f64, half_width: f64) -> Self {
        let mut params = SpiralParams {
            center,
            turns,
            r_max,
            half_width,
            scan: [Vec::new(), Vec::new()],
            scan_margin: 0.0,
            band_area: OnceLock::new(),
        };
        let t_max = params.t_max();
        let step = t_max / SCAN as f64;
        for (arm, phase) in [0.0, PI].into_iter().enumerate() {
            params.scan[arm] = (0..=SCAN)
                .map(|i| params.curve(i as f64 * step, phase))
                .collect();
        }
        let b = params.radial_rate();
        params.scan_margin = 0.5 * b * (1.0 + t_max * t_max).sqrt() * step;
        params
    }

    pub fn t_max(&self) -> f64 {
        self.turns * TAU
    }

    fn radial_rate(&self) -> f64 {
        self.r_max / self.t_max()
    }

    fn curve(&self, t: f64, phase: f64) -> [f64; 2] {
        let r = self.radial_rate() * t;
        let a = t + phase;
        [self.center[0] + r * a.cos(), self.center[1] + r * a.sin()]
    }

    fn dist_sq_at(&self, p: [f64; 2], t: f64, phase: f64) -> f64 {
        let g = self.curve(t, phase);
        let ex = p[0] - g[0];
        let ey = p[1] - g[1];
        ex * ex + ey * ey
    }

    /// Newton polish of a candidate minimum of D(t) = |p − γ(t)|².
    fn refine(&self, p: [f64; 2], t_start: f64, phase: f64, step: f64) -> f64 {
        let b = self.radial_rate();
        let t_max = self.t_max();
        let mut t = t_start;
        let mut best = self.dist_sq_at(p, t, phase);
        for _ in 0..16 {
            let a = t + phase;
            let (sin, cos) = a.sin_cos();
            let g = [self.center[0] + b * t * cos, self.center[1] + b * t * sin];
            let d1 = [b * (cos - t * sin), b * (sin + t * cos)];
            let d2 = [b * (-2.0 * sin - t * cos), b * (2.0 * cos - t * sin)];
            let e = [p[0] - g[0], p[1] - g[1]];
            let grad = -2.0 * (e[0] * d1[0] + e[1] * d1[1]);
            let hess = 2.0 * (d1[0] * d1[0] + d1[1] * d1[1] - e[0] * d2[0] - e[1] * d2[1]);
            if hess <= 0.0 {
                break;
            }
            let delta = (grad / hess).clamp(-step, step);
            t = (t - delta).clamp(0.0, t_max);
            best = best.min(self.dist_sq_at(p, t, phase));
            if delta.abs() < 1e-13 {
                break;
            }
        }
        best
    }

    /// Squared distance to one arm. When `prune_above` is finite, local
    /// minima whose sampled distance cannot possibly drop below it are left
    /// unpolished, which keeps membership tests cheap.
    fn dist_sq_to_arm(&self, p: [f64; 2], arm: usize, prune_above: f64) -> f64 {
        let phase = if arm == 0 { 0.0 } else { PI };
        let table = &self.scan[arm];
        let step = self.t_max() / SCAN as f64;

        let mut samples = [0.0f64; SCAN + 1];
        for (i, g) in table.iter().enumerate() {
            let ex = p[0] - g[0];
            let ey = p[1] - g[1];
            samples[i] = ex * ex + ey * ey;
        }

        let cutoff = {
            let c = prune_above + self.scan_margin;
            c * c
        };
        let mut best = samples[0].min(samples[SCAN]);
        for i in 1..SCAN {
            if samples[i] <= samples[i - 1] && samples[i] <= samples[i + 1] {
                if samples[i] < cutoff || samples[i] < best {
                    best = best.min(self.refine(p, i as f64 * step, phase, step));
                } else {
                    best = best.min(samples[i]);
                }
            }
        }
        // Endpoint regions can hold a minimum without an interior bracket.
        if samples[0].min(samples[1]) < cutoff {
            best = best.min(self.refine(p, 0.5 * step, phase, step));
        }
        if samples[SCAN].min(samples[SCAN - 1]) < cutoff {
            best = best.min(self.refine(p, self.t_max() - 0.5 * step, phase, step));
        }
        best
    }

    /// Exact distance from `p` to the nearest of the two centerlines.
    pub fn distance_to_centerlines(&self, p: [f64; 2]) -> f64 {
        self.dist_sq_to_arm(p, 0, f64::INFINITY)
            .min(self.dist_sq_to_arm(p, 1, f64::INFINITY))
            .sqrt()
    }

    /// Band membership; exact, but skips distance polishing far from the
    /// band edge.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let h2 = self.half_width * self.half_width;
        if self.dist_sq_to_arm(p, 0, self.half_width) <= h2 {
            return true;
        }
        self.dist_sq_to_arm(p, 1, self.half_width) <= h2
    }

    /// Band area inside the unit square, measured once by a midpoint grid
    /// and cached.
    pub fn band_area(&self) -> f64 {
        *self.band_area.get_or_init(|| {
            use rayon::prelude::*;
            let n = 2048usize;
            let cell = 1.0 / n as f64;
            let hits: usize = (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = (i as f64 + 0.5) * cell;
                    (0..n)
                        .filter(|&j| {
                            let y = (j as f64 + 0.5) * cell;
                            self.contains([x, y])
                        })
                        .count()
                })
                .sum();
            hits as f64 * cell * cell
        })
    }
}
