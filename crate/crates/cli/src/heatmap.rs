//! Heatmap rendering and the PPM (P6) writer.
//!
//! Log-density grids are normalized by their 2nd–98th percentile range and
//! mapped through a 16-anchor viridis-style colormap (yellow = high density,
//! purple = low). Off-support cells (−∞) map to the bottom color.

use std::io::Write;
use std::path::Path;

use vaelab::evaluation::RgbImage;

/// 16 anchors of the viridis colormap, linearly interpolated.
const VIRIDIS: [[u8; 3]; 16] = [
    [68, 1, 84],
    [72, 26, 108],
    [71, 47, 125],
    [65, 68, 135],
    [57, 86, 140],
    [49, 104, 142],
    [42, 120, 142],
    [35, 136, 142],
    [31, 152, 139],
    [34, 168, 132],
    [53, 183, 121],
    [84, 197, 104],
    [122, 209, 81],
    [165, 219, 54],
    [210, 226, 27],
    [253, 231, 37],
];

pub fn viridis(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * 15.0;
    let i = (t as usize).min(14);
    let f = t - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [
        (a[0] as f64 + f * (b[0] as f64 - a[0] as f64)).round() as u8,
        (a[1] as f64 + f * (b[1] as f64 - a[1] as f64)).round() as u8,
        (a[2] as f64 + f * (b[2] as f64 - a[2] as f64)).round() as u8,
    ]
}

/// Rendered heatmap plus the normalization record for the manifest.
pub struct Heatmap {
    pub image: RgbImage,
    pub colormap: &'static str,
    pub lo: f64,
    pub hi: f64,
    /// Set when the grid was constant and rendered flat.
    pub degenerate: bool,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Renders a row-major grid (index `iy·width + ix`, `iy` counting up from
/// y = 0) into an image with y = 1 at the top. Values may be −∞.
pub fn render_heatmap(values: &[f64], width: usize, height: usize) -> Heatmap {
    debug_assert_eq!(values.len(), width * height);
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = if finite.is_empty() {
        (0.0, 0.0)
    } else {
        (percentile(&finite, 0.02), percentile(&finite, 0.98))
    };
    // Interpolation roundoff can split identical values by a few ulps;
    // treat such spans as constant.
    let degenerate = hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300);
    let mut image = RgbImage::filled(width, height, [0, 0, 0]);
    for iy in 0..height {
        for ix in 0..width {
            let v = values[iy * width + ix];
            let t = if !v.is_finite() {
                0.0
            } else if degenerate {
                0.5
            } else {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            };
            image.set(ix, height - 1 - iy, viridis(t));
        }
    }
    Heatmap {
        image,
        colormap: "viridis16",
        lo,
        hi,
        degenerate,
    }
}

/// Binary PPM (P6), 8-bit, maximum value 255.
pub fn write_ppm(image: &RgbImage, path: &Path) -> std::io::Result<()> {
    let mut out = Vec::with_capacity(image.pixels.len() + 32);
    write!(out, "P6\n{} {}\n255\n", image.width, image.height)?;
    out.extend_from_slice(&image.pixels);
    std::fs::write(path, out)
}

/// Reference P6 parser, used by tests and round-trip checks.
pub fn read_ppm(path: &Path) -> std::io::Result<RgbImage> {
    let bytes = std::fs::read(path)?;
    parse_ppm(&bytes).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidData, "not a valid P6 file")
    })
}

pub fn parse_ppm(bytes: &[u8]) -> Option<RgbImage> {
    let mut pos = 0;
    let mut token = || -> Option<&[u8]> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| &bytes[start..pos])
    };
    if token()? != b"P6" {
        return None;
    }
    let width: usize = std::str::from_utf8(token()?).ok()?.parse().ok()?;
    let height: usize = std::str::from_utf8(token()?).ok()?.parse().ok()?;
    let maxval: usize = std::str::from_utf8(token()?).ok()?.parse().ok()?;
    if maxval != 255 {
        return None;
    }
    let data_start = pos + 1; // single whitespace byte after maxval
    let expect = width * height * 3;
    let pixels = bytes.get(data_start..data_start + expect)?.to_vec();
    Some(RgbImage {
        width,
        height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmax_corners_take_colormap_endpoints() {
        // 2×2 grid [0,1;1,0]: extremes must land on the endpoints.
        let h = render_heatmap(&[0.0, 1.0, 1.0, 0.0], 2, 2);
        assert!(!h.degenerate);
        let px = |img: &RgbImage, x: usize, y: usize| -> [u8; 3] {
            let i = (y * img.width + x) * 3;
            [img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]]
        };
        // grid (0,0)=0 renders at image (0, height-1)
        assert_eq!(px(&h.image, 0, 1), VIRIDIS[0]);
        assert_eq!(px(&h.image, 1, 1), VIRIDIS[15]);
        assert_eq!(px(&h.image, 0, 0), VIRIDIS[15]);
        assert_eq!(px(&h.image, 1, 0), VIRIDIS[0]);
    }

    #[test]
    fn two_level_grid_renders_two_colors() {
        // A checkerboard-style two-level grid must produce exactly two
        // distinct pixel colors.
        let mut values = vec![0.0; 64];
        for i in 0..64 {
            if (i / 8 + i % 8) % 2 == 0 {
                values[i] = 2.0_f64.ln();
            } else {
                values[i] = f64::NEG_INFINITY;
            }
        }
        let h = render_heatmap(&values, 8, 8);
        let mut colors: Vec<[u8; 3]> = h
            .image
            .pixels
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 2, "colors: {colors:?}");
    }

    #[test]
    fn constant_grid_is_degenerate_but_rendered() {
        let h = render_heatmap(&[3.0; 16], 4, 4);
        assert!(h.degenerate);
        let first = &h.image.pixels[0..3];
        assert!(h.image.pixels.chunks(3).all(|c| c == first));
    }

    #[test]
    fn ppm_roundtrip_is_bit_exact() {
        let mut img = RgbImage::filled(5, 3, [1, 2, 3]);
        img.set(4, 2, [250, 251, 252]);
        let dir = std::env::temp_dir().join("vaelab-ppm-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ppm");
        write_ppm(&img, &path).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(img, back);
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n5 3\n255\n"));
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_ppm(b"P5\n2 2\n255\nxxxx").is_none());
        assert!(parse_ppm(b"P6\n2 2\n255\nxx").is_none());
    }
}
