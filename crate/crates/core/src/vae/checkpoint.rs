//! Plain-text checkpoint format, bit-exact.
//!
//! Layout (all lines `\n`-terminated, UTF-8):
//!
//! ```text
//! vaelab-checkpoint v1
//! latent_dim <d>
//! activation <softplus|tanh|relu>
//! encoder_hidden <w1> <w2> ...
//! decoder_hidden <w1> <w2> ...
//! encoder_extras <center> <scale> <lv_bias> <gain>   (hex f64 bits)
//! decoder_extras <center> <scale> <lv_bias> <gain>
//! tensor <name> <rows> <cols>
//! <hex64> <hex64> ...            (one line per row)
//! ...
//! end
//! ```
//!
//! Every value is the big-endian hexadecimal of the IEEE-754 bit pattern of
//! the `f64`, so save/load round-trips are exact. Tensors appear in
//! `VaeModel::named_params` order.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::vae::{Activation, Layer, Mlp, MlpConfig, VaeModel};

const MAGIC: &str = "vaelab-checkpoint v1";

pub fn save_checkpoint(model: &VaeModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "latent_dim {}", model.latent_dim);
    let _ = writeln!(out, "activation {}", model.encoder.config.activation.name());
    let widths = |cfg: &MlpConfig| {
        cfg.hidden_widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "encoder_hidden {}", widths(&model.encoder.config));
    let _ = writeln!(out, "decoder_hidden {}", widths(&model.decoder.config));
    let extras = |cfg: &MlpConfig| {
        format!(
            "{:016X} {:016X} {:016X} {:016X}",
            cfg.input_center.to_bits(),
            cfg.input_scale.to_bits(),
            cfg.logvar_bias_init.to_bits(),
            cfg.init_gain.to_bits()
        )
    };
    let _ = writeln!(out, "encoder_extras {}", extras(&model.encoder.config));
    let _ = writeln!(out, "decoder_extras {}", extras(&model.decoder.config));
    for (name, tensor) in model.named_params() {
        let _ = writeln!(
            out,
            "tensor {} {} {}",
            name,
            tensor.rows(),
            tensor.cols()
        );
        let cols = tensor.cols();
        for row in tensor.data().chunks(cols) {
            let line = row
                .iter()
                .map(|v| format!("{:016X}", v.to_bits()))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str("end\n");
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<VaeModel> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::CheckpointFormat(msg.to_string());

    if lines.next() != Some(MAGIC) {
        return Err(bad("missing or unsupported header"));
    }
    let latent_dim: usize = parse_field(lines.next(), "latent_dim")?
        .parse()
        .map_err(|_| bad("bad latent_dim"))?;
    let activation: Activation = parse_field(lines.next(), "activation")?.parse()?;
    let enc_hidden = parse_widths(parse_field(lines.next(), "encoder_hidden")?)?;
    let dec_hidden = parse_widths(parse_field(lines.next(), "decoder_hidden")?)?;
    let enc_extras = parse_hex_values(parse_field(lines.next(), "encoder_extras")?, 4)?;
    let dec_extras = parse_hex_values(parse_field(lines.next(), "decoder_extras")?, 4)?;

    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| bad("unexpected end of file"))?;
        if line == "end" {
            break;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(bad("expected tensor header"));
        }
        let name = parts.next().ok_or_else(|| bad("missing tensor name"))?;
        let rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad tensor rows"))?;
        let cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad tensor cols"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = lines.next().ok_or_else(|| bad("truncated tensor"))?;
            for word in row.split_whitespace() {
                let bits =
                    u64::from_str_radix(word, 16).map_err(|_| bad("bad hex value"))?;
                data.push(f64::from_bits(bits));
            }
        }
        if data.len() != rows * cols {
            return Err(bad("tensor data length mismatch"));
        }
        tensors.push((name.to_string(), Tensor::matrix(rows, cols, data)?));
    }

    let mut it = tensors.into_iter();
    let mut next_layer = |expect: &str| -> Result<Layer> {
        let (wn, weight) = it.next().ok_or_else(|| bad("missing tensor"))?;
        let (bn, bias) = it.next().ok_or_else(|| bad("missing tensor"))?;
        if !wn.starts_with(expect) || !bn.starts_with(expect) {
            return Err(bad(&format!("unexpected tensor order near {wn}")));
        }
        Ok(Layer { weight, bias })
    };
    let mut build_mlp = |prefix: &str,
                         input_width: usize,
                         hidden: &[usize],
                         output_width: usize,
                         extras: &[f64]|
     -> Result<Mlp> {
        let mut trunk = Vec::new();
        for i in 0..hidden.len() {
            trunk.push(next_layer(&format!("{prefix}.trunk{i}"))?);
        }
        let mean_head = next_layer(&format!("{prefix}.mean"))?;
        let logvar_head = next_layer(&format!("{prefix}.logvar"))?;
        let mut config = MlpConfig::new(input_width, hidden, output_width);
        config.activation = activation;
        config.input_center = extras[0];
        config.input_scale = extras[1];
        config.logvar_bias_init = extras[2];
        config.init_gain = extras[3];
        Ok(Mlp {
            config,
            trunk,
            mean_head,
            logvar_head,
        })
    };

    let encoder = build_mlp("encoder", 2, &enc_hidden, latent_dim, &enc_extras)?;
    let decoder = build_mlp("decoder", latent_dim, &dec_hidden, 2, &dec_extras)?;
    Ok(VaeModel {
        encoder,
        decoder,
        latent_dim,
    })
}

fn parse_field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::CheckpointFormat(format!("missing {key}")))?;
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| Error::CheckpointFormat(format!("expected {key}, got {line:?}")))
}

fn parse_hex_values(s: &str, expect: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = s
        .split_whitespace()
        .map(|w| {
            u64::from_str_radix(w, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::CheckpointFormat(format!("bad hex value {w:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expect {
        return Err(Error::CheckpointFormat(format!(
            "expected {expect} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|w| {
            w.parse()
                .map_err(|_| Error::CheckpointFormat(format!("bad width {w:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Prng;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let model =
            VaeModel::init(2, &[5, 3], Activation::Softplus, &mut Prng::new(123)).unwrap();
        let dir = std::env::temp_dir().join("vaelab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model, loaded);

        // Saving the loaded model reproduces the file byte for byte.
        let path2 = dir.join("model2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn empty_hidden_roundtrip() {
        let model = VaeModel::init(3, &[], Activation::Tanh, &mut Prng::new(5)).unwrap();
        let dir = std::env::temp_dir().join("vaelab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("linear.ckpt");
        save_checkpoint(&model, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), model);
    }

    #[test]
    fn rejects_garbage() {
        let dir = std::env::temp_dir().join("vaelab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.ckpt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointFormat(_))
        ));
    }
}
