//! Gradient verification against central finite differences.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Below this magnitude the relative error is meaningless and the absolute
/// error is reported instead.
const ABS_FALLBACK: f64 = 1e-6;

/// Compares reverse-mode gradients of `builder`'s scalar loss against
/// central differences `(f(p+h) - f(p-h)) / 2h`, coordinate by coordinate,
/// over every parameter tensor. Returns the worst error found.
///
/// `builder` must be deterministic: it receives a fresh graph plus the
/// parameter node ids (one per entry of `point`, in order) and returns the
/// loss node.
pub fn finite_difference_check<F>(builder: F, point: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if step <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "finite difference step must be positive, got {step}"
        )));
    }

    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut graph = Graph::new();
        let ids: Vec<NodeId> = tensors
            .iter()
            .map(|t| graph.parameter(t.clone()))
            .collect::<Result<_>>()?;
        let loss = builder(&mut graph, &ids)?;
        let value = graph.value(loss);
        if !value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: value.shape().to_vec(),
            });
        }
        let v = value.item();
        if !v.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_difference_check",
            });
        }
        Ok(v)
    };

    // Analytic gradients at the point itself.
    let mut graph = Graph::new();
    let ids: Vec<NodeId> = point
        .iter()
        .map(|t| graph.parameter(t.clone()))
        .collect::<Result<_>>()?;
    let loss = builder(&mut graph, &ids)?;
    let grads = graph.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut perturbed: Vec<Tensor> = point.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).expect("parameter gradient");
        for ci in 0..point[pi].len() {
            let orig = point[pi].data()[ci];
            perturbed[pi].data_mut()[ci] = orig + step;
            let plus = eval(&perturbed)?;
            perturbed[pi].data_mut()[ci] = orig - step;
            let minus = eval(&perturbed)?;
            perturbed[pi].data_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let exact = analytic.data()[ci];
            let scale = exact.abs().max(numeric.abs());
            let err = if scale < ABS_FALLBACK {
                (exact - numeric).abs()
            } else {
                (exact - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_roundoff() {
        let point = [Tensor::row(&[0.7, -1.3, 2.1])];
        let err = finite_difference_check(
            |g, ids| {
                let sq = g.square(ids[0])?;
                g.sum(sq)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err:e}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let point = [Tensor::row(&[1.0, 2.0])];
        let err = finite_difference_check(
            |g, _ids| {
                let c = g.constant(Tensor::scalar(42.0))?;
                g.sum(c)
            },
            &point,
            1e-4,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn three_layer_perceptron_passes_at_1e4() {
        // Deterministic pseudo-random weights; softplus activations.
        let fill = |n: usize, seed: u64| -> Vec<f64> {
            let mut state = seed;
            (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
                })
                .collect()
        };
        let point = [
            Tensor::matrix(2, 5, fill(10, 11)).unwrap(),
            Tensor::row(&fill(5, 12)),
            Tensor::matrix(5, 5, fill(25, 13)).unwrap(),
            Tensor::row(&fill(5, 14)),
            Tensor::matrix(5, 1, fill(5, 15)).unwrap(),
        ];
        let input = Tensor::matrix(3, 2, fill(6, 16)).unwrap();
        let err = finite_difference_check(
            move |g, ids| {
                let x = g.constant(input.clone())?;
                let h1 = g.matmul(x, ids[0])?;
                let h1 = g.add(h1, ids[1])?;
                let h1 = g.softplus(h1)?;
                let h2 = g.matmul(h1, ids[2])?;
                let h2 = g.add(h2, ids[3])?;
                let h2 = g.softplus(h2)?;
                let out = g.matmul(h2, ids[4])?;
                g.mean(out)
            },
            &point,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "err = {err:e}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let point = [Tensor::row(&[1.0])];
        assert!(finite_difference_check(|g, ids| g.sum(ids[0]), &point, 0.0).is_err());
    }
}
