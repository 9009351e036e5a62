//! Binary cross-entropy losses on logits.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max(x,0) − x·g + log(1 + e^{−|x|})`, the overflow-free form of
/// `−[g·log σ(x) + (1−g)·log(1−σ(x))]`.
pub fn bce_term(x: f64, g: f64) -> f64 {
    x.max(0.0) - x * g + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check<T: Element>(op: &'static str, logits: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if logits.shape() != target.shape() {
        return Err(Error::shape(op, format!("logits {:?} vs target {:?}", logits.shape(), target.shape())));
    }
    if target.data().iter().any(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
        return Err(Error::arg(op, "target values must lie in [0, 1]"));
    }
    Ok(())
}

/// Per-pixel weighted BCE divided by the pixel count.
fn weighted_bce<T: Element>(op: &'static str, logits: &Tensor<T>, target: &Tensor<T>, weights: Vec<f64>) -> Tensor<T> {
    let n = logits.numel() as f64;
    let total: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .zip(&weights)
        .map(|((&x, &g), &w)| w * bce_term(x.as_f64(), g.as_f64()))
        .sum();
    let tgt: Vec<f64> = target.data().iter().map(|v| v.as_f64()).collect();
    Tensor::from_op(op, [1, 1, 1, 1], vec![T::from_f64(total / n)], &[logits], move |g, ins| {
        let scale = g[0].as_f64() / n;
        let grad = ins[0]
            .data()
            .iter()
            .zip(&tgt)
            .zip(&weights)
            .map(|((&x, &t), &w)| T::from_f64(scale * w * (sigmoid(x.as_f64()) - t)))
            .collect();
        vec![Some(grad)]
    })
}

/// Mean binary cross-entropy between logits and a soft target in `[0, 1]`.
pub fn bce_loss<T: Element>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    check("bce_loss", logits, target)?;
    Ok(weighted_bce("bce_loss", logits, target, vec![1.0; logits.numel()]))
}

/// Class-balanced BCE for sparse binary edge maps.
///
/// Positives are weighted by `N⁻/N` and negatives by `N⁺/N`; the weighted
/// sum is divided by `N`. A target with a single class falls back to plain
/// [`bce_loss`].
pub fn balanced_bce_loss<T: Element>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    check("balanced_bce_loss", logits, target)?;
    let positive: Vec<bool> = target.data().iter().map(|v| v.as_f64() >= 0.5).collect();
    let n = positive.len() as f64;
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = n - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return bce_loss(logits, target);
    }
    let weights = positive.iter().map(|&p| if p { n_neg / n } else { n_pos / n }).collect();
    Ok(weighted_bce("balanced_bce_loss", logits, target, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new([1, 1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_point_is_log_two() {
        let l = bce_loss(&t(&[0.0; 4]), &t(&[0.5; 4])).unwrap();
        assert!((l.item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn large_logits_stay_finite() {
        let l = bce_loss(&t(&[20.0]), &t(&[1.0])).unwrap().item();
        // log(1 + e^-20)
        let want = (-20.0f64).exp().ln_1p();
        assert!((l - want).abs() < 1e-20 && (l - 2.061153618e-9).abs() < 1e-17);
        let l = bce_loss(&t(&[-1000.0, 1000.0]), &t(&[1.0, 0.0])).unwrap().item();
        assert_eq!(l, 1000.0);
    }

    #[test]
    fn balanced_half_split_is_half_of_plain_sum() {
        let x = [0.3, -1.2, 2.0, 0.1, -0.4, 0.9];
        let g = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let plain_sum: f64 = x.iter().zip(&g).map(|(&x, &g)| bce_term(x, g)).sum();
        let l = balanced_bce_loss(&t(&x), &t(&g)).unwrap().item();
        assert!((l - 0.5 * plain_sum / 6.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_single_class_falls_back() {
        let x = [0.3, -1.2, 2.0];
        let zeros = [0.0; 3];
        let a = balanced_bce_loss(&t(&x), &t(&zeros)).unwrap().item();
        let b = bce_loss(&t(&x), &t(&zeros)).unwrap().item();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_targets() {
        assert!(bce_loss(&t(&[0.0; 2]), &t(&[0.0; 3])).is_err());
        assert!(bce_loss(&t(&[0.0; 2]), &t(&[0.0, 1.5])).is_err());
    }
}
