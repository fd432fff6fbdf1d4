//! Inverted dropout driven by an explicit RNG stream.

use crate::tensor::Tensor;
use rand::Rng;

pub struct DropoutMask {
    pub mask: Vec<f64>,
    pub keep_prob: f64,
}

/// Train-time dropout: elements survive with probability `keep_prob` and are
/// scaled by 1/keep_prob so inference needs no rescaling. `keep_prob >= 1`
/// is the identity and draws nothing from the stream. At inference time
/// callers skip this op entirely.
pub fn dropout(x: &Tensor, keep_prob: f64, rng: &mut impl Rng) -> (Tensor, DropoutMask) {
    assert!(keep_prob > 0.0, "keep_prob must be positive");
    if keep_prob >= 1.0 {
        return (
            x.clone(),
            DropoutMask {
                mask: vec![1.0; x.len()],
                keep_prob: 1.0,
            },
        );
    }
    let inv = 1.0 / keep_prob;
    let mask: Vec<f64> = (0..x.len())
        .map(|_| {
            if rng.random_range(0.0..1.0) < keep_prob {
                inv
            } else {
                0.0
            }
        })
        .collect();
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    (y, DropoutMask { mask, keep_prob })
}

pub fn dropout_backward(grad_y: &Tensor, mask: &DropoutMask) -> Tensor {
    let mut g = grad_y.clone();
    for (v, &m) in g.data_mut().iter_mut().zip(mask.mask.iter()) {
        *v *= m;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;

    #[test]
    fn keep_prob_one_is_identity() {
        let mut rng = init::stream(3, "dropout/identity");
        let x = init::normal(&[4, 5], 0.0, 1.0, &mut rng);
        let (y, _) = dropout(&x, 1.0, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn surviving_elements_are_scaled() {
        let mut rng = init::stream(4, "dropout/scale");
        let x = Tensor::filled(&[1, 1000], 1.0);
        let (y, mask) = dropout(&x, 0.8, &mut rng);
        for (v, m) in y.data().iter().zip(mask.mask.iter()) {
            assert!(*v == 0.0 || (*v - 1.25).abs() < 1e-12);
            assert_eq!(*v, *m);
        }
        let kept = y.data().iter().filter(|&&v| v != 0.0).count();
        assert!((700..900).contains(&kept), "kept {kept}");
    }
}
