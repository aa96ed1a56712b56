//! Negative-sampling objective and its SGD update.
//!
//! For a center `c`, context `o` and negatives `m_1..m_k` the loss is
//! `-ln s(out_o . in_c) - sum_j ln s(-out_mj . in_c)` with `s` the logistic
//! function. Its gradients are `(s(out_t . in_c) - y_t) * in_c` for each
//! target row and `sum_t (s(out_t . in_c) - y_t) * out_t` for the center,
//! where `y_t` is 1 for the context and 0 for negatives.

use num_traits::Float;

#[inline]
pub(crate) fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = F::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy<F: Float>(y: &mut [F], a: F, x: &[F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

#[inline]
pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln s(x)`, stable for large `|x|`.
#[inline]
pub(crate) fn log_sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Loss of one (center, context, negatives) tuple from raw vectors.
pub(crate) fn pair_loss_raw<'a, F: Float + 'a>(
    center: &[F],
    context_out: &[F],
    negatives_out: impl IntoIterator<Item = &'a [F]>,
) -> F {
    let mut loss = -log_sigmoid(dot(context_out, center));
    for neg in negatives_out {
        loss = loss - log_sigmoid(-dot(neg, center));
    }
    loss
}

/// Applies one SGD step to `center` and the target rows of `output`.
///
/// `targets` holds `(row, is_context)` pairs. Every output row is updated
/// with the center vector as it was before this call, and the center
/// receives the accumulated gradient at the end, so for distinct rows the
/// change of every parameter is exactly `-lr` times its gradient.
#[inline]
pub(crate) fn sgd_step<F: Float>(center: &mut [F], output: &mut [F], targets: &[(usize, bool)], lr: F, scratch: &mut [F]) {
    let d = center.len();
    scratch.fill(F::zero());
    for &(row, is_context) in targets {
        let out = &mut output[row * d..(row + 1) * d];
        let label = if is_context { F::one() } else { F::zero() };
        let g = (label - sigmoid(dot(out, center))) * lr;
        axpy(scratch, g, out);
        axpy(out, g, center);
    }
    axpy(center, F::one(), scratch);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_for_odd_lengths() {
        for n in [0usize, 1, 7, 8, 9, 17, 128] {
            let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0f64) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0f64).abs() < 1e-300);
        assert!((log_sigmoid(-800.0f64) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(-100.0f32).is_finite());
    }

    #[test]
    fn zero_vectors_give_baseline_loss() {
        let z = [0.0f64; 4];
        let negs = [&z[..]; 5];
        assert!((pair_loss_raw(&z, &z, negs) - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_loss() {
        let (c, o, n) = ([1.0f64, 0.0], [1.0, 0.0], [-1.0, 0.0]);
        let expected = -2.0 * log_sigmoid(1.0f64);
        assert!((pair_loss_raw(&c, &o, [&n[..]]) - expected).abs() < 1e-15);
        assert!((expected - 0.626523).abs() < 1e-6);
    }

    #[test]
    fn saturated_context_term_vanishes() {
        let c = [50.0f64, 0.0];
        let o = [50.0, 0.0];
        assert!(pair_loss_raw(&c, &o, std::iter::empty()) < 1e-300);
    }
}
