use crate::error::{ensure, Error, Result};

/// Mean squared error and its gradient w.r.t. `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure!(
        pred.len() == target.len() && !pred.is_empty(),
        Shape,
        "{} predictions against {} targets",
        pred.len(),
        target.len()
    );
    ensure!(
        pred.iter().chain(target).all(|v| v.is_finite()),
        Validation,
        "non-finite value in mse"
    );
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `-w_y log p_y` with `p_high = sigmoid(logit)`; returns loss and d/dlogit.
/// `class_weights` is `(w_low, w_high)`.
pub fn weighted_cross_entropy(logit: f64, high: bool, class_weights: (f64, f64)) -> Result<(f64, f64)> {
    ensure!(logit.is_finite(), Validation, "non-finite logit {logit}");
    let (w_low, w_high) = class_weights;
    ensure!(
        w_low > 0.0 && w_high > 0.0,
        Validation,
        "class weights must be positive"
    );
    let p = crate::nn::dense::sigmoid(logit);
    Ok(if high {
        (w_high * softplus(-logit), w_high * (p - 1.0))
    } else {
        (w_low * softplus(logit), w_low * p)
    })
}

/// Weights inversely proportional to class frequency: `w_c = n / (2 n_c)`.
pub fn class_weights(n_low: usize, n_high: usize) -> Result<(f64, f64)> {
    if n_low == 0 || n_high == 0 {
        return Err(Error::Degenerate(format!(
            "single-class training set ({n_low} low, {n_high} high)"
        )));
    }
    let n = (n_low + n_high) as f64;
    Ok((n / (2.0 * n_low as f64), n / (2.0 * n_high as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::max_relative_error;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (l, g) = mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 5.0);
        assert_eq!(g, [1.0, 3.0]);
        assert!(mse(&[f64::NAN], &[0.0]).is_err());
        assert!(mse(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn weight_ratio_from_counts() {
        let (lo, hi) = class_weights(683, 188).unwrap();
        assert!((hi / lo - 683.0 / 188.0).abs() < 1e-12);
        assert!(class_weights(0, 10).is_err());
        assert!(class_weights(10, 0).is_err());
    }

    #[test]
    fn cross_entropy_at_zero() {
        let (l, _) = weighted_cross_entropy(0.0, true, (1.0, 1.0)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(weighted_cross_entropy(f64::INFINITY, true, (1.0, 1.0)).is_err());
        assert!(weighted_cross_entropy(0.0, true, (0.0, 1.0)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for &(logit, high) in &[(0.3, true), (-2.0, false), (4.0, false), (-0.7, true)] {
            let w = (0.7, 2.3);
            let (_, d) = weighted_cross_entropy(logit, high, w).unwrap();
            let err = max_relative_error(
                |x| weighted_cross_entropy(x[0], high, w).unwrap().0,
                &[logit],
                &[d],
            );
            assert!(err < 1e-4);
        }
        let pred = [0.3, -1.2, 0.8];
        let target = [0.1, 0.4, -0.5];
        let (_, g) = mse(&pred, &target).unwrap();
        assert!(max_relative_error(|p| mse(p, &target).unwrap().0, &pred, &g) < 1e-4);
    }
}
