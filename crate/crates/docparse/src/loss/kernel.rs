//! Discrete Gaussian smoothing kernel.

use serde::Serialize;

use super::LossError;

/// Symmetric 1-D Gaussian kernel of odd size.
///
/// Weight `i` (0-based) is `exp(-(i-c)^2 / (2 sigma^2))` with `c = (n-1)/2`,
/// optionally divided by the weight sum so the kernel is a convex
/// combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    normalized: bool,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the center weight: `(size - 1) / 2`.
    pub fn center(&self) -> usize {
        (self.size - 1) / 2
    }
}

/// Builds the kernel; `n` must be odd and at least 3, `sigma` positive.
pub fn build_kernel(n: usize, sigma: f64, normalize: bool) -> Result<GaussianKernel, LossError> {
    if n < 3 || n % 2 == 0 {
        return Err(LossError::BadKernelSize(n));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(LossError::BadKernelSigma(sigma));
    }
    let c = ((n - 1) / 2) as f64;
    let mut weights: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as f64 - c;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    if normalize {
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
    }
    Ok(GaussianKernel { size: n, sigma, normalized: normalize, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unnormalized_3_1_matches_closed_form() {
        let k = build_kernel(3, 1.0, false).unwrap();
        let e = (-0.5f64).exp();
        assert_eq!(k.weights(), &[e, 1.0, e]);
        assert!((e - 0.6065306597).abs() < 1e-9);
    }

    #[test]
    fn normalized_5_1_matches_frozen_values() {
        let k = build_kernel(5, 1.0, true).unwrap();
        // Raw weights [e^-2, e^-1/2, 1, e^-1/2, e^-2] sum to 2.4837...
        let expect = [0.0545, 0.2442, 0.4026, 0.2442, 0.0545];
        for (w, e) in k.weights().iter().zip(expect) {
            assert!((w - e).abs() < 5e-5, "weight {w} vs {e}");
        }
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_sigma_is_a_delta() {
        let k = build_kernel(3, 1e-6, true).unwrap();
        assert!((k.weights()[1] - 1.0).abs() < 1e-12);
        assert!(k.weights()[0] < 1e-12 && k.weights()[2] < 1e-12);
    }

    #[test]
    fn weights_symmetric_and_center_max() {
        for n in [3, 5, 7, 9] {
            for sigma in [0.3, 1.0, 2.5] {
                let k = build_kernel(n, sigma, false).unwrap();
                let w = k.weights();
                for i in 0..n {
                    assert_eq!(w[i], w[n - 1 - i], "n={n} sigma={sigma} i={i}");
                }
                let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(w[k.center()], max);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(build_kernel(4, 1.0, true), Err(LossError::BadKernelSize(4)));
        assert_eq!(build_kernel(1, 1.0, true), Err(LossError::BadKernelSize(1)));
        assert_eq!(build_kernel(3, 0.0, true), Err(LossError::BadKernelSigma(0.0)));
        assert_eq!(build_kernel(3, -1.0, true), Err(LossError::BadKernelSigma(-1.0)));
    }
}
