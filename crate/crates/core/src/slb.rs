//! Shannon lower bounds on the privacy-power function for continuous loads.
//!
//! Differential entropies are in bits; `p_bar` and `p_hat` are in the same
//! units as the load.

use serde::Serialize;

use crate::error::{Error, Result};

/// Truncated exponential `(1/lambda0) exp(-x/lambda1)` on `[0, p_hat]`.
///
/// When `p_bar >= p_hat / 2` the mean constraint is slack and the maximum
/// entropy density is uniform; that case has `lambda1 = inf`,
/// `lambda0 = p_hat` and `uniform = true`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncExpParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub p_bar: f64,
    pub p_hat: f64,
    pub uniform: bool,
}

/// `1/u - 1/(e^u - 1)`, the mean over `p_hat` at `u = p_hat / lambda1`.
fn scaled_mean(u: f64) -> f64 {
    if u < 1e-3 {
        0.5 - u / 12.0 + u.powi(3) / 720.0
    } else {
        1.0 / u - 1.0 / u.exp_m1()
    }
}

impl TruncExpParams {
    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.p_hat {
            return 0.0;
        }
        if self.uniform {
            return 1.0 / self.p_hat;
        }
        (-x / self.lambda1).exp() / self.lambda0
    }

    /// Mean of the density; equals `p_bar` unless the uniform limit applies.
    pub fn mean(&self) -> f64 {
        if self.uniform {
            self.p_hat / 2.0
        } else if self.p_hat.is_infinite() {
            self.lambda1
        } else {
            self.p_hat * scaled_mean(self.p_hat / self.lambda1)
        }
    }

    /// Differential entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        if self.uniform {
            return self.p_hat.log2();
        }
        (self.lambda0.ln() + self.mean() / self.lambda1) / std::f64::consts::LN_2
    }
}

/// Fits the maximum-entropy density on `[0, p_hat]` with mean at most `p_bar`.
/// `p_hat` may be infinite.
pub fn fit_trunc_exp(p_bar: f64, p_hat: f64) -> Result<TruncExpParams> {
    if !(p_bar > 0.0) || !p_bar.is_finite() {
        return Err(Error::Domain {
            name: "p_bar",
            value: p_bar,
        });
    }
    if !(p_hat > 0.0) {
        return Err(Error::Domain {
            name: "p_hat",
            value: p_hat,
        });
    }
    if p_bar >= p_hat {
        return Err(Error::InvalidArgument(format!(
            "mean {p_bar} must be below the peak {p_hat}"
        )));
    }
    if p_hat.is_infinite() {
        return Ok(TruncExpParams {
            lambda0: p_bar,
            lambda1: p_bar,
            p_bar,
            p_hat,
            uniform: false,
        });
    }
    let target = p_bar / p_hat;
    if target >= 0.5 - 1e-12 {
        return Ok(TruncExpParams {
            lambda0: p_hat,
            lambda1: f64::INFINITY,
            p_bar,
            p_hat,
            uniform: true,
        });
    }
    // scaled_mean decreases from 1/2 to 0; bisect on log u
    let (mut lo, mut hi) = (1e-12_f64.ln(), (2.0 / target + 50.0).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if scaled_mean(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = (0.5 * (lo + hi)).exp();
    let lambda1 = p_hat / u;
    let lambda0 = lambda1 * -(-u).exp_m1();
    Ok(TruncExpParams {
        lambda0,
        lambda1,
        p_bar,
        p_hat,
        uniform: false,
    })
}

/// Bound under average and peak constraints: `h(X)` minus the entropy of
/// the fitted truncated exponential.
pub fn slb_avg_peak(h_x_bits: f64, p_bar: f64, p_hat: f64) -> Result<f64> {
    Ok(h_x_bits - fit_trunc_exp(p_bar, p_hat)?.entropy_bits())
}

/// Bound under a peak constraint alone.
pub fn slb_peak_only(h_x_bits: f64, p_hat: f64) -> Result<f64> {
    if !(p_hat > 0.0) {
        return Err(Error::Domain {
            name: "p_hat",
            value: p_hat,
        });
    }
    Ok(h_x_bits - p_hat.log2())
}

/// Expectation of [`slb_peak_only`] over a random peak given as
/// `(peak, probability)` atoms. A zero peak allows no masking and contributes
/// `h(X)`.
pub fn slb_peak_random(h_x_bits: f64, atoms: &[(f64, f64)]) -> Result<f64> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if atoms.iter().any(|a| !(a.1 >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPmf(format!("peak probabilities sum to {total}")));
    }
    let mut acc = 0.0;
    for &(peak, p) in atoms {
        if !(peak >= 0.0) {
            return Err(Error::Domain {
                name: "peak",
                value: peak,
            });
        }
        if p > 0.0 {
            acc += p * if peak == 0.0 { h_x_bits } else { h_x_bits - peak.log2() };
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    /// Composite Simpson rule with `m` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn fitted_density_meets_moments() {
        for (p_bar, p_hat) in [(0.25, 1.0), (0.1, 1.0), (0.49, 1.0), (1.0, 8.0), (0.01, 3.0)] {
            let f = fit_trunc_exp(p_bar, p_hat).unwrap();
            let mass = simpson(|x| f.density(x), 0.0, p_hat, 20_000);
            let mean = simpson(|x| x * f.density(x), 0.0, p_hat, 20_000);
            assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
            assert!((mean - p_bar).abs() < 1e-9, "mean {mean} vs {p_bar}");
        }
    }

    #[test]
    fn entropy_identity_by_quadrature() {
        let f = fit_trunc_exp(0.25, 1.0).unwrap();
        let h = simpson(
            |x| {
                let d = f.density(x);
                -d * d.log2()
            },
            0.0,
            1.0,
            20_000,
        );
        assert!((h - f.entropy_bits()).abs() < 1e-9);
        let v = slb_avg_peak(2.0, 0.5 - 1e-3, 1.0).unwrap();
        let g = fit_trunc_exp(0.5 - 1e-3, 1.0).unwrap();
        let hq = simpson(|x| -g.density(x) * g.density(x).log2(), 0.0, 1.0, 20_000);
        assert!((v - (2.0 - hq)).abs() < 1e-9);
    }

    #[test]
    fn refit_reproduces_scale() {
        let f = fit_trunc_exp(0.3, 1.5).unwrap();
        let mean = simpson(|x| x * f.density(x), 0.0, 1.5, 20_000);
        let g = fit_trunc_exp(mean, 1.5).unwrap();
        assert!((g.lambda1 - f.lambda1).abs() < 1e-6);
    }

    #[test]
    fn uniform_limit() {
        let f = fit_trunc_exp(0.5, 1.0).unwrap();
        assert!(f.uniform);
        assert_eq!(f.entropy_bits(), 0.0);
        let g = fit_trunc_exp(1.0, 2.0).unwrap();
        assert_eq!(g.entropy_bits(), 1.0);
        // approaching the limit from below is continuous
        let near = fit_trunc_exp(1.0 - 1e-6, 2.0).unwrap();
        assert!(!near.uniform);
        assert!((near.entropy_bits() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_peak_is_exponential() {
        let f = fit_trunc_exp(1.0, f64::INFINITY).unwrap();
        assert_eq!((f.lambda0, f.lambda1), (1.0, 1.0));
        let v = slb_avg_peak(E.log2(), 1.0, f64::INFINITY).unwrap();
        assert!(v.abs() < 1e-15);
        // a large finite peak is close to the exponential fit
        let g = fit_trunc_exp(1.0, 60.0).unwrap();
        assert!((g.lambda1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_trunc_exp(1.0, 1.0).is_err());
        assert!(fit_trunc_exp(2.0, 1.0).is_err());
        assert!(fit_trunc_exp(0.0, 1.0).is_err());
        assert!(fit_trunc_exp(0.3, -1.0).is_err());
    }

    #[test]
    fn avg_peak_nonincreasing_in_mean() {
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let p_bar = i as f64 / 200.0;
            let v = slb_avg_peak(1.0, p_bar, 1.0).unwrap();
            assert!(v <= prev + 1e-12, "p_bar={p_bar}");
            prev = v;
        }
    }

    #[test]
    fn bound_grows_as_mean_vanishes() {
        let a = slb_avg_peak(1.0, 1e-3, 1.0).unwrap();
        let b = slb_avg_peak(1.0, 1e-6, 1.0).unwrap();
        assert!(b > a && a > 1.0);
        assert!((b - a - (1e3_f64).log2()).abs() < 1e-3);
    }

    #[test]
    fn peak_only_examples() {
        assert_eq!(slb_peak_only(1.0, 2.0).unwrap(), 0.0);
        assert_eq!(slb_peak_only(0.7, 1.0).unwrap(), 0.7);
        assert_eq!(slb_peak_only(1.5, 0.5).unwrap(), 2.5);
        assert!(slb_peak_only(1.0, 0.0).is_err());
    }

    #[test]
    fn random_peak_examples() {
        assert_eq!(slb_peak_random(0.3, &[(4.0, 1.0)]).unwrap(), slb_peak_only(0.3, 4.0).unwrap());
        assert_eq!(slb_peak_random(1.0, &[(1.0, 0.5), (2.0, 0.5)]).unwrap(), 0.5);
        assert_eq!(slb_peak_random(3.0, &[(8.0, 1.0)]).unwrap(), 0.0);
        assert_eq!(slb_peak_random(1.0, &[(0.0, 0.5), (2.0, 0.5)]).unwrap(), 0.5);
        assert!(slb_peak_random(1.0, &[(-1.0, 1.0)]).is_err());
        assert!(slb_peak_random(1.0, &[(1.0, 0.4)]).is_err());
    }
}
