//! Closed-form predictions for the multi-instance classifier.
//!
//! By the central limit theorem the group log-odds `sum_i Q_i` of a class-A
//! group of size `N` is approximately `Normal(N mu_a, sqrt(N) sigma_a)`, and
//! likewise for B. A group is called A when `C(theta) + sum_i Q_i > 0`, so
//!
//! ```text
//! TPR(theta, N) = 1/2 (1 + erf((N mu_a + C) / (sqrt(2N) sigma_a)))
//! FPR(theta, N) = 1/2 (1 + erf((N mu_b + C) / (sqrt(2N) sigma_b)))
//! AUC(N)        = 1/2 (1 + erf(sqrt(N) (mu_a - mu_b) / sqrt(2 (sigma_a^2 + sigma_b^2))))
//! ```
//!
//! The misclassification criterion `MISS = 1 - TPR + FPR` is minimized, when
//! `sigma_a = sigma_b`, by `C_opt = -N (mu_a + mu_b) / 2`.

use serde::{Deserialize, Serialize};

use crate::odds::Threshold;
use crate::special::{erfc, normal_cdf};
use crate::stats::ClassMoments;
use crate::{Error, Result};

pub use crate::special::erf;

/// Predicted rates for one group size and threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub n: u64,
    pub threshold: Threshold,
    pub tpr: f64,
    pub fpr: f64,
    pub miss: f64,
}

/// The closed-form optimal threshold for one group size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalThreshold {
    pub n: u64,
    pub c_opt: f64,
    pub threshold: Threshold,
    /// `|sigma_a - sigma_b| / max(sigma_a, sigma_b)`; the closed form assumes
    /// this is zero.
    pub sigma_discrepancy: f64,
}

impl OptimalThreshold {
    pub fn theta_opt(&self) -> f64 {
        self.threshold.theta()
    }
}

fn check_n(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("group size must be at least 1".into()));
    }
    Ok(n as f64)
}

/// `P(C + sum Q > 0)` for `sum Q ~ Normal(N mu, sqrt(N) sigma)`.
#[inline]
fn positive_rate(n: f64, mu: f64, sigma: f64, c: f64) -> f64 {
    0.5 * erfc(-(n * mu + c) / ((2.0 * n).sqrt() * sigma))
}

pub fn analytic_rates(
    moments: &ClassMoments,
    n: u64,
    threshold: Threshold,
) -> Result<RatePrediction> {
    moments.validate()?;
    let nf = check_n(n)?;
    let c = threshold.c();
    let tpr = positive_rate(nf, moments.mu_a, moments.sigma_a, c);
    let fpr = positive_rate(nf, moments.mu_b, moments.sigma_b, c);
    Ok(RatePrediction {
        n,
        threshold,
        tpr,
        fpr,
        miss: 1.0 - tpr + fpr,
    })
}

/// `C_opt = -N (mu_a + mu_b) / 2` and `theta_opt = 1 / (1 + e^{C_opt})`.
///
/// Exact only for `sigma_a = sigma_b`; see [`optimal_c_numeric`] otherwise.
pub fn optimal_c(moments: &ClassMoments, n: u64) -> Result<OptimalThreshold> {
    moments.validate()?;
    let nf = check_n(n)?;
    let c_opt = -0.5 * nf * (moments.mu_a + moments.mu_b);
    let (sa, sb) = (moments.sigma_a, moments.sigma_b);
    Ok(OptimalThreshold {
        n,
        c_opt,
        threshold: Threshold::from_c(c_opt)?,
        sigma_discrepancy: (sa - sb).abs() / sa.max(sb),
    })
}

fn miss_at(moments: &ClassMoments, n: f64, c: f64) -> f64 {
    1.0 - positive_rate(n, moments.mu_a, moments.sigma_a, c)
        + positive_rate(n, moments.mu_b, moments.sigma_b, c)
}

/// The two Gaussian terms whose equality is the stationarity condition of
/// MISS in `C`:
///
/// ```text
/// exp(-(C + N mu_a)^2 / (2 N sigma_a^2)) / sigma_a
/// exp(-(C + N mu_b)^2 / (2 N sigma_b^2)) / sigma_b
/// ```
///
/// `dMISS/dC` is proportional to `term_b - term_a`.
pub fn stationarity_terms(moments: &ClassMoments, n: u64, c: f64) -> Result<(f64, f64)> {
    let nf = check_n(n)?;
    let term = |mu: f64, sigma: f64| {
        let d = c + nf * mu;
        (-(d * d) / (2.0 * nf * sigma * sigma)).exp() / sigma
    };
    Ok((
        term(moments.mu_a, moments.sigma_a),
        term(moments.mu_b, moments.sigma_b),
    ))
}

/// `ln(term_b) - ln(term_a)`; same sign as `dMISS/dC`, no underflow.
fn log_balance(moments: &ClassMoments, n: f64, c: f64) -> f64 {
    let za = (c + n * moments.mu_a) / (n.sqrt() * moments.sigma_a);
    let zb = (c + n * moments.mu_b) / (n.sqrt() * moments.sigma_b);
    (-0.5 * zb * zb - moments.sigma_b.ln()) - (-0.5 * za * za - moments.sigma_a.ln())
}

const SCAN_POINTS: usize = 2000;
const GOLDEN_ITERS: usize = 200;

/// The exact minimizer of MISS over `C`, valid for any `sigma_a`, `sigma_b`.
///
/// Searches `[-N|mu_a| - 10 sqrt(N) sigma, N|mu_b| + 10 sqrt(N) sigma]` with
/// `sigma = max(sigma_a, sigma_b)`. A coarse scan of the sign of `dMISS/dC`
/// (in log form, so it survives where MISS itself is flat to rounding)
/// brackets the minimum and bisection pins it down. If the scan finds no
/// sign change, golden section on MISS over the best scan cell is used.
pub fn optimal_c_numeric(moments: &ClassMoments, n: u64) -> Result<f64> {
    moments.validate()?;
    let nf = check_n(n)?;
    let sigma = moments.sigma_a.max(moments.sigma_b);
    let lo = -nf * moments.mu_a.abs() - 10.0 * nf.sqrt() * sigma;
    let hi = nf * moments.mu_b.abs() + 10.0 * nf.sqrt() * sigma;
    let step = (hi - lo) / SCAN_POINTS as f64;
    let at = |k: usize| lo + step * k as f64;

    // dMISS/dC goes from negative to positive exactly once at a minimum;
    // the balance is quadratic in C, so there is at most one such crossing.
    let crossing = (0..SCAN_POINTS).find(|&k| {
        log_balance(moments, nf, at(k)) < 0.0 && log_balance(moments, nf, at(k + 1)) >= 0.0
    });
    if let Some(k) = crossing {
        let (mut l, mut r) = (at(k), at(k + 1));
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if log_balance(moments, nf, m) < 0.0 {
                l = m;
            } else {
                r = m;
            }
        }
        return Ok(0.5 * (l + r));
    }

    let best = (0..=SCAN_POINTS)
        .min_by(|&i, &j| miss_at(moments, nf, at(i)).total_cmp(&miss_at(moments, nf, at(j))))
        .unwrap_or(0);
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(SCAN_POINTS)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (miss_at(moments, nf, x1), miss_at(moments, nf, x2));
    for _ in 0..GOLDEN_ITERS {
        if b - a <= 1e-15 * (a.abs() + b.abs()).max(1.0) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = miss_at(moments, nf, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = miss_at(moments, nf, x2);
        }
    }
    Ok(0.5 * (a + b))
}

/// Predicted rates at every grid threshold.
pub fn miss_curve(
    moments: &ClassMoments,
    n: u64,
    theta_grid: &[f64],
) -> Result<Vec<RatePrediction>> {
    theta_grid
        .iter()
        .map(|&theta| analytic_rates(moments, n, Threshold::from_theta(theta)?))
        .collect()
}

/// Predicted multi-instance AUC for groups of size `n`.
pub fn analytic_auc(moments: &ClassMoments, n: u64) -> Result<f64> {
    moments.validate()?;
    let nf = check_n(n)?;
    let spread = (moments.sigma_a.powi(2) + moments.sigma_b.powi(2)).sqrt();
    Ok(normal_cdf(
        nf.sqrt() * (moments.mu_a - moments.mu_b) / spread,
    ))
}

/// `(mu_a / sigma_a, mu_b / sigma_b)`.
///
/// With `mu_a > 0` and `mu_b < 0` the classifier becomes perfect as `N`
/// grows, for any fixed threshold in `(0, 1)`.
pub fn quality_ratios(moments: &ClassMoments) -> (f64, f64) {
    (
        moments.mu_a / moments.sigma_a,
        moments.mu_b / moments.sigma_b,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(mu_a: f64, sigma_a: f64, mu_b: f64, sigma_b: f64) -> ClassMoments {
        ClassMoments::new(mu_a, sigma_a, mu_b, sigma_b).unwrap()
    }

    fn random_moments(rng: &mut ChaCha8Rng, equal_sigma: bool) -> ClassMoments {
        let mu_b: f64 = rng.random_range(-1.0..1.0);
        let mu_a = mu_b + rng.random_range(0.01..1.0);
        let sigma_a: f64 = rng.random_range(0.2..3.0);
        let sigma_b = if equal_sigma {
            sigma_a
        } else {
            sigma_a * rng.random_range(0.6..1.6)
        };
        m(mu_a, sigma_a, mu_b, sigma_b)
    }

    #[test]
    fn rate_examples() {
        let sym = m(0.1, 1.0, -0.1, 1.0);
        let r = analytic_rates(&sym, 100, Threshold::HALF).unwrap();
        assert!((r.tpr - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((r.fpr - 0.158_655_253_931_457_05).abs() < 1e-12);
        assert!((r.miss - (1.0 - r.tpr + r.fpr)).abs() < 1e-15);
        assert!((r.miss - 0.3174).abs() < 1e-4);
        // half-plus-erf form, literally
        assert!((r.tpr - 0.5 * (1.0 + erf(1.0 / 2f64.sqrt()))).abs() < 1e-15);

        let flat = m(0.0, 2.5, 0.0, 0.7);
        let r = analytic_rates(&flat, 17, Threshold::HALF).unwrap();
        assert_eq!((r.tpr, r.fpr), (0.5, 0.5));

        assert!(matches!(
            analytic_rates(&sym, 0, Threshold::HALF),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn symmetric_moments_at_half_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..500 {
            let mu: f64 = rng.random_range(-2.0..2.0);
            let s: f64 = rng.random_range(0.1..3.0);
            let n = rng.random_range(1..500);
            let r = analytic_rates(&m(mu, s, -mu, s), n, Threshold::HALF).unwrap();
            assert!((r.tpr + r.fpr - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn optimal_examples() {
        let o = optimal_c(&m(0.1, 1.0, -0.1, 1.0), 50).unwrap();
        assert_eq!(o.c_opt, 0.0);
        assert_eq!(o.theta_opt(), 0.5);
        let o = optimal_c(&m(0.3, 1.0, -0.1, 1.0), 10).unwrap();
        assert!((o.c_opt + 1.0).abs() < 1e-15);
        assert!((o.theta_opt() - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
        assert!((o.theta_opt() - 0.7311).abs() < 1e-4);
        assert_eq!(o.sigma_discrepancy, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let mm = random_moments(&mut rng, false);
            let n = rng.random_range(1..1000);
            let a = optimal_c(&mm, n).unwrap().c_opt;
            let b = optimal_c(&mm, 2 * n).unwrap().c_opt;
            assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let o = optimal_c(&m(0.0, 1.0, 0.0, 2.0), 3).unwrap();
        assert_eq!(o.sigma_discrepancy, 0.5);
    }

    #[test]
    fn miss_curve_examples() {
        let grid: Vec<f64> = (1..=999).map(|i| i as f64 / 1000.0).collect();
        let curve = miss_curve(&m(0.2, 1.3, 0.2, 1.3), 40, &grid).unwrap();
        assert!(curve.iter().all(|r| (r.miss - 1.0).abs() < 1e-15));

        let mm = m(0.3, 1.0, -0.1, 1.0);
        let curve = miss_curve(&mm, 10, &grid).unwrap();
        let best = curve
            .iter()
            .min_by(|x, y| x.miss.total_cmp(&y.miss))
            .unwrap();
        let theta_opt = optimal_c(&mm, 10).unwrap().theta_opt();
        let nearest = grid
            .iter()
            .min_by(|x, y| (*x - theta_opt).abs().total_cmp(&(*y - theta_opt).abs()))
            .unwrap();
        assert_eq!(best.threshold.theta(), *nearest);
        assert!(miss_curve(&mm, 10, &[1.0]).is_err());
    }

    #[test]
    fn optimal_c_is_grid_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let grid: Vec<f64> = (1..=9999).map(|i| i as f64 / 10_000.0).collect();
        for _ in 0..30 {
            let mm = random_moments(&mut rng, true);
            for n in [1, 10, 100] {
                let o = optimal_c(&mm, n).unwrap();
                let at_opt = analytic_rates(&mm, n, o.threshold).unwrap().miss;
                for r in miss_curve(&mm, n, &grid).unwrap() {
                    assert!(at_opt <= r.miss + 1e-9);
                }
            }
        }
    }

    #[test]
    fn closed_form_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let mm = random_moments(&mut rng, true);
            let n = [1, 10, 100][rng.random_range(0..3)];
            let nf = n as f64;
            let c = optimal_c(&mm, n).unwrap().c_opt;
            // local minimum in C on the scale of the group log-odds spread
            let at = miss_at(&mm, nf, c);
            for k in [1e-3, 1e-2, 1e-1] {
                let h = k * nf.sqrt() * mm.sigma_a;
                assert!(miss_at(&mm, nf, c + h) >= at - 1e-15);
                assert!(miss_at(&mm, nf, c - h) >= at - 1e-15);
            }
            let (ta, tb) = stationarity_terms(&mm, n, c).unwrap();
            assert!((ta - tb).abs() <= 1e-12 * ta.max(tb));
        }
    }

    #[test]
    fn numeric_optimum_balances_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let mm = random_moments(&mut rng, false);
            for n in [1, 10, 100] {
                let c = optimal_c_numeric(&mm, n).unwrap();
                let (ta, tb) = stationarity_terms(&mm, n, c).unwrap();
                assert!((ta - tb).abs() < 1e-6, "{mm:?} n={n} c={c}: {ta} vs {tb}");
                let miss = miss_at(&mm, n as f64, c);
                let closed = miss_at(&mm, n as f64, optimal_c(&mm, n).unwrap().c_opt);
                assert!(miss <= closed + 1e-12);
            }
        }
        // equal sigmas: numeric and closed forms agree
        let mm = m(0.3, 0.8, -0.1, 0.8);
        let c = optimal_c_numeric(&mm, 10).unwrap();
        assert!((c - optimal_c(&mm, 10).unwrap().c_opt).abs() < 1e-6);
    }

    #[test]
    fn affine_stability_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..200 {
            let mm = random_moments(&mut rng, true);
            let alpha = rng.random_range(0.5..2.0);
            let beta = rng.random_range(-1.0..1.0);
            let moved = mm.affine(alpha, beta).unwrap();
            for n in [1, 7, 200] {
                let base = analytic_rates(&mm, n, optimal_c(&mm, n).unwrap().threshold).unwrap();
                let r = analytic_rates(&moved, n, optimal_c(&moved, n).unwrap().threshold).unwrap();
                assert!((base.tpr - r.tpr).abs() < 1e-12);
                assert!((base.fpr - r.fpr).abs() < 1e-12);
                let auc = analytic_auc(&mm, n).unwrap();
                assert!((auc - analytic_auc(&moved, n).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(analytic_auc(&m(0.4, 1.0, 0.4, 2.0), 1).unwrap(), 0.5);
        assert_eq!(analytic_auc(&m(0.4, 1.0, 0.4, 2.0), 1000).unwrap(), 0.5);
        let a = analytic_auc(&m(0.1, 1.0, -0.1, 1.0), 1).unwrap();
        assert!((a - 0.5 * (1.0 + erf(0.1))).abs() < 1e-15);
        assert!((a - 0.5562).abs() < 1e-4);

        // Symmetric moments tuned so that AUC(1) = 0.535.
        let half_gap = normal_quantile(0.535) / 2f64.sqrt();
        let mm = m(half_gap, 1.0, -half_gap, 1.0);
        assert!((analytic_auc(&mm, 1).unwrap() - 0.535).abs() < 1e-12);
        assert!((analytic_auc(&mm, 100).unwrap() - 0.810).abs() < 0.005);
        assert!((analytic_auc(&mm, 200).unwrap() - 0.893).abs() < 0.005);

        let mut prev = 0.0;
        for n in 1..300 {
            let v = analytic_auc(&mm, n).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn quality_ratio_examples() {
        assert_eq!(quality_ratios(&m(0.5, 2.0, -0.1, 1.0)).0, 0.25);
        let (ra, rb) = quality_ratios(&m(0.3, 1.5, -0.3, 1.5));
        assert!((ra - 0.2).abs() < 1e-15 && (rb + 0.2).abs() < 1e-15);
        let mm = m(0.05, 1.0, -0.02, 0.8);
        let r = analytic_rates(&mm, 100_000, Threshold::HALF).unwrap();
        assert!(r.tpr > 1.0 - 1e-6 && r.fpr < 1e-6);
    }
}
