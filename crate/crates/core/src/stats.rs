//! Weighted empirical estimators.
//!
//! Class-conditional expectations are approximated from a weighted sample by
//!
//! ```text
//! E[f | A] ~ sum_i omega_a_i f(X_i) / sum_i omega_a_i
//! ```
//!
//! and likewise for B.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::odds::{clamped_log_odds, Class, ScoredInstance, Threshold, DEFAULT_EPSILON};
use crate::par::{map_chunks, Schedule};
use crate::{Error, Result};

const REDUCE_CHUNK: usize = 16_384;

/// Default ROC threshold grid: 999 points uniform on `[0.001, 0.999]`.
pub fn default_theta_grid() -> Vec<f64> {
    (1..=999).map(|i| i as f64 / 1000.0).collect()
}

/// Class-conditional mean and standard deviation of the log-odds `Q`.
///
/// `n_effective_*` is Kish's effective sample size `(sum w)^2 / sum w^2`; it
/// is `0.0` for hand-constructed moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMoments {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    #[serde(default)]
    pub n_effective_a: f64,
    #[serde(default)]
    pub n_effective_b: f64,
}

impl ClassMoments {
    pub fn new(mu_a: f64, sigma_a: f64, mu_b: f64, sigma_b: f64) -> Result<Self> {
        let m = Self {
            mu_a,
            sigma_a,
            mu_b,
            sigma_b,
            n_effective_a: 0.0,
            n_effective_b: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_a.is_finite() && self.mu_b.is_finite()) {
            return Err(Error::Domain("moment means must be finite".into()));
        }
        if !(self.sigma_a > 0.0 && self.sigma_b > 0.0)
            || !self.sigma_a.is_finite()
            || !self.sigma_b.is_finite()
        {
            return Err(Error::Domain(format!(
                "standard deviations must be positive, got ({}, {})",
                self.sigma_a, self.sigma_b
            )));
        }
        Ok(())
    }

    pub fn mu(&self, class: Class) -> f64 {
        match class {
            Class::A => self.mu_a,
            Class::B => self.mu_b,
        }
    }

    pub fn sigma(&self, class: Class) -> f64 {
        match class {
            Class::A => self.sigma_a,
            Class::B => self.sigma_b,
        }
    }

    /// Moments of `alpha * Q + beta`, the effect of an affine change of the
    /// scorer's log-odds.
    pub fn affine(&self, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            mu_a: alpha * self.mu_a + beta,
            sigma_a: alpha * self.sigma_a,
            mu_b: alpha * self.mu_b + beta,
            sigma_b: alpha * self.sigma_b,
            ..*self
        })
    }
}

/// One point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub theta: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// `sum w_i v_i / sum w_i`.
pub fn weighted_expectation(pairs: &[(f64, f64)]) -> Result<f64> {
    let (sw, swv) = pairs
        .iter()
        .fold((0.0, 0.0), |(sw, swv), &(w, v)| (sw + w, swv + w * v));
    if !(sw > 0.0) {
        return Err(Error::Degenerate("total weight is zero".into()));
    }
    Ok(swv / sw)
}

#[derive(Debug, Default, Clone, Copy)]
struct Accum {
    w: f64,
    w2: f64,
    wq: f64,
    nonzero: usize,
}

impl Accum {
    fn add(&mut self, w: f64, q: f64) {
        if w > 0.0 {
            self.w += w;
            self.w2 += w * w;
            self.wq += w * q;
            self.nonzero += 1;
        }
    }

    fn merge(self, o: Accum) -> Accum {
        Accum {
            w: self.w + o.w,
            w2: self.w2 + o.w2,
            wq: self.wq + o.wq,
            nonzero: self.nonzero + o.nonzero,
        }
    }
}

fn check_totals(scored: &[ScoredInstance]) -> Result<(f64, f64)> {
    let sums = map_chunks(Schedule::default(), scored, REDUCE_CHUNK, |c| {
        c.iter()
            .fold((0.0, 0.0), |(a, b), s| (a + s.omega_a, b + s.omega_b))
    });
    let (wa, wb) = sums
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    if !(wa > 0.0) {
        return Err(Error::Degenerate("total class-A weight is zero".into()));
    }
    if !(wb > 0.0) {
        return Err(Error::Degenerate("total class-B weight is zero".into()));
    }
    Ok((wa, wb))
}

/// Weighted mean and (plain, uncorrected) standard deviation of the log-odds
/// in each class.
pub fn class_moments(scored: &[ScoredInstance]) -> Result<ClassMoments> {
    class_moments_with(scored, DEFAULT_EPSILON)
}

pub fn class_moments_with(scored: &[ScoredInstance], epsilon: f64) -> Result<ClassMoments> {
    if let Some(bad) = scored.iter().find(|s| s.score.is_nan()) {
        return Err(Error::InvalidScore(bad.score));
    }
    let schedule = Schedule::default();
    let firsts = map_chunks(schedule, scored, REDUCE_CHUNK, |c| {
        let mut a = Accum::default();
        let mut b = Accum::default();
        for s in c {
            let q = clamped_log_odds(s.score, epsilon);
            a.add(s.omega_a, q);
            b.add(s.omega_b, q);
        }
        (a, b)
    });
    let (acc_a, acc_b) = firsts
        .into_iter()
        .fold((Accum::default(), Accum::default()), |(a, b), (x, y)| {
            (a.merge(x), b.merge(y))
        });
    for (acc, name) in [(&acc_a, "A"), (&acc_b, "B")] {
        if !(acc.w > 0.0) {
            return Err(Error::Degenerate(format!(
                "total class-{name} weight is zero"
            )));
        }
        if acc.nonzero < 2 {
            return Err(Error::InsufficientData(format!(
                "class {name} needs at least two instances with nonzero weight"
            )));
        }
    }
    let mu_a = acc_a.wq / acc_a.w;
    let mu_b = acc_b.wq / acc_b.w;

    let seconds = map_chunks(schedule, scored, REDUCE_CHUNK, |c| {
        c.iter().fold((0.0, 0.0), |(va, vb), s| {
            let q = clamped_log_odds(s.score, epsilon);
            (
                va + s.omega_a * (q - mu_a) * (q - mu_a),
                vb + s.omega_b * (q - mu_b) * (q - mu_b),
            )
        })
    });
    let (va, vb) = seconds
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let sigma_a = (va / acc_a.w).sqrt();
    let sigma_b = (vb / acc_b.w).sqrt();
    for (sigma, mu, name) in [(sigma_a, mu_a, "A"), (sigma_b, mu_b, "B")] {
        if !(sigma > 1e-12 * mu.abs().max(1.0)) {
            return Err(Error::Degenerate(format!(
                "log-odds have zero variance in class {name}"
            )));
        }
    }
    Ok(ClassMoments {
        mu_a,
        sigma_a,
        mu_b,
        sigma_b,
        n_effective_a: acc_a.w * acc_a.w / acc_a.w2,
        n_effective_b: acc_b.w * acc_b.w / acc_b.w2,
    })
}

/// Weighted single-instance TPR and FPR: the fraction of each class's weight
/// with `score > theta`.
pub fn empirical_rates(scored: &[ScoredInstance], threshold: Threshold) -> Result<(f64, f64)> {
    let (wa, wb) = check_totals(scored)?;
    let theta = threshold.theta();
    let above = map_chunks(Schedule::default(), scored, REDUCE_CHUNK, |c| {
        c.iter()
            .filter(|s| s.score > theta)
            .fold((0.0, 0.0), |(a, b), s| (a + s.omega_a, b + s.omega_b))
    });
    let (aa, ab) = above
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok((aa / wa, ab / wb))
}

fn sorted_by_score(scored: &[ScoredInstance]) -> Result<Vec<ScoredInstance>> {
    if let Some(bad) = scored.iter().find(|s| s.score.is_nan()) {
        return Err(Error::InvalidScore(bad.score));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|x, y| x.score.total_cmp(&y.score));
    Ok(sorted)
}

/// ROC points at each grid threshold, sorted by increasing theta.
pub fn roc_curve(scored: &[ScoredInstance], thetas: &[f64]) -> Result<Vec<RocPoint>> {
    if thetas.is_empty() {
        return Err(Error::Domain("threshold grid is empty".into()));
    }
    if let Some(&t) = thetas.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::Domain(format!("grid value {t} outside (0, 1)")));
    }
    let (wa, wb) = check_totals(scored)?;
    let sorted = sorted_by_score(scored)?;
    // suffix[i] = weight of instances sorted[i..]
    let mut suffix = vec![(0.0, 0.0); sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        let (a, b) = suffix[i + 1];
        suffix[i] = (a + sorted[i].omega_a, b + sorted[i].omega_b);
    }
    let mut grid = thetas.to_vec();
    grid.sort_by(f64::total_cmp);
    Ok(grid
        .into_iter()
        .map(|theta| {
            let first_above = sorted.partition_point(|s| s.score <= theta);
            let (a, b) = suffix[first_above];
            RocPoint {
                theta,
                tpr: a / wa,
                fpr: b / wb,
            }
        })
        .collect())
}

/// Trapezoidal area under a ROC polyline, closed with the corners (0,0) and
/// (1,1).
pub fn roc_area(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|x, y| match x.0.total_cmp(&y.0) {
        Ordering::Equal => x.1.total_cmp(&y.1),
        o => o,
    });
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

/// Weighted probability that an A instance outscores a B instance, ties
/// counted one half. Runs in `O(M log M)`.
pub fn weighted_auc(scored: &[ScoredInstance]) -> Result<f64> {
    let (wa, wb) = check_totals(scored)?;
    let sorted = sorted_by_score(scored)?;
    let mut below_b = 0.0;
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut tie_a, mut tie_b) = (0.0, 0.0);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            tie_a += sorted[j].omega_a;
            tie_b += sorted[j].omega_b;
            j += 1;
        }
        total += tie_a * (below_b + 0.5 * tie_b);
        below_b += tie_b;
        i = j;
    }
    Ok(total / (wa * wb))
}
