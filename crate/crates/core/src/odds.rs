//! Weights, posteriors and log-odds.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default clamp applied to scores before taking log-odds.
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// The two categories of the binary problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    A,
    B,
}

/// One instance with its feature vector and per-class weights.
///
/// The weights are non-negative and proportional to the probability that the
/// instance belongs to each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedInstance {
    pub features: Vec<f64>,
    pub omega_a: f64,
    pub omega_b: f64,
}

impl WeightedInstance {
    pub fn new(features: Vec<f64>, omega_a: f64, omega_b: f64) -> Result<Self> {
        check_weights(omega_a, omega_b)?;
        Ok(Self {
            features,
            omega_a,
            omega_b,
        })
    }

    pub fn posterior(&self) -> Result<f64> {
        posterior_from_weights(self.omega_a, self.omega_b)
    }

    pub fn soft_label(&self) -> Result<SoftLabel> {
        SoftLabel::from_weights(self.omega_a, self.omega_b)
    }
}

/// A single-instance score `p = P(A|X)` with the instance's class weights.
///
/// A hard ground-truth label is the special case `(1, 0)` for A or `(0, 1)`
/// for B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub score: f64,
    pub omega_a: f64,
    pub omega_b: f64,
}

impl ScoredInstance {
    pub fn new(score: f64, omega_a: f64, omega_b: f64) -> Self {
        Self {
            score,
            omega_a,
            omega_b,
        }
    }

    pub fn labeled(score: f64, class: Class) -> Self {
        match class {
            Class::A => Self::new(score, 1.0, 0.0),
            Class::B => Self::new(score, 0.0, 1.0),
        }
    }

    pub fn weight(&self, class: Class) -> f64 {
        match class {
            Class::A => self.omega_a,
            Class::B => self.omega_b,
        }
    }
}

/// The normalized weight pair `(w1, w2)`, `w1 = P(A|X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    w1: f64,
    w2: f64,
}

impl SoftLabel {
    pub fn new(w1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w1) {
            return Err(Error::InvalidScore(w1));
        }
        Ok(Self { w1, w2: 1.0 - w1 })
    }

    pub fn from_weights(omega_a: f64, omega_b: f64) -> Result<Self> {
        Self::new(posterior_from_weights(omega_a, omega_b)?)
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }
}

/// Natural-log odds of class A.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogOdds(pub f64);

impl LogOdds {
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn probability(self) -> f64 {
        sigmoid(self.0)
    }
}

/// A decision threshold held both as a probability `theta` and as the
/// log-odds offset `c = log((1 - theta) / theta)`.
///
/// A score is classified as A when it is strictly greater than `theta`, which
/// is the same as `c + log_odds(score) > 0`. For very large `|c|` the
/// probability form saturates to 0 or 1 in double precision; decisions always
/// use `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    theta: f64,
    c: f64,
}

impl Threshold {
    pub const HALF: Threshold = Threshold { theta: 0.5, c: 0.0 };

    pub fn from_theta(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Domain(format!(
                "theta must lie in (0, 1), got {theta}"
            )));
        }
        let c = (1.0 - theta).ln() - theta.ln();
        Ok(Self { theta, c })
    }

    pub fn from_c(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Domain(format!(
                "log-odds offset must be finite, got {c}"
            )));
        }
        // theta = 1 / (1 + e^c) = sigmoid(-c)
        Ok(Self {
            theta: sigmoid(-c),
            c,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Decision for an accumulated log-odds value.
    pub fn classify_log_odds(&self, q: f64) -> Class {
        if self.c + q > 0.0 {
            Class::A
        } else {
            Class::B
        }
    }
}

fn check_weights(omega_a: f64, omega_b: f64) -> Result<()> {
    if !(omega_a >= 0.0 && omega_b >= 0.0) || !omega_a.is_finite() || !omega_b.is_finite() {
        return Err(Error::InvalidInstance(format!(
            "weights must be finite and non-negative, got ({omega_a}, {omega_b})"
        )));
    }
    if omega_a + omega_b <= 0.0 {
        return Err(Error::InvalidInstance("both weights are zero".into()));
    }
    Ok(())
}

/// `P(A|X) = omega_a / (omega_a + omega_b)`.
pub fn posterior_from_weights(omega_a: f64, omega_b: f64) -> Result<f64> {
    check_weights(omega_a, omega_b)?;
    Ok(omega_a / (omega_a + omega_b))
}

/// Log-odds of a score, clamped to `[DEFAULT_EPSILON, 1 - DEFAULT_EPSILON]`.
pub fn log_odds(p: f64) -> Result<LogOdds> {
    log_odds_with(p, DEFAULT_EPSILON)
}

pub fn log_odds_with(p: f64, epsilon: f64) -> Result<LogOdds> {
    if p.is_nan() {
        return Err(Error::InvalidScore(p));
    }
    Ok(LogOdds(clamped_log_odds(p, epsilon)))
}

/// Unchecked variant for hot loops; NaN propagates.
#[inline]
pub(crate) fn clamped_log_odds(p: f64, epsilon: f64) -> f64 {
    let p = p.clamp(epsilon, 1.0 - epsilon);
    p.ln() - (-p).ln_1p()
}

/// `1 / (1 + e^{-q})`, evaluated without overflow for either sign of `q`.
#[inline]
pub fn sigmoid(q: f64) -> f64 {
    if q >= 0.0 {
        1.0 / (1.0 + (-q).exp())
    } else {
        let e = q.exp();
        e / (1.0 + e)
    }
}
