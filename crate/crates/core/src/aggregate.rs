//! The multi-instance classifier.
//!
//! For a group of instances that share one class the group posterior is
//!
//! ```text
//!             prod p_i
//! P(A|{X}) = ----------------------
//!            prod p_i + prod (1 - p_i)
//! ```
//!
//! which equals `sigmoid(sum_i log(p_i / (1 - p_i)))`. Everything here works
//! on the log-odds sum so groups of any size stay finite.

use crate::odds::{clamped_log_odds, sigmoid, Class, Threshold, DEFAULT_EPSILON};
use crate::{Error, Result};

fn ensure_non_empty(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Domain(
            "group must contain at least one score".into(),
        ));
    }
    Ok(())
}

/// Sum of the clamped single-instance log-odds of a group.
pub fn group_log_odds(scores: &[f64]) -> Result<f64> {
    ensure_non_empty(scores)?;
    let mut sum = 0.0;
    for &p in scores {
        if p.is_nan() {
            return Err(Error::InvalidScore(p));
        }
        sum += clamped_log_odds(p, DEFAULT_EPSILON);
    }
    Ok(sum)
}

/// Group posterior `P(A|{X_i})`.
pub fn multi_posterior(scores: &[f64]) -> Result<f64> {
    group_log_odds(scores).map(sigmoid)
}

/// Decides the class of a whole group: A iff `c + sum_i q_i > 0`.
pub fn classify_group(scores: &[f64], threshold: Threshold) -> Result<Class> {
    group_log_odds(scores).map(|q| threshold.classify_log_odds(q))
}
