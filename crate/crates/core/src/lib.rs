//! Multi-instance binary classification.
//!
//! A single-instance scorer estimates `P(A|X)` for one instance. When a group
//! of `N` instances is known to share one class, the group posterior is the
//! normalized product of the single-instance posteriors, which in log-odds
//! space is a plain sum. This crate provides:
//!
//! * [`odds`]: weights, posteriors, log-odds and the dual threshold form.
//! * [`aggregate`]: the multi-instance posterior and decision rule.
//! * [`stats`]: weighted empirical estimators (log-odds moments, ROC, AUC).
//! * [`analytic`]: Gaussian/erf predictions of TPR, FPR, MISS and AUC as
//!   functions of the group size, and the optimal threshold.
//! * [`synth`]: a Gaussian generator with known posteriors and the Monte
//!   Carlo group-resampling oracle.
//! * [`train`]: a logistic scorer trained on soft-label cross-entropy.
//! * [`cli`]: the `multinst` command-line front end.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; see [`par`].
//!
//! ```
//! use multinst::analytic::{analytic_rates, optimal_c};
//! use multinst::stats::class_moments;
//! use multinst::synth::{generate, score_dataset, GroupSampler, MonteCarlo, SynthConfig};
//!
//! let config = SynthConfig::default();
//! let data = generate(&config, 20_000)?;
//! let scored = score_dataset(&data, |x| config.observed_posterior(x))?;
//! let moments = class_moments(&scored)?;
//!
//! let opt = optimal_c(&moments, 100)?;
//! let predicted = analytic_rates(&moments, 100, opt.threshold)?;
//! let sampler = GroupSampler::new(&scored)?;
//! let (tpr, _) = MonteCarlo::new(10_000, 7)?.rates(&sampler, 100, opt.threshold)?;
//! assert!((tpr.value - predicted.tpr).abs() < 5.0 * tpr.std_error);
//! # Ok::<(), multinst::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod analytic;
pub mod cli;
mod error;
pub mod odds;
pub mod par;
pub mod special;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use odds::{
    log_odds, posterior_from_weights, sigmoid, Class, LogOdds, ScoredInstance, SoftLabel,
    Threshold, WeightedInstance, DEFAULT_EPSILON,
};
pub use stats::ClassMoments;
