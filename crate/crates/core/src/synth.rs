//! Synthetic weighted datasets and the Monte Carlo group oracle.
//!
//! Instances are drawn from the mixture `pi N(mean_a, s^2 I) + (1 - pi)
//! N(mean_b, s^2 I)` and carry importance weights `omega_a = f_a / m`,
//! `omega_b = f_b / m`, where `m` is the mixture density. Weighted averages
//! over the sample then estimate class-conditional expectations, and
//! `omega_a / (omega_a + omega_b)` is the exact posterior from all `d`
//! coordinates. Only `observed_dims` are kept as features, which hides part
//! of the information the weights were computed from.
//!
//! Randomness comes from ChaCha8 with one stream per fixed-size batch, so
//! every output is a function of the seed alone, whatever the thread count.

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::odds::{
    clamped_log_odds, sigmoid, Class, ScoredInstance, Threshold, WeightedInstance, DEFAULT_EPSILON,
};
use crate::par::{map_indices, Schedule};
use crate::special::normal_quantile;
use crate::{Error, Result};

const GEN_BATCH: usize = 8192;
const MC_BATCH: usize = 1024;
/// Smallest number of Monte Carlo groups accepted.
pub const MIN_GROUPS: usize = 100;

const STREAM_GENERATE: u64 = 1 << 40;
const STREAM_RATES_A: u64 = 2 << 40;
const STREAM_RATES_B: u64 = 3 << 40;
const STREAM_AUC: u64 = 4 << 40;

fn batch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator configuration. `observed_dims` are 1-based coordinate indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub scale: f64,
    pub observed_dims: Vec<usize>,
    #[serde(default = "default_prior")]
    pub class_prior: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_prior() -> f64 {
    0.5
}

impl Default for SynthConfig {
    /// Four dimensions, two of them observed. The ideal scorer on the
    /// observed pair has AUC 0.535 and the ideal scorer on all four has AUC
    /// 0.615.
    fn default() -> Self {
        Self::calibrated(4, 2, 0.535, 0.615, 0).expect("default calibration targets are valid")
    }
}

impl SynthConfig {
    /// Builds a config whose ideal scorers hit the requested single-instance
    /// AUCs. The first `observed` of `dim` coordinates are observed.
    ///
    /// With unit scale and mean difference `delta`, the log-likelihood ratio
    /// is Gaussian with mean `±|delta|^2 / 2` and variance `|delta|^2`, so the
    /// ideal AUC is `Phi(|delta| / sqrt 2)`. The observed separation is split
    /// evenly over the observed coordinates and the remainder over the hidden
    /// ones; class means are `±delta / 2`.
    pub fn calibrated(
        dim: usize,
        observed: usize,
        auc_observed: f64,
        auc_complete: f64,
        seed: u64,
    ) -> Result<Self> {
        if observed == 0 || observed > dim {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= observed <= dim, got {observed} of {dim}"
            )));
        }
        let valid = |a: f64| a > 0.5 && a < 1.0;
        if !valid(auc_observed) || !valid(auc_complete) {
            return Err(Error::InvalidConfig(
                "target AUCs must lie in (0.5, 1)".into(),
            ));
        }
        let sep_obs = 2f64.sqrt() * normal_quantile(auc_observed);
        let sep_all = 2f64.sqrt() * normal_quantile(auc_complete);
        let hidden = dim - observed;
        if hidden == 0 && (auc_complete - auc_observed).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "without hidden coordinates both AUCs must agree".into(),
            ));
        }
        if hidden > 0 && sep_all <= sep_obs {
            return Err(Error::InvalidConfig(
                "complete AUC must exceed observed AUC".into(),
            ));
        }
        let per_obs = sep_obs / (observed as f64).sqrt();
        let per_hidden = if hidden > 0 {
            (sep_all * sep_all - sep_obs * sep_obs).sqrt() / (hidden as f64).sqrt()
        } else {
            0.0
        };
        let delta: Vec<f64> = (0..dim)
            .map(|i| if i < observed { per_obs } else { per_hidden })
            .collect();
        Ok(Self {
            dim,
            mean_a: delta.iter().map(|d| 0.5 * d).collect(),
            mean_b: delta.iter().map(|d| -0.5 * d).collect(),
            scale: 1.0,
            observed_dims: (1..=observed).collect(),
            class_prior: 0.5,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.mean_a.len() != self.dim || self.mean_b.len() != self.dim {
            return bad(format!("class means must have length {}", self.dim));
        }
        if self
            .mean_a
            .iter()
            .chain(&self.mean_b)
            .any(|v| !v.is_finite())
        {
            return bad("class means must be finite".into());
        }
        if self.mean_a == self.mean_b {
            return bad("class means coincide".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if self.observed_dims.is_empty() {
            return bad("observed_dims is empty".into());
        }
        let mut seen = vec![false; self.dim];
        for &k in &self.observed_dims {
            if k == 0 || k > self.dim {
                return bad(format!("observed dim {k} outside 1..={}", self.dim));
            }
            if std::mem::replace(&mut seen[k - 1], true) {
                return bad(format!("observed dim {k} listed twice"));
            }
        }
        if !(self.class_prior > 0.0 && self.class_prior < 1.0) {
            return bad(format!(
                "class_prior must lie in (0, 1), got {}",
                self.class_prior
            ));
        }
        Ok(())
    }

    /// Features visible to a scorer.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.observed_dims.iter().map(|&k| full[k - 1]).collect()
    }

    /// `log f_a(x) - log f_b(x)` restricted to the given 0-based coordinates.
    fn llr<I: Iterator<Item = (usize, f64)>>(&self, coords: I) -> f64 {
        let s2 = self.scale * self.scale;
        coords
            .map(|(k, x)| {
                let (a, b) = (self.mean_a[k], self.mean_b[k]);
                ((x - b) * (x - b) - (x - a) * (x - a)) / (2.0 * s2)
            })
            .sum()
    }

    /// Exact `P(A|X)` from all coordinates.
    pub fn true_posterior(&self, full: &[f64]) -> Result<f64> {
        if full.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: full.len(),
            });
        }
        Ok(sigmoid(self.llr(full.iter().copied().enumerate())))
    }

    /// Exact `P(A|X)` given only the observed coordinates, under equal class
    /// weight totals (which the importance weights guarantee).
    pub fn observed_posterior(&self, observed: &[f64]) -> Result<f64> {
        if observed.len() != self.observed_dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.observed_dims.len(),
                found: observed.len(),
            });
        }
        let coords = self
            .observed_dims
            .iter()
            .map(|&k| k - 1)
            .zip(observed.iter().copied());
        Ok(sigmoid(self.llr(coords)))
    }
}

/// Draws `m` instances with all `d` coordinates as features.
pub fn generate_full(config: &SynthConfig, m: usize) -> Result<Vec<WeightedInstance>> {
    config.validate()?;
    if m == 0 {
        return Err(Error::Domain("number of instances must be positive".into()));
    }
    let pi = config.class_prior;
    let batches = m.div_ceil(GEN_BATCH);
    let parts = map_indices(Schedule::default(), batches, |b| {
        let mut rng = batch_rng(config.seed, STREAM_GENERATE | b as u64);
        let len = GEN_BATCH.min(m - b * GEN_BATCH);
        (0..len)
            .map(|_| {
                let mean = if rng.random::<f64>() < pi {
                    &config.mean_a
                } else {
                    &config.mean_b
                };
                let x: Vec<f64> = mean
                    .iter()
                    .map(|mu| mu + config.scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let l = config.llr(x.iter().copied().enumerate());
                // omega = f / (pi f_a + (1 - pi) f_b), written via l = log(f_a / f_b)
                let omega_a = 1.0 / (pi + (1.0 - pi) * (-l).exp());
                let omega_b = 1.0 / (pi * l.exp() + (1.0 - pi));
                WeightedInstance {
                    features: x,
                    omega_a,
                    omega_b,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Draws `m` instances keeping only the observed coordinates as features.
pub fn generate(config: &SynthConfig, m: usize) -> Result<Vec<WeightedInstance>> {
    let mut data = generate_full(config, m)?;
    for inst in &mut data {
        inst.features = config.project(&inst.features);
    }
    Ok(data)
}

/// Scores every instance with `scorer`, keeping its weights.
pub fn score_dataset<F>(data: &[WeightedInstance], scorer: F) -> Result<Vec<ScoredInstance>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    data.iter()
        .map(|inst| {
            Ok(ScoredInstance::new(
                scorer(&inst.features)?,
                inst.omega_a,
                inst.omega_b,
            ))
        })
        .collect()
}

/// Scores every instance by its own weights: the ideal scorer when the
/// weights are a function of the features.
pub fn score_by_weights(data: &[WeightedInstance]) -> Result<Vec<ScoredInstance>> {
    data.iter()
        .map(|inst| {
            Ok(ScoredInstance::new(
                inst.posterior()?,
                inst.omega_a,
                inst.omega_b,
            ))
        })
        .collect()
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_groups: usize,
}

impl McEstimate {
    /// Binomial estimate `v = successes / n` with `se = sqrt(v (1 - v) / n)`.
    pub fn from_fraction(successes: f64, n_groups: usize) -> Self {
        let v = successes / n_groups as f64;
        Self {
            value: v,
            std_error: (v * (1.0 - v) / n_groups as f64).sqrt(),
            n_groups,
        }
    }
}

/// Weighted resampler over a scored dataset, one alias table per class.
#[derive(Debug, Clone)]
pub struct GroupSampler {
    scores: Vec<f64>,
    log_odds: Vec<f64>,
    alias_a: Option<WeightedAliasIndex<f64>>,
    alias_b: Option<WeightedAliasIndex<f64>>,
}

impl GroupSampler {
    pub fn new(scored: &[ScoredInstance]) -> Result<Self> {
        if let Some(bad) = scored.iter().find(|s| s.score.is_nan()) {
            return Err(Error::InvalidScore(bad.score));
        }
        let table = |ws: Vec<f64>| {
            if ws.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidInstance(
                    "weights must be finite and non-negative".into(),
                ));
            }
            Ok(WeightedAliasIndex::new(ws).ok())
        };
        Ok(Self {
            scores: scored.iter().map(|s| s.score).collect(),
            log_odds: scored
                .iter()
                .map(|s| clamped_log_odds(s.score, DEFAULT_EPSILON))
                .collect(),
            alias_a: table(scored.iter().map(|s| s.omega_a).collect())?,
            alias_b: table(scored.iter().map(|s| s.omega_b).collect())?,
        })
    }

    fn alias(&self, class: Class) -> Result<&WeightedAliasIndex<f64>> {
        let table = match class {
            Class::A => self.alias_a.as_ref(),
            Class::B => self.alias_b.as_ref(),
        };
        table.ok_or_else(|| {
            Error::Degenerate(format!("class {class:?} has no weight to sample from"))
        })
    }

    /// Scores of `n` instances drawn with replacement, with probability
    /// proportional to the chosen class's weight.
    pub fn sample_group<R: Rng + ?Sized>(
        &self,
        class: Class,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let alias = self.alias(class)?;
        Ok((0..n).map(|_| self.scores[alias.sample(rng)]).collect())
    }

    #[inline]
    fn group_sum<R: Rng + ?Sized>(
        &self,
        alias: &WeightedAliasIndex<f64>,
        n: usize,
        rng: &mut R,
    ) -> f64 {
        (0..n).map(|_| self.log_odds[alias.sample(rng)]).sum()
    }
}

/// Convenience form of [`GroupSampler::sample_group`].
pub fn sample_group<R: Rng + ?Sized>(
    dataset: &[ScoredInstance],
    class: Class,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    GroupSampler::new(dataset)?.sample_group(class, n, rng)
}

/// Monte Carlo settings shared by the rate and AUC estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub n_groups: usize,
    pub seed: u64,
    pub schedule: Schedule,
}

impl MonteCarlo {
    pub fn new(n_groups: usize, seed: u64) -> Result<Self> {
        if n_groups < MIN_GROUPS {
            return Err(Error::Domain(format!(
                "need at least {MIN_GROUPS} Monte Carlo groups, got {n_groups}"
            )));
        }
        Ok(Self {
            n_groups,
            seed,
            schedule: Schedule::default(),
        })
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    fn batches(&self) -> usize {
        self.n_groups.div_ceil(MC_BATCH)
    }

    fn batch_len(&self, b: usize) -> usize {
        MC_BATCH.min(self.n_groups - b * MC_BATCH)
    }

    fn count<F>(&self, f: F) -> u64
    where
        F: Fn(usize, usize) -> u64 + Sync + Send,
    {
        map_indices(self.schedule, self.batches(), |b| f(b, self.batch_len(b)))
            .into_iter()
            .sum()
    }

    /// Fraction of class-A groups (TPR) and class-B groups (FPR) of size `n`
    /// that the multi-instance rule assigns to A.
    pub fn rates(
        &self,
        sampler: &GroupSampler,
        n: usize,
        threshold: Threshold,
    ) -> Result<(McEstimate, McEstimate)> {
        check_group_size(n)?;
        let (alias_a, alias_b) = (sampler.alias(Class::A)?, sampler.alias(Class::B)?);
        let positives = |alias: &WeightedAliasIndex<f64>, stream: u64| {
            self.count(|b, len| {
                let mut rng = batch_rng(self.seed, stream | b as u64);
                (0..len)
                    .filter(|_| {
                        threshold.classify_log_odds(sampler.group_sum(alias, n, &mut rng))
                            == Class::A
                    })
                    .count() as u64
            })
        };
        let tp = positives(alias_a, STREAM_RATES_A);
        let fp = positives(alias_b, STREAM_RATES_B);
        Ok((
            McEstimate::from_fraction(tp as f64, self.n_groups),
            McEstimate::from_fraction(fp as f64, self.n_groups),
        ))
    }

    /// Fraction of independent (A-group, B-group) pairs in which the A group
    /// has the larger log-odds sum, ties counted one half.
    pub fn auc(&self, sampler: &GroupSampler, n: usize) -> Result<McEstimate> {
        check_group_size(n)?;
        let (alias_a, alias_b) = (sampler.alias(Class::A)?, sampler.alias(Class::B)?);
        // counted in half-units to keep the reduction in integers
        let halves = self.count(|b, len| {
            let mut rng = batch_rng(self.seed, STREAM_AUC | b as u64);
            (0..len)
                .map(|_| {
                    let qa = sampler.group_sum(alias_a, n, &mut rng);
                    let qb = sampler.group_sum(alias_b, n, &mut rng);
                    if qa > qb {
                        2
                    } else if qa == qb {
                        1
                    } else {
                        0
                    }
                })
                .sum::<u64>()
        });
        Ok(McEstimate::from_fraction(
            halves as f64 / 2.0,
            self.n_groups,
        ))
    }
}

fn check_group_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("group size must be at least 1".into()));
    }
    Ok(())
}

/// Monte Carlo TPR and FPR of the multi-instance rule on groups of size `n`.
pub fn mc_rates(
    dataset: &[ScoredInstance],
    n: usize,
    threshold: Threshold,
    n_groups: usize,
    seed: u64,
) -> Result<(McEstimate, McEstimate)> {
    MonteCarlo::new(n_groups, seed)?.rates(&GroupSampler::new(dataset)?, n, threshold)
}

/// Monte Carlo multi-instance AUC on groups of size `n`.
pub fn mc_auc(
    dataset: &[ScoredInstance],
    n: usize,
    n_groups: usize,
    seed: u64,
) -> Result<McEstimate> {
    MonteCarlo::new(n_groups, seed)?.auc(&GroupSampler::new(dataset)?, n)
}
