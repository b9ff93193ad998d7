//! The `multinst` command-line tool.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 degenerate data,
//! 4 Monte Carlo validation failure.

pub mod format;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytic::{analytic_auc, analytic_rates, optimal_c, optimal_c_numeric};
use crate::odds::{log_odds, sigmoid, ScoredInstance, Threshold};
use crate::stats::{class_moments, default_theta_grid, weighted_auc};
use crate::synth::{self, GroupSampler, MonteCarlo, SynthConfig, MIN_GROUPS};
use crate::train::{self, ScorerModel, TrainConfig};
use format::{ComparisonRow, MomentsFile, RatesRow, ThresholdFile};

/// Environment variable that overrides the default seed.
pub const SEED_ENV: &str = "MULTINST_SEED";

/// Monte Carlo rows whose deviation exceeds this many standard errors fail
/// `simulate`.
pub const VALIDATION_SIGMAS: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        use crate::Error::*;
        match e {
            Degenerate(_) | InsufficientData(_) => CliError::Degenerate(e.to_string()),
            Domain(_) | InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "multinst",
    version,
    about = "Multi-instance binary classification toolkit"
)]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic weighted dataset.
    Gen(GenArgs),
    /// Fit the logistic scorer on a dataset.
    Train(TrainArgs),
    /// Score a dataset.
    Score(ScoreArgs),
    /// Estimate log-odds moments and single-instance AUC from a scores file.
    Estimate(EstimateArgs),
    /// Tabulate analytic TPR/FPR/MISS/AUC over group sizes and thresholds.
    Curves(CurvesArgs),
    /// Compute the optimal threshold for a group size.
    Calibrate(CalibrateArgs),
    /// Compare Monte Carlo group rates against the analytic predictions.
    Simulate(SimulateArgs),
    /// Apply an affine map to the log-odds of every score.
    Perturb(PerturbArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON generator config; the calibrated default when omitted.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the generator config actually used.
    #[arg(long)]
    pub config_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    /// JSON training config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[group(id = "scorer", required = true, multiple = false)]
pub struct ScorerChoice {
    /// Model JSON written by `train`.
    #[arg(long, group = "scorer")]
    pub model: Option<PathBuf>,
    /// Use the instance's own weights, `omega_a / (omega_a + omega_b)`.
    #[arg(long, group = "scorer")]
    pub from_weights: bool,
    /// Exact observed-feature posterior of the generator config.
    #[arg(long, group = "scorer")]
    pub ideal: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerChoice,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub scores: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    pub moments: PathBuf,
    /// Group sizes: comma-separated values and inclusive ranges, e.g. `1,2,5..10`.
    #[arg(long, default_value = "1")]
    pub n_list: String,
    /// `default` (999 points), a comma-separated list, or `lo:hi:count`.
    #[arg(long, default_value = "default")]
    pub theta_grid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    pub moments: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scores: PathBuf,
    #[arg(long, default_value = "1,2,5,10,25,50,100,200")]
    pub n_list: String,
    #[arg(long, default_value_t = 100_000)]
    pub groups: usize,
    #[arg(long, conflicts_with = "use_optimal")]
    pub theta: Option<f64>,
    /// Use the closed-form optimal threshold for each group size.
    #[arg(long)]
    pub use_optimal: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    pub scores: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when absent.
fn emit<F>(path: Option<&Path>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match path {
        Some(p) => {
            let file =
                File::create(p).map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()
                .map_err(|e| CliError::Other(format!("{}: {e}", p.display())))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn emit_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    emit(path, |w| {
        w.write_all(text.as_bytes())
            .map_err(|e| CliError::Other(format!("write: {e}")))
    })
}

/// `--seed`, else `MULTINST_SEED`, else `fallback`.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(fallback),
    }
}

/// Parses `1,2,5..10` into group sizes.
pub fn parse_n_list(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("invalid group-size list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b
                .trim()
                .trim_start_matches('=')
                .parse()
                .map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// Parses `default`, `0.1,0.5`, or `lo:hi:count` into a theta grid.
pub fn parse_theta_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid theta grid {text:?}"));
    let text = text.trim();
    let grid: Vec<f64> = if text == "default" {
        default_theta_grid()
    } else if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        match count {
            0 => return Err(bad()),
            1 => vec![lo],
            _ => (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(bad());
    }
    Ok(grid)
}

fn read_moments(path: &Path) -> Result<MomentsFile, CliError> {
    format::from_json(&read_text(path)?, &path.display().to_string())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads;
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    crate::par::with_threads(threads, move || match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Curves(a) => cmd_curves(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Perturb(a) => cmd_perturb(a),
    })
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => format::from_json::<SynthConfig>(&read_text(p)?, &p.display().to_string())?,
        None => SynthConfig::default(),
    };
    config.seed = resolve_seed(a.seed, config.seed)?;
    config.validate()?;
    let m = usize::try_from(a.m).map_err(|_| CliError::Usage("--m too large".into()))?;
    let data = synth::generate(&config, m)?;
    emit(a.out.as_deref(), |w| format::write_dataset(w, &data))?;
    if let Some(p) = &a.config_out {
        emit_text(Some(p), &format::to_json(&config))?;
    }
    let (wa, wb) = data
        .iter()
        .fold((0.0, 0.0), |(x, y), i| (x + i.omega_a, y + i.omega_b));
    eprintln!(
        "generated m={} d={} observed_dims={:?} total_omega_a={wa:.6} total_omega_b={wb:.6}",
        data.len(),
        config.dim,
        config.observed_dims
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => format::from_json::<TrainConfig>(&read_text(p)?, &p.display().to_string())?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    config.seed = resolve_seed(a.seed, config.seed)?;
    let data = format::read_dataset(open(&a.dataset)?)?;
    let (model, trace) = match train::fit(&data, &config) {
        Ok(v) => v,
        Err(crate::Error::Diverged { epoch, trace }) => {
            if let Some(p) = &a.trace_out {
                emit(Some(p), |w| format::write_trace(w, &trace))?;
            }
            return Err(CliError::Other(format!(
                "training diverged at epoch {epoch}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    emit_text(Some(&a.model_out), &(model.to_json() + "\n"))?;
    if let Some(p) = &a.trace_out {
        emit(Some(p), |w| format::write_trace(w, &trace))?;
    }
    if let Some(last) = trace.last() {
        eprintln!(
            "trained {} epochs: loss_val={:.6} auc_val={:.6}",
            trace.len(),
            last.loss_val,
            last.auc_val
        );
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<(), CliError> {
    let data = format::read_dataset(open(&a.dataset)?)?;
    let scored = if let Some(p) = &a.scorer.model {
        let model = ScorerModel::from_json(&read_text(p)?)?;
        synth::score_dataset(&data, |x| model.score(x))?
    } else if let Some(p) = &a.scorer.ideal {
        let config: SynthConfig = format::from_json(&read_text(p)?, &p.display().to_string())?;
        config.validate()?;
        synth::score_dataset(&data, |x| config.observed_posterior(x))?
    } else {
        synth::score_by_weights(&data)?
    };
    emit(a.out.as_deref(), |w| format::write_scores(w, &scored))
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), CliError> {
    let scored = format::read_scores(open(&a.scores)?)?;
    let moments = class_moments(&scored)?;
    let auc = weighted_auc(&scored)?;
    emit_text(
        a.out.as_deref(),
        &format::to_json(&MomentsFile::new(&moments, auc)),
    )
}

fn cmd_curves(a: CurvesArgs) -> Result<(), CliError> {
    let moments = read_moments(&a.moments)?.moments()?;
    let ns = parse_n_list(&a.n_list)?;
    let grid = parse_theta_grid(&a.theta_grid)?;
    let mut rows = Vec::with_capacity(ns.len() * grid.len());
    for &n in &ns {
        let auc_n = analytic_auc(&moments, n)?;
        for &theta in &grid {
            let t = Threshold::from_theta(theta)?;
            let r = analytic_rates(&moments, n, t)?;
            rows.push(RatesRow {
                n,
                theta,
                c: t.c(),
                tpr: r.tpr,
                fpr: r.fpr,
                miss: r.miss,
                auc_n,
            });
        }
    }
    emit(a.out.as_deref(), |w| format::write_rates(w, &rows))
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let moments = read_moments(&a.moments)?.moments()?;
    let opt = optimal_c(&moments, a.n)?;
    let numeric = optimal_c_numeric(&moments, a.n)?;
    let out = ThresholdFile {
        n: a.n,
        c_opt: opt.c_opt,
        theta_opt: opt.theta_opt(),
        sigma_discrepancy: opt.sigma_discrepancy,
        c_opt_numeric: numeric,
    };
    emit_text(a.out.as_deref(), &format::to_json(&out))
}

/// Binomial standard error used for the self-validation check: the larger of
/// the Monte Carlo estimate's own and the one implied by the prediction, so a
/// saturated estimate (0 or 1) is not held to zero tolerance.
fn check_se(mc_se: f64, analytic: f64, groups: usize) -> f64 {
    mc_se.max((analytic * (1.0 - analytic) / groups as f64).sqrt())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    if a.groups < MIN_GROUPS {
        return Err(CliError::Usage(format!(
            "--groups must be at least {MIN_GROUPS}, got {}",
            a.groups
        )));
    }
    let fixed = match a.theta {
        Some(t) => Some(Threshold::from_theta(t)?),
        None if a.use_optimal => None,
        None => Some(Threshold::HALF),
    };
    let ns = parse_n_list(&a.n_list)?;
    let seed = resolve_seed(a.seed, 0)?;
    let scored = format::read_scores(open(&a.scores)?)?;
    let moments = class_moments(&scored)?;
    let sampler = GroupSampler::new(&scored)?;
    let mc = MonteCarlo::new(a.groups, seed)?;

    let mut rows = Vec::with_capacity(ns.len());
    let mut failures = Vec::new();
    for &n in &ns {
        let threshold = match fixed {
            Some(t) => t,
            None => optimal_c(&moments, n)?.threshold,
        };
        let size =
            usize::try_from(n).map_err(|_| CliError::Usage("group size too large".into()))?;
        let (tpr, fpr) = mc.rates(&sampler, size, threshold)?;
        let auc = mc.auc(&sampler, size)?;
        let pred = analytic_rates(&moments, n, threshold)?;
        let auc_pred = analytic_auc(&moments, n)?;
        for (name, est, want) in [
            ("tpr", tpr, pred.tpr),
            ("fpr", fpr, pred.fpr),
            ("auc", auc, auc_pred),
        ] {
            let se = check_se(est.std_error, want, a.groups);
            if (est.value - want).abs() > VALIDATION_SIGMAS * se {
                failures.push(format!(
                    "n={n} {name}: mc={:.6} analytic={want:.6} se={se:.2e}",
                    est.value
                ));
            }
        }
        rows.push(ComparisonRow {
            n,
            theta: threshold.theta(),
            tpr_mc: tpr.value,
            tpr_se: tpr.std_error,
            tpr_analytic: pred.tpr,
            fpr_mc: fpr.value,
            fpr_se: fpr.std_error,
            fpr_analytic: pred.fpr,
            auc_mc: auc.value,
            auc_se: auc.std_error,
            auc_analytic: auc_pred,
        });
    }
    emit(a.out.as_deref(), |w| format::write_comparison(w, &rows))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} value(s) outside {VALIDATION_SIGMAS} standard errors:\n  {}",
            failures.len(),
            failures.join("\n  ")
        )))
    }
}

fn cmd_perturb(a: PerturbArgs) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha.is_finite() && a.beta.is_finite()) {
        return Err(CliError::Usage(
            "--alpha must be positive and --beta finite".into(),
        ));
    }
    let scored = format::read_scores(open(&a.scores)?)?;
    let moved = scored
        .iter()
        .map(|s| {
            let q = log_odds(s.score)?.get();
            Ok(ScoredInstance::new(
                sigmoid(a.alpha * q + a.beta),
                s.omega_a,
                s.omega_b,
            ))
        })
        .collect::<Result<Vec<_>, crate::Error>>()?;
    emit(a.out.as_deref(), |w| format::write_scores(w, &moved))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_list_parsing() {
        assert_eq!(parse_n_list("1,2,5").unwrap(), vec![1, 2, 5]);
        assert_eq!(parse_n_list("1..3,10").unwrap(), vec![1, 2, 3, 10]);
        assert_eq!(parse_n_list("4..=5").unwrap(), vec![4, 5]);
        for bad in ["", "0", "3..1", "a", "1,,x"] {
            assert!(
                matches!(parse_n_list(bad), Err(CliError::Usage(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_theta_grid("default").unwrap().len(), 999);
        assert_eq!(parse_theta_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(
            parse_theta_grid("0.25:0.75:3").unwrap(),
            vec![0.25, 0.5, 0.75]
        );
        for bad in ["", "0", "1", "0.1:0.9", "0.1:1:3", "x"] {
            assert!(parse_theta_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn error_codes() {
        assert_eq!(
            CliError::from(crate::Error::Degenerate("x".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(crate::Error::InsufficientData("x".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(crate::Error::Domain("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(crate::Error::InvalidScore(f64::NAN)).exit_code(),
            1
        );
        assert_eq!(CliError::Validation(String::new()).exit_code(), 4);
    }

    #[test]
    fn check_se_floor() {
        assert_eq!(check_se(0.0, 0.5, 100), 0.05);
        assert_eq!(check_se(0.1, 0.5, 100), 0.1);
    }
}
