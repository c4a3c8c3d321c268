use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::exact_linear_approx_analytic;
use crate::numerics::{chi2_cdf, ks_statistic, normal_cdf, SimRng};
use crate::sim::trial::run_trial;
use crate::sim::{ScenarioConfig, TrialRecord};

/// `z` quantile of the two-sided 95% interval used for every aggregate.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
}

/// Seed of repetition `rep`.
pub fn repetition_seed(base_seed: u64, rep: usize) -> u64 {
    SimRng::substream(base_seed, rep as u64).next_u64()
}

/// Seed of trial `trial` within a repetition.
pub fn trial_seed(rep_seed: u64, trial: usize) -> u64 {
    SimRng::substream(rep_seed, trial as u64).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// KS distance of the χ² statistics from `χ²_d`.
    KsChi2,
    /// KS distance of `u_j` from the standard normal.
    KsNormal,
    /// Mean reported standard error `σ̄_j`.
    Efficiency,
    /// `mean(w_j) - w*_j`
    Bias,
    MeanEstimate,
    RejectModel,
    RejectCoef,
    FailureRate,
    TrainLoss,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::KsChi2,
        Metric::KsNormal,
        Metric::Efficiency,
        Metric::Bias,
        Metric::MeanEstimate,
        Metric::RejectModel,
        Metric::RejectCoef,
        Metric::FailureRate,
        Metric::TrainLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::KsChi2 => "ks_chi2",
            Metric::KsNormal => "ks_normal",
            Metric::Efficiency => "efficiency",
            Metric::Bias => "bias",
            Metric::MeanEstimate => "mean_estimate",
            Metric::RejectModel => "reject_model",
            Metric::RejectCoef => "reject_coef",
            Metric::FailureRate => "failure_rate",
            Metric::TrainLoss => "train_loss",
        }
    }

    pub fn per_coordinate(self) -> bool {
        matches!(
            self,
            Metric::KsNormal
                | Metric::Efficiency
                | Metric::Bias
                | Metric::MeanEstimate
                | Metric::RejectCoef
        )
    }
}

/// Metrics of one repetition, computed over its successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionMetrics {
    pub repetition: usize,
    pub seed: u64,
    pub n_trials: usize,
    pub n_failed: usize,
    pub ks_chi2: f64,
    pub ks_normal: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub reject_model: f64,
    pub reject_coef: Vec<f64>,
    pub train_loss: f64,
}

impl RepetitionMetrics {
    fn compute(repetition: usize, seed: u64, records: &[TrialRecord], w_star: &[f64]) -> Result<Self> {
        let d = w_star.len();
        let ok: Vec<_> = records.iter().filter_map(|r| r.stats.as_ref()).collect();
        let n_ok = ok.len();
        let mean = |f: &dyn Fn(usize) -> f64| -> f64 {
            if n_ok == 0 {
                f64::NAN
            } else {
                (0..n_ok).map(f).sum::<f64>() / n_ok as f64
            }
        };
        let ks = |values: Vec<f64>, cdf: &dyn Fn(f64) -> f64| -> Result<f64> {
            if values.is_empty() {
                return Ok(f64::NAN);
            }
            Ok(ks_statistic(&values, cdf)?.statistic)
        };
        let chi2_law = |x: f64| chi2_cdf(x.max(0.0), d as u32).unwrap_or(f64::NAN);
        let ks_chi2 = ks(ok.iter().map(|s| s.chi2).collect(), &chi2_law)?;
        let ks_normal = (0..d)
            .map(|j| ks(ok.iter().map(|s| s.u[j]).collect(), &normal_cdf))
            .collect::<Result<Vec<_>>>()?;
        let mean_estimate: Vec<f64> = (0..d).map(|j| mean(&|i| ok[i].w[j])).collect();
        Ok(Self {
            repetition,
            seed,
            n_trials: records.len(),
            n_failed: records.len() - n_ok,
            ks_chi2,
            ks_normal,
            efficiency: (0..d).map(|j| mean(&|i| ok[i].std[j])).collect(),
            bias: (0..d).map(|j| mean_estimate[j] - w_star[j]).collect(),
            mean_estimate,
            reject_model: mean(&|i| f64::from(u8::from(ok[i].reject_model))),
            reject_coef: (0..d)
                .map(|j| mean(&|i| f64::from(u8::from(ok[i].reject_coef[j]))))
                .collect(),
            train_loss: mean(&|i| ok[i].train_loss),
        })
    }

    /// Value of `metric` (at `coordinate` for per-coordinate metrics).
    pub fn value(&self, metric: Metric, coordinate: usize) -> f64 {
        match metric {
            Metric::KsChi2 => self.ks_chi2,
            Metric::KsNormal => self.ks_normal[coordinate],
            Metric::Efficiency => self.efficiency[coordinate],
            Metric::Bias => self.bias[coordinate],
            Metric::MeanEstimate => self.mean_estimate[coordinate],
            Metric::RejectModel => self.reject_model,
            Metric::RejectCoef => self.reject_coef[coordinate],
            Metric::FailureRate => self.n_failed as f64 / self.n_trials as f64,
            Metric::TrainLoss => self.train_loss,
        }
    }
}

/// Mean over repetitions and the 95% half-width `1.96·s/√R`, where `s` is
/// the population standard deviation of the repetition values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci95: f64,
}

impl Aggregate {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
    Aggregate {
        mean,
        ci95: Z95 * var.sqrt() / r.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub config: ScenarioConfig,
    pub w_star: Vec<f64>,
    pub repetitions: Vec<RepetitionMetrics>,
}

impl MetricsTable {
    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn series(&self, metric: Metric, coordinate: usize) -> Vec<f64> {
        self.repetitions.iter().map(|r| r.value(metric, coordinate)).collect()
    }

    pub fn summary(&self, metric: Metric, coordinate: usize) -> Aggregate {
        aggregate(&self.series(metric, coordinate))
    }

    pub fn total_failed(&self) -> usize {
        self.repetitions.iter().map(|r| r.n_failed).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub table: MetricsTable,
    /// All trial records in (repetition, trial) order.
    pub records: Vec<TrialRecord>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// `repetitions × trials` independent trials. Trials of a repetition run on a
/// worker pool; records come back in trial order and depend only on the
/// base seed.
pub fn run_experiment(cfg: &ScenarioConfig, opts: RunOptions) -> Result<ExperimentRun> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let started_unix = unix_now();
    let w_star: Vec<f64> = exact_linear_approx_analytic(cfg.ground_truth).as_slice().to_vec();
    let mut records = Vec::with_capacity(cfg.repetitions * cfg.trials);
    let mut repetitions = Vec::with_capacity(cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let rep_seed = repetition_seed(cfg.base_seed, rep);
        let batch: Vec<TrialRecord> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| TrialRecord {
                    repetition: rep,
                    trial: t,
                    ..run_trial(cfg, trial_seed(rep_seed, t))
                })
                .collect()
        });
        repetitions.push(RepetitionMetrics::compute(rep, rep_seed, &batch, &w_star)?);
        records.extend(batch);
    }
    Ok(ExperimentRun {
        table: MetricsTable {
            config: cfg.clone(),
            w_star,
            repetitions,
        },
        records,
        started_unix,
        finished_unix: unix_now(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub coordinate: usize,
    /// Per-repetition `mean(w_j) - w*_j`.
    pub per_repetition: Vec<f64>,
    pub aggregate: Aggregate,
}

impl BiasRow {
    pub fn contains_zero(&self) -> bool {
        self.aggregate.contains(0.0)
    }

    pub fn entirely_negative(&self) -> bool {
        self.aggregate.upper() < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub method: crate::sim::Method,
    pub rows: Vec<BiasRow>,
}

impl BiasTable {
    pub fn from_metrics(table: &MetricsTable) -> Self {
        let rows = (0..table.dim())
            .map(|j| {
                let per_repetition = table.series(Metric::Bias, j);
                BiasRow {
                    coordinate: j,
                    aggregate: aggregate(&per_repetition),
                    per_repetition,
                }
            })
            .collect();
        Self {
            method: table.config.method,
            rows,
        }
    }
}

/// [`run_experiment`] reduced to the per-coordinate bias with its interval.
/// Use [`ScenarioConfig::bias_protocol`] for the small-sample setting.
pub fn run_bias_experiment(cfg: &ScenarioConfig, opts: RunOptions) -> Result<(BiasTable, ExperimentRun)> {
    let run = run_experiment(cfg, opts)?;
    Ok((BiasTable::from_metrics(&run.table), run))
}
