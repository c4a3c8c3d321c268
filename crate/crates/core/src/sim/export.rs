use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::experiment::{ExperimentRun, Metric, MetricsTable};
use crate::sim::{ScenarioConfig, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ScenarioConfig,
    pub base_seed: u64,
    pub repetition_seeds: Vec<u64>,
    pub w_star: Vec<f64>,
    pub trials_per_repetition: usize,
    pub failed_per_repetition: Vec<usize>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl Manifest {
    pub fn for_run(run: &ExperimentRun) -> Self {
        let t = &run.table;
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: t.config.clone(),
            base_seed: t.config.base_seed,
            repetition_seeds: t.repetitions.iter().map(|r| r.seed).collect(),
            w_star: t.w_star.clone(),
            trials_per_repetition: t.config.trials,
            failed_per_repetition: t.repetitions.iter().map(|r| r.n_failed).collect(),
            started_unix: run.started_unix,
            finished_unix: run.finished_unix,
        }
    }
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn metrics_rows(table: &MetricsTable) -> Vec<[String; 4]> {
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        let coords: Vec<Option<usize>> = if metric.per_coordinate() {
            (0..table.dim()).map(Some).collect()
        } else {
            vec![None]
        };
        for c in coords {
            let coord = c.map_or(String::new(), |j| j.to_string());
            let j = c.unwrap_or(0);
            for rep in &table.repetitions {
                rows.push([
                    metric.name().to_string(),
                    coord.clone(),
                    rep.repetition.to_string(),
                    rep.value(metric, j).to_string(),
                ]);
            }
            let agg = table.summary(metric, j);
            for (label, v) in [("mean", agg.mean), ("ci95", agg.ci95)] {
                rows.push([metric.name().to_string(), coord.clone(), label.into(), v.to_string()]);
            }
        }
    }
    rows
}

fn write_metrics(path: &Path, table: &MetricsTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["metric", "coordinate", "repetition", "value"])
        .map_err(|e| csv_error(path, e))?;
    for row in metrics_rows(table) {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_trials(path: &Path, d: usize, records: &[TrialRecord]) -> Result<()> {
    let mut header = vec!["repetition".to_string(), "trial".into(), "method".into()];
    for prefix in ["w", "std", "u"] {
        header.extend((0..d).map(|j| format!("{prefix}{j}")));
    }
    header.push("chi2".into());
    header.push("reject_model".into());
    header.extend((0..d).map(|j| format!("reject_w{j}")));
    header.push("failed".into());

    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![r.repetition.to_string(), r.trial.to_string(), r.method.to_string()];
        match &r.stats {
            Some(s) => {
                for v in [&s.w, &s.std, &s.u] {
                    row.extend(v.iter().map(f64::to_string));
                }
                row.push(s.chi2.to_string());
                row.push(s.reject_model.to_string());
                row.extend(s.reject_coef.iter().map(bool::to_string));
            }
            None => row.extend(std::iter::repeat(String::new()).take(5 * d + 2)),
        }
        row.push(r.failed().to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `metrics.csv`, `trials.csv` and `manifest.json` into `out_dir`,
/// creating it if needed. Returns the three paths.
pub fn export_results(run: &ExperimentRun, out_dir: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = dir.join("metrics.csv");
    let trials = dir.join("trials.csv");
    let manifest = dir.join("manifest.json");
    write_metrics(&metrics, &run.table)?;
    write_trials(&trials, run.table.dim(), &run.records)?;
    let json = serde_json::to_string_pretty(&Manifest::for_run(run))?;
    fs::write(&manifest, json + "\n").map_err(|e| Error::io(&manifest, e))?;
    Ok([metrics, trials, manifest])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::GroundTruth;
    use crate::sim::{run_experiment, Method, RunOptions};

    fn tiny_run(trials: usize) -> ExperimentRun {
        let cfg = ScenarioConfig {
            n_unlabeled: 100,
            trials,
            repetitions: 2,
            ..ScenarioConfig::paper(GroundTruth::Square, Method::OursL)
        };
        run_experiment(&cfg, RunOptions { workers: 1 }).unwrap()
    }

    #[test]
    fn empty_trial_list_gives_header_only() {
        let mut run = tiny_run(3);
        run.records.clear();
        let dir = tempfile::tempdir().unwrap();
        export_results(&run, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(
            text,
            "repetition,trial,method,w0,w1,std0,std1,u0,u1,chi2,reject_model,reject_w0,reject_w1,failed\n"
        );
    }

    #[test]
    fn re_export_is_byte_identical() {
        let run = tiny_run(10);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        export_results(&run, a.path()).unwrap();
        export_results(&run, b.path()).unwrap();
        for f in ["metrics.csv", "trials.csv", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn metrics_rows_carry_aggregates() {
        let run = tiny_run(10);
        let rows = metrics_rows(&run.table);
        let ks: Vec<_> = rows.iter().filter(|r| r[0] == "ks_chi2").collect();
        assert_eq!(ks.len(), 4);
        assert_eq!(ks[2][2], "mean");
        assert_eq!(ks[3][2], "ci95");
        let bias_w1: Vec<_> = rows.iter().filter(|r| r[0] == "bias" && r[1] == "1").collect();
        assert_eq!(bias_w1.len(), 4);
    }

    #[test]
    fn unwritable_directory_names_the_path() {
        let run = tiny_run(2);
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, "x").unwrap();
        let err = export_results(&run, &file).unwrap_err();
        assert!(err.to_string().contains("occupied"));
    }
}
