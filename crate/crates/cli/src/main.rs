use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use linapprox::data::{load_dataset_csv, split_dataset, BoundsPair, Dataset, FeatureVector};
use linapprox::estimator::{
    bias_bound_from_parts, corrected_estimator, estimate_second_moment_inverse,
    exact_linear_approx_analytic, exact_linear_approx_rational, lemma1_range_bound,
    linear_approx_of_predictor, mse_bound, residuals_z, second_moment_concentration_bound,
    ConcentrationConstants, ConfidenceParams, GroundTruth, MomentSource,
};
use linapprox::inference::{baseline_lse_inference, test_all, Hypothesis, Scope};
use linapprox::models::{train_linear, train_mlp, LossSummary, Predictor, TrainConfig};
use linapprox::numerics::linalg::matrix_rows;
use linapprox::numerics::VectorD;
use linapprox::sim::{
    export_results, run_bias_experiment, run_experiment, BiasTable, Method, Metric, MetricsTable,
    RunOptions, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "linapprox", version, about = "Estimate and test the best linear approximation of an unknown function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiments and export metrics.
    Simulate(SimulateArgs),
    /// Estimate w and run significance tests on a CSV dataset.
    Fit(FitArgs),
    /// Evaluate the finite-sample bounds for supplied constants.
    Bounds {
        #[command(subcommand)]
        which: BoundsCommand,
    },
    /// Print the exact linear approximation of a built-in scenario.
    Analytic {
        #[arg(long, value_enum, default_value = "square")]
        scenario: Scenario,
        /// Print exact fractions instead of decimals.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Square,
    Linear,
}

impl From<Scenario> for GroundTruth {
    fn from(s: Scenario) -> Self {
        match s {
            Scenario::Square => GroundTruth::Square,
            Scenario::Linear => GroundTruth::Linear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    BaselineLse,
    OursL,
    OursNn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::BaselineLse => Method::BaselineLse,
            MethodArg::OursL => Method::OursL,
            MethodArg::OursNn => Method::OursNn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    ValidationOnly,
    AllData,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Main,
    Bias,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON scenario config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario used when no config file is given.
    #[arg(long, value_enum, default_value = "square")]
    scenario: Scenario,
    /// `bias` uses the small-sample protocol when no config file is given.
    #[arg(long, value_enum, default_value = "main")]
    experiment: Experiment,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    unlabeled: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Directory for metrics.csv, trials.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column; blank cells mark unlabeled rows.
    #[arg(long, default_value = "y")]
    label: String,
    #[arg(long, value_enum, default_value = "ours-l")]
    method: MethodArg,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Seed for the split and the network initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of labeled rows used for training.
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    /// Comma-separated null hypothesis w_t; all zeros by default.
    #[arg(long, value_delimiter = ',')]
    null: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    a_hat: Option<SourceArg>,
    /// Do not add an intercept feature.
    #[arg(long)]
    no_intercept: bool,
    /// Write the JSON result here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// Inflated range (UB - LB)·δ₀^(-1/(n-1)).
    Lemma1 {
        #[arg(long)]
        lower: f64,
        #[arg(long)]
        upper: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        delta0: f64,
    },
    /// ε and the gap bounds on g¹ and w¹ from the validation loss.
    Mse {
        #[arg(long)]
        mean_loss: f64,
        #[arg(long)]
        n2: usize,
        #[arg(long, default_value_t = 1.0)]
        range: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[command(flatten)]
        eig: Eigen,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Deviation bound of the inverse second moment.
    Concentration {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[command(flatten)]
        consts: Constants,
        #[command(flatten)]
        eig: Eigen,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Per-coordinate bound on the corrected estimator with an assumed range.
    Bias {
        #[arg(long)]
        range: f64,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        n_t: usize,
        /// ‖z̄‖₂
        #[arg(long)]
        z_norm: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[command(flatten)]
        consts: Constants,
        #[command(flatten)]
        eig: Eigen,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
}

#[derive(Args)]
struct Eigen {
    /// Smallest eigenvalue bound m.
    #[arg(long = "m-min", default_value_t = 8.0 - 52f64.sqrt())]
    m: f64,
    /// Largest eigenvalue bound M.
    #[arg(long = "m-max", default_value_t = 8.0 + 52f64.sqrt())]
    big_m: f64,
}

#[derive(Args)]
struct Constants {
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

fn constants(k: f64, c: f64, range: f64, eig: &Eigen) -> Result<ConcentrationConstants> {
    let cc = ConcentrationConstants {
        k,
        c,
        range: BoundsPair::assumed(0.0, range)?,
        m: eig.m,
        big_m: eig.big_m,
    };
    cc.validate()?;
    Ok(cc)
}

fn print_json(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_json_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => {
            let method = args.method.map_or(Method::OursL, Method::from);
            match args.experiment {
                Experiment::Main => ScenarioConfig::paper(args.scenario.into(), method),
                Experiment::Bias => ScenarioConfig::bias_protocol(args.scenario.into(), method),
            }
        }
    };
    if let Some(m) = args.method {
        let method = Method::from(m);
        if method != cfg.method {
            cfg.method = method;
            cfg.train.closed_form = method != Method::OursNn;
        }
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    if let Some(u) = args.unlabeled {
        cfg.n_unlabeled = u;
    }
    cfg.validate()?;

    let opts = RunOptions {
        workers: args.workers,
    };
    let (run, bias) = if args.experiment == Experiment::Bias {
        let (bias, run) = run_bias_experiment(&cfg, opts)?;
        (run, Some(bias))
    } else {
        (run_experiment(&cfg, opts)?, None)
    };
    if let Some(dir) = &args.out {
        export_results(&run, dir)?;
    }
    print_json(&summary_json(&run.table, bias.as_ref()))
}

fn summary_json(table: &MetricsTable, bias: Option<&BiasTable>) -> Value {
    let mut metrics = serde_json::Map::new();
    for metric in Metric::ALL {
        let coords: Vec<usize> = if metric.per_coordinate() {
            (0..table.dim()).collect()
        } else {
            vec![0]
        };
        let values: Vec<Value> = coords
            .iter()
            .map(|&j| {
                let a = table.summary(metric, j);
                json!({ "mean": a.mean, "ci95": a.ci95 })
            })
            .collect();
        let v = if metric.per_coordinate() {
            Value::Array(values)
        } else {
            values.into_iter().next().unwrap_or(Value::Null)
        };
        metrics.insert(metric.name().to_string(), v);
    }
    let mut out = json!({
        "scenario": table.config.ground_truth,
        "method": table.config.method,
        "w_star": table.w_star,
        "trials": table.config.trials,
        "repetitions": table.config.repetitions,
        "failed_trials": table.total_failed(),
        "metrics": metrics,
    });
    if let Some(b) = bias {
        out["bias"] = json!(b
            .rows
            .iter()
            .map(|r| json!({
                "coordinate": r.coordinate,
                "mean": r.aggregate.mean,
                "ci95": r.aggregate.ci95,
                "contains_zero": r.contains_zero(),
                "entirely_negative": r.entirely_negative(),
            }))
            .collect::<Vec<_>>());
    }
    out
}

fn fit(args: FitArgs) -> Result<()> {
    let data = load_dataset_csv(&args.data, &args.label, !args.no_intercept)?;
    if data.n() == 0 {
        bail!("{} has no labeled rows", args.data.display());
    }
    let d = data.dim();
    let w_t = match &args.null {
        Some(v) if v.len() != d => bail!("--null has {} values but the features have {d}", v.len()),
        Some(v) => VectorD::from_vec(v.clone()),
        None => VectorD::zeros(d),
    };
    let method = Method::from(args.method);
    let result = match method {
        Method::BaselineLse => {
            let h = Hypothesis {
                w_t,
                scope: Scope::Model,
            };
            let inf = baseline_lse_inference(&data, args.delta, &h)?;
            json!({
                "method": method,
                "n": data.n(),
                "w": inf.fit.w.as_slice(),
                "covariance": matrix_rows(&inf.fit.cov),
                "std_errors": inf.fit.std_errors(),
                "sigma_sq": inf.fit.sigma_sq,
                "model_test": inf.model,
                "coefficient_tests": inf.coefficients,
            })
        }
        Method::OursL | Method::OursNn => fit_corrected(&data, &args, method, &w_t)?,
    };
    let text = serde_json::to_string_pretty(&result)?;
    if let Some(path) = &args.out {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(())
}

fn fit_corrected(data: &Dataset, args: &FitArgs, method: Method, w_t: &VectorD) -> Result<Value> {
    let split = split_dataset(data, args.ratio, args.seed)?;
    let train = TrainConfig {
        seed: args.seed,
        closed_form: method == Method::OursL,
        ..Default::default()
    };
    let predictor = match method {
        Method::OursNn => Predictor::Mlp(train_mlp(&split.train, &train)?),
        _ => Predictor::Linear(train_linear(&split.train, &train)?),
    };
    let source = match args.a_hat {
        Some(SourceArg::ValidationOnly) => MomentSource::ValidationOnly,
        Some(SourceArg::AllData) => MomentSource::AllData,
        None => method.default_moment_source(),
    };
    let a_hat = match source {
        MomentSource::AllData => estimate_second_moment_inverse(data.all_features(), source)?,
        _ => estimate_second_moment_inverse(split.validation.labeled_features(), source)?,
    };
    // Without unlabeled rows the labeled inputs stand in for the pool.
    let pool: Vec<&FeatureVector> = if data.n_unlabeled() > 0 {
        data.unlabeled().iter().collect()
    } else {
        data.all_features().collect()
    };
    let w1 = linear_approx_of_predictor(&predictor, pool, &a_hat)?;
    let rs = residuals_z(&predictor, &split.validation)?;
    let est = corrected_estimator(w1, rs, a_hat)?;
    let mut tests = test_all(&est.w_e, &est.sigma_e_sq, w_t, args.delta)?;
    let model = tests.remove(0);
    Ok(json!({
        "method": method,
        "n": data.n(),
        "n_train": split.n_train(),
        "n_validation": split.n_validation(),
        "n_unlabeled": data.n_unlabeled(),
        "a_hat_source": source,
        "w_e": est.w_e.as_slice(),
        "w1": est.w1.w1.as_slice(),
        "sigma_e_sq": matrix_rows(&est.sigma_e_sq),
        "std_errors": est.std_errors(),
        "null": w_t.as_slice(),
        "model_test": model,
        "coefficient_tests": tests,
        "predictor": predictor,
    }))
}

fn bounds(which: BoundsCommand) -> Result<()> {
    let v = match which {
        BoundsCommand::Lemma1 {
            lower,
            upper,
            n,
            delta0,
        } => {
            let emp = BoundsPair::assumed(lower, upper)?;
            json!({
                "range_bound": lemma1_range_bound(&emp, n, delta0)?,
                "empirical_range": emp.range(),
                "n": n,
                "delta0": delta0,
                "confidence": 1.0 - delta0,
            })
        }
        BoundsCommand::Mse {
            mean_loss,
            n2,
            range,
            d,
            eig,
            delta,
        } => {
            let cc = constants(1.0, 1.0, range, &eig)?;
            let cp = ConfidenceParams::new(delta, 0.5)?;
            let losses = LossSummary {
                losses: vec![mean_loss; n2],
                mean: mean_loss,
            };
            serde_json::to_value(mse_bound(&losses, &cc, &cp, d, false)?)?
        }
        BoundsCommand::Concentration {
            n,
            d,
            consts,
            eig,
            delta,
        } => {
            let cc = constants(consts.k, consts.c, 1.0, &eig)?;
            json!({
                "bound": second_moment_concentration_bound(n, d, &cc, delta)?,
                "n": n,
                "d": d,
                "delta": delta,
                "K": cc.k,
                "C": cc.c,
                "m": cc.m,
                "M": cc.big_m,
            })
        }
        BoundsCommand::Bias {
            range,
            n2,
            n_t,
            z_norm,
            d,
            consts,
            eig,
            delta,
        } => {
            let cc = constants(consts.k, consts.c, range, &eig)?;
            json!({
                "bound": bias_bound_from_parts(range, n2, n_t, z_norm, d, &cc, delta)?,
                "confidence": 1.0 - delta,
                "n2": n2,
                "n_t": n_t,
                "z_norm": z_norm,
                "d": d,
                "delta": delta,
                "K": cc.k,
                "C": cc.c,
                "m": cc.m,
                "M": cc.big_m,
            })
        }
    };
    print_json(&v)
}

fn analytic(scenario: Scenario, exact: bool) {
    let truth = GroundTruth::from(scenario);
    if exact {
        let [w0, w1] = exact_linear_approx_rational(truth);
        println!("({w0}, {w1})");
    } else {
        let w = exact_linear_approx_analytic(truth);
        println!("({:.6}, {:.6})", w[0], w[1]);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => fit(args),
        Command::Bounds { which } => bounds(which),
        Command::Analytic { scenario, exact } => {
            analytic(scenario, exact);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
