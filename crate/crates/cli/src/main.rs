//! `dyadic`: fit, apply and evaluate dyadic set-estimator classifiers, and
//! run convergence-rate experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyadic_core::decorate::MAX_DECORATION_DIM;
use dyadic_core::empirical::{empirical_risk, eta_bar};
use dyadic_core::experiment::{self, ExperimentConfig};
use dyadic_core::forest::{ForestConfig, StoppingRule, DEFAULT_J_MAX};
use dyadic_core::io::{self as dio, ModelMeta};
use dyadic_core::oracle::{DistributionOracle, EtaKind};
use dyadic_core::select::{select_model, split_halves, SelectionConfig};
use dyadic_core::{Algorithm, Error};

#[derive(Parser, Debug)]
#[command(name = "dyadic", version, about = "Adaptive dyadic-partition set estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a classifier with hold-out model selection and write it as JSON.
    Fit(FitArgs),
    /// Label the rows of a point table with a saved model.
    Predict(PredictArgs),
    /// Empirical risk of a model on labeled data, and optionally its excess risk.
    Eval(EvalArgs),
    /// Excess-risk curves over a grid of sample sizes.
    Rates(RatesArgs),
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training data, header `x1,...,xd,y`.
    train: PathBuf,
    #[arg(long, default_value = "plain")]
    algo: Algorithm,
    /// Expected input dimension.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_J_MAX)]
    jmax: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model path; the JSON goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `single-sample` or `occupied`.
    #[arg(long, default_value = "single-sample")]
    rule: String,
    /// Largest budget offered to model selection.
    #[arg(long = "m-max")]
    m_max: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    model: PathBuf,
    /// Points, header `x1,...,xd` with an optional trailing `y` that is ignored.
    points: PathBuf,
    /// Label file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// `signed-power`, `massart` or `stripe`.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    axis: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    model: PathBuf,
    /// Labeled data, header `x1,...,xd,y`.
    data: PathBuf,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long = "mc-samples", default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RatesArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    algo: Option<String>,
    /// `a..b` for `2^a, ..., 2^b`, or a comma list.
    #[arg(long)]
    ngrid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jmax: Option<u32>,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long = "m-max")]
    m_max: Option<String>,
    #[arg(long = "mc-samples")]
    mc_samples: Option<usize>,
    /// Rate table path, `rates.csv` by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the rayon default when absent.
    #[arg(long)]
    threads: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidParameter(_)
            | Error::DecorationDimension(_)
            | Error::BudgetOutOfRange { .. }
            | Error::GridTooLarge { .. }
            | Error::LevelTooDeep { .. } => Failure::usage(message),
            Error::DimensionMismatch { .. }
            | Error::OutOfDomain { .. }
            | Error::InvalidLabel(_)
            | Error::EmptyData
            | Error::TooFewSamples { .. }
            | Error::Malformed(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::ZeroNormal => Failure::data(message),
            _ => Failure::internal(message),
        }
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn create_output(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn parse_rule(s: &str) -> Result<StoppingRule, Failure> {
    match s {
        "single-sample" => Ok(StoppingRule::SingleSample),
        "occupied" => Ok(StoppingRule::OccupiedOnly),
        other => Err(Failure::usage(format!("unknown stopping rule {other:?}"))),
    }
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    if let Some(d) = args.d {
        if d == 0 {
            return Err(Failure::usage("--d must be positive"));
        }
        if args.algo == Algorithm::Decorated && d > MAX_DECORATION_DIM {
            return Err(Error::DecorationDimension(d).into());
        }
    }
    let rule = parse_rule(&args.rule)?;
    let data = dio::read_dataset(open_input(&args.train)?)?;
    if let Some(d) = args.d {
        if d != data.dim() {
            return Err(Error::DimensionMismatch { expected: d, found: data.dim() }.into());
        }
    }
    if args.algo == Algorithm::Decorated && data.dim() > MAX_DECORATION_DIM {
        return Err(Error::DecorationDimension(data.dim()).into());
    }

    let halves = split_halves(&data, args.seed)?;
    let grid = args.m_max.map(|m| match args.algo {
        Algorithm::Uniform => (1..=m.clamp(1, halves.first.len())).collect(),
        _ => (0..=m.min(halves.first.len())).collect(),
    });
    let config = SelectionConfig {
        algorithm: args.algo,
        forest: ForestConfig { j_max: args.jmax, rule },
        grid,
        ..SelectionConfig::default()
    };
    let report = select_model(&data, &config, args.seed)?;
    let meta = ModelMeta { m_star: report.m_star, seed: args.seed, j_max: args.jmax };
    let json = dio::model_to_json(&report.classifier, meta)?;

    let chosen = report.scores.iter().find(|s| s.0 == report.m_star).map_or(0, |s| s.1);
    let summary = format!(
        "algorithm = {}\nn = {}\nfirst_half = {}\nsecond_half = {}\nset_aside = {}\ncandidates = {}\nm_star = {}\n\
         second_half_eta_bar = {}\nfirst_half_risk = {}\nsecond_half_risk = {}\ntraining_risk = {}\n",
        args.algo,
        data.len(),
        report.first_len,
        report.second_len,
        report.set_aside.is_some() as u8,
        report.scores.len(),
        report.m_star,
        chosen as f64 / report.second_len as f64,
        empirical_risk(&report.classifier, &halves.first),
        empirical_risk(&report.classifier, &halves.second),
        empirical_risk(&report.classifier, &data),
    );
    match &args.out {
        Some(path) => {
            write_text(path, &json)?;
            print!("{summary}");
            println!("model = {}", path.display());
        }
        None => {
            eprint!("{summary}");
            print!("{json}");
        }
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), Failure> {
    let (model, _) = dio::model_from_json(
        &std::fs::read_to_string(&args.model).map_err(|e| Failure::data(format!("{}: {e}", args.model.display())))?,
    )?;
    let table = dio::read_points(open_input(&args.points)?)?;
    let labels = table.points.iter().map(|p| model.predict(p)).collect::<Result<Vec<_>, _>>()?;
    match &args.out {
        Some(path) => {
            let mut w = create_output(path)?;
            dio::write_labels(&mut w, &labels)?;
            w.flush().map_err(|e| Failure::internal(e.to_string()))?;
        }
        None => dio::write_labels(io::stdout().lock(), &labels)?,
    }
    Ok(())
}

fn oracle_from(args: &OracleArgs, dim: usize) -> Result<Option<DistributionOracle>, Failure> {
    let Some(dist) = &args.dist else { return Ok(None) };
    let axis = args.axis.unwrap_or(0);
    let mut cfg = ExperimentConfig { d: dim, axis, ..ExperimentConfig::default() };
    cfg.set("dist", dist)?;
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.amp {
        cfg.amp = v;
    }
    if let Some(p) = &args.pattern {
        cfg.pattern = p.clone();
    }
    Ok(Some(cfg.oracle()?))
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let (model, meta) = dio::model_from_json(
        &std::fs::read_to_string(&args.model).map_err(|e| Failure::data(format!("{}: {e}", args.model.display())))?,
    )?;
    let data = dio::read_dataset(open_input(&args.data)?)?;
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: data.dim() }.into());
    }
    println!("algorithm = {}", model.algorithm);
    println!("m_star = {}", meta.m_star);
    println!("n = {}", data.len());
    println!("empirical_risk = {}", empirical_risk(&model, &data));
    println!("eta_bar = {}", eta_bar(&model, &data));
    if let Some(oracle) = oracle_from(&args.oracle, model.dim())? {
        let report = match oracle.excess_risk_exact(&model) {
            Ok(r) => r,
            Err(Error::UnsupportedExact(_)) => oracle.excess_risk_mc(&model, args.mc_samples, args.seed)?,
            Err(e) => return Err(e.into()),
        };
        println!("excess_risk = {}", report.value);
        println!(
            "method = {}",
            match report.method {
                dyadic_core::oracle::RiskMethod::Exact => "exact",
                dyadic_core::oracle::RiskMethod::MonteCarlo => "monte-carlo",
            }
        );
        if let Some(se) = report.std_error {
            println!("std_error = {se}");
        }
        if let EtaKind::SignedPower { delta } = oracle.kind() {
            println!("margin_exponent = {}", 1.0 / delta);
        }
    }
    Ok(())
}

fn rates(args: RatesArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let o = &args.oracle;
    let overrides: [(&str, Option<String>); 15] = [
        ("dist", o.dist.clone()),
        ("delta", o.delta.map(|v| v.to_string())),
        ("amp", o.amp.map(|v| v.to_string())),
        ("pattern", o.pattern.clone()),
        ("axis", o.axis.map(|v| v.to_string())),
        ("d", args.d.map(|v| v.to_string())),
        ("algo", args.algo.clone()),
        ("ngrid", args.ngrid.clone()),
        ("trials", args.trials.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("jmax", args.jmax.map(|v| v.to_string())),
        ("rule", args.rule.clone()),
        ("m-max", args.m_max.clone()),
        ("mc-samples", args.mc_samples.map(|v| v.to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("rates.csv"));

    let rows = match args.threads {
        Some(0) => return Err(Failure::usage("--threads must be positive")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::internal(e.to_string()))?
            .install(|| experiment::run_rates(&cfg))?,
        None => experiment::run_rates(&cfg)?,
    };

    let mut w = create_output(&out)?;
    experiment::write_rates(&mut w, &rows)?;
    w.flush().map_err(|e| Failure::internal(e.to_string()))?;
    let timing = experiment::timing_path(&out);
    let mut w = create_output(&timing)?;
    experiment::write_timing(&mut w, &rows)?;
    w.flush().map_err(|e| Failure::internal(e.to_string()))?;

    print!("{}", experiment::summary(&cfg, &rows)?);
    println!("rates = {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Rates(a) => rates(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
