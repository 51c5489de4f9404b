//! `difflogic` command-line front end.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValue, PossibleValuesParser};
use clap::{Args, Parser, Subcommand};

use difflogic::autodiff::Plain;
use difflogic::constraints::{builtin_tables, format_tables, table_classes, Tables, TABLE_NAMES};
use difflogic::experiment::{
    lambda_sweep, resolve_tables, run, write_report, ConstraintSpec, DatasetSpec, ExperimentConfig, SelectRule,
    DEFAULT_LAMBDA_GRID,
};
use difflogic::formula::{eval_crisp, parse, BindingSet, Env, ParseContext};
use difflogic::logics::{compile, LogicBackend, LogicParams, BACKEND_NAMES};

#[derive(Parser, Debug)]
#[command(name = "difflogic", version, about = "Train and evaluate networks with logical constraints compiled to losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one formula on given output/input values.
    Eval(EvalArgs),
    /// Train one model and write the per-epoch report.
    Train(TrainArgs),
    /// Train once per constraint weight and pick the best.
    Sweep(SweepArgs),
    /// Print built-in label triples or class groups.
    Tables(TablesArgs),
}

fn logic_parser() -> PossibleValuesParser {
    PossibleValuesParser::new(BACKEND_NAMES.iter().map(|n| {
        let v = PossibleValue::new(*n);
        if *n == "godel" { v.alias("g") } else { v }
    }))
}

fn parse_constraint(s: &str) -> Result<ConstraintSpec, String> {
    ConstraintSpec::parse(s).map_err(|e| e.to_string())
}

fn parse_dataset(s: &str) -> Result<DatasetSpec, String> {
    DatasetSpec::parse(s, 0).map_err(|e| e.to_string())
}

fn parse_select(s: &str) -> Result<SelectRule, String> {
    SelectRule::parse(s).map_err(|e| e.to_string())
}

/// A comma-separated list of numbers.
#[derive(Clone, Debug, Default)]
struct Values(Vec<f64>);

fn parse_list(s: &str) -> Result<Values, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<Result<_, _>>()
        .map(Values)
}

#[derive(Args, Debug, Default)]
struct LogicArgs {
    /// DL2 inequality constant.
    #[arg(long)]
    xi: Option<f64>,
    /// Exponent of the Yager operators.
    #[arg(long)]
    yager_p: Option<f64>,
    /// Steepness of the sigmoidal implication.
    #[arg(long)]
    sigmoidal_s: Option<f64>,
    /// Smoothing constant of the fuzzy comparison.
    #[arg(long)]
    eps_compare: Option<f64>,
}

impl LogicArgs {
    fn apply(&self, p: &mut LogicParams) {
        if let Some(v) = self.xi {
            p.xi = v;
        }
        if let Some(v) = self.yager_p {
            p.yager_p = v;
        }
        if let Some(v) = self.sigmoidal_s {
            p.sigmoidal_s = v;
        }
        if let Some(v) = self.eps_compare {
            p.eps = v;
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_parser = logic_parser())]
    logic: String,
    /// Formula text, e.g. "out[0] <= 0.5".
    #[arg(long)]
    formula: String,
    /// Comma-separated output values bound to out[..].
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    out: Values,
    /// Comma-separated input values bound to in[..].
    #[arg(long = "in", value_parser = parse_list, allow_hyphen_values = true)]
    inputs: Option<Values>,
    /// Outputs of the paired sample, bound to out'[..].
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    out_pair: Option<Values>,
    /// Inputs of the paired sample, bound to in'[..].
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    in_pair: Option<Values>,
    /// Table bound as `Labels` (triples) or `Groups`: built-in name or file.
    #[arg(long)]
    table: Option<String>,
    #[command(flatten)]
    logic_params: LogicArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// File of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = logic_parser())]
    logic: Option<String>,
    /// csim, group, lipschitz[:L] or formula:<text>.
    #[arg(long, value_parser = parse_constraint)]
    constraint: Option<ConstraintSpec>,
    /// Built-in table name or table file.
    #[arg(long)]
    table: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    /// Stratified fraction of the training set to keep.
    #[arg(long)]
    fraction: Option<f64>,
    /// synthetic or idx:<images>,<labels>[,<test images>,<test labels>].
    #[arg(long, value_parser = parse_dataset)]
    dataset: Option<DatasetSpec>,
    #[arg(long)]
    eps_group: Option<f64>,
    /// Extra `key=value` configuration setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    logic_params: LogicArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated weights; defaults to the standard 15-value grid.
    #[arg(long, value_parser = parse_list)]
    sweep: Option<Values>,
    /// How to score (P, C) pairs: product or sum.
    #[arg(long, value_parser = parse_select, default_value = "product")]
    select: SelectRule,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct TablesArgs {
    /// Dataset key; all tables when absent.
    #[arg(long, value_parser = PossibleValuesParser::new(TABLE_NAMES))]
    table: Option<String>,
}

type AnyError = Box<dyn std::error::Error>;

fn build_config(a: &TrainArgs) -> Result<ExperimentConfig, AnyError> {
    let mut cfg = ExperimentConfig::synthetic_preset();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        cfg = ExperimentConfig::from_kv(&text, cfg)?;
    }
    if let Some(d) = &a.dataset {
        let keep = matches!((d, &cfg.dataset), (DatasetSpec::Synthetic(_), DatasetSpec::Synthetic(_)));
        if !keep {
            cfg.dataset = d.clone();
        }
    }
    if let Some(v) = &a.logic {
        cfg.backend = v.clone();
    }
    if let Some(v) = &a.constraint {
        cfg.constraint = v.clone();
    }
    if let Some(v) = &a.table {
        cfg.table = Some(v.clone());
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = &a.hidden {
        cfg.set("hidden", v)?;
    }
    if let Some(v) = a.fraction {
        cfg.fraction = v;
    }
    if let Some(v) = a.eps_group {
        cfg.eps_group = v;
    }
    a.logic_params.apply(&mut cfg.logic);
    for kv in &a.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let DatasetSpec::Synthetic(s) = &mut cfg.dataset {
        s.seed = cfg.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_eval(a: &EvalArgs) -> Result<(), AnyError> {
    let mut params = LogicParams::default();
    a.logic_params.apply(&mut params);
    let backend = LogicBackend::from_name(&a.logic, &params)?;
    let out = &a.out.0;
    let inputs = a.inputs.clone().unwrap_or_default().0;
    let mut ctx = ParseContext::new(out.len()).with_inputs(inputs.len());
    if let Some(t) = &a.table {
        let cfg = ExperimentConfig {
            table: Some(t.clone()),
            ..ExperimentConfig::synthetic_preset()
        };
        ctx = ctx.with_set(match resolve_tables(&cfg, out.len())? {
            Tables::Triples(ts) => BindingSet::new("Labels", ts.iter().map(|t| vec![t.0, t.1, t.2]).collect())?,
            Tables::Groups(gs) => BindingSet::new("Groups", gs.into_iter().map(|g| g.members).collect())?,
        });
    }
    let f = parse(&a.formula, &ctx)?;
    let mut env = Env::new(&out[..]).with_inputs(&inputs);
    let (out_pair, in_pair);
    if a.out_pair.is_some() || a.in_pair.is_some() {
        out_pair = a.out_pair.clone().unwrap_or_default().0;
        in_pair = a.in_pair.clone().unwrap_or_default().0;
        env = env.with_pair(&out_pair, &in_pair);
    }
    let prepared = backend.prepare(&f)?;
    let value = compile(&mut Plain, &prepared, &backend, &env)?;
    println!("logic: {}", backend.name());
    println!("formula: {f}");
    if let Some(t) = value.truth {
        println!("truth: {t:.6}");
    }
    println!("loss: {:.6}", value.loss);
    println!("holds: {}", eval_crisp(&f, &env)?);
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), AnyError> {
    let cfg = build_config(a)?;
    let reports = run(&cfg)?;
    match &a.report {
        Some(path) => {
            write_report(&reports, path)?;
            eprintln!("wrote {} epochs to {}", reports.len(), path.display());
        }
        None => print!("{}", difflogic::experiment::report_csv(&reports)),
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), AnyError> {
    let cfg = build_config(&a.train)?;
    let grid = a.sweep.clone().map(|v| v.0).unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    let result = lambda_sweep(&cfg, &grid, a.jobs, a.select)?;
    let csv = result.to_csv();
    match &a.train.report {
        Some(path) => fs::write(path, &csv).map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{csv}"),
    }
    let best = &result.rows[result.best];
    println!(
        "best lambda: {} (P {:.2}, C {:.2})",
        best.lambda, best.p_acc, best.c_acc
    );
    Ok(())
}

fn cmd_tables(a: &TablesArgs) -> Result<(), AnyError> {
    let names: Vec<&str> = match &a.table {
        Some(n) => vec![n.as_str()],
        None => TABLE_NAMES.to_vec(),
    };
    for (k, name) in names.iter().enumerate() {
        if k > 0 {
            println!();
        }
        println!("# {name} ({} classes)", table_classes(name)?);
        print!("{}", format_tables(&builtin_tables(name)?));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Tables(a) => cmd_tables(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = e.source();
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}
