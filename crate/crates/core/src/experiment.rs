//! Training runs, accuracy metrics, result selection, weight sweeps and
//! CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{
    builtin_tables, csim_formula, group_formula, lipschitz_formula, parse_tables, synthetic_groups,
    synthetic_triples, ConstraintError, Tables, TABLE_NAMES,
};
use crate::data::{gen_synthetic, load_idx, subsample, train_test_split, DataError, Dataset, Split, SyntheticConfig};
use crate::formula::{eval_crisp, parse, Env, Formula, FormulaError, ParseContext, ParseError};
use crate::logics::{LogicBackend, LogicError, LogicParams};
use crate::network::{argmax, train_step, Batch, Model, NetworkError, Objective, Sgd};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("constraint formula: {0}")]
    Parse(#[from] ParseError),
    #[error("run with lambda {lambda} failed: {source}")]
    Sweep {
        lambda: f64,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Synthetic(SyntheticConfig),
    /// IDX files. Without a separate test pair, a fifth of the training
    /// file is held out.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test: Option<(PathBuf, PathBuf)>,
    },
}

impl DatasetSpec {
    /// `synthetic` or `idx:<images>,<labels>[,<test images>,<test labels>]`.
    pub fn parse(text: &str, seed: u64) -> Result<DatasetSpec, ExperimentError> {
        if text == "synthetic" {
            return Ok(DatasetSpec::Synthetic(synthetic_preset_data(seed)));
        }
        let Some(paths) = text.strip_prefix("idx:") else {
            return Err(config_err(format!(
                "unknown dataset {text:?}; expected synthetic or idx:<images>,<labels>[,<test images>,<test labels>]"
            )));
        };
        let parts: Vec<&str> = paths.split(',').collect();
        match parts.as_slice() {
            [i, l] => Ok(DatasetSpec::Idx {
                images: i.into(),
                labels: l.into(),
                test: None,
            }),
            [i, l, ti, tl] => Ok(DatasetSpec::Idx {
                images: i.into(),
                labels: l.into(),
                test: Some((ti.into(), tl.into())),
            }),
            _ => Err(config_err(format!("idx dataset needs 2 or 4 paths, got {}", parts.len()))),
        }
    }
}

impl std::fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSpec::Synthetic(_) => f.write_str("synthetic"),
            DatasetSpec::Idx { images, labels, test } => {
                write!(f, "idx:{},{}", images.display(), labels.display())?;
                if let Some((ti, tl)) = test {
                    write!(f, ",{},{}", ti.display(), tl.display())?;
                }
                Ok(())
            }
        }
    }
}

pub const CONSTRAINT_NAMES: [&str; 4] = ["csim", "group", "lipschitz", "formula"];

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSpec {
    /// Class similarity over label triples.
    Csim,
    /// Group mass near 0 or 1.
    Group,
    Lipschitz(f64),
    /// A formula in the constraint language.
    Formula(String),
}

impl ConstraintSpec {
    /// `csim`, `group`, `lipschitz[:L]` or `formula:<text>`.
    pub fn parse(text: &str) -> Result<ConstraintSpec, ExperimentError> {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (text, None),
        };
        match (name, arg) {
            ("csim", None) => Ok(ConstraintSpec::Csim),
            ("group", None) => Ok(ConstraintSpec::Group),
            ("lipschitz", None) => Ok(ConstraintSpec::Lipschitz(1.0)),
            ("lipschitz", Some(l)) => l
                .trim()
                .parse()
                .map(ConstraintSpec::Lipschitz)
                .map_err(|_| config_err(format!("bad Lipschitz constant {l:?}"))),
            ("formula", Some(f)) => Ok(ConstraintSpec::Formula(f.to_string())),
            _ => Err(config_err(format!(
                "unknown constraint {text:?}; expected one of: csim, group, lipschitz[:L], formula:<text>"
            ))),
        }
    }
}

impl std::fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintSpec::Csim => f.write_str("csim"),
            ConstraintSpec::Group => f.write_str("group"),
            ConstraintSpec::Lipschitz(l) => write!(f, "lipschitz:{l}"),
            ConstraintSpec::Formula(s) => write!(f, "formula:{s}"),
        }
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_EPS_GROUP: f64 = 0.05;
pub const DEFAULT_SELECT_WINDOW: usize = 10;
pub const DEFAULT_LAMBDA_GRID: [f64; 15] = [
    0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0,
];

fn synthetic_preset_data(seed: u64) -> SyntheticConfig {
    SyntheticConfig::new(seed, 5000, 1000, 10, 20, 0.1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub backend: String,
    pub constraint: ConstraintSpec,
    /// Built-in table name or path of a table file. Defaults to the tables
    /// generated for the class count.
    pub table: Option<String>,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub momentum: f64,
    pub hidden: Vec<usize>,
    /// Fraction of the training set kept (stratified).
    pub fraction: f64,
    pub eps_group: f64,
    pub logic: LogicParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::synthetic_preset()
    }
}

impl ExperimentConfig {
    /// Ten-class blobs in 20 dimensions with 10% label noise, a
    /// 20-64-10 network, 50 epochs.
    pub fn synthetic_preset() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSpec::Synthetic(synthetic_preset_data(0)),
            backend: "dl2".into(),
            constraint: ConstraintSpec::Csim,
            table: None,
            lambda: 0.0,
            epochs: 50,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            lr: 0.05,
            momentum: 0.0,
            hidden: vec![64],
            fraction: 1.0,
            eps_group: DEFAULT_EPS_GROUP,
            logic: LogicParams::default(),
        }
    }

    pub fn with_backend(mut self, backend: &str, lambda: f64) -> ExperimentConfig {
        self.backend = backend.to_string();
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.epochs == 0 {
            return Err(config_err("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch size must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(config_err(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(config_err(format!("fraction must be in (0, 1], got {}", self.fraction)));
        }
        if self.hidden.contains(&0) {
            return Err(config_err("hidden layer sizes must be positive"));
        }
        LogicBackend::from_name(&self.backend, &self.logic)?;
        Sgd::new(self.lr, self.momentum)?;
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep
    /// their values from `base`.
    pub fn from_kv(text: &str, base: ExperimentConfig) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = base;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let DatasetSpec::Synthetic(s) = &mut cfg.dataset {
            s.seed = cfg.seed;
        }
        Ok(cfg)
    }

    /// Sets one configuration key from text. Synthetic-data keys apply to
    /// the dataset selected so far.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ExperimentError> {
            v.parse().map_err(|_| config_err(format!("bad value for {key}: {v:?}")))
        }
        fn synth<'c>(cfg: &'c mut ExperimentConfig, key: &str) -> Result<&'c mut SyntheticConfig, ExperimentError> {
            match &mut cfg.dataset {
                DatasetSpec::Synthetic(s) => Ok(s),
                _ => Err(config_err(format!("{key} only applies to the synthetic dataset"))),
            }
        }
        match key {
            "dataset" => {
                let keep = value == "synthetic" && matches!(self.dataset, DatasetSpec::Synthetic(_));
                if !keep {
                    self.dataset = DatasetSpec::parse(value, self.seed)?;
                }
            }
            "backend" | "logic" => self.backend = value.to_string(),
            "constraint" => self.constraint = ConstraintSpec::parse(value)?,
            "table" => self.table = Some(value.to_string()),
            "lambda" => self.lambda = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "fraction" => self.fraction = num(key, value)?,
            "eps_group" => self.eps_group = num(key, value)?,
            "xi" => self.logic.xi = num(key, value)?,
            "yager_p" => self.logic.yager_p = num(key, value)?,
            "sigmoidal_s" => self.logic.sigmoidal_s = num(key, value)?,
            "eps_compare" => self.logic.eps = num(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num(key, s))
                    .collect::<Result<_, _>>()?
            }
            "n_train" => synth(self, key)?.n_train = num(key, value)?,
            "n_test" => synth(self, key)?.n_test = num(key, value)?,
            "classes" => synth(self, key)?.n_classes = num(key, value)?,
            "dims" => synth(self, key)?.dims = num(key, value)?,
            "noise" => synth(self, key)?.noise_frac = num(key, value)?,
            "radius" => synth(self, key)?.radius = num(key, value)?,
            "blob_std" => synth(self, key)?.std = num(key, value)?,
            "pair_shift" => synth(self, key)?.pair_shift = num(key, value)?,
            _ => return Err(config_err(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        writeln!(s, "dataset = {}", self.dataset).unwrap();
        if let DatasetSpec::Synthetic(d) = &self.dataset {
            writeln!(s, "n_train = {}", d.n_train).unwrap();
            writeln!(s, "n_test = {}", d.n_test).unwrap();
            writeln!(s, "classes = {}", d.n_classes).unwrap();
            writeln!(s, "dims = {}", d.dims).unwrap();
            writeln!(s, "noise = {}", d.noise_frac).unwrap();
            writeln!(s, "radius = {}", d.radius).unwrap();
            writeln!(s, "blob_std = {}", d.std).unwrap();
            writeln!(s, "pair_shift = {}", d.pair_shift).unwrap();
        }
        writeln!(s, "backend = {}", self.backend).unwrap();
        writeln!(s, "constraint = {}", self.constraint).unwrap();
        if let Some(t) = &self.table {
            writeln!(s, "table = {t}").unwrap();
        }
        writeln!(s, "lambda = {}", self.lambda).unwrap();
        writeln!(s, "epochs = {}", self.epochs).unwrap();
        writeln!(s, "batch_size = {}", self.batch_size).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "lr = {}", self.lr).unwrap();
        writeln!(s, "momentum = {}", self.momentum).unwrap();
        writeln!(s, "hidden = {}", hidden.join(",")).unwrap();
        writeln!(s, "fraction = {}", self.fraction).unwrap();
        writeln!(s, "eps_group = {}", self.eps_group).unwrap();
        writeln!(s, "xi = {}", self.logic.xi).unwrap();
        writeln!(s, "yager_p = {}", self.logic.yager_p).unwrap();
        writeln!(s, "sigmoidal_s = {}", self.logic.sigmoidal_s).unwrap();
        writeln!(s, "eps_compare = {}", self.logic.eps).unwrap();
        s
    }
}

/// Weights chosen per backend in published runs: class similarity on the
/// clothing data set, and the group constraint on traffic signs.
pub fn preset_lambda(backend: &str, constraint: &ConstraintSpec) -> Option<f64> {
    let csim = [
        ("dl2", 0.6),
        ("godel", 3.0),
        ("kd", 0.8),
        ("lk", 4.0),
        ("gg", 3.0),
        ("rc", 0.8),
        ("rc-s", 0.8),
        ("rc-phi", 1.0),
        ("yg", 1.0),
    ];
    let group = [("dl2", 7.0), ("tg", 5.0), ("tlk", 5.0), ("trc", 5.0), ("tyg", 5.0)];
    let table: &[(&str, f64)] = match constraint {
        ConstraintSpec::Csim => &csim,
        ConstraintSpec::Group => &group,
        _ => return None,
    };
    let name = if backend == "g" { "godel" } else { backend };
    table.iter().find(|(b, _)| *b == name).map(|(_, l)| *l)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_ce: f64,
    pub train_logical: f64,
    /// Test prediction accuracy in percent.
    pub p_acc: f64,
    /// Test constraint accuracy in percent.
    pub c_acc: f64,
}

/// Loads train and test data for the configuration.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), ExperimentError> {
    let (train, test) = match &cfg.dataset {
        DatasetSpec::Synthetic(s) => gen_synthetic(s)?,
        DatasetSpec::Idx { images, labels, test } => {
            let all = load_idx(images, labels)?;
            match test {
                Some((ti, tl)) => {
                    let mut t = load_idx(ti, tl)?;
                    t.split = Split::Test;
                    (all, t)
                }
                None => train_test_split(&all, 0.2, cfg.seed)?,
            }
        }
    };
    if train.dims() != test.dims() {
        return Err(config_err(format!(
            "train rows have {} features but test rows have {}",
            train.dims(),
            test.dims()
        )));
    }
    let train = if cfg.fraction < 1.0 {
        subsample(&train, cfg.fraction, cfg.seed)?
    } else {
        train
    };
    Ok((train, test))
}

/// Label triples or class groups selected by the configuration.
pub fn resolve_tables(cfg: &ExperimentConfig, n_classes: usize) -> Result<Tables, ExperimentError> {
    match &cfg.table {
        Some(name) if TABLE_NAMES.contains(&name.as_str()) && name != "synthetic" => Ok(builtin_tables(name)?),
        Some(name) if name != "synthetic" => {
            let path = Path::new(name);
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            Ok(parse_tables(&text)?)
        }
        _ => Ok(match cfg.constraint {
            ConstraintSpec::Group => Tables::Groups(synthetic_groups(n_classes)),
            _ => Tables::Triples(synthetic_triples(n_classes)),
        }),
    }
}

/// Builds the configured constraint for a problem with the given shape.
pub fn build_constraint(cfg: &ExperimentConfig, n_classes: usize, n_inputs: usize) -> Result<Formula, ExperimentError> {
    Ok(match &cfg.constraint {
        ConstraintSpec::Csim => match resolve_tables(cfg, n_classes)? {
            Tables::Triples(t) => csim_formula(&t, n_classes)?,
            Tables::Groups(_) => return Err(config_err("csim needs label triples, the table holds groups")),
        },
        ConstraintSpec::Group => match resolve_tables(cfg, n_classes)? {
            Tables::Groups(g) => {
                crate::constraints::validate_groups(&g, Some(n_classes))?;
                group_formula(&g, cfg.eps_group)?
            }
            Tables::Triples(_) => return Err(config_err("group needs class groups, the table holds triples")),
        },
        ConstraintSpec::Lipschitz(l) => lipschitz_formula(*l)?,
        ConstraintSpec::Formula(text) => parse(text, &ParseContext::new(n_classes).with_inputs(n_inputs))?,
    })
}

fn units(f: &Formula, n: usize) -> Vec<(usize, Option<usize>)> {
    if f.uses_pairs() {
        (0..n / 2).map(|k| (2 * k, Some(2 * k + 1))).collect()
    } else {
        (0..n).map(|i| (i, None)).collect()
    }
}

/// Percentage of samples (or consecutive sample pairs, for two-sample
/// constraints) on which the constraint holds crisply.
pub fn constraint_accuracy(model: &Model, d: &Dataset, f: &Formula) -> Result<f64, ExperimentError> {
    let expanded = f.expand()?;
    let probs = (0..d.len()).map(|i| model.forward(d.row(i))).collect::<Result<Vec<_>, _>>()?;
    let units = units(&expanded, d.len());
    if units.is_empty() {
        return Ok(0.0);
    }
    let mut ok = 0usize;
    for (i, j) in &units {
        let mut env = Env::new(&probs[*i]).with_inputs(d.row(*i));
        if let Some(j) = j {
            env = env.with_pair(&probs[*j], d.row(*j));
        }
        if eval_crisp(&expanded, &env)? {
            ok += 1;
        }
    }
    Ok(100.0 * ok as f64 / units.len() as f64)
}

/// Percentage of samples whose most probable class is the label.
pub fn prediction_accuracy(model: &Model, d: &Dataset) -> Result<f64, ExperimentError> {
    if d.is_empty() {
        return Ok(0.0);
    }
    let mut ok = 0usize;
    for i in 0..d.len() {
        if argmax(&model.forward(d.row(i))?) == d.label(i) {
            ok += 1;
        }
    }
    Ok(100.0 * ok as f64 / d.len() as f64)
}

const MODEL_SEED_SALT: u64 = 0x6d6f_6465_6c00_0001;
const ORDER_SEED_SALT: u64 = 0x6f72_6465_7200_0002;

/// Trains per the configuration and evaluates on the test split after
/// every epoch.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<EpochReport>, ExperimentError> {
    Ok(run_with_model(cfg)?.0)
}

/// Like [`run`], also returning the final model.
pub fn run_with_model(cfg: &ExperimentConfig) -> Result<(Vec<EpochReport>, Model), ExperimentError> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let n_classes = train.n_classes().max(test.n_classes());
    let formula = build_constraint(cfg, n_classes, train.dims())?;
    let backend = LogicBackend::from_name(&cfg.backend, &cfg.logic)?;
    let objective = Objective::new(cfg.lambda, backend, &formula)?;

    let mut sizes = vec![train.dims()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(n_classes);
    let mut model = Model::init(&sizes, cfg.seed ^ MODEL_SEED_SALT)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ORDER_SEED_SALT);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut ce, mut logical) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::from_dataset(&train, chunk);
            let loss = train_step(&mut model, &mut opt, &batch, &objective)?;
            ce += loss.ce * chunk.len() as f64;
            logical += loss.logical * chunk.len() as f64;
        }
        reports.push(EpochReport {
            epoch,
            train_ce: ce / train.len() as f64,
            train_logical: logical / train.len() as f64,
            p_acc: prediction_accuracy(&model, &test)?,
            c_acc: constraint_accuracy(&model, &test, &formula)?,
        });
    }
    Ok((reports, model))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SelectRule {
    /// Maximise `P * C`.
    #[default]
    Product,
    /// Maximise `P + C`.
    Sum,
}

impl SelectRule {
    pub fn score(self, p: f64, c: f64) -> f64 {
        match self {
            SelectRule::Product => p * c,
            SelectRule::Sum => p + c,
        }
    }

    pub fn parse(text: &str) -> Result<SelectRule, ExperimentError> {
        match text {
            "product" => Ok(SelectRule::Product),
            "sum" => Ok(SelectRule::Sum),
            _ => Err(config_err(format!("unknown selection rule {text:?}; expected product or sum"))),
        }
    }
}

/// Among the last `window` reports, the (P, C) pair with the largest
/// product; later epochs win ties. Uses all reports if there are fewer.
pub fn select_result(reports: &[EpochReport], window: usize) -> Option<(f64, f64)> {
    select_result_by(reports, window, SelectRule::Product)
}

pub fn select_result_by(reports: &[EpochReport], window: usize, rule: SelectRule) -> Option<(f64, f64)> {
    let start = reports.len().saturating_sub(window.max(1));
    let mut best: Option<&EpochReport> = None;
    for r in &reports[start..] {
        if best.is_none_or(|b| rule.score(r.p_acc, r.c_acc) >= rule.score(b.p_acc, b.c_acc)) {
            best = Some(r);
        }
    }
    best.map(|r| (r.p_acc, r.c_acc))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub p_acc: f64,
    pub c_acc: f64,
    pub reports: Vec<EpochReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the best weight; earlier rows win ties.
    pub best: usize,
    pub rule: SelectRule,
}

impl SweepResult {
    pub fn best_lambda(&self) -> f64 {
        self.rows[self.best].lambda
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("Lambda,Test-P-Acc,Test-C-Acc,Score\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{:.2},{:.2},{:.2}",
                r.lambda,
                r.p_acc,
                r.c_acc,
                self.rule.score(r.p_acc, r.c_acc)
            )
            .unwrap();
        }
        s
    }
}

/// Runs the base configuration once per weight on up to `jobs` threads and
/// picks the weight with the best selected (P, C) pair.
pub fn lambda_sweep(
    base: &ExperimentConfig,
    grid: &[f64],
    jobs: usize,
    rule: SelectRule,
) -> Result<SweepResult, ExperimentError> {
    if grid.is_empty() {
        return Err(config_err("empty lambda grid"));
    }
    let next = AtomicUsize::new(0);
    type Slot = Option<Result<Vec<EpochReport>, ExperimentError>>;
    let slots: Mutex<Vec<Slot>> =
        Mutex::new((0..grid.len()).map(|_| None).collect());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= grid.len() {
            break;
        }
        let mut cfg = base.clone();
        cfg.lambda = grid[k];
        let out = run(&cfg);
        slots.lock().unwrap()[k] = Some(out);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.clamp(1, grid.len()) {
            s.spawn(worker);
        }
        worker();
    });
    let mut rows = Vec::with_capacity(grid.len());
    for (k, slot) in slots.into_inner().unwrap().into_iter().enumerate() {
        let reports = slot.expect("every grid point is run").map_err(|e| ExperimentError::Sweep {
            lambda: grid[k],
            source: Box::new(e),
        })?;
        let (p_acc, c_acc) = select_result_by(&reports, DEFAULT_SELECT_WINDOW, rule).unwrap_or((0.0, 0.0));
        rows.push(SweepRow {
            lambda: grid[k],
            p_acc,
            c_acc,
            reports,
        });
    }
    let mut best = 0;
    for (k, r) in rows.iter().enumerate() {
        if rule.score(r.p_acc, r.c_acc) > rule.score(rows[best].p_acc, rows[best].c_acc) {
            best = k;
        }
    }
    Ok(SweepResult { rows, best, rule })
}

pub const REPORT_HEADER: &str = "Epoch,Train-CE-Loss,Train-L-Loss,Test-P-Acc,Test-C-Acc";

pub fn report_csv(reports: &[EpochReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in reports {
        writeln!(
            s,
            "{},{:.6},{:.6},{:.2},{:.2}",
            r.epoch, r.train_ce, r.train_logical, r.p_acc, r.c_acc
        )
        .unwrap();
    }
    s
}

pub fn write_report(reports: &[EpochReport], path: impl AsRef<Path>) -> Result<(), ExperimentError> {
    let path = path.as_ref();
    fs::write(path, report_csv(reports)).map_err(|e| io_err(path, e))
}
