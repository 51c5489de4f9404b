//! Multilayer perceptron classifier (ReLU hidden layers, softmax output)
//! trained on cross-entropy plus a weighted logical loss.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Arith, NodeId, Plain, Tape};
use crate::data::Dataset;
use crate::formula::{Env, Formula, FormulaError};
use crate::logics::{compile, CompileError, LogicBackend};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("a model needs at least 2 layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive, got {0:?}")]
    ZeroWidth(Vec<usize>),
    #[error("expected input of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("momentum must lie in [0, 1), got {0}")]
    Momentum(f64),
    #[error("logical weight must be non-negative and finite, got {0}")]
    Lambda(f64),
    #[error("non-finite loss (cross-entropy {ce}, logical {logical}) under backend {backend} at lambda {lambda}")]
    NonFinite {
        ce: f64,
        logical: f64,
        backend: String,
        lambda: f64,
    },
    #[error("constraint: {0}")]
    Constraint(#[from] CompileError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<FormulaError> for NetworkError {
    fn from(e: FormulaError) -> Self {
        NetworkError::Constraint(CompileError::Formula(e))
    }
}

/// Parameters are stored flat: for each layer, the weight matrix
/// (outputs x inputs, row-major) followed by the bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_sizes(sizes: &[usize]) -> Result<(), NetworkError> {
    if sizes.len() < 2 {
        return Err(NetworkError::TooFewLayers(sizes.len()));
    }
    if sizes.contains(&0) {
        return Err(NetworkError::ZeroWidth(sizes.to_vec()));
    }
    Ok(())
}

impl Model {
    /// Uniform weights in `±1/sqrt(fan_in)`, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Model, NetworkError> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Model {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Model, NetworkError> {
        check_sizes(sizes)?;
        Ok(Model {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Model, NetworkError> {
        check_sizes(sizes)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NetworkError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        Ok(Model {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// (weight offset, bias offset, fan in, fan out) per layer.
    fn layout(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let (n_in, n_out) = (w[0], w[1]);
            let wo = off;
            off += n_in * n_out + n_out;
            (wo, wo + n_in * n_out, n_in, n_out)
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetworkError> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let mut acts = Activations::default();
        self.forward_cached(x, &mut acts)?;
        Ok(acts.probs)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, NetworkError> {
        Ok(argmax(&self.forward(x)?))
    }

    fn forward_cached(&self, x: &[f64], acts: &mut Activations) -> Result<(), NetworkError> {
        self.check_input(x)?;
        let n_layers = self.sizes.len() - 1;
        acts.layers.resize(n_layers + 1, Vec::new());
        acts.layers[0].clear();
        acts.layers[0].extend_from_slice(x);
        for (k, (wo, bo, n_in, n_out)) in self.layout().enumerate() {
            let (before, after) = acts.layers.split_at_mut(k + 1);
            let input = &before[k];
            let out = &mut after[0];
            out.clear();
            for j in 0..n_out {
                let row = &self.params[wo + j * n_in..wo + (j + 1) * n_in];
                let z = self.params[bo + j] + dot(row, input);
                // hidden layers store post-ReLU values; the last stores logits
                out.push(if k + 1 < n_layers { z.max(0.0) } else { z });
            }
        }
        let logits = &acts.layers[n_layers];
        acts.probs.clear();
        acts.probs.extend_from_slice(logits);
        acts.log_norm = softmax_in_place(&mut acts.probs);
        Ok(())
    }

    /// Backpropagates `dlogits` through cached activations into `grad`.
    fn backward(&self, acts: &Activations, dlogits: &[f64], grad: &mut [f64], scratch: &mut Vec<f64>) {
        let layout: Vec<_> = self.layout().collect();
        let mut delta = dlogits.to_vec();
        for (k, &(wo, bo, n_in, n_out)) in layout.iter().enumerate().rev() {
            let input = &acts.layers[k];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                grad[bo + j] += d;
                let g = &mut grad[wo + j * n_in..wo + (j + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if k == 0 {
                break;
            }
            scratch.clear();
            scratch.resize(n_in, 0.0);
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let row = &self.params[wo + j * n_in..wo + (j + 1) * n_in];
                for (s, w) in scratch.iter_mut().zip(row) {
                    *s += d * w;
                }
            }
            // ReLU: the stored activation is positive exactly when z > 0
            for (s, a) in scratch.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *s = 0.0;
                }
            }
            std::mem::swap(&mut delta, scratch);
        }
    }

    /// Records the forward pass on `tape` with `params` as parameter nodes.
    /// Returns the probability nodes.
    pub fn forward_on_tape(&self, tape: &mut Tape, params: &[NodeId], x: &[f64]) -> Result<Vec<NodeId>, NetworkError> {
        Ok(self.logits_on_tape(tape, params, x)?.1)
    }

    /// Returns (log-probabilities, probabilities) recorded on the tape.
    fn logits_on_tape(
        &self,
        tape: &mut Tape,
        params: &[NodeId],
        x: &[f64],
    ) -> Result<(Vec<NodeId>, Vec<NodeId>), NetworkError> {
        self.check_input(x)?;
        if params.len() != self.params.len() {
            return Err(NetworkError::ParamCount {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let zero = tape.constant(0.0);
        let mut a: Vec<NodeId> = x.iter().map(|v| tape.constant(*v)).collect();
        let dom = |e| NetworkError::Constraint(CompileError::Domain(e));
        for (k, (wo, bo, n_in, n_out)) in self.layout().enumerate() {
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let mut z = params[bo + j];
                for i in 0..n_in {
                    let t = tape.mul(params[wo + j * n_in + i], a[i]).map_err(dom)?;
                    z = tape.add(z, t).map_err(dom)?;
                }
                next.push(if k + 1 < n_layers {
                    tape.max(z, zero).map_err(dom)?
                } else {
                    z
                });
            }
            a = next;
        }
        let m = a.iter().map(|z| tape.value(*z)).fold(f64::NEG_INFINITY, f64::max);
        let m = tape.constant(m);
        let mut shifted = Vec::with_capacity(a.len());
        let mut exps = Vec::with_capacity(a.len());
        for z in &a {
            let s = tape.sub(*z, m).map_err(dom)?;
            shifted.push(s);
            exps.push(tape.exp(s).map_err(dom)?);
        }
        let mut total = exps[0];
        for e in &exps[1..] {
            total = tape.add(total, *e).map_err(dom)?;
        }
        let log_total = tape.ln(total).map_err(dom)?;
        let mut log_probs = Vec::with_capacity(a.len());
        let mut probs = Vec::with_capacity(a.len());
        for (s, e) in shifted.iter().zip(&exps) {
            log_probs.push(tape.sub(*s, log_total).map_err(dom)?);
            probs.push(tape.div(*e, total).map_err(dom)?);
        }
        Ok((log_probs, probs))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("difflogic-mlp 1\nsizes");
        for n in &self.sizes {
            write!(s, " {n}").unwrap();
        }
        s.push('\n');
        for p in &self.params {
            writeln!(s, "{p:e}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Model, NetworkError> {
        let bad = |m: &str| NetworkError::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("difflogic-mlp 1") {
            return Err(bad("missing or unsupported header"));
        }
        let sizes: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("sizes"))
            .ok_or_else(|| bad("missing sizes line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad layer size")))
            .collect::<Result<_, _>>()?;
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad parameter value")))
            .collect::<Result<Vec<_>, _>>()?;
        Model::from_params(&sizes, params)
    }

    /// Text checkpoint: a header line, the layer sizes, then one parameter
    /// per line in storage order, written so that reading restores the
    /// exact bits.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, NetworkError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Model::from_text(&text)
    }
}

#[derive(Clone, Debug, Default)]
struct Activations {
    /// Input, post-ReLU hidden activations, then logits.
    layers: Vec<Vec<f64>>,
    probs: Vec<f64>,
    /// log of the softmax normaliser after max-shift, plus the shift.
    log_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax in place; returns log-sum-exp of the input.
fn softmax_in_place(v: &mut [f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    m + total.ln()
}

/// Inputs and labels of one minibatch.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: Vec<&'a [f64]>, labels: Vec<usize>) -> Batch<'a> {
        Batch { inputs, labels }
    }

    pub fn from_dataset(d: &'a Dataset, indices: &[usize]) -> Batch<'a> {
        Batch {
            inputs: indices.iter().map(|&i| d.row(i)).collect(),
            labels: indices.iter().map(|&i| d.label(i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Cross-entropy plus `lambda` times a constraint loss.
#[derive(Clone, Debug)]
pub struct Objective {
    pub lambda: f64,
    pub backend: LogicBackend,
    /// The constraint as prepared for the backend.
    constraint: Formula,
    pairs: bool,
}

impl Objective {
    pub fn new(lambda: f64, backend: LogicBackend, constraint: &Formula) -> Result<Objective, NetworkError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(NetworkError::Lambda(lambda));
        }
        let constraint = backend.prepare(constraint)?;
        Ok(Objective {
            lambda,
            pairs: constraint.uses_pairs(),
            backend,
            constraint,
        })
    }

    pub fn constraint(&self) -> &Formula {
        &self.constraint
    }

    /// Sample groups the constraint is evaluated on: single samples, or
    /// consecutive disjoint pairs for two-sample constraints.
    fn units(&self, n: usize) -> Vec<(usize, Option<usize>)> {
        if self.pairs {
            (0..n / 2).map(|k| (2 * k, Some(2 * k + 1))).collect()
        } else {
            (0..n).map(|i| (i, None)).collect()
        }
    }
}

/// Mean losses over a batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLoss {
    pub ce: f64,
    pub logical: f64,
    /// Smallest distance of any ReLU input or logic branch from its kink.
    pub margin: f64,
}

impl StepLoss {
    pub fn total(&self, lambda: f64) -> f64 {
        self.ce + lambda * self.logical
    }
}

fn check_batch(model: &Model, batch: &Batch<'_>) -> Result<(), NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let classes = model.n_classes();
    for (x, &label) in batch.inputs.iter().zip(&batch.labels) {
        model.check_input(x)?;
        if label >= classes {
            return Err(NetworkError::Label { label, classes });
        }
    }
    Ok(())
}

fn unit_env<'a, V>(outs: &'a [Vec<V>], ins: &'a [&'a [V]], i: usize, j: Option<usize>) -> Env<'a, V> {
    let mut env = Env::new(&outs[i]).with_inputs(ins[i]);
    if let Some(j) = j {
        env = env.with_pair(&outs[j], ins[j]);
    }
    env
}

fn hidden_margin(acts: &Activations) -> f64 {
    let n = acts.layers.len();
    acts.layers[1..n - 1]
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, a| m.min(a.abs()))
}

/// Loss and gradient of the objective with respect to the flat parameters.
///
/// The network part is backpropagated analytically. Each constraint unit is
/// compiled on a small tape over the output probabilities, and the resulting
/// probability gradient is chained through the softmax.
pub fn loss_and_grad(model: &Model, batch: &Batch<'_>, obj: &Objective) -> Result<(StepLoss, Vec<f64>), NetworkError> {
    check_batch(model, batch)?;
    let n = batch.len();
    let classes = model.n_classes();
    let mut acts = vec![Activations::default(); n];
    let mut ce = 0.0;
    let mut margin = f64::INFINITY;
    // dL/dlogits per sample
    let mut dlogits = vec![vec![0.0; classes]; n];
    for i in 0..n {
        model.forward_cached(batch.inputs[i], &mut acts[i])?;
        let a = &acts[i];
        let label = batch.labels[i];
        ce += a.log_norm - a.layers.last().unwrap()[label];
        margin = margin.min(hidden_margin(a));
        for (k, d) in dlogits[i].iter_mut().enumerate() {
            *d = (a.probs[k] - if k == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    ce /= n as f64;

    let mut logical = 0.0;
    if obj.lambda > 0.0 {
        let units = obj.units(n);
        let weight = obj.lambda / units.len().max(1) as f64;
        let mut tape = Tape::new();
        let mut dprobs = vec![vec![0.0; classes]; n];
        for &(i, j) in &units {
            tape.clear();
            let members: Vec<usize> = std::iter::once(i).chain(j).collect();
            let mut outs: Vec<Vec<NodeId>> = vec![Vec::new(); n];
            let mut ins_store: Vec<Vec<NodeId>> = vec![Vec::new(); n];
            for &s in &members {
                outs[s] = acts[s].probs.iter().map(|p| tape.var(*p)).collect();
                if obj.constraint.uses_inputs() {
                    ins_store[s] = batch.inputs[s].iter().map(|x| tape.constant(*x)).collect();
                }
            }
            let ins: Vec<&[NodeId]> = ins_store.iter().map(|v| v.as_slice()).collect();
            let env = unit_env(&outs, &ins, i, j);
            let lv = compile(&mut tape, &obj.constraint, &obj.backend, &env)?;
            logical += tape.value(lv.loss);
            margin = margin.min(tape.branch_margin());
            let adj = tape.backward(lv.loss);
            for &s in &members {
                for (k, id) in outs[s].iter().enumerate() {
                    dprobs[s][k] += adj.get(id.index()).copied().unwrap_or(0.0);
                }
            }
        }
        logical /= units.len().max(1) as f64;
        for i in 0..n {
            let p = &acts[i].probs;
            let g = &dprobs[i];
            let inner = dot(p, g);
            for k in 0..classes {
                dlogits[i][k] += weight * p[k] * (g[k] - inner);
            }
        }
    }

    if !ce.is_finite() || !logical.is_finite() {
        return Err(NetworkError::NonFinite {
            ce,
            logical,
            backend: obj.backend.name().to_string(),
            lambda: obj.lambda,
        });
    }

    let mut grad = vec![0.0; model.num_params()];
    let mut scratch = Vec::new();
    for i in 0..n {
        model.backward(&acts[i], &dlogits[i], &mut grad, &mut scratch);
    }
    Ok((StepLoss { ce, logical, margin }, grad))
}

/// The objective evaluated without gradients.
pub fn batch_loss(model: &Model, batch: &Batch<'_>, obj: &Objective) -> Result<StepLoss, NetworkError> {
    check_batch(model, batch)?;
    let n = batch.len();
    let mut probs = Vec::with_capacity(n);
    let mut ce = 0.0;
    let mut margin = f64::INFINITY;
    let mut acts = Activations::default();
    for i in 0..n {
        model.forward_cached(batch.inputs[i], &mut acts)?;
        ce += acts.log_norm - acts.layers.last().unwrap()[batch.labels[i]];
        margin = margin.min(hidden_margin(&acts));
        probs.push(acts.probs.clone());
    }
    ce /= n as f64;
    let mut logical = 0.0;
    if obj.lambda > 0.0 {
        let units = obj.units(n);
        for &(i, j) in &units {
            let env = unit_env(&probs, &batch.inputs, i, j);
            logical += compile(&mut Plain, &obj.constraint, &obj.backend, &env)?.loss;
        }
        logical /= units.len().max(1) as f64;
    }
    Ok(StepLoss { ce, logical, margin })
}

/// Records the whole objective on a fresh tape. Returns the tape, the
/// parameter nodes and the loss node. Slower than [`loss_and_grad`]; used
/// to cross-check it.
pub fn objective_on_tape(model: &Model, batch: &Batch<'_>, obj: &Objective) -> Result<(Tape, Vec<NodeId>, NodeId), NetworkError> {
    check_batch(model, batch)?;
    let dom = |e| NetworkError::Constraint(CompileError::Domain(e));
    let n = batch.len();
    let mut tape = Tape::new();
    let params: Vec<NodeId> = model.params.iter().map(|p| tape.var(*p)).collect();
    let mut probs = Vec::with_capacity(n);
    let mut ins_store = Vec::with_capacity(n);
    let mut ce = tape.constant(0.0);
    for i in 0..n {
        let (log_p, p) = model.logits_on_tape(&mut tape, &params, batch.inputs[i])?;
        ce = tape.sub(ce, log_p[batch.labels[i]]).map_err(dom)?;
        probs.push(p);
        ins_store.push(batch.inputs[i].iter().map(|x| tape.constant(*x)).collect::<Vec<_>>());
    }
    let scale = tape.constant(1.0 / n as f64);
    let mut total = tape.mul(ce, scale).map_err(dom)?;
    if obj.lambda > 0.0 {
        let units = obj.units(n);
        let ins: Vec<&[NodeId]> = ins_store.iter().map(|v| v.as_slice()).collect();
        let mut logical = tape.constant(0.0);
        for &(i, j) in &units {
            let env = unit_env(&probs, &ins, i, j);
            let lv = compile(&mut tape, &obj.constraint, &obj.backend, &env)?;
            logical = tape.add(logical, lv.loss).map_err(dom)?;
        }
        let w = tape.constant(obj.lambda / units.len().max(1) as f64);
        let weighted = tape.mul(logical, w).map_err(dom)?;
        total = tape.add(total, weighted).map_err(dom)?;
    }
    Ok((tape, params, total))
}

/// Minibatch gradient descent with optional momentum.
#[derive(Clone, Debug)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Sgd, NetworkError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NetworkError::LearningRate(lr));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(NetworkError::Momentum(momentum));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, model: &mut Model, grad: &[f64]) {
        if self.momentum == 0.0 {
            for (p, g) in model.params.iter_mut().zip(grad) {
                *p -= self.lr * g;
            }
            return;
        }
        self.velocity.resize(grad.len(), 0.0);
        for ((p, v), g) in model.params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

/// One optimizer update on the batch. Returns the losses before the update.
pub fn train_step(model: &mut Model, opt: &mut Sgd, batch: &Batch<'_>, obj: &Objective) -> Result<StepLoss, NetworkError> {
    let (loss, grad) = loss_and_grad(model, batch, obj)?;
    opt.step(model, &grad);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff;
    use crate::constraints::{csim_formula, LabelTriple};
    use crate::logics::LogicParams;

    fn backend(name: &str) -> LogicBackend {
        LogicBackend::from_name(name, &LogicParams::default()).unwrap()
    }

    fn csim3() -> Formula {
        csim_formula(&[LabelTriple(0, 1, 2), LabelTriple(1, 2, 0), LabelTriple(2, 0, 1)], 3).unwrap()
    }

    #[test]
    fn init_examples() {
        let a = Model::init(&[2, 8, 3], 1).unwrap();
        assert_eq!(a.num_params(), 51);
        assert_eq!(a, Model::init(&[2, 8, 3], 1).unwrap());
        assert_ne!(a, Model::init(&[2, 8, 3], 2).unwrap());
        assert!(matches!(Model::init(&[3], 0), Err(NetworkError::TooFewLayers(1))));
        assert!(Model::init(&[], 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let z = Model::zeros(&[2, 4, 5]).unwrap();
        for p in z.forward(&[0.3, -1.0]).unwrap() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        let m = Model::init(&[2, 8, 3], 4).unwrap();
        let p = m.forward(&[1.5, -0.5]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!(matches!(m.forward(&[1.0]), Err(NetworkError::Dimension { .. })));
    }

    #[test]
    fn swapping_identical_hidden_units() {
        let mut m = Model::init(&[2, 3, 2], 9).unwrap();
        // make hidden units 0 and 1 identical, then swap them
        let p = m.params_mut();
        p[2] = p[0];
        p[3] = p[1];
        let before = m.forward(&[0.4, 0.9]).unwrap();
        // swap the matching columns of the output weights
        let p = m.params_mut();
        let out_w = 9;
        let (a, b) = (p[out_w], p[out_w + 1]);
        p[out_w] = b;
        p[out_w + 1] = a;
        let (a, b) = (p[out_w + 3], p[out_w + 4]);
        p[out_w + 3] = b;
        p[out_w + 4] = a;
        let swapped = m.forward(&[0.4, 0.9]).unwrap();
        for (a, b) in before.iter().zip(&swapped) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = Model::init(&[3, 5, 2], 11).unwrap();
        let back = Model::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(Model::from_text("nope").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap(), m);
    }

    fn sample_batch() -> (Vec<Vec<f64>>, Vec<usize>) {
        let xs = vec![vec![0.5, -1.0], vec![1.2, 0.3], vec![-0.7, 0.8], vec![0.1, 0.05]];
        (xs, vec![0, 2, 1, 2])
    }

    #[test]
    fn analytic_gradient_matches_tape_and_finite_differences() {
        let (xs, ys) = sample_batch();
        let batch = Batch::new(xs.iter().map(|x| x.as_slice()).collect(), ys);
        let mut model = Model::init(&[2, 4, 3], 5).unwrap();
        for p in model.params_mut() {
            *p *= 3.0;
        }
        for name in ["dl2", "rc", "godel", "yg", "tlk"] {
            let obj = Objective::new(0.7, backend(name), &csim3()).unwrap();
            let (loss, grad) = loss_and_grad(&model, &batch, &obj).unwrap();
            let (tape, params, root) = objective_on_tape(&model, &batch, &obj).unwrap();
            assert!((tape.value(root) - loss.total(0.7)).abs() < 1e-12);
            let g_tape = tape.grad(root, &params);
            for (k, id) in params.iter().enumerate() {
                assert!((g_tape.get(*id) - grad[k]).abs() < 1e-10, "{name} param {k}");
            }
            if loss.margin < 1e-3 {
                continue;
            }
            let fd = finite_diff(
                |p: &[f64]| {
                    let m = Model::from_params(model.sizes(), p.to_vec())?;
                    batch_loss(&m, &batch, &obj).map(|l| l.total(0.7))
                },
                model.params(),
                1e-5,
            )
            .unwrap();
            for (k, (a, b)) in grad.iter().zip(&fd).enumerate() {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                assert!(rel < 1e-3, "{name} param {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_lambda_ignores_constraint() {
        let (xs, ys) = sample_batch();
        let batch = Batch::new(xs.iter().map(|x| x.as_slice()).collect(), ys);
        let model = Model::init(&[2, 4, 3], 5).unwrap();
        let base = Objective::new(0.0, backend("dl2"), &csim3()).unwrap();
        let (l0, g0) = loss_and_grad(&model, &batch, &base).unwrap();
        for name in ["rc", "tg"] {
            let obj = Objective::new(0.0, backend(name), &csim3()).unwrap();
            let (l, g) = loss_and_grad(&model, &batch, &obj).unwrap();
            assert_eq!(l.ce, l0.ce);
            assert_eq!(l.logical, 0.0);
            assert_eq!(g, g0);
        }
        assert!(Objective::new(-1.0, backend("rc"), &csim3()).is_err());
    }

    #[test]
    fn satisfied_dl2_constraint_leaves_update_unchanged() {
        let (xs, ys) = sample_batch();
        let batch = Batch::new(xs.iter().map(|x| x.as_slice()).collect(), ys);
        let model = Model::init(&[2, 4, 3], 5).unwrap();
        let trivially_true = crate::formula::parse("out[0] >= 0", &crate::formula::ParseContext::new(3)).unwrap();
        let a = loss_and_grad(&model, &batch, &Objective::new(0.0, backend("dl2"), &trivially_true).unwrap()).unwrap();
        let b = loss_and_grad(&model, &batch, &Objective::new(1.0, backend("dl2"), &trivially_true).unwrap()).unwrap();
        assert_eq!(b.0.logical, 0.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn training_reduces_cross_entropy_on_separable_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..64 {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            xs.push(vec![centre + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
            ys.push(c);
        }
        let batch = Batch::new(xs.iter().map(|x| x.as_slice()).collect(), ys);
        let mut model = Model::init(&[2, 8, 2], 1).unwrap();
        let mut opt = Sgd::new(0.1, 0.0).unwrap();
        let f = crate::formula::parse("out[0] >= 0", &crate::formula::ParseContext::new(2)).unwrap();
        let obj = Objective::new(0.0, backend("dl2"), &f).unwrap();
        let first = train_step(&mut model, &mut opt, &batch, &obj).unwrap().ce;
        for _ in 0..49 {
            train_step(&mut model, &mut opt, &batch, &obj).unwrap();
        }
        let last = batch_loss(&model, &batch, &obj).unwrap().ce;
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn optimizer_validation() {
        assert!(Sgd::new(0.0, 0.0).is_err());
        assert!(Sgd::new(0.1, 1.0).is_err());
        assert!(Sgd::new(0.1, 0.9).is_ok());
    }
}
