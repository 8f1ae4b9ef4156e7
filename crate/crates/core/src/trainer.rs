//! Optimization engine shared by both probes: the adaptive-moment update,
//! seeded minibatching, early stopping on a dev metric, and the multi-seed
//! protocol.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A model whose trainable tensors can be walked in a fixed order. Gradients
/// use the same type as the parameters they belong to.
pub trait ParamSet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));
}

/// Named flat copies of every parameter tensor, in visit order.
pub fn flatten<P: ParamSet + ?Sized>(p: &P) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, values| out.push((name.to_string(), values.to_vec())));
    out
}

/// `dst += src`, tensor by tensor.
pub fn accumulate<P: ParamSet>(dst: &mut P, src: &P) {
    let flat = flatten(src);
    let mut idx = 0;
    dst.visit_mut("", &mut |_, values| {
        for (d, s) in values.iter_mut().zip(&flat[idx].1) {
            *d += s;
        }
        idx += 1;
    });
}

pub fn num_params<P: ParamSet>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, v| n += v.len());
    n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptState {
    pub moments: Vec<(String, Vec<f64>, Vec<f64>)>,
    pub step: u64,
    pub adam: AdamConfig,
}

impl OptState {
    pub fn new(adam: AdamConfig) -> Self {
        Self {
            moments: Vec::new(),
            step: 0,
            adam,
        }
    }
}

/// One bias-corrected adaptive-moment update of `params` along `grads`.
pub fn adam_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut OptState, lr: f64) -> Result<()> {
    let grads = flatten(grads);
    if let Some((name, _)) = grads.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteGradient(name.clone()));
    }
    let mut shapes = Vec::new();
    params.visit("", &mut |name, values| shapes.push((name.to_string(), values.len())));
    let mirrors = shapes.len() == grads.len()
        && shapes.iter().zip(&grads).all(|((n, len), (gn, g))| n == gn && *len == g.len());
    if !mirrors {
        return Err(Error::shape("gradient does not mirror parameters"));
    }
    if state.moments.is_empty() {
        state.moments = shapes
            .iter()
            .map(|(n, len)| (n.clone(), vec![0.0; *len], vec![0.0; *len]))
            .collect();
    }
    let stale = state.moments.len() != shapes.len()
        || state.moments.iter().zip(&shapes).any(|((n, m, _), (sn, len))| n != sn || m.len() != *len);
    if stale {
        return Err(Error::shape("optimizer state does not mirror parameters"));
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, epsilon } = state.adam;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut idx = 0;
    let moments = &mut state.moments;
    params.visit_mut("", &mut |_, values| {
        let (_, m, v) = &mut moments[idx];
        let g = &grads[idx].1;
        for k in 0..values.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            values[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        idx += 1;
    });
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("64")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub precision: Precision,
    pub shuffle: bool,
}

pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 2019];

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seeds: DEFAULT_SEEDS.to_vec(),
            precision: Precision::F64,
            shuffle: true,
        }
    }
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

pub(crate) fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

pub(crate) fn join_list<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub const KEYS: [&'static str; 7] = [
        "learning_rate",
        "batch_size",
        "max_epochs",
        "patience",
        "seeds",
        "precision",
        "shuffle",
    ];

    /// Apply one `key = value` setting. Returns false if the key is not a
    /// training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "precision" => match value.trim() {
                "64" | "f64" => self.precision = Precision::F64,
                other => return Err(Error::Config(format!("unsupported precision {other:?}"))),
            },
            "shuffle" => self.shuffle = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("max_epochs".into(), self.max_epochs.to_string()),
            ("patience".into(), self.patience.to_string()),
            ("seeds".into(), join_list(&self.seeds)),
            ("precision".into(), self.precision.to_string()),
            ("shuffle".into(), self.shuffle.to_string()),
        ]
    }
}

/// Parse `key = value` lines. `#` starts a comment; dashes in keys are
/// normalized to underscores.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Example order for one epoch: a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + epoch as u64);
        order.shuffle(&mut rng);
    }
    order
}

/// RNG for parameter initialization, on a stream disjoint from shuffling.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Tracks the best dev metric. Ties keep the earlier epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, metric: f64) -> StopDecision {
        self.epoch += 1;
        let improved = self.best.is_none_or(|(_, b)| metric > b);
        if improved {
            self.best = Some((self.epoch, metric));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: !improved && self.since_best > self.patience,
        }
    }

    /// `(epoch, metric)` of the best observation, epochs counted from 1.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub model: P,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Minibatch training of `init` on `n_train` examples. `loss_grad(model, i)`
/// returns the loss and gradient of example `i`; batch gradients are summed in
/// example order. `dev_metric` scores a model (higher is better); the returned
/// model is the snapshot with the best dev metric.
pub fn fit<P, L, E>(
    init: P,
    n_train: usize,
    config: &TrainConfig,
    seed: u64,
    loss_grad: L,
    mut dev_metric: E,
) -> Result<TrainOutcome<P>>
where
    P: ParamSet + Clone + Send + Sync,
    L: Fn(&P, usize) -> Result<(f64, P)> + Sync,
    E: FnMut(&P) -> Result<f64>,
{
    config.validate()?;
    let mut model = init.clone();
    let mut best = init;
    let mut state = OptState::new(AdamConfig::default());
    let mut stopper = EarlyStopping::new(config.patience);
    let mut trace = Vec::new();

    for epoch in 1..=config.max_epochs {
        let order = epoch_order(n_train, seed, epoch - 1, config.shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, P)>> = batch
                .par_iter()
                .map(|&i| loss_grad(&model, i))
                .collect();
            let mut total: Option<P> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, grad) = r?;
                batch_loss += loss;
                match total.as_mut() {
                    Some(t) => accumulate(t, &grad),
                    None => total = Some(grad),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("batch loss is {batch_loss}"),
                });
            }
            epoch_loss += batch_loss;
            if let Some(grad) = total {
                adam_step(&mut model, &grad, &mut state, config.learning_rate)?;
            }
        }
        let metric = dev_metric(&model)?;
        trace.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            dev_metric: metric,
        });
        let decision = stopper.observe(metric);
        if decision.improved {
            best = model.clone();
        }
        if decision.stop {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        trace,
        best_epoch: stopper.best().map(|(e, _)| e),
    })
}

/// Per-seed results and their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary<T> {
    pub per_seed: Vec<(u64, T)>,
    pub mean: f64,
}

/// Run one independent job per seed (in parallel) and average `metric` over
/// the results. Errors are annotated with the failing seed.
pub fn run_seeds<T, J, M>(seeds: &[u64], job: J, metric: M) -> Result<SeedSummary<T>>
where
    T: Send,
    J: Fn(u64) -> Result<T> + Sync,
    M: Fn(&T) -> f64,
{
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    let results: Vec<Result<T>> = seeds.par_iter().map(|&s| job(s)).collect();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for (&seed, r) in seeds.iter().zip(results) {
        let value = r.map_err(|e| Error::Seed {
            seed,
            source: Box::new(e),
        })?;
        per_seed.push((seed, value));
    }
    let mean = per_seed.iter().map(|(_, t)| metric(t)).sum::<f64>() / per_seed.len() as f64;
    Ok(SeedSummary { per_seed, mean })
}
