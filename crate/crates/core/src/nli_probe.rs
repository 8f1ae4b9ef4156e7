//! Relation probe for sentence pairs.
//!
//! Every premise token `p_i` and hypothesis token `h_j` interact through `R`
//! bilinear forms, giving a relation vector `h_ij[r] = p_i W_r h_j`. The
//! vectors are max-pooled element-wise over all `(i, j)` and a linear layer
//! scores the three labels. There is no other interaction between tokens.

use ndarray::{s, Array1, Array2, Array3};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{NliLabel, NliPair, RelationAnnotation, RelationType};
use crate::crf::log_sum_exp;
use crate::embedstore::{mix, mix_backward, EmbeddingRecord, EmbeddingStore, MixWeights};
use crate::error::{Error, Result};
use crate::trainer::{self, parse_value, ParamSet, SeedSummary, TrainConfig, TrainOutcome};

pub const NUM_LABELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct NliConfig {
    /// Relation dimension `R`.
    pub rank: usize,
    pub label_bias: bool,
    /// Share one layer mix between premise and hypothesis.
    pub tie_mix: bool,
}

impl Default for NliConfig {
    fn default() -> Self {
        Self {
            rank: 128,
            label_bias: true,
            tie_mix: true,
        }
    }
}

impl NliConfig {
    pub const KEYS: [&'static str; 3] = ["rank", "label_bias", "tie_mix"];

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "rank" => self.rank = parse_value(key, value)?,
            "label_bias" => self.label_bias = parse_value(key, value)?,
            "tie_mix" => self.tie_mix = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("rank".into(), self.rank.to_string()),
            ("label_bias".into(), self.label_bias.to_string()),
            ("tie_mix".into(), self.tie_mix.to_string()),
        ]
    }
}

/// `weights[r]` is the `D x D` bilinear form `W_r`; `label_weights` is
/// `3 x R` in label order (entailment, contradiction, neutral).
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearParams {
    pub weights: Array3<f64>,
    pub label_weights: Array2<f64>,
    pub label_bias: Array1<f64>,
}

impl BilinearParams {
    pub fn zeros(rank: usize, dim: usize) -> Self {
        Self {
            weights: Array3::zeros((rank, dim, dim)),
            label_weights: Array2::zeros((NUM_LABELS, rank)),
            label_bias: Array1::zeros(NUM_LABELS),
        }
    }

    pub fn rank(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }
}

impl ParamSet for BilinearParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&format!("{prefix}weights"), self.weights.as_slice().unwrap());
        f(&format!("{prefix}label_weights"), self.label_weights.as_slice().unwrap());
        f(&format!("{prefix}label_bias"), self.label_bias.as_slice().unwrap());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{prefix}weights"), self.weights.as_slice_mut().unwrap());
        f(&format!("{prefix}label_weights"), self.label_weights.as_slice_mut().unwrap());
        f(&format!("{prefix}label_bias"), self.label_bias.as_slice_mut().unwrap());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NliProbeModel {
    pub mix_premise: MixWeights,
    /// `None` when the hypothesis shares the premise mix.
    pub mix_hypothesis: Option<MixWeights>,
    pub bilinear: BilinearParams,
    pub use_label_bias: bool,
}

impl NliProbeModel {
    /// `W_r = 0.1 I + U(-0.01, 0.01)`, Glorot-uniform label weights, zero bias.
    pub fn new(num_layers: usize, dim: usize, config: &NliConfig, seed: u64) -> Result<Self> {
        if num_layers == 0 || dim == 0 || config.rank == 0 {
            return Err(Error::Config("layers, dimension and rank must be positive".into()));
        }
        let mut rng = trainer::init_rng(seed);
        let weights = Array3::from_shape_fn((config.rank, dim, dim), |(_, a, b)| {
            let noise = rng.gen_range(-0.01..0.01);
            if a == b {
                0.1 + noise
            } else {
                noise
            }
        });
        let bound = (6.0 / (config.rank + NUM_LABELS) as f64).sqrt();
        let label_weights = Array2::from_shape_simple_fn((NUM_LABELS, config.rank), || rng.gen_range(-bound..bound));
        Ok(Self {
            mix_premise: MixWeights::new(num_layers),
            mix_hypothesis: (!config.tie_mix).then(|| MixWeights::new(num_layers)),
            bilinear: BilinearParams {
                weights,
                label_weights,
                label_bias: Array1::zeros(NUM_LABELS),
            },
            use_label_bias: config.label_bias,
        })
    }

    pub fn config(&self) -> NliConfig {
        NliConfig {
            rank: self.bilinear.rank(),
            label_bias: self.use_label_bias,
            tie_mix: self.mix_hypothesis.is_none(),
        }
    }

    pub fn hypothesis_mix(&self) -> &MixWeights {
        self.mix_hypothesis.as_ref().unwrap_or(&self.mix_premise)
    }

    fn check_record(&self, record: &EmbeddingRecord) -> Result<()> {
        if record.dim() != self.bilinear.dim() {
            return Err(Error::shape(format!(
                "record {:?} has dimension {}, model expects {}",
                record.id(),
                record.dim(),
                self.bilinear.dim()
            )));
        }
        Ok(())
    }

    /// Mixed `(P, H)` matrices for a pair of records.
    pub fn embed(&self, premise: &EmbeddingRecord, hypothesis: &EmbeddingRecord) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_record(premise)?;
        self.check_record(hypothesis)?;
        Ok((mix(premise, &self.mix_premise)?, mix(hypothesis, self.hypothesis_mix())?))
    }
}

impl ParamSet for NliProbeModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.mix_premise.visit(&format!("{prefix}mix_premise."), f);
        if let Some(m) = &self.mix_hypothesis {
            m.visit(&format!("{prefix}mix_hypothesis."), f);
        }
        self.bilinear.visit(&format!("{prefix}bilinear."), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.mix_premise.visit_mut(&format!("{prefix}mix_premise."), f);
        if let Some(m) = &mut self.mix_hypothesis {
            m.visit_mut(&format!("{prefix}mix_hypothesis."), f);
        }
        self.bilinear.visit_mut(&format!("{prefix}bilinear."), f);
    }
}

/// `S[r] = P W_r H^T`, an `R x L1 x L2` tensor.
pub fn relation_tensor(bilinear: &BilinearParams, premise: &Array2<f64>, hypothesis: &Array2<f64>) -> Result<Array3<f64>> {
    let d = bilinear.dim();
    if premise.ncols() != d || hypothesis.ncols() != d {
        return Err(Error::shape(format!(
            "token dimensions ({}, {}) do not match bilinear dimension {d}",
            premise.ncols(),
            hypothesis.ncols()
        )));
    }
    let (l1, l2) = (premise.nrows(), hypothesis.nrows());
    let mut out = Array3::zeros((bilinear.rank(), l1, l2));
    for (r, w) in bilinear.weights.outer_iter().enumerate() {
        let s = premise.dot(&w).dot(&hypothesis.t());
        out.slice_mut(s![r, .., ..]).assign(&s);
    }
    Ok(out)
}

/// The relation vector `h_ij` between premise token `i` and hypothesis token `j`.
pub fn relation_rep(relations: &Array3<f64>, i: usize, j: usize) -> Result<Array1<f64>> {
    let (_, l1, l2) = relations.dim();
    if i >= l1 || j >= l2 {
        return Err(Error::shape(format!("token pair ({i}, {j}) outside {l1} x {l2}")));
    }
    Ok(relations.slice(s![.., i, j]).to_owned())
}

/// Element-wise max over all token pairs, with the first (row-major)
/// arg-max position per component.
pub fn max_pool(relations: &Array3<f64>) -> (Array1<f64>, Vec<(usize, usize)>) {
    let rank = relations.shape()[0];
    let mut pooled = Array1::from_elem(rank, f64::NEG_INFINITY);
    let mut argmax = vec![(0, 0); rank];
    for (r, slab) in relations.outer_iter().enumerate() {
        for ((i, j), &v) in slab.indexed_iter() {
            if v > pooled[r] {
                pooled[r] = v;
                argmax[r] = (i, j);
            }
        }
    }
    (pooled, argmax)
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let lse = log_sum_exp(logits.iter());
    logits.mapv(|v| (v - lse).exp())
}

fn label_logits(bilinear: &BilinearParams, pooled: &Array1<f64>, use_bias: bool) -> Array1<f64> {
    let mut logits = bilinear.label_weights.dot(pooled);
    if use_bias {
        logits += &bilinear.label_bias;
    }
    logits
}

/// Label logits computed straight from mixed matrices.
pub fn logits(model: &NliProbeModel, premise: &Array2<f64>, hypothesis: &Array2<f64>) -> Result<Array1<f64>> {
    let (pooled, _) = max_pool(&relation_tensor(&model.bilinear, premise, hypothesis)?);
    Ok(label_logits(&model.bilinear, &pooled, model.use_label_bias))
}

#[derive(Debug, Clone)]
pub struct NliForward {
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
    pub loss: f64,
    pub grad: NliProbeModel,
}

/// Cross-entropy of `label` and its gradient. The max-pool routes gradient to
/// the arg-max token pair of each component only.
pub fn logits_and_loss(
    model: &NliProbeModel,
    premise: &EmbeddingRecord,
    hypothesis: &EmbeddingRecord,
    label: NliLabel,
) -> Result<NliForward> {
    let (p, h) = model.embed(premise, hypothesis)?;
    let bil = &model.bilinear;
    let relations = relation_tensor(bil, &p, &h)?;
    let (pooled, argmax) = max_pool(&relations);
    let logits = label_logits(bil, &pooled, model.use_label_bias);
    let probabilities = softmax(&logits);
    let loss = -probabilities[label.index()].ln();

    let mut d_logits = probabilities.clone();
    d_logits[label.index()] -= 1.0;
    let d_label_weights = Array2::from_shape_fn((NUM_LABELS, pooled.len()), |(k, r)| d_logits[k] * pooled[r]);
    let d_label_bias = if model.use_label_bias {
        d_logits.clone()
    } else {
        Array1::zeros(NUM_LABELS)
    };
    let d_pooled = bil.label_weights.t().dot(&d_logits);

    let mut d_weights = Array3::zeros(bil.weights.raw_dim());
    let mut d_p = Array2::zeros(p.raw_dim());
    let mut d_h = Array2::zeros(h.raw_dim());
    for (r, &(i, j)) in argmax.iter().enumerate() {
        let g = d_pooled[r];
        if g == 0.0 {
            continue;
        }
        let (pi, hj) = (p.row(i), h.row(j));
        let w = bil.weights.slice(s![r, .., ..]);
        let mut dw = d_weights.slice_mut(s![r, .., ..]);
        for ((a, b), v) in dw.indexed_iter_mut() {
            *v += g * pi[a] * hj[b];
        }
        d_p.row_mut(i).scaled_add(g, &w.dot(&hj));
        d_h.row_mut(j).scaled_add(g, &w.t().dot(&pi));
    }

    let mut d_mix_premise = mix_backward(premise, &model.mix_premise, &d_p)?;
    let d_mix_hypothesis = mix_backward(hypothesis, model.hypothesis_mix(), &d_h)?;
    let mix_hypothesis = match model.mix_hypothesis {
        Some(_) => Some(d_mix_hypothesis),
        None => {
            d_mix_premise.add_assign(&d_mix_hypothesis);
            None
        }
    };
    Ok(NliForward {
        logits,
        probabilities,
        loss,
        grad: NliProbeModel {
            mix_premise: d_mix_premise,
            mix_hypothesis,
            bilinear: BilinearParams {
                weights: d_weights,
                label_weights: d_label_weights,
                label_bias: d_label_bias,
            },
            use_label_bias: model.use_label_bias,
        },
    })
}

/// Arg-max label; ties resolve in label order.
pub fn predict_from_logits(logits: &Array1<f64>) -> NliLabel {
    let mut best = 0;
    for (k, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = k;
        }
    }
    NliLabel::from_index(best).expect("three logits")
}

pub fn predict(model: &NliProbeModel, premise: &EmbeddingRecord, hypothesis: &EmbeddingRecord) -> Result<NliLabel> {
    let (p, h) = model.embed(premise, hypothesis)?;
    Ok(predict_from_logits(&logits(model, &p, &h)?))
}

fn pair_records<'a>(store: &'a EmbeddingStore, pair: &NliPair) -> Result<(&'a EmbeddingRecord, &'a EmbeddingRecord)> {
    let check = |key: String, len: usize| -> Result<&'a EmbeddingRecord> {
        let r = store.require(&key)?;
        if r.seq_len() != len {
            return Err(Error::validation(format!(
                "record {key:?} has {} positions, sentence has {len} tokens",
                r.seq_len()
            )));
        }
        Ok(r)
    };
    Ok((
        check(pair.premise_key(), pair.premise_tokens.len())?,
        check(pair.hypothesis_key(), pair.hypothesis_tokens.len())?,
    ))
}

pub fn predict_pairs(model: &NliProbeModel, pairs: &[NliPair], store: &EmbeddingStore) -> Result<Vec<NliLabel>> {
    pairs
        .par_iter()
        .map(|pair| {
            let (p, h) = pair_records(store, pair)?;
            predict(model, p, h)
        })
        .collect()
}

/// Fraction of pairs whose predicted label matches the gold label.
pub fn accuracy(predicted: &[NliLabel], pairs: &[NliPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(pairs).filter(|(p, g)| **p == g.label).count();
    correct as f64 / pairs.len() as f64
}

pub fn evaluate_pairs(model: &NliProbeModel, pairs: &[NliPair], store: &EmbeddingStore) -> Result<f64> {
    Ok(accuracy(&predict_pairs(model, pairs, store)?, pairs))
}

/// Minibatch cross-entropy training keeping the best-dev-accuracy snapshot.
pub fn train(
    init: NliProbeModel,
    train_set: (&[NliPair], &EmbeddingStore),
    dev_set: (&[NliPair], &EmbeddingStore),
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<NliProbeModel>> {
    let (train_pairs, train_store) = train_set;
    let (dev_pairs, dev_store) = dev_set;
    let examples = train_pairs
        .iter()
        .map(|pair| {
            let (p, h) = pair_records(train_store, pair)?;
            init.check_record(p)?;
            init.check_record(h)?;
            Ok((p, h, pair.label))
        })
        .collect::<Result<Vec<_>>>()?;
    for pair in dev_pairs {
        pair_records(dev_store, pair)?;
    }
    trainer::fit(
        init,
        examples.len(),
        config,
        seed,
        |model, i| {
            let (p, h, label) = examples[i];
            let out = logits_and_loss(model, p, h, label)?;
            Ok((out.loss, out.grad))
        },
        |model| evaluate_pairs(model, dev_pairs, dev_store),
    )
}

/// A relation vector with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationRep {
    pub pair_id: String,
    pub premise_index: usize,
    pub hypothesis_index: usize,
    pub relation_type: Option<RelationType>,
    pub values: Vec<f64>,
}

impl RelationRep {
    /// Store id `"<pair_id>:<i>:<j>"`.
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.pair_id, self.premise_index, self.hypothesis_index)
    }
}

/// Relation vectors at the annotated token pairs.
pub fn extract_relation_reps(
    model: &NliProbeModel,
    annotations: &[RelationAnnotation],
    pairs: &[NliPair],
    store: &EmbeddingStore,
) -> Result<Vec<RelationRep>> {
    annotations
        .par_iter()
        .map(|a| {
            let pair = pairs
                .iter()
                .find(|p| p.id == a.pair_id)
                .ok_or_else(|| Error::validation(format!("unknown pair id {:?}", a.pair_id)))?;
            let (pr, hr) = pair_records(store, pair)?;
            let (p, h) = model.embed(pr, hr)?;
            let relations = relation_tensor(&model.bilinear, &p, &h)?;
            let values = relation_rep(&relations, a.premise_index, a.hypothesis_index)?;
            Ok(RelationRep {
                pair_id: a.pair_id.clone(),
                premise_index: a.premise_index,
                hypothesis_index: a.hypothesis_index,
                relation_type: Some(a.relation_type),
                values: values.to_vec(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NliSeedRun {
    pub outcome: TrainOutcome<NliProbeModel>,
    pub dev_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

impl NliSeedRun {
    pub fn headline_accuracy(&self) -> f64 {
        self.test_accuracy.unwrap_or(self.dev_accuracy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NliData<'a> {
    pub train: (&'a [NliPair], &'a EmbeddingStore),
    pub dev: (&'a [NliPair], &'a EmbeddingStore),
    pub test: Option<(&'a [NliPair], &'a EmbeddingStore)>,
}

pub fn run_seeds(nli: &NliConfig, config: &TrainConfig, data: NliData<'_>) -> Result<SeedSummary<NliSeedRun>> {
    config.validate()?;
    let (pairs, store) = data.train;
    let first = pairs
        .first()
        .ok_or_else(|| Error::validation("training pairs are empty"))?;
    let record = store.require(&first.premise_key())?;
    let (layers, dim) = (record.num_layers(), record.dim());
    trainer::run_seeds(
        &config.seeds,
        |seed| {
            let init = NliProbeModel::new(layers, dim, nli, seed)?;
            let outcome = train(init, data.train, data.dev, config, seed)?;
            let dev_accuracy = evaluate_pairs(&outcome.model, data.dev.0, data.dev.1)?;
            let test_accuracy = data
                .test
                .map(|(p, s)| evaluate_pairs(&outcome.model, p, s))
                .transpose()?;
            Ok(NliSeedRun {
                outcome,
                dev_accuracy,
                test_accuracy,
            })
        },
        NliSeedRun::headline_accuracy,
    )
}
