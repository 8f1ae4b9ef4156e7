//! End-to-end NER probe: scalar-mixed frozen embeddings, a per-token
//! feed-forward network producing tag scores, and a linear-chain CRF on top.
//! Nothing in the model looks across token positions except the CRF's
//! transition scores.

mod eval;
mod ffn;

use ndarray::Array2;
use rayon::prelude::*;

pub use eval::{evaluate, EvalReport, SentencePrediction};
pub use ffn::{Activation, DenseLayer, Ffn};

use crate::corpus::{entities_from_bio_lenient, EntitySpan, Tag, TaggedCorpus};
use crate::crf::{nll_and_grad, viterbi_masked, CrfParams, TransitionMask};
use crate::embedstore::{mix, mix_backward, EmbeddingRecord, EmbeddingStore, MixWeights};
use crate::error::{Error, Result};
use crate::trainer::{self, join_list, parse_list, parse_value, ParamSet, SeedSummary, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct NerConfig {
    /// Hidden layer widths; empty means a single linear map to tag scores.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Forbid structurally invalid BIO paths at decode time.
    pub bio_constraint: bool,
}

impl Default for NerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512],
            activation: Activation::Relu,
            bio_constraint: true,
        }
    }
}

impl NerConfig {
    pub const KEYS: [&'static str; 3] = ["hidden", "activation", "bio_constraint"];

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "hidden" => self.hidden = parse_list(key, value)?,
            "activation" => {
                self.activation = value.trim().parse().map_err(Error::Config)?;
            }
            "bio_constraint" => self.bio_constraint = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("hidden".into(), join_list(&self.hidden)),
            ("activation".into(), self.activation.to_string()),
            ("bio_constraint".into(), self.bio_constraint.to_string()),
        ]
    }
}

/// Index <-> tag mapping with exactly one `O`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagVocab {
    tags: Vec<Tag>,
}

impl TagVocab {
    pub fn new(tags: Vec<Tag>) -> Result<Self> {
        let outside = tags.iter().filter(|t| **t == Tag::Outside).count();
        if outside != 1 {
            return Err(Error::validation(format!("tag vocabulary needs exactly one O tag, found {outside}")));
        }
        for (i, t) in tags.iter().enumerate() {
            if tags[..i].contains(t) {
                return Err(Error::validation(format!("duplicate tag {t} in vocabulary")));
            }
        }
        Ok(Self { tags })
    }

    /// `O`, then `B-X`, `I-X` for every entity type in sorted order.
    pub fn from_corpora(corpora: &[&TaggedCorpus]) -> Self {
        let mut types: Vec<&str> = corpora
            .iter()
            .flat_map(|c| c.sentences.iter())
            .flat_map(|s| s.tags.iter().filter_map(Tag::entity_type))
            .collect();
        types.sort_unstable();
        types.dedup();
        let mut tags = vec![Tag::Outside];
        for t in types {
            tags.push(Tag::Begin(t.to_string()));
            tags.push(Tag::Inside(t.to_string()));
        }
        Self { tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn index(&self, tag: &Tag) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn encode(&self, tags: &[Tag]) -> Result<Vec<usize>> {
        tags.iter()
            .map(|t| {
                self.index(t)
                    .ok_or_else(|| Error::validation(format!("tag {t} is not in the vocabulary")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerProbeModel {
    pub mix: MixWeights,
    pub ffn: Ffn,
    pub crf: CrfParams,
    pub vocab: TagVocab,
    pub bio_constraint: bool,
}

impl NerProbeModel {
    /// Fresh model: uniform mix, Glorot FFN, zero CRF scores.
    pub fn new(vocab: TagVocab, num_layers: usize, dim: usize, config: &NerConfig, seed: u64) -> Result<Self> {
        if num_layers == 0 || dim == 0 {
            return Err(Error::Config("embedding layers and dimension must be positive".into()));
        }
        if config.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let mut dims = vec![dim];
        dims.extend(&config.hidden);
        dims.push(vocab.len());
        let mut rng = trainer::init_rng(seed);
        Ok(Self {
            mix: MixWeights::new(num_layers),
            ffn: Ffn::init(&dims, config.activation, &mut rng),
            crf: CrfParams::zeros(vocab.len()),
            vocab,
            bio_constraint: config.bio_constraint,
        })
    }

    pub fn config(&self) -> NerConfig {
        let dims = self.ffn.dims();
        NerConfig {
            hidden: dims[1..dims.len() - 1].to_vec(),
            activation: self.ffn.activation,
            bio_constraint: self.bio_constraint,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.vocab.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.ffn.input_dim()
    }

    fn mask(&self) -> Option<TransitionMask> {
        self.bio_constraint.then(|| TransitionMask::bio(self.vocab.tags()))
    }

    fn check_record(&self, record: &EmbeddingRecord) -> Result<()> {
        if record.dim() != self.embedding_dim() {
            return Err(Error::shape(format!(
                "record {:?} has dimension {}, model expects {}",
                record.id(),
                record.dim(),
                self.embedding_dim()
            )));
        }
        Ok(())
    }
}

impl ParamSet for NerProbeModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.mix.visit(&format!("{prefix}mix."), f);
        self.ffn.visit(&format!("{prefix}ffn."), f);
        self.crf.visit(&format!("{prefix}crf."), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.mix.visit_mut(&format!("{prefix}mix."), f);
        self.ffn.visit_mut(&format!("{prefix}ffn."), f);
        self.crf.visit_mut(&format!("{prefix}crf."), f);
    }
}

/// Per-position tag scores (`L x T`).
pub fn forward_emissions(model: &NerProbeModel, record: &EmbeddingRecord) -> Result<Array2<f64>> {
    model.check_record(record)?;
    let mixed = mix(record, &model.mix)?;
    Ok(model.ffn.forward(&mixed))
}

/// CRF negative log-likelihood of `gold` and its gradient with respect to
/// every trainable parameter.
pub fn loss_and_grad(model: &NerProbeModel, record: &EmbeddingRecord, gold: &[usize]) -> Result<(f64, NerProbeModel)> {
    model.check_record(record)?;
    if gold.len() != record.seq_len() {
        return Err(Error::shape(format!(
            "{} gold tags for record {:?} of length {}",
            gold.len(),
            record.id(),
            record.seq_len()
        )));
    }
    let mixed = mix(record, &model.mix)?;
    let (emissions, cache) = model.ffn.forward_cached(&mixed);
    let crf_grad = nll_and_grad(&model.crf, &emissions, gold)?;
    let (ffn_grad, d_mixed) = model.ffn.backward(&cache, &crf_grad.emissions);
    let mix_grad = mix_backward(record, &model.mix, &d_mixed)?;
    Ok((
        crf_grad.loss,
        NerProbeModel {
            mix: mix_grad,
            ffn: ffn_grad,
            crf: crf_grad.params,
            vocab: model.vocab.clone(),
            bio_constraint: model.bio_constraint,
        },
    ))
}

/// Viterbi tags under the model's decode constraints, as tag indices.
pub fn decode_tags(model: &NerProbeModel, record: &EmbeddingRecord) -> Result<(Vec<usize>, f64)> {
    let emissions = forward_emissions(model, record)?;
    viterbi_masked(&model.crf, &emissions, model.mask().as_ref())
}

pub fn decode(model: &NerProbeModel, record: &EmbeddingRecord) -> Result<Vec<EntitySpan>> {
    let (tags, _) = decode_tags(model, record)?;
    let tags: Vec<Tag> = tags.iter().map(|&i| model.vocab.tags()[i].clone()).collect();
    Ok(entities_from_bio_lenient(&tags))
}

fn sentence_record<'a>(store: &'a EmbeddingStore, id: &str, len: usize) -> Result<&'a EmbeddingRecord> {
    let record = store.require(id)?;
    if record.seq_len() != len {
        return Err(Error::validation(format!(
            "record {id:?} has {} positions, sentence has {len} tokens",
            record.seq_len()
        )));
    }
    Ok(record)
}

pub fn predict_corpus(model: &NerProbeModel, corpus: &TaggedCorpus, store: &EmbeddingStore) -> Result<Vec<SentencePrediction>> {
    corpus
        .sentences
        .par_iter()
        .map(|s| {
            let record = sentence_record(store, &s.id, s.tokens.len())?;
            Ok(SentencePrediction {
                sentence_id: s.id.clone(),
                spans: decode(model, record)?,
            })
        })
        .collect()
}

pub fn evaluate_corpus(model: &NerProbeModel, corpus: &TaggedCorpus, store: &EmbeddingStore) -> Result<EvalReport> {
    evaluate(&predict_corpus(model, corpus, store)?, &corpus.entities)
}

/// Train by minibatch descent on summed CRF NLL, keeping the snapshot with
/// the best dev F1.
pub fn train(
    init: NerProbeModel,
    train_set: (&TaggedCorpus, &EmbeddingStore),
    dev_set: (&TaggedCorpus, &EmbeddingStore),
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<NerProbeModel>> {
    let (train_corpus, train_store) = train_set;
    let (dev_corpus, dev_store) = dev_set;
    let examples: Vec<(&EmbeddingRecord, Vec<usize>)> = train_corpus
        .sentences
        .iter()
        .map(|s| {
            let record = sentence_record(train_store, &s.id, s.tokens.len())?;
            init.check_record(record)?;
            Ok((record, init.vocab.encode(&s.tags)?))
        })
        .collect::<Result<_>>()?;
    for s in &dev_corpus.sentences {
        init.check_record(sentence_record(dev_store, &s.id, s.tokens.len())?)?;
    }
    trainer::fit(
        init,
        examples.len(),
        config,
        seed,
        |model, i| loss_and_grad(model, examples[i].0, &examples[i].1),
        |model| Ok(evaluate_corpus(model, dev_corpus, dev_store)?.f1),
    )
}

#[derive(Debug, Clone)]
pub struct NerSeedRun {
    pub outcome: TrainOutcome<NerProbeModel>,
    pub dev: EvalReport,
    pub test: Option<EvalReport>,
}

impl NerSeedRun {
    /// Test F1 when a test set was given, dev F1 otherwise.
    pub fn headline_f1(&self) -> f64 {
        self.test.unwrap_or(self.dev).f1
    }
}

/// Corpora and stores for one experiment. The tag vocabulary is built from
/// the train and dev corpora.
#[derive(Debug, Clone, Copy)]
pub struct NerData<'a> {
    pub train: (&'a TaggedCorpus, &'a EmbeddingStore),
    pub dev: (&'a TaggedCorpus, &'a EmbeddingStore),
    pub test: Option<(&'a TaggedCorpus, &'a EmbeddingStore)>,
}

impl NerData<'_> {
    fn layout(&self) -> Result<(usize, usize)> {
        let (corpus, store) = self.train;
        let first = corpus
            .sentences
            .first()
            .ok_or_else(|| Error::validation("training corpus is empty"))?;
        let r = store.require(&first.id)?;
        Ok((r.num_layers(), r.dim()))
    }
}

/// Train one model per seed and report per-seed and mean F1.
pub fn run_seeds(ner: &NerConfig, config: &TrainConfig, data: NerData<'_>) -> Result<SeedSummary<NerSeedRun>> {
    config.validate()?;
    let vocab = TagVocab::from_corpora(&[data.train.0, data.dev.0]);
    let (layers, dim) = data.layout()?;
    trainer::run_seeds(
        &config.seeds,
        |seed| {
            let init = NerProbeModel::new(vocab.clone(), layers, dim, ner, seed)?;
            let outcome = train(init, data.train, data.dev, config, seed)?;
            let dev = evaluate_corpus(&outcome.model, data.dev.0, data.dev.1)?;
            let test = data
                .test
                .map(|(c, s)| evaluate_corpus(&outcome.model, c, s))
                .transpose()?;
            Ok(NerSeedRun { outcome, dev, test })
        },
        NerSeedRun::headline_f1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{bio_from_entities, TaggedSentence};
    use crate::crf::score_sequence;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bio_vocab() -> TagVocab {
        TagVocab::new(vec![Tag::Outside, Tag::Begin(String::new()), Tag::Inside(String::new())]).unwrap()
    }

    fn random_record(rng: &mut ChaCha8Rng, k: usize, l: usize, d: usize) -> EmbeddingRecord {
        let values = (0..k * l * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        EmbeddingRecord::new("r", k, l, d, values).unwrap()
    }

    fn tiny_model(rng: &mut ChaCha8Rng, d: usize, hidden: Vec<usize>, act: Activation) -> NerProbeModel {
        let cfg = NerConfig { hidden, activation: act, bio_constraint: true };
        let mut m = NerProbeModel::new(bio_vocab(), 2, d, &cfg, rng.gen()).unwrap();
        m.mix.raw = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));
        m.mix.log_gamma = rng.gen_range(-0.3..0.3);
        m.crf.transitions.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        m.crf.start.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        m.crf.end.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        for l in &mut m.ffn.layers {
            l.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        m
    }

    #[test]
    fn vocab_rules() {
        assert!(TagVocab::new(vec![Tag::Begin("X".into())]).is_err());
        assert!(TagVocab::new(vec![Tag::Outside, Tag::Outside]).is_err());
        let c = crate::corpus::parse_tagged_str("a\tB-PER\nb\tO\nc\tB-LOC\n", "t", None).unwrap();
        let v = TagVocab::from_corpora(&[&c]);
        let names: Vec<String> = v.tags().iter().map(Tag::to_string).collect();
        assert_eq!(names, ["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]);
        assert!(v.encode(&[Tag::Begin("ORG".into())]).is_err());
    }

    #[test]
    fn zero_network_gives_zero_emissions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = tiny_model(&mut rng, 4, vec![5], Activation::Relu);
        m.ffn = Ffn::zeros(&m.ffn.dims(), Activation::Relu);
        let e = forward_emissions(&m, &random_record(&mut rng, 2, 3, 4)).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_network_passes_embeddings_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = NerConfig { hidden: vec![], activation: Activation::Relu, bio_constraint: true };
        let mut m = NerProbeModel::new(bio_vocab(), 1, 3, &cfg, 0).unwrap();
        m.ffn.layers[0].weight = Array2::eye(3);
        let r = random_record(&mut rng, 1, 4, 3);
        let e = forward_emissions(&m, &r).unwrap();
        let expect = r.layer(0).mapv(f64::from);
        assert!((e - expect).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn emissions_are_position_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = tiny_model(&mut rng, 4, vec![6], Activation::Tanh);
        let r = random_record(&mut rng, 2, 5, 4);
        let perm = [3usize, 0, 4, 1, 2];
        let mut values = Vec::new();
        for k in 0..2 {
            for &p in &perm {
                values.extend(r.layer(k).row(p).iter().copied());
            }
        }
        let permuted = EmbeddingRecord::new("p", 2, 5, 4, values).unwrap();
        let a = forward_emissions(&m, &r).unwrap();
        let b = forward_emissions(&m, &permuted).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(b.row(new), a.row(old));
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = tiny_model(&mut rng, 4, vec![3], Activation::Relu);
        assert!(forward_emissions(&m, &random_record(&mut rng, 2, 3, 5)).is_err());
        assert!(forward_emissions(&m, &random_record(&mut rng, 3, 3, 4)).is_err());
        assert!(loss_and_grad(&m, &random_record(&mut rng, 2, 3, 4), &[0, 1]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let m = tiny_model(&mut rng, 4, vec![5], Activation::Tanh);
            let r = random_record(&mut rng, 2, 3, 4);
            let gold: Vec<usize> = (0..3).map(|_| rng.gen_range(0..3)).collect();
            let (_, g) = loss_and_grad(&m, &r, &gold).unwrap();
            let analytic = trainer::flatten(&g);
            let base = trainer::flatten(&m);
            let h = 1e-5;
            for (t, (name, values)) in base.iter().enumerate() {
                for k in 0..values.len() {
                    let eval = |delta: f64| {
                        let mut q = m.clone();
                        let mut idx = 0;
                        q.visit_mut("", &mut |_, v| {
                            if idx == t {
                                v[k] += delta;
                            }
                            idx += 1;
                        });
                        loss_and_grad(&q, &r, &gold).unwrap().0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = analytic[t].1[k];
                    assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1e-2), "{name}[{k}]: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn zero_network_blocks_mix_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = tiny_model(&mut rng, 4, vec![5], Activation::Relu);
        m.ffn = Ffn::zeros(&m.ffn.dims(), Activation::Relu);
        let (_, g) = loss_and_grad(&m, &random_record(&mut rng, 2, 3, 4), &[1, 2, 0]).unwrap();
        assert!(g.mix.raw.iter().all(|&v| v == 0.0));
        assert_eq!(g.mix.log_gamma, 0.0);
    }

    #[test]
    fn duplicated_sentence_doubles_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = tiny_model(&mut rng, 4, vec![5], Activation::Relu);
        let r = random_record(&mut rng, 2, 3, 4);
        let (_, g) = loss_and_grad(&m, &r, &[1, 2, 0]).unwrap();
        let mut twice = g.clone();
        trainer::accumulate(&mut twice, &g);
        for ((_, a), (_, b)) in trainer::flatten(&twice).iter().zip(trainer::flatten(&g)) {
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(*x, 2.0 * y);
            }
        }
    }

    fn forcing_model(per_position: &[usize]) -> (NerProbeModel, EmbeddingRecord) {
        // One-hot embeddings through an identity layer force each tag.
        let cfg = NerConfig { hidden: vec![], activation: Activation::Relu, bio_constraint: true };
        let mut m = NerProbeModel::new(bio_vocab(), 1, 3, &cfg, 0).unwrap();
        m.ffn.layers[0].weight = Array2::eye(3) * 10.0;
        let mut values = vec![0.0f32; per_position.len() * 3];
        for (i, &t) in per_position.iter().enumerate() {
            values[i * 3 + t] = 1.0;
        }
        let r = EmbeddingRecord::new("r", 1, per_position.len(), 3, values).unwrap();
        (m, r)
    }

    #[test]
    fn decode_forced_sequences() {
        let (m, r) = forcing_model(&[0, 0, 0]);
        assert!(decode(&m, &r).unwrap().is_empty());
        let (m, r) = forcing_model(&[1, 2, 0]);
        assert_eq!(decode(&m, &r).unwrap(), vec![EntitySpan::new(0, 2, "")]);
    }

    #[test]
    fn decoded_spans_rescore_to_viterbi_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = tiny_model(&mut rng, 4, vec![5], Activation::Relu);
            let len = rng.gen_range(1..6);
            let r = random_record(&mut rng, 2, len, 4);
            let (_, score) = decode_tags(&m, &r).unwrap();
            let spans = decode(&m, &r).unwrap();
            let tags = m.vocab.encode(&bio_from_entities(&spans, r.seq_len()).unwrap()).unwrap();
            let rescored = score_sequence(&m.crf, &forward_emissions(&m, &r).unwrap(), &tags).unwrap();
            assert!((rescored - score).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_ignores_per_position_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = tiny_model(&mut rng, 4, vec![], Activation::Relu);
        let r = random_record(&mut rng, 2, 4, 4);
        let base = decode(&m, &r).unwrap();
        // A shared bias shift moves every tag score at every position equally.
        let mut shifted = m.clone();
        shifted.ffn.layers[0].bias += 3.7;
        assert_eq!(decode(&shifted, &r).unwrap(), base);
    }

    fn synthetic(n: usize, rng: &mut ChaCha8Rng, offset: usize) -> (TaggedCorpus, Vec<EmbeddingRecord>) {
        let mut sentences = Vec::new();
        let mut records = Vec::new();
        for s in 0..n {
            let len = rng.gen_range(3..9);
            let mut tags = Vec::new();
            while tags.len() < len {
                if rng.gen_bool(0.3) && tags.len() + 2 <= len {
                    tags.push(Tag::Begin(String::new()));
                    tags.push(Tag::Inside(String::new()));
                } else {
                    tags.push(Tag::Outside);
                }
            }
            let id = format!("s{}", s + offset);
            let vocab = bio_vocab();
            let values = tags
                .iter()
                .flat_map(|t| {
                    let hot = vocab.index(t).unwrap();
                    (0..3).map(move |d| if d == hot { 1.0f32 } else { 0.0 })
                })
                .collect::<Vec<f32>>();
            let values = values.into_iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
            records.push(EmbeddingRecord::new(&id, 1, len, 3, values).unwrap());
            sentences.push(TaggedSentence { id, tokens: vec!["w".into(); len], tags });
        }
        let entities = sentences
            .iter()
            .flat_map(|s| {
                crate::corpus::entities_from_bio(&s.tags)
                    .unwrap()
                    .into_iter()
                    .map(|e| crate::corpus::GoldEntity::new(s.id.clone(), e.label, (e.start, e.end)))
            })
            .collect();
        (TaggedCorpus { sentences, entities }, records)
    }

    #[test]
    fn training_is_seed_deterministic_and_zero_epoch_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (train_c, train_r) = synthetic(40, &mut rng, 0);
        let (dev_c, dev_r) = synthetic(10, &mut rng, 0);
        let (ts, ds) = (EmbeddingStore::new(train_r).unwrap(), EmbeddingStore::new(dev_r).unwrap());
        let ner = NerConfig { hidden: vec![8], ..NerConfig::default() };
        let init = NerProbeModel::new(bio_vocab(), 1, 3, &ner, 42).unwrap();
        let cfg = TrainConfig { max_epochs: 0, ..TrainConfig::default() };
        let out = train(init.clone(), (&train_c, &ts), (&dev_c, &ds), &cfg, 42).unwrap();
        assert_eq!(out.model, init);

        let cfg = TrainConfig { max_epochs: 3, batch_size: 8, ..TrainConfig::default() };
        let a = train(init.clone(), (&train_c, &ts), (&dev_c, &ds), &cfg, 42).unwrap();
        let b = train(init, (&train_c, &ts), (&dev_c, &ds), &cfg, 42).unwrap();
        let bits = |m: &NerProbeModel| trainer::flatten(m).into_iter().flat_map(|(_, v)| v).map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
    }

    #[test]
    fn training_reports_missing_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (train_c, _) = synthetic(3, &mut rng, 0);
        let empty = EmbeddingStore::default();
        let init = NerProbeModel::new(bio_vocab(), 1, 3, &NerConfig::default(), 1).unwrap();
        let err = train(init, (&train_c, &empty), (&train_c, &empty), &TrainConfig::default(), 1).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
