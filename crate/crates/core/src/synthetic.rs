//! Separable toy corpora with matching embedding stores.
//!
//! NER tokens embed as a noisy one-hot of their gold tag. NLI tokens embed as
//! a noisy one-hot of a content slot, with dimension 0 reserved for a
//! negation marker.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{
    entities_from_bio, GoldEntity, NliLabel, NliPair, RelationAnnotation, RelationType, Tag, TaggedCorpus,
    TaggedSentence,
};
use crate::embedstore::{EmbeddingRecord, EmbeddingStore};
use crate::trainer::init_rng;

pub const NER_TYPE: &str = "GENE";
pub const NER_DIM: usize = 3;
pub const NLI_DIM: usize = 8;
pub const NEGATION: &str = "not";

#[derive(Debug, Clone)]
pub struct SyntheticNer {
    pub corpus: TaggedCorpus,
    pub store: EmbeddingStore,
}

fn noisy_one_hot<R: Rng>(rng: &mut R, hot: usize, dim: usize, noise: f64) -> impl Iterator<Item = f32> + '_ {
    (0..dim).map(move |d| {
        let base = if d == hot { 1.0 } else { 0.0 };
        (base + rng.gen_range(-noise..=noise)) as f32
    })
}

fn record<R: Rng>(rng: &mut R, id: &str, hot: &[usize], dim: usize, layers: usize, noise: f64) -> EmbeddingRecord {
    let mut values = Vec::with_capacity(layers * hot.len() * dim);
    for _ in 0..layers {
        for &h in hot {
            values.extend(noisy_one_hot(rng, h, dim, noise));
        }
    }
    EmbeddingRecord::new(id, layers, hot.len(), dim, values).expect("finite synthetic values")
}

/// `sentences` tagged sentences of 3 to 8 tokens with ids `s0, s1, ..`.
pub fn ner_corpus(sentences: usize, layers: usize, noise: f64, seed: u64) -> SyntheticNer {
    let mut rng = init_rng(seed);
    let mut out = Vec::with_capacity(sentences);
    let mut records = Vec::with_capacity(sentences);
    let mut entities = Vec::new();
    for s in 0..sentences {
        let len = rng.gen_range(3..=8);
        let mut tags = Vec::with_capacity(len);
        let mut tokens = Vec::with_capacity(len);
        while tags.len() < len {
            let room = len - tags.len();
            if rng.gen_bool(0.3) {
                let span = rng.gen_range(1..=room.min(3));
                tags.push(Tag::Begin(NER_TYPE.into()));
                tags.extend((1..span).map(|_| Tag::Inside(NER_TYPE.into())));
                tokens.extend((0..span).map(|_| format!("g{}", rng.gen_range(0..50))));
            } else {
                tags.push(Tag::Outside);
                tokens.push(format!("w{}", rng.gen_range(0..200)));
            }
        }
        let id = format!("s{s}");
        let hot: Vec<usize> = tags
            .iter()
            .map(|t| match t {
                Tag::Outside => 0,
                Tag::Begin(_) => 1,
                Tag::Inside(_) => 2,
            })
            .collect();
        records.push(record(&mut rng, &id, &hot, NER_DIM, layers, noise));
        for e in entities_from_bio(&tags).expect("generated tags are well formed") {
            entities.push(GoldEntity::new(id.clone(), e.label, (e.start, e.end)));
        }
        out.push(TaggedSentence { id, tokens, tags });
    }
    SyntheticNer {
        corpus: TaggedCorpus {
            sentences: out,
            entities,
        },
        store: EmbeddingStore::new(records).expect("unique ids"),
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticNli {
    pub pairs: Vec<NliPair>,
    pub store: EmbeddingStore,
    /// The shared content token pair of every entailment.
    pub annotations: Vec<RelationAnnotation>,
}

fn relation_for_slot(slot: usize) -> RelationType {
    RelationType::ALL[(slot - 1) * RelationType::ALL.len() / (NLI_DIM - 1)]
}

/// Balanced pairs with ids `p0, p1, ..`. Entailing pairs share a content
/// token, contradicting pairs share only the negation marker and neutral
/// pairs share nothing.
pub fn nli_corpus(pairs: usize, layers: usize, noise: f64, seed: u64) -> SyntheticNli {
    let mut rng = init_rng(seed);
    let mut out = Vec::with_capacity(pairs);
    let mut records = Vec::with_capacity(2 * pairs);
    let mut annotations = Vec::new();
    let slots: Vec<usize> = (1..NLI_DIM).collect();
    for n in 0..pairs {
        let label = NliLabel::ALL[n % 3];
        let mut shuffled = slots.clone();
        shuffled.shuffle(&mut rng);
        let premise_len = rng.gen_range(1..=3);
        let mut premise: Vec<usize> = shuffled[..premise_len].to_vec();
        let free = &shuffled[premise_len..];
        let mut hypothesis: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| *free.choose(&mut rng).unwrap()).collect();
        let mut shared = None;
        match label {
            NliLabel::Entailment => {
                let i = rng.gen_range(0..premise.len());
                let j = rng.gen_range(0..=hypothesis.len());
                hypothesis.insert(j, premise[i]);
                shared = Some((i, j));
            }
            NliLabel::Contradiction => {
                let i = rng.gen_range(0..=premise.len());
                premise.insert(i, 0);
                let j = rng.gen_range(0..=hypothesis.len());
                hypothesis.insert(j, 0);
            }
            NliLabel::Neutral => {}
        }
        let id = format!("p{n}");
        let word = |slot: &usize| if *slot == 0 { NEGATION.to_string() } else { format!("c{slot}") };
        let pair = NliPair {
            id: id.clone(),
            premise_tokens: premise.iter().map(word).collect(),
            hypothesis_tokens: hypothesis.iter().map(word).collect(),
            label,
        };
        records.push(record(&mut rng, &pair.premise_key(), &premise, NLI_DIM, layers, noise));
        records.push(record(&mut rng, &pair.hypothesis_key(), &hypothesis, NLI_DIM, layers, noise));
        if let Some((i, j)) = shared {
            annotations.push(RelationAnnotation {
                pair_id: id,
                premise_index: i,
                hypothesis_index: j,
                relation_type: relation_for_slot(premise[i]),
            });
        }
        out.push(pair);
    }
    SyntheticNli {
        pairs: out,
        store: EmbeddingStore::new(records).expect("unique ids"),
        annotations,
    }
}

/// JSONL text in the format read by [`crate::corpus::parse_nli_str`].
pub fn nli_jsonl(pairs: &[NliPair]) -> String {
    pairs
        .iter()
        .map(|p| {
            serde_json::json!({
                "id": p.id,
                "premise_tokens": p.premise_tokens,
                "hypothesis_tokens": p.hypothesis_tokens,
                "label": p.label.as_str(),
            })
            .to_string()
                + "\n"
        })
        .collect()
}

/// JSONL text in the format read by [`crate::corpus::parse_relation_str`].
pub fn relations_jsonl(annotations: &[RelationAnnotation]) -> String {
    annotations
        .iter()
        .map(|a| serde_json::to_string(a).expect("serializable") + "\n")
        .collect()
}
