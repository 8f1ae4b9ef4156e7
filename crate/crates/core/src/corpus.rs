//! Input corpora: BIO-tagged sentences with optional alternative gold spans,
//! NLI sentence pairs, and relation-pair annotations over those pairs.
//!
//! All spans are token offsets with an exclusive end.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One BIO tag. A bare `B`/`I` has an empty entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = |rest: &str| -> Result<String, String> {
            if rest.is_empty() {
                Ok(String::new())
            } else if let Some(ty) = rest.strip_prefix('-') {
                if ty.is_empty() {
                    Err(format!("empty entity type in tag {s:?}"))
                } else {
                    Ok(ty.to_string())
                }
            } else {
                Err(format!("unrecognized tag {s:?}"))
            }
        };
        match s.chars().next() {
            Some('O') if s.len() == 1 => Ok(Tag::Outside),
            Some('B') => split(&s[1..]).map(Tag::Begin),
            Some('I') => split(&s[1..]).map(Tag::Inside),
            _ => Err(format!("unrecognized tag {s:?}")),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (prefix, ty) = match self {
            Tag::Outside => return f.write_str("O"),
            Tag::Begin(t) => ("B", t),
            Tag::Inside(t) => ("I", t),
        };
        if ty.is_empty() {
            f.write_str(prefix)
        } else {
            write!(f, "{prefix}-{ty}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

/// A typed entity span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }
}

/// A gold entity with its set of acceptable boundaries. The primary span is
/// always a member of `alternatives`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldEntity {
    pub sentence_id: String,
    pub label: String,
    pub span: (usize, usize),
    pub alternatives: BTreeSet<(usize, usize)>,
}

impl GoldEntity {
    pub fn new(sentence_id: impl Into<String>, label: impl Into<String>, span: (usize, usize)) -> Self {
        Self {
            sentence_id: sentence_id.into(),
            label: label.into(),
            span,
            alternatives: BTreeSet::from([span]),
        }
    }

    pub fn with_alternative(mut self, span: (usize, usize)) -> Self {
        self.alternatives.insert(span);
        self
    }

    pub fn accepts(&self, span: (usize, usize)) -> bool {
        self.alternatives.contains(&span)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
    pub entities: Vec<GoldEntity>,
}

/// Decode entities from a gold tag sequence. A dangling `I-X` is an error.
pub fn entities_from_bio(tags: &[Tag]) -> Result<Vec<EntitySpan>, String> {
    decode_bio(tags, false)
}

/// Decode entities from a predicted tag sequence, treating a dangling `I-X`
/// as `B-X`.
pub fn entities_from_bio_lenient(tags: &[Tag]) -> Vec<EntitySpan> {
    decode_bio(tags, true).expect("lenient decoding never fails")
}

fn decode_bio(tags: &[Tag], repair: bool) -> Result<Vec<EntitySpan>, String> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => {
                if let Some((s, ty)) = open.take() {
                    spans.push(EntitySpan::new(s, i, ty));
                }
            }
            Tag::Begin(ty) => {
                if let Some((s, prev)) = open.take() {
                    spans.push(EntitySpan::new(s, i, prev));
                }
                open = Some((i, ty));
            }
            Tag::Inside(ty) => match open {
                Some((_, cur)) if cur == ty => {}
                _ => {
                    if !repair {
                        return Err(format!("invalid BIO transition to {tag} at token {i}"));
                    }
                    if let Some((s, prev)) = open.take() {
                        spans.push(EntitySpan::new(s, i, prev));
                    }
                    open = Some((i, ty));
                }
            },
        }
    }
    if let Some((s, ty)) = open {
        spans.push(EntitySpan::new(s, tags.len(), ty));
    }
    Ok(spans)
}

/// Encode non-overlapping entities as a BIO sequence of length `len`.
pub fn bio_from_entities(entities: &[EntitySpan], len: usize) -> Result<Vec<Tag>, String> {
    let mut tags = vec![Tag::Outside; len];
    let mut taken = vec![false; len];
    for e in entities {
        if e.start >= e.end || e.end > len {
            return Err(format!("span ({}, {}) out of bounds for length {len}", e.start, e.end));
        }
        for (pos, t) in taken.iter_mut().enumerate().take(e.end).skip(e.start) {
            if *t {
                return Err(format!("overlapping entity at token {pos}"));
            }
            *t = true;
        }
        tags[e.start] = Tag::Begin(e.label.clone());
        for tag in &mut tags[e.start + 1..e.end] {
            *tag = Tag::Inside(e.label.clone());
        }
    }
    Ok(tags)
}

pub fn parse_tagged_corpus(path: &Path, alt_path: Option<&Path>) -> Result<TaggedCorpus> {
    let text = fs::read_to_string(path)?;
    let alt = alt_path.map(fs::read_to_string).transpose()?;
    let alt_name = alt_path.map(|p| p.display().to_string());
    parse_tagged_str(
        &text,
        &path.display().to_string(),
        alt.as_deref().zip(alt_name.as_deref()),
    )
}

/// Parse tagged-corpus text. `alt` carries the alternatives text and its
/// display name.
pub fn parse_tagged_str(text: &str, name: &str, alt: Option<(&str, &str)>) -> Result<TaggedCorpus> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<Tag>| {
        if !tokens.is_empty() {
            sentences.push(TaggedSentence {
                id: format!("s{}", sentences.len()),
                tokens: std::mem::take(tokens),
                tags: std::mem::take(tags),
            });
        }
    };
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags);
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: name.to_string(),
            line: n + 1,
            message,
        };
        let mut fields = line.split('\t');
        let (Some(token), Some(tag), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err("expected TOKEN<TAB>TAG".into()));
        };
        if token.is_empty() {
            return Err(parse_err("empty token".into()));
        }
        tokens.push(token.to_string());
        tags.push(tag.parse::<Tag>().map_err(parse_err)?);
    }
    flush(&mut tokens, &mut tags);

    let mut entities = Vec::new();
    for s in &sentences {
        let spans = entities_from_bio(&s.tags)
            .map_err(|e| Error::validation(format!("sentence {}: {e}", s.id)))?;
        entities.extend(
            spans
                .into_iter()
                .map(|e| GoldEntity::new(s.id.clone(), e.label, (e.start, e.end))),
        );
    }

    if let Some((alt_text, alt_name)) = alt {
        attach_alternatives(&sentences, &mut entities, alt_text, alt_name)?;
    }
    Ok(TaggedCorpus {
        sentences,
        entities,
    })
}

fn attach_alternatives(
    sentences: &[TaggedSentence],
    entities: &mut [GoldEntity],
    text: &str,
    name: &str,
) -> Result<()> {
    let lengths: HashMap<&str, usize> = sentences
        .iter()
        .map(|s| (s.id.as_str(), s.tokens.len()))
        .collect();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: name.to_string(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let mut nums = [0usize; 4];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid offset {f:?}")))?;
        }
        let sid = fields[0];
        let len = *lengths
            .get(sid)
            .ok_or_else(|| Error::validation(format!("{name}:{}: unknown sentence {sid:?}", n + 1)))?;
        let [gs, ge, a_start, a_end] = nums;
        if a_start >= a_end || a_end > len {
            return Err(Error::validation(format!(
                "{name}:{}: alternative span ({a_start}, {a_end}) outside sentence {sid} of length {len}",
                n + 1
            )));
        }
        let entity = entities
            .iter_mut()
            .find(|e| e.sentence_id == sid && e.span == (gs, ge))
            .ok_or_else(|| {
                Error::validation(format!(
                    "{name}:{}: no gold entity ({gs}, {ge}) in sentence {sid}",
                    n + 1
                ))
            })?;
        entity.alternatives.insert((a_start, a_end));
    }
    Ok(())
}

/// Serialize sentences back to the `TOKEN<TAB>TAG` line format.
pub fn write_tagged_corpus<W: Write>(sentences: &[TaggedSentence], mut out: W) -> std::io::Result<()> {
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            writeln!(out, "{tok}\t{tag}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Contradiction => "contradiction",
            NliLabel::Neutral => "neutral",
        }
    }
}

impl FromStr for NliLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown NLI label {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NliPair {
    pub id: String,
    pub premise_tokens: Vec<String>,
    pub hypothesis_tokens: Vec<String>,
    pub label: NliLabel,
}

impl NliPair {
    pub fn premise_key(&self) -> String {
        format!("{}/p", self.id)
    }

    pub fn hypothesis_key(&self) -> String {
        format!("{}/h", self.id)
    }
}

#[derive(Deserialize)]
struct RawNliPair {
    id: String,
    premise_tokens: Vec<String>,
    hypothesis_tokens: Vec<String>,
    label: String,
}

pub fn parse_nli_corpus(path: &Path) -> Result<Vec<NliPair>> {
    parse_nli_str(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn parse_nli_str(text: &str, name: &str) -> Result<Vec<NliPair>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawNliPair = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let label = raw
            .label
            .parse()
            .map_err(|e| Error::validation(format!("pair {:?}: {e}", raw.id)))?;
        if raw.premise_tokens.is_empty() || raw.hypothesis_tokens.is_empty() {
            return Err(Error::validation(format!("pair {:?}: empty token list", raw.id)));
        }
        pairs.push(NliPair {
            id: raw.id,
            premise_tokens: raw.premise_tokens,
            hypothesis_tokens: raw.hypothesis_tokens,
            label,
        });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationType {
    DiseaseSymptom,
    DiseaseDrug,
    NumberIndication,
    Synonyms,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::DiseaseSymptom,
        RelationType::DiseaseDrug,
        RelationType::NumberIndication,
        RelationType::Synonyms,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::DiseaseSymptom => "disease-symptom",
            RelationType::DiseaseDrug => "disease-drug",
            RelationType::NumberIndication => "number-indication",
            RelationType::Synonyms => "synonyms",
        }
    }
}

impl FromStr for RelationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown relation type {s:?}"))
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationAnnotation {
    pub pair_id: String,
    pub premise_index: usize,
    pub hypothesis_index: usize,
    pub relation_type: RelationType,
}

#[derive(Deserialize)]
struct RawAnnotation {
    pair_id: String,
    premise_index: usize,
    hypothesis_index: usize,
    relation_type: String,
}

pub fn parse_relation_annotations(path: &Path, pairs: &[NliPair]) -> Result<Vec<RelationAnnotation>> {
    parse_relation_str(&fs::read_to_string(path)?, &path.display().to_string(), pairs)
}

pub fn parse_relation_str(text: &str, name: &str, pairs: &[NliPair]) -> Result<Vec<RelationAnnotation>> {
    let by_id: HashMap<&str, &NliPair> = pairs.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAnnotation = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let where_ = format!("{name}:{}", n + 1);
        let pair = by_id
            .get(raw.pair_id.as_str())
            .ok_or_else(|| Error::validation(format!("{where_}: unknown pair id {:?}", raw.pair_id)))?;
        let relation_type = raw
            .relation_type
            .parse()
            .map_err(|e| Error::validation(format!("{where_}: {e}")))?;
        if raw.premise_index >= pair.premise_tokens.len() {
            return Err(Error::validation(format!(
                "{where_}: premise index {} out of range for pair {:?} (length {})",
                raw.premise_index,
                raw.pair_id,
                pair.premise_tokens.len()
            )));
        }
        if raw.hypothesis_index >= pair.hypothesis_tokens.len() {
            return Err(Error::validation(format!(
                "{where_}: hypothesis index {} out of range for pair {:?} (length {})",
                raw.hypothesis_index,
                raw.pair_id,
                pair.hypothesis_tokens.len()
            )));
        }
        out.push(RelationAnnotation {
            pair_id: raw.pair_id,
            premise_index: raw.premise_index,
            hypothesis_index: raw.hypothesis_index,
            relation_type,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(t: &str) -> Tag {
        Tag::Begin(t.into())
    }
    fn i(t: &str) -> Tag {
        Tag::Inside(t.into())
    }

    #[test]
    fn single_entity_sentence() {
        let c = parse_tagged_str("IL-2\tB\ngene\tI\n\n", "t", None).unwrap();
        assert_eq!(c.sentences.len(), 1);
        assert_eq!(c.sentences[0].id, "s0");
        assert_eq!(c.entities, vec![GoldEntity::new("s0", "", (0, 2))]);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = parse_tagged_str("", "t", None).unwrap();
        assert!(c.sentences.is_empty() && c.entities.is_empty());
    }

    #[test]
    fn alternatives_attach_to_matching_entity() {
        let c = parse_tagged_str("IL-2\tB\ngene\tI\n\n", "t", Some(("s0\t0\t2\t0\t1\n", "alt"))).unwrap();
        assert_eq!(c.entities[0].alternatives, BTreeSet::from([(0, 2), (0, 1)]));
    }

    #[test]
    fn alternative_errors() {
        let text = "IL-2\tB\ngene\tI\n\n";
        for alt in ["s9\t0\t2\t0\t1", "s0\t0\t1\t0\t1", "s0\t0\t2\t0\t3"] {
            let err = parse_tagged_str(text, "t", Some((alt, "alt"))).unwrap_err();
            assert!(matches!(err, Error::Validation(_)), "{alt}: {err}");
        }
        let err = parse_tagged_str(text, "t", Some(("s0\t0\t2", "alt"))).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_tagged_str("a\tO\nb O\n", "t", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_tagged_str("a\tX\n", "t", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn invalid_gold_bio_names_sentence() {
        let err = parse_tagged_str("a\tO\n\nb\tO\nc\tI-GENE\n", "t", None).unwrap_err();
        match err {
            Error::Validation(m) => assert!(m.contains("s1"), "{m}"),
            e => panic!("{e}"),
        }
        assert!(entities_from_bio(&[b("PER"), i("LOC")]).is_err());
    }

    #[test]
    fn typed_tags_round_trip_and_decode() {
        for s in ["O", "B", "I", "B-PER", "I-MISC"] {
            assert_eq!(s.parse::<Tag>().unwrap().to_string(), s);
        }
        assert!("B-".parse::<Tag>().is_err());
        assert!("OX".parse::<Tag>().is_err());
        let tags = [b("PER"), i("PER"), b("LOC"), Tag::Outside, b("PER")];
        assert_eq!(
            entities_from_bio(&tags).unwrap(),
            vec![
                EntitySpan::new(0, 2, "PER"),
                EntitySpan::new(2, 3, "LOC"),
                EntitySpan::new(4, 5, "PER")
            ]
        );
    }

    #[test]
    fn lenient_decoding_repairs_dangling_inside() {
        let tags = [Tag::Outside, i("X"), i("X"), b("Y"), i("Z")];
        assert_eq!(
            entities_from_bio_lenient(&tags),
            vec![EntitySpan::new(1, 3, "X"), EntitySpan::new(3, 4, "Y"), EntitySpan::new(4, 5, "Z")]
        );
    }

    #[test]
    fn nli_parsing() {
        let ok = r#"{"id":"p1","premise_tokens":["He","was","given","antibiotics"],"hypothesis_tokens":["He","has","an","infection"],"label":"entailment"}"#;
        let pairs = parse_nli_str(ok, "t").unwrap();
        assert_eq!(pairs[0].label, NliLabel::Entailment);
        assert_eq!(pairs[0].premise_key(), "p1/p");

        let bad = r#"{"id":"p7","premise_tokens":["a"],"hypothesis_tokens":["b"],"label":"maybe"}"#;
        match parse_nli_str(bad, "t").unwrap_err() {
            Error::Validation(m) => assert!(m.contains("p7")),
            e => panic!("{e}"),
        }
        let empty = r#"{"id":"p8","premise_tokens":[],"hypothesis_tokens":["b"],"label":"neutral"}"#;
        assert!(matches!(parse_nli_str(empty, "t"), Err(Error::Validation(_))));
        assert!(matches!(parse_nli_str("{", "t"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn relation_parsing() {
        let pairs = parse_nli_str(
            r#"{"id":"p1","premise_tokens":["a","b"],"hypothesis_tokens":["c"],"label":"entailment"}"#,
            "t",
        )
        .unwrap();
        let ok = r#"{"pair_id":"p1","premise_index":1,"hypothesis_index":0,"relation_type":"disease-drug"}"#;
        let anns = parse_relation_str(ok, "r", &pairs).unwrap();
        assert_eq!(anns[0].relation_type, RelationType::DiseaseDrug);
        assert!(parse_relation_str("", "r", &pairs).unwrap().is_empty());

        for bad in [
            r#"{"pair_id":"p1","premise_index":2,"hypothesis_index":0,"relation_type":"synonyms"}"#,
            r#"{"pair_id":"p1","premise_index":0,"hypothesis_index":1,"relation_type":"synonyms"}"#,
            r#"{"pair_id":"zz","premise_index":0,"hypothesis_index":0,"relation_type":"synonyms"}"#,
            r#"{"pair_id":"p1","premise_index":0,"hypothesis_index":0,"relation_type":"cause"}"#,
        ] {
            assert!(matches!(parse_relation_str(bad, "r", &pairs), Err(Error::Validation(_))), "{bad}");
        }
    }

    fn entity_sets() -> impl Strategy<Value = (Vec<EntitySpan>, usize)> {
        // Random segmentation of a sentence into O runs and typed entities.
        prop::collection::vec((0usize..3, 1usize..4, prop::sample::select(vec!["", "PER", "LOC"])), 0..8)
            .prop_map(|segments| {
                let mut pos = 0;
                let mut out = Vec::new();
                for (gap, len, label) in segments {
                    pos += gap;
                    out.push(EntitySpan::new(pos, pos + len, label));
                    pos += len;
                }
                (out, pos.max(1))
            })
    }

    proptest! {
        #[test]
        fn bio_encoding_inverts(( entities, len) in entity_sets()) {
            let tags = bio_from_entities(&entities, len).unwrap();
            prop_assert_eq!(entities_from_bio(&tags).unwrap(), entities);
        }

        #[test]
        fn corpus_text_round_trips((entities, len) in entity_sets(), extra in 0usize..3) {
            let tags = bio_from_entities(&entities, len).unwrap();
            let sentence = TaggedSentence {
                id: "s0".into(),
                tokens: (0..len).map(|k| format!("w{k}")).collect(),
                tags,
            };
            let second = TaggedSentence { id: "s1".into(), tokens: vec!["x".into(); extra + 1], tags: vec![Tag::Outside; extra + 1] };
            let mut buf = Vec::new();
            write_tagged_corpus(&[sentence.clone(), second.clone()], &mut buf).unwrap();
            let parsed = parse_tagged_str(std::str::from_utf8(&buf).unwrap(), "t", None).unwrap();
            prop_assert_eq!(&parsed.sentences, &vec![sentence, second]);
            let spans: Vec<_> = parsed.entities.iter().map(|e| EntitySpan::new(e.span.0, e.span.1, e.label.clone())).collect();
            prop_assert_eq!(spans, entities);
        }
    }
}
