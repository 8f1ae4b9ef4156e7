//! Versioned binary checkpoints shared by both probes.
//!
//! Layout, little-endian: magic `PRBC`, `u32` version, kind string, `u32`
//! meta count, meta `(key, value)` strings, `u32` tensor count, then per
//! tensor a name string, `u64` length and `f64` values. Strings are a `u32`
//! byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::Tag;
use crate::error::{Error, Result};
use crate::ner_probe::{NerConfig, NerProbeModel, TagVocab};
use crate::nli_probe::{NliConfig, NliProbeModel};
use crate::trainer::{flatten, ParamSet, TrainConfig};

pub const MAGIC: [u8; 4] = *b"PRBC";
pub const VERSION: u32 = 1;
pub const NER_KIND: &str = "ner";
pub const NLI_KIND: &str = "nli";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Vec<f64>)>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, values) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let kind = r.string("kind")?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32("meta count")? {
            let k = r.string("meta key")?;
            let v = r.string("meta value")?;
            meta.insert(k, v);
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let len = r.u64("tensor length")? as usize;
            let raw = r.take(len.saturating_mul(8), &name)?;
            let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {name:?} has non-finite values")));
            }
            tensors.push((name, values));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { kind, meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key:?}")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta_value(key)?;
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("bad value {v:?} for meta key {key:?}")))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed")
    }

    /// Copies tensors into `params`, requiring identical names and lengths.
    fn fill<P: ParamSet>(&self, params: &mut P) -> Result<()> {
        let expected = flatten(params);
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, values), (have, stored)) in expected.iter().zip(&self.tensors) {
            if name != have || values.len() != stored.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {have:?} ({}) does not match {name:?} ({})",
                    stored.len(),
                    values.len()
                )));
            }
        }
        let mut i = 0;
        params.visit_mut("", &mut |_, dst| {
            dst.copy_from_slice(&self.tensors[i].1);
            i += 1;
        });
        Ok(())
    }

    fn set_train(&mut self, train: &TrainConfig) {
        for (k, v) in train.to_key_values() {
            self.meta.insert(format!("train.{k}"), v);
        }
    }
}

pub fn ner_checkpoint(model: &NerProbeModel, seed: u64, train: &TrainConfig) -> Checkpoint {
    let mut ckpt = Checkpoint::new(NER_KIND);
    let tags: Vec<String> = model.vocab.tags().iter().map(Tag::to_string).collect();
    ckpt.meta.insert("tags".into(), serde_json::to_string(&tags).expect("strings serialize"));
    ckpt.meta.insert("layers".into(), model.mix.num_layers().to_string());
    ckpt.meta.insert("dim".into(), model.embedding_dim().to_string());
    ckpt.meta.insert("seed".into(), seed.to_string());
    for (k, v) in model.config().to_key_values() {
        ckpt.meta.insert(k, v);
    }
    ckpt.set_train(train);
    ckpt.tensors = flatten(model);
    ckpt
}

pub fn ner_from_checkpoint(ckpt: &Checkpoint) -> Result<NerProbeModel> {
    ckpt.expect_kind(NER_KIND)?;
    let tags: Vec<String> = serde_json::from_str(ckpt.meta_value("tags")?)
        .map_err(|e| Error::Checkpoint(format!("bad tag list: {e}")))?;
    let tags = tags
        .iter()
        .map(|t| t.parse::<Tag>().map_err(Error::Checkpoint))
        .collect::<Result<Vec<_>>>()?;
    let vocab = TagVocab::new(tags)?;
    let mut config = NerConfig::default();
    for key in NerConfig::KEYS {
        config.set(key, ckpt.meta_value(key)?)?;
    }
    let mut model = NerProbeModel::new(vocab, ckpt.parsed("layers")?, ckpt.parsed("dim")?, &config, 0)?;
    ckpt.fill(&mut model)?;
    Ok(model)
}

pub fn nli_checkpoint(model: &NliProbeModel, seed: u64, train: &TrainConfig) -> Checkpoint {
    let mut ckpt = Checkpoint::new(NLI_KIND);
    ckpt.meta.insert("layers".into(), model.mix_premise.num_layers().to_string());
    ckpt.meta.insert("dim".into(), model.bilinear.dim().to_string());
    ckpt.meta.insert("seed".into(), seed.to_string());
    for (k, v) in model.config().to_key_values() {
        ckpt.meta.insert(k, v);
    }
    ckpt.set_train(train);
    ckpt.tensors = flatten(model);
    ckpt
}

pub fn nli_from_checkpoint(ckpt: &Checkpoint) -> Result<NliProbeModel> {
    ckpt.expect_kind(NLI_KIND)?;
    let mut config = NliConfig::default();
    for key in NliConfig::KEYS {
        config.set(key, ckpt.meta_value(key)?)?;
    }
    let mut model = NliProbeModel::new(ckpt.parsed("layers")?, ckpt.parsed("dim")?, &config, 0)?;
    ckpt.fill(&mut model)?;
    Ok(model)
}
