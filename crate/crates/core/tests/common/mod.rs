#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use probekit::corpus::write_tagged_corpus;
use probekit::embedstore::write_store;
use probekit::synthetic::{self, SyntheticNer, SyntheticNli};

pub struct NerFiles {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub store: PathBuf,
    pub dev_store: PathBuf,
}

pub struct NliFiles {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub store: PathBuf,
    pub dev_store: PathBuf,
    pub annotations: PathBuf,
}

pub fn write_ner(dir: &Path, name: &str, data: &SyntheticNer) -> (PathBuf, PathBuf) {
    let corpus = dir.join(format!("{name}.conll"));
    let store = dir.join(format!("{name}.pte"));
    let mut text = Vec::new();
    write_tagged_corpus(&data.corpus.sentences, &mut text).unwrap();
    fs::write(&corpus, text).unwrap();
    write_store(data.store.records(), &store).unwrap();
    (corpus, store)
}

pub fn write_nli(dir: &Path, name: &str, data: &SyntheticNli) -> (PathBuf, PathBuf, PathBuf) {
    let pairs = dir.join(format!("{name}.jsonl"));
    let store = dir.join(format!("{name}.pte"));
    let ann = dir.join(format!("{name}.relations.jsonl"));
    fs::write(&pairs, synthetic::nli_jsonl(&data.pairs)).unwrap();
    fs::write(&ann, synthetic::relations_jsonl(&data.annotations)).unwrap();
    write_store(data.store.records(), &store).unwrap();
    (pairs, store, ann)
}

pub fn ner_files(dir: &Path, train: usize, dev: usize) -> NerFiles {
    let dir = &dir.join("ner");
    fs::create_dir_all(dir).unwrap();
    let (train, store) = write_ner(dir, "train", &synthetic::ner_corpus(train, 2, 0.1, 1));
    let (dev, dev_store) = write_ner(dir, "dev", &synthetic::ner_corpus(dev, 2, 0.1, 2));
    NerFiles { train, dev, store, dev_store }
}

pub fn nli_files(dir: &Path, train: usize, dev: usize) -> NliFiles {
    let dir = &dir.join("nli");
    fs::create_dir_all(dir).unwrap();
    let (train, store, _) = write_nli(dir, "train", &synthetic::nli_corpus(train, 2, 0.1, 1));
    let (dev, dev_store, annotations) = write_nli(dir, "dev", &synthetic::nli_corpus(dev, 2, 0.1, 2));
    NliFiles { train, dev, store, dev_store, annotations }
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}
