//! Nearest-neighbour analysis of relation representations.
//!
//! For each labelled vector we look at its `k` nearest other vectors and
//! count how many share its label. Per-label proportions average over the
//! vectors of that label, the overall proportion averages over all vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::{NliLabel, RelationType};
use crate::embedstore::{self, EmbeddingRecord, EmbeddingStore, MixWeights};
use crate::error::{Error, Result};
use crate::nli_probe::RelationRep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(format!("unknown metric {s:?} (expected cosine or euclidean)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub id: String,
    pub label: String,
    pub values: Vec<f64>,
}

impl LabeledVector {
    pub fn new(id: impl Into<String>, label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelStats {
    pub count: usize,
    pub same_neighbors: usize,
    pub total_neighbors: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NnReport {
    pub k: usize,
    pub metric: Metric,
    pub per_type: BTreeMap<String, LabelStats>,
    pub overall: f64,
    pub same_neighbors: usize,
    pub total_neighbors: usize,
}

impl NnReport {
    pub fn len(&self) -> usize {
        self.per_type.values().map(|s| s.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Indices of the `k` nearest other vectors of each vector; distance ties go
/// to the earlier index.
pub fn nearest_neighbors(vectors: &[&[f64]], k: usize, metric: Metric) -> Result<Vec<Vec<usize>>> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::validation(format!("need at least 2 vectors, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::validation(format!("k = {k} must be in 1..{n}")));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::shape(format!("vector lengths differ ({dim} and {})", v.len())));
    }
    let rows: Vec<Array1<f64>> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let a = Array1::from(v.to_vec());
            match metric {
                Metric::Euclidean => Ok(a),
                Metric::Cosine => {
                    let norm = a.dot(&a).sqrt();
                    if norm == 0.0 {
                        return Err(Error::validation(format!("vector {i} is zero under the cosine metric")));
                    }
                    Ok(a / norm)
                }
            }
        })
        .collect::<Result<_>>()?;
    let distance = |a: &Array1<f64>, b: &Array1<f64>| match metric {
        Metric::Cosine => 1.0 - a.dot(b),
        Metric::Euclidean => {
            let d = a - b;
            d.dot(&d)
        }
    };
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (distance(&rows[i], &rows[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect())
}

pub fn knn_same_type(reps: &[LabeledVector], k: usize, metric: Metric) -> Result<NnReport> {
    let views: Vec<&[f64]> = reps.iter().map(|r| r.values.as_slice()).collect();
    let neighbors = nearest_neighbors(&views, k, metric)?;
    let mut per_type: BTreeMap<String, LabelStats> = BTreeMap::new();
    for (rep, nbrs) in reps.iter().zip(&neighbors) {
        let same = nbrs.iter().filter(|&&j| reps[j].label == rep.label).count();
        let stats = per_type.entry(rep.label.clone()).or_insert(LabelStats {
            count: 0,
            same_neighbors: 0,
            total_neighbors: 0,
            proportion: 0.0,
        });
        stats.count += 1;
        stats.same_neighbors += same;
        stats.total_neighbors += k;
    }
    for stats in per_type.values_mut() {
        stats.proportion = stats.same_neighbors as f64 / stats.total_neighbors as f64;
    }
    let same_neighbors = per_type.values().map(|s| s.same_neighbors).sum();
    Ok(NnReport {
        k,
        metric,
        overall: same_neighbors as f64 / (reps.len() * k) as f64,
        same_neighbors,
        total_neighbors: reps.len() * k,
        per_type,
    })
}

/// Reports for several seeds plus their element-wise mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAveragedReport {
    pub per_seed: Vec<NnReport>,
    pub mean_per_type: BTreeMap<String, f64>,
    pub mean_overall: f64,
}

pub fn average_reports(reports: Vec<NnReport>) -> Result<SeedAveragedReport> {
    let n = reports.len();
    if n == 0 {
        return Err(Error::validation("no reports to average"));
    }
    let labels: BTreeSet<&String> = reports.iter().flat_map(|r| r.per_type.keys()).collect();
    let mut mean_per_type = BTreeMap::new();
    for label in labels {
        let values: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.per_type.get(label).map(|s| s.proportion))
            .collect();
        mean_per_type.insert(label.clone(), values.iter().sum::<f64>() / values.len() as f64);
    }
    let mean_overall = reports.iter().map(|r| r.overall).sum::<f64>() / n as f64;
    Ok(SeedAveragedReport {
        per_seed: reports,
        mean_per_type,
        mean_overall,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::validation(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::validation("need at least 2 observations"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::validation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Accuracy over the distinct pair ids in `subset`.
pub fn subset_accuracy(
    predictions: &HashMap<String, NliLabel>,
    subset: &[String],
    gold: &HashMap<String, NliLabel>,
) -> Result<f64> {
    let ids: BTreeSet<&String> = subset.iter().collect();
    if ids.is_empty() {
        return Err(Error::validation("empty subset"));
    }
    let mut correct = 0;
    for id in &ids {
        let p = predictions
            .get(*id)
            .ok_or_else(|| Error::validation(format!("no prediction for pair {id:?}")))?;
        let g = gold
            .get(*id)
            .ok_or_else(|| Error::validation(format!("no gold label for pair {id:?}")))?;
        correct += usize::from(p == g);
    }
    Ok(correct as f64 / ids.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

/// Pooled two-proportion z test of `x1 / n1` against `x2 / n2`, two-sided.
pub fn two_proportion_z(x1: usize, n1: usize, x2: usize, n2: usize) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::validation(format!("invalid counts {x1}/{n1}, {x2}/{n2}")));
    }
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return Ok(ZTest { z: 0.0, p_value: 1.0 });
    }
    let z = (p1 - p2) / se;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(ZTest {
        z,
        p_value: 2.0 * normal.sf(z.abs()),
    })
}

/// Per-label and overall z tests on the raw neighbour counts of two reports.
pub fn compare_reports(report: &NnReport, baseline: &NnReport) -> Result<BTreeMap<String, ZTest>> {
    let mut out = BTreeMap::new();
    for (label, a) in &report.per_type {
        if let Some(b) = baseline.per_type.get(label) {
            out.insert(
                label.clone(),
                two_proportion_z(a.same_neighbors, a.total_neighbors, b.same_neighbors, b.total_neighbors)?,
            );
        }
    }
    out.insert(
        "all".into(),
        two_proportion_z(
            report.same_neighbors,
            report.total_neighbors,
            baseline.same_neighbors,
            baseline.total_neighbors,
        )?,
    );
    Ok(out)
}

/// Table-style text rendering, one row per label then the overall row.
pub fn format_report(report: &SeedAveragedReport, seeds: &[String], tests: Option<&BTreeMap<String, ZTest>>) -> String {
    let first = &report.per_seed[0];
    let mut out = format!(
        "k = {}\nmetric = {}\nseeds = {}\n\n",
        first.k,
        first.metric,
        seeds.join(",")
    );
    out.push_str(&format!("{:<20}{:>8}{:>12}", "type", "count", "same_nn_%"));
    if tests.is_some() {
        out.push_str(&format!("{:>10}{:>10}", "z", "p"));
    }
    out.push('\n');
    let mut row = |name: &str, count: usize, value: f64| {
        out.push_str(&format!("{name:<20}{count:>8}{:>12.1}", value * 100.0));
        if let Some(t) = tests.and_then(|t| t.get(name)) {
            out.push_str(&format!("{:>10.3}{:>10.4}", t.z, t.p_value));
        }
        out.push('\n');
    };
    for (label, mean) in &report.mean_per_type {
        row(label, first.per_type.get(label).map_or(0, |s| s.count), *mean);
    }
    row("all", first.len(), report.mean_overall);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RelationMeta {
    id: String,
    pair_id: String,
    i: usize,
    j: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    relation_type: Option<RelationType>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    seed: Option<u64>,
}

/// Relation reps extracted from one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationSet {
    pub seed: Option<u64>,
    pub reps: Vec<RelationRep>,
}

/// Writes reps as a store of `1 x 1 x R` records plus a JSONL sidecar of
/// relation types. Values are narrowed to `f32`.
pub fn write_relation_reps(set: &RelationSet, store_path: &Path, sidecar_path: &Path) -> Result<()> {
    let reps = &set.reps;
    let records = reps
        .iter()
        .map(|r| {
            let values = r.values.iter().map(|&v| v as f32).collect();
            Ok(EmbeddingRecord::new(r.key(), 1, 1, r.values.len(), values)?)
        })
        .collect::<Result<Vec<_>>>()?;
    embedstore::write_store(&records, store_path)?;
    let mut out = BufWriter::new(fs::File::create(sidecar_path)?);
    for r in reps {
        let meta = RelationMeta {
            id: r.key(),
            pair_id: r.pair_id.clone(),
            i: r.premise_index,
            j: r.hypothesis_index,
            relation_type: r.relation_type,
            seed: set.seed,
        };
        serde_json::to_writer(&mut out, &meta).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_relation_reps(store_path: &Path, sidecar_path: &Path) -> Result<RelationSet> {
    let store = embedstore::read_store(store_path)?;
    let name = sidecar_path.display().to_string();
    let mut reps = Vec::new();
    let mut seed = None;
    for (n, line) in fs::read_to_string(sidecar_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let meta: RelationMeta = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: name.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let record = store.require(&meta.id)?;
        if reps.is_empty() {
            seed = meta.seed;
        } else if seed != meta.seed {
            return Err(Error::validation(format!("{name}:{}: mixed seeds in one sidecar", n + 1)));
        }
        reps.push(RelationRep {
            pair_id: meta.pair_id,
            premise_index: meta.i,
            hypothesis_index: meta.j,
            relation_type: meta.relation_type,
            values: record.values().iter().map(|&v| v as f64).collect(),
        });
    }
    Ok(RelationSet { seed, reps })
}

/// Typed reps as analysis input; every rep must carry a relation type.
pub fn labeled_relations(reps: &[RelationRep]) -> Result<Vec<LabeledVector>> {
    reps.iter()
        .map(|r| {
            let t = r
                .relation_type
                .ok_or_else(|| Error::validation(format!("rep {:?} has no relation type", r.key())))?;
            Ok(LabeledVector::new(r.key(), t.as_str(), r.values.clone()))
        })
        .collect()
}

/// One row of an exported vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRow {
    pub id: String,
    pub label: String,
    pub in_parens: Option<bool>,
    pub tag: String,
    pub values: Vec<f64>,
}

const META_COLUMNS: [&str; 4] = ["id", "label", "in_parens", "tag"];

fn check_field(field: &str) -> Result<()> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(Error::validation(format!("field {field:?} contains a tab or newline")));
    }
    Ok(())
}

/// Tab-separated table: `id label in_parens tag v0 .. v{D-1}`.
pub fn write_vectors<W: Write>(rows: &[VectorRow], out: W) -> Result<()> {
    let first = rows.first().ok_or_else(|| Error::validation("no vectors to export"))?;
    let dim = first.values.len();
    let mut out = BufWriter::new(out);
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|i| format!("v{i}")));
    writeln!(out, "{}", header.join("\t"))?;
    for row in rows {
        if row.values.len() != dim {
            return Err(Error::shape(format!("row {:?} has {} values, expected {dim}", row.id, row.values.len())));
        }
        for f in [&row.id, &row.label, &row.tag] {
            check_field(f)?;
        }
        let parens = row.in_parens.map(|b| b.to_string()).unwrap_or_default();
        let mut fields = vec![row.id.clone(), row.label.clone(), parens, row.tag.clone()];
        fields.extend(row.values.iter().map(|v| v.to_string()));
        writeln!(out, "{}", fields.join("\t"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_vectors(rows: &[VectorRow], path: &Path) -> Result<()> {
    write_vectors(rows, fs::File::create(path)?)
}

pub fn parse_vectors(text: &str, name: &str) -> Result<Vec<VectorRow>> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.len() < META_COLUMNS.len() || columns[..4] != META_COLUMNS {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let dim = columns.len() - META_COLUMNS.len();
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(parse_err(n + 1, format!("expected {} fields, got {}", columns.len(), fields.len())));
        }
        let in_parens = match fields[2] {
            "" => None,
            s => Some(s.parse().map_err(|_| parse_err(n + 1, format!("bad in_parens value {s:?}")))?),
        };
        let values = fields[4..]
            .iter()
            .map(|s| s.parse().map_err(|_| parse_err(n + 1, format!("bad number {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        debug_assert_eq!(values.len(), dim);
        rows.push(VectorRow {
            id: fields[0].to_string(),
            label: fields[1].to_string(),
            in_parens,
            tag: fields[3].to_string(),
            values,
        });
    }
    Ok(rows)
}

pub fn read_vectors(path: &Path) -> Result<Vec<VectorRow>> {
    parse_vectors(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Whether token `i` sits between an unclosed `(` and a later `)`.
pub fn inside_parentheses(tokens: &[String], i: usize) -> bool {
    let mut depth = 0usize;
    for t in &tokens[..i] {
        match t.as_str() {
            "(" => depth += 1,
            ")" => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    if depth == 0 {
        return false;
    }
    let mut closing = 0usize;
    for t in &tokens[i + 1..] {
        match t.as_str() {
            "(" => closing += 1,
            ")" if closing == 0 => return true,
            ")" => closing -= 1,
            _ => {}
        }
    }
    false
}

/// Rows for every occurrence of `surface` in the tagged sentences. The
/// vector is the record mixed with `weights`, or the plain layer average.
pub fn token_vector_rows(
    sentences: &[crate::corpus::TaggedSentence],
    store: &EmbeddingStore,
    surface: &str,
    weights: Option<&MixWeights>,
    tag: &str,
) -> Result<Vec<VectorRow>> {
    let mut rows = Vec::new();
    for sentence in sentences {
        let positions: Vec<usize> = (0..sentence.tokens.len())
            .filter(|&i| sentence.tokens[i] == surface)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let record = store.require(&sentence.id)?;
        if record.seq_len() != sentence.tokens.len() {
            return Err(Error::validation(format!(
                "record {:?} has {} positions, sentence has {} tokens",
                sentence.id,
                record.seq_len(),
                sentence.tokens.len()
            )));
        }
        let uniform = MixWeights::new(record.num_layers());
        let mixed = embedstore::mix(record, weights.unwrap_or(&uniform))?;
        for i in positions {
            rows.push(VectorRow {
                id: format!("{}:{i}", sentence.id),
                label: sentence.tags[i].entity_type().unwrap_or("").to_string(),
                in_parens: Some(inside_parentheses(&sentence.tokens, i)),
                tag: tag.to_string(),
                values: mixed.row(i).to_vec(),
            });
        }
    }
    Ok(rows)
}
