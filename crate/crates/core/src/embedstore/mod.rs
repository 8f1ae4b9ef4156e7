//! Portable fixed-embedding store ("PTE") and the trainable scalar layer mix.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "PTEB" | version u32 = 1 | count u32
//! per record: id_len u32 | id bytes | K u32 | L u32 | D u32 | K*L*D f32
//! ```
//!
//! Values are layer-major, then token-major, then dimension.

mod mix;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

pub use mix::{mix, mix_backward, MixWeights};

use crate::error::{Error, Result, StoreError};

pub const MAGIC: [u8; 4] = *b"PTEB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    id: String,
    num_layers: usize,
    seq_len: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(
        id: impl Into<String>,
        num_layers: usize,
        seq_len: usize,
        dim: usize,
        values: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let id = id.into();
        let invalid = |reason: String| StoreError::InvalidRecord {
            id: id.clone(),
            reason,
        };
        if num_layers == 0 || seq_len == 0 || dim == 0 {
            return Err(invalid(format!(
                "dimensions must be positive, got K={num_layers} L={seq_len} D={dim}"
            )));
        }
        let expected = num_layers
            .checked_mul(seq_len)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| invalid("dimension product overflows".into()))?;
        if values.len() != expected {
            return Err(invalid(format!("expected {expected} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite { id });
        }
        Ok(Self {
            id,
            num_layers,
            seq_len,
            dim,
            values,
        })
    }

    /// Build a record from per-layer `L x D` matrices, rounding to f32.
    pub fn from_layers(id: impl Into<String>, layers: &[Array2<f64>]) -> Result<Self, StoreError> {
        let id = id.into();
        let (l, d) = layers.first().map(|m| m.dim()).unwrap_or((0, 0));
        if layers.iter().any(|m| m.dim() != (l, d)) {
            return Err(StoreError::InvalidRecord {
                id,
                reason: "layers differ in shape".into(),
            });
        }
        let values = layers.iter().flat_map(|m| m.iter().map(|&v| v as f32)).collect();
        Self::new(id, layers.len(), l, d, values)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// The `L x D` slab of layer `k`.
    pub fn layer(&self, k: usize) -> ArrayView2<'_, f32> {
        let n = self.seq_len * self.dim;
        ArrayView2::from_shape((self.seq_len, self.dim), &self.values[k * n..(k + 1) * n])
            .expect("record shape is validated at construction")
    }

    fn encoded_len(&self) -> usize {
        4 + self.id.len() + 12 + 4 * self.values.len()
    }
}

/// An immutable, id-indexed collection of records.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self, StoreError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(StoreError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records, index })
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Like [`get`](Self::get) but a missing id is a validation error.
    pub fn require(&self, id: &str) -> Result<&EmbeddingRecord> {
        self.get(id)
            .ok_or_else(|| Error::validation(format!("no embedding record for {id:?}")))
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }
}

pub fn encode_store(records: &[EmbeddingRecord]) -> Result<Vec<u8>, StoreError> {
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(StoreError::DuplicateId(r.id.clone()));
        }
    }
    let u32_of = |n: usize, what: &str, id: &str| {
        u32::try_from(n).map_err(|_| StoreError::InvalidRecord {
            id: id.to_string(),
            reason: format!("{what} {n} exceeds u32"),
        })
    };
    let total = 12 + records.iter().map(EmbeddingRecord::encoded_len).sum::<usize>();
    let mut buf = Vec::with_capacity(total);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_of(records.len(), "record count", "")?.to_le_bytes());
    for r in records {
        buf.extend_from_slice(&u32_of(r.id.len(), "id length", &r.id)?.to_le_bytes());
        buf.extend_from_slice(r.id.as_bytes());
        for n in [r.num_layers, r.seq_len, r.dim] {
            buf.extend_from_slice(&u32_of(n, "dimension", &r.id)?.to_le_bytes());
        }
        for v in &r.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn write_store(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let bytes = encode_store(records)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path)?;
    Ok(decode_store(&bytes)?)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            StoreError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} available",
                self.pos,
                self.buf.len() - self.pos
            ))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, StoreError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<EmbeddingStore, StoreError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(StoreError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let count = cur.u32("record count")? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = cur.u32("id length")? as usize;
        let id = std::str::from_utf8(cur.take(id_len, "id")?)
            .map_err(|_| StoreError::InvalidRecord {
                id: String::from("<non-utf8>"),
                reason: "id is not UTF-8".into(),
            })?
            .to_string();
        let k = cur.u32("K")? as usize;
        let l = cur.u32("L")? as usize;
        let d = cur.u32("D")? as usize;
        let n = k
            .checked_mul(l)
            .and_then(|n| n.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| StoreError::Truncated(format!("record {id:?} size overflows")))?;
        let raw = cur.take(n, "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(EmbeddingRecord::new(id, k, l, d, values)?);
    }
    if cur.pos != bytes.len() {
        return Err(StoreError::InvalidRecord {
            id: String::new(),
            reason: format!("{} trailing bytes after last record", bytes.len() - cur.pos),
        });
    }
    EmbeddingStore::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, k: usize, l: usize, d: usize) -> EmbeddingRecord {
        let values = (0..k * l * d).map(|i| i as f32 * 0.25 - 1.0).collect();
        EmbeddingRecord::new(id, k, l, d, values).unwrap()
    }

    #[test]
    fn empty_store_has_zero_count() {
        let bytes = encode_store(&[]).unwrap();
        assert_eq!(bytes, [b'P', b'T', b'E', b'B', 1, 0, 0, 0, 0, 0, 0, 0]);
        assert!(decode_store(&bytes).unwrap().is_empty());
    }

    #[test]
    fn record_size_is_header_plus_values() {
        let bytes = encode_store(&[record("ab", 3, 2, 4)]).unwrap();
        let header = 12 + 4 + 2 + 12;
        assert_eq!(bytes.len(), header + 3 * 2 * 4 * 4);
    }

    #[test]
    fn layer_major_ordering() {
        let r = record("x", 2, 2, 3);
        assert_eq!(r.layer(1)[[0, 0]], r.values()[6]);
        assert_eq!(r.layer(0)[[1, 2]], r.values()[5]);
    }

    #[test]
    fn rejects_corruption() {
        let good = encode_store(&[record("a", 1, 2, 2)]).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_store(&bad), Err(StoreError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_store(&bad), Err(StoreError::UnsupportedVersion(2))));
        for cut in [3, 10, good.len() - 1] {
            assert!(matches!(decode_store(&good[..cut]), Err(StoreError::Truncated(_))), "cut {cut}");
        }
        let mut bad = good.clone();
        let nan = f32::NAN.to_le_bytes();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&nan);
        assert!(matches!(decode_store(&bad), Err(StoreError::NonFinite { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = record("a", 1, 1, 1);
        assert!(matches!(encode_store(&[r.clone(), r.clone()]), Err(StoreError::DuplicateId(_))));
        assert!(matches!(EmbeddingStore::new(vec![r.clone(), r]), Err(StoreError::DuplicateId(_))));
    }

    #[test]
    fn invalid_records_rejected() {
        assert!(EmbeddingRecord::new("a", 0, 1, 1, vec![]).is_err());
        assert!(EmbeddingRecord::new("a", 1, 1, 2, vec![0.0]).is_err());
        assert!(matches!(
            EmbeddingRecord::new("a", 1, 1, 1, vec![f32::INFINITY]),
            Err(StoreError::NonFinite { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.pte");
        let records = vec![record("s0", 3, 2, 4), record("s1", 3, 5, 4)];
        write_store(&records, &path).unwrap();
        let store = read_store(&path).unwrap();
        assert_eq!(store.records(), &records[..]);
        assert_eq!(store.get("s1").unwrap().seq_len(), 5);
        assert!(store.require("nope").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_is_bit_exact(
            shapes in prop::collection::vec((1usize..4, 1usize..5, 1usize..6), 0..5),
            seed in any::<u32>(),
        ) {
            let records: Vec<_> = shapes.iter().enumerate().map(|(n, &(k, l, d))| {
                let values = (0..k * l * d)
                    .map(|i| f32::from_bits((seed ^ (i as u32).wrapping_mul(2654435761)) & 0x3fff_ffff) - 1.0)
                    .collect();
                EmbeddingRecord::new(format!("r{n}/é"), k, l, d, values).unwrap()
            }).collect();
            let bytes = encode_store(&records).unwrap();
            let store = decode_store(&bytes).unwrap();
            for (a, b) in store.records().iter().zip(&records) {
                prop_assert_eq!(a.id(), b.id());
                let bits_a: Vec<u32> = a.values().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u32> = b.values().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
            prop_assert_eq!(encode_store(store.records()).unwrap(), bytes);
        }
    }
}
