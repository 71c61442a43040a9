//! The `HGRLW1` named-tensor file format.
//!
//! Layout, little-endian: the 6-byte magic, then per entry a `u32` name
//! length, the UTF-8 name, a `u8` dtype tag (0 = f32), a `u8` rank, `rank`
//! `u64` dims and the row-major data. Entries run to the end of the file.

use crate::params::ParamStore;
use crate::tensor::Tensor;
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"HGRLW1";
pub const DTYPE_F32: u8 = 0;
/// Entries loaded by a partial import.
pub const CONV_PREFIX: &str = "encoder.block";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("bad magic at offset 0: expected HGRLW1")]
    BadMagic,
    #[error("truncated entry at offset {offset}: {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("entry at offset {offset}: {msg}")]
    Malformed { offset: usize, msg: String },
    #[error("duplicate entry name {0:?}")]
    Collision(String),
    #[error("shape mismatch for {name}: model has {model:?}, file has {file:?}")]
    Shape {
        name: String,
        model: Vec<usize>,
        file: Vec<usize>,
    },
    #[error("file has no entry {0:?} required by the model")]
    Missing(String),
    #[error("file entry {0:?} does not exist in the model")]
    Unexpected(String),
    #[error("file has no conv-block entries to import")]
    NothingToImport,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn encode<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Every entry of the store, in store order.
pub fn encode_store(store: &ParamStore<f32>) -> Vec<u8> {
    encode(store.entries().iter().map(|e| (e.name.as_str(), &e.value)))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    entry: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WeightsError> {
        if self.buf.len() - self.pos < n {
            return Err(WeightsError::Truncated {
                offset: self.entry,
                what,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, WeightsError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
        entry: MAGIC.len(),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        r.entry = r.pos;
        let len = u32::from_le_bytes(r.take(4, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|e| WeightsError::Malformed {
                offset: r.entry,
                msg: format!("name is not UTF-8: {e}"),
            })?
            .to_string();
        let dtype = r.take(1, "dtype")?[0];
        if dtype != DTYPE_F32 {
            return Err(WeightsError::Malformed {
                offset: r.entry,
                msg: format!("unsupported dtype tag {dtype}"),
            });
        }
        let rank = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(r.take(8, "dims")?.try_into().unwrap());
            shape.push(usize::try_from(d).map_err(|_| WeightsError::Malformed {
                offset: r.entry,
                msg: format!("dimension {d} too large"),
            })?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| WeightsError::Malformed {
                offset: r.entry,
                msg: format!("shape {shape:?} overflows"),
            })?;
        let data = r
            .take(n, "data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !seen.insert(name.clone()) {
            return Err(WeightsError::Collision(name));
        }
        out.push((name, Tensor::new(&shape, data).expect("length checked")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImportSummary {
    pub loaded: Vec<String>,
    /// File entries ignored by a partial import.
    pub skipped: Vec<String>,
}

/// Loads decoded entries into `store`.
///
/// A full import needs the file and the model to hold exactly the same names
/// and shapes. A partial import loads only conv-block entries that the model
/// has and leaves everything else untouched. The store is unchanged on error.
pub fn import_into(
    store: &mut ParamStore<f32>,
    entries: Vec<(String, Tensor<f32>)>,
    allow_partial: bool,
) -> Result<ImportSummary, WeightsError> {
    let mut load = Vec::new();
    let mut skipped = Vec::new();
    for (name, t) in entries {
        let wanted = !allow_partial || name.starts_with(CONV_PREFIX);
        match store.get(&name) {
            Ok(cur) if wanted => {
                if cur.shape() != t.shape() {
                    return Err(WeightsError::Shape {
                        model: cur.shape().to_vec(),
                        file: t.shape().to_vec(),
                        name,
                    });
                }
                load.push((name, t));
            }
            Err(_) if !allow_partial => return Err(WeightsError::Unexpected(name)),
            _ => skipped.push(name),
        }
    }
    if !allow_partial {
        let have: HashSet<&str> = load.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(e) = store
            .entries()
            .iter()
            .find(|e| !have.contains(e.name.as_str()))
        {
            return Err(WeightsError::Missing(e.name.clone()));
        }
    } else if load.is_empty() {
        return Err(WeightsError::NothingToImport);
    }
    let loaded = load.iter().map(|(n, _)| n.clone()).collect();
    for (name, t) in load {
        store.set(&name, t).expect("checked above");
    }
    Ok(ImportSummary { loaded, skipped })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), WeightsError> {
    std::fs::write(path, bytes).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<Vec<(String, Tensor<f32>)>, WeightsError> {
    let bytes = std::fs::read(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::EntryKind;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert(
            "encoder.block0.conv0.weight",
            EntryKind::Param,
            Tensor::from_fn(&[2, 1, 3, 3], |i| i as f32 * 0.5),
        )
        .unwrap();
        s.insert(
            "encoder.block0.bn0.running_var",
            EntryKind::Buffer,
            Tensor::ones(&[2]),
        )
        .unwrap();
        s.insert(
            "head.ar.node.bias",
            EntryKind::Param,
            Tensor::new(&[1], vec![-0.0]).unwrap(),
        )
        .unwrap();
        s.insert(
            "scalar",
            EntryKind::Param,
            Tensor::scalar(f32::MIN_POSITIVE),
        )
        .unwrap();
        s
    }

    #[test]
    fn layout_of_a_single_entry() {
        let t = Tensor::new(&[2], vec![1.0f32, -2.0]).unwrap();
        let b = encode([("ab", &t)]);
        let mut want = b"HGRLW1".to_vec();
        want.extend([2, 0, 0, 0, b'a', b'b', 0, 1]);
        want.extend(2u64.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        assert_eq!(b, want);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = store();
        let bytes = encode_store(&s);
        let mut fresh = s.clone();
        for e in 0..fresh.len() {
            let v = &mut fresh.entry_mut(e).value;
            *v = Tensor::zeros(v.shape());
        }
        import_into(&mut fresh, decode(&bytes).unwrap(), false).unwrap();
        assert_eq!(encode_store(&fresh), bytes);
        let neg_zero = fresh.get("head.ar.node.bias").unwrap().data()[0];
        assert!(neg_zero.is_sign_negative());
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = encode_store(&store());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let e = decode(&bad).unwrap_err();
        assert!(e.to_string().contains("offset 0"), "{e}");
        assert!(matches!(decode(b"HGR"), Err(WeightsError::BadMagic)));

        for cut in [7, 12, 40, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(WeightsError::Truncated { .. })),
                "cut {cut}"
            );
        }

        let t = Tensor::scalar(1.0f32);
        let dup = encode([("a", &t), ("a", &t)]);
        assert!(matches!(decode(&dup), Err(WeightsError::Collision(n)) if n == "a"));
    }

    #[test]
    fn full_import_checks_names_and_shapes() {
        let mut s = store();
        let before = s.clone();
        let wrong = Tensor::zeros(&[3]);
        let mut entries = decode(&encode_store(&s)).unwrap();
        entries[1].1 = wrong.clone();
        assert!(matches!(
            import_into(&mut s, entries, false),
            Err(WeightsError::Shape { .. })
        ));
        assert_eq!(s, before);

        let mut entries = decode(&encode_store(&s)).unwrap();
        entries.pop();
        assert!(
            matches!(import_into(&mut s, entries, false), Err(WeightsError::Missing(n)) if n == "scalar")
        );

        let mut entries = decode(&encode_store(&s)).unwrap();
        entries.push(("extra".into(), wrong));
        assert!(matches!(
            import_into(&mut s, entries, false),
            Err(WeightsError::Unexpected(_))
        ));
    }

    #[test]
    fn partial_import_touches_only_conv_blocks() {
        let mut src = store();
        for e in 0..src.len() {
            let v = &mut src.entry_mut(e).value;
            *v = v.map(|x| x + 7.0);
        }
        let mut dst = store();
        let s = import_into(&mut dst, decode(&encode_store(&src)).unwrap(), true).unwrap();
        assert_eq!(s.loaded.len(), 2);
        assert_eq!(s.skipped, vec!["head.ar.node.bias", "scalar"]);
        assert_eq!(
            dst.get("encoder.block0.conv0.weight").unwrap(),
            src.get("encoder.block0.conv0.weight").unwrap()
        );
        assert_eq!(dst.get("scalar").unwrap(), store().get("scalar").unwrap());

        let t = Tensor::scalar(1.0f32);
        let heads_only = encode([("head.ar.node.bias", &t)]);
        assert!(matches!(
            import_into(&mut dst, decode(&heads_only).unwrap(), true),
            Err(WeightsError::NothingToImport)
        ));
    }
}
