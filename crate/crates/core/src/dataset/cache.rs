//! Content-addressed dataset cache.
//!
//! Entries live at `<root>/<hex key>.fpds` in a line-oriented columnar text
//! format:
//!
//! ```text
//! FPDSTXT                  8-byte magic including the newline
//! version 1
//! provenance "german>RW"   JSON string
//! shape 1000 61
//! feature {"name":"age","kind":"numeric"}
//! 4045000000000000 ...     one line of IEEE-754 bit patterns per column
//! labels 0110...
//! protected 1010...
//! weights
//! 3ff0000000000000 ...
//! end
//! ```
//!
//! Reals are stored as hexadecimal bit patterns, so a round trip is
//! bit-identical. Writes go to a temporary file in the cache directory that is
//! renamed into place, so readers never observe a partial entry.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{FeatureKind, TabularDataset};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FPDSTXT\n";
pub const FORMAT_VERSION: u32 = 1;
const EXTENSION: &str = "fpds";

/// Hex SHA-256 of a canonical JSON serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    /// Key for `(dataset, method, params, seed)`.
    ///
    /// `params` must serialize deterministically (use ordered maps).
    pub fn new<P: Serialize>(dataset: &str, method: &str, params: &P, seed: u64) -> Self {
        #[derive(Serialize)]
        struct Canonical<'a, P> {
            dataset: &'a str,
            method: &'a str,
            params: &'a P,
            seed: u64,
        }
        let json = serde_json::to_vec(&Canonical {
            dataset,
            method,
            params,
            seed,
        })
        .expect("cache key parameters serialize");
        CacheKey(hex::encode(Sha256::digest(&json)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    name: String,
    #[serde(flatten)]
    kind: FeatureKind,
}

fn hex_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_hex_f64(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::CacheFormat(format!("bad real `{s}`")))
}

fn bits(v: &[u8]) -> String {
    v.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

/// Serializes a dataset to the cache text format.
pub fn to_bytes(ds: &TabularDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let join = |it: &mut dyn Iterator<Item = f64>| it.map(hex_f64).collect::<Vec<_>>().join(" ");
    let mut text = String::new();
    text.push_str(&format!("version {FORMAT_VERSION}\n"));
    text.push_str(&format!(
        "provenance {}\n",
        serde_json::to_string(ds.provenance()).expect("string serializes")
    ));
    text.push_str(&format!("shape {} {}\n", ds.n(), ds.d()));
    for (j, (name, kind)) in ds.feature_names().iter().zip(ds.feature_kinds()).enumerate() {
        let header = FeatureHeader {
            name: name.clone(),
            kind: kind.clone(),
        };
        text.push_str("feature ");
        text.push_str(&serde_json::to_string(&header).expect("header serializes"));
        text.push('\n');
        text.push_str(&join(&mut ds.features().column(j).iter().copied()));
        text.push('\n');
    }
    text.push_str(&format!("labels {}\n", bits(ds.labels())));
    text.push_str(&format!("protected {}\n", bits(ds.protected())));
    text.push_str("weights\n");
    text.push_str(&join(&mut ds.weights().iter().copied()));
    text.push_str("\nend\n");
    out.extend_from_slice(text.as_bytes());
    out
}

/// Parses the cache text format.
pub fn from_bytes(bytes: &[u8]) -> Result<TabularDataset> {
    let bad = |m: &str| Error::CacheFormat(m.to_string());
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("missing magic header"));
    }
    let text = std::str::from_utf8(&bytes[MAGIC.len()..]).map_err(|_| bad("not UTF-8"))?;
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(&format!("truncated at {what}")));
    let field = |line: &str, key: &str| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
            .map(str::to_string)
            .ok_or_else(|| Error::CacheFormat(format!("expected `{key}`, found `{line}`")))
    };
    let version: u32 = field(next("version")?, "version")?
        .parse()
        .map_err(|_| bad("bad version"))?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let provenance: String = serde_json::from_str(&field(next("provenance")?, "provenance")?)
        .map_err(|_| bad("bad provenance"))?;
    let shape = field(next("shape")?, "shape")?;
    let (n, d) = shape
        .split_once(' ')
        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
        .ok_or_else(|| bad("bad shape"))?;
    let reals = |line: &str, len: usize| -> Result<Vec<f64>> {
        let v = line
            .split_ascii_whitespace()
            .map(parse_hex_f64)
            .collect::<Result<Vec<_>>>()?;
        if v.len() != len {
            return Err(Error::CacheFormat(format!("expected {len} values, found {}", v.len())));
        }
        Ok(v)
    };
    let mut features = Array2::<f64>::zeros((n, d));
    let mut names = Vec::with_capacity(d);
    let mut kinds = Vec::with_capacity(d);
    for j in 0..d {
        let header: FeatureHeader = serde_json::from_str(&field(next("feature")?, "feature")?)
            .map_err(|e| bad(&format!("bad feature header: {e}")))?;
        names.push(header.name);
        kinds.push(header.kind);
        for (i, v) in reals(next("feature values")?, n)?.into_iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    let flags = |line: String| -> Result<Vec<u8>> {
        let v: Vec<u8> = line
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::CacheFormat("bad binary flag".into())),
            })
            .collect::<Result<_>>()?;
        if v.len() != n {
            return Err(Error::CacheFormat("binary vector length mismatch".into()));
        }
        Ok(v)
    };
    let labels = flags(field(next("labels")?, "labels")?)?;
    let protected = flags(field(next("protected")?, "protected")?)?;
    field(next("weights")?, "weights")?;
    let weights = reals(next("weight values")?, n)?;
    if next("end")? != "end" {
        return Err(bad("missing end marker"));
    }
    TabularDataset::new(features, labels, protected, weights, names, kinds, provenance)
}

/// Directory-backed cache safe for concurrent writers.
#[derive(Debug, Clone)]
pub struct DatasetCache {
    root: PathBuf,
}

impl DatasetCache {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root.join(format!("{}.{EXTENSION}", key.as_str()))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_for(key).is_file()
    }

    /// Stores `ds` under `key`, replacing any previous entry.
    pub fn store(&self, ds: &TabularDataset, key: &CacheKey) -> Result<String> {
        let path = self.path_for(key);
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(&self.root)
            .map_err(|e| Error::io(&self.root, e))?;
        tmp.write_all(&to_bytes(ds))
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(key.as_str().to_string())
    }

    /// Loads an entry; `Ok(None)` on a cache miss.
    pub fn load(&self, key: &CacheKey) -> Result<Option<TabularDataset>> {
        let path = self.path_for(key);
        match std::fs::read(&path) {
            Ok(bytes) => from_bytes(&bytes)
                .map(Some)
                .map_err(|e| e.context(path.display().to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TabularDataset {
        let x = ndarray::array![[1.5, 0.0], [-2.25, 1.0], [f64::MIN_POSITIVE, 0.0]];
        TabularDataset::new(
            x,
            vec![1, 0, 1],
            vec![0, 1, 1],
            vec![0.1, 2.0 / 3.0, 1e-300],
            vec!["age".into(), "color=red 1".into()],
            vec![
                FeatureKind::Numeric,
                FeatureKind::OneHot {
                    source: "color".into(),
                    level: "red 1".into(),
                },
            ],
            "demo \"x\">RW",
        )
        .unwrap()
    }

    #[test]
    fn store_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DatasetCache::new(dir.path()).unwrap();
        let key = CacheKey::new("demo", "RW", &(), 1);
        assert!(cache.load(&key).unwrap().is_none());
        cache.store(&sample(), &key).unwrap();
        assert_eq!(cache.load(&key).unwrap().unwrap(), sample());
    }

    #[test]
    fn same_key_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DatasetCache::new(dir.path()).unwrap();
        let key = CacheKey::new("demo", "RW", &(), 1);
        cache.store(&sample(), &key).unwrap();
        let second = sample().with_lineage("again");
        cache.store(&second, &key).unwrap();
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
        assert_eq!(cache.load(&key).unwrap().unwrap(), second);
    }

    #[test]
    fn key_depends_on_every_component() {
        let base = CacheKey::new("a", "RW", &[1], 1);
        assert_ne!(base, CacheKey::new("b", "RW", &[1], 1));
        assert_ne!(base, CacheKey::new("a", "DIR", &[1], 1));
        assert_ne!(base, CacheKey::new("a", "RW", &[2], 1));
        assert_ne!(base, CacheKey::new("a", "RW", &[1], 2));
        assert_eq!(base, CacheKey::new("a", "RW", &[1], 1));
    }

    #[test]
    fn corrupt_entries_are_errors() {
        assert!(from_bytes(b"NOTMAGIC").is_err());
        let mut bytes = to_bytes(&sample());
        bytes.truncate(bytes.len() - 5);
        assert!(from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_identical(
            vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6),
            w in proptest::collection::vec(0.0f64..1e6, 3),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let x = Array2::from_shape_vec((3, 2), vals).unwrap();
            let ds = TabularDataset::from_parts(x, vec![0, 1, 1], vec![1, 0, 1], "p").unwrap()
                .with_weights(w).unwrap();
            let back = from_bytes(&to_bytes(&ds)).unwrap();
            for (a, b) in ds.features().iter().zip(back.features()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back, ds);
        }
    }
}
