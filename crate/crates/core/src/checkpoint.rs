//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "GENIKIT\0" | version u32 | meta JSON (u64 len + bytes)
//! | node names | predicate names          (u64 count, then u64 len + UTF-8 each)
//! | u64 tensor count, then per tensor: name, rows u64, cols u64, rows·cols f64
//! | SHA-256 of everything above (32 bytes)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{GeniError, Result};
use crate::graph::{KnowledgeGraph, LoadOptions};
use crate::model::GeniConfig;
use crate::scores::ScoreTransform;

pub const MAGIC: &[u8; 8] = b"GENIKIT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: GeniConfig,
    pub feature_dim: usize,
    pub score_transform: ScoreTransform,
    /// How the training graph was loaded, so it can be rebuilt identically.
    #[serde(default)]
    pub graph_options: LoadOptions,
    /// Features were generated from graph structure rather than read from a file.
    #[serde(default)]
    pub structural_features: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub node_names: Vec<String>,
    pub predicate_names: Vec<String>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, graph: &KnowledgeGraph, params: ParamStore) -> Self {
        Checkpoint {
            meta,
            node_names: graph.node_names().to_vec(),
            predicate_names: graph.predicate_names().to_vec(),
            params,
        }
    }

    /// Errors unless `graph` has exactly the node and predicate name maps the
    /// checkpoint was trained on.
    pub fn check_graph(&self, graph: &KnowledgeGraph) -> Result<()> {
        if graph.node_count() != self.node_names.len() {
            return Err(GeniError::Checkpoint(format!(
                "checkpoint has {} nodes but the graph has {}",
                self.node_names.len(),
                graph.node_count()
            )));
        }
        if let Some(i) = (0..self.node_names.len()).find(|&i| graph.node_names()[i] != self.node_names[i]) {
            return Err(GeniError::Checkpoint(format!(
                "node {i} is `{}` in the checkpoint but `{}` in the graph",
                self.node_names[i],
                graph.node_names()[i]
            )));
        }
        if graph.predicate_names() != self.predicate_names.as_slice() {
            return Err(GeniError::Checkpoint(
                "graph predicates differ from the checkpoint".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_bytes(&mut out, &serde_json::to_vec(&self.meta)?);
        for names in [&self.node_names, &self.predicate_names] {
            put_u64(&mut out, names.len());
            for n in names {
                put_bytes(&mut out, n.as_bytes());
            }
        }
        put_u64(&mut out, self.params.len());
        for (_, name, t) in self.params.iter() {
            put_bytes(&mut out, name.as_bytes());
            put_u64(&mut out, t.rows());
            put_u64(&mut out, t.cols());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(GeniError::Checkpoint("file is truncated".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(GeniError::Checkpoint("not a checkpoint (bad magic bytes)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(GeniError::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(GeniError::Checkpoint(
                "checksum mismatch (file is truncated or corrupted)".into(),
            ));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let meta: CheckpointMeta = serde_json::from_slice(r.bytes()?)?;
        let mut names = || -> Result<Vec<String>> {
            let n = r.u64()?;
            (0..n).map(|_| r.string()).collect()
        };
        let node_names = names()?;
        let predicate_names = names()?;
        let mut params = ParamStore::new();
        let count = r.u64()?;
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u64()?;
            let cols = r.u64()?;
            let len = rows
                .checked_mul(cols)
                .filter(|l| l.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| GeniError::Checkpoint(format!("tensor `{name}` overruns the file")))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.insert(name, Tensor::new(rows, cols, data))?;
        }
        if r.remaining() != 0 {
            return Err(GeniError::Checkpoint("trailing bytes after the tensors".into()));
        }
        Ok(Checkpoint {
            meta,
            node_names,
            predicate_names,
            params,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint.to_bytes()?).map_err(|e| GeniError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GeniError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(GeniError::Checkpoint("file is truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| GeniError::Checkpoint("length does not fit in memory".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| GeniError::Checkpoint("name is not valid UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geni;
    use crate::synthetic::{random_features, random_graph};

    fn sample() -> (KnowledgeGraph, Geni, Checkpoint) {
        let g = random_graph(12, 30, 3, 8);
        let f = random_features(12, 4, 8);
        let config = GeniConfig::with_shape(2, 2);
        let model = Geni::new(config.clone(), &g, &f).unwrap();
        let params = model.init_params(8);
        let meta = CheckpointMeta {
            model: config,
            feature_dim: 4,
            score_transform: ScoreTransform::Log1p,
            graph_options: LoadOptions::default(),
            structural_features: false,
        };
        let ck = Checkpoint::new(meta, &g, params);
        (g, model, ck)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (g, model, ck) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        back.check_graph(&g).unwrap();
        let a = model.final_scores(&ck.params).unwrap();
        let b = model.final_scores(&back.params).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn corruption_detected() {
        let (_, _, ck) = sample();
        let bytes = ck.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(GeniError::Checkpoint(m)) if m.contains("magic")));

        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(GeniError::Checkpoint(m)) if m.contains("version")));

        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x10;
        assert!(Checkpoint::from_bytes(&bad).is_err());

        for cut in [4, 20, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn graph_mismatch_detected() {
        let (_, _, ck) = sample();
        let other = random_graph(13, 30, 3, 8);
        assert!(ck.check_graph(&other).is_err());
        let renamed = KnowledgeGraph::from_triples([("x", "p", "y")], LoadOptions::default()).unwrap();
        assert!(ck.check_graph(&renamed).is_err());
    }
}
