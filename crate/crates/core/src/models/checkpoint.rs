//! Model checkpoints and their on-disk format.
//!
//! A checkpoint file is a text header followed by a binary payload:
//!
//! ```text
//! ERASEBENCH-CKPT-v1
//! kind = bpr_mf
//! user_count = 100
//! ...
//! segment user_embedding 3200
//! segment item_embedding 1600
//! end_header
//! <little-endian f64 values, segments in table order>
//! ```
//!
//! Reals in the header use Rust's shortest round-trip formatting, so every
//! field survives a save/load cycle bit for bit. Count tables are not stored;
//! they are rebuilt from the dataset when a checkpoint is bound.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CountTables, ModelHyper, ModelKind, PropagationGraph, RecModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::ParamVector;

pub const CHECKPOINT_MAGIC: &str = "ERASEBENCH-CKPT-v1";
const END_HEADER: &str = "end_header";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Digest of the dataset the model was trained on.
    pub trained_on: String,
    /// Unlearning steps applied since training.
    pub steps_applied: usize,
    pub wall_clock_train: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub hyper: ModelHyper,
    pub params: ParamVector,
    pub user_count: usize,
    pub item_count: usize,
    /// Seed the model was trained from; also drives the random baseline.
    pub rng_seed: u64,
    pub provenance: Provenance,
    pub epoch_losses: Vec<f64>,
}

impl Checkpoint {
    /// Builds the runtime model against `dataset`, which must share the
    /// checkpoint's vocabulary.
    pub fn bind(&self, dataset: &Dataset) -> Result<RecModel> {
        let mut model = RecModel {
            kind: self.kind,
            hyper: self.hyper,
            params: self.params.clone(),
            user_count: self.user_count,
            item_count: self.item_count,
            seed: self.rng_seed,
            counts: None,
            graph: None,
        };
        model.check_vocab(dataset)?;
        match self.kind {
            ModelKind::Pop | ModelKind::ItemKnn => {
                model.counts = Some(CountTables::build(dataset, self.kind == ModelKind::ItemKnn));
            }
            ModelKind::Lightgcn => {
                model.graph = Some(std::sync::Arc::new(PropagationGraph::from_dataset(dataset)));
            }
            ModelKind::BprMf | ModelKind::Random => {}
        }
        Ok(model)
    }

    /// A warning when `dataset` is not the one the model was trained on.
    pub fn provenance_warning(&self, dataset: &Dataset) -> Option<String> {
        let digest = dataset.digest();
        (digest != self.provenance.trained_on).then(|| {
            format!(
                "checkpoint was trained on dataset {} but is loaded against {}",
                self.provenance.trained_on, digest
            )
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.hyper;
        let mut header = format!("{CHECKPOINT_MAGIC}\n");
        let mut kv = |k: &str, v: String| header.push_str(&format!("{k} = {v}\n"));
        kv("kind", self.kind.name().to_string());
        kv("user_count", self.user_count.to_string());
        kv("item_count", self.item_count.to_string());
        kv("embedding_dim", h.embedding_dim.to_string());
        kv("layers", h.layers.to_string());
        kv("learning_rate", real(h.learning_rate));
        kv("l2_reg", real(h.l2_reg));
        kv("negatives_per_positive", h.negatives_per_positive.to_string());
        kv("batch_size", h.batch_size.to_string());
        kv("init_std", real(h.init_std));
        kv("rng_seed", self.rng_seed.to_string());
        kv("trained_on", self.provenance.trained_on.clone());
        kv("steps_applied", self.provenance.steps_applied.to_string());
        kv("wall_clock_train", real(self.provenance.wall_clock_train));
        kv(
            "epoch_losses",
            self.epoch_losses.iter().map(|&x| real(x)).collect::<Vec<_>>().join(","),
        );
        for s in self.params.segments() {
            header.push_str(&format!("segment {} {}\n", s.name, s.len));
        }
        header.push_str(END_HEADER);
        header.push('\n');
        let mut out = header.into_bytes();
        out.reserve(self.params.len() * 8);
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut pos = 0usize;
        let next_line = |pos: &mut usize| -> Result<String> {
            let rest = &bytes[*pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("header is not terminated".into()))?;
            let line = std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
            *pos += end + 1;
            Ok(line.to_string())
        };
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC.as_bytes() {
            return Err(bad(format!("missing magic string {CHECKPOINT_MAGIC}")));
        }
        let magic = next_line(&mut pos)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(format!("missing magic string {CHECKPOINT_MAGIC}")));
        }
        let mut fields = BTreeMap::new();
        let mut segments: Vec<(String, usize)> = Vec::new();
        loop {
            let line = next_line(&mut pos)?;
            if line == END_HEADER {
                break;
            }
            if let Some(rest) = line.strip_prefix("segment ") {
                let (name, len) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| bad(format!("malformed segment line {line:?}")))?;
                let len = len.parse().map_err(|_| bad(format!("malformed segment line {line:?}")))?;
                segments.push((name.to_string(), len));
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }

        let mut take = |k: &str| fields.remove(k).ok_or_else(|| bad(format!("header is missing {k}")));
        let kind = ModelKind::parse(&take("kind")?).map_err(|e| bad(e.to_string()))?;
        let user_count = int(&take("user_count")?)?;
        let item_count = int(&take("item_count")?)?;
        let hyper = ModelHyper {
            embedding_dim: int(&take("embedding_dim")?)?,
            layers: int(&take("layers")?)?,
            learning_rate: parse_real(&take("learning_rate")?)?,
            l2_reg: parse_real(&take("l2_reg")?)?,
            negatives_per_positive: int(&take("negatives_per_positive")?)?,
            batch_size: int(&take("batch_size")?)?,
            init_std: parse_real(&take("init_std")?)?,
        };
        let rng_seed = take("rng_seed")?
            .parse()
            .map_err(|_| bad("rng_seed is not an integer".into()))?;
        let provenance = Provenance {
            trained_on: take("trained_on")?,
            steps_applied: int(&take("steps_applied")?)?,
            wall_clock_train: parse_real(&take("wall_clock_train")?)?,
        };
        let losses = take("epoch_losses")?;
        let epoch_losses = if losses.is_empty() {
            Vec::new()
        } else {
            losses.split(',').map(parse_real).collect::<Result<Vec<_>>>()?
        };
        if let Some(k) = fields.keys().next() {
            return Err(bad(format!("unknown header key {k:?}")));
        }

        let expected: Vec<(String, usize)> = if kind.is_gradient_based() {
            super::layout(user_count, item_count, hyper.embedding_dim)
                .iter()
                .map(|(n, l)| (n.to_string(), *l))
                .collect()
        } else {
            Vec::new()
        };
        if segments != expected {
            return Err(bad(format!(
                "segment table {segments:?} does not match a {kind} model of this shape"
            )));
        }
        let mut values = Vec::with_capacity(expected.iter().map(|s| s.1).sum());
        for (name, len) in &segments {
            let need = len * 8;
            if bytes.len() - pos < need {
                return Err(bad(format!("truncated payload at segment {name}")));
            }
            values.extend(
                bytes[pos..pos + need]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
            );
            pos += need;
        }
        if pos != bytes.len() {
            return Err(bad(format!(
                "payload length mismatch: {} bytes beyond the segment table",
                bytes.len() - pos
            )));
        }
        let layout: Vec<(&str, usize)> = segments.iter().map(|(n, l)| (n.as_str(), *l)).collect();
        let params = if layout.is_empty() {
            ParamVector::empty()
        } else {
            ParamVector::from_parts(&layout, values)?
        };
        Ok(Self {
            kind,
            hyper,
            params,
            user_count,
            item_count,
            rng_seed,
            provenance,
            epoch_losses,
        })
    }
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

fn parse_real(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("{s:?} is not a real number")))
}

fn int(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("{s:?} is not a non-negative integer")))
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ck.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train, ModelHyper};

    fn sample() -> (Dataset, Checkpoint) {
        let ds = crate::models::tests::fixture(&[(0, 0), (0, 1), (1, 2), (2, 1)], 3, 3);
        let h = ModelHyper {
            embedding_dim: 3,
            ..Default::default()
        };
        let mut ck = train(ModelKind::Lightgcn, &ds, &h, 2, 9).unwrap();
        ck.provenance.wall_clock_train = 0.1 + 0.2;
        (ds, ck)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (_, ck) = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.provenance.wall_clock_train.to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn count_model_round_trip() {
        let (ds, _) = sample();
        let ck = train(ModelKind::ItemKnn, &ds, &ModelHyper::default(), 1, 2).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.bind(&ds).unwrap(), ck.bind(&ds).unwrap());
    }

    #[test]
    fn truncated_payload_names_segment() {
        let (_, ck) = sample();
        let mut bytes = ck.to_bytes();
        bytes.truncate(bytes.len() - 5);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert_eq!(err.to_string(), "checkpoint format error: truncated payload at segment item_embedding");
    }

    #[test]
    fn wrong_magic_and_trailing_bytes() {
        let (_, ck) = sample();
        assert!(Checkpoint::from_bytes(b"NOT-A-CKPT\n").is_err());
        let mut bytes = ck.to_bytes();
        bytes.push(0);
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("length mismatch"));
    }

    #[test]
    fn digest_mismatch_is_a_warning() {
        let (ds, ck) = sample();
        assert!(ck.provenance_warning(&ds).is_none());
        let other = crate::models::tests::fixture(&[(0, 0), (1, 2), (2, 1)], 3, 3);
        assert!(ck.provenance_warning(&other).is_some());
        assert!(ck.bind(&other).is_ok());
    }
}
