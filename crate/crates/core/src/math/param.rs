//! Flat parameter storage partitioned into named segments.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A contiguous, named slice of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Model parameters as one flat `f64` buffer with a segment table.
///
/// Segments are laid out back to back in declaration order, so they are
/// pairwise disjoint and cover the whole buffer by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    /// Zero-initialised vector with the given `(name, len)` layout.
    pub fn zeros(layout: &[(&str, usize)]) -> Result<Self> {
        let mut segments = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for (name, len) in layout {
            if segments.iter().any(|s: &Segment| s.name == *name) {
                return Err(Error::contract(format!("duplicate segment name {name:?}")));
            }
            segments.push(Segment {
                name: (*name).to_string(),
                offset,
                len: *len,
            });
            offset += len;
        }
        Ok(Self {
            values: vec![0.0; offset],
            segments,
        })
    }

    /// Build from a layout and matching values.
    pub fn from_parts(layout: &[(&str, usize)], values: Vec<f64>) -> Result<Self> {
        let mut out = Self::zeros(layout)?;
        if out.values.len() != values.len() {
            return Err(Error::contract(format!(
                "segment table covers {} values but {} were supplied",
                out.values.len(),
                values.len()
            )));
        }
        out.values = values;
        Ok(out)
    }

    /// An empty vector with no segments (count-based models).
    pub fn empty() -> Self {
        Self {
            values: Vec::new(),
            segments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_info(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segment_info(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.segment_info(name)?.range();
        Some(&mut self.values[range])
    }

    pub fn layout(&self) -> Vec<(&str, usize)> {
        self.segments
            .iter()
            .map(|s| (s.name.as_str(), s.len))
            .collect()
    }

    /// Same layout, values replaced. Fails on length mismatch.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::contract(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            segments: self.segments.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Hex SHA-256 over the segment table and the little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.segments {
            h.update(format!("{}:{}:{};", s.name, s.offset, s.len).as_bytes());
        }
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Boolean mask over the buffer selecting every segment accepted by `keep`.
    pub fn mask_where(&self, mut keep: impl FnMut(&str) -> bool) -> Vec<bool> {
        let mut mask = vec![false; self.values.len()];
        for seg in &self.segments {
            if keep(&seg.name) {
                mask[seg.range()].iter_mut().for_each(|m| *m = true);
            }
        }
        mask
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_cover_buffer() {
        let p = ParamVector::zeros(&[("a", 3), ("b", 0), ("c", 4)]).unwrap();
        assert_eq!(p.len(), 7);
        let mut covered = vec![0; 7];
        for s in p.segments() {
            for i in s.range() {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(ParamVector::zeros(&[("a", 1), ("a", 2)]).is_err());
    }

    #[test]
    fn finite_flag() {
        let mut p = ParamVector::zeros(&[("a", 2)]).unwrap();
        assert!(p.is_finite());
        p.values_mut()[1] = f64::NAN;
        assert!(!p.is_finite());
    }

    #[test]
    fn mask_selects_segments() {
        let p = ParamVector::zeros(&[("user_embedding", 2), ("item_embedding", 3)]).unwrap();
        let m = p.mask_where(|n| n == "item_embedding");
        assert_eq!(m, vec![false, false, true, true, true]);
    }
}
