use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Cross-attention weights laid out row-major as
/// `[layer][head][document token][query token]`.
///
/// Entries are post-softmax probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layer_ids: Vec<usize>,
    heads: usize,
    doc_len: usize,
    query_len: usize,
    values: Vec<f32>,
}

impl AttentionTensor {
    pub fn new(
        layer_ids: Vec<usize>,
        heads: usize,
        doc_len: usize,
        query_len: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        let dims = [layer_ids.len(), heads, doc_len, query_len];
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "attention tensor has an empty axis: {dims:?}"
            )));
        }
        let expected = dims.iter().product::<usize>();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "attention tensor of shape {dims:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ShapeMismatch(format!(
                "attention weight {v} outside [0, 1]"
            )));
        }
        Ok(AttentionTensor {
            layer_ids,
            heads,
            doc_len,
            query_len,
            values,
        })
    }

    pub fn from_nested(layer_ids: Vec<usize>, nested: &[Vec<Vec<Vec<f32>>>]) -> Result<Self> {
        let ragged = || Error::ShapeMismatch("ragged nested attention array".into());
        if nested.len() != layer_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layer ids for {} layers of values",
                layer_ids.len(),
                nested.len()
            )));
        }
        let heads = nested.first().map_or(0, Vec::len);
        let doc_len = nested.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let query_len = nested
            .first()
            .and_then(|l| l.first())
            .and_then(|h| h.first())
            .map_or(0, Vec::len);
        let mut values = Vec::with_capacity(nested.len() * heads * doc_len * query_len);
        for layer in nested {
            if layer.len() != heads {
                return Err(ragged());
            }
            for head in layer {
                if head.len() != doc_len {
                    return Err(ragged());
                }
                for row in head {
                    if row.len() != query_len {
                        return Err(ragged());
                    }
                    values.extend_from_slice(row);
                }
            }
        }
        AttentionTensor::new(layer_ids, heads, doc_len, query_len, values)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f32>>>> {
        self.values
            .chunks(self.heads * self.doc_len * self.query_len)
            .map(|layer| {
                layer
                    .chunks(self.doc_len * self.query_len)
                    .map(|head| head.chunks(self.query_len).map(<[f32]>::to_vec).collect())
                    .collect()
            })
            .collect()
    }

    /// `[L, H, T_d, T_q]`
    pub fn shape(&self) -> [usize; 4] {
        [
            self.layer_ids.len(),
            self.heads,
            self.doc_len,
            self.query_len,
        ]
    }

    pub fn layer_ids(&self) -> &[usize] {
        &self.layer_ids
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn doc_len(&self) -> usize {
        self.doc_len
    }

    pub fn query_len(&self) -> usize {
        self.query_len
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn offset(&self, layer: usize, head: usize, token: usize, query: usize) -> usize {
        ((layer * self.heads + head) * self.doc_len + token) * self.query_len + query
    }

    /// Weight at layer *position* `layer` (not layer id).
    pub fn get(&self, layer: usize, head: usize, token: usize, query: usize) -> f32 {
        self.values[self.offset(layer, head, token, query)]
    }

    /// Contiguous `[T_d × T_q]` block of one head.
    pub fn head_block(&self, layer: usize, head: usize) -> &[f32] {
        let start = self.offset(layer, head, 0, 0);
        &self.values[start..start + self.doc_len * self.query_len]
    }

    /// Keeps the given original layer ids, in the given order.
    pub fn select_layers(&self, layer_ids: &[usize]) -> Result<Self> {
        let block = self.heads * self.doc_len * self.query_len;
        let mut values = Vec::with_capacity(layer_ids.len() * block);
        for id in layer_ids {
            let pos =
                self.layer_ids.iter().position(|l| l == id).ok_or_else(|| {
                    Error::ShapeMismatch(format!("layer {id} not present in tensor"))
                })?;
            values.extend_from_slice(&self.values[pos * block..(pos + 1) * block]);
        }
        AttentionTensor::new(
            layer_ids.to_vec(),
            self.heads,
            self.doc_len,
            self.query_len,
            values,
        )
    }

    /// Keeps the given document token positions, in the given order.
    pub fn gather_tokens(&self, tokens: &[usize]) -> Result<Self> {
        if let Some(t) = tokens.iter().find(|&&t| t >= self.doc_len) {
            return Err(Error::ShapeMismatch(format!(
                "token {t} outside document of {} tokens",
                self.doc_len
            )));
        }
        let mut values =
            Vec::with_capacity(self.layer_ids.len() * self.heads * tokens.len() * self.query_len);
        for l in 0..self.layer_ids.len() {
            for h in 0..self.heads {
                for &t in tokens {
                    let start = self.offset(l, h, t, 0);
                    values.extend_from_slice(&self.values[start..start + self.query_len]);
                }
            }
        }
        AttentionTensor::new(
            self.layer_ids.clone(),
            self.heads,
            tokens.len(),
            self.query_len,
            values,
        )
    }

    pub fn slice_tokens(&self, range: std::ops::Range<usize>) -> Result<Self> {
        self.gather_tokens(&range.collect::<Vec<_>>())
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    layer_ids: Vec<usize>,
    values: Vec<Vec<Vec<Vec<f32>>>>,
}

impl Serialize for AttentionTensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TensorRepr {
            layer_ids: self.layer_ids.clone(),
            values: self.to_nested(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AttentionTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TensorRepr::deserialize(deserializer)?;
        AttentionTensor::from_nested(repr.layer_ids, &repr.values).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iota(l: usize, h: usize, t: usize, q: usize) -> AttentionTensor {
        let n = l * h * t * q;
        let values = (0..n).map(|i| i as f32 / n as f32).collect();
        AttentionTensor::new((0..l).collect(), h, t, q, values).unwrap()
    }

    #[test]
    fn rejects_bad_values_and_shapes() {
        assert!(AttentionTensor::new(vec![0], 1, 1, 1, vec![-0.1]).is_err());
        assert!(AttentionTensor::new(vec![0], 1, 1, 1, vec![1.5]).is_err());
        assert!(AttentionTensor::new(vec![0], 1, 1, 1, vec![f32::NAN]).is_err());
        assert!(AttentionTensor::new(vec![0], 1, 2, 1, vec![0.1]).is_err());
        assert!(AttentionTensor::new(vec![0], 0, 1, 1, vec![]).is_err());
        assert!(
            AttentionTensor::from_nested(vec![0], &[vec![vec![vec![0.1], vec![0.1, 0.2]]]])
                .is_err()
        );
    }

    #[test]
    fn nested_json_round_trip_is_exact() {
        let t = iota(2, 3, 4, 5);
        let json = serde_json::to_string(&t).unwrap();
        let back: AttentionTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
        assert_eq!(back.get(1, 2, 3, 4), t.values()[t.values().len() - 1]);
    }

    #[test]
    fn layer_and_token_selection() {
        let t = iota(3, 2, 5, 2);
        let sel = t.select_layers(&[2, 0]).unwrap();
        assert_eq!(sel.layer_ids(), &[2, 0]);
        assert_eq!(sel.get(0, 1, 4, 1), t.get(2, 1, 4, 1));
        assert!(t.select_layers(&[7]).is_err());

        let g = t.gather_tokens(&[1, 3]).unwrap();
        assert_eq!(g.shape(), [3, 2, 2, 2]);
        assert_eq!(g.get(2, 1, 1, 0), t.get(2, 1, 3, 0));
        let s = t.slice_tokens(2..5).unwrap();
        assert_eq!(s.get(1, 0, 0, 1), t.get(1, 0, 2, 1));
        assert!(t.gather_tokens(&[5]).is_err());
    }
}
