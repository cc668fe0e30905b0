use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Attention,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Attention { layers: Vec<usize> },
    Embedding { model: String },
}

/// One relevance score per sentence, all of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSheet {
    provenance: Provenance,
    scores: Vec<f64>,
}

impl ScoreSheet {
    pub fn attention(layers: Vec<usize>, scores: Vec<f64>) -> Self {
        ScoreSheet {
            provenance: Provenance::Attention { layers },
            scores,
        }
    }

    pub fn embedding(model: impl Into<String>, scores: Vec<f64>) -> Self {
        ScoreSheet {
            provenance: Provenance::Embedding {
                model: model.into(),
            },
            scores,
        }
    }

    pub fn kind(&self) -> ScoreKind {
        match self.provenance {
            Provenance::Attention { .. } => ScoreKind::Attention,
            Provenance::Embedding { .. } => ScoreKind::Embedding,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Applies `f` to every score, keeping provenance.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScoreSheet {
            provenance: self.provenance.clone(),
            scores: self.scores.iter().map(|&s| f(s)).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SheetRepr {
    Attention {
        layers: Vec<usize>,
        scores: Vec<f64>,
    },
    Embedding {
        model: String,
        scores: Vec<f64>,
    },
}

impl Serialize for ScoreSheet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let scores = self.scores.clone();
        match &self.provenance {
            Provenance::Attention { layers } => SheetRepr::Attention {
                layers: layers.clone(),
                scores,
            },
            Provenance::Embedding { model } => SheetRepr::Embedding {
                model: model.clone(),
                scores,
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ScoreSheet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match SheetRepr::deserialize(deserializer)? {
            SheetRepr::Attention { layers, scores } => ScoreSheet::attention(layers, scores),
            SheetRepr::Embedding { model, scores } => ScoreSheet::embedding(model, scores),
        })
    }
}
