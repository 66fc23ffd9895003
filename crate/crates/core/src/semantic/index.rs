use std::collections::HashMap;

use super::pca::ReducedEmbedding;
use super::SemanticError;

/// Cosine similarity with the zero-vector convention: if either side has
/// zero norm the similarity is 0.
pub fn cosine(a: &[f64], a_norm: f64, b: &[f64], b_norm: f64) -> f64 {
    if a_norm == 0.0 || b_norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a_norm * b_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub cosine: f64,
}

/// Exact maximum-cosine search over stored reduced embeddings.
///
/// The query interface is what an approximate structure would expose; the
/// implementation is a linear scan over a flat buffer so results are exact.
#[derive(Debug, Clone)]
pub struct NoveltyIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
    norms: Vec<f64>,
    positions: HashMap<String, usize>,
}

impl NoveltyIndex {
    pub fn new(dim: usize) -> Self {
        NoveltyIndex {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            norms: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn insert(&mut self, id: &str, r: &ReducedEmbedding) -> Result<(), SemanticError> {
        if r.vector.len() != self.dim {
            return Err(SemanticError::DimensionMismatch {
                expected: self.dim,
                got: r.vector.len(),
            });
        }
        if self.positions.contains_key(id) {
            return Err(SemanticError::DuplicateId(id.to_string()));
        }
        self.positions.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(&r.vector);
        self.norms.push(r.norm);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<ReducedEmbedding> {
        let &i = self.positions.get(id)?;
        Some(ReducedEmbedding {
            vector: self.data[i * self.dim..(i + 1) * self.dim].to_vec(),
            norm: self.norms[i],
            provisional: false,
        })
    }

    pub fn clear(&mut self) {
        self.ids.clear();
        self.data.clear();
        self.norms.clear();
        self.positions.clear();
    }

    /// Entry with the highest cosine to `query`; ties go to the smallest id.
    pub fn nearest(&self, query: &ReducedEmbedding) -> Option<Neighbor> {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.data.chunks_exact(self.dim).enumerate() {
            let c = cosine(&query.vector, query.norm, row, self.norms[i]);
            let better = match best {
                None => true,
                Some((j, bc)) => c > bc || (c == bc && self.ids[i] < self.ids[j]),
            };
            if better {
                best = Some((i, c));
            }
        }
        best.map(|(i, c)| Neighbor {
            id: self.ids[i].clone(),
            cosine: c,
        })
    }
}
