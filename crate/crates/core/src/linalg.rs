//! Small vector helpers and a sparse vector type.

use serde::{Deserialize, Serialize};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Sparse vector with sorted indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub dim: usize,
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(x: &[f64]) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                idx.push(j as u32);
                val.push(v);
            }
        }
        SparseVec { dim: x.len(), idx, val }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVec { dim, idx: Vec::new(), val: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&j, &v) in self.idx.iter().zip(&self.val) {
            out[j as usize] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().zip(&self.val).map(|(&j, &v)| (j as usize, v))
    }

    pub fn norm_sq(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum()
    }

    pub fn dot_dense(&self, other: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * other[j]).sum()
    }

    /// Merge-join inner product of two sparse vectors.
    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.idx.len() && j < other.idx.len() {
            match self.idx[i].cmp(&other.idx[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += self.val[i] * other.val[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    /// `out += scale * self`.
    pub fn axpy_into(&self, scale: f64, out: &mut [f64]) {
        for (j, v) in self.iter() {
            out[j] += scale * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_dot_matches_dense() {
        let a = [0.0, 1.5, 0.0, -2.0, 3.0];
        let b = [4.0, 0.0, 0.0, 1.0, 2.0];
        let (sa, sb) = (SparseVec::from_dense(&a), SparseVec::from_dense(&b));
        assert_eq!(sa.nnz(), 3);
        assert_eq!(sa.dot(&sb), dot(&a, &b));
        assert_eq!(sa.dot_dense(&b), dot(&a, &b));
        assert_eq!(sa.to_dense(), a.to_vec());
    }
}
