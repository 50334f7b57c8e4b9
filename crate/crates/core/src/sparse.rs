//! Minimal compressed-sparse-row storage for superoperators.

use crate::ops::{CMatrix, C64, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    /// Assembles an `n × n` matrix from triplets, summing duplicates.
    /// Entries whose magnitude falls below `drop_tol` times the largest
    /// entry are discarded, so exact cancellations do not leave structural
    /// couplings behind.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, C64)>, drop_tol: f64) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let scale = merged.iter().map(|t| t.2.norm()).fold(0.0, f64::max);
        let cutoff = drop_tol * scale;
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(merged.len());
        let mut vals = Vec::with_capacity(merged.len());
        for (r, c, v) in merged {
            if v.norm() <= cutoff {
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute row sum; bounds the spectral radius.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    /// Dense copy of the principal submatrix on `idx` (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> CMatrix {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = CMatrix::zeros(idx.len(), idx.len());
        for (k, &r) in idx.iter().enumerate() {
            for (c, v) in self.row(r) {
                let p = pos[c];
                if p != usize::MAX {
                    m[(k, p)] = v;
                }
            }
        }
        m
    }

    /// Connected components of the (symmetrized) sparsity graph.
    /// Returns a component label per index.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (r, c, _) in self.iter() {
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.n).map(|i| find(&mut parent, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::c;

    #[test]
    fn triplets_merge_and_drop() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![
                (0, 1, c(1.0, 0.0)),
                (0, 1, c(2.0, 0.0)),
                (2, 2, c(1.0, 0.0)),
                (2, 2, c(-1.0, 0.0)),
                (1, 0, c(0.0, 1.0)),
            ],
            1e-14,
        );
        assert_eq!(m.nnz(), 2);
        let d = m.to_dense();
        assert_eq!(d[(0, 1)], c(3.0, 0.0));
        assert_eq!(d[(1, 0)], c(0.0, 1.0));
        let y = m.mul_vec(&[c(1.0, 0.0), c(1.0, 0.0), c(5.0, 0.0)]);
        assert_eq!(y, vec![c(3.0, 0.0), c(0.0, 1.0), ZERO]);
    }

    #[test]
    fn components_split_disconnected_blocks() {
        let one = c(1.0, 0.0);
        let m = CsrMatrix::from_triplets(4, vec![(0, 2, one), (3, 3, one), (1, 1, one)], 0.0);
        let labels = m.components();
        assert_eq!(labels[0], labels[2]);
        assert_ne!(labels[0], labels[1]);
        assert_ne!(labels[1], labels[3]);
        let sub = m.submatrix(&[2, 0]);
        assert_eq!(sub[(1, 0)], one);
    }
}
