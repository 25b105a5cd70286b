//! Compressed sparse row storage.

use std::io::{self, Write};

use crate::exec::ExecPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the sparsity pattern of the union of dense blocks over the
    /// given index triples, with zero values. Columns are sorted per row.
    pub fn from_triples_pattern(n: usize, triples: &[[u32; 3]]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for t in triples {
            for &a in t {
                counts[a as usize + 1] += 3;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0u32; counts[n]];
        let mut fill = counts.clone();
        for t in triples {
            for &a in t {
                let at = &mut fill[a as usize];
                cols[*at..*at + 3].copy_from_slice(t);
                *at += 3;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(cols.len() / 3);
        row_ptr.push(0);
        for i in 0..n {
            let row = &mut cols[counts[i]..counts[i + 1]];
            row.sort_unstable();
            let mut last = None;
            for &c in row.iter() {
                if last != Some(c) {
                    col_idx.push(c);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { n, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    /// Same pattern, zero values.
    pub fn zeros_like(&self) -> Self {
        CsrMatrix { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn position(&self, row: usize, col: u32) -> Option<usize> {
        let start = self.row_ptr[row];
        self.col_idx[start..self.row_ptr[row + 1]]
            .iter()
            .position(|&c| c == col)
            .map(|k| start + k)
    }

    /// Adds `value` to an entry that must be present in the pattern.
    #[inline]
    pub fn add(&mut self, row: usize, col: u32, value: f64) {
        let k = self.position(row, col).expect("entry outside sparsity pattern");
        self.values[k] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col as u32).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    #[inline]
    pub fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[s..e]
            .iter()
            .zip(&self.values[s..e])
            .map(|(&c, &v)| v * x[c as usize])
            .sum()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64], exec: ExecPolicy) {
        exec.fill(y, |i| self.row_dot(i, x));
    }

    pub fn mul(&self, x: &[f64], exec: ExecPolicy) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y, exec);
        y
    }

    /// `self + s * other` for matrices sharing a pattern.
    pub fn add_scaled(&self, s: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        CsrMatrix { values, ..self.clone() }
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        CsrMatrix { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.n).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| {
                let j = self.col_idx[k] as usize;
                (self.values[k] - self.get(j, i)).abs() <= rel_tol * scale
            })
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[k] as usize] = self.values[k];
            }
        }
        d
    }

    /// Coordinate text dump in the matrix-market layout, one-based.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(out, "{} {} {:.17e}", i + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64], exec: ExecPolicy) -> f64 {
    exec.sum(a.len(), |i| a[i] * b[i])
}

pub fn norm2(a: &[f64], exec: ExecPolicy) -> f64 {
    dot(a, a, exec).sqrt()
}
