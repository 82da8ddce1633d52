//! Compressed-row matrices and level-of-fill incomplete LU factorization.

use std::collections::BTreeMap;

use super::SolverError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl CsrMatrix {
    /// Builds the structure from per-row sorted column lists; values start at
    /// zero. Every row must contain its diagonal.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, cols) in rows.iter().enumerate() {
            let mut cols = cols.clone();
            cols.sort_unstable();
            cols.dedup();
            let d = cols.binary_search(&i).expect("pattern row lacks its diagonal");
            diag_pos.push(col_idx.len() + d);
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
            diag_pos,
        }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<usize>> = a
            .iter()
            .enumerate()
            .map(|(i, r)| (0..r.len()).filter(|&j| r[j] != 0.0 || j == i).collect())
            .collect();
        let mut m = Self::from_pattern(&rows);
        for i in 0..m.n {
            for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[p] = a[i][m.col_idx[p]];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn diag_pos(&self) -> &[usize] {
        &self.diag_pos
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_idx[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |p| self.values[p])
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    /// Multiplies row `i` by `s`.
    pub fn scale_row(&mut self, i: usize, s: f64) {
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            self.values[p] *= s;
        }
    }

    pub fn row_inf_norm(&self, i: usize) -> f64 {
        self.values[self.row_range(i)].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Level-of-fill incomplete LU, `ILU(k)`: `L` (unit lower) and `U` share
/// one compressed-row store whose pattern contains the source pattern plus
/// the fill entries of level `≤ k`. `k = 0` is the zero-fill factorization.
#[derive(Debug, Clone)]
pub struct Ilu {
    lu: CsrMatrix,
    /// Position in `lu` of every entry of the source matrix.
    src_map: Vec<usize>,
}

impl Ilu {
    pub fn factor(a: &CsrMatrix, level: u32) -> Result<Self, SolverError> {
        let lu = if level == 0 { a.clone() } else { symbolic_fill(a, level) };
        let mut src_map = Vec::with_capacity(a.nnz());
        for i in 0..a.n {
            for p in a.row_range(i) {
                src_map.push(lu.find(i, a.col_idx[p]).expect("source entry in fill pattern"));
            }
        }
        let mut ilu = Self { lu, src_map };
        ilu.refactor(a)?;
        Ok(ilu)
    }

    pub fn nnz(&self) -> usize {
        self.lu.nnz()
    }

    /// Recomputes the factorization for new values on the same pattern.
    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<(), SolverError> {
        let lu = &mut self.lu;
        lu.values.iter_mut().for_each(|v| *v = 0.0);
        for (&dst, &v) in self.src_map.iter().zip(&a.values) {
            lu.values[dst] = v;
        }
        let n = lu.n;
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                marker[lu.col_idx[p]] = p;
            }
            for p in start..end {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = lu.values[lu.diag_pos[k]];
                let l = lu.values[p] / pivot;
                lu.values[p] = l;
                for q in lu.diag_pos[k] + 1..lu.row_ptr[k + 1] {
                    let target = marker[lu.col_idx[q]];
                    if target != usize::MAX {
                        lu.values[target] -= l * lu.values[q];
                    }
                }
            }
            for p in start..end {
                marker[lu.col_idx[p]] = usize::MAX;
            }
            let d = lu.values[lu.diag_pos[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(SolverError::SingularPreconditioner { row: i });
            }
        }
        Ok(())
    }

    /// `x = U⁻¹ L⁻¹ b`, in place.
    pub fn apply(&self, x: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = x[i];
            for p in lu.row_ptr[i]..lu.diag_pos[i] {
                s -= lu.values[p] * x[lu.col_idx[p]];
            }
            x[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = x[i];
            for p in lu.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.values[p] * x[lu.col_idx[p]];
            }
            x[i] = s / lu.values[lu.diag_pos[i]];
        }
    }
}

/// Pattern of `ILU(level)` for the structure of `a`.
fn symbolic_fill(a: &CsrMatrix, level: u32) -> CsrMatrix {
    let n = a.n;
    // Upper parts (col > row) of finished rows with their fill levels.
    let mut upper: Vec<Vec<(usize, u32)>> = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: BTreeMap<usize, u32> = a.col_idx[a.row_range(i)].iter().map(|&j| (j, 0)).collect();
        let mut k = match row.range(..i).next() {
            Some((&k, _)) => k,
            None => i,
        };
        while k < i {
            let lev_ik = row[&k];
            for &(j, lev_kj) in &upper[k] {
                let lev = lev_ik + lev_kj + 1;
                if lev <= level {
                    row.entry(j).and_modify(|l| *l = (*l).min(lev)).or_insert(lev);
                }
            }
            k = match row.range(k + 1..i).next() {
                Some((&next, _)) => next,
                None => i,
            };
        }
        upper.push(row.range(i + 1..).map(|(&j, &l)| (j, l)).collect());
        rows.push(row.keys().copied().collect::<Vec<_>>());
    }
    CsrMatrix::from_pattern(&rows)
}
