use super::dense::shape_error;
use super::{instrument, DenseMatrix, Real};
use crate::error::{Result, SfrError};

/// Compressed-sparse-row matrix.
///
/// Column indices are strictly increasing within each row. Used both for
/// adjacency (square, binary or normalized) and for sparse node attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 {
            return Err(SfrError::validation(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                rows + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[rows] != col_indices.len() {
            return Err(SfrError::validation(
                "row_offsets must start at 0 and end at nnz",
            ));
        }
        if col_indices.len() != values.len() {
            return Err(SfrError::validation(
                "col_indices and values differ in length",
            ));
        }
        for i in 0..rows {
            let (a, b) = (row_offsets[i], row_offsets[i + 1]);
            if a > b {
                return Err(SfrError::validation(format!(
                    "row_offsets decrease at row {i}"
                )));
            }
            let row = &col_indices[a..b];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SfrError::validation(format!(
                    "row {i}: column indices must be strictly increasing"
                )));
            }
            if let Some(&c) = row.last() {
                if c >= cols {
                    return Err(SfrError::validation(format!(
                        "row {i}: column {c} out of range for {cols} columns"
                    )));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from per-row `(column, value)` lists; each list must be sorted by column.
    pub fn from_rows(rows: usize, cols: usize, entries: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if entries.len() != rows {
            return Err(SfrError::validation(
                "row list length differs from row count",
            ));
        }
        let nnz = entries.iter().map(Vec::len).sum();
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in entries {
            for (c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self::new(rows, cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Keeps exactly the nonzero entries of `m`.
    pub fn from_dense(m: &DenseMatrix<T>) -> Self {
        let mut row_offsets = Vec::with_capacity(m.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..m.rows() {
            for (j, &x) in m.row(i).iter().enumerate() {
                if x != T::zero() {
                    col_indices.push(j);
                    values.push(x);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.set(i, j, v);
            }
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length of a square matrix.
    #[inline]
    pub fn dim(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[a..b], &self.values[a..b])
    }

    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).0.binary_search(&j).is_ok()
    }

    /// `(i, j)` present iff `(j, i)` present.
    pub fn is_structurally_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| self.row(i).0.iter().all(|&j| self.contains(j, i)))
    }

    /// Same index structure in both orientations and bitwise-equal values.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).all(|(&j, &v)| {
                    self.get(j, i)
                        .is_some_and(|w| w.as_f64().to_bits() == v.as_f64().to_bits())
                })
            })
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    /// `self · dense`, without touching the propagation counter. Used for the
    /// attribute-times-weight product of the first layer.
    pub fn matmul_dense(&self, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != h.rows() {
            return Err(shape_error(
                "sparse matmul",
                (self.rows, self.cols),
                h.shape(),
            ));
        }
        let f = h.cols();
        let mut out = DenseMatrix::zeros(self.rows, f);
        let data = out.data_mut();
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let out_row = &mut data[i * f..(i + 1) * f];
            for (&j, &a) in cols.iter().zip(vals) {
                for (o, &b) in out_row.iter_mut().zip(h.row(j)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`.
    pub fn t_matmul_dense(&self, g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.rows != g.rows() {
            return Err(shape_error(
                "sparse t_matmul",
                (self.rows, self.cols),
                g.shape(),
            ));
        }
        let f = g.cols();
        let mut out = DenseMatrix::zeros(self.cols, f);
        let data = out.data_mut();
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let g_row = g.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                let out_row = &mut data[j * f..(j + 1) * f];
                for (o, &b) in out_row.iter_mut().zip(g_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Graph propagation `out[i] = Σ_j adj[i, j] · h[j]`.
///
/// Accumulates each row in column order, so results are bitwise reproducible.
pub fn spmm<T: Real>(adj: &CsrMatrix<T>, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if adj.cols() != h.rows() {
        return Err(shape_error("spmm", (adj.rows(), adj.cols()), h.shape()));
    }
    instrument::record_spmm();
    adj.matmul_dense(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use rand::Rng;

    fn brute_force(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn validation_rejects_unsorted_columns() {
        assert!(CsrMatrix::<f64>::new(2, 2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(2, 2, vec![0, 1, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn identity_spmm_is_noop() {
        let h = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 1.0);
        let out = spmm(&CsrMatrix::identity(4), &h).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = RngState::new(11).rng();
        let mut dense = DenseMatrix::<f64>::zeros(5, 5);
        for i in 0..5 {
            for j in i..5 {
                if rng.gen_bool(0.5) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    dense.set(i, j, v);
                    dense.set(j, i, v);
                }
            }
        }
        let csr = CsrMatrix::from_dense(&dense);
        assert!(csr.is_symmetric());
        let h = DenseMatrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let got = spmm(&csr, &h).unwrap();
        let want = brute_force(&dense, &h);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let gt = csr.t_matmul_dense(&h).unwrap();
        assert!(gt
            .data()
            .iter()
            .zip(want.data())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let h = DenseMatrix::<f64>::zeros(3, 2);
        assert!(spmm(&CsrMatrix::identity(4), &h).is_err());
    }

    #[test]
    fn spmm_is_counted() {
        instrument::reset();
        let h = DenseMatrix::<f32>::zeros(3, 2);
        spmm(&CsrMatrix::identity(3), &h).unwrap();
        spmm(&CsrMatrix::identity(3), &h).unwrap();
        assert_eq!(instrument::spmm_calls(), 2);
    }
}
