//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

/// Relative singular-value cutoff used for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-12;
/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, unsorted.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    symmetrize(m).symmetric_eigenvalues().iter().copied().collect()
}

pub fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eig(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Largest singular value (0 for an empty matrix).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with singular values below `rtol * sigma_max` treated as zero.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

/// Moore-Penrose pseudo-inverse by SVD truncation at `rtol * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return DMatrix::zeros(c, r);
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rtol * max {
            out += v_t.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solve `a x = b` by LU with partial pivoting; `None` when singular or non-finite.
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Block-diagonal stack of the given matrices.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share a column count.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontal concatenation; all blocks must share a row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Square block matrix addressed by block index.
pub(crate) struct BlockMatrix {
    offsets: Vec<usize>,
    pub(crate) mat: DMatrix<f64>,
}

impl BlockMatrix {
    pub(crate) fn new(sizes: &[usize]) -> Self {
        let mut offsets = vec![0];
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let n = *offsets.last().unwrap();
        Self {
            offsets,
            mat: DMatrix::zeros(n, n),
        }
    }

    pub(crate) fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub(crate) fn range(&self, i: usize) -> (usize, usize) {
        (self.offsets[i], self.offsets[i + 1] - self.offsets[i])
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, block: &DMatrix<f64>) {
        let (r, nr) = self.range(i);
        let (c, nc) = self.range(j);
        debug_assert_eq!(block.shape(), (nr, nc), "block ({i},{j})");
        self.mat.view_mut((r, c), (nr, nc)).copy_from(block);
    }

    /// Rows of block `i` taken from a stacked solution.
    pub(crate) fn rows_of(&self, sol: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
        let (r, nr) = self.range(i);
        sol.rows(r, nr).into_owned()
    }
}
