//! Dense linear-algebra helpers shared by the design and analysis modules.

use nalgebra::{Complex, DMatrix, DVector};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

fn rank_threshold(sigma_max: f64, rows: usize, cols: usize, tol: f64) -> f64 {
    tol * sigma_max * rows.max(cols) as f64
}

/// Singular values of `m` in descending order (empty for empty matrices).
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Numerical rank with threshold `tol * sigma_max * max(rows, cols)`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&sigma_max) = sv.iter().next() else {
        return 0;
    };
    if sigma_max == 0.0 {
        return 0;
    }
    let thr = rank_threshold(sigma_max, m.nrows(), m.ncols(), tol);
    sv.iter().filter(|&&s| s > thr).count()
}

/// Orthonormal basis (as columns) of the kernel of `m`.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to at least `cols` rows so the SVD returns a full right basis.
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let thr = if sigma_max == 0.0 {
        f64::INFINITY
    } else {
        rank_threshold(sigma_max, rows, cols, tol)
    };
    let null_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= thr)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(cols, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Spectral (operator 2-) norm; zero for empty matrices.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// 2-norm condition number; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 1.0;
    }
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; every block must have `cols` columns.
pub fn vstack(blocks: &[DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Eigenvalues of a general real square matrix.
///
/// Uses faer's Hessenberg QR, which handles the repeated eigenvalues that
/// block-diagonal designs produce (nalgebra's Schur iteration can stall on
/// those).
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    f.eigenvalues()
        .expect("eigenvalue iteration converges on finite input")
        .into_iter()
        .map(|z| Complex::new(z.re, z.im))
        .collect()
}

/// Largest real part of the spectrum; `-inf` for empty matrices.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest distance in a greedy nearest-neighbour pairing of two spectra
/// taken as multisets; infinite when the sizes differ.
pub fn spectrum_mismatch(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for z in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("sizes match");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of a symmetric matrix; `-inf` for empty matrices.
pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    m.clone().symmetric_eigenvalues().max()
}

/// Converts row-major nested vectors into a matrix with `cols` columns.
/// Empty input yields a `0 x cols` matrix.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Option<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
