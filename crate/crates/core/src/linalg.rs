//! Small dense linear-algebra helpers shared by the kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Numerical rank of `m` with singular values below `rel_tol * σ_max` treated
/// as zero. An all-zero matrix has rank 0.
pub(crate) fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Smallest singular value of an `n × k` matrix (`k ≤ n` expected).
pub(crate) fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return f64::INFINITY;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let mut min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    // A wide matrix has structurally zero singular values beyond its row count.
    if m.ncols() > m.nrows() {
        min = 0.0;
    }
    min
}

/// Orthonormal basis (as columns) of the null space of `m`, using an absolute
/// singular-value threshold.
pub(crate) fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let k = m.ncols();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad with zero rows so the SVD exposes all k right-singular vectors.
    let rows = m.nrows().max(k);
    let mut padded = DMatrix::zeros(rows, k);
    padded.view_mut((0, 0), (m.nrows(), k)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cols: Vec<DVector<f64>> = (0..k)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).transpose())
        .collect();
    columns_to_matrix(k, &cols)
}

/// Orthonormalize the given columns, dropping those that are numerically
/// dependent (modified Gram–Schmidt with a relative drop tolerance).
pub(crate) fn orthonormalize(cols: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in cols {
        let scale = c.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &out {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        let nv = v.norm();
        if nv > tol * scale {
            out.push(v / nv);
        }
    }
    out
}

pub(crate) fn columns_to_matrix(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Ratio of largest to smallest eigenvalue magnitude of a symmetric matrix.
pub(crate) fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e.abs());
        hi = hi.max(e.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Symplectic pairing of two initial conditions `(J, J')` stacked as 2n-vectors:
/// `⟨J₁', J₂⟩ − ⟨J₁, J₂'⟩`.
pub(crate) fn symplectic_pairing(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() / 2;
    let mut acc = 0.0;
    for i in 0..n {
        acc += a[n + i] * b[i] - a[i] * b[n + i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_null_space() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 1);
        let ns = null_space(&m, 1e-8);
        assert_eq!(ns.ncols(), 1);
        assert!((&m * ns.column(0)).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let cols = vec![
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
        ];
        let q = orthonormalize(&cols, 1e-10);
        assert_eq!(q.len(), 2);
        assert!(q[0].dot(&q[1]).abs() < 1e-15);
    }

    #[test]
    fn pairing_is_antisymmetric() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let b = DVector::from_vec(vec![-1.0, 0.5, 2.0, 1.0]);
        assert_eq!(symplectic_pairing(&a, &b), -symplectic_pairing(&b, &a));
        assert_eq!(symplectic_pairing(&a, &a), 0.0);
    }
}
