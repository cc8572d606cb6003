//! Small dense helpers over row-major slices. Dimensions here are the asset
//! count, so everything is tiny and allocation-free where it matters.

use alloc::vec::Vec;

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `out = row * M` for a row vector and a row-major `n x n` matrix.
pub fn row_times_matrix(row: &[f64], m: &[f64], out: &mut [f64]) {
    let n = row.len();
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..n).map(|i| row[i] * m[i * n + j]).sum();
    }
}

/// `out = M * v` for a row-major `n x n` matrix and a column vector.
pub fn matrix_times_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&m[i * n..(i + 1) * n], v);
    }
}

pub fn smallest_singular_value(m: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, m).singular_values().min()
}

/// Solves `x * M = y` for the row vector `x` via LU of `M^T`.
pub fn solve_row(m: &[f64], n: usize, y: &[f64]) -> Option<Vec<f64>> {
    let mt = DMatrix::from_row_slice(n, n, m).transpose();
    let rhs = nalgebra::DVector::from_column_slice(y);
    mt.lu().solve(&rhs).map(|x| x.iter().copied().collect())
}

/// Inverse of a row-major matrix, row-major.
pub fn inverse(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let inv = DMatrix::from_row_slice(n, n, m).try_inverse()?;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(inv[(i, j)]);
        }
    }
    Some(out)
}
