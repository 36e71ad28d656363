//! Dense linear algebra kernels generic over [`Real`].
//!
//! The matrices this crate factors are small (n×n Gram matrices, K×K
//! information matrices, active-set blocks), so plain textbook algorithms
//! are used: Householder tridiagonalization followed by implicit QL for the
//! symmetric eigenproblem, Cholesky for SPD systems, and LU with partial
//! pivoting for general square systems.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::{cast, Error, Real, Result};

/// Eigen-decomposition of a symmetric matrix, eigenvalues in non-increasing order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: Array2<T>,
}

/// Inner product with four independent accumulators.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (T::zero(), T::zero(), T::zero(), T::zero());
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Copies `a` into column-major (Fortran) layout so columns are contiguous slices.
pub fn to_column_major<T: Real>(a: ArrayView2<T>) -> Array2<T> {
    use ndarray::ShapeBuilder;
    let (n, p) = a.dim();
    let mut out = Array2::zeros((n, p).f());
    out.assign(&a);
    out
}

/// Column `j` of a column-major matrix as a contiguous slice.
#[inline]
pub fn column<T: Real>(a: &Array2<T>, j: usize) -> &[T] {
    let n = a.nrows();
    let data = a.as_slice_memory_order().expect("contiguous matrix");
    debug_assert!(a.t().is_standard_layout() || a.ncols() == 1);
    &data[j * n..(j + 1) * n]
}

/// `A Aᵀ` for an n×q matrix, exploiting symmetry.
pub fn gram_rows<T: Real>(a: ArrayView2<T>) -> Array2<T> {
    let n = a.nrows();
    let owned = a.as_standard_layout();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        let ri = owned.row(i);
        let ri = ri.as_slice().expect("standard layout");
        for j in 0..=i {
            let rj = owned.row(j);
            let v = dot(ri, rj.as_slice().expect("standard layout"));
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

/// Symmetric eigen-decomposition. Only the lower triangle of `a` is trusted
/// after symmetrization; the matrix is averaged with its transpose first.
pub fn symmetric_eigen<T: Real>(a: ArrayView2<T>) -> Result<SymmetricEigen<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "non-finite entry in symmetric matrix".into(),
        ));
    }
    let half = cast::<T>(0.5);
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = half * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    diagonalize(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        d[j].partial_cmp(&d[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = v[src * n + row];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(a: ArrayView2<T>) -> Result<T> {
    let eig = symmetric_eigen(a)?;
    Ok(eig.values.iter().copied().fold(T::infinity(), T::min))
}

// Householder reduction to tridiagonal form. `v` is read column-major so the
// inner loops are contiguous; on return row `j` of `v` holds column `j` of Q.
fn tridiagonalize<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |i: usize, j: usize| j * n + i;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[idx(k, j)] -= upd;
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[idx(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

// Implicit QL iterations on the tridiagonal matrix, accumulating rotations
// into the rows of `v`.
fn diagonalize<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = cast::<T>(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0usize;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical(
                        "symmetric eigensolver did not converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut((i + 1) * n);
                    for (vk, vk1) in lo[i * n..].iter_mut().zip(&mut hi[..n]) {
                        let (a, b) = (*vk, *vk1);
                        *vk1 = s * a + c * b;
                        *vk = c * a - s * b;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("cholesky needs a square matrix".into()));
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut s = a[[j, j]];
        for k in 0..j {
            s -= l[[j, k]] * l[[j, k]];
        }
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {} is {:e}",
                j,
                to_f64_lossy(s)
            )));
        }
        let ljj = s.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

fn to_f64_lossy<T: Real>(x: T) -> f64 {
    crate::to_f64(x)
}

/// Solves `L Lᵀ X = B` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Real>(l: &Array2<T>, b: ArrayView2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in (i + 1)..n {
                s -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let l = cholesky(a)?;
    let eye = Array2::eye(a.nrows());
    let inv = cholesky_solve(&l, eye.view());
    Ok(symmetrize(inv.view()))
}

/// `(A + Aᵀ) / 2`
pub fn symmetrize<T: Real>(a: ArrayView2<T>) -> Array2<T> {
    let half = cast::<T>(0.5);
    let mut out = a.to_owned();
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = half * (a[[i, j]] + a[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// LU factorization with partial pivoting, packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Array2<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(a: ArrayView2<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput("LU needs a square matrix".into()));
        }
        let mut lu = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let tiny = T::epsilon() * cast::<T>(n.max(1) as f64) * scale;
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[[k, k]].abs();
            for i in (k + 1)..n {
                let v = lu[[i, k]].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::Singular(format!("zero pivot in column {}", k)));
            }
            if piv != k {
                for j in 0..n {
                    lu.swap([k, j], [piv, j]);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[[k, k]];
            for i in (k + 1)..n {
                let factor = lu[[i, k]] / pivot;
                lu[[i, k]] = factor;
                if factor != T::zero() {
                    for j in (k + 1)..n {
                        let upd = factor * lu[[k, j]];
                        lu[[i, j]] -= upd;
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve_vec(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.lu.nrows();
        let mut x: Array1<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[[i, k]] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[[i, k]] * x[k];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose_vec(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.lu.nrows();
        // Uᵀ z = b
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lu[[k, i]] * z[k];
            }
            z[i] = s / self.lu[[i, i]];
        }
        // Lᵀ w = z
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.lu[[k, i]] * z[k];
            }
            z[i] = s;
        }
        let mut x = Array1::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    pub fn inverse(&self) -> Array2<T> {
        let n = self.lu.nrows();
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e.fill(T::zero());
            e[j] = T::one();
            let col = self.solve_vec(e.view());
            inv.column_mut(j).assign(&col);
        }
        inv
    }
}

/// Solves the square system `A x = b`.
pub fn solve<T: Real>(a: ArrayView2<T>, b: ArrayView1<T>) -> Result<Array1<T>> {
    Ok(Lu::new(a)?.solve_vec(b))
}

/// Inverse of a general square matrix.
pub fn inverse<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>> {
    Ok(Lu::new(a)?.inverse())
}

/// `A^{-1/2}` of a symmetric positive definite matrix.
pub fn spd_inverse_sqrt<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let eig = symmetric_eigen(a)?;
    if let Some(&bad) = eig.values.iter().find(|&&v| !(v > T::zero())) {
        return Err(Error::NotPositiveDefinite(format!(
            "eigenvalue {:e}",
            crate::to_f64(bad)
        )));
    }
    let scaled = &eig.vectors
        * &eig
            .values
            .mapv(|v| T::one() / v.sqrt())
            .insert_axis(Axis(0));
    Ok(symmetrize(scaled.dot(&eig.vectors.t()).view()))
}

/// Largest eigenvalue of `ZᵀZ / n` by power iteration, where `Z` is column-major.
pub fn largest_gram_eigenvalue<T: Real>(z: &Array2<T>, iters: usize) -> T {
    let (n, p) = z.dim();
    if n == 0 || p == 0 {
        return T::zero();
    }
    let nf = cast::<T>(n as f64);
    let mut v = Array1::from_elem(p, T::one() / cast::<T>(p as f64).sqrt());
    let mut zv = vec![T::zero(); n];
    let mut lambda = T::zero();
    for _ in 0..iters.max(1) {
        zv.iter_mut().for_each(|x| *x = T::zero());
        for j in 0..p {
            if v[j] != T::zero() {
                axpy(v[j], column(z, j), &mut zv);
            }
        }
        let mut w = Array1::zeros(p);
        for j in 0..p {
            w[j] = dot(column(z, j), &zv) / nf;
        }
        let norm = w.dot(&w).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= cast::<T>(1e-10) * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient underestimates slightly before convergence; pad it.
    lambda * cast::<T>(1.01)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal_is_sorted_descending() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let eig = symmetric_eigen(a.view()).unwrap();
        assert_abs_diff_eq!(eig.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = array![
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 3.0, 0.0, 1.0],
            [-2.0, 0.0, 5.0, -1.0],
            [0.5, 1.0, -1.0, 2.0]
        ];
        let eig = symmetric_eigen(a.view()).unwrap();
        let d = Array2::from_diag(&eig.values);
        let rebuilt = eig.vectors.dot(&d).dot(&eig.vectors.t());
        for (x, y) in rebuilt.iter().zip(a.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
        let vtv = eig.vectors.t().dot(&eig.vectors);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(vtv[[i, j]], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eigen_in_f32() {
        let a = array![[2.0f32, 1.0], [1.0, 2.0]];
        let eig = symmetric_eigen(a.view()).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-5);
        assert!((eig.values[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn cholesky_and_inverse() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let inv = spd_inverse(a.view()).unwrap();
        let id = a.dot(&inv);
        assert_abs_diff_eq!(id[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id[[0, 1]], 0.0, epsilon = 1e-12);
        assert!(cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()).is_err());
    }

    #[test]
    fn lu_solves_and_transposes() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let b = array![1.0, 2.0, 3.0];
        let lu = Lu::new(a.view()).unwrap();
        let x = lu.solve_vec(b.view());
        let ax = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(ax[i], b[i], epsilon = 1e-12);
        }
        let xt = lu.solve_transpose_vec(b.view());
        let atx = a.t().dot(&xt);
        for i in 0..3 {
            assert_abs_diff_eq!(atx[i], b[i], epsilon = 1e-12);
        }
        assert!(Lu::new(array![[1.0, 2.0], [2.0, 4.0]].view()).is_err());
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = array![[2.0, 0.5], [0.5, 1.0]];
        let r = spd_inverse_sqrt(a.view()).unwrap();
        let prod = r.dot(&r).dot(&a);
        assert_abs_diff_eq!(prod[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod[[1, 0]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_bounds_top_eigenvalue() {
        let z = to_column_major(array![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]].view());
        let top = largest_gram_eigenvalue(&z, 500);
        let g = z.t().dot(&z) / 3.0;
        let exact = symmetric_eigen(g.view()).unwrap().values[0];
        assert!(top >= exact && top <= exact * 1.02);
    }
}
