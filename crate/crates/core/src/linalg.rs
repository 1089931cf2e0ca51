//! Small dense linear algebra helpers on `&[f64]` slices.
//!
//! Everything here operates on dimensions of at most a few dozen, so plain
//! loops are both fast enough and easy to audit. The symmetric
//! eigendecomposition is delegated to `nalgebra`; results are re-sorted into
//! nonincreasing eigenvalue order, which the rest of the crate relies on.

use nalgebra::DMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

#[inline]
pub fn norm2_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    norm2_sq(x).sqrt()
}

/// `out = a - b`
#[inline]
pub fn sub_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), out.len());
    for i in 0..a.len() {
        out[i] = a[i] - b[i];
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    sub_into(a, b, &mut out);
    out
}

/// Dense symmetric matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    dim: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        SymMat {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    /// `self += w * v v^T`
    pub fn add_scaled_outer(&mut self, w: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let wi = w * v[i];
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (rj, vj) in row.iter_mut().zip(v.iter()) {
                *rj += wi * vj;
            }
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &SymMat) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        scale(alpha, &mut self.data);
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for i in 0..self.dim {
            out[i] = dot(&self.data[i * self.dim..(i + 1) * self.dim], x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Frobenius norm of the antisymmetric part, used by symmetry checks.
    pub fn asymmetry(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let d = self.get(i, j) - self.get(j, i);
                s += 2.0 * d * d;
            }
        }
        s.sqrt()
    }

    /// Averages the off-diagonal pairs so the matrix is exactly symmetric.
    pub fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    pub fn frobenius_distance(&self, other: &SymMat) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            let d = a - b;
            s += d * d;
        }
        s.sqrt()
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back nonincreasing; `vectors` is column-major, so the
/// eigenvector of `values[j]` is `vectors[j*dim..(j+1)*dim]`.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub dim: usize,
}

impl SymEigen {
    pub fn eigvec(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }
}

pub fn sym_eigen(m: &SymMat) -> SymEigen {
    let d = m.dim;
    let mat = DMatrix::from_row_slice(d, d, m.data());
    let eig = mat.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalue comparison")
    });
    let mut values = Vec::with_capacity(d);
    let mut vectors = vec![0.0; d * d];
    for (slot, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        for i in 0..d {
            vectors[slot * d + i] = eig.eigenvectors[(i, src)];
        }
    }
    SymEigen {
        values,
        vectors,
        dim: d,
    }
}

/// Pearson correlation coefficient of two equal-length samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Median of a sample (average of the two middle order statistics for even
/// lengths). Panics on empty input.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median comparison"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// (first quartile, third quartile) via linear interpolation.
pub fn quartiles(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("quartile comparison"));
    let q = |p: f64| -> f64 {
        let pos = p * (v.len() as f64 - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        v[lo] * (1.0 - frac) + v[hi] * frac
    };
    (q(0.25), q(0.75))
}
