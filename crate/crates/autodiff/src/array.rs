use std::fmt;

use crate::error::{AutodiffError, Result};

/// Dense row-major array of `f64`.
///
/// Every operation in this crate treats arrays as matrices (`[rows, cols]`);
/// a vector is a `[1, n]` row and a scalar is `[1, 1]`.
#[derive(Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(AutodiffError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Array { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Row vector `[1, n]`.
    pub fn row(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![1, n], data)
    }

    pub fn scalar(value: f64) -> Self {
        Array {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "array dimensions must be positive");
        Array {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros_like(other: &Array) -> Self {
        Array {
            shape: other.shape.clone(),
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows when viewed as a matrix (leading dimension).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns when viewed as a matrix (product of trailing dimensions).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn row_slice(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
        debug_assert_eq!(self.shape, other.shape);
        Array {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Array) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `self [m,k] · other [k,n]`.
    pub fn matmul(&self, other: &Array) -> Array {
        let (m, k) = (self.rows(), self.cols());
        let n = other.cols();
        debug_assert_eq!(k, other.rows());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Array {
            shape: vec![m, n],
            data: out,
        }
    }

    /// `self [m,n] · otherᵀ` where `other` is `[k,n]`.
    pub fn matmul_transpose_rhs(&self, other: &Array) -> Array {
        let (m, n) = (self.rows(), self.cols());
        let k = other.rows();
        debug_assert_eq!(n, other.cols());
        let mut out = vec![0.0; m * k];
        for i in 0..m {
            let a_row = &self.data[i * n..(i + 1) * n];
            for p in 0..k {
                let b_row = &other.data[p * n..(p + 1) * n];
                out[i * k + p] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Array {
            shape: vec![m, k],
            data: out,
        }
    }

    /// `selfᵀ · other` where `self` is `[m,k]` and `other` is `[m,n]`.
    pub fn transpose_lhs_matmul(&self, other: &Array) -> Array {
        let (m, k) = (self.rows(), self.cols());
        let n = other.cols();
        debug_assert_eq!(m, other.rows());
        let mut out = vec![0.0; k * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let g_row = &other.data[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[p * n..(p + 1) * n];
                for (o, &g) in o_row.iter_mut().zip(g_row) {
                    *o += a * g;
                }
            }
        }
        Array {
            shape: vec![k, n],
            data: out,
        }
    }
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Array{:?}{:?}", self.shape, self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Array::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Array::new(vec![0, 2], vec![]).is_err());
        assert!(Array::new(vec![], vec![]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Array::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Array::matrix(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
        let bt = Array::matrix(2, 3, vec![7., 9., 11., 8., 10., 12.]).unwrap();
        assert_eq!(a.matmul_transpose_rhs(&bt), c);
        let at = Array::matrix(3, 2, vec![1., 4., 2., 5., 3., 6.]).unwrap();
        assert_eq!(at.transpose_lhs_matmul(&b), c);
    }
}
