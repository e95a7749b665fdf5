//! Dense tensor arithmetic underpinning every kernel.
//!
//! Tensors are immutable values: every operation returns a fresh tensor and
//! checks that the result is finite, so a `NaN`/`Inf` produced anywhere in a
//! sweep surfaces as an error instead of silently propagating.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by tensor operations.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
}

pub type TensorResult<T> = Result<T, TensorError>;

/// Dense 64-bit float array with an explicit shape, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> TensorResult<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![1.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Row-major matrix from nested rows. All rows must have equal length.
    pub fn matrix(rows: &[Vec<f64>]) -> TensorResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::BadShape {
                    op: "matrix",
                    expected: "equal-length rows",
                    got: vec![r, row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![r, c],
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> TensorResult<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::BadShape {
                op: "item",
                expected: "a single element",
                got: self.shape.clone(),
            })
        }
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn finite_checked(self, op: &'static str) -> TensorResult<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> TensorResult<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            })
        }
    }

    pub fn add(&self, other: &Self) -> TensorResult<Self> {
        self.same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
        .finite_checked("add")
    }

    pub fn sub(&self, other: &Self) -> TensorResult<Self> {
        self.same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
        .finite_checked("sub")
    }

    pub fn negate(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> TensorResult<Self> {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| a * c).collect(),
        }
        .finite_checked("scale")
    }

    /// Coordinatewise product.
    pub fn hadamard(&self, other: &Self) -> TensorResult<Self> {
        self.same_shape(other, "hadamard")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
        .finite_checked("hadamard")
    }

    pub fn relu(&self) -> Self {
        self.map(|a| a.max(0.0))
    }

    /// Indicator 1_a with the convention heaviside(0) = 1.
    pub fn heaviside(&self) -> Self {
        self.map(|a| if a >= 0.0 { 1.0 } else { 0.0 })
    }

    /// Strict-positivity indicator: 1 where a > 0, else 0.
    pub fn positive_indicator(&self) -> Self {
        self.map(|a| if a > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn ln(&self) -> TensorResult<Self> {
        if let Some(bad) = self.data.iter().find(|v| **v <= 0.0) {
            return Err(TensorError::Domain {
                op: "ln",
                detail: format!("log of non-positive value {bad}"),
            });
        }
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| a.ln()).collect(),
        }
        .finite_checked("ln")
    }

    pub fn exp(&self) -> TensorResult<Self> {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| a.exp()).collect(),
        }
        .finite_checked("exp")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| f(*a)).collect(),
        }
    }

    /// Matrix product of an m×k and a k×n tensor.
    pub fn matmul(&self, other: &Self) -> TensorResult<Self> {
        let (m, k) = match self.shape[..] {
            [m, k] => (m, k),
            _ => {
                return Err(TensorError::BadShape {
                    op: "matmul",
                    expected: "a matrix on the left",
                    got: self.shape.clone(),
                })
            }
        };
        let (k2, n) = match other.shape[..] {
            [k2, n] => (k2, n),
            _ => {
                return Err(TensorError::BadShape {
                    op: "matmul",
                    expected: "a matrix on the right",
                    got: other.shape.clone(),
                })
            }
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[p * n..(p + 1) * n];
                for (j, b) in row.iter().enumerate() {
                    data[i * n + j] += a * b;
                }
            }
        }
        Self {
            shape: vec![m, n],
            data,
        }
        .finite_checked("matmul")
    }

    /// Matrix-vector product of an m×n matrix and an n-vector.
    pub fn matvec(&self, v: &Self) -> TensorResult<Self> {
        let (m, n) = match self.shape[..] {
            [m, n] => (m, n),
            _ => {
                return Err(TensorError::BadShape {
                    op: "matvec",
                    expected: "a matrix on the left",
                    got: self.shape.clone(),
                })
            }
        };
        if v.shape != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let mut data = vec![0.0; m];
        for i in 0..m {
            data[i] = self.data[i * n..(i + 1) * n]
                .iter()
                .zip(&v.data)
                .map(|(a, b)| a * b)
                .sum();
        }
        Self {
            shape: vec![m],
            data,
        }
        .finite_checked("matvec")
    }

    /// Transposed matrix-vector product: Aᵀ·v for an m×n matrix and m-vector.
    pub fn tmatvec(&self, v: &Self) -> TensorResult<Self> {
        let (m, n) = match self.shape[..] {
            [m, n] => (m, n),
            _ => {
                return Err(TensorError::BadShape {
                    op: "tmatvec",
                    expected: "a matrix on the left",
                    got: self.shape.clone(),
                })
            }
        };
        if v.shape != [m] {
            return Err(TensorError::ShapeMismatch {
                op: "tmatvec",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let mut data = vec![0.0; n];
        for i in 0..m {
            let c = v.data[i];
            if c == 0.0 {
                continue;
            }
            for j in 0..n {
                data[j] += self.data[i * n + j] * c;
            }
        }
        Self {
            shape: vec![n],
            data,
        }
        .finite_checked("tmatvec")
    }

    pub fn transpose(&self) -> TensorResult<Self> {
        let (m, n) = match self.shape[..] {
            [m, n] => (m, n),
            _ => {
                return Err(TensorError::BadShape {
                    op: "transpose",
                    expected: "a matrix",
                    got: self.shape.clone(),
                })
            }
        };
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data,
        })
    }

    /// Outer product of two vectors: result[i][j] = u[i]·v[j].
    pub fn outer_product(&self, other: &Self) -> TensorResult<Self> {
        if !self.is_vector() {
            return Err(TensorError::BadShape {
                op: "outer_product",
                expected: "a vector",
                got: self.shape.clone(),
            });
        }
        if !other.is_vector() {
            return Err(TensorError::BadShape {
                op: "outer_product",
                expected: "a vector",
                got: other.shape.clone(),
            });
        }
        let (m, n) = (self.data.len(), other.data.len());
        let mut data = Vec::with_capacity(m * n);
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        Self {
            shape: vec![m, n],
            data,
        }
        .finite_checked("outer_product")
    }

    pub fn dot(&self, other: &Self) -> TensorResult<f64> {
        self.same_shape(other, "dot")?;
        let v: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite { op: "dot" })
        }
    }

    pub fn concat(&self, other: &Self) -> TensorResult<Self> {
        if !self.is_vector() || !other.is_vector() {
            return Err(TensorError::BadShape {
                op: "concat",
                expected: "vectors",
                got: self.shape.clone(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self::vector(data))
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let id = Tensor::identity(2);
        let v = Tensor::matrix(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(id.matmul(&v).unwrap(), v);
    }

    #[test]
    fn matmul_direct() {
        let a = Tensor::matrix(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::matrix(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn outer_product_basis() {
        let u = Tensor::vector(vec![1.0, 0.0]);
        let v = Tensor::vector(vec![5.0, 7.0]);
        let m = u.outer_product(&v).unwrap();
        assert_eq!(m, Tensor::matrix(&[vec![5.0, 7.0], vec![0.0, 0.0]]).unwrap());
    }

    #[test]
    fn outer_product_zero_and_rect() {
        let z = Tensor::vector(vec![0.0, 0.0]);
        let v = Tensor::vector(vec![2.0, -3.0]);
        assert_eq!(z.outer_product(&v).unwrap(), Tensor::zeros(&[2, 2]));
        let m = Tensor::vector(vec![2.0, 3.0])
            .outer_product(&Tensor::vector(vec![4.0]))
            .unwrap();
        assert_eq!(m, Tensor::matrix(&[vec![8.0], vec![12.0]]).unwrap());
    }

    #[test]
    fn outer_product_rejects_matrix() {
        let m = Tensor::zeros(&[2, 2]);
        let v = Tensor::vector(vec![1.0]);
        assert!(m.outer_product(&v).is_err());
    }

    #[test]
    fn relu_and_heaviside() {
        let x = Tensor::vector(vec![-1.0, 2.0]);
        assert_eq!(x.relu().data(), &[0.0, 2.0]);
        let y = Tensor::vector(vec![-1.0, 0.0, 3.0]);
        assert_eq!(y.heaviside().data(), &[0.0, 1.0, 1.0]);
        assert_eq!(y.positive_indicator().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn hadamard_direct() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[3.0, 8.0]);
    }

    #[test]
    fn ln_rejects_non_positive() {
        let x = Tensor::vector(vec![1.0, 0.0]);
        assert!(matches!(x.ln(), Err(TensorError::Domain { .. })));
    }

    #[test]
    fn non_finite_is_an_error() {
        let a = Tensor::vector(vec![1e308]);
        let b = Tensor::vector(vec![1e308]);
        assert!(matches!(a.add(&b), Err(TensorError::NonFinite { .. })));
    }

    // Random 3x4 by 4x2 against an elementwise sum-of-products oracle.
    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = crate::rng::Rng::new(7);
        let a = rand_tensor(&mut rng, &[3, 4]);
        let b = rand_tensor(&mut rng, &[4, 2]);
        let c = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a.data()[i * 4 + p] * b.data()[p * 2 + j];
                }
                assert!((c.data()[i * 2 + j] - s).abs() < 1e-12);
            }
        }
    }

    fn rand_tensor(rng: &mut crate::rng::Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-10.0f64..10.0, n)
        }

        proptest! {
            // Associativity on conformable triples, within 1e-9 relative error.
            #[test]
            fn matmul_associative(a in vec_of(6), b in vec_of(12), c in vec_of(8)) {
                let a = Tensor::new(vec![2, 3], a).unwrap();
                let b = Tensor::new(vec![3, 4], b).unwrap();
                let c = Tensor::new(vec![4, 2], c).unwrap();
                let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
                let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
                let scale = left.norm_max().max(1.0);
                for (l, r) in left.data().iter().zip(right.data()) {
                    prop_assert!((l - r).abs() <= 1e-9 * scale);
                }
            }

            // (u ⊗ v)·w = u·(v·w)
            #[test]
            fn outer_then_matvec(u in vec_of(3), v in vec_of(4), w in vec_of(4)) {
                let u = Tensor::vector(u);
                let v = Tensor::vector(v);
                let w = Tensor::vector(w);
                let left = u.outer_product(&v).unwrap().matvec(&w).unwrap();
                let right = u.scale(v.dot(&w).unwrap()).unwrap();
                for (l, r) in left.data().iter().zip(right.data()) {
                    prop_assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()));
                }
            }

            // relu(x) + relu(-x) = |x| exactly.
            #[test]
            fn relu_splits_abs(x in vec_of(8)) {
                let x = Tensor::vector(x);
                let sum = x.relu().add(&x.negate().relu()).unwrap();
                prop_assert_eq!(sum, x.map(f64::abs));
            }
        }
    }
}
