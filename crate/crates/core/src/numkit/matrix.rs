use std::fmt;

use super::Real;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            writeln!(f, "  {:?}", &row[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl<T: Real> Mat<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Consistency {
                expected: format!("{} entries for {rows}x{cols}", rows * cols),
                actual: format!("{} entries", data.len()),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(v: &[T]) -> Self {
        Mat {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Matrix product with a fixed i-k-j accumulation order.
    pub fn matmul(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * m..(i + 1) * m];
            for (p, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Mat {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != other.cols {
            return Err(Error::Dimension {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Mat::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        }))
    }

    fn check_same(&self, other: &Mat<T>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn zip_map(
        &self,
        other: &Mat<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Mat<T>> {
        self.check_same(other, op)?;
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Mat<T>) -> Result<Mat<T>> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat<T>) -> Result<Mat<T>> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Mat<T>) -> Result<Mat<T>> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Mat<T>) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn row_norm(&self, r: usize) -> T {
        dot(self.row(r), self.row(r)).sqrt()
    }

    /// Columns at `idx`, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Result<Mat<T>> {
        if let Some(&bad) = idx.iter().find(|&&c| c >= self.cols) {
            return Err(Error::Index {
                index: bad,
                len: self.cols,
            });
        }
        Ok(Mat::from_fn(self.rows, idx.len(), |i, j| {
            self.get(i, idx[j])
        }))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Mat<T>> {
        if let Some(&bad) = idx.iter().find(|&&r| r >= self.rows) {
            return Err(Error::Index {
                index: bad,
                len: self.rows,
            });
        }
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Ok(Mat {
            rows: idx.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn concat_cols(parts: &[&Mat<T>]) -> Result<Mat<T>> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(p) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::Dimension {
                op: "concat_cols",
                left: parts[0].shape(),
                right: p.shape(),
            });
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn concat_rows(parts: &[&Mat<T>]) -> Result<Mat<T>> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if let Some(p) = parts.iter().find(|p| p.cols != cols) {
            return Err(Error::Dimension {
                op: "concat_rows",
                left: parts[0].shape(),
                right: p.shape(),
            });
        }
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Mat {
            rows: data.len() / cols.max(1),
            cols,
            data,
        })
    }

    /// Column sums, as a `1×cols` matrix.
    pub fn col_sums(&self) -> Mat<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        Mat {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    /// Mean over rows, as a `1×cols` matrix.
    pub fn mean_rows(&self) -> Mat<T> {
        let n = T::from_count(self.rows.max(1));
        self.col_sums().map(|x| x / n)
    }

    /// Each row scaled to unit L2 norm.
    pub fn normalize_rows(&self) -> Result<Mat<T>> {
        let mut out = self.clone();
        for r in 0..self.rows {
            let n = self.row_norm(r);
            if n == T::zero() {
                return Err(Error::Degenerate {
                    what: "zero-norm row",
                    index: r,
                });
            }
            for x in out.row_mut(r) {
                *x /= n;
            }
        }
        Ok(out)
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64(x.as_f64()).expect("cast"))
                .collect(),
        }
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Pairwise cosine similarity between the rows of `x` and the rows of `y`.
pub fn cosine_rows<T: Real>(x: &Mat<T>, y: &Mat<T>) -> Result<Mat<T>> {
    if x.cols() != y.cols() {
        return Err(Error::Dimension {
            op: "cosine_rows",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let xn = x.normalize_rows()?;
    let yn = y.normalize_rows()?;
    let mut s = xn.matmul_t(&yn)?;
    for v in s.as_mut_slice() {
        *v = v.max(-T::one()).min(T::one());
    }
    Ok(s)
}

/// Temperature softmax of a vector, stabilized by max subtraction.
pub fn softmax_row<T: Real>(v: &[T], temperature: T) -> Result<Vec<T>> {
    if !(temperature > T::zero()) {
        return Err(Error::Parameter(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let exps: Vec<T> = v.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let z: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Floor applied to the reference distribution of every KL term.
pub const KL_FLOOR: f64 = 1e-12;

/// `KL(p ‖ q) = Σ pᵢ ln(pᵢ / qᵢ)` with `0·ln 0 = 0` and `q` floored at [`KL_FLOOR`].
pub fn kl_divergence<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::Distribution(format!(
            "length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let tol = T::lit(1e-6);
    for (name, d) in [("p", p), ("q", q)] {
        let s: T = d.iter().copied().sum();
        if (s - T::one()).abs() > tol || d.iter().any(|&x| x < T::zero() || !x.is_finite()) {
            return Err(Error::Distribution(format!(
                "{name} is not normalized (sum {s})"
            )));
        }
    }
    let floor = T::lit(KL_FLOOR);
    let kl = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > T::zero())
        .fold(T::zero(), |acc, (&pi, &qi)| {
            acc + pi * (pi / qi.max(floor)).ln()
        });
    Ok(kl.max(T::zero()))
}

#[cfg(test)]
#[allow(clippy::approx_constant)] // expected values are hand-evaluated decimals
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_cases() {
        let a = Mat::<f64>::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Mat::<f64>::from_rows(&[[0.0], [1.0]]);
        assert_eq!(
            a.matmul(&b).unwrap(),
            Mat::<f64>::from_rows(&[[2.0], [4.0]])
        );
        let i2 = Mat::<f64>::identity(2);
        assert_eq!(i2.matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&i2).unwrap(), a);
    }

    #[test]
    fn matmul_shape_error_carries_both_shapes() {
        let a = Mat::<f64>::zeros(2, 3);
        let b = Mat::<f64>::zeros(4, 2);
        match a.matmul(&b) {
            Err(Error::Dimension { left, right, .. }) => {
                assert_eq!(left, (2, 3));
                assert_eq!(right, (4, 2));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn cosine_cases() {
        let v = Mat::<f64>::from_rows(&[[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]]);
        let s = cosine_rows(&v, &v).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((s.get(1, 1) - 1.0).abs() < 1e-12);
        let e = cosine_rows(
            &Mat::<f64>::from_rows(&[[1.0, 0.0]]),
            &Mat::<f64>::from_rows(&[[0.0, 1.0]]),
        )
        .unwrap();
        assert_eq!(e.get(0, 0), 0.0);
        let h = cosine_rows(
            &Mat::<f64>::from_rows(&[[1.0, 1.0]]),
            &Mat::<f64>::from_rows(&[[1.0, 0.0]]),
        )
        .unwrap();
        assert!((h.get(0, 0) - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_zero_row_names_index() {
        let x = Mat::<f64>::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        let err = cosine_rows(&x, &x).unwrap_err();
        assert_eq!(
            err,
            Error::Degenerate {
                what: "zero-norm row",
                index: 1
            }
        );
    }

    #[test]
    fn softmax_cases() {
        let u = softmax_row::<f64>(&[0.3, 0.3, 0.3], 0.7).unwrap();
        for x in u {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_row::<f64>(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        let big = softmax_row::<f64>(&[1000.0, 0.0], 1.0).unwrap();
        assert!(big.iter().all(|x| x.is_finite()));
        assert!((big[0] - 1.0).abs() < 1e-12 && big[1] < 1e-300);
        assert!(matches!(
            softmax_row::<f64>(&[1.0], 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn kl_cases() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence::<f64>(&p, &p).unwrap(), 0.0);
        let v = kl_divergence::<f64>(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 0.693147).abs() < 1e-6);
        let f = kl_divergence::<f64>(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(f.is_finite() && f > 0.0);
        assert!(matches!(
            kl_divergence::<f64>(&[0.5, 0.5], &[1.0]),
            Err(Error::Distribution(_))
        ));
        assert!(matches!(
            kl_divergence::<f64>(&[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::Distribution(_))
        ));
    }

    #[test]
    fn select_and_concat() {
        let m = Mat::<f64>::from_rows(&[[1.0, 2.0, 3.0]]);
        assert_eq!(
            m.select_cols(&[0, 2]).unwrap(),
            Mat::<f64>::from_rows(&[[1.0, 3.0]])
        );
        assert_eq!(m.select_cols(&[]).unwrap().shape(), (1, 0));
        assert!(matches!(
            m.select_cols(&[3]),
            Err(Error::Index { index: 3, len: 3 })
        ));
        let c = Mat::concat_cols(&[&m, &m]).unwrap();
        assert_eq!(c.shape(), (1, 6));
        let r = Mat::concat_rows(&[&m, &m]).unwrap();
        assert_eq!(r.shape(), (2, 3));
    }
}
