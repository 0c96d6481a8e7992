//! Dense row-major arrays over f32/f64.
//!
//! All tensors in this crate are contiguous, row-major (NCHW for images).
//! `Array` clones are cheap: the buffer is behind an `Arc` and copied on
//! write only.

use std::sync::Arc;

use num_traits::Float;

/// Element type of an array, as stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

/// Scalar element trait: the engine is generic over f32 (training default)
/// and f64 (gradient checking).
pub trait Scalar:
    Float
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;

    fn from_f64(x: f64) -> Self;
    fn to_f64_(self) -> f64;

    /// exp for scan inner loops. For f32 this is a branch-free polynomial
    /// (relative error a few ulp) that auto-vectorizes; f64 uses the exact
    /// library exp, so float64 gradient checks see the true function.
    fn exp_fast(self) -> Self;

    /// C = alpha * A(m,k) * B(k,n) + beta * C. Strides are in elements.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn exp_fast(self) -> f32 {
        // e^x = 2^n * e^r with n = round(x/ln2), r in [-ln2/2, ln2/2];
        // two-part ln2 keeps the reduction exact for |x| up to ~88
        const LN2_HI: f32 = 0.693_359_375;
        const LN2_LO: f32 = -2.121_944_4e-4;
        let x = self.clamp(-87.0, 88.0);
        let n = (x * std::f32::consts::LOG2_E).round();
        let r = (x - n * LN2_HI) - n * LN2_LO;
        // degree-6 Taylor of e^r; |r| <= 0.3466 keeps the truncation below
        // ~1.2e-7 relative
        let p = 1.0
            + r * (1.0
                + r * (0.5
                    + r * (1.0 / 6.0
                        + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
        let scale = f32::from_bits((((n as i32) + 127) as u32) << 23);
        scale * p
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_(self) -> f64 {
        self
    }

    #[inline(always)]
    fn exp_fast(self) -> f64 {
        self.exp()
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Shorthand for lifting an f64 literal into the generic scalar type.
#[inline]
pub fn sc<T: Scalar>(x: f64) -> T {
    T::from_f64(x)
}

/// Row-major strides for a shape.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for (s, &extent) in strides.iter_mut().zip(shape.iter()).rev() {
        *s = acc;
        acc *= extent;
    }
    strides
}

pub fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Dense N-dimensional array. Row-major, contiguous, copy-on-write.
#[derive(Clone, Debug)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Array<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            numel_of(shape),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Array { shape: shape.to_vec(), data: Arc::new(data) }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Array::from_vec(shape, vec![T::zero(); numel_of(shape)])
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Array::from_vec(shape, vec![value; numel_of(shape)])
    }

    pub fn scalar(value: T) -> Self {
        Array::from_vec(&[1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access; clones the buffer if it is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::<Vec<T>>::make_mut(&mut self.data).as_mut_slice()
    }

    /// Same buffer, new shape. No copy.
    pub fn reshaped(&self, shape: &[usize]) -> Array<T> {
        assert_eq!(
            numel_of(shape),
            self.numel(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        Array { shape: shape.to_vec(), data: Arc::clone(&self.data) }
    }

    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar array {:?}", self.shape);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Array<T> {
        Array::from_vec(&self.shape, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Array<T>, f: impl Fn(T, T) -> T) -> Array<T> {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Array::from_vec(
            &self.shape,
            self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// In-place elementwise add, used for gradient accumulation.
    pub fn add_assign(&mut self, other: &Array<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        let dst = self.data_mut();
        for (d, &s) in dst.iter_mut().zip(other.data.iter()) {
            *d += s;
        }
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Array<U> {
        Array::from_vec(&self.shape, self.data.iter().map(|x| U::from_f64(x.to_f64_())).collect())
    }

    pub fn max_abs_diff(&self, other: &Array<T>) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b).abs().to_f64_())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_are_row_major() {
        assert_eq!(strides_of(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides_of(&[5]), vec![1]);
        let empty: Vec<usize> = vec![];
        assert_eq!(strides_of(&[]), empty);
    }

    #[test]
    fn copy_on_write_keeps_clones_independent() {
        let a = Array::<f32>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let mut b = a.clone();
        b.data_mut()[0] = 9.0;
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(b.data()[0], 9.0);
    }

    #[test]
    fn reshape_shares_buffer() {
        let a = Array::<f32>::from_vec(&[2, 3], vec![0.0; 6]);
        let b = a.reshaped(&[3, 2]);
        assert_eq!(b.shape(), &[3, 2]);
        assert_eq!(b.numel(), 6);
    }

    #[test]
    #[should_panic(expected = "shape")]
    fn from_vec_rejects_bad_length() {
        let _ = Array::<f32>::from_vec(&[2, 2], vec![1.0; 3]);
    }

    #[test]
    fn exp_fast_f32_tracks_libm() {
        let mut worst = 0.0f64;
        for i in 0..200_000 {
            let x = -87.0 + i as f32 * (88.0 / 200_000.0);
            let a = x.exp_fast() as f64;
            let e = (x as f64).exp();
            let rel = ((a - e) / e).abs();
            if rel > worst {
                worst = rel;
            }
        }
        assert!(worst < 3e-7, "fast exp worst relative error {worst}");
        assert_eq!(0.0f32.exp_fast(), 1.0);
        assert_eq!((-1000.0f32).exp_fast(), (-87.0f32).exp_fast());
    }

    #[test]
    fn exp_fast_f64_is_exact() {
        for x in [-5.0f64, -0.3, 0.0, 1.7] {
            assert_eq!(x.exp_fast().to_bits(), x.exp().to_bits());
        }
    }
}
