//! Dense row-major kernels shared by the model: strided gemm, GELU and
//! layer normalization with their derivatives.

use super::Real;

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    data: &'a [T],
    off: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Real> View<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "view shape mismatch");
        Self {
            data,
            off: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    /// Column block `[col0, col0 + cols)` of a row-major matrix with `stride`
    /// columns.
    pub fn cols_of(data: &'a [T], rows: usize, stride: usize, col0: usize, cols: usize) -> Self {
        assert!(col0 + cols <= stride && data.len() >= rows * stride);
        Self {
            data,
            off: col0,
            rows,
            cols,
            rs: stride,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.off + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "view out of bounds");
        }
    }
}

/// `C = alpha·A·B + beta·C` where C is `a.rows × b.cols` stored at
/// `c[c_off..]` with row stride `c_rs` and unit column stride.
pub(crate) fn gemm_into<T: Real>(
    alpha: T,
    a: View<T>,
    b: View<T>,
    beta: T,
    c: &mut [T],
    c_off: usize,
    c_rs: usize,
) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    a.check();
    b.check();
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(n <= c_rs || m == 1);
    assert!(c_off + (m - 1) * c_rs + n <= c.len(), "gemm output out of bounds");
    // SAFETY: bounds of all three operands were checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            c_rs as isize,
            1,
        )
    }
}

pub(crate) fn mm<T: Real>(a: View<T>, b: View<T>) -> Vec<T> {
    let mut c = vec![T::zero(); a.rows * b.cols];
    gemm_into(T::one(), a, b, T::zero(), &mut c, 0, b.cols);
    c
}

/// `C += A·B` for contiguous C.
pub(crate) fn mm_acc<T: Real>(a: View<T>, b: View<T>, c: &mut [T]) {
    let n = b.cols;
    gemm_into(T::one(), a, b, T::one(), c, 0, n);
}

/// `x W + b` for `x: rows × d_in`, `W: d_in × d_out`.
pub(crate) fn affine<T: Real>(x: &[T], rows: usize, w: &[T], bias: &[T]) -> Vec<T> {
    let d_out = bias.len();
    let d_in = w.len() / d_out;
    let mut y = Vec::with_capacity(rows * d_out);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm_into(
        T::one(),
        View::new(x, rows, d_in),
        View::new(w, d_in, d_out),
        T::one(),
        &mut y,
        0,
        d_out,
    );
    y
}

/// Backward of [`affine`]: accumulates `dW`, `db` and returns `dx`.
pub(crate) fn affine_backward<T: Real>(
    dy: &[T],
    x: &[T],
    rows: usize,
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let d_out = db.len();
    let d_in = w.len() / d_out;
    mm_acc(View::new(x, rows, d_in).t(), View::new(dy, rows, d_out), dw);
    col_sum_acc(dy, d_out, db);
    mm(View::new(dy, rows, d_out), View::new(w, d_in, d_out).t())
}

pub(crate) fn col_sum_acc<T: Real>(x: &[T], cols: usize, out: &mut [T]) {
    for row in x.chunks(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += *v;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

/// Tanh-approximation GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::cast(GELU_C);
    let a = T::cast(GELU_A);
    let half = T::cast(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::cast(GELU_C);
    let a = T::cast(GELU_A);
    let half = T::cast(0.5);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::cast(3.0) * a * x * x)
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layernorm<T: Real>(x: &[T], cols: usize, g: &[T], b: &[T], eps: f64) -> (Vec<T>, LnCache<T>) {
    let rows = x.len() / cols;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let n = T::cast(cols as f64);
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
        let rs = T::one() / (var + T::cast(eps)).sqrt();
        rstd[r] = rs;
        for i in 0..cols {
            let h = (row[i] - mean) * rs;
            xhat[r * cols + i] = h;
            y[r * cols + i] = g[i] * h + b[i];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub(crate) fn layernorm_backward<T: Real>(
    dy: &[T],
    cache: &LnCache<T>,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let cols = g.len();
    let n = T::cast(cols as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); cols];
    for (r, rs) in cache.rstd.iter().enumerate() {
        let dyr = &dy[r * cols..(r + 1) * cols];
        let xh = &cache.xhat[r * cols..(r + 1) * cols];
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for i in 0..cols {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
        }
        m1 = m1 / n;
        m2 = m2 / n;
        for i in 0..cols {
            dx[r * cols + i] = *rs * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
    dx
}
