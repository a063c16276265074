use super::{Matrix, Real};

/// `y = x·Wᵀ + b` with `W` laid out `[out, in]`.
pub fn linear_forward<T: Real>(x: &Matrix<T>, weight: &[T], bias: &[T], out: usize) -> Matrix<T> {
    let inp = x.cols;
    assert_eq!(weight.len(), out * inp, "linear weight shape");
    let mut y = Matrix::zeros(x.rows, out);
    for r in 0..x.rows {
        y.row_mut(r).copy_from_slice(bias);
    }
    T::gemm(x.rows, inp, out, T::one(), &x.data, inp as isize, 1, weight, 1, inp as isize, T::one(), &mut y.data, out as isize, 1);
    y
}

/// Returns `(dW, db, dx)`.
pub fn linear_backward<T: Real>(x: &Matrix<T>, weight: &[T], dy: &Matrix<T>) -> (Vec<T>, Vec<T>, Matrix<T>) {
    let (rows, inp, out) = (x.rows, x.cols, dy.cols);
    let mut dw = vec![T::zero(); out * inp];
    // dW = dyᵀ · x
    T::gemm(out, rows, inp, T::one(), &dy.data, 1, out as isize, &x.data, inp as isize, 1, T::zero(), &mut dw, inp as isize, 1);
    let mut db = vec![T::zero(); out];
    for r in 0..rows {
        for (b, d) in db.iter_mut().zip(dy.row(r)) {
            *b = *b + *d;
        }
    }
    let mut dx = Matrix::zeros(rows, inp);
    T::gemm(rows, out, inp, T::one(), &dy.data, out as isize, 1, weight, inp as isize, 1, T::zero(), &mut dx.data, inp as isize, 1);
    (dw, db, dx)
}
