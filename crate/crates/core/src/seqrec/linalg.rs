//! Dense row-major helpers. A matrix `w` with `rows × cols` maps a
//! `cols`-vector to a `rows`-vector.

/// `y = W x`
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    w.chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// `x += Wᵀ g`
pub(crate) fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], x: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    for (row, &gi) in w.chunks_exact(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, row, x);
        }
    }
}

/// `dW += g ⊗ x`
pub(crate) fn outer_acc(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), g.len() * cols);
    for (row, &gi) in dw.chunks_exact_mut(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, x, row);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place numerically stable softmax; returns log of the normalizer.
pub(crate) fn softmax_in_place(v: &mut [f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    max + total.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose() {
        // [[1,2,3],[4,5,6]]
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(matvec(&w, 2, 3, &[1.0, 0.0, -1.0]), [-2.0, -2.0]);
        let mut x = vec![0.0; 3];
        matvec_t_acc(&w, 2, 3, &[1.0, 1.0], &mut x);
        assert_eq!(x, [5.0, 7.0, 9.0]);
        let mut dw = vec![0.0; 6];
        outer_acc(&mut dw, &[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(dw, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1000.0, 1000.0];
        let lse = softmax_in_place(&mut v);
        assert_eq!(v, [0.5, 0.5]);
        assert!((lse - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }
}
