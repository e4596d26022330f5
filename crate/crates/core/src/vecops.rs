//! Small dense-vector helpers with a fixed left-to-right reduction order.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        return f64::NAN;
    }
    a.iter().sum::<f64>() / a.len() as f64
}

/// Rescale `v` in place so that `v'v = n`.
pub(crate) fn renormalize(v: &mut [f64], n: f64) {
    let s = norm_sq(v);
    if s > 0.0 {
        let k = (n / s).sqrt();
        v.iter_mut().for_each(|x| *x *= k);
    }
}
