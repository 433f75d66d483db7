//! Central finite-difference gradients and Hessians, used to cross-check
//! analytic oracle derivatives.

use nalgebra::{DMatrix, DVector};

/// Central-difference gradient with step `h` per coordinate.
pub fn central_gradient<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let d = x.len();
    let mut g = DVector::zeros(d);
    let mut xp = x.clone();
    for i in 0..d {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian via second differences of `f`.
pub fn central_hessian<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let d = x.len();
    let mut m = DMatrix::zeros(d, d);
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..d {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    for i in 0..d {
        for j in 0..i {
            let (xi, xj) = (x[i], x[j]);
            xp[i] = xi + h;
            xp[j] = xj + h;
            let fpp = f(&xp);
            xp[j] = xj - h;
            let fpm = f(&xp);
            xp[i] = xi - h;
            xp[j] = xj + h;
            let fmp = f(&xp);
            xp[j] = xj - h;
            let fmm = f(&xp);
            xp[i] = xi;
            xp[j] = xj;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
