//! Adaptive Gauss-Kronrod (G7/K15) quadrature for complex-valued integrands
//! of a real variable. Used for bath correlation functions and lineshape
//! integrals, which are smooth but oscillatory; callers supply panel break
//! points matched to the oscillation period where needed.

use num_complex::Complex;

use crate::scalar::Scalar;

/// K15 abscissae on [0, 1] side of the symmetric interval.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// G7 weights, matching the odd-index entries of `XGK`.
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T: Scalar> {
    pub value: Complex<T>,
    /// Estimated absolute error (sum of per-panel Kronrod-Gauss deltas).
    pub error: T,
}

fn gk15<T: Scalar, F: FnMut(T) -> Complex<T>>(
    f: &mut F,
    a: T,
    b: T,
) -> (Complex<T>, T) {
    let half = (b - a) / T::of(2.0);
    let mid = (a + b) / T::of(2.0);
    let mut kronrod = Complex::new(T::zero(), T::zero());
    let mut gauss = Complex::new(T::zero(), T::zero());
    for (i, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let x = T::of(x);
        let wk = T::of(wk);
        let (fl, fr) = if x == T::zero() {
            let v = f(mid);
            (v, Complex::new(T::zero(), T::zero()))
        } else {
            (f(mid - half * x), f(mid + half * x))
        };
        let pair = fl + fr;
        kronrod = kronrod + pair * wk;
        if i % 2 == 1 {
            // Odd entries of XGK (center included) are also G7 nodes.
            gauss = gauss + pair * T::of(WG[i / 2]);
        }
    }
    (kronrod * half, (kronrod - gauss).norm() * half.abs())
}

/// Integrate `f` over `[a, b]` by adaptive bisection, stopping when the
/// panel error is below `abs_tol + rel_tol * |panel value|` or the depth
/// limit is reached. Returns the estimate with its accumulated error.
pub fn adaptive<T: Scalar, F: FnMut(T) -> Complex<T>>(
    f: &mut F,
    a: T,
    b: T,
    rel_tol: T,
    abs_tol: T,
    max_depth: u32,
) -> QuadResult<T> {
    fn go<T: Scalar, F: FnMut(T) -> Complex<T>>(
        f: &mut F,
        a: T,
        b: T,
        rel_tol: T,
        abs_tol: T,
        depth: u32,
        acc: &mut Complex<T>,
        err: &mut T,
    ) {
        let (val, e) = gk15(f, a, b);
        if depth == 0 || e <= abs_tol + rel_tol * val.norm() {
            *acc = *acc + val;
            *err = *err + e;
            return;
        }
        let mid = (a + b) / T::of(2.0);
        let half_abs = abs_tol / T::of(2.0);
        go(f, a, mid, rel_tol, half_abs, depth - 1, acc, err);
        go(f, mid, b, rel_tol, half_abs, depth - 1, acc, err);
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    let mut err = T::zero();
    go(f, a, b, rel_tol, abs_tol, max_depth, &mut acc, &mut err);
    QuadResult {
        value: acc,
        error: err,
    }
}

/// Integrate over consecutive panels `[pts[0], pts[1]], [pts[1], pts[2]],
/// ...`, adaptively within each. Break points let the caller resolve known
/// oscillation periods or kinks up front.
pub fn adaptive_panels<T: Scalar, F: FnMut(T) -> Complex<T>>(
    f: &mut F,
    pts: &[T],
    rel_tol: T,
    abs_tol: T,
    max_depth: u32,
) -> QuadResult<T> {
    let n = pts.len().saturating_sub(1).max(1);
    let per_panel = abs_tol / T::of(n as f64);
    let mut value = Complex::new(T::zero(), T::zero());
    let mut error = T::zero();
    for w in pts.windows(2) {
        let r = adaptive(f, w[0], w[1], rel_tol, per_panel, max_depth);
        value = value + r.value;
        error = error + r.error;
    }
    QuadResult { value, error }
}

/// Break points for `[0, b]` with spacing about `step` (at least one panel).
pub fn linear_panels<T: Scalar>(b: T, step: T) -> Vec<T> {
    let n = (b / step).ceil().to_usize().unwrap_or(1).clamp(1, 100_000);
    (0..=n)
        .map(|i| b * T::of(i as f64) / T::of(n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = adaptive(&mut |x: f64| Complex::new(x * x, 0.0), 0.0, 1.0, 1e-12, 1e-14, 30);
        assert!((r.value.re - 1.0 / 3.0).abs() < 1e-14);
        assert!(r.value.im.abs() < 1e-15);
    }

    #[test]
    fn damped_cosine() {
        // int_0^inf e^{-x} cos x dx = 1/2; tail beyond 40 is ~ 1e-18.
        let r = adaptive(
            &mut |x: f64| Complex::new((-x).exp() * x.cos(), 0.0),
            0.0,
            40.0,
            1e-13,
            1e-15,
            40,
        );
        assert!((r.value.re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_complex_exponential() {
        // int_0^pi e^{ix} dx = 2i.
        let r = adaptive(
            &mut |x: f64| Complex::new(0.0, x).exp(),
            0.0,
            std::f64::consts::PI,
            1e-13,
            1e-15,
            40,
        );
        assert!(r.value.re.abs() < 1e-12);
        assert!((r.value.im - 2.0).abs() < 1e-12);
    }

    #[test]
    fn panels_cover_many_periods() {
        // int_0^{20 pi} sin x dx = 0, needs panels to avoid cancellation
        // fooling the error estimate.
        let pts = linear_panels(20.0 * std::f64::consts::PI, 1.0);
        let r = adaptive_panels(
            &mut |x: f64| Complex::new(x.sin(), 0.0),
            &pts,
            1e-12,
            1e-14,
            30,
        );
        assert!(r.value.re.abs() < 1e-10);
    }

    #[test]
    fn works_in_single_precision() {
        let r = adaptive(&mut |x: f32| Complex::new(x * x, 0.0), 0.0f32, 1.0, 1e-6, 1e-7, 20);
        assert!((r.value.re - 1.0 / 3.0).abs() < 1e-6);
    }
}
