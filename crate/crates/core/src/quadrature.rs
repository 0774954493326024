//! Adaptive Simpson integration.

/// Result of an adaptive integration: the value and an upper bound on the
/// accumulated error estimate.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol` by adaptive
/// Simpson bisection (Lyness criterion with the usual 1/15 Richardson
/// error estimate).
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> QuadResult {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut acc = QuadResult {
        value: 0.0,
        error_estimate: 0.0,
    };
    recurse(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol.max(f64::MIN_POSITIVE),
        50,
        &mut acc,
    );
    acc
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    acc: &mut QuadResult,
) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        acc.value += left + right + delta / 15.0;
        acc.error_estimate += delta.abs() / 15.0;
        return;
    }
    recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, acc);
    recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, acc);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_polynomial_exactly() {
        // Simpson is exact for cubics
        let r = adaptive_simpson(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-12);
        assert_abs_diff_eq!(r.value, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn integrates_inverse_sqrt() {
        // integral of z^(-1/2) over [lo, y] = 2 sqrt(y) - 2 sqrt(lo)
        let r = adaptive_simpson(&|z| 1.0 / z.sqrt(), 0.25, 9.0, 1e-12);
        assert_abs_diff_eq!(r.value, 2.0 * 3.0 - 2.0 * 0.5, epsilon = 1e-10);
        assert!(r.error_estimate < 1e-9);
    }

    #[test]
    fn integrates_inverse_square() {
        let r = adaptive_simpson(&|z| z.powi(-2), 1.0, 10.0, 1e-12);
        assert_abs_diff_eq!(r.value, 1.0 - 0.1, epsilon = 1e-11);
    }

    #[test]
    fn tolerance_is_respected_on_oscillatory_integrand() {
        let r = adaptive_simpson(&|x| (10.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-10);
        let exact = (1.0 - (10.0 * std::f64::consts::PI).cos()) / 10.0;
        assert_abs_diff_eq!(r.value, exact, epsilon = 1e-9);
    }
}
