//! Adaptive Simpson quadrature.

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to an absolute tolerance of roughly `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = simpson(lo, hi, fa, fm, fb);
    sign * recurse(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        assert!((adaptive_simpson(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        let exact = 1.0 - (-5.0f64).exp();
        assert!((adaptive_simpson(|x| (-x).exp(), 0.0, 5.0, 1e-12) - exact).abs() < 1e-11);
        assert!((adaptive_simpson(|x| x, 1.0, 0.0, 1e-12) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn kinked_integrand() {
        let v = adaptive_simpson(|x: f64| x.abs().min(0.3), -1.0, 1.0, 1e-12);
        // 2 * (0.3^2 / 2 + 0.3 * 0.7)
        assert!((v - 2.0 * (0.045 + 0.21)).abs() < 1e-10, "{v}");
    }
}
