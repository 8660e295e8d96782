//! Small numerical utilities: adaptive quadrature, Gaussian tail functions,
//! and a monotone bisection inverter.

use crate::error::Error;
use crate::Result;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Gaussian tail function Q(x) = Pr{N(0,1) > x}.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

struct SimpsonState {
    evals: usize,
    max_evals: usize,
}

fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    st: &mut SimpsonState,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    st.evals += 2;
    if st.evals > st.max_evals {
        return Err(Error::Quadrature { tol, achieved: f64::NAN, evals: st.evals });
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 {
        return Err(Error::Quadrature { tol, achieved: delta.abs(), evals: st.evals });
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_step(f, st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson quadrature with an absolute tolerance.
///
/// The interval is pre-split into `seeds` panels so that narrow features away
/// from the midpoint are not missed by the first subdivision.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a < b) {
        return if a == b { Ok(0.0) } else { Err(Error::domain("empty integration interval")) };
    }
    let seeds = 16;
    let mut st = SimpsonState { evals: 0, max_evals: 4_000_000 };
    let mut total = 0.0;
    let panel_tol = tol / seeds as f64;
    for i in 0..seeds {
        let pa = a + (b - a) * i as f64 / seeds as f64;
        let pb = a + (b - a) * (i + 1) as f64 / seeds as f64;
        let m = 0.5 * (pa + pb);
        let (fa, fm, fb) = (f(pa), f(m), f(pb));
        st.evals += 3;
        let whole = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(&f, &mut st, pa, pb, fa, fm, fb, whole, panel_tol, 48)?;
    }
    Ok(total)
}

/// Invert a strictly increasing function by bisection: returns x in [lo, hi]
/// with f(x) = target, to within `xtol` on the argument.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64, xtol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// log2 that maps 0 to 0, for x*log2(x) style entropy terms.
pub fn xlog2(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_is_near_exact() {
        let v = adaptive_simpson(|x| x * x * x + 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-10);
    }

    #[test]
    fn simpson_gaussian_mass() {
        let v = adaptive_simpson(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            1e-12,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn q_function_matches_known_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        // statrs erfc is accurate to ~1e-11 absolute.
        assert!((q_function(1.0) - 0.15865525393145707).abs() < 2e-10);
        assert!((normal_cdf(1.0) + q_function(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_quantile() {
        let x = bisect_increasing(normal_cdf, -10.0, 10.0, 0.975, 1e-12);
        assert!((x - 1.959963984540054).abs() < 1e-9);
    }
}
