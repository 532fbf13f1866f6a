//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.
//!
//! The 15-point Kronrod rule is open: it never evaluates the integrand at
//! an interval endpoint. Integrable power singularities `(u - lo)^(p-1)`
//! with `0 < p < 1` are removed before integration by the substitution
//! `u - lo = L s^(1/p)`, applied separately on each half of the interval.

use crate::{Error, Real, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639,
    0.949_107_912_342_758_525,
    0.864_864_423_359_769_073,
    0.741_531_185_599_394_440,
    0.586_087_235_467_691_130,
    0.405_845_151_377_397_167,
    0.207_784_955_007_898_468,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_553,
    0.104_790_010_322_250_184,
    0.140_653_259_715_525_919,
    0.169_004_726_639_267_903,
    0.190_350_578_064_785_410,
    0.204_432_940_075_298_892,
    0.209_482_141_084_727_828,
];
// Gauss weights for XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693,
    0.279_705_391_489_276_668,
    0.381_830_050_505_118_945,
    0.417_959_183_673_469_388,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Segment<T> {
    let half = (b - a) * T::lit(0.5);
    let center = a + half;
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(WG[j / 2]);
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Adaptive integration of `f` over `[a, b]` to `max(abs_tol, rel_tol |I|)`.
pub fn integrate<T, F>(mut f: F, a: T, b: T, rel_tol: T, abs_tol: T) -> Result<T>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integration limits must be finite"));
    }
    if a == b {
        return Ok(T::zero());
    }
    let mut segments = vec![kronrod15(&mut f, a, b)];
    loop {
        let total = segments.iter().fold(T::zero(), |s, g| s + g.value);
        let err = segments.iter().fold(T::zero(), |s, g| s + g.error);
        if !total.is_finite() {
            return Err(Error::Quadrature("integrand produced a non-finite value".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {err} above tolerance after {MAX_INTERVALS} subintervals"
            )));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, s)| if s.error > be { (i, s.error) } else { (bi, be) });
        let seg = segments.swap_remove(worst);
        let mid = seg.a + (seg.b - seg.a) * T::lit(0.5);
        if mid <= seg.a || mid >= seg.b {
            // interval can no longer be split in this precision
            return Ok(total);
        }
        segments.push(kronrod15(&mut f, seg.a, mid));
        segments.push(kronrod15(&mut f, mid, seg.b));
    }
}

/// Integrates `f(u, u - lo, hi - u)` over `(lo, hi)` where the integrand
/// behaves like `(u - lo)^(p_lo - 1)` near `lo` and `(hi - u)^(p_hi - 1)`
/// near `hi`. Exponents `p >= 1` need no treatment; pass them anyway or `None`.
///
/// The integrand receives both endpoint distances so that it can evaluate
/// factors vanishing at an endpoint without cancellation.
pub fn integrate_endpoint_singular<T, F>(
    mut f: F,
    lo: T,
    hi: T,
    p_lo: Option<T>,
    p_hi: Option<T>,
    rel_tol: T,
) -> Result<T>
where
    T: Real,
    F: FnMut(T, T, T) -> T,
{
    if !(hi > lo) {
        return Ok(T::zero());
    }
    let width = hi - lo;
    let half = width * T::lit(0.5);
    let abs_tol = T::min_positive_value();
    let one = T::one();

    let left = match p_lo.filter(|&p| p < one && p > T::zero()) {
        Some(p) => {
            let inv = one / p;
            integrate(
                |s: T| {
                    let d = half * s.powf(inv);
                    let jac = half * inv * s.powf(inv - one);
                    f(lo + d, d, width - d) * jac
                },
                T::zero(),
                one,
                rel_tol,
                abs_tol,
            )?
        }
        None => integrate(|u: T| f(u, u - lo, hi - u), lo, lo + half, rel_tol, abs_tol)?,
    };
    let right = match p_hi.filter(|&p| p < one && p > T::zero()) {
        Some(p) => {
            let inv = one / p;
            integrate(
                |s: T| {
                    let d = half * s.powf(inv);
                    let jac = half * inv * s.powf(inv - one);
                    f(hi - d, width - d, d) * jac
                },
                T::zero(),
                one,
                rel_tol,
                abs_tol,
            )?
        }
        None => integrate(|u: T| f(u, u - lo, hi - u), lo + half, hi, rel_tol, abs_tol)?,
    };
    Ok(left + right)
}
