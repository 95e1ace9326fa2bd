//! Adaptive Gauss–Kronrod quadrature and bracketing bisection.

use crate::error::{Error, Result};

// Kronrod 15-point abscissae (non-negative half) and weights, with the
// embedded 7-point Gauss weights at the odd Kronrod nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureTolerance {
    pub relative: f64,
    pub absolute: f64,
    pub max_depth: u32,
}

impl Default for QuadratureTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-8,
            absolute: 1e-12,
            max_depth: 48,
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` with globally adaptive Gauss–Kronrod (7/15)
/// subdivision until the summed error estimate meets
/// `max(absolute, relative * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadratureTolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration bounds must be finite"));
    }
    // Max-heap on error estimate, kept as a plain vector: interval counts stay small.
    struct Piece {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
        depth: u32,
    }
    let (value, error) = gk15(&f, a, b);
    let mut pieces = vec![Piece {
        a,
        b,
        value,
        error,
        depth: 0,
    }];
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() {
            return Err(Error::Integration {
                lower: a,
                upper: b,
                estimate: total,
                error: total_err,
            });
        }
        if total_err <= tol.absolute.max(tol.relative * total.abs()) {
            return Ok(total);
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one interval");
        let worst = pieces.swap_remove(idx);
        if worst.depth >= tol.max_depth || pieces.len() > 20_000 {
            return Err(Error::Integration {
                lower: a,
                upper: b,
                estimate: total,
                error: total_err,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        pieces.push(Piece {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
            depth: worst.depth + 1,
        });
        pieces.push(Piece {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
            depth: worst.depth + 1,
        });
        // Re-sum periodically so cancellation drift in the running totals cannot accumulate.
        if pieces.len() % 64 == 0 {
            total = pieces.iter().map(|p| p.value).sum();
            total_err = pieces.iter().map(|p| p.error).sum();
        }
    }
}

/// Finds a sign change of `f` in `[lo, hi]` by bisection, stopping when the
/// bracket is narrower than `x_tol`. `f(lo)` and `f(hi)` must differ in sign
/// (a zero at either end is returned directly).
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Infeasible(format!(
            "no sign change on [{lo}, {hi}] (f = {f_lo:e}, {f_hi:e})"
        )));
    }
    for _ in 0..200 {
        if (hi - lo).abs() < x_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
