//! Standard normal tail, log-tail and tail inverse.

use libm::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_406;

pub(crate) fn pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub(crate) fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `P(Z > z)`.
pub(crate) fn tail(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(z / SQRT_2)
}

/// `ln P(Z > z)`, finite far beyond the underflow point of `tail`.
pub(crate) fn log_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    let t = tail(z);
    if t > 1e-300 {
        return t.ln();
    }
    // Mills-ratio asymptotics, accurate to ~1e-12 once z exceeds 37.
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    ln_pdf(z) - z.ln() + series.ln()
}

// Rational approximation to the lower-tail inverse (relative error ~1e-9),
// used only to seed the bracketing search.
fn acklam_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam_lower(1.0 - p)
    }
}

/// Right-continuous inverse of the standard normal tail: the smallest `z`
/// with `P(Z > z) <= u`, resolved by bisection down to adjacent doubles.
pub(crate) fn tail_inverse(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    let z0 = -acklam_lower(u);
    let mut width = 1e-7 * (1.0 + z0.abs());
    let mut lo = z0 - width;
    let mut hi = z0 + width;
    while tail(lo) <= u {
        width *= 4.0;
        lo = z0 - width;
    }
    while tail(hi) > u {
        width *= 4.0;
        hi = z0 + width;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if tail(mid) <= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((tail(0.0) - 0.5).abs() < 1e-16);
        assert!((tail(1.959_963_984_540_054) - 0.025).abs() < 1e-16);
        assert!((tail_inverse(0.025) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((tail_inverse(0.975) + 1.959_963_984_540_054).abs() < 1e-12);
        assert!((tail_inverse(1e-10) - 6.361_340_902_404_056).abs() < 1e-10);
    }

    #[test]
    fn log_tail_matches_direct_and_extends() {
        for &z in &[-5.0, -1.0, 0.0, 2.0, 10.0, 30.0] {
            assert!((log_tail(z) - tail(z).ln()).abs() < 1e-12 * (1.0 + tail(z).ln().abs()));
        }
        // Continuity across the switch to the asymptotic branch.
        let a = log_tail(37.4);
        let b = log_tail(37.6);
        assert!(a > b && (a - b) < 10.0);
        assert!(log_tail(100.0).is_finite());
    }

    #[test]
    fn inverse_is_galois() {
        for &u in &[1e-300, 1e-12, 0.001, 0.3, 0.5, 0.77, 0.999_999] {
            let z = tail_inverse(u);
            assert!(tail(z) <= u);
            let below = z - z.abs().max(1.0) * 1e-15;
            assert!(tail(below) > u || (tail(below) - u).abs() <= 1e-16 * u);
        }
    }
}
