//! Scalar math on top of `libm`, plus normal and bivariate normal
//! distribution functions.

use core::f64::consts::{PI, SQRT_2};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn asin(x: f64) -> f64 {
    libm::asin(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `log(1 + e^x)`, stable for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        exp(x)
    } else {
        ln_1p(exp(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

// Gauss-Legendre half-rules (positive nodes) of order 6, 12 and 20.
const GL6_W: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const GL6_X: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const GL12_W: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const GL12_X: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const GL20_W: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410906,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183821,
    0.1491729864726037,
    0.1527533871307259,
];
const GL20_X: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154196,
    0.2277858511416451,
    0.07652652113349733,
];

/// Upper bivariate normal probability `P(X > h, Y > k)` for standard
/// normals with correlation `r` (Drezner-Wesolowsky with Genz's refinements,
/// accurate to about 1e-15).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { normal_cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return normal_cdf(-h);
    }
    if r == 0.0 {
        return normal_cdf(-h) * normal_cdf(-k);
    }

    let (w, x): (&[f64], &[f64]) = if abs(r) < 0.3 {
        (&GL6_W, &GL6_X)
    } else if abs(r) < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    let tp = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if abs(r) < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * asin(r);
        for (&wi, &xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let sn = sin(asr * node);
                bvn += wi * exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        bvn = bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if abs(r) < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = sqrt(as_);
            let bs = (h - k) * (h - k);
            let asr = -0.5 * (bs / as_ + hk);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            if asr > -100.0 {
                bvn = a * exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = sqrt(bs);
                let sp = sqrt(tp) * normal_cdf(-b / a);
                bvn -= exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a *= 0.5;
            let mut sum = 0.0;
            for (&wi, &xi) in w.iter().zip(x) {
                for node in [1.0 - xi, 1.0 + xi] {
                    let xs = (a * node) * (a * node);
                    let asr = -0.5 * (bs / xs + hk);
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                        let rs = sqrt(1.0 - xs);
                        let ep = exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
                        sum += wi * exp(asr) * (sp - ep);
                    }
                }
            }
            bvn = (a * sum - bvn) / tp;
        }
        if r > 0.0 {
            bvn += normal_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                normal_cdf(k) - normal_cdf(h)
            } else {
                normal_cdf(-h) - normal_cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Lower bivariate normal probability `P(X <= h, Y <= k)`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    // P(X > h, Y > k) = ∫_h^∞ φ(x) Φ((r x - k)/sqrt(1-r²)) dx by composite
    // Simpson on [h, 12].
    fn bvn_upper_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let lo = h.max(-12.0);
        let hi = 12.0;
        let n = 20_000;
        let step = (hi - lo) / n as f64;
        let s = sqrt(1.0 - r * r);
        let f = |x: f64| exp(-0.5 * x * x) / sqrt(2.0 * PI) * normal_cdf((r * x - k) / s);
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * step;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * step / 3.0
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!((normal_cdf(-2.0) - 0.022750131948179195).abs() < 1e-16);
    }

    #[test]
    fn bvn_matches_quadrature_across_correlation_regimes() {
        let hs = [-2.5, -1.0, -0.3, 0.0, 0.4, 1.2, 2.0];
        let rs = [-0.99, -0.95, -0.8, -0.5, -0.1, 0.2, 0.6, 0.9, 0.93, 0.97, 0.999];
        for &h in &hs {
            for &k in &hs {
                for &r in &rs {
                    let got = bvn_upper(h, k, r);
                    let want = bvn_upper_quadrature(h, k, r);
                    assert!((got - want).abs() < 1e-10, "h={h} k={k} r={r}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn bvn_special_cases() {
        assert!((bvn_upper(0.0, 0.0, 0.5) - (0.25 + asin(0.5) / (2.0 * PI))).abs() < 1e-15);
        assert_eq!(bvn_upper(f64::INFINITY, 0.0, 0.3), 0.0);
        assert!((bvn_cdf(1.0, f64::INFINITY, 0.3) - normal_cdf(1.0)).abs() < 1e-15);
        assert!((bvn_upper(0.7, -0.2, 0.0) - normal_cdf(-0.7) * normal_cdf(0.2)).abs() < 1e-16);
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
