//! Bivariate normal orthant and rectangle probabilities (Genz's BVND,
//! Drezner–Wesolowsky with Gauss–Legendre quadrature).

use std::f64::consts::PI;

use crate::dist::normal_cdf;

const W6: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const X6: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const W12: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const X12: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const W20: [f64; 10] = [
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
const X20: [f64; 10] = [
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

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY {
            1.0
        } else {
            normal_cdf(-k)
        };
    }
    if k == f64::NEG_INFINITY {
        return normal_cdf(-h);
    }
    if r == 0.0 {
        return normal_cdf(-h) * normal_cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };
    let tp = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (wi, xi) in w.iter().zip(x) {
            for is in [-1.0, 1.0] {
                let sn = (asr * (is * xi + 1.0) / 2.0).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (2.0 * tp) + normal_cdf(-h) * normal_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / as_ + hk) / 2.0;
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * tp.sqrt()
                    * normal_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (wi, xi) in w.iter().zip(x) {
                for is in [-1.0, 1.0] {
                    let xs = (a + is * a * xi).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        bvn += a
                            * wi
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / tp;
        }
        if r > 0.0 {
            bvn += normal_cdf(-h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += if h < 0.0 {
                    normal_cdf(k) - normal_cdf(h)
                } else {
                    normal_cdf(-h) - normal_cdf(-k)
                };
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(a_lo < X < a_hi, b_lo < Y < b_hi)` for standard normals with correlation `r`.
pub fn bvn_rect(a: (f64, f64), b: (f64, f64), r: f64) -> f64 {
    let p = bvn_upper(a.0, b.0, r) - bvn_upper(a.0, b.1, r) - bvn_upper(a.1, b.0, r)
        + bvn_upper(a.1, b.1, r);
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    /// `∫_h^∞ φ(x) Φ((r x − k)/√(1−r²)) dx` by composite Simpson.
    fn quadrature(h: f64, k: f64, r: f64) -> f64 {
        let lo = h.max(-12.0);
        let hi = 12.0;
        let n = 40_000;
        let step = (hi - lo) / n as f64;
        let s = (1.0 - r * r).sqrt();
        let f = |x: f64| pdf(x) * normal_cdf((r * x - k) / s);
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += f(lo + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * step / 3.0
    }

    #[test]
    fn zero_thresholds_closed_form() {
        for &r in &[
            -0.999, -0.95, -0.8, -0.5, -0.1, 0.0, 0.2, 0.6, 0.9, 0.93, 0.99, 0.9999,
        ] {
            let exact = 0.25 + f64::asin(r) / (2.0 * PI);
            assert!((bvn_upper(0.0, 0.0, r) - exact).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn limits() {
        assert_eq!(bvn_upper(f64::INFINITY, 0.0, 0.5), 0.0);
        assert_eq!(bvn_upper(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.5), 1.0);
        assert!((bvn_upper(f64::NEG_INFINITY, 0.3, 0.5) - normal_cdf(-0.3)).abs() < 1e-15);
        assert!((bvn_upper(0.4, -0.2, 1.0) - normal_cdf(-0.4)).abs() < 1e-12);
        assert!((bvn_upper(-0.4, -0.2, -1.0) - (normal_cdf(0.2) - normal_cdf(-0.4))).abs() < 1e-12);
        assert_eq!(bvn_upper(0.4, -0.2, -1.0), 0.0);
        assert!(bvn_upper(0.4, 0.2, -1.0) < 1e-15);
    }

    #[test]
    fn matches_quadrature() {
        let hs = [-2.5, -0.7, 0.0, 0.3, 1.9];
        let rs = [-0.97, -0.94, -0.6, -0.2, 0.1, 0.5, 0.8, 0.93, 0.99];
        for &h in &hs {
            for &k in &hs {
                for &r in &rs {
                    let q = quadrature(h, k, r);
                    let b = bvn_upper(h, k, r);
                    assert!((q - b).abs() < 1e-10, "h={h} k={k} r={r}: {b} vs {q}");
                }
            }
        }
    }

    #[test]
    fn rectangle_total_mass() {
        let inf = f64::INFINITY;
        assert!((bvn_rect((-inf, inf), (-inf, inf), 0.4) - 1.0).abs() < 1e-15);
        let r = bvn_rect((-inf, 0.0), (-inf, 0.0), 0.5);
        assert!((r - (0.25 + f64::asin(0.5) / (2.0 * PI))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_in_arguments(h in -3.0..3.0f64, k in -3.0..3.0f64, r in -0.999..0.999f64) {
            prop_assert!((bvn_upper(h, k, r) - bvn_upper(k, h, r)).abs() < 1e-12);
        }

        #[test]
        fn complement_identity(h in -3.0..3.0f64, k in -3.0..3.0f64, r in -0.999..0.999f64) {
            // P(X>h,Y>k) + P(X>h,Y<k) = P(X>h), and P(X>h,Y<k) = P(X>h, -Y>-k) under -r
            let lhs = bvn_upper(h, k, r) + bvn_upper(h, -k, -r);
            prop_assert!((lhs - normal_cdf(-h)).abs() < 1e-12);
        }
    }
}
