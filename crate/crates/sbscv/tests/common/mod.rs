//! Oracles shared by several test targets.
#![allow(dead_code)]

use sbscv::numkit::{c, CVector, C64};

/// Smallest error of projective measurements in span{ψ, φ}, searching the
/// measurement direction over the Bloch sphere of the span.
pub fn rotation_search(psi: &CVector, phi: &CVector) -> f64 {
    let e1 = psi.clone();
    let mut e2 = phi - &e1 * e1.dotc(phi);
    e2 /= c(e2.norm(), 0.0);
    let pe = |theta: f64, chi: f64| {
        let m = &e1 * c(theta.cos(), 0.0) + &e2 * C64::from_polar(theta.sin(), chi);
        let ok1 = m.dotc(psi).norm_sqr();
        let ok2 = 1.0 - m.dotc(phi).norm_sqr();
        1.0 - 0.5 * (ok1 + ok2)
    };
    let (mut th, mut ch) = (0.0, 0.0);
    let mut best = f64::INFINITY;
    let (nt, nc) = (120, 120);
    for a in 0..=nt {
        for b in 0..nc {
            let (t, x) = (std::f64::consts::PI * a as f64 / nt as f64, std::f64::consts::TAU * b as f64 / nc as f64);
            let v = pe(t, x);
            if v < best {
                best = v;
                th = t;
                ch = x;
            }
        }
    }
    let (mut st, mut sc) = (std::f64::consts::PI / nt as f64, std::f64::consts::TAU / nc as f64);
    for _ in 0..40 {
        let (t0, c0) = (th, ch);
        for a in -4..=4 {
            for b in -4..=4 {
                let (t, x) = (t0 + st * a as f64 / 4.0, c0 + sc * b as f64 / 4.0);
                let v = pe(t, x);
                if v < best {
                    best = v;
                    th = t;
                    ch = x;
                }
            }
        }
        st /= 2.0;
        sc /= 2.0;
    }
    best
}

/// 2√(c/π) ∫ e^{-2c(x-z)²} e^{-2c(y-z)²} dz and
/// ∫ φ(x,z)² φ(y,z)² dz with φ² = 2√(c/π) e^{-4c(x-z)²}, by the trapezoid rule.
pub fn convolution_quadrature(cc: f64, x: f64, y: f64) -> (f64, f64) {
    let w = 1.0 / (8.0 * cc).sqrt();
    let (lo, hi) = (x.min(y) - 12.0 * w - 2.0, x.max(y) + 12.0 * w + 2.0);
    let h = w / 20.0;
    let n = ((hi - lo) / h).ceil() as usize;
    let pref = 2.0 * (cc / std::f64::consts::PI).sqrt();
    let (mut a, mut b) = (0.0, 0.0);
    for k in 0..=n {
        let z = lo + k as f64 * h;
        let wt = if k == 0 || k == n { 0.5 } else { 1.0 };
        a += wt * (-2.0 * cc * ((x - z).powi(2) + (y - z).powi(2))).exp();
        b += wt * pref * pref * (-4.0 * cc * ((x - z).powi(2) + (y - z).powi(2))).exp();
    }
    (pref * a * h, b * h)
}
