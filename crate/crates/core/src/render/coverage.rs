//! Gaussian-blurred coverage of a triangle.
//!
//! The blurred indicator of a polygon at a point `P` splits into one term
//! per edge: the Gaussian mass of the triangle spanned by `P` and the edge,
//! signed by the side of the edge `P` lies on. In units of σ, with `h` the
//! signed distance from `P` to the edge line and `x` the coordinate of an
//! endpoint along the line measured from the foot of `P`, that mass is
//! `F(h, x_b) - F(h, x_a)` with
//! `F(h, x) = atan(x / h) / 2π - T(h, x / h)` and `T` Owen's T function.
//! Shared edges cancel exactly, so adjacent faces tile without seams.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::jet::Scalar;

const GAUSS_LEGENDRE_12: [(f64, f64); 6] = [
    (0.1252334085114689, 0.2491470458134027),
    (0.3678314989981802, 0.23349253653835464),
    (0.5873179542866175, 0.20316742672306565),
    (0.7699026741943047, 0.1600783285433461),
    (0.9041172563704748, 0.10693932599531888),
    (0.9815606342467192, 0.04717533638651202),
];

/// Beyond this `h²` the integrand of `T` is below `e^-36`.
const T_NEGLIGIBLE: f64 = 72.0;

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Owen's T function for `|a| ≤ 1`, by 12-point Gauss-Legendre quadrature.
pub(crate) fn owen_t(h: f64, a: f64) -> f64 {
    debug_assert!(a.abs() <= 1.0 + 1e-12);
    let h2 = h * h;
    if h2 > T_NEGLIGIBLE || a == 0.0 {
        return 0.0;
    }
    let half = 0.5 * a;
    let f = |t: f64| {
        let s = 1.0 + t * t;
        (-0.5 * h2 * s).exp() / s
    };
    let sum: f64 = GAUSS_LEGENDRE_12.iter().map(|&(x, w)| w * (f(half * (1.0 + x)) + f(half * (1.0 - x)))).sum();
    sum * half / (2.0 * PI)
}

/// `F(h, x)` with its partials `(F, ∂F/∂h, ∂F/∂x)`.
pub(crate) fn wedge(h: f64, x: f64) -> (f64, f64, f64) {
    let r2 = h * h + x * x;
    // (1 - e^{-r²/2}) / r²
    let g = if r2 > 1e-8 { -(-0.5 * r2).exp_m1() / r2 } else { 0.5 - r2 / 8.0 };
    let dh = -x * g / (2.0 * PI) + normal_pdf(h) * (normal_cdf(x) - 0.5);
    let dx = h * g / (2.0 * PI);
    let v = if x == 0.0 {
        0.0
    } else if x.abs() <= h.abs() {
        (x / h).atan() / (2.0 * PI) - owen_t(h, x / h)
    } else {
        // T(h, a) + T(ah, 1/a) identity keeps the argument of T within ±1
        let ax = x.abs();
        let (ph, px) = (normal_cdf(h), normal_cdf(ax));
        let f = 0.25 - (h / ax).atan() / (2.0 * PI) - 0.5 * ph - 0.5 * px + ph * px + owen_t(ax, h / ax);
        if x < 0.0 { -f } else { f }
    };
    (v, dh, dx)
}

/// Blurred coverage of the triangle `p` at `(px, py)`, σ in pixels.
/// `inward` is `+1` when the interior lies left of each edge, `-1` otherwise.
pub(crate) fn triangle_coverage<T: Scalar>(p: &[[T; 2]; 3], px: f64, py: f64, sigma: f64, inward: f64) -> T {
    let inv_sigma = 1.0 / sigma;
    let mut total = T::cst(0.0);
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let ex = b[0] - a[0];
        let ey = b[1] - a[1];
        let inv_len = (ex * ex + ey * ey).sqrt().recip();
        let (ux, uy) = (ex * inv_len, ey * inv_len);
        let (rx, ry) = (a[0] - T::cst(px), a[1] - T::cst(py));
        // left normal is (-uy, ux); distance of the pixel is -(r · n)
        let h = ((rx * uy - ry * ux).scale(inward)).scale(inv_sigma);
        let xa = (rx * ux + ry * uy).scale(inv_sigma);
        let xb = xa + inv_len.recip().scale(inv_sigma);
        let (fb, hb, db) = wedge(h.value(), xb.value());
        let (fa, ha, da) = wedge(h.value(), xa.value());
        total += T::lift2(h, xb, fb, hb, db) - T::lift2(h, xa, fa, ha, da);
    }
    total
}
