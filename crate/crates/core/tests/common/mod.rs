#![allow(dead_code)]

/// Double-exponential (tanh-sinh) quadrature on `[a, b]`; tolerant of
/// integrable endpoint singularities, so it serves as an oracle independent
/// of the product-integration weights under test.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    let kmax = (6.5 / h) as i64;
    for k in -kmax..=kmax {
        let x = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * x.sinh();
        let w = std::f64::consts::FRAC_PI_2 * x.cosh() / u.cosh().powi(2);
        let y = u.tanh();
        // distance to the nearer endpoint, computed without cancellation
        let gap = half / (u.abs().exp() * u.cosh());
        let t = if y < 0.0 { a + gap } else { b - gap };
        if gap <= 0.0 || !(t > a && t < b) {
            continue;
        }
        let v = f(t);
        if v.is_finite() {
            sum += w * v;
        }
    }
    h * half * sum
}

/// `I^α f (t)` by direct quadrature of the defining integral.
pub fn rl_integral_oracle(f: impl Fn(f64) -> f64, alpha: f64, t: f64) -> f64 {
    let h = 0.5 * t;
    let near_zero = tanh_sinh(|s| (t - s).powf(alpha - 1.0) * f(s), 0.0, h);
    let near_t = tanh_sinh(|r| r.powf(alpha - 1.0) * f(t - r), 0.0, h);
    (near_zero + near_t) / gamma(alpha)
}

/// Gamma by the reflection formula and a Stirling series with shift; kept
/// independent of the library implementation.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < 12.0 {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    let ln = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series;
    ln.exp() / prod
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
