//! Special functions needed by the kernel constants.

use num_complex::Complex64;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Complex gamma function (Lanczos approximation with reflection for Re(z) < 1/2).
///
/// Relative accuracy is close to 1e-15 away from the poles at non-positive integers.
pub fn gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // Γ(z)Γ(1−z) = π / sin(πz)
        let s = (z * PI).sin();
        return Complex64::new(PI, 0.0) / (s * gamma(Complex64::new(1.0, 0.0) - z));
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS_COEF[0], 0.0);
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

pub fn gamma_real(x: f64) -> f64 {
    gamma(Complex64::new(x, 0.0)).re
}

/// Surface area σ_{d−1} = 2π^{d/2}/Γ(d/2) of the unit sphere in ℝ^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma_real(h)
}

/// Volume ω_d = σ_{d−1}/d of the unit ball in ℝ^d.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_gamma_matches_statrs() {
        for &x in &[0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.7, 7.5, 12.25] {
            let ours = gamma_real(x);
            let theirs = statrs::function::gamma::gamma(x);
            assert!((ours - theirs).abs() <= 1e-13 * theirs.abs(), "x={x}: {ours} vs {theirs}");
        }
    }

    #[test]
    fn complex_gamma_recurrence() {
        // Γ(z+1) = zΓ(z)
        for &(re, im) in &[(0.3, 1.0), (1.5, -2.0), (0.75, 0.5), (-0.4, 3.0), (2.0, 5.0)] {
            let z = Complex64::new(re, im);
            let lhs = gamma(z + 1.0);
            let rhs = z * gamma(z);
            assert!((lhs - rhs).norm() <= 1e-13 * lhs.norm(), "z={z}");
        }
    }

    #[test]
    fn modulus_on_critical_line() {
        // |Γ(1/2 + iy)|² = π / cosh(πy)
        for &y in &[0.5, 1.0, 2.0, 3.0] {
            let g = gamma(Complex64::new(0.5, y)).norm_sqr();
            let exact = PI / (PI * y).cosh();
            assert!((g - exact).abs() <= 1e-13 * exact);
        }
    }

    #[test]
    fn unit_ball_measures() {
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }
}
