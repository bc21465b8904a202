//! Riesz kernels `c_z |x-y|^{z-d}`, their Taylor-truncated versions and the
//! Carleman-weighted variants.
//!
//! Truncated kernels are evaluated through the dilation/rotation reduction
//! `x ↦ t e^{iθ}`, `y ↦ 1`: with `w = t e^{iθ}`
//!
//! ```text
//! [K]_N(x, y) = c_z |y|^{z-d} ( |1 - w|^{z-d} - P_{N-1}(t, θ) ),
//! P_{N-1}(t, θ) = Σ_{m<N} a_m(θ) t^m .
//! ```
//!
//! The coefficients `a_m(θ)` are the Taylor coefficients of
//! `(1 - 2t cos θ + t²)^{-λ}`, `λ = (d-z)/2`. Two independent routes compute
//! them: the binomial convolution `a_m = Σ_{k+l=m} h_k h_l e^{i(k-l)θ}` and the
//! Gegenbauer three-term recurrence (`a_m = C_m^λ(cos θ)`), which is the one
//! used on hot paths.

use std::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{dist, dot, norm};
use crate::special::{ball_volume, gamma, sphere_area};
use crate::sum::{ComplexSum, NeumaierSum};

/// Below this value of `t^N` the remainder is summed from its tail series
/// instead of subtracting the Taylor polynomial (more than 3 digits would cancel).
const TAIL_SWITCH: f64 = 1e-3;
const TAIL_REL_TOL: f64 = 1e-17;
const TAIL_MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KernelSpec {
    pub d: usize,
    pub z: Complex64,
    /// Truncation order; `0` means the plain kernel.
    #[serde(rename = "N")]
    pub n: usize,
    /// Carleman weight exponent of `φ_w(x) = |x|^{-w}`.
    pub w: f64,
}

impl KernelSpec {
    pub fn new(d: usize, z: Complex64, n: usize, w: f64) -> Result<Self> {
        if d < 3 {
            return Err(domain(format!("dimension must be >= 3, got {d}")));
        }
        let df = d as f64;
        if !(z.re > 0.0 && z.re < df) {
            return Err(domain(format!("Re(z) must lie in (0, d), got {}", z.re)));
        }
        if n >= 1 && z.re > df - 1.0 {
            return Err(domain(format!(
                "truncated kernels need Re(z) <= d-1, got {}",
                z.re
            )));
        }
        if !w.is_finite() {
            return Err(domain("weight exponent must be finite"));
        }
        Ok(Self { d, z, n, w })
    }

    /// Plain real-order Riesz kernel.
    pub fn plain(d: usize, z: f64) -> Result<Self> {
        Self::new(d, Complex64::new(z, 0.0), 0, 0.0)
    }

    /// Newtonian kernel of `(-Δ)^{-1}` truncated at order `n` and weighted by `|x|^{-w}|y|^{w}`.
    pub fn newtonian(d: usize, n: usize, w: f64) -> Result<Self> {
        Self::new(d, Complex64::new(2.0, 0.0), n, w)
    }

    pub fn with_truncation(self, n: usize) -> Result<Self> {
        Self::new(self.d, self.z, n, self.w)
    }

    pub fn with_weight(self, w: f64) -> Result<Self> {
        Self::new(self.d, self.z, self.n, w)
    }

    /// Exponent `z - d` of `|x - y|`.
    pub fn exponent(&self) -> Complex64 {
        self.z - self.d as f64
    }

    fn lambda(&self) -> Complex64 {
        (self.d as f64 - self.z) / 2.0
    }
}

/// Reduced coordinates of a pair: `t = |x|/|y|`, `θ` the angle between `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedCoords {
    pub t: f64,
    pub theta: f64,
}

impl ReducedCoords {
    pub fn new(t: f64, theta: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(domain(format!("t must be finite and >= 0, got {t}")));
        }
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(domain(format!("theta must lie in [0, pi], got {theta}")));
        }
        Ok(Self { t, theta })
    }

    /// `|1 - t e^{iθ}|`, written to stay accurate near `t = 1, θ = 0`.
    pub fn distance_to_one(&self) -> f64 {
        let s = (0.5 * self.theta).sin();
        ((1.0 - self.t).powi(2) + 4.0 * self.t * s * s).sqrt()
    }
}

/// `c_z = Γ((d-z)/2) / (π^{d/2} 2^z Γ(z/2))`.
pub fn riesz_constant(z: Complex64, d: usize) -> Result<Complex64> {
    let df = d as f64;
    if !(z.re > 0.0 && z.re < df) {
        return Err(domain(format!("riesz constant needs 0 < Re(z) < d, got {}", z.re)));
    }
    let num = gamma((df - z) / 2.0);
    let den = std::f64::consts::PI.powf(df / 2.0) * Complex64::new(2.0, 0.0).powc(z) * gamma(z / 2.0);
    Ok(num / den)
}

/// `c_z |x - y|^{z-d}`.
pub fn riesz_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Complex64> {
    KernelEvaluator::new(spec)?.plain(x, y)
}

/// Coefficients `h_0..h_K` of `(1 - w)^s = Σ h_k w^k`: `h_k = h_{k-1} (k-1-s)/k`.
pub fn binom_coeff_seq(s: Complex64, k_max: usize) -> Vec<Complex64> {
    let mut h = Vec::with_capacity(k_max + 1);
    h.push(Complex64::new(1.0, 0.0));
    for k in 1..=k_max {
        let kf = k as f64;
        let next = h[k - 1] * (kf - 1.0 - s) / kf;
        h.push(next);
    }
    h
}

/// `a_0(θ)..a_{M}(θ)` by the binomial convolution `Σ_{k+l=m} h_k h_l e^{i(k-l)θ}`, `s = (z-d)/2`.
pub fn taylor_coefficients(spec: &KernelSpec, theta: f64, m_max: usize) -> Vec<Complex64> {
    let h = binom_coeff_seq(spec.exponent() / 2.0, m_max);
    (0..=m_max)
        .map(|m| {
            let mut acc = ComplexSum::new();
            for k in 0..=m {
                let l = m - k;
                let phase = Complex64::from_polar(1.0, (k as f64 - l as f64) * theta);
                acc.add(h[k] * h[l] * phase);
            }
            acc.value()
        })
        .collect()
}

/// Degree-`(N-1)` Taylor polynomial of `t ↦ |1 - t e^{iθ}|^{z-d}` at `t = 0`
/// (binomial route, compensated summation). Zero for `N = 0`.
pub fn taylor_poly_reduced(spec: &KernelSpec, rc: ReducedCoords) -> Complex64 {
    if spec.n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let a = taylor_coefficients(spec, rc.theta, spec.n - 1);
    let mut acc = ComplexSum::new();
    let mut tp = 1.0;
    for am in a {
        acc.add(am * tp);
        tp *= rc.t;
    }
    acc.value()
}

/// Taylor-truncated kernel `[(-Δ)^{-z/2}]_N(x, y)`.
pub fn truncated_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Complex64> {
    KernelEvaluator::new(spec)?.truncated(x, y)
}

/// Carleman-weighted truncated kernel `|x|^{-w} [(-Δ)^{-z/2}]_N(x, y) |y|^{w}`.
pub fn weighted_truncated_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Complex64> {
    KernelEvaluator::new(spec)?.weighted(x, y)
}

/// `N_d^δ = N + (d/2 - δ)(d-3)/(d-1)` for `0 < δ < 1/2`.
pub fn weight_exponent(n: usize, d: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(domain(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    if d < 3 {
        return Err(domain(format!("dimension must be >= 3, got {d}")));
    }
    let df = d as f64;
    Ok(n as f64 + (df / 2.0 - delta) * (df - 3.0) / (df - 1.0))
}

/// Direct multivariate Taylor subtraction with explicit derivative tensors of
/// `|x - y|^{z-d}` at `x = 0`. Only `N <= 3`; serves as an oracle.
pub fn truncated_kernel_direct(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Complex64> {
    if spec.n > 3 {
        return Err(Error::Unsupported(format!(
            "direct Taylor subtraction is implemented for N <= 3, got {}",
            spec.n
        )));
    }
    check_pair(spec.d, x, y)?;
    let ry = norm(y);
    if ry == 0.0 {
        return Err(domain("truncated kernel needs y != 0"));
    }
    let cz = riesz_constant(spec.z, spec.d)?;
    let alpha = spec.exponent();
    let d = spec.d;
    let cpow = |r: f64, e: Complex64| (e * r.ln()).exp();
    // u = 0 - y
    let u: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut taylor = ComplexSum::new();
    if spec.n >= 1 {
        taylor.add(cpow(ry, alpha));
    }
    if spec.n >= 2 {
        // ∂_i φ = α |u|^{α-2} u_i
        let g = alpha * cpow(ry, alpha - 2.0);
        for i in 0..d {
            taylor.add(g * u[i] * x[i]);
        }
    }
    if spec.n >= 3 {
        // ∂_ij φ = α|u|^{α-2} δ_ij + α(α-2)|u|^{α-4} u_i u_j
        let a1 = alpha * cpow(ry, alpha - 2.0);
        let a2 = alpha * (alpha - 2.0) * cpow(ry, alpha - 4.0);
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                let hij = a1 * delta + a2 * u[i] * u[j];
                taylor.add(hij * x[i] * x[j] * 0.5);
            }
        }
    }
    let plain = cpow(dist(x, y), alpha);
    Ok(cz * (plain - taylor.value()))
}

fn check_pair(d: usize, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != d || y.len() != d {
        return Err(domain(format!("points must have dimension {d}")));
    }
    if x == y {
        return Err(Error::Singular("kernel evaluated at x = y".into()));
    }
    Ok(())
}

/// Normalized remainder `|1-w|^{z-d} - P_{N-1}(t,θ) = scaled · t^{power}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Remainder {
    pub scaled: Complex64,
    pub power: f64,
    /// Absolute rounding-error estimate on `scaled`.
    pub error_estimate: f64,
    pub via_tail: bool,
}

impl Remainder {
    /// Unscaled remainder at reduced radius `t`.
    pub fn value(&self, t: f64) -> Complex64 {
        if self.power == 0.0 {
            self.scaled
        } else {
            self.scaled * t.powf(self.power)
        }
    }

    /// `|error| / |value|`, infinite when the value vanishes.
    pub fn relative_error(&self) -> f64 {
        let m = self.scaled.norm();
        if m == 0.0 {
            if self.error_estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error_estimate / m
        }
    }
}

/// Scalars the Gegenbauer recurrence runs over: `f64` for real `z`, complex otherwise.
trait Coef:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + Add<f64, Output = Self>
{
    type Acc: Accumulate<Self>;
    fn one() -> Self;
    fn zero() -> Self;
    fn modulus(self) -> f64;
    fn to_c64(self) -> Complex64;
}

trait Accumulate<T>: Default {
    fn push(&mut self, v: T);
    fn total(&self) -> T;
    fn mag(&self) -> f64;
}

impl Accumulate<f64> for NeumaierSum {
    fn push(&mut self, v: f64) {
        self.add(v)
    }
    fn total(&self) -> f64 {
        self.value()
    }
    fn mag(&self) -> f64 {
        self.magnitude()
    }
}

impl Accumulate<Complex64> for ComplexSum {
    fn push(&mut self, v: Complex64) {
        self.add(v)
    }
    fn total(&self) -> Complex64 {
        self.value()
    }
    fn mag(&self) -> f64 {
        self.magnitude()
    }
}

impl Coef for f64 {
    type Acc = NeumaierSum;
    fn one() -> Self {
        1.0
    }
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Coef for Complex64 {
    type Acc = ComplexSum;
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn to_c64(self) -> Complex64 {
        self
    }
}

/// Gegenbauer polynomials `C_m^λ(x)` generated by the three-term recurrence.
struct Gegenbauer<T: Coef> {
    lambda: T,
    x: f64,
    m: usize,
    prev: T,
    cur: T,
}

impl<T: Coef> Gegenbauer<T> {
    fn new(lambda: T, x: f64) -> Self {
        Self {
            lambda,
            x,
            m: 0,
            prev: T::zero(),
            cur: T::one(),
        }
    }

    /// Current `C_m` with its index.
    #[inline]
    fn current(&self) -> (usize, T) {
        (self.m, self.cur)
    }

    #[inline]
    fn advance(&mut self) {
        let m = self.m as f64;
        // (m+1) C_{m+1} = 2(m+λ) x C_m - (m+2λ-1) C_{m-1}
        let next = ((self.lambda + m) * (2.0 * self.x) * self.cur - (self.lambda * 2.0 + (m - 1.0)) * self.prev)
            / (m + 1.0);
        self.prev = self.cur;
        self.cur = next;
        self.m += 1;
    }
}

/// `|1-w|^{z-d} - Σ_{m<N} C_m^λ(cosθ) t^m`, with `f = |1-w|^{z-d}` supplied.
fn remainder_generic<T: Coef>(lambda: T, lambda_abs: f64, n: usize, t: f64, cos_theta: f64, f: T) -> Remainder {
    let eps = f64::EPSILON;
    if n == 0 {
        return Remainder {
            scaled: f.to_c64(),
            power: 0.0,
            error_estimate: eps * f.modulus(),
            via_tail: false,
        };
    }
    if t == 0.0 {
        return Remainder {
            scaled: Complex64::new(0.0, 0.0),
            power: 0.0,
            error_estimate: 0.0,
            via_tail: false,
        };
    }
    let nf = n as f64;
    let mut g = Gegenbauer::new(lambda, cos_theta);
    if t < 1.0 && nf * t.ln() < TAIL_SWITCH.ln() {
        // tail series Σ_{m>=N} C_m t^{m-N}, majorized by μ_m = (2|λ|)_m / m!
        let a = 2.0 * lambda_abs;
        let mut mu = 1.0;
        for _ in 0..n {
            let m = g.m as f64;
            mu *= (a + m) / (m + 1.0);
            g.advance();
        }
        let mut acc = T::Acc::default();
        let mut weighted_mag = 0.0;
        let mut tp = 1.0;
        let mut rest = f64::INFINITY;
        for k in 0..TAIL_MAX_TERMS {
            let (m, c) = g.current();
            let term = c * tp;
            acc.push(term);
            weighted_mag += (k as f64 + 2.0) * term.modulus();
            let mf = m as f64;
            let mu_next = mu * (a + mf) / (mf + 1.0);
            let ratio = ((a + mf + 1.0) / (mf + 2.0)).max(1.0);
            tp *= t;
            if t * ratio < 1.0 {
                rest = mu_next * tp / (1.0 - t * ratio);
                let total = acc.total().modulus();
                if rest <= TAIL_REL_TOL * total || rest == 0.0 {
                    break;
                }
            }
            mu = mu_next;
            g.advance();
        }
        // recurrence error grows roughly linearly in m
        let err = eps * (weighted_mag + (n as f64) * acc.mag()) + rest.min(acc.mag());
        return Remainder {
            scaled: acc.total().to_c64(),
            power: nf,
            error_estimate: err,
            via_tail: true,
        };
    }
    if t <= 1.0 {
        let mut acc = T::Acc::default();
        let mut weighted_mag = 0.0;
        let mut tp = 1.0;
        for k in 0..n {
            let (_, c) = g.current();
            let term = c * tp;
            acc.push(term);
            weighted_mag += (k as f64 + 2.0) * term.modulus();
            tp *= t;
            if k + 1 < n {
                g.advance();
            }
        }
        let p = acc.total();
        let value = f - p;
        let err = eps * (4.0 * weighted_mag + 2.0 * f.modulus() + value.modulus());
        Remainder {
            scaled: value.to_c64(),
            power: 0.0,
            error_estimate: err,
            via_tail: false,
        }
    } else {
        // forward Horner: S_m = S_{m-1}/t + C_m equals Σ_{j<=m} C_j t^{j-m}
        let u = 1.0 / t;
        let mut s = T::zero();
        let mut mag = 0.0;
        for k in 0..n {
            let (_, c) = g.current();
            s = s * u + c;
            mag = mag * u + (k as f64 + 2.0) * c.modulus();
            if k + 1 < n {
                g.advance();
            }
        }
        let top = nf - 1.0;
        let f_scaled = f * u.powf(top);
        let value = f_scaled - s;
        let err = eps * (4.0 * mag + 2.0 * f_scaled.modulus() + value.modulus());
        Remainder {
            scaled: value.to_c64(),
            power: top,
            error_estimate: err,
            via_tail: false,
        }
    }
}

/// Precomputed evaluator for one [`KernelSpec`].
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    pub spec: KernelSpec,
    cz: Complex64,
    lambda: Complex64,
    real: bool,
}

impl KernelEvaluator {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        let spec = KernelSpec::new(spec.d, spec.z, spec.n, spec.w)?;
        let cz = riesz_constant(spec.z, spec.d)?;
        Ok(Self {
            spec,
            cz,
            lambda: spec.lambda(),
            real: spec.z.im == 0.0,
        })
    }

    pub fn constant(&self) -> Complex64 {
        self.cz
    }

    fn cpow(&self, r: f64, e: Complex64) -> Complex64 {
        if self.real {
            if e.re.fract() == 0.0 && e.re.abs() < 64.0 {
                return Complex64::new(r.powi(e.re as i32), 0.0);
            }
            Complex64::new(r.powf(e.re), 0.0)
        } else {
            (e * r.ln()).exp()
        }
    }

    pub fn plain(&self, x: &[f64], y: &[f64]) -> Result<Complex64> {
        check_pair(self.spec.d, x, y)?;
        Ok(self.cz * self.cpow(dist(x, y), self.spec.exponent()))
    }

    /// Remainder in reduced coordinates, `dist_to_one = |1 - t e^{iθ}|`.
    pub fn remainder(&self, t: f64, cos_theta: f64, dist_to_one: f64) -> Remainder {
        let e = self.spec.exponent();
        let cos_theta = cos_theta.clamp(-1.0, 1.0);
        if self.real {
            let f = if e.re.fract() == 0.0 {
                dist_to_one.powi(e.re as i32)
            } else {
                dist_to_one.powf(e.re)
            };
            remainder_generic::<f64>(self.lambda.re, self.lambda.re.abs(), self.spec.n, t, cos_theta, f)
        } else {
            let f = (e * dist_to_one.ln()).exp();
            remainder_generic::<Complex64>(self.lambda, self.lambda.norm(), self.spec.n, t, cos_theta, f)
        }
    }

    pub fn remainder_reduced(&self, rc: ReducedCoords) -> Remainder {
        self.remainder(rc.t, rc.theta.cos(), rc.distance_to_one())
    }

    /// `c_z |y|^{z-d}` times the remainder, with the weight `t^{-w}` folded in.
    fn from_geometry(&self, rx: f64, ry: f64, xy: f64, rxy: f64, w: f64) -> Complex64 {
        let t = rx / ry;
        let cos_theta = if rx == 0.0 { 1.0 } else { xy / (rx * ry) };
        let r = self.remainder(t, cos_theta, rxy / ry);
        let scale = if t == 0.0 {
            if r.power - w == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            t.powf(r.power - w)
        };
        self.cz * self.cpow(ry, self.spec.exponent()) * r.scaled * scale
    }

    pub fn truncated(&self, x: &[f64], y: &[f64]) -> Result<Complex64> {
        check_pair(self.spec.d, x, y)?;
        if self.spec.n == 0 {
            return self.plain(x, y);
        }
        let ry = norm(y);
        if ry == 0.0 {
            return Err(domain("truncated kernel needs y != 0"));
        }
        let rx = norm(x);
        if rx == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.from_geometry(rx, ry, dot(x, y), dist(x, y), 0.0))
    }

    pub fn weighted(&self, x: &[f64], y: &[f64]) -> Result<Complex64> {
        let w = self.spec.w;
        if w == 0.0 {
            return self.truncated(x, y);
        }
        check_pair(self.spec.d, x, y)?;
        let rx = norm(x);
        let ry = norm(y);
        if rx == 0.0 && w > 0.0 {
            return Err(domain("weighted kernel needs x != 0"));
        }
        if ry == 0.0 {
            return Err(domain("weighted kernel needs y != 0"));
        }
        if self.spec.n == 0 {
            return Ok(self.plain(x, y)? * (ry / rx).powf(w));
        }
        if rx == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.from_geometry(rx, ry, dot(x, y), dist(x, y), w))
    }

    /// Kernel average over the ball of volume `volume` centred at `x` in the
    /// `y` variable: exact for the singular part, midpoint for the Taylor part.
    pub fn cell_average(&self, x: &[f64], volume: f64) -> Result<Complex64> {
        let d = self.spec.d;
        let rc = (volume / ball_volume(d)).powf(1.0 / d as f64);
        // (1/m) ∫_{B(0,rc)} |u|^{z-d} du = σ rc^z / (z m) = (d/z) rc^{z-d}
        let singular = self.cz * sphere_area(d) * self.cpow(rc, self.spec.z) / (self.spec.z * volume);
        if self.spec.n == 0 {
            return Ok(singular);
        }
        let ry = norm(x);
        if ry == 0.0 {
            return Err(domain("truncated kernel cell average needs x != 0"));
        }
        let mut g = if self.real {
            None
        } else {
            Some(Gegenbauer::<Complex64>::new(self.lambda, 1.0))
        };
        let mut gr = Gegenbauer::<f64>::new(self.lambda.re, 1.0);
        let mut acc = ComplexSum::new();
        for k in 0..self.spec.n {
            match g.as_mut() {
                Some(gc) => {
                    acc.add(gc.current().1);
                    if k + 1 < self.spec.n {
                        gc.advance();
                    }
                }
                None => {
                    acc.add(Complex64::new(gr.current().1, 0.0));
                    if k + 1 < self.spec.n {
                        gr.advance();
                    }
                }
            }
        }
        let taylor = self.cz * self.cpow(ry, self.spec.exponent()) * acc.value();
        Ok(singular - taylor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn riesz_constant_values() {
        let c3 = riesz_constant(c(2.0, 0.0), 3).unwrap();
        assert!((c3.re - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(c3.im, 0.0);
        let c4 = riesz_constant(c(2.0, 0.0), 4).unwrap();
        assert!((c4.re - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!(matches!(riesz_constant(c(3.0, 0.0), 3), Err(Error::Domain(_))));
        assert!(riesz_constant(c(0.0, 1.0), 3).is_err());
    }

    #[test]
    fn plain_kernel_values() {
        let spec = KernelSpec::plain(3, 2.0).unwrap();
        let k1 = riesz_kernel(&spec, &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert!((k1.re - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let k2 = riesz_kernel(&spec, &[0.0; 3], &[2.0, 0.0, 0.0]).unwrap();
        assert!((k2.re - 1.0 / (8.0 * PI)).abs() < 1e-15);
        let cplx = KernelSpec::new(3, c(2.0, 1.0), 0, 0.0).unwrap();
        let k3 = riesz_kernel(&cplx, &[0.0; 3], &[0.0, 1.0, 0.0]).unwrap();
        assert!((k3 - riesz_constant(c(2.0, 1.0), 3).unwrap()).norm() < 1e-15);
        assert!(matches!(riesz_kernel(&spec, &[1.0; 3], &[1.0; 3]), Err(Error::Singular(_))));
    }

    #[test]
    fn binomial_sequence() {
        let h = binom_coeff_seq(c(-0.5, 0.0), 3);
        assert_eq!(h[0], c(1.0, 0.0));
        assert!((h[1].re - 0.5).abs() < 1e-16);
        assert!((h[2].re - 0.375).abs() < 1e-16);
        assert!((h[3].re - 0.3125).abs() < 1e-16);
        for s in [c(0.3, -2.0), c(-1.5, 0.25)] {
            assert_eq!(binom_coeff_seq(s, 0), vec![c(1.0, 0.0)]);
        }
    }

    #[test]
    fn binomial_matches_bracket_product() {
        // h_k((-1-iγ)/2) = ∏_{j<=k} (1 + (-1/2 + iγ/2)/j)
        let gamma = 1.7;
        let h = binom_coeff_seq(c(-0.5, -gamma / 2.0), 30);
        let mut prod = c(1.0, 0.0);
        for (k, hk) in h.iter().enumerate().skip(1) {
            prod *= c(1.0, 0.0) + c(-0.5, gamma / 2.0) / k as f64;
            assert!((hk - prod).norm() < 1e-14 * prod.norm());
        }
    }

    #[test]
    fn coefficients_at_zero_angle_are_one() {
        for d in 3..7 {
            let spec = KernelSpec::new(d, c(d as f64 - 1.0, 0.0), 1, 0.0).unwrap();
            let a = taylor_coefficients(&spec, 0.0, 50);
            for am in a {
                assert!((am - c(1.0, 0.0)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn gegenbauer_matches_convolution() {
        for (d, z) in [(3, c(2.0, 0.0)), (4, c(2.0, 0.0)), (5, c(4.0, 2.0)), (3, c(1.5, -0.7))] {
            let spec = KernelSpec::new(d, z, 1, 0.0).unwrap();
            for &theta in &[0.0, 0.4, 1.3, 2.9, PI] {
                let a = taylor_coefficients(&spec, theta, 40);
                let mut g = Gegenbauer::<Complex64>::new(spec.lambda(), theta.cos());
                for (m, am) in a.iter().enumerate() {
                    let gm = g.current().1;
                    assert!(
                        (gm - am).norm() <= 1e-11 * am.norm().max(1.0),
                        "d={d} z={z} θ={theta} m={m}: {gm} vs {am}"
                    );
                    g.advance();
                }
            }
        }
    }

    #[test]
    fn taylor_poly_trivial_orders() {
        let spec = KernelSpec::newtonian(3, 1, 0.0).unwrap();
        let rc = ReducedCoords::new(0.7, 1.1).unwrap();
        assert_eq!(taylor_poly_reduced(&spec, rc), c(1.0, 0.0));
        let spec0 = KernelSpec::newtonian(3, 0, 0.0).unwrap();
        assert_eq!(taylor_poly_reduced(&spec0, rc), c(0.0, 0.0));
    }

    #[test]
    fn truncated_kernel_examples() {
        let spec = KernelSpec::newtonian(3, 1, 0.0).unwrap();
        let v = truncated_kernel(&spec, &[0.1, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        let want = (1.0 / (4.0 * PI)) * (1.0 / 0.9 - 1.0);
        assert!((v.re - want).abs() < 1e-15, "{v} vs {want}");
        assert!((v.re - 8.8419e-3).abs() < 1e-6);
        // x = 0 vanishes for N >= 1
        for n in 1..5 {
            let s = KernelSpec::newtonian(3, n, 0.0).unwrap();
            assert_eq!(truncated_kernel(&s, &[0.0; 3], &[0.3, 0.2, 0.1]).unwrap(), c(0.0, 0.0));
        }
        // N = 0 is the plain kernel
        let s0 = KernelSpec::newtonian(3, 0, 0.0).unwrap();
        let x = [0.3, -0.2, 0.5];
        let y = [0.1, 0.9, -0.4];
        assert_eq!(truncated_kernel(&s0, &x, &y).unwrap(), riesz_kernel(&s0, &x, &y).unwrap());
        assert!(matches!(truncated_kernel(&spec, &x, &[0.0; 3]), Err(Error::Domain(_))));
        assert!(matches!(truncated_kernel(&spec, &x, &x), Err(Error::Singular(_))));
    }

    #[test]
    fn direct_oracle_small_cases() {
        let x = [0.2, -0.1, 0.3];
        let y = [0.5, 0.7, -0.2];
        let s1 = KernelSpec::newtonian(3, 1, 0.0).unwrap();
        let direct = truncated_kernel_direct(&s1, &x, &y).unwrap();
        let want = riesz_kernel(&s1, &x, &y).unwrap() - riesz_constant(c(2.0, 0.0), 3).unwrap() / norm(&y);
        assert!((direct - want).norm() < 1e-15);
        let s2 = KernelSpec::newtonian(3, 2, 0.0).unwrap();
        assert_eq!(truncated_kernel_direct(&s2, &[0.0; 3], &y).unwrap(), c(0.0, 0.0));
        let s4 = KernelSpec::newtonian(3, 4, 0.0).unwrap();
        assert!(matches!(truncated_kernel_direct(&s4, &x, &y), Err(Error::Unsupported(_))));
    }

    #[test]
    fn weighted_kernel_examples() {
        let x = [0.2, -0.1, 0.3];
        let y = [0.5, 0.7, -0.2];
        let s = KernelSpec::newtonian(3, 3, 0.0).unwrap();
        assert_eq!(weighted_truncated_kernel(&s, &x, &y).unwrap(), truncated_kernel(&s, &x, &y).unwrap());
        // |x| = |y|: weight factor 1
        let sw = KernelSpec::newtonian(3, 3, 3.0).unwrap();
        let y2 = [0.3, 0.2, -0.1];
        let a = weighted_truncated_kernel(&sw, &x, &y2).unwrap();
        let b = truncated_kernel(&s, &x, &y2).unwrap();
        assert!((a - b).norm() < 1e-15 * b.norm());
        assert!(matches!(weighted_truncated_kernel(&sw, &[0.0; 3], &y), Err(Error::Domain(_))));
        assert_eq!(weight_exponent(5, 3, 0.25).unwrap(), 5.0);
    }

    #[test]
    fn weight_exponent_values() {
        for n in 0..6 {
            assert_eq!(weight_exponent(n, 3, 0.1).unwrap(), n as f64);
        }
        let w = weight_exponent(2, 4, 0.25).unwrap();
        assert!((w - (2.0 + 1.75 / 3.0)).abs() < 1e-15);
        assert!((w - 2.58333).abs() < 1e-5);
        assert!(matches!(weight_exponent(0, 5, 0.5), Err(Error::Domain(_))));
        assert!(weight_exponent(0, 5, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::new(2, c(1.0, 0.0), 0, 0.0).is_err());
        assert!(KernelSpec::new(3, c(2.5, 0.0), 0, 0.0).is_ok());
        assert!(KernelSpec::new(3, c(2.5, 0.0), 1, 0.0).is_err());
        assert!(KernelSpec::new(3, c(0.0, 1.0), 0, 0.0).is_err());
    }

    #[test]
    fn tail_and_direct_agree_at_switch() {
        let ev = KernelEvaluator::new(&KernelSpec::newtonian(3, 4, 0.0).unwrap()).unwrap();
        // t^4 = 1e-3 at t ≈ 0.1778; evaluate on either side
        for &t in &[0.1770, 0.1785] {
            let rc = ReducedCoords::new(t, 0.8).unwrap();
            let r = ev.remainder_reduced(rc);
            let conv = taylor_poly_reduced(&ev.spec, rc);
            let f = rc.distance_to_one().powf(-1.0);
            let direct = c(f, 0.0) - conv;
            let ours = r.scaled * t.powf(r.power);
            assert!((ours - direct).norm() < 1e-12 * direct.norm(), "t={t}: {ours} vs {direct}");
        }
    }

    #[test]
    fn cell_average_plain_matches_radial_integral() {
        // (1/m) c σ ∫_0^{rc} r^{z-1} dr by midpoint on a fine substitution u = r^z
        for (d, z) in [(3, 2.0), (4, 3.0), (5, 1.5)] {
            let ev = KernelEvaluator::new(&KernelSpec::plain(d, z).unwrap()).unwrap();
            let m = 0.01;
            let avg = ev.cell_average(&[0.3; 5][..d], m).unwrap();
            let rc = (m / ball_volume(d)).powf(1.0 / d as f64);
            // ∫_0^{rc} r^{z-1} dr = ∫_0^{rc^z} du / z
            let integral = rc.powf(z) / z;
            let want = ev.constant().re * sphere_area(d) * integral / m;
            assert!((avg.re - want).abs() <= 1e-12 * want);
        }
    }
}
