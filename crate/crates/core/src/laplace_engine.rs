//! Numerical Laplace transforms: fixed Talbot and Gaver-Stehfest inversion,
//! exp-sinh forward quadrature and final-value extrapolation.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionMethod {
    Talbot,
    GaverStehfest,
}

impl InversionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            InversionMethod::Talbot => "talbot",
            InversionMethod::GaverStehfest => "gaver_stehfest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub method: InversionMethod,
    pub nodes: usize,
    pub precision_digits: u32,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig { method: InversionMethod::Talbot, nodes: 32, precision_digits: 32 }
    }
}

/// Highest working precision of the double-double Stehfest accumulator.
pub const MAX_PRECISION_DIGITS: u32 = 32;

impl InversionConfig {
    pub fn talbot(nodes: usize) -> Self {
        InversionConfig { method: InversionMethod::Talbot, nodes, precision_digits: 32 }
    }

    pub fn gaver_stehfest(nodes: usize) -> Self {
        InversionConfig { method: InversionMethod::GaverStehfest, nodes, precision_digits: 32 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            InversionMethod::Talbot if self.nodes < 16 => {
                Err(Error::InvalidParameter(format!("talbot needs nodes >= 16, got {}", self.nodes)))
            }
            InversionMethod::GaverStehfest if self.nodes == 0 || self.nodes % 2 == 1 => Err(
                Error::InvalidParameter(format!("gaver_stehfest needs an even node count, got {}", self.nodes)),
            ),
            InversionMethod::GaverStehfest if self.precision_digits > MAX_PRECISION_DIGITS || self.precision_digits < 16 => {
                Err(Error::InvalidParameter(format!(
                    "gaver_stehfest precision_digits must lie in [16, {}], got {}",
                    MAX_PRECISION_DIGITS, self.precision_digits
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Inverted value with a bound on the rounding error of the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub rounding_bound: f64,
}

impl Inversion {
    /// True when rounding noise exceeds `rel_tol` of the value.
    pub fn is_unstable(&self, rel_tol: f64) -> bool {
        !self.value.is_finite() || self.rounding_bound > rel_tol * self.value.abs()
    }
}

/// f(t) from its transform F.
pub fn invert<F>(f: F, t: f64, cfg: &InversionConfig) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    invert_with_bound(f, t, cfg).map(|r| r.value)
}

pub fn invert_with_bound<F>(f: F, t: f64, cfg: &InversionConfig) -> Result<Inversion>
where
    F: Fn(Complex64) -> Complex64,
{
    cfg.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("inversion time must be positive, got {t}")));
    }
    match cfg.method {
        InversionMethod::Talbot => talbot(&f, t, cfg.nodes),
        InversionMethod::GaverStehfest => stehfest(|u| f(Complex64::new(u, 0.0)).re, t, cfg.nodes),
    }
}

/// Gaver-Stehfest inversion of a transform known only on the real axis.
pub fn invert_real<F>(f: F, t: f64, cfg: &InversionConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if cfg.method != InversionMethod::GaverStehfest {
        return Err(Error::InvalidParameter("real-axis transforms need gaver_stehfest".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("inversion time must be positive, got {t}")));
    }
    stehfest(f, t, cfg.nodes).map(|r| r.value)
}

// Fixed Talbot contour s(θ) = rθ(cot θ + i), r = 2M/(5t).
fn talbot<F>(f: &F, t: f64, m: usize) -> Result<Inversion>
where
    F: Fn(Complex64) -> Complex64,
{
    let r = 2.0 * m as f64 / (5.0 * t);
    let f0 = f(Complex64::new(r, 0.0));
    if !f0.re.is_finite() {
        return Err(Error::InversionFailure { node: 0, u: Complex64::new(r, 0.0), t });
    }
    let first = 0.5 * f0.re * (r * t).exp();
    let mut sum = first;
    let mut abs_sum = first.abs();
    for k in 1..m {
        let th = k as f64 * PI / m as f64;
        let cot = th.cos() / th.sin();
        let s = Complex64::new(r * th * cot, r * th);
        let sigma = th + (th * cot - 1.0) * cot;
        let fs = f(s);
        if !(fs.re.is_finite() && fs.im.is_finite()) {
            return Err(Error::InversionFailure { node: k, u: s, t });
        }
        let term = ((s * t).exp() * fs * Complex64::new(1.0, sigma)).re;
        if !term.is_finite() {
            return Err(Error::InversionFailure { node: k, u: s, t });
        }
        sum += term;
        abs_sum += term.abs();
    }
    let scale = r / m as f64;
    Ok(Inversion { value: scale * sum, rounding_bound: scale * abs_sum * f64::EPSILON * 4.0 })
}

/// Inversion on the optimized cotangent contour
/// z(θ) = n(σ + μθcot(αθ) + iνθ); used where ~1e-13 accuracy is needed.
pub fn optimized_talbot<F>(f: F, t: f64, n: usize) -> f64
where
    F: Fn(Complex64) -> Complex64,
{
    const SIGMA: f64 = -0.6122;
    const MU: f64 = 0.5017;
    const ALPHA: f64 = 0.6407;
    const NU: f64 = 0.2645;
    let nf = n as f64;
    let h = 2.0 * PI / nf;
    let mut sum = 0.0;
    for k in 0..n / 2 {
        let th = (k as f64 + 0.5) * h;
        let at = ALPHA * th;
        let cot = at.cos() / at.sin();
        let z = Complex64::new(nf * (SIGMA + MU * th * cot), nf * NU * th);
        let dz = Complex64::new(nf * MU * (cot - at / (at.sin() * at.sin())), nf * NU);
        let g = z.exp() * f(z / t) * dz;
        sum += g.im;
    }
    2.0 * sum / (nf * t)
}

#[derive(Clone, Copy)]
struct DD {
    hi: f64,
    lo: f64,
}

impl DD {
    fn add_prod(self, a: DD, b: f64) -> DD {
        // (a.hi + a.lo)·b with error-free product of the leading part
        let p = a.hi * b;
        let pe = a.hi.mul_add(b, -p) + a.lo * b;
        let s = self.hi + p;
        let bb = s - self.hi;
        let se = (self.hi - (s - bb)) + (p - bb);
        let lo = self.lo + se + pe;
        let hi = s + lo;
        DD { hi, lo: lo - (hi - s) }
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn big_to_f64(x: &BigInt) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

// hi = nearest double to num/den, lo = exact remainder rounded.
fn rational_to_dd(num: &BigInt, den: &BigInt) -> DD {
    let shift = 200usize;
    let q = (num << shift) / den;
    let hi = big_to_f64(&q) / 2f64.powi(shift as i32);
    if hi == 0.0 {
        return DD { hi, lo: 0.0 };
    }
    // hi = m·2^e exactly
    let bits = hi.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32 - 1075;
    let mant = ((bits & ((1u64 << 52) - 1)) | (1u64 << 52)) as i64;
    let m = BigInt::from(if hi < 0.0 { -mant } else { mant });
    let (rn, rd) = if exp >= 0 {
        (num - (m * den << exp as usize), den.clone())
    } else {
        let k = (-exp) as usize;
        ((num << k) - m * den, den << k)
    };
    let lo = big_to_f64(&((rn << shift) / &rd)) / 2f64.powi(shift as i32);
    DD { hi, lo }
}

fn stehfest_coefficients(n: usize) -> Vec<DD> {
    static CACHE: OnceLock<std::sync::Mutex<std::collections::HashMap<usize, Vec<(f64, f64)>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return v.iter().map(|&(hi, lo)| DD { hi, lo }).collect();
    }
    let half = n / 2;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let mut num = BigInt::zero();
        let mut den = BigInt::one();
        for j in (k + 1) / 2..=k.min(half) {
            let tn = BigInt::from(j).pow(half as u32) * factorial(2 * j);
            let td = factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k);
            num = num * &td + tn * &den;
            den *= td;
            let g = num.gcd(&den);
            num /= &g;
            den /= &g;
        }
        if (k + half) % 2 == 1 {
            num = -num;
        }
        debug_assert!(den.is_positive());
        out.push(rational_to_dd(&num, &den));
    }
    cache.lock().unwrap().insert(n, out.iter().map(|d| (d.hi, d.lo)).collect());
    out
}

fn stehfest<F>(f: F, t: f64, n: usize) -> Result<Inversion>
where
    F: Fn(f64) -> f64,
{
    let v = stehfest_coefficients(n);
    let a = LN_2 / t;
    let mut acc = DD { hi: 0.0, lo: 0.0 };
    let mut abs_sum = 0.0;
    for (i, vk) in v.iter().enumerate() {
        let u = (i + 1) as f64 * a;
        let fu = f(u);
        if !fu.is_finite() {
            return Err(Error::InversionFailure { node: i + 1, u: Complex64::new(u, 0.0), t });
        }
        acc = acc.add_prod(*vk, fu);
        abs_sum += (vk.hi * fu).abs();
    }
    Ok(Inversion { value: a * (acc.hi + acc.lo), rounding_bound: a * abs_sum * f64::EPSILON })
}

/// ∫₀^∞ e^{-ut} f(t) dt by exp-sinh quadrature.
///
/// The substitution decays double-exponentially at both ends, so integrable
/// endpoint singularities at t = 0 and algebraic tails need no special
/// treatment; `tail_exponent_hint` (f ~ t^p) only widens the outer cutoff.
pub fn forward<F>(f: F, u: f64, tail_exponent_hint: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("forward transform needs u > 0, got {u}")));
    }
    let (v, err) = exp_sinh(f, u, tail_exponent_hint);
    if err <= 1e-7 * v.abs() {
        Ok(v)
    } else {
        Err(Error::ToleranceNotMet { what: "forward Laplace quadrature", achieved: err / v.abs() })
    }
}

/// Value and error estimate of ∫₀^∞ e^{-ut} f(t) dt.
pub(crate) fn exp_sinh<F>(f: F, u: f64, tail_exponent_hint: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let c = 1.0 / u;
    let g = |x: f64| -> f64 {
        let e = FRAC_PI_2 * x.sinh();
        let t = c * e.exp();
        if t == 0.0 || !t.is_finite() {
            return 0.0;
        }
        let v = (-u * t).exp() * f(t) * t * FRAC_PI_2 * x.cosh();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let xmax = 4.5 + 0.1 * tail_exponent_hint.abs().min(10.0);
    let mut h = 0.5;
    let mut sum = g(0.0);
    let mut k = 1;
    while k as f64 * h <= xmax {
        sum += g(k as f64 * h) + g(-(k as f64) * h);
        k += 1;
    }
    let mut prev = sum * h;
    let mut err = f64::INFINITY;
    for _level in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= xmax {
            sum += g(k as f64 * h) + g(-(k as f64) * h);
            k += 2;
        }
        let cur = sum * h;
        err = (cur - prev).abs();
        prev = cur;
        // quadratic convergence: the next level would be far below this difference
        if err <= 1e-10 * cur.abs() {
            return (cur, err * err / cur.abs().max(f64::MIN_POSITIVE) + 4.0 * f64::EPSILON * cur.abs());
        }
    }
    (prev, err)
}

/// lim_{u→0⁺} u·F(u) by iterated Aitken extrapolation on a geometric u-sequence.
pub fn final_value<F>(f: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    final_value_on(f, 1e-1, 0.25, 17)
}

pub fn final_value_on<F>(f: F, u_start: f64, ratio: f64, count: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut seq: Vec<f64> = (0..count)
        .map(|k| {
            let u = u_start * ratio.powi(k as i32);
            u * f(u)
        })
        .collect();
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence { what: "final_value", detail: "non-finite u·F(u)".into() });
    }
    let mut est_err = f64::INFINITY;
    let mut best = *seq.last().unwrap();
    while seq.len() >= 3 {
        let n = seq.len();
        let scale = seq.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let last_diff = (seq[n - 1] - seq[n - 2]).abs();
        if last_diff <= 1e-13 * scale {
            return Ok(seq[n - 1]);
        }
        if last_diff < est_err {
            est_err = last_diff;
            best = seq[n - 1];
        }
        let mut next = Vec::with_capacity(n - 2);
        for k in 0..n - 2 {
            let d0 = seq[k + 1] - seq[k];
            let d1 = seq[k + 2] - seq[k + 1];
            let den = d1 - d0;
            if den.abs() <= 1e-15 * scale {
                next.push(seq[k + 2]);
            } else {
                next.push(seq[k + 2] - d1 * d1 / den);
            }
        }
        seq = next;
    }
    if est_err <= 1e-6 * best.abs().max(1.0) {
        Ok(best)
    } else {
        Err(Error::NonConvergence {
            what: "final_value",
            detail: format!("extrapolation table stalled at error {est_err:e}"),
        })
    }
}
