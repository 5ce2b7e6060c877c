//! Gamma, the two-parameter Mittag-Leffler function and a scaled complex
//! upper incomplete gamma function.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::laplace_engine::{exp_sinh, optimized_talbot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLEvalConfig {
    pub series_tol: f64,
    pub max_terms: usize,
    pub asymptotic_switch: f64,
}

impl Default for MLEvalConfig {
    fn default() -> Self {
        MLEvalConfig { series_tol: 1e-12, max_terms: 2000, asymptotic_switch: 8.0 }
    }
}

impl MLEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.series_tol > 0.0) || self.max_terms < 1 || !(self.asymptotic_switch > 0.0) {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Γ(x), with an explicit error at the poles.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("gamma of NaN".into()));
    }
    if is_pole(x) {
        return Err(Error::Pole(x));
    }
    Ok(gamma(x))
}

/// 1/Γ(x); zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if is_pole(x) {
        return 0.0;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma(x)
}

// ln|z^n / Γ(αn+β)| and its sign, for the series terms
fn series_term(alpha: f64, beta: f64, z: f64, n: usize) -> f64 {
    let x = alpha * n as f64 + beta;
    let sign = if z < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    if n == 0 {
        return rgamma(x);
    }
    if z == 0.0 {
        return 0.0;
    }
    if x > 0.0 {
        sign * (n as f64 * z.abs().ln() - ln_gamma(x)).exp()
    } else {
        z.powi(n as i32) * rgamma(x)
    }
}

struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn new() -> Self {
        Neumaier { sum: 0.0, comp: 0.0 }
    }
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

// Returns (value, estimated relative error) or None if max_terms ran out.
fn ml_series(alpha: f64, beta: f64, z: f64, cfg: &MLEvalConfig) -> Option<(f64, f64)> {
    let mut acc = Neumaier::new();
    let mut max_term = 0.0f64;
    let peak = if z == 0.0 { 0.0 } else { z.abs().powf(1.0 / alpha) / alpha };
    let mut small = 0;
    for n in 0..cfg.max_terms {
        let t = series_term(alpha, beta, z, n);
        acc.add(t);
        max_term = max_term.max(t.abs());
        let s = acc.value();
        if n as f64 > peak + 2.0 && t.abs() <= cfg.series_tol * 1e-3 * s.abs().max(f64::MIN_POSITIVE) {
            small += 1;
            if small >= 2 {
                let rounding = 4.0 * f64::EPSILON * max_term * ((n + 1) as f64).sqrt();
                return Some((s, rounding / s.abs().max(f64::MIN_POSITIVE)));
            }
        } else {
            small = 0;
        }
        if z == 0.0 {
            return Some((s, 0.0));
        }
    }
    None
}

// Algebraic expansion for z = −x, x large, 0 < α < 1. Truncated where the
// envelope x^{−k}Γ(1+αk−β)/π ≥ |x^{−k}/Γ(β−αk)| is smallest; individual
// terms can be accidentally tiny near poles of Γ and are not trusted.
fn ml_asymptotic(alpha: f64, beta: f64, x: f64, cfg: &MLEvalConfig) -> Option<(f64, f64)> {
    let mut acc = Neumaier::new();
    let lx = x.ln();
    let envelope = |k: usize| {
        let y = 1.0 + alpha * k as f64 - beta;
        if y <= 0.0 {
            f64::INFINITY
        } else {
            (-(k as f64) * lx + ln_gamma(y)).exp() / PI
        }
    };
    let mut err = f64::INFINITY;
    for k in 1..cfg.max_terms {
        let env_next = envelope(k + 1);
        let c = rgamma(beta - alpha * k as f64);
        let mag = (-(k as f64) * lx).exp();
        acc.add(if k % 2 == 1 { mag * c } else { -mag * c });
        if env_next.is_finite() && env_next > envelope(k) && k > 1 {
            err = envelope(k);
            break;
        }
        err = env_next;
        if err <= cfg.series_tol * 1e-2 * acc.value().abs() {
            break;
        }
    }
    let s = acc.value();
    if s == 0.0 {
        return None;
    }
    Some((s, err / s.abs()))
}

// Hankel contour collapsed onto the cut, z = −x, 0 < α < 1, β < 1 + α:
// E = (1/π)∫₀^∞ e^{−r} r^{α−β} [r^α sin πβ + x sin π(β−α)] / (r^{2α} + 2x r^α cos πα + x²) dr
fn ml_real_integral(alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    let (sb, sba, ca) = ((PI * beta).sin(), (PI * (beta - alpha)).sin(), (PI * alpha).cos());
    let f = |r: f64| {
        let ra = r.powf(alpha);
        r.powf(alpha - beta) * (ra * sb + x * sba) / (ra * ra + 2.0 * x * ra * ca + x * x)
    };
    let (v, e) = exp_sinh(f, 1.0, 0.0);
    (v / PI, e / v.abs().max(f64::MIN_POSITIVE))
}

fn ml_contour(alpha: f64, beta: f64, z: f64) -> (f64, f64) {
    let f = |s: Complex64| s.powf(alpha - beta) / (s.powf(alpha) - z);
    let a = optimized_talbot(f, 1.0, 20);
    let b = optimized_talbot(f, 1.0, 26);
    (b, (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
}

/// E_{α,β}(z) = Σ z^n / Γ(αn+β) for real z.
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64, cfg: &MLEvalConfig) -> Result<f64> {
    cfg.validate()?;
    if !(alpha > 0.0) || !beta.is_finite() || !z.is_finite() {
        return Err(Error::Domain(format!("mittag_leffler(α={alpha}, β={beta}, z={z})")));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(z.exp());
    }
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |cand: Option<(f64, f64)>| {
        if let Some((v, e)) = cand {
            if best.map_or(true, |(_, be)| e < be) {
                best = Some((v, e));
            }
        }
    };
    if z < 0.0 && alpha < 1.0 && -z > cfg.asymptotic_switch {
        let a = ml_asymptotic(alpha, beta, -z, cfg);
        if let Some((v, e)) = a {
            if e <= cfg.series_tol {
                return Ok(v);
            }
        }
        consider(a);
    }
    let s = ml_series(alpha, beta, z, cfg);
    if let Some((v, e)) = s {
        if e <= cfg.series_tol {
            return Ok(v);
        }
    }
    consider(s);
    if z < 0.0 && alpha < 1.0 && beta < 1.0 + alpha {
        let c = ml_real_integral(alpha, beta, -z);
        if c.1 <= cfg.series_tol {
            return Ok(c.0);
        }
        consider(Some(c));
    }
    if z < 0.0 && alpha <= 1.0 {
        let c = ml_contour(alpha, beta, z);
        if c.1 <= cfg.series_tol.max(1e-11) {
            return Ok(c.0);
        }
        consider(Some(c));
    }
    Err(Error::NonConvergence {
        what: "mittag_leffler",
        detail: format!(
            "α={alpha}, β={beta}, z={z}: best relative error estimate {:e}",
            best.map_or(f64::INFINITY, |b| b.1)
        ),
    })
}

fn use_incgamma_series(z: Complex64) -> bool {
    z.norm() < 1.5 || (z.re < 0.0 && z.im.abs() < -z.re)
}

// h = e^z z^{-a} Γ(a) − e^z Σ (−z)^n / (n!(a+n))
fn scaled_upper_gamma_series(a: f64, z: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut p = Complex64::new(1.0, 0.0);
    let mz = -z;
    for n in 0..4000 {
        if n > 0 {
            p = p * mz / n as f64;
        }
        let t = p / (a + n as f64);
        sum += t;
        if n as f64 > z.norm() && t.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    let ez = z.exp();
    ez * z.powf(-a) * gamma(a) - ez * sum
}

// Modified Lentz for b0 + a1/(b1 + a2/(b2 + ...)) with
// b0 = 1 − a, a_i = −i(i − a), b_i = z + 2i + 1 − a.
fn upper_gamma_cf_tail(a: f64, z: Complex64) -> Complex64 {
    let tiny = 1e-300;
    let mut f = Complex64::new(1.0 - a, 0.0);
    if f.norm() < tiny {
        f = Complex64::new(tiny, 0.0);
    }
    let mut c = f;
    let mut d = Complex64::new(0.0, 0.0);
    for i in 1..20000 {
        let ai = -(i as f64) * (i as f64 - a);
        let bi = z + (2 * i) as f64 + 1.0 - a;
        d = bi + ai * d;
        if d.norm() < tiny {
            d = Complex64::new(tiny, 0.0);
        }
        c = bi + ai / c;
        if c.norm() < tiny {
            c = Complex64::new(tiny, 0.0);
        }
        d = 1.0 / d;
        let del = c * d;
        f *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    f
}

const INCGAMMA_ASYMPTOTIC: f64 = 35.0;

// z·S with h = (1 + S)/z, S = Σ_{k≥1} (a−1)(a−2)⋯(a−k)/z^k, truncated at the smallest term
fn upper_gamma_asymptotic_zs(a: f64, z: Complex64) -> Complex64 {
    let mut term = Complex64::new(a - 1.0, 0.0);
    let mut sum = term;
    let mut last = term.norm();
    for k in 2..200 {
        let next = term * (a - k as f64) / z;
        if next.norm() >= last || next.norm() < 1e-17 * sum.norm() {
            break;
        }
        term = next;
        last = term.norm();
        sum += term;
    }
    sum
}

/// Γ(a, z)·e^z·z^(−a) for a > 0 and complex z off the negative real axis.
/// Tends to 1/z for large |z|.
pub fn upper_gamma_scaled(a: f64, z: Complex64) -> Complex64 {
    if z.norm() > INCGAMMA_ASYMPTOTIC {
        return (1.0 + upper_gamma_asymptotic_zs(a, z) / z) / z;
    }
    if use_incgamma_series(z) {
        scaled_upper_gamma_series(a, z)
    } else {
        1.0 / (z + upper_gamma_cf_tail(a, z))
    }
}

/// 1/(Γ(a, z)·e^z·z^(−a)) − z, evaluated without the cancellation at large |z|.
/// Tends to 1 − a as |z| → ∞ and to z^a/Γ(a) as z → 0.
pub fn upper_gamma_tail(a: f64, z: Complex64) -> Complex64 {
    if z.norm() > INCGAMMA_ASYMPTOTIC {
        // 1/h − z = −zS/(1 + S)
        let zs = upper_gamma_asymptotic_zs(a, z);
        return -zs / (1.0 + zs / z);
    }
    if use_incgamma_series(z) {
        1.0 / scaled_upper_gamma_series(a, z) - z
    } else {
        upper_gamma_cf_tail(a, z)
    }
}
