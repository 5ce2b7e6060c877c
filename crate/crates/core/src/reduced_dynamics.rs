//! Closed-form Laplace-space observables of the infinite two-parity ladder
//! and their time-domain series.
//!
//! Every observable G has the form h(u)/(u² + 4Ω²) with h regular at the
//! undamped pair u = ±2iΩ. Inversion either keeps that pair analytically
//! ([`SeriesMode::Full`]) or drops it ([`SeriesMode::Secular`]).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::collision_models::MemoryKernel;
use crate::error::{Error, Result};
use crate::laplace_engine::{invert, invert_real, InversionConfig, InversionMethod};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub omega: f64,
}

impl ModelParams {
    pub fn new(alpha_l: f64, alpha_r: f64, omega: f64) -> Result<Self> {
        let p = ModelParams { alpha_l, alpha_r, omega };
        p.validate().map(|_| p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_L", self.alpha_l), ("alpha_R", self.alpha_r), ("omega", self.omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn alpha(&self, s: Parity) -> f64 {
        match s {
            Parity::L => self.alpha_l,
            Parity::R => self.alpha_r,
        }
    }

    pub fn swapped(&self) -> Self {
        ModelParams { alpha_l: self.alpha_r, alpha_r: self.alpha_l, omega: self.omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    L,
    R,
}

impl Parity {
    fn idx(self) -> usize {
        match self {
            Parity::L => 0,
            Parity::R => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    Coherence,
    GroundL,
    GroundR,
    WholeL,
    WholeR,
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::Coherence => "coherence",
            Observable::GroundL => "ground_L",
            Observable::GroundR => "ground_R",
            Observable::WholeL => "whole_L",
            Observable::WholeR => "whole_R",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "coherence" => Observable::Coherence,
            "ground_L" => Observable::GroundL,
            "ground_R" => Observable::GroundR,
            "whole_L" => Observable::WholeL,
            "whole_R" => Observable::WholeR,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeriesMode {
    /// Secular part plus the undamped oscillation at frequency 2Ω.
    #[default]
    Full,
    /// Pole pair removed.
    Secular,
}

/// The root of λ² − 2xλ + 1 = 0 inside the unit interval, for x ≥ 1.
pub fn minus_root(x: f64) -> f64 {
    let d = x - 1.0;
    1.0 / (x + (d * (d + 2.0)).sqrt())
}

// λ₋ from d = x − 1 = u/(2α²Φ̃), without forming x² − 1
fn minus_root_c(d: Complex64) -> Complex64 {
    1.0 / (1.0 + d + (d * (d + 2.0)).sqrt())
}

/// Everything the ladder solution needs at one u, computed once.
#[derive(Debug, Clone, Copy)]
struct Shared {
    s: Complex64,
    su: Complex64,
    phi: Complex64,
    f: [Complex64; 2],
    a2: [f64; 2],
    omega: f64,
}

impl Shared {
    fn new(p: &ModelParams, k: &MemoryKernel, s: Complex64) -> Self {
        let phi = k.laplace_c(s);
        let a2 = [p.alpha_l * p.alpha_l, p.alpha_r * p.alpha_r];
        let f = [(s + 4.0 * a2[0] * phi).sqrt(), (s + 4.0 * a2[1] * phi).sqrt()];
        Shared { s, su: s.sqrt(), phi, f, a2, omega: p.omega }
    }

    fn swapped(&self) -> Self {
        Shared { f: [self.f[1], self.f[0]], a2: [self.a2[1], self.a2[0]], ..*self }
    }

    fn d2(&self) -> Complex64 {
        let (u, su, phi) = (self.s, self.su, self.phi);
        let (fl, fr) = (self.f[0], self.f[1]);
        let (al, ar) = (self.a2[0] * phi, self.a2[1] * phi);
        su * (su + fl) * (2.0 * u * (su + fr) + ar * (5.0 * su + fr))
            + al * (su * (5.0 * su + fl) * (su + fr) + 2.0 * ar * (6.0 * su + fl + fr))
    }

    fn left_factor(&self) -> Complex64 {
        self.s + 2.0 * self.a2[0] * self.phi + self.su * self.f[0]
    }

    // p̃^c·(u² + 4Ω²)
    fn coherence_reg(&self) -> Complex64 {
        let (u, su, fr) = (self.s, self.su, self.f[1]);
        let ar = self.a2[1] * self.phi;
        -4.0 * self.omega * self.left_factor() * (u * su + u * fr + ar * (3.0 * su + fr)) / self.d2()
    }

    // p̃_1L·(u² + 4Ω²)
    fn ground_l_reg(&self) -> Complex64 {
        let (u, su, fr) = (self.s, self.su, self.f[1]);
        let ar = self.a2[1] * self.phi;
        let w2 = self.omega * self.omega;
        self.left_factor() * (2.0 * su * (u * u + 2.0 * w2) * (su + fr) + ar * (8.0 * w2 + 5.0 * u * u + u * su * fr))
            / (su * self.d2())
    }

    // The exchanged formula describes preparation in 1R; subtracting u/(u²+4Ω²)
    // gives the 1R population for preparation in 1L.
    fn ground_r_reg(&self) -> Complex64 {
        self.swapped().ground_l_reg() - self.s
    }

    fn pole_factor(&self) -> Complex64 {
        self.s * self.s + 4.0 * self.omega * self.omega
    }

    fn reg(&self, obs: Observable) -> Complex64 {
        match obs {
            Observable::Coherence => self.coherence_reg(),
            Observable::GroundL => self.ground_l_reg(),
            Observable::GroundR => self.ground_r_reg(),
            // P̃_L = 1/u + Ω p̃^c/u
            Observable::WholeL => (self.pole_factor() + self.omega * self.coherence_reg()) / self.s,
            Observable::WholeR => -self.omega * self.coherence_reg() / self.s,
        }
    }

    fn lambda_minus(&self, i: usize) -> Complex64 {
        minus_root_c(self.s / (2.0 * self.a2[i] * self.phi))
    }
}

fn check_u(u: f64) -> Result<()> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("Laplace variable must be finite and > 0, got {u}")));
    }
    Ok(())
}

fn finite(v: Complex64, what: &str, u: f64) -> Result<f64> {
    if v.re.is_finite() {
        Ok(v.re)
    } else {
        Err(Error::Singular(format!("{what} at u = {u}")))
    }
}

fn shared(p: &ModelParams, k: &MemoryKernel, u: f64) -> Result<Shared> {
    check_u(u)?;
    let sh = Shared::new(p, k, Complex64::new(u, 0.0));
    if !(sh.phi.re > 0.0) {
        return Err(Error::Domain(format!("kernel transform must be > 0, got {} at u = {u}", sh.phi.re)));
    }
    Ok(sh)
}

/// λ₋^{(s)}(u), the decay ratio of the excited populations along the ladder.
pub fn lambda_minus(p: &ModelParams, k: &MemoryKernel, s: Parity, u: f64) -> Result<f64> {
    let sh = shared(p, k, u)?;
    Ok(sh.lambda_minus(s.idx()).re)
}

/// p̃^c(u).
pub fn coherence_laplace(p: &ModelParams, k: &MemoryKernel, u: f64) -> Result<f64> {
    let sh = shared(p, k, u)?;
    finite(sh.coherence_reg() / sh.pole_factor(), "coherence denominator", u)
}

/// p̃_{1s}(u) for the system prepared in 1L.
pub fn ground_population_laplace(p: &ModelParams, k: &MemoryKernel, s: Parity, u: f64) -> Result<f64> {
    let sh = shared(p, k, u)?;
    let obs = match s {
        Parity::L => Observable::GroundL,
        Parity::R => Observable::GroundR,
    };
    finite(sh.reg(obs) / sh.pole_factor(), "ground population denominator", u)
}

/// B_s(u), so that p̃_{n_s}(u) = B_s λ₋ⁿ.
pub fn excited_amplitude(p: &ModelParams, k: &MemoryKernel, s: Parity, u: f64) -> Result<f64> {
    let sh = shared(p, k, u)?;
    let i = s.idx();
    let lam = sh.lambda_minus(i);
    let grounds = (sh.ground_l_reg() + sh.ground_r_reg()) / sh.pole_factor();
    let a2phi = sh.a2[i] * sh.phi;
    let b = -a2phi * grounds / (2.0 * lam * lam * (a2phi * (lam - 2.0) - sh.s));
    finite(b, "excited amplitude denominator", u)
}

/// p̃_{n_s}(u) for n ≥ 2.
pub fn excited_population_laplace(p: &ModelParams, k: &MemoryKernel, s: Parity, n: u32, u: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("excited levels start at n = 2, got {n}")));
    }
    let b = excited_amplitude(p, k, s, u)?;
    Ok(b * lambda_minus(p, k, s, u)?.powi(n as i32))
}

/// Σ_{n≥2} p̃_{n_s}(u) in closed form.
pub fn excited_total_laplace(p: &ModelParams, k: &MemoryKernel, s: Parity, u: f64) -> Result<f64> {
    let b = excited_amplitude(p, k, s, u)?;
    let lam = lambda_minus(p, k, s, u)?;
    Ok(b * lam * lam / (1.0 - lam))
}

/// Long-time whole-level populations α_s/(α_L + α_R).
pub fn stationary_populations(p: &ModelParams) -> (f64, f64) {
    let sum = p.alpha_l + p.alpha_r;
    (p.alpha_l / sum, p.alpha_r / sum)
}

/// The observable's transform at complex s, with or without the 2Ω pole pair.
pub fn observable_laplace_c(p: &ModelParams, k: &MemoryKernel, obs: Observable, s: Complex64, mode: SeriesMode) -> Complex64 {
    let sh = Shared::new(p, k, s);
    let g = sh.reg(obs) / sh.pole_factor();
    match mode {
        SeriesMode::Full => g,
        SeriesMode::Secular => {
            let (r, u0) = pole_residue(p, k, obs);
            g - r / (s - u0) - r.conj() / (s - u0.conj())
        }
    }
}

/// Residue of the observable at u₀ = 2iΩ, and u₀.
pub fn pole_residue(p: &ModelParams, k: &MemoryKernel, obs: Observable) -> (Complex64, Complex64) {
    let u0 = Complex64::new(0.0, 2.0 * p.omega);
    let sh = Shared::new(p, k, u0);
    (sh.reg(obs) / (2.0 * u0), u0)
}

/// Time-domain series of an observable on a strictly increasing positive grid.
pub fn observable_series(
    p: &ModelParams,
    k: &MemoryKernel,
    obs: Observable,
    t_grid: &[f64],
    cfg: &InversionConfig,
    mode: SeriesMode,
) -> Result<Vec<f64>> {
    p.validate()?;
    cfg.validate()?;
    if t_grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be positive and strictly increasing".into()));
    }
    let (r, u0) = pole_residue(p, k, obs);
    let secular = |s: Complex64| observable_laplace_c(p, k, obs, s, SeriesMode::Secular);
    t_grid
        .par_iter()
        .map(|&t| {
            let v = match cfg.method {
                InversionMethod::Talbot => invert(secular, t, cfg),
                InversionMethod::GaverStehfest => invert_real(|u| secular(Complex64::new(u, 0.0)).re, t, cfg),
            }
            .map_err(|e| Error::AtTime { t, source: Box::new(e) })?;
            Ok(match mode {
                SeriesMode::Secular => v,
                SeriesMode::Full => v + 2.0 * (r * (u0 * t).exp()).re,
            })
        })
        .collect()
}
