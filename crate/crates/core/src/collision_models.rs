//! Collision-time statistics: densities, survival, Laplace transforms,
//! memory kernels, mean times and samplers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::special_functions::{gamma_fn, mittag_leffler, upper_gamma_tail, MLEvalConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollisionModel {
    /// Exponential waiting times with mean `tau0`; `tau0 = ∞` means no collisions.
    Poisson { tau0: f64 },
    BiExponential { pa: f64, pb: f64, da: f64, db: f64 },
    /// w(t) = (μ−1)T^{μ−1}/(t+T)^μ
    PowerLaw { mu: f64, t_scale: f64 },
    /// w(t) = a² t^{−2r} E_{1−2r,1−2r}(−a² t^{1−2r})
    Fractional { r: f64, a: f64 },
    /// Hypoexponential waiting times, kernel Φ(t) = A e^{−γt}.
    ExpKernel { a: f64, gamma: f64 },
}

fn bad(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

impl CollisionModel {
    pub fn poisson(tau0: f64) -> Result<Self> {
        let m = CollisionModel::Poisson { tau0 };
        m.validate().map(|_| m)
    }
    pub fn bi_exponential(pa: f64, pb: f64, da: f64, db: f64) -> Result<Self> {
        let m = CollisionModel::BiExponential { pa, pb, da, db };
        m.validate().map(|_| m)
    }
    pub fn power_law(mu: f64, t_scale: f64) -> Result<Self> {
        let m = CollisionModel::PowerLaw { mu, t_scale };
        m.validate().map(|_| m)
    }
    pub fn fractional(r: f64, a: f64) -> Result<Self> {
        let m = CollisionModel::Fractional { r, a };
        m.validate().map(|_| m)
    }
    pub fn exp_kernel(a: f64, gamma: f64) -> Result<Self> {
        let m = CollisionModel::ExpKernel { a, gamma };
        m.validate().map(|_| m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CollisionModel::Poisson { tau0 } => {
                if !(tau0 > 0.0) {
                    return Err(bad(format!("Poisson tau0 must be > 0, got {tau0}")));
                }
            }
            CollisionModel::BiExponential { pa, pb, da, db } => {
                if !(0.0..=1.0).contains(&pa) || !(0.0..=1.0).contains(&pb) || (pa + pb - 1.0).abs() > 1e-12 {
                    return Err(bad(format!("BiExponential needs Pa, Pb in [0,1] with Pa + Pb = 1, got {pa}, {pb}")));
                }
                if !(da > 0.0 && da.is_finite() && db > 0.0 && db.is_finite()) {
                    return Err(bad(format!("BiExponential rates must be finite and > 0, got {da}, {db}")));
                }
            }
            CollisionModel::PowerLaw { mu, t_scale } => {
                if !(mu > 1.0 && mu < 2.0) {
                    return Err(bad(format!("PowerLaw mu must lie in (1,2), got {mu}")));
                }
                if !(t_scale > 0.0 && t_scale.is_finite()) {
                    return Err(bad(format!("PowerLaw T must be finite and > 0, got {t_scale}")));
                }
            }
            CollisionModel::Fractional { r, a } => {
                if !(0.0..0.5).contains(&r) {
                    return Err(bad(format!("Fractional r must lie in [0,1/2), got {r}")));
                }
                if !(a > 0.0 && a.is_finite()) {
                    return Err(bad(format!("Fractional a_r must be finite and > 0, got {a}")));
                }
            }
            CollisionModel::ExpKernel { a, gamma } => {
                if !(a > 0.0 && a.is_finite() && gamma > 0.0 && gamma.is_finite()) {
                    return Err(bad(format!("ExpKernel A and gamma must be finite and > 0, got {a}, {gamma}")));
                }
                if !(gamma * gamma > 4.0 * a) {
                    return Err(bad(format!("ExpKernel needs gamma^2 > 4A, got gamma={gamma}, A={a}")));
                }
            }
        }
        Ok(())
    }

    /// Degenerate parameterizations folded onto Poisson.
    pub(crate) fn reduced(&self) -> CollisionModel {
        match *self {
            CollisionModel::BiExponential { pb, da, .. } if pb == 0.0 => CollisionModel::Poisson { tau0: 1.0 / da },
            CollisionModel::BiExponential { pa, db, .. } if pa == 0.0 => CollisionModel::Poisson { tau0: 1.0 / db },
            m => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CollisionModel::Poisson { .. } => "poisson",
            CollisionModel::BiExponential { .. } => "bi_exponential",
            CollisionModel::PowerLaw { .. } => "power_law",
            CollisionModel::Fractional { .. } => "fractional",
            CollisionModel::ExpKernel { .. } => "exp_kernel",
        }
    }

    fn exp_kernel_rates(a: f64, gamma: f64) -> (f64, f64) {
        let d = (gamma * gamma - 4.0 * a).sqrt();
        let l1 = 0.5 * (gamma + d);
        // λ₁λ₂ = A avoids cancellation in the small root
        (l1, a / l1)
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Waiting-time density w(t).
pub fn pdf(model: &CollisionModel, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(match model.reduced() {
        CollisionModel::Poisson { tau0 } => {
            if tau0.is_infinite() {
                0.0
            } else {
                (-t / tau0).exp() / tau0
            }
        }
        CollisionModel::BiExponential { pa, pb, da, db } => pa * da * (-da * t).exp() + pb * db * (-db * t).exp(),
        CollisionModel::PowerLaw { mu, t_scale } => (mu - 1.0) * t_scale.powf(mu - 1.0) / (t + t_scale).powf(mu),
        CollisionModel::Fractional { r, a } => {
            let a2 = a * a;
            if r == 0.0 {
                a2 * (-a2 * t).exp()
            } else if t == 0.0 {
                f64::INFINITY
            } else {
                let nu = 1.0 - 2.0 * r;
                a2 * t.powf(-2.0 * r) * mittag_leffler(nu, nu, -a2 * t.powf(nu), &MLEvalConfig::default())?
            }
        }
        CollisionModel::ExpKernel { a, gamma } => {
            let (l1, l2) = CollisionModel::exp_kernel_rates(a, gamma);
            a / (l1 - l2) * ((-l2 * t).exp() - (-l1 * t).exp())
        }
    })
}

/// Survival P₀(t) = 1 − ∫₀ᵗ w.
pub fn survival(model: &CollisionModel, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(match model.reduced() {
        CollisionModel::Poisson { tau0 } => (-t / tau0).exp(),
        CollisionModel::BiExponential { pa, pb, da, db } => pa * (-da * t).exp() + pb * (-db * t).exp(),
        CollisionModel::PowerLaw { mu, t_scale } => (t_scale / (t + t_scale)).powf(mu - 1.0),
        CollisionModel::Fractional { r, a } => {
            let a2 = a * a;
            if r == 0.0 {
                (-a2 * t).exp()
            } else {
                let nu = 1.0 - 2.0 * r;
                mittag_leffler(nu, 1.0, -a2 * t.powf(nu), &MLEvalConfig::default())?
            }
        }
        CollisionModel::ExpKernel { a, gamma } => {
            let (l1, l2) = CollisionModel::exp_kernel_rates(a, gamma);
            (l1 * (-l2 * t).exp() - l2 * (-l1 * t).exp()) / (l1 - l2)
        }
    })
}

/// w̃(u) on the real axis.
pub fn laplace_pdf(model: &CollisionModel, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("laplace_pdf needs u > 0, got {u}")));
    }
    Ok(laplace_pdf_c(model, Complex64::new(u, 0.0)).re)
}

/// w̃(s) for complex s off the negative real axis.
pub fn laplace_pdf_c(model: &CollisionModel, s: Complex64) -> Complex64 {
    match model.reduced() {
        CollisionModel::Poisson { tau0 } => 1.0 / (1.0 + s * tau0),
        CollisionModel::BiExponential { pa, pb, da, db } => pa * da / (s + da) + pb * db / (s + db),
        CollisionModel::PowerLaw { mu, t_scale } => {
            let z = s * t_scale;
            let g = upper_gamma_tail(2.0 - mu, z);
            g / (z + g)
        }
        CollisionModel::Fractional { r, a } => {
            let a2 = a * a;
            a2 / (s.powf(1.0 - 2.0 * r) + a2)
        }
        CollisionModel::ExpKernel { a, gamma } => a / (s * s + gamma * s + a),
    }
}

/// Integrated kernel K₁(t) = ∫₀ᵗ Φ (δ-part included), in the form the
/// time-domain solver consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegratedKernel {
    /// c₀ + Σ cᵢ e^{−λᵢ t}
    ExpSum { constant: f64, terms: Vec<(f64, f64)> },
    /// c·t^p, p ∈ (−1, 0]
    Power { coef: f64, exponent: f64 },
    /// No closed form; obtained by inverting Φ̃(u)/u.
    Numeric,
}

/// Memory kernel Φ split into a δ(t) weight, an optional closed smooth part
/// and the Laplace-space evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryKernel {
    pub model: CollisionModel,
    pub delta_weight: f64,
}

pub fn kernel(model: &CollisionModel) -> MemoryKernel {
    let delta_weight = match model.reduced() {
        CollisionModel::Poisson { tau0 } => 1.0 / tau0,
        CollisionModel::BiExponential { pa, pb, da, db } => da * pa + db * pb,
        CollisionModel::PowerLaw { mu, t_scale } => (mu - 1.0) / t_scale,
        CollisionModel::Fractional { r, a } => {
            if r == 0.0 {
                a * a
            } else {
                0.0
            }
        }
        CollisionModel::ExpKernel { .. } => 0.0,
    };
    MemoryKernel { model: *model, delta_weight }
}

impl MemoryKernel {
    /// Φ̃(u) for real u > 0.
    pub fn laplace(&self, u: f64) -> f64 {
        self.laplace_c(Complex64::new(u, 0.0)).re
    }

    /// Φ̃(s) = s w̃/(1 − w̃), evaluated in closed form per model.
    pub fn laplace_c(&self, s: Complex64) -> Complex64 {
        match self.model.reduced() {
            CollisionModel::Poisson { tau0 } => Complex64::new(1.0 / tau0, 0.0),
            CollisionModel::BiExponential { pa, pb, da, db } => {
                let (a, b, d) = (da * db, da * pa + db * pb, da * pb + db * pa);
                (a + s * b) / (d + s)
            }
            CollisionModel::PowerLaw { mu, t_scale } => upper_gamma_tail(2.0 - mu, s * t_scale) / t_scale,
            CollisionModel::Fractional { r, a } => {
                if r == 0.0 {
                    Complex64::new(a * a, 0.0)
                } else {
                    a * a * s.powf(2.0 * r)
                }
            }
            CollisionModel::ExpKernel { a, gamma } => a / (gamma + s),
        }
    }

    /// Smooth part of Φ(t), where it has an elementary form.
    pub fn smooth(&self, t: f64) -> Option<f64> {
        match self.model.reduced() {
            CollisionModel::BiExponential { pa, pb, da, db } => {
                let (a, b, d) = (da * db, da * pa + db * pb, da * pb + db * pa);
                Some((a - b * d) * (-d * t).exp())
            }
            CollisionModel::ExpKernel { a, gamma } => Some(a * (-gamma * t).exp()),
            _ => None,
        }
    }

    pub fn integrated(&self) -> IntegratedKernel {
        match self.model.reduced() {
            CollisionModel::Poisson { tau0 } => IntegratedKernel::ExpSum { constant: 1.0 / tau0, terms: vec![] },
            CollisionModel::BiExponential { pa, pb, da, db } => {
                let (a, b, d) = (da * db, da * pa + db * pb, da * pb + db * pa);
                IntegratedKernel::ExpSum { constant: a / d, terms: vec![(-(a - b * d) / d, d)] }
            }
            CollisionModel::ExpKernel { a, gamma } => {
                IntegratedKernel::ExpSum { constant: a / gamma, terms: vec![(-a / gamma, gamma)] }
            }
            CollisionModel::Fractional { r, a } => {
                if r == 0.0 {
                    IntegratedKernel::ExpSum { constant: a * a, terms: vec![] }
                } else {
                    let g = gamma_fn(1.0 - 2.0 * r).expect("1-2r lies in (0,1]");
                    IntegratedKernel::Power { coef: a * a / g, exponent: -2.0 * r }
                }
            }
            CollisionModel::PowerLaw { .. } => IntegratedKernel::Numeric,
        }
    }
}

/// Mean waiting time; `f64::INFINITY` for the heavy-tailed models.
pub fn mean_time(model: &CollisionModel) -> f64 {
    match model.reduced() {
        CollisionModel::Poisson { tau0 } => tau0,
        CollisionModel::BiExponential { pa, pb, da, db } => (pa * db + pb * da) / (da * db),
        CollisionModel::PowerLaw { .. } => f64::INFINITY,
        CollisionModel::Fractional { r, a } => {
            if r == 0.0 {
                1.0 / (a * a)
            } else {
                f64::INFINITY
            }
        }
        CollisionModel::ExpKernel { a, gamma } => gamma / a,
    }
}

fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    -u.ln() / rate
}

/// One waiting time drawn from the model.
pub fn sample_waiting_time<R: Rng + ?Sized>(model: &CollisionModel, rng: &mut R) -> f64 {
    match model.reduced() {
        CollisionModel::Poisson { tau0 } => exp_sample(1.0 / tau0, rng),
        CollisionModel::BiExponential { pa, da, db, .. } => {
            let pick: f64 = rng.gen();
            if pick < pa {
                exp_sample(da, rng)
            } else {
                exp_sample(db, rng)
            }
        }
        CollisionModel::PowerLaw { mu, t_scale } => {
            let xi: f64 = rng.gen();
            t_scale * ((1.0 - xi).powf(-1.0 / (mu - 1.0)) - 1.0)
        }
        CollisionModel::Fractional { r, a } => {
            if r == 0.0 {
                return exp_sample(a * a, rng);
            }
            // Kozubowski-Rachev representation of the Mittag-Leffler law
            let nu = 1.0 - 2.0 * r;
            let scale = a.powf(-2.0 / nu);
            let u: f64 = 1.0 - rng.gen::<f64>();
            let v: f64 = rng.gen();
            let c = ((nu * PI).sin() / (nu * PI * v).tan() - (nu * PI).cos()).max(0.0);
            -scale * u.ln() * c.powf(1.0 / nu)
        }
        CollisionModel::ExpKernel { a, gamma } => {
            let (l1, l2) = CollisionModel::exp_kernel_rates(a, gamma);
            exp_sample(l1, rng) + exp_sample(l2, rng)
        }
    }
}
