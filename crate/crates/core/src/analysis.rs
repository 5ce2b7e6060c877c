//! Long-time inverse power laws, their onset time scales, log-log fitting of
//! computed series, and the sweep comparator for relaxation speed.

use crate::collision_models::CollisionModel;
use crate::error::{Error, Result};
use crate::reduced_dynamics::{ModelParams, Observable};
use crate::special_functions::gamma_fn;

/// offset + prefactor · (t / time_unit)^exponent, valid for t ≫ timescale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticLaw {
    pub observable: Observable,
    pub offset: f64,
    pub prefactor: f64,
    pub exponent: f64,
    pub time_unit: f64,
    pub timescale: f64,
}

impl AsymptoticLaw {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.prefactor * (t / self.time_unit).powf(self.exponent)
    }

    /// |value − offset| at t.
    pub fn deviation(&self, t: f64) -> f64 {
        (self.prefactor * (t / self.time_unit).powf(self.exponent)).abs()
    }
}

// Finite-mean kernels collapse onto one law with T = 1/Φ̃(0).
fn finite_mean_time(model: &CollisionModel) -> Option<f64> {
    match model.reduced() {
        CollisionModel::Poisson { tau0 } if tau0.is_finite() => Some(tau0),
        CollisionModel::ExpKernel { a, gamma } => Some(gamma / a),
        CollisionModel::BiExponential { pa, pb, da, db } => Some((pa * db + pb * da) / (da * db)),
        _ => None,
    }
}

pub fn predict_asymptote(p: &ModelParams, model: &CollisionModel, obs: Observable) -> Result<AsymptoticLaw> {
    p.validate()?;
    model.validate()?;
    let (al, ar, om) = (p.alpha_l, p.alpha_r, p.omega);
    let sum2 = (al + ar) * (al + ar);
    let d = ar - al;

    // (population prefactor, exponent, unit); the coherence law is its
    // derivative over Ω
    let (pop, exponent, unit) = match model.reduced() {
        CollisionModel::Fractional { r, a } => (d / (2.0 * a * sum2 * gamma_fn(r + 0.5)?), r - 0.5, 1.0),
        CollisionModel::PowerLaw { mu, t_scale } => {
            (d * gamma_fn(2.0 - mu)?.sqrt() / (2.0 * sum2 * gamma_fn((3.0 - mu) / 2.0)?), (1.0 - mu) / 2.0, t_scale)
        }
        m => match finite_mean_time(&m) {
            Some(t) => (d / (2.0 * sum2 * gamma_fn(0.5)?), -0.5, t),
            None => return Err(Error::Unsupported(format!("no long-time law for {} without collisions", m.name()))),
        },
    };
    let timescale = timescale(p, model)?;
    let (off_l, off_r) = (al / (al + ar), ar / (al + ar));
    let law = |offset, prefactor, exponent| AsymptoticLaw { observable: obs, offset, prefactor, exponent, time_unit: unit, timescale };
    Ok(match obs {
        Observable::WholeL => law(off_l, pop, exponent),
        Observable::WholeR => law(off_r, -pop, exponent),
        Observable::Coherence => law(0.0, pop * exponent / (om * unit), exponent - 1.0),
        Observable::GroundL | Observable::GroundR => {
            return Err(Error::Unsupported(format!("no long-time law for {}", obs.name())));
        }
    })
}

fn poly_r(a: f64, al: f64, ar: f64, om: f64) -> f64 {
    let o2 = 1.0 + 4.0 * om * om;
    let x = a * ar;
    let tail = 2.0 + x * (4.0 + x * (9.0 + 2.0 * x * (5.0 + 2.0 * x)));
    let num = 4.0 * a.powi(4) * al.powi(4) * (o2 + 2.0 * x * (o2 + 2.0 * x * (o2 + x)))
        + 2.0 * a.powi(3) * al.powi(3) * (5.0 * o2 + 2.0 * x * (5.0 * o2 + x * (11.0 * o2 + 4.0 * x * (3.0 * o2 + x))))
        + o2 * tail
        + 2.0 * a * o2 * al * tail
        + a * a * o2 * al * al * (9.0 + 2.0 * x * (9.0 + 2.0 * x * (10.0 + x * (11.0 + 4.0 * x))));
    num / (64.0 * a.powi(7) * om * om * al.powi(3) * ar.powi(3) * (al + ar))
}

fn tau_p(t0: f64, al: f64, ar: f64, om: f64) -> f64 {
    let s = t0.sqrt();
    let inner = 16.0 * al * al * ar * ar * (al * al + 3.0 * al * ar + ar * ar)
        + 4.0 * al * ar * s * (2.0 * (al.powi(3) + ar.powi(3)) + 11.0 * al * ar * (al + ar))
        + 4.0 * t0 * (9.0 * (al * al + ar * ar) + 8.0 * al * ar)
        + 4.0 * t0.powf(2.5) * (al + ar)
        + 2.0 * t0.powi(3);
    let b = 1.0 + (1.0 + 4.0 * om * om) * s / (16.0 * (al * ar).powi(3) * (al + ar)) * inner;
    b * b / (16.0 * om.powi(4))
}

fn tau_gamma(t: f64, al: f64, ar: f64, om: f64) -> f64 {
    let c3 = (al * ar).powi(3);
    let inner = t.sqrt() * (1.0 / al + 1.0 / ar + 1.0 / (al + ar))
        + t / 2.0 * (1.0 / (al * al) + 1.0 / (ar * ar) + 9.0 / (2.0 * al * ar))
        + t.powf(1.5) * (al.powi(4) + 5.0 * al.powi(3) * ar + 10.0 * al * al * ar * ar + 5.0 * al * ar.powi(3) + ar.powi(4))
            / (4.0 * c3 * (al + ar))
        + t * t * (5.0 * al * al + 4.0 * al * ar + 5.0 * ar * ar) / (8.0 * c3)
        + t.powf(2.5) * (9.0 * al * al + 8.0 * al * ar + 9.0 * ar * ar) / (16.0 * c3 * (al + ar))
        + t.powi(3) / (4.0 * c3)
        + t.powf(3.5) / (8.0 * c3 * (al + ar));
    let b = (1.0 + (1.0 + 4.0 * om * om) * inner) / (4.0 * om * om);
    b * b / (16.0 * om.powi(4))
}

fn tau_be(pa: f64, pb: f64, da: f64, db: f64, al: f64, ar: f64, om: f64) -> f64 {
    let a = da * db;
    let b = da * pa + db * pb;
    let t = (pa * db + pb * da) / a;
    let o2 = 1.0 + 4.0 * om * om;
    let ab = a + b;
    let br = 16.0 * a.sqrt() * (al * ar).powi(3) * (al + ar) * (ab.powi(3) + 4.0 * b * om * om * (3.0 * a * a + 3.0 * a * b + b * b))
        + 16.0 * t.sqrt() * a.sqrt() * (al * ar).powi(2) * ab * ab * o2 * (ab * (al * al + ar * ar) + 3.0 * a * al * ar)
        + 4.0 * t * a.powf(1.5) * al * ar * (al + ar) * ab * ab * o2 * (2.0 * (al + ar).powi(2) + 9.0 * al * ar)
        + 4.0 * t.powf(1.5) * a.powf(1.5) * ab * o2
            * (ab * al.powi(4) + 5.0 * a * al.powi(3) * ar + 10.0 * al * al * ar * ar * ab + 5.0 * a * al * ar.powi(3) + ab * ar.powi(4))
        + 2.0 * a.powf(2.5) * t * t * ab * (al + ar) * o2 * (5.0 * (al * al + ar * ar) + 4.0 * al * ar)
        + a.powf(2.5) * t.powf(2.5) * o2 * (9.0 * ab * (al * al + ar * ar) + 8.0 * a * al * ar)
        + 2.0 * t.powi(3) * a.powf(3.5) * o2 * (2.0 * (al + ar) + t.powf(3.5));
    br * br / (4096.0 * da.powi(7) * db.powi(7) * om.powi(4) * (al * ar).powi(6) * (al + ar).powi(2))
}

/// Onset τ of the long-time laws: max{1, 1/Ω, model term}.
pub fn timescale(p: &ModelParams, model: &CollisionModel) -> Result<f64> {
    p.validate()?;
    model.validate()?;
    let (al, ar, om) = (p.alpha_l, p.alpha_r, p.omega);
    let term = match model.reduced() {
        CollisionModel::Fractional { r, a } => poly_r(a, al, ar, om).powf(2.0 / (1.0 - 2.0 * r)),
        CollisionModel::PowerLaw { mu, t_scale } => {
            let a = t_scale.powf((1.0 - mu) / 2.0) / gamma_fn(2.0 - mu)?.sqrt();
            poly_r(a, al, ar, om).powf(2.0 / (mu - 1.0))
        }
        CollisionModel::ExpKernel { a, gamma } => tau_gamma(gamma / a, al, ar, om),
        CollisionModel::BiExponential { pa, pb, da, db } => tau_be(pa, pb, da, db, al, ar, om),
        CollisionModel::Poisson { tau0 } if tau0.is_finite() => tau_p(tau0, al, ar, om),
        CollisionModel::Poisson { .. } => f64::INFINITY,
    };
    Ok(1f64.max(1.0 / om).max(term))
}

/// Vanishing-mean-time limit of `timescale` for the finite-mean kernels.
pub fn timescale_zero_mean_limit(p: &ModelParams, model: &CollisionModel) -> Result<f64> {
    p.validate()?;
    model.validate()?;
    let om = p.omega;
    let term = match model.reduced() {
        CollisionModel::Poisson { .. } => (2.0 * om).powi(-4),
        CollisionModel::ExpKernel { .. } => (2.0 * om).powi(-8),
        CollisionModel::BiExponential { pa, pb, da, db } => {
            let (a, b) = (da * db, da * pa + db * pb);
            let x = (a + b).powi(3) + 4.0 * b * om * om * (3.0 * a * a + 3.0 * a * b + b * b);
            a * x * x / (16.0 * da.powi(7) * db.powi(7) * om.powi(4))
        }
        m => return Err(Error::Unsupported(format!("{} has no finite mean time", m.name()))),
    };
    Ok(1f64.max(1.0 / om).max(term))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    /// Signed coefficient c in y − offset ≈ c · t^exponent.
    pub prefactor: f64,
    pub exponent: f64,
    pub r_squared: f64,
}

/// Least squares of log|y − offset| against log t over `window`.
pub fn fit_power_law(t: &[f64], y: &[f64], window: (f64, f64), offset: f64) -> Result<PowerLawFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidParameter("t and y lengths differ".into()));
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Fit(format!("window must satisfy 0 < t_min < t_max, got [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(&ti, _)| ti >= lo && ti <= hi).map(|(&ti, &yi)| (ti, yi - offset)).collect();
    if pts.len() < 10 {
        return Err(Error::Fit(format!("need >= 10 points in the window, got {}", pts.len())));
    }
    let (tmin, tmax) = pts.iter().fold((f64::INFINITY, 0f64), |(a, b), &(ti, _)| (a.min(ti), b.max(ti)));
    if tmax / tmin < 10.0 * (1.0 - 1e-12) {
        return Err(Error::Fit(format!("window points span {:.3} decades, need >= 1", (tmax / tmin).log10())));
    }
    let sign = pts[0].1.signum();
    if pts.iter().any(|&(_, v)| v == 0.0 || v.signum() != sign || !v.is_finite()) {
        return Err(Error::Fit("y - offset changes sign or vanishes in the window".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|&(ti, _)| ti.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, v)| v.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerLawFit { prefactor: sign * intercept.exp(), exponent: slope, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IzeVerdict {
    /// Deviations follow the expected trend strictly.
    Monotone,
    NotMonotone,
    /// α_L = α_R: every deviation vanishes.
    NoRelaxationAsymmetry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IzeReport {
    pub parameter_name: &'static str,
    pub parameter: Vec<f64>,
    pub deviation: Vec<f64>,
    pub timescale: Vec<f64>,
    pub expected: Trend,
    pub verdict: IzeVerdict,
    /// Whether t_probe exceeds every swept model's τ.
    pub beyond_timescale: bool,
}

impl IzeReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},deviation,timescale\n", self.parameter_name);
        for i in 0..self.parameter.len() {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", self.parameter[i], self.deviation[i], self.timescale[i]));
        }
        s
    }
}

fn swept_parameter(model: &CollisionModel) -> Option<(&'static str, f64, Trend)> {
    match model.reduced() {
        CollisionModel::Fractional { a, .. } => Some(("a_r", a, Trend::Decreasing)),
        CollisionModel::PowerLaw { t_scale, .. } => Some(("T", t_scale, Trend::Increasing)),
        m => finite_mean_time(&m).map(|t| ("mean_time", t, Trend::Increasing)),
    }
}

/// Evaluates |P_L(t_probe) − P_L(∞)| from the long-time law across a sweep
/// of one model family and checks it against the expected trend in the
/// family's rate parameter (a_r for Fractional, T otherwise).
pub fn ize_comparator(p: &ModelParams, sweep: &[CollisionModel], t_probe: f64) -> Result<IzeReport> {
    if sweep.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    let family = std::mem::discriminant(&sweep[0].reduced());
    let mut rows = Vec::with_capacity(sweep.len());
    for m in sweep {
        if std::mem::discriminant(&m.reduced()) != family {
            return Err(Error::InvalidParameter("sweep mixes model families".into()));
        }
        let (name, x, trend) = swept_parameter(m).ok_or_else(|| Error::Unsupported(format!("cannot sweep {}", m.name())))?;
        let law = predict_asymptote(p, m, Observable::WholeL)?;
        rows.push((name, x, trend, law.deviation(t_probe), law.timescale));
    }
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (name, _, expected, _, _) = rows[0];
    let dev: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let verdict = if dev.iter().all(|&d| d == 0.0) {
        IzeVerdict::NoRelaxationAsymmetry
    } else if dev.windows(2).all(|w| match expected {
        Trend::Increasing => w[1] > w[0],
        Trend::Decreasing => w[1] < w[0],
    }) {
        IzeVerdict::Monotone
    } else {
        IzeVerdict::NotMonotone
    };
    Ok(IzeReport {
        parameter_name: name,
        parameter: rows.iter().map(|r| r.1).collect(),
        beyond_timescale: rows.iter().all(|r| t_probe > r.4),
        timescale: rows.iter().map(|r| r.4).collect(),
        deviation: dev,
        expected,
        verdict,
    })
}
