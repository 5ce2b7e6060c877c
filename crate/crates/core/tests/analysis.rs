use chiral_relax::analysis::*;
use chiral_relax::collision_models::{kernel, CollisionModel};
use chiral_relax::laplace_engine::InversionConfig;
use chiral_relax::reduced_dynamics::{observable_series, ModelParams, Observable, SeriesMode};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn p21() -> ModelParams {
    ModelParams::new(2.0, 1.0, 0.5).unwrap()
}

const FRAC: CollisionModel = CollisionModel::Fractional { r: 0.25, a: 1.0 };
const POW: CollisionModel = CollisionModel::PowerLaw { mu: 1.5, t_scale: 1.0 };
const EXPK: CollisionModel = CollisionModel::ExpKernel { a: 2.0, gamma: 3.0 };
const BIEXP: CollisionModel = CollisionModel::BiExponential { pa: 0.5, pb: 0.5, da: 1.0, db: 2.0 };
const POIS: CollisionModel = CollisionModel::Poisson { tau0: 1.0 };

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn fractional_population_law() {
    let law = predict_asymptote(&p21(), &FRAC, Observable::WholeL).unwrap();
    assert_eq!(law.exponent, -0.25);
    assert!((law.offset - 2.0 / 3.0).abs() < 1e-15);
    assert!(rel(law.prefactor, -1.0 / (18.0 * gamma(0.75))) < 1e-14);
    assert_eq!(law.time_unit, 1.0);
}

#[test]
fn coherence_exponents() {
    let c = |m| predict_asymptote(&p21(), &m, Observable::Coherence).unwrap();
    assert_eq!(c(POW).exponent, -1.25);
    assert_eq!(c(FRAC).exponent, -1.25);
    assert_eq!(c(EXPK).exponent, -1.5);
    assert_eq!(c(BIEXP).exponent, -1.5);
    assert_eq!(c(POIS).offset, 0.0);
}

// Closed forms written out per family, including the Γ at negative argument.
#[test]
fn coherence_prefactors() {
    let (al, ar, om) = (2.0, 1.0, 0.5);
    let s2 = 9.0;
    let c = |m| predict_asymptote(&p21(), &m, Observable::Coherence).unwrap().prefactor;
    let frac = (ar - al) / (2.0 * om * 1.0 * s2 * gamma(0.25 - 0.5));
    assert!(rel(c(FRAC), frac) < 1e-13);
    let pl = (ar - al) * gamma(0.5).sqrt() / (2.0 * om * 1.0 * s2 * gamma(-0.25));
    assert!(rel(c(POW), pl) < 1e-13);
    let tg = 1.5;
    let ek = (ar - al) / (2.0 * om * tg * s2 * gamma(-0.5));
    assert!(rel(c(EXPK), ek) < 1e-13);
    let tbe = (0.5 * 2.0 + 0.5 * 1.0) / 2.0;
    let be = (ar - al) / (2.0 * om * tbe * s2 * gamma(-0.5));
    assert!(rel(c(BIEXP), be) < 1e-13);
}

#[test]
fn whole_r_mirrors_whole_l() {
    for m in [FRAC, POW, EXPK, BIEXP, POIS] {
        let l = predict_asymptote(&p21(), &m, Observable::WholeL).unwrap();
        let r = predict_asymptote(&p21(), &m, Observable::WholeR).unwrap();
        assert_eq!(l.prefactor, -r.prefactor);
        assert!((l.offset + r.offset - 1.0).abs() < 1e-15);
        let c = predict_asymptote(&p21(), &m, Observable::Coherence).unwrap();
        assert_eq!(c.exponent, l.exponent - 1.0);
    }
}

#[test]
fn symmetric_alpha_gives_zero_prefactor() {
    let p = ModelParams::new(1.3, 1.3, 0.5).unwrap();
    for m in [FRAC, POW, EXPK, BIEXP, POIS] {
        for o in [Observable::WholeL, Observable::WholeR, Observable::Coherence] {
            assert_eq!(predict_asymptote(&p, &m, o).unwrap().prefactor, 0.0);
        }
    }
}

#[test]
fn unsupported_combinations() {
    assert!(predict_asymptote(&p21(), &POIS, Observable::GroundL).is_err());
    assert!(predict_asymptote(&p21(), &CollisionModel::Poisson { tau0: f64::INFINITY }, Observable::WholeL).is_err());
    assert!(timescale_zero_mean_limit(&p21(), &FRAC).is_err());
}

#[test]
fn timescales_frozen() {
    // independent transcription evaluated in double precision
    let cases = [
        (p21(), FRAC, 19504.421277046942),
        (p21(), POW, 249041.3724591575),
        (p21(), EXPK, 334.3697689462711),
        (p21(), POIS, 90.4480251736111),
        (p21(), BIEXP, 1438.2547644702051),
    ];
    let q = ModelParams::new(1.0, 0.5, 0.8).unwrap();
    let more = [
        (q, CollisionModel::Fractional { r: 0.1, a: 0.7 }, 487401.25248397625),
        (q, CollisionModel::PowerLaw { mu: 1.3, t_scale: 2.0 }, 56960220038868.91),
        (q, CollisionModel::ExpKernel { a: 50.0, gamma: 20.0 }, 27.450384083591004),
        (q, CollisionModel::Poisson { tau0: 0.3 }, 117.47923180382143),
        (q, CollisionModel::BiExponential { pa: 0.3, pb: 0.7, da: 2.0, db: 0.5 }, 92407.25173026815),
    ];
    for (p, m, want) in cases.iter().chain(&more) {
        let got = timescale(p, m).unwrap();
        assert!(rel(got, *want) < 1e-12, "{m:?}: {got} vs {want}");
    }
}

#[test]
fn degenerate_bi_exponential_uses_poisson_scale() {
    let be = CollisionModel::BiExponential { pa: 1.0, pb: 0.0, da: 1.0, db: 5.0 };
    assert_eq!(timescale(&p21(), &be).unwrap(), timescale(&p21(), &POIS).unwrap());
}

#[test]
fn zero_mean_limits() {
    let p = ModelParams::new(1.0, 1.0, 0.4).unwrap();
    let tp0 = timescale_zero_mean_limit(&p, &POIS).unwrap();
    assert_eq!(tp0, 2.5);
    let tg0 = timescale_zero_mean_limit(&p, &EXPK).unwrap();
    assert!((tg0 - 1.0 / 0.8f64.powi(8)).abs() < 1e-12);
    assert!((tg0 - 5.96).abs() < 0.01);

    let tp = timescale(&p, &CollisionModel::Poisson { tau0: 1e-12 }).unwrap();
    assert!((tp - tp0).abs() < 1e-6);
    // τ_γ approaches its limit like T^1/2
    let m = CollisionModel::ExpKernel { a: 1e41, gamma: 1e21 };
    let tg = timescale(&p, &m).unwrap();
    assert!((tg - tg0).abs() < 1e-6, "{tg} vs {tg0}");
    // at small Ω the limit term dominates 1/Ω; convergence is again like τ₀^1/2
    let q = ModelParams::new(1.0, 1.0, 0.2).unwrap();
    let lim = timescale_zero_mean_limit(&q, &POIS).unwrap();
    assert!((lim - 0.4f64.powi(-4)).abs() < 1e-12);
    assert!((timescale(&q, &CollisionModel::Poisson { tau0: 1e-22 }).unwrap() - lim).abs() < 1e-6);
}

#[test]
fn bi_exponential_zero_mean_limit_matches_formula() {
    // the full τ_be with its T_be terms dropped
    let p = ModelParams::new(1.0, 0.5, 0.7).unwrap();
    let m = CollisionModel::BiExponential { pa: 0.4, pb: 0.6, da: 3.0, db: 2.0 };
    let (a, b): (f64, f64) = (6.0, 3.0 * 0.4 + 2.0 * 0.6);
    let x = (a + b).powi(3) + 4.0 * b * 0.49 * (3.0 * a * a + 3.0 * a * b + b * b);
    let want = a * x * x / (16.0 * 6f64.powi(7) * 0.7f64.powi(4));
    let got = timescale_zero_mean_limit(&p, &m).unwrap();
    assert!(rel(got, want.max(1.0 / 0.7)) < 1e-13);
}

#[test]
fn fit_synthetic() {
    let t: Vec<f64> = (0..60).map(|k| 10f64.powf(k as f64 / 20.0)).collect();
    let y: Vec<f64> = t.iter().map(|t| 3.0 * t.powf(-0.5)).collect();
    let f = fit_power_law(&t, &y, (1.0, 1000.0), 0.0).unwrap();
    assert!((f.exponent + 0.5).abs() < 1e-12);
    assert!((f.prefactor - 3.0).abs() < 1e-11);
    assert!(f.r_squared > 1.0 - 1e-12);

    let y: Vec<f64> = t.iter().map(|t| 0.5 + 0.1 * t.powf(-0.25)).collect();
    let f = fit_power_law(&t, &y, (1.0, 1000.0), 0.5).unwrap();
    assert!((f.exponent + 0.25).abs() < 1e-9);

    let y: Vec<f64> = t.iter().map(|t| 0.5 - 0.1 * t.powf(-0.25)).collect();
    let f = fit_power_law(&t, &y, (1.0, 1000.0), 0.5).unwrap();
    assert!((f.prefactor + 0.1).abs() < 1e-9);
}

#[test]
fn fit_errors() {
    let t: Vec<f64> = (1..=40).map(|k| k as f64).collect();
    let y: Vec<f64> = t.iter().map(|t| (t * 0.3).sin()).collect();
    assert!(fit_power_law(&t, &y, (1.0, 40.0), 0.0).is_err());
    let y: Vec<f64> = t.iter().map(|t| 1.0 / t).collect();
    // fewer than a decade
    assert!(fit_power_law(&t, &y, (5.0, 40.0), 0.0).is_err());
    // fewer than ten points
    assert!(fit_power_law(&t, &y, (1.0, 9.0), 0.0).is_err());
    assert!(fit_power_law(&t, &y[..5], (1.0, 40.0), 0.0).is_err());
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn fitted(m: CollisionModel, obs: Observable) -> (PowerLawFit, AsymptoticLaw) {
    let p = p21();
    let law = predict_asymptote(&p, &m, obs).unwrap();
    let grid = log_grid(10.0 * law.timescale, 100.0 * law.timescale, 24);
    let y = observable_series(&p, &kernel(&m), obs, &grid, &InversionConfig::default(), SeriesMode::Secular).unwrap();
    (fit_power_law(&grid, &y, (grid[0], grid[23]), law.offset).unwrap(), law)
}

#[test]
fn fitted_exponents_match_laws() {
    for m in [FRAC, POW, EXPK, BIEXP, POIS] {
        for obs in [Observable::WholeL, Observable::Coherence] {
            let (f, law) = fitted(m, obs);
            assert!((f.exponent - law.exponent).abs() < 0.05, "{m:?} {obs:?}: {} vs {}", f.exponent, law.exponent);
            assert_eq!(f.prefactor.signum(), law.prefactor.signum(), "{m:?} {obs:?}");
        }
    }
}

#[test]
fn fitted_prefactor_matches_law() {
    for m in [FRAC, EXPK, BIEXP] {
        let (f, law) = fitted(m, Observable::WholeL);
        let implied = f.prefactor * law.time_unit.powf(f.exponent);
        // fitted exponents carry the next-order correction; compare at window centre
        let tc = 10f64.sqrt() * 10.0 * law.timescale;
        let fit_dev = implied * (tc / law.time_unit).powf(f.exponent);
        assert!(rel(fit_dev, law.prefactor * (tc / law.time_unit).powf(law.exponent)) < 0.05, "{m:?}");
    }
}

#[test]
fn ize_sweeps() {
    let p = p21();
    let sweep = |ms: Vec<CollisionModel>| {
        let tau = ms.iter().map(|m| timescale(&p, m).unwrap()).fold(0.0, f64::max);
        ize_comparator(&p, &ms, 100.0 * tau).unwrap()
    };
    let r = sweep([0.5, 1.0, 2.0].iter().map(|&a| CollisionModel::Fractional { r: 0.25, a }).collect());
    assert_eq!(r.expected, Trend::Decreasing);
    assert_eq!(r.verdict, IzeVerdict::Monotone);
    assert!(r.beyond_timescale);
    assert!(r.deviation[0] > r.deviation[1] && r.deviation[1] > r.deviation[2]);

    // T_γ = γ/A ∈ {0.5, 1, 2} at γ = 10
    let r = sweep([20.0, 10.0, 5.0].iter().map(|&a| CollisionModel::ExpKernel { a, gamma: 10.0 }).collect());
    assert_eq!(r.parameter, vec![0.5, 1.0, 2.0]);
    assert_eq!(r.verdict, IzeVerdict::Monotone);

    let r = sweep([0.5, 1.0, 2.0].iter().map(|&t| CollisionModel::PowerLaw { mu: 1.5, t_scale: t }).collect());
    assert_eq!(r.verdict, IzeVerdict::Monotone);
    assert!(r.to_csv().starts_with("T,deviation,timescale\n"));

    let r = sweep([1.0, 2.0, 4.0].iter().map(|&d| CollisionModel::BiExponential { pa: 0.5, pb: 0.5, da: d, db: 2.0 * d }).collect());
    assert_eq!(r.expected, Trend::Increasing);
    assert_eq!(r.verdict, IzeVerdict::Monotone);
}

#[test]
fn ize_symmetric_and_bad_sweeps() {
    let p = ModelParams::new(1.0, 1.0, 0.5).unwrap();
    let ms: Vec<_> = [0.5, 1.0, 2.0].iter().map(|&a| CollisionModel::Fractional { r: 0.25, a }).collect();
    assert_eq!(ize_comparator(&p, &ms, 1e9).unwrap().verdict, IzeVerdict::NoRelaxationAsymmetry);
    assert!(ize_comparator(&p, &[FRAC, POW], 1e9).is_err());
    assert!(ize_comparator(&p, &[], 1e9).is_err());
}

proptest! {
    #[test]
    fn timescale_floor(al in 0.1f64..3.0, ar in 0.1f64..3.0, om in 0.05f64..3.0, t0 in 0.01f64..10.0, r in 0.0f64..0.45, mu in 1.05f64..1.95) {
        let p = ModelParams::new(al, ar, om).unwrap();
        let floor = 1f64.max(1.0 / om);
        for m in [
            CollisionModel::Poisson { tau0: t0 },
            CollisionModel::Fractional { r, a: t0 },
            CollisionModel::PowerLaw { mu, t_scale: t0 },
            CollisionModel::ExpKernel { a: 1.0, gamma: 2.0 + t0 },
            CollisionModel::BiExponential { pa: 0.3, pb: 0.7, da: t0, db: 1.0 },
        ] {
            let tau = timescale(&p, &m).unwrap();
            prop_assert!(tau >= floor);
        }
    }
}
