use chiral_relax::collision_models::CollisionModel;
use chiral_relax::mc_oracle::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

type CM = DMatrix<Complex64>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

// Level-basis H and V written out by hand, independent of the library.
fn hand_h_v(n: usize, de: f64, off: f64, al: f64, ar: f64, om: f64) -> (CM, CM) {
    let d = 2 * n;
    let mut h = CM::zeros(d, d);
    let mut v = CM::zeros(d, d);
    for k in 1..n {
        h[(k, k)] = c(k as f64 * de);
        h[(n + k, n + k)] = c((k as f64 + off) * de);
        v[(k - 1, k)] = c(al);
        v[(k, k - 1)] = c(al);
        v[(n + k - 1, n + k)] = c(ar);
        v[(n + k, n + k - 1)] = c(ar);
    }
    h[(0, n)] = c(om);
    h[(n, 0)] = c(om);
    (h, v)
}

fn comm(a: &CM, b: &CM) -> CM {
    a * b - b * a
}

fn free(h: &CM, r: &CM) -> CM {
    comm(h, r) * Complex64::new(0.0, -1.0)
}

fn lc(v: &CM, r: &CM) -> CM {
    comm(v, r) * Complex64::new(0.0, -1.0) - comm(v, &comm(v, r)) * c(0.5)
}

fn rk4<F: Fn(&[CM]) -> Vec<CM>>(f: F, y: &[CM], h: f64) -> Vec<CM> {
    let add = |y: &[CM], k: &[CM], s: f64| -> Vec<CM> { y.iter().zip(k).map(|(a, b)| a + b * c(s)).collect() };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    (0..y.len()).map(|i| &y[i] + (&k1[i] + &k2[i] * c(2.0) + &k3[i] * c(2.0) + &k4[i]) * c(h / 6.0)).collect()
}

// [P_L, p_c, p_1L] of a level-basis ρ
fn obs(n: usize, r: &CM) -> [f64; 3] {
    let pl: f64 = (0..n).map(|k| r[(k, k)].re).sum();
    [pl, -2.0 * r[(0, n)].im, r[(0, 0)].re]
}

fn oracle<F: Fn(&[CM]) -> Vec<CM>>(f: F, y0: Vec<CM>, n: usize, grid: &[f64], dt: f64) -> Vec<[f64; 3]> {
    let mut y = y0;
    let mut t = 0.0;
    let mut out = Vec::new();
    for &tg in grid {
        while t < tg - 1e-12 {
            let h = dt.min(tg - t);
            y = rk4(&f, &y, h);
            t += h;
        }
        let tot = y.iter().fold(CM::zeros(2 * n, 2 * n), |a, b| a + b);
        out.push(obs(n, &tot));
    }
    out
}

fn start(n: usize) -> CM {
    let mut r = CM::zeros(2 * n, 2 * n);
    r[(0, 0)] = c(1.0);
    r
}

fn assert_within(res: &EnsembleResult, want: &[[f64; 3]], zmax: f64) {
    for (k, w) in want.iter().enumerate() {
        for (s, wv) in [&res.p_l, &res.p_c, &res.p_1l].iter().zip(w) {
            let z = (s.mean[k] - wv) / s.stderr[k];
            assert!(s.stderr[k] > 0.0 && z.abs() < zmax, "t={} mc={} oracle={} z={z}", res.t[k], s.mean[k], wv);
        }
    }
}

#[test]
fn hamiltonian_structure() {
    let s = MoleculeSpec::new(4, 3.0, 0.4, 0.3, 0.5).unwrap();
    let h = build_hamiltonian(&s);
    assert_eq!(h, h.transpose());
    let (hh, vv) = hand_h_v(4, 3.0, std::f64::consts::FRAC_1_SQRT_2, 0.4, 0.3, 0.5);
    assert!((h.map(c) - hh).norm() < 1e-15);
    assert!((build_collision_operator(&s).map(c) - vv).norm() < 1e-15);
    // ground block eigenvalues E1 ± Ω
    let block = nalgebra::Matrix2::new(h[(0, 0)], h[(0, 4)], h[(4, 0)], h[(4, 4)]);
    let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    assert_eq!(h[(0, 0)], 0.0);
    assert!((ev[0] + 0.5).abs() < 1e-15 && (ev[1] - 0.5).abs() < 1e-15);
}

#[test]
fn collision_operator_elements() {
    let s = MoleculeSpec::new(5, 1.0, 0.3, 0.2, 0.5).unwrap();
    let v = build_collision_operator(&s);
    assert_eq!(v, v.transpose());
    assert_eq!(v[(1, 2)], 0.3); // ⟨2L|V|3L⟩
    assert_eq!(v[(6, 7)], 0.2); // ⟨2R|V|3R⟩
    assert_eq!(v[(0, 5)], 0.0);
    assert_eq!(v[(0, 2)], 0.0);
}

#[test]
fn spec_validation() {
    assert!(MoleculeSpec::new(1, 1.0, 0.3, 0.3, 0.5).is_err());
    assert!(MoleculeSpec::new(3, 0.0, 0.3, 0.3, 0.5).is_err());
    assert!(MoleculeSpec::new(3, 1.0, -0.3, 0.3, 0.5).is_err());
    assert!(MoleculeSpec::new(3, 1.0, 0.3, 0.3, f64::NAN).is_err());
    let s = MoleculeSpec::new(3, 1.0, 0.3, 0.3, 0.5).unwrap();
    let m = CollisionModel::Poisson { tau0: 1.0 };
    assert!(simulate_ensemble(&s, &m, &[1.0, 0.5], &McConfig::new(4, 0)).is_err());
    assert!(simulate_ensemble(&s, &m, &[1.0], &McConfig::new(0, 0)).is_err());
}

#[test]
fn single_collision_by_hand() {
    let s = MoleculeSpec::new(3, 1.0, 0.3, 0.3, 0.5).unwrap();
    let v = build_collision_operator(&s).map(c);
    let r = apply_collision(&DensityMatrix::pure(6, 0), &v);
    assert!((r.0[(0, 0)].re - 0.91).abs() < 1e-15);
    assert!((r.0[(1, 1)].re - 0.09).abs() < 1e-15);
    assert!(r.0[(2, 2)].norm() < 1e-15);
    assert!((r.0[(1, 0)] - Complex64::new(0.0, -0.3)).norm() < 1e-15);
    assert!((r.trace() - 1.0).norm() < 1e-15);
}

#[test]
fn strong_collision_is_not_positive() {
    let s = MoleculeSpec::new(3, 1.0, 2.0, 1.0, 0.5).unwrap();
    let v = build_collision_operator(&s).map(c);
    let r = apply_collision(&DensityMatrix::pure(6, 0), &v);
    // p_1L = 1 − α² = −3
    assert!((r.0[(0, 0)].re + 3.0).abs() < 1e-14);
    assert!(!r.is_positive(1e-9));
    assert!(DensityMatrix::pure(6, 0).is_positive(1e-9));
}

#[test]
fn rabi_without_collisions() {
    let s = MoleculeSpec::new(3, 50.0, 0.3, 0.3, 0.5).unwrap();
    let m = CollisionModel::Poisson { tau0: f64::INFINITY };
    let grid: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
    let r = simulate_ensemble(&s, &m, &grid, &McConfig::new(3, 9)).unwrap();
    assert_eq!(r.collisions, 0);
    for (k, &t) in grid.iter().enumerate() {
        assert!((r.p_1l.mean[k] - (0.5 * t).cos().powi(2)).abs() < 1e-13);
        assert!((r.p_1r.mean[k] - (0.5 * t).sin().powi(2)).abs() < 1e-13);
        assert!((r.p_c.mean[k] + t.sin()).abs() < 1e-13);
        assert!(r.p_l.stderr[k] < 1e-14);
    }
}

#[test]
fn poisson_matches_lindblad() {
    let (n, de, om, al, ar, tau0) = (4, 3.0, 0.5, 0.4, 0.3, 1.0);
    let (h, v) = hand_h_v(n, de, std::f64::consts::FRAC_1_SQRT_2, al, ar, om);
    let grid: Vec<f64> = (1..=8).map(|k| 1.25 * k as f64).collect();
    let want = oracle(|y| vec![free(&h, &y[0]) + lc(&v, &y[0]) * c(1.0 / tau0)], vec![start(n)], n, &grid, 0.005);

    let s = MoleculeSpec::new(n, de, al, ar, om).unwrap();
    let r = simulate_ensemble(&s, &CollisionModel::Poisson { tau0 }, &grid, &McConfig::new(4000, 2024)).unwrap();
    assert_eq!(r.n_used, 4000);
    assert_eq!(r.diverged, 0);
    assert!(r.max_trace_error < 1e-12);
    assert_within(&r, &want, 4.0);
}

#[test]
fn exp_kernel_matches_two_stage_oracle() {
    // A = 0.5, γ = 1.5 gives stage rates 1 and 0.5
    let (n, de, om, al, ar) = (3, 4.0, 0.5, 0.4, 0.3);
    let (l1, l2) = (1.0, 0.5);
    let (h, v) = hand_h_v(n, de, std::f64::consts::FRAC_1_SQRT_2, al, ar, om);
    let grid: Vec<f64> = (1..=6).map(|k| 1.5 * k as f64).collect();
    let rhs = |y: &[CM]| {
        let back = &y[1] + lc(&v, &y[1]);
        vec![free(&h, &y[0]) - &y[0] * c(l1) + back * c(l2), free(&h, &y[1]) + &y[0] * c(l1) - &y[1] * c(l2)]
    };
    let want = oracle(rhs, vec![start(n), CM::zeros(2 * n, 2 * n)], n, &grid, 0.005);

    let s = MoleculeSpec::new(n, de, al, ar, om).unwrap();
    let m = CollisionModel::ExpKernel { a: 0.5, gamma: 1.5 };
    let r = simulate_ensemble(&s, &m, &grid, &McConfig::new(4000, 77)).unwrap();
    assert_within(&r, &want, 4.0);
}

#[test]
fn populations_sum_to_one() {
    let s = MoleculeSpec::new(4, 2.0, 0.5, 0.4, 0.5).unwrap();
    let m = CollisionModel::PowerLaw { mu: 1.5, t_scale: 1.0 };
    let grid = [0.5, 1.0, 5.0, 20.0];
    let r = simulate_ensemble(&s, &m, &grid, &McConfig::new(200, 5)).unwrap();
    for k in 0..grid.len() {
        assert!((r.p_l.mean[k] + r.p_r.mean[k] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let s = MoleculeSpec::new(3, 2.0, 0.4, 0.3, 0.5).unwrap();
    let m = CollisionModel::Fractional { r: 0.25, a: 1.0 };
    let grid = [1.0, 2.0, 4.0, 8.0];
    let cfg = McConfig::new(300, 31);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| simulate_ensemble(&s, &m, &grid, &cfg).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(7));
    let other = simulate_ensemble(&s, &m, &grid, &McConfig::new(300, 32)).unwrap();
    assert_ne!(a.p_l.mean, other.p_l.mean);
}

#[test]
fn large_alpha_is_flagged() {
    let s = MoleculeSpec::new(6, 5.0, 2.0, 1.0, 0.5).unwrap();
    let m = CollisionModel::Poisson { tau0: 1.0 };
    let r = simulate_ensemble(&s, &m, &[5.0, 20.0], &McConfig::new(100, 3)).unwrap();
    assert!(r.flagged());
    assert!(r.positivity_flagged > 0);
}

#[test]
fn validity_examples() {
    let s = MoleculeSpec::new(6, 1e9, 0.3, 0.3, 1e3).unwrap();
    let v = validity_check(&s, &CollisionModel::Poisson { tau0: 1e-6 }, 100.0);
    assert!((v.ratio - 1e3).abs() < 1e-6);
    assert!(v.pass);

    let s = MoleculeSpec::new(6, 5.0, 0.3, 0.3, 0.5).unwrap();
    let v = validity_check(&s, &CollisionModel::Poisson { tau0: 1.0 }, 100.0);
    assert!((v.ratio - 5.0).abs() < 1e-12);
    assert!(!v.pass);

    // heavy tails fall back to the scale parameter
    let s = MoleculeSpec::new(6, 1e4, 0.3, 0.3, 1.0).unwrap();
    let v = validity_check(&s, &CollisionModel::PowerLaw { mu: 1.5, t_scale: 0.01 }, 100.0);
    assert_eq!(v.tau_phi, 0.01);
    assert!((v.ratio - 100.0).abs() < 1e-9 && v.pass);
    let v = validity_check(&s, &CollisionModel::Fractional { r: 0.25, a: 2.0 }, 100.0);
    assert!((v.tau_phi - 0.0625).abs() < 1e-15);
}

fn hermitian(d: usize) -> impl Strategy<Value = CM> {
    proptest::collection::vec(-1.0f64..1.0, 2 * d * d).prop_map(move |x| {
        let m = CM::from_fn(d, d, |i, j| Complex64::new(x[i * d + j], x[d * d + i * d + j]));
        (&m + m.adjoint()) * c(0.5)
    })
}

proptest! {
    #[test]
    fn collision_keeps_trace_and_hermiticity(r in hermitian(6), al in 0.0f64..2.0, ar in 0.0f64..2.0) {
        let s = MoleculeSpec::new(3, 1.0, al.max(1e-3), ar.max(1e-3), 0.5).unwrap();
        let v = build_collision_operator(&s).map(c);
        let rho = DensityMatrix(r);
        let out = apply_collision(&rho, &v);
        prop_assert!((out.trace() - rho.trace()).norm() < 1e-12);
        prop_assert!(out.hermiticity_error() < 1e-12);
    }
}
