//! Renewal-process Monte Carlo of the full density matrix: free evolution
//! under H between collisions, Λ = I + L_c at each collision.
//!
//! Basis order is 1L..NL, 1R..NR. Trajectories are propagated in the
//! eigenbasis of H, where free evolution is a phase per matrix element.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::collision_models::{mean_time, sample_waiting_time, CollisionModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoleculeSpec {
    pub n_levels: usize,
    pub ground_energy: f64,
    pub level_spacing: f64,
    /// Shift of the R ladder (n ≥ 2) in units of the level spacing.
    pub parity_offset: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub omega: f64,
}

impl MoleculeSpec {
    pub fn new(n_levels: usize, level_spacing: f64, alpha_l: f64, alpha_r: f64, omega: f64) -> Result<Self> {
        let s = MoleculeSpec {
            n_levels,
            ground_energy: 0.0,
            level_spacing,
            parity_offset: FRAC_1_SQRT_2,
            alpha_l,
            alpha_r,
            omega,
        };
        s.validate().map(|_| s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 2 {
            return Err(Error::InvalidParameter(format!("n_levels must be >= 2, got {}", self.n_levels)));
        }
        for (name, v) in [("level_spacing", self.level_spacing), ("alpha_L", self.alpha_l), ("alpha_R", self.alpha_r), ("omega", self.omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !self.parity_offset.is_finite() || !self.ground_energy.is_finite() {
            return Err(Error::InvalidParameter("parity_offset and ground_energy must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_levels
    }

    fn l(&self, n: usize) -> usize {
        n - 1
    }

    fn r(&self, n: usize) -> usize {
        self.n_levels + n - 1
    }

    fn energy(&self, parity_r: bool, n: usize) -> f64 {
        let shift = if parity_r { self.parity_offset } else { 0.0 };
        self.ground_energy + (n as f64 - 1.0 + shift) * self.level_spacing
    }
}

/// H₀ + Ω(|1L⟩⟨1R| + |1R⟩⟨1L|), ħ = 1.
pub fn build_hamiltonian(spec: &MoleculeSpec) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(spec.dim(), spec.dim());
    h[(spec.l(1), spec.l(1))] = spec.ground_energy;
    h[(spec.r(1), spec.r(1))] = spec.ground_energy;
    for n in 2..=spec.n_levels {
        h[(spec.l(n), spec.l(n))] = spec.energy(false, n);
        h[(spec.r(n), spec.r(n))] = spec.energy(true, n);
    }
    h[(spec.l(1), spec.r(1))] = spec.omega;
    h[(spec.r(1), spec.l(1))] = spec.omega;
    h
}

/// Nearest-neighbour hopping V with amplitude α_s inside each ladder.
pub fn build_collision_operator(spec: &MoleculeSpec) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(spec.dim(), spec.dim());
    for n in 1..spec.n_levels {
        for (i, j, a) in [(spec.l(n), spec.l(n + 1), spec.alpha_l), (spec.r(n), spec.r(n + 1), spec.alpha_r)] {
            v[(i, j)] = a;
            v[(j, i)] = a;
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub DMatrix<Complex64>);

impl DensityMatrix {
    pub fn pure(dim: usize, k: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Whether ρ + εI admits a Cholesky factorization. Done on the real
    /// embedding [[A, −B], [B, A]] of ρ = A + iB, since the complex
    /// factorization does not reject negative pivots.
    pub fn is_positive(&self, eps: f64) -> bool {
        let d = self.0.nrows();
        let m = DMatrix::<f64>::from_fn(2 * d, 2 * d, |i, j| {
            let z = self.0[(i % d, j % d)];
            let shift = if i == j { eps } else { 0.0 };
            shift
                + match (i < d, j < d) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
        });
        m.cholesky().is_some()
    }
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// ρ − i[V,ρ] − ½[V,[V,ρ]] in whatever basis ρ and V share.
pub fn apply_collision(rho: &DensityMatrix, v: &DMatrix<Complex64>) -> DensityMatrix {
    let r = &rho.0;
    let a = v * r;
    let b = r * v;
    let i = Complex64::new(0.0, 1.0);
    let out = r - (&a - &b) * i - (v * &a - (&a * v) * Complex64::new(2.0, 0.0) + &b * v) * Complex64::new(0.5, 0.0);
    // restore exact Hermiticity lost to rounding
    DensityMatrix((&out + out.adjoint()) * Complex64::new(0.5, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub ratio: f64,
    pub tau_phi: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// ΔE / max(Ω, 1/τ_Φ), with τ_Φ the mean waiting time or, for the heavy
/// tails, the model's time scale.
pub fn validity_check(spec: &MoleculeSpec, model: &CollisionModel, threshold: f64) -> ValidityReport {
    let mean = mean_time(model);
    let tau_phi = if mean.is_finite() {
        mean
    } else {
        match *model {
            CollisionModel::Fractional { r, a } => a.powf(-2.0 / (1.0 - 2.0 * r)),
            CollisionModel::PowerLaw { t_scale, .. } => t_scale,
            _ => mean,
        }
    };
    let ratio = spec.level_spacing / spec.omega.max(1.0 / tau_phi);
    ValidityReport { ratio, tau_phi, threshold, pass: ratio >= threshold }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_traj: usize,
    pub seed: u64,
    /// Positivity tolerance ε_pos for the Cholesky test of ρ + εI.
    pub eps_pos: f64,
    /// Frobenius norm beyond which a trajectory is stopped as diverged.
    pub divergence_norm: f64,
    /// Trajectories per reduction chunk; fixes the summation order.
    pub chunk: usize,
}

impl McConfig {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        McConfig { n_traj, seed, eps_pos: 1e-9, divergence_norm: 1e6, chunk: 64 }
    }
}

/// Per-grid mean and standard error.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stat {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub t: Vec<f64>,
    pub p_l: Stat,
    pub p_r: Stat,
    pub p_c: Stat,
    pub p_1l: Stat,
    pub p_1r: Stat,
    /// Trajectories that entered the averages.
    pub n_used: usize,
    pub diverged: usize,
    /// Trajectories with at least one positivity violation.
    pub positivity_flagged: usize,
    pub collisions: u64,
    pub max_trace_error: f64,
}

impl EnsembleResult {
    pub fn flagged(&self) -> bool {
        self.diverged > 0 || self.positivity_flagged > 0
    }
}

const NOBS: usize = 5;

struct Propagator {
    energies: Vec<f64>,
    v: DMatrix<Complex64>,
    n: usize,
}

impl Propagator {
    // H is diagonal apart from the ground block, whose eigenvectors are
    // (|1L⟩ ± |1R⟩)/√2; those take the 1L and 1R slots respectively.
    fn new(spec: &MoleculeSpec) -> Self {
        let d = spec.dim();
        let h = build_hamiltonian(spec);
        let mut w = DMatrix::<f64>::identity(d, d);
        let (l1, r1) = (spec.l(1), spec.r(1));
        w[(l1, l1)] = FRAC_1_SQRT_2;
        w[(r1, l1)] = FRAC_1_SQRT_2;
        w[(l1, r1)] = FRAC_1_SQRT_2;
        w[(r1, r1)] = -FRAC_1_SQRT_2;
        let he = w.transpose() * &h * &w;
        let energies = (0..d).map(|i| he[(i, i)]).collect();
        let v = complexify(&(w.transpose() * build_collision_operator(spec) * &w));
        Propagator { energies, v, n: spec.n_levels }
    }

    fn initial(&self) -> DMatrix<Complex64> {
        // |1L⟩ = (|+⟩ + |−⟩)/√2
        let d = 2 * self.n;
        let mut m = DMatrix::zeros(d, d);
        for i in [0, self.n] {
            for j in [0, self.n] {
                m[(i, j)] = Complex64::new(0.5, 0.0);
            }
        }
        m
    }

    fn evolve(&self, rho: &DMatrix<Complex64>, tau: f64) -> DMatrix<Complex64> {
        let ph: Vec<Complex64> = self.energies.iter().map(|e| Complex64::from_polar(1.0, -e * tau)).collect();
        DMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| rho[(i, j)] * ph[i] * ph[j].conj())
    }

    // [P_L, P_R, p_c, p_1L, p_1R] from an eigenbasis ρ
    fn observe(&self, rho: &DMatrix<Complex64>) -> [f64; NOBS] {
        let n = self.n;
        let (pp, mm, pm) = (rho[(0, 0)].re, rho[(n, n)].re, rho[(0, n)]);
        let p1l = 0.5 * (pp + mm) + pm.re;
        let p1r = 0.5 * (pp + mm) - pm.re;
        // Im ρ_{1L1R} = −Im ρ₊₋ and p_c = −2 Im ρ_{1L1R}
        let pc = 2.0 * pm.im;
        let upper_l: f64 = (1..n).map(|k| rho[(k, k)].re).sum();
        let upper_r: f64 = (n + 1..2 * n).map(|k| rho[(k, k)].re).sum();
        [p1l + upper_l, p1r + upper_r, pc, p1l, p1r]
    }
}

struct Trajectory {
    obs: Vec<[f64; NOBS]>,
    diverged: bool,
    violated: bool,
    collisions: u64,
    trace_error: f64,
}

fn run_trajectory(prop: &Propagator, model: &CollisionModel, t_grid: &[f64], cfg: &McConfig, index: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut rho = prop.initial();
    let mut t_last = 0.0;
    let mut next = sample_waiting_time(model, &mut rng);
    let mut out = Trajectory { obs: Vec::with_capacity(t_grid.len()), diverged: false, violated: false, collisions: 0, trace_error: 0.0 };
    for &tg in t_grid {
        while next <= tg {
            rho = prop.evolve(&rho, next - t_last);
            rho = apply_collision(&DensityMatrix(rho), &prop.v).0;
            out.collisions += 1;
            t_last = next;
            next += sample_waiting_time(model, &mut rng);
            let norm = rho.norm();
            if !norm.is_finite() || norm > cfg.divergence_norm {
                out.diverged = true;
                return out;
            }
            if !out.violated && !DensityMatrix(rho.clone()).is_positive(cfg.eps_pos) {
                out.violated = true;
            }
        }
        let here = prop.evolve(&rho, tg - t_last);
        out.trace_error = out.trace_error.max((here.trace() - 1.0).norm());
        out.obs.push(prop.observe(&here));
    }
    out
}

// Per-grid running mean and sum of squared deviations, merged pairwise.
#[derive(Clone)]
struct Acc {
    mean: Vec<[f64; NOBS]>,
    m2: Vec<[f64; NOBS]>,
    used: usize,
    diverged: usize,
    flagged: usize,
    collisions: u64,
    trace_error: f64,
}

impl Acc {
    fn new(len: usize) -> Self {
        Acc { mean: vec![[0.0; NOBS]; len], m2: vec![[0.0; NOBS]; len], used: 0, diverged: 0, flagged: 0, collisions: 0, trace_error: 0.0 }
    }

    fn add(&mut self, tr: Trajectory) {
        self.collisions += tr.collisions;
        if tr.violated {
            self.flagged += 1;
        }
        if tr.diverged {
            self.diverged += 1;
            return;
        }
        self.used += 1;
        let n = self.used as f64;
        self.trace_error = self.trace_error.max(tr.trace_error);
        for (k, o) in tr.obs.iter().enumerate() {
            for j in 0..NOBS {
                let d = o[j] - self.mean[k][j];
                self.mean[k][j] += d / n;
                self.m2[k][j] += d * (o[j] - self.mean[k][j]);
            }
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        let (na, nb) = (self.used as f64, other.used as f64);
        if other.used > 0 {
            let n = na + nb;
            for k in 0..self.mean.len() {
                for j in 0..NOBS {
                    let d = other.mean[k][j] - self.mean[k][j];
                    self.mean[k][j] += d * nb / n;
                    self.m2[k][j] += other.m2[k][j] + d * d * na * nb / n;
                }
            }
        }
        self.used += other.used;
        self.diverged += other.diverged;
        self.flagged += other.flagged;
        self.collisions += other.collisions;
        self.trace_error = self.trace_error.max(other.trace_error);
        self
    }
}

/// Ensemble averages of P_L, P_R, p^c, p_1L, p_1R on `t_grid`, starting in 1L.
pub fn simulate_ensemble(spec: &MoleculeSpec, model: &CollisionModel, t_grid: &[f64], cfg: &McConfig) -> Result<EnsembleResult> {
    spec.validate()?;
    model.validate()?;
    if cfg.n_traj < 1 || cfg.chunk < 1 {
        return Err(Error::InvalidParameter("n_traj and chunk must be >= 1".into()));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be nonnegative and strictly increasing".into()));
    }
    let prop = Propagator::new(spec);
    let n_chunks = cfg.n_traj.div_ceil(cfg.chunk);
    let partials: Vec<Acc> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc::new(t_grid.len());
            let end = ((c + 1) * cfg.chunk).min(cfg.n_traj);
            for i in c * cfg.chunk..end {
                acc.add(run_trajectory(&prop, model, t_grid, cfg, i as u64));
            }
            acc
        })
        .collect();
    let acc = partials.into_iter().fold(Acc::new(t_grid.len()), Acc::merge);

    let m = acc.used as f64;
    let stat = |j: usize| {
        let mut s = Stat::default();
        for k in 0..t_grid.len() {
            if acc.used == 0 {
                s.mean.push(f64::NAN);
                s.stderr.push(f64::NAN);
                continue;
            }
            let var = if acc.used > 1 { acc.m2[k][j].max(0.0) / (m - 1.0) } else { 0.0 };
            s.mean.push(acc.mean[k][j]);
            s.stderr.push((var / m).sqrt());
        }
        s
    };
    Ok(EnsembleResult {
        t: t_grid.to_vec(),
        p_l: stat(0),
        p_r: stat(1),
        p_c: stat(2),
        p_1l: stat(3),
        p_1r: stat(4),
        n_used: acc.used,
        diverged: acc.diverged,
        positivity_flagged: acc.flagged,
        collisions: acc.collisions,
        max_trace_error: acc.trace_error,
    })
}
