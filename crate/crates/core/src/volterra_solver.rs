//! Time-domain integration of the simplified finite-ladder master equations.
//!
//! With y the state vector, the equations read y' = A y + M (Φ ∗ y), where A
//! holds the ground-level coupling and M the collision terms. The solver works
//! with the integrated form
//!
//! y(t) = y(0) + A ∫₀ᵗ y + M (K₁ ∗ y)(t),   K₁(t) = ∫₀ᵗ Φ,
//!
//! so a δ-part of Φ becomes a constant in K₁ and integrable singularities of Φ
//! stay integrable. y is taken piecewise linear on the step grid (product
//! integration, second order); for Poisson this is Crank-Nicolson.

use std::collections::VecDeque;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::collision_models::{IntegratedKernel, MemoryKernel};
use crate::error::{Error, Result};
use crate::laplace_engine::{invert, InversionConfig};
use crate::reduced_dynamics::{ModelParams, Parity};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_levels: usize,
    /// Number of past steps kept in direct convolution sums; 0 keeps all.
    /// Exponential-sum kernels use an exact recursion and ignore it.
    pub kernel_history_len: usize,
    /// Abort when a population drops below this value.
    pub negativity_floor: Option<f64>,
    /// Keep every `output_stride`-th step in the series.
    pub output_stride: usize,
    /// Where tabulated integrated kernels are cached.
    pub cache_dir: Option<PathBuf>,
    /// Inversion used to tabulate kernels without a closed form.
    pub inversion: InversionConfig,
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64, n_levels: usize) -> Self {
        SolverConfig {
            dt,
            horizon,
            n_levels,
            kernel_history_len: 0,
            negativity_floor: None,
            output_stride: 1,
            cache_dir: None,
            inversion: InversionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be finite and > 0, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be >= dt, got {}", self.horizon)));
        }
        if self.n_levels < 2 {
            return Err(Error::InvalidParameter(format!("n_levels must be >= 2, got {}", self.n_levels)));
        }
        if self.output_stride < 1 {
            return Err(Error::InvalidParameter("output_stride must be >= 1".into()));
        }
        self.inversion.validate()
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Level populations per parity (index 0 is the ground level) and the two
/// ground coherences p_c = i(ρ_{1L1R} − ρ_{1R1L}), s_c = ρ_{1L1R} + ρ_{1R1L}.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedState {
    pub pop_l: Vec<f64>,
    pub pop_r: Vec<f64>,
    pub p_c: f64,
    pub s_c: f64,
}

impl TruncatedState {
    /// All weight in the ground level of parity `s`.
    pub fn ground(n_levels: usize, s: Parity) -> Self {
        let mut st = TruncatedState { pop_l: vec![0.0; n_levels], pop_r: vec![0.0; n_levels], p_c: 0.0, s_c: 0.0 };
        match s {
            Parity::L => st.pop_l[0] = 1.0,
            Parity::R => st.pop_r[0] = 1.0,
        }
        st
    }

    pub fn n_levels(&self) -> usize {
        self.pop_l.len()
    }

    pub fn whole_l(&self) -> f64 {
        self.pop_l.iter().sum()
    }

    pub fn whole_r(&self) -> f64 {
        self.pop_r.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.whole_l() + self.whole_r()
    }

    fn to_vector(&self) -> DVector<f64> {
        let n = self.n_levels();
        let mut y = DVector::zeros(dim(n));
        y[0] = self.pop_l[0];
        y[1] = self.pop_r[0];
        y[2] = self.p_c;
        y[3] = self.s_c;
        for m in 1..n {
            y[idx(n, Parity::L, m)] = self.pop_l[m];
            y[idx(n, Parity::R, m)] = self.pop_r[m];
        }
        y
    }

    fn from_vector(y: &DVector<f64>, n: usize) -> Self {
        let mut st = TruncatedState { pop_l: vec![0.0; n], pop_r: vec![0.0; n], p_c: y[2], s_c: y[3] };
        st.pop_l[0] = y[0];
        st.pop_r[0] = y[1];
        for m in 1..n {
            st.pop_l[m] = y[idx(n, Parity::L, m)];
            st.pop_r[m] = y[idx(n, Parity::R, m)];
        }
        st
    }
}

// y = [p_1L, p_1R, p_c, s_c, L_2..L_N, R_2..R_N]
fn dim(n: usize) -> usize {
    4 + 2 * (n - 1)
}

// level m (0-based, m ≥ 1) of parity s
fn idx(n: usize, s: Parity, m: usize) -> usize {
    match s {
        Parity::L => 4 + (m - 1),
        Parity::R => 4 + (n - 1) + (m - 1),
    }
}

fn coupling_matrix(p: &ModelParams, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim(n), dim(n));
    let w = p.omega;
    a[(0, 2)] += w;
    a[(1, 2)] -= w;
    a[(2, 1)] += 2.0 * w;
    a[(2, 0)] -= 2.0 * w;
    a
}

fn collision_matrix(p: &ModelParams, n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(dim(n), dim(n));
    for (s, g) in [(Parity::L, 0), (Parity::R, 1)] {
        let k = p.alpha(s).powi(2);
        let i = |m: usize| idx(n, s, m);
        c[(g, i(1))] += k;
        c[(g, 0)] -= 0.5 * k;
        c[(g, 1)] -= 0.5 * k;
        c[(i(1), 0)] += 0.5 * k;
        c[(i(1), 1)] += 0.5 * k;
        if n == 2 {
            c[(i(1), i(1))] -= k;
            continue;
        }
        c[(i(1), i(1))] -= 2.0 * k;
        c[(i(1), i(2))] += k;
        for m in 2..n - 1 {
            c[(i(m), i(m - 1))] += k;
            c[(i(m), i(m))] -= 2.0 * k;
            c[(i(m), i(m + 1))] += k;
        }
        c[(i(n - 1), i(n - 2))] += k;
        c[(i(n - 1), i(n - 1))] -= k;
    }
    c[(3, 3)] = -0.5 * (p.alpha_l.powi(2) + p.alpha_r.powi(2));
    c
}

/// The time series of an integration, with the smallest population seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub states: Vec<TruncatedState>,
    pub min_population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WholePopulations {
    pub p_l: Vec<f64>,
    pub p_r: Vec<f64>,
    pub p_c: Vec<f64>,
}

pub fn whole_populations(series: &Series) -> WholePopulations {
    WholePopulations {
        p_l: series.states.iter().map(TruncatedState::whole_l).collect(),
        p_r: series.states.iter().map(TruncatedState::whole_r).collect(),
        p_c: series.states.iter().map(|s| s.p_c).collect(),
    }
}

// ∫₀ʰ e^{−λs}(h−s)/h ds and ∫₀ʰ e^{−λs} s/h ds
fn exp_moments(lambda: f64, h: f64) -> (f64, f64) {
    let x = lambda * h;
    if x < 1e-3 {
        let q = 0.5 - x / 6.0 + x * x / 24.0 - x.powi(3) / 120.0 + x.powi(4) / 720.0;
        let p = 0.5 - x / 3.0 + x * x / 8.0 - x.powi(3) / 30.0 + x.powi(4) / 144.0;
        (q * h, p * h)
    } else {
        let e = (-x).exp();
        ((x - 1.0 + e) / (lambda * x), (1.0 - e * (1.0 + x)) / (lambda * x))
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

// Weights (W0_m, W1_m) of c·τ^e against the hat functions on [mh, (m+1)h].
fn power_moments(coef: f64, e: f64, h: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = coef * h.powf(e + 1.0);
    let mut w0 = Vec::with_capacity(count);
    let mut w1 = Vec::with_capacity(count);
    for m in 0..count {
        if m == 0 {
            w0.push(scale * (1.0 / (e + 1.0) - 1.0 / (e + 2.0)));
            w1.push(scale / (e + 2.0));
            continue;
        }
        let (mut a, mut b) = (0.0, 0.0);
        for (x, w) in GL8 {
            let s = 0.5 * (x + 1.0);
            let k = (m as f64 + s).powf(e) * 0.5 * w;
            a += k * (1.0 - s);
            b += k * s;
        }
        w0.push(scale * a);
        w1.push(scale * b);
    }
    (w0, w1)
}

fn cache_key(kernel: &MemoryKernel, dt: f64, count: usize, cfg: &InversionConfig) -> String {
    let mut h = Sha256::new();
    h.update(format!("{:?}|{:e}|{}|{:?}", kernel.model, dt, count, cfg).as_bytes());
    hex::encode(h.finalize())
}

fn read_table(path: &Path, count: usize) -> Option<Vec<f64>> {
    let text = fs::read_to_string(path).ok()?;
    let vals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).and_then(|v| v.trim().parse().ok()))
        .collect::<Option<_>>()?;
    (vals.len() == count + 1).then_some(vals)
}

fn write_table(path: &Path, dt: f64, vals: &[f64]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    writeln!(f, "t,k1")?;
    for (m, v) in vals.iter().enumerate() {
        writeln!(f, "{:.16e},{:.16e}", m as f64 * dt, v)?;
    }
    drop(f);
    fs::rename(tmp, path)?;
    Ok(())
}

/// K₁(m·dt) for m = 0..=count, with K₁(0) the δ weight (right limit).
/// Inverted from Φ̃(u)/u and cached under `cache_dir` when given.
pub fn integrated_kernel_table(
    kernel: &MemoryKernel,
    dt: f64,
    count: usize,
    cfg: &InversionConfig,
    cache_dir: Option<&Path>,
) -> Result<Vec<f64>> {
    let path = cache_dir.map(|d| d.join(format!("{}.csv", cache_key(kernel, dt, count, cfg))));
    if let Some(vals) = path.as_deref().and_then(|p| read_table(p, count)) {
        return Ok(vals);
    }
    let mut vals: Vec<f64> = (1..=count)
        .into_par_iter()
        .map(|m| {
            let t = m as f64 * dt;
            invert(|s: Complex64| kernel.laplace_c(s) / s, t, cfg).map_err(|e| Error::AtTime { t, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    vals.insert(0, kernel.delta_weight);
    if let Some(p) = path {
        write_table(&p, dt, &vals)?;
    }
    Ok(vals)
}

enum History {
    // terms (c, decay, q, p) with running sums E
    Recursive { terms: Vec<(f64, f64, f64, f64)>, sums: Vec<DVector<f64>> },
    Direct { w0: Vec<f64>, w1: Vec<f64>, len: usize },
}

impl History {
    fn build(kernel: &MemoryKernel, cfg: &SolverConfig, dimension: usize) -> Result<Self> {
        let h = cfg.dt;
        let steps = cfg.steps();
        let len = if cfg.kernel_history_len == 0 { steps } else { cfg.kernel_history_len.min(steps) };
        Ok(match kernel.integrated() {
            IntegratedKernel::ExpSum { constant, terms } => {
                let mut all = vec![(constant, 0.0)];
                all.extend(terms);
                let terms: Vec<_> = all
                    .into_iter()
                    .map(|(c, lam)| {
                        let (q, p) = exp_moments(lam, h);
                        (c, (-lam * h).exp(), q, p)
                    })
                    .collect();
                let sums = vec![DVector::zeros(dimension); terms.len()];
                History::Recursive { terms, sums }
            }
            IntegratedKernel::Power { coef, exponent } => {
                let (w0, w1) = power_moments(coef, exponent, h, len);
                History::Direct { w0, w1, len }
            }
            IntegratedKernel::Numeric => {
                let k = integrated_kernel_table(kernel, h, len, &cfg.inversion, cfg.cache_dir.as_deref())?;
                let w0 = (0..len).map(|m| h * (k[m] / 3.0 + k[m + 1] / 6.0)).collect();
                let w1 = (0..len).map(|m| h * (k[m] / 6.0 + k[m + 1] / 3.0)).collect();
                History::Direct { w0, w1, len }
            }
        })
    }

    // coefficient of y_n in (K₁ ∗ y)(t_n)
    fn b0(&self) -> f64 {
        match self {
            History::Recursive { terms, .. } => terms.iter().map(|&(c, _, q, _)| c * q).sum(),
            History::Direct { w0, .. } => w0[0],
        }
    }

    // past states the convolution needs
    fn keep(&self) -> usize {
        match self {
            History::Recursive { .. } => 1,
            History::Direct { len, .. } => (*len).max(1),
        }
    }

    // (K₁ ∗ y)(t_n) without the y_n term; ys holds the last states up to y_{n−1}
    fn partial(&self, ys: &VecDeque<DVector<f64>>, n: usize) -> DVector<f64> {
        let last = &ys[ys.len() - 1];
        let base = n - ys.len();
        match self {
            History::Recursive { terms, sums } => {
                let mut acc = DVector::zeros(last.len());
                for (&(c, decay, _, p), e) in terms.iter().zip(sums) {
                    acc += e * decay + last * (c * p);
                }
                acc
            }
            History::Direct { w0, w1, len } => {
                let mut acc = DVector::zeros(last.len());
                let jmin = n.saturating_sub(*len) + 1;
                for j in jmin..=n {
                    let m = n - j;
                    if j < n {
                        acc.axpy(w0[m], &ys[j - base], 1.0);
                    }
                    acc.axpy(w1[m], &ys[j - 1 - base], 1.0);
                }
                acc
            }
        }
    }

    fn advance(&mut self, prev: &DVector<f64>, cur: &DVector<f64>) {
        if let History::Recursive { terms, sums } = self {
            for (&(c, decay, q, p), e) in terms.iter().zip(sums.iter_mut()) {
                *e *= decay;
                e.axpy(c * q, cur, 1.0);
                e.axpy(c * p, prev, 1.0);
            }
        }
    }
}

fn populations(y: &DVector<f64>) -> impl Iterator<Item = f64> + '_ {
    y.iter().enumerate().filter(|(i, _)| *i != 2 && *i != 3).map(|(_, v)| *v)
}

/// Integrates from `initial` up to `cfg.horizon`.
pub fn integrate(p: &ModelParams, kernel: &MemoryKernel, cfg: &SolverConfig, initial: &TruncatedState) -> Result<Series> {
    p.validate()?;
    cfg.validate()?;
    let n = cfg.n_levels;
    if initial.n_levels() != n || initial.pop_r.len() != n {
        return Err(Error::InvalidParameter(format!("initial state has {} levels, config {}", initial.n_levels(), n)));
    }
    let norm0 = initial.total();
    if (norm0 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("initial state is not normalized (total {norm0})")));
    }
    let h = cfg.dt;
    let steps = cfg.steps();
    let a = coupling_matrix(p, n);
    let c = collision_matrix(p, n);
    let mut hist = History::build(kernel, cfg, dim(n))?;
    let lhs = DMatrix::identity(dim(n), dim(n)) - &a * (0.5 * h) - &c * hist.b0();
    let lu = lhs.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("implicit step matrix".into()));
    }

    let y0 = initial.to_vector();
    let keep = hist.keep();
    let mut ys: VecDeque<DVector<f64>> = VecDeque::with_capacity(keep + 1);
    ys.push_back(y0.clone());
    let mut integral = DVector::zeros(dim(n));
    let mut out = Series { t: vec![0.0], states: vec![initial.clone()], min_population: populations(&y0).fold(f64::INFINITY, f64::min) };

    for step in 1..=steps {
        let t = step as f64 * h;
        let prev = &ys[ys.len() - 1];
        let rhs = &y0 + &a * (&integral + prev * (0.5 * h)) + &c * hist.partial(&ys, step);
        let y = lu.solve(&rhs).ok_or_else(|| Error::Singular("implicit step".into()))?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverAbort { t, reason: "non-finite state".into() });
        }
        let total: f64 = populations(&y).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::SolverAbort { t, reason: format!("normalization drift {:e}", total - 1.0) });
        }
        let lowest = populations(&y).fold(f64::INFINITY, f64::min);
        out.min_population = out.min_population.min(lowest);
        if let Some(floor) = cfg.negativity_floor {
            if lowest < floor {
                return Err(Error::SolverAbort { t, reason: format!("population {lowest:e} below floor {floor:e}") });
            }
        }
        integral += (prev + &y) * (0.5 * h);
        hist.advance(prev, &y);
        if step % cfg.output_stride == 0 || step == steps {
            out.t.push(t);
            out.states.push(TruncatedState::from_vector(&y, n));
        }
        if ys.len() == keep {
            ys.pop_front();
        }
        ys.push_back(y);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// (N, P_L at the horizon)
    pub rows: Vec<(usize, f64)>,
    /// |P_L(N_k) − P_L(N_{k−1})|, aligned with rows[1..]
    pub differences: Vec<f64>,
    /// First N whose difference from its predecessor is below 1e−4.
    pub converged_at: Option<usize>,
}

/// P_L at the horizon for each ladder size, starting in 1L.
pub fn convergence_in_n(p: &ModelParams, kernel: &MemoryKernel, cfg: &SolverConfig, n_list: &[usize]) -> Result<ConvergenceTable> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("n_list must be strictly ascending".into()));
    }
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let c = SolverConfig { n_levels: n, output_stride: usize::MAX, ..cfg.clone() };
            let s = integrate(p, kernel, &c, &TruncatedState::ground(n, Parity::L))?;
            Ok((n, s.states.last().map(TruncatedState::whole_l).unwrap_or(1.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    let differences: Vec<f64> = rows.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let converged_at = differences.iter().position(|&d| d < 1e-4).map(|i| rows[i + 1].0);
    Ok(ConvergenceTable { rows, differences, converged_at })
}
