use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chiral_relax::analysis::{fit_power_law, ize_comparator, predict_asymptote, timescale};
use chiral_relax::collision_models::{kernel, CollisionModel};
use chiral_relax::laplace_engine::{invert_with_bound, InversionConfig, InversionMethod};
use chiral_relax::mc_oracle::{simulate_ensemble, validity_check, McConfig, MoleculeSpec};
use chiral_relax::reduced_dynamics::{observable_laplace_c, observable_series, pole_residue, ModelParams, Observable, Parity, SeriesMode};
use chiral_relax::volterra_solver::{integrate, whole_populations, SolverConfig, TruncatedState};
use chiral_relax::Error;
use num_complex::Complex64;

use crate::config::{ConfigError, Ini, Section};
use crate::Common;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Solver(Error),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Solver(e) => write!(f, "solver error: {e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn cfg_err(line: usize, msg: impl fmt::Display) -> Failure {
    Failure::Config(ConfigError { line: (line > 0).then_some(line), msg: msg.to_string() })
}

// 17 significant digits
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

const PHYSICS_KEYS: &[&str] = &["alpha_L", "alpha_R", "omega", "n_levels", "delta_e", "parity_offset"];
const GRID_KEYS: &[&str] = &["t_start", "t_end", "n_points", "spacing", "t_values"];

struct Loaded {
    ini: Ini,
    out_dir: PathBuf,
    prefix: String,
}

fn load(c: &Common, default_prefix: &str) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&c.config).map_err(|e| Failure::Config(ConfigError { line: None, msg: format!("cannot read {}: {e}", c.config.display()) }))?;
    let ini = Ini::parse(&text)?;
    for s in &ini.sections {
        let known = matches!(s.name.as_str(), "model" | "physics" | "run" | "output") || s.name.starts_with("model.");
        if !known {
            return Err(cfg_err(s.line, format!("unknown section [{}]", s.name)));
        }
    }
    let (mut dir, mut prefix) = (PathBuf::from("."), default_prefix.to_string());
    if let Some(o) = ini.section("output") {
        o.only(&["directory", "prefix"])?;
        if let Some(d) = o.get("directory") {
            dir = PathBuf::from(&d.value);
        }
        if let Some(p) = o.get("prefix") {
            if p.value.is_empty() || p.value.contains(['/', '\\']) {
                return Err(cfg_err(p.line, "prefix must be a non-empty file name"));
            }
            prefix = p.value.clone();
        }
    }
    if let Some(d) = &c.out {
        dir = d.clone();
    }
    Ok(Loaded { ini, out_dir: dir, prefix })
}

fn model_from(sec: &Section) -> Result<CollisionModel, Failure> {
    let kind: String = sec.require("type")?;
    let m = match kind.as_str() {
        "poisson" => {
            sec.only(&["type", "tau0"])?;
            CollisionModel::Poisson { tau0: sec.require("tau0")? }
        }
        "bi_exponential" => {
            sec.only(&["type", "pa", "pb", "da", "db"])?;
            CollisionModel::BiExponential { pa: sec.require("pa")?, pb: sec.require("pb")?, da: sec.require("da")?, db: sec.require("db")? }
        }
        "power_law" => {
            sec.only(&["type", "mu", "T"])?;
            CollisionModel::PowerLaw { mu: sec.require("mu")?, t_scale: sec.require("T")? }
        }
        "fractional" => {
            sec.only(&["type", "r", "a"])?;
            CollisionModel::Fractional { r: sec.require("r")?, a: sec.require("a")? }
        }
        "exp_kernel" => {
            sec.only(&["type", "A", "gamma"])?;
            CollisionModel::ExpKernel { a: sec.require("A")?, gamma: sec.require("gamma")? }
        }
        other => {
            return Err(cfg_err(
                sec.line_of("type"),
                format!("unknown model type {other:?}; expected poisson, bi_exponential, power_law, fractional or exp_kernel"),
            ))
        }
    };
    m.validate().map_err(|e| cfg_err(sec.line, format!("[{}] {e}", sec.name)))?;
    Ok(m)
}

fn params_from(ini: &Ini) -> Result<(ModelParams, &Section), Failure> {
    let s = ini.require_section("physics")?;
    s.only(PHYSICS_KEYS)?;
    let p = ModelParams { alpha_l: s.require("alpha_L")?, alpha_r: s.require("alpha_R")?, omega: s.require("omega")? };
    p.validate().map_err(|e| cfg_err(s.line, format!("[physics] {e}")))?;
    Ok((p, s))
}

fn run_section<'a>(ini: &'a Ini, allowed: &[&str]) -> Result<Option<&'a Section>, Failure> {
    let Some(s) = ini.section("run") else { return Ok(None) };
    s.only(allowed)?;
    Ok(Some(s))
}

fn time_grid(run: Option<&Section>, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, Failure> {
    let Some(run) = run else { return Ok(linspace(lo, hi, n)) };
    if let Some(e) = run.get("t_values") {
        let v: Result<Vec<f64>, _> = e.value.split(',').map(|x| x.trim().parse::<f64>()).collect();
        let v = v.map_err(|_| cfg_err(e.line, "t_values must be a comma-separated list of numbers"))?;
        if v.is_empty() || v.iter().any(|t| !(*t > 0.0) || !t.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err(e.line, "t_values must be positive and strictly increasing"));
        }
        return Ok(v);
    }
    let (a, b, n): (f64, f64, usize) = (run.or("t_start", lo)?, run.or("t_end", hi)?, run.or("n_points", n)?);
    let spacing: String = run.or("spacing", "linear".to_string())?;
    let line = run.line_of("t_start");
    if !(a > 0.0 && b > a && b.is_finite()) || n < 1 {
        return Err(cfg_err(line, format!("time grid needs 0 < t_start < t_end and n_points >= 1, got {a}, {b}, {n}")));
    }
    match spacing.as_str() {
        "linear" => Ok(linspace(a, b, n)),
        "log" => Ok(linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()),
        s => Err(cfg_err(run.line_of("spacing"), format!("spacing must be linear or log, got {s:?}"))),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![b];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn inversion_from(run: Option<&Section>, method: InversionMethod) -> Result<InversionConfig, Failure> {
    let mut cfg = InversionConfig { method, ..InversionConfig::default() };
    if method == InversionMethod::GaverStehfest {
        cfg = InversionConfig::gaver_stehfest(16);
    }
    if let Some(run) = run {
        let key = if method == InversionMethod::Talbot { "nodes" } else { "gs_nodes" };
        if let Some(n) = run.parse::<usize>(key)? {
            cfg.nodes = n;
        }
        if let Some(d) = run.parse::<u32>("precision_digits")? {
            cfg.precision_digits = d;
        }
        cfg.validate().map_err(|e| cfg_err(run.line_of(key), e))?;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: String, body: &str, out: &mut Outcome) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    out.files.push(path);
    Ok(())
}

fn meta(command: &str, ini: &Ini, extra: &[String]) -> String {
    let mut s = format!("command = {command}\nversion = {}\n", env!("CARGO_PKG_VERSION"));
    for e in extra {
        s.push_str(e);
        s.push('\n');
    }
    s.push_str("\n# configuration\n");
    s.push_str(&ini.canonical());
    s
}

pub fn simulate(c: &Common) -> Result<Outcome, Failure> {
    let l = load(c, "simulate")?;
    let m = model_from(l.ini.require_section("model")?)?;
    let (p, phys) = params_from(&l.ini)?;
    let run = run_section(&l.ini, &["dt", "horizon", "kernel_history_len", "negativity_floor", "output_stride", "cache_dir", "nodes", "precision_digits"])?;
    let run = run.ok_or_else(|| Failure::Config(ConfigError { line: None, msg: "missing section [run] (dt, horizon)".into() }))?;
    let n: usize = phys.or("n_levels", 16)?;
    let mut cfg = SolverConfig::new(run.require("dt")?, run.require("horizon")?, n);
    if let Some(k) = run.parse("kernel_history_len")? {
        cfg.kernel_history_len = k;
    }
    cfg.negativity_floor = run.parse("negativity_floor")?;
    cfg.output_stride = run.or("output_stride", 1)?;
    cfg.cache_dir = run.parse::<String>("cache_dir")?.map(PathBuf::from);
    cfg.inversion = inversion_from(Some(run), InversionMethod::Talbot)?;
    cfg.validate().map_err(|e| cfg_err(run.line, format!("[run] {e}")))?;

    let series = integrate(&p, &kernel(&m), &cfg, &TruncatedState::ground(n, Parity::L)).map_err(Failure::Solver)?;
    let w = whole_populations(&series);
    let mut csv = String::from("t,P_L,P_R,p_c,p_1L,p_1R\n");
    for (k, s) in series.states.iter().enumerate() {
        let row = [series.t[k], w.p_l[k], w.p_r[k], w.p_c[k], s.pop_l[0], s.pop_r[0]];
        csv.push_str(&row.map(num).join(","));
        csv.push('\n');
    }
    let mut out = Outcome::default();
    write(&l.out_dir, format!("{}_series.csv", l.prefix), &csv, &mut out)?;
    let extra = [format!("model = {}", m.name()), format!("steps = {}", cfg.steps()), format!("min_population = {}", num(series.min_population))];
    write(&l.out_dir, format!("{}_meta.txt", l.prefix), &meta("simulate", &l.ini, &extra), &mut out)?;
    Ok(out)
}

/// Absolute rounding bound above which an inverted row is flagged.
const ROW_TOLERANCE: f64 = 1e-6;

pub fn laplace(c: &Common) -> Result<Outcome, Failure> {
    let l = load(c, "laplace")?;
    let m = model_from(l.ini.require_section("model")?)?;
    let (p, _) = params_from(&l.ini)?;
    let mut allowed = vec!["observable", "method", "nodes", "gs_nodes", "precision_digits", "mode"];
    allowed.extend_from_slice(GRID_KEYS);
    let run = run_section(&l.ini, &allowed)?;
    let obs_name: String = run.map_or(Ok(None), |r| r.parse("observable"))?.unwrap_or_else(|| "whole_L".into());
    let obs = Observable::parse(&obs_name)
        .ok_or_else(|| cfg_err(run.map_or(0, |r| r.line_of("observable")), format!("unknown observable {obs_name:?}")))?;
    let mode = match run.map_or(Ok(None), |r| r.parse::<String>("mode"))?.as_deref() {
        None | Some("full") => SeriesMode::Full,
        Some("secular") => SeriesMode::Secular,
        Some(s) => return Err(cfg_err(run.unwrap().line_of("mode"), format!("mode must be full or secular, got {s:?}"))),
    };
    let methods = match run.map_or(Ok(None), |r| r.parse::<String>("method"))?.as_deref() {
        None | Some("talbot") => vec![InversionMethod::Talbot],
        Some("gaver_stehfest") => vec![InversionMethod::GaverStehfest],
        Some("both") => vec![InversionMethod::Talbot, InversionMethod::GaverStehfest],
        Some(s) => {
            return Err(cfg_err(run.unwrap().line_of("method"), format!("method must be talbot, gaver_stehfest or both, got {s:?}")))
        }
    };
    let grid = time_grid(run, 0.5, 50.0, 100)?;
    let k = kernel(&m);
    let (res, u0) = pole_residue(&p, &k, obs);

    let mut out = Outcome::default();
    let mut csv = String::from("t,value,method,status\n");
    for &method in &methods {
        let cfg = inversion_from(run, method)?;
        for &t in &grid {
            let inv = invert_with_bound(|s: Complex64| observable_laplace_c(&p, &k, obs, s, SeriesMode::Secular), t, &cfg);
            let (value, ok) = match inv {
                Ok(r) => {
                    let pole = if mode == SeriesMode::Full { 2.0 * (res * (u0 * t).exp()).re } else { 0.0 };
                    (r.value + pole, r.value.is_finite() && r.rounding_bound <= ROW_TOLERANCE)
                }
                Err(_) => (f64::NAN, false),
            };
            if !ok {
                out.warnings.push(format!("{} inversion unstable at t = {t:e}", method.name()));
            }
            csv.push_str(&format!("{},{},{},{}\n", num(t), num(value), method.name(), if ok { "ok" } else { "unstable" }));
        }
    }
    write(&l.out_dir, format!("{}_laplace.csv", l.prefix), &csv, &mut out)?;
    let extra = [format!("model = {}", m.name()), format!("observable = {}", obs.name()), format!("unstable_rows = {}", out.warnings.len())];
    write(&l.out_dir, format!("{}_meta.txt", l.prefix), &meta("laplace", &l.ini, &extra), &mut out)?;
    Ok(out)
}

pub fn mc(c: &Common) -> Result<Outcome, Failure> {
    let l = load(c, "mc")?;
    let m = model_from(l.ini.require_section("model")?)?;
    let (p, phys) = params_from(&l.ini)?;
    let mut allowed = vec!["n_traj", "seed", "eps_pos", "divergence_norm", "validity_threshold"];
    allowed.extend_from_slice(GRID_KEYS);
    let run = run_section(&l.ini, &allowed)?;
    let n: usize = phys.or("n_levels", 6)?;
    let spec = MoleculeSpec {
        n_levels: n,
        ground_energy: 0.0,
        level_spacing: phys.or("delta_e", 1e3 * p.omega)?,
        parity_offset: phys.or("parity_offset", std::f64::consts::FRAC_1_SQRT_2)?,
        alpha_l: p.alpha_l,
        alpha_r: p.alpha_r,
        omega: p.omega,
    };
    spec.validate().map_err(|e| cfg_err(phys.line, format!("[physics] {e}")))?;
    let get = |k: &str, d: f64| run.map_or(Ok(d), |r| r.or(k, d));
    let mut cfg = McConfig::new(run.map_or(Ok(1000), |r| r.or("n_traj", 1000usize))?, 0);
    cfg.seed = match c.seed {
        Some(s) => s,
        None => run.map_or(Ok(0), |r| r.or("seed", 0u64))?,
    };
    cfg.eps_pos = get("eps_pos", cfg.eps_pos)?;
    cfg.divergence_norm = get("divergence_norm", cfg.divergence_norm)?;
    let threshold = get("validity_threshold", 100.0)?;
    if cfg.n_traj == 0 {
        return Err(cfg_err(run.map_or(0, |r| r.line_of("n_traj")), "n_traj must be >= 1"));
    }
    let grid = time_grid(run, 0.5, 50.0, 100)?;

    let r = simulate_ensemble(&spec, &m, &grid, &cfg).map_err(Failure::Solver)?;
    let v = validity_check(&spec, &m, threshold);
    let mut out = Outcome::default();
    if !v.pass {
        out.warnings.push(format!("validity ratio {:.3e} below {threshold}", v.ratio));
    }
    if r.positivity_flagged > 0 {
        out.warnings.push(format!("{} trajectories lost positivity", r.positivity_flagged));
    }
    if r.diverged > 0 {
        out.warnings.push(format!("{} trajectories diverged and were dropped", r.diverged));
    }
    let mut csv = String::from("t,P_L,se_P_L,P_R,se_P_R,p_c,se_p_c,p_1L,se_p_1L,p_1R,se_p_1R\n");
    for k in 0..grid.len() {
        let mut row = vec![num(grid[k])];
        for s in [&r.p_l, &r.p_r, &r.p_c, &r.p_1l, &r.p_1r] {
            row.push(num(s.mean[k]));
            row.push(num(s.stderr[k]));
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write(&l.out_dir, format!("{}_mc.csv", l.prefix), &csv, &mut out)?;
    let extra = [
        format!("model = {}", m.name()),
        format!("seed = {}", cfg.seed),
        format!("n_traj = {}", cfg.n_traj),
        format!("n_used = {}", r.n_used),
        format!("diverged = {}", r.diverged),
        format!("positivity_flagged = {}", r.positivity_flagged),
        format!("collisions = {}", r.collisions),
        format!("validity_ratio = {}", num(v.ratio)),
        format!("validity_pass = {}", v.pass),
    ];
    write(&l.out_dir, format!("{}_meta.txt", l.prefix), &meta("mc", &l.ini, &extra), &mut out)?;
    Ok(out)
}

fn describe(m: &CollisionModel) -> String {
    match *m {
        CollisionModel::Poisson { tau0 } => format!("tau0={tau0}"),
        CollisionModel::BiExponential { pa, pb, da, db } => format!("pa={pa};pb={pb};da={da};db={db}"),
        CollisionModel::PowerLaw { mu, t_scale } => format!("mu={mu};T={t_scale}"),
        CollisionModel::Fractional { r, a } => format!("r={r};a={a}"),
        CollisionModel::ExpKernel { a, gamma } => format!("A={a};gamma={gamma}"),
    }
}

pub fn asymptotics(c: &Common) -> Result<Outcome, Failure> {
    let l = load(c, "asymptotics")?;
    let (p, _) = params_from(&l.ini)?;
    let run = run_section(&l.ini, &["observable", "fit_points", "window_start", "window_end", "nodes"])?;
    let obs_name: String = run.map_or(Ok(None), |r| r.parse("observable"))?.unwrap_or_else(|| "whole_L".into());
    let obs = match Observable::parse(&obs_name) {
        Some(o @ (Observable::WholeL | Observable::WholeR | Observable::Coherence)) => o,
        _ => return Err(cfg_err(run.map_or(0, |r| r.line_of("observable")), format!("observable must be whole_L, whole_R or coherence, got {obs_name:?}"))),
    };
    let points: usize = run.map_or(Ok(24), |r| r.or("fit_points", 24))?;
    let (w0, w1): (f64, f64) = (run.map_or(Ok(10.0), |r| r.or("window_start", 10.0))?, run.map_or(Ok(100.0), |r| r.or("window_end", 100.0))?);
    if points < 10 || !(w0 > 0.0 && w1 >= 10.0 * w0) {
        return Err(cfg_err(run.map_or(0, |r| r.line), "fit needs fit_points >= 10 and window_end >= 10 window_start"));
    }
    let inv = inversion_from(run, InversionMethod::Talbot)?;
    let models: Vec<CollisionModel> =
        l.ini.sections.iter().filter(|s| s.name == "model" || s.name.starts_with("model.")).map(model_from).collect::<Result<_, _>>()?;

    let mut csv = String::from("model,param,tau,exponent_predicted,exponent_fitted,prefactor_predicted,prefactor_fitted,r2,error\n");
    let mut out = Outcome::default();
    for m in &models {
        let mut cells = vec![m.name().to_string(), describe(m)];
        let law = match predict_asymptote(&p, m, obs) {
            Ok(law) => law,
            Err(e) => {
                cells.extend(["NaN"; 6].map(String::from));
                cells.push(e.to_string().replace(',', ";"));
                csv.push_str(&cells.join(","));
                csv.push('\n');
                continue;
            }
        };
        // coefficient of t^exponent in physical time
        let coef = law.prefactor * law.time_unit.powf(-law.exponent);
        let (lo, hi) = (w0 * law.timescale, w1 * law.timescale);
        let grid: Vec<f64> = linspace(lo.ln(), hi.ln(), points).into_iter().map(f64::exp).collect();
        let fit = observable_series(&p, &kernel(m), obs, &grid, &inv, SeriesMode::Secular)
            .and_then(|y| fit_power_law(&grid, &y, (lo * (1.0 - 1e-12), hi * (1.0 + 1e-12)), law.offset));
        cells.push(num(law.timescale));
        cells.push(num(law.exponent));
        match fit {
            Ok(f) => {
                cells.extend([num(f.exponent), num(coef), num(f.prefactor), num(f.r_squared), String::new()]);
            }
            Err(e) => {
                cells.extend(["NaN".into(), num(coef), "NaN".into(), "NaN".into(), e.to_string().replace(',', ";")]);
            }
        }
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    write(&l.out_dir, format!("{}_asymptotics.csv", l.prefix), &csv, &mut out)?;

    let mut extra = vec![format!("observable = {}", obs.name()), format!("rows = {}", models.len())];
    let same_family = models.len() >= 2 && models.iter().all(|m| m.name() == models[0].name());
    if same_family {
        let tau = models.iter().filter_map(|m| timescale(&p, m).ok()).fold(0.0, f64::max);
        if let Ok(r) = ize_comparator(&p, &models, 100.0 * tau) {
            extra.push(format!("ize_parameter = {}", r.parameter_name));
            extra.push(format!("ize_verdict = {:?}", r.verdict));
            write(&l.out_dir, format!("{}_ize.csv", l.prefix), &r.to_csv(), &mut out)?;
        }
    }
    write(&l.out_dir, format!("{}_meta.txt", l.prefix), &meta("asymptotics", &l.ini, &extra), &mut out)?;
    Ok(out)
}
