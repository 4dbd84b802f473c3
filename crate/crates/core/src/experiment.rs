//! Config-driven experiment runner behind the `apgnc` binary.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 config error, 3 every run
//! diverged.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::algorithms::{
    run_apg, run_apgnc, run_apgnc_plus, run_inexact_apgnc, run_mapg, run_proximal_gradient, ErrorSchedule,
    MomentumSchedule, SolverConfig,
};
use crate::checks::{run_checks, CheckLevel};
use crate::diagnostics::{fit_linear_rate, format_f64, kkt_residual, trim_for_fit, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::objective::{CompositeObjective, RealVector};
use crate::problems::{
    generate_nnpca_with, nonneg_unit_start, quadratic_problem, quartic_problem_with_radius, NnpcaConstraint,
    NnpcaInstance,
};
use crate::prox::DEFAULT_BAND_FLOOR;
use crate::rng;
use crate::svrg::{run_inexact_svrg_apgnc, run_prox_svrg, run_svrg_apgnc, run_svrg_apgnc_plus, SvrgConfig};
use crate::trace::Trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub const CSV_HEADER: &str =
    "solver,seed,k,passes,F_x,F_y,step_norm,residual,beta,chose_extrapolation,eps_realized,grad_err_realized";

/// Reference for every config key.
pub const CONFIG_HELP: &str = "\
Config files are sectioned key = value text; `#` starts a comment.

[problem]
  kind        nnpca | quadratic | quartic | file
  n, d        nnpca: sample count and dimension (defaults 2000, 100)
  gamma       nnpca/file: ridge weight (default 1e-3; file: taken from the file)
  seed        nnpca/quadratic: instance seed (default 0)
  constraint  nnpca/file: ball (x >= 0, |x| <= radius, default) | orthant
  radius      ball radius for nnpca/file; start box radius for quartic (default 1)
  eigs        quadratic: comma-separated eigenvalues
  eig_min, eig_max
              quadratic without eigs: d eigenvalues uniform in [eig_min, eig_max]
              (defaults 1, 10)
  path        file: instance written by NnpcaInstance::save

[solver.<name>]   name is one of pg, apg, mapg, apgnc, apgnc_plus, inexact_apgnc,
                  prox_svrg, svrg_apgnc, svrg_apgnc_plus, inexact_svrg_apgnc
  step        absolute step size eta
  step_scale  eta = step_scale / L (default 0.05 for full-gradient solvers)
  m           SVRG inner loop length (default n)
  rho         SVRG: eta = rho / L, rho < 1/2 (default eta = 1/(8 m L))
  beta0, shrink
              adaptive momentum (defaults 0.5, 0.5)
  residual_tol
              stop when (L + 1/eta)|x_k - y_k| <= residual_tol (default 0)
  grad_error  inexact_apgnc gradient error magnitude schedule (default zero)
  prox_error  inexact prox gap schedule (defaults inverse_cubic:0.01 and
              capped_inverse_cubic:0.01:1e-7 for the SVRG variant)
              schedules: zero | constant:<v> | inverse_cubic:<scale> |
                         capped_inverse_cubic:<scale>:<cap>
  band_floor  fraction of the scheduled gap the inexact prox must realize (0.25)

[experiment]
  seeds       comma-separated run seeds; each seed fixes x0 and the solver RNG
              (default 1)
  budget      effective passes per run (default 100)
  checkpoints number of pass checkpoints in compare tables (default 20)
  start_scale norm of the random nonnegative start for nnpca and quadratic
              problems, in (0, 1] (default 0.5); quartic starts at all-ones

[output]
  dir         output directory (default out)
";

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Nnpca { n: usize, d: usize, gamma: f64, seed: u64, constraint: NnpcaConstraint },
    Quadratic { eigs: Vec<f64>, seed: u64 },
    Quartic { d: usize, radius: f64 },
    File { path: PathBuf, constraint: NnpcaConstraint },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Pg,
    Apg,
    Mapg,
    Apgnc,
    ApgncPlus,
    InexactApgnc,
    ProxSvrg,
    SvrgApgnc,
    SvrgApgncPlus,
    InexactSvrgApgnc,
}

impl SolverKind {
    pub const ALL: [SolverKind; 10] = [
        SolverKind::Pg,
        SolverKind::Apg,
        SolverKind::Mapg,
        SolverKind::Apgnc,
        SolverKind::ApgncPlus,
        SolverKind::InexactApgnc,
        SolverKind::ProxSvrg,
        SolverKind::SvrgApgnc,
        SolverKind::SvrgApgncPlus,
        SolverKind::InexactSvrgApgnc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Pg => "pg",
            SolverKind::Apg => "apg",
            SolverKind::Mapg => "mapg",
            SolverKind::Apgnc => "apgnc",
            SolverKind::ApgncPlus => "apgnc_plus",
            SolverKind::InexactApgnc => "inexact_apgnc",
            SolverKind::ProxSvrg => "prox_svrg",
            SolverKind::SvrgApgnc => "svrg_apgnc",
            SolverKind::SvrgApgncPlus => "svrg_apgnc_plus",
            SolverKind::InexactSvrgApgnc => "inexact_svrg_apgnc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_svrg(&self) -> bool {
        matches!(
            self,
            SolverKind::ProxSvrg | SolverKind::SvrgApgnc | SolverKind::SvrgApgncPlus | SolverKind::InexactSvrgApgnc
        )
    }

    fn passes_per_iter(&self) -> f64 {
        if *self == SolverKind::Mapg {
            2.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverSpec {
    pub kind: SolverKind,
    pub step: Option<f64>,
    pub step_scale: Option<f64>,
    pub m: Option<usize>,
    pub rho: Option<f64>,
    pub beta0: f64,
    pub shrink: f64,
    pub residual_tol: f64,
    pub grad_error: ErrorSchedule,
    pub prox_error: ErrorSchedule,
    pub band_floor: f64,
}

impl SolverSpec {
    pub fn new(kind: SolverKind) -> Self {
        let prox_error = match kind {
            SolverKind::InexactApgnc => ErrorSchedule::InverseCubic { scale: 0.01 },
            SolverKind::InexactSvrgApgnc => ErrorSchedule::CappedInverseCubic { scale: 0.01, cap: 1e-7 },
            _ => ErrorSchedule::Zero,
        };
        SolverSpec {
            kind,
            step: None,
            step_scale: None,
            m: None,
            rho: None,
            beta0: 0.5,
            shrink: 0.5,
            residual_tol: 0.0,
            grad_error: ErrorSchedule::Zero,
            prox_error,
            band_floor: DEFAULT_BAND_FLOOR,
        }
    }

    fn momentum(&self) -> MomentumSchedule {
        match self.kind {
            SolverKind::Pg | SolverKind::ProxSvrg => MomentumSchedule::None,
            SolverKind::Apg | SolverKind::Mapg => MomentumSchedule::Nesterov,
            SolverKind::Apgnc | SolverKind::InexactApgnc | SolverKind::SvrgApgnc | SolverKind::InexactSvrgApgnc => {
                MomentumSchedule::RatioK
            }
            SolverKind::ApgncPlus | SolverKind::SvrgApgncPlus => {
                MomentumSchedule::Adaptive { beta0: self.beta0, shrink: self.shrink }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solvers: Vec<SolverSpec>,
    pub seeds: Vec<u64>,
    pub budget: f64,
    pub checkpoints: usize,
    /// Norm of the random start for NN-PCA and quadratic problems.
    pub start_scale: f64,
    pub output_dir: PathBuf,
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

/// Parses `zero`, `constant:v`, `inverse_cubic:s` or `capped_inverse_cubic:s:c`.
pub fn parse_schedule(v: &str) -> Option<ErrorSchedule> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0);
    match parts.as_slice() {
        ["zero"] => Some(ErrorSchedule::Zero),
        ["constant", c] => Some(ErrorSchedule::Constant(num(c)?)),
        ["inverse_cubic", s] => Some(ErrorSchedule::InverseCubic { scale: num(s)? }),
        ["capped_inverse_cubic", s, c] => Some(ErrorSchedule::CappedInverseCubic { scale: num(s)?, cap: num(c)? }),
        _ => None,
    }
}

struct Entry {
    line: usize,
    col: usize,
    key: String,
    value: String,
}

struct Section {
    line: usize,
    name: String,
    entries: Vec<Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        let i = self.entries.iter().position(|e| e.key == key)?;
        Some(self.entries.remove(i))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| cfg_err(e.line, format!("column {}: invalid value `{}` for `{key}`", e.col, e.value))),
        }
    }

    fn positive_f64(&mut self, key: &str) -> Result<Option<f64>> {
        let line = self.entries.iter().find(|e| e.key == key).map(|e| e.line);
        match self.parse::<f64>(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                Err(cfg_err(line.unwrap_or(self.line), format!("`{key}` must be positive")))
            }
            other => Ok(other),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some(e) => Err(cfg_err(e.line, format!("column {}: unknown key `{}` in [{}]", e.col, e.key, self.name))),
            None => Ok(()),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = content.len() - content.trim_start().len() + 1;
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, format!("column {col}: unterminated section header")))?
                .trim();
            if sections.iter().any(|s| s.name == name) {
                return Err(cfg_err(line, format!("column {col}: duplicate section [{name}]")));
            }
            sections.push(Section { line, name: name.to_string(), entries: Vec::new() });
            continue;
        }
        let (k, v) =
            trimmed.split_once('=').ok_or_else(|| cfg_err(line, format!("column {col}: expected `key = value`")))?;
        let section =
            sections.last_mut().ok_or_else(|| cfg_err(line, format!("column {col}: key outside of any section")))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(cfg_err(line, format!("column {col}: empty key")));
        }
        if section.entries.iter().any(|e| e.key == key) {
            return Err(cfg_err(line, format!("column {col}: duplicate key `{key}`")));
        }
        let vcol = col + trimmed.find('=').unwrap() + 1;
        section.entries.push(Entry { line, col: vcol, key, value: v.trim().to_string() });
    }
    Ok(sections)
}

fn parse_constraint(sec: &mut Section) -> Result<NnpcaConstraint> {
    let radius = sec.positive_f64("radius")?.unwrap_or(1.0);
    match sec.take("constraint") {
        None => Ok(NnpcaConstraint::OrthantBall { radius }),
        Some(e) => match e.value.as_str() {
            "ball" => Ok(NnpcaConstraint::OrthantBall { radius }),
            "orthant" => Ok(NnpcaConstraint::Orthant),
            other => Err(cfg_err(e.line, format!("column {}: unknown constraint `{other}`", e.col))),
        },
    }
}

fn parse_problem(mut sec: Section) -> Result<ProblemSpec> {
    let kind = sec.take("kind").ok_or_else(|| cfg_err(sec.line, "[problem] needs `kind`"))?;
    let spec = match kind.value.as_str() {
        "nnpca" => {
            let n = sec.parse::<usize>("n")?.unwrap_or(2000);
            let d = sec.parse::<usize>("d")?.unwrap_or(100);
            if n == 0 || d == 0 {
                return Err(cfg_err(sec.line, "n and d must be at least 1"));
            }
            let gamma = sec.parse::<f64>("gamma")?.unwrap_or(1e-3);
            let seed = sec.parse::<u64>("seed")?.unwrap_or(0);
            let constraint = parse_constraint(&mut sec)?;
            ProblemSpec::Nnpca { n, d, gamma, seed, constraint }
        }
        "quadratic" => {
            let seed = sec.parse::<u64>("seed")?.unwrap_or(0);
            let eigs = match sec.take("eigs") {
                Some(e) => e
                    .value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| cfg_err(e.line, format!("column {}: invalid eigenvalue list", e.col)))?,
                None => {
                    let d =
                        sec.parse::<usize>("d")?.ok_or_else(|| cfg_err(sec.line, "quadratic needs `eigs` or `d`"))?;
                    let lo = sec.positive_f64("eig_min")?.unwrap_or(1.0);
                    let hi = sec.positive_f64("eig_max")?.unwrap_or(10.0);
                    if lo > hi {
                        return Err(cfg_err(sec.line, "eig_min exceeds eig_max"));
                    }
                    uniform_eigs(d, lo, hi, seed)
                }
            };
            if eigs.is_empty() || eigs.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(cfg_err(sec.line, "eigenvalues must be positive"));
            }
            ProblemSpec::Quadratic { eigs, seed }
        }
        "quartic" => {
            let d = sec.parse::<usize>("d")?.ok_or_else(|| cfg_err(sec.line, "quartic needs `d`"))?;
            if d == 0 {
                return Err(cfg_err(sec.line, "d must be at least 1"));
            }
            let radius = sec.positive_f64("radius")?.unwrap_or(1.0);
            ProblemSpec::Quartic { d, radius }
        }
        "file" => {
            let path = sec.take("path").ok_or_else(|| cfg_err(sec.line, "file problem needs `path`"))?;
            let constraint = parse_constraint(&mut sec)?;
            ProblemSpec::File { path: PathBuf::from(path.value), constraint }
        }
        other => {
            return Err(cfg_err(kind.line, format!("column {}: unknown problem kind `{other}`", kind.col)));
        }
    };
    sec.finish()?;
    Ok(spec)
}

/// `d` seeded eigenvalues uniform in `[lo, hi]`.
pub fn uniform_eigs(d: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut g = rng::seeded(seed, rng::STREAM_PROX_ERROR);
    (0..d).map(|_| g.random_range(lo..=hi)).collect()
}

fn parse_solver(mut sec: Section, kind: SolverKind) -> Result<SolverSpec> {
    let mut s = SolverSpec::new(kind);
    s.step = sec.positive_f64("step")?;
    s.step_scale = sec.positive_f64("step_scale")?;
    if s.step.is_some() && s.step_scale.is_some() {
        return Err(cfg_err(sec.line, "set only one of `step` and `step_scale`"));
    }
    let svrg_only = |sec: &Section, key: &str| -> Result<()> {
        match sec.entries.iter().find(|e| e.key == key) {
            Some(e) if !kind.is_svrg() => Err(cfg_err(e.line, format!("`{key}` applies to SVRG solvers only"))),
            _ => Ok(()),
        }
    };
    svrg_only(&sec, "m")?;
    svrg_only(&sec, "rho")?;
    s.m = sec.parse::<usize>("m")?;
    if s.m == Some(0) {
        return Err(cfg_err(sec.line, "m must be at least 1"));
    }
    s.rho = sec.positive_f64("rho")?;
    if let Some(v) = sec.positive_f64("beta0")? {
        s.beta0 = v;
    }
    if let Some(v) = sec.positive_f64("shrink")? {
        s.shrink = v;
    }
    if let Some(v) = sec.parse::<f64>("residual_tol")? {
        s.residual_tol = v;
    }
    if let Some(v) = sec.positive_f64("band_floor")? {
        s.band_floor = v;
    }
    for key in ["grad_error", "prox_error"] {
        if let Some(e) = sec.take(key) {
            let sched = parse_schedule(&e.value)
                .ok_or_else(|| cfg_err(e.line, format!("column {}: invalid schedule `{}`", e.col, e.value)))?;
            let allowed = match key {
                "grad_error" => kind == SolverKind::InexactApgnc,
                _ => matches!(kind, SolverKind::InexactApgnc | SolverKind::InexactSvrgApgnc),
            };
            if !allowed && !sched.is_zero() {
                return Err(cfg_err(e.line, format!("`{key}` is not supported by {}", kind.name())));
            }
            if key == "grad_error" {
                s.grad_error = sched;
            } else {
                s.prox_error = sched;
            }
        }
    }
    sec.finish()?;
    Ok(s)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let sections = lex(text)?;
    let mut problem = None;
    let mut solvers = Vec::new();
    let mut seeds = vec![1];
    let mut budget = 100.0;
    let mut checkpoints = 20;
    let mut start_scale = 0.5;
    let mut output_dir = PathBuf::from("out");
    for mut sec in sections {
        match sec.name.as_str() {
            "problem" => problem = Some(parse_problem(sec)?),
            "experiment" => {
                if let Some(e) = sec.take("seeds") {
                    seeds = e
                        .value
                        .split(',')
                        .map(|s| s.trim().parse::<u64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| cfg_err(e.line, format!("column {}: invalid seed list", e.col)))?;
                    if seeds.is_empty() {
                        return Err(cfg_err(e.line, "seed list is empty"));
                    }
                }
                if let Some(b) = sec.positive_f64("budget")? {
                    budget = b;
                }
                if let Some(c) = sec.parse::<usize>("checkpoints")? {
                    if c == 0 {
                        return Err(cfg_err(sec.line, "checkpoints must be at least 1"));
                    }
                    checkpoints = c;
                }
                if let Some(v) = sec.positive_f64("start_scale")? {
                    if v > 1.0 {
                        return Err(cfg_err(sec.line, "start_scale must lie in (0, 1]"));
                    }
                    start_scale = v;
                }
                sec.finish()?;
            }
            "output" => {
                if let Some(e) = sec.take("dir") {
                    output_dir = PathBuf::from(e.value);
                }
                sec.finish()?;
            }
            name => match name.strip_prefix("solver.") {
                Some(sname) => {
                    let kind = SolverKind::parse(sname.trim())
                        .ok_or_else(|| cfg_err(sec.line, format!("unknown solver `{sname}`")))?;
                    solvers.push(parse_solver(sec, kind)?);
                }
                None => return Err(cfg_err(sec.line, format!("unknown section [{name}]"))),
            },
        }
    }
    let problem = problem.ok_or_else(|| cfg_err(1, "missing [problem] section"))?;
    if solvers.is_empty() {
        return Err(cfg_err(1, "at least one [solver.<name>] section is required"));
    }
    Ok(ExperimentConfig { problem, solvers, seeds, budget, checkpoints, start_scale, output_dir })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Built problem plus the instance size needed for pass accounting.
pub struct BuiltProblem {
    pub objective: CompositeObjective,
    pub description: String,
    quartic: bool,
}

impl BuiltProblem {
    /// Seeded random nonnegative vector of norm `scale`, or all-ones for the quartic.
    pub fn start(&self, seed: u64, scale: f64) -> Result<RealVector> {
        let d = self.objective.dim();
        if self.quartic {
            RealVector::new(vec![1.0; d])
        } else {
            RealVector::from_array(nonneg_unit_start(d, seed)?.into_array() * scale)
        }
    }
}

pub fn build_problem(spec: &ProblemSpec) -> Result<BuiltProblem> {
    let (objective, description, quartic) = match spec {
        ProblemSpec::Nnpca { n, d, gamma, seed, constraint } => {
            let (_, obj) = generate_nnpca_with(*n, *d, *gamma, *seed, *constraint)?;
            (obj, format!("nnpca n={n} d={d} gamma={gamma} seed={seed} constraint={constraint:?}"), false)
        }
        ProblemSpec::Quadratic { eigs, seed } => {
            (quadratic_problem(eigs, *seed)?, format!("quadratic d={} seed={seed}", eigs.len()), false)
        }
        ProblemSpec::Quartic { d, radius } => {
            (quartic_problem_with_radius(*d, *radius)?, format!("quartic d={d} radius={radius}"), true)
        }
        ProblemSpec::File { path, constraint } => {
            let inst = NnpcaInstance::load(path)?;
            let desc = format!("file {} n={} d={} gamma={}", path.display(), inst.n(), inst.d(), inst.gamma());
            (inst.objective(*constraint)?, desc, false)
        }
    };
    Ok(BuiltProblem { objective, description, quartic })
}

/// Runs one solver under the pass budget.
pub fn run_solver(
    spec: &SolverSpec,
    obj: &CompositeObjective,
    x0: &RealVector,
    seed: u64,
    budget: f64,
) -> Result<Trace> {
    let l = obj.lipschitz();
    let n = obj.n_components();
    let momentum = spec.momentum();
    if spec.kind.is_svrg() {
        let m = spec.m.unwrap_or(n);
        let mut cfg = SvrgConfig::new(m, 1, momentum).seed(seed);
        cfg.band_floor = spec.band_floor;
        cfg.prox_error = spec.prox_error.clone();
        if let Some(rho) = spec.rho {
            cfg = cfg.rho(rho);
        } else if let Some(eta) = spec.step {
            cfg = cfg.step_size(eta);
        } else if let Some(c) = spec.step_scale {
            cfg = cfg.step_size(c / l);
        }
        cfg.max_epochs = ((budget / cfg.passes_per_epoch(n)).floor() as usize).max(1);
        return match spec.kind {
            SolverKind::ProxSvrg => run_prox_svrg(obj, x0, &cfg),
            SolverKind::SvrgApgnc => run_svrg_apgnc(obj, x0, &cfg),
            SolverKind::SvrgApgncPlus => run_svrg_apgnc_plus(obj, x0, &cfg),
            _ => run_inexact_svrg_apgnc(obj, x0, &cfg),
        };
    }
    let eta = spec.step.unwrap_or(spec.step_scale.unwrap_or(0.05) / l);
    let iters = ((budget / spec.kind.passes_per_iter()).floor() as usize).max(1);
    let mut cfg = SolverConfig::new(eta, momentum).max_iters(iters).residual_tol(spec.residual_tol).seed(seed);
    cfg.band_floor = spec.band_floor;
    match spec.kind {
        SolverKind::Pg => run_proximal_gradient(obj, x0, &cfg),
        SolverKind::Apg => run_apg(obj, x0, &cfg),
        SolverKind::Mapg => run_mapg(obj, x0, &cfg),
        SolverKind::Apgnc => run_apgnc(obj, x0, &cfg),
        SolverKind::ApgncPlus => run_apgnc_plus(obj, x0, &cfg),
        _ => {
            let cfg = cfg.grad_error(spec.grad_error.clone()).prox_error(spec.prox_error.clone());
            run_inexact_apgnc(obj, x0, &cfg)
        }
    }
}

/// One row per record in the fixed schema, floats with 17 significant digits.
pub fn trace_csv(solver: &str, seed: u64, trace: &Trace) -> String {
    let mut s = String::with_capacity(64 + trace.records.len() * 200);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{solver},{seed},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            format_f64(r.passes),
            format_f64(r.f_x),
            format_f64(r.f_y),
            format_f64(r.step_norm),
            format_f64(r.residual),
            format_f64(r.beta),
            r.chose_extrapolation,
            format_f64(r.eps_realized),
            format_f64(r.grad_err_realized),
        );
    }
    s
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed_override: Option<u64>,
}

struct RunResult {
    solver: &'static str,
    seed: u64,
    outcome: Result<Trace>,
}

fn execute(cfg: &ExperimentConfig, problem: &BuiltProblem, seeds: &[u64]) -> Vec<RunResult> {
    let jobs: Vec<(&SolverSpec, u64)> =
        cfg.solvers.iter().flat_map(|s| seeds.iter().map(move |&seed| (s, seed))).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(spec, seed)| {
                scope.spawn(move || {
                    let outcome = problem
                        .start(seed, cfg.start_scale)
                        .and_then(|x0| run_solver(spec, &problem.objective, &x0, seed, cfg.budget));
                    RunResult { solver: spec.kind.name(), seed, outcome }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    })
}

fn report_error(e: &Error) -> i32 {
    match e {
        Error::Config { line, message } => eprintln!("config error: line {line}: {message}"),
        other => eprintln!("config error: {other}"),
    }
    EXIT_CONFIG
}

struct Prepared {
    cfg: ExperimentConfig,
    problem: BuiltProblem,
    seeds: Vec<u64>,
    out: PathBuf,
}

fn prepare(config_path: &Path, opts: &RunOptions) -> std::result::Result<Prepared, i32> {
    let cfg = load_config(config_path).map_err(|e| report_error(&e))?;
    let problem = build_problem(&cfg.problem).map_err(|e| report_error(&e))?;
    let seeds = opts.seed_override.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    let out = opts.out_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("cannot create output directory {}: {e}", out.display());
        return Err(EXIT_CONFIG);
    }
    Ok(Prepared { cfg, problem, seeds, out })
}

fn write_file(path: &Path, contents: &str) -> std::result::Result<(), i32> {
    std::fs::write(path, contents).map_err(|e| {
        eprintln!("cannot write {}: {e}", path.display());
        EXIT_CONFIG
    })
}

/// Writes CSVs and the per-run part of the summary; returns the number of
/// successful runs.
fn record_runs(p: &Prepared, results: &[RunResult], report: &mut DiagnosticsReport) -> std::result::Result<usize, i32> {
    report.push("problem", &p.problem.description);
    report.push_f64("lipschitz", p.problem.objective.lipschitz());
    report.push("n_components", p.problem.objective.n_components());
    report.push_f64("budget", p.cfg.budget);
    report.push_f64("start_scale", p.cfg.start_scale);
    let mut ok = 0;
    for r in results {
        let key = format!("{}.seed{}", r.solver, r.seed);
        match &r.outcome {
            Ok(tr) => {
                ok += 1;
                write_file(&p.out.join(format!("{}_seed{}.csv", r.solver, r.seed)), &trace_csv(r.solver, r.seed, tr))?;
                report.push(format!("{key}.status"), "ok");
                report.push_f64(format!("{key}.initial_F"), tr.initial_value);
                report.push_f64(format!("{key}.final_F"), tr.final_value);
                report.push(format!("{key}.iterations"), tr.iterations());
                report.push_f64(format!("{key}.passes"), tr.passes());
                report.push(format!("{key}.terminated_by"), tr.terminated_by.as_str());
                if let Some(last) = tr.records.last() {
                    report.push_f64(format!("{key}.final_residual"), last.residual);
                }
                if let Ok(kkt) = kkt_residual(&p.problem.objective, tr.final_x.view()) {
                    report.push_f64(format!("{key}.final_kkt"), kkt);
                }
                if let Some(m) = &tr.monitor {
                    report.push_f64(format!("{key}.max_grad_error_ratio"), m.max_grad_error_ratio);
                    report.push_f64(format!("{key}.max_prox_error_ratio"), m.max_prox_error_ratio);
                    if let Some(x) = m.max_perturbation_ratio {
                        report.push_f64(format!("{key}.max_perturbation_ratio"), x);
                    }
                    report.push(format!("{key}.prox_fallbacks"), m.prox_fallbacks);
                }
            }
            Err(e) => {
                let status = match e {
                    Error::Diverged { .. } => "diverged",
                    _ => "error",
                };
                report.push(format!("{key}.status"), status);
                report.push(format!("{key}.error"), e.to_string().replace('\n', " "));
                eprintln!("{key}: {e}");
            }
        }
    }
    Ok(ok)
}

fn finish_status(results: &[RunResult], ok: usize) -> i32 {
    if ok > 0 {
        return EXIT_OK;
    }
    if results.iter().all(|r| matches!(r.outcome, Err(Error::Diverged { .. }))) {
        EXIT_DIVERGED
    } else {
        EXIT_CONFIG
    }
}

/// One CSV per (solver, seed) plus `summary.txt` in the output directory.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> i32 {
    let p = match prepare(config_path, opts) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let results = execute(&p.cfg, &p.problem, &p.seeds);
    let mut report = DiagnosticsReport::new();
    let ok = match record_runs(&p, &results, &mut report) {
        Ok(ok) => ok,
        Err(code) => return code,
    };
    if let Err(code) = write_file(&p.out.join("summary.txt"), &report.to_text()) {
        return code;
    }
    finish_status(&results, ok)
}

/// `F` of the last record at or before `passes`; `F(x0)` before the first.
fn value_at(trace: &Trace, passes: f64) -> f64 {
    trace.records.iter().take_while(|r| r.passes <= passes + 1e-9).last().map_or(trace.initial_value, |r| r.f_x)
}

/// Like [`cmd_run`], and additionally `compare.csv` with mean/min/max `F` per
/// solver at evenly spaced pass checkpoints and `compare_summary.txt`.
pub fn cmd_compare(config_path: &Path, opts: &RunOptions) -> i32 {
    let p = match prepare(config_path, opts) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if p.cfg.solvers.len() < 2 {
        eprintln!("config error: compare needs at least two solvers");
        return EXIT_CONFIG;
    }
    let results = execute(&p.cfg, &p.problem, &p.seeds);
    let mut report = DiagnosticsReport::new();
    let ok = match record_runs(&p, &results, &mut report) {
        Ok(ok) => ok,
        Err(code) => return code,
    };
    if let Err(code) = write_file(&p.out.join("summary.txt"), &report.to_text()) {
        return code;
    }

    let names: Vec<&str> = p.cfg.solvers.iter().map(|s| s.kind.name()).collect();
    let traces = |name: &str| -> Vec<&Trace> {
        results.iter().filter(|r| r.solver == name).filter_map(|r| r.outcome.as_ref().ok()).collect()
    };
    let step = p.cfg.budget / p.cfg.checkpoints as f64;
    let mut table = String::from("passes");
    for name in &names {
        let _ = write!(table, ",{name}_mean,{name}_min,{name}_max");
    }
    table.push('\n');
    for c in 0..=p.cfg.checkpoints {
        let at = step * c as f64;
        table.push_str(&format_f64(at));
        for name in &names {
            let vals: Vec<f64> = traces(name).iter().map(|t| value_at(t, at)).collect();
            if vals.is_empty() {
                table.push_str(",,,");
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let _ = write!(table, ",{},{},{}", format_f64(mean), format_f64(min), format_f64(max));
        }
        table.push('\n');
    }
    if let Err(code) = write_file(&p.out.join("compare.csv"), &table) {
        return code;
    }

    let best =
        results.iter().filter_map(|r| r.outcome.as_ref().ok()).flat_map(|t| t.values()).fold(f64::INFINITY, f64::min);
    let mut summary = DiagnosticsReport::new();
    summary.push_f64("best_F", best);
    for name in &names {
        let ts = traces(name);
        summary.push(format!("{name}.runs"), ts.len());
        if ts.is_empty() {
            continue;
        }
        let finals: Vec<f64> = ts.iter().map(|t| t.final_value).collect();
        summary.push_f64(format!("{name}.final_F_mean"), finals.iter().sum::<f64>() / finals.len() as f64);
        summary.push_f64(format!("{name}.final_F_min"), finals.iter().cloned().fold(f64::INFINITY, f64::min));
        summary.push_f64(format!("{name}.final_F_max"), finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let rates: Vec<f64> = ts
            .iter()
            .filter_map(|t| fit_linear_rate(&trim_for_fit(&t.values(), best), 0.5).ok())
            .map(|f| f.parameter)
            .collect();
        if !rates.is_empty() {
            summary.push_f64(format!("{name}.linear_rate_mean"), rates.iter().sum::<f64>() / rates.len() as f64);
        }
    }
    if let Err(code) = write_file(&p.out.join("compare_summary.txt"), &summary.to_text()) {
        return code;
    }
    finish_status(&results, ok)
}

/// Runs the invariant suite, printing one line per check.
pub fn cmd_check(full: bool) -> i32 {
    let level = if full { CheckLevel::Full } else { CheckLevel::Fast };
    let results = run_checks(level);
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += (!r.passed) as usize;
    }
    println!("{} of {} invariants passed", results.len() - failed, results.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
