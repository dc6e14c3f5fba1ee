//! Projected descent for `min I` over `{𝒢 = 0}` within the equivariant
//! class, and the multistart estimate of the infimum `m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{nodal_domains, Component, DEFAULT_NODAL_THRESHOLD};
use crate::fibering::{project, FiberError};
use crate::field::{distance_x, Field, FieldError, Grid, Pair};
use crate::functional::{ConstraintVariant, EnergyBreakdown, Evaluator, ParamError, Params, Weights};
use crate::potential::PotentialModel;
use crate::precond::SobolevPreconditioner;
use crate::symmetry::{build_group, equivariance_defect, symmetrize_pair, DihedralGroup, SymmetryError};

/// Angular-Gaussian seed widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedProfile {
    pub width_u: f64,
    pub width_v: f64,
}

impl Default for SeedProfile {
    fn default() -> Self {
        SeedProfile { width_u: 1.0, width_v: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub s: usize,
    pub step0: f64,
    pub shrink: f64,
    /// `None` means `1e−6·(1 + d_X(seed, 0))`.
    pub tol_dx: Option<f64>,
    pub tol_grad: f64,
    pub max_iter: usize,
    pub coupling_floor: f64,
    pub seed_profile: SeedProfile,
    /// Shift `c` of the `(c − Δ)^{-1}` preconditioner; `0` disables it.
    pub precondition_shift: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            s: 2,
            step0: 1e-2,
            shrink: 0.5,
            tol_dx: None,
            tol_grad: 1e-5,
            max_iter: 5000,
            coupling_floor: 1e-10,
            seed_profile: SeedProfile::default(),
            precondition_shift: 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("symmetry order s must be >= 2 (got {0})")]
    Order(usize),
    #[error("solver setting `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("shrink must lie in (0, 1) (got {0})")]
    Shrink(f64),
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.s < 2 {
            return Err(ConfigError::Order(self.s));
        }
        let positive = [
            ("step0", self.step0),
            ("tol_grad", self.tol_grad),
            ("coupling_floor", self.coupling_floor),
            ("seed_profile.width_u", self.seed_profile.width_u),
            ("seed_profile.width_v", self.seed_profile.width_v),
            ("tol_dx", self.tol_dx.unwrap_or(1.0)),
            ("max_iter", self.max_iter as f64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(ConfigError::NonPositive(name));
        }
        if !(self.precondition_shift >= 0.0 && self.precondition_shift.is_finite()) {
            return Err(ConfigError::NonPositive("precondition_shift"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(ConfigError::Shrink(self.shrink));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    CouplingCollapse,
    FiberingFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::GradientTolerance | Termination::StepTolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub constraint: f64,
    pub grad_norm: f64,
    pub dx: f64,
}

pub const TRACE_CSV_HEADER: &str = "iter,I,G,gradnorm,dx";

impl TraceRow {
    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{:e},{:e}", self.iter, self.energy, self.constraint, self.grad_norm, self.dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub final_pair: Pair,
    pub grid: Grid,
    pub s: usize,
    pub termination: Termination,
    pub converged: bool,
    pub m_estimate: f64,
    /// `|𝒢|` of the final pair.
    pub constraint_residual: f64,
    pub constraint_scale: f64,
    /// `|P|` of the final pair.
    pub pohozaev_residual: f64,
    pub pohozaev_scale: f64,
    /// Norm of the energy gradient after removing its constraint-normal part.
    pub grad_norm: f64,
    pub equivariance_defect: f64,
    pub nodal_count_u: usize,
    pub nodal_count_v: usize,
    pub reduced_energy: f64,
    pub breakdown: EnergyBreakdown,
    pub iterations: usize,
    pub tol_dx: f64,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    pub fn pohozaev_relative(&self) -> f64 {
        self.pohozaev_residual / self.pohozaev_scale
    }

    pub fn constraint_relative(&self) -> f64 {
        self.constraint_residual / self.constraint_scale
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for row in &self.trace {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("not converged after {} iterations", .0.iterations)]
    NonConverged(Box<SolveReport>),
    #[error("coupling integral {coupling:e} fell below the floor at iteration {iteration}")]
    CouplingCollapse { iteration: usize, coupling: f64, report: Option<Box<SolveReport>> },
    #[error("fibering failed at iteration {iteration}: {source}")]
    FiberingFailure { iteration: usize, source: FiberError, report: Option<Box<SolveReport>> },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl SolveError {
    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            SolveError::NonConverged(r) => Some(r),
            SolveError::CouplingCollapse { report, .. } | SolveError::FiberingFailure { report, .. } => {
                report.as_deref()
            }
            _ => None,
        }
    }
}

/// `exp(−|x|²/w²)·sin(sθ)` with `θ = atan2(x₂, x₁)`.
fn angular_gaussian(grid: Grid, s: usize, width: f64) -> Field {
    Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        (-r2 / (width * width)).exp() * (s as f64 * x[1].atan2(x[0])).sin()
    })
}

pub fn initial_seed(config: &SolverConfig, grid: &Grid, params: &Params) -> Result<Pair, SolveError> {
    config.validate()?;
    let pair = Pair {
        u: angular_gaussian(*grid, config.s, config.seed_profile.width_u),
        v: angular_gaussian(*grid, config.s, config.seed_profile.width_v),
    };
    let c = crate::functional::coupling(&pair, params);
    if c <= config.coupling_floor {
        return Err(SolveError::CouplingCollapse { iteration: 0, coupling: c, report: None });
    }
    Ok(pair)
}

fn dot(a: &Pair, b: &Pair) -> f64 {
    a.dot(b).expect("same grid")
}

struct Descent {
    g: Pair,
    h: Pair,
    ph: Pair,
    hph: f64,
    /// Preconditioned gradient with its constraint-normal part removed.
    z: Pair,
    grad_norm: f64,
}

impl Descent {
    /// Removes the constraint-normal part of `d` in the preconditioned metric.
    fn tangent(&self, d: &Pair) -> Pair {
        if self.hph > 0.0 {
            d.axpy(-dot(&self.h, d) / self.hph, &self.ph).expect("same grid")
        } else {
            d.clone()
        }
    }
}

struct State {
    pair: Pair,
    breakdown: EnergyBreakdown,
    energy: f64,
}

const MAX_EXPANSIONS: usize = 4;

struct Run<'a> {
    config: &'a SolverConfig,
    params: Params,
    model: &'a PotentialModel,
    group: DihedralGroup,
    ev: Evaluator,
    precond: Option<SobolevPreconditioner>,
}

impl Run<'_> {
    /// Symmetrize, check coupling and retract onto the manifold.
    fn admit(&self, candidate: &Pair, iteration: usize) -> Result<State, SolveError> {
        let sym = symmetrize_pair(candidate, &self.group);
        let c = crate::functional::coupling(&sym, &self.params);
        if !(c > self.config.coupling_floor) {
            return Err(SolveError::CouplingCollapse { iteration, coupling: c, report: None });
        }
        let proj = project(&sym, &self.ev, self.model).map_err(|source| SolveError::FiberingFailure {
            iteration,
            source,
            report: None,
        })?;
        let energy = proj.breakdown.energy(&self.params);
        Ok(State { pair: proj.pair, breakdown: proj.breakdown, energy })
    }

    /// First decreasing trial from `2·step` downward, then doubled while the
    /// energy keeps dropping.
    fn line_search(
        &self,
        state: &State,
        dir: &Pair,
        step: f64,
        iter: usize,
    ) -> Result<Option<(State, f64)>, SolveError> {
        let try_step = |t: f64| -> Result<Option<State>, SolveError> {
            let candidate = state.pair.axpy(t, dir)?;
            match self.admit(&candidate, iter) {
                Ok(next) => Ok(Some(next)),
                Err(SolveError::CouplingCollapse { .. }) | Err(SolveError::FiberingFailure { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };
        // below this the trial point equals the iterate to rounding
        let floor = 1e-15 * (1.0 + state.pair.norm_l2()) / dir.norm_l2().max(f64::MIN_POSITIVE);
        let mut t = 2.0 * step;
        let mut best = loop {
            if t <= floor {
                return Ok(None);
            }
            match try_step(t)? {
                Some(next) if next.energy < state.energy => break (next, t),
                _ => t *= self.config.shrink,
            }
        };
        for _ in 0..MAX_EXPANSIONS {
            let t2 = best.1 / self.config.shrink;
            match try_step(t2)? {
                Some(next) if next.energy < best.0.energy => best = (next, t2),
                _ => break,
            }
        }
        Ok(Some(best))
    }

    /// Energy gradient, its preconditioned tangential part and the
    /// tangential gradient norm.
    fn descent(&self, pair: &Pair) -> Descent {
        let grads = self.ev.gradients(
            pair,
            &[Weights::energy(&self.params), Weights::constraint(&self.params, ConstraintVariant::Consistent)],
        );
        let [g, h]: [Pair; 2] = grads.try_into().expect("two weight sets");
        let hh = dot(&h, &h);
        let tangential = if hh > 0.0 { g.axpy(-dot(&g, &h) / hh, &h).expect("same grid") } else { g.clone() };
        let grad_norm = tangential.norm_l2();
        let ph = match &self.precond {
            Some(pc) => pc.apply_pair(&h),
            None => h.clone(),
        };
        let hph = dot(&h, &ph);
        let z = match &self.precond {
            Some(pc) => {
                let pg = pc.apply_pair(&g);
                let c = if hph > 0.0 { dot(&g, &ph) / hph } else { 0.0 };
                pg.axpy(-c, &ph).expect("same grid")
            }
            None => tangential,
        };
        Descent { g, h, ph, hph, z, grad_norm }
    }

    fn report(
        &self,
        state: &State,
        termination: Termination,
        trace: Vec<TraceRow>,
        grad_norm: f64,
        tol_dx: f64,
    ) -> SolveReport {
        let bd = state.breakdown;
        let p = &self.params;
        let eps = |f: &Field| DEFAULT_NODAL_THRESHOLD * f.max_abs();
        let nu = nodal_domains(&state.pair.u, eps(&state.pair.u)).with_component(Component::U);
        let nv = nodal_domains(&state.pair.v, eps(&state.pair.v)).with_component(Component::V);
        SolveReport {
            final_pair: state.pair.clone(),
            grid: *self.ev.grid(),
            s: self.config.s,
            termination,
            converged: termination.converged(),
            m_estimate: state.energy,
            constraint_residual: bd.constraint(p, ConstraintVariant::Consistent).abs(),
            constraint_scale: bd.constraint_scale(p),
            pohozaev_residual: bd.pohozaev(p).abs(),
            pohozaev_scale: bd.pohozaev_scale(p),
            grad_norm,
            equivariance_defect: equivariance_defect(&state.pair, &self.group),
            nodal_count_u: nu.total,
            nodal_count_v: nv.total,
            reduced_energy: bd.reduced(p),
            breakdown: bd,
            iterations: trace.last().map_or(0, |r| r.iter),
            tol_dx,
            trace,
        }
    }
}

/// Minimizes from the angular-Gaussian seed.
pub fn minimize(
    config: &SolverConfig,
    params: &Params,
    model: &PotentialModel,
    grid: &Grid,
) -> Result<SolveReport, SolveError> {
    let seed = initial_seed(config, grid, params)?;
    minimize_from(config, params, model, seed)
}

/// Minimizes from an arbitrary starting pair.
pub fn minimize_from(
    config: &SolverConfig,
    params: &Params,
    model: &PotentialModel,
    start: Pair,
) -> Result<SolveReport, SolveError> {
    config.validate()?;
    params.validate()?;
    let grid = *start.grid();
    let run = Run {
        config,
        params: *params,
        model,
        group: build_group(config.s)?,
        ev: Evaluator::new(params, model, &grid)?,
        precond: (config.precondition_shift > 0.0).then(|| SobolevPreconditioner::new(grid, config.precondition_shift)),
    };
    let tol_dx =
        config.tol_dx.unwrap_or_else(|| 1e-6 * (1.0 + distance_x(&start, &Pair::zeros(grid)).expect("same grid")));

    let mut state = run.admit(&start, 0)?;
    let mut desc = run.descent(&state.pair);
    let mut dir = desc.z.scaled(-1.0);
    let mut trace = vec![TraceRow {
        iter: 0,
        energy: state.energy,
        constraint: state.breakdown.constraint(params, ConstraintVariant::Consistent),
        grad_norm: desc.grad_norm,
        dx: 0.0,
    }];
    let mut step = config.step0;
    let mut iter = 0;
    let termination = loop {
        if desc.grad_norm < config.tol_grad {
            break Termination::GradientTolerance;
        }
        if iter >= config.max_iter {
            break Termination::MaxIterations;
        }
        iter += 1;

        let mut search = run.line_search(&state, &dir, step, iter)?;
        if search.is_none() && dir != desc.z.scaled(-1.0) {
            dir = desc.z.scaled(-1.0);
            search = run.line_search(&state, &dir, step, iter)?;
        }
        let Some((next, accepted_step)) = search else {
            // no decrease at any representable step: the iterate does not move
            trace.push(TraceRow {
                iter,
                energy: state.energy,
                constraint: state.breakdown.constraint(params, ConstraintVariant::Consistent),
                grad_norm: desc.grad_norm,
                dx: 0.0,
            });
            break Termination::StepTolerance;
        };
        step = accepted_step;
        let dx = distance_x(&next.pair, &state.pair)?;
        state = next;
        let fresh = run.descent(&state.pair);
        // Polak–Ribière with restart, directions carried over by tangent projection
        let beta = (dot(&fresh.g, &fresh.z) - dot(&fresh.g, &desc.z)) / dot(&desc.g, &desc.z);
        let carried = fresh.tangent(&dir);
        let candidate = fresh.z.scaled(-1.0).axpy(beta.max(0.0), &carried)?;
        dir = if beta.is_finite() && dot(&fresh.g, &candidate) < 0.0 { candidate } else { fresh.z.scaled(-1.0) };
        desc = fresh;
        trace.push(TraceRow {
            iter,
            energy: state.energy,
            constraint: state.breakdown.constraint(params, ConstraintVariant::Consistent),
            grad_norm: desc.grad_norm,
            dx,
        });
        if dx < tol_dx {
            break Termination::StepTolerance;
        }
    };
    let grad_norm = desc.grad_norm;
    let report = run.report(&state, termination, trace, grad_norm, tol_dx);
    if report.converged {
        Ok(report)
    } else {
        Err(SolveError::NonConverged(Box::new(report)))
    }
}

/// Minimum of `m` over runs, with the spread `max − min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MEstimate {
    pub m: f64,
    pub max: f64,
    pub spread: f64,
    pub runs: usize,
}

impl MEstimate {
    pub fn relative_spread(&self) -> f64 {
        self.spread / self.m
    }
}

pub fn estimate_m(reports: &[SolveReport]) -> Option<MEstimate> {
    let values: Vec<f64> = reports.iter().filter(|r| r.converged).map(|r| r.m_estimate).collect();
    let m = values.iter().copied().reduce(f64::min)?;
    let max = values.iter().copied().reduce(f64::max)?;
    Some(MEstimate { m, max, spread: max - m, runs: values.len() })
}

/// Width pairs used by the default multistart.
pub const MULTISTART_WIDTHS: [(f64, f64); 5] = [(1.0, 1.0), (1.5, 1.5), (1.0, 1.5), (1.5, 1.0), (2.0, 2.0)];

/// Independent solves over seed widths; results keep the input order.
pub fn multistart(
    config: &SolverConfig,
    params: &Params,
    model: &PotentialModel,
    grid: &Grid,
    widths: &[(f64, f64)],
    workers: usize,
) -> Vec<Result<SolveReport, SolveError>> {
    let configs: Vec<SolverConfig> = widths
        .iter()
        .map(|&(width_u, width_v)| SolverConfig { seed_profile: SeedProfile { width_u, width_v }, ..*config })
        .collect();
    let workers = workers.clamp(1, configs.len().max(1));
    if workers == 1 {
        return configs.iter().map(|c| minimize(c, params, model, grid)).collect();
    }
    let mut results: Vec<Option<Result<SolveReport, SolveError>>> = vec![None; configs.len()];
    std::thread::scope(|scope| {
        for (chunk_cfg, chunk_out) in
            configs.chunks(configs.len().div_ceil(workers)).zip(results.chunks_mut(configs.len().div_ceil(workers)))
        {
            scope.spawn(move || {
                for (c, out) in chunk_cfg.iter().zip(chunk_out.iter_mut()) {
                    *out = Some(minimize(c, params, model, grid));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot filled")).collect()
}
