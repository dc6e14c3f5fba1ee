//! The fibering map `h(t) = I(u_t, v_t)` with `u_t(x) = t u(x/t)`, its
//! unique maximizer `t̄`, and projection onto `{𝒢 = 0}`.

use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldError, Pair};
use crate::functional::{ConstraintVariant, EnergyBreakdown, Evaluator, ParamError, Params};
use crate::potential::PotentialModel;

pub const T_MIN: f64 = 1e-6;
pub const T_MAX: f64 = 1e6;
/// Relative bracket width at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-12;
/// Acceptance bound for `|𝒢|/scale` after projection.
pub const PROJECTION_TOL: f64 = 1e-6;
const PROJECTION_TARGET: f64 = 1e-10;
const PROJECTION_PASSES: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiberError {
    #[error("scaling parameter must be positive (got {0})")]
    NonPositiveT(f64),
    #[error("coupling integral vanishes; the fiber has no interior maximum")]
    ZeroCoupling,
    #[error("no sign change of h' in [{T_MIN:e}, {T_MAX:e}]")]
    BracketFailed,
    #[error("projection left |G|/scale = {0:e} after {PROJECTION_PASSES} passes")]
    ProjectionStalled(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// `a = ∫(|∇u|²+|∇v|²)`, `b = ∫(Au²+Bv²+u²|∇u|²+v²|∇v|²)`, `c = ∫|u|^α|v|^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FiberCoefficients {
    pub fn from_breakdown(bd: &EnergyBreakdown) -> Self {
        FiberCoefficients { a: 2.0 * bd.kinetic, b: 2.0 * (bd.mass() + bd.quasilinear), c: bd.coupling }
    }

    pub fn h(&self, params: &Params, t: f64) -> f64 {
        let (n, p) = (params.n(), params.p());
        0.5 * self.a * t.powf(n) + 0.5 * self.b * t.powf(n + 2.0) - 2.0 * self.c / p * t.powf(n + p)
    }

    pub fn h_prime(&self, params: &Params, t: f64) -> f64 {
        t.powf(params.n() - 1.0) * self.reduced_slope(params, t)
    }

    /// `h′(t)/t^{N−1}`, which keeps its sign and avoids underflow near 0.
    fn reduced_slope(&self, params: &Params, t: f64) -> f64 {
        let (n, p) = (params.n(), params.p());
        0.5 * n * self.a + 0.5 * (n + 2.0) * self.b * t * t - 2.0 * (n + p) / p * self.c * t.powf(p)
    }

    pub fn tbar(&self, params: &Params) -> Result<f64, FiberError> {
        if !(self.c > 0.0) {
            return Err(FiberError::ZeroCoupling);
        }
        root_of(|t| self.reduced_slope(params, t))
    }
}

/// Exponential bracketing from `t = 1` followed by bisection.
fn root_of(phi: impl Fn(f64) -> f64) -> Result<f64, FiberError> {
    let f1 = phi(1.0);
    if f1 == 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (1.0, 1.0);
    if f1 > 0.0 {
        loop {
            hi *= 2.0;
            if hi > T_MAX {
                return Err(FiberError::BracketFailed);
            }
            if phi(hi) <= 0.0 {
                break;
            }
            lo = hi;
        }
    } else {
        loop {
            lo *= 0.5;
            if lo < T_MIN {
                return Err(FiberError::BracketFailed);
            }
            if phi(lo) > 0.0 {
                break;
            }
            hi = lo;
        }
    }
    while hi - lo > BISECTION_TOL * hi {
        let mid = 0.5 * (lo + hi);
        let f = phi(mid);
        if f == 0.0 {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The fiber through one pair. For non-constant `A` the potential part is
/// re-sampled at `A(t x)` for every `t`.
#[derive(Debug, Clone)]
pub struct Fiber<'m> {
    params: Params,
    model: &'m PotentialModel,
    breakdown: EnergyBreakdown,
    coeffs: FiberCoefficients,
    weighted_u_sq: Option<Vec<f64>>,
    grid: crate::field::Grid,
}

impl<'m> Fiber<'m> {
    pub fn new(p: &Pair, params: &Params, model: &'m PotentialModel) -> Result<Self, FiberError> {
        let ev = Evaluator::new(params, model, p.grid())?;
        Ok(Self::with_breakdown(p, params, model, ev.breakdown(p)))
    }

    pub fn with_breakdown(p: &Pair, params: &Params, model: &'m PotentialModel, breakdown: EnergyBreakdown) -> Self {
        let w = p.grid().cell_volume();
        let weighted_u_sq = (!model.is_constant()).then(|| p.u.values().iter().map(|x| w * x * x).collect());
        Fiber {
            params: *params,
            model,
            breakdown,
            coeffs: FiberCoefficients::from_breakdown(&breakdown),
            weighted_u_sq,
            grid: *p.grid(),
        }
    }

    pub fn coefficients(&self) -> &FiberCoefficients {
        &self.coeffs
    }

    pub fn breakdown(&self) -> &EnergyBreakdown {
        &self.breakdown
    }

    /// `(∫A(tx)u², ∫∇A(tx)·(tx)u²)`, or `None` for constant `A`.
    fn potential_terms(&self, t: f64) -> Option<(f64, f64)> {
        let wu = self.weighted_u_sq.as_ref()?;
        let a = self.model.sample_scaled(&self.grid, t);
        let r = self.model.radial_scaled(&self.grid, t);
        let ia = a.iter().zip(wu).map(|(x, y)| x * y).sum();
        let ir = r.iter().zip(wu).map(|(x, y)| x * y).sum();
        Some((ia, ir))
    }

    fn b_without_a(&self) -> f64 {
        2.0 * (self.breakdown.mass_v + self.breakdown.quasilinear)
    }

    pub fn h(&self, t: f64) -> Result<f64, FiberError> {
        check_t(t)?;
        let Some((ia, _)) = self.potential_terms(t) else {
            return Ok(self.coeffs.h(&self.params, t));
        };
        let b = self.b_without_a() + ia;
        Ok(FiberCoefficients { b, ..self.coeffs }.h(&self.params, t))
    }

    pub fn h_prime(&self, t: f64) -> Result<f64, FiberError> {
        check_t(t)?;
        Ok(t.powf(self.params.n() - 1.0) * self.reduced_slope(t))
    }

    fn reduced_slope(&self, t: f64) -> f64 {
        let Some((ia, ir)) = self.potential_terms(t) else {
            return self.coeffs.reduced_slope(&self.params, t);
        };
        let b = self.b_without_a() + ia;
        FiberCoefficients { b, ..self.coeffs }.reduced_slope(&self.params, t) + 0.5 * t * t * ir
    }

    pub fn tbar(&self) -> Result<f64, FiberError> {
        if !(self.coeffs.c > 0.0) {
            return Err(FiberError::ZeroCoupling);
        }
        if self.weighted_u_sq.is_none() {
            return self.coeffs.tbar(&self.params);
        }
        root_of(|t| self.reduced_slope(t))
    }
}

fn check_t(t: f64) -> Result<(), FiberError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(FiberError::NonPositiveT(t))
    }
}

pub fn h(p: &Pair, params: &Params, model: &PotentialModel, t: f64) -> Result<f64, FiberError> {
    check_t(t)?;
    Fiber::new(p, params, model)?.h(t)
}

pub fn h_prime(p: &Pair, params: &Params, model: &PotentialModel, t: f64) -> Result<f64, FiberError> {
    check_t(t)?;
    Fiber::new(p, params, model)?.h_prime(t)
}

pub fn find_tbar(p: &Pair, params: &Params, model: &PotentialModel) -> Result<f64, FiberError> {
    Fiber::new(p, params, model)?.tbar()
}

/// Result of [`project`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub pair: Pair,
    /// Product of the per-pass scale factors.
    pub tbar: f64,
    /// Amplitude factor applied after rescaling.
    pub amplitude: f64,
    pub passes: usize,
    pub breakdown: EnergyBreakdown,
    /// `|𝒢|/scale` of the returned pair.
    pub residual: f64,
}

fn relative_constraint(bd: &EnergyBreakdown, params: &Params) -> f64 {
    let scale = bd.constraint_scale(params);
    if scale == 0.0 {
        0.0
    } else {
        bd.constraint(params, ConstraintVariant::Consistent).abs() / scale
    }
}

/// Root near 1 of `λ ↦ 𝒢(λp)/λ²`, which is `g2 + g4 λ² − gc λ^{α+β−2}`.
fn amplitude_root(bd: &EnergyBreakdown, params: &Params) -> Option<f64> {
    let (n, p) = (params.n(), params.p());
    let g2 = n * bd.kinetic + (n + 2.0) * bd.mass() + bd.radial_term;
    let g4 = (n + 2.0) * bd.quasilinear;
    let gc = 2.0 * (n + p) / p * bd.coupling;
    let phi = |l: f64| g2 + g4 * l * l - gc * l.powf(p - 2.0);
    let f1 = phi(1.0);
    if f1 == 0.0 {
        return Some(1.0);
    }
    let mut r = 1.001f64;
    let (mut near, mut far) = (1.0, 1.0);
    while r < 4.0 {
        let found = [r, 1.0 / r].into_iter().find(|&l| (phi(l) > 0.0) != (f1 > 0.0));
        if let Some(l) = found {
            far = l;
            break;
        }
        r = r * r;
    }
    if far == 1.0 {
        return None;
    }
    while (far - near).abs() > BISECTION_TOL * far.max(near) {
        let mid = 0.5 * (near + far);
        if (phi(mid) > 0.0) == (f1 > 0.0) {
            near = mid;
        } else {
            far = mid;
        }
    }
    Some(0.5 * (near + far))
}

/// Rescales `p` onto `{𝒢 = 0}` by `t̄`. Interpolation on the fixed lattice
/// moves the constraint slightly, so the rescaled pair is then multiplied
/// by the amplitude that zeroes `𝒢` exactly.
pub fn project(p: &Pair, ev: &Evaluator, model: &PotentialModel) -> Result<Projection, FiberError> {
    let params = *ev.params();
    let mut pair = p.clone();
    let mut bd = ev.breakdown(&pair);
    let mut residual = relative_constraint(&bd, &params);
    let mut total = 1.0;
    let mut amplitude = 1.0;
    let mut passes = 0;
    while residual > PROJECTION_TARGET && passes < PROJECTION_PASSES {
        let t = Fiber::with_breakdown(&pair, &params, model, bd).tbar()?;
        if (passes == 0 && t != 1.0) || (t - 1.0).abs() > 0.05 || amplitude_root(&bd, &params).is_none() {
            pair = pair.rescale(t)?;
            total *= t;
        } else {
            let l = amplitude_root(&bd, &params).expect("checked above");
            pair = pair.scaled(l);
            amplitude *= l;
        }
        bd = ev.breakdown(&pair);
        residual = relative_constraint(&bd, &params);
        passes += 1;
    }
    if residual > PROJECTION_TOL {
        return Err(FiberError::ProjectionStalled(residual));
    }
    Ok(Projection { pair, tbar: total, amplitude, passes, breakdown: bd, residual })
}

#[allow(non_snake_case)]
pub fn project_to_M(p: &Pair, params: &Params, model: &PotentialModel) -> Result<Pair, FiberError> {
    let ev = Evaluator::new(params, model, p.grid())?;
    Ok(project(p, &ev, model)?.pair)
}

/// One row of a fiber scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberSample {
    pub t: f64,
    pub h: f64,
    pub h_prime: f64,
    /// `𝒢` evaluated directly on the dilated pair.
    pub constraint: f64,
}

pub const FIBER_CSV_HEADER: &str = "t,h,h_prime,G";

impl FiberSample {
    pub fn csv_row(&self) -> String {
        format!("{:e},{:e},{:e},{:e}", self.t, self.h, self.h_prime, self.constraint)
    }
}

pub fn fiber_scan(
    p: &Pair,
    params: &Params,
    model: &PotentialModel,
    ts: &[f64],
    variant: ConstraintVariant,
) -> Result<Vec<FiberSample>, FiberError> {
    let fiber = Fiber::new(p, params, model)?;
    ts.iter()
        .map(|&t| {
            let scaled = p.dilate(t)?;
            let ev = Evaluator::new(params, model, scaled.grid())?;
            Ok(FiberSample {
                t,
                h: fiber.h(t)?,
                h_prime: fiber.h_prime(t)?,
                constraint: ev.breakdown(&scaled).constraint(params, variant),
            })
        })
        .collect()
}

/// `count` points spaced evenly in `log t` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Field, Grid};
    use crate::functional::{breakdown, constraint_g, energy_i};
    use crate::potential::normalized_curvature;
    use crate::symmetry::{build_group, equivariance_defect};
    use crate::testing::{gaussian_pair, random_smooth_pair};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params22() -> Params {
        Params::new(3, 2.0, 2.0, 1.0).unwrap()
    }

    fn coeffs(a: f64, b: f64, c: f64) -> FiberCoefficients {
        FiberCoefficients { a, b, c }
    }

    #[test]
    fn polynomial_instances() {
        let p = params22();
        let k = coeffs(2.0 / 3.0, 1.0, 1.0);
        for t in [0.3f64, 1.0, 1.7] {
            let expect = t.powi(3) / 3.0 + 0.5 * t.powi(5) - 0.5 * t.powi(7);
            assert!((k.h(&p, t) - expect).abs() < 1e-14 * expect.abs().max(1.0));
        }
        assert!((k.h(&p, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!(k.h_prime(&p, 1.0).abs() < 1e-15);
        assert!((k.tbar(&p).unwrap() - 1.0).abs() < 1e-11);
        assert!((coeffs(1.0, 1.0, 8.0 / 7.0).tbar(&p).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn tbar_agrees_with_grid_search() {
        let p = params22();
        let k = coeffs(1.3, 0.4, 0.9);
        let ts = log_grid(0.01, 100.0, 200_001);
        let best = ts.iter().copied().max_by(|x, y| k.h(&p, *x).total_cmp(&k.h(&p, *y))).unwrap();
        assert!((k.tbar(&p).unwrap() / best - 1.0).abs() < 1e-4);
    }

    #[test]
    fn tbar_decreases_with_coupling() {
        let p = Params::new(3, 2.5, 1.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = coeffs(rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0));
            let doubled = FiberCoefficients { c: 2.0 * k.c, ..k };
            assert!(doubled.tbar(&p).unwrap() < k.tbar(&p).unwrap());
        }
    }

    #[test]
    fn h_prime_matches_finite_differences() {
        let p = Params::new(3, 2.2, 1.9, 1.4).unwrap();
        let k = coeffs(0.8, 1.1, 0.7);
        for t in [0.5f64, 1.0, 2.0] {
            let e = 1e-6 * t;
            let fd = (k.h(&p, t + e) - k.h(&p, t - e)) / (2.0 * e);
            let an = k.h_prime(&p, t);
            assert!((fd - an).abs() <= 1e-7 * an.abs().max(1e-3), "t={t}: {fd} {an}");
        }
    }

    #[test]
    fn small_t_is_positive_and_rejects_nonpositive() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0);
        let m = PotentialModel::constant(1.0);
        let v = h(&pair, &params22(), &m, 1e-3).unwrap();
        assert!(v > 0.0);
        assert!(matches!(h(&pair, &params22(), &m, 0.0), Err(FiberError::NonPositiveT(_))));
        assert!(h_prime(&pair, &params22(), &m, -1.0).is_err());
    }

    #[test]
    fn h_at_one_is_energy() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.2);
        let p = params22();
        for m in [PotentialModel::constant(1.0), PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap()] {
            let i = energy_i(&pair, &p, &m);
            assert!((h(&pair, &p, &m, 1.0).unwrap() - i).abs() <= 1e-12 * i.abs());
        }
    }

    #[test]
    fn zero_coupling_fails() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0);
        let half = Pair::new(pair.u.clone(), Field::zeros(g)).unwrap();
        let m = PotentialModel::constant(1.0);
        assert_eq!(find_tbar(&half, &params22(), &m), Err(FiberError::ZeroCoupling));
    }

    #[test]
    fn closed_form_matches_reevaluation() {
        // a tabulated constant takes the re-evaluation path
        let g = Grid::new(3, 5.0, 17).unwrap();
        let table = crate::potential::TabulatedPotential::new(Field::from_fn(g, |_| 1.0), None).unwrap();
        let tab = PotentialModel::tabulated(table, Some(1.0));
        assert!(!tab.is_constant());
        let c = PotentialModel::constant(1.0);
        let pair = gaussian_pair(g, 1.0, 1.0);
        let p = params22();
        let fc = Fiber::new(&pair, &p, &c).unwrap();
        let ft = Fiber::new(&pair, &p, &tab).unwrap();
        for t in log_grid(0.3, 3.0, 15) {
            let (a, b) = (fc.h(t).unwrap(), ft.h(t).unwrap());
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-12), "t={t}");
            let (a, b) = (fc.h_prime(t).unwrap(), ft.h_prime(t).unwrap());
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn constraint_of_dilated_pair_is_t_h_prime() {
        let g = Grid::new(3, 5.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pair = random_smooth_pair(g, &mut rng);
        let p = params22();
        for m in [PotentialModel::constant(1.0), PotentialModel::lorentzian(2.0, 1.0, 1.5).unwrap()] {
            let fiber = Fiber::new(&pair, &p, &m).unwrap();
            for t in log_grid(0.5, 2.0, 9) {
                let lhs = constraint_g(&pair.dilate(t).unwrap(), &p, &m, ConstraintVariant::Consistent);
                let rhs = t * fiber.h_prime(t).unwrap();
                let scale = breakdown(&pair.dilate(t).unwrap(), &p, &m).constraint_scale(&p);
                assert!((lhs - rhs).abs() <= 1e-10 * scale, "t={t}: {lhs} {rhs}");
                let e = energy_i(&pair.dilate(t).unwrap(), &p, &m);
                assert!((e - fiber.h(t).unwrap()).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn nonconstant_h_prime_matches_finite_differences() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0);
        let m = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        let f = Fiber::new(&pair, &params22(), &m).unwrap();
        for t in [0.5f64, 1.0, 2.0] {
            let e = 1e-5 * t;
            let fd = (f.h(t + e).unwrap() - f.h(t - e).unwrap()) / (2.0 * e);
            let an = f.h_prime(t).unwrap();
            assert!((fd - an).abs() <= 1e-7 * an.abs().max(1e-2), "t={t}");
        }
    }

    #[test]
    fn projection_lands_on_manifold_and_is_idempotent() {
        let g = Grid::new(3, 6.0, 33).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0).scaled(2.0);
        let p = params22();
        let m = PotentialModel::constant(1.0);
        let proj = project_to_M(&pair, &p, &m).unwrap();
        let bd = breakdown(&proj, &p, &m);
        assert!(bd.constraint(&p, ConstraintVariant::Consistent).abs() <= PROJECTION_TOL * bd.constraint_scale(&p));
        let again = project_to_M(&proj, &p, &m).unwrap();
        assert!(again.axpy(-1.0, &proj).unwrap().norm_l2() <= 1e-6 * proj.norm_l2());
    }

    #[test]
    fn projection_keeps_points_on_manifold() {
        let g = Grid::new(3, 6.0, 33).unwrap();
        let p = params22();
        let m = PotentialModel::constant(1.0);
        let proj = project_to_M(&gaussian_pair(g, 1.0, 1.0), &p, &m).unwrap();
        let ev = Evaluator::new(&p, &m, &g).unwrap();
        let exact = Pair::new(proj.u.clone(), proj.v.clone()).unwrap();
        let r = project(&exact, &ev, &m).unwrap();
        if r.residual <= PROJECTION_TARGET {
            assert_eq!(r.passes, 0);
            assert_eq!(r.pair, exact);
        }
    }

    #[test]
    fn projection_preserves_equivariance() {
        let g = Grid::new(3, 6.0, 33).unwrap();
        let seed = |x: &[f64]| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            2.0 * x[0] * x[1] * (-r2 / 2.0).exp()
        };
        let pair = Pair::new(Field::from_fn(g, seed), Field::from_fn(g, |x| 1.5 * seed(x))).unwrap();
        let group = build_group(2).unwrap();
        assert!(equivariance_defect(&pair, &group) <= 1e-14);
        let proj = project_to_M(&pair, &params22(), &PotentialModel::constant(1.0)).unwrap();
        assert!(equivariance_defect(&proj, &group) <= 1e-10);
    }

    #[test]
    fn energy_on_manifold_is_fiber_maximum() {
        let g = Grid::new(3, 6.0, 33).unwrap();
        let p = params22();
        let m = PotentialModel::constant(1.0);
        let proj = project_to_M(&gaussian_pair(g, 1.3, 0.9), &p, &m).unwrap();
        let fiber = Fiber::new(&proj, &p, &m).unwrap();
        let mut ts = log_grid(1e-6, 1e6, 400);
        ts.extend(log_grid(0.99, 1.01, 2001));
        let best = ts.iter().map(|&t| fiber.h(t).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let i = energy_i(&proj, &p, &m);
        assert!((best - i).abs() <= 1e-6 * i);
    }

    fn sign_changes(xs: &[f64]) -> usize {
        xs.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
    }

    proptest! {
        #[test]
        fn unimodal_on_log_grid(a in 0.01f64..10.0, b in 0.01f64..10.0, c in 0.01f64..10.0,
                                alpha in 1.1f64..5.0, beta in 1.1f64..5.0) {
            prop_assume!(alpha + beta < 11.9);
            let p = Params::new(3, alpha, beta, 1.0).unwrap();
            let k = coeffs(a, b, c);
            let slopes: Vec<f64> = log_grid(T_MIN, T_MAX, 400).iter().map(|&t| k.reduced_slope(&p, t)).collect();
            prop_assert_eq!(sign_changes(&slopes), 1);
            let tb = k.tbar(&p).unwrap();
            prop_assert!(k.h_prime(&p, 0.5 * tb) > 0.0 && k.h_prime(&p, 2.0 * tb) < 0.0);
        }

        #[test]
        fn concave_in_sigma(a in 0.01f64..10.0, b in 0.01f64..10.0, c in 0.01f64..10.0) {
            let p = params22();
            let k = coeffs(a, b, c);
            let e = p.n() + p.p();
            let sig = log_grid(1e-6, 1e6, 200);
            let hs: Vec<f64> = sig.iter().map(|s| k.h(&p, s.powf(1.0 / e))).collect();
            for i in 1..sig.len() - 1 {
                prop_assert!(normalized_curvature(&sig[i - 1..=i + 1], &hs[i - 1..=i + 1]) <= 1e-10);
            }
        }
    }

    #[test]
    fn unimodal_for_random_pairs() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = params22();
        let m = PotentialModel::constant(1.0);
        for _ in 0..100 {
            let pair = random_smooth_pair(g, &mut rng);
            let k = *Fiber::new(&pair, &p, &m).unwrap().coefficients();
            assert!(k.a > 0.0 && k.b > 0.0 && k.c > 0.0);
            let slopes: Vec<f64> = log_grid(T_MIN, T_MAX, 400).iter().map(|&t| k.reduced_slope(&p, t)).collect();
            assert_eq!(sign_changes(&slopes), 1);
        }
    }

    #[test]
    fn fiber_scan_rows() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0);
        let rows = fiber_scan(
            &pair,
            &params22(),
            &PotentialModel::constant(1.0),
            &[0.5, 1.0, 2.0],
            ConstraintVariant::Consistent,
        )
        .unwrap();
        for r in &rows {
            assert!((r.constraint - r.t * r.h_prime).abs() <= 1e-10 * r.constraint.abs().max(1.0));
        }
        assert_eq!(rows[0].csv_row().split(',').count(), 4);
    }
}
