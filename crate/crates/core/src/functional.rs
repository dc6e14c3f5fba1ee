//! The energy
//!
//! ```text
//! I(u,v) = ½∫(|∇u|²+|∇v|²+A u²+B v²) + ½∫(u²|∇u|²+v²|∇v|²) − 2/(α+β) ∫|u|^α|v|^β
//! ```
//!
//! and the functionals derived from it, all assembled from one
//! [`EnergyBreakdown`] so that algebraic identities between them hold to
//! rounding. Gradients are exact derivatives of the discrete sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{add_neg_laplacian, dot_raw, Field, Grid, Pair};
use crate::potential::PotentialModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("hypothesis violated: N >= 3 (got N = {0})")]
    Dimension(usize),
    #[error("hypothesis violated: alpha > 1 and beta > 1 (got alpha = {alpha}, beta = {beta})")]
    Exponents { alpha: f64, beta: f64 },
    #[error("hypothesis violated: alpha+beta must lie in (2, 4N/(N-2)) = (2, {critical}) (got alpha+beta = {sum})")]
    Subcritical { sum: f64, critical: f64 },
    #[error("hypothesis violated: B > 0 is a constant (got B = {0})")]
    Coupling(f64),
    #[error("parameters are for N = {params} but the grid has {grid} axes")]
    GridDims { params: usize, grid: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "N")]
    pub n_dims: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl Params {
    pub fn new(n_dims: usize, alpha: f64, beta: f64, b: f64) -> Result<Self, ParamError> {
        let p = Params { n_dims, alpha, beta, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n_dims < 3 {
            return Err(ParamError::Dimension(self.n_dims));
        }
        if !(self.alpha > 1.0 && self.beta > 1.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(ParamError::Exponents { alpha: self.alpha, beta: self.beta });
        }
        let sum = self.alpha + self.beta;
        let critical = self.critical_exponent();
        if !(sum > 2.0 && sum < critical) {
            return Err(ParamError::Subcritical { sum, critical });
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(ParamError::Coupling(self.b));
        }
        Ok(())
    }

    /// `4N/(N−2)`.
    pub fn critical_exponent(&self) -> f64 {
        let n = self.n_dims as f64;
        4.0 * n / (n - 2.0)
    }

    /// `α + β`.
    pub fn p(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn n(&self) -> f64 {
        self.n_dims as f64
    }
}

/// Which constraint functional to evaluate.
///
/// `Consistent` carries the extra `½∫(∇A·x)u²` term that makes it the
/// exact scaling derivative `t d/dt I(u_t, v_t)` at `t = 1` for
/// non-constant `A`; `Literal` omits it. They agree for constant `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintVariant {
    #[default]
    Consistent,
    Literal,
}

/// Every integral that enters `I`, `𝒢`, `P` and `J`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `½∫(|∇u|²+|∇v|²)`
    pub kinetic: f64,
    /// `½∫A u²`
    pub mass_u: f64,
    /// `½∫B v²`
    pub mass_v: f64,
    /// `½∫(u²|∇u|²+v²|∇v|²)`
    pub quasilinear: f64,
    /// `∫|u|^α|v|^β`
    pub coupling: f64,
    /// `½∫(∇A·x)u²`
    pub radial_term: f64,
}

pub const BREAKDOWN_CSV_HEADER: &str = "kinetic,mass,quasilinear,coupling,radial_term";

impl EnergyBreakdown {
    pub fn mass(&self) -> f64 {
        self.mass_u + self.mass_v
    }

    pub fn energy(&self, params: &Params) -> f64 {
        self.kinetic + self.mass() + self.quasilinear - 2.0 / params.p() * self.coupling
    }

    pub fn constraint(&self, params: &Params, variant: ConstraintVariant) -> f64 {
        let (n, p) = (params.n(), params.p());
        let base = n * self.kinetic + (n + 2.0) * (self.mass() + self.quasilinear) - 2.0 * (n + p) / p * self.coupling;
        match variant {
            ConstraintVariant::Consistent => base + self.radial_term,
            ConstraintVariant::Literal => base,
        }
    }

    /// Sum of the absolute values of the terms of the constraint.
    pub fn constraint_scale(&self, params: &Params) -> f64 {
        let (n, p) = (params.n(), params.p());
        n * self.kinetic.abs()
            + (n + 2.0) * (self.mass().abs() + self.quasilinear.abs())
            + 2.0 * (n + p) / p * self.coupling.abs()
            + self.radial_term.abs()
    }

    pub fn pohozaev(&self, params: &Params) -> f64 {
        let (n, p) = (params.n(), params.p());
        (n - 2.0) * (self.kinetic + self.quasilinear) + n * self.mass() + self.radial_term - 2.0 * n / p * self.coupling
    }

    pub fn pohozaev_scale(&self, params: &Params) -> f64 {
        let (n, p) = (params.n(), params.p());
        (n - 2.0) * (self.kinetic.abs() + self.quasilinear.abs())
            + n * self.mass().abs()
            + self.radial_term.abs()
            + 2.0 * n / p * self.coupling.abs()
    }

    /// `I − 𝒢/(N+α+β)` written without the coupling integral.
    pub fn reduced(&self, params: &Params) -> f64 {
        let (n, p) = (params.n(), params.p());
        (p * self.kinetic + (p - 2.0) * (self.mass_v + self.quasilinear) + (p - 2.0) * self.mass_u - self.radial_term)
            / (n + p)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e}",
            self.kinetic,
            self.mass(),
            self.quasilinear,
            self.coupling,
            self.radial_term
        )
    }
}

/// Coefficients of a functional `F = k·kinetic + m·mass + q·quasilinear −
/// c·coupling + r·radial_term` whose gradient is wanted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub kinetic: f64,
    pub mass: f64,
    pub quasilinear: f64,
    pub coupling: f64,
    pub radial: f64,
}

impl Weights {
    pub fn energy(params: &Params) -> Self {
        Weights { kinetic: 1.0, mass: 1.0, quasilinear: 1.0, coupling: 2.0 / params.p(), radial: 0.0 }
    }

    pub fn constraint(params: &Params, variant: ConstraintVariant) -> Self {
        let (n, p) = (params.n(), params.p());
        Weights {
            kinetic: n,
            mass: n + 2.0,
            quasilinear: n + 2.0,
            coupling: 2.0 * (n + p) / p,
            radial: match variant {
                ConstraintVariant::Consistent => 1.0,
                ConstraintVariant::Literal => 0.0,
            },
        }
    }
}

/// `|x|^e` with `0^e = 0`.
#[inline]
pub(crate) fn abs_pow(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x * x
    } else if x == 0.0 {
        0.0
    } else {
        x.abs().powf(e)
    }
}

/// `|x|^{e−2} x` with the value 0 at `x = 0`.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x
    } else if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e - 1.0)
    }
}

/// Potential samples cached for one lattice.
#[derive(Debug, Clone)]
pub struct Evaluator {
    params: Params,
    grid: Grid,
    a: Vec<f64>,
    radial: Vec<f64>,
    constant_a: bool,
}

impl Evaluator {
    pub fn new(params: &Params, model: &PotentialModel, grid: &Grid) -> Result<Self, ParamError> {
        if grid.dims() != params.n_dims {
            return Err(ParamError::GridDims { params: params.n_dims, grid: grid.dims() });
        }
        Ok(Evaluator {
            params: *params,
            grid: *grid,
            a: model.sample(grid),
            radial: model.radial(grid),
            constant_a: model.is_constant(),
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }

    /// `−Δ_h f` and `−Δ_h f²` for one component.
    fn laplacians(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
        let mut lf = vec![0.0; f.len()];
        let mut lsq = vec![0.0; f.len()];
        add_neg_laplacian(&self.grid, f, &mut lf);
        add_neg_laplacian(&self.grid, &sq, &mut lsq);
        (lf, lsq)
    }

    pub fn breakdown(&self, p: &Pair) -> EnergyBreakdown {
        assert_eq!(p.grid(), &self.grid, "pair and evaluator grids differ");
        let (u, v) = (p.u.values(), p.v.values());
        let (lu, lsu) = self.laplacians(u);
        let (lv, lsv) = self.laplacians(v);

        let mut kinetic = 0.0;
        let mut quasi = 0.0;
        let mut mass_u = 0.0;
        let mut mass_v = 0.0;
        let mut radial = 0.0;
        let mut coupling = 0.0;
        let (alpha, beta, b) = (self.params.alpha, self.params.beta, self.params.b);
        for i in 0..u.len() {
            let (ui, vi) = (u[i], v[i]);
            let (u2, v2) = (ui * ui, vi * vi);
            kinetic += ui * lu[i] + vi * lv[i];
            quasi += u2 * lsu[i] + v2 * lsv[i];
            mass_u += self.a[i] * u2;
            mass_v += v2;
            radial += self.radial[i] * u2;
            coupling += abs_pow(ui, alpha) * abs_pow(vi, beta);
        }
        let w = self.grid.cell_volume();
        EnergyBreakdown {
            kinetic: 0.5 * w * kinetic,
            mass_u: 0.5 * w * mass_u,
            mass_v: 0.5 * w * b * mass_v,
            // u²|∇u|² = ¼|∇(u²)|²
            quasilinear: 0.125 * w * quasi,
            coupling: w * coupling,
            radial_term: if self.constant_a { 0.0 } else { 0.5 * w * radial },
        }
    }

    /// L2 gradients (`⟨∇F, φ⟩ = h^N Σ ∇F·φ`) of each weighted functional.
    pub fn gradients(&self, p: &Pair, weights: &[Weights]) -> Vec<Pair> {
        assert_eq!(p.grid(), &self.grid, "pair and evaluator grids differ");
        let (alpha, beta, b) = (self.params.alpha, self.params.beta, self.params.b);
        let (u, v) = (p.u.values(), p.v.values());
        let (lu, lsu) = self.laplacians(u);
        let (lv, lsv) = self.laplacians(v);
        let radial = (!self.constant_a).then_some(self.radial.as_slice());
        weights
            .iter()
            .map(|w| {
                let mut gu = vec![0.0; u.len()];
                let mut gv = vec![0.0; v.len()];
                for i in 0..u.len() {
                    let (ui, vi) = (u[i], v[i]);
                    let r = radial.map_or(0.0, |r| w.radial * r[i]);
                    gu[i] = w.kinetic * lu[i] + 0.5 * w.quasilinear * ui * lsu[i] + (w.mass * self.a[i] + r) * ui
                        - w.coupling * alpha * signed_pow(ui, alpha) * abs_pow(vi, beta);
                    gv[i] = w.kinetic * lv[i] + 0.5 * w.quasilinear * vi * lsv[i] + w.mass * b * vi
                        - w.coupling * beta * abs_pow(ui, alpha) * signed_pow(vi, beta);
                }
                Pair { u: Field::from_vec_unchecked(self.grid, gu), v: Field::from_vec_unchecked(self.grid, gv) }
            })
            .collect()
    }
}

fn evaluator(p: &Pair, params: &Params, model: &PotentialModel) -> Evaluator {
    Evaluator::new(params, model, p.grid()).expect("pair grid must match the parameter dimension")
}

pub fn breakdown(p: &Pair, params: &Params, model: &PotentialModel) -> EnergyBreakdown {
    evaluator(p, params, model).breakdown(p)
}

pub fn energy_i(p: &Pair, params: &Params, model: &PotentialModel) -> f64 {
    breakdown(p, params, model).energy(params)
}

pub fn constraint_g(p: &Pair, params: &Params, model: &PotentialModel, variant: ConstraintVariant) -> f64 {
    breakdown(p, params, model).constraint(params, variant)
}

pub fn pohozaev_p(p: &Pair, params: &Params, model: &PotentialModel) -> f64 {
    breakdown(p, params, model).pohozaev(params)
}

pub fn reduced_j(p: &Pair, params: &Params, model: &PotentialModel) -> f64 {
    breakdown(p, params, model).reduced(params)
}

pub fn grad_i(p: &Pair, params: &Params, model: &PotentialModel) -> Pair {
    let ev = evaluator(p, params, model);
    ev.gradients(p, &[Weights::energy(params)]).remove(0)
}

pub fn grad_g(p: &Pair, params: &Params, model: &PotentialModel, variant: ConstraintVariant) -> Pair {
    let ev = evaluator(p, params, model);
    ev.gradients(p, &[Weights::constraint(params, variant)]).remove(0)
}

/// `∫|u|^α|v|^β`.
pub fn coupling(p: &Pair, params: &Params) -> f64 {
    dot_raw(
        &p.u.values().iter().map(|&x| abs_pow(x, params.alpha)).collect::<Vec<_>>(),
        &p.v.values().iter().map(|&x| abs_pow(x, params.beta)).collect::<Vec<_>>(),
    ) * p.grid().cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{gaussian_pair, random_smooth_pair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params22() -> Params {
        Params::new(3, 2.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn params_validation_quotes_hypotheses() {
        let e = Params::new(3, 7.0, 6.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("alpha+beta must lie in (2, 4N/(N-2))"));
        assert!(matches!(Params::new(3, 1.0, 2.0, 1.0), Err(ParamError::Exponents { .. })));
        assert!(matches!(Params::new(3, 2.0, 2.0, 0.0), Err(ParamError::Coupling(_))));
        assert!(matches!(Params::new(2, 2.0, 2.0, 1.0), Err(ParamError::Dimension(2))));
        // critical exponent itself is excluded
        assert!(Params::new(3, 6.0, 6.0, 1.0).is_err());
        assert!(Params::new(3, 5.9, 6.0, 1.0).is_ok());
        assert!(Params::new(5, 2.0, 4.7, 1.0).is_err());
    }

    #[test]
    fn zero_pair() {
        let g = Grid::new(3, 4.0, 9).unwrap();
        let z = Pair::zeros(g);
        let m = PotentialModel::constant(1.0);
        let p = params22();
        assert_eq!(breakdown(&z, &p, &m), EnergyBreakdown::default());
        assert_eq!(energy_i(&z, &p, &m), 0.0);
        assert_eq!(constraint_g(&z, &p, &m, ConstraintVariant::Consistent), 0.0);
        assert_eq!(pohozaev_p(&z, &p, &m), 0.0);
        assert_eq!(reduced_j(&z, &p, &m), 0.0);
        let gz = grad_i(&z, &p, &m);
        assert_eq!(gz.u.max_abs() + gz.v.max_abs(), 0.0);
        // fractional exponents at zero stay finite
        let pf = Params::new(3, 1.5, 1.5, 1.0).unwrap();
        let gz = grad_i(&z, &pf, &m);
        assert_eq!(gz.u.max_abs() + gz.v.max_abs(), 0.0);
    }

    #[test]
    fn gaussian_breakdown() {
        let g = Grid::new(3, 8.0, 129).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0);
        let bd = breakdown(&pair, &params22(), &PotentialModel::constant(1.0));
        let kin = 3.0 * (PI / 2.0).powf(1.5);
        let mass = (PI / 2.0).powf(1.5);
        let coup = (PI / 4.0).powf(1.5);
        assert!((bd.kinetic - kin).abs() / kin < 1e-3, "{}", bd.kinetic);
        assert!((bd.mass() - mass).abs() / mass < 1e-3);
        assert!((bd.coupling - coup).abs() / coup < 1e-3);
        assert!((coupling(&pair, &params22()) - bd.coupling).abs() < 1e-14);
    }

    /// Node-by-node evaluation with its own stencil bookkeeping.
    fn single_pass_oracle(pair: &Pair, params: &Params, model: &PotentialModel) -> (f64, f64, f64) {
        let g = *pair.grid();
        let n = g.points_per_axis() as isize;
        let h = g.spacing();
        let at = |f: &Field, m: &[isize]| -> f64 {
            if m.iter().any(|&i| i < 0 || i >= n) {
                0.0
            } else {
                let mu: Vec<usize> = m.iter().map(|&i| i as usize).collect();
                f.values()[g.flatten(&mu)]
            }
        };
        let (mut i_sum, mut g_sum, mut p_sum) = (0.0, 0.0, 0.0);
        let (nn, pp) = (params.n(), params.p());
        let mut multi = vec![0usize; 3];
        let mut x = vec![0.0; 3];
        for idx in 0..g.len() {
            g.unflatten(idx, &mut multi);
            g.point(idx, &mut x);
            let m: Vec<isize> = multi.iter().map(|&i| i as isize).collect();
            // ⟨f, −Δf⟩ and ⟨f², −Δf²⟩ integrands at this node
            let mut forms = [[0.0f64; 2]; 2];
            for (c, f) in [&pair.u, &pair.v].into_iter().enumerate() {
                let centre = f.values()[idx];
                for (k, sq) in [false, true].into_iter().enumerate() {
                    let val = |off: isize, d: usize| {
                        let mut s = m.clone();
                        s[d] = m[d] + off;
                        let x = at(f, &s);
                        if sq {
                            x * x
                        } else {
                            x
                        }
                    };
                    let mut lap = 0.0;
                    for d in 0..3 {
                        lap += (-val(-2, d) + 16.0 * val(-1, d) - 30.0 * val(0, d) + 16.0 * val(1, d) - val(2, d))
                            / (12.0 * h * h);
                    }
                    let weight = if sq { centre * centre } else { centre };
                    forms[c][k] = -weight * lap;
                }
            }
            let (u, v) = (pair.u.values()[idx], pair.v.values()[idx]);
            let a = model.eval_a(&x);
            let r = model.eval_radial_derivative(&x);
            let kin = 0.5 * (forms[0][0] + forms[1][0]);
            let mass = 0.5 * (a * u * u + params.b * v * v);
            let quasi = 0.125 * (forms[0][1] + forms[1][1]);
            let coup = u.abs().powf(params.alpha) * v.abs().powf(params.beta);
            let rad = 0.5 * r * u * u;
            i_sum += kin + mass + quasi - 2.0 / pp * coup;
            g_sum += nn * kin + (nn + 2.0) * (mass + quasi) - 2.0 * (nn + pp) / pp * coup + rad;
            p_sum += (nn - 2.0) * (kin + quasi) + nn * mass + rad - 2.0 * nn / pp * coup;
        }
        let w = g.cell_volume();
        (i_sum * w, g_sum * w, p_sum * w)
    }

    #[test]
    fn assembly_matches_single_pass_oracle() {
        let g = Grid::new(3, 6.0, 33).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.3);
        for model in [PotentialModel::constant(1.0), PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap()] {
            let p = params22();
            let (i, gg, pp) = single_pass_oracle(&pair, &p, &model);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(energy_i(&pair, &p, &model), i) < 1e-12);
            assert!(rel(constraint_g(&pair, &p, &model, ConstraintVariant::Consistent), gg) < 1e-12);
            let pv = pohozaev_p(&pair, &p, &model);
            assert!(rel(pv, pp) < 1e-12);
            assert!(pv.abs() > 1e-3, "raw Gaussian is not a solution");
        }
    }

    #[test]
    fn reduced_identity_and_positivity() {
        let g = Grid::new(3, 5.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = params22();
        let m = PotentialModel::constant(1.0);
        for _ in 0..50 {
            let pair = random_smooth_pair(g, &mut rng);
            let bd = breakdown(&pair, &p, &m);
            let i = bd.energy(&p);
            let lhs = bd.reduced(&p);
            let rhs = i - bd.constraint(&p, ConstraintVariant::Consistent) / (p.n() + p.p());
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + i.abs()));
            assert!(lhs > 0.0);
        }
    }

    #[test]
    fn literal_constraint_differs_only_by_radial_term() {
        let g = Grid::new(3, 5.0, 21).unwrap();
        let pair = gaussian_pair(g, 1.0, 1.0);
        let p = params22();
        let c = PotentialModel::constant(1.0);
        assert_eq!(
            constraint_g(&pair, &p, &c, ConstraintVariant::Consistent),
            constraint_g(&pair, &p, &c, ConstraintVariant::Literal)
        );
        let l = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        let bd = breakdown(&pair, &p, &l);
        let gap = bd.constraint(&p, ConstraintVariant::Consistent) - bd.constraint(&p, ConstraintVariant::Literal);
        assert!((gap - bd.radial_term).abs() < 1e-14 && bd.radial_term > 0.0);
        // only the consistent variant keeps the reduced identity
        let i = bd.energy(&p);
        let k = p.n() + p.p();
        assert!((bd.reduced(&p) - (i - bd.constraint(&p, ConstraintVariant::Consistent) / k)).abs() < 1e-12);
        assert!((bd.reduced(&p) - (i - bd.constraint(&p, ConstraintVariant::Literal) / k)).abs() > 1e-6);
    }

    #[test]
    fn sign_symmetry() {
        let g = Grid::new(3, 5.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = random_smooth_pair(g, &mut rng);
        let neg = pair.scaled(-1.0);
        let p = Params::new(3, 1.7, 2.4, 0.8).unwrap();
        let m = PotentialModel::lorentzian(2.0, 0.5, 1.5).unwrap();
        let (a, b) = (breakdown(&pair, &p, &m), breakdown(&neg, &p, &m));
        assert_eq!(a, b);
        assert_eq!(coupling(&pair, &p), coupling(&neg, &p));
        let zero_v = Pair::new(pair.u.clone(), Field::zeros(g)).unwrap();
        assert_eq!(coupling(&zero_v, &p), 0.0);
    }

    fn directional_check(p: &Params, model: &PotentialModel, seed: u64) -> f64 {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_smooth_pair(g, &mut rng);
        let dir = random_smooth_pair(g, &mut rng);
        let eps = 1e-5;
        let plus = energy_i(&pair.axpy(eps, &dir).unwrap(), p, model);
        let minus = energy_i(&pair.axpy(-eps, &dir).unwrap(), p, model);
        let fd = (plus - minus) / (2.0 * eps);
        let an = grad_i(&pair, p, model).dot(&dir).unwrap();
        (fd - an).abs() / fd.abs().max(an.abs())
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        for (k, p) in [params22(), Params::new(3, 2.5, 3.0, 0.7).unwrap()].iter().enumerate() {
            for seed in 0..4 {
                let err = directional_check(p, &m, 100 * k as u64 + seed);
                assert!(err < 1e-5, "seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn constraint_gradient_matches_central_differences() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = params22();
        let m = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        let pair = random_smooth_pair(g, &mut rng);
        let dir = random_smooth_pair(g, &mut rng);
        let eps = 1e-5;
        let v = ConstraintVariant::Consistent;
        let fd = (constraint_g(&pair.axpy(eps, &dir).unwrap(), &p, &m, v)
            - constraint_g(&pair.axpy(-eps, &dir).unwrap(), &p, &m, v))
            / (2.0 * eps);
        let an = grad_g(&pair, &p, &m, v).dot(&dir).unwrap();
        assert!((fd - an).abs() / an.abs() < 1e-5);
    }
}
