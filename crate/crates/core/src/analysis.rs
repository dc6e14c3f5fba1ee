//! Nodal domains, residual checks and independent re-verification of
//! solver output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, Grid};
use crate::functional::{breakdown, energy_i, grad_i, ConstraintVariant, Params};
use crate::potential::PotentialModel;
use crate::solver::SolveReport;
use crate::symmetry::{build_group, equivariance_defect, SymmetryError};
use crate::testing::random_smooth_pair;

/// Default nodal threshold as a fraction of `max|f|`.
pub const DEFAULT_NODAL_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodalReport {
    pub component: Option<Component>,
    pub threshold: f64,
    pub positive_domains: usize,
    pub negative_domains: usize,
    pub total: usize,
}

impl NodalReport {
    pub fn with_component(self, c: Component) -> Self {
        NodalReport { component: Some(c), ..self }
    }
}

/// Face-connected components of `{f > eps}` and of `{f < −eps}`.
pub fn nodal_domains(f: &Field, eps: f64) -> NodalReport {
    let grid = *f.grid();
    let vals = f.values();
    let positive = count_components(&grid, |i| vals[i] > eps);
    let negative = count_components(&grid, |i| vals[i] < -eps);
    NodalReport {
        component: None,
        threshold: eps,
        positive_domains: positive,
        negative_domains: negative,
        total: positive + negative,
    }
}

fn count_components(grid: &Grid, inside: impl Fn(usize) -> bool) -> usize {
    let len = grid.len();
    let n = grid.points_per_axis();
    let dims = grid.dims();
    let mut seen = vec![false; len];
    let mut stack = Vec::new();
    let mut multi = vec![0usize; dims];
    let mut count = 0;
    for start in 0..len {
        if seen[start] || !inside(start) {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            grid.unflatten(i, &mut multi);
            for (axis, &m) in multi.iter().enumerate() {
                let stride = grid.stride(axis);
                let mut visit = |j: usize| {
                    if !seen[j] && inside(j) {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if m > 0 {
                    visit(i - stride);
                }
                if m + 1 < n {
                    visit(i + stride);
                }
            }
        }
    }
    count
}

/// `‖∇I(p)‖_{L²} / ‖p‖_{L²}`, zero for the zero pair.
pub fn weak_residual(p: &crate::field::Pair, params: &Params, model: &PotentialModel) -> f64 {
    let norm = p.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    grad_i(p, params, model).norm_l2() / norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRow {
    pub index: usize,
    pub finite_difference: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

/// Central-difference check of `⟨∇I, φ⟩` along random smooth directions at
/// random smooth pairs.
pub fn gradient_audit(params: &Params, model: &PotentialModel, grid: &Grid, count: usize, seed: u64) -> Vec<AuditRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|index| {
            let pair = random_smooth_pair(*grid, &mut rng);
            let dir = random_smooth_pair(*grid, &mut rng);
            let eps = 1e-5;
            let plus = energy_i(&pair.axpy(eps, &dir).expect("same grid"), params, model);
            let minus = energy_i(&pair.axpy(-eps, &dir).expect("same grid"), params, model);
            let finite_difference = (plus - minus) / (2.0 * eps);
            let analytic = grad_i(&pair, params, model).dot(&dir).expect("same grid");
            let denom = finite_difference.abs().max(analytic.abs()).max(f64::MIN_POSITIVE);
            AuditRow {
                index,
                finite_difference,
                analytic,
                relative_error: (finite_difference - analytic).abs() / denom,
            }
        })
        .collect()
}

pub const AUDIT_CSV_HEADER: &str = "index,finite_difference,analytic,relative_error";

impl AuditRow {
    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{:e}", self.index, self.finite_difference, self.analytic, self.relative_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
    /// Positive when passing.
    pub margin: f64,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Check { name, pass: value <= limit, value, limit, margin: limit - value }
    }

    fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Check { name, pass: value >= limit, value, limit, margin: value - limit }
    }

    fn positive(name: &'static str, value: f64) -> Self {
        Check { name, pass: value > 0.0, value, limit: 0.0, margin: value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnosis {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnoseError {
    #[error("report is not from a converged run")]
    NotConverged,
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// Tolerance on disagreement between report fields and fresh values.
pub const REPORT_MISMATCH_TOL: f64 = 1e-10;
pub const POHOZAEV_TOL: f64 = 1e-2;

/// Recomputes every certified quantity from the final pair alone.
pub fn diagnose(report: &SolveReport, params: &Params, model: &PotentialModel) -> Result<Diagnosis, DiagnoseError> {
    if !report.converged {
        return Err(DiagnoseError::NotConverged);
    }
    let pair = &report.final_pair;
    let bd = breakdown(pair, params, model);
    let energy = bd.energy(params);
    let g = bd.constraint(params, ConstraintVariant::Consistent);
    let g_scale = bd.constraint_scale(params);
    let p_rel = bd.pohozaev(params).abs() / bd.pohozaev_scale(params);
    let group = build_group(report.s)?;
    let defect = equivariance_defect(pair, &group);
    let eps = |f: &Field| DEFAULT_NODAL_THRESHOLD * f.max_abs();
    let nu = nodal_domains(&pair.u, eps(&pair.u)).total;
    let nv = nodal_domains(&pair.v, eps(&pair.v)).total;
    let two_s = 2.0 * report.s as f64;
    let rel_gap = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);

    let checks = vec![
        Check::at_most("m_estimate matches energy", rel_gap(energy, report.m_estimate), REPORT_MISMATCH_TOL),
        Check::at_most(
            "constraint residual matches",
            rel_gap(g.abs(), report.constraint_residual) / g_scale.max(1.0),
            REPORT_MISMATCH_TOL,
        ),
        Check::at_most("constraint |G|/scale", g.abs() / g_scale, crate::fibering::PROJECTION_TOL),
        Check::at_most("pohozaev |P|/scale", p_rel, POHOZAEV_TOL),
        Check::at_most("equivariance defect", defect, 1e-10),
        Check::at_most(
            "nodal counts match",
            (nu.abs_diff(report.nodal_count_u) + nv.abs_diff(report.nodal_count_v)) as f64,
            0.0,
        ),
        Check::at_least("nodal domains of u", nu as f64, two_s),
        Check::at_least("nodal domains of v", nv as f64, two_s),
        Check::positive("reduced energy J", bd.reduced(params)),
        Check::positive("energy I", energy),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(Diagnosis { checks, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Pair;
    use crate::testing::gaussian_pair;

    fn sin2(grid: Grid) -> Field {
        Field::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            (2.0 * x[1].atan2(x[0])).sin() * (-r2).exp()
        })
    }

    #[test]
    fn counts() {
        let g = Grid::new(3, 3.0, 25).unwrap();
        assert_eq!(nodal_domains(&Field::zeros(g), 1e-3).total, 0);
        let f = sin2(g);
        let r = nodal_domains(&f, 1e-3 * f.max_abs());
        assert_eq!((r.positive_domains, r.negative_domains, r.total), (2, 2, 4));
        let bump = gaussian_pair(g, 1.0, 1.0).u;
        assert_eq!(nodal_domains(&bump, 1e-3).total, 1);
    }

    #[test]
    fn sign_flip_swaps_tallies() {
        let g = Grid::new(3, 3.0, 25).unwrap();
        let f = Field::from_fn(g, |x| x[0] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp() + 0.05);
        let a = nodal_domains(&f, 1e-3);
        let b = nodal_domains(&f.scaled(-1.0), 1e-3);
        assert_eq!((a.positive_domains, a.negative_domains), (b.negative_domains, b.positive_domains));
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn threshold_monotone_on_sectors() {
        let g = Grid::new(3, 3.0, 25).unwrap();
        let f = sin2(g);
        let m = f.max_abs();
        let totals: Vec<usize> = [1e-4, 1e-3, 1e-2, 1e-1, 0.5].iter().map(|e| nodal_domains(&f, e * m).total).collect();
        assert!(totals.windows(2).all(|w| w[1] <= w[0]), "{totals:?}");
        assert_eq!(nodal_domains(&f, 2.0 * m).total, 0);
    }

    #[test]
    fn residuals() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let p = Params::new(3, 2.0, 2.0, 1.0).unwrap();
        let m = PotentialModel::constant(1.0);
        assert_eq!(weak_residual(&Pair::zeros(g), &p, &m), 0.0);
        assert!(weak_residual(&gaussian_pair(g, 1.0, 1.0), &p, &m) > 0.0);
    }

    #[test]
    fn audit_passes() {
        let g = Grid::new(3, 5.0, 17).unwrap();
        let p = Params::new(3, 2.0, 3.0, 1.0).unwrap();
        let rows = gradient_audit(&p, &PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap(), &g, 5, 1);
        assert!(rows.iter().all(|r| r.relative_error <= 1e-5));
        assert_eq!(rows, gradient_audit(&p, &PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap(), &g, 5, 1));
    }
}
