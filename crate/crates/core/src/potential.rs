//! The coefficient `A(x)` of the first equation and sampled checks of the
//! standing hypotheses on it:
//!
//! * A1: `0 < A0 ≤ A(x) ≤ A∞ = lim A(x) < ∞`
//! * A2: `∇A·x` bounded and `(α+β−2)A(x) − ∇A(x)·x ≥ 0`
//! * A3: `σ ↦ σ^{(N+2)/(N+α+β)} A(σ^{1/(N+α+β)} x)` concave for every `x`
//! * A4: `A` radial in the first two coordinates

use serde::Serialize;
use thiserror::Error;

use crate::field::{Field, Grid};
use crate::functional::Params;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("potential table has {got} gradient components, grid has {expected} axes")]
    GradientArity { expected: usize, got: usize },
    #[error("potential gradient tables must share the grid of the potential table")]
    GradientGrid,
    #[error("potential parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
}

/// `A` sampled on a lattice, read by multilinear interpolation and
/// extended beyond the box by its nearest face value.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    table: Field,
    gradient: Vec<Field>,
}

impl TabulatedPotential {
    /// `gradient` holds `∂A/∂x_d` per axis; when absent it is estimated by
    /// central differences of the table (one-sided on the faces).
    pub fn new(table: Field, gradient: Option<Vec<Field>>) -> Result<Self, PotentialError> {
        let grid = *table.grid();
        let gradient = match gradient {
            Some(g) => {
                if g.len() != grid.dims() {
                    return Err(PotentialError::GradientArity { expected: grid.dims(), got: g.len() });
                }
                if g.iter().any(|c| c.grid() != &grid) {
                    return Err(PotentialError::GradientGrid);
                }
                g
            }
            None => (0..grid.dims()).map(|axis| table_derivative(&table, axis)).collect(),
        };
        Ok(TabulatedPotential { table, gradient })
    }

    pub fn table(&self) -> &Field {
        &self.table
    }

    fn boundary_mean(&self) -> f64 {
        let grid = self.table.grid();
        let n = grid.points_per_axis();
        let mut multi = vec![0usize; grid.dims()];
        let (mut sum, mut count) = (0.0, 0usize);
        for (idx, &v) in self.table.values().iter().enumerate() {
            grid.unflatten(idx, &mut multi);
            if multi.iter().any(|&i| i == 0 || i == n - 1) {
                sum += v;
                count += 1;
            }
        }
        sum / count as f64
    }
}

fn table_derivative(table: &Field, axis: usize) -> Field {
    let grid = *table.grid();
    let n = grid.points_per_axis();
    let stride = grid.stride(axis);
    let h = grid.spacing();
    let vals = table.values();
    let mut multi = vec![0usize; grid.dims()];
    let out = (0..vals.len())
        .map(|idx| {
            grid.unflatten(idx, &mut multi);
            match multi[axis] {
                0 => (vals[idx + stride] - vals[idx]) / h,
                i if i == n - 1 => (vals[idx] - vals[idx - stride]) / h,
                _ => (vals[idx + stride] - vals[idx - stride]) / (2.0 * h),
            }
        })
        .collect();
    Field::from_vec_unchecked(grid, out)
}

/// Multilinear interpolation with clamping to the box.
fn interpolate_clamped(f: &Field, x: &[f64]) -> f64 {
    let grid = f.grid();
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let c = grid.center_index() as f64;
    let dims = grid.dims();
    let mut lo = vec![0usize; dims];
    let mut w = vec![0.0; dims];
    for d in 0..dims {
        let q = (x[d] / h + c).clamp(0.0, (n - 1) as f64);
        let i = (q.floor() as usize).min(n - 2);
        lo[d] = i;
        w[d] = q - i as f64;
    }
    let mut total = 0.0;
    let mut multi = vec![0usize; dims];
    for corner in 0..(1usize << dims) {
        let mut weight = 1.0;
        for d in 0..dims {
            let up = (corner >> d) & 1 == 1;
            multi[d] = lo[d] + usize::from(up);
            weight *= if up { w[d] } else { 1.0 - w[d] };
        }
        if weight != 0.0 {
            total += weight * f.values()[grid.flatten(&multi)];
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Constant {
        value: f64,
    },
    /// `A(x) = a_inf − depth / (1 + |x|²/width²)`.
    Lorentzian {
        a_inf: f64,
        depth: f64,
        width: f64,
    },
    /// `A(x) = a0 + curvature |x|²`; grows without bound.
    Quadratic {
        a0: f64,
        curvature: f64,
    },
    Tabulated(TabulatedPotential),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    kind: PotentialKind,
    a_inf: f64,
    a_0: f64,
}

impl PotentialModel {
    pub fn constant(value: f64) -> Self {
        PotentialModel { kind: PotentialKind::Constant { value }, a_inf: value, a_0: value }
    }

    pub fn lorentzian(a_inf: f64, depth: f64, width: f64) -> Result<Self, PotentialError> {
        for (name, value) in [("a_inf", a_inf), ("depth", depth), ("width", width)] {
            if !value.is_finite() {
                return Err(PotentialError::NonFinite { name, value });
            }
        }
        Ok(PotentialModel {
            kind: PotentialKind::Lorentzian { a_inf, depth, width },
            a_inf,
            a_0: a_inf - depth.max(0.0),
        })
    }

    pub fn quadratic(a0: f64, curvature: f64) -> Self {
        PotentialModel {
            kind: PotentialKind::Quadratic { a0, curvature },
            a_inf: if curvature == 0.0 { a0 } else { f64::INFINITY },
            a_0: a0.min(if curvature < 0.0 { f64::NEG_INFINITY } else { a0 }),
        }
    }

    /// `limit` overrides the value at infinity, which otherwise is taken
    /// as the mean over the faces of the table.
    pub fn tabulated(table: TabulatedPotential, limit: Option<f64>) -> Self {
        let a_0 = table.table.values().iter().copied().fold(f64::INFINITY, f64::min);
        let a_inf = limit.unwrap_or_else(|| table.boundary_mean());
        PotentialModel { kind: PotentialKind::Tabulated(table), a_inf, a_0 }
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn a_inf(&self) -> f64 {
        self.a_inf
    }

    pub fn a_0(&self) -> f64 {
        self.a_0
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, PotentialKind::Constant { .. })
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Constant { value } => Some(value),
            _ => None,
        }
    }

    pub fn eval_a(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Constant { value } => *value,
            PotentialKind::Lorentzian { a_inf, depth, width } => {
                let s = norm_sq(x) / (width * width);
                a_inf - depth / (1.0 + s)
            }
            PotentialKind::Quadratic { a0, curvature } => a0 + curvature * norm_sq(x),
            PotentialKind::Tabulated(t) => interpolate_clamped(&t.table, x),
        }
    }

    /// `∇A(x)·x`.
    pub fn eval_radial_derivative(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Constant { .. } => 0.0,
            PotentialKind::Lorentzian { depth, width, .. } => {
                let s = norm_sq(x) / (width * width);
                2.0 * depth * s / ((1.0 + s) * (1.0 + s))
            }
            PotentialKind::Quadratic { curvature, .. } => 2.0 * curvature * norm_sq(x),
            PotentialKind::Tabulated(t) => t.gradient.iter().zip(x).map(|(g, xd)| xd * interpolate_clamped(g, x)).sum(),
        }
    }

    /// Supremum of `|∇A·x|` over space, when it is known to be finite.
    pub fn radial_derivative_bound(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Constant { .. } => Some(0.0),
            // 2 d s/(1+s)² peaks at s = 1
            PotentialKind::Lorentzian { depth, .. } => Some(depth.abs() / 2.0),
            PotentialKind::Quadratic { curvature, .. } => (*curvature == 0.0).then_some(0.0),
            PotentialKind::Tabulated(t) => {
                let grid = *t.table.grid();
                let mut sup: f64 = 0.0;
                grid.for_each_point(|_, x| sup = sup.max(self.eval_radial_derivative(x).abs()));
                sup.is_finite().then_some(sup)
            }
        }
    }

    /// `A(t x)` at every node of `grid`.
    pub fn sample_scaled(&self, grid: &Grid, t: f64) -> Vec<f64> {
        if let Some(v) = self.constant_value() {
            return vec![v; grid.len()];
        }
        let mut out = vec![0.0; grid.len()];
        let mut y = vec![0.0; grid.dims()];
        grid.for_each_point(|i, x| {
            y.iter_mut().zip(x).for_each(|(a, b)| *a = t * b);
            out[i] = self.eval_a(&y);
        });
        out
    }

    /// `∇A(t x)·(t x)` at every node of `grid`.
    pub fn radial_scaled(&self, grid: &Grid, t: f64) -> Vec<f64> {
        if self.is_constant() {
            return vec![0.0; grid.len()];
        }
        let mut out = vec![0.0; grid.len()];
        let mut y = vec![0.0; grid.dims()];
        grid.for_each_point(|i, x| {
            y.iter_mut().zip(x).for_each(|(a, b)| *a = t * b);
            out[i] = self.eval_radial_derivative(&y);
        });
        out
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        self.sample_scaled(grid, 1.0)
    }

    pub fn radial(&self, grid: &Grid) -> Vec<f64> {
        self.radial_scaled(grid, 1.0)
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum()
}

/// Where the hypotheses are probed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    /// Increasing positive values of the substituted variable in A3.
    pub sigmas: Vec<f64>,
    /// Rotation angles in the `(y1, y2)` plane for A4.
    pub angles: Vec<f64>,
}

impl SampleSet {
    /// A sub-lattice of `grid` with about `per_axis` points per axis, a log
    /// grid of σ over twelve decades, and quarter turns plus (for analytic
    /// models) a few generic angles.
    pub fn for_grid(grid: &Grid, model: &PotentialModel, per_axis: usize) -> Self {
        let n = grid.points_per_axis();
        let step = ((n - 1) / per_axis.max(2).saturating_sub(1)).max(1);
        let mut points = Vec::new();
        grid.for_each_point(|idx, x| {
            let mut multi = vec![0usize; grid.dims()];
            grid.unflatten(idx, &mut multi);
            if multi.iter().all(|i| i % step == 0 || *i == n - 1) {
                points.push(x.to_vec());
            }
        });
        let sigmas = (0..=120).map(|k| 10f64.powf(-6.0 + 0.1 * k as f64)).collect();
        let mut angles = vec![std::f64::consts::FRAC_PI_2, std::f64::consts::PI, 1.5 * std::f64::consts::PI];
        if !matches!(model.kind, PotentialKind::Tabulated(_)) {
            angles.extend([0.37, 1.1, 2.9]);
        }
        SampleSet { points, sigmas, angles }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub name: &'static str,
    pub holds: bool,
    /// Smallest slack over all samples; negative when violated.
    pub worst_margin: f64,
    /// First sample at which the condition failed.
    pub violation: Option<Vec<f64>>,
    pub note: String,
}

impl ConditionResult {
    fn new(name: &'static str) -> Self {
        ConditionResult { name, holds: true, worst_margin: f64::INFINITY, violation: None, note: String::new() }
    }

    fn record(&mut self, margin: f64, tol: f64, at: &[f64]) {
        self.worst_margin = self.worst_margin.min(margin);
        if !(margin >= -tol) && self.holds {
            self.holds = false;
            self.violation = Some(at.to_vec());
        }
    }

    fn fail(&mut self, note: impl Into<String>) {
        self.holds = false;
        self.worst_margin = f64::NEG_INFINITY;
        self.note = note.into();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub a1: ConditionResult,
    pub a2: ConditionResult,
    pub a3: ConditionResult,
    pub a4: ConditionResult,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.results().iter().all(|c| c.holds)
    }

    pub fn results(&self) -> [&ConditionResult; 4] {
        [&self.a1, &self.a2, &self.a3, &self.a4]
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.results().iter().filter(|c| !c.holds).map(|c| c.name).collect()
    }
}

/// Tolerance on concavity and radial symmetry.
pub const CONDITION_TOL: f64 = 1e-10;

pub fn check_conditions(model: &PotentialModel, params: &Params, samples: &SampleSet) -> ConditionReport {
    let p = params.alpha + params.beta;
    let n = params.n_dims as f64;

    let mut a1 = ConditionResult::new("A1");
    if !(model.a_0 > 0.0) {
        a1.fail(format!("lower bound A0 = {} is not positive", model.a_0));
    } else if !model.a_inf.is_finite() {
        a1.fail("A(x) has no finite limit as |x| → ∞");
    } else if model.a_0 > model.a_inf {
        a1.fail(format!("A0 = {} exceeds A∞ = {}", model.a_0, model.a_inf));
    } else {
        for x in &samples.points {
            let a = model.eval_a(x);
            let tol = 1e-12 * model.a_inf.abs().max(1.0);
            a1.record((a - model.a_0).min(model.a_inf - a), tol, x);
        }
    }

    let mut a2 = ConditionResult::new("A2");
    match model.radial_derivative_bound() {
        None => a2.fail("∇A(x)·x is unbounded"),
        Some(bound) => {
            for x in &samples.points {
                let a = model.eval_a(x);
                let r = model.eval_radial_derivative(x);
                let tol = 1e-12 * (a.abs() + r.abs()).max(1.0);
                a2.record((p - 2.0) * a - r, tol, x);
            }
            a2.note = format!("sup |∇A·x| = {bound}");
        }
    }

    let mut a3 = ConditionResult::new("A3");
    let q = (n + 2.0) / (n + p);
    let e = 1.0 / (n + p);
    let mut y = Vec::new();
    for x in &samples.points {
        let phi: Vec<f64> = samples
            .sigmas
            .iter()
            .map(|&s| {
                let scale = s.powf(e);
                y.clear();
                y.extend(x.iter().map(|c| c * scale));
                s.powf(q) * model.eval_a(&y)
            })
            .collect();
        for k in 1..samples.sigmas.len().saturating_sub(1) {
            let curv = normalized_curvature(&samples.sigmas[k - 1..=k + 1], &phi[k - 1..=k + 1]);
            a3.record(-curv, CONDITION_TOL, x);
        }
    }

    let mut a4 = ConditionResult::new("A4");
    let mut rotated = Vec::new();
    for x in &samples.points {
        let a = model.eval_a(x);
        for &phi in &samples.angles {
            let (s, c) = phi.sin_cos();
            rotated.clear();
            rotated.extend_from_slice(x);
            rotated[0] = c * x[0] - s * x[1];
            rotated[1] = s * x[0] + c * x[1];
            let gap = (model.eval_a(&rotated) - a).abs();
            a4.record(CONDITION_TOL - gap, 0.0, x);
        }
    }

    ConditionReport { a1, a2, a3, a4 }
}

/// Change of slope across three increasing abscissae, relative to the
/// larger slope: `≤ 0` for concave data.
pub fn normalized_curvature(xs: &[f64], ys: &[f64]) -> f64 {
    let left = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    let right = (ys[2] - ys[1]) / (xs[2] - xs[1]);
    let scale = left.abs().max(right.abs());
    if scale == 0.0 {
        0.0
    } else {
        (right - left) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, beta: f64) -> Params {
        Params::new(3, alpha, beta, 1.0).unwrap()
    }

    fn grid() -> Grid {
        Grid::new(3, 8.0, 17).unwrap()
    }

    #[test]
    fn evaluations() {
        let c = PotentialModel::constant(1.0);
        assert_eq!(c.eval_a(&[3.0, -1.0, 2.0]), 1.0);
        assert_eq!(c.eval_radial_derivative(&[3.0, -1.0, 2.0]), 0.0);

        let l = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        assert_eq!(l.eval_a(&[0.0, 0.0, 0.0]), 1.0);
        assert_eq!(l.eval_radial_derivative(&[0.0, 0.0, 0.0]), 0.0);
        assert!((l.eval_radial_derivative(&[1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        // corner and face nodes of the box sit within 1/(1+L²) of the limit
        let far = l.eval_a(&[8.0, 0.0, 0.0]);
        assert!(far < 2.0 && 2.0 - far <= 1.0 / 65.0 + 1e-15);
    }

    #[test]
    fn radial_derivative_matches_finite_differences() {
        let l = PotentialModel::lorentzian(2.0, 1.0, 1.3).unwrap();
        for x in [[1.0, 0.0, 0.0], [0.3, -0.7, 1.1], [2.0, 1.0, -0.5]] {
            let eps = 1e-6;
            let plus: Vec<f64> = x.iter().map(|c| c * (1.0 + eps)).collect();
            let minus: Vec<f64> = x.iter().map(|c| c * (1.0 - eps)).collect();
            let fd = (l.eval_a(&plus) - l.eval_a(&minus)) / (2.0 * eps);
            assert!((fd - l.eval_radial_derivative(&x)).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_passes_all() {
        let model = PotentialModel::constant(1.0);
        let samples = SampleSet::for_grid(&grid(), &model, 5);
        let report = check_conditions(&model, &params(2.0, 2.0), &samples);
        assert!(report.all_hold(), "{report:?}");
        // α+β barely above 2 still gives a concave power
        let report = check_conditions(&model, &params(1.05, 1.05), &samples);
        assert!(report.all_hold());
    }

    #[test]
    fn unbounded_fails_a1() {
        let model = PotentialModel::quadratic(1.0, 1.0);
        let samples = SampleSet::for_grid(&grid(), &model, 5);
        let report = check_conditions(&model, &params(2.0, 2.0), &samples);
        assert!(!report.a1.holds);
        assert!(report.failed().contains(&"A1"));
    }

    #[test]
    fn lorentzian_sign_condition() {
        let model = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        let samples = SampleSet::for_grid(&grid(), &model, 9);
        let report = check_conditions(&model, &params(2.0, 2.0), &samples);
        assert!(report.a2.holds);
        // brute force over the same samples: 2A − ∇A·x ≥ 2 − 1/2
        let worst = samples
            .points
            .iter()
            .map(|x| 2.0 * model.eval_a(x) - model.eval_radial_derivative(x))
            .fold(f64::INFINITY, f64::min);
        assert!(worst >= 1.5 - 1e-12);
        assert_eq!(report.a2.worst_margin, worst);
        assert!(report.a1.holds && report.a4.holds);
    }

    #[test]
    fn non_radial_table_fails_a4() {
        let g = Grid::new(3, 4.0, 9).unwrap();
        let table = Field::from_fn(g, |x| 2.0 + 0.1 * (x[0] / 4.0));
        let model = PotentialModel::tabulated(TabulatedPotential::new(table, None).unwrap(), Some(2.2));
        let samples = SampleSet::for_grid(&g, &model, 5);
        let report = check_conditions(&model, &params(2.0, 2.0), &samples);
        assert!(!report.a4.holds);
        assert!(report.a4.violation.is_some());
    }

    #[test]
    fn tabulated_matches_analytic_on_nodes() {
        let g = Grid::new(3, 4.0, 17).unwrap();
        let l = PotentialModel::lorentzian(2.0, 1.0, 1.0).unwrap();
        let table = Field::new(g, l.sample(&g)).unwrap();
        let t = PotentialModel::tabulated(TabulatedPotential::new(table, None).unwrap(), None);
        let mut x = [0.0; 3];
        for idx in (0..g.len()).step_by(37) {
            g.point(idx, &mut x);
            assert!((t.eval_a(&x) - l.eval_a(&x)).abs() < 1e-14);
        }
        // table gradient is a second-order estimate
        let x = [1.0, 0.5, 0.0];
        assert!((t.eval_radial_derivative(&x) - l.eval_radial_derivative(&x)).abs() < 0.05);
    }

    #[test]
    fn gradient_table_arity_checked() {
        let g = Grid::new(3, 4.0, 5).unwrap();
        let table = Field::zeros(g);
        let err = TabulatedPotential::new(table.clone(), Some(vec![table.clone()])).unwrap_err();
        assert_eq!(err, PotentialError::GradientArity { expected: 3, got: 1 });
    }

    #[test]
    fn concave_and_convex_curvature_signs() {
        let xs = [1.0, 2.0, 4.0];
        let concave: Vec<f64> = xs.iter().map(|x: &f64| x.sqrt()).collect();
        let convex: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(normalized_curvature(&xs, &concave) < 0.0);
        assert!(normalized_curvature(&xs, &convex) > 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn adding_samples_never_rescues_a_failure(
                curvature in 0.0f64..0.5,
                tilt in -0.2f64..0.2,
                extra in proptest::collection::vec(proptest::collection::vec(-6.0f64..6.0, 3), 1..6),
            ) {
                let g = Grid::new(3, 4.0, 9).unwrap();
                let table = Field::from_fn(g, |x| 1.5 + curvature * x[0] * x[0] / 16.0 + tilt * x[1] / 4.0);
                let model = PotentialModel::tabulated(TabulatedPotential::new(table, None).unwrap(), Some(1.6));
                let p = params(2.0, 2.0);
                let base = SampleSet::for_grid(&g, &model, 3);
                let mut more = base.clone();
                more.points.extend(extra);
                let r0 = check_conditions(&model, &p, &base);
                let r1 = check_conditions(&model, &p, &more);
                for (a, b) in r0.results().iter().zip(r1.results()) {
                    prop_assert!(a.holds || !b.holds);
                    prop_assert!(b.worst_margin <= a.worst_margin);
                }
            }
        }
    }
}
