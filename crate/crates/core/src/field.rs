//! Lattice geometry, scalar fields and the discrete calculus used by every
//! functional in the crate.
//!
//! The lattice is node-centered on `[-L, L]^N` with an odd number of points
//! per axis, so the origin is a node and coordinate reflections permute
//! nodes. Stencils that reach outside the box read zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid needs at least 3 spatial dimensions, got {0}")]
    TooFewDims(usize),
    #[error("points per axis must be odd and at least 3, got {0}")]
    BadPointCount(usize),
    #[error("half extent must be positive and finite, got {0}")]
    BadExtent(f64),
    #[error("expected {expected} values for the grid, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("scaling factor must be positive and finite, got {0}")]
    BadScale(f64),
}

/// Node-centered lattice on `[-L, L]^N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: usize,
    half_extent: f64,
    points_per_axis: usize,
}

impl Grid {
    pub fn new(dims: usize, half_extent: f64, points_per_axis: usize) -> Result<Self, FieldError> {
        if dims < 3 {
            return Err(FieldError::TooFewDims(dims));
        }
        if points_per_axis < 3 || points_per_axis.is_multiple_of(2) {
            return Err(FieldError::BadPointCount(points_per_axis));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(FieldError::BadExtent(half_extent));
        }
        Ok(Grid { dims, half_extent, points_per_axis })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.points_per_axis - 1) as f64
    }

    /// Quadrature weight `h^N` of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims as i32)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the node at the origin along one axis.
    pub fn center_index(&self) -> usize {
        (self.points_per_axis - 1) / 2
    }

    /// Coordinate of the `i`-th node along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.center_index() as f64) * self.spacing()
    }

    /// Distance in flat storage between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.dims - 1 - axis) as u32)
    }

    /// Splits a flat index into per-axis indices (axis 0 slowest).
    pub fn unflatten(&self, mut idx: usize, out: &mut [usize]) {
        let n = self.points_per_axis;
        for d in (0..self.dims).rev() {
            out[d] = idx % n;
            idx /= n;
        }
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Cartesian coordinates of a node.
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let n = self.points_per_axis;
        let mut rest = idx;
        for d in (0..self.dims).rev() {
            out[d] = self.coord(rest % n);
            rest /= n;
        }
    }

    /// Same lattice topology, stretched by `t`.
    pub fn dilated(&self, t: f64) -> Result<Grid, FieldError> {
        if !(t.is_finite() && t > 0.0) {
            return Err(FieldError::BadScale(t));
        }
        Grid::new(self.dims, self.half_extent * t, self.points_per_axis)
    }

    /// Visits every node with its coordinates.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let mut multi = vec![0usize; self.dims];
        let mut x: Vec<f64> = vec![self.coord(0); self.dims];
        for idx in 0..self.len() {
            f(idx, &x);
            // odometer increment, last axis fastest
            for d in (0..self.dims).rev() {
                multi[d] += 1;
                if multi[d] < self.points_per_axis {
                    x[d] = self.coord(multi[d]);
                    break;
                }
                multi[d] = 0;
                x[d] = self.coord(0);
            }
        }
    }
}

/// Real scalar values on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![0.0; grid.len()] }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        grid.for_each_point(|i, x| values[i] = f(x));
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field, FieldError> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Field::from_vec_unchecked(self.grid, values))
    }

    pub fn sub(&self, other: &Field) -> Result<Field, FieldError> {
        self.axpy(-1.0, other)
    }

    /// Discrete L2 inner product `h^N Σ f g`.
    pub fn dot(&self, other: &Field) -> Result<f64, FieldError> {
        self.check_grid(other)?;
        Ok(dot_raw(&self.values, &other.values) * self.grid.cell_volume())
    }

    pub fn norm_l2(&self) -> f64 {
        (dot_raw(&self.values, &self.values) * self.grid.cell_volume()).sqrt()
    }

    /// The field `t f` on the lattice stretched by `t`: an exact
    /// realization of `x ↦ t f(x/t)` with no interpolation.
    pub fn dilate(&self, t: f64) -> Result<Field, FieldError> {
        let grid = self.grid.dilated(t)?;
        Ok(Field::from_vec_unchecked(grid, self.values.iter().map(|v| t * v).collect()))
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<(), FieldError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }
}

pub(crate) fn dot_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Element of the product space: one field per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub u: Field,
    pub v: Field,
}

impl Pair {
    pub fn new(u: Field, v: Field) -> Result<Self, FieldError> {
        u.check_grid(&v)?;
        Ok(Pair { u, v })
    }

    pub fn zeros(grid: Grid) -> Self {
        Pair { u: Field::zeros(grid), v: Field::zeros(grid) }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn scaled(&self, c: f64) -> Pair {
        Pair { u: self.u.scaled(c), v: self.v.scaled(c) }
    }

    pub fn axpy(&self, c: f64, other: &Pair) -> Result<Pair, FieldError> {
        Ok(Pair { u: self.u.axpy(c, &other.u)?, v: self.v.axpy(c, &other.v)? })
    }

    pub fn dot(&self, other: &Pair) -> Result<f64, FieldError> {
        Ok(self.u.dot(&other.u)? + self.v.dot(&other.v)?)
    }

    pub fn norm_l2(&self) -> f64 {
        (self.u.norm_l2().powi(2) + self.v.norm_l2().powi(2)).sqrt()
    }

    /// Exact scaling onto the stretched lattice, see [`Field::dilate`].
    pub fn dilate(&self, t: f64) -> Result<Pair, FieldError> {
        Ok(Pair { u: self.u.dilate(t)?, v: self.v.dilate(t)? })
    }

    /// Interpolated scaling on the same lattice, see [`scale_field`].
    pub fn rescale(&self, t: f64) -> Result<Pair, FieldError> {
        Ok(Pair { u: scale_field(&self.u, t)?, v: scale_field(&self.v, t)? })
    }
}

/// `h^N Σ f` over all nodes.
pub fn integrate(f: &Field) -> f64 {
    integrate_values(f.grid(), f.values())
}

pub fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * grid.cell_volume()
}

/// Writes the derivative of `src` along `axis` into `out`.
///
/// Fourth-order central stencil; neighbours outside the box read zero, so
/// the operator is an exactly antisymmetric matrix.
pub(crate) fn diff_axis(grid: &Grid, src: &[f64], axis: usize, out: &mut [f64]) {
    let n = grid.points_per_axis();
    let stride = grid.stride(axis);
    let h = grid.spacing();
    let c1 = 2.0 / (3.0 * h);
    let c2 = -1.0 / (12.0 * h);
    let block = n * stride;
    for base in (0..src.len()).step_by(block) {
        for i in 0..n {
            let row = base + i * stride;
            let dst = &mut out[row..row + stride];
            dst.fill(0.0);
            if i + 1 < n {
                let p = &src[row + stride..row + 2 * stride];
                dst.iter_mut().zip(p).for_each(|(d, &a)| *d += c1 * a);
            }
            if i >= 1 {
                let m = &src[row - stride..row];
                dst.iter_mut().zip(m).for_each(|(d, &a)| *d -= c1 * a);
            }
            if i + 2 < n {
                let p = &src[row + 2 * stride..row + 3 * stride];
                dst.iter_mut().zip(p).for_each(|(d, &a)| *d += c2 * a);
            }
            if i >= 2 {
                let m = &src[row - 2 * stride..row - stride];
                dst.iter_mut().zip(m).for_each(|(d, &a)| *d -= c2 * a);
            }
        }
    }
}

/// Adds `−Δ_h f` to `out` using the fourth-order five-point second
/// difference on every axis, zero outside the box. The matrix is symmetric
/// positive definite with no odd-even null mode.
pub(crate) fn add_neg_laplacian(grid: &Grid, src: &[f64], out: &mut [f64]) {
    let n = grid.points_per_axis();
    let h2 = grid.spacing() * grid.spacing();
    let c0 = grid.dims() as f64 * 30.0 / (12.0 * h2);
    let c1 = -16.0 / (12.0 * h2);
    let c2 = 1.0 / (12.0 * h2);
    out.iter_mut().zip(src).for_each(|(o, &a)| *o += c0 * a);
    let last = grid.dims() - 1;
    for axis in 0..last {
        let stride = grid.stride(axis);
        let block = n * stride;
        for (ob, sb) in out.chunks_exact_mut(block).zip(src.chunks_exact(block)) {
            for i in 0..n {
                let dst = &mut ob[i * stride..(i + 1) * stride];
                for (k, c) in [(1usize, c1), (2, c2)] {
                    if i + k < n {
                        let row = &sb[(i + k) * stride..(i + k + 1) * stride];
                        dst.iter_mut().zip(row).for_each(|(d, &a)| *d += c * a);
                    }
                    if i >= k {
                        let row = &sb[(i - k) * stride..(i - k + 1) * stride];
                        dst.iter_mut().zip(row).for_each(|(d, &a)| *d += c * a);
                    }
                }
            }
        }
    }
    // contiguous lines
    for (o, l) in out.chunks_exact_mut(n).zip(src.chunks_exact(n)) {
        let at = |j: isize| if j < 0 || j >= n as isize { 0.0 } else { l[j as usize] };
        for i in 0..n.min(2) {
            let j = i as isize;
            o[i] += c1 * (at(j - 1) + at(j + 1)) + c2 * (at(j - 2) + at(j + 2));
        }
        for i in 2..n.saturating_sub(2) {
            o[i] += c1 * (l[i - 1] + l[i + 1]) + c2 * (l[i - 2] + l[i + 2]);
        }
        for i in n.saturating_sub(2).max(2)..n {
            let j = i as isize;
            o[i] += c1 * (at(j - 1) + at(j + 1)) + c2 * (at(j - 2) + at(j + 2));
        }
    }
}

/// `∫|∇f|²` in the quadratic form of the five-point second difference,
/// `h^N ⟨f, −Δ_h f⟩`.
pub fn dirichlet_energy(f: &Field) -> f64 {
    dirichlet_form(f.grid(), f.values())
}

pub(crate) fn dirichlet_form(grid: &Grid, values: &[f64]) -> f64 {
    let mut buf = vec![0.0; values.len()];
    add_neg_laplacian(grid, values, &mut buf);
    dot_raw(values, &buf) * grid.cell_volume()
}

/// Discrete gradient: one field per axis.
pub fn grad(f: &Field) -> Vec<Field> {
    let grid = *f.grid();
    (0..grid.dims())
        .map(|axis| {
            let mut out = vec![0.0; grid.len()];
            diff_axis(&grid, f.values(), axis, &mut out);
            Field::from_vec_unchecked(grid, out)
        })
        .collect()
}

/// Pointwise `|∇f|²`.
pub fn grad_sq(f: &Field) -> Field {
    let grid = *f.grid();
    let mut acc = vec![0.0; grid.len()];
    let mut buf = vec![0.0; grid.len()];
    for axis in 0..grid.dims() {
        diff_axis(&grid, f.values(), axis, &mut buf);
        acc.iter_mut().zip(&buf).for_each(|(a, d)| *a += d * d);
    }
    Field::from_vec_unchecked(grid, acc)
}

/// Per-axis source positions for `x ↦ x/t`: lower node and weight of the upper node.
fn scaled_stencil(grid: &Grid, t: f64) -> Vec<(isize, f64)> {
    let n = grid.points_per_axis();
    let c = grid.center_index() as f64;
    (0..n)
        .map(|i| {
            let q = c + (i as f64 - c) / t;
            let lo = q.floor();
            let mut w = q - lo;
            let mut lo = lo as isize;
            if w > 1.0 - 1e-12 {
                lo += 1;
                w = 0.0;
            } else if w < 1e-12 {
                w = 0.0;
            }
            (lo, w)
        })
        .collect()
}

/// `x ↦ t f(x/t)` on the same lattice, by multilinear interpolation with
/// zero extension outside the box. `t = 1` returns `f` unchanged.
pub fn scale_field(f: &Field, t: f64) -> Result<Field, FieldError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(FieldError::BadScale(t));
    }
    if t == 1.0 {
        return Ok(f.clone());
    }
    let grid = *f.grid();
    let n = grid.points_per_axis() as isize;
    let stencil = scaled_stencil(&grid, t);
    let mut cur = f.values().to_vec();
    let mut next = vec![0.0; cur.len()];
    // multilinear interpolation of an axis-aligned map factors into 1D passes
    for axis in 0..grid.dims() {
        let stride = grid.stride(axis);
        let block = grid.points_per_axis() * stride;
        for base in (0..cur.len()).step_by(block) {
            for (i, &(lo, w)) in stencil.iter().enumerate() {
                let dst = &mut next[base + i * stride..base + (i + 1) * stride];
                dst.fill(0.0);
                if (0..n).contains(&lo) && w < 1.0 {
                    let off = base + lo as usize * stride;
                    let src = &cur[off..off + stride];
                    dst.iter_mut().zip(src).for_each(|(d, &a)| *d += (1.0 - w) * a);
                }
                if w > 0.0 && (0..n).contains(&(lo + 1)) {
                    let off = base + (lo + 1) as usize * stride;
                    let src = &cur[off..off + stride];
                    dst.iter_mut().zip(src).for_each(|(d, &a)| *d += w * a);
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.iter_mut().for_each(|v| *v *= t);
    Ok(Field::from_vec_unchecked(grid, cur))
}

/// Multilinear interpolation of `f` onto the nodes of `target`, zero
/// outside the source box.
pub fn resample(f: &Field, target: &Grid) -> Result<Field, FieldError> {
    let src = *f.grid();
    if src.dims() != target.dims() {
        return Err(FieldError::GridMismatch);
    }
    let (n_src, n_dst) = (src.points_per_axis(), target.points_per_axis());
    let stencil: Vec<(isize, f64)> = (0..n_dst)
        .map(|i| {
            let q = (target.coord(i) + src.half_extent()) / src.spacing();
            let lo = q.floor();
            let w = q - lo;
            if w > 1.0 - 1e-12 {
                (lo as isize + 1, 0.0)
            } else if w < 1e-12 {
                (lo as isize, 0.0)
            } else {
                (lo as isize, w)
            }
        })
        .collect();
    let dims = src.dims();
    let mut shape = vec![n_src; dims];
    let mut cur = f.values().to_vec();
    for axis in 0..dims {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut next = vec![0.0; outer * n_dst * inner];
        for o in 0..outer {
            for (i, &(lo, w)) in stencil.iter().enumerate() {
                let dst = &mut next[(o * n_dst + i) * inner..(o * n_dst + i + 1) * inner];
                for (k, wk) in [(lo, 1.0 - w), (lo + 1, w)] {
                    if wk == 0.0 || k < 0 || k >= n_src as isize {
                        continue;
                    }
                    let off = (o * n_src + k as usize) * inner;
                    dst.iter_mut().zip(&cur[off..off + inner]).for_each(|(d, &a)| *d += wk * a);
                }
            }
        }
        shape[axis] = n_dst;
        cur = next;
    }
    Ok(Field::from_vec_unchecked(*target, cur))
}

/// Discrete H1 norm `(∫f² + ∫|∇f|²)^{1/2}`.
pub fn norm_h1(f: &Field) -> f64 {
    (f.norm_l2().powi(2) + dirichlet_form(f.grid(), f.values())).sqrt()
}

/// `‖f−g‖_{H1} + |∇f² − ∇g²|_2`.
pub fn distance_h(f: &Field, g: &Field) -> Result<f64, FieldError> {
    let diff = f.sub(g)?;
    let grid = *f.grid();
    let sq_diff: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a * a - b * b).collect();
    Ok(norm_h1(&diff) + dirichlet_form(&grid, &sq_diff).sqrt())
}

pub fn distance_x(p: &Pair, q: &Pair) -> Result<f64, FieldError> {
    Ok(distance_h(&p.u, &q.u)? + distance_h(&p.v, &q.v)?)
}
