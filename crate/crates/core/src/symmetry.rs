//! Dihedral groups acting on the first two coordinates, the
//! determinant-twisted action on fields, and projection onto the
//! equivariant subspace `{f : f(gx) = det(g) f(x)}`.

use serde::Serialize;
use thiserror::Error;

use crate::field::{Field, Grid, Pair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("symmetry order must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error("generated group has {got} elements, expected {expected}")]
    WrongOrder { expected: usize, got: usize },
}

/// Orthogonal map of the `(y1, y2)` plane; other coordinates are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupElement {
    pub matrix: [[f64; 2]; 2],
    pub det_sign: i8,
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement { matrix: [[1.0, 0.0], [0.0, 1.0]], det_sign: 1 };

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        GroupElement { matrix: [[c, -s], [s, c]], det_sign: 1 }.cleaned()
    }

    /// Reflection across the line through the origin at `angle` from the y1 axis.
    pub fn reflection(angle: f64) -> Self {
        let (s, c) = (2.0 * angle).sin_cos();
        GroupElement { matrix: [[c, s], [s, -c]], det_sign: -1 }.cleaned()
    }

    // Snap entries that are 0 or ±1 up to rounding, so lattice-preserving
    // elements map nodes to nodes exactly.
    fn cleaned(mut self) -> Self {
        for row in &mut self.matrix {
            for e in row.iter_mut() {
                for target in [-1.0, 0.0, 1.0] {
                    if (*e - target).abs() < 1e-14 {
                        *e = target;
                    }
                }
            }
        }
        self
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let a = &self.matrix;
        let b = &other.matrix;
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        GroupElement { matrix: m, det_sign: self.det_sign * other.det_sign }.cleaned()
    }

    pub fn inverse(&self) -> GroupElement {
        let m = &self.matrix;
        GroupElement { matrix: [[m[0][0], m[1][0]], [m[0][1], m[1][1]]], det_sign: self.det_sign }
    }

    pub fn det(&self) -> f64 {
        f64::from(self.det_sign)
    }

    pub fn apply(&self, y: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [m[0][0] * y[0] + m[0][1] * y[1], m[1][0] * y[0] + m[1][1] * y[1]]
    }

    pub fn approx_eq(&self, other: &GroupElement, tol: f64) -> bool {
        self.det_sign == other.det_sign
            && self.matrix.iter().flatten().zip(other.matrix.iter().flatten()).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// True when the element permutes the nodes of any square lattice.
    pub fn is_lattice_exact(&self) -> bool {
        self.matrix.iter().flatten().all(|&e| e == 0.0 || e.abs() == 1.0)
    }
}

/// The dihedral group of order `2s`.
#[derive(Debug, Clone, Serialize)]
pub struct DihedralGroup {
    s: usize,
    elements: Vec<GroupElement>,
}

/// Closure of the rotation by `2π/s` and the reflection in the line
/// `y1 = 0` (s = 2) or `y2 = tan(π/s) y1` (s > 2).
pub fn build_group(s: usize) -> Result<DihedralGroup, SymmetryError> {
    if s < 2 {
        return Err(SymmetryError::OrderTooSmall(s));
    }
    let rot = GroupElement::rotation(2.0 * std::f64::consts::PI / s as f64);
    let mirror_angle = if s == 2 { std::f64::consts::FRAC_PI_2 } else { std::f64::consts::PI / s as f64 };
    let refl = GroupElement::reflection(mirror_angle);
    let generators = [rot, refl];

    let mut elements = vec![GroupElement::IDENTITY];
    let mut frontier = vec![GroupElement::IDENTITY];
    while let Some(g) = frontier.pop() {
        for gen in &generators {
            let h = gen.compose(&g);
            if !elements.iter().any(|e| e.approx_eq(&h, 1e-9)) {
                elements.push(h);
                frontier.push(h);
            }
            if elements.len() > 2 * s {
                return Err(SymmetryError::WrongOrder { expected: 2 * s, got: elements.len() });
            }
        }
    }
    if elements.len() != 2 * s {
        return Err(SymmetryError::WrongOrder { expected: 2 * s, got: elements.len() });
    }
    Ok(DihedralGroup { s, elements })
}

impl DihedralGroup {
    pub fn order_param(&self) -> usize {
        self.s
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// `x ↦ f(m x)` where `m` acts on the first two coordinates. Off-lattice
/// sources are read by bilinear interpolation in the `(y1, y2)` plane with
/// zero extension.
fn pullback(f: &Field, m: &GroupElement) -> Field {
    let grid = *f.grid();
    let n = grid.points_per_axis();
    let c = grid.center_index() as f64;
    let s0 = grid.stride(0);
    let s1 = grid.stride(1);
    let vals = f.values();
    let mut out = vec![0.0; vals.len()];
    let exact = m.is_lattice_exact();

    for i0 in 0..n {
        for i1 in 0..n {
            let y = [i0 as f64 - c, i1 as f64 - c];
            let src = m.apply(y);
            let dst = i0 * s0 + i1 * s1;
            if exact {
                let j0 = src[0] + c;
                let j1 = src[1] + c;
                if j0 < 0.0 || j1 < 0.0 || j0 > (n - 1) as f64 || j1 > (n - 1) as f64 {
                    continue;
                }
                let from = j0 as usize * s0 + j1 as usize * s1;
                out[dst..dst + s1].copy_from_slice(&vals[from..from + s1]);
                continue;
            }
            let q0 = src[0] + c;
            let q1 = src[1] + c;
            let (a0, w0) = split(q0);
            let (a1, w1) = split(q1);
            let corners = [
                (a0, a1, (1.0 - w0) * (1.0 - w1)),
                (a0 + 1, a1, w0 * (1.0 - w1)),
                (a0, a1 + 1, (1.0 - w0) * w1),
                (a0 + 1, a1 + 1, w0 * w1),
            ];
            for (k0, k1, w) in corners {
                if w == 0.0 || k0 < 0 || k1 < 0 || k0 >= n as isize || k1 >= n as isize {
                    continue;
                }
                let from = k0 as usize * s0 + k1 as usize * s1;
                out[dst..dst + s1].iter_mut().zip(&vals[from..from + s1]).for_each(|(o, &v)| *o += w * v);
            }
        }
    }
    Field::from_vec_unchecked(grid, out)
}

fn split(q: f64) -> (isize, f64) {
    let lo = q.floor();
    let w = q - lo;
    if w < 1e-12 {
        (lo as isize, 0.0)
    } else if w > 1.0 - 1e-12 {
        (lo as isize + 1, 0.0)
    } else {
        (lo as isize, w)
    }
}

/// `(g f)(x) = det(g) f(g⁻¹ x)`.
pub fn act(g: &GroupElement, f: &Field) -> Field {
    pullback(f, &g.inverse()).scaled(g.det())
}

/// Averaging projection `(Pf)(x) = (1/2s) Σ_g det(g) f(g x)`.
pub fn symmetrize(f: &Field, group: &DihedralGroup) -> Field {
    let grid: Grid = *f.grid();
    let mut acc = vec![0.0; grid.len()];
    for g in group.elements() {
        let pulled = pullback(f, g);
        let d = g.det();
        acc.iter_mut().zip(pulled.values()).for_each(|(a, &v)| *a += d * v);
    }
    let scale = 1.0 / group.len() as f64;
    acc.iter_mut().for_each(|a| *a *= scale);
    Field::from_vec_unchecked(grid, acc)
}

pub fn symmetrize_pair(p: &Pair, group: &DihedralGroup) -> Pair {
    Pair { u: symmetrize(&p.u, group), v: symmetrize(&p.v, group) }
}

/// `max_{g, x} |f(g x) − det(g) f(x)|`.
pub fn field_defect(f: &Field, group: &DihedralGroup) -> f64 {
    group
        .elements()
        .iter()
        .map(|g| {
            let d = g.det();
            pullback(f, g).values().iter().zip(f.values()).fold(0.0f64, |m, (a, b)| m.max((a - d * b).abs()))
        })
        .fold(0.0, f64::max)
}

pub fn equivariance_defect(p: &Pair, group: &DihedralGroup) -> f64 {
    field_defect(&p.u, group).max(field_defect(&p.v, group))
}
