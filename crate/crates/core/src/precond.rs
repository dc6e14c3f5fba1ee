//! Sobolev preconditioner `(c − Δ_h)^{-1}` applied in the sine basis of
//! the zero-boundary lattice.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::{Field, Grid, Pair};

/// Type-I discrete sine transform along every axis.
pub struct Dst {
    grid: Grid,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dst").field("grid", &self.grid).finish()
    }
}

impl Dst {
    pub fn new(grid: Grid) -> Self {
        let m = 2 * (grid.points_per_axis() + 1);
        let fft = FftPlanner::new().plan_fft_forward(m);
        Dst { grid, fft }
    }

    /// `X_k = Σ_j x_j sin(π(j+1)(k+1)/(n+1))` along `axis`, in place.
    /// Two real lines ride in one complex transform.
    pub fn transform_axis(&self, data: &mut [f64], axis: usize) {
        let n = self.grid.points_per_axis();
        let m = 2 * (n + 1);
        let stride = self.grid.stride(axis);
        let block = n * stride;
        let starts: Vec<usize> =
            (0..data.len()).step_by(block).flat_map(|base| (0..stride).map(move |o| base + o)).collect();
        let pairs = starts.len().div_ceil(2);
        let mut buf = vec![Complex64::new(0.0, 0.0); pairs * m];
        for (k, chunk) in starts.chunks(2).enumerate() {
            let line = &mut buf[k * m..(k + 1) * m];
            for j in 0..n {
                let re = data[chunk[0] + j * stride];
                let im = chunk.get(1).map_or(0.0, |&s| data[s + j * stride]);
                line[j + 1] = Complex64::new(re, im);
                line[m - 1 - j] = Complex64::new(-re, -im);
            }
        }
        self.fft.process(&mut buf);
        for (k, chunk) in starts.chunks(2).enumerate() {
            let line = &buf[k * m..(k + 1) * m];
            for j in 0..n {
                let z = line[j + 1];
                data[chunk[0] + j * stride] = -0.5 * z.im;
                if let Some(&s) = chunk.get(1) {
                    data[s + j * stride] = 0.5 * z.re;
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [f64]) {
        for axis in 0..self.grid.dims() {
            self.transform_axis(data, axis);
        }
    }

    /// Inverse of [`Dst::forward`].
    pub fn inverse(&self, data: &mut [f64]) {
        self.forward(data);
        let n = self.grid.points_per_axis() as f64;
        let norm = (2.0 / (n + 1.0)).powi(self.grid.dims() as i32);
        data.iter_mut().for_each(|v| *v *= norm);
    }
}

/// Symbol of the five-point fourth-order `−d²/dx²` on sine mode `k`.
fn stencil_symbol(k: usize, n: usize, h: f64) -> f64 {
    let c = (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
    (1.0 - c) * (7.0 - c) / (3.0 * h * h)
}

#[derive(Debug)]
pub struct SobolevPreconditioner {
    dst: Dst,
    symbol: Vec<f64>,
    shift: f64,
}

impl SobolevPreconditioner {
    pub fn new(grid: Grid, shift: f64) -> Self {
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let symbol = (0..n).map(|k| stencil_symbol(k, n, h)).collect();
        SobolevPreconditioner { dst: Dst::new(grid), symbol, shift }
    }

    pub fn apply(&self, f: &Field) -> Field {
        let grid = *f.grid();
        let mut data = f.values().to_vec();
        self.dst.forward(&mut data);
        let dims = grid.dims();
        let mut multi = vec![0usize; dims];
        for (i, v) in data.iter_mut().enumerate() {
            grid.unflatten(i, &mut multi);
            let lam: f64 = multi.iter().map(|&k| self.symbol[k]).sum();
            *v /= self.shift + lam;
        }
        self.dst.inverse(&mut data);
        Field::from_vec_unchecked(grid, data)
    }

    pub fn apply_pair(&self, p: &Pair) -> Pair {
        Pair { u: self.apply(&p.u), v: self.apply(&p.v) }
    }
}
