//! Smooth sample fields shared by unit tests, integration tests and the
//! gradient audit.

use rand::Rng;

use crate::field::{Field, Grid, Pair};

/// `u = exp(−|x|²/wu²)`, `v = exp(−|x|²/wv²)`.
pub fn gaussian_pair(grid: Grid, wu: f64, wv: f64) -> Pair {
    let g = |w: f64| Field::from_fn(grid, |x| (-x.iter().map(|c| c * c).sum::<f64>() / (w * w)).exp());
    Pair { u: g(wu), v: g(wv) }
}

/// A sum of a positive central bump and three random Gaussians.
pub fn random_smooth_field<R: Rng>(grid: Grid, rng: &mut R) -> Field {
    let dims = grid.dims();
    let reach = grid.half_extent() / 3.0;
    let mut bumps = vec![(vec![0.0; dims], rng.gen_range(0.9..1.3), rng.gen_range(0.5..1.0))];
    for _ in 0..3 {
        let c: Vec<f64> = (0..dims).map(|_| rng.gen_range(-reach..reach)).collect();
        bumps.push((c, rng.gen_range(0.6..1.2), rng.gen_range(-0.6..0.6)));
    }
    Field::from_fn(grid, |x| {
        bumps
            .iter()
            .map(|(c, w, a)| {
                let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
                a * (-r2 / (w * w)).exp()
            })
            .sum()
    })
}

pub fn random_smooth_pair<R: Rng>(grid: Grid, rng: &mut R) -> Pair {
    let u = random_smooth_field(grid, rng);
    let v = random_smooth_field(grid, rng);
    Pair { u, v }
}
