//! Analytic initial data and random band-limited test fields.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::grid::{curl_of_nodes, GridSpec, ScalarField, VelocityField};

/// `sin^2(pi x) sin^2(pi y)` on the unit square.
pub fn psi_bump(x: f64, y: f64) -> f64 {
    ((PI * x).sin() * (PI * y).sin()).powi(2)
}

/// Velocity `amp * curl(psi)` with `psi` sampled at cell corners. The
/// result is discretely divergence-free and vanishes in the normal
/// direction wherever `psi` is zero on the walls.
pub fn stream_velocity(grid: GridSpec, amp: f64, psi: impl Fn(f64, f64) -> f64) -> VelocityField {
    let mut nodes = Vec::with_capacity((grid.nx + 1) * (grid.ny + 1));
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            nodes.push(amp * psi(i as f64 * grid.h, j as f64 * grid.h));
        }
    }
    let mut u = curl_of_nodes(grid, &nodes);
    u.enforce_no_slip();
    u
}

/// Reference velocity: `amp * curl(sin^2(pi x) sin^2(pi y))`, domain scaled
/// to the unit square.
pub fn reference_velocity(grid: GridSpec, amp: f64) -> VelocityField {
    let (lx, ly) = (grid.lx, grid.ly);
    stream_velocity(grid, amp, |x, y| psi_bump(x / lx, y / ly))
}

/// Reference micro-rotation `amp * sin(pi x) sin(pi y)`.
pub fn reference_rotation(grid: GridSpec, amp: f64) -> ScalarField {
    let (lx, ly) = (grid.lx, grid.ly);
    ScalarField::from_fn(grid, |x, y| amp * (PI * x / lx).sin() * (PI * y / ly).sin())
}

/// `(-lap psi, psi)` for `psi = sin^2(pi x) sin^2(pi y)` on the unit square.
pub fn poisson_problem(grid: GridSpec) -> (ScalarField, ScalarField) {
    let s = |t: f64| (PI * t).sin();
    let c2 = |t: f64| (2.0 * PI * t).cos();
    let rhs = ScalarField::from_fn(grid, |x, y| -2.0 * PI * PI * (c2(x) * s(y).powi(2) + s(x).powi(2) * c2(y)));
    (rhs, ScalarField::from_fn(grid, psi_bump))
}

/// Stationary Stokes problem with `u = grad_perp psi`, `p = sin(pi x) sin(pi y)`
/// (up to a constant) and unit viscosity: returns `(f, u)` with
/// `-lap u + grad p = f`. Velocities are face samples of the exact field.
pub fn stokes_problem(grid: GridSpec) -> (VelocityField, VelocityField) {
    let s = |t: f64| (PI * t).sin();
    let c = |t: f64| (PI * t).cos();
    let s2 = |t: f64| (2.0 * PI * t).sin();
    let c2 = |t: f64| (2.0 * PI * t).cos();
    let p2 = PI * PI;
    let f = VelocityField::from_fn(
        grid,
        |x, y| PI * (2.0 * p2 * c2(x) * s2(y) - 4.0 * p2 * s(x).powi(2) * s2(y)) + PI * c(x) * s(y),
        |x, y| -PI * (-4.0 * p2 * s2(x) * s(y).powi(2) + 2.0 * p2 * s2(x) * c2(y)) + PI * s(x) * c(y),
    );
    let mut u = VelocityField::from_fn(grid, |x, y| -PI * s(x).powi(2) * s2(y), |x, y| PI * s2(x) * s(y).powi(2));
    u.enforce_no_slip();
    (f, u)
}

/// `sum_{k,l <= K} a_kl sin(k pi x) sin(l pi y)` on the unit square.
#[derive(Clone, Debug)]
pub struct BandLimited {
    pub k_max: usize,
    /// Row-major `a_kl`, `k` fastest, both starting at 1.
    pub coeffs: Vec<f64>,
}

impl BandLimited {
    pub fn random(k_max: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut coeffs = Vec::with_capacity(k_max * k_max);
        for l in 1..=k_max {
            for k in 1..=k_max {
                let z: f64 = StandardNormal.sample(rng);
                coeffs.push(z / (1.0 + (k * k + l * l) as f64));
            }
        }
        Self { k_max, coeffs }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let sx: Vec<f64> = (1..=self.k_max).map(|k| (k as f64 * PI * x).sin()).collect();
        let mut s = 0.0;
        for l in 1..=self.k_max {
            let sy = (l as f64 * PI * y).sin();
            for k in 1..=self.k_max {
                s += self.coeffs[(l - 1) * self.k_max + k - 1] * sx[k - 1] * sy;
            }
        }
        s
    }

    /// Cell-centered samples.
    pub fn sample(&self, grid: GridSpec) -> ScalarField {
        let (lx, ly) = (grid.lx, grid.ly);
        ScalarField::from_fn(grid, |x, y| self.value(x / lx, y / ly))
    }
}

/// Deterministic ensemble; the same seed gives the same coefficients on
/// every grid, which is what refinement comparisons need.
pub fn ensemble(seed: u64, count: usize, k_max: usize) -> Vec<BandLimited> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| BandLimited::random(k_max, &mut rng)).collect()
}
