//! Compatible initial data: hydrostatic enthalpy plus a depth-localised perturbation,
//! and a divergence-free velocity built as a discrete curl.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eos::EoS;
use crate::geometry::{covariant_gradient, flat_curl, flat_div, identity_cofactor};
use crate::grid::{BoundaryField, ScalarField, SlabGrid, VectorField};
use crate::harmonic::mixed_laplacian;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub gamma: f64,
    pub gravity: f64,
    pub c0: f64,
    pub delta: f64,
    /// Largest tangential mode index used in the random patterns.
    pub max_mode: i32,
    /// Depth of the quiet collar under the top boundary.
    pub collar: f64,
    /// Depth below which the perturbation vanishes.
    pub support: f64,
    /// Exponent of the polynomial bump `x^q (1 - x)^q`.
    pub bump_power: i32,
    pub order: usize,
    pub seed: u64,
    /// `max |v0| = velocity_scale * delta`.
    pub velocity_scale: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            gamma: 1.0,
            gravity: 1.0,
            c0: 0.5,
            delta: 1e-2,
            max_mode: 1,
            collar: 0.55,
            support: 1.55,
            bump_power: 4,
            order: 2,
            seed: 7,
            velocity_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InitialData {
    pub v0: VectorField,
    pub h0: ScalarField,
    /// `h1 = -div v0 / e'(h0)`.
    pub h1: ScalarField,
}

/// Depth envelope, identically zero for `-y3 <= collar` and `-y3 >= support`, max 1.
pub fn envelope(spec: &DataSpec, y3: f64) -> f64 {
    let s = -y3;
    if s <= spec.collar || s >= spec.support {
        return 0.0;
    }
    let x = (s - spec.collar) / (spec.support - spec.collar);
    (4.0 * x * (1.0 - x)).powi(spec.bump_power)
}

/// Seeded tangential trigonometric pattern with `|m_i| <= max_mode`, scaled to max 1.
fn pattern(grid: &SlabGrid, rng: &mut ChaCha8Rng, max_mode: i32) -> BoundaryField {
    let mut terms = Vec::new();
    for m1 in -max_mode..=max_mode {
        for m2 in 0..=max_mode {
            if m2 == 0 && m1 <= 0 {
                continue;
            }
            let amp: f64 = rng.random_range(-1.0..1.0);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            terms.push((m1 as f64, m2 as f64, amp, phase));
        }
    }
    let (k1, k2) = (std::f64::consts::TAU / grid.lx, std::f64::consts::TAU / grid.ly);
    let p = grid.boundary(|y1, y2| {
        terms
            .iter()
            .map(|&(m1, m2, a, ph)| a * (k1 * m1 * y1 + k2 * m2 * y2 + ph).cos())
            .sum()
    });
    let m = SlabGrid::norm_linf_boundary(&p);
    if m > 0.0 {
        p / m
    } else {
        p
    }
}

fn layered(grid: &SlabGrid, p: &BoundaryField, env: &[f64]) -> ScalarField {
    ScalarField::from_shape_fn(grid.shape(), |(i, j, k)| p[[i, j]] * env[k])
}

pub fn make_data(grid: &SlabGrid, spec: &DataSpec) -> Result<InitialData> {
    if spec.support > 0.8 * grid.depth {
        return Err(Error::PreconditionViolated(format!(
            "perturbation support {} reaches the bottom fifth of depth {}",
            spec.support, grid.depth
        )));
    }
    let eos = EoS::new(spec.gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let env: Vec<f64> = grid.z().iter().map(|&z| envelope(spec, z)).collect();
    let hp = pattern(grid, &mut rng, spec.max_mode);
    let g = spec.gravity;
    let z = grid.z().to_vec();
    let h0 = ScalarField::from_shape_fn(grid.shape(), |(i, j, k)| {
        -g * z[k] + spec.delta * hp[[i, j]] * env[k]
    });
    let pot: VectorField = std::array::from_fn(|_| {
        let p = pattern(grid, &mut rng, spec.max_mode);
        layered(grid, &p, &env)
    });
    let mut v0 = flat_curl(grid, &pot);
    let vmax = v0.iter().map(SlabGrid::norm_linf).fold(0.0, f64::max);
    if vmax > 0.0 {
        for c in v0.iter_mut() {
            *c *= spec.velocity_scale * spec.delta / vmax;
        }
    }
    eos.check(&h0)?;
    let de = h0.mapv(|h| eos.de(h));
    let h1 = -(flat_div(grid, &v0) / &de);
    let data = InitialData { v0, h0, h1 };
    let margin = taylor_margin(grid, &data.h0);
    if margin < spec.c0 {
        return Err(Error::TaylorViolated { min: margin, bound: spec.c0 });
    }
    Ok(data)
}

/// `min_Gamma (-d3 h)`.
pub fn taylor_margin(grid: &SlabGrid, h: &ScalarField) -> f64 {
    let d3 = grid.trace_top(&grid.dnormal(h));
    d3.iter().fold(f64::INFINITY, |m, v| m.min(-v))
}

/// `h2` at `t = 0` from differentiating the continuity equation once:
/// `e' h2 = Lap h0 + d_mu v_alpha d_alpha v_mu - e'' h1^2`.
pub fn second_time_derivative(grid: &SlabGrid, v0: &VectorField, h0: &ScalarField, eos: &EoS) -> ScalarField {
    let id = identity_cofactor(grid);
    let b = covariant_gradient(grid, v0, &id);
    let mut quad = grid.zeros();
    for mu in 0..3 {
        for alpha in 0..3 {
            quad += &(&b[mu][alpha] * &b[alpha][mu]);
        }
    }
    let de = h0.mapv(|h| eos.de(h));
    let d2e = h0.mapv(|h| eos.d2e(h));
    let h1 = -(flat_div(grid, v0) / &de);
    let num = mixed_laplacian(grid, h0) + quad - &(&d2e * &(&h1 * &h1));
    num / &de
}

/// `|D_t^j h|_Gamma|_0` for `j = 0..=order`.
pub fn compatibility_check(
    grid: &SlabGrid,
    v0: &VectorField,
    h0: &ScalarField,
    eos: &EoS,
    order: usize,
) -> Vec<f64> {
    let mut out = vec![grid.norm_boundary(&grid.trace_top(h0), 0.0)];
    if order >= 1 {
        let de = h0.mapv(|h| eos.de(h));
        let h1 = -(flat_div(grid, v0) / &de);
        out.push(grid.norm_boundary(&grid.trace_top(&h1), 0.0));
    }
    if order >= 2 {
        let h2 = second_time_derivative(grid, v0, h0, eos);
        out.push(grid.norm_boundary(&grid.trace_top(&h2), 0.0));
    }
    out
}
