//! RK4 evolution of the smoothed system
//! `d_t eta = v + psi`, `d_t v = -grad_{a~} h - g e3`, `e'(h) d_t h = -div_{a~} v`.
//!
//! The enthalpy is carried as the perturbation `h + g y3` of the hydrostatic
//! profile, which keeps the equilibrium exact in floating point.

use ndarray::Zip;

use crate::correction::build_correction;
use crate::eos::EoS;
use crate::geometry::{div_a, grad_a, FlowMap, GeometryBundle};
use crate::grid::{add_scaled, MatrixField, ScalarField, SlabGrid, VectorField};
use crate::harmonic::smooth_step;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kappa: f64,
    pub gamma: f64,
    pub gravity: f64,
    /// Fixed step; `None` picks `cfl * min_spacing / max_speed` at the start.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub cfl: f64,
    pub epsilon: f64,
    pub c0: f64,
    /// Fraction of the depth occupied by the bottom sponge.
    pub sponge_width: f64,
    /// 1 freezes the bottom row completely, 0 disables the sponge.
    pub sponge_strength: f64,
    pub clamp: bool,
    /// Depth over which the clamp lift decays, in grid rows.
    pub clamp_rows: f64,
    pub sample_every: usize,
    pub ceiling: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kappa: 0.05,
            gamma: 1.0,
            gravity: 1.0,
            dt: None,
            t_end: 0.5,
            cfl: 0.4,
            epsilon: 0.1,
            c0: 0.5,
            sponge_width: 0.15,
            sponge_strength: 1.0,
            clamp: true,
            clamp_rows: 6.0,
            sample_every: 1,
            ceiling: 1e6,
        }
    }
}

impl RunConfig {
    pub fn eos(&self) -> EoS {
        EoS::new(self.gamma)
    }
}

#[derive(Clone, Debug)]
pub struct KappaState {
    pub eta: FlowMap,
    pub v: VectorField,
    /// `h + g y3`.
    pub h_pert: ScalarField,
    pub t: f64,
}

impl KappaState {
    pub fn equilibrium(grid: &SlabGrid) -> Self {
        KappaState { eta: FlowMap::identity(grid), v: grid.zeros_vec(), h_pert: grid.zeros(), t: 0.0 }
    }

    pub fn from_data(grid: &SlabGrid, v0: &VectorField, h0: &ScalarField, g: f64) -> Self {
        KappaState {
            eta: FlowMap::identity(grid),
            v: v0.clone(),
            h_pert: full_to_pert(grid, h0, g),
            t: 0.0,
        }
    }

    pub fn h_full(&self, grid: &SlabGrid, g: f64) -> ScalarField {
        pert_to_full(grid, &self.h_pert, g)
    }
}

pub fn pert_to_full(grid: &SlabGrid, hp: &ScalarField, g: f64) -> ScalarField {
    let z = grid.z();
    let mut h = hp.clone();
    for ((_, _, k), v) in h.indexed_iter_mut() {
        *v -= g * z[k];
    }
    h
}

pub fn full_to_pert(grid: &SlabGrid, h: &ScalarField, g: f64) -> ScalarField {
    let z = grid.z();
    let mut hp = h.clone();
    for ((_, _, k), v) in hp.indexed_iter_mut() {
        *v += g * z[k];
    }
    hp
}

/// Depth profile of the sponge: 1 above the bottom layer, `1 - strength` at `y3 = -D`.
pub fn sponge_profile(grid: &SlabGrid, width: f64, strength: f64) -> Vec<f64> {
    grid.z()
        .iter()
        .map(|&z| {
            if width <= 0.0 {
                1.0
            } else {
                let s = smooth_step((z + grid.depth) / (width * grid.depth));
                1.0 - strength * (1.0 - s)
            }
        })
        .collect()
}

/// Smooth profile equal to 1 on the top row and 0 below `rows` grid rows; removing
/// `lift * trace` pins the top trace to zero without a kink.
pub fn lift_profile(grid: &SlabGrid, rows: f64) -> Vec<f64> {
    let depth = rows.max(1.0) * grid.dz;
    grid.z().iter().map(|&z| 1.0 - smooth_step(-z / depth)).collect()
}

/// Removes `lift * trace(f)` and returns `|trace(f)|_0`.
pub fn clamp_top(grid: &SlabGrid, f: &mut ScalarField, lift: &[f64]) -> f64 {
    let tr = grid.trace_top(f);
    for ((i, j, k), v) in f.indexed_iter_mut() {
        *v -= lift[k] * tr[[i, j]];
    }
    grid.norm_boundary(&tr, 0.0)
}

fn apply_profile(f: &mut ScalarField, p: &[f64]) {
    for ((_, _, k), v) in f.indexed_iter_mut() {
        *v *= p[k];
    }
}

/// `grad_a h` for the full enthalpy `h_pert - g y3`.
pub fn grad_a_full(grid: &SlabGrid, hp: &ScalarField, a: &MatrixField, g: f64) -> VectorField {
    let gp = grad_a(grid, hp, a);
    std::array::from_fn(|alpha| {
        let mut out = gp[alpha].clone();
        add_scaled(&mut out, &grid.dealias(&a[2][alpha]), -g);
        out
    })
}

/// `-grad_a h - g e3` written so that the hydrostatic parts cancel before rounding.
pub fn momentum_rate(grid: &SlabGrid, hp: &ScalarField, a: &MatrixField, g: f64) -> VectorField {
    let gp = grad_a(grid, hp, a);
    std::array::from_fn(|alpha| {
        let mut dev = a[2][alpha].clone();
        if alpha == 2 {
            dev -= 1.0;
        }
        let mut out = -&gp[alpha];
        add_scaled(&mut out, &grid.dealias(&dev), g);
        out
    })
}

#[derive(Clone, Debug)]
pub struct Rates {
    pub du: VectorField,
    pub dv: VectorField,
    pub dh: ScalarField,
}

/// Right-hand side together with the pieces diagnostics reuse.
pub struct RhsParts {
    pub rates: Rates,
    pub geometry: GeometryBundle,
    pub psi: VectorField,
    pub de: ScalarField,
    pub d2e: ScalarField,
}

pub struct Stepper {
    pub grid: SlabGrid,
    pub cfg: RunConfig,
    pub eos: EoS,
    pub mask: Vec<f64>,
    lift: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: SlabGrid, cfg: RunConfig) -> Self {
        let mask = sponge_profile(&grid, cfg.sponge_width, cfg.sponge_strength);
        let lift = lift_profile(&grid, cfg.clamp_rows);
        let eos = cfg.eos();
        Stepper { grid, cfg, eos, mask, lift }
    }

    pub fn rhs_parts(&self, s: &KappaState) -> Result<RhsParts> {
        let grid = &self.grid;
        let g = self.cfg.gravity;
        let geo = GeometryBundle::build(grid, &s.eta, self.cfg.kappa)?;
        let corr = build_correction(grid, &s.eta.u, &s.v, &geo)?;
        let h = s.h_full(grid, g);
        let ef = self.eos.eval(&h)?;
        let mut du: VectorField = std::array::from_fn(|a| &s.v[a] + &corr.psi[a]);
        let mut dv = momentum_rate(grid, &s.h_pert, &geo.a_tilde, g);
        let mut dh = div_a(grid, &s.v, &geo.a_tilde);
        Zip::from(&mut dh).and(&ef.de).for_each(|d, e| *d = -*d / e);
        for c in du.iter_mut().chain(dv.iter_mut()) {
            apply_profile(c, &self.mask);
        }
        apply_profile(&mut dh, &self.mask);
        Ok(RhsParts {
            rates: Rates { du, dv, dh },
            geometry: geo,
            psi: corr.psi,
            de: ef.de,
            d2e: ef.d2e,
        })
    }

    pub fn rhs(&self, s: &KappaState) -> Result<Rates> {
        Ok(self.rhs_parts(s)?.rates)
    }

    /// Largest `|v| + sound speed` over the slab.
    pub fn max_speed(&self, s: &KappaState) -> f64 {
        let h = s.h_full(&self.grid, self.cfg.gravity);
        let mut m = 0.0_f64;
        Zip::from(&s.v[0]).and(&s.v[1]).and(&s.v[2]).and(&h).for_each(|a, b, c, hh| {
            let c2 = self.eos.sound_speed_sq(self.eos.rho(*hh));
            m = m.max((a * a + b * b + c * c).sqrt() + c2.sqrt());
        });
        m
    }

    pub fn cfl_limit(&self, s: &KappaState) -> f64 {
        self.cfg.cfl * self.grid.min_spacing() / self.max_speed(s).max(1e-12)
    }

    /// Step used for a run: the configured one (checked) or the CFL value.
    pub fn choose_dt(&self, s: &KappaState) -> Result<f64> {
        let limit = self.cfl_limit(s);
        match self.cfg.dt {
            Some(dt) if dt > limit * (1.0 + 1e-12) => Err(Error::CflViolation { dt, limit }),
            Some(dt) => Ok(dt),
            None => Ok(limit),
        }
    }

    fn stage(&self, s: &KappaState, r: &Rates, c: f64) -> KappaState {
        let mut n = s.clone();
        for a in 0..3 {
            add_scaled(&mut n.eta.u[a], &r.du[a], c);
            add_scaled(&mut n.v[a], &r.dv[a], c);
        }
        add_scaled(&mut n.h_pert, &r.dh, c);
        n.t = s.t + c;
        n.eta.t = n.t;
        n
    }

    /// Classical RK4; returns the new state and the clamp magnitude `|h|_Gamma|_0`
    /// removed after the step (0 when clamping is off).
    pub fn step_rk4(&self, s: &KappaState, dt: f64) -> Result<(KappaState, f64)> {
        let k1 = self.rhs(s)?;
        let k2 = self.rhs(&self.stage(s, &k1, 0.5 * dt))?;
        let k3 = self.rhs(&self.stage(s, &k2, 0.5 * dt))?;
        let k4 = self.rhs(&self.stage(s, &k3, dt))?;
        let mut n = s.clone();
        let w = dt / 6.0;
        for (r, c) in [(&k1, w), (&k2, 2.0 * w), (&k3, 2.0 * w), (&k4, w)] {
            for a in 0..3 {
                add_scaled(&mut n.eta.u[a], &r.du[a], c);
                add_scaled(&mut n.v[a], &r.dv[a], c);
            }
            add_scaled(&mut n.h_pert, &r.dh, c);
        }
        n.t = s.t + dt;
        n.eta.t = n.t;
        let mut clamp = 0.0;
        if self.cfg.clamp {
            clamp = clamp_top(&self.grid, &mut n.h_pert, &self.lift);
        }
        self.check(&n)?;
        Ok((n, clamp))
    }

    fn check(&self, s: &KappaState) -> Result<()> {
        let fields = s.eta.u.iter().chain(s.v.iter()).chain(std::iter::once(&s.h_pert));
        for (idx, f) in fields.enumerate() {
            let m = SlabGrid::norm_linf(f);
            if !m.is_finite() || m > self.cfg.ceiling {
                let what = ["u1", "u2", "u3", "v1", "v2", "v3", "h"][idx];
                return Err(Error::Blowup { what: format!("max |{what}|"), value: m, ceiling: self.cfg.ceiling });
            }
        }
        Ok(())
    }

    /// Fixed-step integration to `t_end`, calling `observe` after every step.
    pub fn integrate(
        &self,
        s0: &KappaState,
        dt: f64,
        t_end: f64,
        mut observe: impl FnMut(&KappaState, f64) -> Result<()>,
    ) -> Result<KappaState> {
        let steps = ((t_end - s0.t) / dt - 1e-9).ceil().max(0.0) as usize;
        let mut s = s0.clone();
        for _ in 0..steps {
            let (n, clamp) = self.step_rk4(&s, dt)?;
            s = n;
            observe(&s, clamp)?;
        }
        Ok(s)
    }
}

/// Number of fixed steps of size close to `dt_max` that land exactly on `t_end`.
pub fn uniform_steps(t_end: f64, dt_max: f64) -> (usize, f64) {
    let n = (t_end / dt_max).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}
