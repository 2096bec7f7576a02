//! Picard construction of the smoothed solution.
//!
//! Iterate `n + 1` solves the system linearised at iterate `n`:
//! `d_t eta = v + psi(n)`, `d_t v = -grad_{a~(n)} h - g e3`,
//! `sigma d_t h = -div_{a~(n)} v` with `sigma = e'(h(n))` and `h = 0` on `Gamma`.
//! For frozen coefficients that system is itself solved as the fixed point of the
//! map `Xi`: velocity and flow map by trapezoid quadrature, enthalpy by a leapfrog
//! solve of the wave equation obtained from differentiating the continuity relation.

use std::time::Instant;

use crate::correction::build_correction;
use crate::diagnostics::fd_weights;
use crate::dynamics::{clamp_top, lift_profile, momentum_rate, pert_to_full, sponge_profile};
use crate::eos::EoS;
use crate::geometry::{div_a, FlowMap, GeometryBundle};
use crate::grid::{add_scaled, mat_identity, MatrixField, ScalarField, SlabGrid, VectorField};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BottomCondition {
    /// `d3` of the perturbation vanishes on the bottom row.
    Neumann,
    /// Perturbation pinned to zero on the bottom row.
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardConfig {
    pub kappa: f64,
    pub gamma: f64,
    pub gravity: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Stop once `sup_t [E]` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub sponge_width: f64,
    pub sponge_strength: f64,
    pub bottom: BottomCondition,
    /// Depth in grid rows of the lift that pins `h = 0` on the top row. The leapfrog
    /// solve is only stable for 1 (plain injection); wider lifts grow under the top.
    pub clamp_rows: f64,
    /// Norm ceiling of the iterates; exceeding it is flagged, not fatal.
    pub ceiling: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            kappa: 0.05,
            gamma: 1.0,
            gravity: 1.0,
            t_end: 0.05,
            dt: 0.0125,
            tol: 1e-26,
            max_iter: 8,
            inner_tol: 1e-15,
            inner_max: 30,
            sponge_width: 0.15,
            sponge_strength: 1.0,
            bottom: BottomCondition::Neumann,
            clamp_rows: 1.0,
            ceiling: 1e3,
        }
    }
}

impl PicardConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Uniformly sampled `(u, v, h + g y3)` on `t_m = m dt`, `m = 0..=M`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub u: Vec<VectorField>,
    pub v: Vec<VectorField>,
    pub h: Vec<ScalarField>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn constant(grid: &SlabGrid, dt: f64, samples: usize, v: &VectorField, h: &ScalarField) -> Self {
        Trajectory {
            dt,
            u: vec![grid.zeros_vec(); samples],
            v: vec![v.clone(); samples],
            h: vec![h.clone(); samples],
        }
    }
}

/// Coefficients of the linear system frozen from one iterate.
#[derive(Clone, Debug)]
pub struct FrozenCoefficients {
    pub dt: f64,
    pub a_tilde: Vec<MatrixField>,
    pub da_tilde: Vec<MatrixField>,
    pub a: Vec<MatrixField>,
    pub psi: Vec<VectorField>,
    pub sigma: Vec<ScalarField>,
    pub dsigma: Vec<ScalarField>,
}

fn time_derivative_samples<T: Clone>(
    xs: &[T],
    dt: f64,
    combine: impl Fn(&[&T], &[f64]) -> T,
) -> Vec<T> {
    let n = xs.len();
    (0..n)
        .map(|m| {
            let (lo, hi) = stencil_window(m, n, 3);
            let nodes: Vec<f64> = (lo..hi).map(|i| i as f64).collect();
            let w: Vec<f64> = fd_weights(m as f64, &nodes, 1).iter().map(|c| c / dt).collect();
            let refs: Vec<&T> = xs[lo..hi].iter().collect();
            combine(&refs, &w)
        })
        .collect()
}

/// Window of `width` consecutive samples as centred on `m` as the range allows.
fn stencil_window(m: usize, n: usize, width: usize) -> (usize, usize) {
    let w = width.min(n);
    let lo = m.saturating_sub(w / 2).min(n - w);
    (lo, lo + w)
}

fn lin_scalar(fs: &[&ScalarField], w: &[f64]) -> ScalarField {
    let mut out = fs[0] * w[0];
    for (f, c) in fs.iter().zip(w).skip(1) {
        add_scaled(&mut out, f, *c);
    }
    out
}

fn lin_matrix(fs: &[&MatrixField], w: &[f64]) -> MatrixField {
    std::array::from_fn(|m| {
        std::array::from_fn(|n| {
            let col: Vec<&ScalarField> = fs.iter().map(|f| &f[m][n]).collect();
            lin_scalar(&col, w)
        })
    })
}

fn lin_vector(fs: &[&VectorField], w: &[f64]) -> VectorField {
    std::array::from_fn(|c| {
        let col: Vec<&ScalarField> = fs.iter().map(|f| &f[c]).collect();
        lin_scalar(&col, w)
    })
}

impl FrozenCoefficients {
    pub fn from_iterate(grid: &SlabGrid, it: &Trajectory, cfg: &PicardConfig) -> Result<Self> {
        let eos = EoS::new(cfg.gamma);
        let mut a_tilde = Vec::new();
        let mut a = Vec::new();
        let mut psi = Vec::new();
        let mut sigma = Vec::new();
        for m in 0..it.len() {
            let flow = FlowMap { u: it.u[m].clone(), t: m as f64 * it.dt };
            let geo = GeometryBundle::build(grid, &flow, cfg.kappa)?;
            psi.push(build_correction(grid, &it.u[m], &it.v[m], &geo)?.psi);
            let h = pert_to_full(grid, &it.h[m], cfg.gravity);
            eos.check(&h)?;
            sigma.push(h.mapv(|x| eos.de(x)));
            a_tilde.push(geo.a_tilde);
            a.push(geo.a);
        }
        let da_tilde = time_derivative_samples(&a_tilde, it.dt, lin_matrix);
        let dsigma = time_derivative_samples(&sigma, it.dt, lin_scalar);
        Ok(FrozenCoefficients { dt: it.dt, a_tilde, da_tilde, a, psi, sigma, dsigma })
    }

    /// Identity geometry, no correction and `sigma = e'(0)`: the coefficients of the
    /// trivial iterate.
    pub fn trivial(grid: &SlabGrid, dt: f64, samples: usize, gamma: f64) -> Self {
        let eos = EoS::new(gamma);
        let id = mat_identity(grid);
        let zero_m: MatrixField = std::array::from_fn(|_| std::array::from_fn(|_| grid.zeros()));
        FrozenCoefficients {
            dt,
            a_tilde: vec![id.clone(); samples],
            da_tilde: vec![zero_m; samples],
            a: vec![id; samples],
            psi: vec![grid.zeros_vec(); samples],
            sigma: vec![grid.zeros() + eos.de(0.0); samples],
            dsigma: vec![grid.zeros(); samples],
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

/// Everything the enthalpy solve needs beyond the coefficients.
pub struct WaveProblem<'a> {
    pub grid: &'a SlabGrid,
    pub coeffs: &'a FrozenCoefficients,
    pub v: &'a [VectorField],
    /// Initial perturbation `h0 + g y3` and `d_t h` at `t = 0`.
    pub h0: &'a ScalarField,
    pub h1: &'a ScalarField,
    pub mask: &'a [f64],
    pub gravity: f64,
    pub bottom: BottomCondition,
    /// Profile from `lift_profile`; the top trace is removed along it every step.
    pub lift: &'a [f64],
    /// Extra source added to the right-hand side at sample `m` (manufactured solutions).
    pub forcing: Option<&'a dyn Fn(usize) -> ScalarField>,
}

fn scale_rows(mut f: ScalarField, p: &[f64]) -> ScalarField {
    for ((_, _, k), v) in f.indexed_iter_mut() {
        *v *= p[k];
    }
    f
}

impl WaveProblem<'_> {
    /// `-mask (div_{d_t a} v + div_a(mask (-grad_a h - g e3)))` plus forcing.
    fn source(&self, hp: &ScalarField, m: usize) -> ScalarField {
        let grid = self.grid;
        let c = self.coeffs;
        let mut dv = momentum_rate(grid, hp, &c.a_tilde[m], self.gravity);
        for comp in dv.iter_mut() {
            *comp = scale_rows(std::mem::take(comp), self.mask);
        }
        let s = div_a(grid, &self.v[m], &c.da_tilde[m]) + div_a(grid, &dv, &c.a_tilde[m]);
        let mut out = scale_rows(-s, self.mask);
        if let Some(f) = self.forcing {
            out += &f(m);
        }
        out
    }

    fn boundary_rows(&self, h: &mut ScalarField) {
        let nz = self.grid.nz;
        clamp_top(self.grid, h, self.lift);
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                h[[i, j, nz - 1]] = match self.bottom {
                    BottomCondition::Dirichlet => 0.0,
                    BottomCondition::Neumann => {
                        let f = |q: usize| h[[i, j, nz - 1 - q]];
                        (48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)) / 25.0
                    }
                };
            }
        }
    }

    /// Leapfrog solve; returns the perturbation at every sample.
    pub fn solve(&self) -> Result<Vec<ScalarField>> {
        let grid = self.grid;
        let c = self.coeffs;
        let dt = c.dt;
        let smin = c.sigma.iter().flat_map(|s| s.iter()).fold(f64::INFINITY, |m, v| m.min(*v));
        let limit = 0.4 * grid.min_spacing() * smin.sqrt();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let n = c.len();
        let mut out = Vec::with_capacity(n);
        out.push(self.h0.clone());
        if n == 1 {
            return Ok(out);
        }
        // Taylor start: sigma h_tt = F - sigma_t h_t
        let f0 = self.source(self.h0, 0);
        let htt = (f0 - &(&c.dsigma[0] * self.h1)) / &c.sigma[0];
        let mut h1 = self.h0.clone();
        add_scaled(&mut h1, self.h1, dt);
        add_scaled(&mut h1, &htt, 0.5 * dt * dt);
        self.boundary_rows(&mut h1);
        out.push(h1);
        for m in 1..n - 1 {
            let f = self.source(&out[m], m);
            let sig = &c.sigma[m];
            let half = &c.dsigma[m] * (0.5 * dt);
            let mut num = f * (dt * dt);
            num += &(sig * &(&out[m] * 2.0 - &out[m - 1]));
            num += &(&half * &out[m - 1]);
            let mut next = num / &(sig + &half);
            self.boundary_rows(&mut next);
            out.push(next);
        }
        Ok(out)
    }
}

/// Initial data shared by every iterate.
#[derive(Clone, Debug)]
pub struct PicardData {
    pub v0: VectorField,
    /// `h0 + g y3`.
    pub h0: ScalarField,
    pub h1: ScalarField,
}

/// One application of `Xi` to the input `(xi, w, pi)`; `xi` is not needed because the
/// flow map is recovered from `w` alone.
pub fn solution_map(
    grid: &SlabGrid,
    coeffs: &FrozenCoefficients,
    input: &Trajectory,
    data: &PicardData,
    cfg: &PicardConfig,
) -> Result<Trajectory> {
    let mask = sponge_profile(grid, cfg.sponge_width, cfg.sponge_strength);
    let dt = coeffs.dt;
    let n = coeffs.len();
    let vrate = |m: usize| -> VectorField {
        let r = momentum_rate(grid, &input.h[m], &coeffs.a_tilde[m], cfg.gravity);
        r.map(|c| scale_rows(c, &mask))
    };
    let mut v = vec![data.v0.clone()];
    let mut prev = vrate(0);
    for m in 1..n {
        let cur = vrate(m);
        let mut next = v[m - 1].clone();
        for c in 0..3 {
            add_scaled(&mut next[c], &prev[c], 0.5 * dt);
            add_scaled(&mut next[c], &cur[c], 0.5 * dt);
        }
        v.push(next);
        prev = cur;
    }
    let wave = WaveProblem {
        grid,
        coeffs,
        v: &v,
        h0: &data.h0,
        h1: &data.h1,
        mask: &mask,
        gravity: cfg.gravity,
        bottom: cfg.bottom,
        lift: &lift_profile(grid, cfg.clamp_rows),
        forcing: None,
    };
    let h = wave.solve()?;
    let urate = |m: usize| -> VectorField {
        std::array::from_fn(|c| scale_rows(&input.v[m][c] + &coeffs.psi[m][c], &mask))
    };
    let mut u = vec![grid.zeros_vec()];
    let mut prev = urate(0);
    for m in 1..n {
        let cur = urate(m);
        let mut next = u[m - 1].clone();
        for c in 0..3 {
            add_scaled(&mut next[c], &prev[c], 0.5 * dt);
            add_scaled(&mut next[c], &cur[c], 0.5 * dt);
        }
        u.push(next);
        prev = cur;
    }
    Ok(Trajectory { dt, u, v, h })
}

fn traj_change(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut m = 0.0_f64;
    for s in 0..a.len() {
        for c in 0..3 {
            m = m.max(SlabGrid::norm_linf(&(&a.v[s][c] - &b.v[s][c])));
            m = m.max(SlabGrid::norm_linf(&(&a.u[s][c] - &b.u[s][c])));
        }
        m = m.max(SlabGrid::norm_linf(&(&a.h[s] - &b.h[s])));
    }
    m
}

/// Fixed point of `Xi` at frozen coefficients, starting from `guess`.
pub fn solve_linear(
    grid: &SlabGrid,
    coeffs: &FrozenCoefficients,
    guess: &Trajectory,
    data: &PicardData,
    cfg: &PicardConfig,
) -> Result<(Trajectory, usize)> {
    let mut cur = solution_map(grid, coeffs, guess, data, cfg)?;
    for k in 1..cfg.inner_max {
        let next = solution_map(grid, coeffs, &cur, data, cfg)?;
        let change = traj_change(&next, &cur);
        cur = next;
        let scale = 1.0 + cur.v.iter().flat_map(|x| x.iter()).map(SlabGrid::norm_linf).fold(0.0, f64::max);
        if change <= cfg.inner_tol * scale {
            return Ok((cur, k + 1));
        }
    }
    Ok((cur, cfg.inner_max))
}

/// An iterate with its exact first time derivatives and the unsmoothed cofactor of
/// the iterate its coefficients were frozen from.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub n: usize,
    pub traj: Trajectory,
    pub dv: Vec<VectorField>,
    pub dh: Vec<ScalarField>,
    pub coef_a: Vec<MatrixField>,
}

impl Iterate {
    pub fn trivial(grid: &SlabGrid, n: usize, dt: f64, samples: usize, gravity: f64) -> Self {
        // h = 0, i.e. perturbation g y3
        let hp = crate::dynamics::full_to_pert(grid, &grid.zeros(), gravity);
        Iterate {
            n,
            traj: Trajectory::constant(grid, dt, samples, &grid.zeros_vec(), &hp),
            dv: vec![grid.zeros_vec(); samples],
            dh: vec![grid.zeros(); samples],
            coef_a: vec![mat_identity(grid); samples],
        }
    }

    fn from_solution(grid: &SlabGrid, n: usize, traj: Trajectory, coeffs: &FrozenCoefficients, cfg: &PicardConfig) -> Self {
        let mask = sponge_profile(grid, cfg.sponge_width, cfg.sponge_strength);
        let mut dv = Vec::new();
        let mut dh = Vec::new();
        for m in 0..traj.len() {
            let r = momentum_rate(grid, &traj.h[m], &coeffs.a_tilde[m], cfg.gravity);
            dv.push(r.map(|c| scale_rows(c, &mask)));
            let d = div_a(grid, &traj.v[m], &coeffs.a_tilde[m]);
            dh.push(scale_rows(-(d / &coeffs.sigma[m]), &mask));
        }
        Iterate { n, traj, dv, dh, coef_a: coeffs.a.clone() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DifferenceEnergy {
    /// `||d_t^{3-k}[v]||_k^2`, `k = 0..=3`.
    pub v: [f64; 4],
    pub h: [f64; 4],
    pub eta: f64,
    pub a: f64,
}

impl DifferenceEnergy {
    pub fn total(&self) -> f64 {
        self.v.iter().sum::<f64>() + self.h.iter().sum::<f64>() + self.eta + self.a
    }
}

/// `[E](t_m)` between two iterates for every sample.
pub fn difference_energy(grid: &SlabGrid, x: &Iterate, y: &Iterate) -> Result<Vec<DifferenceEnergy>> {
    let n = x.traj.len();
    if n != y.traj.len() || (x.traj.dt - y.traj.dt).abs() > 0.0 {
        return Err(Error::GridMismatch);
    }
    let dt = x.traj.dt;
    let ddv: Vec<VectorField> = (0..n).map(|m| crate::grid::vec_sub(&x.dv[m], &y.dv[m])).collect();
    let ddh: Vec<ScalarField> = (0..n).map(|m| &x.dh[m] - &y.dh[m]).collect();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let (lo, hi) = stencil_window(m, n, 5);
        let nodes: Vec<f64> = (lo..hi).map(|i| i as f64).collect();
        let w1: Vec<f64> = fd_weights(m as f64, &nodes, 1).iter().map(|c| c / dt).collect();
        let w2: Vec<f64> = if nodes.len() >= 3 {
            fd_weights(m as f64, &nodes, 2).iter().map(|c| c / (dt * dt)).collect()
        } else {
            vec![0.0; nodes.len()]
        };
        let vs: Vec<&VectorField> = ddv[lo..hi].iter().collect();
        let hs: Vec<&ScalarField> = ddh[lo..hi].iter().collect();
        let dv = crate::grid::vec_sub(&x.traj.v[m], &y.traj.v[m]);
        let dh = &x.traj.h[m] - &y.traj.h[m];
        let v = [
            grid.norm_interior_vec(&lin_vector(&vs, &w2), 0).powi(2),
            grid.norm_interior_vec(&lin_vector(&vs, &w1), 1).powi(2),
            grid.norm_interior_vec(&ddv[m], 2).powi(2),
            grid.norm_interior_vec(&dv, 3).powi(2),
        ];
        let h = [
            grid.norm_interior(&lin_scalar(&hs, &w2), 0).powi(2),
            grid.norm_interior(&lin_scalar(&hs, &w1), 1).powi(2),
            grid.norm_interior(&ddh[m], 2).powi(2),
            grid.norm_interior(&dh, 3).powi(2),
        ];
        let eta = grid.norm_interior_vec(&crate::grid::vec_sub(&x.traj.u[m], &y.traj.u[m]), 3).powi(2);
        let a = grid.norm_interior_mat(&crate::grid::mat_sub(&x.coef_a[m], &y.coef_a[m]), 2).powi(2);
        out.push(DifferenceEnergy { v, h, eta, a });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sup_diff_energy: f64,
    /// `sup[E](n) / sup[E](n-1)`; NaN for the first row.
    pub ratio: f64,
    pub wallclock: f64,
    pub inner_iterations: usize,
    /// Largest `L^inf` norm of `(u, v, h + g y3)`; above the ceiling the row is flagged.
    pub iterate_norm: f64,
    pub over_ceiling: bool,
}

pub struct PicardResult {
    pub iterate: Iterate,
    pub history: Vec<ConvergenceRow>,
    pub converged: bool,
}

fn iterate_norm(t: &Trajectory) -> f64 {
    let mut m = 0.0_f64;
    for s in 0..t.len() {
        for c in 0..3 {
            m = m.max(SlabGrid::norm_linf(&t.u[s][c])).max(SlabGrid::norm_linf(&t.v[s][c]));
        }
        m = m.max(SlabGrid::norm_linf(&t.h[s]));
    }
    m
}

/// Runs the outer iteration from `(Id, 0, 0)`.
pub fn picard_run(grid: &SlabGrid, data: &PicardData, cfg: &PicardConfig) -> Result<PicardResult> {
    let samples = cfg.steps() + 1;
    let dt = cfg.t_end / cfg.steps() as f64;
    let start = Instant::now();
    let mut prev = Iterate::trivial(grid, 0, dt, samples, cfg.gravity);
    let mut cur = Iterate::trivial(grid, 1, dt, samples, cfg.gravity);
    let mut history: Vec<ConvergenceRow> = Vec::new();
    let mut rises = 0;
    for n in 1..=cfg.max_iter {
        let coeffs = if n == 1 {
            FrozenCoefficients::trivial(grid, dt, samples, cfg.gamma)
        } else {
            FrozenCoefficients::from_iterate(grid, &cur.traj, cfg)?
        };
        let guess = if n == 1 {
            Trajectory::constant(grid, dt, samples, &data.v0, &data.h0)
        } else {
            cur.traj.clone()
        };
        let (traj, inner) = solve_linear(grid, &coeffs, &guess, data, cfg)?;
        let next = Iterate::from_solution(grid, n + 1, traj, &coeffs, cfg);
        let e = difference_energy(grid, &next, &cur)?;
        let sup = e.iter().map(|d| d.total()).fold(0.0, f64::max);
        let ratio = history.last().map_or(f64::NAN, |r| sup / r.sup_diff_energy);
        let norm = iterate_norm(&next.traj);
        history.push(ConvergenceRow {
            n,
            sup_diff_energy: sup,
            ratio,
            wallclock: start.elapsed().as_secs_f64(),
            inner_iterations: inner,
            iterate_norm: norm,
            over_ceiling: norm > cfg.ceiling,
        });
        prev = std::mem::replace(&mut cur, next);
        if ratio >= 1.0 {
            rises += 1;
            if rises >= 3 {
                return Err(Error::NoContraction { iter: n });
            }
        } else {
            rises = 0;
        }
        if sup < cfg.tol {
            return Ok(PicardResult { iterate: cur, history, converged: true });
        }
    }
    drop(prev);
    Ok(PicardResult { iterate: cur, history, converged: false })
}

/// `div_{a~} v + sigma d_t h` along a solution, which the construction keeps constant.
pub fn recovered_divergence(grid: &SlabGrid, it: &Iterate, coeffs: &FrozenCoefficients) -> Vec<ScalarField> {
    let n = it.traj.len();
    let dh = time_derivative_samples(&it.traj.h, it.traj.dt, lin_scalar);
    (0..n)
        .map(|m| div_a(grid, &it.traj.v[m], &coeffs.a_tilde[m]) + &(&coeffs.sigma[m] * &dh[m]))
        .collect()
}
