//! Monitored quantities: conserved energy, the high-order functional, the enthalpy
//! wave residual, sign and smallness monitors, Hodge norms and the two-run gap energy.

use std::collections::VecDeque;

use ndarray::Zip;

use crate::dynamics::{grad_a_full, KappaState, RhsParts, Stepper};
use crate::eos::EoS;
use crate::geometry::{deformation_gradient, div_a, flat_curl, flat_div, invert_gradient};
use crate::grid::{mat_identity, mat_sub, MatrixField, ScalarField, SlabGrid, VectorField};
use crate::harmonic::{mollify2_vec, mollify_boundary, MollifierSpec};
use crate::{Error, Result};

/// Components of the conserved energy, hydrostatic background included.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct E0 {
    pub kin: f64,
    pub int: f64,
    pub surf: f64,
    pub strat: f64,
}

impl E0 {
    pub fn total(&self) -> f64 {
        self.kin + self.int + self.surf + self.strat
    }

    pub fn max_component(&self) -> f64 {
        [self.kin, self.int, self.surf, self.strat].iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Area factor of the top surface projected on the horizontal plane:
/// `d1 eta1 d2 eta2 - d2 eta1 d1 eta2` on `Gamma`.
pub fn surface_area_factor(grid: &SlabGrid, u: &VectorField) -> ndarray::Array2<f64> {
    let u1 = grid.trace_top(&u[0]);
    let u2 = grid.trace_top(&u[1]);
    let d11 = grid.dbar_boundary(&u1, 1) + 1.0;
    let d21 = grid.dbar_boundary(&u1, 2);
    let d12 = grid.dbar_boundary(&u2, 1);
    let d22 = grid.dbar_boundary(&u2, 2) + 1.0;
    &d11 * &d22 - &d21 * &d12
}

/// Lagrangian pull-back of kinetic, internal and gravitational energy. The two
/// column integrals of the gravity term reduce to `g/2 int S^2` over the moving
/// surface, evaluated on `Gamma` with the horizontal area factor.
pub fn conserved_energy(grid: &SlabGrid, s: &KappaState, eos: &EoS, g: f64) -> Result<E0> {
    let m = deformation_gradient(grid, &s.eta.u);
    let (_, j) = invert_gradient(grid, &m)?;
    let h = s.h_full(grid, g);
    eos.check(&h)?;
    let rho = h.mapv(|x| eos.rho(x));
    let speed2 = &s.v[0] * &s.v[0] + &s.v[1] * &s.v[1] + &s.v[2] * &s.v[2];
    let rj = &rho * &j;
    let kin = 0.5 * grid.integrate_high_order(&(&rj * &speed2));
    let int = grid.integrate_high_order(&(&rj * &rho.mapv(|r| eos.q(r))));
    let eta3 = s.eta.eta_component(grid, 2);
    let strat = g * grid.integrate_high_order(&(&(&rho - 1.0) * &(&eta3 * &j)));
    let s3 = grid.trace_top(&s.eta.u[2]);
    let jg = surface_area_factor(grid, &s.eta.u);
    let surf = 0.5 * g * grid.integrate_boundary(&(&(&s3 * &s3) * &jg));
    Ok(E0 { kin, int, surf, strat })
}

pub fn taylor_min(grid: &SlabGrid, h_pert: &ScalarField, g: f64) -> f64 {
    let d3 = grid.trace_top(&grid.dnormal(h_pert));
    d3.iter().fold(f64::INFINITY, |m, v| m.min(g - v))
}

pub fn jac_dev(grid: &SlabGrid, j: &ScalarField) -> f64 {
    grid.norm_interior(&(j - 1.0), 3)
}

pub fn cof_dev(grid: &SlabGrid, a: &MatrixField) -> f64 {
    grid.norm_interior_mat(&mat_sub(&mat_identity(grid), a), 3)
}

/// `d_t a~ = -a~ (d Lambda^2 d_t u) a~`.
pub fn cofactor_rate(grid: &SlabGrid, a: &MatrixField, du: &VectorField, kappa: f64) -> MatrixField {
    let ds = mollify2_vec(grid, du, &MollifierSpec::gaussian(kappa));
    let md: Vec<VectorField> = ds.iter().map(|c| grid.grad(c)).collect();
    // t[mu][nu] = sum_beta a[mu][beta] d_nu eta_dot_beta
    let t: MatrixField = std::array::from_fn(|mu| {
        std::array::from_fn(|nu| {
            let mut o = grid.zeros();
            for (beta, mb) in md.iter().enumerate() {
                Zip::from(&mut o).and(&a[mu][beta]).and(&mb[nu]).for_each(|o, x, y| *o += x * y);
            }
            o
        })
    });
    std::array::from_fn(|mu| {
        std::array::from_fn(|alpha| {
            let mut o = grid.zeros();
            for nu in 0..3 {
                Zip::from(&mut o).and(&t[mu][nu]).and(&a[nu][alpha]).for_each(|o, x, y| *o -= x * y);
            }
            o
        })
    })
}

/// Exact first and second time derivatives of `(v, h)` along the smoothed system.
#[derive(Clone, Debug)]
pub struct TimeDerivs {
    pub du: VectorField,
    pub dv: VectorField,
    pub dh: ScalarField,
    pub d2v: VectorField,
    pub d2h: ScalarField,
    pub da: MatrixField,
}

fn masked(mut f: ScalarField, mask: &[f64]) -> ScalarField {
    for ((_, _, k), v) in f.indexed_iter_mut() {
        *v *= mask[k];
    }
    f
}

pub fn time_derivatives(st: &Stepper, s: &KappaState) -> Result<(TimeDerivs, RhsParts)> {
    let grid = &st.grid;
    let g = st.cfg.gravity;
    let parts = st.rhs_parts(s)?;
    let r = &parts.rates;
    let at = &parts.geometry.a_tilde;
    let da = cofactor_rate(grid, at, &r.du, st.cfg.kappa);
    let g_dot = grad_a_full(grid, &s.h_pert, &da, g);
    let g_h = crate::geometry::grad_a(grid, &r.dh, at);
    let d2v: VectorField = std::array::from_fn(|a| masked(-(&g_dot[a] + &g_h[a]), &st.mask));
    let num = -(div_a(grid, &s.v, &da) + div_a(grid, &r.dv, at)) - &(&parts.d2e * &(&r.dh * &r.dh));
    let d2h = masked(num / &parts.de, &st.mask);
    Ok((
        TimeDerivs { du: r.du.clone(), dv: r.dv.clone(), dh: r.dh.clone(), d2v, d2h, da },
        parts,
    ))
}

/// Finite-difference weights for the `m`-th derivative at `x0` on the given nodes.
pub fn fd_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

fn combine(fields: &[&ScalarField], w: &[f64], scale: f64) -> ScalarField {
    let mut out = fields[0] * (w[0] * scale);
    for (f, &c) in fields.iter().zip(w).skip(1) {
        crate::grid::add_scaled(&mut out, f, c * scale);
    }
    out
}

/// `sum over ordered 4-tuples of tangential directions |a~^{3 alpha} dbar^4 Lambda eta_alpha|_0^2`.
pub fn kappa_boundary_term(grid: &SlabGrid, u: &VectorField, a: &MatrixField, kappa: f64) -> f64 {
    let spec = MollifierSpec::gaussian(kappa);
    let tr: Vec<_> = u.iter().map(|c| mollify_boundary(grid, &grid.trace_top(c), &spec)).collect();
    let at: Vec<_> = (0..3).map(|al| grid.trace_top(&a[2][al])).collect();
    let mut total = 0.0;
    for (p, w) in [(4usize, 1.0), (3, 4.0), (2, 6.0), (1, 4.0), (0, 1.0)] {
        let sym = grid.dbar_power_symbol(p, 4 - p);
        let mut acc = grid.zeros_boundary();
        for al in 0..3 {
            let d = grid.multiply_boundary(&tr[al], &sym);
            acc = acc + &(&at[al] * &d);
        }
        total += w * grid.norm_boundary(&acc, 0.0).powi(2);
    }
    total
}

/// Terms of the high-order functional available from one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KappaInstant {
    pub eta_h: f64,
    pub v4: f64,
    pub dv3: f64,
    pub d2v2: f64,
    pub h_h: f64,
    pub dh3: f64,
    pub d2h2: f64,
    pub bdry: f64,
}

/// Terms needing history stencils.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KappaHistoric {
    pub d3v1: f64,
    pub d4v0: f64,
    pub d3h1: f64,
    pub d4h0: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KappaEnergy {
    pub instant: KappaInstant,
    pub historic: KappaHistoric,
}

impl KappaEnergy {
    pub fn total(&self) -> f64 {
        let i = &self.instant;
        let h = &self.historic;
        i.eta_h + i.v4 + i.dv3 + i.d2v2 + i.h_h + i.dh3 + i.d2h2 + i.bdry + h.d3v1 + h.d4v0 + h.d3h1 + h.d4h0
    }
}

pub fn kappa_instant(grid: &SlabGrid, s: &KappaState, d: &TimeDerivs, a_tilde: &MatrixField, kappa: f64, g: f64) -> KappaInstant {
    let h = s.h_full(grid, g);
    KappaInstant {
        eta_h: grid.norm_script_h_vec(&s.eta.u).powi(2),
        v4: grid.norm_interior_vec(&s.v, 4).powi(2),
        dv3: grid.norm_interior_vec(&d.dv, 3).powi(2),
        d2v2: grid.norm_interior_vec(&d.d2v, 2).powi(2),
        h_h: grid.norm_script_h(&h).powi(2),
        dh3: grid.norm_interior(&d.dh, 3).powi(2),
        d2h2: grid.norm_interior(&d.d2h, 2).powi(2),
        bdry: kappa_boundary_term(grid, &s.eta.u, a_tilde, kappa),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e0: E0,
    pub ekap: KappaEnergy,
    pub taylor_min: f64,
    pub jac_dev: f64,
    pub cof_dev: f64,
    pub h_bdry_drift: f64,
    pub wave_res: f64,
    pub wave_energy_reduced: f64,
    /// Set when the history was too short for some stencil terms.
    pub partial: bool,
}

pub const CSV_HEADER: &str = "t,e0_total,e0_kin,e0_int,e0_surf,e0_strat,ekap_total,ekap_bdry,taylor_min,jac_dev,cof_dev,h_bdry_drift,wave_res,wave_energy_reduced";

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 14] {
        [
            self.t,
            self.e0.total(),
            self.e0.kin,
            self.e0.int,
            self.e0.surf,
            self.e0.strat,
            self.ekap.total(),
            self.ekap.instant.bdry,
            self.taylor_min,
            self.jac_dev,
            self.cof_dev,
            self.h_bdry_drift,
            self.wave_res,
            self.wave_energy_reduced,
        ]
    }
}

/// Pointwise data of one sample kept while its stencil neighbours arrive.
struct Pending {
    rec: DiagnosticsRecord,
    d2v: VectorField,
    d2h: ScalarField,
    dh: ScalarField,
    /// Wave residual is `coef * d_t^2 h + rest`.
    coef: ScalarField,
    rest: ScalarField,
    dh4: f64,
    d2h3: f64,
}

/// Streaming evaluator turning state samples into finished records.
pub struct Monitor {
    window: VecDeque<Pending>,
    seen: usize,
    dt: f64,
    pub records: Vec<DiagnosticsRecord>,
    rows: Vec<bool>,
}

/// Rows of the slab where the sponge is inactive.
fn active_rows(mask: &[f64]) -> Vec<bool> {
    mask.iter().map(|&m| m == 1.0).collect()
}

fn l2_rows(grid: &SlabGrid, f: &ScalarField, rows: &[bool]) -> f64 {
    let mut g = f.clone();
    for ((_, _, k), v) in g.indexed_iter_mut() {
        if !rows[k] {
            *v = 0.0;
        }
    }
    grid.l2(&g)
}

impl Monitor {
    /// `dt` is the spacing between consecutive samples.
    pub fn new(st: &Stepper, dt: f64) -> Self {
        Monitor { window: VecDeque::new(), seen: 0, dt, records: Vec::new(), rows: active_rows(&st.mask) }
    }

    pub fn push(&mut self, st: &Stepper, s: &KappaState, drift: f64) -> Result<()> {
        let grid = &st.grid;
        let g = st.cfg.gravity;
        let (d, parts) = time_derivatives(st, s)?;
        let geo = &parts.geometry;
        let e0 = conserved_energy(grid, s, &st.eos, g)?;
        let instant = kappa_instant(grid, s, &d, &geo.a_tilde, st.cfg.kappa, g);
        // wave residual pieces: J~ e' h_tt - d_nu(J~ a~^{nu alpha} grad_alpha h) + J~ div_{a~_t} v + J~ e'' h_t^2,
        // with the flux divergence in the Piola form J~ div_{a~}(grad_{a~} h) so that it uses the
        // same discrete operators (and sponge) as the right-hand side: -grad_{a~} h is d_t v
        let jt = &geo.j_tilde;
        let flux_div = -(jt * &div_a(grid, &d.dv, &geo.a_tilde));
        let src = div_a(grid, &s.v, &d.da) + &(&parts.d2e * &(&d.dh * &d.dh));
        let rest = &(jt * &src) - &flux_div;
        let coef = jt * &parts.de;
        let trace = grid.trace_top(&s.h_pert);
        let rec = DiagnosticsRecord {
            t: s.t,
            e0,
            ekap: KappaEnergy { instant, historic: KappaHistoric::default() },
            taylor_min: taylor_min(grid, &s.h_pert, g),
            jac_dev: jac_dev(grid, jt),
            cof_dev: cof_dev(grid, &geo.a_tilde),
            h_bdry_drift: grid.norm_boundary(&trace, 0.0).max(drift),
            wave_res: 0.0,
            wave_energy_reduced: 0.0,
            partial: true,
        };
        self.window.push_back(Pending {
            rec,
            dh4: grid.norm_interior(&d.dh, 4).powi(2),
            d2h3: grid.norm_interior(&d.d2h, 3).powi(2),
            d2v: d.d2v,
            d2h: d.d2h,
            dh: d.dh,
            coef,
            rest,
        });
        self.seen += 1;
        if self.window.len() == 4 {
            if self.seen == 4 {
                for p in 0..3 {
                    self.finish_at(grid, p);
                }
            }
            self.finish_at(grid, 3);
            self.window.pop_front();
        }
        Ok(())
    }

    /// Completes the record at window position `p` using all samples in the window.
    fn finish_at(&mut self, grid: &SlabGrid, p: usize) {
        let n = self.window.len();
        let nodes: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x0 = p as f64;
        let w1 = fd_weights(x0, &nodes, 1);
        let w2 = fd_weights(x0, &nodes, 2);
        let dt = self.dt;
        let d2v: Vec<[&ScalarField; 3]> = self.window.iter().map(|q| [&q.d2v[0], &q.d2v[1], &q.d2v[2]]).collect();
        let d2h: Vec<&ScalarField> = self.window.iter().map(|q| &q.d2h).collect();
        let mut hist = KappaHistoric::default();
        let (mut d3h_sq1, mut d4h_sq0, mut d3h_sq2, mut d4h_sq1) = (0.0, 0.0, 0.0, 0.0);
        if n >= 4 {
            for c in 0..3 {
                let col: Vec<&ScalarField> = d2v.iter().map(|x| x[c]).collect();
                let d3 = combine(&col, &w1, 1.0 / dt);
                let d4 = combine(&col, &w2, 1.0 / (dt * dt));
                hist.d3v1 += grid.norm_interior_sq(&d3, 1);
                hist.d4v0 += grid.norm_interior_sq(&d4, 0);
            }
            let d3 = combine(&d2h, &w1, 1.0 / dt);
            let d4 = combine(&d2h, &w2, 1.0 / (dt * dt));
            d3h_sq1 = grid.norm_interior_sq(&d3, 1);
            d4h_sq0 = grid.norm_interior_sq(&d4, 0);
            d3h_sq2 = grid.norm_interior_sq(&d3, 2);
            d4h_sq1 = grid.norm_interior_sq(&d4, 1);
        }
        hist.d3h1 = d3h_sq1;
        hist.d4h0 = d4h_sq0;
        // three-point stencil on the exact d_t h samples for the wave residual
        let (lo, pos) = if p >= 2 { (p - 2, 2.0) } else { (0, p as f64) };
        let wave_res = if n >= 3 {
            let w = fd_weights(pos, &[0.0, 1.0, 2.0], 1);
            let dh: Vec<&ScalarField> = (lo..lo + 3).map(|i| &self.window[i].dh).collect();
            let htt = combine(&dh, &w, 1.0 / dt);
            let q = &self.window[p];
            let r = &(&q.coef * &htt) + &q.rest;
            l2_rows(grid, &r, &self.rows)
        } else {
            0.0
        };
        let q = &self.window[p];
        let mut rec = q.rec.clone();
        rec.ekap.historic = hist;
        rec.wave_res = wave_res;
        rec.wave_energy_reduced = q.dh4 + q.d2h3 + d3h_sq2 + d4h_sq1;
        rec.partial = n < 4;
        self.records.push(rec);
    }

    /// Flushes samples that never gathered a full stencil (short runs), flagged partial.
    pub fn finish(&mut self, grid: &SlabGrid) {
        if self.seen < 4 {
            for p in 0..self.window.len() {
                self.finish_at(grid, p);
            }
        }
        self.window.clear();
    }
}

/// Flat-operator norms of the div-curl estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HodgeReport {
    pub norm_s: f64,
    pub norm_0: f64,
    pub curl: f64,
    pub div: f64,
    pub normal_trace: f64,
    pub ratio: f64,
}

pub fn hodge_report(grid: &SlabGrid, x: &VectorField, s: usize) -> HodgeReport {
    assert!((1..=4).contains(&s));
    let norm_s = grid.norm_interior_vec(x, s);
    let norm_0 = grid.norm_interior_vec(x, 0);
    let curl = grid.norm_interior_vec(&flat_curl(grid, x), s - 1);
    let div = grid.norm_interior(&flat_div(grid, x), s - 1);
    let normal_trace = grid.norm_boundary(&grid.trace_top(&x[2]), s as f64 - 0.5);
    let rhs = norm_0 + curl + div + normal_trace;
    let ratio = if rhs == 0.0 { 0.0 } else { norm_s / rhs };
    HodgeReport { norm_s, norm_0, curl, div, normal_trace, ratio }
}

/// One sample of a nonlinear run, with what the gap energy needs.
#[derive(Clone, Debug)]
pub struct TrajectorySample {
    pub t: f64,
    pub u: VectorField,
    pub v: VectorField,
    pub h_pert: ScalarField,
    pub dv: VectorField,
    pub dh: ScalarField,
    pub d2v: VectorField,
    pub d2h: ScalarField,
    /// Unsmoothed cofactor matrix.
    pub a: MatrixField,
}

impl TrajectorySample {
    pub fn capture(st: &Stepper, s: &KappaState) -> Result<Self> {
        let (d, parts) = time_derivatives(st, s)?;
        Ok(TrajectorySample {
            t: s.t,
            u: s.eta.u.clone(),
            v: s.v.clone(),
            h_pert: s.h_pert.clone(),
            dv: d.dv,
            dh: d.dh,
            d2v: d.d2v,
            d2h: d.d2h,
            a: parts.geometry.a,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GapEnergy {
    pub eta2: f64,
    pub v: f64,
    pub h: f64,
    pub bdry: f64,
}

impl GapEnergy {
    pub fn total(&self) -> f64 {
        self.eta2 + self.v + self.h + self.bdry
    }
}

/// `||[eta]||_2^2 + sum_k ||d_t^{2-k}[v]||_k^2 + ||d_t^{2-k}[h]||_k^2 + |(a^A)^{3 alpha} dbar^2 [eta]_alpha|_0^2`.
pub fn stability_energy(grid: &SlabGrid, a: &TrajectorySample, b: &TrajectorySample) -> Result<GapEnergy> {
    if a.u[0].dim() != grid.shape() || b.u[0].dim() != grid.shape() || (a.t - b.t).abs() > 1e-12 * (1.0 + a.t.abs()) {
        return Err(Error::GridMismatch);
    }
    let du = crate::grid::vec_sub(&a.u, &b.u);
    let eta2 = grid.norm_interior_vec(&du, 2).powi(2);
    let mut v = grid.norm_interior_vec(&crate::grid::vec_sub(&a.v, &b.v), 2).powi(2);
    v += grid.norm_interior_vec(&crate::grid::vec_sub(&a.dv, &b.dv), 1).powi(2);
    v += grid.norm_interior_vec(&crate::grid::vec_sub(&a.d2v, &b.d2v), 0).powi(2);
    let mut h = grid.norm_interior(&(&a.h_pert - &b.h_pert), 2).powi(2);
    h += grid.norm_interior(&(&a.dh - &b.dh), 1).powi(2);
    h += grid.norm_interior(&(&a.d2h - &b.d2h), 0).powi(2);
    let tr: Vec<_> = du.iter().map(|c| grid.trace_top(c)).collect();
    let at: Vec<_> = (0..3).map(|al| grid.trace_top(&a.a[2][al])).collect();
    let mut bdry = 0.0;
    for (p, w) in [(2usize, 1.0), (1, 2.0), (0, 1.0)] {
        let sym = grid.dbar_power_symbol(p, 2 - p);
        let mut acc = grid.zeros_boundary();
        for al in 0..3 {
            acc = acc + &(&at[al] * &grid.multiply_boundary(&tr[al], &sym));
        }
        bdry += w * grid.norm_boundary(&acc, 0.0).powi(2);
    }
    Ok(GapEnergy { eta2, v, h, bdry })
}
