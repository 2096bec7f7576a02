//! Alinhac good unknowns and measured constants of the functional inequalities.
//!
//! With `D = d1^2 Lap_bar` and `L = d1 Lap_bar` (so `D = d1 L`), the good unknown is
//! `G = D g - D eta~_gamma a~^{mu gamma} d_mu g` and
//! `D(grad_{a~}^alpha g) = grad_{a~}^alpha G + C^alpha(g)`, where `C` is
//!
//! * `T1 = D eta~_gamma grad^alpha(grad^gamma g)`
//! * `T2 = -([L, a~^{mu gamma} a~^{beta alpha}] d1 d_beta eta~_gamma) d_mu g`
//! * `T3 = [D, a~^{mu alpha}, d_mu g]`
//! * `E1 = (L Q^{mu alpha}) d_mu g` with `Q = d1 a~ + a~ (d1 d eta~) a~`
//! * `E2 = a~^{beta alpha} [d_beta, D eta~_gamma, grad^gamma g]`
//!
//! `E1` and `E2` vanish for exact calculus; on the grid they absorb the failure of
//! the product rule and of the derivative formula for `a~`, which makes the
//! decomposition exact to rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::GeometryBundle;
use crate::grid::{BoundaryField, MatrixField, ScalarField, SlabGrid, Symbol, VectorField};
use crate::harmonic::{
    bernstein_ratio, harmonic_extend, mollify_boundary, mollifier_defect_linf, CutoffSpec, MollifierSpec,
};
use crate::{Error, Result};

fn sym_d(grid: &SlabGrid) -> Symbol {
    // d1 L as a product, so it also vanishes where d1 does (the Nyquist line)
    let l = sym_l(grid);
    let d1 = grid.dbar_symbol(1);
    Symbol { data: l.data.iter().zip(&d1.data).map(|(x, y)| x * y).collect() }
}

fn sym_l(grid: &SlabGrid) -> Symbol {
    // d1 Lap_bar
    let a = grid.dbar_power_symbol(3, 0);
    let b = grid.dbar_power_symbol(1, 2);
    Symbol { data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect() }
}

/// Pointwise `a^{mu alpha} d_mu f` without dealiasing.
fn cov(a: &MatrixField, df: &VectorField, alpha: usize) -> ScalarField {
    &(&(&a[0][alpha] * &df[0]) + &(&a[1][alpha] * &df[1])) + &(&a[2][alpha] * &df[2])
}

#[derive(Clone, Debug)]
pub struct GoodUnknownBundle {
    pub good: ScalarField,
    pub lhs: VectorField,
    /// `grad_{a~} G`.
    pub grad_good: VectorField,
    /// The three terms of the continuum expansion.
    pub c_main: VectorField,
    /// The two terms that vanish for exact calculus.
    pub c_defect: VectorField,
    pub residual: VectorField,
}

impl GoodUnknownBundle {
    pub fn c_total(&self) -> VectorField {
        std::array::from_fn(|a| &self.c_main[a] + &self.c_defect[a])
    }

    pub fn relative_residual(&self, grid: &SlabGrid) -> f64 {
        let r = grid.norm_interior_vec(&self.residual, 0);
        let s = grid.norm_interior_vec(&self.lhs, 0);
        if s == 0.0 {
            r
        } else {
            r / s
        }
    }
}

pub fn good_unknown(grid: &SlabGrid, g: &ScalarField, geo: &GeometryBundle) -> GoodUnknownBundle {
    let a = &geo.a_tilde;
    let ut = &geo.u_tilde;
    let sd = sym_d(grid);
    let sl = sym_l(grid);
    let dop = |f: &ScalarField| grid.multiply(f, &sd);
    let lop = |f: &ScalarField| grid.multiply(f, &sl);
    let dg = grid.grad(g);
    let w: VectorField = std::array::from_fn(|al| cov(a, &dg, al));
    let d_eta: VectorField = std::array::from_fn(|c| dop(&ut[c]));
    // G
    let mut good = dop(g);
    for gam in 0..3 {
        good -= &(&d_eta[gam] * &w[gam]);
    }
    let lhs: VectorField = std::array::from_fn(|al| dop(&w[al]));
    let grad_good: VectorField = std::array::from_fn(|al| cov(a, &grid.grad(&good), al));
    // d1 d_beta eta~_gamma, indexed [gamma][beta]
    let d1d: Vec<VectorField> = ut.iter().map(|c| grid.grad(&grid.dbar(c, 1))).collect();
    let dw: Vec<VectorField> = w.iter().map(|c| grid.grad(c)).collect();
    let d_deta: Vec<VectorField> = d_eta.iter().map(|c| grid.grad(c)).collect();
    let c_main: VectorField = std::array::from_fn(|al| {
        let mut t = grid.zeros();
        for gam in 0..3 {
            t += &(&d_eta[gam] * &cov(a, &dw[gam], al));
        }
        for mu in 0..3 {
            let mut inner = grid.zeros();
            for gam in 0..3 {
                for beta in 0..3 {
                    let coef = &a[mu][gam] * &a[beta][al];
                    let x = &d1d[gam][beta];
                    let comm = lop(&(&coef * x)) - &(&coef * &lop(x));
                    inner += &comm;
                }
            }
            t -= &(&inner * &dg[mu]);
            let prod = &a[mu][al] * &dg[mu];
            let tri = dop(&prod) - &(&dop(&a[mu][al]) * &dg[mu]) - &(&a[mu][al] * &dop(&dg[mu]));
            t += &tri;
        }
        t
    });
    let c_defect: VectorField = std::array::from_fn(|al| {
        let mut t = grid.zeros();
        for mu in 0..3 {
            // Q^{mu al} = d1 a~^{mu al} + a~^{mu gam} d1 d_beta eta~_gam a~^{beta al}
            let mut q = grid.dbar(&a[mu][al], 1);
            for gam in 0..3 {
                for beta in 0..3 {
                    q += &(&(&a[mu][gam] * &d1d[gam][beta]) * &a[beta][al]);
                }
            }
            t += &(&lop(&q) * &dg[mu]);
        }
        for beta in 0..3 {
            let mut leib = grid.zeros();
            for gam in 0..3 {
                let prod = &d_eta[gam] * &w[gam];
                leib += &(grid.partial(&prod, beta)
                    - &(&d_deta[gam][beta] * &w[gam])
                    - &(&d_eta[gam] * &dw[gam][beta]));
            }
            t += &(&a[beta][al] * &leib);
        }
        t
    });
    let residual: VectorField =
        std::array::from_fn(|al| &(&(&lhs[al] - &grad_good[al]) - &c_main[al]) - &c_defect[al]);
    GoodUnknownBundle { good, lhs, grad_good, c_main, c_defect, residual }
}

/// `|G|_Gamma + D eta~_beta a~^{3 beta} d3 h|_0` for `h` vanishing on `Gamma`.
pub fn boundary_good_unknown_check(grid: &SlabGrid, h: &ScalarField, geo: &GeometryBundle) -> Result<f64> {
    let tr = grid.norm_boundary(&grid.trace_top(h), 0.0);
    if tr >= 1e-12 {
        return Err(Error::PreconditionViolated(format!("trace of h is {tr:.3e}, expected 0")));
    }
    let b = good_unknown(grid, h, geo);
    let sd = sym_d(grid);
    let d3 = grid.dnormal(h);
    let mut rhs = grid.zeros();
    for beta in 0..3 {
        rhs += &(&(&grid.multiply(&geo.u_tilde[beta], &sd) * &geo.a_tilde[2][beta]) * &d3);
    }
    let r = grid.trace_top(&b.good) + &grid.trace_top(&rhs);
    Ok(grid.norm_boundary(&r, 0.0))
}

// ---------------------------------------------------------------- corpus

/// Seeded band-limited Gaussian field: tangential modes `|m| <= kmax` with amplitude
/// `(1 + |m|)^{-slope}`, depth structure from a few cosines, scaled to unit max.
pub fn random_field(grid: &SlabGrid, seed: u64, kmax: i32, slope: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k1, k2) = (std::f64::consts::TAU / grid.lx, std::f64::consts::TAU / grid.ly);
    let mut terms = Vec::new();
    for m1 in -kmax..=kmax {
        for m2 in -kmax..=kmax {
            let r = ((m1 * m1 + m2 * m2) as f64).sqrt();
            if r > kmax as f64 {
                continue;
            }
            let amp = (1.0 + r).powf(-slope);
            let depth: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * amp);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            terms.push((m1 as f64 * k1, m2 as f64 * k2, phase, depth));
        }
    }
    let d = grid.depth;
    let f = grid.field(|y1, y2, y3| {
        terms
            .iter()
            .map(|&(a, b, ph, c)| {
                let prof = c[0] + c[1] * (std::f64::consts::PI * y3 / d).cos() + c[2] * (2.0 * std::f64::consts::PI * y3 / d).cos();
                prof * (a * y1 + b * y2 + ph).cos()
            })
            .sum()
    });
    let m = SlabGrid::norm_linf(&f);
    if m > 0.0 {
        f / m
    } else {
        f
    }
}

/// Random displacement of size `amp` (max norm) built from `random_field`.
pub fn random_displacement(grid: &SlabGrid, seed: u64, kmax: i32, amp: f64) -> VectorField {
    std::array::from_fn(|c| random_field(grid, seed.wrapping_mul(31).wrapping_add(c as u64 + 1), kmax, 2.0) * amp)
}

pub fn random_boundary(grid: &SlabGrid, seed: u64, kmax: i32, slope: f64) -> BoundaryField {
    grid.trace_top(&random_field(grid, seed, kmax, slope))
}

// ---------------------------------------------------------------- inequalities

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inequality {
    KatoPonce,
    TraceHarmonic,
    NormalTrace,
    EllipticInterior,
    Bernstein,
    MollifierFamily,
}

impl Inequality {
    pub const ALL: [Inequality; 6] = [
        Inequality::KatoPonce,
        Inequality::TraceHarmonic,
        Inequality::NormalTrace,
        Inequality::EllipticInterior,
        Inequality::Bernstein,
        Inequality::MollifierFamily,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Inequality::KatoPonce => "kato_ponce",
            Inequality::TraceHarmonic => "trace_harmonic",
            Inequality::NormalTrace => "normal_trace",
            Inequality::EllipticInterior => "elliptic_interior",
            Inequality::Bernstein => "bernstein",
            Inequality::MollifierFamily => "mollifier_family",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|i| i.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityRow {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl InequalityRow {
    pub fn new(seed: u64, lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs == 0.0 { 0.0 } else { lhs / rhs };
        InequalityRow { seed, lhs, rhs, ratio }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub name: &'static str,
    pub rows: Vec<InequalityRow>,
}

impl InequalityReport {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().fold(0.0_f64, |m, r| m.max(r.ratio))
    }

    pub fn median_ratio(&self) -> f64 {
        let mut r: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        r.sort_by(f64::total_cmp);
        if r.is_empty() {
            0.0
        } else {
            r[r.len() / 2]
        }
    }
}

/// `max_{|alpha| <= s} ||d^alpha f||_{L^infty}` for `s <= 2`.
pub fn w_inf_norm(grid: &SlabGrid, f: &ScalarField, s: usize) -> f64 {
    let mut m = SlabGrid::norm_linf(f);
    if s >= 1 {
        for d in grid.grad(f).iter() {
            m = m.max(SlabGrid::norm_linf(d));
        }
    }
    if s >= 2 {
        for row in grid.hessian(f).iter() {
            for d in row.iter() {
                m = m.max(SlabGrid::norm_linf(d));
            }
        }
    }
    m
}

/// Product estimate at `s = 2`: `||fg||_2` against `||f||_{W^{2,inf}} ||g||_0 + ||f||_inf ||g||_2`.
pub fn kato_ponce_row(grid: &SlabGrid, f: &ScalarField, g: &ScalarField, seed: u64) -> InequalityRow {
    let lhs = grid.norm_interior(&(f * g), 2);
    let rhs = w_inf_norm(grid, f, 2) * grid.norm_interior(g, 0) + SlabGrid::norm_linf(f) * grid.norm_interior(g, 2);
    InequalityRow::new(seed, lhs, rhs)
}

/// `||u||_2` against `|g|_{1.5}` for the harmonic extension `u` of `g`.
pub fn trace_harmonic_row(grid: &SlabGrid, g: &BoundaryField, seed: u64) -> Result<InequalityRow> {
    let u = harmonic_extend(grid, g)?;
    Ok(InequalityRow::new(seed, grid.norm_interior(&u, 2), grid.norm_boundary(g, 1.5)))
}

/// `|dbar X . N|_{-0.5}` against `||dbar X||_0 + ||div X||_0` on the top boundary.
pub fn normal_trace_row(grid: &SlabGrid, x: &VectorField, seed: u64) -> InequalityRow {
    let tr = grid.trace_top(&x[2]);
    let mut lhs2 = 0.0;
    let mut dbar_x = 0.0;
    for dir in 1..=2 {
        lhs2 += grid.norm_boundary(&grid.dbar_boundary(&tr, dir), -0.5).powi(2);
        for c in x.iter() {
            dbar_x += grid.norm_interior_sq(&grid.dbar(c, dir), 0);
        }
    }
    let div = grid.norm_interior(&crate::geometry::flat_div(grid, x), 0);
    InequalityRow::new(seed, lhs2.sqrt(), dbar_x.sqrt() + div)
}

/// `||grad_{a~} f||_{Hdot^1}` against `(||Lap_{a~} f||_0^2 + ||d f||_0^2)^{1/2}` for `f = 0` on `Gamma`.
pub fn elliptic_row(grid: &SlabGrid, f: &ScalarField, a: &MatrixField, seed: u64) -> InequalityRow {
    let gf = crate::geometry::grad_a(grid, f, a);
    let mut lhs = 0.0;
    for c in gf.iter() {
        for d in grid.grad(c).iter() {
            lhs += grid.norm_interior_sq(d, 0);
        }
    }
    let lap = crate::geometry::laplace_a(grid, f, a);
    let df: f64 = grid.grad(f).iter().map(|d| grid.norm_interior_sq(d, 0)).sum();
    let rhs = (grid.norm_interior_sq(&lap, 0) + df).sqrt();
    InequalityRow::new(seed, lhs.sqrt(), rhs)
}

/// Smoothing estimates on boundary fields: `|dbar Lambda f|_0 kappa^s / |f|_{1-s}` for
/// `s in {0, 0.5, 1}`, the commutator `|[Lambda, f] g|_0 / (|f|_inf |g|_0)` and the
/// defect `|f - Lambda f|_inf / (sqrt(kappa) |dbar f|_{0.5})`.
pub fn mollifier_rows(grid: &SlabGrid, f: &BoundaryField, g: &BoundaryField, kappa: f64, seed: u64) -> Vec<InequalityRow> {
    let spec = MollifierSpec::gaussian(kappa);
    let lf = mollify_boundary(grid, f, &spec);
    let dlf = (grid.norm_boundary(&grid.dbar_boundary(&lf, 1), 0.0).powi(2)
        + grid.norm_boundary(&grid.dbar_boundary(&lf, 2), 0.0).powi(2))
    .sqrt();
    let mut rows = Vec::new();
    for s in [0.0, 0.5, 1.0] {
        rows.push(InequalityRow::new(seed, dlf, kappa.powf(-s) * grid.norm_boundary(f, 1.0 - s)));
    }
    let comm = mollify_boundary(grid, &(f * g), &spec) - &(f * &mollify_boundary(grid, g, &spec));
    rows.push(InequalityRow::new(
        seed,
        grid.norm_boundary(&comm, 0.0),
        SlabGrid::norm_linf_boundary(f) * grid.norm_boundary(g, 0.0),
    ));
    let dbar_half = (grid.norm_boundary(&grid.dbar_boundary(f, 1), 0.5).powi(2)
        + grid.norm_boundary(&grid.dbar_boundary(f, 2), 0.5).powi(2))
    .sqrt();
    rows.push(InequalityRow::new(seed, mollifier_defect_linf(grid, f, &spec), kappa.sqrt() * dbar_half));
    rows
}

/// Measured ratios of one inequality over a seeded corpus.
pub fn inequality_report(grid: &SlabGrid, which: Inequality, corpus: usize, seed0: u64) -> Result<InequalityReport> {
    let mut rows = Vec::new();
    let cut = CutoffSpec;
    for n in 0..corpus {
        let seed = seed0 + n as u64;
        match which {
            Inequality::KatoPonce => {
                let f = random_field(grid, seed, 4, 1.5);
                let g = random_field(grid, seed + 10_000, 4, 1.5);
                rows.push(kato_ponce_row(grid, &f, &g, seed));
            }
            Inequality::TraceHarmonic => {
                let g = random_boundary(grid, seed, 6, 2.0);
                let g = &g - g.mean().unwrap_or(0.0);
                rows.push(trace_harmonic_row(grid, &g, seed)?);
            }
            Inequality::NormalTrace => {
                let x: VectorField = std::array::from_fn(|c| random_field(grid, seed * 3 + c as u64, 4, 1.5));
                rows.push(normal_trace_row(grid, &x, seed));
            }
            Inequality::EllipticInterior => {
                let base = random_field(grid, seed, 4, 1.5);
                let f = pin_top(grid, &base);
                let u = random_displacement(grid, seed + 20_000, 2, 0.02);
                let geo = GeometryBundle::build(grid, &crate::geometry::FlowMap { u, t: 0.0 }, 0.1)?;
                rows.push(elliptic_row(grid, &f, &geo.a_tilde, seed));
            }
            Inequality::Bernstein => {
                let g = random_boundary(grid, seed, 8, 1.0);
                for nn in [2.0, 4.0, 8.0, 16.0] {
                    let r = bernstein_ratio(grid, &g, nn, 1.0, &cut);
                    rows.push(InequalityRow { seed, lhs: r, rhs: 1.0, ratio: r });
                }
            }
            Inequality::MollifierFamily => {
                let f = random_boundary(grid, seed, 8, 1.5);
                let g = random_boundary(grid, seed + 30_000, 8, 1.5);
                for kappa in [0.2, 0.1, 0.05] {
                    rows.extend(mollifier_rows(grid, &f, &g, kappa, seed));
                }
            }
        }
    }
    Ok(InequalityReport { name: which.name(), rows })
}

/// `y3 * f`, which vanishes on the top boundary.
pub fn pin_top(grid: &SlabGrid, f: &ScalarField) -> ScalarField {
    let z = grid.z().to_vec();
    ScalarField::from_shape_fn(grid.shape(), |(i, j, k)| z[k] * f[[i, j, k]])
}

// ---------------------------------------------------------------- scaling laws

/// Boundary field with `f_hat ~ |xi|^{-2.5}` on all modes with unit phase at the
/// origin: the borderline regularity for the mollifier defect law.
pub fn critical_boundary_data(grid: &SlabGrid) -> BoundaryField {
    let s = grid.radial_symbol(|r| if r == 0.0 { 0.0 } else { r.powf(-2.5) });
    let layer = (grid.nx * grid.ny) as f64;
    let spec = crate::grid::BoundarySpectrum { data: s.data.iter().map(|c| c * layer).collect() };
    grid.inverse_boundary(&spec)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Measured exponent of `|f - Lambda_kappa f|_inf` against `kappa`.
pub fn mollifier_exponent(grid: &SlabGrid, f: &BoundaryField, kappas: &[f64]) -> (f64, Vec<f64>) {
    let d: Vec<f64> = kappas
        .iter()
        .map(|&k| mollifier_defect_linf(grid, f, &MollifierSpec::gaussian(k)))
        .collect();
    (loglog_slope(kappas, &d), d)
}

/// Boundary data with `|f_hat| ~ |xi|^{-1}` and seeded random phases, for which the
/// Bernstein ratio at `s = 1` is scale invariant.
pub fn scale_invariant_data(grid: &SlabGrid, seed: u64) -> BoundaryField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = grid.radial_symbol(|r| if r == 0.0 { 0.0 } else { 1.0 / r });
    let layer = (grid.nx * grid.ny) as f64;
    let data = s
        .data
        .iter()
        .map(|c| {
            let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            c * num_complex::Complex64::from_polar(layer, ph)
        })
        .collect();
    // real part of the synthesised field keeps the modulus law on average
    grid.inverse_boundary(&crate::grid::BoundarySpectrum { data })
}

pub fn bernstein_sweep(grid: &SlabGrid, g: &BoundaryField, ns: &[f64], s: f64) -> Vec<f64> {
    ns.iter().map(|&n| bernstein_ratio(grid, g, n, s, &CutoffSpec)).collect()
}
