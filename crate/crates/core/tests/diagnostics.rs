use std::f64::consts::{PI, TAU};

use lgww_core::diagnostics::*;
use lgww_core::dynamics::{KappaState, RunConfig, Stepper};
use lgww_core::eos::EoS;
use lgww_core::geometry::{FlowMap, GeometryBundle};
use lgww_core::initdata::{make_data, DataSpec};
use lgww_core::verify::{random_displacement, random_field};
use lgww_core::{Error, SlabGrid, VectorField};
use proptest::prelude::*;

fn grid(n: usize) -> SlabGrid {
    SlabGrid::new(n, n, n, TAU, TAU, 2.0).unwrap()
}

fn data_state(g: &SlabGrid, delta: f64, seed: u64) -> KappaState {
    let d = make_data(g, &DataSpec { delta, seed, ..DataSpec::default() }).unwrap();
    KappaState::from_data(g, &d.v0, &d.h0, 1.0)
}

fn max_wave_res(g: &SlabGrid, dt: f64, t_end: f64) -> f64 {
    let st = Stepper::new(g.clone(), RunConfig { kappa: 0.1, ..RunConfig::default() });
    let s0 = data_state(g, 2e-2, 3);
    let mut mon = Monitor::new(&st, dt);
    mon.push(&st, &s0, 0.0).unwrap();
    st.integrate(&s0, dt, t_end, |s, c| mon.push(&st, s, c)).unwrap();
    mon.finish(g);
    mon.records.iter().map(|r| r.wave_res).fold(0.0, f64::max)
}

#[test]
fn hydrostatic_energy_closed_form() {
    // isothermal, g = 1, D = 2: rho = exp(-y3); the internal part integrates to 4 and
    // the stratification part to 1 - e^2 per unit horizontal area
    let g = SlabGrid::new(8, 8, 65, TAU, TAU, 2.0).unwrap();
    let e = conserved_energy(&g, &KappaState::equilibrium(&g), &EoS::new(1.0), 1.0).unwrap();
    let area = TAU * TAU;
    assert_eq!(e.kin, 0.0);
    assert_eq!(e.surf, 0.0);
    assert!((e.int / area - 4.0).abs() < 1e-6, "{}", e.int / area);
    assert!((e.strat / area - (1.0 - 1f64.exp().powi(2))).abs() < 1e-6, "{}", e.strat / area);
    assert_eq!(e.max_component(), e.strat.abs().max(e.int.abs()));
}

#[test]
fn kinetic_energy_of_uniform_flow() {
    let g = SlabGrid::new(8, 8, 65, TAU, TAU, 2.0).unwrap();
    let mut s = KappaState::equilibrium(&g);
    s.v[0].fill(0.3);
    let e = conserved_energy(&g, &s, &EoS::new(1.0), 1.0).unwrap();
    // total mass per unit area is int_0^2 e^s ds = e^2 - 1
    let want = 0.5 * 0.09 * TAU * TAU * (1f64.exp().powi(2) - 1.0);
    assert!((e.kin - want).abs() < 1e-6 * want);
}

#[test]
fn surface_term_uses_the_horizontal_area_factor() {
    let g = grid(16);
    let (a, b, c) = (0.1, 0.2, 0.3);
    let mut s = KappaState::equilibrium(&g);
    s.eta.u[2] = g.field(|y1, _, _| a * y1.cos());
    s.eta.u[0] = g.field(|_, y2, _| b * y2.sin());
    s.eta.u[1] = g.field(|y1, _, _| c * y1.sin());
    let jg = surface_area_factor(&g, &s.eta.u);
    let want_jg = g.boundary(|y1, y2| 1.0 - b * c * y1.cos() * y2.cos());
    assert!(SlabGrid::norm_linf_boundary(&(&jg - &want_jg)) < 1e-13);
    let e = conserved_energy(&g, &s, &EoS::new(1.0), 1.0).unwrap();
    // a^2 int cos^2 y1 (1 - bc cos y1 cos y2) = 2 pi^2 a^2
    let want = 0.5 * 2.0 * PI * PI * a * a;
    assert!((e.surf - want).abs() < 1e-12, "{} vs {want}", e.surf);
}

#[test]
fn taylor_and_smallness_monitors_at_rest() {
    let g = grid(12);
    let z = g.zeros();
    assert!((taylor_min(&g, &z, 1.5) - 1.5).abs() < 1e-14);
    assert_eq!(jac_dev(&g, &(z.clone() + 1.0)), 0.0);
    assert_eq!(cof_dev(&g, &lgww_core::grid::mat_identity(&g)), 0.0);
}

#[test]
fn cofactor_rate_matches_directional_derivative() {
    let g = grid(16);
    let kappa = 0.1;
    let env = g.field(|_, _, y3| (PI * y3 / 4.0).cos().powi(2));
    let u: VectorField = random_displacement(&g, 2, 2, 0.02).map(|c| &c * &env);
    let du: VectorField = random_displacement(&g, 3, 2, 0.05).map(|c| &c * &env);
    let at = |eps: f64| {
        let w: VectorField = std::array::from_fn(|c| &u[c] + &(&du[c] * eps));
        GeometryBundle::build(&g, &FlowMap { u: w, t: 0.0 }, kappa).unwrap().a_tilde
    };
    let rate = cofactor_rate(&g, &at(0.0), &du, kappa);
    let errs: Vec<f64> = [1e-2, 5e-3]
        .iter()
        .map(|&eps| {
            let (p, m) = (at(eps), at(-eps));
            let mut worst = 0.0_f64;
            for r in 0..3 {
                for c in 0..3 {
                    let fd = (&p[r][c] - &m[r][c]) / (2.0 * eps);
                    worst = worst.max(SlabGrid::norm_linf(&(&fd - &rate[r][c])));
                }
            }
            worst
        })
        .collect();
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 1.9 && errs[1] < 1e-6, "{errs:?}");
}

#[test]
fn fd_weight_examples() {
    let w = fd_weights(1.0, &[0.0, 1.0, 2.0], 1);
    assert!((w[0] + 0.5).abs() < 1e-15 && w[1].abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
    let w = fd_weights(1.0, &[0.0, 1.0, 2.0], 2);
    assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] + 2.0).abs() < 1e-15 && (w[2] - 1.0).abs() < 1e-15);
    let w = fd_weights(0.0, &[0.0, 1.0, 2.0], 1);
    assert!((w[0] + 1.5).abs() < 1e-15 && (w[1] - 2.0).abs() < 1e-15 && (w[2] + 0.5).abs() < 1e-15);
}

#[test]
fn wave_residual_vanishes_at_rest() {
    let g = grid(12);
    let st = Stepper::new(g.clone(), RunConfig::default());
    let s = KappaState::equilibrium(&g);
    let mut mon = Monitor::new(&st, 0.1);
    for _ in 0..6 {
        mon.push(&st, &s, 0.0).unwrap();
    }
    mon.finish(&g);
    assert_eq!(mon.records.len(), 6);
    for r in &mon.records {
        assert!(r.wave_res < 1e-12, "{}", r.wave_res);
        // only the hydrostatic enthalpy block survives at rest
        let i = r.ekap.instant;
        assert_eq!([i.eta_h, i.v4, i.dv3, i.d2v2, i.dh3, i.d2h2, i.bdry], [0.0; 7]);
        assert!(i.h_h > 0.0);
        assert_eq!(r.ekap.total(), i.h_h);
        assert!(!r.partial);
    }
}

#[test]
fn wave_residual_converges_in_time() {
    let g = grid(12);
    let dt = 0.02;
    let errs: Vec<f64> = [dt, dt / 2.0].iter().map(|&h| max_wave_res(&g, h, 0.16)).collect();
    let order = (errs[0] / errs[1]).log2();
    assert!(order >= 1.8, "{errs:?}");
}

#[test]
fn wave_residual_flags_non_solutions() {
    let g = grid(12);
    let st = Stepper::new(g.clone(), RunConfig { kappa: 0.1, ..RunConfig::default() });
    let mut mon = Monitor::new(&st, 0.01);
    for seed in 0..5 {
        mon.push(&st, &data_state(&g, 2e-2, seed), 0.0).unwrap();
    }
    mon.finish(&g);
    let bad = mon.records.iter().map(|r| r.wave_res).fold(0.0, f64::max);
    let good = max_wave_res(&g, 0.01, 0.05);
    assert!(bad > 0.1 && bad > 100.0 * good, "{bad:e} vs {good:e}");
}

#[test]
fn short_runs_are_flagged_partial() {
    let g = grid(12);
    let st = Stepper::new(g.clone(), RunConfig::default());
    let mut mon = Monitor::new(&st, 0.1);
    mon.push(&st, &data_state(&g, 1e-2, 1), 0.0).unwrap();
    mon.push(&st, &data_state(&g, 1e-2, 1), 0.0).unwrap();
    mon.finish(&g);
    assert_eq!(mon.records.len(), 2);
    assert!(mon.records.iter().all(|r| r.partial));
}

#[test]
fn record_layout() {
    let r = DiagnosticsRecord { t: 1.5, ..DiagnosticsRecord::default() };
    let v = r.values();
    assert_eq!(v.len(), CSV_HEADER.split(',').count());
    assert_eq!(v[0], 1.5);
    assert_eq!(v[1], r.e0.total());
    assert_eq!(v[6], r.ekap.total());
}

#[test]
fn hodge_examples() {
    let g = grid(12);
    let zero = hodge_report(&g, &g.zeros_vec(), 2);
    assert_eq!(zero.ratio, 0.0);
    // a constant vertical field: no curl or divergence, only the mass and the trace
    let mut x = g.zeros_vec();
    x[2].fill(1.0);
    let r = hodge_report(&g, &x, 2);
    assert!(r.curl < 1e-12 && r.div < 1e-12);
    assert!((r.norm_s - r.norm_0).abs() < 1e-12);
    assert!(r.ratio > 0.0 && r.ratio < 1.0);
}

#[test]
fn gap_energy_between_identical_runs_is_zero() {
    let g = grid(12);
    let st = Stepper::new(g.clone(), RunConfig::default());
    let s = data_state(&g, 1e-2, 4);
    let a = TrajectorySample::capture(&st, &s).unwrap();
    let b = TrajectorySample::capture(&st, &s).unwrap();
    assert_eq!(stability_energy(&g, &a, &b).unwrap().total(), 0.0);
    let mut late = b.clone();
    late.t += 0.1;
    assert!(matches!(stability_energy(&g, &a, &late), Err(Error::GridMismatch)));
    let c = TrajectorySample::capture(&st, &data_state(&g, 1e-2, 5)).unwrap();
    let e = stability_energy(&g, &a, &c).unwrap();
    assert!(e.v > 0.0 && e.h > 0.0 && e.eta2 == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fd_weights_differentiate_polynomials(x0 in -1.0f64..3.0, m in 1usize..=2, p in 0usize..=3) {
        let nodes = [0.0, 0.7, 1.5, 2.1, 3.0];
        let w = fd_weights(x0, &nodes, m);
        let f = |x: f64| x.powi(p as i32);
        let exact = match (p, m) {
            (p, _) if p < m => 0.0,
            (p, 1) => p as f64 * x0.powi(p as i32 - 1),
            (p, _) => (p * (p - 1)) as f64 * x0.powi(p as i32 - 2),
        };
        let got: f64 = nodes.iter().zip(&w).map(|(x, c)| c * f(*x)).sum();
        prop_assert!((got - exact).abs() < 1e-10);
    }

    #[test]
    fn hodge_ratio_bounded_on_smooth_fields(seed in 0u64..500, s in 1usize..=3) {
        let g = grid(12);
        let x: VectorField = std::array::from_fn(|c| random_field(&g, seed * 3 + c as u64, 3, 1.0));
        let r = hodge_report(&g, &x, s);
        prop_assert!(r.ratio.is_finite() && r.ratio > 0.0 && r.ratio < 10.0, "{:?}", r);
    }
}

#[test]
fn kappa_energy_recomposes_from_norms() {
    let g = grid(12);
    let st = Stepper::new(g.clone(), RunConfig { kappa: 0.1, ..RunConfig::default() });
    let s = data_state(&g, 2e-2, 6);
    let (d, parts) = time_derivatives(&st, &s).unwrap();
    let e = kappa_instant(&g, &s, &d, &parts.geometry.a_tilde, 0.1, 1.0);
    let sq = |x: f64| x * x;
    let h = s.h_full(&g, 1.0);
    let want = sq(g.norm_script_h_vec(&s.eta.u))
        + sq(g.norm_interior_vec(&s.v, 4))
        + sq(g.norm_interior_vec(&d.dv, 3))
        + sq(g.norm_interior_vec(&d.d2v, 2))
        + sq(g.norm_script_h(&h))
        + sq(g.norm_interior(&d.dh, 3))
        + sq(g.norm_interior(&d.d2h, 2))
        + kappa_boundary_term(&g, &s.eta.u, &parts.geometry.a_tilde, 0.1);
    let got = KappaEnergy { instant: e, historic: KappaHistoric::default() }.total();
    assert!((got - want).abs() <= 1e-14 * want);
    // identity map and zero velocity leave only the enthalpy blocks
    assert_eq!(e.eta_h, 0.0);
    assert_eq!(e.bdry, 0.0);
}
