use std::f64::consts::{PI, TAU};

use lgww_core::dynamics::{full_to_pert, lift_profile, sponge_profile};
use lgww_core::initdata::{make_data, DataSpec};
use lgww_core::picard::*;
use lgww_core::{Error, SlabGrid, VectorField};
use proptest::prelude::*;

fn data(g: &SlabGrid, delta: f64, seed: u64) -> PicardData {
    let d = make_data(g, &DataSpec { delta, seed, ..DataSpec::default() }).unwrap();
    PicardData { v0: d.v0, h0: full_to_pert(g, &d.h0, 1.0), h1: d.h1 }
}

fn zero_data(g: &SlabGrid) -> PicardData {
    PicardData { v0: g.zeros_vec(), h0: g.zeros(), h1: g.zeros() }
}

fn traj_linf(t: &Trajectory) -> f64 {
    let mut m = 0.0_f64;
    for s in 0..t.len() {
        for c in 0..3 {
            m = m.max(SlabGrid::norm_linf(&t.u[s][c])).max(SlabGrid::norm_linf(&t.v[s][c]));
        }
        m = m.max(SlabGrid::norm_linf(&t.h[s]));
    }
    m
}

fn combine(a: &Trajectory, b: &Trajectory, c: f64) -> Trajectory {
    let vec = |x: &VectorField, y: &VectorField| -> VectorField { std::array::from_fn(|k| &x[k] + &(&y[k] * c)) };
    Trajectory {
        dt: a.dt,
        u: a.u.iter().zip(&b.u).map(|(x, y)| vec(x, y)).collect(),
        v: a.v.iter().zip(&b.v).map(|(x, y)| vec(x, y)).collect(),
        h: a.h.iter().zip(&b.h).map(|(x, y)| x + &(y * c)).collect(),
    }
}

#[test]
fn zero_data_gives_equilibrium_and_converges_at_once() {
    let g = SlabGrid::new(8, 8, 16, TAU, TAU, 2.0).unwrap();
    let cfg = PicardConfig::default();
    let r = picard_run(&g, &zero_data(&g), &cfg).unwrap();
    assert!(r.converged);
    assert_eq!(r.history.len(), 2);
    assert_eq!(r.history[1].sup_diff_energy, 0.0);
    assert_eq!(traj_linf(&r.iterate.traj), 0.0);
}

#[test]
fn solution_map_of_zero_input_is_zero() {
    let g = SlabGrid::new(8, 8, 16, TAU, TAU, 2.0).unwrap();
    let cfg = PicardConfig::default();
    let n = cfg.steps() + 1;
    let co = FrozenCoefficients::trivial(&g, cfg.dt, n, cfg.gamma);
    let input = Trajectory::constant(&g, cfg.dt, n, &g.zeros_vec(), &g.zeros());
    let out = solution_map(&g, &co, &input, &zero_data(&g), &cfg).unwrap();
    assert_eq!(out.len(), n);
    assert_eq!(traj_linf(&out), 0.0);
}

/// `h = cos(k y1) sin(pi y3 / 2D)` vanishes on top, has zero slope on the bottom and
/// oscillates with `omega^2 = (k^2 + (pi / 2D)^2) / sigma`.
fn standing_mode(sigma: f64) -> f64 {
    let g = SlabGrid::new(8, 8, 65, TAU, TAU, 2.0).unwrap();
    let dt = 0.01;
    let t_end = 1.0;
    let n = (t_end / dt) as usize + 1;
    let mut co = FrozenCoefficients::trivial(&g, dt, n, 1.0);
    co.sigma = vec![g.zeros() + sigma; n];
    let lam = PI / (2.0 * g.depth);
    let omega = ((1.0 + lam * lam) / sigma).sqrt();
    let h0 = g.field(|y1, _, y3| y1.cos() * (lam * y3).sin());
    let v = vec![g.zeros_vec(); n];
    let wave = WaveProblem {
        grid: &g,
        coeffs: &co,
        v: &v,
        h0: &h0,
        h1: &g.zeros(),
        mask: &vec![1.0; g.nz],
        gravity: 1.0,
        bottom: BottomCondition::Neumann,
        lift: &lift_profile(&g, 1.0),
        forcing: None,
    };
    let h = wave.solve().unwrap();
    (0..n)
        .map(|m| SlabGrid::norm_linf(&(&h[m] - &(&h0 * (omega * m as f64 * dt).cos()))))
        .fold(0.0, f64::max)
}

#[test]
fn wave_solve_follows_standing_modes() {
    // at sigma = 4 the mode runs at half the speed; both track the exact oscillation
    for sigma in [1.0, 4.0] {
        let err = standing_mode(sigma);
        assert!(err < 2e-3, "sigma {sigma}: {err:e}");
    }
}

#[test]
fn wave_solve_rejects_large_steps() {
    let g = SlabGrid::new(8, 8, 16, TAU, TAU, 2.0).unwrap();
    let co = FrozenCoefficients::trivial(&g, 0.5, 3, 1.0);
    let v = vec![g.zeros_vec(); 3];
    let wave = WaveProblem {
        grid: &g,
        coeffs: &co,
        v: &v,
        h0: &g.zeros(),
        h1: &g.zeros(),
        mask: &vec![1.0; g.nz],
        gravity: 1.0,
        bottom: BottomCondition::Dirichlet,
        lift: &lift_profile(&g, 1.0),
        forcing: None,
    };
    assert!(matches!(wave.solve(), Err(Error::CflViolation { .. })));
}

#[test]
fn initial_samples_match_data_on_every_iterate() {
    let g = SlabGrid::new(12, 12, 12, TAU, TAU, 2.0).unwrap();
    let d = data(&g, 1e-2, 4);
    let cfg = PicardConfig { max_iter: 3, tol: 0.0, ..PicardConfig::default() };
    let n = cfg.steps() + 1;
    let mut cur = Trajectory::constant(&g, cfg.dt, n, &d.v0, &d.h0);
    for it in 0..3 {
        let co = if it == 0 {
            FrozenCoefficients::trivial(&g, cfg.dt, n, cfg.gamma)
        } else {
            FrozenCoefficients::from_iterate(&g, &cur, &cfg).unwrap()
        };
        cur = solve_linear(&g, &co, &cur, &d, &cfg).unwrap().0;
        assert!(cur.v[0] == d.v0 && cur.h[0] == d.h0);
        assert!(cur.u[0].iter().all(|c| SlabGrid::norm_linf(c) == 0.0));
    }
}

#[test]
fn recovered_divergence_stays_constant() {
    let g = SlabGrid::new(12, 12, 33, TAU, TAU, 2.0).unwrap();
    let d = data(&g, 1e-2, 5);
    let cfg = PicardConfig { sponge_strength: 0.0, t_end: 0.2, dt: 0.01, ..PicardConfig::default() };
    let r = picard_run(&g, &d, &PicardConfig { max_iter: 2, tol: 0.0, ..cfg.clone() }).unwrap();
    let co = FrozenCoefficients::from_iterate(&g, &r.iterate.traj, &cfg).unwrap();
    let rd = recovered_divergence(&g, &r.iterate, &co);
    let scale = (0..r.iterate.traj.len())
        .map(|m| SlabGrid::norm_linf(&lgww_core::geometry::div_a(&g, &r.iterate.traj.v[m], &co.a_tilde[m])))
        .fold(0.0, f64::max);
    let drift = rd.iter().map(|x| SlabGrid::norm_linf(&(x - &rd[0]))).fold(0.0, f64::max);
    assert!(drift < 0.05 * scale, "drift {drift:e} vs {scale:e}");
}

#[test]
fn small_data_contracts() {
    let g = SlabGrid::new(12, 12, 12, TAU, TAU, 2.0).unwrap();
    let cfg = PicardConfig { max_iter: 4, tol: 0.0, ..PicardConfig::default() };
    let r = picard_run(&g, &data(&g, 1e-2, 6), &cfg).unwrap();
    let ratios: Vec<f64> = r.history.iter().skip(1).map(|h| h.ratio).collect();
    assert!(ratios.iter().all(|&q| q < 0.5), "{ratios:?}");
    assert!(r.history.iter().all(|h| !h.over_ceiling));
}

#[test]
fn difference_energy_basics() {
    let g = SlabGrid::new(12, 12, 12, TAU, TAU, 2.0).unwrap();
    let cfg = PicardConfig { max_iter: 2, tol: 0.0, ..PicardConfig::default() };
    let x = picard_run(&g, &data(&g, 1e-2, 7), &cfg).unwrap().iterate;
    let y = picard_run(&g, &data(&g, 1e-2, 8), &cfg).unwrap().iterate;
    assert!(difference_energy(&g, &x, &x).unwrap().iter().all(|e| e.total() == 0.0));
    let xy = difference_energy(&g, &x, &y).unwrap();
    let yx = difference_energy(&g, &y, &x).unwrap();
    for (a, b) in xy.iter().zip(&yx) {
        assert!((a.total() - b.total()).abs() <= 1e-12 * a.total());
    }
    let short = Iterate::trivial(&g, 0, cfg.dt, 2, 1.0);
    assert!(matches!(difference_energy(&g, &x, &short), Err(Error::GridMismatch)));
}

#[test]
fn difference_energy_is_quadratic_in_the_gap() {
    let g = SlabGrid::new(12, 12, 12, TAU, TAU, 2.0).unwrap();
    let cfg = PicardConfig { max_iter: 2, tol: 0.0, ..PicardConfig::default() };
    let x = picard_run(&g, &data(&g, 1e-2, 9), &cfg).unwrap().iterate;
    let y = picard_run(&g, &data(&g, 1e-2, 10), &cfg).unwrap().iterate;
    let blend = |d: f64| {
        let mut z = x.clone();
        z.traj = combine(&x.traj, &combine(&y.traj, &x.traj, -1.0), d);
        for m in 0..z.dv.len() {
            z.dv[m] = std::array::from_fn(|c| &x.dv[m][c] + &((&y.dv[m][c] - &x.dv[m][c]) * d));
            z.dh[m] = &x.dh[m] + &((&y.dh[m] - &x.dh[m]) * d);
            for r in 0..3 {
                for c in 0..3 {
                    z.coef_a[m][r][c] = &x.coef_a[m][r][c] + &((&y.coef_a[m][r][c] - &x.coef_a[m][r][c]) * d);
                }
            }
        }
        difference_energy(&g, &z, &x).unwrap().iter().map(|e| e.total()).fold(0.0, f64::max)
    };
    let ds = [0.1, 0.01];
    let es: Vec<f64> = ds.iter().map(|&d| blend(d)).collect();
    let slope = (es[0] / es[1]).log10();
    assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn sponge_and_lift_profiles_are_shared() {
    let g = SlabGrid::new(8, 8, 16, TAU, TAU, 2.0).unwrap();
    let cfg = PicardConfig::default();
    let p = sponge_profile(&g, cfg.sponge_width, cfg.sponge_strength);
    assert_eq!(p[0], 1.0);
    // the default lift is plain injection on the top row
    let lift = lift_profile(&g, cfg.clamp_rows);
    assert_eq!(lift[0], 1.0);
    assert!(lift[1..].iter().all(|&x| x == 0.0));
    assert_eq!(cfg.steps(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solution_map_is_linear_at_trivial_coefficients(s1 in 0u64..100, s2 in 100u64..200, c in -2.0f64..2.0) {
        let g = SlabGrid::new(8, 8, 12, TAU, TAU, 2.0).unwrap();
        let cfg = PicardConfig::default();
        let n = cfg.steps() + 1;
        let co = FrozenCoefficients::trivial(&g, cfg.dt, n, cfg.gamma);
        let (d1, d2) = (data(&g, 1e-2, s1), data(&g, 1e-2, s2));
        let w1 = Trajectory::constant(&g, cfg.dt, n, &d2.v0, &d1.h0);
        let w2 = Trajectory::constant(&g, cfg.dt, n, &d1.v0, &d2.h0);
        let ds = PicardData {
            v0: std::array::from_fn(|k| &d1.v0[k] + &(&d2.v0[k] * c)),
            h0: &d1.h0 + &(&d2.h0 * c),
            h1: &d1.h1 + &(&d2.h1 * c),
        };
        let a = solution_map(&g, &co, &w1, &d1, &cfg).unwrap();
        let b = solution_map(&g, &co, &w2, &d2, &cfg).unwrap();
        let s = solution_map(&g, &co, &combine(&w1, &w2, c), &ds, &cfg).unwrap();
        let err = traj_linf(&combine(&s, &combine(&a, &b, c), -1.0));
        prop_assert!(err < 1e-14 * (1.0 + traj_linf(&s)), "{err:e}");
    }
}
