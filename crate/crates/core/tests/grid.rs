use std::f64::consts::{PI, TAU};

use lgww_core::grid::SBP_NORM_EDGE;
use lgww_core::verify::random_field;
use lgww_core::{ScalarField, SlabGrid};
use proptest::prelude::*;

fn grid(n: usize) -> SlabGrid {
    SlabGrid::new(n, n, n, TAU, TAU, 2.0).unwrap()
}

fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    SlabGrid::norm_linf(&(a - b))
}

#[test]
fn rejects_bad_sizes() {
    assert!(SlabGrid::new(6, 8, 8, TAU, TAU, 1.0).is_err());
    assert!(SlabGrid::new(9, 8, 8, TAU, TAU, 1.0).is_err());
    assert!(SlabGrid::new(8, 8, 7, TAU, TAU, 1.0).is_err());
    assert!(SlabGrid::new(8, 8, 8, TAU, TAU, -1.0).is_err());
}

#[test]
fn nodes_start_at_zero_and_decrease_uniformly() {
    let g = grid(12);
    let z = g.z();
    assert_eq!(z[0], 0.0);
    assert!((z[g.nz - 1] + g.depth).abs() < 1e-14);
    for w in z.windows(2) {
        assert!((w[0] - w[1] - g.dz).abs() < 1e-14);
    }
}

#[test]
fn dbar_of_constant_and_sine() {
    let g = grid(16);
    let c = g.field(|_, _, _| 3.5);
    assert!(SlabGrid::norm_linf(&g.dbar(&c, 1)) < 1e-13);
    let f = g.field(|y1, _, _| (TAU * y1 / g.lx).sin());
    let exact = g.field(|y1, _, _| TAU / g.lx * (TAU * y1 / g.lx).cos());
    assert!(max_diff(&g.dbar(&f, 1), &exact) < 1e-12);
}

/// Direct O(N^2) evaluation of the derivative of the trigonometric interpolant along y1.
fn direct_dbar1(g: &SlabGrid, f: &ScalarField) -> ScalarField {
    let n = g.nx;
    let mut out = g.zeros();
    for j in 0..g.ny {
        for k in 0..g.nz {
            for m in 0..n as i64 {
                let m_signed = if m > n as i64 / 2 { m - n as i64 } else { m };
                if 2 * m_signed.abs() == n as i64 {
                    continue;
                }
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..n {
                    let th = -TAU * (m as f64) * (i as f64) / n as f64;
                    re += f[[i, j, k]] * th.cos();
                    im += f[[i, j, k]] * th.sin();
                }
                let kw = TAU * m_signed as f64 / g.lx;
                for i in 0..n {
                    let th = TAU * (m as f64) * (i as f64) / n as f64;
                    // Re[(i kw) (re + i im) e^{i th}] / n
                    out[[i, j, k]] += kw * (-(re * th.sin() + im * th.cos())) / n as f64;
                }
            }
        }
    }
    out
}

#[test]
fn dbar_matches_direct_interpolant_derivative() {
    let g = SlabGrid::new(12, 8, 8, 3.0, 2.0, 1.0).unwrap();
    let f = random_field(&g, 5, 4, 0.5);
    let fast = g.dbar(&f, 1);
    let slow = direct_dbar1(&g, &f);
    let rel = max_diff(&fast, &slow) / SlabGrid::norm_linf(&slow);
    assert!(rel < 1e-10, "relative error {rel:e}");
}

#[test]
fn dnormal_reproduces_affine_and_constant() {
    let g = grid(16);
    let f = g.field(|_, _, y3| 2.0 * y3 - 1.0);
    let d = g.dnormal(&f);
    assert!(SlabGrid::norm_linf(&(d - 2.0)) < 1e-12);
    let da = g.dnormal_accurate(&f);
    assert!(SlabGrid::norm_linf(&(da - 2.0)) < 1e-12);
    let c = g.field(|_, _, _| 1.25);
    assert!(SlabGrid::norm_linf(&g.dnormal(&c)) < 1e-12);
    assert!(SlabGrid::norm_linf(&g.dnormal2(&c)) < 1e-10);
}

fn depth_order(op: impl Fn(&SlabGrid, &ScalarField) -> ScalarField, exact: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let errs: Vec<f64> = [17, 33, 65, 129]
        .iter()
        .map(|&nz| {
            let g = SlabGrid::new(8, 8, nz, TAU, TAU, 2.0).unwrap();
            let f = g.field(|_, _, y3| (PI * y3 / g.depth).sin());
            let want = g.field(|_, _, y3| exact(y3, g.depth));
            max_diff(&op(&g, &f), &want)
        })
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn accurate_first_derivative_is_fourth_order() {
    let orders = depth_order(|g, f| g.dnormal_accurate(f), |y3, d| PI / d * (PI * y3 / d).cos());
    assert!(orders.last().unwrap() >= &3.8, "{orders:?}");
}

#[test]
fn second_derivative_is_fourth_order() {
    let orders = depth_order(|g, f| g.dnormal2(f), |y3, d| -(PI / d).powi(2) * (PI * y3 / d).sin());
    assert!(orders.last().unwrap() >= &3.8, "{orders:?}");
}

#[test]
fn sbp_first_derivative_converges_at_boundary_closure_order() {
    let orders = depth_order(|g, f| g.dnormal(f), |y3, d| PI / d * (PI * y3 / d).cos());
    assert!(orders.iter().all(|p| *p >= 1.9), "{orders:?}");
}

#[test]
fn trace_top_examples() {
    let g = grid(8);
    let f = g.field(|y1, y2, y3| y3 * (y1 + 2.0 * y2).cos());
    assert!(SlabGrid::norm_linf_boundary(&g.trace_top(&f)) == 0.0);
    let c = g.field(|_, _, _| -4.0);
    assert!(g.trace_top(&c).iter().all(|&v| v == -4.0));
    let r = random_field(&g, 1, 3, 1.0);
    let t = g.trace_top(&r);
    for i in 0..g.nx {
        for j in 0..g.ny {
            assert_eq!(t[[i, j]], r[[i, j, 0]]);
        }
    }
}

#[test]
fn interior_norm_examples() {
    let g = SlabGrid::new(16, 8, 9, 3.0, 2.0, 1.5).unwrap();
    assert_eq!(g.norm_interior(&g.zeros(), 3), 0.0);
    let c = g.field(|_, _, _| 2.0);
    assert!((g.norm_interior(&c, 0) - 2.0 * (g.volume()).sqrt()).abs() < 1e-12);
    let f = g.field(|y1, _, _| (TAU * y1 / g.lx).sin());
    let want = (g.volume() / 2.0).sqrt() * (1.0 + (TAU / g.lx).powi(2)).sqrt();
    assert!((g.norm_interior(&f, 1) - want).abs() < 1e-8);
}

#[test]
fn boundary_norm_examples() {
    let g = SlabGrid::new(16, 16, 8, 3.0, 2.0, 1.0).unwrap();
    assert_eq!(g.norm_boundary(&g.zeros_boundary(), 1.5), 0.0);
    let r = g.trace_top(&random_field(&g, 2, 4, 1.0));
    let l2 = (g.integrate_boundary(&r.mapv(|v| v * v))).sqrt();
    assert!((g.norm_boundary(&r, 0.0) - l2).abs() < 1e-12 * l2);
    let amp = 0.7;
    let (a, b) = (TAU * 2.0 / g.lx, TAU / g.ly);
    let m = g.boundary(|y1, y2| amp * (a * y1 + b * y2).sin());
    let want = amp * (g.lx * g.ly / 2.0).sqrt() * (1.0 + a * a + b * b).powf(0.25);
    assert!((g.norm_boundary(&m, 0.5) - want).abs() < 1e-12);
}

#[test]
fn script_h_examples() {
    let g = grid(16);
    let c = g.field(|_, _, _| -3.0);
    assert_eq!(SlabGrid::norm_linf(&c), 3.0);
    assert!(g.norm_script_h(&c) < 1e-10);
    let f = g.field(|_, _, y3| -1.5 * y3);
    assert!((g.norm_script_h(&f) - 1.5).abs() < 1e-9);
}

#[test]
fn script_h_recomposes_from_norms() {
    let g = grid(16);
    let f = random_field(&g, 9, 3, 1.0);
    let grad = [g.dbar(&f, 1), g.dbar(&f, 2), g.dnormal_accurate(&f)];
    let mut linf = 0.0_f64;
    for idx in 0..f.len() {
        let s: f64 = grad.iter().map(|c| c.as_slice().unwrap()[idx].powi(2)).sum();
        linf = linf.max(s.sqrt());
    }
    let d = |h: &ScalarField, mu: usize| if mu < 2 { g.dbar(h, mu + 1) } else { g.dnormal_accurate(h) };
    let mut h2 = 0.0;
    for mu in 0..3 {
        for nu in 0..3 {
            let e = if mu == 2 && nu == 2 { g.dnormal2(&f) } else { d(&d(&f, nu), mu) };
            h2 += g.norm_interior_sq(&e, 2);
        }
    }
    let want = linf + h2.sqrt();
    assert!((g.norm_script_h(&f) - want).abs() < 1e-9 * want);
}

/// `u^T H (D w) + (D u)^T H w = u w |_{top} - u w |_{bottom}` with the diagonal SBP norm.
fn sbp_defect(g: &SlabGrid, u: &ScalarField, w: &ScalarField) -> f64 {
    let n = g.nz;
    let mut h = vec![g.dz; n];
    for (q, c) in SBP_NORM_EDGE.iter().enumerate() {
        h[q] = c * g.dz;
        h[n - 1 - q] = c * g.dz;
    }
    let (du, dw) = (g.dnormal(u), g.dnormal(w));
    let mut worst = 0.0_f64;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let lhs: f64 = (0..n).map(|k| h[k] * (u[[i, j, k]] * dw[[i, j, k]] + du[[i, j, k]] * w[[i, j, k]])).sum();
            let rhs = u[[i, j, 0]] * w[[i, j, 0]] - u[[i, j, n - 1]] * w[[i, j, n - 1]];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tangential_derivatives_commute(seed in 0u64..1000) {
        let g = grid(12);
        let f = random_field(&g, seed, 5, 0.5);
        let a = g.dbar(&g.dbar(&f, 1), 2);
        let b = g.dbar(&g.dbar(&f, 2), 1);
        prop_assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn trace_commutes_with_dbar(seed in 0u64..1000, dir in 1usize..=2) {
        let g = grid(12);
        let f = random_field(&g, seed, 5, 0.5);
        let a = g.trace_top(&g.dbar(&f, dir));
        let b = g.dbar_boundary(&g.trace_top(&f), dir);
        prop_assert!(SlabGrid::norm_linf_boundary(&(&a - &b)) < 1e-12);
    }

    #[test]
    fn parseval_on_random_fields(seed in 0u64..1000) {
        let g = grid(12);
        let f = random_field(&g, seed, 5, 0.5);
        let direct = g.l2_sq(&f);
        let spectral = g.norm_interior_sq(&f, 0);
        prop_assert!((direct - spectral).abs() < 1e-10 * direct);
    }

    #[test]
    fn norms_are_absolutely_homogeneous(seed in 0u64..1000, c in -5.0f64..5.0, k in 0usize..=4) {
        let g = grid(10);
        let f = random_field(&g, seed, 3, 1.0);
        let a = g.norm_interior(&(&f * c), k);
        let b = c.abs() * g.norm_interior(&f, k);
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        let t = g.trace_top(&f);
        let s = 0.5 * k as f64 - 1.0;
        let a = g.norm_boundary(&(&t * c), s);
        let b = c.abs() * g.norm_boundary(&t, s);
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
    }

    #[test]
    fn interior_norms_increase_with_order(seed in 0u64..1000) {
        let g = grid(10);
        let f = random_field(&g, seed, 3, 1.0);
        let n: Vec<f64> = (0..=4).map(|k| g.norm_interior(&f, k)).collect();
        prop_assert!(n.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn sbp_summation_by_parts(s1 in 0u64..1000, s2 in 0u64..1000) {
        let g = grid(12);
        let u = random_field(&g, s1, 3, 1.0);
        let w = random_field(&g, s2 + 5000, 3, 1.0);
        prop_assert!(sbp_defect(&g, &u, &w) < 1e-11);
    }
}
