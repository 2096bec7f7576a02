use std::f64::consts::TAU;

use lgww_core::diagnostics::{DiagnosticsRecord, CSV_HEADER};
use lgww_core::dynamics::{KappaState, RunConfig};
use lgww_core::initdata::{make_data, DataSpec};
use lgww_core::io::*;
use lgww_core::picard::ConvergenceRow;
use lgww_core::{Error, SlabGrid};
use proptest::prelude::*;

fn sample_state(g: &SlabGrid) -> KappaState {
    let d = make_data(g, &DataSpec::default()).unwrap();
    let mut s = KappaState::from_data(g, &d.v0, &d.h0, 1.0);
    s.eta.u[2] = g.field(|y1, _, y3| 1e-3 * y1.sin() * (1.0 + y3));
    s.t = 0.125;
    s.eta.t = 0.125;
    s
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let g = SlabGrid::new(8, 10, 9, TAU, 3.0, 2.5).unwrap();
    let s = sample_state(&g);
    let cfg = RunConfig { kappa: 0.07, gamma: 1.4, ..RunConfig::default() };
    let ck = Checkpoint::from_state(&g, &cfg, &s, 0.0123);
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    assert_eq!(back, ck);
    let (st, dt) = back.to_state().unwrap();
    assert_eq!(dt, Some(0.0123));
    assert_eq!(st.h_pert, s.h_pert);
    assert_eq!(st.v, s.v);
    assert_eq!(st.eta.u, s.eta.u);
    assert_eq!(st.t, s.t);
    let rg = back.grid().unwrap();
    assert_eq!((rg.shape(), rg.lx, rg.ly, rg.depth), (g.shape(), g.lx, g.ly, g.depth));
    assert_eq!((back.gamma, back.kappa), (1.4, 0.07));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
}

#[test]
fn checkpoint_header_layout() {
    let g = SlabGrid::new(8, 8, 8, TAU, TAU, 2.0).unwrap();
    let ck = Checkpoint::from_state(&g, &RunConfig::default(), &KappaState::equilibrium(&g), 0.1);
    let b = ck.to_bytes();
    assert_eq!(&b[..4], b"LGWW");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), CHECKPOINT_VERSION);
    assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 8);
    // payload: seven fields of 512 values and the one-element step
    assert!(b.len() > (7 * 512 + 1) * 8);
    let tail = &b[b.len() - 8..];
    assert_eq!(f64::from_le_bytes(tail.try_into().unwrap()), 0.1);
}

#[test]
fn checkpoint_rejects_damaged_input() {
    let g = SlabGrid::new(8, 8, 8, TAU, TAU, 2.0).unwrap();
    let b = Checkpoint::from_state(&g, &RunConfig::default(), &KappaState::equilibrium(&g), 0.1).to_bytes();
    let err = |buf: &[u8]| match Checkpoint::from_bytes(buf) {
        Err(Error::Checkpoint(m)) => m,
        other => panic!("expected checkpoint error, got {other:?}"),
    };
    assert!(err(&b[..b.len() - 3]).contains("truncated"));
    assert!(err(&b[..20]).contains("truncated"));
    let mut v = b.clone();
    v[4] = 9;
    assert!(err(&v).contains("version 9"));
    let mut m = b.clone();
    m[0] = b'X';
    assert!(err(&m).contains("magic"));
    let mut t = b.clone();
    t.push(0);
    assert!(err(&t).contains("trailing"));
}

#[test]
fn checkpoint_missing_or_misshaped_field() {
    let g = SlabGrid::new(8, 8, 8, TAU, TAU, 2.0).unwrap();
    let mut ck = Checkpoint::from_state(&g, &RunConfig::default(), &KappaState::equilibrium(&g), 0.1);
    ck.fields.retain(|(n, _)| n != "v2");
    assert!(matches!(ck.to_state(), Err(Error::Checkpoint(m)) if m.contains("v2")));
    let mut ck = Checkpoint::from_state(&g, &RunConfig::default(), &KappaState::equilibrium(&g), 0.1);
    ck.fields[0].1.pop();
    assert!(matches!(ck.to_state(), Err(Error::Checkpoint(m)) if m.contains("u1")));
}

#[test]
fn config_defaults_cover_every_key() {
    let c = ExperimentConfig::default();
    assert_eq!((c.nx, c.ny, c.nz), (48, 48, 48));
    assert_eq!(c.kappa, 0.05);
    assert_eq!(c.mode, "run");
    assert_eq!(c.picard_max_iter, 8);
    assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    assert_eq!(c.to_text().lines().count(), CONFIG_KEYS.len());
    assert_eq!(c.run_config().dt, None);
    let stepped = ExperimentConfig::parse("time.dt = 0.01").unwrap();
    assert_eq!(stepped.run_config().dt, Some(0.01));
    assert_eq!(stepped.picard_config().dt, 0.01);
}

#[test]
fn config_parses_comments_and_values() {
    let text = "# header\n\ngrid.nx = 16   # trailing\nphysics.gamma=1.4\nrun.mode = picard\nrun.output_dir = /tmp/x\n";
    let c = ExperimentConfig::parse(text).unwrap();
    assert_eq!(c.nx, 16);
    assert_eq!(c.gamma, 1.4);
    assert_eq!(c.mode, "picard");
    assert_eq!(c.output_dir, "/tmp/x");
    assert_eq!(c.ny, 48);
}

#[test]
fn config_errors_carry_line_numbers() {
    let line_of = |text: &str| match ExperimentConfig::parse(text) {
        Err(Error::Config { line, msg }) => (line, msg),
        other => panic!("expected config error, got {other:?}"),
    };
    let (l, m) = line_of("grid.nx = 16\n# c\ngrid.bogus = 3\n");
    assert_eq!(l, 3);
    assert!(m.contains("unknown key"));
    let (l, m) = line_of("grid.nx = 16\ngrid.nx = 32\n");
    assert_eq!(l, 2);
    assert!(m.contains("already set on line 1"));
    let (l, m) = line_of("\n\nsmoothing.kappa = fast\n");
    assert_eq!(l, 3);
    assert!(m.contains("smoothing.kappa"));
    let (l, _) = line_of("grid.nx 16\n");
    assert_eq!(l, 1);
    let (l, m) = line_of("run.seed = 1\nrun.mode = dance\n");
    assert_eq!(l, 2);
    assert!(m.contains("run.mode"));
    let (l, _) = line_of("run.sample_every = 0\n");
    assert_eq!(l, 1);
}

#[test]
fn diagnostics_csv_round_trip() {
    let recs: Vec<DiagnosticsRecord> = (0..3)
        .map(|i| {
            let mut r = DiagnosticsRecord { t: 0.1 * i as f64, taylor_min: 1.0 / 3.0, ..DiagnosticsRecord::default() };
            r.e0.kin = std::f64::consts::PI * 1e-9 * i as f64;
            r.wave_res = f64::MIN_POSITIVE;
            r
        })
        .collect();
    let mut buf = Vec::new();
    write_diagnostics_csv(&mut buf, &recs).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header.join(","), CSV_HEADER);
    assert_eq!(rows.len(), 3);
    for (r, row) in recs.iter().zip(&rows) {
        assert_eq!(row.as_slice(), r.values().as_slice());
    }
}

#[test]
fn convergence_csv_layout() {
    let rows = [
        ConvergenceRow { n: 1, sup_diff_energy: 1e-3, ratio: f64::NAN, wallclock: 0.5, inner_iterations: 3, iterate_norm: 1.0, over_ceiling: false },
        ConvergenceRow { n: 2, sup_diff_energy: 1e-6, ratio: 1e-3, wallclock: 1.0, inner_iterations: 3, iterate_norm: 1.0, over_ceiling: false },
    ];
    let mut buf = Vec::new();
    write_convergence_csv(&mut buf, &rows).unwrap();
    let (h, r) = read_csv(&String::from_utf8(buf).unwrap()).unwrap();
    assert_eq!(h, CONVERGENCE_HEADER);
    assert!(r[0][2].is_nan());
    assert_eq!(r[1], vec![2.0, 1e-6, 1e-3, 1.0]);
}

#[test]
fn read_csv_reports_bad_cells() {
    assert!(matches!(read_csv(""), Err(Error::Config { line: 1, .. })));
    assert!(matches!(read_csv("a,b\n1,2\n3,x\n"), Err(Error::Config { line: 3, .. })));
}

proptest! {
    #[test]
    fn fmt_f64_round_trips(x in proptest::num::f64::ANY) {
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()));
    }

    #[test]
    fn checkpoint_bytes_round_trip(vals in proptest::collection::vec(proptest::num::f64::NORMAL, 1..40), t in -1e3f64..1e3) {
        let ck = Checkpoint {
            dims: (1, 1, vals.len()),
            lx: 1.0, ly: 2.0, depth: 3.0, gamma: 1.0, gravity: 9.8, kappa: 0.1, t,
            fields: vec![("a".into(), vals.clone()), ("bb".into(), vals.iter().rev().copied().collect())],
        };
        prop_assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }
}
