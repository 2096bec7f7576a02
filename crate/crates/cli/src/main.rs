//! `lgww`: command-line driver for the smoothed water-wave solver.
//!
//! Exit status is 0 on success, 2 when a monitored condition trips (Taylor bound,
//! energy ceiling, Picard iterate ceiling) and 1 for any other error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lgww_core::diagnostics::{
    conserved_energy, cof_dev, jac_dev, taylor_min, Monitor, CSV_HEADER,
};
use lgww_core::dynamics::{full_to_pert, uniform_steps, KappaState, Stepper};
use lgww_core::geometry::GeometryBundle;
use lgww_core::initdata::{make_data, taylor_margin};
use lgww_core::io::{fmt_f64, write_convergence_csv, Checkpoint, ExperimentConfig, CONFIG_KEYS};
use lgww_core::picard::{picard_run, PicardData};
use lgww_core::verify::{inequality_report, Inequality};
use lgww_core::SlabGrid;

#[derive(Parser)]
#[command(name = "lgww", version, about = "Smoothed compressible gravity water waves on a periodic slab")]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// Without a subcommand the mode named by `run.mode` in the config is used.
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (`key = value` lines).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.nx=16`. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory; defaults to `run.output_dir`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the smoothed system and stream diagnostics.
    Run {
        /// Start from (or continue) a checkpoint instead of generating data.
        #[arg(long, alias = "init")]
        resume: Option<PathBuf>,
        /// Amplitude of generated data when no checkpoint is given.
        #[arg(long, default_value_t = 1e-2)]
        delta: f64,
        /// Write `state_<step>.ckpt` every this many steps (0 = only the final state).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Energy drift of the same data for several smoothing scales.
    SweepKappa {
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05])]
        kappas: Vec<f64>,
        #[arg(long, default_value_t = 1e-2)]
        delta: f64,
    },
    /// Picard iteration of the linearised problem.
    Picard {
        #[arg(long, default_value_t = 1e-2)]
        delta: f64,
    },
    /// Sampled ratios of the functional inequalities.
    Verify {
        /// Restrict to one inequality by name.
        #[arg(long)]
        which: Option<String>,
        #[arg(long, default_value_t = 8)]
        corpus: usize,
    },
    /// Generate initial data and save it as a checkpoint at t = 0.
    MakeData {
        #[arg(long, default_value_t = 1e-2)]
        delta: f64,
    },
    /// Print norms and monitored quantities of a checkpoint.
    Norms {
        checkpoint: PathBuf,
    },
    /// Print every config key with its effective value.
    ShowConfig,
}

/// A monitored condition tripped; reported with exit status 2.
#[derive(Debug)]
struct Monitored(String);

impl std::fmt::Display for Monitored {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Monitored {}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if !c.set.is_empty() {
        let mut lines: Vec<String> = cfg.to_text().lines().map(str::to_owned).collect();
        for s in &c.set {
            let Some((k, v)) = s.split_once('=') else { bail!("--set expects KEY=VALUE, got {s:?}") };
            let k = k.trim();
            let Some(i) = CONFIG_KEYS.iter().position(|(name, _)| *name == k) else {
                bail!("--set: unknown key {k:?}")
            };
            lines[i] = format!("{k} = {}", v.trim());
        }
        cfg = ExperimentConfig::parse(&lines.join("\n")).context("applying --set overrides")?;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_row(w: &mut impl Write, vals: &[f64]) -> Result<()> {
    let cells: Vec<String> = vals.iter().map(|&v| fmt_f64(v)).collect();
    writeln!(w, "{}", cells.join(","))?;
    Ok(())
}

fn initial_state(cfg: &ExperimentConfig, delta: f64) -> Result<(SlabGrid, KappaState)> {
    let g = cfg.grid()?;
    let d = make_data(&g, &lgww_core::initdata::DataSpec { delta, ..cfg.data_spec() })?;
    let s = KappaState::from_data(&g, &d.v0, &d.h0, cfg.gravity);
    Ok((g, s))
}

fn cmd_run(c: &Common, cfg: &ExperimentConfig, resume: Option<&Path>, delta: f64, every: usize) -> Result<()> {
    let dir = out_dir(c, cfg)?;
    let mut rc = cfg.run_config();
    let (g, s0, saved_dt) = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            let (s, dt) = ck.to_state()?;
            (ck.grid()?, s, dt)
        }
        None => {
            let (g, s) = initial_state(cfg, delta)?;
            (g, s, None)
        }
    };
    if rc.dt.is_none() {
        rc.dt = saved_dt;
    }
    let st = Stepper::new(g.clone(), rc.clone());
    let remaining = rc.t_end - s0.t;
    if remaining <= 0.0 {
        bail!("state is already at t = {} >= time.t_end = {}", s0.t, rc.t_end);
    }
    let dt = match rc.dt {
        Some(_) => st.choose_dt(&s0)?,
        None => uniform_steps(remaining, st.choose_dt(&s0)?).1,
    };
    fs::write(dir.join("config.used"), cfg.to_text())?;

    let every_sample = rc.sample_every.max(1);
    let mut csv = create(&dir.join("diagnostics.csv"))?;
    writeln!(csv, "{CSV_HEADER}")?;
    let mut mon = Monitor::new(&st, dt * every_sample as f64);
    let mut written = 0;
    let mut stream = |mon: &Monitor, csv: &mut BufWriter<File>| -> std::io::Result<()> {
        for r in &mon.records[written..] {
            let cells: Vec<String> = r.values().iter().map(|&v| fmt_f64(v)).collect();
            writeln!(csv, "{}", cells.join(","))?;
        }
        written = mon.records.len();
        csv.flush()
    };

    mon.push(&st, &s0, 0.0)?;
    let mut step = 0usize;
    let mut drift = 0.0_f64;
    let mut last = s0.clone();
    let mut violation: Option<String> = None;
    let result = st.integrate(&s0, dt, rc.t_end, |s, clamp| {
        step += 1;
        drift = drift.max(clamp);
        last = s.clone();
        if every > 0 && step % every == 0 {
            Checkpoint::from_state(&g, &rc, s, dt).save(&dir.join(format!("state_{step:06}.ckpt")))?;
        }
        if step % every_sample == 0 {
            mon.push(&st, s, drift)?;
            stream(&mon, &mut csv)?;
            drift = 0.0;
            let tm = taylor_min(&g, &s.h_pert, rc.gravity);
            if tm < rc.c0 {
                violation = Some(format!("Taylor bound violated at t = {:.6}: min(-d3 h) = {tm:.6e} < c0 = {}", s.t, rc.c0));
                return Err(lgww_core::Error::TaylorViolated { min: tm, bound: rc.c0 });
            }
        }
        Ok(())
    });
    mon.finish(&g);
    stream(&mon, &mut csv)?;
    Checkpoint::from_state(&g, &rc, &last, dt).save(&dir.join("final.ckpt"))?;
    match result {
        Ok(s) => {
            eprintln!("run finished: t = {:.6}, {step} steps of dt = {dt:.6e}", s.t);
            Ok(())
        }
        Err(lgww_core::Error::TaylorViolated { .. }) if violation.is_some() => {
            Err(Monitored(violation.unwrap_or_default()).into())
        }
        Err(e @ lgww_core::Error::Blowup { .. }) => Err(Monitored(e.to_string()).into()),
        Err(e) => Err(e.into()),
    }
}

fn cmd_sweep(c: &Common, cfg: &ExperimentConfig, kappas: &[f64], delta: f64) -> Result<()> {
    let dir = out_dir(c, cfg)?;
    let (g, s0) = initial_state(cfg, delta)?;
    let mut csv = create(&dir.join("sweep_kappa.csv"))?;
    writeln!(csv, "kappa,e0_rel_drift,taylor_min,steps")?;
    for &kappa in kappas {
        let rc = lgww_core::dynamics::RunConfig { kappa, ..cfg.run_config() };
        let st = Stepper::new(g.clone(), rc.clone());
        let (steps, dt) = match rc.dt {
            Some(_) => (0, st.choose_dt(&s0)?),
            None => uniform_steps(rc.t_end, st.choose_dt(&s0)?),
        };
        let e0 = conserved_energy(&g, &s0, &st.eos, rc.gravity)?;
        let mut worst = 0.0_f64;
        let mut tmin = taylor_min(&g, &s0.h_pert, rc.gravity);
        let mut n = 0usize;
        st.integrate(&s0, dt, rc.t_end, |s, _| {
            n += 1;
            let e = conserved_energy(&g, s, &st.eos, rc.gravity)?;
            worst = worst.max((e.total() - e0.total()).abs());
            tmin = tmin.min(taylor_min(&g, &s.h_pert, rc.gravity));
            Ok(())
        })
        .map_err(|e| match e {
            lgww_core::Error::Blowup { .. } => anyhow::Error::new(Monitored(format!("kappa = {kappa}: {e}"))),
            e => e.into(),
        })?;
        debug_assert!(steps == 0 || steps == n);
        let rel = worst / e0.max_component();
        write_row(&mut csv, &[kappa, rel, tmin, n as f64])?;
        csv.flush()?;
        eprintln!("kappa = {kappa}: relative E0 drift {rel:.3e}");
    }
    Ok(())
}

fn cmd_picard(c: &Common, cfg: &ExperimentConfig, delta: f64) -> Result<()> {
    let dir = out_dir(c, cfg)?;
    let g = cfg.grid()?;
    let d = make_data(&g, &lgww_core::initdata::DataSpec { delta, ..cfg.data_spec() })?;
    let data = PicardData { v0: d.v0, h0: full_to_pert(&g, &d.h0, cfg.gravity), h1: d.h1 };
    let pc = cfg.picard_config();
    let r = picard_run(&g, &data, &pc)?;
    write_convergence_csv(create(&dir.join("convergence.csv"))?, &r.history)?;
    for h in &r.history {
        eprintln!("n = {}: sup difference energy {:.3e}, ratio {:.3e}", h.n, h.sup_diff_energy, h.ratio);
    }
    if let Some(h) = r.history.iter().find(|h| h.over_ceiling) {
        bail!(Monitored(format!("iterate {} exceeds the ceiling: norm {:.3e}", h.n, h.iterate_norm)));
    }
    eprintln!("{}", if r.converged { "converged" } else { "max_iter reached" });
    Ok(())
}

fn cmd_verify(c: &Common, cfg: &ExperimentConfig, which: Option<&str>, corpus: usize) -> Result<()> {
    let dir = out_dir(c, cfg)?;
    let g = cfg.grid()?;
    let list: Vec<Inequality> = match which {
        Some(name) => {
            let Some(i) = Inequality::parse(name) else {
                let known: Vec<&str> = Inequality::ALL.iter().map(|i| i.name()).collect();
                bail!("unknown inequality {name:?}; known: {}", known.join(", "))
            };
            vec![i]
        }
        None => Inequality::ALL.to_vec(),
    };
    let mut summary = create(&dir.join("verify_summary.csv"))?;
    writeln!(summary, "index,max_ratio,median_ratio,samples")?;
    for which in list {
        let rep = inequality_report(&g, which, corpus, cfg.seed)?;
        let mut w = create(&dir.join(format!("verify_{}.csv", rep.name)))?;
        writeln!(w, "seed,lhs,rhs,ratio")?;
        for r in &rep.rows {
            write_row(&mut w, &[r.seed as f64, r.lhs, r.rhs, r.ratio])?;
        }
        let idx = Inequality::ALL.iter().position(|&i| i == which).unwrap_or(0);
        write_row(&mut summary, &[idx as f64, rep.max_ratio(), rep.median_ratio(), rep.rows.len() as f64])?;
        println!("{:<18} max {:.4e}  median {:.4e}", rep.name, rep.max_ratio(), rep.median_ratio());
    }
    summary.flush()?;
    Ok(())
}

fn cmd_make_data(c: &Common, cfg: &ExperimentConfig, delta: f64) -> Result<()> {
    let dir = out_dir(c, cfg)?;
    let g = cfg.grid()?;
    let d = make_data(&g, &lgww_core::initdata::DataSpec { delta, ..cfg.data_spec() })?;
    let s = KappaState::from_data(&g, &d.v0, &d.h0, cfg.gravity);
    let rc = cfg.run_config();
    let st = Stepper::new(g.clone(), rc.clone());
    // the step a run to `time.t_end` would take, so resuming from this file matches a direct run
    let dt = match rc.dt {
        Some(_) => st.choose_dt(&s)?,
        None => uniform_steps(rc.t_end, st.choose_dt(&s)?).1,
    };
    let path = dir.join("initial.ckpt");
    Checkpoint::from_state(&g, &rc, &s, dt).save(&path)?;
    println!("taylor_margin = {}", fmt_f64(taylor_margin(&g, &d.h0)));
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_norms(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let g = ck.grid()?;
    let (s, dt) = ck.to_state()?;
    let eos = lgww_core::eos::EoS::new(ck.gamma);
    let e = conserved_energy(&g, &s, &eos, ck.gravity)?;
    let geo = GeometryBundle::build(&g, &s.eta, ck.kappa)?;
    let mut out: Vec<(String, f64)> = vec![
        ("t".into(), s.t),
        ("dt".into(), dt.unwrap_or(f64::NAN)),
        ("e0_total".into(), e.total()),
        ("e0_kin".into(), e.kin),
        ("e0_int".into(), e.int),
        ("e0_surf".into(), e.surf),
        ("e0_strat".into(), e.strat),
        ("taylor_min".into(), taylor_min(&g, &s.h_pert, ck.gravity)),
        ("jac_dev".into(), jac_dev(&g, &geo.j_tilde)),
        ("cof_dev".into(), cof_dev(&g, &geo.a_tilde)),
    ];
    for k in 0..=4 {
        out.push((format!("h_pert_H{k}"), g.norm_interior(&s.h_pert, k)));
        out.push((format!("v_H{k}"), g.norm_interior_vec(&s.v, k)));
        out.push((format!("u_H{k}"), g.norm_interior_vec(&s.eta.u, k)));
    }
    if cfg.kappa != ck.kappa {
        eprintln!("note: checkpoint kappa {} differs from config kappa {}", ck.kappa, cfg.kappa);
    }
    for (k, v) in out {
        println!("{k} = {}", fmt_f64(v));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let c = &cli.common;
    match &cli.cmd {
        Some(Cmd::Run { resume, delta, checkpoint_every }) => {
            cmd_run(c, &cfg, resume.as_deref(), *delta, *checkpoint_every)
        }
        Some(Cmd::SweepKappa { kappas, delta }) => cmd_sweep(c, &cfg, kappas, *delta),
        Some(Cmd::Picard { delta }) => cmd_picard(c, &cfg, *delta),
        Some(Cmd::Verify { which, corpus }) => cmd_verify(c, &cfg, which.as_deref(), *corpus),
        Some(Cmd::MakeData { delta }) => cmd_make_data(c, &cfg, *delta),
        Some(Cmd::Norms { checkpoint }) => cmd_norms(&cfg, checkpoint),
        Some(Cmd::ShowConfig) => {
            print!("{}", cfg.to_text());
            Ok(())
        }
        None => match cfg.mode.as_str() {
            "run" => cmd_run(c, &cfg, None, 1e-2, 0),
            "sweep-kappa" => cmd_sweep(c, &cfg, &[0.2, 0.1, 0.05], 1e-2),
            "picard" => cmd_picard(c, &cfg, 1e-2),
            "verify" => cmd_verify(c, &cfg, None, 8),
            "make-data" => cmd_make_data(c, &cfg, 1e-2),
            other => bail!("run.mode = {other} needs a subcommand (e.g. `lgww norms FILE`)"),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let core_monitored = matches!(
                e.downcast_ref::<lgww_core::Error>(),
                Some(lgww_core::Error::TaylorViolated { .. } | lgww_core::Error::Blowup { .. })
            );
            if core_monitored || e.downcast_ref::<Monitored>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
