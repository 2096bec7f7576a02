//! Experiment configuration, binary checkpoints and CSV output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::diagnostics::{DiagnosticsRecord, CSV_HEADER};
use crate::dynamics::{KappaState, RunConfig};
use crate::geometry::FlowMap;
use crate::initdata::DataSpec;
use crate::picard::{ConvergenceRow, PicardConfig};
use crate::{Error, Result, ScalarField, SlabGrid};

/// Every accepted key with its default, in documentation order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("grid.nx", "48"),
    ("grid.ny", "48"),
    ("grid.nz", "48"),
    ("grid.lx", "6.283185307179586"),
    ("grid.ly", "6.283185307179586"),
    ("grid.depth", "2"),
    ("physics.gamma", "1"),
    ("physics.gravity", "1"),
    ("smoothing.kappa", "0.05"),
    ("time.dt", "0"),
    ("time.t_end", "0.5"),
    ("time.cfl", "0.4"),
    ("monitor.c0", "0.5"),
    ("monitor.epsilon", "0.1"),
    ("monitor.energy_ceiling", "1e6"),
    ("run.mode", "run"),
    ("run.seed", "7"),
    ("run.output_dir", "out"),
    ("run.sample_every", "1"),
    ("picard.T", "0.05"),
    ("picard.tol", "1e-26"),
    ("picard.max_iter", "8"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub depth: f64,
    pub gamma: f64,
    pub gravity: f64,
    pub kappa: f64,
    /// 0 selects the CFL step.
    pub dt: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub c0: f64,
    pub epsilon: f64,
    pub energy_ceiling: f64,
    pub mode: String,
    pub seed: u64,
    pub output_dir: String,
    pub sample_every: usize,
    pub picard_t: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::parse("").expect("defaults parse")
    }
}

fn num<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| Error::Config { line, msg: format!("cannot parse value {raw:?} for {key}") })
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, (String, usize)> =
            CONFIG_KEYS.iter().map(|(k, v)| (*k, (v.to_string(), 0))).collect();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config { line, msg: format!("expected key = value, got {body:?}") })?;
            let (k, v) = (k.trim(), v.trim());
            let slot = seen
                .get_mut(k)
                .ok_or_else(|| Error::Config { line, msg: format!("unknown key {k:?}") })?;
            if slot.1 != 0 {
                return Err(Error::Config { line, msg: format!("{k} already set on line {}", slot.1) });
            }
            *slot = (v.to_string(), line);
        }
        let get = |k: &str| {
            let (v, l) = &seen[k];
            (v.as_str(), *l)
        };
        macro_rules! field {
            ($k:expr) => {{
                let (v, l) = get($k);
                num($k, v, l)?
            }};
        }
        let cfg = ExperimentConfig {
            nx: field!("grid.nx"),
            ny: field!("grid.ny"),
            nz: field!("grid.nz"),
            lx: field!("grid.lx"),
            ly: field!("grid.ly"),
            depth: field!("grid.depth"),
            gamma: field!("physics.gamma"),
            gravity: field!("physics.gravity"),
            kappa: field!("smoothing.kappa"),
            dt: field!("time.dt"),
            t_end: field!("time.t_end"),
            cfl: field!("time.cfl"),
            c0: field!("monitor.c0"),
            epsilon: field!("monitor.epsilon"),
            energy_ceiling: field!("monitor.energy_ceiling"),
            mode: get("run.mode").0.to_string(),
            seed: field!("run.seed"),
            output_dir: get("run.output_dir").0.to_string(),
            sample_every: field!("run.sample_every"),
            picard_t: field!("picard.T"),
            picard_tol: field!("picard.tol"),
            picard_max_iter: field!("picard.max_iter"),
        };
        let (mode, line) = get("run.mode");
        if !["run", "sweep-kappa", "picard", "verify", "make-data", "norms"].contains(&mode) {
            return Err(Error::Config { line, msg: format!("unknown run.mode {mode:?}") });
        }
        if cfg.sample_every == 0 {
            return Err(Error::Config { line: get("run.sample_every").1, msg: "sample_every must be positive".into() });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// All keys, including defaults, in a form `parse` reads back unchanged.
    pub fn to_text(&self) -> String {
        let vals = [
            self.nx.to_string(),
            self.ny.to_string(),
            self.nz.to_string(),
            format!("{:?}", self.lx),
            format!("{:?}", self.ly),
            format!("{:?}", self.depth),
            format!("{:?}", self.gamma),
            format!("{:?}", self.gravity),
            format!("{:?}", self.kappa),
            format!("{:?}", self.dt),
            format!("{:?}", self.t_end),
            format!("{:?}", self.cfl),
            format!("{:?}", self.c0),
            format!("{:?}", self.epsilon),
            format!("{:?}", self.energy_ceiling),
            self.mode.clone(),
            self.seed.to_string(),
            self.output_dir.clone(),
            self.sample_every.to_string(),
            format!("{:?}", self.picard_t),
            format!("{:?}", self.picard_tol),
            self.picard_max_iter.to_string(),
        ];
        CONFIG_KEYS.iter().zip(vals).map(|((k, _), v)| format!("{k} = {v}\n")).collect()
    }

    pub fn grid(&self) -> Result<SlabGrid> {
        SlabGrid::new(self.nx, self.ny, self.nz, self.lx, self.ly, self.depth)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            kappa: self.kappa,
            gamma: self.gamma,
            gravity: self.gravity,
            dt: (self.dt > 0.0).then_some(self.dt),
            t_end: self.t_end,
            cfl: self.cfl,
            epsilon: self.epsilon,
            c0: self.c0,
            sample_every: self.sample_every,
            ceiling: self.energy_ceiling,
            ..RunConfig::default()
        }
    }

    pub fn picard_config(&self) -> PicardConfig {
        let base = PicardConfig::default();
        PicardConfig {
            kappa: self.kappa,
            gamma: self.gamma,
            gravity: self.gravity,
            t_end: self.picard_t,
            dt: if self.dt > 0.0 { self.dt } else { base.dt },
            tol: self.picard_tol,
            max_iter: self.picard_max_iter,
            ..base
        }
    }

    pub fn data_spec(&self) -> DataSpec {
        DataSpec { gamma: self.gamma, gravity: self.gravity, c0: self.c0, seed: self.seed, ..DataSpec::default() }
    }
}

const MAGIC: &[u8; 4] = b"LGWW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub dims: (usize, usize, usize),
    pub lx: f64,
    pub ly: f64,
    pub depth: f64,
    pub gamma: f64,
    pub gravity: f64,
    pub kappa: f64,
    pub t: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for d in [self.dims.0, self.dims.1, self.dims.2] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in [self.lx, self.ly, self.depth, self.gamma, self.gravity, self.kappa, self.t] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, data) in &self.fields {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        }
        for (_, data) in &self.fields {
            for x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = c.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let dims = (c.u64()? as usize, c.u64()? as usize, c.u64()? as usize);
        let (lx, ly, depth) = (c.f64()?, c.f64()?, c.f64()?);
        let (gamma, gravity, kappa, t) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?);
        let count = c.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = c.u32()? as usize;
            let name = String::from_utf8(c.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("field name is not UTF-8".into()))?;
            table.push((name, c.u64()? as usize));
        }
        let mut fields = Vec::with_capacity(table.len());
        for (name, len) in table {
            let bytes = c.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            fields.push((name, data));
        }
        if c.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - c.pos)));
        }
        Ok(Checkpoint { dims, lx, ly, depth, gamma, gravity, kappa, t, fields })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// State plus the step in use, stored as the one-element field `dt`.
    pub fn from_state(grid: &SlabGrid, cfg: &RunConfig, s: &KappaState, dt: f64) -> Self {
        let flat = |f: &ScalarField| f.iter().copied().collect::<Vec<f64>>();
        let mut fields = Vec::new();
        for (c, n) in ["u1", "u2", "u3"].iter().enumerate() {
            fields.push((n.to_string(), flat(&s.eta.u[c])));
        }
        for (c, n) in ["v1", "v2", "v3"].iter().enumerate() {
            fields.push((n.to_string(), flat(&s.v[c])));
        }
        fields.push(("h_pert".to_string(), flat(&s.h_pert)));
        fields.push(("dt".to_string(), vec![dt]));
        Checkpoint {
            dims: grid.shape(),
            lx: grid.lx,
            ly: grid.ly,
            depth: grid.depth,
            gamma: cfg.gamma,
            gravity: cfg.gravity,
            kappa: cfg.kappa,
            t: s.t,
            fields,
        }
    }

    pub fn grid(&self) -> Result<SlabGrid> {
        SlabGrid::new(self.dims.0, self.dims.1, self.dims.2, self.lx, self.ly, self.depth)
    }

    fn array(&self, name: &str) -> Result<ScalarField> {
        let data = self.field(name).ok_or_else(|| Error::Checkpoint(format!("missing field {name}")))?;
        ScalarField::from_shape_vec(self.dims, data.to_vec())
            .map_err(|_| Error::Checkpoint(format!("field {name} has {} values", data.len())))
    }

    /// Restores the state and the stored step.
    pub fn to_state(&self) -> Result<(KappaState, Option<f64>)> {
        let u = [self.array("u1")?, self.array("u2")?, self.array("u3")?];
        let v = [self.array("v1")?, self.array("v2")?, self.array("v3")?];
        let h_pert = self.array("h_pert")?;
        let dt = self.field("dt").and_then(|d| d.first().copied());
        Ok((KappaState { eta: FlowMap { u, t: self.t }, v, h_pert, t: self.t }, dt))
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let line: Vec<String> = r.values().iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub const CONVERGENCE_HEADER: [&str; 4] = ["n", "sup_diff_energy", "ratio", "wallclock"];

pub fn write_convergence_csv<W: Write>(mut w: W, rows: &[ConvergenceRow]) -> Result<()> {
    writeln!(w, "{}", CONVERGENCE_HEADER.join(","))?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n, fmt_f64(r.sup_diff_energy), fmt_f64(r.ratio), fmt_f64(r.wallclock))?;
    }
    Ok(())
}

/// Header and numeric rows of a CSV written by this module.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config { line: 1, msg: "empty CSV".into() })?;
    let header: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row = l
            .split(',')
            .map(|x| num::<f64>("csv", x.trim(), i + 2))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
