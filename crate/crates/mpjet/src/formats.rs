//! Binary snapshot, ROM and checkpoint files plus the CSV exports.
//!
//! All binary formats are little-endian and start with a four-byte magic
//! followed by a `u32` version.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mpjet_core::field::{Grid2D, ScalingParams, SnapshotMatrix};
use mpjet_core::hodmd::{DmdMode, HodmdResult, ModeRow, Rom};
use mpjet_core::metrics::ErrorSeries;
use mpjet_core::neural::{Activation, ArchKind, ArchSpec, LayerSpec, ModelParams, TrainReport};
use num_complex::Complex64;

use crate::error::{AppError, AppResult};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"MPJF";
pub const ROM_MAGIC: &[u8; 4] = b"MPJR";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPJN";
pub const VERSION: u32 = 1;

/// Formats a float with 17 significant digits (round-trips exactly).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(magic);
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.0.reserve(vs.len() * 8);
        vs.iter().for_each(|v| self.f64(*v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4]) -> AppResult<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(AppError::Format {
                path: path.into(),
                reason: format!("expected magic {:?}", String::from_utf8_lossy(magic)),
            });
        }
        let mut r = Reader { bytes, pos: 4, path };
        let version = r.u32()?;
        if version != VERSION {
            return Err(AppError::Format { path: path.into(), reason: format!("unsupported version {version}") });
        }
        Ok(r)
    }

    fn corrupt(&self, reason: impl Into<String>) -> AppError {
        AppError::Corrupt { path: self.path.into(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> AppResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.corrupt(format!("truncated at byte {} (needed {n} more)", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> AppResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> AppResult<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> AppResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> AppResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> AppResult<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| self.corrupt("length overflow"))?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(&self) -> AppResult<()> {
        if self.pos != self.bytes.len() {
            return Err(self.corrupt(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn grid_of(r: &Reader, nx: usize, ny: usize) -> AppResult<Grid2D> {
    Grid2D::new(nx, ny).map_err(|e| r.corrupt(e.to_string()))
}

/// Reads a whole file; a missing file names the command that produces it.
pub fn read_input(path: &Path, producer: &'static str) -> AppResult<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(AppError::Missing { path: path.into(), producer }),
        Err(e) => Err(AppError::io(path, e)),
    }
}

pub fn encode_snapshots(v: &SnapshotMatrix) -> Vec<u8> {
    let mut w = Writer::new(SNAPSHOT_MAGIC);
    w.usize(v.grid().nx);
    w.usize(v.grid().ny);
    w.usize(v.k());
    w.f64(v.dt());
    w.f64s(v.data());
    w.0
}

pub fn decode_snapshots(bytes: &[u8], path: &Path) -> AppResult<SnapshotMatrix> {
    let mut r = Reader::open(bytes, path, SNAPSHOT_MAGIC)?;
    let (nx, ny, k) = (r.usize()?, r.usize()?, r.usize()?);
    let dt = r.f64()?;
    let grid = grid_of(&r, nx, ny)?;
    let count = grid.len().checked_mul(k).ok_or_else(|| r.corrupt("size overflow"))?;
    let expected = count * 8;
    let available = bytes.len() - r.pos;
    if available != expected {
        return Err(r.corrupt(format!(
            "header declares {k} snapshots of {} values ({expected} bytes), payload has {available} bytes",
            grid.len()
        )));
    }
    let data = r.f64s(count)?;
    r.finish()?;
    SnapshotMatrix::new(grid, k, dt, data).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

pub fn read_snapshots(path: &Path, producer: &'static str) -> AppResult<SnapshotMatrix> {
    decode_snapshots(&read_input(path, producer)?, path)
}

/// Snapshot export with one row per grid value; `t` is the sample time.
pub fn snapshots_csv(v: &SnapshotMatrix) -> String {
    let g = v.grid();
    let mut s = String::from("t,i,j,value\n");
    for k in 0..v.k() {
        let t = fmt_f64(k as f64 * v.dt());
        for j in 0..g.ny {
            for i in 0..g.nx {
                let _ = writeln!(s, "{t},{i},{j},{}", fmt_f64(v.get(i, j, k)));
            }
        }
    }
    s
}

pub fn encode_rom(rom: &Rom) -> Vec<u8> {
    let res = &rom.result;
    let mut w = Writer::new(ROM_MAGIC);
    w.usize(res.grid.nx);
    w.usize(res.grid.ny);
    w.usize(res.spatial_complexity);
    w.usize(res.modes.len());
    w.f64(rom.dt);
    w.f64(res.t0);
    for m in &res.modes {
        w.f64(m.amplitude);
        w.f64(m.phase);
        w.f64(m.growth_rate);
        w.f64(m.frequency);
        for z in &m.spatial {
            w.f64(z.re);
            w.f64(z.im);
        }
    }
    w.0
}

pub fn decode_rom(bytes: &[u8], path: &Path) -> AppResult<Rom> {
    let mut r = Reader::open(bytes, path, ROM_MAGIC)?;
    let (nx, ny, n, m) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let (dt, t0) = (r.f64()?, r.f64()?);
    let grid = grid_of(&r, nx, ny)?;
    let per_mode = (4 + 2 * grid.len()) * 8;
    if bytes.len() - r.pos != m * per_mode {
        return Err(r.corrupt(format!("header declares {m} modes, payload size disagrees")));
    }
    let mut modes = Vec::with_capacity(m);
    for _ in 0..m {
        let (amplitude, phase, growth_rate, frequency) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let raw = r.f64s(2 * grid.len())?;
        let spatial = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        modes.push(DmdMode { spatial, amplitude, growth_rate, frequency, phase });
    }
    r.finish()?;
    let result = HodmdResult { grid, modes, spatial_complexity: n, t0 };
    Rom::new(result, dt).map_err(|e| r.corrupt(e.to_string()))
}

fn layer_tag(l: &LayerSpec) -> u32 {
    match l {
        LayerSpec::Lstm { .. } => 0,
        LayerSpec::Dense { .. } => 1,
        LayerSpec::Conv3d { .. } => 2,
        LayerSpec::MaxPool3d { .. } => 3,
        LayerSpec::BatchNorm { .. } => 4,
        LayerSpec::Flatten => 5,
    }
}

fn encode_arch(w: &mut Writer, arch: &ArchSpec) {
    w.u32(match arch.kind {
        ArchKind::Rnn => 0,
        ArchKind::Cnn => 1,
    });
    w.usize(arch.q);
    w.usize(arch.grid.nx);
    w.usize(arch.grid.ny);
    w.usize(arch.horizon);
    w.usize(arch.layers.len());
    for l in &arch.layers {
        w.u32(layer_tag(l));
        match *l {
            LayerSpec::Lstm { units } => w.usize(units),
            LayerSpec::Dense { units, activation } => {
                w.usize(units);
                w.u32(activation.code());
            }
            LayerSpec::Conv3d { kernel, filters, activation } => {
                kernel.iter().for_each(|k| w.usize(*k));
                w.usize(filters);
                w.u32(activation.code());
            }
            LayerSpec::MaxPool3d { pool } => pool.iter().for_each(|p| w.usize(*p)),
            LayerSpec::BatchNorm { momentum, epsilon } => {
                w.f64(momentum);
                w.f64(epsilon);
            }
            LayerSpec::Flatten => {}
        }
    }
}

fn decode_arch(r: &mut Reader) -> AppResult<ArchSpec> {
    let kind = match r.u32()? {
        0 => ArchKind::Rnn,
        1 => ArchKind::Cnn,
        other => return Err(r.corrupt(format!("unknown architecture kind {other}"))),
    };
    let (q, nx, ny, horizon, count) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let grid = grid_of(r, nx, ny)?;
    let activation = |r: &mut Reader| -> AppResult<Activation> {
        let code = r.u32()?;
        Activation::from_code(code).ok_or_else(|| r.corrupt(format!("unknown activation {code}")))
    };
    let mut layers = Vec::new();
    for _ in 0..count {
        let layer = match r.u32()? {
            0 => LayerSpec::Lstm { units: r.usize()? },
            1 => LayerSpec::Dense { units: r.usize()?, activation: activation(r)? },
            2 => {
                let kernel = [r.usize()?, r.usize()?, r.usize()?];
                LayerSpec::Conv3d { kernel, filters: r.usize()?, activation: activation(r)? }
            }
            3 => LayerSpec::MaxPool3d { pool: [r.usize()?, r.usize()?, r.usize()?] },
            4 => LayerSpec::BatchNorm { momentum: r.f64()?, epsilon: r.f64()? },
            5 => LayerSpec::Flatten,
            other => return Err(r.corrupt(format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    ArchSpec::new(kind, q, grid, horizon, layers).map_err(|e| r.corrupt(e.to_string()))
}

/// Architecture, then trainable tensors and BatchNorm running statistics in
/// declaration order.
pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    encode_arch(&mut w, params.arch());
    w.u64(params.weights().len() as u64);
    w.u64(params.buffers().len() as u64);
    w.f64s(params.weights());
    w.f64s(params.buffers());
    w.0
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> AppResult<ModelParams> {
    let mut r = Reader::open(bytes, path, CHECKPOINT_MAGIC)?;
    let arch = decode_arch(&mut r)?;
    let (nw, nb) = (r.u64()? as usize, r.u64()? as usize);
    if nw != arch.param_count() || nb != arch.buffer_count() {
        return Err(r.corrupt("tensor sizes do not match the architecture"));
    }
    let weights = r.f64s(nw)?;
    let buffers = r.f64s(nb)?;
    r.finish()?;
    ModelParams::from_parts(arch, weights, buffers).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

pub fn mode_csv(rows: &[ModeRow]) -> String {
    let mut s = String::from("m,amp_norm,amplitude,delta,omega,strouhal,phase\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.m,
            fmt_f64(r.amp_norm),
            fmt_f64(r.amplitude),
            fmt_f64(r.delta),
            fmt_f64(r.omega),
            fmt_f64(r.strouhal),
            fmt_f64(r.phase)
        );
    }
    s
}

pub fn train_report_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for e in &report.history {
        let _ = writeln!(s, "{},{},{}", e.epoch, fmt_f64(e.train_loss), fmt_f64(e.val_loss));
    }
    s
}

/// One row per window (`t` is the sample index of the first predicted
/// snapshot) followed by a `mean` row.
pub fn evaluation_csv(t: &[usize], errors: &ErrorSeries) -> String {
    let mut s = String::from("t,rrmse\n");
    for (t, e) in t.iter().zip(&errors.values) {
        let _ = writeln!(s, "{t},{}", fmt_f64(*e));
    }
    let _ = writeln!(s, "mean,{}", fmt_f64(errors.mean()));
    s
}

pub fn scaling_csv(s: &ScalingParams) -> String {
    format!("min,max\n{},{}\n", fmt_f64(s.min), fmt_f64(s.max))
}

pub fn parse_scaling_csv(text: &str, path: &Path) -> AppResult<ScalingParams> {
    let corrupt = |reason: &str| AppError::Corrupt { path: path.into(), reason: reason.into() };
    let mut lines = text.lines();
    if lines.next() != Some("min,max") {
        return Err(AppError::Format { path: path.into(), reason: "expected header `min,max`".into() });
    }
    let row = lines.next().ok_or_else(|| corrupt("missing values row"))?;
    let (a, b) = row.split_once(',').ok_or_else(|| corrupt("expected two values"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|_| corrupt("unparsable value"));
    ScalingParams::new(parse(a)?, parse(b)?).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

/// Reads the `mean` row of an evaluation CSV.
pub fn parse_evaluation_mean(text: &str) -> Option<f64> {
    text.lines().find_map(|l| l.strip_prefix("mean,")).and_then(|v| v.trim().parse().ok())
}
