//! Run-directory artifacts: configuration files, binary checkpoints, the
//! diagnostics CSV, mesh dumps and the manifest.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.txt
//! diagnostics.csv
//! checkpoints/ckpt_<t>.bin
//! meshes/mesh_<t>.txt
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread::JoinHandle;

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::fields::{FieldGrid, Parity};
use crate::meshmap::{dump_map, parse_map_dump, Mesh2};
use crate::stepper::{Observer, RunConfig, RunSummary, State, StepReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("csv {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("output thread terminated unexpectedly")]
    WriterGone,
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_owned(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_owned(), msg: msg.into() }
}

/// Parses a run configuration (TOML key-value text).
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, IoError> {
    toml::from_str(text).map_err(|e| IoError::Config { path: path.to_owned(), msg: e.to_string() })
}

pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_config(&text, path)
}

/// Time tag used in artifact file names.
pub fn time_tag(t: f64) -> String {
    format!("{t:.12e}")
}

const CHECKPOINT_MAGIC: &str = "axisym-checkpoint 1";
const END_HEADER: &[u8] = b"END_HEADER\n";

/// Text header with the time and both mesh maps, then `u1` and `w1` as
/// little-endian `f64` in row-major `(n + 1) x (m + 1)` order.
pub fn encode_checkpoint(state: &State) -> Vec<u8> {
    let mut out = format!(
        "{CHECKPOINT_MAGIC}\nt {:?}\nr-map\n{}z-map\n{}",
        state.t,
        dump_map(&state.mesh.r),
        dump_map(&state.mesh.z)
    )
    .into_bytes();
    out.extend_from_slice(END_HEADER);
    for f in [&state.u1, &state.w1] {
        for v in f.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<State, IoError> {
    let split = bytes
        .windows(END_HEADER.len())
        .position(|w| w == END_HEADER)
        .ok_or_else(|| format_err(path, "no END_HEADER line"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|e| format_err(path, e.to_string()))?;
    let body = &bytes[split + END_HEADER.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(format_err(path, "not a checkpoint"));
    }
    let t: f64 = lines
        .next()
        .and_then(|l| l.strip_prefix("t "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format_err(path, "bad time line"))?;
    let rest: Vec<&str> = lines.collect();
    let mut maps = Vec::with_capacity(2);
    let mut at = 0;
    for label in ["r-map", "z-map"] {
        if rest.get(at) != Some(&label) {
            return Err(format_err(path, format!("expected `{label}`")));
        }
        let text = rest[at + 1..].join("\n");
        let (map, used) = parse_map_dump(&text).map_err(|e| format_err(path, e))?;
        maps.push(map);
        at += 1 + used;
    }
    let z = maps.pop().expect("two maps");
    let r = maps.pop().expect("two maps");
    let mesh = Mesh2::new(r, z);
    let (n, m) = (mesh.n(), mesh.m());
    let count = (n + 1) * (m + 1);
    if body.len() != 16 * count {
        return Err(format_err(path, format!("payload has {} bytes, expected {}", body.len(), 16 * count)));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut grid = || {
        let v: Vec<f64> = values.by_ref().take(count).collect();
        let a = Array2::from_shape_vec((n + 1, m + 1), v).expect("payload size checked");
        FieldGrid::new(a, Parity::Even, Parity::Odd)
    };
    let u1 = grid();
    let w1 = grid();
    Ok(State { t, u1, w1, mesh })
}

pub fn save_checkpoint(path: &Path, state: &State) -> Result<(), IoError> {
    fs::write(path, encode_checkpoint(state)).map_err(file_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<State, IoError> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(file_err(path))?;
    decode_checkpoint(&bytes, path)
}

/// Both maps of a mesh as plain text.
pub fn dump_mesh(mesh: &Mesh2) -> String {
    format!("r-map\n{}z-map\n{}", dump_map(&mesh.r), dump_map(&mesh.z))
}

/// Formats a serializable row with every float at 17 significant digits.
fn csv_line<T: Serialize>(row: &T, header: bool) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    let mut lines = text.lines();
    let head = if header { lines.next().map(str::to_owned) } else { None };
    let body = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(|cell| match cell.parse::<f64>() {
            Ok(x) => format!("{x:.16e}"),
            Err(_) => cell.to_owned(),
        })
        .collect::<Vec<_>>()
        .join(",");
    Ok(match head {
        Some(h) => format!("{h}\n{body}\n"),
        None => format!("{body}\n"),
    })
}

/// Appends diagnostics records to a CSV file, writing the header first.
pub struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
    rows: usize,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let out = BufWriter::new(File::create(path).map_err(file_err(path))?);
        Ok(CsvSink { path: path.to_owned(), out, rows: 0 })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<(), IoError> {
        let line = csv_line(rec, self.rows == 0).map_err(|source| IoError::Csv { path: self.path.clone(), source })?;
        self.out.write_all(line.as_bytes()).map_err(file_err(&self.path))?;
        self.rows += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.out.flush().map_err(file_err(&self.path))
    }
}

/// Reads `(t, column)` from a diagnostics CSV, keeping only rows whose time
/// strictly exceeds the previous kept row (a resumed run may repeat times).
pub fn read_series(path: &Path, column: &str) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_owned(), source };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| format_err(path, format!("no column `{name}`")))
    };
    let (it, iv) = (find("t")?, find(column)?);
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let num = |k: usize| {
            row.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| format_err(path, format!("row {}: bad number in column {k}", line + 2)))
        };
        let (tt, vv) = (num(it)?, num(iv)?);
        if t.last().is_none_or(|&last| tt > last) {
            t.push(tt);
            v.push(vv);
        }
    }
    Ok((t, v))
}

enum Msg {
    Record(Box<DiagnosticsRecord>),
    Checkpoint(Box<State>),
    Mesh(f64, Mesh2),
}

/// Observer that hands run output to a background thread writing the run
/// directory, so the solver never blocks on disk for long.
pub struct RunWriter {
    dir: PathBuf,
    tx: Option<SyncSender<Msg>>,
    handle: Option<JoinHandle<Result<Vec<String>, IoError>>>,
    failed: bool,
}

// Bounds memory held by queued checkpoints.
const QUEUE_DEPTH: usize = 8;

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self, IoError> {
        for sub in ["checkpoints", "meshes"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(file_err(&p))?;
        }
        let csv = CsvSink::create(&dir.join("diagnostics.csv"))?;
        let (tx, rx) = mpsc::sync_channel(QUEUE_DEPTH);
        let root = dir.to_owned();
        let handle = std::thread::Builder::new()
            .name("run-writer".into())
            .spawn(move || writer_loop(&root, csv, rx))
            .map_err(file_err(dir))?;
        Ok(RunWriter { dir: dir.to_owned(), tx: Some(tx), handle: Some(handle), failed: false })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn send(&mut self, msg: Msg) {
        if let Some(tx) = &self.tx {
            if tx.send(msg).is_err() && !self.failed {
                self.failed = true;
                log::error!("run writer stopped; further output is dropped");
            }
        }
    }

    /// Drains the queue and returns the files written, relative to the run directory.
    pub fn finish(mut self) -> Result<Vec<String>, IoError> {
        self.tx.take();
        self.handle.take().expect("joined once").join().map_err(|_| IoError::WriterGone)?
    }
}

fn writer_loop(root: &Path, mut csv: CsvSink, rx: Receiver<Msg>) -> Result<Vec<String>, IoError> {
    let mut files = vec!["diagnostics.csv".to_owned()];
    for msg in rx {
        match msg {
            Msg::Record(r) => csv.write(&r)?,
            Msg::Checkpoint(s) => {
                let rel = format!("checkpoints/ckpt_{}.bin", time_tag(s.t));
                save_checkpoint(&root.join(&rel), &s)?;
                files.push(rel);
            }
            Msg::Mesh(t, mesh) => {
                let rel = format!("meshes/mesh_{}.txt", time_tag(t));
                let p = root.join(&rel);
                fs::write(&p, dump_mesh(&mesh)).map_err(file_err(&p))?;
                files.push(rel);
            }
        }
    }
    csv.flush()?;
    files.dedup();
    Ok(files)
}

impl Observer for RunWriter {
    fn record(&mut self, record: &DiagnosticsRecord) {
        self.send(Msg::Record(Box::new(record.clone())));
    }

    fn checkpoint(&mut self, state: &State) {
        self.send(Msg::Checkpoint(Box::new(state.clone())));
    }

    fn mesh(&mut self, t: f64, mesh: &Mesh2) {
        self.send(Msg::Mesh(t, mesh.clone()));
    }

    fn step(&mut self, report: &StepReport, _state: &State) {
        log::debug!("t = {:.6e} dt = {:.3e} ({:?})", report.t, report.dt, report.branch);
    }
}

/// Run outcome as echoed in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryEcho {
    pub halt: String,
    pub steps: usize,
    pub mesh_updates: usize,
    pub rlpf_calls: usize,
    pub records: usize,
    pub t_final: f64,
    pub nu_identically_zero: bool,
    pub threads: usize,
}

impl SummaryEcho {
    pub fn new(summary: &RunSummary, nu_identically_zero: bool) -> Self {
        SummaryEcho {
            halt: summary.halt.to_string(),
            steps: summary.steps,
            mesh_updates: summary.mesh_updates,
            rlpf_calls: summary.rlpf_calls,
            records: summary.records,
            t_final: summary.state.t,
            nu_identically_zero,
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifacts {
    pub files: Vec<String>,
}

/// Manifest of a run directory: configuration echo, outcome and file list.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub summary: SummaryEcho,
    pub artifacts: Artifacts,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest fields serialize")
    }

    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        let p = dir.join("manifest.txt");
        fs::write(&p, self.to_text()).map_err(file_err(&p))
    }
}
