//! Artifact formats: binary network checkpoints, CSV tables and run reports.
//!
//! Checkpoints are little-endian. A network is
//! `"MSPN" | version u32 | first-layer tag u8 | frozen u8 | seed u64 |
//! n_layers u32 | (inputs u32, outputs u32)* | n_params u32 | params f64*`,
//! with parameters in canonical order. A composite solution is
//! `"MSPC" | version u32 | problem (len u32, TOML) | n_stages u32 |
//! (epsilon f64 | stage metadata (len u32, TOML) | network)*`.
//! CSV floats use 17 significant digits so every value round-trips.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::multistage::{
    eval_nodes, residual_field, CompositeSolution, RunConfig, RunOutcome, RunReport, StageInit,
    StageRecord,
};
use crate::network::{FirstLayerKind, Layer, NetworkParams};
use crate::optim::{LbfgsStatus, LossEntry, Phase};
use crate::problems::{Problem, ProblemConfig};
use crate::spectral::{dft2, extract_top_modes_multi, psd_multi, Spectrum};

const NETWORK_MAGIC: &[u8; 4] = b"MSPN";
const COMPOSITE_MAGIC: &[u8; 4] = b"MSPC";
const VERSION: u32 = 1;
/// Upper bound on any length field, to reject corrupt files before allocating.
const MAX_LEN: u32 = 1 << 28;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_len(w: &mut impl Write, n: usize) -> Result<()> {
    let v = u32::try_from(n).map_err(|_| Error::Format(format!("length {n} too large")))?;
    put_u32(w, v)
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_len(r: &mut impl Read, what: &str) -> Result<usize> {
    let v = get_u32(r)?;
    if v > MAX_LEN {
        return Err(Error::Format(format!("implausible {what} length {v}")));
    }
    Ok(v as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn expect_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let found: [u8; 4] = get(r)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn put_text(w: &mut impl Write, s: &str) -> Result<()> {
    put_len(w, s.len())?;
    Ok(w.write_all(s.as_bytes())?)
}

fn get_text(r: &mut impl Read) -> Result<String> {
    let n = get_len(r, "text")?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_network(w: &mut impl Write, net: &NetworkParams) -> Result<()> {
    w.write_all(NETWORK_MAGIC)?;
    put_u32(w, VERSION)?;
    w.write_all(&[net.first_layer_kind().tag(), net.first_layer_frozen() as u8])?;
    w.write_all(&net.seed().to_le_bytes())?;
    put_len(w, net.layers().len())?;
    for layer in net.layers() {
        put_len(w, layer.inputs)?;
        put_len(w, layer.outputs)?;
    }
    let params = net.params();
    put_len(w, params.len())?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_network(r: &mut impl Read) -> Result<NetworkParams> {
    expect_header(r, NETWORK_MAGIC)?;
    let [tag, frozen] = get::<2>(r)?;
    let kind = FirstLayerKind::from_tag(tag)?;
    let frozen = match frozen {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad frozen flag {v}"))),
    };
    let seed = u64::from_le_bytes(get(r)?);
    let n_layers = get_len(r, "layer list")?;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let inputs = get_len(r, "layer input")?;
        let outputs = get_len(r, "layer output")?;
        layers.push(Layer::zeros(inputs, outputs));
    }
    let amplitudes = match (kind, layers.first()) {
        (FirstLayerKind::SpectralEmbedding, Some(l)) => vec![0.0; l.outputs],
        _ => Vec::new(),
    };
    let mut net = NetworkParams::from_parts(layers, kind, amplitudes, seed)?;
    let n = get_len(r, "parameter vector")?;
    if n != net.n_params() {
        return Err(Error::Format(format!(
            "parameter count {n} does not match the layer shapes ({})",
            net.n_params()
        )));
    }
    let params = (0..n).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    net.set_params(&params)?;
    Ok(net.with_frozen_first_layer(frozen))
}

#[derive(Serialize, Deserialize)]
struct StageMeta {
    index: usize,
    seed: u64,
    init: StageInit,
    initial_loss: f64,
    final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lbfgs_status: Option<LbfgsStatus>,
}

#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    problem: ProblemConfig,
}

/// A composite solution together with the problem it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub problem: ProblemConfig,
    pub solution: CompositeSolution,
}

impl Checkpoint {
    /// Reject use with a different problem than the one it was trained on.
    pub fn check_problem(&self, problem: &dyn Problem) -> Result<()> {
        let own = self.problem.as_problem();
        if own.name() != problem.name() || own.n_components() != problem.n_components() {
            return Err(Error::InvalidArgument(format!(
                "checkpoint was trained on {}, not {}",
                own.name(),
                problem.name()
            )));
        }
        if self.solution.output_dim() != problem.n_components() {
            return Err(Error::InvalidArgument(format!(
                "checkpoint has {} outputs, {} needs {}",
                self.solution.output_dim(),
                problem.name(),
                problem.n_components()
            )));
        }
        Ok(())
    }
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Format(e.to_string()))
}

fn from_toml<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    toml::from_str(s).map_err(|e| Error::Format(e.to_string()))
}

/// Loss histories are not stored; they live in the per-stage CSVs.
pub fn write_checkpoint(w: &mut impl Write, problem: &ProblemConfig, sol: &CompositeSolution) -> Result<()> {
    w.write_all(COMPOSITE_MAGIC)?;
    put_u32(w, VERSION)?;
    put_text(w, &to_toml(&ProblemDoc { problem: problem.clone() })?)?;
    put_len(w, sol.stages().len())?;
    for s in sol.stages() {
        w.write_all(&s.epsilon.to_le_bytes())?;
        let meta = StageMeta {
            index: s.index,
            seed: s.seed,
            init: s.init.clone(),
            initial_loss: s.initial_loss,
            final_loss: s.final_loss,
            lbfgs_status: s.lbfgs_status,
        };
        put_text(w, &to_toml(&meta)?)?;
        write_network(w, &s.network)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    expect_header(r, COMPOSITE_MAGIC)?;
    let ProblemDoc { problem } = from_toml(&get_text(r)?)?;
    problem.validate()?;
    let n = get_len(r, "stage list")?;
    let mut stages = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let epsilon = get_f64(r)?;
        let meta: StageMeta = from_toml(&get_text(r)?)?;
        let network = read_network(r)?;
        stages.push(StageRecord {
            index: meta.index,
            network,
            epsilon,
            seed: meta.seed,
            init: meta.init,
            history: Vec::new(),
            initial_loss: meta.initial_loss,
            final_loss: meta.final_loss,
            lbfgs_status: meta.lbfgs_status,
        });
    }
    let solution = CompositeSolution::from_stages(stages)?;
    let ckpt = Checkpoint { problem, solution };
    ckpt.check_problem(ckpt.problem.as_problem())?;
    Ok(ckpt)
}

pub fn save_checkpoint(path: &Path, problem: &ProblemConfig, sol: &CompositeSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, problem, sol)?;
    Ok(w.flush()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

pub fn save_network(path: &Path, net: &NetworkParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(&mut w, net)?;
    Ok(w.flush()?)
}

pub fn load_network(path: &Path) -> Result<NetworkParams> {
    read_network(&mut BufReader::new(File::open(path)?))
}

/// 17 significant digits; integers-valued floats stay exact too.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// A CSV table with a header row; empty cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Format(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column {name:?}")))
    }

    /// Cell `(row, column)` parsed as a float; empty cells give `None`.
    pub fn number(&self, row: usize, name: &str) -> Result<Option<f64>> {
        let cell = &self.rows[row][self.column(name)?];
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("bad number {cell:?} in column {name:?}")))
    }

    pub fn write(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            out.write_record(row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let header = input.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut table = Table::new(header);
        for rec in input.records() {
            let rec = rec.map_err(csv_err)?;
            table.push(rec.iter().map(String::from).collect())?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

pub fn loss_table(history: &[LossEntry]) -> Table {
    let mut t = Table::new(vec!["step".into(), "phase".into(), "loss".into()]);
    for e in history {
        t.rows
            .push(vec![e.step.to_string(), e.phase.as_str().into(), fmt_f64(e.loss)]);
    }
    t
}

pub fn parse_loss_table(t: &Table) -> Result<Vec<LossEntry>> {
    let (s, p, l) = (t.column("step")?, t.column("phase")?, t.column("loss")?);
    t.rows
        .iter()
        .map(|row| {
            let phase = match row[p].as_str() {
                "adam" => Phase::Adam,
                "lbfgs" => Phase::Lbfgs,
                other => return Err(Error::Format(format!("unknown phase {other:?}"))),
            };
            Ok(LossEntry {
                step: row[s].parse().map_err(|_| Error::Format(format!("bad step {:?}", row[s])))?,
                phase,
                loss: row[l].parse().map_err(|_| Error::Format(format!("bad loss {:?}", row[l])))?,
            })
        })
        .collect()
}

/// Composite and reference values on the inclusive evaluation grid:
/// coordinates, solution components, then `<component>_ref` columns.
pub fn solution_table(sol: &CompositeSolution, problem: &dyn Problem, resolution: [usize; 2]) -> Result<Table> {
    let nodes = eval_nodes(problem, resolution);
    let values = sol.values(&nodes)?;
    let outs = problem.n_components();
    let mut header: Vec<String> = problem.coordinates().iter().map(|c| c.to_string()).collect();
    header.extend(problem.components().iter().map(|c| c.to_string()));
    header.extend(problem.components().iter().map(|c| format!("{c}_ref")));
    let mut t = Table::new(header);
    for (x, u) in nodes.chunks_exact(2).zip(values.chunks_exact(outs)) {
        let reference = problem.reference([x[0], x[1]])?;
        let row = x.iter().chain(u).chain(&reference).map(|v| fmt_f64(*v)).collect();
        t.push(row)?;
    }
    Ok(t)
}

/// Reference field alone on the inclusive grid.
pub fn reference_table(problem: &dyn Problem, resolution: [usize; 2]) -> Result<Table> {
    let nodes = eval_nodes(problem, resolution);
    let mut header: Vec<String> = problem.coordinates().iter().map(|c| c.to_string()).collect();
    header.extend(problem.components().iter().map(|c| c.to_string()));
    let mut t = Table::new(header);
    for x in nodes.chunks_exact(2) {
        let reference = problem.reference([x[0], x[1]])?;
        t.push(x.iter().chain(&reference).map(|v| fmt_f64(*v)).collect())?;
    }
    Ok(t)
}

/// Residual spectrum of a composite: one `grid` row per node/bin `(i, j)`
/// with the residual at node `(x_i, y_j)` and the DFT coefficient, PSD and
/// cyclic frequency of bin `(i, j)`, followed by one `mode` row per dominant
/// (non-redundant) mode with its cyclic frequency, physical amplitude and phase.
pub fn spectrum_table(
    sol: &CompositeSolution,
    problem: &dyn Problem,
    resolution: [usize; 2],
    n_modes: usize,
) -> Result<Table> {
    let fields = residual_field(sol, problem, resolution)?;
    let spectra: Vec<Spectrum> = fields.iter().map(dft2).collect();
    let power = psd_multi(&spectra)?;
    let names: Vec<String> = if fields.len() == 1 {
        vec![String::new()]
    } else {
        problem.components().iter().map(|c| format!("_{c}")).collect()
    };
    let mut header: Vec<String> = ["kind", "i", "j", "x", "y", "k_x", "k_y"].map(String::from).into();
    for prefix in ["residual", "amplitude", "phase"] {
        header.extend(names.iter().map(|n| format!("{prefix}{n}")));
    }
    header.extend(["power", "mode_amplitude", "mode_phase"].map(String::from));
    let mut t = Table::new(header);
    let [nx, ny] = resolution;
    for i in 0..nx {
        for j in 0..ny {
            let f = spectra[0].cyclic_frequency(i, j);
            let mut row = vec![
                "grid".into(),
                i.to_string(),
                j.to_string(),
                fmt_f64(fields[0].x(i)),
                fmt_f64(fields[0].y(j)),
                fmt_f64(f[0]),
                fmt_f64(f[1]),
            ];
            row.extend(fields.iter().map(|g| fmt_f64(g.get(i, j))));
            row.extend(spectra.iter().map(|s| fmt_f64(s.amplitude(i, j))));
            row.extend(spectra.iter().map(|s| fmt_f64(s.phase(i, j))));
            row.extend([fmt_f64(power.get(i, j)), String::new(), String::new()]);
            t.push(row)?;
        }
    }
    if n_modes > 0 && power.total() > 0.0 {
        let modes = extract_top_modes_multi(&spectra, n_modes)?;
        for (rank, m) in modes.modes.iter().enumerate() {
            let tau = std::f64::consts::TAU;
            let mut row = vec![
                "mode".into(),
                rank.to_string(),
                String::new(),
                String::new(),
                String::new(),
                fmt_f64(m.frequency[0] / tau),
                fmt_f64(m.frequency[1] / tau),
            ];
            row.extend(std::iter::repeat(String::new()).take(3 * fields.len() + 1));
            row.extend([fmt_f64(m.alpha * modes.scale), fmt_f64(m.phase)]);
            t.push(row)?;
        }
    }
    Ok(t)
}

pub fn save_report(path: &Path, report: &RunReport) -> Result<()> {
    std::fs::write(path, report.to_toml()?)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    from_toml(&std::fs::read_to_string(path)?)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let cfg: RunConfig = from_toml(&std::fs::read_to_string(path)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Write every artifact of a finished run into `dir` (which must exist) and
/// record the checkpoint paths in the returned report.
pub fn write_run_artifacts(dir: &Path, outcome: &RunOutcome) -> Result<RunReport> {
    let cfg = &outcome.report.config;
    let problem = cfg.problem.as_problem();
    let sol = &outcome.solution;
    let mut report = outcome.report.clone();
    let mut checkpoints = Vec::new();
    for s in sol.stages() {
        loss_table(&s.history).save(&dir.join(format!("stage_{}_loss.csv", s.index)))?;
        let name = format!("stage_{}.net", s.index);
        save_network(&dir.join(&name), &s.network)?;
        checkpoints.push(name);
    }
    save_checkpoint(&dir.join("solution.ckpt"), &cfg.problem, sol)?;
    checkpoints.push("solution.ckpt".into());
    solution_table(sol, problem, cfg.eval_grid)?.save(&dir.join("solution_grid.csv"))?;
    let n_modes = cfg.init_for(cfg.correction_stages()).features;
    spectrum_table(sol, problem, cfg.spectrum_grid, n_modes)?.save(&dir.join("residual_spectrum.csv"))?;
    std::fs::write(dir.join("config.toml"), to_toml(cfg)?)?;
    report.checkpoints = checkpoints;
    save_report(&dir.join("report.toml"), &report)?;
    Ok(report)
}

/// Every file written by [`write_run_artifacts`] for a run with `n_stages` stages.
pub fn artifact_names(n_stages: usize) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for i in 0..n_stages {
        out.push(format!("stage_{i}_loss.csv").into());
        out.push(format!("stage_{i}.net").into());
    }
    for f in ["solution.ckpt", "solution_grid.csv", "residual_spectrum.csv", "config.toml", "report.toml"] {
        out.push(f.into());
    }
    out
}
