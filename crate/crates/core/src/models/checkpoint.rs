//! Checkpoint file shared by the sequence model and MF.
//!
//! Layout: a `SEERCKPT v1` line, `key=value` metadata lines terminated by a
//! blank line, then repeated tensor blocks — one text line
//! `name rank dim0[,dim1]` followed by raw row-major little-endian f32
//! values. Save→load→predict is bit-identical.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::nn::{CellParams, CellType, Matrix};

use super::{MfModel, ModelError, SeerConfig, SeerModel};

const MAGIC: &str = "SEERCKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Seer(SeerModel),
    Mf(MfModel),
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn bad(path: &Path, what: impl Into<String>) -> ModelError {
    ModelError::BadCheckpoint {
        path: path.display().to_string(),
        what: what.into(),
    }
}

struct TensorWriter<W: Write> {
    out: W,
}

impl<W: Write> TensorWriter<W> {
    fn matrix(&mut self, name: &str, m: &Matrix) -> std::io::Result<()> {
        writeln!(self.out, "{name} 2 {},{}", m.rows, m.cols)?;
        for v in &m.data {
            self.out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn vector(&mut self, name: &str, v: &[f32]) -> std::io::Result<()> {
        writeln!(self.out, "{name} 1 {}", v.len())?;
        for x in v {
            self.out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        match checkpoint {
            Checkpoint::Seer(model) => {
                writeln!(w, "model=seer")?;
                writeln!(w, "cell_type={}", model.config.cell_type)?;
                writeln!(w, "d={}", model.config.latent)?;
                writeln!(w, "layers=1")?;
                writeln!(w, "users={}", model.n_users())?;
                writeln!(w, "songs={}", model.config.n_songs)?;
                writeln!(w, "T={}", model.config.target_steps)?;
                writeln!(w, "seed={}", model.seed)?;
                writeln!(w)?;
                let mut tw = TensorWriter { out: &mut w };
                tw.matrix("user_embedding", &model.user_embedding)?;
                for (gate, name) in model
                    .cell
                    .gates
                    .iter()
                    .zip(model.config.cell_type.gate_names())
                {
                    tw.matrix(&format!("cell.{name}.w_x"), &gate.w_x)?;
                    tw.matrix(&format!("cell.{name}.w_h"), &gate.w_h)?;
                    tw.vector(&format!("cell.{name}.b"), &gate.bias)?;
                }
            }
            Checkpoint::Mf(model) => {
                writeln!(w, "model=mf")?;
                writeln!(w, "cell_type=none")?;
                writeln!(w, "d={}", model.latent())?;
                writeln!(w, "layers=0")?;
                writeln!(w, "users={}", model.user_embedding.rows)?;
                writeln!(w, "songs={}", model.item_embedding.rows)?;
                writeln!(w, "T=0")?;
                writeln!(w, "seed={}", model.seed)?;
                writeln!(w)?;
                let mut tw = TensorWriter { out: &mut w };
                tw.matrix("user_embedding", &model.user_embedding)?;
                tw.matrix("item_embedding", &model.item_embedding)?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| io_err(path, e))
}

struct Reader {
    data: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn line(&mut self) -> Option<String> {
        if self.pos >= self.data.len() {
            return None;
        }
        let rest = &self.data[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        let line = String::from_utf8_lossy(&rest[..end]).into_owned();
        self.pos += end + 1;
        Some(line)
    }

    fn floats(&mut self, count: usize) -> Option<Vec<f32>> {
        let bytes = count * 4;
        if self.pos + bytes > self.data.len() {
            return None;
        }
        let out = self.data[self.pos..self.pos + bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        self.pos += bytes;
        Some(out)
    }
}

type TensorBlock = (String, Vec<usize>, Vec<f32>);

fn read_tensor(r: &mut Reader, path: &Path) -> Result<Option<TensorBlock>, ModelError> {
    let header = match r.line() {
        None => return Ok(None),
        Some(h) if h.trim().is_empty() => return Ok(None),
        Some(h) => h,
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(bad(path, format!("bad tensor header {header:?}")));
    }
    let rank: usize = parts[1].parse().map_err(|_| bad(path, "bad tensor rank"))?;
    let dims: Vec<usize> = parts[2]
        .split(',')
        .map(|d| d.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad(path, "bad tensor dims"))?;
    if dims.len() != rank || rank == 0 || rank > 2 {
        return Err(bad(
            path,
            format!("tensor {header:?} has inconsistent rank"),
        ));
    }
    let count: usize = dims.iter().product();
    let data = r
        .floats(count)
        .ok_or_else(|| bad(path, format!("tensor {} payload truncated", parts[0])))?;
    Ok(Some((parts[0].to_string(), dims, data)))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let data = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut r = Reader { data, pos: 0 };
    match r.line() {
        Some(l) if l == MAGIC => {}
        _ => return Err(bad(path, "not a checkpoint file (bad magic)")),
    }
    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    loop {
        let line = r.line().ok_or_else(|| bad(path, "unterminated metadata"))?;
        if line.trim().is_empty() {
            break;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => return Err(bad(path, format!("bad metadata line {line:?}"))),
        }
    }
    let get = |key: &str| -> Result<&String, ModelError> {
        meta.get(key)
            .ok_or_else(|| bad(path, format!("missing metadata key {key}")))
    };
    let num = |key: &str| -> Result<usize, ModelError> {
        get(key)?
            .parse()
            .map_err(|_| bad(path, format!("bad metadata value for {key}")))
    };

    let mut tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
    while let Some((name, dims, data)) = read_tensor(&mut r, path)? {
        tensors.insert(name, (dims, data));
    }
    fn take_matrix(
        tensors: &mut BTreeMap<String, (Vec<usize>, Vec<f32>)>,
        path: &Path,
        name: &str,
        rows: usize,
        cols: usize,
    ) -> Result<Matrix, ModelError> {
        let (dims, data) = tensors
            .remove(name)
            .ok_or_else(|| bad(path, format!("missing tensor {name}")))?;
        if dims != [rows, cols] {
            return Err(ModelError::DimensionMismatch(format!(
                "tensor {name} is {dims:?}, expected [{rows}, {cols}]"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    let d = num("d")?;
    let users = num("users")?;
    let songs = num("songs")?;
    let seed = num("seed")? as u64;

    match get("model")?.as_str() {
        "seer" => {
            let cell_type: CellType = get("cell_type")?
                .parse()
                .map_err(|e: String| bad(path, e))?;
            let target_steps = num("T")?;
            let user_embedding = take_matrix(&mut tensors, path, "user_embedding", users, d)?;
            let mut cell = CellParams::zeros(cell_type, crate::timeseries::FEATURES, d);
            for (g, name) in cell_type.gate_names().iter().enumerate() {
                cell.gates[g].w_x = take_matrix(
                    &mut tensors,
                    path,
                    &format!("cell.{name}.w_x"),
                    d,
                    crate::timeseries::FEATURES,
                )?;
                cell.gates[g].w_h =
                    take_matrix(&mut tensors, path, &format!("cell.{name}.w_h"), d, d)?;
                let (dims, data) = tensors
                    .remove(&format!("cell.{name}.b"))
                    .ok_or_else(|| bad(path, format!("missing tensor cell.{name}.b")))?;
                if dims != [d] {
                    return Err(ModelError::DimensionMismatch(format!(
                        "tensor cell.{name}.b is {dims:?}, expected [{d}]"
                    )));
                }
                cell.gates[g].bias = data;
            }
            Ok(Checkpoint::Seer(SeerModel {
                user_embedding,
                cell,
                config: SeerConfig {
                    cell_type,
                    latent: d,
                    target_steps,
                    n_songs: songs,
                },
                seed,
            }))
        }
        "mf" => {
            let user_embedding = take_matrix(&mut tensors, path, "user_embedding", users, d)?;
            let item_embedding = take_matrix(&mut tensors, path, "item_embedding", songs, d)?;
            Ok(Checkpoint::Mf(MfModel {
                user_embedding,
                item_embedding,
                seed,
            }))
        }
        other => Err(bad(path, format!("unknown model kind {other:?}"))),
    }
}
