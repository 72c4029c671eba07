//! Minimal dense numerics for the sequence model: row-major f32 matrices,
//! RNN/GRU/LSTM cells with reverse-mode gradients through time, and Adam.
//!
//! Everything is 32-bit with fixed summation order, so identical seeds and
//! data order give bit-identical parameters.

mod adam;
mod cell;

pub use adam::{clip_global_norm, AdamHyperParams, AdamState};
pub use cell::{backward, cell_step, sequence_forward, sequence_forward_cached, Trace};

use std::fmt;

use rand::Rng;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform(rows: usize, cols: usize, limit: f32, rng: &mut impl Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| rng.gen_range(-limit..limit))
                .collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self · v`.
    pub fn matvec(&self, v: &[f32], out: &mut [f32]) {
        assert_eq!(v.len(), self.cols, "matvec width mismatch");
        assert_eq!(out.len(), self.rows, "matvec height mismatch");
        for (r, slot) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0f32;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            *slot = acc;
        }
    }

    /// `out += self · v`.
    pub fn matvec_add(&self, v: &[f32], out: &mut [f32]) {
        assert_eq!(v.len(), self.cols, "matvec width mismatch");
        assert_eq!(out.len(), self.rows, "matvec height mismatch");
        for (r, slot) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0f32;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            *slot += acc;
        }
    }

    /// `out += selfᵀ · v`.
    pub fn matvec_t_add(&self, v: &[f32], out: &mut [f32]) {
        assert_eq!(v.len(), self.rows, "transposed matvec height mismatch");
        assert_eq!(out.len(), self.cols, "transposed matvec width mismatch");
        for (r, &vr) in v.iter().enumerate() {
            let row = self.row(r);
            for (slot, a) in out.iter_mut().zip(row) {
                *slot += a * vr;
            }
        }
    }

    /// Rank-one update `self += u · vᵀ`.
    pub fn add_outer(&mut self, u: &[f32], v: &[f32]) {
        assert_eq!(u.len(), self.rows, "outer height mismatch");
        assert_eq!(v.len(), self.cols, "outer width mismatch");
        for (r, &ur) in u.iter().enumerate() {
            let row = &mut self.data[r * v.len()..(r + 1) * v.len()];
            for (slot, &vc) in row.iter_mut().zip(v) {
                *slot += ur * vc;
            }
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellType {
    Rnn,
    Gru,
    Lstm,
}

impl CellType {
    pub fn gate_count(&self) -> usize {
        match self {
            CellType::Rnn => 1,
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }

    /// Gate order used everywhere: RNN `[h]`, GRU `[r, z, n]`
    /// (reset, update, candidate), LSTM `[i, f, g, o]`.
    pub fn gate_names(&self) -> &'static [&'static str] {
        match self {
            CellType::Rnn => &["h"],
            CellType::Gru => &["r", "z", "n"],
            CellType::Lstm => &["i", "f", "g", "o"],
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellType::Rnn => "rnn",
            CellType::Gru => "gru",
            CellType::Lstm => "lstm",
        })
    }
}

impl std::str::FromStr for CellType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(CellType::Rnn),
            "gru" => Ok(CellType::Gru),
            "lstm" => Ok(CellType::Lstm),
            other => Err(format!(
                "unknown cell type {other:?} (expected rnn, gru or lstm)"
            )),
        }
    }
}

/// Weights for one gate: input projection, recurrent projection, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Vec<f32>,
}

/// Full cell parameterization; see [`CellType::gate_names`] for gate order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub cell_type: CellType,
    pub input_size: usize,
    pub hidden_size: usize,
    pub gates: Vec<GateParams>,
}

pub const INIT_WEIGHT_LIMIT: f32 = 0.05;

impl CellParams {
    /// Uniform(−0.05, 0.05) weights, zero biases; the LSTM forget gate bias
    /// starts at +1.0.
    pub fn init(
        cell_type: CellType,
        input_size: usize,
        hidden_size: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let gates = (0..cell_type.gate_count())
            .map(|g| {
                let mut bias = vec![0.0f32; hidden_size];
                if cell_type == CellType::Lstm && g == 1 {
                    bias.iter_mut().for_each(|b| *b = 1.0);
                }
                GateParams {
                    w_x: Matrix::uniform(hidden_size, input_size, INIT_WEIGHT_LIMIT, rng),
                    w_h: Matrix::uniform(hidden_size, hidden_size, INIT_WEIGHT_LIMIT, rng),
                    bias,
                }
            })
            .collect();
        CellParams {
            cell_type,
            input_size,
            hidden_size,
            gates,
        }
    }

    pub fn zeros(cell_type: CellType, input_size: usize, hidden_size: usize) -> Self {
        let gates = (0..cell_type.gate_count())
            .map(|_| GateParams {
                w_x: Matrix::zeros(hidden_size, input_size),
                w_h: Matrix::zeros(hidden_size, hidden_size),
                bias: vec![0.0; hidden_size],
            })
            .collect();
        CellParams {
            cell_type,
            input_size,
            hidden_size,
            gates,
        }
    }

    /// A zero gradient accumulator with matching shapes.
    pub fn grads_like(&self) -> CellParams {
        CellParams::zeros(self.cell_type, self.input_size, self.hidden_size)
    }

    /// Accumulate `other` into `self`, tensor by tensor.
    pub fn add_assign(&mut self, other: &CellParams) {
        for (g, o) in self.gates.iter_mut().zip(&other.gates) {
            for (a, b) in g.w_x.data.iter_mut().zip(&o.w_x.data) {
                *a += b;
            }
            for (a, b) in g.w_h.data.iter_mut().zip(&o.w_h.data) {
                *a += b;
            }
            for (a, b) in g.bias.iter_mut().zip(&o.bias) {
                *a += b;
            }
        }
    }

    /// Flat views over all tensors, in a fixed order (per gate: w_x, w_h, bias).
    pub fn tensors(&self) -> Vec<&[f32]> {
        let mut out = Vec::with_capacity(self.gates.len() * 3);
        for g in &self.gates {
            out.push(g.w_x.data.as_slice());
            out.push(g.w_h.data.as_slice());
            out.push(g.bias.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = Vec::with_capacity(self.gates.len() * 3);
        for g in &mut self.gates {
            out.push(g.w_x.data.as_mut_slice());
            out.push(g.w_h.data.as_mut_slice());
            out.push(g.bias.as_mut_slice());
        }
        out
    }
}

/// Recurrent state: hidden vector plus the LSTM cell vector (empty otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceState {
    pub hidden: Vec<f32>,
    pub cell: Vec<f32>,
}

impl SequenceState {
    pub fn zeros(params: &CellParams) -> Self {
        SequenceState {
            hidden: vec![0.0; params.hidden_size],
            cell: if params.cell_type == CellType::Lstm {
                vec![0.0; params.hidden_size]
            } else {
                Vec::new()
            },
        }
    }
}
