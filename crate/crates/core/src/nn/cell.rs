//! Cell recurrences, unrolled forward passes, and backpropagation through
//! time.
//!
//! The recurrences are the standard formulations:
//!
//! * RNN:  `h' = tanh(Wx·x + Wh·h + b)`
//! * GRU:  `r = σ(..)`, `z = σ(..)`, `n = tanh(Wn·x + Un·(r⊙h) + bn)`,
//!   `h' = (1−z)⊙n + z⊙h`
//! * LSTM: `i,f,o = σ(..)`, `g = tanh(..)`, `c' = f⊙c + i⊙g`,
//!   `h' = o⊙tanh(c')`

use super::{CellParams, CellType, SequenceState};

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Pre-activation for gate `g`: `w_x·x + w_h·h + bias`.
fn gate_preact(params: &CellParams, g: usize, x: &[f32], h: &[f32], out: &mut [f32]) {
    let gate = &params.gates[g];
    out.copy_from_slice(&gate.bias);
    gate.w_x.matvec_add(x, out);
    gate.w_h.matvec_add(h, out);
}

fn assert_finite(h: &[f32]) {
    debug_assert!(h.iter().all(|v| v.is_finite()), "non-finite hidden state");
}

/// Gate activations recorded during the forward pass, enough to run the
/// exact backward pass without recomputing.
#[derive(Debug, Clone)]
pub struct StepTrace {
    /// Activated gate values, in gate order (empty for RNN).
    pub gates: Vec<Vec<f32>>,
    pub hidden: Vec<f32>,
    pub cell: Vec<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub steps: Vec<StepTrace>,
}

/// One step of the recurrence.
pub fn cell_step(params: &CellParams, x: &[f32], state: &SequenceState) -> SequenceState {
    let (next, _) = cell_step_traced(params, x, state);
    next
}

fn cell_step_traced(
    params: &CellParams,
    x: &[f32],
    state: &SequenceState,
) -> (SequenceState, StepTrace) {
    assert_eq!(x.len(), params.input_size, "input width mismatch");
    assert_eq!(
        state.hidden.len(),
        params.hidden_size,
        "state width mismatch"
    );
    let d = params.hidden_size;
    match params.cell_type {
        CellType::Rnn => {
            let mut h = vec![0.0f32; d];
            gate_preact(params, 0, x, &state.hidden, &mut h);
            h.iter_mut().for_each(|v| *v = v.tanh());
            assert_finite(&h);
            (
                SequenceState {
                    hidden: h.clone(),
                    cell: Vec::new(),
                },
                StepTrace {
                    gates: Vec::new(),
                    hidden: h,
                    cell: Vec::new(),
                },
            )
        }
        CellType::Gru => {
            let mut r = vec![0.0f32; d];
            let mut z = vec![0.0f32; d];
            gate_preact(params, 0, x, &state.hidden, &mut r);
            gate_preact(params, 1, x, &state.hidden, &mut z);
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            z.iter_mut().for_each(|v| *v = sigmoid(*v));

            let rh: Vec<f32> = r.iter().zip(&state.hidden).map(|(a, b)| a * b).collect();
            let gate_n = &params.gates[2];
            let mut n = gate_n.bias.clone();
            gate_n.w_x.matvec_add(x, &mut n);
            gate_n.w_h.matvec_add(&rh, &mut n);
            n.iter_mut().for_each(|v| *v = v.tanh());

            let h: Vec<f32> = z
                .iter()
                .zip(&n)
                .zip(&state.hidden)
                .map(|((&zi, &ni), &hi)| (1.0 - zi) * ni + zi * hi)
                .collect();
            assert_finite(&h);
            (
                SequenceState {
                    hidden: h.clone(),
                    cell: Vec::new(),
                },
                StepTrace {
                    gates: vec![r, z, n],
                    hidden: h,
                    cell: Vec::new(),
                },
            )
        }
        CellType::Lstm => {
            let mut acts: Vec<Vec<f32>> = (0..4)
                .map(|g| {
                    let mut a = vec![0.0f32; d];
                    gate_preact(params, g, x, &state.hidden, &mut a);
                    a
                })
                .collect();
            acts[0].iter_mut().for_each(|v| *v = sigmoid(*v));
            acts[1].iter_mut().for_each(|v| *v = sigmoid(*v));
            acts[2].iter_mut().for_each(|v| *v = v.tanh());
            acts[3].iter_mut().for_each(|v| *v = sigmoid(*v));

            let c_prev = if state.cell.is_empty() {
                vec![0.0; d]
            } else {
                state.cell.clone()
            };
            let mut c = vec![0.0f32; d];
            for k in 0..d {
                c[k] = acts[1][k] * c_prev[k] + acts[0][k] * acts[2][k];
            }
            let h: Vec<f32> = (0..d).map(|k| acts[3][k] * c[k].tanh()).collect();
            assert_finite(&h);
            (
                SequenceState {
                    hidden: h.clone(),
                    cell: c.clone(),
                },
                StepTrace {
                    gates: acts,
                    hidden: h,
                    cell: c,
                },
            )
        }
    }
}

/// Unroll the cell over the first `valid_steps` rows of `rows` (row-major,
/// `input_size` wide) from the zero state and return the final hidden state.
/// `valid_steps == 0` returns the zero vector.
pub fn sequence_forward(params: &CellParams, rows: &[f32], valid_steps: usize) -> Vec<f32> {
    let width = params.input_size;
    assert!(
        rows.len() >= valid_steps * width,
        "series shorter than valid_steps"
    );
    let mut state = SequenceState::zeros(params);
    for t in 0..valid_steps {
        state = cell_step(params, &rows[t * width..(t + 1) * width], &state);
    }
    state.hidden
}

/// Like [`sequence_forward`] but records the per-step trace for backward.
pub fn sequence_forward_cached(
    params: &CellParams,
    rows: &[f32],
    valid_steps: usize,
) -> (Vec<f32>, Trace) {
    let width = params.input_size;
    assert!(
        rows.len() >= valid_steps * width,
        "series shorter than valid_steps"
    );
    let mut state = SequenceState::zeros(params);
    let mut trace = Trace {
        steps: Vec::with_capacity(valid_steps),
    };
    for t in 0..valid_steps {
        let (next, step) = cell_step_traced(params, &rows[t * width..(t + 1) * width], &state);
        trace.steps.push(step);
        state = next;
    }
    (state.hidden, trace)
}

/// Backpropagation through time.
///
/// Given the trace of a cached forward pass and the loss gradient with
/// respect to the final hidden state, accumulates exact gradients for every
/// gate tensor into `grads` (shapes must match; create with
/// [`CellParams::grads_like`]). Gradients with respect to the input rows are
/// not needed (song content is data, not a parameter) and are skipped.
pub fn backward(
    params: &CellParams,
    rows: &[f32],
    trace: &Trace,
    d_h_final: &[f32],
    grads: &mut CellParams,
) {
    let d = params.hidden_size;
    let width = params.input_size;
    let valid = trace.steps.len();
    assert_eq!(d_h_final.len(), d, "gradient width mismatch");

    let zero = vec![0.0f32; d];
    let mut d_h = d_h_final.to_vec();
    let mut d_c = vec![0.0f32; d];

    for t in (0..valid).rev() {
        let x = &rows[t * width..(t + 1) * width];
        let h_prev: &[f32] = if t > 0 {
            &trace.steps[t - 1].hidden
        } else {
            &zero
        };
        let step = &trace.steps[t];

        match params.cell_type {
            CellType::Rnn => {
                let h = &step.hidden;
                let da: Vec<f32> = d_h
                    .iter()
                    .zip(h)
                    .map(|(&g, &hv)| g * (1.0 - hv * hv))
                    .collect();
                grads.gates[0].w_x.add_outer(&da, x);
                grads.gates[0].w_h.add_outer(&da, h_prev);
                for (b, &v) in grads.gates[0].bias.iter_mut().zip(&da) {
                    *b += v;
                }
                let mut d_hprev = vec![0.0f32; d];
                params.gates[0].w_h.matvec_t_add(&da, &mut d_hprev);
                d_h = d_hprev;
            }
            CellType::Gru => {
                let (r, z, n) = (&step.gates[0], &step.gates[1], &step.gates[2]);
                let rh: Vec<f32> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();

                let mut daz = vec![0.0f32; d];
                let mut dan = vec![0.0f32; d];
                let mut d_hprev = vec![0.0f32; d];
                for k in 0..d {
                    // h = (1−z)·n + z·h_prev
                    daz[k] = d_h[k] * (h_prev[k] - n[k]) * z[k] * (1.0 - z[k]);
                    dan[k] = d_h[k] * (1.0 - z[k]) * (1.0 - n[k] * n[k]);
                    d_hprev[k] = d_h[k] * z[k];
                }
                let mut d_rh = vec![0.0f32; d];
                params.gates[2].w_h.matvec_t_add(&dan, &mut d_rh);
                let mut dar = vec![0.0f32; d];
                for k in 0..d {
                    dar[k] = d_rh[k] * h_prev[k] * r[k] * (1.0 - r[k]);
                    d_hprev[k] += d_rh[k] * r[k];
                }
                params.gates[0].w_h.matvec_t_add(&dar, &mut d_hprev);
                params.gates[1].w_h.matvec_t_add(&daz, &mut d_hprev);

                for (g, da, h_in) in [
                    (0usize, &dar, h_prev),
                    (1, &daz, h_prev),
                    (2, &dan, rh.as_slice()),
                ] {
                    grads.gates[g].w_x.add_outer(da, x);
                    grads.gates[g].w_h.add_outer(da, h_in);
                    for (b, &v) in grads.gates[g].bias.iter_mut().zip(da.iter()) {
                        *b += v;
                    }
                }
                d_h = d_hprev;
            }
            CellType::Lstm => {
                let (i, f, g, o) = (
                    &step.gates[0],
                    &step.gates[1],
                    &step.gates[2],
                    &step.gates[3],
                );
                let c = &step.cell;
                let c_prev: &[f32] = if t > 0 {
                    &trace.steps[t - 1].cell
                } else {
                    &zero
                };

                let mut dai = vec![0.0f32; d];
                let mut daf = vec![0.0f32; d];
                let mut dag = vec![0.0f32; d];
                let mut dao = vec![0.0f32; d];
                for k in 0..d {
                    let tc = c[k].tanh();
                    dao[k] = d_h[k] * tc * o[k] * (1.0 - o[k]);
                    let dc = d_c[k] + d_h[k] * o[k] * (1.0 - tc * tc);
                    dai[k] = dc * g[k] * i[k] * (1.0 - i[k]);
                    daf[k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
                    dag[k] = dc * i[k] * (1.0 - g[k] * g[k]);
                    d_c[k] = dc * f[k];
                }
                let mut d_hprev = vec![0.0f32; d];
                for (gi, da) in [(0usize, &dai), (1, &daf), (2, &dag), (3, &dao)] {
                    params.gates[gi].w_h.matvec_t_add(da, &mut d_hprev);
                    grads.gates[gi].w_x.add_outer(da, x);
                    grads.gates[gi].w_h.add_outer(da, h_prev);
                    for (b, &v) in grads.gates[gi].bias.iter_mut().zip(da.iter()) {
                        *b += v;
                    }
                }
                d_h = d_hprev;
            }
        }
    }
}
