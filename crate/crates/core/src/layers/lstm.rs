use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, NodeId, ParamId, ParamStore, RandomStream};
use crate::Scalar;

use super::uniform_weight;

/// Gate order: input, forget, candidate, output.
pub const GATES: [&str; 4] = ["input", "forget", "cell", "output"];

/// One LSTM cell with a separate `(input + hidden) x hidden` weight and a
/// `1 x hidden` bias per gate.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: [ParamId; 4],
    pub biases: [ParamId; 4],
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmState {
    pub fn zeros<S: Scalar>(g: &mut Graph<S>, hidden_dim: usize) -> Self {
        Self {
            h: g.input(Array::zeros(&[1, hidden_dim])),
            c: g.input(Array::zeros(&[1, hidden_dim])),
        }
    }
}

/// Gate weights split into input and recurrent halves, ready for repeated steps.
#[derive(Clone, Debug)]
pub struct PreparedCell {
    wx: [NodeId; 4],
    wh: [NodeId; 4],
    b: [NodeId; 4],
    input_dim: usize,
    hidden_dim: usize,
}

impl LstmCell {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut RandomStream,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let rows = input_dim + hidden_dim;
        let weights = GATES.map(|gate| {
            store.add(
                format!("{name}.{gate}.weight"),
                uniform_weight(rng, rows, hidden_dim),
            )
        });
        let biases = GATES.map(|gate| {
            store.add(format!("{name}.{gate}.bias"), Array::zeros(&[1, hidden_dim]))
        });
        Self {
            input_dim,
            hidden_dim,
            weights,
            biases,
        }
    }

    pub fn prepare<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>) -> Result<PreparedCell> {
        let mut wx = [NodeId(0); 4];
        let mut wh = [NodeId(0); 4];
        let mut b = [NodeId(0); 4];
        for k in 0..4 {
            let w = g.param(store, self.weights[k]);
            wx[k] = g.slice_rows(w, 0, self.input_dim)?;
            wh[k] = g.slice_rows(w, self.input_dim, self.hidden_dim)?;
            b[k] = g.param(store, self.biases[k]);
        }
        Ok(PreparedCell {
            wx,
            wh,
            b,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
        })
    }

    /// Runs the cell over the rows of `xs` (`time x input`), returning every
    /// hidden state as a `1 x hidden` node and the final state.
    pub fn run<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        xs: NodeId,
        initial: Option<LstmState>,
    ) -> Result<(Vec<NodeId>, LstmState)> {
        let cell = self.prepare(g, store)?;
        let mut state = match initial {
            Some(s) => s,
            None => LstmState::zeros(g, self.hidden_dim),
        };
        let projected = cell.project_inputs(g, xs)?;
        let steps = g.shape(xs)[0];
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut xt = [NodeId(0); 4];
            for k in 0..4 {
                xt[k] = g.slice_rows(projected[k], t, 1)?;
            }
            state = cell.step_projected(g, xt, state)?;
            outputs.push(state.h);
        }
        Ok((outputs, state))
    }
}

impl PreparedCell {
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Input contribution `xs W_x` of every gate for all time steps at once.
    pub fn project_inputs<S: Scalar>(&self, g: &mut Graph<S>, xs: NodeId) -> Result<[NodeId; 4]> {
        let cols = *g.shape(xs).last().unwrap_or(&0);
        if cols != self.input_dim {
            return Err(Error::Dimension(format!(
                "lstm input has {cols} columns, cell expects {}",
                self.input_dim
            )));
        }
        let mut out = [NodeId(0); 4];
        for k in 0..4 {
            out[k] = g.matmul(xs, self.wx[k])?;
        }
        Ok(out)
    }

    pub fn step<S: Scalar>(&self, g: &mut Graph<S>, x: NodeId, state: LstmState) -> Result<LstmState> {
        let projected = self.project_inputs(g, x)?;
        self.step_projected(g, projected, state)
    }

    /// One step from precomputed input contributions (each `1 x hidden`).
    pub fn step_projected<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        xw: [NodeId; 4],
        state: LstmState,
    ) -> Result<LstmState> {
        for node in [state.h, state.c] {
            if g.shape(node) != [1, self.hidden_dim] {
                return Err(Error::Dimension(format!(
                    "lstm state has shape {:?}, expected [1, {}]",
                    g.shape(node),
                    self.hidden_dim
                )));
            }
        }
        let mut pre = [NodeId(0); 4];
        for k in 0..4 {
            let hw = g.matmul(state.h, self.wh[k])?;
            let s = g.add(xw[k], hw)?;
            pre[k] = g.add(s, self.b[k])?;
        }
        let i = g.sigmoid(pre[0])?;
        let f = g.sigmoid(pre[1])?;
        let cand = g.tanh(pre[2])?;
        let o = g.sigmoid(pre[3])?;
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Single recurrence step on `1 x input` and `1 x hidden` nodes.
pub fn lstm_cell_step<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParamStore<S>,
    cell: &LstmCell,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId)> {
    let xs = g.shape(x);
    if xs.len() != 2 || xs[0] != 1 {
        return Err(Error::Dimension(format!("lstm step input has shape {xs:?}")));
    }
    let prepared = cell.prepare(g, store)?;
    let next = prepared.step(g, x, LstmState { h, c })?;
    Ok((next.h, next.c))
}
