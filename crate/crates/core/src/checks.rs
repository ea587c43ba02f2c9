//! Finite-difference gradient checks for every layer and every learner.
//!
//! Each check draws a random point: all parameters uniform in `[-1, 1]`,
//! random inputs, and a loss that weights every output entry by a fixed
//! random coefficient (layers) or the summed teacher-forced NLL of two
//! examples (learners).

use crate::error::Result;
use crate::layers::{
    lstm_cell_step, positions, AdditiveAttention, ConvBlock, EmbeddingTable, FeedForward,
    LayerNorm, LstmCell, MultiHeadAttention, PositionalEncoding,
};
use crate::learners::{init_learner, LearnerConfig, LearnerKind};
use crate::tensor::{gradient_check, Array, Graph, Mask, NodeId, ParamId, ParamStore, RandomStream};

/// Difference step for layer checks.
pub const LAYER_STEP: f64 = 1e-5;
/// Difference step for whole-learner checks. Learner losses have parameter
/// arrays with gradients around 1e-5 (saturated attention, additive-attention
/// biases); at 1e-5 the rounding term of the difference quotient dominates,
/// and 1e-4 balances it against the truncation term.
pub const LEARNER_STEP: f64 = 1e-4;

fn random_array(rng: &mut RandomStream, rows: usize, cols: usize) -> Array<f64> {
    let data = (0..rows * cols).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    Array::matrix(rows, cols, data).expect("positive extents")
}

/// Overwrites every parameter with values uniform in `[-scale, scale]`.
pub fn randomize(store: &mut ParamStore<f64>, rng: &mut RandomStream, scale: f64) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = rng.uniform_range(-scale, scale);
        }
    }
}

fn weighted_loss(g: &mut Graph<f64>, node: NodeId, rng: &mut RandomStream) -> Result<NodeId> {
    let (r, c) = (g.value(node).rows(), g.value(node).cols());
    let w = g.input(random_array(rng, r, c));
    let prod = g.mul(node, w)?;
    g.sum(prod)
}

type Build = fn(&mut ParamStore<f64>, &mut RandomStream, &mut Graph<f64>) -> Result<NodeId>;

/// Small instances of every layer reduced to a matrix output.
fn layer_cases() -> Vec<(&'static str, Build)> {
    vec![
        ("lstm_step", |store, rng, g| {
            let cell = LstmCell::new(store, rng, "lstm", 3, 4);
            randomize(store, rng, 1.0);
            let x = g.input(random_array(rng, 1, 3));
            let h = g.input(random_array(rng, 1, 4));
            let c = g.input(random_array(rng, 1, 4));
            let (h, c) = lstm_cell_step(g, store, &cell, x, h, c)?;
            g.concat_cols(&[h, c])
        }),
        ("lstm_sequence", |store, rng, g| {
            let cell = LstmCell::new(store, rng, "lstm", 2, 3);
            randomize(store, rng, 1.0);
            let x = g.input(random_array(rng, 4, 2));
            let (outs, _) = cell.run(g, store, x, None)?;
            g.concat_rows(&outs)
        }),
        ("additive_attention", |store, rng, g| {
            let att = AdditiveAttention::new(store, rng, "att", 3, 2, 4);
            randomize(store, rng, 1.0);
            let q = g.input(random_array(rng, 1, 3));
            let keys: Vec<NodeId> = (0..4).map(|_| g.input(random_array(rng, 1, 2))).collect();
            let (ctx, w) = att.forward(g, store, q, &keys)?;
            g.concat_cols(&[ctx, w])
        }),
        ("multi_head_attention", |store, rng, g| {
            let mha = MultiHeadAttention::new(store, rng, "mha", 4, 2)?;
            randomize(store, rng, 1.0);
            let x = g.input(random_array(rng, 3, 4));
            let y = g.input(random_array(rng, 2, 4));
            let a = mha.forward(g, store, x, x, x, Mask::Causal)?;
            let b = mha.forward(g, store, y, x, x, Mask::None)?;
            g.concat_rows(&[a, b])
        }),
        ("conv_block", |store, rng, g| {
            let block = ConvBlock::new(store, rng, "conv", 2, 3, 3)?;
            randomize(store, rng, 1.0);
            let x = g.input(random_array(rng, 5, 2));
            let a = block.forward(g, store, x, true)?;
            let b = block.forward(g, store, x, false)?;
            g.concat_cols(&[a, b])
        }),
        ("embedding_positions", |store, rng, g| {
            let emb = EmbeddingTable::new(store, rng, "emb", 5, 3);
            let pos = PositionalEncoding::learned(store, rng, "pos", 8, 3);
            let e = emb.lookup(g, store, &[1, 4, 1, 0])?;
            let p = positions(g, store, &pos, 4)?;
            g.add(e, p)
        }),
        ("feed_forward", |store, rng, g| {
            let ff = FeedForward::new(store, rng, "ff", 3, 5);
            randomize(store, rng, 1.0);
            let x = g.input(random_array(rng, 2, 3));
            ff.forward(g, store, x)
        }),
        ("layer_norm", |store, rng, g| {
            let ln = LayerNorm::new(store, "ln", 4);
            randomize(store, rng, 1.0);
            let x = g.input(random_array(rng, 3, 4));
            ln.forward(g, store, x)
        }),
    ]
}


/// Largest relative gradient error of each layer at the point drawn from `seed`.
pub fn layer_gradient_errors(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    layer_cases()
        .into_iter()
        .map(|(name, build)| {
            let mut rng = RandomStream::new(100 + seed);
            let mut store = ParamStore::new();
            let mut g = Graph::new();
            let out = build(&mut store, &mut rng, &mut g)?;
            let loss = weighted_loss(&mut g, out, &mut rng)?;
            Ok((name, gradient_check(&mut g, loss, LAYER_STEP)?))
        })
        .collect()
}

/// A small instance of `kind` without dropout.
pub fn small_config(kind: LearnerKind) -> LearnerConfig {
    LearnerConfig {
        kind,
        layers: 1,
        hidden: 6,
        embedding: 4,
        heads: 2,
        kernel: 3,
        dropout: 0.0,
    }
}

/// Largest relative gradient error of a small learner's summed NLL.
pub fn learner_gradient_error(kind: LearnerKind, seed: u64) -> Result<f64> {
    let mut model = init_learner::<f64>(&small_config(kind), 4, 5, 100 + seed)?;
    let mut rng = RandomStream::new(seed);
    randomize(model.params_mut(), &mut rng, 1.0);
    let mut g = Graph::new();
    let a = model.nll(&mut g, &[1, 2, 2, 0], &[3, 1, 0])?;
    let b = model.nll(&mut g, &[3, 0], &[2, 2, 4, 0])?;
    let loss = g.add(a, b)?;
    gradient_check(&mut g, loss, LEARNER_STEP)
}
