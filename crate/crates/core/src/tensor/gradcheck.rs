use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, NodeId, ParamId};
use crate::Scalar;

/// Analytic and central-difference gradients of one parameter leaf.
#[derive(Clone, Debug)]
pub struct LeafGradients {
    pub param: ParamId,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl LeafGradients {
    /// `|a - n| / max(|a|, |n|, 1e-12)` with Euclidean norms over the leaf.
    pub fn relative_error(&self) -> f64 {
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&mut self.analytic.iter().zip(&self.numeric).map(|(a, n)| a - n));
        let a = norm(&mut self.analytic.iter().copied());
        let n = norm(&mut self.numeric.iter().copied());
        diff / a.max(n).max(1e-12)
    }

    /// Largest per-entry relative error.
    pub fn max_entry_error(&self) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
            .fold(0.0, f64::max)
    }
}

/// Reverse-mode and central-difference gradients for every parameter leaf.
///
/// The graph is left evaluated at its original point.
pub fn finite_differences<S: Scalar>(
    graph: &mut Graph<S>,
    loss: NodeId,
    step: f64,
) -> Result<Vec<LeafGradients>> {
    for i in 0..graph.len() {
        let op = graph.op(NodeId(i));
        if !op.is_differentiable() {
            return Err(Error::Unsupported(format!(
                "node {i} ({}) is stochastic; gradient checks need a deterministic graph",
                op.name()
            )));
        }
    }
    let analytic = graph.backward(loss)?;
    let leaves = graph.param_leaves();
    let mut out = Vec::with_capacity(leaves.len());
    for ((param, grad), &(_, node)) in analytic.into_iter().zip(&leaves) {
        let base: Array<S> = graph.value(node).clone();
        let mut numeric = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[k] += S::of(step);
            graph.evaluate(&[(node, plus)])?;
            let f_plus = graph.value(loss).item().f64();

            let mut minus = base.clone();
            minus.data_mut()[k] -= S::of(step);
            graph.evaluate(&[(node, minus)])?;
            let f_minus = graph.value(loss).item().f64();

            numeric.push((f_plus - f_minus) / (2.0 * step));
        }
        graph.evaluate(&[(node, base)])?;
        out.push(LeafGradients {
            param,
            analytic: grad.to_f64(),
            numeric,
        });
    }
    Ok(out)
}

/// Largest relative error over all parameters, each parameter compared as
/// a whole: `||a - n|| / max(||a||, ||n||, 1e-12)`.
///
/// Entrywise ratios are ill-posed for entries whose true gradient is below
/// the difference quotient's truncation error; [`gradient_check_entrywise`]
/// reports them for small graphs where that is not a concern.
pub fn gradient_check<S: Scalar>(graph: &mut Graph<S>, loss: NodeId, step: f64) -> Result<f64> {
    Ok(finite_differences(graph, loss, step)?
        .iter()
        .map(LeafGradients::relative_error)
        .fold(0.0, f64::max))
}

/// Largest per-entry relative error over all parameter entries.
pub fn gradient_check_entrywise<S: Scalar>(
    graph: &mut Graph<S>,
    loss: NodeId,
    step: f64,
) -> Result<f64> {
    Ok(finite_differences(graph, loss, step)?
        .iter()
        .map(LeafGradients::max_entry_error)
        .fold(0.0, f64::max))
}
