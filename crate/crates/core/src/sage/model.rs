use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::params::{ModelParams, Weights};
use super::sampling::{sample_neighbors, sampling_cap};
use super::{Activation, ArchConfig, Gradients, NeighborView, SageError, SCORE_EPS};
use crate::analytics::{simple_undirected, GraphSample};
use crate::depgraph::Label;

/// Compressed neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl Neighborhood {
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut items = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for l in lists {
            items.extend_from_slice(l);
            offsets.push(items.len());
        }
        Neighborhood { offsets, items }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn of(&self, v: usize) -> &[usize] {
        &self.items[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        (0..self.num_nodes()).map(|v| self.of(v).to_vec()).collect()
    }
}

/// Full neighbor lists of every node under `view`: sorted, deduplicated,
/// self-loops dropped.
pub fn neighborhoods(sample: &GraphSample, view: NeighborView) -> Neighborhood {
    let n = sample.num_nodes();
    let lists = match view {
        NeighborView::Undirected => simple_undirected(n, sample.edges.iter().copied()),
        NeighborView::DirectedIn => {
            let mut lists = vec![Vec::new(); n];
            for &(src, dst) in &sample.edges {
                if src != dst {
                    lists[dst].push(src);
                }
            }
            for l in &mut lists {
                l.sort_unstable();
                l.dedup();
            }
            lists
        }
    };
    Neighborhood::from_lists(&lists)
}

struct GraphCache {
    node_ops: Vec<usize>,
    /// `[h ; mean(h_neighbors)]` entering each SAGE layer.
    inputs: Vec<Array2<f64>>,
    /// Activation output of each SAGE layer.
    outputs: Vec<Array2<f64>>,
    neigh: Vec<Arc<Neighborhood>>,
    pooled: Array1<f64>,
    /// Unclamped sigmoid output.
    raw_score: f64,
}

/// Activations recorded by [`forward`] for [`backward`].
pub struct ForwardCache {
    /// Scores clamped to `[SCORE_EPS, 1 - SCORE_EPS]`, in batch order.
    pub scores: Vec<f64>,
    arch: ArchConfig,
    fingerprint: u64,
    graphs: Vec<GraphCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

fn fingerprint(w: &Weights) -> u64 {
    let mut h = DefaultHasher::new();
    for (_, t) in w.tensors() {
        for x in t {
            x.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

fn check_vocab(arch: &ArchConfig, batch: &[GraphSample]) -> Result<(), SageError> {
    if batch.is_empty() {
        return Err(SageError::EmptyBatch);
    }
    for sample in batch {
        if let Some(&index) = sample.node_ops.iter().find(|&&op| op >= arch.vocab_size) {
            return Err(SageError::VocabMismatch {
                index,
                vocab_size: arch.vocab_size,
            });
        }
        if sample.node_ops.is_empty() {
            return Err(SageError::EmptyGraph);
        }
    }
    Ok(())
}

/// Scores a batch with full neighborhoods. Each graph is processed
/// independently, so a batch scores exactly as its members do alone.
pub fn forward(params: &ModelParams, batch: &[GraphSample]) -> Result<ForwardCache, SageError> {
    check_vocab(&params.arch, batch)?;
    let view = params.arch.neighbor_view;
    let layers = params.arch.num_sage_layers;
    let plans: Vec<Vec<Arc<Neighborhood>>> = batch
        .iter()
        .map(|s| vec![Arc::new(neighborhoods(s, view)); layers])
        .collect();
    run(params, batch, plans)
}

/// Like [`forward`], but when `arch.sample_cap` is set each layer draws a
/// fresh neighbor subset of size `min(sample_cap, ceil(avg_degree))` per
/// node from `rng`.
pub fn forward_sampled(
    params: &ModelParams,
    batch: &[GraphSample],
    rng: &mut ChaCha8Rng,
) -> Result<ForwardCache, SageError> {
    let Some(cap) = params.arch.sample_cap else {
        return forward(params, batch);
    };
    check_vocab(&params.arch, batch)?;
    let view = params.arch.neighbor_view;
    let plans = batch
        .iter()
        .map(|s| {
            let full = neighborhoods(s, view);
            let avg_degree = 2.0 * s.edges.len() as f64 / s.num_nodes() as f64;
            let cap = sampling_cap(cap, avg_degree);
            (0..params.arch.num_sage_layers)
                .map(|_| {
                    let lists: Vec<Vec<usize>> = (0..full.num_nodes())
                        .map(|v| sample_neighbors(full.of(v), cap, rng))
                        .collect();
                    Arc::new(Neighborhood::from_lists(&lists))
                })
                .collect()
        })
        .collect();
    run(params, batch, plans)
}

fn run(
    params: &ModelParams,
    batch: &[GraphSample],
    plans: Vec<Vec<Arc<Neighborhood>>>,
) -> Result<ForwardCache, SageError> {
    let graphs: Vec<GraphCache> = batch
        .par_iter()
        .zip(plans.into_par_iter())
        .map(|(sample, neigh)| forward_graph(params, sample, neigh))
        .collect();
    Ok(ForwardCache {
        scores: graphs.iter().map(|g| clamp_score(g.raw_score)).collect(),
        arch: params.arch.clone(),
        fingerprint: fingerprint(&params.weights),
        graphs,
    })
}

fn forward_graph(params: &ModelParams, sample: &GraphSample, neigh: Vec<Arc<Neighborhood>>) -> GraphCache {
    let arch = &params.arch;
    let w = &params.weights;
    let act = arch.activation;
    let n = sample.num_nodes();

    let h0 = match &w.embedding {
        Some(e) => {
            let mut h = Array2::zeros((n, arch.embed_dim));
            for (mut row, &op) in h.rows_mut().into_iter().zip(&sample.node_ops) {
                Zip::from(&mut row)
                    .and(e.weight.row(op))
                    .and(&e.bias)
                    .for_each(|r, &x, &b| *r = act.apply(x + b));
            }
            h
        }
        None => sample.one_hot(arch.vocab_size),
    };

    let mut inputs = Vec::with_capacity(arch.num_sage_layers);
    let mut outputs = Vec::with_capacity(arch.num_sage_layers);
    for (layer, nb) in w.sage.iter().zip(&neigh) {
        let x = concat_with_neighbor_mean(outputs.last().unwrap_or(&h0), nb);
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        z.mapv_inplace(|v| act.apply(v));
        inputs.push(x);
        outputs.push(z);
    }

    let pooled = outputs
        .last()
        .unwrap_or(&h0)
        .mean_axis(Axis(0))
        .expect("graphs have nodes");
    let logit = pooled.dot(&w.out_w) + w.out_b;
    GraphCache {
        node_ops: sample.node_ops.clone(),
        inputs,
        outputs,
        neigh,
        pooled,
        raw_score: sigmoid(logit),
    }
}

/// `[h | m]` where `m[v]` is the mean of `h` over the neighbors of `v`
/// (zero for nodes without neighbors).
fn concat_with_neighbor_mean(h: &Array2<f64>, nb: &Neighborhood) -> Array2<f64> {
    let (n, d) = h.dim();
    let mut x = Array2::zeros((n, 2 * d));
    x.slice_mut(s![.., ..d]).assign(h);
    let hs = h.as_slice().expect("standard layout");
    let xs = x.as_slice_mut().expect("standard layout");
    for v in 0..n {
        let list = nb.of(v);
        if list.is_empty() {
            continue;
        }
        let row = &mut xs[v * 2 * d + d..(v + 1) * 2 * d];
        for &u in list {
            for (r, &hu) in row.iter_mut().zip(&hs[u * d..(u + 1) * d]) {
                *r += hu;
            }
        }
        let inv = 1.0 / list.len() as f64;
        row.iter_mut().for_each(|r| *r *= inv);
    }
    x
}

/// Mean binary cross-entropy with scores clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(scores: &[f64], labels: &[Label]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let s = clamp_score(s);
            let y = y.as_f64();
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum();
    total / scores.len() as f64
}

/// Loss and exact gradients for the batch recorded in `cache`.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    labels: &[Label],
) -> Result<(f64, Gradients), SageError> {
    if cache.arch != params.arch || cache.fingerprint != fingerprint(&params.weights) {
        return Err(SageError::CacheMismatch(
            "cache was produced with different parameters".into(),
        ));
    }
    if labels.len() != cache.graphs.len() {
        return Err(SageError::CacheMismatch(format!(
            "{} labels for {} cached graphs",
            labels.len(),
            cache.graphs.len()
        )));
    }
    let inv_b = 1.0 / labels.len() as f64;
    let per_graph: Vec<Gradients> = cache
        .graphs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(g, &y)| backward_graph(params, g, y.as_f64(), inv_b))
        .collect();
    // Fixed-order reduction keeps results independent of thread count.
    let mut grads = params.weights.zeros_like();
    for g in &per_graph {
        grads.add_assign(g);
    }
    Ok((bce_loss(&cache.scores, labels), grads))
}

fn backward_graph(params: &ModelParams, gc: &GraphCache, y: f64, inv_b: f64) -> Gradients {
    let arch = &params.arch;
    let w = &params.weights;
    let act: Activation = arch.activation;
    let mut grads = w.zeros_like();

    let s = gc.raw_score;
    // d(loss)/d(logit); zero where the clamp is active.
    let dlogit = if (SCORE_EPS..=1.0 - SCORE_EPS).contains(&s) {
        (s - y) * inv_b
    } else {
        0.0
    };
    grads.out_b = dlogit;
    grads.out_w = &gc.pooled * dlogit;

    let n = gc.node_ops.len();
    let mut dh = Array2::zeros((n, arch.hidden_dim));
    let row_grad = &w.out_w * (dlogit / n as f64);
    for mut r in dh.rows_mut() {
        r.assign(&row_grad);
    }

    for k in (0..arch.num_sage_layers).rev() {
        let out = &gc.outputs[k];
        let x = &gc.inputs[k];
        let mut dz = dh;
        Zip::from(&mut dz)
            .and(out)
            .for_each(|g, &h| *g *= act.grad_from_output(h));
        grads.sage[k].weight = x.t().dot(&dz);
        grads.sage[k].bias = dz.sum_axis(Axis(0));
        if k == 0 && w.embedding.is_none() {
            return grads;
        }
        let dx = dz.dot(&w.sage[k].weight.t());
        dh = scatter_input_grad(&dx, &gc.neigh[k]);
    }

    let gemb = grads
        .embedding
        .as_mut()
        .expect("embedding gradients exist exactly when the layer does");
    let h0 = gc.inputs[0].slice(s![.., ..arch.embed_dim]);
    Zip::from(&mut dh)
        .and(&h0)
        .for_each(|g, &h| *g *= act.grad_from_output(h));
    for (v, &op) in gc.node_ops.iter().enumerate() {
        let row = dh.row(v);
        let mut target = gemb.weight.row_mut(op);
        target += &row;
        gemb.bias += &row;
    }
    grads
}

/// Gradient of the layer input `h` given the gradient of `[h | mean]`.
fn scatter_input_grad(dx: &Array2<f64>, nb: &Neighborhood) -> Array2<f64> {
    let (n, two_d) = dx.dim();
    let d = two_d / 2;
    let mut dh = dx.slice(s![.., ..d]).to_owned();
    let dxs = dx.as_slice().expect("standard layout");
    let dhs = dh.as_slice_mut().expect("standard layout");
    for v in 0..n {
        let list = nb.of(v);
        if list.is_empty() {
            continue;
        }
        let inv = 1.0 / list.len() as f64;
        let src = &dxs[v * two_d + d..(v + 1) * two_d];
        for &u in list {
            for (t, &g) in dhs[u * d..(u + 1) * d].iter_mut().zip(src) {
                *t += g * inv;
            }
        }
    }
    dh
}
