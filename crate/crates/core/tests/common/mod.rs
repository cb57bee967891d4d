//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use irgraph::analytics::GraphSample;
use irgraph::depgraph::Label;
use irgraph::ir::{sizeof_type, TraceUnit};
use irgraph::sage::{backward, bce_loss, forward, ModelParams};
use rand::{Rng, RngCore};

/// Random dynamic-trace text over a small register pool, so registers are
/// redefined and reused often.
pub fn random_trace(rng: &mut impl RngCore, lines: usize) -> String {
    const TYPES: [&str; 5] = ["i1", "i8", "i32", "i64", "double"];
    let reg = |rng: &mut dyn RngCore| format!("%r{}", rng.random_range(0..12));
    let operand = |rng: &mut dyn RngCore| {
        if rng.random_bool(0.8) {
            format!("%r{}", rng.random_range(0..12))
        } else {
            rng.random_range(0..100).to_string()
        }
    };
    let mut out = String::new();
    for _ in 0..lines {
        let ty = TYPES[rng.random_range(0..TYPES.len())];
        let line = match rng.random_range(0..8) {
            0 => format!("store {ty} {}, ptr {} ; addr=0x{:x}", operand(rng), reg(rng), rng.random_range(0..4) * 8),
            1 => format!("{} = load {ty}, ptr {} ; addr=0x{:x}", reg(rng), reg(rng), rng.random_range(0..4) * 8),
            2 => format!("{} = getelementptr i8, ptr {}, i64 {}", reg(rng), reg(rng), operand(rng)),
            3 => format!("{} = call {ty} @f({ty} {}, {ty} {})", reg(rng), operand(rng), operand(rng)),
            4 => format!("{} = icmp eq {ty} {}, {}", reg(rng), operand(rng), operand(rng)),
            5 => format!("{} = select i1 {}, {ty} {}, {ty} {}", reg(rng), operand(rng), operand(rng), operand(rng)),
            6 => format!("{} = zext i8 {} to {ty}", reg(rng), operand(rng)),
            _ => {
                let op = ["add", "sub", "mul", "xor", "shl"][rng.random_range(0..5)];
                format!("{} = {op} {ty} {}, {}", reg(rng), operand(rng), operand(rng))
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Data edges by rescanning, for every consumer and source register, the
/// instructions before it for the nearest definition.
pub fn rescan_data_edges(unit: &TraceUnit) -> BTreeSet<(usize, usize, u64)> {
    let ins = &unit.instructions;
    let mut edges = BTreeSet::new();
    for c in 0..ins.len() {
        for r in &ins[c].sources {
            if let Some(p) = (0..c).rev().find(|&p| ins[p].dest.as_ref() == Some(r)) {
                edges.insert((p, c, sizeof_type(&ins[p].result_type)));
            }
        }
    }
    edges
}

/// AUROC by comparing every positive with every negative.
pub fn brute_auroc(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == Label::Malicious && labels[j] == Label::Benign {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// All-pairs distances by Floyd–Warshall (`usize::MAX` = unreachable).
pub fn floyd(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let inf = usize::MAX;
    let mut d = vec![vec![inf; n]; n];
    for v in 0..n {
        d[v][v] = 0;
        for &w in &adj[v] {
            d[v][w] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] != inf && d[k][j] != inf && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Number of shortest paths between every pair, counted layer by layer
/// from the distance matrix.
pub fn path_counts(adj: &[Vec<usize>], d: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut sigma = vec![vec![0.0; n]; n];
    for s in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&t| d[s][t] != usize::MAX).collect();
        order.sort_by_key(|&t| d[s][t]);
        for t in order {
            sigma[s][t] = if t == s {
                1.0
            } else {
                adj[t]
                    .iter()
                    .filter(|&&u| d[s][u] != usize::MAX && d[s][u] + 1 == d[s][t])
                    .map(|&u| sigma[s][u])
                    .sum()
            };
        }
    }
    sigma
}

/// Betweenness from the pair-dependency definition: for each unordered
/// pair `{s, t}`, the fraction of shortest paths through `v`.
pub fn oracle_betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    if n <= 2 {
        return vec![0.0; n];
    }
    let d = floyd(adj);
    let sigma = path_counts(adj, &d);
    let inf = usize::MAX;
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            if d[s][t] == inf {
                continue;
            }
            for v in 0..n {
                if v == s || v == t || d[s][v] == inf || d[v][t] == inf {
                    continue;
                }
                if d[s][v] + d[v][t] == d[s][t] {
                    bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
                }
            }
        }
    }
    let scale = 2.0 / ((n - 1) * (n - 2)) as f64;
    bc.iter().map(|b| b * scale).collect()
}

pub fn oracle_closeness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let d = floyd(adj);
    (0..n)
        .map(|v| {
            let reach: Vec<usize> = d[v].iter().copied().filter(|&x| x != usize::MAX).collect();
            let r = reach.len();
            let total: usize = reach.iter().sum();
            if r <= 1 {
                0.0
            } else {
                ((r - 1) as f64 / total as f64) * ((r - 1) as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

pub fn oracle_degree(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    adj.iter()
        .map(|nb| if n <= 1 { 0.0 } else { nb.len() as f64 / (n - 1) as f64 })
        .collect()
}

/// Random simple undirected adjacency lists with edge probability `p`.
pub fn random_adjacency(rng: &mut impl RngCore, n: usize, p: f64) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    adj
}

/// Random encoded graph with opcodes below `vocab`.
pub fn random_sample(rng: &mut impl RngCore, n: usize, vocab: usize, label: Label) -> GraphSample {
    let node_ops = (0..n).map(|_| rng.random_range(0..vocab)).collect();
    let mut edges = Vec::new();
    for dst in 1..n {
        for _ in 0..rng.random_range(0..3) {
            edges.push((rng.random_range(0..dst), dst));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let edge_weights = vec![4; edges.len()];
    GraphSample {
        node_ops,
        edges,
        edge_weights,
        label: Some(label),
        family: None,
    }
}

/// Relabels nodes by `perm` (old index → new index).
pub fn permute_sample(s: &GraphSample, perm: &[usize]) -> GraphSample {
    let mut node_ops = vec![0; s.node_ops.len()];
    for (old, &op) in s.node_ops.iter().enumerate() {
        node_ops[perm[old]] = op;
    }
    GraphSample {
        node_ops,
        edges: s.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect(),
        edge_weights: s.edge_weights.clone(),
        label: s.label,
        family: s.family.clone(),
    }
}

pub fn loss_of(params: &ModelParams, batch: &[GraphSample], labels: &[Label]) -> f64 {
    bce_loss(&forward(params, batch).unwrap().scores, labels)
}

pub const GRAD_FLOOR: f64 = 1e-6;

/// Worst relative error between analytic gradients and central finite
/// differences over every parameter, with the tensor name of the worst.
///
/// The denominator is floored at [`GRAD_FLOOR`]: the difference quotient
/// carries roughly `f64::EPSILON * loss / eps` of rounding noise (about
/// 1e-11 at eps 1e-5), which swamps the relative error of entries that are
/// themselves near zero.
pub fn gradient_check(
    params: &ModelParams,
    batch: &[GraphSample],
    labels: &[Label],
    eps: f64,
) -> (f64, String) {
    let cache = forward(params, batch).unwrap();
    let (_, grads) = backward(params, &cache, labels).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();

    let mut probe = params.clone();
    let mut worst = (0.0f64, String::new());
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let orig = probe.weights.tensors_mut()[ti].1[k];
            probe.weights.tensors_mut()[ti].1[k] = orig + eps;
            let up = loss_of(&probe, batch, labels);
            probe.weights.tensors_mut()[ti].1[k] = orig - eps;
            let down = loss_of(&probe, batch, labels);
            probe.weights.tensors_mut()[ti].1[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}
