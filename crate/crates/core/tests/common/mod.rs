#![allow(dead_code)]

use robust_consensus::graph::Graph;
use robust_consensus::maps::{ReceiveMap, TransmitMap};

/// Direct transcription of one robust-consensus iteration over a dense
/// adjacency matrix, with `noise[i][j]` the draw on reception `i <- j`.
pub fn oracle_step(
    graph: &Graph,
    h: &TransmitMap,
    f: &ReceiveMap,
    x: &[f64],
    noise: &[Vec<f64>],
    alpha: f64,
) -> Vec<f64> {
    let n = x.len();
    let a = graph.adjacency();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                s += f.eval(h.eval(x[i]) - h.eval(x[j]) - noise[i][j]);
            }
        }
        out[i] = x[i] - alpha * s;
    }
    out
}

/// Flattens a dense noise matrix into the engine's directed-slot order.
pub fn slot_noise(graph: &Graph, noise: &[Vec<f64>]) -> Vec<f64> {
    let mut v = Vec::with_capacity(graph.directed_edge_count());
    for i in 0..graph.node_count() {
        for &j in graph.neighbors(i) {
            v.push(noise[i][j]);
        }
    }
    v
}
