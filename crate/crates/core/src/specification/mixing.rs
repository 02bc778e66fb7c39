//! Topological mixing on a sampled box graph.

use serde::{Deserialize, Serialize};

use super::catmap::TorusCatSystem;
use crate::error::{Error, Result};
use crate::flow::{GeometricLorenzParams, Side};
use crate::return_map::ReturnMapParams;

/// Samples per box used by the builders.
pub const SAMPLES_PER_BOX: usize = 100;

/// Boxes with the sampled one-step transitions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGraph {
    pub n_boxes: usize,
    /// Sorted, deduplicated successors of each box.
    pub edges: Vec<Vec<usize>>,
    /// Boxes that received at least one sample.
    pub visited: Vec<bool>,
}

impl BoxGraph {
    /// Builds the graph from `(from, to)` sample pairs.
    pub fn from_samples(n_boxes: usize, samples: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges = vec![Vec::new(); n_boxes];
        let mut visited = vec![false; n_boxes];
        for (a, b) in samples {
            visited[a] = true;
            edges[a].push(b);
        }
        for e in &mut edges {
            e.sort_unstable();
            e.dedup();
        }
        Self {
            n_boxes,
            edges,
            visited,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

fn interval_box(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    (((x - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// One-dimensional factor graph of the return map: `n` intervals of
/// `[−1, 1]`, each sampled at `SAMPLES_PER_BOX` interior points and mapped
/// by α.
pub fn lorenz_box_graph(params: &GeometricLorenzParams, n: usize) -> BoxGraph {
    let rp = ReturnMapParams::from(params);
    let w = 2.0 / n as f64;
    let samples = (0..n).flat_map(|i| {
        (0..SAMPLES_PER_BOX).filter_map(move |j| {
            let x = -1.0 + w * (i as f64 + (j as f64 + 0.5) / SAMPLES_PER_BOX as f64);
            if x == 0.0 {
                return None;
            }
            Some((i, interval_box(rp.alpha_on(Side::of(x), x), -1.0, 1.0, n)))
        })
    });
    BoxGraph::from_samples(n, samples)
}

/// `n × n` boxes on the torus, each sampled on a 10 × 10 interior grid.
pub fn catmap_box_graph(sys: &TorusCatSystem, n: usize) -> BoxGraph {
    let side = (SAMPLES_PER_BOX as f64).sqrt().round() as usize;
    let w = 1.0 / n as f64;
    let mut samples = Vec::with_capacity(n * n * side * side);
    for i in 0..n {
        for j in 0..n {
            for a in 0..side {
                for b in 0..side {
                    let p = [
                        w * (i as f64 + (a as f64 + 0.5) / side as f64),
                        w * (j as f64 + (b as f64 + 0.5) / side as f64),
                    ];
                    let q = sys.apply(p);
                    let to = interval_box(q[0], 0.0, 1.0, n) * n + interval_box(q[1], 0.0, 1.0, n);
                    samples.push((i * n + j, to));
                }
            }
        }
    }
    BoxGraph::from_samples(n * n, samples)
}

/// Rigid rotation `x ↦ x + shift (mod 1)` on `n` boxes.
pub fn rotation_box_graph(shift: f64, n: usize) -> BoxGraph {
    let w = 1.0 / n as f64;
    let samples = (0..n).flat_map(|i| {
        (0..SAMPLES_PER_BOX).map(move |j| {
            let x = w * (i as f64 + (j as f64 + 0.5) / SAMPLES_PER_BOX as f64);
            (i, interval_box((x + shift).rem_euclid(1.0), 0.0, 1.0, n))
        })
    });
    BoxGraph::from_samples(n, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub mixing: bool,
    pub strongly_connected: bool,
    /// gcd of cycle lengths; 0 when the graph is not strongly connected.
    pub period: usize,
    /// Smallest `n ≤ N_max` with every visited box reaching every visited
    /// box in exactly `n` steps.
    pub mixing_time: Option<usize>,
    pub visited: usize,
    pub edges: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bfs(n: usize, root: usize, succ: &dyn Fn(usize) -> Vec<usize>) -> Vec<Option<usize>> {
    let mut level = vec![None; n];
    level[root] = Some(0);
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let l = level[u].unwrap();
        for v in succ(u) {
            if level[v].is_none() {
                level[v] = Some(l + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Strong connectivity, period, and the exact-step reachability time of the
/// graph restricted to visited boxes.
pub fn test_mixing(graph: &BoxGraph, n_max: usize) -> Result<MixingReport> {
    let n = graph.n_boxes;
    let nodes: Vec<usize> = (0..n).filter(|&i| graph.visited[i]).collect();
    if let Some(&bad) = nodes.iter().find(|&&i| graph.edges[i].is_empty()) {
        return Err(Error::InsufficientSampling(format!(
            "box {bad} has no outgoing sample"
        )));
    }
    let edges = graph.edge_count();
    let Some(&root) = nodes.first() else {
        return Err(Error::InsufficientSampling("no box was sampled".into()));
    };
    let out = |u: usize| {
        graph.edges[u]
            .iter()
            .copied()
            .filter(|&v| graph.visited[v])
            .collect::<Vec<_>>()
    };
    let mut rev = vec![Vec::new(); n];
    for &u in &nodes {
        for v in out(u) {
            rev[v].push(u);
        }
    }
    let fwd = bfs(n, root, &out);
    let bwd = bfs(n, root, &|u| rev[u].clone());
    let strongly_connected = nodes.iter().all(|&i| fwd[i].is_some() && bwd[i].is_some());
    let report = |strongly_connected, period, mixing_time: Option<usize>| MixingReport {
        mixing: strongly_connected && period == 1 && mixing_time.is_some(),
        strongly_connected,
        period,
        mixing_time,
        visited: nodes.len(),
        edges,
    };
    if !strongly_connected {
        return Ok(report(false, 0, None));
    }
    let mut period = 0;
    for &u in &nodes {
        for v in out(u) {
            let d = fwd[u].unwrap() + 1;
            let lv = fwd[v].unwrap();
            period = gcd(period, d.abs_diff(lv));
        }
    }
    if period != 1 {
        return Ok(report(true, period, None));
    }
    // reach[v] = boxes reachable from v in exactly `step` steps, as bitsets.
    let words = n.div_ceil(64);
    let mut full = vec![0u64; words];
    for &i in &nodes {
        full[i / 64] |= 1 << (i % 64);
    }
    let mut reach = vec![vec![0u64; words]; n];
    for &u in &nodes {
        for v in out(u) {
            reach[u][v / 64] |= 1 << (v % 64);
        }
    }
    for step in 1..=n_max {
        if nodes.iter().all(|&u| reach[u] == full) {
            return Ok(report(true, 1, Some(step)));
        }
        let mut next = vec![vec![0u64; words]; n];
        for &u in &nodes {
            for v in out(u) {
                for (a, b) in next[u].iter_mut().zip(&reach[v]) {
                    *a |= b;
                }
            }
        }
        reach = next;
    }
    Ok(report(true, 1, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_factor_graph_is_mixing() {
        let g = lorenz_box_graph(&GeometricLorenzParams::default(), 1 << 10);
        let r = test_mixing(&g, 200).unwrap();
        assert!(r.strongly_connected);
        assert_eq!(r.period, 1);
        assert!(r.mixing, "{r:?}");
    }

    #[test]
    fn catmap_graph_is_mixing() {
        let g = catmap_box_graph(&TorusCatSystem::default(), 64);
        let r = test_mixing(&g, 50).unwrap();
        assert!(r.mixing, "{r:?}");
    }

    #[test]
    fn rotation_is_not_mixing() {
        let g = rotation_box_graph(0.25, 64);
        assert!(g.edges.iter().all(|e| e.len() == 1));
        let r = test_mixing(&g, 200).unwrap();
        assert!(!r.mixing);
        assert!(!r.strongly_connected);
    }

    #[test]
    fn cycle_has_its_length_as_period() {
        let g = BoxGraph::from_samples(5, (0..5).map(|i| (i, (i + 1) % 5)));
        let r = test_mixing(&g, 100).unwrap();
        assert!(r.strongly_connected);
        assert_eq!(r.period, 5);
        assert!(!r.mixing);
    }

    #[test]
    fn cycle_with_a_chord_mixes_at_the_wielandt_bound() {
        // 0→1→…→4→0 plus 4→1: cycle lengths 5 and 4, primitive exponent
        // (n−1)² + 1 = 17.
        let mut s: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        s.push((4, 1));
        let r = test_mixing(&BoxGraph::from_samples(5, s), 100).unwrap();
        assert_eq!(r.mixing_time, Some(17));
        assert!(test_mixing(
            &BoxGraph::from_samples(5, vec![(0, 1), (4, 1), (1, 2), (2, 3), (3, 4), (4, 0)]),
            16
        )
        .map(|r| !r.mixing)
        .unwrap());
    }

    #[test]
    fn unsampled_targets_are_ignored_and_dead_ends_rejected() {
        let g = BoxGraph {
            n_boxes: 3,
            edges: vec![vec![0, 2], vec![], vec![]],
            visited: vec![true, false, false],
        };
        assert!(test_mixing(&g, 5).unwrap().mixing);
        let bad = BoxGraph {
            n_boxes: 2,
            edges: vec![vec![1], vec![]],
            visited: vec![true, true],
        };
        assert!(matches!(
            test_mixing(&bad, 5),
            Err(Error::InsufficientSampling(_))
        ));
    }
}
