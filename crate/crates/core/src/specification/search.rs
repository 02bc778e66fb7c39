//! Exhaustive grid search with a deterministic reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Result of scanning one block of consecutive candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScan<C> {
    /// First candidate in block order with deviation `< eps`.
    pub witness: Option<(usize, C, f64)>,
    /// Smallest deviation among candidates not pruned (ties: lowest index).
    pub best: Option<(usize, C, f64)>,
    /// Candidates kept on a lower bound only, in increasing index order.
    /// The search evaluates them exactly when they could still matter.
    pub pending: Vec<(usize, C, f64)>,
    pub evaluated: u64,
    pub pruned: u64,
}

impl<C> BlockScan<C> {
    pub fn empty() -> Self {
        Self {
            witness: None,
            best: None,
            pending: Vec::new(),
            evaluated: 0,
            pruned: 0,
        }
    }

    /// Records an evaluated candidate; indices must arrive in increasing order.
    pub fn record(&mut self, index: usize, c: C, dev: f64, eps: f64)
    where
        C: Clone,
    {
        self.evaluated += 1;
        if dev < eps && self.witness.is_none() {
            self.witness = Some((index, c.clone(), dev));
        }
        if self.best.as_ref().is_none_or(|b| dev < b.2) {
            self.best = Some((index, c, dev));
        }
    }
}

/// A candidate grid split into consecutive blocks.
///
/// `scan_block` may prune a candidate only when a lower bound on its
/// deviation is strictly above `cutoff`. Every other candidate is either
/// recorded with its exact deviation or returned as pending with a lower
/// bound.
pub trait GluingProblem: Sync {
    type Candidate: Clone + Send + Sync + Serialize;

    fn blocks(&self) -> usize;
    fn total_candidates(&self) -> u64;
    /// Grid spacing, reported with failures.
    fn resolution(&self) -> f64;
    /// A deterministic starting candidate whose deviation bounds the optimum.
    fn seed(&self) -> (usize, Self::Candidate);
    /// Exact deviation of one candidate.
    fn deviation(&self, c: &Self::Candidate) -> f64;
    fn scan_block(&self, block: usize, cutoff: f64, eps: f64) -> BlockScan<Self::Candidate>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome<C> {
    Witness {
        point: C,
        index: usize,
        max_deviation: f64,
    },
    ExhaustedNoWitness {
        grid_resolution: f64,
        best_candidate: C,
        best_index: usize,
        best_deviation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowingResult<C> {
    pub outcome: Outcome<C>,
    pub eps: f64,
    pub candidates_total: u64,
    pub candidates_evaluated: u64,
    pub candidates_pruned: u64,
}

impl<C> ShadowingResult<C> {
    pub fn is_witness(&self) -> bool {
        matches!(self.outcome, Outcome::Witness { .. })
    }

    pub fn deviation(&self) -> f64 {
        match &self.outcome {
            Outcome::Witness { max_deviation, .. } => *max_deviation,
            Outcome::ExhaustedNoWitness { best_deviation, .. } => *best_deviation,
        }
    }
}

/// Blocks scanned in parallel before checking for a witness.
const WINDOW: usize = 64;
/// Pending candidates evaluated per parallel batch.
const BATCH: usize = 64;

struct Pending<C> {
    index: usize,
    candidate: C,
    bound: f64,
    exact: Option<f64>,
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

/// Scans the grid in block order. Returns the first witness in index
/// order, or the minimal deviation over the grid.
pub fn search_gluing<P: GluingProblem>(problem: &P, eps: f64) -> ShadowingResult<P::Candidate> {
    let (seed_index, seed) = problem.seed();
    let seed_dev = problem.deviation(&seed);
    let cutoff = seed_dev.max(eps);
    let mut best = (seed_index, seed, seed_dev);
    let mut evaluated = 1u64;
    let mut pruned = 0u64;
    let mut pending: Vec<Pending<P::Candidate>> = Vec::new();
    let witness = |point, index, max_deviation, evaluated, pruned| ShadowingResult {
        outcome: Outcome::Witness {
            point,
            index,
            max_deviation,
        },
        eps,
        candidates_total: problem.total_candidates(),
        candidates_evaluated: evaluated,
        candidates_pruned: pruned,
    };
    let n = problem.blocks();
    let mut start = 0;
    while start < n {
        let end = (start + WINDOW).min(n);
        let scans: Vec<BlockScan<P::Candidate>> = (start..end)
            .into_par_iter()
            .map(|b| problem.scan_block(b, cutoff, eps))
            .collect();
        for scan in scans {
            evaluated += scan.evaluated;
            pruned += scan.pruned;
            let limit = scan.witness.as_ref().map_or(usize::MAX, |w| w.0);
            let first = pending.len();
            pending.extend(
                scan.pending
                    .into_iter()
                    .map(|(index, candidate, bound)| Pending {
                        index,
                        candidate,
                        bound,
                        exact: None,
                    }),
            );
            let urgent: Vec<usize> = (first..pending.len())
                .filter(|&i| pending[i].bound < eps && pending[i].index < limit)
                .collect();
            let devs: Vec<f64> = urgent
                .par_iter()
                .map(|&i| problem.deviation(&pending[i].candidate))
                .collect();
            for (&i, &d) in urgent.iter().zip(&devs) {
                evaluated += 1;
                pending[i].exact = Some(d);
                if d < eps {
                    let p = pending.swap_remove(i);
                    return witness(p.candidate, p.index, d, evaluated, pruned);
                }
            }
            if let Some((index, point, dev)) = scan.witness {
                return witness(point, index, dev, evaluated, pruned);
            }
            if let Some(b) = scan.best {
                if better((b.0, b.2), (best.0, best.2)) {
                    best = b;
                }
            }
        }
        start = end;
    }
    for p in &pending {
        if let Some(d) = p.exact {
            if better((p.index, d), (best.0, best.2)) {
                best = (p.index, p.candidate.clone(), d);
            }
        }
    }
    let mut open: Vec<Pending<P::Candidate>> =
        pending.into_iter().filter(|p| p.exact.is_none()).collect();
    open.sort_by(|a, b| a.bound.total_cmp(&b.bound).then(a.index.cmp(&b.index)));
    let mut cursor = 0;
    while cursor < open.len() && open[cursor].bound <= best.2 {
        let stop = (cursor + BATCH).min(open.len());
        let devs: Vec<f64> = open[cursor..stop]
            .par_iter()
            .map(|p| problem.deviation(&p.candidate))
            .collect();
        for (p, d) in open[cursor..stop].iter().zip(devs) {
            evaluated += 1;
            if better((p.index, d), (best.0, best.2)) {
                best = (p.index, p.candidate.clone(), d);
            }
        }
        cursor = stop;
    }
    pruned += (open.len() - cursor) as u64;
    ShadowingResult {
        outcome: Outcome::ExhaustedNoWitness {
            grid_resolution: problem.resolution(),
            best_candidate: best.1,
            best_index: best.0,
            best_deviation: best.2,
        },
        eps,
        candidates_total: problem.total_candidates(),
        candidates_evaluated: evaluated,
        candidates_pruned: pruned,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Points `i / n` on a line, deviation `|x − target|`.
    struct Line {
        n: usize,
        target: f64,
    }

    impl GluingProblem for Line {
        type Candidate = f64;

        fn blocks(&self) -> usize {
            self.n
        }
        fn total_candidates(&self) -> u64 {
            (self.n * 10) as u64
        }
        fn resolution(&self) -> f64 {
            1.0 / (self.n * 10) as f64
        }
        fn seed(&self) -> (usize, f64) {
            (0, 0.0)
        }
        fn deviation(&self, c: &f64) -> f64 {
            (c - self.target).abs()
        }
        fn scan_block(&self, block: usize, cutoff: f64, eps: f64) -> BlockScan<f64> {
            let mut scan = BlockScan::empty();
            for j in 0..10 {
                let i = block * 10 + j;
                let x = i as f64 * self.resolution();
                let d = self.deviation(&x);
                if d > cutoff {
                    scan.pruned += 1;
                    continue;
                }
                scan.record(i, x, d, eps);
            }
            scan
        }
    }

    #[test]
    fn finds_first_witness_in_order() {
        let p = Line {
            n: 100,
            target: 0.5,
        };
        let r = search_gluing(&p, 0.0015);
        match r.outcome {
            Outcome::Witness { index, .. } => assert_eq!(index, 499),
            _ => panic!("expected witness"),
        }
    }

    #[test]
    fn exhaustion_reports_true_minimum() {
        let p = Line {
            n: 100,
            target: 0.50037,
        };
        let r = search_gluing(&p, 1e-5);
        match r.outcome {
            Outcome::ExhaustedNoWitness {
                best_index,
                best_deviation,
                ..
            } => {
                assert_eq!(best_index, 500);
                assert!((best_deviation - 0.00037).abs() < 1e-12);
            }
            _ => panic!("expected failure"),
        }
        assert_eq!(r.candidates_evaluated + r.candidates_pruned, 1001);
    }

    /// Same line, but every candidate is deferred with half its deviation
    /// as the bound.
    struct Deferred(Line);

    impl GluingProblem for Deferred {
        type Candidate = f64;

        fn blocks(&self) -> usize {
            self.0.blocks()
        }
        fn total_candidates(&self) -> u64 {
            self.0.total_candidates()
        }
        fn resolution(&self) -> f64 {
            self.0.resolution()
        }
        fn seed(&self) -> (usize, f64) {
            self.0.seed()
        }
        fn deviation(&self, c: &f64) -> f64 {
            self.0.deviation(c)
        }
        fn scan_block(&self, block: usize, cutoff: f64, _eps: f64) -> BlockScan<f64> {
            let mut scan = BlockScan::empty();
            for j in 0..10 {
                let i = block * 10 + j;
                let x = i as f64 * self.resolution();
                let bound = 0.5 * self.deviation(&x);
                if bound > cutoff {
                    scan.pruned += 1;
                } else {
                    scan.pending.push((i, x, bound));
                }
            }
            scan
        }
    }

    #[test]
    fn deferred_candidates_give_the_same_answers() {
        let w = search_gluing(
            &Deferred(Line {
                n: 100,
                target: 0.5,
            }),
            0.0015,
        );
        assert!(matches!(w.outcome, Outcome::Witness { index: 499, .. }));
        let r = search_gluing(
            &Deferred(Line {
                n: 100,
                target: 0.50037,
            }),
            1e-5,
        );
        assert!(matches!(
            r.outcome,
            Outcome::ExhaustedNoWitness {
                best_index: 500,
                ..
            }
        ));
        assert_eq!(r.candidates_evaluated + r.candidates_pruned, 1001);
        assert!(r.candidates_evaluated <= 1 + 2 * BATCH as u64);
    }
}
