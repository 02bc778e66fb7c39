//! Positive control: the hyperbolic toral automorphism `[[2, 1], [1, 1]]`.
//!
//! Gluing candidates for a two-segment instance live in adapted
//! coordinates. With `v = A^{ℓ2} p2 − A^{n_end} p1 (mod Z²)` and a lattice
//! shift `m`, the candidate
//!
//! ```text
//! x = p1 + a e_s + ((v + m)_u + c) λ^{−n_end} e_u
//! ```
//!
//! has stable offset `a` at time 0 and unstable offset `c` at the end of
//! the second segment. Only shifts `m` with `|(v+m)_s| < ε λ^{−ℓ2}` and
//! `|(v+m)_u| < ε λ^{s}` can shadow both segments; each such branch carries
//! a `(2048 + 1)²` grid in `(a, c)` over `[−ε, ε]²`.

use serde::{Deserialize, Serialize};

use super::search::{BlockScan, GluingProblem};
use super::{Anchor, SpecificationInstance};
use crate::error::{Error, Result};

/// The cat map on `R²/Z²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusCatSystem {
    pub matrix: [[i64; 2]; 2],
}

impl Default for TorusCatSystem {
    fn default() -> Self {
        Self {
            matrix: [[2, 1], [1, 1]],
        }
    }
}

const PHI: f64 = 1.618_033_988_749_895;

impl TorusCatSystem {
    pub fn determinant(&self) -> i64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }

    /// `(3 + √5) / 2`.
    pub fn lambda_u(&self) -> f64 {
        PHI * PHI
    }

    pub fn lambda_s(&self) -> f64 {
        1.0 / self.lambda_u()
    }

    pub fn e_u(&self) -> [f64; 2] {
        let n = (PHI * PHI + 1.0).sqrt();
        [PHI / n, 1.0 / n]
    }

    pub fn e_s(&self) -> [f64; 2] {
        let n = (PHI * PHI + 1.0).sqrt();
        [1.0 / n, -PHI / n]
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            (m[0][0] as f64 * x[0] + m[0][1] as f64 * x[1]).rem_euclid(1.0),
            (m[1][0] as f64 * x[0] + m[1][1] as f64 * x[1]).rem_euclid(1.0),
        ]
    }

    pub fn orbit(&self, x: [f64; 2], n: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        out.push(cur);
        for _ in 0..n {
            cur = self.apply(cur);
            out.push(cur);
        }
        out
    }

    /// `A^n` with exact integer entries.
    pub fn power(&self, n: usize) -> [[i128; 2]; 2] {
        let m = self.matrix;
        let mut r = [[1i128, 0], [0, 1]];
        for _ in 0..n {
            r = [
                [
                    m[0][0] as i128 * r[0][0] + m[0][1] as i128 * r[1][0],
                    m[0][0] as i128 * r[0][1] + m[0][1] as i128 * r[1][1],
                ],
                [
                    m[1][0] as i128 * r[0][0] + m[1][1] as i128 * r[1][0],
                    m[1][0] as i128 * r[0][1] + m[1][1] as i128 * r[1][1],
                ],
            ];
        }
        r
    }

    /// Transition gap `ceil(ln(2/ε) / ln λ_u) + 2`.
    pub fn default_gap(&self, eps: f64) -> usize {
        ((2.0 / eps).ln() / self.lambda_u().ln()).ceil() as usize + 2
    }
}

pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = |u: f64, v: f64| {
        let r = (u - v).rem_euclid(1.0);
        r.min(1.0 - r)
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

/// Bowen-ball test for the cat map over `n` iterates.
pub fn in_bowen_ball_cat(
    sys: &TorusCatSystem,
    x: [f64; 2],
    reference: [f64; 2],
    n: usize,
    eps: f64,
) -> (bool, f64) {
    let a = sys.orbit(x, n);
    let b = sys.orbit(reference, n);
    let worst = a
        .iter()
        .zip(&b)
        .map(|(p, q)| torus_distance(*p, *q))
        .fold(0.0, f64::max);
    (worst <= eps, worst)
}

/// Grid size per axis for torus points and per branch.
pub const CAT_GRID: i64 = 2048;

/// A lattice branch of the two-segment problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatBranch {
    pub m: [i64; 2],
    /// Stable and unstable components of `v + m`.
    pub stable: f64,
    pub unstable: f64,
}

/// A candidate: branch, grid indices and the resulting torus point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatCandidate {
    pub branch: usize,
    pub a: f64,
    pub c: f64,
    pub point: [f64; 2],
}

/// Two cat-map orbit segments `[0, ℓ1]` and `[s, s + ℓ2]` to be glued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatGluingProblem {
    pub sys: TorusCatSystem,
    /// Grid indices of the segment anchors (`p = index / 2048`).
    pub p1: [i64; 2],
    pub p2: [i64; 2],
    pub len1: usize,
    pub len2: usize,
    pub start2: usize,
    pub eps: f64,
    pub grid: usize,
    pub branches: Vec<CatBranch>,
    ref1: Vec<[f64; 2]>,
    ref2: Vec<[f64; 2]>,
}

fn grid_point(idx: [i64; 2]) -> [f64; 2] {
    [
        idx[0].rem_euclid(CAT_GRID) as f64 / CAT_GRID as f64,
        idx[1].rem_euclid(CAT_GRID) as f64 / CAT_GRID as f64,
    ]
}

impl CatGluingProblem {
    pub fn new(
        sys: TorusCatSystem,
        p1: [i64; 2],
        p2: [i64; 2],
        len1: usize,
        len2: usize,
        gap: usize,
        eps: f64,
    ) -> Self {
        let start2 = len1 + gap;
        let n_end = start2 + len2;
        // v = A^{ℓ2} p2 − A^{n_end} p1 mod 1, exactly on the 1/2048 lattice.
        let apply = |m: [[i128; 2]; 2], p: [i64; 2]| {
            [
                m[0][0] * p[0] as i128 + m[0][1] * p[1] as i128,
                m[1][0] * p[0] as i128 + m[1][1] * p[1] as i128,
            ]
        };
        let q2 = apply(sys.power(len2), p2);
        let q1 = apply(sys.power(n_end), p1);
        let g = CAT_GRID as i128;
        let v = [
            ((q2[0] - q1[0]).rem_euclid(g)) as f64 / CAT_GRID as f64,
            ((q2[1] - q1[1]).rem_euclid(g)) as f64 / CAT_GRID as f64,
        ];
        let (es, eu) = (sys.e_s(), sys.e_u());
        let lu = sys.lambda_u();
        let s_bound = 1.01 * eps * lu.powi(-(len2 as i32));
        let u_bound = 1.01 * eps * lu.powi(start2 as i32);
        let m2_range = (u_bound / eu[1]).ceil() as i64 + 2;
        let mut branches = Vec::new();
        let mut fallback: Option<CatBranch> = None;
        for m2 in -m2_range..=m2_range {
            let w2 = v[1] + m2 as f64;
            let m1 = (PHI * w2 - v[0]).round() as i64;
            let w = [v[0] + m1 as f64, w2];
            let b = CatBranch {
                m: [m1, m2],
                stable: w[0] * es[0] + w[1] * es[1],
                unstable: w[0] * eu[0] + w[1] * eu[1],
            };
            if b.unstable.abs() >= u_bound {
                continue;
            }
            if b.stable.abs() < s_bound {
                branches.push(b);
            } else if fallback.is_none_or(|f| b.stable.abs() < f.stable.abs()) {
                fallback = Some(b);
            }
        }
        branches.sort_by(|x, y| {
            x.stable
                .abs()
                .partial_cmp(&y.stable.abs())
                .unwrap()
                .then(x.m.cmp(&y.m))
        });
        if branches.is_empty() {
            branches.extend(fallback);
        }
        let ref1 = sys.orbit(grid_point(p1), len1);
        let ref2 = sys.orbit(grid_point(p2), len2);
        Self {
            sys,
            p1,
            p2,
            len1,
            len2,
            start2,
            eps,
            grid: CAT_GRID as usize,
            branches,
            ref1,
            ref2,
        }
    }

    /// From a two-segment instance with torus anchors on the 2048 grid.
    pub fn from_instance(sys: TorusCatSystem, inst: &SpecificationInstance) -> Result<Self> {
        if inst.segments.len() != 2 {
            return Err(Error::InvalidInstance(
                "the cat-map search takes two segments".into(),
            ));
        }
        let idx = |i: usize| -> Result<[i64; 2]> {
            match inst.segments[i].anchor {
                Anchor::TorusPoint { point } => {
                    let q = [point[0] * CAT_GRID as f64, point[1] * CAT_GRID as f64];
                    if q.iter().any(|c| (c - c.round()).abs() > 1e-9) {
                        return Err(Error::InvalidInstance(
                            "torus anchors must lie on the 2048 grid".into(),
                        ));
                    }
                    Ok([q[0].round() as i64, q[1].round() as i64])
                }
                _ => Err(Error::InvalidInstance(
                    "cat-map segments need torus anchors".into(),
                )),
            }
        };
        let (s1, s2) = (inst.segments[0], inst.segments[1]);
        let as_steps = |x: f64| -> Result<usize> {
            if x < 0.0 || x.fract() != 0.0 {
                return Err(Error::InvalidInstance(
                    "cat-map times must be nonnegative integers".into(),
                ));
            }
            Ok(x as usize)
        };
        let len1 = as_steps(s1.end - s1.start)?;
        let len2 = as_steps(s2.end - s2.start)?;
        let gap = as_steps(s2.start - s1.end)?;
        if (gap as f64) < inst.gap {
            return Err(Error::InvalidInstance(
                "segments closer than the gap".into(),
            ));
        }
        Ok(Self::new(sys, idx(0)?, idx(1)?, len1, len2, gap, inst.eps))
    }

    fn n_end(&self) -> usize {
        self.start2 + self.len2
    }

    fn axis(&self, i: usize) -> f64 {
        -self.eps + 2.0 * self.eps * i as f64 / self.grid as f64
    }

    pub fn candidate(&self, branch: usize, ia: usize, ic: usize) -> CatCandidate {
        let b = &self.branches[branch];
        let (a, c) = (self.axis(ia), self.axis(ic));
        let beta = (b.unstable + c) / self.sys.lambda_u().powi(self.n_end() as i32);
        let p1 = grid_point(self.p1);
        let (es, eu) = (self.sys.e_s(), self.sys.e_u());
        let point = [
            (p1[0] + a * es[0] + beta * eu[0]).rem_euclid(1.0),
            (p1[1] + a * es[1] + beta * eu[1]).rem_euclid(1.0),
        ];
        CatCandidate {
            branch,
            a,
            c,
            point,
        }
    }

    /// Deviation from both segments by direct iteration; stops early once
    /// it exceeds `cutoff`.
    pub fn deviation_bounded(&self, x: [f64; 2], cutoff: f64) -> f64 {
        let mut cur = x;
        let mut worst: f64 = 0.0;
        for j in 0..=self.n_end() {
            if j > 0 {
                cur = self.sys.apply(cur);
            }
            let r = if j <= self.len1 {
                Some(self.ref1[j])
            } else if j >= self.start2 {
                Some(self.ref2[j - self.start2])
            } else {
                None
            };
            if let Some(r) = r {
                worst = worst.max(torus_distance(cur, r));
                if worst > cutoff {
                    return worst;
                }
            }
        }
        worst
    }
}

impl GluingProblem for CatGluingProblem {
    type Candidate = CatCandidate;

    fn blocks(&self) -> usize {
        self.branches.len() * (self.grid + 1)
    }

    fn total_candidates(&self) -> u64 {
        (self.branches.len() * (self.grid + 1) * (self.grid + 1)) as u64
    }

    fn resolution(&self) -> f64 {
        2.0 * self.eps / self.grid as f64
    }

    fn seed(&self) -> (usize, CatCandidate) {
        let mid = self.grid / 2;
        (mid * (self.grid + 1) + mid, self.candidate(0, mid, mid))
    }

    fn deviation(&self, c: &CatCandidate) -> f64 {
        self.deviation_bounded(c.point, f64::INFINITY)
    }

    fn scan_block(&self, block: usize, cutoff: f64, eps: f64) -> BlockScan<CatCandidate> {
        let row = self.grid + 1;
        let (branch, ia) = (block / row, block % row);
        let mut scan = BlockScan::empty();
        for ic in 0..row {
            let c = self.candidate(branch, ia, ic);
            let d = self.deviation_bounded(c.point, cutoff);
            if d > cutoff {
                scan.pruned += 1;
                continue;
            }
            scan.record(block * row + ic, c, d, eps);
            if d < eps {
                break;
            }
        }
        scan
    }
}

/// Single-segment problem over the full `n × n` torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CatGridProblem {
    pub sys: TorusCatSystem,
    pub n: usize,
    pub steps: usize,
    reference: Vec<[f64; 2]>,
}

impl CatGridProblem {
    pub fn new(sys: TorusCatSystem, anchor: [f64; 2], steps: usize, n: usize) -> Self {
        Self {
            sys,
            n,
            steps,
            reference: sys.orbit(anchor, steps),
        }
    }

    fn point(&self, i: usize) -> [f64; 2] {
        [
            (i / self.n) as f64 / self.n as f64,
            (i % self.n) as f64 / self.n as f64,
        ]
    }

    fn bounded(&self, x: [f64; 2], cutoff: f64) -> f64 {
        let mut cur = x;
        let mut worst: f64 = 0.0;
        for (j, r) in self.reference.iter().enumerate() {
            if j > 0 {
                cur = self.sys.apply(cur);
            }
            worst = worst.max(torus_distance(cur, *r));
            if worst > cutoff {
                break;
            }
        }
        worst
    }
}

impl GluingProblem for CatGridProblem {
    type Candidate = [f64; 2];

    fn blocks(&self) -> usize {
        self.n
    }

    fn total_candidates(&self) -> u64 {
        (self.n * self.n) as u64
    }

    fn resolution(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn seed(&self) -> (usize, [f64; 2]) {
        (0, self.point(0))
    }

    fn deviation(&self, c: &[f64; 2]) -> f64 {
        self.bounded(*c, f64::INFINITY)
    }

    fn scan_block(&self, block: usize, cutoff: f64, eps: f64) -> BlockScan<[f64; 2]> {
        let mut scan = BlockScan::empty();
        for j in 0..self.n {
            let i = block * self.n + j;
            let x = self.point(i);
            let d = self.bounded(x, cutoff);
            if d > cutoff {
                scan.pruned += 1;
                continue;
            }
            scan.record(i, x, d, eps);
            if d < eps {
                break;
            }
        }
        scan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specification::search::{search_gluing, Outcome};
    use crate::specification::Segment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn system_invariants() {
        let s = TorusCatSystem::default();
        assert_eq!(s.determinant(), 1);
        assert!(s.lambda_u() > 1.0 && s.lambda_s() < 1.0);
        assert!((s.lambda_u() * s.lambda_s() - 1.0).abs() < 1e-15);
        assert!((s.lambda_u() - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        let (u, v) = (s.e_u(), s.e_s());
        assert!((u[0] * v[0] + u[1] * v[1]).abs() < 1e-15);
        // A e_u = λ_u e_u.
        let au = [2.0 * u[0] + u[1], u[0] + u[1]];
        assert!(
            (au[0] - s.lambda_u() * u[0]).abs() < 1e-14
                && (au[1] - s.lambda_u() * u[1]).abs() < 1e-14
        );
        assert_eq!(s.default_gap(0.05), 6);
    }

    #[test]
    fn bowen_ball_exit_time() {
        let s = TorusCatSystem::default();
        let (x0, eps, d0) = ([0.3, 0.4], 0.05, 1e-6);
        let u = s.e_u();
        let x = [x0[0] + d0 * u[0], x0[1] + d0 * u[1]];
        assert_eq!(in_bowen_ball_cat(&s, x0, x0, 30, eps), (true, 0.0));
        let predicted = ((eps / d0).ln() / s.lambda_u().ln()).ceil() as usize;
        let stays = (0..40)
            .take_while(|&n| in_bowen_ball_cat(&s, x, x0, n, eps).0)
            .last()
            .unwrap();
        assert_eq!(stays + 1, predicted);
        assert!(in_bowen_ball_cat(&s, [0.9, 0.1], x0, 30, f64::INFINITY).0);
    }

    #[test]
    fn single_segment_finds_its_anchor() {
        let s = TorusCatSystem::default();
        let n = 256;
        let anchor = [37.0 / n as f64, 201.0 / n as f64];
        let p = CatGridProblem::new(s, anchor, 5, n);
        let r = search_gluing(&p, 1e-9);
        match r.outcome {
            Outcome::Witness {
                point,
                max_deviation,
                ..
            } => {
                assert_eq!(point, anchor);
                assert_eq!(max_deviation, 0.0);
            }
            _ => panic!("expected the anchor as witness"),
        }
    }

    #[test]
    fn two_segment_witnesses() {
        let s = TorusCatSystem::default();
        let eps = 0.05;
        let gap = s.default_gap(eps);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let p1 = [rng.gen_range(0..CAT_GRID), rng.gen_range(0..CAT_GRID)];
            let p2 = [rng.gen_range(0..CAT_GRID), rng.gen_range(0..CAT_GRID)];
            let prob = CatGluingProblem::new(s, p1, p2, 10, 10, gap, eps);
            let r = search_gluing(&prob, eps);
            assert!(
                r.is_witness(),
                "no witness for {p1:?} {p2:?}: {:?}",
                r.deviation()
            );
            // Independent re-check of the witness orbit.
            if let Outcome::Witness {
                point,
                max_deviation,
                ..
            } = r.outcome
            {
                let (ok1, d1) = in_bowen_ball_cat(&s, point.point, grid_point(p1), 10, eps);
                let x2 = s.orbit(point.point, 10 + gap)[10 + gap];
                let (ok2, d2) = in_bowen_ball_cat(&s, x2, grid_point(p2), 10, eps);
                assert!(ok1 && ok2 && d1.max(d2) < eps);
                assert!((d1.max(d2) - max_deviation).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn from_instance_roundtrip() {
        let s = TorusCatSystem::default();
        let inst = SpecificationInstance {
            segments: vec![
                Segment {
                    start: 0.0,
                    end: 10.0,
                    anchor: Anchor::TorusPoint { point: [0.5, 0.25] },
                },
                Segment {
                    start: 16.0,
                    end: 26.0,
                    anchor: Anchor::TorusPoint {
                        point: [0.125, 1023.0 / 2048.0],
                    },
                },
            ],
            gap: 6.0,
            eps: 0.05,
        };
        let p = CatGluingProblem::from_instance(s, &inst).unwrap();
        assert_eq!(p.p1, [1024, 512]);
        assert_eq!(p.start2, 16);
        let bad = SpecificationInstance {
            segments: vec![inst.segments[0]],
            ..inst
        };
        assert!(CatGluingProblem::from_instance(s, &bad).is_err());
    }
}
