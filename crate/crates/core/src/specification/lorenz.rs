//! Gluing the singularity to a point of the strong stable manifold of the
//! periodic orbit.
//!
//! Segment 1 rests at the origin on `[−T1, 0]`; segment 2 follows the orbit
//! of a target `w ∈ W^ss(p)` on `[T, T + T2]`. A gluing orbit must sit near
//! the separatrix at time `T` and near `w` at the same time, so a candidate
//! is its position `z ∈ Σ` at time `T`. The junction deviation is the
//! Σ-distance from `z` to the separatrix trace up to `T`; the orbit deviation
//! is the sampled distance between the orbits of `z` and `w` on `[0, T2]`.
//!
//! Candidates are laid out on an adapted grid: the first coordinate is the
//! `x` reached after the target's first `n2` returns, pulled back along the
//! target's itinerary, so the expanding direction is resolved at the final
//! time rather than at the junction.

use serde::{Deserialize, Serialize};

use super::search::{BlockScan, GluingProblem};
use super::{deviation_step, Anchor, Segment, SpecificationInstance};
use crate::error::{Error, Result};
use crate::flow::{CrossSectionPoint, FlightPlan, GeometricLorenzParams, Side};
use crate::manifolds::{GapCertificate, HolonomyChart};
use crate::return_map::ReturnMapParams;

/// Default length of each prescribed segment.
pub const SEGMENT_LENGTH: f64 = 20.0;
/// Spacing of the candidate grid in both coordinates.
pub const GRID_STEP: f64 = 1e-4;
/// Sampling step of the lower-bound pass.
pub const COARSE_DT: f64 = 0.05;
/// Deepest preimage level searched for the target.
pub const MAX_TARGET_DEPTH: usize = 16;

/// The point whose orbit the second segment prescribes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetChoice {
    pub point: CrossSectionPoint,
    /// Returns needed to land on the stable leaf of `p`.
    pub depth: usize,
    /// Smallest `|x|` along the target's crossings within the segment.
    pub min_abs_x: f64,
}

fn preimages(rp: &ReturnMapParams, x: f64, depth: usize) -> Vec<f64> {
    let mut level = vec![x];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(2 * level.len());
        for &u in &level {
            for side in [Side::Minus, Side::Plus] {
                if let Some(v) = rp.alpha_inverse(side, u) {
                    if v != 0.0 {
                        next.push(v);
                    }
                }
            }
        }
        level = next;
    }
    level
}

/// Picks the shallowest preimage of `x*` whose `u`-coordinate lies in the
/// certified strip, nearest the strip centre, placed on the unstable curve.
pub fn choose_target(
    chart: &HolonomyChart,
    cert: &GapCertificate,
    segment: f64,
) -> Result<TargetChoice> {
    let rp = ReturnMapParams::from(&chart.params);
    let centre = 0.5 * (cert.strip.0 + cert.strip.1);
    for depth in 0..=MAX_TARGET_DEPTH {
        let mut best: Option<f64> = None;
        for x in preimages(&rp, chart.x_star, depth) {
            let u = x - chart.x_star;
            if u < cert.strip.0 || u > cert.strip.1 {
                continue;
            }
            if best.is_none_or(|b| (u - centre).abs() < (b - chart.x_star - centre).abs()) {
                best = Some(x);
            }
        }
        if let Some(x) = best {
            let point = CrossSectionPoint::new(x, chart.curve.g(x)?);
            let plan = FlightPlan::new(&chart.params, &point.to_state(), segment);
            let min_abs_x = std::iter::once(point)
                .chain(plan.crossings().into_iter().map(|c| c.1))
                .map(|c| c.x.abs())
                .fold(f64::INFINITY, f64::min);
            return Ok(TargetChoice {
                point,
                depth,
                min_abs_x,
            });
        }
    }
    Err(Error::NoneFound(format!(
        "no preimage of x* in the strip up to depth {MAX_TARGET_DEPTH}"
    )))
}

/// A candidate position on Σ at the junction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzCandidate {
    /// Grid coordinate: `x` after the target's first `n2` returns.
    pub x_end: f64,
    pub point: CrossSectionPoint,
}

/// Deviation split by segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationParts {
    pub junction: f64,
    pub orbit: f64,
}

#[derive(Debug, Clone)]
pub struct LorenzGluingProblem {
    params: GeometricLorenzParams,
    rp: ReturnMapParams,
    pub t_gap: f64,
    /// Length of both segments.
    pub segment: f64,
    pub eps: f64,
    pub h: f64,
    pub target: TargetChoice,
    pub trace: Vec<CrossSectionPoint>,
    /// Sides of the target's first `n2` crossings, starting with `w`.
    pub word: Vec<Side>,
    pub target_end: f64,
    nx: usize,
    ny: usize,
    coarse_n: usize,
    coarse_ref: Vec<[f64; 3]>,
    /// Fine samples per coarse step.
    refine: usize,
    fine_ref: Vec<[f64; 3]>,
}

impl LorenzGluingProblem {
    pub fn new(chart: &HolonomyChart, cert: &GapCertificate, eps: f64) -> Result<Self> {
        Self::with_step(chart, cert, eps, GRID_STEP, SEGMENT_LENGTH)
    }

    pub fn with_step(
        chart: &HolonomyChart,
        cert: &GapCertificate,
        eps: f64,
        h: f64,
        segment: f64,
    ) -> Result<Self> {
        if !(eps > 0.0) || !(h > 0.0) || !(segment >= COARSE_DT) {
            return Err(Error::InvalidInstance(
                "eps and grid step must be positive and segments at least one sampling step".into(),
            ));
        }
        let params = chart.params;
        let rp = ReturnMapParams::from(&params);
        let target = choose_target(chart, cert, segment)?;
        let w = target.point;
        let plan = FlightPlan::new(&params, &w.to_state(), segment);
        let crossings = plan.crossings();
        let mut word = vec![Side::of(w.x)];
        let mut target_end = rp.alpha_on(word[0], w.x);
        for c in crossings.iter().take(crossings.len().saturating_sub(1)) {
            let side = Side::of(c.1.x);
            word.push(side);
            target_end = rp.alpha_on(side, target_end);
        }
        let coarse_n = (segment / COARSE_DT).round() as usize;
        let refine = (COARSE_DT / deviation_step(&params, eps)).ceil().max(1.0) as usize;
        let coarse_ref = plan.positions(&params, COARSE_DT, coarse_n);
        let fine_ref = plan.positions(&params, COARSE_DT / refine as f64, coarse_n * refine);
        let n = (2.0 / h).round() as usize + 1;
        Ok(Self {
            params,
            rp,
            t_gap: cert.t_used,
            segment: coarse_n as f64 * COARSE_DT,
            eps,
            h,
            target,
            trace: cert.sigma_trace.clone(),
            word,
            target_end,
            nx: n,
            ny: n,
            coarse_n,
            coarse_ref,
            refine,
            fine_ref,
        })
    }

    /// The specification this search tests.
    pub fn instance(&self) -> SpecificationInstance {
        SpecificationInstance {
            segments: vec![
                Segment {
                    start: -self.segment,
                    end: 0.0,
                    anchor: Anchor::Singularity,
                },
                Segment {
                    start: self.t_gap,
                    end: self.t_gap + self.segment,
                    anchor: Anchor::FlowPoint {
                        point: self.target.point.to_state(),
                    },
                },
            ],
            gap: self.t_gap,
            eps: self.eps,
        }
    }

    pub fn fine_step(&self) -> f64 {
        COARSE_DT / self.refine as f64
    }

    fn grid(&self, i: usize) -> f64 {
        (-1.0 + i as f64 * self.h).min(1.0)
    }

    /// Pulls `x_end` back along the target's itinerary.
    pub fn pull_back(&self, x_end: f64) -> Option<f64> {
        let mut x = x_end;
        for &side in self.word.iter().rev() {
            x = self.rp.alpha_inverse(side, x)?;
            if x == 0.0 {
                return None;
            }
        }
        Some(x)
    }

    fn candidate(&self, i: usize, j: usize) -> Option<LorenzCandidate> {
        let x_end = self.grid(i);
        let x = self.pull_back(x_end)?;
        Some(LorenzCandidate {
            x_end,
            point: CrossSectionPoint::new(x, self.grid(j)),
        })
    }

    pub fn junction_deviation(&self, z: &CrossSectionPoint) -> f64 {
        self.trace
            .iter()
            .map(|c| z.distance(c))
            .fold(f64::INFINITY, f64::min)
    }

    fn sampled(&self, z: &CrossSectionPoint, dt: f64, n: usize, reference: &[[f64; 3]]) -> f64 {
        let plan = FlightPlan::new(&self.params, &z.to_state(), self.segment);
        plan.positions(&self.params, dt, n)
            .iter()
            .zip(reference)
            .map(|(a, b)| {
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn parts(&self, c: &LorenzCandidate) -> DeviationParts {
        DeviationParts {
            junction: self.junction_deviation(&c.point),
            orbit: self.sampled(
                &c.point,
                self.fine_step(),
                self.coarse_n * self.refine,
                &self.fine_ref,
            ),
        }
    }

    /// Deviation recomputed with half the sampling step.
    pub fn verify(&self, c: &LorenzCandidate) -> f64 {
        let n = self.coarse_n * self.refine * 2;
        let dt = self.fine_step() / 2.0;
        let plan = FlightPlan::new(&self.params, &self.target.point.to_state(), self.segment);
        let reference = plan.positions(&self.params, dt, n);
        self.junction_deviation(&c.point)
            .max(self.sampled(&c.point, dt, n, &reference))
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    fn cheap_bound(&self, z: &CrossSectionPoint) -> f64 {
        self.junction_deviation(z)
            .max(z.distance(&self.target.point))
    }
}

impl GluingProblem for LorenzGluingProblem {
    type Candidate = LorenzCandidate;

    fn blocks(&self) -> usize {
        self.nx
    }

    fn total_candidates(&self) -> u64 {
        (self.nx * self.ny) as u64
    }

    fn resolution(&self) -> f64 {
        self.h
    }

    /// The target's own column, at the row minimising the cheap bound.
    fn seed(&self) -> (usize, LorenzCandidate) {
        let i = (((self.target_end + 1.0) / self.h).round() as usize).min(self.nx - 1);
        let mut best: Option<(usize, LorenzCandidate, f64)> = None;
        for j in 0..self.ny {
            if let Some(c) = self.candidate(i, j) {
                let b = self.cheap_bound(&c.point);
                if best.as_ref().is_none_or(|x| b < x.2) {
                    best = Some((self.index(i, j), c, b));
                }
            }
        }
        let (index, c, _) = best.expect("the target's column pulls back");
        (index, c)
    }

    fn deviation(&self, c: &LorenzCandidate) -> f64 {
        let p = self.parts(c);
        p.junction.max(p.orbit)
    }

    fn scan_block(&self, i: usize, cutoff: f64, _eps: f64) -> BlockScan<LorenzCandidate> {
        let mut scan = BlockScan::empty();
        let Some(x) = self.pull_back(self.grid(i)) else {
            scan.pruned = self.ny as u64;
            return scan;
        };
        let wy = self.target.point.y;
        let j_lo = ((wy - cutoff + 1.0) / self.h).floor().max(0.0) as usize;
        let j_hi = (((wy + cutoff + 1.0) / self.h).ceil() as usize).min(self.ny - 1);
        scan.pruned = (self.ny - (j_hi + 1 - j_lo)) as u64;
        for j in j_lo..=j_hi {
            let c = LorenzCandidate {
                x_end: self.grid(i),
                point: CrossSectionPoint::new(x, self.grid(j)),
            };
            let mut bound = self.cheap_bound(&c.point);
            if bound <= cutoff {
                bound =
                    bound.max(self.sampled(&c.point, COARSE_DT, self.coarse_n, &self.coarse_ref));
            }
            if bound > cutoff {
                scan.pruned += 1;
            } else {
                scan.pending.push((self.index(i, j), c, bound));
            }
        }
        scan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{
        build_holonomy_chart_with_grid, find_gap_interval, project_separatrix, unstable_separatrix,
    };
    use crate::return_map::lowest_period_orbit;
    use crate::specification::search::{search_gluing, Outcome};
    use std::sync::OnceLock;

    struct Setup {
        chart: HolonomyChart,
        cert: GapCertificate,
    }

    fn setup() -> &'static Setup {
        static S: OnceLock<Setup> = OnceLock::new();
        S.get_or_init(|| {
            let p = GeometricLorenzParams::default();
            let orbit = lowest_period_orbit(&p, 8).unwrap();
            let chart = build_holonomy_chart_with_grid(&p, &orbit, 0.1, 40).unwrap();
            let sep = unstable_separatrix(&p, Side::Plus, 30.0 + 20.0).unwrap();
            let proj = project_separatrix(&chart, &sep, 30.0).unwrap();
            let cert = find_gap_interval(&proj, &chart, 1e-3).unwrap();
            Setup { chart, cert }
        })
    }

    #[test]
    fn target_lands_on_the_periodic_leaf() {
        let s = setup();
        let t = choose_target(&s.chart, &s.cert, SEGMENT_LENGTH).unwrap();
        let rp = ReturnMapParams::from(&s.chart.params);
        let mut x = t.point.x;
        for _ in 0..t.depth {
            x = crate::return_map::alpha(&rp, x).unwrap();
        }
        assert!((x - s.chart.x_star).abs() < 1e-9);
        let u = t.point.x - s.chart.x_star;
        assert!(u >= s.cert.strip.0 && u <= s.cert.strip.1);
    }

    #[test]
    fn pull_back_inverts_the_itinerary() {
        let s = setup();
        let g =
            LorenzGluingProblem::with_step(&s.chart, &s.cert, 0.01, 1e-2, SEGMENT_LENGTH).unwrap();
        let x = g.pull_back(g.target_end).unwrap();
        assert!((x - g.target.point.x).abs() < 1e-12);
        let mut y = x;
        for &side in &g.word {
            assert_eq!(Side::of(y), side);
            y = g.rp.alpha_on(side, y);
        }
        assert!((y - g.target_end).abs() < 1e-9);
    }

    #[test]
    fn coarse_bound_never_exceeds_exact_deviation() {
        let s = setup();
        let g =
            LorenzGluingProblem::with_step(&s.chart, &s.cert, 0.05, 1e-2, SEGMENT_LENGTH).unwrap();
        let (_, seed) = g.seed();
        for dj in [-3.0, 0.0, 2.0] {
            let c = LorenzCandidate {
                point: CrossSectionPoint::new(seed.point.x, seed.point.y + dj * g.h),
                ..seed
            };
            let coarse = g.cheap_bound(&c.point).max(g.sampled(
                &c.point,
                COARSE_DT,
                g.coarse_n,
                &g.coarse_ref,
            ));
            assert!(coarse <= g.deviation(&c) + 1e-15);
        }
    }

    #[test]
    fn coarse_search_matches_brute_force() {
        let s = setup();
        let g =
            LorenzGluingProblem::with_step(&s.chart, &s.cert, 0.01, 2e-2, SEGMENT_LENGTH).unwrap();
        let r = search_gluing(&g, 0.01);
        let mut brute = f64::INFINITY;
        for i in 0..g.nx {
            for j in 0..g.ny {
                if let Some(c) = g.candidate(i, j) {
                    brute = brute.min(g.deviation(&c));
                }
            }
        }
        match r.outcome {
            Outcome::ExhaustedNoWitness { best_deviation, .. } => assert_eq!(best_deviation, brute),
            Outcome::Witness { .. } => panic!("unexpected witness"),
        }
        assert_eq!(
            r.candidates_evaluated + r.candidates_pruned,
            r.candidates_total + 1
        );
    }
}
