//! The weak specification property as an executable test.
//!
//! A gluing search enumerates a fixed candidate grid in a fixed order and
//! either returns the first candidate whose orbit ε-shadows every prescribed
//! segment, or certifies that none on the grid does, together with the
//! smallest deviation seen. All negative results are resolution-limited:
//! they speak about the stated grid only.

pub mod catmap;
pub mod experiment;
pub mod lorenz;
pub mod mixing;
pub mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, FlightPlan, GeometricLorenzParams, State3};

pub use catmap::TorusCatSystem;
pub use experiment::{
    run_obstruction_experiment, ExperimentConfig, ObstructionReport, ObstructionRow,
};
pub use lorenz::{LorenzCandidate, LorenzGluingProblem};
pub use mixing::{test_mixing, BoxGraph, MixingReport};

pub use search::{search_gluing, GluingProblem, Outcome, ShadowingResult};

/// What a segment of a specification prescribes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anchor {
    /// Rest at the singularity.
    Singularity,
    /// The flow orbit through `point` at the segment start.
    FlowPoint { point: State3 },
    /// The orbit of a torus point at the segment start (discrete time).
    TorusPoint { point: [f64; 2] },
}

/// One prescribed orbit piece on `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub anchor: Anchor,
}

/// Segments with gaps of at least `gap` between them, to be shadowed within `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificationInstance {
    pub segments: Vec<Segment>,
    pub gap: f64,
    pub eps: f64,
}

impl SpecificationInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInstance(e.to_string()))
    }

    /// Checks ordering, gaps, `eps > 0`, and that every flow segment is a
    /// genuine orbit piece (`X_{t2−t1}(P(t1)) = P(t2)` on samples, to 1e−8).
    pub fn validate(&self, params: &GeometricLorenzParams) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "eps = {} must be positive",
                self.eps
            )));
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidInstance("no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start <= s.end) {
                return Err(Error::InvalidInstance(format!(
                    "segment {i} has start after end"
                )));
            }
            if let Some(next) = self.segments.get(i + 1) {
                if next.start - s.end < self.gap {
                    return Err(Error::InvalidInstance(format!(
                        "gap between segments {i} and {} is {} < {}",
                        i + 1,
                        next.start - s.end,
                        self.gap
                    )));
                }
            }
            if let Anchor::FlowPoint { point } = s.anchor {
                point.validate(params)?;
                let len = s.end - s.start;
                let plan = FlightPlan::new(params, &point, len);
                for k in 1..=8 {
                    let t1 = len * (k - 1) as f64 / 8.0;
                    let t2 = len * k as f64 / 8.0;
                    let direct = plan.state_at(params, t2);
                    let chained = flow(params, &plan.state_at(params, t1), t2 - t1)?;
                    if direct.distance(&chained) > 1e-8 {
                        return Err(Error::InvalidInstance(format!(
                            "segment {i} is not an orbit piece"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Prescribed state at time `t` of a flow segment.
    pub fn prescribed(
        &self,
        params: &GeometricLorenzParams,
        segment: usize,
        t: f64,
    ) -> Option<State3> {
        let s = self.segments.get(segment)?;
        match s.anchor {
            Anchor::Singularity => Some(State3::origin()),
            Anchor::FlowPoint { point } => flow(params, &point, t - s.start).ok(),
            Anchor::TorusPoint { .. } => None,
        }
    }
}

/// Sampling step for deviations: `eps / (10 V_max)`.
pub fn deviation_step(params: &GeometricLorenzParams, eps: f64) -> f64 {
    eps / (10.0 * params.max_speed())
}

/// Whether the orbit of `x` stays within `eps` of the orbit of `reference`
/// on `[0, t]`, sampled at [`deviation_step`]; returns the sampled maximum.
pub fn in_bowen_ball(
    params: &GeometricLorenzParams,
    x: &State3,
    reference: &State3,
    t: f64,
    eps: f64,
) -> (bool, f64) {
    let dt = deviation_step(params, eps).min(t.max(f64::MIN_POSITIVE));
    let a = FlightPlan::new(params, x, t);
    let b = FlightPlan::new(params, reference, t);
    let n = (t / dt).ceil() as usize;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        let ti = (i as f64 * dt).min(t);
        worst = worst.max(a.state_at(params, ti).distance(&b.state_at(params, ti)));
    }
    (worst <= eps, worst)
}
