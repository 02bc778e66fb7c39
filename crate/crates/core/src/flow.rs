//! The geometric Lorenz flow as a hybrid system.
//!
//! Phase space is the union of the linear block `|x| ≤ 1, |y| ≤ 1, 0 ≤ z ≤ 1`,
//! where the field is exactly `(λ1 x, −λ2 y, −λ3 z)`, and two return tubes that
//! carry the exit faces `x = ±1` back to the cross-section `Σ = {z = 1}` in a
//! constant flight time. The tube maps are affine and chosen so that the
//! induced first return is `L(x, y) = (α(x), β(x, y))` with
//!
//! ```text
//! α(x)    = sign(x) (k |x|^a − 1),          a = λ3 / λ1
//! β(x, y) = sign(x) c + b y |x|^(λ2/λ1)
//! ```
//!
//! Other admissible choices of β change the numbers this crate produces but
//! not the structure of any certificate.
//!
//! Inside a tube the ambient position is a linear interpolation between the
//! entry point on the exit face and its image on Σ. The tube interior is only a
//! time parametrization; tangent vectors at tube states are expressed in the
//! frame of the entry face (see [`crate::hyperbolicity::tangent_flow`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents of the linear saddle and the return-map coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricLorenzParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Expansion coefficient of α.
    pub k: f64,
    /// Always `lambda3 / lambda1`.
    pub a: f64,
    /// Contraction coefficient of β.
    pub b: f64,
    /// Cusp offset of β.
    pub c: f64,
    /// Flight time through each return tube.
    pub tau_tube: f64,
}

impl Default for GeometricLorenzParams {
    fn default() -> Self {
        Self::new(1.0, 2.0, 0.8, 1.9, 0.3, 0.6, 1.0).expect("default parameters are valid")
    }
}

impl GeometricLorenzParams {
    /// Builds and validates a parameter set; `a` is derived as `λ3/λ1`.
    pub fn new(
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        k: f64,
        b: f64,
        c: f64,
        tau_tube: f64,
    ) -> Result<Self> {
        let p = Self {
            lambda1,
            lambda2,
            lambda3,
            k,
            a: lambda3 / lambda1,
            b,
            c,
            tau_tube,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.k,
            self.a,
            self.b,
            self.c,
            self.tau_tube,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if !(0.0 < self.lambda3 && self.lambda3 < self.lambda1 && self.lambda1 < self.lambda2) {
            return Err(Error::InvalidParams(format!(
                "need 0 < lambda3 < lambda1 < lambda2, got ({}, {}, {})",
                self.lambda3, self.lambda1, self.lambda2
            )));
        }
        if self.a != self.lambda3 / self.lambda1 {
            return Err(Error::InvalidParams(format!(
                "a = {} must equal lambda3/lambda1 = {}",
                self.a,
                self.lambda3 / self.lambda1
            )));
        }
        if !(self.k * self.a > std::f64::consts::SQRT_2) {
            return Err(Error::InvalidParams(format!(
                "k*a = {} must exceed sqrt(2) for uniform expansion",
                self.k * self.a
            )));
        }
        if !(self.k > 0.0 && self.k < 2.0) {
            return Err(Error::InvalidParams(format!(
                "k = {} must lie in (0, 2) so that alpha(1) < 1",
                self.k
            )));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::InvalidParams(format!(
                "b = {} must lie in (0, 1)",
                self.b
            )));
        }
        if self.c.abs() + self.b > 1.0 {
            return Err(Error::InvalidParams(format!(
                "|c| + b = {} must not exceed 1",
                self.c.abs() + self.b
            )));
        }
        if !(self.tau_tube > 0.0) {
            return Err(Error::InvalidParams(format!(
                "tau_tube = {} must be positive",
                self.tau_tube
            )));
        }
        Ok(())
    }

    /// `λ2/λ1`, the exponent of `|x|` in the y-contraction of β.
    pub fn exponent_y(&self) -> f64 {
        self.lambda2 / self.lambda1
    }

    /// Largest speed over the block and tubes; used to pick deviation sampling steps.
    pub fn max_speed(&self) -> f64 {
        let block = (self.lambda1.powi(2) + self.lambda2.powi(2) + self.lambda3.powi(2)).sqrt();
        // Longest tube chord: from (±1, y, z) to the far side of Σ.
        let chord = (4.0f64 + 4.0 + 1.0).sqrt() / self.tau_tube;
        block.max(chord)
    }
}

/// Which exit face a tube starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Side {
        if x < 0.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }
}

/// Position inside a return tube: the entry point on the exit face `x = ±1`
/// and the local clock in `[0, tau_tube]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeState {
    pub side: Side,
    pub clock: f64,
    pub entry_y: f64,
    pub entry_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    LinearBlock,
    Tube(TubeState),
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::LinearBlock => "block",
            Region::Tube(TubeState {
                side: Side::Plus, ..
            }) => "tube+",
            Region::Tube(TubeState {
                side: Side::Minus, ..
            }) => "tube-",
        }
    }
}

/// A point of the hybrid phase space. In a tube, `(x, y, z)` is the
/// interpolated ambient position and is fully determined by the tube state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub region: Region,
}

impl State3 {
    pub fn block(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            region: Region::LinearBlock,
        }
    }

    pub fn origin() -> Self {
        Self::block(0.0, 0.0, 0.0)
    }

    /// The point `(x, y, 1)` of Σ.
    pub fn on_sigma(x: f64, y: f64) -> Self {
        Self::block(x, y, 1.0)
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &State3) -> f64 {
        dist3(self.position(), other.position())
    }

    pub fn in_block(&self) -> bool {
        matches!(self.region, Region::LinearBlock)
    }

    /// Checks the region invariants.
    pub fn validate(&self, params: &GeometricLorenzParams) -> Result<()> {
        const SLACK: f64 = 1e-12;
        match self.region {
            Region::LinearBlock => {
                if self.x.abs() > 1.0 + SLACK
                    || self.y.abs() > 1.0 + SLACK
                    || self.z < 0.0
                    || self.z > 1.0 + SLACK
                {
                    return Err(Error::InvalidState(format!(
                        "({}, {}, {}) is outside the linear block",
                        self.x, self.y, self.z
                    )));
                }
            }
            Region::Tube(t) => {
                if t.clock < 0.0 || t.clock > params.tau_tube + SLACK {
                    return Err(Error::InvalidState(format!(
                        "tube clock {} outside [0, tau]",
                        t.clock
                    )));
                }
                if t.entry_y.abs() > 1.0 + SLACK || t.entry_z < 0.0 || t.entry_z > 1.0 + SLACK {
                    return Err(Error::InvalidState(
                        "tube entry point off the exit face".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for State3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}) [{}]",
            self.x,
            self.y,
            self.z,
            self.region.label()
        )
    }
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// A point of the cross-section Σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionPoint {
    pub x: f64,
    pub y: f64,
}

impl CrossSectionPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Points of Γ = {x = 0} fall into the singularity and never return.
    pub fn on_gamma(&self) -> bool {
        self.x == 0.0
    }

    pub fn to_state(self) -> State3 {
        State3::on_sigma(self.x, self.y)
    }

    pub fn distance(&self, other: &CrossSectionPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Landing point on Σ of the tube that starts at `(±1, entry_y, entry_z)`.
pub fn tube_image(
    params: &GeometricLorenzParams,
    side: Side,
    entry_y: f64,
    entry_z: f64,
) -> CrossSectionPoint {
    let s = side.sign();
    CrossSectionPoint {
        x: s * (params.k * entry_z - 1.0),
        y: s * params.c + params.b * entry_y,
    }
}

fn tube_position(params: &GeometricLorenzParams, t: &TubeState) -> [f64; 3] {
    let s = t.side.sign();
    let target = tube_image(params, t.side, t.entry_y, t.entry_z);
    let theta = t.clock / params.tau_tube;
    [
        s + theta * (target.x - s),
        t.entry_y + theta * (target.y - t.entry_y),
        t.entry_z + theta * (1.0 - t.entry_z),
    ]
}

fn tube_state(params: &GeometricLorenzParams, t: TubeState) -> State3 {
    let [x, y, z] = tube_position(params, &t);
    State3 {
        x,
        y,
        z,
        region: Region::Tube(t),
    }
}

/// Time for a block state to reach an exit face `|x| = 1`.
pub fn time_to_exit(params: &GeometricLorenzParams, s: &State3) -> Result<f64> {
    if !s.in_block() {
        return Err(Error::InvalidState(
            "time_to_exit needs a linear-block state".into(),
        ));
    }
    if s.x == 0.0 {
        return Err(Error::OnStableManifold);
    }
    Ok((-s.x.abs().ln() / params.lambda1).max(0.0))
}

/// Flow without leaving the current region. `t` must not cross a region
/// boundary; callers split time at transitions.
fn flow_within(params: &GeometricLorenzParams, s: &State3, t: f64) -> State3 {
    match s.region {
        Region::LinearBlock => State3::block(
            s.x * (params.lambda1 * t).exp(),
            s.y * (-params.lambda2 * t).exp(),
            s.z * (-params.lambda3 * t).exp(),
        ),
        Region::Tube(mut ts) => {
            ts.clock += t;
            tube_state(params, ts)
        }
    }
}

/// Time left in the current region before the next forward transition.
fn time_in_region(params: &GeometricLorenzParams, s: &State3) -> f64 {
    match s.region {
        Region::LinearBlock => {
            if s.x == 0.0 {
                f64::INFINITY
            } else {
                (-s.x.abs().ln() / params.lambda1).max(0.0)
            }
        }
        Region::Tube(ts) => (params.tau_tube - ts.clock).max(0.0),
    }
}

/// Applies the transition at the end of the current region.
fn transition(params: &GeometricLorenzParams, s: &State3) -> State3 {
    match s.region {
        Region::LinearBlock => {
            let side = Side::of(s.x);
            tube_state(
                params,
                TubeState {
                    side,
                    clock: 0.0,
                    entry_y: s.y,
                    entry_z: s.z,
                },
            )
        }
        Region::Tube(ts) => {
            let p = tube_image(params, ts.side, ts.entry_y, ts.entry_z);
            State3::on_sigma(p.x, p.y)
        }
    }
}

/// The hybrid flow `X_t(s)`.
///
/// Forward time chains the closed-form block solution with the tube transits.
/// Backward time is only allowed inside the current region: back to Σ for a
/// block state, back to clock zero for a tube state.
pub fn flow(params: &GeometricLorenzParams, s: &State3, t: f64) -> Result<State3> {
    if t >= 0.0 {
        return Ok(flow_forward(params, s, t));
    }
    let available = match s.region {
        Region::LinearBlock => {
            if s.z <= 0.0 {
                f64::INFINITY
            } else {
                (-s.z.ln() / params.lambda3).max(0.0)
            }
        }
        Region::Tube(ts) => ts.clock,
    };
    if -t > available + 1e-12 {
        return Err(Error::BackwardThroughTube {
            requested: -t,
            available,
        });
    }
    Ok(flow_within(params, s, t.max(-available)))
}

fn flow_forward(params: &GeometricLorenzParams, s: &State3, t: f64) -> State3 {
    let mut state = *s;
    let mut remaining = t;
    loop {
        let dwell = time_in_region(params, &state);
        if remaining < dwell {
            return flow_within(params, &state, remaining);
        }
        let at_boundary = if dwell > 0.0 {
            exact_boundary_state(params, &state, dwell)
        } else {
            state
        };
        remaining -= dwell;
        state = transition(params, &at_boundary);
    }
}

/// State at the end of the current region, with the boundary coordinate
/// pinned exactly.
fn exact_boundary_state(params: &GeometricLorenzParams, s: &State3, dwell: f64) -> State3 {
    let mut out = flow_within(params, s, dwell);
    match &mut out.region {
        Region::LinearBlock => out.x = Side::of(s.x).sign(),
        Region::Tube(ts) => ts.clock = params.tau_tube,
    }
    out
}

/// One piece of an orbit that stays in a single region: the state at
/// `t_start` and the time the piece ends (`INFINITY` for orbits that fall
/// into the singularity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub t_start: f64,
    pub t_end: f64,
    pub start: State3,
}

impl Piece {
    pub fn state_at(&self, params: &GeometricLorenzParams, t: f64) -> State3 {
        let dt = (t - self.t_start).clamp(0.0, self.t_end - self.t_start);
        flow_within(params, &self.start, dt)
    }
}

/// An orbit segment broken into single-region pieces, so that the state at
/// any time is a closed-form evaluation.
#[derive(Debug, Clone)]
pub struct FlightPlan {
    pub pieces: Vec<Piece>,
    pub t_max: f64,
}

impl FlightPlan {
    pub fn new(params: &GeometricLorenzParams, s0: &State3, t_max: f64) -> Self {
        let mut pieces = Vec::new();
        let mut state = *s0;
        let mut t = 0.0;
        loop {
            let dwell = time_in_region(params, &state);
            let end = t + dwell;
            pieces.push(Piece {
                t_start: t,
                t_end: end,
                start: state,
            });
            if end > t_max {
                break;
            }
            let at_boundary = if dwell > 0.0 {
                exact_boundary_state(params, &state, dwell)
            } else {
                state
            };
            state = transition(params, &at_boundary);
            t = end;
        }
        Self { pieces, t_max }
    }

    fn piece_index(&self, t: f64) -> usize {
        // Last piece whose start is <= t.
        match self
            .pieces
            .binary_search_by(|p| p.t_start.partial_cmp(&t).unwrap())
        {
            Ok(mut i) => {
                // Zero-length pieces share a start time; take the last one.
                while i + 1 < self.pieces.len() && self.pieces[i + 1].t_start == t {
                    i += 1;
                }
                i
            }
            Err(i) => i.saturating_sub(1),
        }
    }

    pub fn state_at(&self, params: &GeometricLorenzParams, t: f64) -> State3 {
        let i = self.piece_index(t);
        self.pieces[i].state_at(params, t)
    }

    /// Positions at times `i·dt`, `i = 0..=n`, walking the pieces in order.
    pub fn positions(&self, params: &GeometricLorenzParams, dt: f64, n: usize) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(n + 1);
        let mut i = 0;
        for (k, piece) in self.pieces.iter().enumerate() {
            let last = k + 1 == self.pieces.len();
            match piece.start.region {
                Region::LinearBlock => {
                    let f = [
                        (params.lambda1 * dt).exp(),
                        (-params.lambda2 * dt).exp(),
                        (-params.lambda3 * dt).exp(),
                    ];
                    let mut cur: Option<[f64; 3]> = None;
                    while i <= n && (last || (i as f64 * dt) < piece.t_end) {
                        let p = match cur {
                            Some(c) => [c[0] * f[0], c[1] * f[1], c[2] * f[2]],
                            None => piece.state_at(params, i as f64 * dt).position(),
                        };
                        cur = Some(p);
                        out.push(p);
                        i += 1;
                    }
                }
                Region::Tube(_) => {
                    let a = piece.start.position();
                    let b = piece.state_at(params, piece.t_end).position();
                    let len = piece.t_end - piece.t_start;
                    while i <= n && (last || (i as f64 * dt) < piece.t_end) {
                        let th = if len > 0.0 {
                            ((i as f64 * dt - piece.t_start) / len).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        out.push([0, 1, 2].map(|j| a[j] + th * (b[j] - a[j])));
                        i += 1;
                    }
                }
            }
        }
        out
    }

    /// Times at which the orbit lands on Σ, with the landing points.
    pub fn crossings(&self) -> Vec<(f64, CrossSectionPoint)> {
        self.pieces
            .iter()
            .skip(1)
            .filter(|p| p.start.in_block() && p.start.z == 1.0 && p.t_start <= self.t_max)
            .map(|p| (p.t_start, CrossSectionPoint::new(p.start.x, p.start.y)))
            .collect()
    }
}

/// Time-stamped samples and Σ-crossings of an orbit.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<(f64, State3)>,
    pub crossings: Vec<(f64, CrossSectionPoint)>,
}

impl Trajectory {
    /// CSV with header `t,x,y,z,region`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("t,x,y,z,region\n");
        for (t, s) in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                s.x,
                s.y,
                s.z,
                s.region.label()
            ));
        }
        out
    }

    /// CSV with header `t,x,y`.
    pub fn crossings_csv(&self) -> String {
        let mut out = String::from("t,x,y\n");
        for (t, p) in &self.crossings {
            out.push_str(&format!("{},{},{}\n", t, p.x, p.y));
        }
        out
    }
}

/// Samples at multiples of `dt` plus every region transition, each located in
/// closed form.
pub fn sample_orbit(
    params: &GeometricLorenzParams,
    s0: &State3,
    t_max: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidState(format!(
            "need dt > 0 and t_max > 0, got dt={dt}, t_max={t_max}"
        )));
    }
    s0.validate(params)?;
    let plan = FlightPlan::new(params, s0, t_max);
    let times: Vec<f64> = (0..)
        .map(|i| i as f64 * dt)
        .take_while(|&t| t <= t_max)
        .collect();
    let n_regular = times.len();
    let mut samples = Vec::with_capacity(n_regular + 2 * plan.pieces.len());
    let mut regular = 0;
    for piece in &plan.pieces {
        if piece.t_start > t_max {
            break;
        }
        while regular < n_regular && times[regular] < piece.t_start {
            let t = times[regular];
            if samples.last().is_none_or(|(last, _)| *last < t) {
                samples.push((t, plan.state_at(params, t)));
            }
            regular += 1;
        }
        // Transition event: record the state entering this piece.
        if samples.last().is_none_or(|(t, _)| *t < piece.t_start) {
            samples.push((piece.t_start, piece.start));
        } else if let Some(last) = samples.last_mut() {
            if last.0 == piece.t_start {
                *last = (piece.t_start, piece.start);
            }
        }
    }
    while regular < n_regular {
        let t = times[regular];
        if samples.last().is_none_or(|(last, _)| *last < t) {
            samples.push((t, plan.state_at(params, t)));
        }
        regular += 1;
    }
    Ok(Trajectory {
        samples,
        crossings: plan.crossings(),
    })
}

/// First landing on Σ of the forward orbit through `p`, found by flowing.
pub fn first_return_by_flow(
    params: &GeometricLorenzParams,
    p: &CrossSectionPoint,
) -> Result<(f64, CrossSectionPoint)> {
    if p.on_gamma() {
        return Err(Error::DomainGamma);
    }
    let s = p.to_state();
    let t_exit = time_to_exit(params, &s)?;
    let plan = FlightPlan::new(params, &s, t_exit + params.tau_tube + 1e-9);
    plan.crossings()
        .first()
        .copied()
        .ok_or_else(|| Error::DegenerateOrbit("no return found".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> GeometricLorenzParams {
        GeometricLorenzParams::default()
    }

    /// Classical RK4 on the linear block field, independent of the closed form.
    fn rk4_block(p: &GeometricLorenzParams, mut s: [f64; 3], t: f64, steps: usize) -> [f64; 3] {
        let h = t / steps as f64;
        let f = |v: [f64; 3]| [p.lambda1 * v[0], -p.lambda2 * v[1], -p.lambda3 * v[2]];
        for _ in 0..steps {
            let k1 = f(s);
            let k2 = f([
                s[0] + h / 2.0 * k1[0],
                s[1] + h / 2.0 * k1[1],
                s[2] + h / 2.0 * k1[2],
            ]);
            let k3 = f([
                s[0] + h / 2.0 * k2[0],
                s[1] + h / 2.0 * k2[1],
                s[2] + h / 2.0 * k2[2],
            ]);
            let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1], s[2] + h * k3[2]]);
            for i in 0..3 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s
    }

    #[test]
    fn default_params_are_valid() {
        let p = params();
        p.validate().unwrap();
        assert_relative_eq!(p.k * p.a, 1.52, epsilon = 1e-15);
        assert!(p.k * p.a > 2f64.sqrt());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GeometricLorenzParams::new(1.0, 0.5, 0.8, 1.9, 0.3, 0.6, 1.0).is_err());
        assert!(GeometricLorenzParams::new(1.0, 2.0, 0.8, 2.1, 0.3, 0.6, 1.0).is_err());
        assert!(GeometricLorenzParams::new(1.0, 2.0, 0.8, 1.9, 0.5, 0.6, 1.0).is_err());
        assert!(GeometricLorenzParams::new(1.0, 2.0, 0.8, 1.7, 0.3, 0.6, 1.0).is_err());
        assert!(GeometricLorenzParams::new(1.0, 2.0, 0.8, 1.9, 0.3, 0.6, 0.0).is_err());
        let mut p = params();
        p.a = 0.7;
        assert!(p.validate().is_err());
    }

    #[test]
    fn origin_is_fixed() {
        let p = params();
        for t in [0.0, 1.0, 123.4] {
            assert_eq!(flow(&p, &State3::origin(), t).unwrap().position(), [0.0; 3]);
        }
    }

    #[test]
    fn time_zero_is_identity() {
        let p = params();
        let s = State3::block(0.3, -0.2, 0.7);
        assert_eq!(flow(&p, &s, 0.0).unwrap(), s);
    }

    #[test]
    fn exit_state_matches_rk4() {
        let p = params();
        let s = State3::on_sigma(0.25, 0.5);
        let t_star = time_to_exit(&p, &s).unwrap();
        assert_relative_eq!(t_star, 4f64.ln(), epsilon = 1e-15);
        let exit = flow(&p, &s, t_star).unwrap();
        let oracle = rk4_block(&p, [0.25, 0.5, 1.0], t_star, 20_000);
        assert!((exit.x - oracle[0]).abs() < 1e-10);
        assert!((exit.y - oracle[1]).abs() < 1e-10);
        assert!((exit.z - oracle[2]).abs() < 1e-10);
        assert_relative_eq!(exit.y, 0.03125, epsilon = 1e-12);
        assert_relative_eq!(exit.z, 0.25f64.powf(0.8), epsilon = 1e-12);
    }

    #[test]
    fn time_to_exit_cases() {
        let p = params();
        assert_eq!(
            time_to_exit(&p, &State3::block(1.0, 0.0, 0.5)).unwrap(),
            0.0
        );
        assert_eq!(
            time_to_exit(&p, &State3::block(0.0, 0.1, 0.5)),
            Err(Error::OnStableManifold)
        );
    }

    #[test]
    fn time_to_exit_monotone_on_log_grid() {
        let p = params();
        let mut prev = 0.0;
        for i in 0..200 {
            let x = 10f64.powf(-(i as f64) * 0.1);
            let t = time_to_exit(&p, &State3::block(x, 0.0, 1.0)).unwrap();
            if i > 0 {
                assert!(t > prev);
            }
            prev = t;
        }
        assert!(prev > 40.0);
    }

    #[test]
    fn backward_flow_limited_to_region() {
        let p = params();
        let s = flow(&p, &State3::on_sigma(0.5, 0.2), 0.3).unwrap();
        let back = flow(&p, &s, -0.3).unwrap();
        assert!((back.x - 0.5).abs() < 1e-12 && (back.z - 1.0).abs() < 1e-12);
        assert!(matches!(
            flow(&p, &s, -0.5),
            Err(Error::BackwardThroughTube { .. })
        ));
    }

    #[test]
    fn origin_orbit_has_no_crossings() {
        let p = params();
        let tr = sample_orbit(&p, &State3::origin(), 10.0, 0.5).unwrap();
        assert!(tr.crossings.is_empty());
        assert!(tr.samples.iter().all(|(_, s)| s.position() == [0.0; 3]));
    }

    #[test]
    fn gamma_orbit_falls_to_origin() {
        let p = params();
        let tr = sample_orbit(&p, &State3::on_sigma(0.0, 0.4), 30.0, 0.5).unwrap();
        assert!(tr.crossings.is_empty());
        assert!(tr.samples.last().unwrap().1.position()[2] < 1e-9);
    }

    #[test]
    fn sample_times_strictly_increase_and_crossings_on_sigma() {
        let p = params();
        let tr = sample_orbit(&p, &State3::on_sigma(0.37, -0.2), 60.0, 0.1).unwrap();
        assert!(tr.samples.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(tr.crossings.len() > 5);
        for (_, c) in &tr.crossings {
            assert!(c.x.abs() <= 1.0 && c.y.abs() <= 1.0);
        }
        for (t, c) in &tr.crossings {
            let s = tr.samples.iter().find(|(ts, _)| ts == t).unwrap().1;
            assert_eq!(s.z, 1.0);
            assert_eq!((s.x, s.y), (c.x, c.y));
        }
    }

    #[test]
    fn csv_headers() {
        let p = params();
        let tr = sample_orbit(&p, &State3::on_sigma(0.37, -0.2), 5.0, 0.5).unwrap();
        assert!(tr.samples_csv().starts_with("t,x,y,z,region\n"));
        assert!(tr.crossings_csv().starts_with("t,x,y\n"));
    }

    #[test]
    fn tube_states_follow_clock() {
        let p = params();
        let s = State3::on_sigma(0.5, 0.0);
        let t_exit = time_to_exit(&p, &s).unwrap();
        let mid = flow(&p, &s, t_exit + 0.5).unwrap();
        match mid.region {
            Region::Tube(ts) => {
                assert_eq!(ts.side, Side::Plus);
                assert!((ts.clock - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected tube state"),
        }
        mid.validate(&p).unwrap();
    }

    fn sigma_point() -> impl Strategy<Value = (f64, f64)> {
        (prop_oneof![-1.0..-1e-3f64, 1e-3..1.0f64], -1.0..1.0f64)
    }

    #[test]
    fn regular_positions_match_state_at() {
        let p = GeometricLorenzParams::default();
        let s = State3::on_sigma(0.37, -0.2);
        let plan = FlightPlan::new(&p, &s, 12.0);
        let dt = 0.0137;
        let n = (12.0 / dt) as usize;
        let fast = plan.positions(&p, dt, n);
        assert_eq!(fast.len(), n + 1);
        for (i, q) in fast.iter().enumerate() {
            let r = plan.state_at(&p, i as f64 * dt).position();
            for j in 0..3 {
                assert!((q[j] - r[j]).abs() < 1e-10, "sample {i}: {q:?} vs {r:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn semigroup_law((x, y) in sigma_point(), t1 in 0.0..15.0f64, t2 in 0.0..15.0f64) {
            let p = params();
            let s = State3::on_sigma(x, y);
            let direct = flow(&p, &s, t1 + t2).unwrap();
            let chained = flow(&p, &flow(&p, &s, t1).unwrap(), t2).unwrap();
            prop_assert!(direct.distance(&chained) < 1e-9);
        }

        #[test]
        fn orbit_stays_in_trapping_region((x, y) in sigma_point()) {
            let p = params();
            let tr = sample_orbit(&p, &State3::on_sigma(x, y), 40.0, 0.25).unwrap();
            for (_, s) in &tr.samples {
                prop_assert!(s.validate(&p).is_ok());
            }
        }

        #[test]
        fn odd_symmetry((x, y) in sigma_point(), t in 0.0..20.0f64) {
            let p = params();
            let a = flow(&p, &State3::on_sigma(x, y), t).unwrap().position();
            let b = flow(&p, &State3::on_sigma(-x, -y), t).unwrap().position();
            prop_assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
            prop_assert!((a[2] - b[2]).abs() < 1e-12);
        }
    }
}
