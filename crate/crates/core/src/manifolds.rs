//! Invariant manifolds on and around Σ.
//!
//! The stable foliation on Σ is model-exact: the leaves are the vertical
//! segments `{x = x0}`, because the first coordinate of `L` ignores `y`.
//! The local unstable manifold of the periodic point `p = (x*, y*)` is the
//! graph `y = g(x)` over `|x − x*| ≤ μ_u`, obtained by pulling `x` back along
//! the cycle with inverse branches of α and pushing `y` forward with β.
//!
//! The holonomy chart sits a flow time `μ` after Σ, so that the slab
//! `|t| ≤ μ` around it is traversed by the linear block only:
//!
//! ```text
//! (u, v, t) ↦ X_{μ+t}(x* + u, g(x* + u) + v),   |u| ≤ μ_u, |v| ≤ μ, |t| ≤ μ
//! ```
//!
//! `π^s` sets `v = 0` and `π` forgets `t`, so `π∘π^s` reads off `u`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, sample_orbit, CrossSectionPoint, GeometricLorenzParams, Side, State3};
use crate::hyperbolicity::{check_tangents_in_center_cone, TangencyReport, Vec3};
use crate::return_map::{PeriodicPoint, ReturnMapParams};

/// Offset of the separatrix seed from the origin along the x-axis.
pub const DELTA_SEED: f64 = 1e-8;

/// A local stable leaf `{(x0, y) : |y − y0| ≤ μ}` clipped to Σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLeaf {
    pub x0: f64,
    pub y0: f64,
    pub mu: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl StableLeaf {
    pub fn contains(&self, p: &CrossSectionPoint) -> bool {
        p.x == self.x0 && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn diameter(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn point(&self, y: f64) -> CrossSectionPoint {
        CrossSectionPoint::new(self.x0, y.clamp(self.y_lo, self.y_hi))
    }

    /// Image under `L`; again a vertical segment.
    pub fn image(&self, rp: &ReturnMapParams) -> Result<StableLeaf> {
        if self.x0 == 0.0 {
            return Err(Error::DomainGamma);
        }
        let x = rp.alpha_on(Side::of(self.x0), self.x0);
        let a = rp.beta(self.x0, self.y_lo);
        let b = rp.beta(self.x0, self.y_hi);
        let c = rp.beta(self.x0, self.y0);
        Ok(StableLeaf {
            x0: x,
            y0: c,
            mu: self.mu * rp.beta_dy(self.x0),
            y_lo: a.min(b),
            y_hi: a.max(b),
        })
    }
}

pub fn local_stable_leaf(p: &CrossSectionPoint, mu: f64) -> Result<StableLeaf> {
    if !(p.x.abs() <= 1.0) || !(mu > 0.0) {
        return Err(Error::InvalidState(format!(
            "leaf needs |x| ≤ 1 and μ > 0, got x={}, μ={mu}",
            p.x
        )));
    }
    Ok(StableLeaf {
        x0: p.x,
        y0: p.y,
        mu,
        y_lo: (p.y - mu).max(-1.0),
        y_hi: (p.y + mu).min(1.0),
    })
}

/// The flowed unstable separatrix of the singularity on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixSegment {
    pub side: Side,
    pub points: Vec<(f64, State3)>,
    pub crossings: Vec<(f64, CrossSectionPoint)>,
    pub t_max: f64,
    /// Time at which the seed reaches the exit face `|x| = 1`.
    pub t_exit: f64,
}

/// Sampling step for separatrix polylines.
pub const SEPARATRIX_DT: f64 = 0.05;

pub fn unstable_separatrix(
    params: &GeometricLorenzParams,
    side: Side,
    t_max: f64,
) -> Result<SeparatrixSegment> {
    let seed = State3::block(side.sign() * DELTA_SEED, 0.0, 0.0);
    let tr = sample_orbit(params, &seed, t_max, SEPARATRIX_DT)?;
    Ok(SeparatrixSegment {
        side,
        points: tr.samples,
        crossings: tr.crossings,
        t_max,
        t_exit: -DELTA_SEED.ln() / params.lambda1,
    })
}

/// Local unstable manifold of a periodic point on Σ, as a graph over x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableCurve {
    pub rp: ReturnMapParams,
    pub x_star: f64,
    pub half_width: f64,
    /// Cycle of the periodic point, starting at `(x*, y*)`.
    pub cycle: Vec<CrossSectionPoint>,
    pub backward_steps: usize,
}

impl UnstableCurve {
    pub fn new(rp: &ReturnMapParams, periodic: &PeriodicPoint, half_width: f64) -> Self {
        let n = periodic.period_n;
        Self {
            rp: *rp,
            x_star: periodic.x_star,
            half_width,
            cycle: periodic.cycle(rp),
            backward_steps: n * (60 / n).max(1),
        }
    }

    /// Σ-orbit `(z_{−m}, …, z_0)` of length `m + 1` ending at `(x, g(x))`.
    pub fn history(&self, x: f64) -> Result<Vec<CrossSectionPoint>> {
        let n = self.cycle.len();
        let m = self.backward_steps;
        let mut xs = vec![0.0; m + 1];
        xs[m] = x;
        for j in 1..=m {
            // z_{−j} follows the cycle point with index −j mod n.
            let phase = (n - j % n) % n;
            let side = Side::of(self.cycle[phase].x);
            xs[m - j] = self.rp.alpha_inverse(side, xs[m - j + 1]).ok_or_else(|| {
                Error::DegenerateOrbit(format!("x = {x} leaves the inverse branch"))
            })?;
        }
        let start_phase = (n - m % n) % n;
        let mut y = self.cycle[start_phase].y;
        let mut out = Vec::with_capacity(m + 1);
        for (j, &xj) in xs.iter().enumerate() {
            out.push(CrossSectionPoint::new(xj, y));
            if j < m {
                y = self.rp.beta(xj, y);
            }
        }
        Ok(out)
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        Ok(self.history(x)?.last().expect("nonempty").y)
    }

    pub fn slope(&self, x: f64) -> Result<f64> {
        let h = 1e-6;
        Ok((self.g(x + h)? - self.g(x - h)?) / (2.0 * h))
    }

    pub fn tangent(&self, x: f64) -> Result<Vec3> {
        Ok(Vec3::new(1.0, self.slope(x)?, 0.0).normalize())
    }

    /// `count` evenly spaced x-values across the curve.
    pub fn sample_xs(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| {
                self.x_star - self.half_width
                    + 2.0 * self.half_width * i as f64 / (count - 1).max(1) as f64
            })
            .collect()
    }
}

/// Center-cone opening used by [`check_tangency_unstable_in_center`].
pub const TANGENCY_KAPPA: f64 = 1e-3;

/// Checks that the tangent of the unstable curve of `periodic` lies in the
/// center cone at 100 points.
pub fn check_tangency_unstable_in_center(
    params: &GeometricLorenzParams,
    periodic: &PeriodicPoint,
) -> Result<TangencyReport> {
    let rp = ReturnMapParams::from(params);
    let curve = UnstableCurve::new(&rp, periodic, DEFAULT_MU);
    let samples = curve
        .sample_xs(100)
        .into_iter()
        .map(|x| Ok((curve.history(x)?, curve.tangent(x)?)))
        .collect::<Result<Vec<_>>>()?;
    check_tangents_in_center_cone(params, &samples, TANGENCY_KAPPA)
}

/// Default chart size.
pub const DEFAULT_MU: f64 = 0.1;

/// The chart `A(D0) ≅ D0 × [−μ, μ]` around the periodic point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolonomyChart {
    pub params: GeometricLorenzParams,
    pub x_star: f64,
    pub y_star: f64,
    pub flow_period: f64,
    /// Leaf half-length on Σ and flow-time half-thickness.
    pub mu: f64,
    /// Half-width of the strong-unstable coordinate range.
    pub mu_u: f64,
    pub curve: UnstableCurve,
    /// Lipschitz constant of the shadowing proposition, measured by
    /// [`bowen_ball_in_stable`].
    pub l_const: f64,
    /// Largest measured ratio `|Δ(π∘π^s)| / |Δ point|` on the chart.
    pub holonomy_lipschitz: f64,
}

/// Chart coordinates `(u, v, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords {
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

impl HolonomyChart {
    /// Ambient point with chart coordinates `(u, v, t)`.
    pub fn chart_point(&self, c: &ChartCoords) -> Result<State3> {
        let x = self.x_star + c.u;
        let y = self.curve.g(x)? + c.v;
        flow(&self.params, &State3::on_sigma(x, y), self.mu + c.t)
    }

    /// The Σ-base of an ambient block point lying in the slab, with the flow
    /// time from Σ.
    pub fn sigma_base(&self, s: &State3) -> Option<(CrossSectionPoint, f64)> {
        if !s.in_block() || !(s.z > 0.0) {
            return None;
        }
        let time = -s.z.ln() / self.params.lambda3;
        if !(-1e-12..=2.0 * self.mu + 1e-12).contains(&time) {
            return None;
        }
        let time = time.clamp(0.0, 2.0 * self.mu);
        let x = s.x * (-self.params.lambda1 * time).exp();
        let y = s.y * (self.params.lambda2 * time).exp();
        Some((CrossSectionPoint::new(x, y), time))
    }

    /// Whether a Σ-point lies on the chart's transversal `A(D0) ∩ Σ`.
    pub fn contains_sigma(&self, p: &CrossSectionPoint) -> bool {
        if (p.x - self.x_star).abs() > self.mu_u {
            return false;
        }
        match self.curve.g(p.x) {
            Ok(g) => (p.y - g).abs() <= self.mu,
            Err(_) => false,
        }
    }

    /// Inverse of [`HolonomyChart::chart_point`]; `None` outside `A(D0)`.
    pub fn coordinates(&self, s: &State3) -> Option<ChartCoords> {
        let (base, time) = self.sigma_base(s)?;
        if !self.contains_sigma(&base) {
            return None;
        }
        let g = self.curve.g(base.x).ok()?;
        Some(ChartCoords {
            u: base.x - self.x_star,
            v: base.y - g,
            t: time - self.mu,
        })
    }

    /// `π^s`: slide along the stable leaf onto `D0`.
    pub fn project_stable(&self, s: &State3) -> Option<State3> {
        let c = self.coordinates(s)?;
        self.chart_point(&ChartCoords { v: 0.0, ..c }).ok()
    }

    /// `π∘π^s`: the strong-unstable coordinate.
    pub fn project(&self, s: &State3) -> Option<f64> {
        self.coordinates(s).map(|c| c.u)
    }
}

/// Builds the chart, measures `L_const`, and checks the product structure on
/// a `grid × grid` lattice in `(u, v)` at three time slices.
pub fn build_holonomy_chart(
    params: &GeometricLorenzParams,
    periodic: &PeriodicPoint,
    mu: f64,
) -> Result<HolonomyChart> {
    build_holonomy_chart_with_grid(params, periodic, mu, 200)
}

pub fn build_holonomy_chart_with_grid(
    params: &GeometricLorenzParams,
    periodic: &PeriodicPoint,
    mu: f64,
    grid: usize,
) -> Result<HolonomyChart> {
    if !(mu > 0.0) {
        return Err(Error::InvalidState("μ must be positive".into()));
    }
    if 4.0 * mu >= periodic.flow_period {
        return Err(Error::MuTooLarge {
            mu,
            reason: format!("4μ must be below the flow period {}", periodic.flow_period),
        });
    }
    let rp = ReturnMapParams::from(params);
    let mu_u = mu;
    let lo = periodic.x_star - mu_u;
    let hi = periodic.x_star + mu_u;
    if lo * hi <= 0.0 || hi.abs().max(lo.abs()) > 1.0 {
        return Err(Error::MuTooLarge {
            mu,
            reason: "the chart would cross Γ or leave Σ".into(),
        });
    }
    // The slab must be traversed inside the block.
    let min_exit = -lo.abs().max(hi.abs()).ln() / params.lambda1;
    if 2.0 * mu >= min_exit {
        return Err(Error::MuTooLarge {
            mu,
            reason: "the slab reaches the exit face".into(),
        });
    }
    let curve = UnstableCurve::new(&rp, periodic, mu_u);
    let bowen = bowen_ball_in_stable(params, periodic, 1e-3, 20)?;
    let mut chart = HolonomyChart {
        params: *params,
        x_star: periodic.x_star,
        y_star: periodic.y_star,
        flow_period: periodic.flow_period,
        mu,
        mu_u,
        curve,
        l_const: bowen.l_const,
        holonomy_lipschitz: 0.0,
    };
    let inj = check_injectivity(&chart, grid)?;
    if !inj.injective {
        return Err(Error::MuTooLarge {
            mu,
            reason: format!(
                "chart not injective on the grid (round-trip error {:e})",
                inj.max_roundtrip_error
            ),
        });
    }
    chart.holonomy_lipschitz = inj.holonomy_lipschitz;
    Ok(chart)
}

/// Result of the grid check of the product structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub injective: bool,
    pub nodes: usize,
    pub max_roundtrip_error: f64,
    pub min_separation: f64,
    pub holonomy_lipschitz: f64,
}

/// Per-row round-trip error, Lipschitz ratio, separation and landing points.
type InjectivityRow = (f64, f64, f64, Vec<[f64; 3]>);

/// Round-trips every node of a `grid × grid` lattice in `(u, v)` at
/// `t ∈ {−μ, 0, μ}` and checks that distinct nodes land at distinct points.
pub fn check_injectivity(chart: &HolonomyChart, grid: usize) -> Result<InjectivityReport> {
    let grid = grid.max(2);
    let coord = |i: usize, r: f64| -r + 2.0 * r * i as f64 / (grid - 1) as f64;
    let slices = [-chart.mu, 0.0, chart.mu];
    let rows: Vec<Result<InjectivityRow>> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let u = coord(i, chart.mu_u * (1.0 - 1e-9));
            let x = chart.x_star + u;
            let g = chart.curve.g(x)?;
            let mut err: f64 = 0.0;
            let mut lip: f64 = 0.0;
            let mut min_sep = f64::INFINITY;
            let mut pts = Vec::with_capacity(grid * slices.len());
            for &t in &slices {
                let mut prev: Option<[f64; 3]> = None;
                for j in 0..grid {
                    let v = coord(j, chart.mu * (1.0 - 1e-9));
                    let s = flow(&chart.params, &State3::on_sigma(x, g + v), chart.mu + t)?;
                    match chart.coordinates(&s) {
                        Some(c) => {
                            err = err
                                .max((c.u - u).abs())
                                .max((c.v - v).abs())
                                .max((c.t - t).abs());
                        }
                        None => err = f64::INFINITY,
                    }
                    let p = s.position();
                    if let Some(q) = prev {
                        min_sep = min_sep.min(crate::flow::dist3(p, q));
                    }
                    prev = Some(p);
                    pts.push(p);
                }
            }
            // Holonomy distortion between neighbouring leaves at t = 0.
            if i + 1 < grid {
                let u2 = coord(i + 1, chart.mu_u * (1.0 - 1e-9));
                let x2 = chart.x_star + u2;
                let g2 = chart.curve.g(x2)?;
                for j in (0..grid).step_by((grid / 10).max(1)) {
                    let v = coord(j, chart.mu * (1.0 - 1e-9));
                    let a = flow(&chart.params, &State3::on_sigma(x, g + v), chart.mu)?;
                    let b = flow(&chart.params, &State3::on_sigma(x2, g2 + v), chart.mu)?;
                    let d = a.distance(&b);
                    if d > 0.0 {
                        lip = lip.max((u2 - u).abs() / d);
                    }
                }
            }
            Ok((err, lip, min_sep, pts))
        })
        .collect();
    let mut max_err: f64 = 0.0;
    let mut lip: f64 = 0.0;
    let mut min_sep = f64::INFINITY;
    let mut columns = Vec::with_capacity(grid);
    for r in rows {
        let (e, l, s, pts) = r?;
        max_err = max_err.max(e);
        lip = lip.max(l);
        min_sep = min_sep.min(s);
        columns.push(pts);
    }
    // Neighbouring columns must not collide either.
    for w in columns.windows(2) {
        for (p, q) in w[0].iter().zip(&w[1]) {
            min_sep = min_sep.min(crate::flow::dist3(*p, *q));
        }
    }
    Ok(InjectivityReport {
        injective: max_err < 1e-9 && min_sep > 0.0,
        nodes: grid * grid * slices.len(),
        max_roundtrip_error: max_err,
        min_separation: min_sep,
        holonomy_lipschitz: lip,
    })
}

/// Empirical check that Σ-tracking points lie near the stable set of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BowenBallReport {
    pub holds: bool,
    pub eps0: f64,
    pub returns: usize,
    pub sampled: usize,
    pub tracked: usize,
    /// `max |z − p|_Σ / eps0` over tracked points.
    pub l_const: f64,
    /// `max |z.x − x*| / eps0` over tracked points: distance to the leaf of `p`.
    pub max_stable_distance: f64,
}

/// Number of consecutive returns (starting with `z` itself) during which the
/// Σ-orbit of `z` stays within `eps0` of the cycle of `periodic`, capped at
/// `max_returns + 1`.
pub fn tracked_returns(
    rp: &ReturnMapParams,
    periodic: &PeriodicPoint,
    z: &CrossSectionPoint,
    eps0: f64,
    max_returns: usize,
) -> usize {
    let cycle = periodic.cycle(rp);
    let mut cur = *z;
    for i in 0..=max_returns {
        if cur.distance(&cycle[i % cycle.len()]) > eps0 {
            return i;
        }
        if i == max_returns {
            break;
        }
        match crate::return_map::apply_L(rp, &cur) {
            Ok(next) => cur = next,
            Err(_) => return i + 1,
        }
    }
    max_returns + 1
}

/// R2 low-discrepancy sequence in the unit square.
fn r2(i: usize) -> (f64, f64) {
    const G: f64 = 1.324_717_957_244_746;
    let a1 = 1.0 / G;
    let a2 = 1.0 / (G * G);
    ((0.5 + a1 * i as f64).fract(), (0.5 + a2 * i as f64).fract())
}

/// Samples points near `p` on a scale ladder in x, keeps those tracking the
/// cycle for `returns` returns, and measures their distance to the stable
/// leaf of `p` and to `p` itself. Deterministic.
pub fn bowen_ball_in_stable(
    params: &GeometricLorenzParams,
    periodic: &PeriodicPoint,
    eps0: f64,
    returns: usize,
) -> Result<BowenBallReport> {
    if !(eps0 > 0.0 && eps0 <= 1e-2) {
        return Err(Error::InvalidState(format!(
            "eps0 must lie in (0, 1e-2], got {eps0}"
        )));
    }
    let rp = ReturnMapParams::from(params);
    let rate = periodic
        .unstable_multiplier(&rp)
        .abs()
        .powf(1.0 / periodic.period_n as f64);
    let target = 1000;
    let rungs = returns + 3;
    let mut tracked = 0;
    let mut sampled = 0;
    let mut l_const: f64 = 0.0;
    let mut stable: f64 = 0.0;
    while tracked < target && sampled < 200 * target {
        let (a, b) = r2(sampled);
        let rung = sampled % rungs;
        let dx = (2.0 * a - 1.0) * eps0 * rate.powi(-(rung as i32));
        let dy = (2.0 * b - 1.0) * eps0;
        let z = CrossSectionPoint::new(periodic.x_star + dx, periodic.y_star + dy);
        sampled += 1;
        if tracked_returns(&rp, periodic, &z, eps0, returns) > returns {
            tracked += 1;
            l_const = l_const.max(z.distance(&periodic.point()) / eps0);
            stable = stable.max((z.x - periodic.x_star).abs() / eps0);
        }
    }
    Ok(BowenBallReport {
        holds: tracked > 0 && stable <= 1.0,
        eps0,
        returns,
        sampled,
        tracked,
        l_const,
        max_stable_distance: stable,
    })
}

/// One separatrix arc inside `A(D0)`, collapsed by `π∘π^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedArc {
    /// Σ-crossing time, measured from the exit of the block.
    pub time: f64,
    pub entry: CrossSectionPoint,
    pub coordinate: f64,
    /// Diameter of the image of the sampled arc.
    pub diameter: f64,
}

/// Image of `X_T(W^uu_loc(q)) ∩ A(D0)` under `π∘π^s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixProjection {
    pub t_used: f64,
    pub projected_points: Vec<f64>,
    pub arcs: Vec<ProjectedArc>,
    /// Σ-crossings of the separatrix up to time `T` after its exit.
    pub sigma_trace: Vec<CrossSectionPoint>,
}

/// Collapses every arc of the time-≤T separatrix lying in `A(D0)`.
///
/// `T` counts from the separatrix's exit from the block, so the flowed set
/// is the image of the whole local strong-unstable segment `{(x, 0, 0)}`.
pub fn project_separatrix(
    chart: &HolonomyChart,
    sep: &SeparatrixSegment,
    t: f64,
) -> Result<SeparatrixProjection> {
    if !(t > 0.0) {
        return Err(Error::InvalidState("T must be positive".into()));
    }
    if sep.t_max < sep.t_exit + t {
        return Err(Error::InvalidState(format!(
            "separatrix covers {} time units after exit, need {t}",
            sep.t_max - sep.t_exit
        )));
    }
    let mut arcs = Vec::new();
    let mut trace = Vec::new();
    for &(time, c) in &sep.crossings {
        let rel = time - sep.t_exit;
        if rel > t {
            break;
        }
        trace.push(c);
        if !chart.contains_sigma(&c) {
            continue;
        }
        let span = (2.0 * chart.mu).min(t - rel);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..=20 {
            let s = flow(&chart.params, &c.to_state(), span * k as f64 / 20.0)?;
            if let Some(u) = chart.project(&s) {
                lo = lo.min(u);
                hi = hi.max(u);
            }
        }
        arcs.push(ProjectedArc {
            time: rel,
            entry: c,
            coordinate: c.x - chart.x_star,
            diameter: hi - lo,
        });
    }
    let mut projected_points: Vec<f64> = arcs.iter().map(|a| a.coordinate).collect();
    projected_points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SeparatrixProjection {
        t_used: t,
        projected_points,
        arcs,
        sigma_trace: trace,
    })
}

/// The certified gap in the strong-unstable coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub projected_points: Vec<f64>,
    pub gap_interval: (f64, f64),
    /// Half-length of the gap: distance from its midpoint to the nearest
    /// projected point or chart edge.
    pub clearance: f64,
    #[serde(rename = "T_used")]
    pub t_used: f64,
    pub d_star: f64,
    pub h: f64,
    /// `d_star` recomputed at `h / 2`.
    pub d_star_half_h: f64,
    pub x_star: f64,
    pub y_star: f64,
    pub mu: f64,
    pub mu_u: f64,
    pub l_const: f64,
    /// The `u`-range of the stable strip used for `d_star`.
    pub strip: (f64, f64),
    /// Σ-crossings of the separatrix up to `T`.
    pub sigma_trace: Vec<CrossSectionPoint>,
}

impl GapCertificate {
    /// Relative change of `d_star` under halving `h`.
    pub fn refinement_change(&self) -> f64 {
        (self.d_star - self.d_star_half_h).abs() / self.d_star
    }
}

/// Largest open gap of `[−r, r]` missed by `points` (sorted); ties go to
/// the gap whose midpoint is nearest 0.
pub fn largest_gap(points: &[f64], r: f64) -> (f64, f64) {
    let mut edges = vec![-r];
    edges.extend(points.iter().copied().filter(|p| p.abs() < r));
    edges.push(r);
    let mut best = (edges[0], edges[1]);
    for w in edges.windows(2) {
        let (len, best_len) = (w[1] - w[0], best.1 - best.0);
        let mid = (0.5 * (w[0] + w[1])).abs();
        let best_mid = (0.5 * (best.0 + best.1)).abs();
        if len > best_len || (len == best_len && mid < best_mid) {
            best = (w[0], w[1]);
        }
    }
    best
}

/// Minimum Σ-distance on an `h`-grid between the stable strip over `strip`
/// and the separatrix trace.
pub fn strip_distance(
    chart: &HolonomyChart,
    strip: (f64, f64),
    trace: &[CrossSectionPoint],
    h: f64,
) -> Result<f64> {
    let nx = ((strip.1 - strip.0) / h).ceil() as usize + 1;
    let ny = (2.0 * chart.mu / h).ceil() as usize + 1;
    let cols: Vec<Result<f64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let u = (strip.0 + i as f64 * h).min(strip.1);
            let x = chart.x_star + u;
            let g = chart.curve.g(x)?;
            // Only trace points near this column can matter.
            let mut best = f64::INFINITY;
            for j in 0..ny {
                let v = (-chart.mu + j as f64 * h).min(chart.mu);
                let p = CrossSectionPoint::new(x, g + v);
                for c in trace {
                    best = best.min(p.distance(c));
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = f64::INFINITY;
    for c in cols {
        best = best.min(c?);
    }
    Ok(best)
}

/// Picks the gap and certifies its distance from the flowed separatrix.
///
/// The stable strip is taken over the middle half of the gap, so it keeps a
/// positive margin from the projected points on either side.
pub fn find_gap_interval(
    proj: &SeparatrixProjection,
    chart: &HolonomyChart,
    h: f64,
) -> Result<GapCertificate> {
    if !(h > 0.0) {
        return Err(Error::InvalidState(
            "grid resolution must be positive".into(),
        ));
    }
    let gap = largest_gap(&proj.projected_points, chart.mu_u);
    let clearance = 0.5 * (gap.1 - gap.0);
    if clearance < h {
        return Err(Error::NoGap);
    }
    let q = 0.25 * (gap.1 - gap.0);
    let strip = (gap.0 + q, gap.1 - q);
    let d_star = strip_distance(chart, strip, &proj.sigma_trace, h)?;
    let d_star_half_h = strip_distance(chart, strip, &proj.sigma_trace, h / 2.0)?;
    if !(d_star > 0.0) {
        return Err(Error::NoGap);
    }
    Ok(GapCertificate {
        projected_points: proj.projected_points.clone(),
        gap_interval: gap,
        clearance,
        t_used: proj.t_used,
        d_star,
        h,
        d_star_half_h,
        x_star: chart.x_star,
        y_star: chart.y_star,
        mu: chart.mu,
        mu_u: chart.mu_u,
        l_const: chart.l_const,
        strip,
        sigma_trace: proj.sigma_trace.clone(),
    })
}

/// Density of the backward α-orbit of `x*` in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub delta: f64,
    /// First depth at which the preimages are `δ`-dense.
    pub n_needed: Option<usize>,
    /// Largest distance from a point of `[−1, 1]` to the set, per depth.
    pub covering_radius: Vec<f64>,
}

fn covering_radius(points: &mut [f64]) -> f64 {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut r = (points[0] + 1.0).max(1.0 - points[points.len() - 1]);
    for w in points.windows(2) {
        r = r.max(0.5 * (w[1] - w[0]));
    }
    r
}

/// Grows `∪_{n ≤ N} α^{−n}(x*)` one depth at a time until it is `δ`-dense or
/// `n_max` is reached.
pub fn preimage_density(
    params: &GeometricLorenzParams,
    x_star: f64,
    delta: f64,
    n_max: usize,
) -> DensityReport {
    let rp = ReturnMapParams::from(params);
    let mut all = vec![x_star];
    let mut frontier = vec![x_star];
    let mut radii = vec![covering_radius(&mut all.clone())];
    let mut n_needed = (radii[0] <= delta).then_some(0);
    for n in 1..=n_max {
        if n_needed.is_some() || frontier.len() > 1 << 22 {
            break;
        }
        frontier = frontier
            .iter()
            .flat_map(|&u| {
                [Side::Minus, Side::Plus]
                    .into_iter()
                    .filter_map(move |s| rp.alpha_inverse(s, u))
            })
            .filter(|&x| x != 0.0)
            .collect();
        all.extend_from_slice(&frontier);
        let r = covering_radius(&mut all);
        radii.push(r);
        if r <= delta {
            n_needed = Some(n);
        }
    }
    DensityReport {
        delta,
        n_needed,
        covering_radius: radii,
    }
}

/// Cross-check of the vertical stable leaves by graph transform: a slightly
/// tilted graph `x = φ(y)` through `αⁿ(x0)` is pulled back `n` times along the
/// orbit of `x0`, and the result is compared with the leaf `{x = x0}`.
/// Returns the worst `|φ(y) − x0|` over `leaves` starting points.
pub fn graph_transform_error(
    params: &GeometricLorenzParams,
    leaves: usize,
    pulls: usize,
) -> Result<f64> {
    const NODES: usize = 41;
    const TILT: f64 = 0.01;
    let rp = ReturnMapParams::from(params);
    let ys: Vec<f64> = (0..NODES)
        .map(|i| -1.0 + 2.0 * i as f64 / (NODES - 1) as f64)
        .collect();
    let interp = |phi: &[f64], y: f64| {
        let t = ((y + 1.0) / 2.0 * (NODES - 1) as f64).clamp(0.0, (NODES - 1) as f64);
        let i = (t.floor() as usize).min(NODES - 2);
        phi[i] + (t - i as f64) * (phi[i + 1] - phi[i])
    };
    let mut worst: f64 = 0.0;
    for j in 0..leaves {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let x0 = sign * (0.3 + 0.06 * j as f64);
        let mut orbit = vec![x0];
        for _ in 0..pulls {
            let x = *orbit.last().unwrap();
            if x.abs() < 1e-6 {
                return Err(Error::InvalidState(format!(
                    "orbit of {x0} passes too close to Γ"
                )));
            }
            orbit.push(rp.alpha_on(Side::of(x), x));
        }
        let xn = orbit[pulls];
        let mut phi: Vec<f64> = ys.iter().map(|y| xn + TILT * y).collect();
        for k in (0..pulls).rev() {
            let side = Side::of(orbit[k]);
            let mut next = vec![orbit[k]; NODES];
            for (i, &y) in ys.iter().enumerate() {
                let mut x = orbit[k];
                for _ in 0..50 {
                    let target = interp(&phi, rp.beta(x, y));
                    let nx = rp.alpha_inverse(side, target).ok_or_else(|| {
                        Error::InvalidState(format!(
                            "graph left the branch of {side:?} at pull {k}"
                        ))
                    })?;
                    let done = (nx - x).abs() <= 1e-16;
                    x = nx;
                    if done {
                        break;
                    }
                }
                next[i] = x;
            }
            phi = next;
        }
        worst = phi.iter().map(|x| (x - x0).abs()).fold(worst, f64::max);
    }
    Ok(worst)
}

/// Summary of the foliation and holonomy checks around `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationReport {
    /// Worst `|diam L(ℓ)/diam ℓ − b|x|^{λ2/λ1}|` over sampled leaves.
    pub leaf_contraction_error: f64,
    /// Worst `|π^s(X_s(z)) − X_s(π^s(z))|` over a chart grid.
    pub commutation_error: f64,
    /// Distance of graph-transformed leaves from the vertical ones.
    pub graph_transform_error: f64,
    pub injectivity: InjectivityReport,
    pub density: DensityReport,
    pub tangency: TangencyReport,
    pub bowen: BowenBallReport,
}

/// Runs the leaf, commutation, injectivity, density, tangency and Bowen-ball
/// checks.
pub fn foliation_report(
    chart: &HolonomyChart,
    periodic: &PeriodicPoint,
    injectivity_grid: usize,
) -> Result<FoliationReport> {
    let params = &chart.params;
    let rp = ReturnMapParams::from(params);
    let mut leaf_err: f64 = 0.0;
    for i in 0..200 {
        let x = -0.995 + 0.01 * i as f64;
        let leaf = local_stable_leaf(&CrossSectionPoint::new(x, 0.0), 0.2)?;
        let ratio = leaf.image(&rp)?.diameter() / leaf.diameter();
        leaf_err = leaf_err.max((ratio - rp.b * x.abs().powf(rp.exponent_y)).abs());
    }
    let mut comm: f64 = 0.0;
    for i in 0..9 {
        for j in 0..9 {
            let u = 0.99 * chart.mu_u * (i as f64 / 4.0 - 1.0);
            let v = 0.99 * chart.mu * (j as f64 / 4.0 - 1.0);
            for t in [-0.5 * chart.mu, -0.25 * chart.mu, 0.0] {
                for dt in [0.25 * chart.mu, 0.5 * chart.mu] {
                    let z = chart.chart_point(&ChartCoords { u, v, t })?;
                    let missing = || Error::InvalidState("grid point left the chart".into());
                    let a = chart
                        .project_stable(&flow(params, &z, dt)?)
                        .ok_or_else(missing)?;
                    let b = flow(params, &chart.project_stable(&z).ok_or_else(missing)?, dt)?;
                    comm = comm.max(a.distance(&b));
                }
            }
        }
    }
    Ok(FoliationReport {
        leaf_contraction_error: leaf_err,
        commutation_error: comm,
        graph_transform_error: graph_transform_error(params, 10, 40)?,
        injectivity: check_injectivity(chart, injectivity_grid)?,
        density: preimage_density(params, periodic.x_star, 1e-2, 30),
        tangency: check_tangency_unstable_in_center(params, periodic)?,
        bowen: bowen_ball_in_stable(params, periodic, 1e-3, 20)?,
    })
}
