//! Tangent flow and the partially hyperbolic splitting `E^s ⊕ E^c`.
//!
//! In the linear block the derivative cocycle is diagonal and exact. A tube
//! transit acts at the instant of arrival on Σ by the linear map
//!
//! ```text
//! v ↦ σ X(q) + DT (v − σ X(p)),   σ = v_x / X_x(p)
//! ```
//!
//! where `p` is the entry point on the exit face, `q` its landing point, and
//! `DT` the derivative of the affine tube map on the face. The flow direction
//! is carried to the flow direction and face-tangent vectors to Σ-tangent
//! vectors, which is the derivative of the flow between the two sections.
//! While inside a tube, tangent vectors stay in the frame of the entry face
//! and the vector field there is `X(p)`.
//!
//! Contraction and domination are measured per return (Σ to Σ). The return
//! is the natural time unit here: the tube contributes its contraction only
//! at arrival, so a time-one window that sits inside a tube shows none.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    time_to_exit, tube_image, CrossSectionPoint, FlightPlan, GeometricLorenzParams, Region, Side,
    State3, Trajectory,
};

pub type Vec3 = Vector3<f64>;

/// The vector field at `s`. In a tube this is the field at the entry point,
/// matching the entry-face frame used for tangent vectors there.
pub fn vector_field(params: &GeometricLorenzParams, s: &State3) -> Vec3 {
    match s.region {
        Region::LinearBlock => Vec3::new(
            params.lambda1 * s.x,
            -params.lambda2 * s.y,
            -params.lambda3 * s.z,
        ),
        Region::Tube(t) => Vec3::new(
            params.lambda1 * t.side.sign(),
            -params.lambda2 * t.entry_y,
            -params.lambda3 * t.entry_z,
        ),
    }
}

fn block_derivative(params: &GeometricLorenzParams, t: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(
        (params.lambda1 * t).exp(),
        (-params.lambda2 * t).exp(),
        (-params.lambda3 * t).exp(),
    ))
}

/// Derivative of a full tube transit, from the exit-face frame at
/// `(±1, entry_y, entry_z)` to the tangent space of Σ at the landing point.
pub fn tube_derivative(
    params: &GeometricLorenzParams,
    side: Side,
    entry_y: f64,
    entry_z: f64,
) -> Matrix3<f64> {
    let s = side.sign();
    let xp = Vec3::new(
        params.lambda1 * s,
        -params.lambda2 * entry_y,
        -params.lambda3 * entry_z,
    );
    let q = tube_image(params, side, entry_y, entry_z);
    let xq = Vec3::new(params.lambda1 * q.x, -params.lambda2 * q.y, -params.lambda3);
    let dt = Matrix3::new(0.0, 0.0, s * params.k, 0.0, params.b, 0.0, 0.0, 0.0, 0.0);
    let ex = Vec3::x();
    let proj = Matrix3::identity() - xp * ex.transpose() / xp.x;
    xq * ex.transpose() / xp.x + dt * proj
}

/// Derivative cocycle `D X_t` at `s`, with the state reached.
pub fn flow_derivative(
    params: &GeometricLorenzParams,
    s: &State3,
    t: f64,
) -> Result<(Matrix3<f64>, State3)> {
    if t < 0.0 {
        let end = crate::flow::flow(params, s, t)?;
        let d = match s.region {
            Region::LinearBlock => block_derivative(params, t),
            Region::Tube(_) => Matrix3::identity(),
        };
        return Ok((d, end));
    }
    let plan = FlightPlan::new(params, s, t);
    let mut d = Matrix3::identity();
    for piece in &plan.pieces {
        if piece.t_start > t {
            break;
        }
        let span = piece.t_end.min(t) - piece.t_start;
        if let Region::LinearBlock = piece.start.region {
            d = block_derivative(params, span) * d;
        }
        if piece.t_end <= t {
            if let Region::Tube(ts) = piece.start.region {
                d = tube_derivative(params, ts.side, ts.entry_y, ts.entry_z) * d;
            }
        }
    }
    Ok((d, plan.state_at(params, t)))
}

/// `D_s X_t v`.
pub fn tangent_flow(params: &GeometricLorenzParams, s: &State3, v: &Vec3, t: f64) -> Result<Vec3> {
    Ok(flow_derivative(params, s, t)?.0 * v)
}

/// Central finite difference of the flow along `v`; used as an oracle for
/// [`tangent_flow`] away from region boundaries.
pub fn finite_difference_tangent(
    params: &GeometricLorenzParams,
    s: &State3,
    v: &Vec3,
    t: f64,
    h: f64,
) -> Result<Vec3> {
    if !s.in_block() {
        return Err(Error::InvalidState(
            "finite differences need a block base point".into(),
        ));
    }
    let shift = |sign: f64| {
        State3::block(
            s.x + sign * h * v.x,
            s.y + sign * h * v.y,
            s.z + sign * h * v.z,
        )
    };
    let plus = crate::flow::flow(params, &shift(1.0), t)?;
    let minus = crate::flow::flow(params, &shift(-1.0), t)?;
    Ok(Vec3::new(plus.x - minus.x, plus.y - minus.y, plus.z - minus.z) / (2.0 * h))
}

/// Derivative of one full return from the Σ-point `p`, with the landing
/// point and the return time.
pub fn return_derivative(
    params: &GeometricLorenzParams,
    p: &CrossSectionPoint,
) -> Result<(Matrix3<f64>, CrossSectionPoint, f64)> {
    if p.on_gamma() {
        return Err(Error::DomainGamma);
    }
    let s = p.to_state();
    let tau = time_to_exit(params, &s)?;
    let side = Side::of(p.x);
    let entry_y = p.y * (-params.lambda2 * tau).exp();
    let entry_z = (-params.lambda3 * tau).exp();
    let d = tube_derivative(params, side, entry_y, entry_z) * block_derivative(params, tau);
    Ok((
        d,
        tube_image(params, side, entry_y, entry_z),
        tau + params.tau_tube,
    ))
}

/// Vector field on Σ at `p`.
pub fn sigma_field(params: &GeometricLorenzParams, p: &CrossSectionPoint) -> Vec3 {
    Vec3::new(params.lambda1 * p.x, -params.lambda2 * p.y, -params.lambda3)
}

/// Projects a tangent vector at a Σ-point onto `TΣ` along the flow.
pub fn project_to_sigma(params: &GeometricLorenzParams, p: &CrossSectionPoint, v: &Vec3) -> Vec3 {
    let x = sigma_field(params, p);
    v - x * (v.z / x.z)
}

/// Orthonormal frame carried along an orbit, re-orthonormalized by QR after
/// each step. The log-diagonal of R accumulates the Lyapunov sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub base: State3,
    pub vectors: Matrix3<f64>,
}

impl TangentFrame {
    pub fn standard(base: State3) -> Self {
        Self {
            base,
            vectors: Matrix3::identity(),
        }
    }

    /// Advances by `t` and returns the new frame with `ln |R_ii|`.
    pub fn advance(
        &self,
        params: &GeometricLorenzParams,
        t: f64,
    ) -> Result<(TangentFrame, [f64; 3])> {
        let (d, base) = flow_derivative(params, &self.base, t)?;
        let qr = (d * self.vectors).qr();
        let (mut q, r) = qr.unpack();
        let mut logs = [0.0; 3];
        for i in 0..3 {
            let rii = r[(i, i)];
            if rii < 0.0 {
                q.set_column(i, &(-q.column(i)));
            }
            logs[i] = rii.abs().ln();
        }
        Ok((TangentFrame { base, vectors: q }, logs))
    }
}

/// Cone around `E^c` (`Unstable`, `Center`) or around `E^s` (`Stable`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeFlavor {
    Unstable,
    Stable,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub kappa: f64,
    pub flavor: ConeFlavor,
}

/// Splitting data at one Σ-crossing of the orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingSample {
    pub time: f64,
    pub point: CrossSectionPoint,
    pub e_s: [f64; 3],
    /// Orthonormal basis of the center plane; the first vector is the flow direction.
    pub e_c: [[f64; 3]; 2],
    /// `‖DX_ret | E^s‖` over the return starting here.
    pub contraction: f64,
    /// `‖DX_ret | E^s‖ · ‖(DX_ret | E^c)^{-1}‖`.
    pub domination: f64,
    pub return_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub samples: Vec<SplittingSample>,
    /// Worst per-return contraction of `E^s` and worst domination ratio.
    pub lambda_prime: f64,
    pub worst_contraction: f64,
    pub worst_domination: f64,
    /// Constant in `‖DX_t | E^s‖ ≤ C e^{rate t}` along the orbit.
    pub c_est: f64,
    /// Slowest exponential contraction rate of `E^s` per unit time (negative).
    pub stable_rate: f64,
    /// Smallest angle between `E^s` and the center plane.
    pub min_angle: f64,
}

/// Returns skipped at both ends so power iterations have converged.
pub const SPLITTING_BURN_IN: usize = 50;

fn gram_schmidt2(a: Vec3, b: Vec3) -> (Vec3, Vec3) {
    let a = a.normalize();
    let b = (b - a * a.dot(&b)).normalize();
    (a, b)
}

/// Estimates `E^s` and `E^c` at the Σ-crossings of `orbit`.
///
/// `E^s` is the limit of a generic vector pulled back through the return
/// cocycle with renormalization; `E^c` is spanned by the flow direction and a
/// generic vector pushed forward. The first and last
/// [`SPLITTING_BURN_IN`] crossings only serve as burn-in.
pub fn estimate_splitting(
    params: &GeometricLorenzParams,
    orbit: &Trajectory,
) -> Result<SplittingEstimate> {
    let crossings = &orbit.crossings;
    if crossings.len() < 100 + 2 * SPLITTING_BURN_IN {
        return Err(Error::DegenerateOrbit(format!(
            "need at least {} returns, got {}",
            100 + 2 * SPLITTING_BURN_IN,
            crossings.len()
        )));
    }
    let n = crossings.len() - 1;
    let mut cocycle = Vec::with_capacity(n);
    for (_, p) in &crossings[..n] {
        if p.on_gamma() {
            return Err(Error::DegenerateOrbit("orbit hits Γ".into()));
        }
        let (d, _, rt) = return_derivative(params, p)?;
        cocycle.push((d, rt));
    }

    // Pull back for E^s.
    let mut e_s = vec![Vec3::zeros(); n + 1];
    let mut v = Vec3::new(0.31, 0.83, -0.47).normalize();
    e_s[n] = v;
    for i in (0..n).rev() {
        let inv = cocycle[i]
            .0
            .try_inverse()
            .ok_or_else(|| Error::DegenerateOrbit("singular return derivative".into()))?;
        v = (inv * v).normalize();
        e_s[i] = v;
    }

    // Push forward for the expanded center direction.
    let mut u = Vec3::new(0.57, -0.21, 0.79).normalize();
    let mut e_u = vec![u; n + 1];
    for i in 0..n {
        u = (cocycle[i].0 * u).normalize();
        e_u[i + 1] = u;
    }
    let planes: Vec<(Vec3, Vec3)> = crossings
        .iter()
        .zip(&e_u)
        .map(|((_, p), u)| gram_schmidt2(sigma_field(params, p), *u))
        .collect();

    let lo = SPLITTING_BURN_IN;
    let hi = n - SPLITTING_BURN_IN;
    let mut samples = Vec::with_capacity(hi - lo);
    let mut lambda_prime: f64 = 0.0;
    let mut worst_contraction: f64 = 0.0;
    let mut worst_domination: f64 = 0.0;
    let mut min_angle = f64::INFINITY;
    let mut stable_rate = f64::NEG_INFINITY;
    for i in lo..hi {
        let (d, rt) = cocycle[i];
        let (c1, c2) = planes[i];
        let (d1, d2) = planes[i + 1];
        let contraction = (d * e_s[i]).norm();
        let q0 = Matrix3x2::from_columns(&[c1, c2]);
        let q1 = Matrix3x2::from_columns(&[d1, d2]);
        let restricted: Matrix2<f64> = q1.transpose() * d * q0;
        let smin = restricted.singular_values().min();
        let domination = contraction / smin;
        let normal = c1.cross(&c2).normalize();
        let angle = normal.dot(&e_s[i]).abs().min(1.0).asin();
        min_angle = min_angle.min(angle);
        worst_contraction = worst_contraction.max(contraction);
        worst_domination = worst_domination.max(domination);
        lambda_prime = lambda_prime.max(contraction).max(domination);
        stable_rate = stable_rate.max(contraction.ln() / rt);
        samples.push(SplittingSample {
            time: crossings[i].0,
            point: crossings[i].1,
            e_s: e_s[i].into(),
            e_c: [c1.into(), c2.into()],
            contraction,
            domination,
            return_time: rt,
        });
    }
    let c_est = stable_constant(params, &samples, stable_rate);
    Ok(SplittingEstimate {
        samples,
        lambda_prime,
        worst_contraction,
        worst_domination,
        c_est,
        stable_rate,
        min_angle,
    })
}

/// `C = sup_{t_a < t_b} ‖DX|E^s‖(t_a→t_b) e^{−rate (t_b − t_a)}`, evaluated
/// at the breakpoints of the piecewise-linear log-contraction: block exit
/// and the instants just before and after each arrival.
fn stable_constant(params: &GeometricLorenzParams, samples: &[SplittingSample], rate: f64) -> f64 {
    let mut t = 0.0;
    let mut log_c = 0.0;
    let mut values = vec![0.0];
    for s in samples {
        let block = s.return_time - params.tau_tube;
        t += block;
        log_c -= params.lambda2 * block;
        values.push(log_c - rate * t);
        t += params.tau_tube;
        values.push(log_c - rate * t);
        log_c = log_c + s.contraction.ln() + params.lambda2 * block;
        values.push(log_c - rate * t);
    }
    let mut best = 0.0f64;
    let mut min_so_far = f64::INFINITY;
    for v in values {
        min_so_far = min_so_far.min(v);
        best = best.max(v - min_so_far);
    }
    best.exp()
}

/// Outcome of a cone-invariance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub holds: bool,
    /// Worst `κ_image / κ` over samples and boundary vectors.
    pub margin: f64,
}

/// Coefficients of `w` in the basis `(e_s, c1, c2)`.
fn split_components(e_s: &Vec3, c1: &Vec3, c2: &Vec3, w: &Vec3) -> Option<(f64, f64)> {
    let basis = Matrix3::from_columns(&[*e_s, *c1, *c2]);
    let coef = basis.try_inverse()? * w;
    let center = c1 * coef.y + c2 * coef.z;
    Some(((e_s * coef.x).norm(), center.norm()))
}

/// Checks that `returns` returns of the cocycle (forward for center cones,
/// backward for stable cones) map 100 boundary vectors of the cone at each
/// sample strictly inside the cone at the image.
pub fn verify_cone_invariance(
    params: &GeometricLorenzParams,
    cone: &ConeParams,
    splitting: &SplittingEstimate,
    returns: usize,
) -> Result<ConeCheck> {
    if !(cone.kappa > 0.0) {
        return Err(Error::InvalidState("cone opening must be positive".into()));
    }
    if !cone.kappa.is_finite() {
        return Ok(ConeCheck {
            holds: false,
            margin: f64::INFINITY,
        });
    }
    let returns = returns.max(1);
    let samples = &splitting.samples;
    let mut margin: f64 = 0.0;
    for i in 0..samples.len().saturating_sub(returns) {
        let (src, dst) = (&samples[i], &samples[i + returns]);
        let mut d = Matrix3::identity();
        for s in &samples[i..i + returns] {
            d = return_derivative(params, &s.point)?.0 * d;
        }
        let (map, from, to) = match cone.flavor {
            ConeFlavor::Unstable | ConeFlavor::Center => (d, src, dst),
            ConeFlavor::Stable => (
                d.try_inverse()
                    .ok_or_else(|| Error::DegenerateOrbit("singular return derivative".into()))?,
                dst,
                src,
            ),
        };
        let fs = Vec3::from(from.e_s);
        let (f1, f2) = (Vec3::from(from.e_c[0]), Vec3::from(from.e_c[1]));
        let ts = Vec3::from(to.e_s);
        let (t1, t2) = (Vec3::from(to.e_c[0]), Vec3::from(to.e_c[1]));
        for j in 0..50 {
            let theta = std::f64::consts::PI * j as f64 / 50.0;
            let vc = f1 * theta.cos() + f2 * theta.sin();
            for sign in [1.0, -1.0] {
                let (core, side) = match cone.flavor {
                    ConeFlavor::Unstable | ConeFlavor::Center => (vc, fs * (sign * cone.kappa)),
                    ConeFlavor::Stable => (fs, vc * (sign * cone.kappa)),
                };
                let w = map * (core + side);
                let (ws, wc) = split_components(&ts, &t1, &t2, &w)
                    .ok_or_else(|| Error::DegenerateOrbit("splitting not transverse".into()))?;
                let ratio = match cone.flavor {
                    ConeFlavor::Unstable | ConeFlavor::Center => ws / wc,
                    ConeFlavor::Stable => wc / ws,
                };
                margin = margin.max(ratio / cone.kappa);
            }
        }
    }
    Ok(ConeCheck {
        holds: margin < 1.0,
        margin,
    })
}

/// Growth of area inside the center plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionalExpansionReport {
    pub times: Vec<f64>,
    /// `ln |det(DX_t | E^c)|` at each time.
    pub log_dets: Vec<f64>,
    pub rate: f64,
    /// RMS deviation from the fitted line, relative to the total log growth.
    pub residual: f64,
}

/// Samples `ln |det(DX_t | plane)|` once per unit time up to `t_max` for the
/// 2-plane spanned by `plane` at `start`, and fits an exponential rate.
pub fn sectional_expansion_check(
    params: &GeometricLorenzParams,
    start: &State3,
    plane: [Vec3; 2],
    t_max: f64,
) -> Result<SectionalExpansionReport> {
    let (mut v1, mut v2) = gram_schmidt2(plane[0], plane[1]);
    let mut state = *start;
    let mut times = vec![0.0];
    let mut log_dets = vec![0.0];
    let mut acc = 0.0;
    let steps = t_max.floor() as usize;
    for i in 1..=steps {
        let (d, next) = flow_derivative(params, &state, 1.0)?;
        let (w1, w2) = (d * v1, d * v2);
        let area = w1.cross(&w2).norm();
        if !(area > 0.0) {
            return Err(Error::DegenerateOrbit("center plane collapsed".into()));
        }
        acc += area.ln();
        let (n1, n2) = gram_schmidt2(w1, w2);
        v1 = n1;
        v2 = n2;
        state = next;
        times.push(i as f64);
        log_dets.push(acc);
    }
    let (rate, residual) = fit_rate(&times, &log_dets);
    Ok(SectionalExpansionReport {
        times,
        log_dets,
        rate,
        residual,
    })
}

/// Least-squares line through the origin's neighbourhood: slope and RMS
/// residual relative to the range of the data.
pub fn fit_rate(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rms = (t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (my + slope * (a - mt))).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let range = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let residual = if range > 0.0 { rms / range } else { 0.0 };
    (slope, residual)
}

/// Center direction inside `TΣ` at the last point of `history`, obtained by
/// pushing a generic vector forward along the Σ-orbit `history`.
pub fn center_direction_on_sigma(
    params: &GeometricLorenzParams,
    history: &[CrossSectionPoint],
) -> Result<Vec3> {
    let mut v = Vec3::new(0.57, -0.21, 0.79).normalize();
    for p in &history[..history.len().saturating_sub(1)] {
        v = (return_derivative(params, p)?.0 * v).normalize();
    }
    let last = history
        .last()
        .ok_or_else(|| Error::DegenerateOrbit("empty history".into()))?;
    Ok(project_to_sigma(params, last, &v).normalize())
}

/// Result of checking that tangent vectors lie in the center cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub holds: bool,
    pub kappa: f64,
    /// Worst ratio `|stable part| / |center part|` over the samples.
    pub worst_ratio: f64,
    pub samples: usize,
}

/// Checks `|v_s| ≤ κ |v_c|` for Σ-tangent vectors `(point, tangent, history)`,
/// where `history` is a past Σ-orbit ending at `point` used to find `E^c`.
/// On Σ, `E^s` is the vertical direction.
pub fn check_tangents_in_center_cone(
    params: &GeometricLorenzParams,
    samples: &[(Vec<CrossSectionPoint>, Vec3)],
    kappa: f64,
) -> Result<TangencyReport> {
    let mut worst: f64 = 0.0;
    for (history, tangent) in samples {
        let dc = center_direction_on_sigma(params, history)?;
        if dc.x.abs() < 1e-12 {
            return Err(Error::DegenerateOrbit(
                "center direction is vertical".into(),
            ));
        }
        let a = tangent.x / dc.x;
        let stable = tangent.y - a * dc.y;
        let ratio = stable.abs() / (dc * a).norm();
        worst = worst.max(ratio);
    }
    Ok(TangencyReport {
        holds: worst <= kappa,
        kappa,
        worst_ratio: worst,
        samples: samples.len(),
    })
}

/// Hyperbolicity summary emitted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub lambda_prime: f64,
    pub worst_domination_margin: f64,
    pub cone_margins: ConeMargins,
    pub sectional_rate: f64,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeMargins {
    pub unstable: f64,
    pub stable: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub sectional_fit: f64,
    pub finite_difference: f64,
    pub lambda_prime_doubling: f64,
}

/// Largest relative gap between the tangent flow and central differences
/// over a fixed grid of Σ-points and times that end inside the block, away
/// from region changes.
pub fn finite_difference_residual(params: &GeometricLorenzParams) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        for (j, t) in [0.3, 1.7, 4.1].into_iter().enumerate() {
            let x = 0.07 + 0.11 * i as f64;
            let s = State3::on_sigma(if i % 2 == 0 { x } else { -x }, -0.6 + 0.4 * j as f64);
            let plan = FlightPlan::new(params, &s, t);
            let near_event = plan
                .pieces
                .iter()
                .any(|pc| (pc.t_start - t).abs() < 1e-3 || (pc.t_end - t).abs() < 1e-3);
            if near_event || !plan.state_at(params, t).in_block() {
                continue;
            }
            for v in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.5, 0.8)] {
                let exact = tangent_flow(params, &s, &v, t)?;
                let fd = finite_difference_tangent(params, &s, &v, t, 1e-6)?;
                worst = worst.max((exact - fd).norm() / exact.norm().max(1.0));
            }
        }
    }
    Ok(worst)
}

/// Runs the splitting, cone, sectional and finite-difference checks along
/// the orbit of `start` over at least `returns` returns.
pub fn verify_hyperbolicity(
    params: &GeometricLorenzParams,
    start: &CrossSectionPoint,
    returns: usize,
) -> Result<HyperbolicityReport> {
    let needed = returns.max(100) + 2 * SPLITTING_BURN_IN + 1;
    let mut t_max = 3.0 * needed as f64;
    let orbit = loop {
        let o = crate::flow::sample_orbit(params, &start.to_state(), t_max, t_max)?;
        if o.crossings.len() >= needed {
            break o;
        }
        t_max *= 2.0;
    };
    let est = estimate_splitting(params, &orbit)?;
    let half = Trajectory {
        samples: Vec::new(),
        crossings: orbit.crossings[..orbit.crossings.len() / 2].to_vec(),
    };
    let doubling = match estimate_splitting(params, &half) {
        Ok(h) => (est.lambda_prime - h.lambda_prime).abs() / est.lambda_prime,
        Err(_) => f64::NAN,
    };
    let cone = |flavor| verify_cone_invariance(params, &ConeParams { kappa: 1.0, flavor }, &est, 1);
    let unstable = cone(ConeFlavor::Unstable)?;
    let stable = cone(ConeFlavor::Stable)?;
    let s0 = &est.samples[0];
    let plane = [Vec3::from(s0.e_c[0]), Vec3::from(s0.e_c[1])];
    let sectional = sectional_expansion_check(params, &s0.point.to_state(), plane, 1000.0)?;
    Ok(HyperbolicityReport {
        lambda_prime: est.lambda_prime,
        worst_domination_margin: est.worst_domination,
        cone_margins: ConeMargins {
            unstable: unstable.margin,
            stable: stable.margin,
        },
        sectional_rate: sectional.rate,
        residuals: Residuals {
            sectional_fit: sectional.residual,
            finite_difference: finite_difference_residual(params)?,
            lambda_prime_doubling: doubling,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{flow, sample_orbit};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> GeometricLorenzParams {
        GeometricLorenzParams::default()
    }

    fn long_orbit(t_max: f64) -> Trajectory {
        sample_orbit(&params(), &State3::on_sigma(0.4123, 0.1), t_max, 50.0).unwrap()
    }

    #[test]
    fn identity_at_time_zero() {
        let p = params();
        let v = Vec3::new(0.3, -1.2, 0.7);
        let s = State3::block(0.2, 0.1, 0.9);
        assert_eq!(tangent_flow(&p, &s, &v, 0.0).unwrap(), v);
    }

    #[test]
    fn block_expansion_along_x() {
        let p = params();
        let s = State3::block(0.1, 0.0, 1.0);
        let w = tangent_flow(&p, &s, &Vec3::x(), 1.0).unwrap();
        assert_relative_eq!(w.norm(), std::f64::consts::E, epsilon = 1e-14);
    }

    #[test]
    fn frame_stays_orthonormal() {
        let p = params();
        let mut frame = TangentFrame::standard(State3::on_sigma(0.31, 0.2));
        for _ in 0..50 {
            frame = frame.advance(&p, 0.7).unwrap().0;
            let gram = frame.vectors.transpose() * frame.vectors;
            assert!((gram - Matrix3::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn splitting_matches_vertical_foliation() {
        let p = params();
        let est = estimate_splitting(&p, &long_orbit(800.0)).unwrap();
        assert!(est.samples.len() >= 100);
        for s in &est.samples {
            let e = Vec3::from(s.e_s);
            assert!(1.0 - e.y.abs() < 1e-6, "e_s = {e:?}");
            let exact = p.b * s.point.x.abs().powf(p.lambda2 / p.lambda1);
            assert!((s.contraction - exact).abs() < 1e-6);
            assert!(s.domination < 1.0);
        }
        assert!(est.lambda_prime < 1.0);
        assert!(est.min_angle > 1e-3);
        assert!(est.c_est >= 1.0 && est.c_est.is_finite());
        assert!(est.stable_rate < 0.0);
    }

    #[test]
    fn splitting_needs_enough_returns() {
        let p = params();
        assert!(matches!(
            estimate_splitting(&p, &long_orbit(30.0)),
            Err(Error::DegenerateOrbit(_))
        ));
    }

    #[test]
    fn cone_invariance() {
        let p = params();
        let est = estimate_splitting(&p, &long_orbit(800.0)).unwrap();
        let unstable = verify_cone_invariance(
            &p,
            &ConeParams {
                kappa: 1.0,
                flavor: ConeFlavor::Unstable,
            },
            &est,
            1,
        )
        .unwrap();
        assert!(unstable.holds && unstable.margin < 1.0);
        let stable = verify_cone_invariance(
            &p,
            &ConeParams {
                kappa: 1.0,
                flavor: ConeFlavor::Stable,
            },
            &est,
            1,
        )
        .unwrap();
        assert!(stable.holds && stable.margin < 1.0);
        let whole = verify_cone_invariance(
            &p,
            &ConeParams {
                kappa: f64::INFINITY,
                flavor: ConeFlavor::Unstable,
            },
            &est,
            1,
        )
        .unwrap();
        assert!(!whole.holds);
    }

    #[test]
    fn sectional_rate_in_block() {
        let p = params();
        let start = State3::block(1e-9, 0.3, 1.0);
        let rep = sectional_expansion_check(&p, &start, [Vec3::x(), Vec3::z()], 20.0).unwrap();
        assert_eq!(rep.log_dets[0], 0.0);
        assert_relative_eq!(rep.rate, p.lambda1 - p.lambda3, epsilon = 1e-12);
        assert!(rep.residual < 1e-10);
    }

    #[test]
    fn sectional_rate_along_orbit() {
        let p = params();
        let est = estimate_splitting(&p, &long_orbit(800.0)).unwrap();
        let s = &est.samples[0];
        let plane = [Vec3::from(s.e_c[0]), Vec3::from(s.e_c[1])];
        let rep = sectional_expansion_check(&p, &s.point.to_state(), plane, 1000.0).unwrap();
        assert!(rep.rate > 0.0);
        assert!(rep.residual < 0.05, "residual {}", rep.residual);
    }

    fn regular_case() -> impl Strategy<Value = (f64, f64, f64)> {
        (
            prop_oneof![-0.95..-0.05f64, 0.05..0.95f64],
            -0.9..0.9f64,
            0.0..12.0f64,
        )
    }

    #[test]
    fn full_report_on_a_short_orbit() {
        let r = verify_hyperbolicity(&params(), &CrossSectionPoint::new(0.4123, 0.1), 300).unwrap();
        assert!(r.lambda_prime < 1.0);
        assert!(r.worst_domination_margin < 1.0);
        assert!(r.cone_margins.unstable < 1.0 && r.cone_margins.stable < 1.0);
        assert!(r.sectional_rate > 0.0);
        assert!(
            r.residuals.finite_difference > 0.0 && r.residuals.finite_difference < 1e-4,
            "{r:?}"
        );
        assert!(r.residuals.lambda_prime_doubling.is_finite());
    }

    proptest! {
        #[test]
        fn cocycle_law((x, y, t1) in regular_case(), t2 in 0.0..8.0f64) {
            let p = params();
            let s = State3::on_sigma(x, y);
            let (d1, mid) = flow_derivative(&p, &s, t1).unwrap();
            let (d2, _) = flow_derivative(&p, &mid, t2).unwrap();
            let (d, _) = flow_derivative(&p, &s, t1 + t2).unwrap();
            let err = (d2 * d1 - d).norm() / d.norm().max(1.0);
            prop_assert!(err < 1e-9, "err {}", err);
        }

        #[test]
        fn flow_direction_is_invariant((x, y, t) in regular_case()) {
            let p = params();
            let s = State3::on_sigma(x, y);
            let w = tangent_flow(&p, &s, &vector_field(&p, &s), t).unwrap();
            let end = flow(&p, &s, t).unwrap();
            let target = vector_field(&p, &end);
            prop_assert!((w - target).norm() < 1e-8 * target.norm().max(1.0));
        }

        #[test]
        fn finite_differences_agree((x, y, t) in regular_case(), vx in -1.0..1.0f64, vy in -1.0..1.0f64, vz in -1.0..1.0f64) {
            let p = params();
            let s = State3::on_sigma(x, y);
            let plan = FlightPlan::new(&p, &s, t);
            let near_event = plan.pieces.iter().any(|pc| (pc.t_start - t).abs() < 1e-3 || (pc.t_end - t).abs() < 1e-3);
            let end = plan.state_at(&p, t);
            prop_assume!(!near_event && end.in_block());
            let v = Vec3::new(vx, vy, vz);
            let exact = tangent_flow(&p, &s, &v, t).unwrap();
            let fd = finite_difference_tangent(&p, &s, &v, t, 1e-6).unwrap();
            prop_assert!((exact - fd).norm() < 1e-4 * exact.norm().max(1.0), "exact {:?} fd {:?}", exact, fd);
        }
    }
}
