//! The obstruction experiment: for each gap time `T`, certify a gap, derive
//! the critical `eps`, and run the Lorenz gluing search.

use serde::{Deserialize, Serialize};

use super::lorenz::{
    DeviationParts, LorenzCandidate, LorenzGluingProblem, TargetChoice, GRID_STEP, SEGMENT_LENGTH,
};
use super::search::{search_gluing, Outcome, ShadowingResult};
use crate::error::{Error, Result};
use crate::flow::{GeometricLorenzParams, Side};
use crate::manifolds::{
    build_holonomy_chart_with_grid, find_gap_interval, project_separatrix, unstable_separatrix,
    HolonomyChart, DEFAULT_MU,
};
use crate::return_map::lowest_period_orbit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub t_sweep: Vec<f64>,
    /// `eps` as a fraction of `d_star / (2 L)`.
    pub eps_fractions: Vec<f64>,
    /// Loose `eps` as a multiple of `d_star`, run once per `T`.
    pub sanity_factor: Option<f64>,
    pub mu: f64,
    pub chart_grid: usize,
    /// Resolution of the `d_star` grid.
    pub h_gap: f64,
    /// Resolution of the candidate grid.
    pub h_search: f64,
    pub max_period: usize,
    /// Length of both prescribed segments.
    pub segment: f64,
    /// Other segment lengths tried at the first `T` and first fraction.
    pub segment_sensitivity: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t_sweep: vec![30.0, 50.0, 80.0],
            eps_fractions: vec![0.9],
            sanity_factor: Some(10.0),
            mu: DEFAULT_MU,
            chart_grid: 200,
            h_gap: 1e-4,
            h_search: GRID_STEP,
            max_period: 8,
            segment: SEGMENT_LENGTH,
            segment_sensitivity: vec![10.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub segment: f64,
    pub projected_points: usize,
    pub clearance: f64,
    pub d_star: f64,
    pub d_star_half_h: f64,
    pub eps: f64,
    /// `eps` below `d_star / (2 L)`.
    pub below_threshold: bool,
    pub target: TargetChoice,
    pub target_returns: usize,
    pub fine_step: f64,
    pub result: ShadowingResult<LorenzCandidate>,
    /// Deviation parts of the reported candidate.
    pub parts: DeviationParts,
    /// Witness deviation recomputed at half the sampling step.
    pub half_step_deviation: Option<f64>,
}

impl ObstructionRow {
    pub fn outcome_label(&self) -> &'static str {
        if self.result.is_witness() {
            "Witness"
        } else {
            "ExhaustedNoWitness"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub params: GeometricLorenzParams,
    pub config: ExperimentConfig,
    pub x_star: f64,
    pub y_star: f64,
    pub period_n: usize,
    pub l_const: f64,
    pub rows: Vec<ObstructionRow>,
    pub sanity_rows: Vec<ObstructionRow>,
    pub sensitivity_rows: Vec<ObstructionRow>,
    /// Every row below threshold failed to find a witness.
    pub obstruction_holds: bool,
    /// Some loose row found a witness.
    pub regime_change: bool,
    pub summary: String,
}

fn run_row(
    chart: &HolonomyChart,
    cfg: &ExperimentConfig,
    t: f64,
    segment: f64,
    eps_of: impl Fn(f64) -> f64,
) -> Result<ObstructionRow> {
    let sep = unstable_separatrix(&chart.params, Side::Plus, t + 20.0)?;
    let proj = project_separatrix(chart, &sep, t)?;
    let cert = find_gap_interval(&proj, chart, cfg.h_gap)?;
    let eps = eps_of(cert.d_star);
    let problem = LorenzGluingProblem::with_step(chart, &cert, eps, cfg.h_search, segment)?;
    let result = search_gluing(&problem, eps);
    let (candidate, half) = match &result.outcome {
        Outcome::Witness { point, .. } => (*point, Some(problem.verify(point))),
        Outcome::ExhaustedNoWitness { best_candidate, .. } => (*best_candidate, None),
    };
    Ok(ObstructionRow {
        t,
        segment: problem.segment,
        projected_points: cert.projected_points.len(),
        clearance: cert.clearance,
        d_star: cert.d_star,
        d_star_half_h: cert.d_star_half_h,
        eps,
        below_threshold: eps < cert.d_star / (2.0 * chart.l_const),
        target: problem.target,
        target_returns: problem.word.len(),
        fine_step: problem.fine_step(),
        parts: problem.parts(&candidate),
        result,
        half_step_deviation: half,
    })
}

/// Runs the sweep. Rows with `eps` below threshold must all fail; the
/// sanity rows use `eps = sanity_factor · d_star`.
pub fn run_obstruction_experiment(
    params: &GeometricLorenzParams,
    cfg: &ExperimentConfig,
) -> Result<ObstructionReport> {
    params.validate()?;
    if cfg.t_sweep.is_empty() {
        return Err(Error::InvalidInstance("empty T sweep".into()));
    }
    let orbit = lowest_period_orbit(params, cfg.max_period)?;
    let chart = build_holonomy_chart_with_grid(params, &orbit, cfg.mu, cfg.chart_grid)?;
    let l = chart.l_const;
    let mut rows = Vec::new();
    let mut sanity_rows = Vec::new();
    for &t in &cfg.t_sweep {
        for &f in &cfg.eps_fractions {
            rows.push(run_row(&chart, cfg, t, cfg.segment, |d| f * d / (2.0 * l))?);
        }
        if let Some(k) = cfg.sanity_factor {
            sanity_rows.push(run_row(&chart, cfg, t, cfg.segment, |d| k * d)?);
        }
    }
    let mut sensitivity_rows = Vec::new();
    if let Some(&f) = cfg.eps_fractions.first() {
        for &seg in &cfg.segment_sensitivity {
            sensitivity_rows.push(run_row(&chart, cfg, cfg.t_sweep[0], seg, |d| {
                f * d / (2.0 * l)
            })?);
        }
    }
    let obstruction_holds = rows
        .iter()
        .chain(&sensitivity_rows)
        .filter(|r| r.below_threshold)
        .all(|r| !r.result.is_witness() && r.result.deviation() >= r.eps);
    let regime_change = sanity_rows.iter().any(|r| r.result.is_witness());
    let lo = cfg.t_sweep.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg
        .t_sweep
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let summary = format!(
        "T swept over [{lo}, {hi}] with segments of length {}: {} below eps = d*/(2L) (grid h = {}); \
         loose eps {}",
        cfg.segment,
        if obstruction_holds {
            "no gluing orbit on the grid"
        } else {
            "a gluing orbit was found"
        },
        cfg.h_search,
        if regime_change {
            "admits a witness (regime change)"
        } else {
            "still admits no witness"
        }
    );
    Ok(ObstructionReport {
        params: *params,
        config: cfg.clone(),
        x_star: orbit.x_star,
        y_star: orbit.y_star,
        period_n: orbit.period_n,
        l_const: l,
        rows,
        sanity_rows,
        sensitivity_rows,
        obstruction_holds,
        regime_change,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_sweep_separates_the_regimes() {
        let cfg = ExperimentConfig {
            t_sweep: vec![30.0],
            chart_grid: 40,
            h_gap: 1e-3,
            h_search: 1e-2,
            segment_sensitivity: vec![10.0],
            ..ExperimentConfig::default()
        };
        let r = run_obstruction_experiment(&GeometricLorenzParams::default(), &cfg).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].below_threshold);
        assert!(r.obstruction_holds, "{:?}", r.rows[0].result);
        assert!(r.regime_change, "{:?}", r.sanity_rows[0].result);
        assert!(r.summary.contains("[30, 30]"));
        assert_eq!(r.sensitivity_rows[0].segment, 10.0);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let cfg = ExperimentConfig {
            t_sweep: vec![],
            ..ExperimentConfig::default()
        };
        assert!(run_obstruction_experiment(&GeometricLorenzParams::default(), &cfg).is_err());
    }
}
