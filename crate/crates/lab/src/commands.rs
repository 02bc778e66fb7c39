//! One function per subcommand. Each writes its artifacts and returns the
//! report together with a pass/fail check.

use std::path::Path;

use lorenz_core::flow::{sample_orbit, CrossSectionPoint, Side, State3};
use lorenz_core::hyperbolicity::{verify_hyperbolicity, HyperbolicityReport};
use lorenz_core::manifolds::{
    build_holonomy_chart_with_grid, find_gap_interval, foliation_report, project_separatrix,
    unstable_separatrix, FoliationReport, GapCertificate, HolonomyChart,
};
use lorenz_core::return_map::{
    catalog_csv, find_periodic, lowest_period_orbit, PeriodicPoint, ReturnMapParams,
};
use lorenz_core::specification::catmap::{CatCandidate, CatGluingProblem, CAT_GRID};
use lorenz_core::specification::mixing::{catmap_box_graph, lorenz_box_graph, rotation_box_graph};
use lorenz_core::specification::{
    run_obstruction_experiment, search_gluing, test_mixing, Anchor, MixingReport,
    ObstructionReport, ShadowingResult, SpecificationInstance, TorusCatSystem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::RegressionBaseline;
use crate::config::{ConfigError, RunConfig};
use crate::figures;
use crate::output::RunDir;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] lorenz_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 3,
            LabError::Core(
                lorenz_core::Error::InvalidParams(_) | lorenz_core::Error::InvalidInstance(_),
            ) => 3,
            LabError::CertificateFailed(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Config(_) => "config",
            LabError::Core(_) => "module",
            LabError::Io(_) => "io",
            LabError::Json(_) => "json",
            LabError::CertificateFailed(_) => "certificate_failed",
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} ({})",
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.detail
        )
    }

    /// Turns a failed check into the certificate-failed error.
    pub fn into_result(self) -> Result<Check> {
        if self.passed {
            Ok(self)
        } else {
            Err(LabError::CertificateFailed(self.line()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub start: [f64; 2],
    pub t_max: f64,
    pub dt: f64,
    pub samples: usize,
    pub crossings: usize,
    pub final_state: State3,
}

pub fn simulate(
    cfg: &RunConfig,
    dir: &RunDir,
    start: [f64; 2],
    t_max: f64,
    dt: f64,
) -> Result<SimulateSummary> {
    let traj = sample_orbit(
        &cfg.params,
        &State3::on_sigma(start[0], start[1]),
        t_max,
        dt,
    )?;
    dir.write_text("trajectory.csv", &traj.samples_csv())?;
    dir.write_text("crossings.csv", &traj.crossings_csv())?;
    let summary = SimulateSummary {
        start,
        t_max,
        dt,
        samples: traj.samples.len(),
        crossings: traj.crossings.len(),
        final_state: traj
            .samples
            .last()
            .map(|s| s.1)
            .unwrap_or_else(State3::origin),
    };
    dir.write_json("simulate.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCount {
    pub n: usize,
    pub orbits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapSummary {
    pub lowest: PeriodicPoint,
    pub unstable_multiplier: f64,
    pub stable_multiplier: f64,
    /// Number of periodic points of exact period `n` found per period.
    pub counts: Vec<PeriodCount>,
    pub alpha_samples: Vec<[f64; 2]>,
    /// `(x_i, x_{i+1})` along the lowest cycle.
    pub cycle: Vec<[f64; 2]>,
}

pub fn return_map(cfg: &RunConfig, dir: &RunDir, n_max: usize) -> Result<ReturnMapSummary> {
    let p = &cfg.params;
    let rp = ReturnMapParams::from(p);
    let lowest = lowest_period_orbit(p, n_max)?;
    let mut counts = Vec::new();
    let mut catalog = Vec::new();
    for n in 1..=n_max {
        let found = find_periodic(p, n)?;
        counts.push(PeriodCount {
            n,
            orbits: found.len(),
        });
        catalog.extend(found);
    }
    dir.write_text("periodic_orbits.csv", &catalog_csv(&catalog))?;
    let alpha_samples: Vec<[f64; 2]> = (0..=800)
        .map(|i| -1.0 + i as f64 / 400.0)
        .filter(|&x| x != 0.0)
        .map(|x| [x, rp.alpha_on(Side::of(x), x)])
        .collect();
    let pts = lowest.cycle(&rp);
    let cycle = (0..pts.len())
        .map(|i| [pts[i].x, pts[(i + 1) % pts.len()].x])
        .collect();
    let summary = ReturnMapSummary {
        unstable_multiplier: lowest.unstable_multiplier(&rp),
        stable_multiplier: lowest.stable_multiplier(&rp),
        lowest,
        counts,
        alpha_samples,
        cycle,
    };
    dir.write_json("return_map.json", &summary)?;
    let mut csv = String::from("x,alpha\n");
    for [x, a] in &summary.alpha_samples {
        csv.push_str(&format!("{x},{a}\n"));
    }
    dir.write_text("return_map.csv", &csv)?;
    dir.write_text(
        "return_map.svg",
        &figures::return_map_figure(&dir.read("return_map.json")?)?,
    )?;
    Ok(summary)
}

/// Start of the orbit used for the hyperbolicity checks.
pub const HYPERBOLIC_START: [f64; 2] = [0.4123, 0.1];

pub fn verify_hyperbolic(
    cfg: &RunConfig,
    dir: &RunDir,
    returns: usize,
) -> Result<(HyperbolicityReport, Check)> {
    let start = CrossSectionPoint::new(HYPERBOLIC_START[0], HYPERBOLIC_START[1]);
    let r = verify_hyperbolicity(&cfg.params, &start, returns)?;
    dir.write_json("hyperbolicity.json", &r)?;
    let passed = r.lambda_prime < 1.0
        && r.worst_domination_margin < 1.0
        && r.cone_margins.unstable < 1.0
        && r.sectional_rate > 0.0
        && r.residuals.sectional_fit < 0.05
        && r.residuals.finite_difference < 1e-4;
    let detail = format!(
        "lambda' {:.4}, domination {:.4}, cone {:.4}, sectional rate {:.4} (residual {:.4}), fd {:.2e}",
        r.lambda_prime,
        r.worst_domination_margin,
        r.cone_margins.unstable,
        r.sectional_rate,
        r.residuals.sectional_fit,
        r.residuals.finite_difference
    );
    Ok((r, Check::new("hyperbolicity", passed, detail)))
}

fn chart(cfg: &RunConfig) -> Result<(PeriodicPoint, HolonomyChart)> {
    let orbit = lowest_period_orbit(&cfg.params, 8)?;
    let chart = build_holonomy_chart_with_grid(&cfg.params, &orbit, cfg.mu, cfg.chart_grid)?;
    Ok((orbit, chart))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldsSummary {
    pub x_star: f64,
    pub y_star: f64,
    pub period_n: usize,
    pub mu: f64,
    pub mu_u: f64,
    pub l_const: f64,
    pub holonomy_lipschitz: f64,
    pub foliation: FoliationReport,
}

pub fn manifolds(cfg: &RunConfig, dir: &RunDir) -> Result<(ManifoldsSummary, Check)> {
    let (orbit, chart) = chart(cfg)?;
    let f = foliation_report(&chart, &orbit, cfg.injectivity_grid)?;
    let s = ManifoldsSummary {
        x_star: chart.x_star,
        y_star: chart.y_star,
        period_n: orbit.period_n,
        mu: chart.mu,
        mu_u: chart.mu_u,
        l_const: chart.l_const,
        holonomy_lipschitz: chart.holonomy_lipschitz,
        foliation: f,
    };
    dir.write_json("manifolds.json", &s)?;
    let f = &s.foliation;
    let passed = f.leaf_contraction_error < 1e-10
        && f.commutation_error < 1e-8
        && f.graph_transform_error < 1e-8
        && f.injectivity.injective
        && f.density.n_needed.is_some_and(|n| n <= 30)
        && f.tangency.holds
        && f.bowen.holds;
    let detail = format!(
        "leaf {:.1e}, commutation {:.1e}, injective {}, density N {:?}, tangency {}, bowen {}",
        f.leaf_contraction_error,
        f.commutation_error,
        f.injectivity.injective,
        f.density.n_needed,
        f.tangency.holds,
        f.bowen.holds
    );
    Ok((s, Check::new("foliation", passed, detail)))
}

pub fn certify_gap(cfg: &RunConfig, dir: &RunDir, t: f64) -> Result<(GapCertificate, Check)> {
    let (_, chart) = chart(cfg)?;
    let sep = unstable_separatrix(&cfg.params, Side::Plus, t + 20.0)?;
    let proj = project_separatrix(&chart, &sep, t)?;
    let cert = find_gap_interval(&proj, &chart, cfg.h_gap)?;
    dir.write_json("separatrix_projection.json", &proj)?;
    dir.write_json("gap_certificate.json", &cert)?;
    dir.write_text(
        "gap_certificate.svg",
        &figures::gap_figure(&dir.read("gap_certificate.json")?)?,
    )?;
    let max_arc = proj.arcs.iter().map(|a| a.diameter).fold(0.0, f64::max);
    let passed = max_arc < 1e-6
        && cert.clearance > 0.0
        && cert.d_star > 0.0
        && cert.refinement_change() < 0.1;
    let detail = format!(
        "T {t}: {} points, max arc {:.1e}, clearance {:.4}, d* {:.5}, refinement {:.2}%",
        cert.projected_points.len(),
        max_arc,
        cert.clearance,
        cert.d_star,
        100.0 * cert.refinement_change()
    );
    Ok((cert, Check::new("gap certificate", passed, detail)))
}

fn table(r: &ObstructionReport) -> (String, String) {
    let mut csv = String::from(
        "kind,T,segment,projected_points,clearance,d_star,eps,outcome,deviation,evaluated,pruned\n",
    );
    let mut txt = format!(
        "{}\n{:<8} {:>6} {:>7} {:>6} {:>10} {:>10} {:>10} {:>20} {:>10}\n",
        r.summary,
        "kind",
        "T",
        "segment",
        "points",
        "clearance",
        "d_star",
        "eps",
        "outcome",
        "deviation"
    );
    let groups = [
        ("main", &r.rows),
        ("sanity", &r.sanity_rows),
        ("segment", &r.sensitivity_rows),
    ];
    for (kind, rows) in groups {
        for row in rows.iter() {
            csv.push_str(&format!(
                "{kind},{},{},{},{},{},{},{},{},{},{}\n",
                row.t,
                row.segment,
                row.projected_points,
                row.clearance,
                row.d_star,
                row.eps,
                row.outcome_label(),
                row.result.deviation(),
                row.result.candidates_evaluated,
                row.result.candidates_pruned
            ));
            txt.push_str(&format!(
                "{:<8} {:>6} {:>7} {:>6} {:>10.5} {:>10.5} {:>10.5} {:>20} {:>10.5}\n",
                kind,
                row.t,
                row.segment,
                row.projected_points,
                row.clearance,
                row.d_star,
                row.eps,
                row.outcome_label(),
                row.result.deviation()
            ));
        }
    }
    (csv, txt)
}

pub fn test_spec(cfg: &RunConfig, dir: &RunDir) -> Result<(ObstructionReport, Check)> {
    let r = run_obstruction_experiment(&cfg.params, &cfg.experiment())?;
    dir.write_json("obstruction.json", &r)?;
    let (csv, txt) = table(&r);
    dir.write_text("obstruction.csv", &csv)?;
    dir.write_text("obstruction.txt", &txt)?;
    dir.write_text(
        "obstruction.svg",
        &figures::obstruction_figure(&dir.read("obstruction.json")?)?,
    )?;
    let check = Check::new(
        "lorenz specification fails",
        r.obstruction_holds,
        r.summary.clone(),
    );
    Ok((r, check))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance: SpecificationInstance,
    pub result: ShadowingResult<CatCandidate>,
}

/// Runs the cat-map search on a two-segment torus instance file.
pub fn test_instance(cfg: &RunConfig, dir: &RunDir, path: &Path) -> Result<InstanceReport> {
    let text = std::fs::read_to_string(path)?;
    let instance = SpecificationInstance::from_json(&text)?;
    instance.validate(&cfg.params)?;
    if !instance
        .segments
        .iter()
        .all(|s| matches!(s.anchor, Anchor::TorusPoint { .. }))
    {
        return Err(lorenz_core::Error::InvalidInstance(
            "instance files take torus segments; flow instances are built from the gap certificate by test-spec".into(),
        )
        .into());
    }
    let problem = CatGluingProblem::from_instance(TorusCatSystem::default(), &instance)?;
    let result = search_gluing(&problem, instance.eps);
    let r = InstanceReport { instance, result };
    dir.write_json("spec_instance.json", &r)?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    pub lorenz_intervals: usize,
    pub lorenz: MixingReport,
    pub catmap_boxes: usize,
    pub catmap: MixingReport,
    pub rotation: MixingReport,
}

pub fn mixing(cfg: &RunConfig, dir: &RunDir) -> Result<(MixingSummary, Check)> {
    let s = MixingSummary {
        lorenz_intervals: cfg.mixing_intervals,
        lorenz: test_mixing(
            &lorenz_box_graph(&cfg.params, cfg.mixing_intervals),
            cfg.mixing_n_max,
        )?,
        catmap_boxes: cfg.cat_boxes,
        catmap: test_mixing(
            &catmap_box_graph(&TorusCatSystem::default(), cfg.cat_boxes),
            cfg.mixing_n_max,
        )?,
        rotation: test_mixing(&rotation_box_graph(0.25, 64), cfg.mixing_n_max)?,
    };
    dir.write_json("mixing.json", &s)?;
    let passed = s.lorenz.mixing && s.catmap.mixing && !s.rotation.mixing;
    let detail = format!(
        "lorenz {} (time {:?}), cat map {}, rotation {}",
        s.lorenz.mixing, s.lorenz.mixing_time, s.catmap.mixing, s.rotation.mixing
    );
    Ok((s, Check::new("mixing", passed, detail)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatInstanceResult {
    pub p1: [i64; 2],
    pub p2: [i64; 2],
    pub witness: bool,
    pub deviation: f64,
    pub candidates_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatControlReport {
    pub seed: u64,
    pub eps: f64,
    pub gap: usize,
    pub segment: usize,
    pub instances: Vec<CatInstanceResult>,
    pub witnesses: usize,
}

pub fn control_catmap(cfg: &RunConfig, dir: &RunDir) -> Result<(CatControlReport, Check)> {
    let sys = TorusCatSystem::default();
    let gap = sys.default_gap(cfg.cat_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::new();
    for _ in 0..cfg.cat_instances {
        let p1 = [rng.gen_range(0..CAT_GRID), rng.gen_range(0..CAT_GRID)];
        let p2 = [rng.gen_range(0..CAT_GRID), rng.gen_range(0..CAT_GRID)];
        let problem = CatGluingProblem::new(
            sys,
            p1,
            p2,
            cfg.cat_segment,
            cfg.cat_segment,
            gap,
            cfg.cat_eps,
        );
        let r = search_gluing(&problem, cfg.cat_eps);
        instances.push(CatInstanceResult {
            p1,
            p2,
            witness: r.is_witness(),
            deviation: r.deviation(),
            candidates_evaluated: r.candidates_evaluated,
        });
    }
    let witnesses = instances.iter().filter(|i| i.witness).count();
    let r = CatControlReport {
        seed: cfg.seed,
        eps: cfg.cat_eps,
        gap,
        segment: cfg.cat_segment,
        instances,
        witnesses,
    };
    dir.write_json("catmap_control.json", &r)?;
    let check = Check::new(
        "cat map specification holds",
        witnesses == cfg.cat_instances,
        format!(
            "{witnesses}/{} witnesses at eps {}, gap {gap}",
            cfg.cat_instances, cfg.cat_eps
        ),
    );
    Ok((r, check))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub mixing: bool,
    pub specification_lorenz: String,
    pub specification_catmap: String,
    pub regime_change: bool,
    pub sweep: String,
    pub headline_holds: bool,
    pub checks: Vec<Check>,
    pub regressions: Vec<String>,
}

fn baseline(
    cfg: &RunConfig,
    h: &HyperbolicityReport,
    gap: &GapCertificate,
    ob: &ObstructionReport,
) -> RegressionBaseline {
    let mut b = RegressionBaseline::new(cfg.hash());
    b.push("lambda_prime", h.lambda_prime, 1e-6);
    b.push(
        format!("gap_T{}.clearance", gap.t_used),
        gap.clearance,
        1e-6,
    );
    b.push(format!("gap_T{}.d_star", gap.t_used), gap.d_star, 1e-6);
    b.push(
        format!("gap_T{}.projected_points", gap.t_used),
        gap.projected_points.len() as f64,
        0.0,
    );
    for row in &ob.rows {
        b.push(format!("sweep_T{}.d_star", row.t), row.d_star, 1e-6);
        b.push(
            format!("sweep_T{}.projected_points", row.t),
            row.projected_points as f64,
            0.0,
        );
        b.push(
            format!("sweep_T{}.best_deviation", row.t),
            row.result.deviation(),
            1e-6,
        );
    }
    b
}

/// Runs every pipeline, writes `summary.json` and `baseline.json`, and
/// compares against `reference` when given.
pub fn reproduce_all(cfg: &RunConfig, dir: &RunDir, reference: Option<&Path>) -> Result<Summary> {
    return_map(cfg, dir, 8)?;
    let (hyp, c1) = verify_hyperbolic(cfg, dir, cfg.hyperbolic_returns)?;
    let (_, c2) = manifolds(cfg, dir)?;
    let (gap, c3) = certify_gap(cfg, dir, cfg.gap_t)?;
    let (ob, c4) = test_spec(cfg, dir)?;
    let (mix, c5) = mixing(cfg, dir)?;
    let (cat, c6) = control_catmap(cfg, dir)?;
    let base = baseline(cfg, &hyp, &gap, &ob);
    dir.write_json("baseline.json", &base)?;
    let regressions = match reference {
        Some(p) => {
            let old: RegressionBaseline = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            old.compare(&base)
        }
        None => Vec::new(),
    };
    let lo = cfg.t_sweep.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg
        .t_sweep
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let catmap_pass = cat.witnesses == cat.instances.len();
    let summary = Summary {
        config_hash: cfg.hash(),
        mixing: mix.lorenz.mixing,
        specification_lorenz: if ob.obstruction_holds { "fail" } else { "pass" }.into(),
        specification_catmap: if catmap_pass { "pass" } else { "fail" }.into(),
        regime_change: ob.regime_change,
        sweep: format!("T in [{lo}, {hi}]; no claim beyond this range"),
        headline_holds: mix.lorenz.mixing && ob.obstruction_holds && catmap_pass,
        checks: vec![c1, c2, c3, c4, c5, c6],
        regressions,
    };
    dir.write_json("summary.json", &summary)?;
    Ok(summary)
}
