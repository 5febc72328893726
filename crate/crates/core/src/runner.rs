//! Configuration-driven experiment runner: builds the problem a spec
//! describes, executes the requested formulation(s), always runs the
//! feasibility, Lipschitz, and regularity diagnostics, and writes fields
//! (CSV) and a report (JSON) into a run directory named by the spec hash.
//!
//! Reports are deterministic: identical spec + seed produce byte-identical
//! artifacts. Wall-clock time is kept on the in-memory report only and
//! never serialized.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::config::{Formulation, ProblemSpec, ZeroOrderSpec};
use crate::convex::{norm2, ConvexBody};
use crate::distance::{build_obstacles, gauge_distance_map};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{build_grid, GridDomain, NodeClass};
use crate::io::{export_scalar_field, export_vector_field, fmt_f64, render_field};
use crate::obstacle::{
    active_sets, kkt_residuals, psor_solve, KktReport, ObstacleProblem, ZeroOrderTerm,
};
use crate::operators::{max_lipschitz_excess, node_inner, GridOperators};
use crate::regularity::{bound_profile, estimate_a, estimate_b, BoundParams, RefinementRow};
use crate::splitting::{admm_solve, feasibility_profile_with, FeasibilityReport, GradientProblem};
use crate::stats::SolveStats;
use crate::vector::{
    assemble_vector, collinearity_max_angle, direct_vector_solve, invariance_check,
    k1_feasibility_with, random_orthogonal_fixing, reduce_to_scalar, scalar_energy_j1,
    vector_energy, VectorProblem,
};

/// Summary of one scalar solve in the report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScalarSummary {
    pub solver: &'static str,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub dual_residual: Option<f64>,
    /// Energy in the `1/2 |grad v|^2 + g(v)` convention.
    pub energy: f64,
    pub active_lower: Option<usize>,
    pub active_upper: Option<usize>,
    pub elastic: Option<usize>,
    pub kkt: Option<KktReport>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonSummary {
    pub sup_diff: f64,
    pub l2_diff: f64,
    pub energy_diff: f64,
    /// `5 h`.
    pub tolerance: f64,
    pub within: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LipschitzSummary {
    /// Max over edges of `|u(x) - u(y)| - k gauge(x - y)`.
    pub max_excess: f64,
    /// `5 h^2`.
    pub bound: f64,
    pub within: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RegularitySummary {
    pub params: BoundParams,
    pub max_ratio: f64,
    pub max_second_diff: f64,
    /// Exclusion band `2 A h` near the boundary.
    pub exclusion: f64,
    /// Refinement rows (one for plain runs, one per h for studies), with
    /// the max taken over the h-independent region `d > 0.1 diam`.
    pub rows: Vec<RefinementRow>,
    /// Max relative step change of the ratio across refinement rows; only
    /// meaningful for studies with at least two rows.
    pub max_step_change: Option<f64>,
    pub within: Option<bool>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyIdentitySummary {
    pub vector_energy: f64,
    pub eta_sq_times_scalar: f64,
    pub rel_err: f64,
    pub within: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct InvarianceSummary {
    pub samples: usize,
    pub max_rel_change: f64,
    pub within: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DirectVectorSummary {
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub sup_diff_vs_assembled: f64,
    /// `5 h`.
    pub tolerance: f64,
    pub within: bool,
    pub collinearity_max_angle: f64,
    /// `10 h`.
    pub collinearity_bound: f64,
    pub collinearity_within: bool,
    pub collinearity_nodes: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct VectorSummary {
    pub eta_norm: f64,
    pub reduced_k: f64,
    pub scalar: ScalarSummary,
    pub energy_identity: EnergyIdentitySummary,
    pub invariance: InvarianceSummary,
    pub k1_max_operator_norm: f64,
    /// `1 + 10 h`.
    pub k1_bound: f64,
    pub k1_within: bool,
    pub direct: Option<DirectVectorSummary>,
}

/// Full run report. Everything needed to reproduce the run is in the spec
/// echo; all numbers are finite.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveReport {
    pub spec: ProblemSpec,
    pub spec_hash: String,
    pub formulation: Formulation,
    pub obstacle: Option<ScalarSummary>,
    pub gradient: Option<ScalarSummary>,
    pub comparison: Option<ComparisonSummary>,
    pub vector: Option<VectorSummary>,
    pub feasibility: Option<FeasibilityReport>,
    /// `k + 10 admm_tol`, the contract for the splitting solver's output.
    pub feasibility_bound: Option<f64>,
    pub feasibility_within: Option<bool>,
    pub lipschitz: Option<LipschitzSummary>,
    pub regularity: Option<RegularitySummary>,
    pub passed: bool,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Result of [`run`]: the report plus the artifact directory.
pub struct RunOutput {
    pub report: SolveReport,
    pub dir: PathBuf,
}

/// First 16 hex digits of the SHA-256 of the canonical spec JSON.
pub fn spec_hash(spec: &ProblemSpec) -> String {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn zero_order_term(spec: &ProblemSpec) -> ZeroOrderTerm {
    let eta = spec.scalar_eta().unwrap_or(0.0);
    match spec.zero_order {
        None | Some(ZeroOrderSpec::Linear) => ZeroOrderTerm::Linear { eta },
        Some(ZeroOrderSpec::Quadratic { coeff }) => ZeroOrderTerm::PluggableConvex {
            value: Arc::new(move |v| coeff * v * v - eta * v),
            derivative: Arc::new(move |v| 2.0 * coeff * v - eta),
        },
    }
}

fn scalar_summary(
    solver: &'static str,
    stats: &SolveStats,
    sets: Option<(usize, usize, usize)>,
    kkt: Option<KktReport>,
) -> ScalarSummary {
    ScalarSummary {
        solver,
        iterations: stats.iterations,
        inner_iterations: stats.inner_iterations,
        converged: stats.converged,
        residual: stats.residual,
        dual_residual: stats.dual_residual,
        energy: stats.energy,
        active_lower: sets.map(|s| s.0),
        active_upper: sets.map(|s| s.1),
        elastic: sets.map(|s| s.2),
        kkt,
    }
}

fn export_masks(
    problem: &ObstacleProblem,
    sets: &crate::obstacle::ActiveSets,
    path: &Path,
) -> Result<()> {
    let grid = &problem.ops.grid;
    let mut codes = ScalarField::zeros(grid.clone());
    for id in 0..grid.node_count() {
        codes.values[id] = match grid.class(id) {
            NodeClass::Exterior => 4.0,
            NodeClass::Boundary => 3.0,
            NodeClass::Interior => {
                if sets.lower[id] {
                    1.0
                } else if sets.upper[id] {
                    2.0
                } else {
                    0.0
                }
            }
        };
    }
    export_scalar_field(&codes, path)
}

fn export_residual_trace(stats: &SolveStats, path: &Path) -> Result<()> {
    let mut out = String::from("iter,primal,dual\n");
    for (i, (p, d)) in stats.residual_trace.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, fmt_f64(*p), fmt_f64(*d)));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn l2_diff(ops: &Arc<GridOperators>, a: &ScalarField, b: &ScalarField) -> f64 {
    let mut diff = ScalarField::zeros(a.grid.clone());
    for id in 0..a.grid.node_count() {
        diff.values[id] = a.values[id] - b.values[id];
    }
    node_inner(ops, &diff, &diff).sqrt()
}

struct ScalarBuild {
    grid: Arc<GridDomain>,
    ops: Arc<GridOperators>,
    body: ConvexBody,
    polar: ConvexBody,
    distance: ScalarField,
    obstacle: ObstacleProblem,
    gradient: GradientProblem,
}

fn build_scalar(spec: &ProblemSpec) -> Result<ScalarBuild> {
    let grid = Arc::new(build_grid(spec.domain.clone(), spec.h)?);
    let ops = GridOperators::build(grid.clone());
    let body = spec.convex_body()?;
    let polar = body.polar()?;
    let distance = gauge_distance_map(&grid, &polar)?;
    let (lower, upper) = build_obstacles(&distance, spec.c, spec.k)?;
    let zero = zero_order_term(spec);
    let obstacle = ObstacleProblem::new(ops.clone(), lower, upper, spec.c, zero.clone())?;
    let gradient = GradientProblem::new(ops.clone(), body.clone(), spec.k, spec.c, zero)?;
    Ok(ScalarBuild { grid, ops, body, polar, distance, obstacle, gradient })
}

fn regularity_summary(
    u: &ScalarField,
    distance: &ScalarField,
    metric_body: &ConvexBody,
    k: f64,
    c: f64,
    eta: f64,
) -> Result<RegularitySummary> {
    let params = BoundParams {
        a_const: estimate_a(metric_body),
        b_const: estimate_b(metric_body, 2000)?,
        k,
        c,
        eta,
        dim: u.grid.dim,
    };
    let report = bound_profile(u, distance, params)?;
    let threshold = 0.1 * u.grid.shape.diameter();
    let row = RefinementRow {
        h: u.grid.h,
        max_second_diff: report.max_second_diff_in(distance, threshold),
        max_ratio: report.max_ratio_in(distance, threshold),
        h_inv_sq: 1.0 / (u.grid.h * u.grid.h),
    };
    Ok(RegularitySummary {
        params,
        max_ratio: report.max_ratio,
        max_second_diff: report.max_second_diff,
        exclusion: report.exclusion,
        rows: vec![row],
        max_step_change: None,
        within: None,
    })
}

/// Executes one spec and writes its artifacts under
/// `<out_dir>/run-<spec hash>/`. Returns the report; `report.passed` is the
/// conjunction of every contracted tolerance the run exercised.
pub fn run(spec: &ProblemSpec, out_dir: &Path, quiet: bool) -> Result<RunOutput> {
    let started = Instant::now();
    let hash = spec_hash(spec);
    let dir = out_dir.join(format!("run-{hash}"));
    std::fs::create_dir_all(&dir)?;

    let formulation = spec.effective_formulation();
    let mut report = SolveReport {
        spec: spec.clone(),
        spec_hash: hash,
        formulation,
        obstacle: None,
        gradient: None,
        comparison: None,
        vector: None,
        feasibility: None,
        feasibility_bound: None,
        feasibility_within: None,
        lipschitz: None,
        regularity: None,
        passed: true,
        wall_clock: Duration::ZERO,
    };

    match formulation {
        Formulation::Obstacle | Formulation::GradientConstrained | Formulation::Both => {
            run_scalar(spec, formulation, &dir, &mut report)?;
        }
        Formulation::VectorValued => {
            run_vector(spec, &dir, &mut report)?;
        }
    }

    report.wall_clock = started.elapsed();
    let json = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::write(dir.join("report.json"), json)?;

    if !quiet {
        print_summary(&report);
    }
    Ok(RunOutput { report, dir })
}

fn run_scalar(
    spec: &ProblemSpec,
    formulation: Formulation,
    dir: &Path,
    report: &mut SolveReport,
) -> Result<()> {
    let built = build_scalar(spec)?;
    export_scalar_field(&built.distance, &dir.join("distance.csv"))?;

    let mut u_obstacle = None;
    if matches!(formulation, Formulation::Obstacle | Formulation::Both) {
        let (u, stats) = psor_solve(&built.obstacle, spec.omega, spec.psor_tol, spec.psor_max_sweeps);
        let sets = active_sets(&u, &built.obstacle, spec.tol_act);
        let kkt = kkt_residuals(&u, &built.obstacle, &sets);
        export_scalar_field(&u, &dir.join("solution_obstacle.csv"))?;
        export_masks(&built.obstacle, &sets, &dir.join("masks.csv"))?;
        report.passed &= stats.converged;
        report.obstacle = Some(scalar_summary("psor", &stats, Some(sets.count()), Some(kkt)));
        u_obstacle = Some(u);
    }

    let mut u_gradient = None;
    if matches!(formulation, Formulation::GradientConstrained | Formulation::Both) {
        let (v, stats) = admm_solve(&built.gradient, spec.rho, spec.admm_tol, spec.admm_max_iters)?;
        export_scalar_field(&v, &dir.join("solution_gradient.csv"))?;
        export_residual_trace(&stats, &dir.join("admm_residuals.csv"))?;
        report.passed &= stats.converged;
        report.gradient = Some(scalar_summary("admm", &stats, None, None));
        u_gradient = Some(v);
    }

    if let (Some(uo), Some(ug)) = (&u_obstacle, &u_gradient) {
        let sup = uo.sup_diff(ug);
        let tolerance = 5.0 * spec.h;
        let energy_diff =
            (built.obstacle.energy(uo) - built.gradient.energy(ug)).abs();
        let comparison = ComparisonSummary {
            sup_diff: sup,
            l2_diff: l2_diff(&built.ops, uo, ug),
            energy_diff,
            tolerance,
            within: sup <= tolerance,
        };
        report.passed &= comparison.within;
        report.comparison = Some(comparison);
    }

    // Feasibility profile: contractual for the splitting solver's output,
    // informational for the obstacle solver's.
    let (feas_field, contractual) = match (&u_gradient, &u_obstacle) {
        (Some(v), _) => (v, true),
        (None, Some(u)) => (u, false),
        (None, None) => unreachable!("scalar run produces at least one solution"),
    };
    let profile = feasibility_profile_with(&built.ops, feas_field, &built.body, spec.k);
    let bound = spec.k + 10.0 * spec.admm_tol;
    if contractual {
        let ok = profile.max_gauge <= bound;
        report.passed &= ok;
        report.feasibility_within = Some(ok);
        report.feasibility_bound = Some(bound);
    }
    report.feasibility = Some(profile);

    // Neighbor gauge-Lipschitz bound for every solution produced.
    let mut excess = f64::NEG_INFINITY;
    for u in [&u_obstacle, &u_gradient].into_iter().flatten() {
        excess = excess.max(max_lipschitz_excess(&built.ops, u, &built.polar, spec.k));
    }
    let lip_bound = 5.0 * spec.h * spec.h;
    let lipschitz = LipschitzSummary {
        max_excess: excess,
        bound: lip_bound,
        within: excess <= lip_bound,
    };
    report.passed &= lipschitz.within;
    report.lipschitz = Some(lipschitz);

    // Regularity diagnostics on the obstacle solution when available.
    let reg_field = u_obstacle.as_ref().or(u_gradient.as_ref()).expect("solution exists");
    let eta_for_bound = spec.scalar_eta().unwrap_or(0.0);
    report.regularity = Some(regularity_summary(
        reg_field,
        &built.distance,
        &built.polar,
        spec.k,
        spec.c,
        eta_for_bound,
    )?);
    let ratio_field = bound_profile(
        reg_field,
        &built.distance,
        report.regularity.as_ref().unwrap().params,
    )?;
    export_scalar_field(&ratio_field.ratio_field, &dir.join("regularity_ratio.csv"))?;
    export_scalar_field(&ratio_field.second_diff_field, &dir.join("second_difference.csv"))?;
    Ok(())
}

fn run_vector(spec: &ProblemSpec, dir: &Path, report: &mut SolveReport) -> Result<()> {
    let eta: Vec<f64> = spec
        .vector_eta()
        .ok_or_else(|| Error::Config {
            field: "eta".into(),
            message: "vector formulation needs a vector source".into(),
        })?
        .to_vec();
    let grid = Arc::new(build_grid(spec.domain.clone(), spec.h)?);
    let ops = GridOperators::build(grid.clone());
    let body = spec.convex_body()?;
    let vp = VectorProblem::new(ops.clone(), body.clone(), eta.clone())?;
    let reduced = reduce_to_scalar(&vp)?;
    export_scalar_field(&reduced.distance, &dir.join("distance.csv"))?;

    let (u_scalar, stats) =
        psor_solve(&reduced.obstacle, spec.omega, spec.psor_tol, spec.psor_max_sweeps);
    let sets = active_sets(&u_scalar, &reduced.obstacle, spec.tol_act);
    let kkt = kkt_residuals(&u_scalar, &reduced.obstacle, &sets);
    export_scalar_field(&u_scalar, &dir.join("solution_scalar.csv"))?;
    report.passed &= stats.converged;
    let scalar = scalar_summary("psor", &stats, Some(sets.count()), Some(kkt));

    let assembled = assemble_vector(&u_scalar, &eta);
    export_vector_field(&assembled, &dir.join("solution_vector.csv"))?;

    let eta_norm = norm2(&eta);
    let i_h = vector_energy(&ops, &assembled, &eta);
    let j1 = scalar_energy_j1(&ops, &u_scalar);
    let rel_err = (i_h - eta_norm * eta_norm * j1).abs() / (1.0 + i_h.abs());
    let energy_identity = EnergyIdentitySummary {
        vector_energy: i_h,
        eta_sq_times_scalar: eta_norm * eta_norm * j1,
        rel_err,
        within: rel_err <= 1e-10,
    };
    report.passed &= energy_identity.within;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let mut max_rel_change = 0.0_f64;
    let samples = 20;
    let energy_scale = 1.0 + i_h.abs();
    for _ in 0..samples {
        let t = random_orthogonal_fixing(&eta, &mut rng);
        let diff = invariance_check(&ops, &assembled, &eta, &t)?;
        max_rel_change = max_rel_change.max(diff / energy_scale);
    }
    let invariance = InvarianceSummary {
        samples,
        max_rel_change,
        within: max_rel_change <= 1e-10,
    };
    report.passed &= invariance.within;

    let k1 = k1_feasibility_with(&ops, &assembled, &body)?;
    let k1_bound = 1.0 + 10.0 * spec.h;
    let k1_within = k1.max_operator_norm <= k1_bound;
    report.passed &= k1_within;

    let direct = match direct_vector_solve(&vp, spec.rho, spec.admm_tol, spec.admm_max_iters) {
        Ok((v_direct, dstats)) => {
            export_vector_field(&v_direct, &dir.join("solution_vector_direct.csv"))?;
            export_residual_trace(&dstats, &dir.join("admm_residuals.csv"))?;
            let sup = v_direct.sup_diff(&assembled);
            let tolerance = 5.0 * spec.h;
            let (angle, nodes) = collinearity_max_angle(&v_direct, &eta, 0.01);
            let cbound = 10.0 * spec.h;
            let summary = DirectVectorSummary {
                iterations: dstats.iterations,
                converged: dstats.converged,
                residual: dstats.residual,
                sup_diff_vs_assembled: sup,
                tolerance,
                within: sup <= tolerance,
                collinearity_max_angle: angle,
                collinearity_bound: cbound,
                collinearity_within: angle <= cbound,
                collinearity_nodes: nodes,
            };
            report.passed &=
                summary.converged && summary.within && summary.collinearity_within;
            Some(summary)
        }
        Err(Error::UnsupportedFamily(_)) => None,
        Err(e) => return Err(e),
    };

    report.vector = Some(VectorSummary {
        eta_norm,
        reduced_k: reduced.k,
        scalar,
        energy_identity,
        invariance,
        k1_max_operator_norm: k1.max_operator_norm,
        k1_bound,
        k1_within,
        direct,
    });

    // Lipschitz and regularity on the reduced scalar solution; its obstacle
    // metric is the gauge of K itself and the effective source is 1/2.
    let excess = max_lipschitz_excess(&ops, &u_scalar, &body, reduced.k);
    let lip_bound = 5.0 * spec.h * spec.h;
    let lipschitz = LipschitzSummary {
        max_excess: excess,
        bound: lip_bound,
        within: excess <= lip_bound,
    };
    report.passed &= lipschitz.within;
    report.lipschitz = Some(lipschitz);

    report.regularity = Some(regularity_summary(
        &u_scalar,
        &reduced.distance,
        &body,
        reduced.k,
        0.0,
        0.5,
    )?);
    Ok(())
}

/// Runs the obstacle formulation at every `h` in the list and tabulates the
/// regularity ratios over the fixed region `d > 0.1 diam`. The stability
/// verdict requires each refinement step to change the max ratio by at most
/// 15 percent.
pub fn refinement_study(
    spec: &ProblemSpec,
    h_list: &[f64],
    out_dir: &Path,
    quiet: bool,
) -> Result<(Vec<RefinementRow>, PathBuf, bool)> {
    if spec.scalar_eta().is_none() {
        return Err(Error::Config {
            field: "eta".into(),
            message: "refinement study runs the scalar obstacle formulation".into(),
        });
    }
    let hash = spec_hash(spec);
    let dir = out_dir.join(format!("run-{hash}-refinement"));
    std::fs::create_dir_all(&dir)?;

    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mut level = spec.clone();
        level.h = h;
        let built = build_scalar(&level)?;
        let (u, stats) =
            psor_solve(&built.obstacle, level.omega, level.psor_tol, level.psor_max_sweeps);
        if !stats.converged {
            return Err(Error::Precondition(format!(
                "obstacle solve did not converge at h = {h}"
            )));
        }
        let params = BoundParams {
            a_const: estimate_a(&built.polar),
            b_const: estimate_b(&built.polar, 2000)?,
            k: level.k,
            c: level.c,
            eta: level.scalar_eta().unwrap_or(0.0),
            dim: built.grid.dim,
        };
        let profile = bound_profile(&u, &built.distance, params)?;
        let threshold = 0.1 * built.grid.shape.diameter();
        let row = RefinementRow {
            h,
            max_second_diff: profile.max_second_diff_in(&built.distance, threshold),
            max_ratio: profile.max_ratio_in(&built.distance, threshold),
            h_inv_sq: 1.0 / (h * h),
        };
        if !quiet {
            println!(
                "h = {:10.7}  max |D2 u| = {:12.6}  max ratio = {:12.6}  1/h^2 = {:12.1}",
                row.h, row.max_second_diff, row.max_ratio, row.h_inv_sq
            );
        }
        rows.push(row);
    }

    let mut stable = true;
    let mut max_change = 0.0_f64;
    for pair in rows.windows(2) {
        let change = (pair[1].max_ratio - pair[0].max_ratio).abs() / pair[0].max_ratio.max(1e-300);
        max_change = max_change.max(change);
        stable &= change <= 0.15;
    }

    let mut table = String::from("h,max_second_diff,max_ratio,h_inv_sq\n");
    for row in &rows {
        table.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(row.h),
            fmt_f64(row.max_second_diff),
            fmt_f64(row.max_ratio),
            fmt_f64(row.h_inv_sq)
        ));
    }
    std::fs::write(dir.join("regularity_table.csv"), table)?;
    let study = serde_json::json!({
        "spec": spec,
        "rows": rows,
        "max_step_change": max_change,
        "stable_within_15_percent": stable,
    });
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&study)? + "\n",
    )?;

    if !quiet {
        println!(
            "refinement stability: max step change {:.3} -> {}",
            max_change,
            if stable { "PASS" } else { "FAIL" }
        );
    }
    Ok((rows, dir, stable))
}

/// Writes only the anisotropic distance field for a spec.
pub fn distance_only(spec: &ProblemSpec, out_dir: &Path, quiet: bool) -> Result<PathBuf> {
    let hash = spec_hash(spec);
    let dir = out_dir.join(format!("run-{hash}-distance"));
    std::fs::create_dir_all(&dir)?;
    let grid = Arc::new(build_grid(spec.domain.clone(), spec.h)?);
    let body = spec.convex_body()?;
    // Scalar problems measure distance in the polar gauge; vector problems
    // in the gauge of K itself.
    let metric = match spec.effective_formulation() {
        Formulation::VectorValued => body,
        _ => body.polar()?,
    };
    let d = gauge_distance_map(&grid, &metric)?;
    let path = dir.join("distance.csv");
    export_scalar_field(&d, &path)?;
    if !quiet {
        println!("distance field written to {}", path.display());
    }
    Ok(dir)
}

/// Renders the fields a determinism check needs without touching disk.
pub fn render_report_json(report: &SolveReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

/// Renders a scalar field exactly as `export_scalar_field` writes it.
pub fn render_scalar(field: &ScalarField) -> String {
    render_field(&field.grid, 1, &field.values)
}

fn print_summary(report: &SolveReport) {
    println!("run {} [{:?}]", report.spec_hash, report.formulation);
    if let Some(s) = &report.obstacle {
        println!(
            "  obstacle (psor): {} sweeps, residual {:.3e}, energy {:.9}{}",
            s.iterations,
            s.residual,
            s.energy,
            if s.converged { "" } else { " [NOT CONVERGED]" }
        );
    }
    if let Some(s) = &report.gradient {
        println!(
            "  gradient (splitting): {} iters, primal {:.3e}, energy {:.9}{}",
            s.iterations,
            s.residual,
            s.energy,
            if s.converged { "" } else { " [NOT CONVERGED]" }
        );
    }
    if let Some(c) = &report.comparison {
        println!(
            "  equivalence: sup diff {:.3e} (tol {:.3e}) -> {}",
            c.sup_diff,
            c.tolerance,
            if c.within { "ok" } else { "VIOLATED" }
        );
    }
    if let Some(v) = &report.vector {
        println!(
            "  vector: energy identity rel err {:.3e}, invariance {:.3e}, K1 max {:.6}",
            v.energy_identity.rel_err, v.invariance.max_rel_change, v.k1_max_operator_norm
        );
        if let Some(d) = &v.direct {
            println!(
                "  direct vs assembled: sup {:.3e} (tol {:.3e}), collinearity {:.3e} rad",
                d.sup_diff_vs_assembled, d.tolerance, d.collinearity_max_angle
            );
        }
    }
    if let Some(f) = &report.feasibility {
        println!("  feasibility: max gauge ratio {:.9}", f.max_ratio);
    }
    if let Some(l) = &report.lipschitz {
        println!(
            "  gauge-Lipschitz: max excess {:.3e} (bound {:.3e}) -> {}",
            l.max_excess,
            l.bound,
            if l.within { "ok" } else { "VIOLATED" }
        );
    }
    if let Some(r) = &report.regularity {
        println!(
            "  regularity: max ratio {:.6} (A = {:.4}, B = {:.4})",
            r.max_ratio, r.params.a_const, r.params.b_const
        );
    }
    println!("  wall clock: {:.3}s", report.wall_clock.as_secs_f64());
    println!("  verdict: {}", if report.passed { "PASS" } else { "FAIL" });
}
