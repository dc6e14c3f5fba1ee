use std::fs;
use std::path::{Path, PathBuf};

use qss_core::analysis::{diagnose, gradient_audit, nodal_domains, weak_residual, Component, AUDIT_CSV_HEADER};
use qss_core::fibering::{fiber_scan, find_tbar, log_grid, FIBER_CSV_HEADER};
use qss_core::io::{read_any, write_pgm, write_raw, write_text};
use qss_core::potential::{check_conditions, SampleSet};
use qss_core::solver::{initial_seed, minimize, multistart, TraceRow};
use qss_core::{EnergyBreakdown, Field, Grid, MEstimate, Pair, PotentialModel, SolveError, SolveReport, Termination};
use serde::{Deserialize, Serialize};

use crate::config::{FieldFormat, RunConfig};
use crate::error::CliError;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_file(path, text)
}

pub fn ensure_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn hypothesis(name: &str) -> &'static str {
    match name {
        "A1" => "A ∈ C¹(ℝᴺ, ℝ⁺) with 0 < A0 ≤ A(x) ≤ A∞ = lim A(x) < ∞",
        "A2" => "∇A(x)·x ∈ L^∞ and (α+β−2)A(x) − ∇A(x)·x ≥ 0",
        "A3" => "σ ↦ σ^{(N+2)/(N+α+β)} A(σ^{1/(N+α+β)} x) is concave",
        "A4" => "A is radial in (y1, y2)",
        _ => "",
    }
}

/// Runs the potential hypotheses; any failure is a validation error
/// naming the condition.
fn potential_checks(
    cfg: &RunConfig,
    grid: &Grid,
    model: &PotentialModel,
) -> (qss_core::ConditionReport, Option<CliError>) {
    let samples = SampleSet::for_grid(grid, model, cfg.potential_samples);
    let report = check_conditions(model, &cfg.params, &samples);
    let err = (!report.all_hold()).then(|| {
        let parts: Vec<String> = report
            .results()
            .iter()
            .filter(|c| !c.holds)
            .map(|c| {
                let mut line = format!("({}) {}", c.name, hypothesis(c.name));
                if !c.note.is_empty() {
                    line.push_str(&format!(": {}", c.note));
                } else if let Some(x) = &c.violation {
                    line.push_str(&format!(": fails at x = {x:?}, worst margin {:e}", c.worst_margin));
                }
                line
            })
            .collect();
        CliError::Validation(format!("hypothesis violated: {}", parts.join("; ")))
    });
    (report, err)
}

#[derive(Serialize)]
struct PotentialOutput<'a> {
    config: serde_json::Value,
    all_hold: bool,
    conditions: &'a qss_core::ConditionReport,
}

pub fn check_potential(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = cfg.validate()?;
    let model = cfg.potential_model()?;
    let (report, err) = potential_checks(cfg, &grid, &model);
    ensure_dir(out)?;
    write_json(
        &out.join("potential.json"),
        &PotentialOutput { config: cfg.to_json(), all_hold: report.all_hold(), conditions: &report },
    )?;
    for c in report.results() {
        println!("{} {} worst_margin {:e}", c.name, if c.holds { "holds" } else { "FAILS" }, c.worst_margin);
    }
    err.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct RunSummary {
    seed: [f64; 2],
    termination: Option<Termination>,
    converged: bool,
    m_estimate: Option<f64>,
    iterations: Option<usize>,
    pohozaev_relative: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct MultistartOutput {
    estimate: Option<MEstimate>,
    runs: Vec<RunSummary>,
}

#[derive(Serialize)]
struct Derived {
    constraint_variant: qss_core::ConstraintVariant,
    constraint_reported: f64,
    constraint_relative: f64,
    pohozaev_relative: f64,
    /// `‖∇I‖/‖(u,v)‖`; includes the multiplier of the constraint.
    weak_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFiles {
    pub u: String,
    pub v: String,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    config: serde_json::Value,
    report: &'a SolveReport,
    derived: Derived,
    #[serde(skip_serializing_if = "Option::is_none")]
    multistart: Option<MultistartOutput>,
    fields: FieldFiles,
}

fn classify(err: &SolveError) -> Option<CliError> {
    match err {
        SolveError::Config(_) | SolveError::Params(_) | SolveError::Symmetry(_) | SolveError::Field(_) => {
            Some(CliError::Validation(err.to_string()))
        }
        _ => None,
    }
}

fn report_of(r: &Result<SolveReport, SolveError>) -> Option<&SolveReport> {
    match r {
        Ok(rep) => Some(rep),
        Err(e) => e.report(),
    }
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = cfg.validate()?;
    let model = cfg.potential_model()?;
    if let (_, Some(err)) = potential_checks(cfg, &grid, &model) {
        return Err(err);
    }
    let seeds: Vec<[f64; 2]> = match &cfg.multistart {
        Some(s) => s.clone(),
        None => vec![[cfg.solver.seed_profile.width_u, cfg.solver.seed_profile.width_v]],
    };
    let results = if cfg.multistart.is_some() {
        let widths: Vec<(f64, f64)> = seeds.iter().map(|w| (w[0], w[1])).collect();
        multistart(&cfg.solver, &cfg.params, &model, &grid, &widths, cfg.workers)
    } else {
        vec![minimize(&cfg.solver, &cfg.params, &model, &grid)]
    };
    if let Some(err) = results.iter().filter_map(|r| r.as_ref().err()).find_map(classify) {
        return Err(err);
    }

    let summaries: Vec<RunSummary> = seeds
        .iter()
        .zip(&results)
        .map(|(seed, r)| {
            let rep = report_of(r);
            RunSummary {
                seed: *seed,
                termination: rep.map(|x| x.termination),
                converged: r.is_ok(),
                m_estimate: rep.map(|x| x.m_estimate),
                iterations: rep.map(|x| x.iterations),
                pohozaev_relative: rep.map(|x| x.pohozaev_relative()),
                error: r.as_ref().err().map(|e| e.to_string()),
            }
        })
        .collect();
    let converged: Vec<SolveReport> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let estimate = qss_core::estimate_m(&converged);

    // lowest converged energy, else the first run that produced anything
    let best = converged
        .iter()
        .min_by(|a, b| a.m_estimate.total_cmp(&b.m_estimate))
        .or_else(|| results.iter().find_map(report_of));
    let Some(best) = best else {
        let first = results.iter().find_map(|r| r.as_ref().err()).expect("no report means an error");
        return Err(CliError::Failed(format!("solve failed: {first}")));
    };

    ensure_dir(out)?;
    let ext = match cfg.output.field_format {
        FieldFormat::Text => "qss",
        FieldFormat::Raw => "bin",
    };
    let files = FieldFiles { u: format!("u.{ext}"), v: format!("v.{ext}") };
    for (name, field, file) in [("u", &best.final_pair.u, &files.u), ("v", &best.final_pair.v, &files.v)] {
        let path = out.join(file);
        match cfg.output.field_format {
            FieldFormat::Text => write_text(&path, field, name)?,
            FieldFormat::Raw => write_raw(&path, field, name)?,
        }
        write_pgm(&out.join(format!("{name}_mid.pgm")), field, cfg.output.pgm_threshold * field.max_abs())?;
    }
    write_file(&out.join("trace.csv"), best.trace_csv())?;
    let derived = Derived {
        constraint_variant: cfg.constraint_variant,
        constraint_reported: best.breakdown.constraint(&cfg.params, cfg.constraint_variant),
        constraint_relative: best.constraint_relative(),
        pohozaev_relative: best.pohozaev_relative(),
        weak_residual: weak_residual(&best.final_pair, &cfg.params, &model),
    };
    write_json(
        &out.join("report.json"),
        &SolveOutput {
            config: cfg.to_json(),
            report: best,
            derived,
            multistart: cfg.multistart.as_ref().map(|_| MultistartOutput { estimate, runs: summaries }),
            fields: files,
        },
    )?;
    println!(
        "termination {:?} iterations {} m {:e} |G|/scale {:e} P_rel {:e} nodal {} {}",
        best.termination,
        best.iterations,
        best.m_estimate,
        best.constraint_relative(),
        best.pohozaev_relative(),
        best.nodal_count_u,
        best.nodal_count_v
    );
    if let Some(e) = estimate.filter(|_| cfg.multistart.is_some()) {
        println!("multistart runs {} m {:e} relative spread {:e}", e.runs, e.m, e.relative_spread());
    }
    if best.converged {
        Ok(())
    } else {
        Err(CliError::Failed(format!("not converged: {:?} after {} iterations", best.termination, best.iterations)))
    }
}

pub fn fiber(cfg: &RunConfig, out: &Path, inputs: Option<(&Path, &Path)>) -> Result<(), CliError> {
    let grid = cfg.validate()?;
    let model = cfg.potential_model()?;
    let pair = match inputs {
        Some((u, v)) => {
            let (u, _) = read_any(u)?;
            let (v, _) = read_any(v)?;
            Pair::new(u, v).map_err(|e| CliError::Validation(e.to_string()))?
        }
        None => initial_seed(&cfg.solver, &grid, &cfg.params).map_err(|e| CliError::Failed(e.to_string()))?,
    };
    let fs_spec = cfg.fiber_scan;
    let ts = log_grid(fs_spec.t_min, fs_spec.t_max, fs_spec.count);
    let fail = |e: qss_core::FiberError| CliError::Failed(e.to_string());
    let rows = fiber_scan(&pair, &cfg.params, &model, &ts, cfg.constraint_variant).map_err(fail)?;
    let tbar = find_tbar(&pair, &cfg.params, &model).map_err(fail)?;
    let mut csv = String::from(FIBER_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    ensure_dir(out)?;
    write_file(&out.join("fiber.csv"), csv)?;
    println!("tbar {tbar:e}");
    Ok(())
}

#[derive(Serialize)]
struct NodalOutput {
    field: String,
    relative_threshold: f64,
    #[serde(flatten)]
    report: qss_core::NodalReport,
}

pub fn nodal_count(field: &Path, relative_threshold: f64, out: &Path) -> Result<(), CliError> {
    if !(relative_threshold >= 0.0) {
        return Err(CliError::Validation("threshold must be non-negative".into()));
    }
    let (f, header) = read_any(field)?;
    let mut report = nodal_domains(&f, relative_threshold * f.max_abs());
    report = match header.component.as_str() {
        "u" => report.with_component(Component::U),
        "v" => report.with_component(Component::V),
        _ => report,
    };
    let output = NodalOutput { field: field.display().to_string(), relative_threshold, report };
    ensure_dir(out)?;
    write_json(&out.join("nodal.json"), &output)?;
    println!("positive {} negative {} total {}", report.positive_domains, report.negative_domains, report.total);
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = cfg.validate()?;
    let model = cfg.potential_model()?;
    let spec = cfg.gradcheck;
    let rows = gradient_audit(&cfg.params, &model, &grid, spec.count, spec.seed);
    let mut csv = String::from(AUDIT_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    ensure_dir(out)?;
    write_file(&out.join("gradcheck.csv"), csv)?;
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    println!("pairs {} worst relative error {worst:e}", rows.len());
    if worst <= spec.tolerance {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient audit: worst relative error {worst:e} exceeds {:e}", spec.tolerance)))
    }
}

/// The serialized part of a [`SolveReport`].
#[derive(Deserialize)]
struct StoredReport {
    grid: Grid,
    s: usize,
    termination: Termination,
    converged: bool,
    m_estimate: f64,
    constraint_residual: f64,
    constraint_scale: f64,
    pohozaev_residual: f64,
    pohozaev_scale: f64,
    grad_norm: f64,
    equivariance_defect: f64,
    nodal_count_u: usize,
    nodal_count_v: usize,
    reduced_energy: f64,
    breakdown: EnergyBreakdown,
    iterations: usize,
    tol_dx: f64,
    trace: Vec<TraceRow>,
}

#[derive(Deserialize)]
struct StoredSolve {
    config: RunConfig,
    report: StoredReport,
    fields: FieldFiles,
}

fn read_field(base: &Path, name: &str, grid: &Grid) -> Result<Field, CliError> {
    let path: PathBuf = base.join(name);
    let (f, _) = read_any(&path)?;
    if f.grid() != grid {
        return Err(CliError::Validation(format!("{}: grid differs from the one in the report", path.display())));
    }
    Ok(f)
}

pub fn diagnose_report(report_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(report_path).map_err(|e| CliError::Io(format!("{}: {e}", report_path.display())))?;
    let stored: StoredSolve =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", report_path.display())))?;
    let cfg = stored.config;
    cfg.validate()?;
    let model = cfg.potential_model()?;
    let base = report_path.parent().unwrap_or(Path::new("."));
    let r = stored.report;
    let pair =
        Pair { u: read_field(base, &stored.fields.u, &r.grid)?, v: read_field(base, &stored.fields.v, &r.grid)? };
    let report = SolveReport {
        final_pair: pair,
        grid: r.grid,
        s: r.s,
        termination: r.termination,
        converged: r.converged,
        m_estimate: r.m_estimate,
        constraint_residual: r.constraint_residual,
        constraint_scale: r.constraint_scale,
        pohozaev_residual: r.pohozaev_residual,
        pohozaev_scale: r.pohozaev_scale,
        grad_norm: r.grad_norm,
        equivariance_defect: r.equivariance_defect,
        nodal_count_u: r.nodal_count_u,
        nodal_count_v: r.nodal_count_v,
        reduced_energy: r.reduced_energy,
        breakdown: r.breakdown,
        iterations: r.iterations,
        tol_dx: r.tol_dx,
        trace: r.trace,
    };
    let diagnosis = diagnose(&report, &cfg.params, &model).map_err(|e| match e {
        qss_core::analysis::DiagnoseError::NotConverged => CliError::Failed(e.to_string()),
        qss_core::analysis::DiagnoseError::Symmetry(_) => CliError::Validation(e.to_string()),
    })?;
    ensure_dir(out)?;
    write_json(&out.join("diagnosis.json"), &diagnosis)?;
    for c in &diagnosis.checks {
        println!("{} {}: {:e} (limit {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
    }
    if diagnosis.all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = diagnosis.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        Err(CliError::Failed(format!("diagnosis failed: {}", failed.join(", "))))
    }
}
