//! Command-line surface: integrate, classify, check oracles, locate the completeness boundary, dump series.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    boundary_config, classification_config, classify_grid, cone_linearization, find_boundary_along, integrate_closure,
    poly_fixed_points, BoundaryAxis, IntegratorConfig,
};
use crate::closure::{appendix_oracle, appendix_steady_oracle, build_series, compare_with_table, DEFAULT_ORDER};
use crate::domain::{
    constraint_residual, to_poly, to_scale_invariant, ClosureParams, EndClassification, PhasePoint, Sample,
    SymmetryGroup, Termination,
};
use crate::error::{Error, Result};
use crate::oracles::{oracle_residual, OracleCurve};
use crate::precise::{integrate_closure_extended, integrate_closure_precise, TaylorSettings};
use crate::systems::rhs_su3;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// Finished without incident.
    Clean = 0,
    /// Invalid input or failed run.
    Usage = 1,
    /// Integration ended at a blow-up event.
    BlowUp = 2,
    /// At least one oracle check failed.
    OracleFailure = 3,
}

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Comma-separated values with a header row.
    #[default]
    Csv,
    /// One JSON document.
    Json,
}

/// Arithmetic used by `integrate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    /// Dormand-Prince first; the 320-bit Taylor method if it ends without a diagnosed event.
    #[default]
    Auto,
    /// Adaptive Dormand-Prince in `f64` with events.
    Double,
    /// Taylor method in double-double arithmetic.
    DoubleDouble,
    /// Taylor method in 320-bit arithmetic.
    Extended,
}

/// Symmetry group selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroupArg {
    /// SU(3) with two-parameter closure data.
    #[default]
    Su3,
    /// Sp(2) with `c = 0`.
    Sp2,
}

/// Run parameters shared by the subcommands; every field is optional so a config file and flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dilation constant.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Singular-orbit size (fixed value for a c-axis boundary search).
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Torsion parameter (fixed value for a b-axis boundary search).
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Symmetry group.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupArg>,
    /// Series truncation degree.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Seed time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    /// Final time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<f64>,
    /// Relative tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    /// Absolute tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    /// Largest step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    /// Uniform output spacing.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Arithmetic for `integrate`; the Taylor modes write a uniform grid.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    /// Output encoding.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Output path; standard output when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Grid values of `b`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_values: Option<Vec<f64>>,
    /// Grid values of `c`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_values: Option<Vec<f64>>,
    /// Lower end of a `b` bracket.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blo: Option<f64>,
    /// Upper end of a `b` bracket.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bhi: Option<f64>,
    /// Lower end of a `c` bracket.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clo: Option<f64>,
    /// Upper end of a `c` bracket.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    /// Bracket width at which a boundary search stops.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Structured report instead of text.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<bool>,
    /// Perturb one series coefficient before the comparisons (test mode).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<bool>,
}

impl RunConfig {
    /// Reads a JSON config document.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: &RunConfig) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        if let (Some(dst), Value::Object(src)) = (base.as_object_mut(), serde_json::to_value(top)?) {
            dst.extend(src);
        }
        Ok(serde_json::from_value(base)?)
    }

    fn params(&self) -> Result<ClosureParams> {
        let lambda = self.lambda.unwrap_or(0.0);
        let b = self.b.ok_or_else(|| Error::InvalidConfig("--b is required".into()))?;
        match self.group.unwrap_or_default() {
            GroupArg::Su3 => ClosureParams::su3(lambda, b, self.c.unwrap_or(0.0)),
            GroupArg::Sp2 => ClosureParams::new(lambda, b, self.c.unwrap_or(0.0), SymmetryGroup::Sp2),
        }
    }

    fn integrator(&self, base: IntegratorConfig) -> IntegratorConfig {
        IntegratorConfig {
            rtol: self.rtol.unwrap_or(base.rtol),
            atol: self.atol.unwrap_or(base.atol),
            max_step: self.max_step.unwrap_or(base.max_step),
            t_max: self.tmax.unwrap_or(base.t_max),
            output_dt: self.dt.or(base.output_dt),
            ..base
        }
    }
}

/// Top-level command line.
#[derive(Debug, Parser)]
#[command(name = "g2soliton", version, about = "Cohomogeneity-one G2 Laplacian soliton laboratory")]
pub struct Cli {
    /// JSON config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a smoothly-closing solution and write its samples.
    Integrate(RunConfig),
    /// Classify steady solutions on a (b, c) grid.
    Classify(RunConfig),
    /// Check the closed-form oracles, series coefficients and spectra.
    OracleCheck(RunConfig),
    /// Locate the completeness boundary in b (given --c) or in c (given --b).
    Boundary(RunConfig),
    /// Dump the closure series as JSON.
    Series(RunConfig),
}

/// Column names of trajectory output, in order.
pub const COLUMNS: [&str; 19] = [
    "t",
    "f1",
    "f2",
    "f3",
    "tau1",
    "tau2",
    "tau3",
    "u",
    "g",
    "F1",
    "F2",
    "F3",
    "Lambda",
    "D",
    "normTauSq",
    "scalR",
    "clResidual",
    "constraintResidual",
    "quality",
];

/// Rows whose constraint residual exceeds this are flagged in the quality column.
pub const QUALITY_THRESHOLD: f64 = 1e-6;

fn sample_row(s: &Sample) -> (Vec<f64>, &'static str) {
    let f = s.point.f();
    let tau = s.point.tau();
    let big_f = to_poly(&s.point).big_f;
    let g = to_scale_invariant(&s.point).g;
    let cr = constraint_residual(&s.point);
    let o = &s.obs;
    let vals = vec![
        s.t,
        f[0],
        f[1],
        f[2],
        tau[0],
        tau[1],
        tau[2],
        o.u,
        g,
        big_f[0],
        big_f[1],
        big_f[2],
        o.lambda_ratio,
        o.d_ratio,
        o.norm_tau_sq,
        o.scalar_curvature,
        o.cl_residual,
        cr,
    ];
    let quality = if cr.abs() <= QUALITY_THRESHOLD { "ok" } else { "constraint" };
    (vals, quality)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes samples as CSV with the fixed header.
pub fn write_csv<W: Write>(samples: &[Sample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for s in samples {
        let (vals, q) = sample_row(s);
        let mut rec: Vec<String> = vals.into_iter().map(fmt_f64).collect();
        rec.push(q.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Column-oriented JSON with the same columns as the CSV.
pub fn samples_json(samples: &[Sample]) -> Value {
    let rows: Vec<(Vec<f64>, &str)> = samples.iter().map(sample_row).collect();
    let mut cols = serde_json::Map::new();
    for (k, name) in COLUMNS.iter().enumerate().take(COLUMNS.len() - 1) {
        cols.insert((*name).into(), rows.iter().map(|r| json!(r.0[k])).collect());
    }
    cols.insert("quality".into(), rows.iter().map(|r| json!(r.1)).collect());
    Value::Object(cols)
}

fn emit(cfg: &RunConfig, text: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text)?,
    }
    Ok(())
}

fn precise_samples(params: &ClosureParams, cfg: &RunConfig, precision: Precision) -> Result<Vec<Sample>> {
    let t0 = cfg.t0.unwrap_or(0.1 * params.b().min(1.0));
    let t_max = cfg.tmax.unwrap_or(20.0);
    let dt = cfg.dt.unwrap_or(0.1);
    if !(dt > 0.0) || !(t_max > t0) {
        return Err(Error::InvalidConfig("need dt > 0 and tmax > t0".into()));
    }
    let mut times: Vec<f64> = (1..).map(|k| t0 + k as f64 * dt).take_while(|t| *t < t_max * (1.0 - 1e-12)).collect();
    times.push(t_max);
    let base = match precision {
        Precision::Extended => TaylorSettings::extended(),
        _ => TaylorSettings::default(),
    };
    let settings = TaylorSettings { series_order: cfg.order.unwrap_or(base.series_order), ..base };
    let pts = match precision {
        Precision::Extended => integrate_closure_extended(params, t0, &times, &settings)?,
        _ => integrate_closure_precise(params, t0, &times, &settings)?,
    };
    let seed = crate::closure::eval_series_in::<f64>(params, settings.series_order, t0)?;
    let mut all = vec![(t0, PhasePoint::new(seed.0, seed.1)?)];
    all.extend(pts);
    Ok(all
        .into_iter()
        .map(|(t, p)| {
            let dydt = rhs_su3(&p, params.lambda()).state_derivative(&p);
            Sample { t, point: p, dydt, obs: crate::domain::observables(&p, params.lambda()) }
        })
        .collect())
}

/// Integrates and writes the trajectory; blow-up yields exit status 2 after writing.
pub fn cmd_integrate(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<ExitStatus> {
    let params = cfg.params()?;
    let precision = cfg.precision.unwrap_or_default();
    let (samples, termination, events) = match precision {
        Precision::DoubleDouble | Precision::Extended => {
            (precise_samples(&params, cfg, precision)?, Termination::ReachedTmax, Vec::new())
        }
        Precision::Double | Precision::Auto => {
            let base = IntegratorConfig { t_max: 20.0, stop_on_exponential_end: false, ..IntegratorConfig::default() };
            let icfg = cfg.integrator(base);
            let order = cfg.order.unwrap_or(DEFAULT_ORDER);
            let traj = integrate_closure(&params, order, cfg.t0, &icfg)?;
            let undiagnosed =
                matches!(traj.termination, Termination::StepCollapse { .. } | Termination::InvalidState { .. });
            if precision == Precision::Auto && undiagnosed {
                writeln!(
                    stderr,
                    "double precision ended early ({:?}); retrying with 320-bit Taylor steps",
                    traj.termination
                )?;
                let retry = RunConfig { tmax: Some(icfg.t_max), ..cfg.clone() };
                match precise_samples(&params, &retry, Precision::Extended) {
                    Ok(samples) => (samples, Termination::ReachedTmax, Vec::new()),
                    Err(e) => {
                        writeln!(stderr, "extended retry failed: {e}")?;
                        (traj.samples, traj.termination, traj.events)
                    }
                }
            } else {
                (traj.samples, traj.termination, traj.events)
            }
        }
    };
    let mut buf = Vec::new();
    match cfg.format.unwrap_or_default() {
        Format::Csv => write_csv(&samples, &mut buf)?,
        Format::Json => {
            let doc = json!({
                "params": params,
                "termination": termination,
                "events": events,
                "columns": samples_json(&samples),
            });
            serde_json::to_writer_pretty(&mut buf, &doc)?;
            buf.push(b'\n');
        }
    }
    emit(cfg, &buf, stdout)?;
    let last_t = samples.last().map_or(f64::NAN, |s| s.t);
    Ok(match termination {
        Termination::BlowUp { t } => {
            writeln!(stderr, "blow-up: f3 collapsed at t = {t:.12}")?;
            ExitStatus::BlowUp
        }
        Termination::StepCollapse { t, h } => {
            writeln!(stderr, "undetermined: step-size collapse at t = {t} (h = {h:e})")?;
            ExitStatus::Usage
        }
        Termination::InvalidState { t, reason } => {
            writeln!(stderr, "invalid state at t = {t}: {reason}")?;
            ExitStatus::Usage
        }
        _ => {
            writeln!(stderr, "finished at t = {last_t}")?;
            ExitStatus::Clean
        }
    })
}

/// One row of a classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    /// Singular-orbit size.
    pub b: f64,
    /// Torsion parameter.
    pub c: f64,
    /// Numerical verdict tag.
    pub numerical: String,
    /// Analytic verdict tag.
    pub analytic: String,
    /// Tags agree.
    pub agree: bool,
    /// Fitted decay rate for asymptotically conical ends.
    pub rate: Option<f64>,
    /// Blow-up time for incomplete ends.
    pub t_blowup: Option<f64>,
}

/// Classifies every grid point numerically and analytically.
pub fn classify_table(b_values: &[f64], c_values: &[f64], icfg: &IntegratorConfig) -> Result<Vec<ClassificationRow>> {
    let points: Vec<(f64, f64)> = c_values.iter().flat_map(|&c| b_values.iter().map(move |&b| (b, c))).collect();
    if points.is_empty() {
        return Err(Error::InvalidConfig("classification grid is empty".into()));
    }
    let results = classify_grid(&points, icfg);
    points
        .iter()
        .zip(results)
        .map(|(&(b, c), r)| {
            let (num, ana) = r?;
            let rate = match num {
                EndClassification::CompleteAcTorsionFree { rate } => rate,
                _ => None,
            };
            let t_blowup = match num {
                EndClassification::Incomplete { t_blowup } => Some(t_blowup),
                _ => None,
            };
            Ok(ClassificationRow {
                b,
                c,
                numerical: num.tag().into(),
                analytic: ana.tag().into(),
                agree: num.tag() == ana.tag(),
                rate,
                t_blowup,
            })
        })
        .collect()
}

/// Writes the classification table.
pub fn cmd_classify(cfg: &RunConfig, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> Result<ExitStatus> {
    let bs = cfg.b_values.clone().or(cfg.b.map(|b| vec![b])).unwrap_or_default();
    let cs = cfg.c_values.clone().or(cfg.c.map(|c| vec![c])).unwrap_or_default();
    let rows = classify_table(&bs, &cs, &cfg.integrator(classification_config()))?;
    let mut buf = Vec::new();
    match cfg.format.unwrap_or_default() {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["b", "c", "numerical", "analytic", "agree", "rate", "tBlowup"])?;
            for r in &rows {
                w.write_record([
                    fmt_f64(r.b),
                    fmt_f64(r.c),
                    r.numerical.clone(),
                    r.analytic.clone(),
                    r.agree.to_string(),
                    r.rate.map(fmt_f64).unwrap_or_default(),
                    r.t_blowup.map(fmt_f64).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &rows)?;
            buf.push(b'\n');
        }
    }
    emit(cfg, &buf, stdout)?;
    Ok(ExitStatus::Clean)
}

/// Outcome of one oracle-check item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    /// Item name.
    pub name: String,
    /// Pass flag.
    pub passed: bool,
    /// Measured worst error.
    pub value: f64,
    /// Threshold.
    pub tolerance: f64,
}

/// Parameter sets for the series-versus-closed-form comparison.
pub fn comparison_params() -> Vec<(f64, f64, f64)> {
    let lambdas = [-1.5, -0.35, 0.0, 0.8, 2.25];
    let bs = [0.6, 1.3];
    let cs = [0.0, 0.9];
    lambdas.iter().flat_map(|&l| bs.into_iter().flat_map(move |b| cs.into_iter().map(move |c| (l, b, c)))).collect()
}

/// Runs every oracle check; `inject_fault` perturbs one series coefficient first.
pub fn oracle_checks(inject_fault: bool) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    let mut push = |name: &str, value: f64, tolerance: f64| {
        items.push(CheckItem { name: name.into(), passed: value <= tolerance, value, tolerance });
    };
    let ts: Vec<f64> = (0..=199).map(|k| 0.1 + k as f64 * 0.1).collect();
    let curves = [
        ("explicit-steady", OracleCurve::ExplicitSteady),
        ("explicit-shrinker-b0.5", OracleCurve::ExplicitShrinker { b: 0.5 }),
        ("explicit-shrinker-b1", OracleCurve::ExplicitShrinker { b: 1.0 }),
        ("explicit-shrinker-b2", OracleCurve::ExplicitShrinker { b: 2.0 }),
        ("torsion-free-cone", OracleCurve::TorsionFreeCone { lambda: 0.0 }),
        ("torsion-free-cone-shrinking", OracleCurve::TorsionFreeCone { lambda: -1.0 }),
    ];
    for (name, curve) in curves {
        let r = oracle_residual(&curve, &ts)?;
        push(&format!("residual/{name}"), r.first_order.max(r.constraint), 1e-10);
    }
    let rs: Vec<f64> = (1..=190).map(|k| 1.0 + 0.1 * k as f64).collect();
    let r = oracle_residual(&OracleCurve::BryantSalamon { mu: 1.0 }, &rs)?;
    push("residual/bryant-salamon", r.first_order.max(r.constraint), 1e-10);

    let mut worst: f64 = 0.0;
    for (l, b, c) in comparison_params() {
        let params = ClosureParams::su3(l, b, c)?;
        let mut series = build_series(&params, 8)?;
        if inject_fault {
            series.coefficients[0][3] *= 1.0 + 1e-6;
        }
        worst = worst.max(compare_with_table(&series, &appendix_oracle(&params), 1e-12).0);
    }
    push("series/general-table", worst, 1e-12);
    let mut worst: f64 = 0.0;
    for (b, c) in [(0.7, 0.4), (1.0, 1.0), (2f64.sqrt(), 3.0), (1.9, 2.6)] {
        let series = build_series(&ClosureParams::su3(0.0, b, c)?, 8)?;
        worst = worst.max(compare_with_table(&series, &appendix_steady_oracle(b, c), 1e-12).0);
    }
    push("series/steady-table", worst, 1e-12);
    let s = build_series(&ClosureParams::su3(0.0, 2f64.sqrt(), 3.0)?, 8)?;
    push("series/f1-cubic-critical", (s.coefficient(0, 3) - 1.0 / 24.0).abs() * 24.0, 1e-12);
    let s = build_series(&ClosureParams::su3(0.0, 1.0, 0.0)?, 8)?;
    push("series/f1-cubic-torsion-free", (s.coefficient(0, 3) + 1.0 / 6.0).abs() * 6.0, 1e-12);

    let cone = cone_linearization();
    let expected = [-2.0, -2.0, -0.5, -0.5];
    let err = cone.eigenvalues.iter().zip(expected).map(|(e, x)| (e.0 - x).abs().max(e.1.abs())).fold(0.0, f64::max);
    push("spectrum/cone", err, 1e-12);
    push("spectrum/cone-fixed-point", cone.rhs_residual, 1e-14);

    let fps = poly_fixed_points(3.0)?;
    let origin_err = fps[0].eigenvalues.iter().map(|e| e.0.abs().max(e.1.abs())).fold(0.0, f64::max);
    push("fixed-points/origin-degenerate", origin_err, 1e-12);
    let loc_err = fps[1].location.iter().zip([1.0, 1.0, 0.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    push("fixed-points/critical-location", loc_err.max(fps[1].rhs_residual), 1e-12);
    let ev_err = fps[1].eigenvalues.iter().zip([-2.0, -1.0, 1.0]).map(|(e, x)| (e.0 - x).abs()).fold(0.0, f64::max);
    push("fixed-points/critical-spectrum", ev_err, 1e-12);
    let normal = fps[1].stable_normal.clone().unwrap_or_default();
    let n_err = if normal.len() == 3 {
        normal.iter().map(|x| (x - 1.0 / 3f64.sqrt()).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    push("fixed-points/stable-normal", n_err, 1e-10);
    Ok(items)
}

/// Prints the oracle report; exit status 3 names the first failing item.
pub fn cmd_oracle_check(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<ExitStatus> {
    let items = oracle_checks(cfg.inject_fault.unwrap_or(false))?;
    let failed: Vec<&CheckItem> = items.iter().filter(|i| !i.passed).collect();
    let mut buf = Vec::new();
    if cfg.json.unwrap_or(false) || cfg.format == Some(Format::Json) {
        let doc = json!({ "passed": failed.is_empty(), "items": items });
        serde_json::to_writer_pretty(&mut buf, &doc)?;
        buf.push(b'\n');
    } else {
        for i in &items {
            writeln!(
                buf,
                "{} {} value={:e} tol={:e}",
                if i.passed { "PASS" } else { "FAIL" },
                i.name,
                i.value,
                i.tolerance
            )?;
        }
    }
    emit(cfg, &buf, stdout)?;
    if let Some(first) = failed.first() {
        writeln!(stderr, "oracle check failed: {}", first.name)?;
        return Ok(ExitStatus::OracleFailure);
    }
    Ok(ExitStatus::Clean)
}

/// Locates the completeness boundary and prints the estimate.
pub fn cmd_boundary(cfg: &RunConfig, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> Result<ExitStatus> {
    let tol = cfg.tol.unwrap_or(1e-3);
    let (axis, lo, hi) = match (cfg.c, cfg.b) {
        (Some(c), None) => (
            BoundaryAxis::B { c },
            cfg.blo.ok_or_else(|| Error::InvalidConfig("--blo is required".into()))?,
            cfg.bhi.ok_or_else(|| Error::InvalidConfig("--bhi is required".into()))?,
        ),
        (None, Some(b)) => (
            BoundaryAxis::C { b },
            cfg.clo.ok_or_else(|| Error::InvalidConfig("--clo is required".into()))?,
            cfg.chi.ok_or_else(|| Error::InvalidConfig("--chi is required".into()))?,
        ),
        _ => return Err(Error::InvalidConfig("give exactly one of --c (search in b) or --b (search in c)".into())),
    };
    let rep = find_boundary_along(axis, lo, hi, tol, &cfg.integrator(boundary_config()))?;
    let mut buf = Vec::new();
    if cfg.json.unwrap_or(false) || cfg.format == Some(Format::Json) {
        serde_json::to_writer_pretty(&mut buf, &rep)?;
        buf.push(b'\n');
    } else {
        let width = rep.bracket.1 - rep.bracket.0;
        writeln!(
            buf,
            "estimate={} bracket=[{}, {}] width={:e} analytic={} deviation={:e} probes={}",
            fmt_f64(rep.estimate),
            fmt_f64(rep.bracket.0),
            fmt_f64(rep.bracket.1),
            width,
            fmt_f64(rep.analytic),
            (rep.estimate - rep.analytic).abs(),
            rep.probes
        )?;
    }
    emit(cfg, &buf, stdout)?;
    Ok(ExitStatus::Clean)
}

/// Dumps the closure series as JSON.
pub fn cmd_series(cfg: &RunConfig, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> Result<ExitStatus> {
    let series = build_series(&cfg.params()?, cfg.order.unwrap_or(DEFAULT_ORDER))?;
    let mut buf = serde_json::to_vec_pretty(&series.to_json())?;
    buf.push(b'\n');
    emit(cfg, &buf, stdout)?;
    Ok(ExitStatus::Clean)
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { ExitStatus::Usage } else { ExitStatus::Clean };
        }
    };
    type Handler = fn(&RunConfig, &mut dyn Write, &mut dyn Write) -> Result<ExitStatus>;
    let (cmd_cfg, handler): (&RunConfig, Handler) = match &cli.command {
        Command::Integrate(c) => (c, cmd_integrate),
        Command::Classify(c) => (c, cmd_classify),
        Command::OracleCheck(c) => (c, cmd_oracle_check),
        Command::Boundary(c) => (c, cmd_boundary),
        Command::Series(c) => (c, cmd_series),
    };
    let merged = match &cli.config {
        Some(path) => RunConfig::from_file(path).and_then(|base| base.overlay(cmd_cfg)),
        None => Ok(cmd_cfg.clone()),
    };
    let result = merged.and_then(|cfg| handler(&cfg, stdout, stderr));
    match result {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            ExitStatus::Usage
        }
    }
}
