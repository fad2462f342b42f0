//! Integration with events, end classification, boundary search, rate fits and fixed-point analysis.

use nalgebra::{DMatrix, Matrix3, Matrix4, SMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{jacobian, Dual};
use crate::closure::{build_series, seed_point, DEFAULT_ORDER, DEFAULT_SEED_ERROR};
use crate::domain::{
    constraint_residual, observables, recover_u, rescale, to_poly, to_scale_invariant, ClosureParams,
    EndClassification, Event, EventKind, PhasePoint, Sample, Termination, Tolerances, Trajectory,
};
use crate::error::{Error, Result};
use crate::ode::{self, Control, DenseStep, OdeStatus, StepSettings};
use crate::systems::{poly_field, rhs_lambda_d, rhs_sp2, rhs_su3, scale_normal_field, Sp2Point};

/// A step collapse with `f3` below this multiple of the blow-up threshold counts as blow-up.
pub const COLLAPSE_BLOW_FACTOR: f64 = 1e3;

/// Integrator and classifier settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Relative tolerance.
    pub rtol: f64,
    /// Absolute tolerance.
    pub atol: f64,
    /// Largest step.
    pub max_step: f64,
    /// Final time.
    pub t_max: f64,
    /// Blow-up threshold on `f3`; `None` means `1e-6` times the seed's `sqrt(f2 f3)`.
    pub eps_blow: Option<f64>,
    /// Cone-neighbourhood radius for `|scr_f - 1| + |scr_t|`.
    pub cone_tol: f64,
    /// Required persistence in `ln t` inside the cone neighbourhood.
    pub cone_window: f64,
    /// Radius of the exponential-end neighbourhood in polynomial coordinates.
    pub exp_tol: f64,
    /// Required persistence in `t` inside the exponential-end neighbourhood.
    pub exp_window: f64,
    /// Stop once cone convergence is confirmed.
    pub stop_on_cone: bool,
    /// Stop once an exponential end is confirmed.
    pub stop_on_exponential_end: bool,
    /// Uniform output spacing; `None` stores every accepted step.
    pub output_dt: Option<f64>,
    /// Step budget.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_step: f64::INFINITY,
            t_max: 1e4,
            eps_blow: None,
            cone_tol: 0.05,
            cone_window: 1.0,
            exp_tol: 0.02,
            exp_window: 5.0,
            stop_on_cone: false,
            stop_on_exponential_end: true,
            output_dt: None,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        let pos = [self.rtol, self.atol, self.max_step, self.cone_tol, self.exp_tol];
        if pos.iter().any(|x| !(*x > 0.0)) || self.eps_blow.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::InvalidConfig("tolerances and thresholds must be positive".into()));
        }
        if self.output_dt.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::InvalidConfig("output spacing must be positive".into()));
        }
        Ok(())
    }

    fn step_settings(&self) -> StepSettings {
        StepSettings {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            max_steps: self.max_steps,
            ..StepSettings::default()
        }
    }
}

fn su3_state_rhs(lambda: f64) -> impl Fn(f64, &[f64; 6]) -> Option<[f64; 6]> {
    move |_t, y| {
        let p = PhasePoint::from_array(y).ok()?;
        let d = rhs_su3(&p, lambda).state_derivative(&p);
        d.iter().all(|x| x.is_finite()).then_some(d)
    }
}

fn make_sample(t: f64, y: &[f64; 6], lambda: f64) -> Result<Sample> {
    let point = PhasePoint::from_array(y)?;
    let dydt = rhs_su3(&point, lambda).state_derivative(&point);
    Ok(Sample { t, point, dydt, obs: observables(&point, lambda) })
}

/// Completes the approach to `f3 = eps` with RK4 in `(f_i^2, tau_i)`, which stay regular where `f3` has a square-root singularity.
fn finish_blow_up(last: &Sample, eps: f64, lambda: f64) -> Option<Sample> {
    const AIMS: usize = 4;
    const SUBSTEPS: usize = 16;
    if last.point.f()[2] <= eps {
        return None;
    }
    let field = |y: &[f64; 6]| -> Option<[f64; 6]> {
        let p = PhasePoint::from_squares([y[0], y[1], y[2]], [y[3], y[4], y[5]]).ok()?;
        let d = rhs_su3(&p, lambda);
        let dy = [d.d_f_sq[0], d.d_f_sq[1], d.d_f_sq[2], d.d_tau[0], d.d_tau[1], d.d_tau[2]];
        dy.iter().all(|x| x.is_finite()).then_some(dy)
    };
    let rk4 = |y: &[f64; 6], h: f64| -> Option<[f64; 6]> {
        let shift = |a: &[f64; 6], k: &[f64; 6], c: f64| -> [f64; 6] { std::array::from_fn(|i| a[i] + c * k[i]) };
        let k1 = field(y)?;
        let k2 = field(&shift(y, &k1, h / 2.0))?;
        let k3 = field(&shift(y, &k2, h / 2.0))?;
        let k4 = field(&shift(y, &k3, h))?;
        Some(std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
    };
    let (fs, tau) = (last.point.f_sq(), last.point.tau());
    let mut y = [fs[0], fs[1], fs[2], tau[0], tau[1], tau[2]];
    let mut t = last.t;
    let target = eps * eps;
    for _ in 0..AIMS {
        let dt = (target - y[2]) / field(&y)?[2];
        if !(dt > 0.0) || !dt.is_finite() {
            break;
        }
        let h = dt / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            y = rk4(&y, h)?;
        }
        t += dt;
    }
    // Remaining gap is far below the step; close it linearly.
    let dt = (target - y[2]) / field(&y)?[2];
    if dt.is_finite() {
        let d = field(&y)?;
        y = std::array::from_fn(|i| y[i] + dt * d[i]);
        t += dt;
    }
    y[2] = target;
    let p = PhasePoint::from_squares([y[0], y[1], y[2]], [y[3], y[4], y[5]]).ok()?;
    make_sample(t, &p.to_array(), lambda).ok().filter(|s| s.t > last.t)
}

/// Steady torsion parameter `c = tau2 - u f2^2` read off a point.
pub fn steady_c(p: &PhasePoint) -> f64 {
    let u = recover_u(p, 0.0);
    p.tau()[1] - u * p.f_sq()[1]
}

/// Adaptive integration of the first-order SU(3) system from a seed point.
pub fn integrate(seed: &PhasePoint, t0: f64, lambda: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t0 > 0.0) || !(cfg.t_max > t0) {
        return Err(Error::InvalidConfig(format!("need 0 < t0 < t_max, got t0 = {t0}, t_max = {}", cfg.t_max)));
    }
    let f = seed.f();
    let eps_blow = cfg.eps_blow.unwrap_or(1e-6 * (f[1] * f[2]).sqrt());
    let c_steady = steady_c(seed);
    let exp_target = (lambda == 0.0 && c_steady > 0.0).then(|| [3.0 / c_steady, 3.0 / c_steady, 0.0]);
    let mut samples = vec![make_sample(t0, &seed.to_array(), lambda)?];
    let mut events: Vec<Event> = Vec::new();
    let mut termination: Option<Termination> = None;
    let mut cone_since: Option<f64> = None;
    let mut cone_logged = false;
    let mut exp_since: Option<f64> = None;
    let mut next_out = cfg.output_dt.map(|d| t0 + d);
    let mut failure: Option<Error> = None;
    let mut last_step = (t0, seed.to_array());

    let status = ode::integrate(
        su3_state_rhs(lambda),
        t0,
        seed.to_array(),
        cfg.t_max,
        &cfg.step_settings(),
        |s: &DenseStep<6>| {
            let (y0, y1) = (&s.y0, &s.y1);
            let mut t_end = s.t1();
            let mut y_end = *y1;
            let mut stop = false;
            // Blow-up: f3 reaches the threshold while decreasing.
            if y1[2] <= eps_blow && s.dy1[2] < 0.0 {
                let tb = if y0[2] > eps_blow { s.locate(|y| y[2] - eps_blow) } else { s.t0 };
                t_end = tb;
                y_end = s.eval(tb);
                events.push(Event { kind: EventKind::BlowUp, t: tb });
                termination = Some(Termination::BlowUp { t: tb });
                stop = true;
            }
            for (kind, j) in [(EventKind::F1EqualsF3, 2usize), (EventKind::F1EqualsF2, 1usize)] {
                let (g0, g1) = (y0[0] - y0[j], y_end[0] - y_end[j]);
                if g0 != 0.0 && (g0 > 0.0) != (g1 > 0.0) {
                    let tc = s.locate(|y| y[0] - y[j]);
                    if tc <= t_end {
                        events.push(Event { kind, t: tc });
                    }
                }
            }
            let p_end = match PhasePoint::from_array(&y_end) {
                Ok(p) => p,
                Err(e) => {
                    failure = Some(e);
                    return Control::Stop;
                }
            };
            if !stop {
                let sp = to_scale_invariant(&p_end);
                if sp.cone_distance() < cfg.cone_tol {
                    let since = *cone_since.get_or_insert(t_end);
                    if (t_end / since).ln() >= cfg.cone_window && !cone_logged {
                        cone_logged = true;
                        events.push(Event { kind: EventKind::ConeConvergence, t: t_end });
                        if cfg.stop_on_cone {
                            termination = Some(Termination::ConeConverged { t: t_end });
                            stop = true;
                        }
                    }
                } else {
                    cone_since = None;
                }
                if let Some(target) = exp_target {
                    let q = to_poly(&p_end).big_f;
                    let d =
                        ((q[0] - target[0]).powi(2) + (q[1] - target[1]).powi(2) + (q[2] - target[2]).powi(2)).sqrt();
                    if d < cfg.exp_tol {
                        let since = *exp_since.get_or_insert(t_end);
                        if t_end - since >= cfg.exp_window && cfg.stop_on_exponential_end {
                            events.push(Event { kind: EventKind::ExponentialEnd, t: t_end });
                            termination = Some(Termination::ExponentialEnd { t: t_end });
                            stop = true;
                        }
                    } else {
                        exp_since = None;
                    }
                }
            }
            last_step = (t_end, y_end);
            let mut push = |t: f64, y: &[f64; 6]| match make_sample(t, y, lambda) {
                Ok(smp) => {
                    if samples.last().is_none_or(|l| t > l.t) {
                        samples.push(smp);
                    }
                }
                Err(e) => failure = Some(e),
            };
            match (cfg.output_dt, next_out.as_mut()) {
                (Some(dt), Some(next)) => {
                    while *next <= t_end {
                        push(*next, &s.eval(*next));
                        *next += dt;
                    }
                    if stop || t_end >= cfg.t_max {
                        push(t_end, &y_end);
                    }
                }
                _ => push(t_end, &y_end),
            }
            if failure.is_some() || stop {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    if let Some(e) = failure {
        let t = samples.last().map_or(t0, |s| s.t);
        termination = Some(Termination::InvalidState { t, reason: e.to_string() });
    }
    if termination.is_none() {
        if let (OdeStatus::StepCollapse { t, .. }, Ok(last)) = (status, make_sample(last_step.0, &last_step.1, lambda))
        {
            // Collapse with a small, decreasing f3 is the onset of the f3 -> 0 singularity.
            if last.point.f()[2] <= COLLAPSE_BLOW_FACTOR * eps_blow && last.dydt[2] < 0.0 {
                if samples.last().is_some_and(|s| s.t < last.t) {
                    samples.push(last);
                }
                let tb = match finish_blow_up(&last, eps_blow, lambda) {
                    Some(smp) => {
                        let tb = smp.t;
                        samples.push(smp);
                        tb
                    }
                    None => t,
                };
                events.push(Event { kind: EventKind::BlowUp, t: tb });
                termination = Some(Termination::BlowUp { t: tb });
            }
        }
    }
    let termination = termination.unwrap_or(match status {
        OdeStatus::Finished | OdeStatus::Stopped => Termination::ReachedTmax,
        OdeStatus::StepCollapse { t, h } => Termination::StepCollapse { t, h },
        OdeStatus::TooManySteps { t } => Termination::StepCollapse { t, h: f64::NAN },
    });
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(Trajectory {
        samples,
        lambda,
        params: None,
        tolerances: Tolerances { rtol: cfg.rtol, atol: cfg.atol },
        events,
        termination,
    })
}

/// Series seed time used when none is given.
pub fn default_seed_time(params: &ClosureParams) -> Result<f64> {
    let s = build_series(params, DEFAULT_ORDER)?;
    Ok(s.default_seed_time(DEFAULT_SEED_ERROR))
}

/// Builds the series, seeds at `t0` and integrates; blow-up threshold `1e-6 b` unless configured.
pub fn integrate_closure(
    params: &ClosureParams,
    order: usize,
    t0: Option<f64>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let series = build_series(params, order)?;
    let t0 = t0.unwrap_or_else(|| series.default_seed_time(DEFAULT_SEED_ERROR));
    let seed = seed_point(&series, t0)?;
    let mut cfg = *cfg;
    cfg.eps_blow = Some(cfg.eps_blow.unwrap_or(1e-6 * params.b()));
    let mut traj = integrate(&seed, t0, params.lambda(), &cfg)?;
    traj.params = Some(*params);
    Ok(traj)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Settings of the tail window used by [`fit_rate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFitConfig {
    /// Cone-neighbourhood radius defining the asymptotic region.
    pub cone_tol: f64,
    /// Deviations below this level are treated as integration noise.
    pub noise_floor: f64,
    /// Width of the tail window in `ln t`.
    pub tail_span: f64,
    /// Smallest acceptable window width in `ln t`.
    pub min_span: f64,
    /// Smallest number of samples in the window.
    pub min_samples: usize,
}

impl Default for RateFitConfig {
    fn default() -> Self {
        Self { cone_tol: 0.05, noise_floor: 1e-8, tail_span: 2.0, min_span: 1.0, min_samples: 8 }
    }
}

/// Slope of `ln |(scr_f - 1, scr_t)|` against `ln t` over the tail of the asymptotic region.
pub fn fit_rate(traj: &Trajectory) -> Result<f64> {
    fit_rate_with(traj, &RateFitConfig::default())
}

/// As [`fit_rate`] with explicit window settings.
pub fn fit_rate_with(traj: &Trajectory, cfg: &RateFitConfig) -> Result<f64> {
    let sis: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .map(|s| {
            let sp = to_scale_invariant(&s.point);
            (s.t, sp.cone_distance(), sp.cone_deviation())
        })
        .collect();
    let start = sis.iter().rposition(|x| x.1 >= cfg.cone_tol).map_or(0, |k| k + 1);
    let region: Vec<(f64, f64)> =
        sis[start..].iter().filter(|x| x.2 > cfg.noise_floor && x.0 > 0.0).map(|x| (x.0.ln(), x.2.ln())).collect();
    let Some(&(hi, _)) = region.last() else {
        return Err(Error::InsufficientData("no samples in the asymptotic region".into()));
    };
    let window: Vec<(f64, f64)> = region.into_iter().filter(|x| x.0 >= hi - cfg.tail_span).collect();
    let span = window.last().map_or(0.0, |l| l.0) - window.first().map_or(0.0, |f| f.0);
    if window.len() < cfg.min_samples || span < cfg.min_span {
        return Err(Error::InsufficientData(format!("tail has {} samples over ln-span {span:.3}", window.len())));
    }
    Ok(slope(&window))
}

/// Numerical verdict on the end of a trajectory.
pub fn classify_end(traj: &Trajectory) -> EndClassification {
    classify_end_with(traj, 0.05, 1.0)
}

/// As [`classify_end`] with an explicit cone radius and window.
pub fn classify_end_with(traj: &Trajectory, cone_tol: f64, cone_window: f64) -> EndClassification {
    match traj.termination {
        Termination::BlowUp { t } => return EndClassification::Incomplete { t_blowup: t },
        Termination::ExponentialEnd { .. } => return EndClassification::CompleteExponentialEnd,
        _ => {}
    }
    let dist: Vec<(f64, f64)> =
        traj.samples.iter().map(|s| (s.t, to_scale_invariant(&s.point).cone_distance())).collect();
    let entry = dist.iter().rposition(|x| x.1 >= cone_tol).map_or(0, |k| k + 1);
    if let (Some(first), Some(last)) = (dist.get(entry), dist.last()) {
        if (last.0 / first.0).ln() >= cone_window {
            let rate = fit_rate_with(traj, &RateFitConfig { cone_tol, ..Default::default() }).ok();
            return EndClassification::CompleteAcTorsionFree { rate };
        }
    }
    let reason = match &traj.termination {
        Termination::StepCollapse { t, h } => format!("step-size collapse at t = {t} (h = {h:e})"),
        Termination::InvalidState { t, reason } => format!("invalid state at t = {t}: {reason}"),
        _ => "no basin reached before t_max".to_string(),
    };
    EndClassification::Undetermined { reason }
}

/// Analytic verdict for smoothly-closing steady solitons from the threshold `c^2 / b^2 = 9/2`.
pub fn classify_steady_params(b: f64, c: f64) -> Result<EndClassification> {
    if !(b > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParams(format!("need b > 0 and finite c, got b = {b}, c = {c}")));
    }
    let ratio = c * c / (b * b);
    Ok(if (ratio - 4.5).abs() <= 1e-12 * 4.5 {
        EndClassification::CompleteExponentialEnd
    } else if ratio < 4.5 {
        EndClassification::CompleteAcTorsionFree { rate: None }
    } else {
        EndClassification::Incomplete { t_blowup: f64::NAN }
    })
}

/// Default settings for classification runs.
pub fn classification_config() -> IntegratorConfig {
    IntegratorConfig { t_max: 1e5, ..IntegratorConfig::default() }
}

/// Integrates a steady smoothly-closing solution and classifies its end.
pub fn classify_steady(b: f64, c: f64, cfg: &IntegratorConfig) -> Result<(EndClassification, Trajectory)> {
    let params = ClosureParams::su3(0.0, b, c)?;
    let traj = integrate_closure(&params, DEFAULT_ORDER, None, cfg)?;
    Ok((classify_end(&traj), traj))
}

/// Which parameter a boundary search moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryAxis {
    /// Vary `b` at fixed `c`.
    B {
        /// Fixed torsion parameter.
        c: f64,
    },
    /// Vary `c` at fixed `b`.
    C {
        /// Fixed singular-orbit size.
        b: f64,
    },
}

/// Result of a completeness-boundary search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// Search axis.
    pub axis: BoundaryAxis,
    /// Final bracket.
    pub bracket: (f64, f64),
    /// Midpoint of the final bracket.
    pub estimate: f64,
    /// Analytic boundary from `c^2 = 9 b^2 / 2`.
    pub analytic: f64,
    /// Number of classification runs.
    pub probes: usize,
}

fn probe_complete(axis: BoundaryAxis, x: f64, cfg: &IntegratorConfig) -> Result<bool> {
    let (b, c) = match axis {
        BoundaryAxis::B { c } => (x, c),
        BoundaryAxis::C { b } => (b, x),
    };
    let (verdict, _) = classify_steady(b, c, cfg)?;
    match verdict {
        EndClassification::Undetermined { reason } => {
            Err(Error::NotBracketing(format!("undetermined verdict at {x}: {reason}")))
        }
        v => Ok(v.is_complete()),
    }
}

/// Settings for boundary probes: stop as soon as either complete basin is confirmed.
pub fn boundary_config() -> IntegratorConfig {
    IntegratorConfig { t_max: 1e7, stop_on_cone: true, ..IntegratorConfig::default() }
}

/// Locates the completeness boundary along `b` at fixed `c`.
pub fn find_boundary(c: f64, b_lo: f64, b_hi: f64, tol: f64) -> Result<BoundaryReport> {
    find_boundary_along(BoundaryAxis::B { c }, b_lo, b_hi, tol, &boundary_config())
}

/// Locates the completeness boundary on either axis by parallel four-way section.
pub fn find_boundary_along(
    axis: BoundaryAxis,
    lo: f64,
    hi: f64,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<BoundaryReport> {
    if !(lo < hi) || !(tol > 0.0) || !(lo > 0.0) {
        return Err(Error::NotBracketing(format!("need 0 < lo < hi and tol > 0, got [{lo}, {hi}], tol {tol}")));
    }
    let ends: Vec<Result<bool>> = [lo, hi].par_iter().map(|&x| probe_complete(axis, x, cfg)).collect();
    let (c_lo, c_hi) = (ends[0].clone()?, ends[1].clone()?);
    if c_lo == c_hi {
        let kind = if c_lo { "complete" } else { "incomplete" };
        return Err(Error::NotBracketing(format!("both endpoints {kind}")));
    }
    let mut probes = 2;
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let xs: Vec<f64> = (1..4).map(|k| a + (b - a) * k as f64 / 4.0).collect();
        let res: Vec<bool> = xs.par_iter().map(|&x| probe_complete(axis, x, cfg)).collect::<Result<_>>()?;
        probes += 3;
        let mut na = a;
        let mut nb = b;
        for (k, &r) in res.iter().enumerate() {
            if r == c_lo {
                na = xs[k];
            } else {
                nb = xs[k];
                break;
            }
        }
        a = na;
        b = nb;
    }
    let analytic = match axis {
        BoundaryAxis::B { c } => c.abs() * (2.0f64).sqrt() / 3.0,
        BoundaryAxis::C { b } => 3.0 * b / 2.0f64.sqrt(),
    };
    Ok(BoundaryReport { axis, bracket: (a, b), estimate: 0.5 * (a + b), analytic, probes })
}

/// Stability type of a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    /// All eigenvalues have negative real part.
    Sink,
    /// All eigenvalues have positive real part.
    Source,
    /// Eigenvalues of both signs and none on the axis.
    Saddle,
    /// Some eigenvalue has zero real part.
    Degenerate,
}

/// Linear analysis at a fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// Location.
    pub location: Vec<f64>,
    /// Jacobian, row major; for the cone this is the restriction to the constraint tangent space.
    pub jacobian: Vec<Vec<f64>>,
    /// Eigenvalues as `(re, im)`, sorted by real part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Real eigenvectors in ambient coordinates, aligned with `eigenvalues`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Stability verdict.
    pub stability: Stability,
    /// Largest component of the field at the location.
    pub rhs_residual: f64,
    /// Unit normal of the stable plane of a saddle with one unstable direction.
    pub stable_normal: Option<Vec<f64>>,
}

fn sorted_eigenvalues<const N: usize>(m: &SMatrix<f64, N, N>) -> Vec<(f64, f64)> {
    let d = DMatrix::from_fn(N, N, |i, j| m[(i, j)]);
    let mut ev: Vec<(f64, f64)> = d.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    ev
}

/// Null-space basis of a square matrix: right singular vectors with singular value below `tol`.
fn null_space(m: &DMatrix<f64>, tol: f64) -> Vec<Vec<f64>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(k, _)| v_t.row(k).iter().copied().collect())
        .collect()
}

fn stability_of(ev: &[(f64, f64)]) -> Stability {
    let tol = 1e-12;
    if ev.iter().any(|e| e.0.abs() <= tol) {
        Stability::Degenerate
    } else if ev.iter().all(|e| e.0 < 0.0) {
        Stability::Sink
    } else if ev.iter().all(|e| e.0 > 0.0) {
        Stability::Source
    } else {
        Stability::Saddle
    }
}

fn eigenvectors_real(m: &DMatrix<f64>, ev: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let n = m.nrows();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut k = 0;
    while k < ev.len() {
        let lam = ev[k].0;
        let mult = ev[k..].iter().take_while(|e| (e.0 - lam).abs() < 1e-9 && e.1 == 0.0).count().max(1);
        let shifted = m - DMatrix::identity(n, n) * lam;
        let mut ns = null_space(&shifted, 1e-8);
        ns.truncate(mult);
        while ns.len() < mult {
            ns.push(vec![f64::NAN; n]);
        }
        out.extend(ns);
        k += mult;
    }
    out
}

/// Fixed points of the steady polynomial system on the closed octant.
pub fn poly_fixed_points(c: f64) -> Result<Vec<FixedPointReport>> {
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("need c > 0, got {c}")));
    }
    let mut out = Vec::new();
    for loc in [[0.0, 0.0, 0.0], [3.0 / c, 3.0 / c, 0.0]] {
        let jac = jacobian(|x: [Dual; 3]| poly_field(x, Dual { re: c, eps: 0.0 }), loc);
        let m = Matrix3::from_fn(|i, j| jac[i][j]);
        let ev = sorted_eigenvalues(&m);
        let d = DMatrix::from_fn(3, 3, |i, j| jac[i][j]);
        let vecs = eigenvectors_real(&d, &ev);
        let stability = stability_of(&ev);
        let stable_normal = if stability == Stability::Saddle && ev.iter().filter(|e| e.0 < 0.0).count() == 2 {
            // Left eigenvector of the unstable eigenvalue is normal to the stable plane.
            let unstable = ev.iter().find(|e| e.0 > 0.0).map(|e| e.0).unwrap_or(f64::NAN);
            let shifted_t = d.transpose() - DMatrix::identity(3, 3) * unstable;
            null_space(&shifted_t, 1e-8).into_iter().next().map(|mut v| {
                let s: f64 = v.iter().sum();
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt() * s.signum();
                v.iter_mut().for_each(|x| *x /= nrm);
                v
            })
        } else {
            None
        };
        let rhs = poly_field(loc, c);
        out.push(FixedPointReport {
            location: loc.to_vec(),
            jacobian: jac.iter().map(|r| r.to_vec()).collect(),
            eigenvalues: ev,
            eigenvectors: vecs,
            stability,
            rhs_residual: rhs.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            stable_normal,
        });
    }
    Ok(out)
}

/// Orthonormal basis of `{sum zeta = 0, sum eta = 0}` in `(zeta, eta)` coordinates.
fn cone_tangent_basis() -> SMatrix<f64, 6, 4> {
    let a = 1.0 / 2f64.sqrt();
    let b = 1.0 / 6f64.sqrt();
    let mut m = SMatrix::<f64, 6, 4>::zeros();
    for off in [0usize, 3] {
        let col = off / 3 * 2;
        m[(off, col)] = a;
        m[(off + 1, col)] = -a;
        m[(off, col + 1)] = b;
        m[(off + 1, col + 1)] = b;
        m[(off + 2, col + 1)] = -2.0 * b;
    }
    m
}

/// Linearisation of the steady scale-invariant system at the cone, restricted to the constraint tangent space.
pub fn cone_linearization() -> FixedPointReport {
    let field = |x: [Dual; 6]| -> [Dual; 6] {
        let (df, dt) = scale_normal_field(Dual { re: 0.0, eps: 0.0 }, [x[0], x[1], x[2]], [x[3], x[4], x[5]]);
        [df[0], df[1], df[2], dt[0], dt[1], dt[2]]
    };
    let loc = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let jac = jacobian(field, loc);
    let full = SMatrix::<f64, 6, 6>::from_fn(|i, j| jac[i][j]);
    let basis = cone_tangent_basis();
    let restricted: Matrix4<f64> = basis.transpose() * full * basis;
    let ev = sorted_eigenvalues(&restricted);
    let d = DMatrix::from_fn(4, 4, |i, j| restricted[(i, j)]);
    let vecs: Vec<Vec<f64>> = eigenvectors_real(&d, &ev)
        .into_iter()
        .map(|v| {
            let v4 = nalgebra::Vector4::from_iterator(v);
            (basis * v4).iter().copied().collect()
        })
        .collect();
    let (df, dt) = scale_normal_field(0.0, [1.0; 3], [0.0; 3]);
    let rhs_residual = df.iter().chain(&dt).fold(0.0f64, |m, x| m.max(x.abs()));
    FixedPointReport {
        location: loc.to_vec(),
        jacobian: (0..4).map(|i| (0..4).map(|j| restricted[(i, j)]).collect()).collect(),
        stability: stability_of(&ev),
        eigenvalues: ev,
        eigenvectors: vecs,
        rhs_residual,
        stable_normal: None,
    }
}

/// Norm of the component of the full cone Jacobian leaving the constraint tangent space.
pub fn cone_tangent_leakage() -> f64 {
    let field = |x: [Dual; 6]| -> [Dual; 6] {
        let (df, dt) = scale_normal_field(Dual { re: 0.0, eps: 0.0 }, [x[0], x[1], x[2]], [x[3], x[4], x[5]]);
        [df[0], df[1], df[2], dt[0], dt[1], dt[2]]
    };
    let jac = jacobian(field, [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    let full = SMatrix::<f64, 6, 6>::from_fn(|i, j| jac[i][j]);
    let basis = cone_tangent_basis();
    let image = full * basis;
    (image - basis * (basis.transpose() * image)).amax()
}

/// Integrates the original and rescaled problems and returns the largest relative deviation on the shared output grid.
///
/// A located blow-up endpoint contributes only its time; its state is fixed by the event tolerance.
pub fn check_scaling_symmetry(
    seed: &PhasePoint,
    t0: f64,
    lambda: f64,
    mu: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let (seed_mu, lambda_mu) = rescale(seed, lambda, mu)?;
    let n = 200;
    let dt = (t_end - t0) / n as f64;
    let base = IntegratorConfig {
        t_max: t_end,
        output_dt: Some(dt),
        stop_on_cone: false,
        stop_on_exponential_end: false,
        ..*cfg
    };
    let scaled = IntegratorConfig {
        t_max: mu * t_end,
        output_dt: Some(mu * dt),
        max_step: cfg.max_step * mu,
        atol: cfg.atol * mu,
        eps_blow: cfg.eps_blow.map(|e| e * mu),
        ..base
    };
    let a = integrate(seed, t0, lambda, &base)?;
    let b = integrate(&seed_mu, mu * t0, lambda_mu, &scaled)?;
    let grid_len = |tr: &Trajectory| match tr.termination {
        Termination::BlowUp { .. } => tr.samples.len().saturating_sub(1),
        _ => tr.samples.len(),
    };
    let m = grid_len(&a).min(grid_len(&b));
    if m < 2 {
        return Err(Error::InsufficientData("trajectories too short to compare".into()));
    }
    let mut worst = match (&a.termination, &b.termination) {
        (Termination::BlowUp { t: ta }, Termination::BlowUp { t: tb }) => (mu * ta - tb).abs() / tb.abs().max(1.0),
        _ => 0.0f64,
    };
    for k in 0..m {
        let (sa, sb) = (&a.samples[k], &b.samples[k]);
        worst = worst.max((mu * sa.t - sb.t).abs() / sb.t.abs().max(1.0));
        let (ya, yb) = (sa.point.to_array(), sb.point.to_array());
        let scale = ya.iter().fold(1.0f64, |m, x| m.max(mu * x.abs()));
        for i in 0..6 {
            worst = worst.max((mu * ya[i] - yb[i]).abs() / scale);
        }
    }
    Ok(worst)
}

/// Band around region boundaries inside which membership is not decided.
pub const REGION_MARGIN: f64 = 1e-8;

/// Monitored region memberships along a steady trajectory in the `c = 3` normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservedRegionReport {
    /// First time with `Lambda > D > 1`.
    pub lambda_above_d_above_one_from: Option<f64>,
    /// First time with `Lambda < 1`.
    pub lambda_below_one_from: Option<f64>,
    /// First violation of a preserved region, if any.
    pub violation: Option<(String, f64)>,
    /// Smallest `Lambda' / ((Lambda - 1) F1)` while `Lambda > D > 1`.
    pub min_growth_ratio: Option<f64>,
    /// Smallest `d ln(Lambda - 1)/dt - tanh(t/2)` while `Lambda > D > 1`.
    pub min_tanh_margin: Option<f64>,
    /// Largest `|Lambda - 1| + |D - 1|`.
    pub max_critical_deviation: f64,
    /// Final `Lambda`.
    pub final_lambda: f64,
}

/// Checks that the regions `Lambda > D > 1` and `Lambda < 1` are preserved once entered.
pub fn check_preserved_regions(traj: &Trajectory) -> Result<PreservedRegionReport> {
    let first = traj.samples.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let c = steady_c(&first.point);
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("needs a steady trajectory with c > 0, got {c}")));
    }
    let k = c / 3.0;
    let mut rep = PreservedRegionReport {
        lambda_above_d_above_one_from: None,
        lambda_below_one_from: None,
        violation: None,
        min_growth_ratio: None,
        min_tanh_margin: None,
        max_critical_deviation: 0.0,
        final_lambda: f64::NAN,
    };
    for s in &traj.samples {
        let q = to_poly(&s.point).big_f.map(|x| x * k);
        let l = q[0] * (q[1] + q[2]);
        let d = q[1] - q[2];
        let t_norm = s.t / k;
        rep.final_lambda = l;
        rep.max_critical_deviation = rep.max_critical_deviation.max((l - 1.0).abs() + (d - 1.0).abs());
        let above = l > d + REGION_MARGIN && d > 1.0 + REGION_MARGIN;
        let left_above = l < d - REGION_MARGIN || d < 1.0 - REGION_MARGIN;
        if above {
            rep.lambda_above_d_above_one_from.get_or_insert(s.t);
        }
        if rep.lambda_above_d_above_one_from.is_some() {
            if left_above && rep.violation.is_none() {
                rep.violation = Some(("Lambda > D > 1".into(), s.t));
            } else if above {
                let dl = rhs_lambda_d(l, d, q[0])?[1];
                let ratio = dl / ((l - 1.0) * q[0]);
                rep.min_growth_ratio = Some(rep.min_growth_ratio.map_or(ratio, |m: f64| m.min(ratio)));
                let margin = dl / (l - 1.0) - (0.5 * t_norm).tanh();
                rep.min_tanh_margin = Some(rep.min_tanh_margin.map_or(margin, |m: f64| m.min(margin)));
            }
        }
        if l < 1.0 - REGION_MARGIN {
            rep.lambda_below_one_from.get_or_insert(s.t);
        } else if rep.lambda_below_one_from.is_some() && l > 1.0 + REGION_MARGIN && rep.violation.is_none() {
            rep.violation = Some(("Lambda < 1".into(), s.t));
        }
    }
    Ok(rep)
}

/// Drift and qualitative-property report for a steady trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// Largest drift of `tau_i - u f_i^2` relative to `max(1, |tau_i|, |u f_i^2|)`.
    pub steady_drift: f64,
    /// Largest `|sum tau_i / f_i^2|` relative to `max(1, max |tau_i / f_i^2|)`.
    pub constraint_drift: f64,
    /// Smallest `d (f1 f2 f3)^(1/3) / dt`.
    pub min_volume_rate: f64,
    /// `f2 > max(f1, f3)` at every sample.
    pub f2_dominant: bool,
    /// `u > 0` at every sample.
    pub u_positive: bool,
    /// `f1` increasing at every sample.
    pub f1_increasing: bool,
    /// Times with `f1 = f3`.
    pub f1_f3_crossings: Vec<f64>,
    /// `f1 > f3` at every sample after the last crossing.
    pub f1_above_f3_after_crossing: bool,
}

/// Evaluates conservation laws and the steady qualitative properties on samples with `t <= t_limit`.
pub fn conservation_report(traj: &Trajectory, t_limit: f64) -> Result<ConservationReport> {
    let first = traj.samples.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let k0: [f64; 3] = {
        let (fs, tau, u) = (first.point.f_sq(), first.point.tau(), first.obs.u);
        [0, 1, 2].map(|i| tau[i] - u * fs[i])
    };
    let crossings = traj.event_times(EventKind::F1EqualsF3);
    let last_cross = crossings.last().copied();
    let mut rep = ConservationReport {
        steady_drift: 0.0,
        constraint_drift: 0.0,
        min_volume_rate: f64::INFINITY,
        f2_dominant: true,
        u_positive: true,
        f1_increasing: true,
        f1_f3_crossings: crossings,
        f1_above_f3_after_crossing: true,
    };
    for s in traj.samples.iter().filter(|s| s.t <= t_limit) {
        let (f, fs, tau, u) = (s.point.f(), s.point.f_sq(), s.point.tau(), s.obs.u);
        for i in 0..3 {
            let ki = tau[i] - u * fs[i];
            let sc = 1.0f64.max(tau[i].abs()).max((u * fs[i]).abs());
            rep.steady_drift = rep.steady_drift.max((ki - k0[i]).abs() / sc);
        }
        let tsc = (0..3).fold(1.0f64, |m, i| m.max((tau[i] / fs[i]).abs()));
        rep.constraint_drift = rep.constraint_drift.max(constraint_residual(&s.point).abs() / tsc);
        let vol = s.point.volume();
        let dlog: f64 = (0..3).map(|i| s.dydt[i] / f[i]).sum();
        rep.min_volume_rate = rep.min_volume_rate.min(vol.cbrt() * dlog / 3.0);
        rep.f2_dominant &= f[1] > f[0] && f[1] > f[2];
        rep.u_positive &= u > 0.0;
        rep.f1_increasing &= s.dydt[0] > 0.0;
        if let Some(tc) = last_cross {
            if s.t > tc {
                rep.f1_above_f3_after_crossing &= f[0] > f[2];
            }
        }
    }
    Ok(rep)
}

/// Reduced Sp(2) trajectory on a uniform grid.
pub fn integrate_sp2(
    q0: &Sp2Point,
    t0: f64,
    lambda: f64,
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, Sp2Point)>> {
    if !(dt > 0.0) || !(t_end > t0) {
        return Err(Error::InvalidConfig("need dt > 0 and t_end > t0".into()));
    }
    let rhs = move |_t: f64, y: &[f64; 3]| -> Option<[f64; 3]> {
        let q = Sp2Point::new(y[0], y[1], y[2]).ok()?;
        let d = rhs_sp2(&q, lambda);
        Some([d.d_f1_sq / (2.0 * y[0]), d.d_f2_sq / (2.0 * y[1]), d.d_tau2])
    };
    let mut out = vec![(t0, *q0)];
    let mut next = t0 + dt;
    let mut err = None;
    let status =
        ode::integrate(rhs, t0, [q0.f1(), q0.f2(), q0.tau2()], t_end, &cfg.step_settings(), |s: &DenseStep<3>| {
            while next <= s.t1() * (1.0 + 1e-15) {
                let y = s.eval(next);
                match Sp2Point::new(y[0], y[1], y[2]) {
                    Ok(q) => out.push((next, q)),
                    Err(e) => {
                        err = Some(e);
                        return Control::Stop;
                    }
                }
                next += dt;
            }
            Control::Continue
        });
    if let Some(e) = err {
        return Err(e);
    }
    if !matches!(status, OdeStatus::Finished) {
        return Err(Error::InvalidConfig(format!("reduced integration ended early: {status:?}")));
    }
    Ok(out)
}

/// Runs several steady classifications in parallel.
pub fn classify_grid(
    points: &[(f64, f64)],
    cfg: &IntegratorConfig,
) -> Vec<Result<(EndClassification, EndClassification)>> {
    points
        .par_iter()
        .map(|&(b, c)| {
            let (num, _) = classify_steady(b, c, cfg)?;
            let ana = classify_steady_params(b, c)?;
            Ok((num, ana))
        })
        .collect()
}
