//! High-order Taylor integration of the first-order SU(3) system in any scalar type.
//!
//! With double-double scalars this follows orbits whose neighbours separate faster than
//! double precision can track, such as the explicit shrinker.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::closure::eval_series_in;
use crate::dd::DoubleDouble;
use crate::domain::{ClosureParams, PhasePoint};
use crate::error::{Error, Result};
use crate::mp::Mp320;

/// Largest accepted series-tail estimate at the seed, in units of the step tolerance.
pub const SEED_TAIL_FACTOR: f64 = 1e12;

/// Settings of the Taylor integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorSettings {
    /// Degree of the local Taylor polynomial.
    pub order: usize,
    /// Target local truncation error relative to the state.
    pub tol: f64,
    /// Step budget.
    pub max_steps: usize,
    /// Degree of the closure series used for the seed.
    pub series_order: usize,
}

impl Default for TaylorSettings {
    fn default() -> Self {
        Self { order: 32, tol: 1e-30, max_steps: 100_000, series_order: 40 }
    }
}

impl TaylorSettings {
    /// Settings matched to the 320-bit scalar.
    pub fn extended() -> Self {
        Self { order: 80, tol: 1e-90, max_steps: 100_000, series_order: 100 }
    }
}

fn conv<T: Real>(a: &[T], b: &[T], n: usize) -> T {
    (0..=n).fold(T::cst(0.0), |acc, k| acc + a[k] * b[n - k])
}

/// Pushes coefficient `n` of `num / den`.
fn push_div<T: Real>(q: &mut Vec<T>, num: T, den: &[T], n: usize) {
    let s = (1..=n).fold(num, |acc, k| acc - den[k] * q[n - k]);
    q.push(s / den[0]);
}

/// Taylor coefficients of degree `0..=order` of the solution through `y0` (state `(f, tau)`).
pub fn taylor_coefficients<T: Real>(y0: [T; 6], lambda: T, order: usize) -> [Vec<T>; 6] {
    let c = T::cst;
    let k_lambda = c(4.0) * lambda / c(3.0);
    let mut y: [Vec<T>; 6] = std::array::from_fn(|i| vec![y0[i]]);
    let mut s: [Vec<T>; 3] = Default::default();
    let mut fbar = Vec::new();
    let mut p12 = Vec::new();
    let mut vol = Vec::new();
    let mut q: [Vec<T>; 3] = Default::default();
    let mut nsq = Vec::new();
    let mut tbar = Vec::new();
    let mut nf = Vec::new();
    let mut e: [Vec<T>; 3] = Default::default();
    let mut w: [Vec<T>; 3] = Default::default();
    let mut v: [Vec<T>; 3] = Default::default();
    let mut hf: [Vec<T>; 3] = Default::default();
    let mut big_s: [Vec<T>; 3] = Default::default();
    let mut pq: [Vec<T>; 3] = Default::default();
    let mut r: [Vec<T>; 3] = Default::default();
    let mut m: [Vec<T>; 3] = Default::default();
    let mut num: [Vec<T>; 3] = Default::default();
    let mut dtau: [Vec<T>; 3] = Default::default();
    for n in 0..order {
        for i in 0..3 {
            let v_sq = conv(&y[i], &y[i], n);
            s[i].push(v_sq);
        }
        fbar.push(s[0][n] + s[1][n] + s[2][n]);
        p12.push(conv(&y[0], &y[1], n));
        vol.push(conv(&p12, &y[2], n));
        for i in 0..3 {
            let tn = y[3 + i][n];
            push_div(&mut q[i], tn, &s[i], n);
        }
        nsq.push((0..3).fold(c(0.0), |acc, i| acc + conv(&q[i], &q[i], n)));
        tbar.push(y[3][n] + y[4][n] + y[5][n]);
        nf.push(conv(&nsq, &fbar, n));
        for i in 0..3 {
            e[i].push(c(2.0) * s[i][n] - fbar[n]);
            w[i].push(conv(&s[i], &e[i], n));
            let wn = w[i][n];
            push_div(&mut v[i], wn, &vol, n);
            let dsq = y[3 + i][n] - v[i][n];
            push_div(&mut hf[i], dsq, &y[i], n);
            pq[i].push(conv(&vol, &q[i], n));
            big_s[i].push(c(3.0) * s[i][n] - fbar[n] - c(3.0) * pq[i][n] / c(2.0));
            let sn = s[i][n];
            push_div(&mut r[i], sn, &vol, n);
            m[i].push(y[3 + i][n] - c(2.0) * conv(&s[i], &r[i], n));
            let t1 = k_lambda * conv(&s[i], &big_s[i], n);
            let t2 = conv(&tbar, &m[i], n);
            let t3 = conv(&nf, &s[i], n) / c(3.0);
            num[i].push(t1 + t2 + t3);
            let nn = num[i][n];
            push_div(&mut dtau[i], nn, &fbar, n);
        }
        let k1 = c((n + 1) as f64);
        for i in 0..3 {
            let df = hf[i][n] / c(2.0);
            y[i].push(df / k1);
            let dt = dtau[i][n];
            y[3 + i].push(dt / k1);
        }
    }
    y
}

/// Step length keeping the two highest Taylor terms below `tol` relative to the state.
fn step_length<T: Real>(coeffs: &[Vec<T>; 6], tol: f64) -> f64 {
    let order = coeffs[0].len() - 1;
    let mut h = f64::INFINITY;
    for comp in coeffs {
        let scale = comp[0].to_f64().abs().max(1e-3);
        for k in [order - 1, order] {
            let a = comp[k].to_f64().abs();
            if a > 0.0 {
                h = h.min((tol * scale / a).powf(1.0 / k as f64));
            }
        }
    }
    0.5 * h
}

fn horner<T: Real>(c: &[T], h: T) -> T {
    c.iter().rev().fold(T::cst(0.0), |acc, a| acc * h + *a)
}

/// Integrates from `(t0, y0)` and returns the state at each requested time (increasing, all `> t0`).
pub fn taylor_integrate<T: Real>(
    y0: [T; 6],
    t0: f64,
    lambda: T,
    out_times: &[f64],
    settings: &TaylorSettings,
) -> Result<Vec<(f64, [T; 6])>> {
    if settings.order < 4 || !(settings.tol > 0.0) {
        return Err(Error::InvalidConfig("Taylor order must be at least 4 and tolerance positive".into()));
    }
    if out_times.windows(2).any(|w| !(w[1] > w[0])) || out_times.first().is_some_and(|t| !(*t > t0)) {
        return Err(Error::InvalidConfig("output times must increase and exceed the start time".into()));
    }
    let mut out = Vec::with_capacity(out_times.len());
    // Time is carried as an f64 base plus a scalar offset so output times are hit exactly.
    let mut base = t0;
    let mut offset = T::cst(0.0);
    let mut y = y0;
    let mut steps = 0;
    for &target in out_times {
        loop {
            let remaining = T::cst(target) - T::cst(base) - offset;
            let rem = remaining.to_f64();
            if rem <= 0.0 {
                break;
            }
            steps += 1;
            if steps > settings.max_steps {
                return Err(Error::InvalidConfig(format!("Taylor step budget exhausted before t = {target}")));
            }
            let coeffs = taylor_coefficients(y, lambda, settings.order);
            let h = step_length(&coeffs, settings.tol);
            if !(h > 0.0) || !h.is_finite() {
                let t = base + offset.to_f64();
                let f = [y[0].to_f64(), y[1].to_f64(), y[2].to_f64()];
                return Err(Error::SingularEvaluation(format!("Taylor step vanished at t = {t} with f = {f:?}")));
            }
            let step = if h >= rem { remaining } else { T::cst(h) };
            y = std::array::from_fn(|i| horner(&coeffs[i], step));
            if y.iter().any(|x| !x.to_f64().is_finite()) || (0..3).any(|i| !(y[i].to_f64() > 0.0)) {
                return Err(Error::NonPositiveMetric([y[0].to_f64(), y[1].to_f64(), y[2].to_f64()]));
            }
            if h >= rem {
                base = target;
                offset = T::cst(0.0);
                break;
            }
            offset = offset + step;
        }
        out.push((target, y));
    }
    Ok(out)
}

/// Seeds from the closure series in double-double precision and integrates with the Taylor method.
pub fn integrate_closure_precise(
    params: &ClosureParams,
    t0: f64,
    out_times: &[f64],
    settings: &TaylorSettings,
) -> Result<Vec<(f64, PhasePoint)>> {
    integrate_closure_precise_in::<DoubleDouble>(params, t0, out_times, settings)
}

/// As [`integrate_closure_precise`] with 320-bit arithmetic, for orbits whose neighbours separate like `exp(t^2)`.
pub fn integrate_closure_extended(
    params: &ClosureParams,
    t0: f64,
    out_times: &[f64],
    settings: &TaylorSettings,
) -> Result<Vec<(f64, PhasePoint)>> {
    integrate_closure_precise_in::<Mp320>(params, t0, out_times, settings)
}

/// Seeds from the closure series in the scalar type `T` and integrates with the Taylor method.
pub fn integrate_closure_precise_in<T: Real>(
    params: &ClosureParams,
    t0: f64,
    out_times: &[f64],
    settings: &TaylorSettings,
) -> Result<Vec<(f64, PhasePoint)>> {
    if !(t0 > 0.0) {
        return Err(Error::OutOfDomain(format!("seed time must be positive, got {t0}")));
    }
    let (f, tau) = eval_series_in::<T>(params, settings.series_order, T::cst(t0))?;
    let y0 = [f[0], f[1], f[2], tau[0], tau[1], tau[2]];
    // The tail beyond degree 3N/4 bounds the truncation error of the degree-N seed.
    let (fc, tc) = eval_series_in::<T>(params, (3 * settings.series_order / 4).max(3), T::cst(t0))?;
    let coarse = [fc[0], fc[1], fc[2], tc[0], tc[1], tc[2]];
    let tail = (0..6).map(|i| (y0[i] - coarse[i]).to_f64().abs() / y0[i].to_f64().abs().max(1.0)).fold(0.0, f64::max);
    if tail > SEED_TAIL_FACTOR * settings.tol {
        return Err(Error::InvalidConfig(format!(
            "series seed at t0 = {t0} is truncated at {tail:e}; lower t0 or raise the series order"
        )));
    }
    let lambda = T::cst(params.lambda());
    let states = taylor_integrate(y0, t0, lambda, out_times, settings)?;
    states
        .into_iter()
        .map(|(t, y)| {
            let v = y.map(Real::to_f64);
            Ok((t, PhasePoint::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])?))
        })
        .collect()
}
