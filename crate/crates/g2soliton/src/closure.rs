//! Smoothly-closing solutions as power series around the singular orbit.

use nalgebra::Matrix5;

use crate::autodiff::Real;
use serde::{Deserialize, Serialize};

use crate::domain::{constraint_residual, ClosureParams, PhasePoint};
use crate::error::{Error, Result};
use crate::systems::rhs_su3;

/// Default truncation degree.
pub const DEFAULT_ORDER: usize = 20;
/// Default bound on the estimated truncation error at the seed time.
pub const DEFAULT_SEED_ERROR: f64 = 1e-12;
/// Closed-form entries smaller than this fraction of their component's largest entry count as cancelled.
pub const CANCELLATION_RATIO: f64 = 1e-8;
/// Default tolerance on the constraint residual of a seed point.
pub const SEED_TOLERANCE: f64 = 1e-10;

/// Truncated power series `sum_k a_k t^k` with a fixed number of coefficients.
#[derive(Debug, Clone, PartialEq)]
struct Ps<T>(Vec<T>);

impl<T: Real> Ps<T> {
    fn zero(len: usize) -> Self {
        Ps(vec![T::cst(0.0); len])
    }

    fn constant(x: T, len: usize) -> Self {
        let mut p = Self::zero(len);
        p.0[0] = x;
        p
    }

    /// The monomial `x t^k`.
    fn monomial(x: T, k: usize, len: usize) -> Self {
        let mut p = Self::zero(len);
        if k < len {
            p.0[k] = x;
        }
        p
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn add(&self, o: &Self) -> Self {
        Ps(self.0.iter().zip(&o.0).map(|(a, b)| *a + *b).collect())
    }

    fn sub(&self, o: &Self) -> Self {
        Ps(self.0.iter().zip(&o.0).map(|(a, b)| *a - *b).collect())
    }

    fn scale(&self, x: T) -> Self {
        Ps(self.0.iter().map(|a| *a * x).collect())
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.len();
        let mut out = vec![T::cst(0.0); n];
        for (i, a) in self.0.iter().enumerate() {
            if a.to_f64() == 0.0 {
                continue;
            }
            for (j, b) in o.0.iter().take(n - i).enumerate() {
                out[i + j] = out[i + j] + *a * *b;
            }
        }
        Ps(out)
    }

    /// Quotient by a series with nonzero constant term.
    fn div(&self, o: &Self) -> Self {
        let n = self.len();
        let mut q = vec![T::cst(0.0); n];
        for k in 0..n {
            let mut s = self.0[k];
            for j in 1..=k {
                s = s - o.0[j] * q[k - j];
            }
            q[k] = s / o.0[0];
        }
        Ps(q)
    }

    /// Multiplication by `t^k`.
    fn shift_up(&self, k: usize) -> Self {
        let n = self.len();
        let mut out = vec![T::cst(0.0); n];
        for i in 0..n.saturating_sub(k) {
            out[i + k] = self.0[i];
        }
        Ps(out)
    }

    /// Division by `t^k`, dropping the lowest `k` coefficients.
    fn shift_down(&self, k: usize) -> Self {
        let n = self.len();
        let mut out = vec![T::cst(0.0); n];
        for i in k..n {
            out[i - k] = self.0[i];
        }
        Ps(out)
    }
}

/// Closure data embedded in the working scalar type.
#[derive(Debug, Clone, Copy)]
struct Data<T> {
    lambda: T,
    b: T,
    c: T,
}

impl<T: Real> Data<T> {
    fn new(params: &ClosureParams) -> Self {
        Self { lambda: T::cst(params.lambda()), b: T::cst(params.b()), c: T::cst(params.c()) }
    }

    fn n(x: f64) -> T {
        T::cst(x)
    }
}

/// Hatted unknowns `(f1h, f2h, f3h, tau2h, tau3h)` as series.
type Hatted<T> = [Ps<T>; 5];

/// Physical series assembled from the hatted unknowns.
struct Physical<T> {
    a: Ps<T>,
    f1: Ps<T>,
    f2: Ps<T>,
    f3: Ps<T>,
    tau2: Ps<T>,
    tau3: Ps<T>,
    sigma: Ps<T>,
}

fn physical<T: Real>(d: &Data<T>, y: &Hatted<T>, len: usize) -> Physical<T> {
    let one = Ps::constant(Data::<T>::n(1.0), len);
    let a = one.add(&y[0].shift_up(2));
    let f1 = a.shift_up(1);
    let f2 = Ps::constant(d.b, len).add(&y[1].shift_up(1));
    let f3 = Ps::constant(d.b, len).add(&y[2].shift_up(1));
    let tau2 = Ps::constant(d.c, len).add(&y[3].shift_up(1));
    let tau3 = Ps::constant(-d.c, len).add(&y[4].shift_up(1));
    let sigma = tau2.div(&f2.mul(&f2)).add(&tau3.div(&f3.mul(&f3)));
    Physical { a, f1, f2, f3, tau2, tau3, sigma }
}

/// Right-hand side of `t y' = M(t, y)` for the hatted unknowns.
fn hatted_rhs<T: Real>(d: &Data<T>, y: &Hatted<T>, len: usize) -> Hatted<T> {
    let n = Data::<T>::n;
    let ph = physical(d, y, len);
    let Physical { a, f1: _, f2, f3, tau2, tau3, sigma } = &ph;
    let t1 = Ps::monomial(n(1.0), 1, len);
    let a2 = a.mul(a);
    let f2s = f2.mul(f2);
    let f3s = f3.mul(f3);
    let fbar = a2.shift_up(2).add(&f2s).add(&f3s);
    let q = a.mul(f2).mul(f3);
    // f1' = -t a sigma / 2 - a (2 t^2 a^2 - fbar) / (2 Q)
    let df1 = a
        .mul(sigma)
        .shift_up(1)
        .scale(n(-0.5))
        .sub(&a.mul(&a2.shift_up(2).scale(n(2.0)).sub(&fbar)).div(&q.scale(n(2.0))));
    let num1 = df1.sub(&Ps::constant(n(1.0), len)).sub(&y[0].shift_up(2).scale(n(3.0)));
    let r0 = num1.shift_down(2);
    // (2 f_i^2 - fbar) / t for the two equal-size fibres.
    let diff = y[1].sub(&y[2]).mul(&f2.add(f3));
    let w2 = diff.sub(&a2.shift_up(1));
    let w3 = diff.scale(n(-1.0)).sub(&a2.shift_up(1));
    let df2 = tau2.sub(&f2s.mul(&w2).div(&q)).div(&f2.scale(n(2.0)));
    let df3 = tau3.sub(&f3s.mul(&w3).div(&q)).div(&f3.scale(n(2.0)));
    let r1 = df2.sub(&y[1]);
    let r2 = df3.sub(&y[2]);
    // taubar / t, |tau|^2 and the torsion derivatives.
    let tbar_t = y[3].add(&y[4]).sub(&a2.mul(sigma).shift_up(1));
    let norm = sigma.mul(sigma).add(&tau2.mul(tau2).div(&f2s.mul(&f2s))).add(&tau3.mul(tau3).div(&f3s.mul(&f3s)));
    let pq = t1.mul(&q);
    let k_lambda = n(4.0) * d.lambda / n(3.0);
    let dtau = |fs: &Ps<T>, tau: &Ps<T>| -> Ps<T> {
        let s_i = fs.scale(n(3.0)).sub(&fbar).sub(&pq.mul(tau).scale(n(3.0)).div(&fs.scale(n(2.0))));
        let first = fs.mul(&s_i).scale(k_lambda);
        let second = tbar_t.mul(&tau.shift_up(1).sub(&fs.mul(fs).scale(n(2.0)).div(&q)));
        let third = norm.mul(&fbar).mul(fs).div(&Ps::constant(n(3.0), len));
        first.add(&second).add(&third).div(&fbar)
    };
    let r3 = dtau(&f2s, tau2).sub(&y[3]);
    let r4 = dtau(&f3s, tau3).sub(&y[4]);
    [r0, r1, r2, r3, r4]
}

fn initial_hatted_in<T: Real>(d: &Data<T>) -> [T; 5] {
    let n = Data::<T>::n;
    let (l, b, c) = (d.lambda, d.b, d.c);
    let b2 = b * b;
    let s = n(2.0) * (l * b2 + c * c / b2) / n(9.0);
    [
        -n(1.0) / (n(6.0) * b2) - n(2.0) * l / n(27.0) + c * c / (n(18.0) * b2 * b2),
        c / (n(6.0) * b),
        -c / (n(6.0) * b),
        s,
        s,
    ]
}

/// Leading hatted data on the singular orbit.
pub fn initial_hatted(params: &ClosureParams) -> [f64; 5] {
    initial_hatted_in(&Data::<f64>::new(params))
}

/// Linearisation of the singular part at the initial data, in the hatted variables.
pub fn singular_linearisation(params: &ClosureParams) -> Matrix5<f64> {
    let (b, c) = (params.b(), params.c());
    let k = 4.0 * c / (3.0 * b.powi(3));
    let m = 1.0 / (2.0 * b * b);
    Matrix5::new(
        -3.0, k, -k, -m, -m, //
        0.0, -2.0, 1.0, 0.0, 0.0, //
        0.0, 1.0, -2.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -2.0, -1.0, //
        0.0, 0.0, 0.0, -1.0, -2.0,
    )
}

/// Linearisation of the singular part measured by central differences of the hatted field.
pub fn measured_linearisation(params: &ClosureParams, step: f64) -> Matrix5<f64> {
    let d = Data::<f64>::new(params);
    let y0 = initial_hatted(params);
    let eval = |y: [f64; 5]| -> [f64; 5] {
        let hy: Hatted<f64> = y.map(|x| Ps::constant(x, 3));
        hatted_rhs(&d, &hy, 3).map(|p| p.0[0])
    };
    let mut m = Matrix5::zeros();
    for j in 0..5 {
        let mut yp = y0;
        let mut ym = y0;
        yp[j] += step;
        ym[j] -= step;
        let (fp, fm) = (eval(yp), eval(ym));
        for i in 0..5 {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    m
}

/// Solves `(n I - A) x = g` for the singular linearisation `A` in closed form.
fn solve_order<T: Real>(d: &Data<T>, n: usize, g: [T; 5]) -> [T; 5] {
    let c = Data::<T>::n;
    let nf = c(n as f64);
    let k = c(4.0) * d.c / (c(3.0) * d.b * d.b * d.b);
    let m = c(1.0) / (c(2.0) * d.b * d.b);
    let s12 = (g[1] + g[2]) / (nf + c(1.0));
    let d12 = (g[1] - g[2]) / (nf + c(3.0));
    let s34 = (g[3] + g[4]) / (nf + c(3.0));
    let d34 = (g[3] - g[4]) / (nf + c(1.0));
    let x0 = (g[0] + k * d12 - m * s34) / (nf + c(3.0));
    let h = c(0.5);
    [x0, h * (s12 + d12), h * (s12 - d12), h * (s34 + d34), h * (s34 - d34)]
}

/// Series coefficients `(f1, f2, f3, tau1, tau2, tau3, taubar, u)` and hatted coefficients in any scalar type.
fn series_coefficients<T: Real>(params: &ClosureParams, order: usize) -> ([Vec<T>; 8], [Vec<T>; 5]) {
    let d = Data::<T>::new(params);
    let len = order + 3;
    let y0 = initial_hatted_in(&d);
    let mut y: Hatted<T> = std::array::from_fn(|k| Ps::constant(y0[k], len));
    for n in 1..order {
        let g = hatted_rhs(&d, &y, len);
        let sol = solve_order(&d, n, std::array::from_fn(|i| g[i].0[n]));
        for i in 0..5 {
            y[i].0[n] = sol[i];
        }
    }
    for p in y.iter_mut() {
        for k in order..len {
            p.0[k] = T::cst(0.0);
        }
    }
    let ph = physical(&d, &y, len);
    let tau1 = ph.f1.mul(&ph.f1).mul(&ph.sigma).scale(T::cst(-1.0));
    let fbar = ph.f1.mul(&ph.f1).add(&ph.f2.mul(&ph.f2)).add(&ph.f3.mul(&ph.f3));
    let taubar = tau1.add(&ph.tau2).add(&ph.tau3);
    let vol = ph.f1.mul(&ph.f2).mul(&ph.f3);
    let u = taubar.sub(&vol.scale(T::cst(2.0) * d.lambda)).div(&fbar);
    let trunc = |p: &Ps<T>| p.0[..=order].to_vec();
    (
        [
            trunc(&ph.f1),
            trunc(&ph.f2),
            trunc(&ph.f3),
            trunc(&tau1),
            trunc(&ph.tau2),
            trunc(&ph.tau3),
            trunc(&taubar),
            trunc(&u),
        ],
        y.map(|p| p.0[..order].to_vec()),
    )
}

/// Metric and torsion of the smoothly-closing solution at `t`, evaluated in the scalar type `T`.
pub fn eval_series_in<T: Real>(params: &ClosureParams, order: usize, t: T) -> Result<([T; 3], [T; 3])> {
    if order < 3 {
        return Err(Error::InvalidParams(format!("series order must be at least 3, got {order}")));
    }
    let (coeffs, _) = series_coefficients::<T>(params, order);
    let horner = |c: &[T]| c.iter().rev().fold(T::cst(0.0), |acc, a| acc * t + *a);
    let v: [T; 6] = std::array::from_fn(|k| horner(&coeffs[k]));
    Ok(([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

/// Series component names in storage order.
pub const COMPONENTS: [&str; 8] = ["f1", "f2", "f3", "tau1", "tau2", "tau3", "taubar", "u"];

/// Truncated series of a smoothly-closing solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSolution {
    /// Truncation degree.
    pub order: usize,
    /// Closure data.
    pub params: ClosureParams,
    /// Coefficients of `f1, f2, f3, tau1, tau2, tau3, taubar, u`, degrees `0..=order`.
    pub coefficients: [Vec<f64>; 8],
    /// Hatted coefficients `(f1h, f2h, f3h, tau2h, tau3h)`.
    pub hatted: [Vec<f64>; 5],
}

impl SeriesSolution {
    /// Coefficient of `t^k` in the named component.
    pub fn coefficient(&self, component: usize, k: usize) -> f64 {
        self.coefficients[component].get(k).copied().unwrap_or(0.0)
    }

    fn eval_poly(c: &[f64], t: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for &a in c.iter().rev() {
            d = d * t + v;
            v = v * t + a;
        }
        (v, d)
    }

    /// Value and derivative of component `k` at `t`.
    pub fn eval_component(&self, component: usize, t: f64) -> (f64, f64) {
        Self::eval_poly(&self.coefficients[component], t)
    }

    /// Metric and torsion values at `t` (may include `f1 <= 0` at `t = 0`).
    pub fn eval_raw(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let v: [f64; 6] = std::array::from_fn(|k| self.eval_component(k, t).0);
        ([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    /// Magnitude of the highest retained coefficient among the six state components.
    pub fn top_coefficient(&self) -> f64 {
        (0..6)
            .map(|k| self.coefficients[k][self.order].abs().max(self.coefficients[k][self.order - 1].abs()))
            .fold(0.0, f64::max)
    }

    /// Seed time with estimated truncation error below `err`, falling back to `0.05 b`.
    pub fn default_seed_time(&self, err: f64) -> f64 {
        let b = self.params.b();
        let top = self.top_coefficient();
        let t = (err / top).powf(1.0 / (self.order as f64 - 1.0));
        if t.is_finite() && t > 0.0 {
            t.min(0.5 * b)
        } else {
            0.05 * b
        }
    }

    /// JSON dump `{params, order, coefficients: {name: [[degree, value], ...]}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut comps = serde_json::Map::new();
        for (name, c) in COMPONENTS.iter().zip(&self.coefficients) {
            let pairs: Vec<serde_json::Value> =
                c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| serde_json::json!([k, v])).collect();
            comps.insert((*name).to_string(), serde_json::Value::Array(pairs));
        }
        serde_json::json!({
            "params": {
                "lambda": self.params.lambda(),
                "b": self.params.b(),
                "c": self.params.c(),
                "group": self.params.group(),
            },
            "order": self.order,
            "coefficients": comps,
        })
    }
}

/// Builds the degree-`order` truncation of the smoothly-closing formal solution.
pub fn build_series(params: &ClosureParams, order: usize) -> Result<SeriesSolution> {
    if order < 3 {
        return Err(Error::InvalidParams(format!("series order must be at least 3, got {order}")));
    }
    let (coefficients, hatted) = series_coefficients::<f64>(params, order);
    Ok(SeriesSolution { order, params: *params, coefficients, hatted })
}

/// Residual of the hatted recursion at every order below the truncation degree.
pub fn recursion_defect(series: &SeriesSolution) -> f64 {
    let d = Data::<f64>::new(&series.params);
    let len = series.order + 3;
    let y: Hatted<f64> = std::array::from_fn(|k| {
        let mut p = Ps::zero(len);
        p.0[..series.hatted[k].len()].copy_from_slice(&series.hatted[k]);
        p
    });
    let g = hatted_rhs(&d, &y, len);
    let mut worst = 0.0f64;
    for n in 0..series.order {
        for i in 0..5 {
            let lhs = n as f64 * y[i].0[n];
            worst = worst.max((lhs - g[i].0[n]).abs());
        }
    }
    worst
}

/// Evaluates the series at `t0` and validates the resulting seed.
pub fn seed_point(series: &SeriesSolution, t0: f64) -> Result<PhasePoint> {
    seed_point_with_tolerance(series, t0, SEED_TOLERANCE)
}

/// As [`seed_point`] with an explicit constraint tolerance.
pub fn seed_point_with_tolerance(series: &SeriesSolution, t0: f64, tolerance: f64) -> Result<PhasePoint> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::OutOfDomain(format!("seed time must be positive, got {t0}")));
    }
    let (f, tau) = series.eval_raw(t0);
    let p = PhasePoint::new(f, tau)?;
    let residual = constraint_residual(&p).abs();
    if !(residual <= tolerance) {
        return Err(Error::SeedTooFar { t0, residual, tolerance });
    }
    Ok(p)
}

/// Maximal first-order residual of the truncated series and its fitted order in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesResidual {
    /// Largest residual over the samples.
    pub max_residual: f64,
    /// Least-squares slope of log residual against log t.
    pub fitted_order: f64,
}

/// Substitutes the truncated series into the first-order system.
pub fn series_residual(series: &SeriesSolution, t_samples: &[f64]) -> Result<SeriesResidual> {
    if t_samples.len() < 2 {
        return Err(Error::InsufficientData("need at least two sample times".into()));
    }
    let mut logs = Vec::with_capacity(t_samples.len());
    let mut worst = 0.0f64;
    for &t in t_samples {
        let vals: [(f64, f64); 6] = std::array::from_fn(|k| series.eval_component(k, t));
        let p = PhasePoint::new([vals[0].0, vals[1].0, vals[2].0], [vals[3].0, vals[4].0, vals[5].0])?;
        let r = rhs_su3(&p, series.params.lambda());
        let mut e = 0.0f64;
        for i in 0..3 {
            let d_fsq = 2.0 * vals[i].0 * vals[i].1;
            e = e.max((d_fsq - r.d_f_sq[i]).abs()).max((vals[3 + i].1 - r.d_tau[i]).abs());
        }
        worst = worst.max(e);
        logs.push((t.ln(), e.max(f64::MIN_POSITIVE).ln()));
    }
    Ok(SeriesResidual { max_residual: worst, fitted_order: crate::analysis::slope(&logs) })
}

/// Low-order closed-form coefficients of the smoothly-closing solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixTable {
    /// `(degree, value)` pairs per component, in [`COMPONENTS`] order.
    pub entries: [Vec<(usize, f64)>; 8],
}

/// Closed-form low-order coefficients for general `(lambda, b, c)`, plus the extra steady terms when `lambda = 0`.
pub fn appendix_oracle(params: &ClosureParams) -> AppendixTable {
    let (l, b, c) = (params.lambda(), params.b(), params.c());
    let (b2, c2) = (b * b, c * c);
    let (b4, c4) = (b2 * b2, c2 * c2);
    let (b6, b8) = (b4 * b2, b4 * b4);
    let l2 = l * l;
    let f1_3 = -(4.0 * l * b4 + 9.0 * b2 - 3.0 * c2) / (54.0 * b4);
    let f1_5 = (464.0 * b8 * l2 + 2844.0 * b6 * l - 972.0 * b4 * c2 * l + 4050.0 * b4 - 2322.0 * b2 * c2 + 321.0 * c4)
        / (48600.0 * b8);
    let f_1 = c / (6.0 * b);
    let f_2 = (4.0 * l * b4 + 18.0 * b2 - c2) / (72.0 * b.powi(3));
    let f_3 = -c * (152.0 * l * b4 + 126.0 * b2 - 63.0 * c2) / (6480.0 * b.powi(5));
    let tau1_3 = -2.0 * (2.0 * l * b4 - c2) / (9.0 * b4);
    let tau1_5 =
        2.0 * (26.0 * b8 * l2 + 81.0 * b6 * l - 40.0 * b4 * c2 * l - 54.0 * b2 * c2 + 12.0 * c4) / (405.0 * b8);
    let tau_1 = 2.0 * (l * b4 + c2) / (9.0 * b2);
    let tau_2 = -c * (5.0 * l * b4 - 4.0 * c2) / (54.0 * b4);
    let tau_3 = -(8.0 * b8 * l2 + 18.0 * b6 * l + 92.0 * b4 * c2 * l + 99.0 * b2 * c2 - 42.0 * c4) / (1215.0 * b6);
    let tbar_1 = 4.0 * (l * b4 + c2) / (9.0 * b2);
    let tbar_3 =
        -4.0 * (4.0 * b8 * l2 + 144.0 * b6 * l + 46.0 * b4 * c2 * l - 18.0 * b2 * c2 - 21.0 * c4) / (1215.0 * b6);
    let u_1 = -(7.0 * l * b4 - 2.0 * c2) / (9.0 * b4);
    let u_3 =
        2.0 * (26.0 * b8 * l2 + 126.0 * b6 * l - 61.0 * b4 * c2 * l - 117.0 * b2 * c2 + 21.0 * c4) / (1215.0 * b8);
    let mut entries: [Vec<(usize, f64)>; 8] = [
        vec![(1, 1.0), (3, f1_3), (5, f1_5)],
        vec![(0, b), (1, f_1), (2, f_2), (3, f_3)],
        vec![(0, b), (1, -f_1), (2, f_2), (3, -f_3)],
        vec![(3, tau1_3), (5, tau1_5)],
        vec![(0, c), (1, tau_1), (2, tau_2), (3, tau_3)],
        vec![(0, -c), (1, tau_1), (2, -tau_2), (3, tau_3)],
        vec![(1, tbar_1), (3, tbar_3)],
        vec![(1, u_1), (3, u_3)],
    ];
    if l == 0.0 {
        let f_4 = (-2700.0 * b4 + 636.0 * b2 * c2 + 7.0 * c4) / (51840.0 * b.powi(7));
        let tau_4 = -2.0 * c * c2 * (11.0 * b2 - 3.0 * c2) / (405.0 * b8);
        entries[1].push((4, f_4));
        entries[2].push((4, f_4));
        entries[4].push((4, tau_4));
        entries[5].push((4, -tau_4));
    }
    AppendixTable { entries }
}

/// Steady-case closed forms exactly as specialised separately, for cross-checking the general table at `lambda = 0`.
pub fn appendix_steady_oracle(b: f64, c: f64) -> AppendixTable {
    let (b2, c2) = (b * b, c * c);
    let (b4, c4) = (b2 * b2, c2 * c2);
    let (b6, b8) = (b4 * b2, b4 * b4);
    let f_1 = c / (6.0 * b);
    let f_2 = (18.0 * b2 - c2) / (72.0 * b.powi(3));
    let f_3 = -7.0 * c * (2.0 * b2 - c2) / (720.0 * b.powi(5));
    let f_4 = (-2700.0 * b4 + 636.0 * b2 * c2 + 7.0 * c4) / (51840.0 * b.powi(7));
    let tau_1 = 2.0 * c2 / (9.0 * b2);
    let tau_2 = 2.0 * c * c2 / (27.0 * b4);
    let tau_3 = c2 * (-33.0 * b2 + 14.0 * c2) / (405.0 * b6);
    let tau_4 = -2.0 * c * c2 * (11.0 * b2 - 3.0 * c2) / (405.0 * b8);
    AppendixTable {
        entries: [
            vec![
                (1, 1.0),
                (3, -(3.0 * b2 - c2) / (18.0 * b4)),
                (5, (1350.0 * b4 - 774.0 * b2 * c2 + 107.0 * c4) / (16200.0 * b8)),
            ],
            vec![(0, b), (1, f_1), (2, f_2), (3, f_3), (4, f_4)],
            vec![(0, b), (1, -f_1), (2, f_2), (3, -f_3), (4, f_4)],
            vec![(3, 2.0 * c2 / (9.0 * b4)), (5, 4.0 * c2 * (-9.0 * b2 + 2.0 * c2) / (135.0 * b8))],
            vec![(0, c), (1, tau_1), (2, tau_2), (3, tau_3), (4, tau_4)],
            vec![(0, -c), (1, tau_1), (2, -tau_2), (3, tau_3), (4, -tau_4)],
            vec![(1, 4.0 * c2 / (9.0 * b2)), (3, 4.0 * c2 * (6.0 * b2 + 7.0 * c2) / (405.0 * b6))],
            vec![(1, 2.0 * c2 / (9.0 * b4)), (3, 2.0 * c2 * (-39.0 * b2 + 7.0 * c2) / (405.0 * b8))],
        ],
    }
}

/// One disagreement between generated and closed-form coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMismatch {
    /// Component name.
    pub component: String,
    /// Degree.
    pub degree: usize,
    /// Generated value.
    pub series: f64,
    /// Closed-form value.
    pub closed_form: f64,
    /// Relative difference.
    pub relative_error: f64,
}

/// Largest relative coefficient error and any entries exceeding `tol`.
pub fn compare_with_table(series: &SeriesSolution, table: &AppendixTable, tol: f64) -> (f64, Vec<CoefficientMismatch>) {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (k, entries) in table.entries.iter().enumerate() {
        let component_scale = entries.iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
        for &(deg, val) in entries {
            let s = series.coefficient(k, deg);
            // Entries that cancel to zero are compared against the component's largest entry.
            let floor = if val.abs() < CANCELLATION_RATIO * component_scale { component_scale } else { 0.0 };
            let scale = val.abs().max(s.abs()).max(floor).max(1e-300);
            let rel = if s == val { 0.0 } else { (s - val).abs() / scale };
            worst = worst.max(rel);
            if rel > tol {
                bad.push(CoefficientMismatch {
                    component: COMPONENTS[k].to_string(),
                    degree: deg,
                    series: s,
                    closed_form: val,
                    relative_error: rel,
                });
            }
        }
    }
    (worst, bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn explicit_steady_f1_series() {
        let p = ClosureParams::su3(0.0, 2f64.sqrt(), 3.0).unwrap();
        let s = build_series(&p, 12).unwrap();
        let expect = [(1, 1.0), (3, 1.0 / 24.0), (5, 1.0 / 1920.0), (7, 1.0 / 322560.0), (9, 1.0 / 92897280.0)];
        for (k, v) in expect {
            assert_relative_eq!(s.coefficient(0, k), v, max_relative = 1e-12);
        }
        assert_relative_eq!(s.coefficient(1, 2), 3.0 / (16.0 * 2f64.sqrt()), max_relative = 1e-13);
    }

    #[test]
    fn torsion_free_f1_series() {
        let p = ClosureParams::su3(0.0, 1.0, 0.0).unwrap();
        let s = build_series(&p, 10).unwrap();
        assert_relative_eq!(s.coefficient(0, 3), -1.0 / 6.0, max_relative = 1e-13);
        assert_relative_eq!(s.coefficient(0, 5), 1.0 / 12.0, max_relative = 1e-13);
    }

    #[test]
    fn linearisation_matches_measurement() {
        for (l, b, c) in [(0.0, 1.0, 0.0), (-0.7, 1.3, 2.1), (1.2, 0.6, -0.4)] {
            let p = ClosureParams::su3(l, b, c).unwrap();
            let d = singular_linearisation(&p) - measured_linearisation(&p, 1e-5);
            assert!(d.amax() < 1e-7, "{d}");
        }
    }

    #[test]
    fn initial_data_is_consistent() {
        let p = ClosureParams::su3(-0.3, 1.1, 0.8).unwrap();
        let s = build_series(&p, 14).unwrap();
        assert!(recursion_defect(&s) < 1e-12, "{}", recursion_defect(&s));
    }

    #[test]
    fn seed_rejects_zero() {
        let p = ClosureParams::su3(0.0, 1.0, 1.0).unwrap();
        let s = build_series(&p, 8).unwrap();
        assert!(seed_point(&s, 0.0).is_err());
        assert!(build_series(&p, 2).is_err());
    }
}
