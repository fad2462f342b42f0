//! Right-hand sides of the soliton ODE systems and their reductions.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::domain::{PhasePoint, PolyPoint, ScaleInvariantPoint};
use crate::error::{Error, Result};

/// Derivatives of the squared metric coefficients and of the torsion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Su3Tangent {
    /// `(f_i^2)'`.
    pub d_f_sq: [f64; 3],
    /// `tau_i'`.
    pub d_tau: [f64; 3],
}

impl Su3Tangent {
    /// Derivative of the flattened state `(f, tau)` at `p`.
    pub fn state_derivative(&self, p: &PhasePoint) -> [f64; 6] {
        let f = p.f();
        [
            self.d_f_sq[0] / (2.0 * f[0]),
            self.d_f_sq[1] / (2.0 * f[1]),
            self.d_f_sq[2] / (2.0 * f[2]),
            self.d_tau[0],
            self.d_tau[1],
            self.d_tau[2],
        ]
    }
}

/// First-order SU(3)-invariant soliton system.
pub fn rhs_su3(p: &PhasePoint, lambda: f64) -> Su3Tangent {
    let fs = p.f_sq();
    let tau = p.tau();
    let fbar = p.f_sq_sum();
    let taubar = p.tau_sum();
    let vol = p.volume();
    let norm_tau_sq: f64 = (0..3).map(|i| tau[i] * tau[i] / (fs[i] * fs[i])).sum();
    let mut d_f_sq = [0.0; 3];
    let mut d_tau = [0.0; 3];
    for i in 0..3 {
        d_f_sq[i] = tau[i] - fs[i] * (2.0 * fs[i] - fbar) / vol;
        let s_i = 3.0 * fs[i] - fbar - 1.5 * vol * tau[i] / fs[i];
        d_tau[i] = (4.0 * lambda / 3.0 * fs[i] * s_i
            + taubar * (tau[i] - 2.0 * fs[i] * fs[i] / vol)
            + norm_tau_sq * fbar * fs[i] / 3.0)
            / fbar;
    }
    Su3Tangent { d_f_sq, d_tau }
}

/// Reduced state on the Sp(2)-invariant locus `f2 = f3`, `tau2 = tau3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sp2Point {
    f1: f64,
    f2: f64,
    tau2: f64,
}

impl Sp2Point {
    /// Validated constructor.
    pub fn new(f1: f64, f2: f64, tau2: f64) -> Result<Self> {
        if !(f1.is_finite() && f2.is_finite() && tau2.is_finite()) {
            return Err(Error::NonFinite);
        }
        if f1 <= 0.0 || f2 <= 0.0 {
            return Err(Error::NonPositiveMetric([f1, f2, f2]));
        }
        Ok(Self { f1, f2, tau2 })
    }

    /// Size of the fibre collapsing on the singular orbit.
    pub fn f1(&self) -> f64 {
        self.f1
    }

    /// Size of the two equal fibres.
    pub fn f2(&self) -> f64 {
        self.f2
    }

    /// Torsion coefficient shared by the two equal fibres.
    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    /// Embedding into the SU(3) phase space.
    pub fn embed(&self) -> PhasePoint {
        let (tau1, _) = recover_sp2_aux(self, 0.0);
        PhasePoint::new([self.f1, self.f2, self.f2], [tau1, self.tau2, self.tau2]).expect("validated on construction")
    }
}

/// Derivatives of the reduced Sp(2) state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sp2Tangent {
    /// `(f1^2)'`.
    pub d_f1_sq: f64,
    /// `(f2^2)'`.
    pub d_f2_sq: f64,
    /// `tau2'`.
    pub d_tau2: f64,
}

/// First-order Sp(2)-invariant soliton system.
pub fn rhs_sp2(q: &Sp2Point, lambda: f64) -> Sp2Tangent {
    let (f1, f2, t2) = (q.f1, q.f2, q.tau2);
    let f1s = f1 * f1;
    let f2s = f2 * f2;
    let r1 = lambda * f1 * f2s - 3.0 * t2;
    let s = f2s - f1s - 1.5 * f1 * t2;
    Sp2Tangent {
        d_f1_sq: 2.0 * f1 - f1s / f2s * (f1 + 2.0 * t2),
        d_f2_sq: f1 + t2,
        d_tau2: 4.0 * r1 * s / (3.0 * f1 * (f1s + 2.0 * f2s)),
    }
}

/// Torsion coefficient `tau1` and vector-field coefficient `u` on the Sp(2) locus.
pub fn recover_sp2_aux(q: &Sp2Point, lambda: f64) -> (f64, f64) {
    let f1s = q.f1 * q.f1;
    let f2s = q.f2 * q.f2;
    let tau1 = -2.0 * f1s * q.tau2 / f2s;
    let u = (2.0 * (f2s - f1s) * q.tau2 - 2.0 * lambda * q.f1 * f2s * f2s) / (f2s * (f1s + 2.0 * f2s));
    (tau1, u)
}

/// Derivatives of the scale-invariant variables with respect to `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleNormalTangent {
    /// `g'`.
    pub d_g: f64,
    /// Normalised metric derivatives.
    pub d_scr_f: [f64; 3],
    /// Normalised torsion derivatives.
    pub d_scr_t: [f64; 3],
}

/// Scale-invariant field multiplied by `g`, with `g2_lambda = g^2 lambda`.
///
/// With `g2_lambda = 0` this is the steady system in the variable `s`, `dt/ds = g`.
pub fn scale_normal_field<T: Real>(g2_lambda: T, scr_f: [T; 3], scr_t: [T; 3]) -> ([T; 3], [T; 3]) {
    let sq = scr_f.map(|x| x * x);
    let fbar = sq[0] + sq[1] + sq[2];
    let tbar = scr_t[0] + scr_t[1] + scr_t[2];
    let norm_t = scr_t[0] * scr_t[0] / (sq[0] * sq[0])
        + scr_t[1] * scr_t[1] / (sq[1] * sq[1])
        + scr_t[2] * scr_t[2] / (sq[2] * sq[2]);
    let third = T::cst(1.0 / 3.0);
    let mut d_f = scr_f;
    let mut d_t = scr_t;
    for i in 0..3 {
        let s_i = T::cst(3.0) * sq[i] - fbar - T::cst(1.5) * scr_t[i] / sq[i];
        d_f[i] = -third * scr_f[i] * s_i;
        d_t[i] = T::cst(4.0 / 3.0) * g2_lambda * sq[i] * s_i / fbar
            + tbar / fbar * (scr_t[i] - T::cst(2.0) * sq[i] * sq[i])
            + third * norm_t * sq[i]
            - T::cst(1.0 / 6.0) * scr_t[i] * fbar;
    }
    (d_f, d_t)
}

/// Scale-normalised system in the `t` parametrisation.
pub fn rhs_scale_normalized(sp: &ScaleInvariantPoint, lambda: f64) -> ScaleNormalTangent {
    let g = sp.g;
    let (d_f, d_t) = scale_normal_field(g * g * lambda, sp.scr_f, sp.scr_t);
    let fbar: f64 = sp.scr_f.iter().map(|x| x * x).sum();
    ScaleNormalTangent { d_g: fbar / 6.0, d_scr_f: d_f.map(|x| x / g), d_scr_t: d_t.map(|x| x / g) }
}

/// Conserved quantities `tau_i - u f_i^2 = (0, c, -c)` of smoothly-closing steady solitons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyConstants {
    /// Initial torsion parameter.
    pub c: f64,
}

impl SteadyConstants {
    /// The triple `(0, c, -c)`.
    pub fn c_vec(&self) -> [f64; 3] {
        [0.0, self.c, -self.c]
    }
}

/// Vector-field coefficient of a steady soliton as a function of the metric.
pub fn steady_u(f: [f64; 3], k: SteadyConstants) -> f64 {
    k.c / 3.0 * (1.0 / (f[2] * f[2]) - 1.0 / (f[1] * f[1]))
}

/// Torsion coefficients of a steady soliton as functions of the metric.
pub fn steady_tau(f: [f64; 3], k: SteadyConstants) -> [f64; 3] {
    let u = steady_u(f, k);
    let cv = k.c_vec();
    [0, 1, 2].map(|i| u * f[i] * f[i] + cv[i])
}

/// Reduced steady system: `(ln f_i^2)'`.
pub fn rhs_steady_f(f: [f64; 3], k: SteadyConstants) -> [f64; 3] {
    let u = steady_u(f, k);
    let cv = k.c_vec();
    let fs = f.map(|x| x * x);
    let fbar = fs[0] + fs[1] + fs[2];
    let vol = f[0] * f[1] * f[2];
    [0, 1, 2].map(|i| u + cv[i] / fs[i] + (fbar - 2.0 * fs[i]) / vol)
}

/// Generic form of the steady polynomial field.
pub fn poly_field<T: Real>(big_f: [T; 3], c: T) -> [T; 3] {
    let [a, b, d] = big_f;
    let k = c / T::cst(3.0);
    let h = T::cst(0.5);
    let three = T::cst(3.0);
    let two = T::cst(2.0);
    [
        k * a * a * (b - d) + h * a * (b + d - three * a),
        k * a * b * (b + two * d) + h * b * (a + d - three * b),
        -k * a * d * (two * b + d) + h * d * (a + b - three * d),
    ]
}

/// Steady polynomial system in the coordinates `F_i`.
pub fn rhs_steady_poly(q: &PolyPoint, c: f64) -> [f64; 3] {
    poly_field(q.big_f, c)
}

/// Steady system in the variables `(Lambda, D, F1)` at `c = 3`; returns `(D', Lambda', F1')`.
pub fn rhs_lambda_d(lambda_ratio: f64, d_ratio: f64, f1: f64) -> Result<[f64; 3]> {
    if f1 == 0.0 || !f1.is_finite() {
        return Err(Error::SingularEvaluation(format!("F1 = {f1}")));
    }
    let (l, d) = (lambda_ratio, d_ratio);
    Ok([
        -0.5 * f1 * d * (d - 1.0) + 1.5 * l / f1 * (l - d),
        f1 * ((l - 1.0) * d * d - l * (d - 1.0) * (d - 1.0)),
        f1 * f1 * (d - 1.5) + 0.5 * l,
    ])
}

/// Maximal residuals of the mixed-order system on a sample window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedResidual {
    /// `max |(tau_i - u f_i^2)' - lambda f_i^2|`.
    pub torsion: [f64; 3],
    /// `max |2 (f1 f2 f3)' - fbar|`.
    pub closure: f64,
}

impl MixedResidual {
    /// Largest of all residuals.
    pub fn max(&self) -> f64 {
        self.torsion.iter().fold(self.closure, |m, x| m.max(*x))
    }
}

/// Residuals of the original mixed-order formulation on uniformly spaced samples.
///
/// Derivatives use the central five-point stencil at every interior sample.
pub fn rhs_mixed_order_residual(ts: &[f64], points: &[PhasePoint], us: &[f64], lambda: f64) -> Result<MixedResidual> {
    let n = ts.len();
    if n < 5 || points.len() != n || us.len() != n {
        return Err(Error::InsufficientData(format!(
            "need at least 5 matching samples, got {n}/{}/{}",
            points.len(),
            us.len()
        )));
    }
    let h = ts[1] - ts[0];
    let uniform = ts.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    if !(h > 0.0) || !uniform {
        return Err(Error::InsufficientData("samples must be uniformly spaced and increasing".into()));
    }
    let conserved: Vec<[f64; 3]> = points
        .iter()
        .zip(us)
        .map(|(p, &u)| {
            let (f, tau) = (p.f_sq(), p.tau());
            [tau[0] - u * f[0], tau[1] - u * f[1], tau[2] - u * f[2]]
        })
        .collect();
    let vols: Vec<f64> = points.iter().map(PhasePoint::volume).collect();
    let stencil =
        |v: &dyn Fn(usize) -> f64, k: usize| (v(k - 2) - 8.0 * v(k - 1) + 8.0 * v(k + 1) - v(k + 2)) / (12.0 * h);
    let mut out = MixedResidual { torsion: [0.0; 3], closure: 0.0 };
    for k in 2..n - 2 {
        let fs = points[k].f_sq();
        for i in 0..3 {
            let d = stencil(&|j| conserved[j][i], k);
            out.torsion[i] = out.torsion[i].max((d - lambda * fs[i]).abs());
        }
        let dv = stencil(&|j| vols[j], k);
        out.closure = out.closure.max((2.0 * dv - points[k].f_sq_sum()).abs());
    }
    Ok(out)
}
