//! Closed-form solutions used as exact reference curves.

use serde::{Deserialize, Serialize};

use crate::domain::{constraint_residual, PhasePoint};
use crate::error::{Error, Result};
use crate::systems::{rhs_mixed_order_residual, rhs_su3, Sp2Point};

/// A closed-form solution evaluated at one parameter value, with exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    /// Metric coefficients.
    pub f: [f64; 3],
    /// Torsion coefficients.
    pub tau: [f64; 3],
    /// Vector-field coefficient.
    pub u: f64,
    /// Dilation constant.
    pub lambda: f64,
    /// `d(f_i^2)/dt`.
    pub d_f_sq: [f64; 3],
    /// `d tau_i / dt`.
    pub d_tau: [f64; 3],
    /// True at the singular orbit where `f1 = 0`.
    pub singular: bool,
}

impl OracleValue {
    /// Phase point; fails on the singular orbit.
    pub fn point(&self) -> Result<PhasePoint> {
        PhasePoint::new(self.f, self.tau)
    }
}

/// The closed-form families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OracleCurve {
    /// Cone over the nearly Kähler flag manifold, a Gaussian soliton for any `lambda`.
    TorsionFreeCone {
        /// Dilation constant.
        lambda: f64,
    },
    /// Torsion-free metric of the given size in the parameter `r = f1 f3`.
    BryantSalamon {
        /// Size parameter.
        mu: f64,
    },
    /// Complete asymptotically conical shrinker.
    ExplicitShrinker {
        /// Singular-orbit size.
        b: f64,
    },
    /// Complete steady soliton with exponential volume growth.
    ExplicitSteady,
}

impl OracleCurve {
    /// Evaluates the curve; the parameter is `r` for the torsion-free family and `t` otherwise.
    pub fn evaluate(&self, s: f64) -> Result<OracleValue> {
        match *self {
            Self::TorsionFreeCone { lambda } => torsion_free_cone(s, lambda),
            Self::BryantSalamon { mu } => bryant_salamon_with_derivatives(s, mu),
            Self::ExplicitShrinker { b } => explicit_shrinker_value(b, s),
            Self::ExplicitSteady => explicit_steady(s),
        }
    }

    /// Whether the parameter is the arclength `t`.
    pub fn is_time_parametrised(&self) -> bool {
        !matches!(self, Self::BryantSalamon { .. })
    }

    /// Steady conserved values `tau_i - u f_i^2` when the curve is a steady soliton.
    pub fn steady_constants(&self) -> Option<[f64; 3]> {
        match *self {
            Self::ExplicitSteady => Some([0.0, 3.0, -3.0]),
            Self::TorsionFreeCone { lambda } if lambda == 0.0 => Some([0.0; 3]),
            Self::BryantSalamon { .. } => Some([0.0; 3]),
            _ => None,
        }
    }
}

/// Cone with `f_i = t/2`, `tau = 0` and `u = -lambda t / 3`.
pub fn torsion_free_cone(t: f64, lambda: f64) -> Result<OracleValue> {
    if !(t > 0.0) {
        return Err(Error::OutOfDomain(format!("cone requires t > 0, got {t}")));
    }
    Ok(OracleValue {
        f: [0.5 * t; 3],
        tau: [0.0; 3],
        u: -lambda * t / 3.0,
        lambda,
        d_f_sq: [0.5 * t; 3],
        d_tau: [0.0; 3],
        singular: false,
    })
}

/// Critical steady soliton with `c = 3`, `b = sqrt 2`.
pub fn explicit_steady(t: f64) -> Result<OracleValue> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::OutOfDomain(format!("explicit steady soliton requires t >= 0, got {t}")));
    }
    let h = 0.5 * t;
    let (sh, ch, th) = (h.sinh(), h.cosh(), h.tanh());
    let (ep, em) = (t.exp(), (-t).exp());
    Ok(OracleValue {
        f: [2.0 * sh, (1.0 + ep).sqrt(), (1.0 + em).sqrt()],
        tau: [4.0 * th * sh * sh, 2.0 + ep, -(2.0 + em)],
        u: th,
        lambda: 0.0,
        d_f_sq: [2.0 * t.sinh(), ep, -em],
        d_tau: [2.0 * sh * sh * (1.0 + 2.0 * ch * ch) / (ch * ch), ep, em],
        singular: t == 0.0,
    })
}

/// Shrinker with `lambda = -9/(4 b^2)`: reduced state, `u` and `lambda`.
pub fn explicit_shrinker(b: f64, t: f64) -> Result<(Sp2Point, f64, f64)> {
    let v = explicit_shrinker_value(b, t)?;
    if v.singular {
        return Err(Error::OutOfDomain("shrinker is singular at t = 0".into()));
    }
    Ok((Sp2Point::new(v.f[0], v.f[1], v.tau[1])?, v.u, v.lambda))
}

fn explicit_shrinker_value(b: f64, t: f64) -> Result<OracleValue> {
    if !(b > 0.0) {
        return Err(Error::InvalidParams(format!("b must be positive, got {b}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::OutOfDomain(format!("shrinker requires t >= 0, got {t}")));
    }
    let b2 = b * b;
    let q = 4.0 * b2 + t * t;
    let f2 = (b2 + 0.25 * t * t).sqrt();
    let tau1 = 4.0 * t.powi(3) / q;
    Ok(OracleValue {
        f: [t, f2, f2],
        tau: [tau1, -0.5 * t, -0.5 * t],
        u: 3.0 * t / (4.0 * b2) + 4.0 * t / q,
        lambda: -9.0 / (4.0 * b2),
        d_f_sq: [2.0 * t, 0.5 * t, 0.5 * t],
        d_tau: [(48.0 * b2 * t * t + 4.0 * t.powi(4)) / (q * q), -0.5, -0.5],
        singular: t == 0.0,
    })
}

/// Torsion-free metric coefficients in the parameter `r = f1 f3`.
pub fn bryant_salamon(r: f64, mu: f64) -> Result<[f64; 3]> {
    let w = r * r - mu * mu;
    if !(w > 0.0) || !(r > 0.0) {
        return Err(Error::OutOfDomain(format!("requires r > |mu|, got r = {r}, mu = {mu}")));
    }
    let q = w.powf(0.25);
    Ok([r / q, q, q])
}

fn bryant_salamon_with_derivatives(r: f64, mu: f64) -> Result<OracleValue> {
    let f = bryant_salamon(r, mu)?;
    let w = r * r - mu * mu;
    // d/dr of the squared coefficients, then dt/dr = (r^2 - mu^2)^(-1/4) from the closure equation.
    let d_r = [r * (r * r - 2.0 * mu * mu) / w.powf(1.5), r / w.sqrt(), r / w.sqrt()];
    let dt_dr = w.powf(-0.25);
    Ok(OracleValue {
        f,
        tau: [0.0; 3],
        u: 0.0,
        lambda: 0.0,
        d_f_sq: d_r.map(|x| x / dt_dr),
        d_tau: [0.0; 3],
        singular: false,
    })
}

/// Maximal residuals of a closed-form curve on a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// First-order system, relative to the local derivative scale.
    pub first_order: f64,
    /// Mixed-order system and closure equation by five-point stencils, relative; `None` off the arclength parametrisation.
    pub mixed_order: Option<f64>,
    /// Type-14 constraint, relative to the local torsion scale.
    pub constraint: f64,
    /// Steady conserved quantities, relative; `None` when not steady.
    pub conserved: Option<f64>,
}

fn scale_of(xs: &[f64]) -> f64 {
    xs.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

/// Evaluates all residual checks of a curve at the given parameter values.
pub fn oracle_residual(curve: &OracleCurve, samples: &[f64]) -> Result<OracleReport> {
    let mut rep = OracleReport {
        first_order: 0.0,
        mixed_order: curve.is_time_parametrised().then_some(0.0),
        constraint: 0.0,
        conserved: curve.steady_constants().map(|_| 0.0),
    };
    for &s in samples {
        let v = curve.evaluate(s)?;
        let p = v.point()?;
        let rhs = rhs_su3(&p, v.lambda);
        let mut scale_vals: Vec<f64> = v.d_f_sq.iter().chain(&v.d_tau).copied().collect();
        scale_vals.extend(rhs.d_f_sq.iter().chain(&rhs.d_tau));
        let scale = scale_of(&scale_vals);
        for i in 0..3 {
            let e = (v.d_f_sq[i] - rhs.d_f_sq[i]).abs().max((v.d_tau[i] - rhs.d_tau[i]).abs());
            rep.first_order = rep.first_order.max(e / scale);
        }
        let fs = p.f_sq();
        let tau_scale = scale_of(&[v.tau[0] / fs[0], v.tau[1] / fs[1], v.tau[2] / fs[2]]);
        rep.constraint = rep.constraint.max(constraint_residual(&p).abs() / tau_scale);
        if let (Some(ci), Some(acc)) = (curve.steady_constants(), rep.conserved.as_mut()) {
            for i in 0..3 {
                let k = v.tau[i] - v.u * fs[i];
                let sc = scale_of(&[v.tau[i], v.u * fs[i]]);
                *acc = acc.max((k - ci[i]).abs() / sc);
            }
        }
        if let Some(acc) = rep.mixed_order.as_mut() {
            let h = 1e-3 * s.max(1.0);
            if s - 2.0 * h <= 0.0 {
                continue;
            }
            let ts: Vec<f64> = (-2..=2).map(|k| s + k as f64 * h).collect();
            let vals = ts.iter().map(|&t| curve.evaluate(t)).collect::<Result<Vec<_>>>()?;
            let pts = vals.iter().map(OracleValue::point).collect::<Result<Vec<_>>>()?;
            let us: Vec<f64> = vals.iter().map(|x| x.u).collect();
            let r = rhs_mixed_order_residual(&ts, &pts, &us, v.lambda)?;
            let sc = scale_of(&[p.f_sq_sum(), v.lambda * p.f_sq_sum(), v.u * p.f_sq_sum(), scale]);
            *acc = acc.max(r.max() / sc);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{observables, to_poly};
    use approx::assert_relative_eq;

    #[test]
    fn steady_values() {
        let v = explicit_steady(2f64.ln()).unwrap();
        let fs = v.f.map(|x| x * x);
        assert_relative_eq!(fs[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(fs[1], 3.0, epsilon = 1e-14);
        assert_relative_eq!(fs[2], 1.5, epsilon = 1e-14);
        assert_relative_eq!(v.tau[0], 1.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(v.u, 1.0 / 3.0, epsilon = 1e-14);
        for t in [0.3, 1.0, 4.0] {
            let v = explicit_steady(t).unwrap();
            let p = v.point().unwrap();
            assert_relative_eq!(p.volume(), 2.0 * t.sinh(), max_relative = 1e-14);
            let o = observables(&p, 0.0);
            let sech = 1.0 / (0.5 * t).cosh();
            assert_relative_eq!(o.norm_tau_sq, 6.0 - 1.5 * sech * sech, max_relative = 1e-13);
            let q = to_poly(&p);
            assert_relative_eq!(q.d_ratio(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(q.lambda_ratio(), 1.0, max_relative = 1e-12);
        }
        assert!(explicit_steady(0.0).unwrap().singular);
        let v = explicit_steady(3f64.ln()).unwrap();
        assert_relative_eq!(v.f[0], v.f[2], max_relative = 1e-15);
    }

    #[test]
    fn shrinker_values() {
        let (q, u, lambda) = explicit_shrinker(1.0, 2.0).unwrap();
        assert_eq!(q.f1(), 2.0);
        assert_relative_eq!(q.f2(), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(q.tau2(), -1.0);
        assert_eq!((u, lambda), (2.5, -2.25));
        let b = 1.7;
        let t0 = (4.0 * b * b / 3.0f64).sqrt();
        let (q, _, _) = explicit_shrinker(b, t0).unwrap();
        assert_relative_eq!(q.f1(), q.f2(), max_relative = 1e-15);
        let (q, u, lambda) = explicit_shrinker(1.0, 1e6).unwrap();
        assert_relative_eq!(q.f2() / q.f1(), 0.5, max_relative = 1e-9);
        assert!(u + lambda * 1e6 / 3.0 >= 0.0 && u + lambda * 1e6 / 3.0 < 1e-5);
    }

    #[test]
    fn bryant_salamon_values() {
        let f = bryant_salamon(2f64.sqrt(), 1.0).unwrap();
        assert_relative_eq!(f[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(f[1], 1.0, epsilon = 1e-15);
        let f = bryant_salamon(3.0, 0.0).unwrap();
        assert_relative_eq!(f[0], 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(f[2], 3f64.sqrt(), epsilon = 1e-15);
        for r in [1.1, 2.0, 7.5] {
            let f = bryant_salamon(r, 1.0).unwrap();
            let inv = f[2] * f[2] * (f[1] * f[1] - f[0] * f[0]);
            assert_relative_eq!(inv, -1.0, max_relative = 1e-13);
        }
        assert!(bryant_salamon(1.0, 1.0).is_err());
    }

    #[test]
    fn residuals_small() {
        let ts: Vec<f64> = (0..200).map(|k| 0.1 + k as f64 * 0.1).collect();
        for curve in [
            OracleCurve::ExplicitSteady,
            OracleCurve::ExplicitShrinker { b: 1.0 },
            OracleCurve::TorsionFreeCone { lambda: -1.0 },
        ] {
            let r = oracle_residual(&curve, &ts).unwrap();
            assert!(r.first_order < 1e-12, "{curve:?} {r:?}");
            assert!(r.mixed_order.unwrap() < 1e-6, "{curve:?} {r:?}");
            assert!(r.constraint < 1e-14, "{curve:?} {r:?}");
        }
        let rs: Vec<f64> = (1..100).map(|k| 1.0 + 0.05 * k as f64).collect();
        let r = oracle_residual(&OracleCurve::BryantSalamon { mu: 1.0 }, &rs).unwrap();
        assert!(r.first_order < 1e-12, "{r:?}");
    }

    #[test]
    fn perturbed_torsion_detected() {
        let ts: Vec<f64> = (-2..=2).map(|k| 1.0 + k as f64 * 1e-3).collect();
        let pts: Vec<PhasePoint> = ts
            .iter()
            .map(|&t| {
                let v = explicit_steady(t).unwrap();
                PhasePoint::new(v.f, [v.tau[0] + 0.1 * t, v.tau[1], v.tau[2]]).unwrap()
            })
            .collect();
        let us: Vec<f64> = ts.iter().map(|&t| explicit_steady(t).unwrap().u).collect();
        let r = rhs_mixed_order_residual(&ts, &pts, &us, 0.0).unwrap();
        assert!((r.torsion[0] - 0.1).abs() < 1e-6);
    }
}
