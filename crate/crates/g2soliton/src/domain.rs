//! State types, algebraic constraints, coordinate changes and pointwise observables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance on the type-14 constraint residual.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Metric coefficients and torsion coefficients on a principal orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    f: [f64; 3],
    tau: [f64; 3],
}

impl PhasePoint {
    /// Builds a point, rejecting non-positive metric coefficients and non-finite entries.
    pub fn new(f: [f64; 3], tau: [f64; 3]) -> Result<Self> {
        if !all_finite(&f) || !all_finite(&tau) {
            return Err(Error::NonFinite);
        }
        if f.iter().any(|&x| x <= 0.0) {
            return Err(Error::NonPositiveMetric(f));
        }
        Ok(Self { f, tau })
    }

    /// Builds a point from squared metric coefficients.
    pub fn from_squares(f_sq: [f64; 3], tau: [f64; 3]) -> Result<Self> {
        if f_sq.iter().any(|&x| x <= 0.0) {
            return Err(Error::NonPositiveMetric(f_sq));
        }
        Self::new(f_sq.map(f64::sqrt), tau)
    }

    /// Metric coefficients.
    pub fn f(&self) -> [f64; 3] {
        self.f
    }

    /// Torsion coefficients.
    pub fn tau(&self) -> [f64; 3] {
        self.tau
    }

    /// Squared metric coefficients.
    pub fn f_sq(&self) -> [f64; 3] {
        self.f.map(|x| x * x)
    }

    /// Orbit volume factor `f1 f2 f3`.
    pub fn volume(&self) -> f64 {
        self.f[0] * self.f[1] * self.f[2]
    }

    /// Sum of squared metric coefficients.
    pub fn f_sq_sum(&self) -> f64 {
        self.f_sq().iter().sum()
    }

    /// Sum of torsion coefficients.
    pub fn tau_sum(&self) -> f64 {
        self.tau.iter().sum()
    }

    /// Flattened state `(f1, f2, f3, tau1, tau2, tau3)`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.f[0], self.f[1], self.f[2], self.tau[0], self.tau[1], self.tau[2]]
    }

    /// Inverse of [`PhasePoint::to_array`].
    pub fn from_array(y: &[f64; 6]) -> Result<Self> {
        Self::new([y[0], y[1], y[2]], [y[3], y[4], y[5]])
    }
}

/// Symmetry group of the cohomogeneity-one ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryGroup {
    /// Principal orbit SU(3)/T^2, singular orbit CP^2.
    Su3,
    /// Principal orbit CP^3, singular orbit S^4.
    Sp2,
}

/// Dilation constant and singular-orbit data of a smoothly-closing solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureParams {
    lambda: f64,
    b: f64,
    c: f64,
    group: SymmetryGroup,
}

impl ClosureParams {
    /// Validated constructor for the SU(3) family.
    pub fn su3(lambda: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(lambda, b, c, SymmetryGroup::Su3)
    }

    /// Validated constructor for the Sp(2) family (`c = 0`).
    pub fn sp2(lambda: f64, b: f64) -> Result<Self> {
        Self::new(lambda, b, 0.0, SymmetryGroup::Sp2)
    }

    /// Validated constructor.
    pub fn new(lambda: f64, b: f64, c: f64, group: SymmetryGroup) -> Result<Self> {
        if !all_finite(&[lambda, b, c]) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if b <= 0.0 {
            return Err(Error::InvalidParams(format!("b must be positive, got {b}")));
        }
        if group == SymmetryGroup::Sp2 && c != 0.0 {
            return Err(Error::InvalidParams(format!("Sp(2) family requires c = 0, got {c}")));
        }
        Ok(Self { lambda, b, c, group })
    }

    /// Dilation constant.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Size of the collapsing-free fibres on the singular orbit.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Initial torsion parameter.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Symmetry tag.
    pub fn group(&self) -> SymmetryGroup {
        self.group
    }
}

/// Scale-invariant coordinates: geometric mean plus normalised metric and torsion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleInvariantPoint {
    /// Geometric mean `(f1 f2 f3)^(1/3)`.
    pub g: f64,
    /// Normalised metric coefficients, product one.
    pub scr_f: [f64; 3],
    /// Normalised torsion coefficients.
    pub scr_t: [f64; 3],
}

impl ScaleInvariantPoint {
    /// Deviation vector from the torsion-free cone, `(scr_f - 1, scr_t)`.
    pub fn cone_deviation(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            s += (self.scr_f[i] - 1.0).powi(2) + self.scr_t[i].powi(2);
        }
        s.sqrt()
    }

    /// `|scr_f - 1| + |scr_t|` with Euclidean norms.
    pub fn cone_distance(&self) -> f64 {
        let df: f64 = self.scr_f.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>().sqrt();
        let dt: f64 = self.scr_t.iter().map(|x| x * x).sum::<f64>().sqrt();
        df + dt
    }
}

/// Coordinates `F_i = f_i / (f_j f_k)` of the steady polynomial system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyPoint {
    /// The three ratios.
    pub big_f: [f64; 3],
}

impl PolyPoint {
    /// `F1 (F2 + F3)`.
    pub fn lambda_ratio(&self) -> f64 {
        self.big_f[0] * (self.big_f[1] + self.big_f[2])
    }

    /// `F2 - F3`.
    pub fn d_ratio(&self) -> f64 {
        self.big_f[1] - self.big_f[2]
    }
}

/// Derived quantities at a phase point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// Soliton vector-field coefficient.
    pub u: f64,
    /// Sum of torsion coefficients.
    pub taubar: f64,
    /// Sum of squared metric coefficients.
    pub fbar: f64,
    /// Squared norm of the torsion form.
    pub norm_tau_sq: f64,
    /// Scalar curvature of the induced metric.
    pub scalar_curvature: f64,
    /// Torsion-weighted excesses appearing in the torsion evolution.
    pub s: [f64; 3],
    /// Excesses `3 f_i^2 - fbar`.
    pub e: [f64; 3],
    /// `1/f2^2 + 1/f3^2`.
    pub lambda_ratio: f64,
    /// `F2 - F3`.
    pub d_ratio: f64,
    /// Residual of the conservation law for the supplied `u`.
    pub cl_residual: f64,
}

/// Sum of `tau_i / f_i^2`; vanishes on every soliton.
pub fn constraint_residual(p: &PhasePoint) -> f64 {
    let fs = p.f_sq();
    p.tau[0] / fs[0] + p.tau[1] / fs[1] + p.tau[2] / fs[2]
}

/// Vector-field coefficient determined by the conservation law.
pub fn recover_u(p: &PhasePoint, lambda: f64) -> f64 {
    (p.tau_sum() - 2.0 * lambda * p.volume()) / p.f_sq_sum()
}

/// Observables with `u` recovered from the conservation law.
pub fn observables(p: &PhasePoint, lambda: f64) -> Observables {
    observables_with_u(p, lambda, recover_u(p, lambda))
}

/// Observables for an externally supplied `u`.
pub fn observables_with_u(p: &PhasePoint, lambda: f64, u: f64) -> Observables {
    let fs = p.f_sq();
    let fbar = p.f_sq_sum();
    let taubar = p.tau_sum();
    let vol = p.volume();
    let norm_tau_sq: f64 = (0..3).map(|i| p.tau[i] * p.tau[i] / (fs[i] * fs[i])).sum();
    let e = fs.map(|x| 3.0 * x - fbar);
    let s = [0, 1, 2].map(|i| e[i] - 1.5 * vol * p.tau[i] / fs[i]);
    let big_f = to_poly(p).big_f;
    Observables {
        u,
        taubar,
        fbar,
        norm_tau_sq,
        scalar_curvature: -0.5 * norm_tau_sq,
        s,
        e,
        lambda_ratio: 1.0 / fs[1] + 1.0 / fs[2],
        d_ratio: big_f[1] - big_f[2],
        cl_residual: taubar - u * fbar - 2.0 * lambda * vol,
    }
}

/// Splits a point into its scale and scale-invariant shape.
pub fn to_scale_invariant(p: &PhasePoint) -> ScaleInvariantPoint {
    let g = p.volume().cbrt();
    ScaleInvariantPoint { g, scr_f: p.f.map(|x| x / g), scr_t: p.tau.map(|x| x / g) }
}

/// Inverse of [`to_scale_invariant`].
pub fn from_scale_invariant(sp: &ScaleInvariantPoint) -> Result<PhasePoint> {
    if !(sp.g > 0.0) {
        return Err(Error::NonPositiveMetric([sp.g; 3]));
    }
    PhasePoint::new(sp.scr_f.map(|x| x * sp.g), sp.scr_t.map(|x| x * sp.g))
}

/// Polynomial coordinates `F_i = f_i / (f_j f_k)`.
pub fn to_poly(p: &PhasePoint) -> PolyPoint {
    let [f1, f2, f3] = p.f;
    PolyPoint { big_f: [f1 / (f2 * f3), f2 / (f1 * f3), f3 / (f1 * f2)] }
}

/// Metric coefficients recovered from interior polynomial coordinates.
pub fn from_poly(q: &PolyPoint) -> Result<[f64; 3]> {
    let [a, b, c] = q.big_f;
    if !all_finite(&q.big_f) || q.big_f.iter().any(|&x| x <= 0.0) {
        return Err(Error::BoundaryPoint(q.big_f));
    }
    Ok([1.0 / (b * c), 1.0 / (a * c), 1.0 / (a * b)].map(f64::sqrt))
}

/// Applies the scaling symmetry with factor `mu`; time must be rescaled by the caller.
pub fn rescale(p: &PhasePoint, lambda: f64, mu: f64) -> Result<(PhasePoint, f64)> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParams(format!("scale factor must be positive, got {mu}")));
    }
    let q = PhasePoint::new(p.f.map(|x| mu * x), p.tau.map(|x| mu * x))?;
    Ok((q, lambda / (mu * mu)))
}

/// Kinds of logged integration events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// `f1 - f3` changed sign.
    F1EqualsF3,
    /// `f1 - f2` changed sign.
    F1EqualsF2,
    /// `f3` fell below the blow-up threshold while decreasing.
    BlowUp,
    /// Polynomial coordinates settled near the boundary fixed point.
    ExponentialEnd,
    /// Scale-invariant data settled near the cone.
    ConeConvergence,
}

/// A logged event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Event type.
    pub kind: EventKind,
    /// Event time.
    pub t: f64,
}

/// Reason an integration stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Reached the requested final time.
    ReachedTmax,
    /// Blow-up event fired.
    BlowUp {
        /// Time at which `f3` reached the threshold.
        t: f64,
    },
    /// Stopped after a sustained exponential-end signature.
    ExponentialEnd {
        /// Time the signature was confirmed.
        t: f64,
    },
    /// Stopped after a sustained cone-convergence signature.
    ConeConverged {
        /// Time the signature was confirmed.
        t: f64,
    },
    /// Step size collapsed without a diagnosed event.
    StepCollapse {
        /// Time of collapse.
        t: f64,
        /// Last attempted step.
        h: f64,
    },
    /// The state left the valid domain.
    InvalidState {
        /// Time of failure.
        t: f64,
        /// Diagnostic.
        reason: String,
    },
}

/// One stored sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Time.
    pub t: f64,
    /// State.
    pub point: PhasePoint,
    /// Time derivative of the flattened state.
    pub dydt: [f64; 6],
    /// Derived quantities.
    pub obs: Observables,
}

/// Integrator tolerances stored with a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance.
    pub rtol: f64,
    /// Absolute tolerance.
    pub atol: f64,
}

/// Sampled solution curve with its event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Samples with strictly increasing time.
    pub samples: Vec<Sample>,
    /// Dilation constant.
    pub lambda: f64,
    /// Closure data if the seed came from a series.
    pub params: Option<ClosureParams>,
    /// Tolerances used.
    pub tolerances: Tolerances,
    /// Events in time order.
    pub events: Vec<Event>,
    /// Why the integration stopped.
    pub termination: Termination,
}

impl Trajectory {
    /// Times of events of the given kind.
    pub fn event_times(&self, kind: EventKind) -> Vec<f64> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.t).collect()
    }

    /// Final sample.
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Verdict on the end of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EndClassification {
    /// Complete and asymptotic to the torsion-free cone; fitted rate if the tail allowed a fit.
    CompleteAcTorsionFree {
        /// Fitted power-law exponent of the cone deviation.
        rate: Option<f64>,
    },
    /// Complete with exponential volume growth.
    CompleteExponentialEnd,
    /// Finite-time blow-up.
    Incomplete {
        /// Blow-up time.
        t_blowup: f64,
    },
    /// No verdict.
    Undetermined {
        /// Diagnostic.
        reason: String,
    },
}

impl EndClassification {
    /// Short tag used in tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::CompleteAcTorsionFree { .. } => "AC",
            Self::CompleteExponentialEnd => "Exp",
            Self::Incomplete { .. } => "Inc",
            Self::Undetermined { .. } => "Und",
        }
    }

    /// True for both complete verdicts.
    pub fn is_complete(&self) -> bool {
        matches!(self, Self::CompleteAcTorsionFree { .. } | Self::CompleteExponentialEnd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn steady_ln2() -> PhasePoint {
        PhasePoint::from_squares([0.5, 3.0, 1.5], [1.0 / 6.0, 4.0, -2.5]).unwrap()
    }

    #[test]
    fn constraint_examples() {
        let cone = PhasePoint::new([1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(constraint_residual(&cone), 0.0);
        assert!(constraint_residual(&steady_ln2()).abs() < 1e-15);
        let p = PhasePoint::new([1.0; 3], [1.0; 3]).unwrap();
        assert_eq!(constraint_residual(&p), 3.0);
    }

    #[test]
    fn u_examples() {
        let cone = PhasePoint::new([1.0; 3], [0.0; 3]).unwrap();
        assert_relative_eq!(recover_u(&cone, -1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(recover_u(&steady_ln2(), 0.0), 1.0 / 3.0, epsilon = 1e-15);
        let s2 = 2f64.sqrt();
        let shrinker = PhasePoint::new([2.0, s2, s2], [4.0, -1.0, -1.0]).unwrap();
        assert_relative_eq!(recover_u(&shrinker, -2.25), 2.5, epsilon = 1e-14);
    }

    #[test]
    fn observables_examples() {
        let o = observables(&steady_ln2(), 0.0);
        assert_relative_eq!(o.norm_tau_sq, 14.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(o.scalar_curvature, -7.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(o.s[0], -4.25, epsilon = 1e-14);
        assert_relative_eq!(o.s[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(o.s[2], 3.25, epsilon = 1e-14);
        assert_relative_eq!(o.lambda_ratio, 1.0, epsilon = 1e-14);
        assert_relative_eq!(o.d_ratio, 1.0, epsilon = 1e-14);
        assert!(o.cl_residual.abs() < 1e-14);
        let cone = PhasePoint::new([1.0; 3], [0.0; 3]).unwrap();
        let oc = observables(&cone, 0.0);
        assert_eq!(oc.norm_tau_sq, 0.0);
        assert_eq!(oc.scalar_curvature, 0.0);
    }

    #[test]
    fn transforms() {
        let sp = to_scale_invariant(&PhasePoint::new([2.0; 3], [0.0; 3]).unwrap());
        assert_relative_eq!(sp.g, 2.0, epsilon = 1e-15);
        assert_eq!(sp.scr_f, [1.0; 3]);
        let p = steady_ln2();
        let sp = to_scale_invariant(&p);
        assert_relative_eq!(sp.g, 1.5f64.cbrt(), epsilon = 1e-15);
        let q = from_scale_invariant(&sp).unwrap();
        for i in 0..3 {
            assert_relative_eq!(q.f()[i], p.f()[i], max_relative = 1e-15);
        }
        let big_f = to_poly(&p).big_f;
        assert_relative_eq!(big_f[0], 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(big_f[1], 2.0, max_relative = 1e-14);
        assert_relative_eq!(big_f[2], 1.0, max_relative = 1e-14);
        assert!(from_poly(&PolyPoint { big_f: [1.0, 1.0, 0.0] }).is_err());
    }

    #[test]
    fn rescale_examples() {
        let p = PhasePoint::new([1.0; 3], [0.0; 3]).unwrap();
        let (q, l) = rescale(&p, -1.0, 2.0).unwrap();
        assert_eq!(q.f(), [2.0; 3]);
        assert_eq!(l, -0.25);
        let (q, l) = rescale(&p, -1.0, 1.0).unwrap();
        assert_eq!((q, l), (p, -1.0));
        assert!(rescale(&p, 0.0, -1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ClosureParams::su3(0.0, -1.0, 0.0).is_err());
        assert!(ClosureParams::new(0.0, 1.0, 1.0, SymmetryGroup::Sp2).is_err());
        assert!(ClosureParams::sp2(0.0, 1.0).is_ok());
        assert!(PhasePoint::new([0.0, 1.0, 1.0], [0.0; 3]).is_err());
    }
}
