//! Dormand-Prince 5(4) integrator with PI step control and continuous output.

use serde::{Deserialize, Serialize};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-control settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    /// Relative tolerance.
    pub rtol: f64,
    /// Absolute tolerance.
    pub atol: f64,
    /// Largest allowed step.
    pub max_step: f64,
    /// Collapse threshold relative to `|t|`.
    pub min_step_rel: f64,
    /// Step budget.
    pub max_steps: usize,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_step: f64::INFINITY,
            min_step_rel: 4.0 * f64::EPSILON,
            max_steps: 5_000_000,
        }
    }
}

/// Continuous extension over one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    /// Step start.
    pub t0: f64,
    /// Step length.
    pub h: f64,
    /// State at the step start.
    pub y0: [f64; N],
    /// State at the step end.
    pub y1: [f64; N],
    /// Derivative at the step end.
    pub dy1: [f64; N],
    rcont: [[f64; N]; 4],
}

impl<const N: usize> DenseStep<N> {
    /// Step end.
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated state at `t` in the step.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        std::array::from_fn(|i| {
            self.y0[i]
                + th * (self.rcont[0][i] + th1 * (self.rcont[1][i] + th * (self.rcont[2][i] + th1 * self.rcont[3][i])))
        })
    }

    /// Root of `g(y(t))` in the step by bisection, given a sign change between the ends.
    ///
    /// Returns the bracket end on the far side of the sign change.
    pub fn locate<G: Fn(&[f64; N]) -> f64>(&self, g: G) -> f64 {
        let (mut a, mut b) = (self.t0, self.t1());
        let ga = g(&self.y0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if (g(&self.eval(m)) > 0.0) == (ga > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        b
    }
}

/// Decision returned by the step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    /// Keep integrating.
    Continue,
    /// Stop after this step.
    Stop,
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OdeStatus {
    /// Reached the final time.
    Finished,
    /// Stopped by the observer.
    Stopped,
    /// Step size fell below the collapse threshold.
    StepCollapse {
        /// Time of collapse.
        t: f64,
        /// Last step size.
        h: f64,
    },
    /// Step budget exhausted.
    TooManySteps {
        /// Time reached.
        t: f64,
    },
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`, calling `observer` after every accepted step.
///
/// `rhs` returns `None` outside the valid domain; such steps are rejected and retried with a smaller step.
pub fn integrate<const N: usize, F, O>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    settings: &StepSettings,
    mut observer: O,
) -> OdeStatus
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    O: FnMut(&DenseStep<N>) -> Control,
{
    let (rtol, atol) = (settings.rtol, settings.atol);
    let scale =
        |a: &[f64; N], b: &[f64; N]| -> [f64; N] { std::array::from_fn(|i| atol + rtol * a[i].abs().max(b[i].abs())) };
    let norm = |v: &[f64; N], sc: &[f64; N]| -> f64 {
        (v.iter().zip(sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let Some(mut k1) = rhs(t0, &y0) else {
        return OdeStatus::StepCollapse { t: t0, h: 0.0 };
    };
    let mut t = t0;
    let mut y = y0;
    // Initial step from the local derivative scale.
    let sc0 = scale(&y, &y);
    let d0 = norm(&y, &sc0);
    let d1 = norm(&k1, &sc0);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(settings.max_step).min(t_end - t0).min(1e-3 * t0.abs().max(1e-3) * 10.0);
    let mut facold = 1e-4f64;
    let mut rejected_last = false;
    for _ in 0..settings.max_steps {
        if t >= t_end {
            return OdeStatus::Finished;
        }
        if h < settings.min_step_rel * t.abs().max(1e-300) {
            return OdeStatus::StepCollapse { t, h };
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let stages = (|| {
            let k2 = rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = rhs(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = rhs(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = rhs(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = rhs(t + h, &y1)?;
            Some((k2, k3, k4, k5, k6, k7, y1))
        })();
        let Some((_k2, k3, k4, k5, k6, k7, y1)) = stages else {
            h *= 0.25;
            rejected_last = true;
            continue;
        };
        let err_vec: [f64; N] =
            std::array::from_fn(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]));
        let err = norm(&err_vec, &scale(&y, &y1));
        if !err.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        let fac11 = err.powf(0.2 - 0.04 * 0.75);
        if err <= 1.0 {
            let mut fac = fac11 / facold.powf(0.04);
            fac = (fac / 0.9).clamp(0.1, 5.0);
            let mut hnew = (h / fac).min(settings.max_step);
            if rejected_last {
                hnew = hnew.min(h);
            }
            facold = err.max(1e-4);
            let rcont: [[f64; N]; 4] = {
                let mut r = [[0.0; N]; 4];
                for i in 0..N {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r[0][i] = ydiff;
                    r[1][i] = bspl;
                    r[2][i] = ydiff - h * k7[i] - bspl;
                    r[3][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                r
            };
            let step = DenseStep { t0: t, h, y0: y, y1, dy1: k7, rcont };
            t = if last { t_end } else { t + h };
            y = y1;
            k1 = k7;
            rejected_last = false;
            if observer(&step) == Control::Stop {
                return OdeStatus::Stopped;
            }
            h = hnew;
        } else {
            h /= (fac11 / 0.9).min(10.0);
            rejected_last = true;
        }
    }
    OdeStatus::TooManySteps { t }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_and_dense_output() {
        let settings = StepSettings { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let mut worst_dense = 0.0f64;
        let mut last = [0.0; 2];
        let status = integrate(
            |_, y: &[f64; 2]| Some([y[1], -y[0]]),
            0.0,
            [0.0, 1.0],
            10.0,
            &settings,
            |s| {
                for k in 1..10 {
                    let t = s.t0 + s.h * k as f64 / 10.0;
                    let v = s.eval(t);
                    worst_dense = worst_dense.max((v[0] - t.sin()).abs());
                }
                last = s.y1;
                Control::Continue
            },
        );
        assert_eq!(status, OdeStatus::Finished);
        assert!((last[0] - 10f64.sin()).abs() < 1e-10);
        assert!(worst_dense < 1e-9, "{worst_dense}");
    }

    #[test]
    fn locate_root() {
        let settings = StepSettings::default();
        let mut root = None;
        integrate(
            |_, _y: &[f64; 1]| Some([1.0]),
            0.0,
            [0.0],
            2.0,
            &settings,
            |s| {
                if (s.y0[0] - 1.0) * (s.y1[0] - 1.0) <= 0.0 && root.is_none() {
                    root = Some(s.locate(|y| y[0] - 1.0));
                }
                Control::Continue
            },
        );
        assert!((root.unwrap() - 1.0).abs() < 1e-12);
    }
}
