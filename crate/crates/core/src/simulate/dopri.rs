//! Dormand–Prince 5(4) with Hairer's continuous extension.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Leading components entering the error norm; the rest are quadrature states.
    fn controlled_dim(&self) -> usize {
        self.dim()
    }

    /// `seg_mid` identifies the smooth segment, so that one-sided limits are used at breakpoints.
    fn rhs(&self, t: f64, seg_mid: f64, x: &[f64], dx: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    /// Tolerances for reference and acceptance runs.
    pub fn accurate() -> Self {
        IntegratorOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 50_000_000,
        }
    }

    pub fn exploratory() -> Self {
        IntegratorOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 50_000_000,
        }
    }

    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorOptions {
            rtol,
            atol,
            ..Self::accurate()
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self::accurate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// An accepted step `[t_old, t_new]` with its interpolant.
pub struct Step<'a> {
    pub t_old: f64,
    pub t_new: f64,
    pub y_new: &'a [f64],
    h: f64,
    rcont: &'a [Vec<f64>; 5],
}

impl Step<'_> {
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t_old) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

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

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrates from `t0` to `t_end`, restarting at each breakpoint so that no step
/// straddles an input discontinuity. `observer` sees every accepted step and may stop.
pub fn integrate<S: OdeSystem>(
    sys: &S,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    breakpoints: &[f64],
    opts: &IntegratorOptions,
    mut observer: impl FnMut(&Step) -> Control,
) -> Result<(Vec<f64>, Stats)> {
    let n = sys.dim();
    let nc = sys.controlled_dim().min(n);
    let mut y = x0.to_vec();
    let mut stats = Stats::default();
    let mut bounds = vec![t0];
    bounds.extend(breakpoints.iter().copied().filter(|&b| b > t0 && b < t_end));
    bounds.push(t_end);

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut h_guess: Option<f64> = None;

    for seg in bounds.windows(2) {
        let (ta, tb) = (seg[0], seg[1]);
        let mid = 0.5 * (ta + tb);
        let mut t = ta;
        sys.rhs(t, mid, &y, &mut k[0]);
        stats.evaluations += 1;
        let mut h = match h_guess {
            Some(h) => h.min(tb - ta),
            None => initial_step(sys, t, mid, &y, &k[0], opts, nc, tb - ta, &mut stats),
        };
        let mut fac_old = 1e-4f64;
        let mut last_rejected = false;
        while t < tb {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("maximum number of steps ({}) exceeded", opts.max_steps),
                });
            }
            let last = t + 1.01 * h >= tb;
            if last {
                h = tb - t;
            }
            if h <= f64::EPSILON * t.abs().max(1e-300) * 4.0 || !h.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {h:.3e})"),
                });
            }
            stages(sys, t, mid, h, &y, &mut k, &mut ytmp, &mut ynew, last.then_some(tb));
            stats.evaluations += 6;

            let mut err = 0.0;
            for i in 0..nc {
                let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = if nc > 0 { (err / nc as f64).sqrt() } else { 0.0 };
            if !err.is_finite() {
                h *= FAC_MIN;
                stats.rejected += 1;
                last_rejected = true;
                continue;
            }
            let fac11 = err.powf(0.2 - BETA * 0.75);
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let h_new = h / fac;
            if err <= 1.0 {
                fac_old = err.max(1e-4);
                stats.accepted += 1;
                let t_new = if last { tb } else { t + h };
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    rcont[0][i] = y[i];
                    rcont[1][i] = ydiff;
                    rcont[2][i] = bspl;
                    rcont[3][i] = ydiff - h * k[6][i] - bspl;
                    rcont[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
                }
                let step = Step {
                    t_old: t,
                    t_new,
                    y_new: &ynew,
                    h,
                    rcont: &rcont,
                };
                let ctl = observer(&step);
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                t = t_new;
                if ctl == Control::Stop {
                    return Ok((y, stats));
                }
                h = if last_rejected { h_new.min(h) } else { h_new };
                h_guess = Some(h);
                last_rejected = false;
            } else {
                h = h / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                stats.rejected += 1;
                last_rejected = true;
            }
        }
    }
    Ok((y, stats))
}

#[allow(clippy::too_many_arguments)]
fn stages<S: OdeSystem>(
    sys: &S,
    t: f64,
    mid: f64,
    h: f64,
    y: &[f64],
    k: &mut [Vec<f64>; 7],
    ytmp: &mut [f64],
    ynew: &mut [f64],
    t_last: Option<f64>,
) {
    let n = y.len();
    for i in 0..n {
        ytmp[i] = y[i] + h * A21 * k[0][i];
    }
    sys.rhs(t + C2 * h, mid, ytmp, &mut k[1]);
    for i in 0..n {
        ytmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    sys.rhs(t + C3 * h, mid, ytmp, &mut k[2]);
    for i in 0..n {
        ytmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    sys.rhs(t + C4 * h, mid, ytmp, &mut k[3]);
    for i in 0..n {
        ytmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    sys.rhs(t + C5 * h, mid, ytmp, &mut k[4]);
    for i in 0..n {
        ytmp[i] = y[i] + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    let t_end = t_last.unwrap_or(t + h);
    sys.rhs(t_end, mid, ytmp, &mut k[5]);
    for i in 0..n {
        ynew[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    sys.rhs(t_end, mid, ynew, &mut k[6]);
}

#[allow(clippy::too_many_arguments)]
fn initial_step<S: OdeSystem>(sys: &S, t: f64, mid: f64, y: &[f64], f0: &[f64], opts: &IntegratorOptions, nc: usize, span: f64, stats: &mut Stats) -> f64 {
    let nc = nc.max(1).min(y.len());
    let sc: Vec<f64> = y.iter().take(nc).map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / nc as f64).sqrt();
    let (d0, d1) = (norm(&y[..nc]), norm(&f0[..nc]));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    sys.rhs(t + h0, mid, &y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff[..nc]) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, _mid: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
    }

    #[test]
    fn exponential_decay_with_dense_output() {
        let mut worst = 0.0f64;
        let samples = [0.3, 1.7, 4.2, 9.9];
        let (y, stats) = integrate(&Decay, 0.0, &[1.0], 10.0, &[], &IntegratorOptions::accurate(), |s| {
            let mut out = [0.0];
            for &t in samples.iter().filter(|&&t| t > s.t_old && t <= s.t_new) {
                s.interpolate(t, &mut out);
                worst = worst.max((out[0] - (-t).exp()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!((y[0] - (-10.0f64).exp()).abs() < 1e-11);
        assert!(worst < 1e-10, "dense output error {worst}");
        assert!(stats.accepted > 10);
    }

    #[test]
    fn steps_land_on_breakpoints() {
        let mut ends = Vec::new();
        integrate(&Decay, 0.0, &[1.0], 3.0, &[1.0, 2.0], &IntegratorOptions::exploratory(), |s| {
            ends.push(s.t_new);
            Control::Continue
        })
        .unwrap();
        assert!(ends.contains(&1.0) && ends.contains(&2.0) && ends.contains(&3.0));
    }
}
