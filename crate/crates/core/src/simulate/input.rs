use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-smooth input signals with known discontinuity times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Input {
    Zero { dim: usize },
    /// `amplitude` on `[start, end]`, zero elsewhere.
    Pulse { start: f64, end: f64, amplitude: Vec<f64> },
    /// `u_i(t) = Σ_k a_{ik} sin(ω_k t + φ_k)` for `t < until`, zero afterwards.
    SumOfSines {
        /// Row-major `dim × K`.
        amplitudes: Vec<f64>,
        dim: usize,
        omegas: Vec<f64>,
        phases: Vec<f64>,
        until: f64,
    },
}

/// On one segment, `u(t) = G z(t)` with `ż = S z`.
pub(crate) struct LinearGenerator {
    pub g: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub z0: Vec<f64>,
}

impl Input {
    pub fn zero(dim: usize) -> Self {
        Input::Zero { dim }
    }

    pub fn pulse(start: f64, end: f64, amplitude: Vec<f64>) -> Result<Self> {
        if !(end > start) || start < 0.0 {
            return Err(Error::InvalidArgument(format!("pulse needs 0 <= start < end, got [{start}, {end}]")));
        }
        Ok(Input::Pulse { start, end, amplitude })
    }

    /// Random band-limited input with `terms` sine components of frequency at most `max_omega`.
    pub fn random_sines<R: Rng>(rng: &mut R, dim: usize, terms: usize, max_omega: f64, until: f64) -> Self {
        let amplitudes = (0..dim * terms).map(|_| rng.random_range(-1.0..1.0)).collect();
        let omegas = (0..terms).map(|_| rng.random_range(0.0..max_omega)).collect();
        let phases = (0..terms).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Input::SumOfSines {
            amplitudes,
            dim,
            omegas,
            phases,
            until,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Input::Zero { dim } | Input::SumOfSines { dim, .. } => *dim,
            Input::Pulse { amplitude, .. } => amplitude.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Input::Zero { .. })
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            Input::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            Input::Pulse { start, end, amplitude } => {
                let on = t >= *start && t <= *end;
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = if on { *a } else { 0.0 };
                }
            }
            Input::SumOfSines { until, .. } if t < *until => self.sines(t, out),
            Input::SumOfSines { .. } => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn sines(&self, t: f64, out: &mut [f64]) {
        if let Input::SumOfSines {
            amplitudes, omegas, phases, ..
        } = self
        {
            let k = omegas.len();
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..k).map(|j| amplitudes[i * k + j] * (omegas[j] * t + phases[j]).sin()).sum();
            }
        }
    }

    /// Value on the smooth segment containing `seg_mid`, extended continuously to
    /// the segment's end points.
    pub fn eval_on_segment(&self, t: f64, seg_mid: f64, out: &mut [f64]) {
        match self {
            Input::Pulse { start, end, amplitude } => {
                let on = seg_mid >= *start && seg_mid <= *end;
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = if on { *a } else { 0.0 };
                }
            }
            Input::SumOfSines { until, .. } if seg_mid < *until => self.sines(t, out),
            Input::SumOfSines { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            Input::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// Discontinuity times inside `(0, t_end)`, ascending.
    pub fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        let raw = match self {
            Input::Zero { .. } => vec![],
            Input::Pulse { start, end, .. } => vec![*start, *end],
            Input::SumOfSines { until, .. } => vec![*until],
        };
        let mut b: Vec<f64> = raw.into_iter().filter(|&t| t > 0.0 && t < t_end).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Exact linear generator of the input on a segment starting at `t0` that
    /// contains no breakpoint in its interior.
    pub(crate) fn generator(&self, t0: f64, t1: f64) -> LinearGenerator {
        let q = self.dim();
        let mid = 0.5 * (t0 + t1);
        match self {
            Input::Pulse { start, end, amplitude } if mid >= *start && mid <= *end => LinearGenerator {
                g: DMatrix::from_column_slice(q, 1, amplitude),
                s: DMatrix::zeros(1, 1),
                z0: vec![1.0],
            },
            Input::SumOfSines {
                amplitudes,
                omegas,
                phases,
                until,
                ..
            } if mid < *until => {
                let k = omegas.len();
                let mut g = DMatrix::zeros(q, 2 * k);
                let mut s = DMatrix::zeros(2 * k, 2 * k);
                let mut z0 = vec![0.0; 2 * k];
                for j in 0..k {
                    for i in 0..q {
                        g[(i, 2 * j)] = amplitudes[i * k + j];
                    }
                    // (sin, cos)' = ω (cos, −sin)
                    s[(2 * j, 2 * j + 1)] = omegas[j];
                    s[(2 * j + 1, 2 * j)] = -omegas[j];
                    z0[2 * j] = (omegas[j] * t0 + phases[j]).sin();
                    z0[2 * j + 1] = (omegas[j] * t0 + phases[j]).cos();
                }
                LinearGenerator { g, s, z0 }
            }
            _ => LinearGenerator {
                g: DMatrix::zeros(q, 0),
                s: DMatrix::zeros(0, 0),
                z0: vec![],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_values_and_breakpoints() {
        let u = Input::pulse(100.0, 200.0, vec![1.0]).unwrap();
        let mut o = [0.0];
        u.eval(150.0, &mut o);
        assert_eq!(o[0], 1.0);
        u.eval(99.0, &mut o);
        assert_eq!(o[0], 0.0);
        assert_eq!(u.breakpoints(1000.0), vec![100.0, 200.0]);
        assert_eq!(u.breakpoints(150.0), vec![100.0]);
    }

    #[test]
    fn sine_generator_reproduces_signal() {
        let u = Input::SumOfSines {
            amplitudes: vec![0.5, -1.0],
            dim: 1,
            omegas: vec![2.0, 3.0],
            phases: vec![0.1, 0.2],
            until: 10.0,
        };
        let gen = u.generator(1.0, 2.0);
        let z = nalgebra::DVector::from_vec(gen.z0.clone());
        let mut o = [0.0];
        u.eval(1.0, &mut o);
        assert!(((&gen.g * z)[0] - o[0]).abs() < 1e-15);
    }
}
