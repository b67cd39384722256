//! Dormand–Prince 5(4) integration for autonomous systems, adaptive or fixed-step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integrator settings shared by every propagation routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// When set, the controller is disabled and this step is used throughout.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
    /// Upper bound on adaptive step size (|h|).
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            fixed_step: None,
            max_steps: 2_000_000,
            max_step: f64::INFINITY,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(step: f64) -> Self {
        IntegratorConfig {
            fixed_step: Some(step),
            ..Default::default()
        }
    }
}

/// What the per-step hook wants the driver to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Samples produced by [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// True when the hook halted the run before the last output time.
    pub stopped: bool,
    pub steps: usize,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// B minus the embedded 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand–Prince step of size `h`; returns (y_new, error_estimate).
pub fn dp5_step<F>(rhs: &F, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    rhs(y, &mut k[0])?;
    for stage in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(stage) {
                acc += A[stage][j] * kj[i];
            }
            tmp[i] = y[i] + h * acc;
        }
        rhs(&tmp, &mut k[stage])?;
    }
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        let mut e = 0.0;
        for s in 0..7 {
            acc += B[s] * k[s][i];
            e += E[s] * k[s][i];
        }
        y_new[i] = y[i] + h * acc;
        err[i] = h * e;
    }
    Ok((y_new, err))
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = y.len().max(1) as f64;
    let s: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(rhs: &F, y: &[f64], span: f64, cfg: &IntegratorConfig) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut f0 = vec![0.0; n];
    rhs(y, &mut f0)?;
    let scale: Vec<f64> = y.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(&f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span.abs());
    let y1: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    rhs(&y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span.abs()).min(cfg.max_step))
}

/// Integrates `y' = rhs(y)` from `t0`, reporting the state at each of `outputs`.
///
/// `outputs` must be monotone in one direction starting at or beyond `t0`. The
/// hook runs after every accepted step and may modify the state in place
/// (projection) or stop the run.
pub fn integrate<F, H>(rhs: &F, y0: &[f64], t0: f64, outputs: &[f64], cfg: &IntegratorConfig, mut hook: H) -> Result<Samples>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
    H: FnMut(f64, &mut Vec<f64>) -> Result<Flow>,
{
    let mut out = Samples {
        times: Vec::with_capacity(outputs.len()),
        states: Vec::with_capacity(outputs.len()),
        stopped: false,
        steps: 0,
    };
    let Some(&last) = outputs.last() else {
        return Ok(out);
    };
    let dir = if last >= t0 { 1.0 } else { -1.0 };
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::Invalid("output times must be monotone".into()));
        }
    }
    if (outputs[0] - t0) * dir < 0.0 {
        return Err(Error::Invalid("first output time precedes the start".into()));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = match cfg.fixed_step {
        Some(dt) => dt.abs(),
        None => initial_step(rhs, &y, last - t0, cfg)?.max(1e-12),
    };

    for &target in outputs {
        while (target - t) * dir > 0.0 {
            if out.steps >= cfg.max_steps {
                return Err(Error::StepUnderflow { tau: t, step: h, last: y });
            }
            let remaining = (target - t).abs();
            let (step, clipped) = if h >= remaining { (remaining, true) } else { (h, false) };
            let min_step = 1e-13 * t.abs().max(1.0);
            if step < min_step && !clipped {
                return Err(Error::StepUnderflow { tau: t, step, last: y });
            }
            let (y_new, err) = match dp5_step(rhs, &y, dir * step) {
                Ok(v) => v,
                Err(e) => {
                    if cfg.fixed_step.is_none() && step > min_step {
                        // stage left the domain; retry smaller
                        h = step * 0.25;
                        continue;
                    }
                    return Err(e);
                }
            };
            out.steps += 1;
            if cfg.fixed_step.is_none() {
                let en = error_norm(&y, &y_new, &err, cfg);
                if !en.is_finite() || en > 1.0 {
                    let fac = if en.is_finite() { (0.9 * en.powf(-0.2)).max(0.2) } else { 0.2 };
                    h = step * fac;
                    continue;
                }
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                if !clipped {
                    h = (step * fac).min(cfg.max_step);
                } else {
                    h = h.max(step * fac.min(1.0)).min(cfg.max_step);
                }
            }
            t = if clipped { target } else { t + dir * step };
            y = y_new;
            if hook(t, &mut y)? == Flow::Stop {
                out.stopped = true;
                out.times.push(t);
                out.states.push(y);
                return Ok(out);
            }
        }
        out.times.push(target);
        out.states.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sho(y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_oscillator_adaptive() {
        let outputs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let s = integrate(&sho, &[0.0, 1.0], 0.0, &outputs, &IntegratorConfig::default(), |_, _| Ok(Flow::Continue)).unwrap();
        for (t, y) in s.times.iter().zip(&s.states) {
            assert!((y[0] - t.sin()).abs() < 1e-9, "t={t}");
            assert!((y[1] - t.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_integration_returns() {
        let cfg = IntegratorConfig::default();
        let fwd = integrate(&sho, &[0.3, -0.2], 0.0, &[4.0], &cfg, |_, _| Ok(Flow::Continue)).unwrap();
        let back = integrate(&sho, &fwd.states[0], 4.0, &[0.0], &cfg, |_, _| Ok(Flow::Continue)).unwrap();
        assert!((back.states[0][0] - 0.3).abs() < 1e-9);
        assert!((back.states[0][1] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let err = |dt: f64| {
            let s = integrate(&sho, &[0.0, 1.0], 0.0, &[2.0], &IntegratorConfig::fixed(dt), |_, _| Ok(Flow::Continue)).unwrap();
            (s.states[0][0] - 2.0f64.sin()).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order > 4.5, "observed order {order}");
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let s = integrate(&sho, &[1.0, 2.0], 0.0, &[0.0], &IntegratorConfig::default(), |_, _| Ok(Flow::Continue)).unwrap();
        assert_eq!(s.states, vec![vec![1.0, 2.0]]);
        assert_eq!(s.steps, 0);
    }

    #[test]
    fn hook_can_stop() {
        let s = integrate(&sho, &[0.0, 1.0], 0.0, &[10.0], &IntegratorConfig::default(), |_, y| {
            Ok(if y[0] > 0.5 { Flow::Stop } else { Flow::Continue })
        })
        .unwrap();
        assert!(s.stopped);
        assert!(s.states[0][0] > 0.5);
    }

    #[test]
    fn rejects_non_monotone_outputs() {
        assert!(integrate(&sho, &[0.0, 1.0], 0.0, &[1.0, 0.5], &IntegratorConfig::default(), |_, _| Ok(Flow::Continue)).is_err());
    }
}
