//! Fixed-step classical Runge-Kutta stepping shared by the integrators.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{Generator, ModelParams, PulseShape};

/// One integration step starting at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Step {
    pub t: f64,
    pub dt: f64,
}

/// Steps covering `[t_start, t_end]` with size at most `dt_max`, aligned so
/// that no step straddles a point of `breakpoints`.
pub(crate) fn step_grid(
    t_start: f64,
    t_end: f64,
    dt_max: f64,
    breakpoints: &[f64],
) -> Result<Vec<Step>> {
    if !(dt_max > 0.0) || !dt_max.is_finite() {
        return Err(Error::Argument(format!("dt = {dt_max} must be positive")));
    }
    if !(t_end >= t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::Argument(format!("invalid time span [{t_start}, {t_end}]")));
    }
    let mut nodes = vec![t_start];
    let mut inner: Vec<f64> =
        breakpoints.iter().copied().filter(|&b| b > t_start && b < t_end).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    nodes.extend(inner);
    nodes.push(t_end);
    let mut steps = Vec::new();
    for w in nodes.windows(2) {
        let span = w[1] - w[0];
        if span <= 0.0 {
            continue;
        }
        let n = (span / dt_max).ceil().max(1.0) as usize;
        let h = span / n as f64;
        steps.extend((0..n).map(|k| Step { t: w[0] + k as f64 * h, dt: h }));
    }
    Ok(steps)
}

/// Profile sampling times of the three RK4 stage abscissae.
fn profile_times(p: &ModelParams, step: Step) -> [f64; 3] {
    match p.shape {
        PulseShape::Gaussian => [step.t, step.t + 0.5 * step.dt, step.t + step.dt],
        PulseShape::Square => [step.t + 0.5 * step.dt; 3],
    }
}

/// Scratch buffers for [`rk4_step`].
pub(crate) struct Workspace {
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Workspace { k: [z.clone(), z.clone(), z.clone(), z.clone()], tmp: z }
    }
}

/// Advances `x` by one step of `dx/dt = -i H_eff x` (or `-i H x`).
pub(crate) fn rk4_step(
    gen: &Generator,
    step: Step,
    x: &mut [C64],
    with_decay: bool,
    ws: &mut Workspace,
) {
    let Step { t, dt } = step;
    let [p0, ph, p1] = profile_times(gen.params(), step);
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    gen.derivative(t, p0, x, k1, with_decay);
    for i in 0..x.len() {
        tmp[i] = x[i] + k1[i] * (0.5 * dt);
    }
    gen.derivative(t + 0.5 * dt, ph, tmp, k2, with_decay);
    for i in 0..x.len() {
        tmp[i] = x[i] + k2[i] * (0.5 * dt);
    }
    gen.derivative(t + 0.5 * dt, ph, tmp, k3, with_decay);
    for i in 0..x.len() {
        tmp[i] = x[i] + k3[i] * dt;
    }
    gen.derivative(t + dt, p1, tmp, k4, with_decay);
    let w = dt / 6.0;
    for i in 0..x.len() {
        x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
}

/// Stage profile times, shared with the density-matrix integrator.
pub(crate) fn stage_profile_times(p: &ModelParams, step: Step) -> [f64; 3] {
    profile_times(p, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_respects_breakpoints() {
        let steps = step_grid(0.0, 1.0, 0.3, &[0.5, 0.5, 2.0]).unwrap();
        assert_eq!(steps.len(), 4);
        assert!((steps[1].t + steps[1].dt - 0.5).abs() < 1e-15);
        let end = steps.last().map(|s| s.t + s.dt).unwrap();
        assert!((end - 1.0).abs() < 1e-15);
        assert!(step_grid(0.0, 1.0, 0.0, &[]).is_err());
        assert!(step_grid(1.0, 0.0, 0.1, &[]).is_err());
        assert!(step_grid(0.0, 0.0, 0.1, &[]).unwrap().is_empty());
    }
}
