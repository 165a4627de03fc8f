//! Closed-system dynamics: fixed-step Schrödinger integration, the analytic
//! square-pulse solutions of both Rabi half-oscillations, and pulse-area
//! calibration.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock_space::{Basis, Cavity, NamedState, StateVector};
use crate::model::{coupling, resonant_rabi_factor, Generator, ModelParams, PulseShape};
use crate::rk4::{rk4_step, step_grid, Workspace};

/// Default integration step, in units of `1/g`.
pub const DEFAULT_DT: f64 = 1e-3;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl EvolutionResult {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("an evolution always stores its initial state")
    }

    pub fn population_series(&self, name: NamedState) -> Vec<f64> {
        self.states.iter().map(|s| name.population(s)).collect()
    }

    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.states[0].norm_sqr();
        self.states.iter().map(|s| (s.norm_sqr() - n0).abs()).fold(0.0, f64::max)
    }
}

/// Integrates `i dpsi/dt = H(t) psi` from `t_start` to `t_end`, keeping every state.
pub fn evolve(
    psi0: &StateVector,
    p: &ModelParams,
    t_start: f64,
    t_end: f64,
    dt_max: f64,
) -> Result<EvolutionResult> {
    evolve_with_stride(psi0, p, t_start, t_end, dt_max, 1)
}

/// As [`evolve`], keeping every `stride`-th state plus the final one.
pub fn evolve_with_stride(
    psi0: &StateVector,
    p: &ModelParams,
    t_start: f64,
    t_end: f64,
    dt_max: f64,
    stride: usize,
) -> Result<EvolutionResult> {
    let basis = psi0.basis();
    let gen = Generator::new(basis, p)?;
    let steps = step_grid(t_start, t_end, dt_max, &p.breakpoints())?;
    let stride = stride.max(1);
    let n0 = psi0.norm_sqr();
    let mut x = psi0.amplitudes().to_vec();
    let mut ws = Workspace::new(x.len());
    let mut times = vec![t_start];
    let mut states = vec![psi0.clone()];
    for (k, step) in steps.iter().enumerate() {
        rk4_step(&gen, *step, &mut x, false, &mut ws);
        let t = step.t + step.dt;
        let drift = (x.iter().map(|a| a.norm_sqr()).sum::<f64>() - n0).abs();
        if drift > NORM_TOLERANCE || !drift.is_finite() {
            return Err(Error::Integration {
                time: t,
                reason: format!("norm drift {drift:.3e} exceeds {NORM_TOLERANCE:e}; reduce dt"),
            });
        }
        if (k + 1) % stride == 0 || k + 1 == steps.len() {
            times.push(t);
            states.push(StateVector::from_amplitudes(basis, x.clone())?);
        }
    }
    Ok(EvolutionResult { times, states })
}

/// `|<name|psi(t_end)>|^2` starting from `|I>` at `t = 0`.
pub fn final_population(p: &ModelParams, t_end: f64, dt: f64, name: NamedState) -> Result<f64> {
    let basis = Basis::simulation(p.n_max)?;
    let psi0 = NamedState::I.vector(&basis);
    let res = evolve_with_stride(&psi0, p, 0.0, t_end, dt, usize::MAX)?;
    Ok(name.population(res.final_state()))
}

/// Amplitudes `(on B, on I)` during a square cavity-1 pulse of coupling `g1`,
/// starting from `|I>` at `t = 0`, with `Omega_B = sqrt(8 g1^2 + Delta^2)`.
pub fn analytic_cavity1(t: f64, g1: f64, delta: f64) -> (C64, C64) {
    let omega = (8.0 * g1 * g1 + delta * delta).sqrt();
    let (s, c) = (0.5 * omega * t).sin_cos();
    let b = C64::from_polar(1.0, -0.5 * delta * t)
        * C64::new(0.0, -2.0 * std::f64::consts::SQRT_2 * g1 / omega * s);
    let i = C64::from_polar(1.0, 0.5 * delta * t) * C64::new(c, -delta / omega * s);
    (b, i)
}

/// Amplitudes `(on E+, on B)` a time `t_prime` into a square cavity-2 pulse of
/// coupling `g2`, entering in `-i|B>`, with `Omega_2 = sqrt(4 g2^2 + Delta^2)`.
///
/// Phases refer to the pulse start. In the interaction picture used by
/// [`evolve`], the numerically obtained E+ amplitude equals this one times
/// `exp(i Delta t0)`, `t0` being the absolute start time of the pulse.
pub fn analytic_cavity2(t_prime: f64, g2: f64, delta: f64) -> (C64, C64) {
    let omega = (4.0 * g2 * g2 + delta * delta).sqrt();
    let (s, c) = (0.5 * omega * t_prime).sin_cos();
    let e = C64::from_polar(1.0, 0.5 * delta * t_prime) * (-2.0 * g2 / omega * s);
    let b = -C64::from_polar(1.0, -0.5 * delta * t_prime) * C64::new(-delta / omega * s, c);
    (e, b)
}

/// What [`calibrate_pulse`] adjusts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Gaussian width `tau_i` (square: window length `t_i`), peak fixed.
    Width,
    /// Peak coupling `amp_i`, widths and windows fixed.
    Amplitude,
}

/// Resonant pulse area of a cavity over its interaction window:
/// `int Omega_B dt` with `Omega_B = 2 sqrt 2 g_1(t)` for cavity 1 and
/// `int Omega_2 dt` with `Omega_2 = 2 g_2(t)` for cavity 2.
pub fn pulse_area(p: &ModelParams, cavity: Cavity) -> f64 {
    let (a, b) = p.window(cavity);
    let factor = resonant_rabi_factor(cavity);
    match p.shape {
        PulseShape::Square => factor * p.g * p.amplitude(cavity) * (b - a),
        PulseShape::Gaussian => factor * adaptive_simpson(&|t| coupling(cavity, t, p), a, b, 1e-15),
    }
}

/// Returns `p` with one pulse adjusted so that its area equals `target_area`
/// within `1e-9`.
pub fn calibrate_pulse(
    p: &ModelParams,
    cavity: Cavity,
    target_area: f64,
    mode: CalibrationMode,
) -> Result<ModelParams> {
    p.validate()?;
    if !(target_area > 0.0) || !target_area.is_finite() {
        return Err(Error::Calibration(format!("target area {target_area} must be positive")));
    }
    if p.g * p.amplitude(cavity) == 0.0 {
        return Err(Error::Calibration("pulse has zero peak coupling".into()));
    }
    let mut out = p.clone();
    let (a, b) = p.window(cavity);
    let window = b - a;
    match (mode, p.shape) {
        (CalibrationMode::Amplitude, _) => {
            let area = pulse_area(p, cavity);
            if area == 0.0 {
                return Err(Error::Calibration("pulse area vanishes inside its window".into()));
            }
            set_amplitude(&mut out, cavity, p.amplitude(cavity) * target_area / area);
        }
        (CalibrationMode::Width, PulseShape::Square) => {
            let len = target_area / (resonant_rabi_factor(cavity) * p.g * p.amplitude(cavity));
            match cavity {
                Cavity::One => out.t1 = len,
                Cavity::Two => out.t2 = len,
            }
        }
        (CalibrationMode::Width, PulseShape::Gaussian) => {
            // The area grows monotonically with the width towards the square limit.
            let sup = resonant_rabi_factor(cavity) * p.g * p.amplitude(cavity) * window;
            if target_area >= sup {
                return Err(Error::Calibration(format!(
                    "window of length {window} bounds the area by {sup:.6}, below the target {target_area:.6}"
                )));
            }
            let area_at = |tau: f64| {
                let mut q = p.clone();
                set_width(&mut q, cavity, tau);
                pulse_area(&q, cavity)
            };
            let mut lo = window * 1e-6;
            let mut hi = window;
            let mut expansions = 0;
            while area_at(hi) < target_area {
                lo = hi;
                hi *= 2.0;
                expansions += 1;
                if expansions > 200 {
                    return Err(Error::Calibration("could not bracket the width".into()));
                }
            }
            if area_at(lo) > target_area {
                return Err(Error::Calibration("target area below the narrowest width".into()));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if area_at(mid) < target_area {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            set_width(&mut out, cavity, 0.5 * (lo + hi));
        }
    }
    let achieved = pulse_area(&out, cavity);
    if (achieved - target_area).abs() > 1e-9 {
        return Err(Error::Calibration(format!(
            "achieved area {achieved} misses target {target_area}"
        )));
    }
    Ok(out)
}

fn set_amplitude(p: &mut ModelParams, cavity: Cavity, amp: f64) {
    match cavity {
        Cavity::One => p.amp1 = amp,
        Cavity::Two => p.amp2 = amp,
    }
}

fn set_width(p: &mut ModelParams, cavity: Cavity, tau: f64) {
    match cavity {
        Cavity::One => p.tau1 = tau,
        Cavity::Two => p.tau2 = tau,
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    // Split first so a narrow peak cannot hide between the initial nodes.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (fa, fm, fb) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            recurse(f, x0, x1, fa, fm, fb, simpson(fa, fm, fb, x0, x1), tol / pieces as f64, 40)
        })
        .sum()
}

/// `pi / (2 sqrt 2)`: square cavity-1 window for a resonant pi pulse at peak `g = 1`.
pub const SQUARE_T1: f64 = PI / (2.0 * std::f64::consts::SQRT_2);
/// `pi / 2`: square cavity-2 window for a resonant pi pulse at peak `g = 1`.
pub const SQUARE_T2: f64 = PI / 2.0;
