//! Master-equation reference integrator on the simulation basis.
//!
//! `drho/dt = -i [H, rho] + sum_m (C_m rho C_m^dag - 1/2 {C_m^dag C_m, rho})`,
//! written as `A + A^dag + sum_m C_m rho C_m^dag` with `A = -i H_eff rho`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock_space::{Basis, BasisState, NamedState, Sector, StateVector};
use crate::model::{Channel, Generator, ModelParams};
use crate::rk4::{stage_profile_times, step_grid, Step};

/// Largest tolerated trace drift before integration is abandoned.
pub const TRACE_FAILURE: f64 = 1e-6;
/// Tolerances of the density-matrix invariants.
pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const EIGENVALUE_TOLERANCE: f64 = 1e-8;
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    basis: Arc<Basis>,
    rho: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(basis: &Arc<Basis>, rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != basis.len() || rho.ncols() != basis.len() {
            return Err(Error::Argument(format!(
                "density matrix is {}x{}, basis has {} states",
                rho.nrows(),
                rho.ncols(),
                basis.len()
            )));
        }
        Ok(DensityMatrix { basis: Arc::clone(basis), rho })
    }

    /// `|psi><psi|` of the normalized `psi`.
    pub fn pure(psi: &StateVector) -> Result<Self> {
        let psi = psi.clone().normalized()?;
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        Self::from_matrix(psi.basis(), &v * v.adjoint())
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `tr(rho^2)`
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Checks trace, Hermiticity and positivity.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::Integration { time: f64::NAN, reason: format!("trace {tr}") });
        }
        let h = self.hermiticity_defect();
        if h > HERMITICITY_TOLERANCE {
            return Err(Error::Integration {
                time: f64::NAN,
                reason: format!("hermiticity defect {h:e}"),
            });
        }
        let m = self.min_eigenvalue();
        if m < -EIGENVALUE_TOLERANCE {
            return Err(Error::Integration { time: f64::NAN, reason: format!("eigenvalue {m:e}") });
        }
        Ok(())
    }

    pub fn population(&self, i: usize) -> f64 {
        self.rho[(i, i)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.basis.len()).map(|i| self.population(i)).collect()
    }

    pub fn population_of(&self, state: &BasisState) -> f64 {
        self.basis.index_of(state).map_or(0.0, |i| self.population(i))
    }

    /// `<phi|rho|phi>`
    pub fn expectation(&self, phi: &StateVector) -> Result<f64> {
        let phi = phi.embed(&self.basis)?;
        let v = nalgebra::DVector::from_column_slice(phi.amplitudes());
        Ok((v.adjoint() * &self.rho * &v)[(0, 0)].re)
    }

    pub fn named_population(&self, name: NamedState) -> f64 {
        self.expectation(&name.vector(&self.basis)).expect("named states live in every simulation basis")
    }

    pub fn sector_population(&self, sector: Sector) -> f64 {
        self.basis.sector_indices(sector).into_iter().map(|i| self.population(i)).sum()
    }

    /// Population with the atom in an excited level.
    pub fn excited_population(&self) -> f64 {
        self.basis
            .states()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.atom != crate::fock_space::AtomLevel::C)
            .map(|(i, _)| self.population(i))
            .sum()
    }

    /// `tr(C_m^dag C_m rho)`, the emission rate into `channel`.
    pub fn channel_rate(&self, gen: &Generator, channel: Channel) -> f64 {
        gen.jump_entries(channel.id())
            .iter()
            .enumerate()
            .filter_map(|(j, hit)| hit.map(|(_, a)| a * a * self.population(j)))
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct DensityEvolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    pub max_purity: f64,
    pub max_hermiticity_defect: f64,
}

impl DensityEvolution {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("an evolution always stores its initial state")
    }

    /// Trapezoidal integral of `f` over the stored snapshots.
    pub fn integrate(&self, f: impl Fn(&DensityMatrix) -> f64) -> f64 {
        let v: Vec<f64> = self.states.iter().map(f).collect();
        self.times.windows(2).zip(v.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
    }
}

/// `out = A + A^dag + sum_m C_m rho C_m^dag`, `A = -i H_eff(t) rho`.
fn liouvillian(gen: &Generator, t: f64, profile_t: f64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, a: &mut DMatrix<C64>) {
    let n = rho.nrows();
    for (x, y) in rho.as_slice().chunks(n).zip(a.as_mut_slice().chunks_mut(n)) {
        gen.derivative(t, profile_t, x, y, true);
    }
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = a[(i, j)] + a[(j, i)].conj();
        }
    }
    for c in 0..Channel::ALL.len() {
        let entries = gen.jump_entries(c);
        for (l, hl) in entries.iter().enumerate() {
            let Some((il, al)) = *hl else { continue };
            for (j, hj) in entries.iter().enumerate() {
                let Some((ij, aj)) = *hj else { continue };
                out[(ij, il)] += rho[(j, l)] * (aj * al);
            }
        }
    }
}

struct Stages {
    k: [DMatrix<C64>; 4],
    tmp: DMatrix<C64>,
    a: DMatrix<C64>,
}

/// `out = rho + h k`
fn shifted(out: &mut DMatrix<C64>, rho: &DMatrix<C64>, k: &DMatrix<C64>, h: f64) {
    for ((o, r), d) in out.iter_mut().zip(rho.iter()).zip(k.iter()) {
        *o = r + d * h;
    }
}

fn rk4_density(gen: &Generator, step: Step, rho: &mut DMatrix<C64>, ws: &mut Stages) {
    let Step { t, dt } = step;
    let [p0, ph, p1] = stage_profile_times(gen.params(), step);
    let Stages { k: [k1, k2, k3, k4], tmp, a } = ws;
    liouvillian(gen, t, p0, rho, k1, a);
    shifted(tmp, rho, k1, 0.5 * dt);
    liouvillian(gen, t + 0.5 * dt, ph, tmp, k2, a);
    shifted(tmp, rho, k2, 0.5 * dt);
    liouvillian(gen, t + 0.5 * dt, ph, tmp, k3, a);
    shifted(tmp, rho, k3, dt);
    liouvillian(gen, t + dt, p1, tmp, k4, a);
    let w = dt / 6.0;
    for i in 0..rho.len() {
        rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
}

/// Integrates the master equation from `0` to `t_end`, keeping every step.
pub fn evolve_density(rho0: &DensityMatrix, p: &ModelParams, t_end: f64, dt: f64) -> Result<DensityEvolution> {
    evolve_density_between(rho0, p, 0.0, t_end, dt, 1)
}

/// Integrates from `t_start` to `t_end`, keeping every `stride`-th state plus the last.
/// Invariants are checked at every kept state; the trace at every step.
pub fn evolve_density_between(
    rho0: &DensityMatrix,
    p: &ModelParams,
    t_start: f64,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<DensityEvolution> {
    rho0.validate()?;
    let basis = rho0.basis();
    let gen = Generator::new(basis, p)?;
    let steps = step_grid(t_start, t_end, dt, &p.breakpoints())?;
    let stride = stride.max(1);
    let n = basis.len();
    let z = DMatrix::<C64>::zeros(n, n);
    let mut ws = Stages { k: [z.clone(), z.clone(), z.clone(), z.clone()], tmp: z.clone(), a: z };
    let mut rho = rho0.rho.clone();
    let tr0 = rho0.trace();
    let mut out = DensityEvolution {
        times: vec![t_start],
        states: vec![rho0.clone()],
        max_trace_drift: 0.0,
        min_eigenvalue: rho0.min_eigenvalue(),
        max_purity: rho0.purity(),
        max_hermiticity_defect: rho0.hermiticity_defect(),
    };
    for (k, step) in steps.iter().enumerate() {
        rk4_density(&gen, *step, &mut rho, &mut ws);
        let t = step.t + step.dt;
        let drift = (rho.trace().re - tr0).abs();
        if !drift.is_finite() || drift > TRACE_FAILURE {
            return Err(Error::Integration { time: t, reason: format!("trace drift {drift:e}") });
        }
        out.max_trace_drift = out.max_trace_drift.max(drift);
        if (k + 1) % stride == 0 || k + 1 == steps.len() {
            let d = DensityMatrix { basis: Arc::clone(basis), rho: rho.clone() };
            out.min_eigenvalue = out.min_eigenvalue.min(d.min_eigenvalue());
            out.max_purity = out.max_purity.max(d.purity());
            out.max_hermiticity_defect = out.max_hermiticity_defect.max(d.hermiticity_defect());
            out.times.push(t);
            out.states.push(d);
        }
    }
    Ok(out)
}

/// `rho(t_exit)` starting from `|I><I|`.
pub fn exit_density(p: &ModelParams, dt: f64) -> Result<DensityMatrix> {
    let basis = Basis::simulation(p.n_max)?;
    let rho0 = DensityMatrix::pure(&NamedState::I.vector(&basis))?;
    let steps = step_grid(0.0, p.t_exit(), dt, &p.breakpoints())?.len();
    let ev = evolve_density_between(&rho0, p, 0.0, p.t_exit(), dt, steps.max(1))?;
    Ok(ev.final_state().clone())
}
