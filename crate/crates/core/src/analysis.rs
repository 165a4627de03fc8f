//! Figures of merit of a trajectory ensemble: success and coincidence
//! probabilities, event classes, the post-selected two-qubit state,
//! fidelities and CHSH values.
//!
//! Qubit `i` is `|0>` when cavity `i` holds a `sigma+` photon and `|1>` for
//! `sigma-`; two-qubit indices are `2 q1 + q2`, so `|E+>` maps to
//! `|psi+> = (|01> + |10>)/sqrt 2`.

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_space::{AtomLevel, BasisState, Cavity, Mode, NamedState, StateVector};
use crate::mcwf::{binomial_se, ClickPattern, TrajectoryRecord, Window};

/// Residual cavity photon number above which click patterns are incomplete.
pub const RESIDUAL_PHOTON_LIMIT: f64 = 1e-3;
/// Groups of the jackknife used for the optimal CHSH value.
pub const JACKKNIFE_GROUPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    NoPhoton,
    OnePhoton,
    TwoSameCavity,
    TwoDiffSeparable,
    TwoDiffEntangled,
}

impl EventClass {
    pub const ALL: [EventClass; 5] = [
        EventClass::NoPhoton,
        EventClass::OnePhoton,
        EventClass::TwoSameCavity,
        EventClass::TwoDiffSeparable,
        EventClass::TwoDiffEntangled,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EventClass::NoPhoton => "no_photon",
            EventClass::OnePhoton => "one_photon",
            EventClass::TwoSameCavity => "two_same_cavity",
            EventClass::TwoDiffSeparable => "two_diff_separable",
            EventClass::TwoDiffEntangled => "two_diff_entangled",
        }
    }
}

/// A mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (mut s, mut c, mut n) = (0.0f64, 0.0f64, 0usize);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
        n += 1;
    }
    ((s + c) / n.max(1) as f64, n)
}

fn probability(values: impl Iterator<Item = f64>) -> Estimate {
    let (p, n) = mean(values);
    Estimate { value: p, se: if n == 0 { 0.0 } else { binomial_se(p, n) } }
}

/// States at the atom's exit, one per trajectory.
pub fn exit_states(records: &[TrajectoryRecord]) -> Vec<StateVector> {
    records.iter().map(|r| r.exit_state.clone()).collect()
}

/// Mean `|<E+|psi>|^2`.
pub fn success_probability(states: &[StateVector]) -> Estimate {
    probability(states.iter().map(|s| NamedState::EPlus.population(s)))
}

/// Coincidence-subspace index of a basis state: atom in `c`, one photon per cavity.
pub fn qubit_index(state: &BasisState) -> Option<usize> {
    if state.atom != AtomLevel::C
        || state.cavity_photons(Cavity::One) != 1
        || state.cavity_photons(Cavity::Two) != 1
    {
        return None;
    }
    let q1 = usize::from(state.photons(Mode::OnePlus) == 0);
    let q2 = usize::from(state.photons(Mode::TwoPlus) == 0);
    Some(2 * q1 + q2)
}

/// Unnormalized projection of `psi` onto the coincidence subspace, in qubit coordinates.
pub fn coincidence_amplitudes(psi: &StateVector) -> Vector4<C64> {
    let mut q = Vector4::zeros();
    for (s, a) in psi.basis().states().iter().zip(psi.amplitudes()) {
        if let Some(k) = qubit_index(s) {
            q[k] += a;
        }
    }
    q
}

/// Mean population of the coincidence subspace.
pub fn coincidence_probability(states: &[StateVector]) -> Estimate {
    probability(states.iter().map(|s| coincidence_amplitudes(s).norm_squared()))
}

/// Post-selected two-qubit density matrix in the basis `{00, 01, 10, 11}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<C64>,
}

fn pauli() -> [Matrix2<C64>; 3] {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

impl TwoQubitState {
    pub fn from_matrix(rho: Matrix4<C64>) -> Result<Self> {
        let s = TwoQubitState { rho };
        s.validate()?;
        Ok(s)
    }

    /// `|v><v| / <v|v>`
    pub fn pure(v: Vector4<C64>) -> Result<Self> {
        let n = v.norm_squared();
        if !(n > 0.0) {
            return Err(Error::Argument("zero two-qubit vector".into()));
        }
        Ok(TwoQubitState { rho: v * v.adjoint() / C64::new(n, 0.0) })
    }

    /// `(|01> + |10>)/sqrt 2`
    pub fn psi_plus_vector() -> Vector4<C64> {
        let h = C64::new(1.0 / SQRT_2, 0.0);
        Vector4::new(C64::new(0.0, 0.0), h, h, C64::new(0.0, 0.0))
    }

    pub fn psi_plus() -> Self {
        TwoQubitState::pure(Self::psi_plus_vector()).expect("nonzero")
    }

    /// `alpha |psi+><psi+| + (1 - alpha)/2 (|01><01| + |10><10|)`
    pub fn model(alpha: f64) -> Self {
        let mut rho = Self::psi_plus().rho * C64::new(alpha, 0.0);
        rho[(1, 1)] += (1.0 - alpha) / 2.0;
        rho[(2, 2)] += (1.0 - alpha) / 2.0;
        TwoQubitState { rho }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-8;
        let tr = self.trace();
        let herm = (self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let h = (self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        let min = h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if (tr - 1.0).abs() > tol || herm > tol || min < -tol {
            return Err(Error::Argument(format!(
                "invalid two-qubit state: trace {tr}, hermiticity defect {herm:e}, min eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    /// `<v|rho|v>` for normalized `v`.
    pub fn fidelity(&self, v: &Vector4<C64>) -> f64 {
        (v.adjoint() * self.rho * v)[(0, 0)].re
    }

    /// `T_uv = tr(rho sigma_u (x) sigma_v)`
    pub fn correlation_tensor(&self) -> Matrix3<f64> {
        let s = pauli();
        Matrix3::from_fn(|u, v| (self.rho * kron(&s[u], &s[v])).trace().re)
    }

    /// `<(a.sigma) (x) (b.sigma)>` for real unit vectors `a`, `b`.
    pub fn correlation(&self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let s = pauli();
        let dir = |n: [f64; 3]| s[0] * C64::new(n[0], 0.0) + s[1] * C64::new(n[1], 0.0) + s[2] * C64::new(n[2], 0.0);
        (self.rho * kron(&dir(a), &dir(b))).trace().re
    }
}

/// Averages the coincidence projections of `states` and renormalizes.
pub fn reconstruct_two_qubit(states: &[StateVector]) -> Result<TwoQubitState> {
    let mut rho = Matrix4::<C64>::zeros();
    for s in states {
        let q = coincidence_amplitudes(s);
        rho += q * q.adjoint();
    }
    let w = rho.trace().re;
    if !(w > 0.0) {
        return Err(Error::NoPostSelection);
    }
    TwoQubitState::from_matrix(rho / C64::new(w, 0.0))
}

/// `<E+|rho_model|E+> = (1 + alpha)/2`
pub fn fidelity_model(alpha: f64) -> f64 {
    (1.0 + alpha) / 2.0
}

/// Unit vectors of the fixed CHSH settings: first party `x`, `z`; second
/// `(x - z)/sqrt 2`, `(x + z)/sqrt 2`.
pub const CHSH_SETTINGS: [[f64; 3]; 4] = [
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [SQRT_2 / 2.0, 0.0, -SQRT_2 / 2.0],
    [SQRT_2 / 2.0, 0.0, SQRT_2 / 2.0],
];

/// `E(a,b) + E(a,b') + E(a',b) - E(a',b') = sqrt 2 (T_xx - T_zz)`.
pub fn chsh_fixed(rho: &TwoQubitState) -> f64 {
    let t = rho.correlation_tensor();
    SQRT_2 * (t[(0, 0)] - t[(2, 2)])
}

/// Largest CHSH value over all settings: `2 sqrt(m1 + m2)` from `T^T T`.
pub fn chsh_optimal(rho: &TwoQubitState) -> f64 {
    let t = rho.correlation_tensor();
    let mut m: Vec<f64> = (t.transpose() * t).symmetric_eigenvalues().iter().copied().collect();
    m.sort_by(|a, b| b.total_cmp(a));
    2.0 * (m[0] + m[1]).max(0.0).sqrt()
}

/// Merit figures of one ensemble; field names are the output schema.
#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeritFigures {
    pub n_traj: usize,
    pub P: f64,
    pub p2ph: f64,
    pub alpha: f64,
    pub F_model: f64,
    pub F_direct: f64,
    pub S_fixed: f64,
    pub S_opt: f64,
    pub se_P: f64,
    pub se_p2ph: f64,
    pub se_alpha: f64,
    pub se_F_model: f64,
    pub se_F_direct: f64,
    pub se_S_fixed: f64,
    pub se_S_opt: f64,
}

/// Standard error of `sum num / sum den` by the delta method.
fn ratio_se(num: &[f64], den: &[f64]) -> f64 {
    let n = num.len();
    if n < 2 {
        return 0.0;
    }
    let (mn, _) = mean(num.iter().copied());
    let (md, _) = mean(den.iter().copied());
    let r = mn / md;
    let (var, _) = mean(num.iter().zip(den).map(|(a, b)| (a - r * b).powi(2)));
    (var * n as f64 / (n as f64 - 1.0) / n as f64).sqrt() / md
}

fn chsh_opt_of(sum: &Matrix4<C64>) -> Option<f64> {
    let w = sum.trace().re;
    (w > 0.0).then(|| chsh_optimal(&TwoQubitState { rho: sum / C64::new(w, 0.0) }))
}

/// Delete-one-group jackknife error of the optimal CHSH value.
fn jackknife_s_opt(projections: &[Matrix4<C64>]) -> f64 {
    let n = projections.len();
    let groups = JACKKNIFE_GROUPS.min(n);
    if groups < 2 {
        return 0.0;
    }
    let total: Matrix4<C64> = projections.iter().sum();
    let mut values = Vec::with_capacity(groups);
    for g in 0..groups {
        let (lo, hi) = (g * n / groups, (g + 1) * n / groups);
        let part: Matrix4<C64> = projections[lo..hi].iter().sum();
        match chsh_opt_of(&(total - part)) {
            Some(v) => values.push(v),
            None => return f64::NAN,
        }
    }
    let (m, _) = mean(values.iter().copied());
    let k = groups as f64;
    ((k - 1.0) / k * values.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
}

/// All merit figures from the exit states of an ensemble.
pub fn merit_figures(states: &[StateVector]) -> Result<MeritFigures> {
    let n = states.len();
    if n == 0 {
        return Err(Error::Argument("merit figures need at least one trajectory".into()));
    }
    let e_plus = TwoQubitState::psi_plus_vector();
    let projections: Vec<Matrix4<C64>> = states
        .iter()
        .map(|s| {
            let q = coincidence_amplitudes(s);
            q * q.adjoint()
        })
        .collect();
    let success: Vec<f64> = projections.iter().map(|m| (e_plus.adjoint() * m * e_plus)[(0, 0)].re).collect();
    let coinc: Vec<f64> = projections.iter().map(|m| m.trace().re).collect();
    let s_fixed: Vec<f64> = projections
        .iter()
        .map(|m| chsh_fixed(&TwoQubitState { rho: *m }))
        .collect();

    let p = probability(success.iter().copied());
    let p2 = probability(coinc.iter().copied());
    let rho = reconstruct_two_qubit(states)?;
    let alpha = p.value / p2.value;
    let se_alpha = ratio_se(&success, &coinc);
    Ok(MeritFigures {
        n_traj: n,
        P: p.value,
        p2ph: p2.value,
        alpha,
        F_model: fidelity_model(alpha),
        F_direct: rho.fidelity(&e_plus),
        S_fixed: chsh_fixed(&rho),
        S_opt: chsh_optimal(&rho),
        se_P: p.se,
        se_p2ph: p2.se,
        se_alpha,
        se_F_model: se_alpha / 2.0,
        se_F_direct: se_alpha,
        se_S_fixed: ratio_se(&s_fixed, &coinc),
        se_S_opt: jackknife_s_opt(&projections),
    })
}

/// Event-class probabilities of a leak-out ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventProbabilities {
    pub n_traj: usize,
    /// Trajectory counts per click pattern, in `ClickPattern::ALL` order.
    pub click_counts: [u64; 4],
    pub classes: Vec<(EventClass, Estimate)>,
    /// Largest photon number left in any trajectory at the end of the window.
    pub max_residual_photons: f64,
}

impl EventProbabilities {
    pub fn get(&self, class: EventClass) -> Estimate {
        self.classes.iter().find(|(c, _)| *c == class).map(|(_, e)| *e).expect("all classes present")
    }
}

/// Click-pattern classes per trajectory; the coincident mass is split into
/// entangled `:= P` and separable `:= coincident fraction - P`.
pub fn classify_events(records: &[TrajectoryRecord], success: Estimate) -> Result<EventProbabilities> {
    let n = records.len();
    if n == 0 {
        return Err(Error::Classification("no trajectories".into()));
    }
    if let Some(r) = records.iter().find(|r| !matches!(r.window, Window::LeakOut { .. })) {
        return Err(Error::Classification(format!(
            "trajectory {} stopped at the exit; click patterns need the leak-out window",
            r.index
        )));
    }
    let max_residual = records.iter().map(|r| r.residual_photons).fold(0.0, f64::max);
    if max_residual > RESIDUAL_PHOTON_LIMIT {
        return Err(Error::Classification(format!(
            "leak-out window too short: {max_residual:e} photons left in the cavities"
        )));
    }
    let mut counts = [0u64; 4];
    for r in records {
        let k = ClickPattern::ALL.iter().position(|&c| c == r.click_pattern()).expect("listed");
        counts[k] += 1;
    }
    let frac = |k: usize| counts[k] as f64 / n as f64;
    let est = |p: f64| Estimate { value: p, se: binomial_se(p, n) };
    let coincident = frac(3);
    let classes = vec![
        (EventClass::NoPhoton, est(frac(0))),
        (EventClass::OnePhoton, est(frac(1))),
        (EventClass::TwoSameCavity, est(frac(2))),
        (
            EventClass::TwoDiffSeparable,
            Estimate {
                value: coincident - success.value,
                se: (binomial_se(coincident, n).powi(2) + success.se.powi(2)).sqrt(),
            },
        ),
        (EventClass::TwoDiffEntangled, success),
    ];
    Ok(EventProbabilities { n_traj: n, click_counts: counts, classes, max_residual_photons: max_residual })
}
