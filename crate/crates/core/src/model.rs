//! Physical parameters, pulse profiles and the interaction-picture
//! Hamiltonian of the atom crossing two polarization-degenerate cavities.
//!
//! All frequencies are in units of the peak vacuum Rabi frequency `g` only
//! by convention: `g` is an ordinary field and every rate, detuning and time
//! in [`ModelParams`] must be expressed in the same unit system.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::coherent::{calibrate_pulse, CalibrationMode};
use crate::error::{Error, Result};
use crate::fock_space::{
    annihilation_matrix, lowering_matrix, Basis, Cavity, Mode, Polarization, StateVector,
};

/// Photodetectors are ideal throughout.
pub const DETECTOR_EFFICIENCY: f64 = 1.0;

/// Bohr magneton in J/T (CODATA 2018).
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant in J s (exact SI value).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Lande factor of the J = 1 level used for the stray-field estimate.
pub const DEFAULT_LANDE_G: f64 = 1.5;
/// Vacuum Rabi frequency g / 2pi in Hz used to express stray fields in units of g.
pub const DEFAULT_G_OVER_2PI_HZ: f64 = 34.0e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Peak vacuum Rabi frequency; the frequency unit of the simulation.
    pub g: f64,
    /// Peak coupling of each cavity as a multiple of `g` (1 for the bare profile).
    pub amp1: f64,
    pub amp2: f64,
    /// `omega_c - omega_ac`
    pub delta_plus: f64,
    /// `omega_c - omega_bc`
    pub delta_minus: f64,
    /// Interaction window of cavity 1.
    pub t1: f64,
    /// Free flight between the cavities.
    pub tf: f64,
    /// Interaction window of cavity 2.
    pub t2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub shape: PulseShape,
    pub kappa_1p: f64,
    pub kappa_1m: f64,
    pub kappa_2p: f64,
    pub kappa_2m: f64,
    /// Spontaneous decay rate of each atomic transition.
    pub gamma: f64,
    pub n_max: u8,
}

/// Window and width values quoted for the coherent transfer figure.
pub const FIG4_T1: f64 = 1.110;
pub const FIG4_TF: f64 = 0.111;
pub const FIG4_T2: f64 = 1.570;
pub const FIG4_TAU1: f64 = 0.255;
pub const FIG4_TAU2: f64 = 0.448;

/// Named parameter sets, in units of `g`.
pub const PRESET_NAMES: [&str; 6] =
    ["fig4", "fig4-calibrated", "fig4-square", "fig6a", "fig6b", "optical"];

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            g: 1.0,
            amp1: 1.0,
            amp2: 1.0,
            delta_plus: 0.0,
            delta_minus: 0.0,
            t1: FIG4_T1,
            tf: FIG4_TF,
            t2: FIG4_T2,
            tau1: FIG4_TAU1,
            tau2: FIG4_TAU2,
            shape: PulseShape::Gaussian,
            kappa_1p: 0.0,
            kappa_1m: 0.0,
            kappa_2p: 0.0,
            kappa_2m: 0.0,
            gamma: 0.0,
            n_max: 2,
        }
    }
}

impl ModelParams {
    /// Resolves a preset by name.
    ///
    /// * `fig4`: the quoted gaussian widths at bare peak `g` (pulse areas below pi).
    /// * `fig4-calibrated`: same widths, peaks rescaled so both pulse areas are pi.
    /// * `fig4-square`: ideal square pi pulses, `g t1 = pi/(2 sqrt 2)`, `g t2 = pi/2`.
    /// * `fig6a`: calibrated, `Gamma = 0.05 g`, `kappa = 0.1 Gamma`.
    /// * `fig6b`: calibrated, `kappa = 0.03 g`, `Gamma = 0.1 kappa`.
    /// * `optical`: calibrated, `kappa = 0.053 g`, `Gamma = 0.08 g`.
    pub fn preset(name: &str) -> Result<ModelParams> {
        match name {
            "fig4" => Ok(ModelParams::default()),
            "fig4-calibrated" => ModelParams::calibrated(),
            "fig4-square" => Ok(ModelParams {
                shape: PulseShape::Square,
                t1: PI / (2.0 * SQRT_2),
                t2: PI / 2.0,
                ..ModelParams::default()
            }),
            "fig6a" => Ok(ModelParams::calibrated()?.with_kappa(0.005).with_gamma(0.05)),
            "fig6b" => Ok(ModelParams::calibrated()?.with_kappa(0.03).with_gamma(0.003)),
            "optical" => Ok(ModelParams::calibrated()?.with_kappa(0.053).with_gamma(0.08)),
            other => Err(Error::Argument(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    fn calibrated() -> Result<ModelParams> {
        let p = ModelParams::default();
        let p = calibrate_pulse(&p, Cavity::One, PI, CalibrationMode::Amplitude)?;
        calibrate_pulse(&p, Cavity::Two, PI, CalibrationMode::Amplitude)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa_1p = kappa;
        self.kappa_1m = kappa;
        self.kappa_2p = kappa;
        self.kappa_2m = kappa;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_detunings(mut self, delta_plus: f64, delta_minus: f64) -> Self {
        self.delta_plus = delta_plus;
        self.delta_minus = delta_minus;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("amp1", self.amp1),
            ("amp2", self.amp2),
            ("t1", self.t1),
            ("tf", self.tf),
            ("t2", self.t2),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("kappa_1p", self.kappa_1p),
            ("kappa_1m", self.kappa_1m),
            ("kappa_2p", self.kappa_2p),
            ("kappa_2m", self.kappa_2m),
            ("gamma", self.gamma),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Argument(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !self.delta_plus.is_finite() || !self.delta_minus.is_finite() {
            return Err(Error::Argument("detunings must be finite".into()));
        }
        if self.shape == PulseShape::Gaussian && (self.tau1 == 0.0 || self.tau2 == 0.0) {
            return Err(Error::Argument("gaussian widths must be positive".into()));
        }
        if self.n_max < 2 {
            return Err(Error::Argument(format!("n_max = {} cannot hold |I>", self.n_max)));
        }
        Ok(())
    }

    pub fn kappa(&self, mode: Mode) -> f64 {
        match mode {
            Mode::OnePlus => self.kappa_1p,
            Mode::OneMinus => self.kappa_1m,
            Mode::TwoPlus => self.kappa_2p,
            Mode::TwoMinus => self.kappa_2m,
        }
    }

    pub fn min_kappa(&self) -> f64 {
        Mode::ALL.iter().map(|&m| self.kappa(m)).fold(f64::INFINITY, f64::min)
    }

    pub fn is_closed(&self) -> bool {
        self.gamma == 0.0 && Mode::ALL.iter().all(|&m| self.kappa(m) == 0.0)
    }

    pub fn delta(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::Plus => self.delta_plus,
            Polarization::Minus => self.delta_minus,
        }
    }

    pub fn amplitude(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::One => self.amp1,
            Cavity::Two => self.amp2,
        }
    }

    pub fn width(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::One => self.tau1,
            Cavity::Two => self.tau2,
        }
    }

    /// Interaction window `[start, end)` of a cavity.
    pub fn window(&self, cavity: Cavity) -> (f64, f64) {
        match cavity {
            Cavity::One => (0.0, self.t1),
            Cavity::Two => (self.t1 + self.tf, self.t1 + self.tf + self.t2),
        }
    }

    /// Gaussian centre: `t1/2` and `t2/2 + tf + t1`.
    pub fn center(&self, cavity: Cavity) -> f64 {
        let (a, b) = self.window(cavity);
        0.5 * (a + b)
    }

    /// Time at which the atom leaves cavity 2.
    pub fn t_exit(&self) -> f64 {
        self.t1 + self.tf + self.t2
    }

    /// Discontinuities of the coupling profiles inside `(t_start, t_end)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            PulseShape::Gaussian => Vec::new(),
            PulseShape::Square => {
                let (a1, b1) = self.window(Cavity::One);
                let (a2, b2) = self.window(Cavity::Two);
                vec![a1, b1, a2, b2]
            }
        }
    }

    /// Time after which every coupling is below `1e-9 g`.
    pub fn coupling_off_time(&self) -> f64 {
        match self.shape {
            PulseShape::Square => self.t_exit(),
            PulseShape::Gaussian => {
                let reach = (1e9f64).ln().sqrt();
                let end2 = self.center(Cavity::Two) + reach * self.tau2;
                let end1 = self.center(Cavity::One) + reach * self.tau1;
                end1.max(end2).max(self.t_exit())
            }
        }
    }
}

/// Vacuum-coupling profile `g_i(t)` of a cavity.
pub fn coupling(cavity: Cavity, t: f64, p: &ModelParams) -> f64 {
    let peak = p.g * p.amplitude(cavity);
    match p.shape {
        PulseShape::Gaussian => {
            let x = (t - p.center(cavity)) / p.width(cavity);
            peak * (-x * x).exp()
        }
        PulseShape::Square => {
            let (a, b) = p.window(cavity);
            if t >= a && t < b {
                peak
            } else {
                0.0
            }
        }
    }
}

/// `sqrt((2 g_i sqrt(n + 1))^2 + Delta^2)`
pub fn generalized_rabi(g_i: f64, n: u32, delta: f64) -> f64 {
    let coupling = 2.0 * g_i * ((n + 1) as f64).sqrt();
    coupling.hypot(delta)
}

/// Detunings `(Delta+, Delta-)` in rad/s for a stray magnetic field `b` in tesla.
pub fn detunings_from_field(b: f64, lande_g: f64) -> (f64, f64) {
    let d = BOHR_MAGNETON * lande_g * b / HBAR;
    (d, -d)
}

/// [`detunings_from_field`] expressed in units of `g`, given `g / 2pi` in Hz.
pub fn detunings_in_units_of_g(b: f64, lande_g: f64, g_over_2pi_hz: f64) -> (f64, f64) {
    let (p, m) = detunings_from_field(b, lande_g);
    let g = 2.0 * PI * g_over_2pi_hz;
    (p / g, m / g)
}

/// Dense operator on a basis.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub basis: Arc<Basis>,
    pub matrix: DMatrix<C64>,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.basis().as_ref() != self.basis.as_ref() {
            return Err(Error::Argument("state and operator bases differ".into()));
        }
        let v = &self.matrix * nalgebra::DVector::from_column_slice(psi.amplitudes());
        StateVector::from_amplitudes(&self.basis, v.iter().copied().collect())
    }

    /// `max |H - H^dag|`
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `<phi|O|psi>`
    pub fn element(&self, phi: &StateVector, psi: &StateVector) -> Result<C64> {
        Ok(phi.inner(&self.apply(psi)?))
    }
}

/// One decay channel: photon leakage from a mode or spontaneous emission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "&'static str", try_from = "String")]
pub enum Channel {
    Cavity(Mode),
    Atom(Polarization),
}

impl Channel {
    /// Fixed channel order: four cavity modes, then `S+`, `S-`.
    pub const ALL: [Channel; 6] = [
        Channel::Cavity(Mode::OnePlus),
        Channel::Cavity(Mode::OneMinus),
        Channel::Cavity(Mode::TwoPlus),
        Channel::Cavity(Mode::TwoMinus),
        Channel::Atom(Polarization::Plus),
        Channel::Atom(Polarization::Minus),
    ];

    pub fn id(self) -> usize {
        match self {
            Channel::Cavity(m) => m.index(),
            Channel::Atom(Polarization::Plus) => 4,
            Channel::Atom(Polarization::Minus) => 5,
        }
    }

    pub fn from_id(id: usize) -> Option<Channel> {
        Channel::ALL.get(id).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Cavity(Mode::OnePlus) => "a1+",
            Channel::Cavity(Mode::OneMinus) => "a1-",
            Channel::Cavity(Mode::TwoPlus) => "a2+",
            Channel::Cavity(Mode::TwoMinus) => "a2-",
            Channel::Atom(Polarization::Plus) => "S+",
            Channel::Atom(Polarization::Minus) => "S-",
        }
    }

    pub fn from_label(label: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.label() == label)
    }

    pub fn rate(self, p: &ModelParams) -> f64 {
        match self {
            Channel::Cavity(m) => p.kappa(m),
            Channel::Atom(_) => p.gamma,
        }
    }

    /// Cavity whose mirror the photon leaves through, if any.
    pub fn cavity(self) -> Option<Cavity> {
        match self {
            Channel::Cavity(m) => Some(m.cavity()),
            Channel::Atom(_) => None,
        }
    }

    fn unscaled_matrix(self, basis: &Basis) -> DMatrix<C64> {
        match self {
            Channel::Cavity(m) => annihilation_matrix(basis, m),
            Channel::Atom(pol) => lowering_matrix(basis, pol),
        }
    }
}

impl From<Channel> for &'static str {
    fn from(c: Channel) -> Self {
        c.label()
    }
}

impl TryFrom<String> for Channel {
    type Error = String;

    fn try_from(label: String) -> std::result::Result<Self, String> {
        Channel::from_label(&label).ok_or_else(|| format!("unknown channel '{label}'"))
    }
}

#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub channel: Channel,
    /// `sqrt(rate) * L`
    pub op: OperatorMatrix,
}

fn check_basis(basis: &Basis, p: &ModelParams) -> Result<()> {
    p.validate()?;
    if basis.n_max() != p.n_max {
        return Err(Error::Argument(format!(
            "basis truncation n_max = {} differs from params n_max = {}",
            basis.n_max(),
            p.n_max
        )));
    }
    Ok(())
}

/// `S_pol^dag a_{cavity,pol}` on `basis`, ordered (1+, 1-, 2+, 2-).
fn raising_components(basis: &Basis) -> [DMatrix<C64>; 4] {
    Mode::ALL.map(|m| {
        lowering_matrix(basis, m.polarization()).adjoint() * annihilation_matrix(basis, m)
    })
}

/// Complex prefactors `g_i(t) exp(-i Delta_pol t)` of the raising components.
/// Pulse profiles are sampled at `profile_t`, phases at `t`.
fn raising_coefficients(t: f64, profile_t: f64, p: &ModelParams) -> [C64; 4] {
    let g1 = coupling(Cavity::One, profile_t, p);
    let g2 = coupling(Cavity::Two, profile_t, p);
    let ph = C64::from_polar(1.0, -p.delta_plus * t);
    let mh = C64::from_polar(1.0, -p.delta_minus * t);
    [ph * g1, mh * g1, ph * g2, mh * g2]
}

/// Interaction-picture Hamiltonian at time `t`:
/// `sum_i g_i(t) [e^{-i D+ t} S+^dag a_{i+} + e^{-i D- t} S-^dag a_{i-}] + h.c.`
pub fn build_hamiltonian(t: f64, basis: &Arc<Basis>, p: &ModelParams) -> Result<OperatorMatrix> {
    check_basis(basis, p)?;
    let comps = raising_components(basis);
    let coeffs = raising_coefficients(t, t, p);
    let n = basis.len();
    let mut up = DMatrix::<C64>::zeros(n, n);
    for (c, m) in coeffs.iter().zip(&comps) {
        up += m * *c;
    }
    let matrix = &up + up.adjoint();
    Ok(OperatorMatrix { basis: Arc::clone(basis), matrix, hermitian: true })
}

/// The six scaled decay operators, in [`Channel::ALL`] order.
pub fn jump_operators(basis: &Arc<Basis>, p: &ModelParams) -> Result<Vec<JumpOperator>> {
    check_basis(basis, p)?;
    Ok(Channel::ALL
        .iter()
        .map(|&ch| {
            let m = ch.unscaled_matrix(basis) * C64::new(ch.rate(p).sqrt(), 0.0);
            JumpOperator {
                channel: ch,
                op: OperatorMatrix { basis: Arc::clone(basis), matrix: m, hermitian: false },
            }
        })
        .collect())
}

/// `H - (i/2) sum_m C_m^dag C_m`.
pub fn build_effective_hamiltonian(
    t: f64,
    basis: &Arc<Basis>,
    p: &ModelParams,
) -> Result<OperatorMatrix> {
    let h = build_hamiltonian(t, basis, p)?;
    let mut decay = DMatrix::<C64>::zeros(basis.len(), basis.len());
    for j in jump_operators(basis, p)? {
        decay += j.op.matrix.adjoint() * &j.op.matrix;
    }
    let matrix = h.matrix - decay * C64::new(0.0, 0.5);
    Ok(OperatorMatrix { basis: Arc::clone(basis), matrix, hermitian: p.is_closed() })
}

/// Sparse, precompiled form of `H_eff(t)` and the jump operators, used by the
/// integrators' inner loops. Built from the same dense matrices as
/// [`build_effective_hamiltonian`].
#[derive(Clone, Debug)]
pub struct Generator {
    basis: Arc<Basis>,
    params: ModelParams,
    /// (row, col, component, factor) of the raising part.
    terms: Vec<(usize, usize, usize, f64)>,
    /// Diagonal of `sum_m C_m^dag C_m`.
    decay: Vec<f64>,
    /// Per channel, per column: (row, amplitude) of `C_m`.
    jumps: [Vec<Option<(usize, f64)>>; 6],
}

impl Generator {
    pub fn new(basis: &Arc<Basis>, p: &ModelParams) -> Result<Generator> {
        check_basis(basis, p)?;
        let comps = raising_components(basis);
        let n = basis.len();
        let mut terms = Vec::new();
        for (k, m) in comps.iter().enumerate() {
            for j in 0..n {
                for i in 0..n {
                    let z = m[(i, j)];
                    if z.norm() > 0.0 {
                        debug_assert!(z.im == 0.0);
                        terms.push((i, j, k, z.re));
                    }
                }
            }
        }
        let ops = jump_operators(basis, p)?;
        let mut decay = vec![0.0; n];
        let jumps = std::array::from_fn(|c| {
            let m = &ops[c].op.matrix;
            (0..n)
                .map(|j| {
                    let hits: Vec<usize> = (0..n).filter(|&i| m[(i, j)].norm() > 0.0).collect();
                    debug_assert!(hits.len() <= 1, "jump operators are monomial");
                    hits.first().map(|&i| {
                        let a = m[(i, j)].re;
                        decay[j] += a * a;
                        (i, a)
                    })
                })
                .collect()
        });
        Ok(Generator { basis: Arc::clone(basis), params: p.clone(), terms, decay, jumps })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `out = -i H_eff(t) x`; `with_decay = false` drops the anti-Hermitian part.
    ///
    /// Couplings are sampled at `profile_t`, which lets square pulses be
    /// evaluated on the interior of a step that ends on a pulse edge.
    pub fn derivative(
        &self,
        t: f64,
        profile_t: f64,
        x: &[C64],
        out: &mut [C64],
        with_decay: bool,
    ) {
        let c = raising_coefficients(t, profile_t, &self.params);
        for o in out.iter_mut() {
            *o = C64::new(0.0, 0.0);
        }
        // H x = sum c_k (X_k x) + conj(c_k) (X_k^T x)
        for &(i, j, k, f) in &self.terms {
            out[i] += c[k] * f * x[j];
            out[j] += c[k].conj() * f * x[i];
        }
        for o in out.iter_mut() {
            *o = C64::new(o.im, -o.re);
        }
        if with_decay {
            for (j, o) in out.iter_mut().enumerate() {
                *o -= 0.5 * self.decay[j] * x[j];
            }
        }
    }

    /// `<x|C_m^dag C_m|x>` for each channel.
    pub fn jump_weights(&self, x: &[C64]) -> [f64; 6] {
        std::array::from_fn(|c| {
            self.jumps[c]
                .iter()
                .zip(x)
                .filter_map(|(hit, v)| hit.map(|(_, a)| a * a * v.norm_sqr()))
                .sum()
        })
    }

    /// `sum_m <x|C_m^dag C_m|x>`
    pub fn total_jump_weight(&self, x: &[C64]) -> f64 {
        self.decay.iter().zip(x).map(|(d, v)| d * v.norm_sqr()).sum()
    }

    /// Largest single-state decay rate; bounds the jump probability per unit time.
    pub fn max_decay_rate(&self) -> f64 {
        self.decay.iter().copied().fold(0.0, f64::max)
    }

    /// Per column: (row, amplitude) of channel `channel`'s jump operator.
    pub(crate) fn jump_entries(&self, channel: usize) -> &[Option<(usize, f64)>] {
        &self.jumps[channel]
    }

    /// `C_m x` (unnormalized).
    pub fn apply_jump(&self, channel: usize, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        for (j, hit) in self.jumps[channel].iter().enumerate() {
            if let Some((i, a)) = hit {
                out[*i] += *a * x[j];
            }
        }
        out
    }
}

/// Norm of the residual outside sector blocks, used by conservation checks.
pub fn off_sector_norm(op: &OperatorMatrix) -> f64 {
    let states = op.basis.states();
    let mut worst = 0.0f64;
    for (i, si) in states.iter().enumerate() {
        for (j, sj) in states.iter().enumerate() {
            if si.sector() != sj.sector() {
                worst = worst.max(op.matrix[(i, j)].norm());
            }
        }
    }
    worst
}

/// `2 sqrt 2 g` and `2 g`: the resonant Rabi frequency of the `I <-> B` and `B <-> E+` transitions per unit coupling.
pub fn resonant_rabi_factor(cavity: Cavity) -> f64 {
    match cavity {
        Cavity::One => 2.0 * SQRT_2,
        Cavity::Two => 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_space::{named_state, states, NamedState};
    use approx::assert_abs_diff_eq;

    fn h_at(t: f64, p: &ModelParams) -> OperatorMatrix {
        build_hamiltonian(t, &Basis::standard(), p).unwrap()
    }

    #[test]
    fn coupling_profiles() {
        let p = ModelParams::default();
        let peak = p.center(Cavity::One);
        assert_abs_diff_eq!(peak, FIG4_T1 / 2.0);
        assert_abs_diff_eq!(coupling(Cavity::One, peak, &p), 1.0);
        assert_abs_diff_eq!(coupling(Cavity::One, peak + p.tau1, &p), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            p.center(Cavity::Two),
            FIG4_T2 / 2.0 + FIG4_TF + FIG4_T1,
            epsilon = 1e-15
        );
        let sq = ModelParams { shape: PulseShape::Square, ..p };
        assert_eq!(coupling(Cavity::One, 0.5, &sq), 1.0);
        assert_eq!(coupling(Cavity::One, 1.2, &sq), 0.0);
        assert_eq!(coupling(Cavity::Two, 1.5, &sq), 1.0);
    }

    #[test]
    fn rabi_frequency_examples() {
        assert_abs_diff_eq!(generalized_rabi(1.0, 0, 0.0), 2.0);
        assert_abs_diff_eq!(generalized_rabi(1.0, 1, 0.0), 2.0 * SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(generalized_rabi(0.5, 0, 3.0), 10f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_couplings_in_named_basis() {
        let p = ModelParams::default();
        let t = p.center(Cavity::One);
        let h = h_at(t, &p);
        let g1 = coupling(Cavity::One, t, &p);
        let [i, b, d, ep, em] = NamedState::ALL.map(named_state);
        assert_abs_diff_eq!(h.element(&b, &i).unwrap().re, SQRT_2 * g1, epsilon = 1e-12);
        assert!(h.element(&d, &i).unwrap().norm() < 1e-15);

        let p = ModelParams::default().with_detunings(0.3, 0.3);
        for t in [0.2, 1.0, 1.9] {
            let h = h_at(t, &p);
            assert!(h.element(&d, &i).unwrap().norm() < 1e-15);
            assert!(h.element(&b, &em).unwrap().norm() < 1e-15);
            assert!(h.element(&d, &ep).unwrap().norm() < 1e-15);
        }
    }

    #[test]
    fn rewritten_hamiltonian_entries() {
        // Square pulses and arbitrary detunings, restricted to the named states:
        // entries carry the common phase e^{-i sigma t} and an extra i on the
        // sine terms, with sigma = (D+ + D-)/2 and x = (D- - D+) t / 2.
        let p = ModelParams { shape: PulseShape::Square, ..ModelParams::default() }
            .with_detunings(0.4, -0.3);
        let [i, b, d, ep, em] = NamedState::ALL.map(named_state);
        for t in [0.3, 0.9, 1.5, 2.4] {
            let h = h_at(t, &p);
            let g1 = coupling(Cavity::One, t, &p);
            let g2 = coupling(Cavity::Two, t, &p);
            let phase = C64::from_polar(1.0, -(p.delta_plus + p.delta_minus) * t / 2.0);
            let x = (p.delta_minus - p.delta_plus) * t / 2.0;
            let cs = phase * x.cos();
            let sn = phase * C64::new(0.0, x.sin());
            let want = [
                (&b, &i, cs * SQRT_2 * g1),
                (&b, &ep, cs * g2),
                (&d, &em, cs * g2),
                (&d, &i, sn * SQRT_2 * g1),
                (&b, &em, sn * g2),
                (&d, &ep, sn * g2),
                (&ep, &i, C64::new(0.0, 0.0)),
                (&em, &i, C64::new(0.0, 0.0)),
            ];
            for (bra, ket, w) in want {
                let got = h.element(bra, ket).unwrap();
                assert!((got - w).norm() < 1e-12, "t={t}: {got} vs {w}");
            }
        }

        // Two-photon resonance: the simplified form with only B-I, B-E+ and D-E- couplings.
        let delta = 0.35;
        let p = ModelParams { shape: PulseShape::Square, ..ModelParams::default() }
            .with_detunings(delta, delta);
        for t in [0.5, 1.7] {
            let h = h_at(t, &p);
            let ph = C64::from_polar(1.0, -delta * t);
            let g1 = coupling(Cavity::One, t, &p);
            let g2 = coupling(Cavity::Two, t, &p);
            let named = [&i, &b, &d, &ep, &em];
            let mut want = [[C64::new(0.0, 0.0); 5]; 5];
            want[1][0] = ph * SQRT_2 * g1;
            want[1][3] = ph * g2;
            want[2][4] = ph * g2;
            for (r, c) in [(1, 0), (1, 3), (2, 4)] {
                want[c][r] = want[r][c].conj();
            }
            for r in 0..5 {
                for c in 0..5 {
                    let got = h.element(named[r], named[c]).unwrap();
                    assert!((got - want[r][c]).norm() < 1e-12, "({r},{c}) {got}");
                }
            }
        }
    }

    #[test]
    fn effective_hamiltonian_diagonal() {
        let kappa = 0.07;
        let gamma = 0.11;
        let p = ModelParams::default().with_kappa(kappa).with_gamma(gamma);
        let basis = Basis::standard();
        let heff = build_effective_hamiltonian(0.4, &basis, &p).unwrap();
        let ii = basis.index_of(&states::INITIAL).unwrap();
        assert_abs_diff_eq!(heff.matrix[(ii, ii)].im, -kappa, epsilon = 1e-15);
        let ia = basis.index_of(&states::A_ONE_MINUS).unwrap();
        assert_abs_diff_eq!(heff.matrix[(ia, ia)].im, -(kappa + gamma) / 2.0, epsilon = 1e-15);

        let closed = ModelParams::default();
        let h = build_hamiltonian(0.4, &basis, &closed).unwrap();
        let he = build_effective_hamiltonian(0.4, &basis, &closed).unwrap();
        assert_eq!(h.matrix, he.matrix);
    }

    #[test]
    fn jump_operator_consistency() {
        let p = ModelParams::default().with_kappa(0.3).with_gamma(0.2);
        let basis = Basis::standard();
        let ops = jump_operators(&basis, &p).unwrap();
        assert_eq!(ops.len(), 6);
        let mut sum = DMatrix::<C64>::zeros(15, 15);
        for j in &ops {
            sum += j.op.matrix.adjoint() * &j.op.matrix;
        }
        let heff = build_effective_hamiltonian(0.7, &basis, &p).unwrap();
        // Anti-Hermitian part A = (H_eff - H_eff^dag)/2 = -(i/2) sum C^dag C.
        let anti = (&heff.matrix - heff.matrix.adjoint()) * C64::new(0.5, 0.0);
        let diff = (&sum - anti * C64::new(0.0, 2.0)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");

        let i = named_state(NamedState::I);
        let c = &ops[Channel::Cavity(Mode::OnePlus).id()].op;
        let ci = c.apply(&i).unwrap();
        assert_abs_diff_eq!(ci.norm_sqr(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn generator_matches_dense() {
        let p = ModelParams::default().with_kappa(0.05).with_gamma(0.08).with_detunings(0.2, -0.1);
        let basis = Basis::standard();
        let gen = Generator::new(&basis, &p).unwrap();
        let x: Vec<C64> =
            (0..15).map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.91).cos())).collect();
        for t in [0.1, 0.6, 1.3, 2.2] {
            let heff = build_effective_hamiltonian(t, &basis, &p).unwrap();
            let want = (&heff.matrix * nalgebra::DVector::from_column_slice(&x))
                .map(|z| z * C64::new(0.0, -1.0));
            let mut got = vec![C64::new(0.0, 0.0); 15];
            gen.derivative(t, t, &x, &mut got, true);
            for k in 0..15 {
                assert!((got[k] - want[k]).norm() < 1e-13);
            }
        }
        let ops = jump_operators(&basis, &p).unwrap();
        for (c, op) in ops.iter().enumerate() {
            let want = &op.op.matrix * nalgebra::DVector::from_column_slice(&x);
            let got = gen.apply_jump(c, &x);
            for k in 0..15 {
                assert!((got[k] - want[k]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn field_detunings() {
        assert_eq!(detunings_from_field(0.0, DEFAULT_LANDE_G), (0.0, -0.0));
        let (p, m) = detunings_from_field(1e-4, DEFAULT_LANDE_G);
        assert_abs_diff_eq!(p / (2.0 * PI) / 1e6, 2.0994, epsilon = 1e-3);
        assert_eq!(m, -p);
    }

    #[test]
    fn presets_resolve() {
        for name in PRESET_NAMES {
            ModelParams::preset(name).unwrap().validate().unwrap();
        }
        assert!(ModelParams::preset("nope").is_err());
        let opt = ModelParams::preset("optical").unwrap();
        assert_eq!((opt.kappa_2m, opt.gamma), (0.053, 0.08));
    }

    #[test]
    fn mismatched_truncation_is_rejected() {
        let p = ModelParams { n_max: 3, ..ModelParams::default() };
        assert!(matches!(build_hamiltonian(0.0, &Basis::standard(), &p), Err(Error::Argument(_))));
    }
}
