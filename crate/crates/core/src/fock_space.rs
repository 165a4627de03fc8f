//! Truncated Hilbert space of one V-type three-level atom and four cavity
//! modes (two cavities, two circular polarizations each).
//!
//! Basis states are grouped into excitation sectors `(N+, N-)`, where `N+`
//! counts sigma+ photons plus the atom in `a` and `N-` counts sigma- photons
//! plus the atom in `b`. Both numbers are conserved by the coherent
//! Hamiltonian; every decay channel lowers exactly one of them.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atomic level; `C` is the ground state, `A` and `B` the excited states
/// reached by sigma+ and sigma- absorption respectively.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomLevel {
    A,
    B,
    C,
}

impl AtomLevel {
    pub const ALL: [AtomLevel; 3] = [AtomLevel::A, AtomLevel::B, AtomLevel::C];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    Plus,
    Minus,
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::Plus, Polarization::Minus];

    /// Excited level coupled to the ground state by this polarization.
    pub fn excited_level(self) -> AtomLevel {
        match self {
            Polarization::Plus => AtomLevel::A,
            Polarization::Minus => AtomLevel::B,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cavity {
    One,
    Two,
}

impl Cavity {
    pub const ALL: [Cavity; 2] = [Cavity::One, Cavity::Two];

    pub fn index(self) -> usize {
        match self {
            Cavity::One => 0,
            Cavity::Two => 1,
        }
    }
}

/// One of the four cavity modes. The discriminant is the slot of the mode in
/// [`BasisState::occupation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    OnePlus,
    OneMinus,
    TwoPlus,
    TwoMinus,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::OnePlus, Mode::OneMinus, Mode::TwoPlus, Mode::TwoMinus];

    pub fn new(cavity: Cavity, pol: Polarization) -> Mode {
        match (cavity, pol) {
            (Cavity::One, Polarization::Plus) => Mode::OnePlus,
            (Cavity::One, Polarization::Minus) => Mode::OneMinus,
            (Cavity::Two, Polarization::Plus) => Mode::TwoPlus,
            (Cavity::Two, Polarization::Minus) => Mode::TwoMinus,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn cavity(self) -> Cavity {
        match self {
            Mode::OnePlus | Mode::OneMinus => Cavity::One,
            Mode::TwoPlus | Mode::TwoMinus => Cavity::Two,
        }
    }

    pub fn polarization(self) -> Polarization {
        match self {
            Mode::OnePlus | Mode::TwoPlus => Polarization::Plus,
            Mode::OneMinus | Mode::TwoMinus => Polarization::Minus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::OnePlus => "1+",
            Mode::OneMinus => "1-",
            Mode::TwoPlus => "2+",
            Mode::TwoMinus => "2-",
        }
    }
}

/// Atom level plus photon numbers in the order (1+, 1-, 2+, 2-).
///
/// The derived ordering is lexicographic over (atom, n1+, n1-, n2+, n2-).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub atom: AtomLevel,
    pub occupation: [u8; 4],
}

impl BasisState {
    pub const fn new(atom: AtomLevel, occupation: [u8; 4]) -> Self {
        BasisState { atom, occupation }
    }

    pub fn photons(&self, mode: Mode) -> u8 {
        self.occupation[mode.index()]
    }

    pub fn total_photons(&self) -> u32 {
        self.occupation.iter().map(|&n| n as u32).sum()
    }

    pub fn cavity_photons(&self, cavity: Cavity) -> u32 {
        Mode::ALL
            .iter()
            .filter(|m| m.cavity() == cavity)
            .map(|&m| self.photons(m) as u32)
            .sum()
    }

    pub fn sector(&self) -> Sector {
        let o = &self.occupation;
        Sector {
            plus: o[0] as u32 + o[2] as u32 + (self.atom == AtomLevel::A) as u32,
            minus: o[1] as u32 + o[3] as u32 + (self.atom == AtomLevel::B) as u32,
        }
    }

    /// `a_mode |self>` as (image, sqrt(n)), or `None` on vacuum.
    pub fn annihilate(&self, mode: Mode) -> Option<(BasisState, f64)> {
        let n = self.occupation[mode.index()];
        if n == 0 {
            return None;
        }
        let mut image = *self;
        image.occupation[mode.index()] -= 1;
        Some((image, (n as f64).sqrt()))
    }

    /// `a_mode^dag |self>` as (image, sqrt(n+1)); `None` if it would exceed `n_max`.
    pub fn create(&self, mode: Mode, n_max: u8) -> Option<(BasisState, f64)> {
        let n = self.occupation[mode.index()];
        if n >= n_max {
            return None;
        }
        let mut image = *self;
        image.occupation[mode.index()] += 1;
        Some((image, (n as f64 + 1.0).sqrt()))
    }

    /// `S_pol |self>`: the excited level of `pol` decays to `c`.
    pub fn lower(&self, pol: Polarization) -> Option<BasisState> {
        (self.atom == pol.excited_level()).then(|| BasisState::new(AtomLevel::C, self.occupation))
    }

    /// `S_pol^dag |self>`.
    pub fn raise(&self, pol: Polarization) -> Option<BasisState> {
        (self.atom == AtomLevel::C).then(|| BasisState::new(pol.excited_level(), self.occupation))
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atom = match self.atom {
            AtomLevel::A => 'a',
            AtomLevel::B => 'b',
            AtomLevel::C => 'c',
        };
        let o = &self.occupation;
        write!(f, "|{atom};{},{},{},{}>", o[0], o[1], o[2], o[3])
    }
}

/// Conserved excitation numbers `(N+, N-)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sector {
    pub plus: u32,
    pub minus: u32,
}

impl Sector {
    pub const fn new(plus: u32, minus: u32) -> Self {
        Sector { plus, minus }
    }

    pub fn total(&self) -> u32 {
        self.plus + self.minus
    }

    /// Sort key: descending total excitation, then descending `N+`.
    fn order_key(&self) -> (std::cmp::Reverse<u32>, std::cmp::Reverse<u32>) {
        (std::cmp::Reverse(self.total()), std::cmp::Reverse(self.plus))
    }

    /// The manifolds xi_2, xi_1+, xi_1-, xi_0 reachable from the initial state.
    pub const SIMULATION: [Sector; 4] =
        [Sector::new(1, 1), Sector::new(1, 0), Sector::new(0, 1), Sector::new(0, 0)];
}

/// Every basis state in sector `(plus, minus)` with per-mode occupation at
/// most `n_max`, in lexicographic order.
pub fn enumerate_sector(plus: i64, minus: i64, n_max: i64) -> Result<Vec<BasisState>> {
    if plus < 0 || minus < 0 || n_max < 0 {
        return Err(Error::Argument(format!(
            "sector ({plus}, {minus}) with n_max = {n_max}: entries must be non-negative"
        )));
    }
    if n_max < plus + minus {
        return Err(Error::Argument(format!(
            "n_max = {n_max} cannot hold sector ({plus}, {minus})"
        )));
    }
    if n_max > u8::MAX as i64 {
        return Err(Error::Argument(format!("n_max = {n_max} exceeds {}", u8::MAX)));
    }
    let n_max = n_max as u8;
    let mut states = Vec::new();
    for atom in AtomLevel::ALL {
        let p = plus - (atom == AtomLevel::A) as i64;
        let m = minus - (atom == AtomLevel::B) as i64;
        if p < 0 || m < 0 {
            continue;
        }
        let (p, m) = (p as u8, m as u8);
        for n1p in 0..=p {
            let n2p = p - n1p;
            if n1p > n_max || n2p > n_max {
                continue;
            }
            for n1m in 0..=m {
                let n2m = m - n1m;
                if n1m > n_max || n2m > n_max {
                    continue;
                }
                states.push(BasisState::new(atom, [n1p, n1m, n2p, n2m]));
            }
        }
    }
    states.sort();
    Ok(states)
}

/// Ordered basis built from whole excitation sectors.
#[derive(Clone, Debug)]
pub struct Basis {
    states: Vec<BasisState>,
    sectors: Vec<Sector>,
    index: HashMap<BasisState, usize>,
    n_max: u8,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states && self.n_max == other.n_max
    }
}

impl Basis {
    pub fn from_sectors(sectors: &[Sector], n_max: u8) -> Result<Basis> {
        let mut sectors = sectors.to_vec();
        sectors.sort_by_key(|s| s.order_key());
        sectors.dedup();
        let mut states = Vec::new();
        for s in &sectors {
            states.extend(enumerate_sector(s.plus as i64, s.minus as i64, n_max as i64)?);
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Ok(Basis { states, sectors, index, n_max })
    }

    /// The 15-state space (for `n_max = 2`) spanned by sectors (1,1), (1,0), (0,1), (0,0).
    pub fn simulation(n_max: u8) -> Result<Arc<Basis>> {
        Basis::from_sectors(&Sector::SIMULATION, n_max).map(Arc::new)
    }

    /// Default simulation basis with `n_max = 2`.
    pub fn standard() -> Arc<Basis> {
        Basis::simulation(2).expect("n_max = 2 holds every simulation sector")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn state(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    /// Indices of the basis states belonging to `sector`.
    pub fn sector_indices(&self, sector: Sector) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.states[i].sector() == sector).collect()
    }

    fn image_basis(&self, lower: impl Fn(Sector) -> Option<Sector>) -> Arc<Basis> {
        let image: Vec<Sector> = self.sectors.iter().filter_map(|&s| lower(s)).collect();
        Arc::new(
            Basis::from_sectors(&image, self.n_max)
                .expect("lowered sectors fit inside the parent truncation"),
        )
    }
}

/// Complex amplitudes over an ordered basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    basis: Arc<Basis>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zeros(basis: &Arc<Basis>) -> Self {
        StateVector { basis: Arc::clone(basis), amps: vec![C64::new(0.0, 0.0); basis.len()] }
    }

    pub fn from_amplitudes(basis: &Arc<Basis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.len() {
            return Err(Error::Argument(format!(
                "{} amplitudes for a basis of dimension {}",
                amps.len(),
                basis.len()
            )));
        }
        Ok(StateVector { basis: Arc::clone(basis), amps })
    }

    /// Superposition `sum_k c_k |s_k>`; every state must belong to `basis`.
    pub fn from_components(basis: &Arc<Basis>, components: &[(C64, BasisState)]) -> Result<Self> {
        let mut psi = StateVector::zeros(basis);
        for (c, s) in components {
            let i = basis
                .index_of(s)
                .ok_or_else(|| Error::Argument(format!("{s} is not in the basis")))?;
            psi.amps[i] += c;
        }
        Ok(psi)
    }

    pub fn basis_state(basis: &Arc<Basis>, state: BasisState) -> Result<Self> {
        StateVector::from_components(basis, &[(C64::new(1.0, 0.0), state)])
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// Amplitude on `state`, zero when the state lies outside the basis.
    pub fn amplitude_of(&self, state: &BasisState) -> C64 {
        self.basis.index_of(state).map_or(C64::new(0.0, 0.0), |i| self.amps[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Argument("cannot normalize a zero or non-finite vector".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn scaled(mut self, c: C64) -> Self {
        self.amps.iter_mut().for_each(|a| *a *= c);
        self
    }

    /// `<self|other>`. Bases may differ; states are matched by value.
    pub fn inner(&self, other: &StateVector) -> C64 {
        if Arc::ptr_eq(&self.basis, &other.basis) || *self.basis == *other.basis {
            return self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum();
        }
        self.basis
            .states()
            .iter()
            .zip(&self.amps)
            .map(|(s, a)| a.conj() * other.amplitude_of(s))
            .sum()
    }

    /// Sum of two vectors; the result lives on `self`'s basis.
    pub fn add(&self, other: &StateVector) -> Result<StateVector> {
        let mut out = self.clone();
        for (s, b) in other.basis.states().iter().zip(&other.amps) {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            let i = self
                .basis
                .index_of(s)
                .ok_or_else(|| Error::Argument(format!("{s} is not in the left basis")))?;
            out.amps[i] += b;
        }
        Ok(out)
    }

    /// Re-expresses the vector on another basis containing its support.
    pub fn embed(&self, basis: &Arc<Basis>) -> Result<StateVector> {
        StateVector::zeros(basis).add(self)
    }

    pub fn population_of(&self, state: &BasisState) -> f64 {
        self.amplitude_of(state).norm_sqr()
    }

    pub fn sector_population(&self, sector: Sector) -> f64 {
        self.basis
            .states()
            .iter()
            .zip(&self.amps)
            .filter(|(s, _)| s.sector() == sector)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

/// `a_mode |psi>`, expressed on the basis of the image sectors.
pub fn apply_annihilation(mode: Mode, psi: &StateVector) -> StateVector {
    let pol = mode.polarization();
    let basis = psi.basis.image_basis(|s| match pol {
        Polarization::Plus => s.plus.checked_sub(1).map(|p| Sector::new(p, s.minus)),
        Polarization::Minus => s.minus.checked_sub(1).map(|m| Sector::new(s.plus, m)),
    });
    let mut out = StateVector::zeros(&basis);
    for (s, a) in psi.basis.states().iter().zip(&psi.amps) {
        if let Some((image, f)) = s.annihilate(mode) {
            if let Some(i) = basis.index_of(&image) {
                out.amps[i] += a * f;
            }
        }
    }
    out
}

/// `S_pol |psi>` with `S+ = |c><a|`, `S- = |c><b|`.
pub fn apply_atomic_lowering(pol: Polarization, psi: &StateVector) -> StateVector {
    let basis = psi.basis.image_basis(|s| match pol {
        Polarization::Plus => s.plus.checked_sub(1).map(|p| Sector::new(p, s.minus)),
        Polarization::Minus => s.minus.checked_sub(1).map(|m| Sector::new(s.plus, m)),
    });
    let mut out = StateVector::zeros(&basis);
    for (s, a) in psi.basis.states().iter().zip(&psi.amps) {
        if let Some(image) = s.lower(pol) {
            if let Some(i) = basis.index_of(&image) {
                out.amps[i] += a;
            }
        }
    }
    out
}

/// Matrix of `a_mode` on `basis`; images outside the basis are dropped.
pub fn annihilation_matrix(basis: &Basis, mode: Mode) -> DMatrix<C64> {
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for (j, s) in basis.states().iter().enumerate() {
        if let Some((image, f)) = s.annihilate(mode) {
            if let Some(i) = basis.index_of(&image) {
                m[(i, j)] = C64::new(f, 0.0);
            }
        }
    }
    m
}

/// Matrix of `S_pol` on `basis`.
pub fn lowering_matrix(basis: &Basis, pol: Polarization) -> DMatrix<C64> {
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for (j, s) in basis.states().iter().enumerate() {
        if let Some(image) = s.lower(pol) {
            if let Some(i) = basis.index_of(&image) {
                m[(i, j)] = C64::new(1.0, 0.0);
            }
        }
    }
    m
}

/// The alternative basis of the two-excitation manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NamedState {
    /// Initial state: one sigma+ and one sigma- photon in cavity 1.
    I,
    /// Bright state, coupled to `I`.
    B,
    /// Dark state, decoupled from `I` on two-photon resonance.
    D,
    /// Target polarization-entangled state (psi+ of the two cavities).
    EPlus,
    EMinus,
}

pub mod states {
    //! Product states used by the named superpositions.
    use super::{AtomLevel::*, BasisState};

    /// `a+_{1+} a+_{1-} |Omega>`
    pub const INITIAL: BasisState = BasisState::new(C, [1, 1, 0, 0]);
    /// `S+_+ a+_{1-} |Omega>`
    pub const A_ONE_MINUS: BasisState = BasisState::new(A, [0, 1, 0, 0]);
    /// `S+_- a+_{1+} |Omega>`
    pub const B_ONE_PLUS: BasisState = BasisState::new(B, [1, 0, 0, 0]);
    /// `a+_{2+} a+_{1-} |Omega>`
    pub const TWO_PLUS_ONE_MINUS: BasisState = BasisState::new(C, [0, 1, 1, 0]);
    /// `a+_{2-} a+_{1+} |Omega>`
    pub const TWO_MINUS_ONE_PLUS: BasisState = BasisState::new(C, [1, 0, 0, 1]);
    /// `|Omega>`
    pub const VACUUM: BasisState = BasisState::new(C, [0, 0, 0, 0]);
}

impl NamedState {
    pub const ALL: [NamedState; 5] =
        [NamedState::I, NamedState::B, NamedState::D, NamedState::EPlus, NamedState::EMinus];

    pub fn label(self) -> &'static str {
        match self {
            NamedState::I => "I",
            NamedState::B => "B",
            NamedState::D => "D",
            NamedState::EPlus => "Eplus",
            NamedState::EMinus => "Eminus",
        }
    }

    pub fn components(self) -> Vec<(C64, BasisState)> {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        match self {
            NamedState::I => vec![(C64::new(1.0, 0.0), states::INITIAL)],
            NamedState::B => vec![(h, states::A_ONE_MINUS), (h, states::B_ONE_PLUS)],
            NamedState::D => vec![(h, states::A_ONE_MINUS), (-h, states::B_ONE_PLUS)],
            NamedState::EPlus => {
                vec![(h, states::TWO_PLUS_ONE_MINUS), (h, states::TWO_MINUS_ONE_PLUS)]
            }
            NamedState::EMinus => {
                vec![(h, states::TWO_PLUS_ONE_MINUS), (-h, states::TWO_MINUS_ONE_PLUS)]
            }
        }
    }

    pub fn vector(self, basis: &Arc<Basis>) -> StateVector {
        StateVector::from_components(basis, &self.components())
            .expect("named states live in sector (1,1)")
    }

    /// `|<self|psi>|^2`
    pub fn population(self, psi: &StateVector) -> f64 {
        self.components()
            .iter()
            .map(|(c, s)| c.conj() * psi.amplitude_of(s))
            .sum::<C64>()
            .norm_sqr()
    }
}

/// Named state on the default simulation basis.
pub fn named_state(name: NamedState) -> StateVector {
    name.vector(&Basis::standard())
}

/// `sum_k |<phi_k|psi>|^2` over an orthonormal set `subspace`.
pub fn project_population(psi: &StateVector, subspace: &[StateVector]) -> Result<f64> {
    for (i, a) in subspace.iter().enumerate() {
        for (j, b) in subspace.iter().enumerate().skip(i) {
            let expected = if i == j { 1.0 } else { 0.0 };
            if (a.inner(b) - expected).norm() > 1e-10 {
                return Err(Error::Argument(format!(
                    "subspace is not orthonormal: <phi_{i}|phi_{j}> = {}",
                    a.inner(b)
                )));
            }
        }
    }
    Ok(subspace.iter().map(|phi| phi.inner(psi).norm_sqr()).sum())
}
