//! Monte Carlo wave-function (quantum-jump) trajectories.
//!
//! Each step draws one uniform `eps`. With `dp = dt sum_m <C_m^dag C_m>`, the
//! state evolves under `H_eff` and is renormalized when `eps >= dp`;
//! otherwise the same `eps` picks the channel whose cumulative share of `dp`
//! first exceeds it and the state collapses onto `C_m psi`.
//!
//! Ensembles are split into fixed blocks of trajectory indices. Every
//! trajectory seeds its own generator from `(master_seed, index)` and blocks
//! are merged in index order, so results do not depend on the worker count.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_space::{Basis, NamedState, Sector, StateVector};
use crate::model::{Channel, Generator, ModelParams};
use crate::rk4::{rk4_step, step_grid, Step, Workspace};

/// Largest admissible jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;
/// Default stochastic step, in units of `1/g`.
pub const DEFAULT_DT: f64 = 1e-3;
/// Tolerance on the between-jump norm growth.
pub const NORM_GROWTH_TOLERANCE: f64 = 1e-10;
/// Default leak-out duration in units of the smallest cavity lifetime.
pub const LEAK_OUT_LIFETIMES: f64 = 8.0;
/// Jump probability per coarse step after the couplings have vanished.
const LEAK_STEP_JUMP_PROBABILITY: f64 = 0.01;
const BLOCK_SIZE: usize = 64;

/// Human-readable statement of the per-trajectory seeding, recorded in outputs.
pub const SEEDING_SCHEME: &str =
    "ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(master_seed) ^ index)), rand_core 0.9";

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed of trajectory `index` under `master_seed`.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index)
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trajectory_seed(master_seed, index))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    /// Time at the end of the step in which the jump happened.
    pub time: f64,
    pub channel: Channel,
    /// Squared norm of the state just before the jump.
    pub norm_sqr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpScheme {
    /// One uniform per step decides occurrence and channel.
    FirstOrder,
    /// Waiting-time unraveling: jump when the decaying norm crosses a uniform threshold.
    NormThreshold,
}

/// Simulated time span.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Window {
    /// Stop when the atom leaves cavity 2.
    Exit,
    /// Continue after the exit until the cavities have emptied.
    LeakOut {
        /// Extra time after the exit; defaults to 8 / min(kappa).
        duration: Option<f64>,
        /// Cavity decay rate used after the exit, overriding the model's.
        kappa: Option<f64>,
    },
}

impl Window {
    pub fn leak_out() -> Window {
        Window::LeakOut { duration: None, kappa: None }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Window::Exit => "exit",
            Window::LeakOut { .. } => "leak-out",
        }
    }
}

/// Which trajectory outcome a click record corresponds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickPattern {
    NoPhoton,
    OnePhoton,
    TwoSameCavity,
    /// One cavity click from each cavity.
    Coincident,
}

impl ClickPattern {
    pub const ALL: [ClickPattern; 4] = [
        ClickPattern::NoPhoton,
        ClickPattern::OnePhoton,
        ClickPattern::TwoSameCavity,
        ClickPattern::Coincident,
    ];

    /// Pattern of cavity clicks; spontaneous emission leaves no click.
    pub fn from_jumps(jumps: &[JumpEvent]) -> ClickPattern {
        let mut per_cavity = [0u32; 2];
        for j in jumps {
            if let Some(c) = j.channel.cavity() {
                per_cavity[c.index()] += 1;
            }
        }
        match per_cavity {
            [0, 0] => ClickPattern::NoPhoton,
            [1, 0] | [0, 1] => ClickPattern::OnePhoton,
            [1, 1] => ClickPattern::Coincident,
            _ => ClickPattern::TwoSameCavity,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// End of the interaction span; `None` means the exit time of the atom.
    pub t_end: Option<f64>,
    pub dt: f64,
    pub scheme: JumpScheme,
    pub window: Window,
    /// Keep every `stride`-th interaction step in time series; `None` picks ~200 points.
    pub stride: Option<usize>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            t_end: None,
            dt: DEFAULT_DT,
            scheme: JumpScheme::FirstOrder,
            window: Window::Exit,
            stride: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub jumps: Vec<JumpEvent>,
    /// Normalized state when the atom leaves cavity 2 (or at `t_end`).
    pub exit_state: StateVector,
    /// Normalized state at the end of the simulated window.
    pub final_state: StateVector,
    /// Steps in which the norm grew between jumps.
    pub norm_violations: u32,
    /// Mean photon number left in the cavities at the end of the window.
    pub residual_photons: f64,
    pub window: Window,
}

impl TrajectoryRecord {
    pub fn named_populations(&self) -> [(NamedState, f64); 5] {
        NamedState::ALL.map(|n| (n, n.population(&self.final_state)))
    }

    /// Click pattern over the whole window.
    pub fn click_pattern(&self) -> ClickPattern {
        ClickPattern::from_jumps(&self.jumps)
    }

    /// Initial sector minus one excitation per jump.
    pub fn expected_sector(&self) -> Option<Sector> {
        let (mut plus, mut minus) = (1i64, 1i64);
        for j in &self.jumps {
            let pol = match j.channel {
                Channel::Cavity(m) => m.polarization(),
                Channel::Atom(p) => p,
            };
            match pol {
                crate::fock_space::Polarization::Plus => plus -= 1,
                crate::fock_space::Polarization::Minus => minus -= 1,
            }
        }
        (plus >= 0 && minus >= 0).then(|| Sector::new(plus as u32, minus as u32))
    }
}

/// One line of a trajectory dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub index: u64,
    pub seed: u64,
    pub window: Window,
    pub jumps: Vec<JumpEvent>,
    pub click_pattern: ClickPattern,
    /// `[re, im]` per basis state, in basis order.
    pub exit_amplitudes: Vec<[f64; 2]>,
    pub final_amplitudes: Vec<[f64; 2]>,
}

impl From<&TrajectoryRecord> for TrajectoryDump {
    fn from(r: &TrajectoryRecord) -> Self {
        let amps = |s: &StateVector| s.amplitudes().iter().map(|a| [a.re, a.im]).collect();
        TrajectoryDump {
            index: r.index,
            seed: r.seed,
            window: r.window,
            jumps: r.jumps.clone(),
            click_pattern: r.click_pattern(),
            exit_amplitudes: amps(&r.exit_state),
            final_amplitudes: amps(&r.final_state),
        }
    }
}

/// Quantity tracked along the ensemble time grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    Basis(usize),
    Named(NamedState),
    Sector(Sector),
}

impl Observable {
    fn evaluate(&self, x: &[C64], basis: &Basis) -> f64 {
        match *self {
            Observable::Basis(i) => x[i].norm_sqr(),
            Observable::Named(n) => n
                .components()
                .iter()
                .map(|(c, s)| c.conj() * basis.index_of(s).map_or(C64::new(0.0, 0.0), |i| x[i]))
                .sum::<C64>()
                .norm_sqr(),
            Observable::Sector(s) => basis
                .states()
                .iter()
                .zip(x)
                .filter(|(b, _)| b.sector() == s)
                .map(|(_, a)| a.norm_sqr())
                .sum(),
        }
    }

    pub fn label(&self, basis: &Basis) -> String {
        match self {
            Observable::Basis(i) => basis.state(*i).to_string(),
            Observable::Named(n) => n.label().to_string(),
            Observable::Sector(s) => match (s.plus, s.minus) {
                (1, 1) => "xi2".into(),
                (1, 0) => "xi1_plus".into(),
                (0, 1) => "xi1_minus".into(),
                (0, 0) => "xi0".into(),
                (p, m) => format!("sector_{p}_{m}"),
            },
        }
    }

    /// Every basis state, the named states and the four manifolds.
    pub fn standard_set(basis: &Basis) -> Vec<Observable> {
        (0..basis.len())
            .map(Observable::Basis)
            .chain(NamedState::ALL.map(Observable::Named))
            .chain(Sector::SIMULATION.map(Observable::Sector))
            .collect()
    }
}

/// Reusable per-parameter machinery for running trajectories.
#[derive(Clone, Debug)]
pub struct Propagator {
    gen: Generator,
    leak_gen: Option<Generator>,
    steps: Vec<Step>,
    leak_steps: Vec<Step>,
    stride: usize,
    scheme: JumpScheme,
    window: Window,
}

/// Result of one stochastic step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub jump: Option<JumpEvent>,
    /// Whether the no-jump evolution increased the norm beyond tolerance.
    pub norm_grew: bool,
}

impl Propagator {
    pub fn new(p: &ModelParams, cfg: &TrajectoryConfig) -> Result<Propagator> {
        let basis = Basis::simulation(p.n_max)?;
        let gen = Generator::new(&basis, p)?;
        let t_end = cfg.t_end.unwrap_or_else(|| p.t_exit());
        if cfg.t_end.is_some() && t_end < p.t_exit() {
            return Err(Error::Argument(format!(
                "t_end = {t_end} ends before the atom leaves cavity 2 at {}",
                p.t_exit()
            )));
        }
        let steps = step_grid(0.0, t_end, cfg.dt, &p.breakpoints())?;
        let stride = cfg.stride.unwrap_or_else(|| (steps.len() / 200).max(1)).max(1);
        let (leak_gen, leak_steps) = match cfg.window {
            Window::Exit => (None, Vec::new()),
            Window::LeakOut { duration, kappa } => {
                let mut lp = p.clone();
                if let Some(k) = kappa {
                    lp = lp.with_kappa(k);
                }
                let duration = match duration {
                    Some(d) => d,
                    None => {
                        let k = lp.min_kappa();
                        if !(k > 0.0) {
                            return Err(Error::Argument(
                                "leak-out window needs every kappa > 0 or an explicit duration"
                                    .into(),
                            ));
                        }
                        LEAK_OUT_LIFETIMES / k
                    }
                };
                let lgen = Generator::new(&basis, &lp)?;
                let t_stop = t_end + duration;
                // Fine steps while the gaussian tails still couple, coarse afterwards.
                let t_off = lp.coupling_off_time().clamp(t_end, t_stop);
                let mut ls = step_grid(t_end, t_off, cfg.dt, &[])?;
                let coarse = (LEAK_STEP_JUMP_PROBABILITY / lgen.max_decay_rate().max(1e-300))
                    .max(cfg.dt)
                    .min((t_stop - t_off).max(cfg.dt));
                ls.extend(step_grid(t_off, t_stop, coarse, &[])?);
                (Some(lgen), ls)
            }
        };
        Ok(Propagator {
            gen,
            leak_gen,
            steps,
            leak_steps,
            stride,
            scheme: cfg.scheme,
            window: cfg.window,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.gen.basis()
    }

    /// Snapshot times of the interaction span (shared by every trajectory).
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        for (k, s) in self.steps.iter().enumerate() {
            if self.is_snapshot(k) {
                times.push(s.t + s.dt);
            }
        }
        times
    }

    fn is_snapshot(&self, k: usize) -> bool {
        (k + 1).is_multiple_of(self.stride) || k + 1 == self.steps.len()
    }

    /// One first-order step of a normalized state `psi` from `t` to `t + dt`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        psi: &mut [C64],
        t: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let mut ws = Workspace::new(psi.len());
        step_first_order(&self.gen, psi, Step { t, dt }, rng, &mut ws)
    }

    /// Runs trajectory `index`, calling `observe(snapshot, state)` at every snapshot.
    pub fn run_observed(
        &self,
        master_seed: u64,
        index: u64,
        mut observe: impl FnMut(usize, &[C64]),
    ) -> Result<TrajectoryRecord> {
        let basis = self.basis();
        let seed = trajectory_seed(master_seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Workspace::new(basis.len());
        let mut x = NamedState::I.vector(basis).into_amplitudes();
        let mut jumps = Vec::new();
        let mut violations = 0u32;
        let mut snap = 0usize;
        let mut scratch = x.clone();
        observe(snap, &x);
        snap += 1;

        let mut threshold: f64 = match self.scheme {
            JumpScheme::NormThreshold => rng.random(),
            JumpScheme::FirstOrder => 0.0,
        };
        let mut advance = |gen: &Generator,
                           step: Step,
                           x: &mut Vec<C64>,
                           rng: &mut ChaCha8Rng,
                           jumps: &mut Vec<JumpEvent>,
                           violations: &mut u32|
         -> Result<()> {
            let outcome = match self.scheme {
                JumpScheme::FirstOrder => step_first_order(gen, x, step, rng, &mut ws)?,
                JumpScheme::NormThreshold => {
                    step_threshold(gen, x, step, rng, &mut threshold, &mut ws)?
                }
            };
            *violations += outcome.norm_grew as u32;
            if let Some(j) = outcome.jump {
                jumps.push(j);
            }
            Ok(())
        };

        for (k, step) in self.steps.iter().enumerate() {
            advance(&self.gen, *step, &mut x, &mut rng, &mut jumps, &mut violations)?;
            if self.is_snapshot(k) {
                normalized_into(&x, &mut scratch);
                observe(snap, &scratch);
                snap += 1;
            }
        }
        normalized_into(&x, &mut scratch);
        let exit_state = StateVector::from_amplitudes(basis, scratch.clone())?;
        if let Some(lgen) = &self.leak_gen {
            for step in &self.leak_steps {
                advance(lgen, *step, &mut x, &mut rng, &mut jumps, &mut violations)?;
            }
        }
        normalized_into(&x, &mut scratch);
        let final_state = StateVector::from_amplitudes(basis, scratch.clone())?;
        let residual_photons = basis
            .states()
            .iter()
            .zip(&scratch)
            .map(|(s, a)| s.total_photons() as f64 * a.norm_sqr())
            .sum();
        Ok(TrajectoryRecord {
            index,
            seed,
            jumps,
            exit_state,
            final_state,
            norm_violations: violations,
            residual_photons,
            window: self.window,
        })
    }

    pub fn run(&self, master_seed: u64, index: u64) -> Result<TrajectoryRecord> {
        self.run_observed(master_seed, index, |_, _| {})
    }
}

fn normalized_into(x: &[C64], out: &mut [C64]) {
    let n = x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for (o, a) in out.iter_mut().zip(x) {
        *o = a / n;
    }
}

fn choose_channel(weights: &[f64; 6], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (c, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = c;
        if u * total < acc {
            return c;
        }
    }
    last
}

fn collapse(gen: &Generator, x: &mut [C64], channel: usize) -> Result<()> {
    let y = gen.apply_jump(channel, x);
    let n = y.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::Integration {
            time: f64::NAN,
            reason: format!("jump channel {channel} annihilated the state"),
        });
    }
    for (o, a) in x.iter_mut().zip(y) {
        *o = a / n;
    }
    Ok(())
}

fn step_first_order<R: Rng + ?Sized>(
    gen: &Generator,
    x: &mut [C64],
    step: Step,
    rng: &mut R,
    ws: &mut Workspace,
) -> Result<StepOutcome> {
    let norm0: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    let weights = gen.jump_weights(x);
    let dp = step.dt * weights.iter().sum::<f64>() / norm0;
    if dp >= MAX_JUMP_PROBABILITY {
        return Err(Error::StepSize { dp, time: step.t });
    }
    let eps: f64 = rng.random();
    if eps >= dp {
        rk4_step(gen, step, x, true, ws);
        let norm: f64 = x.iter().map(|a| a.norm_sqr()).sum();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::Integration { time: step.t, reason: "state norm vanished".into() });
        }
        let norm_grew = norm > norm0 + NORM_GROWTH_TOLERANCE;
        let s = norm.sqrt();
        x.iter_mut().for_each(|a| *a /= s);
        Ok(StepOutcome { jump: None, norm_grew })
    } else {
        // eps / dp is uniform on [0, 1) given a jump.
        let channel = choose_channel(&weights, eps / dp);
        collapse(gen, x, channel)?;
        Ok(StepOutcome {
            jump: Some(JumpEvent {
                time: step.t + step.dt,
                channel: Channel::ALL[channel],
                norm_sqr: norm0,
            }),
            norm_grew: false,
        })
    }
}

fn step_threshold<R: Rng + ?Sized>(
    gen: &Generator,
    x: &mut [C64],
    step: Step,
    rng: &mut R,
    threshold: &mut f64,
    ws: &mut Workspace,
) -> Result<StepOutcome> {
    let norm0: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    let dp = step.dt * gen.total_jump_weight(x) / norm0;
    if dp >= MAX_JUMP_PROBABILITY {
        return Err(Error::StepSize { dp, time: step.t });
    }
    rk4_step(gen, step, x, true, ws);
    let norm: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    let norm_grew = norm > norm0 + NORM_GROWTH_TOLERANCE;
    if norm > *threshold {
        return Ok(StepOutcome { jump: None, norm_grew });
    }
    let weights = gen.jump_weights(x);
    let channel = choose_channel(&weights, rng.random());
    collapse(gen, x, channel)?;
    *threshold = rng.random();
    Ok(StepOutcome {
        jump: Some(JumpEvent { time: step.t + step.dt, channel: Channel::ALL[channel], norm_sqr: norm }),
        norm_grew,
    })
}

/// Runs one trajectory from `|I>`; a pure function of its arguments.
pub fn run_trajectory(
    p: &ModelParams,
    master_seed: u64,
    index: u64,
    cfg: &TrajectoryConfig,
) -> Result<TrajectoryRecord> {
    Propagator::new(p, cfg)?.run(master_seed, index)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
    pub workers: usize,
    #[serde(flatten)]
    pub trajectory: TrajectoryConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_traj: 1000,
            master_seed: 0,
            workers: 1,
            trajectory: TrajectoryConfig::default(),
        }
    }
}

/// Compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Merge-only statistics of a contiguous block of trajectories.
#[derive(Clone, Debug)]
struct Accumulator {
    sum: Vec<Neumaier>,
    sum_sq: Vec<Neumaier>,
    clicks: [u64; 4],
    violations: u64,
    residual: Neumaier,
}

impl Accumulator {
    fn new(cells: usize) -> Self {
        Accumulator {
            sum: vec![Neumaier::default(); cells],
            sum_sq: vec![Neumaier::default(); cells],
            clicks: [0; 4],
            violations: 0,
            residual: Neumaier::default(),
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            a.add(b.value());
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            a.add(b.value());
        }
        for (a, b) in self.clicks.iter_mut().zip(other.clicks) {
            *a += b;
        }
        self.violations += other.violations;
        self.residual.add(other.residual.value());
    }
}

/// Ensemble averages over the interaction time grid.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub window: Window,
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub labels: Vec<String>,
    /// `mean[o][t]`
    pub mean: Vec<Vec<f64>>,
    /// Binomial standard error `sqrt(p (1 - p) / N)`.
    pub std_error: Vec<Vec<f64>>,
    /// Standard error from the sample variance of per-trajectory values.
    pub sample_std_error: Vec<Vec<f64>>,
    /// Trajectory counts per click pattern (leak-out window only).
    pub click_counts: Option<[u64; 4]>,
    pub norm_violations: u64,
    pub mean_residual_photons: f64,
}

impl EnsembleStats {
    pub fn index_of(&self, obs: Observable) -> Option<usize> {
        self.observables.iter().position(|&o| o == obs)
    }

    pub fn series(&self, obs: Observable) -> Option<&[f64]> {
        self.index_of(obs).map(|i| self.mean[i].as_slice())
    }

    /// Mean and binomial standard error at the last snapshot.
    pub fn final_value(&self, obs: Observable) -> Option<(f64, f64)> {
        self.index_of(obs).map(|i| {
            (*self.mean[i].last().unwrap(), *self.std_error[i].last().unwrap())
        })
    }

    pub fn click_count(&self, pattern: ClickPattern) -> Option<u64> {
        self.click_counts.map(|c| c[pattern.slot()])
    }
}

/// `N` trajectories together with their statistics.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub params: ModelParams,
    pub config: EnsembleConfig,
    pub stats: EnsembleStats,
    pub records: Vec<TrajectoryRecord>,
}

fn run_block(
    prop: &Propagator,
    observables: &[Observable],
    n_snap: usize,
    master_seed: u64,
    range: std::ops::Range<usize>,
) -> Result<(Accumulator, Vec<TrajectoryRecord>)> {
    let basis = Arc::clone(prop.basis());
    let mut acc = Accumulator::new(observables.len() * n_snap);
    let mut records = Vec::with_capacity(range.len());
    for index in range {
        let record = prop.run_observed(master_seed, index as u64, |s, x| {
            for (o, obs) in observables.iter().enumerate() {
                let v = obs.evaluate(x, &basis);
                acc.sum[o * n_snap + s].add(v);
                acc.sum_sq[o * n_snap + s].add(v * v);
            }
        })?;
        if matches!(record.window, Window::LeakOut { .. }) {
            acc.clicks[record.click_pattern().slot()] += 1;
        }
        acc.violations += record.norm_violations as u64;
        acc.residual.add(record.residual_photons);
        records.push(record);
    }
    Ok((acc, records))
}

#[cfg(feature = "parallel")]
fn map_blocks<T: Send>(
    workers: usize,
    blocks: &[std::ops::Range<usize>],
    f: impl Fn(std::ops::Range<usize>) -> T + Sync + Send,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if workers <= 1 {
        return Ok(blocks.iter().cloned().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| blocks.par_iter().cloned().map(&f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T: Send>(
    _workers: usize,
    blocks: &[std::ops::Range<usize>],
    f: impl Fn(std::ops::Range<usize>) -> T + Sync + Send,
) -> Result<Vec<T>> {
    Ok(blocks.iter().cloned().map(f).collect())
}

/// Runs `cfg.n_traj` trajectories on `cfg.workers` threads.
pub fn run_ensemble(p: &ModelParams, cfg: &EnsembleConfig) -> Result<Ensemble> {
    if cfg.n_traj == 0 {
        return Err(Error::Argument("an ensemble needs at least one trajectory".into()));
    }
    let prop = Propagator::new(p, &cfg.trajectory)?;
    let basis = Arc::clone(prop.basis());
    let observables = Observable::standard_set(&basis);
    let times = prop.snapshot_times();
    let n_snap = times.len();
    let blocks: Vec<_> = (0..cfg.n_traj)
        .step_by(BLOCK_SIZE)
        .map(|s| s..(s + BLOCK_SIZE).min(cfg.n_traj))
        .collect();
    let outputs = map_blocks(cfg.workers, &blocks, |r| {
        run_block(&prop, &observables, n_snap, cfg.master_seed, r)
    })?;

    let mut total = Accumulator::new(observables.len() * n_snap);
    let mut records = Vec::with_capacity(cfg.n_traj);
    for out in outputs {
        let (acc, recs) = out?;
        total.merge(&acc);
        records.extend(recs);
    }

    let n = cfg.n_traj as f64;
    let mut mean = Vec::with_capacity(observables.len());
    let mut se = Vec::with_capacity(observables.len());
    let mut sample_se = Vec::with_capacity(observables.len());
    for o in 0..observables.len() {
        let cells = o * n_snap..(o + 1) * n_snap;
        let m: Vec<f64> = total.sum[cells.clone()].iter().map(|s| s.value() / n).collect();
        se.push(m.iter().map(|&p| binomial_se(p, cfg.n_traj)).collect());
        sample_se.push(
            total.sum_sq[cells]
                .iter()
                .zip(&m)
                .map(|(s2, &mu)| {
                    if cfg.n_traj < 2 {
                        return 0.0;
                    }
                    let var = (s2.value() / n - mu * mu).max(0.0) * n / (n - 1.0);
                    (var / n).sqrt()
                })
                .collect(),
        );
        mean.push(m);
    }
    let labels = observables.iter().map(|o| o.label(&basis)).collect();
    let click_counts =
        matches!(cfg.trajectory.window, Window::LeakOut { .. }).then_some(total.clicks);
    let stats = EnsembleStats {
        n_traj: cfg.n_traj,
        window: cfg.trajectory.window,
        times,
        observables,
        labels,
        mean,
        std_error: se,
        sample_std_error: sample_se,
        click_counts,
        norm_violations: total.violations,
        mean_residual_photons: total.residual.value() / n,
    };
    Ok(Ensemble { params: p.clone(), config: cfg.clone(), stats, records })
}

/// `sqrt(p (1 - p) / N)`, clamping `p` into `[0, 1]`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    (p * (1.0 - p) / n as f64).sqrt()
}
