//! Two donors coupled through the electric dipole of the charge state.
//!
//! With both dipoles perpendicular to the surface the interaction reduces to
//! V |i₁i₂⟩⟨i₁i₂| with V = e²d²/(4πε0εr r³). The entangling phase is obtained
//! from the adiabatic energies of the dressed qubit states. A 64-dimensional
//! effective-frame simulation serves as an independent check.

use std::f64::consts::PI;

use nalgebra::{Dyn, SVector};
use serde::{Deserialize, Serialize};

use crate::effective::EffectiveModel;
use crate::error::{Error, Result};
use crate::gates::wrap_pi;
use crate::linalg::{self, cis, r, DOp, Op8, C64};
use crate::model::BasisConvention;
use crate::propagation::{orbital_rotation, LabModel};
use crate::pulses::{make_cphase_schedule, ControlSample, PulseSchedule};
use crate::SystemParams;

type Vec8 = SVector<C64, 8>;

/// Two donors a distance `separation` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitLayout {
    /// Donor separation r (m).
    pub separation: f64,
    pub qubits: [SystemParams; 2],
    /// Replaces the computed dipole coefficient (rad/s). Useful for
    /// switching the coupling off or scaling it in numerical experiments.
    pub coupling_override: Option<f64>,
}

impl Default for TwoQubitLayout {
    fn default() -> Self {
        TwoQubitLayout {
            separation: 500e-9,
            qubits: [SystemParams::default(); 2],
            coupling_override: None,
        }
    }
}

impl TwoQubitLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::param("separation_r", "must be positive"));
        }
        for q in &self.qubits {
            q.validate()?;
        }
        Ok(())
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling_override = Some(coupling);
        self
    }

    /// Dipole coefficient V/ħ actually used by the simulations.
    pub fn coupling(&self) -> f64 {
        self.coupling_override.unwrap_or_else(|| dipole_coupling_strength(self))
    }
}

/// V/ħ = e² d₁ d₂ / (4π ε0 εr r³ ħ), the coefficient of |i₁i₂⟩⟨i₁i₂|. The
/// interface-state dipole of each donor is taken as e·d and the donor-state
/// dipole as zero.
pub fn dipole_coupling_strength(layout: &TwoQubitLayout) -> f64 {
    let [a, b] = &layout.qubits;
    let k = &a.constants;
    let e = k.electron_charge;
    e * e * a.donor_depth * b.donor_depth
        / (4.0 * PI * k.vacuum_permittivity * k.silicon_relative_permittivity * layout.separation.powi(3) * k.hbar)
}

/// Components (c, s) of |i⟩ = c|g⟩ + s|e⟩ at the given field.
fn interface_components(params: &SystemParams, de: f64) -> (f64, f64) {
    let lam = orbital_rotation(params, de);
    (lam[(0, 0)].re, lam[(1, 0)].re)
}

/// Interface weight with the g–e coherences dropped. Those coherences
/// oscillate at ωE in the rotating frame, so only the populations survive.
fn weight_of(v: &Vec8, c: f64, s: f64) -> f64 {
    let (mut g, mut e) = (0.0, 0.0);
    for k in 0..4 {
        g += v[k].norm_sqr();
        e += v[k + 4].norm_sqr();
    }
    c * c * g + s * s * e
}

/// ⟨ψ| |e⟩⟨g| ⊗ 𝟙 |ψ⟩.
fn orbital_coherence(v: &Vec8) -> C64 {
    (0..4).map(|k| v[k + 4].conj() * v[k]).sum()
}

/// Eigenvector of H′ that best overlaps the bare state `index`, with its
/// energy. Its phase is fixed so that the overlap is real positive.
pub fn dressed_state(
    model: &EffectiveModel,
    sample: &ControlSample,
    noise_de: f64,
    index: usize,
) -> Result<(f64, Vec8)> {
    if index >= BasisConvention::DIM {
        return Err(Error::param("state_index", format!("{index} is not a basis index")));
    }
    let h = model.h_prime(sample, noise_de)?;
    let (vals, vecs) = linalg::eigh8(&h);
    let best = (0..8)
        .max_by(|&a, &b| vecs[(index, a)].norm().total_cmp(&vecs[(index, b)].norm()))
        .unwrap_or(0);
    let mut v: Vec8 = vecs.column(best).into_owned();
    v *= cis(-v[index].arg());
    Ok((vals[best], v))
}

/// |⟨i|ψ⟩|² for the dressed state continuing from bare state `index`,
/// averaged over the fast ωE oscillation of the g–e coherence.
pub fn interface_weight(model: &EffectiveModel, sample: &ControlSample, noise_de: f64, index: usize) -> Result<f64> {
    let (_, v) = dressed_state(model, sample, noise_de, index)?;
    let (c, s) = interface_components(&model.params, sample.de + noise_de);
    Ok(weight_of(&v, c, s))
}

/// One quadrature node of a tracked qubit.
#[derive(Debug, Clone, Copy)]
struct TrackedPoint {
    h: f64,
    /// H′ eigenvalues of [|↑̃⟩, |↓̃⟩].
    energies: [f64; 2],
    weights: [f64; 2],
    coherences: [C64; 2],
    c: f64,
    s: f64,
}

struct Track {
    points: Vec<TrackedPoint>,
    idle_energies: [f64; 2],
    adiabaticity: f64,
}

fn max_overlap_assign(prev: &[Vec8; 2], vecs: &Op8, t: f64) -> Result<[usize; 2]> {
    let mut out = [0usize; 2];
    for (slot, p) in prev.iter().enumerate() {
        let (best, ov) = (0..8)
            .map(|j| (j, p.dotc(&vecs.column(j)).norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if ov < 0.5 {
            return Err(Error::TrackingLost {
                time_ns: t * 1e9,
                overlap: ov,
            });
        }
        out[slot] = best;
    }
    if out[0] == out[1] {
        return Err(Error::TrackingLost {
            time_ns: t * 1e9,
            overlap: 0.5,
        });
    }
    Ok(out)
}

/// Follows |↑̃⟩ and |↓̃⟩ through the schedule by maximal overlap between
/// neighbouring nodes of `grid`, starting from the idle eigenstates.
fn track_qubit(params: &SystemParams, schedule: &PulseSchedule, noise_de: f64, grid: &[(f64, f64)]) -> Result<Track> {
    let model = EffectiveModel::new(params, schedule.omega_e, schedule.omega_b);
    let sub = BasisConvention::QUBIT_SUBSPACE;
    let idle = ControlSample {
        de: params.de_idle,
        de_rate: 0.0,
        ea: 0.0,
        ba: 0.0,
    };
    let mut prev = [Vec8::zeros(); 2];
    let mut idle_energies = [0.0; 2];
    for (k, &idx) in sub.iter().enumerate() {
        let (e, v) = dressed_state(&model, &idle, 0.0, idx)?;
        prev[k] = v;
        idle_energies[k] = e;
    }
    // start from the (possibly noisy) field at t = 0
    let start = schedule.sample(0.0);
    for (k, &idx) in sub.iter().enumerate() {
        prev[k] = dressed_state(
            &model,
            &ControlSample {
                ea: 0.0,
                ba: 0.0,
                ..start
            },
            noise_de,
            idx,
        )?
        .1;
    }

    let mut points = Vec::with_capacity(grid.len());
    for &(t, h) in grid {
        let sample = schedule.sample(t);
        let hp = model.h_prime(&sample, noise_de)?;
        let (vals, vecs) = linalg::eigh8(&hp);
        let pick = max_overlap_assign(&prev, &vecs, t)?;
        let (c, s) = interface_components(params, sample.de + noise_de);
        let mut pt = TrackedPoint {
            h,
            energies: [0.0; 2],
            weights: [0.0; 2],
            coherences: [C64::new(0.0, 0.0); 2],
            c,
            s,
        };
        for k in 0..2 {
            let mut v: Vec8 = vecs.column(pick[k]).into_owned();
            v *= cis(-prev[k].dotc(&v).arg());
            pt.energies[k] = vals[pick[k]];
            pt.weights[k] = weight_of(&v, c, s);
            pt.coherences[k] = orbital_coherence(&v);
            prev[k] = v;
        }
        points.push(pt);
    }
    Ok(Track {
        points,
        idle_energies,
        adiabaticity: single_qubit_nonadiabaticity(params, schedule, noise_de)?,
    })
}

/// Largest population lost by |↑̃⟩ or |↓̃⟩ over one run of `schedule`
/// on a single qubit, from the effective-frame propagator.
fn single_qubit_nonadiabaticity(params: &SystemParams, schedule: &PulseSchedule, noise_de: f64) -> Result<f64> {
    use crate::propagation::{evolve, EvolveOptions, Frame};
    let result = evolve(params, schedule, noise_de, &EvolveOptions::new(Frame::Effective))?;
    let frame = crate::gates::IdleFrame::for_schedule(params, Frame::Effective, schedule)?;
    let block = frame.qubit_block(&result.propagator, schedule.total_time);
    Ok((0..2).map(|k| 1.0 - block[(k, k)].norm_sqr()).fold(0.0, f64::max))
}

/// Options for the adiabatic-energy quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CphaseOptions {
    /// Largest spacing between quadrature nodes (s).
    pub spacing: f64,
    /// Keep the static part of the product of the two g–e coherences
    /// (the τx₁τx₂ term that survives the rotating frame when both drives
    /// share ωE). Without it the pair energy is the plain product of
    /// interface weights.
    pub exchange_term: bool,
}

impl Default for CphaseOptions {
    fn default() -> Self {
        CphaseOptions {
            spacing: 0.5e-9,
            exchange_term: false,
        }
    }
}

/// Phases of the four computational states after a two-qubit operation,
/// ordered ↑↑ (α), ↑↓ (β), ↓↑ (γ), ↓↓ (δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CphaseReport {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// α − β − γ + δ.
    pub phi: f64,
    /// Rz angles (convention Rz(θ) = diag(e^{−iθ/2}, e^{iθ/2}) on
    /// [|↑̃⟩, |↓̃⟩]) for qubits 1 and 2 that turn the gate into
    /// diag(1, 1, 1, e^{iφ}) up to a global phase.
    pub local_corrections: [f64; 2],
    /// Largest population that leaves a computational state. The quadrature
    /// takes it from single-qubit evolutions, the simulation from the 4×4
    /// block.
    pub nonadiabaticity: f64,
    /// Dipole coefficient used (rad/s).
    pub coupling: f64,
}

impl CphaseReport {
    fn from_phases(alpha: f64, beta: f64, gamma: f64, delta: f64, nonadiabaticity: f64, coupling: f64) -> Self {
        CphaseReport {
            alpha,
            beta,
            gamma,
            delta,
            phi: alpha - beta - gamma + delta,
            local_corrections: [alpha - gamma, alpha - beta],
            nonadiabaticity,
            coupling,
        }
    }

    /// The diagonal gate after applying the local corrections, with the ↑↑
    /// phase removed. Ordering ↑↑, ↑↓, ↓↑, ↓↓.
    pub fn corrected_diagonal(&self) -> [C64; 4] {
        let [t1, t2] = self.local_corrections;
        // Rz(θ) multiplies ↑ by e^{−iθ/2} and ↓ by e^{+iθ/2}
        let shift = |up1: bool, up2: bool| {
            let a = if up1 { -0.5 * t1 } else { 0.5 * t1 };
            let b = if up2 { -0.5 * t2 } else { 0.5 * t2 };
            a + b
        };
        let raw = [
            self.alpha + shift(true, true),
            self.beta + shift(true, false),
            self.gamma + shift(false, true),
            self.delta + shift(false, false),
        ];
        raw.map(|p| cis(p - raw[0]))
    }
}

fn check_pair(schedules: [&PulseSchedule; 2]) -> Result<f64> {
    let (a, b) = (schedules[0].total_time, schedules[1].total_time);
    if (a - b).abs() > 1e-15 + 1e-12 * a.abs() {
        return Err(Error::param(
            "schedules",
            format!("durations differ: {a:e} s vs {b:e} s"),
        ));
    }
    Ok(a)
}

/// CPHASE phases from the adiabatic pair energies
/// E_ab = E_a + E_b + V |⟨i|a⟩|² |⟨i|b⟩|², integrated along the schedules.
pub fn cphase_angle(
    layout: &TwoQubitLayout,
    schedules: [&PulseSchedule; 2],
    noise_de: [f64; 2],
    opts: &CphaseOptions,
) -> Result<CphaseReport> {
    layout.validate()?;
    let total = check_pair(schedules)?;
    if !(opts.spacing > 0.0 && opts.spacing <= 1e-9) {
        return Err(Error::param("spacing", "must lie in (0, 1 ns]"));
    }
    // both qubits share one grid, so schedules with different breakpoints
    // (one qubit idling, say) can be paired node by node
    let grid = union_grid(schedules, total, opts.spacing);
    let t1 = track_qubit(&layout.qubits[0], schedules[0], noise_de[0], &grid)?;
    let same = layout.qubits[0] == layout.qubits[1] && schedules[0] == schedules[1] && noise_de[0] == noise_de[1];
    let t2_owned;
    let t2 = if same {
        &t1
    } else {
        t2_owned = track_qubit(&layout.qubits[1], schedules[1], noise_de[1], &grid)?;
        &t2_owned
    };
    let v = layout.coupling();
    // idle pair energies: both qubits in |g⟩ at the idle field
    let idle_w = |p: &SystemParams| p.interface_weight_ground(p.de_idle);
    let idle_shift = v * idle_w(&layout.qubits[0]) * idle_w(&layout.qubits[1]);
    let mut phases = [0.0f64; 4];
    for (p, q) in t1.points.iter().zip(&t2.points) {
        for (n, (a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let mut pair = p.weights[a] * q.weights[b];
            if opts.exchange_term {
                pair += 2.0 * p.c * p.s * q.c * q.s * (p.coherences[a] * q.coherences[b].conj()).re;
            }
            let e = p.energies[a] - t1.idle_energies[a] + q.energies[b] - t2.idle_energies[b] + v * pair - idle_shift;
            phases[n] -= e * p.h;
        }
    }
    Ok(CphaseReport::from_phases(
        phases[0],
        phases[1],
        phases[2],
        phases[3],
        t1.adiabaticity.max(t2.adiabaticity),
        v,
    ))
}

/// φ for the default smooth CPHASE schedule of duration `total` applied to
/// both qubits.
pub fn cphase_for_duration(layout: &TwoQubitLayout, total: f64, opts: &CphaseOptions) -> Result<CphaseReport> {
    let s1 = make_cphase_schedule(&layout.qubits[0], total)?;
    let s2 = make_cphase_schedule(&layout.qubits[1], total)?;
    cphase_angle(layout, [&s1, &s2], [0.0; 2], opts)
}

/// Duration range searched for a CPHASE gate (s).
pub const CZ_SEARCH_RANGE: (f64, f64) = (100e-9, 750e-9);

/// Shortest duration in [100, 750] ns at which the default smooth schedule
/// accumulates |φ| = `target`. The scan is checked for monotonicity up to
/// the crossing.
pub fn cphase_duration_search(layout: &TwoQubitLayout, target: f64, opts: &CphaseOptions) -> Result<f64> {
    use rayon::prelude::*;
    if !(target > 0.0 && target <= PI + 1e-12) {
        return Err(Error::param("phi", "target must lie in (0, π]"));
    }
    let (lo, hi) = CZ_SEARCH_RANGE;
    let n = 27;
    let times: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let phis = times
        .par_iter()
        .map(|&t| cphase_for_duration(layout, t, opts).map(|rep| rep.phi.abs()))
        .collect::<Result<Vec<f64>>>()?;
    let k = phis.iter().position(|&p| p >= target).ok_or_else(|| Error::NoRoot {
        lo,
        hi,
        what: format!("|φ| reaches only {:.4} rad", phis.iter().cloned().fold(0.0, f64::max)),
    })?;
    if k == 0 {
        return Err(Error::NoRoot {
            lo,
            hi,
            what: format!("|φ| already exceeds {target:.4} at the lower end"),
        });
    }
    if phis[..=k].windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Calibration("φ(T) is not monotone below the crossing".into()));
    }
    let f = |t: f64| cphase_for_duration(layout, t, opts).map(|rep| rep.phi.abs() - target);
    let (a, b) = ((times[k - 1], phis[k - 1] - target), (times[k], phis[k] - target));
    let guess = a.0 + (b.0 - a.0) * a.1 / (a.1 - b.1);
    crate::gates::find_root(f, a, b, guess, 1e-12, "cphase duration")
}

/// Duration of a CZ gate (|φ| = π) for the default smooth schedule.
pub fn cz_duration_search(layout: &TwoQubitLayout) -> Result<f64> {
    cphase_duration_search(layout, PI, &CphaseOptions::default())
}

/// Drive settings held constant for a square CPHASE pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareCphase {
    /// ΔE during the pulse (V/m).
    pub de: f64,
    /// AC electric amplitude (V/m).
    pub ea: f64,
    /// Drive detuning from the ⇓ charge transition at `de` (rad/s).
    pub detuning: f64,
}

impl Default for SquareCphase {
    fn default() -> Self {
        SquareCphase {
            de: 2000.0,
            ea: 30.0,
            detuning: crate::mhz(5.0),
        }
    }
}

impl SquareCphase {
    /// The single-qubit frame and control point of the pulse.
    pub fn model_and_sample(&self, params: &SystemParams) -> (EffectiveModel, ControlSample) {
        let cfg = crate::pulses::CphaseConfig {
            de_hold: self.de,
            detuning: self.detuning,
            ..crate::pulses::CphaseConfig::new(1e-6)
        };
        let (_, omega_b) = crate::pulses::reference_frame(params);
        let model = EffectiveModel::new(params, cfg.omega_e(params), omega_b);
        let sample = ControlSample {
            de: self.de,
            de_rate: 0.0,
            ea: self.ea,
            ba: 0.0,
        };
        (model, sample)
    }
}

/// φ/T (rad/s) of a square pulse applied to both qubits, from the static
/// pair energies. With E_ab = E_a + E_b + V w_a w_b the single-qubit terms
/// cancel in α − β − γ + δ, leaving −V (w↑ − w↓₁)(w↑ − w↓₂).
pub fn square_cphase_rate(layout: &TwoQubitLayout, pulse: &SquareCphase) -> Result<f64> {
    layout.validate()?;
    let mut diff = [0.0; 2];
    for (k, p) in layout.qubits.iter().enumerate() {
        let (model, sample) = pulse.model_and_sample(p);
        let up = interface_weight(&model, &sample, 0.0, BasisConvention::QUBIT_UP)?;
        let down = interface_weight(&model, &sample, 0.0, BasisConvention::QUBIT_DOWN)?;
        diff[k] = up - down;
    }
    Ok(-layout.coupling() * diff[0] * diff[1])
}

/// Options for the 64-dimensional effective-frame simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitOptions {
    pub dt: f64,
    /// Shift ωE by the dipole-induced change of the g–e splitting, so that
    /// the detuning written into the schedule refers to the coupled system.
    pub adjust_omega_e: bool,
    /// Keep the static |e g⟩⟨g e| + h.c. exchange part of the interaction.
    pub exchange_term: bool,
}

impl Default for TwoQubitOptions {
    fn default() -> Self {
        TwoQubitOptions {
            dt: 0.2e-9,
            adjust_omega_e: true,
            exchange_term: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoQubitResult {
    pub propagator: DOp,
    /// Computational block with the idle phases removed, ordering ↑↑, ↑↓,
    /// ↓↑, ↓↓.
    pub block: DOp,
    pub block_unitarity_defect: f64,
    pub report: CphaseReport,
    /// ωE actually used for each qubit.
    pub omega_e: [f64; 2],
    pub step_count: usize,
}

fn full_projector(params: &SystemParams, de: f64) -> DOp {
    let (c, s) = interface_components(params, de);
    let orb = DOp::from_row_slice(2, 2, &[r(c * c), r(c * s), r(c * s), r(s * s)]);
    linalg::kron(&orb, &DOp::identity(4, 4))
}

/// Change of qubit 1's |g↓⇓⟩ → |e↓⇓⟩ splitting caused by the dipole
/// coupling to qubit 2 sitting in |g↓⇓⟩, both at field `de`. Found by
/// diagonalizing the coupled static Hamiltonian.
pub fn coupled_splitting_shift(layout: &TwoQubitLayout, de: f64) -> f64 {
    let orbital_static = |p: &SystemParams| {
        let lam = crate::propagation::orbital_transform(p, de);
        linalg::to_dyn(&(lam * LabModel::new(p).static_hamiltonian(de) * lam.adjoint()))
    };
    let h1 = orbital_static(&layout.qubits[0]);
    let h2 = orbital_static(&layout.qubits[1]);
    let id = DOp::identity(8, 8);
    let v = layout.coupling();
    let h = linalg::kron(&h1, &id)
        + linalg::kron(&id, &h2)
        + linalg::kron(
            &full_projector(&layout.qubits[0], de),
            &full_projector(&layout.qubits[1], de),
        ) * r(v);
    let g = BasisConvention::index(0, 0, 0);
    let e = BasisConvention::index(1, 0, 0);
    let energy_of = |h: &DOp, target: usize| {
        let (vals, vecs) = linalg::eigh(h);
        let best = (0..vals.len())
            .max_by(|&a, &b| vecs[(target, a)].norm().total_cmp(&vecs[(target, b)].norm()))
            .unwrap_or(0);
        vals[best]
    };
    let coupled = energy_of(&h, 8 * e + g) - energy_of(&h, 8 * g + g);
    let bare = energy_of(&h1, e) - energy_of(&h1, g);
    coupled - bare
}

/// Midpoint grid cut at the breakpoints of both schedules.
fn union_grid(schedules: [&PulseSchedule; 2], total: f64, dt: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = schedules
        .iter()
        .flat_map(|s| s.breakpoints())
        .filter(|&t| t > 0.0 && t < total)
        .collect();
    cuts.push(0.0);
    cuts.push(total);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-18);
    let mut steps = Vec::new();
    for w in cuts.windows(2) {
        let n = ((w[1] - w[0]) / dt).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        steps.extend((0..n).map(|k| (w[0] + (k as f64 + 0.5) * h, h)));
    }
    steps
}

/// Field at the peak of the AC drive, used as the operating point of the ωE
/// adjustment.
fn drive_operating_field(schedule: &PulseSchedule) -> f64 {
    let n = 2000;
    let (t, _) = (0..=n)
        .map(|k| {
            let t = schedule.total_time * k as f64 / n as f64;
            (t, schedule.ea.value(t).abs())
        })
        .fold((0.0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    schedule.de.value(t)
}

/// Rotating-frame dipole interaction. Orbital populations keep their
/// weights, the product of coherences keeps only its static part.
fn interaction_rwa(layout: &TwoQubitLayout, de: [f64; 2], v: f64, exchange: bool) -> DOp {
    let (c1, s1) = interface_components(&layout.qubits[0], de[0]);
    let (c2, s2) = interface_components(&layout.qubits[1], de[1]);
    let mut h = DOp::zeros(64, 64);
    for a in 0..8 {
        for b in 0..8 {
            let w1 = if a < 4 { c1 * c1 } else { s1 * s1 };
            let w2 = if b < 4 { c2 * c2 } else { s2 * s2 };
            h[(8 * a + b, 8 * a + b)] += r(v * w1 * w2);
        }
    }
    if !exchange {
        return h;
    }
    let x = v * c1 * s1 * c2 * s2;
    // |e⟩⟨g| ⊗ |g⟩⟨e| and its adjoint, with spins untouched
    for sa in 0..4 {
        for sb in 0..4 {
            let eg = 8 * (sa + 4) + sb;
            let ge = 8 * sa + (sb + 4);
            h[(eg, ge)] += r(x);
            h[(ge, eg)] += r(x);
        }
    }
    h
}

/// The coupled effective-frame Hamiltonian of two driven donors.
struct CoupledModel<'a> {
    layout: &'a TwoQubitLayout,
    schedules: [&'a PulseSchedule; 2],
    noise_de: [f64; 2],
    models: [EffectiveModel; 2],
    omega_e: [f64; 2],
    coupling: f64,
    exchange: bool,
}

impl<'a> CoupledModel<'a> {
    fn new(
        layout: &'a TwoQubitLayout,
        schedules: [&'a PulseSchedule; 2],
        noise_de: [f64; 2],
        opts: &TwoQubitOptions,
    ) -> Result<Self> {
        layout.validate()?;
        check_pair(schedules)?;
        let mut omega_e = [schedules[0].omega_e, schedules[1].omega_e];
        if opts.adjust_omega_e {
            let mut swapped = *layout;
            swapped.qubits.swap(0, 1);
            omega_e[0] += coupled_splitting_shift(layout, drive_operating_field(schedules[0]));
            omega_e[1] += coupled_splitting_shift(&swapped, drive_operating_field(schedules[1]));
        }
        let models = [0, 1].map(|k| EffectiveModel::new(&layout.qubits[k], omega_e[k], schedules[k].omega_b));
        Ok(CoupledModel {
            layout,
            schedules,
            noise_de,
            models,
            omega_e,
            coupling: layout.coupling(),
            exchange: opts.exchange_term,
        })
    }

    fn hamiltonian(&self, t: f64) -> Result<DOp> {
        let id = DOp::identity(8, 8);
        let h1 = self.models[0].h_prime(&self.schedules[0].sample(t), self.noise_de[0])?;
        let h2 = self.models[1].h_prime(&self.schedules[1].sample(t), self.noise_de[1])?;
        let de = [0, 1].map(|k| self.schedules[k].de.value(t) + self.noise_de[k]);
        Ok(linalg::kron(&linalg::to_dyn(&h1), &id)
            + linalg::kron(&id, &linalg::to_dyn(&h2))
            + interaction_rwa(self.layout, de, self.coupling, self.exchange))
    }

    /// Idle computational states in the order ↑↑, ↑↓, ↓↑, ↓↓, with their
    /// idle energies including the uniform dipole shift.
    fn computational_states(&self) -> Result<(Vec<DOp>, [f64; 4])> {
        let frame = |k: usize| {
            crate::gates::IdleFrame::new(
                &self.layout.qubits[k],
                crate::propagation::Frame::Effective,
                self.omega_e[k],
                self.schedules[k].omega_b,
            )
        };
        let (f1, f2) = (frame(0)?, frame(1)?);
        let w = |p: &SystemParams| p.interface_weight_ground(p.de_idle);
        let shift = self.coupling * w(&self.layout.qubits[0]) * w(&self.layout.qubits[1]);
        let sub = BasisConvention::QUBIT_SUBSPACE;
        let mut vecs = Vec::with_capacity(4);
        let mut energies = [0.0; 4];
        for (n, (a, b)) in sub.iter().flat_map(|&a| sub.iter().map(move |&b| (a, b))).enumerate() {
            let va = DOp::from_column_slice(8, 1, f1.vectors.column(a).as_slice());
            let vb = DOp::from_column_slice(8, 1, f2.vectors.column(b).as_slice());
            vecs.push(linalg::kron(&va, &vb));
            energies[n] = f1.energies[a] + f2.energies[b] + shift;
        }
        Ok((vecs, energies))
    }
}

/// 64-dimensional effective-frame evolution: H′₁ ⊗ 𝟙 + 𝟙 ⊗ H′₂ plus the
/// rotating-frame dipole interaction.
pub fn simulate_two_qubit(
    layout: &TwoQubitLayout,
    schedules: [&PulseSchedule; 2],
    noise_de: [f64; 2],
    opts: &TwoQubitOptions,
) -> Result<TwoQubitResult> {
    if !(opts.dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let model = CoupledModel::new(layout, schedules, noise_de, opts)?;
    let total = schedules[0].total_time;
    let grid = union_grid(schedules, total, opts.dt);
    let mut failure: Option<Error> = None;
    let u = crate::propagation::time_ordered(
        Dyn(64),
        &grid,
        |t| {
            model.hamiltonian(t).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                DOp::zeros(64, 64)
            })
        },
        |_, _, _| {},
    );
    if let Some(e) = failure {
        return Err(e);
    }

    let (vecs, energies) = model.computational_states()?;
    let mut block = DOp::zeros(4, 4);
    for i in 0..4 {
        let uq = &u * &vecs[i];
        for j in 0..4 {
            block[(j, i)] = (vecs[j].adjoint() * &uq)[(0, 0)] * cis(energies[j] * total);
        }
    }

    let defect = linalg::unitarity_defect(&block);
    let offdiag = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| block[(i, j)].norm())
        .fold(0.0, f64::max);
    let lost = (0..4).map(|k| 1.0 - block[(k, k)].norm_sqr()).fold(0.0, f64::max);
    let nonadiabaticity = offdiag.max(lost);
    if nonadiabaticity > 1e-3 {
        log::warn!("two-qubit evolution is not adiabatic: {nonadiabaticity:.2e}");
    }
    let ph = |k: usize| block[(k, k)].arg();
    let report = CphaseReport::from_phases(ph(0), ph(1), ph(2), ph(3), nonadiabaticity, model.coupling);
    Ok(TwoQubitResult {
        propagator: u,
        block,
        block_unitarity_defect: defect,
        report: CphaseReport {
            phi: wrap_pi(report.phi),
            ..report
        },
        omega_e: model.omega_e,
        step_count: grid.len(),
    })
}

/// Phases from the exact adiabatic energies of the coupled 64-level
/// Hamiltonian, tracking the four computational eigenstates. Unlike
/// [`cphase_angle`] this keeps all orders in the coupling, so it follows
/// the simulation as long as the schedule is adiabatic.
pub fn cphase_angle_coupled(
    layout: &TwoQubitLayout,
    schedules: [&PulseSchedule; 2],
    noise_de: [f64; 2],
    opts: &TwoQubitOptions,
    spacing: f64,
) -> Result<CphaseReport> {
    if !(spacing > 0.0 && spacing <= 1e-9) {
        return Err(Error::param("spacing", "must lie in (0, 1 ns]"));
    }
    let model = CoupledModel::new(layout, schedules, noise_de, opts)?;
    let (mut prev, idle) = model.computational_states()?;
    let total = schedules[0].total_time;
    let mut phases = [0.0f64; 4];
    for (t, h) in union_grid(schedules, total, spacing) {
        let (vals, vecs) = linalg::eigh(&model.hamiltonian(t)?);
        for n in 0..4 {
            let (best, ov) = (0..vals.len())
                .map(|j| (j, (prev[n].adjoint() * vecs.column(j))[(0, 0)].norm()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if ov < 0.5 {
                return Err(Error::TrackingLost {
                    time_ns: t * 1e9,
                    overlap: ov,
                });
            }
            prev[n] = vecs.columns(best, 1).into_owned();
            phases[n] -= (vals[best] - idle[n]) * h;
        }
    }
    Ok(CphaseReport::from_phases(
        phases[0],
        phases[1],
        phases[2],
        phases[3],
        0.0,
        model.coupling,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhz;

    #[test]
    fn coupling_scales_as_inverse_cube() {
        let base = TwoQubitLayout::default();
        let v1 = dipole_coupling_strength(&base);
        let v2 = dipole_coupling_strength(&TwoQubitLayout {
            separation: 2.0 * base.separation,
            ..base
        });
        assert!((v1 / v2 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn idle_weights_are_equal() {
        let p = SystemParams::default();
        let (we, wb) = crate::pulses::reference_frame(&p);
        let model = EffectiveModel::new(&p, we, wb);
        let s = ControlSample {
            de: p.de_idle,
            de_rate: 0.0,
            ea: 0.0,
            ba: 0.0,
        };
        let up = interface_weight(&model, &s, 0.0, BasisConvention::QUBIT_UP).unwrap();
        let down = interface_weight(&model, &s, 0.0, BasisConvention::QUBIT_DOWN).unwrap();
        assert!((up - down).abs() < 1e-9);
        assert!((up - p.interface_weight_ground(p.de_idle)).abs() < 1e-6);
    }

    #[test]
    fn corrected_diagonal_has_single_phase() {
        let rep = CphaseReport::from_phases(0.3, -1.1, 2.0, 0.7, 0.0, mhz(50.0));
        let d = rep.corrected_diagonal();
        for z in &d[..3] {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!((d[3] - cis(rep.phi)).norm() < 1e-12);
    }

    #[test]
    fn mismatched_durations_rejected() {
        let p = SystemParams::default();
        let a = make_cphase_schedule(&p, 200e-9).unwrap();
        let b = make_cphase_schedule(&p, 300e-9).unwrap();
        let err = cphase_angle(
            &TwoQubitLayout::default(),
            [&a, &b],
            [0.0; 2],
            &CphaseOptions::default(),
        );
        assert!(err.is_err());
    }
}
