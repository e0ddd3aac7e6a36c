//! Lab-frame Hamiltonian, basis changes and time-ordered evolution.

use nalgebra::allocator::Allocator;
use nalgebra::{DefaultAllocator, Dim, OMatrix};
use std::sync::OnceLock;

use crate::effective::EffectiveModel;
use crate::error::{Error, Result};
use crate::linalg::{self, kron3, pauli, r, Mat2, Op8, C64};
use crate::model::SystemParams;
use crate::pulses::{ControlSample, PulseSchedule};

/// Fixed single-donor operators. The same matrices serve both the position
/// basis {i, d} and the orbital basis {g, e}, since only the label of the
/// orbital factor differs.
pub struct Operators {
    pub tau_z: Op8,
    pub tau_x: Op8,
    pub tau_y: Op8,
    pub s_x: Op8,
    pub s_y: Op8,
    pub s_z: Op8,
    pub i_x: Op8,
    pub i_y: Op8,
    pub i_z: Op8,
    /// S·I
    pub s_dot_i: Op8,
    pub identity: Op8,
}

pub fn operators() -> &'static Operators {
    static OPS: OnceLock<Operators> = OnceLock::new();
    OPS.get_or_init(|| {
        let id = pauli::id();
        let half = |m: Mat2| m * r(0.5);
        let s_x = kron3(&id, &half(pauli::x()), &id);
        let s_y = kron3(&id, &half(pauli::y_spin()), &id);
        let s_z = kron3(&id, &half(pauli::z_spin()), &id);
        let i_x = kron3(&id, &id, &half(pauli::x()));
        let i_y = kron3(&id, &id, &half(pauli::y_spin()));
        let i_z = kron3(&id, &id, &half(pauli::z_spin()));
        Operators {
            tau_z: kron3(&pauli::z(), &id, &id),
            tau_x: kron3(&pauli::x(), &id, &id),
            tau_y: kron3(&pauli::y(), &id, &id),
            s_dot_i: s_x * i_x + s_y * i_y + s_z * i_z,
            s_x,
            s_y,
            s_z,
            i_x,
            i_y,
            i_z,
            identity: Op8::identity(),
        }
    })
}

/// Which Hamiltonian the integrator samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// Lab frame, position basis {i, d}.
    LabPosition,
    /// Lab frame, orbital eigenbasis {g, e} of the instantaneous ΔE.
    LabOrbital,
    /// Rotating frame with the second-order Floquet Hamiltonian H′.
    Effective,
}

impl Frame {
    pub fn default_dt(self) -> f64 {
        match self {
            Frame::LabPosition | Frame::LabOrbital => 1e-13,
            Frame::Effective => 1e-10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Frame::LabPosition => "lab-position",
            Frame::LabOrbital => "lab-orbital",
            Frame::Effective => "effective",
        }
    }
}

impl std::str::FromStr for Frame {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lab-position" | "lab" => Ok(Frame::LabPosition),
            "lab-orbital" => Ok(Frame::LabOrbital),
            "effective" => Ok(Frame::Effective),
            other => Err(Error::param("frame", format!("unknown frame `{other}`"))),
        }
    }
}

/// Precomputed pieces of the lab Hamiltonian for one parameter set.
#[derive(Debug, Clone)]
pub struct LabModel {
    pub params: SystemParams,
    /// Tunnelling, static Zeeman and hyperfine terms (position basis).
    fixed: Op8,
    /// −(d e/2ħ) τz^{id}: multiplies the total instantaneous field.
    field: Op8,
    /// γe Sx − γn Ix: multiplies the AC magnetic field.
    magnetic: Op8,
}

impl LabModel {
    pub fn new(params: &SystemParams) -> Self {
        let o = operators();
        let p = params;
        // (𝟙 − τz^{id})/2 projects onto the donor orbital
        let on_donor = (o.identity - o.tau_z) * r(0.5);
        let fixed = o.tau_x * r(p.vt / 2.0) + (o.s_z + on_donor * o.s_z * r(p.delta_gamma)) * r(p.b0 * p.gamma_e)
            - o.i_z * r(p.b0 * p.gamma_n)
            + on_donor * o.s_dot_i * r(p.hyperfine_a);
        LabModel {
            params: *params,
            fixed,
            field: o.tau_z * r(-0.5 * p.field_coupling()),
            magnetic: o.s_x * r(p.gamma_e) - o.i_x * r(p.gamma_n),
        }
    }

    /// H(t) in the position basis for the given control values.
    #[inline]
    pub fn hamiltonian_at(&self, s: &ControlSample, omega_e: f64, omega_b: f64, t: f64, noise: f64) -> Op8 {
        let e_total = s.de + noise + s.ea * (omega_e * t).cos();
        let mut h = self.fixed + self.field * r(e_total);
        if s.ba != 0.0 {
            h += self.magnetic * r(s.ba * (omega_b * t).cos());
        }
        h
    }

    /// Static (no AC) Hamiltonian at field offset `de` in the position basis.
    pub fn static_hamiltonian(&self, de: f64) -> Op8 {
        self.fixed + self.field * r(de)
    }

    pub fn orbital_hamiltonian_at(
        &self,
        s: &ControlSample,
        omega_e: f64,
        omega_b: f64,
        t: f64,
        noise: f64,
        include_correction: bool,
    ) -> Op8 {
        let lam = orbital_transform(&self.params, s.de + noise);
        let mut h = lam * self.hamiltonian_at(s, omega_e, omega_b, t, noise) * lam.adjoint();
        if include_correction {
            h += basis_change_correction(&self.params, s.de + noise, s.de_rate);
        }
        h
    }
}

/// Lab Hamiltonian in the position basis, with the quasi-static field error
/// `noise_de` added to ΔE.
pub fn lab_hamiltonian(params: &SystemParams, schedule: &PulseSchedule, t: f64, noise_de: f64) -> Op8 {
    LabModel::new(params).hamiltonian_at(&schedule.sample(t), schedule.omega_e, schedule.omega_b, t, noise_de)
}

/// The 2×2 orbital rotation Λ = c𝟙 − i s σy with c² = (1 + x)/2 and
/// s² = (1 − x)/2, x = d e ΔE/(ħ ε0).
pub fn orbital_rotation(params: &SystemParams, de: f64) -> Mat2 {
    let x = params.orbital_polarization(de);
    let c = (0.5 * (1.0 + x)).sqrt();
    let s = (0.5 * (1.0 - x)).sqrt();
    Mat2::new(r(c), r(-s), r(s), r(c))
}

/// Λ on the full 8-dimensional space: maps position-basis coordinates to
/// orbital-basis coordinates.
pub fn orbital_transform(params: &SystemParams, de: f64) -> Op8 {
    let id = pauli::id();
    kron3(&orbital_rotation(params, de), &id, &id)
}

/// The −iΛΛ̇† term generated by a moving ΔE. Written out, it is
/// −(d e Vt / 2ħε0²)·(dΔE/dt)·σy on the orbital factor.
pub fn basis_change_correction(params: &SystemParams, de: f64, de_rate: f64) -> Op8 {
    let eps = params.charge_splitting(de);
    let coeff = -params.field_coupling() * params.vt / (2.0 * eps * eps) * de_rate;
    operators().tau_y * r(coeff)
}

/// Diagonal of the rotating-frame generator G = ωE(τz/2 + Iz) − ωB(Sz + Iz).
pub fn frame_generator_diagonal(omega_e: f64, omega_b: f64) -> [f64; 8] {
    use crate::model::BasisConvention as B;
    let mut g = [0.0; 8];
    for (i, gi) in g.iter_mut().enumerate() {
        *gi = omega_e * (0.5 * B::tau_z(i) + B::i_z(i)) - omega_b * (B::s_z(i) + B::i_z(i));
    }
    g
}

/// Λ_rot(t) = exp(−i t G), diagonal.
pub fn rotating_frame(omega_e: f64, omega_b: f64, t: f64) -> Op8 {
    let g = frame_generator_diagonal(omega_e, omega_b);
    Op8::from_fn(|i, j| if i == j { linalg::cis(-g[i] * t) } else { linalg::ZERO })
}

/// 1 − Tr(P U P U† P)/dim P for the subspace spanned by the orthonormal
/// columns of `basis`.
pub fn leakage_in<D: Dim>(u: &OMatrix<C64, D, D>, basis: &linalg::DOp) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let n = u.nrows();
    let ud = linalg::DOp::from_fn(n, n, |i, j| u[(i, j)]);
    let block = basis.adjoint() * ud * basis;
    let dim = basis.ncols() as f64;
    (1.0 - block.norm_squared() / dim).max(0.0)
}

/// Leakage out of the span of the listed basis states.
pub fn leakage<D: Dim>(u: &OMatrix<C64, D, D>, subspace: &[usize]) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let n = u.nrows();
    let basis = linalg::DOp::from_fn(n, subspace.len(), |i, j| {
        if i == subspace[j] {
            linalg::ONE
        } else {
            linalg::ZERO
        }
    });
    leakage_in(u, &basis)
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub frame: Frame,
    /// Step size; `None` takes the frame default.
    pub dt: Option<f64>,
    /// Adds −iΛΛ̇† in the orbital lab frame and in the effective frame.
    pub include_correction: bool,
    /// Re-run at dt/2 and fail if the propagator moves by more than this in
    /// operator norm.
    pub convergence_tolerance: Option<f64>,
    /// Record leakage from the computational states every this many steps.
    pub trace_every: Option<usize>,
}

impl EvolveOptions {
    pub fn new(frame: Frame) -> Self {
        EvolveOptions {
            frame,
            dt: None,
            include_correction: false,
            convergence_tolerance: None,
            trace_every: None,
        }
    }

    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_correction(mut self, on: bool) -> Self {
        self.include_correction = on;
        self
    }

    pub fn check_convergence(mut self, tolerance: f64) -> Self {
        self.convergence_tolerance = Some(tolerance);
        self
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub propagator: Op8,
    pub frame: Frame,
    pub step_count: usize,
    pub max_unitarity_defect: f64,
    /// (t, population lost from the two nominal computational basis states)
    pub leakage_trace: Option<Vec<(f64, f64)>>,
}

impl EvolutionResult {
    pub fn is_valid(&self) -> bool {
        self.max_unitarity_defect < 1e-8
    }
}

/// Piecewise-constant midpoint grid aligned to the schedule's kinks,
/// restricted to [t0, t1].
pub fn time_grid(schedule: &PulseSchedule, t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = schedule
        .breakpoints()
        .into_iter()
        .filter(|&t| t > t0 && t < t1)
        .collect();
    cuts.insert(0, t0);
    cuts.push(t1);
    let mut steps = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let n = (len / dt).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            steps.push((w[0] + (k as f64 + 0.5) * h, h));
        }
    }
    steps
}

/// Time-ordered product of exp(−i H(t_mid) h) over a midpoint grid.
pub fn time_ordered<D: Dim, F>(
    dim: D,
    grid: &[(f64, f64)],
    mut hamiltonian: F,
    mut observe: impl FnMut(usize, f64, &OMatrix<C64, D, D>),
) -> OMatrix<C64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
    F: FnMut(f64) -> OMatrix<C64, D, D>,
{
    let mut u = OMatrix::<C64, D, D>::identity_generic(dim, dim);
    for (k, &(t, h)) in grid.iter().enumerate() {
        let step = linalg::propagator_step(&hamiltonian(t), h);
        u = step * u;
        observe(k, t + 0.5 * h, &u);
    }
    u
}

fn evolve_once(
    params: &SystemParams,
    schedule: &PulseSchedule,
    noise_de: f64,
    opts: &EvolveOptions,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<EvolutionResult> {
    let grid = time_grid(schedule, t0, t1, dt);
    let (we, wb) = (schedule.omega_e, schedule.omega_b);
    let mut trace = opts.trace_every.map(|_| Vec::new());
    let every = opts.trace_every.unwrap_or(usize::MAX).max(1);
    let sub = crate::model::BasisConvention::QUBIT_SUBSPACE;

    let u = match opts.frame {
        Frame::LabPosition => {
            let lab = LabModel::new(params);
            // computational states of the idle point, expressed in the position basis
            let basis = {
                let lam = orbital_transform(params, params.de_idle);
                let cols = lam.adjoint();
                linalg::DOp::from_fn(8, 2, |i, j| cols[(i, sub[j])])
            };
            time_ordered(
                nalgebra::Const::<8>,
                &grid,
                |t| lab.hamiltonian_at(&schedule.sample(t), we, wb, t, noise_de),
                |k, t, u| {
                    if let Some(tr) = trace.as_mut() {
                        if k % every == 0 {
                            tr.push((t, leakage_in(u, &basis)));
                        }
                    }
                },
            )
        }
        Frame::LabOrbital => {
            let lab = LabModel::new(params);
            time_ordered(
                nalgebra::Const::<8>,
                &grid,
                |t| lab.orbital_hamiltonian_at(&schedule.sample(t), we, wb, t, noise_de, opts.include_correction),
                |k, t, u| {
                    if let Some(tr) = trace.as_mut() {
                        if k % every == 0 {
                            tr.push((t, leakage(u, &sub)));
                        }
                    }
                },
            )
        }
        Frame::Effective => {
            let model = EffectiveModel::new(params, we, wb).with_correction(opts.include_correction);
            let mut failure = None;
            let u = time_ordered(
                nalgebra::Const::<8>,
                &grid,
                |t| match model.h_prime(&schedule.sample(t), noise_de) {
                    Ok(h) => h,
                    Err(e) => {
                        failure.get_or_insert(e);
                        Op8::zeros()
                    }
                },
                |k, t, u| {
                    if let Some(tr) = trace.as_mut() {
                        if k % every == 0 {
                            tr.push((t, leakage(u, &sub)));
                        }
                    }
                },
            );
            if let Some(e) = failure {
                return Err(e);
            }
            u
        }
    };
    let defect = linalg::unitarity_defect(&u);
    Ok(EvolutionResult {
        propagator: u,
        frame: opts.frame,
        step_count: grid.len(),
        max_unitarity_defect: defect,
        leakage_trace: trace,
    })
}

/// Propagator of `schedule` over [t0, t1] with a quasi-static field error.
pub fn evolve_interval(
    params: &SystemParams,
    schedule: &PulseSchedule,
    noise_de: f64,
    opts: &EvolveOptions,
    t0: f64,
    t1: f64,
) -> Result<EvolutionResult> {
    let dt = opts.dt.unwrap_or(opts.frame.default_dt());
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !(0.0 <= t0 && t0 <= t1 && t1 <= schedule.total_time * (1.0 + 1e-12)) {
        return Err(Error::param(
            "interval",
            format!("[{t0:e}, {t1:e}] outside the schedule"),
        ));
    }
    if schedule.has_drive() {
        two_photon_guard(params, schedule);
    }
    let result = evolve_once(params, schedule, noise_de, opts, t0, t1, dt)?;
    if let Some(tol) = opts.convergence_tolerance {
        let fine = evolve_once(params, schedule, noise_de, opts, t0, t1, dt / 2.0)?;
        let change = linalg::op_norm(&(fine.propagator - result.propagator));
        if change > tol {
            return Err(Error::NotConverged { change, tolerance: tol });
        }
    }
    if !result.is_valid() {
        return Err(Error::NonUnitary {
            defect: result.max_unitarity_defect,
        });
    }
    Ok(result)
}

/// Full-schedule propagator.
pub fn evolve(
    params: &SystemParams,
    schedule: &PulseSchedule,
    noise_de: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    evolve_interval(params, schedule, noise_de, opts, 0.0, schedule.total_time)
}

/// Times at which ε0 crosses 2ωE while the AC electric field is on. Each
/// crossing is logged as a warning: a weak two-photon resonance there
/// drives |g⟩ → |e⟩.
pub fn two_photon_guard(params: &SystemParams, schedule: &PulseSchedule) -> Vec<f64> {
    let n = 4000;
    let total = schedule.total_time;
    let detune = |t: f64| params.charge_splitting(schedule.de.value(t)) - 2.0 * schedule.omega_e;
    let mut hits = Vec::new();
    let mut prev = detune(0.0);
    for k in 1..=n {
        let t = total * k as f64 / n as f64;
        let cur = detune(t);
        let tm = t - 0.5 * total / n as f64;
        if prev.signum() != cur.signum() && schedule.ea.value(tm).abs() > 1e-9 {
            log::warn!(
                "two-photon resonance ε0 = 2ωE crossed at t = {:.3} ns (ΔE = {:.0} V/m) with the AC field on",
                tm * 1e9,
                schedule.de.value(tm)
            );
            hits.push(tm);
        }
        prev = cur;
    }
    hits
}
