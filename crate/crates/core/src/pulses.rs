//! Control envelopes and the factory schedules for every gate protocol.
//!
//! Envelopes are kept symbolic so the integrator can query exact values at
//! arbitrary times. Each envelope also knows its analytic time derivative,
//! which the basis-change correction needs.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::{mhz, ns};

/// Cosine window w(t, τ, T) without argument checks.
#[inline]
fn window_raw(t: f64, tau: f64, total: f64) -> f64 {
    if !(0.0..=total).contains(&t) {
        0.0
    } else if t < tau {
        0.5 * (1.0 - (PI * t / tau).cos())
    } else if t < total - tau {
        1.0
    } else {
        0.5 * (1.0 - (PI * (total - t) / tau).cos())
    }
}

#[inline]
fn window_rate_raw(t: f64, tau: f64, total: f64) -> f64 {
    if !(0.0..=total).contains(&t) {
        0.0
    } else if t < tau {
        0.5 * PI / tau * (PI * t / tau).sin()
    } else if t < total - tau {
        0.0
    } else {
        -0.5 * PI / tau * (PI * (total - t) / tau).sin()
    }
}

#[inline]
fn ramp_raw(t: f64, tau1: f64, y1: f64, tau2: f64, y2: f64, total: f64) -> f64 {
    if !(0.0..=total).contains(&t) {
        0.0
    } else if t < tau1 {
        y1 * t / tau1
    } else if t < tau2 {
        y1 + (y2 - y1) * (t - tau1) / (tau2 - tau1)
    } else {
        y2 * (total - t) / (total - tau2)
    }
}

#[inline]
fn ramp_rate_raw(t: f64, tau1: f64, y1: f64, tau2: f64, y2: f64, total: f64) -> f64 {
    if !(0.0..=total).contains(&t) {
        0.0
    } else if t < tau1 {
        y1 / tau1
    } else if t < tau2 {
        (y2 - y1) / (tau2 - tau1)
    } else {
        -y2 / (total - tau2)
    }
}

fn check_window(tau: f64, total: f64) -> Result<()> {
    if !(tau > 0.0 && total.is_finite() && tau <= 0.5 * total * (1.0 + 1e-12)) {
        return Err(Error::param(
            "window.tau",
            format!("need 0 < tau <= T/2, got tau = {tau:e}, T = {total:e}"),
        ));
    }
    Ok(())
}

fn check_ramp(tau1: f64, tau2: f64, total: f64) -> Result<()> {
    if !(0.0 < tau1 && tau1 < tau2 && tau2 < total) {
        return Err(Error::param(
            "ramp.breakpoints",
            format!("need 0 < tau1 < tau2 < T, got {tau1:e}, {tau2:e}, {total:e}"),
        ));
    }
    Ok(())
}

/// The cosine window: rises over τ, flat, falls over the last τ, zero
/// outside [0, T].
pub fn window(t: f64, tau: f64, total: f64) -> Result<f64> {
    check_window(tau, total)?;
    Ok(window_raw(t, tau, total))
}

/// Piecewise-linear excursion 0 → y1 (at τ1) → y2 (at τ2) → 0 (at T).
pub fn ramp(t: f64, tau1: f64, y1: f64, tau2: f64, y2: f64, total: f64) -> Result<f64> {
    check_ramp(tau1, tau2, total)?;
    Ok(ramp_raw(t, tau1, y1, tau2, y2, total))
}

/// A real function of time built from a few named primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Envelope {
    Zero,
    Constant {
        value: f64,
    },
    Window {
        tau: f64,
        total: f64,
    },
    Ramp {
        tau1: f64,
        y1: f64,
        tau2: f64,
        y2: f64,
        total: f64,
    },
    /// inner(t − delay)
    Delayed {
        delay: f64,
        inner: Box<Envelope>,
    },
    Scaled {
        factor: f64,
        inner: Box<Envelope>,
    },
    Squared {
        inner: Box<Envelope>,
    },
    Sum {
        terms: Vec<Envelope>,
    },
}

impl Envelope {
    pub fn window(tau: f64, total: f64) -> Result<Self> {
        check_window(tau, total)?;
        Ok(Envelope::Window { tau, total })
    }

    pub fn ramp(tau1: f64, y1: f64, tau2: f64, y2: f64, total: f64) -> Result<Self> {
        check_ramp(tau1, tau2, total)?;
        Ok(Envelope::Ramp {
            tau1,
            y1,
            tau2,
            y2,
            total,
        })
    }

    pub fn constant(value: f64) -> Self {
        Envelope::Constant { value }
    }

    pub fn delayed(self, delay: f64) -> Self {
        Envelope::Delayed {
            delay,
            inner: Box::new(self),
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Envelope::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn squared(self) -> Self {
        Envelope::Squared { inner: Box::new(self) }
    }

    pub fn plus(self, other: Envelope) -> Self {
        match self {
            Envelope::Sum { mut terms } => {
                terms.push(other);
                Envelope::Sum { terms }
            }
            first => Envelope::Sum {
                terms: vec![first, other],
            },
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Envelope::Zero => 0.0,
            Envelope::Constant { value } => *value,
            Envelope::Window { tau, total } => window_raw(t, *tau, *total),
            Envelope::Ramp {
                tau1,
                y1,
                tau2,
                y2,
                total,
            } => ramp_raw(t, *tau1, *y1, *tau2, *y2, *total),
            Envelope::Delayed { delay, inner } => inner.value(t - delay),
            Envelope::Scaled { factor, inner } => factor * inner.value(t),
            Envelope::Squared { inner } => inner.value(t).powi(2),
            Envelope::Sum { terms } => terms.iter().map(|e| e.value(t)).sum(),
        }
    }

    /// Analytic time derivative (one-sided at kinks, taking the segment that
    /// starts at t).
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Envelope::Zero | Envelope::Constant { .. } => 0.0,
            Envelope::Window { tau, total } => window_rate_raw(t, *tau, *total),
            Envelope::Ramp {
                tau1,
                y1,
                tau2,
                y2,
                total,
            } => ramp_rate_raw(t, *tau1, *y1, *tau2, *y2, *total),
            Envelope::Delayed { delay, inner } => inner.rate(t - delay),
            Envelope::Scaled { factor, inner } => factor * inner.rate(t),
            Envelope::Squared { inner } => 2.0 * inner.value(t) * inner.rate(t),
            Envelope::Sum { terms } => terms.iter().map(|e| e.rate(t)).sum(),
        }
    }

    /// True when the envelope is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        match self {
            Envelope::Zero => true,
            Envelope::Constant { value } => *value == 0.0,
            Envelope::Scaled { factor, inner } => *factor == 0.0 || inner.is_zero(),
            Envelope::Delayed { inner, .. } | Envelope::Squared { inner } => inner.is_zero(),
            Envelope::Sum { terms } => terms.iter().all(Envelope::is_zero),
            _ => false,
        }
    }

    /// Times where the envelope or its derivative has a kink. The integrator
    /// aligns its grid to these so that no step straddles a junction.
    pub fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Envelope::Window { tau, total } => out.extend([0.0, *tau, total - tau, *total]),
            Envelope::Ramp { tau1, tau2, total, .. } => out.extend([0.0, *tau1, *tau2, *total]),
            Envelope::Delayed { delay, inner } => {
                let mut inner_pts = Vec::new();
                inner.breakpoints(&mut inner_pts);
                out.extend(inner_pts.into_iter().map(|t| t + delay));
            }
            Envelope::Scaled { inner, .. } | Envelope::Squared { inner } => inner.breakpoints(out),
            Envelope::Sum { terms } => terms.iter().for_each(|e| e.breakpoints(out)),
            Envelope::Zero | Envelope::Constant { .. } => {}
        }
    }
}

/// Instantaneous control values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlSample {
    /// ΔE (V/m), excluding noise.
    pub de: f64,
    /// dΔE/dt (V/m/s).
    pub de_rate: f64,
    /// AC electric amplitude (V/m).
    pub ea: f64,
    /// AC magnetic amplitude (T).
    pub ba: f64,
}

/// Three control channels plus the drive frequencies and duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub label: String,
    /// Absolute ΔE trajectory (V/m).
    pub de: Envelope,
    /// AC electric amplitude (V/m).
    pub ea: Envelope,
    /// AC magnetic amplitude (T).
    pub ba: Envelope,
    /// Electric drive frequency, also the orbital rotating-frame frequency
    /// (rad/s).
    pub omega_e: f64,
    /// Magnetic drive frequency, also the electron-spin rotating-frame
    /// frequency (rad/s).
    pub omega_b: f64,
    /// Duration (s).
    pub total_time: f64,
}

impl PulseSchedule {
    #[inline]
    pub fn sample(&self, t: f64) -> ControlSample {
        ControlSample {
            de: self.de.value(t),
            de_rate: self.de.rate(t),
            ea: self.ea.value(t),
            ba: self.ba.value(t),
        }
    }

    pub fn has_drive(&self) -> bool {
        !(self.ea.is_zero() && self.ba.is_zero())
    }

    /// Sorted, de-duplicated kink times inside [0, T].
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0, self.total_time];
        for env in [&self.de, &self.ea, &self.ba] {
            env.breakpoints(&mut pts);
        }
        pts.retain(|t| (0.0..=self.total_time).contains(t));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        pts
    }

    /// Checks the idle-endpoint and vanishing-drive conditions shared by every
    /// gate.
    pub fn check_invariants(&self, params: &SystemParams) -> Result<()> {
        let tol = 1e-9 * params.de_idle.abs().max(1.0);
        for t in [0.0, self.total_time] {
            let s = self.sample(t);
            if (s.de - params.de_idle).abs() > tol {
                return Err(Error::param(
                    "schedule.dE",
                    format!("ΔE({t:e}) = {} differs from the idle value", s.de),
                ));
            }
            if s.ea.abs() > 1e-9 || s.ba.abs() > 1e-15 {
                return Err(Error::param(
                    "schedule.ac",
                    format!("AC amplitude non-zero at t = {t:e}"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schedules always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Extra ωB detuning of the naive gate, MHz (cyclic).
pub const NAIVE_DETUNING_B_SHIFT_MHZ: f64 = 9.531555;
/// Amplitude multiplier of the naive gate relative to the sweep gate.
pub const NAIVE_AMPLITUDE_SCALE: f64 = 0.4146239;

/// Tunable constants of the sweep X gate. [`SweepConfig::default`] holds the
/// reference design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lambda: f64,
    /// Half-range of the ΔE sweep (V/m).
    pub sweep_half_range: f64,
    /// Setup time from idle to the sweep start (s).
    pub tau1: f64,
    /// Sweep duration (s).
    pub tau_s: f64,
    /// Peak AC electric amplitude at λ = 1 (V/m).
    pub ea_peak: f64,
    /// Peak AC magnetic amplitude at λ = 1 (T).
    pub ba_peak: f64,
    /// ωE = ε0(ΔE_ref) − detuning_e.
    pub detuning_e: f64,
    /// ωB = B0γe − A/4 − detuning_b.
    pub detuning_b: f64,
    /// ΔE at which ε0 is evaluated for ωE.
    pub omega_e_reference_de: f64,
    /// When false, ΔE is parked at zero during the AC segment instead of
    /// sweeping (the naive gate).
    pub sweep: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambda: 1.0,
            sweep_half_range: 2000.0,
            tau1: ns(5.0),
            tau_s: ns(110.0),
            ea_peak: 255.2,
            ba_peak: 33.26e-3,
            detuning_e: mhz(232.428),
            detuning_b: mhz(217.096),
            omega_e_reference_de: 0.0,
            sweep: true,
        }
    }
}

impl SweepConfig {
    /// The parked, non-sweeping variant. At ΔE = 0 the reference
    /// detunings leave the two-photon transition off resonance (θx never
    /// exceeds ~0.7 rad), so the magnetic detuning is shifted by
    /// [`NAIVE_DETUNING_B_SHIFT_MHZ`] and both amplitudes are scaled by
    /// [`NAIVE_AMPLITUDE_SCALE`]; with these λ = 1 is the first θx = π
    /// point. Both constants come from `gates::tune_naive_gate`.
    pub fn naive() -> Self {
        let d = Self::default();
        SweepConfig {
            sweep: false,
            detuning_b: d.detuning_b + mhz(NAIVE_DETUNING_B_SHIFT_MHZ),
            ea_peak: d.ea_peak * NAIVE_AMPLITUDE_SCALE,
            ba_peak: d.ba_peak * NAIVE_AMPLITUDE_SCALE,
            ..d
        }
    }

    pub fn omega_e(&self, params: &SystemParams) -> f64 {
        params.charge_splitting(self.omega_e_reference_de) - self.detuning_e
    }

    pub fn omega_b(&self, params: &SystemParams) -> f64 {
        params.b0 * params.gamma_e - 0.25 * params.hyperfine_a - self.detuning_b
    }

    pub fn total_time(&self) -> f64 {
        2.0 * self.tau1 + self.tau_s
    }

    pub fn build(&self, params: &SystemParams) -> Result<PulseSchedule> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::param(
                "lambda",
                format!("must lie in [0, 1], got {}", self.lambda),
            ));
        }
        let idle = params.de_idle;
        let d = if self.sweep { self.sweep_half_range } else { 0.0 };
        let total = self.total_time();
        let de = Envelope::constant(idle).plus(Envelope::ramp(
            self.tau1,
            -idle - d,
            self.tau1 + self.tau_s,
            -idle + d,
            total,
        )?);
        // AC fields live on the sweep segment only; the ramp fraction τ2/5
        // uses τ2 = τ1 + τs.
        let tau2 = self.tau1 + self.tau_s;
        let shape = Envelope::window(tau2 / 5.0, self.tau_s)?.delayed(self.tau1).squared();
        let (ea, ba) = if self.lambda == 0.0 {
            (Envelope::Zero, Envelope::Zero)
        } else {
            (
                shape.clone().scaled(self.lambda * self.ea_peak),
                shape.scaled(self.lambda * self.ba_peak),
            )
        };
        Ok(PulseSchedule {
            label: if self.sweep { "rx-sweep" } else { "rx-naive" }.into(),
            de,
            ea,
            ba,
            omega_e: self.omega_e(params),
            omega_b: self.omega_b(params),
            total_time: total,
        })
    }
}

/// Rotating-frame frequencies used by the schedules without AC drive, so
/// that every single-qubit gate shares one frame.
pub fn reference_frame(params: &SystemParams) -> (f64, f64) {
    let cfg = SweepConfig::default();
    (cfg.omega_e(params), cfg.omega_b(params))
}

/// Z rotation: ΔE(t) = ΔE_idle − S·w(t, τ, T), τ = min(5 ns, T/2),
/// S = 2·10⁴ V/m · min(1, T/10 ns).
pub fn make_rz_schedule(params: &SystemParams, total: f64) -> Result<PulseSchedule> {
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::param("T", format!("must be positive, got {total:e}")));
    }
    let tau = ns(5.0).min(total / 2.0);
    let depth = 2e4 * (total / ns(10.0)).min(1.0);
    let (omega_e, omega_b) = reference_frame(params);
    Ok(PulseSchedule {
        label: "rz".into(),
        de: Envelope::constant(params.de_idle).plus(Envelope::window(tau, total)?.scaled(-depth)),
        ea: Envelope::Zero,
        ba: Envelope::Zero,
        omega_e,
        omega_b,
        total_time: total,
    })
}

/// Deliberately noise-sensitive idle at the ionization point: 5 ns cosine
/// ramps from idle to ΔE = 0, a flat hold, and back.
pub fn make_echo_rz_schedule(params: &SystemParams, hold: f64) -> Result<PulseSchedule> {
    if !(hold >= 0.0 && hold.is_finite()) {
        return Err(Error::param("hold", format!("must be non-negative, got {hold:e}")));
    }
    let total = hold + ns(10.0);
    let (omega_e, omega_b) = reference_frame(params);
    Ok(PulseSchedule {
        label: "echo-rz".into(),
        de: Envelope::constant(params.de_idle).plus(Envelope::window(ns(5.0), total)?.scaled(-params.de_idle)),
        ea: Envelope::Zero,
        ba: Envelope::Zero,
        omega_e,
        omega_b,
        total_time: total,
    })
}

/// Idling for a duration T.
pub fn make_idle_schedule(params: &SystemParams, total: f64) -> Result<PulseSchedule> {
    if !(total > 0.0) {
        return Err(Error::param("T", "must be positive"));
    }
    let (omega_e, omega_b) = reference_frame(params);
    Ok(PulseSchedule {
        label: "idle".into(),
        de: Envelope::constant(params.de_idle),
        ea: Envelope::Zero,
        ba: Envelope::Zero,
        omega_e,
        omega_b,
        total_time: total,
    })
}

pub fn make_rx_sweep_schedule(params: &SystemParams, lambda: f64) -> Result<PulseSchedule> {
    SweepConfig {
        lambda,
        ..SweepConfig::default()
    }
    .build(params)
}

pub fn make_naive_rx_schedule(params: &SystemParams, lambda: f64) -> Result<PulseSchedule> {
    SweepConfig {
        lambda,
        ..SweepConfig::naive()
    }
    .build(params)
}

/// Knobs of the CPHASE schedule. Defaults are the reference design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CphaseConfig {
    pub total_time: f64,
    pub tau1: f64,
    /// ΔE during the AC segment (V/m).
    pub de_hold: f64,
    /// E_max at long durations (V/m).
    pub ea_max: f64,
    /// Duration below which the amplitude is scaled down as (T/T_ref)².
    pub amplitude_reference_time: f64,
    /// Cap on the window ramp time (s).
    pub max_ramp: f64,
    /// ωE = ε0 + A/4 − ⟨A⟩/2 + detuning, all at ΔE = de_hold.
    pub detuning: f64,
}

impl CphaseConfig {
    pub fn new(total_time: f64) -> Self {
        CphaseConfig {
            total_time,
            tau1: ns(5.0),
            de_hold: 2000.0,
            ea_max: 40.0,
            amplitude_reference_time: ns(300.0),
            max_ramp: ns(300.0),
            detuning: mhz(-10.0),
        }
    }

    pub fn omega_e(&self, params: &SystemParams) -> f64 {
        let d = self.de_hold;
        params.charge_splitting(d) + 0.25 * params.hyperfine_a - 0.5 * params.hyperfine_expectation(d) + self.detuning
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.ea_max * (self.total_time / self.amplitude_reference_time).powi(2).min(1.0)
    }

    pub fn build(&self, params: &SystemParams) -> Result<PulseSchedule> {
        let total = self.total_time;
        if !(total > 2.0 * self.tau1) {
            return Err(Error::param(
                "T",
                format!("CPHASE needs T > {:.1} ns, got {:.3} ns", 2e9 * self.tau1, total * 1e9),
            ));
        }
        let idle = params.de_idle;
        let tau_ac = total - 2.0 * self.tau1;
        let tau2 = self.max_ramp.min(tau_ac / 2.0);
        let de = Envelope::constant(idle).plus(Envelope::ramp(
            self.tau1,
            -idle + self.de_hold,
            self.tau1 + tau_ac,
            -idle + self.de_hold,
            total,
        )?);
        let ea = Envelope::window(tau2, tau_ac)?
            .delayed(self.tau1)
            .scaled(self.peak_amplitude());
        let (_, omega_b) = reference_frame(params);
        Ok(PulseSchedule {
            label: "cphase".into(),
            de,
            ea,
            ba: Envelope::Zero,
            omega_e: self.omega_e(params),
            omega_b,
            total_time: total,
        })
    }
}

pub fn make_cphase_schedule(params: &SystemParams, total: f64) -> Result<PulseSchedule> {
    CphaseConfig::new(total).build(params)
}
