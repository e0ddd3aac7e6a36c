use std::sync::Arc;

use super::calibration::{calibrate_rz_duration, EchoCalibration, LambdaTable, RxKind};
use super::extract::{block_to_gate, euler_decompose, EulerAngles, ExtractedGate, QubitGate};
use super::noise::{noise_sensitivity, NoiseSensitivity, NoisyGate, SimulatedSchedule};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::propagation::EvolveOptions;
use crate::pulses::{make_echo_rz_schedule, make_rz_schedule, PulseSchedule};
use crate::SystemParams;

/// How corrective Z rotations are realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectiveMode {
    /// Simulated Rz pulses whose duration is root-found for the angle.
    #[default]
    Physical,
    /// Exact frame updates with no duration and no noise.
    Virtual,
}

/// One step of a composite gate.
#[derive(Debug, Clone)]
pub enum Element {
    Schedule(Arc<SimulatedSchedule>),
    VirtualZ(f64),
}

impl Element {
    fn duration(&self) -> f64 {
        match self {
            Element::Schedule(s) => s.duration(),
            Element::VirtualZ(_) => 0.0,
        }
    }
}

/// A sequence of gates, stored in the order they are applied. Elements
/// that share an `Arc` are simulated once per noise value.
#[derive(Debug, Clone, Default)]
pub struct CompositeGate {
    pub label: String,
    elements: Vec<Element>,
}

impl CompositeGate {
    pub fn new(label: impl Into<String>) -> Self {
        CompositeGate {
            label: label.into(),
            elements: Vec::new(),
        }
    }

    pub fn push(&mut self, e: Element) -> &mut Self {
        self.elements.push(e);
        self
    }

    pub fn push_all(&mut self, es: impl IntoIterator<Item = Element>) -> &mut Self {
        self.elements.extend(es);
        self
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// The simulated schedules in application order.
    pub fn schedules(&self) -> Vec<&PulseSchedule> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                Element::Schedule(s) => Some(&s.schedule),
                Element::VirtualZ(_) => None,
            })
            .collect()
    }

    /// Idle-frame qubit block of the whole sequence.
    pub fn block_at(&self, noise_de: f64) -> Result<Mat2> {
        let mut cache: Vec<(*const SimulatedSchedule, Mat2)> = Vec::new();
        let mut total = Mat2::identity();
        for e in &self.elements {
            let b = match e {
                Element::VirtualZ(a) => linalg::rz(*a),
                Element::Schedule(s) => {
                    let key = Arc::as_ptr(s);
                    match cache.iter().find(|(k, _)| *k == key) {
                        Some((_, b)) => *b,
                        None => {
                            let b = s.gate_at(noise_de)?.block;
                            cache.push((key, b));
                            b
                        }
                    }
                }
            };
            total = b * total;
        }
        Ok(total)
    }
}

impl NoisyGate for CompositeGate {
    fn gate_at(&self, noise_de: f64) -> Result<ExtractedGate> {
        block_to_gate(self.block_at(noise_de)?)
    }

    fn duration(&self) -> f64 {
        self.elements.iter().map(Element::duration).sum()
    }
}

/// A Z rotation by `phi`, either simulated or virtual. Returns `None` for
/// the identity.
pub fn corrective_rz(
    params: &SystemParams,
    phi: f64,
    mode: CorrectiveMode,
    options: &EvolveOptions,
) -> Result<Option<Element>> {
    match mode {
        CorrectiveMode::Virtual => Ok(Some(Element::VirtualZ(phi))),
        CorrectiveMode::Physical => match calibrate_rz_duration(params, phi, options, 1e-9)? {
            None => Ok(None),
            Some(t) => Ok(Some(Element::Schedule(Arc::new(SimulatedSchedule::new(
                params,
                make_rz_schedule(params, t)?,
                *options,
            )?)))),
        },
    }
}

/// Wraps `core` (applied in order) with the Z corrections that turn its
/// zero-noise gate Rz(a)Rx(b)Rz(c) into Rx(b).
fn with_correctives(
    params: &SystemParams,
    label: &str,
    core: Vec<Element>,
    mode: CorrectiveMode,
    options: &EvolveOptions,
) -> Result<(CompositeGate, [f64; 2])> {
    let mut bare = CompositeGate::new(label);
    bare.push_all(core.clone());
    let e = euler_decompose(&bare.gate_at(0.0)?.gate);
    let (first, last) = (-e.theta_z2, -e.theta_z1);
    let mut g = CompositeGate::new(label);
    if let Some(c) = corrective_rz(params, first, mode, options)? {
        g.push(c);
    }
    g.push_all(core);
    if let Some(c) = corrective_rz(params, last, mode, options)? {
        g.push(c);
    }
    Ok((g, [last, first]))
}

/// A calibrated single X-family gate with its corrective rotations.
#[derive(Debug, Clone)]
pub struct BareRx {
    pub kind: RxKind,
    pub theta_x: f64,
    pub lambda: f64,
    /// Euler angles of the uncorrected pulse at zero noise.
    pub raw: EulerAngles,
    /// (after, before) corrective Z angles.
    pub correctives: [f64; 2],
    pub gate: CompositeGate,
}

/// Rx(θ) from a single sweep or naive pulse plus corrective Z rotations.
pub fn build_bare_rx(
    params: &SystemParams,
    table: &LambdaTable,
    theta_x: f64,
    mode: CorrectiveMode,
    options: &EvolveOptions,
) -> Result<BareRx> {
    let lambda = table.lambda_for(theta_x, 1e-7)?;
    let sim = Arc::new(table.kind.simulated(params, lambda, options)?);
    let raw = sim.gate_at(0.0)?.euler();
    let label = match table.kind {
        RxKind::Sweep => "sweep-rx",
        RxKind::Naive => "naive-rx",
    };
    let (gate, correctives) = with_correctives(params, label, vec![Element::Schedule(sim)], mode, options)?;
    Ok(BareRx {
        kind: table.kind,
        theta_x,
        lambda,
        raw,
        correctives,
        gate,
    })
}

/// Echo idles around the X-wrapped sweep, in slope units (rad per V/m).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct EchoPlan {
    /// Echo applied after the second X, cancelling the z1 slope.
    pub outer_late: Option<f64>,
    /// Echo between the sweep and the second X.
    pub inner_late: Option<f64>,
    /// Echo between the first X and the sweep.
    pub inner_early: Option<f64>,
    /// Echo before the first X, cancelling the z2 slope.
    pub outer_early: Option<f64>,
}

/// Splits a required net slope s = outer − inner into non-negative echo
/// slopes no smaller than the ramp-only minimum.
fn split_slope(s: f64, minimum: f64) -> (Option<f64>, Option<f64>) {
    if s >= minimum {
        (Some(s), None)
    } else if s <= -minimum {
        (None, Some(-s))
    } else if s >= 0.0 {
        (Some(s + minimum), Some(minimum))
    } else {
        (Some(minimum), Some(minimum - s))
    }
}

impl EchoPlan {
    /// Echo slopes that cancel the sweep's z-slopes. The X wrappers flip
    /// the sign of everything between them (Rz(a)·Rx(π) = Rx(π)·Rz(−a)), so
    /// the late side needs outer − inner = θ′z1 and the early side
    /// outer − inner = θ′z2.
    pub fn for_slopes(z1_prime: f64, z2_prime: f64, minimum: f64) -> Self {
        let (outer_late, inner_late) = split_slope(z1_prime, minimum);
        let (outer_early, inner_early) = split_slope(z2_prime, minimum);
        EchoPlan {
            outer_late,
            inner_late,
            inner_early,
            outer_early,
        }
    }

    /// Nudges the echoes to remove residual composite slopes (z1, z2).
    fn correct(&mut self, r1: f64, r2: f64, minimum: f64) {
        let fix = |outer: &mut Option<f64>, inner: &mut Option<f64>, r: f64| {
            let net = outer.unwrap_or(0.0) - inner.unwrap_or(0.0) - r;
            let (o, i) = split_slope(net, minimum);
            *outer = o;
            *inner = i;
        };
        fix(&mut self.outer_late, &mut self.inner_late, r1);
        fix(&mut self.outer_early, &mut self.inner_early, r2);
    }
}

/// The noise-resistant composite X rotation.
#[derive(Debug, Clone)]
pub struct SweepEchoRx {
    pub theta_x: f64,
    pub lambda: f64,
    pub sweep_sensitivity: NoiseSensitivity,
    pub echoes: EchoPlan,
    /// Hold times of the echo idles (s), in the same slots as `echoes`.
    pub echo_holds: [Option<f64>; 4],
    /// (after, before) corrective Z angles.
    pub correctives: [f64; 2],
    /// Residual first-order slopes of the finished gate's z angles.
    pub residual_slopes: (f64, f64),
    pub gate: CompositeGate,
}

impl SweepEchoRx {
    pub fn total_duration(&self) -> f64 {
        self.gate.duration()
    }
}

/// Everything the composite construction needs that does not depend on
/// the target angle.
#[derive(Debug, Clone)]
pub struct SweepEchoCalibration {
    pub table: LambdaTable,
    pub echo: EchoCalibration,
    pub options: EvolveOptions,
    pub params: SystemParams,
    pub mode: CorrectiveMode,
}

impl SweepEchoCalibration {
    pub fn new(params: &SystemParams, options: &EvolveOptions, mode: CorrectiveMode) -> Result<Self> {
        Ok(SweepEchoCalibration {
            table: LambdaTable::build(params, RxKind::Sweep, options)?,
            echo: EchoCalibration::measure(params, options)?,
            options: *options,
            params: *params,
            mode,
        })
    }
}

/// Largest target accepted by the composite: the sweep's reach at λ = 1,
/// which falls a few mrad short of π.
fn check_target(theta_x: f64, reach: f64) -> Result<()> {
    if !(theta_x > 0.0 && theta_x <= std::f64::consts::PI) {
        return Err(Error::param("theta_x", format!("{theta_x} outside (0, π]")));
    }
    if theta_x > reach + 0.02 {
        return Err(Error::param(
            "theta_x",
            format!("{theta_x} beyond the calibrated sweep reach {reach:.4}"),
        ));
    }
    Ok(())
}

/// Builds corrective-Rz · echo · X · sweep Rx(θ) · X · echo · corrective-Rz.
pub fn build_sweep_echo_rx(cal: &SweepEchoCalibration, theta_x: f64) -> Result<SweepEchoRx> {
    check_target(theta_x, cal.table.max_theta())?;
    let (params, options) = (&cal.params, &cal.options);
    let x_gate = Arc::new(RxKind::Sweep.simulated(params, 1.0, options)?);
    let minimum = cal.echo.intercept;
    let echo_element = |slope: Option<f64>| -> Result<(Option<Element>, Option<f64>)> {
        match slope {
            None => Ok((None, None)),
            Some(s) => {
                let hold = cal.echo.hold_for(s)?;
                let sim = SimulatedSchedule::new(params, make_echo_rz_schedule(params, hold)?, *options)?;
                Ok((Some(Element::Schedule(Arc::new(sim))), Some(hold)))
            }
        }
    };
    let assemble = |sweep: &Arc<SimulatedSchedule>, plan: &EchoPlan| -> Result<(Vec<Element>, [Option<f64>; 4])> {
        let (oe, h_oe) = echo_element(plan.outer_early)?;
        let (ie, h_ie) = echo_element(plan.inner_early)?;
        let (il, h_il) = echo_element(plan.inner_late)?;
        let (ol, h_ol) = echo_element(plan.outer_late)?;
        let mut seq = Vec::new();
        seq.extend(oe);
        seq.push(Element::Schedule(x_gate.clone()));
        seq.extend(ie);
        seq.push(Element::Schedule(sweep.clone()));
        seq.extend(il);
        seq.push(Element::Schedule(x_gate.clone()));
        seq.extend(ol);
        Ok((seq, [h_ol, h_il, h_ie, h_oe]))
    };

    let mut lambda = cal.table.lambda_for(theta_x, 1e-7)?;
    // slope of θx(λ) from the table cell that brackets the first guess
    let dtheta_dlambda = {
        let pts = &cal.table.points;
        let k = pts.iter().position(|p| p.0 >= lambda).unwrap_or(pts.len() - 1).max(1);
        (pts[k].1 - pts[k - 1].1) / (pts[k].0 - pts[k - 1].0)
    };

    // First pass: pick λ so that the X-wrapped core has the requested θx.
    // The echoes are pure Z rotations at zero noise, so a rough plan is
    // enough here.
    let mut sweep = Arc::new(RxKind::Sweep.simulated(params, lambda, options)?);
    let mut sens = noise_sensitivity(sweep.as_ref())?;
    let mut plan = EchoPlan::for_slopes(sens.theta_z1_prime, sens.theta_z2_prime, minimum);
    for _ in 0..4 {
        let mut core = CompositeGate::new("core");
        core.push_all(assemble(&sweep, &plan)?.0);
        let miss = theta_x - core.gate_at(0.0)?.euler().theta_x;
        if miss.abs() < 1e-6 || (lambda >= 1.0 && miss > 0.0) {
            break;
        }
        lambda = (lambda + miss / dtheta_dlambda).clamp(1e-6, 1.0);
        sweep = Arc::new(RxKind::Sweep.simulated(params, lambda, options)?);
        sens = noise_sensitivity(sweep.as_ref())?;
        plan = EchoPlan::for_slopes(sens.theta_z1_prime, sens.theta_z2_prime, minimum);
    }

    // Second pass: null the composite's own first-order slopes, correctives
    // included, since physical Rz pulses cross ΔE = 0 on their ramps.
    let mut finished = None;
    for _ in 0..4 {
        let (seq, holds) = assemble(&sweep, &plan)?;
        let (gate, correctives) = with_correctives(params, "sweep-echo-rx", seq, cal.mode, options)?;
        let s = noise_sensitivity(&gate)?;
        log::debug!(
            "echo refinement: residual slopes {:.3e}, {:.3e} rad per V/m",
            s.theta_z1_prime,
            s.theta_z2_prime
        );
        let done = s.theta_z1_prime.abs().max(s.theta_z2_prime.abs()) < 1e-6;
        finished = Some((gate, correctives, holds, plan, s));
        if done {
            break;
        }
        plan.correct(s.theta_z1_prime, s.theta_z2_prime, minimum);
    }
    let (gate, correctives, holds, plan, s) = finished.expect("at least one pass");
    Ok(SweepEchoRx {
        theta_x,
        lambda,
        sweep_sensitivity: sens,
        echoes: plan,
        echo_holds: holds,
        correctives,
        residual_slopes: (s.theta_z1_prime, s.theta_z2_prime),
        gate,
    })
}

/// Target gate for an X rotation.
pub fn rx_target(theta_x: f64) -> QubitGate {
    QubitGate::rx(theta_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_split_covers_all_signs() {
        let m = 1e-4;
        assert_eq!(split_slope(3e-3, m), (Some(3e-3), None));
        assert_eq!(split_slope(-3e-3, m), (None, Some(3e-3)));
        let (o, i) = split_slope(5e-5, m);
        assert!((o.unwrap() - i.unwrap() - 5e-5).abs() < 1e-18);
        let (o, i) = split_slope(-5e-5, m);
        assert!((o.unwrap() - i.unwrap() + 5e-5).abs() < 1e-18);
    }

    #[test]
    fn x_conjugation_flips_z() {
        // Rz(θ)·Rx(π) = Rx(π)·Rz(−θ), exactly for the 2×2 matrices
        let x = linalg::rx(std::f64::consts::PI);
        for th in [0.1, 1.0, 2.5, -0.7] {
            let lhs = linalg::rz(th) * x;
            let rhs = x * linalg::rz(-th);
            assert!((lhs - rhs).norm() < 1e-14);
        }
    }
}
