use rayon::prelude::*;

use super::extract::{z_angle_near, QubitGate};
use super::noise::{linear_fit, predict_rz_angle, NoisyGate, SimulatedSchedule};
use crate::error::{Error, Result};
use crate::propagation::EvolveOptions;
use crate::pulses::{make_echo_rz_schedule, make_rz_schedule, SweepConfig};
use crate::SystemParams;

/// Which X-rotation family a calibration refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RxKind {
    Sweep,
    Naive,
}

impl RxKind {
    pub fn config(self, lambda: f64) -> SweepConfig {
        let base = match self {
            RxKind::Sweep => SweepConfig::default(),
            RxKind::Naive => SweepConfig::naive(),
        };
        SweepConfig { lambda, ..base }
    }

    pub fn simulated(self, params: &SystemParams, lambda: f64, options: &EvolveOptions) -> Result<SimulatedSchedule> {
        SimulatedSchedule::new(params, self.config(lambda).build(params)?, *options)
    }
}

/// θx of the zero-noise gate produced by λ.
pub fn theta_x_of(params: &SystemParams, kind: RxKind, lambda: f64, options: &EvolveOptions) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let g = kind.simulated(params, lambda, options)?.gate_at(0.0)?;
    Ok(g.euler().theta_x)
}

/// Monotone λ → θx table on a uniform grid, refined by root finding.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LambdaTable {
    pub kind: RxKind,
    /// (λ, θx), λ ascending.
    pub points: Vec<(f64, f64)>,
    #[serde(skip)]
    options: EvolveOptions,
    #[serde(skip)]
    params: SystemParams,
}

impl LambdaTable {
    pub const GRID: usize = 20;

    pub fn build(params: &SystemParams, kind: RxKind, options: &EvolveOptions) -> Result<Self> {
        let lambdas: Vec<f64> = (0..=Self::GRID).map(|k| k as f64 / Self::GRID as f64).collect();
        let thetas: Vec<Result<f64>> = lambdas
            .par_iter()
            .map(|&l| theta_x_of(params, kind, l, options))
            .collect();
        let mut points = Vec::with_capacity(lambdas.len());
        for (l, t) in lambdas.into_iter().zip(thetas) {
            points.push((l, t?));
        }
        for w in points.windows(2) {
            if w[1].1 <= w[0].1 {
                return Err(Error::Calibration(format!(
                    "θx(λ) is not increasing between λ = {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(LambdaTable {
            kind,
            points,
            options: *options,
            params: *params,
        })
    }

    pub fn max_theta(&self) -> f64 {
        self.points.last().map(|p| p.1).unwrap_or(0.0)
    }

    /// Linear interpolation in the table.
    pub fn interpolate(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0) || theta > std::f64::consts::PI {
            return Err(Error::param("theta_x", format!("{theta} outside (0, π]")));
        }
        if theta >= self.max_theta() {
            return Ok(1.0);
        }
        let k = self
            .points
            .iter()
            .position(|p| p.1 >= theta)
            .unwrap_or(self.points.len() - 1);
        let (a, b) = (self.points[k - 1], self.points[k]);
        Ok(a.0 + (theta - a.1) * (b.0 - a.0) / (b.1 - a.1))
    }

    /// λ giving θx = theta to within `tol`, by secant steps from the
    /// interpolated guess safeguarded by the bracketing table cell. Targets
    /// above the reach of λ = 1 return λ = 1.
    pub fn lambda_for(&self, theta: f64, tol: f64) -> Result<f64> {
        let guess = self.interpolate(theta)?;
        if guess >= 1.0 {
            return Ok(1.0);
        }
        let k = self
            .points
            .iter()
            .position(|p| p.1 >= theta)
            .unwrap_or(self.points.len() - 1);
        let (lo, hi) = (self.points[k - 1], self.points[k]);
        let f = |l: f64| theta_x_of(&self.params, self.kind, l, &self.options).map(|t| t - theta);
        find_root(f, (lo.0, lo.1 - theta), (hi.0, hi.1 - theta), guess, tol, "lambda")
    }
}

/// Safeguarded secant (regula falsi with bisection fallback) on a
/// bracketing interval where f(a)·f(b) ≤ 0.
pub(crate) fn find_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: (f64, f64),
    mut b: (f64, f64),
    guess: f64,
    tol: f64,
    what: &str,
) -> Result<f64> {
    if a.1 == 0.0 {
        return Ok(a.0);
    }
    if b.1 == 0.0 {
        return Ok(b.0);
    }
    if a.1.signum() == b.1.signum() {
        return Err(Error::NoRoot {
            lo: a.0,
            hi: b.0,
            what: what.into(),
        });
    }
    let mut x = guess.clamp(a.0.min(b.0), a.0.max(b.0));
    for _ in 0..60 {
        let fx = f(x)?;
        if fx.abs() < tol {
            return Ok(x);
        }
        if fx.signum() == a.1.signum() {
            a = (x, fx);
        } else {
            b = (x, fx);
        }
        let secant = a.0 - a.1 * (b.0 - a.0) / (b.1 - a.1);
        let mid = 0.5 * (a.0 + b.0);
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        // fall back to bisection when the secant step lands near an end
        let margin = 0.05 * (hi - lo);
        x = if secant > lo + margin && secant < hi - margin {
            secant
        } else {
            mid
        };
        if hi - lo < 1e-15 * hi.abs().max(1e-300) {
            return Ok(x);
        }
    }
    Err(Error::Calibration(format!("{what}: root search did not converge")))
}

/// Golden-section maximisation of a unimodal function on [a, b].
pub(crate) fn maximize(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// Result of tuning the naive gate so that λ = 1 is its first θx = π
/// crossing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NaiveTuning {
    /// Added to the reference ωB detuning (rad/s).
    pub detuning_b_shift: f64,
    /// Multiplies both reference peak amplitudes.
    pub amplitude_scale: f64,
    /// θx reached at the optimum.
    pub theta_max: f64,
}

/// Searches the extra ωB detuning that lets the parked (non-sweeping) gate
/// reach θx = π, and the amplitude at which it does. `shift_range` is in
/// rad/s and `scale_range` brackets the amplitude multiplier.
pub fn tune_naive_gate(
    params: &SystemParams,
    options: &EvolveOptions,
    shift_range: (f64, f64),
    scale_range: (f64, f64),
) -> Result<NaiveTuning> {
    let base = SweepConfig {
        sweep: false,
        ..SweepConfig::default()
    };
    let theta = |shift: f64, scale: f64| -> Result<f64> {
        let cfg = SweepConfig {
            detuning_b: base.detuning_b + shift,
            ea_peak: base.ea_peak * scale,
            ba_peak: base.ba_peak * scale,
            ..base
        };
        let sim = SimulatedSchedule::new(params, cfg.build(params)?, *options)?;
        Ok(sim.gate_at(0.0)?.euler().theta_x)
    };
    let best_scale = |shift: f64| -> Result<(f64, f64)> {
        // coarse scan first, since θx(scale) oscillates past its first peak
        let n = 16;
        let grid: Vec<f64> = (0..=n)
            .map(|k| scale_range.0 + (scale_range.1 - scale_range.0) * k as f64 / n as f64)
            .collect();
        let vals: Vec<Result<f64>> = grid.par_iter().map(|&s| theta(shift, s)).collect();
        let mut best = (grid[0], f64::MIN);
        for (s, v) in grid.iter().zip(vals) {
            let v = v?;
            if v > best.1 {
                best = (*s, v);
            }
        }
        let step = (scale_range.1 - scale_range.0) / n as f64;
        maximize(|s| theta(shift, s), (best.0 - step).max(1e-3), best.0 + step, 1e-4)
    };
    let (shift, theta_max) = maximize(|s| best_scale(s).map(|r| r.1), shift_range.0, shift_range.1, 2.0 * 1e4)?;
    let (scale, theta_max2) = best_scale(shift)?;
    Ok(NaiveTuning {
        detuning_b_shift: shift,
        amplitude_scale: scale,
        theta_max: theta_max.max(theta_max2),
    })
}

/// Duration of the Rz schedule whose simulated angle realises Rz(phi), for
/// phi taken modulo 2π. The schedule's angle is negative and grows in
/// magnitude with T, so the target branch is phi − 2π·k in (−2π, 0].
/// Returns `None` when the requested rotation is the identity to within
/// `tol`.
pub fn calibrate_rz_duration(
    params: &SystemParams,
    phi: f64,
    options: &EvolveOptions,
    tol: f64,
) -> Result<Option<f64>> {
    let tau = std::f64::consts::TAU;
    let reduced = phi.rem_euclid(tau);
    if reduced < tol || tau - reduced < tol {
        return Ok(None);
    }
    rz_duration_for_angle(params, reduced - tau, options, tol).map(Some)
}

/// Duration T at which the simulated, unreduced Rz angle equals `theta`
/// (which must be negative: the pulse always lowers the splitting's phase).
pub fn rz_duration_for_angle(params: &SystemParams, theta: f64, options: &EvolveOptions, tol: f64) -> Result<f64> {
    if !(theta < 0.0) {
        return Err(Error::param(
            "theta",
            format!("Rz pulses give negative angles, got {theta}"),
        ));
    }
    let angle = |t: f64| -> Result<f64> {
        let sim = SimulatedSchedule::new(params, make_rz_schedule(params, t)?, *options)?;
        let g = sim.gate_at(0.0)?;
        let near = predict_rz_angle(params, t)?.unreduced;
        Ok(z_angle_near(&g.block, near) - theta)
    };
    // bracket from the prediction, widened until the simulated sign flips
    let mut hi = crate::ns(1.0);
    while predict_rz_angle(params, hi)?.unreduced > theta && hi < crate::ns(100.0) {
        hi *= 1.25;
    }
    let mut lo = (hi / 1.25 / 1.25).max(1e-12);
    let mut hi = hi * 1.25;
    let (mut flo, mut fhi) = (angle(lo)?, angle(hi)?);
    for _ in 0..8 {
        if flo > 0.0 && fhi < 0.0 {
            break;
        }
        if flo <= 0.0 {
            lo = (lo / 1.5).max(1e-12);
            flo = angle(lo)?;
        }
        if fhi >= 0.0 {
            hi *= 1.5;
            fhi = angle(hi)?;
        }
    }
    find_root(angle, (lo, flo), (hi, fhi), 0.5 * (lo + hi), tol, "rz duration")
}

/// Z angle of a diagonal gate relative to a reference, for slope fits.
pub(crate) fn z_angle_relative(g: &QubitGate, near: f64) -> f64 {
    z_angle_near(g.matrix(), near)
}

/// Affine model of the echo-idle slope: dθ/dδE = intercept + rate·hold.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EchoCalibration {
    /// Slope of the zero-hold echo (ramps only), rad per V/m.
    pub intercept: f64,
    /// rad per V/m per second of hold.
    pub rate: f64,
    /// The analytic flat-segment rate A·d·e/(4ħVt), for reference.
    pub analytic_rate: f64,
}

impl EchoCalibration {
    pub fn measure(params: &SystemParams, options: &EvolveOptions) -> Result<Self> {
        let probe_hold = crate::ns(40.0);
        let slopes: Vec<Result<f64>> = [0.0, probe_hold]
            .par_iter()
            .map(|&h| echo_slope(params, h, options))
            .collect();
        let mut it = slopes.into_iter();
        let s0 = it.next().expect("two probes")?;
        let s1 = it.next().expect("two probes")?;
        Ok(EchoCalibration {
            intercept: s0,
            rate: (s1 - s0) / probe_hold,
            analytic_rate: echo_rate_analytic(params),
        })
    }

    /// Hold time whose echo slope equals `slope`, if it is reachable.
    pub fn hold_for(&self, slope: f64) -> Result<f64> {
        let h = (slope - self.intercept) / self.rate;
        if h < 0.0 {
            return Err(Error::Calibration(format!(
                "echo slope {slope:.3e} rad/(V/m) is below the ramp-only slope {:.3e}",
                self.intercept
            )));
        }
        Ok(h)
    }
}

/// A·d·e/(4ħVt): dephasing rate per unit δE of an idle at ΔE = 0.
pub fn echo_rate_analytic(params: &SystemParams) -> f64 {
    params.hyperfine_a * params.field_coupling() / (4.0 * params.vt)
}

/// Flat-segment duration giving an echo slope θ′ from the analytic rate.
pub fn echo_hold_analytic(params: &SystemParams, slope: f64) -> f64 {
    slope / echo_rate_analytic(params)
}

/// Simulated dθ/dδE of an echo idle with the given hold.
pub fn echo_slope(params: &SystemParams, hold: f64, options: &EvolveOptions) -> Result<f64> {
    let sim = SimulatedSchedule::new(params, make_echo_rz_schedule(params, hold)?, *options)?;
    let probes = super::noise::SENSITIVITY_PROBES;
    let centre = sim.gate_at(0.0)?;
    let reference = z_angle_relative(&centre.gate, 0.0);
    let mut angles = Vec::with_capacity(probes.len());
    for &de in &probes {
        let g = sim.gate_at(de)?;
        angles.push(z_angle_relative(&g.gate, reference));
    }
    Ok(linear_fit(&probes, &angles).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_finder_on_cubic() {
        let r = find_root(|x| Ok(x * x * x - 2.0), (0.0, -2.0), (2.0, 6.0), 1.0, 1e-12, "cubic").unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-9);
        assert!(find_root(|x| Ok(x * x + 1.0), (0.0, 1.0), (1.0, 2.0), 0.5, 1e-9, "none").is_err());
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, v) = maximize(|x| Ok(-(x - 0.3f64).powi(2) + 1.0), 0.0, 1.0, 1e-8).unwrap();
        assert!((x - 0.3).abs() < 1e-6 && (v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn analytic_echo_hold() {
        // 3.6e-3 rad per V/m needs about 30 ns at the default parameters
        let p = SystemParams::default();
        let t = echo_hold_analytic(&p, 3.6e-3);
        assert!((t - 30e-9).abs() < 1.0e-9, "{t}");
    }
}
