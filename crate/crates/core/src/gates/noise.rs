use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::extract::{euler_decompose, extract_with_frame, wrap_pi, z_angle_near, ExtractedGate, IdleFrame, QubitGate};
use crate::error::{Error, Result};
use crate::propagation::{evolve, EvolveOptions};
use crate::pulses::{make_rz_schedule, PulseSchedule};
use crate::SystemParams;

/// Anything that yields an idle-frame qubit gate for a given quasi-static
/// field offset δE.
pub trait NoisyGate: Sync {
    fn gate_at(&self, noise_de: f64) -> Result<ExtractedGate>;

    /// Wall-clock duration of the gate.
    fn duration(&self) -> f64;
}

/// A single schedule with a fixed simulation setup.
#[derive(Debug, Clone)]
pub struct SimulatedSchedule {
    pub params: SystemParams,
    pub schedule: PulseSchedule,
    pub options: EvolveOptions,
    frame: IdleFrame,
}

impl SimulatedSchedule {
    pub fn new(params: &SystemParams, schedule: PulseSchedule, options: EvolveOptions) -> Result<Self> {
        let frame = IdleFrame::for_schedule(params, options.frame, &schedule)?;
        Ok(SimulatedSchedule {
            params: *params,
            schedule,
            options,
            frame,
        })
    }

    pub fn idle_frame(&self) -> &IdleFrame {
        &self.frame
    }
}

impl NoisyGate for SimulatedSchedule {
    fn gate_at(&self, noise_de: f64) -> Result<ExtractedGate> {
        let result = evolve(&self.params, &self.schedule, noise_de, &self.options)?;
        extract_with_frame(&result, &self.frame, self.schedule.total_time)
    }

    fn duration(&self) -> f64 {
        self.schedule.total_time
    }
}

/// Quasi-static Gaussian charge noise on ΔE.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    /// r.m.s. of δE in V/m
    pub sigma_de: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_de: f64, sample_count: usize, seed: u64) -> Result<Self> {
        let m = NoiseModel {
            sigma_de,
            sample_count,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_de >= 0.0 && self.sigma_de.is_finite()) {
            return Err(Error::param("sigma_dE", "must be finite and non-negative"));
        }
        if self.sample_count == 0 {
            return Err(Error::param("sample_count", "must be at least 1"));
        }
        Ok(())
    }

    /// The δE values, in order. Draws come in antithetic pairs (x, −x),
    /// which removes the odd moments of the sample mean exactly.
    pub fn offsets(&self) -> Vec<f64> {
        if self.sigma_de == 0.0 {
            return vec![0.0; self.sample_count];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.sigma_de).expect("validated sigma");
        let mut out = Vec::with_capacity(self.sample_count);
        while out.len() < self.sample_count {
            let x: f64 = normal.sample(&mut rng);
            out.push(x);
            if out.len() < self.sample_count {
                out.push(-x);
            }
        }
        out
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MonteCarloReport {
    pub sigma_de: f64,
    pub seed: u64,
    /// (δE, infidelity) per sample, in draw order.
    pub samples: Vec<(f64, f64)>,
    pub mean_infidelity: f64,
    pub standard_error: f64,
    pub max_leakage: f64,
}

/// Average infidelity of `gate` against `target` over the noise model.
/// Samples are evaluated in parallel and reduced in draw order, so the
/// result is bit-for-bit reproducible for a given seed.
pub fn run_noise_monte_carlo(gate: &dyn NoisyGate, target: &QubitGate, model: &NoiseModel) -> Result<MonteCarloReport> {
    model.validate()?;
    let offsets = model.offsets();
    let evaluated: Vec<Result<(f64, f64, f64)>> = offsets
        .par_iter()
        .map(|&de| {
            let g = gate.gate_at(de)?;
            Ok((de, g.infidelity(target), g.leakage))
        })
        .collect();
    let mut samples = Vec::with_capacity(offsets.len());
    let mut max_leakage = 0.0f64;
    for e in evaluated {
        let (de, inf, leak) = e?;
        samples.push((de, inf));
        max_leakage = max_leakage.max(leak);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloReport {
        sigma_de: model.sigma_de,
        seed: model.seed,
        samples,
        mean_infidelity: mean,
        standard_error: (var / n).sqrt(),
        max_leakage,
    })
}

/// Probe offsets for the first-order sensitivity fit, in V/m.
pub const SENSITIVITY_PROBES: [f64; 5] = [-40.0, -20.0, 0.0, 20.0, 40.0];

/// First-order dependence of the Euler angles on δE.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NoiseSensitivity {
    pub theta_z1_0: f64,
    /// rad per V/m
    pub theta_z1_prime: f64,
    pub theta_z2_0: f64,
    pub theta_z2_prime: f64,
    pub theta_x_0: f64,
    pub theta_x_prime: f64,
    /// Largest deviation of any angle from its linear fit, rad.
    pub residual: f64,
}

fn unwrap_sequence(name: &'static str, raw: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(raw.len());
    for (i, &a) in raw.iter().enumerate() {
        if i == 0 {
            out.push(a);
            continue;
        }
        let prev = out[i - 1];
        let step = wrap_pi(a - prev);
        // a step near ±π could be either branch
        if step.abs() > 0.9 * std::f64::consts::PI {
            let left = prev + step;
            let right = if step > 0.0 {
                left - std::f64::consts::TAU
            } else {
                left + std::f64::consts::TAU
            };
            return Err(Error::AmbiguousUnwrap {
                angle: name,
                left,
                right,
            });
        }
        out.push(prev + step);
    }
    Ok(out)
}

/// Least-squares line through (x, y); returns (intercept, slope, max residual).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let res = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).abs())
        .fold(0.0, f64::max);
    (icpt, slope, res)
}

/// Fits θz1, θz2 and θx linearly in δE over [`SENSITIVITY_PROBES`].
pub fn noise_sensitivity(gate: &dyn NoisyGate) -> Result<NoiseSensitivity> {
    noise_sensitivity_with(gate, &SENSITIVITY_PROBES)
}

pub fn noise_sensitivity_with(gate: &dyn NoisyGate, probes: &[f64]) -> Result<NoiseSensitivity> {
    let gates: Vec<Result<ExtractedGate>> = probes.par_iter().map(|&de| gate.gate_at(de)).collect();
    let mut z1 = Vec::new();
    let mut z2 = Vec::new();
    let mut x = Vec::new();
    for g in gates {
        let e = euler_decompose(&g?.gate);
        z1.push(e.theta_z1);
        z2.push(e.theta_z2);
        x.push(e.theta_x);
    }
    let z1 = unwrap_sequence("theta_z1", &z1)?;
    let z2 = unwrap_sequence("theta_z2", &z2)?;
    let (z1_0, z1_p, r1) = linear_fit(probes, &z1);
    let (z2_0, z2_p, r2) = linear_fit(probes, &z2);
    let (x_0, x_p, r3) = linear_fit(probes, &x);
    Ok(NoiseSensitivity {
        theta_z1_0: z1_0,
        theta_z1_prime: z1_p,
        theta_z2_0: z2_0,
        theta_z2_prime: z2_p,
        theta_x_0: x_0,
        theta_x_prime: x_p,
        residual: r1.max(r2).max(r3),
    })
}

/// Predicted Z angle of the Rz schedule of duration T from the
/// approximate splitting: θ = −∫(δq(ΔE(t)) − δq(ΔE_idle)) dt.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RzPrediction {
    pub unreduced: f64,
    /// Reduced to [0, 2π).
    pub reduced: f64,
}

pub fn predict_rz_angle(params: &SystemParams, total: f64) -> Result<RzPrediction> {
    let schedule = make_rz_schedule(params, total)?;
    let q0 = params.qubit_splitting_approx(params.de_idle);
    let f = |t: f64| -(params.qubit_splitting_approx(schedule.de.value(t)) - q0);
    let unreduced = integrate(&schedule, f, 0.0, total);
    Ok(RzPrediction {
        unreduced,
        reduced: unreduced.rem_euclid(std::f64::consts::TAU),
    })
}

/// Composite Simpson quadrature on each smooth piece of the schedule.
pub(crate) fn integrate(schedule: &PulseSchedule, f: impl Fn(f64) -> f64, t0: f64, t1: f64) -> f64 {
    let mut cuts: Vec<f64> = schedule
        .breakpoints()
        .into_iter()
        .filter(|&t| t > t0 && t < t1)
        .collect();
    cuts.insert(0, t0);
    cuts.push(t1);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let n = 400;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += s * h / 3.0;
    }
    total
}

/// Simulated Z angle of an Rz schedule, on the branch nearest the
/// prediction.
pub fn simulate_rz_angle(params: &SystemParams, total: f64, options: &EvolveOptions, noise_de: f64) -> Result<f64> {
    let sim = SimulatedSchedule::new(params, make_rz_schedule(params, total)?, *options)?;
    let g = sim.gate_at(noise_de)?;
    let near = predict_rz_angle(params, total)?.unreduced;
    Ok(z_angle_near(&g.block, near))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_antithetic_and_reproducible() {
        let m = NoiseModel::new(100.0, 7, 3).unwrap();
        let a = m.offsets();
        assert_eq!(a, m.offsets());
        assert_eq!(a.len(), 7);
        assert_eq!(a[0], -a[1]);
        assert_eq!(a[4], -a[5]);
        assert!(NoiseModel::new(0.0, 5, 1).unwrap().offsets().iter().all(|&x| x == 0.0));
        assert!(NoiseModel::new(-1.0, 5, 1).is_err());
        assert!(NoiseModel::new(1.0, 0, 1).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 3.0 * v).collect();
        let (a, b, r) = linear_fit(&x, &y);
        assert!((a - 0.5).abs() < 1e-14 && (b - 3.0).abs() < 1e-14 && r < 1e-14);
    }

    #[test]
    fn unwrap_crosses_zero() {
        let tau = std::f64::consts::TAU;
        let u = unwrap_sequence("t", &[tau - 0.1, 0.05, 0.2]).unwrap();
        assert!((u[1] - (tau + 0.05)).abs() < 1e-12);
        assert!(unwrap_sequence("t", &[0.0, 3.1]).is_err());
    }

    #[test]
    fn short_rz_prediction_vanishes() {
        let p = SystemParams::default();
        let small = predict_rz_angle(&p, 1e-12).unwrap().unreduced.abs();
        assert!(small < 1e-9);
    }
}
