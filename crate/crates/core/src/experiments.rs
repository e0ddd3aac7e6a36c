//! Manifest-driven experiments that regenerate the reference curves as
//! columnar data.
//!
//! A manifest is a TOML document:
//!
//! ```toml
//! kind = "rz-noise"
//! output = "out/rz_noise.dat"
//! seed = 7
//!
//! [params]
//! b0 = "0.2 T"
//!
//! [noise]
//! sigma = ["50 V/m", "100 V/m"]
//! samples = 200
//!
//! [grid]
//! values = ["-0.25 pi", "-1 pi", "-2 pi"]
//! ```
//!
//! Sections that a kind does not use are rejected rather than ignored, so a
//! typo never silently changes a run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{params_from_table, params_provenance, Dimension, Quantity};
use crate::effective::EffectiveModel;
use crate::error::{Error, Result};
use crate::gates::{
    build_bare_rx, build_sweep_echo_rx, exact_qubit_splitting, predict_rz_angle, run_noise_monte_carlo, rx_target,
    rz_duration_for_angle, simulate_rz_angle, CorrectiveMode, LambdaTable, MonteCarloReport, NoiseModel, NoisyGate,
    QubitGate, RxKind, SimulatedSchedule, SweepEchoCalibration,
};
use crate::linalg::Op8;
use crate::model::BasisConvention;
use crate::output::{self, DataTable};
use crate::propagation::{EvolveOptions, Frame};
use crate::pulses::{make_rz_schedule, reference_frame, CphaseConfig};
use crate::twoqubit::{cphase_angle, cphase_angle_coupled, CphaseOptions, TwoQubitLayout, TwoQubitOptions};
use crate::{SystemParams, TWO_PI};

/// Default Monte Carlo sample count per noise strength.
pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SplittingCurve,
    RzAngleCurve,
    RzNoise,
    RxNoise,
    SweepEchoNoise,
    CphaseCurve,
    HprimeDump,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::SplittingCurve,
        ExperimentKind::RzAngleCurve,
        ExperimentKind::RzNoise,
        ExperimentKind::RxNoise,
        ExperimentKind::SweepEchoNoise,
        ExperimentKind::CphaseCurve,
        ExperimentKind::HprimeDump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SplittingCurve => "splitting-curve",
            ExperimentKind::RzAngleCurve => "rz-angle-curve",
            ExperimentKind::RzNoise => "rz-noise",
            ExperimentKind::RxNoise => "rx-noise",
            ExperimentKind::SweepEchoNoise => "sweep-echo-noise",
            ExperimentKind::CphaseCurve => "cphase-curve",
            ExperimentKind::HprimeDump => "hprime-dump",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::SplittingCurve => {
                "qubit splitting vs static field offset, exact diagonalization against the closed form \
                 [grid: start, stop, points in V/m]"
            }
            ExperimentKind::RzAngleCurve => {
                "simulated Rz angle vs pulse duration against the phase-integral prediction \
                 [grid: start, stop, points in s; frame]"
            }
            ExperimentKind::RzNoise => {
                "mean Rz infidelity vs charge-noise strength [grid.values: negative angles; noise; frame]"
            }
            ExperimentKind::RxNoise => {
                "mean infidelity of single-pulse X rotations vs noise [grid.values: angles in (0, pi]; \
                 gate.family = sweep | naive; noise; frame]"
            }
            ExperimentKind::SweepEchoNoise => {
                "mean infidelity of the echoed sweep X rotation vs noise [grid.values; noise; frame]"
            }
            ExperimentKind::CphaseCurve => {
                "two-qubit phase vs duration of the smooth CPHASE schedule [grid: start, stop, points in s; \
                 twoqubit]"
            }
            ExperimentKind::HprimeDump => {
                "entries of the effective 8x8 Hamiltonian at one control point [grid: de, ea, ba]"
            }
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// r.m.s. field offsets.
    pub sigma: Vec<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Explicit list, used by the kinds that take target angles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Quantity>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ea: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ba: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<RxKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctives: Option<CorrectiveMode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoQubitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<Quantity>,
    /// Replaces the dipole coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_term: Option<bool>,
    /// Also evaluate the all-orders coupled quadrature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<String>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twoqubit: Option<TwoQubitSection>,
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string() + &span_hint(text, e.span())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML form, as embedded in output headers.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Recovers the manifest that produced an output file.
    pub fn from_output_header(text: &str) -> Result<Self> {
        Self::from_toml(&output::embedded_manifest(text)?)
    }

    /// Checks every field and resolves units without running anything.
    pub fn validate(&self) -> Result<Plan> {
        Plan::resolve(self)
    }
}

/// Location suffix for a parse error: the line number and, when the span
/// sits on a `key = value` line, the key.
fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(r) = span else {
        return String::new();
    };
    let start = r.start.min(text.len());
    let line = text[..start].matches('\n').count() + 1;
    let line_text = text.lines().nth(line - 1).unwrap_or("");
    match line_text.split_once('=') {
        Some((key, _)) if !key.trim().is_empty() && !key.trim_start().starts_with('[') => {
            format!(" (field `{}`, line {line})", key.trim())
        }
        _ => format!(" (line {line})"),
    }
}

/// A validated manifest with every quantity in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub kind: ExperimentKind,
    pub params: SystemParams,
    pub seed: u64,
    pub frame: Frame,
    pub task: Task,
}

/// Kind-specific resolved inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    SplittingCurve {
        fields: Vec<f64>,
    },
    RzAngleCurve {
        durations: Vec<f64>,
    },
    RzNoise {
        angles: Vec<f64>,
        noise: Vec<f64>,
        samples: usize,
    },
    RxNoise {
        family: RxKind,
        correctives: CorrectiveMode,
        angles: Vec<f64>,
        noise: Vec<f64>,
        samples: usize,
    },
    SweepEchoNoise {
        correctives: CorrectiveMode,
        angles: Vec<f64>,
        noise: Vec<f64>,
        samples: usize,
    },
    CphaseCurve {
        durations: Vec<f64>,
        layout: TwoQubitLayout,
        detuning: f64,
        exchange_term: bool,
        coupled: bool,
    },
    HprimeDump {
        de: f64,
        ea: f64,
        ba: f64,
    },
}

fn unused(kind: ExperimentKind, field: &str) -> Error {
    Error::manifest(field, format!("not used by `{kind}`"))
}

fn linspace(field: &str, start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(Error::manifest(&format!("{field}.points"), "must be at least 1"));
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    Ok((0..points)
        .map(|k| start + (stop - start) * k as f64 / (points - 1) as f64)
        .collect())
}

impl Plan {
    fn resolve(m: &Manifest) -> Result<Plan> {
        let kind = m.kind;
        let params = params_from_table(&m.params).map_err(|e| match e {
            Error::InvalidParameter { field, reason } => Error::manifest(&format!("params.{field}"), reason),
            Error::Unit { field, reason } => Error::Unit {
                field: format!("params.{field}"),
                reason,
            },
            other => other,
        })?;
        let uses_frame = matches!(
            kind,
            ExperimentKind::RzAngleCurve
                | ExperimentKind::RzNoise
                | ExperimentKind::RxNoise
                | ExperimentKind::SweepEchoNoise
        );
        let uses_noise = matches!(
            kind,
            ExperimentKind::RzNoise | ExperimentKind::RxNoise | ExperimentKind::SweepEchoNoise
        );
        let frame = match (&m.frame, uses_frame) {
            (Some(_), false) => return Err(unused(kind, "frame")),
            (Some(f), true) => f.parse::<Frame>().map_err(|_| {
                Error::manifest(
                    "frame",
                    format!("`{f}` is not one of effective, lab-orbital, lab-position"),
                )
            })?,
            (None, _) => Frame::Effective,
        };
        if m.noise.is_some() && !uses_noise {
            return Err(unused(kind, "noise"));
        }
        if m.gate.is_some() && !matches!(kind, ExperimentKind::RxNoise | ExperimentKind::SweepEchoNoise) {
            return Err(unused(kind, "gate"));
        }
        if let Some(g) = &m.gate {
            if g.family.is_some() && kind != ExperimentKind::RxNoise {
                return Err(unused(kind, "gate.family"));
            }
        }
        if m.twoqubit.is_some() && kind != ExperimentKind::CphaseCurve {
            return Err(unused(kind, "twoqubit"));
        }

        let grid = m.grid.clone().unwrap_or_default();
        let q = |field: &str, v: &Option<Quantity>, dim: Dimension, default: f64| -> Result<f64> {
            match v {
                Some(x) => x.resolve(&format!("grid.{field}"), dim),
                None => Ok(default),
            }
        };
        let check_grid = |allowed: &[&str]| -> Result<()> {
            let present = [
                ("start", grid.start.is_some()),
                ("stop", grid.stop.is_some()),
                ("points", grid.points.is_some()),
                ("values", grid.values.is_some()),
                ("de", grid.de.is_some()),
                ("ea", grid.ea.is_some()),
                ("ba", grid.ba.is_some()),
            ];
            for (name, set) in present {
                if set && !allowed.contains(&name) {
                    return Err(unused(kind, &format!("grid.{name}")));
                }
            }
            Ok(())
        };
        let range = |dim: Dimension, lo: f64, hi: f64, n: usize| -> Result<Vec<f64>> {
            check_grid(&["start", "stop", "points"])?;
            let start = q("start", &grid.start, dim, lo)?;
            let stop = q("stop", &grid.stop, dim, hi)?;
            linspace("grid", start, stop, grid.points.unwrap_or(n))
        };
        let angles = |defaults: &[f64]| -> Result<Vec<f64>> {
            check_grid(&["values"])?;
            match &grid.values {
                None => Ok(defaults.to_vec()),
                Some(v) if v.is_empty() => Err(Error::manifest("grid.values", "must not be empty")),
                Some(v) => v
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x.resolve(&format!("grid.values[{i}]"), Dimension::Angle))
                    .collect(),
            }
        };
        let noise = || -> Result<(Vec<f64>, usize)> {
            let section = m.noise.clone().unwrap_or(NoiseSection {
                sigma: [0.0, 50.0, 100.0, 150.0, 200.0]
                    .iter()
                    .map(|s| Quantity::Text(format!("{s} V/m")))
                    .collect(),
                samples: None,
            });
            if section.sigma.is_empty() {
                return Err(Error::manifest("noise.sigma", "must not be empty"));
            }
            let sig = section
                .sigma
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let field = format!("noise.sigma[{i}]");
                    let v = s.resolve(&field, Dimension::ElectricField)?;
                    if v < 0.0 {
                        return Err(Error::manifest(&field, "must be non-negative"));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()?;
            let samples = section.samples.unwrap_or(DEFAULT_SAMPLES);
            if samples == 0 {
                return Err(Error::manifest("noise.samples", "must be at least 1"));
            }
            Ok((sig, samples))
        };
        let pi = std::f64::consts::PI;
        let x_angles = |defaults: &[f64]| -> Result<Vec<f64>> {
            let a = angles(defaults)?;
            for (i, th) in a.iter().enumerate() {
                if !(*th > 0.0 && *th <= pi + 1e-12) {
                    return Err(Error::manifest(
                        &format!("grid.values[{i}]"),
                        "X angles must lie in (0, pi]",
                    ));
                }
            }
            Ok(a)
        };
        let correctives = m.gate.as_ref().and_then(|g| g.correctives).unwrap_or_default();

        let task = match kind {
            ExperimentKind::SplittingCurve => Task::SplittingCurve {
                fields: range(Dimension::ElectricField, -2e4, 2e4, 401)?,
            },
            ExperimentKind::RzAngleCurve => {
                let durations = range(Dimension::Time, 2e-9, 25e-9, 47)?;
                if durations.iter().any(|&t| !(t > 0.0)) {
                    return Err(Error::manifest("grid", "durations must be positive"));
                }
                Task::RzAngleCurve { durations }
            }
            ExperimentKind::RzNoise => {
                let a = angles(&[-0.25 * pi, -pi, -2.0 * pi])?;
                for (i, th) in a.iter().enumerate() {
                    if !(*th < 0.0) {
                        return Err(Error::manifest(
                            &format!("grid.values[{i}]"),
                            "Rz pulses produce negative angles",
                        ));
                    }
                }
                let (noise, samples) = noise()?;
                Task::RzNoise {
                    angles: a,
                    noise,
                    samples,
                }
            }
            ExperimentKind::RxNoise => {
                let (noise, samples) = noise()?;
                Task::RxNoise {
                    family: m.gate.as_ref().and_then(|g| g.family).unwrap_or(RxKind::Sweep),
                    correctives,
                    angles: x_angles(&[0.25 * pi, 0.5 * pi, 0.75 * pi, pi])?,
                    noise,
                    samples,
                }
            }
            ExperimentKind::SweepEchoNoise => {
                let (noise, samples) = noise()?;
                Task::SweepEchoNoise {
                    correctives,
                    angles: x_angles(&[0.25 * pi, 0.5 * pi, 0.75 * pi, pi])?,
                    noise,
                    samples,
                }
            }
            ExperimentKind::CphaseCurve => {
                let durations = range(Dimension::Time, 100e-9, 750e-9, 27)?;
                let tq = m.twoqubit.clone().unwrap_or_default();
                let mut layout = TwoQubitLayout {
                    qubits: [params; 2],
                    ..Default::default()
                };
                if let Some(s) = &tq.separation {
                    layout.separation = s.resolve("twoqubit.separation", Dimension::Length)?;
                }
                if let Some(c) = &tq.coupling {
                    layout.coupling_override = Some(c.resolve("twoqubit.coupling", Dimension::AngularFrequency)?);
                }
                layout
                    .validate()
                    .map_err(|e| Error::manifest("twoqubit.separation", e.to_string()))?;
                let detuning = match &tq.detuning {
                    Some(d) => d.resolve("twoqubit.detuning", Dimension::AngularFrequency)?,
                    None => CphaseConfig::new(1.0).detuning,
                };
                let shortest = 2.0 * CphaseConfig::new(1.0).tau1;
                if durations.iter().any(|&t| !(t > shortest)) {
                    return Err(Error::manifest(
                        "grid",
                        format!("CPHASE durations must exceed {:.0} ns", shortest * 1e9),
                    ));
                }
                Task::CphaseCurve {
                    durations,
                    layout,
                    detuning,
                    exchange_term: tq.exchange_term.unwrap_or(false),
                    coupled: tq.coupled.unwrap_or(true),
                }
            }
            ExperimentKind::HprimeDump => {
                check_grid(&["de", "ea", "ba"])?;
                Task::HprimeDump {
                    de: q("de", &grid.de, Dimension::ElectricField, params.de_idle)?,
                    ea: q("ea", &grid.ea, Dimension::ElectricField, 0.0)?,
                    ba: q("ba", &grid.ba, Dimension::MagneticField, 0.0)?,
                }
            }
        };
        Ok(Plan {
            kind,
            params,
            seed: m.seed,
            frame,
            task,
        })
    }

    /// `key = value` provenance lines for the output header.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("kind".to_string(), self.kind.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("frame".to_string(), self.frame.name().to_string()),
        ];
        v.extend(
            params_provenance(&self.params)
                .into_iter()
                .map(|(k, x)| (format!("param.{k}"), x)),
        );
        match &self.task {
            Task::RzNoise { samples, .. } | Task::RxNoise { samples, .. } | Task::SweepEchoNoise { samples, .. } => {
                v.push(("noise.samples".into(), samples.to_string()));
                v.push(("noise.pairing".into(), "antithetic".into()));
            }
            Task::CphaseCurve {
                layout,
                detuning,
                exchange_term,
                ..
            } => {
                v.push(("twoqubit.separation".into(), format!("{} nm", layout.separation * 1e9)));
                v.push((
                    "twoqubit.coupling".into(),
                    format!("{} MHz", layout.coupling() / TWO_PI / 1e6),
                ));
                v.push(("twoqubit.detuning".into(), format!("{} MHz", detuning / TWO_PI / 1e6)));
                v.push(("twoqubit.exchange_term".into(), exchange_term.to_string()));
            }
            _ => {}
        }
        v
    }

    fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions::new(self.frame)
    }

    /// Runs the experiment and returns its table.
    pub fn execute(&self) -> Result<DataTable> {
        let p = &self.params;
        match &self.task {
            Task::SplittingCurve { fields } => splitting_curve(p, fields),
            Task::RzAngleCurve { durations } => rz_angle_curve(p, durations, &self.evolve_options()),
            Task::RzNoise { angles, noise, samples } => {
                rz_noise(p, angles, noise, *samples, self.seed, &self.evolve_options())
            }
            Task::RxNoise {
                family,
                correctives,
                angles,
                noise,
                samples,
            } => {
                let opts = self.evolve_options();
                let table = LambdaTable::build(p, *family, &opts)?;
                let gates = angles
                    .iter()
                    .map(|&th| {
                        let b = build_bare_rx(p, &table, th, *correctives, &opts)?;
                        Ok((th, b.lambda, Arc::new(b.gate) as Arc<dyn NoisyGate>))
                    })
                    .collect::<Result<Vec<_>>>()?;
                noise_table(&gates, noise, *samples, self.seed, rx_target)
            }
            Task::SweepEchoNoise {
                correctives,
                angles,
                noise,
                samples,
            } => {
                let opts = self.evolve_options();
                let cal = SweepEchoCalibration::new(p, &opts, *correctives)?;
                let gates = angles
                    .iter()
                    .map(|&th| {
                        let g = build_sweep_echo_rx(&cal, th)?;
                        Ok((th, g.lambda, Arc::new(g.gate) as Arc<dyn NoisyGate>))
                    })
                    .collect::<Result<Vec<_>>>()?;
                noise_table(&gates, noise, *samples, self.seed, rx_target)
            }
            Task::CphaseCurve {
                durations,
                layout,
                detuning,
                exchange_term,
                coupled,
            } => cphase_curve(layout, durations, *detuning, *exchange_term, *coupled),
            Task::HprimeDump { de, ea, ba } => {
                let h = h_prime_at(p, *de, *ea, *ba)?;
                Ok(hprime_table(&h))
            }
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub plan: Plan,
    pub table: DataTable,
    /// Full file contents.
    pub rendered: String,
}

/// Validates, runs and renders, without touching the file system.
pub fn run_in_memory(manifest: &Manifest) -> Result<RunOutput> {
    let plan = manifest.validate()?;
    let table = plan.execute()?;
    let rendered = output::render(&plan.provenance(), &manifest.to_toml()?, &table);
    Ok(RunOutput { plan, table, rendered })
}

/// Runs a manifest and writes its output file.
pub fn run(manifest: &Manifest) -> Result<RunOutput> {
    let out = run_in_memory(manifest)?;
    output::write_file(&manifest.output, &out.rendered)?;
    Ok(out)
}

fn to_mhz(w: f64) -> f64 {
    w / TWO_PI / 1e6
}

fn splitting_curve(p: &SystemParams, fields: &[f64]) -> Result<DataTable> {
    let rows = fields
        .par_iter()
        .map(|&de| {
            let exact = exact_qubit_splitting(p, de)?;
            Ok(vec![de, to_mhz(exact), to_mhz(p.qubit_splitting_approx(de))])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = DataTable::new(&["dE_V_per_m", "dq_exact_MHz", "dq_approx_MHz"]);
    let gap = rows.iter().map(|r| (r[1] - r[2]).abs()).fold(0.0, f64::max);
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        t.note("shift_first_minus_last_MHz", format!("{:.6}", first[1] - last[1]));
    }
    t.note("max_exact_minus_approx_MHz", format!("{gap:.6}"));
    t.rows = rows;
    Ok(t)
}

fn rz_angle_curve(p: &SystemParams, durations: &[f64], opts: &EvolveOptions) -> Result<DataTable> {
    let rows = durations
        .par_iter()
        .map(|&t| {
            let sim = simulate_rz_angle(p, t, opts, 0.0)?;
            let pred = predict_rz_angle(p, t)?.unreduced;
            Ok(vec![t * 1e9, sim, pred])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = DataTable::new(&["T_ns", "theta_sim_rad", "theta_pred_rad"]);
    let gap = rows.iter().map(|r| (r[1] - r[2]).abs()).fold(0.0, f64::max);
    t.note("max_gap_rad", format!("{gap:.6}"));
    t.rows = rows;
    Ok(t)
}

fn rz_noise(
    p: &SystemParams,
    angles: &[f64],
    noise: &[f64],
    samples: usize,
    seed: u64,
    opts: &EvolveOptions,
) -> Result<DataTable> {
    let gates = angles
        .iter()
        .map(|&th| {
            let total = rz_duration_for_angle(p, th, opts, 1e-9)?;
            let sim = SimulatedSchedule::new(p, make_rz_schedule(p, total)?, *opts)?;
            Ok((th, total, Arc::new(sim) as Arc<dyn NoisyGate>))
        })
        .collect::<Result<Vec<_>>>()?;
    noise_table(&gates, noise, samples, seed, QubitGate::rz)
}

/// One row per (gate, σ). The second tuple entry goes in the `knob` column:
/// λ for X rotations, the pulse duration for Z rotations.
fn noise_table(
    gates: &[(f64, f64, Arc<dyn NoisyGate>)],
    noise: &[f64],
    samples: usize,
    seed: u64,
    target: impl Fn(f64) -> QubitGate,
) -> Result<DataTable> {
    let mut t = DataTable::new(&[
        "theta_rad",
        "knob",
        "duration_ns",
        "sigma_V_per_m",
        "mean_infidelity",
        "standard_error",
        "max_leakage",
    ]);
    for (th, knob, gate) in gates {
        let goal = target(*th);
        let mut last: Option<MonteCarloReport> = None;
        for &sigma in noise {
            let rep = run_noise_monte_carlo(gate.as_ref(), &goal, &NoiseModel::new(sigma, samples, seed)?)?;
            t.push(vec![
                *th,
                *knob,
                gate.duration() * 1e9,
                sigma,
                rep.mean_infidelity,
                rep.standard_error,
                rep.max_leakage,
            ]);
            last = Some(rep);
        }
        if let Some(rep) = last {
            t.note(
                &format!("infidelity[theta={th:.6},sigma={}]", rep.sigma_de),
                format!("{:.4e}", rep.mean_infidelity),
            );
        }
    }
    Ok(t)
}

fn cphase_curve(
    layout: &TwoQubitLayout,
    durations: &[f64],
    detuning: f64,
    exchange_term: bool,
    coupled: bool,
) -> Result<DataTable> {
    let quad = CphaseOptions {
        exchange_term,
        ..Default::default()
    };
    let sim_opts = TwoQubitOptions {
        exchange_term,
        ..Default::default()
    };
    let rows = durations
        .par_iter()
        .map(|&total| {
            let build = |q: &SystemParams| {
                CphaseConfig {
                    detuning,
                    ..CphaseConfig::new(total)
                }
                .build(q)
            };
            let (s1, s2) = (build(&layout.qubits[0])?, build(&layout.qubits[1])?);
            let rep = cphase_angle(layout, [&s1, &s2], [0.0; 2], &quad)?;
            let all_orders = if coupled {
                cphase_angle_coupled(layout, [&s1, &s2], [0.0; 2], &sim_opts, quad.spacing)?.phi
            } else {
                f64::NAN
            };
            Ok(vec![
                total * 1e9,
                rep.phi,
                all_orders,
                rep.local_corrections[0],
                rep.local_corrections[1],
                rep.nonadiabaticity,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = DataTable::new(&[
        "T_ns",
        "phi_rad",
        "phi_coupled_rad",
        "correction1_rad",
        "correction2_rad",
        "nonadiabaticity",
    ]);
    let pi = std::f64::consts::PI;
    let peak = rows.iter().map(|r| r[1].abs()).fold(0.0, f64::max);
    t.note("max_abs_phi_rad", format!("{peak:.6}"));
    let crossing = rows.windows(2).find(|w| w[0][1].abs() < pi && w[1][1].abs() >= pi);
    match crossing {
        Some(w) => {
            let (a, b) = (w[0][1].abs() - pi, w[1][1].abs() - pi);
            let tz = w[0][0] + (w[1][0] - w[0][0]) * a / (a - b);
            t.note("cz_duration_ns_interpolated", format!("{tz:.3}"));
        }
        None => t.note("cz_duration_ns_interpolated", "none in range"),
    }
    t.rows = rows;
    Ok(t)
}

/// H′ at a static control point, in the shared single-qubit frame.
pub fn h_prime_at(p: &SystemParams, de: f64, ea: f64, ba: f64) -> Result<Op8> {
    let (we, wb) = reference_frame(p);
    EffectiveModel::new(p, we, wb).h_prime_static(de, ea, ba)
}

/// The strongest off-diagonal element of an 8×8 Hamiltonian as
/// (row, column, |H_rc|), row < column.
pub fn dominant_coupling(h: &Op8) -> (usize, usize, f64) {
    let mut best = (0, 1, -1.0);
    for r in 0..8 {
        for c in r + 1..8 {
            let m = h[(r, c)].norm();
            if m > best.2 {
                best = (r, c, m);
            }
        }
    }
    best
}

/// Entries in cyclic MHz, one row per matrix element.
pub fn hprime_table(h: &Op8) -> DataTable {
    let mut t = DataTable::new(&["row", "col", "re_MHz", "im_MHz"]);
    for r in 0..8 {
        for c in 0..8 {
            t.push(vec![r as f64, c as f64, to_mhz(h[(r, c)].re), to_mhz(h[(r, c)].im)]);
        }
    }
    let (r, c, m) = dominant_coupling(h);
    t.note(
        "dominant_offdiagonal",
        format!(
            "{} <-> {} ({:.6} MHz)",
            BasisConvention::label(r),
            BasisConvention::label(c),
            to_mhz(m)
        ),
    );
    let smallest_gap = (0..8)
        .flat_map(|a| (a + 1..8).map(move |b| (a, b)))
        .map(|(a, b)| (h[(a, a)].re - h[(b, b)].re).abs())
        .fold(f64::INFINITY, f64::min);
    t.note("smallest_diagonal_gap_MHz", format!("{:.6}", to_mhz(smallest_gap)));
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(text: &str) -> Manifest {
        Manifest::from_toml(text).unwrap()
    }

    #[test]
    fn kinds_parse_in_kebab_case() {
        for k in ExperimentKind::ALL {
            let m = manifest(&format!("kind = \"{}\"\noutput = \"x.dat\"", k.name()));
            assert_eq!(m.kind, k);
            assert!(m.validate().is_ok(), "{k}");
        }
    }

    #[test]
    fn unknown_and_misplaced_fields_are_named() {
        let e = Manifest::from_toml("kind = \"splitting-curve\"\noutput = \"x\"\nsed = 3").unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
        let e = manifest("kind = \"splitting-curve\"\noutput = \"x\"\n[noise]\nsigma = [\"1 V/m\"]")
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("noise"), "{e}");
        let e = manifest("kind = \"splitting-curve\"\noutput = \"x\"\n[grid]\nstart = -2e4")
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("grid.start"), "{e}");
        let e = manifest("kind = \"rz-noise\"\noutput = \"x\"\n[grid]\nvalues = [\"0.25 pi\"]")
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("grid.values[0]"), "{e}");
        let e = manifest("kind = \"rx-noise\"\noutput = \"x\"\n[params]\nb0 = 0.2")
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("params.b0"), "{e}");
    }

    #[test]
    fn canonical_form_round_trips() {
        let m = manifest(
            "kind = \"rx-noise\"\noutput = \"o.dat\"\nseed = 9\n[params]\nb0 = \"0.25 T\"\n\
             [noise]\nsigma = [\"100 V/m\"]\nsamples = 10\n[gate]\nfamily = \"naive\"\n",
        );
        let back = Manifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.validate().unwrap(), m.validate().unwrap());
    }

    #[test]
    fn exact_splitting_tracks_closed_form_at_idle() {
        let p = SystemParams::default();
        let t = splitting_curve(&p, &[p.de_idle]).unwrap();
        let r = &t.rows[0];
        assert!((r[1] - r[2]).abs() < 0.5, "{r:?}");
    }
}
