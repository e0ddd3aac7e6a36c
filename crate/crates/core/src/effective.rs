//! Rotating-frame Hamiltonian, its frequency components, the truncated
//! multi-frequency Floquet matrix and the second-order Schrieffer-Wolff
//! reduction H′.
//!
//! Frequencies are tracked as integer pairs (m, n) standing for mωE + nωB,
//! and the rotating-frame Hamiltonian is H̃(t) = Σ H̃_(m,n) e^{i(mωE+nωB)t}.

use std::sync::Once;

use crate::error::{Error, Result};
use crate::linalg::{self, r, DOp, Op8, C64, ZERO};
use crate::model::{BasisConvention as B, SystemParams};
use crate::propagation::{basis_change_correction, frame_generator_diagonal, orbital_transform, LabModel};
use crate::pulses::ControlSample;
use crate::{mhz, TWO_PI};

/// A frequency mωE + nωB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreqLabel {
    pub e: i32,
    pub b: i32,
}

impl FreqLabel {
    pub const fn new(e: i32, b: i32) -> Self {
        FreqLabel { e, b }
    }

    pub fn negated(self) -> Self {
        FreqLabel::new(-self.e, -self.b)
    }

    pub fn minus(self, other: FreqLabel) -> Self {
        FreqLabel::new(self.e - other.e, self.b - other.b)
    }

    pub fn omega(self, omega_e: f64, omega_b: f64) -> f64 {
        self.e as f64 * omega_e + self.b as f64 * omega_b
    }

    pub fn name(self) -> String {
        let term = |k: i32, sym: &str| match k {
            0 => String::new(),
            1 => sym.to_string(),
            -1 => format!("-{sym}"),
            k => format!("{k}{sym}"),
        };
        match (self.e, self.b) {
            (0, 0) => "0".into(),
            (e, 0) => term(e, "wE"),
            (0, b) => term(b, "wB"),
            (e, b) => {
                let be = term(b, "wB");
                let ee = term(e, "wE");
                if e > 0 {
                    format!("{be}+{ee}")
                } else {
                    format!("{be}{ee}")
                }
            }
        }
    }
}

/// The nine frequencies retained in the truncated Floquet matrix, in the
/// order of its diagonal blocks: −2ωE, −2ωB, −ωE, −(2ωB−ωE), 0, 2ωB−ωE, ωE,
/// 2ωB, 2ωE.
pub const FLOQUET_SHIFTS: [FreqLabel; 9] = [
    FreqLabel::new(-2, 0),
    FreqLabel::new(0, -2),
    FreqLabel::new(-1, 0),
    FreqLabel::new(1, -2),
    FreqLabel::new(0, 0),
    FreqLabel::new(-1, 2),
    FreqLabel::new(1, 0),
    FreqLabel::new(0, 2),
    FreqLabel::new(2, 0),
];

pub const TARGET_BLOCK: usize = 4;

/// Near-degeneracy guard for the perturbative reduction (rad/s).
pub fn degeneracy_guard() -> f64 {
    mhz(10.0)
}

/// Frequency of |a⟩⟨b| under the rotating frame, before any drive.
fn base_label(a: usize, b: usize) -> FreqLabel {
    // G = ωE gE − ... with gE = τz/2 + Iz and gB = −(Sz + Iz); twice the
    // values keep everything integral.
    let ge2 = |i: usize| (B::tau_z(i) + 2.0 * B::i_z(i)).round() as i32;
    let gb2 = |i: usize| (-2.0 * (B::s_z(i) + B::i_z(i))).round() as i32;
    FreqLabel::new((ge2(b) - ge2(a)) / 2, (gb2(b) - gb2(a)) / 2)
}

#[derive(Debug, Clone)]
pub struct FrequencyComponent {
    pub label: FreqLabel,
    /// Angular frequency mωE + nωB.
    pub omega: f64,
    pub matrix: Op8,
}

/// All components of H̃ for one envelope sample, keyed by label.
#[derive(Debug, Clone)]
pub struct FrequencyComponents {
    pub omega_e: f64,
    pub omega_b: f64,
    entries: Vec<(FreqLabel, Op8)>,
}

impl FrequencyComponents {
    fn slot(&mut self, label: FreqLabel) -> &mut Op8 {
        if let Some(pos) = self.entries.iter().position(|(l, _)| *l == label) {
            &mut self.entries[pos].1
        } else {
            self.entries.push((label, Op8::zeros()));
            &mut self.entries.last_mut().expect("just pushed").1
        }
    }

    /// Component at `label`, or zero when absent.
    pub fn get(&self, label: FreqLabel) -> Op8 {
        self.entries
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, m)| *m)
            .unwrap_or_else(Op8::zeros)
    }

    pub fn labels(&self) -> Vec<FreqLabel> {
        let mut v: Vec<_> = self.entries.iter().map(|(l, _)| *l).collect();
        v.sort();
        v
    }

    pub fn list(&self) -> Vec<FrequencyComponent> {
        self.labels()
            .into_iter()
            .map(|l| FrequencyComponent {
                label: l,
                omega: l.omega(self.omega_e, self.omega_b),
                matrix: self.get(l),
            })
            .collect()
    }

    /// Σ_j H̃_j e^{iω_j t}.
    pub fn reconstruct(&self, t: f64) -> Op8 {
        let mut h = Op8::zeros();
        for (l, m) in &self.entries {
            h += m * linalg::cis(l.omega(self.omega_e, self.omega_b) * t);
        }
        h
    }
}

/// Rotating-frame model for fixed drive frequencies.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub params: SystemParams,
    pub omega_e: f64,
    pub omega_b: f64,
    pub include_correction: bool,
    lab: LabModel,
    labels: [[FreqLabel; 8]; 8],
    frame: [f64; 8],
}

fn warn_rwa_once(msg: String) {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| log::warn!("{msg}"));
}

impl EffectiveModel {
    pub fn new(params: &SystemParams, omega_e: f64, omega_b: f64) -> Self {
        let mut labels = [[FreqLabel::new(0, 0); 8]; 8];
        for (a, row) in labels.iter_mut().enumerate() {
            for (b, l) in row.iter_mut().enumerate() {
                *l = base_label(a, b);
            }
        }
        EffectiveModel {
            params: *params,
            omega_e,
            omega_b,
            include_correction: false,
            lab: LabModel::new(params),
            labels,
            frame: frame_generator_diagonal(omega_e, omega_b),
        }
    }

    pub fn with_correction(mut self, on: bool) -> Self {
        self.include_correction = on;
        self
    }

    /// Frequency components of H̃ for the instantaneous envelope values.
    /// `noise` shifts ΔE everywhere, including inside ε0 and the orbital
    /// mixing angle.
    pub fn components(&self, s: &ControlSample, noise: f64) -> FrequencyComponents {
        let de = s.de + noise;
        let lam = orbital_transform(&self.params, de);
        let lam_dag = lam.adjoint();
        let mut static_part = lam * self.lab.static_hamiltonian(de) * lam_dag;
        if self.include_correction && s.de_rate != 0.0 {
            static_part += basis_change_correction(&self.params, de, s.de_rate);
        }
        // −(d e/2ħ) τz^{id} expressed in the orbital basis, times Ea
        let field_op = {
            let mut m = crate::propagation::operators().tau_z * r(-0.5 * self.params.field_coupling());
            m = lam * m * lam_dag;
            m * r(s.ea)
        };
        let magnetic = (crate::propagation::operators().s_x * r(self.params.gamma_e)
            - crate::propagation::operators().i_x * r(self.params.gamma_n))
            * r(s.ba);

        let mut comps = FrequencyComponents {
            omega_e: self.omega_e,
            omega_b: self.omega_b,
            entries: Vec::with_capacity(9),
        };
        for l in FLOQUET_SHIFTS {
            comps.slot(l);
        }
        let e1 = FreqLabel::new(1, 0);
        let b1 = FreqLabel::new(0, 1);
        let plus = |l: FreqLabel, d: FreqLabel| FreqLabel::new(l.e + d.e, l.b + d.b);
        for a in 0..8 {
            for b in 0..8 {
                let base = self.labels[a][b];
                let v = static_part[(a, b)];
                if v != ZERO {
                    comps.slot(base)[(a, b)] += v;
                }
                let f = field_op[(a, b)];
                if f != ZERO {
                    comps.slot(plus(base, e1))[(a, b)] += f * 0.5;
                    comps.slot(base.minus(e1))[(a, b)] += f * 0.5;
                }
                let m = magnetic[(a, b)];
                if m != ZERO {
                    comps.slot(plus(base, b1))[(a, b)] += m * 0.5;
                    comps.slot(base.minus(b1))[(a, b)] += m * 0.5;
                }
            }
        }
        let zero = comps.slot(FreqLabel::new(0, 0));
        for i in 0..8 {
            zero[(i, i)] += r(self.frame[i]);
        }
        comps
    }

    /// The RWA Hamiltonian H̃0: the zero-frequency component.
    pub fn rwa_hamiltonian(&self, s: &ControlSample, noise: f64) -> Op8 {
        if s.ea != 0.0 || s.ba != 0.0 {
            let eps = self.params.charge_splitting(s.de + noise);
            let spin = self.params.b0 * self.params.gamma_e;
            if (eps - self.omega_e).abs() > eps / 10.0 || (spin - self.omega_b).abs() > spin / 10.0 {
                warn_rwa_once(format!(
                    "drive detuning is not small: ε0 − ωE = 2π·{:.1} MHz, B0γe − ωB = 2π·{:.1} MHz",
                    (eps - self.omega_e) / TWO_PI / 1e6,
                    (spin - self.omega_b) / TWO_PI / 1e6
                ));
            }
        }
        self.components(s, noise).get(FreqLabel::new(0, 0))
    }

    pub fn floquet(&self, s: &ControlSample, noise: f64) -> FloquetBlock {
        floquet_hamiltonian(&self.components(s, noise))
    }

    /// H′ for the instantaneous envelope values.
    pub fn h_prime(&self, s: &ControlSample, noise: f64) -> Result<Op8> {
        schrieffer_wolff(&self.floquet(s, noise))
    }

    /// H′ with static controls and no noise.
    pub fn h_prime_static(&self, de: f64, ea: f64, ba: f64) -> Result<Op8> {
        self.h_prime(
            &ControlSample {
                de,
                de_rate: 0.0,
                ea,
                ba,
            },
            0.0,
        )
    }

    /// Diagonal of the frame generator, for mapping rotating-frame energies
    /// back to lab energies of the bare states.
    pub fn frame_energies(&self) -> [f64; 8] {
        self.frame
    }
}

/// Free-function form of [`EffectiveModel::rwa_hamiltonian`].
pub fn rwa_hamiltonian(params: &SystemParams, sample: &ControlSample, omega_e: f64, omega_b: f64, noise: f64) -> Op8 {
    EffectiveModel::new(params, omega_e, omega_b).rwa_hamiltonian(sample, noise)
}

/// Free-function form of [`EffectiveModel::components`].
pub fn frequency_components(
    params: &SystemParams,
    sample: &ControlSample,
    omega_e: f64,
    omega_b: f64,
    noise: f64,
) -> FrequencyComponents {
    EffectiveModel::new(params, omega_e, omega_b).components(sample, noise)
}

/// The truncated 72×72 Floquet matrix.
#[derive(Debug, Clone)]
pub struct FloquetBlock {
    pub matrix: DOp,
    pub shifts: [f64; 9],
    pub target_block: usize,
}

pub fn floquet_hamiltonian(comps: &FrequencyComponents) -> FloquetBlock {
    let n = FLOQUET_SHIFTS.len();
    let mut m = DOp::zeros(8 * n, 8 * n);
    let shifts = FLOQUET_SHIFTS.map(|l| l.omega(comps.omega_e, comps.omega_b));
    for (k, lk) in FLOQUET_SHIFTS.iter().enumerate() {
        for (kp, lkp) in FLOQUET_SHIFTS.iter().enumerate() {
            let diff = lk.minus(*lkp);
            if !FLOQUET_SHIFTS.contains(&diff) {
                continue;
            }
            let block = comps.get(diff);
            for i in 0..8 {
                for j in 0..8 {
                    m[(8 * k + i, 8 * kp + j)] = block[(i, j)];
                }
            }
            if k == kp {
                for i in 0..8 {
                    m[(8 * k + i, 8 * k + i)] += r(shifts[k]);
                }
            }
        }
    }
    FloquetBlock {
        matrix: m,
        shifts,
        target_block: TARGET_BLOCK,
    }
}

/// Second-order quasi-degenerate reduction onto the central block, with
/// unperturbed energies taken from the full diagonal.
///
/// An exterior state closer than the guard to a target state fails the
/// reduction if it is coupled to that state; a coupling below a thousandth of
/// the guard is dropped instead, because its contribution cannot be
/// resolved at that spacing.
pub fn schrieffer_wolff(block: &FloquetBlock) -> Result<Op8> {
    let m = &block.matrix;
    let dim = m.nrows();
    let t0 = 8 * block.target_block;
    let target = t0..t0 + 8;
    let guard = degeneracy_guard();
    let energy: Vec<f64> = (0..dim).map(|i| m[(i, i)].re).collect();

    let mut h = Op8::from_fn(|i, j| m[(t0 + i, t0 + j)]);
    let mut second = Op8::zeros();
    for l in (0..dim).filter(|l| !target.contains(l)) {
        let mut couplings = [ZERO; 8];
        let mut any = false;
        for (a, cpl) in couplings.iter_mut().enumerate() {
            let v = m[(t0 + a, l)];
            if v == ZERO {
                continue;
            }
            let gap = energy[t0 + a] - energy[l];
            if gap.abs() < guard {
                if v.norm() >= 1e-3 * guard {
                    return Err(Error::NearDegenerate {
                        target: a,
                        exterior: l,
                        gap_mhz: gap / TWO_PI / 1e6,
                        guard_mhz: guard / TWO_PI / 1e6,
                    });
                }
                continue;
            }
            *cpl = v;
            any = true;
        }
        if !any {
            continue;
        }
        for a in 0..8 {
            if couplings[a] == ZERO {
                continue;
            }
            let inv_a = 1.0 / (energy[t0 + a] - energy[l]);
            for b in 0..8 {
                if couplings[b] == ZERO {
                    continue;
                }
                let inv_b = 1.0 / (energy[t0 + b] - energy[l]);
                second[(a, b)] += couplings[a] * couplings[b].conj() * (0.5 * (inv_a + inv_b));
            }
        }
    }
    h += second;
    Ok(h)
}

/// Exact rotating-frame Hamiltonian Λ_rot H_orb Λ_rot† + G at time t, built
/// directly from the lab Hamiltonian. Used to check the component
/// decomposition.
pub fn rotating_frame_hamiltonian(
    params: &SystemParams,
    s: &ControlSample,
    omega_e: f64,
    omega_b: f64,
    t: f64,
    noise: f64,
    include_correction: bool,
) -> Op8 {
    let lab = LabModel::new(params);
    let h_orb = lab.orbital_hamiltonian_at(s, omega_e, omega_b, t, noise, include_correction);
    let rot = crate::propagation::rotating_frame(omega_e, omega_b, t);
    let g = frame_generator_diagonal(omega_e, omega_b);
    let mut h = rot * h_orb * rot.adjoint();
    for i in 0..8 {
        h[(i, i)] += C64::from(g[i]);
    }
    h
}
