use std::f64::consts::{PI, TAU};

use crate::effective::EffectiveModel;
use crate::error::{Error, Result};
use crate::linalg::{self, cis, Mat2, Op8};
use crate::model::BasisConvention;
use crate::propagation::{orbital_transform, EvolutionResult, Frame, LabModel};
use crate::pulses::PulseSchedule;
use crate::SystemParams;

/// Largest leakage for which a qubit block is still reported as a gate.
pub const LEAKAGE_LIMIT: f64 = 0.01;

/// A 2×2 unitary modulo global phase, stored in canonical form: unit
/// determinant and the phase of the top-left entry in (−π/2, π/2]. When
/// the top-left entry vanishes the bottom-left one carries the sign
/// convention instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitGate {
    matrix: Mat2,
}

impl QubitGate {
    /// Canonicalizes any non-singular 2×2 matrix. Non-unitary input is
    /// first replaced by its polar factor.
    pub fn new(m: Mat2) -> Result<Self> {
        let det = m.determinant();
        if !(det.norm() > 1e-12) || m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("gate", "matrix is singular or not finite"));
        }
        let u = if linalg::unitarity_defect(&m) > 1e-12 {
            linalg::nearest_unitary2(&m)
        } else {
            m
        };
        let mut u = u * (u.determinant().sqrt()).inv();
        let pivot = if u[(0, 0)].norm() > 1e-9 { u[(0, 0)] } else { u[(1, 0)] };
        let phase = pivot.arg();
        if phase <= -PI / 2.0 || phase > PI / 2.0 {
            u = -u;
        }
        Ok(QubitGate { matrix: u })
    }

    pub fn identity() -> Self {
        QubitGate {
            matrix: Mat2::identity(),
        }
    }

    pub fn rz(theta: f64) -> Self {
        Self::new(linalg::rz(theta)).expect("rotation is unitary")
    }

    pub fn rx(theta: f64) -> Self {
        Self::new(linalg::rx(theta)).expect("rotation is unitary")
    }

    pub fn from_euler(angles: &EulerAngles) -> Self {
        Self::new(angles.matrix()).expect("rotation is unitary")
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    pub fn compose(&self, later: &QubitGate) -> QubitGate {
        QubitGate::new(later.matrix * self.matrix).expect("product of unitaries")
    }

    /// Frobenius distance to another gate after optimal global-phase
    /// alignment.
    pub fn phase_distance(&self, other: &QubitGate) -> f64 {
        let overlap = (other.matrix.adjoint() * self.matrix).trace();
        (self.matrix - other.matrix * cis(overlap.arg())).norm()
    }
}

/// Rz(θz1)·Rx(θx)·Rz(θz2) with θz ∈ [0, 2π) and θx ∈ [0, π].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EulerAngles {
    pub theta_z1: f64,
    pub theta_x: f64,
    pub theta_z2: f64,
}

impl EulerAngles {
    pub fn matrix(&self) -> Mat2 {
        linalg::rz(self.theta_z1) * linalg::rx(self.theta_x) * linalg::rz(self.theta_z2)
    }
}

fn wrap_2pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU - 1e-15 {
        0.0
    } else {
        w
    }
}

/// ZXZ decomposition. With u = Rz(a)Rx(b)Rz(c):
/// u00 = e^{−i(a+c)/2} cos(b/2), u10 = −i e^{i(a−c)/2} sin(b/2), which
/// fixes b, a + c and a − c modulo 2π. The remaining (a, c) → (a + π, c + π)
/// ambiguity flips the sign of b, so both candidates are recomposed and the
/// matching one is kept. At gimbal lock θz2 is set to zero.
pub fn euler_decompose(gate: &QubitGate) -> EulerAngles {
    let u = gate.matrix();
    let (m00, m10) = (u[(0, 0)].norm(), u[(1, 0)].norm());
    let b = 2.0 * m10.atan2(m00);
    const LOCK: f64 = 1e-12;
    let (sum, diff) = (u[(1, 1)].arg() - u[(0, 0)].arg(), u[(1, 0)].arg() - u[(0, 1)].arg());
    let (a, c) = if m10 < LOCK {
        (sum, 0.0)
    } else if m00 < LOCK {
        (diff, 0.0)
    } else {
        ((sum + diff) / 2.0, (sum - diff) / 2.0)
    };
    let first = EulerAngles {
        theta_z1: wrap_2pi(a),
        theta_x: b,
        theta_z2: wrap_2pi(c),
    };
    if m10 < LOCK || m00 < LOCK {
        return first;
    }
    let second = EulerAngles {
        theta_z1: wrap_2pi(a + PI),
        theta_x: b,
        theta_z2: wrap_2pi(c + PI),
    };
    let err = |e: &EulerAngles| 1.0 - (e.matrix().adjoint() * u).trace().norm() / 2.0;
    if err(&second) < err(&first) {
        second
    } else {
        first
    }
}

/// 1 − [Tr(U†U) + |Tr(U0†U)|²] / (n(n+1)). `u` may be a sub-normalized
/// block of a larger propagator.
pub fn gate_infidelity(u: &linalg::DOp, target: &linalg::DOp) -> f64 {
    let n = target.nrows() as f64;
    let norm = (u.adjoint() * u).trace().re;
    let overlap = (target.adjoint() * u).trace().norm_sqr();
    (1.0 - (norm + overlap) / (n * (n + 1.0))).clamp(0.0, 1.0)
}

pub fn gate_infidelity2(u: &Mat2, target: &Mat2) -> f64 {
    gate_infidelity(&linalg::to_dyn(u), &linalg::to_dyn(target))
}

/// Zero-drive eigenbasis at the idle point in a given frame, with each
/// eigenvector assigned to the bare basis state it overlaps most.
#[derive(Debug, Clone)]
pub struct IdleFrame {
    pub frame: Frame,
    /// Column k is the idle eigenvector associated with basis label k.
    pub vectors: Op8,
    pub energies: [f64; 8],
    /// Frame-generator diagonal subtracted to recover lab energies (zero
    /// for lab frames).
    generator: [f64; 8],
}

impl IdleFrame {
    pub fn new(params: &SystemParams, frame: Frame, omega_e: f64, omega_b: f64) -> Result<Self> {
        let (h, reference) = match frame {
            Frame::LabPosition => {
                let lab = LabModel::new(params);
                (
                    lab.static_hamiltonian(params.de_idle),
                    orbital_transform(params, params.de_idle).adjoint(),
                )
            }
            Frame::LabOrbital => {
                let lab = LabModel::new(params);
                let lam = orbital_transform(params, params.de_idle);
                (
                    lam * lab.static_hamiltonian(params.de_idle) * lam.adjoint(),
                    Op8::identity(),
                )
            }
            Frame::Effective => (
                EffectiveModel::new(params, omega_e, omega_b).h_prime_static(params.de_idle, 0.0, 0.0)?,
                Op8::identity(),
            ),
        };
        let (vals, vecs) = linalg::eigh8(&h);
        let mut vectors = Op8::zeros();
        let mut energies = [0.0; 8];
        let mut taken = [false; 8];
        for (k, energy) in energies.iter_mut().enumerate() {
            let target = reference.column(k);
            let (best, _) = (0..8)
                .filter(|j| !taken[*j])
                .map(|j| (j, target.dotc(&vecs.column(j)).norm()))
                .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            taken[best] = true;
            let mut v = vecs.column(best).into_owned();
            // phase convention: overlap with the bare state is real positive
            let ov = target.dotc(&v);
            v *= cis(-ov.arg());
            vectors.set_column(k, &v);
            *energy = vals[best];
        }
        let generator = match frame {
            Frame::Effective => crate::propagation::frame_generator_diagonal(omega_e, omega_b),
            _ => [0.0; 8],
        };
        Ok(IdleFrame {
            frame,
            vectors,
            energies,
            generator,
        })
    }

    pub fn for_schedule(params: &SystemParams, frame: Frame, schedule: &PulseSchedule) -> Result<Self> {
        Self::new(params, frame, schedule.omega_e, schedule.omega_b)
    }

    /// Exact zero-drive qubit splitting δq⁰ = E⇓ − E⇑ in the lab.
    pub fn qubit_splitting(&self) -> f64 {
        let (d, u) = (BasisConvention::QUBIT_DOWN, BasisConvention::QUBIT_UP);
        (self.energies[d] - self.generator[d]) - (self.energies[u] - self.generator[u])
    }

    /// Qubit block of `u` with the idle evolution over `duration` removed.
    /// Ordering is [|↑̃⟩, |↓̃⟩].
    pub fn qubit_block(&self, u: &Op8, duration: f64) -> Mat2 {
        let sub = BasisConvention::QUBIT_SUBSPACE;
        let q = self.vectors;
        let mut block = Mat2::zeros();
        for (i, &a) in sub.iter().enumerate() {
            for (j, &b) in sub.iter().enumerate() {
                let v = q.column(a).dotc(&(u * q.column(b)));
                block[(i, j)] = v * cis(self.energies[a] * duration);
            }
        }
        block
    }
}

/// Exact lab-frame qubit splitting δq = E(↓̃) − E(↑̃) of the static
/// Hamiltonian at field offset `de`, from its eigenvalues.
pub fn exact_qubit_splitting(params: &SystemParams, de: f64) -> Result<f64> {
    let shifted = SystemParams { de_idle: de, ..*params };
    Ok(IdleFrame::new(&shifted, Frame::LabPosition, 0.0, 0.0)?.qubit_splitting())
}

/// A gate read out of a propagator.
#[derive(Debug, Clone, Copy)]
pub struct ExtractedGate {
    pub gate: QubitGate,
    /// Idle-frame qubit block before normalization (sub-unitary under
    /// leakage); this is what enters the infidelity.
    pub block: Mat2,
    pub leakage: f64,
}

impl ExtractedGate {
    pub fn infidelity(&self, target: &QubitGate) -> f64 {
        gate_infidelity2(&self.block, target.matrix())
    }

    pub fn euler(&self) -> EulerAngles {
        euler_decompose(&self.gate)
    }
}

/// Reads the qubit gate out of a full-schedule propagator.
pub fn extract_qubit_gate(
    result: &EvolutionResult,
    schedule: &PulseSchedule,
    params: &SystemParams,
) -> Result<ExtractedGate> {
    let frame = IdleFrame::for_schedule(params, result.frame, schedule)?;
    extract_with_frame(result, &frame, schedule.total_time)
}

pub fn extract_with_frame(result: &EvolutionResult, frame: &IdleFrame, duration: f64) -> Result<ExtractedGate> {
    if !result.is_valid() {
        return Err(Error::NonUnitary {
            defect: result.max_unitarity_defect,
        });
    }
    block_to_gate(frame.qubit_block(&result.propagator, duration))
}

pub(crate) fn block_to_gate(block: Mat2) -> Result<ExtractedGate> {
    let kept = (block.adjoint() * block).trace().re / 2.0;
    let leakage = (1.0 - kept).max(0.0);
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::Leakage {
            leakage,
            limit: LEAKAGE_LIMIT,
        });
    }
    // normalize columns, then take the polar factor
    let mut m = block;
    for j in 0..2 {
        let n = m.column(j).norm();
        if n > 0.0 {
            m.column_mut(j).scale_mut(1.0 / n);
        }
    }
    Ok(ExtractedGate {
        gate: QubitGate::new(m)?,
        block,
        leakage,
    })
}

/// Shortest signed representative of an angle, in (−π, π].
pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// The Z-rotation angle of a diagonal gate, θ with gate ≈ Rz(θ), wrapped to
/// the branch closest to `near`.
pub fn z_angle_near(gate: &Mat2, near: f64) -> f64 {
    let raw = gate[(1, 1)].arg() - gate[(0, 0)].arg();
    near + wrap_pi(raw - near)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use proptest::prelude::*;

    #[test]
    fn canonical_form() {
        let g = QubitGate::new(linalg::rx(0.7) * cis(2.9)).unwrap();
        assert!((g.matrix().determinant() - C64::new(1.0, 0.0)).norm() < 1e-12);
        let ph = g.matrix()[(0, 0)].arg();
        assert!(ph > -PI / 2.0 && ph <= PI / 2.0);
        assert!(g.phase_distance(&QubitGate::rx(0.7)) < 1e-14);
    }

    #[test]
    fn euler_special_cases() {
        let id = euler_decompose(&QubitGate::identity());
        assert!(id.theta_z1.abs() < 1e-12 && id.theta_x.abs() < 1e-12 && id.theta_z2.abs() < 1e-12);
        let x = euler_decompose(&QubitGate::rx(PI));
        assert!(x.theta_z1.abs() < 1e-12 && (x.theta_x - PI).abs() < 1e-12 && x.theta_z2.abs() < 1e-12);
    }

    #[test]
    fn infidelity_examples() {
        let u = linalg::rx(0.4);
        assert!(gate_infidelity2(&u, &u).abs() < 1e-15);
        assert!(gate_infidelity2(&(u * cis(1.3)), &u).abs() < 1e-15);
        let orth = linalg::rx(PI);
        assert!((gate_infidelity2(&orth, &Mat2::identity()) - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn euler_round_trip(a in 0.0..TAU, b in 0.0..PI, c in 0.0..TAU) {
            let src = EulerAngles { theta_z1: a, theta_x: b, theta_z2: c };
            let g = QubitGate::from_euler(&src);
            let back = euler_decompose(&g);
            prop_assert!((0.0..TAU).contains(&back.theta_z1));
            prop_assert!((0.0..TAU).contains(&back.theta_z2));
            prop_assert!((0.0..=PI).contains(&back.theta_x));
            prop_assert!(QubitGate::from_euler(&back).phase_distance(&g) < 1e-8);
        }
    }
}
