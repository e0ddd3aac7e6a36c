//! Device parameters and the closed-form energy quantities of a single
//! donor-interface system.
//!
//! Every energy is an angular frequency in rad/s (ħ = 1). The electric
//! field coordinate `dE` is the offset ΔE from the ionization point in V/m;
//! the ionization field itself never enters any formula.

use crate::error::{Error, Result};
use crate::{mhz, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Elementary charge (C).
    pub electron_charge: f64,
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
    /// Vacuum permittivity (F/m).
    pub vacuum_permittivity: f64,
    /// Relative permittivity of silicon.
    pub silicon_relative_permittivity: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        electron_charge: 1.602_176_634e-19,
        hbar: 1.054_571_817e-34,
        vacuum_permittivity: 8.854_187_812_8e-12,
        silicon_relative_permittivity: 11.7,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// Parameters of one donor qubit. Rates are angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Contact hyperfine coupling with the electron on the donor (rad/s).
    pub hyperfine_a: f64,
    /// Electron gyromagnetic ratio (rad/s/T).
    pub gamma_e: f64,
    /// Nuclear gyromagnetic ratio (rad/s/T).
    pub gamma_n: f64,
    /// Relative g-factor shift of the donor-bound electron.
    pub delta_gamma: f64,
    /// Donor depth below the interface (m).
    pub donor_depth: f64,
    /// Static magnetic field (T).
    pub b0: f64,
    /// Tunnel coupling between donor and interface orbitals (rad/s).
    pub vt: f64,
    /// Idling offset from the ionization point (V/m).
    pub de_idle: f64,
    pub constants: PhysicalConstants,
}

impl Default for SystemParams {
    fn default() -> Self {
        let gamma_e = TWO_PI * 27.97e9;
        let gamma_n = TWO_PI * 17.23e6;
        let b0 = 0.2;
        SystemParams {
            hyperfine_a: mhz(117.0),
            gamma_e,
            gamma_n,
            delta_gamma: -0.002,
            donor_depth: 15e-9,
            b0,
            vt: b0 * (gamma_e + gamma_n),
            de_idle: 1e4,
            constants: PhysicalConstants::SI,
        }
    }
}

/// The three transition energies that set the Raman-like X drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEnergies {
    /// E(g↑⇓) − E(g↓⇓).
    pub down: f64,
    /// E(e↓⇑) − E(g↓⇑).
    pub up: f64,
    /// E(e↓⇑) − E(g↑⇓).
    pub mid: f64,
}

impl SystemParams {
    /// Checks positivity constraints; warns when the Zeeman splitting is not
    /// large compared with the hyperfine coupling.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hyperfine_A", self.hyperfine_a),
            ("gamma_e", self.gamma_e),
            ("gamma_n", self.gamma_n),
            ("donor_depth_d", self.donor_depth),
            ("B0", self.b0),
            ("Vt", self.vt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !self.delta_gamma.is_finite() || !self.de_idle.is_finite() {
            return Err(Error::param("delta_gamma/dE_idle", "must be finite"));
        }
        let ratio = self.b0 * (self.gamma_e + self.gamma_n) / self.hyperfine_a;
        if ratio < 10.0 {
            log::warn!("B0(γe+γn)/A = {ratio:.2} < 10; the qubit encoding assumes a strong field");
        }
        Ok(())
    }

    /// d·e/ħ: angular frequency per V/m of field offset.
    #[inline]
    pub fn field_coupling(&self) -> f64 {
        self.donor_depth * self.constants.electron_charge / self.constants.hbar
    }

    /// Orbital charge splitting ε0 = √(Vt² + (d·e·ΔE/ħ)²).
    #[inline]
    pub fn charge_splitting(&self, de: f64) -> f64 {
        self.vt.hypot(self.field_coupling() * de)
    }

    /// d·e·ΔE/(ħ ε0): the orbital polarisation, −1 on the donor, +1 at the
    /// interface.
    #[inline]
    pub fn orbital_polarization(&self, de: f64) -> f64 {
        let u = self.field_coupling() * de;
        u / self.vt.hypot(u)
    }

    /// ⟨A⟩ = A |⟨g|d⟩|².
    #[inline]
    pub fn hyperfine_expectation(&self, de: f64) -> f64 {
        0.5 * self.hyperfine_a * (1.0 - self.orbital_polarization(de))
    }

    /// Approximate qubit splitting δq = B0 γn + ⟨A⟩/2.
    #[inline]
    pub fn qubit_splitting_approx(&self, de: f64) -> f64 {
        self.b0 * self.gamma_n + 0.5 * self.hyperfine_expectation(de)
    }

    /// dδq/dΔE = −A·(de/ħ)·Vt² / (4 ε0³), in rad/s per V/m.
    pub fn dephasing_sensitivity(&self, de: f64) -> f64 {
        let eps = self.charge_splitting(de);
        -self.hyperfine_a * self.field_coupling() * self.vt * self.vt / (4.0 * eps.powi(3))
    }

    /// Large-field form −A ħ² Vt² / (4 d² e² ΔE³), valid once
    /// |d·e·ΔE/ħ| ≫ Vt. Returns `None` unless |d·e·ΔE/ħ| > 10 Vt.
    pub fn dephasing_sensitivity_large_field(&self, de: f64) -> Option<f64> {
        let k = self.field_coupling();
        if (k * de).abs() <= 10.0 * self.vt {
            return None;
        }
        Some(-self.hyperfine_a * self.vt * self.vt / (4.0 * k * k * de.powi(3)))
    }

    pub fn transition_energies(&self, de: f64) -> TransitionEnergies {
        let eps = self.charge_splitting(de);
        let a = self.hyperfine_a;
        let a_avg = self.hyperfine_expectation(de);
        let zeeman = self.b0 * (self.gamma_e + self.gamma_n);
        TransitionEnergies {
            down: self.b0 * self.gamma_e - 0.5 * a_avg,
            up: eps - 0.25 * a + 0.5 * a_avg,
            mid: eps - zeeman - 0.25 * a + 0.5 * a_avg,
        }
    }

    /// |⟨i|g⟩|² = (1 + d·e·ΔE/ħε0)/2.
    #[inline]
    pub fn interface_weight_ground(&self, de: f64) -> f64 {
        0.5 * (1.0 + self.orbital_polarization(de))
    }
}

/// Tensor-product ordering of the 8-dimensional single-donor space:
/// orbital ⊗ electron spin ⊗ nuclear spin, index = 4·orbital + 2·electron +
/// nuclear. Orbital 0 is |g⟩ (or |i⟩ in the position basis), electron 0 is
/// |↓⟩, nuclear 0 is |⇓⟩.
pub struct BasisConvention;

impl BasisConvention {
    pub const DIM: usize = 8;

    pub const LABELS: [&'static str; 8] = ["g↓⇓", "g↓⇑", "g↑⇓", "g↑⇑", "e↓⇓", "e↓⇑", "e↑⇓", "e↑⇑"];

    /// |↑̃⟩ ≈ |g↓⇑⟩.
    pub const QUBIT_UP: usize = 1;
    /// |↓̃⟩ ≈ |g↓⇓⟩.
    pub const QUBIT_DOWN: usize = 0;

    /// Qubit subspace in gate ordering: index 0 is |↑̃⟩, index 1 is |↓̃⟩, so
    /// that σz = |↑̃⟩⟨↑̃| − |↓̃⟩⟨↓̃| is diag(1, −1).
    pub const QUBIT_SUBSPACE: [usize; 2] = [Self::QUBIT_UP, Self::QUBIT_DOWN];

    #[inline]
    pub const fn index(orbital: usize, electron: usize, nuclear: usize) -> usize {
        4 * orbital + 2 * electron + nuclear
    }

    #[inline]
    pub const fn orbital(i: usize) -> usize {
        i >> 2
    }

    #[inline]
    pub const fn electron(i: usize) -> usize {
        (i >> 1) & 1
    }

    #[inline]
    pub const fn nuclear(i: usize) -> usize {
        i & 1
    }

    /// τz eigenvalue: +1 for g (or i), −1 for e (or d).
    #[inline]
    pub fn tau_z(i: usize) -> f64 {
        if Self::orbital(i) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Sz eigenvalue.
    #[inline]
    pub fn s_z(i: usize) -> f64 {
        if Self::electron(i) == 1 {
            0.5
        } else {
            -0.5
        }
    }

    /// Iz eigenvalue.
    #[inline]
    pub fn i_z(i: usize) -> f64 {
        if Self::nuclear(i) == 1 {
            0.5
        } else {
            -0.5
        }
    }

    pub fn label(i: usize) -> &'static str {
        Self::LABELS[i]
    }

    pub fn index_of(label: &str) -> Result<usize> {
        Self::LABELS
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn charge_splitting_at_ionization_point_is_tunnel_coupling() {
        assert_eq!(p().charge_splitting(0.0), p().vt);
    }

    #[test]
    fn charge_splitting_at_idle() {
        // (2π·5.5974 GHz)² + (d e 1e4/ħ)² evaluated by hand with CODATA values.
        let k: f64 = 15e-9 * 1.602_176_634e-19 / 1.054_571_817e-34;
        let vt = TWO_PI * 0.2 * (27.97e9 + 17.23e6);
        let expect = (vt * vt + (k * 1e4).powi(2)).sqrt();
        assert_relative_eq!(p().charge_splitting(1e4), expect, max_relative = 1e-14);
        assert!((expect / TWO_PI / 1e9 - 36.7).abs() < 0.05);
    }

    #[test]
    fn charge_splitting_asymptote() {
        let params = p();
        let de = 1e5;
        let asym = params.field_coupling() * de;
        assert!((params.charge_splitting(de) - asym) / asym < 1e-3);
    }

    #[test]
    fn hyperfine_expectation_limits() {
        let params = p();
        assert_eq!(params.hyperfine_expectation(0.0), params.hyperfine_a / 2.0);
        assert!(params.hyperfine_expectation(1e9) < 1e-6 * params.hyperfine_a);
        assert!(params.hyperfine_expectation(-1e9) > (1.0 - 1e-6) * params.hyperfine_a);
    }

    #[test]
    fn qubit_splitting_limits() {
        let params = p();
        let nuclear = params.b0 * params.gamma_n;
        assert_relative_eq!(nuclear / TWO_PI / 1e6, 3.446, max_relative = 1e-4);
        assert_relative_eq!(
            params.qubit_splitting_approx(0.0),
            nuclear + params.hyperfine_a / 4.0,
            max_relative = 1e-15
        );
        let shift = params.qubit_splitting_approx(-1e6) - params.qubit_splitting_approx(1e6);
        // ~2π·60 MHz between the donor and interface limits
        assert!((shift / TWO_PI / 1e6 - 58.5).abs() < 0.1);
    }

    #[test]
    fn dephasing_sensitivity_at_zero_field() {
        let params = p();
        let expect = -params.hyperfine_a * params.field_coupling() / (4.0 * params.vt);
        assert_relative_eq!(params.dephasing_sensitivity(0.0), expect, max_relative = 1e-14);
    }

    #[test]
    fn dephasing_sensitivity_matches_finite_difference() {
        let params = p();
        let h = 1e-2;
        for i in 0..=80 {
            let de = -2e4 + 500.0 * i as f64;
            let fd = (params.qubit_splitting_approx(de + h) - params.qubit_splitting_approx(de - h)) / (2.0 * h);
            let exact = params.dephasing_sensitivity(de);
            assert!(((fd - exact) / exact).abs() < 1e-6, "dE={de}: {fd} vs {exact}");
        }
    }

    #[test]
    fn large_field_form_only_when_valid() {
        let params = p();
        assert!(params.dephasing_sensitivity_large_field(100.0).is_none());
        let de = 1e5;
        let approx_rate = params.dephasing_sensitivity_large_field(de).unwrap();
        let exact = params.dephasing_sensitivity(de);
        assert!(((approx_rate - exact) / exact).abs() < 0.02);
    }

    #[test]
    fn transition_energy_identity() {
        let params = p();
        for de in [-2e4, -1000.0, 0.0, 250.0, 2e4] {
            let t = params.transition_energies(de);
            assert_relative_eq!(
                t.up - t.mid,
                params.b0 * (params.gamma_e + params.gamma_n),
                max_relative = 1e-12
            );
        }
        // With Vt = B0(γe+γn) the middle transition closes at the ionization point.
        assert!(params.transition_energies(0.0).mid.abs() < 1e-3);
    }

    #[test]
    fn validate_rejects_nonpositive() {
        let mut params = p();
        params.b0 = 0.0;
        assert!(params.validate().is_err());
        assert!(p().validate().is_ok());
    }

    #[test]
    fn basis_index_roundtrip() {
        for i in 0..8 {
            let (o, e, n) = (
                BasisConvention::orbital(i),
                BasisConvention::electron(i),
                BasisConvention::nuclear(i),
            );
            assert_eq!(BasisConvention::index(o, e, n), i);
            assert_eq!(BasisConvention::index_of(BasisConvention::label(i)).unwrap(), i);
        }
        assert_eq!(BasisConvention::label(BasisConvention::QUBIT_UP), "g↓⇑");
        assert_eq!(BasisConvention::label(BasisConvention::QUBIT_DOWN), "g↓⇓");
    }
}
