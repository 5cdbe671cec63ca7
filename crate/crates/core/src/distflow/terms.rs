//! Nonlinear branch terms of the three-phase DistFlow model and their
//! first-order expansion in (P, Q).
//!
//! With S = P + jQ the sending-end power and V the sending-bus voltage, the
//! branch current is I = conj(S / V). Writing ρ = Z ⊘ (V Vᴴ) = r̂ + j x̂,
//!
//! ```text
//! P_loss = P∘(r̂P + x̂Q) + Q∘(r̂Q − x̂P)
//! Q_loss = P∘(x̂P − r̂Q) + Q∘(r̂P + x̂Q)
//! Δv     = |Z I|²  (elementwise)
//! ```
//!
//! On a single phase ρ = z / v, which gives the familiar r(P² + Q²)/v.

use nalgebra::Matrix3;
use num_complex::Complex64;
use thiserror::Error;

use crate::netmodel::PhaseSet;

#[derive(Debug, Error, PartialEq)]
#[error("operating voltage is zero on phase {phase}")]
pub struct ZeroVoltage {
    pub phase: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub p_loss: [f64; 3],
    pub q_loss: [f64; 3],
    pub dv: [f64; 3],
}

/// Derivatives of each output phase (row) with respect to each input phase
/// (column) of the sending-end P and Q.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossJacobian {
    pub p_loss_p: Matrix3<f64>,
    pub p_loss_q: Matrix3<f64>,
    pub q_loss_p: Matrix3<f64>,
    pub q_loss_q: Matrix3<f64>,
    pub dv_p: Matrix3<f64>,
    pub dv_q: Matrix3<f64>,
}

/// Branch impedance with the operating voltage folded in.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub z: Matrix3<Complex64>,
    pub v: [Complex64; 3],
    pub phases: PhaseSet,
}

impl Branch {
    pub fn new(
        z: Matrix3<Complex64>,
        v: [Complex64; 3],
        phases: PhaseSet,
    ) -> Result<Self, ZeroVoltage> {
        for ph in 0..3 {
            if phases[ph] && v[ph].norm() == 0.0 {
                return Err(ZeroVoltage { phase: ph });
            }
        }
        Ok(Branch { z, v, phases })
    }

    fn on(&self, i: usize, j: usize) -> bool {
        self.phases[i] && self.phases[j]
    }

    /// ρ^{ϕψ} = z^{ϕψ} / (V^ϕ conj(V^ψ)).
    pub fn rho(&self) -> Matrix3<Complex64> {
        Matrix3::from_fn(|i, j| {
            if self.on(i, j) {
                self.z[(i, j)] / (self.v[i] * self.v[j].conj())
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// c^{ϕψ} = z^{ϕψ} / conj(V^ψ), so that Z I = c · conj(S).
    fn c(&self) -> Matrix3<Complex64> {
        Matrix3::from_fn(|i, j| {
            if self.on(i, j) {
                self.z[(i, j)] / self.v[j].conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Phase-rotated resistance and reactance: Re and Im of z ⊙ conj(Γ) with
    /// Γ^{ϕψ} = V^ϕ / V^ψ. These make the voltage equation exact at V.
    pub fn rotated_rx(&self) -> (Matrix3<f64>, Matrix3<f64>) {
        let zt = Matrix3::from_fn(|i, j| {
            if self.on(i, j) {
                self.z[(i, j)] * (self.v[i] / self.v[j]).conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        (zt.map(|c| c.re), zt.map(|c| c.im))
    }

    fn s(&self, p: &[f64; 3], q: &[f64; 3]) -> [Complex64; 3] {
        std::array::from_fn(|k| {
            if self.phases[k] {
                Complex64::new(p[k], q[k])
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn terms(&self, p: &[f64; 3], q: &[f64; 3]) -> LossTerms {
        let s = self.s(p, q);
        let rho = self.rho();
        let c = self.c();
        let mut out = LossTerms::default();
        for i in 0..3 {
            if !self.phases[i] {
                continue;
            }
            let w: Complex64 = (0..3).map(|j| rho[(i, j)] * s[j].conj()).sum();
            let loss = s[i] * w;
            out.p_loss[i] = loss.re;
            out.q_loss[i] = loss.im;
            let u: Complex64 = (0..3).map(|j| c[(i, j)] * s[j].conj()).sum();
            out.dv[i] = u.norm_sqr();
        }
        out
    }

    pub fn jacobian(&self, p: &[f64; 3], q: &[f64; 3]) -> LossJacobian {
        let s = self.s(p, q);
        let rho = self.rho();
        let c = self.c();
        let j_unit = Complex64::new(0.0, 1.0);
        let mut out = LossJacobian::default();
        for i in 0..3 {
            if !self.phases[i] {
                continue;
            }
            let w: Complex64 = (0..3).map(|k| rho[(i, k)] * s[k].conj()).sum();
            let u: Complex64 = (0..3).map(|k| c[(i, k)] * s[k].conj()).sum();
            for k in 0..3 {
                if !self.phases[k] {
                    continue;
                }
                let delta = if i == k { 1.0 } else { 0.0 };
                let d_p = w * delta + s[i] * rho[(i, k)];
                let d_q = j_unit * w * delta - j_unit * s[i] * rho[(i, k)];
                out.p_loss_p[(i, k)] = d_p.re;
                out.q_loss_p[(i, k)] = d_p.im;
                out.p_loss_q[(i, k)] = d_q.re;
                out.q_loss_q[(i, k)] = d_q.im;
                let uc = u.conj() * c[(i, k)];
                out.dv_p[(i, k)] = 2.0 * uc.re;
                out.dv_q[(i, k)] = 2.0 * uc.im;
            }
        }
        out
    }
}
