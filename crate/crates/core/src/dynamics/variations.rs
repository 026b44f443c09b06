use crate::error::{Error, Result};
use crate::extremal::CostateLaw;
use crate::lie::{AlgebraVector, CoVector, LieGroupSpec};

use super::PhaseSpec;

/// Body-frame endpoint derivative at time `t` of a needle variation that
/// replaces the nominal control by `u1` just after `t1`.
///
/// The nominal control is constant on `[t1, t]`, so the tangent vector
/// `f(e,u1) − f(e,u°)` is carried by `Ad(exp(−(t − t1) ξ))`.
pub fn needle_endpoint_derivative(
    lie: &LieGroupSpec,
    phase: &PhaseSpec,
    u_nominal: &[f64],
    t1: f64,
    u1: &[f64],
    t: f64,
) -> Result<AlgebraVector> {
    for u in [u_nominal, u1] {
        if u.len() != phase.n_controls() {
            return Err(Error::DimensionMismatch {
                expected: phase.n_controls(),
                got: u.len(),
            });
        }
    }
    if t < t1 {
        return Err(Error::config("t", "evaluation time precedes the needle"));
    }
    let xi = phase.velocity(u_nominal);
    let delta = phase.embed(u1) - phase.embed(u_nominal);
    Ok(lie.adjoint(&lie.exp_alg(&(xi * -(t - t1))), &delta))
}

/// Costate and tangent vector carried along a constant body velocity.
#[derive(Debug, Clone, Copy)]
pub struct PairingTransport {
    pub lambda: CoVector,
    pub w: AlgebraVector,
    /// `|⟨λ(τ), w(τ)⟩ − ⟨λ₀, w₀⟩|`.
    pub drift: f64,
}

/// Transports `w` by the tangent lift (`ẇ = −ad_ξ w`) and `λ` by the costate
/// law, and reports how far their pairing moved.
pub fn propagate_pairing(
    lie: &LieGroupSpec,
    law: CostateLaw,
    lambda0: &CoVector,
    w0: &AlgebraVector,
    xi: &AlgebraVector,
    tau: f64,
) -> PairingTransport {
    let w = lie.adjoint(&lie.exp_alg(&(*xi * -tau)), w0);
    let lambda = lie.coadjoint(&lie.exp_alg(&(*xi * (law.sign() * tau))), lambda0);
    PairingTransport {
        lambda,
        w,
        drift: (lambda.pair(&w) - lambda0.pair(w0)).abs(),
    }
}
