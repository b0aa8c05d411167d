//! IRS phase update by majorization-minimization.
//!
//! With combiners, weights and precoders fixed, the expected weighted MSE
//! is a quadratic in `θ`:
//!
//! `f(θ) = θᴴ Σ θ + 2 Re(sᵀ θ) + c`,  `Σ = Σ_p Z_p ⊙ T_pᵀ`,
//!
//! one `(Z_p, T_p)` pair per signal path, where `Z_p` is the combiner-side
//! second moment seen from the IRS and `T_p` the transmit-side one. Each MM
//! step maximizes `Re(θᴴ q)` over the torus with `q = (λ_max I − Σ) θ − s*`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kron_expectation::{irs_incident, irs_reflected};
use crate::linalg::{self, hermitian_part, max_eigenvalue, trace_of_product, CMat, CVec};
use crate::system_model::{
    BeamformingState, ChannelEstimates, ErrorCovariances, IrsPhase, Path, SystemConfig,
    CROSS_PATH, DL_PATH, SI_PATH, UL_PATH,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmOptions {
    /// Stop once the relative objective change falls below this.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
}

impl Default for MmOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-8,
            max_inner_iters: 1000,
        }
    }
}

impl MmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0) || self.max_inner_iters == 0 {
            return Err(Error::Config("MM tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// One path's contribution `θᴴ (Z ⊙ Tᵀ) θ = Tr(Θᴴ Z Θ T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadTerm {
    pub z: CMat,
    pub t: CMat,
}

/// Coefficients of the `θ`-quadratic before reduction to vector form.
#[derive(Clone, Debug, PartialEq)]
pub struct StzMatrices {
    pub terms: Vec<QuadTerm>,
    /// Linear coefficient matrix; `f` contains `2 Re Tr(Θ S)`.
    pub s_mat: CMat,
    /// `θ`-independent part of the expected weighted MSE.
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmProblem {
    pub big_sigma: CMat,
    pub s_vec: CVec,
    pub lambda_max: f64,
    pub offset: f64,
}

/// Assembles the per-path `(Z, T)` pairs, `S` and the constant for the
/// current transceiver state.
pub fn build_stz(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> Result<StzMatrices> {
    state.check_dims(cfg)?;
    est.check_dims(cfg)?;
    let a_k = hermitian_part(&(state.f_k.adjoint() * &state.w_k * &state.f_k));
    let a_j = hermitian_part(&(state.f_j.adjoint() * &state.w_j * &state.f_j));
    let (u_cov, v_cov) = (state.u_cov(), state.v_cov());
    let rc = cfg.rc();

    let mut terms = Vec::with_capacity(4);
    let mut s_mat = linalg::zeros(rc, rc);
    let mut offset = 0.0;
    let quad: [(Path, &CMat, &CMat); 4] = [
        (UL_PATH, &a_k, &u_cov),
        (SI_PATH, &a_k, &v_cov),
        (DL_PATH, &a_j, &v_cov),
        (CROSS_PATH, &a_j, &u_cov),
    ];
    for (path, a, x) in quad {
        let d = est.get(path.direct);
        let b = est.get(path.rx_hop);
        let c = est.get(path.tx_hop);
        let d_cov = err.get(path.direct);
        terms.push(QuadTerm {
            z: hermitian_part(&irs_reflected(est, err, path, a)),
            t: hermitian_part(&irs_incident(est, err, path, x)),
        });
        s_mat += c * x * d.adjoint() * a * b;
        offset += trace_of_product(a, &(d * x * d.adjoint())).re
            + trace_of_product(a, &d_cov.k_cov).re * linalg::trace_with_transpose(x, &d_cov.j_cov).re;
    }

    let signal: [(Path, &CMat, &CMat, &CMat); 2] = [
        (UL_PATH, &state.u_k, &state.w_k, &state.f_k),
        (DL_PATH, &state.v_j, &state.w_j, &state.f_j),
    ];
    for (path, p, w, f) in signal {
        let wf = w * f;
        s_mat -= est.get(path.tx_hop) * p * &wf * est.get(path.rx_hop);
        offset -= 2.0 * (&wf * est.get(path.direct) * p).trace().re;
    }
    offset += cfg.sigma0_sq * trace_of_product(&state.w_k, &(&state.f_k * state.f_k.adjoint())).re
        + cfg.sigmaj_sq * trace_of_product(&state.w_j, &(&state.f_j * state.f_j.adjoint())).re
        + state.w_k.trace().re
        + state.w_j.trace().re;
    Ok(StzMatrices {
        terms,
        s_mat,
        offset,
    })
}

/// `Σ = Σ_p Z_p ⊙ T_pᵀ`, `s = diag(S)`, `λ_max(Σ)`.
pub fn build_mm_problem(stz: &StzMatrices) -> MmProblem {
    let rc = stz.s_mat.nrows();
    let mut big_sigma = linalg::zeros(rc, rc);
    for term in &stz.terms {
        big_sigma += term.z.component_mul(&term.t.transpose());
    }
    MmProblem::from_parts(hermitian_part(&big_sigma), stz.s_mat.diagonal(), stz.offset)
}

impl MmProblem {
    pub fn from_parts(big_sigma: CMat, s_vec: CVec, offset: f64) -> Self {
        let lambda_max = if big_sigma.nrows() == 0 {
            0.0
        } else {
            max_eigenvalue(&big_sigma).max(0.0)
        };
        Self {
            big_sigma,
            s_vec,
            lambda_max,
            offset,
        }
    }

    /// `θᴴ Σ θ + 2 Re(sᵀ θ) + c` at any complex `θ`.
    pub fn objective_at(&self, theta: &CVec) -> f64 {
        let quad = theta.dotc(&(&self.big_sigma * theta)).re;
        let lin = self.s_vec.iter().zip(theta.iter()).map(|(s, t)| s * t).sum::<Complex64>().re;
        quad + 2.0 * lin + self.offset
    }

    pub fn objective(&self, theta: &IrsPhase) -> f64 {
        self.objective_at(theta.as_vec())
    }

    /// `(λ_max I − Σ) θ − s*`.
    pub fn majorizer_direction(&self, theta: &IrsPhase) -> CVec {
        let th = theta.as_vec();
        th * Complex64::from(self.lambda_max) - &self.big_sigma * th - self.s_vec.map(|s| s.conj())
    }

    /// Value at `θ` of the surrogate built at `anchor`; it upper-bounds the
    /// objective on the torus and touches it at `anchor`.
    pub fn surrogate(&self, theta: &IrsPhase, anchor: &IrsPhase) -> f64 {
        let n = theta.len() as f64;
        let q = self.majorizer_direction(anchor);
        let a = anchor.as_vec();
        let anchor_quad = a.dotc(&(a * Complex64::from(self.lambda_max) - &self.big_sigma * a)).re;
        self.lambda_max * n - 2.0 * theta.as_vec().dotc(&q).re + anchor_quad + self.offset
    }
}

/// One MM update; entries with `q_i = 0` keep their phase.
pub fn mm_step(prob: &MmProblem, theta: &IrsPhase) -> IrsPhase {
    let q = prob.majorizer_direction(theta);
    let next = CVec::from_iterator(
        q.len(),
        q.iter().zip(theta.as_vec().iter()).map(|(qi, ti)| {
            if *qi == linalg::ZERO {
                *ti
            } else {
                Complex64::from_polar(1.0, qi.arg())
            }
        }),
    );
    IrsPhase::from_vec_unchecked(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmOutcome {
    pub theta: IrsPhase,
    pub iterations: usize,
    /// Objective at the start and after every step.
    pub objective: Vec<f64>,
}

/// Iterates [`mm_step`] until the relative objective change is below
/// `inner_tol`.
pub fn run_algorithm1(prob: &MmProblem, theta_init: &IrsPhase, opts: &MmOptions) -> MmOutcome {
    let mut theta = theta_init.clone();
    let mut objective = vec![prob.objective(&theta)];
    let mut iterations = 0;
    while iterations < opts.max_inner_iters {
        let next = mm_step(prob, &theta);
        let f = prob.objective(&next);
        let prev = *objective.last().unwrap_or(&f);
        iterations += 1;
        objective.push(f);
        theta = next;
        if (prev - f).abs() <= opts.inner_tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    MmOutcome {
        theta,
        iterations,
        objective,
    }
}
